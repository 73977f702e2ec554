//! Evaluation quantities computed over per-round traces.
//!
//! All pollution figures are fractions of Byzantine IDs in the views of
//! correct nodes, i.e. honest and genuine trusted nodes. Poisoned trusted
//! nodes injected by the adversary are tracked separately so that a run and
//! its Brahms baseline always average over the same population.

use std::collections::BTreeSet;
use std::io::{self, Write};

use crate::id::NodeId;

pub const DISCOVERY_THRESHOLD: f64 = 0.75;
pub const STABILITY_BOUND: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: u32,
    pub mean_byz_fraction: f64,
    pub min_byz_fraction: f64,
    pub max_byz_fraction: f64,
    /// Genuine trusted nodes only; `None` when there are none.
    pub trusted_mean_byz_fraction: Option<f64>,
    pub honest_mean_byz_fraction: Option<f64>,
    pub poisoned_mean_byz_fraction: Option<f64>,
    /// Minimum over correct nodes of the share of non-Byzantine IDs seen so far.
    pub discovery_fraction: f64,
    /// Every correct node within [`STABILITY_BOUND`] of the mean this round.
    pub stability_reached: bool,
}

/// How "within 10% of the average" is read.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum StabilityBound {
    /// Absolute fraction points.
    #[default]
    Absolute,
    /// Relative to the mean.
    Relative,
}

impl StabilityBound {
    pub fn holds(&self, row: &RoundMetrics, bound: f64) -> bool {
        let slack = match self {
            StabilityBound::Absolute => bound,
            StabilityBound::Relative => bound * row.mean_byz_fraction,
        } + 1e-12;
        row.max_byz_fraction - row.mean_byz_fraction <= slack
            && row.mean_byz_fraction - row.min_byz_fraction <= slack
    }
}

/// First round at which every correct node had discovered at least
/// `threshold` of the non-Byzantine IDs.
pub fn discovery_time(trace: &[RoundMetrics], threshold: f64) -> Option<u32> {
    trace
        .iter()
        .find(|r| r.discovery_fraction + 1e-12 >= threshold)
        .map(|r| r.round)
}

/// First round from which every correct node stays within `bound` of the
/// mean pollution until the end of the trace.
pub fn stability_time_with(trace: &[RoundMetrics], mode: StabilityBound, bound: f64) -> Option<u32> {
    let mut first = None;
    for row in trace {
        if mode.holds(row, bound) {
            first.get_or_insert(row.round);
        } else {
            first = None;
        }
    }
    first
}

pub fn stability_time(trace: &[RoundMetrics]) -> Option<u32> {
    stability_time_with(trace, StabilityBound::Absolute, STABILITY_BOUND)
}

/// Average of `mean_byz_fraction` over the rows from `from` on.
pub fn mean_from(trace: &[RoundMetrics], from: u32, pick: impl Fn(&RoundMetrics) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = trace
        .iter()
        .filter(|r| r.round >= from)
        .filter_map(pick)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Post-stability average pollution of correct nodes, `None` when the trace
/// never stabilises.
pub fn post_stability_mean(trace: &[RoundMetrics]) -> Option<f64> {
    let from = stability_time(trace)?;
    mean_from(trace, from, |r| Some(r.mean_byz_fraction))
}

/// Relative drop of pollution with respect to a baseline level.
pub fn improvement(raptee_mean: f64, baseline_mean: f64) -> Option<f64> {
    if baseline_mean <= 0.0 {
        None
    } else {
        Some((baseline_mean - raptee_mean) / baseline_mean)
    }
}

/// `(baseline - run) / baseline` over post-stability means. `None` when
/// either trace never stabilises or the baseline is unpolluted.
pub fn resilience_improvement(raptee: &[RoundMetrics], baseline: &[RoundMetrics]) -> Option<f64> {
    improvement(post_stability_mean(raptee)?, post_stability_mean(baseline)?)
}

/// Relative extra rounds, `(run - baseline) / baseline`.
pub fn overhead(run_rounds: Option<u32>, baseline_rounds: Option<u32>) -> Option<f64> {
    match (run_rounds, baseline_rounds) {
        (Some(r), Some(b)) if b > 0 => Some((r as f64 - b as f64) / b as f64),
        (Some(0), Some(0)) => Some(0.0),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct IdentReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub labeled_count: usize,
}

pub fn ident_report(labeled: &BTreeSet<NodeId>, truth: &BTreeSet<NodeId>) -> IdentReport {
    let hits = labeled.intersection(truth).count() as f64;
    let precision = if labeled.is_empty() { 0.0 } else { hits / labeled.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    IdentReport {
        precision,
        recall,
        f1,
        labeled_count: labeled.len(),
    }
}

/// Describes one run in trace and summary rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RunLabel {
    pub run_id: String,
    pub seed: u64,
    pub n: usize,
    pub f: f64,
    pub t: f64,
    /// `none`, `fixed` or `adaptive`.
    pub eviction_mode: String,
    /// A 6-digit rate or the word `adaptive`.
    pub eviction_rate_or_adaptive: String,
}

pub const TRACE_HEADER: &str = "run_id,seed,round,n,f,t,eviction_mode,eviction_rate_or_adaptive,\
mean_byz_fraction,min_byz_fraction,max_byz_fraction,trusted_mean_byz_fraction,\
honest_mean_byz_fraction,discovery_fraction,stability_reached";

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

pub fn write_trace<W: Write>(w: &mut W, label: &RunLabel, trace: &[RoundMetrics]) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            label.run_id,
            label.seed,
            r.round,
            label.n,
            fmt6(label.f),
            fmt6(label.t),
            label.eviction_mode,
            label.eviction_rate_or_adaptive,
            fmt6(r.mean_byz_fraction),
            fmt6(r.min_byz_fraction),
            fmt6(r.max_byz_fraction),
            fmt_opt(r.trusted_mean_byz_fraction),
            fmt_opt(r.honest_mean_byz_fraction),
            fmt6(r.discovery_fraction),
            r.stability_reached,
        )?;
    }
    Ok(())
}

/// Parses a trace written by [`write_trace`]. Fields not present in the CSV
/// (poisoned-node pollution) come back as `None`.
pub fn read_trace(text: &str) -> Result<Vec<RoundMetrics>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        _ => return Err("missing or unexpected header".into()),
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 15 {
                return Err(format!("expected 15 columns, got {}", cols.len()));
            }
            Ok(RoundMetrics {
                round: cols[2].parse().map_err(|e| format!("bad round: {e}"))?,
                mean_byz_fraction: num(cols[8])?,
                min_byz_fraction: num(cols[9])?,
                max_byz_fraction: num(cols[10])?,
                trusted_mean_byz_fraction: opt(cols[11])?,
                honest_mean_byz_fraction: opt(cols[12])?,
                poisoned_mean_byz_fraction: None,
                discovery_fraction: num(cols[13])?,
                stability_reached: cols[14] == "true",
            })
        })
        .collect()
}

/// One row of the summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: RunLabel,
    pub injection_fraction: f64,
    pub discovery_time: Option<u32>,
    pub stability_time: Option<u32>,
    pub post_stability_mean: Option<f64>,
    /// Against the matched baseline; empty for baselines themselves.
    pub resilience_improvement: Option<f64>,
    pub discovery_overhead: Option<f64>,
    pub stability_overhead: Option<f64>,
    pub ident: Option<IdentReport>,
    /// Mean pollution of injected poisoned trusted nodes after the last round.
    pub poisoned_final_byz_fraction: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "run_id,seed,n,f,t,eviction_mode,eviction_rate_or_adaptive,\
injection_fraction,discovery_time,stability_time,post_stability_mean,resilience_improvement,\
discovery_overhead,stability_overhead,ident_precision,ident_recall,ident_f1,ident_labeled,\
poisoned_final_byz_fraction";

const SUMMARY_COLUMNS: usize = 19;

pub fn write_summary_header<W: Write>(w: &mut W) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")
}

pub fn write_summary_row<W: Write>(w: &mut W, s: &SummaryRow) -> io::Result<()> {
    let opt_u = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    let l = &s.label;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        l.run_id,
        l.seed,
        l.n,
        fmt6(l.f),
        fmt6(l.t),
        l.eviction_mode,
        l.eviction_rate_or_adaptive,
        fmt6(s.injection_fraction),
        opt_u(s.discovery_time),
        opt_u(s.stability_time),
        fmt_opt(s.post_stability_mean),
        fmt_opt(s.resilience_improvement),
        fmt_opt(s.discovery_overhead),
        fmt_opt(s.stability_overhead),
        fmt_opt(s.ident.map(|i| i.precision)),
        fmt_opt(s.ident.map(|i| i.recall)),
        fmt_opt(s.ident.map(|i| i.f1)),
        s.ident.map(|i| i.labeled_count.to_string()).unwrap_or_default(),
        fmt_opt(s.poisoned_final_byz_fraction),
    )
}

/// Parses a summary CSV written by [`write_summary_row`] under a
/// [`SUMMARY_HEADER`] line.
pub fn read_summary(text: &str) -> Result<Vec<SummaryRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SUMMARY_HEADER => {}
        _ => return Err("missing or unexpected header".into()),
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
    let opt_u = |s: &str| {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<u32>().map(Some).map_err(|e| format!("bad round {s:?}: {e}"))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != SUMMARY_COLUMNS {
                return Err(format!("expected {SUMMARY_COLUMNS} columns, got {}", c.len()));
            }
            let ident = match (opt(c[14])?, opt(c[15])?, opt(c[16])?) {
                (Some(precision), Some(recall), Some(f1)) => Some(IdentReport {
                    precision,
                    recall,
                    f1,
                    labeled_count: c[17].parse().map_err(|e| format!("bad count: {e}"))?,
                }),
                _ => None,
            };
            Ok(SummaryRow {
                label: RunLabel {
                    run_id: c[0].to_string(),
                    seed: c[1].parse().map_err(|e| format!("bad seed: {e}"))?,
                    n: c[2].parse().map_err(|e| format!("bad n: {e}"))?,
                    f: num(c[3])?,
                    t: num(c[4])?,
                    eviction_mode: c[5].to_string(),
                    eviction_rate_or_adaptive: c[6].to_string(),
                },
                injection_fraction: num(c[7])?,
                discovery_time: opt_u(c[8])?,
                stability_time: opt_u(c[9])?,
                post_stability_mean: opt(c[10])?,
                resilience_improvement: opt(c[11])?,
                discovery_overhead: opt(c[12])?,
                stability_overhead: opt(c[13])?,
                ident,
                poisoned_final_byz_fraction: opt(c[18])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(round: u32, mean: f64, min: f64, max: f64, disc: f64) -> RoundMetrics {
        let mut r = RoundMetrics {
            round,
            mean_byz_fraction: mean,
            min_byz_fraction: min,
            max_byz_fraction: max,
            trusted_mean_byz_fraction: None,
            honest_mean_byz_fraction: Some(mean),
            poisoned_mean_byz_fraction: None,
            discovery_fraction: disc,
            stability_reached: false,
        };
        r.stability_reached = StabilityBound::Absolute.holds(&r, STABILITY_BOUND);
        r
    }

    #[test]
    fn discovery_examples() {
        let trace = vec![row(0, 0.0, 0.0, 0.0, 1.0)];
        assert_eq!(discovery_time(&trace, 0.75), Some(0));
        assert_eq!(discovery_time(&trace, 1.01), None);
        let trace = vec![row(0, 0.0, 0.0, 0.0, 0.2), row(1, 0.0, 0.0, 0.0, 0.5), row(2, 0.0, 0.0, 0.0, 0.8)];
        assert_eq!(discovery_time(&trace, 0.75), Some(2));
    }

    #[test]
    fn stability_examples() {
        let clean: Vec<_> = (0..5).map(|r| row(r, 0.0, 0.0, 0.0, 1.0)).collect();
        assert_eq!(stability_time(&clean), Some(0));
        // one node permanently 15 points above the mean
        let stuck: Vec<_> = (0..5).map(|r| row(r, 0.4, 0.35, 0.55, 1.0)).collect();
        assert_eq!(stability_time(&stuck), None);
        // a transient dip does not count
        let mut t: Vec<_> = (0..6).map(|r| row(r, 0.4, 0.35, 0.45, 1.0)).collect();
        t[1] = row(1, 0.4, 0.1, 0.45, 1.0);
        t[3] = row(3, 0.4, 0.1, 0.45, 1.0);
        assert_eq!(stability_time(&t), Some(4));
    }

    #[test]
    fn relative_mode_is_stricter_below_one() {
        let t: Vec<_> = (0..3).map(|r| row(r, 0.4, 0.33, 0.47, 1.0)).collect();
        assert_eq!(stability_time_with(&t, StabilityBound::Absolute, 0.1), Some(0));
        assert_eq!(stability_time_with(&t, StabilityBound::Relative, 0.1), None);
    }

    #[test]
    fn improvement_examples() {
        let base: Vec<_> = (0..4).map(|r| row(r, 0.5, 0.45, 0.55, 1.0)).collect();
        assert_eq!(resilience_improvement(&base, &base), Some(0.0));
        assert!((improvement(0.415, 0.50).unwrap() - 0.17).abs() < 1e-12);
        assert!(improvement(0.6, 0.5).unwrap() < 0.0);
        assert_eq!(improvement(0.0, 0.0), None);
    }

    #[test]
    fn ident_report_examples() {
        let truth: BTreeSet<NodeId> = (0..10).map(NodeId).collect();
        let r = ident_report(&truth, &truth);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = ident_report(&BTreeSet::new(), &truth);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        // 5 correct labels, 5 wrong: |hit| = 5, |labeled| = 10, |truth| = 10
        let labeled: BTreeSet<NodeId> = (5..15).map(NodeId).collect();
        let r = ident_report(&labeled, &truth);
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        assert_eq!(r.labeled_count, 10);
    }

    #[test]
    fn overhead_is_relative() {
        assert_eq!(overhead(Some(110), Some(100)), Some(0.1));
        assert_eq!(overhead(None, Some(100)), None);
        assert_eq!(overhead(Some(0), Some(0)), Some(0.0));
    }

    #[test]
    fn trace_csv_round_trips() {
        let label = RunLabel {
            run_id: "r".into(),
            seed: 3,
            n: 10,
            f: 0.1,
            t: 0.0,
            eviction_mode: "none".into(),
            eviction_rate_or_adaptive: "0.000000".into(),
        };
        let trace: Vec<_> = (0..3).map(|r| row(r, 0.25, 0.125, 0.5, 0.75)).collect();
        let mut buf = Vec::new();
        write_trace(&mut buf, &label, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with('\n'));
        assert!(text.lines().nth(1).unwrap().starts_with("r,3,0,10,0.100000,0.000000,none,0.000000,0.250000,"));
        assert_eq!(read_trace(&text).unwrap(), trace);
    }

    #[test]
    fn summary_csv_round_trips() {
        let label = RunLabel {
            run_id: "x".into(),
            seed: 9,
            n: 100,
            f: 0.2,
            t: 0.05,
            eviction_mode: "adaptive".into(),
            eviction_rate_or_adaptive: "adaptive".into(),
        };
        let full = SummaryRow {
            label: label.clone(),
            injection_fraction: 0.05,
            discovery_time: Some(4),
            stability_time: Some(20),
            post_stability_mean: Some(0.5),
            resilience_improvement: Some(-0.25),
            discovery_overhead: Some(0.0),
            stability_overhead: Some(0.5),
            ident: Some(IdentReport {
                precision: 0.5,
                recall: 0.25,
                f1: 1.0 / 3.0,
                labeled_count: 2,
            }),
            poisoned_final_byz_fraction: Some(0.75),
        };
        let empty = SummaryRow {
            label,
            injection_fraction: 0.0,
            discovery_time: None,
            stability_time: None,
            post_stability_mean: None,
            resilience_improvement: None,
            discovery_overhead: None,
            stability_overhead: None,
            ident: None,
            poisoned_final_byz_fraction: None,
        };
        let mut buf = Vec::new();
        write_summary_header(&mut buf).unwrap();
        write_summary_row(&mut buf, &full).unwrap();
        write_summary_row(&mut buf, &empty).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(",0.333333,2,0.750000\n"));
        let back = read_summary(&text).unwrap();
        assert_eq!(back[1], empty);
        assert_eq!(back[0].ident.unwrap().labeled_count, 2);
        assert!((back[0].ident.unwrap().f1 - 1.0 / 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn stability_persists_to_the_end(rows in prop::collection::vec((0.0f64..1.0, 0.0f64..0.3, 0.0f64..0.3), 1..60)) {
            let trace: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(i, &(m, lo, hi))| row(i as u32, m, (m - lo).max(0.0), (m + hi).min(1.0), 1.0))
                .collect();
            if let Some(s) = stability_time(&trace) {
                for r in trace.iter().filter(|r| r.round >= s) {
                    prop_assert!(StabilityBound::Absolute.holds(r, STABILITY_BOUND));
                }
            }
        }

        #[test]
        fn discovery_time_is_first_crossing(fracs in prop::collection::vec(0.0f64..1.0, 1..50)) {
            // cumulative fractions are monotone
            let mut acc = 0.0f64;
            let trace: Vec<_> = fracs.iter().enumerate().map(|(i, &x)| { acc = acc.max(x); row(i as u32, 0.0, 0.0, 0.0, acc) }).collect();
            match discovery_time(&trace, 0.75) {
                Some(d) => {
                    prop_assert!(trace[d as usize].discovery_fraction >= 0.75);
                    prop_assert!(trace[..d as usize].iter().all(|r| r.discovery_fraction < 0.75));
                }
                None => prop_assert!(trace.iter().all(|r| r.discovery_fraction < 0.75)),
            }
        }
    }
}
