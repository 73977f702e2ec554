//! Parameter sweeps: expands an [`ExperimentConfig`] into runs, executes
//! them on a small worker pool and writes the CSV outputs.
//!
//! Layout of the output directory:
//!
//! ```text
//! out/traces/<run_id>.csv    per-round trace of one run
//! out/runs/<run_id>.csv      that run's own summary row
//! out/summary.csv            every run, with improvements over baselines
//! ```
//!
//! A run whose trace and summary row both exist is not executed again unless
//! `force` is set, so an interrupted sweep can be resumed. Because every run
//! is a pure function of its config, the assembled summary is the same
//! either way.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::engine::{run_experiment, RunConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, RunLabel, SummaryRow};
use crate::trusted::EvictionPolicy;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedRun {
    pub run_id: String,
    pub config: RunConfig,
    pub label: RunLabel,
    /// Index of the matched baseline in the plan; `None` for baselines.
    pub baseline: Option<usize>,
}

impl PlannedRun {
    pub fn is_baseline(&self) -> bool {
        self.baseline.is_none()
    }
}

fn fingerprint(cfg: &RunConfig) -> String {
    let d = Sha256::digest(format!("{cfg:?}").as_bytes());
    d[..4].iter().map(|b| format!("{b:02x}")).collect()
}

/// File-name-safe ID naming every swept parameter and the seed, plus a short
/// digest of the full run config.
pub fn run_id(cfg: &RunConfig, baseline: bool) -> String {
    let ev = if baseline {
        "baseline".to_string()
    } else {
        match cfg.eviction {
            EvictionPolicy::Adaptive => "adaptive".to_string(),
            EvictionPolicy::Fixed(r) => format!("er{r:.4}"),
        }
    };
    format!(
        "n{}-f{:.4}-t{:.4}-{}-inj{:.4}-s{}-{}",
        cfg.n,
        cfg.f,
        cfg.t,
        ev,
        cfg.injection_fraction,
        cfg.seed,
        fingerprint(cfg)
    )
}

fn label(run_id: &str, cfg: &RunConfig, baseline: bool) -> RunLabel {
    let (mode, rate) = match (baseline, cfg.eviction) {
        (true, _) => ("none", "0.000000".to_string()),
        (false, EvictionPolicy::Adaptive) => ("adaptive", "adaptive".to_string()),
        (false, EvictionPolicy::Fixed(r)) => ("fixed", format!("{r:.6}")),
    };
    RunLabel {
        run_id: run_id.to_string(),
        seed: cfg.seed,
        n: cfg.n,
        f: cfg.f,
        t: cfg.t,
        eviction_mode: mode.to_string(),
        eviction_rate_or_adaptive: rate,
    }
}

/// All runs of a sweep: per `(f, repetition)` one Brahms baseline followed by
/// every `(t, eviction, injection)` combination with the same seed.
pub fn plan(cfg: &ExperimentConfig) -> Vec<PlannedRun> {
    let mut out = Vec::new();
    for &f in &cfg.f_values {
        for rep in 0..cfg.repetitions {
            let base_cfg = cfg.run_config(f, 0.0, EvictionPolicy::Adaptive, 0.0, rep).baseline();
            let base_id = run_id(&base_cfg, true);
            let base_idx = out.len();
            out.push(PlannedRun {
                label: label(&base_id, &base_cfg, true),
                run_id: base_id,
                config: base_cfg,
                baseline: None,
            });
            for &t in &cfg.t_values {
                for &ev in &cfg.evictions {
                    for inj in cfg.injection_values() {
                        let rc = cfg.run_config(f, t, ev, inj, rep);
                        let id = run_id(&rc, false);
                        out.push(PlannedRun {
                            label: label(&id, &rc, false),
                            run_id: id,
                            config: rc,
                            baseline: Some(base_idx),
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn trace_path(out: &Path, run_id: &str) -> PathBuf {
    out.join("traces").join(format!("{run_id}.csv"))
}

pub fn run_summary_path(out: &Path, run_id: &str) -> PathBuf {
    out.join("runs").join(format!("{run_id}.csv"))
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.csv")
}

/// Creates the output tree and checks that it is writable.
pub fn prepare_output(out: &Path) -> Result<()> {
    for dir in [out.join("traces"), out.join("runs")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let probe = out.join(".write-check");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))?;
    Ok(())
}

/// Writes through a temporary sibling so a crash never leaves a truncated
/// file under the final name.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| Error::io(path, e))?;
    let tmp = path.with_extension("csv.tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Executes one run and writes its trace and summary row.
pub fn execute(run: &PlannedRun, out: &Path) -> Result<SummaryRow> {
    let outcome = run_experiment(&run.config)?;
    let rows = &outcome.rows;
    let summary = SummaryRow {
        label: run.label.clone(),
        injection_fraction: run.config.injection_fraction,
        discovery_time: metrics::discovery_time(rows, metrics::DISCOVERY_THRESHOLD),
        stability_time: metrics::stability_time(rows),
        post_stability_mean: metrics::post_stability_mean(rows),
        resilience_improvement: None,
        discovery_overhead: None,
        stability_overhead: None,
        ident: outcome.ident.as_ref().map(|i| i.report),
        poisoned_final_byz_fraction: rows.last().and_then(|r| r.poisoned_mean_byz_fraction),
    };
    write_atomic(&trace_path(out, &run.run_id), |w| metrics::write_trace(w, &run.label, rows))?;
    write_atomic(&run_summary_path(out, &run.run_id), |w| {
        metrics::write_summary_header(w)?;
        metrics::write_summary_row(w, &summary)
    })?;
    Ok(summary)
}

fn load_summary(out: &Path, run_id: &str) -> Result<SummaryRow> {
    let path = run_summary_path(out, run_id);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rows = metrics::read_summary(&text).map_err(|msg| Error::Trace {
        path: path.clone(),
        msg,
    })?;
    match rows.len() {
        1 => Ok(rows.remove(0)),
        n => Err(Error::Trace {
            path,
            msg: format!("expected one summary row, found {n}"),
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub workers: usize,
    pub force: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            workers: 1,
            force: false,
        }
    }
}

/// Progress of a single run, as reported to the caller.
#[derive(Debug)]
pub struct RunEvent<'a> {
    pub index: usize,
    pub total: usize,
    pub run: &'a PlannedRun,
    pub skipped: bool,
    pub result: &'a Result<SummaryRow>,
}

impl std::fmt::Display for RunEvent<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt_u = |v: Option<u32>| v.map_or("-".to_string(), |x| x.to_string());
        let opt_f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        write!(f, "[{}/{}] {} ", self.index + 1, self.total, self.run.run_id)?;
        match self.result {
            Ok(s) => {
                write!(
                    f,
                    "discovery={} stability={} post_mean={}",
                    opt_u(s.discovery_time),
                    opt_u(s.stability_time),
                    opt_f(s.post_stability_mean)
                )?;
                if let Some(i) = s.ident {
                    write!(f, " ident_p={:.3} ident_r={:.3}", i.precision, i.recall)?;
                }
                if self.skipped {
                    f.write_str(" (existing)")?;
                }
                Ok(())
            }
            Err(e) => write!(f, "FAILED: {e}"),
        }
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub runs: usize,
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<(String, Error)>,
    /// Summary rows in plan order, improvements filled in.
    pub summary: Vec<SummaryRow>,
}

/// Fills in improvements and overheads against each run's baseline.
pub fn pair_with_baselines(plan: &[PlannedRun], rows: &mut [Option<SummaryRow>]) {
    for (i, run) in plan.iter().enumerate() {
        let Some(b) = run.baseline else { continue };
        let Some(base) = rows[b].clone() else { continue };
        if let Some(row) = rows[i].as_mut() {
            row.resilience_improvement = match (row.post_stability_mean, base.post_stability_mean) {
                (Some(r), Some(bm)) => metrics::improvement(r, bm),
                _ => None,
            };
            row.discovery_overhead = metrics::overhead(row.discovery_time, base.discovery_time);
            row.stability_overhead = metrics::overhead(row.stability_time, base.stability_time);
        }
    }
}

/// Runs a whole sweep. `report` is called once per run as it finishes, from
/// whichever worker ran it.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    opts: &SweepOptions,
    report: impl Fn(&RunEvent<'_>) + Sync,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    prepare_output(&cfg.out)?;
    let plan = plan(cfg);
    let out = cfg.out.as_path();
    let total = plan.len();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let executed = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SummaryRow>>>> = Mutex::new((0..total).map(|_| None).collect());

    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= total {
            break;
        }
        let run = &plan[i];
        let existing = !opts.force
            && trace_path(out, &run.run_id).is_file()
            && run_summary_path(out, &run.run_id).is_file();
        let result = if existing {
            load_summary(out, &run.run_id)
        } else {
            executed.fetch_add(1, Ordering::Relaxed);
            execute(run, out).and_then(|_| load_summary(out, &run.run_id))
        };
        report(&RunEvent {
            index: done.fetch_add(1, Ordering::Relaxed),
            total,
            run,
            skipped: existing,
            result: &result,
        });
        results.lock().expect("no worker panicked")[i] = Some(result);
    };

    let workers = opts.workers.clamp(1, total.max(1));
    std::thread::scope(|s| {
        for _ in 1..workers {
            s.spawn(work);
        }
        work();
    });

    let mut failures = Vec::new();
    let mut rows: Vec<Option<SummaryRow>> = Vec::with_capacity(total);
    for (run, r) in plan.iter().zip(results.into_inner().expect("no worker panicked")) {
        match r.expect("every run was attempted") {
            Ok(row) => rows.push(Some(row)),
            Err(e) => {
                failures.push((run.run_id.clone(), e));
                rows.push(None);
            }
        }
    }
    pair_with_baselines(&plan, &mut rows);
    let summary: Vec<SummaryRow> = rows.into_iter().flatten().collect();
    write_atomic(&summary_path(out), |w| {
        metrics::write_summary_header(w)?;
        summary.iter().try_for_each(|row| metrics::write_summary_row(w, row))
    })?;

    let executed = executed.into_inner();
    Ok(SweepOutcome {
        runs: total,
        executed,
        skipped: total - executed,
        failures,
        summary,
    })
}
