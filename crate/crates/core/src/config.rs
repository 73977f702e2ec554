//! Experiment configuration: a sweep over `f`, `t`, eviction policies and
//! injection fractions, read from a flat `key = value` file.
//!
//! ```text
//! # desk-scale sweep
//! n = 1000
//! l1 = 100
//! f = 0.10
//! f = 0.20
//! t = 0.01
//! eviction = adaptive
//! eviction = 1.0
//! repetitions = 5
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. List keys (`f`, `t`,
//! `eviction`, `injection_fraction`) may repeat; the first occurrence in a
//! layer replaces the inherited list and later ones append. Scalar keys may
//! appear once per layer. Unknown keys are errors.

use std::path::{Path, PathBuf};

use crate::brahms::BrahmsParams;
use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::trusted::EvictionPolicy;

/// Every key accepted in a config file, in documentation order.
pub const KEYS: &[&str] = &[
    "n",
    "f",
    "t",
    "eviction",
    "l1",
    "l2",
    "alpha",
    "beta",
    "gamma",
    "rounds",
    "repetitions",
    "seed",
    "push_budget_factor",
    "ident_threshold",
    "identification",
    "injection",
    "injection_fraction",
    "out",
];

const LIST_KEYS: &[&str] = &["f", "t", "eviction", "injection_fraction"];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub f_values: Vec<f64>,
    pub t_values: Vec<f64>,
    pub evictions: Vec<EvictionPolicy>,
    pub l1: usize,
    /// `None` means `l1`.
    pub l2: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rounds: u32,
    pub repetitions: u32,
    /// Repetition `i` runs with seed `seed + i`.
    pub seed: u64,
    pub push_budget_factor: f64,
    pub ident_threshold: f64,
    pub identification: bool,
    /// When off, `injection_fractions` is ignored and no poisoned nodes are
    /// added.
    pub injection: bool,
    pub injection_fractions: Vec<f64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 10_000,
            f_values: vec![0.10],
            t_values: vec![0.01],
            evictions: vec![EvictionPolicy::Adaptive],
            l1: 200,
            l2: None,
            alpha: 0.4,
            beta: 0.4,
            gamma: 0.2,
            rounds: 200,
            repetitions: 10,
            seed: 0,
            push_budget_factor: 1.0,
            ident_threshold: 0.10,
            identification: false,
            injection: false,
            injection_fractions: Vec::new(),
            out: PathBuf::from("results"),
        }
    }
}

/// One `key = value` setting and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based line number, or 0 for settings not read from a file.
    pub line: usize,
}

impl Entry {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Entry {
            key: key.into(),
            value: value.into(),
            line: 0,
        }
    }
}

/// Splits a config file into entries. Only syntax is checked here.
pub fn parse_entries(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |msg: String| Error::ConfigSyntax {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax(format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(syntax("missing key".into()));
        }
        if !KEYS.contains(&key) {
            return Err(syntax(format!("unknown key {key:?}")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

pub fn parse_eviction(s: &str) -> std::result::Result<EvictionPolicy, String> {
    if s.eq_ignore_ascii_case("adaptive") {
        return Ok(EvictionPolicy::Adaptive);
    }
    let r: f64 = s
        .parse()
        .map_err(|_| format!("eviction must be `adaptive` or a rate in [0, 1], got {s:?}"))?;
    if !(0.0..=1.0).contains(&r) {
        return Err(format!("eviction rate {r} outside [0, 1]"));
    }
    Ok(EvictionPolicy::Fixed(r))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {s:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("not a valid number: {s:?}"))
}

impl ExperimentConfig {
    /// The published sweep: `f` from 10% to 30% in steps of 2%, five trusted
    /// fractions, five eviction settings, 10,000 nodes.
    pub fn paper_sweep() -> Self {
        ExperimentConfig {
            f_values: (0..=10).map(|i| (10 + 2 * i) as f64 / 100.0).collect(),
            t_values: vec![0.01, 0.10, 0.20, 0.30, 0.50],
            evictions: vec![
                EvictionPolicy::Fixed(0.0),
                EvictionPolicy::Fixed(0.4),
                EvictionPolicy::Fixed(0.6),
                EvictionPolicy::Fixed(1.0),
                EvictionPolicy::Adaptive,
            ],
            ..ExperimentConfig::default()
        }
    }

    /// Applies one layer of settings (a file, or command-line flags).
    pub fn apply(&mut self, entries: &[Entry], path: &Path) -> Result<()> {
        let mut seen: Vec<&str> = Vec::new();
        for e in entries {
            let key = e.key.as_str();
            let fail = |msg: String| {
                if e.line == 0 {
                    Error::Config(format!("{key}: {msg}"))
                } else {
                    Error::ConfigSyntax {
                        path: path.to_path_buf(),
                        line: e.line,
                        msg: format!("{key}: {msg}"),
                    }
                }
            };
            let first = !seen.contains(&key);
            if !first && !LIST_KEYS.contains(&key) {
                return Err(fail("set more than once".into()));
            }
            seen.push(key);
            let v = e.value.as_str();
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "n" => self.n = parse_num(v)?,
                    "f" | "t" | "injection_fraction" => {
                        let list = match key {
                            "f" => &mut self.f_values,
                            "t" => &mut self.t_values,
                            _ => &mut self.injection_fractions,
                        };
                        if first {
                            list.clear();
                        }
                        list.push(parse_num(v)?);
                    }
                    "eviction" => {
                        if first {
                            self.evictions.clear();
                        }
                        self.evictions.push(parse_eviction(v)?);
                    }
                    "l1" => self.l1 = parse_num(v)?,
                    "l2" => self.l2 = Some(parse_num(v)?),
                    "alpha" => self.alpha = parse_num(v)?,
                    "beta" => self.beta = parse_num(v)?,
                    "gamma" => self.gamma = parse_num(v)?,
                    "rounds" => self.rounds = parse_num(v)?,
                    "repetitions" => self.repetitions = parse_num(v)?,
                    "seed" => self.seed = parse_num(v)?,
                    "push_budget_factor" => self.push_budget_factor = parse_num(v)?,
                    "ident_threshold" => self.ident_threshold = parse_num(v)?,
                    "identification" => self.identification = parse_bool(v)?,
                    "injection" => self.injection = parse_bool(v)?,
                    "out" => {
                        if v.is_empty() {
                            return Err("empty path".into());
                        }
                        self.out = PathBuf::from(v);
                    }
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            })();
            r.map_err(fail)?;
        }
        Ok(())
    }

    /// Reads and applies a config file on top of `self`.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries = parse_entries(&text, path)?;
        self.apply(&entries, path)
    }

    /// Injection fractions actually swept: `[0]` unless injection is on.
    pub fn injection_values(&self) -> Vec<f64> {
        if self.injection {
            self.injection_fractions.clone()
        } else {
            vec![0.0]
        }
    }

    /// The single-run config for one point of the sweep.
    pub fn run_config(&self, f: f64, t: f64, eviction: EvictionPolicy, injection: f64, rep: u32) -> RunConfig {
        RunConfig {
            n: self.n,
            f,
            t,
            l1: self.l1,
            l2: self.l2,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            rounds: self.rounds,
            seed: self.seed.wrapping_add(rep as u64),
            eviction,
            push_budget_factor: self.push_budget_factor,
            ident_threshold: self.ident_threshold,
            injection_fraction: injection,
            identification: self.identification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return err("n must be positive".into());
        }
        if self.rounds == 0 {
            return err("rounds must be at least 1".into());
        }
        if self.repetitions == 0 {
            return err("repetitions must be at least 1".into());
        }
        for (name, list) in [("f", &self.f_values), ("t", &self.t_values)] {
            if list.is_empty() {
                return err(format!("no {name} values"));
            }
            if let Some(v) = list.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.evictions.is_empty() {
            return err("no eviction settings".into());
        }
        if self.injection && self.injection_fractions.is_empty() {
            return err("injection is on but no injection_fraction is given".into());
        }
        if let Some(v) = self.injection_fractions.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return err(format!("injection_fraction = {v} outside [0, 1]"));
        }
        BrahmsParams {
            l1: self.l1,
            l2: self.l2.unwrap_or(self.l1),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
        .validate()?;
        for &f in &self.f_values {
            for &t in &self.t_values {
                if f + t > 1.0 + 1e-9 {
                    return err(format!("f + t > 1 for f = {f}, t = {t}"));
                }
                for &ev in &self.evictions {
                    for inj in self.injection_values() {
                        self.run_config(f, t, ev, inj, 0).validate()?;
                    }
                }
            }
        }
        Ok(())
    }
}
