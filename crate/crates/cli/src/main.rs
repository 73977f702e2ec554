use std::path::PathBuf;
use std::process::ExitCode;

use brahms_tee::config::{Entry, ExperimentConfig};
use brahms_tee::sweep::{self, SweepOptions};
use clap::{Parser, ValueEnum};

const AFTER_HELP: &str = "\
Settings are layered: built-in defaults, then --preset, then --config, then
flags. Every flag can also be given as an environment variable named
BRAHMS_TEE_<FLAG> (upper case, dashes as underscores), e.g. BRAHMS_TEE_ROUNDS=50.
List flags (--f, --t, --eviction, --injection-fraction) accept repeated or
comma-separated values and replace the list from the layers below.

Exit status: 0 on success, 2 on invalid configuration, 1 if any run failed.";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// f from 0.10 to 0.30 step 0.02, t in {0.01, 0.10, 0.20, 0.30, 0.50},
    /// eviction in {0, 0.4, 0.6, 1.0, adaptive}, n = 10000
    PaperSweep,
}

/// Runs Brahms / trusted-node peer sampling experiments and writes CSV traces.
#[derive(Debug, Parser)]
#[command(name = "brahms-tee", version, after_help = AFTER_HELP)]
struct Cli {
    /// Flat key = value config file
    #[arg(long, env = "BRAHMS_TEE_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, value_enum, env = "BRAHMS_TEE_PRESET")]
    preset: Option<Preset>,

    /// Output directory
    #[arg(long, env = "BRAHMS_TEE_OUT", value_name = "DIR")]
    out: Option<String>,

    /// Runs executed in parallel
    #[arg(long, env = "BRAHMS_TEE_WORKERS", default_value_t = 1, value_name = "K")]
    workers: usize,

    /// Re-run experiments whose output files already exist
    #[arg(long, env = "BRAHMS_TEE_FORCE")]
    force: bool,

    /// Print the resolved configuration and planned runs, then exit
    #[arg(long)]
    dry_run: bool,

    /// Number of nodes
    #[arg(long, env = "BRAHMS_TEE_N")]
    n: Option<String>,

    /// Byzantine fractions
    #[arg(long, env = "BRAHMS_TEE_F", value_delimiter = ',')]
    f: Vec<String>,

    /// Trusted fractions
    #[arg(long, env = "BRAHMS_TEE_T", value_delimiter = ',')]
    t: Vec<String>,

    /// Eviction settings: a rate in [0, 1] or `adaptive`
    #[arg(long, env = "BRAHMS_TEE_EVICTION", value_delimiter = ',')]
    eviction: Vec<String>,

    /// View size
    #[arg(long, env = "BRAHMS_TEE_L1")]
    l1: Option<String>,

    /// Sample list size (default: l1)
    #[arg(long, env = "BRAHMS_TEE_L2")]
    l2: Option<String>,

    #[arg(long, env = "BRAHMS_TEE_ALPHA")]
    alpha: Option<String>,

    #[arg(long, env = "BRAHMS_TEE_BETA")]
    beta: Option<String>,

    #[arg(long, env = "BRAHMS_TEE_GAMMA")]
    gamma: Option<String>,

    #[arg(long, env = "BRAHMS_TEE_ROUNDS")]
    rounds: Option<String>,

    /// Repetitions; repetition i uses seed + i
    #[arg(long, env = "BRAHMS_TEE_REPETITIONS")]
    repetitions: Option<String>,

    #[arg(long, env = "BRAHMS_TEE_SEED")]
    seed: Option<String>,

    /// Byzantine push budget in units of the honest push rate
    #[arg(long, env = "BRAHMS_TEE_PUSH_BUDGET_FACTOR")]
    push_budget_factor: Option<String>,

    /// Gap below the average pull-answer pollution at which the adversary
    /// labels a node trusted
    #[arg(long, env = "BRAHMS_TEE_IDENT_THRESHOLD")]
    ident_threshold: Option<String>,

    /// Run the trusted-node identification attack (true/false)
    #[arg(long, env = "BRAHMS_TEE_IDENTIFICATION")]
    identification: Option<String>,

    /// Inject poisoned trusted nodes (true/false)
    #[arg(long, env = "BRAHMS_TEE_INJECTION")]
    injection: Option<String>,

    /// Poisoned trusted nodes added, as fractions of n
    #[arg(long, env = "BRAHMS_TEE_INJECTION_FRACTION", value_delimiter = ',')]
    injection_fraction: Vec<String>,
}

impl Cli {
    fn entries(&self) -> Vec<Entry> {
        let mut out = Vec::new();
        let scalars = [
            ("n", &self.n),
            ("l1", &self.l1),
            ("l2", &self.l2),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("rounds", &self.rounds),
            ("repetitions", &self.repetitions),
            ("seed", &self.seed),
            ("push_budget_factor", &self.push_budget_factor),
            ("ident_threshold", &self.ident_threshold),
            ("identification", &self.identification),
            ("injection", &self.injection),
            ("out", &self.out),
        ];
        for (key, v) in scalars {
            if let Some(v) = v {
                out.push(Entry::new(key, v.as_str()));
            }
        }
        let lists = [
            ("f", &self.f),
            ("t", &self.t),
            ("eviction", &self.eviction),
            ("injection_fraction", &self.injection_fraction),
        ];
        for (key, vs) in lists {
            out.extend(vs.iter().map(|v| Entry::new(key, v.trim())));
        }
        out
    }

    fn resolve(&self) -> brahms_tee::Result<ExperimentConfig> {
        let mut cfg = match self.preset {
            Some(Preset::PaperSweep) => ExperimentConfig::paper_sweep(),
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path).map_err(|e| match e {
                // A missing config file is a usage problem, not a failed run.
                brahms_tee::Error::Io { path, source } => {
                    brahms_tee::Error::Config(format!("cannot read {}: {source}", path.display()))
                }
                other => other,
            })?;
        }
        cfg.apply(&self.entries(), std::path::Path::new("<flags>"))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("brahms-tee: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.workers == 0 {
        eprintln!("brahms-tee: configuration error: --workers must be at least 1");
        return ExitCode::from(2);
    }

    if cli.dry_run {
        println!("{cfg:#?}");
        for run in sweep::plan(&cfg) {
            println!("{}", run.run_id);
        }
        return ExitCode::SUCCESS;
    }

    let opts = SweepOptions {
        workers: cli.workers,
        force: cli.force,
    };
    let outcome = sweep::run_sweep(&cfg, &opts, |ev| println!("{ev}"));
    match outcome {
        Ok(o) if o.failures.is_empty() => {
            println!(
                "{} runs ({} executed, {} existing); summary in {}",
                o.runs,
                o.executed,
                o.skipped,
                sweep::summary_path(&cfg.out).display()
            );
            ExitCode::SUCCESS
        }
        Ok(o) => {
            for (id, e) in &o.failures {
                eprintln!("brahms-tee: run {id} failed: {e}");
            }
            ExitCode::from(1)
        }
        Err(e) if e.is_config() => {
            eprintln!("brahms-tee: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("brahms-tee: {e}");
            ExitCode::from(1)
        }
    }
}
