//! Benchmark CLI for the Bermudan pricing and exposure engine.
//!
//! Exit codes: 0 on success, 2 on configuration problems (unreadable or
//! invalid config file, out-of-domain values, bad flag combinations — clap
//! itself also exits 2 on usage errors), 3 on runtime failures (numerics or
//! i/o) after the configuration was accepted.

mod config;
mod experiments;
mod manifest;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{ConfigError, ExperimentConfig};
use experiments::{cmd_converge, cmd_exposure, cmd_lsm_interp, cmd_pv_dist, MeasureRun, RunError};
use manifest::RunWriter;

#[derive(Parser)]
#[command(
    name = "bermudan-bench",
    version,
    about = "Benchmarks for the Bermudan pricing and exposure engine"
)]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory root; overrides the config's out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the training seed; the validation seed becomes N + 1000003.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error-convergence race between the two training modes.
    Converge,
    /// Per-path present values at each exercise date, all three models.
    PvDist,
    /// Expected and potential-future exposure profiles.
    Exposure {
        /// Add interior horizons between the exercise dates.
        #[arg(long)]
        fine: bool,
        /// Path measure for the exposure scenarios.
        #[arg(long, value_enum, default_value_t = MeasureArg::Rn)]
        measure: MeasureArg,
        /// Run one real-world scenario (1-based index); all when omitted.
        #[arg(long, value_name = "K")]
        scenario: Option<usize>,
    },
    /// LSM interpolation-scheme comparison on the fine horizon grid.
    LsmInterp,
    /// Every experiment family in sequence.
    All {
        /// Use the fine horizon grid for the exposure profiles.
        #[arg(long)]
        fine: bool,
    },
}

#[derive(Debug, Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MeasureArg {
    /// Risk-neutral paths.
    Rn,
    /// Real-world scenario paths (pricing stays risk-neutral).
    Real,
}

#[derive(Debug)]
enum MainError {
    Config(ConfigError),
    Run(RunError),
}

impl MainError {
    fn code(&self) -> u8 {
        match self {
            MainError::Config(_) => 2,
            MainError::Run(_) => 3,
        }
    }
}

impl fmt::Display for MainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MainError::Config(e) => write!(f, "{e}"),
            MainError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for MainError {
    fn from(e: ConfigError) -> Self {
        MainError::Config(e)
    }
}

impl From<RunError> for MainError {
    fn from(e: RunError) -> Self {
        MainError::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), MainError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let out_root = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    print_header(&cfg);

    let base_args = |extra: &[(&str, String)]| -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert(
            "config".to_string(),
            cli.config
                .as_ref()
                .map_or_else(|| "(defaults)".to_string(), |p| p.display().to_string()),
        );
        m.insert("out".to_string(), out_root.display().to_string());
        m.insert(
            "seed".to_string(),
            cli.seed.map_or_else(|| "(config)".to_string(), |s| s.to_string()),
        );
        for (k, v) in extra {
            m.insert(k.to_string(), v.clone());
        }
        m
    };

    match cli.command {
        Command::Converge => {
            run_one(&cfg, &out_root, "converge", base_args(&[]), cmd_converge)
        }
        Command::PvDist => run_one(&cfg, &out_root, "pv-dist", base_args(&[]), cmd_pv_dist),
        Command::Exposure { fine, measure, scenario } => {
            let runs = measure_runs(&cfg, measure, scenario)?;
            let args = base_args(&[
                ("fine", fine.to_string()),
                ("measure", format!("{measure:?}").to_lowercase()),
                (
                    "scenario",
                    scenario.map_or_else(|| "(all)".to_string(), |k| k.to_string()),
                ),
            ]);
            run_one(&cfg, &out_root, "exposure", args, |cfg, w| {
                cmd_exposure(cfg, w, fine, &runs)
            })
        }
        Command::LsmInterp => {
            run_one(&cfg, &out_root, "lsm-interp", base_args(&[]), cmd_lsm_interp)
        }
        Command::All { fine } => {
            run_one(&cfg, &out_root, "converge", base_args(&[]), cmd_converge)?;
            run_one(&cfg, &out_root, "pv-dist", base_args(&[]), cmd_pv_dist)?;
            let runs = vec![
                MeasureRun::RiskNeutral,
                MeasureRun::Real((0..cfg.scenarios.len()).collect()),
            ];
            run_one(
                &cfg,
                &out_root,
                "exposure",
                base_args(&[("fine", fine.to_string()), ("measure", "all".to_string())]),
                |cfg, w| cmd_exposure(cfg, w, fine, &runs),
            )?;
            run_one(&cfg, &out_root, "lsm-interp", base_args(&[]), cmd_lsm_interp)
        }
    }
}

/// Resolve the `--measure` / `--scenario` flags against the configured
/// scenario list. Flag combinations that cannot be honoured are
/// configuration errors.
fn measure_runs(
    cfg: &ExperimentConfig,
    measure: MeasureArg,
    scenario: Option<usize>,
) -> Result<Vec<MeasureRun>, ConfigError> {
    match (measure, scenario) {
        (MeasureArg::Rn, None) => Ok(vec![MeasureRun::RiskNeutral]),
        (MeasureArg::Rn, Some(_)) => {
            Err(ConfigError("--scenario requires --measure real".to_string()))
        }
        (MeasureArg::Real, None) => {
            Ok(vec![MeasureRun::Real((0..cfg.scenarios.len()).collect())])
        }
        (MeasureArg::Real, Some(k)) => {
            if k == 0 || k > cfg.scenarios.len() {
                Err(ConfigError(format!(
                    "--scenario must lie in 1..={}, got {k}",
                    cfg.scenarios.len()
                )))
            } else {
                Ok(vec![MeasureRun::Real(vec![k - 1])])
            }
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    root: &Path,
    name: &str,
    args: BTreeMap<String, String>,
    f: impl FnOnce(&ExperimentConfig, &mut RunWriter) -> Result<(), RunError>,
) -> Result<(), MainError> {
    let dir = root.join(name);
    println!("[{name}] writing to {}", dir.display());
    let mut w = RunWriter::new(&dir, name, args, cfg)
        .map_err(|e| MainError::Run(RunError::Io(e)))?;
    f(cfg, &mut w)?;
    w.finish().map_err(|e| MainError::Run(RunError::Io(e)))?;
    Ok(())
}

/// The benchmark's standing market assumptions, stated up front on stdout
/// (they also land in every manifest).
fn print_header(cfg: &ExperimentConfig) {
    let spec = cfg.contract_spec();
    println!(
        "benchmark assumptions: s0={}, r={}, sigma={} | {:?} moneyness {} (strike {}), \
         maturity {}y, {} exercise dates | {} train paths (seed {}), {} validation paths (seed {})",
        cfg.market.s0,
        cfg.market.r,
        cfg.market.sigma,
        cfg.contract.side,
        cfg.contract.moneyness,
        spec.strike,
        cfg.contract.maturity,
        spec.exercise_times.len(),
        cfg.paths.n_train,
        cfg.paths.seed_train,
        cfg.paths.n_validation,
        cfg.paths.seed_validation,
    );
}
