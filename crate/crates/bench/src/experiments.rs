//! The four experiment families: error-convergence race, PV-distribution
//! benchmarking, exposure benchmarking (risk-neutral / real-world /
//! fine-grid) and the LSM interpolation comparison. Each writes CSVs, SVGs
//! rendered from those CSVs, and its stage timings into the run manifest.

use bermudan::cos::price_cos;
use bermudan::engine::{price_rlnn, value_at};
use bermudan::exposure::{CosModel, ExposureModel, ExposureProfile, LsmModel, RlnnModel};
use bermudan::hedge::{TrainingConfig, TrainingMode};
use bermudan::lsm::{fit_lsm, InterpScheme, LsmStyle, ParamsBoundary};
use bermudan::{simulate_gbm, EngineError, PathGrid};

use crate::config::ExperimentConfig;
use crate::manifest::RunWriter;
use crate::output::{CsvBuilder, Plot};

/// Anything that can abort an experiment after configuration was accepted.
#[derive(Debug)]
pub enum RunError {
    Engine(EngineError),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Engine(e) => write!(f, "numerical failure: {e}"),
            RunError::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        RunError::Engine(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn mode_label(mode: TrainingMode) -> &'static str {
    match mode {
        TrainingMode::Hybrid => "hybrid",
        TrainingMode::JointAdam => "joint_adam",
    }
}

fn validation_grid(cfg: &ExperimentConfig, horizons: &[f64]) -> Result<PathGrid> {
    Ok(simulate_gbm(
        &cfg.market,
        None,
        horizons,
        cfg.paths.n_validation,
        cfg.paths.seed_validation,
    )?)
}

/// Error-convergence race: full training runs at every epoch budget, both
/// training modes, all configured seeds; the error columns compare against
/// the transform reference price.
pub fn cmd_converge(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<()> {
    let market = cfg.market;
    let contract = cfg.contract_spec();
    let reference = w.stage("cos_reference", || price_cos(&market, &contract, &cfg.cos))?;
    let grid = validation_grid(cfg, &contract.exercise_times)?;
    let t1 = contract.exercise_times[0];
    let df1 = (-market.r * t1).exp();
    let h0 = contract.payoff(market.s0);
    let spots1 = grid.spots_at(0);

    let mut csv = CsvBuilder::new(&[
        "mode",
        "seed",
        "epochs",
        "price",
        "error",
        "price_validation",
        "error_validation",
    ]);
    let max_e = cfg.converge.max_epochs;
    // Mean |error| per (mode, budget) across seeds, for the plot.
    let mut mean_abs = vec![vec![0.0f64; max_e]; 2];
    let mut crossings: Vec<String> = Vec::new();

    for &seed in &cfg.converge.seeds {
        for (mi, mode) in [TrainingMode::Hybrid, TrainingMode::JointAdam].into_iter().enumerate()
        {
            let label = mode_label(mode);
            let mut first_cross: Option<usize> = None;
            w.stage(&format!("race_{label}_seed{seed}"), || -> Result<()> {
                for budget in 1..=max_e {
                    let tc = TrainingConfig { epochs: budget, mode, ..cfg.training.clone() };
                    let fit =
                        price_rlnn(&market, &contract, &tc, cfg.converge.n_paths, seed)?;
                    let price = fit.t0_price();
                    let error = price - reference;
                    let v1 = value_at(&fit.layers, &market, &contract, t1, &spots1)?;
                    let pv = h0.max(df1 * v1.iter().sum::<f64>() / v1.len() as f64);
                    csv.push_row(&[
                        label.to_string(),
                        seed.to_string(),
                        budget.to_string(),
                        price.to_string(),
                        error.to_string(),
                        pv.to_string(),
                        (pv - reference).to_string(),
                    ]);
                    mean_abs[mi][budget - 1] += error.abs() / cfg.converge.seeds.len() as f64;
                    if first_cross.is_none() && error.abs() < cfg.converge.threshold {
                        first_cross = Some(budget);
                    }
                }
                Ok(())
            })?;
            let cross = first_cross
                .map_or_else(|| format!(">{max_e}"), |e| e.to_string());
            crossings.push(format!("{label} seed {seed}: epochs to threshold {cross}"));
        }
    }
    for line in &crossings {
        println!("  {line}");
    }

    w.describe(
        "convergence.csv",
        &[
            ("mode", "training mode: hybrid (exact weight solve) or joint_adam"),
            ("seed", "training seed of this race run"),
            ("epochs", "per-layer epoch budget of this full training run"),
            ("price", "time-zero price from the fitted portfolio's closed form"),
            ("error", "price minus the transform reference price"),
            ("price_validation", "time-zero price re-estimated on the validation paths"),
            ("error_validation", "price_validation minus the transform reference price"),
        ],
    );
    w.write_file("convergence.csv", &csv.into_string())?;

    let to_points = |errs: &[f64]| -> Vec<(f64, f64)> {
        errs.iter().enumerate().map(|(i, &e)| ((i + 1) as f64, e.max(1e-16))).collect()
    };
    let mut plot = Plot::new(
        "Price error vs training epochs (mean |error| across seeds)",
        "epochs",
        "|price error|",
    )
    .line("hybrid", to_points(&mean_abs[0]))
    .line("joint_adam", to_points(&mean_abs[1]))
    .line(
        "threshold",
        vec![(1.0, cfg.converge.threshold), (max_e as f64, cfg.converge.threshold)],
    );
    plot.log_x = true;
    plot.log_y = true;
    w.write_file("convergence.svg", &plot.render())?;
    Ok(())
}

/// Per-path present values at every exercise date on the shared validation
/// paths, all three models, with error columns against the transform.
pub fn cmd_pv_dist(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<()> {
    let market = cfg.market;
    let contract = cfg.contract_spec();
    let fit = w.stage("fit_rlnn", || {
        price_rlnn(&market, &contract, &cfg.training, cfg.paths.n_train, cfg.paths.seed_train)
    })?;
    let lsm = w.stage("fit_lsm", || {
        fit_lsm(
            &market,
            &contract,
            LsmStyle::ValueFunction,
            cfg.paths.n_train,
            cfg.paths.seed_train,
        )
    })?;
    let grid = validation_grid(cfg, &contract.exercise_times)?;

    let rlnn = RlnnModel::new(market, contract.clone(), fit.layers.clone())?;
    let lsm_model = LsmModel::new(market, contract.clone(), lsm, InterpScheme::OptionValue)?;
    let cos = CosModel::new(market, contract.clone(), cfg.cos.clone())?;
    let v_rlnn = w.stage("value_rlnn", || rlnn.values_on(&grid))?;
    let v_lsm = w.stage("value_lsm", || lsm_model.values_on(&grid))?;
    let v_cos = w.stage("value_cos", || cos.values_on(&grid))?;

    let mut csv = CsvBuilder::new(&[
        "date_index",
        "t",
        "path",
        "spot",
        "v_rlnn",
        "v_lsm",
        "v_cos",
        "err_rlnn",
        "err_lsm",
    ]);
    let n = grid.n_paths();
    for (m, &t) in contract.exercise_times.iter().enumerate() {
        for j in 0..n {
            csv.push_row(&[
                (m + 1).to_string(),
                t.to_string(),
                j.to_string(),
                grid.values[(j, m)].to_string(),
                v_rlnn[(j, m)].to_string(),
                v_lsm[(j, m)].to_string(),
                v_cos[(j, m)].to_string(),
                (v_rlnn[(j, m)] - v_cos[(j, m)]).to_string(),
                (v_lsm[(j, m)] - v_cos[(j, m)]).to_string(),
            ]);
        }
        // Max-abs summary per date, mirrored in stdout.
        let (mut worst_r, mut worst_l) = (0.0f64, 0.0f64);
        for j in 0..n {
            worst_r = worst_r.max((v_rlnn[(j, m)] - v_cos[(j, m)]).abs());
            worst_l = worst_l.max((v_lsm[(j, m)] - v_cos[(j, m)]).abs());
        }
        println!("  date {} (t={t}): max |err| rlnn {worst_r:.2e}, lsm {worst_l:.2e}", m + 1);
    }
    w.describe(
        "pv_dist.csv",
        &[
            ("date_index", "1-based exercise-date index"),
            ("t", "exercise date in years"),
            ("path", "0-based validation path index"),
            ("spot", "simulated underlying level at (path, t)"),
            ("v_rlnn", "fitted-portfolio option value at the state"),
            ("v_lsm", "least-squares Monte Carlo option value at the state"),
            ("v_cos", "transform reference option value at the state"),
            ("err_rlnn", "v_rlnn - v_cos"),
            ("err_lsm", "v_lsm - v_cos"),
        ],
    );
    w.write_file("pv_dist.csv", &csv.into_string())?;

    // One scatter per date; subsample to keep the figures light. The full
    // resolution lives in the CSV.
    for (m, &t) in contract.exercise_times.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| grid.values[(a, m)].total_cmp(&grid.values[(b, m)]));
        let stride = n.div_ceil(600).max(1);
        let pick = |vals: &bermudan::nalgebra::DMatrix<f64>| -> Vec<(f64, f64)> {
            order
                .iter()
                .step_by(stride)
                .map(|&j| (grid.values[(j, m)], vals[(j, m)]))
                .collect()
        };
        let plot = Plot::new(
            &format!("Present-value distribution at t={t}"),
            "underlying level",
            "option value",
        )
        .scatter("rlnn", pick(&v_rlnn))
        .scatter("lsm", pick(&v_lsm))
        .scatter("cos", pick(&v_cos));
        w.write_file(&format!("pv_dist_d{}.svg", m + 1), &plot.render())?;
    }
    Ok(())
}

/// Which measure(s) a single exposure invocation covers.
pub enum MeasureRun {
    RiskNeutral,
    /// 0-based indices into the configured scenario list.
    Real(Vec<usize>),
}

/// Exposure profiles (expected exposure and the configured quantile) for all
/// three models, optionally on the fine horizon grid and under real-world
/// scenarios. One CSV row per (horizon, model, measure, scenario).
pub fn cmd_exposure(
    cfg: &ExperimentConfig,
    w: &mut RunWriter,
    fine: bool,
    runs: &[MeasureRun],
) -> Result<()> {
    let market = cfg.market;
    let contract = cfg.contract_spec();
    let horizons =
        if fine { cfg.fine_horizons() } else { contract.exercise_times.clone() };

    let fit = w.stage("fit_rlnn", || {
        price_rlnn(&market, &contract, &cfg.training, cfg.paths.n_train, cfg.paths.seed_train)
    })?;
    let lsm = w.stage("fit_lsm", || {
        fit_lsm(
            &market,
            &contract,
            LsmStyle::ValueFunction,
            cfg.paths.n_train,
            cfg.paths.seed_train,
        )
    })?;
    // Fine-grid LSM values use per-path option-value interpolation between
    // the regression dates.
    let models: Vec<Box<dyn ExposureModel>> = vec![
        Box::new(RlnnModel::new(market, contract.clone(), fit.layers.clone())?),
        Box::new(LsmModel::new(market, contract.clone(), lsm, InterpScheme::OptionValue)?),
        Box::new(CosModel::new(market, contract.clone(), cfg.cos.clone())?),
    ];

    let mut csv = CsvBuilder::new(&["t", "model", "measure", "scenario", "ee", "pfe", "n_alive"]);
    let q = cfg.exposure.quantile;
    let push_profile =
        |csv: &mut CsvBuilder, p: &ExposureProfile, model: &str, measure: &str, sc: usize| {
            for (i, &t) in p.times.iter().enumerate() {
                csv.push_row(&[
                    t.to_string(),
                    model.to_string(),
                    measure.to_string(),
                    sc.to_string(),
                    p.ee[i].to_string(),
                    p.pfe[i].to_string(),
                    p.n_alive[i].to_string(),
                ]);
            }
        };
    let plot_profiles = |w: &mut RunWriter,
                         profiles: &[(String, ExposureProfile)],
                         suffix: &str,
                         title: &str|
     -> Result<()> {
        let mut ee = Plot::new(&format!("Expected exposure {title}"), "horizon (years)", "EE");
        let mut pfe = Plot::new(
            &format!("Potential future exposure ({q:.0}% level) {title}", q = q * 100.0),
            "horizon (years)",
            "PFE",
        );
        for (name, p) in profiles {
            let pts = |v: &[f64]| p.times.iter().copied().zip(v.iter().copied()).collect();
            ee = ee.line(name, pts(&p.ee));
            pfe = pfe.line(name, pts(&p.pfe));
        }
        w.write_file(&format!("exposure_ee{suffix}.svg"), &ee.render())?;
        w.write_file(&format!("exposure_pfe{suffix}.svg"), &pfe.render())?;
        Ok(())
    };

    for run in runs {
        match run {
            MeasureRun::RiskNeutral => {
                let grid = validation_grid(cfg, &horizons)?;
                let mut profiles = Vec::new();
                for model in &models {
                    let p = w.stage(&format!("exposure_rn_{}", model.name()), || {
                        model.exposure_on(&grid)?.profile(q)
                    })?;
                    push_profile(&mut csv, &p, model.name(), "rn", 0);
                    profiles.push((model.name().to_string(), p));
                }
                plot_profiles(w, &profiles, "", "(risk-neutral)")?;
            }
            MeasureRun::Real(indices) => {
                for &si in indices {
                    let scenario = cfg.scenarios[si];
                    let mut profiles = Vec::new();
                    for model in &models {
                        let name = format!("exposure_real_s{}_{}", si + 1, model.name());
                        let p = w.stage(&name, || -> Result<ExposureProfile> {
                            let cubes = bermudan::exposure::run_scenarios(
                                model.as_ref(),
                                &market,
                                &horizons,
                                &[scenario],
                                cfg.paths.n_validation,
                                cfg.paths.seed_validation,
                            )?;
                            Ok(cubes[0].profile(q)?)
                        })?;
                        push_profile(&mut csv, &p, model.name(), "real", si + 1);
                        profiles.push((model.name().to_string(), p));
                    }
                    plot_profiles(
                        w,
                        &profiles,
                        &format!("_s{}", si + 1),
                        &format!(
                            "(real-world scenario {}: mu={}, sigma={})",
                            si + 1,
                            scenario.mu,
                            scenario.sigma_real
                        ),
                    )?;
                }
            }
        }
    }

    w.describe(
        "exposure_profiles.csv",
        &[
            ("t", "risk horizon in years"),
            ("model", "rlnn, lsm or cos"),
            ("measure", "rn (risk-neutral paths) or real (real-world paths)"),
            ("scenario", "0 under rn; otherwise the 1-based real-world scenario index"),
            ("ee", "expected exposure: mean exposure across all paths"),
            ("pfe", "exposure quantile at the configured confidence level"),
            ("n_alive", "paths not yet exercised at this horizon"),
        ],
    );
    w.write_file("exposure_profiles.csv", &csv.into_string())?;
    Ok(())
}

/// Interpolation-scheme comparison: expected exposure on the fine grid under
/// each interpolation rule, against a per-horizon refit ("true fit").
pub fn cmd_lsm_interp(cfg: &ExperimentConfig, w: &mut RunWriter) -> Result<()> {
    let market = cfg.market;
    let contract = cfg.contract_spec();
    let fit = w.stage("fit_lsm", || {
        fit_lsm(
            &market,
            &contract,
            LsmStyle::ValueFunction,
            cfg.paths.n_train,
            cfg.paths.seed_train,
        )
    })?;
    let horizons = cfg.fine_horizons();
    let grid = validation_grid(cfg, &horizons)?;

    let schemes = [
        InterpScheme::TrueFit,
        InterpScheme::OptionValue,
        InterpScheme::ContinuationValue,
        InterpScheme::Params(ParamsBoundary::ValueBlend),
    ];
    let mut profiles: Vec<(InterpScheme, ExposureProfile)> = Vec::new();
    for scheme in schemes {
        let model = LsmModel::new(market, contract.clone(), fit.clone(), scheme)?;
        let p = w.stage(&format!("exposure_{}", scheme.label()), || {
            model.exposure_on(&grid)?.profile(cfg.exposure.quantile)
        })?;
        profiles.push((scheme, p));
    }
    let reference = profiles[0].1.clone();

    let mut csv =
        CsvBuilder::new(&["t", "scheme", "ee", "pfe", "ee_err", "pfe_err"]);
    for (scheme, p) in &profiles {
        for (i, &t) in p.times.iter().enumerate() {
            csv.push_row(&[
                t.to_string(),
                scheme.label().to_string(),
                p.ee[i].to_string(),
                p.pfe[i].to_string(),
                (p.ee[i] - reference.ee[i]).to_string(),
                (p.pfe[i] - reference.pfe[i]).to_string(),
            ]);
        }
        if *scheme != InterpScheme::TrueFit {
            let worst = p
                .ee
                .iter()
                .zip(&reference.ee)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            println!("  {}: max |EE error| vs true fit {worst:.2e}", scheme.label());
        }
    }
    w.describe(
        "lsm_interp.csv",
        &[
            ("t", "risk horizon in years"),
            ("scheme", "interpolation rule; true_fit is the per-horizon refit reference"),
            ("ee", "expected exposure under this scheme"),
            ("pfe", "exposure quantile under this scheme"),
            ("ee_err", "ee minus the true-fit ee at the same horizon"),
            ("pfe_err", "pfe minus the true-fit pfe at the same horizon"),
        ],
    );
    w.write_file("lsm_interp.csv", &csv.into_string())?;

    let mut ee_plot =
        Plot::new("Expected exposure by interpolation scheme", "horizon (years)", "EE");
    for (scheme, p) in &profiles {
        let pts = p.times.iter().copied().zip(p.ee.iter().copied()).collect();
        ee_plot = ee_plot.line(scheme.label(), pts);
    }
    w.write_file("lsm_interp_ee.svg", &ee_plot.render())?;

    let mut err_plot = Plot::new(
        "Expected-exposure error vs the true fit",
        "horizon (years)",
        "EE error",
    );
    for (scheme, p) in profiles.iter().skip(1) {
        let pts = p
            .times
            .iter()
            .copied()
            .zip(p.ee.iter().zip(&reference.ee).map(|(a, b)| a - b))
            .collect();
        err_plot = err_plot.line(scheme.label(), pts);
    }
    w.write_file("lsm_interp_err.svg", &err_plot.render())?;
    Ok(())
}
