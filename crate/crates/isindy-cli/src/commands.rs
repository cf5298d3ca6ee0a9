//! The four subcommands: simulate, smooth, identify, benchmark.

use std::path::Path;

use isindy::benchmarks::{add_noise, BenchmarkSystem, NoiseSpec};
use isindy::features::FeatureLibrary;
use isindy::io::{self, ModelMeta};
use isindy::odeint::{rk4_integrate, simulate_model};
use isindy::smoothing::{default_segments, smooth_dataset_with};
use isindy::solver::StlsConfig;
use isindy::types::{ObservationSet, StateMatrix, TimeGrid};

use crate::config::{Method, Resolved};
use crate::runner::{self, BenchmarkPlan, IcSweepPlan};
use crate::{CliError, Outcome};

/// Simulate a named system (or a stored model) and optionally add noise.
pub fn cmd_simulate(config: &Resolved) -> Result<Outcome, CliError> {
    config.ensure_output_dir()?;
    let (truth, labels, stem) = match (&config.system, &config.input) {
        (Some(name), _) => {
            let system = BenchmarkSystem::from_name(name)?;
            let canonical = system.grid();
            let grid = match config.time_ranges.first() {
                None => canonical,
                Some((_, end)) => {
                    let h = config.step.unwrap_or_else(|| canonical.step());
                    TimeGrid::new(0.0, h, (end / h).round() as usize + 1)?
                }
            };
            let traj = rk4_integrate(&system.field(), &system.eta(), &grid)?;
            let states = match config.time_ranges.first() {
                Some((a, b)) => {
                    let obs = ObservationSet::new(
                        traj.states.grid.clone(),
                        traj.states.values.clone(),
                        system.labels(),
                    )?;
                    let cut = obs.window(*a, *b)?;
                    StateMatrix::new(cut.grid, cut.values)
                }
                None => traj.states,
            };
            (states, system.labels(), system.name().to_string())
        }
        (None, Some(path)) => {
            let (model, _) = io::read_model(path)?;
            let (a, b) = config.time_ranges.first().copied().unwrap_or((0.0, 10.0));
            let h = config.step.unwrap_or(0.01);
            let n = ((b - a) / h).round() as usize + 1;
            let grid = TimeGrid::new(a, h, n)?;
            let traj = simulate_model(&model, &grid)?;
            let labels: Vec<String> = (1..=model.dim()).map(|i| format!("x{i}")).collect();
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .to_string();
            (traj.states, labels, stem)
        }
        (None, None) => {
            return Err(CliError::Config(
                "simulate needs --system or --input <model.json>".into(),
            ))
        }
    };
    let truth_path = config.output_dir.join(format!("{stem}_truth.csv"));
    io::write_states_csv(&truth_path, &truth, &labels)?;
    println!("{}", truth_path.display());
    for &nvr in config.nvr.iter().filter(|v| **v > 0.0) {
        let seed = config.seed.unwrap_or(1);
        let obs = add_noise(&truth, &NoiseSpec { nvr, seed });
        let obs_path = config
            .output_dir
            .join(format!("{stem}_obs_nvr{nvr}_seed{seed}.csv"));
        io::write_csv(&obs_path, &obs.grid, &obs.values, &labels)?;
        println!("{}", obs_path.display());
    }
    Ok(Outcome::Success)
}

/// Smooth an input CSV and report the chosen smoothing weights.
pub fn cmd_smooth(config: &Resolved) -> Result<Outcome, CliError> {
    config.ensure_output_dir()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("smooth needs --input <data.csv>".into()))?;
    let obs = io::read_csv(input)?;
    let segments = config
        .segments
        .first()
        .copied()
        .unwrap_or_else(|| default_segments(obs.grid.len()));
    let (states, models) = smooth_dataset_with(&obs, segments, config.execution())?;
    let out_path = config
        .output_dir
        .join(format!("{}_smoothed.csv", input_stem(input)));
    io::write_states_csv(&out_path, &states, &obs.labels)?;
    println!("{}", out_path.display());
    for (label, model) in obs.labels.iter().zip(&models) {
        println!("{label}: rho = {:.6e}, gcv = {:.6e}", model.rho, model.gcv);
    }
    Ok(Outcome::Success)
}

fn input_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_string()
}

/// Identify a sparse model from an input CSV and print its equations.
pub fn cmd_identify(config: &Resolved) -> Result<Outcome, CliError> {
    config.ensure_output_dir()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("identify needs --input <data.csv>".into()))?;
    let obs = io::read_csv(input)?;
    let d = obs.dim();
    let library = match config.library.first() {
        Some(spec) => FeatureLibrary::parse_spec(d, spec)?,
        None => isindy::features::polynomial_library(d, 3),
    };
    let lambda = config.lambda.unwrap_or(0.1);
    let segments = config
        .segments
        .first()
        .copied()
        .unwrap_or_else(|| default_segments(obs.grid.len()));
    let method = config.methods.first().copied().unwrap_or(Method::Isindy);
    let (model, rho_per_column) = match method {
        Method::Isindy => {
            let mut stls = StlsConfig::scalar(lambda);
            if let Some(tol) = config.rank_tolerance {
                stls.rank_tolerance = tol;
            }
            let exec = config.execution();
            let (smoothed, fits) = smooth_dataset_with(&obs, segments, exec)?;
            let theta = isindy::features::evaluate(&library, &smoothed)?;
            let (model, _) =
                isindy::solver::stls_identify_with(&theta, &smoothed, &library, &stls, exec)?;
            (model, Some(fits.iter().map(|f| f.rho).collect::<Vec<_>>()))
        }
        Method::Sindy => (
            isindy::benchmarks::sindy_identify(&obs, &library, &[lambda])?,
            None,
        ),
        Method::Insindy => (
            isindy::benchmarks::insindy_identify(&obs, &library, &[lambda])?,
            None,
        ),
    };
    let meta = ModelMeta {
        method: Some(method.name().to_string()),
        lambda: Some(vec![lambda]),
        rho_per_column,
        seed: config.seed,
    };
    let model_path = config.output_dir.join("model.json");
    io::write_model(&model_path, &model, &meta)?;
    print!("{}", io::render_equations(&model));
    println!("{}", model_path.display());
    Ok(Outcome::Success)
}

/// Full benchmark sweep; for the sine system with several libraries this
/// also emits the initial-condition feature study.
pub fn cmd_benchmark(config: &Resolved) -> Result<Outcome, CliError> {
    config.ensure_output_dir()?;
    let plan = BenchmarkPlan::from_config(config)?;
    let mut report = runner::run_benchmark(&plan, &config.output_dir)?;
    if plan.system == BenchmarkSystem::Sine {
        let sweep = IcSweepPlan::canonical(plan.exec);
        let extra = runner::run_ic_sweep(&sweep, &config.output_dir)?;
        if extra.outcome == Outcome::PartialFailure {
            report.outcome = Outcome::PartialFailure;
        }
        report.files.extend(extra.files);
    }
    for file in &report.files {
        println!("{}", config.output_dir.join(file).display());
    }
    Ok(report.outcome)
}
