//! The Monte Carlo benchmark runner: lays out the (window x library x
//! method x nvr x seed) grid, executes cells concurrently, and assembles
//! the report files.

use std::path::Path;

use isindy::benchmarks::{
    add_noise, insindy_identify, isindy_identify_config, sindy_identify, BenchmarkSystem, NoiseSpec,
};
use isindy::exec::{map_indexed, Execution};
use isindy::features::FeatureLibrary;
use isindy::odeint::{rk4_integrate, simulate_model};
use isindy::smoothing::default_segments;
use isindy::solver::StlsConfig;
use isindy::types::{ObservationSet, SparseModel, StateMatrix, TimeGrid};

use crate::config::{Method, Resolved};
use crate::report::{self, Cell, Outcome};
use crate::svg::{self, Overlay};
use crate::{CliError, Outcome as RunOutcome};

pub struct BenchmarkPlan {
    pub system: BenchmarkSystem,
    pub libraries: Vec<(String, FeatureLibrary)>,
    pub windows: Vec<Option<(f64, f64)>>,
    pub methods: Vec<Method>,
    pub nvr_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    /// One entry applies everywhere; several entries map onto the windows.
    pub segments: Vec<usize>,
    pub rank_tolerance: Option<f64>,
    pub exec: Execution,
}

impl BenchmarkPlan {
    pub fn from_config(config: &Resolved) -> Result<BenchmarkPlan, CliError> {
        let system = BenchmarkSystem::from_name(
            config
                .system
                .as_deref()
                .ok_or_else(|| CliError::Config("benchmark needs --system".into()))?,
        )?;
        let libraries: Vec<(String, FeatureLibrary)> = if config.library.is_empty() {
            vec![("canonical".into(), system.library())]
        } else {
            config
                .library
                .iter()
                .map(|spec| {
                    Ok((
                        spec.clone(),
                        FeatureLibrary::parse_spec(system.dim(), spec)?,
                    ))
                })
                .collect::<Result<_, CliError>>()?
        };
        let windows: Vec<Option<(f64, f64)>> = if config.time_ranges.is_empty() {
            vec![None]
        } else {
            config.time_ranges.iter().map(|w| Some(*w)).collect()
        };
        let methods = if config.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            config.methods.clone()
        };
        let nvr_levels = if config.nvr.is_empty() {
            system.nvr_levels()
        } else {
            config.nvr.clone()
        };
        let seeds = if config.seeds.is_empty() {
            vec![1]
        } else {
            config.seeds.clone()
        };
        if config.segments.len() > 1 && config.segments.len() != windows.len() {
            return Err(CliError::Config(format!(
                "--segments lists {} values for {} windows",
                config.segments.len(),
                windows.len()
            )));
        }
        Ok(BenchmarkPlan {
            system,
            libraries,
            windows,
            methods,
            nvr_levels,
            seeds,
            lambda: config.lambda.unwrap_or_else(|| system.lambda()),
            segments: config.segments.clone(),
            rank_tolerance: config.rank_tolerance,
            exec: config.execution(),
        })
    }
}

/// Truth over the full span needed to cover a window (windows may start
/// after the canonical range ends).
fn truth_for_window(
    system: BenchmarkSystem,
    window: Option<(f64, f64)>,
) -> Result<StateMatrix, CliError> {
    let canonical = system.grid();
    let grid = match window {
        None => canonical,
        Some((_, end)) => {
            let h = canonical.step();
            let n = ((end / h).round() as usize) + 1;
            TimeGrid::new(0.0, h, n.max(canonical.len()))?
        }
    };
    let traj = rk4_integrate(&system.field(), &system.eta(), &grid)?;
    Ok(traj.states)
}

fn identify_one(
    method: Method,
    obs: &ObservationSet,
    library: &FeatureLibrary,
    lambda: f64,
    segments: usize,
    rank_tolerance: Option<f64>,
) -> Result<SparseModel, CliError> {
    match method {
        Method::Isindy => {
            let mut config = StlsConfig::scalar(lambda);
            if let Some(tol) = rank_tolerance {
                config.rank_tolerance = tol;
            }
            // cells already run concurrently; keep the inner pipeline serial
            let (model, _) =
                isindy_identify_config(obs, library, &config, segments, Execution::Sequential)?;
            Ok(model)
        }
        Method::Sindy => Ok(sindy_identify(obs, library, &[lambda])?),
        Method::Insindy => Ok(insindy_identify(obs, library, &[lambda])?),
    }
}

/// Trajectory metrics against truth: per-component RMSE and, for chaotic
/// systems, the first time any component strays beyond 10% of the
/// attractor diameter.
fn trajectory_metrics(
    model: &SparseModel,
    truth: &StateMatrix,
    chaotic: bool,
) -> (Option<Vec<f64>>, Option<f64>) {
    let sim = match simulate_model(model, &truth.grid) {
        Ok(traj) => traj.states,
        Err(_) => return (None, None),
    };
    let n = truth.values.nrows();
    let d = truth.values.ncols();
    let rmse: Vec<f64> = (0..d)
        .map(|comp| {
            let mut acc = 0.0;
            for k in 0..n {
                let diff = sim.values[(k, comp)] - truth.values[(k, comp)];
                acc += diff * diff;
            }
            (acc / n as f64).sqrt()
        })
        .collect();
    let divergence = if chaotic {
        let mut diameter = 0.0f64;
        for comp in 0..d {
            let col = truth.values.column(comp);
            diameter = diameter.max(col.max() - col.min());
        }
        let threshold = 0.1 * diameter;
        let mut cross = None;
        'outer: for k in 0..n {
            for comp in 0..d {
                if (sim.values[(k, comp)] - truth.values[(k, comp)]).abs() > threshold {
                    cross = Some(truth.grid.time(k));
                    break 'outer;
                }
            }
        }
        cross
    } else {
        None
    };
    (Some(rmse), divergence)
}

pub struct BenchmarkReportFiles {
    pub outcome: RunOutcome,
    pub files: Vec<String>,
}

pub fn run_benchmark(
    plan: &BenchmarkPlan,
    out_dir: &Path,
) -> Result<BenchmarkReportFiles, CliError> {
    let system = plan.system;
    let truth_model = system.true_model();
    let labels = system.labels();
    let mut files = Vec::new();

    // windowed truths computed once
    let mut window_truths = Vec::new();
    for window in &plan.windows {
        let full = truth_for_window(system, *window)?;
        let windowed = match window {
            None => full,
            Some((a, b)) => {
                let obs =
                    ObservationSet::new(full.grid.clone(), full.values.clone(), labels.clone())?;
                let cut = obs.window(*a, *b)?;
                StateMatrix::new(cut.grid, cut.values)
            }
        };
        window_truths.push(windowed);
    }

    // cell grid
    struct Job {
        window: usize,
        library: usize,
        method: Method,
        nvr_idx: usize,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for window in 0..plan.windows.len() {
        for library in 0..plan.libraries.len() {
            for method in &plan.methods {
                for nvr_idx in 0..plan.nvr_levels.len() {
                    for &seed in &plan.seeds {
                        jobs.push(Job {
                            window,
                            library,
                            method: *method,
                            nvr_idx,
                            seed,
                        });
                    }
                }
            }
        }
    }

    let cells: Vec<Cell> = map_indexed(plan.exec, jobs.len(), |idx| {
        let job = &jobs[idx];
        let truth = &window_truths[job.window];
        let library = &plan.libraries[job.library].1;
        let nvr = plan.nvr_levels[job.nvr_idx];
        let obs = add_noise(
            truth,
            &NoiseSpec {
                nvr,
                seed: job.seed,
            },
        );
        let segments = match plan.segments.len() {
            0 => {
                if plan.windows[job.window].is_none() {
                    system.segments()
                } else {
                    default_segments(truth.values.nrows())
                }
            }
            1 => plan.segments[0],
            _ => plan.segments[job.window],
        };
        let outcome = match identify_one(
            job.method,
            &obs,
            library,
            plan.lambda,
            segments,
            plan.rank_tolerance,
        ) {
            Ok(model) => {
                let support_exact = library == &truth_model.library
                    && (0..model.dim()).all(|i| model.support[i] == truth_model.support[i]);
                let (rmse, divergence_time) =
                    trajectory_metrics(&model, truth, system.is_chaotic());
                Outcome::Identified {
                    model,
                    support_exact,
                    rmse,
                    divergence_time,
                }
            }
            Err(e) => Outcome::Failed(e.to_string()),
        };
        Cell {
            window: job.window,
            library: job.library,
            method: job.method,
            nvr_idx: job.nvr_idx,
            seed: job.seed,
            outcome,
        }
    });
    let mut cells = cells;
    report::sort_cells(&mut cells);
    let any_failed = cells.iter().any(|c| c.failed());

    // per (window, library) coefficient tables
    for window in 0..plan.windows.len() {
        for library in 0..plan.libraries.len() {
            let subset: Vec<Cell> = cells
                .iter()
                .filter(|c| c.window == window && c.library == library)
                .cloned()
                .collect();
            let table = report::coefficient_table(
                &subset,
                &plan.libraries[library].1,
                system.dim(),
                &plan.methods,
                &plan.nvr_levels,
            );
            let suffix = table_suffix(plan, window, library);
            let name = format!("table_{}{suffix}.csv", system.name());
            report::write_text(&out_dir.join(&name), &table)?;
            files.push(name);

            let recovery = report::support_recovery_table(&subset, &plan.methods, &plan.nvr_levels);
            let name = format!("support_recovery_{}{suffix}.csv", system.name());
            report::write_text(&out_dir.join(&name), &recovery)?;
            files.push(name);
        }
    }

    // long-format metrics over everything
    let metrics = report::metrics_table(&cells, &plan.nvr_levels, &labels);
    let name = format!("metrics_{}.csv", system.name());
    report::write_text(&out_dir.join(&name), &metrics)?;
    files.push(name);

    // overlay plots: first seed of each (window, first library, isindy-or-first method, nvr)
    let plot_method = plan.methods.first().copied().unwrap_or(Method::Isindy);
    for (window, truth) in window_truths.iter().enumerate() {
        for nvr_idx in 0..plan.nvr_levels.len() {
            let cell = cells.iter().find(|c| {
                c.window == window
                    && c.library == 0
                    && c.method == plot_method
                    && c.nvr_idx == nvr_idx
                    && c.seed == plan.seeds[0]
            });
            let Some(cell) = cell else { continue };
            let nvr = plan.nvr_levels[nvr_idx];
            let obs = add_noise(
                truth,
                &NoiseSpec {
                    nvr,
                    seed: cell.seed,
                },
            );
            let obs_states = StateMatrix::new(obs.grid.clone(), obs.values.clone());
            let identified = match &cell.outcome {
                Outcome::Identified { model, .. } => simulate_model(model, &truth.grid).ok(),
                Outcome::Failed(_) => None,
            };
            let suffix = table_suffix(plan, window, 0);
            let name = format!("plot_{}{suffix}_nvr{}.svg", system.name(), nvr);
            svg::write_overlay(
                &out_dir.join(&name),
                &Overlay {
                    truth,
                    identified: identified.as_ref().map(|t| &t.states),
                    observations: if nvr > 0.0 { Some(&obs_states) } else { None },
                    labels: &labels,
                },
            )?;
            files.push(name);
        }
    }

    let outcome = if any_failed {
        RunOutcome::PartialFailure
    } else {
        RunOutcome::Success
    };
    Ok(BenchmarkReportFiles { outcome, files })
}

fn table_suffix(plan: &BenchmarkPlan, window: usize, library: usize) -> String {
    let mut suffix = String::new();
    if let Some((a, b)) = plan.windows[window] {
        suffix.push_str(&format!("_t{a}-{b}"));
    }
    if plan.libraries.len() > 1 {
        suffix.push_str(&format!(
            "_{}",
            plan.libraries[library].0.replace(':', "").replace('+', "_")
        ));
    }
    suffix
}

/// The initial-condition sweep study over several candidate libraries
/// (runs only for the one-dimensional sine system).
pub struct IcSweepPlan {
    pub system: BenchmarkSystem,
    pub libraries: Vec<(String, FeatureLibrary, f64, f64)>, // spec, lib, lambda, rank_tol
    pub ics: Vec<f64>,
    pub exec: Execution,
}

impl IcSweepPlan {
    /// The canonical feature-design study: four libraries, initial
    /// conditions -1.0..1.0 in steps of 0.2 excluding 0.
    pub fn canonical(exec: Execution) -> IcSweepPlan {
        let d = 1;
        let poly3 = FeatureLibrary::parse_spec(d, "poly:3").unwrap();
        let poly5 = FeatureLibrary::parse_spec(d, "poly:5").unwrap();
        let trig2 = FeatureLibrary::parse_spec(d, "trig:2").unwrap();
        let combo = FeatureLibrary::parse_spec(d, "poly:3+trig:2").unwrap();
        let ics: Vec<f64> = (-5..=5)
            .filter(|k| *k != 0)
            .map(|k| k as f64 * 0.2)
            .collect();
        IcSweepPlan {
            system: BenchmarkSystem::Sine,
            libraries: vec![
                ("poly:3".into(), poly3, 0.005, 1e-10),
                ("poly:5".into(), poly5, 0.005, 1e-10),
                ("trig:2".into(), trig2, 0.05, 1e-10),
                ("poly:3+trig:2".into(), combo, 0.8, 1e-12),
            ],
            ics,
            exec,
        }
    }
}

pub fn run_ic_sweep(plan: &IcSweepPlan, out_dir: &Path) -> Result<BenchmarkReportFiles, CliError> {
    let system = plan.system;
    let grid = system.grid();
    let segments = system.segments();
    let mut blocks = Vec::new();
    let mut any_failed = false;
    for (spec, library, lambda, rank_tol) in &plan.libraries {
        let runs: Vec<(f64, Option<SparseModel>)> = map_indexed(plan.exec, plan.ics.len(), |i| {
            let ic = plan.ics[i];
            let run = || -> Result<SparseModel, CliError> {
                let traj = rk4_integrate(&system.field(), &[ic], &grid)?;
                let obs = ObservationSet::new(
                    traj.states.grid.clone(),
                    traj.states.values.clone(),
                    system.labels(),
                )?;
                let mut config = StlsConfig::scalar(*lambda);
                config.rank_tolerance = *rank_tol;
                let (model, _) = isindy_identify_config(
                    &obs,
                    library,
                    &config,
                    segments,
                    Execution::Sequential,
                )?;
                Ok(model)
            };
            (ic, run().ok())
        });
        any_failed |= runs.iter().any(|(_, m)| m.is_none());
        blocks.push((spec.clone(), library.clone(), runs));
    }
    let table = report::ic_sweep_table(&blocks);
    let name = format!("feature_study_{}.csv", system.name());
    report::write_text(&out_dir.join(&name), &table)?;
    Ok(BenchmarkReportFiles {
        outcome: if any_failed {
            RunOutcome::PartialFailure
        } else {
            RunOutcome::Success
        },
        files: vec![name],
    })
}
