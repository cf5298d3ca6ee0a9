//! Benchmark report assembly: long-format results, coefficient tables in
//! the component-block layout (eta row first, then the features in
//! canonical library order), support-recovery statistics, and trajectory
//! metrics.

use std::fmt::Write as _;
use std::path::Path;

use isindy::features::FeatureLibrary;
use isindy::types::SparseModel;

use crate::config::Method;
use crate::CliError;

/// Identification outcome for one (window, library, method, nvr, seed) cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub window: usize,
    pub library: usize,
    pub method: Method,
    pub nvr_idx: usize,
    pub seed: u64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Identified {
        model: SparseModel,
        support_exact: bool,
        /// Per-component RMSE of the re-simulated model against truth.
        rmse: Option<Vec<f64>>,
        /// First time any component strays more than 10% of the attractor
        /// diameter from truth (chaotic systems only; None = never).
        divergence_time: Option<f64>,
    },
    Failed(String),
}

impl Cell {
    pub fn failed(&self) -> bool {
        matches!(self.outcome, Outcome::Failed(_))
    }
}

/// Ordering key making report assembly deterministic regardless of the
/// execution schedule.
fn cell_key(c: &Cell) -> (usize, usize, usize, usize, u64) {
    let method_rank = Method::ALL.iter().position(|m| *m == c.method).unwrap();
    (c.window, c.library, method_rank, c.nvr_idx, c.seed)
}

pub fn sort_cells(cells: &mut [Cell]) {
    cells.sort_by_key(cell_key);
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Rows of the coefficient table for one component block: eta first, then
/// every feature in canonical order.
fn block_rows(library: &FeatureLibrary, component: usize) -> Vec<String> {
    let mut rows = vec![format!("eta{}", component + 1)];
    rows.extend(library.names());
    rows
}

/// Block-layout coefficient table for one (window, library): columns are
/// method x nvr, cells are means over the succeeding seeds (`FAIL(...)` if
/// every seed failed).
pub fn coefficient_table(
    cells: &[Cell],
    library: &FeatureLibrary,
    d: usize,
    methods: &[Method],
    nvr_levels: &[f64],
) -> String {
    let mut out = String::new();
    out.push_str("component,term");
    for method in methods {
        for nvr in nvr_levels {
            let _ = write!(out, ",{}_nvr{}", method.name(), nvr);
        }
    }
    out.push('\n');
    for comp in 0..d {
        for (row_idx, row_name) in block_rows(library, comp).iter().enumerate() {
            let _ = write!(out, "{},{}", comp + 1, row_name);
            for method in methods {
                for nvr_idx in 0..nvr_levels.len() {
                    let group: Vec<&Cell> = cells
                        .iter()
                        .filter(|c| c.method == *method && c.nvr_idx == nvr_idx)
                        .collect();
                    let mut values = Vec::new();
                    let mut last_error = None;
                    for cell in &group {
                        match &cell.outcome {
                            Outcome::Identified { model, .. } => {
                                let v = if row_idx == 0 {
                                    model.eta[comp]
                                } else {
                                    model.xi[(row_idx - 1, comp)]
                                };
                                values.push(v);
                            }
                            Outcome::Failed(message) => last_error = Some(message.clone()),
                        }
                    }
                    if values.is_empty() {
                        let reason = last_error.unwrap_or_else(|| "no cells".into());
                        let _ = write!(out, ",FAIL({reason})");
                    } else {
                        let mean = values.iter().sum::<f64>() / values.len() as f64;
                        let _ = write!(out, ",{}", fmt4(mean));
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Support-recovery fractions per (method, nvr).
pub fn support_recovery_table(cells: &[Cell], methods: &[Method], nvr_levels: &[f64]) -> String {
    let mut out = String::from("method,nvr,exact_support,identified,seeds\n");
    for method in methods {
        for (nvr_idx, nvr) in nvr_levels.iter().enumerate() {
            let group: Vec<&Cell> = cells
                .iter()
                .filter(|c| c.method == *method && c.nvr_idx == nvr_idx)
                .collect();
            let total = group.len();
            let identified = group.iter().filter(|c| !c.failed()).count();
            let exact = group
                .iter()
                .filter(|c| {
                    matches!(
                        &c.outcome,
                        Outcome::Identified {
                            support_exact: true,
                            ..
                        }
                    )
                })
                .count();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                method.name(),
                nvr,
                exact,
                identified,
                total
            );
        }
    }
    out
}

/// Long-format metrics: one row per cell.
pub fn metrics_table(cells: &[Cell], nvr_levels: &[f64], labels: &[String]) -> String {
    let mut out = String::from("window,library,method,nvr,seed,status,support_exact");
    for label in labels {
        let _ = write!(out, ",rmse_{label}");
    }
    out.push_str(",divergence_time\n");
    for cell in cells {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            cell.window,
            cell.library,
            cell.method.name(),
            nvr_levels[cell.nvr_idx],
            cell.seed
        );
        match &cell.outcome {
            Outcome::Identified {
                support_exact,
                rmse,
                divergence_time,
                ..
            } => {
                let _ = write!(out, ",ok,{support_exact}");
                match rmse {
                    Some(values) => {
                        for v in values {
                            let _ = write!(out, ",{}", fmt4(*v));
                        }
                    }
                    None => {
                        for _ in labels {
                            out.push(',');
                        }
                    }
                }
                match divergence_time {
                    Some(t) => {
                        let _ = write!(out, ",{}", fmt4(*t));
                    }
                    None => out.push(','),
                }
            }
            Outcome::Failed(message) => {
                let clean = message.replace(',', ";");
                let _ = write!(out, ",FAIL({clean}),");
                for _ in labels {
                    out.push(',');
                }
                out.push(',');
            }
        }
        out.push('\n');
    }
    out
}

/// One feature-design study block: library spec, the library itself, and
/// the per-initial-condition outcomes.
pub type SweepBlock = (String, FeatureLibrary, Vec<(f64, Option<SparseModel>)>);

/// Initial-condition sweep table (the feature-design study): one block per
/// library, columns are the initial conditions.
pub fn ic_sweep_table(blocks: &[SweepBlock]) -> String {
    let mut out = String::new();
    for (spec, library, runs) in blocks {
        let _ = write!(out, "library:{spec},term");
        for (ic, _) in runs {
            let _ = write!(out, ",ic_{ic}");
        }
        out.push('\n');
        for (row_idx, row_name) in block_rows(library, 0).iter().enumerate() {
            let _ = write!(out, ",{row_name}");
            for (_, model) in runs {
                match model {
                    Some(m) => {
                        let v = if row_idx == 0 {
                            m.eta[0]
                        } else {
                            m.xi[(row_idx - 1, 0)]
                        };
                        let _ = write!(out, ",{}", fmt4(v));
                    }
                    None => out.push_str(",FAIL"),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)?;
    Ok(())
}
