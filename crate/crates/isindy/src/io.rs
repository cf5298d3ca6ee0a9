//! Dataset CSV and model JSON serialization.
//!
//! CSV layout: header `t,<name1>,...,<named>`, one row per sample, floats
//! written with 17 significant digits so values round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, FeatureLibrary};
use crate::types::{DataError, ObservationSet, SparseModel, StateMatrix, TimeGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model json: {0}")]
    ModelJson(#[from] serde_json::Error),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("model json: xi has {got} rows, library has {expected} descriptors")]
    XiShape { expected: usize, got: usize },
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a trajectory or observation matrix in the shared CSV format.
pub fn write_csv(
    path: &Path,
    grid: &TimeGrid,
    values: &DMatrix<f64>,
    labels: &[String],
) -> Result<(), IoError> {
    let mut out = String::new();
    out.push('t');
    for label in labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for k in 0..grid.len() {
        let _ = write!(out, "{}", fmt_float(grid.time(k)));
        for col in 0..values.ncols() {
            let _ = write!(out, ",{}", fmt_float(values[(k, col)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Read the shared CSV format back into an observation set (validating the
/// uniform grid and finiteness).
pub fn read_csv(path: &Path) -> Result<ObservationSet, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IoError::Csv {
        line: 1,
        message: "empty file".into(),
    })?;
    let mut fields = header.split(',');
    let first = fields.next().unwrap_or_default();
    if first != "t" {
        return Err(IoError::Csv {
            line: 1,
            message: format!("header must start with 't', got '{first}'"),
        });
    }
    let labels: Vec<String> = fields.map(|s| s.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(IoError::Csv {
            line: 1,
            message: "no variable columns".into(),
        });
    }
    let mut times = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| IoError::Csv {
                line: idx + 1,
                message: format!("bad time value: {e}"),
            })?;
        times.push(t);
        let mut count = 0;
        for part in parts {
            let v: f64 = part.trim().parse().map_err(|e| IoError::Csv {
                line: idx + 1,
                message: format!("bad value: {e}"),
            })?;
            data.push(v);
            count += 1;
        }
        if count != labels.len() {
            return Err(IoError::Csv {
                line: idx + 1,
                message: format!("expected {} values, got {count}", labels.len()),
            });
        }
    }
    if times.len() < 3 {
        return Err(IoError::Data(DataError::TooShort { n: times.len() }));
    }
    let values = DMatrix::from_row_iterator(times.len(), labels.len(), data);
    Ok(ObservationSet::from_samples(&times, values, labels)?)
}

pub fn write_states_csv(
    path: &Path,
    states: &StateMatrix,
    labels: &[String],
) -> Result<(), IoError> {
    write_csv(path, &states.grid, &states.values, labels)
}

/// Run provenance carried inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelMeta {
    pub method: Option<String>,
    pub lambda: Option<Vec<f64>>,
    pub rho_per_column: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

/// On-disk model schema. `xi` is stored row-major, m rows of d entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelJson {
    d: usize,
    library: Vec<String>,
    xi: Vec<Vec<f64>>,
    eta: Vec<f64>,
    eta_assumed: bool,
    meta: ModelMeta,
}

pub fn model_to_json(model: &SparseModel, meta: &ModelMeta) -> String {
    let m = model.xi.nrows();
    let d = model.xi.ncols();
    let record = ModelJson {
        d,
        library: model.library.names(),
        xi: (0..m)
            .map(|r| (0..d).map(|c| model.xi[(r, c)]).collect())
            .collect(),
        eta: model.eta.iter().copied().collect(),
        eta_assumed: model.eta_assumed,
        meta: meta.clone(),
    };
    serde_json::to_string_pretty(&record).expect("model serialization cannot fail") + "\n"
}

pub fn model_from_json(text: &str) -> Result<(SparseModel, ModelMeta), IoError> {
    let record: ModelJson = serde_json::from_str(text)?;
    let library = FeatureLibrary::from_names(record.d, &record.library)?;
    if record.xi.len() != library.len() {
        return Err(IoError::XiShape {
            expected: library.len(),
            got: record.xi.len(),
        });
    }
    let mut xi = DMatrix::zeros(library.len(), record.d);
    for (r, row) in record.xi.iter().enumerate() {
        if row.len() != record.d {
            return Err(IoError::XiShape {
                expected: record.d,
                got: row.len(),
            });
        }
        for (c, &v) in row.iter().enumerate() {
            xi[(r, c)] = v;
        }
    }
    let eta = DVector::from_vec(record.eta);
    Ok((
        SparseModel::new(library, xi, eta, record.eta_assumed),
        record.meta,
    ))
}

pub fn write_model(path: &Path, model: &SparseModel, meta: &ModelMeta) -> Result<(), IoError> {
    fs::write(path, model_to_json(model, meta)).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_model(path: &Path) -> Result<(SparseModel, ModelMeta), IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    model_from_json(&text)
}

/// Human-readable equations in the 4-decimal display style, e.g.
/// `dx1/dt = 1.6000*x1 - 1.0000*x1^2`.
pub fn render_equations(model: &SparseModel) -> String {
    let names = model.library.names();
    let mut out = String::new();
    for i in 0..model.dim() {
        let _ = write!(out, "dx{}/dt =", i + 1);
        let mut first = true;
        for &j in &model.support[i] {
            let coeff = model.xi[(j, i)];
            if first {
                let _ = write!(out, " {:.4}*{}", coeff, names[j]);
                first = false;
            } else if coeff < 0.0 {
                let _ = write!(out, " - {:.4}*{}", -coeff, names[j]);
            } else {
                let _ = write!(out, " + {:.4}*{}", coeff, names[j]);
            }
        }
        if first {
            out.push_str(" 0");
        }
        out.push('\n');
    }
    for i in 0..model.dim() {
        let _ = write!(out, "x{}(0) = {:.4}", i + 1, model.eta[i]);
        if model.eta_assumed {
            out.push_str(" (assumed)");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::polynomial_library;
    use std::path::PathBuf;

    fn temp_path(name: &str) -> PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("isindy-io-test-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let values = DMatrix::from_fn(50, 2, |r, c| ((r * 2 + c) as f64 * 0.7133).sin() / 3.0);
        let path = temp_path("roundtrip.csv");
        write_csv(&path, &grid, &values, &["x1".into(), "x2".into()]).unwrap();
        let obs = read_csv(&path).unwrap();
        assert_eq!(obs.labels, vec!["x1", "x2"]);
        assert_eq!(obs.grid.len(), 50);
        for (a, b) in obs.values.iter().zip(values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let _ = fs::remove_file(path);
    }

    #[test]
    fn model_json_round_trip_byte_identical() {
        let lib = polynomial_library(2, 2);
        let mut xi = DMatrix::zeros(5, 2);
        xi[(0, 0)] = 2.0 / 3.0;
        xi[(3, 0)] = -4.0 / 3.0;
        xi[(1, 1)] = -1.0;
        xi[(3, 1)] = 1.0;
        let model = SparseModel::new(lib, xi, DVector::from_vec(vec![1.8, 1.8]), false);
        let meta = ModelMeta {
            method: Some("isindy".into()),
            lambda: Some(vec![0.3]),
            rho_per_column: Some(vec![6.1e-6, 6.1e-6]),
            seed: None,
        };
        let first = model_to_json(&model, &meta);
        let (parsed, meta2) = model_from_json(&first).unwrap();
        let second = model_to_json(&parsed, &meta2);
        assert_eq!(first, second);
        assert_eq!(parsed.support, model.support);
    }

    #[test]
    fn equations_render_in_paper_style() {
        let lib = polynomial_library(1, 3);
        let mut xi = DMatrix::zeros(3, 1);
        xi[(0, 0)] = 1.6;
        xi[(1, 0)] = -1.0;
        let model = SparseModel::new(lib, xi, DVector::from_element(1, 0.1), false);
        let text = render_equations(&model);
        assert!(
            text.contains("dx1/dt = 1.6000*x1 - 1.0000*x1^2"),
            "got: {text}"
        );
        assert!(text.contains("x1(0) = 0.1000"), "got: {text}");
    }

    #[test]
    fn header_must_lead_with_time() {
        let path = temp_path("badheader.csv");
        fs::write(&path, "x,t\n1,2\n3,4\n5,6\n").unwrap();
        assert!(matches!(read_csv(&path), Err(IoError::Csv { line: 1, .. })));
        let _ = fs::remove_file(path);
    }

    #[test]
    fn empty_csv_reports_too_short() {
        let path = temp_path("empty.csv");
        fs::write(&path, "t,x1\n").unwrap();
        assert!(matches!(
            read_csv(&path),
            Err(IoError::Data(DataError::TooShort { .. }))
        ));
        let _ = fs::remove_file(path);
    }
}
