//! Candidate feature library: monomial and trigonometric descriptors,
//! canonical ordering, and evaluation over a state matrix into the data
//! matrix fed to the integral regression.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::StateMatrix;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("library dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite value evaluating feature '{name}' at row {row}")]
    NonFinite { name: String, row: usize },
    #[error("cannot parse feature descriptor '{0}'")]
    BadDescriptor(String),
    #[error("cannot parse library spec '{0}' (expected e.g. poly:3, trig:2, poly:3+trig:2)")]
    BadSpec(String),
}

/// One candidate scalar function of the state vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureDescriptor {
    /// Product of per-variable powers; total degree >= 1 (no constant
    /// feature, the integrated regression's intercept plays that role).
    Monomial {
        exponents: Vec<u32>,
    },
    Sine {
        var: usize,
        multiple: u32,
    },
    Cosine {
        var: usize,
        multiple: u32,
    },
}

impl FeatureDescriptor {
    /// Canonical display string, e.g. `x1`, `x1^2x2`, `sin(2x1)`.
    pub fn name(&self) -> String {
        match self {
            FeatureDescriptor::Monomial { exponents } => {
                let mut s = String::new();
                for (v, &e) in exponents.iter().enumerate() {
                    if e == 1 {
                        s.push_str(&format!("x{}", v + 1));
                    } else if e > 1 {
                        s.push_str(&format!("x{}^{}", v + 1, e));
                    }
                }
                s
            }
            FeatureDescriptor::Sine { var, multiple } => trig_name("sin", *var, *multiple),
            FeatureDescriptor::Cosine { var, multiple } => trig_name("cos", *var, *multiple),
        }
    }

    /// Inverse of `name` for a given state dimension.
    pub fn parse(name: &str, d: usize) -> Result<FeatureDescriptor, FeatureError> {
        let bad = || FeatureError::BadDescriptor(name.to_string());
        if let Some(rest) = name
            .strip_prefix("sin(")
            .or_else(|| name.strip_prefix("cos("))
        {
            let inner = rest.strip_suffix(')').ok_or_else(bad)?;
            let (mult_str, var_str) = match inner.find('x') {
                Some(pos) => (&inner[..pos], &inner[pos + 1..]),
                None => return Err(bad()),
            };
            let multiple: u32 = if mult_str.is_empty() {
                1
            } else {
                mult_str.parse().map_err(|_| bad())?
            };
            let var: usize = var_str.parse::<usize>().map_err(|_| bad())?;
            if var == 0 || var > d || multiple == 0 {
                return Err(bad());
            }
            return Ok(if name.starts_with("sin") {
                FeatureDescriptor::Sine {
                    var: var - 1,
                    multiple,
                }
            } else {
                FeatureDescriptor::Cosine {
                    var: var - 1,
                    multiple,
                }
            });
        }
        let mut exponents = vec![0u32; d];
        let mut rest = name;
        while !rest.is_empty() {
            rest = rest.strip_prefix('x').ok_or_else(bad)?;
            let var_end = rest
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len());
            let var: usize = rest[..var_end].parse().map_err(|_| bad())?;
            if var == 0 || var > d {
                return Err(bad());
            }
            rest = &rest[var_end..];
            let mut exp = 1u32;
            if let Some(r) = rest.strip_prefix('^') {
                let exp_end = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
                exp = r[..exp_end].parse().map_err(|_| bad())?;
                rest = &r[exp_end..];
            }
            exponents[var - 1] += exp;
        }
        if exponents.iter().all(|&e| e == 0) {
            return Err(bad());
        }
        Ok(FeatureDescriptor::Monomial { exponents })
    }

    /// Evaluate at a single state vector.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FeatureDescriptor::Monomial { exponents } => {
                let mut acc = 1.0;
                for (v, &e) in exponents.iter().enumerate() {
                    if e > 0 {
                        acc *= x[v].powi(e as i32);
                    }
                }
                acc
            }
            FeatureDescriptor::Sine { var, multiple } => (*multiple as f64 * x[*var]).sin(),
            FeatureDescriptor::Cosine { var, multiple } => (*multiple as f64 * x[*var]).cos(),
        }
    }
}

fn trig_name(f: &str, var: usize, multiple: u32) -> String {
    if multiple == 1 {
        format!("{}(x{})", f, var + 1)
    } else {
        format!("{}({}x{})", f, multiple, var + 1)
    }
}

/// Ordered set of candidate features over a `d`-dimensional state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLibrary {
    d: usize,
    descriptors: Vec<FeatureDescriptor>,
}

impl FeatureLibrary {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn names(&self) -> Vec<String> {
        self.descriptors.iter().map(|f| f.name()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|f| f.name() == name)
    }

    /// Evaluate every descriptor at one state vector.
    pub fn eval_row(&self, x: &[f64]) -> Vec<f64> {
        self.descriptors.iter().map(|f| f.eval(x)).collect()
    }

    /// Rebuild a library from descriptor names (model deserialization).
    pub fn from_names(d: usize, names: &[String]) -> Result<FeatureLibrary, FeatureError> {
        let descriptors = names
            .iter()
            .map(|s| FeatureDescriptor::parse(s, d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureLibrary { d, descriptors })
    }

    /// Parse the config grammar: `poly:<degree>`, `trig:<max_multiple>`, or
    /// a `+`-joined combination like `poly:3+trig:2`.
    pub fn parse_spec(d: usize, spec: &str) -> Result<FeatureLibrary, FeatureError> {
        let bad = || FeatureError::BadSpec(spec.to_string());
        let mut lib: Option<FeatureLibrary> = None;
        for part in spec.split('+') {
            let (kind, arg) = part.split_once(':').ok_or_else(bad)?;
            let value: usize = arg.trim().parse().map_err(|_| bad())?;
            if value == 0 {
                return Err(bad());
            }
            let next = match kind.trim() {
                "poly" => polynomial_library(d, value),
                "trig" => trig_library(d, value),
                _ => return Err(bad()),
            };
            lib = Some(match lib {
                None => next,
                Some(prev) => combine(&prev, &next)?,
            });
        }
        lib.ok_or_else(bad)
    }
}

/// All monomials of total degree 1..=degree, degree-major and then
/// lexicographic in the variable factors (x1x1, x1x2, x1x3, x2x2, ...).
pub fn polynomial_library(d: usize, degree: usize) -> FeatureLibrary {
    assert!(d >= 1 && degree >= 1);
    let mut descriptors = Vec::new();
    for deg in 1..=degree {
        let mut combo = vec![0usize; deg]; // nondecreasing variable indices
        loop {
            let mut exponents = vec![0u32; d];
            for &v in &combo {
                exponents[v] += 1;
            }
            descriptors.push(FeatureDescriptor::Monomial { exponents });
            // next combination with repetition
            let mut pos = deg;
            while pos > 0 && combo[pos - 1] == d - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            let v = combo[pos - 1] + 1;
            for slot in combo.iter_mut().skip(pos - 1) {
                *slot = v;
            }
        }
    }
    FeatureLibrary { d, descriptors }
}

/// Sines and cosines of integer multiples of each variable, ordered by
/// variable, then multiple, sine before cosine.
pub fn trig_library(d: usize, max_multiple: usize) -> FeatureLibrary {
    assert!(d >= 1 && max_multiple >= 1);
    let mut descriptors = Vec::new();
    for var in 0..d {
        for k in 1..=max_multiple as u32 {
            descriptors.push(FeatureDescriptor::Sine { var, multiple: k });
            descriptors.push(FeatureDescriptor::Cosine { var, multiple: k });
        }
    }
    FeatureLibrary { d, descriptors }
}

/// Concatenation with duplicates removed (first occurrence kept).
pub fn combine(a: &FeatureLibrary, b: &FeatureLibrary) -> Result<FeatureLibrary, FeatureError> {
    if a.d != b.d {
        return Err(FeatureError::DimensionMismatch(a.d, b.d));
    }
    let mut descriptors = a.descriptors.clone();
    for f in &b.descriptors {
        if !descriptors.contains(f) {
            descriptors.push(f.clone());
        }
    }
    Ok(FeatureLibrary {
        d: a.d,
        descriptors,
    })
}

/// Data matrix: column `l` is descriptor `l` applied row-wise to the states.
pub fn evaluate(lib: &FeatureLibrary, states: &StateMatrix) -> Result<DMatrix<f64>, FeatureError> {
    if states.dim() != lib.d {
        return Err(FeatureError::DimensionMismatch(lib.d, states.dim()));
    }
    let n = states.values.nrows();
    let mut theta = DMatrix::zeros(n, lib.len());
    let mut x = vec![0.0f64; lib.d];
    for row in 0..n {
        for (v, slot) in x.iter_mut().enumerate() {
            *slot = states.values[(row, v)];
        }
        for (l, f) in lib.descriptors.iter().enumerate() {
            let value = f.eval(&x);
            if !value.is_finite() {
                return Err(FeatureError::NonFinite {
                    name: f.name(),
                    row,
                });
            }
            theta[(row, l)] = value;
        }
    }
    Ok(theta)
}
