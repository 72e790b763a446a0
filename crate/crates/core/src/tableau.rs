//! Butcher tableaus: the `(A, b)` data defining a Runge-Kutta method.
//!
//! Autonomous systems only, so no node vector `c` is stored. A tableau is
//! explicit iff `a[i][j] = 0` for all `j >= i`; everything else is implicit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Warn when the weights fail the first-order consistency condition by more
/// than this. Consistency affects accuracy only, never the commutation
/// theorems, so this is not an error.
pub const WEIGHT_SUM_WARN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TableauError {
    #[error("stage matrix is {rows}x{cols}, weight vector has length {weights}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        weights: usize,
    },
    #[error("declared stage count {declared} does not match the data ({actual} stages)")]
    StageCountMismatch { declared: usize, actual: usize },
    #[error("tableau must have at least one stage")]
    Empty,
    #[error("unknown method `{name}`; available: {available}")]
    UnknownMethod { name: String, available: String },
}

/// Explicit / implicit classification of a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkClass {
    Explicit,
    Implicit,
}

impl std::fmt::Display for RkClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RkClass::Explicit => write!(f, "explicit"),
            RkClass::Implicit => write!(f, "implicit"),
        }
    }
}

/// Stage matrix `A` and weights `b` of a Runge-Kutta method.
///
/// Invariants enforced at construction: `A` is square with side `b.len()`,
/// and there is at least one stage. Values are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<ButcherTableau, TableauError> {
        if b.is_empty() {
            return Err(TableauError::Empty);
        }
        let s = b.len();
        if a.len() != s || a.iter().any(|row| row.len() != s) {
            let cols = a.first().map(|r| r.len()).unwrap_or(0);
            return Err(TableauError::DimensionMismatch {
                rows: a.len(),
                cols,
                weights: s,
            });
        }
        Ok(ButcherTableau { a, b })
    }

    /// Stage count `s`.
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Explicit iff every entry on or above the diagonal is zero.
    pub fn class(&self) -> RkClass {
        for (i, row) in self.a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if j >= i && v != 0.0 {
                    return RkClass::Implicit;
                }
            }
        }
        RkClass::Explicit
    }

    pub fn is_explicit(&self) -> bool {
        self.class() == RkClass::Explicit
    }

    /// Classification and consistency report.
    pub fn validate(&self) -> ValidationReport {
        let weight_sum = {
            let mut acc = 0.0;
            for &w in &self.b {
                acc += w;
            }
            acc
        };
        let mut warnings = Vec::new();
        if (weight_sum - 1.0).abs() > WEIGHT_SUM_WARN_TOL {
            warnings.push(format!(
                "weights sum to {weight_sum}, not 1; the method is inconsistent (order 0) \
                 but still well-defined"
            ));
        }
        ValidationReport {
            dims_consistent: true,
            class: self.class(),
            weight_sum,
            warnings,
        }
    }

    pub fn from_config(config: TableauConfig) -> Result<ButcherTableau, TableauError> {
        let t = ButcherTableau::new(config.a, config.b)?;
        if config.s != t.stages() {
            return Err(TableauError::StageCountMismatch {
                declared: config.s,
                actual: t.stages(),
            });
        }
        Ok(t)
    }

    pub fn to_config(&self) -> TableauConfig {
        TableauConfig {
            s: self.stages(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

/// Result of [`ButcherTableau::validate`]. Dimension consistency is enforced
/// at construction, so `dims_consistent` is true for every live tableau;
/// loading malformed data fails in [`ButcherTableau::new`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub dims_consistent: bool,
    pub class: RkClass,
    pub weight_sum: f64,
    pub warnings: Vec<String>,
}

/// Serialized form: `{"s": .., "A": [[..]], "b": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableauConfig {
    pub s: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Builtin method names, in the order `list-tableaus` prints them.
pub const BUILTIN_METHODS: [&str; 5] = ["euler", "heun", "rk4", "implicit-midpoint", "gauss2"];

/// Returns the named builtin tableau.
pub fn builtin(name: &str) -> Result<ButcherTableau, TableauError> {
    let t = match name {
        "euler" => ButcherTableau::new(vec![vec![0.0]], vec![1.0]),
        "heun" => ButcherTableau::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
        ),
        "rk4" => ButcherTableau::new(
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        ),
        "implicit-midpoint" => ButcherTableau::new(vec![vec![0.5]], vec![1.0]),
        "gauss2" => {
            let r = 3.0_f64.sqrt() / 6.0;
            ButcherTableau::new(
                vec![vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]],
                vec![0.5, 0.5],
            )
        }
        _ => {
            return Err(TableauError::UnknownMethod {
                name: name.to_string(),
                available: BUILTIN_METHODS.join(", "),
            })
        }
    };
    Ok(t.expect("builtin tableaus are well-formed"))
}
