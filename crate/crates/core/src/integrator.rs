//! Runge-Kutta stepping: the explicit stage recursion, the implicit method
//! with a fixed number of Picard iterations, and trajectory generation.
//!
//! # Floating-point contract
//!
//! Every weighted sum in this module accumulates in ascending index order,
//! left to right, coordinate by coordinate:
//!
//! * stage points: `x[c] + h * (a[i][0]*k[0][c] + a[i][1]*k[1][c] + ...)`
//! * step combination: `x[c] + h * (b[0]*k[0][c] + b[1]*k[1][c] + ...)`
//!
//! This makes every stepper a deterministic function of its inputs, which is
//! what lets coordinate-duplicating maps commute with the discretization
//! bit-for-bit: the target-side stepper performs literally the same scalar
//! operations on each copied coordinate.
//!
//! The implicit path performs exactly `q` fixed-point iterations from the
//! seed `(X(x), ..., X(x))` with no convergence check or damping. For large
//! `h * ||A|| * Lip(X)` the iteration can diverge; choosing a step size small
//! enough for contraction is the caller's responsibility.

use thiserror::Error;

use crate::tableau::ButcherTableau;
use crate::vecfield::{FieldError, VectorField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("tableau is implicit but the explicit stepper was requested")]
    ImplicitTableau,
    #[error("step size must be finite, got {0}")]
    NonFiniteStepSize(f64),
    #[error("implicit stepping needs at least one iteration (q >= 1)")]
    ZeroIterations,
    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: FieldError },
    #[error("iteration {iteration}, stage {stage}: {source}")]
    IterationStage {
        iteration: usize,
        stage: usize,
        source: FieldError,
    },
}

/// Stage slopes: `stages[i]` is the i-th stage value, one vector of the
/// field's dimension per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageVector {
    pub stages: Vec<Vec<f64>>,
}

impl StageVector {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// How a step is computed: forward recursion, or `q` Picard iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Explicit,
    Implicit { q: u32 },
}

impl std::fmt::Display for StepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepMode::Explicit => write!(f, "explicit"),
            StepMode::Implicit { q } => write!(f, "implicit(q={q})"),
        }
    }
}

/// A fixed-step trajectory `x_0, x_1, ..., x_N` with `x_{n+1} = D(x_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub h: f64,
    pub points: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of steps taken (`points.len() - 1`).
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("trajectory holds at least x0")
    }
}

/// Integration failure; `partial` retains everything computed before the
/// failing step.
#[derive(Debug, Clone, Error)]
#[error("step {failed_step}: {source}")]
pub struct IntegrationError {
    pub failed_step: usize,
    pub partial: Trajectory,
    pub source: StepError,
}

// x[c] + h * sum_{j < upto} coeffs[j] * stages[j][c], ascending j.
fn combine(x: &[f64], h: f64, coeffs: &[f64], stages: &[Vec<f64>], upto: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for (c, &xc) in x.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..upto {
            acc += coeffs[j] * stages[j][c];
        }
        out.push(xc + h * acc);
    }
    out
}

/// Explicit stage recursion: `k_i = X(x + h * sum_{j<i} a[i][j] k_j)`,
/// computed in index order.
pub fn explicit_stages(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x: &[f64],
) -> Result<StageVector, StepError> {
    if !tableau.is_explicit() {
        return Err(StepError::ImplicitTableau);
    }
    if !h.is_finite() {
        return Err(StepError::NonFiniteStepSize(h));
    }
    let s = tableau.stages();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let point = combine(x, h, &tableau.a()[i], &stages, i);
        let k = field
            .eval(&point)
            .map_err(|source| StepError::Stage { stage: i, source })?;
        stages.push(k);
    }
    Ok(StageVector { stages })
}

/// One explicit step: `x + h * sum_i b[i] k_i`.
pub fn step_explicit(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x: &[f64],
) -> Result<Vec<f64>, StepError> {
    let ks = explicit_stages(field, tableau, h, x)?;
    Ok(combine(x, h, tableau.b(), &ks.stages, ks.len()))
}

/// `q` Picard iterations of the full stage system, seeded with
/// `(X(x), ..., X(x))`. Works for any tableau; no convergence check is
/// performed.
pub fn implicit_stages(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x: &[f64],
    q: u32,
) -> Result<StageVector, StepError> {
    if q == 0 {
        return Err(StepError::ZeroIterations);
    }
    if !h.is_finite() {
        return Err(StepError::NonFiniteStepSize(h));
    }
    let s = tableau.stages();
    let seed = field.eval(x).map_err(|source| StepError::IterationStage {
        iteration: 0,
        stage: 0,
        source,
    })?;
    let mut xi: Vec<Vec<f64>> = vec![seed; s];
    for iteration in 1..=q as usize {
        let mut next = Vec::with_capacity(s);
        for i in 0..s {
            let point = combine(x, h, &tableau.a()[i], &xi, s);
            let k = field.eval(&point).map_err(|source| StepError::IterationStage {
                iteration,
                stage: i,
                source,
            })?;
            next.push(k);
        }
        xi = next;
    }
    Ok(StageVector { stages: xi })
}

/// One implicit step: `x + h * sum_i b[i] xi_i^{(q)}`.
pub fn step_implicit(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x: &[f64],
    q: u32,
) -> Result<Vec<f64>, StepError> {
    let xi = implicit_stages(field, tableau, h, x, q)?;
    Ok(combine(x, h, tableau.b(), &xi.stages, xi.len()))
}

/// One step in either mode.
pub fn step(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x: &[f64],
    mode: StepMode,
) -> Result<Vec<f64>, StepError> {
    match mode {
        StepMode::Explicit => step_explicit(field, tableau, h, x),
        StepMode::Implicit { q } => step_implicit(field, tableau, h, x, q),
    }
}

/// Integrates `n_steps` fixed steps from `x0`.
///
/// On a stepper failure the partial trajectory and the failing step index
/// come back in the error.
pub fn integrate(
    field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    x0: &[f64],
    n_steps: usize,
    mode: StepMode,
) -> Result<Trajectory, IntegrationError> {
    if mode == StepMode::Explicit && !tableau.is_explicit() {
        return Err(IntegrationError {
            failed_step: 0,
            partial: Trajectory {
                h,
                points: vec![x0.to_vec()],
            },
            source: StepError::ImplicitTableau,
        });
    }
    let mut points = Vec::with_capacity(n_steps + 1);
    points.push(x0.to_vec());
    for n in 0..n_steps {
        match step(field, tableau, h, &points[n], mode) {
            Ok(next) => points.push(next),
            Err(source) => {
                return Err(IntegrationError {
                    failed_step: n,
                    partial: Trajectory { h, points },
                    source,
                })
            }
        }
    }
    Ok(Trajectory { h, points })
}
