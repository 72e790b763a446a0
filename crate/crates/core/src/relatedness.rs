//! Discrete commutation residuals and paired-trajectory experiments.
//!
//! For an affine map `f(x) = Lx + p` relating the fields `X` and `Y`, every
//! Runge-Kutta stepper satisfies `D_Y(f(x)) = L D_X(x) + p` in exact
//! arithmetic. [`discrete_residual`] measures the l1 gap between the two
//! sides in floating point; [`trajectory_commute`] iterates both systems and
//! records the per-step gap `||y_n - f(x_n)||_1`.
//!
//! Exactness comes in two tiers. Maps that only copy coordinates around make
//! the two sides execute identical scalar operation sequences, so their
//! residual is exactly zero ([`ExactnessTier::BitExact`]). General affine
//! maps compute algebraically equal values along differently rounded paths,
//! so their per-step residual is merely small ([`ExactnessTier::Rounded`]).

use thiserror::Error;

use crate::integrator::{step, StepError, StepMode};
use crate::tableau::ButcherTableau;
use crate::vecfield::{
    l1_distance, AffineMap, FieldError, NonAffineMap, SystemMap, VectorField,
};

/// Which system of the pair an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::X => write!(f, "X-side"),
            Side::Y => write!(f, "Y-side"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommuteError {
    #[error("applying the map: {0}")]
    Map(#[from] FieldError),
    #[error("{side} field: {source}")]
    Field { side: Side, source: FieldError },
    #[error("{side}, step {step}: {source}")]
    Step {
        side: Side,
        step: usize,
        source: StepError,
    },
}

/// `||D_Y(f(x)) - (L D_X(x) + p)||_1` for one step from `x`.
pub fn discrete_residual(
    f: &AffineMap,
    x_field: &VectorField,
    y_field: &VectorField,
    tableau: &ButcherTableau,
    h: f64,
    mode: StepMode,
    x: &[f64],
) -> Result<f64, CommuteError> {
    let fx = f.apply(x)?;
    let dy = step(y_field, tableau, h, &fx, mode).map_err(|source| CommuteError::Step {
        side: Side::Y,
        step: 0,
        source,
    })?;
    let dx = step(x_field, tableau, h, x, mode).map_err(|source| CommuteError::Step {
        side: Side::X,
        step: 0,
        source,
    })?;
    let f_dx = f.apply(&dx)?;
    Ok(l1_distance(&dy, &f_dx))
}

/// `||Y(f(x)) - Tf_x X(x)||_1`: the continuous relatedness residual for a
/// non-affine map, via its Jacobian-vector product.
pub fn nonaffine_pushforward_residual(
    fnl: &NonAffineMap,
    x_field: &VectorField,
    y_field: &VectorField,
    x: &[f64],
) -> Result<f64, CommuteError> {
    let fx = fnl.apply(x)?;
    let y_at_fx = y_field.eval(&fx).map_err(|source| CommuteError::Field {
        side: Side::Y,
        source,
    })?;
    let x_at_x = x_field.eval(x).map_err(|source| CommuteError::Field {
        side: Side::X,
        source,
    })?;
    let pushed = fnl.pushforward(x, &x_at_x)?;
    Ok(l1_distance(&y_at_fx, &pushed))
}

/// A scalar function of the target state, recorded alongside an experiment
/// (e.g. the defining equation of an invariant manifold).
#[derive(Clone)]
pub struct Constraint {
    pub label: String,
    f: std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constraint").field("label", &self.label).finish()
    }
}

impl Constraint {
    pub fn new<F>(label: impl Into<String>, f: F) -> Constraint
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Constraint {
            label: label.into(),
            f: std::sync::Arc::new(f),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }
}

/// Paired trajectories and their per-step commutation residuals.
///
/// `y_points` starts at `f(x0)`, so `residuals[0]` is exactly zero by
/// construction. All series have length `steps + 1`.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub h: f64,
    pub tableau_name: String,
    pub mode: StepMode,
    pub x_points: Vec<Vec<f64>>,
    /// `f(x_n)` for each step.
    pub mapped_points: Vec<Vec<f64>>,
    pub y_points: Vec<Vec<f64>>,
    /// `r_n = ||y_n - f(x_n)||_1`.
    pub residuals: Vec<f64>,
    /// `|c(y_n)|` when a constraint was supplied.
    pub constraint_values: Option<Vec<f64>>,
}

impl ExperimentRecord {
    pub fn steps(&self) -> usize {
        self.x_points.len().saturating_sub(1)
    }

    pub fn max_residual(&self) -> f64 {
        let mut max = 0.0;
        for &r in &self.residuals {
            if r > max {
                max = r;
            }
        }
        max
    }

    /// Index of the first strictly nonzero residual, if any.
    pub fn first_nonzero_residual(&self) -> Option<usize> {
        self.residuals.iter().position(|&r| r != 0.0)
    }
}

/// A failed paired run; everything computed before the failure is kept.
#[derive(Debug, Clone, Error)]
#[error("{side} failed at step {failed_step}: {source}")]
pub struct CommuteFailure {
    pub partial: ExperimentRecord,
    pub failed_step: usize,
    pub side: Side,
    pub source: StepError,
}

/// Wrapper error for [`trajectory_commute`]: setup problems or a mid-run
/// stepper failure.
#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("applying the map: {0}")]
    Map(#[from] FieldError),
    #[error(transparent)]
    Failed(#[from] Box<CommuteFailure>),
}

/// Integrates `X` from `x0` and `Y` from `f(x0)` for `n_steps` steps,
/// recording the residual series and optional constraint values.
pub fn trajectory_commute(
    f: &AffineMap,
    x_field: &VectorField,
    y_field: &VectorField,
    tableau: &ButcherTableau,
    tableau_name: &str,
    h: f64,
    mode: StepMode,
    x0: &[f64],
    n_steps: usize,
    constraint: Option<&Constraint>,
) -> Result<ExperimentRecord, TrajectoryError> {
    trajectory_pair(
        &SystemMap::Affine(f.clone()),
        x_field,
        y_field,
        tableau,
        tableau_name,
        h,
        mode,
        x0,
        n_steps,
        constraint,
    )
}

/// The engine behind [`trajectory_commute`], generalized over affine and
/// non-affine maps. For non-affine maps the residual series is a diagnostic,
/// not a theorem: nothing forces it towards zero.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_pair(
    map: &SystemMap,
    x_field: &VectorField,
    y_field: &VectorField,
    tableau: &ButcherTableau,
    tableau_name: &str,
    h: f64,
    mode: StepMode,
    x0: &[f64],
    n_steps: usize,
    constraint: Option<&Constraint>,
) -> Result<ExperimentRecord, TrajectoryError> {
    let y0 = map.apply(x0)?;
    let mut record = ExperimentRecord {
        h,
        tableau_name: tableau_name.to_string(),
        mode,
        x_points: vec![x0.to_vec()],
        mapped_points: vec![y0.clone()],
        y_points: vec![y0.clone()],
        residuals: vec![l1_distance(&y0, &y0)],
        constraint_values: constraint.map(|c| vec![c.eval(&y0).abs()]),
    };
    let mut x = x0.to_vec();
    let mut y = y0;
    for n in 0..n_steps {
        x = match step(x_field, tableau, h, &x, mode) {
            Ok(v) => v,
            Err(source) => {
                return Err(Box::new(CommuteFailure {
                    partial: record,
                    failed_step: n,
                    side: Side::X,
                    source,
                })
                .into())
            }
        };
        y = match step(y_field, tableau, h, &y, mode) {
            Ok(v) => v,
            Err(source) => {
                return Err(Box::new(CommuteFailure {
                    partial: record,
                    failed_step: n,
                    side: Side::Y,
                    source,
                })
                .into())
            }
        };
        let fx = map.apply(&x)?;
        record.residuals.push(l1_distance(&y, &fx));
        if let (Some(values), Some(c)) = (record.constraint_values.as_mut(), constraint) {
            values.push(c.eval(&y).abs());
        }
        record.x_points.push(x.clone());
        record.mapped_points.push(fx);
        record.y_points.push(y.clone());
    }
    Ok(record)
}

/// Exactness expectations for a related pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactnessTier {
    /// Identical operation sequences on both sides: the residual must be 0.
    BitExact,
    /// Algebraically zero, differently rounded: small per-step tolerance.
    Rounded,
}

/// Per-step residual tolerance for a tier at a state of the given l1 norm.
pub fn tier_tolerance(tier: ExactnessTier, state_l1: f64) -> f64 {
    match tier {
        ExactnessTier::BitExact => 0.0,
        ExactnessTier::Rounded => 1e-12 * state_l1.max(1.0),
    }
}
