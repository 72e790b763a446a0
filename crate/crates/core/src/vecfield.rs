//! Vector fields on coordinate vector spaces and the maps between them.
//!
//! A [`VectorField`] is a dimension plus an evaluation map. Fields can be
//! built from parsed expressions ([`parse_field`]), from a matrix
//! ([`VectorField::linear`]), or from an arbitrary closure. Evaluation
//! reports singularities (division by zero, overflow) as errors; it never
//! returns NaN or infinity.
//!
//! An [`AffineMap`] holds `f(x) = Lx + p`. [`continuous_residual`] measures
//! how far a pair of fields is from satisfying `L X(x) = Y(Lx + p)`, in the
//! l1 norm. Maps that are not affine (used to demonstrate where the affine
//! hypothesis is necessary) are carried by [`NonAffineMap`], which supplies
//! the Jacobian-vector product needed for the pushforward residual.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError};

/// Errors raised while evaluating a field or applying a map.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("input has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("component {component}: {source}")]
    Component { component: usize, source: EvalError },
    #[error("cell {cell}: {source}")]
    Cell { cell: usize, source: EvalError },
}

/// Errors raised while building a field from expression strings.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldParseError {
    #[error("{got} component expression(s) supplied for dimension {expected}")]
    ComponentCount { expected: usize, got: usize },
    #[error("component {component}: {source}")]
    Parse {
        component: usize,
        source: ParseError,
    },
}

type EvalFn = dyn Fn(&[f64]) -> Result<Vec<f64>, FieldError> + Send + Sync;

/// A vector field `X: R^n -> R^n`, immutable and safe to share across threads.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Arc<EvalFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("dim", &self.dim).finish()
    }
}

impl VectorField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates the field at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        if x.len() != self.dim {
            return Err(FieldError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let out = (self.eval)(x)?;
        debug_assert_eq!(out.len(), self.dim);
        Ok(out)
    }

    /// Builds a field from an arbitrary evaluation closure.
    ///
    /// The closure must return a vector of length `dim` whenever it succeeds.
    pub fn from_fn<F>(dim: usize, f: F) -> VectorField
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, FieldError> + Send + Sync + 'static,
    {
        VectorField {
            dim,
            eval: Arc::new(f),
        }
    }

    /// Builds a field whose i-th component evaluates `components[i]`.
    pub fn from_exprs(components: Vec<Expr>) -> Result<VectorField, FieldParseError> {
        let dim = components.len();
        for (i, e) in components.iter().enumerate() {
            if let Some(max) = e.max_var() {
                if max >= dim {
                    return Err(FieldParseError::Parse {
                        component: i,
                        source: ParseError::VarOutOfRange {
                            pos: 0,
                            var: max + 1,
                            dim,
                        },
                    });
                }
            }
        }
        let components = Arc::new(components);
        Ok(VectorField::from_fn(dim, move |x| {
            let mut out = Vec::with_capacity(components.len());
            for (i, e) in components.iter().enumerate() {
                let v = e
                    .eval(x)
                    .map_err(|source| FieldError::Component { component: i, source })?;
                out.push(v);
            }
            Ok(out)
        }))
    }

    /// The linear field `x -> Mx` for a square matrix `M`.
    ///
    /// Row sums accumulate in ascending column order.
    pub fn linear(matrix: Vec<Vec<f64>>) -> VectorField {
        let dim = matrix.len();
        for row in &matrix {
            assert_eq!(row.len(), dim, "linear field matrix must be square");
        }
        let matrix = Arc::new(matrix);
        VectorField::from_fn(dim, move |x| {
            let mut out = Vec::with_capacity(matrix.len());
            for (r, row) in matrix.iter().enumerate() {
                let mut acc = 0.0;
                for (c, &m) in row.iter().enumerate() {
                    acc += m * x[c];
                }
                if !acc.is_finite() {
                    return Err(FieldError::Component {
                        component: r,
                        source: EvalError::NonFinite { op: "+" },
                    });
                }
                out.push(acc);
            }
            Ok(out)
        })
    }

    /// The identically-zero field.
    pub fn zero(dim: usize) -> VectorField {
        VectorField::from_fn(dim, move |x| Ok(vec![0.0; x.len()]))
    }
}

/// Config-file form of a vector field: `{"dim": n, "components": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub dim: usize,
    pub components: Vec<String>,
}

impl FieldConfig {
    pub fn build(&self) -> Result<VectorField, FieldParseError> {
        parse_field(&self.components, self.dim)
    }
}

/// Parses component expression strings into a [`VectorField`].
///
/// `components.len()` must equal `dim`, and no expression may reference a
/// variable past `x{dim}`.
pub fn parse_field<S: AsRef<str>>(
    components: &[S],
    dim: usize,
) -> Result<VectorField, FieldParseError> {
    if components.len() != dim {
        return Err(FieldParseError::ComponentCount {
            expected: dim,
            got: components.len(),
        });
    }
    let mut exprs = Vec::with_capacity(dim);
    for (i, src) in components.iter().enumerate() {
        let e = expr::parse_with_dim(src.as_ref(), dim)
            .map_err(|source| FieldParseError::Parse { component: i, source })?;
        exprs.push(e);
    }
    VectorField::from_exprs(exprs)
}

/// An affine map `f(x) = Lx + p` with `L` an `m x n` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    #[serde(rename = "L")]
    l: Vec<Vec<f64>>,
    p: Vec<f64>,
}

impl AffineMap {
    pub fn new(l: Vec<Vec<f64>>, p: Vec<f64>) -> Result<AffineMap, FieldError> {
        if l.len() != p.len() {
            return Err(FieldError::Dimension {
                expected: l.len(),
                got: p.len(),
            });
        }
        let cols = l.first().map(|r| r.len()).unwrap_or(0);
        for row in &l {
            if row.len() != cols {
                return Err(FieldError::Dimension {
                    expected: cols,
                    got: row.len(),
                });
            }
        }
        Ok(AffineMap { l, p })
    }

    /// The linear map `Lx` (offset zero).
    pub fn linear(l: Vec<Vec<f64>>) -> Result<AffineMap, FieldError> {
        let p = vec![0.0; l.len()];
        AffineMap::new(l, p)
    }

    pub fn identity(n: usize) -> AffineMap {
        let mut l = vec![vec![0.0; n]; n];
        for (i, row) in l.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        AffineMap { l, p: vec![0.0; n] }
    }

    pub fn input_dim(&self) -> usize {
        self.l.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.l.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.l
    }

    pub fn offset(&self) -> &[f64] {
        &self.p
    }

    pub fn is_linear(&self) -> bool {
        self.p.iter().all(|&v| v == 0.0)
    }

    /// `Lx + p`: matrix-vector product, then vector addition.
    ///
    /// Row sums accumulate in ascending column order.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        let mut out = self.apply_linear(x)?;
        for (v, &p) in out.iter_mut().zip(self.p.iter()) {
            *v += p;
        }
        Ok(out)
    }

    /// `Lx` without the offset; this is the differential of the map.
    pub fn apply_linear(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        if x.len() != self.input_dim() {
            return Err(FieldError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.l.len());
        for row in &self.l {
            let mut acc = 0.0;
            for (c, &m) in row.iter().enumerate() {
                acc += m * x[c];
            }
            out.push(acc);
        }
        Ok(out)
    }
}

type MapFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JvpFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// A differentiable map that is not affine, together with its
/// Jacobian-vector product `v -> Tf_x v`.
#[derive(Clone)]
pub struct NonAffineMap {
    input_dim: usize,
    output_dim: usize,
    map: Arc<MapFn>,
    jvp: Arc<JvpFn>,
}

impl fmt::Debug for NonAffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonAffineMap")
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl NonAffineMap {
    pub fn new<F, J>(input_dim: usize, output_dim: usize, map: F, jvp: J) -> NonAffineMap
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        J: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        NonAffineMap {
            input_dim,
            output_dim,
            map: Arc::new(map),
            jvp: Arc::new(jvp),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        if x.len() != self.input_dim {
            return Err(FieldError::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok((self.map)(x))
    }

    /// Jacobian-vector product `Tf_x v`.
    pub fn pushforward(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, FieldError> {
        if x.len() != self.input_dim || v.len() != self.input_dim {
            return Err(FieldError::Dimension {
                expected: self.input_dim,
                got: if x.len() != self.input_dim { x.len() } else { v.len() },
            });
        }
        Ok((self.jvp)(x, v))
    }
}

/// Either kind of map between the phase spaces of a system pair.
#[derive(Debug, Clone)]
pub enum SystemMap {
    Affine(AffineMap),
    NonAffine(NonAffineMap),
}

impl SystemMap {
    pub fn input_dim(&self) -> usize {
        match self {
            SystemMap::Affine(f) => f.input_dim(),
            SystemMap::NonAffine(f) => f.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            SystemMap::Affine(f) => f.output_dim(),
            SystemMap::NonAffine(f) => f.output_dim(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        match self {
            SystemMap::Affine(f) => f.apply(x),
            SystemMap::NonAffine(f) => f.apply(x),
        }
    }

    pub fn as_affine(&self) -> Option<&AffineMap> {
        match self {
            SystemMap::Affine(f) => Some(f),
            SystemMap::NonAffine(_) => None,
        }
    }
}

/// l1 norm, summed in ascending index order.
pub fn l1_norm(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &e in v {
        acc += e.abs();
    }
    acc
}

/// `||a - b||_1`, summed in ascending index order.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "l1 distance of unequal lengths");
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - y).abs();
    }
    acc
}

/// `||Y(Lx + p) - L X(x)||_1`: zero in exact arithmetic iff the fields are
/// related by `f` at `x`.
pub fn continuous_residual(
    f: &AffineMap,
    x_field: &VectorField,
    y_field: &VectorField,
    x: &[f64],
) -> Result<f64, FieldError> {
    let fx = f.apply(x)?;
    let y_at_fx = y_field.eval(&fx)?;
    let x_at_x = x_field.eval(x)?;
    let lx = f.apply_linear(&x_at_x)?;
    Ok(l1_distance(&y_at_fx, &lx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn duplication() -> AffineMap {
        AffineMap::new(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn apply_duplication() {
        let f = duplication();
        assert_eq!(f.apply(&[3.0]).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn apply_duplication_with_offset() {
        let f = AffineMap::new(vec![vec![1.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(f.apply(&[2.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn apply_identity() {
        let f = AffineMap::identity(2);
        assert_eq!(f.apply(&[4.5, -1.25]).unwrap(), vec![4.5, -1.25]);
    }

    #[test]
    fn apply_checks_dimensions() {
        let f = duplication();
        assert!(matches!(
            f.apply(&[1.0, 2.0]),
            Err(FieldError::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn parse_field_evaluates_components() {
        let field = parse_field(&["-3*x1"], 1).unwrap();
        assert_eq!(field.eval(&[2.0]).unwrap(), vec![-6.0]);

        let field = parse_field(&["-x1 - 2*x2 + (x1 - x2)*x1^3", "-2*x1 - x2"], 2).unwrap();
        assert_eq!(field.eval(&[1.0, 1.0]).unwrap(), vec![-3.0, -3.0]);
    }

    #[test]
    fn parse_field_reports_singularities() {
        let field = parse_field(&["sin(x1)*x2/x3"], 3).unwrap();
        assert_eq!(
            field.eval(&[1.0, 1.0, 0.0]).unwrap_err(),
            FieldError::Component {
                component: 0,
                source: EvalError::DivisionByZero
            }
        );
    }

    #[test]
    fn parse_field_checks_component_count_and_vars() {
        assert!(matches!(
            parse_field(&["x1", "x2"], 1),
            Err(FieldParseError::ComponentCount { expected: 1, got: 2 })
        ));
        assert!(matches!(
            parse_field(&["x2"], 1),
            Err(FieldParseError::Parse { component: 0, .. })
        ));
    }

    #[test]
    fn continuous_residual_zero_for_zero_fields() {
        let f = duplication();
        let x = VectorField::zero(1);
        let y = VectorField::zero(2);
        assert_eq!(continuous_residual(&f, &x, &y, &[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn linear_field_is_matvec() {
        let x = VectorField::linear(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]);
        assert_eq!(x.eval(&[1.0, 0.0]).unwrap(), vec![-0.0, -1.0]);
    }

    #[test]
    fn scalar_multiples_commute_for_linear_maps() {
        // exact for power-of-two scalars
        let f = AffineMap::linear(vec![vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap();
        for lambda in [0.5, 2.0, -1.0] {
            let x = [0.3, -1.7];
            let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            let lhs = f.apply(&scaled).unwrap();
            let rhs: Vec<f64> = f.apply(&x).unwrap().iter().map(|v| lambda * v).collect();
            assert_eq!(lhs, rhs);
        }
    }
}
