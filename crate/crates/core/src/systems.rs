//! Builtin pairs of related dynamical systems.
//!
//! Five ready-made pairs exercise the commutation machinery:
//!
//! * `ex1` — a planar field with an unstable invariant diagonal; the
//!   restriction to the diagonal is `u' = -3u` and the map is the
//!   duplication `u -> (u, u)`.
//! * `ex2` — the affine variant: an offset diagonal `{x2 = x1 + 1}` with
//!   `f(u) = (u, u + 1)`.
//! * `ex3` — a pair of coupled-cell networks related by a graph fibration;
//!   the three cell dynamics are pluggable expressions.
//! * `ex4` — a *non-affine* map `f(x) = (x^2, x)` whose image (a parabola)
//!   is invariant for the flow but not for the discretization; `g` is a
//!   pluggable expression in two variables.
//! * `ex5` — conjugate linear fields `X = A^{-1} Y A` for
//!   `A = [[1,-1],[1,1]]`. The same pair with the sign error
//!   `X = [[0,-1],[1,0]]` (which is *not* related to `Y`: conjugation
//!   preserves eigenvalues, and those of `Y` are real) is available behind
//!   [`SystemOptions::as_printed`] to demonstrate a failing relatedness
//!   check.

use thiserror::Error;

use crate::expr::{self, ParseError};
use crate::network::{CellType, Fibration, Network, NetworkError};
use crate::relatedness::{Constraint, ExactnessTier};
use crate::vecfield::{
    AffineMap, FieldError, FieldParseError, NonAffineMap, SystemMap, VectorField,
};

/// Builtin system names, in listing order.
pub const BUILTIN_SYSTEMS: [&str; 5] = ["ex1", "ex2", "ex3", "ex4", "ex5"];

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("unknown system `{name}`; available: {available}")]
    UnknownName { name: String, available: String },
    #[error("parameter `{param}`: {source}")]
    Param {
        param: &'static str,
        source: ParseError,
    },
    #[error("field definition: {0}")]
    Field(#[from] FieldParseError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Optional parameters for the builtin systems.
#[derive(Debug, Clone, Default)]
pub struct SystemOptions {
    /// Cell dynamics `w1, w2, w3` for `ex3` (defaults: `x1`,
    /// `sin(x2)*x3/x1`, `x2*x1`).
    pub w: Option<[String; 3]>,
    /// Coupling function `g(x1, x2)` for `ex4` (default: `1`).
    pub g: Option<String>,
    /// For `ex5`: use the sign-flipped `X = [[0,-1],[1,0]]`, which fails
    /// the relatedness check.
    pub as_printed: bool,
}

/// A pair of fields, the map relating them, and its exactness expectations.
#[derive(Debug, Clone)]
pub struct SystemPair {
    pub name: &'static str,
    pub x_field: VectorField,
    pub y_field: VectorField,
    pub map: SystemMap,
    /// Constraint whose zero set is the invariant manifold, when one is
    /// tracked (`ex4`'s parabola).
    pub constraint: Option<Constraint>,
    pub tier: ExactnessTier,
    pub default_x0: Vec<f64>,
}

/// Builds a builtin system pair.
pub fn builtin_system(name: &str, opts: &SystemOptions) -> Result<SystemPair, SystemError> {
    match name {
        "ex1" => ex1(),
        "ex2" => ex2(),
        "ex3" => ex3(opts),
        "ex4" => ex4(opts),
        "ex5" => ex5(opts),
        _ => Err(SystemError::UnknownName {
            name: name.to_string(),
            available: BUILTIN_SYSTEMS.join(", "),
        }),
    }
}

fn duplication_2() -> AffineMap {
    AffineMap::new(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0]).expect("static dims")
}

fn ex1() -> Result<SystemPair, SystemError> {
    let x_field = crate::vecfield::parse_field(&["-3*x1"], 1)?;
    let y_field = crate::vecfield::parse_field(
        &["-x1 - 2*x2 + (x1 - x2)*x1^3", "-2*x1 - x2"],
        2,
    )?;
    Ok(SystemPair {
        name: "ex1",
        x_field,
        y_field,
        map: SystemMap::Affine(duplication_2()),
        constraint: None,
        tier: ExactnessTier::BitExact,
        default_x0: vec![0.7],
    })
}

fn ex2() -> Result<SystemPair, SystemError> {
    let x_field = crate::vecfield::parse_field(&["-3*x1 - 1"], 1)?;
    let y_field = crate::vecfield::parse_field(&["-x1 - 2*x2 + 1", "-2*x1 - x2"], 2)?;
    let f = AffineMap::new(vec![vec![1.0], vec![1.0]], vec![0.0, 1.0]).expect("static dims");
    Ok(SystemPair {
        name: "ex2",
        x_field,
        y_field,
        map: SystemMap::Affine(f),
        constraint: None,
        tier: ExactnessTier::Rounded,
        default_x0: vec![0.7],
    })
}

/// The two `ex3` networks and the fibration between them.
pub fn ex3_fibration(opts: &SystemOptions) -> Result<Fibration, SystemError> {
    let default_w = [
        "x1".to_string(),
        "sin(x2)*x3/x1".to_string(),
        "x2*x1".to_string(),
    ];
    let w = opts.w.as_ref().unwrap_or(&default_w);
    let types = vec![
        CellType::new("w1", 1, 0, &[w[0].as_str()])?,
        CellType::new("w2", 1, 2, &[w[1].as_str()])?,
        CellType::new("w3", 1, 1, &[w[2].as_str()])?,
    ];
    // source: X(x1,x2,x3) = (w1(x1), w2(x2,x1,x1), w3(x3,x2))
    let source = Network::new(
        types.clone(),
        vec![0, 1, 2],
        vec![vec![], vec![0, 0], vec![1]],
    )?;
    // target: Y(y1,y2,y3) = (w1(y1), w1(y2), w2(y3,y1,y2))
    let target = Network::new(types, vec![0, 0, 1], vec![vec![], vec![], vec![0, 1]])?;
    Ok(Fibration::new(source, target, vec![0, 0, 1])?)
}

fn ex3(opts: &SystemOptions) -> Result<SystemPair, SystemError> {
    let fib = ex3_fibration(opts)?;
    let map = fib.induced_map()?;
    let x_field = fib.source().assemble()?;
    let y_field = fib.target().assemble()?;
    Ok(SystemPair {
        name: "ex3",
        x_field,
        y_field,
        map: SystemMap::Affine(map),
        constraint: None,
        tier: ExactnessTier::BitExact,
        default_x0: vec![1.0, 2.0, 3.0],
    })
}

fn ex4(opts: &SystemOptions) -> Result<SystemPair, SystemError> {
    let g_src = opts.g.as_deref().unwrap_or("1");
    let g = expr::parse_with_dim(g_src, 2).map_err(|source| SystemError::Param {
        param: "g",
        source,
    })?;
    // X(x) = x * g(x^2, x^2)
    let gx = g.clone();
    let x_field = VectorField::from_fn(1, move |x| {
        let t = x[0] * x[0];
        let gv = gx
            .eval(&[t, t])
            .map_err(|source| FieldError::Component { component: 0, source })?;
        let v = x[0] * gv;
        if !v.is_finite() {
            return Err(FieldError::Component {
                component: 0,
                source: expr::EvalError::NonFinite { op: "*" },
            });
        }
        Ok(vec![v])
    });
    // Y(y1, y2) = (2 y1 g(y1, y2^2), y2 g(y2^2, y1))
    let gy = g;
    let y_field = VectorField::from_fn(2, move |y| {
        let t = y[1] * y[1];
        let g1 = gy
            .eval(&[y[0], t])
            .map_err(|source| FieldError::Component { component: 0, source })?;
        let g2 = gy
            .eval(&[t, y[0]])
            .map_err(|source| FieldError::Component { component: 1, source })?;
        let v1 = (2.0 * y[0]) * g1;
        let v2 = y[1] * g2;
        if !v1.is_finite() || !v2.is_finite() {
            return Err(FieldError::Component {
                component: if v1.is_finite() { 1 } else { 0 },
                source: expr::EvalError::NonFinite { op: "*" },
            });
        }
        Ok(vec![v1, v2])
    });
    let map = NonAffineMap::new(
        1,
        2,
        |x| vec![x[0] * x[0], x[0]],
        |x, v| vec![(2.0 * x[0]) * v[0], v[0]],
    );
    Ok(SystemPair {
        name: "ex4",
        x_field,
        y_field,
        map: SystemMap::NonAffine(map),
        constraint: Some(Constraint::new("parabola", |y: &[f64]| {
            y[1] * y[1] - y[0]
        })),
        tier: ExactnessTier::Rounded,
        default_x0: vec![0.5],
    })
}

fn ex5(opts: &SystemOptions) -> Result<SystemPair, SystemError> {
    let x_matrix = if opts.as_printed {
        vec![vec![0.0, -1.0], vec![1.0, 0.0]]
    } else {
        // A^{-1} Y A
        vec![vec![0.0, -1.0], vec![-1.0, 0.0]]
    };
    let x_field = VectorField::linear(x_matrix);
    let y_field = VectorField::linear(vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
    let a = AffineMap::linear(vec![vec![1.0, -1.0], vec![1.0, 1.0]]).expect("static dims");
    Ok(SystemPair {
        name: "ex5",
        x_field,
        y_field,
        map: SystemMap::Affine(a),
        constraint: None,
        tier: ExactnessTier::Rounded,
        default_x0: vec![1.0, 0.0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relatedness::nonaffine_pushforward_residual;
    use crate::vecfield::{continuous_residual, l1_norm};

    #[test]
    fn ex1_fields_and_map() {
        let pair = builtin_system("ex1", &SystemOptions::default()).unwrap();
        assert_eq!(pair.x_field.eval(&[1.0]).unwrap(), vec![-3.0]);
        assert_eq!(pair.y_field.eval(&[1.0, 1.0]).unwrap(), vec![-3.0, -3.0]);
        let f = pair.map.as_affine().unwrap();
        assert_eq!(f.apply(&[3.0]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(
            continuous_residual(f, &pair.x_field, &pair.y_field, &[0.7]).unwrap(),
            0.0
        );
    }

    #[test]
    fn ex2_offset_diagonal_is_related() {
        let pair = builtin_system("ex2", &SystemOptions::default()).unwrap();
        let f = pair.map.as_affine().unwrap();
        assert_eq!(f.apply(&[2.0]).unwrap(), vec![2.0, 3.0]);
        // algebraically zero; rounded differently on the two sides
        for u in [-1.5, 0.3, 0.7, 2.0] {
            let r = continuous_residual(f, &pair.x_field, &pair.y_field, &[u]).unwrap();
            assert!(r <= 1e-12 * u.abs().max(1.0), "u={u}: r={r}");
        }
    }

    #[test]
    fn ex3_matches_the_network_construction() {
        let pair = builtin_system("ex3", &SystemOptions::default()).unwrap();
        let f = pair.map.as_affine().unwrap();
        assert_eq!(f.apply(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 1.0, 2.0]);
        assert_eq!(
            continuous_residual(f, &pair.x_field, &pair.y_field, &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn ex3_accepts_custom_dynamics() {
        let opts = SystemOptions {
            w: Some([
                "-x1".to_string(),
                "x2 + x3 - 2*x1".to_string(),
                "x2 - x1".to_string(),
            ]),
            ..Default::default()
        };
        let pair = builtin_system("ex3", &opts).unwrap();
        let f = pair.map.as_affine().unwrap();
        for x in [[1.0, 2.0, 3.0], [0.1, -0.5, 4.0]] {
            assert_eq!(
                continuous_residual(f, &pair.x_field, &pair.y_field, &x).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn ex4_with_unit_g_is_the_doubling_pair() {
        let pair = builtin_system("ex4", &SystemOptions::default()).unwrap();
        assert_eq!(pair.x_field.eval(&[0.5]).unwrap(), vec![0.5]);
        assert_eq!(pair.y_field.eval(&[0.25, 0.5]).unwrap(), vec![0.5, 0.5]);
        let r = match &pair.map {
            SystemMap::NonAffine(fnl) => {
                nonaffine_pushforward_residual(fnl, &pair.x_field, &pair.y_field, &[0.5]).unwrap()
            }
            SystemMap::Affine(_) => panic!("ex4 map must be non-affine"),
        };
        assert_eq!(r, 0.0);
        let c = pair.constraint.unwrap();
        assert_eq!(c.eval(&[0.25, 0.5]), 0.0);
        assert_eq!(c.eval(&[0.25, 0.6]), 0.6 * 0.6 - 0.25);
    }

    #[test]
    fn ex4_pushforward_residual_with_general_g() {
        let opts = SystemOptions {
            g: Some("0.999 + sin(x1 + x2) + 1/(x1 + x2)".to_string()),
            ..Default::default()
        };
        let pair = builtin_system("ex4", &opts).unwrap();
        let fnl = match &pair.map {
            SystemMap::NonAffine(f) => f,
            SystemMap::Affine(_) => unreachable!(),
        };
        for x in [0.5, 1.0, 1.5] {
            let fx = fnl.apply(&[x]).unwrap();
            let scale = l1_norm(&pair.y_field.eval(&fx).unwrap());
            let r =
                nonaffine_pushforward_residual(fnl, &pair.x_field, &pair.y_field, &[x]).unwrap();
            assert!(
                r <= 8.0 * f64::EPSILON * scale.max(1.0),
                "x={x}: r={r}, scale={scale}"
            );
        }
    }

    #[test]
    fn ex5_corrected_field_is_conjugate() {
        // oracle: X = A^{-1} Y A with exact dyadic arithmetic
        let a = [[1.0, -1.0], [1.0, 1.0]];
        let a_inv = [[0.5, 0.5], [-0.5, 0.5]];
        let y = [[1.0, 0.0], [0.0, -1.0]];
        let mut expect = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += a_inv[i][k] * y[k][l] * a[l][j];
                    }
                }
                expect[i][j] = acc;
            }
        }
        assert_eq!(expect, [[0.0, -1.0], [-1.0, 0.0]]);

        let pair = builtin_system("ex5", &SystemOptions::default()).unwrap();
        let f = pair.map.as_affine().unwrap();
        for x in [[1.0, 0.0], [0.3, -0.8], [2.0, 5.0]] {
            assert_eq!(
                continuous_residual(f, &pair.x_field, &pair.y_field, &x).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn ex5_as_printed_fails_relatedness() {
        let opts = SystemOptions {
            as_printed: true,
            ..Default::default()
        };
        let pair = builtin_system("ex5", &opts).unwrap();
        let f = pair.map.as_affine().unwrap();
        let r = continuous_residual(f, &pair.x_field, &pair.y_field, &[1.0, 0.0]).unwrap();
        assert_eq!(r, 4.0);
    }

    #[test]
    fn unknown_system_lists_the_names() {
        let err = builtin_system("ex9", &SystemOptions::default()).unwrap_err();
        match err {
            SystemError::UnknownName { available, .. } => {
                for n in BUILTIN_SYSTEMS {
                    assert!(available.contains(n));
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
