//! Built-in fundamental functions and the user metric format.
//!
//! Each descriptor carries the expression tree for `K^2(x, p)`, a validity
//! predicate (momentum cone, coordinate box), and structural flags used by
//! flag-sensitive checks. Homogeneity is certified at load time, never
//! trusted.

use serde::Serialize;

use crate::error::{CartanError, Result};
use crate::expr::{self, Expr};
use crate::point::PhasePoint;

pub const BUILTIN_LABELS: [&str; 5] = [
    "euclidean",
    "quadratic-diag",
    "quadratic-offdiag",
    "randers-dual",
    "quartic-root",
];

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq, Eq)]
pub struct MetricFlags {
    /// K^2 quadratic in p, hence the third momentum derivative vanishes.
    pub quadratic: bool,
    /// No base-coordinate dependence, hence all Christoffel data vanishes.
    pub x_independent: bool,
    /// Fundamental tensor momentum-independent (Riemannian case).
    pub reinhart_expected: bool,
}

/// Domain restrictions a sample point must satisfy before evaluation.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Validity {
    /// Require |p_i| >= cone_frac * ||p|| for every i.
    pub cone_frac: Option<f64>,
    /// Half-width of the admissible base-coordinate box around the origin.
    pub x_box: f64,
}

impl Default for Validity {
    fn default() -> Self {
        Self {
            cone_frac: None,
            x_box: 1.0,
        }
    }
}

impl Validity {
    pub fn admits(&self, z: &PhasePoint) -> bool {
        let pn = z.p_norm();
        if pn == 0.0 || !pn.is_finite() {
            return false;
        }
        if let Some(c) = self.cone_frac {
            if z.p.iter().any(|&pi| pi.abs() < c * pn) {
                return false;
            }
        }
        z.x.iter().all(|&xi| xi.abs() <= self.x_box)
    }
}

#[derive(Debug, Clone)]
pub struct MetricDescriptor {
    pub label: String,
    pub dim: usize,
    pub k_squared: Expr,
    pub validity: Validity,
    pub flags: MetricFlags,
}

fn p(i: usize) -> Expr {
    Expr::P(i)
}
fn x(i: usize) -> Expr {
    Expr::X(i)
}
fn c(v: f64) -> Expr {
    Expr::Const(v)
}

/// Built-in metric by label.
///
/// * `euclidean`: `K^2 = sum p_i^2`
/// * `quadratic-diag`: `K^2 = sum (1 + 0.3 x_i^2) p_i^2`
/// * `quadratic-offdiag`: `K^2 = a^{ij}(x) p_i p_j` for a bounded SPD
///   perturbation of the identity
/// * `randers-dual`: `K = sqrt(a^{ij}(x) p_i p_j) + 0.3 p_1` with
///   `a^{ij} = (1 + 0.1 x_i^2) delta^{ij}`
/// * `quartic-root`: `K = (sum p_i^4)^{1/4}` on the cone `|p_i| >= 0.2 ||p||`
pub fn builtin(label: &str, dim: usize) -> Result<MetricDescriptor> {
    if dim < 2 {
        return Err(CartanError::InvalidConfig(
            "metric dimension must be at least 2".into(),
        ));
    }
    let desc = match label {
        "euclidean" => MetricDescriptor {
            label: label.into(),
            dim,
            k_squared: Expr::sum((0..dim).map(|i| Expr::pow(p(i), 2))),
            validity: Validity::default(),
            flags: MetricFlags {
                quadratic: true,
                x_independent: true,
                reinhart_expected: true,
            },
        },
        "quadratic-diag" => MetricDescriptor {
            label: label.into(),
            dim,
            k_squared: Expr::sum((0..dim).map(|i| {
                Expr::mul(
                    Expr::add(c(1.0), Expr::mul(c(0.3), Expr::pow(x(i), 2))),
                    Expr::pow(p(i), 2),
                )
            })),
            validity: Validity::default(),
            flags: MetricFlags {
                quadratic: true,
                x_independent: false,
                reinhart_expected: true,
            },
        },
        "quadratic-offdiag" => {
            // a^{ij} = (1 + 0.2 x_i^2) delta^{ij} + 0.1 x_i x_j (i != j);
            // equals diag(1 + 0.1 x_i^2) + 0.1 x x^T, SPD for every x.
            let mut terms = vec![];
            for i in 0..dim {
                terms.push(Expr::mul(
                    Expr::add(c(1.0), Expr::mul(c(0.2), Expr::pow(x(i), 2))),
                    Expr::pow(p(i), 2),
                ));
                for j in (i + 1)..dim {
                    terms.push(Expr::mul(
                        c(0.2), // 2 * 0.1, both orderings of (i, j)
                        Expr::mul(Expr::mul(x(i), x(j)), Expr::mul(p(i), p(j))),
                    ));
                }
            }
            MetricDescriptor {
                label: label.into(),
                dim,
                k_squared: Expr::sum(terms),
                validity: Validity::default(),
                flags: MetricFlags {
                    quadratic: true,
                    x_independent: false,
                    reinhart_expected: true,
                },
            }
        }
        "randers-dual" => {
            let quad = Expr::sum((0..dim).map(|i| {
                Expr::mul(
                    Expr::add(c(1.0), Expr::mul(c(0.1), Expr::pow(x(i), 2))),
                    Expr::pow(p(i), 2),
                )
            }));
            let k = Expr::add(Expr::sqrt(quad), Expr::mul(c(0.3), p(0)));
            MetricDescriptor {
                label: label.into(),
                dim,
                k_squared: Expr::pow(k, 2),
                validity: Validity::default(),
                flags: MetricFlags::default(),
            }
        }
        "quartic-root" => MetricDescriptor {
            label: label.into(),
            dim,
            k_squared: Expr::sqrt(Expr::sum((0..dim).map(|i| Expr::pow(p(i), 4)))),
            validity: Validity {
                cone_frac: Some(0.2),
                x_box: 1.0,
            },
            flags: MetricFlags {
                quadratic: false,
                x_independent: true,
                reinhart_expected: false,
            },
        },
        other => return Err(CartanError::UnknownMetric(other.into())),
    };
    Ok(desc)
}

/// Parses a user metric expression into a descriptor with default validity
/// and no structural flags.
pub fn from_expression(src: &str, dim: usize, label: &str) -> Result<MetricDescriptor> {
    let k_squared = expr::parse(src)?;
    if let Some(max) = k_squared.max_index() {
        if max >= dim {
            return Err(CartanError::InvalidConfig(format!(
                "expression references coordinate index {} but dim = {dim}",
                max + 1
            )));
        }
    }
    Ok(MetricDescriptor {
        label: label.into(),
        dim,
        k_squared,
        validity: Validity::default(),
        flags: MetricFlags::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_value() {
        let d = builtin("euclidean", 2).unwrap();
        let v = d.k_squared.eval_f64(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_relative_eq!(v.sqrt(), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn randers_dual_value() {
        let d = builtin("randers-dual", 3).unwrap();
        let v = d
            .k_squared
            .eval_f64(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0])
            .unwrap();
        assert_relative_eq!(v.sqrt(), 1.3, max_relative = 1e-15);
    }

    #[test]
    fn quartic_root_value() {
        let d = builtin("quartic-root", 2).unwrap();
        let v = d.k_squared.eval_f64(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(v.sqrt(), 2.0_f64.powf(0.25), max_relative = 1e-15);
    }

    #[test]
    fn unknown_label() {
        assert!(matches!(
            builtin("kropina", 2),
            Err(CartanError::UnknownMetric(_))
        ));
    }

    #[test]
    fn cone_predicate() {
        let d = builtin("quartic-root", 2).unwrap();
        assert!(d
            .validity
            .admits(&PhasePoint::new(vec![0.0, 0.0], vec![1.0, 1.0])));
        assert!(!d
            .validity
            .admits(&PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.1])));
    }

    #[test]
    fn dimension_guard_for_user_expressions() {
        assert!(from_expression("p1^2 + p3^2", 2, "user").is_err());
        assert!(from_expression("p1^2 + p2^2", 2, "user").is_ok());
    }
}
