//! Per-point geometry state.
//!
//! One `GeometryState` is built per (metric, phase point) pair: a single
//! master jet of `K^2` (orders x:2, p:4, total degree 5) from which every
//! tensor and every derivative the checks consume is assembled exactly.
//! Matrix inverses of jet-valued matrices are expanded as a terminating
//! Neumann series around the numeric inverse at the base point, so the
//! derivative propagation of the inverse metric stays analytic and the
//! conditioning of the one numeric inversion stays explicit.

use std::sync::{Arc, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array3;

use crate::cartan::{CartanStructure, ChristoffelData, FundamentalTensors};
use crate::error::{CartanError, Result};
use crate::frames::SasakiData;
use crate::jets::{Jet, JetSpace};
use crate::point::PhasePoint;

/// Condition-number guard for the fundamental tensor; residual tolerances
/// are meaningless past this.
pub const COND_GUARD: f64 = 1e10;

pub struct GeometryState {
    pub structure: Arc<CartanStructure>,
    pub point: PhasePoint,
    pub n: usize,
    pub space: Arc<JetSpace>,

    /// Coordinate jets, all `n` of each.
    pub x_var: Vec<Jet>,
    pub p_var: Vec<Jet>,

    pub k2_j: Jet,
    pub k_j: Jet,
    /// `g^{ij}` as jets, row-major `n x n`.
    pub g_up_j: Vec<Jet>,
    /// `g_{ij}` as jets.
    pub g_lo_j: Vec<Jet>,
    /// `p^i = g^{ij} p_j` as jets.
    pub p_up_j: Vec<Jet>,
    /// `t^j = p^j / K^2` as jets.
    pub t_j: Vec<Jet>,
    /// Canonical nonlinear connection `N_{ij}` as jets.
    pub n_j: Vec<Jet>,

    pub k2: f64,
    pub k: f64,
    pub g_up: DMatrix<f64>,
    pub g_lo: DMatrix<f64>,
    pub cond_g: f64,
    pub p_up: DVector<f64>,
    /// `C^{ijk} = -1/4 d^3 K^2 / dp_i dp_j dp_k`.
    pub cartan_t: Array3<f64>,
    /// `gamma^i_{jk}`, indexed `[i][j][k]`.
    pub gamma: Array3<f64>,
    pub gamma0: DMatrix<f64>,
    pub gamma0_h0: DVector<f64>,
    pub nconn: DMatrix<f64>,
    /// `dN_{ij}/dp_k`, indexed `[i][j][k]`.
    pub dn_dp: Array3<f64>,
    /// `dN_{ij}/dx_k`.
    pub dn_dx: Array3<f64>,
    /// `dg_{ij}/dp_k`.
    pub dg_lo_dp: Array3<f64>,
    /// `dg_{ij}/dx_k`.
    pub dg_lo_dx: Array3<f64>,
    /// `dg^{ij}/dp_k`.
    pub dg_up_dp: Array3<f64>,

    sasaki: OnceLock<SasakiData>,
}

pub(crate) fn m2(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

/// Inverse of a jet-valued SPD matrix: `G = G0 (I + E)` with
/// `E = G0^{-1}(G - G0)` nilpotent entrywise, so the Neumann series for
/// `(I + E)^{-1}` terminates at the space's total degree.
fn jet_matrix_inverse(
    n: usize,
    g_j: &[Jet],
    g0_inv: &DMatrix<f64>,
    space: &Arc<JetSpace>,
) -> Vec<Jet> {
    let zero = Jet::constant(space, 0.0);
    let mut e = vec![zero.clone(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = zero.clone();
            for k in 0..n {
                acc = &acc + &g_j[m2(n, k, j)].scale(g0_inv[(i, k)]);
            }
            // remove the constant part: E has zero base value
            acc = &acc - &Jet::constant(space, acc.value());
            e[m2(n, i, j)] = acc;
        }
    }
    // X = I - E + E^2 - ... via Horner: X = I - E (I - E (...))
    let ident = |v: &mut Vec<Jet>| {
        for i in 0..n {
            let d = &mut v[m2(n, i, i)];
            *d = &*d + &Jet::constant(space, 1.0);
        }
    };
    let depth = space.spec().total_cap();
    let mut x = vec![zero.clone(); n * n];
    ident(&mut x);
    for _ in 0..depth {
        // x <- I - E * x
        let mut next = vec![zero.clone(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = zero.clone();
                for k in 0..n {
                    acc = &acc + &(&e[m2(n, i, k)] * &x[m2(n, k, j)]);
                }
                next[m2(n, i, j)] = -&acc;
            }
        }
        ident(&mut next);
        x = next;
    }
    // result = X * G0^{-1}
    let mut out = vec![zero; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::constant(space, 0.0);
            for k in 0..n {
                acc = &acc + &x[m2(n, i, k)].scale(g0_inv[(k, j)]);
            }
            out[m2(n, i, j)] = acc;
        }
    }
    out
}

impl GeometryState {
    pub fn build(structure: &Arc<CartanStructure>, z: &PhasePoint) -> Result<Self> {
        structure.check_point(z)?;
        let n = structure.dim;
        let space = JetSpace::master(n);
        let (x_var, p_var) = Jet::coords(&space, z);

        let k2_j = structure.k2_jet(&space, z)?;
        let k2 = k2_j.value();
        let k_j = k2_j.sqrt()?;
        let k = k_j.value();

        let mut g_up_j = Vec::with_capacity(n * n);
        for i in 0..n {
            let di = k2_j.d_p(i);
            for j in 0..n {
                g_up_j.push(di.d_p(j).scale(0.5));
            }
        }
        let g_up = DMatrix::from_fn(n, n, |i, j| g_up_j[m2(n, i, j)].value());

        let chol = Cholesky::new(g_up.clone()).ok_or(CartanError::NotPositiveDefinite)?;
        let g_lo = chol.inverse();
        let cond_g = matrix_inf_norm(&g_up) * matrix_inf_norm(&g_lo);
        if cond_g > COND_GUARD {
            return Err(CartanError::IllConditioned(cond_g));
        }

        let g_lo_j = jet_matrix_inverse(n, &g_up_j, &g_lo, &space);

        let p_up_j: Vec<Jet> = (0..n).map(|i| k2_j.d_p(i).scale(0.5)).collect();
        let p_up = DVector::from_fn(n, |i, _| p_up_j[i].value());
        let k2_inv = k2_j.recip()?;
        let t_j: Vec<Jet> = (0..n).map(|i| &p_up_j[i] * &k2_inv).collect();

        let mut cartan_t = Array3::zeros((n, n, n));
        for i in 0..n {
            for j in i..n {
                for l in j..n {
                    let v = -0.25 * k2_j.partial(&[], &[i, j, l]);
                    for (a, b, c) in [
                        (i, j, l),
                        (i, l, j),
                        (j, i, l),
                        (j, l, i),
                        (l, i, j),
                        (l, j, i),
                    ] {
                        cartan_t[(a, b, c)] = v;
                    }
                }
            }
        }

        // gamma^i_{jk} = 1/2 g^{is} (d g_{js}/dx^k + d g_{sk}/dx^j - d g_{jk}/dx^s)
        let dglo_dx: Vec<Jet> = {
            let mut v = Vec::with_capacity(n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for s in 0..n {
                        v.push(g_lo_j[m2(n, i, j)].d_x(s));
                    }
                }
            }
            v
        };
        let dglo_dx_at = |i: usize, j: usize, s: usize| &dglo_dx[(i * n + j) * n + s];

        let mut gamma_j = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut acc = Jet::constant(&space, 0.0);
                    for s in 0..n {
                        let sum = &(dglo_dx_at(j, s, kk) + dglo_dx_at(s, kk, j))
                            - dglo_dx_at(j, kk, s);
                        acc = &acc + &(&g_up_j[m2(n, i, s)] * &sum);
                    }
                    gamma_j.push(acc.scale(0.5));
                }
            }
        }
        let gamma = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            gamma_j[(i * n + j) * n + kk].value()
        });

        let mut gamma0_j = Vec::with_capacity(n * n);
        for j in 0..n {
            for kk in 0..n {
                let mut acc = Jet::constant(&space, 0.0);
                for i in 0..n {
                    acc = &acc + &(&gamma_j[(i * n + j) * n + kk] * &p_var[i]);
                }
                gamma0_j.push(acc);
            }
        }
        let gamma0 = DMatrix::from_fn(n, n, |j, kk| gamma0_j[m2(n, j, kk)].value());

        let gamma0_h0_j: Vec<Jet> = (0..n)
            .map(|h| {
                let mut acc = Jet::constant(&space, 0.0);
                for kk in 0..n {
                    acc = &acc + &(&gamma0_j[m2(n, h, kk)] * &p_up_j[kk]);
                }
                acc
            })
            .collect();
        let gamma0_h0 = DVector::from_fn(n, |h, _| gamma0_h0_j[h].value());

        let mut n_j = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut corr = Jet::constant(&space, 0.0);
                for h in 0..n {
                    corr = &corr + &(&gamma0_h0_j[h] * &g_lo_j[m2(n, i, j)].d_p(h));
                }
                n_j.push(&gamma0_j[m2(n, i, j)] - &corr.scale(0.5));
            }
        }
        let nconn = DMatrix::from_fn(n, n, |i, j| n_j[m2(n, i, j)].value());

        let dn_dp = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            n_j[m2(n, i, j)].partial(&[], &[kk])
        });
        let dn_dx = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            n_j[m2(n, i, j)].partial(&[kk], &[])
        });
        let dg_lo_dp = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            g_lo_j[m2(n, i, j)].partial(&[], &[kk])
        });
        let dg_lo_dx = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            g_lo_j[m2(n, i, j)].partial(&[kk], &[])
        });
        let dg_up_dp = Array3::from_shape_fn((n, n, n), |(i, j, kk)| {
            g_up_j[m2(n, i, j)].partial(&[], &[kk])
        });

        Ok(Self {
            structure: structure.clone(),
            point: z.clone(),
            n,
            space,
            x_var,
            p_var,
            k2_j,
            k_j,
            g_up_j,
            g_lo_j,
            p_up_j,
            t_j,
            n_j,
            k2,
            k,
            g_up,
            g_lo,
            cond_g,
            p_up,
            cartan_t,
            gamma,
            gamma0,
            gamma0_h0,
            nconn,
            dn_dp,
            dn_dx,
            dg_lo_dp,
            dg_lo_dx,
            dg_up_dp,
            sasaki: OnceLock::new(),
        })
    }

    pub fn g_up_at(&self, i: usize, j: usize) -> &Jet {
        &self.g_up_j[m2(self.n, i, j)]
    }

    pub fn g_lo_at(&self, i: usize, j: usize) -> &Jet {
        &self.g_lo_j[m2(self.n, i, j)]
    }

    pub fn n_at(&self, i: usize, j: usize) -> &Jet {
        &self.n_j[m2(self.n, i, j)]
    }

    pub fn fundamental(&self) -> FundamentalTensors {
        FundamentalTensors {
            g_upper: self.g_up.clone(),
            g_lower: self.g_lo.clone(),
            p_upper: self.p_up.clone(),
            k2: self.k2,
            k: self.k,
            cartan: self.cartan_t.clone(),
            cond: self.cond_g,
        }
    }

    pub fn christoffel(&self) -> ChristoffelData {
        ChristoffelData {
            gamma: self.gamma.clone(),
            gamma0: self.gamma0.clone(),
            gamma0_h0: self.gamma0_h0.clone(),
        }
    }

    /// Sasaki-lift data (natural-coordinate metric, almost complex
    /// structure, symplectic matrix), built once per state.
    pub fn sasaki(&self) -> &SasakiData {
        self.sasaki.get_or_init(|| SasakiData::build(self))
    }

    /// Metric pairing of two vertical vectors given by momentum components.
    pub fn g_vert(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.g_up[(i, j)] * u[i] * v[j];
            }
        }
        acc
    }

    /// The vertical 1-form `zeta(X) = G(X, C*) / K` on momentum components.
    pub fn zeta_vert(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.p_up.iter())
            .map(|(ui, pi)| ui * pi)
            .sum::<f64>()
            / self.k
    }

    /// Projection of a vertical vector onto the Liouville distribution:
    /// `P u = u - zeta(u) p / K` in momentum components.
    pub fn p_project(&self, u: &[f64]) -> Vec<f64> {
        let z = self.zeta_vert(u);
        u.iter()
            .zip(self.point.p.iter())
            .map(|(ui, pi)| ui - z * pi / self.k)
            .collect()
    }
}

pub(crate) fn matrix_inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn structure(label: &str, dim: usize) -> Arc<CartanStructure> {
        CartanStructure::from_descriptor(metrics::builtin(label, dim).unwrap())
    }

    fn sample_points(dim: usize, count: usize, seed: u64) -> Vec<PhasePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.8..0.8)).collect();
                let p: Vec<f64> = (0..dim)
                    .map(|_| {
                        let v: f64 = rng.gen_range(0.3..1.5);
                        if rng.gen_bool(0.5) {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                PhasePoint::new(x, p)
            })
            .collect()
    }

    #[test]
    fn inverse_consistency() {
        for label in ["quadratic-offdiag", "randers-dual"] {
            let s = structure(label, 3);
            for z in sample_points(3, 20, 11) {
                let st = GeometryState::build(&s, &z).unwrap();
                let err = matrix_inf_norm(&(&st.g_up * &st.g_lo - DMatrix::identity(3, 3)));
                assert!(err <= 1e-12 * st.cond_g, "{label}: {err}");
            }
        }
    }

    #[test]
    fn eq_1_7_identities() {
        for label in metrics::BUILTIN_LABELS {
            let s = structure(label, 3);
            let mut checked = 0;
            for z in sample_points(3, 200, 23) {
                if !s.validity.admits(&z) {
                    continue;
                }
                let st = match GeometryState::build(&s, &z) {
                    Ok(st) => st,
                    Err(_) => continue,
                };
                checked += 1;
                // p^i = g^{ij} p_j
                let p = DVector::from_column_slice(&z.p);
                let lhs = &st.g_up * &p;
                let pn = st.p_up.norm();
                assert!((lhs - &st.p_up).amax() <= 1e-10 * (1.0 + pn), "{label}");
                // K^2 = p_i p^i
                let k2 = st.p_up.dot(&p);
                assert!((k2 - st.k2).abs() <= 1e-10 * (1.0 + st.k2), "{label}");
                // C^{ijk} p_k = 0
                let c_scale = st.cartan_t.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                for i in 0..3 {
                    for j in 0..3 {
                        let v: f64 = (0..3).map(|k| st.cartan_t[(i, j, k)] * z.p[k]).sum();
                        assert!(v.abs() <= 1e-10 * (1.0 + c_scale), "{label}");
                    }
                }
            }
            assert!(checked >= 100, "{label}: only {checked} admissible points");
        }
    }

    #[test]
    fn scale_equivariance() {
        let s = structure("randers-dual", 3);
        let lambda = 1.7;
        for z in sample_points(3, 30, 5) {
            let st = GeometryState::build(&s, &z).unwrap();
            let st2 = GeometryState::build(&s, &z.scale_p(lambda)).unwrap();
            let gs = st.g_up.amax();
            assert!((&st2.g_up - &st.g_up).amax() <= 1e-10 * (1.0 + gs));
            assert!(
                (&st2.p_up - &st.p_up.scale(lambda)).amax() <= 1e-10 * (1.0 + lambda * st.p_up.amax())
            );
            assert!((st2.k2 - lambda * lambda * st.k2).abs() <= 1e-10 * (1.0 + st.k2));
            // N is 1-homogeneous
            assert!(
                (&st2.nconn - &st.nconn.scale(lambda)).amax()
                    <= 1e-10 * (1.0 + st.nconn.amax() * lambda)
            );
        }
    }

    #[test]
    fn not_positive_definite_is_reported() {
        // K^2 = p1^2 - p2^2 has an indefinite Hessian.
        let desc = metrics::from_expression("p1^2 - p2^2", 2, "indefinite").unwrap();
        let s = CartanStructure::from_descriptor(desc);
        let z = PhasePoint::new(vec![0.0, 0.0], vec![2.0, 1.0]);
        let err = GeometryState::build(&s, &z);
        assert!(matches!(err, Err(CartanError::NotPositiveDefinite)));
    }

    #[test]
    fn jet_inverse_matches_analytic_derivative_rule() {
        // d(g^{-1}) = -g^{-1} (dg) g^{-1}, checked entrywise on first
        // momentum derivatives for a p-dependent metric.
        let s = structure("randers-dual", 2);
        let z = PhasePoint::new(vec![0.2, -0.4], vec![1.1, 0.8]);
        let st = GeometryState::build(&s, &z).unwrap();
        for k in 0..2 {
            let mut dg = DMatrix::zeros(2, 2);
            for i in 0..2 {
                for j in 0..2 {
                    dg[(i, j)] = st.dg_up_dp[(i, j, k)];
                }
            }
            let expected = -&st.g_lo * dg * &st.g_lo;
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(
                        st.dg_lo_dp[(i, j, k)],
                        expected[(i, j)],
                        epsilon = 1e-12,
                        max_relative = 1e-10
                    );
                }
            }
        }
    }
}
