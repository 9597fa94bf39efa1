//! Linear connections adapted to the vertical and Liouville foliations:
//! the canonical metrical horizontal coefficients, the Vrănceanu
//! connection with its torsion and the Reinhart criterion, and the
//! Vaisman-type connection on the vertical bundle with its defining
//! axiom certificate.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;

use crate::error::{CartanError, Result};
use crate::frames::{dir_deriv, lie_bracket, Field};
use crate::jets::Jet;
use crate::liouville::liouville_data;
use crate::state::{matrix_inf_norm, GeometryState, COND_GUARD};

fn nres(err: f64, scale: f64) -> f64 {
    err.abs() / (1.0 + scale.abs())
}

/// `delta_j` derivative of the lower fundamental tensor:
/// `delta_j g_{sk} = dg_{sk}/dx_j + N_{jh} dg_{sk}/dp_h`.
fn delta_g_lower(st: &GeometryState, j: usize, s: usize, k: usize) -> f64 {
    let n = st.n;
    let mut acc = st.dg_lo_dx[(s, k, j)];
    for h in 0..n {
        acc += st.nconn[(j, h)] * st.dg_lo_dp[(s, k, h)];
    }
    acc
}

/// Canonical metrical horizontal coefficients
/// `H^i_{jk} = 1/2 g^{is} (delta_j g_{sk} + delta_k g_{js} - delta_s g_{jk})`,
/// indexed `[i][j][k]` and symmetric in `(j, k)`.
pub fn canonical_h(st: &GeometryState) -> Array3<f64> {
    let n = st.n;
    Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut acc = 0.0;
        for s in 0..n {
            acc += st.g_up[(i, s)]
                * (delta_g_lower(st, j, s, k) + delta_g_lower(st, k, j, s)
                    - delta_g_lower(st, s, j, k));
        }
        0.5 * acc
    })
}

/// Metric-compatibility residual of the canonical coefficients:
/// `delta_k g_{ij} - H^s_{ik} g_{sj} - H^s_{jk} g_{is}`.
pub fn canonical_h_metrical_residual(st: &GeometryState, h: &Array3<f64>) -> f64 {
    let n = st.n;
    let scale = st.g_lo.amax() * (1.0 + h.iter().fold(0.0_f64, |a, &v| a.max(v.abs())));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut r = delta_g_lower(st, k, i, j);
                for s in 0..n {
                    r -= h[(s, i, k)] * st.g_lo[(s, j)] + h[(s, j, k)] * st.g_lo[(i, s)];
                }
                worst = worst.max(nres(r, scale));
            }
        }
    }
    worst
}

/// Local coefficients of the Vrănceanu connection in the adapted frame.
pub struct VranceanuConnection {
    /// `Č^{ij}_k` with `∇_{d/dp_j} d/dp_i = Č^{ij}_k d/dp_k`, indexed `[i][j][k]`.
    pub c_coeff: Array3<f64>,
    /// `Ď^i_{jk}` with `∇_{delta_j} d/dp_i = Ď^i_{jk} d/dp_k`, indexed `[i][j][k]`.
    pub d_coeff: Array3<f64>,
    /// `F̌^k_{ij} = H^k_{ij}` with `∇_{delta_j} delta_i = F̌^k_{ij} delta_k`,
    /// indexed `[k][i][j]`. The mixed coefficient `Ľ` vanishes identically.
    pub f_coeff: Array3<f64>,
    /// Torsion components `Ť_{ijk}` of `Ť(delta_i, delta_j) = Ť_{ijk} d/dp_k`,
    /// antisymmetrized: `delta_i N_{jk} - delta_j N_{ik}`.
    pub torsion: Array3<f64>,
}

/// `delta_i N_{jk} = dN_{jk}/dx_i + N_{ih} dN_{jk}/dp_h`.
fn delta_n(st: &GeometryState, i: usize, j: usize, k: usize) -> f64 {
    let n = st.n;
    let mut acc = st.dn_dx[(j, k, i)];
    for h in 0..n {
        acc += st.nconn[(i, h)] * st.dn_dp[(j, k, h)];
    }
    acc
}

pub fn vranceanu(st: &GeometryState) -> VranceanuConnection {
    let n = st.n;
    let c_coeff = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let mut acc = 0.0;
        for h in 0..n {
            acc += st.g_lo[(k, h)] * st.cartan_t[(h, i, j)];
        }
        -acc
    });
    let d_coeff = Array3::from_shape_fn((n, n, n), |(i, j, k)| -st.dn_dp[(j, k, i)]);
    let h = canonical_h(st);
    let f_coeff = h;
    let torsion =
        Array3::from_shape_fn((n, n, n), |(i, j, k)| delta_n(st, i, j, k) - delta_n(st, j, i, k));
    VranceanuConnection {
        c_coeff,
        d_coeff,
        f_coeff,
        torsion,
    }
}

/// The torsion components against their ground truth: the vertical part of
/// the horizontal bracket `[delta_i, delta_j]`, computed by the generic
/// field-calculus path.
pub fn torsion_bracket_residual(st: &GeometryState, vr: &VranceanuConnection) -> f64 {
    let n = st.n;
    let scale = vr.torsion.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let br = lie_bracket(st, &Field::delta(st, i), &Field::delta(st, j));
            for m in 0..n {
                worst = worst.max(nres(br[m], scale)); // bracket is vertical
            }
            for k in 0..n {
                worst = worst.max(nres(br[n + k] - vr.torsion[(i, j, k)], scale));
            }
        }
    }
    worst
}

/// Reinhart criterion: `max |dg_{ij}/dp_k|`, normalized by the tensor
/// scale. Zero exactly when the fundamental tensor is momentum-free.
pub fn reinhart_residual(st: &GeometryState) -> f64 {
    let scale = st.g_lo.amax();
    st.dg_lo_dp.iter().fold(0.0_f64, |a, &v| a.max(v.abs())) / (1.0 + scale)
}

/// The Vaisman-type connection on the vertical bundle in the adapted basis
/// `{vbar^1..vbar^{n-1}, C*}`.
pub struct VaismanConnection {
    /// Induced metric block `h^{ab} = g^{ab} - K^2 t^a t^b`, `(n-1) x (n-1)`.
    pub h_block: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// `s^{ab}_c` with `∇_{vbar^b} vbar^a = s^{ab}_c vbar^c`, indexed `[a][b][c]`.
    pub s_coeff: Array3<f64>,
    /// `s^a_b = -delta^a_b` with `∇_{C*} vbar^a = s^a_b vbar^b`.
    pub s_mixed: DMatrix<f64>,
    /// `s^a = 0` with `∇_{vbar^a} C* = s^a C*`.
    pub s_vert: DVector<f64>,
    /// `s = 1` with `∇_{C*} C* = s C*`.
    pub s_scalar: f64,
    /// `beta^a_{bi}` with `∇_{delta_i} vbar^a = beta^a_{bi} vbar^b`, indexed `[a][b][i]`.
    pub beta: Array3<f64>,
    /// `beta_i = 0` with `∇_{delta_i} C* = beta_i C*`.
    pub beta_scalar: DVector<f64>,
    /// Measured distance of the horizontal defining data from the Liouville
    /// distribution: `max |zeta(vbar^a(N_{ij}) d/dp_j)|`, recorded per point.
    pub projection_defect: f64,
}

pub fn vaisman(st: &GeometryState, p_floor: f64) -> Result<VaismanConnection> {
    let n = st.n;
    if st.point.pn_ratio() < p_floor {
        return Err(CartanError::AdaptedBasisDegenerate {
            pn_abs: st.point.p[n - 1].abs(),
            floor: p_floor * st.point.p_norm(),
        });
    }
    let data = liouville_data(st);
    let m = n - 1;
    let h_block = DMatrix::from_fn(m, m, |a, b| {
        st.g_up[(a, b)] - st.k2 * data.t[a] * data.t[b]
    });
    let h_inv = h_block
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| CartanError::HBlockSingular(f64::INFINITY))?;
    let cond = matrix_inf_norm(&h_block) * matrix_inf_norm(&h_inv);
    if cond > COND_GUARD {
        return Err(CartanError::HBlockSingular(cond));
    }

    // D[a][b][c] = vbar^a (g^{bc}), a directional derivative along the
    // adapted vertical field.
    let big_d = Array3::from_shape_fn((m, m, m), |(a, b, c)| {
        (0..n)
            .map(|i| data.e_rows[(a, i)] * st.dg_up_dp[(b, c, i)])
            .sum::<f64>()
    });
    // s^{ba}_d = 1/2 h_{dc} vbar^a(g^{bc}) - t^b delta^a_d  (c summed over
    // the block, a fixed). Stored as s_coeff[(b, a, d)]: argument first,
    // direction second.
    let mut s_coeff = Array3::zeros((m, m, m));
    for b in 0..m {
        for a in 0..m {
            for d in 0..m {
                let mut acc = 0.0;
                for c in 0..m {
                    acc += h_inv[(d, c)] * big_d[(a, b, c)];
                }
                let mut v = 0.5 * acc;
                if a == d {
                    v -= data.t[b];
                }
                s_coeff[(b, a, d)] = v;
            }
        }
    }

    let s_mixed = DMatrix::from_fn(m, m, |a, b| if a == b { -1.0 } else { 0.0 });
    let s_vert = DVector::zeros(m);
    let s_scalar = 1.0;

    // beta^a_{bi}: the L-projection of vbar^a(N_{ij}) d/dp_j expanded in the
    // adapted basis via the block metric.
    let mut beta = Array3::zeros((m, m, n));
    let mut projection_defect = 0.0_f64;
    for a in 0..m {
        for i in 0..n {
            let v: Vec<f64> = (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| data.e_rows[(a, k)] * st.dn_dp[(i, j, k)])
                        .sum::<f64>()
                })
                .collect();
            let scale = v.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
            projection_defect = projection_defect.max(nres(st.zeta_vert(&v), scale));
            let pv = st.p_project(&v);
            for b in 0..m {
                let mut acc = 0.0;
                for c in 0..m {
                    let e_c: Vec<f64> = (0..n).map(|k| data.e_rows[(c, k)]).collect();
                    acc += h_inv[(b, c)] * st.g_vert(&pv, &e_c);
                }
                beta[(a, b, i)] = acc;
            }
        }
    }

    Ok(VaismanConnection {
        h_block,
        h_inv,
        s_coeff,
        s_mixed,
        s_vert,
        s_scalar,
        beta,
        beta_scalar: DVector::zeros(n),
        projection_defect,
    })
}

/// Residuals of the defining conditions of the Vaisman-type connection,
/// evaluated against an explicit coefficient table (so that perturbed
/// tables can be falsified).
#[derive(Debug, Clone, Copy)]
pub struct VaismanCertificate {
    /// a) images stay in their bundles (radial leakage of the table image).
    pub basis_preservation: f64,
    /// b) torsion projections vanish where required.
    pub torsion: f64,
    /// c) blockwise metric compatibility.
    pub metric_block: f64,
    /// d) horizontal conditions: `beta_i = 0` and the defining expansion.
    pub horizontal: f64,
    /// The displayed vanishing `(nabla_{vbar^a} G)(C*, C*) = 0`.
    pub reinhart_vertical: f64,
    /// Reconstruction of the uniquely determined coefficients.
    pub reconstruction: f64,
}

impl VaismanCertificate {
    pub fn max(&self) -> f64 {
        self.basis_preservation
            .max(self.torsion)
            .max(self.metric_block)
            .max(self.horizontal)
            .max(self.reinhart_vertical)
            .max(self.reconstruction)
    }
}

pub fn vaisman_axiom_certificate(
    st: &GeometryState,
    vc: &VaismanConnection,
    p_floor: f64,
) -> Result<VaismanCertificate> {
    let n = st.n;
    let m = n - 1;
    let data = liouville_data(st);
    let e_row = |a: usize| -> Vec<f64> { (0..n).map(|i| data.e_rows[(a, i)]).collect() };
    let vb: Vec<Field> = (0..m).map(|a| Field::vbar(st, a)).collect();
    let cs = Field::c_star(st);
    let t_scale = 1.0 + data.t.amax();

    // a) radial leakage of table images in the Liouville block
    let mut basis_preservation = 0.0_f64;
    for a in 0..m {
        for b in 0..m {
            let mut w = vec![0.0; n];
            for c in 0..m {
                let e = e_row(c);
                for i in 0..n {
                    w[i] += vc.s_coeff[(a, b, c)] * e[i];
                }
            }
            basis_preservation = basis_preservation.max(nres(st.zeta_vert(&w), t_scale));
        }
    }

    // b) torsion: T(vbar^a, vbar^b) = 0 and T(vbar^a, C*) = 0 entirely,
    // with the brackets computed by the generic path.
    let mut torsion = 0.0_f64;
    for a in 0..m {
        for b in 0..m {
            let br = lie_bracket(st, &vb[a], &vb[b]);
            let mut t_vec = vec![0.0; n];
            for c in 0..m {
                let e = e_row(c);
                for i in 0..n {
                    // nabla_{vbar^a} vbar^b - nabla_{vbar^b} vbar^a
                    t_vec[i] += (vc.s_coeff[(b, a, c)] - vc.s_coeff[(a, b, c)]) * e[i];
                }
            }
            for i in 0..n {
                torsion = torsion.max(nres(t_vec[i] - br[n + i], t_scale));
            }
        }
        // T(vbar^a, C*) = nabla_{vbar^a} C* - nabla_{C*} vbar^a - [vbar^a, C*]
        let br = lie_bracket(st, &vb[a], &cs);
        let ea = e_row(a);
        for i in 0..n {
            let mut nab_c = vc.s_vert[a] * st.point.p[i];
            for b in 0..m {
                nab_c -= vc.s_mixed[(a, b)] * e_row(b)[i];
            }
            torsion = torsion.max(nres(nab_c - br[n + i], t_scale));
        }
        let _ = ea;
    }

    // c) metric compatibility on each block
    let k2_inv = st.k2_j.recip().expect("K^2 > 0");
    let h_jet = |b: usize, c: usize| -> Jet {
        let tt = &(&st.p_up_j[b] * &st.p_up_j[c]) * &k2_inv;
        st.g_up_at(b, c) - &tt
    };
    let mut metric_block = 0.0_f64;
    let h_scale = vc.h_block.amax();
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let lhs = dir_deriv(st, &vb[a], &h_jet(b, c));
                let mut rhs = 0.0;
                for d in 0..m {
                    rhs += vc.s_coeff[(b, a, d)] * vc.h_block[(d, c)]
                        + vc.s_coeff[(c, a, d)] * vc.h_block[(d, b)];
                }
                metric_block = metric_block.max(nres(lhs - rhs, h_scale));
            }
        }
    }
    // the radial block: (nabla_{C*} G)(C*, C*) = C*(K^2) - 2 s K^2
    let ck2 = dir_deriv(st, &cs, &st.k2_j);
    metric_block = metric_block.max(nres(ck2 - 2.0 * vc.s_scalar * st.k2, st.k2));

    // d) beta_i = 0 and the defining expansion of beta
    let mut horizontal = vc.beta_scalar.amax();
    for a in 0..m {
        for i in 0..n {
            let v: Vec<f64> = (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| data.e_rows[(a, k)] * st.dn_dp[(i, j, k)])
                        .sum::<f64>()
                })
                .collect();
            let pv = st.p_project(&v);
            let mut w = vec![0.0; n];
            for b in 0..m {
                let e = e_row(b);
                for j in 0..n {
                    w[j] += vc.beta[(a, b, i)] * e[j];
                }
            }
            let scale = pv.iter().fold(1.0_f64, |acc, &x| acc.max(x.abs()));
            for j in 0..n {
                horizontal = horizontal.max(nres(w[j] - pv[j], scale));
            }
        }
    }

    // (nabla_{vbar^a} G)(C*, C*) = vbar^a(K^2) - 2 G(nabla_{vbar^a} C*, C*)
    let mut reinhart_vertical = 0.0_f64;
    for a in 0..m {
        let lhs = dir_deriv(st, &vb[a], &st.k2_j) - 2.0 * vc.s_vert[a] * st.k2;
        reinhart_vertical = reinhart_vertical.max(nres(lhs, st.k2));
    }

    // uniqueness: the coefficients reproduce their defining formulas
    let fresh = vaisman(st, p_floor)?;
    let s_scale = fresh
        .s_coeff
        .iter()
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
    let mut reconstruction = 0.0_f64;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                reconstruction = reconstruction.max(nres(
                    vc.s_coeff[(a, b, c)] - fresh.s_coeff[(a, b, c)],
                    s_scale,
                ));
            }
            reconstruction = reconstruction
                .max(nres(vc.s_mixed[(a, b)] - fresh.s_mixed[(a, b)], 1.0));
        }
        reconstruction = reconstruction.max(nres(vc.s_vert[a], 1.0));
    }
    reconstruction = reconstruction.max(nres(vc.s_scalar - 1.0, 1.0));

    Ok(VaismanCertificate {
        basis_preservation,
        torsion,
        metric_block,
        horizontal,
        reinhart_vertical,
        reconstruction,
    })
}

/// Symmetry relations of the vertical coefficients forced by the torsion
/// condition: `s^{ab}_c = s^{ba}_c` for `c` outside `{a, b}` and
/// `s^{ba}_b = s^{ab}_b + t^a`.
pub fn torsion_symmetry_residual(st: &GeometryState, vc: &VaismanConnection) -> f64 {
    let m = st.n - 1;
    let data = liouville_data(st);
    let scale = 1.0 + data.t.amax();
    let mut worst = 0.0_f64;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                if c != a && c != b {
                    worst = worst
                        .max(nres(vc.s_coeff[(a, b, c)] - vc.s_coeff[(b, a, c)], scale));
                }
            }
            // the shift relation constrains distinct index pairs only;
            // at a = b the torsion gives no condition
            if a != b {
                worst = worst.max(nres(
                    vc.s_coeff[(b, a, b)] - vc.s_coeff[(a, b, b)] - data.t[a],
                    scale,
                ));
            }
        }
    }
    worst
}

/// Falsifiability margin: perturb each `s^{ab}_c` by `eps` in turn and
/// report the smallest maximal axiom residual over all perturbations. A
/// sound axiom system rejects every perturbation.
pub fn falsifiability_margin(st: &GeometryState, p_floor: f64, eps: f64) -> Result<f64> {
    let vc = vaisman(st, p_floor)?;
    let m = st.n - 1;
    let mut margin = f64::INFINITY;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let mut perturbed = VaismanConnection {
                    h_block: vc.h_block.clone(),
                    h_inv: vc.h_inv.clone(),
                    s_coeff: vc.s_coeff.clone(),
                    s_mixed: vc.s_mixed.clone(),
                    s_vert: vc.s_vert.clone(),
                    s_scalar: vc.s_scalar,
                    beta: vc.beta.clone(),
                    beta_scalar: vc.beta_scalar.clone(),
                    projection_defect: vc.projection_defect,
                };
                perturbed.s_coeff[(a, b, c)] += eps;
                let cert = vaisman_axiom_certificate(st, &perturbed, p_floor)?;
                margin = margin.min(cert.max());
            }
        }
    }
    Ok(margin)
}

/// The two connections restricted to the vertical bundle disagree on the
/// radial argument: the Vrănceanu side gives `∇_{vbar^a} C* = vbar^a`
/// while the Vaisman side gives zero. Returns the residuals of both
/// asserted values.
pub fn vranceanu_vaisman_contrast(
    st: &GeometryState,
    vr: &VranceanuConnection,
    vc: &VaismanConnection,
) -> f64 {
    let n = st.n;
    let data = liouville_data(st);
    let mut worst = 0.0_f64;
    for a in 0..n - 1 {
        // Vrănceanu: ∇_{vbar^a} C* = E^a_j [ d/dp_j + p_i Č^{ij}_k d/dp_k ]
        let mut v = vec![0.0; n];
        for j in 0..n {
            let e = data.e_rows[(a, j)];
            v[j] += e;
            for i in 0..n {
                for k in 0..n {
                    v[k] += e * st.point.p[i] * vr.c_coeff[(i, j, k)];
                }
            }
        }
        for j in 0..n {
            worst = worst.max(nres(v[j] - data.e_rows[(a, j)], 1.0));
        }
        // Vaisman: ∇_{vbar^a} C* = s^a C* = 0
        worst = worst.max(nres(vc.s_vert[a], 1.0));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::CartanStructure;
    use crate::metrics;
    use crate::point::PhasePoint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn rand_state(label: &str, seed: u64) -> GeometryState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Arc<CartanStructure> =
            CartanStructure::from_descriptor(metrics::builtin(label, 3).unwrap());
        loop {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.4..1.4)).collect();
            let z = PhasePoint::new(x, p);
            if z.pn_ratio() >= 0.2 && s.validity.admits(&z) {
                return GeometryState::build(&s, &z).unwrap();
            }
        }
    }

    #[test]
    fn flat_metric_h_and_torsion_vanish() {
        let st = rand_state("euclidean", 1);
        let h = canonical_h(&st);
        assert!(h.iter().all(|v| v.abs() < 1e-13));
        let vr = vranceanu(&st);
        assert!(vr.torsion.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn quadratic_metric_h_equals_formal_christoffel() {
        // with a momentum-free fundamental tensor delta reduces to d/dx
        let st = rand_state("quadratic-offdiag", 2);
        let h = canonical_h(&st);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let d = (h[(i, j, k)] - st.gamma[(i, j, k)]).abs();
                    assert!(d <= 1e-10, "H vs gamma: {d}");
                }
            }
        }
    }

    #[test]
    fn h_is_metrical_and_symmetric() {
        for label in ["quadratic-diag", "randers-dual"] {
            let st = rand_state(label, 3);
            let h = canonical_h(&st);
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((h[(i, j, k)] - h[(i, k, j)]).abs() < 1e-11, "{label}");
                    }
                }
            }
            assert!(canonical_h_metrical_residual(&st, &h) <= 1e-10, "{label}");
        }
    }

    #[test]
    fn torsion_matches_bracket() {
        for label in ["quadratic-diag", "quadratic-offdiag", "randers-dual"] {
            let st = rand_state(label, 4);
            let vr = vranceanu(&st);
            let r = torsion_bracket_residual(&st, &vr);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn vertical_coefficient_matches_derivative_oracle_shape() {
        let st = rand_state("randers-dual", 5);
        let vr = vranceanu(&st);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!((vr.d_coeff[(i, j, k)] + st.dn_dp[(j, k, i)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn reinhart_separates_quadratic_from_generic() {
        let quad = rand_state("quadratic-offdiag", 6);
        let rq = reinhart_residual(&quad);
        assert!(rq <= 1e-12, "quadratic metric should be Reinhart: {rq}");
        let rd = rand_state("randers-dual", 6);
        let rr = reinhart_residual(&rd);
        assert!(rr > 1e-3, "randers dual is not Reinhart: {rr}");
        assert!(rr / rq.max(1e-300) >= 1e3, "separation margin");
        let q4 = rand_state("quartic-root", 6);
        assert!(reinhart_residual(&q4) > 1e-3);
    }

    #[test]
    fn reinhart_residual_scales_inversely_with_p() {
        let st = rand_state("randers-dual", 7);
        let st2 = GeometryState::build(&st.structure, &st.point.scale_p(2.0)).unwrap();
        let r1 = reinhart_residual(&st);
        let r2 = reinhart_residual(&st2);
        // dg/dp is (-1)-homogeneous; the normalization scale is unchanged
        assert!((r2 - r1 / 2.0).abs() <= 1e-9 * (1.0 + r1));
    }

    #[test]
    fn vaisman_axioms_hold_for_builtins() {
        for label in metrics::BUILTIN_LABELS {
            let st = rand_state(label, 8);
            let vc = vaisman(&st, 0.05).unwrap();
            let cert = vaisman_axiom_certificate(&st, &vc, 0.05).unwrap();
            assert!(cert.max() <= 1e-10, "{label}: {cert:?}");
            assert!(torsion_symmetry_residual(&st, &vc) <= 1e-11, "{label}");
        }
    }

    #[test]
    fn quadratic_metric_coefficients_close_form() {
        // with dg/dp = 0: s^{ba}_d = -t^b delta^a_d
        let st = rand_state("quadratic-offdiag", 9);
        let vc = vaisman(&st, 0.05).unwrap();
        let data = liouville_data(&st);
        for b in 0..2 {
            for a in 0..2 {
                for d in 0..2 {
                    let expect = if a == d { -data.t[b] } else { 0.0 };
                    assert!((vc.s_coeff[(b, a, d)] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn euclidean_beta_vanishes() {
        let st = rand_state("euclidean", 10);
        let vc = vaisman(&st, 0.05).unwrap();
        assert!(vc.beta.iter().all(|v| v.abs() < 1e-13));
        assert!(vc.projection_defect < 1e-13);
    }

    #[test]
    fn falsifiability_of_perturbed_coefficients() {
        let st = rand_state("randers-dual", 11);
        let margin = falsifiability_margin(&st, 0.05, 1e-3).unwrap();
        assert!(margin > 1e-4, "margin {margin}");
    }

    #[test]
    fn vranceanu_and_vaisman_disagree_as_stated() {
        let st = rand_state("randers-dual", 12);
        let vr = vranceanu(&st);
        let vc = vaisman(&st, 0.05).unwrap();
        assert!(vranceanu_vaisman_contrast(&st, &vr, &vc) <= 1e-10);
    }
}
