//! Geometry of a fixed fiber leaf (base point frozen): the fiber
//! Levi-Civita connection of the metric `g^{ij}(a, p)`, its covariant
//! derivative identities for the radial apparatus, the geodesic/umbilic
//! statements for the Liouville foliation, and the vanishing of sectional
//! curvature on radial plane sections.
//!
//! The Christoffel symbols of the fiber metric are `-C_i^{jk}` in terms of
//! the printed contraction `C_i^{jk} = g_{is} C^{sjk}`: the sign is fixed
//! by metric compatibility, which the Levi-Civita certification below
//! enforces numerically. Every identity that contracts the Christoffel
//! term against the momenta is insensitive to this sign because
//! `C_i^{jk} p_j = 0`.

use ndarray::{Array3, Array4};

use crate::error::Result;
use crate::frames::Field;
use crate::jets::Jet;
use crate::liouville::{liouville_data, proj_jets, reduced_vertical_basis};
use crate::state::{m2, GeometryState};

pub struct FiberConnection {
    /// `C_i^{jk} = g_{is} C^{sjk}`, indexed `[i][j][k]`.
    pub c_low: Array3<f64>,
    /// The same entries as jets, for derivative extraction.
    pub c_low_j: Vec<Jet>,
    /// `d C_i^{jk} / dp_l`, indexed `[i][j][k][l]`.
    pub dc_dp: Array4<f64>,
    /// Agreement of the two printed forms
    /// `-1/2 g_{is} dg^{sk}/dp_j` and `g_{is} C^{sjk}`.
    pub forms_residual: f64,
}

pub fn fiber_connection(st: &GeometryState) -> FiberConnection {
    let n = st.n;
    // C^{sjk} as jets (third momentum derivatives of the master jet)
    let mut cart_j = Vec::with_capacity(n * n * n);
    for s in 0..n {
        let ds = st.k2_j.d_p(s);
        for j in 0..n {
            let dsj = ds.d_p(j);
            for k in 0..n {
                cart_j.push(dsj.d_p(k).scale(-0.25));
            }
        }
    }
    let mut c_low_j = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = Jet::constant(&st.space, 0.0);
                for s in 0..n {
                    acc = &acc + &(st.g_lo_at(i, s) * &cart_j[(s * n + j) * n + k]);
                }
                c_low_j.push(acc);
            }
        }
    }
    let c_low = Array3::from_shape_fn((n, n, n), |(i, j, k)| c_low_j[(i * n + j) * n + k].value());
    let dc_dp = Array4::from_shape_fn((n, n, n, n), |(i, j, k, l)| {
        c_low_j[(i * n + j) * n + k].partial(&[], &[l])
    });

    let scale = c_low.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mut forms_residual = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let alt: f64 = -0.5
                    * (0..n)
                        .map(|s| st.g_lo[(i, s)] * st.dg_up_dp[(s, k, j)])
                        .sum::<f64>();
                forms_residual =
                    forms_residual.max((alt - c_low[(i, j, k)]).abs() / (1.0 + scale));
            }
        }
    }

    FiberConnection {
        c_low,
        c_low_j,
        dc_dp,
        forms_residual,
    }
}

/// Contraction residual `C_i^{jk} p_j = 0`, normalized.
pub fn contraction_residual(st: &GeometryState, fib: &FiberConnection) -> f64 {
    let n = st.n;
    let scale = fib.c_low.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for k in 0..n {
            let v: f64 = (0..n).map(|j| fib.c_low[(i, j, k)] * st.point.p[j]).sum();
            worst = worst.max(v.abs() / (1.0 + scale));
        }
    }
    worst
}

/// Covariant derivative of a vertical field along a vertical direction,
/// `(nabla_X Y)_k = X_i dY_k/dp_i - C_k^{ij} X_i Y_j`. The direction
/// enters tensorially through its values.
pub fn cov_deriv(st: &GeometryState, fib: &FiberConnection, x: &[f64], y: &[Jet]) -> Vec<f64> {
    let n = st.n;
    (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..n {
                acc += x[i] * y[k].partial(&[], &[i]);
            }
            for i in 0..n {
                for j in 0..n {
                    acc -= fib.c_low[(k, i, j)] * x[i] * y[j].value();
                }
            }
            acc
        })
        .collect()
}

fn vert_values(y: &[Jet]) -> Vec<f64> {
    y.iter().map(|j| j.value()).collect()
}

fn const_vert(st: &GeometryState, v: &[f64]) -> Vec<Jet> {
    v.iter().map(|&c| Jet::constant(&st.space, c)).collect()
}

fn nres(err: f64, scale: f64) -> f64 {
    err.abs() / (1.0 + scale.abs())
}

/// Directional derivative of a scalar jet along a vertical direction.
fn vert_deriv(f: &Jet, x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi * f.partial(&[], &[i]))
        .sum()
}

/// Levi-Civita certification: metric compatibility and torsion-freeness of
/// the fiber connection on random polynomial vertical fields. This
/// validates the connection independently of any printed formula.
pub fn levi_civita_residual(
    st: &GeometryState,
    fib: &FiberConnection,
    rng: &mut impl rand::Rng,
) -> f64 {
    let n = st.n;
    let mut worst = 0.0_f64;
    for _ in 0..4 {
        let xf = crate::frames::random_vertical(st, rng);
        let yf = crate::frames::random_vertical(st, rng);
        let zf = crate::frames::random_vertical(st, rng);
        let x: Vec<Jet> = xf.c[n..].to_vec();
        let y: Vec<Jet> = yf.c[n..].to_vec();
        let z: Vec<Jet> = zf.c[n..].to_vec();
        let xv = vert_values(&x);
        let yv = vert_values(&y);
        let zv = vert_values(&z);
        let scale = (1.0 + st.g_up.amax())
            * xv.iter().chain(&yv).chain(&zv).fold(1.0_f64, |a, &b| a.max(b.abs()));

        // metric compatibility: X G(Y,Z) = G(nabla_X Y, Z) + G(Y, nabla_X Z)
        let mut gyz = Jet::constant(&st.space, 0.0);
        for i in 0..n {
            for j in 0..n {
                gyz = &gyz + &(&(&y[i] * &z[j]) * st.g_up_at(i, j));
            }
        }
        let lhs = vert_deriv(&gyz, &xv);
        let dxy = cov_deriv(st, fib, &xv, &y);
        let dxz = cov_deriv(st, fib, &xv, &z);
        let rhs = st.g_vert(&dxy, &zv) + st.g_vert(&yv, &dxz);
        worst = worst.max(nres(lhs - rhs, scale));

        // torsion-freeness: nabla_X Y - nabla_Y X = [X, Y]
        let dyx = cov_deriv(st, fib, &yv, &x);
        for k in 0..n {
            let bracket: f64 = (0..n)
                .map(|i| xv[i] * y[k].partial(&[], &[i]) - yv[i] * x[k].partial(&[], &[i]))
                .sum();
            worst = worst.max(nres(dxy[k] - dyx[k] - bracket, scale));
        }
    }
    worst
}

/// The three covariant-derivative identities of the radial apparatus:
/// `nabla_X (C*/K) = PX/K`, `(nabla_X zeta) Y = G(PX, PY)/K`, and
/// `(nabla_X P) Y = -[G(PX, PY) C* + K zeta(Y) PX] / K^2`.
pub fn lemma_cov_deriv_suite(
    st: &GeometryState,
    fib: &FiberConnection,
    rng: &mut impl rand::Rng,
) -> f64 {
    let n = st.n;
    let k_inv = st.k_j.recip().expect("K > 0");
    let radial: Vec<Jet> = (0..n).map(|j| &st.p_var[j] * &k_inv).collect();
    let zeta_j: Vec<Jet> = (0..n).map(|j| &st.p_up_j[j] * &k_inv).collect();
    let pj = proj_jets(st);
    let mut worst = 0.0_f64;

    let mut directions: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    directions.push(st.point.p.clone()); // X = C*: PX = 0 degenerate case

    for xv in &directions {
        let px = st.p_project(xv);
        // (2.12)
        let lhs = cov_deriv(st, fib, xv, &radial);
        for k in 0..n {
            worst = worst.max(nres(lhs[k] - px[k] / st.k, 1.0));
        }

        let yv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = const_vert(st, &yv);
        let py = st.p_project(&yv);

        // (2.13): X(zeta(Y)) - zeta(nabla_X Y) = G(PX, PY)/K
        let mut zeta_of_y = Jet::constant(&st.space, 0.0);
        for j in 0..n {
            zeta_of_y = &zeta_of_y + &(&y[j] * &zeta_j[j]);
        }
        let dxy = cov_deriv(st, fib, xv, &y);
        let lhs = vert_deriv(&zeta_of_y, xv) - st.zeta_vert(&dxy);
        let rhs = st.g_vert(&px, &py) / st.k;
        worst = worst.max(nres(lhs - rhs, rhs));

        // (2.14): nabla_X (PY) - P(nabla_X Y) = -[G(PX,PY) C* + K zeta(Y) PX]/K^2
        let mut py_field = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = Jet::constant(&st.space, 0.0);
            for i in 0..n {
                acc = &acc + &(&pj[m2(n, j, i)] * &y[i]);
            }
            py_field.push(acc);
        }
        let dx_py = cov_deriv(st, fib, xv, &py_field);
        let p_dxy = st.p_project(&dxy);
        let zy = st.zeta_vert(&yv);
        for k in 0..n {
            let lhs = dx_py[k] - p_dxy[k];
            let rhs = -(st.g_vert(&px, &py) * st.point.p[k] + st.k * zy * px[k]) / st.k2;
            worst = worst.max(nres(lhs - rhs, 1.0));
        }
    }
    worst
}

/// Geodesic residual of the unit radial flow: `|| nabla_{C*/K} (C*/K) ||_G`.
pub fn geodesic_residual(st: &GeometryState, fib: &FiberConnection) -> f64 {
    let n = st.n;
    let k_inv = st.k_j.recip().expect("K > 0");
    let radial: Vec<Jet> = (0..n).map(|j| &st.p_var[j] * &k_inv).collect();
    let xv: Vec<f64> = st.point.p.iter().map(|&v| v / st.k).collect();
    let d = cov_deriv(st, fib, &xv, &radial);
    let sq = st.g_vert(&d, &d).max(0.0);
    nres(sq.sqrt(), 1.0)
}

/// Umbilicity of the Liouville leaves inside a fiber: the second
/// fundamental form along the unit radial normal satisfies
/// `zeta(nabla_X Y) = -G(X, Y)/K` on adapted fields, and its trace gives
/// mean curvature `-1/K`.
pub fn umbilic_residual(st: &GeometryState, fib: &FiberConnection, p_floor: f64) -> Result<f64> {
    let n = st.n;
    let rb = reduced_vertical_basis(st, p_floor)?;
    let data = liouville_data(st);
    let mut worst = 0.0_f64;

    let mut h = nalgebra::DMatrix::zeros(n - 1, n - 1);
    let mut second = nalgebra::DMatrix::zeros(n - 1, n - 1);
    for a in 0..n - 1 {
        let xa: Vec<f64> = (0..n).map(|i| data.e_rows[(a, i)]).collect();
        for b in 0..n - 1 {
            let yb: Vec<Jet> = rb.fields[b].c[n..].to_vec();
            let ybv = vert_values(&yb);
            let d = cov_deriv(st, fib, &xa, &yb);
            let gxy = st.g_vert(&xa, &ybv);
            let ii = st.zeta_vert(&d);
            worst = worst.max(nres(ii + gxy / st.k, gxy));
            h[(a, b)] = gxy;
            second[(a, b)] = ii;
        }
    }
    // mean curvature along C*/K equals -1/K
    if let Some(h_inv) = h.clone().try_inverse() {
        let trace = (h_inv * second).trace() / (n as f64 - 1.0);
        worst = worst.max(nres(trace + 1.0 / st.k, 1.0 / st.k));
    } else {
        worst = worst.max(1.0);
    }
    Ok(worst)
}

/// Sectional-curvature numerator `G(R(X, C*) C*, X)` for a vertical `X`;
/// the radial plane sections are flat, so the exact value is zero.
/// Normalized by the squared plane area scale `||X||_G^2 K^2`.
pub fn flat_section_residual(st: &GeometryState, fib: &FiberConnection, x: &[f64]) -> f64 {
    let n = st.n;
    let p = &st.point.p;
    let mut w = vec![0.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                for l in 0..n {
                    let pj_pl = p[j] * p[l];
                    if pj_pl == 0.0 {
                        continue;
                    }
                    // R_k^{ijl} = -dC_k^{jl}/dp_i + dC_k^{il}/dp_j
                    //            + C_k^{im} C_m^{jl} - C_k^{jm} C_m^{il}
                    let mut r = -fib.dc_dp[(k, j, l, i)] + fib.dc_dp[(k, i, l, j)];
                    for m in 0..n {
                        r += fib.c_low[(k, i, m)] * fib.c_low[(m, j, l)]
                            - fib.c_low[(k, j, m)] * fib.c_low[(m, i, l)];
                    }
                    acc += r * x[i] * pj_pl;
                }
            }
        }
        w[k] = acc;
    }
    let num = st.g_vert(&w, x);
    let scale = st.g_vert(x, x) * st.k2;
    num.abs() / (1.0 + scale)
}

/// Unnormalized sectional numerator, for tensoriality checks.
pub fn sectional_numerator(st: &GeometryState, fib: &FiberConnection, x: &[f64]) -> f64 {
    let n = st.n;
    let p = &st.point.p;
    let mut w = vec![0.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let mut r = -fib.dc_dp[(k, j, l, i)] + fib.dc_dp[(k, i, l, j)];
                    for m in 0..n {
                        r += fib.c_low[(k, i, m)] * fib.c_low[(m, j, l)]
                            - fib.c_low[(k, j, m)] * fib.c_low[(m, i, l)];
                    }
                    acc += r * x[i] * p[j] * p[l];
                }
            }
        }
        w[k] = acc;
    }
    st.g_vert(&w, x)
}

/// Consistency of the geodesic statement with the covariant-derivative
/// identity at the radial direction: both paths compute the same vector.
pub fn geodesic_consistency(st: &GeometryState, fib: &FiberConnection) -> f64 {
    let n = st.n;
    let k_inv = st.k_j.recip().expect("K > 0");
    let radial: Vec<Jet> = (0..n).map(|j| &st.p_var[j] * &k_inv).collect();
    let xv: Vec<f64> = st.point.p.iter().map(|&v| v / st.k).collect();
    let via_geodesic = cov_deriv(st, fib, &xv, &radial);
    let px = st.p_project(&xv); // = 0 for the radial direction
    let mut worst = 0.0_f64;
    for k in 0..n {
        worst = worst.max(nres(via_geodesic[k] - px[k] / st.k, 1.0));
    }
    worst
}

/// The adapted fields stay inside the unit-level sets: `vbar^a (K) = 0`.
pub fn level_set_tangency(st: &GeometryState) -> f64 {
    let n = st.n;
    let mut worst = 0.0_f64;
    for a in 0..n {
        let f = Field::vbar(st, a);
        let d = crate::frames::dir_deriv(st, &f, &st.k_j);
        worst = worst.max(nres(d, st.k));
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

    fn state(label: &str, x: Vec<f64>, p: Vec<f64>) -> GeometryState {
        let s: Arc<CartanStructure> =
            CartanStructure::from_descriptor(metrics::builtin(label, x.len()).unwrap());
        GeometryState::build(&s, &PhasePoint::new(x, p)).unwrap()
    }

    fn rand_state(label: &str, seed: u64) -> GeometryState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.4..1.4)).collect();
        state(label, x, p)
    }

    #[test]
    fn quadratic_metrics_have_flat_fibers() {
        let st = rand_state("quadratic-offdiag", 5);
        let fib = fiber_connection(&st);
        assert!(fib.c_low.iter().all(|v| v.abs() < 1e-12));
        assert!(fib.forms_residual < 1e-12);
        let x = [0.3, -0.8, 0.5];
        assert!(flat_section_residual(&st, &fib, &x) < 1e-12);
    }

    #[test]
    fn printed_forms_agree_and_contraction_vanishes() {
        for label in ["randers-dual", "quartic-root"] {
            let st = rand_state(label, 15);
            let fib = fiber_connection(&st);
            assert!(fib.forms_residual <= 1e-11, "{label}");
            assert!(contraction_residual(&st, &fib) <= 1e-10, "{label}");
        }
    }

    #[test]
    fn constant_field_on_quadratic_metric_differentiates_trivially() {
        let st = rand_state("quadratic-diag", 25);
        let fib = fiber_connection(&st);
        let y = const_vert(&st, &[1.0, -2.0, 0.5]);
        let x = [0.4, 0.1, -0.9];
        let d = cov_deriv(&st, &fib, &x, &y);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn levi_civita_certification() {
        for label in metrics::BUILTIN_LABELS {
            let st = rand_state(label, 35);
            let fib = fiber_connection(&st);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let r = levi_civita_residual(&st, &fib, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn euclidean_radial_identity_closed_form() {
        // nabla_X (p/||p||) = (I - unit unit^T) X / ||p||
        let st = state("euclidean", vec![0.0, 0.0], vec![3.0, 4.0]);
        let fib = fiber_connection(&st);
        let k_inv = st.k_j.recip().unwrap();
        let radial: Vec<Jet> = (0..2).map(|j| &st.p_var[j] * &k_inv).collect();
        let x = [1.0, -0.5];
        let d = cov_deriv(&st, &fib, &x, &radial);
        let unit = [0.6, 0.8];
        for k in 0..2 {
            let proj: f64 = x[k] - unit[k] * (unit[0] * x[0] + unit[1] * x[1]);
            assert!((d[k] - proj / 5.0).abs() < 1e-13);
        }
    }

    #[test]
    fn lemma_identities() {
        for label in metrics::BUILTIN_LABELS {
            let st = rand_state(label, 45);
            let fib = fiber_connection(&st);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let r = lemma_cov_deriv_suite(&st, &fib, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn radial_rays_are_geodesics() {
        for label in metrics::BUILTIN_LABELS {
            let st = rand_state(label, 55);
            let fib = fiber_connection(&st);
            let r = geodesic_residual(&st, &fib);
            assert!(r <= 1e-10, "{label}: {r}");
            assert!(geodesic_consistency(&st, &fib) <= 1e-12, "{label}");
        }
    }

    #[test]
    fn umbilic_and_mean_curvature() {
        for label in metrics::BUILTIN_LABELS {
            let st = rand_state(label, 65);
            let fib = fiber_connection(&st);
            let r = umbilic_residual(&st, &fib, 0.05).unwrap();
            assert!(r <= 1e-10, "{label}: {r}");
        }
        // scaling: the -1/K factor tracks K = c across homotheties
        let base = rand_state("randers-dual", 66);
        for c in [0.5, 1.0, 2.0] {
            let z = base.point.scale_p(c / base.k);
            let st = GeometryState::build(&base.structure, &z).unwrap();
            assert!((st.k - c).abs() < 1e-12);
            let fib = fiber_connection(&st);
            assert!(umbilic_residual(&st, &fib, 0.05).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn flat_sections_for_nonquadratic_metrics() {
        for label in ["randers-dual", "quartic-root"] {
            let st = rand_state(label, 75);
            let fib = fiber_connection(&st);
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..5 {
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = st.p_project(&raw);
                let r = flat_section_residual(&st, &fib, &x);
                assert!(r <= 1e-7, "{label}: {r}");
            }
        }
    }

    #[test]
    fn degenerate_plane_with_radial_x() {
        let st = rand_state("randers-dual", 85);
        let fib = fiber_connection(&st);
        let r = flat_section_residual(&st, &fib, &st.point.p);
        assert!(r <= 1e-12);
    }

    #[test]
    fn sectional_numerator_is_quadratic_in_x() {
        let st = rand_state("quartic-root", 95);
        let fib = fiber_connection(&st);
        let x = st.p_project(&[0.7, -0.2, 0.4]);
        let n1 = sectional_numerator(&st, &fib, &x);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let n2 = sectional_numerator(&st, &fib, &x2);
        // both are residual-scale zeros; tensoriality must hold at the
        // roundoff level of the curvature assembly
        assert!((n2 - 4.0 * n1).abs() <= 1e-9 * (1.0 + n1.abs()));
    }

    #[test]
    fn level_sets_are_tangent_to_vbar() {
        let st = rand_state("randers-dual", 105);
        assert!(level_set_tangency(&st) <= 1e-11);
    }
}
