//! Adapted frames and pointwise field calculus.
//!
//! The horizontal frame `delta_i = d/dx^i + N_{ij} d/dp_j`, its dual
//! coframe, the Sasaki-lift metric, the natural almost complex structure
//! and the symplectic matrix. Vector fields are represented by their
//! natural-coordinate components as jets, so Lie brackets and the
//! invariant-formula exterior derivative reduce to derivative extraction.

use nalgebra::DMatrix;

use crate::jets::Jet;
use crate::state::{m2, GeometryState};

/// Canonical nonlinear connection data at a point.
#[derive(Debug, Clone)]
pub struct NonlinearConnection {
    pub n: DMatrix<f64>,
    pub dn_dp: ndarray::Array3<f64>,
    pub dn_dx: ndarray::Array3<f64>,
}

pub fn nonlinear_connection(st: &GeometryState) -> NonlinearConnection {
    NonlinearConnection {
        n: st.nconn.clone(),
        dn_dp: st.dn_dp.clone(),
        dn_dx: st.dn_dx.clone(),
    }
}

/// Sasaki-lift structures in natural coordinates (ordering: the `n` base
/// directions, then the `n` momentum directions).
pub struct SasakiData {
    /// Block metric in the adapted coframe: diag(g_lower, g_upper).
    pub g_adapted: DMatrix<f64>,
    pub g_nat: DMatrix<f64>,
    pub j_nat: DMatrix<f64>,
    /// Constant symplectic matrix `[[0, -I], [I, 0]]`.
    pub omega_nat: DMatrix<f64>,
    /// Natural-coordinate metric entries as jets, row-major `2n x 2n`.
    pub g_nat_j: Vec<Jet>,
}

impl SasakiData {
    pub fn build(st: &GeometryState) -> Self {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);

        // m = g_upper * N as jets (both symmetric, so N g = m^T)
        let mut m_j = vec![zero.clone(); n * n];
        for k in 0..n {
            for j in 0..n {
                let mut acc = zero.clone();
                for l in 0..n {
                    acc = &acc + &(st.g_up_at(k, l) * st.n_at(l, j));
                }
                m_j[m2(n, k, j)] = acc;
            }
        }

        let dim = 2 * n;
        let mut g_nat_j = vec![zero; dim * dim];
        for i in 0..n {
            for j in 0..n {
                // xx block: g_{ij} + (N g N)_{ij}
                let mut acc = st.g_lo_at(i, j).clone();
                for k in 0..n {
                    acc = &acc + &(st.n_at(i, k) * &m_j[m2(n, k, j)]);
                }
                g_nat_j[m2(dim, i, j)] = acc;
                // xp block: -(N g)_{ij} = -m_{ji}
                g_nat_j[m2(dim, i, n + j)] = -&m_j[m2(n, j, i)];
                g_nat_j[m2(dim, n + i, j)] = -&m_j[m2(n, i, j)];
                // pp block: g^{ij}
                g_nat_j[m2(dim, n + i, n + j)] = st.g_up_at(i, j).clone();
            }
        }
        let g_nat = DMatrix::from_fn(dim, dim, |i, j| g_nat_j[m2(dim, i, j)].value());

        let nmat = &st.nconn;
        let gu = &st.g_up;
        let gl = &st.g_lo;
        let gn = gu * nmat;
        let mut j_nat = DMatrix::zeros(dim, dim);
        j_nat.view_mut((0, 0), (n, n)).copy_from(&(-&gn));
        j_nat.view_mut((0, n), (n, n)).copy_from(gu);
        j_nat
            .view_mut((n, 0), (n, n))
            .copy_from(&(-(gl + nmat * &gn)));
        j_nat.view_mut((n, n), (n, n)).copy_from(&(nmat * gu));

        let mut omega_nat = DMatrix::zeros(dim, dim);
        for i in 0..n {
            omega_nat[(i, n + i)] = -1.0;
            omega_nat[(n + i, i)] = 1.0;
        }

        let mut g_adapted = DMatrix::zeros(dim, dim);
        g_adapted.view_mut((0, 0), (n, n)).copy_from(gl);
        g_adapted.view_mut((n, n), (n, n)).copy_from(gu);

        SasakiData {
            g_adapted,
            g_nat,
            j_nat,
            omega_nat,
            g_nat_j,
        }
    }

    /// Metric pairing of natural-coordinate vectors.
    pub fn pair(&self, u: &[f64], v: &[f64]) -> f64 {
        let d = self.g_nat.nrows();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += self.g_nat[(i, j)] * u[i] * v[j];
            }
        }
        acc
    }

    /// Symplectic pairing `Omega(u, v)` of natural-coordinate vectors.
    pub fn omega_pair(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.g_nat.nrows() / 2;
        let mut acc = 0.0;
        for i in 0..n {
            acc += u[n + i] * v[i] - u[i] * v[n + i];
        }
        acc
    }

    pub fn apply_j(&self, u: &[f64]) -> Vec<f64> {
        let d = self.j_nat.nrows();
        (0..d)
            .map(|i| (0..d).map(|j| self.j_nat[(i, j)] * u[j]).sum())
            .collect()
    }
}

/// Frame matrix with columns `delta_1..delta_n, dp^1..dp^n` in natural
/// coordinates, and the dual coframe with rows `dx^i, delta p_i`.
pub fn adapted_frame(st: &GeometryState) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = st.n;
    let dim = 2 * n;
    let mut frame = DMatrix::identity(dim, dim);
    let mut coframe = DMatrix::identity(dim, dim);
    for i in 0..n {
        for j in 0..n {
            frame[(n + j, i)] = st.nconn[(i, j)];
            coframe[(n + i, j)] = -st.nconn[(j, i)];
        }
    }
    (frame, coframe)
}

/// A vector field evaluated at the state's base point: `2n` natural
/// components as jets (first the base directions, then the momenta).
#[derive(Clone)]
pub struct Field {
    pub c: Vec<Jet>,
}

impl Field {
    pub fn dim2(&self) -> usize {
        self.c.len()
    }

    pub fn values(&self) -> Vec<f64> {
        self.c.iter().map(|j| j.value()).collect()
    }

    /// Constant extension of a numeric tangent vector; valid wherever no
    /// derivative is taken of this slot.
    pub fn constant(st: &GeometryState, v: &[f64]) -> Field {
        Field {
            c: v.iter().map(|&x| Jet::constant(&st.space, x)).collect(),
        }
    }

    /// Natural basis field `d/dx^i`.
    pub fn coord_x(st: &GeometryState, i: usize) -> Field {
        let mut v = vec![0.0; 2 * st.n];
        v[i] = 1.0;
        Field::constant(st, &v)
    }

    /// Natural basis field `d/dp_i`.
    pub fn coord_p(st: &GeometryState, i: usize) -> Field {
        let mut v = vec![0.0; 2 * st.n];
        v[st.n + i] = 1.0;
        Field::constant(st, &v)
    }

    /// Horizontal frame field `delta_i`.
    pub fn delta(st: &GeometryState, i: usize) -> Field {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);
        let mut c = vec![zero; 2 * n];
        c[i] = Jet::constant(&st.space, 1.0);
        for j in 0..n {
            c[n + j] = st.n_at(i, j).clone();
        }
        Field { c }
    }

    /// Vertical Liouville field `C* = p_i d/dp_i`.
    pub fn c_star(st: &GeometryState) -> Field {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);
        let mut c = vec![zero; 2 * n];
        for i in 0..n {
            c[n + i] = st.p_var[i].clone();
        }
        Field { c }
    }

    /// Horizontal Liouville field `xi* = J(C*) = p^i delta_i`.
    pub fn xi_star(st: &GeometryState) -> Field {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);
        let mut c = vec![zero.clone(); 2 * n];
        for i in 0..n {
            c[i] = st.p_up_j[i].clone();
        }
        for j in 0..n {
            let mut acc = zero.clone();
            for i in 0..n {
                acc = &acc + &(&st.p_up_j[i] * st.n_at(i, j));
            }
            c[n + j] = acc;
        }
        Field { c }
    }

    /// Adapted vertical field `vbar^j = d/dp_j - t^j C*`.
    pub fn vbar(st: &GeometryState, j: usize) -> Field {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);
        let mut c = vec![zero; 2 * n];
        for i in 0..n {
            let mut e = -&(&st.t_j[j] * &st.p_var[i]);
            if i == j {
                e = &e + &Jet::constant(&st.space, 1.0);
            }
            c[n + i] = e;
        }
        Field { c }
    }

    /// Horizontal mirror `xbar^a = J(vbar^a) = E^a_i g^{ij} delta_j`.
    pub fn x_bar(st: &GeometryState, a: usize) -> Field {
        let n = st.n;
        let zero = Jet::constant(&st.space, 0.0);
        // w^j = E^a_i g^{ij}
        let mut w = vec![zero.clone(); n];
        for j in 0..n {
            let mut acc = st.g_up_at(a, j).clone();
            for i in 0..n {
                acc = &acc - &(&(&st.t_j[a] * &st.p_var[i]) * st.g_up_at(i, j));
            }
            w[j] = acc;
        }
        let mut c = vec![zero.clone(); 2 * n];
        for j in 0..n {
            c[j] = w[j].clone();
        }
        for k in 0..n {
            let mut acc = zero.clone();
            for j in 0..n {
                acc = &acc + &(&w[j] * st.n_at(j, k));
            }
            c[n + k] = acc;
        }
        Field { c }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            c: self
                .c
                .iter()
                .zip(&other.c)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale_jet(&self, s: &Jet) -> Field {
        Field {
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Field {
        Field {
            c: self.c.iter().map(|a| a.scale(s)).collect(),
        }
    }
}

/// First derivative of a scalar jet along natural direction `m`
/// (0..n are base coordinates, n..2n momenta), as a value.
fn partial_nat(st: &GeometryState, f: &Jet, m: usize) -> f64 {
    if m < st.n {
        f.partial(&[m], &[])
    } else {
        f.partial(&[], &[m - st.n])
    }
}

/// Directional derivative `X(f)` at the base point.
pub fn dir_deriv(st: &GeometryState, x: &Field, f: &Jet) -> f64 {
    (0..2 * st.n)
        .map(|m| x.c[m].value() * partial_nat(st, f, m))
        .sum()
}

/// Directional derivative as a jet (one order of validity is consumed).
pub fn dir_deriv_jet(st: &GeometryState, x: &Field, f: &Jet) -> Jet {
    let n = st.n;
    let mut acc = Jet::constant(&st.space, 0.0);
    for m in 0..n {
        acc = &acc + &(&x.c[m] * &f.d_x(m));
    }
    for m in 0..n {
        acc = &acc + &(&x.c[n + m] * &f.d_p(m));
    }
    acc
}

/// Lie bracket `[A, B]` evaluated at the base point, componentwise
/// `A(B^k) - B(A^k)` in natural coordinates.
pub fn lie_bracket(st: &GeometryState, a: &Field, b: &Field) -> Vec<f64> {
    let d = 2 * st.n;
    (0..d)
        .map(|k| {
            let mut acc = 0.0;
            for m in 0..d {
                acc += a.c[m].value() * partial_nat(st, &b.c[k], m)
                    - b.c[m].value() * partial_nat(st, &a.c[k], m);
            }
            acc
        })
        .collect()
}

/// Invariant-formula exterior derivative of a 1-form on two fields:
/// `d w (X, Y) = X(w(Y)) - Y(w(X)) - w([X, Y])`.
pub fn d_one_form<F>(st: &GeometryState, w: F, x: &Field, y: &Field) -> f64
where
    F: Fn(&Field) -> Jet,
{
    let xy = Field::constant(st, &lie_bracket(st, x, y));
    dir_deriv(st, x, &w(y)) - dir_deriv(st, y, &w(x)) - w(&xy).value()
}

/// Invariant-formula exterior derivative of a 2-form on three fields.
pub fn d_two_form<F>(st: &GeometryState, w: F, x: &Field, y: &Field, z: &Field) -> f64
where
    F: Fn(&Field, &Field) -> Jet,
{
    let bxy = Field::constant(st, &lie_bracket(st, x, y));
    let bxz = Field::constant(st, &lie_bracket(st, x, z));
    let byz = Field::constant(st, &lie_bracket(st, y, z));
    dir_deriv(st, x, &w(y, z)) - dir_deriv(st, y, &w(x, z)) + dir_deriv(st, z, &w(x, y))
        - w(&bxy, z).value()
        + w(&bxz, y).value()
        - w(&byz, x).value()
}

/// Random smooth scalar: a polynomial of degree <= 2 in (x, p) whose jets
/// are exact, so field-level identities are tested without truncation bias.
pub fn random_scalar(st: &GeometryState, rng: &mut impl rand::Rng) -> Jet {
    let n = st.n;
    let mut acc = Jet::constant(&st.space, rng.gen_range(-1.0..1.0));
    for i in 0..n {
        acc = &acc + &st.x_var[i].scale(rng.gen_range(-1.0..1.0));
        acc = &acc + &st.p_var[i].scale(rng.gen_range(-1.0..1.0));
    }
    for i in 0..n {
        for j in i..n {
            acc = &acc + &(&st.x_var[i] * &st.p_var[j]).scale(rng.gen_range(-0.5..0.5));
            acc = &acc + &(&st.p_var[i] * &st.p_var[j]).scale(rng.gen_range(-0.5..0.5));
        }
    }
    acc
}

/// Random vertical field with polynomial coefficients.
pub fn random_vertical(st: &GeometryState, rng: &mut impl rand::Rng) -> Field {
    let n = st.n;
    let zero = Jet::constant(&st.space, 0.0);
    let mut c = vec![zero; 2 * n];
    for item in c.iter_mut().skip(n) {
        *item = random_scalar(st, rng);
    }
    Field { c }
}

/// The symplectic form on jet fields, `sum_i dp_i ^ dx^i`.
pub fn omega_form(st: &GeometryState, u: &Field, v: &Field) -> Jet {
    let n = st.n;
    let mut acc = Jet::constant(&st.space, 0.0);
    for i in 0..n {
        acc = &acc + &(&(&u.c[n + i] * &v.c[i]) - &(&u.c[i] * &v.c[n + i]));
    }
    acc
}

/// Metric pairing of jet fields through the natural-coordinate Sasaki
/// metric (a jet-valued function of the point).
pub fn g_form(st: &GeometryState, u: &Field, v: &Field) -> Jet {
    let d = 2 * st.n;
    let gj = &st.sasaki().g_nat_j;
    let mut acc = Jet::constant(&st.space, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc = &acc + &(&(&u.c[i] * &v.c[j]) * &gj[m2(d, i, j)]);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::CartanStructure;
    use crate::metrics;
    use crate::point::PhasePoint;
    use approx::assert_relative_eq;

    fn state(label: &str, x: Vec<f64>, p: Vec<f64>) -> GeometryState {
        let s = CartanStructure::from_descriptor(metrics::builtin(label, x.len()).unwrap());
        GeometryState::build(&s, &PhasePoint::new(x, p)).unwrap()
    }

    fn rand_state(label: &str, seed: u64) -> GeometryState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.8..0.8)).collect();
        let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.4..1.4)).collect();
        state(label, x, p)
    }

    #[test]
    fn flat_connection_vanishes_and_frame_is_identity() {
        let st = state("euclidean", vec![0.1, 0.2], vec![1.0, 2.0]);
        assert!(st.nconn.amax() < 1e-14);
        let (frame, coframe) = adapted_frame(&st);
        assert!((frame - DMatrix::identity(4, 4)).amax() < 1e-14);
        assert!((coframe - DMatrix::identity(4, 4)).amax() < 1e-14);
    }

    #[test]
    fn frame_coframe_duality_and_determinant() {
        let st = rand_state("randers-dual", 3);
        let (frame, coframe) = adapted_frame(&st);
        let prod = &coframe * &frame;
        assert!((prod - DMatrix::identity(6, 6)).amax() <= 1e-12);
        assert_relative_eq!(frame.determinant(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn nonlinear_connection_is_symmetric() {
        for label in metrics::BUILTIN_LABELS {
            for seed in 0..20 {
                let st = rand_state(label, 100 + seed);
                let scale = st.nconn.amax();
                assert!(
                    (&st.nconn - &st.nconn.transpose()).amax() <= 1e-10 * (1.0 + scale),
                    "{label}"
                );
            }
        }
    }

    #[test]
    fn sasaki_j_squares_to_minus_identity() {
        for label in ["quadratic-offdiag", "randers-dual", "quartic-root"] {
            let st = rand_state(label, 9);
            let sa = st.sasaki();
            let jj = &sa.j_nat * &sa.j_nat;
            assert!(
                (jj + DMatrix::identity(6, 6)).amax() <= 1e-12 * (1.0 + sa.j_nat.amax().powi(2)),
                "{label}"
            );
        }
    }

    #[test]
    fn almost_kaehler_compatibility() {
        let st = rand_state("randers-dual", 21);
        let sa = st.sasaki();
        // Omega(X, Y) = G(JX, Y) over all natural basis pairs
        let d = 6;
        for i in 0..d {
            for j in 0..d {
                let mut u = vec![0.0; d];
                u[i] = 1.0;
                let mut v = vec![0.0; d];
                v[j] = 1.0;
                let ju = sa.apply_j(&u);
                assert_relative_eq!(
                    sa.omega_pair(&u, &v),
                    sa.pair(&ju, &v),
                    epsilon = 1e-10,
                    max_relative = 1e-10
                );
            }
        }
        // Hermitian property G(JX, JY) = G(X, Y)
        let u: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..d).map(|i| (i as f64 * 1.3).cos()).collect();
        assert_relative_eq!(
            sa.pair(&sa.apply_j(&u), &sa.apply_j(&v)),
            sa.pair(&u, &v),
            max_relative = 1e-10
        );
    }

    #[test]
    fn coordinate_fields_commute() {
        let st = rand_state("randers-dual", 4);
        let a = Field::coord_x(&st, 0);
        let b = Field::coord_p(&st, 0);
        let br = lie_bracket(&st, &a, &b);
        assert!(br.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn delta_brackets_are_vertical() {
        let st = rand_state("quadratic-diag", 6);
        let n = st.n;
        for i in 0..n {
            for j in 0..n {
                let br = lie_bracket(&st, &Field::delta(&st, i), &Field::coord_p(&st, j));
                for x_comp in &br[..n] {
                    assert!(x_comp.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn c_star_commutes_with_delta() {
        // degree-1 homogeneity of N makes [C*, delta_i] vanish
        for label in ["quadratic-diag", "randers-dual"] {
            let st = rand_state(label, 8);
            let cs = Field::c_star(&st);
            for i in 0..st.n {
                let br = lie_bracket(&st, &cs, &Field::delta(&st, i));
                let scale = st.nconn.amax();
                assert!(
                    br.iter().all(|v| v.abs() <= 1e-10 * (1.0 + scale)),
                    "{label}: {br:?}"
                );
            }
        }
    }

    #[test]
    fn exterior_derivative_of_coordinate_form_vanishes() {
        let st = rand_state("randers-dual", 12);
        // w = dx^1 has constant coefficients on any fields
        let w = |f: &Field| f.c[0].clone();
        let x = Field::delta(&st, 0);
        let y = Field::vbar(&st, 1);
        let d = d_one_form(&st, w, &x, &y);
        assert!(d.abs() < 1e-11, "d(dx)(delta, vbar) = {d}");
    }

    #[test]
    fn symplectic_form_is_closed_on_adapted_frames() {
        let st = rand_state("randers-dual", 13);
        let n = st.n;
        let mut fields = vec![];
        for i in 0..n {
            fields.push(Field::delta(&st, i));
        }
        for i in 0..n {
            fields.push(Field::coord_p(&st, i));
        }
        let mut max = 0.0_f64;
        for a in 0..fields.len() {
            for b in (a + 1)..fields.len() {
                for c in (b + 1)..fields.len() {
                    let v = d_two_form(
                        &st,
                        |u, w| omega_form(&st, u, w),
                        &fields[a],
                        &fields[b],
                        &fields[c],
                    );
                    max = max.max(v.abs());
                }
            }
        }
        assert!(max <= 1e-9, "d Omega residual {max}");
    }

    #[test]
    fn product_rule_cross_check_for_k_dk() {
        // d(K dK) computed by the invariant formula must agree with
        // dK ^ dK = 0 (product rule), since d(dK) = 0.
        let st = rand_state("randers-dual", 17);
        let w = |f: &Field| {
            let df = dir_deriv_jet(&st, f, &st.k_j);
            &st.k_j * &df
        };
        let x = Field::delta(&st, 1);
        let y = Field::coord_p(&st, 2);
        let direct = d_one_form(&st, w, &x, &y);
        assert!(direct.abs() <= 1e-10 * (1.0 + st.k2), "{direct}");
    }

    #[test]
    fn omega_matrix_has_constant_unit_pairing() {
        let st = rand_state("quartic-root", 19);
        let sa = st.sasaki();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { -1.0 } else { 0.0 };
                assert_eq!(sa.omega_nat[(i, 3 + j)], expect);
                assert_eq!(sa.omega_nat[(3 + i, j)], -expect);
            }
        }
    }

    #[test]
    fn xi_star_reduces_to_base_translation_for_flat_metric() {
        let st = state("euclidean", vec![0.0, 0.0], vec![3.0, 4.0]);
        let xi = Field::xi_star(&st);
        let v = xi.values();
        assert_relative_eq!(v[0], 3.0, max_relative = 1e-14);
        assert_relative_eq!(v[1], 4.0, max_relative = 1e-14);
        assert!(v[2].abs() < 1e-14 && v[3].abs() < 1e-14);
    }
}
