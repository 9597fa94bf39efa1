//! The vertical Liouville apparatus: the radial field `C*`, its horizontal
//! mirror `xi* = J(C*)`, the unit form `zeta`, the projector `P` onto the
//! Liouville distribution, the adapted vertical fields `vbar^j` and the
//! frame they generate, together with the identity and bracket suites that
//! certify them.

use nalgebra::{DMatrix, DVector};

use crate::error::{CartanError, Result};
use crate::frames::{dir_deriv, lie_bracket, random_vertical, Field};
use crate::jets::Jet;
use crate::state::{m2, GeometryState};

/// Pointwise Liouville data.
pub struct LiouvilleData {
    /// `zeta^i = p^i / K`.
    pub zeta: DVector<f64>,
    /// `t^j = p^j / K^2`.
    pub t: DVector<f64>,
    /// Projector onto the Liouville distribution acting on vertical
    /// components: `(P u)_j = (delta^i_j - zeta^i p_j / K) u_i`.
    pub proj: DMatrix<f64>,
    /// Rows `E^j_i = delta^j_i - t^j p_i` of the adapted vertical fields in
    /// the momentum basis.
    pub e_rows: DMatrix<f64>,
}

pub fn liouville_data(st: &GeometryState) -> LiouvilleData {
    let n = st.n;
    let zeta = DVector::from_fn(n, |i, _| st.p_up[i] / st.k);
    let t = DVector::from_fn(n, |i, _| st.p_up[i] / st.k2);
    let proj = DMatrix::from_fn(n, n, |j, i| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - zeta[i] * st.point.p[j] / st.k
    });
    let e_rows = DMatrix::from_fn(n, n, |j, i| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - t[j] * st.point.p[i]
    });
    LiouvilleData {
        zeta,
        t,
        proj,
        e_rows,
    }
}

/// Jets of the projector entries `P^i_j = delta^i_j - p^i p_j / K^2`,
/// row-major with `(j, i)` layout matching `LiouvilleData::proj`.
pub fn proj_jets(st: &GeometryState) -> Vec<Jet> {
    let n = st.n;
    let k2_inv = st.k2_j.recip().expect("K^2 > 0 on a built state");
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let mut e = -&(&(&st.p_up_j[i] * &st.p_var[j]) * &k2_inv);
            if i == j {
                e = &e + &Jet::constant(&st.space, 1.0);
            }
            out.push(e);
        }
    }
    out
}

fn require_adapted(st: &GeometryState, p_floor: f64) -> Result<()> {
    let ratio = st.point.pn_ratio();
    if ratio < p_floor {
        return Err(CartanError::AdaptedBasisDegenerate {
            pn_abs: ratio * st.point.p_norm(),
            floor: p_floor * st.point.p_norm(),
        });
    }
    Ok(())
}

/// The retained fields `vbar^1 .. vbar^{n-1}` plus the dependency
/// coefficients of `vbar^n` and the smallest singular value of the
/// retained rows.
pub struct ReducedBasis {
    pub fields: Vec<Field>,
    /// `vbar^n = sum_a dep[a] vbar^a`.
    pub dependency: Vec<f64>,
    pub sigma_min: f64,
}

pub fn reduced_vertical_basis(st: &GeometryState, p_floor: f64) -> Result<ReducedBasis> {
    require_adapted(st, p_floor)?;
    let n = st.n;
    let data = liouville_data(st);
    let fields: Vec<Field> = (0..n - 1).map(|a| Field::vbar(st, a)).collect();
    let dependency: Vec<f64> = (0..n - 1)
        .map(|a| -st.point.p[a] / st.point.p[n - 1])
        .collect();
    let retained = data.e_rows.rows(0, n - 1).into_owned();
    let svd = retained.svd(false, false);
    let sigma_min = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(ReducedBasis {
        fields,
        dependency,
        sigma_min,
    })
}

/// Expresses a vertical vector known to lie in the Liouville distribution
/// in the retained `vbar` basis: `w = c_a vbar^a` with
/// `c_i = w_i - (w_n / p_n) p_i`.
pub fn liouville_coefficients(st: &GeometryState, w: &[f64]) -> Vec<f64> {
    let n = st.n;
    let ratio = w[n - 1] / st.point.p[n - 1];
    (0..n - 1).map(|i| w[i] - ratio * st.point.p[i]).collect()
}

// ---------------------------------------------------------------------------
// Residual suites
// ---------------------------------------------------------------------------

fn vmax(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

fn nres(err: f64, scale: f64) -> f64 {
    err.abs() / (1.0 + scale.abs())
}

/// Projector algebra: idempotency, the metric contraction identity,
/// vertical reconstruction, the two printed forms of `P`, and the
/// membership predicate under projection.
pub fn projector_suite(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let data = liouville_data(st);
    let mut worst = 0.0_f64;

    // P^2 = P
    let p2 = &data.proj * &data.proj;
    worst = worst.max(nres((&p2 - &data.proj).amax(), 1.0));
    // P annihilates C* (momentum components p)
    let pc = data.proj.clone() * DVector::from_column_slice(&st.point.p);
    worst = worst.max(nres(pc.amax(), st.point.p_norm()));
    // the two printed forms zeta^i p_j / K and p^i p_j / K^2 coincide
    for i in 0..n {
        for j in 0..n {
            let a = data.zeta[i] * st.point.p[j] / st.k;
            let b = st.p_up[i] * st.point.p[j] / st.k2;
            worst = worst.max(nres(a - b, a));
        }
    }

    for _ in 0..4 {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pu = st.p_project(&u);
        let pv = st.p_project(&v);
        // G(PX, PY) = G(X, Y) - zeta(X) zeta(Y)
        let lhs = st.g_vert(&pu, &pv);
        let rhs = st.g_vert(&u, &v) - st.zeta_vert(&u) * st.zeta_vert(&v);
        worst = worst.max(nres(lhs - rhs, rhs));
        // G(X, PY) = G(PX, PY)
        worst = worst.max(nres(st.g_vert(&u, &pv) - lhs, lhs));
        // reconstruction X = PX + zeta(X) C* / K
        let z = st.zeta_vert(&u);
        for i in 0..n {
            let rec = pu[i] + z * st.point.p[i] / st.k;
            worst = worst.max(nres(rec - u[i], vmax(&u)));
        }
        // membership predicate g^{ij} w_i p_j = 0 for projected vectors
        let zeta_of_proj = st.zeta_vert(&pu) * st.k;
        worst = worst.max(nres(zeta_of_proj, st.k2));
    }
    worst
}

/// Orthogonality and normalization: `G(C*, C*) = K^2`, `G(vbar^j, C*) = 0`,
/// and `zeta` has the stated components.
pub fn metric_identities(st: &GeometryState) -> f64 {
    let n = st.n;
    let data = liouville_data(st);
    let mut worst = 0.0_f64;

    let cc = st.g_vert(&st.point.p, &st.point.p);
    worst = worst.max(nres(cc - st.k2, st.k2));

    for j in 0..n {
        let e_row: Vec<f64> = (0..n).map(|i| data.e_rows[(j, i)]).collect();
        worst = worst.max(nres(st.g_vert(&e_row, &st.point.p), st.k2));
    }

    // zeta(d/dp_i) = G(d/dp_i, C*)/K = p^i/K
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        worst = worst.max(nres(
            st.g_vert(&e, &st.point.p) / st.k - data.zeta[i],
            data.zeta.amax(),
        ));
    }
    worst
}

/// Residuals of the four `t^j` identities:
/// `p_i t^i = 1`, `p_i vbar^i = 0`, `dt^i/dp_j = -2 t^i t^j + g^{ij}/K^2`,
/// `C*(t^j) = -t^j`.
pub struct TSuite {
    pub p_contraction: f64,
    pub vbar_contraction: f64,
    pub dt_dp: f64,
    pub radial_derivative: f64,
}

impl TSuite {
    pub fn max(&self) -> f64 {
        self.p_contraction
            .max(self.vbar_contraction)
            .max(self.dt_dp)
            .max(self.radial_derivative)
    }
}

pub fn identity_suite_3_6(st: &GeometryState) -> TSuite {
    let n = st.n;
    let data = liouville_data(st);
    let p = &st.point.p;

    let pt: f64 = (0..n).map(|i| p[i] * data.t[i]).sum();
    let p_contraction = nres(pt - 1.0, 1.0);

    // p_i vbar^i = 0 as a vector identity in momentum components
    let mut pv = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            pv[k] += p[i] * data.e_rows[(i, k)];
        }
    }
    let vbar_contraction = nres(vmax(&pv), st.point.p_norm());

    let mut dt_dp = 0.0_f64;
    let t_scale = data.t.amax();
    for i in 0..n {
        for j in 0..n {
            let lhs = st.t_j[i].partial(&[], &[j]);
            let rhs = -2.0 * data.t[i] * data.t[j] + st.g_up[(i, j)] / st.k2;
            dt_dp = dt_dp.max(nres(lhs - rhs, t_scale * t_scale + t_scale));
        }
    }

    let cs = Field::c_star(st);
    let mut radial_derivative = 0.0_f64;
    for j in 0..n {
        let lhs = dir_deriv(st, &cs, &st.t_j[j]);
        radial_derivative = radial_derivative.max(nres(lhs + data.t[j], t_scale));
    }

    TSuite {
        p_contraction,
        vbar_contraction,
        dt_dp,
        radial_derivative,
    }
}

/// Bracket relations of the adapted vertical fields:
/// `[vbar^i, vbar^j] = t^i vbar^j - t^j vbar^i` and `[vbar^i, C*] = vbar^i`.
pub fn bracket_suite_3_7(st: &GeometryState) -> f64 {
    let n = st.n;
    let data = liouville_data(st);
    let cs = Field::c_star(st);
    let vb: Vec<Field> = (0..n).map(|j| Field::vbar(st, j)).collect();
    let scale = 1.0 + data.t.amax();
    let mut worst = 0.0_f64;

    for i in 0..n {
        for j in 0..n {
            let br = lie_bracket(st, &vb[i], &vb[j]);
            let vi = vb[i].values();
            let vj = vb[j].values();
            for m in 0..2 * n {
                let rhs = data.t[i] * vj[m] - data.t[j] * vi[m];
                worst = worst.max(nres(br[m] - rhs, scale));
            }
        }
        let br = lie_bracket(st, &vb[i], &cs);
        let vi = vb[i].values();
        for m in 0..2 * n {
            worst = worst.max(nres(br[m] - vi[m], scale));
        }
        // [vbar^i, C*] stays inside the Liouville distribution
        let vert: Vec<f64> = br[n..].to_vec();
        worst = worst.max(nres(st.zeta_vert(&vert), scale));
    }
    worst
}

/// Integrability of the Liouville distribution: the bracket of any two
/// adapted fields has no radial component, `G([vbar^a, vbar^b], C*) = 0`.
pub fn integrability_residual(st: &GeometryState, p_floor: f64) -> Result<f64> {
    require_adapted(st, p_floor)?;
    let n = st.n;
    let vb: Vec<Field> = (0..n - 1).map(|a| Field::vbar(st, a)).collect();
    let mut worst = 0.0_f64;
    for a in 0..n - 1 {
        for b in 0..n - 1 {
            let br = lie_bracket(st, &vb[a], &vb[b]);
            let vert: Vec<f64> = br[n..].to_vec();
            let g = st.g_vert(&vert, &st.point.p);
            worst = worst.max(nres(g, st.k2));
        }
    }
    Ok(worst)
}

/// The control quantity `G([vbar^a, C*], vbar^b)`: the analogous pairing
/// with a non-radial second slot, which the theory does not force to zero.
/// Recorded for diagnostics, never asserted.
pub fn integrability_control(st: &GeometryState) -> f64 {
    let n = st.n;
    let vb: Vec<Field> = (0..n).map(|a| Field::vbar(st, a)).collect();
    let mut max = 0.0_f64;
    for a in 0..n - 1 {
        let br = lie_bracket(st, &vb[a], &Field::c_star(st));
        let vert: Vec<f64> = br[n..].to_vec();
        for b in 0..n - 1 {
            let eb: Vec<f64> = vb[b].values()[n..].to_vec();
            max = max.max(st.g_vert(&vert, &eb).abs());
        }
    }
    max
}

/// The full frame `{xbar^a, xi*, vbar^a, C*}` with its Gram structure:
/// rank `2n`, block-diagonal metric, and `G(xi*, xi*) = K^2`.
pub struct FullFrame {
    /// Fields in the order `xbar^1..xbar^{n-1}, xi*, vbar^1..vbar^{n-1}, C*`.
    pub fields: Vec<Field>,
    pub gram: DMatrix<f64>,
}

pub fn full_frame(st: &GeometryState, p_floor: f64) -> Result<FullFrame> {
    require_adapted(st, p_floor)?;
    let n = st.n;
    let mut fields = vec![];
    for a in 0..n - 1 {
        fields.push(Field::x_bar(st, a));
    }
    fields.push(Field::xi_star(st));
    for a in 0..n - 1 {
        fields.push(Field::vbar(st, a));
    }
    fields.push(Field::c_star(st));

    let sa = st.sasaki();
    let vals: Vec<Vec<f64>> = fields.iter().map(|f| f.values()).collect();
    let gram = DMatrix::from_fn(2 * n, 2 * n, |i, j| sa.pair(&vals[i], &vals[j]));
    Ok(FullFrame { fields, gram })
}

/// Residual of the orthogonal decomposition carried by the full frame:
/// off-block Gram entries, the `G(xi*, xi*) = K^2` isometry, and full rank.
pub fn full_frame_residual(st: &GeometryState, p_floor: f64) -> Result<f64> {
    let n = st.n;
    let ff = full_frame(st, p_floor)?;
    let scale = ff.gram.amax();
    let mut worst = 0.0_f64;

    // blocks: [0, n-1) xbar, {n-1} xi*, [n, 2n-1) vbar, {2n-1} C*
    let block = |i: usize| -> usize {
        if i < n - 1 {
            0
        } else if i == n - 1 {
            1
        } else if i < 2 * n - 1 {
            2
        } else {
            3
        }
    };
    for i in 0..2 * n {
        for j in 0..2 * n {
            if block(i) != block(j) {
                worst = worst.max(nres(ff.gram[(i, j)], scale));
            }
        }
    }
    worst = worst.max(nres(ff.gram[(n - 1, n - 1)] - st.k2, st.k2));
    worst = worst.max(nres(ff.gram[(2 * n - 1, 2 * n - 1)] - st.k2, st.k2));

    // J(xi*) = -C* (the almost complex square)
    let sa = st.sasaki();
    let jxi = sa.apply_j(&ff.fields[n - 1].values());
    let cs = ff.fields[2 * n - 1].values();
    for m in 0..2 * n {
        worst = worst.max(nres(jxi[m] + cs[m], st.point.p_norm()));
    }

    // rank 2n via the Gram determinant of an SPD matrix
    if ff.gram.clone().cholesky().is_none() {
        worst = worst.max(1.0);
    }
    Ok(worst)
}

/// Field-level certification that projecting a random vertical field onto
/// the Liouville distribution produces bracket-closed combinations, via
/// random `P`-projected fields and the membership predicate.
pub fn liouville_membership(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let pj = proj_jets(st);
    let mut worst = 0.0_f64;
    for _ in 0..3 {
        let raw = random_vertical(st, rng);
        // w_j = P^i_j v_i as jets
        let mut w = Field {
            c: vec![Jet::constant(&st.space, 0.0); 2 * n],
        };
        for j in 0..n {
            let mut acc = Jet::constant(&st.space, 0.0);
            for i in 0..n {
                acc = &acc + &(&pj[m2(n, j, i)] * &raw.c[n + i]);
            }
            w.c[n + j] = acc;
        }
        let wv: Vec<f64> = w.values()[n..].to_vec();
        worst = worst.max(nres(st.zeta_vert(&wv) * st.k, st.k2));
    }
    worst
}
