//! Basic connections for the nested pair of foliations (vertical, radial
//! line): characterizations on each normal bundle, the adapted triple
//! built from the Vaisman and Vrănceanu connections, and the vanishing of
//! the direct-sum curvature along the line distribution.
//!
//! The quotient bundles are realized concretely as orthogonal complements
//! with explicit projectors: the Liouville projector for the vertical
//! quotient, the horizontal projector of the adapted frame, and the
//! radial-orthogonal projector for the line foliation.

use crate::connections::{canonical_h, VaismanConnection};
use crate::error::Result;
use crate::frames::{dir_deriv, dir_deriv_jet, lie_bracket, random_scalar, Field};
use crate::jets::Jet;
use crate::liouville::{liouville_coefficients, liouville_data};
use crate::state::GeometryState;

fn nres(err: f64, scale: f64) -> f64 {
    err.abs() / (1.0 + scale.abs())
}

fn vmax(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

/// Projection of a natural tangent vector onto the horizontal bundle:
/// `W = Wx^i delta_i + (vertical)`, so the image has the same base
/// components and momentum components `N Wx`.
pub fn pi_horizontal(st: &GeometryState, w: &[f64]) -> Vec<f64> {
    let n = st.n;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = w[i];
    }
    for j in 0..n {
        for i in 0..n {
            out[n + j] += w[i] * st.nconn[(i, j)];
        }
    }
    out
}

/// Vertical part of a natural tangent vector in momentum components.
pub fn vertical_part(st: &GeometryState, w: &[f64]) -> Vec<f64> {
    let n = st.n;
    (0..n)
        .map(|j| {
            let mut v = w[n + j];
            for i in 0..n {
                v -= w[i] * st.nconn[(i, j)];
            }
            v
        })
        .collect()
}

/// Projection onto the orthogonal complement of the radial line:
/// `W - G(W, C*) C* / K^2`.
pub fn pi_perp(st: &GeometryState, w: &[f64]) -> Vec<f64> {
    let n = st.n;
    let sa = st.sasaki();
    let mut cs = vec![0.0; 2 * n];
    cs[n..].copy_from_slice(&st.point.p);
    let coeff = sa.pair(w, &cs) / st.k2;
    (0..2 * n).map(|m| w[m] - coeff * cs[m]).collect()
}

/// Basic property on the vertical quotient: a connection there is basic
/// exactly when the radial derivative is the projected bracket,
/// `nabla_{C*} Z = [C*, Z]` with `[C*, vbar^i] = -vbar^i`.
pub fn basic_check_l(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let cs = Field::c_star(st);
    let mut worst = 0.0_f64;

    // [C*, vbar^i] + vbar^i = 0 for every i (the defining table row)
    for i in 0..n {
        let vb = Field::vbar(st, i);
        let br = lie_bracket(st, &cs, &vb);
        let vals = vb.values();
        for m in 0..2 * n {
            worst = worst.max(nres(br[m] + vals[m], 1.0));
        }
    }

    // field level: Z = Z_i vbar^i with polynomial coefficients
    let coeffs: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let mut z = Field {
        c: vec![Jet::constant(&st.space, 0.0); 2 * n],
    };
    for i in 0..n {
        z = z.add(&Field::vbar(st, i).scale_jet(&coeffs[i]));
    }
    let br = lie_bracket(st, &cs, &z);
    let mut lhs = vec![0.0; 2 * n];
    for i in 0..n {
        let c_i = dir_deriv(st, &cs, &coeffs[i]) - coeffs[i].value();
        let vals = Field::vbar(st, i).values();
        for m in 0..2 * n {
            lhs[m] += c_i * vals[m];
        }
    }
    let scale = vmax(&lhs);
    for m in 0..2 * n {
        worst = worst.max(nres(lhs[m] - br[m], scale));
    }

    // scaling: pi_0 [a C*, Z + b C*] = a [C*, Z]
    let a = random_scalar(st, rng);
    let b = random_scalar(st, rng);
    let x = cs.scale_jet(&a);
    let ztilde = z.add(&cs.scale_jet(&b));
    let br_full = lie_bracket(st, &x, &ztilde);
    let left = st.p_project(&vertical_part(st, &br_full));
    let br_cz = lie_bracket(st, &cs, &z);
    let right_raw: Vec<f64> = vertical_part(st, &br_cz);
    let right = st.p_project(&right_raw);
    let scale = vmax(&left);
    for m in 0..n {
        worst = worst.max(nres(left[m] - a.value() * right[m], scale));
    }
    worst
}

/// Basic property on the vertical-foliation normal bundle: the vertical
/// derivative of a horizontal field is the horizontally projected bracket,
/// and the adapted-frame rows vanish, `nabla_{d/dp_j} delta_i = 0`.
pub fn basic_check_h(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let mut worst = 0.0_f64;

    // pi_1 [d/dp_j, delta_i] = 0: the bracket is vertical
    for i in 0..n {
        for j in 0..n {
            let br = lie_bracket(st, &Field::coord_p(st, j), &Field::delta(st, i));
            let h = pi_horizontal(st, &br);
            let scale = vmax(&br);
            worst = worst.max(nres(vmax(&h), scale));
        }
    }

    // field level: X vertical with polynomial coefficients, Ytilde with
    // horizontal part Y = Y_h^i delta_i and arbitrary vertical junk
    let xc: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let mut x = Field {
        c: vec![Jet::constant(&st.space, 0.0); 2 * n],
    };
    for j in 0..n {
        x = x.add(&Field::coord_p(st, j).scale_jet(&xc[j]));
    }
    let yh: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let mut ytilde = Field {
        c: vec![Jet::constant(&st.space, 0.0); 2 * n],
    };
    for i in 0..n {
        ytilde = ytilde.add(&Field::delta(st, i).scale_jet(&yh[i]));
        ytilde = ytilde.add(&Field::coord_p(st, i).scale_jet(&random_scalar(st, rng)));
    }
    let mut lhs = vec![0.0; 2 * n];
    for i in 0..n {
        let xi = dir_deriv(st, &x, &yh[i]);
        let vals = Field::delta(st, i).values();
        for m in 0..2 * n {
            lhs[m] += xi * vals[m];
        }
    }
    let rhs = pi_horizontal(st, &lie_bracket(st, &x, &ytilde));
    let scale = vmax(&lhs);
    for m in 0..2 * n {
        worst = worst.max(nres(lhs[m] - rhs[m], scale));
    }
    worst
}

/// Basic property on the line-foliation normal bundle: radial derivatives
/// of the adapted frame fields are `0` for `delta_i` (degree-1 homogeneity
/// of the connection coefficients) and `-vbar^i` for the vertical frame.
pub fn basic_check_perp(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let cs = Field::c_star(st);
    let mut worst = 0.0_f64;

    let f = random_scalar(st, rng);
    for i in 0..n {
        // pi_2 [C*, delta_i + f C*] = 0
        let ytilde = Field::delta(st, i).add(&cs.scale_jet(&f));
        let br = lie_bracket(st, &cs, &ytilde);
        let out = pi_perp(st, &br);
        worst = worst.max(nres(vmax(&out), st.nconn.amax()));

        // pi_2 [C*, vbar^i + f C*] = -vbar^i
        let vb = Field::vbar(st, i);
        let ytilde = vb.add(&cs.scale_jet(&f));
        let br = lie_bracket(st, &cs, &ytilde);
        let out = pi_perp(st, &br);
        let vals = vb.values();
        for m in 0..2 * n {
            worst = worst.max(nres(out[m] + vals[m], 1.0));
        }

        // homogeneity sub-check C*(N_ji) = N_ji
        for j in 0..n {
            let d = dir_deriv(st, &cs, st.n_at(j, i));
            worst = worst.max(nres(d - st.nconn[(j, i)], st.nconn.amax()));
        }
    }

    // field level: X = a C*, Ytilde = f C* + Y_h^i delta_i + Y_i vbar^i
    let a = random_scalar(st, rng);
    let yh: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let yl: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let mut ytilde = cs.scale_jet(&f);
    for i in 0..n {
        ytilde = ytilde.add(&Field::delta(st, i).scale_jet(&yh[i]));
        ytilde = ytilde.add(&Field::vbar(st, i).scale_jet(&yl[i]));
    }
    let x = cs.scale_jet(&a);
    let rhs = pi_perp(st, &lie_bracket(st, &x, &ytilde));
    let mut lhs = vec![0.0; 2 * n];
    for i in 0..n {
        let ch = a.value() * dir_deriv(st, &cs, &yh[i]);
        let cl = a.value() * (dir_deriv(st, &cs, &yl[i]) - yl[i].value());
        let dv = Field::delta(st, i).values();
        let vv = Field::vbar(st, i).values();
        for m in 0..2 * n {
            lhs[m] += ch * dv[m] + cl * vv[m];
        }
    }
    let scale = vmax(&lhs);
    for m in 0..2 * n {
        worst = worst.max(nres(lhs[m] - rhs[m], scale));
    }
    worst
}

// ---------------------------------------------------------------------------
// The adapted triple as explicit operators
// ---------------------------------------------------------------------------

/// Argument of the direct-sum connection: horizontal coefficients over
/// `delta_i` and Liouville coefficients over the retained `vbar^b`.
pub struct PerpField {
    pub h: Vec<Jet>,
    pub l: Vec<Jet>,
}

/// Decomposition of a direction vector (natural components) into
/// horizontal coefficients, retained Liouville coefficients and the
/// radial coefficient.
pub struct DirSplit {
    pub h: Vec<f64>,
    pub l: Vec<f64>,
    pub radial: f64,
    pub natural: Vec<f64>,
}

pub fn split_direction(st: &GeometryState, w: &[f64]) -> DirSplit {
    let n = st.n;
    let h: Vec<f64> = w[..n].to_vec();
    let vert = vertical_part(st, w);
    let radial = st.zeta_vert(&vert) / st.k;
    let pv = st.p_project(&vert);
    let l = liouville_coefficients(st, &pv);
    DirSplit {
        h,
        l,
        radial,
        natural: w.to_vec(),
    }
}

/// The Vaisman covariant derivative of a vertical-bundle section given in
/// the adapted basis (retained coefficients plus radial coefficient),
/// along an arbitrary direction. Returns the value coefficients.
pub fn vaisman_cov(
    st: &GeometryState,
    vc: &VaismanConnection,
    dir: &DirSplit,
    arg_l: &[Jet],
    arg_c: &Jet,
) -> (Vec<f64>, f64) {
    let n = st.n;
    let m = n - 1;
    let dir_field = Field::constant(st, &dir.natural);
    let mut out_l = vec![0.0; m];
    for c in 0..m {
        let mut acc = dir_deriv(st, &dir_field, &arg_l[c]);
        for b in 0..m {
            for a in 0..m {
                acc += dir.l[b] * arg_l[a].value() * vc.s_coeff[(a, b, c)];
            }
        }
        acc -= dir.radial * arg_l[c].value();
        for i in 0..n {
            for a in 0..m {
                acc += dir.h[i] * arg_l[a].value() * vc.beta[(a, c, i)];
            }
        }
        out_l[c] = acc;
    }
    let mut out_c = dir_deriv(st, &dir_field, arg_c);
    out_c += arg_c.value() * dir.radial * vc.s_scalar;
    for b in 0..m {
        out_c += arg_c.value() * dir.l[b] * vc.s_vert[b];
    }
    for i in 0..n {
        out_c += arg_c.value() * dir.h[i] * vc.beta_scalar[i];
    }
    (out_l, out_c)
}

/// The Vrănceanu covariant derivative restricted to the horizontal bundle
/// along an arbitrary direction (the mixed coefficient vanishes, so only
/// horizontal direction components act through the canonical
/// coefficients).
pub fn vranceanu_cov_h(
    st: &GeometryState,
    h_coeffs: &ndarray::Array3<f64>,
    dir: &DirSplit,
    arg_h: &[Jet],
) -> Vec<f64> {
    let n = st.n;
    let dir_field = Field::constant(st, &dir.natural);
    (0..n)
        .map(|k| {
            let mut acc = dir_deriv(st, &dir_field, &arg_h[k]);
            for i in 0..n {
                for j in 0..n {
                    acc += dir.h[j] * arg_h[i].value() * h_coeffs[(k, i, j)];
                }
            }
            acc
        })
        .collect()
}

/// Direct-sum connection on the radial-orthogonal bundle.
pub fn bar_cov(
    st: &GeometryState,
    vc: &VaismanConnection,
    h_coeffs: &ndarray::Array3<f64>,
    dir: &DirSplit,
    arg: &PerpField,
) -> (Vec<f64>, Vec<f64>) {
    let zero = Jet::constant(&st.space, 0.0);
    let h = vranceanu_cov_h(st, h_coeffs, dir, &arg.h);
    let (l, _) = vaisman_cov(st, vc, dir, &arg.l, &zero);
    (h, l)
}

/// Compatibility of the adapted triple with the inclusion and projection
/// of the normal-bundle sequence: the Liouville part of the direct sum is
/// the Vaisman derivative and the horizontal projection is the Vrănceanu
/// derivative.
pub fn triple_compatibility(
    st: &GeometryState,
    vc: &VaismanConnection,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    let n = st.n;
    let m = n - 1;
    let h_coeffs = canonical_h(st);
    let mut worst = 0.0_f64;

    let mut directions: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    // X = C*
    let mut cstar = vec![0.0; 2 * n];
    cstar[n..].copy_from_slice(&st.point.p);
    directions.push(cstar);

    for w in &directions {
        let dir = split_direction(st, w);

        // Y in the Liouville bundle
        let y_l: Vec<Jet> = (0..m).map(|_| random_scalar(st, rng)).collect();
        let zero = Jet::constant(&st.space, 0.0);
        let (v_l, _) = vaisman_cov(st, vc, &dir, &y_l, &zero);
        let arg = PerpField {
            h: vec![zero.clone(); n],
            l: y_l.clone(),
        };
        let (bar_h, bar_l) = bar_cov(st, vc, &h_coeffs, &dir, &arg);
        let scale = vmax(&v_l);
        for c in 0..m {
            worst = worst.max(nres(bar_l[c] - v_l[c], scale));
        }
        worst = worst.max(nres(vmax(&bar_h), scale));

        // Z mixed in the orthogonal complement
        let z = PerpField {
            h: (0..n).map(|_| random_scalar(st, rng)).collect(),
            l: (0..m).map(|_| random_scalar(st, rng)).collect(),
        };
        let (bar_h, _bar_l) = bar_cov(st, vc, &h_coeffs, &dir, &z);
        let vr_h = vranceanu_cov_h(st, &h_coeffs, &dir, &z.h);
        let scale = vmax(&vr_h);
        for k in 0..n {
            worst = worst.max(nres(bar_h[k] - vr_h[k], scale));
        }
    }
    Ok(worst)
}

/// Curvature of the direct-sum connection evaluated on two radial
/// directions: `K(a C*, b C*) W = 0` for arbitrary smooth multipliers.
pub fn line_curvature_residual(st: &GeometryState, rng: &mut impl rand::Rng) -> f64 {
    let n = st.n;
    let cs = Field::c_star(st);
    let a = random_scalar(st, rng);
    let b = random_scalar(st, rng);

    let wh: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let wl: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();

    // radial covariant derivative as a coefficient transformation (the
    // table rows along C* are 0 for delta_i and -1 for vbar^i)
    let dcov = |h: &[Jet], l: &[Jet]| -> (Vec<Jet>, Vec<Jet>) {
        let nh = h.iter().map(|f| dir_deriv_jet(st, &cs, f)).collect();
        let nl = l
            .iter()
            .map(|f| &dir_deriv_jet(st, &cs, f) - f)
            .collect();
        (nh, nl)
    };

    let (d1h, d1l) = dcov(&wh, &wl);
    // nabla_{bC*} W coefficients
    let b1h: Vec<Jet> = d1h.iter().map(|f| f * &b).collect();
    let b1l: Vec<Jet> = d1l.iter().map(|f| f * &b).collect();
    // nabla_{aC*} nabla_{bC*} W
    let (d2h, d2l) = dcov(&b1h, &b1l);
    let a2h: Vec<f64> = d2h.iter().map(|f| a.value() * f.value()).collect();
    let a2l: Vec<f64> = d2l.iter().map(|f| a.value() * f.value()).collect();
    // the reverse order
    let a1h: Vec<Jet> = d1h.iter().map(|f| f * &a).collect();
    let a1l: Vec<Jet> = d1l.iter().map(|f| f * &a).collect();
    let (e2h, e2l) = dcov(&a1h, &a1l);
    let b2h: Vec<f64> = e2h.iter().map(|f| b.value() * f.value()).collect();
    let b2l: Vec<f64> = e2l.iter().map(|f| b.value() * f.value()).collect();
    // bracket coefficient a C*(b) - b C*(a)
    let cb = a.value() * dir_deriv(st, &cs, &b) - b.value() * dir_deriv(st, &cs, &a);

    let mut worst = 0.0_f64;
    for k in 0..n {
        let rh = a2h[k] - b2h[k] - cb * d1h[k].value();
        let rl = a2l[k] - b2l[k] - cb * d1l[k].value();
        worst = worst.max(nres(rh, 1.0)).max(nres(rl, 1.0));
    }
    worst
}

/// Bundle preservation: the image of each covariant derivative stays in
/// its declared distribution (radial leakage for Liouville sections,
/// vertical leakage for horizontal sections).
pub fn bundle_preservation(
    st: &GeometryState,
    vc: &VaismanConnection,
    rng: &mut impl rand::Rng,
) -> f64 {
    let n = st.n;
    let m = n - 1;
    let data = liouville_data(st);
    let h_coeffs = canonical_h(st);
    let mut worst = 0.0_f64;

    let w: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dir = split_direction(st, &w);

    // Vaisman image of a Liouville section: reconstruct in momentum
    // components and measure the radial pairing.
    let y_l: Vec<Jet> = (0..m).map(|_| random_scalar(st, rng)).collect();
    let zero = Jet::constant(&st.space, 0.0);
    let (out_l, _) = vaisman_cov(st, vc, &dir, &y_l, &zero);
    let mut img = vec![0.0; n];
    for b in 0..m {
        for i in 0..n {
            img[i] += out_l[b] * data.e_rows[(b, i)];
        }
    }
    worst = worst.max(nres(st.zeta_vert(&img), vmax(&img)));

    // Vrănceanu image of a horizontal section: pair against C*.
    let arg_h: Vec<Jet> = (0..n).map(|_| random_scalar(st, rng)).collect();
    let out_h = vranceanu_cov_h(st, &h_coeffs, &dir, &arg_h);
    let sa = st.sasaki();
    let mut nat = vec![0.0; 2 * n];
    for k in 0..n {
        let dv = Field::delta(st, k).values();
        for mm in 0..2 * n {
            nat[mm] += out_h[k] * dv[mm];
        }
    }
    let mut cs_nat = vec![0.0; 2 * n];
    cs_nat[n..].copy_from_slice(&st.point.p);
    worst = worst.max(nres(sa.pair(&nat, &cs_nat), st.k2 * (1.0 + vmax(&out_h))));
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan::CartanStructure;
    use crate::connections::vaisman;
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
    fn basic_l_characterization() {
        for label in ["euclidean", "randers-dual", "quartic-root"] {
            let st = rand_state(label, 1);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let r = basic_check_l(&st, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn basic_h_characterization() {
        for label in ["quadratic-diag", "randers-dual"] {
            let st = rand_state(label, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let r = basic_check_h(&st, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn basic_perp_characterization() {
        for label in ["quadratic-offdiag", "randers-dual"] {
            let st = rand_state(label, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let r = basic_check_perp(&st, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn triple_is_adapted() {
        for label in ["euclidean", "randers-dual"] {
            let st = rand_state(label, 4);
            let vc = vaisman(&st, 0.05).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let r = triple_compatibility(&st, &vc, &mut rng).unwrap();
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn line_curvature_vanishes() {
        for label in ["quadratic-diag", "randers-dual", "quartic-root"] {
            let st = rand_state(label, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(15);
            let r = line_curvature_residual(&st, &mut rng);
            assert!(r <= 1e-10, "{label}: {r}");
        }
    }

    #[test]
    fn images_stay_in_declared_bundles() {
        let st = rand_state("randers-dual", 6);
        let vc = vaisman(&st, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let r = bundle_preservation(&st, &vc, &mut rng);
        assert!(r <= 1e-10, "{r}");
    }

    #[test]
    fn direction_split_reconstructs() {
        let st = rand_state("randers-dual", 7);
        let n = st.n;
        let data = liouville_data(&st);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dir = split_direction(&st, &w);
        // rebuild: h^i delta_i + l^b vbar^b + radial C*
        let mut rebuilt = vec![0.0; 2 * n];
        for i in 0..n {
            let dv = Field::delta(&st, i).values();
            for m in 0..2 * n {
                rebuilt[m] += dir.h[i] * dv[m];
            }
        }
        for b in 0..n - 1 {
            for i in 0..n {
                rebuilt[n + i] += dir.l[b] * data.e_rows[(b, i)];
            }
        }
        for i in 0..n {
            rebuilt[n + i] += dir.radial * st.point.p[i];
        }
        for m in 0..2 * n {
            assert!((rebuilt[m] - w[m]).abs() < 1e-11);
        }
    }
}
