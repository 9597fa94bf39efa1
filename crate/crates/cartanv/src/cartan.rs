//! The Cartan structure and its fundamental tensors: the momentum Hessian
//! metric, the dual momenta, the third-derivative symmetric tensor, formal
//! Christoffel symbols, and homogeneity certification.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CartanError, Result};
use crate::expr::Expr;
use crate::jets::{Jet, JetSpace};
use crate::metrics::{MetricDescriptor, MetricFlags, Validity};
use crate::point::PhasePoint;
use crate::state::GeometryState;

/// An evaluatable fundamental function with its validity domain and
/// structural flags. Positive 1-homogeneity in momenta is a certified
/// property, not an assumption; see [`certify_homogeneity`].
#[derive(Debug)]
pub struct CartanStructure {
    pub label: String,
    pub dim: usize,
    pub k_squared: Expr,
    pub validity: Validity,
    pub flags: MetricFlags,
}

impl CartanStructure {
    pub fn from_descriptor(d: MetricDescriptor) -> Arc<Self> {
        Arc::new(Self {
            label: d.label,
            dim: d.dim,
            k_squared: d.k_squared,
            validity: d.validity,
            flags: d.flags,
        })
    }

    pub fn check_point(&self, z: &PhasePoint) -> Result<()> {
        if z.dim() != self.dim {
            return Err(CartanError::InvalidConfig(format!(
                "point dimension {} does not match metric dimension {}",
                z.dim(),
                self.dim
            )));
        }
        if !self.validity.admits(z) {
            return Err(CartanError::Domain(
                "point outside the metric validity domain".into(),
            ));
        }
        Ok(())
    }

    /// Float evaluation of `K^2`; used by the finite-difference oracle.
    pub fn eval_k2(&self, z: &PhasePoint) -> Result<f64> {
        let v = self.k_squared.eval_f64(&z.x, &z.p)?;
        if v <= 0.0 || !v.is_finite() {
            return Err(CartanError::Domain(format!(
                "K^2 = {v:.3e} is not positive at the evaluated point"
            )));
        }
        Ok(v)
    }

    /// Jet of `K^2` at `z` in the given space.
    pub fn k2_jet(&self, space: &Arc<JetSpace>, z: &PhasePoint) -> Result<Jet> {
        let (xs, ps) = Jet::coords(space, z);
        let jet = self.k_squared.eval_jet(&xs, &ps)?;
        if jet.value() <= 0.0 || !jet.value().is_finite() {
            return Err(CartanError::Domain(format!(
                "K^2 = {:.3e} is not positive at the evaluated point",
                jet.value()
            )));
        }
        Ok(jet)
    }
}

/// Pointwise fundamental tensors.
#[derive(Debug, Clone)]
pub struct FundamentalTensors {
    pub g_upper: DMatrix<f64>,
    pub g_lower: DMatrix<f64>,
    pub p_upper: DVector<f64>,
    pub k2: f64,
    pub k: f64,
    /// Totally symmetric third-derivative tensor `C^{ijk}`.
    pub cartan: Array3<f64>,
    pub cond: f64,
}

pub fn fundamental_tensors(
    structure: &Arc<CartanStructure>,
    z: &PhasePoint,
) -> Result<FundamentalTensors> {
    let st = GeometryState::build(structure, z)?;
    Ok(st.fundamental())
}

/// Formal Christoffel symbols of the fundamental tensor and their momentum
/// contractions.
#[derive(Debug, Clone)]
pub struct ChristoffelData {
    /// `gamma^i_{jk}`, indexed `[i][j][k]`.
    pub gamma: Array3<f64>,
    /// `gamma^0_{jk} = gamma^i_{jk} p_i`.
    pub gamma0: DMatrix<f64>,
    /// `gamma^0_{h0} = gamma^i_{hk} p_i p^k`.
    pub gamma0_h0: DVector<f64>,
}

pub fn formal_christoffel(
    structure: &Arc<CartanStructure>,
    z: &PhasePoint,
) -> Result<ChristoffelData> {
    let st = GeometryState::build(structure, z)?;
    Ok(st.christoffel())
}

/// Euler-relation residuals certifying homogeneity degree 2 for `K^2`,
/// degree 0 for the fundamental tensor and degree 1 for the canonical
/// nonlinear connection. All residuals are scale-normalized.
#[derive(Debug, Clone, Copy)]
pub struct HomogeneityRecord {
    pub euler_k2: f64,
    pub g_degree_zero: f64,
    pub n_degree_one: f64,
}

impl HomogeneityRecord {
    pub fn max(&self) -> f64 {
        self.euler_k2.max(self.g_degree_zero).max(self.n_degree_one)
    }
}

pub fn homogeneity_record(st: &GeometryState) -> HomogeneityRecord {
    let n = st.n;
    let euler_num: f64 = (0..n)
        .map(|i| st.point.p[i] * st.k2_j.partial(&[], &[i]))
        .sum::<f64>()
        - 2.0 * st.k2;
    let euler_k2 = euler_num.abs() / (1.0 + st.k2.abs());

    let g_scale = st.g_up.amax();
    let mut g_res = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n)
                .map(|k| st.point.p[k] * st.dg_up_dp[(i, j, k)])
                .sum();
            g_res = g_res.max(v.abs());
        }
    }
    let g_degree_zero = g_res / (1.0 + g_scale);

    let n_scale = st.nconn.amax();
    let mut n_res = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n)
                .map(|k| st.point.p[k] * st.dn_dp[(i, j, k)])
                .sum::<f64>()
                - st.nconn[(i, j)];
            n_res = n_res.max(v.abs());
        }
    }
    let n_degree_one = n_res / (1.0 + n_scale);

    HomogeneityRecord {
        euler_k2,
        g_degree_zero,
        n_degree_one,
    }
}

/// Per-point homogeneity certificate. Fails with `HomogeneityViolation`
/// when any Euler residual exceeds the tolerance: the user metric is
/// malformed, not merely inaccurate.
pub fn homogeneity_certificate(
    structure: &Arc<CartanStructure>,
    z: &PhasePoint,
    tol: f64,
) -> Result<HomogeneityRecord> {
    let st = GeometryState::build(structure, z)?;
    let rec = homogeneity_record(&st);
    if rec.max() > tol {
        return Err(CartanError::HomogeneityViolation(format!(
            "Euler residuals (K^2: {:.3e}, g: {:.3e}, N: {:.3e}) exceed {tol:.1e} at p = {:?}",
            rec.euler_k2, rec.g_degree_zero, rec.n_degree_one, z.p
        )));
    }
    Ok(rec)
}

/// Load-time certification on a fixed set of probe points. Probes are drawn
/// deterministically inside the validity domain; a metric whose domain
/// rejects nearly everything is reported as a sampling failure.
pub fn certify_homogeneity(structure: &Arc<CartanStructure>, tol: f64) -> Result<()> {
    const PROBES: usize = 32;
    let n = structure.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let mut accepted = 0;
    let mut tried = 0;
    while accepted < PROBES && tried < PROBES * 40 {
        tried += 1;
        let x: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(-0.9..0.9) * structure.validity.x_box)
            .collect();
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let r = rng.gen_range(0.5..2.0);
        for v in &mut p {
            *v *= r / norm;
        }
        let z = PhasePoint::new(x, p);
        if !structure.validity.admits(&z) || z.pn_ratio() < 0.05 {
            continue;
        }
        accepted += 1;
        homogeneity_certificate(structure, &z, tol)?;
    }
    if accepted < PROBES {
        return Err(CartanError::SamplingExhausted {
            requested: PROBES,
            accepted,
            candidates: tried,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use approx::assert_relative_eq;

    fn structure(label: &str, dim: usize) -> Arc<CartanStructure> {
        CartanStructure::from_descriptor(metrics::builtin(label, dim).unwrap())
    }

    #[test]
    fn euclidean_fundamental_tensors() {
        let s = structure("euclidean", 2);
        let z = PhasePoint::new(vec![0.0, 0.0], vec![3.0, 4.0]);
        let t = fundamental_tensors(&s, &z).unwrap();
        assert_relative_eq!(t.k2, 25.0, max_relative = 1e-14);
        assert_relative_eq!(t.g_upper[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(t.g_upper[(0, 1)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(t.p_upper[0], 3.0, max_relative = 1e-14);
        assert_relative_eq!(t.p_upper[1], 4.0, max_relative = 1e-14);
        assert!(t.cartan.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn quadratic_metrics_kill_cartan_tensor() {
        for label in ["quadratic-diag", "quadratic-offdiag"] {
            let s = structure(label, 3);
            let z = PhasePoint::new(vec![0.3, -0.5, 0.1], vec![1.0, -0.7, 1.2]);
            let t = fundamental_tensors(&s, &z).unwrap();
            assert!(
                t.cartan.iter().all(|v| v.abs() < 1e-12),
                "{label}: C != 0"
            );
        }
    }

    #[test]
    fn flat_metric_has_zero_christoffel() {
        let s = structure("euclidean", 3);
        let z = PhasePoint::new(vec![0.1, 0.2, 0.3], vec![1.0, 0.5, -0.8]);
        let c = formal_christoffel(&s, &z).unwrap();
        assert!(c.gamma.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn christoffel_is_symmetric_in_lower_indices() {
        let s = structure("randers-dual", 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.3..1.5)).collect();
            let z = PhasePoint::new(x, p);
            let c = formal_christoffel(&s, &z).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let d = (c.gamma[(i, j, k)] - c.gamma[(i, k, j)]).abs();
                        assert!(d < 1e-12, "gamma asymmetry {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn homogeneity_passes_for_builtins_and_fails_for_broken_metric() {
        for label in metrics::BUILTIN_LABELS {
            let s = structure(label, 3);
            certify_homogeneity(&s, 1e-10).unwrap();
        }
        let broken = CartanStructure::from_descriptor(
            metrics::from_expression("p1^2 + p2^2 + p1", 2, "broken").unwrap(),
        );
        let err = certify_homogeneity(&broken, 1e-10);
        assert!(matches!(err, Err(CartanError::HomogeneityViolation(_))));
    }
}
