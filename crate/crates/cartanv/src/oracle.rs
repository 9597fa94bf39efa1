//! Central finite-difference oracle.
//!
//! Derivatives here are computed from plain float evaluations with central
//! stencils and Richardson extrapolation. The oracle deliberately shares no
//! code with the jet kernel; it exists to cross-validate every derivative
//! the jets produce.

use nalgebra::DMatrix;

use crate::error::{CartanError, Result};
use crate::point::PhasePoint;

/// Which coordinate a stencil displaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    P(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct FdOracle {
    /// Relative base step; scaled per coordinate by (1 + |coordinate|).
    pub h_rel: f64,
    /// Richardson extrapolation levels.
    pub richardson: usize,
}

impl Default for FdOracle {
    fn default() -> Self {
        Self {
            h_rel: 1e-4,
            richardson: 2,
        }
    }
}

fn shifted(z: &PhasePoint, var: Var, delta: f64) -> PhasePoint {
    let mut out = z.clone();
    match var {
        Var::X(i) => out.x[i] += delta,
        Var::P(i) => out.p[i] += delta,
    }
    out
}

/// Offsets and weights of the second-order central stencil for a k-th
/// derivative, to be divided by h^k.
fn stencil_1d(k: usize) -> &'static [(f64, f64)] {
    match k {
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        _ => unreachable!(),
    }
}

impl FdOracle {
    fn step_for(&self, coord: f64, total_order: usize) -> f64 {
        // The smallest refined step h / 2^levels must keep eps / h^order
        // below truncation; push the base step up accordingly.
        let floor = (1 << self.richardson) as f64
            * 2.0
            * f64::EPSILON.powf(1.0 / (total_order as f64 + 2.0));
        self.h_rel.max(floor) * (1.0 + coord.abs())
    }

    /// Product-stencil estimate at joint step scale `scale`: every distinct
    /// variable contributes its own 1-D stencil and the full tensor grid is
    /// evaluated on the raw function, so nested differencing never stacks
    /// noise.
    fn product_stencil<F>(
        f: &F,
        z: &PhasePoint,
        groups: &[(Var, usize, f64)],
        scale: f64,
    ) -> Result<f64>
    where
        F: Fn(&PhasePoint) -> Result<f64>,
    {
        fn rec<F>(
            f: &F,
            z: &PhasePoint,
            groups: &[(Var, usize, f64)],
            scale: f64,
            weight: f64,
        ) -> Result<f64>
        where
            F: Fn(&PhasePoint) -> Result<f64>,
        {
            match groups.split_first() {
                None => Ok(weight * f(z)?),
                Some((&(var, k, h), rest)) => {
                    let h = h * scale;
                    let mut acc = 0.0;
                    for &(m, w) in stencil_1d(k) {
                        let zz = shifted(z, var, m * h);
                        acc += rec(f, &zz, rest, scale, weight * w / h.powi(k as i32))?;
                    }
                    Ok(acc)
                }
            }
        }
        rec(f, z, groups, scale, 1.0)
    }

    /// Mixed partial derivative given by a list of variables with
    /// multiplicity (total order at most 3), with Richardson extrapolation
    /// over jointly halved steps.
    pub fn partial<F>(&self, f: &F, z: &PhasePoint, vars: &[Var]) -> Result<f64>
    where
        F: Fn(&PhasePoint) -> Result<f64>,
    {
        let total = vars.len();
        if total == 0 {
            return f(z);
        }
        if total > 3 {
            return Err(CartanError::InvalidConfig(
                "oracle supports derivative orders 1..3".into(),
            ));
        }
        let mut groups: Vec<(Var, usize, f64)> = vec![];
        for &v in vars {
            if let Some(g) = groups.iter_mut().find(|g| g.0 == v) {
                g.1 += 1;
            } else {
                groups.push((v, 1, 0.0));
            }
        }
        for g in &mut groups {
            let coord = match g.0 {
                Var::X(i) => z.x[i],
                Var::P(i) => z.p[i],
            };
            g.2 = self.step_for(coord, total);
        }

        let mut table: Vec<f64> = Vec::with_capacity(self.richardson + 1);
        for i in 0..=self.richardson {
            let mut t = Self::product_stencil(f, z, &groups, 1.0 / (1 << i) as f64)?;
            for (j, prev) in table.iter_mut().enumerate() {
                let w = 4.0_f64.powi(j as i32 + 1);
                let improved = (w * t - *prev) / (w - 1.0);
                *prev = t;
                t = improved;
            }
            table.push(t);
        }
        Ok(*table.last().unwrap())
    }

    /// First derivative along one variable without extrapolation, with an
    /// explicit step. Used where the integrand itself carries FD noise.
    pub fn first_plain<F>(&self, f: &F, z: &PhasePoint, var: Var, h: f64) -> Result<f64>
    where
        F: Fn(&PhasePoint) -> Result<f64>,
    {
        Ok((f(&shifted(z, var, h))? - f(&shifted(z, var, -h))?) / (2.0 * h))
    }

    /// Fundamental tensor `g^{ij} = 0.5 * d^2 K^2 / dp_i dp_j` by pure FD on
    /// the float evaluator.
    pub fn g_upper<F>(&self, k2: &F, z: &PhasePoint) -> Result<DMatrix<f64>>
    where
        F: Fn(&PhasePoint) -> Result<f64>,
    {
        let n = z.dim();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = 0.5 * self.partial(k2, z, &[Var::P(i), Var::P(j)])?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Canonical nonlinear connection assembled entirely from FD pieces:
    /// FD Hessian for g, numeric inversion, plain central differences of the
    /// inverted matrix in x and p, then the defining formula.
    pub fn nonlinear_connection<F>(&self, k2: &F, z: &PhasePoint) -> Result<DMatrix<f64>>
    where
        F: Fn(&PhasePoint) -> Result<f64>,
    {
        let n = z.dim();
        let g_lower = |zz: &PhasePoint| -> Result<DMatrix<f64>> {
            let g = self.g_upper(k2, zz)?;
            g.clone().try_inverse().ok_or_else(|| {
                CartanError::Singularity("oracle: fundamental tensor not invertible".into())
            })
        };
        let g_up = self.g_upper(k2, z)?;
        let p = nalgebra::DVector::from_column_slice(&z.p);
        let p_up = &g_up * &p;

        // Outer steps stay coarse: the inner FD already carries ~1e-9 noise.
        let mut dglo_dx = vec![DMatrix::zeros(n, n); n];
        let mut dglo_dp = vec![DMatrix::zeros(n, n); n];
        for k in 0..n {
            let hx = 1e-3 * (1.0 + z.x[k].abs());
            dglo_dx[k] =
                (g_lower(&shifted(z, Var::X(k), hx))? - g_lower(&shifted(z, Var::X(k), -hx))?)
                    / (2.0 * hx);
            let hp = 1e-3 * (1.0 + z.p[k].abs());
            dglo_dp[k] =
                (g_lower(&shifted(z, Var::P(k), hp))? - g_lower(&shifted(z, Var::P(k), -hp))?)
                    / (2.0 * hp);
        }

        let mut gamma = vec![0.0; n * n * n]; // gamma^i_jk
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for s in 0..n {
                        acc += g_up[(i, s)]
                            * (dglo_dx[k][(j, s)] + dglo_dx[j][(s, k)] - dglo_dx[s][(j, k)]);
                    }
                    gamma[(i * n + j) * n + k] = 0.5 * acc;
                }
            }
        }
        let mut gamma0 = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                gamma0[(j, k)] = (0..n)
                    .map(|i| gamma[(i * n + j) * n + k] * z.p[i])
                    .sum::<f64>();
            }
        }
        let mut gamma0_h0 = vec![0.0; n];
        for h in 0..n {
            gamma0_h0[h] = (0..n).map(|k| gamma0[(h, k)] * p_up[k]).sum::<f64>();
        }
        let mut nconn = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let corr: f64 = (0..n).map(|h| gamma0_h0[h] * dglo_dp[h][(i, j)]).sum();
                nconn[(i, j)] = gamma0[(i, j)] - 0.5 * corr;
            }
        }
        Ok(nconn)
    }
}
