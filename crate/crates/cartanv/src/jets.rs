//! Forward-mode Taylor arithmetic ("jets").
//!
//! A [`Jet`] is a truncated multivariate Taylor expansion of a scalar at a
//! phase point, over a chosen set of active coordinates. Coefficients are
//! Taylor-normalized: the entry for a multi-index `a` stores `d^a f / a!`,
//! so multiplication is plain truncated polynomial convolution and the raw
//! partial derivative is recovered as `a! * coeff(a)`.
//!
//! Orders are anisotropic: up to [`MAX_X_ORDER`] in base coordinates, up to
//! [`MAX_P_ORDER`] in momenta, with the total degree capped at
//! [`MAX_TOTAL_ORDER`]. Every jet carries a validity budget `(vx, vp, vt)`
//! recording how many orders of each kind are still trustworthy after
//! derivative extractions; reading past the budget is a logic error and
//! panics.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{CartanError, Result};
use crate::point::PhasePoint;

pub const MAX_X_ORDER: usize = 2;
pub const MAX_P_ORDER: usize = 4;
pub const MAX_TOTAL_ORDER: usize = 5;

/// Requested differentiation orders and active coordinates for a jet space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivSpec {
    pub dim: usize,
    pub x_order: usize,
    pub p_order: usize,
    /// 0-based indices of active base coordinates.
    pub active_x: Vec<usize>,
    /// 0-based indices of active momenta.
    pub active_p: Vec<usize>,
}

impl DerivSpec {
    pub fn new(
        dim: usize,
        x_order: usize,
        p_order: usize,
        active_x: Vec<usize>,
        active_p: Vec<usize>,
    ) -> Result<Self> {
        if x_order > MAX_X_ORDER || p_order > MAX_P_ORDER {
            return Err(CartanError::InvalidConfig(format!(
                "derivative orders (x:{x_order}, p:{p_order}) exceed caps (x:{MAX_X_ORDER}, p:{MAX_P_ORDER})"
            )));
        }
        if x_order > 0 && active_x.is_empty() {
            return Err(CartanError::InvalidConfig(
                "x_order > 0 requires active base coordinates".into(),
            ));
        }
        if p_order > 0 && active_p.is_empty() {
            return Err(CartanError::InvalidConfig(
                "p_order > 0 requires active momenta".into(),
            ));
        }
        if active_x.iter().chain(&active_p).any(|&i| i >= dim) {
            return Err(CartanError::InvalidConfig(
                "active coordinate index out of range".into(),
            ));
        }
        Ok(Self {
            dim,
            x_order,
            p_order,
            active_x,
            active_p,
        })
    }

    /// Momentum-only jets of the given order, all momenta active.
    pub fn p_only(dim: usize, p_order: usize) -> Result<Self> {
        Self::new(dim, 0, p_order, vec![], (0..dim).collect())
    }

    /// The master spec used by the geometry assembly: order 2 in x, order 4
    /// in p, total degree capped, all coordinates active.
    pub fn full(dim: usize) -> Self {
        Self::new(
            dim,
            MAX_X_ORDER,
            MAX_P_ORDER,
            (0..dim).collect(),
            (0..dim).collect(),
        )
        .expect("master spec is always valid")
    }

    /// Total-degree truncation bound for this spec.
    pub fn total_cap(&self) -> usize {
        (self.x_order + self.p_order).min(MAX_TOTAL_ORDER)
    }
}

type Expts = Box<[u8]>;

/// Monomial basis, multiplication and derivative tables for one `DerivSpec`.
/// Spaces are interned globally; construction cost is paid once per spec.
pub struct JetSpace {
    spec: DerivSpec,
    nx: usize,
    monomials: Vec<Expts>,
    index: HashMap<Expts, u32>,
    /// Ordered pair products that stay inside the truncation set: (i, j, k)
    /// means `c[k] += a[i] * b[j]`.
    mul_table: Vec<(u32, u32, u32)>,
    /// Per active variable: (src, dst, factor) with `d[dst] += c[src] * factor`.
    deriv_tables: Vec<Vec<(u32, u32, f64)>>,
    /// `a!` per monomial, for derivative extraction.
    factorials: Vec<f64>,
}

fn enumerate_exponents(nvars: usize, max_total: usize) -> Vec<Vec<u8>> {
    let mut out = vec![];
    let mut cur = vec![0u8; nvars];
    fn rec(v: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if v == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[v] = e as u8;
            rec(v + 1, left - e, cur, out);
        }
        cur[v] = 0;
    }
    rec(0, max_total, &mut cur, &mut out);
    out
}

impl JetSpace {
    fn build(spec: DerivSpec) -> Self {
        let nx = spec.active_x.len();
        let np = spec.active_p.len();
        let cap = spec.total_cap();

        let mut monomials: Vec<Expts> = vec![];
        for ex in enumerate_exponents(nx, spec.x_order) {
            let dx: usize = ex.iter().map(|&e| e as usize).sum();
            for ep in enumerate_exponents(np, spec.p_order) {
                let dp: usize = ep.iter().map(|&e| e as usize).sum();
                if dx + dp > cap {
                    continue;
                }
                let mut m = Vec::with_capacity(nx + np);
                m.extend_from_slice(&ex);
                m.extend_from_slice(&ep);
                monomials.push(m.into_boxed_slice());
            }
        }
        // Constant monomial first, then by total degree, then lexicographic.
        monomials.sort_by_key(|m| {
            (
                m.iter().map(|&e| e as usize).sum::<usize>(),
                m.iter().map(|&e| std::cmp::Reverse(e)).collect::<Vec<_>>(),
            )
        });
        let index: HashMap<Expts, u32> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i as u32))
            .collect();

        let within = |m: &[u8]| -> bool {
            let dx: usize = m[..nx].iter().map(|&e| e as usize).sum();
            let dp: usize = m[nx..].iter().map(|&e| e as usize).sum();
            dx <= spec.x_order && dp <= spec.p_order && dx + dp <= cap
        };

        let mut mul_table = vec![];
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let sum: Vec<u8> = a.iter().zip(b.iter()).map(|(&u, &v)| u + v).collect();
                if within(&sum) {
                    if let Some(&k) = index.get(sum.as_slice()) {
                        mul_table.push((i as u32, j as u32, k));
                    }
                }
            }
        }
        // Group by output index for better accumulation locality.
        mul_table.sort_by_key(|&(_, _, k)| k);

        let nvars = nx + np;
        let mut deriv_tables = vec![vec![]; nvars];
        for (dst, m) in monomials.iter().enumerate() {
            for v in 0..nvars {
                let mut src = m.to_vec();
                src[v] += 1;
                if let Some(&s) = index.get(src.into_boxed_slice().as_ref()) {
                    deriv_tables[v].push((s, dst as u32, (m[v] + 1) as f64));
                }
            }
        }

        let factorials = monomials
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&e| (1..=e as u64).product::<u64>() as f64)
                    .product()
            })
            .collect();

        Self {
            spec,
            nx,
            monomials,
            index,
            mul_table,
            deriv_tables,
            factorials,
        }
    }

    /// Interned space for a spec; repeated requests share tables.
    pub fn get(spec: DerivSpec) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<DerivSpec, Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap();
        guard
            .entry(spec.clone())
            .or_insert_with(|| Arc::new(JetSpace::build(spec)))
            .clone()
    }

    /// Master space (x:2, p:4, total 5) for dimension `dim`.
    pub fn master(dim: usize) -> Arc<JetSpace> {
        Self::get(DerivSpec::full(dim))
    }

    pub fn spec(&self) -> &DerivSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    fn full_validity(&self) -> (u8, u8, u8) {
        (
            self.spec.x_order as u8,
            self.spec.p_order as u8,
            self.spec.total_cap() as u8,
        )
    }

    fn active_slot_x(&self, i: usize) -> Option<usize> {
        self.spec.active_x.iter().position(|&v| v == i)
    }

    fn active_slot_p(&self, i: usize) -> Option<usize> {
        self.spec.active_p.iter().position(|&v| v == i).map(|s| self.nx + s)
    }
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("spec", &self.spec)
            .field("monomials", &self.monomials.len())
            .field("mul_pairs", &self.mul_table.len())
            .finish()
    }
}

/// Truncated Taylor expansion of a scalar at a phase point.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    c: Vec<f64>,
    vx: u8,
    vp: u8,
    vt: u8,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Jet(value={}, valid=({},{},{}))",
            self.c[0], self.vx, self.vp, self.vt
        )
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, v: f64) -> Jet {
        let (vx, vp, vt) = space.full_validity();
        let mut c = vec![0.0; space.len()];
        c[0] = v;
        Jet {
            space: space.clone(),
            c,
            vx,
            vp,
            vt,
        }
    }

    fn variable(space: &Arc<JetSpace>, slot: Option<usize>, value: f64) -> Jet {
        let mut jet = Jet::constant(space, value);
        if let Some(slot) = slot {
            let mut m = vec![0u8; space.monomials[0].len()];
            m[slot] = 1;
            let idx = space.index[m.into_boxed_slice().as_ref()] as usize;
            jet.c[idx] = 1.0;
        }
        jet
    }

    /// Jet of the coordinate function `x_i` at value `v`. Inactive
    /// coordinates degrade to constants.
    pub fn var_x(space: &Arc<JetSpace>, i: usize, v: f64) -> Jet {
        Jet::variable(space, space.active_slot_x(i), v)
    }

    /// Jet of the momentum function `p_i` at value `v`.
    pub fn var_p(space: &Arc<JetSpace>, i: usize, v: f64) -> Jet {
        Jet::variable(space, space.active_slot_p(i), v)
    }

    /// Coordinate jets `(x, p)` for a phase point, each of length `dim`.
    pub fn coords(space: &Arc<JetSpace>, z: &PhasePoint) -> (Vec<Jet>, Vec<Jet>) {
        let xs = (0..z.dim()).map(|i| Jet::var_x(space, i, z.x[i])).collect();
        let ps = (0..z.dim()).map(|i| Jet::var_p(space, i, z.p[i])).collect();
        (xs, ps)
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn validity(&self) -> (u8, u8, u8) {
        (self.vx, self.vp, self.vt)
    }

    fn same_space(&self, other: &Jet) {
        assert!(
            Arc::ptr_eq(&self.space, &other.space),
            "jet operands from different spaces"
        );
    }

    fn meet(&self, other: &Jet) -> (u8, u8, u8) {
        (
            self.vx.min(other.vx),
            self.vp.min(other.vp),
            self.vt.min(other.vt),
        )
    }

    /// Partial derivative of the underlying function at the base point.
    /// `xs` and `ps` list differentiation variables with multiplicity,
    /// e.g. `partial(&[], &[0, 1, 1])` is d^3 f / dp_1 dp_2^2 (0-based).
    pub fn partial(&self, xs: &[usize], ps: &[usize]) -> f64 {
        let sp = &self.space;
        let mut m = vec![0u8; sp.monomials[0].len()];
        for &i in xs {
            let slot = sp
                .active_slot_x(i)
                .unwrap_or_else(|| panic!("x{} is not active in this jet space", i + 1));
            m[slot] += 1;
        }
        for &i in ps {
            let slot = sp
                .active_slot_p(i)
                .unwrap_or_else(|| panic!("p{} is not active in this jet space", i + 1));
            m[slot] += 1;
        }
        assert!(
            xs.len() <= self.vx as usize
                && ps.len() <= self.vp as usize
                && xs.len() + ps.len() <= self.vt as usize,
            "partial of order (x:{}, p:{}) exceeds jet validity ({},{},{})",
            xs.len(),
            ps.len(),
            self.vx,
            self.vp,
            self.vt
        );
        match sp.index.get(m.into_boxed_slice().as_ref()) {
            Some(&k) => self.c[k as usize] * sp.factorials[k as usize],
            None => panic!("requested partial outside the truncation set"),
        }
    }

    fn derive_slot(&self, var_slot: usize, is_x: bool) -> Jet {
        let mut c = vec![0.0; self.space.len()];
        for &(src, dst, f) in &self.space.deriv_tables[var_slot] {
            c[dst as usize] = self.c[src as usize] * f;
        }
        Jet {
            space: self.space.clone(),
            c,
            vx: if is_x { self.vx.saturating_sub(1) } else { self.vx },
            vp: if is_x { self.vp } else { self.vp.saturating_sub(1) },
            vt: self.vt.saturating_sub(1),
        }
    }

    /// Jet of `df/dx_i` (one order of x-validity is spent).
    pub fn d_x(&self, i: usize) -> Jet {
        let slot = self
            .space
            .active_slot_x(i)
            .unwrap_or_else(|| panic!("x{} is not active in this jet space", i + 1));
        self.derive_slot(slot, true)
    }

    /// Jet of `df/dp_i`.
    pub fn d_p(&self, i: usize) -> Jet {
        let slot = self
            .space
            .active_slot_p(i)
            .unwrap_or_else(|| panic!("p{} is not active in this jet space", i + 1));
        self.derive_slot(slot, false)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for v in &mut out.c {
            *v *= s;
        }
        out
    }

    /// Integer power by repeated multiplication; negative exponents go
    /// through `recip`.
    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        let mut acc = Jet::constant(&self.space, 1.0);
        for _ in 0..n {
            acc = &acc * self;
        }
        // Constants keep full validity; powers of self keep self's budget.
        if n > 0 {
            acc.vx = self.vx;
            acc.vp = self.vp;
            acc.vt = self.vt;
        }
        Ok(acc)
    }

    /// Composes a univariate power series `sum a_k w^k` where
    /// `w = self - value` has no constant term. The series terminates at the
    /// space's total degree, so the result is exact within truncation.
    fn compose(&self, coeffs: &[f64]) -> Jet {
        let mut w = self.clone();
        w.c[0] = 0.0;
        let mut acc = Jet::constant(&self.space, *coeffs.last().unwrap());
        for k in (0..coeffs.len() - 1).rev() {
            acc = &acc * &w;
            acc.c[0] += coeffs[k];
        }
        acc.vx = self.vx;
        acc.vp = self.vp;
        acc.vt = self.vt;
        acc
    }

    /// Multiplicative inverse. Fails with `Singularity` on zero base value.
    pub fn recip(&self) -> Result<Jet> {
        let u0 = self.value();
        if u0 == 0.0 || !u0.is_finite() {
            return Err(CartanError::Singularity(
                "reciprocal of a jet with zero base value".into(),
            ));
        }
        let d = self.space.spec.total_cap();
        let mut coeffs = Vec::with_capacity(d + 1);
        let mut a = 1.0 / u0;
        for _ in 0..=d {
            coeffs.push(a);
            a = -a / u0;
        }
        Ok(self.compose(&coeffs))
    }

    /// Square root. Fails with `Domain` on non-positive base value.
    pub fn sqrt(&self) -> Result<Jet> {
        let u0 = self.value();
        if u0 <= 0.0 || !u0.is_finite() {
            return Err(CartanError::Domain(
                "square root of a jet with non-positive base value".into(),
            ));
        }
        let d = self.space.spec.total_cap();
        let mut coeffs = Vec::with_capacity(d + 1);
        let mut a = u0.sqrt();
        for k in 0..=d {
            coeffs.push(a);
            a *= (0.5 - k as f64) / ((k + 1) as f64 * u0);
        }
        Ok(self.compose(&coeffs))
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        Ok(self * &other.recip()?)
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        let (vx, vp, vt) = self.meet(rhs);
        let c = self
            .c
            .iter()
            .zip(&rhs.c)
            .map(|(a, b)| a + b)
            .collect();
        Jet {
            space: self.space.clone(),
            c,
            vx,
            vp,
            vt,
        }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        let (vx, vp, vt) = self.meet(rhs);
        let c = self
            .c
            .iter()
            .zip(&rhs.c)
            .map(|(a, b)| a - b)
            .collect();
        Jet {
            space: self.space.clone(),
            c,
            vx,
            vp,
            vt,
        }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        let (vx, vp, vt) = self.meet(rhs);
        let mut c = vec![0.0; self.space.len()];
        for &(i, j, k) in &self.space.mul_table {
            c[k as usize] += self.c[i as usize] * rhs.c[j as usize];
        }
        Jet {
            space: self.space.clone(),
            c,
            vx,
            vp,
            vt,
        }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

/// Lifts a scalar field to its truncated Taylor expansion at `z`.
///
/// `f` receives coordinate jets for all `dim` coordinates (inactive ones are
/// constants) and combines them with jet arithmetic.
pub fn lift<F>(spec: DerivSpec, z: &PhasePoint, f: F) -> Result<Jet>
where
    F: Fn(&[Jet], &[Jet]) -> Result<Jet>,
{
    let space = JetSpace::get(spec);
    let (xs, ps) = Jet::coords(&space, z);
    f(&xs, &ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn point2(p1: f64, p2: f64) -> PhasePoint {
        PhasePoint::new(vec![0.0, 0.0], vec![p1, p2])
    }

    #[test]
    fn square_of_momentum() {
        let spec = DerivSpec::p_only(2, 2).unwrap();
        let jet = lift(spec, &point2(3.0, 4.0), |_, p| Ok(&p[0] * &p[0])).unwrap();
        assert_eq!(jet.value(), 9.0);
        assert_eq!(jet.partial(&[], &[0]), 6.0);
        assert_eq!(jet.partial(&[], &[0, 0]), 2.0);
    }

    #[test]
    fn euclidean_norm_gradient() {
        let spec = DerivSpec::p_only(2, 1).unwrap();
        let jet = lift(spec, &point2(3.0, 4.0), |_, p| {
            (&(&p[0] * &p[0]) + &(&p[1] * &p[1])).sqrt()
        })
        .unwrap();
        assert_relative_eq!(jet.value(), 5.0, max_relative = 1e-15);
        assert_relative_eq!(jet.partial(&[], &[0]), 3.0 / 5.0, max_relative = 1e-15);
        assert_relative_eq!(jet.partial(&[], &[1]), 4.0 / 5.0, max_relative = 1e-15);
    }

    #[test]
    fn mixed_bilinear_coefficient() {
        let spec = DerivSpec::new(2, 1, 1, vec![0], vec![0]).unwrap();
        let z = PhasePoint::new(vec![2.0, 0.0], vec![5.0, 1.0]);
        let jet = lift(spec, &z, |x, p| Ok(&x[0] * &p[0])).unwrap();
        assert_eq!(jet.value(), 10.0);
        assert_eq!(jet.partial(&[0], &[0]), 1.0);
    }

    #[test]
    fn sqrt_of_square_is_identity_jet() {
        let spec = DerivSpec::p_only(1, 3).unwrap();
        let z = PhasePoint::new(vec![0.0], vec![2.0]);
        let jet = lift(spec, &z, |_, p| (&p[0] * &p[0]).sqrt()).unwrap();
        assert_relative_eq!(jet.value(), 2.0, max_relative = 1e-15);
        assert_relative_eq!(jet.partial(&[], &[0]), 1.0, max_relative = 1e-14);
        assert!(jet.partial(&[], &[0, 0]).abs() < 1e-14);
        assert!(jet.partial(&[], &[0, 0, 0]).abs() < 1e-13);
    }

    #[test]
    fn geometric_series_coefficients() {
        let spec = DerivSpec::p_only(1, 3).unwrap();
        let z = PhasePoint::new(vec![0.0], vec![0.0]);
        let jet = lift(spec, &z, |_, p| {
            (&Jet::constant(p[0].space(), 1.0) + &p[0]).recip()
        })
        .unwrap();
        assert_eq!(jet.value(), 1.0);
        assert_eq!(jet.partial(&[], &[0]), -1.0);
        assert_eq!(jet.partial(&[], &[0, 0]), 2.0); // 2! * 1
        assert_eq!(jet.partial(&[], &[0, 0, 0]), -6.0); // 3! * (-1)
    }

    #[test]
    fn polynomial_degree_four_exactness() {
        // f = p1^4 + 2 p1^2 p2^2 - p2^3, analytic partials at (1.5, -0.5).
        let spec = DerivSpec::p_only(2, 4).unwrap();
        let (a, b) = (1.5, -0.5);
        let jet = lift(spec, &point2(a, b), |_, p| {
            let p1 = &p[0];
            let p2 = &p[1];
            let p1sq = p1 * p1;
            let p2sq = p2 * p2;
            Ok(&(&(&p1sq * &p1sq) + &(&p1sq * &p2sq).scale(2.0)) - &(&p2sq * p2))
        })
        .unwrap();
        assert_relative_eq!(jet.value(), a.powi(4) + 2.0 * a * a * b * b - b.powi(3), max_relative = 1e-14);
        assert_relative_eq!(
            jet.partial(&[], &[0]),
            4.0 * a.powi(3) + 4.0 * a * b * b,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            jet.partial(&[], &[0, 1]),
            8.0 * a * b,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            jet.partial(&[], &[1, 1, 1]),
            -6.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(jet.partial(&[], &[0, 0, 0, 0]), 24.0, max_relative = 1e-14);
        assert_relative_eq!(jet.partial(&[], &[0, 0, 1, 1]), 8.0, max_relative = 1e-14);
    }

    #[test]
    fn derivative_jets_shift_coefficients() {
        let spec = DerivSpec::full(2);
        let z = PhasePoint::new(vec![0.3, -0.2], vec![1.0, 2.0]);
        // f = x1 * p2^3
        let jet = lift(spec, &z, |x, p| Ok(&x[0] * &(&(&p[1] * &p[1]) * &p[1]))).unwrap();
        let dx = jet.d_x(0);
        assert_relative_eq!(dx.value(), 8.0, max_relative = 1e-15);
        let dp = dx.d_p(1);
        assert_relative_eq!(dp.value(), 12.0, max_relative = 1e-15);
        // d^3 f / dx1 dp2^2 = 6 p2 = 12
        assert_relative_eq!(dp.partial(&[], &[1]), 12.0, max_relative = 1e-13);
    }

    #[test]
    fn recip_of_zero_base_is_singular() {
        let spec = DerivSpec::p_only(1, 2).unwrap();
        let z = PhasePoint::new(vec![0.0], vec![0.0]);
        let err = lift(spec, &z, |_, p| p[0].recip());
        assert!(matches!(err, Err(CartanError::Singularity(_))));
    }

    #[test]
    fn sqrt_of_negative_base_is_domain_error() {
        let spec = DerivSpec::p_only(1, 2).unwrap();
        let z = PhasePoint::new(vec![0.0], vec![-1.0]);
        let err = lift(spec, &z, |_, p| p[0].sqrt());
        assert!(matches!(err, Err(CartanError::Domain(_))));
    }

    #[test]
    #[should_panic(expected = "exceeds jet validity")]
    fn over_extraction_panics() {
        let spec = DerivSpec::p_only(1, 2).unwrap();
        let z = PhasePoint::new(vec![0.0], vec![1.0]);
        let jet = lift(spec, &z, |_, p| Ok(p[0].clone())).unwrap();
        let d = jet.d_p(0);
        let _ = d.partial(&[], &[0, 0]);
    }

    #[test]
    fn deriv_spec_validates_orders() {
        assert!(DerivSpec::new(2, 3, 0, vec![0], vec![]).is_err());
        assert!(DerivSpec::new(2, 0, 5, vec![], vec![0]).is_err());
        assert!(DerivSpec::new(2, 1, 0, vec![], vec![]).is_err());
        assert!(DerivSpec::new(2, 0, 1, vec![], vec![2]).is_err());
    }

    fn random_cubic(c: &[f64; 8], x: &[Jet], p: &[Jet]) -> Jet {
        // c0 + c1 p1 + c2 p2 + c3 p1 p2 + c4 p1^2 + c5 x1 + c6 x1 p1 + c7 p1^3
        let s = x[0].space();
        let mut acc = Jet::constant(s, c[0]);
        acc = &acc + &p[0].scale(c[1]);
        acc = &acc + &p[1].scale(c[2]);
        acc = &acc + &(&p[0] * &p[1]).scale(c[3]);
        acc = &acc + &(&p[0] * &p[0]).scale(c[4]);
        acc = &acc + &x[0].scale(c[5]);
        acc = &acc + &(&x[0] * &p[0]).scale(c[6]);
        acc = &acc + &(&(&p[0] * &p[0]) * &p[0]).scale(c[7]);
        acc
    }

    proptest! {
        // Leibniz / chain consistency: the jet of f*g equals jet(f)*jet(g)
        // coefficient-wise, and (a*b)/b recovers a away from zero bases.
        #[test]
        fn product_and_quotient_consistency(
            cf in prop::array::uniform8(-2.0f64..2.0),
            cg in prop::array::uniform8(-2.0f64..2.0),
            p1 in 0.2f64..2.0,
            p2 in -2.0f64..2.0,
        ) {
            let spec = DerivSpec::full(2);
            let z = PhasePoint::new(vec![0.4, -0.3], vec![p1, p2]);
            let space = JetSpace::get(spec);
            let (xs, ps) = Jet::coords(&space, &z);
            let f = random_cubic(&cf, &xs, &ps);
            let mut g = random_cubic(&cg, &xs, &ps);
            // keep |g| away from zero so the quotient is well conditioned
            g.c[0] += if g.value() >= 0.0 { 1.0 } else { -1.0 };

            let prod = &f * &g;
            let scale = f.c.iter().map(|v| v.abs()).fold(1.0, f64::max)
                * g.c.iter().map(|v| v.abs()).fold(1.0, f64::max);
            // spot-check a few coefficients against hand convolution
            prop_assert!((prod.value() - f.value() * g.value()).abs() <= 1e-13 * scale);

            let back = prod.div(&g).unwrap();
            for (a, b) in back.c.iter().zip(&f.c) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + scale));
            }
        }
    }
}
