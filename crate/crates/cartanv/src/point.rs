/// A point (x, p) of the slit cotangent bundle: base coordinates `x` and
/// nonzero momenta `p`, both of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(x.len(), p.len(), "x and p must have the same dimension");
        Self { x, p }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn p_norm(&self) -> f64 {
        self.p.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Ratio |p_n| / ||p||, the quantity guarded by the adapted-basis floor.
    pub fn pn_ratio(&self) -> f64 {
        let n = self.p.len();
        self.p[n - 1].abs() / self.p_norm()
    }

    /// Point with momenta scaled by `lambda` (positive homothety of the fiber).
    pub fn scale_p(&self, lambda: f64) -> Self {
        Self {
            x: self.x.clone(),
            p: self.p.iter().map(|v| v * lambda).collect(),
        }
    }
}
