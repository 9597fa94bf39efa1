//! Sampling, check orchestration and report generation.
//!
//! A run samples admissible phase points deterministically from a seed,
//! builds one geometry state per point, evaluates every selected check at
//! every point (data-parallel over points when the `parallel` feature is
//! enabled) and reduces per-check maxima into a report that is
//! byte-reproducible for a fixed configuration and seed.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::cartan::{certify_homogeneity, CartanStructure};
use crate::checks::{self, CheckCtx};
use crate::error::{CartanError, Result};
use crate::metrics::{self, MetricDescriptor, MetricFlags};
use crate::point::PhasePoint;
use crate::state::GeometryState;

#[derive(Debug, Clone)]
pub enum MetricSource {
    Builtin(String),
    File(PathBuf),
    Expression(String),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub metric: MetricSource,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub tol_ad: f64,
    pub tol_fd: f64,
    pub tol_curv: f64,
    pub p_floor: f64,
    pub x_box: f64,
    pub p_shell: (f64, f64),
    /// None selects every registered check.
    pub checks: Option<Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metric: MetricSource::Builtin("randers-dual".into()),
            dim: 3,
            samples: 100,
            seed: 42,
            tol_ad: 1e-9,
            tol_fd: 1e-5,
            tol_curv: 1e-7,
            p_floor: 0.05,
            x_box: 1.0,
            p_shell: (0.5, 2.0),
            checks: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(CartanError::InvalidConfig("samples must be >= 1".into()));
        }
        for (name, v) in [
            ("tol-ad", self.tol_ad),
            ("tol-fd", self.tol_fd),
            ("tol-curv", self.tol_curv),
        ] {
            if v <= 0.0 {
                return Err(CartanError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        if self.p_shell.0 <= 0.0 || self.p_shell.1 <= self.p_shell.0 {
            return Err(CartanError::InvalidConfig(
                "p-shell must satisfy 0 < lo < hi".into(),
            ));
        }
        Ok(())
    }

    pub fn load_descriptor(&self) -> Result<MetricDescriptor> {
        match &self.metric {
            MetricSource::Builtin(label) => metrics::builtin(label, self.dim),
            MetricSource::File(path) => {
                let src = std::fs::read_to_string(path)?;
                metrics::from_expression(src.trim(), self.dim, "user-file")
            }
            MetricSource::Expression(src) => metrics::from_expression(src, self.dim, "user-expr"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplingStats {
    pub requested: usize,
    pub accepted: usize,
    pub candidates: usize,
    pub rejected_validity: usize,
    pub rejected_floor: usize,
    pub acceptance_rate: F17,
}

/// Deterministic admissible sampling: base coordinates uniform in the box,
/// momenta as a uniform shell radius times a uniform sphere direction;
/// candidates failing the validity predicate or the adapted-basis floor
/// are rejected, with oversampling capped at ten times the request.
pub fn sample_points(
    cfg: &RunConfig,
    structure: &CartanStructure,
) -> Result<(Vec<PhasePoint>, SamplingStats)> {
    let n = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = Vec::with_capacity(cfg.samples);
    let mut candidates = 0;
    let mut rejected_validity = 0;
    let mut rejected_floor = 0;
    let cap = cfg.samples * 10;
    while points.len() < cfg.samples && candidates < cap {
        candidates += 1;
        let x: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(-cfg.x_box..cfg.x_box))
            .collect();
        let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            rejected_validity += 1;
            continue;
        }
        let r = rng.gen_range(cfg.p_shell.0..cfg.p_shell.1);
        for v in &mut u {
            *v *= r / norm;
        }
        let z = PhasePoint::new(x, u);
        if !structure.validity.admits(&z) {
            rejected_validity += 1;
            continue;
        }
        if z.pn_ratio() < cfg.p_floor {
            rejected_floor += 1;
            continue;
        }
        points.push(z);
    }
    let stats = SamplingStats {
        requested: cfg.samples,
        accepted: points.len(),
        candidates,
        rejected_validity,
        rejected_floor,
        acceptance_rate: F17(points.len() as f64 / candidates.max(1) as f64),
    };
    if points.len() < cfg.samples {
        return Err(CartanError::SamplingExhausted {
            requested: cfg.samples,
            accepted: points.len(),
            candidates,
        });
    }
    Ok((points, stats))
}

/// Float wrapper serialized with 17 significant digits, so reports are
/// byte-stable across platforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_f64(self.0);
        }
        let text = format!("{:.16e}", self.0);
        match text.parse::<serde_json::Number>() {
            Ok(num) => num.serialize(s),
            Err(_) => s.serialize_f64(self.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricMeta {
    pub label: String,
    pub dim: usize,
    pub flags: MetricFlags,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub ad: F17,
    pub fd: F17,
    pub curv: F17,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigMeta {
    pub seed: u64,
    pub samples: usize,
    pub tolerances: Tolerances,
    pub p_floor: F17,
    pub p_shell: (F17, F17),
    pub x_box: F17,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub anchor: String,
    pub samples_used: usize,
    pub skipped: usize,
    pub max_residual: F17,
    pub tolerance: F17,
    pub verdict: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub engine: String,
    pub metric: MetricMeta,
    pub config: ConfigMeta,
    pub sampling: SamplingStats,
    pub checks: Vec<CheckResult>,
    pub wall_ms: u64,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == "pass")
    }
}

enum Outcome {
    Residual(f64),
    NotRun,
    Skipped,
}

fn run_point(
    structure: &Arc<CartanStructure>,
    cfg: &RunConfig,
    selected: &[usize],
    index: usize,
    z: &PhasePoint,
) -> Vec<Outcome> {
    let registry = checks::registry();
    let st = match GeometryState::build(structure, z) {
        Ok(st) => st,
        Err(_) => return selected.iter().map(|_| Outcome::Skipped).collect(),
    };
    let ctx = CheckCtx {
        st: &st,
        structure,
        cfg,
        point_index: index,
    };
    selected
        .iter()
        .map(|&ci| {
            let def = &registry[ci];
            if let Some(cap) = def.point_cap {
                if index >= cap {
                    return Outcome::NotRun;
                }
            }
            match (def.run)(&ctx, ci) {
                Ok(r) if r.is_finite() => Outcome::Residual(r),
                _ => Outcome::Skipped,
            }
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn map_points<F>(points: &[PhasePoint], f: F) -> Vec<Vec<Outcome>>
where
    F: Fn(usize, &PhasePoint) -> Vec<Outcome> + Sync,
{
    use rayon::prelude::*;
    points
        .par_iter()
        .enumerate()
        .map(|(i, z)| f(i, z))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<F>(points: &[PhasePoint], f: F) -> Vec<Vec<Outcome>>
where
    F: Fn(usize, &PhasePoint) -> Vec<Outcome> + Sync,
{
    points.iter().enumerate().map(|(i, z)| f(i, z)).collect()
}

/// Loads the metric, certifies homogeneity, samples points, evaluates the
/// selected checks at every point and aggregates maxima into a report.
pub fn run_suite(cfg: &RunConfig) -> Result<CheckReport> {
    let started = Instant::now();
    cfg.validate()?;
    let descriptor = cfg.load_descriptor()?;
    let structure = CartanStructure::from_descriptor(descriptor);
    certify_homogeneity(&structure, cfg.tol_ad * 0.1)?;

    let selected = checks::select(&cfg.checks)?;
    let (points, sampling) = sample_points(cfg, &structure)?;

    let per_point = map_points(&points, |i, z| {
        run_point(&structure, cfg, &selected, i, z)
    });

    let registry = checks::registry();
    let mut results = Vec::with_capacity(selected.len());
    for (slot, &ci) in selected.iter().enumerate() {
        let def = &registry[ci];
        let mut max_res = 0.0_f64;
        let mut used = 0;
        let mut skipped = 0;
        for row in &per_point {
            match row[slot] {
                Outcome::Residual(r) => {
                    max_res = max_res.max(r);
                    used += 1;
                }
                Outcome::Skipped => skipped += 1,
                Outcome::NotRun => {}
            }
        }
        let tolerance = def.tol.resolve(cfg);
        let verdict = if used > 0 && max_res <= tolerance {
            "pass"
        } else {
            "fail"
        };
        results.push(CheckResult {
            name: def.name.into(),
            anchor: def.anchor.into(),
            samples_used: used,
            skipped,
            max_residual: F17(max_res),
            tolerance: F17(tolerance),
            verdict: verdict.into(),
        });
    }

    Ok(CheckReport {
        engine: format!("cartanv {}", env!("CARGO_PKG_VERSION")),
        metric: MetricMeta {
            label: structure.label.clone(),
            dim: structure.dim,
            flags: structure.flags,
        },
        config: ConfigMeta {
            seed: cfg.seed,
            samples: cfg.samples,
            tolerances: Tolerances {
                ad: F17(cfg.tol_ad),
                fd: F17(cfg.tol_fd),
                curv: F17(cfg.tol_curv),
            },
            p_floor: F17(cfg.p_floor),
            p_shell: (F17(cfg.p_shell.0), F17(cfg.p_shell.1)),
            x_box: F17(cfg.x_box),
        },
        sampling,
        checks: results,
        wall_ms: started.elapsed().as_millis() as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

pub fn render_report(report: &CheckReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let mut out = String::new();
            out.push_str(&format!(
                "{} | metric {} (dim {}) | seed {} | {} samples | {} ms\n",
                report.engine,
                report.metric.label,
                report.metric.dim,
                report.config.seed,
                report.config.samples,
                report.wall_ms
            ));
            out.push_str(&format!(
                "sampling: {} accepted / {} candidates (validity {}, floor {})\n",
                report.sampling.accepted,
                report.sampling.candidates,
                report.sampling.rejected_validity,
                report.sampling.rejected_floor
            ));
            let name_w = report
                .checks
                .iter()
                .map(|c| c.name.len())
                .max()
                .unwrap_or(4)
                .max(5);
            let anchor_w = report
                .checks
                .iter()
                .map(|c| c.anchor.len())
                .max()
                .unwrap_or(6)
                .max(6);
            out.push_str(&format!(
                "{:<name_w$}  {:<anchor_w$}  {:>7}  {:>7}  {:>13}  {:>9}  verdict\n",
                "check", "anchor", "samples", "skipped", "max_residual", "tol"
            ));
            for c in &report.checks {
                out.push_str(&format!(
                    "{:<name_w$}  {:<anchor_w$}  {:>7}  {:>7}  {:>13.3e}  {:>9.1e}  {}\n",
                    c.name,
                    c.anchor,
                    c.samples_used,
                    c.skipped,
                    c.max_residual.0,
                    c.tolerance.0,
                    c.verdict
                ));
            }
            out
        }
    }
}

pub fn emit_report(
    report: &CheckReport,
    format: ReportFormat,
    out: Option<&PathBuf>,
) -> Result<()> {
    let rendered = render_report(report, format);
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(rendered.as_bytes())?;
        }
        None => {
            print!("{rendered}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trajectory experiment: radial geodesics integrated on a frozen fiber
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicSample {
    pub t: F17,
    pub k: F17,
    pub speed_drift: F17,
    pub radial_deviation: F17,
}

/// Classical fourth-order integration of the fiber geodesic equation
/// starting along the unit radial direction. The flow must track the
/// radial ray `p (K_0 + t)/K_0` with unit speed; the samples record the
/// drift of both invariants.
pub fn geodesic_experiment(
    structure: &Arc<CartanStructure>,
    z0: &PhasePoint,
    t_end: f64,
    dt: f64,
    samples: usize,
) -> Result<Vec<GeodesicSample>> {
    let n = z0.dim();
    let st0 = GeometryState::build(structure, z0)?;
    let k0 = st0.k;

    let accel = |p: &[f64], v: &[f64]| -> Result<Vec<f64>> {
        let st = GeometryState::build(structure, &PhasePoint::new(z0.x.clone(), p.to_vec()))?;
        let fib = crate::fiber::fiber_connection(&st);
        // \ddot p_k = -Gamma^k_{ij} v_i v_j with Gamma = -C
        Ok((0..n)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += fib.c_low[(k, i, j)] * v[i] * v[j];
                    }
                }
                acc
            })
            .collect())
    };

    let mut p: Vec<f64> = z0.p.clone();
    let mut v: Vec<f64> = z0.p.iter().map(|&x| x / k0).collect();
    let mut out = vec![];
    let steps = (t_end / dt).round() as usize;
    let stride = (steps / samples.max(1)).max(1);

    for step in 0..=steps {
        let t = step as f64 * dt;
        if step % stride == 0 || step == steps {
            let st = GeometryState::build(structure, &PhasePoint::new(z0.x.clone(), p.clone()))?;
            let speed = st.g_vert(&v, &v).sqrt();
            let expected: Vec<f64> = z0.p.iter().map(|&x| x * (k0 + t) / k0).collect();
            let dev = p
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            out.push(GeodesicSample {
                t: F17(t),
                k: F17(st.k),
                speed_drift: F17((speed - 1.0).abs()),
                radial_deviation: F17(dev),
            });
        }
        if step == steps {
            break;
        }
        // classical RK4 on the first-order system (p, v)
        let k1p = v.clone();
        let k1v = accel(&p, &v)?;
        let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + s * y).collect()
        };
        let k2p = add(&v, &k1v, dt / 2.0);
        let k2v = accel(&add(&p, &k1p, dt / 2.0), &k2p)?;
        let k3p = add(&v, &k2v, dt / 2.0);
        let k3v = accel(&add(&p, &k2p, dt / 2.0), &k3p)?;
        let k4p = add(&v, &k3v, dt);
        let k4v = accel(&add(&p, &k3p, dt), &k4p)?;
        for i in 0..n {
            p[i] += dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg(label: &str, dim: usize, samples: usize) -> RunConfig {
        RunConfig {
            metric: MetricSource::Builtin(label.into()),
            dim,
            samples,
            ..RunConfig::default()
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_floor() {
        let cfg = quick_cfg("euclidean", 2, 3);
        let structure =
            CartanStructure::from_descriptor(cfg.load_descriptor().unwrap());
        let (a, stats_a) = sample_points(&cfg, &structure).unwrap();
        let (b, _) = sample_points(&cfg, &structure).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|z| z.pn_ratio() >= 0.05));
        // flat metrics reject on the floor only
        assert_eq!(stats_a.rejected_validity, 0);
    }

    #[test]
    fn quartic_cone_shows_up_in_acceptance_rate() {
        let cfg = quick_cfg("quartic-root", 3, 50);
        let structure =
            CartanStructure::from_descriptor(cfg.load_descriptor().unwrap());
        let (_, stats) = sample_points(&cfg, &structure).unwrap();
        assert!(stats.rejected_validity > 0);
        assert!(stats.acceptance_rate.0 < 1.0);
    }

    #[test]
    fn tiny_euclidean_suite_passes() {
        let mut cfg = quick_cfg("euclidean", 2, 4);
        cfg.checks = Some(vec![
            "fundamental_identities".into(),
            "liouville_integrability".into(),
            "reinhart".into(),
        ]);
        let report = run_suite(&cfg).unwrap();
        assert!(report.all_passed(), "{:#?}", report.checks);
    }

    #[test]
    fn empty_selection_gives_valid_empty_report() {
        let mut cfg = quick_cfg("euclidean", 2, 2);
        cfg.checks = Some(vec![]);
        let report = run_suite(&cfg).unwrap();
        assert!(report.checks.is_empty());
        let json = render_report(&report, ReportFormat::Json);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(parsed["checks"].as_array().unwrap().is_empty());
    }

    #[test]
    fn broken_metric_is_a_homogeneity_violation() {
        let mut cfg = quick_cfg("euclidean", 2, 2);
        cfg.metric = MetricSource::Expression("p1^2 + p2^2 + p1".into());
        let err = run_suite(&cfg);
        assert!(matches!(err, Err(CartanError::HomogeneityViolation(_))));
    }

    #[test]
    fn reports_are_byte_identical_for_fixed_seed() {
        let mut cfg = quick_cfg("quadratic-diag", 2, 3);
        cfg.checks = Some(vec![
            "fundamental_identities".into(),
            "vbar_brackets".into(),
        ]);
        let mut a = run_suite(&cfg).unwrap();
        let mut b = run_suite(&cfg).unwrap();
        // wall time is the only nondeterministic field
        a.wall_ms = 0;
        b.wall_ms = 0;
        assert_eq!(
            render_report(&a, ReportFormat::Json),
            render_report(&b, ReportFormat::Json)
        );
        assert_eq!(
            render_report(&a, ReportFormat::Text),
            render_report(&b, ReportFormat::Text)
        );
    }

    #[test]
    fn f17_floats_carry_17_significant_digits() {
        #[derive(Serialize)]
        struct W {
            v: F17,
        }
        let s = serde_json::to_string(&W {
            v: F17(1.0 / 3.0),
        })
        .unwrap();
        assert_eq!(s, "{\"v\":3.3333333333333331e-1}");
    }

    #[test]
    fn geodesic_flow_tracks_radial_rays() {
        let cfg = quick_cfg("randers-dual", 2, 1);
        let structure =
            CartanStructure::from_descriptor(cfg.load_descriptor().unwrap());
        let z = PhasePoint::new(vec![0.1, -0.2], vec![0.8, 0.9]);
        let samples = geodesic_experiment(&structure, &z, 0.5, 1e-3, 5).unwrap();
        let last = samples.last().unwrap();
        assert!(last.speed_drift.0 < 1e-8, "speed drift {}", last.speed_drift.0);
        assert!(
            last.radial_deviation.0 < 1e-8,
            "radial deviation {}",
            last.radial_deviation.0
        );
    }
}
