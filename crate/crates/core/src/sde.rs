//! Monte Carlo first exits of `dX = -grad f(X) dt + sqrt(h) dB` by
//! Euler-Maruyama, with boundary-region histograms and decay fits.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{distance, DomainGeometry, PotentialField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("start point {0:?} is outside the domain")]
    StartOutsideDomain(Vec<f64>),
    #[error("regions `{0}` and `{1}` overlap")]
    OverlappingRegions(String, String),
    #[error("every sample is censored")]
    AllCensored,
    #[error("need at least 3 points for a decay fit, got {0}")]
    TooFewPoints(usize),
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SdeError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub dt: f64,
    /// Paths still inside at this time are censored.
    pub max_time: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Path `i` starts at `starts[i % starts.len()]`.
    pub starts: Vec<Vec<f64>>,
}

impl SimConfig {
    pub fn new(h: f64, dt: f64, n_paths: usize, seed: u64, start: Vec<f64>) -> Self {
        Self {
            h,
            dt,
            max_time: f64::INFINITY,
            n_paths,
            seed,
            starts: vec![start],
        }
    }

    pub fn with_max_time(mut self, t: f64) -> Self {
        self.max_time = t;
        self
    }

    /// Settings that are valid but suspicious, such as a step above
    /// `h / (10 |Hess f|)`.
    pub fn warnings(&self, f: &PotentialField, dom: &DomainGeometry) -> Vec<String> {
        let hess = max_over_domain(dom, |x| f.hessian(x).norm());
        let bound = self.h / (10.0 * hess.max(1e-300));
        let mut out = Vec::new();
        if self.dt > bound {
            out.push(format!("dt = {:.3e} exceeds h/(10 |Hess f|) = {bound:.3e}", self.dt));
        }
        out
    }
}

fn max_over_domain(dom: &DomainGeometry, mut val: impl FnMut(&[f64]) -> f64) -> f64 {
    let (lo, hi) = dom.bounding_box();
    let d = lo.len();
    let per_axis: usize = if d == 1 { 2001 } else { 81 };
    let total = per_axis.pow(d as u32);
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for k in 0..d {
            let i = r % per_axis;
            r /= per_axis;
            x[k] = lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64;
        }
        if dom.contains(&x) || d == 1 {
            best = best.max(val(&x));
        }
    }
    best
}

/// `min(h, 1) / (50 max |grad f|)` over a lattice sample of the closed domain.
pub fn default_dt(f: &PotentialField, dom: &DomainGeometry, h: f64) -> f64 {
    let gmax = max_over_domain(dom, |x| crate::landscape::norm(&f.gradient(x)));
    h.min(1.0) / (50.0 * gmax.max(1e-12))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub path_index: usize,
    pub exit_point: Vec<f64>,
    pub exit_time: f64,
    pub censored: bool,
}

fn locate_exit(dom: &DomainGeometry, inside: &[f64], outside: &[f64]) -> (Vec<f64>, f64) {
    if let Some((a, b)) = dom.as_interval() {
        let z = if outside[0] <= a { a } else { b };
        let s = ((z - inside[0]) / (outside[0] - inside[0])).clamp(0.0, 1.0);
        return (vec![z], s);
    }
    let at = |s: f64| -> Vec<f64> { inside.iter().zip(outside).map(|(p, q)| p + s * (q - p)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut p = at(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        p = at(mid);
        let g = dom.level(&p);
        if g.abs() < 1e-10 {
            return (p, mid);
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (p, 0.5 * (lo + hi))
}

/// The random stream of path `index`.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_path(f: &PotentialField, dom: &DomainGeometry, cfg: &SimConfig, index: usize) -> ExitSample {
    let mut rng = path_rng(cfg.seed, index);
    let mut x = cfg.starts[index % cfg.starts.len()].clone();
    let d = x.len();
    let mut g = vec![0.0; d];
    let mut y = vec![0.0; d];
    let noise = (cfg.h * cfg.dt).sqrt();
    let mut t = 0.0;
    let mut k: u64 = 0;
    loop {
        if t >= cfg.max_time {
            return ExitSample {
                path_index: index,
                exit_point: x,
                exit_time: t,
                censored: true,
            };
        }
        f.gradient_into(&x, &mut g);
        for i in 0..d {
            let xi: f64 = StandardNormal.sample(&mut rng);
            y[i] = x[i] - g[i] * cfg.dt + noise * xi;
        }
        if !dom.contains(&y) {
            let (z, s) = locate_exit(dom, &x, &y);
            return ExitSample {
                path_index: index,
                exit_point: z,
                exit_time: t + s * cfg.dt,
                censored: false,
            };
        }
        std::mem::swap(&mut x, &mut y);
        k += 1;
        t = k as f64 * cfg.dt;
    }
}

/// Simulates `cfg.n_paths` independent first exits. Path `i` draws from
/// stream `i` of a ChaCha8 generator keyed by the seed, so the result does not
/// depend on scheduling.
pub fn simulate_exit(f: &PotentialField, dom: &DomainGeometry, cfg: &SimConfig) -> Result<Vec<ExitSample>> {
    if !(cfg.h > 0.0) || !(cfg.dt > 0.0) {
        return Err(SdeError::InvalidConfig("h and dt must be positive".into()));
    }
    if cfg.n_paths == 0 {
        return Ok(Vec::new());
    }
    if cfg.starts.is_empty() {
        return Err(SdeError::InvalidConfig("no start point".into()));
    }
    for s in &cfg.starts {
        if s.len() != dom.dim() || !dom.contains(s) {
            return Err(SdeError::StartOutsideDomain(s.clone()));
        }
    }
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| run_path(f, dom, cfg, i))
        .collect())
}

/// Writes `path_index, exit coordinates, exit_time, censored` rows.
pub fn write_samples_csv<W: Write>(samples: &[ExitSample], mut out: W) -> std::io::Result<()> {
    let d = samples.first().map(|s| s.exit_point.len()).unwrap_or(1);
    let coords: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    writeln!(out, "path_index,{},exit_time,censored", coords.join(","))?;
    for s in samples {
        let xs: Vec<String> = s.exit_point.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(
            out,
            "{},{},{:.17e},{}",
            s.path_index,
            xs.join(","),
            s.exit_time,
            s.censored
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegionShape {
    /// An endpoint of an interval.
    Endpoint { x: f64 },
    /// Boundary points whose polar angle about `origin` is within
    /// `half_angle` of `center_angle`.
    Arc {
        origin: Vec<f64>,
        center_angle: f64,
        half_angle: f64,
    },
    /// Boundary points within Euclidean distance `radius` of `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRegion {
    pub label: String,
    pub shape: RegionShape,
}

impl BoundaryRegion {
    pub fn contains(&self, p: &[f64]) -> bool {
        match &self.shape {
            RegionShape::Endpoint { x } => (p[0] - x).abs() <= 1e-9 * (1.0 + x.abs()),
            RegionShape::Arc {
                origin,
                center_angle,
                half_angle,
            } => {
                let th = (p[1] - origin[1]).atan2(p[0] - origin[0]);
                let mut diff = (th - center_angle) % std::f64::consts::TAU;
                if diff > std::f64::consts::PI {
                    diff -= std::f64::consts::TAU;
                } else if diff < -std::f64::consts::PI {
                    diff += std::f64::consts::TAU;
                }
                diff.abs() < *half_angle
            }
            RegionShape::Ball { center, radius } => distance(p, center) < *radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitHistogram {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub leftover: usize,
    pub censored: usize,
    pub n_paths: usize,
    pub proportions: Vec<f64>,
    /// Wilson 95% intervals per region.
    pub wilson95: Vec<(f64, f64)>,
}

/// Wilson score interval for `k` successes out of `n` at `z` standard deviations.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Counts exits per region. Regions are checked for overlap on a boundary mesh.
pub fn histogram(samples: &[ExitSample], regions: &[BoundaryRegion], dom: &DomainGeometry) -> Result<ExitHistogram> {
    let mut mesh = dom.boundary_mesh(20_000);
    for r in regions {
        match &r.shape {
            RegionShape::Endpoint { x } => mesh.push(vec![*x]),
            RegionShape::Ball { center, .. } => mesh.push(dom.project_to_boundary(center)),
            RegionShape::Arc { .. } => {}
        }
    }
    for p in &mesh {
        let inside: Vec<&BoundaryRegion> = regions.iter().filter(|r| r.contains(p)).collect();
        if inside.len() > 1 {
            return Err(SdeError::OverlappingRegions(
                inside[0].label.clone(),
                inside[1].label.clone(),
            ));
        }
    }
    let mut counts = vec![0usize; regions.len()];
    let mut leftover = 0;
    let mut censored = 0;
    for s in samples {
        if s.censored {
            censored += 1;
            continue;
        }
        match regions.iter().position(|r| r.contains(&s.exit_point)) {
            Some(k) => counts[k] += 1,
            None => leftover += 1,
        }
    }
    let n = samples.len();
    let proportions = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    let wilson95 = counts.iter().map(|&c| wilson_interval(c, n, 1.96)).collect();
    Ok(ExitHistogram {
        labels: regions.iter().map(|r| r.label.clone()).collect(),
        counts,
        leftover,
        censored,
        n_paths: n,
        proportions,
        wilson95,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_used: usize,
    pub n_censored: usize,
}

/// Sample mean and standard error of `F(exit point)` over uncensored samples.
pub fn estimate_observable(samples: &[ExitSample], observable: &dyn Fn(&[f64]) -> f64) -> Result<ObservableEstimate> {
    let used: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| observable(&s.exit_point))
        .collect();
    let n = used.len();
    if n == 0 {
        return Err(SdeError::AllCensored);
    }
    let mean = used.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        used.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(ObservableEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n_used: n,
        n_censored: samples.len() - n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub h: f64,
    pub p: f64,
    /// Standard error of `p`; zero means exact.
    pub sigma: f64,
    /// Sample count behind `p`, used to bound a zero estimate.
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `ln p` against `1/h`.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub reduced_chi2: f64,
    /// A zero estimate was replaced by `1/n`.
    pub zero_count_flagged: bool,
}

/// Weighted least squares of `ln p` against `1/h`. The slope error is
/// inflated by the reduced chi-square when the scatter exceeds the error bars.
pub fn decay_rate_fit(points: &[DecayPoint]) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(SdeError::TooFewPoints(points.len()));
    }
    let mut flagged = false;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for pt in points {
        if !(pt.h > 0.0) {
            return Err(SdeError::InvalidConfig("h must be positive".into()));
        }
        let (p, sigma) = if pt.p > 0.0 {
            (pt.p, pt.sigma)
        } else {
            flagged = true;
            let p0 = 1.0 / pt.n.max(1) as f64;
            (p0, p0)
        };
        xs.push(1.0 / pt.h);
        ys.push(p.ln());
        ws.push(if sigma > 0.0 { (p / sigma).powi(2) } else { 0.0 });
    }
    let weighted = ws.iter().all(|w| *w > 0.0);
    if !weighted {
        ws.iter_mut().for_each(|w| *w = 1.0);
    }
    let sw: f64 = ws.iter().sum();
    let sx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x).sum();
    let sy: f64 = ws.iter().zip(&ys).map(|(w, y)| w * y).sum();
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 0.0) {
        return Err(SdeError::InvalidConfig("temperatures must differ".into()));
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    let dof = (points.len() - 2) as f64;
    let chi2: f64 = ws
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
        .sum();
    let reduced_chi2 = chi2 / dof;
    let var = if weighted {
        sw / det * reduced_chi2.max(1.0)
    } else {
        sw / det * reduced_chi2
    };
    Ok(DecayFit {
        slope,
        stderr: var.sqrt(),
        intercept,
        reduced_chi2,
        zero_count_flagged: flagged,
    })
}
