//! Limiting exit-point law and the exact one-dimensional oracle.
//!
//! The weight of a support point `z` is proportional to
//! `d_n f(z) / sqrt(det Hess f|boundary(z))`, normalised over the support.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{distance, DomainGeometry, GridDiscretization, PotentialField};
use crate::morse::{
    flow, Assumption, CriticalKind, FlowOptions, FlowTerminal, LandscapeReport, MorseError, SaddleOutcome, Well,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExitLawError {
    #[error("no limiting law applies: {}", reasons.join("; "))]
    RegimeUnsupported { reasons: Vec<String> },
    #[error("support point {point:?} has d_n f = {normal_derivative} and det = {det}")]
    InvalidSupport {
        point: Vec<f64>,
        normal_derivative: f64,
        det: f64,
    },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("need a < x < b and h > 0, got a = {a}, x = {x}, b = {b}, h = {h}")]
    InvalidArguments { a: f64, x: f64, b: f64, h: f64 },
    #[error(transparent)]
    Morse(#[from] MorseError),
}

pub type Result<T> = std::result::Result<T, ExitLawError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Start in the deepest well under A0-A3.
    DeepestWell,
    /// Start in a well whose boundary carries no critical point.
    SingleWell,
    /// Start in the lowest well of a cluster of wells sharing one level.
    WellCluster,
    /// The gradient flow from the start leaves the domain.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remainder {
    /// `O(h)`
    Linear,
    /// `O(h^{1/4})`
    QuarterPower,
    /// The exit point is asymptotically deterministic.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub point: Vec<f64>,
    pub value: f64,
    pub normal_derivative: f64,
    pub tangential_hessian_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitLaw {
    pub support: Vec<SupportPoint>,
    pub weights: Vec<f64>,
    pub regime: Regime,
    pub remainder: Remainder,
    /// Well the law refers to, when there is one.
    pub well: Option<usize>,
    /// Number of wells in the cluster (1 outside the cluster regime).
    pub cluster_size: usize,
    /// Boundary points that carry only exponentially small mass.
    pub suppressed: Vec<Vec<f64>>,
}

/// Normalised `d_n f / sqrt(det)` weights.
pub fn weights_from(support: &[SupportPoint]) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(support.len());
    for s in support {
        if !(s.normal_derivative > 0.0) || !(s.tangential_hessian_det > 0.0) {
            return Err(ExitLawError::InvalidSupport {
                point: s.point.clone(),
                normal_derivative: s.normal_derivative,
                det: s.tangential_hessian_det,
            });
        }
        raw.push(s.normal_derivative / s.tangential_hessian_det.sqrt());
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

fn support_for(report: &LandscapeReport, contacts: &[Vec<f64>]) -> Result<Vec<SupportPoint>> {
    let tol = report.tolerances.tol_merge;
    contacts
        .iter()
        .map(|c| {
            report
                .generalized_saddles
                .iter()
                .find(|g| distance(&g.point, c) <= tol)
                .map(|g| SupportPoint {
                    point: g.point.clone(),
                    value: g.value,
                    normal_derivative: g.normal_derivative,
                    tangential_hessian_det: g.tangential_hessian_det,
                })
                .ok_or_else(|| ExitLawError::InvalidSupport {
                    point: c.clone(),
                    normal_derivative: f64::NAN,
                    det: f64::NAN,
                })
        })
        .collect()
}

fn node_in(grid: &GridDiscretization, well: &Well, p: &[f64]) -> bool {
    grid.nearest_interior_node(p)
        .map(|n| well.node_set.binary_search(&n).is_ok())
        .unwrap_or(false)
}

/// Interior critical points sitting on the boundary of `well`.
fn critical_on_boundary(report: &LandscapeReport, grid: &GridDiscretization, well: &Well) -> Vec<Vec<f64>> {
    let tol = report.tolerances.level_tol;
    report
        .saddles
        .iter()
        .filter(|s| (s.point.value - well.level).abs() <= tol)
        .filter(|s| {
            matches!(s.outcome, SaddleOutcome::Indeterminate { .. })
                || s.landings.iter().any(|p| node_in(grid, well, p))
        })
        .map(|s| s.point.location.clone())
        .chain(
            report
                .critical_points
                .iter()
                .filter(|c| c.kind == CriticalKind::Interior && c.index >= 2)
                .filter(|c| (c.value - well.level).abs() <= tol)
                .map(|c| c.location.clone()),
        )
        .collect()
}

fn law(
    report: &LandscapeReport,
    well: &Well,
    regime: Regime,
    remainder: Remainder,
    cluster_size: usize,
    suppressed: Vec<Vec<f64>>,
) -> Result<ExitLaw> {
    let support = support_for(report, &well.boundary_contacts)?;
    let weights = weights_from(&support)?;
    Ok(ExitLaw {
        support,
        weights,
        regime,
        remainder,
        well: Some(well.id),
        cluster_size,
        suppressed,
    })
}

/// Limiting exit law for a start in `well`. Tries the deepest-well, single-well
/// and well-cluster settings in that order.
pub fn theoretical_weights(report: &LandscapeReport, grid: &GridDiscretization, well: &Well) -> Result<ExitLaw> {
    let mut reasons = Vec::new();
    let a0 = report.verdict(Assumption::A0);
    if !a0.passed() {
        return Err(ExitLawError::RegimeUnsupported {
            reasons: vec![format!("A0: {}", a0.reason)],
        });
    }

    if report.c_max == Some(well.id) {
        let failed: Vec<String> = [Assumption::A1, Assumption::A2, Assumption::A3]
            .iter()
            .filter(|a| !report.verdict(**a).passed())
            .map(|a| format!("{a:?}: {}", report.verdict(*a).reason))
            .collect();
        if failed.is_empty() {
            let remainder = if report.verdict(Assumption::A4).passed() {
                Remainder::Linear
            } else {
                Remainder::QuarterPower
            };
            return law(report, well, Regime::DeepestWell, remainder, 1, vec![]);
        }
        reasons.extend(failed);
    } else {
        reasons.push("the well is not the unique deepest one".into());
    }

    let on_boundary = critical_on_boundary(report, grid, well);
    if well.boundary_contacts.is_empty() {
        reasons.push("the well does not reach the boundary".into());
    } else if on_boundary.is_empty() {
        return law(report, well, Regime::SingleWell, Remainder::Linear, 1, vec![]);
    } else {
        reasons.push(format!("grad f vanishes on the well boundary at {:?}", on_boundary[0]));
    }

    match well_cluster(report, grid, well) {
        Ok((members, suppressed)) => {
            let remainder = if members == 1 {
                Remainder::Linear
            } else {
                Remainder::QuarterPower
            };
            law(report, well, Regime::WellCluster, remainder, members, suppressed)
        }
        Err(why) => {
            reasons.push(why);
            Err(ExitLawError::RegimeUnsupported { reasons })
        }
    }
}

/// Checks that `well` is the lowest member of a cluster of wells at one level
/// whose closures form a single component of the closed sublevel set.
fn well_cluster(
    report: &LandscapeReport,
    grid: &GridDiscretization,
    well: &Well,
) -> std::result::Result<(usize, Vec<Vec<f64>>), String> {
    let tol = report.tolerances.level_tol;
    let level = well.level;
    // wells joined to `well` through critical points at the common level
    let mut members = vec![well.id];
    let mut frontier = vec![well.id];
    while let Some(id) = frontier.pop() {
        let w = &report.wells[id];
        for s in &report.saddles {
            if (s.point.value - level).abs() > tol {
                continue;
            }
            if matches!(s.outcome, SaddleOutcome::Indeterminate { .. }) {
                return Err(format!(
                    "saddle at {:?} at the well level is unclassified",
                    s.point.location
                ));
            }
            if !s.landings.iter().any(|p| node_in(grid, w, p)) {
                continue;
            }
            for p in &s.landings {
                let Some(other) = report.wells.iter().find(|o| node_in(grid, o, p)) else {
                    return Err(format!("saddle at {:?} leads outside every well", s.point.location));
                };
                if (other.level - level).abs() > tol {
                    return Err(format!(
                        "well {} joined at {:?} has a different level",
                        other.id, s.point.location
                    ));
                }
                if !members.contains(&other.id) {
                    members.push(other.id);
                    frontier.push(other.id);
                }
            }
        }
    }
    if well.boundary_contacts.is_empty() {
        return Err("the lowest well of the cluster does not reach the boundary".into());
    }
    for &id in &members {
        if id != well.id && report.wells[id].min_value <= well.min_value + report.tolerances.tol_depth {
            return Err(format!(
                "well {id} of the cluster is not strictly higher than the start well"
            ));
        }
    }
    let suppressed = members
        .iter()
        .filter(|&&id| id != well.id)
        .flat_map(|&id| report.wells[id].boundary_contacts.clone())
        .collect();
    Ok((members.len(), suppressed))
}

/// Concentration set for a start point: the flow exit point when the flow
/// leaves the domain, otherwise the law of the well the flow settles in.
pub fn predicted_concentration_set(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    report: &LandscapeReport,
    start: &[f64],
) -> Result<ExitLaw> {
    let opts = FlowOptions::new(report.tolerances.tol_crit, grid.max_spacing());
    match flow(f, dom, start, &opts)?.terminal {
        FlowTerminal::Exited { exit_point, .. } => {
            let n = dom.normal_unchecked(&exit_point);
            let dn = crate::landscape::dot(&f.gradient(&exit_point), &n);
            Ok(ExitLaw {
                support: vec![SupportPoint {
                    value: f.value(&exit_point),
                    point: exit_point,
                    normal_derivative: dn,
                    tangential_hessian_det: f64::NAN,
                }],
                weights: vec![1.0],
                regime: Regime::Deterministic,
                remainder: Remainder::None,
                well: None,
                cluster_size: 0,
                suppressed: vec![],
            })
        }
        FlowTerminal::Converged { point, .. } => {
            let well = report.wells.iter().find(|w| node_in(grid, w, &point)).ok_or_else(|| {
                ExitLawError::RegimeUnsupported {
                    reasons: vec![format!("flow from the start settles at {point:?}, outside every well")],
                }
            })?;
            theoretical_weights(report, grid, well)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitProbabilities1d {
    pub left: f64,
    pub right: f64,
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(fun: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = fun(c);
    let mut k = GK_WEIGHTS[7] * fc;
    let mut g = G_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = r * GK_NODES[i];
        let s = fun(c - dx) + fun(c + dx);
        k += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G_WEIGHTS[i / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature over `[a, b]` split at
/// `breaks`.
pub fn integrate(fun: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> Result<f64> {
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut parts: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(fun, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(ExitLawError::Quadrature("non-finite integrand".into()));
        }
        if err <= rel_tol * total.abs() || err <= f64::MIN_POSITIVE {
            return Ok(total);
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(k, p)| (k, p.3))
            .unwrap_or((0, 0.0));
        let (lo, hi, _, _) = parts[k];
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(fun, lo, mid);
        let (v2, e2) = gk15(fun, mid, hi);
        parts[k] = (lo, mid, v1, e1);
        parts.push((mid, hi, v2, e2));
    }
    Err(ExitLawError::Quadrature("subdivision limit reached".into()))
}

fn critical_breaks(f: &PotentialField, a: f64, b: f64) -> (Vec<f64>, f64) {
    let n = 4000;
    let mut breaks = Vec::new();
    let mut fmax = f.value(&[a]).max(f.value(&[b]));
    let mut prev = f.gradient(&[a])[0];
    for i in 1..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        fmax = fmax.max(f.value(&[x]));
        let g = f.gradient(&[x])[0];
        if g == 0.0 || g.signum() != prev.signum() {
            // refine the sign change by bisection
            let (mut lo, mut hi) = (x - (b - a) / n as f64, x);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f.gradient(&[mid])[0].signum() == prev.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z = 0.5 * (lo + hi);
            fmax = fmax.max(f.value(&[z]));
            breaks.push(z);
        }
        prev = g;
    }
    (breaks, fmax)
}

/// Exit probabilities from `x` for the one-dimensional process on `(a, b)`,
/// from ratios of the scale function `s(y) = int e^{2 f / h}`. The integrand
/// is shifted by the maximum of `f` so it never overflows.
pub fn exact_exit_probability_1d(
    f: &PotentialField,
    (a, b): (f64, f64),
    x: f64,
    h: f64,
) -> Result<ExitProbabilities1d> {
    if !(a < x && x < b && h > 0.0) {
        return Err(ExitLawError::InvalidArguments { a, x, b, h });
    }
    let (mut breaks, fmax) = critical_breaks(f, a, b);
    breaks.push(x);
    let fun = |y: f64| (2.0 * (f.value(&[y]) - fmax) / h).exp();
    let left_part = integrate(&fun, a, x, &breaks, 1e-12)?;
    let right_part = integrate(&fun, x, b, &breaks, 1e-12)?;
    let total = left_part + right_part;
    Ok(ExitProbabilities1d {
        left: right_part / total,
        right: left_part / total,
    })
}

/// Mean exit time from `x` on `(a, b)` via the Green function of the
/// one-dimensional generator, by composite trapezoid on `n` cells.
pub fn exact_mean_exit_time_1d(f: &PotentialField, (a, b): (f64, f64), x: f64, h: f64, n: usize) -> f64 {
    let dx = (b - a) / n as f64;
    let ys: Vec<f64> = (0..=n).map(|i| a + i as f64 * dx).collect();
    let fv: Vec<f64> = ys.iter().map(|y| f.value(&[*y])).collect();
    let fmax = fv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fmin = fv.iter().copied().fold(f64::INFINITY, f64::min);
    // shifted scale function and speed density
    let scale: Vec<f64> = fv.iter().map(|v| (2.0 * (v - fmax) / h).exp()).collect();
    let speed: Vec<f64> = fv.iter().map(|v| (2.0 / h) * (-2.0 * (v - fmin) / h).exp()).collect();
    let mut s = vec![0.0; n + 1];
    for i in 1..=n {
        s[i] = s[i - 1] + 0.5 * (scale[i] + scale[i - 1]) * dx;
    }
    let sb = s[n];
    let sx = {
        let t = ((x - a) / dx).clamp(0.0, n as f64);
        let i = (t.floor() as usize).min(n - 1);
        s[i] + (t - i as f64) * (s[i + 1] - s[i])
    };
    let mut acc = 0.0;
    for i in 0..=n {
        let g = if ys[i] <= x {
            s[i] * (sb - sx) / sb
        } else {
            sx * (sb - s[i]) / sb
        };
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * g * speed[i] * dx;
    }
    acc * (2.0 * (fmax - fmin) / h).exp()
}
