//! Discretized Freidlin-Wentzell action `1/2 int |gamma' + grad f(gamma)|^2 dt`
//! and a fixed-time minimizer.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{DomainGeometry, PotentialField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("a path needs at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("total time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("knot {index} at {point:?} lies outside the closed domain")]
    OutsideDomain { index: usize, point: Vec<f64> },
    #[error("knot {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ActionError>;

/// Knots `gamma(t_0), ..., gamma(t_N)` at uniform times `t_k = k T / N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    knots: Vec<Vec<f64>>,
    total_time: f64,
}

impl DiscretePath {
    pub fn new(knots: Vec<Vec<f64>>, total_time: f64) -> Result<Self> {
        if knots.len() < 3 {
            return Err(ActionError::TooFewSegments(knots.len().saturating_sub(1)));
        }
        if !(total_time > 0.0) || !total_time.is_finite() {
            return Err(ActionError::NonPositiveTime(total_time));
        }
        let d = knots[0].len();
        for (index, k) in knots.iter().enumerate() {
            if k.len() != d {
                return Err(ActionError::DimensionMismatch {
                    index,
                    expected: d,
                    got: k.len(),
                });
            }
        }
        Ok(Self { knots, total_time })
    }

    /// Constant-speed segment from `x` to `y` with `n` steps.
    pub fn straight(x: &[f64], y: &[f64], total_time: f64, n: usize) -> Result<Self> {
        let knots = (0..=n)
            .map(|k| {
                let s = k as f64 / n.max(1) as f64;
                x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect();
        Self::new(knots, total_time)
    }

    /// Checks every knot against the closed domain.
    pub fn check_domain(&self, dom: &DomainGeometry) -> Result<()> {
        for (index, k) in self.knots.iter().enumerate() {
            if dom.level(k) > dom.boundary_eps() {
                return Err(ActionError::OutsideDomain {
                    index,
                    point: k.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.total_time / self.segments() as f64
    }

    /// The same knots traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut knots = self.knots.clone();
        knots.reverse();
        Self {
            knots,
            total_time: self.total_time,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.knots[0].len();
        let cols: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        writeln!(out, "t,{}", cols.join(","))?;
        let dt = self.dt();
        for (k, p) in self.knots.iter().enumerate() {
            let xs: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{:.17e},{}", k as f64 * dt, xs.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    pub value: f64,
    pub contributions: Vec<f64>,
}

fn midpoint_residual(f: &PotentialField, a: &[f64], b: &[f64], dt: f64, mid: &mut [f64], r: &mut [f64]) {
    for i in 0..a.len() {
        mid[i] = 0.5 * (a[i] + b[i]);
    }
    f.gradient_into(mid, r);
    for i in 0..a.len() {
        r[i] += (b[i] - a[i]) / dt;
    }
}

/// Midpoint rule: `1/2 sum dt |(gamma_{k+1} - gamma_k)/dt + grad f(midpoint)|^2`.
pub fn action(f: &PotentialField, path: &DiscretePath) -> ActionValue {
    let dt = path.dt();
    let d = path.knots[0].len();
    let mut mid = vec![0.0; d];
    let mut r = vec![0.0; d];
    let contributions: Vec<f64> = path
        .knots
        .windows(2)
        .map(|w| {
            midpoint_residual(f, &w[0], &w[1], dt, &mut mid, &mut r);
            0.5 * dt * r.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    ActionValue {
        value: contributions.iter().sum(),
        contributions,
    }
}

/// Gradient of the discrete action with respect to every knot; the endpoint
/// rows are left at zero.
fn action_gradient(f: &PotentialField, path: &DiscretePath) -> Vec<Vec<f64>> {
    let dt = path.dt();
    let n = path.segments();
    let d = path.knots[0].len();
    let mut grad = vec![vec![0.0; d]; n + 1];
    let mut mid = vec![0.0; d];
    let mut r = vec![0.0; d];
    for j in 0..n {
        let (a, b) = (&path.knots[j], &path.knots[j + 1]);
        midpoint_residual(f, a, b, dt, &mut mid, &mut r);
        let hess = f.hessian(&mid);
        for i in 0..d {
            let hr: f64 = (0..d).map(|l| hess[(i, l)] * r[l]).sum();
            if j + 1 < n {
                grad[j + 1][i] += r[i] + 0.5 * dt * hr;
            }
            if j > 0 {
                grad[j][i] += -r[i] + 0.5 * dt * hr;
            }
        }
    }
    grad
}

/// Solves `(1/dt) (-D^2) p = g` per coordinate over the interior knots with
/// zero ends, the H^1 gradient of the action.
fn sobolev_precondition(grad: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let m = grad.len() - 2;
    let d = grad[0].len();
    let mut out = vec![vec![0.0; d]; grad.len()];
    let diag = 2.0 / dt;
    let off = -1.0 / dt;
    for i in 0..d {
        // Thomas algorithm
        let mut c = vec![0.0; m];
        let mut y = vec![0.0; m];
        for k in 0..m {
            let denom = diag - if k > 0 { off * c[k - 1] } else { 0.0 };
            c[k] = off / denom;
            let prev = if k > 0 { off * y[k - 1] } else { 0.0 };
            y[k] = (grad[k + 1][i] - prev) / denom;
        }
        for k in (0..m).rev() {
            let next = if k + 1 < m { out[k + 2][i] } else { 0.0 };
            out[k + 1][i] = y[k] - c[k] * next;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizedAction {
    pub path: DiscretePath,
    pub action: ActionValue,
    pub iterations: usize,
    /// The line search failed to decrease the objective before convergence;
    /// `path` is the best found.
    pub line_search_stalled: bool,
    /// Objective after each accepted step, starting from the initial segment.
    pub history: Vec<f64>,
}

fn clip_to_domain(dom: &DomainGeometry, old: &[f64], cand: &mut [f64]) {
    if dom.level(cand) <= dom.boundary_eps() {
        return;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let at = |s: f64| -> Vec<f64> { old.iter().zip(cand.iter()).map(|(a, b)| a + s * (b - a)).collect() };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if dom.level(&at(mid)) <= dom.boundary_eps() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = at(lo);
    cand.copy_from_slice(&p);
}

/// Minimizes the discrete action over interior knots with `x`, `y` and `T`
/// fixed, starting from the straight segment. Steps follow the H^1 gradient
/// with Armijo backtracking, so accepted objectives never increase.
pub fn minimize_action(
    f: &PotentialField,
    dom: Option<&DomainGeometry>,
    x: &[f64],
    y: &[f64],
    total_time: f64,
    n: usize,
    iterations: usize,
) -> Result<MinimizedAction> {
    let mut path = DiscretePath::straight(x, y, total_time, n)?;
    if let Some(dom) = dom {
        path.check_domain(dom)?;
    }
    let dt = path.dt();
    let mut current = action(f, &path);
    let mut history = vec![current.value];
    let mut step: f64 = 1.0;
    let mut stalled = false;
    let mut done = 0;
    for it in 0..iterations {
        done = it + 1;
        let grad = action_gradient(f, &path);
        let dir = sobolev_precondition(&grad, dt);
        let slope: f64 = grad
            .iter()
            .zip(&dir)
            .map(|(g, p)| g.iter().zip(p).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        if slope <= 1e-14 * current.value.max(1e-300) || slope <= 1e-30 {
            break;
        }
        let mut accepted = None;
        let mut trial_step = (2.0 * step).min(1e6);
        for _ in 0..60 {
            let mut knots = path.knots.clone();
            for k in 1..n {
                let old = path.knots[k].clone();
                for i in 0..knots[k].len() {
                    knots[k][i] -= trial_step * dir[k][i];
                }
                if let Some(dom) = dom {
                    clip_to_domain(dom, &old, &mut knots[k]);
                }
            }
            let trial = DiscretePath { knots, total_time };
            let value = action(f, &trial);
            if value.value <= current.value - 1e-4 * trial_step * slope {
                accepted = Some((trial, value));
                break;
            }
            trial_step *= 0.5;
        }
        match accepted {
            Some((p, v)) => {
                let gain = current.value - v.value;
                path = p;
                current = v;
                step = trial_step;
                history.push(current.value);
                if gain <= 1e-13 * current.value.max(1e-300) {
                    break;
                }
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    Ok(MinimizedAction {
        path,
        action: current,
        iterations: done,
        line_search_stalled: stalled,
        history,
    })
}

/// Gradient-descent trajectory from `x0` over `[0, T]`, sampled at `n + 1`
/// uniform times. Each interval is integrated with `substeps` RK4 steps.
pub fn gradient_flow_path(
    f: &PotentialField,
    x0: &[f64],
    total_time: f64,
    n: usize,
    substeps: usize,
) -> Result<DiscretePath> {
    let d = x0.len();
    let dt = total_time / n.max(1) as f64 / substeps.max(1) as f64;
    let mut x = x0.to_vec();
    let mut knots = vec![x.clone()];
    let drift = |p: &[f64]| -> Vec<f64> { f.gradient(p).into_iter().map(|g| -g).collect() };
    let axpy = |p: &[f64], k: &[f64], s: f64| -> Vec<f64> { p.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for _ in 0..n {
        for _ in 0..substeps.max(1) {
            let k1 = drift(&x);
            let k2 = drift(&axpy(&x, &k1, 0.5 * dt));
            let k3 = drift(&axpy(&x, &k2, 0.5 * dt));
            let k4 = drift(&axpy(&x, &k3, dt));
            for i in 0..d {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        knots.push(x.clone());
    }
    DiscretePath::new(knots, total_time)
}
