//! Grid solvers for the generator `L = -(h/2) Laplacian + grad f . grad` with
//! Dirichlet conditions: the exit-law harmonic function and the principal
//! eigenpair behind the quasi-stationary distribution.
//!
//! The operator is assembled in divergence form as a weighted graph
//! Laplacian, `W L = A`, with edge conductances
//! `c_uv = (h/2) vol / spacing^2 * exp(-(f_u + f_v - 2 f_min)/h)` and node
//! weights `w_u = vol * exp(-2 (f_u - f_min)/h)`. All exponentials are shifted
//! by `f_min` so the largest weight is of order one.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{GridDiscretization, NodeTag, PotentialField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("iterative solver did not reach tolerance after {iterations} iterations (residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("eigen-iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("node set is empty")]
    EmptySet,
    #[error("boundary data has {got} entries, expected {expected}")]
    BoundaryDataLength { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, PdeError>;

/// Linear solver for the Dirichlet-eliminated system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded elimination that only ever adds positive quantities, so the
    /// exponentially disparate conductances lose no relative accuracy.
    #[default]
    Elimination,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg { rel_tol: f64, max_iter: usize },
}

#[derive(Clone, Debug)]
pub struct WeightedOperator {
    grid: GridDiscretization,
    h: f64,
    f_min: f64,
    node_f: Vec<f64>,
    /// Grid node of each unknown, in increasing node order.
    unknowns: Vec<usize>,
    /// Unknown index of each grid node.
    row_of: Vec<Option<usize>>,
    /// `(u, v, c_uv)` with `u < v`, over every edge touching an interior node.
    edges: Vec<(usize, usize, f64)>,
    /// Shifted node weights of the unknowns.
    weights: Vec<f64>,
    factor: Option<BandFactor>,
}

impl WeightedOperator {
    pub fn assemble(f: &PotentialField, grid: &GridDiscretization, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(PdeError::InvalidArgument(format!("h must be positive, got {h}")));
        }
        let node_f = grid.node_values(f);
        let unknowns = grid.interior_nodes();
        if unknowns.is_empty() {
            return Err(PdeError::EmptySet);
        }
        let f_min = unknowns
            .iter()
            .chain(grid.boundary_nodes().iter())
            .map(|&i| node_f[i])
            .fold(f64::INFINITY, f64::min);
        let mut row_of = vec![None; grid.len()];
        for (r, &i) in unknowns.iter().enumerate() {
            row_of[i] = Some(r);
        }
        let vol = grid.cell_volume();
        let spacing = grid.spacing().to_vec();
        let shape = grid.shape().to_vec();
        let edges: Vec<(usize, usize, f64)> = (0..grid.len())
            .into_par_iter()
            .with_min_len(1024)
            .flat_map_iter(|u| {
                let mut local = Vec::new();
                if grid.tag(u) == NodeTag::Exterior {
                    return local.into_iter();
                }
                let idx = grid.multi_index(u);
                let mut stride = 1;
                for k in 0..shape.len() {
                    if idx[k] + 1 < shape[k] {
                        let v = u + stride;
                        let touches = grid.tag(u) == NodeTag::Interior || grid.tag(v) == NodeTag::Interior;
                        if touches && grid.tag(v) != NodeTag::Exterior {
                            let c = 0.5 * h * vol / (spacing[k] * spacing[k])
                                * (-(node_f[u] + node_f[v] - 2.0 * f_min) / h).exp();
                            local.push((u, v, c));
                        }
                    }
                    stride *= shape[k];
                }
                local.into_iter()
            })
            .collect();
        let weights = unknowns
            .iter()
            .map(|&i| vol * (-2.0 * (node_f[i] - f_min) / h).exp())
            .collect();
        Ok(Self {
            grid: grid.clone(),
            h,
            f_min,
            node_f,
            unknowns,
            row_of,
            edges,
            weights,
            factor: None,
        })
    }

    pub fn grid(&self) -> &GridDiscretization {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// The shift `f_min` applied to every exponent.
    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Shifted weights of the unknowns; the true weights are these times
    /// `exp(-2 f_min / h)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Entries of the Dirichlet-eliminated matrix `A` as `(row, col, value)`.
    pub fn dirichlet_entries(&self) -> Vec<(usize, usize, f64)> {
        let n = self.unknowns.len();
        let mut diag = vec![0.0; n];
        let mut out = Vec::new();
        for &(u, v, c) in &self.edges {
            match (self.row_of[u], self.row_of[v]) {
                (Some(a), Some(b)) => {
                    diag[a] += c;
                    diag[b] += c;
                    out.push((a, b, -c));
                    out.push((b, a, -c));
                }
                (Some(a), None) => diag[a] += c,
                (None, Some(b)) => diag[b] += c,
                (None, None) => {}
            }
        }
        out.extend(diag.into_iter().enumerate().map(|(r, d)| (r, r, d)));
        out
    }

    /// Entries of the assembly with no Dirichlet elimination, indexed by grid node.
    pub fn neumann_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut diag = vec![0.0; self.grid.len()];
        let mut out = Vec::with_capacity(3 * self.edges.len());
        for &(u, v, c) in &self.edges {
            diag[u] += c;
            diag[v] += c;
            out.push((u, v, -c));
            out.push((v, u, -c));
        }
        out.extend(
            diag.into_iter()
                .enumerate()
                .filter(|(_, d)| *d != 0.0)
                .map(|(i, d)| (i, i, d)),
        );
        out
    }

    /// Applies the Dirichlet-eliminated matrix to `x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for &(u, v, c) in &self.edges {
            match (self.row_of[u], self.row_of[v]) {
                (Some(a), Some(b)) => {
                    let flux = c * (x[a] - x[b]);
                    y[a] += flux;
                    y[b] -= flux;
                }
                (Some(a), None) => y[a] += c * x[a],
                (None, Some(b)) => y[b] += c * x[b],
                (None, None) => {}
            }
        }
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.unknowns.len()];
        for &(u, v, c) in &self.edges {
            if let Some(a) = self.row_of[u] {
                d[a] += c;
            }
            if let Some(b) = self.row_of[v] {
                d[b] += c;
            }
        }
        d
    }

    fn factor(&mut self) -> &BandFactor {
        if self.factor.is_none() {
            self.factor = Some(BandFactor::new(self));
        }
        self.factor.as_ref().unwrap()
    }

    /// Conductance-weighted boundary data `sum_B c_uB F_B` per unknown.
    fn boundary_load(&self, data: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.unknowns.len()];
        for &(u, v, c) in &self.edges {
            match (self.row_of[u], self.row_of[v]) {
                (Some(a), None) => b[a] += c * data[v],
                (None, Some(b_row)) => b[b_row] += c * data[u],
                _ => {}
            }
        }
        b
    }
}

/// Banded elimination of the Dirichlet system in graph form. Eliminating an
/// unknown redistributes its conductances among its remaining neighbours,
/// and every pivot is recomputed as a sum of positive conductances.
#[derive(Clone, Debug)]
struct BandFactor {
    n: usize,
    bw: usize,
    // upper[k * bw + (j - k - 1)] = conductance k -> j at elimination of k
    upper: Vec<f64>,
    pivot: Vec<f64>,
}

impl BandFactor {
    fn new(op: &WeightedOperator) -> Self {
        let n = op.unknowns.len();
        let mut bw = 1;
        let mut absorb = vec![0.0; n];
        for &(u, v, c) in &op.edges {
            match (op.row_of[u], op.row_of[v]) {
                (Some(a), Some(b)) => bw = bw.max(a.abs_diff(b)),
                (Some(a), None) => absorb[a] += c,
                (None, Some(b)) => absorb[b] += c,
                _ => {}
            }
        }
        let mut upper = vec![0.0; n * bw];
        for &(u, v, c) in &op.edges {
            if let (Some(a), Some(b)) = (op.row_of[u], op.row_of[v]) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                upper[lo * bw + (hi - lo - 1)] += c;
            }
        }
        let mut pivot = vec![0.0; n];
        for k in 0..n {
            let row_k = k * bw;
            let width = bw.min(n - k - 1);
            let d = absorb[k] + upper[row_k..row_k + width].iter().sum::<f64>();
            pivot[k] = d;
            if !(d > 0.0) {
                continue;
            }
            for p in 0..width {
                let c_ki = upper[row_k + p];
                if c_ki == 0.0 {
                    continue;
                }
                let i = k + 1 + p;
                let scale = c_ki / d;
                absorb[i] += scale * absorb[k];
                for q in (p + 1)..width {
                    let c_kj = upper[row_k + q];
                    if c_kj != 0.0 {
                        let j = k + 1 + q;
                        upper[i * bw + (j - i - 1)] += scale * c_kj;
                    }
                }
            }
        }
        Self { n, bw, upper, pivot }
    }

    /// Solves `A x = b` for `b >= 0` without subtractions.
    fn solve_nonnegative(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut b = rhs.to_vec();
        for k in 0..n {
            if b[k] == 0.0 || !(self.pivot[k] > 0.0) {
                continue;
            }
            let width = bw.min(n - k - 1);
            let bk = b[k] / self.pivot[k];
            for p in 0..width {
                let c = self.upper[k * bw + p];
                if c != 0.0 {
                    b[k + 1 + p] += c * bk;
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            if !(self.pivot[k] > 0.0) {
                continue;
            }
            let width = bw.min(n - k - 1);
            let mut acc = b[k];
            for p in 0..width {
                acc += self.upper[k * bw + p] * x[k + 1 + p];
            }
            x[k] = acc / self.pivot[k];
        }
        x
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        if rhs.iter().all(|v| *v >= 0.0) {
            return self.solve_nonnegative(rhs);
        }
        let pos: Vec<f64> = rhs.iter().map(|v| v.max(0.0)).collect();
        let neg: Vec<f64> = rhs.iter().map(|v| (-v).max(0.0)).collect();
        let a = self.solve_nonnegative(&pos);
        let b = self.solve_nonnegative(&neg);
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    }
}

fn pcg(op: &WeightedOperator, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = rhs.len();
    let diag = op.diagonal();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for it in 0..max_iter {
        let ap = op.apply(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok(x);
        }
        if !rnorm.is_finite() {
            return Err(PdeError::SolverDiverged {
                iterations: it + 1,
                residual: rnorm / bnorm,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(PdeError::SolverDiverged {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}

fn solve_with(op: &mut WeightedOperator, rhs: &[f64], solver: LinearSolver) -> Result<Vec<f64>> {
    match solver {
        LinearSolver::Elimination => Ok(op.factor().solve(rhs)),
        LinearSolver::Pcg { rel_tol, max_iter } => pcg(op, rhs, rel_tol, max_iter),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSolution {
    /// `v_h` at every grid node: the solution at interior nodes, the data at
    /// boundary nodes, NaN outside.
    pub values: Vec<f64>,
    /// Boundary data indexed by grid node (NaN away from boundary nodes).
    pub boundary_data: Vec<f64>,
    /// Largest row residual relative to the row's pivot times `max |F|`.
    pub residual: f64,
}

/// Boundary data sampled from `F` at every boundary node's anchor.
pub fn boundary_data(grid: &GridDiscretization, observable: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| match grid.tag(i) {
            NodeTag::Boundary => observable(&grid.anchor(i)),
            _ => f64::NAN,
        })
        .collect()
}

/// Solves `L v = 0` in the interior with `v = F` on boundary nodes.
pub fn solve_harmonic(op: &mut WeightedOperator, data: &[f64], solver: LinearSolver) -> Result<HarmonicSolution> {
    let len = op.grid.len();
    if data.len() != len {
        return Err(PdeError::BoundaryDataLength {
            expected: len,
            got: data.len(),
        });
    }
    let bdata: Vec<f64> = (0..len)
        .map(|i| {
            if op.grid.tag(i) == NodeTag::Boundary {
                data[i]
            } else {
                0.0
            }
        })
        .collect();
    if bdata.iter().any(|v| !v.is_finite()) {
        return Err(PdeError::InvalidArgument("boundary data must be finite".into()));
    }
    let rhs = op.boundary_load(&bdata);
    let x = solve_with(op, &rhs, solver)?;
    let scale = bdata.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let residual = row_residual(op, &x, &rhs) / scale;
    let mut values = vec![f64::NAN; len];
    let mut boundary = vec![f64::NAN; len];
    for i in 0..len {
        if op.grid.tag(i) == NodeTag::Boundary {
            values[i] = bdata[i];
            boundary[i] = bdata[i];
        }
    }
    for (r, &i) in op.unknowns.iter().enumerate() {
        values[i] = x[r];
    }
    Ok(HarmonicSolution {
        values,
        boundary_data: boundary,
        residual,
    })
}

fn row_residual(op: &WeightedOperator, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = op.apply(x);
    let diag = op.diagonal();
    (0..x.len())
        .map(|r| {
            if diag[r] > 0.0 {
                (ax[r] - rhs[r]).abs() / diag[r]
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// `max_{x,y in K} |v(x) - v(y)|` over the grid nodes `K`.
pub fn leveling_oscillation(v: &HarmonicSolution, nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(PdeError::EmptySet);
    }
    let (lo, hi) = nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        (lo.min(v.values[i]), hi.max(v.values[i]))
    });
    Ok(hi - lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Second Dirichlet eigenvalue, by deflated inverse iteration.
    pub lambda2: f64,
    /// Principal eigenvector at every grid node (zero off the interior),
    /// normalized in the shifted weights: `sum u^2 w_shifted = 1`.
    pub u: Vec<f64>,
    /// Quasi-stationary distribution per grid node, total mass 1.
    pub qsd: Vec<f64>,
    /// `ln Z_h` with `Z_h = sum u exp(-2 f/h) vol` for `u` normalized in the
    /// true weights.
    pub log_z: f64,
    /// `|| lambda A^{-1} W u - u ||_w`, the inverse-iteration residual.
    pub residual: f64,
    pub iterations: usize,
}

const EIGEN_MAX_ITER: usize = 10_000;
const EIGEN_TOL: f64 = 1e-8;

fn w_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(w, (a, b))| w * a * b).sum()
}

fn w_normalize(w: &[f64], x: &mut [f64]) {
    let n = w_dot(w, x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Principal Dirichlet eigenpair by inverse iteration from
/// `exp(-(f - f_min)/h)`, plus the second eigenvalue by deflation.
pub fn principal_eigenpair(op: &mut WeightedOperator, solver: LinearSolver) -> Result<Eigenpair> {
    let w = op.weights.clone();
    let mut u: Vec<f64> = op
        .unknowns
        .iter()
        .map(|&i| (-(op.node_f[i] - op.f_min) / op.h).exp())
        .collect();
    w_normalize(&w, &mut u);
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=EIGEN_MAX_ITER {
        let wu: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a * b).collect();
        let x = solve_with(op, &wu, solver)?;
        let inv = w_dot(&w, &u, &x);
        lambda = 1.0 / inv;
        let diff: Vec<f64> = x.iter().zip(&u).map(|(x, u)| lambda * x - u).collect();
        residual = w_dot(&w, &diff, &diff).sqrt();
        u = x;
        w_normalize(&w, &mut u);
        iterations = it;
        if residual < EIGEN_TOL {
            break;
        }
    }
    if !(residual < EIGEN_TOL) {
        return Err(PdeError::ConvergenceFailure { iterations, residual });
    }
    for v in u.iter_mut() {
        *v = v.max(0.0);
    }
    let lambda2 = second_eigenvalue(op, &u, solver)?;

    let mass: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let mut full_u = vec![0.0; op.grid.len()];
    let mut qsd = vec![0.0; op.grid.len()];
    for (r, &i) in op.unknowns.iter().enumerate() {
        full_u[i] = u[r];
        qsd[i] = u[r] * w[r] / mass;
    }
    // u_true = u * exp(f_min/h), w_true = w * exp(-2 f_min/h)
    let log_z = mass.ln() - op.f_min / op.h;
    Ok(Eigenpair {
        lambda,
        lambda2,
        u: full_u,
        qsd,
        log_z,
        residual,
        iterations,
    })
}

fn second_eigenvalue(op: &mut WeightedOperator, u1: &[f64], solver: LinearSolver) -> Result<f64> {
    let w = op.weights.clone();
    let deflate = |x: &mut Vec<f64>| {
        let c = w_dot(&w, u1, x);
        x.iter_mut().zip(u1).for_each(|(x, u)| *x -= c * u);
    };
    let pts: Vec<Vec<f64>> = op.unknowns.iter().map(|&i| op.grid.node_point(i)).collect();
    let d = op.grid.dim();
    let mut centre = vec![0.0; d];
    let total: f64 = w.iter().sum();
    for (p, wi) in pts.iter().zip(&w) {
        for k in 0..d {
            centre[k] += wi * p[k] / total;
        }
    }
    let mut x: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(r, p)| {
            let s: f64 = p.iter().zip(&centre).map(|(a, b)| a - b).sum();
            s * u1[r] + 1e-3 * ((r * 7919 % 101) as f64 / 101.0 - 0.5)
        })
        .collect();
    deflate(&mut x);
    w_normalize(&w, &mut x);
    let mut prev = f64::NAN;
    for _ in 0..EIGEN_MAX_ITER {
        let wx: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let mut y = solve_with(op, &wx, solver)?;
        deflate(&mut y);
        let lam = 1.0 / w_dot(&w, &x, &y);
        x = y;
        w_normalize(&w, &mut x);
        if (lam - prev).abs() <= 1e-12 * lam.abs() {
            return Ok(lam);
        }
        prev = lam;
    }
    Err(PdeError::ConvergenceFailure {
        iterations: EIGEN_MAX_ITER,
        residual: f64::NAN,
    })
}

/// `sum_nodes nu_h(node) v^(i)(node)` for each boundary data vector, the exit
/// law under the quasi-stationary start.
pub fn qsd_exit_law(
    op: &mut WeightedOperator,
    eig: &Eigenpair,
    data: &[Vec<f64>],
    solver: LinearSolver,
) -> Result<Vec<f64>> {
    data.iter()
        .map(|d| {
            let v = solve_harmonic(op, d, solver)?;
            Ok(op.unknowns.iter().map(|&i| eig.qsd[i] * v.values[i]).sum())
        })
        .collect()
}

/// Writes `x0, x1, ..., value` rows for every non-exterior node.
pub fn write_node_values_csv<W: Write>(grid: &GridDiscretization, values: &[f64], mut out: W) -> std::io::Result<()> {
    let coords: Vec<String> = (0..grid.dim()).map(|k| format!("x{k}")).collect();
    writeln!(out, "{},value", coords.join(","))?;
    for i in 0..grid.len() {
        if grid.tag(i) == NodeTag::Exterior {
            continue;
        }
        let p: Vec<String> = grid.anchor(i).iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{},{:.17e}", p.join(","), values[i])?;
    }
    Ok(())
}
