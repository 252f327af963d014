//! Landscape analysis on a lattice: critical points, barrier heights, wells,
//! separating saddles, boundary saddles and the A0-A4 verdicts.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landscape::{
    self, distance, dot, norm, tangential_hessian_unchecked, DomainGeometry, GridDiscretization, LandscapeError,
    NodeTag, PotentialField,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MorseError {
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error("seed value {value} is not below level {level}")]
    SeedAboveLevel { level: f64, value: f64 },
    #[error("flow did not terminate within {steps} steps")]
    MaxStepsExceeded { steps: usize },
    #[error("start point {0:?} is outside the domain")]
    StartOutsideDomain(Vec<f64>),
    #[error("grid has no interior node")]
    NoInteriorNode,
}

pub type Result<T> = std::result::Result<T, MorseError>;

/// Numerical tolerances of the analysis, derived from the grid and potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseTolerances {
    /// Gradient norm below which a point counts as critical.
    pub tol_crit: f64,
    /// Critical points closer than this are merged.
    pub tol_merge: f64,
    /// Eigenvalues below this magnitude are degenerate.
    pub tol_degenerate: f64,
    /// Grid error allowance on energy levels.
    pub level_tol: f64,
    /// Depth differences below this are ties.
    pub tol_depth: f64,
    /// Largest Hessian norm seen on the lattice.
    pub hessian_scale: f64,
    /// Range of f over the lattice.
    pub energy_scale: f64,
}

impl MorseTolerances {
    pub fn for_grid(f: &PotentialField, dom: &DomainGeometry, grid: &GridDiscretization) -> Self {
        let grad_scale = landscape::typical_gradient_scale(f, dom);
        let spacing = grid.max_spacing();
        let d = grid.dim() as f64;
        let mut hmax: f64 = 0.0;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..grid.len() {
            if grid.tag(i) == NodeTag::Exterior {
                continue;
            }
            let p = grid.anchor(i);
            let v = f.value(&p);
            lo = lo.min(v);
            hi = hi.max(v);
            if grid.tag(i) == NodeTag::Interior {
                hmax = hmax.max(f.hessian(&p).norm());
            }
        }
        let energy_scale = if hi > lo { hi - lo } else { 1.0 };
        let hessian_scale = if hmax > 0.0 { hmax } else { 1.0 };
        Self {
            tol_crit: 1e-6 * grad_scale,
            tol_merge: 0.5 * spacing,
            tol_degenerate: 1e-8 * hessian_scale,
            level_tol: 0.5 * hessian_scale * spacing * spacing * d,
            tol_depth: 1e-9 * energy_scale,
            hessian_scale,
            energy_scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Interior,
    BoundaryTangential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub value: f64,
    /// Number of negative (tangential) Hessian eigenvalues.
    pub index: usize,
    pub kind: CriticalKind,
    pub eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub id: usize,
    pub member_minima: Vec<CriticalPoint>,
    /// Barrier height shared by the member minima.
    pub level: f64,
    #[serde(skip)]
    pub node_set: Vec<usize>,
    pub node_count: usize,
    pub boundary_contacts: Vec<Vec<f64>>,
    pub depth: f64,
    pub min_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatingSaddle {
    pub point: CriticalPoint,
    pub level: f64,
    /// Canonical labels (smallest node index) of the two components.
    pub separated_pair: (usize, usize),
    pub landing_points: (Vec<f64>, Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleClassification {
    pub point: CriticalPoint,
    pub epsilon_level: f64,
    pub outcome: SaddleOutcome,
    /// Where the two descents from the saddle ended.
    pub landings: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SaddleOutcome {
    Separating { pair: (usize, usize) },
    NonSeparating { component: usize },
    Indeterminate { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSaddle {
    pub point: Vec<f64>,
    pub value: f64,
    pub normal_derivative: f64,
    pub tangential_hessian_det: f64,
    pub is_global_boundary_min: bool,
    pub on_c_max: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Assumption {
    A0,
    A1,
    A2,
    A3,
    A4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    /// Pass on every sampled point; a global guarantee is not available.
    PassSampled,
    Fail,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub reason: String,
}

impl Verdict {
    fn new(status: VerdictStatus, reason: impl Into<String>) -> Self {
        Self {
            status,
            reason: reason.into(),
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self.status, VerdictStatus::Pass | VerdictStatus::PassSampled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub dim: usize,
    pub tolerances: MorseTolerances,
    pub critical_points: Vec<CriticalPoint>,
    pub boundary_critical_points: Vec<CriticalPoint>,
    pub wells: Vec<Well>,
    pub c_max: Option<usize>,
    pub saddles: Vec<SaddleClassification>,
    pub separating_saddles: Vec<SeparatingSaddle>,
    pub generalized_saddles: Vec<GeneralizedSaddle>,
    pub min_boundary_value: f64,
    pub min_boundary_gradient: f64,
    pub assumption_verdicts: BTreeMap<Assumption, Verdict>,
}

impl LandscapeReport {
    pub fn verdict(&self, a: Assumption) -> &Verdict {
        &self.assumption_verdicts[&a]
    }

    pub fn c_max_well(&self) -> Option<&Well> {
        self.c_max.map(|i| &self.wells[i])
    }

    pub fn interior_minima(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.critical_points.iter().filter(|c| c.index == 0 && !c.degenerate)
    }
}

fn canonical_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn classify(
    location: Vec<f64>,
    value: f64,
    hess: &DMatrix<f64>,
    kind: CriticalKind,
    tol_degenerate: f64,
) -> CriticalPoint {
    let mut eigenvalues: Vec<f64> = if hess.nrows() == 0 {
        Vec::new()
    } else {
        SymmetricEigen::new(hess.clone()).eigenvalues.iter().copied().collect()
    };
    eigenvalues.sort_by(f64::total_cmp);
    let degenerate = eigenvalues.iter().any(|e| e.abs() < tol_degenerate);
    let index = eigenvalues.iter().filter(|e| **e < 0.0).count();
    CriticalPoint {
        location,
        value,
        index,
        kind,
        eigenvalues,
        degenerate,
    }
}

fn newton_interior(
    f: &PotentialField,
    dom: &DomainGeometry,
    start: &[f64],
    tol_crit: f64,
    max_step: f64,
) -> Option<Vec<f64>> {
    let mut x = start.to_vec();
    for _ in 0..100 {
        let g = f.gradient(&x);
        if norm(&g) < tol_crit {
            return Some(x);
        }
        let h = f.hessian(&x);
        let svd = h.svd(true, true);
        let rhs = DVector::from_column_slice(&g);
        let step = svd.solve(&rhs, 1e-14 * svd.singular_values.max()).ok()?;
        let len = step.norm();
        let scale = if len > max_step { max_step / len } else { 1.0 };
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= scale * si;
        }
        if !dom.contains(&x) {
            return None;
        }
    }
    let g = f.gradient(&x);
    (norm(&g) < tol_crit).then_some(x)
}

/// Interior critical points, seeded at lattice local minima of `|grad f|`.
pub fn find_critical_points(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    tol: &MorseTolerances,
) -> Vec<CriticalPoint> {
    let gnorm: Vec<f64> = (0..grid.len())
        .map(|i| match grid.tag(i) {
            NodeTag::Exterior => f64::INFINITY,
            _ => norm(&f.gradient(&grid.node_point(i))),
        })
        .collect();
    let seeds: Vec<usize> = grid
        .interior_nodes()
        .into_iter()
        .filter(|&i| grid.neighbors(i).all(|j| gnorm[i] <= gnorm[j]))
        .collect();
    let max_step = 2.0 * grid.max_spacing();
    let mut found: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|&i| newton_interior(f, dom, &grid.node_point(i), tol.tol_crit, max_step))
        .collect();
    found.sort_by(|a, b| canonical_cmp(a, b));
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in found {
        if unique.iter().all(|q| distance(q, &p) >= tol.tol_merge) {
            unique.push(p);
        }
    }
    unique
        .into_iter()
        .map(|p| {
            let h = f.hessian(&p);
            let v = f.value(&p);
            classify(p, v, &h, CriticalKind::Interior, tol.tol_degenerate)
        })
        .collect()
}

fn tangent_2d(dom: &DomainGeometry, z: &[f64]) -> [f64; 2] {
    let n = dom.normal_unchecked(z);
    [-n[1], n[0]]
}

fn newton_boundary_2d(
    f: &PotentialField,
    dom: &DomainGeometry,
    start: &[f64],
    tol_crit: f64,
    max_step: f64,
) -> Option<Vec<f64>> {
    let mut z = dom.project_to_boundary(start);
    for _ in 0..100 {
        let u = tangent_2d(dom, &z);
        let t = dot(&f.gradient(&z), &u);
        if t.abs() < tol_crit {
            return Some(z);
        }
        let ht = tangential_hessian_unchecked(f, dom, &z)[(0, 0)];
        let mut s = if ht.abs() > 1e-300 { -t / ht } else { -t };
        if s.abs() > max_step {
            s = s.signum() * max_step;
        }
        let moved = [z[0] + s * u[0], z[1] + s * u[1]];
        z = dom.project_to_boundary(&moved);
    }
    let u = tangent_2d(dom, &z);
    (dot(&f.gradient(&z), &u).abs() < tol_crit).then_some(z)
}

/// Critical points of `f` restricted to the boundary. In 1D these are the two
/// endpoints; in 2D they are located by sign changes of the tangential
/// derivative along a boundary scan and refined by Newton on the boundary.
pub fn find_boundary_critical_points(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    tol: &MorseTolerances,
) -> Vec<CriticalPoint> {
    if let Some((a, b)) = dom.as_interval() {
        return [a, b]
            .iter()
            .map(|&z| CriticalPoint {
                location: vec![z],
                value: f.value(&[z]),
                index: 0,
                kind: CriticalKind::BoundaryTangential,
                eigenvalues: Vec::new(),
                degenerate: false,
            })
            .collect();
    }
    if dom.dim() != 2 {
        return Vec::new();
    }
    let (lo, hi) = dom.bounding_box();
    let perimeter = 2.0 * ((hi[0] - lo[0]) + (hi[1] - lo[1]));
    let n = ((8.0 * perimeter / grid.max_spacing()).ceil() as usize).clamp(720, 20000);
    let mesh = dom.boundary_mesh(n);
    let deriv: Vec<f64> = mesh.iter().map(|z| dot(&f.gradient(z), &tangent_2d(dom, z))).collect();
    let mut seeds = Vec::new();
    for k in 0..n {
        let k1 = (k + 1) % n;
        if deriv[k] == 0.0 || deriv[k].signum() != deriv[k1].signum() {
            let pick = if deriv[k].abs() <= deriv[k1].abs() { k } else { k1 };
            seeds.push(mesh[pick].clone());
        }
    }
    let max_step = grid.max_spacing();
    let mut found: Vec<Vec<f64>> = seeds
        .par_iter()
        .filter_map(|s| newton_boundary_2d(f, dom, s, tol.tol_crit, max_step))
        .collect();
    found.sort_by(|a, b| canonical_cmp(a, b));
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for p in found {
        if unique.iter().all(|q| distance(q, &p) >= tol.tol_merge) {
            unique.push(p);
        }
    }
    unique
        .into_iter()
        .map(|z| {
            let h = tangential_hessian_unchecked(f, dom, &z);
            let v = f.value(&z);
            classify(z, v, &h, CriticalKind::BoundaryTangential, tol.tol_degenerate)
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Minimax path value from `source` to the boundary layer: edge cost is
/// `max(f(u), f(v))`, a path costs its largest edge.
pub fn barrier_height_from_node(grid: &GridDiscretization, values: &[f64], source: usize) -> f64 {
    let mut best = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    best[source] = values[source];
    heap.push(Reverse((Key(values[source]), source)));
    while let Some(Reverse((Key(c), u))) = heap.pop() {
        if c > best[u] {
            continue;
        }
        if grid.tag(u) == NodeTag::Boundary {
            return c;
        }
        for v in grid.neighbors(u) {
            if grid.tag(v) == NodeTag::Exterior {
                continue;
            }
            let nc = c.max(values[v]);
            if nc < best[v] {
                best[v] = nc;
                heap.push(Reverse((Key(nc), v)));
            }
        }
    }
    f64::INFINITY
}

/// `H_f` at the interior node nearest `x`.
pub fn barrier_height(f: &PotentialField, grid: &GridDiscretization, x: &[f64]) -> Result<f64> {
    let values = grid.node_values(f);
    let node = grid.nearest_interior_node(x).ok_or(MorseError::NoInteriorNode)?;
    Ok(barrier_height_from_node(grid, &values, node))
}

/// Minimax value to the boundary layer for every node at once.
pub fn barrier_field(grid: &GridDiscretization, values: &[f64]) -> Vec<f64> {
    let mut best = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    for b in grid.boundary_nodes() {
        best[b] = values[b];
        heap.push(Reverse((Key(values[b]), b)));
    }
    while let Some(Reverse((Key(c), u))) = heap.pop() {
        if c > best[u] {
            continue;
        }
        for v in grid.neighbors(u) {
            if grid.tag(v) != NodeTag::Interior {
                continue;
            }
            let nc = c.max(values[v]);
            if nc < best[v] {
                best[v] = nc;
                heap.push(Reverse((Key(nc), v)));
            }
        }
    }
    best
}

fn flood(grid: &GridDiscretization, values: &[f64], level: f64, start: usize, blocked: &[bool]) -> Vec<usize> {
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        out.push(u);
        for v in grid.neighbors(u) {
            if !seen[v]
                && grid.tag(v) == NodeTag::Interior
                && values[v] < level
                && !blocked.get(v).copied().unwrap_or(false)
            {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Connected component of `{f < level}` containing the interior node nearest `seed`.
pub fn sublevel_component(grid: &GridDiscretization, values: &[f64], level: f64, seed: &[f64]) -> Result<Vec<usize>> {
    let node = grid.nearest_interior_node(seed).ok_or(MorseError::NoInteriorNode)?;
    if !(values[node] < level) {
        return Err(MorseError::SeedAboveLevel {
            level,
            value: values[node],
        });
    }
    Ok(flood(grid, values, level, node, &[]))
}

/// Labels every interior node with `f < level` by the smallest node index of
/// its component.
pub fn component_labels(grid: &GridDiscretization, values: &[f64], level: f64) -> Vec<Option<usize>> {
    let mut label = vec![None; grid.len()];
    for i in 0..grid.len() {
        if label[i].is_some() || grid.tag(i) != NodeTag::Interior || !(values[i] < level) {
            continue;
        }
        for j in flood(grid, values, level, i, &[]) {
            label[j] = Some(i);
        }
    }
    label
}

fn local_lipschitz(f: &PotentialField, grid: &GridDiscretization, z: &[f64]) -> f64 {
    let r = 2.0 * grid.max_spacing() * (grid.dim() as f64).sqrt();
    let mut lip: f64 = norm(&f.gradient(z));
    for i in grid.interior_nodes() {
        let p = grid.node_point(i);
        if distance(&p, z) <= r {
            lip = lip.max(norm(&f.gradient(&p)));
        }
    }
    lip
}

/// Saddle-separation threshold at `z`.
pub fn epsilon_level(f: &PotentialField, grid: &GridDiscretization, z: &[f64]) -> f64 {
    (4.0 * local_lipschitz(f, grid, z) * grid.max_spacing()).max(1e-9)
}

/// Builds the wells of all non-degenerate interior minima.
pub fn build_wells(
    f: &PotentialField,
    grid: &GridDiscretization,
    critical_points: &[CriticalPoint],
    boundary_critical_points: &[CriticalPoint],
    tol: &MorseTolerances,
) -> Result<Vec<Well>> {
    let values = grid.node_values(f);
    let spacing = grid.max_spacing();
    let contact_radius = 2.0 * spacing * (grid.dim() as f64).sqrt();
    let saddles: Vec<&CriticalPoint> = critical_points
        .iter()
        .filter(|c| c.index == 1 && !c.degenerate && c.kind == CriticalKind::Interior)
        .collect();
    let mut wells: Vec<Well> = Vec::new();
    for m in critical_points
        .iter()
        .filter(|c| c.index == 0 && !c.degenerate && c.kind == CriticalKind::Interior)
    {
        let node = grid
            .nearest_interior_node(&m.location)
            .ok_or(MorseError::NoInteriorNode)?;
        let level = barrier_height_from_node(grid, &values, node);
        // A saddle sitting exactly at the well level is not part of the well.
        let mut flood_level = level;
        for s in &saddles {
            if (s.value - level).abs() <= tol.level_tol {
                flood_level = flood_level.min(s.value - epsilon_level(f, grid, &s.location));
            }
        }
        if !(values[node] < flood_level) {
            flood_level = level;
        }
        let nodes = flood(grid, &values, flood_level, node, &[]);
        if let Some(w) = wells.iter_mut().find(|w| w.node_set == nodes) {
            w.member_minima.push(m.clone());
            w.min_value = w.min_value.min(m.value);
            w.depth = w.level - w.min_value;
            continue;
        }
        let contacts: Vec<Vec<f64>> = boundary_critical_points
            .iter()
            .filter(|b| b.index == 0 && (b.value - level).abs() <= tol.level_tol)
            .filter(|b| {
                nodes
                    .iter()
                    .any(|&i| distance(&grid.node_point(i), &b.location) <= contact_radius)
            })
            .map(|b| b.location.clone())
            .collect();
        wells.push(Well {
            id: 0,
            member_minima: vec![m.clone()],
            level,
            node_count: nodes.len(),
            node_set: nodes,
            boundary_contacts: contacts,
            depth: level - m.value,
            min_value: m.value,
        });
    }
    wells.sort_by(|a, b| canonical_cmp(&a.member_minima[0].location, &b.member_minima[0].location));
    for (i, w) in wells.iter_mut().enumerate() {
        w.id = i;
    }
    Ok(wells)
}

/// Index of the unique deepest well, or `None` on a tie within `tol_depth`.
pub fn deepest_well(wells: &[Well], tol_depth: f64) -> Option<usize> {
    let best = wells.iter().map(|w| w.depth).fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = wells
        .iter()
        .enumerate()
        .filter(|(_, w)| w.depth >= best - tol_depth)
        .map(|(i, _)| i)
        .collect();
    (top.len() == 1).then(|| top[0])
}

/// Classifies every non-degenerate interior index-1 point.
pub fn classify_saddles(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    critical_points: &[CriticalPoint],
    tol: &MorseTolerances,
) -> Vec<SaddleClassification> {
    let values = grid.node_values(f);
    let delta = 2.0 * grid.max_spacing();
    let opts = FlowOptions::new(tol.tol_crit, grid.max_spacing());
    critical_points
        .iter()
        .filter(|c| c.index == 1 && !c.degenerate && c.kind == CriticalKind::Interior)
        .map(|z| {
            let eps = epsilon_level(f, grid, &z.location);
            let level = z.value - eps;
            let h = f.hessian(&z.location);
            let eig = SymmetricEigen::new(h);
            let k = (0..eig.eigenvalues.len())
                .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
                .unwrap_or(0);
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let labels = component_labels(grid, &values, level);
            let mut landed = Vec::new();
            let mut problem = None;
            for sign in [1.0, -1.0] {
                let seed: Vec<f64> = z.location.iter().zip(&v).map(|(a, b)| a + sign * delta * b).collect();
                if !dom.contains(&seed) {
                    problem = Some("descent seed lies outside the domain".to_string());
                    break;
                }
                match flow(f, dom, &seed, &opts) {
                    Ok(FlowResult {
                        terminal: FlowTerminal::Converged { point, .. },
                        ..
                    }) => {
                        let node = grid.nearest_interior_node(&point);
                        match node.and_then(|n| labels[n].map(|l| (l, point.clone()))) {
                            Some(hit) => landed.push(hit),
                            None => {
                                problem = Some("descent ended above the separation level".into());
                                break;
                            }
                        }
                    }
                    Ok(FlowResult {
                        terminal: FlowTerminal::Exited { .. },
                        ..
                    }) => {
                        problem = Some("descent seed escaped the domain".to_string());
                        break;
                    }
                    Err(e) => {
                        problem = Some(format!("descent failed: {e}"));
                        break;
                    }
                }
            }
            let outcome = match problem {
                Some(reason) => SaddleOutcome::Indeterminate { reason },
                None => {
                    let (a, b) = (landed[0].0, landed[1].0);
                    if a != b {
                        SaddleOutcome::Separating {
                            pair: (a.min(b), a.max(b)),
                        }
                    } else {
                        SaddleOutcome::NonSeparating { component: a }
                    }
                }
            };
            SaddleClassification {
                point: z.clone(),
                epsilon_level: eps,
                outcome,
                landings: landed.into_iter().map(|(_, p)| p).collect(),
            }
        })
        .collect()
}

/// Separating saddles with the points their descents landed on.
pub fn find_separating_saddles(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    critical_points: &[CriticalPoint],
    tol: &MorseTolerances,
) -> Vec<SeparatingSaddle> {
    separating_from(&classify_saddles(f, dom, grid, critical_points, tol))
}

fn separating_from(classes: &[SaddleClassification]) -> Vec<SeparatingSaddle> {
    classes
        .iter()
        .filter_map(|c| match c.outcome {
            SaddleOutcome::Separating { pair } => Some(SeparatingSaddle {
                point: c.point.clone(),
                level: c.point.value,
                separated_pair: pair,
                landing_points: (c.landings[0].clone(), c.landings[1].clone()),
            }),
            _ => None,
        })
        .collect()
}

/// Boundary local minima of `f` with positive outward normal derivative,
/// contacts of the deepest well first, then other global minimizers, then the
/// remaining ones.
pub fn generalized_boundary_saddles(
    f: &PotentialField,
    dom: &DomainGeometry,
    boundary_critical_points: &[CriticalPoint],
    c_max: Option<&Well>,
    min_boundary_value: f64,
    tol: &MorseTolerances,
) -> Vec<GeneralizedSaddle> {
    let mut out: Vec<GeneralizedSaddle> = boundary_critical_points
        .iter()
        .filter(|b| b.index == 0 && !b.degenerate)
        .filter_map(|b| {
            let n = dom.normal_unchecked(&b.location);
            let dn = dot(&f.gradient(&b.location), &n);
            if dn <= 0.0 {
                return None;
            }
            let det = if b.eigenvalues.is_empty() {
                1.0
            } else {
                b.eigenvalues.iter().product()
            };
            let on_c_max = c_max
                .map(|w| {
                    w.boundary_contacts
                        .iter()
                        .any(|c| distance(c, &b.location) <= tol.tol_merge)
                })
                .unwrap_or(false);
            Some(GeneralizedSaddle {
                point: b.location.clone(),
                value: b.value,
                normal_derivative: dn,
                tangential_hessian_det: det,
                is_global_boundary_min: (b.value - min_boundary_value).abs() <= tol.level_tol,
                on_c_max,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        let rank = |s: &GeneralizedSaddle| (!s.on_c_max, !s.is_global_boundary_min);
        rank(a).cmp(&rank(b)).then(canonical_cmp(&a.point, &b.point))
    });
    out
}

fn boundary_minimum_and_gradient(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    boundary_critical_points: &[CriticalPoint],
) -> (f64, f64) {
    let mut points: Vec<Vec<f64>> = boundary_critical_points.iter().map(|c| c.location.clone()).collect();
    if dom.dim() == 2 {
        points.extend(dom.boundary_mesh(2048));
    }
    for b in grid.boundary_nodes() {
        points.push(grid.anchor(b));
    }
    let mut vmin = f64::INFINITY;
    let mut gmin = f64::INFINITY;
    for p in &points {
        vmin = vmin.min(f.value(p));
        gmin = gmin.min(norm(&f.gradient(p)));
    }
    (vmin, gmin)
}

/// Runs the full analysis.
pub fn analyze(f: &PotentialField, dom: &DomainGeometry, grid: &GridDiscretization) -> Result<LandscapeReport> {
    let tol = MorseTolerances::for_grid(f, dom, grid);
    analyze_with(f, dom, grid, tol)
}

pub fn analyze_with(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    tol: MorseTolerances,
) -> Result<LandscapeReport> {
    if grid.interior_nodes().is_empty() {
        return Err(MorseError::NoInteriorNode);
    }
    let critical_points = find_critical_points(f, dom, grid, &tol);
    let boundary_critical_points = find_boundary_critical_points(f, dom, grid, &tol);
    let (min_boundary_value, min_boundary_gradient) =
        boundary_minimum_and_gradient(f, dom, grid, &boundary_critical_points);
    let wells = build_wells(f, grid, &critical_points, &boundary_critical_points, &tol)?;
    let c_max = deepest_well(&wells, tol.tol_depth);
    let saddles = classify_saddles(f, dom, grid, &critical_points, &tol);
    let separating_saddles = separating_from(&saddles);
    let generalized_saddles = generalized_boundary_saddles(
        f,
        dom,
        &boundary_critical_points,
        c_max.map(|i| &wells[i]),
        min_boundary_value,
        &tol,
    );
    let mut report = LandscapeReport {
        dim: dom.dim(),
        tolerances: tol,
        critical_points,
        boundary_critical_points,
        wells,
        c_max,
        saddles,
        separating_saddles,
        generalized_saddles,
        min_boundary_value,
        min_boundary_gradient,
        assumption_verdicts: BTreeMap::new(),
    };
    report.assumption_verdicts = check_assumptions(f, dom, grid, &report);
    Ok(report)
}

/// A0-A4 verdicts. A verdict whose prerequisite failed is reported as a failure.
pub fn check_assumptions(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    r: &LandscapeReport,
) -> BTreeMap<Assumption, Verdict> {
    use VerdictStatus::*;
    let tol = &r.tolerances;
    let mut out = BTreeMap::new();

    let a0 = {
        let degenerate: Vec<&CriticalPoint> = r.critical_points.iter().filter(|c| c.degenerate).collect();
        let on_boundary: Vec<&CriticalPoint> = r
            .critical_points
            .iter()
            .filter(|c| dom.boundary_distance(&c.location) <= dom.boundary_eps().max(tol.tol_merge))
            .collect();
        let bad_boundary: Vec<&CriticalPoint> = r
            .boundary_critical_points
            .iter()
            .filter(|c| c.degenerate && dot(&f.gradient(&c.location), &dom.normal_unchecked(&c.location)) > 0.0)
            .collect();
        let minima = r.interior_minima().count();
        if !degenerate.is_empty() {
            Verdict::new(
                Fail,
                format!("degenerate critical point at {:?}", degenerate[0].location),
            )
        } else if !on_boundary.is_empty() {
            Verdict::new(
                Fail,
                format!("critical point on the boundary at {:?}", on_boundary[0].location),
            )
        } else if r.min_boundary_gradient <= tol.tol_crit {
            Verdict::new(
                Fail,
                format!("|grad f| = {:.3e} on the boundary", r.min_boundary_gradient),
            )
        } else if !bad_boundary.is_empty() {
            Verdict::new(
                Fail,
                format!("boundary restriction degenerate at {:?}", bad_boundary[0].location),
            )
        } else if minima == 0 {
            Verdict::new(Fail, "no interior local minimum")
        } else if dom.dim() == 1 {
            Verdict::new(
                Pass,
                format!(
                    "{} non-degenerate critical points, {minima} minima",
                    r.critical_points.len()
                ),
            )
        } else {
            Verdict::new(
                PassSampled,
                format!(
                    "{} non-degenerate interior critical points, {minima} minima; boundary restriction checked at {} detected critical points",
                    r.critical_points.len(),
                    r.boundary_critical_points.len()
                ),
            )
        }
    };
    let a0_ok = a0.passed();
    out.insert(Assumption::A0, a0);

    let a1 = if !a0_ok {
        Verdict::new(Fail, "requires A0")
    } else {
        match r.c_max {
            Some(i) => Verdict::new(
                Pass,
                format!(
                    "well {i} has depth {:.6} among {} wells",
                    r.wells[i].depth,
                    r.wells.len()
                ),
            ),
            None => Verdict::new(Fail, "several wells attain the maximal depth"),
        }
    };
    let a1_ok = a1.passed();
    out.insert(Assumption::A1, a1);

    let cm = r.c_max_well();
    let a2 = match (a1_ok, cm) {
        (true, Some(w)) if !w.boundary_contacts.is_empty() => {
            Verdict::new(Pass, format!("{} boundary contact(s)", w.boundary_contacts.len()))
        }
        (true, Some(_)) => Verdict::new(Fail, "deepest well does not reach the boundary"),
        _ => Verdict::new(Fail, "requires A1"),
    };
    let a2_ok = a2.passed();
    out.insert(Assumption::A2, a2);

    let a3 = match (a2_ok, cm) {
        (true, Some(w)) => {
            let worst = w
                .boundary_contacts
                .iter()
                .map(|c| f.value(c) - r.min_boundary_value)
                .fold(0.0_f64, f64::max);
            if worst <= tol.level_tol {
                Verdict::new(Pass, "every contact attains the boundary minimum")
            } else {
                Verdict::new(
                    Fail,
                    format!(
                        "a contact lies {worst:.6} above the boundary minimum {:.6}",
                        r.min_boundary_value
                    ),
                )
            }
        }
        _ => Verdict::new(Fail, "requires A2"),
    };
    out.insert(Assumption::A3, a3);

    let a4 = match (a1_ok, cm) {
        (true, Some(w)) => {
            // a saddle borders the well when one of its descents ends inside it
            let inside = |p: &[f64]| {
                grid.nearest_interior_node(p)
                    .map(|n| w.node_set.binary_search(&n).is_ok())
                    .unwrap_or(false)
            };
            let hit = r.separating_saddles.iter().find(|s| {
                (s.level - w.level).abs() <= tol.level_tol
                    && (inside(&s.landing_points.0) || inside(&s.landing_points.1))
            });
            let undecided = r
                .saddles
                .iter()
                .filter(|s| matches!(s.outcome, SaddleOutcome::Indeterminate { .. }))
                .filter(|s| (s.point.value - w.level).abs() <= tol.level_tol)
                .count();
            match hit {
                Some(s) => Verdict::new(
                    Fail,
                    format!(
                        "separating saddle at {:?} lies on the boundary of the deepest well",
                        s.point.location
                    ),
                ),
                None if undecided > 0 => Verdict::new(
                    Indeterminate,
                    format!("{undecided} saddle(s) at the well level could not be classified"),
                ),
                None => Verdict::new(Pass, "no separating saddle on the deepest well boundary"),
            }
        }
        _ => Verdict::new(Fail, "requires A1"),
    };
    out.insert(Assumption::A4, a4);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOptions {
    pub tol_crit: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    /// Largest displacement allowed in one step.
    pub max_move: f64,
}

impl FlowOptions {
    pub fn new(tol_crit: f64, max_move: f64) -> Self {
        Self {
            tol_crit,
            rel_tol: 1e-10,
            max_steps: 10_000_000,
            max_move,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FlowTerminal {
    Converged { point: Vec<f64>, value: f64 },
    Exited { exit_point: Vec<f64>, exit_time: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub terminal: FlowTerminal,
    pub arc_length: f64,
    pub steps: usize,
    pub time: f64,
    /// Largest increase of f between accepted steps (non-positive when monotone).
    pub max_increase: f64,
}

fn rk4(f: &PotentialField, x: &[f64], dt: f64) -> Vec<f64> {
    let d = x.len();
    let k1 = f.gradient(x);
    let y: Vec<f64> = (0..d).map(|i| x[i] - 0.5 * dt * k1[i]).collect();
    let k2 = f.gradient(&y);
    let y: Vec<f64> = (0..d).map(|i| x[i] - 0.5 * dt * k2[i]).collect();
    let k3 = f.gradient(&y);
    let y: Vec<f64> = (0..d).map(|i| x[i] - dt * k3[i]).collect();
    let k4 = f.gradient(&y);
    (0..d)
        .map(|i| x[i] - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
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

/// Integrates `x' = -grad f(x)` with adaptive RK4 until a critical point is
/// reached or the path leaves the domain.
pub fn flow(f: &PotentialField, dom: &DomainGeometry, x0: &[f64], opts: &FlowOptions) -> Result<FlowResult> {
    if !dom.contains(x0) {
        return Err(MorseError::StartOutsideDomain(x0.to_vec()));
    }
    let mut x = x0.to_vec();
    let mut fx = f.value(&x);
    let mut t = 0.0;
    let mut arc = 0.0;
    let mut dt = 1e-3;
    let mut steps = 0;
    let mut max_increase = f64::NEG_INFINITY;
    loop {
        let g = f.gradient(&x);
        let gn = norm(&g);
        if gn < opts.tol_crit {
            return Ok(FlowResult {
                terminal: FlowTerminal::Converged { point: x, value: fx },
                arc_length: arc,
                steps,
                time: t,
                max_increase: max_increase.min(0.0),
            });
        }
        if steps >= opts.max_steps {
            return Err(MorseError::MaxStepsExceeded { steps });
        }
        if dt * gn > opts.max_move {
            dt = opts.max_move / gn;
        }
        let full = rk4(f, &x, dt);
        let half = rk4(f, &rk4(f, &x, 0.5 * dt), 0.5 * dt);
        let err = distance(&full, &half) / 15.0;
        let scale = opts.rel_tol * (1.0 + norm(&x));
        if err > scale && dt > 1e-14 {
            dt *= (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.5);
            continue;
        }
        let next: Vec<f64> = half.iter().zip(&full).map(|(h, q)| h + (h - q) / 15.0).collect();
        steps += 1;
        if !dom.contains(&next) {
            let (z, s) = locate_exit(dom, &x, &next);
            arc += distance(&x, &z);
            return Ok(FlowResult {
                terminal: FlowTerminal::Exited {
                    exit_point: z,
                    exit_time: t + s * dt,
                },
                arc_length: arc,
                steps,
                time: t + s * dt,
                max_increase: max_increase.min(0.0),
            });
        }
        let fnext = f.value(&next);
        if fnext > fx + 1e-14 * fx.abs().max(1.0) && dt > 1e-14 {
            dt *= 0.5;
            steps -= 1;
            continue;
        }
        max_increase = max_increase.max(fnext - fx);
        arc += distance(&x, &next);
        t += dt;
        x = next;
        fx = fnext;
        let grow = if err > 0.0 {
            (0.9 * (scale / err).powf(0.2)).clamp(1.0, 2.0)
        } else {
            2.0
        };
        dt *= grow;
    }
}

/// Whether the gradient flow from `x` converges inside `well`.
pub fn in_attraction_basin(
    f: &PotentialField,
    dom: &DomainGeometry,
    grid: &GridDiscretization,
    x: &[f64],
    well: &Well,
    opts: &FlowOptions,
) -> Result<bool> {
    match flow(f, dom, x, opts)?.terminal {
        FlowTerminal::Exited { .. } => Ok(false),
        FlowTerminal::Converged { point, .. } => Ok(grid
            .nearest_interior_node(&point)
            .map(|n| well.node_set.binary_search(&n).is_ok())
            .unwrap_or(false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{build_grid, MonomialSpec};

    fn field(name: &str, params: &[(&str, f64)]) -> PotentialField {
        let p = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        PotentialField::builtin(name, &p).unwrap()
    }

    fn poly(terms: &[(f64, &[u32])]) -> PotentialField {
        let t: Vec<MonomialSpec> = terms
            .iter()
            .map(|(c, p)| MonomialSpec {
                coef: *c,
                powers: p.to_vec(),
            })
            .collect();
        PotentialField::polynomial(&t).unwrap()
    }

    #[test]
    fn double_well_critical_points() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let grid = build_grid(&dom, &[0.01]).unwrap();
        let tol = MorseTolerances::for_grid(&f, &dom, &grid);
        let cps = find_critical_points(&f, &dom, &grid, &tol);
        let got: Vec<(f64, usize)> = cps.iter().map(|c| (c.location[0], c.index)).collect();
        assert_eq!(got.len(), 3);
        for ((x, i), (ex, ei)) in got.iter().zip([(-1.0, 0), (0.0, 1), (1.0, 0)]) {
            assert!((x - ex).abs() < 1e-8, "{x} vs {ex}");
            assert_eq!(*i, ei);
        }
    }

    #[test]
    fn two_dimensional_critical_points() {
        let bowl = poly(&[(1.0, &[2, 0]), (1.0, &[0, 2])]);
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        let grid = build_grid(&disk, &[0.05]).unwrap();
        let tol = MorseTolerances::for_grid(&bowl, &disk, &grid);
        let cps = find_critical_points(&bowl, &disk, &grid, &tol);
        assert_eq!(cps.len(), 1);
        assert_eq!(cps[0].index, 0);
        assert!(norm(&cps[0].location) < 1e-8);

        let dw = field("double_well_2d", &[]);
        let disk = DomainGeometry::disk(&[0.0, 0.0], 2.0).unwrap();
        let grid = build_grid(&disk, &[0.05]).unwrap();
        let tol = MorseTolerances::for_grid(&dw, &disk, &grid);
        let cps = find_critical_points(&dw, &disk, &grid, &tol);
        let idx: Vec<usize> = cps.iter().map(|c| c.index).collect();
        assert_eq!(idx, vec![0, 1, 0]);
        assert!((cps[0].location[0] + 1.0).abs() < 1e-8);
        assert!(norm(&cps[1].location) < 1e-8);
    }

    #[test]
    fn barrier_examples() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let grid = build_grid(&dom, &[0.05]).unwrap();
        assert!((barrier_height(&f, &grid, &[-1.0]).unwrap() - 1.5625).abs() < 1e-12);
        let dom = DomainGeometry::interval(-1.5, 3.0).unwrap();
        let grid = build_grid(&dom, &[0.05]).unwrap();
        assert!((barrier_height(&f, &grid, &[1.0]).unwrap() - 1.5625).abs() < 1e-12);
        let zero = poly(&[(0.0, &[0])]);
        assert_eq!(barrier_height(&zero, &grid, &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn sublevel_examples() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let grid = build_grid(&dom, &[0.01]).unwrap();
        let values = grid.node_values(&f);
        let left = sublevel_component(&grid, &values, 0.5, &[-1.0]).unwrap();
        assert!(left.iter().all(|&i| grid.node_point(i)[0] < 0.0));
        let both = sublevel_component(&grid, &values, 1.2, &[-1.0]).unwrap();
        assert!(both.iter().any(|&i| grid.node_point(i)[0] > 0.9));
        assert!(matches!(
            sublevel_component(&grid, &values, -0.1, &[-1.0]),
            Err(MorseError::SeedAboveLevel { .. })
        ));
    }

    #[test]
    fn symmetric_double_well_is_one_well() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let grid = build_grid(&dom, &[0.01]).unwrap();
        let r = analyze(&f, &dom, &grid).unwrap();
        assert_eq!(r.wells.len(), 1);
        assert_eq!(r.wells[0].member_minima.len(), 2);
        assert!((r.wells[0].level - 1.5625).abs() < 1e-12);
        assert_eq!(r.wells[0].boundary_contacts.len(), 2);
        assert_eq!(r.c_max, Some(0));
        for a in [
            Assumption::A0,
            Assumption::A1,
            Assumption::A2,
            Assumption::A3,
            Assumption::A4,
        ] {
            assert!(r.verdict(a).passed(), "{a:?}: {}", r.verdict(a).reason);
        }
        assert_eq!(r.separating_saddles.len(), 1);
        assert_eq!(r.generalized_saddles.len(), 2);
        assert!(r
            .generalized_saddles
            .iter()
            .all(|g| (g.normal_derivative - 7.5).abs() < 1e-12));
    }

    #[test]
    fn uneven_interval_has_single_support() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.7).unwrap();
        let grid = build_grid(&dom, &[0.01]).unwrap();
        let r = analyze(&f, &dom, &grid).unwrap();
        let global: Vec<f64> = r
            .generalized_saddles
            .iter()
            .filter(|g| g.is_global_boundary_min)
            .map(|g| g.point[0])
            .collect();
        assert_eq!(global, vec![-1.5]);
    }

    #[test]
    fn flow_examples() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let opts = FlowOptions::new(1e-9, 0.05);
        match flow(&f, &dom, &[-0.5], &opts).unwrap().terminal {
            FlowTerminal::Converged { point, .. } => assert!((point[0] + 1.0).abs() < 1e-8),
            t => panic!("{t:?}"),
        }
        let lin = poly(&[(1.0, &[1])]);
        let unit = DomainGeometry::interval(0.0, 1.0).unwrap();
        match flow(&lin, &unit, &[0.5], &opts).unwrap().terminal {
            FlowTerminal::Exited { exit_point, exit_time } => {
                assert_eq!(exit_point, vec![0.0]);
                assert!((exit_time - 0.5).abs() < 1e-9);
            }
            t => panic!("{t:?}"),
        }
        let bowl = poly(&[(1.0, &[2, 0]), (1.0, &[0, 2])]);
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        match flow(&bowl, &disk, &[0.3, 0.4], &opts).unwrap().terminal {
            FlowTerminal::Converged { point, .. } => assert!(norm(&point) < 1e-8),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn exits_in_two_dimensions_land_on_the_circle() {
        let lin = poly(&[(1.0, &[1, 0])]);
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        let r = flow(&lin, &disk, &[0.2, 0.3], &FlowOptions::new(1e-9, 0.05)).unwrap();
        match r.terminal {
            FlowTerminal::Exited { exit_point, .. } => {
                assert!(disk.level(&exit_point).abs() < 1e-10);
                assert!((exit_point[1] - 0.3).abs() < 1e-9);
            }
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn basins() {
        let f = field("double_well_1d", &[]);
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let grid = build_grid(&dom, &[0.01]).unwrap();
        let tol = MorseTolerances::for_grid(&f, &dom, &grid);
        let cps = find_critical_points(&f, &dom, &grid, &tol);
        let values = grid.node_values(&f);
        let nodes = sublevel_component(&grid, &values, 0.5, &[-1.0]).unwrap();
        let left = Well {
            id: 0,
            member_minima: vec![cps[0].clone()],
            level: 0.5,
            node_count: nodes.len(),
            node_set: nodes,
            boundary_contacts: vec![],
            depth: 0.5,
            min_value: 0.0,
        };
        let opts = FlowOptions::new(tol.tol_crit, 0.01);
        assert!(in_attraction_basin(&f, &dom, &grid, &[-1.2], &left, &opts).unwrap());
        assert!(!in_attraction_basin(&f, &dom, &grid, &[0.5], &left, &opts).unwrap());
        let lin = poly(&[(1.0, &[1])]);
        assert!(!in_attraction_basin(&lin, &dom, &grid, &[0.5], &left, &opts).unwrap());
    }
}
