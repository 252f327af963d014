//! Potentials, domains and their lattice discretizations.
//!
//! A [`PotentialField`] is a finite sum of monomials and Gaussian bumps, which
//! keeps gradients and Hessians analytic. A [`DomainGeometry`] is either an
//! interval or an implicit region `{g < 0}` where `g` is itself a
//! [`PotentialField`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LandscapeError {
    #[error("point {point:?} is {distance:.3e} away from the boundary (tolerance {eps:.3e})")]
    NotOnBoundary { point: Vec<f64>, distance: f64, eps: f64 },
    #[error("tangential gradient {norm:.3e} exceeds {tol:.3e} at {point:?}")]
    NotTangentiallyCritical { point: Vec<f64>, norm: f64, tol: f64 },
    #[error("grid too coarse: axis {axis} has {count} interior coordinates, need at least 3")]
    GridTooCoarse { axis: usize, count: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unknown built-in potential `{0}`")]
    UnknownBuiltin(String),
}

pub type Result<T> = std::result::Result<T, LandscapeError>;

/// `coef * prod_k x_k^powers[k]`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialSpec {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// `amplitude * exp(-(x - center)^T covariance^{-1} (x - center) / 2)`.
/// Wells use a negative amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// How a potential was declared. Round-trips through the config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PotentialSource {
    Builtin {
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Polynomial {
        terms: Vec<MonomialSpec>,
    },
    Gaussians {
        #[serde(default)]
        confinement: Vec<MonomialSpec>,
        wells: Vec<GaussianSpec>,
    },
}

/// Names accepted by [`PotentialField::builtin`].
pub const BUILTIN_NAMES: &[&str] = &[
    "double_well_1d",
    "double_well_2d",
    "triple_well_1d",
    "three_well_2d",
    "tied_quintic_1d",
];

/// Disk radius at which the lowest boundary value of `three_well_2d` equals the
/// value of the saddle joining its two deepest wells.
pub const THREE_WELL_TIE_RADIUS: f64 = 1.830_883_326_545_634_1;

/// Left endpoint at which `tied_quintic_1d` (scale 1) takes the value of its
/// interior local maximum at the origin; root of `6a^3 - 15a^2 - 10a + 30`.
pub const TIED_QUINTIC_LEFT: f64 = -1.371_822_481_212_045;

#[derive(Clone, Debug)]
struct Monomial {
    coef: f64,
    powers: Vec<u32>,
}

#[derive(Clone, Debug)]
struct Gaussian {
    amplitude: f64,
    center: Vec<f64>,
    // row-major inverse covariance
    precision: Vec<f64>,
}

/// Smooth scalar field with analytic gradient and Hessian.
#[derive(Clone, Debug)]
pub struct PotentialField {
    dim: usize,
    monomials: Vec<Monomial>,
    gaussians: Vec<Gaussian>,
    source: PotentialSource,
}

fn ipow(x: f64, p: u32) -> f64 {
    match p {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(p as i32),
    }
}

fn mono(coef: f64, powers: &[u32]) -> MonomialSpec {
    MonomialSpec {
        coef,
        powers: powers.to_vec(),
    }
}

fn iso_gaussian(amplitude: f64, center: &[f64], sigma: f64) -> GaussianSpec {
    let d = center.len();
    let covariance = (0..d)
        .map(|i| (0..d).map(|j| if i == j { sigma * sigma } else { 0.0 }).collect())
        .collect();
    GaussianSpec {
        amplitude,
        center: center.to_vec(),
        covariance,
    }
}

impl PotentialField {
    pub fn from_source(source: &PotentialSource) -> Result<Self> {
        match source {
            PotentialSource::Builtin { name, params } => Self::builtin(name, params),
            PotentialSource::Polynomial { terms } => Self::polynomial(terms),
            PotentialSource::Gaussians { confinement, wells } => Self::sum_of_gaussians(confinement, wells),
        }
    }

    pub fn polynomial(terms: &[MonomialSpec]) -> Result<Self> {
        let field = Self::assemble(terms, &[])?;
        Ok(Self {
            source: PotentialSource::Polynomial { terms: terms.to_vec() },
            ..field
        })
    }

    pub fn sum_of_gaussians(confinement: &[MonomialSpec], wells: &[GaussianSpec]) -> Result<Self> {
        let field = Self::assemble(confinement, wells)?;
        Ok(Self {
            source: PotentialSource::Gaussians {
                confinement: confinement.to_vec(),
                wells: wells.to_vec(),
            },
            ..field
        })
    }

    fn assemble(terms: &[MonomialSpec], wells: &[GaussianSpec]) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.powers.len())
            .or_else(|| wells.first().map(|w| w.center.len()))
            .ok_or_else(|| LandscapeError::InvalidPotential("no terms".into()))?;
        if dim == 0 {
            return Err(LandscapeError::InvalidPotential("zero dimension".into()));
        }
        let mut monomials = Vec::with_capacity(terms.len());
        for t in terms {
            if t.powers.len() != dim {
                return Err(LandscapeError::DimensionMismatch {
                    expected: dim,
                    got: t.powers.len(),
                });
            }
            if !t.coef.is_finite() {
                return Err(LandscapeError::InvalidPotential("non-finite coefficient".into()));
            }
            monomials.push(Monomial {
                coef: t.coef,
                powers: t.powers.clone(),
            });
        }
        let mut gaussians = Vec::with_capacity(wells.len());
        for w in wells {
            if w.center.len() != dim || w.covariance.len() != dim {
                return Err(LandscapeError::DimensionMismatch {
                    expected: dim,
                    got: w.center.len(),
                });
            }
            let mut cov = DMatrix::zeros(dim, dim);
            for (i, row) in w.covariance.iter().enumerate() {
                if row.len() != dim {
                    return Err(LandscapeError::DimensionMismatch {
                        expected: dim,
                        got: row.len(),
                    });
                }
                for (j, v) in row.iter().enumerate() {
                    cov[(i, j)] = *v;
                }
            }
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| LandscapeError::InvalidPotential("covariance is not positive definite".into()))?;
            let prec = chol.inverse();
            let mut precision = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    precision[i * dim + j] = 0.5 * (prec[(i, j)] + prec[(j, i)]);
                }
            }
            gaussians.push(Gaussian {
                amplitude: w.amplitude,
                center: w.center.clone(),
                precision,
            });
        }
        Ok(Self {
            dim,
            monomials,
            gaussians,
            source: PotentialSource::Polynomial { terms: vec![] },
        })
    }

    /// Built-in potentials. See [`BUILTIN_NAMES`].
    ///
    /// * `double_well_1d`: `(x^2-1)^2 + tilt x`
    /// * `double_well_2d`: `(x^2-1)^2 + c y^2 + tilt x` (defaults `c = 1`)
    /// * `triple_well_1d`: three wells, intended for `(-2.5, 2.7)`
    /// * `three_well_2d`: three wells on a triangle, intended for a disk
    ///   centred at the origin
    /// * `tied_quintic_1d`: `-scale (x^5/5 - x^4/2 - x^3/3 + x^2)`, two wells at
    ///   -1 and 1, intended for `(TIED_QUINTIC_LEFT, 2.4)`
    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let allowed: &[&str] = match name {
            "double_well_1d" => &["tilt"],
            "double_well_2d" => &["c", "tilt"],
            "triple_well_1d" | "three_well_2d" => &[],
            "tied_quintic_1d" => &["scale"],
            _ => return Err(LandscapeError::UnknownBuiltin(name.to_string())),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(LandscapeError::InvalidPotential(format!(
                "unknown parameter `{k}` for `{name}`"
            )));
        }
        let field = match name {
            "double_well_1d" => Self::assemble(
                &[
                    mono(1.0, &[4]),
                    mono(-2.0, &[2]),
                    mono(1.0, &[0]),
                    mono(get("tilt", 0.0), &[1]),
                ],
                &[],
            )?,
            "double_well_2d" => Self::assemble(
                &[
                    mono(1.0, &[4, 0]),
                    mono(-2.0, &[2, 0]),
                    mono(1.0, &[0, 0]),
                    mono(get("c", 1.0), &[0, 2]),
                    mono(get("tilt", 0.0), &[1, 0]),
                ],
                &[],
            )?,
            "triple_well_1d" => Self::assemble(
                &[mono(0.08, &[2])],
                &[
                    iso_gaussian(-2.0, &[-2.0], 0.45),
                    iso_gaussian(-1.9, &[-0.9], 0.45),
                    iso_gaussian(-1.6, &[1.3], 0.4),
                    iso_gaussian(-0.9, &[2.6], 0.35),
                ],
            )?,
            "three_well_2d" => Self::assemble(
                &[mono(0.1, &[2, 0]), mono(0.1, &[0, 2])],
                &[
                    iso_gaussian(-2.0, &[-1.2, 0.0], 0.6),
                    iso_gaussian(-1.6, &[0.6, 1.0], 0.6),
                    iso_gaussian(-1.4, &[0.6, -1.0], 0.6),
                ],
            )?,
            "tied_quintic_1d" => {
                let s = get("scale", 1.0);
                if s <= 0.0 {
                    return Err(LandscapeError::InvalidPotential("scale must be positive".into()));
                }
                Self::assemble(
                    &[
                        mono(-s / 5.0, &[5]),
                        mono(s / 2.0, &[4]),
                        mono(s / 3.0, &[3]),
                        mono(-s, &[2]),
                    ],
                    &[],
                )?
            }
            _ => unreachable!(),
        };
        Ok(Self {
            source: PotentialSource::Builtin {
                name: name.to_string(),
                params: params.clone(),
            },
            ..field
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &PotentialSource {
        &self.source
    }

    /// Returns `f + c`. The source becomes a polynomial/Gaussian listing.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.monomials.push(Monomial {
            coef: c,
            powers: vec![0; self.dim],
        });
        out.source = out.listing();
        out
    }

    /// Returns `s * f`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.monomials {
            m.coef *= s;
        }
        for g in &mut out.gaussians {
            g.amplitude *= s;
        }
        out.source = out.listing();
        out
    }

    fn listing(&self) -> PotentialSource {
        let terms = self
            .monomials
            .iter()
            .map(|m| mono(m.coef, &m.powers))
            .collect::<Vec<_>>();
        if self.gaussians.is_empty() {
            return PotentialSource::Polynomial { terms };
        }
        let d = self.dim;
        let wells = self
            .gaussians
            .iter()
            .map(|g| {
                let p = DMatrix::from_row_slice(d, d, &g.precision);
                let cov = p.try_inverse().unwrap_or_else(|| DMatrix::identity(d, d));
                GaussianSpec {
                    amplitude: g.amplitude,
                    center: g.center.clone(),
                    covariance: (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect(),
                }
            })
            .collect();
        PotentialSource::Gaussians {
            confinement: terms,
            wells,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut v = 0.0;
        for m in &self.monomials {
            let mut t = m.coef;
            for (xi, &p) in x.iter().zip(&m.powers) {
                t *= ipow(*xi, p);
            }
            v += t;
        }
        for g in &self.gaussians {
            v += g.amplitude * (-0.5 * self.quad_form(g, x)).exp();
        }
        v
    }

    fn quad_form(&self, g: &Gaussian, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            let ri = x[i] - g.center[i];
            for j in 0..d {
                q += ri * g.precision[i * d + j] * (x[j] - g.center[j]);
            }
        }
        q
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|o| *o = 0.0);
        for m in &self.monomials {
            for k in 0..d {
                let pk = m.powers[k];
                if pk == 0 {
                    continue;
                }
                let mut t = m.coef * pk as f64 * ipow(x[k], pk - 1);
                for j in 0..d {
                    if j != k {
                        t *= ipow(x[j], m.powers[j]);
                    }
                }
                out[k] += t;
            }
        }
        for g in &self.gaussians {
            let e = g.amplitude * (-0.5 * self.quad_form(g, x)).exp();
            for i in 0..d {
                let mut pr = 0.0;
                for j in 0..d {
                    pr += g.precision[i * d + j] * (x[j] - g.center[j]);
                }
                out[i] -= e * pr;
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        for m in &self.monomials {
            for a in 0..d {
                for b in a..d {
                    let mut powers = m.powers.clone();
                    let mut c = m.coef;
                    if powers[a] == 0 {
                        continue;
                    }
                    c *= powers[a] as f64;
                    powers[a] -= 1;
                    if powers[b] == 0 {
                        continue;
                    }
                    c *= powers[b] as f64;
                    powers[b] -= 1;
                    let mut t = c;
                    for j in 0..d {
                        t *= ipow(x[j], powers[j]);
                    }
                    h[(a, b)] += t;
                }
            }
        }
        for g in &self.gaussians {
            let e = g.amplitude * (-0.5 * self.quad_form(g, x)).exp();
            let pr: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| g.precision[i * d + j] * (x[j] - g.center[j])).sum())
                .collect();
            for a in 0..d {
                for b in a..d {
                    h[(a, b)] += e * (pr[a] * pr[b] - g.precision[a * d + b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }
}

/// How a domain was declared. Round-trips through the config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval {
        a: f64,
        b: f64,
    },
    Disk {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{level < 0}` inside the given box.
    Implicit {
        level: PotentialSource,
        bbox_min: Vec<f64>,
        bbox_max: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
enum DomainKind {
    Interval {
        a: f64,
        b: f64,
    },
    Implicit {
        g: PotentialField,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

/// Bounded domain with outward normals and boundary projections.
#[derive(Clone, Debug)]
pub struct DomainGeometry {
    kind: DomainKind,
    boundary_eps: f64,
    spec: DomainSpec,
}

impl DomainGeometry {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        let kind = match spec {
            DomainSpec::Interval { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(LandscapeError::InvalidDomain(format!(
                        "interval ({a}, {b}) is empty or unbounded"
                    )));
                }
                DomainKind::Interval { a: *a, b: *b }
            }
            DomainSpec::Disk { center, radius } => {
                if !(*radius > 0.0) || center.is_empty() {
                    return Err(LandscapeError::InvalidDomain("disk needs radius > 0".into()));
                }
                let d = center.len();
                let mut terms = Vec::new();
                let mut c0 = -radius * radius;
                for (k, ck) in center.iter().enumerate() {
                    let mut p2 = vec![0; d];
                    p2[k] = 2;
                    terms.push(mono(1.0, &p2));
                    let mut p1 = vec![0; d];
                    p1[k] = 1;
                    terms.push(mono(-2.0 * ck, &p1));
                    c0 += ck * ck;
                }
                terms.push(mono(c0, &vec![0; d]));
                DomainKind::Implicit {
                    g: PotentialField::polynomial(&terms)?,
                    lo: center.iter().map(|c| c - radius).collect(),
                    hi: center.iter().map(|c| c + radius).collect(),
                }
            }
            DomainSpec::Implicit {
                level,
                bbox_min,
                bbox_max,
            } => {
                let g = PotentialField::from_source(level)?;
                if bbox_min.len() != g.dim() || bbox_max.len() != g.dim() {
                    return Err(LandscapeError::DimensionMismatch {
                        expected: g.dim(),
                        got: bbox_min.len(),
                    });
                }
                if bbox_min.iter().zip(bbox_max).any(|(l, h)| !(l < h)) {
                    return Err(LandscapeError::InvalidDomain("empty bounding box".into()));
                }
                DomainKind::Implicit {
                    g,
                    lo: bbox_min.clone(),
                    hi: bbox_max.clone(),
                }
            }
        };
        Ok(Self {
            kind,
            boundary_eps: 1e-6,
            spec: spec.clone(),
        })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::from_spec(&DomainSpec::Interval { a, b })
    }

    pub fn disk(center: &[f64], radius: f64) -> Result<Self> {
        Self::from_spec(&DomainSpec::Disk {
            center: center.to_vec(),
            radius,
        })
    }

    pub fn implicit(level: PotentialField, bbox_min: &[f64], bbox_max: &[f64]) -> Result<Self> {
        let spec = DomainSpec::Implicit {
            level: level.source().clone(),
            bbox_min: bbox_min.to_vec(),
            bbox_max: bbox_max.to_vec(),
        };
        let mut dom = Self::from_spec(&spec)?;
        dom.kind = DomainKind::Implicit {
            g: level,
            lo: bbox_min.to_vec(),
            hi: bbox_max.to_vec(),
        };
        Ok(dom)
    }

    pub fn with_boundary_eps(mut self, eps: f64) -> Self {
        self.boundary_eps = eps;
        self
    }

    pub fn boundary_eps(&self) -> f64 {
        self.boundary_eps
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => 1,
            DomainKind::Implicit { g, .. } => g.dim(),
        }
    }

    /// Endpoints for an interval domain.
    pub fn as_interval(&self) -> Option<(f64, f64)> {
        match self.kind {
            DomainKind::Interval { a, b } => Some((a, b)),
            _ => None,
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Interval { a, b } => (vec![*a], vec![*b]),
            DomainKind::Implicit { lo, hi, .. } => (lo.clone(), hi.clone()),
        }
    }

    /// Signed level: negative inside, zero on the boundary.
    pub fn level(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Interval { a, b } => (a - x[0]).max(x[0] - b),
            DomainKind::Implicit { g, .. } => g.value(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Interval { a, b } => x[0] > *a && x[0] < *b,
            DomainKind::Implicit { g, lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h) && g.value(x) < 0.0
            }
        }
    }

    /// First-order distance estimate to the boundary.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Interval { a, b } => (x[0] - a).abs().min((x[0] - b).abs()),
            DomainKind::Implicit { g, .. } => {
                let gr = g.gradient(x);
                let n = norm(&gr);
                if n == 0.0 {
                    f64::INFINITY
                } else {
                    g.value(x).abs() / n
                }
            }
        }
    }

    fn check_on_boundary(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(LandscapeError::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let distance = self.boundary_distance(z);
        if distance > self.boundary_eps {
            return Err(LandscapeError::NotOnBoundary {
                point: z.to_vec(),
                distance,
                eps: self.boundary_eps,
            });
        }
        Ok(())
    }

    /// Outward unit normal at a boundary point.
    pub fn normal(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_on_boundary(z)?;
        Ok(self.normal_unchecked(z))
    }

    /// Outward unit normal of the level set through `x` (nearest endpoint in 1D).
    pub fn normal_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                if (x[0] - a).abs() <= (x[0] - b).abs() {
                    vec![-1.0]
                } else {
                    vec![1.0]
                }
            }
            DomainKind::Implicit { g, .. } => {
                let mut gr = g.gradient(x);
                let n = norm(&gr);
                gr.iter_mut().for_each(|v| *v /= n);
                gr
            }
        }
    }

    /// Newton projection onto `{g = 0}`; nearest endpoint in 1D.
    pub fn project_to_boundary(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::Interval { a, b } => {
                if (x[0] - a).abs() <= (x[0] - b).abs() {
                    vec![*a]
                } else {
                    vec![*b]
                }
            }
            DomainKind::Implicit { g, .. } => {
                let mut p = x.to_vec();
                for _ in 0..100 {
                    let gv = g.value(&p);
                    let gr = g.gradient(&p);
                    let n2: f64 = gr.iter().map(|v| v * v).sum();
                    if n2 == 0.0 {
                        break;
                    }
                    let step = gv / n2;
                    for (pi, gi) in p.iter_mut().zip(&gr) {
                        *pi -= step * gi;
                    }
                    if (step * n2.sqrt()).abs() < 1e-15 * (1.0 + norm(&p)) {
                        break;
                    }
                }
                p
            }
        }
    }

    /// Orthonormal tangent basis at `z` as the columns of a `d x (d-1)` matrix.
    pub fn tangent_basis(&self, z: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.normal_unchecked(z);
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d.saturating_sub(1));
        let nv = DVector::from_column_slice(&n);
        let mut candidates: Vec<(f64, usize)> = (0..d).map(|k| (n[k].abs(), k)).collect();
        candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        for &(_, k) in &candidates {
            if basis.len() + 1 == d {
                break;
            }
            let mut v = DVector::zeros(d);
            v[k] = 1.0;
            v -= &nv * nv.dot(&v);
            for b in &basis {
                v -= b * b.dot(&v);
            }
            let nrm = v.norm();
            if nrm > 1e-8 {
                basis.push(v / nrm);
            }
        }
        let mut m = DMatrix::zeros(d, d - 1);
        for (j, b) in basis.iter().enumerate() {
            m.set_column(j, b);
        }
        m
    }

    /// `|grad g|` and `Hess g` at `x` (zero curvature in 1D).
    fn level_derivatives(&self, x: &[f64]) -> (f64, DMatrix<f64>) {
        match &self.kind {
            DomainKind::Interval { .. } => (1.0, DMatrix::zeros(1, 1)),
            DomainKind::Implicit { g, .. } => (norm(&g.gradient(x)), g.hessian(x)),
        }
    }

    /// Points on the boundary: endpoints in 1D, an angular ray scan around the
    /// bounding-box centre in 2D (the domain is assumed star-shaped there).
    pub fn boundary_mesh(&self, n: usize) -> Vec<Vec<f64>> {
        match &self.kind {
            DomainKind::Interval { a, b } => vec![vec![*a], vec![*b]],
            DomainKind::Implicit { lo, hi, .. } => {
                let d = lo.len();
                if d != 2 {
                    return Vec::new();
                }
                let c: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
                let reach = lo.iter().zip(hi).map(|(l, h)| (h - l) * (h - l)).sum::<f64>().sqrt();
                (0..n)
                    .map(|k| {
                        let th = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                        let dir = [th.cos(), th.sin()];
                        let at = |t: f64| vec![c[0] + t * dir[0], c[1] + t * dir[1]];
                        let (mut lo_t, mut hi_t) = (0.0, reach);
                        for _ in 0..80 {
                            let mid = 0.5 * (lo_t + hi_t);
                            if self.level(&at(mid)) < 0.0 {
                                lo_t = mid;
                            } else {
                                hi_t = mid;
                            }
                        }
                        self.project_to_boundary(&at(0.5 * (lo_t + hi_t)))
                    })
                    .collect()
            }
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `grad f(z) . n(z)` at a boundary point.
pub fn boundary_normal_derivative(f: &PotentialField, dom: &DomainGeometry, z: &[f64]) -> Result<f64> {
    let n = dom.normal(z)?;
    Ok(dot(&f.gradient(z), &n))
}

/// Components of `grad f` along an orthonormal tangent basis.
pub fn tangential_gradient(f: &PotentialField, dom: &DomainGeometry, z: &[f64]) -> Result<Vec<f64>> {
    dom.check_on_boundary(z)?;
    let basis = dom.tangent_basis(z);
    let gr = DVector::from_column_slice(&f.gradient(z));
    Ok((basis.transpose() * gr).iter().copied().collect())
}

/// Hessian of `f` restricted to the boundary at a tangentially critical point,
/// in an orthonormal tangent basis. Empty in 1D (determinant 1).
pub fn tangential_hessian(f: &PotentialField, dom: &DomainGeometry, z: &[f64], tol_crit: f64) -> Result<DMatrix<f64>> {
    let tg = tangential_gradient(f, dom, z)?;
    let tn = norm(&tg);
    if tn > tol_crit {
        return Err(LandscapeError::NotTangentiallyCritical {
            point: z.to_vec(),
            norm: tn,
            tol: tol_crit,
        });
    }
    Ok(tangential_hessian_unchecked(f, dom, z))
}

/// Riemannian Hessian of `f` on the level set of `g` through `z`.
pub fn tangential_hessian_unchecked(f: &PotentialField, dom: &DomainGeometry, z: &[f64]) -> DMatrix<f64> {
    let d = dom.dim();
    if d == 1 {
        return DMatrix::zeros(0, 0);
    }
    let basis = dom.tangent_basis(z);
    let n = dom.normal_unchecked(z);
    let dn = dot(&f.gradient(z), &n);
    let (gnorm, hg) = dom.level_derivatives(z);
    let hf = f.hessian(z);
    let m = &hf - &hg * (dn / gnorm);
    let out = basis.transpose() * m * &basis;
    (&out + out.transpose()) * 0.5
}

/// Root-mean-square `|grad f|` over a lattice sample of the domain.
pub fn typical_gradient_scale(f: &PotentialField, dom: &DomainGeometry) -> f64 {
    let (lo, hi) = dom.bounding_box();
    let d = lo.len();
    let per_axis: usize = match d {
        1 => 2001,
        2 => 61,
        _ => 13,
    };
    let total = per_axis.pow(d as u32);
    let mut acc = 0.0;
    let mut count = 0usize;
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for k in 0..d {
            let i = r % per_axis;
            r /= per_axis;
            x[k] = lo[k] + (hi[k] - lo[k]) * (i as f64 + 0.5) / per_axis as f64;
        }
        if dom.contains(&x) {
            f.gradient_into(&x, &mut g);
            acc += g.iter().map(|v| v * v).sum::<f64>();
            count += 1;
        }
    }
    if count == 0 {
        1.0
    } else {
        let s = (acc / count as f64).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeTag {
    Interior,
    Boundary,
    Exterior,
}

/// Tagged lattice over the bounding box. Node `i` has multi-index
/// `(i_0, i_1, ...)` with axis 0 varying fastest.
#[derive(Clone, Debug)]
pub struct GridDiscretization {
    shape: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    tags: Vec<NodeTag>,
    // projection of each boundary node onto the boundary
    anchors: BTreeMap<usize, Vec<f64>>,
}

/// Builds the lattice. In 1D the spacing is adjusted so both endpoints are
/// nodes; in higher dimension the box is padded by one node on each side.
pub fn build_grid(dom: &DomainGeometry, spacing: &[f64]) -> Result<GridDiscretization> {
    let d = dom.dim();
    let spacing: Vec<f64> = if spacing.len() == 1 && d > 1 {
        vec![spacing[0]; d]
    } else {
        spacing.to_vec()
    };
    if spacing.len() != d {
        return Err(LandscapeError::DimensionMismatch {
            expected: d,
            got: spacing.len(),
        });
    }
    if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(LandscapeError::InvalidDomain("spacing must be positive".into()));
    }
    if let Some((a, b)) = dom.as_interval() {
        let n = (((b - a) / spacing[0]).round() as usize).max(1);
        if n < 4 {
            return Err(LandscapeError::GridTooCoarse {
                axis: 0,
                count: n.saturating_sub(1),
            });
        }
        let dx = (b - a) / n as f64;
        let mut tags = vec![NodeTag::Interior; n + 1];
        tags[0] = NodeTag::Boundary;
        tags[n] = NodeTag::Boundary;
        let mut anchors = BTreeMap::new();
        anchors.insert(0, vec![a]);
        anchors.insert(n, vec![b]);
        return Ok(GridDiscretization {
            shape: vec![n + 1],
            origin: vec![a],
            spacing: vec![dx],
            tags,
            anchors,
        });
    }
    let (lo, hi) = dom.bounding_box();
    let shape: Vec<usize> = (0..d)
        .map(|k| ((hi[k] - lo[k]) / spacing[k] - 1e-9).ceil() as usize + 3)
        .collect();
    let origin: Vec<f64> = (0..d).map(|k| lo[k] - spacing[k]).collect();
    let total: usize = shape.iter().product();
    let mut grid = GridDiscretization {
        shape,
        origin,
        spacing,
        tags: vec![NodeTag::Exterior; total],
        anchors: BTreeMap::new(),
    };
    for i in 0..total {
        if dom.level(&grid.node_point(i)) < 0.0 {
            grid.tags[i] = NodeTag::Interior;
        }
    }
    for k in 0..d {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..total {
            if grid.tags[i] == NodeTag::Interior {
                seen.insert(grid.multi_index(i)[k]);
            }
        }
        if seen.len() < 3 {
            return Err(LandscapeError::GridTooCoarse {
                axis: k,
                count: seen.len(),
            });
        }
    }
    for i in 0..total {
        if grid.tags[i] == NodeTag::Exterior && grid.neighbors(i).any(|j| grid.tags[j] == NodeTag::Interior) {
            grid.tags[i] = NodeTag::Boundary;
            let p = dom.project_to_boundary(&grid.node_point(i));
            grid.anchors.insert(i, p);
        }
    }
    Ok(grid)
}

impl GridDiscretization {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn tag(&self, i: usize) -> NodeTag {
        self.tags[i]
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let r = i % n;
                i /= n;
                r
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut i = 0;
        let mut stride = 1;
        for (k, &n) in self.shape.iter().enumerate() {
            i += idx[k] * stride;
            stride *= n;
        }
        i
    }

    /// Lattice coordinates of node `i`.
    pub fn node_point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(k, &j)| self.origin[k] + j as f64 * self.spacing[k])
            .collect()
    }

    /// Representative location: lattice point for interior nodes, boundary
    /// projection for boundary nodes.
    pub fn anchor(&self, i: usize) -> Vec<f64> {
        match self.anchors.get(&i) {
            Some(p) => p.clone(),
            None => self.node_point(i),
        }
    }

    /// Axis neighbours of node `i` inside the lattice.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.multi_index(i);
        let mut stride = 1;
        let mut out = Vec::with_capacity(2 * self.dim());
        for (k, &n) in self.shape.iter().enumerate() {
            if idx[k] > 0 {
                out.push(i - stride);
            }
            if idx[k] + 1 < n {
                out.push(i + stride);
            }
            stride *= n;
        }
        out.into_iter()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == NodeTag::Interior).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == NodeTag::Boundary).collect()
    }

    /// Interior node closest to `x`, if any.
    pub fn nearest_interior_node(&self, x: &[f64]) -> Option<usize> {
        let d = self.dim();
        let mut idx = vec![0usize; d];
        for k in 0..d {
            let t = ((x[k] - self.origin[k]) / self.spacing[k]).round();
            idx[k] = t.clamp(0.0, (self.shape[k] - 1) as f64) as usize;
        }
        let guess = self.flat_index(&idx);
        if self.tags[guess] == NodeTag::Interior {
            return Some(guess);
        }
        self.interior_nodes().into_iter().min_by(|&p, &q| {
            distance(&self.node_point(p), x)
                .total_cmp(&distance(&self.node_point(q), x))
                .then(p.cmp(&q))
        })
    }

    /// `f` at every node's anchor; `+inf` at exterior nodes.
    pub fn node_values(&self, f: &PotentialField) -> Vec<f64> {
        (0..self.len())
            .map(|i| match self.tags[i] {
                NodeTag::Exterior => f64::INFINITY,
                _ => f.value(&self.anchor(i)),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dw() -> PotentialField {
        PotentialField::builtin("double_well_1d", &BTreeMap::new()).unwrap()
    }

    #[test]
    fn normal_derivative_examples() {
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let v = boundary_normal_derivative(&dw(), &dom, &[1.5]).unwrap();
        assert!((v - 7.5).abs() < 1e-12);

        let lin = PotentialField::polynomial(&[mono(1.0, &[1])]).unwrap();
        let unit = DomainGeometry::interval(0.0, 1.0).unwrap();
        assert_eq!(boundary_normal_derivative(&lin, &unit, &[0.0]).unwrap(), -1.0);

        let lin2 = PotentialField::polynomial(&[mono(1.0, &[1, 0])]).unwrap();
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        assert!((boundary_normal_derivative(&lin2, &disk, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_boundary_is_rejected() {
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let err = boundary_normal_derivative(&dw(), &dom, &[1.0]).unwrap_err();
        assert!(matches!(err, LandscapeError::NotOnBoundary { .. }));
    }

    #[test]
    fn tangential_hessian_on_circle() {
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        // f = y at the bottom of the circle: f(theta) = sin(theta), theta = -pi/2,
        // second arc-length derivative -sin(-pi/2) = 1
        let fy = PotentialField::polynomial(&[mono(1.0, &[0, 1])]).unwrap();
        let h = tangential_hessian(&fy, &disk, &[0.0, -1.0], 1e-9).unwrap();
        assert_eq!(h.shape(), (1, 1));
        assert!((h[(0, 0)] - 1.0).abs() < 1e-12);

        let r2 = PotentialField::polynomial(&[mono(1.0, &[2, 0]), mono(1.0, &[0, 2])]).unwrap();
        let h = tangential_hessian(&r2, &disk, &[1.0, 0.0], 1e-9).unwrap();
        assert!(h[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn tangential_hessian_requires_criticality() {
        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        let fy = PotentialField::polynomial(&[mono(1.0, &[0, 1])]).unwrap();
        let err = tangential_hessian(&fy, &disk, &[1.0, 0.0], 1e-9).unwrap_err();
        assert!(matches!(err, LandscapeError::NotTangentiallyCritical { .. }));
    }

    #[test]
    fn one_dimensional_tangential_hessian_is_empty() {
        let dom = DomainGeometry::interval(-1.5, 1.5).unwrap();
        let h = tangential_hessian(&dw(), &dom, &[-1.5], 1e-9).unwrap();
        assert_eq!(h.shape(), (0, 0));
        assert_eq!(h.determinant(), 1.0);
    }

    #[test]
    fn grid_examples() {
        let dom = DomainGeometry::interval(0.0, 1.0).unwrap();
        let g = build_grid(&dom, &[0.25]).unwrap();
        let interior: Vec<f64> = g.interior_nodes().iter().map(|&i| g.node_point(i)[0]).collect();
        assert_eq!(interior, vec![0.25, 0.5, 0.75]);
        let boundary: Vec<f64> = g.boundary_nodes().iter().map(|&i| g.node_point(i)[0]).collect();
        assert_eq!(boundary, vec![0.0, 1.0]);
        assert!(matches!(
            build_grid(&dom, &[2.0]),
            Err(LandscapeError::GridTooCoarse { .. })
        ));

        let disk = DomainGeometry::disk(&[0.0, 0.0], 1.0).unwrap();
        let g = build_grid(&disk, &[0.5]).unwrap();
        for i in g.interior_nodes() {
            let p = g.node_point(i);
            assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
        }
        assert_eq!(g.interior_nodes().len(), 9);
        for i in g.boundary_nodes() {
            assert!(g.neighbors(i).any(|j| g.tag(j) == NodeTag::Interior));
            let a = g.anchor(i);
            assert!((norm(&a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn builtins_parse_and_reject_unknown() {
        for name in BUILTIN_NAMES {
            PotentialField::builtin(name, &BTreeMap::new()).unwrap();
        }
        assert!(matches!(
            PotentialField::builtin("nope", &BTreeMap::new()),
            Err(LandscapeError::UnknownBuiltin(_))
        ));
        let mut p = BTreeMap::new();
        p.insert("bogus".to_string(), 1.0);
        assert!(PotentialField::builtin("double_well_1d", &p).is_err());
    }

    #[test]
    fn tie_constants() {
        let q = PotentialField::builtin("tied_quintic_1d", &BTreeMap::new()).unwrap();
        assert!((q.value(&[TIED_QUINTIC_LEFT]) - q.value(&[0.0])).abs() < 1e-14);
        let t = PotentialField::builtin("three_well_2d", &BTreeMap::new()).unwrap();
        assert!(t.value(&[-THREE_WELL_TIE_RADIUS, 0.0]).is_finite());
    }

    #[test]
    fn shifted_and_scaled() {
        let f = dw();
        let g = f.shifted(3.0);
        assert!((g.value(&[0.3]) - f.value(&[0.3]) - 3.0).abs() < 1e-14);
        let s = f.scaled(2.0);
        assert!((s.gradient(&[0.7])[0] - 2.0 * f.gradient(&[0.7])[0]).abs() < 1e-14);
    }
}
