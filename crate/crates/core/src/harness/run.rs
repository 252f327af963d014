//! Experiment orchestration.

use rand::Rng;
use thiserror::Error;

use super::compare::compare;
use super::config::{ConfigError, ConfigFile, DecayTarget, ExperimentConfig, ExperimentKind, StartSpec};
use super::report::{
    ActionReport, Artifact, EigenSummary, ExperimentReport, HalvingReport, McReport, OracleReport, PdeReport,
    TemperatureReport, VerificationReport, VERSION,
};
use crate::action::minimize_action;
use crate::exitlaw::{exact_exit_probability_1d, exact_mean_exit_time_1d, predicted_concentration_set, ExitLaw};
use crate::landscape::{build_grid, distance, DomainGeometry, GridDiscretization, PotentialField};
use crate::morse::{analyze, sublevel_component, LandscapeReport};
use crate::pde::{
    boundary_data, leveling_oscillation, principal_eigenpair, qsd_exit_law, solve_harmonic, write_node_values_csv,
    Eigenpair, WeightedOperator,
};
use crate::sde::{
    decay_rate_fit, default_dt, estimate_observable, histogram, path_rng, simulate_exit, write_samples_csv,
    BoundaryRegion, DecayPoint, ExitHistogram, RegionShape, SimConfig,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Command-line overrides applied to every experiment.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub kind: Option<ExperimentKind>,
}

/// Runs the experiments in order. Failures inside an experiment are recorded
/// in its `errors` and the results computed before them are kept.
pub fn run(cfg: &ConfigFile, opts: &RunOptions) -> Result<(VerificationReport, Vec<Artifact>), HarnessError> {
    let mut cfg = cfg.clone();
    for exp in &mut cfg.experiments {
        if let Some(seed) = opts.seed {
            exp.mc.seed = seed;
        }
        if let Some(kind) = opts.kind {
            exp.kind = kind;
        }
    }
    cfg.validate()?;
    let mut experiments = Vec::new();
    let mut artifacts = Vec::new();
    for exp in &cfg.experiments {
        let (rep, mut arts) = run_experiment(exp);
        experiments.push(rep);
        artifacts.append(&mut arts);
    }
    Ok((
        VerificationReport {
            version: VERSION.to_string(),
            config: cfg,
            experiments,
        },
        artifacts,
    ))
}

pub fn run_experiment(exp: &ExperimentConfig) -> (ExperimentReport, Vec<Artifact>) {
    let mut rep = ExperimentReport::empty(&exp.name, exp.kind);
    let mut arts = Vec::new();
    if let Err(e) = run_inner(exp, &mut rep, &mut arts) {
        rep.errors.push(e);
    }
    (rep, arts)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn lowest_c_max_minimum(landscape: Option<&LandscapeReport>) -> Result<Vec<f64>, String> {
    let well = landscape
        .and_then(|l| l.c_max_well())
        .ok_or("no deepest well to start from")?;
    well.member_minima
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .map(|m| m.location.clone())
        .ok_or_else(|| "deepest well has no minimum".to_string())
}

/// Endpoints in 1D, otherwise balls of radius `beta` around the support,
/// with `beta` defaulting to a fifth of the smallest pairwise distance.
pub fn regions_around_support(dom: &DomainGeometry, law: &ExitLaw, beta: Option<f64>) -> Vec<BoundaryRegion> {
    if dom.dim() == 1 {
        return law
            .support
            .iter()
            .enumerate()
            .map(|(i, z)| BoundaryRegion {
                label: format!("z{i}"),
                shape: RegionShape::Endpoint { x: z.point[0] },
            })
            .collect();
    }
    let beta = beta.unwrap_or_else(|| {
        let mut best = f64::INFINITY;
        for i in 0..law.support.len() {
            for j in (i + 1)..law.support.len() {
                best = best.min(distance(&law.support[i].point, &law.support[j].point));
            }
        }
        if best.is_finite() {
            0.2 * best
        } else {
            let (lo, hi) = dom.bounding_box();
            0.2 * distance(&lo, &hi)
        }
    });
    law.support
        .iter()
        .enumerate()
        .map(|(i, z)| BoundaryRegion {
            label: format!("z{i}"),
            shape: RegionShape::Ball {
                center: z.point.clone(),
                radius: beta,
            },
        })
        .collect()
}

fn run_inner(exp: &ExperimentConfig, rep: &mut ExperimentReport, arts: &mut Vec<Artifact>) -> Result<(), String> {
    let f = PotentialField::from_source(&exp.potential).map_err(s)?;
    let dom = DomainGeometry::from_spec(&exp.domain).map_err(s)?;
    if exp.kind == ExperimentKind::Action {
        return run_action(exp, &f, &dom, rep, arts);
    }
    let grid = build_grid(&dom, &exp.grid.spacing).map_err(s)?;
    let named = matches!(exp.start, Some(StartSpec::Named(_)));
    let derive_regions = exp.regions.explicit.is_empty();
    let need_landscape = matches!(
        exp.kind,
        ExperimentKind::Analyze | ExperimentKind::Theory | ExperimentKind::Verify
    ) || derive_regions
        || named;
    if need_landscape {
        rep.landscape = Some(analyze(&f, &dom, &grid).map_err(s)?);
    }
    if exp.kind == ExperimentKind::Analyze {
        return Ok(());
    }
    let fixed_start: Option<Vec<Vec<f64>>> = match &exp.start {
        Some(StartSpec::Point(p)) => Some(vec![p.clone()]),
        Some(StartSpec::Points(ps)) => Some(ps.clone()),
        Some(StartSpec::Named(n)) if n == "c_max" => Some(vec![lowest_c_max_minimum(rep.landscape.as_ref())?]),
        _ => None,
    };
    let reference_start = match &fixed_start {
        Some(ps) => ps[0].clone(),
        None => lowest_c_max_minimum(rep.landscape.as_ref())?,
    };
    if let Some(landscape) = &rep.landscape {
        if matches!(exp.kind, ExperimentKind::Theory | ExperimentKind::Verify) || derive_regions {
            match predicted_concentration_set(&f, &dom, &grid, landscape, &reference_start) {
                Ok(law) => rep.exit_law = Some(law),
                Err(e) => rep.theory_error = Some(e.to_string()),
            }
        }
    }
    if exp.kind == ExperimentKind::Theory {
        return Ok(());
    }
    let regions = if !derive_regions {
        exp.regions.explicit.clone()
    } else if let Some(law) = &rep.exit_law {
        regions_around_support(&dom, law, exp.regions.beta)
    } else {
        rep.warnings
            .push("no predicted support and no explicit regions; every exit counts as leftover".into());
        Vec::new()
    };
    if let Some(law) = &rep.exit_law {
        rep.region_weights = regions
            .iter()
            .map(|r| {
                law.support
                    .iter()
                    .zip(&law.weights)
                    .filter(|(z, _)| r.contains(&z.point))
                    .map(|(_, w)| w)
                    .fold(0.0, |acc, w| acc + w)
            })
            .collect();
    }
    rep.regions = regions.clone();
    let ctx = Context {
        exp,
        f: &f,
        dom: &dom,
        grid: &grid,
        regions: &regions,
        fixed_start: fixed_start.as_deref(),
        reference_start: &reference_start,
    };
    for &h in &exp.temperatures {
        match run_temperature(&ctx, h, rep, arts) {
            Ok(t) => rep.temperatures.push(t),
            Err(e) => rep.errors.push(format!("h = {h}: {e}")),
        }
    }
    if let Some(target) = &exp.decay {
        fit_decay(exp, target, rep, arts);
    }
    if !rep.temperatures.iter().all(|t| t.mc.is_none()) {
        arts.push(histogram_plotdata(exp, rep));
    }
    Ok(())
}

struct Context<'a> {
    exp: &'a ExperimentConfig,
    f: &'a PotentialField,
    dom: &'a DomainGeometry,
    grid: &'a GridDiscretization,
    regions: &'a [BoundaryRegion],
    fixed_start: Option<&'a [Vec<f64>]>,
    reference_start: &'a [f64],
}

fn sample_qsd(grid: &GridDiscretization, eig: &Eigenpair, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for q in &eig.qsd {
        acc += q;
        cumulative.push(acc);
    }
    let mut rng = path_rng(seed, usize::MAX);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let node = cumulative.partition_point(|c| *c <= u).min(grid.len() - 1);
            grid.node_point(node)
        })
        .collect()
}

fn run_temperature(
    ctx: &Context,
    h: f64,
    rep: &mut ExperimentReport,
    arts: &mut Vec<Artifact>,
) -> Result<TemperatureReport, String> {
    let exp = ctx.exp;
    let mut t = TemperatureReport {
        h,
        mc: None,
        oracle: None,
        pde: None,
        verdicts: Vec::new(),
    };
    let linear = exp.solver.linear;
    let need_eigen = ctx.fixed_start.is_none() || (exp.kind.solves() && exp.solver.eigen);
    let mut op = if exp.kind.solves() || need_eigen {
        Some(WeightedOperator::assemble(ctx.f, ctx.grid, h).map_err(s)?)
    } else {
        None
    };
    let eig = match (&mut op, need_eigen) {
        (Some(op), true) => Some(principal_eigenpair(op, linear).map_err(s)?),
        _ => None,
    };
    let mut data: Vec<Vec<f64>> = ctx
        .regions
        .iter()
        .map(|r| boundary_data(ctx.grid, &|z| if r.contains(z) { 1.0 } else { 0.0 }))
        .collect();
    if let Some(obs) = &exp.observable {
        data.push(boundary_data(ctx.grid, &|z| obs.eval(z)));
    }
    let n_regions = ctx.regions.len();

    if let (true, Some(op)) = (exp.kind.solves(), op.as_mut()) {
        let start_node = ctx.grid.nearest_interior_node(ctx.reference_start);
        let mut sols = Vec::new();
        for d in &data {
            sols.push(solve_harmonic(op, d, linear).map_err(s)?);
        }
        let at_start: Vec<f64> = match start_node {
            Some(n) => sols.iter().map(|v| v.values[n]).collect(),
            None => Vec::new(),
        };
        let mut oscillations = Vec::new();
        let mut leveling_nodes = 0;
        if let Some(level) = exp.solver.leveling_level {
            let values = ctx.grid.node_values(ctx.f);
            let k = sublevel_component(ctx.grid, &values, level, ctx.reference_start).map_err(s)?;
            leveling_nodes = k.len();
            for v in &sols {
                oscillations.push(leveling_oscillation(v, &k).map_err(s)?);
            }
        }
        let eigen = match &eig {
            Some(e) => {
                let q = qsd_exit_law(op, e, &data, linear).map_err(s)?;
                Some(EigenSummary {
                    lambda: e.lambda,
                    lambda2: e.lambda2,
                    log_z: e.log_z,
                    residual: e.residual,
                    qsd_region_probabilities: q[..n_regions].to_vec(),
                    qsd_observable: q.get(n_regions).copied(),
                })
            }
            None => None,
        };
        if exp.solver.write_solutions {
            let labels = ctx
                .regions
                .iter()
                .map(|r| r.label.clone())
                .chain(exp.observable.iter().map(|_| "observable".to_string()));
            for (label, v) in labels.zip(&sols) {
                let mut buf = Vec::new();
                write_node_values_csv(ctx.grid, &v.values, &mut buf).map_err(s)?;
                arts.push(Artifact {
                    path: format!("{}/h_{h}_v_{label}.csv", exp.name),
                    contents: buf,
                });
            }
        }
        t.pde = Some(PdeReport {
            region_probabilities: at_start.iter().take(n_regions).copied().collect(),
            observable_value: if exp.observable.is_some() {
                at_start.last().copied()
            } else {
                None
            },
            leveling_oscillations: oscillations,
            leveling_nodes,
            max_residual: sols.iter().map(|v| v.residual).fold(0.0, f64::max),
            eigen,
        });
    }

    if exp.kind.simulates() {
        let starts = match (ctx.fixed_start, &eig) {
            (Some(ps), _) => ps.to_vec(),
            (None, Some(e)) => sample_qsd(ctx.grid, e, exp.mc.n_paths, exp.mc.seed),
            (None, None) => return Err("no start points".into()),
        };
        let dt = exp.mc.dt.unwrap_or_else(|| default_dt(ctx.f, ctx.dom, h));
        let cfg = SimConfig {
            h,
            dt,
            max_time: exp.mc.max_time.unwrap_or(f64::INFINITY),
            n_paths: exp.mc.n_paths,
            seed: exp.mc.seed,
            starts,
        };
        for w in cfg.warnings(ctx.f, ctx.dom) {
            rep.warnings.push(format!("h = {h}: {w}"));
        }
        let samples = simulate_exit(ctx.f, ctx.dom, &cfg).map_err(s)?;
        let hist = histogram(&samples, ctx.regions, ctx.dom).map_err(s)?;
        let exited: Vec<f64> = samples.iter().filter(|x| !x.censored).map(|x| x.exit_time).collect();
        let mean_exit_time = if exited.is_empty() {
            f64::NAN
        } else {
            exited.iter().sum::<f64>() / exited.len() as f64
        };
        let observable = match &exp.observable {
            Some(obs) => match estimate_observable(&samples, &|z| obs.eval(z)) {
                Ok(o) => Some(o),
                Err(e) => {
                    rep.warnings.push(format!("h = {h}: {e}"));
                    None
                }
            },
            None => None,
        };
        if exp.mc.write_samples {
            let mut buf = Vec::new();
            write_samples_csv(&samples, &mut buf).map_err(s)?;
            arts.push(Artifact {
                path: format!("{}/h_{h}_samples.csv", exp.name),
                contents: buf,
            });
        }
        drop(samples);
        let halved = if exp.mc.dt_halving {
            let half = SimConfig {
                dt: 0.5 * dt,
                ..cfg.clone()
            };
            let samples = simulate_exit(ctx.f, ctx.dom, &half).map_err(s)?;
            let h2 = histogram(&samples, ctx.regions, ctx.dom).map_err(s)?;
            let shift = max_shift_sigma(&hist, &h2);
            Some(HalvingReport {
                dt: half.dt,
                histogram: h2,
                max_shift_sigma: shift,
                within_3sigma: shift < 3.0,
            })
        } else {
            None
        };
        t.mc = Some(McReport {
            dt,
            max_time: cfg.max_time,
            histogram: hist,
            mean_exit_time,
            observable,
            halved,
        });
    }

    if let (Some((a, b)), Some([x])) = (ctx.dom.as_interval(), ctx.fixed_start) {
        let p = exact_exit_probability_1d(ctx.f, (a, b), x[0], h).map_err(s)?;
        let region_probabilities = ctx
            .regions
            .iter()
            .map(|r| {
                let mut q = 0.0;
                if r.contains(&[a]) {
                    q += p.left;
                }
                if r.contains(&[b]) {
                    q += p.right;
                }
                q
            })
            .collect();
        t.oracle = Some(OracleReport {
            left: p.left,
            right: p.right,
            region_probabilities,
            mean_exit_time: exact_mean_exit_time_1d(ctx.f, (a, b), x[0], h, 20_000),
        });
    }

    if exp.kind == ExperimentKind::Verify {
        if let Some(mc) = &t.mc {
            let oracle = match (exp.oracle_tolerance, &t.oracle) {
                (Some(_), Some(o)) => Some(o.region_probabilities.as_slice()),
                _ => None,
            };
            match compare(
                &rep.region_weights,
                &mc.histogram,
                oracle,
                exp.oracle_tolerance.unwrap_or(f64::INFINITY),
            ) {
                Ok(v) => t.verdicts = v,
                Err(e) => rep.errors.push(format!("h = {h}: {e}")),
            }
        }
    }
    Ok(t)
}

fn max_shift_sigma(a: &ExitHistogram, b: &ExitHistogram) -> f64 {
    let (na, nb) = (a.n_paths.max(1) as f64, b.n_paths.max(1) as f64);
    let pairs = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(x, y)| (*x, *y))
        .chain(std::iter::once((a.leftover, b.leftover)));
    pairs
        .map(|(x, y)| {
            let (p, q) = (x as f64 / na, y as f64 / nb);
            let se = (p * (1.0 - p) / na + q * (1.0 - q) / nb).sqrt();
            if se > 0.0 {
                (p - q).abs() / se
            } else if p == q {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn fit_decay(exp: &ExperimentConfig, target: &DecayTarget, rep: &mut ExperimentReport, arts: &mut Vec<Artifact>) {
    let mut points = Vec::new();
    for t in &rep.temperatures {
        let Some(mc) = &t.mc else { continue };
        let hist = &mc.histogram;
        let k = match target {
            DecayTarget::Leftover => Some(hist.leftover),
            DecayTarget::Region(label) => hist.labels.iter().position(|l| l == label).map(|i| hist.counts[i]),
        };
        let Some(k) = k else {
            rep.errors.push(format!("decay target {target:?} is not a region"));
            return;
        };
        let n = hist.n_paths;
        let p = k as f64 / n as f64;
        points.push(DecayPoint {
            h: t.h,
            p,
            sigma: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        });
    }
    let mut csv = String::from("h,inv_h,p,ln_p,sigma\n");
    for pt in &points {
        csv.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            pt.h,
            1.0 / pt.h,
            pt.p,
            pt.p.ln(),
            pt.sigma
        ));
    }
    arts.push(Artifact {
        path: format!("plotdata/{}_decay.csv", exp.name),
        contents: csv.into_bytes(),
    });
    match decay_rate_fit(&points) {
        Ok(fit) => rep.decay_fit = Some(fit),
        Err(e) => rep.errors.push(format!("decay fit: {e}")),
    }
}

fn histogram_plotdata(exp: &ExperimentConfig, rep: &ExperimentReport) -> Artifact {
    let mut csv = String::from("h,region,count,proportion,wilson_lo,wilson_hi,predicted\n");
    for t in &rep.temperatures {
        let Some(mc) = &t.mc else { continue };
        let hist = &mc.histogram;
        for (i, label) in hist.labels.iter().enumerate() {
            let predicted = rep.region_weights.get(i).copied().unwrap_or(f64::NAN);
            csv.push_str(&format!(
                "{},{label},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                t.h, hist.counts[i], hist.proportions[i], hist.wilson95[i].0, hist.wilson95[i].1, predicted
            ));
        }
        let n = hist.n_paths.max(1) as f64;
        csv.push_str(&format!(
            "{},leftover,{},{:.17e},,,\n",
            t.h,
            hist.leftover,
            hist.leftover as f64 / n
        ));
        csv.push_str(&format!(
            "{},censored,{},{:.17e},,,\n",
            t.h,
            hist.censored,
            hist.censored as f64 / n
        ));
    }
    Artifact {
        path: format!("plotdata/{}_histogram.csv", exp.name),
        contents: csv.into_bytes(),
    }
}

fn run_action(
    exp: &ExperimentConfig,
    f: &PotentialField,
    dom: &DomainGeometry,
    rep: &mut ExperimentReport,
    arts: &mut Vec<Artifact>,
) -> Result<(), String> {
    let a = exp.action.as_ref().ok_or("[action] table required")?;
    let m = minimize_action(f, Some(dom), &a.from, &a.to, a.total_time, a.segments, a.iterations).map_err(s)?;
    if m.line_search_stalled {
        rep.warnings
            .push("line search stalled; reporting the best path found".into());
    }
    let mut buf = Vec::new();
    m.path.write_csv(&mut buf).map_err(s)?;
    arts.push(Artifact {
        path: format!("{}/action_path.csv", exp.name),
        contents: buf,
    });
    rep.action = Some(ActionReport {
        value: m.action.value,
        iterations: m.iterations,
        line_search_stalled: m.line_search_stalled,
        barrier_reference: 2.0 * (f.value(&a.to) - f.value(&a.from)),
    });
    Ok(())
}
