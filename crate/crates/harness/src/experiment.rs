//! Experiment pipelines: one per subcommand.
//!
//! Every (rung, seed) solve is an independent job; jobs run on the current
//! rayon pool and are reduced in (rung, seed) order, so results do not
//! depend on the number of threads.

use rayon::prelude::*;
use zakai_core::correctors::recommended_points;
use zakai_core::{
    expansion_residual, extrapolate_derivative, richardson_combine, run_corrector_system,
    run_reference_time_scheme, run_space_time_scheme, sample_increments, vandermonde_weights, BrownianIncrements,
    ConvergenceReport, CorrectorSet, DifferenceScheme, DifferentialProblem, OrderBand, ReferenceMode, TorusGrid,
    Trajectory,
};

use crate::config::{ConfigError, ExperimentSpec, ReferenceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Converge,
    Accelerate,
    Correctors,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converge => "converge",
            Self::Accelerate => "accelerate",
            Self::Correctors => "correctors",
        }
    }
}

/// Seed-aggregated norms at one time step of one rung.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub i: usize,
    pub t: f64,
    /// Root mean square over seeds.
    pub sup_error: f64,
    pub l2h_error: f64,
    /// Mean over seeds of `l2h(v_i)`.
    pub solution_l2h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RungSummary {
    pub h: f64,
    pub rows: Vec<StepRow>,
    /// Root mean square over seeds of `max_i sup |e_i|`.
    pub sup_error: f64,
    pub l2h_error: f64,
    /// Mean over seeds of `max_i l2h(v_i)`.
    pub solution_max_l2h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorRow {
    pub p: usize,
    /// Root mean square over seeds of `max_i sup |v^(p)_i|`.
    pub max_sup: f64,
    pub ratio_to_v0: f64,
}

#[derive(Debug, Clone)]
pub struct CorrectorSummary {
    pub k: usize,
    pub rows: Vec<CorrectorRow>,
    pub symmetric: bool,
    /// Odd correctors of a symmetric scheme within `1e-9` of `v^(0)`.
    pub odd_vanish: bool,
    pub under_resolved: bool,
    /// The set for the first seed, for export.
    pub first: CorrectorSet,
}

/// Largest odd-corrector size, relative to `v^(0)`, accepted as zero.
pub const ODD_CORRECTOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LadderOutcome {
    pub pipeline: Pipeline,
    pub band: OrderBand,
    /// Complete rungs, coarsest first.
    pub rungs: Vec<RungSummary>,
    /// Present when at least two rungs completed.
    pub report: Option<ConvergenceReport>,
    pub correctors: Option<CorrectorSummary>,
    pub failure: Option<String>,
    pub synthetic: bool,
}

impl LadderOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self.report.as_ref().is_some_and(|r| r.pass)
            && self.correctors.as_ref().is_none_or(|c| c.odd_vanish)
    }

    pub fn hs(&self) -> Vec<f64> {
        self.rungs.iter().map(|r| r.h).collect()
    }

    /// Least-squares order of the reported sup errors.
    pub fn order(&self) -> Option<f64> {
        self.report.as_ref().and_then(|r| r.estimate.least_squares)
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e}"),
            Self::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

fn config_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(ConfigError(e.to_string()))
}

struct Setup {
    problem: DifferentialProblem,
    scheme: DifferenceScheme,
    grids: Vec<TorusGrid>,
    rungs: usize,
    increments: Vec<BrownianIncrements>,
    spectral: bool,
}

fn setup(spec: &ExperimentSpec, extra_levels: usize) -> Result<Setup, RunError> {
    spec.validate()?;
    spec.validate_ladder()?;
    let problem = spec.build_problem()?;
    let scheme = spec.build_scheme(&problem);
    let base = spec.base_grid()?;
    let rungs = spec.ladder.rungs;
    let grids = (0..rungs + extra_levels).map(|j| base.refined(1 << j)).collect();
    let spectral = match spec.reference.mode {
        ReferenceKind::Spectral => {
            if !problem.has_space_constant_coefficients() {
                return Err(config_err(
                    "reference.mode = \"spectral\" needs coefficients constant in space",
                ));
            }
            true
        }
        ReferenceKind::FineGrid => false,
        ReferenceKind::Auto => problem.has_space_constant_coefficients(),
    };
    let increments = if spec.expect.synthetic_order.is_some() {
        Vec::new()
    } else {
        spec.run
            .seeds
            .iter()
            .map(|s| sample_increments(spec.time.n, problem.drivers(), spec.tau(), *s))
            .collect::<Result<_, _>>()
            .map_err(config_err)?
    };
    Ok(Setup {
        problem,
        scheme,
        grids,
        rungs,
        increments,
        spectral,
    })
}

fn band_for(spec: &ExperimentSpec, predicted: f64) -> OrderBand {
    let e = &spec.expect;
    let expected = e.order.unwrap_or(predicted);
    OrderBand::new(
        expected,
        e.min_order.unwrap_or(expected - e.tolerance),
        e.max_order.unwrap_or(expected + e.tolerance),
    )
}

/// Predicted sup-error order of the ladder pipelines.
pub fn predicted_order(symmetric: bool, level: usize) -> f64 {
    if symmetric {
        2.0 * (level as f64 + 1.0)
    } else {
        level as f64 + 1.0
    }
}

/// Predicted order of the expansion residual with correctors up to `k`:
/// the first power of `h` not cancelled.
pub fn predicted_residual_order(symmetric: bool, k: usize) -> f64 {
    if symmetric && k.is_multiple_of(2) {
        (k + 2) as f64
    } else {
        (k + 1) as f64
    }
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-seed error trajectory data of one rung.
struct SeedErrors {
    sup: Vec<f64>,
    l2h: Vec<f64>,
    solution_l2h: Vec<f64>,
}

fn summarize(h: f64, tau: f64, seeds: &[SeedErrors]) -> RungSummary {
    let steps = seeds[0].sup.len();
    let rows = (0..steps)
        .map(|i| StepRow {
            i,
            t: i as f64 * tau,
            sup_error: rms(seeds.iter().map(|s| s.sup[i])),
            l2h_error: rms(seeds.iter().map(|s| s.l2h[i])),
            solution_l2h: mean(seeds.iter().map(|s| s.solution_l2h[i])),
        })
        .collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    RungSummary {
        h,
        rows,
        sup_error: rms(seeds.iter().map(|s| max(&s.sup))),
        l2h_error: rms(seeds.iter().map(|s| max(&s.l2h))),
        solution_max_l2h: mean(seeds.iter().map(|s| max(&s.solution_l2h))),
    }
}

fn finish(
    pipeline: Pipeline,
    band: OrderBand,
    rungs: Vec<RungSummary>,
    correctors: Option<CorrectorSummary>,
    failure: Option<String>,
    synthetic: bool,
) -> Result<LadderOutcome, RunError> {
    let report = if rungs.len() >= 2 {
        Some(
            ConvergenceReport::new(
                rungs.iter().map(|r| r.h).collect(),
                rungs.iter().map(|r| r.sup_error).collect(),
                rungs.iter().map(|r| r.l2h_error).collect(),
                Some(band),
            )
            .map_err(|e| RunError::Solver(format!("order fit: {e}")))?,
        )
    } else {
        None
    };
    Ok(LadderOutcome {
        pipeline,
        band,
        rungs,
        report,
        correctors,
        failure,
        synthetic,
    })
}

fn synthetic(pipeline: Pipeline, band: OrderBand, hs: &[f64], p: f64) -> Result<LadderOutcome, RunError> {
    let rungs = hs
        .iter()
        .map(|h| RungSummary {
            h: *h,
            rows: Vec::new(),
            sup_error: h.powf(p),
            l2h_error: h.powf(p),
            solution_max_l2h: 0.0,
        })
        .collect();
    finish(pipeline, band, rungs, None, None, true)
}

enum Job {
    Reference(usize),
    Scheme(usize, usize),
    Correctors(usize),
}

/// Converge (`accelerate = false`, no extrapolation) or accelerate.
pub fn run_ladder(spec: &ExperimentSpec, accelerate: bool) -> Result<LadderOutcome, RunError> {
    let pipeline = if accelerate { Pipeline::Accelerate } else { Pipeline::Converge };
    let probe = spec.build_problem()?;
    let symmetric = spec.build_scheme(&probe).is_symmetric();
    let (level, base) = if accelerate {
        spec.weights_level_and_base(symmetric)
    } else {
        (0, if symmetric { 4 } else { 2 })
    };
    let weights = vandermonde_weights(level, base).map_err(config_err)?;
    let s = setup(spec, level)?;
    let band = band_for(spec, predicted_order(symmetric, level));
    let hs: Vec<f64> = s.grids[..s.rungs].iter().map(TorusGrid::h).collect();
    if let Some(p) = spec.expect.synthetic_order {
        return synthetic(pipeline, band, &hs, p);
    }
    let n = spec.time.n;
    let seeds = s.increments.len();
    let total = s.grids.len();
    let mode = if s.spectral {
        ReferenceMode::Spectral
    } else {
        ReferenceMode::FineGrid {
            levels: spec.reference.levels,
        }
    };
    let ref_base = if s.spectral { &s.grids[s.rungs - 1] } else { &s.grids[total - 1] };

    let jobs: Vec<Job> = (0..seeds)
        .flat_map(|sd| std::iter::once(Job::Reference(sd)).chain((0..total).map(move |j| Job::Scheme(sd, j))))
        .collect();
    let results: Vec<Result<Trajectory, String>> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Reference(sd) => run_reference_time_scheme(&s.problem, mode, ref_base, n, &s.increments[sd])
                .map_err(|e| format!("reference, seed {}: {e}", spec.run.seeds[sd])),
            Job::Scheme(sd, j) => run_space_time_scheme(&s.problem, &s.scheme, &s.grids[j], n, &s.increments[sd])
                .map_err(|e| format!("h = {}, seed {}: {e}", s.grids[j].h(), spec.run.seeds[sd])),
            Job::Correctors(_) => unreachable!(),
        })
        .collect();
    let per_seed: Vec<&[Result<Trajectory, String>]> = results.chunks(total + 1).collect();

    let mut rungs = Vec::new();
    let mut failure = None;
    'rung: for m in 0..s.rungs {
        let grid = &s.grids[m];
        let mut errs = Vec::with_capacity(seeds);
        for chunk in &per_seed {
            let needed = std::iter::once(&chunk[0]).chain(&chunk[1 + m..1 + m + level + 1]);
            if let Some(Err(e)) = needed.clone().find(|r| r.is_err()) {
                failure = Some(e.clone());
                break 'rung;
            }
            let reference = chunk[0].as_ref().expect("checked");
            let sols: Vec<Trajectory> = chunk[1 + m..1 + m + level + 1]
                .iter()
                .map(|r| r.as_ref().expect("checked").clone())
                .collect();
            match rung_errors(spec, &sols, reference, grid, &weights) {
                Ok(e) => errs.push(e),
                Err(e) => {
                    failure = Some(format!("h = {}: {e}", grid.h()));
                    break 'rung;
                }
            }
        }
        rungs.push(summarize(grid.h(), spec.tau(), &errs));
    }
    finish(pipeline, band, rungs, None, failure, false)
}

fn rung_errors(
    spec: &ExperimentSpec,
    sols: &[Trajectory],
    reference: &Trajectory,
    grid: &TorusGrid,
    weights: &zakai_core::RichardsonWeights,
) -> zakai_core::Result<SeedErrors> {
    let factor = reference
        .grid()
        .refinement_factor(grid)
        .ok_or_else(|| zakai_core::Error::GridMismatch("reference grid does not refine the rung".into()))?;
    let mut reference = reference.restrict(factor)?;
    let lambdas = &spec.extrapolation.derivative;
    let approx = if lambdas.is_empty() {
        richardson_combine(sols, weights)?
    } else {
        let h = grid.h();
        reference = reference.map(|f| f.composed_difference(lambdas, h))?;
        extrapolate_derivative(sols, lambdas, weights)?
    };
    let mut out = SeedErrors {
        sup: Vec::new(),
        l2h: Vec::new(),
        solution_l2h: Vec::new(),
    };
    for i in 0..=approx.steps() {
        let e = approx.field(i).sub(reference.field(i)).norms();
        out.sup.push(e.sup);
        out.l2h.push(e.l2h);
        out.solution_l2h.push(sols[0].field(i).l2h_norm());
    }
    Ok(out)
}

/// Verifies the expansion `v^h = sum_{j <= k} h^j / j! v^(j) + r^h` on the
/// ladder; `extrapolation.k` is the corrector order.
pub fn run_correctors(spec: &ExperimentSpec) -> Result<LadderOutcome, RunError> {
    let k = spec.extrapolation.k;
    if k > zakai_core::correctors::MAX_ORDER {
        return Err(config_err(format!("corrector order {k} is above {}", zakai_core::correctors::MAX_ORDER)));
    }
    let s = setup(spec, 0)?;
    let symmetric = s.scheme.is_symmetric();
    let band = band_for(spec, predicted_residual_order(symmetric, k));
    let hs: Vec<f64> = s.grids.iter().map(TorusGrid::h).collect();
    if let Some(p) = spec.expect.synthetic_order {
        return synthetic(Pipeline::Correctors, band, &hs, p);
    }
    let finest = &s.grids[s.rungs - 1];
    let refgrid = if s.spectral {
        let need = recommended_points(k);
        let mut g = finest.clone();
        while g.points().iter().any(|&p| p < need) {
            g = g.refined(2);
        }
        g
    } else {
        finest.refined(1 << spec.reference.levels)
    };
    let n = spec.time.n;
    let seeds = s.increments.len();
    let jobs: Vec<Job> = (0..seeds)
        .flat_map(|sd| std::iter::once(Job::Correctors(sd)).chain((0..s.rungs).map(move |j| Job::Scheme(sd, j))))
        .collect();
    enum Out {
        Set(CorrectorSet),
        Traj(Trajectory),
    }
    let results: Vec<Result<Out, String>> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Correctors(sd) => run_corrector_system(k, &s.problem, &s.scheme, &refgrid, n, &s.increments[sd])
                .map(Out::Set)
                .map_err(|e| format!("correctors, seed {}: {e}", spec.run.seeds[sd])),
            Job::Scheme(sd, j) => run_space_time_scheme(&s.problem, &s.scheme, &s.grids[j], n, &s.increments[sd])
                .map(Out::Traj)
                .map_err(|e| format!("h = {}, seed {}: {e}", s.grids[j].h(), spec.run.seeds[sd])),
            Job::Reference(_) => unreachable!(),
        })
        .collect();
    let per_seed: Vec<&[Result<Out, String>]> = results.chunks(s.rungs + 1).collect();

    let mut failure = None;
    let sets: Vec<&CorrectorSet> = per_seed
        .iter()
        .filter_map(|c| match &c[0] {
            Ok(Out::Set(cs)) => Some(cs),
            Err(e) => {
                failure.get_or_insert_with(|| e.clone());
                None
            }
            Ok(Out::Traj(_)) => unreachable!(),
        })
        .collect();
    let mut rungs = Vec::new();
    if failure.is_none() {
        'rung: for m in 0..s.rungs {
            let grid = &s.grids[m];
            let mut errs = Vec::with_capacity(seeds);
            for (chunk, cs) in per_seed.iter().zip(&sets) {
                let vh = match &chunk[1 + m] {
                    Ok(Out::Traj(t)) => t,
                    Err(e) => {
                        failure = Some(e.clone());
                        break 'rung;
                    }
                    Ok(Out::Set(_)) => unreachable!(),
                };
                match expansion_residual(vh, cs, grid.h(), k) {
                    Ok(r) => errs.push(SeedErrors {
                        sup: r.per_step.iter().map(|x| x.sup).collect(),
                        l2h: r.per_step.iter().map(|x| x.l2h).collect(),
                        solution_l2h: vh.fields().iter().map(|f| f.l2h_norm()).collect(),
                    }),
                    Err(e) => {
                        failure = Some(format!("h = {}: {e}", grid.h()));
                        break 'rung;
                    }
                }
            }
            rungs.push(summarize(grid.h(), spec.tau(), &errs));
        }
    }
    let summary = (!sets.is_empty() && failure.is_none()).then(|| {
        let sizes: Vec<f64> = (0..=k).map(|p| rms(sets.iter().map(|cs| cs.corrector(p).max_sup()))).collect();
        let rows: Vec<CorrectorRow> = sizes
            .iter()
            .enumerate()
            .map(|(p, m)| CorrectorRow {
                p,
                max_sup: *m,
                ratio_to_v0: if sizes[0] > 0.0 { m / sizes[0] } else { 0.0 },
            })
            .collect();
        let odd_vanish = !symmetric || rows.iter().filter(|r| r.p % 2 == 1).all(|r| r.ratio_to_v0 <= ODD_CORRECTOR_TOL);
        CorrectorSummary {
            k,
            rows,
            symmetric,
            odd_vanish,
            under_resolved: sets[0].under_resolved(),
            first: sets[0].clone(),
        }
    });
    finish(Pipeline::Correctors, band, rungs, summary, failure, false)
}

/// Runs the scheme once per seed on the coarsest ladder grid.
pub fn run_solve(spec: &ExperimentSpec) -> Result<Vec<Trajectory>, RunError> {
    spec.validate()?;
    let problem = spec.build_problem()?;
    let scheme = spec.build_scheme(&problem);
    let grid = spec.base_grid()?;
    spec.run
        .seeds
        .par_iter()
        .map(|seed| {
            let incr = sample_increments(spec.time.n, problem.drivers(), spec.tau(), *seed).map_err(config_err)?;
            run_space_time_scheme(&problem, &scheme, &grid, spec.time.n, &incr)
                .map_err(|e| RunError::Solver(format!("seed {seed}: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn synthetic_orders_are_exact() {
        for p in [1.0, 2.5, 4.0] {
            let spec = parse_config(&format!(
                "[problem]\nname = \"heat1d\"\n[ladder]\nrungs = 4\n[expect]\nsynthetic_order = {p}\n"
            ))
            .unwrap();
            let out = run_ladder(&spec, false).unwrap();
            assert!((out.order().unwrap() - p).abs() < 1e-10);
            assert!(out.synthetic);
        }
    }

    #[test]
    fn deterministic_problem_ignores_seeds() {
        let text = "[problem]\nname = \"heat1d\"\n[time]\nn = 16\n[ladder]\nrungs = 2\n";
        let a = run_ladder(&parse_config(text).unwrap().with_seeds(vec![1]), false).unwrap();
        let b = run_ladder(&parse_config(text).unwrap().with_seeds(vec![99]), false).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.rungs, b.rungs);
    }

    #[test]
    fn predicted_orders() {
        assert_eq!(predicted_order(true, 0), 2.0);
        assert_eq!(predicted_order(true, 1), 4.0);
        assert_eq!(predicted_order(false, 1), 2.0);
        assert_eq!(predicted_residual_order(true, 2), 4.0);
        assert_eq!(predicted_residual_order(true, 3), 4.0);
        assert_eq!(predicted_residual_order(false, 2), 3.0);
    }

    #[test]
    fn small_correctors_run() {
        let spec = parse_config("[problem]\nname = \"heat1d\"\n[time]\nn = 8\n[extrapolation]\nk = 1\n").unwrap();
        let out = run_correctors(&spec).unwrap();
        let c = out.correctors.as_ref().unwrap();
        assert!(c.symmetric && c.odd_vanish);
        assert_eq!(c.rows.len(), 2);
        assert_eq!(out.rungs.len(), 3);
    }
}
