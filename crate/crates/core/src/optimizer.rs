//! Bayesian-optimization loop shared by the two planning problems:
//! the arrival rate minimizing `r(lambda)` and the placement `(K, spacing)`
//! maximizing `E(X)`.
//!
//! Each iteration fits the surrogate on inputs scaled to the unit box and
//! standardized observations, scores a fresh uniform batch of candidates with
//! the acquisition, evaluates the best candidate on the true objective, and
//! feeds the (predicted, actual) pair back into the adaptive threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{ei, AcquisitionKind, AcquisitionState};
use crate::aoi::RateObjective;
use crate::error::{domain, Error, Result};
use crate::sensing::{wakeup_expectation, DetectionContext, SensorLayout, SensorTemplate, WakeupParams};
use crate::surrogate::{GpFitter, KernelConfig, MlpConfig, MlpFitter, SurrogateFitter, SurrogateKind};

/// One axis of the search box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Dimension {
    Continuous { lo: f64, hi: f64 },
    /// Sampled through a continuous latent rounded to the nearest integer,
    /// ties at .5 rounding down.
    Integer { lo: i64, hi: i64 },
}

impl Dimension {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Continuous { lo, hi } => (lo, hi),
            Self::Integer { lo, hi } => (lo as f64, hi as f64),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Continuous { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            Self::Integer { lo, hi } => {
                if lo == hi {
                    return lo as f64;
                }
                let latent = rng.random_range(lo as f64 - 0.5..hi as f64 + 0.5);
                round_half_down(latent).clamp(lo as f64, hi as f64)
            }
        }
    }
}

pub fn round_half_down(x: f64) -> f64 {
    (x - 0.5).ceil()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    /// Lower bounds may equal upper bounds (a degenerate, single-point axis).
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(domain("search space needs at least one dimension"));
        }
        for d in &dims {
            let (lo, hi) = d.bounds();
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(domain(format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.dims.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(d, v)| {
                let (lo, hi) = d.bounds();
                *v >= lo && *v <= hi
            })
    }

    /// Maps a point into the unit box; degenerate axes map to 0.5.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .map(|(d, v)| {
                let (lo, hi) = d.bounds();
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.5
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Self::Minimize => 1.0,
            Self::Maximize => -1.0,
        }
    }
}

/// Periodic re-evaluation of the incumbent for time-varying objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub every: usize,
    pub rel_change: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            every: 5,
            rel_change: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub n_init: usize,
    pub batch: usize,
    pub iters: usize,
    pub bounds: SearchSpace,
    pub seed: u64,
    pub surrogate_kind: SurrogateKind,
    pub acquisition_kind: AcquisitionKind,
    /// Recalibration factor for the adaptive threshold.
    pub omega: f64,
    /// Discrepancy gate as a fraction of `|c_0|`.
    pub gate_factor: f64,
    /// GP observation noise, in standardized units.
    pub noise_var: f64,
    pub mlp: MlpConfig,
    pub drift: Option<DriftConfig>,
    /// Stop as soon as the best observed value reaches this level.
    #[serde(default)]
    pub stop_at: Option<f64>,
}

impl BoConfig {
    pub fn new(bounds: SearchSpace) -> Self {
        Self {
            n_init: 10,
            batch: 100,
            iters: 40,
            bounds,
            seed: 0,
            surrogate_kind: SurrogateKind::Gp,
            acquisition_kind: AcquisitionKind::Aei,
            omega: 0.1,
            gate_factor: 0.05,
            noise_var: 1e-6,
            mlp: MlpConfig::default(),
            drift: None,
            stop_at: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 || self.batch == 0 || self.iters == 0 {
            return Err(domain(format!(
                "n_init, batch and iters must be >= 1 (got {}, {}, {})",
                self.n_init, self.batch, self.iters
            )));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(domain(format!("omega must be >= 0, got {}", self.omega)));
        }
        if !(self.gate_factor.is_finite() && self.gate_factor >= 0.0) {
            return Err(domain(format!("gate factor must be >= 0, got {}", self.gate_factor)));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(domain(format!("noise variance must be >= 0, got {}", self.noise_var)));
        }
        if let Some(d) = self.drift {
            if d.every == 0 || !(d.rel_change >= 0.0) {
                return Err(domain(format!("invalid drift configuration {d:?}")));
            }
        }
        Ok(())
    }

    fn fitter(&self) -> Box<dyn SurrogateFitter> {
        match self.surrogate_kind {
            SurrogateKind::Gp => Box::new(GpFitter {
                kernel: KernelConfig::GridSearch,
                noise_var: self.noise_var,
            }),
            SurrogateKind::Mlp => Box::new(MlpFitter {
                config: self.mlp,
                seed: self.seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Initial uniform design.
    Init,
    /// Acquisition-selected evaluation.
    Bo,
    /// Drift-mode re-evaluation of the incumbent.
    Recheck,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Init => "init",
            Self::Bo => "bo",
            Self::Recheck => "recheck",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 0-based evaluation counter.
    pub eval: usize,
    /// 0 for the initial design, then 1..=iters.
    pub iteration: usize,
    pub phase: Phase,
    pub input: Vec<f64>,
    pub observed: f64,
    /// Best observed value so far, in the objective's own direction.
    pub best: f64,
    /// Threshold `c_t` the candidate was scored against.
    pub threshold: Option<f64>,
    pub predicted: Option<f64>,
    pub delta: Option<f64>,
    pub acquisition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub direction: Direction,
    pub records: Vec<TraceRecord>,
    pub best_input: Vec<f64>,
    pub best_value: f64,
}

impl BoTrace {
    fn new(direction: Direction) -> Self {
        Self {
            direction,
            records: Vec::new(),
            best_input: Vec::new(),
            best_value: f64::NAN,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    /// Best-so-far after the initial design (index 0) and after each BO
    /// iteration.
    pub fn best_by_iteration(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            let last_of_iteration = self
                .records
                .get(i + 1)
                .is_none_or(|next| next.iteration != r.iteration);
            if last_of_iteration {
                out.push(r.best);
            }
        }
        out
    }

    /// First iteration whose best-so-far is within `rel` of the final best.
    pub fn iterations_to_within(&self, rel: f64) -> usize {
        let curve = self.best_by_iteration();
        let target = self.best_value;
        curve
            .iter()
            .position(|b| (b - target).abs() <= rel * target.abs())
            .unwrap_or(curve.len().saturating_sub(1))
    }

    /// First evaluation index (1-based count) whose best-so-far clears `level`
    /// in the objective's direction.
    pub fn evaluations_to_reach(&self, level: f64) -> Option<usize> {
        self.records
            .iter()
            .position(|r| match self.direction {
                Direction::Minimize => r.best <= level,
                Direction::Maximize => r.best >= level,
            })
            .map(|i| i + 1)
    }
}

/// A failed run: the error and everything recorded before it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("optimization aborted after {} evaluations: {source}", partial.records.len())]
pub struct OptimizeError {
    pub source: Error,
    pub partial: BoTrace,
}

impl From<OptimizeError> for Error {
    fn from(e: OptimizeError) -> Self {
        e.source
    }
}

struct Observations {
    xs: Vec<Vec<f64>>,
    /// Internal (minimization) values.
    ys: Vec<f64>,
}

impl Observations {
    fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, y) in self.ys.iter().enumerate() {
            if *y < self.ys[best] {
                best = i;
            }
        }
        best
    }
}

fn standardize(ys: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (ys.iter().map(|y| (y - mean) / sd).collect(), mean, sd)
}

/// Runs the loop with an explicit surrogate fitter.
pub fn run_bo_with<F>(
    mut objective: F,
    direction: Direction,
    config: &BoConfig,
    fitter: &dyn SurrogateFitter,
) -> std::result::Result<BoTrace, OptimizeError>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut trace = BoTrace::new(direction);
    if let Err(source) = config.validate() {
        return Err(OptimizeError {
            source,
            partial: trace,
        });
    }
    let sign = direction.sign();
    let space = &config.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut obs = Observations {
        xs: Vec::new(),
        ys: Vec::new(),
    };
    let mut best_external = f64::NAN;

    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(source) => {
                    return Err(OptimizeError {
                        source,
                        partial: trace,
                    })
                }
            }
        };
    }

    let record = |trace: &mut BoTrace, mut rec: TraceRecord, best_external: &mut f64| {
        let better = match direction {
            Direction::Minimize => rec.observed < *best_external,
            Direction::Maximize => rec.observed > *best_external,
        };
        if best_external.is_nan() || better {
            *best_external = rec.observed;
            trace.best_input = rec.input.clone();
            trace.best_value = rec.observed;
        }
        rec.eval = trace.records.len();
        rec.best = *best_external;
        trace.records.push(rec);
    };

    for _ in 0..config.n_init {
        let x = space.sample(&mut rng);
        let y = bail!(objective(&x));
        obs.xs.push(x.clone());
        obs.ys.push(sign * y);
        record(
            &mut trace,
            TraceRecord {
                eval: 0,
                iteration: 0,
                phase: Phase::Init,
                input: x,
                observed: y,
                best: y,
                threshold: None,
                predicted: None,
                delta: None,
                acquisition: None,
            },
            &mut best_external,
        );
    }

    let c0 = obs.ys[obs.best_index()];
    let omega = match config.acquisition_kind {
        AcquisitionKind::Ei => 0.0,
        AcquisitionKind::Aei => config.omega,
    };
    let mut state = bail!(AcquisitionState::new(c0, omega, config.gate_factor * c0.abs()));

    let reached = |best: f64| match (config.stop_at, direction) {
        (Some(level), Direction::Minimize) => best <= level,
        (Some(level), Direction::Maximize) => best >= level,
        (None, _) => false,
    };

    for t in 1..=config.iters {
        if reached(best_external) {
            break;
        }
        let normalized: Vec<Vec<f64>> = obs.xs.iter().map(|x| space.normalize(x)).collect();
        let (zs, y_mean, y_sd) = standardize(&obs.ys);
        let model = bail!(fitter.fit(&normalized, &zs, t as u64));

        state.rebase(obs.ys[obs.best_index()]);
        let threshold = state.threshold();

        let candidates: Vec<Vec<f64>> = (0..config.batch).map(|_| space.sample(&mut rng)).collect();
        let scored: Vec<(f64, f64)> = bail!(candidates
            .par_iter()
            .map(|c| {
                let p = model.predict(&space.normalize(c))?;
                let mean = p.mean * y_sd + y_mean;
                let std = p.std() * y_sd;
                Ok((ei(mean, std, threshold)?, mean))
            })
            .collect::<Result<Vec<_>>>());

        // Deterministic argmax: ties go to the lowest candidate index.
        let mut pick = 0;
        for (i, (score, _)) in scored.iter().enumerate() {
            if *score > scored[pick].0 {
                pick = i;
            }
        }
        let (score, predicted) = scored[pick];
        let x = candidates[pick].clone();
        let y = bail!(objective(&x));
        let delta = bail!(state.recalibrate(predicted, sign * y));
        obs.xs.push(x.clone());
        obs.ys.push(sign * y);
        record(
            &mut trace,
            TraceRecord {
                eval: 0,
                iteration: t,
                phase: Phase::Bo,
                input: x,
                observed: y,
                best: y,
                threshold: Some(sign * threshold),
                predicted: Some(sign * predicted),
                delta: Some(delta),
                acquisition: Some(score),
            },
            &mut best_external,
        );

        if let Some(drift) = config.drift {
            if t % drift.every == 0 {
                let incumbent = obs.best_index();
                let x = obs.xs[incumbent].clone();
                let y = bail!(objective(&x));
                let old = obs.ys[incumbent];
                let new = sign * y;
                if (new - old).abs() > drift.rel_change * old.abs() {
                    obs.ys[incumbent] = new;
                    state.reset(obs.ys[obs.best_index()]);
                }
                record(
                    &mut trace,
                    TraceRecord {
                        eval: 0,
                        iteration: t,
                        phase: Phase::Recheck,
                        input: x,
                        observed: y,
                        best: y,
                        threshold: Some(sign * state.threshold()),
                        predicted: None,
                        delta: None,
                        acquisition: None,
                    },
                    &mut best_external,
                );
            }
        }
    }
    Ok(trace)
}

/// Runs the loop with the surrogate selected by `config.surrogate_kind`.
pub fn run_bo<F>(
    objective: F,
    direction: Direction,
    config: &BoConfig,
) -> std::result::Result<BoTrace, OptimizeError>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    run_bo_with(objective, direction, config, config.fitter().as_ref())
}

fn rate_bounds_check(config: &BoConfig, mu: f64) -> Result<()> {
    let guard = 0.01 * mu;
    match config.bounds.dims() {
        [Dimension::Continuous { lo, hi }] => {
            if !(*lo > 0.0 && *hi <= mu - guard) {
                return Err(domain(format!(
                    "rate bounds [{lo}, {hi}] must lie inside (0, {}]",
                    mu - guard
                )));
            }
            Ok(())
        }
        _ => Err(domain("rate search needs exactly one continuous dimension")),
    }
}

/// Default rate box `[0.05 mu, 0.95 mu]`.
pub fn default_rate_space(mu: f64) -> Result<SearchSpace> {
    SearchSpace::new(vec![Dimension::Continuous {
        lo: 0.05 * mu,
        hi: 0.95 * mu,
    }])
}

/// Searches the arrival rate minimizing `r(lambda)`.
pub fn optimize_rate(
    objective: &RateObjective,
    config: &BoConfig,
) -> std::result::Result<BoTrace, OptimizeError> {
    if let Err(source) = rate_bounds_check(config, objective.queue().mu) {
        return Err(OptimizeError {
            source,
            partial: BoTrace::new(Direction::Minimize),
        });
    }
    run_bo(|x| Ok(objective.evaluate(x[0])?.r), Direction::Minimize, config)
}

/// The placement field: sensors on a ray from the point of interest, the
/// first at `first_m`, the rest `spacing` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub first_m: f64,
    pub template: SensorTemplate,
    pub params: WakeupParams,
    pub ctx: DetectionContext,
}

impl PlacementProblem {
    pub fn layout(&self, count: usize, spacing_m: f64) -> Result<SensorLayout> {
        SensorLayout::evenly_spaced(
            count,
            self.first_m,
            spacing_m,
            self.template.boundary_m,
            self.template.efficiency,
        )
    }

    pub fn expectation(&self, count: usize, spacing_m: f64) -> Result<f64> {
        wakeup_expectation(&self.layout(count, spacing_m)?, &self.params, &self.ctx)
    }
}

/// Search box over `(K, spacing)`.
pub fn placement_space(k_lo: usize, k_hi: usize, s_lo: f64, s_hi: f64) -> Result<SearchSpace> {
    if k_lo == 0 {
        return Err(domain("sensor count range must start at >= 1"));
    }
    SearchSpace::new(vec![
        Dimension::Integer {
            lo: k_lo as i64,
            hi: k_hi as i64,
        },
        Dimension::Continuous { lo: s_lo, hi: s_hi },
    ])
}

/// Searches the `(K, spacing)` pair maximizing `E(X)`.
pub fn optimize_placement(
    problem: &PlacementProblem,
    config: &BoConfig,
) -> std::result::Result<BoTrace, OptimizeError> {
    let shape_ok = matches!(
        config.bounds.dims(),
        [Dimension::Integer { lo, .. }, Dimension::Continuous { .. }] if *lo >= 1
    );
    let check = problem.params.check_constraint().and_then(|_| {
        if shape_ok {
            Ok(())
        } else {
            Err(domain("placement search needs an integer K >= 1 and a continuous spacing dimension"))
        }
    });
    if let Err(source) = check {
        return Err(OptimizeError {
            source,
            partial: BoTrace::new(Direction::Maximize),
        });
    }
    run_bo(
        |x| problem.expectation(x[0] as usize, x[1]),
        Direction::Maximize,
        config,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub mean: f64,
    pub std: f64,
    pub acquisition: f64,
}

/// Refits the surrogate on every observation of a finished run and scores
/// `points` with the acquisition the next iteration would have used.
pub fn acquisition_surface(trace: &BoTrace, config: &BoConfig, points: &[Vec<f64>]) -> Result<Vec<SurfacePoint>> {
    let sign = trace.direction.sign();
    let space = &config.bounds;
    let observed: Vec<&TraceRecord> = trace.records.iter().filter(|r| r.phase != Phase::Recheck).collect();
    if observed.is_empty() {
        return Err(Error::State("trace has no observations".into()));
    }
    let xs: Vec<Vec<f64>> = observed.iter().map(|r| space.normalize(&r.input)).collect();
    let ys: Vec<f64> = observed.iter().map(|r| sign * r.observed).collect();
    let (zs, y_mean, y_sd) = standardize(&ys);
    let model = config.fitter().fit(&xs, &zs, config.iters as u64 + 1)?;

    // Accumulated adjustment at the last acquisition step.
    let mut shift = 0.0;
    for w in trace.records.windows(2) {
        if let (Phase::Bo, Some(c)) = (w[1].phase, w[1].threshold) {
            shift = sign * c - sign * w[0].best;
        }
    }
    let threshold = sign * trace.best_value + shift;
    points
        .par_iter()
        .map(|p| {
            if p.len() != space.dims().len() {
                return Err(domain(format!("point dimension {} differs from {}", p.len(), space.dims().len())));
            }
            let pred = model.predict(&space.normalize(p))?;
            let mean = pred.mean * y_sd + y_mean;
            let std = pred.std() * y_sd;
            Ok(SurfacePoint {
                mean: sign * mean,
                std,
                acquisition: ei(mean, std, threshold)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_count: usize,
    pub best_spacing: f64,
    pub best_value: f64,
    pub evaluations: usize,
    /// `(K, spacing, E(X))` in K-major order.
    pub values: Vec<(usize, f64, f64)>,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Exhaustive evaluation of `E(X)` over a `(K, spacing)` grid. Ties keep the
/// first grid point in K-major order.
pub fn grid_search_placement(
    problem: &PlacementProblem,
    counts: &[usize],
    spacings: &[f64],
) -> Result<GridResult> {
    if counts.is_empty() || spacings.is_empty() {
        return Err(domain("placement grid is empty"));
    }
    let points: Vec<(usize, f64)> = counts
        .iter()
        .flat_map(|&k| spacings.iter().map(move |&s| (k, s)))
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(k, s)| problem.expectation(k, s))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    Ok(GridResult {
        best_count: points[best].0,
        best_spacing: points[best].1,
        best_value: values[best],
        evaluations: points.len(),
        values: points.iter().zip(&values).map(|(&(k, s), &v)| (k, s, v)).collect(),
    })
}

/// Which loop variant a comparison run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ei,
    Aei,
    AeiMlp,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Self::Ei => "ei",
            Self::Aei => "aei",
            Self::AeiMlp => "aei_mlp",
        }
    }

    fn configure(self, base: &BoConfig, seed: u64) -> BoConfig {
        let mut c = base.clone();
        c.seed = seed;
        let (acq, sur) = match self {
            Self::Ei => (AcquisitionKind::Ei, SurrogateKind::Gp),
            Self::Aei => (AcquisitionKind::Aei, SurrogateKind::Gp),
            Self::AeiMlp => (AcquisitionKind::Aei, SurrogateKind::Mlp),
        };
        c.acquisition_kind = acq;
        c.surrogate_kind = sur;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: Variant,
    /// Iterations until best-so-far is within 1% of the run's final best.
    pub iterations_to_1pct: usize,
    pub best_value: f64,
    pub best_input: Vec<f64>,
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub outcomes: Vec<VariantOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variants: Vec<Variant>,
    pub rows: Vec<SeedComparison>,
}

impl Comparison {
    pub fn median_iterations(&self, variant: Variant) -> Option<f64> {
        let mut v: Vec<usize> = self
            .rows
            .iter()
            .flat_map(|r| r.outcomes.iter().filter(|o| o.variant == variant))
            .map(|o| o.iterations_to_1pct)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
        })
    }
}

/// Runs every variant on every seed. Seeds are independent: each run sees
/// only its own seed, so reordering the seed list reorders the rows and
/// nothing else.
pub fn compare_acquisitions<F>(
    objective: F,
    direction: Direction,
    config: &BoConfig,
    seeds: &[u64],
    variants: &[Variant],
) -> Result<Comparison>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if seeds.len() < 5 {
        return Err(domain(format!("comparison needs at least 5 seeds, got {}", seeds.len())));
    }
    if variants.is_empty() {
        return Err(domain("comparison needs at least one variant"));
    }
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let outcomes = variants
                .iter()
                .map(|&variant| {
                    let cfg = variant.configure(config, seed);
                    let trace = run_bo(&objective, direction, &cfg)?;
                    Ok(VariantOutcome {
                        variant,
                        iterations_to_1pct: trace.iterations_to_within(0.01),
                        best_value: trace.best_value,
                        best_input: trace.best_input.clone(),
                        curve: trace.best_by_iteration(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedComparison { seed, outcomes })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        variants: variants.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Prediction, Surrogate};

    fn unit_space() -> SearchSpace {
        SearchSpace::new(vec![Dimension::Continuous { lo: 0.05, hi: 0.95 }]).unwrap()
    }

    fn bowl(x: &[f64]) -> Result<f64> {
        Ok((x[0] - 0.4) * (x[0] - 0.4))
    }

    #[test]
    fn round_half_down_ties() {
        assert_eq!(round_half_down(2.5), 2.0);
        assert_eq!(round_half_down(2.51), 3.0);
        assert_eq!(round_half_down(3.49), 3.0);
        assert_eq!(round_half_down(-0.5), -1.0);
    }

    #[test]
    fn integer_sampling_covers_range_evenly() {
        let d = Dimension::Integer { lo: 1, hi: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            let v = d.sample(&mut rng);
            assert_eq!(v.fract(), 0.0);
            counts[v as usize - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0).abs() < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn loop_accounting() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.n_init = 1;
        cfg.iters = 1;
        let trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        assert_eq!(trace.evaluations(), 2);
        assert_eq!(trace.records[0].phase, Phase::Init);
        assert_eq!(trace.records[1].iteration, 1);
    }

    #[test]
    fn degenerate_bounds_return_the_point() {
        let space = SearchSpace::new(vec![Dimension::Continuous { lo: 0.3, hi: 0.3 }]).unwrap();
        let mut cfg = BoConfig::new(space);
        cfg.n_init = 3;
        cfg.iters = 3;
        let trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        assert_eq!(trace.best_input, vec![0.3]);
    }

    #[test]
    fn invalid_configuration_is_reported() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 0;
        let err = run_bo(bowl, Direction::Minimize, &cfg).unwrap_err();
        assert!(matches!(err.source, Error::Domain(_)));
        assert!(SearchSpace::new(vec![Dimension::Continuous { lo: 1.0, hi: 0.0 }]).is_err());
        assert!(SearchSpace::new(vec![]).is_err());
    }

    #[test]
    fn objective_failure_keeps_partial_trace() {
        let mut calls = 0;
        let cfg = BoConfig::new(unit_space());
        let err = run_bo(
            |x| {
                calls += 1;
                if calls == 14 {
                    Err(Error::Domain("sensor offline".into()))
                } else {
                    bowl(x)
                }
            },
            Direction::Minimize,
            &cfg,
        )
        .unwrap_err();
        assert_eq!(err.partial.records.len(), 13);
        assert_eq!(err.source, Error::Domain("sensor offline".into()));
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 10;
        let a = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        let b = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn best_so_far_is_monotone_and_inputs_in_bounds() {
        let space = placement_space(1, 8, 0.5, 5.0).unwrap();
        let mut cfg = BoConfig::new(space.clone());
        cfg.iters = 15;
        let trace = run_bo(|x| Ok(-(x[0] - 3.0).powi(2) - x[1]), Direction::Maximize, &cfg).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].best >= w[0].best);
        }
        assert!(trace.records.iter().all(|r| space.contains(&r.input)));
        assert!(trace.records.iter().all(|r| r.input[0].fract() == 0.0));
    }

    /// Knows the objective exactly and reports it on the standardized scale
    /// the loop fits on, with zero variance.
    struct Oracle {
        mean: f64,
        sd: f64,
    }

    fn unscale(u: f64) -> f64 {
        0.05 + 0.9 * u
    }

    impl Surrogate for Oracle {
        fn predict(&self, x: &[f64]) -> Result<Prediction> {
            let y = bowl(&[unscale(x[0])])?;
            Ok(Prediction {
                mean: (y - self.mean) / self.sd,
                variance: 0.0,
            })
        }
    }

    struct OracleFitter;

    impl SurrogateFitter for OracleFitter {
        fn fit(&self, xs: &[Vec<f64>], _ys: &[f64], _seed: u64) -> Result<Box<dyn Surrogate>> {
            let ys: Vec<f64> = xs.iter().map(|x| bowl(&[unscale(x[0])]).unwrap()).collect();
            let (_, mean, sd) = standardize(&ys);
            Ok(Box::new(Oracle { mean, sd }))
        }
    }

    #[test]
    fn oracle_surrogate_regresses_only_when_no_candidate_improves() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 30;
        cfg.acquisition_kind = AcquisitionKind::Ei;
        let trace = run_bo_with(bowl, Direction::Minimize, &cfg, &OracleFitter).unwrap();
        for w in trace.records.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if cur.phase != Phase::Bo {
                continue;
            }
            let predicted = cur.predicted.unwrap();
            assert!((predicted - cur.observed).abs() < 1e-12);
            if cur.observed > prev.best {
                assert_eq!(cur.acquisition, Some(0.0), "regressed despite positive EI: {cur:?}");
            }
        }
    }

    #[test]
    fn aei_with_zero_omega_matches_ei() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.omega = 0.0;
        cfg.iters = 12;
        cfg.acquisition_kind = AcquisitionKind::Ei;
        let ei_trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        cfg.acquisition_kind = AcquisitionKind::Aei;
        let aei_trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        assert_eq!(ei_trace, aei_trace);
    }

    #[test]
    fn drift_mode_resets_threshold_on_change() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 10;
        cfg.drift = Some(DriftConfig::default());
        let mut calls = 0usize;
        let trace = run_bo(
            |x| {
                calls += 1;
                let shift = if calls > 15 { 0.5 } else { 0.0 };
                Ok((x[0] - 0.4).powi(2) + shift)
            },
            Direction::Minimize,
            &cfg,
        )
        .unwrap();
        let rechecks: Vec<_> = trace.records.iter().filter(|r| r.phase == Phase::Recheck).collect();
        assert_eq!(rechecks.len(), 2);
        assert_eq!(trace.evaluations(), 10 + 10 + 2);
        // The second recheck sees the shifted objective.
        assert!(rechecks[1].observed >= 0.5);
    }

    #[test]
    fn iterations_to_within_uses_final_best() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 20;
        let trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        let curve = trace.best_by_iteration();
        assert_eq!(curve.len(), 21);
        let t = trace.iterations_to_within(0.01);
        assert!((curve[t] - trace.best_value).abs() <= 0.01 * trace.best_value.abs());
        if t > 0 {
            assert!((curve[t - 1] - trace.best_value).abs() > 0.01 * trace.best_value.abs());
        }
    }

    #[test]
    fn rate_bounds_must_respect_guard_band() {
        let q = crate::aoi::QueueParams::default();
        let config = crate::aoi::SensingConfig {
            layout: SensorLayout::uniform(vec![2.0], 5.0, 0.9).unwrap(),
            decay: 0.6,
            ctx: DetectionContext::default(),
        };
        let obj = RateObjective::new(q, 1, config).unwrap();
        let cfg = BoConfig::new(SearchSpace::new(vec![Dimension::Continuous { lo: 0.1, hi: 0.995 }]).unwrap());
        assert!(optimize_rate(&obj, &cfg).is_err());
        let cfg = BoConfig::new(SearchSpace::new(vec![Dimension::Continuous { lo: 0.0, hi: 0.5 }]).unwrap());
        assert!(optimize_rate(&obj, &cfg).is_err());
    }

    #[test]
    fn surface_scores_every_point() {
        let mut cfg = BoConfig::new(unit_space());
        cfg.iters = 5;
        let trace = run_bo(bowl, Direction::Minimize, &cfg).unwrap();
        let pts: Vec<Vec<f64>> = linspace(0.05, 0.95, 30).into_iter().map(|v| vec![v]).collect();
        let surface = acquisition_surface(&trace, &cfg, &pts).unwrap();
        assert_eq!(surface.len(), 30);
        assert!(surface.iter().all(|p| p.acquisition >= 0.0 && p.std >= 0.0));
        // Near the optimum the fitted mean tracks the objective.
        assert!((surface[12].mean - bowl(&pts[12]).unwrap()).abs() < 0.05);
        assert!(acquisition_surface(&trace, &cfg, &[vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn compare_requires_five_seeds() {
        let cfg = BoConfig::new(unit_space());
        assert!(compare_acquisitions(bowl, Direction::Minimize, &cfg, &[1, 2, 3], &[Variant::Ei]).is_err());
    }
}
