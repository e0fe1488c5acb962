use aquaplan::aoi::{aoi_violation, semantic_objective, RateObjective, SensingConfig};
use aquaplan::channel::{attenuation_db, thorp_absorption};
use aquaplan::optimizer::{
    acquisition_surface, compare_acquisitions, grid_search_placement, linspace, optimize_placement,
    optimize_rate, BoTrace, Direction, Variant,
};
use aquaplan::sensing::{solve_p1, wakeup_expectation, SensorLayout, WakeupParams};
use aquaplan::simkit::{horizon_for, replicate_mm1_aoi, simulate_delay_comparison};
use clap::{Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csv::{num, opt, Table};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    /// M/M/1 age-of-information Monte Carlo.
    Mm1,
    /// End-to-end delay of the placement strategies.
    Delay,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Absorption and attenuation over distance.
    Channel,
    /// Sensor count maximizing expected detection.
    Sense {
        /// Also emit E(X) over (wake-up probability, K).
        #[arg(long)]
        surface: bool,
    },
    /// AoI violation probability and the semantic objective.
    Aoi,
    /// Bayesian optimization of sensor count and spacing, plus grid search.
    Place,
    /// Bayesian optimization of the update arrival rate.
    Rate,
    /// EI against AEI (and AEI with the MLP surrogate) over several seeds.
    Compare,
    /// Discrete-event simulations.
    Simulate {
        #[arg(long, value_enum, default_value_t = SimKind::Mm1)]
        kind: SimKind,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Channel => "channel",
            Self::Sense { .. } => "sense",
            Self::Aoi => "aoi",
            Self::Place => "place",
            Self::Rate => "rate",
            Self::Compare => "compare",
            Self::Simulate { .. } => "simulate",
        }
    }
}

/// One CSV to write; `part` distinguishes secondary files of a command.
pub struct Artifact {
    pub part: Option<&'static str>,
    pub table: Table,
}

pub struct Outcome {
    pub stdout: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            stdout: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn main(&mut self, table: Table) {
        self.artifacts.push(Artifact { part: None, table });
    }

    fn extra(&mut self, part: &'static str, table: Table) {
        self.artifacts.push(Artifact {
            part: Some(part),
            table,
        });
    }
}

/// Runs `command`. `stamp` is the run timestamp written into evaluation logs.
pub fn execute(command: &Command, cfg: &RunConfig, stamp: &str) -> CliResult<Outcome> {
    match command {
        Command::Channel => channel(cfg),
        Command::Sense { surface } => sense(cfg, *surface),
        Command::Aoi => aoi(cfg),
        Command::Place => place(cfg),
        Command::Rate => rate(cfg, stamp),
        Command::Compare => compare(cfg),
        Command::Simulate { kind: SimKind::Mm1 } => simulate_mm1(cfg),
        Command::Simulate { kind: SimKind::Delay } => simulate_delay(cfg),
    }
}

fn channel(cfg: &RunConfig) -> CliResult<Outcome> {
    let p = cfg.channel_params()?;
    let max = cfg.channel.max_distance_m;
    if !(max.is_finite() && max >= 1.0) {
        return Err(aquaplan::Error::Domain(format!("max_distance_m must be >= 1, got {max}")).into());
    }
    let alpha = thorp_absorption(p.freq_khz)?;
    let mut t = Table::new(&["distance_m", "freq_khz", "absorption_db_per_km", "attenuation_db"]);
    for d in 1..=max.floor() as usize {
        let d = d as f64;
        t.row(vec![num(d), num(p.freq_khz), num(alpha), num(attenuation_db(&p, d)?)]);
    }
    let mut out = Outcome::new();
    out.stdout.push(format!("absorption at {} kHz: {} dB/km", num(p.freq_khz), num(alpha)));
    out.main(t);
    Ok(out)
}

fn sense(cfg: &RunConfig, surface: bool) -> CliResult<Outcome> {
    let s = &cfg.sensing;
    let ctx = cfg.detection_context()?;
    let params = cfg.wakeup()?;
    let spacing = cfg.p1_spacing();
    let sol = solve_p1(s.k_min..=s.k_max, &spacing, cfg.template(), &params, &ctx)?;
    let mut t = Table::new(&["count", "expectation", "selected"]);
    for (k, e) in &sol.candidates {
        t.row(vec![k.to_string(), num(*e), u8::from(*k == sol.count).to_string()]);
    }
    let mut out = Outcome::new();
    out.stdout.push(format!("K* = {}, E(X) = {}", sol.count, num(sol.expectation)));
    out.main(t);

    if surface {
        let mut t = Table::new(&["gamma_wake", "count", "expectation"]);
        for gamma in linspace(0.05, 1.0, 20) {
            let p = WakeupParams {
                gamma_wake: gamma,
                ..params
            };
            for k in s.k_min..=s.k_max {
                let layout = SensorLayout::uniform(spacing.distances(k)?, s.boundary_m, s.efficiency)?;
                t.row(vec![num(gamma), k.to_string(), num(wakeup_expectation(&layout, &p, &ctx)?)]);
            }
        }
        out.extra("surface", t);
    }
    Ok(out)
}

fn aoi(cfg: &RunConfig) -> CliResult<Outcome> {
    let q = cfg.queue_params()?;
    let violation = aoi_violation(&q)?;
    let sensing = cfg.sensing_config()?;
    let eval = semantic_objective(q.lambda, &q, cfg.sensing.k, &sensing)?;
    let mut t = Table::new(&["lambda", "mu", "M", "violation", "pi_s", "pr_detect", "r"]);
    t.row(vec![
        num(q.lambda),
        num(q.mu),
        num(q.threshold_m),
        num(violation),
        num(eval.pi_s),
        num(eval.pr_detect),
        num(eval.r),
    ]);

    let mut profile = Table::new(&["k", "distance_m", "pr_detect", "r"]);
    for k in 1..=10usize {
        for d in linspace(1.0, 30.0, 59) {
            let config = SensingConfig {
                layout: SensorLayout::uniform(vec![d; k], cfg.sensing.boundary_m, cfg.sensing.efficiency)?,
                decay: cfg.sensing.delta,
                ctx: sensing.ctx,
            };
            let e = semantic_objective(q.lambda, &q, k, &config)?;
            profile.row(vec![k.to_string(), num(d), num(e.pr_detect), num(e.r)]);
        }
    }
    let mut out = Outcome::new();
    out.stdout.push(format!("{violation:?}"));
    out.main(t);
    out.extra("profile", profile);
    Ok(out)
}

fn trace_table(trace: &BoTrace, input_names: &[&str]) -> Table {
    let mut header = vec!["eval", "iteration", "phase"];
    header.extend_from_slice(input_names);
    header.extend_from_slice(&["observed", "best", "c_t", "predicted", "delta", "acquisition"]);
    let mut t = Table::new(&header);
    for r in &trace.records {
        let mut row = vec![r.eval.to_string(), r.iteration.to_string(), r.phase.to_string()];
        row.extend(r.input.iter().map(|v| num(*v)));
        row.extend([
            num(r.observed),
            num(r.best),
            opt(r.threshold),
            opt(r.predicted),
            opt(r.delta),
            opt(r.acquisition),
        ]);
        t.row(row);
    }
    t
}

fn place(cfg: &RunConfig) -> CliResult<Outcome> {
    let s = &cfg.sensing;
    let problem = cfg.placement_problem()?;
    let bo = cfg.placement_bo()?;
    let trace = optimize_placement(&problem, &bo)?;

    let counts: Vec<usize> = (s.k_min..=s.k_max).collect();
    let grid = grid_search_placement(&problem, &counts, &linspace(s.spacing_min_m, s.spacing_max_m, 50))?;
    let mut g = Table::new(&["k", "spacing_m", "expectation"]);
    for (k, sp, e) in &grid.values {
        g.row(vec![k.to_string(), num(*sp), num(*e)]);
    }

    let mesh: Vec<Vec<f64>> = linspace(s.k_min as f64, s.k_max as f64, 100)
        .into_iter()
        .flat_map(|k| linspace(s.spacing_min_m, s.spacing_max_m, 100).into_iter().map(move |d| vec![k, d]))
        .collect();
    let surface = acquisition_surface(&trace, &bo, &mesh)?;
    let mut a = Table::new(&["k", "spacing_m", "mean", "std", "acquisition"]);
    for (p, v) in mesh.iter().zip(&surface) {
        a.row(vec![num(p[0]), num(p[1]), num(v.mean), num(v.std), num(v.acquisition)]);
    }

    let mut out = Outcome::new();
    out.stdout.push(format!(
        "bo: K = {}, spacing = {} m, E(X) = {} after {} evaluations",
        trace.best_input[0],
        num(trace.best_input[1]),
        num(trace.best_value),
        trace.evaluations()
    ));
    out.stdout.push(format!(
        "grid: K = {}, spacing = {} m, E(X) = {} after {} evaluations",
        grid.best_count,
        num(grid.best_spacing),
        num(grid.best_value),
        grid.evaluations
    ));
    out.main(trace_table(&trace, &["k", "spacing_m"]));
    out.extra("grid", g);
    out.extra("acquisition", a);
    Ok(out)
}

fn rate_objective(cfg: &RunConfig) -> CliResult<RateObjective> {
    Ok(RateObjective::new(cfg.queue_params()?, cfg.sensing.k, cfg.sensing_config()?)?)
}

fn rate(cfg: &RunConfig, stamp: &str) -> CliResult<Outcome> {
    let objective = rate_objective(cfg)?;
    let bo = cfg.rate_bo()?;
    let trace = optimize_rate(&objective, &bo)?;
    let q = objective.queue();
    let mut chu = Table::new(&["config", "lambda", "mu", "M", "a_i", "pi_s", "pr_detect", "r", "timestamp"]);
    for (id, e) in objective.snapshot().log() {
        chu.row(vec![
            id.to_string(),
            num(e.lambda),
            num(q.mu),
            num(q.threshold_m),
            num(e.a_i),
            num(e.pi_s),
            num(e.pr_detect),
            num(e.r),
            stamp.to_string(),
        ]);
    }
    let mut out = Outcome::new();
    out.stdout.push(format!(
        "lambda* = {}, r = {} after {} evaluations",
        num(trace.best_input[0]),
        num(trace.best_value),
        trace.evaluations()
    ));
    out.main(trace_table(&trace, &["lambda"]));
    out.extra("chu", chu);
    Ok(out)
}

fn compare(cfg: &RunConfig) -> CliResult<Outcome> {
    let objective = rate_objective(cfg)?;
    let bo = cfg.rate_bo()?;
    let seeds: Vec<u64> = (0..cfg.bo.compare_seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let mut variants = vec![Variant::Ei, Variant::Aei];
    if cfg.bo.compare_mlp {
        variants.push(Variant::AeiMlp);
    }
    let result = compare_acquisitions(
        |x| Ok(objective.evaluate(x[0])?.r),
        Direction::Minimize,
        &bo,
        &seeds,
        &variants,
    )?;

    let mut t = Table::new(&["seed", "variant", "iterations_to_1pct", "best_value", "best_lambda"]);
    let mut curves = Table::new(&["variant", "seed", "iteration", "best"]);
    for row in &result.rows {
        for o in &row.outcomes {
            t.row(vec![
                row.seed.to_string(),
                o.variant.label().into(),
                o.iterations_to_1pct.to_string(),
                num(o.best_value),
                num(o.best_input[0]),
            ]);
        }
    }
    for &v in &variants {
        for row in &result.rows {
            for o in row.outcomes.iter().filter(|o| o.variant == v) {
                for (i, b) in o.curve.iter().enumerate() {
                    curves.row(vec![v.label().into(), row.seed.to_string(), i.to_string(), num(*b)]);
                }
            }
        }
    }
    let mut out = Outcome::new();
    for &v in &variants {
        let median = result.median_iterations(v).expect("variant was run");
        out.stdout.push(format!("{}: median iterations to within 1% = {}", v.label(), num(median)));
    }
    out.main(t);
    out.extra("curves", curves);
    Ok(out)
}

fn simulate_mm1(cfg: &RunConfig) -> CliResult<Outcome> {
    let q = cfg.queue_params()?;
    let exact = aoi_violation(&q)?;
    let horizon = horizon_for(q.lambda, cfg.scenario.departures);
    let n = cfg.scenario.replications.max(1) as u64;
    let seeds: Vec<u64> = (0..n).map(|i| cfg.seed.wrapping_add(i)).collect();
    let samples = replicate_mm1_aoi(&q, horizon, &seeds)?;
    let mut t = Table::new(&[
        "seed",
        "lambda",
        "mu",
        "M",
        "horizon",
        "departures",
        "violation_sim",
        "violation_closed_form",
        "ci95_half_width",
        "mean_age",
        "mean_system_time",
    ]);
    let mut out = Outcome::new();
    for (seed, s) in seeds.iter().zip(&samples) {
        t.row(vec![
            seed.to_string(),
            num(q.lambda),
            num(q.mu),
            num(q.threshold_m),
            num(horizon),
            s.departures.to_string(),
            num(s.violation_fraction),
            num(exact),
            num(s.ci_half_width(1.96)),
            num(s.mean_age),
            num(s.mean_system_time),
        ]);
        out.stdout.push(format!(
            "seed {seed}: simulated {} vs closed form {}",
            num(s.violation_fraction),
            num(exact)
        ));
    }
    out.main(t);
    Ok(out)
}

fn simulate_delay(cfg: &RunConfig) -> CliResult<Outcome> {
    let q = cfg.queue_params()?;
    let problem = cfg.placement_problem()?;
    let bo = cfg.placement_bo()?;
    if cfg.scenario.strategies.is_empty() {
        return Err(CliError::Usage("scenario.strategies is empty".into()));
    }
    let result = simulate_delay_comparison(&cfg.scenario(), &q, &problem, &bo, &cfg.scenario.strategies)?;

    let mut samples = Table::new(&[
        "strategy",
        "subnet",
        "generated_at",
        "detection_wait",
        "propagation",
        "system_time",
        "delay",
    ]);
    let mut summary = Table::new(&["strategy", "subnet", "count", "spacing_m", "samples", "mean_delay"]);
    let mut out = Outcome::new();
    for series in &result.series {
        let label = series.strategy.label();
        for s in &series.samples {
            samples.row(vec![
                label.into(),
                s.subnet.to_string(),
                num(s.generated_at),
                num(s.detection_wait),
                num(s.propagation),
                num(s.system_time),
                num(s.delay),
            ]);
        }
        for p in &series.placements {
            let own: Vec<f64> = series
                .samples
                .iter()
                .filter(|s| s.subnet == p.subnet)
                .map(|s| s.delay)
                .collect();
            let mean = own.iter().sum::<f64>() / own.len().max(1) as f64;
            summary.row(vec![
                label.into(),
                p.subnet.to_string(),
                p.count.to_string(),
                num(p.spacing_m),
                own.len().to_string(),
                num(mean),
            ]);
        }
        out.stdout.push(format!("{label}: mean delay {} s", num(series.mean_delay)));
    }
    for (strategy, why) in &result.skipped {
        out.stdout.push(format!("{}: skipped ({why})", strategy.label()));
    }
    out.main(samples);
    out.extra("summary", summary);
    Ok(out)
}
