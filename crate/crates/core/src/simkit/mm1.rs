//! FCFS M/M/1 queue with age-of-information tracking.
//!
//! The age at time `t` is `t - g(t)`, where `g(t)` is the generation time of
//! the freshest update delivered by `t`. The process starts with a fresh
//! update delivered at time 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use super::events::EventQueue;
use crate::aoi::QueueParams;
use crate::error::{domain, Result};

/// Minimum expected number of departures in the measured window.
pub const MIN_DEPARTURES: f64 = 1e5;
pub const WARMUP_FRACTION: f64 = 0.1;
pub const BATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub arrival: f64,
    pub departure: f64,
}

impl Job {
    pub fn system_time(&self) -> f64 {
        self.departure - self.arrival
    }
}

enum Event {
    Arrival,
    Departure,
}

/// Simulates the queue on `[0, horizon]`. Returns the jobs that departed
/// inside the horizon, in departure order (which is arrival order).
pub fn simulate_fcfs(lambda: f64, mu: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Job>> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(domain(format!("horizon must be > 0, got {horizon}")));
    }
    let inter = Exp::new(lambda).map_err(|e| domain(format!("arrival rate: {e}")))?;
    let service = Exp::new(mu).map_err(|e| domain(format!("service rate: {e}")))?;

    let mut events = EventQueue::new();
    let mut waiting: VecDeque<f64> = VecDeque::new();
    let mut in_service: Option<f64> = None;
    let mut done = Vec::with_capacity((lambda * horizon * 1.05) as usize + 16);

    events.push(inter.sample(rng), Event::Arrival);
    while let Some((t, ev)) = events.pop() {
        if t > horizon {
            break;
        }
        match ev {
            Event::Arrival => {
                if in_service.is_none() {
                    in_service = Some(t);
                    events.push(t + service.sample(rng), Event::Departure);
                } else {
                    waiting.push_back(t);
                }
                events.push(t + inter.sample(rng), Event::Arrival);
            }
            Event::Departure => {
                let arrival = in_service.take().expect("departure without a job in service");
                done.push(Job {
                    arrival,
                    departure: t,
                });
                if let Some(next) = waiting.pop_front() {
                    in_service = Some(next);
                    events.push(t + service.sample(rng), Event::Departure);
                }
            }
        }
    }
    Ok(done)
}

/// Age sample path and the statistics derived from it.
///
/// The path is stored at receptions: just before reception `i` the age is
/// `peak_ages[i]`, right after it drops to `reset_ages[i]`; in between it
/// grows with unit slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiSample {
    pub threshold_m: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub reception_times: Vec<f64>,
    pub peak_ages: Vec<f64>,
    pub reset_ages: Vec<f64>,
    /// Time-average fraction of `[warmup, horizon]` with age above `M`.
    pub violation_fraction: f64,
    pub mean_age: f64,
    /// Departures inside the measured window.
    pub departures: usize,
    pub mean_system_time: f64,
    /// Violation fraction of each of `BATCHES` equal slices of the window.
    pub batch_fractions: Vec<f64>,
}

impl AoiSample {
    /// Age at time `t` reconstructed from the stored path.
    pub fn age_at(&self, t: f64) -> f64 {
        let i = self.reception_times.partition_point(|&r| r <= t);
        if i == 0 {
            t
        } else {
            self.reset_ages[i - 1] + (t - self.reception_times[i - 1])
        }
    }

    /// Half-width of a normal-approximation batch-means interval for the
    /// violation fraction.
    pub fn ci_half_width(&self, z: f64) -> f64 {
        let b = self.batch_fractions.len() as f64;
        let mean = self.batch_fractions.iter().sum::<f64>() / b;
        let var = self
            .batch_fractions
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (b - 1.0);
        z * (var / b).sqrt()
    }
}

/// Horizon giving roughly `departures` departures after warm-up.
pub fn horizon_for(lambda: f64, departures: f64) -> f64 {
    departures / (lambda * (1.0 - WARMUP_FRACTION))
}

/// Integrals of the violation indicator and of the age over `[a, b)` while
/// the freshest delivered update was generated at `g`.
fn segment(a: f64, b: f64, g: f64, m: f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let violation = (b - (g + m).max(a)).max(0.0);
    let age = 0.5 * ((b - g) * (b - g) - (a - g) * (a - g));
    (violation, age)
}

pub fn simulate_mm1_aoi(queue: &QueueParams, horizon: f64, seed: u64) -> Result<AoiSample> {
    queue.validate()?;
    let warmup = WARMUP_FRACTION * horizon;
    let expected = queue.lambda * (horizon - warmup);
    if expected < MIN_DEPARTURES {
        return Err(domain(format!(
            "horizon {horizon} gives about {expected:.0} measured departures, need >= {MIN_DEPARTURES:.0}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs = simulate_fcfs(queue.lambda, queue.mu, horizon, &mut rng)?;
    let m = queue.threshold_m;

    let mut reception_times = Vec::with_capacity(jobs.len());
    let mut peak_ages = Vec::with_capacity(jobs.len());
    let mut reset_ages = Vec::with_capacity(jobs.len());

    let window = horizon - warmup;
    let batch_len = window / BATCHES as f64;
    let mut batch_violation = vec![0.0; BATCHES];
    let mut violation = 0.0;
    let mut age_area = 0.0;
    let mut system_sum = 0.0;
    let mut departures = 0usize;

    // Accumulates one constant-`g` stretch, split across batch boundaries.
    let mut accumulate = |from: f64, to: f64, g: f64, violation: &mut f64, age_area: &mut f64| {
        let (mut a, b) = (from.max(warmup), to.min(horizon));
        while a < b {
            let boundary = |i: usize| (warmup + (i + 1) as f64 * batch_len).min(b);
            let mut idx = (((a - warmup) / batch_len) as usize).min(BATCHES - 1);
            // Rounding can leave `a` sitting on the boundary it just reached.
            if boundary(idx) <= a && idx + 1 < BATCHES {
                idx += 1;
            }
            let end = if idx == BATCHES - 1 { b } else { boundary(idx) };
            let (v, ar) = segment(a, end, g, m);
            batch_violation[idx] += v;
            *violation += v;
            *age_area += ar;
            a = end;
        }
    };

    let mut last_time = 0.0;
    let mut freshest = 0.0;
    for job in &jobs {
        accumulate(last_time, job.departure, freshest, &mut violation, &mut age_area);
        reception_times.push(job.departure);
        peak_ages.push(job.departure - freshest);
        // FCFS delivers in generation order, so every reception is fresher.
        freshest = job.arrival;
        reset_ages.push(job.departure - freshest);
        last_time = job.departure;
        if job.departure >= warmup {
            departures += 1;
            system_sum += job.system_time();
        }
    }
    accumulate(last_time, horizon, freshest, &mut violation, &mut age_area);

    if departures == 0 {
        return Err(domain("no departures in the measured window"));
    }
    Ok(AoiSample {
        threshold_m: m,
        horizon,
        warmup,
        reception_times,
        peak_ages,
        reset_ages,
        violation_fraction: violation / window,
        mean_age: age_area / window,
        departures,
        mean_system_time: system_sum / departures as f64,
        batch_fractions: batch_violation.into_iter().map(|v| v / batch_len).collect(),
    })
}

/// Independent replications, one per seed, run in parallel.
pub fn replicate_mm1_aoi(queue: &QueueParams, horizon: f64, seeds: &[u64]) -> Result<Vec<AoiSample>> {
    seeds
        .par_iter()
        .map(|&s| simulate_mm1_aoi(queue, horizon, s))
        .collect()
}
