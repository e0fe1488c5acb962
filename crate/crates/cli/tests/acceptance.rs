//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use aquaplan::acquisition::{ei, AcquisitionKind};
use aquaplan::aoi::{aoi_violation, QueueParams, RateObjective};
use aquaplan::optimizer::{
    compare_acquisitions, grid_search_placement, linspace, optimize_placement, run_bo, BoTrace, Direction,
    TraceRecord, Variant,
};
use aquaplan::sensing::poisson_pmf;
use aquaplan::simkit::{horizon_for, simulate_delay_comparison, simulate_mm1_aoi, Strategy};
use aquaplan::surrogate::{gp_fit, gp_predict, KernelConfig};
use aquaplan_cli::config::RunConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn aoi_closed_form_vs_simulation() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut min_departures = usize::MAX;
    for (lambda, mu, m) in [(0.8, 1.0, 2.0), (0.8, 1.0, 5.0), (0.5, 1.0, 5.0), (0.3, 0.5, 10.0)] {
        let q = QueueParams::new(lambda, mu, m).unwrap();
        let sim = simulate_mm1_aoi(&q, horizon_for(lambda, 1e6), 2024).unwrap();
        worst = worst.max((sim.violation_fraction - aoi_violation(&q).unwrap()).abs());
        min_departures = min_departures.min(sim.departures);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 0.02 && min_departures >= 100_000 && secs < 60.0,
        format!("max |closed form - simulated| = {worst:.5}, min departures {min_departures}, {secs:.1} s"),
    )
}

fn aoi_boundary_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut at_zero: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..50 {
        let mu = rng.random_range(0.1..5.0);
        let lambda = mu * rng.random_range(0.05..0.95);
        let q = QueueParams::new(lambda, mu, 0.0).unwrap();
        at_zero = at_zero.max((aoi_violation(&q).unwrap() - 1.0).abs());
        let mut last = f64::INFINITY;
        for m in linspace(0.0, 50.0, 100) {
            let v = aoi_violation(&QueueParams { threshold_m: m, ..q }).unwrap();
            monotone &= v <= last;
            last = v;
        }
    }
    let far = aoi_violation(&QueueParams::new(0.8, 1.0, 50.0).unwrap()).unwrap();
    verdict(
        at_zero <= 1e-9 && far < 1e-3 && monotone,
        format!("max |A(M=0) - 1| = {at_zero:.1e}, A(M=50) = {far:.2e}, monotone over 50 pairs: {monotone}"),
    )
}

fn poisson_normalization() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ys: Vec<f64> = (0..99).map(|_| rng.random_range(1e-6..20.0)).collect();
    ys.push(20.0);
    let worst = ys
        .iter()
        .map(|&y| (0..=60).map(|k| poisson_pmf(k, y)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    verdict(worst >= 1.0 - 1e-9, format!("min sum over 100 rates = {worst:.12}"))
}

fn gp_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<(Vec<f64>, f64)> = (0..30)
        .map(|_| {
            let x: Vec<f64> = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let y = (3.0 * x[0]).sin() + x[1] * x[1];
            (x, y)
        })
        .collect();
    let model = gp_fit(&pts, &KernelConfig::GridSearch, 0.0).unwrap();
    let interp = pts
        .iter()
        .map(|(x, y)| (gp_predict(&model, x).unwrap().mean - y).abs())
        .fold(0.0, f64::max);
    let queries: Vec<Vec<f64>> = (0..1000)
        .map(|_| vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)])
        .collect();
    let min_var = queries
        .iter()
        .map(|q| gp_predict(&model, q).unwrap().variance)
        .fold(f64::INFINITY, f64::min);
    let mut shuffled = pts.clone();
    shuffled.shuffle(&mut rng);
    let other = gp_fit(&shuffled, &KernelConfig::GridSearch, 0.0).unwrap();
    let identical = queries
        .iter()
        .all(|q| gp_predict(&model, q).unwrap() == gp_predict(&other, q).unwrap());
    verdict(
        interp <= 1e-6 && min_var >= 0.0 && identical,
        format!("interpolation error {interp:.2e}, min variance {min_var:.2e}, permutation-identical: {identical}"),
    )
}

fn ei_vs_monte_carlo() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mean = rng.random_range(-1.0..1.0);
        let std = rng.random_range(0.05..1.0);
        let c: f64 = rng.random_range(-1.0..1.0);
        let normal = Normal::new(mean, std).unwrap();
        let n = 1_000_000;
        let mc = (0..n).map(|_| (c - normal.sample(&mut rng)).max(0.0)).sum::<f64>() / n as f64;
        worst = worst.max((mc - ei(mean, std, c).unwrap()).abs());
    }
    verdict(worst <= 3e-3, format!("max |closed form - Monte Carlo| = {worst:.2e}"))
}

fn record_bits(r: &TraceRecord) -> Vec<u64> {
    let opt = |v: Option<f64>| v.map_or(u64::MAX, f64::to_bits);
    let mut bits = vec![r.eval as u64, r.iteration as u64];
    bits.extend(r.input.iter().map(|v| v.to_bits()));
    bits.extend([
        r.observed.to_bits(),
        r.best.to_bits(),
        opt(r.threshold),
        opt(r.predicted),
        opt(r.delta),
        opt(r.acquisition),
    ]);
    bits
}

fn traces_identical(a: &BoTrace, b: &BoTrace) -> bool {
    a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(x, y)| x.phase == y.phase && record_bits(x) == record_bits(y))
}

fn rate_objective(cfg: &RunConfig) -> RateObjective {
    RateObjective::new(cfg.queue_params().unwrap(), cfg.sensing.k, cfg.sensing_config().unwrap()).unwrap()
}

fn aei_reduces_to_ei() -> Verdict {
    let cfg = RunConfig::default();
    let objective = rate_objective(&cfg);
    let mut all = true;
    for seed in 0..3 {
        let mut bo = cfg.rate_bo().unwrap();
        bo.seed = seed;
        bo.omega = 0.0;
        bo.acquisition_kind = AcquisitionKind::Ei;
        let a = run_bo(|x| Ok(objective.evaluate(x[0])?.r), Direction::Minimize, &bo).unwrap();
        bo.acquisition_kind = AcquisitionKind::Aei;
        let b = run_bo(|x| Ok(objective.evaluate(x[0])?.r), Direction::Minimize, &bo).unwrap();
        all &= traces_identical(&a, &b);
    }
    verdict(all, format!("3 seeds x 50 evaluations, bitwise identical: {all}"))
}

fn rate_bowl() -> Verdict {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let mut bo = cfg.rate_bo().unwrap();
        bo.seed = seed;
        let trace = run_bo(|x| Ok((x[0] - 0.4).powi(2)), Direction::Minimize, &bo).unwrap();
        let err = (trace.best_input[0] - 0.4).abs();
        worst = worst.max(err);
        hits += usize::from(err <= 0.05);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        hits == 10 && secs < 30.0,
        format!("{hits}/10 seeds within 0.05 of 0.4 (worst {worst:.2e}), {secs:.1} s"),
    )
}

fn aei_convergence() -> Verdict {
    let cfg = RunConfig::default();
    let objective = rate_objective(&cfg);
    let bo = cfg.rate_bo().unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let result = compare_acquisitions(
        |x| Ok(objective.evaluate(x[0])?.r),
        Direction::Minimize,
        &bo,
        &seeds,
        &[Variant::Ei, Variant::Aei],
    )
    .unwrap();
    let ei_median = result.median_iterations(Variant::Ei).unwrap();
    let aei_median = result.median_iterations(Variant::Aei).unwrap();
    verdict(
        aei_median <= ei_median,
        format!("median iterations to within 1%: AEI {aei_median}, EI {ei_median}"),
    )
}

fn placement_efficiency() -> Verdict {
    let cfg = RunConfig::default();
    let problem = cfg.placement_problem().unwrap();
    let counts: Vec<usize> = (1..=50).collect();
    let grid = grid_search_placement(&problem, &counts, &linspace(0.5, 20.0, 50)).unwrap();
    let level = 0.98 * grid.best_value;
    let mut used = Vec::new();
    for seed in 0..10 {
        let mut bo = cfg.placement_bo().unwrap();
        bo.seed = seed;
        bo.iters = 1000 - bo.n_init;
        bo.stop_at = Some(level);
        let trace = optimize_placement(&problem, &bo).unwrap();
        used.push(trace.evaluations_to_reach(level));
    }
    let ok = used.iter().filter(|u| u.is_some_and(|n| n <= 1000)).count();
    let counts: Vec<String> = used
        .iter()
        .map(|u| u.map_or("miss".into(), |n| n.to_string()))
        .collect();
    verdict(
        ok >= 8,
        format!(
            "grid optimum {:.5} over {} points; BO evaluations to 2% band: [{}] ({ok}/10)",
            grid.best_value,
            grid.evaluations,
            counts.join(", ")
        ),
    )
}

fn delay_comparison() -> Verdict {
    let cfg = RunConfig::default();
    let problem = cfg.placement_problem().unwrap();
    let bo = cfg.placement_bo().unwrap();
    let q = cfg.queue_params().unwrap();
    let mut sums = [0.0; 3];
    let mut skipped = 0;
    for seed in 0..20 {
        let mut scenario = cfg.scenario();
        scenario.seed = seed;
        let result = simulate_delay_comparison(&scenario, &q, &problem, &bo, &Strategy::ALL).unwrap();
        skipped += result.skipped.len();
        for (i, s) in Strategy::ALL.iter().enumerate() {
            sums[i] += result.get(*s).map_or(f64::NAN, |x| x.mean_delay);
        }
    }
    let [opt, rnd, fix] = sums.map(|s| s / 20.0);
    verdict(
        skipped == 0 && opt <= rnd && opt <= fix,
        format!("mean delay over 20 seeds: optimized {opt:.4} s, random {rnd:.4} s, fixed {fix:.4} s"),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn manifest_reproducibility() -> Verdict {
    let exe = env!("CARGO_BIN_EXE_aquaplan");
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.toml");
    fs::write(&cfg, "[bo]\ncompare_seeds = 5\nmlp_epochs = 50\n").unwrap();
    let commands: [&[&str]; 8] = [
        &["channel"],
        &["sense", "--surface"],
        &["aoi"],
        &["place"],
        &["rate"],
        &["compare"],
        &["simulate", "--kind", "mm1"],
        &["simulate", "--kind", "delay"],
    ];
    let mut failures = Vec::new();
    let mut checked = 0;
    for (i, args) in commands.iter().enumerate() {
        let first = root.path().join(format!("run{i}"));
        let again = root.path().join(format!("rerun{i}"));
        let ok = Command::new(exe)
            .args(["--config", cfg.to_str().unwrap(), "--seed", "11", "--outdir", first.to_str().unwrap()])
            .args(*args)
            .output()
            .unwrap()
            .status
            .success()
            && Command::new(exe)
                .args(["--from-manifest", first.join("run.json").to_str().unwrap()])
                .args(["--outdir", again.to_str().unwrap()])
                .output()
                .unwrap()
                .status
                .success();
        let a = if ok { files(&first) } else { Vec::new() };
        let b = if ok { files(&again) } else { Vec::new() };
        if !ok || a.is_empty() || a != b {
            failures.push(args.join(" "));
        }
        checked += a.len();
    }
    verdict(
        failures.is_empty(),
        format!("{} commands, {checked} files compared byte for byte; mismatches: {failures:?}", commands.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("AoI closed form vs simulation", aoi_closed_form_vs_simulation),
        ("AoI boundary identities", aoi_boundary_identities),
        ("detection kernel normalization", poisson_normalization),
        ("GP correctness", gp_correctness),
        ("EI closed form vs Monte Carlo", ei_vs_monte_carlo),
        ("AEI reduces to EI at omega = 0", aei_reduces_to_ei),
        ("rate search on the analytic bowl", rate_bowl),
        ("AEI convergence vs EI", aei_convergence),
        ("placement efficiency vs grid", placement_efficiency),
        ("delay comparison", delay_comparison),
        ("manifest reproducibility", manifest_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {:>2} {} {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
