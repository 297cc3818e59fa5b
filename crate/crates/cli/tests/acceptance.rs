//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use renewal_dpp::{
    brute_force_oracle, build_instance, extract_reference_point, run, run_stationary_sweep, solve_bisection,
    solve_enumerate, solve_hull_vertices, solve_lp, stationary_policy_weights, ActionSpec, BuiltInstance,
    ConstraintDirection, DriftDiagnostic, FrameSpec, LpStatus, PerformanceTriple, PerformanceVector, PolicySpec,
    RenewalSystemModel, RunConfig, RunMetrics, SamplePathCheck, SchedulingInstance, StationaryLp,
    VirtualQueueVector,
};
use renewal_dpp_cli::{parse_config, run_experiment};

const V_SWEEP: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
const SWEEP_SLOTS: u64 = 200_000;
const SWEEP_SEEDS: [u64; 3] = [1, 2, 3];
const MONOTONE_TOL: f64 = 0.01;
const OPTIMALITY_TOL: f64 = 0.05;
const SERVICE_SLACK: f64 = 0.05;
const CONVERGENCE_SEEDS: u64 = 20;
const SOLVER_TOL: f64 = 1e-8;
const LP_GRID: u32 = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Running total of sample-path checks over every simulation in this file.
#[derive(Default)]
struct PathTally {
    runs: u64,
    checked: u64,
    violations: u64,
}

impl PathTally {
    fn add(&mut self, check: &SamplePathCheck) {
        self.runs += 1;
        self.checked += check.checked;
        self.violations += check.violations;
    }
}

fn table1() -> BuiltInstance {
    build_instance(&SchedulingInstance::table1()).unwrap()
}

fn dpp_run(built: &BuiltInstance, v: f64, slots: u64, seed: u64) -> (RunMetrics, SamplePathCheck) {
    let mut path = SamplePathCheck::new(built.external.dim());
    let m = run(&built.models, &built.external, &PolicySpec::dpp(v).unwrap(), &RunConfig::new(slots, seed), &mut path)
        .unwrap();
    (m, path)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs.iter().copied());
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (var / xs.len() as f64).sqrt()
}

/// Grid search on one server with the class bounds split evenly; the five
/// identical servers share the optimal weights, so this is the full optimum.
fn grid_cross_check(built: &BuiltInstance) -> f64 {
    let n = built.lp.systems.len() as f64;
    let reduced = StationaryLp::new(
        vec![built.lp.systems[0].clone()],
        built.lp.bounds.iter().map(|d| d / n).collect(),
        built.lp.directions.clone(),
    )
    .unwrap();
    n * brute_force_oracle(&reduced, 600).unwrap().objective
}

struct Sweep {
    /// `[v index][seed index]`
    runs: Vec<Vec<RunMetrics>>,
}

fn criteria_1_to_3(built: &BuiltInstance, e_star: f64, tally: &mut PathTally) -> (Outcome, Outcome, Outcome) {
    let cells: Vec<(f64, u64)> = V_SWEEP.iter().flat_map(|&v| SWEEP_SEEDS.map(|s| (v, s))).collect();
    let results: Vec<(RunMetrics, SamplePathCheck)> =
        cells.par_iter().map(|&(v, s)| dpp_run(built, v, SWEEP_SLOTS, s)).collect();
    let mut sweep = Sweep { runs: vec![Vec::new(); V_SWEEP.len()] };
    for (i, (m, path)) in results.into_iter().enumerate() {
        tally.add(&path);
        sweep.runs[i / SWEEP_SEEDS.len()].push(m);
    }

    let energy: Vec<f64> = sweep.runs.iter().map(|rs| mean(rs.iter().map(|m| m.avg_penalty))).collect();
    let monotone = energy.windows(2).all(|w| w[1] <= w[0] * (1.0 + MONOTONE_TOL));
    let at_100 = *energy.last().unwrap();
    let rel = (at_100 - e_star).abs() / e_star;
    let grid = grid_cross_check(built);
    let cross = (grid - e_star).abs() < 0.02;
    let c1 = Outcome {
        pass: monotone && rel <= OPTIMALITY_TOL && cross,
        detail: format!(
            "energy by V {:?}, e* {e_star:.6} (grid {grid:.4}), V=100 off by {:.2}%",
            energy.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>(),
            100.0 * rel
        ),
    };

    let lambda = SchedulingInstance::table1().arrival_rates();
    let runs_100 = sweep.runs.last().unwrap();
    let worst: Vec<f64> = (0..3)
        .map(|l| runs_100.iter().map(|m| -m.avg_metrics[l]).fold(f64::INFINITY, f64::min))
        .collect();
    let c2 = Outcome {
        pass: worst.iter().zip(&lambda).all(|(mu, lam)| *mu >= lam - SERVICE_SLACK),
        detail: format!("lowest service rate per class over seeds {worst:.4?} vs arrival rates {lambda:?}"),
    };

    let avg_queue = |vi: usize| -> Vec<f64> { (0..3).map(|l| mean(sweep.runs[vi].iter().map(|m| m.avg_queues[l]))).collect() };
    let q10 = avg_queue(V_SWEEP.iter().position(|&v| v == 10.0).unwrap());
    let q100 = avg_queue(V_SWEEP.len() - 1);
    let grown = q10.iter().zip(&q100).filter(|(a, b)| b > a).count();
    let c3 = Outcome {
        pass: grown >= 2,
        detail: format!("avg queues V=10 {q10:.2?}, V=100 {q100:.2?}, {grown} of 3 classes grew"),
    };
    (c1, c2, c3)
}

fn criterion_4(built: &BuiltInstance, e_star: f64, tally: &mut PathTally) -> Outcome {
    struct Point {
        eps: f64,
        gap: f64,
        gap_se: f64,
        violation: f64,
        violation_se: f64,
    }
    let mut points = Vec::new();
    for eps in [0.2f64, 0.1] {
        let v = 1.0 / eps;
        let slots = (10.0 / (eps * eps)).ceil() as u64;
        let results: Vec<(RunMetrics, SamplePathCheck)> =
            (0..CONVERGENCE_SEEDS).into_par_iter().map(|s| dpp_run(built, v, slots, 1000 + s)).collect();
        let mut gaps = Vec::new();
        let mut violations = Vec::new();
        for (m, path) in &results {
            tally.add(path);
            gaps.push(m.avg_penalty - e_star);
            let worst = m.avg_metrics.iter().zip(&built.lp.bounds).fold(0.0f64, |a, (g, d)| a.max(g - d));
            violations.push(worst);
        }
        points.push(Point {
            eps,
            gap: mean(gaps.iter().copied()).abs(),
            gap_se: std_error(&gaps),
            violation: mean(violations.iter().copied()),
            violation_se: std_error(&violations),
        });
    }
    let within = points.iter().all(|p| p.gap <= 5.0 * p.eps && p.violation <= 5.0 * p.eps);
    let (coarse, fine) = (&points[0], &points[1]);
    let noise = |a: f64, b: f64| 3.0 * (a * a + b * b).sqrt();
    let scaling = fine.gap <= coarse.gap + noise(coarse.gap_se, fine.gap_se)
        && fine.violation <= coarse.violation + noise(coarse.violation_se, fine.violation_se);
    Outcome {
        pass: within && scaling,
        detail: points
            .iter()
            .map(|p| {
                format!(
                    "eps {}: gap {:.4} +- {:.4}, violation {:.4} +- {:.4} (limit {:.2})",
                    p.eps,
                    p.gap,
                    p.gap_se,
                    p.violation,
                    p.violation_se,
                    5.0 * p.eps
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn criterion_5(tally: &mut PathTally) -> Outcome {
    let cfg = parse_config("[instance]\npreset = table1\n[run]\nv = 1 10 100\nslots = 10^4\ndiagnostics = check\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_experiment(&cfg, dir.path()).unwrap();
    let (checked, violations) = report
        .cells
        .iter()
        .filter_map(|c| c.key_feature)
        .fold((0, 0), |(c, v), (c2, v2)| (c + c2, v + v2));
    let mut path_violations = 0;
    for cell in &report.cells {
        tally.runs += 1;
        tally.checked += cell.metrics.slots * 3;
        tally.violations += cell.sample_path_violations;
        path_violations += cell.sample_path_violations;
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    Outcome {
        pass: checked > 0 && violations == 0 && path_violations == 0 && summary.lines().count() == 4,
        detail: format!("{checked} decisions checked over 3 runs of 10^4 slots, {violations} violation(s)"),
    }
}

fn random_triples(rng: &mut ChaCha8Rng) -> (Vec<PerformanceTriple>, Vec<f64>, f64) {
    let dim = rng.random_range(1..=4);
    let actions = rng.random_range(1..=8);
    let triples = (0..actions)
        .map(|_| {
            PerformanceTriple::new(
                rng.random_range(-10.0..10.0),
                (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(),
                rng.random_range(1.0..20.0),
            )
        })
        .collect();
    let q = (0..dim).map(|_| rng.random_range(0.0..50.0)).collect();
    (triples, q, rng.random_range(0.0..100.0))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut hull_mismatch = 0;
    for _ in 0..1000 {
        let (triples, q, v) = random_triples(&mut rng);
        let actions = triples
            .iter()
            .map(|t| ActionSpec::new(t.clone(), FrameSpec::constant(1, 0.0, vec![0.0; t.dim()])))
            .collect();
        let model = RenewalSystemModel::with_derived_bounds(actions, 1.0).unwrap();
        let q = VirtualQueueVector::from_values(q).unwrap();
        let e = solve_enumerate(&model, &q, v).unwrap();
        let b = solve_bisection(&model, &q, v, 1e-9).unwrap();
        let h = solve_hull_vertices(&triples, &q, v).unwrap();
        worst = worst.max((e.value - b.solution.value).abs()).max((e.value - h.value).abs());
        if e.action != h.action {
            hull_mismatch += 1;
        }
    }
    Outcome {
        pass: worst <= SOLVER_TOL,
        detail: format!("1000 instances, largest value difference {worst:.2e}, {hull_mismatch} argmin mismatch(es)"),
    }
}

fn random_lp(rng: &mut ChaCha8Rng) -> StationaryLp {
    // at most two free weight dimensions keeps a 500-point grid tractable
    let shape: &[usize] = match rng.random_range(0..3) {
        0 => &[2],
        1 => &[3],
        _ => &[2, 2],
    };
    let dim = rng.random_range(1..=2);
    let systems: Vec<Vec<PerformanceVector>> = shape
        .iter()
        .map(|&k| {
            (0..k)
                .map(|_| PerformanceVector {
                    f_hat: rng.random_range(-1.0..1.0),
                    g_hat: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                })
                .collect()
        })
        .collect();
    let bounds = (0..dim).map(|_| rng.random_range(-0.8..0.8) * shape.len() as f64).collect();
    let directions = (0..dim)
        .map(|_| if rng.random_bool(0.5) { ConstraintDirection::Le } else { ConstraintDirection::Ge })
        .collect();
    StationaryLp::new(systems, bounds, directions).unwrap()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tol = 2.0 / LP_GRID as f64;
    let mut worst = 0.0f64;
    let mut status_mismatch = 0;
    let mut infeasible = 0;
    for _ in 0..50 {
        let lp = random_lp(&mut rng);
        let simplex = solve_lp(&lp).unwrap();
        let oracle = brute_force_oracle(&lp, LP_GRID).unwrap();
        if simplex.status != oracle.status {
            status_mismatch += 1;
        } else if simplex.status == LpStatus::Optimal {
            worst = worst.max((simplex.objective - oracle.objective).abs());
        } else {
            infeasible += 1;
        }
    }
    Outcome {
        pass: status_mismatch == 0 && worst <= tol,
        detail: format!(
            "50 instances ({infeasible} infeasible), largest objective difference {worst:.2e} (limit {tol:.0e}), {status_mismatch} status mismatch(es)"
        ),
    }
}

fn criterion_9(built: &BuiltInstance) -> Outcome {
    let sol = solve_lp(&built.lp).unwrap();
    let reference = extract_reference_point(&built.lp, &sol).unwrap();
    let weights = stationary_policy_weights(&built.models, &sol).unwrap();
    let sweep = run_stationary_sweep(&built.models, &built.external, &weights, SWEEP_SLOTS, 9).unwrap();
    let n = sweep.systems.len();
    let f_star: f64 = reference.iter().map(|r| r.f_hat).sum();
    let f_emp: f64 = sweep.systems.iter().map(|s| s.empirical_f).sum();
    let f_se = sweep.systems.iter().map(|s| s.f_std_error.powi(2)).sum::<f64>().sqrt();
    let mut z = vec![(f_emp - f_star).abs() / f_se];
    let mut pass = (f_emp - f_star).abs() <= 4.0 * f_se;
    for l in 0..built.lp.dim() {
        let g_star: f64 = reference.iter().map(|r| r.g_hat[l]).sum();
        let g_emp: f64 = sweep.systems.iter().map(|s| s.empirical_g[l]).sum();
        let g_se = sweep.systems.iter().map(|s| s.g_std_error[l].powi(2)).sum::<f64>().sqrt();
        pass &= (g_emp - g_star).abs() <= 4.0 * g_se;
        z.push((g_emp - g_star).abs() / g_se);
    }
    // the renewal-reward prediction of the derived weights is the reference point itself
    let consistent = (0..n).all(|i| {
        let s = &sweep.systems[i];
        (s.predicted_f - reference[i].f_hat).abs() < 1e-9
            && s.predicted_g.iter().zip(&reference[i].g_hat).all(|(a, b)| (a - b).abs() < 1e-9)
    });
    Outcome {
        pass: pass && consistent,
        detail: format!("f* {f_star:.4} vs {f_emp:.4}; |error| / SE for (f, g_1..g_3) = {z:.2?}"),
    }
}

fn criterion_10(built: &BuiltInstance, tally: &mut PathTally) -> Outcome {
    let v = 10.0;
    let sol = solve_lp(&built.lp).unwrap();
    let reference = extract_reference_point(&built.lp, &sol).unwrap();
    let mut drift = DriftDiagnostic::for_models(&built.models, &built.external, reference, v).unwrap();
    let mut path = SamplePathCheck::new(3);
    run(&built.models, &built.external, &PolicySpec::dpp(v).unwrap(), &RunConfig::new(100_000, 10), (&mut drift, &mut path))
        .unwrap();
    tally.add(&path);
    let summaries = drift.summaries();
    let worst = summaries.iter().max_by(|a, b| a.mean_excess.total_cmp(&b.mean_excess)).unwrap();
    Outcome {
        pass: summaries.iter().all(|s| s.holds && s.frames > 0),
        detail: format!(
            "worst per-frame mean excess {:.1} +- {:.1} over {} frames",
            worst.mean_excess, worst.std_error, worst.frames
        ),
    }
}

fn main() {
    let built = table1();
    let e_star = solve_lp(&built.lp).unwrap().objective;
    let mut tally = PathTally::default();

    let (c1, c2, c3) = criteria_1_to_3(&built, e_star, &mut tally);
    let c4 = criterion_4(&built, e_star, &mut tally);
    let c5 = criterion_5(&mut tally);
    let c7 = criterion_7();
    let c8 = criterion_8();
    let c9 = criterion_9(&built);
    let c10 = criterion_10(&built, &mut tally);
    let c6 = Outcome {
        pass: tally.violations == 0 && tally.runs > 0,
        detail: format!("{} runs, {} queue-slot checks, {} violation(s)", tally.runs, tally.checked, tally.violations),
    };

    let outcomes = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10];
    for (i, o) in outcomes.iter().enumerate() {
        println!("criterion {:>2}: {}  {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().enumerate().filter(|(_, o)| !o.pass).map(|(i, _)| i + 1).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
