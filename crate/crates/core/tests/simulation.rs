use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renewal_dpp::{
    build_instance, run, run_stationary_sweep, validate_model, ActionSpec, ArrivalDist, ArrivalSpec, Decision,
    ExternalProcess, FrameSpec, KeyFeatureCheck, LengthDist, Observer, PerformanceTriple, PhaseSpec, PolicySpec,
    RenewalSystemModel, RunConfig, SamplePathCheck, SchedulingInstance, SlotRecord, SolverKind, TradeoffParameter,
};

fn table1() -> (SchedulingInstance, renewal_dpp::BuiltInstance) {
    let inst = SchedulingInstance::table1();
    let built = build_instance(&inst).unwrap();
    (inst, built)
}

#[test]
fn runs_are_reproducible() {
    let (_, built) = table1();
    let policy = PolicySpec::dpp(20.0).unwrap();
    let config = RunConfig::new(20_000, 17).with_trajectory();
    let a = run(&built.models, &built.external, &policy, &config, ()).unwrap();
    let b = run(&built.models, &built.external, &policy, &config, ()).unwrap();
    assert_eq!(a, b);
    let c = run(&built.models, &built.external, &policy, &RunConfig::new(20_000, 18), ()).unwrap();
    assert_ne!(a.penalty_sum, c.penalty_sum);
}

#[test]
fn adding_a_system_leaves_other_draws_alone() {
    let (_, built) = table1();
    let weights = vec![vec![0.2, 0.5, 0.3]; 5];
    let policy = |n: usize| PolicySpec::RandomizedStationary { weights: weights[..n].to_vec() };
    let config = RunConfig::new(5_000, 3);
    let small = run(&built.models[..2], &built.external, &policy(2), &config, ()).unwrap();
    let large = run(&built.models, &built.external, &policy(5), &config, ()).unwrap();
    assert_eq!(small.external_sums, large.external_sums);
    assert_eq!(small.system_penalty_sums[..], large.system_penalty_sums[..2]);
    assert_eq!(small.system_metric_sums[..], large.system_metric_sums[..6]);
}

#[test]
fn no_check_violations_for_any_solver() {
    let (_, built) = table1();
    for solver in [SolverKind::Enumerate, SolverKind::Bisection { tol: 1e-9 }, SolverKind::HullVertices] {
        for v in [0.5, 10.0, 200.0] {
            let policy = PolicySpec::DppRatio { v: TradeoffParameter::new(v).unwrap(), solver };
            let mut key = KeyFeatureCheck::new(&built.models, v);
            let mut path = SamplePathCheck::new(3);
            let m = run(&built.models, &built.external, &policy, &RunConfig::new(20_000, 5), (&mut key, &mut path))
                .unwrap();
            assert_eq!(key.violations, 0, "{solver:?} V={v}");
            assert_eq!(path.violations, 0, "{solver:?} V={v}");
            assert_eq!(path.checked, 20_000 * 3);
            assert_eq!(key.checked, m.frames_per_system.iter().sum::<u64>());
        }
    }
}

#[test]
fn bookkeeping_is_consistent() {
    let (_, built) = table1();
    let slots = 30_001;
    let m = run(&built.models, &built.external, &PolicySpec::dpp(7.0).unwrap(), &RunConfig::new(slots, 2), ())
        .unwrap();
    assert!(m.slots_covered.iter().all(|&s| s == slots));
    assert_eq!(m.avg_penalty, m.penalty_sum / slots as f64);
    for l in 0..3 {
        assert_eq!(m.avg_metrics[l], m.metric_sums[l] / slots as f64);
        assert_eq!(m.avg_queues[l], m.queue_sums[l] / slots as f64);
        assert_eq!(m.avg_external[l], m.external_sums[l] / slots as f64);
    }
    let per_system: f64 = m.system_penalty_sums.iter().sum();
    assert!((per_system - m.penalty_sum).abs() <= 1e-9 * m.penalty_sum);
}

#[test]
fn stationary_two_action_average() {
    // geometric frames of mean 2 paying 1 or 2 per slot, chosen evenly
    let action = |cost: f64| {
        ActionSpec::from_frame(FrameSpec::new(
            vec![PhaseSpec::new(LengthDist::Geometric { mean: 2.0 }, 1).with_slot_penalty(cost)],
            1,
        ))
    };
    let model = RenewalSystemModel::with_derived_bounds(vec![action(1.0), action(2.0)], 10.0).unwrap();
    assert_eq!(model.actions()[1].triple, PerformanceTriple::new(4.0, vec![0.0], 2.0));
    let ext = ExternalProcess::new(vec![ArrivalSpec::new(ArrivalDist::Deterministic(0.0))]).unwrap();
    let sweep = run_stationary_sweep(&[model], &ext, &[vec![0.5, 0.5]], 100_000, 11).unwrap();
    let s = &sweep.systems[0];
    assert_eq!(s.predicted_f, 1.5);
    assert!((s.empirical_f - 1.5).abs() <= 4.0 * s.f_std_error, "{} +- {}", s.empirical_f, s.f_std_error);
    assert!(s.completed_frames > 40_000);
}

/// Replays the job-count form of the queue update next to the simulator.
struct JobQueues {
    queues: Vec<f64>,
    mismatches: u64,
}

impl Observer for JobQueues {
    fn on_slot(&mut self, record: &SlotRecord<'_>) {
        for l in 0..self.queues.len() {
            let arrivals = -record.external[l];
            let served = -record.metric_sum[l];
            self.queues[l] = (self.queues[l] + arrivals - served).max(0.0);
            if self.queues[l] != record.next_queues[l] {
                self.mismatches += 1;
            }
        }
    }
}

#[test]
fn queues_follow_job_counts() {
    let (_, built) = table1();
    let mut obs = JobQueues { queues: vec![0.0; 3], mismatches: 0 };
    run(&built.models, &built.external, &PolicySpec::dpp(10.0).unwrap(), &RunConfig::new(50_000, 4), &mut obs)
        .unwrap();
    assert_eq!(obs.mismatches, 0);
}

/// Checks the shape of every sampled server frame.
struct FrameShape<'a> {
    inst: &'a SchedulingInstance,
    frames: u64,
}

impl Observer for FrameShape<'_> {
    fn on_decision(&mut self, d: &Decision<'_>) {
        let class = &self.inst.classes[d.action];
        let out = d.outcome;
        let spread = class.energy / out.length as f64;
        let idle = out.penalty.iter().filter(|y| **y > spread + 1e-9).count() as f64;
        assert!(idle >= 1.0 && idle < out.length as f64);
        let expected = class.energy + self.inst.idle_power * idle;
        assert!((out.total_penalty() - expected).abs() < 1e-9);
        // service credited once, at the end of the service phase
        let credited: Vec<usize> =
            (0..out.length as usize).filter(|&s| out.metrics_at(s).iter().any(|z| *z != 0.0)).collect();
        assert_eq!(credited.len(), 1);
        let row = out.metrics_at(credited[0]);
        let (lo, hi) = class.service_count;
        assert!(-row[d.action] >= lo as f64 && -row[d.action] <= hi as f64);
        assert_eq!(row.iter().filter(|z| **z != 0.0).count(), 1);
        assert_eq!(out.length as usize - credited[0] - 1, idle as usize);
        self.frames += 1;
    }
}

#[test]
fn server_frames_have_expected_shape() {
    let (inst, built) = table1();
    let mut obs = FrameShape { inst: &inst, frames: 0 };
    let weights = vec![vec![1.0 / 3.0; 3]; 5];
    run(&built.models, &built.external, &PolicySpec::RandomizedStationary { weights }, &RunConfig::new(20_000, 8), &mut obs)
        .unwrap();
    assert!(obs.frames > 5_000);
}

#[test]
fn server_frames_match_declared_triples() {
    let (_, built) = table1();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let report = validate_model(&built.models[0], 100_000, &mut rng);
    for a in &report.actions {
        assert!(a.max_z_score() < 4.0, "action {:?} z={}", a.action, a.max_z_score());
    }
    assert!(report.is_clean());
}
