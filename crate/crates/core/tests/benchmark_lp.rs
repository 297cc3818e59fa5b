use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewal_dpp::{
    brute_force_oracle, build_instance, extract_reference_point, solve_lp, stationary_policy_weights,
    ConstraintDirection, LpStatus, PerformanceVector, SchedulingInstance, StationaryLp,
};

/// Closed form for the preset: class 1 has slack, so classes 2 and 3 get
/// exactly enough server time to meet their arrival rates and class 1 takes
/// the rest.
fn table1_closed_form() -> f64 {
    let f = [23.5 / 8.0, (20.0 + 3.0 * 4.3) / 8.9, (13.0 + 3.0 * 3.7) / 7.5];
    let x2 = 3.0 * 8.9 / 21.0;
    let x3 = 4.0 * 7.5 / 17.0;
    let x1 = 5.0 - x2 - x3;
    assert!(x1 * 15.0 / 8.0 > 2.0);
    f[0] * x1 + f[1] * x2 + f[2] * x3
}

/// The five identical servers share one optimal weight vector, so the grid
/// search runs on a single server with bounds divided by five.
fn symmetric_reduction(lp: &StationaryLp, servers: usize) -> StationaryLp {
    StationaryLp::new(
        vec![lp.systems[0].clone()],
        lp.bounds.iter().map(|d| d / servers as f64).collect(),
        lp.directions.clone(),
    )
    .unwrap()
}

#[test]
fn table1_lp_matches_closed_form() {
    let built = build_instance(&SchedulingInstance::table1()).unwrap();
    let sol = solve_lp(&built.lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    let e_star = table1_closed_form();
    assert!((sol.objective - e_star).abs() < 1e-9, "{} vs {e_star}", sol.objective);
    assert!((e_star - 16.139_44).abs() < 1e-4);
    // service constraints of classes 2 and 3 bind, class 1 is slack
    assert!((sol.achieved[1] + 3.0).abs() < 1e-9);
    assert!((sol.achieved[2] + 4.0).abs() < 1e-9);
    assert!(sol.achieved[0] < -2.0 - 1.0);
    assert_eq!(sol.multipliers[0], 0.0);
    assert!(sol.multipliers[1] > 0.0 && sol.multipliers[2] > 0.0);
    for w in &sol.weights {
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|x| *x >= 0.0));
    }
}

#[test]
fn table1_lp_matches_symmetric_grid_search() {
    let built = build_instance(&SchedulingInstance::table1()).unwrap();
    let simplex = solve_lp(&built.lp).unwrap().objective;
    let reduced = symmetric_reduction(&built.lp, 5);
    let fine = brute_force_oracle(&reduced, 600).unwrap();
    assert!((5.0 * fine.objective - simplex).abs() < 0.02, "{}", 5.0 * fine.objective);
    // at resolution 1/60 the nearest feasible grid point sits 0.066 above the optimum
    let coarse = brute_force_oracle(&reduced, 60).unwrap();
    let gap = 5.0 * coarse.objective - simplex;
    assert!((0.0..0.1).contains(&gap), "{gap}");
}

#[test]
fn reference_point_and_policy_weights() {
    let built = build_instance(&SchedulingInstance::table1()).unwrap();
    let sol = solve_lp(&built.lp).unwrap();
    let reference = extract_reference_point(&built.lp, &sol).unwrap();
    let total_f: f64 = reference.iter().map(|r| r.f_hat).sum();
    assert!((total_f - sol.objective).abs() < 1e-9);
    for l in 0..3 {
        let g: f64 = reference.iter().map(|r| r.g_hat[l]).sum();
        assert!(g <= built.lp.bounds[l] + 1e-9);
    }
    // p ~ theta / t_hat; mapping back with q_i = p_i T_i / sum p_j T_j recovers theta
    let p = stationary_policy_weights(&built.models, &sol).unwrap();
    for (n, model) in built.models.iter().enumerate() {
        let denom: f64 = p[n].iter().zip(model.triples()).map(|(p, t)| p * t.t_hat).sum();
        for (a, t) in model.triples().enumerate() {
            assert!((p[n][a] * t.t_hat / denom - sol.weights[n][a]).abs() < 1e-12);
        }
    }
}

#[test]
fn point_mass_reference() {
    let lp = StationaryLp::new(
        vec![vec![
            PerformanceVector { f_hat: 1.0, g_hat: vec![0.5] },
            PerformanceVector { f_hat: 2.0, g_hat: vec![0.0] },
        ]],
        vec![1.0],
        vec![ConstraintDirection::Le],
    )
    .unwrap();
    let sol = solve_lp(&lp).unwrap();
    assert_eq!(sol.weights, vec![vec![1.0, 0.0]]);
    let r = extract_reference_point(&lp, &sol).unwrap();
    assert_eq!(r[0], PerformanceVector { f_hat: 1.0, g_hat: vec![0.5] });
}

fn random_lp(rng: &mut ChaCha8Rng) -> StationaryLp {
    // at most two free weight dimensions keeps grid = 500 under the point limit
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
    StationaryLp::new(systems, bounds, vec![ConstraintDirection::Le; dim]).unwrap()
}

#[test]
fn random_instances_weak_duality_and_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let grid = 200;
    let mut feasible = 0;
    for _ in 0..40 {
        let lp = random_lp(&mut rng);
        let simplex = solve_lp(&lp).unwrap();
        let oracle = brute_force_oracle(&lp, grid).unwrap();
        if oracle.status == LpStatus::Optimal {
            // any exactly feasible grid point is no better than the LP optimum
            assert_eq!(simplex.status, LpStatus::Optimal);
            assert!(oracle.objective >= simplex.objective - 1e-6);
            assert!((oracle.objective - simplex.objective).abs() <= 2.0 / grid as f64 * lp.systems.len() as f64);
            feasible += 1;
        }
        if simplex.status == LpStatus::Infeasible {
            assert_eq!(oracle.status, LpStatus::Infeasible);
        }
    }
    assert!(feasible > 10);
}
