use glevy::{
    expectation, gpoisson_closed_form, CylinderFunctional, Direction, EngineConfig, GridFunction,
    GridSpec, Payoff, PreparedOperator, ScenarioData, SchemeConfig, UncertaintySet,
};
use proptest::prelude::*;

fn benchmark() -> (PreparedOperator, SchemeConfig) {
    let set = UncertaintySet::new(vec![
        ScenarioData::poisson(1.0, 0.5).with_diffusion(vec![vec![0.4]]),
        ScenarioData::poisson(-0.5, 0.8).with_drift(vec![0.3]),
    ])
    .unwrap();
    let grid = GridSpec::line(-6.0, 6.0, 0.1).unwrap();
    (
        PreparedOperator::new(&set, &grid).unwrap(),
        SchemeConfig::default().with_final_time(0.2),
    )
}

fn wave(a: f64, b: f64, c: f64) -> Payoff {
    Payoff::new(
        move |x| a * (b * x[0]).sin() + c * x[0].clamp(-2.0, 2.0),
        a.abs() + 2.0 * c.abs(),
        (a * b).abs() + c.abs(),
    )
    .unwrap()
}

fn final_values(op: &PreparedOperator, cfg: &SchemeConfig, p: &Payoff) -> Vec<f64> {
    op.solve(p, cfg, &[0.2])
        .unwrap()
        .snapshots
        .remove(0)
        .into_values()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sub_additive_and_homogeneous(
        a in -2.0f64..2.0, b in 0.1f64..3.0, c in -1.0f64..1.0,
        d in -2.0f64..2.0, e in 0.1f64..3.0, k in 0.0f64..5.0,
    ) {
        let (op, cfg) = benchmark();
        let phi = wave(a, b, c);
        let psi = wave(d, e, -c);
        let u = final_values(&op, &cfg, &phi);
        let v = final_values(&op, &cfg, &psi);
        let w = final_values(&op, &cfg, &phi.sum(&psi).unwrap());
        for i in 0..u.len() {
            prop_assert!(w[i] <= u[i] + v[i] + 1e-12);
        }
        let scaled = final_values(&op, &cfg, &phi.scaled(k).unwrap());
        for i in 0..u.len() {
            prop_assert!((scaled[i] - k * u[i]).abs() <= 1e-12 * (1.0 + k));
        }
    }

    #[test]
    fn upper_dominates_negated_lower(a in -2.0f64..2.0, b in 0.1f64..3.0, c in -1.0f64..1.0) {
        // Ê[φ] ≥ −Ê[−φ]
        let (op, cfg) = benchmark();
        let phi = wave(a, b, c);
        let up = final_values(&op, &cfg, &phi);
        let down = final_values(&op, &cfg, &phi.scaled(-1.0).unwrap());
        for i in 0..up.len() {
            prop_assert!(up[i] + down[i] >= -1e-12);
        }
    }

    #[test]
    fn closed_form_is_monotone_in_time(t in 0.0f64..3.0, dt in 0.0f64..1.0, lambda in 0.0f64..1.0) {
        let phi = Payoff::indicator_ramp(0.0, 4.0).unwrap();
        let a = gpoisson_closed_form(&phi, Direction::Increasing, lambda, t, 0.0, 1e-13).unwrap();
        let b = gpoisson_closed_form(&phi, Direction::Increasing, lambda, t + dt, 0.0, 1e-13).unwrap();
        prop_assert!(b >= a - 1e-12);
    }
}

#[test]
fn two_dimensional_solve_is_deterministic_across_pools() {
    // 81 × 81 nodes, large enough for the parallel sweep
    let set = UncertaintySet::new(vec![
        ScenarioData::zero(2)
            .with_atom(vec![1.0, 0.0], 0.5)
            .with_diffusion(vec![vec![0.5, 0.0], vec![0.2, 0.4]]),
        ScenarioData::zero(2)
            .with_atom(vec![0.0, -1.0], 1.0)
            .with_drift(vec![0.2, -0.1]),
    ])
    .unwrap();
    let grid = GridSpec::new(vec![-4.0, -4.0], vec![4.0, 4.0], vec![81, 81]).unwrap();
    let phi = Payoff::new(|x| (x[0] * x[1]).clamp(-2.0, 2.0), 2.0, 8.0).unwrap();
    let cfg = SchemeConfig::default().with_final_time(0.1);
    let solve = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                glevy::solve(&phi, &set, &grid, &cfg, &[0.1])
                    .unwrap()
                    .snapshots
            })
    };
    let serial = solve(1);
    let parallel = solve(4);
    assert_eq!(serial, parallel);
    let g: &GridFunction = &serial[0];
    assert!(g.values().iter().all(|v| v.abs() <= 2.0 + 1e-12));
}

#[test]
fn shifted_functional_matches_for_stationary_increments() {
    let set = UncertaintySet::g_poisson(0.4).unwrap();
    let cfg = EngineConfig::new(
        SchemeConfig::default(),
        GridSpec::line(-8.0, 20.0, 0.05).unwrap(),
        GridSpec::line(-8.0, 20.0, 0.25).unwrap(),
    );
    let xi = CylinderFunctional::new(
        vec![0.5, 1.0],
        1,
        |x: &[f64]| (x[0] - x[1]).clamp(-3.0, 3.0),
        3.0,
        1.0,
    )
    .unwrap();
    let a = expectation(&xi, &set, &cfg).unwrap();
    let b = expectation(&xi.shifted(2.0).unwrap(), &set, &cfg).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}
