//! Self-check suites behind `glevy check`: the closed-form identities of the
//! G-Poisson process, the solution-map axioms, generator consistency, the
//! nested engine and the matrix ordering facts, each reported as a measured
//! deviation against a fixed threshold.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{self, CylinderFunctional, EngineConfig};
use crate::error::Result;
use crate::gpoisson::{gpoisson_closed_form, series_solution, Direction};
use crate::grid::{GridFunction, GridSpec};
use crate::levy_khintchine::{g_operator, small_time_quotient, TestFunction};
use crate::matrix::{gamma_transform, j_matrix, SymMatrix};
use crate::model::{validate_uncertainty_set, Payoff, ScenarioData, UncertaintySet};
use crate::pide::{PreparedOperator, SchemeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

struct Report(Vec<CheckRow>);

impl Report {
    /// Records a deviation that must not exceed `threshold`.
    fn at_most(
        &mut self,
        suite: &'static str,
        name: impl Into<String>,
        measured: f64,
        threshold: f64,
    ) {
        self.0.push(CheckRow {
            suite,
            name: name.into(),
            measured,
            threshold,
            pass: measured <= threshold,
        });
    }
}

pub fn render(rows: &[CheckRow]) -> String {
    let mut out = String::from("suite,name,measured,threshold,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6e},{:.6e},{}\n",
            r.suite,
            r.name,
            r.measured,
            r.threshold,
            if r.pass { "PASS" } else { "FAIL" }
        ));
    }
    out
}

/// `E[f(N)]`, `N ~ Poisson(mu)`, summed over a fixed 400 terms.
fn poisson_brute(f: impl Fn(usize) -> f64, mu: f64) -> f64 {
    if mu == 0.0 {
        return f(0);
    }
    let mut log_fact = 0.0;
    (0..400)
        .map(|k| {
            if k > 0 {
                log_fact += (k as f64).ln();
            }
            (k as f64 * mu.ln() - mu - log_fact).exp() * f(k)
        })
        .sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest positive part of `a − b` (zero when `a ≤ b` everywhere).
fn max_excess(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).max(0.0))
        .fold(0.0, f64::max)
}

fn core_suite(rep: &mut Report, seed: u64) -> Result<()> {
    let set = UncertaintySet::new(vec![
        ScenarioData::poisson(1.0, 0.5).with_diffusion(vec![vec![0.3]]),
        ScenarioData::poisson(-2.0, 0.25).with_drift(vec![0.1]),
    ])?;
    let again = validate_uncertainty_set(&set.to_data())?;
    rep.at_most(
        "core",
        "validate_idempotent",
        if again == set { 0.0 } else { 1.0 },
        0.0,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = GridSpec::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![6, 9])?;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let low: Vec<f64> = (0..spec.len())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let high: Vec<f64> = low.iter().map(|v| v + rng.random_range(0.0..1.0)).collect();
        let gl = GridFunction::new(spec.clone(), low, 0.0)?;
        let gh = GridFunction::new(spec.clone(), high, 0.0)?;
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-1.0..3.0)];
        worst = worst.max(gl.interpolate(&x) - gh.interpolate(&x));
    }
    rep.at_most("core", "interpolation_monotone", worst.max(0.0), 0.0);
    Ok(())
}

fn gpoisson_suite(rep: &mut Report) -> Result<()> {
    let payoffs: Vec<(&str, Payoff)> = vec![
        ("clip_linear", Payoff::clip_linear(1e6)?),
        ("ramp", Payoff::indicator_ramp(0.5, 3.5)?),
        ("tanh", Payoff::new(|x| (x[0] - 1.0).tanh(), 1.0, 1.0)?),
    ];
    let mut worst = 0.0f64;
    for (_, p) in &payoffs {
        for lambda in [0.0, 0.3, 1.0] {
            for t in [0.5, 1.0, 2.0] {
                for (dir, sign) in [(Direction::Increasing, 1.0), (Direction::Decreasing, -1.0)] {
                    let q = p.scaled(sign)?;
                    let v = gpoisson_closed_form(&q, dir, lambda, t, 0.25, 1e-12)?;
                    let mu = if sign > 0.0 { t } else { lambda * t };
                    let oracle = poisson_brute(|k| q.eval(&[0.25 + k as f64]), mu);
                    worst = worst.max((v - oracle).abs());
                }
            }
        }
    }
    rep.at_most("gpoisson", "closed_form_vs_poisson_series", worst, 1e-9);

    let set = UncertaintySet::g_poisson(0.5)?;
    let grid = GridSpec::line(-10.0, 50.0, 0.05)?;
    let op = PreparedOperator::new(&set, &grid)?;
    let cfg = SchemeConfig::default();
    let id = Payoff::clip_linear(45.0)?;
    let up = op.solve(&id, &cfg, &[1.0])?.evaluate(1.0, &[0.0])?;
    rep.at_most("gpoisson", "solver_mean_upper", (up - 1.0).abs(), 1e-2);
    let down = op
        .solve(&id.scaled(-1.0)?, &cfg, &[1.0])?
        .evaluate(1.0, &[0.0])?;
    rep.at_most("gpoisson", "solver_mean_lower", (down + 0.5).abs(), 1e-2);

    let growth = Payoff::new(|x| (0.25 * x[0]).exp().min(1e3), 1e3, 250.0)?;
    let phi0 = GridFunction::sample(&grid, &growth, 0.0)?;
    let series = series_solution(&phi0, &set.jump_measures(), 1.0, 1e-8)?;
    let solver = op.run(phi0.values().to_vec(), &cfg, &[1.0])?;
    let at = grid.node_index(&[0.0]).expect("origin is a node");
    rep.at_most(
        "gpoisson",
        "series_vs_solver",
        (series.values()[at] - solver.snapshots[0].values()[at]).abs(),
        5.0 * 0.05 + 1e-8,
    );
    Ok(())
}

fn solver_suite(rep: &mut Report) -> Result<()> {
    let set = UncertaintySet::new(vec![
        ScenarioData::poisson(1.0, 0.5)
            .with_diffusion(vec![vec![0.3]])
            .with_drift(vec![0.2]),
        ScenarioData::poisson(1.0, 1.0)
            .with_diffusion(vec![vec![0.6]])
            .with_drift(vec![-0.1]),
    ])?;
    let grid = GridSpec::line(-6.0, 10.0, 0.1)?;
    let op = PreparedOperator::new(&set, &grid)?;
    let cfg = SchemeConfig::default().with_final_time(0.5);
    let times = [0.25, 0.5];
    let phi = Payoff::new(
        |x| (1.5 * x[0]).sin() + 0.3 * x[0].clamp(-3.0, 3.0),
        1.9,
        1.8,
    )?;
    let psi = Payoff::indicator_ramp(-1.0, 2.0)?;
    let run = |p: &Payoff| -> Result<Vec<Vec<f64>>> {
        Ok(op
            .solve(p, &cfg, &times)?
            .snapshots
            .into_iter()
            .map(GridFunction::into_values)
            .collect())
    };
    let u_phi = run(&phi)?;
    let u_psi = run(&psi)?;

    let bigger = phi.sum(&Payoff::indicator_ramp(0.0, 1.0)?)?;
    let u_big = run(&bigger)?;
    let mono = (0..2)
        .map(|i| max_excess(&u_phi[i], &u_big[i]))
        .fold(0.0, f64::max);
    rep.at_most("solver", "monotonicity", mono, 1e-12);

    let u_c = run(&Payoff::constant(0.8)?)?;
    let cons = u_c
        .iter()
        .flatten()
        .map(|v| (v - 0.8).abs())
        .fold(0.0, f64::max);
    rep.at_most("solver", "constant_preservation", cons, 1e-12);

    let u_scaled = run(&phi.scaled(2.5)?)?;
    let homog = (0..2)
        .map(|i| {
            let scaled: Vec<f64> = u_phi[i].iter().map(|v| 2.5 * v).collect();
            max_abs_diff(&u_scaled[i], &scaled)
        })
        .fold(0.0, f64::max);
    rep.at_most("solver", "positive_homogeneity", homog, 1e-12);

    let u_sum = run(&phi.sum(&psi)?)?;
    let sub = (0..2)
        .map(|i| {
            let rhs: Vec<f64> = u_phi[i].iter().zip(&u_psi[i]).map(|(a, b)| a + b).collect();
            max_excess(&u_sum[i], &rhs)
        })
        .fold(0.0, f64::max);
    rep.at_most("solver", "sub_additivity", sub, 1e-12);

    let u_shift = run(&phi.shifted(-1.3)?)?;
    let shift = (0..2)
        .map(|i| {
            let rhs: Vec<f64> = u_phi[i].iter().map(|v| v - 1.3).collect();
            max_abs_diff(&u_shift[i], &rhs)
        })
        .fold(0.0, f64::max);
    rep.at_most("solver", "cash_translation", shift, 1e-12);

    let mut convex = 0.0f64;
    for lambda in [0.25, 0.5, 0.75] {
        let mix = run(&Payoff::combination(lambda, &phi, 1.0 - lambda, &psi)?)?;
        for i in 0..2 {
            let rhs: Vec<f64> = u_phi[i]
                .iter()
                .zip(&u_psi[i])
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect();
            convex = convex.max(max_excess(&mix[i], &rhs));
        }
    }
    rep.at_most("solver", "convexity", convex, 1e-12);

    let phi_grid = GridFunction::sample(&grid, &phi, 0.0)?;
    let (lo, hi) = phi_grid
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let outside = u_phi
        .iter()
        .flatten()
        .map(|&v| (lo - v).max(v - hi).max(0.0))
        .fold(0.0, f64::max);
    rep.at_most("solver", "maximum_principle", outside, 1e-12);

    let quarter = GridFunction::new(grid.clone(), u_phi[0].clone(), 0.25)?;
    let mut semigroup = 0.0f64;
    let inner = cfg.with_final_time(0.25);
    for x in [-1.0, 0.0, 1.0, 2.0] {
        let restart = quarter.clone();
        let shifted = Payoff::new(move |y| restart.interpolate(&[x + y[0]]), 2.0, 2.0)?;
        let v = op
            .solve(&shifted, &inner, &[0.25])?
            .evaluate(0.25, &[0.0])?;
        let direct = u_phi[1][grid.node_index(&[x]).expect("node")];
        semigroup = semigroup.max((v - direct).abs());
    }
    rep.at_most("solver", "semigroup", semigroup, 5.0 * 0.1);
    Ok(())
}

fn generator_suite(rep: &mut Report) -> Result<()> {
    let set = UncertaintySet::g_poisson(0.5)?;
    let cfg = SchemeConfig::default();
    for (name, height) in [("bump_up", 1.0), ("bump_down", -1.0)] {
        let f = TestFunction::bump(1.0, 0.5, height)?;
        let target = g_operator(&f, &set)?;
        let mut errors = Vec::new();
        for (delta, dx) in [(0.1, 0.05), (0.05, 0.025), (0.025, 0.02)] {
            let grid = GridSpec::line(-2.0, 4.0, dx)?;
            errors.push((small_time_quotient(&f, &set, delta, &grid, &cfg)? - target).abs());
        }
        let increase = errors
            .windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .fold(0.0, f64::max);
        rep.at_most(
            "generator",
            format!("{name}_error_decreasing"),
            increase,
            0.0,
        );
        rep.at_most(
            "generator",
            format!("{name}_error_at_0.025"),
            errors[2],
            5e-2,
        );
    }
    Ok(())
}

fn engine_suite(rep: &mut Report) -> Result<()> {
    let set = UncertaintySet::new(vec![ScenarioData::poisson(1.0, 1.0)])?;
    let inc = GridSpec::line(-10.0, 30.0, 0.05)?;
    let cfg = EngineConfig::new(
        SchemeConfig::default(),
        inc.clone(),
        GridSpec::line(-10.0, 30.0, 0.25)?,
    );
    let cap = |v: f64| v.clamp(-40.0, 3.0);
    let xi = CylinderFunctional::new(
        vec![0.5, 1.0],
        1,
        move |x: &[f64]| cap(x[0] + x[1]),
        40.0,
        1.0,
    )?;
    let v = engine::expectation(&xi, &set, &cfg)?;
    let oracle = poisson_brute(|k| cap(k as f64), 1.0);
    rep.at_most("engine", "two_period_classical", (v - oracle).abs(), 2e-2);

    let cond = engine::conditional_expectation(&xi, 1, &set, &cfg)?;
    let tower = engine::expectation(&engine::conditional_as_functional(&xi, cond)?, &set, &cfg)?;
    rep.at_most(
        "engine",
        "tower_property",
        (tower - v).abs(),
        2.0 * cfg.scheme.tolerance,
    );

    let single = CylinderFunctional::new(vec![1.0], 1, move |x: &[f64]| cap(x[0]), 40.0, 1.0)?;
    let step1 = engine::expectation(&single, &set, &cfg)?;
    let direct = crate::pide::solve(
        &Payoff::new(move |x| cap(x[0]), 40.0, 1.0)?,
        &set,
        &inc,
        &cfg.scheme.with_final_time(1.0),
        &[1.0],
    )?
    .evaluate(1.0, &[0.0])?;
    rep.at_most(
        "engine",
        "single_period_matches_solver",
        (step1 - direct).abs(),
        1e-12,
    );
    Ok(())
}

/// Pair `X ≤ Y < (1/γ) I` built from a random spectrum and a random PSD gap.
pub fn random_ordered_pair(n: usize, gamma: f64, rng: &mut impl Rng) -> (SymMatrix, SymMatrix) {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = raw.qr().q();
    let spectrum = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.random_range(-3.0..0.95) / gamma
    }));
    let y = &q * spectrum * q.transpose();
    let c = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) / gamma.sqrt());
    let x = &y - &c * c.transpose();
    let sym = |m: DMatrix<f64>| SymMatrix::new((&m + m.transpose()) * 0.5).expect("symmetric");
    (sym(x), sym(y))
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new((m + m.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn matrix_suite(rep: &mut Report, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut worst = 0.0f64;
    for n in [2, 4, 8] {
        for gamma in [0.05, 0.1, 0.2] {
            for _ in 0..100 {
                let (x, y) = random_ordered_pair(n, gamma, &mut rng);
                let xg = gamma_transform(&x, gamma)?;
                let yg = gamma_transform(&y, gamma)?;
                let floor = DMatrix::<f64>::identity(n, n) / gamma;
                for m in [
                    yg.matrix() - xg.matrix(),
                    xg.matrix() - x.matrix(),
                    xg.matrix() + floor,
                ] {
                    worst = worst.max(-min_eig(&m));
                }
            }
        }
    }
    rep.at_most("matrix", "gamma_transform_ordering", worst.max(0.0), 1e-9);

    let mut sq = 0.0f64;
    let mut scaling = 0.0f64;
    for n in 1..=4 {
        for d in 1..=3 {
            let j = j_matrix(n, d);
            sq = sq.max((j.matrix() * j.matrix() - j.matrix() * n as f64).amax());
            for gamma in [0.2 / n as f64, 0.6 / n as f64] {
                let jg = gamma_transform(&j, gamma)?;
                scaling = scaling.max((jg.matrix() - j.matrix() / (1.0 - n as f64 * gamma)).amax());
            }
        }
    }
    rep.at_most("matrix", "j_square", sq, 1e-10);
    rep.at_most("matrix", "j_gamma_scaling", scaling, 1e-10);
    Ok(())
}

/// Runs every suite. `seed` drives the randomised probes.
pub fn run_all(seed: u64) -> Result<Vec<CheckRow>> {
    let mut rep = Report(Vec::new());
    core_suite(&mut rep, seed)?;
    gpoisson_suite(&mut rep)?;
    solver_suite(&mut rep)?;
    generator_suite(&mut rep)?;
    engine_suite(&mut rep)?;
    matrix_suite(&mut rep, seed)?;
    Ok(rep.0)
}
