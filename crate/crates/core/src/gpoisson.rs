//! The G-Poisson process (unit jumps, intensity uncertain in `[λ, 1]`) and
//! the power-series solution of pure-jump equations.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::model::{Atom, Payoff, ScenarioData, UncertaintySet};
use crate::pide::PreparedOperator;

/// Hard stop for series loops; the tail criteria stop far earlier.
const MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPoissonSpec {
    lambda: f64,
}

impl GPoissonSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(GPoissonSpec { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn uncertainty_set(&self) -> UncertaintySet {
        UncertaintySet::g_poisson(self.lambda).expect("lambda validated")
    }

    pub fn generator(&self, a: f64) -> f64 {
        g_lambda(a, self.lambda).expect("lambda validated")
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange(lambda))
    }
}

/// `G_λ(a) = a⁺ − λ a⁻`.
pub fn g_lambda(a: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(a.max(0.0) - lambda * (-a).max(0.0))
}

/// Monotonicity of the payoff, as declared by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// `Ê[φ(x + B_t)]` for a monotone one-dimensional payoff: a classical
/// Poisson expectation with intensity 1 (increasing `φ`) or `λ`
/// (decreasing `φ`). The series stops once the Poisson tail mass times
/// `bound(φ)` is below `tol`.
pub fn gpoisson_closed_form(
    payoff: &Payoff,
    direction: Direction,
    lambda: f64,
    t: f64,
    x: f64,
    tol: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    let intensity = match direction {
        Direction::Increasing => t,
        Direction::Decreasing => lambda * t,
    };
    poisson_expectation(
        |k| payoff.eval(&[x + k as f64]),
        intensity,
        payoff.bound(),
        tol,
    )
}

/// `Σ_k P(N = k) f(k)` for `N ~ Poisson(intensity)`, truncated when the
/// remaining tail mass times `bound` drops below `tol`.
pub(crate) fn poisson_expectation<F: Fn(usize) -> f64>(
    f: F,
    intensity: f64,
    bound: f64,
    tol: f64,
) -> Result<f64> {
    if intensity == 0.0 {
        return Ok(f(0));
    }
    let log_mu = intensity.ln();
    let mut log_fact = 0.0;
    let mut sum = 0.0;
    for k in 0..MAX_TERMS {
        if k > 0 {
            log_fact += (k as f64).ln();
        }
        let pmf = (k as f64 * log_mu - intensity - log_fact).exp();
        sum += pmf * f(k);
        // P(N > k) ≤ p_{k+1} / (1 − μ/(k+2)) once k + 2 > μ
        let next = k as f64 + 2.0;
        if next > intensity {
            let p_next = pmf * intensity / (k as f64 + 1.0);
            let tail = p_next / (1.0 - intensity / next);
            if tail * bound < tol {
                return Ok(sum);
            }
        }
    }
    Err(Error::InvalidTolerance(tol))
}

/// Number of series levels `N` with `Σ_{i>N} a^i/i! · bound < tol`.
fn series_levels(a: f64, bound: f64, tol: f64) -> usize {
    if a == 0.0 || bound == 0.0 {
        return 0;
    }
    // term = a^{N+1}/(N+1)!
    let mut term = a;
    for n in 0..MAX_TERMS {
        let next = n as f64 + 2.0;
        if next > a && term / (1.0 - a / next) * bound < tol {
            return n;
        }
        term *= a / next;
    }
    MAX_TERMS
}

/// Power-series solution `u(t) = Σ_i t^i/i! φ_i` of the pure-jump equation
/// `∂_t u = sup_ν ∫ (u(·+z) − u) ν(dz)`, where each level applies the
/// nonlocal operator to the previous one:
/// `φ_{i+1}(y) = max_ν Σ_k w_k (φ_i(y + z_k) − φ_i(y))`.
///
/// Because `‖φ_{i+1}‖ ≤ 2Λ‖φ_i‖` with `Λ` the largest total intensity, the
/// series is truncated at the first `N` whose bound
/// `Σ_{i>N} (2Λt)^i/i! · ‖φ_0‖` is below `tol`.
///
/// The sum of iterates coincides with the solution when one measure is
/// maximal at every level (a single measure, or payoffs whose differences
/// of every order keep one sign); otherwise use the PIDE solver.
pub fn series_solution(
    phi0: &GridFunction,
    measures: &[Vec<Atom>],
    t: f64,
    tol: f64,
) -> Result<GridFunction> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidTime(t));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    let dim = phi0.spec().dim();
    let set = UncertaintySet::new(
        measures
            .iter()
            .map(|atoms| ScenarioData {
                atoms: atoms.clone(),
                ..ScenarioData::zero(dim)
            })
            .collect(),
    )?;
    let op = PreparedOperator::new(&set, phi0.spec())?;
    let levels = series_levels(2.0 * set.max_intensity() * t, phi0.sup_norm(), tol);

    let mut acc = phi0.values().to_vec();
    let mut current = phi0.values().to_vec();
    let mut coef = 1.0;
    for i in 1..=levels {
        current = op.apply(&current);
        coef *= t / i as f64;
        for (a, c) in acc.iter_mut().zip(&current) {
            *a += coef * c;
        }
    }
    GridFunction::new(phi0.spec().clone(), acc, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn g_lambda_values() {
        assert_eq!(g_lambda(2.0, 0.5).unwrap(), 2.0);
        assert_eq!(g_lambda(-2.0, 0.5).unwrap(), -1.0);
        assert_eq!(g_lambda(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(
            g_lambda(1.0, 1.2).unwrap_err().code(),
            "LAMBDA_OUT_OF_RANGE"
        );
    }

    #[test]
    fn g_lambda_is_max_over_endpoints() {
        for lambda in [0.0, 0.25, 0.5, 1.0] {
            for a in [-3.5, -1.0, -1e-9, 0.0, 1e-9, 2.0, 17.0] {
                assert_eq!(g_lambda(a, lambda).unwrap(), a.max(lambda * a));
            }
        }
    }

    #[test]
    fn identity_moments() {
        let phi = Payoff::clip_linear(1e6).unwrap();
        let up = gpoisson_closed_form(&phi, Direction::Increasing, 0.5, 1.0, 0.0, 1e-12).unwrap();
        assert!((up - 1.0).abs() < 1e-10);
        let neg = phi.scaled(-1.0).unwrap();
        let down = gpoisson_closed_form(&neg, Direction::Decreasing, 0.5, 1.0, 0.0, 1e-12).unwrap();
        assert!((down + 0.5).abs() < 1e-10);
    }

    #[test]
    fn constants_pass_through() {
        let c = Payoff::constant(-2.5).unwrap();
        for (t, lambda) in [(0.0, 0.5), (1.0, 0.0), (3.0, 1.0)] {
            for dir in [Direction::Increasing, Direction::Decreasing] {
                let v = gpoisson_closed_form(&c, dir, lambda, t, 1.0, 1e-12).unwrap();
                assert!((v + 2.5).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn directions_agree_at_full_intensity() {
        let phi = Payoff::indicator_ramp(0.5, 3.5).unwrap();
        let a = gpoisson_closed_form(&phi, Direction::Increasing, 1.0, 1.7, -0.2, 1e-13).unwrap();
        let b = gpoisson_closed_form(&phi, Direction::Decreasing, 1.0, 1.7, -0.2, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        let phi = Payoff::constant(1.0).unwrap();
        let e = gpoisson_closed_form(&phi, Direction::Increasing, 0.5, 1.0, 0.0, 0.0).unwrap_err();
        assert_eq!(e.code(), "INVALID_TOLERANCE");
        let e =
            gpoisson_closed_form(&phi, Direction::Increasing, -0.1, 1.0, 0.0, 1e-9).unwrap_err();
        assert_eq!(e.code(), "LAMBDA_OUT_OF_RANGE");
    }

    #[test]
    fn series_of_constant_is_constant() {
        let spec = GridSpec::line(-5.0, 10.0, 0.05).unwrap();
        let phi = GridFunction::sample(&spec, &Payoff::constant(0.7).unwrap(), 0.0).unwrap();
        let set = UncertaintySet::g_poisson(0.3).unwrap();
        let u = series_solution(&phi, &set.jump_measures(), 2.0, 1e-10).unwrap();
        assert!(u.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        assert_eq!(u.time_label(), 2.0);
    }

    #[test]
    fn series_levels_honour_tail_bound() {
        let n = series_levels(2.0, 1.0, 1e-10);
        let mut tail = 0.0;
        let mut term = 1.0;
        for i in 1..200 {
            term *= 2.0 / i as f64;
            if i > n {
                tail += term;
            }
        }
        assert!(tail < 1e-10);
        assert_eq!(series_levels(0.0, 5.0, 1e-10), 0);
    }
}
