//! The nonlocal generator `G_X[f] = lim_{δ↓0} Ê[f(X_δ)]/δ` in Lévy-Khintchine
//! form, and its numerical small-time counterpart.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{EvalFn, Payoff, Scenario, UncertaintySet};
use crate::pide::{PreparedOperator, SchemeConfig};

/// A smooth bounded `f` with `f(0) = 0`, carrying its exact first and
/// second derivatives at the origin.
#[derive(Clone)]
pub struct TestFunction {
    eval: EvalFn,
    grad0: Vec<f64>,
    hess0: DMatrix<f64>,
    bound: f64,
    lipschitz: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("grad0", &self.grad0)
            .field("hess0", &self.hess0)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F>(
        eval: F,
        grad0: Vec<f64>,
        hess0: DMatrix<f64>,
        bound: f64,
        lipschitz: f64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let dim = grad0.len();
        if dim == 0 || hess0.nrows() != dim || hess0.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "test function derivatives".into(),
                expected: dim,
                found: hess0.nrows(),
            });
        }
        let asym = (&hess0 - hess0.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        let at_zero = eval(&vec![0.0; dim]);
        if at_zero != 0.0 {
            return Err(Error::TestFunctionNotZero(at_zero));
        }
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidPayoff(format!("bound {bound}")));
        }
        Ok(TestFunction {
            eval: std::sync::Arc::new(eval),
            grad0,
            hess0,
            bound,
            lipschitz,
        })
    }

    /// Constant zero in dimension `dim`.
    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(|_| 0.0, vec![0.0; dim], DMatrix::zeros(dim, dim), 0.0, 0.0)
    }

    /// One-dimensional `height · b((x − center)/radius)` with the smooth
    /// bump `b(s) = (1 − s²)³` on `|s| < 1`. Requires `|center| ≥ radius`
    /// so the function vanishes near the origin.
    pub fn bump(center: f64, radius: f64, height: f64) -> Result<Self> {
        if !(radius > 0.0 && center.abs() >= radius && height.is_finite()) {
            return Err(Error::InvalidPayoff(format!(
                "bump center {center}, radius {radius}, height {height}"
            )));
        }
        Self::new(
            move |x| {
                let s = (x[0] - center) / radius;
                if s.abs() < 1.0 {
                    height * (1.0 - s * s).powi(3)
                } else {
                    0.0
                }
            },
            vec![0.0],
            DMatrix::zeros(1, 1),
            height.abs(),
            // max |b'| = 96/(25√5) at s = 1/√5
            height.abs() * 96.0 / (25.0 * 5f64.sqrt()) / radius,
        )
    }

    /// `f(z) = 1 − cos z` in one dimension.
    pub fn one_minus_cos() -> Result<Self> {
        Self::new(
            |x| 1.0 - x[0].cos(),
            vec![0.0],
            DMatrix::from_element(1, 1, 1.0),
            2.0,
            1.0,
        )
    }

    pub fn dim(&self) -> usize {
        self.grad0.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn grad0(&self) -> &[f64] {
        &self.grad0
    }

    pub fn hess0(&self) -> &DMatrix<f64> {
        &self.hess0
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `f + g`, with derivatives added componentwise.
    pub fn sum(&self, other: &TestFunction) -> Result<Self> {
        let f = self.eval.clone();
        let g = other.eval.clone();
        Self::new(
            move |x| f(x) + g(x),
            self.grad0
                .iter()
                .zip(&other.grad0)
                .map(|(a, b)| a + b)
                .collect(),
            &self.hess0 + &other.hess0,
            self.bound + other.bound,
            self.lipschitz + other.lipschitz,
        )
    }

    /// `λ f`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let f = self.eval.clone();
        Self::new(
            move |x| lambda * f(x),
            self.grad0.iter().map(|g| lambda * g).collect(),
            &self.hess0 * lambda,
            self.bound * lambda.abs(),
            self.lipschitz * lambda.abs(),
        )
    }

    /// The same function seen as a payoff (initial condition).
    pub fn to_payoff(&self) -> Result<Payoff> {
        Payoff::from_arc(self.eval.clone(), self.bound, self.lipschitz)
    }
}

fn scenario_value(f: &TestFunction, s: &Scenario) -> f64 {
    let jumps: f64 = s.atoms().iter().map(|a| a.rate * f.eval(&a.jump)).sum();
    let drift: f64 = f.grad0.iter().zip(s.drift()).map(|(g, q)| g * q).sum();
    let diffusion = 0.5 * (f.hess0() * s.covariance()).trace();
    jumps + drift + diffusion
}

/// Maximising scenario index and value of the Lévy-Khintchine expression
/// `Σ_k w_k f(z_k) + ⟨Df(0), q⟩ + ½ tr[D²f(0) QQᵀ]`. Ties go to the lowest
/// index.
pub fn g_operator_argmax(f: &TestFunction, set: &UncertaintySet) -> Result<(usize, f64)> {
    if f.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            what: "test function vs uncertainty set".into(),
            expected: set.dim(),
            found: f.dim(),
        });
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in set.scenarios().iter().enumerate() {
        let v = scenario_value(f, s);
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

pub fn g_operator(f: &TestFunction, set: &UncertaintySet) -> Result<f64> {
    g_operator_argmax(f, set).map(|(_, v)| v)
}

/// `u(δ, 0)/δ` where `u` solves the integro-PDE from `u(0,·) = f` on `grid`.
/// As `δ → 0` (with the grid refined) this tends to [`g_operator`].
pub fn small_time_quotient(
    f: &TestFunction,
    set: &UncertaintySet,
    delta: f64,
    grid: &GridSpec,
    cfg: &SchemeConfig,
) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidTime(delta));
    }
    let origin = vec![0.0; grid.dim()];
    if !grid.contains(&origin) {
        return Err(Error::InvalidGrid("box does not contain the origin".into()));
    }
    for (i, s) in set.scenarios().iter().enumerate() {
        for (k, a) in s.atoms().iter().enumerate() {
            if !grid.contains(&a.jump) {
                return Err(Error::InvalidGrid(format!(
                    "scenario {i} atom {k} jump lies outside the box"
                )));
            }
        }
    }
    let op = PreparedOperator::new(set, grid)?;
    let cfg = cfg.with_final_time(delta);
    let result = op.solve(&f.to_payoff()?, &cfg, &[delta])?;
    Ok(result.evaluate(delta, &origin)? / delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenarioData;
    use proptest::prelude::*;

    #[test]
    fn zero_function_gives_zero() {
        let set = UncertaintySet::new(vec![
            ScenarioData::poisson(2.0, 3.0).with_drift(vec![1.0]),
            ScenarioData::brownian(4.0),
        ])
        .unwrap();
        assert_eq!(
            g_operator(&TestFunction::zero(1).unwrap(), &set).unwrap(),
            0.0
        );
    }

    #[test]
    fn one_minus_cos_single_scenario() {
        let sigma = 0.8;
        let set = UncertaintySet::new(vec![
            ScenarioData::poisson(std::f64::consts::PI, 1.0).with_diffusion(vec![vec![sigma]])
        ])
        .unwrap();
        let f = TestFunction::one_minus_cos().unwrap();
        // independent: 1 - cos π = 2, ½ · 1 · σ²
        let expected = 2.0 + 0.5 * sigma * sigma;
        assert!((g_operator(&f, &set).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn g_poisson_negative_bump_picks_low_intensity() {
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let f = TestFunction::bump(1.0, 0.5, -1.0).unwrap();
        let (idx, v) = g_operator_argmax(&f, &set).unwrap();
        assert_eq!(v, -0.5);
        assert_eq!(idx, 0);
        let (idx, v) = g_operator_argmax(&f.scaled(-1.0).unwrap(), &set).unwrap();
        assert_eq!((idx, v), (1, 1.0));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let set = UncertaintySet::new(vec![ScenarioData::poisson(1.0, 1.0); 3]).unwrap();
        let f = TestFunction::bump(1.0, 0.5, 1.0).unwrap();
        assert_eq!(g_operator_argmax(&f, &set).unwrap().0, 0);
    }

    #[test]
    fn nonzero_at_origin_rejected() {
        let err =
            TestFunction::new(|_| 1.0, vec![0.0], DMatrix::zeros(1, 1), 1.0, 0.0).unwrap_err();
        assert_eq!(err.code(), "TEST_FUNCTION_NOT_ZERO");
    }

    #[test]
    fn zero_function_quotient_is_zero() {
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let grid = GridSpec::line(-2.0, 4.0, 0.05).unwrap();
        for delta in [0.1, 0.05, 0.025] {
            let q = small_time_quotient(
                &TestFunction::zero(1).unwrap(),
                &set,
                delta,
                &grid,
                &SchemeConfig::default(),
            )
            .unwrap();
            assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn atoms_outside_box_rejected() {
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let grid = GridSpec::line(-2.0, 0.5, 0.05).unwrap();
        let err = small_time_quotient(
            &TestFunction::zero(1).unwrap(),
            &set,
            0.1,
            &grid,
            &SchemeConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.code(), "INVALID_GRID");
    }

    fn random_set() -> impl Strategy<Value = UncertaintySet> {
        prop::collection::vec((0.1f64..2.0, 0.0f64..2.0, -1.0f64..1.0, 0.0f64..1.0), 1..4).prop_map(
            |rows| {
                UncertaintySet::new(
                    rows.into_iter()
                        .map(|(z, w, q, s)| {
                            ScenarioData::poisson(z, w)
                                .with_drift(vec![q])
                                .with_diffusion(vec![vec![s]])
                        })
                        .collect(),
                )
                .unwrap()
            },
        )
    }

    fn smooth(a: f64, b: f64, c: f64) -> TestFunction {
        // a sin z + b (1 - cos z) + c z² / (1 + z²)
        TestFunction::new(
            move |x| {
                a * x[0].sin() + b * (1.0 - x[0].cos()) + c * x[0] * x[0] / (1.0 + x[0] * x[0])
            },
            vec![a],
            DMatrix::from_element(1, 1, b + 2.0 * c),
            a.abs() + 2.0 * b.abs() + c.abs(),
            a.abs() + b.abs() + c.abs(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn sub_additive(set in random_set(), a in -2.0f64..2.0, b in -2.0f64..2.0,
                        c in -2.0f64..2.0, d in -2.0f64..2.0) {
            let f = smooth(a, b, c);
            let g = smooth(d, c, a);
            let lhs = g_operator(&f.sum(&g).unwrap(), &set).unwrap();
            let rhs = g_operator(&f, &set).unwrap() + g_operator(&g, &set).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn positively_homogeneous(set in random_set(), a in -2.0f64..2.0, b in -2.0f64..2.0,
                                  lambda in 0.0f64..5.0) {
            let f = smooth(a, b, 0.5);
            let lhs = g_operator(&f.scaled(lambda).unwrap(), &set).unwrap();
            let rhs = lambda * g_operator(&f, &set).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn monotone_in_values_and_curvature(set in random_set(), a in -2.0f64..2.0,
                                            b in -2.0f64..2.0, extra in 0.0f64..2.0) {
            // f₁ = f₂ + extra·z²/(1+z²): larger on every atom, larger D²f(0)
            let low = smooth(a, b, 0.0);
            let high = smooth(a, b, extra);
            prop_assert!(g_operator(&high, &set).unwrap() >= g_operator(&low, &set).unwrap());
        }
    }
}
