//! Uncertainty-set data: Lévy triplets with finite-atom jump measures, and
//! the bounded Lipschitz payoffs the solver propagates.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// One point mass of a jump measure: jumps of size `jump` arriving at
/// `rate` per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub jump: Vec<f64>,
    pub rate: f64,
}

impl Atom {
    pub fn new(jump: Vec<f64>, rate: f64) -> Self {
        Atom { jump, rate }
    }

    pub fn norm(&self) -> f64 {
        self.jump.iter().map(|z| z * z).sum::<f64>().sqrt()
    }
}

/// Unvalidated scenario description, as read from a configuration file or
/// built by a caller. Turn it into a [`Scenario`] through
/// [`validate_uncertainty_set`] or [`Scenario::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub atoms: Vec<Atom>,
    pub drift: Vec<f64>,
    /// Row-major diffusion factor `Q`; the generator uses `Q Qᵀ`.
    pub diffusion: Vec<Vec<f64>>,
}

impl ScenarioData {
    /// Zero triplet in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        ScenarioData {
            atoms: Vec::new(),
            drift: vec![0.0; dim],
            diffusion: vec![vec![0.0; dim]; dim],
        }
    }

    /// One-dimensional pure-jump scenario with a single atom.
    pub fn poisson(jump: f64, rate: f64) -> Self {
        ScenarioData {
            atoms: vec![Atom::new(vec![jump], rate)],
            ..Self::zero(1)
        }
    }

    /// One-dimensional Brownian scenario with volatility `sigma`.
    pub fn brownian(sigma: f64) -> Self {
        ScenarioData {
            diffusion: vec![vec![sigma]],
            ..Self::zero(1)
        }
    }

    pub fn with_atom(mut self, jump: Vec<f64>, rate: f64) -> Self {
        self.atoms.push(Atom::new(jump, rate));
        self
    }

    pub fn with_drift(mut self, drift: Vec<f64>) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_diffusion(mut self, diffusion: Vec<Vec<f64>>) -> Self {
        self.diffusion = diffusion;
        self
    }
}

/// A validated triplet `(ν, q, Q)` with `ν = Σ_k w_k δ_{z_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    atoms: Vec<Atom>,
    drift: Vec<f64>,
    diffusion: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl Scenario {
    pub fn new(data: ScenarioData) -> Result<Self> {
        Self::validated(data, 0)
    }

    fn validated(data: ScenarioData, index: usize) -> Result<Self> {
        let dim = data.drift.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                what: format!("scenario {index} drift"),
                expected: 1,
                found: 0,
            });
        }
        if data.drift.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite {
                scenario: index,
                field: "drift",
            });
        }
        if data.diffusion.len() != dim {
            return Err(Error::DimensionMismatch {
                what: format!("scenario {index} diffusion rows"),
                expected: dim,
                found: data.diffusion.len(),
            });
        }
        for row in &data.diffusion {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: format!("scenario {index} diffusion columns"),
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    scenario: index,
                    field: "diffusion",
                });
            }
        }
        for (k, atom) in data.atoms.iter().enumerate() {
            if atom.jump.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: format!("scenario {index} atom {k}"),
                    expected: dim,
                    found: atom.jump.len(),
                });
            }
            if !atom.rate.is_finite() || atom.jump.iter().any(|z| !z.is_finite()) {
                return Err(Error::NonFinite {
                    scenario: index,
                    field: "atoms",
                });
            }
            if atom.rate < 0.0 {
                return Err(Error::NegativeRate {
                    scenario: index,
                    atom: k,
                    rate: atom.rate,
                });
            }
            if atom.jump.iter().all(|&z| z == 0.0) {
                return Err(Error::ZeroJump {
                    scenario: index,
                    atom: k,
                });
            }
        }
        let diffusion = DMatrix::from_fn(dim, dim, |i, j| data.diffusion[i][j]);
        let covariance = &diffusion * diffusion.transpose();
        Ok(Scenario {
            atoms: data.atoms,
            drift: data.drift,
            diffusion,
            covariance,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.diffusion
    }

    /// `Q Qᵀ`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Total jump intensity `Σ_k w_k`.
    pub fn jump_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    /// `Σ_k w_k |z_k| + |q| + tr[Q Qᵀ]`.
    pub fn mass(&self) -> f64 {
        let jumps: f64 = self.atoms.iter().map(|a| a.rate * a.norm()).sum();
        let drift = self.drift.iter().map(|q| q * q).sum::<f64>().sqrt();
        jumps + drift + self.covariance.trace()
    }

    pub fn to_data(&self) -> ScenarioData {
        let dim = self.dim();
        ScenarioData {
            atoms: self.atoms.clone(),
            drift: self.drift.clone(),
            diffusion: (0..dim)
                .map(|i| (0..dim).map(|j| self.diffusion[(i, j)]).collect())
                .collect(),
        }
    }
}

/// Nonempty finite family of scenarios sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    scenarios: Vec<Scenario>,
    mass_bound: f64,
}

/// Validates raw scenario data and computes the integrability bound
/// `max_s (Σ w_k|z_k| + |q| + tr[QQᵀ])`.
pub fn validate_uncertainty_set(raw: &[ScenarioData]) -> Result<UncertaintySet> {
    if raw.is_empty() {
        return Err(Error::EmptySet);
    }
    let scenarios = raw
        .iter()
        .enumerate()
        .map(|(i, data)| Scenario::validated(data.clone(), i))
        .collect::<Result<Vec<_>>>()?;
    let dim = scenarios[0].dim();
    if let Some((i, s)) = scenarios.iter().enumerate().find(|(_, s)| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            what: format!("scenario {i}"),
            expected: dim,
            found: s.dim(),
        });
    }
    let mass_bound = scenarios.iter().map(Scenario::mass).fold(0.0, f64::max);
    Ok(UncertaintySet {
        scenarios,
        mass_bound,
    })
}

impl UncertaintySet {
    pub fn new(raw: Vec<ScenarioData>) -> Result<Self> {
        validate_uncertainty_set(&raw)
    }

    /// The G-Poisson family: unit jumps with intensity ranging over
    /// `[lambda, 1]`. The generator is linear in the intensity, so the two
    /// endpoint scenarios realise the supremum over the whole interval.
    pub fn g_poisson(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::LambdaOutOfRange(lambda));
        }
        Self::new(vec![
            ScenarioData::poisson(1.0, lambda),
            ScenarioData::poisson(1.0, 1.0),
        ])
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn dim(&self) -> usize {
        self.scenarios[0].dim()
    }

    pub fn mass_bound(&self) -> f64 {
        self.mass_bound
    }

    /// Largest total jump intensity over the set.
    pub fn max_intensity(&self) -> f64 {
        self.scenarios
            .iter()
            .map(Scenario::jump_intensity)
            .fold(0.0, f64::max)
    }

    pub fn jump_measures(&self) -> Vec<Vec<Atom>> {
        self.scenarios.iter().map(|s| s.atoms.clone()).collect()
    }

    pub fn to_data(&self) -> Vec<ScenarioData> {
        self.scenarios.iter().map(Scenario::to_data).collect()
    }

    /// Box padding needed around a region of interest for horizon `t`:
    /// largest jump, plus drift transport, plus four diffusion standard
    /// deviations.
    pub fn padding(&self, t: f64) -> f64 {
        let jump = self
            .scenarios
            .iter()
            .flat_map(|s| s.atoms.iter().map(Atom::norm))
            .fold(0.0, f64::max);
        let drift = self
            .scenarios
            .iter()
            .flat_map(|s| s.drift.iter().map(|q| q.abs()))
            .fold(0.0, f64::max);
        let sigma = self
            .scenarios
            .iter()
            .flat_map(|s| (0..s.dim()).map(move |i| s.covariance[(i, i)].sqrt()))
            .fold(0.0, f64::max);
        jump + drift * t + 4.0 * sigma * t.sqrt()
    }
}

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Bounded Lipschitz initial condition `φ` with its declared bound and
/// Lipschitz constant.
#[derive(Clone)]
pub struct Payoff {
    eval: EvalFn,
    bound: f64,
    lipschitz: f64,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl Payoff {
    pub fn new<F>(eval: F, bound: f64, lipschitz: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(Arc::new(eval), bound, lipschitz)
    }

    pub fn from_arc(eval: EvalFn, bound: f64, lipschitz: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidPayoff(format!("bound {bound}")));
        }
        if lipschitz.is_nan() || lipschitz < 0.0 {
            return Err(Error::InvalidPayoff(format!("lipschitz {lipschitz}")));
        }
        Ok(Payoff {
            eval,
            bound,
            lipschitz,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn eval_fn(&self) -> EvalFn {
        self.eval.clone()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(move |_| c, c.abs(), 0.0)
    }

    /// `clamp(Σ x_i, -clip, clip)`.
    pub fn clip_linear(clip: f64) -> Result<Self> {
        positive("clip", clip)?;
        Self::new(move |x| x.iter().sum::<f64>().clamp(-clip, clip), clip, 1.0)
    }

    /// `min(|x|², cap)`.
    pub fn quadratic_clip(cap: f64) -> Result<Self> {
        positive("cap", cap)?;
        Self::new(
            move |x| x.iter().map(|v| v * v).sum::<f64>().min(cap),
            cap,
            2.0 * cap.sqrt(),
        )
    }

    /// Linear ramp in `Σ x_i` from 0 at `low` to 1 at `high`, flat outside.
    pub fn indicator_ramp(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && high > low) {
            return Err(Error::InvalidPayoff(format!("ramp [{low}, {high}]")));
        }
        let width = high - low;
        Self::new(
            move |x| ((x.iter().sum::<f64>() - low) / width).clamp(0.0, 1.0),
            1.0,
            1.0 / width,
        )
    }

    /// One-dimensional piecewise-linear table, constant beyond its ends.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidPayoff("empty table".into()));
        }
        if points.iter().any(|(x, u)| !x.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidPayoff("non-finite table entry".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidPayoff(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        let bound = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        let lipschitz = points
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        Self::new(
            move |x| {
                let v = x[0];
                let last = points.len() - 1;
                if v <= points[0].0 {
                    return points[0].1;
                }
                if v >= points[last].0 {
                    return points[last].1;
                }
                let k = points.partition_point(|p| p.0 <= v) - 1;
                let (x0, u0) = points[k];
                let (x1, u1) = points[k + 1];
                u0 + (u1 - u0) * (v - x0) / (x1 - x0)
            },
            bound,
            lipschitz,
        )
    }

    /// `factor · φ`; negative factors are allowed.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f = self.eval.clone();
        Self::new(
            move |x| factor * f(x),
            self.bound * factor.abs(),
            self.lipschitz * factor.abs(),
        )
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let f = self.eval.clone();
        Self::new(move |x| f(x) + c, self.bound + c.abs(), self.lipschitz)
    }

    /// `φ + ψ`.
    pub fn sum(&self, other: &Payoff) -> Result<Self> {
        let f = self.eval.clone();
        let g = other.eval.clone();
        Self::new(
            move |x| f(x) + g(x),
            self.bound + other.bound,
            self.lipschitz + other.lipschitz,
        )
    }

    /// `a·φ + b·ψ`, evaluated in that order so grids sampled from it match
    /// the same combination of separately sampled grids.
    pub fn combination(a: f64, phi: &Payoff, b: f64, psi: &Payoff) -> Result<Self> {
        let f = phi.eval.clone();
        let g = psi.eval.clone();
        Self::new(
            move |x| a * f(x) + b * g(x),
            a.abs() * phi.bound + b.abs() * psi.bound,
            a.abs() * phi.lipschitz + b.abs() * psi.lipschitz,
        )
    }

    /// Largest amount by which `|φ|` exceeds the declared bound on the grid
    /// nodes (zero when the bound holds).
    pub fn bound_violation(&self, grid: &GridSpec) -> f64 {
        let mut x = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|i| {
                grid.node_into(i, &mut x);
                (self.eval(&x).abs() - self.bound).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Largest excess of `|φ(x) - φ(y)| - L|x - y|` over `pairs` random
    /// pairs drawn inside the grid box.
    pub fn lipschitz_violation(&self, grid: &GridSpec, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = grid.dim();
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let x: Vec<f64> = (0..dim)
                .map(|a| rng.random_range(grid.lower()[a]..=grid.upper()[a]))
                .collect();
            let y: Vec<f64> = (0..dim)
                .map(|a| rng.random_range(grid.lower()[a]..=grid.upper()[a]))
                .collect();
            let dist = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let excess = (self.eval(&x) - self.eval(&y)).abs() - self.lipschitz * dist;
            worst = worst.max(excess);
        }
        worst
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPayoff(format!(
            "{name} must be positive, got {v}"
        )))
    }
}
