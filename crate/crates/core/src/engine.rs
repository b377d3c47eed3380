//! Sublinear expectation of cylinder functionals
//! `ξ = φ(B_{t₁} − B_{t₀}, B_{t₂} − B_{t₁}, …, B_{t_m} − B_{t_{m−1}})`
//! by backward recursion: the last increment is integrated out by solving
//! the integro-PDE over `t_m − t_{m−1}` with the earlier arguments frozen,
//! then the next one, down to a scalar.
//!
//! Frozen arguments live on a tensor grid (one copy of the frozen axis grid
//! per earlier coordinate) and intermediate functions are evaluated by
//! multilinear interpolation on it.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec};
use crate::model::{EvalFn, UncertaintySet};
use crate::pide::{PreparedOperator, SchemeConfig};

#[derive(Clone)]
pub struct CylinderFunctional {
    start: f64,
    times: Vec<f64>,
    dim: usize,
    payoff: EvalFn,
    bound: f64,
    lipschitz: f64,
}

impl fmt::Debug for CylinderFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderFunctional")
            .field("start", &self.start)
            .field("times", &self.times)
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl CylinderFunctional {
    /// `payoff` receives the `m` increments concatenated (`m · dim` reals).
    pub fn new<F>(
        times: Vec<f64>,
        dim: usize,
        payoff: F,
        bound: f64,
        lipschitz: f64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(0.0, times, dim, Arc::new(payoff), bound, lipschitz)
    }

    pub fn from_arc(
        start: f64,
        times: Vec<f64>,
        dim: usize,
        payoff: EvalFn,
        bound: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidFunctional("no observation times".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidFunctional(
                "dimension must be positive".into(),
            ));
        }
        if !(start.is_finite() && start >= 0.0) {
            return Err(Error::InvalidTime(start));
        }
        let mut prev = start;
        for &t in &times {
            if !(t.is_finite() && t > prev) {
                return Err(Error::InvalidFunctional(format!(
                    "times must increase strictly from {start}: {times:?}"
                )));
            }
            prev = t;
        }
        if !(bound.is_finite() && bound >= 0.0) || !(lipschitz >= 0.0) {
            return Err(Error::InvalidFunctional(format!(
                "bound {bound}, lipschitz {lipschitz}"
            )));
        }
        Ok(CylinderFunctional {
            start,
            times,
            dim,
            payoff,
            bound,
            lipschitz,
        })
    }

    /// The same increment payoff observed on `times + shift` from
    /// `start + shift`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        Self::from_arc(
            self.start + shift,
            self.times.iter().map(|t| t + shift).collect(),
            self.dim,
            self.payoff.clone(),
            self.bound,
            self.lipschitz,
        )
    }

    /// Same observation times with a different payoff.
    pub fn with_payoff<F>(&self, payoff: F, bound: f64, lipschitz: f64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_arc(
            self.start,
            self.times.clone(),
            self.dim,
            Arc::new(payoff),
            bound,
            lipschitz,
        )
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, increments: &[f64]) -> f64 {
        (self.payoff)(increments)
    }

    pub fn payoff(&self) -> EvalFn {
        self.payoff.clone()
    }

    /// `t_k − t_{k−1}` for `k = 1..m`, with `t_0 = start`.
    pub fn horizons(&self) -> Vec<f64> {
        let mut prev = self.start;
        self.times
            .iter()
            .map(|&t| {
                let h = t - prev;
                prev = t;
                h
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub scheme: SchemeConfig,
    /// `d`-dimensional grid on which each increment is integrated out; it
    /// must contain the origin.
    pub increment_grid: GridSpec,
    /// `d`-dimensional grid replicated once per frozen increment.
    pub frozen_grid: GridSpec,
    pub max_axes: usize,
    pub node_budget: usize,
}

impl EngineConfig {
    pub fn new(scheme: SchemeConfig, increment_grid: GridSpec, frozen_grid: GridSpec) -> Self {
        EngineConfig {
            scheme,
            increment_grid,
            frozen_grid,
            max_axes: 3,
            node_budget: 250_000,
        }
    }

    /// Tensor grid over `blocks` frozen increments.
    pub fn frozen_tensor(&self, blocks: usize) -> Result<GridSpec> {
        let f = &self.frozen_grid;
        GridSpec::new(
            f.lower().repeat(blocks),
            f.upper().repeat(blocks),
            f.points().repeat(blocks),
        )
    }
}

enum Stage {
    Payoff(EvalFn),
    Grid(GridFunction),
}

impl Stage {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Stage::Payoff(f) => f(x),
            Stage::Grid(g) => g.interpolate(x),
        }
    }
}

enum Outcome {
    Scalar(f64),
    Conditional(GridFunction),
}

fn check_inputs(xi: &CylinderFunctional, set: &UncertaintySet, cfg: &EngineConfig) -> Result<()> {
    let d = xi.dim();
    if set.dim() != d || cfg.increment_grid.dim() != d || cfg.frozen_grid.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "functional / uncertainty set / engine grids".into(),
            expected: d,
            found: set.dim(),
        });
    }
    if !cfg.increment_grid.contains(&vec![0.0; d]) {
        return Err(Error::InvalidGrid(
            "increment grid does not contain the origin".into(),
        ));
    }
    let axes = xi.len() * d;
    let frozen_nodes = cfg.frozen_grid.len().saturating_pow((xi.len() - 1) as u32);
    if axes > cfg.max_axes || frozen_nodes > cfg.node_budget {
        return Err(Error::DimensionOverflow {
            axes,
            nodes: frozen_nodes,
            max_axes: cfg.max_axes,
            budget: cfg.node_budget,
        });
    }
    cfg.scheme.validate()
}

/// Integrates out increments `m, m−1, …, keep+1`.
fn backward(
    xi: &CylinderFunctional,
    set: &UncertaintySet,
    cfg: &EngineConfig,
    keep: usize,
) -> Result<Outcome> {
    check_inputs(xi, set, cfg)?;
    let d = xi.dim();
    let op = PreparedOperator::new(set, &cfg.increment_grid)?;
    let inc = &cfg.increment_grid;
    let origin = vec![0.0; d];
    let horizons = xi.horizons();
    let mut stage = Stage::Payoff(xi.payoff());

    // integrate `stage(prefix, ·)` over horizon h, read off at the origin
    let integrate = |stage: &Stage, prefix: &[f64], h: f64| -> Result<f64> {
        let p = prefix.len();
        let mut arg = prefix.to_vec();
        arg.resize(p + d, 0.0);
        let initial: Vec<f64> = (0..inc.len())
            .map(|i| {
                inc.node_into(i, &mut arg[p..]);
                stage.eval(&arg)
            })
            .collect();
        let res = op.run(initial, &cfg.scheme.with_final_time(h), &[h])?;
        res.evaluate(h, &origin)
    };

    for k in (keep + 1..=xi.len()).rev() {
        let h = horizons[k - 1];
        if k == 1 {
            return integrate(&stage, &[], h).map(Outcome::Scalar);
        }
        let frozen = cfg.frozen_tensor(k - 1)?;
        let values = (0..frozen.len())
            .into_par_iter()
            .map(|i| integrate(&stage, &frozen.node(i), h))
            .collect::<Result<Vec<f64>>>()?;
        stage = Stage::Grid(GridFunction::new(frozen, values, xi.times()[k - 2])?);
    }
    match stage {
        Stage::Grid(g) => Ok(Outcome::Conditional(g)),
        Stage::Payoff(_) => unreachable!("keep < m integrates at least one level"),
    }
}

/// `Ê[ξ]`.
pub fn expectation(
    xi: &CylinderFunctional,
    set: &UncertaintySet,
    cfg: &EngineConfig,
) -> Result<f64> {
    match backward(xi, set, cfg, 0)? {
        Outcome::Scalar(v) => Ok(v),
        Outcome::Conditional(_) => unreachable!(),
    }
}

/// `Ê[ξ | F_{t_j}]` as a function of the first `j` increments, on the
/// frozen tensor grid with `j · d` axes.
pub fn conditional_expectation(
    xi: &CylinderFunctional,
    j: usize,
    set: &UncertaintySet,
    cfg: &EngineConfig,
) -> Result<GridFunction> {
    if j == 0 || j >= xi.len() {
        return Err(Error::IndexOutOfRange { j, m: xi.len() });
    }
    match backward(xi, set, cfg, j)? {
        Outcome::Conditional(g) => Ok(g),
        Outcome::Scalar(_) => unreachable!(),
    }
}

/// A conditional expectation viewed as a functional of the first `j`
/// increments on `t_1..t_j`.
pub fn conditional_as_functional(
    xi: &CylinderFunctional,
    conditional: GridFunction,
) -> Result<CylinderFunctional> {
    let blocks = conditional.spec().dim() / xi.dim();
    let bound = conditional.sup_norm();
    CylinderFunctional::from_arc(
        xi.start(),
        xi.times()[..blocks].to_vec(),
        xi.dim(),
        Arc::new(move |x: &[f64]| conditional.interpolate(x)),
        bound,
        xi.lipschitz(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenarioData;

    fn small_cfg() -> EngineConfig {
        let scheme = SchemeConfig {
            max_dt: Some(0.01),
            ..SchemeConfig::default()
        };
        EngineConfig::new(
            scheme,
            GridSpec::line(-4.0, 8.0, 0.1).unwrap(),
            GridSpec::line(-4.0, 8.0, 0.5).unwrap(),
        )
    }

    #[test]
    fn validation_errors() {
        assert!(CylinderFunctional::new(vec![], 1, |_| 0.0, 0.0, 0.0).is_err());
        assert!(CylinderFunctional::new(vec![1.0, 1.0], 1, |_| 0.0, 0.0, 0.0).is_err());
        assert!(CylinderFunctional::new(vec![0.0], 1, |_| 0.0, 0.0, 0.0).is_err());
        let xi = CylinderFunctional::new(vec![1.0, 2.0], 1, |_| 0.0, 0.0, 0.0).unwrap();
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let cfg = small_cfg();
        for j in [0, 2, 5] {
            let err = conditional_expectation(&xi, j, &set, &cfg).unwrap_err();
            assert_eq!(err.code(), "INDEX_OUT_OF_RANGE");
        }
    }

    #[test]
    fn too_many_axes_overflow() {
        let xi = CylinderFunctional::new(vec![0.5, 1.0, 1.5, 2.0], 1, |_| 0.0, 0.0, 0.0).unwrap();
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let err = expectation(&xi, &set, &small_cfg()).unwrap_err();
        assert_eq!(err.code(), "DIMENSION_OVERFLOW");
        let mut cfg = small_cfg();
        cfg.max_axes = 4;
        cfg.node_budget = 1000;
        let err = expectation(&xi, &set, &cfg).unwrap_err();
        assert_eq!(err.code(), "DIMENSION_OVERFLOW");
    }

    #[test]
    fn constants_pass_through_every_level() {
        let xi = CylinderFunctional::new(vec![0.5, 1.0, 1.25], 1, |_| 1.75, 1.75, 0.0).unwrap();
        let set = UncertaintySet::new(vec![
            ScenarioData::poisson(1.0, 0.5),
            ScenarioData::brownian(0.3),
        ])
        .unwrap();
        let v = expectation(&xi, &set, &small_cfg()).unwrap();
        assert!((v - 1.75).abs() < 1e-12);
    }

    #[test]
    fn horizons_and_shift() {
        let xi = CylinderFunctional::new(vec![1.0, 2.5], 1, |_| 0.0, 0.0, 0.0).unwrap();
        assert_eq!(xi.horizons(), vec![1.0, 1.5]);
        let s = xi.shifted(0.5).unwrap();
        assert_eq!(s.start(), 0.5);
        assert_eq!(s.horizons(), vec![1.0, 1.5]);
    }

    #[test]
    fn functional_of_first_increment_is_its_own_conditional() {
        let xi = CylinderFunctional::new(
            vec![0.5, 1.0],
            1,
            |x: &[f64]| (x[0]).clamp(-2.0, 2.0),
            2.0,
            1.0,
        )
        .unwrap();
        let set = UncertaintySet::g_poisson(0.5).unwrap();
        let cfg = small_cfg();
        let cond = conditional_expectation(&xi, 1, &set, &cfg).unwrap();
        for (i, x) in cond.spec().nodes().enumerate() {
            assert!((cond.values()[i] - x[0].clamp(-2.0, 2.0)).abs() < 1e-12);
        }
    }
}
