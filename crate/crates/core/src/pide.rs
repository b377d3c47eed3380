//! Explicit monotone finite-difference solver for
//!
//! ```text
//! ∂_t u − sup_{(ν,q,Q)∈U} { ∫ (u(t,x+z) − u(t,x)) ν(dz) + ⟨Du, q⟩ + ½ tr[D²u QQᵀ] } = 0,
//! u(0, ·) = φ,
//! ```
//!
//! whose solution is `u(t, x) = Ê[φ(x + X_t)]`.
//!
//! Every scenario generator is assembled in difference form
//! `Σ_j c_j (u(y_j) − u(x))` with `c_j ≥ 0`: jump atoms contribute their
//! interpolation corners, drift is upwinded per axis, and diffusion uses
//! central second differences plus the 7-point stencil for cross terms.
//! Under `Δt · rate ≤ 1` one forward-Euler step is a monotone map, which is
//! what gives comparison, constant preservation and convexity at the
//! discrete level.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{interpolate, GridFunction, GridSpec, MAX_DIMS};
use crate::model::{Payoff, Scenario, UncertaintySet};

/// Nodes per rayon task; smaller grids are stepped serially.
const PAR_MIN_NODES: usize = 4096;
const PAR_CHUNK: usize = 1024;

/// Behaviour outside the computational box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Constant extension by the nearest boundary value.
    #[default]
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    /// Fraction of the monotonicity limit used for `Δt`, in `(0, 1]`.
    pub cfl_safety: f64,
    pub final_time: f64,
    /// Discretisation tolerance reported alongside results and used by
    /// the series truncation.
    pub tolerance: f64,
    pub boundary: BoundaryMode,
    /// Optional accuracy cap on `Δt`. Pure-jump problems have a CFL limit
    /// of order `1/intensity`, far too coarse for forward Euler accuracy.
    pub max_dt: Option<f64>,
    /// Step budget; exceeding it is reported as `CFL_UNSATISFIABLE`.
    pub max_steps: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            cfl_safety: 0.9,
            final_time: 1.0,
            tolerance: 1e-2,
            boundary: BoundaryMode::Clamp,
            max_dt: Some(1e-3),
            max_steps: 20_000_000,
        }
    }
}

impl SchemeConfig {
    pub fn with_final_time(&self, final_time: f64) -> Self {
        SchemeConfig {
            final_time,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidScheme(format!(
                "cfl_safety {} outside (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return Err(Error::InvalidTime(self.final_time));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidTolerance(self.tolerance));
        }
        if let Some(cap) = self.max_dt {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidScheme(format!("max_dt {cap}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidScheme("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// One `c · (u(x + offset) − u(x))` term; offsets are in grid cells and
/// are clamped onto the box per axis.
#[derive(Debug, Clone, PartialEq)]
struct Term {
    offset: [isize; MAX_DIMS],
    coef: f64,
}

/// A scenario generator assembled for one grid.
#[derive(Debug, Clone)]
struct ScenarioStencil {
    terms: Vec<Term>,
    rate: f64,
}

impl ScenarioStencil {
    fn assemble(scenario: &Scenario, index: usize, spec: &GridSpec) -> Result<Self> {
        let dim = spec.dim();
        let dx = spec.spacing();
        let mut terms = Vec::new();

        for (k, atom) in scenario.atoms().iter().enumerate() {
            let resolved = (0..dim).any(|a| atom.jump[a].abs() >= 0.5 * dx[a]);
            if !resolved {
                return Err(Error::GridTooCoarse {
                    scenario: index,
                    atom: k,
                });
            }
            if atom.rate == 0.0 {
                continue;
            }
            // per-axis (cell shift, fraction towards the next cell)
            let mut shift = [0isize; MAX_DIMS];
            let mut frac = [0.0f64; MAX_DIMS];
            for a in 0..dim {
                let s = atom.jump[a] / dx[a];
                let mut i0 = s.floor();
                let mut f = s - i0;
                if f < 1e-12 {
                    f = 0.0;
                } else if f > 1.0 - 1e-12 {
                    i0 += 1.0;
                    f = 0.0;
                }
                shift[a] = i0 as isize;
                frac[a] = f;
            }
            for corner in 0..(1usize << dim) {
                let mut w = atom.rate;
                let mut offset = [0isize; MAX_DIMS];
                for a in 0..dim {
                    if corner >> a & 1 == 1 {
                        w *= frac[a];
                        offset[a] = shift[a] + 1;
                    } else {
                        w *= 1.0 - frac[a];
                        offset[a] = shift[a];
                    }
                }
                if w != 0.0 {
                    terms.push(Term { offset, coef: w });
                }
            }
        }

        let unit = |a: usize, s: isize| {
            let mut o = [0isize; MAX_DIMS];
            o[a] = s;
            o
        };

        for (a, &q) in scenario.drift().iter().enumerate() {
            if q != 0.0 {
                let dir = if q > 0.0 { 1 } else { -1 };
                terms.push(Term {
                    offset: unit(a, dir),
                    coef: q.abs() / dx[a],
                });
            }
        }

        let cov = scenario.covariance();
        for i in 0..dim {
            let cross: f64 = (0..dim)
                .filter(|&j| j != i)
                .map(|j| cov[(i, j)].abs() / dx[j])
                .sum();
            if cov[(i, i)] / dx[i] < cross * (1.0 - 1e-12) {
                let j = (0..dim)
                    .find(|&j| j != i && cov[(i, j)] != 0.0)
                    .unwrap_or(i);
                return Err(Error::NonmonotoneDiffusion {
                    scenario: index,
                    i: i.min(j),
                    j: i.max(j),
                });
            }
        }
        let mut local: Vec<Term> = Vec::new();
        let mut push = |offset: [isize; MAX_DIMS], coef: f64| {
            if let Some(t) = local.iter_mut().find(|t| t.offset == offset) {
                t.coef += coef;
            } else {
                local.push(Term { offset, coef });
            }
        };
        for i in 0..dim {
            let c = 0.5 * cov[(i, i)] / (dx[i] * dx[i]);
            if c != 0.0 {
                push(unit(i, 1), c);
                push(unit(i, -1), c);
            }
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let aij = cov[(i, j)];
                if aij == 0.0 {
                    continue;
                }
                let h = 0.5 * aij.abs() / (dx[i] * dx[j]);
                let mut pp = [0isize; MAX_DIMS];
                let mut mm = [0isize; MAX_DIMS];
                pp[i] = 1;
                mm[i] = -1;
                if aij > 0.0 {
                    pp[j] = 1;
                    mm[j] = -1;
                } else {
                    pp[j] = -1;
                    mm[j] = 1;
                }
                push(pp, h);
                push(mm, h);
                push(unit(i, 1), -h);
                push(unit(i, -1), -h);
                push(unit(j, 1), -h);
                push(unit(j, -1), -h);
            }
        }
        // diagonal dominance leaves only non-negative weights; round-off
        // residue is dropped
        terms.extend(local.into_iter().filter(|t| t.coef > 0.0));

        let jump_rate = scenario.jump_intensity();
        let drift_rate: f64 = scenario
            .drift()
            .iter()
            .zip(dx)
            .map(|(q, h)| q.abs() / h)
            .sum();
        let mut diffusion_rate = 0.0;
        for i in 0..dim {
            diffusion_rate += cov[(i, i)] / (dx[i] * dx[i]);
            for j in i + 1..dim {
                diffusion_rate += cov[(i, j)].abs() / (dx[i] * dx[j]);
            }
        }
        Ok(ScenarioStencil {
            terms,
            rate: jump_rate + drift_rate + diffusion_rate,
        })
    }

    #[inline]
    fn apply_at(&self, spec: &GridSpec, values: &[f64], k: &[usize], idx: usize) -> f64 {
        let center = values[idx];
        let points = spec.points();
        let strides = spec.strides();
        let mut acc = 0.0;
        for term in &self.terms {
            let mut j = 0usize;
            for a in 0..k.len() {
                let last = points[a] as isize - 1;
                let ka = (k[a] as isize + term.offset[a]).clamp(0, last) as usize;
                j += ka * strides[a];
            }
            acc += term.coef * (values[j] - center);
        }
        acc
    }
}

/// The sup-over-scenarios operator assembled for a fixed grid. Assembly is
/// the expensive validation step, so callers that solve many problems on
/// one grid (the expectation engine) build it once.
#[derive(Debug, Clone)]
pub struct PreparedOperator {
    spec: GridSpec,
    stencils: Vec<ScenarioStencil>,
    rate: f64,
}

impl PreparedOperator {
    pub fn new(set: &UncertaintySet, spec: &GridSpec) -> Result<Self> {
        if set.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                what: "grid dimension vs uncertainty set".into(),
                expected: set.dim(),
                found: spec.dim(),
            });
        }
        let stencils = set
            .scenarios()
            .iter()
            .enumerate()
            .map(|(i, s)| ScenarioStencil::assemble(s, i, spec))
            .collect::<Result<Vec<_>>>()?;
        let rate = stencils.iter().map(|s| s.rate).fold(0.0, f64::max);
        Ok(PreparedOperator {
            spec: spec.clone(),
            stencils,
            rate,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// `max_s (Σ w + Σ|q_i|/Δx_i + Σ a_ii/Δx_i² + Σ_{i<j} |a_ij|/(Δx_i Δx_j))`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Step size used for horizon `horizon` under `cfg`.
    pub fn time_step(&self, cfg: &SchemeConfig, horizon: f64) -> Result<f64> {
        let mut dt = if self.rate > 0.0 {
            cfg.cfl_safety / self.rate
        } else {
            f64::INFINITY
        };
        if let Some(cap) = cfg.max_dt {
            dt = dt.min(cap);
        }
        if horizon > 0.0 {
            dt = dt.min(horizon);
            if !(dt.is_normal() && dt > 0.0) || horizon / dt > cfg.max_steps as f64 {
                return Err(Error::CflUnsatisfiable { dt, horizon });
            }
        } else if !dt.is_finite() {
            dt = 0.0;
        }
        Ok(dt)
    }

    fn node_max(&self, values: &[f64], k: &[usize], idx: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for s in &self.stencils {
            let v = s.apply_at(&self.spec, values, k, idx);
            // strict comparison: ties go to the lowest scenario index
            if v > best {
                best = v;
            }
        }
        best
    }

    /// `max_s L_s u` at every node.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        self.for_each_node(&mut out, |idx, k| self.node_max(values, k, idx));
        out
    }

    /// One forward-Euler step `next = u + dt · max_s L_s u`.
    pub fn step(&self, values: &[f64], next: &mut [f64], dt: f64) {
        self.for_each_node(next, |idx, k| {
            values[idx] + dt * self.node_max(values, k, idx)
        });
    }

    fn for_each_node<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(usize, &[usize]) -> f64 + Sync,
    {
        let dim = self.spec.dim();
        let fill = |start: usize, chunk: &mut [f64]| {
            let mut k = [0usize; MAX_DIMS];
            for (off, slot) in chunk.iter_mut().enumerate() {
                let idx = start + off;
                self.spec.multi_index_into(idx, &mut k[..dim]);
                *slot = f(idx, &k[..dim]);
            }
        };
        if out.len() >= PAR_MIN_NODES {
            out.par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| fill(c * PAR_CHUNK, chunk));
        } else {
            fill(0, out);
        }
    }

    /// Evolves `initial` (values on this operator's grid) and records
    /// snapshots at `output_times`, shortening the step that would
    /// overshoot each requested time.
    pub fn run(
        &self,
        initial: Vec<f64>,
        cfg: &SchemeConfig,
        output_times: &[f64],
    ) -> Result<SolveResult> {
        cfg.validate()?;
        if initial.len() != self.spec.len() {
            return Err(Error::DimensionMismatch {
                what: "initial values".into(),
                expected: self.spec.len(),
                found: initial.len(),
            });
        }
        let horizon = cfg.final_time;
        let mut times: Vec<f64> = Vec::with_capacity(output_times.len());
        for &t in output_times {
            if !t.is_finite() || t < 0.0 || t > horizon * (1.0 + 1e-12) {
                return Err(Error::OutputTimeOutOfRange { t, horizon });
            }
            times.push(t.min(horizon));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();

        let dt = self.time_step(cfg, horizon)?;
        let mut u = initial;
        let mut next = vec![0.0; u.len()];
        let mut t = 0.0;
        let mut steps = 0usize;
        let mut snapshots = Vec::with_capacity(times.len());
        for &target in &times {
            while t < target {
                let remaining = target - t;
                let h = if remaining <= dt * (1.0 + 1e-9) {
                    remaining
                } else {
                    dt
                };
                self.step(&u, &mut next, h);
                std::mem::swap(&mut u, &mut next);
                steps += 1;
                t = if h == remaining { target } else { t + h };
            }
            snapshots.push(GridFunction::new(self.spec.clone(), u.clone(), target)?);
        }
        Ok(SolveResult {
            snapshots,
            dt_used: dt,
            steps,
        })
    }

    pub fn solve(
        &self,
        payoff: &Payoff,
        cfg: &SchemeConfig,
        output_times: &[f64],
    ) -> Result<SolveResult> {
        let initial = GridFunction::sample(&self.spec, payoff, 0.0)?.into_values();
        self.run(initial, cfg, output_times)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub snapshots: Vec<GridFunction>,
    /// Full (unshortened) time step.
    pub dt_used: f64,
    pub steps: usize,
}

impl SolveResult {
    pub fn snapshot(&self, t: f64) -> Result<&GridFunction> {
        let slack = 1e-12 * t.abs().max(1.0);
        self.snapshots
            .iter()
            .find(|g| (g.time_label() - t).abs() <= slack)
            .ok_or(Error::NoSnapshot(t))
    }

    /// Interpolated value of the snapshot stored at time `t`.
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<f64> {
        let g = self.snapshot(t)?;
        if x.len() != g.spec().dim() {
            return Err(Error::DimensionMismatch {
                what: "evaluation point".into(),
                expected: g.spec().dim(),
                found: x.len(),
            });
        }
        Ok(interpolate(g, x))
    }

    pub fn last(&self) -> Option<&GridFunction> {
        self.snapshots.last()
    }
}

/// Per-node generator `L_s g` of a single scenario.
pub fn apply_generator(g: &GridFunction, scenario: &Scenario) -> Result<Vec<f64>> {
    if scenario.dim() != g.spec().dim() {
        return Err(Error::DimensionMismatch {
            what: "grid dimension vs scenario".into(),
            expected: scenario.dim(),
            found: g.spec().dim(),
        });
    }
    let stencil = ScenarioStencil::assemble(scenario, 0, g.spec())?;
    let spec = g.spec();
    let dim = spec.dim();
    let mut k = vec![0usize; dim];
    Ok((0..spec.len())
        .map(|idx| {
            spec.multi_index_into(idx, &mut k);
            stencil.apply_at(spec, g.values(), &k, idx)
        })
        .collect())
}

/// Solves the integro-PDE for `u(0,·) = payoff` on `grid` up to
/// `cfg.final_time`, storing snapshots at `output_times`.
pub fn solve(
    payoff: &Payoff,
    set: &UncertaintySet,
    grid: &GridSpec,
    cfg: &SchemeConfig,
    output_times: &[f64],
) -> Result<SolveResult> {
    cfg.validate()?;
    PreparedOperator::new(set, grid)?.solve(payoff, cfg, output_times)
}
