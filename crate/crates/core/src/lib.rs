//! Sublinear expectations of G-Lévy processes.
//!
//! `Ê[φ(x + X_t)] = u(t, x)` where `u` solves a nonlinear integro-PDE whose
//! generator is a supremum of Lévy-Khintchine triplets over an uncertainty
//! set. The crate provides:
//!
//! * [`model`], [`grid`]: uncertainty sets with finite-atom jump measures,
//!   payoffs, box grids and clamped multilinear interpolation;
//! * [`levy_khintchine`]: the generator `G_X` and its small-time quotient;
//! * [`pide`]: an explicit monotone scheme for the integro-PDE;
//! * [`gpoisson`]: the G-Poisson process and power-series solutions;
//! * [`engine`]: expectations and conditional expectations of cylinder
//!   functionals by backward recursion;
//! * [`matrix`]: the `X(I − γX)⁻¹` transform and the `J_{nd}` matrix;
//! * [`cli`], [`checks`]: the configuration-driven batch front-end and its
//!   invariant report.

pub mod checks;
pub mod cli;
pub mod engine;
pub mod error;
pub mod gpoisson;
pub mod grid;
pub mod levy_khintchine;
pub mod matrix;
pub mod model;
pub mod pide;

pub use engine::{conditional_expectation, expectation, CylinderFunctional, EngineConfig};
pub use error::{Error, Result};
pub use gpoisson::{g_lambda, gpoisson_closed_form, series_solution, Direction, GPoissonSpec};
pub use grid::{interpolate, GridFunction, GridSpec};
pub use levy_khintchine::{g_operator, small_time_quotient, TestFunction};
pub use matrix::{gamma_transform, j_matrix, SymMatrix};
pub use model::{validate_uncertainty_set, Atom, Payoff, Scenario, ScenarioData, UncertaintySet};
pub use pide::{apply_generator, solve, BoundaryMode, PreparedOperator, SchemeConfig, SolveResult};
