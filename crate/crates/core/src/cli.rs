//! Job configuration and dispatch for the `glevy` batch front-end.
//!
//! A job is a flat `key = value` document. `#` starts a comment, blank
//! lines are ignored, keys are unique except `scenario`, which may repeat.
//! Unknown keys, and known keys that the chosen command does not use, are
//! rejected.
//!
//! ```text
//! command   = solve                # solve | gpoisson | expect | generator | check
//! dim       = 1
//! uncertainty = gpoisson           # or one `scenario` line per triplet
//! lambda    = 0.5
//! scenario  = jumps: 1@0.5 2,0@0.1 ; drift: 0 ; diffusion: 0.3
//! payoff    = clip-linear          # clip-linear | indicator-ramp | quadratic-clip | constant | table
//! payoff.clip  = 40
//! payoff.scale = -1
//! grid.lower = -10
//! grid.upper = 50
//! grid.points = 1201
//! t = 1
//! ```
//!
//! See the README for the full key list per command.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::checks;
use crate::engine::{self, CylinderFunctional, EngineConfig};
use crate::error::{Error, Result};
use crate::gpoisson::{gpoisson_closed_form, Direction};
use crate::grid::GridSpec;
use crate::levy_khintchine::{g_operator_argmax, small_time_quotient, TestFunction};
use crate::model::{Atom, Payoff, ScenarioData, UncertaintySet};
use crate::pide::{self, SchemeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    GPoisson,
    Expect,
    Generator,
    Check,
}

impl Command {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "solve" => Command::Solve,
            "gpoisson" => Command::GPoisson,
            "expect" => Command::Expect,
            "generator" => Command::Generator,
            "check" => Command::Check,
            _ => return None,
        })
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        const SCHEME: [&str; 4] = [
            "scheme.cfl",
            "scheme.max_dt",
            "scheme.tol",
            "scheme.max_steps",
        ];
        match self {
            Command::Solve => &[
                "command",
                "dim",
                "uncertainty",
                "lambda",
                "scenario",
                "payoff",
                "payoff.clip",
                "payoff.cap",
                "payoff.low",
                "payoff.high",
                "payoff.value",
                "payoff.table",
                "payoff.scale",
                "payoff.shift",
                "grid.lower",
                "grid.upper",
                "grid.points",
                "t",
                "times",
                "x",
                "output",
                SCHEME[0],
                SCHEME[1],
                SCHEME[2],
                SCHEME[3],
            ],
            Command::GPoisson => &[
                "command",
                "dim",
                "lambda",
                "payoff",
                "payoff.clip",
                "payoff.cap",
                "payoff.low",
                "payoff.high",
                "payoff.value",
                "payoff.table",
                "payoff.scale",
                "payoff.shift",
                "t",
                "x",
                "direction",
                "tol",
                "output",
            ],
            Command::Expect => &[
                "command",
                "dim",
                "uncertainty",
                "lambda",
                "scenario",
                "payoff",
                "payoff.clip",
                "payoff.cap",
                "payoff.low",
                "payoff.high",
                "payoff.value",
                "payoff.table",
                "payoff.scale",
                "payoff.shift",
                "grid.lower",
                "grid.upper",
                "grid.points",
                "increments",
                "engine.lower",
                "engine.upper",
                "engine.points",
                "engine.max_axes",
                "engine.node_budget",
                "output",
                SCHEME[0],
                SCHEME[1],
                SCHEME[2],
                SCHEME[3],
            ],
            Command::Generator => &[
                "command",
                "dim",
                "uncertainty",
                "lambda",
                "scenario",
                "testfn",
                "testfn.center",
                "testfn.radius",
                "testfn.height",
                "delta",
                "grid.lower",
                "grid.upper",
                "grid.points",
                "output",
                SCHEME[0],
                SCHEME[1],
                SCHEME[2],
                SCHEME[3],
            ],
            Command::Check => &["command", "seed", "output"],
        }
    }
}

const ALL_KEYS: &[&str] = &[
    "command",
    "dim",
    "uncertainty",
    "lambda",
    "scenario",
    "payoff",
    "payoff.clip",
    "payoff.cap",
    "payoff.low",
    "payoff.high",
    "payoff.value",
    "payoff.table",
    "payoff.scale",
    "payoff.shift",
    "grid.lower",
    "grid.upper",
    "grid.points",
    "scheme.cfl",
    "scheme.max_dt",
    "scheme.tol",
    "scheme.max_steps",
    "t",
    "times",
    "x",
    "direction",
    "tol",
    "delta",
    "testfn",
    "testfn.center",
    "testfn.radius",
    "testfn.height",
    "increments",
    "engine.lower",
    "engine.upper",
    "engine.points",
    "engine.max_axes",
    "engine.node_budget",
    "seed",
    "output",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    ClipLinear { clip: f64 },
    IndicatorRamp { low: f64, high: f64 },
    QuadraticClip { cap: f64 },
    Constant { value: f64 },
    Table(Vec<(f64, f64)>),
}

/// Named payoff primitive followed by `scale · φ + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffDescriptor {
    pub kind: PayoffKind,
    pub scale: f64,
    pub shift: f64,
}

impl PayoffDescriptor {
    pub fn build(&self) -> Result<Payoff> {
        let base = match &self.kind {
            PayoffKind::ClipLinear { clip } => Payoff::clip_linear(*clip)?,
            PayoffKind::IndicatorRamp { low, high } => Payoff::indicator_ramp(*low, *high)?,
            PayoffKind::QuadraticClip { cap } => Payoff::quadratic_clip(*cap)?,
            PayoffKind::Constant { value } => Payoff::constant(*value)?,
            PayoffKind::Table(points) => Payoff::table(points.clone())?,
        };
        let scaled = if self.scale == 1.0 {
            base
        } else {
            base.scaled(self.scale)?
        };
        if self.shift == 0.0 {
            Ok(scaled)
        } else {
            scaled.shifted(self.shift)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestFnDescriptor {
    Bump {
        center: f64,
        radius: f64,
        height: f64,
    },
    OneMinusCos,
}

impl TestFnDescriptor {
    pub fn build(&self) -> Result<TestFunction> {
        match *self {
            TestFnDescriptor::Bump {
                center,
                radius,
                height,
            } => TestFunction::bump(center, radius, height),
            TestFnDescriptor::OneMinusCos => TestFunction::one_minus_cos(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobConfig {
    pub command: Command,
    pub dim: usize,
    pub uncertainty: Option<UncertaintySet>,
    pub lambda: Option<f64>,
    pub payoff: Option<PayoffDescriptor>,
    pub grid: Option<GridSpec>,
    pub scheme: SchemeConfig,
    pub t: Option<f64>,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub direction: Option<Direction>,
    pub tol: f64,
    pub delta: Option<f64>,
    pub testfn: Option<TestFnDescriptor>,
    pub increments: Vec<f64>,
    pub frozen_grid: Option<GridSpec>,
    pub max_axes: usize,
    pub node_budget: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

fn invalid(key: &str, msg: impl Into<String>) -> Error {
    Error::Validation {
        key: key.to_string(),
        msg: msg.into(),
    }
}

struct Entries {
    single: BTreeMap<String, String>,
    scenarios: Vec<String>,
}

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.single.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| invalid(key, "required for this command"))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    invalid(key, format!("expected a non-negative integer, got `{v}`"))
                })
            })
            .transpose()
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| invalid(key, format!("expected a number, got `{v}`")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, format!("expected a finite number, got `{v}`")))
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_f64(key, p)).collect()
}

fn tokenize(text: &str) -> Result<Entries> {
    let known: HashSet<&str> = ALL_KEYS.iter().copied().collect();
    let mut single = BTreeMap::new();
    let mut scenarios = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("empty value for `{key}`"),
            });
        }
        if !known.contains(key) {
            return Err(invalid(key, format!("unknown key (line {line_no})")));
        }
        if key == "scenario" {
            scenarios.push(value.to_string());
        } else if single.insert(key.to_string(), value.to_string()).is_some() {
            return Err(invalid(key, format!("duplicate key (line {line_no})")));
        }
    }
    Ok(Entries { single, scenarios })
}

/// `jumps: z@w z@w ; drift: q ; diffusion: row / row`, every part optional.
fn parse_scenario(text: &str, dim: usize) -> Result<ScenarioData> {
    let bad = |msg: String| invalid("scenario", msg);
    let mut data = ScenarioData::zero(dim);
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, body) = part
            .split_once(':')
            .ok_or_else(|| bad(format!("expected `name: value`, got `{part}`")))?;
        let body = body.trim();
        match name.trim() {
            "jumps" => {
                for atom in body.split_whitespace() {
                    let (z, w) = atom
                        .split_once('@')
                        .ok_or_else(|| bad(format!("atom `{atom}` must be `z@rate`")))?;
                    let jump = parse_list("scenario", z)?;
                    let rate = parse_f64("scenario", w)?;
                    data.atoms.push(Atom::new(jump, rate));
                }
            }
            "drift" => data.drift = parse_list("scenario", body)?,
            "diffusion" => {
                data.diffusion = body
                    .split('/')
                    .map(|row| parse_list("scenario", row))
                    .collect::<Result<_>>()?
            }
            other => return Err(bad(format!("unknown scenario part `{other}`"))),
        }
    }
    Ok(data)
}

fn parse_uncertainty(e: &Entries, dim: usize) -> Result<UncertaintySet> {
    match (e.get("uncertainty"), e.scenarios.is_empty()) {
        (Some("gpoisson"), true) => {
            if dim != 1 {
                return Err(invalid("uncertainty", "gpoisson requires dim = 1"));
            }
            let lambda = e
                .f64("lambda")?
                .ok_or_else(|| invalid("lambda", "required by uncertainty = gpoisson"))?;
            UncertaintySet::g_poisson(lambda).map_err(|err| invalid("lambda", err.to_string()))
        }
        (Some("gpoisson"), false) => Err(invalid(
            "scenario",
            "give either uncertainty = gpoisson or scenario lines, not both",
        )),
        (Some(other), _) => Err(invalid("uncertainty", format!("unknown preset `{other}`"))),
        (None, true) => Err(invalid(
            "scenario",
            "at least one scenario line is required",
        )),
        (None, false) => {
            if e.get("lambda").is_some() {
                return Err(invalid("lambda", "only used with uncertainty = gpoisson"));
            }
            let raw = e
                .scenarios
                .iter()
                .map(|s| parse_scenario(s, dim))
                .collect::<Result<Vec<_>>>()?;
            UncertaintySet::new(raw)
                .map_err(|err| invalid("scenario", format!("{}: {err}", err.code())))
        }
    }
}

fn parse_payoff(e: &Entries) -> Result<PayoffDescriptor> {
    let kind = match e.require("payoff")? {
        "clip-linear" => PayoffKind::ClipLinear {
            clip: e.f64_or("payoff.clip", 1e6)?,
        },
        "indicator-ramp" => PayoffKind::IndicatorRamp {
            low: e
                .f64("payoff.low")?
                .ok_or_else(|| invalid("payoff.low", "required"))?,
            high: e
                .f64("payoff.high")?
                .ok_or_else(|| invalid("payoff.high", "required"))?,
        },
        "quadratic-clip" => PayoffKind::QuadraticClip {
            cap: e
                .f64("payoff.cap")?
                .ok_or_else(|| invalid("payoff.cap", "required"))?,
        },
        "constant" => PayoffKind::Constant {
            value: e
                .f64("payoff.value")?
                .ok_or_else(|| invalid("payoff.value", "required"))?,
        },
        "table" => {
            let text = e.require("payoff.table")?;
            let points = text
                .split(',')
                .map(|pair| {
                    let (x, u) = pair
                        .split_once(':')
                        .ok_or_else(|| invalid("payoff.table", format!("`{pair}` is not x:u")))?;
                    Ok((parse_f64("payoff.table", x)?, parse_f64("payoff.table", u)?))
                })
                .collect::<Result<Vec<_>>>()?;
            PayoffKind::Table(points)
        }
        other => return Err(invalid("payoff", format!("unknown payoff `{other}`"))),
    };
    // parameters belonging to a different primitive are rejected
    let own: &[&str] = match kind {
        PayoffKind::ClipLinear { .. } => &["payoff.clip"],
        PayoffKind::IndicatorRamp { .. } => &["payoff.low", "payoff.high"],
        PayoffKind::QuadraticClip { .. } => &["payoff.cap"],
        PayoffKind::Constant { .. } => &["payoff.value"],
        PayoffKind::Table(_) => &["payoff.table"],
    };
    for key in [
        "payoff.clip",
        "payoff.cap",
        "payoff.low",
        "payoff.high",
        "payoff.value",
        "payoff.table",
    ] {
        if e.get(key).is_some() && !own.contains(&key) {
            return Err(invalid(key, "not a parameter of the chosen payoff"));
        }
    }
    let desc = PayoffDescriptor {
        kind,
        scale: e.f64_or("payoff.scale", 1.0)?,
        shift: e.f64_or("payoff.shift", 0.0)?,
    };
    desc.build()
        .map_err(|err| invalid("payoff", err.to_string()))?;
    Ok(desc)
}

fn parse_grid(e: &Entries, prefix: &str, dim: usize) -> Result<GridSpec> {
    let key = |s: &str| format!("{prefix}.{s}");
    let lower = e
        .list(&key("lower"))?
        .ok_or_else(|| invalid(&key("lower"), "required"))?;
    let upper = e
        .list(&key("upper"))?
        .ok_or_else(|| invalid(&key("upper"), "required"))?;
    let points_text = e.require(&key("points"))?;
    let points = points_text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| invalid(&key("points"), format!("`{p}` is not a count")))
        })
        .collect::<Result<Vec<_>>>()?;
    for (name, len) in [
        ("lower", lower.len()),
        ("upper", upper.len()),
        ("points", points.len()),
    ] {
        if len != dim {
            return Err(invalid(
                &key(name),
                format!("expected {dim} entries, got {len}"),
            ));
        }
    }
    GridSpec::new(lower, upper, points).map_err(|err| invalid(&key("points"), err.to_string()))
}

fn parse_scheme(e: &Entries) -> Result<SchemeConfig> {
    let mut s = SchemeConfig::default();
    if let Some(v) = e.f64("scheme.cfl")? {
        s.cfl_safety = v;
    }
    if let Some(v) = e.f64("scheme.max_dt")? {
        s.max_dt = if v == 0.0 { None } else { Some(v) };
    }
    if let Some(v) = e.f64("scheme.tol")? {
        s.tolerance = v;
    }
    if let Some(v) = e.usize("scheme.max_steps")? {
        s.max_steps = v;
    }
    s.validate().map_err(|err| {
        let key = match err {
            Error::InvalidTolerance(_) => "scheme.tol",
            _ if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) => "scheme.cfl",
            _ if s.max_steps == 0 => "scheme.max_steps",
            _ => "scheme.max_dt",
        };
        invalid(key, err.to_string())
    })?;
    Ok(s)
}

fn nonnegative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be non-negative, got {v}")))
    }
}

/// Checks that `grid` extends at least the jump/drift/diffusion padding for
/// horizon `t` on every side of `x`.
fn check_padding(grid: &GridSpec, set: &UncertaintySet, t: f64, x: &[f64]) -> Result<()> {
    let pad = set.padding(t);
    for a in 0..grid.dim() {
        if x[a] - grid.lower()[a] < pad {
            return Err(invalid(
                "grid.lower",
                format!(
                    "axis {a}: need at least {pad} of padding below x = {}",
                    x[a]
                ),
            ));
        }
        if grid.upper()[a] - x[a] < pad {
            return Err(invalid(
                "grid.upper",
                format!(
                    "axis {a}: need at least {pad} of padding above x = {}",
                    x[a]
                ),
            ));
        }
    }
    Ok(())
}

/// Parses and validates a job document.
pub fn parse_config(text: &str) -> Result<JobConfig> {
    let e = tokenize(text)?;
    let command_text = e.require("command")?;
    let command = Command::parse(command_text)
        .ok_or_else(|| invalid("command", format!("unknown command `{command_text}`")))?;
    let allowed = command.allowed_keys();
    if let Some(k) = e.single.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(invalid(k, format!("not used by command `{command_text}`")));
    }
    if !e.scenarios.is_empty() && !allowed.contains(&"scenario") {
        return Err(invalid(
            "scenario",
            format!("not used by command `{command_text}`"),
        ));
    }

    let dim = e.usize("dim")?.unwrap_or(1);
    if dim == 0 || dim > 3 {
        return Err(invalid("dim", format!("must be 1, 2 or 3, got {dim}")));
    }

    let mut job = JobConfig {
        command,
        dim,
        uncertainty: None,
        lambda: None,
        payoff: None,
        grid: None,
        scheme: parse_scheme(&e)?,
        t: None,
        times: Vec::new(),
        x: vec![0.0; dim],
        direction: None,
        tol: 1e-12,
        delta: None,
        testfn: None,
        increments: Vec::new(),
        frozen_grid: None,
        max_axes: 3,
        node_budget: 250_000,
        seed: 0x5eed,
        output: e.get("output").map(PathBuf::from),
    };
    if let Some(x) = e.list("x")? {
        if x.len() != dim {
            return Err(invalid("x", format!("expected {dim} entries")));
        }
        job.x = x;
    }

    match command {
        Command::Solve => {
            let set = parse_uncertainty(&e, dim)?;
            job.payoff = Some(parse_payoff(&e)?);
            let grid = parse_grid(&e, "grid", dim)?;
            let t = nonnegative("t", e.f64("t")?.ok_or_else(|| invalid("t", "required"))?)?;
            job.times = match e.list("times")? {
                Some(times) => times,
                None => vec![t],
            };
            if let Some(bad) = job.times.iter().find(|&&s| !(0.0..=t).contains(&s)) {
                return Err(invalid("times", format!("{bad} is outside [0, t]")));
            }
            check_padding(&grid, &set, t, &job.x)?;
            job.t = Some(t);
            job.grid = Some(grid);
            job.uncertainty = Some(set);
        }
        Command::GPoisson => {
            if dim != 1 {
                return Err(invalid("dim", "gpoisson is one-dimensional"));
            }
            let lambda = e
                .f64("lambda")?
                .ok_or_else(|| invalid("lambda", "required"))?;
            if !(0.0..=1.0).contains(&lambda) {
                return Err(invalid("lambda", format!("{lambda} is outside [0, 1]")));
            }
            job.lambda = Some(lambda);
            job.payoff = Some(parse_payoff(&e)?);
            job.t = Some(nonnegative(
                "t",
                e.f64("t")?.ok_or_else(|| invalid("t", "required"))?,
            )?);
            job.direction = Some(match e.get("direction").unwrap_or("increasing") {
                "increasing" => Direction::Increasing,
                "decreasing" => Direction::Decreasing,
                other => return Err(invalid("direction", format!("unknown direction `{other}`"))),
            });
            job.tol = e.f64_or("tol", 1e-12)?;
            if job.tol <= 0.0 {
                return Err(invalid("tol", "must be positive"));
            }
        }
        Command::Expect => {
            let set = parse_uncertainty(&e, dim)?;
            job.payoff = Some(parse_payoff(&e)?);
            let grid = parse_grid(&e, "grid", dim)?;
            job.frozen_grid = Some(parse_grid(&e, "engine", dim)?);
            job.increments = e
                .list("increments")?
                .ok_or_else(|| invalid("increments", "required"))?;
            let mut prev = 0.0;
            for &t in &job.increments {
                if t <= prev {
                    return Err(invalid(
                        "increments",
                        "times must be positive and increasing",
                    ));
                }
                prev = t;
            }
            let horizon = job
                .increments
                .iter()
                .scan(0.0, |p, &t| {
                    let h = t - *p;
                    *p = t;
                    Some(h)
                })
                .fold(0.0, f64::max);
            check_padding(&grid, &set, horizon, &job.x)?;
            if let Some(v) = e.usize("engine.max_axes")? {
                job.max_axes = v;
            }
            if let Some(v) = e.usize("engine.node_budget")? {
                job.node_budget = v;
            }
            job.grid = Some(grid);
            job.uncertainty = Some(set);
        }
        Command::Generator => {
            let set = parse_uncertainty(&e, dim)?;
            job.testfn = Some(match e.require("testfn")? {
                "bump" => {
                    if dim != 1 {
                        return Err(invalid("testfn", "bump is one-dimensional"));
                    }
                    TestFnDescriptor::Bump {
                        center: e
                            .f64("testfn.center")?
                            .ok_or_else(|| invalid("testfn.center", "required"))?,
                        radius: e.f64_or("testfn.radius", 0.5)?,
                        height: e.f64_or("testfn.height", 1.0)?,
                    }
                }
                "one-minus-cos" => {
                    if dim != 1 {
                        return Err(invalid("testfn", "one-minus-cos is one-dimensional"));
                    }
                    TestFnDescriptor::OneMinusCos
                }
                other => {
                    return Err(invalid(
                        "testfn",
                        format!("unknown test function `{other}`"),
                    ))
                }
            });
            job.testfn
                .as_ref()
                .unwrap()
                .build()
                .map_err(|err| invalid("testfn", err.to_string()))?;
            if let Some(delta) = e.f64("delta")? {
                if delta <= 0.0 {
                    return Err(invalid("delta", "must be positive"));
                }
                let grid = parse_grid(&e, "grid", dim)?;
                check_padding(&grid, &set, delta, &job.x)?;
                job.delta = Some(delta);
                job.grid = Some(grid);
            }
            job.uncertainty = Some(set);
        }
        Command::Check => {
            if let Some(seed) = e.get("seed") {
                job.seed = seed
                    .parse()
                    .map_err(|_| invalid("seed", format!("`{seed}` is not a u64")))?;
            }
        }
    }
    Ok(job)
}

/// Shortest-round-trip-safe rendering with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Outcome of a job: the artifact text and whether every reported check
/// passed (always true outside `check`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub text: String,
    pub success: bool,
}

fn report(rows: &[(&str, String)]) -> String {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Executes a parsed job and renders its artifact.
pub fn run(job: &JobConfig) -> Result<RunOutput> {
    let text = match job.command {
        Command::Solve => {
            let set = job.uncertainty.as_ref().expect("validated");
            let grid = job.grid.as_ref().expect("validated");
            let payoff = job.payoff.as_ref().expect("validated").build()?;
            let cfg = job.scheme.with_final_time(job.t.expect("validated"));
            let result = pide::solve(&payoff, set, grid, &cfg, &job.times)?;
            let mut out = String::from("t");
            for a in 1..=job.dim {
                let _ = write!(out, ",x{a}");
            }
            out.push_str(",u\n");
            for snap in &result.snapshots {
                let t = fmt_f64(snap.time_label());
                for (i, x) in grid.nodes().enumerate() {
                    out.push_str(&t);
                    for v in x {
                        out.push(',');
                        out.push_str(&fmt_f64(v));
                    }
                    out.push(',');
                    out.push_str(&fmt_f64(snap.values()[i]));
                    out.push('\n');
                }
            }
            out
        }
        Command::GPoisson => {
            let payoff = job.payoff.as_ref().expect("validated").build()?;
            let lambda = job.lambda.expect("validated");
            let t = job.t.expect("validated");
            let direction = job.direction.expect("validated");
            let v = gpoisson_closed_form(&payoff, direction, lambda, t, job.x[0], job.tol)?;
            let intensity = match direction {
                Direction::Increasing => t,
                Direction::Decreasing => lambda * t,
            };
            report(&[
                ("expectation", fmt_f64(v)),
                ("intensity", fmt_f64(intensity)),
            ])
        }
        Command::Expect => {
            let set = job.uncertainty.as_ref().expect("validated");
            let payoff = job.payoff.as_ref().expect("validated").build()?;
            let dim = job.dim;
            let eval = payoff.eval_fn();
            // payoff of the position B_{t_m} = sum of the increments
            let xi = CylinderFunctional::new(
                job.increments.clone(),
                dim,
                move |inc: &[f64]| {
                    let mut pos = vec![0.0f64; dim];
                    for (i, v) in inc.iter().enumerate() {
                        pos[i % dim] += v;
                    }
                    eval(&pos)
                },
                payoff.bound(),
                payoff.lipschitz(),
            )?;
            let mut cfg = EngineConfig::new(
                job.scheme.clone(),
                job.grid.clone().expect("validated"),
                job.frozen_grid.clone().expect("validated"),
            );
            cfg.max_axes = job.max_axes;
            cfg.node_budget = job.node_budget;
            let v = engine::expectation(&xi, set, &cfg)?;
            let horizon = xi.horizons().into_iter().fold(0.0, f64::max);
            report(&[
                ("expectation", fmt_f64(v)),
                ("padding", fmt_f64(set.padding(horizon))),
            ])
        }
        Command::Generator => {
            let set = job.uncertainty.as_ref().expect("validated");
            let f = job.testfn.as_ref().expect("validated").build()?;
            let (idx, g) = g_operator_argmax(&f, set)?;
            let mut rows = vec![("g_operator", fmt_f64(g)), ("argmax", idx.to_string())];
            if let (Some(delta), Some(grid)) = (job.delta, job.grid.as_ref()) {
                let q = small_time_quotient(&f, set, delta, grid, &job.scheme)?;
                rows.push(("small_time_quotient", fmt_f64(q)));
            }
            report(&rows)
        }
        Command::Check => {
            let rows = checks::run_all(job.seed)?;
            let success = rows.iter().all(|r| r.pass);
            return Ok(RunOutput {
                text: checks::render(&rows),
                success,
            });
        }
    };
    Ok(RunOutput {
        text,
        success: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GPOISSON: &str = "command = gpoisson\nlambda = 0.5\nt = 1\npayoff = clip-linear\n";

    #[test]
    fn minimal_gpoisson_job() {
        let job = parse_config(GPOISSON).unwrap();
        assert_eq!(job.command, Command::GPoisson);
        assert_eq!(job.lambda, Some(0.5));
        let out = run(&job).unwrap();
        assert!(out.text.starts_with("quantity,value\nexpectation,"));
        let v: f64 = out
            .text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_out_of_range() {
        let err = parse_config(&GPOISSON.replace("0.5", "1.5")).unwrap_err();
        assert_eq!(err.code(), "VALIDATION_ERROR");
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "lambda"));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config(&format!("{GPOISSON}foo = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "foo"));
    }

    #[test]
    fn key_of_other_command_rejected() {
        let err = parse_config(&format!("{GPOISSON}grid.lower = -1\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "grid.lower"));
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse_config("command = gpoisson\n# fine\nthis line is broken\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                msg: "expected `key = value`, got `this line is broken`".into()
            }
        );
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = parse_config(&format!("{GPOISSON}t = 2\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "t"));
    }

    #[test]
    fn scenario_lines_parse() {
        let text = "command = generator\ndim = 1\ntestfn = one-minus-cos\n\
                    scenario = jumps: 3.141592653589793@1 ; diffusion: 0.5\n\
                    scenario = drift: 2\n";
        let job = parse_config(text).unwrap();
        let set = job.uncertainty.as_ref().unwrap();
        assert_eq!(set.scenarios().len(), 2);
        assert_eq!(set.scenarios()[1].drift(), &[2.0]);
        let out = run(&job).unwrap().text;
        assert!(out.contains("argmax,0"));
    }

    #[test]
    fn scenario_errors_surface_codes() {
        let text = "command = generator\ntestfn = one-minus-cos\nscenario = jumps: 1@-1\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("NEGATIVE_RATE"), "{err}");
    }

    #[test]
    fn padding_is_enforced() {
        let text = "command = solve\nuncertainty = gpoisson\nlambda = 0.5\npayoff = clip-linear\n\
                    grid.lower = -0.5\ngrid.upper = 10\ngrid.points = 211\nt = 1\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "grid.lower"));
    }

    #[test]
    fn solve_csv_shape_and_round_trip() {
        let text = "command = solve\nuncertainty = gpoisson\nlambda = 0.5\npayoff = clip-linear\n\
                    payoff.clip = 8\ngrid.lower = -2\ngrid.upper = 10\ngrid.points = 121\n\
                    t = 0.5\ntimes = 0, 0.5\nscheme.max_dt = 0.01\n";
        let job = parse_config(text).unwrap();
        let out = run(&job).unwrap().text;
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("t,x1,u"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 242);
        let at = rows.iter().find(|r| r[0] == 0.5 && r[1] == 0.0).unwrap();
        assert!((at[2] - 0.5).abs() < 1e-2);
        // 17 significant digits survive a re-parse
        for r in &rows {
            for v in r {
                assert_eq!(fmt_f64(*v).parse::<f64>().unwrap(), *v);
            }
        }
        assert_eq!(run(&job).unwrap().text, out);
    }
}
