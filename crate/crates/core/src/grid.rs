//! Uniform box grids, grid functions and clamped multilinear interpolation.

use crate::error::{Error, Result};
use crate::model::Payoff;

/// Grids (including the tensor grids of frozen arguments) never exceed this
/// many axes.
pub const MAX_DIMS: usize = 8;

/// Uniform tensor grid on the box `[lower, upper]`. Nodes are stored in
/// C order: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 || dim > MAX_DIMS {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} outside 1..={MAX_DIMS}"
            )));
        }
        if upper.len() != dim || points.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "lower/upper/points lengths {}/{}/{} differ",
                dim,
                upper.len(),
                points.len()
            )));
        }
        for a in 0..dim {
            if !(lower[a].is_finite() && upper[a].is_finite() && upper[a] > lower[a]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: need finite lower < upper, got [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            if points[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: need at least 3 points, got {}",
                    points[a]
                )));
            }
        }
        let spacing = (0..dim)
            .map(|a| (upper[a] - lower[a]) / (points[a] - 1) as f64)
            .collect();
        let mut strides = vec![1; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        Ok(GridSpec {
            lower,
            upper,
            points,
            spacing,
            strides,
        })
    }

    /// Grid with the requested spacing; the box must be an integer number
    /// of cells wide on every axis.
    pub fn with_spacing(lower: Vec<f64>, upper: Vec<f64>, spacing: &[f64]) -> Result<Self> {
        if spacing.len() != lower.len() {
            return Err(Error::InvalidGrid(
                "spacing length differs from lower".into(),
            ));
        }
        let mut points = Vec::with_capacity(lower.len());
        for (a, &dx) in spacing.iter().enumerate() {
            let width = upper.get(a).copied().unwrap_or(f64::NAN) - lower[a];
            if !(dx.is_finite() && dx > 0.0) || !width.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a}: bad spacing {dx}")));
            }
            let cells = (width / dx).round();
            if cells < 2.0 || ((cells * dx) - width).abs() > 1e-9 * width.abs().max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: width {width} is not a whole number (>= 2) of cells of {dx}"
                )));
            }
            points.push(cells as usize + 1);
        }
        Self::new(lower, upper, points)
    }

    /// One-dimensional convenience constructor.
    pub fn line(lower: f64, upper: f64, spacing: f64) -> Result<Self> {
        Self::with_spacing(vec![lower], vec![upper], &[spacing])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.lower[axis] + k as f64 * self.spacing[axis]
    }

    /// Per-axis node indices of the flat index `flat`.
    pub fn multi_index_into(&self, flat: usize, out: &mut [usize]) {
        let mut rest = flat;
        for a in 0..self.dim() {
            out[a] = rest / self.strides[a];
            rest %= self.strides[a];
        }
    }

    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for a in 0..self.dim() {
            let k = rest / self.strides[a];
            rest %= self.strides[a];
            out[a] = self.coordinate(a, k);
        }
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_into(flat, &mut x);
        x
    }

    /// Flat index of the node at `x`, if `x` is a node up to `1e-9` cells.
    pub fn node_index(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for a in 0..self.dim() {
            let s = (x[a] - self.lower[a]) / self.spacing[a];
            let k = s.round();
            if (s - k).abs() > 1e-9 || k < 0.0 || k > (self.points[a] - 1) as f64 {
                return None;
            }
            flat += k as usize * self.strides[a];
        }
        Some(flat)
    }

    /// Whether `x` lies in the closed box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(a, &v)| v >= self.lower[a] && v <= self.upper[a])
    }

    /// Node coordinates in flat order.
    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }
}

/// Values of `u(t, ·)` on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
    time_label: f64,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, time_label: f64) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::DimensionMismatch {
                what: "grid function values".into(),
                expected: spec.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at node {i}")));
        }
        if !(time_label.is_finite() && time_label >= 0.0) {
            return Err(Error::InvalidTime(time_label));
        }
        Ok(GridFunction {
            spec,
            values,
            time_label,
        })
    }

    /// Samples `payoff` on every node.
    pub fn sample(spec: &GridSpec, payoff: &Payoff, time_label: f64) -> Result<Self> {
        let mut x = vec![0.0; spec.dim()];
        let values = (0..spec.len())
            .map(|i| {
                spec.node_into(i, &mut x);
                payoff.eval(&x)
            })
            .collect();
        Self::new(spec.clone(), values, time_label)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time_label(&self) -> f64 {
        self.time_label
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate(self, x)
    }
}

/// Multilinear interpolation inside the box; outside it the query point is
/// clamped onto the box, so values beyond the boundary equal the nearest
/// boundary value. Weights are non-negative and sum to one, which makes the
/// map monotone in the grid values.
pub fn interpolate(g: &GridFunction, x: &[f64]) -> f64 {
    let spec = &g.spec;
    let dim = spec.dim();
    debug_assert_eq!(x.len(), dim);
    let mut base = 0usize;
    let mut frac = [0.0f64; MAX_DIMS];
    for a in 0..dim {
        let last = spec.points[a] - 1;
        let s = ((x[a] - spec.lower[a]) / spec.spacing[a]).clamp(0.0, last as f64);
        let i0 = (s.floor() as usize).min(last - 1);
        frac[a] = s - i0 as f64;
        base += i0 * spec.strides[a];
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut idx = base;
        for a in 0..dim {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                idx += spec.strides[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if w != 0.0 {
            acc += w * g.values[idx];
        }
    }
    acc
}
