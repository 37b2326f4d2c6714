//! Uniform grids on `[0, T]` and sampled signals living on them.
//!
//! Two node layouts are supported. Midpoint grids put `n` nodes at the cell
//! centres `(i - 1/2) T / n`; endpoint grids put `n + 1` nodes at `i T / n`.
//! Solutions are carried on midpoint grids, noisy data usually on a finer
//! endpoint grid.

use std::fmt::Write as _;
use std::io;

use crate::error::{DeconvError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStyle {
    Midpoint,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    t_end: f64,
    cells: usize,
    style: GridStyle,
}

impl Grid {
    pub fn new(t_end: f64, cells: usize, style: GridStyle) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(DeconvError::Config(format!("grid length must be positive, got {t_end}")));
        }
        if cells == 0 {
            return Err(DeconvError::Config("grid needs at least one cell".into()));
        }
        Ok(Self { t_end, cells, style })
    }

    pub fn midpoint(t_end: f64, cells: usize) -> Result<Self> {
        Self::new(t_end, cells, GridStyle::Midpoint)
    }

    pub fn endpoint(t_end: f64, cells: usize) -> Result<Self> {
        Self::new(t_end, cells, GridStyle::Endpoint)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn style(&self) -> GridStyle {
        self.style
    }

    /// Node spacing `T / n`.
    pub fn step(&self) -> f64 {
        self.t_end / self.cells as f64
    }

    pub fn len(&self) -> usize {
        match self.style {
            GridStyle::Midpoint => self.cells,
            GridStyle::Endpoint => self.cells + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn offset(&self) -> f64 {
        match self.style {
            GridStyle::Midpoint => 0.5,
            GridStyle::Endpoint => 0.0,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.len());
        (i as f64 + self.offset()) * self.t_end / self.cells as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Same layout with `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.t_end, self.cells * factor.max(1), self.style)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.style == other.style
            && self.cells == other.cells
            && (self.t_end - other.t_end).abs() <= 1e-14 * self.t_end
    }
}

/// Node values of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    grid: Grid,
    values: Vec<f64>,
}

impl GridSignal {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(DeconvError::Length { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Piecewise-linear interpolation through the nodes, extended by the
    /// first/last node value out to the domain boundary.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let t_end = self.grid.t_end;
        if !(0.0..=t_end).contains(&t) {
            return Err(DeconvError::Domain { t, t_end });
        }
        Ok(self.eval_clamped(t))
    }

    /// Same as [`eval`](Self::eval) for `t` already known to be in range.
    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        let v = &self.values;
        let last = v.len() - 1;
        let pos = t / self.grid.step() - self.grid.offset();
        if pos <= 0.0 {
            return v[0];
        }
        if pos >= last as f64 {
            return v[last];
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if frac == 0.0 {
            v[k]
        } else {
            v[k] + frac * (v[k + 1] - v[k])
        }
    }

    /// Resample onto another grid over the same interval.
    pub fn resample(&self, grid: &Grid) -> Result<GridSignal> {
        if (grid.t_end - self.grid.t_end).abs() > 1e-12 * self.grid.t_end {
            return Err(DeconvError::GridMismatch);
        }
        let values = grid.nodes().into_iter().map(|t| self.eval_clamped(t)).collect();
        Ok(GridSignal { grid: *grid, values })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Plain discrete ℓ₂ norm of the node values.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// ℓ₂ norm scaled by `sqrt(step)`, a surrogate for the L² norm on `[0, T]`.
    pub fn weighted_l2_norm(&self) -> f64 {
        self.l2_norm() * self.grid.step().sqrt()
    }

    pub fn sub(&self, other: &GridSignal) -> Result<GridSignal> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &GridSignal) -> Result<GridSignal> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> GridSignal {
        GridSignal { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    fn zip_with(&self, other: &GridSignal, op: impl Fn(f64, f64) -> f64) -> Result<GridSignal> {
        if !self.grid.same_as(&other.grid) {
            return Err(DeconvError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(GridSignal { grid: self.grid, values })
    }

    /// `‖self − exact‖₂ / ‖exact‖₂` over the nodes.
    pub fn rel_error_l2(&self, exact: &GridSignal) -> Result<f64> {
        let diff = self.sub(exact)?;
        let denom = exact.l2_norm();
        if denom == 0.0 {
            return Err(DeconvError::ZeroReference);
        }
        Ok(diff.l2_norm() / denom)
    }

    /// `‖self − exact‖∞ / ‖exact‖∞` over the nodes.
    pub fn rel_error_sup(&self, exact: &GridSignal) -> Result<f64> {
        let diff = self.sub(exact)?;
        let denom = exact.sup_norm();
        if denom == 0.0 {
            return Err(DeconvError::ZeroReference);
        }
        Ok(diff.sup_norm() / denom)
    }

    /// CSV with header `t,value`, 17 significant digits, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_f64(self.grid.node(i)), fmt_f64(*v));
        }
        out
    }

    pub fn write_csv(&self, mut w: impl io::Write) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }
}

/// Format with 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
