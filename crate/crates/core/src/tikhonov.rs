//! Zeroth-order Tikhonov regularization of the discretized convolution
//! operator, with the parameter chosen by the discrepancy principle.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{DeconvError, Result};
use crate::grid::{Grid, GridSignal};
use crate::quadrature::{forward_weights, ConvWeights, KernelSpec};
use crate::report::{DeconvReport, Method};
use crate::volterra::{residual, DEFAULT_FINE_FACTOR};

const MAX_EXPANSIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovConfig {
    pub delta: f64,
    /// Target discrepancy is `c_morozov · δ`.
    pub c_morozov: f64,
    pub eps_bracket: (f64, f64),
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl TikhonovConfig {
    pub fn new(delta: f64) -> Result<Self> {
        let cfg = Self { delta, c_morozov: 1.0, eps_bracket: (1e-12, 1e2), tol_rel: 1e-3, max_iter: 60 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(DeconvError::Config(format!("Tikhonov needs a noise level > 0, got {}", self.delta)));
        }
        if !(self.c_morozov >= 1.0 && self.c_morozov.is_finite()) {
            return Err(DeconvError::Config(format!("c_morozov must be >= 1, got {}", self.c_morozov)));
        }
        let (lo, hi) = self.eps_bracket;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(DeconvError::Config(format!("bad eps bracket ({lo}, {hi})")));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel < 0.1) {
            return Err(DeconvError::Config(format!("tol_rel must lie in (0, 0.1), got {}", self.tol_rel)));
        }
        if self.max_iter == 0 {
            return Err(DeconvError::Config("max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        self.c_morozov * self.delta
    }
}

/// Dense discretization `K` of `u ↦ k ⋆ u` with `KᵀK` cached.
#[derive(Debug, Clone)]
pub struct TikhonovOperator {
    grid: Grid,
    k: DMatrix<f64>,
    ktk: DMatrix<f64>,
}

impl TikhonovOperator {
    pub fn from_weights(w: &ConvWeights) -> Self {
        let grid = *w.grid();
        let n = grid.len();
        let k = DMatrix::from_fn(n, n, |i, j| w.get(i, j));
        let ktk = k.tr_mul(&k);
        Self { grid, k, ktk }
    }

    pub fn new(kernel: &KernelSpec, grid: &Grid) -> Result<Self> {
        Ok(Self::from_weights(&forward_weights(kernel, grid, DEFAULT_FINE_FACTOR)?))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    fn rhs(&self, f_delta: &GridSignal) -> Result<DVector<f64>> {
        let f = f_delta.resample(&self.grid)?;
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite("Tikhonov data"));
        }
        Ok(DVector::from_column_slice(f.values()))
    }

    fn solve_vec(&self, ktf: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(DeconvError::Config(format!("eps must be > 0, got {eps}")));
        }
        let mut a = self.ktk.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += eps;
        }
        let chol = a.cholesky().ok_or(DeconvError::NonFinite("Tikhonov normal equations"))?;
        let u = chol.solve(ktf);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(DeconvError::NonFinite("Tikhonov solution"));
        }
        Ok(u)
    }

    fn weighted(&self, v: &DVector<f64>) -> f64 {
        v.norm() * self.grid.step().sqrt()
    }
}

/// Minimizer of `‖Ku − f_δ‖² + ε‖u‖²` via `(KᵀK + εI)u = Kᵀf_δ`.
pub fn tikhonov_solve(op: &TikhonovOperator, f_delta: &GridSignal, eps: f64) -> Result<GridSignal> {
    let f = op.rhs(f_delta)?;
    let u = op.solve_vec(&op.k.tr_mul(&f), eps)?;
    GridSignal::new(op.grid, u.as_slice().to_vec())
}

/// `‖(KᵀK + εI)u − Kᵀf‖₂ / ‖Kᵀf‖₂`.
pub fn normal_equation_residual(op: &TikhonovOperator, f_delta: &GridSignal, eps: f64, u: &GridSignal) -> Result<f64> {
    let f = op.rhs(f_delta)?;
    let ktf = op.k.tr_mul(&f);
    let u = DVector::from_column_slice(u.values());
    let r = &op.ktk * &u + &u * eps - &ktf;
    Ok(r.norm() / ktf.norm())
}

/// Grid-weighted `‖K u_ε − f_δ‖`.
pub fn discrepancy(op: &TikhonovOperator, f_delta: &GridSignal, u: &GridSignal) -> Result<f64> {
    let f = op.rhs(f_delta)?;
    let u = DVector::from_column_slice(u.values());
    Ok(op.weighted(&(&op.k * u - f)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorozovStep {
    pub eps: f64,
    pub discrepancy: f64,
    pub solution_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MorozovResult {
    pub eps: f64,
    pub solution: GridSignal,
    pub discrepancy: f64,
    pub target: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Every evaluation, in the order performed.
    pub trajectory: Vec<MorozovStep>,
}

impl MorozovResult {
    /// Discrepancy non-decreasing and `‖u_ε‖₂` non-increasing in `ε`, up to
    /// `slack` relative.
    pub fn is_monotone(&self, slack: f64) -> bool {
        let mut steps = self.trajectory.clone();
        steps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        steps.windows(2).all(|w| {
            w[1].discrepancy >= w[0].discrepancy * (1.0 - slack) - slack
                && w[1].solution_norm <= w[0].solution_norm * (1.0 + slack) + slack
        })
    }
}

/// Choose `ε` so that the discrepancy equals `c·δ` to `tol_rel`, by
/// bisection on `log ε`.
pub fn morozov_select(op: &TikhonovOperator, f_delta: &GridSignal, cfg: &TikhonovConfig) -> Result<MorozovResult> {
    cfg.validate()?;
    let f = op.rhs(f_delta)?;
    let ktf = op.k.tr_mul(&f);
    let target = cfg.target();
    let mut trajectory = Vec::new();
    let mut eval = |eps: f64| -> Result<(f64, DVector<f64>)> {
        let u = op.solve_vec(&ktf, eps)?;
        let d = op.weighted(&(&op.k * &u - &f));
        trajectory.push(MorozovStep { eps, discrepancy: d, solution_norm: u.norm() });
        Ok((d, u))
    };

    let (mut lo, mut hi) = cfg.eps_bracket;
    let (mut d_lo, mut u_lo) = eval(lo)?;
    for _ in 0..MAX_EXPANSIONS {
        if d_lo <= target {
            break;
        }
        lo /= 10.0;
        (d_lo, u_lo) = eval(lo)?;
    }
    let (mut d_hi, _) = eval(hi)?;
    for _ in 0..MAX_EXPANSIONS {
        if d_hi >= target {
            break;
        }
        hi *= 10.0;
        (d_hi, _) = eval(hi)?;
    }
    if d_lo > target || d_hi < target {
        return Err(DeconvError::NoCrossing { target, lo: d_lo, hi: d_hi });
    }

    let within = |d: f64| (d - target).abs() <= cfg.tol_rel * target;
    let mut best = (lo, d_lo, u_lo);
    let mut iterations = 0;
    let mut converged = within(d_lo);
    while !converged && iterations < cfg.max_iter {
        iterations += 1;
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        let (d, u) = eval(mid)?;
        if (d - target).abs() < (best.1 - target).abs() {
            best = (mid, d, u);
        }
        if within(d) {
            converged = true;
        } else if d < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !converged && within(d_hi) {
        let (d, u) = eval(hi)?;
        best = (hi, d, u);
        converged = true;
    }
    let (eps, disc, u) = best;
    Ok(MorozovResult {
        eps,
        solution: GridSignal::new(op.grid, u.as_slice().to_vec())?,
        discrepancy: disc,
        target,
        iterations,
        converged,
        trajectory,
    })
}

/// Full baseline run: operator assembly, parameter choice and solve.
pub fn tikhonov_deconvolve(
    k: &KernelSpec,
    f_delta: &GridSignal,
    cfg: &TikhonovConfig,
    grid: &Grid,
) -> Result<DeconvReport> {
    let start = Instant::now();
    let op = TikhonovOperator::new(k, grid)?;
    let sel = morozov_select(&op, f_delta, cfg)?;
    let wall_time = start.elapsed();

    let mut metadata = BTreeMap::new();
    metadata.insert("stabilizer".into(), "zeroth-order".into());
    metadata.insert("discrepancy_norm".into(), "grid-weighted-l2".into());
    metadata.insert("c_morozov".into(), format!("{}", cfg.c_morozov));
    metadata.insert("morozov_iterations".into(), sel.iterations.to_string());
    metadata.insert("morozov_converged".into(), sel.converged.to_string());
    metadata.insert("discrepancy".into(), format!("{}", sel.discrepancy));

    let (residual_sup, residual_l2) = residual(k, &sel.solution, f_delta)?;
    Ok(DeconvReport {
        method: Method::Tikhonov,
        solution: sel.solution,
        rel_l2: None,
        sup_err: None,
        residual_sup,
        residual_l2,
        h_used: None,
        eps_used: Some(sel.eps),
        wall_time,
        metadata,
    })
}
