use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use crate::error::Result;
use crate::grid::GridSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Kernel decomposition with stable differentiation.
    Deconv,
    /// Tikhonov regularization, parameter by the discrepancy principle.
    Tikhonov,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Deconv => "deconv",
            Method::Tikhonov => "tikhonov",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one reconstruction.
#[derive(Debug, Clone)]
pub struct DeconvReport {
    pub method: Method,
    pub solution: GridSignal,
    /// Relative ℓ₂ error against the exact solution, when known.
    pub rel_l2: Option<f64>,
    /// Sup-norm error against the exact solution, when known.
    pub sup_err: Option<f64>,
    /// `‖k ⋆ u − f_δ‖∞` on the solution grid.
    pub residual_sup: f64,
    /// `‖k ⋆ u − f_δ‖` in the grid-weighted ℓ₂ norm.
    pub residual_l2: f64,
    pub h_used: Option<f64>,
    pub eps_used: Option<f64>,
    pub wall_time: Duration,
    pub metadata: BTreeMap<String, String>,
}

impl DeconvReport {
    pub fn with_exact(mut self, exact: &GridSignal) -> Result<Self> {
        self.rel_l2 = Some(self.solution.rel_error_l2(exact)?);
        self.sup_err = Some(self.solution.sub(exact)?.sup_norm());
        Ok(self)
    }

    pub fn wall_ms(&self) -> f64 {
        self.wall_time.as_secs_f64() * 1e3
    }
}
