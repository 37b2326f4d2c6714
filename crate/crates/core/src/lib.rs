//! Stable solution of first-kind Volterra convolution equations
//! `∫₀ᵗ k(t−s) u(s) ds = f(t)` from noisy data.
//!
//! The kernel is split as `k = A(I + S)`: `A` is integration (smooth
//! kernels) or an Abel fractional integral (weakly singular kernels), and
//! `I + S` is a well-posed second-kind Volterra operator. `A` is inverted by
//! stable differentiation with step `h(δ) = (2δ/M₂)^{1/2}`, then `I + S` by
//! forward substitution. A Tikhonov baseline with a Morozov-selected
//! parameter is provided for comparison.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod quadrature;
pub mod regularize;
pub mod report;
pub mod tikhonov;
pub mod tri;
pub mod volterra;

pub use error::{DeconvError, Result};
pub use grid::{Grid, GridSignal, GridStyle};
pub use quadrature::{KernelSpec, ScalarFn};
pub use report::{DeconvReport, Method};
