//! Discretized convolution `∫₀ᵗ k(t−s) u(s) ds` on a uniform grid.
//!
//! Every weight table here integrates a kernel against the piecewise-linear
//! interpolant of the node values (constant in the half-cell margins of a
//! midpoint grid). Per cell `[a, b]` only two moments of the kernel are
//! needed: `∫ ω` and `∫ ω · (s − a)/(b − a)`. Smooth kernels get those from
//! the corrected trapezoid rule; the power weight `(t − s)^{−α}` gets them in
//! closed form (product integration).

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{DeconvError, Result};
use crate::grid::{Grid, GridSignal};
use crate::tri::LowerTriangular;

/// Shared real function of one variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn scalar_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Convolution kernel of a first-kind Volterra equation.
#[derive(Clone)]
pub enum KernelSpec {
    /// `k ∈ C¹` with `k(0) ≠ 0`.
    Smooth { k: ScalarFn, k_prime: ScalarFn, k0: f64 },
    /// `k(t) = t^{γ−1}/Γ(γ) + m(t)` with `0 < γ < 1` and `m ∈ C¹`.
    Singular { gamma: f64, m: ScalarFn, m_prime: ScalarFn, m0: f64 },
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Smooth { k0, .. } => write!(f, "Smooth {{ k0: {k0} }}"),
            KernelSpec::Singular { gamma, m0, .. } => {
                write!(f, "Singular {{ gamma: {gamma}, m0: {m0} }}")
            }
        }
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(DeconvError::Config(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

impl KernelSpec {
    pub fn smooth(k: ScalarFn, k_prime: ScalarFn) -> Result<Self> {
        let k0 = k(0.0);
        if !k0.is_finite() || k0 == 0.0 {
            return Err(DeconvError::Config(format!("smooth kernel needs k(0) != 0, got {k0}")));
        }
        Ok(KernelSpec::Smooth { k, k_prime, k0 })
    }

    pub fn singular(gamma: f64, m: ScalarFn, m_prime: ScalarFn) -> Result<Self> {
        check_gamma(gamma)?;
        let m0 = m(0.0);
        Ok(KernelSpec::Singular { gamma, m, m_prime, m0 })
    }

    /// `k(t) = exp(a t)`.
    pub fn exponential(a: f64) -> Self {
        KernelSpec::Smooth {
            k: scalar_fn(move |t| (a * t).exp()),
            k_prime: scalar_fn(move |t| a * (a * t).exp()),
            k0: 1.0,
        }
    }

    /// Abel kernel plus the quadratic `m(t) = c0 + c1 t + c2 t²`.
    pub fn abel_quadratic(gamma: f64, c: [f64; 3]) -> Result<Self> {
        Self::singular(
            gamma,
            scalar_fn(move |t| c[0] + c[1] * t + c[2] * t * t),
            scalar_fn(move |t| c[1] + 2.0 * c[2] * t),
        )
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            KernelSpec::Singular { gamma, .. } => Some(*gamma),
            KernelSpec::Smooth { .. } => None,
        }
    }

    /// Kernel value at `t > 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            KernelSpec::Smooth { k, .. } => k(t),
            KernelSpec::Singular { gamma, m, .. } => t.powf(gamma - 1.0) / gamma_fn(*gamma) + m(t),
        }
    }

    /// Rescale a smooth kernel to `k(0) = 1`; returns the kernel and the
    /// factor `k0` it was divided by. Singular kernels are returned as is.
    pub fn normalized(&self) -> (KernelSpec, f64) {
        match self {
            KernelSpec::Smooth { k, k_prime, k0 } if *k0 != 1.0 => {
                let (k, kp, c) = (k.clone(), k_prime.clone(), *k0);
                (
                    KernelSpec::Smooth {
                        k: scalar_fn(move |t| k(t) / c),
                        k_prime: scalar_fn(move |t| kp(t) / c),
                        k0: 1.0,
                    },
                    c,
                )
            }
            other => (other.clone(), 1.0),
        }
    }
}

/// Trapezoid rule on `n` panels plus the endpoint-derivative correction
/// `(h²/12)(g′(a) − g′(b))`. Exact for cubics.
pub fn corrected_trapezoid(
    g: impl Fn(f64) -> f64,
    g_prime_ends: (f64, f64),
    a: f64,
    b: f64,
    n: usize,
) -> f64 {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let interior: f64 = (1..n).map(|i| g(a + i as f64 * h)).sum();
    let trap = h * (0.5 * (g(a) + g(b)) + interior);
    trap + h * h / 12.0 * (g_prime_ends.0 - g_prime_ends.1)
}

/// Lower-triangular quadrature table on a grid: row `i` approximates
/// `∫₀^{t_i} ω(t_i − s) v(s) ds` as `Σ_j w[i][j] v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    grid: Grid,
    weights: LowerTriangular,
}

impl ConvWeights {
    pub fn from_parts(grid: Grid, weights: LowerTriangular) -> Result<Self> {
        if weights.dim() != grid.len() {
            return Err(DeconvError::Length { expected: grid.len(), got: weights.dim() });
        }
        Ok(Self { grid, weights })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &LowerTriangular {
        &self.weights
    }

    pub fn into_matrix(self) -> LowerTriangular {
        self.weights
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.weights.row_sum(i)
    }

    pub fn apply(&self, v: &GridSignal) -> Result<GridSignal> {
        if !v.grid().same_as(&self.grid) {
            return Err(DeconvError::GridMismatch);
        }
        GridSignal::new(self.grid, self.weights.apply(v.values()))
    }

    /// Weights for a smooth convolution kernel `ω` (argument `t − s`).
    ///
    /// Cell moments use the corrected trapezoid rule on `sub` panels per
    /// cell. Without an analytic derivative the end corrections fall back to
    /// a central difference of `ω`.
    pub fn smooth(
        grid: &Grid,
        kernel: &dyn Fn(f64) -> f64,
        kernel_prime: Option<&dyn Fn(f64) -> f64>,
        sub: usize,
    ) -> Self {
        let dk = |tau: f64| match kernel_prime {
            Some(kp) => kp(tau),
            None => {
                let eta = 1e-6 * tau.abs().max(1.0);
                (kernel(tau + eta) - kernel(tau - eta)) / (2.0 * eta)
            }
        };
        let moments = |lo: f64, hi: f64| -> (f64, f64) {
            let width = hi - lo;
            let m0 = corrected_trapezoid(kernel, (dk(lo), dk(hi)), lo, hi, sub);
            let g1 = |tau: f64| kernel(tau) * (hi - tau) / width;
            let g1p = |tau: f64| (dk(tau) * (hi - tau) - kernel(tau)) / width;
            let m1 = corrected_trapezoid(g1, (g1p(lo), g1p(hi)), lo, hi, sub);
            (m0, m1)
        };
        build_rows(grid, moments)
    }

    /// Product-integration weights for `(t − s)^{−α}`, `0 ≤ α < 1`, exact for
    /// piecewise-linear integrands.
    pub fn power(alpha: f64, grid: &Grid) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(DeconvError::Config(format!(
                "power weight exponent must lie in [0, 1), got {alpha}"
            )));
        }
        let beta = 1.0 - alpha;
        let moments = |lo: f64, hi: f64| -> (f64, f64) {
            let lo = lo.max(0.0);
            let i0 = (hi.powf(beta) - lo.powf(beta)) / beta;
            let i1 = (hi.powf(beta + 1.0) - lo.powf(beta + 1.0)) / (beta + 1.0);
            (i0, (hi * i0 - i1) / (hi - lo))
        };
        Ok(build_rows(grid, moments))
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.weights.scale(c);
        self
    }

    pub fn plus(mut self, other: &ConvWeights) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(DeconvError::GridMismatch);
        }
        self.weights.add_assign(&other.weights);
        Ok(self)
    }
}

/// Assemble the weight table from kernel moments over `τ = t − s`.
///
/// `moments(lo, hi)` returns `(∫ ω(τ) dτ, ∫ ω(τ) (hi − τ)/(hi − lo) dτ)` over
/// `[lo, hi]`; the second is the moment against the hat rising towards the
/// cell's right node. On a uniform grid the cell `[x_j, x_{j+1}]` seen from
/// `t_i` depends on `i − j` alone, so only `O(n)` moments are evaluated.
fn build_rows(grid: &Grid, moments: impl Fn(f64, f64) -> (f64, f64)) -> ConvWeights {
    let n = grid.len();
    let h = grid.step();
    let cell: Vec<(f64, f64)> =
        (1..n).map(|k| moments((k - 1) as f64 * h, k as f64 * h)).collect();
    let margin = grid.node(0);
    let mut weights = LowerTriangular::zeros(n);
    for i in 0..n {
        if margin > 0.0 {
            // [0, x₀] carries the constant v₀; τ ∈ [t_i − x₀, t_i]
            let t = grid.node(i);
            *weights.get_mut(i, 0) += moments(t - margin, t).0;
        }
        for j in 0..i {
            let (m0, m1) = cell[i - j - 1];
            *weights.get_mut(i, j) += m0 - m1;
            *weights.get_mut(i, j + 1) += m1;
        }
    }
    ConvWeights { grid: *grid, weights }
}

/// Product weights for `∫₀^{t_i} v(s) (t_i − s)^{−γ} ds`.
pub fn abel_weights(gamma: f64, grid: &Grid) -> Result<ConvWeights> {
    check_gamma(gamma)?;
    ConvWeights::power(gamma, grid)
}

/// Weights of the full forward operator `u ↦ k ⋆ u` on `grid`; smooth parts
/// are integrated with `fine_factor` corrected-trapezoid panels per cell.
pub fn forward_weights(k: &KernelSpec, grid: &Grid, fine_factor: usize) -> Result<ConvWeights> {
    match k {
        KernelSpec::Smooth { k, k_prime, .. } => {
            Ok(ConvWeights::smooth(grid, &**k, Some(&**k_prime), fine_factor))
        }
        KernelSpec::Singular { gamma, m, m_prime, .. } => {
            check_gamma(*gamma)?;
            let abel = ConvWeights::power(1.0 - gamma, grid)?.scaled(1.0 / gamma_fn(*gamma));
            let smooth = ConvWeights::smooth(grid, &**m, Some(&**m_prime), fine_factor);
            abel.plus(&smooth)
        }
    }
}

/// `k ⋆ u` sampled on `u`'s grid.
pub fn forward_convolve(k: &KernelSpec, u: &GridSignal, fine_factor: usize) -> Result<GridSignal> {
    if fine_factor == 0 {
        return Err(DeconvError::Config("fine_factor must be positive".into()));
    }
    forward_weights(k, u.grid(), fine_factor)?.apply(u)
}

const GAUSS8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss–Legendre on `[0, 1]` with `panels` panels.
fn gauss_unit(f: impl Fn(f64) -> f64, panels: usize) -> f64 {
    let width = 1.0 / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for (x, w) in GAUSS8_X.iter().zip(GAUSS8_W) {
            acc += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    acc
}

/// `∫₀ᵗ g(s) (t − s)^{−γ} ds` for a callable `g`, which may itself carry an
/// integrable `s^{γ−1}` singularity at the origin.
///
/// The interval is split at `t/2`; graded substitutions `s ∝ x^{1/γ}` and
/// `t − s ∝ y^{1/(1−γ)}` absorb both endpoint singularities before
/// Gauss–Legendre is applied.
pub fn abel_integral_fn(g: &dyn Fn(f64) -> f64, gamma: f64, t: f64, panels: usize) -> Result<f64> {
    check_gamma(gamma)?;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let panels = panels.max(1);
    let c = 0.5 * t;
    let p = 1.0 / gamma;
    let q = 1.0 / (1.0 - gamma);
    let left = gauss_unit(
        |x| {
            let s = c * x.powf(p);
            g(s) * (t - s).powf(-gamma) * c * p * x.powf(p - 1.0)
        },
        panels,
    );
    let right = gauss_unit(|y| g(t - c * y.powf(q)), panels) * c.powf(1.0 - gamma) * q;
    Ok(left + right)
}
