//! The well-posed second stage: `(I + S) u = g` and the full
//! deconvolution pipeline `u_δ = (I + S)⁻¹ R(δ) f_δ`.

use std::collections::BTreeMap;
use std::time::Instant;

use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{DeconvError, Result};
use crate::grid::{Grid, GridSignal};
use crate::quadrature::{abel_integral_fn, abel_weights, check_gamma, forward_convolve, ConvWeights, KernelSpec, ScalarFn};
use crate::regularize::{boundary_layer_nodes, fractional_regularizer, stable_derivative, FractionalOrder, RegConfig};
use crate::report::{DeconvReport, Method};
use crate::tri::LowerTriangular;

/// Diagonal entries of `I + S` below this trigger a conditioning warning.
pub const DIAGONAL_WARNING: f64 = 0.5;
const SINGULAR_PIVOT: f64 = 1e-10;
/// Corrected-trapezoid panels per cell for kernel moments.
pub const DEFAULT_FINE_FACTOR: usize = 4;
const EXACT_PATH_PANELS: usize = 8;

/// Discretized `I + S` on a grid, `S` strictly causal.
#[derive(Debug, Clone)]
pub struct SecondKindSystem {
    grid: Grid,
    s_matrix: LowerTriangular,
}

impl SecondKindSystem {
    pub fn new(grid: Grid, s_matrix: LowerTriangular) -> Result<Self> {
        if s_matrix.dim() != grid.len() {
            return Err(DeconvError::Length { expected: grid.len(), got: s_matrix.dim() });
        }
        Ok(Self { grid, s_matrix })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn s_matrix(&self) -> &LowerTriangular {
        &self.s_matrix
    }

    /// Smallest diagonal entry of `I + S`.
    pub fn min_diagonal(&self) -> f64 {
        self.s_matrix.diagonal().into_iter().map(|d| 1.0 + d).fold(f64::INFINITY, f64::min)
    }

    pub fn conditioning_warning(&self) -> Option<String> {
        let d = self.min_diagonal();
        (d < DIAGONAL_WARNING).then(|| format!("min diagonal of I+S is {d:.3e} (< {DIAGONAL_WARNING})"))
    }

    /// `(I + S) u`.
    pub fn apply(&self, u: &GridSignal) -> Result<GridSignal> {
        if !u.grid().same_as(&self.grid) {
            return Err(DeconvError::GridMismatch);
        }
        let su = self.s_matrix.apply(u.values());
        GridSignal::new(self.grid, u.values().iter().zip(su).map(|(a, b)| a + b).collect())
    }
}

/// `S u = ∫₀ᵗ k′(t−s) u(s) ds` for a smooth kernel, normalized to `k(0) = 1`.
pub fn build_smooth_s(k: &KernelSpec, grid: &Grid, fine_factor: usize) -> Result<SecondKindSystem> {
    let (k, _) = k.normalized();
    let KernelSpec::Smooth { k_prime, .. } = &k else {
        return Err(DeconvError::Config("build_smooth_s needs a smooth kernel".into()));
    };
    let w = ConvWeights::smooth(grid, &**k_prime, None, fine_factor);
    SecondKindSystem::new(*grid, w.into_matrix())
}

/// `S u = (1/Γ(1−γ)) ∫₀ᵗ [m(0) u(s) + ∫₀ˢ m′(s−p) u(p) dp] (t−s)^{−γ} ds`.
///
/// Built as the product of the Abel product-integration table with the
/// inner smooth convolution table, both on `grid`.
pub fn build_singular_s(k: &KernelSpec, grid: &Grid, fine_factor: usize) -> Result<SecondKindSystem> {
    let KernelSpec::Singular { gamma, m_prime, m0, .. } = k else {
        return Err(DeconvError::Config("build_singular_s needs a singular kernel".into()));
    };
    check_gamma(*gamma)?;
    let mut inner = ConvWeights::smooth(grid, &**m_prime, None, fine_factor).into_matrix();
    inner.add_diagonal(*m0);
    let mut s = abel_weights(*gamma, grid)?.matrix().matmul(&inner);
    s.scale(1.0 / gamma_fn(1.0 - gamma));
    SecondKindSystem::new(*grid, s)
}

pub fn build_s(k: &KernelSpec, grid: &Grid, fine_factor: usize) -> Result<SecondKindSystem> {
    match k {
        KernelSpec::Smooth { .. } => build_smooth_s(k, grid, fine_factor),
        KernelSpec::Singular { .. } => build_singular_s(k, grid, fine_factor),
    }
}

/// Forward substitution on `(I + S) u = g`.
pub fn solve_second_kind(sys: &SecondKindSystem, g: &GridSignal) -> Result<GridSignal> {
    if !g.grid().same_as(&sys.grid) {
        return Err(DeconvError::GridMismatch);
    }
    let rhs = g.values();
    let mut u = Vec::with_capacity(rhs.len());
    for (i, &gi) in rhs.iter().enumerate() {
        let row = sys.s_matrix.row(i);
        let pivot = 1.0 + row[i];
        if !(pivot.abs() >= SINGULAR_PIVOT) {
            return Err(DeconvError::SingularSystem { row: i, value: pivot });
        }
        let acc: f64 = row[..i].iter().zip(&u).map(|(s, v)| s * v).sum();
        u.push((gi - acc) / pivot);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(DeconvError::NonFinite("second-kind solve"));
    }
    GridSignal::new(sys.grid, u)
}

/// How `A⁻¹` is applied to the data.
#[derive(Clone)]
pub enum Regularization {
    /// Stable differentiation with the given step rule.
    Stable { cfg: RegConfig, order: FractionalOrder },
    /// Noise-free oracle path: the exact `f′` is supplied.
    ExactDerivative(ScalarFn),
}

impl Regularization {
    pub fn stable(cfg: RegConfig) -> Self {
        Regularization::Stable { cfg, order: FractionalOrder::default() }
    }
}

impl std::fmt::Debug for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regularization::Stable { cfg, order } => {
                f.debug_struct("Stable").field("cfg", cfg).field("order", order).finish()
            }
            Regularization::ExactDerivative(_) => f.write_str("ExactDerivative"),
        }
    }
}

/// Solve `k ⋆ u = f_δ` on `grid` by `u_δ = (I + S)⁻¹ R(δ) f_δ`.
///
/// `f_delta` may live on any grid over the same interval (typically a finer
/// endpoint grid). The report's residual compares `k ⋆ u_δ` with `f_δ` on
/// the solution grid; timing covers regularization, assembly and solve.
pub fn deconvolve(
    k: &KernelSpec,
    f_delta: &GridSignal,
    reg: &Regularization,
    grid: &Grid,
) -> Result<DeconvReport> {
    if (f_delta.grid().t_end() - grid.t_end()).abs() > 1e-12 * grid.t_end() {
        return Err(DeconvError::GridMismatch);
    }
    let mut metadata = BTreeMap::new();
    let start = Instant::now();

    let (kn, scale) = k.normalized();
    let data = if scale != 1.0 { f_delta.scale(1.0 / scale) } else { f_delta.clone() };
    if scale != 1.0 {
        metadata.insert("kernel_scale".to_string(), format!("{scale}"));
    }

    let (g, h_used) = match (reg, &kn) {
        (Regularization::Stable { cfg, order }, _) => {
            // the step is invariant under rescaling both data and M₂ by k(0)
            let h = cfg.step()?;
            metadata.insert("boundary_treatment".into(), "constant-extension".into());
            metadata.insert("boundary_layer_nodes".into(), boundary_layer_nodes(grid, h).to_string());
            if let Some(m2) = cfg.implied_m2() {
                metadata.insert("implied_m2".into(), format!("{m2}"));
            }
            let cfg = cfg.with_delta(cfg.delta / scale.abs()).override_step(h)?;
            let g = match kn.gamma() {
                None => stable_derivative(&data, &cfg, grid)?,
                Some(gamma) => {
                    metadata.insert("fractional_order".into(), order.as_str().into());
                    fractional_regularizer(&data, gamma, &cfg, grid, *order)?
                }
            };
            (g, Some(h))
        }
        (Regularization::ExactDerivative(fp), KernelSpec::Smooth { .. }) => {
            (GridSignal::from_fn(*grid, |t| fp(t) / scale), None)
        }
        (Regularization::ExactDerivative(fp), KernelSpec::Singular { gamma, .. }) => {
            let c = 1.0 / gamma_fn(1.0 - gamma);
            let values = grid
                .nodes()
                .into_iter()
                .map(|t| abel_integral_fn(&|s| fp(s), *gamma, t, EXACT_PATH_PANELS).map(|v| c * v))
                .collect::<Result<Vec<_>>>()?;
            (GridSignal::new(*grid, values)?, None)
        }
    };
    if matches!(reg, Regularization::ExactDerivative(_)) {
        metadata.insert("regularization".into(), "exact-derivative".into());
    }

    let sys = build_s(&kn, grid, DEFAULT_FINE_FACTOR)?;
    if let Some(w) = sys.conditioning_warning() {
        metadata.insert("conditioning_warning".into(), w);
    }
    if kn.gamma().is_some() {
        metadata.insert("singular_diagonal".into(), "product-moment".into());
    }
    let solution = solve_second_kind(&sys, &g)?;
    let wall_time = start.elapsed();

    let (residual_sup, residual_l2) = residual(k, &solution, f_delta)?;
    Ok(DeconvReport {
        method: Method::Deconv,
        solution,
        rel_l2: None,
        sup_err: None,
        residual_sup,
        residual_l2,
        h_used,
        eps_used: None,
        wall_time,
        metadata,
    })
}

/// `(‖k ⋆ u − f_δ‖∞, ‖k ⋆ u − f_δ‖_w)` on `u`'s grid.
pub fn residual(k: &KernelSpec, u: &GridSignal, f_delta: &GridSignal) -> Result<(f64, f64)> {
    let fitted = forward_convolve(k, u, DEFAULT_FINE_FACTOR)?;
    let diff = fitted.sub(&f_delta.resample(u.grid())?)?;
    Ok((diff.sup_norm(), diff.weighted_l2_norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::scalar_fn;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn exp_f(t: f64, a: f64, b: f64) -> f64 {
        ((b + a) * ((a * t).exp() - (b * t).cos()) + (b - a) * (b * t).sin()) / (a * a + b * b)
    }

    fn exp_f_prime(t: f64, a: f64, b: f64) -> f64 {
        ((b + a) * (a * (a * t).exp() + b * (b * t).sin()) + (b - a) * b * (b * t).cos()) / (a * a + b * b)
    }

    fn inverse_inf_norm(sys: &SecondKindSystem) -> f64 {
        let n = sys.grid().len();
        let mut rows = vec![0.0; n];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = solve_second_kind(sys, &GridSignal::new(*sys.grid(), e).unwrap()).unwrap();
            for (r, v) in rows.iter_mut().zip(col.values()) {
                *r += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    #[test]
    fn constant_kernel_gives_identity() {
        let grid = Grid::midpoint(1.0, 12).unwrap();
        let k = KernelSpec::smooth(scalar_fn(|_| 1.0), scalar_fn(|_| 0.0)).unwrap();
        let sys = build_smooth_s(&k, &grid, 4).unwrap();
        assert_eq!(sys.s_matrix().max_abs(), 0.0);
        let g = GridSignal::from_fn(grid, |t| t * t - 3.0);
        assert_eq!(solve_second_kind(&sys, &g).unwrap(), g);
    }

    #[test]
    fn exponential_s_rows() {
        let a = 1.0;
        let grid = Grid::midpoint(1.0, 200).unwrap();
        let sys = build_smooth_s(&KernelSpec::exponential(a), &grid, 4).unwrap();
        let ones = GridSignal::from_fn(grid, |_| 1.0);
        let su = sys.s_matrix().apply(ones.values());
        for (i, t) in grid.nodes().into_iter().enumerate() {
            let exact = (a * t).exp() - 1.0;
            assert!((su[i] - exact).abs() < 1e-4);
            assert!((sys.s_matrix().row_sum(i) - exact).abs() < 1e-6);
        }
        assert!(sys.conditioning_warning().is_none());
    }

    #[test]
    fn singular_s_closed_form() {
        let grid = Grid::midpoint(1.0, 200).unwrap();
        let zero = KernelSpec::abel_quadratic(0.5, [0.0; 3]).unwrap();
        assert_eq!(build_singular_s(&zero, &grid, 4).unwrap().s_matrix().max_abs(), 0.0);

        let k = KernelSpec::abel_quadratic(0.5, [0.0, 0.0, 1.0]).unwrap();
        let sys = build_singular_s(&k, &grid, 4).unwrap();
        let su = sys.s_matrix().apply(&vec![1.0; 200]);
        for (i, t) in grid.nodes().into_iter().enumerate() {
            let exact = 16.0 / 15.0 * t.powf(2.5) / PI.sqrt();
            assert!((su[i] - exact).abs() < 1e-4, "t {t}: {} vs {exact}", su[i]);
        }
    }

    #[test]
    fn gamma_tenth_quadratic_kernel_is_well_conditioned() {
        for n in [10, 200] {
            let grid = Grid::midpoint(1.0, n).unwrap();
            let k = KernelSpec::abel_quadratic(0.1, [0.0, 0.0, 1.0]).unwrap();
            let sys = build_singular_s(&k, &grid, 4).unwrap();
            assert!(sys.conditioning_warning().is_none());
        }
    }

    #[test]
    fn wrong_variant_is_config_error() {
        let grid = Grid::midpoint(1.0, 4).unwrap();
        let abel = KernelSpec::abel_quadratic(0.5, [0.0; 3]).unwrap();
        assert!(matches!(build_smooth_s(&abel, &grid, 4), Err(DeconvError::Config(_))));
        assert!(matches!(build_singular_s(&KernelSpec::exponential(1.0), &grid, 4), Err(DeconvError::Config(_))));
    }

    #[test]
    fn singular_pivot_detected() {
        let grid = Grid::midpoint(1.0, 3).unwrap();
        let mut s = LowerTriangular::zeros(3);
        *s.get_mut(1, 1) = -1.0;
        let sys = SecondKindSystem::new(grid, s).unwrap();
        let g = GridSignal::from_fn(grid, |_| 1.0);
        assert!(matches!(solve_second_kind(&sys, &g), Err(DeconvError::SingularSystem { row: 1, .. })));
        assert!(sys.conditioning_warning().is_some());
    }

    #[test]
    fn forward_substitution_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 20;
        let grid = Grid::midpoint(1.0, n).unwrap();
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..=i).map(|_| rng.random_range(-0.1..0.1)).collect()).collect();
            let s = LowerTriangular::from_rows(rows).unwrap();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dense = DMatrix::from_fn(n, n, |i, j| s.get(i, j) + if i == j { 1.0 } else { 0.0 });
            let oracle = dense.lu().solve(&DVector::from_vec(g.clone())).unwrap();
            let sys = SecondKindSystem::new(grid, s).unwrap();
            let u = solve_second_kind(&sys, &GridSignal::new(grid, g).unwrap()).unwrap();
            let diff = (DVector::from_vec(u.values().to_vec()) - &oracle).norm();
            assert!(diff <= 1e-12 * oracle.norm());
        }
    }

    #[test]
    fn second_stage_is_stable() {
        let grid = Grid::midpoint(1.0, 200).unwrap();
        let smooth = build_s(&KernelSpec::exponential(1.0), &grid, 4).unwrap();
        let singular = build_s(&KernelSpec::abel_quadratic(0.1, [0.0, 0.0, 1.0]).unwrap(), &grid, 4).unwrap();
        for sys in [smooth, singular] {
            let c = inverse_inf_norm(&sys);
            assert!(c <= 10.0, "‖(I+S)⁻¹‖ = {c}");
            // a sup-norm perturbation ε of g moves u by at most C ε
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let g = GridSignal::from_fn(grid, |t| t.cos());
            let eps = 1e-3;
            let dg = GridSignal::from_fn(grid, |_| eps * rng.random_range(-1.0..1.0));
            let u0 = solve_second_kind(&sys, &g).unwrap();
            let u1 = solve_second_kind(&sys, &g.add(&dg).unwrap()).unwrap();
            assert!(u1.sub(&u0).unwrap().sup_norm() <= c * dg.sup_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn noiseless_exact_derivative_recovers_solution() {
        let (a, b) = (1.0, 2.0 * PI);
        let grid = Grid::midpoint(1.0, 200).unwrap();
        let data = GridSignal::from_fn(Grid::endpoint(1.0, 800).unwrap(), |t| exp_f(t, a, b));
        let reg = Regularization::ExactDerivative(scalar_fn(move |t| exp_f_prime(t, a, b)));
        let report = deconvolve(&KernelSpec::exponential(a), &data, &reg, &grid).unwrap();
        let exact = GridSignal::from_fn(grid, |t| (b * t).sin() + (b * t).cos());
        let report = report.with_exact(&exact).unwrap();
        assert!(report.rel_l2.unwrap() <= 2e-3, "{:?}", report.rel_l2);
        assert!(report.residual_sup < 1e-3);
    }

    #[test]
    fn kernel_scaling_is_transparent() {
        // k = 2 e^{t}: same solution as k = e^{t} with data doubled
        let grid = Grid::midpoint(1.0, 50).unwrap();
        let data = GridSignal::from_fn(Grid::endpoint(1.0, 200).unwrap(), |t| exp_f(t, 1.0, 2.0 * PI));
        let cfg = RegConfig::with_step(0.0, 0.1).unwrap();
        let k1 = KernelSpec::exponential(1.0);
        let k2 = KernelSpec::smooth(scalar_fn(|t| 2.0 * t.exp()), scalar_fn(|t| 2.0 * t.exp())).unwrap();
        let r1 = deconvolve(&k1, &data, &Regularization::stable(cfg), &grid).unwrap();
        let r2 = deconvolve(&k2, &data.scale(2.0), &Regularization::stable(cfg), &grid).unwrap();
        for (x, y) in r1.solution.values().iter().zip(r2.solution.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(r2.metadata.get("kernel_scale").map(String::as_str), Some("2"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn triangular_round_trip(u in proptest::collection::vec(-2.0..2.0f64, 16), singular in any::<bool>()) {
                let grid = Grid::midpoint(1.0, 16).unwrap();
                let k = if singular {
                    KernelSpec::abel_quadratic(0.5, [0.3, 0.0, 1.0]).unwrap()
                } else {
                    KernelSpec::exponential(1.0)
                };
                let sys = build_s(&k, &grid, 4).unwrap();
                let u = GridSignal::new(grid, u).unwrap();
                let back = solve_second_kind(&sys, &sys.apply(&u).unwrap()).unwrap();
                for (x, y) in back.values().iter().zip(u.values()) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
                }
            }
        }
    }
}
