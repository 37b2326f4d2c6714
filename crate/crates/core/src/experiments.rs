//! Built-in test problems, the seeded bounded-noise model, and the
//! comparison and step-sweep harnesses.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{DeconvError, Result};
use crate::grid::{fmt_f64, Grid, GridSignal};
use crate::quadrature::{forward_convolve, scalar_fn, KernelSpec, ScalarFn};
use crate::regularize::{FractionalOrder, RegConfig};
use crate::report::{DeconvReport, Method};
use crate::tikhonov::{tikhonov_deconvolve, TikhonovConfig};
use crate::volterra::{deconvolve, Regularization, DEFAULT_FINE_FACTOR};

/// Data samples per solution cell.
pub const DATA_REFINEMENT: usize = 4;
const GATE_CELLS: usize = 200;
const GATE_TOL: f64 = 1e-3;

/// A convolution equation with known solution and data.
#[derive(Clone)]
pub struct TestProblem {
    pub name: String,
    pub kernel: KernelSpec,
    pub u_exact: ScalarFn,
    pub f_exact: ScalarFn,
    pub f_prime: ScalarFn,
    pub t_end: f64,
    pub params: BTreeMap<String, f64>,
    /// Curvature bound used for the step rule when no step is given.
    pub default_m2: Option<f64>,
    pub default_h: Option<f64>,
}

impl std::fmt::Debug for TestProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestProblem").field("name", &self.name).field("params", &self.params).finish()
    }
}

impl TestProblem {
    /// `k = e^{at}`, `u = sin bt + cos bt` on `[0, 1]`.
    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        let s = a * a + b * b;
        if s == 0.0 {
            return Err(DeconvError::Config("a and b cannot both vanish".into()));
        }
        let p = Self {
            name: "exp".into(),
            kernel: KernelSpec::exponential(a),
            u_exact: scalar_fn(move |t| (b * t).sin() + (b * t).cos()),
            f_exact: scalar_fn(move |t| {
                ((b + a) * ((a * t).exp() - (b * t).cos()) + (b - a) * (b * t).sin()) / s
            }),
            f_prime: scalar_fn(move |t| {
                ((b + a) * (a * (a * t).exp() + b * (b * t).sin()) + (b - a) * b * (b * t).cos()) / s
            }),
            t_end: 1.0,
            params: BTreeMap::from([("a".into(), a), ("b".into(), b)]),
            default_m2: Some(12.7324),
            default_h: None,
        };
        p.check_consistency()?;
        Ok(p)
    }

    /// `exponential(1, 2π)`.
    pub fn exponential_default() -> Self {
        Self::exponential(1.0, 2.0 * PI).expect("built-in problem is consistent")
    }

    /// `k = t^{γ−1}/Γ(γ) + c₀ + c₁t + c₂t²`, `u = 1 − t²` on `[0, 1]`.
    pub fn abel_poly(gamma: f64, c: [f64; 3]) -> Result<Self> {
        let kernel = KernelSpec::abel_quadratic(gamma, c)?;
        let g1 = gamma_fn(1.0 + gamma);
        let g2 = gamma_fn(2.0 + gamma);
        let g3 = gamma_fn(3.0 + gamma);
        let gg = gamma_fn(gamma);
        // ∫₀ᵗ τ^p (t−τ)² dτ = 2 p! t^{p+3} / (p+3)!
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];
        let f_exact = scalar_fn(move |t| {
            let abel = t.powf(gamma) / g1 - 2.0 * t.powf(gamma + 2.0) / g3;
            let smooth: f64 = (0..3)
                .map(|p| {
                    let pf = p as f64;
                    c[p] * (t.powf(pf + 1.0) / (pf + 1.0) - 2.0 * fact[p] * t.powf(pf + 3.0) / fact[p + 3])
                })
                .sum();
            abel + smooth
        });
        let f_prime = scalar_fn(move |t| {
            let abel = t.powf(gamma - 1.0) / gg - 2.0 * t.powf(gamma + 1.0) / g2;
            let smooth: f64 = (0..3)
                .map(|p| c[p] * (t.powi(p as i32) - 2.0 * fact[p] * t.powi(p as i32 + 2) / fact[p + 2]))
                .sum();
            abel + smooth
        });
        let p = Self {
            name: "abel".into(),
            kernel,
            u_exact: scalar_fn(|t| 1.0 - t * t),
            f_exact,
            f_prime,
            t_end: 1.0,
            params: BTreeMap::from([
                ("gamma".into(), gamma),
                ("c0".into(), c[0]),
                ("c1".into(), c[1]),
                ("c2".into(), c[2]),
            ]),
            default_m2: None,
            default_h: Some(0.12),
        };
        p.check_consistency()?;
        Ok(p)
    }

    /// Weakly singular problem with `m(t) = t²`.
    pub fn abel_quadratic(gamma: f64) -> Result<Self> {
        Self::abel_poly(gamma, [0.0, 0.0, 1.0])
    }

    /// `"exp"` or `"abel"`; the latter needs `gamma`.
    pub fn by_name(name: &str, gamma: Option<f64>) -> Result<Self> {
        match (name, gamma) {
            ("exp", None) => Ok(Self::exponential_default()),
            ("exp", Some(_)) => Err(DeconvError::Config("problem 'exp' takes no gamma".into())),
            ("abel", Some(g)) => Self::abel_quadratic(g),
            ("abel", None) => Err(DeconvError::Config("problem 'abel' needs gamma".into())),
            _ => Err(DeconvError::Config(format!("unknown problem '{name}'"))),
        }
    }

    /// `k ⋆ u_exact` by quadrature against the closed-form `f` at 200 cells.
    pub fn check_consistency(&self) -> Result<()> {
        let grid = Grid::midpoint(self.t_end, GATE_CELLS)?;
        let u = self.sample_u(&grid);
        let f = forward_convolve(&self.kernel, &u, DEFAULT_FINE_FACTOR)?;
        let err = f.sub(&GridSignal::from_fn(grid, |t| (self.f_exact)(t)))?.sup_norm();
        if !(err <= GATE_TOL) {
            return Err(DeconvError::Config(format!(
                "problem '{}' fails the forward self-check: sup error {err:.3e}",
                self.name
            )));
        }
        Ok(())
    }

    pub fn sample_u(&self, grid: &Grid) -> GridSignal {
        GridSignal::from_fn(*grid, |t| (self.u_exact)(t))
    }

    pub fn sample_f(&self, grid: &Grid) -> GridSignal {
        GridSignal::from_fn(*grid, |t| (self.f_exact)(t))
    }

    pub fn solution_grid(&self, n: usize) -> Result<Grid> {
        Grid::midpoint(self.t_end, n)
    }

    /// Endpoint grid with `4n + 1` nodes.
    pub fn data_grid(&self, n: usize) -> Result<Grid> {
        Grid::endpoint(self.t_end, DATA_REFINEMENT * n)
    }
}

/// Sum of sinusoids rescaled to a fixed sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub seed: u64,
    pub n_components: usize,
    pub freq_range: (f64, f64),
    pub cap: f64,
}

impl NoiseSpec {
    pub fn new(seed: u64, cap: f64) -> Self {
        Self { seed, n_components: 5, freq_range: (2.0 * PI, 40.0 * PI), cap }
    }

    /// The perturbation `e` sampled on `grid`, with `max |e| = cap`.
    pub fn perturbation(&self, grid: &Grid) -> Result<GridSignal> {
        if !(self.cap >= 0.0 && self.cap.is_finite()) {
            return Err(DeconvError::Config(format!("noise cap must be >= 0, got {}", self.cap)));
        }
        let (w_lo, w_hi) = self.freq_range;
        if !(w_lo > 0.0 && w_hi >= w_lo) || self.n_components == 0 {
            return Err(DeconvError::Config("bad noise frequency range or component count".into()));
        }
        if self.cap == 0.0 {
            return Ok(GridSignal::zeros(*grid));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let comps: Vec<(f64, f64, f64)> = (0..self.n_components)
            .map(|_| {
                let amp = rng.random_range(0.2..=1.0);
                let freq = (w_lo.ln() + rng.random::<f64>() * (w_hi.ln() - w_lo.ln())).exp();
                let phase = rng.random_range(0.0..2.0 * PI);
                (amp, freq, phase)
            })
            .collect();
        let raw = GridSignal::from_fn(*grid, |t| comps.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum());
        let peak = raw.sup_norm();
        if !(peak > 0.0) {
            return Err(DeconvError::NonFinite("noise normalization"));
        }
        Ok(raw.scale(self.cap / peak))
    }
}

/// `f + e` with `e` from [`NoiseSpec::perturbation`].
pub fn make_noise(f: &GridSignal, spec: &NoiseSpec) -> Result<GridSignal> {
    f.add(&spec.perturbation(f.grid())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodSelection {
    Deconv,
    Tikhonov,
    #[default]
    Both,
}

impl MethodSelection {
    pub fn includes(&self, m: Method) -> bool {
        matches!(
            (self, m),
            (MethodSelection::Both, _)
                | (MethodSelection::Deconv, Method::Deconv)
                | (MethodSelection::Tikhonov, Method::Tikhonov)
        )
    }
}

/// Everything a single comparison run needs besides the problem and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub delta: f64,
    pub n: usize,
    /// Fixed step; wins over `m2`.
    pub h: Option<f64>,
    pub m2: Option<f64>,
    pub c_morozov: f64,
    pub order: FractionalOrder,
    pub methods: MethodSelection,
}

impl RunSettings {
    pub fn new(delta: f64, n: usize) -> Self {
        Self { delta, n, h: None, m2: None, c_morozov: 1.0, order: FractionalOrder::default(), methods: MethodSelection::Both }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_methods(mut self, methods: MethodSelection) -> Self {
        self.methods = methods;
        self
    }

    /// Step rule: explicit `h`, else `m2` (own or the problem's), else the
    /// problem's default step.
    pub fn reg_config(&self, problem: &TestProblem) -> Result<RegConfig> {
        if self.n < 4 {
            return Err(DeconvError::Config(format!("n must be >= 4, got {}", self.n)));
        }
        match (self.h, self.m2.or(problem.default_m2), problem.default_h) {
            (Some(h), _, _) => RegConfig::with_step(self.delta, h),
            (None, Some(m2), _) => RegConfig::new(self.delta, m2),
            (None, None, Some(h)) => RegConfig::with_step(self.delta, h),
            _ => Err(DeconvError::Config("no step and no M2 available".into())),
        }
    }

    pub fn tikhonov_config(&self) -> Result<TikhonovConfig> {
        let mut cfg = TikhonovConfig::new(self.delta)?;
        cfg.c_morozov = self.c_morozov;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Clean and noisy data on the problem's data grid.
pub fn problem_data(problem: &TestProblem, n: usize, noise: &NoiseSpec) -> Result<(GridSignal, GridSignal)> {
    let f = problem.sample_f(&problem.data_grid(n)?);
    let f_delta = make_noise(&f, noise)?;
    Ok((f, f_delta))
}

pub fn run_deconv(problem: &TestProblem, settings: &RunSettings, f_delta: &GridSignal) -> Result<DeconvReport> {
    let grid = problem.solution_grid(settings.n)?;
    let reg = Regularization::Stable { cfg: settings.reg_config(problem)?, order: settings.order };
    deconvolve(&problem.kernel, f_delta, &reg, &grid)?.with_exact(&problem.sample_u(&grid))
}

pub fn run_tikhonov(problem: &TestProblem, settings: &RunSettings, f_delta: &GridSignal) -> Result<DeconvReport> {
    let grid = problem.solution_grid(settings.n)?;
    tikhonov_deconvolve(&problem.kernel, f_delta, &settings.tikhonov_config()?, &grid)?
        .with_exact(&problem.sample_u(&grid))
}

/// Paired outcomes for one seed; `None` when the method was not requested.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub seed: u64,
    pub f_delta: GridSignal,
    pub deconv: Option<Result<DeconvReport>>,
    pub tikhonov: Option<Result<DeconvReport>>,
}

impl ComparisonRow {
    pub fn get(&self, m: Method) -> Option<&Result<DeconvReport>> {
        match m {
            Method::Deconv => self.deconv.as_ref(),
            Method::Tikhonov => self.tikhonov.as_ref(),
        }
    }

    pub fn failures(&self) -> Vec<(Method, &DeconvError)> {
        [Method::Deconv, Method::Tikhonov]
            .into_iter()
            .filter_map(|m| match self.get(m) {
                Some(Err(e)) => Some((m, e)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, min, max, count: values.len() })
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub problem: String,
    pub settings: RunSettings,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn reports(&self, m: Method) -> impl Iterator<Item = (u64, &DeconvReport)> + '_ {
        self.rows.iter().filter_map(move |r| match r.get(m) {
            Some(Ok(rep)) => Some((r.seed, rep)),
            _ => None,
        })
    }

    /// `rel_l2` statistics over the successful runs of `m`.
    pub fn aggregate(&self, m: Method) -> Option<Aggregate> {
        let v: Vec<f64> = self.reports(m).filter_map(|(_, r)| r.rel_l2).collect();
        Aggregate::of(&v)
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.failures().is_empty())
    }
}

/// Both methods on identical seeded data, seeds in parallel, rows in seed
/// order.
pub fn run_comparison(problem: &TestProblem, settings: &RunSettings, seeds: &[u64]) -> Result<ComparisonTable> {
    problem.solution_grid(settings.n)?;
    let rows = seeds
        .par_iter()
        .map(|&seed| -> Result<ComparisonRow> {
            let (_, f_delta) = problem_data(problem, settings.n, &NoiseSpec::new(seed, settings.delta))?;
            let deconv = settings
                .methods
                .includes(Method::Deconv)
                .then(|| run_deconv(problem, settings, &f_delta));
            let tikhonov = settings
                .methods
                .includes(Method::Tikhonov)
                .then(|| run_tikhonov(problem, settings, &f_delta));
            Ok(ComparisonRow { seed, f_delta, deconv, tikhonov })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonTable { problem: problem.name.clone(), settings: *settings, rows })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub h: f64,
    pub report: Result<DeconvReport>,
}

/// One deconvolution per step on a fixed noisy data set.
pub fn sweep_h(problem: &TestProblem, settings: &RunSettings, h_values: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    let (_, f_delta) = problem_data(problem, settings.n, &NoiseSpec::new(seed, settings.delta))?;
    Ok(h_values
        .par_iter()
        .map(|&h| SweepRow { h, report: run_deconv(problem, &settings.with_h(h), &f_delta) })
        .collect())
}

pub const REPORT_CSV_HEADER: &str = "method,seed,n,h,eps,rel_l2,sup_err,residual_l2,wall_ms";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One `REPORT_CSV_HEADER` row.
pub fn report_csv_row(r: &DeconvReport, seed: u64, n: usize) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.method,
        seed,
        n,
        opt(r.h_used),
        opt(r.eps_used),
        opt(r.rel_l2),
        opt(r.sup_err),
        fmt_f64(r.residual_l2),
        fmt_f64(r.wall_ms()),
    )
}
