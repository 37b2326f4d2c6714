//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use deconv_core::experiments::{
    problem_data, run_comparison, sweep_h, ComparisonTable, MethodSelection, NoiseSpec, RunSettings, TestProblem,
};
use deconv_core::regularize::{stable_derivative, RegConfig};
use deconv_core::tikhonov::{morozov_select, TikhonovConfig, TikhonovOperator};
use deconv_core::tri::LowerTriangular;
use deconv_core::volterra::{deconvolve, solve_second_kind, Regularization, SecondKindSystem};
use deconv_core::{Grid, GridSignal, Method};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
const DELTA: f64 = 0.1;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn mean(table: &ComparisonTable, m: Method) -> f64 {
    table.aggregate(m).map_or(f64::NAN, |a| a.mean)
}

fn median_seed(errors: &[(u64, f64)]) -> u64 {
    let mut v = errors.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v[(v.len() - 1) / 2].0
}

fn sweep_errors(problem: &TestProblem, n: usize, hs: &[f64], seed: u64) -> Vec<f64> {
    sweep_h(problem, &RunSettings::new(DELTA, n), hs, seed)
        .unwrap()
        .into_iter()
        .map(|r| r.report.ok().and_then(|r| r.rel_l2).unwrap_or(f64::INFINITY))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn ordering(tables: &[(usize, ComparisonTable)], elapsed: f64) -> Outcome {
    let mut ok = elapsed < 10.0;
    let mut parts = Vec::new();
    for (n, t) in tables {
        let (d, k) = (mean(t, Method::Deconv), mean(t, Method::Tikhonov));
        ok &= d < k && t.all_ok();
        if *n == 10 {
            ok &= (0.15..=0.40).contains(&d) && (0.30..=0.75).contains(&k);
        }
        parts.push(format!("n={n}: deconv {d:.3} vs tikhonov {k:.3}"));
    }
    outcome(1, "method ordering", ok, format!("{}; {elapsed:.2} s", parts.join(", ")))
}

fn plateau(tables: &[(usize, ComparisonTable)]) -> Outcome {
    let first = &tables[0].1;
    let last = &tables[tables.len() - 1].1;
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [Method::Deconv, Method::Tikhonov] {
        let r = mean(last, m) / mean(first, m);
        ok &= (0.5..=2.0).contains(&r);
        parts.push(format!("{m} n=100/n=10 = {r:.3}"));
    }
    outcome(2, "error plateau", ok, parts.join(", "))
}

fn differentiator_bound() -> Outcome {
    let m2 = 4.0 * PI * PI;
    let data_grid = Grid::endpoint(1.0, 4000).unwrap();
    let out = Grid::midpoint(1.0, 200).unwrap();
    let clean = GridSignal::from_fn(data_grid, |t| (2.0 * PI * t).sin());
    let interior_error = |noise: &GridSignal, delta: f64| -> f64 {
        let cfg = RegConfig::new(delta, m2).unwrap();
        let h = cfg.step().unwrap();
        let d = stable_derivative(&clean.add(noise).unwrap(), &cfg, &out).unwrap();
        out.nodes()
            .into_iter()
            .zip(d.values())
            .filter(|(t, _)| *t >= h && *t <= 1.0 - h)
            .map(|(t, v)| (v - 2.0 * PI * (2.0 * PI * t).cos()).abs())
            .fold(0.0, f64::max)
    };
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for delta in [1e-1, 1e-2, 1e-3] {
        let bound = (2.0 * m2 * delta).sqrt();
        let h = (2.0 * delta / m2).sqrt();
        for draw in 0..50u64 {
            let phase = rng.random_range(0.0..2.0 * PI);
            let adversarial = GridSignal::from_fn(data_grid, |s| delta * (PI * s / (2.0 * h) + phase).sin());
            let seeded = NoiseSpec::new(draw, delta).perturbation(&data_grid).unwrap();
            for noise in [adversarial, seeded] {
                let r = interior_error(&noise, delta) / bound;
                worst_ratio = worst_ratio.max(r);
                ok &= r <= 1.05;
            }
        }
    }
    let mut worst_scaling: f64 = 0.0;
    for delta in [1e-1, 1e-2] {
        for seed in 0..10u64 {
            let e = NoiseSpec::new(seed, delta).perturbation(&data_grid).unwrap();
            let r = interior_error(&e.scale(0.25), delta / 4.0) / interior_error(&e, delta);
            worst_scaling = worst_scaling.max(r);
            ok &= r <= 0.6;
        }
    }
    outcome(
        3,
        "optimal differentiator bound",
        ok,
        format!("max error/bound {worst_ratio:.3} (<= 1.05), max err(δ/4)/err(δ) {worst_scaling:.3} (<= 0.6)"),
    )
}

fn noiseless_oracles() -> Outcome {
    let grid = Grid::midpoint(1.0, 200).unwrap();
    let smooth = TestProblem::exponential_default();
    let f = smooth.sample_f(&smooth.data_grid(200).unwrap());
    let rel = deconvolve(&smooth.kernel, &f, &Regularization::ExactDerivative(smooth.f_prime.clone()), &grid)
        .and_then(|r| r.with_exact(&smooth.sample_u(&grid)))
        .map(|r| r.rel_l2.unwrap())
        .unwrap_or(f64::INFINITY);

    let abel = TestProblem::abel_quadratic(0.5).unwrap();
    let f = abel.sample_f(&abel.data_grid(200).unwrap());
    let sup = deconvolve(&abel.kernel, &f, &Regularization::ExactDerivative(abel.f_prime.clone()), &grid)
        .and_then(|r| r.with_exact(&abel.sample_u(&grid)))
        .map(|r| r.sup_err.unwrap())
        .unwrap_or(f64::INFINITY);
    outcome(
        4,
        "noiseless oracle recovery",
        rel <= 2e-3 && sup <= 1e-3,
        format!("smooth rel l2 {rel:.2e} (<= 2e-3), abel gamma=0.5 sup {sup:.2e} (<= 1e-3)"),
    )
}

fn lu_oracle() -> Outcome {
    let n = 20;
    let grid = Grid::midpoint(1.0, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rows = (0..n).map(|i| (0..=i).map(|_| rng.random_range(-0.2..0.2)).collect()).collect();
        let s = LowerTriangular::from_rows(rows).unwrap();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = DMatrix::from_fn(n, n, |i, j| s.get(i, j) + f64::from(u8::from(i == j)));
        let oracle = dense.lu().solve(&DVector::from_vec(g.clone())).unwrap();
        let sys = SecondKindSystem::new(grid, s).unwrap();
        let u = solve_second_kind(&sys, &GridSignal::new(grid, g).unwrap()).unwrap();
        let rel = (DVector::from_column_slice(u.values()) - &oracle).norm() / oracle.norm();
        worst = worst.max(rel);
    }
    outcome(5, "triangular solver vs dense LU", worst <= 1e-12, format!("max relative difference {worst:.2e}"))
}

fn morozov(n10: &ComparisonTable) -> Outcome {
    let problem = TestProblem::exponential_default();
    let op = TikhonovOperator::new(&problem.kernel, &problem.solution_grid(10).unwrap()).unwrap();
    let cfg = TikhonovConfig::new(DELTA).unwrap();
    let mut ok = true;
    let (mut eps_lo, mut eps_hi) = (f64::INFINITY, 0.0_f64);
    let mut worst_fix: f64 = 0.0;
    for seed in SEEDS {
        let (_, f_delta) = problem_data(&problem, 10, &NoiseSpec::new(seed, DELTA)).unwrap();
        let sel = morozov_select(&op, &f_delta, &cfg).unwrap();
        let fix = (sel.discrepancy - sel.target).abs() / sel.target;
        worst_fix = worst_fix.max(fix);
        ok &= sel.converged && fix <= 1e-3 && sel.is_monotone(1e-12);
        ok &= (3e-3..=3e-1).contains(&sel.eps);
        eps_lo = eps_lo.min(sel.eps);
        eps_hi = eps_hi.max(sel.eps);
    }
    for (_, r) in n10.reports(Method::Tikhonov) {
        ok &= r.eps_used.is_some_and(|e| (3e-3..=3e-1).contains(&e));
    }
    outcome(
        6,
        "Morozov fixed point",
        ok,
        format!("eps in [{eps_lo:.3e}, {eps_hi:.3e}], max |disc - target|/target {worst_fix:.1e}"),
    )
}

fn h_shape() -> Outcome {
    let exp = TestProblem::exponential_default();
    let n = 100;
    let hs: Vec<f64> = (1..=22).map(|i| 0.02 * i as f64).chain([0.45]).collect();
    let errs = sweep_errors(&exp, n, &hs, 1);
    let argmin = (0..hs.len()).min_by(|&a, &b| errs[a].total_cmp(&errs[b])).unwrap();
    let interior = argmin > 0 && argmin + 1 < hs.len();
    let (_, f_delta) = problem_data(&exp, n, &NoiseSpec::new(1, DELTA)).unwrap();
    let baseline = deconv_core::experiments::run_tikhonov(&exp, &RunSettings::new(DELTA, n), &f_delta)
        .unwrap()
        .rel_l2
        .unwrap();
    let acceptable = hs
        .iter()
        .zip(&errs)
        .filter(|(h, _)| **h > 0.09 && **h < 0.3)
        .all(|(_, e)| *e < baseline);
    let smooth_ok = interior && acceptable;
    let smooth = format!(
        "exp: min {:.3} at h={:.2}, max on (0.09,0.3) {:.3} vs tikhonov {baseline:.3}",
        errs[argmin],
        hs[argmin],
        hs.iter().zip(&errs).filter(|(h, _)| **h > 0.09 && **h < 0.3).map(|(_, e)| *e).fold(0.0, f64::max)
    );

    let small = [0.06, 0.08, 0.10, 0.12];
    let g1 = TestProblem::abel_quadratic(0.1).unwrap();
    let at_01: Vec<(u64, f64)> = SEEDS.iter().map(|&s| (s, sweep_errors(&g1, n, &[0.1], s)[0])).collect();
    let seed1 = median_seed(&at_01);
    let e1 = sweep_errors(&g1, n, &small, seed1);
    let g1_ok = e1.iter().all(|e| *e < 0.10);

    let around = [0.06, 0.10, 0.14];
    let g5 = TestProblem::abel_quadratic(0.5).unwrap();
    let at_01: Vec<(u64, f64)> = SEEDS.iter().map(|&s| (s, sweep_errors(&g5, n, &[0.1], s)[0])).collect();
    let seed5 = median_seed(&at_01);
    let e5 = sweep_errors(&g5, n, &around, seed5);
    let g5_ok = e5[1] < e5[0] && e5[1] < e5[2];

    outcome(
        7,
        "h-sensitivity shape",
        smooth_ok && g1_ok && g5_ok,
        format!(
            "{smooth}; gamma=0.1 seed {seed1} h=.06..0.12: {}; gamma=0.5 seed {seed5} h=.06/.10/.14: {}",
            fmt_list(&e1),
            fmt_list(&e5)
        ),
    )
}

fn gamma_degradation() -> Outcome {
    let settings = RunSettings::new(DELTA, 10).with_h(0.12).with_methods(MethodSelection::Deconv);
    let m = |g: f64| mean(&run_comparison(&TestProblem::abel_quadratic(g).unwrap(), &settings, &SEEDS).unwrap(), Method::Deconv);
    let (lo, hi) = (m(0.1), m(0.9));
    outcome(8, "gamma degradation", hi >= lo, format!("mean rel l2 gamma=0.9 {hi:.3} vs gamma=0.1 {lo:.3}"))
}

fn performance() -> Outcome {
    let mut worst = [0.0_f64; 2];
    for problem in [TestProblem::exponential_default(), TestProblem::abel_quadratic(0.1).unwrap()] {
        let settings = RunSettings::new(DELTA, 200).with_h(0.1);
        // warm-up so allocator and thread-pool start-up are not timed
        run_comparison(&problem, &settings, &[0]).unwrap();
        for seed in 1..=5u64 {
            let t = run_comparison(&problem, &settings, &[seed]).unwrap();
            for (slot, m) in [Method::Deconv, Method::Tikhonov].into_iter().enumerate() {
                for (_, r) in t.reports(m) {
                    worst[slot] = worst[slot].max(r.wall_ms());
                }
            }
        }
    }
    outcome(
        9,
        "performance at n=200",
        worst.iter().all(|w| *w <= 50.0),
        format!("max wall deconv {:.2} ms, tikhonov {:.2} ms (<= 50 ms)", worst[0], worst[1]),
    )
}

fn pointwise(n10: &ComparisonTable) -> Outcome {
    let t1 = n10
        .reports(Method::Deconv)
        .filter(|(_, r)| (r.solution.values()[2] - 0.97567292365993).abs() <= 0.15)
        .count();
    let abel = TestProblem::abel_quadratic(0.1).unwrap();
    let settings = RunSettings::new(DELTA, 10).with_h(0.12).with_methods(MethodSelection::Deconv);
    let t3 = run_comparison(&abel, &settings, &SEEDS)
        .unwrap()
        .reports(Method::Deconv)
        .filter(|(_, r)| (r.solution.values()[0] - 1.00281244943820).abs() <= 0.10)
        .count();
    let vals: Vec<f64> = n10.reports(Method::Deconv).map(|(_, r)| r.solution.values()[2]).collect();
    outcome(
        10,
        "pointwise table bands",
        t1 >= 8 && t3 >= 8,
        format!("u(0.25) in band {t1}/10 (values {}), u(0.05) gamma=0.1 in band {t3}/10", fmt_list(&vals)),
    )
}

fn main() -> ExitCode {
    let problem = TestProblem::exponential_default();
    let start = Instant::now();
    let tables: Vec<(usize, ComparisonTable)> = [10, 50, 100]
        .into_iter()
        .map(|n| (n, run_comparison(&problem, &RunSettings::new(DELTA, n).with_h(0.1), &SEEDS).unwrap()))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();

    let results = vec![
        ordering(&tables, elapsed),
        plateau(&tables),
        differentiator_bound(),
        noiseless_oracles(),
        lu_oracle(),
        morozov(&tables[0].1),
        h_shape(),
        gamma_degradation(),
        performance(),
        pointwise(&tables[0].1),
    ];
    let mut failed = 0;
    for r in &results {
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {}: {}", r.id, r.name, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
