use std::fs;
use std::path::Path;

use deconv_core::experiments::{
    make_noise, problem_data, report_csv_row, run_comparison, run_tikhonov, sweep_h, NoiseSpec, TestProblem,
    REPORT_CSV_HEADER,
};
use deconv_core::grid::fmt_f64;
use deconv_core::{DeconvError, DeconvReport, GridSignal, Method};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{line_plot, Series};

pub const SWEEP_CSV_HEADER: &str = "method,seed,h,rel_l2,residual_l2";

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

fn prepare(cfg: &RunConfig) -> Result<TestProblem, CliError> {
    let problem = cfg.test_problem()?;
    if let Some(h) = cfg.h {
        check_step(h, problem.t_end)?;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    Ok(problem)
}

fn check_step(h: f64, t_end: f64) -> Result<(), CliError> {
    if !(h > 0.0 && h < t_end / 2.0) {
        return Err(CliError::Config(format!("step h = {h} must lie in (0, {})", t_end / 2.0)));
    }
    Ok(())
}

/// Collects per-run failures; the first one decides the exit code.
#[derive(Default)]
struct Failures(Vec<(String, DeconvError)>);

impl Failures {
    fn record(&mut self, what: String, e: &DeconvError) {
        eprintln!("{what} failed: {e}");
        self.0.push((what, e.clone()));
    }

    fn finish(self, total: usize) -> Result<(), CliError> {
        match self.0.into_iter().next() {
            None => Ok(()),
            Some((what, e)) => Err(match CliError::from(e) {
                CliError::Config(msg) => CliError::Config(format!("{what}: {msg}")),
                other => CliError::Numeric(format!("{what} (of {total} runs): {other}")),
            }),
        }
    }
}

pub fn forward(cfg: &RunConfig) -> Result<(), CliError> {
    let problem = prepare(cfg)?;
    let f = problem.sample_f(&problem.data_grid(cfg.n)?);
    write_file(&cfg.output_dir, "f.csv", &f.to_csv())?;
    let noisy: Vec<(u64, deconv_core::Result<GridSignal>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| (seed, make_noise(&f, &NoiseSpec::new(seed, cfg.delta))))
        .collect();
    let mut failures = Failures::default();
    for (seed, f_delta) in &noisy {
        match f_delta {
            Ok(fd) => write_file(&cfg.output_dir, &format!("f_delta_{seed}.csv"), &fd.to_csv())?,
            Err(e) => failures.record(format!("noise seed {seed}"), e),
        }
    }
    failures.finish(noisy.len())
}

fn solution_points(u: &GridSignal) -> Vec<(f64, f64)> {
    u.grid().nodes().into_iter().zip(u.values().iter().copied()).collect()
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let problem = prepare(cfg)?;
    let table = run_comparison(&problem, &cfg.settings(), &cfg.seeds)?;
    let exact = problem.sample_u(&problem.solution_grid(cfg.n)?);
    write_file(&cfg.output_dir, "u_exact.csv", &exact.to_csv())?;

    let mut report = format!("{REPORT_CSV_HEADER}\n");
    let mut failures = Failures::default();
    let mut total = 0;
    for row in &table.rows {
        for m in [Method::Deconv, Method::Tikhonov] {
            match row.get(m) {
                None => {}
                Some(Ok(r)) => {
                    total += 1;
                    write_file(&cfg.output_dir, &format!("u_{m}_{}.csv", row.seed), &r.solution.to_csv())?;
                    report.push_str(&report_csv_row(r, row.seed, cfg.n));
                    report.push('\n');
                    println!("{m} {} {:.6e} {:.3}", row.seed, r.rel_l2.unwrap_or(f64::NAN), r.wall_ms());
                }
                Some(Err(e)) => {
                    total += 1;
                    failures.record(format!("{m} seed {}", row.seed), e);
                }
            }
        }
    }
    write_file(&cfg.output_dir, "report.csv", &report)?;

    if let Some(first) = table.rows.first() {
        let mut series = vec![Series::new("u_exact", solution_points(&exact))];
        if let Some(Ok(r)) = first.get(Method::Deconv) {
            series.push(Series::new("u_deconv", solution_points(&r.solution)));
        }
        if let Some(Ok(r)) = first.get(Method::Tikhonov) {
            series.push(Series::new("u_disc", solution_points(&r.solution)).dashed());
        }
        let title = format!("{} problem, n = {}, delta = {}, seed {}", problem.name, cfg.n, cfg.delta, first.seed);
        write_file(&cfg.output_dir, "solution.svg", &line_plot(&title, "t", "u(t)", &series))?;
    }
    failures.finish(total)
}

fn sweep_row(method: Method, seed: u64, h: f64, r: &DeconvReport) -> String {
    format!(
        "{method},{seed},{},{},{}",
        fmt_f64(h),
        r.rel_l2.map(fmt_f64).unwrap_or_default(),
        fmt_f64(r.residual_l2)
    )
}

pub fn sweep(cfg: &RunConfig, h_list: &[f64]) -> Result<(), CliError> {
    let problem = prepare(cfg)?;
    if h_list.is_empty() {
        return Err(CliError::Config("empty h list".into()));
    }
    for &h in h_list {
        check_step(h, problem.t_end)?;
    }
    let seed = cfg.seeds[0];
    let mut settings = cfg.settings();
    settings.h = None;

    let deconv = if settings.methods.includes(Method::Deconv) {
        sweep_h(&problem, &settings, h_list, seed)?
    } else {
        Vec::new()
    };
    let tikhonov = settings.methods.includes(Method::Tikhonov).then(|| {
        problem_data(&problem, cfg.n, &NoiseSpec::new(seed, cfg.delta))
            .and_then(|(_, fd)| run_tikhonov(&problem, &settings, &fd))
    });

    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    let mut failures = Failures::default();
    let mut series = Vec::new();
    let (mut rel, mut res) = (Vec::new(), Vec::new());
    for row in &deconv {
        match &row.report {
            Ok(r) => {
                csv.push_str(&sweep_row(Method::Deconv, seed, row.h, r));
                csv.push('\n');
                println!("deconv {seed} {} {:.6e}", row.h, r.rel_l2.unwrap_or(f64::NAN));
                rel.push((row.h, r.rel_l2.unwrap_or(f64::NAN)));
                res.push((row.h, r.residual_l2));
            }
            Err(e) => failures.record(format!("deconv h = {}", row.h), e),
        }
    }
    if !deconv.is_empty() {
        series.push(Series::new("deconv rel_l2", rel));
        series.push(Series::new("deconv residual", res).dashed());
    }
    match &tikhonov {
        None => {}
        Some(Ok(r)) => {
            for &h in h_list {
                csv.push_str(&sweep_row(Method::Tikhonov, seed, h, r));
                csv.push('\n');
            }
            println!("tikhonov {seed} - {:.6e}", r.rel_l2.unwrap_or(f64::NAN));
            let rel = h_list.iter().map(|&h| (h, r.rel_l2.unwrap_or(f64::NAN))).collect();
            let res = h_list.iter().map(|&h| (h, r.residual_l2)).collect();
            series.push(Series::new("tikhonov rel_l2", rel));
            series.push(Series::new("tikhonov residual", res).dashed());
        }
        Some(Err(e)) => failures.record("tikhonov".into(), e),
    }
    write_file(&cfg.output_dir, "sweep.csv", &csv)?;
    let title = format!("{} problem, n = {}, delta = {}, seed {seed}", problem.name, cfg.n, cfg.delta);
    write_file(&cfg.output_dir, "sweep.svg", &line_plot(&title, "h", "error", &series))?;
    failures.finish(deconv.len() + usize::from(tikhonov.is_some()))
}
