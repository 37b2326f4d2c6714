//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use deconv_core::experiments::{MethodSelection, RunSettings, TestProblem};
use deconv_core::regularize::FractionalOrder;

use crate::error::CliError;

const KEYS: &[&str] = &[
    "problem",
    "delta",
    "n",
    "h",
    "m2",
    "gamma",
    "seeds",
    "method",
    "output_dir",
    "c_morozov",
    "fractional_order",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemDef {
    Named(String),
    /// `exp(a*t)`, solution `sin 2πt + cos 2πt`.
    Exp { a: f64 },
    /// `abel(gamma)+poly(c0,c1,c2)`, solution `1 − t²`.
    AbelPoly { gamma: f64, c: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemDef,
    pub delta: f64,
    pub n: usize,
    pub h: Option<f64>,
    pub m2: Option<f64>,
    pub gamma: Option<f64>,
    pub seeds: Vec<u64>,
    pub method: MethodSelection,
    pub output_dir: PathBuf,
    pub c_morozov: f64,
    pub order: FractionalOrder,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(format!("{key}: expected a number, got '{v}'")))
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>, CliError> {
    let seeds = v
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|_| bad(format!("seeds: bad seed '{}'", s.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(bad("seeds: empty list"));
    }
    Ok(seeds)
}

fn parse_method(v: &str) -> Result<MethodSelection, CliError> {
    match v {
        "deconv" => Ok(MethodSelection::Deconv),
        "tikhonov" => Ok(MethodSelection::Tikhonov),
        "both" => Ok(MethodSelection::Both),
        _ => Err(bad(format!("method: expected deconv, tikhonov or both, got '{v}'"))),
    }
}

fn parse_order(v: &str) -> Result<FractionalOrder, CliError> {
    match v {
        "integrate-first" => Ok(FractionalOrder::IntegrateFirst),
        "differentiate-first" => Ok(FractionalOrder::DifferentiateFirst),
        _ => Err(bad(format!("fractional_order: expected integrate-first or differentiate-first, got '{v}'"))),
    }
}

fn strip_call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')
}

pub fn parse_problem(v: &str) -> Result<ProblemDef, CliError> {
    let s: String = v.chars().filter(|c| !c.is_whitespace()).collect();
    if s == "exp" || s == "abel" {
        return Ok(ProblemDef::Named(s));
    }
    if let Some(arg) = strip_call(&s, "exp") {
        let a = match arg {
            "t" => 1.0,
            "-t" => -1.0,
            _ => {
                let coef = arg
                    .strip_suffix("*t")
                    .ok_or_else(|| bad(format!("problem: expected exp(a*t), got '{v}'")))?;
                parse_f64("problem", coef)?
            }
        };
        return Ok(ProblemDef::Exp { a });
    }
    if let Some((abel, poly)) = s.split_once(")+poly(") {
        let gamma = abel
            .strip_prefix("abel(")
            .ok_or_else(|| bad(format!("problem: expected abel(gamma)+poly(c0,c1,c2), got '{v}'")))?;
        let gamma = parse_f64("problem", gamma)?;
        let coeffs = poly
            .strip_suffix(')')
            .ok_or_else(|| bad(format!("problem: unterminated poly(...) in '{v}'")))?
            .split(',')
            .map(|c| parse_f64("problem", c))
            .collect::<Result<Vec<_>, _>>()?;
        let c: [f64; 3] = coeffs
            .try_into()
            .map_err(|_| bad(format!("problem: poly takes exactly three coefficients in '{v}'")))?;
        return Ok(ProblemDef::AbelPoly { gamma, c });
    }
    if let Some(g) = strip_call(&s, "abel") {
        return Ok(ProblemDef::AbelPoly { gamma: parse_f64("problem", g)?, c: [0.0; 3] });
    }
    Err(bad(format!("unknown problem '{v}'")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(bad(format!("line {}: unknown key '{k}'", lineno + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(bad(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let required = |k: &str| get(k).ok_or_else(|| bad(format!("missing key '{k}'")));

        let problem = parse_problem(required("problem")?)?;
        let delta = parse_f64("delta", required("delta")?)?;
        if delta < 0.0 {
            return Err(bad(format!("delta must be >= 0, got {delta}")));
        }
        let n_raw = required("n")?;
        let n = n_raw.parse::<usize>().map_err(|_| bad(format!("n: expected a positive integer, got '{n_raw}'")))?;
        if n < 4 {
            return Err(bad(format!("n must be >= 4, got {n}")));
        }
        let h = get("h").map(|v| parse_f64("h", v)).transpose()?;
        let m2 = get("m2").map(|v| parse_f64("m2", v)).transpose()?;
        let gamma = get("gamma").map(|v| parse_f64("gamma", v)).transpose()?;
        match (&problem, gamma) {
            (ProblemDef::Named(name), None) if name == "abel" => return Err(bad("problem 'abel' needs gamma")),
            (ProblemDef::Named(name), Some(_)) if name == "exp" => return Err(bad("gamma given for a smooth kernel")),
            (ProblemDef::Exp { .. }, Some(_)) => return Err(bad("gamma given for a smooth kernel")),
            (ProblemDef::AbelPoly { gamma: g, .. }, Some(k)) if *g != k => {
                return Err(bad(format!("gamma = {k} disagrees with the inline kernel's {g}")))
            }
            _ => {}
        }
        let c_morozov = get("c_morozov").map(|v| parse_f64("c_morozov", v)).transpose()?.unwrap_or(1.0);
        Ok(Self {
            problem,
            delta,
            n,
            h,
            m2,
            gamma,
            seeds: get("seeds").map(parse_seeds).transpose()?.unwrap_or_else(|| (1..=10).collect()),
            method: get("method").map(parse_method).transpose()?.unwrap_or_default(),
            output_dir: PathBuf::from(get("output_dir").unwrap_or(".")),
            c_morozov,
            order: get("fractional_order").map(parse_order).transpose()?.unwrap_or_default(),
        })
    }

    pub fn test_problem(&self) -> Result<TestProblem, CliError> {
        let p = match &self.problem {
            ProblemDef::Named(name) => TestProblem::by_name(name, self.gamma)?,
            ProblemDef::Exp { a } => TestProblem::exponential(*a, 2.0 * PI)?,
            ProblemDef::AbelPoly { gamma, c } => TestProblem::abel_poly(*gamma, *c)?,
        };
        Ok(p)
    }

    pub fn settings(&self) -> RunSettings {
        let mut s = RunSettings::new(self.delta, self.n).with_methods(self.method);
        s.h = self.h;
        s.m2 = self.m2;
        s.c_morozov = self.c_morozov;
        s.order = self.order;
        s
    }
}
