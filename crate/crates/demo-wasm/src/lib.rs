//! Browser bindings for three small operations: annualizing a monthly
//! matrix, projecting the synthetic demo institution with a Monte Carlo
//! band, and the per-person salary cost formulas.
//!
//! Every export takes and returns plain numbers or JSON strings; the
//! `*_impl` functions hold the logic and are tested natively.

use popchain::estimation::{annualize_matrix, StoppingTimePmf};
use popchain::finance::{salary_cost_g, total_cost_gt, PensionRegime, RateSchedule, SalaryProfile};
use popchain::ingestion::{build_counts_with, build_reserve, YearMonth};
use popchain::matrix::SquareMatrix;
use popchain::montecarlo::{integer_population, plan, simulate_projection, SimulationConfig};
use popchain::synthetic::{generate, SyntheticTruth};
use popchain::{fit, Error};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
pub struct AnnualizeRequest {
    /// Rows of a square row-stochastic matrix.
    pub monthly: Vec<Vec<f64>>,
    /// Twelve probabilities; uniform when absent.
    #[serde(default)]
    pub stopping_time: Option<[f64; 12]>,
}

pub fn annualize_impl(req: &AnnualizeRequest) -> Result<Vec<Vec<f64>>, String> {
    let n = req.monthly.len();
    if n == 0 || req.monthly.iter().any(|r| r.len() != n) {
        return Err("the monthly matrix must be square and non-empty".into());
    }
    for (i, r) in req.monthly.iter().enumerate() {
        let s: f64 = r.iter().sum();
        if r.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (s - 1.0).abs() > 1e-9 {
            return Err(format!("row {} must hold probabilities summing to 1 (sums to {s})", i + 1));
        }
    }
    let pmf = match req.stopping_time {
        Some(p) => StoppingTimePmf::new(p).map_err(|e| e.to_string())?,
        None => StoppingTimePmf::uniform(),
    };
    let m = SquareMatrix::from_row_major(n, req.monthly.concat());
    let a = annualize_matrix(&m, &pmf);
    Ok((0..n).map(|r| a.row(r).to_vec()).collect())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Band {
    pub expected: Vec<f64>,
    pub mean: Vec<f64>,
    pub p05: Vec<f64>,
    pub p95: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DemoProjection {
    pub base_year: i32,
    pub population: u64,
    pub years: Vec<usize>,
    /// In-system headcount by category code.
    pub categories: Vec<(String, Band)>,
    pub total: Band,
}

/// Generate a synthetic panel, fit it, and project its in-system headcount.
pub fn demo_projection_impl(
    persons_per_age: usize,
    years: usize,
    iterations: u32,
    seed: u64,
) -> Result<DemoProjection, Error> {
    let truth = SyntheticTruth::demo(persons_per_age.clamp(1, 200));
    let cfg = &truth.config;
    let panel = generate(&truth, YearMonth::new(2014, 1), 36, 40, seed)?;
    let cube = build_reserve(build_counts_with(&panel.records, cfg, Default::default()), &panel.reserve, cfg)?;
    let model = fit(&cube, cfg, StoppingTimePmf::uniform())?;

    let mut p = plan(&model, years.clamp(1, 40))?;
    let n_cat = cfg.n_categories();
    // one integer sum per in-system category plus the overall total
    for (input, (rows, roles)) in p.inputs.iter_mut().zip(p.rows.iter().zip(&p.roles)) {
        let mut sets = vec![Vec::new(); n_cat];
        for (r, role) in rows.iter().zip(roles) {
            if let popchain::montecarlo::RowRole::Cell(i) = role {
                sets[r.key.category].push(*i);
            }
        }
        let total: Vec<usize> = sets[1..].concat();
        input.sums = sets.split_off(1);
        input.sums.push(total);
    }
    let trials = integer_population(model.total_population)?;
    let sim = SimulationConfig { iterations: iterations.clamp(1, 20_000), seed };
    let out = simulate_projection(&p.inputs, trials, &sim, None)?;

    let empty = || Band { expected: Vec::new(), mean: Vec::new(), p05: Vec::new(), p95: Vec::new() };
    let mut bands: Vec<Band> = (0..n_cat).map(|_| empty()).collect();
    for (input, o) in p.inputs.iter().zip(&out) {
        for (k, (set, s)) in input.sums.iter().zip(&o.sums).enumerate() {
            let b = &mut bands[k];
            b.expected.push(set.iter().map(|&i| input.probs[i]).sum::<f64>() * trials as f64);
            b.mean.push(s.mean);
            b.p05.push(s.p05);
            b.p95.push(s.p95);
        }
    }
    let total = bands.pop().expect("total band");
    Ok(DemoProjection {
        base_year: model.base_year,
        population: trials,
        years: p.inputs.iter().map(|i| i.year).collect(),
        categories: cfg.categories()[1..].iter().cloned().zip(bands).collect(),
        total,
    })
}

#[derive(Debug, Deserialize)]
pub struct CostRequest {
    pub year: i32,
    pub base_salary: f64,
    #[serde(default = "full_time")]
    pub workload_hours: f64,
    #[serde(default)]
    pub annuity: f64,
    #[serde(default)]
    pub exclusive_dedication: f64,
    #[serde(default)]
    pub prohibition: f64,
    #[serde(default)]
    pub availability: f64,
    #[serde(default)]
    pub regime: PensionRegime,
    #[serde(default)]
    pub inflation: Option<f64>,
}

fn full_time() -> f64 {
    40.0
}

#[derive(Debug, Serialize, PartialEq)]
pub struct CostResponse {
    pub g: f64,
    pub gt: f64,
}

pub fn salary_cost_impl(req: &CostRequest) -> Result<CostResponse, Error> {
    let p = SalaryProfile {
        base_salary: req.base_salary,
        workload_hours: req.workload_hours,
        annuity: req.annuity,
        exclusive_dedication: req.exclusive_dedication,
        prohibition: req.prohibition,
        availability: req.availability,
        regime: req.regime,
    };
    let s = req.inflation.map_or_else(RateSchedule::default, |inflation| RateSchedule { inflation });
    Ok(CostResponse { g: salary_cost_g(req.year, &p, &s)?, gt: total_cost_gt(req.year, &p, &s)? })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

/// `{"monthly": [[...]], "stopping_time": [...12]?}` to the annual matrix.
#[wasm_bindgen]
pub fn annualize(request: &str) -> Result<String, JsValue> {
    let req: Result<AnnualizeRequest, String> = serde_json::from_str(request).map_err(|e| e.to_string());
    to_js(req.and_then(|r| annualize_impl(&r)))
}

#[wasm_bindgen]
pub fn demo_projection(persons_per_age: usize, years: usize, iterations: u32, seed: u32) -> Result<String, JsValue> {
    to_js(demo_projection_impl(persons_per_age, years, iterations, u64::from(seed)).map_err(|e| e.to_string()))
}

/// `{"year": 2020, "base_salary": 650000, ...}` to `{"g": .., "gt": ..}`.
#[wasm_bindgen]
pub fn salary_cost(request: &str) -> Result<String, JsValue> {
    let req: Result<CostRequest, String> = serde_json::from_str(request).map_err(|e| e.to_string());
    to_js(req.and_then(|r| salary_cost_impl(&r).map_err(|e| e.to_string())))
}
