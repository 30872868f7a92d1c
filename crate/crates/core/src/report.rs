//! Cost reports and backtests: projections combined with per-person costs,
//! and projections compared against held-out observations.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::estimation::StoppingTimePmf;
use crate::finance::{profile_for, total_cost_gt, FinanceConfig, SalaryScale};
use crate::ingestion::{build_counts_with, build_reserve, CellKey, MonthlyRecord, ReserveSpec, Weighting};
use crate::model::{fit, FittedModel};
use crate::montecarlo::{
    attach, integer_population, plan, simulate_projection, RowRole, SimulationConfig, SimulationPlan, Summary,
};
use crate::projection::{
    distributions_through, expected_populations, group_probabilities, write_comment_lines, ProjectionRow,
};
use crate::state_model::StateSpaceConfig;

/// Annual cost per person for each row, zero outside the system.
fn row_costs(
    rows: &[ProjectionRow],
    calendar_year: i32,
    model: &FittedModel,
    finance: &FinanceConfig,
    scale: &SalaryScale,
) -> Result<Vec<f64>> {
    let schedule = finance.schedule();
    let mut cache: BTreeMap<(usize, Option<Vec<u32>>), f64> = BTreeMap::new();
    rows.iter()
        .map(|r| {
            if r.key.category == 0 {
                return Ok(0.0);
            }
            let k = (r.key.category, r.tuple.clone());
            if let Some(&c) = cache.get(&k) {
                return Ok(c);
            }
            let p = profile_for(r.key.category, r.tuple.as_deref(), scale, finance, &model.config, model.weighting)?;
            let c = total_cost_gt(calendar_year, &p, &schedule)?;
            cache.insert(k, c);
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReportRow {
    pub year: usize,
    /// `None` for the all-cells total.
    pub key: Option<CellKey>,
    pub expected_cost: f64,
    pub simulated: Option<Summary>,
}

/// Leaf rows (sampled cells) of each in-system cell, for cost sums.
fn leaves_by_key(rows: &[ProjectionRow], roles: &[RowRole]) -> BTreeMap<CellKey, Vec<(usize, usize)>> {
    let mut out: BTreeMap<CellKey, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, (r, role)) in rows.iter().zip(roles).enumerate() {
        if let RowRole::Cell(c) = role {
            if r.key.category > 0 {
                out.entry(r.key).or_default().push((i, *c));
            }
        }
    }
    out
}

/// Expected (and optionally simulated) cost per in-system cell for years
/// `1..=years`, plus a total row per year.
pub fn cost_report(
    model: &FittedModel,
    finance: &FinanceConfig,
    scale: &SalaryScale,
    years: usize,
    sim: Option<&SimulationConfig>,
) -> Result<Vec<CostReportRow>> {
    let mut p: SimulationPlan = plan(model, years)?;
    let mut layout = Vec::new();
    for (y, (rows, roles)) in p.rows.iter().zip(&p.roles).enumerate() {
        let cal = model.base_year + (y + 1) as i32;
        let costs = row_costs(rows, cal, model, finance, scale)?;
        let by_key = leaves_by_key(rows, roles);
        let mut weighted: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut expected = Vec::new();
        for (key, leaves) in &by_key {
            weighted.push(leaves.iter().map(|&(i, c)| (c, costs[i])).collect());
            let e: f64 = leaves.iter().map(|&(i, _)| rows[i].expected_count * costs[i]).sum();
            expected.push((*key, e));
        }
        weighted.push(weighted.iter().flatten().copied().collect());
        p.inputs[y].weighted = weighted;
        layout.push(expected);
    }
    let outputs = match sim {
        Some(s) => Some(simulate_projection(&p.inputs, integer_population(model.total_population)?, s, None)?),
        None => None,
    };
    let mut out = Vec::new();
    for (y, expected) in layout.iter().enumerate() {
        let total: f64 = expected.iter().map(|(_, e)| e).sum();
        for (j, &(key, e)) in expected.iter().enumerate() {
            out.push(CostReportRow {
                year: y + 1,
                key: Some(key),
                expected_cost: e,
                simulated: outputs.as_ref().map(|o| o[y].weighted[j]),
            });
        }
        out.push(CostReportRow {
            year: y + 1,
            key: None,
            expected_cost: total,
            simulated: outputs.as_ref().map(|o| o[y].weighted[expected.len()]),
        });
    }
    Ok(out)
}

fn money(v: f64) -> String {
    format!("{:.0}", v)
}

fn key_fields(cfg: &StateSpaceConfig, key: &Option<CellKey>) -> [String; 3] {
    match key {
        Some(k) => [cfg.categories()[k.category].clone(), k.age_group.to_string(), k.seniority_group.to_string()],
        None => ["*".into(), "*".into(), "*".into()],
    }
}

pub const COST_HEADER: [&str; 8] =
    ["year", "category", "age_group", "seniority_group", "expected_cost", "sim_mean_cost", "sim_p05", "sim_p95"];

/// Currency amounts are rounded to whole units here and nowhere else.
pub fn write_cost_csv<W: Write>(
    out: W,
    rows: &[CostReportRow],
    cfg: &StateSpaceConfig,
    comments: &[String],
) -> Result<()> {
    let mut out = out;
    write_comment_lines(&mut out, comments).map_err(|e| Error::io("writing cost report", e))?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Model(format!("writing cost report: {e}"));
    w.write_record(COST_HEADER).map_err(err)?;
    for r in rows {
        let [c, a, s] = key_fields(cfg, &r.key);
        let (m, lo, hi) = match r.simulated {
            Some(s) => (money(s.mean), money(s.p05), money(s.p95)),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([r.year.to_string(), c, a, s, money(r.expected_cost), m, lo, hi]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("writing cost report", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRow {
    pub calendar_year: i32,
    /// `None` for the total over all in-system cells.
    pub key: Option<CellKey>,
    pub observed_population: f64,
    pub expected_population: f64,
    pub simulated_population: Option<f64>,
    pub observed_cost: f64,
    pub expected_cost: f64,
    pub simulated_cost: Option<f64>,
}

/// `|observed - predicted| / observed`, undefined when nothing was observed.
pub fn relative_error(observed: f64, predicted: f64) -> Option<f64> {
    (observed > 0.0).then(|| (observed - predicted).abs() / observed)
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub model: FittedModel,
    pub rows: Vec<BacktestRow>,
}

impl BacktestReport {
    pub fn totals(&self) -> impl Iterator<Item = &BacktestRow> {
        self.rows.iter().filter(|r| r.key.is_none())
    }
}

pub struct BacktestInput<'a> {
    pub records: &'a [MonthlyRecord],
    pub reserve: &'a ReserveSpec,
    pub config: &'a StateSpaceConfig,
    pub weighting: Weighting,
    pub stopping_time: &'a StoppingTimePmf,
    pub finance: &'a FinanceConfig,
    pub scale: &'a SalaryScale,
    pub split_year: i32,
}

/// Fit on every month before January of `split_year`, project the later
/// calendar years, and compare with their observed monthly averages.
/// Only held-out years with all twelve months are compared.
pub fn backtest(input: &BacktestInput<'_>, sim: Option<&SimulationConfig>) -> Result<BacktestReport> {
    let cfg = input.config;
    let (train, held): (Vec<MonthlyRecord>, Vec<&MonthlyRecord>) = {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for r in input.records {
            if r.calendar.year < input.split_year {
                train.push(r.clone());
            } else {
                held.push(r);
            }
        }
        (train, held)
    };
    if train.is_empty() {
        return Err(Error::Estimation(format!("no records before {} to fit on", input.split_year)));
    }
    let cube = build_reserve(build_counts_with(&train, cfg, input.weighting), input.reserve, cfg)?;
    let model = fit(&cube, cfg, input.stopping_time.clone())?;

    let weight = |r: &MonthlyRecord| match input.weighting {
        Weighting::Workload => r.workload / cfg.full_time_hours(),
        Weighting::Headcount => 1.0,
    };
    // calendar year -> month -> (key, tuple) -> weight
    let mut observed: BTreeMap<i32, BTreeMap<u32, BTreeMap<(CellKey, Vec<u32>), f64>>> = BTreeMap::new();
    for r in held {
        let (ag, sg) = cfg.locate_groups(&r.triple());
        let key = CellKey { category: r.category, age_group: ag, seniority_group: sg };
        *observed
            .entry(r.calendar.year)
            .or_default()
            .entry(r.calendar.month)
            .or_default()
            .entry((key, r.characteristics.clone()))
            .or_default() += weight(r);
    }
    observed.retain(|y, months| {
        let full = months.len() == 12;
        if !full {
            log::warn!("held-out year {y} has {} months; skipped", months.len());
        }
        full
    });
    let Some(&last_year) = observed.keys().next_back() else {
        return Err(Error::Estimation(format!("no complete held-out calendar year at or after {}", input.split_year)));
    };
    if last_year <= model.base_year {
        return Err(Error::Estimation("held-out years must follow the fitted months".into()));
    }
    let horizon = (last_year - model.base_year) as usize;
    let dists = distributions_through(&model, horizon)?;
    let mut sim_plan = match sim {
        Some(_) => Some(plan(&model, horizon)?),
        None => None,
    };
    let mut rows_by_year = Vec::new();
    for (&year, months) in &observed {
        let n = (year - model.base_year) as usize;
        let (rows, _) = expected_populations(&group_probabilities(&dists[n], cfg), &model);
        let costs = row_costs(&rows, year, &model, input.finance, input.scale)?;

        let mut obs: BTreeMap<CellKey, (f64, f64)> = BTreeMap::new();
        let schedule = input.finance.schedule();
        for cells in months.values() {
            for ((key, tuple), &w) in cells {
                let tuple = (!tuple.is_empty()).then_some(tuple.as_slice());
                let p = profile_for(key.category, tuple, input.scale, input.finance, cfg, input.weighting)?;
                let gt = total_cost_gt(year, &p, &schedule)?;
                let e = obs.entry(*key).or_default();
                e.0 += w / 12.0;
                e.1 += w * gt / 12.0;
            }
        }

        let mut exp: BTreeMap<CellKey, (f64, f64)> = BTreeMap::new();
        let split: std::collections::BTreeSet<CellKey> =
            rows.iter().filter(|r| r.tuple.is_some()).map(|r| r.key).collect();
        for (r, c) in rows.iter().zip(&costs) {
            if r.key.category == 0 {
                continue;
            }
            let e = exp.entry(r.key).or_default();
            if r.tuple.is_none() {
                e.0 += r.expected_count;
            }
            if r.tuple.is_some() || !split.contains(&r.key) {
                e.1 += r.expected_count * c;
            }
        }

        if let Some(p) = sim_plan.as_mut() {
            let by_key = leaves_by_key(&p.rows[n - 1], &p.roles[n - 1]);
            let mut weighted = Vec::new();
            for leaves in by_key.values() {
                weighted.push(leaves.iter().map(|&(_, c)| (c, 1.0)).collect::<Vec<_>>());
                weighted.push(leaves.iter().map(|&(i, c)| (c, costs[i])).collect::<Vec<_>>());
            }
            p.inputs[n - 1].weighted = weighted;
            rows_by_year.push((year, n, obs, exp, Some(by_key.keys().copied().collect::<Vec<_>>())));
        } else {
            rows_by_year.push((year, n, obs, exp, None));
        }
    }

    let sim_outputs = match (sim_plan.as_ref(), sim) {
        (Some(p), Some(s)) => {
            Some(simulate_projection(&p.inputs, integer_population(model.total_population)?, s, None)?)
        }
        _ => None,
    };

    let mut out = Vec::new();
    for (year, n, obs, exp, sim_keys) in rows_by_year {
        let mut sim_map: BTreeMap<CellKey, (f64, f64)> = BTreeMap::new();
        if let (Some(outputs), Some(keys)) = (&sim_outputs, &sim_keys) {
            let o = &outputs[n - 1];
            for (j, k) in keys.iter().enumerate() {
                sim_map.insert(*k, (o.weighted[2 * j].mean, o.weighted[2 * j + 1].mean));
            }
        }
        let keys: std::collections::BTreeSet<CellKey> = obs.keys().chain(exp.keys()).copied().collect();
        let mut total = BacktestRow {
            calendar_year: year,
            key: None,
            observed_population: 0.0,
            expected_population: 0.0,
            simulated_population: sim_outputs.as_ref().map(|_| 0.0),
            observed_cost: 0.0,
            expected_cost: 0.0,
            simulated_cost: sim_outputs.as_ref().map(|_| 0.0),
        };
        for key in keys {
            let (op, oc) = obs.get(&key).copied().unwrap_or_default();
            let (ep, ec) = exp.get(&key).copied().unwrap_or_default();
            let s = sim_outputs.as_ref().map(|_| sim_map.get(&key).copied().unwrap_or_default());
            total.observed_population += op;
            total.observed_cost += oc;
            total.expected_population += ep;
            total.expected_cost += ec;
            if let Some((sp, sc)) = s {
                *total.simulated_population.as_mut().expect("set with sim") += sp;
                *total.simulated_cost.as_mut().expect("set with sim") += sc;
            }
            out.push(BacktestRow {
                calendar_year: year,
                key: Some(key),
                observed_population: op,
                expected_population: ep,
                simulated_population: s.map(|v| v.0),
                observed_cost: oc,
                expected_cost: ec,
                simulated_cost: s.map(|v| v.1),
            });
        }
        out.push(total);
    }
    Ok(BacktestReport { model, rows: out })
}

pub const BACKTEST_HEADER: [&str; 14] = [
    "year",
    "category",
    "age_group",
    "seniority_group",
    "observed_population",
    "expected_population",
    "simulated_population",
    "population_rel_error",
    "observed_cost",
    "expected_cost",
    "simulated_cost",
    "cost_rel_error",
    "simulated_population_rel_error",
    "simulated_cost_rel_error",
];

pub fn write_backtest_csv<W: Write>(
    out: W,
    rows: &[BacktestRow],
    cfg: &StateSpaceConfig,
    comments: &[String],
) -> Result<()> {
    let mut out = out;
    write_comment_lines(&mut out, comments).map_err(|e| Error::io("writing backtest", e))?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Model(format!("writing backtest: {e}"));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_money = |v: Option<f64>| v.map(money).unwrap_or_default();
    w.write_record(BACKTEST_HEADER).map_err(err)?;
    for r in rows {
        let [c, a, s] = key_fields(cfg, &r.key);
        w.write_record([
            r.calendar_year.to_string(),
            c,
            a,
            s,
            r.observed_population.to_string(),
            r.expected_population.to_string(),
            opt(r.simulated_population),
            opt(relative_error(r.observed_population, r.expected_population)),
            money(r.observed_cost),
            money(r.expected_cost),
            opt_money(r.simulated_cost),
            opt(relative_error(r.observed_cost, r.expected_cost)),
            opt(r.simulated_population.and_then(|p| relative_error(r.observed_population, p))),
            opt(r.simulated_cost.and_then(|p| relative_error(r.observed_cost, p))),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("writing backtest", e))
}

/// Projection rows for years `1..=years` joined with their simulation
/// summaries; convenience for callers that want both.
pub fn simulated_rows(
    model: &FittedModel,
    years: usize,
    sim: &SimulationConfig,
) -> Result<Vec<crate::montecarlo::SimulationRow>> {
    let p = plan(model, years)?;
    let outputs = simulate_projection(&p.inputs, integer_population(model.total_population)?, sim, None)?;
    Ok(attach(&p, &outputs))
}
