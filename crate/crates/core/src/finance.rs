//! Remuneration cost per person and per projected cell.
//!
//! Salaries are anchored at December 2015 and grow with inflation twice a
//! year. Rates are statutory schedules by calendar year.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{CellKey, Weighting};
use crate::state_model::StateSpaceConfig;

pub const DEFAULT_INFLATION: f64 = 0.0388;
pub const SOCIAL_SECURITY: f64 = 0.1425;
pub const SEVERANCE_AND_ASSOCIATIONS: f64 = 0.0425;
pub const AGUINALDO: f64 = 0.0833;
pub const OCCUPATIONAL_RISK: f64 = 0.0025;
pub const NORMALIZATION: f64 = 0.90;
pub const FULL_TIME_HOURS: f64 = 40.0;
/// First year the cost formula is defined for.
pub const ANCHOR_YEAR: i32 = 2016;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PensionRegime {
    #[default]
    Ivm,
    JupemaCapitalizacion,
    JupemaReparto,
}

/// Salary-bonus ("escolar") rate by year.
pub fn escolar_rate(year: i32) -> f64 {
    match year {
        ..=2015 => 0.0819,
        2016 => 0.0823,
        2017 => 0.0828,
        _ => 0.0833,
    }
}

/// Employer pension contribution by regime and year.
pub fn employer_pension_rate(regime: PensionRegime, year: i32) -> f64 {
    match regime {
        PensionRegime::JupemaCapitalizacion => 0.0675,
        PensionRegime::JupemaReparto => 0.05,
        PensionRegime::Ivm => match year {
            ..=2014 => 0.0492,
            2015..=2019 => 0.0508,
            2020..=2024 => 0.0525,
            2025..=2029 => 0.0542,
            2030..=2034 => 0.0558,
            _ => 0.0575,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSchedule {
    pub inflation: f64,
}

impl Default for RateSchedule {
    fn default() -> Self {
        Self { inflation: DEFAULT_INFLATION }
    }
}

/// Everything the cost formula needs about one person. Percentages are
/// fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct SalaryProfile {
    /// Monthly base salary W.
    pub base_salary: f64,
    /// Weekly hours J.
    pub workload_hours: f64,
    pub annuity: f64,
    pub exclusive_dedication: f64,
    pub prohibition: f64,
    pub availability: f64,
    pub regime: PensionRegime,
}

impl SalaryProfile {
    pub fn full_time(base_salary: f64) -> Self {
        Self {
            base_salary,
            workload_hours: FULL_TIME_HOURS,
            annuity: 0.0,
            exclusive_dedication: 0.0,
            prohibition: 0.0,
            availability: 0.0,
            regime: PensionRegime::Ivm,
        }
    }

    fn pluses(&self) -> f64 {
        self.annuity + self.exclusive_dedication + self.prohibition + self.availability
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_salary > 0.0) || !(self.workload_hours > 0.0) {
            return Err(Error::Finance(format!(
                "salary {} and weekly hours {} must be positive",
                self.base_salary, self.workload_hours
            )));
        }
        if [self.annuity, self.exclusive_dedication, self.prohibition, self.availability].iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Finance("salary percentages must be non-negative".into()));
        }
        Ok(())
    }
}

/// Annual salary cost G in year `year`:
/// `(J/40) * 6W * ((1+i)^(N-2016+1/2) + (1+i)^(N-2015)) * (1+A+DX+P+D) / 0.90`.
pub fn salary_cost_g(year: i32, p: &SalaryProfile, s: &RateSchedule) -> Result<f64> {
    if year < ANCHOR_YEAR {
        return Err(Error::Finance(format!("cost formula starts in {ANCHOR_YEAR}, asked for {year}")));
    }
    p.validate()?;
    let g = 1.0 + s.inflation;
    let first_half = g.powf(f64::from(year - 2016) + 0.5);
    let second_half = g.powi(year - 2015);
    Ok(p.workload_hours / FULL_TIME_HOURS * 6.0 * p.base_salary * (first_half + second_half) * (1.0 + p.pluses())
        / NORMALIZATION)
}

/// Multiplier from G to the total employer cost GT.
pub fn total_cost_factor(year: i32, regime: PensionRegime) -> f64 {
    let e = escolar_rate(year);
    let r = employer_pension_rate(regime, year);
    (1.0 + e) * ((1.0 + r + SOCIAL_SECURITY + SEVERANCE_AND_ASSOCIATIONS) + AGUINALDO) * (1.0 + OCCUPATIONAL_RISK)
}

pub fn total_cost_gt(year: i32, p: &SalaryProfile, s: &RateSchedule) -> Result<f64> {
    Ok(salary_cost_g(year, p, s)? * total_cost_factor(year, p.regime))
}

/// Monthly base salary per category index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SalaryScale(pub BTreeMap<usize, f64>);

/// `category,base_salary` CSV.
pub fn parse_salary_scale<R: Read>(reader: R, cfg: &StateSpaceConfig) -> Result<SalaryScale> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let bad = |m: String| Error::Finance(format!("salary scale: {m}"));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["category", "base_salary"] {
        return Err(bad(format!(
            "expected header category,base_salary, found {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| bad(format!("line {line}: {e}")))?;
        let code = &row[0];
        let c = cfg.category_index(code).ok_or_else(|| bad(format!("line {line}: unknown category code {code:?}")))?;
        if c == 0 {
            return Err(bad(format!("line {line}: the out-of-system category has no salary")));
        }
        let w: f64 =
            row[1].parse().map_err(|_| bad(format!("line {line}: base salary {:?} is not a number", &row[1])))?;
        if !(w > 0.0) {
            return Err(bad(format!("line {line}: base salary must be positive")));
        }
        if out.insert(c, w).is_some() {
            return Err(bad(format!("line {line}: category {code} listed twice")));
        }
    }
    Ok(SalaryScale(out))
}

/// Profile field a characteristic can feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileField {
    WorkloadHours,
    Annuity,
    ExclusiveDedication,
    Prohibition,
    Availability,
    Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelValue {
    Number(f64),
    Regime(PensionRegime),
}

/// Maps each level of one characteristic to the value of one profile field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binding {
    pub characteristic: String,
    pub field: ProfileField,
    pub levels: BTreeMap<String, LevelValue>,
}

fn default_inflation() -> f64 {
    DEFAULT_INFLATION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinanceConfig {
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default)]
    pub default_regime: PensionRegime,
    #[serde(default)]
    pub bindings: Vec<Binding>,
}

impl Default for FinanceConfig {
    fn default() -> Self {
        Self { inflation: DEFAULT_INFLATION, default_regime: PensionRegime::Ivm, bindings: Vec::new() }
    }
}

impl FinanceConfig {
    pub fn schedule(&self) -> RateSchedule {
        RateSchedule { inflation: self.inflation }
    }

    /// Every problem, not just the first.
    pub fn validate(&self, cfg: &StateSpaceConfig) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.inflation > -1.0) || !self.inflation.is_finite() {
            errs.push(format!("finance.inflation {} must exceed -1", self.inflation));
        }
        for b in &self.bindings {
            let Some(pos) = cfg.characteristics().position(&b.characteristic) else {
                errs.push(format!("finance binding refers to unknown characteristic {:?}", b.characteristic));
                continue;
            };
            for level in &cfg.characteristics().characteristics[pos].levels {
                if !b.levels.contains_key(level) {
                    errs.push(format!("finance binding for {:?} has no value for level {level:?}", b.characteristic));
                }
            }
            for (level, v) in &b.levels {
                if cfg.characteristics().level_index(pos, level).is_none() {
                    errs.push(format!("finance binding for {:?}: unknown level {level:?}", b.characteristic));
                }
                match (b.field, v) {
                    (ProfileField::Regime, LevelValue::Regime(_)) => {}
                    (ProfileField::Regime, LevelValue::Number(_)) => errs.push(format!(
                        "finance binding for {:?}: level {level:?} needs a regime name",
                        b.characteristic
                    )),
                    (_, LevelValue::Regime(_)) => {
                        errs.push(format!("finance binding for {:?}: level {level:?} needs a number", b.characteristic))
                    }
                    (ProfileField::WorkloadHours, LevelValue::Number(x)) if !(*x > 0.0) => errs.push(format!(
                        "finance binding for {:?}: hours for {level:?} must be positive",
                        b.characteristic
                    )),
                    (_, LevelValue::Number(x)) if !(*x >= 0.0) => errs.push(format!(
                        "finance binding for {:?}: percentage for {level:?} must be >= 0",
                        b.characteristic
                    )),
                    _ => {}
                }
            }
        }
        if self.bindings.iter().filter(|b| b.field == ProfileField::Regime).count() > 1 {
            errs.push("more than one characteristic feeds the pension regime".into());
        }
        errs
    }
}

/// Per-person profile for a category and (optionally) a characteristic
/// tuple. When counts are full-time equivalents the hours are fixed at full
/// time, since part-time work is already in the counts.
pub fn profile_for(
    category: usize,
    tuple: Option<&[u32]>,
    scale: &SalaryScale,
    finance: &FinanceConfig,
    cfg: &StateSpaceConfig,
    weighting: Weighting,
) -> Result<SalaryProfile> {
    let w = scale
        .0
        .get(&category)
        .copied()
        .ok_or_else(|| Error::Finance(format!("no base salary for category {}", cfg.categories()[category])))?;
    let mut p = SalaryProfile::full_time(w);
    p.regime = finance.default_regime;
    let Some(tuple) = tuple else { return Ok(p) };
    for b in &finance.bindings {
        let Some(pos) = cfg.characteristics().position(&b.characteristic) else { continue };
        let level = &cfg.characteristics().characteristics[pos].levels[tuple[pos] as usize];
        match (b.field, b.levels.get(level)) {
            (ProfileField::Regime, Some(LevelValue::Regime(r))) => p.regime = *r,
            (ProfileField::WorkloadHours, Some(LevelValue::Number(x))) => {
                if weighting == Weighting::Headcount {
                    p.workload_hours = *x;
                }
            }
            (ProfileField::Annuity, Some(LevelValue::Number(x))) => p.annuity = *x,
            (ProfileField::ExclusiveDedication, Some(LevelValue::Number(x))) => p.exclusive_dedication = *x,
            (ProfileField::Prohibition, Some(LevelValue::Number(x))) => p.prohibition = *x,
            (ProfileField::Availability, Some(LevelValue::Number(x))) => p.availability = *x,
            _ => {
                return Err(Error::Finance(format!(
                    "binding for {:?} has no usable value for level {level:?}",
                    b.characteristic
                )))
            }
        }
    }
    Ok(p)
}

/// Cost of one cell: head count times per-person annual cost.
pub fn cell_cost(count: f64, per_person: f64) -> f64 {
    count * per_person
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub year: usize,
    pub calendar_year: i32,
    /// `None` for the all-cells total of the year.
    pub key: Option<CellKey>,
    pub expected_cost: f64,
}

/// Sum of `(key, count, per-person cost)` contributions per key, in key
/// order, plus one total row. Contributions are added in input order.
pub fn aggregate_costs(
    year: usize,
    calendar_year: i32,
    items: impl IntoIterator<Item = (CellKey, f64, f64)>,
) -> Vec<CostRow> {
    let mut by_key: BTreeMap<CellKey, f64> = BTreeMap::new();
    for (key, count, per_person) in items {
        *by_key.entry(key).or_default() += cell_cost(count, per_person);
    }
    let total: f64 = by_key.values().sum();
    let mut rows: Vec<CostRow> =
        by_key.into_iter().map(|(key, c)| CostRow { year, calendar_year, key: Some(key), expected_cost: c }).collect();
    rows.push(CostRow { year, calendar_year, key: None, expected_cost: total });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_config;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn schedules() {
        assert_eq!(escolar_rate(2015), 0.0819);
        assert_eq!(escolar_rate(2016), 0.0823);
        assert_eq!(escolar_rate(2017), 0.0828);
        assert_eq!(escolar_rate(2030), 0.0833);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2014), 0.0492);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2019), 0.0508);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2022), 0.0525);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2029), 0.0542);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2030), 0.0558);
        assert_eq!(employer_pension_rate(PensionRegime::Ivm, 2040), 0.0575);
        assert_eq!(employer_pension_rate(PensionRegime::JupemaCapitalizacion, 2022), 0.0675);
        assert_eq!(employer_pension_rate(PensionRegime::JupemaReparto, 2050), 0.05);
    }

    #[test]
    fn g_reference_value() {
        // 600000 * (sqrt(1.0388) + 1.0388) / 0.9, evaluated to 30 digits
        // with decimal arithmetic.
        let p = SalaryProfile::full_time(100_000.0);
        let g = salary_cost_g(2016, &p, &RateSchedule::default()).unwrap();
        assert!(rel(g, 1_372_010.256_332_848_f64) < 1e-13, "{g}");
        assert!(salary_cost_g(2015, &p, &RateSchedule::default()).is_err());
    }

    #[test]
    fn g_is_linear_in_hours_and_pluses() {
        let s = RateSchedule::default();
        let full = SalaryProfile::full_time(250_000.0);
        let half = SalaryProfile { workload_hours: 20.0, ..full.clone() };
        let plus = SalaryProfile { annuity: 0.04, prohibition: 0.06, ..full.clone() };
        let g = salary_cost_g(2020, &full, &s).unwrap();
        assert!(rel(salary_cost_g(2020, &half, &s).unwrap(), g / 2.0) < 1e-15);
        assert!(rel(salary_cost_g(2020, &plus, &s).unwrap(), g * 1.10) < 1e-15);
    }

    #[test]
    fn gt_constants_only() {
        // zero rates are not on any schedule; check the constant part directly
        let floor = (1.0 + SOCIAL_SECURITY + SEVERANCE_AND_ASSOCIATIONS + AGUINALDO) * (1.0 + OCCUPATIONAL_RISK);
        assert!(rel(floor, 1.2683 * 1.0025) < 1e-15);
        let f22 = total_cost_factor(2022, PensionRegime::Ivm);
        let f35 = total_cost_factor(2035, PensionRegime::Ivm);
        let expect = ((1.0 + 0.0525 + 0.185) + 0.0833) / ((1.0 + 0.0575 + 0.185) + 0.0833);
        assert!(rel(f22 / f35, expect) < 1e-15);
        let p = SalaryProfile::full_time(1.0);
        let s = RateSchedule::default();
        assert!(rel(total_cost_gt(2022, &p, &s).unwrap() / salary_cost_g(2022, &p, &s).unwrap(), f22) < 1e-15);
    }

    #[test]
    fn worked_table_total() {
        let key = CellKey { category: 1, age_group: 0, seniority_group: 0 };
        let rows = aggregate_costs(0, 2016, [(key, 30.0, 3_227_500.0)]);
        assert_eq!(rows[0].expected_cost, 96_825_000.0);
        assert!(rel(rows[0].expected_cost, 96_824_998.0) < 1e-4);
        assert_eq!(rows.last().unwrap().key, None);
        assert_eq!(aggregate_costs(0, 2016, [(key, 0.0, 3_227_500.0)])[0].expected_cost, 0.0);
    }

    #[test]
    fn salary_scale_parsing() {
        let cfg = toy_config();
        let s = parse_salary_scale("category,base_salary\n1,500000\n2,750000.5\n".as_bytes(), &cfg).unwrap();
        assert_eq!(s.0[&2], 750_000.5);
        assert!(parse_salary_scale("category,base_salary\n9,1\n".as_bytes(), &cfg).is_err());
        assert!(parse_salary_scale("category,base_salary\n0,1\n".as_bytes(), &cfg).is_err());
        assert!(parse_salary_scale("category,base_salary\n1,-5\n".as_bytes(), &cfg).is_err());
        assert!(parse_salary_scale("category,base_salary\n1,5\n1,6\n".as_bytes(), &cfg).is_err());
        assert!(parse_salary_scale("cat,w\n1,5\n".as_bytes(), &cfg).is_err());
    }

    #[test]
    fn profiles_from_bindings() {
        let cfg = toy_config();
        let scale = SalaryScale(BTreeMap::from([(1, 100.0)]));
        let fin = FinanceConfig {
            bindings: vec![Binding {
                characteristic: "s".into(),
                field: ProfileField::Regime,
                levels: BTreeMap::from([
                    ("x".into(), LevelValue::Regime(PensionRegime::JupemaReparto)),
                    ("y".into(), LevelValue::Regime(PensionRegime::Ivm)),
                ]),
            }],
            ..Default::default()
        };
        assert!(fin.validate(&cfg).is_empty());
        let p = profile_for(1, Some(&[0]), &scale, &fin, &cfg, Weighting::Workload).unwrap();
        assert_eq!(p.regime, PensionRegime::JupemaReparto);
        assert!(profile_for(2, None, &scale, &fin, &cfg, Weighting::Workload).is_err());

        let hours = FinanceConfig {
            bindings: vec![Binding {
                characteristic: "s".into(),
                field: ProfileField::WorkloadHours,
                levels: BTreeMap::from([
                    ("x".into(), LevelValue::Number(20.0)),
                    ("y".into(), LevelValue::Number(40.0)),
                ]),
            }],
            ..Default::default()
        };
        let fte = profile_for(1, Some(&[0]), &scale, &hours, &cfg, Weighting::Workload).unwrap();
        assert_eq!(fte.workload_hours, 40.0);
        let heads = profile_for(1, Some(&[0]), &scale, &hours, &cfg, Weighting::Headcount).unwrap();
        assert_eq!(heads.workload_hours, 20.0);

        let broken = FinanceConfig {
            bindings: vec![Binding {
                characteristic: "t".into(),
                field: ProfileField::Annuity,
                levels: BTreeMap::new(),
            }],
            ..Default::default()
        };
        assert_eq!(broken.validate(&cfg).len(), 1);
    }
}
