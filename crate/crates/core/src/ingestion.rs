//! Monthly panel ingestion: record parsing, workload-weighted count cubes,
//! month-to-month flows, yearly retention/hiring tallies, and the synthetic
//! out-of-system reserve population.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state_model::{CharacteristicTuple, StateSpaceConfig, Triple};

/// Calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month));
        Self { year, month }
    }

    /// Months since year 0.
    pub fn ordinal(self) -> i32 {
        self.year * 12 + self.month as i32 - 1
    }

    pub fn from_ordinal(o: i32) -> Self {
        Self { year: o.div_euclid(12), month: (o.rem_euclid(12) + 1) as u32 }
    }

    pub fn december(year: i32) -> Self {
        Self { year, month: 12 }
    }
}

impl std::str::FromStr for YearMonth {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (y, m) = s.trim().split_once('-').ok_or_else(|| format!("month {s:?} is not YYYY-MM"))?;
        if y.len() != 4 || m.len() != 2 {
            return Err(format!("month {s:?} is not YYYY-MM"));
        }
        let year: i32 = y.parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = m.parse().map_err(|_| format!("bad month in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month {month} out of 1..=12 in {s:?}"));
        }
        Ok(Self { year, month })
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// One person observed in one month. Only in-system people appear in the panel.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyRecord {
    /// 0 for the latest month in the panel, -1 for the one before, ...
    pub month: i32,
    pub calendar: YearMonth,
    pub person_id: String,
    pub category: usize,
    pub age: i32,
    pub seniority: i32,
    /// Hours per week.
    pub workload: f64,
    pub characteristics: CharacteristicTuple,
}

impl MonthlyRecord {
    pub fn triple(&self) -> Triple {
        Triple::new(self.category, self.age, self.seniority)
    }
}

const BASE_COLUMNS: [&str; 6] = ["month", "person_id", "category", "age", "seniority", "workload"];

/// Parse the records CSV. Row numbers in errors are 1-based file lines
/// (the header is line 1).
pub fn parse_records<R: Read>(reader: R, cfg: &StateSpaceConfig) -> Result<Vec<MonthlyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers =
        rdr.headers().map_err(|e| Error::Record { row: 1, message: format!("unreadable header: {e}") })?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let mut missing = Vec::new();
    let base: Vec<usize> = BASE_COLUMNS
        .iter()
        .filter_map(|n| {
            let p = col(n);
            if p.is_none() {
                missing.push(n.to_string());
            }
            p
        })
        .collect();
    let chars = cfg.characteristics();
    let char_cols: Vec<usize> = chars
        .characteristics
        .iter()
        .filter_map(|c| {
            let p = col(&c.name);
            if p.is_none() {
                missing.push(c.name.clone());
            }
            p
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Record { row: 1, message: format!("header is missing column(s): {}", missing.join(", ")) });
    }
    let [c_month, c_person, c_cat, c_age, c_sen, c_work] = base[..] else { unreachable!() };

    let mut out = Vec::new();
    let mut seen: HashMap<(String, i32), usize> = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| Error::Record { row: line, message };
        let row = row.map_err(|e| bad(format!("malformed row: {e}")))?;
        if row.len() != headers.len() {
            return Err(bad(format!("expected {} fields, found {}", headers.len(), row.len())));
        }
        let calendar: YearMonth = row[c_month].parse().map_err(bad)?;
        let person_id = row[c_person].to_string();
        if person_id.is_empty() {
            return Err(bad("empty person_id".into()));
        }
        let code = &row[c_cat];
        let category = cfg.category_index(code).ok_or_else(|| bad(format!("unknown category code {code:?}")))?;
        if category == 0 {
            return Err(bad(format!(
                "category {code:?} is the out-of-system category; panels only list in-system people"
            )));
        }
        let age: i32 = row[c_age].parse().map_err(|_| bad(format!("bad age {:?}", &row[c_age])))?;
        let seniority: i32 = row[c_sen].parse().map_err(|_| bad(format!("bad seniority {:?}", &row[c_sen])))?;
        let workload: f64 = row[c_work].parse().map_err(|_| bad(format!("bad workload {:?}", &row[c_work])))?;
        if !(workload > 0.0) || !workload.is_finite() {
            return Err(bad(format!("workload must be positive, got {workload}")));
        }
        if !cfg.age_in_range(age) {
            return Err(bad(format!("age {age} outside [{}, {})", cfg.age_min(), cfg.age_max())));
        }
        if !cfg.seniority_in_range(seniority) {
            return Err(bad(format!("seniority {seniority} outside [0, {})", cfg.seniority_max())));
        }
        if !cfg.feasible(age, seniority) {
            return Err(bad(format!(
                "infeasible age/seniority pair ({age}, {seniority}) with working_age_min {}",
                cfg.working_age_min()
            )));
        }
        let mut tuple = Vec::with_capacity(char_cols.len());
        for (k, &cc) in char_cols.iter().enumerate() {
            let level = &row[cc];
            let idx = chars.level_index(k, level).ok_or_else(|| {
                bad(format!("unknown level {level:?} for characteristic {:?}", chars.characteristics[k].name))
            })?;
            tuple.push(idx);
        }
        if let Some(prev) = seen.insert((person_id.clone(), calendar.ordinal()), line) {
            return Err(bad(format!(
                "duplicate record for person {person_id:?} in {calendar} (first seen on line {prev})"
            )));
        }
        out.push(MonthlyRecord {
            month: 0,
            calendar,
            person_id,
            category,
            age,
            seniority,
            workload,
            characteristics: tuple,
        });
    }
    if let Some(latest) = out.iter().map(|r| r.calendar.ordinal()).max() {
        for r in &mut out {
            r.month = r.calendar.ordinal() - latest;
        }
    }
    Ok(out)
}

/// How each record contributes to counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// workload / full-time hours (full-time equivalents).
    #[default]
    Workload,
    /// Every record counts 1.
    Headcount,
}

/// (category, age group, seniority group)
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub category: usize,
    pub age_group: usize,
    pub seniority_group: usize,
}

/// Month-to-month movement between categories inside one (age group,
/// seniority group); `to == 0` is an exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    pub age_group: usize,
    pub seniority_group: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct MonthSlice {
    pub relative: i32,
    pub calendar: YearMonth,
    /// In-system weighted counts keyed by dense cell index.
    pub cells: BTreeMap<usize, f64>,
    /// Flows into the next calendar month; `None` when that month is not in the panel.
    pub flows: Option<BTreeMap<FlowKey, f64>>,
    pub characteristics: BTreeMap<CellKey, BTreeMap<CharacteristicTuple, f64>>,
    /// Out-of-system mass per age (index `age - age_min`); empty until
    /// [`build_reserve`] runs.
    pub reserve_by_age: Vec<f64>,
}

/// Year-over-year membership: of those in the system in December of `year - 1`,
/// how many appear at some point in `year`; and who joins during `year`.
#[derive(Debug, Clone, Default)]
pub struct YearTally {
    pub year: i32,
    /// Keyed by the December cell (in-system categories only).
    pub retention: BTreeMap<CellKey, Tally>,
    /// Hired weight keyed by the hire's source (age group, seniority group).
    pub hires: BTreeMap<(usize, usize), f64>,
    /// Hired weight keyed by source (age group, seniority group, category entered).
    pub hire_categories: BTreeMap<(usize, usize, usize), f64>,
    /// December out-of-system mass per (age group, seniority group); filled by
    /// [`build_reserve`].
    pub reserve_pool: BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    /// Present again the following year (xi = 1).
    pub stayed: f64,
    /// Absent the whole following year (xi = 0).
    pub left: f64,
}

#[derive(Debug, Clone)]
pub struct CountsCube {
    pub months: Vec<MonthSlice>,
    pub years: Vec<YearTally>,
    pub weighting: Weighting,
    reserve_total: Option<f64>,
}

impl CountsCube {
    pub fn has_reserve(&self) -> bool {
        self.reserve_total.is_some()
    }

    /// I0 from the reserve spec, once attached.
    pub fn total_population(&self) -> Option<f64> {
        self.reserve_total
    }

    /// Weighted mass of a cell in a month, including reserve cells (split
    /// evenly over feasible seniorities) once the reserve is built.
    pub fn cell_mass(&self, slice: usize, t: &Triple, cfg: &StateSpaceConfig) -> f64 {
        let m = &self.months[slice];
        if t.category == 0 {
            if m.reserve_by_age.is_empty() || !cfg.feasible(t.age, t.seniority) {
                return 0.0;
            }
            let k = cfg.feasible_seniorities(t.age).count() as f64;
            m.reserve_by_age[(t.age - cfg.age_min()) as usize] / k
        } else {
            m.cells.get(&cfg.cell_index(t)).copied().unwrap_or(0.0)
        }
    }

    /// Weighted in-system mass per (category, age group, seniority group) for a month.
    pub fn group_mass(&self, slice: usize, cfg: &StateSpaceConfig) -> BTreeMap<CellKey, f64> {
        let mut out = BTreeMap::new();
        for (&idx, &w) in &self.months[slice].cells {
            let t = cfg.cell_triple(idx);
            let (age_group, seniority_group) = cfg.locate_groups(&t);
            *out.entry(CellKey { category: t.category, age_group, seniority_group }).or_default() += w;
        }
        out
    }

    pub fn slice_of(&self, calendar: YearMonth) -> Option<usize> {
        self.months.binary_search_by_key(&calendar.ordinal(), |m| m.calendar.ordinal()).ok()
    }

    pub fn latest(&self) -> Option<YearMonth> {
        self.months.last().map(|m| m.calendar)
    }
}

pub fn build_counts(records: &[MonthlyRecord], cfg: &StateSpaceConfig) -> CountsCube {
    build_counts_with(records, cfg, Weighting::Workload)
}

pub fn build_counts_with(records: &[MonthlyRecord], cfg: &StateSpaceConfig, weighting: Weighting) -> CountsCube {
    let weight = |r: &MonthlyRecord| match weighting {
        Weighting::Workload => r.workload / cfg.full_time_hours(),
        Weighting::Headcount => 1.0,
    };
    let ordinals: BTreeSet<i32> = records.iter().map(|r| r.calendar.ordinal()).collect();
    let latest = ordinals.iter().next_back().copied().unwrap_or(0);
    let slot: HashMap<i32, usize> = ordinals.iter().enumerate().map(|(i, &o)| (o, i)).collect();

    let mut months: Vec<MonthSlice> = ordinals
        .iter()
        .map(|&o| MonthSlice {
            relative: o - latest,
            calendar: YearMonth::from_ordinal(o),
            cells: BTreeMap::new(),
            flows: ordinals.contains(&(o + 1)).then(BTreeMap::new),
            characteristics: BTreeMap::new(),
            reserve_by_age: Vec::new(),
        })
        .collect();

    // person -> month ordinal -> record
    let mut people: BTreeMap<&str, BTreeMap<i32, &MonthlyRecord>> = BTreeMap::new();
    for r in records {
        people.entry(r.person_id.as_str()).or_default().insert(r.calendar.ordinal(), r);
    }

    for r in records {
        let s = &mut months[slot[&r.calendar.ordinal()]];
        let w = weight(r);
        let t = r.triple();
        *s.cells.entry(cfg.cell_index(&t)).or_default() += w;
        let (age_group, seniority_group) = cfg.locate_groups(&t);
        let key = CellKey { category: r.category, age_group, seniority_group };
        *s.characteristics.entry(key).or_default().entry(r.characteristics.clone()).or_default() += w;
    }

    for history in people.values() {
        for (&o, r) in history {
            let s = &mut months[slot[&o]];
            let Some(flows) = s.flows.as_mut() else { continue };
            let (age_group, seniority_group) = cfg.locate_groups(&r.triple());
            let to = history.get(&(o + 1)).map_or(0, |n| n.category);
            *flows.entry(FlowKey { age_group, seniority_group, from: r.category, to }).or_default() += weight(r);
        }
    }

    let mut years = Vec::new();
    let observed_years: BTreeSet<i32> = ordinals.iter().map(|&o| YearMonth::from_ordinal(o).year).collect();
    for &year in &observed_years {
        let dec = YearMonth::december(year - 1).ordinal();
        if !ordinals.contains(&dec) {
            continue;
        }
        let (lo, hi) = (YearMonth::new(year, 1).ordinal(), YearMonth::new(year, 12).ordinal());
        let mut tally = YearTally { year, ..Default::default() };
        for history in people.values() {
            let mut in_year = history.range(lo..=hi);
            let first = in_year.next().map(|(_, r)| *r);
            match history.get(&dec) {
                Some(r) => {
                    let (age_group, seniority_group) = cfg.locate_groups(&r.triple());
                    let t = tally
                        .retention
                        .entry(CellKey { category: r.category, age_group, seniority_group })
                        .or_default();
                    if first.is_some() {
                        t.stayed += weight(r);
                    } else {
                        t.left += weight(r);
                    }
                }
                None => {
                    let Some(r) = first else { continue };
                    // Ages and seniority advance in January, so the hire was one
                    // year younger and (at most) one year less senior in December.
                    let age = (r.age - 1).max(cfg.age_min());
                    let seniority = (r.seniority - 1).max(0);
                    let g = (cfg.age_group(age), cfg.seniority_group(seniority));
                    let w = weight(r);
                    *tally.hires.entry(g).or_default() += w;
                    *tally.hire_categories.entry((g.0, g.1, r.category)).or_default() += w;
                }
            }
        }
        years.push(tally);
    }

    CountsCube { months, years, weighting, reserve_total: None }
}

/// Total population I0 and its split by age.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveSpec {
    age_min: i32,
    age_totals: Vec<f64>,
}

impl ReserveSpec {
    /// `age_totals[i]` is the number of people aged `age_min + i`.
    pub fn new(cfg: &StateSpaceConfig, age_totals: Vec<f64>) -> Result<Self> {
        if age_totals.len() != cfg.n_ages() {
            return Err(Error::Reserve(format!("expected {} age totals, got {}", cfg.n_ages(), age_totals.len())));
        }
        if let Some((i, v)) = age_totals.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Reserve(format!("age {}: total {v} is negative", cfg.age_min() + i as i32)));
        }
        Ok(Self { age_min: cfg.age_min(), age_totals })
    }

    pub fn total(&self) -> f64 {
        self.age_totals.iter().sum()
    }

    pub fn at_age(&self, age: i32) -> f64 {
        self.age_totals[(age - self.age_min) as usize]
    }

    pub fn age_totals(&self) -> &[f64] {
        &self.age_totals
    }
}

/// Parse the `age,total` reserve CSV. Ages not listed get 0.
pub fn parse_reserve<R: Read>(reader: R, cfg: &StateSpaceConfig) -> Result<ReserveSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Reserve(format!("unreadable header: {e}")))?.clone();
    let (Some(ca), Some(ct)) = (headers.iter().position(|h| h == "age"), headers.iter().position(|h| h == "total"))
    else {
        return Err(Error::Reserve("header must contain `age,total`".into()));
    };
    let mut totals = vec![None; cfg.n_ages()];
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Reserve(format!("line {line}: malformed row: {e}")))?;
        let age: i32 =
            row.get(ca).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Reserve(format!("line {line}: bad age")))?;
        let total: f64 = row
            .get(ct)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Reserve(format!("line {line}: bad total")))?;
        if !cfg.age_in_range(age) {
            return Err(Error::Reserve(format!("line {line}: age {age} outside the state space")));
        }
        let slot = &mut totals[(age - cfg.age_min()) as usize];
        if slot.is_some() {
            return Err(Error::Reserve(format!("line {line}: age {age} listed twice")));
        }
        *slot = Some(total);
    }
    ReserveSpec::new(cfg, totals.into_iter().map(|t| t.unwrap_or(0.0)).collect())
}

/// Attach the out-of-system population: for every month and age,
/// N_e minus the in-system mass at that age, split evenly over the feasible
/// seniorities. Also fills each year's December reserve pool.
pub fn build_reserve(mut cube: CountsCube, reserve: &ReserveSpec, cfg: &StateSpaceConfig) -> Result<CountsCube> {
    const SLACK: f64 = 1e-9;
    for m in &mut cube.months {
        let mut in_system = vec![0.0; cfg.n_ages()];
        for (&idx, &w) in &m.cells {
            in_system[(cfg.cell_triple(idx).age - cfg.age_min()) as usize] += w;
        }
        m.reserve_by_age = in_system
            .iter()
            .enumerate()
            .map(|(i, &inside)| {
                let age = cfg.age_min() + i as i32;
                let n = reserve.at_age(age);
                let r = n - inside;
                if r < -SLACK * n.max(1.0) {
                    Err(Error::Reserve(format!(
                        "age {age} in {}: {inside} people in the system but only {n} in the population",
                        m.calendar
                    )))
                } else {
                    Ok(r.max(0.0))
                }
            })
            .collect::<Result<_>>()?;
    }
    let splits: Vec<Vec<(usize, usize)>> = (cfg.age_min()..cfg.age_max())
        .map(|e| cfg.feasible_seniorities(e).map(|a| (cfg.age_group(e), cfg.seniority_group(a))).collect())
        .collect();
    for y in &mut cube.years {
        let Some(s) =
            cube.months.binary_search_by_key(&YearMonth::december(y.year - 1).ordinal(), |m| m.calendar.ordinal()).ok()
        else {
            continue;
        };
        y.reserve_pool.clear();
        for (i, &mass) in cube.months[s].reserve_by_age.iter().enumerate() {
            let share = mass / splits[i].len() as f64;
            for &g in &splits[i] {
                *y.reserve_pool.entry(g).or_default() += share;
            }
        }
    }
    cube.reserve_total = Some(reserve.total());
    Ok(cube)
}
