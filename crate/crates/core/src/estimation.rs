//! Fitting every probability object of the model from a [`CountsCube`]:
//! the initial distribution, monthly category transitions and their annual
//! counterparts, the yearly membership probabilities, the category
//! distribution of hires, and the per-cell characteristic distributions.
//!
//! All estimators are ratio averages: a ratio is formed per month (or per
//! year) and the ratios are averaged over the periods in which the
//! denominator is positive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{CellKey, CountsCube};
use crate::matrix::SquareMatrix;
use crate::state_model::{CharacteristicTuple, StateSpaceConfig};

/// Rows and totals are renormalised when they drift further than this from 1.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-12;
const POSITIVE: f64 = 1e-12;

/// Distribution of the month (1..=12) at which a category is first reached
/// within a year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimePmf {
    shared: [f64; 12],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    by_category: BTreeMap<usize, [f64; 12]>,
}

impl Default for StoppingTimePmf {
    fn default() -> Self {
        Self::uniform()
    }
}

fn check_pmf(p: &[f64; 12]) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Config(vec![format!("stopping-time pmf has a negative entry: {p:?}")]));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(vec![format!("stopping-time pmf sums to {s}, not 1")]));
    }
    Ok(())
}

impl StoppingTimePmf {
    pub fn uniform() -> Self {
        Self { shared: [1.0 / 12.0; 12], by_category: BTreeMap::new() }
    }

    pub fn new(shared: [f64; 12]) -> Result<Self> {
        check_pmf(&shared)?;
        Ok(Self { shared, by_category: BTreeMap::new() })
    }

    /// Override the pmf for one target (in-system) category.
    pub fn with_category(mut self, category: usize, pmf: [f64; 12]) -> Result<Self> {
        check_pmf(&pmf)?;
        self.by_category.insert(category, pmf);
        Ok(self)
    }

    pub fn for_category(&self, category: usize) -> &[f64; 12] {
        self.by_category.get(&category).unwrap_or(&self.shared)
    }

    pub fn is_shared(&self) -> bool {
        self.by_category.is_empty()
    }
}

/// Probability of each dense (category, age, seniority) cell in the base year.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    pub probs: Vec<f64>,
}

impl InitialDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Monthly category transitions over in-system categories, one matrix per
/// (age group, seniority group). Matrix index `i` is category `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyTransitionSet {
    pub matrices: Vec<SquareMatrix>,
    /// (group pair, category) rows with no usable month; filled with "stay".
    pub unobserved: Vec<(usize, usize)>,
    /// (group pair, category, |row sum - 1| before renormalisation)
    pub renormalized: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnualTransitionSet {
    pub matrices: Vec<SquareMatrix>,
}

/// Q(1): probability of belonging to the system next year, per (group pair,
/// category) with category 0 = out of system (i.e. being hired).
#[derive(Debug, Clone, PartialEq)]
pub struct EntryProbabilitySet {
    pub enter: Vec<Vec<f64>>,
    pub unobserved: Vec<(usize, usize)>,
}

impl EntryProbabilitySet {
    /// Q(r) for r in {0, 1}; zero for anything else.
    pub fn q(&self, group: usize, category: usize, r: u8) -> f64 {
        let q1 = self.enter[group][category];
        match r {
            1 => q1,
            0 => 1.0 - q1,
            _ => 0.0,
        }
    }
}

/// Category distribution of people joining from outside the system, per
/// group pair (the out-of-system row of the annual transition law).
#[derive(Debug, Clone, PartialEq)]
pub struct EntryCategorySet {
    pub dists: Vec<Vec<f64>>,
    pub unobserved: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CharacteristicDistributionSet {
    pub dists: BTreeMap<CellKey, BTreeMap<CharacteristicTuple, f64>>,
}

impl CharacteristicDistributionSet {
    /// `None` for cells that were never populated (no split available).
    pub fn get(&self, key: &CellKey) -> Option<&BTreeMap<CharacteristicTuple, f64>> {
        self.dists.get(key).filter(|d| !d.is_empty())
    }
}

/// Average of the monthly cell counts over the last twelve months of the
/// panel (months -11..=0), divided by the total population.
pub fn estimate_initial_distribution(
    cube: &CountsCube,
    cfg: &StateSpaceConfig,
    total_population: f64,
) -> Result<InitialDistribution> {
    if cube.months.len() < 12 {
        return Err(Error::Estimation(format!(
            "need at least 12 months to average the initial distribution, panel has {}",
            cube.months.len()
        )));
    }
    if !cube.has_reserve() {
        return Err(Error::Estimation("initial distribution needs the reserve population".into()));
    }
    if !(total_population > 0.0) {
        return Err(Error::Estimation(format!("total population must be positive, got {total_population}")));
    }
    let window: Vec<usize> = (0..cube.months.len()).filter(|&s| cube.months[s].relative >= -11).collect();
    let k = window.len() as f64;
    let mut probs = vec![0.0; cfg.n_cells()];
    for &s in &window {
        let m = &cube.months[s];
        for (&idx, &w) in &m.cells {
            probs[idx] += w;
        }
        for (i, &mass) in m.reserve_by_age.iter().enumerate() {
            let age = cfg.age_min() + i as i32;
            let feasible: Vec<i32> = cfg.feasible_seniorities(age).collect();
            let share = mass / feasible.len() as f64;
            for a in feasible {
                probs[cfg.cell_index(&crate::state_model::Triple::new(0, age, a))] += share;
            }
        }
    }
    for p in &mut probs {
        *p /= k * total_population;
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Estimation(format!(
            "panel mass over the averaging window is {} people but the total population is {total_population}",
            total * total_population
        )));
    }
    if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(InitialDistribution { probs })
}

pub fn estimate_monthly_transitions(cube: &CountsCube, cfg: &StateSpaceConfig) -> Result<MonthlyTransitionSet> {
    let n = cfg.n_in_system();
    let groups = cfg.n_group_pairs();
    let mut sums = vec![SquareMatrix::zeros(n); groups];
    let mut used = vec![vec![0usize; n]; groups];
    let mut any = false;

    for (s, m) in cube.months.iter().enumerate() {
        let Some(flows) = &m.flows else { continue };
        any = true;
        let mass = cube.group_mass(s, cfg);
        // (group, from) -> (numerators over in-system targets, exits)
        let mut rows: BTreeMap<(usize, usize), (Vec<f64>, f64)> = BTreeMap::new();
        for (k, &w) in flows {
            let g = cfg.group_index(k.age_group, k.seniority_group);
            let row = rows.entry((g, k.from)).or_insert_with(|| (vec![0.0; n], 0.0));
            if k.to == 0 {
                row.1 += w;
            } else {
                row.0[k.to - 1] += w;
            }
        }
        for ((g, from), (num, exits)) in rows {
            let (ag, sg) = (g / cfg.n_seniority_groups(), g % cfg.n_seniority_groups());
            let total =
                mass.get(&CellKey { category: from, age_group: ag, seniority_group: sg }).copied().unwrap_or(0.0);
            let denom = total - exits;
            if denom <= POSITIVE {
                continue;
            }
            let acc = sums[g].row_mut(from - 1);
            for (a, v) in acc.iter_mut().zip(&num) {
                *a += v / denom;
            }
            used[g][from - 1] += 1;
        }
    }
    if !any {
        return Err(Error::Estimation("no pair of consecutive months in the panel".into()));
    }

    let mut unobserved = Vec::new();
    let mut renormalized = Vec::new();
    for g in 0..groups {
        for r in 0..n {
            let row = sums[g].row_mut(r);
            if used[g][r] == 0 {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[r] = 1.0;
                unobserved.push((g, r + 1));
                continue;
            }
            let k = used[g][r] as f64;
            row.iter_mut().for_each(|v| *v /= k);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > RENORMALIZE_TOLERANCE {
                log::debug!("monthly row (group {g}, category {}) summed to {s}; renormalised", r + 1);
                renormalized.push((g, r + 1, (s - 1.0).abs()));
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    Ok(MonthlyTransitionSet { matrices: sums, unobserved, renormalized })
}

/// Annual law from the monthly one: `P(r, l) = sum_t p_t(l) * (P~^t)(r, l)`
/// for t = 1..=12, i.e. the category held at the month the target is first
/// reached, averaged over the stopping-time distribution.
pub fn annualize_transitions(monthly: &MonthlyTransitionSet, pmf: &StoppingTimePmf) -> AnnualTransitionSet {
    let matrices = monthly.matrices.iter().map(|m| annualize_matrix(m, pmf)).collect();
    AnnualTransitionSet { matrices }
}

/// One matrix. `pmf` category overrides are looked up by in-system category
/// (`column + 1`).
pub fn annualize_matrix(monthly: &SquareMatrix, pmf: &StoppingTimePmf) -> SquareMatrix {
    let n = monthly.dim();
    let mut out = SquareMatrix::zeros(n);
    let mut power = monthly.clone();
    for t in 0..12 {
        if t > 0 {
            power = power.mul(monthly);
        }
        for r in 0..n {
            for l in 0..n {
                let p = pmf.for_category(l + 1)[t];
                out.set(r, l, out.get(r, l) + p * power.get(r, l));
            }
        }
    }
    if !pmf.is_shared() {
        for r in 0..n {
            let s = out.row_sum(r);
            if s > 0.0 && (s - 1.0).abs() > RENORMALIZE_TOLERANCE {
                out.row_mut(r).iter_mut().for_each(|v| *v /= s);
            }
        }
    }
    out
}

/// Yearly membership probabilities.
///
/// For in-system categories: share of the December population still present
/// in the following year. For the out-of-system category: hires over the
/// December reserve pool, pooled across seniority groups within an age group
/// because reserve seniorities are an even split rather than observed.
pub fn estimate_entry_probabilities(cube: &CountsCube, cfg: &StateSpaceConfig) -> Result<EntryProbabilitySet> {
    if cube.years.is_empty() {
        return Err(Error::Estimation(
            "no observed year transition (needs a December followed by the next year)".into(),
        ));
    }
    let groups = cfg.n_group_pairs();
    let nc = cfg.n_categories();
    let mut sums = vec![vec![0.0; nc]; groups];
    let mut used = vec![vec![0usize; nc]; groups];

    for y in &cube.years {
        for (k, t) in &y.retention {
            let denom = t.stayed + t.left;
            if denom > POSITIVE {
                let g = cfg.group_index(k.age_group, k.seniority_group);
                sums[g][k.category] += t.stayed / denom;
                used[g][k.category] += 1;
            }
        }
        if y.reserve_pool.is_empty() {
            continue;
        }
        for ag in 0..cfg.n_age_groups() {
            let pool: f64 =
                (0..cfg.n_seniority_groups()).map(|sg| y.reserve_pool.get(&(ag, sg)).copied().unwrap_or(0.0)).sum();
            if pool <= POSITIVE {
                continue;
            }
            let hires: f64 =
                (0..cfg.n_seniority_groups()).map(|sg| y.hires.get(&(ag, sg)).copied().unwrap_or(0.0)).sum();
            let ratio = (hires / pool).min(1.0);
            for sg in 0..cfg.n_seniority_groups() {
                let g = cfg.group_index(ag, sg);
                sums[g][0] += ratio;
                used[g][0] += 1;
            }
        }
    }

    let mut unobserved = Vec::new();
    for g in 0..groups {
        for c in 0..nc {
            if used[g][c] == 0 {
                sums[g][c] = 0.0;
                unobserved.push((g, c));
            } else {
                sums[g][c] /= used[g][c] as f64;
            }
        }
    }
    Ok(EntryProbabilitySet { enter: sums, unobserved })
}

/// Category mix of hires, pooled across seniority groups within an age group
/// (same reason as the out-of-system entry probability). Groups with no hire
/// ever observed get a uniform mix; their entry probability is 0 anyway.
pub fn estimate_entry_categories(cube: &CountsCube, cfg: &StateSpaceConfig) -> EntryCategorySet {
    let n = cfg.n_in_system();
    let nsg = cfg.n_seniority_groups();
    let mut by_age = vec![(vec![0.0; n], 0usize); cfg.n_age_groups()];
    for y in &cube.years {
        for (ag, acc) in by_age.iter_mut().enumerate() {
            let mut counts = vec![0.0; n];
            for (&(a, _, l), &w) in &y.hire_categories {
                if a == ag {
                    counts[l - 1] += w;
                }
            }
            let total: f64 = counts.iter().sum();
            if total > POSITIVE {
                acc.0.iter_mut().zip(&counts).for_each(|(s, c)| *s += c / total);
                acc.1 += 1;
            }
        }
    }
    let mut dists = Vec::with_capacity(cfg.n_group_pairs());
    let mut unobserved = Vec::new();
    for (ag, (sum, used)) in by_age.iter().enumerate() {
        let dist: Vec<f64> = if *used == 0 {
            vec![1.0 / n.max(1) as f64; n]
        } else {
            let mut d: Vec<f64> = sum.iter().map(|v| v / *used as f64).collect();
            let s: f64 = d.iter().sum();
            if (s - 1.0).abs() > RENORMALIZE_TOLERANCE {
                d.iter_mut().for_each(|v| *v /= s);
            }
            d
        };
        for sg in 0..nsg {
            if *used == 0 {
                unobserved.push(cfg.group_index(ag, sg));
            }
            dists.push(dist.clone());
        }
    }
    EntryCategorySet { dists, unobserved }
}

/// Monthly share of each characteristic tuple within its (category, age
/// group, seniority group) cell, averaged over months where the cell is
/// populated.
pub fn estimate_characteristic_distribution(cube: &CountsCube) -> CharacteristicDistributionSet {
    let mut sums: BTreeMap<CellKey, (BTreeMap<CharacteristicTuple, f64>, usize)> = BTreeMap::new();
    for m in &cube.months {
        for (key, tuples) in &m.characteristics {
            let total: f64 = tuples.values().sum();
            if total <= POSITIVE {
                continue;
            }
            let acc = sums.entry(*key).or_default();
            for (t, w) in tuples {
                *acc.0.entry(t.clone()).or_default() += w / total;
            }
            acc.1 += 1;
        }
    }
    let dists = sums
        .into_iter()
        .map(|(key, (mut d, used))| {
            d.values_mut().for_each(|v| *v /= used as f64);
            let s: f64 = d.values().sum();
            if (s - 1.0).abs() > RENORMALIZE_TOLERANCE {
                d.values_mut().for_each(|v| *v /= s);
            }
            (key, d)
        })
        .collect();
    CharacteristicDistributionSet { dists }
}
