//! Exact forward distributions of the (category, age, seniority) chain and
//! the expected populations derived from them.

use std::io::Write;

use crate::error::{Error, Result};
use crate::ingestion::CellKey;
use crate::model::FittedModel;
use crate::state_model::{in_system_indicator, OverflowPolicy, StateSpaceConfig, Triple};

/// Probability over dense cells at projection year `year`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleDistribution {
    pub year: usize,
    pub probs: Vec<f64>,
}

impl TripleDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Probability of moving from category `c0` to in-system category `c1`
/// within the source group `g`, before the membership draw.
fn category_law(model: &FittedModel, c0: usize, g: usize, c1: usize) -> f64 {
    if c0 == 0 {
        model.entry_categories.dists[g][c1 - 1]
    } else {
        model.annual.matrices[g].get(c0 - 1, c1 - 1)
    }
}

/// Weight of the move `c0 -> c1` out of a source cell in group `g`,
/// ignoring ages and seniorities.
fn move_weight(model: &FittedModel, c0: usize, g: usize, c1: usize) -> f64 {
    if c1 == 0 {
        model.entry.q(g, c0, 0)
    } else {
        category_law(model, c0, g, c1) * model.entry.q(g, c0, 1)
    }
}

/// One-year transition probability between two triples. Parameters come
/// from the groups of `from`. Age must go up by exactly one; seniority goes
/// up by one when `to` is in the system and stays put otherwise.
pub fn one_step_triple_probability(from: &Triple, to: &Triple, model: &FittedModel) -> f64 {
    let cfg = &model.config;
    if to.age != from.age + 1 {
        return 0.0;
    }
    if to.seniority - from.seniority != i32::from(in_system_indicator(to.category)) {
        return 0.0;
    }
    let (ag, sg) = cfg.locate_groups(from);
    move_weight(model, from.category, cfg.group_index(ag, sg), to.category)
}

fn overflow_check(d: &[f64], model: &FittedModel) -> Result<()> {
    let cfg = &model.config;
    let top_age = cfg.age_max() - 1;
    let top_sen = cfg.seniority_max() - 1;
    for (i, &m) in d.iter().enumerate() {
        if m <= 0.0 {
            continue;
        }
        let t = cfg.cell_triple(i);
        if t.age == top_age {
            return Err(Error::Horizon(format!(
                "probability {m:e} at the top age {top_age} (category {}, seniority {}) would leave the age range; \
                 shorten the horizon, widen the ages, or use overflow = \"absorb\"",
                cfg.categories()[t.category],
                t.seniority
            )));
        }
        if t.seniority == top_sen {
            let (ag, sg) = cfg.locate_groups(&t);
            let q1 = model.entry.q(cfg.group_index(ag, sg), t.category, 1);
            if m * q1 > 0.0 {
                return Err(Error::Horizon(format!(
                    "probability {:e} at the top seniority {top_sen} (category {}, age {}) would leave the seniority range; \
                     use overflow = \"absorb\" to keep it in the last bucket",
                    m * q1,
                    cfg.categories()[t.category],
                    t.age
                )));
            }
        }
    }
    Ok(())
}

/// Mass arriving at one target cell, summed over sources in ascending
/// (category, age, seniority) order.
fn gather(idx: usize, d: &[f64], model: &FittedModel, absorb: bool) -> f64 {
    let cfg = &model.config;
    let to = cfg.cell_triple(idx);
    let top_age = cfg.age_max() - 1;
    let top_sen = cfg.seniority_max() - 1;

    let mut ages = [i32::MIN; 2];
    if to.age > cfg.age_min() {
        ages[0] = to.age - 1;
    }
    if absorb && to.age == top_age {
        ages[1] = top_age;
    }
    let mut sens = [i32::MIN; 2];
    if to.category == 0 {
        sens[0] = to.seniority;
    } else {
        if to.seniority > 0 {
            sens[0] = to.seniority - 1;
        }
        if absorb && to.seniority == top_sen {
            sens[1] = top_sen;
        }
    }

    let mut acc = 0.0;
    for c0 in 0..cfg.n_categories() {
        for &e0 in ages.iter().filter(|&&e| e != i32::MIN) {
            for &a0 in sens.iter().filter(|&&a| a != i32::MIN) {
                let from = Triple::new(c0, e0, a0);
                let m = d[cfg.cell_index(&from)];
                if m == 0.0 {
                    continue;
                }
                let (ag, sg) = cfg.locate_groups(&from);
                acc += m * move_weight(model, c0, cfg.group_index(ag, sg), to.category);
            }
        }
    }
    acc
}

/// One year forward. Under the strict overflow policy any mass that would
/// age past the top age or accrue seniority past the top seniority is an
/// error; under `absorb` it stays in the last bucket.
pub fn propagate_distribution(d: &TripleDistribution, model: &FittedModel) -> Result<TripleDistribution> {
    let cfg = &model.config;
    let absorb = cfg.overflow() == OverflowPolicy::Absorb;
    if !absorb {
        overflow_check(&d.probs, model)?;
    }
    let n = cfg.n_cells();
    #[cfg(feature = "parallel")]
    let probs: Vec<f64> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(|i| gather(i, &d.probs, model, absorb)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let probs: Vec<f64> = (0..n).map(|i| gather(i, &d.probs, model, absorb)).collect();
    Ok(TripleDistribution { year: d.year + 1, probs })
}

/// The model's initial distribution as year 0.
pub fn initial_distribution(model: &FittedModel) -> TripleDistribution {
    TripleDistribution { year: 0, probs: model.initial.probs.clone() }
}

/// Distributions for years `0..=n`.
pub fn distributions_through(model: &FittedModel, n: usize) -> Result<Vec<TripleDistribution>> {
    check_horizon(&model.initial.probs, &model.config, n)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(initial_distribution(model));
    for _ in 0..n {
        let next = propagate_distribution(out.last().expect("non-empty"), model)?;
        out.push(next);
    }
    Ok(out)
}

pub fn distribution_at_year(model: &FittedModel, n: usize) -> Result<TripleDistribution> {
    Ok(distributions_through(model, n)?.pop().expect("non-empty"))
}

/// Under the strict policy, every populated age must still be inside the
/// range after `n` birthdays.
pub fn check_horizon(probs: &[f64], cfg: &StateSpaceConfig, n: usize) -> Result<()> {
    if cfg.overflow() == OverflowPolicy::Absorb {
        return Ok(());
    }
    let oldest = probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| cfg.cell_triple(i).age).max();
    if let Some(oldest) = oldest {
        if i64::from(oldest) + n as i64 >= i64::from(cfg.age_max()) {
            return Err(Error::Horizon(format!(
                "a {n}-year horizon ages the oldest populated age {oldest} past the range end {}; \
                 shorten the horizon or use overflow = \"absorb\"",
                cfg.age_max()
            )));
        }
    }
    Ok(())
}

/// P^n per (category, age group, seniority group), indexed
/// `category * n_group_pairs + group_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProbabilityTable {
    pub year: usize,
    pub n_groups: usize,
    pub cells: Vec<f64>,
}

impl GroupProbabilityTable {
    pub fn get(&self, key: &CellKey, cfg: &StateSpaceConfig) -> f64 {
        self.cells[key.category * self.n_groups + cfg.group_index(key.age_group, key.seniority_group)]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn keys<'a>(&'a self, cfg: &'a StateSpaceConfig) -> impl Iterator<Item = (CellKey, f64)> + 'a {
        let nsg = cfg.n_seniority_groups();
        self.cells.iter().enumerate().map(move |(i, &p)| {
            let (c, g) = (i / self.n_groups, i % self.n_groups);
            (CellKey { category: c, age_group: g / nsg, seniority_group: g % nsg }, p)
        })
    }
}

pub fn group_probabilities(d: &TripleDistribution, cfg: &StateSpaceConfig) -> GroupProbabilityTable {
    let n_groups = cfg.n_group_pairs();
    let mut cells = vec![0.0; cfg.n_categories() * n_groups];
    for (i, &p) in d.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let t = cfg.cell_triple(i);
        let (ag, sg) = cfg.locate_groups(&t);
        cells[t.category * n_groups + cfg.group_index(ag, sg)] += p;
    }
    GroupProbabilityTable { year: d.year, n_groups, cells }
}

/// One output line: an aggregate cell, or one characteristic tuple of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub year: usize,
    pub key: CellKey,
    /// `None` for the unsplit aggregate.
    pub tuple: Option<Vec<u32>>,
    pub probability: f64,
    pub expected_count: f64,
}

/// Expected counts `I0 * P^n` per cell, followed (for in-system cells) by
/// the characteristic split `I0 * P^n * R`. Populated cells whose split is
/// unknown get only the aggregate row; their count is returned alongside.
pub fn expected_populations(table: &GroupProbabilityTable, model: &FittedModel) -> (Vec<ProjectionRow>, usize) {
    let cfg = &model.config;
    let i0 = model.total_population;
    let split = !cfg.characteristics().is_empty();
    let mut rows = Vec::new();
    let mut unsplittable = 0;
    for (key, p) in table.keys(cfg) {
        rows.push(ProjectionRow { year: table.year, key, tuple: None, probability: p, expected_count: i0 * p });
        if !split || key.category == 0 {
            continue;
        }
        match model.characteristics.get(&key) {
            Some(r) => {
                for (tuple, &share) in r {
                    rows.push(ProjectionRow {
                        year: table.year,
                        key,
                        tuple: Some(tuple.clone()),
                        probability: p * share,
                        expected_count: i0 * p * share,
                    });
                }
            }
            None if p > 0.0 => unsplittable += 1,
            None => {}
        }
    }
    (rows, unsplittable)
}

pub const PROJECTION_HEADER: [&str; 7] =
    ["year", "category", "age_group", "seniority_group", "characteristic_tuple", "probability", "expected_count"];

/// `# `-prefixed lines written ahead of a CSV header.
pub fn write_comment_lines<W: Write>(out: &mut W, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        writeln!(out, "# {l}")?;
    }
    Ok(())
}

pub(crate) fn tuple_label(cfg: &StateSpaceConfig, tuple: &Option<Vec<u32>>) -> String {
    match tuple {
        Some(t) => cfg.characteristics().encode(t),
        None => "*".into(),
    }
}

pub fn write_projection_csv<W: Write>(
    out: W,
    rows: &[ProjectionRow],
    cfg: &StateSpaceConfig,
    comments: &[String],
) -> Result<()> {
    let mut out = out;
    write_comment_lines(&mut out, comments).map_err(|e| Error::io("writing projection", e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Model(format!("writing projection CSV: {e}"));
    w.write_record(PROJECTION_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            cfg.categories()[r.key.category].clone(),
            r.key.age_group.to_string(),
            r.key.seniority_group.to_string(),
            tuple_label(cfg, &r.tuple),
            r.probability.to_string(),
            r.expected_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("writing projection", e))?;
    Ok(())
}
