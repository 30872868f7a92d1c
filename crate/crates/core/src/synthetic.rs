//! Synthetic institutions with known parameters, for testing the
//! estimators end to end and for demo data.
//!
//! A fixed universe holds `persons_per_age` people at every age. Each
//! January everybody turns a year older: the oldest leave the universe and
//! a new cohort is born at the minimum age. At the same time every person
//! draws whether they belong to the system this year from the membership
//! probability of their December cell; hires pick a category from the hire
//! mix and stayers take one monthly category step. During the year,
//! in-system people move between categories month by month. Characteristic
//! tuples are drawn afresh every month.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingestion::{CellKey, MonthlyRecord, ReserveSpec, YearMonth};
use crate::matrix::SquareMatrix;
use crate::state_model::{
    validate_config, Characteristic, CharacteristicTuple, OverflowPolicy, RawStateSpace, StateSpaceConfig, Triple,
};

#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub config: StateSpaceConfig,
    pub persons_per_age: usize,
    /// Monthly in-system transitions per group pair.
    pub monthly: Vec<SquareMatrix>,
    /// Membership probability per group pair and category (0 = hiring).
    pub enter: Vec<Vec<f64>>,
    /// Category mix of hires per group pair.
    pub hire_mix: Vec<Vec<f64>>,
    pub characteristics: BTreeMap<CellKey, BTreeMap<CharacteristicTuple, f64>>,
    pub workload_hours: f64,
}

impl SyntheticTruth {
    /// Three in-system categories with upward mobility, ages [14, 66) with a
    /// reserve group below the hiring age and a retirement group at the top,
    /// two seniority groups and two binary characteristics.
    pub fn demo(persons_per_age: usize) -> Self {
        let config = validate_config(RawStateSpace {
            categories: vec!["00".into(), "10".into(), "20".into(), "30".into()],
            out_of_system: Some("00".into()),
            age_min: 14,
            age_max: 66,
            age_groups: vec![[14, 17], [17, 30], [30, 45], [45, 58], [58, 66]],
            seniority_max: 50,
            seniority_groups: vec![[0, 10], [10, 50]],
            working_age_min: 17,
            full_time_hours: 40.0,
            overflow: OverflowPolicy::Absorb,
            characteristics: vec![
                Characteristic { name: "regime".into(), levels: vec!["ivm".into(), "jupema".into()] },
                Characteristic { name: "dedication".into(), levels: vec!["none".into(), "exclusive".into()] },
            ],
        })
        .expect("demo state space is valid");

        let retention = [0.0, 0.90, 0.93, 0.92, 0.0];
        let hiring = [0.0, 0.08, 0.05, 0.08, 0.0];
        let mixes = [
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.7, 0.25, 0.05],
            vec![0.4, 0.4, 0.2],
            vec![0.3, 0.4, 0.3],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ];
        let mut monthly = Vec::new();
        let mut enter = Vec::new();
        let mut hire_mix = Vec::new();
        for ag in 0..config.n_age_groups() {
            for sg in 0..config.n_seniority_groups() {
                let up1 = 0.010 + 0.004 * sg as f64;
                let up2 = 0.006 + 0.002 * ag as f64;
                let down = 0.002;
                let down2 = 0.003;
                monthly.push(SquareMatrix::from_row_major(
                    3,
                    vec![1.0 - up1, up1, 0.0, down, 1.0 - down - up2, up2, 0.0, down2, 1.0 - down2],
                ));
                let mut q = vec![hiring[ag]];
                for c in 1..4 {
                    q.push(if retention[ag] > 0.0 { retention[ag] - 0.01 * (c - 1) as f64 } else { 0.0 });
                }
                enter.push(q);
                hire_mix.push(mixes[ag].clone());
            }
        }
        let mut characteristics = BTreeMap::new();
        for c in 1..4 {
            for ag in 0..config.n_age_groups() {
                for sg in 0..config.n_seniority_groups() {
                    let jupema = 0.2 + 0.25 * (c - 1) as f64 + 0.1 * sg as f64;
                    let exclusive = 0.1 + 0.1 * (c - 1) as f64;
                    let mut d = BTreeMap::new();
                    for (r, pr) in [(0, 1.0 - jupema), (1, jupema)] {
                        for (x, px) in [(0, 1.0 - exclusive), (1, exclusive)] {
                            d.insert(vec![r, x], pr * px);
                        }
                    }
                    characteristics.insert(CellKey { category: c, age_group: ag, seniority_group: sg }, d);
                }
            }
        }
        Self { config, persons_per_age, monthly, enter, hire_mix, characteristics, workload_hours: 40.0 }
    }

    pub fn population(&self) -> f64 {
        (self.persons_per_age * self.config.n_ages()) as f64
    }

    pub fn reserve(&self) -> ReserveSpec {
        ReserveSpec::new(&self.config, vec![self.persons_per_age as f64; self.config.n_ages()])
            .expect("non-negative totals")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        let g = cfg.n_group_pairs();
        let n = cfg.n_in_system();
        let ok = self.monthly.len() == g
            && self.monthly.iter().all(|m| m.dim() == n)
            && self.enter.len() == g
            && self.enter.iter().all(|v| v.len() == cfg.n_categories())
            && self.hire_mix.len() == g
            && self.hire_mix.iter().all(|v| v.len() == n);
        if !ok {
            return Err(Error::Model("synthetic parameters do not match the state space".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Person {
    id: u64,
    category: usize,
    age: i32,
    seniority: i32,
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub records: Vec<MonthlyRecord>,
    pub reserve: ReserveSpec,
    /// Realised share of the population in each in-system cell, averaged
    /// over the last twelve months.
    pub realized_in_system: Vec<f64>,
    /// Realised share out of the system at each age over the same months.
    pub realized_outside_by_age: Vec<f64>,
}

fn pick<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generate `months` recorded months starting at `first` (a January), after
/// `burn_in_years` unrecorded years that bring the universe near its
/// steady state.
pub fn generate(
    truth: &SyntheticTruth,
    first: YearMonth,
    months: usize,
    burn_in_years: usize,
    seed: u64,
) -> Result<SyntheticPanel> {
    truth.validate()?;
    if first.month != 1 {
        return Err(Error::Model("synthetic panels start in January".into()));
    }
    let cfg = &truth.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = truth.persons_per_age;
    let mut next_id = 0u64;
    let mut people: Vec<Person> = Vec::with_capacity(k * cfg.n_ages());
    for age in cfg.age_min()..cfg.age_max() {
        for _ in 0..k {
            people.push(Person { id: next_id, category: 0, age, seniority: 0 });
            next_id += 1;
        }
    }
    let group = |p: &Person| {
        let (ag, sg) = cfg.locate_groups(&Triple::new(p.category, p.age, p.seniority));
        cfg.group_index(ag, sg)
    };
    let hidden = burn_in_years * 12;
    let start = first.ordinal() - hidden as i32;
    let last = first.ordinal() + months as i32 - 1;
    let i0 = truth.population();
    let mut records = Vec::new();
    let mut in_system = vec![0.0; cfg.n_cells()];
    let mut outside = vec![0.0; cfg.n_ages()];
    let n_chars = cfg.characteristics().len();

    for ord in start..=last {
        let ym = YearMonth::from_ordinal(ord);
        if ord > start {
            let january = ym.month == 1;
            for p in &mut people {
                let g = group(p);
                if january {
                    let q1 = truth.enter[g][p.category];
                    let member = rng.random::<f64>() < q1;
                    if member {
                        p.category = if p.category == 0 {
                            1 + pick(&mut rng, &truth.hire_mix[g])
                        } else {
                            1 + pick(&mut rng, truth.monthly[g].row(p.category - 1))
                        };
                        p.seniority += 1;
                    } else {
                        p.category = 0;
                    }
                    p.age += 1;
                } else if p.category > 0 {
                    p.category = 1 + pick(&mut rng, truth.monthly[g].row(p.category - 1));
                }
            }
            if january {
                people.retain(|p| p.age < cfg.age_max());
                for _ in 0..k {
                    people.push(Person { id: next_id, category: 0, age: cfg.age_min(), seniority: 0 });
                    next_id += 1;
                }
            }
        }
        if ord < first.ordinal() {
            continue;
        }
        let tail = ord > last - 12;
        for p in &people {
            if p.category == 0 {
                if tail {
                    outside[(p.age - cfg.age_min()) as usize] += 1.0;
                }
                continue;
            }
            let t = Triple::new(p.category, p.age, p.seniority);
            if !cfg.is_valid(&t) {
                return Err(Error::Model(format!("synthetic person left the state space: {t:?}")));
            }
            let (ag, sg) = cfg.locate_groups(&t);
            let tuple = if n_chars == 0 {
                Vec::new()
            } else {
                let d = &truth.characteristics[&CellKey { category: p.category, age_group: ag, seniority_group: sg }];
                let probs: Vec<f64> = d.values().copied().collect();
                d.keys().nth(pick(&mut rng, &probs)).expect("index in range").clone()
            };
            if tail {
                in_system[cfg.cell_index(&t)] += 1.0;
            }
            records.push(MonthlyRecord {
                month: ord - last,
                calendar: ym,
                person_id: format!("p{}", p.id),
                category: p.category,
                age: p.age,
                seniority: p.seniority,
                workload: truth.workload_hours,
                characteristics: tuple,
            });
        }
    }
    let window = 12.0_f64.min(months as f64);
    in_system.iter_mut().for_each(|v| *v /= window * i0);
    outside.iter_mut().for_each(|v| *v /= window * i0);
    Ok(SyntheticPanel {
        records,
        reserve: truth.reserve(),
        realized_in_system: in_system,
        realized_outside_by_age: outside,
    })
}

/// Records in the CSV layout read by the ingestion module.
pub fn write_records_csv<W: Write>(out: W, records: &[MonthlyRecord], cfg: &StateSpaceConfig) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Model(format!("writing records: {e}"));
    let mut header: Vec<String> =
        ["month", "person_id", "category", "age", "seniority", "workload"].iter().map(|s| s.to_string()).collect();
    header.extend(cfg.characteristics().characteristics.iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(err)?;
    for r in records {
        let mut row = vec![
            r.calendar.to_string(),
            r.person_id.clone(),
            cfg.categories()[r.category].clone(),
            r.age.to_string(),
            r.seniority.to_string(),
            r.workload.to_string(),
        ];
        for (k, &level) in r.characteristics.iter().enumerate() {
            row.push(cfg.characteristics().characteristics[k].levels[level as usize].clone());
        }
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("writing records", e))
}

pub fn write_reserve_csv<W: Write>(mut out: W, reserve: &ReserveSpec, cfg: &StateSpaceConfig) -> Result<()> {
    let err = |e| Error::io("writing reserve", e);
    writeln!(out, "age,total").map_err(err)?;
    for (i, t) in reserve.age_totals().iter().enumerate() {
        writeln!(out, "{},{}", cfg.age_min() + i as i32, t).map_err(err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{build_counts, build_reserve, parse_records};

    #[test]
    fn panel_is_valid_input() {
        let truth = SyntheticTruth::demo(5);
        let panel = generate(&truth, YearMonth::new(2010, 1), 24, 10, 1).unwrap();
        assert!(!panel.records.is_empty());
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &panel.records, &truth.config).unwrap();
        let parsed = parse_records(buf.as_slice(), &truth.config).unwrap();
        assert_eq!(parsed.len(), panel.records.len());
        assert_eq!(parsed[0], panel.records[0]);
        let cube = build_reserve(build_counts(&parsed, &truth.config), &panel.reserve, &truth.config).unwrap();
        assert_eq!(cube.months.len(), 24);
        let mass: f64 =
            panel.realized_in_system.iter().sum::<f64>() + panel.realized_outside_by_age.iter().sum::<f64>();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_panel() {
        let truth = SyntheticTruth::demo(3);
        let a = generate(&truth, YearMonth::new(2010, 1), 13, 5, 9).unwrap();
        let b = generate(&truth, YearMonth::new(2010, 1), 13, 5, 9).unwrap();
        assert_eq!(a.records, b.records);
    }
}
