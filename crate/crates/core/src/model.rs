//! A fitted model and its JSON file format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    annualize_transitions, estimate_characteristic_distribution, estimate_entry_categories,
    estimate_entry_probabilities, estimate_initial_distribution, estimate_monthly_transitions, AnnualTransitionSet,
    CharacteristicDistributionSet, EntryCategorySet, EntryProbabilitySet, InitialDistribution, MonthlyTransitionSet,
    StoppingTimePmf,
};
use crate::ingestion::{CellKey, CountsCube, Weighting};
use crate::matrix::SquareMatrix;
use crate::state_model::{CharacteristicTuple, StateSpaceConfig, Triple};

const FORMAT: &str = "popchain-model";
const VERSION: u32 = 1;
const ROW_TOLERANCE: f64 = 1e-9;

/// Cells and rows the estimators had to fill in for lack of data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub months: usize,
    pub year_transitions: usize,
    pub unobserved_monthly_rows: Vec<String>,
    pub renormalized_monthly_rows: Vec<String>,
    pub unobserved_entry_probabilities: Vec<String>,
    pub unobserved_entry_categories: Vec<String>,
    pub empty_characteristic_cells: Vec<String>,
}

impl FitDiagnostics {
    pub fn warnings(&self) -> usize {
        self.unobserved_monthly_rows.len()
            + self.unobserved_entry_probabilities.len()
            + self.unobserved_entry_categories.len()
            + self.empty_characteristic_cells.len()
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub config: StateSpaceConfig,
    pub total_population: f64,
    /// Calendar year of the latest panel month; projection year n is `base_year + n`.
    pub base_year: i32,
    pub weighting: Weighting,
    pub stopping_time: StoppingTimePmf,
    pub initial: InitialDistribution,
    pub monthly: MonthlyTransitionSet,
    pub annual: AnnualTransitionSet,
    pub entry: EntryProbabilitySet,
    pub entry_categories: EntryCategorySet,
    pub characteristics: CharacteristicDistributionSet,
    pub diagnostics: FitDiagnostics,
    pub manifest: Option<serde_json::Value>,
}

pub(crate) fn group_label(cfg: &StateSpaceConfig, g: usize) -> String {
    let ns = cfg.n_seniority_groups();
    format!("age {} seniority {}", cfg.age_groups()[g / ns].label(), cfg.seniority_groups()[g % ns].label())
}

/// Fit every component from a counts cube that already carries the reserve.
pub fn fit(cube: &CountsCube, cfg: &StateSpaceConfig, stopping_time: StoppingTimePmf) -> Result<FittedModel> {
    let total_population = cube
        .total_population()
        .ok_or_else(|| Error::Estimation("the reserve population has not been attached".into()))?;
    let base_year = cube.latest().ok_or_else(|| Error::Estimation("the panel has no months".into()))?.year;
    let initial = estimate_initial_distribution(cube, cfg, total_population)?;
    let monthly = estimate_monthly_transitions(cube, cfg)?;
    let annual = annualize_transitions(&monthly, &stopping_time);
    let entry = estimate_entry_probabilities(cube, cfg)?;
    let entry_categories = estimate_entry_categories(cube, cfg);
    let characteristics = estimate_characteristic_distribution(cube);

    let code = |c: usize| cfg.categories()[c].clone();
    let mut d = FitDiagnostics { months: cube.months.len(), year_transitions: cube.years.len(), ..Default::default() };
    for &(g, c) in &monthly.unobserved {
        d.unobserved_monthly_rows.push(format!("category {} {}", code(c), group_label(cfg, g)));
    }
    for &(g, c, dev) in &monthly.renormalized {
        d.renormalized_monthly_rows.push(format!("category {} {} (off by {dev:e})", code(c), group_label(cfg, g)));
    }
    for &(g, c) in &entry.unobserved {
        d.unobserved_entry_probabilities.push(format!("category {} {}", code(c), group_label(cfg, g)));
    }
    for &g in &entry_categories.unobserved {
        d.unobserved_entry_categories.push(group_label(cfg, g));
    }
    if !cfg.characteristics().is_empty() {
        for c in 1..cfg.n_categories() {
            for ag in 0..cfg.n_age_groups() {
                for sg in 0..cfg.n_seniority_groups() {
                    let key = CellKey { category: c, age_group: ag, seniority_group: sg };
                    if characteristics.get(&key).is_none() {
                        d.empty_characteristic_cells.push(format!(
                            "category {} {}",
                            code(c),
                            group_label(cfg, cfg.group_index(ag, sg))
                        ));
                    }
                }
            }
        }
    }
    if d.warnings() > 0 {
        log::warn!(
            "{} unobserved monthly rows, {} unobserved entry probabilities, {} groups without hires, {} empty characteristic cells",
            d.unobserved_monthly_rows.len(),
            d.unobserved_entry_probabilities.len(),
            d.unobserved_entry_categories.len(),
            d.empty_characteristic_cells.len()
        );
    }

    Ok(FittedModel {
        config: cfg.clone(),
        total_population,
        base_year,
        weighting: cube.weighting,
        stopping_time,
        initial,
        monthly,
        annual,
        entry,
        entry_categories,
        characteristics,
        diagnostics: d,
        manifest: None,
    })
}

#[derive(Serialize, Deserialize)]
struct GroupMatrix {
    age_group: usize,
    seniority_group: usize,
    matrix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GroupVector {
    age_group: usize,
    seniority_group: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TupleShare {
    tuple: CharacteristicTuple,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct CellDistribution {
    category: usize,
    age_group: usize,
    seniority_group: usize,
    shares: Vec<TupleShare>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    state_space: StateSpaceConfig,
    total_population: f64,
    base_year: i32,
    weighting: Weighting,
    stopping_time: StoppingTimePmf,
    /// Nonzero cells as (category, age, seniority, probability).
    initial_distribution: Vec<(usize, i32, i32, f64)>,
    monthly_transitions: Vec<GroupMatrix>,
    annual_transitions: Vec<GroupMatrix>,
    /// Probability of being in the system next year, indexed by category.
    entry_probabilities: Vec<GroupVector>,
    /// Category mix of hires, indexed by in-system category minus one.
    entry_categories: Vec<GroupVector>,
    characteristics: Vec<CellDistribution>,
    diagnostics: FitDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

impl FittedModel {
    /// Assemble a model from known parameters instead of fitting it. The
    /// monthly transitions are left empty.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        config: StateSpaceConfig,
        total_population: f64,
        base_year: i32,
        initial: Vec<f64>,
        annual: Vec<SquareMatrix>,
        enter: Vec<Vec<f64>>,
        hire_mix: Vec<Vec<f64>>,
        characteristics: CharacteristicDistributionSet,
    ) -> Result<Self> {
        let groups = config.n_group_pairs();
        let n = config.n_in_system();
        let bad = |m: &str| Err(Error::Model(m.into()));
        if initial.len() != config.n_cells() {
            return bad("initial distribution does not match the state space");
        }
        if annual.len() != groups || annual.iter().any(|m| m.dim() != n) {
            return bad("annual transitions need one in-system matrix per group pair");
        }
        if enter.len() != groups || enter.iter().any(|v| v.len() != config.n_categories()) {
            return bad("entry probabilities need one value per category per group pair");
        }
        if hire_mix.len() != groups || hire_mix.iter().any(|v| v.len() != n) {
            return bad("hire mix needs one in-system distribution per group pair");
        }
        Ok(FittedModel {
            total_population,
            base_year,
            weighting: Weighting::Workload,
            stopping_time: StoppingTimePmf::uniform(),
            initial: InitialDistribution { probs: initial },
            monthly: MonthlyTransitionSet { matrices: Vec::new(), unobserved: Vec::new(), renormalized: Vec::new() },
            annual: AnnualTransitionSet { matrices: annual },
            entry: EntryProbabilitySet { enter, unobserved: Vec::new() },
            entry_categories: EntryCategorySet { dists: hire_mix, unobserved: Vec::new() },
            characteristics,
            diagnostics: FitDiagnostics::default(),
            manifest: None,
            config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let cfg = &self.config;
        let ns = cfg.n_seniority_groups();
        let split = |g: usize| (g / ns, g % ns);
        let matrices = |ms: &[SquareMatrix]| {
            ms.iter()
                .enumerate()
                .map(|(g, m)| GroupMatrix {
                    age_group: split(g).0,
                    seniority_group: split(g).1,
                    matrix: m.as_slice().to_vec(),
                })
                .collect::<Vec<_>>()
        };
        let vectors = |vs: &[Vec<f64>]| {
            vs.iter()
                .enumerate()
                .map(|(g, v)| GroupVector { age_group: split(g).0, seniority_group: split(g).1, values: v.clone() })
                .collect::<Vec<_>>()
        };
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            state_space: cfg.clone(),
            total_population: self.total_population,
            base_year: self.base_year,
            weighting: self.weighting,
            stopping_time: self.stopping_time.clone(),
            initial_distribution: self
                .initial
                .probs
                .iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(i, &p)| {
                    let t = cfg.cell_triple(i);
                    (t.category, t.age, t.seniority, p)
                })
                .collect(),
            monthly_transitions: matrices(&self.monthly.matrices),
            annual_transitions: matrices(&self.annual.matrices),
            entry_probabilities: vectors(&self.entry.enter),
            entry_categories: vectors(&self.entry_categories.dists),
            characteristics: self
                .characteristics
                .dists
                .iter()
                .map(|(k, d)| CellDistribution {
                    category: k.category,
                    age_group: k.age_group,
                    seniority_group: k.seniority_group,
                    shares: d.iter().map(|(t, &p)| TupleShare { tuple: t.clone(), p }).collect(),
                })
                .collect(),
            diagnostics: self.diagnostics.clone(),
            manifest: self.manifest.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if f.format != FORMAT || f.version != VERSION {
            return Err(Error::Model(format!("unsupported model format {:?} version {}", f.format, f.version)));
        }
        let cfg = f.state_space;
        let n = cfg.n_in_system();
        let groups = cfg.n_group_pairs();
        let bad = |m: String| Error::Model(m);
        if !(f.total_population > 0.0) {
            return Err(bad("total_population must be positive".into()));
        }

        let mut probs = vec![0.0; cfg.n_cells()];
        for &(c, age, sen, p) in &f.initial_distribution {
            let t = Triple::new(c, age, sen);
            if !cfg.is_valid(&t) {
                return Err(bad(format!("initial distribution cell ({c}, {age}, {sen}) is outside the state space")));
            }
            check_probability(p, "initial distribution")?;
            probs[cfg.cell_index(&t)] = p;
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(bad(format!("initial distribution sums to {total}")));
        }

        let read_matrices = |name: &str, items: Vec<GroupMatrix>, optional: bool| -> Result<Vec<SquareMatrix>> {
            if optional && items.is_empty() {
                return Ok(Vec::new());
            }
            let mut out: Vec<Option<SquareMatrix>> = vec![None; groups];
            for item in items {
                let g = group_slot(&cfg, item.age_group, item.seniority_group, name)?;
                if item.matrix.len() != n * n {
                    return Err(bad(format!(
                        "{name}: matrix for group {g} has {} entries, expected {}",
                        item.matrix.len(),
                        n * n
                    )));
                }
                let m = SquareMatrix::from_row_major(n, item.matrix);
                for r in 0..n {
                    for &v in m.row(r) {
                        check_probability(v, name)?;
                    }
                    if (m.row_sum(r) - 1.0).abs() > ROW_TOLERANCE {
                        return Err(bad(format!("{name}: row {r} of group {g} sums to {}", m.row_sum(r))));
                    }
                }
                out[g] = Some(m);
            }
            out.into_iter()
                .enumerate()
                .map(|(g, m)| m.ok_or_else(|| bad(format!("{name}: group {g} missing"))))
                .collect()
        };
        let read_vectors =
            |name: &str, items: Vec<GroupVector>, len: usize, sums_to_one: bool| -> Result<Vec<Vec<f64>>> {
                let mut out: Vec<Option<Vec<f64>>> = vec![None; groups];
                for item in items {
                    let g = group_slot(&cfg, item.age_group, item.seniority_group, name)?;
                    if item.values.len() != len {
                        return Err(bad(format!("{name}: group {g} has {} values, expected {len}", item.values.len())));
                    }
                    for &v in &item.values {
                        check_probability(v, name)?;
                    }
                    let s: f64 = item.values.iter().sum();
                    if sums_to_one && (s - 1.0).abs() > ROW_TOLERANCE {
                        return Err(bad(format!("{name}: group {g} sums to {s}")));
                    }
                    out[g] = Some(item.values);
                }
                out.into_iter()
                    .enumerate()
                    .map(|(g, v)| v.ok_or_else(|| bad(format!("{name}: group {g} missing"))))
                    .collect()
            };

        let monthly = read_matrices("monthly_transitions", f.monthly_transitions, true)?;
        let annual = read_matrices("annual_transitions", f.annual_transitions, false)?;
        let enter = read_vectors("entry_probabilities", f.entry_probabilities, cfg.n_categories(), false)?;
        let hires = read_vectors("entry_categories", f.entry_categories, n, true)?;

        let mut dists = BTreeMap::new();
        for cell in f.characteristics {
            if cell.category == 0 || cell.category >= cfg.n_categories() {
                return Err(bad(format!("characteristics: category index {} is not in-system", cell.category)));
            }
            group_slot(&cfg, cell.age_group, cell.seniority_group, "characteristics")?;
            let mut d = BTreeMap::new();
            for s in cell.shares {
                if !cfg.characteristics().is_valid(&s.tuple) {
                    return Err(bad(format!("characteristics: invalid tuple {:?}", s.tuple)));
                }
                check_probability(s.p, "characteristics")?;
                d.insert(s.tuple, s.p);
            }
            let key =
                CellKey { category: cell.category, age_group: cell.age_group, seniority_group: cell.seniority_group };
            dists.insert(key, d);
        }

        Ok(FittedModel {
            total_population: f.total_population,
            base_year: f.base_year,
            weighting: f.weighting,
            stopping_time: f.stopping_time,
            initial: InitialDistribution { probs },
            monthly: MonthlyTransitionSet { matrices: monthly, unobserved: Vec::new(), renormalized: Vec::new() },
            annual: AnnualTransitionSet { matrices: annual },
            entry: EntryProbabilitySet { enter, unobserved: Vec::new() },
            entry_categories: EntryCategorySet { dists: hires, unobserved: Vec::new() },
            characteristics: CharacteristicDistributionSet { dists },
            diagnostics: f.diagnostics,
            manifest: f.manifest,
            config: cfg,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0 + ROW_TOLERANCE).contains(&p) {
        Ok(())
    } else {
        Err(Error::Model(format!("{what}: {p} is not a probability")))
    }
}

fn group_slot(cfg: &StateSpaceConfig, ag: usize, sg: usize, what: &str) -> Result<usize> {
    if ag >= cfg.n_age_groups() || sg >= cfg.n_seniority_groups() {
        return Err(Error::Model(format!("{what}: group ({ag}, {sg}) does not exist")));
    }
    Ok(cfg.group_index(ag, sg))
}
