//! The discrete state space: categories x integer ages x integer seniorities,
//! plus the age/seniority group partitions that parameterise every transition.
//!
//! Category index 0 is always the out-of-system category. Age group 0 is the
//! reserve group (people below hiring age who feed future entries); its ages
//! may be negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open integer range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRange {
    pub start: i32,
    pub end: i32,
}

impl GroupRange {
    pub fn new(start: i32, end: i32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, v: i32) -> bool {
        self.start <= v && v < self.end
    }

    pub fn label(&self) -> String {
        format!("[{},{})", self.start, self.end)
    }
}

/// What happens to mass that would age (or accrue seniority) past the top of
/// the state space during projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Refuse horizons that would push positive mass out of range.
    #[default]
    Strict,
    /// Clamp into the last age / seniority.
    Absorb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSpace {
    pub characteristics: Vec<Characteristic>,
}

/// One level index per characteristic, in declaration order.
pub type CharacteristicTuple = Vec<u32>;

impl CharacteristicSpace {
    pub fn len(&self) -> usize {
        self.characteristics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characteristics.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.characteristics.iter().position(|c| c.name == name)
    }

    pub fn level_index(&self, characteristic: usize, level: &str) -> Option<u32> {
        self.characteristics[characteristic].levels.iter().position(|l| l == level).map(|i| i as u32)
    }

    pub fn is_valid(&self, tuple: &[u32]) -> bool {
        tuple.len() == self.characteristics.len()
            && tuple.iter().zip(&self.characteristics).all(|(&l, c)| (l as usize) < c.levels.len())
    }

    /// `/`-joined level names; the empty tuple encodes as the empty string.
    pub fn encode(&self, tuple: &[u32]) -> String {
        tuple
            .iter()
            .zip(&self.characteristics)
            .map(|(&l, c)| c.levels[l as usize].as_str())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn validate(&self, errors: &mut Vec<String>) {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.characteristics {
            if !seen.insert(c.name.as_str()) {
                errors.push(format!("duplicate characteristic name {:?}", c.name));
            }
            if c.levels.is_empty() {
                errors.push(format!("characteristic {:?} has no levels", c.name));
            }
            let mut lv = std::collections::BTreeSet::new();
            for l in &c.levels {
                if !lv.insert(l.as_str()) {
                    errors.push(format!("characteristic {:?} repeats level {:?}", c.name, l));
                }
            }
        }
    }
}

/// One person-state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub category: usize,
    pub age: i32,
    pub seniority: i32,
}

impl Triple {
    pub fn new(category: usize, age: i32, seniority: i32) -> Self {
        Self { category, age, seniority }
    }
}

/// Unvalidated state-space description, as read from the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStateSpace {
    pub categories: Vec<String>,
    /// Defaults to the first listed category.
    #[serde(default)]
    pub out_of_system: Option<String>,
    pub age_min: i32,
    pub age_max: i32,
    pub age_groups: Vec<[i32; 2]>,
    pub seniority_max: i32,
    pub seniority_groups: Vec<[i32; 2]>,
    pub working_age_min: i32,
    #[serde(default = "default_full_time")]
    pub full_time_hours: f64,
    #[serde(default)]
    pub overflow: OverflowPolicy,
    #[serde(default)]
    pub characteristics: Vec<Characteristic>,
}

fn default_full_time() -> f64 {
    40.0
}

/// Validated state space. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStateSpace", into = "RawStateSpace")]
pub struct StateSpaceConfig {
    categories: Vec<String>,
    age_min: i32,
    age_max: i32,
    age_groups: Vec<GroupRange>,
    seniority_max: i32,
    seniority_groups: Vec<GroupRange>,
    working_age_min: i32,
    full_time_hours: f64,
    overflow: OverflowPolicy,
    characteristics: CharacteristicSpace,
    age_group_of: Vec<usize>,
    seniority_group_of: Vec<usize>,
}

impl TryFrom<RawStateSpace> for StateSpaceConfig {
    type Error = Error;
    fn try_from(raw: RawStateSpace) -> Result<Self> {
        validate_config(raw)
    }
}

impl From<StateSpaceConfig> for RawStateSpace {
    fn from(c: StateSpaceConfig) -> Self {
        RawStateSpace {
            out_of_system: Some(c.categories[0].clone()),
            categories: c.categories,
            age_min: c.age_min,
            age_max: c.age_max,
            age_groups: c.age_groups.iter().map(|g| [g.start, g.end]).collect(),
            seniority_max: c.seniority_max,
            seniority_groups: c.seniority_groups.iter().map(|g| [g.start, g.end]).collect(),
            working_age_min: c.working_age_min,
            full_time_hours: c.full_time_hours,
            overflow: c.overflow,
            characteristics: c.characteristics.characteristics,
        }
    }
}

fn check_partition(what: &str, lo: i32, hi: i32, groups: &[[i32; 2]], errors: &mut Vec<String>) -> Vec<GroupRange> {
    if lo >= hi {
        errors.push(format!("{what}: range [{lo},{hi}) is empty"));
    }
    if groups.is_empty() {
        errors.push(format!("{what}: at least one group is required"));
        return Vec::new();
    }
    let ranges: Vec<GroupRange> = groups.iter().map(|g| GroupRange::new(g[0], g[1])).collect();
    for (i, g) in ranges.iter().enumerate() {
        if g.start >= g.end {
            errors.push(format!("{what}: group {i} {} is empty", g.label()));
        }
    }
    if ranges[0].start != lo {
        errors.push(format!("{what}: first group starts at {} but the range starts at {lo}", ranges[0].start));
    }
    for (i, w) in ranges.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if b.start > a.end {
            errors.push(format!(
                "{what}: gap at {} between group {i} {} and group {} {}",
                a.end,
                a.label(),
                i + 1,
                b.label()
            ));
        } else if b.start < a.end {
            errors.push(format!("{what}: groups {i} {} and {} {} overlap", a.label(), i + 1, b.label()));
        }
    }
    let last = ranges[ranges.len() - 1];
    if last.end != hi {
        errors.push(format!("{what}: last group ends at {} but the range ends at {hi}", last.end));
    }
    ranges
}

/// Validate a raw state-space description, collecting every violated
/// invariant rather than stopping at the first.
pub fn validate_config(raw: RawStateSpace) -> Result<StateSpaceConfig> {
    let mut errors = Vec::new();

    let mut categories = raw.categories.clone();
    {
        let mut seen = std::collections::BTreeSet::new();
        for c in &categories {
            if !seen.insert(c.as_str()) {
                errors.push(format!("duplicate category code {c:?}"));
            }
        }
    }
    if categories.is_empty() {
        errors.push("categories: at least the out-of-system category is required".into());
    }
    if let Some(out) = &raw.out_of_system {
        match categories.iter().position(|c| c == out) {
            Some(pos) => {
                let code = categories.remove(pos);
                categories.insert(0, code);
            }
            None => errors.push(format!("out_of_system code {out:?} is not among the categories")),
        }
    }

    let age_groups = check_partition("age groups", raw.age_min, raw.age_max, &raw.age_groups, &mut errors);
    let seniority_groups =
        check_partition("seniority groups", 0, raw.seniority_max, &raw.seniority_groups, &mut errors);
    if !(raw.full_time_hours > 0.0) {
        errors.push(format!("full_time_hours must be positive, got {}", raw.full_time_hours));
    }
    let characteristics = CharacteristicSpace { characteristics: raw.characteristics };
    characteristics.validate(&mut errors);

    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }

    let age_group_of =
        (raw.age_min..raw.age_max).map(|e| age_groups.iter().position(|g| g.contains(e)).unwrap()).collect();
    let seniority_group_of =
        (0..raw.seniority_max).map(|a| seniority_groups.iter().position(|g| g.contains(a)).unwrap()).collect();

    Ok(StateSpaceConfig {
        categories,
        age_min: raw.age_min,
        age_max: raw.age_max,
        age_groups,
        seniority_max: raw.seniority_max,
        seniority_groups,
        working_age_min: raw.working_age_min,
        full_time_hours: raw.full_time_hours,
        overflow: raw.overflow,
        characteristics,
        age_group_of,
        seniority_group_of,
    })
}

impl StateSpaceConfig {
    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Total category count including the out-of-system category.
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    /// In-system category count (N_C).
    pub fn n_in_system(&self) -> usize {
        self.categories.len() - 1
    }

    pub fn category_index(&self, code: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == code)
    }

    pub fn age_min(&self) -> i32 {
        self.age_min
    }

    /// Exclusive upper bound on ages.
    pub fn age_max(&self) -> i32 {
        self.age_max
    }

    pub fn n_ages(&self) -> usize {
        (self.age_max - self.age_min) as usize
    }

    pub fn seniority_max(&self) -> i32 {
        self.seniority_max
    }

    pub fn n_seniorities(&self) -> usize {
        self.seniority_max as usize
    }

    pub fn age_groups(&self) -> &[GroupRange] {
        &self.age_groups
    }

    pub fn seniority_groups(&self) -> &[GroupRange] {
        &self.seniority_groups
    }

    pub fn n_age_groups(&self) -> usize {
        self.age_groups.len()
    }

    pub fn n_seniority_groups(&self) -> usize {
        self.seniority_groups.len()
    }

    pub fn working_age_min(&self) -> i32 {
        self.working_age_min
    }

    pub fn full_time_hours(&self) -> f64 {
        self.full_time_hours
    }

    pub fn overflow(&self) -> OverflowPolicy {
        self.overflow
    }

    pub fn with_overflow(mut self, overflow: OverflowPolicy) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn characteristics(&self) -> &CharacteristicSpace {
        &self.characteristics
    }

    pub fn age_in_range(&self, age: i32) -> bool {
        self.age_min <= age && age < self.age_max
    }

    pub fn seniority_in_range(&self, seniority: i32) -> bool {
        0 <= seniority && seniority < self.seniority_max
    }

    pub fn age_group(&self, age: i32) -> usize {
        self.age_group_of[(age - self.age_min) as usize]
    }

    pub fn seniority_group(&self, seniority: i32) -> usize {
        self.seniority_group_of[seniority as usize]
    }

    /// Unique (age group, seniority group) containing the triple.
    pub fn locate_groups(&self, t: &Triple) -> (usize, usize) {
        (self.age_group(t.age), self.seniority_group(t.seniority))
    }

    /// Seniority can only accrue while in the system, which requires working age.
    pub fn feasible(&self, age: i32, seniority: i32) -> bool {
        seniority <= (age - self.working_age_min).max(0)
    }

    pub fn is_valid(&self, t: &Triple) -> bool {
        t.category < self.n_categories()
            && self.age_in_range(t.age)
            && self.seniority_in_range(t.seniority)
            && self.feasible(t.age, t.seniority)
    }

    /// Number of dense (category, age, seniority) cells.
    pub fn n_cells(&self) -> usize {
        self.n_categories() * self.n_ages() * self.n_seniorities()
    }

    pub fn cell_index(&self, t: &Triple) -> usize {
        (t.category * self.n_ages() + (t.age - self.age_min) as usize) * self.n_seniorities() + t.seniority as usize
    }

    pub fn cell_triple(&self, idx: usize) -> Triple {
        let ns = self.n_seniorities();
        let na = self.n_ages();
        let seniority = (idx % ns) as i32;
        let rest = idx / ns;
        let age = (rest % na) as i32 + self.age_min;
        Triple { category: rest / na, age, seniority }
    }

    /// Feasible seniorities for an age, ascending.
    pub fn feasible_seniorities(&self, age: i32) -> impl Iterator<Item = i32> + '_ {
        (0..self.seniority_max).filter(move |&a| self.feasible(age, a))
    }

    /// Flat index of an (age group, seniority group) pair.
    pub fn group_index(&self, age_group: usize, seniority_group: usize) -> usize {
        age_group * self.n_seniority_groups() + seniority_group
    }

    pub fn n_group_pairs(&self) -> usize {
        self.n_age_groups() * self.n_seniority_groups()
    }
}

/// 1 for in-system categories, 0 for the out-of-system category.
pub fn in_system_indicator(category: usize) -> u8 {
    u8::from(category != 0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Institution example: reserve [-7,18), then 18/30/40/50 up to 65;
    /// seniority groups at 15/30/45.
    pub(crate) fn institution_raw() -> RawStateSpace {
        RawStateSpace {
            categories: vec!["00".into(), "11".into(), "12".into(), "13".into()],
            out_of_system: Some("00".into()),
            age_min: -7,
            age_max: 65,
            age_groups: vec![[-7, 18], [18, 30], [30, 40], [40, 50], [50, 65]],
            seniority_max: 60,
            seniority_groups: vec![[0, 15], [15, 30], [30, 45], [45, 60]],
            working_age_min: 18,
            full_time_hours: 40.0,
            overflow: OverflowPolicy::Strict,
            characteristics: vec![],
        }
    }

    #[test]
    fn institution_grouping_is_valid() {
        let cfg = validate_config(institution_raw()).unwrap();
        assert_eq!(cfg.n_age_groups(), 5);
        assert_eq!(cfg.n_in_system(), 3);
        assert_eq!(cfg.age_min(), -7);
    }

    #[test]
    fn gap_is_reported_with_its_position() {
        let mut raw = institution_raw();
        raw.age_min = 18;
        raw.age_max = 40;
        raw.age_groups = vec![[18, 30], [31, 40]];
        let err = validate_config(raw).unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert_eq!(list.len(), 1);
        assert!(list[0].contains("gap at 30"), "{}", list[0]);
    }

    #[test]
    fn every_violation_is_listed() {
        let mut raw = institution_raw();
        raw.categories.push("11".into());
        raw.age_groups = vec![[-7, 18], [17, 30], [30, 30], [30, 65]];
        raw.seniority_groups = vec![[0, 10]];
        let Error::Config(list) = validate_config(raw).unwrap_err() else { panic!() };
        let joined = list.join("\n");
        assert!(joined.contains("duplicate category code \"11\""));
        assert!(joined.contains("overlap"));
        assert!(joined.contains("group 2 [30,30) is empty"));
        assert!(joined.contains("last group ends at 10"));
    }

    #[test]
    fn minimal_space_is_legal() {
        let raw = RawStateSpace {
            categories: vec!["00".into()],
            out_of_system: Some("00".into()),
            age_min: 0,
            age_max: 1,
            age_groups: vec![[0, 1]],
            seniority_max: 1,
            seniority_groups: vec![[0, 1]],
            working_age_min: 0,
            full_time_hours: 40.0,
            overflow: OverflowPolicy::Strict,
            characteristics: vec![],
        };
        let cfg = validate_config(raw).unwrap();
        assert_eq!(cfg.n_in_system(), 0);
        assert_eq!(cfg.n_cells(), 1);
    }

    #[test]
    fn out_of_system_code_moves_to_front() {
        let mut raw = institution_raw();
        raw.categories = vec!["11".into(), "00".into(), "12".into()];
        let cfg = validate_config(raw).unwrap();
        assert_eq!(cfg.categories(), ["00", "11", "12"]);
    }

    #[test]
    fn locate_groups_examples() {
        let cfg = validate_config(institution_raw()).unwrap();
        assert_eq!(cfg.locate_groups(&Triple::new(1, 35, 15)), (2, 1));
        assert_eq!(cfg.age_group(cfg.age_min()), 0);
        assert_eq!(cfg.age_group(-7), 0);
        assert_eq!(cfg.age_group(64), 4);
    }

    #[test]
    fn partition_totality_by_scan() {
        let cfg = validate_config(institution_raw()).unwrap();
        for e in cfg.age_min()..cfg.age_max() {
            let hits = cfg.age_groups().iter().filter(|g| g.contains(e)).count();
            assert_eq!(hits, 1, "age {e}");
            assert!(cfg.age_groups()[cfg.age_group(e)].contains(e));
        }
        for a in 0..cfg.seniority_max() {
            let hits = cfg.seniority_groups().iter().filter(|g| g.contains(a)).count();
            assert_eq!(hits, 1, "seniority {a}");
        }
    }

    #[test]
    fn indicator_scan() {
        let cfg = validate_config(institution_raw()).unwrap();
        for c in 0..cfg.n_categories() {
            assert_eq!(in_system_indicator(c) == 0, c == 0);
        }
        assert_eq!(in_system_indicator(cfg.n_categories() - 1), 1);
    }

    #[test]
    fn feasibility_examples() {
        let cfg = validate_config(institution_raw()).unwrap();
        assert!(!cfg.feasible(20, 10));
        assert!(cfg.feasible(18, 0));
        assert!(cfg.feasible(60, 40));
        assert!(cfg.feasible(-3, 0));
        assert!(!cfg.feasible(-3, 1));
    }

    #[test]
    fn cell_index_round_trips() {
        let cfg = validate_config(institution_raw()).unwrap();
        for idx in (0..cfg.n_cells()).step_by(37) {
            assert_eq!(cfg.cell_index(&cfg.cell_triple(idx)), idx);
        }
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let cfg = validate_config(institution_raw()).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: StateSpaceConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn feasible_is_monotone(e in -10i32..80, a in 0i32..70, wam in 0i32..25) {
                let mut raw = institution_raw();
                raw.working_age_min = wam;
                let cfg = validate_config(raw).unwrap();
                if cfg.feasible(e, a) {
                    prop_assert!(cfg.feasible(e + 1, a));
                    if a >= 1 {
                        prop_assert!(cfg.feasible(e, a - 1));
                    }
                }
            }
        }
    }
}
