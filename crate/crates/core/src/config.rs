//! The TOML run configuration: `[state_space]`, `[estimation]` and
//! `[finance]` sections.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::StoppingTimePmf;
use crate::finance::FinanceConfig;
use crate::ingestion::Weighting;
use crate::state_model::{validate_config, RawStateSpace, StateSpaceConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingTimeConfig {
    /// Twelve monthly probabilities; uniform when absent.
    pub shared: Option<[f64; 12]>,
    /// Per target category code.
    #[serde(default)]
    pub by_category: BTreeMap<String, [f64; 12]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub stopping_time: StoppingTimeConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    state_space: RawStateSpace,
    #[serde(default)]
    estimation: EstimationConfig,
    #[serde(default)]
    finance: FinanceConfig,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub state_space: StateSpaceConfig,
    pub weighting: Weighting,
    pub stopping_time: StoppingTimePmf,
    pub finance: FinanceConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawDocument = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let state_space = validate_config(raw.state_space)?;

        let mut errs = Vec::new();
        let mut pmf = match raw.estimation.stopping_time.shared {
            Some(p) => StoppingTimePmf::new(p).unwrap_or_else(|e| {
                errs.push(e.to_string());
                StoppingTimePmf::uniform()
            }),
            None => StoppingTimePmf::uniform(),
        };
        for (code, p) in &raw.estimation.stopping_time.by_category {
            match state_space.category_index(code) {
                Some(c) if c > 0 => match pmf.clone().with_category(c, *p) {
                    Ok(next) => pmf = next,
                    Err(e) => errs.push(format!("stopping time for {code}: {e}")),
                },
                _ => errs.push(format!("stopping time given for {code:?}, which is not an in-system category")),
            }
        }
        errs.extend(raw.finance.validate(&state_space));
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Self { state_space, weighting: raw.estimation.weighting, stopping_time: pmf, finance: raw.finance })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finance::PensionRegime;

    const BASE: &str = r#"
[state_space]
categories = ["00", "11", "12"]
age_min = 16
age_max = 70
age_groups = [[16, 18], [18, 70]]
seniority_max = 55
seniority_groups = [[0, 55]]
working_age_min = 18
overflow = "absorb"

[[state_space.characteristics]]
name = "regime"
levels = ["ivm", "cap"]
"#;

    #[test]
    fn minimal_document() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.state_space.n_categories(), 3);
        assert_eq!(c.weighting, Weighting::Workload);
        assert!(c.stopping_time.is_shared());
        assert_eq!(c.finance.inflation, 0.0388);
    }

    #[test]
    fn full_document() {
        let text = format!(
            "{BASE}\n[estimation]\nweighting = \"headcount\"\n[estimation.stopping_time.by_category]\n\"12\" = [1,0,0,0,0,0,0,0,0,0,0,0]\n\
             [finance]\ninflation = 0.03\ndefault_regime = \"jupema_reparto\"\n\
             [[finance.bindings]]\ncharacteristic = \"regime\"\nfield = \"regime\"\nlevels = {{ ivm = \"ivm\", cap = \"jupema_capitalizacion\" }}\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.weighting, Weighting::Headcount);
        assert_eq!(c.stopping_time.for_category(2)[0], 1.0);
        assert_eq!(c.finance.default_regime, PensionRegime::JupemaReparto);
        assert_eq!(c.finance.bindings.len(), 1);
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(RunConfig::parse("[state_space"), Err(Error::ConfigParse(_))));
        let gap = BASE.replace("[[16, 18], [18, 70]]", "[[16, 17], [18, 70]]");
        assert!(matches!(RunConfig::parse(&gap), Err(Error::Config(_))));
        let bad_pmf = format!("{BASE}\n[estimation.stopping_time]\nshared = [1,1,0,0,0,0,0,0,0,0,0,0]\n");
        assert!(matches!(RunConfig::parse(&bad_pmf), Err(Error::Config(_))));
        let bad_code = format!("{BASE}\n[estimation.stopping_time.by_category]\n\"00\" = [1,0,0,0,0,0,0,0,0,0,0,0]\n");
        assert!(matches!(RunConfig::parse(&bad_code), Err(Error::Config(_))));
        let typo = format!("{BASE}\n[finance]\ninflaton = 0.1\n");
        assert!(matches!(RunConfig::parse(&typo), Err(Error::ConfigParse(_))));
    }
}
