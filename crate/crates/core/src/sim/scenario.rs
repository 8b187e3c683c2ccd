//! Scenario configuration for the simulated experiment.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::policy::RankingRule;

/// Belief dimension elicited for every vaccine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Efficacy,
    Hospitalization,
    AdverseEvent,
    SevereAdverseEvent,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Efficacy,
        Attribute::Hospitalization,
        Attribute::AdverseEvent,
        Attribute::SevereAdverseEvent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Efficacy => "efficacy",
            Attribute::Hospitalization => "hospitalization",
            Attribute::AdverseEvent => "adverse_event",
            Attribute::SevereAdverseEvent => "severe_adverse_event",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Adverse-event rates are bad: higher beliefs lower preference.
    pub fn is_adverse(self) -> bool {
        matches!(self, Attribute::AdverseEvent | Attribute::SevereAdverseEvent)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSpec {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    /// Bernoulli probability of the coded value 1.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub n: usize,
    /// Per attribute, per vaccine prior-mean distribution (truncated to [0, 100]).
    pub prior_mean: BTreeMap<Attribute, NormalSpec>,
    /// Per vaccine familiarity distribution, rounded and clamped to 1..=7.
    pub familiarity: NormalSpec,
    pub covariates: Vec<CovariateSpec>,
    /// Per vaccine probability of having received it before.
    pub received_before: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    /// Variance of the factor shared by all vaccines.
    pub common_var: f64,
    /// Specific variance at familiarity 4; halves per familiarity point.
    pub base_var: f64,
    pub noise_var: f64,
    /// Cost per selected signal, in belief units.
    pub cost: f64,
    /// Added to the best composite prior mean to give the reservation value.
    pub reservation_offset: f64,
    /// Monte Carlo draws per agent for bundle valuation.
    pub draws: u64,
    #[serde(default)]
    pub ranking_rule: RankingRule,
    /// Attribute weights forming the quality index that drives demand.
    pub demand_weights: BTreeMap<Attribute, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmWeights {
    pub fc: f64,
    pub t3: f64,
    pub ra: f64,
    pub t3_star: f64,
    pub ra_star: f64,
}

impl ArmWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.fc, self.t3, self.ra, self.t3_star, self.ra_star]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arms {
    pub weights: ArmWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preference {
    /// Non-negative weight per attribute; adverse attributes enter negatively.
    pub weights: BTreeMap<Attribute, f64>,
    /// Score mapped to preference 50.
    pub center: f64,
    /// Logistic scale of the score → preference map.
    pub scale: f64,
    /// Preference below this means the vaccine would never be taken.
    pub never_take_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub vaccines: Vec<String>,
    pub population: Population,
    pub model: Model,
    /// Per attribute, per vaccine signal values delivered on the information page.
    pub truth: BTreeMap<Attribute, Vec<f64>>,
    pub arms: Arms,
    pub preference: Preference,
}

pub const VACCINES: [&str; 5] = ["AstraZeneca", "Johnson & Johnson", "Moderna", "Pfizer", "Sinovac"];

impl Default for Scenario {
    fn default() -> Self {
        let five = |x: f64| vec![x; 5];
        Scenario {
            seed: 20_210_801,
            vaccines: VACCINES.iter().map(|s| s.to_string()).collect(),
            population: Population {
                n: 1000,
                prior_mean: BTreeMap::from([
                    (Attribute::Efficacy, NormalSpec { mean: five(69.0), sd: five(21.33) }),
                    (Attribute::Hospitalization, NormalSpec { mean: five(71.0), sd: five(24.05) }),
                ]),
                familiarity: NormalSpec {
                    mean: vec![4.5, 3.0, 4.5, 5.0, 3.0],
                    sd: five(1.2),
                },
                covariates: vec![
                    CovariateSpec { name: "female".into(), p: 0.6304 },
                    CovariateSpec { name: "income_high".into(), p: 0.0966 },
                    CovariateSpec { name: "major_stem".into(), p: 0.4 },
                ],
                received_before: vec![0.45, 0.02, 0.3, 0.1, 0.02],
            },
            model: Model {
                common_var: 60.0,
                base_var: 250.0,
                noise_var: 100.0,
                cost: 0.12,
                reservation_offset: 2.0,
                draws: 20_000,
                ranking_rule: RankingRule::Voi,
                demand_weights: BTreeMap::from([(Attribute::Efficacy, 0.5), (Attribute::Hospitalization, 0.5)]),
            },
            truth: BTreeMap::from([
                (Attribute::Efficacy, vec![70.4, 66.9, 94.1, 95.0, 83.5]),
                (Attribute::Hospitalization, vec![100.0, 93.1, 100.0, 88.9, 100.0]),
            ]),
            arms: Arms {
                weights: ArmWeights {
                    fc: 207.0,
                    t3: 217.0,
                    ra: 208.0,
                    t3_star: 233.0,
                    ra_star: 201.0,
                },
            },
            preference: Preference {
                weights: BTreeMap::from([(Attribute::Efficacy, 0.5), (Attribute::Hospitalization, 0.5)]),
                center: 60.0,
                scale: 10.0,
                never_take_threshold: 40.0,
            },
        }
    }
}

/// One validation failure, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn len_eq(&mut self, path: &str, got: usize, want: usize) -> bool {
        if got != want {
            self.push(path, format!("expected {want} entries (one per vaccine), got {got}"));
            false
        } else {
            true
        }
    }

    fn finite_all(&mut self, path: &str, xs: &[f64]) {
        for (i, x) in xs.iter().enumerate() {
            if !x.is_finite() {
                self.push(format!("{path}[{i}]"), "must be finite");
            }
        }
    }

    fn non_negative(&mut self, path: &str, x: f64) {
        if !(x >= 0.0) || !x.is_finite() {
            self.push(path, format!("must be finite and >= 0, got {x}"));
        }
    }

    fn positive(&mut self, path: &str, x: f64) {
        if !(x > 0.0) || !x.is_finite() {
            self.push(path, format!("must be finite and > 0, got {x}"));
        }
    }
}

impl Scenario {
    /// Parse JSON, reporting type errors with the offending field path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn vaccine_count(&self) -> usize {
        self.vaccines.len()
    }

    pub fn attributes(&self) -> Vec<Attribute> {
        self.truth.keys().copied().collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut is = Issues(Vec::new());
        let j = self.vaccines.len();
        if j == 0 {
            is.push("vaccines", "at least one vaccine is required");
        }
        let p = &self.population;
        if p.n == 0 {
            is.push("population.n", "must be at least 1");
        }
        for (attr, spec) in &p.prior_mean {
            let base = format!("population.prior_mean.{attr}");
            is.len_eq(&format!("{base}.mean"), spec.mean.len(), j);
            is.len_eq(&format!("{base}.sd"), spec.sd.len(), j);
            is.finite_all(&format!("{base}.mean"), &spec.mean);
            for (i, &sd) in spec.sd.iter().enumerate() {
                is.non_negative(&format!("{base}.sd[{i}]"), sd);
            }
        }
        is.len_eq("population.familiarity.mean", p.familiarity.mean.len(), j);
        is.len_eq("population.familiarity.sd", p.familiarity.sd.len(), j);
        for (i, &m) in p.familiarity.mean.iter().enumerate() {
            if !(1.0..=7.0).contains(&m) {
                is.push(format!("population.familiarity.mean[{i}]"), format!("must lie in [1, 7], got {m}"));
            }
        }
        for (i, &sd) in p.familiarity.sd.iter().enumerate() {
            is.non_negative(&format!("population.familiarity.sd[{i}]"), sd);
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, c) in p.covariates.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.p) {
                is.push(format!("population.covariates[{i}].p"), format!("must lie in [0, 1], got {}", c.p));
            }
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') {
                is.push(format!("population.covariates[{i}].name"), "must be a non-empty [A-Za-z0-9_] identifier");
            }
            if !names.insert(c.name.as_str()) {
                is.push(format!("population.covariates[{i}].name"), format!("duplicate covariate {}", c.name));
            }
        }
        if is.len_eq("population.received_before", p.received_before.len(), j) {
            for (i, &q) in p.received_before.iter().enumerate() {
                if !(0.0..=1.0).contains(&q) {
                    is.push(format!("population.received_before[{i}]"), format!("must lie in [0, 1], got {q}"));
                }
            }
        }

        let m = &self.model;
        is.non_negative("model.common_var", m.common_var);
        is.positive("model.base_var", m.base_var);
        is.positive("model.noise_var", m.noise_var);
        is.non_negative("model.cost", m.cost);
        is.non_negative("model.reservation_offset", m.reservation_offset);
        if m.draws < crate::voi::MIN_DRAWS {
            is.push("model.draws", format!("must be at least {}, got {}", crate::voi::MIN_DRAWS, m.draws));
        }
        if m.demand_weights.is_empty() || m.demand_weights.values().all(|&w| w == 0.0) {
            is.push("model.demand_weights", "at least one positive weight is required");
        }
        for (attr, &w) in &m.demand_weights {
            is.non_negative(&format!("model.demand_weights.{attr}"), w);
            if !self.truth.contains_key(attr) {
                is.push(format!("model.demand_weights.{attr}"), "attribute is not simulated (missing from truth)");
            }
        }

        if self.truth.is_empty() {
            is.push("truth", "at least one attribute is required");
        }
        for (attr, values) in &self.truth {
            let path = format!("truth.{attr}");
            if is.len_eq(&path, values.len(), j) {
                is.finite_all(&path, values);
            }
            if !p.prior_mean.contains_key(attr) {
                is.push(format!("population.prior_mean.{attr}"), "missing prior for a simulated attribute");
            }
        }
        for attr in p.prior_mean.keys() {
            if !self.truth.contains_key(attr) {
                is.push(format!("truth.{attr}"), "missing signal values for an attribute with a prior");
            }
        }

        let w = self.arms.weights.as_array();
        for (name, x) in ["fc", "t3", "ra", "t3_star", "ra_star"].iter().zip(w) {
            is.non_negative(&format!("arms.weights.{name}"), x);
        }
        if w.iter().sum::<f64>() <= 0.0 {
            is.push("arms.weights", "weights must not all be zero");
        }

        let pr = &self.preference;
        for (attr, &wt) in &pr.weights {
            is.non_negative(&format!("preference.weights.{attr}"), wt);
            if !self.truth.contains_key(attr) {
                is.push(format!("preference.weights.{attr}"), "attribute is not simulated (missing from truth)");
            }
        }
        if !pr.center.is_finite() {
            is.push("preference.center", "must be finite");
        }
        is.positive("preference.scale", pr.scale);
        if !(0.0..=100.0).contains(&pr.never_take_threshold) {
            is.push(
                "preference.never_take_threshold",
                format!("must lie in [0, 100], got {}", pr.never_take_threshold),
            );
        }

        if is.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(is.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let s = Scenario::default();
        s.validate().unwrap();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.content_hash(), s.content_hash());
    }

    #[test]
    fn hash_changes_with_seed() {
        let a = Scenario::default();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let mut v: serde_json::Value = serde_json::from_str(&Scenario::default().to_json()).unwrap();
        v["model"]["noise_var"] = serde_json::json!("loud");
        match Scenario::from_json(&v.to_string()) {
            Err(ConfigError::Parse { path, .. }) => assert_eq!(path, "model.noise_var"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_list_every_path() {
        let mut s = Scenario::default();
        s.model.noise_var = 0.0;
        s.population.familiarity.mean[2] = 9.0;
        s.truth.get_mut(&Attribute::Efficacy).unwrap().pop();
        s.arms.weights = ArmWeights { fc: 0.0, t3: 0.0, ra: 0.0, t3_star: 0.0, ra_star: 0.0 };
        let Err(ConfigError::Invalid(issues)) = s.validate() else {
            panic!("expected validation failure");
        };
        let paths: Vec<&str> = issues.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"model.noise_var"));
        assert!(paths.contains(&"population.familiarity.mean[2]"));
        assert!(paths.contains(&"truth.efficacy"));
        assert!(paths.contains(&"arms.weights"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&Scenario::default().to_json()).unwrap();
        v["model"]["bogus"] = serde_json::json!(1);
        assert!(matches!(Scenario::from_json(&v.to_string()), Err(ConfigError::Parse { .. })));
    }
}
