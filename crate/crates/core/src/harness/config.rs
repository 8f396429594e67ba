//! Run configuration, read from a TOML file. Every key is optional and falls back to
//! its default; unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//! generator = "seal"
//! k = 5
//! b = 8.0
//! horizon = 10
//! offset = 10
//! clusters = 32
//!
//! [suite]
//! train_count = 200
//!
//! [cem]
//! population = 32
//! elite = 8
//! generations = 20
//! curriculum = { kind = "linear", max_p = 0.9 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ego::EgoParamBounds;
use super::evaluate::EvalSettings;
use super::perturb::GeneratorPreset;
use super::train::{CemConfig, TrainSettings};
use crate::criticality::scorer::ScorerConfig;
use crate::criticality::{DEFAULT_B, DEFAULT_K};
use crate::error::{Error, Result};
use crate::skills::{DEFAULT_CLUSTERS, DEFAULT_HORIZON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Synthetic scenarios generated for demonstrations, corpus and ego training.
    pub train_count: usize,
    pub background: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            train_count: 500,
            background: super::suite::SUITE_BACKGROUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Scenario manifest (one path per line). The built-in synthetic suites are used when unset.
    pub scenarios: Option<PathBuf>,
    pub generator: GeneratorPreset,
    /// Ego history length and number of evaluation iterations.
    pub k: usize,
    /// Distance scale of the criticality scores, in metres.
    pub b: f64,
    /// Skill horizon in steps.
    pub horizon: usize,
    /// Steps between the skill switch-over and the anticipated risk step.
    pub offset: usize,
    pub clusters: usize,
    pub suite: SuiteConfig,
    pub cem: CemConfig,
    pub ego_bounds: EgoParamBounds,
    pub scorer: ScorerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenarios: None,
            generator: GeneratorPreset::Seal,
            k: DEFAULT_K,
            b: DEFAULT_B,
            horizon: DEFAULT_HORIZON,
            offset: DEFAULT_HORIZON,
            clusters: DEFAULT_CLUSTERS,
            suite: SuiteConfig::default(),
            cem: CemConfig::default(),
            ego_bounds: EgoParamBounds::default(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner().message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.b.is_finite() && self.b > 0.0) {
            return bad("b must be positive");
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if self.clusters < 1 {
            return bad("clusters must be at least 1");
        }
        if self.suite.train_count < 1 {
            return bad("suite.train_count must be at least 1");
        }
        if !self.ego_bounds.is_valid() {
            return bad("ego_bounds: lower must not exceed upper");
        }
        let s = &self.scorer;
        if s.epochs < 1 || s.batch_size < 1 || !(s.learning_rate > 0.0) || !(0.0..1.0).contains(&s.val_fraction) {
            return bad("invalid scorer settings");
        }
        self.cem.validate()
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            k: self.k,
            b: self.b,
            offset: self.offset,
            seed: self.seed,
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            k: self.k,
            b: self.b,
            offset: self.offset,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train::Curriculum;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!((c.k, c.b, c.horizon, c.offset), (5, 8.0, 10, 10));
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn partial_file() {
        let c = RunConfig::from_toml(
            "generator = \"no-adv\"\nk = 3\n[cem]\ngenerations = 4\ncurriculum = { kind = \"fixed\", p = 0.9 }\n",
        )
        .unwrap();
        assert_eq!(c.generator, GeneratorPreset::NoAdv);
        assert_eq!(c.k, 3);
        assert_eq!(c.cem.generations, 4);
        assert_eq!(c.cem.population, 32);
        assert_eq!(c.cem.curriculum, Curriculum::Fixed { p: 0.9 });
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("k = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("generator = \"nope\""), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[cem]\nelite = 40"),
            Err(Error::Config(_))
        ));
    }
}
