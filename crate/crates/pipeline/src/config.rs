//! The single JSON configuration of a pipeline run.

use std::path::{Path, PathBuf};

use earlysib_core::corpus::{DEFAULT_EXCLUDED_SPANS, DEFAULT_SIB_TAGS};
use earlysib_core::detect::DetectorConfig;
use earlysib_core::earlysib::ModelConfig;
use earlysib_core::explain::LeadRule;
use earlysib_core::synthgen::GenConfig;
use earlysib_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Version of every file layout written by the pipeline.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Corpus JSONL read by `ingest`.
    pub corpus: Option<PathBuf>,
    /// Post labels JSONL read by `ingest`.
    pub labels: Option<PathBuf>,
    /// Parent of all run directories.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: None, labels: None, out: PathBuf::from("runs") }
    }
}

/// How the post-level annotation set is drawn from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub sib_tags: Vec<String>,
    pub excluded_spans: Vec<String>,
    /// Random No-SIB posts drawn per tagged candidate.
    pub negative_ratio: f64,
    pub folds: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            sib_tags: DEFAULT_SIB_TAGS.iter().map(|s| s.to_string()).collect(),
            excluded_spans: DEFAULT_EXCLUDED_SPANS.iter().map(|s| s.to_string()).collect(),
            negative_ratio: 1300.0 / 707.0,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Sib,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Permutations for contexts too long for exact enumeration.
    pub permutations: usize,
    pub lead_rule: LeadRule,
    pub cohort: Cohort,
    /// Upper bound on explained users; `None` explains the whole cohort.
    pub max_users: Option<usize>,
    /// Users that also get a waterfall figure.
    pub waterfalls: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { permutations: 200, lead_rule: LeadRule::Signed, cohort: Cohort::Sib, max_users: None, waterfalls: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Copied into every component seed.
    pub seed: u64,
    pub paths: Paths,
    pub gen: GenConfig,
    pub annotation: AnnotationConfig,
    pub detector: DetectorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Run a grid search before the final cross-validation in `train`.
    pub grid_search: bool,
    pub sweep_windows: Vec<usize>,
    pub explain: ExplainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: Paths::default(),
            gen: GenConfig::default(),
            annotation: AnnotationConfig::default(),
            detector: DetectorConfig::default(),
            model: ModelConfig::compact(),
            train: TrainConfig::default(),
            grid_search: false,
            sweep_windows: vec![1, 5, 10, 15, 20, 25, 30],
            explain: ExplainConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Sets `key` (dotted path) in `tree` to `raw`, parsed as JSON when
/// possible and as a plain string otherwise. Only existing keys may be set.
pub fn set_path(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| bad(format!("`{key}`: {} is not a section", parts[..i].join("."))))?;
        node = obj.get_mut(*part).ok_or_else(|| bad(format!("unknown key `{key}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = serde_json::to_value(self).map_err(|e| bad(e.to_string()))?;
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| bad(format!("override `{s}` is not KEY=VALUE")))?;
            set_path(&mut tree, k.trim(), v)?;
        }
        serde_json::from_value(tree).map_err(|e| bad(e.to_string()))
    }

    /// Pushes the global seed into every component.
    pub fn resolved(mut self) -> Self {
        self.gen.seed = self.seed;
        self.detector.seed = self.seed;
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.detector.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        let a = &self.annotation;
        if a.sib_tags.is_empty() {
            return Err(bad("annotation.sib_tags must not be empty"));
        }
        if !(a.negative_ratio >= 0.0) || a.folds < 2 {
            return Err(bad("annotation needs a nonnegative negative_ratio and at least 2 folds"));
        }
        if self.sweep_windows.is_empty() || self.sweep_windows.iter().any(|n| !(1..=30).contains(n)) {
            return Err(bad("sweep_windows must be a nonempty list within 1..=30"));
        }
        if self.explain.permutations < 100 {
            return Err(bad("explain.permutations must be at least 100"));
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys) of everything except output paths.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(p) = v.get_mut("paths").and_then(Value::as_object_mut) {
            p.remove("out");
        }
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), c);
        assert_eq!(serde_json::from_str::<PipelineConfig>("{}").unwrap(), c);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sede": 1}"#).is_err());
    }

    #[test]
    fn overrides() {
        let c = PipelineConfig::default()
            .with_overrides(&["gen.n_users=50".into(), "train.lr_grid=[0.01]".into(), "explain.lead_rule=absolute".into()])
            .unwrap();
        assert_eq!(c.gen.n_users, 50);
        assert_eq!(c.train.lr_grid, vec![0.01]);
        assert_eq!(c.explain.lead_rule, LeadRule::Absolute);
        assert!(PipelineConfig::default().with_overrides(&["gen.nusers=5".into()]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["gen.n_users".into()]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["seed.x=1".into()]).is_err());
        assert!(PipelineConfig::default().with_overrides(&["gen.n_users=\"many\"".into()]).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_and_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn seed_propagates() {
        let mut c = PipelineConfig::default();
        c.seed = 9;
        let r = c.resolved();
        assert_eq!((r.gen.seed, r.detector.seed, r.model.seed, r.train.seed), (9, 9, 9, 9));
    }
}
