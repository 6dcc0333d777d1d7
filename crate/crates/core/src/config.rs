//! Run configuration: one TOML file with per-stage sections, overridable
//! from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{DesignOptions, DEFAULT_LAMBDA};
use crate::bootstrap::BootstrapParams;
use crate::error::{Error, Result};
use crate::io::{read_to_string, Meta};
use crate::model::{AttentionMode, ModelConfig};
use crate::panel::SplitBoundaries;
use crate::seed::short_hash;
use crate::synth::SynthConfig;
use crate::topics::LdaConfig;
use crate::trainer::TrainConfig;

/// Input locations. Unset inputs default to the synthetic-data file names
/// inside the output directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub traditional: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub ipc: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let p = BootstrapParams::default();
        BootstrapSection { m: p.articles_per_collection, n: p.sentences_per_article, k: p.folds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub shared: bool,
    pub attention: AttentionMode,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { hidden: 128, shared: true, attention: AttentionMode::Softmax }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GistSection {
    pub fraction: f64,
    pub per_country: bool,
}

impl Default for GistSection {
    fn default() -> Self {
        GistSection { fraction: 0.05, per_country: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub lambda: f64,
    pub lag_min: usize,
    pub lag_max: usize,
    pub country_dummies: bool,
    /// Include keyword-frequency features when a keyword list is available.
    pub keywords: bool,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = DesignOptions::default();
        BaselineSection { lambda: DEFAULT_LAMBDA, lag_min: d.lag_min, lag_max: d.lag_max, country_dummies: false, keywords: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub paths: Paths,
    pub bootstrap: BootstrapSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub gist: GistSection,
    pub lda: LdaConfig,
    pub splits: SplitBoundaries,
    pub baseline: BaselineSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Parses TOML. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(format!("config: {}", e.message())))?;
        let p = &mut cfg.paths;
        for slot in [&mut p.corpus, &mut p.embeddings, &mut p.labels, &mut p.traditional, &mut p.keywords, &mut p.ipc, &mut p.out] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&read_to_string(path)?, base)
    }

    /// Copies the master seed into every stage section.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.lda.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.bootstrap_params().validate()?;
        self.train.validate()?;
        self.lda.validate()?;
        if self.model.hidden == 0 {
            return Err(Error::InvalidArgument("model.hidden must be >= 1".into()));
        }
        if !(self.gist.fraction > 0.0 && self.gist.fraction <= 0.5) {
            return Err(Error::InvalidArgument(format!("gist fraction {} outside (0, 0.5]", self.gist.fraction)));
        }
        if self.splits.train_end >= self.splits.dev_end {
            return Err(Error::InvalidArgument("splits.train_end must precede splits.dev_end".into()));
        }
        Ok(())
    }

    /// Hash of every setting except file locations, so moving inputs or
    /// outputs does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_string(&c).expect("config serializes");
        short_hash(json.as_bytes())
    }

    pub fn meta(&self) -> Meta {
        Meta::new(self.hash(), self.seed)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn input(&self, slot: &Option<PathBuf>, default: &str) -> PathBuf {
        slot.clone().unwrap_or_else(|| self.out_dir().join(default))
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.input(&self.paths.corpus, crate::synth::CORPUS_FILE)
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.input(&self.paths.embeddings, crate::synth::EMBEDDINGS_FILE)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.input(&self.paths.labels, crate::synth::LABELS_FILE)
    }

    pub fn traditional_path(&self) -> PathBuf {
        self.input(&self.paths.traditional, crate::synth::TRADITIONAL_FILE)
    }

    pub fn keywords_path(&self) -> PathBuf {
        self.input(&self.paths.keywords, crate::synth::KEYWORDS_FILE)
    }

    pub fn bootstrap_params(&self) -> BootstrapParams {
        BootstrapParams {
            articles_per_collection: self.bootstrap.m,
            sentences_per_article: self.bootstrap.n,
            folds: self.bootstrap.k,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, d: usize) -> ModelConfig {
        ModelConfig::new(d, self.model.hidden, self.model.shared, self.model.attention)
    }

    pub fn design_options(&self) -> DesignOptions {
        DesignOptions {
            lag_min: self.baseline.lag_min,
            lag_max: self.baseline.lag_max,
            country_dummies: self.baseline.country_dummies,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskWeights;

    #[test]
    fn defaults_and_sections() {
        let text = r#"
seed = 7
[paths]
corpus = "data/corpus.jsonl"
out = "/tmp/run"
[bootstrap]
m = 10
[model]
attention = "raw"
shared = false
[train]
lr = 0.01
task_weights = [1.0, 0.0, 0.0]
[splits]
train_end = "2018-12"
dev_end = "2019-06"
"#;
        let c = RunConfig::from_toml(text, Path::new("/etc/gc")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("/etc/gc/data/corpus.jsonl")));
        assert_eq!(c.out_dir(), PathBuf::from("/tmp/run"));
        assert_eq!(c.labels_path(), PathBuf::from("/tmp/run/labels.csv"));
        assert_eq!((c.bootstrap.m, c.bootstrap.n, c.bootstrap.k), (10, 21, 10));
        assert_eq!(c.model.attention, AttentionMode::Raw);
        assert_eq!(c.train.task_weights, TaskWeights::new([1.0, 0.0, 0.0]).unwrap());
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.splits.train_end.to_string(), "2018-12");
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[bootstrap]\nmm = 3\n", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("sed = 3\n", Path::new(".")).is_err());
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.gist.fraction = 0.1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.gist.fraction = 0.7;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.bootstrap.k = 0;
        assert!(c.validate().is_err());
    }
}
