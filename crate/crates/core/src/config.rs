//! Experiment configuration files.
//!
//! A config is one TOML document. Every key is optional; missing keys take
//! the reference recipe defaults (10 folds, 5 repetitions, 50 epochs/rounds,
//! batch 16, lr 8e-5, weight decay 5e-6, the three-site synthetic preset).
//! Command-line flags override file keys, which override defaults.
//!
//! ```toml
//! master_seed = 7
//! setups = ["local", "federated"]
//!
//! [train]
//! epochs = 20
//!
//! [[sites]]
//! source = "synthetic"
//! site_id = "a"
//! n_pd = 20
//! n_hc = 20
//! embedding_dim = 64
//! frames_range = [40, 120]
//! class_separation = 1.0
//! site_shift = 1.0
//! noise_scale = 1.0
//! seed = 1
//!
//! [[sites]]
//! source = "corpus"        # or "features" for a pooled-vector CSV
//! site_id = "b"
//! path = "data/b.fpsc"
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, import_features, read_corpus, three_site_preset, SiteSpec};
use crate::error::{Error, Result};
use crate::eval::{ExperimentOptions, SiteCorpus, Setup};
use crate::federation::FederationOptions;
use crate::nn::TrainConfig;
use crate::pool::{pool_corpus, DEFAULT_EMBEDDING_DIM};
use crate::seed::derive;

/// Where a site's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteSource {
    /// Generated on the fly. The spec's seed is mixed with the master seed,
    /// so different master seeds also draw different corpora.
    Synthetic(SiteSpec),
    /// Embedding sequences in the binary corpus format.
    Corpus { site_id: String, path: PathBuf },
    /// Already pooled vectors as delimited text (`6 * embedding_dim` values
    /// per row).
    Features {
        site_id: String,
        path: PathBuf,
        #[serde(default = "default_dim")]
        embedding_dim: usize,
    },
}

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

impl SiteSource {
    pub fn site_id(&self) -> &str {
        match self {
            SiteSource::Synthetic(spec) => &spec.site_id,
            SiteSource::Corpus { site_id, .. } | SiteSource::Features { site_id, .. } => site_id,
        }
    }

    fn path_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            SiteSource::Synthetic(_) => None,
            SiteSource::Corpus { path, .. } | SiteSource::Features { path, .. } => Some(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub setups: Vec<Setup>,
    pub folds: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub hidden_layers: Vec<usize>,
    pub reshuffle_folds: bool,
    pub threshold: f64,
    /// Worker threads; 0 uses every available core. Results do not depend
    /// on it.
    pub jobs: usize,
    pub train: TrainConfig,
    pub federation: FederationOptions,
    pub sites: Vec<SiteSource>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(DEFAULT_EMBEDDING_DIM)
    }
}

impl ExperimentConfig {
    /// Reference recipe on the three-site synthetic preset.
    pub fn preset(embedding_dim: usize) -> Self {
        let options = ExperimentOptions::default();
        Self {
            output_dir: PathBuf::from("fedspeech-out"),
            setups: options.setups,
            folds: options.folds,
            repetitions: options.repetitions,
            master_seed: options.master_seed,
            hidden_layers: options.hidden_layers,
            reshuffle_folds: options.reshuffle_folds,
            threshold: options.threshold,
            jobs: options.jobs,
            train: options.train,
            federation: options.federation,
            sites: three_site_preset(embedding_dim)
                .into_iter()
                .map(SiteSource::Synthetic)
                .collect(),
        }
    }

    /// Parses `text`, resolving relative data paths (and the output
    /// directory) against `base_dir`, then validates.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        for site in &mut config.sites {
            if let Some(path) = site.path_mut() {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base_dir.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn options(&self) -> ExperimentOptions {
        ExperimentOptions {
            setups: self.setups.clone(),
            train: self.train.clone(),
            hidden_layers: self.hidden_layers.clone(),
            folds: self.folds,
            repetitions: self.repetitions,
            master_seed: self.master_seed,
            federation: self.federation,
            reshuffle_folds: self.reshuffle_folds,
            threshold: self.threshold,
            jobs: self.jobs,
        }
    }

    /// Checks everything that can be checked without reading data files,
    /// plus that those files exist.
    pub fn validate(&self) -> Result<()> {
        self.options().validate()?;
        if self.sites.is_empty() {
            return Err(Error::Config("no sites configured".into()));
        }
        let mut ids = BTreeSet::new();
        for site in &self.sites {
            if !ids.insert(site.site_id()) {
                return Err(Error::Config(format!("site {} listed twice", site.site_id())));
            }
            match site {
                SiteSource::Synthetic(spec) => {
                    spec.validate()?;
                    spec.validate_for_folds(self.folds)?;
                }
                SiteSource::Corpus { path, .. } | SiteSource::Features { path, .. } => {
                    if !path.is_file() {
                        return Err(Error::Config(format!(
                            "site {}: data file {} does not exist",
                            site.site_id(),
                            path.display()
                        )));
                    }
                }
            }
            if let SiteSource::Features { embedding_dim: 0, .. } = site {
                return Err(Error::Config(format!("site {}: embedding_dim must be positive", site.site_id())));
            }
        }
        let mut seen = BTreeSet::new();
        if !self.setups.iter().all(|s| seen.insert(*s)) {
            return Err(Error::Config("setups listed twice".into()));
        }
        Ok(())
    }

    /// The spec actually generated for a synthetic site under this config's
    /// master seed.
    pub fn effective_spec(&self, spec: &SiteSpec) -> SiteSpec {
        SiteSpec {
            seed: derive(self.master_seed, &[0xDA7A, spec.seed]),
            ..spec.clone()
        }
    }

    /// Loads or generates every site and pools it into feature vectors.
    pub fn load_sites(&self) -> Result<Vec<SiteCorpus>> {
        self.sites
            .iter()
            .map(|site| {
                let site_id = site.site_id().to_string();
                let vectors = match site {
                    SiteSource::Synthetic(spec) => pool_corpus(&generate_synthetic(&self.effective_spec(spec))?)?,
                    SiteSource::Corpus { path, .. } => {
                        let corpus = read_corpus(path)?;
                        if let Some(r) = corpus.records.iter().find(|r| r.site_id != site_id) {
                            return Err(Error::Data(format!(
                                "{}: record {} belongs to site {}, expected {site_id}",
                                path.display(),
                                r.subject_id,
                                r.site_id
                            )));
                        }
                        pool_corpus(&corpus.records)?
                    }
                    SiteSource::Features { path, embedding_dim, .. } => {
                        let vectors = import_features(path, *embedding_dim)?;
                        if let Some(v) = vectors.iter().find(|v| v.site_id != site_id) {
                            return Err(Error::Data(format!(
                                "{}: subject {} belongs to site {}, expected {site_id}",
                                path.display(),
                                v.subject_id,
                                v.site_id
                            )));
                        }
                        vectors
                    }
                };
                Ok(SiteCorpus::new(site_id, vectors))
            })
            .collect()
    }

    /// Fully resolved config as TOML; loading it reproduces this config.
    pub fn snapshot(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_reference_recipe() {
        let c = ExperimentConfig::from_toml_str("", Path::new("/base")).unwrap();
        assert_eq!((c.folds, c.repetitions), (10, 5));
        assert_eq!(c.train.epochs, 50);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.train.learning_rate, 8e-5);
        assert_eq!(c.train.weight_decay, 5e-6);
        assert_eq!(c.hidden_layers, vec![1024, 256, 64]);
        assert_eq!(c.sites.len(), 3);
        assert_eq!(c.output_dir, Path::new("/base/fedspeech-out"));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = ExperimentConfig::preset(16);
        c.master_seed = 42;
        c.setups = vec![Setup::Federated];
        c.output_dir = PathBuf::from("/tmp/x");
        let text = c.snapshot().unwrap();
        let back = ExperimentConfig::from_toml_str(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parses_sources_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.csv"), "").unwrap();
        let text = r#"
            folds = 2
            [[sites]]
            source = "synthetic"
            site_id = "a"
            n_pd = 3
            n_hc = 3
            embedding_dim = 4
            frames_range = [2, 5]
            class_separation = 1.0
            site_shift = 0.0
            noise_scale = 1.0
            seed = 1
            [[sites]]
            source = "features"
            site_id = "b"
            path = "b.csv"
            embedding_dim = 4
        "#;
        let c = ExperimentConfig::from_toml_str(text, dir.path()).unwrap();
        match &c.sites[1] {
            SiteSource::Features { path, .. } => assert_eq!(path, &dir.path().join("b.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = |text: &str| ExperimentConfig::from_toml_str(text, Path::new(".")).unwrap_err();
        assert!(matches!(bad("foldz = 3"), Error::Config(_)));
        assert!(matches!(bad("[train]\nlearning_rat = 1.0"), Error::Config(_)));
        assert!(matches!(
            bad("[[sites]]\nsource = \"corpus\"\nsite_id = \"x\"\npath = \"/no/such/file.fpsc\""),
            Error::Config(_)
        ));
        assert!(matches!(bad("folds = 60"), Error::Config(_)));
        assert!(matches!(bad("setups = [\"local\", \"local\"]"), Error::Config(_)));
        assert!(matches!(bad("[[sites]]\nsource = \"synthetic\"\nsite_id = \"a\"\nbogus = 1"), Error::Config(_)));
    }

    #[test]
    fn master_seed_changes_synthetic_data() {
        let mut c = ExperimentConfig::preset(4);
        c.sites.truncate(1);
        let a = c.load_sites().unwrap();
        c.master_seed = 1;
        let b = c.load_sites().unwrap();
        assert_eq!(a[0].vectors.len(), 100);
        assert_ne!(a, b);
    }
}
