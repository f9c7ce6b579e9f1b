//! Corpus files, feature-table import and the synthetic site generator.

mod corpus;
mod import;
mod synthetic;

pub use corpus::{read_corpus, write_corpus, CorpusFile, MAGIC, VERSION};
pub use import::{import_features, parse_features};
pub use synthetic::{generate_synthetic, three_site_preset, SiteSpec, DEFAULT_SIGNAL_SEED, PRESET_SEPARATION, PRESET_SHIFT};
