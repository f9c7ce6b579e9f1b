use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{histogram_scores, Histogram};
use super::roc::{roc_auc, Roc};
use super::ttest::{paired_t_test, TTestResult};
use crate::error::{Error, Result};
use crate::pool::Label;

/// Training setup being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    /// One model per site, trained on that site only.
    Local,
    /// One model trained on the pooled training folds of all sites.
    Central,
    /// FedAvg across sites.
    Federated,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::Local, Setup::Central, Setup::Federated];

    pub fn as_str(self) -> &'static str {
        match self {
            Setup::Local => "local",
            Setup::Central => "central",
            Setup::Federated => "federated",
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(Setup::Local),
            "central" => Ok(Setup::Central),
            "federated" | "fl" => Ok(Setup::Federated),
            other => Err(Error::Config(format!("unknown setup {other:?}"))),
        }
    }
}

/// Metrics of one trained model on one site's held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub site: String,
    pub setup: Setup,
    pub repetition: usize,
    pub fold: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Score of one held-out recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub site: String,
    pub setup: Setup,
    pub repetition: usize,
    pub fold: usize,
    pub subject: String,
    pub label: Label,
    pub score: f64,
}

/// All fold-level and sample-level results of an experiment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    /// Site ids in corpus order; records are sorted by this order first.
    pub sites: Vec<String>,
    pub folds: Vec<FoldRecord>,
    pub samples: Vec<SampleRecord>,
}

impl MetricsTable {
    pub fn new(sites: Vec<String>, mut folds: Vec<FoldRecord>, mut samples: Vec<SampleRecord>) -> Self {
        let rank: BTreeMap<&str, usize> = sites.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let site_rank = |s: &str| rank.get(s).copied().unwrap_or(usize::MAX);
        folds.sort_by(|a, b| {
            (site_rank(&a.site), a.setup, a.repetition, a.fold).cmp(&(
                site_rank(&b.site),
                b.setup,
                b.repetition,
                b.fold,
            ))
        });
        samples.sort_by(|a, b| {
            (site_rank(&a.site), a.setup, a.repetition, a.fold, &a.subject).cmp(&(
                site_rank(&b.site),
                b.setup,
                b.repetition,
                b.fold,
                &b.subject,
            ))
        });
        Self { sites, folds, samples }
    }

    pub fn setups(&self) -> Vec<Setup> {
        let mut s: Vec<Setup> = self.folds.iter().map(|r| r.setup).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn records(&self, site: &str, setup: Setup) -> Vec<&FoldRecord> {
        self.folds
            .iter()
            .filter(|r| r.site == site && r.setup == setup)
            .collect()
    }

    pub fn scores(&self, site: &str, setup: Setup) -> Vec<(f64, Label)> {
        self.samples
            .iter()
            .filter(|r| r.site == site && r.setup == setup)
            .map(|r| (r.score, r.label))
            .collect()
    }

    /// ROC of all held-out scores of (`site`, `setup`) pooled over folds and
    /// repetitions.
    pub fn pooled_roc(&self, site: &str, setup: Setup) -> Result<Option<Roc>> {
        let (scores, labels): (Vec<f64>, Vec<Label>) = self.scores(site, setup).into_iter().unzip();
        roc_auc(&scores, &labels)
    }

    pub fn score_histogram(&self, site: &str, setup: Setup, bins: usize) -> Result<Histogram> {
        histogram_scores(&self.scores(site, setup), bins)
    }
}

/// Mean and sample standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    /// Number of defined values.
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n: v.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub site: String,
    pub setup: Setup,
    pub records: usize,
    pub accuracy: Option<Stat>,
    pub auc: Option<Stat>,
    pub sensitivity: Option<Stat>,
    pub specificity: Option<Stat>,
    /// Paired t-test on accuracy against the federated setup of this site.
    pub versus_federated: Option<TTestResult>,
}

/// Pairs two record sets by `(repetition, fold)` and tests their accuracies.
pub fn paired_accuracy_test(a: &[&FoldRecord], b: &[&FoldRecord]) -> Result<TTestResult> {
    let key_map = |records: &[&FoldRecord], side: &str| -> Result<BTreeMap<(usize, usize), f64>> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert((r.repetition, r.fold), r.accuracy).is_some() {
                return Err(Error::Data(format!(
                    "{side}: duplicate record for repetition {}, fold {}",
                    r.repetition, r.fold
                )));
            }
        }
        Ok(map)
    };
    let ma = key_map(a, "first sample")?;
    let mb = key_map(b, "second sample")?;
    let only_a: Vec<_> = ma.keys().filter(|k| !mb.contains_key(k)).collect();
    let only_b: Vec<_> = mb.keys().filter(|k| !ma.contains_key(k)).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        let show = |keys: &[&(usize, usize)]| {
            keys.iter()
                .map(|(r, f)| format!("(rep {r}, fold {f})"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(Error::Data(format!(
            "records are not aligned; missing from second: [{}]; missing from first: [{}]",
            show(&only_a),
            show(&only_b)
        )));
    }
    let xs: Vec<f64> = ma.values().copied().collect();
    let ys: Vec<f64> = mb.values().copied().collect();
    paired_t_test(&xs, &ys)
}

/// One row per (site, setup) in table order.
pub fn summarize(table: &MetricsTable) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for site in &table.sites {
        let fed = table.records(site, Setup::Federated);
        for setup in table.setups() {
            let records = table.records(site, setup);
            if records.is_empty() {
                continue;
            }
            let versus_federated = if setup != Setup::Federated && !fed.is_empty() {
                Some(paired_accuracy_test(&records, &fed)?)
            } else {
                None
            };
            rows.push(SummaryRow {
                site: site.clone(),
                setup,
                records: records.len(),
                accuracy: Stat::of(records.iter().map(|r| r.accuracy)),
                auc: Stat::of(records.iter().filter_map(|r| r.auc)),
                sensitivity: Stat::of(records.iter().filter_map(|r| r.sensitivity)),
                specificity: Stat::of(records.iter().filter_map(|r| r.specificity)),
                versus_federated,
            });
        }
    }
    Ok(rows)
}
