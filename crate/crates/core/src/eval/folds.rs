use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::pool::{FeatureVector, Label};
use crate::seed::{derive, init_rng, stable_hash};

/// Fold index for each subject, stratified by class.
///
/// Within each class, subjects are shuffled by `seed` and dealt round-robin
/// into `k` folds, so per-class fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("fold count must be positive".into()));
    }
    let mut folds = vec![0; labels.len()];
    for class in [Label::Healthy, Label::Parkinson] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Config(format!(
                "class {class} has {} subject(s), fewer than {k} folds",
                members.len()
            )));
        }
        let mut rng = init_rng(derive(seed, &[u64::from(class.as_u8())]));
        members.shuffle(&mut rng);
        for (position, &subject) in members.iter().enumerate() {
            folds[subject] = position % k;
        }
    }
    Ok(folds)
}

/// One site's pooled feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteCorpus {
    pub site_id: String,
    pub vectors: Vec<FeatureVector>,
}

impl SiteCorpus {
    pub fn new(site_id: impl Into<String>, vectors: Vec<FeatureVector>) -> Self {
        Self {
            site_id: site_id.into(),
            vectors,
        }
    }
}

/// Fold assignment of one site's subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFolds {
    pub site_id: String,
    /// Subject ids, sorted.
    pub subjects: Vec<String>,
    pub labels: Vec<Label>,
    pub folds: Vec<usize>,
}

impl SiteFolds {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.subjects
            .binary_search_by(|s| s.as_str().cmp(subject))
            .ok()
            .map(|i| self.folds[i])
    }
}

/// Fold assignments of every site for one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub repetition: usize,
    pub k: usize,
    pub sites: Vec<SiteFolds>,
}

/// Subjects of a site with their (consistent) label, sorted by id.
pub fn subject_roster(vectors: &[FeatureVector]) -> Result<Vec<(String, Label)>> {
    let mut roster: BTreeMap<&str, Label> = BTreeMap::new();
    for v in vectors {
        match roster.insert(&v.subject_id, v.label) {
            Some(previous) if previous != v.label => {
                return Err(Error::Data(format!(
                    "subject {} at site {} has recordings with both labels",
                    v.subject_id, v.site_id
                )))
            }
            _ => {}
        }
    }
    Ok(roster.into_iter().map(|(s, l)| (s.to_string(), l)).collect())
}

/// Builds the plan for `repetition`.
///
/// The plan depends only on the master seed, the repetition seed slot and
/// each site's roster. With `reshuffle` off every repetition reuses the
/// folds of repetition 0.
pub fn plan_folds(
    sites: &[SiteCorpus],
    k: usize,
    master_seed: u64,
    repetition: usize,
    reshuffle: bool,
) -> Result<FoldPlan> {
    let seed_rep = if reshuffle { repetition as u64 } else { 0 };
    let sites = sites
        .iter()
        .map(|site| {
            let site_id = &site.site_id;
            let roster = subject_roster(&site.vectors)?;
            let labels: Vec<Label> = roster.iter().map(|r| r.1).collect();
            let seed = derive(master_seed, &[0xF01D, seed_rep, stable_hash(site_id)]);
            let folds = stratified_kfold(&labels, k, seed)
                .map_err(|e| Error::Config(format!("site {site_id}: {e}")))?;
            Ok(SiteFolds {
                site_id: site_id.clone(),
                subjects: roster.into_iter().map(|r| r.0).collect(),
                labels,
                folds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldPlan { repetition, k, sites })
}
