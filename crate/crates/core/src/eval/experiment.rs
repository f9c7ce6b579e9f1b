use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{plan_folds, FoldPlan, SiteCorpus};
use super::metrics::{confusion_metrics, DEFAULT_THRESHOLD};
use super::roc::roc_auc;
use super::table::{FoldRecord, MetricsTable, SampleRecord, Setup};
use crate::error::{Error, Result};
use crate::federation::{run_federated_training, ClientState, FedAvg, FederationOptions};
use crate::nn::{fit, predict, Architecture, Dataset, ParameterSet, TrainConfig, REFERENCE_HIDDEN};
use crate::pool::{FeatureVector, Label};
use crate::seed::derive;

/// Everything that shapes an experiment besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    pub setups: Vec<Setup>,
    /// `train.seed` is ignored; each (repetition, fold) derives its own.
    pub train: TrainConfig,
    pub hidden_layers: Vec<usize>,
    pub folds: usize,
    pub repetitions: usize,
    pub master_seed: u64,
    pub federation: FederationOptions,
    /// Draw new folds for every repetition (otherwise only the networks are
    /// re-initialised).
    pub reshuffle_folds: bool,
    pub threshold: f64,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            setups: Setup::ALL.to_vec(),
            train: TrainConfig::default(),
            hidden_layers: REFERENCE_HIDDEN.to_vec(),
            folds: 10,
            repetitions: 5,
            master_seed: 0,
            federation: FederationOptions::default(),
            reshuffle_folds: true,
            threshold: DEFAULT_THRESHOLD,
            jobs: 0,
        }
    }
}

impl ExperimentOptions {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.setups.is_empty() {
            return Err(Error::Config("no setups selected".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Training seed of one (repetition, fold) job, shared by every setup so
    /// that they differ only in the data they see.
    pub fn job_seed(&self, repetition: usize, fold: usize) -> u64 {
        derive(self.master_seed, &[0x7EA1, repetition as u64, fold as u64])
    }
}

/// Per-round client loss of a federated job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub repetition: usize,
    pub fold: usize,
    pub round: usize,
    pub site: String,
    pub loss: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: MetricsTable,
    pub telemetry: Vec<TelemetryRecord>,
}

struct Split<'a> {
    site: &'a str,
    train: Vec<&'a FeatureVector>,
    test: Vec<&'a FeatureVector>,
}

#[derive(Default)]
struct JobOutput {
    folds: Vec<FoldRecord>,
    samples: Vec<SampleRecord>,
    telemetry: Vec<TelemetryRecord>,
}

/// Repeated k-fold comparison of the selected setups over `sites`.
///
/// Fold indices are aligned across sites: in job (r, f) every site holds out
/// its own fold f, so no setup ever trains on another's test subjects.
pub fn run_experiment(sites: &[SiteCorpus], options: &ExperimentOptions) -> Result<ExperimentOutput> {
    options.validate()?;
    let width = check_sites(sites)?;
    let arch = Architecture::classifier(width, &options.hidden_layers)?;
    let plans = (0..options.repetitions)
        .map(|r| plan_folds(sites, options.folds, options.master_seed, r, options.reshuffle_folds))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..options.repetitions)
        .flat_map(|r| (0..options.folds).map(move |f| (r, f)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outputs = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, f)| run_job(sites, &plans[r], f, &arch, options))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut merged = JobOutput::default();
    for out in outputs {
        merged.folds.extend(out.folds);
        merged.samples.extend(out.samples);
        merged.telemetry.extend(out.telemetry);
    }
    let site_ids = sites.iter().map(|s| s.site_id.clone()).collect();
    Ok(ExperimentOutput {
        table: MetricsTable::new(site_ids, merged.folds, merged.samples),
        telemetry: merged.telemetry,
    })
}

fn check_sites(sites: &[SiteCorpus]) -> Result<usize> {
    if sites.is_empty() {
        return Err(Error::Config("experiment needs at least one site".into()));
    }
    let mut seen = BTreeSet::new();
    let mut width = None;
    for site in sites {
        if !seen.insert(site.site_id.as_str()) {
            return Err(Error::Config(format!("site {} listed twice", site.site_id)));
        }
        for v in &site.vectors {
            if v.site_id != site.site_id {
                return Err(Error::Data(format!(
                    "subject {} belongs to site {}, found in corpus of {}",
                    v.subject_id, v.site_id, site.site_id
                )));
            }
            match width {
                None => width = Some(v.values.len()),
                Some(w) if w != v.values.len() => {
                    return Err(Error::shape(
                        format!("{w} features"),
                        format!("{} features for {}/{}", v.values.len(), site.site_id, v.subject_id),
                    ))
                }
                _ => {}
            }
        }
    }
    match width {
        Some(w) if w > 0 => Ok(w),
        _ => Err(Error::Data("corpora contain no features".into())),
    }
}

fn run_job(
    sites: &[SiteCorpus],
    plan: &FoldPlan,
    fold: usize,
    arch: &Architecture,
    options: &ExperimentOptions,
) -> Result<JobOutput> {
    let repetition = plan.repetition;
    let wrap = |scope: String| {
        move |e: Error| Error::Job {
            repetition,
            fold,
            scope,
            source: Box::new(e),
        }
    };
    let splits: Vec<Split> = sites
        .iter()
        .zip(&plan.sites)
        .map(|(site, folds)| {
            let (test, train) = site.vectors.iter().partition(|v| folds.fold_of(&v.subject_id) == Some(fold));
            Split {
                site: &site.site_id,
                train,
                test,
            }
        })
        .collect();

    let mut cfg = options.train.clone();
    cfg.seed = options.job_seed(repetition, fold);
    let persist = options.federation.persist_optimizer_state;
    let mut out = JobOutput::default();

    for &setup in &options.setups {
        match setup {
            Setup::Local => {
                for split in &splits {
                    let data = Dataset::from_vectors(split.train.iter().copied())
                        .map_err(wrap(format!("site {}, local", split.site)))?;
                    let model = fit(arch, &data, &cfg, persist)
                        .map_err(wrap(format!("site {}, local", split.site)))?
                        .params;
                    evaluate(&mut out, &model, split, setup, repetition, fold, options)?;
                }
            }
            Setup::Central => {
                let data = Dataset::from_vectors(splits.iter().flat_map(|s| s.train.iter().copied()))
                    .map_err(wrap("central".into()))?;
                let model = fit(arch, &data, &cfg, persist).map_err(wrap("central".into()))?.params;
                for split in &splits {
                    evaluate(&mut out, &model, split, setup, repetition, fold, options)?;
                }
            }
            Setup::Federated => {
                let mut clients = splits
                    .iter()
                    .enumerate()
                    .map(|(slot, s)| {
                        Ok(ClientState::new(
                            s.site,
                            Dataset::from_vectors(s.train.iter().copied())?,
                            cfg.seed,
                            slot as u64,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap("federated".into()))?;
                let aggregator = FedAvg {
                    scheme: options.federation.scheme,
                };
                let outcome =
                    run_federated_training(&mut clients, arch, cfg.epochs, &cfg, &aggregator, &options.federation)
                        .map_err(wrap("federated".into()))?;
                for (split, (_, model)) in splits.iter().zip(&outcome.site_models) {
                    evaluate(&mut out, model, split, setup, repetition, fold, options)?;
                }
                out.telemetry.extend(outcome.telemetry.into_iter().map(|t| TelemetryRecord {
                    repetition,
                    fold,
                    round: t.round,
                    site: t.site,
                    loss: t.loss,
                    weight: t.weight,
                }));
            }
        }
    }
    Ok(out)
}

fn evaluate(
    out: &mut JobOutput,
    model: &ParameterSet,
    split: &Split,
    setup: Setup,
    repetition: usize,
    fold: usize,
    options: &ExperimentOptions,
) -> Result<()> {
    let scope = || format!("site {}, {setup}", split.site);
    let wrap = |e: Error| Error::Job {
        repetition,
        fold,
        scope: scope(),
        source: Box::new(e),
    };
    let data = Dataset::from_vectors(split.test.iter().copied()).map_err(wrap)?;
    let scores = predict(model, data.features.view(), options.train.bn_epsilon).map_err(wrap)?;
    let scores = scores.to_vec();
    let labels: Vec<Label> = split.test.iter().map(|v| v.label).collect();
    let confusion = confusion_metrics(&scores, &labels, options.threshold).map_err(wrap)?;
    let auc = roc_auc(&scores, &labels).map_err(wrap)?.map(|r| r.auc);
    out.folds.push(FoldRecord {
        site: split.site.to_string(),
        setup,
        repetition,
        fold,
        n_test: scores.len(),
        accuracy: confusion.accuracy,
        auc,
        sensitivity: confusion.sensitivity,
        specificity: confusion.specificity,
    });
    out.samples.extend(split.test.iter().zip(&scores).map(|(v, &score)| SampleRecord {
        site: split.site.to_string(),
        setup,
        repetition,
        fold,
        subject: v.subject_id.clone(),
        label: v.label,
        score,
    }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::init_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn site(id: &str, n_per_class: usize, shift: f64, seed: u64) -> SiteCorpus {
        let mut rng = init_rng(seed);
        let mut vectors = Vec::new();
        for i in 0..2 * n_per_class {
            let label = if i % 2 == 0 { Label::Parkinson } else { Label::Healthy };
            let sign = if label.is_positive() { 1.0 } else { -1.0 };
            let values = (0..6)
                .map(|d| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let signal = if d == 0 { sign * 1.5 } else { 0.0 };
                    signal + shift + noise
                })
                .collect();
            vectors.push(FeatureVector {
                values,
                label,
                subject_id: format!("{id}-{i:03}"),
                site_id: id.into(),
            });
        }
        SiteCorpus::new(id, vectors)
    }

    fn small_options() -> ExperimentOptions {
        ExperimentOptions {
            train: TrainConfig {
                epochs: 3,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            hidden_layers: vec![8],
            folds: 4,
            repetitions: 2,
            master_seed: 11,
            jobs: 1,
            ..ExperimentOptions::default()
        }
    }

    #[test]
    fn record_counts_and_disjointness() {
        let sites = [site("a", 10, 0.0, 1), site("b", 8, 0.5, 2)];
        let opts = small_options();
        let out = run_experiment(&sites, &opts).unwrap();
        for s in ["a", "b"] {
            for setup in Setup::ALL {
                assert_eq!(out.table.records(s, setup).len(), 8);
            }
        }
        // Every subject is scored exactly once per (site, setup, repetition).
        for s in &sites {
            for setup in Setup::ALL {
                for rep in 0..2 {
                    let mut seen: Vec<&str> = out
                        .table
                        .samples
                        .iter()
                        .filter(|r| r.site == s.site_id && r.setup == setup && r.repetition == rep)
                        .map(|r| r.subject.as_str())
                        .collect();
                    seen.sort_unstable();
                    let mut all: Vec<&str> = s.vectors.iter().map(|v| v.subject_id.as_str()).collect();
                    all.sort_unstable();
                    assert_eq!(seen, all);
                }
            }
        }
        assert_eq!(out.telemetry.len(), 2 * 4 * 3 * 2);
        for r in &out.table.folds {
            assert!((0.0..=1.0).contains(&r.accuracy));
        }
    }

    #[test]
    fn single_site_central_equals_local() {
        let sites = [site("only", 10, 0.0, 5)];
        let out = run_experiment(&sites, &small_options()).unwrap();
        let strip = |setup| -> Vec<(usize, usize, f64, Option<f64>)> {
            out.table
                .records("only", setup)
                .iter()
                .map(|r| (r.repetition, r.fold, r.accuracy, r.auc))
                .collect()
        };
        assert_eq!(strip(Setup::Local), strip(Setup::Central));
        assert_eq!(strip(Setup::Local), strip(Setup::Federated));
        let scores = |setup| -> Vec<u64> { out.table.scores("only", setup).iter().map(|s| s.0.to_bits()).collect() };
        assert_eq!(scores(Setup::Local), scores(Setup::Central));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let sites = [site("a", 8, 0.0, 1), site("b", 8, 1.0, 2)];
        let mut opts = small_options();
        let one = run_experiment(&sites, &opts).unwrap();
        opts.jobs = 3;
        let three = run_experiment(&sites, &opts).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn errors_are_classified() {
        let mut opts = small_options();
        assert!(matches!(run_experiment(&[], &opts), Err(Error::Config(_))));
        let tiny = [site("a", 3, 0.0, 1)];
        assert!(matches!(run_experiment(&tiny, &opts), Err(Error::Config(_))));
        opts.setups.clear();
        assert!(matches!(run_experiment(&[site("a", 8, 0.0, 1)], &opts), Err(Error::Config(_))));
        let dup = [site("a", 8, 0.0, 1), site("a", 8, 0.0, 2)];
        assert!(matches!(run_experiment(&dup, &small_options()), Err(Error::Config(_))));
    }
}
