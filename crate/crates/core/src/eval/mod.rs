mod experiment;
mod folds;
mod metrics;
mod roc;
mod table;
mod ttest;

pub use experiment::{run_experiment, ExperimentOptions, ExperimentOutput, TelemetryRecord};
pub use folds::{plan_folds, stratified_kfold, subject_roster, FoldPlan, SiteCorpus, SiteFolds};
pub use metrics::{confusion_metrics, histogram_scores, Confusion, Histogram, DEFAULT_THRESHOLD};
pub use roc::{roc_auc, Roc, RocPoint};
pub use table::{paired_accuracy_test, summarize, FoldRecord, MetricsTable, SampleRecord, Setup, Stat, SummaryRow};
pub use ttest::{ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_sf, TTestResult};
