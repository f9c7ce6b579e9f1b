//! The `fedspeech` command line: `gen`, `run` and `compare`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime or
//! training error.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, SiteSource};
use crate::data::{generate_synthetic, write_corpus, CorpusFile, SiteSpec, VERSION};
use crate::error::{Error, Result};
use crate::eval::{paired_accuracy_test, run_experiment, summarize, FoldRecord, Setup, TTestResult};
use crate::report::{file_token, read_records, summary_table, write_report};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "fedspeech", version, about = "Local / central / federated training comparison on multi-site speech features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic sites as corpus files plus a manifest.
    Gen(CommonArgs),
    /// Run the cross-validated comparison and write all result files.
    Run(RunArgs),
    /// Paired t-test on accuracy between two setups of one site.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config; omitted keys take the reference defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated subset of local,central,federated.
    #[arg(long, value_delimiter = ',')]
    pub setups: Option<Vec<Setup>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// records.csv holding the first setup.
    pub records: PathBuf,
    /// records.csv holding the second setup (defaults to the first file).
    pub other: Option<PathBuf>,
    #[arg(long)]
    pub site: String,
    #[arg(long = "setup-a")]
    pub setup_a: Setup,
    #[arg(long = "setup-b", default_value = "federated")]
    pub setup_b: Setup,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

impl CommonArgs {
    /// Config file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    site_id: String,
    file: String,
    records: usize,
    spec: SiteSpec,
}

#[derive(Debug, Serialize)]
struct Manifest {
    format_version: u16,
    master_seed: u64,
    sites: Vec<ManifestEntry>,
}

/// Generates every synthetic site of `config` into `config.output_dir`.
pub fn cmd_gen(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &config.output_dir;
    let specs = config
        .sites
        .iter()
        .map(|s| match s {
            SiteSource::Synthetic(spec) => Ok(config.effective_spec(spec)),
            other => Err(Error::Config(format!(
                "gen only generates synthetic sites; site {} is read from a file",
                other.site_id()
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for spec in specs {
        let records = generate_synthetic(&spec)?;
        let file = format!("{}.fpsc", file_token(&spec.site_id));
        let path = dir.join(&file);
        let count = records.len();
        write_corpus(&path, &CorpusFile::new(spec.embedding_dim, records)?)?;
        written.push(path);
        entries.push(ManifestEntry {
            site_id: spec.site_id.clone(),
            file,
            records: count,
            spec,
        });
    }
    let manifest = Manifest {
        format_version: VERSION,
        master_seed: config.master_seed,
        sites: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(format!("manifest: {e}")))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Runs the experiment and writes the report; returns the printed summary.
pub fn cmd_run(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let sites = config.load_sites()?;
    let output = run_experiment(&sites, &config.options())?;
    write_report(&config.output_dir, config, &output)?;
    Ok(summary_table(&summarize(&output.table)?))
}

/// Pairs `setup_a` records of `site` in `a` with `setup_b` records in `b`.
pub fn cmd_compare(a: &[FoldRecord], b: &[FoldRecord], site: &str, setup_a: Setup, setup_b: Setup) -> Result<TTestResult> {
    let ra: Vec<&FoldRecord> = a.iter().filter(|r| r.site == site && r.setup == setup_a).collect();
    let rb: Vec<&FoldRecord> = b.iter().filter(|r| r.site == site && r.setup == setup_b).collect();
    if ra.is_empty() || rb.is_empty() {
        let missing = if ra.is_empty() { setup_a } else { setup_b };
        return Err(Error::Data(format!("no {missing} records for site {site}")));
    }
    paired_accuracy_test(&ra, &rb)
}

fn run_command(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Gen(args) => {
            let files = cmd_gen(&args.resolve()?)?;
            Ok(files.iter().map(|p| format!("wrote {}\n", p.display())).collect())
        }
        Command::Run(args) => {
            let mut config = args.common.resolve()?;
            if let Some(setups) = args.setups {
                config.setups = setups;
            }
            if let Some(jobs) = args.jobs {
                config.jobs = jobs;
            }
            let table = cmd_run(&config)?;
            Ok(format!("{table}results in {}\n", config.output_dir.display()))
        }
        Command::Compare(args) => {
            let a = read_records(&args.records)?;
            let b = match &args.other {
                Some(path) => read_records(path)?,
                None => a.clone(),
            };
            let t = cmd_compare(&a, &b, &args.site, args.setup_a, args.setup_b)?;
            Ok(format_comparison(&args, &t))
        }
    }
}

fn format_comparison(args: &CompareArgs, t: &TTestResult) -> String {
    let verdict = if t.significant(args.alpha) { "significant" } else { "not significant" };
    let mut out = format!(
        "site {}: {} vs {} accuracy\nmean difference {:.4}\nt = {:.4}, df = {}, p = {:.6}\n{verdict} at alpha = {}\n",
        args.site,
        args.setup_a,
        args.setup_b,
        t.mean_difference,
        t.t_statistic,
        t.degrees_of_freedom,
        t.p_value,
        args.alpha
    );
    if t.degenerate {
        out.push_str("note: differences have zero spread\n");
    }
    out
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_command(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.kind().exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(setup: Setup, fold: usize, acc: f64) -> FoldRecord {
        FoldRecord {
            site: "s".into(),
            setup,
            repetition: 0,
            fold,
            n_test: 4,
            accuracy: acc,
            auc: None,
            sensitivity: None,
            specificity: None,
        }
    }

    #[test]
    fn compare_against_itself() {
        let a: Vec<_> = (0..5).map(|f| rec(Setup::Local, f, 0.1 * f as f64)).collect();
        let t = cmd_compare(&a, &a, "s", Setup::Local, Setup::Local).unwrap();
        assert_eq!(t.p_value, 1.0);
        let mut shuffled = a.clone();
        shuffled.reverse();
        let mut b: Vec<_> = (0..5).map(|f| rec(Setup::Federated, f, 0.1 * f as f64 + 0.01 * (f % 2) as f64)).collect();
        let t1 = cmd_compare(&a, &b, "s", Setup::Local, Setup::Federated).unwrap();
        b.reverse();
        let t2 = cmd_compare(&shuffled, &b, "s", Setup::Local, Setup::Federated).unwrap();
        assert_eq!(t1, t2);
        b.pop();
        assert!(matches!(cmd_compare(&a, &b, "s", Setup::Local, Setup::Federated), Err(Error::Data(_))));
        assert!(cmd_compare(&a, &a, "nope", Setup::Local, Setup::Local).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["fedspeech", "frobnicate"]), 1);
        assert_eq!(main_with_args(["fedspeech", "run", "--config", "/no/such/config.toml"]), 1);
        let dir = tempfile::tempdir().unwrap();
        let bogus = dir.path().join("records.csv");
        fs::write(&bogus, "not,a,records\nfile\n").unwrap();
        let code = main_with_args(["fedspeech", "compare", bogus.to_str().unwrap(), "--site", "s", "--setup-a", "local"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "master_seed = 3\noutput_dir = \"o\"\n").unwrap();
        let args = CommonArgs {
            config: Some(cfg),
            seed: Some(9),
            out: None,
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.output_dir, dir.path().join("o"));
    }

    #[test]
    fn gen_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::preset(3);
        config.output_dir = dir.path().join("nested/corpora");
        let files = cmd_gen(&config).unwrap();
        assert_eq!(files.len(), 4);
        let first: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        cmd_gen(&config).unwrap();
        let second: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
    }
}
