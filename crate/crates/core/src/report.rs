//! Result files of a run. Everything is written by one assembler after all
//! jobs finish, in a fixed order, so equal results give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{summarize, ExperimentOutput, FoldRecord, MetricsTable, Setup, Stat, SummaryRow};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const TELEMETRY_FILE: &str = "telemetry.jsonl";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const HISTOGRAM_BINS: usize = 10;

/// Setups that get a pooled ROC file per site.
const ROC_SETUPS: [Setup; 2] = [Setup::Central, Setup::Federated];

/// Keeps file names portable: anything but `[A-Za-z0-9_-]` becomes `_`.
pub fn file_token(site: &str) -> String {
    site.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn pct(stat: Option<Stat>) -> [String; 2] {
    match stat {
        Some(s) => [format!("{:.4}", 100.0 * s.mean), format!("{:.4}", 100.0 * s.std)],
        None => [String::new(), String::new()],
    }
}

/// `summary.csv`: one row per (site, setup); metrics in percent.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "site,setup,records,accuracy_mean,accuracy_std,auc_mean,auc_std,sensitivity_mean,sensitivity_std,\
         specificity_mean,specificity_std,t_vs_federated,p_vs_federated\n",
    );
    for r in rows {
        let (t, p) = match &r.versus_federated {
            Some(tt) => (format!("{:.6}", tt.t_statistic), format!("{:.6}", tt.p_value)),
            None => (String::new(), String::new()),
        };
        let cells = [pct(r.accuracy), pct(r.auc), pct(r.sensitivity), pct(r.specificity)].concat();
        writeln!(out, "{},{},{},{},{t},{p}", r.site, r.setup, r.records, cells.join(",")).unwrap();
    }
    out
}

/// Human-readable `mean ± std` table in percent.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let fmt = |s: Option<Stat>| s.map_or("-".to_string(), |s| format!("{:.1} ± {:.1}", 100.0 * s.mean, 100.0 * s.std));
    let mut out = format!(
        "{:<12} {:<10} {:>14} {:>14} {:>14} {:>14} {:>8}\n",
        "site", "setup", "accuracy", "auc", "sensitivity", "specificity", "p vs FL"
    );
    for r in rows {
        let p = r.versus_federated.map_or("-".to_string(), |t| format!("{:.3}", t.p_value));
        writeln!(
            out,
            "{:<12} {:<10} {:>14} {:>14} {:>14} {:>14} {:>8}",
            r.site,
            r.setup,
            fmt(r.accuracy),
            fmt(r.auc),
            fmt(r.sensitivity),
            fmt(r.specificity),
            p
        )
        .unwrap();
    }
    out
}

fn serialize_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `records.csv` written by [`write_report`].
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<FoldRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Writes every output file into `dir` (created if missing) and returns
/// their paths.
pub fn write_report(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table: &MetricsTable = &output.table;
    let mut written = Vec::new();

    let rows = summarize(table)?;
    let path = dir.join(SUMMARY_FILE);
    write_file(&path, summary_csv(&rows).as_bytes())?;
    written.push(path);

    let path = dir.join(RECORDS_FILE);
    serialize_csv(&path, &table.folds)?;
    written.push(path);

    let path = dir.join(SCORES_FILE);
    serialize_csv(&path, &table.samples)?;
    written.push(path);

    let setups = table.setups();
    for site in &table.sites {
        for setup in ROC_SETUPS.iter().filter(|s| setups.contains(s)) {
            let Some(roc) = table.pooled_roc(site, *setup)? else {
                continue;
            };
            let mut text = String::from("fpr,tpr,threshold\n");
            for p in &roc.points {
                writeln!(text, "{},{},{}", p.fpr, p.tpr, p.threshold).unwrap();
            }
            let path = dir.join(format!("roc_{}_{}.csv", file_token(site), setup));
            write_file(&path, text.as_bytes())?;
            written.push(path);
        }
        if setups.contains(&Setup::Federated) {
            let h = table.score_histogram(site, Setup::Federated, HISTOGRAM_BINS)?;
            let mut text = String::from("bin_lower,bin_upper,pd_count,hc_count\n");
            for i in 0..HISTOGRAM_BINS {
                writeln!(text, "{},{},{},{}", h.edges[i], h.edges[i + 1], h.pd_counts[i], h.hc_counts[i]).unwrap();
            }
            let path = dir.join(format!("hist_{}.csv", file_token(site)));
            write_file(&path, text.as_bytes())?;
            written.push(path);
        }
    }

    let path = dir.join(TELEMETRY_FILE);
    let mut buf = Vec::new();
    for t in &output.telemetry {
        serde_json::to_writer(&mut buf, t).map_err(|e| Error::Data(format!("telemetry: {e}")))?;
        buf.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    write_file(&path, &buf)?;
    written.push(path);

    let path = dir.join(SNAPSHOT_FILE);
    write_file(&path, config.snapshot()?.as_bytes())?;
    written.push(path);
    Ok(written)
}
