//! End-to-end runs of the `fedspeech` binary.

use std::path::Path;
use std::process::{Command, Output};

fn fedspeech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedspeech")).args(args).output().unwrap()
}

fn small_config(dir: &Path, sites: &str) -> String {
    let path = dir.join("small.toml");
    let text = format!(
        "folds = 2\nrepetitions = 2\nhidden_layers = [8]\njobs = 1\n\n[train]\nepochs = 2\nbatch_size = 8\n\n{sites}"
    );
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SYNTHETIC: &str = r#"
[[sites]]
source = "synthetic"
site_id = "north"
n_pd = 6
n_hc = 6
embedding_dim = 4
frames_range = [5, 10]
class_separation = 2.0
site_shift = 0.3
noise_scale = 1.0
seed = 1
signal_seed = 7

[[sites]]
source = "synthetic"
site_id = "south"
n_pd = 5
n_hc = 7
embedding_dim = 4
frames_range = [5, 10]
class_separation = 2.0
site_shift = 0.3
noise_scale = 1.0
seed = 2
signal_seed = 7
"#;

#[test]
fn gen_then_run_from_corpus_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SYNTHETIC);
    let corpora = dir.path().join("corpora");
    let out = fedspeech(&["gen", "--config", &cfg, "--out", corpora.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(corpora.join("north.fpsc").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(corpora.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sites"][1]["records"], 12);

    let from_files = "[[sites]]\nsource = \"corpus\"\nsite_id = \"north\"\npath = \"corpora/north.fpsc\"\n\n\
                      [[sites]]\nsource = \"corpus\"\nsite_id = \"south\"\npath = \"corpora/south.fpsc\"\n";
    let cfg2 = dir.path().join("files.toml");
    std::fs::write(&cfg2, format!("folds = 2\nrepetitions = 2\nhidden_layers = [8]\n\n[train]\nepochs = 2\nbatch_size = 8\n\n{from_files}")).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (config, out_dir) in [(cfg.as_str(), &a), (cfg2.to_str().unwrap(), &b)] {
        let out = fedspeech(&["run", "--config", config, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // Generated files hold exactly what the synthetic source produces in memory.
    for file in ["summary.csv", "records.csv", "scores.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    for file in ["telemetry.jsonl", "config.snapshot", "roc_north_federated.csv", "hist_south.csv"] {
        assert!(a.join(file).exists(), "{file}");
    }
    let records = std::fs::read_to_string(a.join("records.csv")).unwrap();
    // 2 sites x 3 setups x 2 repetitions x 2 folds, plus the header.
    assert_eq!(records.lines().count(), 1 + 24);
}

#[test]
fn compare_reports_a_t_test() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), SYNTHETIC);
    let out_dir = dir.path().join("out");
    let run = fedspeech(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--setups", "local,fl"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let records = out_dir.join("records.csv");
    let out = fedspeech(&["compare", records.to_str().unwrap(), "--site", "north", "--setup-a", "local"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("df = 3"), "{text}");
    assert!(text.contains("p = "), "{text}");

    let missing = fedspeech(&["compare", records.to_str().unwrap(), "--site", "north", "--setup-a", "central"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "folds = 1\n").unwrap();
    assert_eq!(fedspeech(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    std::fs::write(&bad, "no_such_key = 3\n").unwrap();
    assert_eq!(fedspeech(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(fedspeech(&["run", "--setups", "bogus"]).status.code(), Some(1));

    // A corpus file that is not one.
    std::fs::write(dir.path().join("junk.fpsc"), b"definitely not a corpus").unwrap();
    let cfg = small_config(
        dir.path(),
        "[[sites]]\nsource = \"corpus\"\nsite_id = \"x\"\npath = \"junk.fpsc\"\n",
    );
    let out = fedspeech(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fedspeech(&["--help"]).status.success());
}
