//! The full Local / Central / Federated comparison on a reduced preset,
//! written out the same way `fedspeech run` does.
//!
//!     cargo run --release --example experiment [OUT_DIR]

use fedspeech::config::ExperimentConfig;
use fedspeech::eval::{run_experiment, summarize};
use fedspeech::report::{summary_table, write_report};

fn main() -> fedspeech::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "fedspeech-example-out".into());

    // Full recipe apart from size: 16-dim embeddings, 5 folds, 1 repetition,
    // 10 epochs. Drop these overrides for the reference protocol.
    let mut config = ExperimentConfig::preset(16);
    config.folds = 5;
    config.repetitions = 1;
    config.train.epochs = 10;
    config.hidden_layers = vec![128, 32];
    config.output_dir = out.into();
    config.validate()?;

    let sites = config.load_sites()?;
    let output = run_experiment(&sites, &config.options())?;
    print!("{}", summary_table(&summarize(&output.table)?));
    let files = write_report(&config.output_dir, &config, &output)?;
    println!("wrote {} files to {}", files.len(), config.output_dir.display());
    Ok(())
}
