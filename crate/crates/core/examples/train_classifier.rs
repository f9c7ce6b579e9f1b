//! Train the classifier on one synthetic site and check backpropagation
//! against finite differences on a small network.
//!
//!     cargo run --release --example train_classifier

use fedspeech::data::{generate_synthetic, SiteSpec, DEFAULT_SIGNAL_SEED};
use fedspeech::nn::gradcheck::{check_gradients, DEFAULT_STEP};
use fedspeech::nn::{fit, predict, Architecture, Dataset, ParameterSet, TrainConfig};
use fedspeech::pool::pool_corpus;
use fedspeech::seed::init_rng;

fn main() -> fedspeech::Result<()> {
    // Gradient check on an 8 -> 4 -> 2 network.
    let arch = Architecture::classifier(8, &[4])?;
    let params = ParameterSet::he_init(&arch, &mut init_rng(3));
    let batch = ndarray::Array2::from_shape_fn((6, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
    let labels = [0, 1, 1, 0, 1, 0];
    let report = check_gradients(&params, batch.view(), &labels, TrainConfig::default().norm(), DEFAULT_STEP)?;
    println!(
        "gradient check: {} entries, max relative error {:.2e}",
        report.checked, report.max_relative_error
    );

    // A single site: 40 PD + 40 HC, 16-dimensional embeddings.
    let spec = SiteSpec {
        site_id: "demo".into(),
        n_pd: 40,
        n_hc: 40,
        embedding_dim: 16,
        frames_range: (40, 80),
        class_separation: 1.0,
        site_shift: 0.0,
        noise_scale: 1.0,
        seed: 7,
        signal_seed: DEFAULT_SIGNAL_SEED,
    };
    let vectors = pool_corpus(&generate_synthetic(&spec)?)?;
    let (train, test): (Vec<_>, Vec<_>) = vectors.iter().enumerate().partition(|(i, _)| i % 4 != 0);
    let train = Dataset::from_vectors(train.into_iter().map(|p| p.1))?;
    let test = Dataset::from_vectors(test.into_iter().map(|p| p.1))?;

    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let arch = Architecture::classifier(train.width(), &[64, 16])?;
    let outcome = fit(&arch, &train, &cfg, false)?;
    println!(
        "training loss: epoch 1 {:.3}, epoch {} {:.3}",
        outcome.epoch_losses[0],
        cfg.epochs,
        outcome.epoch_losses.last().unwrap()
    );

    let scores = predict(&outcome.params, test.features.view(), cfg.bn_epsilon)?;
    let correct = scores
        .iter()
        .zip(&test.labels)
        .filter(|(s, &l)| (**s >= 0.5) == (l == 1))
        .count();
    println!("held-out accuracy: {correct}/{}", test.len());
    Ok(())
}
