//! FedAvg across three non-IID synthetic sites, compared with training on
//! each site alone.
//!
//!     cargo run --release --example fedavg

use fedspeech::data::{generate_synthetic, three_site_preset};
use fedspeech::federation::{aggregate, run_federated_training, AggregationScheme, ClientState, ClientUpdate, FedAvg, FederationOptions};
use fedspeech::nn::{fit, predict, Architecture, Dataset, ParameterSet, TrainConfig};
use fedspeech::pool::{pool_corpus, FeatureVector};
use fedspeech::seed::init_rng;

fn accuracy(model: &ParameterSet, data: &Dataset, eps: f64) -> fedspeech::Result<f64> {
    let scores = predict(model, data.features.view(), eps)?;
    let hits = scores.iter().zip(&data.labels).filter(|(s, &l)| (**s >= 0.5) == (l == 1)).count();
    Ok(hits as f64 / data.len() as f64)
}

fn main() -> fedspeech::Result<()> {
    // The server step on its own: counts 1:3 over parameters 0 and 4.
    let arch = Architecture::classifier(1, &[])?;
    let mut a = ParameterSet::he_init(&arch, &mut init_rng(0));
    let mut b = a.clone();
    a.layers[0].weights.fill(0.0);
    b.layers[0].weights.fill(4.0);
    let updates = [
        ClientUpdate { site_id: "a".into(), params: a, sample_count: 1 },
        ClientUpdate { site_id: "b".into(), params: b, sample_count: 3 },
    ];
    let avg = aggregate(&updates, AggregationScheme::WeightedBySamples)?;
    println!("weighted mean of 0 and 4 at 1:3 = {}", avg.layers[0].weights[[0, 0]]);

    // Three sites; every fifth subject is held out.
    let mut sites = Vec::new();
    for spec in three_site_preset(16) {
        let vectors = pool_corpus(&generate_synthetic(&spec)?)?;
        let train: Vec<&FeatureVector> = vectors.iter().enumerate().filter(|(i, _)| i % 5 != 0).map(|p| p.1).collect();
        let test: Vec<&FeatureVector> = vectors.iter().enumerate().filter(|(i, _)| i % 5 == 0).map(|p| p.1).collect();
        sites.push((spec.site_id.clone(), Dataset::from_vectors(train)?, Dataset::from_vectors(test)?));
    }

    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 1e-3,
        seed: 42,
        ..TrainConfig::default()
    };
    let arch = Architecture::classifier(sites[0].1.width(), &[128, 32])?;
    // Client k shuffles with stream k under the shared seed.
    let mut clients: Vec<ClientState> = sites
        .iter()
        .enumerate()
        .map(|(slot, (id, train, _))| ClientState::new(id, train.clone(), cfg.seed, slot as u64))
        .collect();
    let aggregator = FedAvg {
        scheme: AggregationScheme::WeightedBySamples,
    };
    let outcome = run_federated_training(&mut clients, &arch, cfg.epochs, &cfg, &aggregator, &FederationOptions::default())?;
    for r in outcome.telemetry.iter().filter(|r| r.round % 5 == 4) {
        println!("round {:>2} {:>8}: loss {:.3} weight {:.3}", r.round + 1, r.site, r.loss, r.weight);
    }
    for ((site, train, test), (_, model)) in sites.iter().zip(&outcome.site_models) {
        let local = fit(&arch, train, &cfg, false)?.params;
        println!(
            "{site:>8}: local {:.1}%  federated {:.1}%",
            100.0 * accuracy(&local, test, cfg.bn_epsilon)?,
            100.0 * accuracy(model, test, cfg.bn_epsilon)?
        );
    }
    Ok(())
}
