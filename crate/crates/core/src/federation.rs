//! Simulated FedAvg: clients train one local epoch per round on their own
//! data, a server averages the returned parameter sets and redistributes
//! the result.
//!
//! The server side only ever sees [`ClientUpdate`] values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{train_epoch, AdamState, Architecture, ArrayRole, Dataset, ParameterSet, TrainConfig};
use crate::seed::{init_rng, shuffle_rng, Rng};

/// Lower bound re-applied to averaged running variances.
pub const MIN_RUNNING_VAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationScheme {
    /// Weight `n_k / sum(n)` (FedAvg).
    #[default]
    WeightedBySamples,
    /// Weight `1 / K`.
    Uniform,
}

/// What a client sends to the server after a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub site_id: String,
    pub params: ParameterSet,
    pub sample_count: usize,
}

/// Server-side combination rule.
pub trait Aggregator: Sync {
    fn aggregate(&self, updates: &[ClientUpdate]) -> Result<ParameterSet>;

    fn weights(&self, updates: &[ClientUpdate]) -> Result<Vec<f64>>;
}

/// Federated averaging over every array, running statistics included.
#[derive(Debug, Clone, Copy, Default)]
pub struct FedAvg {
    pub scheme: AggregationScheme,
}

impl Aggregator for FedAvg {
    fn aggregate(&self, updates: &[ClientUpdate]) -> Result<ParameterSet> {
        aggregate(updates, self.scheme)
    }

    fn weights(&self, updates: &[ClientUpdate]) -> Result<Vec<f64>> {
        aggregation_weights(updates, self.scheme)
    }
}

/// Indices of `updates` in site order, rejecting empty or duplicate input.
fn site_order(updates: &[ClientUpdate]) -> Result<Vec<usize>> {
    if updates.is_empty() {
        return Err(Error::Protocol("no client updates to aggregate".into()));
    }
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by(|&a, &b| updates[a].site_id.cmp(&updates[b].site_id));
    for pair in order.windows(2) {
        if updates[pair[0]].site_id == updates[pair[1]].site_id {
            return Err(Error::Protocol(format!(
                "duplicate update from site {}",
                updates[pair[0]].site_id
            )));
        }
    }
    Ok(order)
}

/// Aggregation weight of each update, in input order.
pub fn aggregation_weights(updates: &[ClientUpdate], scheme: AggregationScheme) -> Result<Vec<f64>> {
    let order = site_order(updates)?;
    if let Some(u) = updates.iter().find(|u| u.sample_count == 0) {
        return Err(Error::Protocol(format!("site {} reported zero samples", u.site_id)));
    }
    let weights = match scheme {
        AggregationScheme::Uniform => vec![1.0 / updates.len() as f64; updates.len()],
        AggregationScheme::WeightedBySamples => {
            let total: usize = order.iter().map(|&i| updates[i].sample_count).sum();
            updates
                .iter()
                .map(|u| u.sample_count as f64 / total as f64)
                .collect()
        }
    };
    let sum: f64 = order.iter().map(|&i| weights[i]).sum();
    debug_assert!((sum - 1.0).abs() < 1e-12, "weights sum to {sum}");
    Ok(weights)
}

/// Elementwise convex combination of all arrays of `updates`.
///
/// Updates are combined in `site_id` order as
/// `x_first + sum_k w_k (x_k - x_first)`, which is independent of the input
/// order and exact when all updates agree.
pub fn aggregate(updates: &[ClientUpdate], scheme: AggregationScheme) -> Result<ParameterSet> {
    let order = site_order(updates)?;
    let weights = aggregation_weights(updates, scheme)?;
    let anchor = &updates[order[0]];
    for &i in &order[1..] {
        anchor.params.check_compatible(&updates[i].params).map_err(|e| {
            Error::Protocol(format!("site {} sent incompatible parameters: {e}", updates[i].site_id))
        })?;
    }

    let mut out = anchor.params.clone();
    {
        let mut targets = out.arrays_mut();
        for &i in &order[1..] {
            let w = weights[i];
            for (dst, (src, base)) in targets
                .iter_mut()
                .zip(updates[i].params.arrays().into_iter().zip(anchor.params.arrays()))
            {
                for ((d, &s), &b) in dst.2.iter_mut().zip(src.2).zip(base.2) {
                    *d += w * (s - b);
                }
            }
        }
        for (_, role, values) in targets.iter_mut() {
            if *role == ArrayRole::RunningVar {
                values.iter_mut().for_each(|v| *v = v.max(MIN_RUNNING_VAR));
            }
        }
    }
    Ok(out)
}

/// Behavioural switches of a federation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationOptions {
    pub scheme: AggregationScheme,
    /// Clients adopt the averaged batch-norm running statistics. When off,
    /// every client keeps its own statistics and the server ignores them.
    pub aggregate_bn_stats: bool,
    /// Keep Adam moments across rounds instead of restarting each round.
    pub persist_optimizer_state: bool,
}

impl Default for FederationOptions {
    fn default() -> Self {
        Self {
            scheme: AggregationScheme::WeightedBySamples,
            aggregate_bn_stats: true,
            persist_optimizer_state: false,
        }
    }
}

/// One participating site. Owns its data; nothing here leaves the client
/// except through [`ClientUpdate`].
#[derive(Debug, Clone)]
pub struct ClientState {
    site_id: String,
    train_set: Dataset,
    rng: Rng,
    optimizer_state: Option<AdamState>,
    local_model: Option<ParameterSet>,
}

/// A client's output for one round.
#[derive(Debug, Clone)]
pub struct RoundResult {
    pub update: ClientUpdate,
    pub mean_loss: f64,
}

impl ClientState {
    /// `slot` selects the client's shuffle stream under `seed`.
    pub fn new(site_id: impl Into<String>, train_set: Dataset, seed: u64, slot: u64) -> Self {
        Self {
            site_id: site_id.into(),
            train_set,
            rng: shuffle_rng(seed, slot),
            optimizer_state: None,
            local_model: None,
        }
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn sample_count(&self) -> usize {
        self.train_set.len()
    }

    /// Starts from `global`, trains one epoch on the local data, and returns
    /// the resulting parameters with the local sample count.
    pub fn local_round(
        &mut self,
        global: &ParameterSet,
        cfg: &TrainConfig,
        options: &FederationOptions,
    ) -> Result<RoundResult> {
        let wrap = |e: Error| Error::Client {
            site: self.site_id.clone(),
            source: Box::new(e),
        };
        if self.train_set.len() < 2 {
            return Err(wrap(Error::Training(format!(
                "training set has {} sample(s), need at least 2",
                self.train_set.len()
            ))));
        }
        let mut params = global.clone();
        if !options.aggregate_bn_stats {
            if let Some(local) = &self.local_model {
                let mut own = local.clone();
                own.copy_trainable_from(global).map_err(wrap)?;
                params = own;
            }
        }
        let mut state = match (options.persist_optimizer_state, self.optimizer_state.take()) {
            (true, Some(s)) => s,
            _ => AdamState::new(&params),
        };
        let report = train_epoch(&mut params, &mut state, &self.train_set, cfg, &mut self.rng).map_err(wrap)?;
        if options.persist_optimizer_state {
            self.optimizer_state = Some(state);
        }
        if !options.aggregate_bn_stats {
            self.local_model = Some(params.clone());
        }
        Ok(RoundResult {
            update: ClientUpdate {
                site_id: self.site_id.clone(),
                params,
                sample_count: self.train_set.len(),
            },
            mean_loss: report.mean_loss,
        })
    }

    /// The model this site uses for inference once training has finished.
    pub fn deployed_model(&self, global: &ParameterSet, options: &FederationOptions) -> Result<ParameterSet> {
        match (&self.local_model, options.aggregate_bn_stats) {
            (Some(local), false) => {
                let mut own = local.clone();
                own.copy_trainable_from(global)?;
                Ok(own)
            }
            _ => Ok(global.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub site: String,
    pub loss: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct FederatedOutcome {
    pub global: ParameterSet,
    /// Inference model per client, in client order.
    pub site_models: Vec<(String, ParameterSet)>,
    pub telemetry: Vec<RoundRecord>,
}

/// Runs `rounds` rounds of local training plus aggregation, starting from a
/// He initialisation seeded by `cfg.seed`.
pub fn run_federated_training(
    clients: &mut [ClientState],
    arch: &Architecture,
    rounds: usize,
    cfg: &TrainConfig,
    aggregator: &dyn Aggregator,
    options: &FederationOptions,
) -> Result<FederatedOutcome> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Config("federation needs at least one client".into()));
    }
    if rounds == 0 {
        return Err(Error::Config("federation needs at least one round".into()));
    }
    let mut global = ParameterSet::he_init(arch, &mut init_rng(cfg.seed));
    let mut telemetry = Vec::with_capacity(rounds * clients.len());
    for round in 0..rounds {
        let results = clients
            .par_iter_mut()
            .map(|c| c.local_round(&global, cfg, options))
            .collect::<Result<Vec<_>>>()?;
        let (updates, losses): (Vec<ClientUpdate>, Vec<f64>) =
            results.into_iter().map(|r| (r.update, r.mean_loss)).unzip();
        let weights = aggregator.weights(&updates)?;
        for ((u, loss), w) in updates.iter().zip(&losses).zip(&weights) {
            telemetry.push(RoundRecord {
                round,
                site: u.site_id.clone(),
                loss: *loss,
                weight: *w,
            });
        }
        let mut next = aggregator.aggregate(&updates)?;
        if !options.aggregate_bn_stats {
            restore_running_stats(&mut next, &global);
        }
        global = next;
    }
    let site_models = clients
        .iter()
        .map(|c| Ok((c.site_id.clone(), c.deployed_model(&global, options)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FederatedOutcome {
        global,
        site_models,
        telemetry,
    })
}

fn restore_running_stats(target: &mut ParameterSet, source: &ParameterSet) {
    for (dst, src) in target.arrays_mut().into_iter().zip(source.arrays()) {
        if !dst.1.is_trainable() {
            dst.2.copy_from_slice(src.2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::fit;
    use ndarray::Array2;
    use rand::Rng as _;

    fn scalar_update(site: &str, value: f64, count: usize) -> ClientUpdate {
        let arch = Architecture::classifier(1, &[]).unwrap();
        let mut params = ParameterSet::he_init(&arch, &mut init_rng(0));
        for (_, _, v) in params.arrays_mut() {
            v.iter_mut().for_each(|x| *x = value);
        }
        ClientUpdate {
            site_id: site.into(),
            params,
            sample_count: count,
        }
    }

    fn first(p: &ParameterSet) -> f64 {
        p.layers[0].weights[[0, 0]]
    }

    fn toy(n: usize, width: usize, seed: u64) -> Dataset {
        let mut rng = init_rng(seed);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let features = Array2::from_shape_fn((n, width), |(i, j)| {
            let shift = if j == 0 { labels[i] as f64 } else { 0.0 };
            shift + rng.random::<f64>()
        });
        Dataset::new(features, labels).unwrap()
    }

    #[test]
    fn hand_computed_means() {
        let u = [scalar_update("a", 1.0, 5), scalar_update("b", 3.0, 5)];
        assert_eq!(first(&aggregate(&u, AggregationScheme::WeightedBySamples).unwrap()), 2.0);
        let u = [scalar_update("a", 0.0, 1), scalar_update("b", 4.0, 3)];
        assert_eq!(first(&aggregate(&u, AggregationScheme::WeightedBySamples).unwrap()), 3.0);
        assert_eq!(first(&aggregate(&u, AggregationScheme::Uniform).unwrap()), 2.0);
    }

    #[test]
    fn single_update_is_identity() {
        let arch = Architecture::classifier(5, &[4]).unwrap();
        let params = ParameterSet::he_init(&arch, &mut init_rng(9));
        let u = ClientUpdate {
            site_id: "only".into(),
            params: params.clone(),
            sample_count: 7,
        };
        assert_eq!(aggregate(&[u], AggregationScheme::WeightedBySamples).unwrap(), params);
    }

    #[test]
    fn protocol_errors() {
        assert!(matches!(
            aggregate(&[], AggregationScheme::Uniform),
            Err(Error::Protocol(_))
        ));
        let arch = Architecture::classifier(2, &[]).unwrap();
        let odd = ClientUpdate {
            site_id: "odd".into(),
            params: ParameterSet::he_init(&arch, &mut init_rng(0)),
            sample_count: 1,
        };
        match aggregate(&[scalar_update("a", 1.0, 1), odd], AggregationScheme::Uniform) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("odd"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let dup = [scalar_update("a", 1.0, 1), scalar_update("a", 2.0, 1)];
        assert!(matches!(aggregate(&dup, AggregationScheme::Uniform), Err(Error::Protocol(_))));
    }

    #[test]
    fn running_variance_clamped() {
        let mut a = scalar_update("a", 1.0, 1);
        let arch = Architecture::classifier(2, &[2]).unwrap();
        a.params = ParameterSet::he_init(&arch, &mut init_rng(0));
        a.params.layers[0].norm.as_mut().unwrap().running_var.fill(0.0);
        let out = aggregate(&[a], AggregationScheme::Uniform).unwrap();
        assert!(out.layers[0].norm.as_ref().unwrap().running_var.iter().all(|&v| v == MIN_RUNNING_VAR));
    }

    #[test]
    fn local_round_contract() {
        let arch = Architecture::classifier(4, &[3]).unwrap();
        let global = ParameterSet::he_init(&arch, &mut init_rng(1));
        let cfg = TrainConfig::default();
        let opts = FederationOptions::default();
        let mut c1 = ClientState::new("x", toy(9, 4, 2), 5, 0);
        let mut c2 = c1.clone();
        let r1 = c1.local_round(&global, &cfg, &opts).unwrap();
        let r2 = c2.local_round(&global, &cfg, &opts).unwrap();
        assert_eq!(r1.update, r2.update);
        assert_eq!(r1.update.sample_count, 9);

        let frozen = TrainConfig {
            learning_rate: 0.0,
            ..cfg.clone()
        };
        let r = ClientState::new("x", toy(9, 4, 2), 5, 0)
            .local_round(&global, &frozen, &opts)
            .unwrap();
        for (a, b) in r.update.params.arrays().iter().zip(global.arrays()) {
            if a.1.is_trainable() {
                assert_eq!(a.2, b.2);
            }
        }
        assert_ne!(r.update.params, global, "running statistics still move");

        let mut tiny = ClientState::new("solo", toy(1, 4, 2), 5, 0);
        match tiny.local_round(&global, &cfg, &opts) {
            Err(Error::Client { site, .. }) => assert_eq!(site, "solo"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_client_matches_local_training() {
        let arch = Architecture::classifier(6, &[5, 3]).unwrap();
        let data = toy(21, 6, 4);
        let cfg = TrainConfig {
            epochs: 6,
            seed: 77,
            ..TrainConfig::default()
        };
        let local = fit(&arch, &data, &cfg, false).unwrap();
        let mut clients = vec![ClientState::new("site", data, cfg.seed, 0)];
        let fed = run_federated_training(
            &mut clients,
            &arch,
            cfg.epochs,
            &cfg,
            &FedAvg::default(),
            &FederationOptions::default(),
        )
        .unwrap();
        assert_eq!(fed.global, local.params);
        assert_eq!(fed.telemetry.len(), 6);
        let losses: Vec<f64> = fed.telemetry.iter().map(|r| r.loss).collect();
        assert_eq!(losses, local.epoch_losses);
    }

    #[test]
    fn identical_clients_aggregate_to_either() {
        let arch = Architecture::classifier(4, &[3]).unwrap();
        let global = ParameterSet::he_init(&arch, &mut init_rng(1));
        let cfg = TrainConfig::default();
        let opts = FederationOptions::default();
        let data = toy(10, 4, 3);
        let mut a = ClientState::new("a", data.clone(), 8, 0);
        let mut b = ClientState::new("b", data.clone(), 8, 0);
        let mut c = ClientState::new("c", data, 8, 0);
        let ua = a.local_round(&global, &cfg, &opts).unwrap().update;
        let ub = b.local_round(&global, &cfg, &opts).unwrap().update;
        let uc = c.local_round(&global, &cfg, &opts).unwrap().update;
        let agg = aggregate(&[ua.clone(), ub, uc], AggregationScheme::WeightedBySamples).unwrap();
        assert_eq!(agg, ua.params);
    }

    #[test]
    fn telemetry_and_local_bn_stats() {
        let arch = Architecture::classifier(4, &[3]).unwrap();
        let cfg = TrainConfig {
            seed: 3,
            ..TrainConfig::default()
        };
        let make = || {
            vec![
                ClientState::new("a", toy(8, 4, 1), cfg.seed, 0),
                ClientState::new("b", toy(12, 4, 2), cfg.seed, 1),
            ]
        };
        let opts = FederationOptions {
            aggregate_bn_stats: false,
            persist_optimizer_state: true,
            ..FederationOptions::default()
        };
        let out = run_federated_training(&mut make(), &arch, 3, &cfg, &FedAvg::default(), &opts).unwrap();
        assert_eq!(out.telemetry.len(), 6);
        assert_eq!(out.telemetry[1].weight, 0.6);
        // global stats untouched by the server, site models carry their own
        let fresh = ParameterSet::he_init(&arch, &mut init_rng(cfg.seed));
        assert_eq!(out.global.layers[0].norm, {
            let mut n = fresh.layers[0].norm.clone().unwrap();
            n.gamma = out.global.layers[0].norm.as_ref().unwrap().gamma.clone();
            n.beta = out.global.layers[0].norm.as_ref().unwrap().beta.clone();
            Some(n)
        });
        assert_ne!(out.site_models[0].1, out.site_models[1].1);
        assert_eq!(out.site_models[0].1.layers[0].weights, out.global.layers[0].weights);
    }
}
