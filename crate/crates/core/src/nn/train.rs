use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{backward, cross_entropy, forward, Mode, NormConfig};
use super::params::{Architecture, ParameterSet};
use crate::error::{Error, Result};
use crate::pool::FeatureVector;
use crate::seed::{init_rng, shuffle_rng, Rng};

/// Optimisation hyperparameters.
///
/// Learning rate, weight decay, batch size and epoch count default to the
/// reference recipe. The batch-norm and Adam moment constants are the usual
/// library conventions; the recipe does not pin them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Seed for initialisation and shuffling. Experiment runs overwrite it
    /// with a value derived from their master seed.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 8e-5,
            weight_decay: 5e-6,
            batch_size: 16,
            epochs: 50,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn norm(&self) -> NormConfig {
        NormConfig {
            momentum: self.bn_momentum,
            epsilon: self.bn_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid {what}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay");
        }
        if self.batch_size < 2 {
            return bad("batch_size (must be at least 2)");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return bad("bn_momentum");
        }
        if !(self.bn_epsilon > 0.0) {
            return bad("bn_epsilon");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon");
        }
        Ok(())
    }
}

/// Feature rows with their labels, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(
                format!("{} labels", features.nrows()),
                format!("{} labels", labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self { features, labels })
    }

    /// Stacks feature vectors in the given order.
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let vectors: Vec<&FeatureVector> = vectors.into_iter().collect();
        let width = vectors.first().map_or(0, |v| v.values.len());
        let mut flat = Vec::with_capacity(vectors.len() * width);
        let mut labels = Vec::with_capacity(vectors.len());
        for v in &vectors {
            if v.values.len() != width {
                return Err(Error::shape(
                    format!("{width} features"),
                    format!("{} features for subject {}", v.values.len(), v.subject_id),
                ));
            }
            flat.extend_from_slice(&v.values);
            labels.push(v.label.as_u8());
        }
        let features = Array2::from_shape_vec((vectors.len(), width), flat)
            .expect("row-major buffer matches its declared shape");
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }
}

/// Mini-batch sizes for `n` samples: full batches, then the remainder,
/// except that a remainder of one joins the previous batch.
pub fn batch_sizes(n: usize, batch_size: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Training(format!(
            "cannot form a train-mode batch from {n} sample(s)"
        )));
    }
    let batch_size = batch_size.max(2);
    let mut sizes = vec![batch_size; n / batch_size];
    match n % batch_size {
        0 => {}
        1 => *sizes.last_mut().expect("n >= 2 with remainder 1 implies a full batch") += 1,
        r => sizes.push(r),
    }
    Ok(sizes)
}

/// Summary of one pass over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// Sample-weighted mean of the per-batch training losses.
    pub mean_loss: f64,
    pub batches: usize,
}

/// One shuffled pass over `data` with an optimizer step per mini-batch.
pub fn train_epoch(
    params: &mut ParameterSet,
    state: &mut AdamState,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<EpochReport> {
    if data.width() != params.input_dim() {
        return Err(Error::shape(
            format!("{} features", params.input_dim()),
            format!("{} features", data.width()),
        ));
    }
    let sizes = batch_sizes(data.len(), cfg.batch_size)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);

    let norm = cfg.norm();
    let mut offset = 0;
    let mut loss_sum = 0.0;
    for &size in &sizes {
        let idx = &order[offset..offset + size];
        offset += size;
        let batch = data.features.select(Axis(0), idx);
        let labels: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
        let (probs, cache) = forward(params, batch.view(), Mode::Train, norm)?;
        loss_sum += cross_entropy(&probs, &labels)? * size as f64;
        let grads = backward(params, &cache, &labels)?;
        adam_step(params, &grads, state, cfg)?;
    }
    if !params.is_finite() {
        return Err(Error::Training("non-finite parameters after epoch".into()));
    }
    Ok(EpochReport {
        mean_loss: loss_sum / data.len() as f64,
        batches: sizes.len(),
    })
}

/// Result of [`fit`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ParameterSet,
    pub epoch_losses: Vec<f64>,
}

/// Plain (non-federated) training for `cfg.epochs` epochs from a fresh
/// He initialisation seeded by `cfg.seed`.
///
/// Unless `persist_optimizer_state` is set, the Adam moments restart at
/// every epoch, mirroring what a federated client does at every round.
pub fn fit(
    arch: &Architecture,
    data: &Dataset,
    cfg: &TrainConfig,
    persist_optimizer_state: bool,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut params = ParameterSet::he_init(arch, &mut init_rng(cfg.seed));
    let mut rng = shuffle_rng(cfg.seed, 0);
    let mut state = AdamState::new(&params);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if !persist_optimizer_state {
            state = AdamState::new(&params);
        }
        epoch_losses.push(train_epoch(&mut params, &mut state, data, cfg, &mut rng)?.mean_loss);
    }
    Ok(FitOutcome {
        params,
        epoch_losses,
    })
}
