use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{Activation, Gradients, LayerGradients, ParameterSet};
use crate::error::{Error, Result};

/// Smallest probability fed to the logarithm in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics are used and running statistics updated.
    Train,
    /// Running statistics are used; nothing is mutated.
    Eval,
}

/// Batch-normalisation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    /// Normalised pre-activation, before gamma and beta.
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    norm: Option<NormCache>,
}

/// Activations recorded by a forward pass, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    layers: Vec<LayerCache>,
    probabilities: Array2<f64>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn probabilities(&self) -> &Array2<f64> {
        &self.probabilities
    }

    /// Normalised pre-activations (before gamma and beta) of layer `index`,
    /// if that layer is batch-normalised and the pass ran in train mode.
    pub fn normalized(&self, index: usize) -> Option<&Array2<f64>> {
        self.layers
            .get(index)
            .and_then(|l| l.norm.as_ref())
            .map(|n| &n.x_hat)
    }
}

fn check_batch(params: &ParameterSet, batch: &ArrayView2<'_, f64>, mode: Mode) -> Result<()> {
    if batch.ncols() != params.input_dim() {
        return Err(Error::shape(
            format!("{} features", params.input_dim()),
            format!("{} features", batch.ncols()),
        ));
    }
    match mode {
        Mode::Train if batch.nrows() < 2 => Err(Error::Data(format!(
            "train-mode batch needs at least 2 rows for batch statistics, got {}",
            batch.nrows()
        ))),
        Mode::Eval if batch.nrows() == 0 => Err(Error::Data("empty batch".into())),
        _ => Ok(()),
    }
}

/// Row-wise softmax with max subtraction.
fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn linear(input: &ArrayView2<'_, f64>, weights: &Array2<f64>, biases: &Array1<f64>) -> Array2<f64> {
    let mut z = input.dot(&weights.t());
    z += biases;
    z
}

/// Runs the stack on `batch` (one feature row per sample).
///
/// Train mode normalises with batch statistics and moves the running
/// statistics towards them by `norm.momentum`. Eval mode delegates to
/// [`forward_eval`] and leaves `params` untouched.
pub fn forward(
    params: &mut ParameterSet,
    batch: ArrayView2<'_, f64>,
    mode: Mode,
    norm: NormConfig,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_batch(params, &batch, mode)?;
    if mode == Mode::Eval {
        let (probs, layers) = eval_pass(params, batch, norm.epsilon, true);
        return Ok((
            probs.clone(),
            ForwardCache {
                mode,
                layers,
                probabilities: probs,
            },
        ));
    }

    let n = batch.nrows() as f64;
    let mut caches = Vec::with_capacity(params.layers.len());
    let mut current = batch.to_owned();
    for layer in params.layers.iter_mut() {
        let mut z = linear(&current.view(), &layer.weights, &layer.biases);
        let mut norm_cache = None;
        if let Some(bn) = layer.norm.as_mut() {
            let mean = z.mean_axis(Axis(0)).expect("batch is non-empty");
            z -= &mean;
            let var = z.map(|v| v * v).sum_axis(Axis(0)) / n;
            let inv_std = var.mapv(|v| 1.0 / (v + norm.epsilon).sqrt());
            z *= &inv_std;
            let x_hat = z.clone();
            z *= &bn.gamma;
            z += &bn.beta;

            let m = norm.momentum;
            Zip::from(&mut bn.running_mean)
                .and(&mean)
                .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            Zip::from(&mut bn.running_var)
                .and(&var)
                .for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            norm_cache = Some(NormCache { x_hat, inv_std });
        }
        match layer.spec.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Softmax => softmax_rows(&mut z),
            Activation::None => {}
        }
        caches.push(LayerCache {
            input: std::mem::replace(&mut current, z),
            norm: norm_cache,
        });
    }
    Ok((
        current.clone(),
        ForwardCache {
            mode,
            layers: caches,
            probabilities: current,
        },
    ))
}

/// Inference with running statistics. Pure.
pub fn forward_eval(params: &ParameterSet, batch: ArrayView2<'_, f64>, epsilon: f64) -> Result<Array2<f64>> {
    check_batch(params, &batch, Mode::Eval)?;
    Ok(eval_pass(params, batch, epsilon, false).0)
}

fn eval_pass(
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    epsilon: f64,
    record: bool,
) -> (Array2<f64>, Vec<LayerCache>) {
    let mut caches = Vec::new();
    let mut current = batch.to_owned();
    for layer in &params.layers {
        let mut z = linear(&current.view(), &layer.weights, &layer.biases);
        if let Some(bn) = &layer.norm {
            let scale = Zip::from(&bn.gamma)
                .and(&bn.running_var)
                .map_collect(|&g, &v| g / (v + epsilon).sqrt());
            let shift = &bn.beta - &(&bn.running_mean * &scale);
            z *= &scale;
            z += &shift;
        }
        match layer.spec.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Softmax => softmax_rows(&mut z),
            Activation::None => {}
        }
        let input = std::mem::replace(&mut current, z);
        if record {
            caches.push(LayerCache { input, norm: None });
        }
    }
    (current, caches)
}

fn check_labels(labels: &[u8], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(format!("{rows} labels"), format!("{} labels", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class.
pub fn cross_entropy(probabilities: &Array2<f64>, labels: &[u8]) -> Result<f64> {
    check_labels(labels, probabilities.nrows())?;
    if labels.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probabilities[[i, l as usize]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of the mean cross-entropy of a train-mode pass with respect to
/// every trainable array.
pub fn backward(params: &ParameterSet, cache: &ForwardCache, labels: &[u8]) -> Result<Gradients> {
    if cache.mode != Mode::Train {
        return Err(Error::Contract(
            "backward needs the cache of a train-mode forward pass".into(),
        ));
    }
    let probs = &cache.probabilities;
    check_labels(labels, probs.nrows())?;
    if cache.layers.len() != params.layers.len() {
        return Err(Error::shape(
            format!("{} cached layers", params.layers.len()),
            format!("{}", cache.layers.len()),
        ));
    }
    let n = probs.nrows() as f64;

    // Softmax + cross-entropy: d loss / d logits = (p - onehot) / n.
    let mut grad = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        grad[[i, l as usize]] -= 1.0;
    }
    grad /= n;

    let mut out = Vec::with_capacity(params.layers.len());
    for (index, (layer, lc)) in params.layers.iter().zip(&cache.layers).enumerate().rev() {
        if layer.spec.activation == Activation::Relu {
            // The next layer's input is this layer's ReLU output.
            let output = match cache.layers.get(index + 1) {
                Some(next) => &next.input,
                None => probs,
            };
            Zip::from(&mut grad)
                .and(output)
                .for_each(|g, &a| if a <= 0.0 { *g = 0.0 });
        }

        let (mut gamma, mut beta) = (None, None);
        if let (Some(bn), Some(nc)) = (&layer.norm, &lc.norm) {
            let d_beta = grad.sum_axis(Axis(0));
            let d_gamma = (&grad * &nc.x_hat).sum_axis(Axis(0));
            // Gradient w.r.t. the normalised value.
            let d_xhat = &grad * &bn.gamma;
            let sum_d = d_xhat.sum_axis(Axis(0));
            let sum_dx = (&d_xhat * &nc.x_hat).sum_axis(Axis(0));
            let mut dz = d_xhat * n;
            dz -= &sum_d;
            dz -= &(&nc.x_hat * &sum_dx);
            dz *= &(&nc.inv_std / n);
            grad = dz;
            gamma = Some(d_gamma);
            beta = Some(d_beta);
        } else if layer.norm.is_some() {
            return Err(Error::Contract("cache lacks batch-norm statistics".into()));
        }

        // Written into a fresh row-major array: `dot` may pick column-major
        // output for some shapes, and gradients are read as flat slices.
        let mut weights = Array2::zeros(layer.weights.raw_dim());
        general_mat_mul(1.0, &grad.t(), &lc.input, 0.0, &mut weights);
        let biases = grad.sum_axis(Axis(0));
        if index > 0 {
            grad = grad.dot(&layer.weights);
        }
        out.push(LayerGradients {
            weights,
            biases,
            gamma,
            beta,
        });
    }
    out.reverse();
    Ok(Gradients { layers: out })
}

/// Positive-class (label 1) probability per row, using running statistics.
pub fn predict(params: &ParameterSet, features: ArrayView2<'_, f64>, epsilon: f64) -> Result<Array1<f64>> {
    let probs = forward_eval(params, features, epsilon)?;
    Ok(probs.column(1).to_owned())
}
