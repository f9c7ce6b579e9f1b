use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Non-linearity applied after a layer's (optionally normalised) output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub batch_norm: bool,
    pub activation: Activation,
}

/// Hidden widths of the reference classifier.
pub const REFERENCE_HIDDEN: [usize; 3] = [1024, 256, 64];

/// A validated stack of fully-connected layers ending in a two-way softmax.
///
/// Hidden layers are `Linear -> BatchNorm -> ReLU`; the output layer is
/// `Linear -> Softmax`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Config("architecture has no layers".into()));
        };
        if last.activation != Activation::Softmax || last.output_dim != 2 {
            return Err(Error::Config(
                "last layer must be a two-way softmax".into(),
            ));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim == 0 || layer.output_dim == 0 {
                return Err(Error::Config(format!("layer {i} has a zero dimension")));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Config(format!(
                    "softmax is only allowed on the output layer (found on layer {i})"
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim,
                    i + 1,
                    pair[1].input_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `input_dim -> hidden[0] -> ... -> 2`.
    pub fn classifier(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden {
            layers.push(LayerSpec {
                input_dim: fan_in,
                output_dim: width,
                batch_norm: true,
                activation: Activation::Relu,
            });
            fan_in = width;
        }
        layers.push(LayerSpec {
            input_dim: fan_in,
            output_dim: 2,
            batch_norm: false,
            activation: Activation::Softmax,
        });
        Self::new(layers)
    }

    /// The 1024/256/64/2 stack.
    pub fn reference(input_dim: usize) -> Result<Self> {
        Self::classifier(input_dim, &REFERENCE_HIDDEN)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// `output_dim x input_dim`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub norm: Option<BatchNorm>,
}

/// Role of one array inside a [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayRole {
    Weights,
    Biases,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ArrayRole {
    pub fn name(self) -> &'static str {
        match self {
            ArrayRole::Weights => "weights",
            ArrayRole::Biases => "biases",
            ArrayRole::Gamma => "gamma",
            ArrayRole::Beta => "beta",
            ArrayRole::RunningMean => "running_mean",
            ArrayRole::RunningVar => "running_var",
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, ArrayRole::RunningMean | ArrayRole::RunningVar)
    }
}

/// Every array of the classifier, trainable and normalisation statistics
/// alike, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<Layer>,
}

impl ParameterSet {
    /// He-normal weights, zero biases, identity batch-norm.
    pub fn he_init(arch: &Architecture, rng: &mut Rng) -> Self {
        let layers = arch
            .layers()
            .iter()
            .map(|spec| {
                let std = (2.0 / spec.input_dim as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("std is finite and positive");
                let weights = Array2::from_shape_simple_fn((spec.output_dim, spec.input_dim), || {
                    normal.sample(rng)
                });
                let norm = spec.batch_norm.then(|| BatchNorm {
                    gamma: Array1::ones(spec.output_dim),
                    beta: Array1::zeros(spec.output_dim),
                    running_mean: Array1::zeros(spec.output_dim),
                    running_var: Array1::ones(spec.output_dim),
                });
                Layer {
                    spec: *spec,
                    weights,
                    biases: Array1::zeros(spec.output_dim),
                    norm,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layers: self.layers.iter().map(|l| l.spec).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    /// Flat views in canonical order: per layer weights, biases, then
    /// gamma, beta, running mean, running variance when normalised.
    pub fn arrays(&self) -> Vec<(usize, ArrayRole, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((i, ArrayRole::Weights, slice(layer.weights.as_slice())));
            out.push((i, ArrayRole::Biases, slice(layer.biases.as_slice())));
            if let Some(bn) = &layer.norm {
                out.push((i, ArrayRole::Gamma, slice(bn.gamma.as_slice())));
                out.push((i, ArrayRole::Beta, slice(bn.beta.as_slice())));
                out.push((i, ArrayRole::RunningMean, slice(bn.running_mean.as_slice())));
                out.push((i, ArrayRole::RunningVar, slice(bn.running_var.as_slice())));
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(usize, ArrayRole, &mut [f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((i, ArrayRole::Weights, slice_mut(layer.weights.as_slice_mut())));
            out.push((i, ArrayRole::Biases, slice_mut(layer.biases.as_slice_mut())));
            if let Some(bn) = &mut layer.norm {
                out.push((i, ArrayRole::Gamma, slice_mut(bn.gamma.as_slice_mut())));
                out.push((i, ArrayRole::Beta, slice_mut(bn.beta.as_slice_mut())));
                out.push((
                    i,
                    ArrayRole::RunningMean,
                    slice_mut(bn.running_mean.as_slice_mut()),
                ));
                out.push((
                    i,
                    ArrayRole::RunningVar,
                    slice_mut(bn.running_var.as_slice_mut()),
                ));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, _, values)| values.iter().all(|v| v.is_finite()))
    }

    pub fn num_trainable(&self) -> usize {
        self.arrays()
            .iter()
            .filter(|(_, role, _)| role.is_trainable())
            .map(|(_, _, v)| v.len())
            .sum()
    }

    /// Same layer specs, hence same array shapes.
    pub fn check_compatible(&self, other: &ParameterSet) -> Result<()> {
        let mine: Vec<_> = self.layers.iter().map(|l| l.spec).collect();
        let theirs: Vec<_> = other.layers.iter().map(|l| l.spec).collect();
        if mine != theirs {
            return Err(Error::shape(format!("{mine:?}"), format!("{theirs:?}")));
        }
        Ok(())
    }

    /// Copies the trainable arrays of `source` into `self`, keeping the
    /// running statistics.
    pub fn copy_trainable_from(&mut self, source: &ParameterSet) -> Result<()> {
        self.check_compatible(source)?;
        for (dst, src) in self.arrays_mut().into_iter().zip(source.arrays()) {
            if dst.1.is_trainable() {
                dst.2.copy_from_slice(src.2);
            }
        }
        Ok(())
    }
}

fn slice(s: Option<&[f64]>) -> &[f64] {
    s.expect("parameter arrays are kept in standard layout")
}

fn slice_mut(s: Option<&mut [f64]>) -> &mut [f64] {
    s.expect("parameter arrays are kept in standard layout")
}

/// Gradient-shaped storage: one array per trainable parameter array.
///
/// Used for gradients and for the optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGradients {
                weights: Array2::zeros(l.weights.raw_dim()),
                biases: Array1::zeros(l.biases.len()),
                gamma: l.norm.as_ref().map(|bn| Array1::zeros(bn.gamma.len())),
                beta: l.norm.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
            })
            .collect();
        Self { layers }
    }

    /// Flat views in the same order as the trainable entries of
    /// [`ParameterSet::arrays`].
    pub fn arrays(&self) -> Vec<(usize, ArrayRole, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((i, ArrayRole::Weights, slice(layer.weights.as_slice())));
            out.push((i, ArrayRole::Biases, slice(layer.biases.as_slice())));
            if let Some(g) = &layer.gamma {
                out.push((i, ArrayRole::Gamma, slice(g.as_slice())));
            }
            if let Some(b) = &layer.beta {
                out.push((i, ArrayRole::Beta, slice(b.as_slice())));
            }
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(usize, ArrayRole, &mut [f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((i, ArrayRole::Weights, slice_mut(layer.weights.as_slice_mut())));
            out.push((i, ArrayRole::Biases, slice_mut(layer.biases.as_slice_mut())));
            if let Some(g) = &mut layer.gamma {
                out.push((i, ArrayRole::Gamma, slice_mut(g.as_slice_mut())));
            }
            if let Some(b) = &mut layer.beta {
                out.push((i, ArrayRole::Beta, slice_mut(b.as_slice_mut())));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, _, values)| values.iter().all(|v| v.is_finite()))
    }
}
