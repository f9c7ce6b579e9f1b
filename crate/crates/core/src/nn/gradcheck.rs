//! Central finite-difference check of [`backward`](super::backward).
//!
//! The numerical side only calls the train-mode forward pass and the loss,
//! on a scratch copy of the parameters, so it shares no code with the
//! analytic gradient.

use ndarray::ArrayView2;

use super::network::{backward, cross_entropy, forward, Mode, NormConfig};
use super::params::{ArrayRole, ParameterSet};
use crate::error::Result;

/// Step used by [`check_gradients`] callers unless they have a reason not to.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Location of the worst relative error: layer, array, flat index.
    pub worst: (usize, ArrayRole, usize),
    pub checked: usize,
}

fn loss_at(params: &ParameterSet, batch: ArrayView2<'_, f64>, labels: &[u8], norm: NormConfig) -> Result<f64> {
    let mut scratch = params.clone();
    let (probs, _) = forward(&mut scratch, batch, Mode::Train, norm)?;
    cross_entropy(&probs, labels)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic and central-difference gradients of the mean
/// cross-entropy for every trainable entry.
pub fn check_gradients(
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    labels: &[u8],
    norm: NormConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let mut scratch = params.clone();
    let (_, cache) = forward(&mut scratch, batch, Mode::Train, norm)?;
    let analytic = backward(params, &cache, labels)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst: (0, ArrayRole::Weights, 0),
        checked: 0,
    };
    let mut probe = params.clone();
    let trainable: Vec<usize> = params
        .arrays()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.1.is_trainable())
        .map(|(i, _)| i)
        .collect();
    for (slot, grad) in trainable.into_iter().zip(analytic.arrays()) {
        for (k, &g) in grad.2.iter().enumerate() {
            let original = probe.arrays()[slot].2[k];
            probe.arrays_mut()[slot].2[k] = original + step;
            let up = loss_at(&probe, batch, labels, norm)?;
            probe.arrays_mut()[slot].2[k] = original - step;
            let down = loss_at(&probe, batch, labels, norm)?;
            probe.arrays_mut()[slot].2[k] = original;

            let numeric = (up - down) / (2.0 * step);
            let rel = relative_error(g, numeric);
            report.max_absolute_error = report.max_absolute_error.max((g - numeric).abs());
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (grad.0, grad.1, k);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Architecture;
    use crate::seed::init_rng;
    use ndarray::Array2;
    use rand::Rng as _;

    #[test]
    fn tiny_network_passes() {
        let arch = Architecture::classifier(8, &[4]).unwrap();
        let params = ParameterSet::he_init(&arch, &mut init_rng(17));
        let mut rng = init_rng(18);
        let batch = Array2::from_shape_simple_fn((4, 8), || rng.random::<f64>() * 2.0 - 1.0);
        let report = check_gradients(&params, batch.view(), &[0, 1, 1, 0], NormConfig::default(), DEFAULT_STEP)
            .unwrap();
        assert_eq!(report.checked, params.num_trainable());
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(relative_error(1.0, 1.1) > 0.05);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }
}
