use super::params::{ArrayRole, Gradients, ParameterSet};
use super::train::TrainConfig;
use crate::error::{Error, Result};

/// First and second moment estimates for every trainable array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update.
///
/// Weight decay is L2-coupled (`decay * w` added to the gradient) and only
/// touches weight matrices; biases and batch-norm affine parameters are not
/// decayed.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut targets: Vec<_> = params
        .arrays_mut()
        .into_iter()
        .filter(|a| a.1.is_trainable())
        .collect();
    let grads = grads.arrays();
    let mut first = state.first_moment.arrays_mut();
    let mut second = state.second_moment.arrays_mut();
    if targets.len() != grads.len() || first.len() != grads.len() || second.len() != grads.len() {
        return Err(Error::shape(
            format!("{} trainable arrays", targets.len()),
            format!("{} gradient arrays", grads.len()),
        ));
    }
    for (((p, g), m), v) in targets.iter().zip(&grads).zip(&first).zip(&second) {
        if p.2.len() != g.2.len() || p.1 != g.1 || m.2.len() != g.2.len() || v.2.len() != g.2.len() {
            return Err(Error::shape(
                format!("layer {} {} of {}", p.0, p.1.name(), p.2.len()),
                format!("layer {} {} of {}", g.0, g.1.name(), g.2.len()),
            ));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    // lr * (m / c1) / (sqrt(v / c2) + eps), with the corrections folded
    // into two scalars so the inner loop has one sqrt and one division.
    let root2 = correction2.sqrt();
    let step_size = cfg.learning_rate * root2 / correction1;
    let eps = cfg.adam_epsilon * root2;

    for (((p, g), m), v) in targets
        .iter_mut()
        .zip(&grads)
        .zip(first.iter_mut())
        .zip(second.iter_mut())
    {
        let decay = if p.1 == ArrayRole::Weights {
            cfg.weight_decay
        } else {
            0.0
        };
        update_slice(p.2, g.2, m.2, v.2, [b1, b2, decay, step_size, eps]);
    }
    Ok(())
}

#[inline(never)]
fn update_slice(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], [b1, b2, decay, step_size, eps]: [f64; 5]) {
    let n = w.len();
    let (g, m, v) = (&g[..n], &mut m[..n], &mut v[..n]);
    for i in 0..n {
        let grad = g[i] + decay * w[i];
        m[i] = b1 * m[i] + (1.0 - b1) * grad;
        v[i] = b2 * v[i] + (1.0 - b2) * grad * grad;
        w[i] -= step_size * m[i] / (v[i].sqrt() + eps);
    }
}
