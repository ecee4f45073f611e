//! Central finite-difference check of a model's backward pass.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::graph::PropMatrix;
use crate::models::Model;
use crate::rng;
use crate::tape::{Tape, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    /// Parameter scalars compared.
    pub entries: usize,
    /// Worst `|analytic - numeric| / max(|analytic| + |numeric|, floor)`.
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
}

/// Training-mode loss of `model`. The dropout stream is reseeded on every
/// call so all evaluations see the same masks.
fn loss(
    model: &Model,
    features: &Arc<Matrix>,
    prop: &Arc<PropMatrix>,
    labels: &[usize],
    mask: &[usize],
    dropout_seed: u64,
) -> Result<(Tape, crate::tape::Var, Vec<crate::tape::Var>), TensorError> {
    let mut tape = Tape::new(rng::stream(dropout_seed, rng::STREAM_DROPOUT));
    let pass = model.forward(&mut tape, features, prop, true)?;
    let l = tape.nll_loss(pass.log_probs, labels, mask)?;
    Ok((tape, l, pass.param_vars))
}

/// Compares every parameter gradient with `(L(θ+h) - L(θ-h)) / 2h`.
///
/// Entries where both gradients are below `floor` in magnitude are compared
/// on the absolute scale `floor`; it should sit well above the difference
/// quotient's rounding noise, roughly `ε |L| / step`.
#[allow(clippy::too_many_arguments)]
pub fn check_model_gradients(
    model: &Model,
    features: &Arc<Matrix>,
    prop: &Arc<PropMatrix>,
    labels: &[usize],
    mask: &[usize],
    dropout_seed: u64,
    step: f64,
    floor: f64,
) -> Result<GradCheck, TensorError> {
    let (mut tape, l, vars) = loss(model, features, prop, labels, mask, dropout_seed)?;
    tape.backward(l)?;
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(&model.params.params)
        .map(|(v, p)| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols()))
        })
        .collect();

    let eval = |m: &Model| -> Result<f64, TensorError> {
        let (tape, l, _) = loss(m, features, prop, labels, mask, dropout_seed)?;
        Ok(tape.value(l).get(0, 0))
    };

    let mut probe = model.clone();
    let mut result = GradCheck {
        entries: 0,
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let original = probe.params.params[pi].value.as_slice()[k];
            probe.params.params[pi].value.as_mut_slice()[k] = original + step;
            let up = eval(&probe)?;
            probe.params.params[pi].value.as_mut_slice()[k] = original - step;
            let down = eval(&probe)?;
            probe.params.params[pi].value.as_mut_slice()[k] = original;

            let numeric = (up - down) / (2.0 * step);
            let a = grad.as_slice()[k];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(floor);
            if err > result.max_relative_error {
                result.max_relative_error = err;
                result.worst_param = model.params.params[pi].name.clone();
                result.worst_index = k;
            }
            result.entries += 1;
        }
    }
    Ok(result)
}
