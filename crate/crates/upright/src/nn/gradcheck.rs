//! Central finite-difference verification of backward passes.
//!
//! Re-runs the forward computation at perturbed inputs, so the check is
//! independent of every backward closure it validates.

use crate::nn::tape::{Tape, TensorId};

/// Result of checking one input tensor of one op instance.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compare analytic gradients of `build`'s scalar output w.r.t. `input`
/// against central finite differences with the given step.
///
/// `build` receives a fresh tape and the current input values and must
/// return the scalar loss id. Relative error uses
/// `|a - n| / max(1, |a|, |n|)` so near-zero gradients compare absolutely.
pub fn check_grad<F>(input: &[f64], shape: &[usize], step: f64, build: F) -> GradCheck
where
    F: Fn(&mut Tape, TensorId) -> TensorId,
{
    // analytic
    let mut tape = Tape::new();
    let x = tape.leaf(input.to_vec(), shape.to_vec());
    let loss = build(&mut tape, x);
    let grads = tape.backward(loss);
    let analytic = grads.of(x).to_vec();

    let eval = |vals: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let x = tape.leaf(vals.to_vec(), shape.to_vec());
        let loss = build(&mut tape, x);
        tape.scalar(loss)
    };

    let mut worst = 0.0f64;
    let mut perturbed = input.to_vec();
    for i in 0..input.len() {
        let orig = perturbed[i];
        perturbed[i] = orig + step;
        let up = eval(&perturbed);
        perturbed[i] = orig - step;
        let down = eval(&perturbed);
        perturbed[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = 1.0f64.max(analytic[i].abs()).max(numeric.abs());
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    GradCheck { max_rel_error: worst, checked: input.len() }
}
