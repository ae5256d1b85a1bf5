//! Differentiable training objectives.
//!
//! Angle regression uses a scaled smooth-L1 penalty, the look-up-table
//! stage a scaled mean absolute error, and the reconstruction stage a
//! composite of pixel, structural-similarity, perceptual, and adversarial
//! terms. All scalar weights live in [`LossWeights`].

use crate::eval::gaussian_window;
use crate::models::config::LossWeights;
use crate::nn::tape::{Tape, TensorId};

/// `weight * sum(smooth_l1(pred - target))` over a `[n, 2]` batch of
/// normalized angles.
pub fn angle_loss(tape: &mut Tape, pred: TensorId, target: TensorId, weight: f64) -> TensorId {
    let diff = tape.sub(pred, target);
    let per = tape.smooth_l1(diff);
    let total = tape.sum_all(per);
    tape.scale(total, weight)
}

/// `weight * mean(|pred - target|)` over flattened table values.
pub fn lut_loss(tape: &mut Tape, pred: TensorId, target: TensorId, weight: f64) -> TensorId {
    let diff = tape.sub(pred, target);
    let abs = tape.abs(diff);
    let mean = tape.mean_all(abs);
    tape.scale(mean, weight)
}

/// Mean binary cross-entropy of probabilities against constant labels.
/// `prob` holds values in `(0, 1)`; clamped by `EPS` for stability.
pub fn bce_loss(tape: &mut Tape, prob: TensorId, label: f64) -> TensorId {
    const EPS: f64 = 1e-12;
    // label * -log(p) + (1 - label) * -log(1 - p)
    let n = tape.value(prob).len();
    let mut acc: Option<TensorId> = None;
    if label > 0.0 {
        let shifted = tape.add_scalar(prob, EPS);
        let logp = tape.log(shifted);
        let term = tape.scale(logp, -label);
        acc = Some(term);
    }
    if label < 1.0 {
        let neg = tape.scale(prob, -1.0);
        let one_minus = tape.add_scalar(neg, 1.0 + EPS);
        let logq = tape.log(one_minus);
        let term = tape.scale(logq, -(1.0 - label));
        acc = Some(match acc {
            Some(a) => tape.add(a, term),
            None => term,
        });
    }
    let total = tape.sum_all(acc.expect("label in [0,1]"));
    tape.scale(total, 1.0 / n as f64)
}

/// Mean structural similarity between two `[c, h, w]` images on the tape,
/// computed over valid 11x11 Gaussian windows with channels treated as
/// batch entries. Returns a scalar in `[-1, 1]`.
pub fn ssim_score(tape: &mut Tape, a: TensorId, b: TensorId) -> TensorId {
    const K1: f64 = 0.01;
    const K2: f64 = 0.03;
    const WIN: usize = 11;
    let c1 = (K1 * K1) as f64;
    let c2 = (K2 * K2) as f64;
    let shape = tape.shape(a).to_vec();
    // [c, h, w] or [n, c, h, w]; batch and channel both act as batch
    let (c, h, w) = match shape.len() {
        3 => (shape[0], shape[1], shape[2]),
        4 => (shape[0] * shape[1], shape[2], shape[3]),
        _ => panic!("ssim expects [c, h, w] or [n, c, h, w]"),
    };
    assert!(h >= WIN && w >= WIN, "image smaller than ssim window");
    let kernel = gaussian_window(WIN, 1.5);
    let kt = tape.leaf(kernel, vec![1, 1, WIN, WIN]);
    let a4 = tape.reshape(a, vec![c, 1, h, w]);
    let b4 = tape.reshape(b, vec![c, 1, h, w]);
    let blur = |tape: &mut Tape, x: TensorId, k: TensorId| tape.conv2d(x, k, None, 1, 0);
    let mu_a = blur(tape, a4, kt);
    let mu_b = blur(tape, b4, kt);
    let aa = tape.mul(a4, a4);
    let bb = tape.mul(b4, b4);
    let ab = tape.mul(a4, b4);
    let m_aa = blur(tape, aa, kt);
    let m_bb = blur(tape, bb, kt);
    let m_ab = blur(tape, ab, kt);
    let mu_aa = tape.mul(mu_a, mu_a);
    let mu_bb = tape.mul(mu_b, mu_b);
    let mu_ab = tape.mul(mu_a, mu_b);
    let var_a = tape.sub(m_aa, mu_aa);
    let var_b = tape.sub(m_bb, mu_bb);
    let cov = tape.sub(m_ab, mu_ab);
    // ((2 mu_a mu_b + c1)(2 cov + c2)) / ((mu_a^2 + mu_b^2 + c1)(var_a + var_b + c2))
    let t1 = tape.scale(mu_ab, 2.0);
    let t1 = tape.add_scalar(t1, c1);
    let t2 = tape.scale(cov, 2.0);
    let t2 = tape.add_scalar(t2, c2);
    let num = tape.mul(t1, t2);
    let d1 = tape.add(mu_aa, mu_bb);
    let d1 = tape.add_scalar(d1, c1);
    let d2 = tape.add(var_a, var_b);
    let d2 = tape.add_scalar(d2, c2);
    let den = tape.mul(d1, d2);
    let map = tape.div(num, den);
    tape.mean_all(map)
}

/// Mean squared error between feature tensors.
pub fn mse_loss(tape: &mut Tape, a: TensorId, b: TensorId) -> TensorId {
    let diff = tape.sub(a, b);
    let sq = tape.mul(diff, diff);
    tape.mean_all(sq)
}

/// Component values of the reconstruction objective, recorded for logging.
#[derive(Debug, Clone, Copy)]
pub struct ReconLossBreakdown {
    pub pixel: f64,
    pub ssim: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub total: f64,
}

/// Generator-side reconstruction objective:
/// `L1 + (1 - ssim) + alpha * MSE(features) + beta * BCE(D(fake), 1)`.
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss(
    tape: &mut Tape,
    fake: TensorId,
    real: TensorId,
    fake_feats: TensorId,
    real_feats: TensorId,
    disc_on_fake: TensorId,
    weights: &LossWeights,
) -> (TensorId, ReconLossBreakdown) {
    let diff = tape.sub(fake, real);
    let abs = tape.abs(diff);
    let pixel = tape.mean_all(abs);
    let ssim = ssim_score(tape, fake, real);
    let neg_ssim = tape.scale(ssim, -1.0);
    let ssim_term = tape.add_scalar(neg_ssim, 1.0);
    let perc = mse_loss(tape, fake_feats, real_feats);
    let perc_term = tape.scale(perc, weights.perceptual);
    let adv = bce_loss(tape, disc_on_fake, 1.0);
    let adv_term = tape.scale(adv, weights.adversarial);
    let s1 = tape.add(pixel, ssim_term);
    let s2 = tape.add(s1, perc_term);
    let total = tape.add(s2, adv_term);
    let breakdown = ReconLossBreakdown {
        pixel: tape.scalar(pixel),
        ssim: tape.scalar(ssim),
        perceptual: tape.scalar(perc),
        adversarial: tape.scalar(adv),
        total: tape.scalar(total),
    };
    (total, breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::LossWeights;

    #[test]
    fn angle_loss_gradient_in_quadratic_region() {
        // d/dx of w * smooth_l1(x) at x = 0.1 is w * 0.1
        let mut tape = Tape::new();
        let pred = tape.leaf(vec![0.6, 0.5], vec![1, 2]);
        let target = tape.leaf(vec![0.5, 0.5], vec![1, 2]);
        let loss = angle_loss(&mut tape, pred, target, 1000.0);
        assert!((tape.scalar(loss) - 1000.0 * 0.5 * 0.01).abs() < 1e-9);
        let grads = tape.backward(loss);
        let g = grads.of(pred);
        assert!((g[0] - 100.0).abs() < 1e-9);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn lut_loss_is_scaled_mean_abs() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![0.0, 1.0, -1.0, 0.5], vec![4]);
        let b = tape.leaf(vec![0.0, 0.0, 0.0, 0.0], vec![4]);
        let loss = lut_loss(&mut tape, a, b, 100.0);
        assert!((tape.scalar(loss) - 100.0 * 2.5 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn bce_matches_closed_form() {
        let mut tape = Tape::new();
        let p = tape.leaf(vec![0.8, 0.3], vec![2]);
        let loss = bce_loss(&mut tape, p, 1.0);
        let expect = -((0.8f64 + 1e-12).ln() + (0.3f64 + 1e-12).ln()) / 2.0;
        assert!((tape.scalar(loss) - expect).abs() < 1e-9);
        let loss0 = bce_loss(&mut tape, p, 0.0);
        let expect0 = -((0.2f64 + 1e-12).ln() + (0.7f64 + 1e-12).ln()) / 2.0;
        assert!((tape.scalar(loss0) - expect0).abs() < 1e-6);
    }

    #[test]
    fn ssim_identical_images_is_one() {
        let mut tape = Tape::new();
        let (c, h, w) = (1usize, 12usize, 16usize);
        let data: Vec<f64> = (0..c * h * w).map(|i| (i % 7) as f64 / 7.0).collect();
        let a = tape.leaf(data.clone(), vec![c, h, w]);
        let b = tape.leaf(data, vec![c, h, w]);
        let s = ssim_score(&mut tape, a, b);
        assert!((tape.scalar(s) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_matches_reference_implementation() {
        let mut tape = Tape::new();
        let (c, h, w) = (2usize, 13usize, 15usize);
        let da: Vec<f64> = (0..c * h * w).map(|i| ((i * 31 % 101) as f64) / 101.0).collect();
        let db: Vec<f64> = (0..c * h * w).map(|i| ((i * 17 % 89) as f64) / 89.0).collect();
        let a = tape.leaf(da.clone(), vec![c, h, w]);
        let b = tape.leaf(db.clone(), vec![c, h, w]);
        let s = ssim_score(&mut tape, a, b);
        let fa: Vec<f32> = da.iter().map(|v| *v as f32).collect();
        let fb: Vec<f32> = db.iter().map(|v| *v as f32).collect();
        let ia = crate::image::EquirectImage::new(c, h, w, fa).unwrap();
        let ib = crate::image::EquirectImage::new(c, h, w, fb).unwrap();
        let reference = crate::eval::ssim(&ia, &ib).unwrap();
        assert!((tape.scalar(s) - reference).abs() < 1e-5);
    }

    #[test]
    fn reconstruction_total_combines_components() {
        let mut tape = Tape::new();
        let (c, h, w) = (1usize, 11usize, 11usize);
        let da: Vec<f64> = (0..c * h * w).map(|i| ((i % 5) as f64) / 5.0).collect();
        let db: Vec<f64> = da.iter().map(|v| (v * 0.9 + 0.05).min(1.0)).collect();
        let fake = tape.leaf(da, vec![c, h, w]);
        let real = tape.leaf(db, vec![c, h, w]);
        let ff = tape.leaf(vec![0.2, 0.4], vec![2]);
        let rf = tape.leaf(vec![0.1, 0.5], vec![2]);
        let d = tape.leaf(vec![0.6], vec![1]);
        let weights = LossWeights::default();
        let (total, parts) = reconstruction_loss(&mut tape, fake, real, ff, rf, d, &weights);
        let expect = parts.pixel
            + (1.0 - parts.ssim)
            + weights.perceptual * parts.perceptual
            + weights.adversarial * parts.adversarial;
        assert!((tape.scalar(total) - expect).abs() < 1e-9);
        assert!((parts.total - expect).abs() < 1e-9);
    }
}
