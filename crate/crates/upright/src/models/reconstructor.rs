//! Image reconstruction stage: a residual generator that turns remapped
//! shallow feature maps back into an RGB panorama, a patch discriminator,
//! and a frozen random-projection feature extractor used for the
//! perceptual penalty.

use crate::error::UprightError;
use crate::models::config::ReconstructorConfig;
use crate::nn::init;
use crate::nn::params::{ParamSet, Parameter};
use crate::nn::tape::{Session, TensorId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv_param<R: Rng>(
    params: &mut ParamSet,
    rng: &mut R,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
) -> (usize, usize) {
    let fan_in = cin * k * k;
    let w = params.add(Parameter::new(
        format!("{name}.w"),
        vec![cout, cin, k, k],
        init::uniform_fan_in(rng, fan_in, cout * cin * k * k),
    ));
    let b = params.add(Parameter::new(format!("{name}.b"), vec![cout], init::zeros(cout)));
    (w, b)
}

pub struct Generator {
    pub cfg: ReconstructorConfig,
    pub params: ParamSet,
    stem: (usize, usize),
    residual: Vec<[(usize, usize); 2]>,
    head: (usize, usize),
}

impl Generator {
    pub fn new<R: Rng>(cfg: ReconstructorConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let g = cfg.generator_width;
        let stem =
            conv_param(&mut params, rng, "generator.stem", cfg.feature_channels, g, 3);
        let residual = (0..cfg.residual_blocks)
            .map(|i| {
                [
                    conv_param(&mut params, rng, &format!("generator.res{i}.conv1"), g, g, 3),
                    conv_param(&mut params, rng, &format!("generator.res{i}.conv2"), g, g, 3),
                ]
            })
            .collect();
        let head = conv_param(&mut params, rng, "generator.head", g, cfg.out_channels, 3);
        Generator { cfg, params, stem, residual, head }
    }

    /// `[n, feature_channels, h, w]` feature maps to `[n, out_channels, h, w]`
    /// images in `(0, 1)`.
    pub fn forward(&self, sess: &mut Session, features: TensorId) -> TensorId {
        let conv = |sess: &mut Session, x: TensorId, (w, b): (usize, usize)| {
            let wt = sess.param(&self.params, w);
            let bt = sess.param(&self.params, b);
            sess.tape.conv2d(x, wt, Some(bt), 1, 1)
        };
        let mut x = conv(sess, features, self.stem);
        x = sess.tape.relu(x);
        for block in &self.residual {
            let branch = conv(sess, x, block[0]);
            let branch = sess.tape.relu(branch);
            let branch = conv(sess, branch, block[1]);
            x = sess.tape.add(x, branch);
        }
        let logits = conv(sess, x, self.head);
        sess.tape.sigmoid(logits)
    }

    /// Sets every residual-branch weight and bias to zero, so the network
    /// reduces to stem + head. Used to probe the skip connections.
    pub fn zero_residual_branches(&mut self) {
        for block in &self.residual {
            for (w, b) in block {
                self.params.get_mut(*w).value.iter_mut().for_each(|v| *v = 0.0);
                self.params.get_mut(*b).value.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

pub struct Discriminator {
    pub cfg: ReconstructorConfig,
    pub params: ParamSet,
    layers: Vec<(usize, usize)>,
}

impl Discriminator {
    pub fn new<R: Rng>(cfg: ReconstructorConfig, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let d = cfg.discriminator_width;
        let layers = vec![
            conv_param(&mut params, rng, "discriminator.conv1", cfg.out_channels, d, 4),
            conv_param(&mut params, rng, "discriminator.conv2", d, 2 * d, 4),
            conv_param(&mut params, rng, "discriminator.head", 2 * d, 1, 4),
        ];
        Discriminator { cfg, params, layers }
    }

    /// `[n, out_channels, h, w]` image to a sigmoid patch map; each output
    /// cell scores the realism of one receptive field.
    pub fn forward(&self, sess: &mut Session, image: TensorId) -> TensorId {
        let mut x = image;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wt = sess.param(&self.params, *w);
            let bt = sess.param(&self.params, *b);
            let stride = if i == last { 1 } else { 2 };
            x = sess.tape.conv2d(x, wt, Some(bt), stride, 1);
            if i != last {
                x = sess.tape.relu(x);
            }
        }
        sess.tape.sigmoid(x)
    }
}

/// Frozen three-level convolutional pyramid with weights drawn once from a
/// fixed seed; provides a stable feature space for the perceptual penalty.
pub struct PerceptualExtractor {
    pub params: ParamSet,
    layers: Vec<(usize, usize)>,
    channels: [usize; 4],
}

impl PerceptualExtractor {
    pub const SEED: u64 = 0x5EED_FACE;

    pub fn new(in_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(Self::SEED);
        let mut params = ParamSet::new();
        let channels = [in_channels, 8, 16, 16];
        let layers = (0..3)
            .map(|i| {
                conv_param(
                    &mut params,
                    &mut rng,
                    &format!("perceptual.conv{i}"),
                    channels[i],
                    channels[i + 1],
                    3,
                )
            })
            .collect();
        params.freeze_all();
        PerceptualExtractor { params, layers, channels }
    }

    pub fn features(&self, sess: &mut Session, image: TensorId) -> TensorId {
        let mut x = image;
        for (w, b) in &self.layers {
            let wt = sess.param(&self.params, *w);
            let bt = sess.param(&self.params, *b);
            x = sess.tape.conv2d(x, wt, Some(bt), 2, 1);
            x = sess.tape.relu(x);
        }
        x
    }

    pub fn out_channels(&self) -> usize {
        self.channels[3]
    }
}

/// Errors if the image tensor shape disagrees with the configured layout.
pub fn check_image_shape(
    shape: &[usize],
    channels: usize,
    context: &'static str,
) -> Result<(), UprightError> {
    if shape.len() != 4 || shape[1] != channels {
        return Err(UprightError::ShapeMismatch {
            context,
            lhs: format!("{shape:?}"),
            rhs: format!("[n, {channels}, h, w]"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::config::{Preset, RunConfig};

    fn desk_cfg() -> ReconstructorConfig {
        RunConfig::preset(Preset::Desk).reconstructor
    }

    #[test]
    fn zeroed_residual_branches_reduce_to_stem_and_head() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut full = Generator::new(cfg, &mut rng);
        full.zero_residual_branches();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bare = Generator::new(ReconstructorConfig { residual_blocks: 0, ..cfg }, &mut rng);
        // same seed, same draw order for stem; head weights differ across the
        // two models, so copy them over by name before comparing
        let mut bare = bare;
        for name in ["generator.head.w", "generator.head.b"] {
            let src = full.params.by_name(name).unwrap().value.clone();
            bare.params.by_name_mut(name).unwrap().value = src;
        }
        let (c, h, w) = (cfg.feature_channels, 16, 32);
        let data: Vec<f64> = (0..c * h * w).map(|i| ((i * 13 % 97) as f64) / 97.0).collect();
        let mut s1 = Session::new();
        let x1 = s1.tape.leaf(data.clone(), vec![1, c, h, w]);
        let y1 = full.forward(&mut s1, x1);
        let mut s2 = Session::new();
        let x2 = s2.tape.leaf(data, vec![1, c, h, w]);
        let y2 = bare.forward(&mut s2, x2);
        let v1 = s1.tape.value(y1);
        let v2 = s2.tape.value(y2);
        for (a, b) in v1.iter().zip(v2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn discriminator_patch_map_shrinks_and_is_probability() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let disc = Discriminator::new(cfg, &mut rng);
        let (c, h, w) = (cfg.out_channels, 32, 64);
        let data = vec![0.5f64; c * h * w];
        let mut sess = Session::new();
        let x = sess.tape.leaf(data, vec![1, c, h, w]);
        let y = disc.forward(&mut sess, x);
        let shape = sess.tape.shape(y).to_vec();
        assert_eq!(shape[0..2], [1, 1]);
        assert!(shape[2] < h && shape[3] < w);
        for &v in sess.tape.value(y).iter() {
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn discriminator_responds_to_content_shift() {
        let cfg = desk_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let disc = Discriminator::new(cfg, &mut rng);
        let (c, h, w) = (cfg.out_channels, 32, 64);
        let a: Vec<f64> = (0..c * h * w).map(|i| ((i % 11) as f64) / 11.0).collect();
        let b: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let mut sess = Session::new();
        let xa = sess.tape.leaf(a, vec![1, c, h, w]);
        let xb = sess.tape.leaf(b, vec![1, c, h, w]);
        let ya = disc.forward(&mut sess, xa);
        let yb = disc.forward(&mut sess, xb);
        assert_ne!(sess.tape.value(ya), sess.tape.value(yb));
    }

    #[test]
    fn perceptual_extractor_is_frozen_and_reproducible() {
        let e1 = PerceptualExtractor::new(3);
        let e2 = PerceptualExtractor::new(3);
        for (a, b) in e1.params.iter().zip(e2.params.iter()) {
            assert_eq!(a.value, b.value);
            assert!(a.frozen);
        }
        let data: Vec<f64> = (0..3 * 24 * 24).map(|i| ((i % 7) as f64) / 7.0).collect();
        let mut sess = Session::new();
        let x = sess.tape.leaf(data, vec![1, 3, 24, 24]);
        let f = e1.features(&mut sess, x);
        let shape = sess.tape.shape(f).to_vec();
        assert_eq!(shape, vec![1, 16, 3, 3]);
    }
}
