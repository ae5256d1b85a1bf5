//! Transformer that maps a (pitch, roll) pair to a remapping table.
//!
//! The two angles index a shared embedding table of one-degree bins,
//! pick up learned positional vectors, and pass through encoder blocks.
//! An optional fully-connected stage fuses the two tokens, the fused
//! coarse table is upsampled bilinearly to full resolution, refined by
//! further encoder blocks over a reshaped token sequence, and squashed
//! by `tanh` into normalized source coordinates.

use crate::error::UprightError;
use crate::geometry::TiltAngles;
use crate::lut::{Lut, LutDirection};
use crate::models::config::LutFormerConfig;
use crate::nn::init;
use crate::nn::params::{ParamSet, Parameter};
use crate::nn::tape::{Session, TensorId};
use rand::Rng;

struct EncoderBlock {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln1: (usize, usize),
    ff_w1: usize,
    ff_b1: usize,
    ff_w2: usize,
    ff_b2: usize,
    ln2: (usize, usize),
}

pub struct LutFormer {
    pub cfg: LutFormerConfig,
    pub params: ParamSet,
    embedding: usize,
    positional: usize,
    pre: Vec<EncoderBlock>,
    fusion: Option<(usize, usize)>,
    post: Vec<EncoderBlock>,
}

fn encoder_block<R: Rng>(
    params: &mut ParamSet,
    rng: &mut R,
    name: &str,
    d: usize,
) -> EncoderBlock {
    let mut mat = |params: &mut ParamSet, suffix: &str, rows: usize, cols: usize| {
        params.add(Parameter::new(
            format!("{name}.{suffix}"),
            vec![rows, cols],
            init::uniform_fan_in(rng, rows, rows * cols),
        ))
    };
    let wq = mat(params, "wq", d, d);
    let wk = mat(params, "wk", d, d);
    let wv = mat(params, "wv", d, d);
    let wo = mat(params, "wo", d, d);
    let ln1 = (
        params.add(Parameter::new(format!("{name}.ln1.gain"), vec![d], init::ones(d))),
        params.add(Parameter::new(format!("{name}.ln1.shift"), vec![d], init::zeros(d))),
    );
    let ff_w1 = mat(params, "ff.w1", d, 2 * d);
    let ff_b1 = params.add(Parameter::new(format!("{name}.ff.b1"), vec![2 * d], init::zeros(2 * d)));
    let ff_w2 = mat(params, "ff.w2", 2 * d, d);
    let ff_b2 = params.add(Parameter::new(format!("{name}.ff.b2"), vec![d], init::zeros(d)));
    let ln2 = (
        params.add(Parameter::new(format!("{name}.ln2.gain"), vec![d], init::ones(d))),
        params.add(Parameter::new(format!("{name}.ln2.shift"), vec![d], init::zeros(d))),
    );
    EncoderBlock { wq, wk, wv, wo, ln1, ff_w1, ff_b1, ff_w2, ff_b2, ln2 }
}

impl LutFormer {
    pub fn new<R: Rng>(cfg: LutFormerConfig, rng: &mut R) -> Result<Self, UprightError> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let mut params = ParamSet::new();
        let embedding = params.add(Parameter::new(
            "lutformer.embedding",
            vec![cfg.vocab, d],
            init::normal(rng, 0.02, cfg.vocab * d),
        ));
        let positional = params.add(Parameter::new(
            "lutformer.positional",
            vec![2, d],
            init::normal(rng, 0.02, 2 * d),
        ));
        let pre = (0..cfg.pre_blocks)
            .map(|i| encoder_block(&mut params, rng, &format!("lutformer.pre{i}"), d))
            .collect();
        let fusion = if cfg.fc_fusion {
            let w = params.add(Parameter::new(
                "lutformer.fusion.w",
                vec![2 * d, 2 * d],
                init::uniform_fan_in(rng, 2 * d, 4 * d * d),
            ));
            let b = params.add(Parameter::new(
                "lutformer.fusion.b",
                vec![2 * d],
                init::zeros(2 * d),
            ));
            Some((w, b))
        } else {
            None
        };
        let post = (0..cfg.post_blocks)
            .map(|i| encoder_block(&mut params, rng, &format!("lutformer.post{i}"), d))
            .collect();
        Ok(LutFormer { cfg, params, embedding, positional, pre, fusion, post })
    }

    fn run_block(&self, sess: &mut Session, block: &EncoderBlock, x: TensorId) -> TensorId {
        let p = &self.params;
        let wq = sess.param(p, block.wq);
        let wk = sess.param(p, block.wk);
        let wv = sess.param(p, block.wv);
        let wo = sess.param(p, block.wo);
        let attended = sess.tape.multihead_self_attention(x, self.cfg.heads, wq, wk, wv, wo);
        let res = sess.tape.add(x, attended);
        let g1 = sess.param(p, block.ln1.0);
        let s1 = sess.param(p, block.ln1.1);
        let normed = sess.tape.layer_norm(res, g1, s1);
        let w1 = sess.param(p, block.ff_w1);
        let b1 = sess.param(p, block.ff_b1);
        let hidden = sess.tape.linear(normed, w1, b1);
        let hidden = sess.tape.relu(hidden);
        let w2 = sess.param(p, block.ff_w2);
        let b2 = sess.param(p, block.ff_b2);
        let ff = sess.tape.linear(hidden, w2, b2);
        let res2 = sess.tape.add(normed, ff);
        let g2 = sess.param(p, block.ln2.0);
        let s2 = sess.param(p, block.ln2.1);
        sess.tape.layer_norm(res2, g2, s2)
    }

    /// One-degree bin index for an angle in `[-90, 90]`.
    pub fn angle_bin(angle: f64) -> usize {
        (angle + 90.0).round().clamp(0.0, 180.0) as usize
    }

    /// Forward pass for one angle pair. Returns a `[2, out_h, out_w]`
    /// tensor of normalized source coordinates in `(-1, 1)`.
    pub fn forward(&self, sess: &mut Session, angles: TiltAngles) -> TensorId {
        let d = self.cfg.embed_dim;
        let bins = [Self::angle_bin(angles.pitch()), Self::angle_bin(angles.roll())];
        let table = sess.param(&self.params, self.embedding);
        let mut x = sess.tape.embedding(table, &bins);
        let pos = sess.param(&self.params, self.positional);
        x = sess.tape.add(x, pos);
        for block in &self.pre {
            x = self.run_block(sess, block, x);
        }
        if let Some((w, b)) = self.fusion {
            let flat = sess.tape.reshape(x, vec![1, 2 * d]);
            let wt = sess.param(&self.params, w);
            let bt = sess.param(&self.params, b);
            let fused = sess.tape.linear(flat, wt, bt);
            x = sess.tape.reshape(fused, vec![2, d]);
        }
        let coarse = sess.tape.reshape(x, vec![1, 2, self.cfg.coarse_h, self.cfg.coarse_w]);
        let fine = sess.tape.bilinear_upsample(coarse, self.cfg.upsample_factor);
        let (oh, ow) = (self.cfg.out_h(), self.cfg.out_w());
        let tokens = self.cfg.post_tokens();
        let mut seq = sess.tape.reshape(fine, vec![tokens, d]);
        for block in &self.post {
            seq = self.run_block(sess, block, seq);
        }
        let squashed = sess.tape.tanh(seq);
        sess.tape.reshape(squashed, vec![2, oh, ow])
    }

    /// Inference: predicted table packaged as an upright-warp [`Lut`].
    pub fn generate(&self, angles: TiltAngles) -> Result<Lut, UprightError> {
        let mut sess = Session::new();
        let out = self.forward(&mut sess, angles);
        let data: Vec<f32> = sess.tape.value(out).iter().map(|v| *v as f32).collect();
        Lut::from_data(
            self.cfg.out_h(),
            self.cfg.out_w(),
            LutDirection::InverseUpright,
            angles,
            data,
        )
    }
}
