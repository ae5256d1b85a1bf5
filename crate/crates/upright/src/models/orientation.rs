//! Orientation estimation network.
//!
//! Two stride-1 stem convolutions produce shallow feature maps at the
//! input resolution (reused by the reconstructor), five blocks of
//! (maxpool, conv, conv) halve the spatial size and double the channels,
//! and an average-pooling + fully-connected head emits two values in
//! `(0, 1)` that decode affinely to pitch and roll. The head pools 2x2
//! and flattens the map rather than averaging it away entirely: tilt
//! lives in *where* activations sit, so the fully connected layer must
//! still see spatial layout.

use crate::error::UprightError;
use crate::geometry::TiltAngles;
use crate::image::EquirectImage;
use crate::models::config::OrientationNetConfig;
use crate::nn::init;
use crate::nn::params::{ParamSet, Parameter};
use crate::nn::tape::{Session, TensorId};
use rand::Rng;

pub struct OrientationNet {
    pub cfg: OrientationNetConfig,
    pub params: ParamSet,
    // parameter indices, forward-order
    stem: [(usize, usize); 2],
    blocks: Vec<[(usize, usize); 2]>,
    head: (usize, usize),
}

impl OrientationNet {
    pub fn new<R: Rng>(cfg: OrientationNetConfig, rng: &mut R) -> Result<Self, UprightError> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut conv = |params: &mut ParamSet, name: String, cin: usize, cout: usize, k: usize| {
            let fan_in = cin * k * k;
            let w = params.add(Parameter::new(
                format!("{name}.w"),
                vec![cout, cin, k, k],
                init::he_normal(rng, fan_in, cout * cin * k * k),
            ));
            let b = params.add(Parameter::new(format!("{name}.b"), vec![cout], init::zeros(cout)));
            (w, b)
        };
        let c = cfg.stem_channels;
        let stem = [
            conv(&mut params, "orientation.stem.conv1".into(), cfg.in_channels, c, 3),
            conv(&mut params, "orientation.stem.conv2".into(), c, c, 3),
        ];
        let mut blocks = Vec::with_capacity(cfg.blocks);
        let mut ch = c;
        for b in 0..cfg.blocks {
            let next = ch * 2;
            blocks.push([
                conv(&mut params, format!("orientation.block{b}.conv1"), ch, next, 3),
                conv(&mut params, format!("orientation.block{b}.conv2"), next, next, 3),
            ]);
            ch = next;
        }
        let (ph, pw) = head_spatial(&cfg);
        let feat = ch * ph * pw;
        let head_w = params.add(Parameter::new(
            "orientation.head.w",
            vec![feat, 2],
            init::uniform_fan_in(rng, feat, feat * 2),
        ));
        let head_b = params.add(Parameter::new("orientation.head.b", vec![2], init::zeros(2)));
        Ok(OrientationNet { cfg, params, stem, blocks, head: (head_w, head_b) })
    }

    /// Forward pass over a batch `[n, c, h, w]` already on the tape.
    /// Returns `([n, 2]` normalized angles in `(0, 1)`, shallow features).
    pub fn forward(&self, sess: &mut Session, input: TensorId) -> (TensorId, TensorId) {
        let conv =
            |sess: &mut Session, params: &ParamSet, x: TensorId, (w, b): (usize, usize)| {
                let wt = sess.param(params, w);
                let bt = sess.param(params, b);
                let y = sess.tape.conv2d(x, wt, Some(bt), 1, 1);
                sess.tape.relu(y)
            };
        let mut x = conv(sess, &self.params, input, self.stem[0]);
        x = conv(sess, &self.params, x, self.stem[1]);
        let shallow = x;
        for block in &self.blocks {
            x = sess.tape.maxpool2(x);
            x = conv(sess, &self.params, x, block[0]);
            x = conv(sess, &self.params, x, block[1]);
        }
        let (fh, fw) = self.cfg.final_spatial();
        let (ph, pw) = head_spatial(&self.cfg);
        let pooled = if (ph, pw) == (fh, fw) { x } else { sess.tape.avgpool2(x) };
        let n = sess.tape.shape(pooled)[0];
        let feat = self.cfg.final_channels() * ph * pw;
        let flat = sess.tape.reshape(pooled, vec![n, feat]);
        let w = sess.param(&self.params, self.head.0);
        let b = sess.param(&self.params, self.head.1);
        let logits = sess.tape.linear(flat, w, b);
        let norm = sess.tape.sigmoid(logits);
        (norm, shallow)
    }

    /// Inference on one image: predicted angles plus the shallow feature
    /// map as an image-shaped container.
    pub fn predict(&self, image: &EquirectImage) -> Result<(TiltAngles, EquirectImage), UprightError> {
        if image.channels() != self.cfg.in_channels
            || image.height() != self.cfg.height
            || image.width() != self.cfg.width
        {
            return Err(UprightError::ShapeMismatch {
                context: "orientation input",
                lhs: format!("{}x{}x{}", image.channels(), image.height(), image.width()),
                rhs: format!("{}x{}x{}", self.cfg.in_channels, self.cfg.height, self.cfg.width),
            });
        }
        let mut sess = Session::new();
        let data: Vec<f64> = image.data().iter().map(|v| *v as f64).collect();
        let x = sess.tape.leaf(data, vec![1, image.channels(), image.height(), image.width()]);
        let (norm, shallow) = self.forward(&mut sess, x);
        let p = sess.tape.value(norm)[0];
        let r = sess.tape.value(norm)[1];
        let angles = decode_angles(p, r)?;
        let sdata: Vec<f32> = sess.tape.value(shallow).iter().map(|v| *v as f32).collect();
        let sshape = sess.tape.shape(shallow).to_vec();
        let features = EquirectImage::new(sshape[1], sshape[2], sshape[3], sdata)?;
        Ok((angles, features))
    }
}

/// Spatial shape seen by the fully connected head: 2x2 average pooling
/// when the final feature map is even-sized, identity otherwise (tiny
/// configs can end at a 1-row map).
fn head_spatial(cfg: &OrientationNetConfig) -> (usize, usize) {
    let (fh, fw) = cfg.final_spatial();
    if fh % 2 == 0 && fw % 2 == 0 {
        (fh / 2, fw / 2)
    } else {
        (fh, fw)
    }
}

/// `(pitch, roll) = (p, r) * 180 - 90`; inputs must lie in `[0, 1]`.
pub fn decode_angles(p_norm: f64, r_norm: f64) -> Result<TiltAngles, UprightError> {
    for v in [p_norm, r_norm] {
        if !(0.0..=1.0).contains(&v) {
            return Err(UprightError::NormalizedOutOfRange { value: v });
        }
    }
    TiltAngles::new(p_norm * 180.0 - 90.0, r_norm * 180.0 - 90.0)
}

/// Inverse of [`decode_angles`].
pub fn encode_angles(angles: TiltAngles) -> (f64, f64) {
    ((angles.pitch() + 90.0) / 180.0, (angles.roll() + 90.0) / 180.0)
}
