//! Staged training: orientation first, then the table generator, then the
//! adversarial reconstructor with the earlier stages frozen.

use crate::dataset::DatasetRecord;
use crate::error::UprightError;
use crate::image::EquirectImage;
use crate::models::config::RunConfig;
use crate::models::losses::{angle_loss, bce_loss, lut_loss, reconstruction_loss};
use crate::models::lutformer::LutFormer;
use crate::models::orientation::{encode_angles, OrientationNet};
use crate::models::reconstructor::{Discriminator, Generator, PerceptualExtractor};
use crate::nn::optim::Adam;
use crate::nn::tape::Session;
use crate::remap::{remap, Interp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Orientation,
    LutFormer,
    Reconstruction,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Orientation => "orientation",
            Stage::LutFormer => "lutformer",
            Stage::Reconstruction => "reconstruction",
        }
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        match s {
            "orientation" => Some(Stage::Orientation),
            "lutformer" => Some(Stage::LutFormer),
            "reconstruction" => Some(Stage::Reconstruction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Emit a log line every this many steps (first and last always logged).
    pub log_every: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stage: Stage,
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub losses: Vec<f64>,
    pub log: Vec<String>,
}

/// All trainable and auxiliary networks for the pipeline.
pub struct ModelBundle {
    pub orientation: OrientationNet,
    pub lutformer: LutFormer,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub extractor: PerceptualExtractor,
}

impl ModelBundle {
    pub fn new(run: &RunConfig) -> Result<Self, UprightError> {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        Ok(ModelBundle {
            orientation: OrientationNet::new(run.orientation, &mut rng)?,
            lutformer: LutFormer::new(run.lutformer, &mut rng)?,
            generator: Generator::new(run.reconstructor, &mut rng),
            discriminator: Discriminator::new(run.reconstructor, &mut rng),
            extractor: PerceptualExtractor::new(run.reconstructor.out_channels),
        })
    }
}

const DIVERGE_LIMIT: f64 = 1e8;

fn check_finite(loss: f64, step: usize) -> Result<(), UprightError> {
    if !loss.is_finite() || loss.abs() > DIVERGE_LIMIT {
        return Err(UprightError::Diverged { step });
    }
    Ok(())
}

fn batch_indices<R: Rng>(rng: &mut R, n: usize, batch: usize) -> Vec<usize> {
    (0..batch).map(|_| rng.gen_range(0..n)).collect()
}

fn should_log(step: usize, steps: usize, every: usize) -> bool {
    step == 0 || step + 1 == steps || (every > 0 && (step + 1) % every == 0)
}

/// Train one stage in place; earlier stages must already be trained and are
/// treated as frozen oracles inside the later loops.
pub fn train_stage(
    models: &mut ModelBundle,
    stage: Stage,
    records: &[DatasetRecord],
    run: &RunConfig,
    sched: &TrainSchedule,
) -> Result<TrainOutcome, UprightError> {
    if records.is_empty() {
        return Err(UprightError::EmptyInput { context: "training records" });
    }
    if sched.steps == 0 || sched.batch_size == 0 {
        return Err(UprightError::EmptyInput { context: "training schedule" });
    }
    match stage {
        Stage::Orientation => train_orientation(&mut models.orientation, records, run, sched),
        Stage::LutFormer => train_lutformer(&mut models.lutformer, records, run, sched),
        Stage::Reconstruction => train_reconstruction(models, records, run, sched),
    }
}

fn train_orientation(
    net: &mut OrientationNet,
    records: &[DatasetRecord],
    run: &RunConfig,
    sched: &TrainSchedule,
) -> Result<TrainOutcome, UprightError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut adam = Adam::new(run.lr_orientation, &net.params);
    let (c, h, w) = (net.cfg.in_channels, net.cfg.height, net.cfg.width);
    let mut losses = Vec::with_capacity(sched.steps);
    let mut log = Vec::new();
    for step in 0..sched.steps {
        let idx = batch_indices(&mut rng, records.len(), sched.batch_size);
        let n = idx.len();
        let mut input = Vec::with_capacity(n * c * h * w);
        let mut target = Vec::with_capacity(n * 2);
        for &i in &idx {
            let r = &records[i];
            input.extend(r.nonupright.data().iter().map(|v| *v as f64));
            let (p, rr) = encode_angles(r.angles);
            target.push(p);
            target.push(rr);
        }
        let mut sess = Session::new();
        let x = sess.tape.leaf(input, vec![n, c, h, w]);
        let t = sess.tape.leaf(target, vec![n, 2]);
        let (pred, _) = net.forward(&mut sess, x);
        let loss = angle_loss(&mut sess.tape, pred, t, run.weights.angle);
        let value = sess.tape.scalar(loss) / n as f64;
        check_finite(value, step)?;
        net.params.zero_grads();
        sess.backward(loss, &mut net.params);
        adam.step(&mut net.params);
        losses.push(value);
        if should_log(step, sched.steps, sched.log_every) {
            log.push(format!("step={} stage=orientation loss={:.6}", step + 1, value));
        }
    }
    Ok(TrainOutcome {
        stage: Stage::Orientation,
        steps: sched.steps,
        first_loss: losses[0],
        final_loss: *losses.last().unwrap(),
        losses,
        log,
    })
}

fn train_lutformer(
    model: &mut LutFormer,
    records: &[DatasetRecord],
    run: &RunConfig,
    sched: &TrainSchedule,
) -> Result<TrainOutcome, UprightError> {
    let want = 2 * model.cfg.out_h() * model.cfg.out_w();
    if records[0].truth_lut.data().len() != want {
        return Err(UprightError::ShapeMismatch {
            context: "truth table vs generator output",
            lhs: format!("{}", records[0].truth_lut.data().len()),
            rhs: format!("{want}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut adam = Adam::new(run.lr_lutformer, &model.params);
    let mut losses = Vec::with_capacity(sched.steps);
    let mut log = Vec::new();
    for step in 0..sched.steps {
        let idx = batch_indices(&mut rng, records.len(), sched.batch_size);
        let mut sess = Session::new();
        let mut total = None;
        for &i in &idx {
            let r = &records[i];
            let pred = model.forward(&mut sess, r.angles);
            let truth: Vec<f64> = r.truth_lut.data().iter().map(|v| *v as f64).collect();
            let shape = sess.tape.shape(pred).to_vec();
            let t = sess.tape.leaf(truth, shape);
            let item = lut_loss(&mut sess.tape, pred, t, run.weights.lut);
            total = Some(match total {
                None => item,
                Some(acc) => sess.tape.add(acc, item),
            });
        }
        let total = total.unwrap();
        let loss = sess.tape.scale(total, 1.0 / idx.len() as f64);
        let value = sess.tape.scalar(loss);
        check_finite(value, step)?;
        model.params.zero_grads();
        sess.backward(loss, &mut model.params);
        adam.step(&mut model.params);
        losses.push(value);
        if should_log(step, sched.steps, sched.log_every) {
            log.push(format!("step={} stage=lutformer loss={:.6}", step + 1, value));
        }
    }
    Ok(TrainOutcome {
        stage: Stage::LutFormer,
        steps: sched.steps,
        first_loss: losses[0],
        final_loss: *losses.last().unwrap(),
        losses,
        log,
    })
}

fn train_reconstruction(
    models: &mut ModelBundle,
    records: &[DatasetRecord],
    run: &RunConfig,
    sched: &TrainSchedule,
) -> Result<TrainOutcome, UprightError> {
    models.orientation.params.freeze_all();
    models.lutformer.params.freeze_all();
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    let mut adam_g = Adam::new(run.lr_generator, &models.generator.params);
    let mut adam_d = Adam::new(run.lr_discriminator, &models.discriminator.params);
    // shallow features of each record's tilted input, warped upright with
    // the exact table; the frozen orientation net makes these reusable
    let mut warped_cache: Vec<Option<EquirectImage>> = vec![None; records.len()];
    let mut losses = Vec::with_capacity(sched.steps);
    let mut log = Vec::new();
    for step in 0..sched.steps {
        let idx = batch_indices(&mut rng, records.len(), sched.batch_size);
        let n = idx.len();
        let mut feat_data = Vec::new();
        let mut real_data = Vec::new();
        let (mut fc, mut fh, mut fw) = (0, 0, 0);
        let (mut rc, mut rh, mut rw) = (0, 0, 0);
        for &i in &idx {
            if warped_cache[i].is_none() {
                let r = &records[i];
                let (_, shallow) = models.orientation.predict(&r.nonupright)?;
                warped_cache[i] = Some(remap(&shallow, &r.truth_lut, Interp::Bilinear)?);
            }
            let warped = warped_cache[i].as_ref().unwrap();
            (fc, fh, fw) = (warped.channels(), warped.height(), warped.width());
            feat_data.extend(warped.data().iter().map(|v| *v as f64));
            let real = &records[i].upright;
            (rc, rh, rw) = (real.channels(), real.height(), real.width());
            real_data.extend(real.data().iter().map(|v| *v as f64));
        }

        // generator pass; its output is reused (detached) for the critic step
        let mut sess = Session::new();
        let feats = sess.tape.leaf(feat_data, vec![n, fc, fh, fw]);
        let real = sess.tape.leaf(real_data.clone(), vec![n, rc, rh, rw]);
        let fake = models.generator.forward(&mut sess, feats);
        let fake_value = sess.tape.value(fake).to_vec();

        // critic step on detached images
        let mut dsess = Session::new();
        let d_real_in = dsess.tape.leaf(real_data, vec![n, rc, rh, rw]);
        let d_fake_in = dsess.tape.leaf(fake_value, vec![n, rc, rh, rw]);
        let d_real = models.discriminator.forward(&mut dsess, d_real_in);
        let d_fake = models.discriminator.forward(&mut dsess, d_fake_in);
        let l_real = bce_loss(&mut dsess.tape, d_real, 1.0);
        let l_fake = bce_loss(&mut dsess.tape, d_fake, 0.0);
        let sum = dsess.tape.add(l_real, l_fake);
        let d_loss = dsess.tape.scale(sum, 0.5);
        let d_value = dsess.tape.scalar(d_loss);
        check_finite(d_value, step)?;
        models.discriminator.params.zero_grads();
        dsess.backward(d_loss, &mut models.discriminator.params);
        adam_d.step(&mut models.discriminator.params);

        // generator step; critic and extractor parameters appear in the
        // graph but only generator gradients are applied
        let fake_feats = models.extractor.features(&mut sess, fake);
        let real_feats = models.extractor.features(&mut sess, real);
        let d_on_fake = models.discriminator.forward(&mut sess, fake);
        let (g_loss, parts) = reconstruction_loss(
            &mut sess.tape,
            fake,
            real,
            fake_feats,
            real_feats,
            d_on_fake,
            &run.weights,
        );
        check_finite(parts.total, step)?;
        models.generator.params.zero_grads();
        sess.backward(g_loss, &mut models.generator.params);
        adam_g.step(&mut models.generator.params);
        losses.push(parts.total);
        if should_log(step, sched.steps, sched.log_every) {
            log.push(format!(
                "step={} stage=reconstruction loss_g={:.6} loss_d={:.6} pixel={:.6} ssim={:.6}",
                step + 1,
                parts.total,
                d_value,
                parts.pixel,
                parts.ssim
            ));
        }
    }
    Ok(TrainOutcome {
        stage: Stage::Reconstruction,
        steps: sched.steps,
        first_loss: losses[0],
        final_loss: *losses.last().unwrap(),
        losses,
        log,
    })
}
