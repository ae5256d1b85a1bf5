//! Full upright-adjustment pipeline: orientation estimate, remapping
//! table, and reconstruction, with switches that swap each learned stage
//! for its exact counterpart.

use crate::error::UprightError;
use crate::geometry::{EquirectGrid, TiltAngles};
use crate::image::EquirectImage;
use crate::lut::{generate_lut, Lut, LutDirection};
use crate::models::lutformer::LutFormer;
use crate::models::orientation::OrientationNet;
use crate::models::reconstructor::Generator;
use crate::nn::tape::Session;
use crate::remap::{remap, Interp};

/// Where the remapping table comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LutSource {
    /// Predicted by the transformer.
    Learned,
    /// Computed exactly from the predicted angles.
    Analytic,
}

/// How the upright image is produced from the remapped data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMode {
    /// Remap shallow features and decode with the generator.
    Learned,
    /// Remap the input image directly; no learned decoding.
    Identity,
}

pub struct EndToEnd {
    pub orientation: OrientationNet,
    pub lutformer: LutFormer,
    pub generator: Generator,
    pub lut_source: LutSource,
    pub reconstruction: ReconstructionMode,
}

/// Everything the pipeline produces for one input panorama.
pub struct AdjustOutput {
    pub angles: TiltAngles,
    pub lut: Lut,
    pub upright: EquirectImage,
}

impl EndToEnd {
    /// Run the pipeline on one panorama.
    pub fn adjust(&self, image: &EquirectImage) -> Result<AdjustOutput, UprightError> {
        let grid = EquirectGrid::new(image.height(), image.width())?;
        let (angles, shallow) = self.orientation.predict(image)?;
        let lut = match self.lut_source {
            LutSource::Learned => {
                let lut = self.lutformer.generate(angles)?;
                if lut.height() != image.height() || lut.width() != image.width() {
                    return Err(UprightError::ShapeMismatch {
                        context: "predicted table vs image",
                        lhs: format!("{}x{}", lut.height(), lut.width()),
                        rhs: format!("{}x{}", image.height(), image.width()),
                    });
                }
                lut
            }
            LutSource::Analytic => generate_lut(angles, grid, LutDirection::InverseUpright),
        };
        let upright = match self.reconstruction {
            ReconstructionMode::Identity => remap(image, &lut, Interp::Bilinear)?,
            ReconstructionMode::Learned => {
                let warped = remap(&shallow, &lut, Interp::Bilinear)?;
                let mut sess = Session::new();
                let data: Vec<f64> = warped.data().iter().map(|v| *v as f64).collect();
                let x = sess.tape.leaf(
                    data,
                    vec![1, warped.channels(), warped.height(), warped.width()],
                );
                let out = self.generator.forward(&mut sess, x);
                let shape = sess.tape.shape(out).to_vec();
                let pixels: Vec<f32> =
                    sess.tape.value(out).iter().map(|v| *v as f32).collect();
                EquirectImage::new(shape[1], shape[2], shape[3], pixels)?
            }
        };
        Ok(AdjustOutput { angles, lut, upright })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_panorama, PanoramaStyle};
    use crate::models::config::{Preset, RunConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_pipeline(lut_source: LutSource, reconstruction: ReconstructionMode) -> EndToEnd {
        let run = RunConfig::preset(Preset::Desk);
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        EndToEnd {
            orientation: OrientationNet::new(run.orientation, &mut rng).unwrap(),
            lutformer: LutFormer::new(run.lutformer, &mut rng).unwrap(),
            generator: Generator::new(run.reconstructor, &mut rng),
            lut_source,
            reconstruction,
        }
    }

    #[test]
    fn analytic_identity_path_matches_direct_remap_bitwise() {
        let pipe = desk_pipeline(LutSource::Analytic, ReconstructionMode::Identity);
        let grid = EquirectGrid::new(64, 128).unwrap();
        let img = synth_panorama(21, grid, PanoramaStyle::Boxes);
        let out = pipe.adjust(&img).unwrap();
        let lut = generate_lut(out.angles, grid, LutDirection::InverseUpright);
        let direct = remap(&img, &lut, Interp::Bilinear).unwrap();
        assert_eq!(out.upright.data(), direct.data());
    }

    #[test]
    fn learned_path_produces_rgb_at_input_resolution() {
        let pipe = desk_pipeline(LutSource::Learned, ReconstructionMode::Learned);
        let grid = EquirectGrid::new(64, 128).unwrap();
        let img = synth_panorama(22, grid, PanoramaStyle::Stripes);
        let out = pipe.adjust(&img).unwrap();
        assert_eq!(out.upright.channels(), 3);
        assert_eq!(out.upright.height(), 64);
        assert_eq!(out.upright.width(), 128);
        assert_eq!(out.lut.height(), 64);
        for &v in out.upright.data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
