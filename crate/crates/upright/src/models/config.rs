//! Model and run configuration, including the desk and paper presets.

use crate::error::UprightError;

/// Loss coefficients. Defaults: angle 1000, LUT 100, perceptual 0.01,
/// adversarial 0.01.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub angle: f64,
    pub lut: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { angle: 1000.0, lut: 100.0, perceptual: 0.01, adversarial: 0.01 }
    }
}

/// Orientation net: two stem convolutions producing shallow features, then
/// five blocks of (maxpool, conv, conv) that halve the spatial size and
/// double the channel count, then average pooling and a fully connected
/// head squashed to `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct OrientationNetConfig {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub stem_channels: usize,
    pub blocks: usize,
}

impl OrientationNetConfig {
    pub fn validate(&self) -> Result<(), UprightError> {
        let div = 1usize << self.blocks;
        if self.height / div == 0 || self.width / div == 0 || self.height % div != 0 || self.width % div != 0 {
            return Err(UprightError::ShapeMismatch {
                context: "orientation config",
                lhs: format!("{}x{}", self.height, self.width),
                rhs: format!("divisible by 2^{}", self.blocks),
            });
        }
        Ok(())
    }

    pub fn final_spatial(&self) -> (usize, usize) {
        (self.height >> self.blocks, self.width >> self.blocks)
    }

    pub fn final_channels(&self) -> usize {
        self.stem_channels << self.blocks
    }
}

/// Transformer LUT generator.
#[derive(Debug, Clone, Copy)]
pub struct LutFormerConfig {
    /// token dimension; must equal coarse_h * coarse_w
    pub embed_dim: usize,
    pub coarse_h: usize,
    pub coarse_w: usize,
    pub upsample_factor: usize,
    pub heads: usize,
    pub pre_blocks: usize,
    pub post_blocks: usize,
    /// 1-degree quantization bins over [-90, 90]
    pub vocab: usize,
    /// fully connected fusion across the two tokens (ablation switch)
    pub fc_fusion: bool,
}

impl LutFormerConfig {
    pub fn validate(&self) -> Result<(), UprightError> {
        if self.embed_dim != self.coarse_h * self.coarse_w {
            return Err(UprightError::ShapeMismatch {
                context: "lutformer config",
                lhs: format!("embed_dim {}", self.embed_dim),
                rhs: format!("coarse {}x{}", self.coarse_h, self.coarse_w),
            });
        }
        let out = 2 * self.out_h() * self.out_w();
        if self.embed_dim % self.heads != 0 || out % self.embed_dim != 0 {
            return Err(UprightError::ShapeMismatch {
                context: "lutformer config",
                lhs: format!("embed_dim {} heads {}", self.embed_dim, self.heads),
                rhs: format!("output values {out}"),
            });
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        self.coarse_h * self.upsample_factor
    }

    pub fn out_w(&self) -> usize {
        self.coarse_w * self.upsample_factor
    }

    /// token count after the upsampled field is viewed as a sequence again
    pub fn post_tokens(&self) -> usize {
        2 * self.out_h() * self.out_w() / self.embed_dim
    }
}

/// Upright reconstruction generator + patch discriminator.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructorConfig {
    pub feature_channels: usize,
    pub out_channels: usize,
    pub generator_width: usize,
    pub residual_blocks: usize,
    pub discriminator_width: usize,
}

/// Named scale presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn from_name(s: &str) -> Option<Preset> {
        match s {
            "desk" => Some(Preset::Desk),
            "paper" => Some(Preset::Paper),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

/// Full run configuration; every field has a default and the effective
/// config is echoed verbatim into checkpoints and logs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub orientation: OrientationNetConfig,
    pub lutformer: LutFormerConfig,
    pub reconstructor: ReconstructorConfig,
    pub weights: LossWeights,
    pub batch_size: usize,
    pub lr_orientation: f64,
    pub lr_lutformer: f64,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> RunConfig {
        let (h, w, stem, embed, ch, cw, heads, gw, dw) = match preset {
            Preset::Desk => (64, 128, 8, 32, 4, 8, 2, 16, 8),
            Preset::Paper => (256, 512, 8, 512, 16, 32, 8, 32, 16),
        };
        RunConfig {
            preset,
            seed: 7,
            orientation: OrientationNetConfig {
                in_channels: 3,
                height: h,
                width: w,
                stem_channels: stem,
                blocks: 5,
            },
            lutformer: LutFormerConfig {
                embed_dim: embed,
                coarse_h: ch,
                coarse_w: cw,
                upsample_factor: 16,
                heads,
                pre_blocks: 1,
                post_blocks: 2,
                vocab: 181,
                fc_fusion: true,
            },
            reconstructor: ReconstructorConfig {
                feature_channels: stem,
                out_channels: 3,
                generator_width: gw,
                residual_blocks: 5,
                discriminator_width: dw,
            },
            weights: LossWeights::default(),
            batch_size: 8,
            lr_orientation: 2e-4,
            lr_lutformer: 3e-2,
            lr_generator: 2e-4,
            lr_discriminator: 1e-4,
        }
    }

    /// Plain-text key=value rendering, echoed into every output.
    pub fn render(&self) -> String {
        format!(
            "preset={}\nseed={}\nimage={}x{}x{}\nstem_channels={}\nblocks={}\n\
             embed_dim={}\ncoarse={}x{}\nupsample_factor={}\nheads={}\n\
             pre_blocks={}\npost_blocks={}\nvocab={}\nfc_fusion={}\n\
             generator_width={}\nresidual_blocks={}\ndiscriminator_width={}\n\
             lambda_angle={}\nmu_lut={}\nalpha_perceptual={}\nbeta_adversarial={}\n\
             batch_size={}\nlr_orientation={}\nlr_lutformer={}\nlr_generator={}\nlr_discriminator={}\n\
             init=uniform_fan_in(conv,linear)+normal(0,0.02)(embedding)\nactivation=relu\nhead=sigmoid\n",
            self.preset.name(),
            self.seed,
            self.orientation.in_channels,
            self.orientation.height,
            self.orientation.width,
            self.orientation.stem_channels,
            self.orientation.blocks,
            self.lutformer.embed_dim,
            self.lutformer.coarse_h,
            self.lutformer.coarse_w,
            self.lutformer.upsample_factor,
            self.lutformer.heads,
            self.lutformer.pre_blocks,
            self.lutformer.post_blocks,
            self.lutformer.vocab,
            self.lutformer.fc_fusion,
            self.reconstructor.generator_width,
            self.reconstructor.residual_blocks,
            self.reconstructor.discriminator_width,
            self.weights.angle,
            self.weights.lut,
            self.weights.perceptual,
            self.weights.adversarial,
            self.batch_size,
            self.lr_orientation,
            self.lr_lutformer,
            self.lr_generator,
            self.lr_discriminator,
        )
    }

    /// Apply `key=value` overrides (one per line, '#' comments allowed).
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), UprightError> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| UprightError::BadFormat {
                path: "<config>".into(),
                reason: format!("expected key=value, got {line:?}"),
            })?;
            let bad = |reason: String| UprightError::BadFormat { path: "<config>".into(), reason };
            let parse_f = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad float {v:?}")));
            let parse_u = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad int {v:?}")));
            match key.trim() {
                "preset" => {
                    let p = Preset::from_name(value.trim())
                        .ok_or_else(|| bad(format!("unknown preset {value:?}")))?;
                    *self = RunConfig::preset(p);
                }
                "seed" => self.seed = value.trim().parse().map_err(|_| bad("bad seed".into()))?,
                "batch_size" => self.batch_size = parse_u(value.trim())?,
                "lr_orientation" => self.lr_orientation = parse_f(value.trim())?,
                "lr_lutformer" => self.lr_lutformer = parse_f(value.trim())?,
                "lr_generator" => self.lr_generator = parse_f(value.trim())?,
                "lr_discriminator" => self.lr_discriminator = parse_f(value.trim())?,
                "lambda_angle" => self.weights.angle = parse_f(value.trim())?,
                "mu_lut" => self.weights.lut = parse_f(value.trim())?,
                "alpha_perceptual" => self.weights.perceptual = parse_f(value.trim())?,
                "beta_adversarial" => self.weights.adversarial = parse_f(value.trim())?,
                "image_height" => {
                    // keeps the table output at the image resolution:
                    // coarse dims follow the upsample factor and the embed
                    // dim stays equal to the coarse pixel count
                    let h = parse_u(value.trim())?;
                    self.orientation.height = h;
                    self.orientation.width = 2 * h;
                    let f = self.lutformer.upsample_factor;
                    if h % f != 0 {
                        return Err(bad(format!("image_height {h} not divisible by {f}")));
                    }
                    self.lutformer.coarse_h = h / f;
                    self.lutformer.coarse_w = 2 * h / f;
                    self.lutformer.embed_dim = self.lutformer.coarse_h * self.lutformer.coarse_w;
                    self.lutformer.heads = self.lutformer.heads.min(2);
                }
                "fc_fusion" => {
                    self.lutformer.fc_fusion = value.trim().parse().map_err(|_| bad("bad bool".into()))?
                }
                other => return Err(bad(format!("unknown config key {other:?}"))),
            }
        }
        Ok(())
    }
}
