//! Synthetic panorama corpus and tilt-augmentation records.
//!
//! Upright panoramas are drawn procedurally (a horizon gradient plus
//! optional vertical structures), then tilted by a known angle pair; the
//! record keeps the tilted image, the angles and the inverse LUT that
//! undoes the tilt.

use crate::error::UprightError;
use crate::geometry::{EquirectGrid, TiltAngles};
use crate::image::{load_ppm, save_ppm, EquirectImage};
use crate::lut::{generate_lut, load_lut, save_lut, Lut, LutDirection};
use crate::remap::{rotate_image, Interp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanoramaStyle {
    HorizonGradient,
    Boxes,
    Stripes,
}

impl PanoramaStyle {
    pub const ALL: [PanoramaStyle; 3] =
        [PanoramaStyle::HorizonGradient, PanoramaStyle::Boxes, PanoramaStyle::Stripes];

    pub fn name(&self) -> &'static str {
        match self {
            PanoramaStyle::HorizonGradient => "horizon",
            PanoramaStyle::Boxes => "boxes",
            PanoramaStyle::Stripes => "stripes",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "horizon" => Some(PanoramaStyle::HorizonGradient),
            "boxes" => Some(PanoramaStyle::Boxes),
            "stripes" => Some(PanoramaStyle::Stripes),
            _ => None,
        }
    }
}

/// Deterministic upright panorama. Every style keeps a sharp sky/ground
/// boundary at the equator so orientation is recoverable from photometry;
/// Boxes and Stripes add vertical structure.
pub fn synth_panorama(seed: u64, grid: EquirectGrid, style: PanoramaStyle) -> EquirectImage {
    let (h, w) = (grid.height(), grid.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sky: [f32; 3] = [
        0.55 + 0.3 * rng.gen::<f32>(),
        0.6 + 0.3 * rng.gen::<f32>(),
        0.8 + 0.2 * rng.gen::<f32>(),
    ];
    let ground: [f32; 3] = [
        0.25 + 0.2 * rng.gen::<f32>(),
        0.15 + 0.2 * rng.gen::<f32>(),
        0.05 + 0.1 * rng.gen::<f32>(),
    ];
    let mut img = EquirectImage::zeros(3, h, w);
    for y in 0..h {
        // fraction of the way from zenith to nadir
        let t = (y as f32 + 0.5) / h as f32;
        let above = t < 0.5;
        for x in 0..w {
            for c in 0..3 {
                let base = if above {
                    // brighter toward the zenith
                    sky[c] * (1.0 - 0.4 * t * 2.0)
                } else {
                    // dimmer toward the nadir
                    ground[c] * (0.6 - 0.4 * (t - 0.5) * 2.0)
                };
                img.set(c, y, x, base.clamp(0.0, 1.0));
            }
        }
    }
    match style {
        PanoramaStyle::HorizonGradient => {}
        PanoramaStyle::Boxes => {
            let n = 4 + (rng.gen::<u32>() % 4) as usize;
            for _ in 0..n {
                let bw = w / 16 + rng.gen_range(0..w / 8);
                let bh = h / 8 + rng.gen_range(0..h / 4);
                let x0 = rng.gen_range(0..w);
                let y0 = h / 2;
                let shade: f32 = 0.2 + 0.5 * rng.gen::<f32>();
                for dy in 0..bh {
                    let y = y0.saturating_sub(dy);
                    for dx in 0..bw {
                        let x = (x0 + dx) % w;
                        for c in 0..3 {
                            img.set(c, y, x, shade * (0.8 + 0.2 * c as f32 / 3.0));
                        }
                    }
                }
            }
        }
        PanoramaStyle::Stripes => {
            let n = 6 + (rng.gen::<u32>() % 6) as usize;
            for _ in 0..n {
                let x0 = rng.gen_range(0..w);
                let sw = 1 + rng.gen_range(0..w / 32 + 1);
                let shade: f32 = 0.1 + 0.3 * rng.gen::<f32>();
                for y in 0..h {
                    for dx in 0..sw {
                        let x = (x0 + dx) % w;
                        img.set(0, y, x, shade);
                        img.set(1, y, x, shade * 0.9);
                        img.set(2, y, x, shade * 1.1_f32.min(1.0));
                    }
                }
            }
        }
    }
    img
}

/// One training triple plus its upright target.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub id: usize,
    pub style: PanoramaStyle,
    pub angles: TiltAngles,
    pub nonupright: EquirectImage,
    pub upright: EquirectImage,
    /// InverseUpright LUT at the feature resolution.
    pub truth_lut: Lut,
}

/// Tilt an upright panorama and pair it with the inverse LUT that undoes
/// the tilt.
pub fn make_record(
    upright: EquirectImage,
    angles: TiltAngles,
    feature_grid: EquirectGrid,
) -> Result<DatasetRecord, UprightError> {
    let nonupright = rotate_image(&upright, angles, LutDirection::ForwardTilt, Interp::Bilinear)?;
    let truth_lut = generate_lut(angles, feature_grid, LutDirection::InverseUpright);
    Ok(DatasetRecord { id: 0, style: PanoramaStyle::HorizonGradient, angles, nonupright, upright, truth_lut })
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub train: Vec<DatasetRecord>,
    pub val: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

/// Draw `n` records with angles uniform on the 1°-quantized lattice within
/// `angle_range` (degrees, symmetric), split 70/15/15 with styles
/// stratified round-robin across the splits.
pub fn build_dataset(
    n: usize,
    angle_range: f64,
    step: f64,
    seed: u64,
    grid: EquirectGrid,
    feature_grid: EquirectGrid,
) -> Result<DatasetSplits, UprightError> {
    if n < 10 {
        return Err(UprightError::DatasetTooSmall { n });
    }
    let bins = crate::lut::axis_count(-angle_range, angle_range, step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for id in 0..n {
        let style = PanoramaStyle::ALL[id % PanoramaStyle::ALL.len()];
        // per-record seed: deterministic regardless of worker count
        let image_seed = seed
            .wrapping_mul(0x9E3779B97F4A7C15)
            .wrapping_add(id as u64);
        let pitch = -angle_range + step * rng.gen_range(0..bins) as f64;
        let roll = -angle_range + step * rng.gen_range(0..bins) as f64;
        let angles = TiltAngles::new(pitch, roll)?;
        let upright = synth_panorama(image_seed, grid, style);
        let mut rec = make_record(upright, angles, feature_grid)?;
        rec.id = id;
        rec.style = style;
        records.push(rec);
    }
    // stratified split: per style, 70/15/15 by position
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for style in PanoramaStyle::ALL {
        let of_style: Vec<DatasetRecord> =
            records.iter().filter(|r| r.style == style).cloned().collect();
        let k = of_style.len();
        if k < 3 {
            return Err(UprightError::DatasetTooSmall { n });
        }
        // 70/15/15 with every split guaranteed at least one record per style
        let n_val = ((k * 15) / 100).max(1);
        let n_test = ((k * 15) / 100).max(1);
        let n_train = k - n_val - n_test;
        for (i, rec) in of_style.into_iter().enumerate() {
            if i < n_train {
                train.push(rec);
            } else if i < n_train + n_test {
                test.push(rec);
            } else {
                val.push(rec);
            }
        }
    }
    Ok(DatasetSplits { train, val, test })
}

/// Write a split to `dir` as manifest + per-record PPM/ULUT files.
pub fn save_split(records: &[DatasetRecord], dir: &Path) -> Result<(), UprightError> {
    std::fs::create_dir_all(dir).map_err(|e| UprightError::io(dir, e))?;
    let manifest_path = dir.join("manifest.txt");
    let mut manifest = std::fs::File::create(&manifest_path)
        .map_err(|e| UprightError::io(&manifest_path, e))?;
    for rec in records {
        let nu = format!("{:06}_nonupright.ppm", rec.id);
        let up = format!("{:06}_upright.ppm", rec.id);
        let lut = format!("{:06}_truth.ulut", rec.id);
        save_ppm(&rec.nonupright, &dir.join(&nu))?;
        save_ppm(&rec.upright, &dir.join(&up))?;
        save_lut(&rec.truth_lut, &dir.join(&lut))?;
        writeln!(
            manifest,
            "{} {} {} {} {} {} {}",
            rec.id,
            rec.style.name(),
            rec.angles.pitch(),
            rec.angles.roll(),
            nu,
            up,
            lut
        )
        .map_err(|e| UprightError::io(&manifest_path, e))?;
    }
    Ok(())
}

pub fn load_split(dir: &Path) -> Result<Vec<DatasetRecord>, UprightError> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| UprightError::io(&manifest_path, e))?;
    let bad = |reason: String| UprightError::BadFormat { path: manifest_path.clone(), reason };
    let mut out = Vec::new();
    for line in text.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", fields.len())));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("bad id".into()))?;
        let style =
            PanoramaStyle::from_name(fields[1]).ok_or_else(|| bad("unknown style".into()))?;
        let pitch: f64 = fields[2].parse().map_err(|_| bad("bad pitch".into()))?;
        let roll: f64 = fields[3].parse().map_err(|_| bad("bad roll".into()))?;
        let angles = TiltAngles::new(pitch, roll)?;
        out.push(DatasetRecord {
            id,
            style,
            angles,
            nonupright: load_ppm(&dir.join(fields[4]))?,
            upright: load_ppm(&dir.join(fields[5]))?,
            truth_lut: load_lut(&dir.join(fields[6]))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;
    use crate::remap::remap;

    fn grid(h: usize) -> EquirectGrid {
        EquirectGrid::new(h, 2 * h).unwrap()
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        for style in PanoramaStyle::ALL {
            let a = synth_panorama(42, grid(16), style);
            let b = synth_panorama(42, grid(16), style);
            assert_eq!(a.data(), b.data());
            let c = synth_panorama(43, grid(16), style);
            assert_ne!(a.data(), c.data());
        }
    }

    #[test]
    fn horizon_row_means_are_monotone() {
        let img = synth_panorama(7, grid(32), PanoramaStyle::HorizonGradient);
        let mut prev = f32::INFINITY;
        for y in 0..img.height() {
            let mean: f32 =
                (0..img.width()).map(|x| img.get(0, y, x) + img.get(1, y, x) + img.get(2, y, x)).sum::<f32>()
                    / img.width() as f32;
            assert!(mean <= prev + 1e-6, "row {y}");
            prev = mean;
        }
    }

    #[test]
    fn zero_tilt_record_is_identity() {
        let up = synth_panorama(3, grid(16), PanoramaStyle::HorizonGradient);
        let rec = make_record(up.clone(), TiltAngles::new(0.0, 0.0).unwrap(), grid(16)).unwrap();
        for (a, b) in rec.nonupright.data().iter().zip(up.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!(rec.truth_lut.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn record_round_trip_psnr_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..10 {
            let style = PanoramaStyle::ALL[i % 3];
            let up = synth_panorama(100 + i as u64, grid(32), style);
            let a = TiltAngles::new(rng.gen_range(-45..=45) as f64, rng.gen_range(-45..=45) as f64).unwrap();
            let rec = make_record(up, a, grid(32)).unwrap();
            let recovered = remap(&rec.nonupright, &rec.truth_lut, Interp::Bilinear).unwrap();
            let p = psnr(&recovered, &rec.upright).unwrap();
            // Stripes has single-pixel detail at this size; two bilinear
            // resamplings keep it just above 20 dB
            assert!(p >= 20.0, "style {:?} angles ({}, {}) psnr {p}", style, a.pitch(), a.roll());
        }
    }

    #[test]
    fn splits_are_70_15_15_and_deterministic() {
        let s1 = build_dataset(100, 45.0, 1.0, 9, grid(8), grid(8)).unwrap();
        assert_eq!(s1.train.len(), 74); // per-style remainder after 15%+15% of 34/33/33
        assert_eq!(s1.train.len() + s1.val.len() + s1.test.len(), 100);
        assert!(s1.test.len() >= 12 && s1.val.len() >= 12);
        let s2 = build_dataset(100, 45.0, 1.0, 9, grid(8), grid(8)).unwrap();
        for (a, b) in s1.train.iter().zip(&s2.train) {
            assert_eq!(a.nonupright.data(), b.nonupright.data());
            assert_eq!(a.angles, b.angles);
        }
        // ids disjoint across splits
        let mut ids: Vec<usize> = s1
            .train
            .iter()
            .chain(&s1.val)
            .chain(&s1.test)
            .map(|r| r.id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        assert!(build_dataset(5, 45.0, 1.0, 9, grid(8), grid(8)).is_err());
    }

    #[test]
    fn angle_histogram_roughly_uniform() {
        let s = build_dataset(600, 30.0, 10.0, 21, grid(8), grid(8)).unwrap();
        let mut counts = vec![0usize; 7];
        for r in s.train.iter().chain(&s.val).chain(&s.test) {
            counts[((r.angles.pitch() + 30.0) / 10.0) as usize] += 1;
        }
        let expect = 600.0 / 7.0;
        for c in counts {
            assert!((c as f64) > expect * 0.5 && (c as f64) < expect * 1.5, "count {c}");
        }
    }

    #[test]
    fn split_save_load_round_trip() {
        let dir = std::env::temp_dir().join("upright_dataset_tests");
        let _ = std::fs::remove_dir_all(&dir);
        let s = build_dataset(12, 30.0, 1.0, 5, grid(8), grid(8)).unwrap();
        save_split(&s.test, &dir).unwrap();
        let back = load_split(&dir).unwrap();
        assert_eq!(back.len(), s.test.len());
        for (a, b) in back.iter().zip(&s.test) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.angles, b.angles);
            assert_eq!(a.truth_lut.data(), b.truth_lut.data());
        }
    }
}
