//! Apply a LUT to images or feature maps.
//!
//! Gather remapping: every destination pixel reads its source location
//! from the LUT. Horizontal coordinates wrap modulo the width (the
//! equirectangular seam is periodic), vertical coordinates clamp to the
//! pole rows. Bilinear weights are computed in f64 and the blended value
//! stored in f32 so round-trip measurements are stable.

use crate::error::UprightError;
use crate::geometry::{EquirectGrid, TiltAngles};
use crate::image::EquirectImage;
use crate::lut::{denormalize_x, denormalize_y, generate_lut, Lut, LutDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Nearest,
    Bilinear,
}

/// Remap `input` through `lut`.
pub fn remap(input: &EquirectImage, lut: &Lut, interp: Interp) -> Result<EquirectImage, UprightError> {
    if input.height() != lut.height() || input.width() != lut.width() {
        return Err(UprightError::ShapeMismatch {
            context: "remap",
            lhs: format!("{}x{}", input.height(), input.width()),
            rhs: format!("{}x{}", lut.height(), lut.width()),
        });
    }
    if lut.data().iter().any(|v| v.is_nan()) {
        return Err(UprightError::NonFinite { context: "lut" });
    }
    let mut out = EquirectImage::zeros(input.channels(), input.height(), input.width());
    let rows: Vec<usize> = (0..input.height()).collect();
    for &y in &rows {
        remap_row(input, lut, interp, y, &mut out);
    }
    Ok(out)
}

/// Row-parallel variant; bitwise identical to [`remap`].
pub fn remap_parallel(
    input: &EquirectImage,
    lut: &Lut,
    interp: Interp,
    threads: usize,
) -> Result<EquirectImage, UprightError> {
    if threads <= 1 {
        return remap(input, lut, interp);
    }
    if input.height() != lut.height() || input.width() != lut.width() {
        return Err(UprightError::ShapeMismatch {
            context: "remap",
            lhs: format!("{}x{}", input.height(), input.width()),
            rhs: format!("{}x{}", lut.height(), lut.width()),
        });
    }
    if lut.data().iter().any(|v| v.is_nan()) {
        return Err(UprightError::NonFinite { context: "lut" });
    }
    let h = input.height();
    let chunk = h.div_ceil(threads);
    let parts: Vec<(usize, Vec<EquirectImage>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .filter_map(|t| {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(h);
                if lo >= hi {
                    return None;
                }
                Some(scope.spawn(move || {
                    let mut rows = Vec::with_capacity(hi - lo);
                    for y in lo..hi {
                        let mut row = EquirectImage::zeros(input.channels(), h, input.width());
                        remap_row(input, lut, interp, y, &mut row);
                        rows.push(row);
                    }
                    (lo, rows)
                }))
            })
            .collect();
        handles.into_iter().map(|hd| hd.join().expect("remap worker panicked")).collect()
    });
    let mut out = EquirectImage::zeros(input.channels(), h, input.width());
    for (lo, rows) in parts {
        for (i, row) in rows.iter().enumerate() {
            let y = lo + i;
            for c in 0..input.channels() {
                for x in 0..input.width() {
                    out.set(c, y, x, row.get(c, y, x));
                }
            }
        }
    }
    Ok(out)
}

fn remap_row(input: &EquirectImage, lut: &Lut, interp: Interp, y: usize, out: &mut EquirectImage) {
    let (h, w) = (input.height(), input.width());
    for x in 0..w {
        let sx = denormalize_x(lut.get(0, y, x) as f64, w);
        let sy = denormalize_y(lut.get(1, y, x) as f64, h);
        match interp {
            Interp::Nearest => {
                let nx = (sx.round().rem_euclid(w as f64)) as usize % w;
                let ny = sy.round().clamp(0.0, (h - 1) as f64) as usize;
                for c in 0..input.channels() {
                    out.set(c, y, x, input.get(c, ny, nx));
                }
            }
            Interp::Bilinear => {
                let x0 = sx.floor();
                let y0 = sy.floor();
                let wx = sx - x0;
                let wy = sy - y0;
                let x0i = (x0.rem_euclid(w as f64)) as usize % w;
                let x1i = (x0i + 1) % w;
                let y0i = (y0.max(0.0) as usize).min(h - 1);
                let y1i = ((y0 + 1.0).max(0.0) as usize).min(h - 1);
                for c in 0..input.channels() {
                    let v00 = input.get(c, y0i, x0i) as f64;
                    let v01 = input.get(c, y0i, x1i) as f64;
                    let v10 = input.get(c, y1i, x0i) as f64;
                    let v11 = input.get(c, y1i, x1i) as f64;
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    out.set(c, y, x, (top + (bot - top) * wy) as f32);
                }
            }
        }
    }
}

/// Convenience composition `generate_lut` then [`remap`]; bitwise equal to
/// the two-step path.
pub fn rotate_image(
    input: &EquirectImage,
    angles: TiltAngles,
    direction: LutDirection,
    interp: Interp,
) -> Result<EquirectImage, UprightError> {
    let grid = EquirectGrid::new(input.height(), input.width())?;
    let lut = generate_lut(angles, grid, direction);
    remap(input, &lut, interp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::psnr;

    fn angles(p: f64, r: f64) -> TiltAngles {
        TiltAngles::new(p, r).unwrap()
    }

    /// Smooth synthetic gradient image.
    pub fn smooth_image(h: usize, w: usize) -> EquirectImage {
        let mut img = EquirectImage::zeros(3, h, w);
        for y in 0..h {
            for x in 0..w {
                let fy = y as f32 / h as f32;
                let fx = x as f32 / w as f32;
                img.set(0, y, x, 0.5 + 0.5 * (std::f32::consts::TAU * fx).sin() * (1.0 - fy));
                img.set(1, y, x, fy);
                img.set(2, y, x, 0.5 + 0.25 * (std::f32::consts::TAU * fy).cos());
            }
        }
        img
    }

    #[test]
    fn identity_lut_is_near_exact_bilinear_and_exact_nearest() {
        let img = smooth_image(8, 16);
        let grid = EquirectGrid::new(8, 16).unwrap();
        let lut = generate_lut(angles(0.0, 0.0), grid, LutDirection::ForwardTilt);
        let out = remap(&img, &lut, Interp::Bilinear).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let out = remap(&img, &lut, Interp::Nearest).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = EquirectImage::new(2, 8, 16, vec![0.37; 2 * 8 * 16]).unwrap();
        let grid = EquirectGrid::new(8, 16).unwrap();
        let lut = generate_lut(angles(33.0, -21.0), grid, LutDirection::ForwardTilt);
        let out = remap(&img, &lut, Interp::Bilinear).unwrap();
        for v in out.data() {
            assert!((v - 0.37).abs() <= 1e-6);
        }
    }

    #[test]
    fn forward_then_inverse_round_trip_psnr() {
        let img = smooth_image(64, 128);
        let tilted = rotate_image(&img, angles(15.0, 25.0), LutDirection::ForwardTilt, Interp::Bilinear).unwrap();
        let back = rotate_image(&tilted, angles(15.0, 25.0), LutDirection::InverseUpright, Interp::Bilinear).unwrap();
        let p = psnr(&img, &back).unwrap();
        assert!(p >= 30.0, "round-trip PSNR {p}");
    }

    #[test]
    fn rotate_image_is_the_two_step_path() {
        let img = smooth_image(8, 16);
        let grid = EquirectGrid::new(8, 16).unwrap();
        let a = angles(10.0, -7.0);
        let one = rotate_image(&img, a, LutDirection::ForwardTilt, Interp::Bilinear).unwrap();
        let lut = generate_lut(a, grid, LutDirection::ForwardTilt);
        let two = remap(&img, &lut, Interp::Bilinear).unwrap();
        assert_eq!(one.data(), two.data());
    }

    #[test]
    fn remap_preserves_value_bounds() {
        let img = smooth_image(16, 32);
        let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let out = rotate_image(&img, angles(40.0, -25.0), LutDirection::ForwardTilt, Interp::Bilinear).unwrap();
        for v in out.data() {
            assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6);
        }
    }

    #[test]
    fn remap_is_linear_in_image_values() {
        let a = smooth_image(8, 16);
        let mut b = smooth_image(8, 16);
        for v in b.data_mut() {
            *v = 1.0 - *v * 0.5;
        }
        let grid = EquirectGrid::new(8, 16).unwrap();
        let lut = generate_lut(angles(22.0, 9.0), grid, LutDirection::ForwardTilt);
        let (alpha, beta) = (0.3f32, 0.6f32);
        let mixed_data: Vec<f32> =
            a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect();
        let mixed = EquirectImage::new(3, 8, 16, mixed_data).unwrap();
        let lhs = remap(&mixed, &lut, Interp::Bilinear).unwrap();
        let ra = remap(&a, &lut, Interp::Bilinear).unwrap();
        let rb = remap(&b, &lut, Interp::Bilinear).unwrap();
        for ((l, x), y) in lhs.data().iter().zip(ra.data()).zip(rb.data()) {
            assert!((l - (alpha * x + beta * y)).abs() <= 1e-6);
        }
    }

    #[test]
    fn parallel_remap_matches_sequential_bitwise() {
        let img = smooth_image(32, 64);
        let grid = EquirectGrid::new(32, 64).unwrap();
        let lut = generate_lut(angles(18.0, -31.0), grid, LutDirection::InverseUpright);
        let seq = remap(&img, &lut, Interp::Bilinear).unwrap();
        for threads in [2, 3, 7] {
            let par = remap_parallel(&img, &lut, Interp::Bilinear, threads).unwrap();
            assert_eq!(par.data(), seq.data());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let img = smooth_image(8, 16);
        let grid = EquirectGrid::new(16, 32).unwrap();
        let lut = generate_lut(angles(0.0, 0.0), grid, LutDirection::ForwardTilt);
        assert!(remap(&img, &lut, Interp::Bilinear).is_err());
    }
}
