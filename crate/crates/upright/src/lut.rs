//! Remapping look-up tables.
//!
//! A [`Lut`] stores, for every destination pixel, the normalized source
//! coordinates (`[-1, 1]`, gather semantics) that realize a spherical
//! rotation as a plain 2-D remap. `ForwardTilt` tables turn an upright
//! panorama into a tilted one (dataset generation); `InverseUpright`
//! tables undo the tilt (adjustment).
//!
//! Besides exact analytic generation this module provides precomputed LUT
//! grids with storage accounting, and a coarse-resolution + bilinear
//! upsampling approximation of the analytic table.

use crate::error::UprightError;
use crate::geometry::{
    pixel_to_sphere, rotation_from_tilt, sphere_to_pixel, EquirectGrid, TiltAngles, UnitVector,
};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LutDirection {
    /// Upright image -> tilted image.
    ForwardTilt,
    /// Tilted image -> upright image.
    InverseUpright,
}

impl LutDirection {
    fn to_byte(self) -> u8 {
        match self {
            LutDirection::ForwardTilt => 0,
            LutDirection::InverseUpright => 1,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(LutDirection::ForwardTilt),
            1 => Some(LutDirection::InverseUpright),
            _ => None,
        }
    }
}

/// Destination-indexed remapping table, 2 planes of `H x W` values in
/// `[-1, 1]`: plane 0 is normalized source x, plane 1 normalized source y.
#[derive(Debug, Clone, PartialEq)]
pub struct Lut {
    height: usize,
    width: usize,
    direction: LutDirection,
    angles: TiltAngles,
    /// channel 0 plane then channel 1 plane, row-major
    data: Vec<f32>,
}

impl Lut {
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn direction(&self) -> LutDirection {
        self.direction
    }
    pub fn angles(&self) -> TiltAngles {
        self.angles
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[channel * self.height * self.width + y * self.width + x]
    }

    /// Build from raw planes, validating the `[-1, 1]` invariant.
    pub fn from_data(
        height: usize,
        width: usize,
        direction: LutDirection,
        angles: TiltAngles,
        data: Vec<f32>,
    ) -> Result<Self, UprightError> {
        let grid = EquirectGrid::new(height, width)?;
        let _ = grid;
        if data.len() != 2 * height * width {
            return Err(UprightError::ShapeMismatch {
                context: "lut payload",
                lhs: format!("{}", data.len()),
                rhs: format!("{}", 2 * height * width),
            });
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(UprightError::LutValueOutOfRange { value: v, index: i });
            }
        }
        Ok(Lut { height, width, direction, angles, data })
    }
}

/// Normalized source x for pixel coordinate `s_x` on a width-`w` grid,
/// wrapped into `[-1, 1)`; x is periodic so the seam zone `(w - 0.5, w)`
/// lands just above the left edge.
#[inline]
pub fn normalize_x(s_x: f64, w: usize) -> f64 {
    wrap_norm(2.0 * (s_x + 0.5) / w as f64 - 1.0)
}

/// Normalized source y for pixel coordinate `s_y` on a height-`h` grid.
#[inline]
pub fn normalize_y(s_y: f64, h: usize) -> f64 {
    2.0 * (s_y + 0.5) / h as f64 - 1.0
}

/// Pixel x for a normalized coordinate (`x_pix = (x_norm + 1)/2 * W - 0.5`).
#[inline]
pub fn denormalize_x(x_norm: f64, w: usize) -> f64 {
    (x_norm + 1.0) / 2.0 * w as f64 - 0.5
}

#[inline]
pub fn denormalize_y(y_norm: f64, h: usize) -> f64 {
    (y_norm + 1.0) / 2.0 * h as f64 - 0.5
}

/// Analytic LUT for a tilt. Zero tilt takes a closed-form path so the
/// identity table is bit-exact.
pub fn generate_lut(angles: TiltAngles, grid: EquirectGrid, direction: LutDirection) -> Lut {
    let (h, w) = (grid.height(), grid.width());
    let mut data = vec![0f32; 2 * h * w];
    if angles.is_zero() {
        let (xs, ys) = data.split_at_mut(h * w);
        for v in 0..h {
            let yn = normalize_y(v as f64, h) as f32;
            for u in 0..w {
                xs[v * w + u] = normalize_x(u as f64, w) as f32;
                ys[v * w + u] = yn;
            }
        }
        return Lut { height: h, width: w, direction, angles, data };
    }

    let r = rotation_from_tilt(angles);
    let r = match direction {
        LutDirection::ForwardTilt => r,
        LutDirection::InverseUpright => r.transpose(),
    };
    let (xs, ys) = data.split_at_mut(h * w);
    for v in 0..h {
        for u in 0..w {
            let dir = pixel_to_sphere(u as f64, v as f64, grid)
                .expect("integer pixel inside grid");
            let rotated = UnitVector::from_rotated(&r, dir);
            let (sx, sy) = sphere_to_pixel(rotated, grid);
            xs[v * w + u] = normalize_x(sx, w) as f32;
            ys[v * w + u] = normalize_y(sy, h).clamp(-1.0, 1.0) as f32;
        }
    }
    Lut { height: h, width: w, direction, angles, data }
}

/// Precomputed table of LUTs over a regular (pitch, roll) lattice.
#[derive(Debug, Clone)]
pub struct LutGrid {
    pub angle_min: f64,
    pub angle_max: f64,
    pub step: f64,
    pub lut_height: usize,
    pub lut_width: usize,
    pub direction: LutDirection,
    /// (pitch index, roll index) -> Lut; pitch-major ordering.
    pub entries: BTreeMap<(usize, usize), Lut>,
}

/// Byte accounting for a LUT grid.
#[derive(Debug, Clone, Copy)]
pub struct StorageReport {
    pub entries: usize,
    pub values_per_entry: usize,
    pub bytes_f32: u64,
    pub bytes_f16_hypothetical: u64,
}

impl StorageReport {
    pub fn gib_f32(&self) -> f64 {
        self.bytes_f32 as f64 / (1u64 << 30) as f64
    }

    pub fn gib_f16(&self) -> f64 {
        self.bytes_f16_hypothetical as f64 / (1u64 << 30) as f64
    }
}

/// Number of lattice points per axis, or an error when the range/step do
/// not divide evenly.
pub fn axis_count(angle_min: f64, angle_max: f64, step: f64) -> Result<usize, UprightError> {
    if step <= 0.0
        || !(-90.0..=90.0).contains(&angle_min)
        || !(-90.0..=90.0).contains(&angle_max)
        || angle_max < angle_min
    {
        return Err(UprightError::BadAngleGrid { min: angle_min, max: angle_max, step });
    }
    let raw = (angle_max - angle_min) / step;
    let n = raw.round();
    if (raw - n).abs() > 1e-9 {
        return Err(UprightError::BadAngleGrid { min: angle_min, max: angle_max, step });
    }
    Ok(n as usize + 1)
}

/// Storage accounting without generating anything.
pub fn grid_storage(
    angle_min: f64,
    angle_max: f64,
    step: f64,
    grid: EquirectGrid,
) -> Result<StorageReport, UprightError> {
    let per_axis = axis_count(angle_min, angle_max, step)?;
    let entries = per_axis * per_axis;
    let values = 2 * grid.pixels();
    Ok(StorageReport {
        entries,
        values_per_entry: values,
        bytes_f32: entries as u64 * values as u64 * 4,
        bytes_f16_hypothetical: entries as u64 * values as u64 * 2,
    })
}

/// Fully populate a LUT grid over the lattice. Pitch-major iteration, so
/// the result is deterministic.
pub fn precompute_grid(
    angle_min: f64,
    angle_max: f64,
    step: f64,
    grid: EquirectGrid,
    direction: LutDirection,
) -> Result<(LutGrid, StorageReport), UprightError> {
    let per_axis = axis_count(angle_min, angle_max, step)?;
    let mut entries = BTreeMap::new();
    for pi in 0..per_axis {
        let pitch = angle_min + pi as f64 * step;
        for ri in 0..per_axis {
            let roll = angle_min + ri as f64 * step;
            let angles = TiltAngles::new(pitch, roll)?;
            entries.insert((pi, ri), generate_lut(angles, grid, direction));
        }
    }
    let report = grid_storage(angle_min, angle_max, step, grid)?;
    Ok((
        LutGrid {
            angle_min,
            angle_max,
            step,
            lut_height: grid.height(),
            lut_width: grid.width(),
            direction,
            entries,
        },
        report,
    ))
}

/// Error report comparing two LUTs of the same shape.
#[derive(Debug, Clone, Copy)]
pub struct LutErrorReport {
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    /// PSNR per channel in dB, peak = 2 (the `[-1, 1]` dynamic range).
    pub psnr_per_channel: [f64; 2],
    /// (x, y) of the largest absolute error.
    pub worst_pixel: (usize, usize),
}

pub fn lut_error(a: &Lut, b: &Lut) -> Result<LutErrorReport, UprightError> {
    if a.height != b.height || a.width != b.width || a.direction != b.direction {
        return Err(UprightError::ShapeMismatch {
            context: "lut_error",
            lhs: format!("{}x{} {:?}", a.height, a.width, a.direction),
            rhs: format!("{}x{} {:?}", b.height, b.width, b.direction),
        });
    }
    let plane = a.height * a.width;
    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    let mut worst = (0usize, 0usize);
    let mut mse = [0.0f64; 2];
    for c in 0..2 {
        for i in 0..plane {
            let mut d = (a.data[c * plane + i] as f64 - b.data[c * plane + i] as f64).abs();
            if c == 0 {
                // x is periodic with period 2: -1 and 1 are the same column
                d = d.min(2.0 - d);
            }
            sum += d;
            mse[c] += d * d;
            if d > max {
                max = d;
                worst = (i % a.width, i / a.width);
            }
        }
    }
    let psnr = |m: f64| {
        if m == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (4.0 / m).log10() // peak^2 = 4
        }
    };
    Ok(LutErrorReport {
        mean_abs_error: sum / (2 * plane) as f64,
        max_abs_error: max,
        psnr_per_channel: [psnr(mse[0] / plane as f64), psnr(mse[1] / plane as f64)],
        worst_pixel: worst,
    })
}

/// Wrap a normalized x back into `[-1, 1)` (period 2).
#[inline]
fn wrap_norm(mut x: f64) -> f64 {
    while x >= 1.0 {
        x -= 2.0;
    }
    while x < -1.0 {
        x += 2.0;
    }
    x
}

/// Analytic LUT at coarse resolution, bilinearly upsampled by `factor`.
///
/// Interpolation rules:
/// * horizontally the table is periodic; channel-0 values jump by ~2
///   across the wrap seam, so neighbor values are locally unwrapped
///   (shifted by ±2 until the difference is < 1) before interpolating and
///   the result is re-wrapped into `[-1, 1]`;
/// * vertically the edge pair of rows extrapolates linearly, which keeps
///   the upsampling exact on linear fields (the zero-tilt identity ramps).
pub fn coarse_then_upsample(
    angles: TiltAngles,
    coarse_grid: EquirectGrid,
    factor: usize,
) -> Result<Lut, UprightError> {
    assert!(factor >= 2, "factor must be >= 2");
    let fine_grid = EquirectGrid::new(coarse_grid.height() * factor, coarse_grid.width() * factor)?;
    let coarse = generate_lut(angles, coarse_grid, LutDirection::InverseUpright);
    let lut = upsample_lut(&coarse, factor, fine_grid, false);
    Ok(lut)
}

/// Same coarse table, nearest-neighbor upsampled (ablation baseline).
pub fn coarse_then_upsample_nearest(
    angles: TiltAngles,
    coarse_grid: EquirectGrid,
    factor: usize,
) -> Result<Lut, UprightError> {
    assert!(factor >= 2, "factor must be >= 2");
    let fine_grid = EquirectGrid::new(coarse_grid.height() * factor, coarse_grid.width() * factor)?;
    let coarse = generate_lut(angles, coarse_grid, LutDirection::InverseUpright);
    let lut = upsample_lut(&coarse, factor, fine_grid, true);
    Ok(lut)
}

fn upsample_lut(coarse: &Lut, factor: usize, fine_grid: EquirectGrid, nearest: bool) -> Lut {
    let (ch, cw) = (coarse.height, coarse.width);
    let (fh, fw) = (fine_grid.height(), fine_grid.width());
    let plane_c = ch * cw;
    let plane_f = fh * fw;
    let mut data = vec![0f32; 2 * plane_f];
    for c in 0..2 {
        let src = &coarse.data[c * plane_c..(c + 1) * plane_c];
        let dst = &mut data[c * plane_f..(c + 1) * plane_f];
        for oy in 0..fh {
            let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
            // edge pair extrapolates; weight may leave [0, 1]
            let y0 = (sy.floor() as isize).clamp(0, ch as isize - 2) as usize;
            let wy = sy - y0 as f64;
            for ox in 0..fw {
                let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
                if nearest {
                    let nx = sx.round().rem_euclid(cw as f64) as usize % cw;
                    let ny = (sy.round().clamp(0.0, ch as f64 - 1.0)) as usize;
                    dst[oy * fw + ox] = src[ny * cw + nx];
                    continue;
                }
                let x0 = sx.floor();
                let wx = sx - x0;
                let x0i = (x0.rem_euclid(cw as f64)) as usize % cw;
                let x1i = (x0i + 1) % cw;
                let base = src[y0 * cw + x0i] as f64;
                // unwrap channel 0 neighbors across the seam
                let adjust = |v: f64| -> f64 {
                    if c != 0 {
                        return v;
                    }
                    let mut v = v;
                    while v - base > 1.0 {
                        v -= 2.0;
                    }
                    while base - v > 1.0 {
                        v += 2.0;
                    }
                    v
                };
                let v00 = base;
                let v01 = adjust(src[y0 * cw + x1i] as f64);
                let v10 = adjust(src[(y0 + 1) * cw + x0i] as f64);
                let v11 = adjust(src[(y0 + 1) * cw + x1i] as f64);
                let top = v00 + (v01 - v00) * wx;
                let bot = v10 + (v11 - v10) * wx;
                let mut val = top + (bot - top) * wy;
                if c == 0 {
                    val = wrap_norm(val);
                }
                dst[oy * fw + ox] = val.clamp(-1.0, 1.0) as f32;
            }
        }
    }
    Lut {
        height: fh,
        width: fw,
        direction: coarse.direction,
        angles: coarse.angles,
        data,
    }
}

const LUT_MAGIC: &[u8; 4] = b"ULUT";
const LUT_VERSION: u8 = 1;

/// Write a LUT in the ULUT binary format (little-endian).
pub fn save_lut(lut: &Lut, path: &Path) -> Result<(), UprightError> {
    let mut buf = Vec::with_capacity(18 + lut.data.len() * 4);
    buf.extend_from_slice(LUT_MAGIC);
    buf.push(LUT_VERSION);
    buf.push(lut.direction.to_byte());
    buf.extend_from_slice(&(lut.height as u32).to_le_bytes());
    buf.extend_from_slice(&(lut.width as u32).to_le_bytes());
    buf.extend_from_slice(&(lut.angles.pitch() as f32).to_le_bytes());
    buf.extend_from_slice(&(lut.angles.roll() as f32).to_le_bytes());
    for &v in &lut.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| UprightError::io(path, e))?;
    f.write_all(&buf).map_err(|e| UprightError::io(path, e))
}

pub fn load_lut(path: &Path) -> Result<Lut, UprightError> {
    let bad = |reason: &str| UprightError::BadFormat { path: path.into(), reason: reason.into() };
    let mut f = std::fs::File::open(path).map_err(|e| UprightError::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| UprightError::io(path, e))?;
    if buf.len() < 22 {
        return Err(bad("truncated header"));
    }
    if &buf[0..4] != LUT_MAGIC {
        return Err(bad("wrong magic"));
    }
    if buf[4] != LUT_VERSION {
        return Err(bad(&format!("unsupported version {}", buf[4])));
    }
    let direction = LutDirection::from_byte(buf[5]).ok_or_else(|| bad("bad direction byte"))?;
    let height = u32::from_le_bytes(buf[6..10].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
    let pitch = f32::from_le_bytes(buf[14..18].try_into().unwrap()) as f64;
    let roll = f32::from_le_bytes(buf[18..22].try_into().unwrap()) as f64;
    let n = 2usize
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| bad("dimension overflow"))?;
    if buf.len() != 22 + n * 4 {
        return Err(bad("truncated payload"));
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let off = 22 + i * 4;
        data.push(f32::from_le_bytes(buf[off..off + 4].try_into().unwrap()));
    }
    let angles = TiltAngles::new(pitch, roll)
        .map_err(|_| bad("angles outside [-90, 90]"))?;
    Lut::from_data(height, width, direction, angles, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn angles(p: f64, r: f64) -> TiltAngles {
        TiltAngles::new(p, r).unwrap()
    }

    #[test]
    fn zero_tilt_is_identity_ramp() {
        let grid = EquirectGrid::new(4, 8).unwrap();
        let lut = generate_lut(angles(0.0, 0.0), grid, LutDirection::ForwardTilt);
        for v in 0..4 {
            for u in 0..8 {
                assert_eq!(lut.get(0, v, u), normalize_x(u as f64, 8) as f32);
                assert_eq!(lut.get(1, v, u), normalize_y(v as f64, 4) as f32);
            }
        }
    }

    #[test]
    fn matches_per_pixel_geometry_oracle() {
        let grid = EquirectGrid::new(8, 16).unwrap();
        let a = angles(90.0, 0.0);
        let lut = generate_lut(a, grid, LutDirection::ForwardTilt);
        let r = rotation_from_tilt(a);
        for v in 0..8 {
            for u in 0..16 {
                let dir = pixel_to_sphere(u as f64, v as f64, grid).unwrap();
                let rot = UnitVector::from_rotated(&r, dir);
                let (sx, sy) = sphere_to_pixel(rot, grid);
                assert!((lut.get(0, v, u) as f64 - normalize_x(sx, 16)).abs() < 1e-6);
                assert!((lut.get(1, v, u) as f64 - normalize_y(sy, 8)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn values_stay_in_range_and_deterministic() {
        let grid = EquirectGrid::new(8, 16).unwrap();
        for (p, r) in [(90.0, -90.0), (13.0, 77.0), (-45.0, 45.0)] {
            let a = angles(p, r);
            for d in [LutDirection::ForwardTilt, LutDirection::InverseUpright] {
                let l1 = generate_lut(a, grid, d);
                let l2 = generate_lut(a, grid, d);
                assert_eq!(l1.data, l2.data);
                assert!(l1.data.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn swapping_pitch_and_roll_changes_the_lut() {
        let grid = EquirectGrid::new(8, 16).unwrap();
        for (p, r) in [(30.0, 10.0), (5.0, -40.0), (60.0, -60.0)] {
            let a = generate_lut(angles(p, r), grid, LutDirection::ForwardTilt);
            let b = generate_lut(angles(r, p), grid, LutDirection::ForwardTilt);
            assert_ne!(a.data, b.data, "({p}, {r})");
        }
    }

    #[test]
    fn grid_counts_and_storage() {
        let grid = EquirectGrid::new(256, 512).unwrap();
        let report = grid_storage(-90.0, 90.0, 1.0, grid).unwrap();
        assert_eq!(report.entries, 32761);
        assert_eq!(report.bytes_f32, 32761 * 2 * 256 * 512 * 4);
        // 32761 x 1 MiB
        assert_eq!(report.bytes_f32, 32761 * (1 << 20));
        assert!((report.gib_f32() - 32.0).abs() < 0.05);
        assert!(grid_storage(-1.0, 1.0, 0.3, grid).is_err());
    }

    #[test]
    fn small_grid_population_matches_generate_lut() {
        let grid = EquirectGrid::new(8, 16).unwrap();
        let (lg, report) =
            precompute_grid(-1.0, 1.0, 1.0, grid, LutDirection::ForwardTilt).unwrap();
        assert_eq!(report.entries, 9);
        assert_eq!(lg.entries.len(), 9);
        for ((pi, ri), lut) in &lg.entries {
            let a = angles(-1.0 + *pi as f64, -1.0 + *ri as f64);
            let expect = generate_lut(a, grid, LutDirection::ForwardTilt);
            assert_eq!(lut.data, expect.data);
        }
    }

    #[test]
    fn lut_error_examples() {
        let grid = EquirectGrid::new(4, 8).unwrap();
        let a = generate_lut(angles(10.0, 5.0), grid, LutDirection::ForwardTilt);
        let same = lut_error(&a, &a).unwrap();
        assert_eq!(same.mean_abs_error, 0.0);
        assert_eq!(same.max_abs_error, 0.0);
        assert!(same.psnr_per_channel[0].is_infinite());

        let shifted: Vec<f32> =
            a.data.iter().map(|v| (v + 0.1).clamp(-1.0, 1.0)).collect();
        // keep values representable: build b where no clamping occurred
        let ok = a.data.iter().all(|v| v + 0.1 <= 1.0);
        if ok {
            let b = Lut {
                height: a.height,
                width: a.width,
                direction: a.direction,
                angles: a.angles,
                data: shifted,
            };
            let rep = lut_error(&a, &b).unwrap();
            assert!((rep.mean_abs_error - 0.1).abs() < 1e-6);
            assert!((rep.max_abs_error - 0.1).abs() < 1e-6);
        }
        // constant offset on a synthetic pair regardless
        let base = Lut {
            height: 4,
            width: 8,
            direction: LutDirection::ForwardTilt,
            angles: angles(0.0, 0.0),
            data: vec![0.0; 64],
        };
        let off = Lut { data: vec![0.1; 64], ..base.clone() };
        let rep = lut_error(&base, &off).unwrap();
        assert!((rep.mean_abs_error - 0.1).abs() < 1e-7);
        assert!((rep.max_abs_error - 0.1).abs() < 1e-7);

        let other = generate_lut(angles(10.0, 5.0), EquirectGrid::new(8, 16).unwrap(), LutDirection::ForwardTilt);
        assert!(lut_error(&a, &other).is_err());
    }

    #[test]
    fn upsample_is_exact_on_identity() {
        let coarse = EquirectGrid::new(16, 32).unwrap();
        let fine = EquirectGrid::new(256, 512).unwrap();
        let up = coarse_then_upsample(angles(0.0, 0.0), coarse, 16).unwrap();
        let exact = generate_lut(angles(0.0, 0.0), fine, LutDirection::InverseUpright);
        let max = up
            .data
            .iter()
            .zip(&exact.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0f32, f32::max);
        assert!(max <= 2e-7, "max dev {max}");
    }

    #[test]
    fn bilinear_beats_nearest_and_report_is_finite() {
        let coarse = EquirectGrid::new(16, 32).unwrap();
        let fine = EquirectGrid::new(256, 512).unwrap();
        let a = angles(20.0, 10.0);
        let exact = generate_lut(a, fine, LutDirection::InverseUpright);
        let bil = coarse_then_upsample(a, coarse, 16).unwrap();
        let nn = coarse_then_upsample_nearest(a, coarse, 16).unwrap();
        let e_bil = lut_error(&bil, &exact).unwrap();
        let e_nn = lut_error(&nn, &exact).unwrap();
        assert!(e_bil.mean_abs_error < e_nn.mean_abs_error);
        assert!(e_bil.mean_abs_error.is_finite() && e_bil.max_abs_error.is_finite());
    }

    #[test]
    fn lut_file_round_trip_and_errors() {
        let dir = std::env::temp_dir().join("upright_lut_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let grid = EquirectGrid::new(4, 8).unwrap();
        let lut = generate_lut(angles(12.0, -3.0), grid, LutDirection::InverseUpright);
        let path = dir.join("a.ulut");
        save_lut(&lut, &path).unwrap();
        let back = load_lut(&path).unwrap();
        assert_eq!(back.data, lut.data);
        assert_eq!(back.direction(), lut.direction());

        // wrong magic
        let bad = dir.join("bad.ulut");
        std::fs::write(&bad, b"NOPExxxxxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_lut(&bad), Err(UprightError::BadFormat { .. })));

        // out-of-range payload value
        let mut bytes = std::fs::read(&path).unwrap();
        let off = 22;
        bytes[off..off + 4].copy_from_slice(&1.5f32.to_le_bytes());
        let evil = dir.join("evil.ulut");
        std::fs::write(&evil, &bytes).unwrap();
        match load_lut(&evil) {
            Err(UprightError::LutValueOutOfRange { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected range violation, got {other:?}"),
        }
    }
}
