//! Evaluation and benchmarking: accuracy buckets, PSNR/SSIM, throughput
//! and storage reports.

use crate::error::UprightError;
use crate::image::EquirectImage;
use crate::lut::StorageReport;
use std::time::Instant;

/// Cumulative accuracy at a list of degree thresholds.
#[derive(Debug, Clone)]
pub struct AccuracyTable {
    pub thresholds: Vec<f64>,
    /// percentage of errors <= threshold, per threshold
    pub percentages: Vec<f64>,
    pub samples: usize,
}

pub const DEFAULT_THRESHOLDS: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 12.0];

pub fn accuracy_table(errors: &[f64], thresholds: &[f64]) -> Result<AccuracyTable, UprightError> {
    if errors.is_empty() {
        return Err(UprightError::EmptyInput { context: "accuracy_table" });
    }
    let n = errors.len() as f64;
    let percentages = thresholds
        .iter()
        .map(|t| 100.0 * errors.iter().filter(|e| **e <= *t).count() as f64 / n)
        .collect();
    Ok(AccuracyTable { thresholds: thresholds.to_vec(), percentages, samples: errors.len() })
}

impl AccuracyTable {
    /// Aligned two-row rendering matching the usual bucket layout.
    pub fn render(&self) -> String {
        let header: Vec<String> = self.thresholds.iter().map(|t| format!("{:>7}", format!("{t}°"))).collect();
        let row: Vec<String> = self.percentages.iter().map(|p| format!("{p:>7.1}")).collect();
        format!(
            "thresholds {}\npercent    {}\nsamples    {}\n",
            header.join(" "),
            row.join(" "),
            self.samples
        )
    }
}

/// Peak signal-to-noise ratio in dB against peak value 1.
/// Identical inputs report `f64::INFINITY`.
pub fn psnr(a: &EquirectImage, b: &EquirectImage) -> Result<f64, UprightError> {
    check_same_shape(a, b, "psnr")?;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

fn check_same_shape(a: &EquirectImage, b: &EquirectImage, context: &'static str) -> Result<(), UprightError> {
    if a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width() {
        return Err(UprightError::ShapeMismatch {
            context,
            lhs: format!("{}x{}x{}", a.channels(), a.height(), a.width()),
            rhs: format!("{}x{}x{}", b.channels(), b.height(), b.width()),
        });
    }
    Ok(())
}

/// Gaussian window used by SSIM, normalized to sum 1.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size - 1) as f64 / 2.0;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - c;
            let x = (i % size) as f64 - c;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, averaged over valid windows and channels.
pub fn ssim(a: &EquirectImage, b: &EquirectImage) -> Result<f64, UprightError> {
    ssim_with(a, b, 11, 0.01, 0.03)
}

pub fn ssim_with(
    a: &EquirectImage,
    b: &EquirectImage,
    window: usize,
    k1: f64,
    k2: f64,
) -> Result<f64, UprightError> {
    check_same_shape(a, b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    if h < window || w < window {
        return Err(UprightError::ShapeMismatch {
            context: "ssim window",
            lhs: format!("{h}x{w}"),
            rhs: format!("window {window}"),
        });
    }
    let g = gaussian_window(window, 1.5);
    let c1 = (k1 * 1.0f64).powi(2);
    let c2 = (k2 * 1.0f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels() {
        for y in 0..=(h - window) {
            for x in 0..=(w - window) {
                let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for wy in 0..window {
                    for wx in 0..window {
                        let gv = g[wy * window + wx];
                        let va = a.get(c, y + wy, x + wx) as f64;
                        let vb = b.get(c, y + wy, x + wx) as f64;
                        mx += gv * va;
                        my += gv * vb;
                        mxx += gv * va * va;
                        myy += gv * vb * vb;
                        mxy += gv * va * vb;
                    }
                }
                let sx = mxx - mx * mx;
                let sy = myy - my * my;
                let sxy = mxy - mx * my;
                let num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
                let den = (mx * mx + my * my + c1) * (sx + sy + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Per-frame latency statistics; timings exclude whatever the closure does
/// not contain, so callers keep image load/preprocess outside it.
#[derive(Debug, Clone)]
pub struct LatencyStats {
    pub frames: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub fps: f64,
}

impl LatencyStats {
    pub fn render(&self) -> String {
        format!(
            "frames {}  mean {:.6} s  p50 {:.6} s  p95 {:.6} s  fps {:.2}\n",
            self.frames, self.mean_s, self.p50_s, self.p95_s, self.fps
        )
    }
}

/// Time `n_frames` invocations of `frame` after 3 discarded warm-up runs.
pub fn bench_throughput<F: FnMut()>(n_frames: usize, mut frame: F) -> LatencyStats {
    assert!(n_frames >= 10, "need at least 10 frames");
    for _ in 0..3 {
        frame();
    }
    let mut times = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let t0 = Instant::now();
        frame();
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = times.iter().sum::<f64>() / n_frames as f64;
    let pick = |q: f64| times[((q * (n_frames - 1) as f64).round() as usize).min(n_frames - 1)];
    LatencyStats {
        frames: n_frames,
        mean_s: mean,
        p50_s: pick(0.50),
        p95_s: pick(0.95),
        fps: 1.0 / mean,
    }
}

/// Render a LUT-grid storage report. The previously published figure of
/// 4.65 GB for the full 181x181 grid does not match this accounting under
/// any standard element width, so it is printed alongside and flagged.
pub fn render_storage_report(report: &StorageReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("entries            {}\n", report.entries));
    s.push_str(&format!("values per entry   {}\n", report.values_per_entry));
    s.push_str(&format!(
        "f32 total          {} B ({:.1} GiB)\n",
        report.bytes_f32,
        report.gib_f32()
    ));
    s.push_str(&format!(
        "f16 hypothetical   {} B ({:.1} GiB)\n",
        report.bytes_f16_hypothetical,
        report.gib_f16()
    ));
    if report.entries == 32761 && report.values_per_entry == 2 * 256 * 512 {
        s.push_str("published figure   4.65 GB (unexplained by this accounting; flagged)\n");
        s.push_str("published model    429.6 MB (full-scale network footprint, for reference)\n");
    }
    s
}
