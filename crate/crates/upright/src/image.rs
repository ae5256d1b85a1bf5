//! Planar image / feature-map container and its file formats.
//!
//! Images hold `C x H x W` f32 planes. Pixel data is expected in `[0, 1]`
//! for images; feature maps reuse the same container without the bound.
//! Two formats are supported: 8-bit P6 PPM for RGB images and a raw
//! planar f32 format ("UIMG") for feature maps and lossless tests.

use crate::error::UprightError;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl EquirectImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, UprightError> {
        if channels == 0 || data.len() != channels * height * width {
            return Err(UprightError::ShapeMismatch {
                context: "image payload",
                lhs: format!("{}", data.len()),
                rhs: format!("{channels}x{height}x{width}"),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(UprightError::NonFinite { context: "image data" });
        }
        Ok(EquirectImage { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        EquirectImage { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }
}

/// Write an RGB image as binary P6 PPM, quantizing `[0, 1]` to 8 bits.
pub fn save_ppm(img: &EquirectImage, path: &Path) -> Result<(), UprightError> {
    if img.channels != 3 {
        return Err(UprightError::ShapeMismatch {
            context: "ppm save",
            lhs: format!("{} channels", img.channels),
            rhs: "3 channels".into(),
        });
    }
    let mut buf = Vec::with_capacity(img.height * img.width * 3 + 32);
    buf.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                let v = (img.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                buf.push(v);
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| UprightError::io(path, e))?;
    f.write_all(&buf).map_err(|e| UprightError::io(path, e))
}

pub fn load_ppm(path: &Path) -> Result<EquirectImage, UprightError> {
    let bad = |reason: &str| UprightError::BadFormat { path: path.into(), reason: reason.into() };
    let bytes = std::fs::read(path).map_err(|e| UprightError::io(path, e))?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, UprightError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(UprightError::BadFormat { path: path.into(), reason: "truncated header".into() });
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(bad("not a P6 PPM"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = token()?.parse().map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    pos += 1; // single whitespace after header
    if bytes.len() < pos + width * height * 3 {
        return Err(bad("truncated payload"));
    }
    let mut img = EquirectImage::zeros(3, height, width);
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let v = bytes[pos + (y * width + x) * 3 + c];
                img.set(c, y, x, v as f32 / 255.0);
            }
        }
    }
    Ok(img)
}

const UIMG_MAGIC: &[u8; 4] = b"UIMG";
const UIMG_VERSION: u8 = 1;

/// Raw planar f32 image: magic, version, C/H/W u32 little-endian, planes.
pub fn save_uimg(img: &EquirectImage, path: &Path) -> Result<(), UprightError> {
    let mut buf = Vec::with_capacity(17 + img.data.len() * 4);
    buf.extend_from_slice(UIMG_MAGIC);
    buf.push(UIMG_VERSION);
    buf.extend_from_slice(&(img.channels as u32).to_le_bytes());
    buf.extend_from_slice(&(img.height as u32).to_le_bytes());
    buf.extend_from_slice(&(img.width as u32).to_le_bytes());
    for &v in &img.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| UprightError::io(path, e))?;
    f.write_all(&buf).map_err(|e| UprightError::io(path, e))
}

pub fn load_uimg(path: &Path) -> Result<EquirectImage, UprightError> {
    let bad = |reason: &str| UprightError::BadFormat { path: path.into(), reason: reason.into() };
    let mut f = std::fs::File::open(path).map_err(|e| UprightError::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| UprightError::io(path, e))?;
    if buf.len() < 17 {
        return Err(bad("truncated header"));
    }
    if &buf[0..4] != UIMG_MAGIC {
        return Err(bad("wrong magic"));
    }
    if buf[4] != UIMG_VERSION {
        return Err(bad("unsupported version"));
    }
    let channels = u32::from_le_bytes(buf[5..9].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(buf[9..13].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(buf[13..17].try_into().unwrap()) as usize;
    let n = channels * height * width;
    if buf.len() != 17 + n * 4 {
        return Err(bad("truncated payload"));
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let off = 17 + i * 4;
        data.push(f32::from_le_bytes(buf[off..off + 4].try_into().unwrap()));
    }
    EquirectImage::new(channels, height, width, data)
}
