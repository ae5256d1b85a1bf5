//! Versioned checkpoint files: the run config text plus every named
//! parameter with shape and an f32 little-endian payload.

use crate::error::UprightError;
use crate::nn::params::{ParamSet, Parameter};
use std::io::{Read, Write};
use std::path::Path;

const CKPT_MAGIC: &[u8; 4] = b"UCKP";
const CKPT_VERSION: u8 = 1;

pub fn save_checkpoint(params: &ParamSet, config: &str, path: &Path) -> Result<(), UprightError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.push(CKPT_VERSION);
    let cfg = config.as_bytes();
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(cfg);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(p.shape.len() as u8);
        for &d in &p.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &p.value {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| UprightError::io(path, e))?;
    f.write_all(&buf).map_err(|e| UprightError::io(path, e))
}

/// Load a checkpoint as a fresh parameter set plus the stored config text.
pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, String), UprightError> {
    let bad = |reason: &str| UprightError::BadFormat { path: path.into(), reason: reason.into() };
    let mut f = std::fs::File::open(path)
        .map_err(|_| UprightError::MissingCheckpoint(path.display().to_string()))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| UprightError::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], UprightError> {
        if *pos + n > buf.len() {
            return Err(UprightError::BadFormat { path: path.into(), reason: "truncated".into() });
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != CKPT_MAGIC {
        return Err(bad("wrong magic"));
    }
    if take(&mut pos, 1)?[0] != CKPT_VERSION {
        return Err(bad("unsupported version"));
    }
    let cfg_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let config = String::from_utf8(take(&mut pos, cfg_len)?.to_vec())
        .map_err(|_| bad("config not utf-8"))?;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| bad("name not utf-8"))?;
        let ndim = take(&mut pos, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut value = Vec::with_capacity(n);
        for _ in 0..n {
            value.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as f64);
        }
        params.add(Parameter::new(name, shape, value));
    }
    if pos != buf.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((params, config))
}

/// Copy loaded values into an existing parameter set, matching by name and
/// shape.
pub fn restore_into(params: &mut ParamSet, loaded: &ParamSet, path: &Path) -> Result<(), UprightError> {
    for p in params.iter_mut() {
        let src = loaded
            .by_name(&p.name)
            .ok_or_else(|| UprightError::BadFormat {
                path: path.into(),
                reason: format!("missing parameter {}", p.name),
            })?;
        if src.shape != p.shape {
            return Err(UprightError::BadFormat {
                path: path.into(),
                reason: format!("shape mismatch for {}", p.name),
            });
        }
        p.value.copy_from_slice(&src.value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_names_shapes_and_f32_values() {
        let dir = std::env::temp_dir().join("upright_ckpt_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let mut params = ParamSet::new();
        params.add(Parameter::new("w", vec![2, 3], (0..6).map(|i| i as f64 * 0.25).collect()));
        params.add(Parameter::new("b", vec![3], vec![0.1, -0.2, 0.3]));
        let path = dir.join("a.uckp");
        save_checkpoint(&params, "preset=desk\nseed=7\n", &path).unwrap();
        let (loaded, config) = load_checkpoint(&path).unwrap();
        assert_eq!(config, "preset=desk\nseed=7\n");
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.by_name("w").unwrap().shape, vec![2, 3]);
        for (a, b) in loaded.by_name("b").unwrap().value.iter().zip(&params.get(1).value) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let mut fresh = params.clone();
        for p in fresh.iter_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        restore_into(&mut fresh, &loaded, &path).unwrap();
        assert_eq!(fresh.get(0).value, loaded.get(0).value);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = std::env::temp_dir().join("upright_ckpt_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.uckp");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(matches!(
            load_checkpoint(&dir.join("missing.uckp")),
            Err(UprightError::MissingCheckpoint(_))
        ));
    }
}
