//! Precomputed-feature file: header {magic "CTEF", version u32, T u32, F u32}
//! followed by T·F little-endian f32 values, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::FeatureSequence;

const MAGIC: &[u8; 4] = b"CTEF";
const VERSION: u32 = 1;

pub fn write_features(path: &Path, f: &FeatureSequence) -> Result<()> {
    let mut out = Vec::with_capacity(16 + f.num_frames() * f.dim() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(f.num_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(f.dim() as u32).to_le_bytes());
    for &v in f.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a CTEF feature file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported CTEF version {version}",
            path.display()
        )));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + t * f * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload is {} bytes, header implies {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    FeatureSequence::from_raw(data, t, f)
}
