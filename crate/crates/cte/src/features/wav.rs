//! RIFF WAV reader/writer: PCM, mono, 16-bit little-endian only.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::Waveform;

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a mono 16-bit PCM WAV file; integer samples are divided by 32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut pos = 12;
    let mut sample_rate = None;
    let mut samples = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::Format(format!(
                "{}: chunk {:?} overruns file",
                path.display(),
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format(format!("{}: short fmt chunk", path.display())));
                }
                let format = u16_at(&bytes, body);
                let channels = u16_at(&bytes, body + 2);
                let rate = u32_at(&bytes, body + 4);
                let bits = u16_at(&bytes, body + 14);
                if format != 1 {
                    return Err(Error::Format(format!(
                        "{}: only PCM supported (format tag {format})",
                        path.display()
                    )));
                }
                if channels != 1 {
                    return Err(Error::Format(format!(
                        "{}: only mono supported ({channels} channels)",
                        path.display()
                    )));
                }
                if bits != 16 {
                    return Err(Error::Format(format!(
                        "{}: only 16-bit supported ({bits} bits)",
                        path.display()
                    )));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let data = &bytes[body..body + size];
                let vals: Vec<f64> = data
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                samples = Some(vals);
            }
            _ => {}
        }
        pos = body + size + (size & 1); // chunks are word-aligned
    }
    let sample_rate = sample_rate
        .ok_or_else(|| Error::Format(format!("{}: missing fmt chunk", path.display())))?;
    let samples =
        samples.ok_or_else(|| Error::Format(format!("{}: missing data chunk", path.display())))?;
    Waveform::new(samples, sample_rate)
}

/// Write samples in [-1, 1] as a mono 16-bit PCM WAV file.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let n = samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}
