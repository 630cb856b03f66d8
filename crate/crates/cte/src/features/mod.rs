//! Waveform-to-feature frontend: 80-dimensional log-Mel filterbank energies
//! over 25 ms frames with a 10 ms shift, plus word-segment slicing.
//!
//! Pipeline per frame: periodic Hann window → magnitude-squared FFT (next
//! power of two above the window length, 512 at 16 kHz) → triangular
//! HTK-Mel filters spanning 0..Nyquist → natural log with a 1e-10 floor.
//! No pre-emphasis, dither, or mean normalization.

mod featfile;
mod wav;

pub use featfile::{read_features, write_features};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Mono audio at a fixed sample rate, samples nominally in [-1, 1].
#[derive(Clone, Debug)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::Input("empty waveform".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Frontend configuration. Defaults match the model input contract:
/// 80 Mel bands, 25 ms frames, 10 ms shift, 16 kHz audio.
#[derive(Clone, Debug)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub frame_length: f64,
    pub frame_shift: f64,
    pub num_mels: usize,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate: 16_000,
            frame_length: 0.025,
            frame_shift: 0.010,
            num_mels: 80,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self) -> usize {
        (self.frame_length * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.frame_shift * self.sample_rate as f64).round() as usize
    }

    pub fn fft_size(&self) -> usize {
        self.window_samples().next_power_of_two()
    }
}

/// T×F matrix of log-Mel frames with its framing metadata.
#[derive(Clone, Debug)]
pub struct FeatureSequence {
    data: Vec<f64>,
    num_frames: usize,
    dim: usize,
    pub frame_shift: f64,
    pub frame_length: f64,
}

impl FeatureSequence {
    pub fn from_raw(data: Vec<f64>, num_frames: usize, dim: usize) -> Result<Self> {
        if num_frames == 0 || dim == 0 || data.len() != num_frames * dim {
            return Err(Error::Dimension(format!(
                "feature matrix {num_frames}x{dim} does not match {} values",
                data.len()
            )));
        }
        Ok(FeatureSequence {
            data,
            num_frames,
            dim,
            frame_shift: 0.010,
            frame_length: 0.025,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Feature-domain duration: frame count times the frame shift.
    pub fn duration(&self) -> f64 {
        self.num_frames as f64 * self.frame_shift
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.data.clone(), &[self.num_frames, self.dim]).expect("consistent dims")
    }
}

/// HTK Mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequencies (Hz) of the triangular filters, for diagnostics.
pub fn filter_centers_hz(cfg: &FrontendConfig) -> Vec<f64> {
    let nyquist = cfg.sample_rate as f64 / 2.0;
    let max_mel = hz_to_mel(nyquist);
    (1..=cfg.num_mels)
        .map(|i| mel_to_hz(max_mel * i as f64 / (cfg.num_mels + 1) as f64))
        .collect()
}

/// Triangular filter weights, `num_mels` rows over `fft_size/2 + 1` bins.
fn mel_filterbank(cfg: &FrontendConfig) -> Vec<Vec<f64>> {
    let nfft = cfg.fft_size();
    let bins = nfft / 2 + 1;
    let sr = cfg.sample_rate as f64;
    let nyquist = sr / 2.0;
    let max_mel = hz_to_mel(nyquist);
    let edges_hz: Vec<f64> = (0..cfg.num_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (cfg.num_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * sr / nfft as f64).collect();
    (0..cfg.num_mels)
        .map(|i| {
            let (lo, mid, hi) = (edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]);
            bin_hz
                .iter()
                .map(|&f| {
                    if f > lo && f < mid {
                        (f - lo) / (mid - lo)
                    } else if f >= mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// In-place iterative radix-2 FFT (sizes are powers of two by construction).
fn fft_pow2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// Convert a waveform to log-Mel features.
///
/// Frame count is exactly `(N - win) / hop + 1` for N samples.
pub fn compute_log_mel(w: &Waveform, cfg: &FrontendConfig) -> Result<FeatureSequence> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::Config(format!(
            "waveform at {} Hz, frontend configured for {} Hz",
            w.sample_rate(),
            cfg.sample_rate
        )));
    }
    let win = cfg.window_samples();
    let hop = cfg.hop_samples();
    let samples = w.samples();
    if samples.len() < win {
        return Err(Error::Input(format!(
            "waveform of {} samples is shorter than one {win}-sample frame",
            samples.len()
        )));
    }
    let num_frames = (samples.len() - win) / hop + 1;
    let nfft = cfg.fft_size();
    let bins = nfft / 2 + 1;

    // periodic Hann
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos()))
        .collect();
    let filters = mel_filterbank(cfg);

    let mut data = Vec::with_capacity(num_frames * cfg.num_mels);
    let mut re = vec![0.0; nfft];
    let mut im = vec![0.0; nfft];
    let mut power = vec![0.0; bins];
    for t in 0..num_frames {
        let start = t * hop;
        re[..win]
            .iter_mut()
            .zip(samples[start..start + win].iter().zip(window.iter()))
            .for_each(|(r, (s, w))| *r = s * w);
        re[win..].fill(0.0);
        im.fill(0.0);
        fft_pow2(&mut re, &mut im);
        for k in 0..bins {
            power[k] = re[k] * re[k] + im[k] * im[k];
        }
        for filter in &filters {
            let mut e = 0.0;
            for (w, p) in filter.iter().zip(power.iter()) {
                e += w * p;
            }
            data.push(e.max(cfg.log_floor).ln());
        }
    }
    Ok(FeatureSequence {
        data,
        num_frames,
        dim: cfg.num_mels,
        frame_shift: cfg.frame_shift,
        frame_length: cfg.frame_length,
    })
}

/// Slice the frames of a word out of utterance-level features: frame i is
/// kept iff `start <= i·frame_shift < end`.
pub fn slice_segment(f: &FeatureSequence, start: f64, end: f64) -> Result<FeatureSequence> {
    const SLOP: f64 = 1e-9;
    if start < -SLOP || start >= end {
        return Err(Error::Input(format!(
            "bad segment bounds [{start}, {end})"
        )));
    }
    if end > f.duration() + SLOP {
        return Err(Error::Input(format!(
            "segment end {end:.3}s beyond utterance duration {:.3}s",
            f.duration()
        )));
    }
    let lo = (start / f.frame_shift - SLOP).ceil().max(0.0) as usize;
    let hi = ((end / f.frame_shift - SLOP).ceil() as usize).min(f.num_frames);
    if lo >= hi {
        return Err(Error::Input(format!(
            "segment [{start}, {end}) covers no frames"
        )));
    }
    Ok(FeatureSequence {
        data: f.data[lo * f.dim..hi * f.dim].to_vec(),
        num_frames: hi - lo,
        dim: f.dim,
        frame_shift: f.frame_shift,
        frame_length: f.frame_length,
    })
}
