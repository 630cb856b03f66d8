//! Parameterized audio unit generators: the "phones" of the synthetic
//! corpus. Word identity is the sequence of spectral patterns; speaker and
//! instance variation only transform pitch, amplitude, duration, and noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One synthetic phone: a spectral pattern with a nominal duration.
#[derive(Clone, Debug, PartialEq)]
pub enum UnitKind {
    /// Harmonic tone at f0 with 1/k harmonic rolloff.
    Harmonic { f0: f64, harmonics: usize },
    /// Linear frequency sweep.
    Chirp { f_start: f64, f_end: f64 },
    /// Sum of fixed-phase sinusoids spread over a band.
    NoiseBurst { center: f64, bandwidth: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhoneUnit {
    pub symbol: String,
    pub kind: UnitKind,
    /// Nominal duration in seconds, inside [0.08, 0.2].
    pub nominal_dur: f64,
}

/// Deterministic inventory: unit `i` draws its parameters from a band of
/// the spectrum chosen by its index, so units are spectrally distinct.
pub fn build_inventory(rng: &mut ChaCha8Rng, size: usize) -> Vec<PhoneUnit> {
    (0..size)
        .map(|i| {
            let lo = 200.0 + 3_200.0 * i as f64 / size as f64;
            let hi = 200.0 + 3_200.0 * (i + 1) as f64 / size as f64;
            let f_mid = lo + (hi - lo) * rng.random::<f64>();
            let kind = match i % 3 {
                0 => UnitKind::Harmonic {
                    f0: f_mid / 2.0,
                    harmonics: 2 + (i / 3) % 3,
                },
                1 => UnitKind::Chirp {
                    f_start: f_mid * 0.8,
                    f_end: f_mid * 1.3,
                },
                _ => UnitKind::NoiseBurst {
                    center: f_mid,
                    bandwidth: 150.0 + 250.0 * rng.random::<f64>(),
                },
            };
            PhoneUnit {
                symbol: format!("p{i:02}"),
                kind,
                nominal_dur: 0.08 + 0.12 * rng.random::<f64>(),
            }
        })
        .collect()
}

/// Render one unit: `dur` seconds at `rate` Hz, frequencies scaled by
/// `pitch`, with 10 ms raised-cosine edges against clicks.
pub fn render_unit(
    unit: &PhoneUnit,
    dur: f64,
    pitch: f64,
    rate: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = (dur * rate as f64).round().max(1.0) as usize;
    let dt = 1.0 / rate as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = vec![0.0; n];
    match &unit.kind {
        UnitKind::Harmonic { f0, harmonics } => {
            let base = f0 * pitch;
            for k in 1..=*harmonics {
                let amp = 1.0 / k as f64;
                let f = base * k as f64;
                let phase = two_pi * rng.random::<f64>();
                for (i, o) in out.iter_mut().enumerate() {
                    *o += amp * (two_pi * f * i as f64 * dt + phase).sin();
                }
            }
        }
        UnitKind::Chirp { f_start, f_end } => {
            let (f0, f1) = (f_start * pitch, f_end * pitch);
            let sweep = (f1 - f0) / dur;
            let phase = two_pi * rng.random::<f64>();
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 * dt;
                *o = (two_pi * (f0 * t + 0.5 * sweep * t * t) + phase).sin();
            }
        }
        UnitKind::NoiseBurst { center, bandwidth } => {
            let n_sines = 24;
            for k in 0..n_sines {
                let f = (center + bandwidth * (k as f64 / n_sines as f64 - 0.5)) * pitch;
                let phase = two_pi * rng.random::<f64>();
                let amp = 1.0 / (n_sines as f64).sqrt();
                for (i, o) in out.iter_mut().enumerate() {
                    *o += amp * (two_pi * f * i as f64 * dt + phase).sin();
                }
            }
        }
    }
    // raised-cosine attack/decay
    let edge = ((0.010 * rate as f64) as usize).min(n / 2).max(1);
    for i in 0..edge {
        let w = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / edge as f64).cos());
        out[i] *= w;
        out[n - 1 - i] *= w;
    }
    out
}
