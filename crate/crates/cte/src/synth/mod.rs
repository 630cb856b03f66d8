//! Deterministic synthetic word corpus: word templates (phone-unit
//! sequences) rendered with duration, pitch, amplitude, and noise variation
//! across synthetic speakers. Stands in for a licensed speech corpus in
//! end-to-end experiments: small, seeded, and phone-annotated so the
//! edit-distance analysis has ground truth.

mod units;

pub use units::{build_inventory, render_unit, PhoneUnit, UnitKind};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::dataset::{derive_seed, Split, WordSegment};
use crate::error::{Error, Result};
use crate::features::write_wav;

/// Corpus shape and variation axes.
#[derive(Clone, Debug)]
pub struct CorpusSpec {
    pub n_word_types: usize,
    pub instances_per_type: usize,
    pub n_speakers: usize,
    /// Inclusive range of phones per word template.
    pub phones_per_word: (usize, usize),
    /// Per-instance duration scale drawn from 1 ± this.
    pub duration_jitter: f64,
    /// Per-instance pitch scale drawn from 1 ± this.
    pub pitch_jitter: f64,
    /// Additive-noise SNR range in dB.
    pub snr_db: (f64, f64),
    pub seed: u64,
    pub sample_rate: u32,
    /// Size of the phone-unit inventory.
    pub inventory_size: usize,
    /// Speakers reserved for the validation and test splits.
    pub valid_speakers: usize,
    pub test_speakers: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_word_types: 20,
            instances_per_type: 12,
            n_speakers: 8,
            phones_per_word: (4, 5),
            duration_jitter: 0.20,
            pitch_jitter: 0.15,
            snr_db: (12.0, 28.0),
            seed: 0,
            sample_rate: 16_000,
            inventory_size: 12,
            valid_speakers: 1,
            test_speakers: 2,
        }
    }
}

/// Rendered word durations must land in the training filter's [0.5, 2.0] s
/// for every jitter draw, so base durations live in this window (biased
/// short: desk-scale step cost grows with word length).
const BASE_DUR_LO: f64 = 0.63;
const BASE_DUR_HI: f64 = 0.72;
/// Head/tail silence around the word inside each utterance.
const PAD_SECONDS: f64 = 0.05;

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_word_types == 0 || self.instances_per_type == 0 || self.n_speakers == 0 {
            return Err(Error::Config("empty corpus requested".into()));
        }
        if self.valid_speakers + self.test_speakers >= self.n_speakers {
            return Err(Error::Config(format!(
                "{} speakers cannot host {} valid + {} test speakers",
                self.n_speakers, self.valid_speakers, self.test_speakers
            )));
        }
        let (lo, hi) = self.phones_per_word;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("bad phones_per_word range {lo}..={hi}")));
        }
        // every admissible phone count must be able to carry a base duration
        // in [BASE_DUR_LO, BASE_DUR_HI] with nominal units of 0.08-0.2 s
        for n in lo..=hi {
            if n as f64 * 0.2 < BASE_DUR_LO || n as f64 * 0.08 > BASE_DUR_HI {
                return Err(Error::Config(format!(
                    "{n} phones of 0.08-0.2 s cannot form a word with base duration \
                     {BASE_DUR_LO}-{BASE_DUR_HI} s inside the 0.5-2.0 s filter"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.duration_jitter)
            || 1.0 + self.duration_jitter > 2.0 / BASE_DUR_HI
            || 1.0 - self.duration_jitter < 0.5 / BASE_DUR_LO
        {
            return Err(Error::Config(format!(
                "duration jitter {} pushes words outside the 0.5-2.0 s filter",
                self.duration_jitter
            )));
        }
        if self.inventory_size < 4 {
            return Err(Error::Config("inventory too small".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    fn split_of(&self, speaker: usize) -> Split {
        let train = self.n_speakers - self.valid_speakers - self.test_speakers;
        if speaker < train {
            Split::Train
        } else if speaker < train + self.valid_speakers {
            Split::Valid
        } else {
            Split::Test
        }
    }
}

/// Everything `generate` emits, plus in-memory copies of the metadata.
#[derive(Debug)]
pub struct GeneratedCorpus {
    pub segments: Vec<WordSegment>,
    /// Phone sequence per segment, aligned with `segments`.
    pub phones: Vec<Vec<String>>,
    /// Speaker tag per segment, aligned with `segments`.
    pub speakers: Vec<String>,
    pub wav_dir: PathBuf,
    pub train_manifest: PathBuf,
    pub valid_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub phone_manifest: PathBuf,
}

struct SpeakerProfile {
    pitch: f64,
    gain: f64,
}

/// Word template: the phone indices and a base duration.
struct Template {
    phone_ids: Vec<usize>,
    base_dur: f64,
}

fn build_templates(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Vec<Template> {
    let (lo, hi) = spec.phones_per_word;
    let mut templates: Vec<Template> = Vec::with_capacity(spec.n_word_types);
    let exists = |templates: &[Template], cand: &[usize]| {
        templates.iter().any(|t| t.phone_ids == cand)
    };
    for t in 0..spec.n_word_types {
        let base_dur = BASE_DUR_LO + (BASE_DUR_HI - BASE_DUR_LO) * rng.random::<f64>();
        // every third type is a one-substitution neighbour of its
        // predecessor and the next a two-substitution neighbour, so the
        // edit-distance analysis always has small-distance pairs
        let phone_ids = if t % 3 != 0 && t > 0 {
            let subs = t % 3;
            let parent = &templates[t - subs].phone_ids;
            loop {
                let mut cand = parent.clone();
                for _ in 0..subs {
                    let pos = rng.random_range(0..cand.len());
                    let mut repl = rng.random_range(0..spec.inventory_size);
                    while repl == cand[pos] {
                        repl = rng.random_range(0..spec.inventory_size);
                    }
                    cand[pos] = repl;
                }
                if !exists(&templates, &cand) {
                    break cand;
                }
            }
        } else {
            loop {
                let n = rng.random_range(lo..=hi);
                let cand: Vec<usize> = (0..n)
                    .map(|_| rng.random_range(0..spec.inventory_size))
                    .collect();
                if !exists(&templates, &cand) {
                    break cand;
                }
            }
        };
        templates.push(Template { phone_ids, base_dur });
    }
    templates
}

/// Generate the corpus under `out_dir`: WAV files, per-split alignment
/// manifests, and the phone manifest. Deterministic from the seed; per
/// utterance audio derives its own sub-seed, so generation order never
/// affects content.
pub fn generate(spec: &CorpusSpec, out_dir: &Path) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x434f5250)); // "CORP"
    let inventory = build_inventory(&mut rng, spec.inventory_size);
    let templates = build_templates(spec, &mut rng);
    let speakers: Vec<SpeakerProfile> = (0..spec.n_speakers)
        .map(|_| SpeakerProfile {
            pitch: 0.85 + 0.3 * rng.random::<f64>(),
            gain: 0.45 + 0.4 * rng.random::<f64>(),
        })
        .collect();

    let mut segments = Vec::new();
    let mut phones = Vec::new();
    let mut speaker_tags = Vec::new();
    let mut manifest_rows: BTreeMap<Split, Vec<String>> = BTreeMap::new();
    let mut phone_rows: Vec<String> = Vec::new();

    for t in 0..spec.n_word_types {
        for k in 0..spec.instances_per_type {
            let speaker = (t + k) % spec.n_speakers;
            let profile = &speakers[speaker];
            let utt = format!("spk{speaker}-w{t:02}-i{k:02}");
            let mut inst_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                0x55545431 ^ ((t as u64) << 20) ^ (k as u64),
            ));

            let template = &templates[t];
            let dur_scale = 1.0 + spec.duration_jitter * (2.0 * inst_rng.random::<f64>() - 1.0);
            let pitch = profile.pitch
                * (1.0 + spec.pitch_jitter * (2.0 * inst_rng.random::<f64>() - 1.0));
            let nominal_total: f64 = template
                .phone_ids
                .iter()
                .map(|&p| inventory[p].nominal_dur)
                .sum();
            let word_scale = template.base_dur * dur_scale / nominal_total;

            let mut word = Vec::new();
            for &p in &template.phone_ids {
                let unit = &inventory[p];
                let dur = unit.nominal_dur * word_scale;
                word.extend(render_unit(unit, dur, pitch, spec.sample_rate, &mut inst_rng));
            }
            // normalize to the speaker gain
            let peak = word.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
            let norm = profile.gain / peak;
            for v in word.iter_mut() {
                *v *= norm;
            }
            let word_dur = word.len() as f64 / spec.sample_rate as f64;

            // pad with silence, then add noise at the drawn SNR
            let pad = (PAD_SECONDS * spec.sample_rate as f64).round() as usize;
            let mut samples = vec![0.0; pad];
            samples.extend_from_slice(&word);
            samples.extend(std::iter::repeat_n(0.0, pad));
            let sig_rms = (word.iter().map(|v| v * v).sum::<f64>() / word.len() as f64).sqrt();
            let snr = spec.snr_db.0 + (spec.snr_db.1 - spec.snr_db.0) * inst_rng.random::<f64>();
            let noise_rms = sig_rms * 10f64.powf(-snr / 20.0);
            for v in samples.iter_mut() {
                // uniform noise with matching RMS; sqrt(3) converts range to RMS
                *v += noise_rms * 3f64.sqrt() * (2.0 * inst_rng.random::<f64>() - 1.0);
                *v = v.clamp(-1.0, 1.0);
            }

            let wav_path = wav_dir.join(format!("{utt}.wav"));
            write_wav(&wav_path, &samples, spec.sample_rate)?;

            let start = pad as f64 / spec.sample_rate as f64;
            let end = start + word_dur;
            let split = spec.split_of(speaker);
            let word_id = format!("w{t:02}");
            let seg = WordSegment {
                utterance_id: utt.clone(),
                start,
                end,
                word_id: Some(word_id.clone()),
                split,
            };
            manifest_rows.entry(split).or_default().push(format!(
                "{utt}\t{}\t{start}\t{end}\t{word_id}",
                wav_path.display()
            ));
            let phone_syms: Vec<String> = template
                .phone_ids
                .iter()
                .map(|&p| inventory[p].symbol.clone())
                .collect();
            phone_rows.push(format!("{utt}\t{start}\t{end}\t{}", phone_syms.join(" ")));
            segments.push(seg);
            phones.push(phone_syms);
            speaker_tags.push(format!("spk{speaker}"));
        }
    }

    let write_manifest = |path: &Path, rows: Option<&Vec<String>>| -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# utterance_id\twav_path\tstart_s\tend_s\tword_id")?;
        if let Some(rows) = rows {
            for r in rows {
                writeln!(f, "{r}")?;
            }
        }
        Ok(())
    };
    let train_manifest = out_dir.join("alignments_train.tsv");
    let valid_manifest = out_dir.join("alignments_valid.tsv");
    let test_manifest = out_dir.join("alignments_test.tsv");
    write_manifest(&train_manifest, manifest_rows.get(&Split::Train))?;
    write_manifest(&valid_manifest, manifest_rows.get(&Split::Valid))?;
    write_manifest(&test_manifest, manifest_rows.get(&Split::Test))?;

    let phone_manifest = out_dir.join("phones.tsv");
    {
        let mut f = std::fs::File::create(&phone_manifest)?;
        writeln!(f, "# utterance_id\tstart_s\tend_s\tphones")?;
        for r in &phone_rows {
            writeln!(f, "{r}")?;
        }
    }

    Ok(GeneratedCorpus {
        segments,
        phones,
        speakers: speaker_tags,
        wav_dir,
        train_manifest,
        valid_manifest,
        test_manifest,
        phone_manifest,
    })
}

#[cfg(test)]
mod tests;
