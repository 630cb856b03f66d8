//! Training-pair construction and deterministic batching.
//!
//! Same-word pairs come either from labelled alignments ([`build_pairs`])
//! or a discovered-pair manifest ([`load_utd_pairs`]); both apply the
//! 0.5–2.0 s duration filter and emit both orders of every pair, so each
//! segment appears on the student and the teacher side.

mod manifest;

pub use manifest::{
    load_alignments, load_utd_pairs, write_pairs_manifest, AlignmentManifest, PhoneManifest,
};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::numerics::Tensor;

/// Training duration bounds, inclusive on both ends.
pub const MIN_WORD_DURATION: f64 = 0.5;
pub const MAX_WORD_DURATION: f64 = 2.0;

/// Word types with more admitted instances than this are subsampled to
/// keep the ordered-pair count from exploding quadratically.
pub const MAX_INSTANCES_PER_TYPE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn tag(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// One word occurrence inside an utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct WordSegment {
    pub utterance_id: String,
    pub start: f64,
    pub end: f64,
    pub word_id: Option<String>,
    pub split: Split,
}

impl WordSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Stable identifier for outputs and caches.
    pub fn id(&self) -> String {
        format!("{}:{:.3}-{:.3}", self.utterance_id, self.start, self.end)
    }
}

/// Two same-word segments; `a` feeds the student, `b` the teacher.
#[derive(Clone, Debug)]
pub struct WordPair {
    pub a: WordSegment,
    pub b: WordSegment,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Deterministic per-purpose RNG seed derivation.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    mix(seed, salt)
}

/// Build all ordered same-word pairs from labelled segments.
///
/// The duration filter runs first; word types with fewer than two admitted
/// instances contribute nothing; types with more than
/// [`MAX_INSTANCES_PER_TYPE`] instances are subsampled with `seed`. For each
/// kept type every ordered pair of distinct instances is emitted, so (X, Y)
/// and (Y, X) both appear.
pub fn build_pairs(segments: &[WordSegment], seed: u64) -> Result<Vec<WordPair>> {
    let mut by_type: Vec<(String, Vec<usize>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, seg) in segments.iter().enumerate() {
        let word = seg.word_id.clone().ok_or_else(|| {
            Error::Input(format!("segment {} has no word id", seg.id()))
        })?;
        let d = seg.duration();
        if !(MIN_WORD_DURATION..=MAX_WORD_DURATION).contains(&d) {
            continue;
        }
        match index.get(&word) {
            Some(&slot) => by_type[slot].1.push(i),
            None => {
                index.insert(word.clone(), by_type.len());
                by_type.push((word, vec![i]));
            }
        }
    }

    let mut pairs = Vec::new();
    for (word, mut instances) in by_type {
        if instances.len() < 2 {
            continue;
        }
        if instances.len() > MAX_INSTANCES_PER_TYPE {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, fnv1a(&word)));
            instances.shuffle(&mut rng);
            instances.truncate(MAX_INSTANCES_PER_TYPE);
            instances.sort_unstable();
        }
        for &i in &instances {
            for &j in &instances {
                if i != j {
                    pairs.push(WordPair {
                        a: segments[i].clone(),
                        b: segments[j].clone(),
                    });
                }
            }
        }
    }
    Ok(pairs)
}

/// Utterance-level feature lookup used by batch assembly.
#[derive(Default)]
pub struct FeatureStore {
    utterances: HashMap<String, FeatureSequence>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utterance_id: impl Into<String>, features: FeatureSequence) {
        self.utterances.insert(utterance_id.into(), features);
    }

    pub fn get(&self, utterance_id: &str) -> Option<&FeatureSequence> {
        self.utterances.get(utterance_id)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Features for one segment, sliced out of its utterance.
    pub fn segment_features(&self, seg: &WordSegment) -> Result<FeatureSequence> {
        let utt = self.utterances.get(&seg.utterance_id).ok_or_else(|| {
            Error::Lookup(format!("no features for utterance {}", seg.utterance_id))
        })?;
        crate::features::slice_segment(utt, seg.start, seg.end)
    }
}

/// One padded, masked training batch. Position 0 of every row is the
/// prepended token; masked (padding) positions hold zeros.
#[derive(Clone, Debug)]
pub struct Batch {
    /// B×(Tmax+1)×F student-side features.
    pub student: Tensor,
    /// B×(T'max+1)×F teacher-side features.
    pub teacher: Tensor,
    /// B×(Tmax+1), true = token or real frame.
    pub student_mask: Vec<bool>,
    pub teacher_mask: Vec<bool>,
    /// Unmasked prefix length (T_i + 1) per row.
    pub student_len: Vec<usize>,
    pub teacher_len: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.student_len.len()
    }
}

fn pack_side(
    feats: &[FeatureSequence],
    token_fill: f64,
) -> (Tensor, Vec<bool>, Vec<usize>) {
    let b = feats.len();
    let f = feats[0].dim();
    let tmax = feats.iter().map(|x| x.num_frames()).max().unwrap() + 1;
    let mut data = vec![0.0; b * tmax * f];
    let mut mask = vec![false; b * tmax];
    let mut lens = Vec::with_capacity(b);
    for (i, feat) in feats.iter().enumerate() {
        let base = i * tmax * f;
        data[base..base + f].fill(token_fill);
        data[base + f..base + (feat.num_frames() + 1) * f].copy_from_slice(feat.data());
        mask[i * tmax..i * tmax + feat.num_frames() + 1].fill(true);
        lens.push(feat.num_frames() + 1);
    }
    (
        Tensor::new(data, &[b, tmax, f]).expect("consistent dims"),
        mask,
        lens,
    )
}

/// Assemble one batch from pair indices, looking features up per segment.
pub fn assemble_batch(
    pairs: &[WordPair],
    indices: &[usize],
    store: &FeatureStore,
    token_fill: f64,
) -> Result<Batch> {
    if indices.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut a_feats = Vec::with_capacity(indices.len());
    let mut b_feats = Vec::with_capacity(indices.len());
    for &i in indices {
        a_feats.push(store.segment_features(&pairs[i].a)?);
        b_feats.push(store.segment_features(&pairs[i].b)?);
    }
    let (student, student_mask, student_len) = pack_side(&a_feats, token_fill);
    let (teacher, teacher_mask, teacher_len) = pack_side(&b_feats, token_fill);
    Ok(Batch {
        student,
        teacher,
        student_mask,
        teacher_mask,
        student_len,
        teacher_len,
    })
}

/// Deterministic epoch/batch schedule over a pair list. The batch for any
/// step is a pure function of (seed, step), which is what makes checkpoint
/// resume bit-exact.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    num_pairs: usize,
    batch_size: usize,
    seed: u64,
}

impl BatchPlan {
    pub fn new(num_pairs: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if num_pairs == 0 {
            return Err(Error::Config("empty pair list".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(BatchPlan {
            num_pairs,
            batch_size,
            seed,
        })
    }

    /// Batches per epoch; the last, possibly incomplete batch is kept.
    pub fn batches_per_epoch(&self) -> usize {
        self.num_pairs.div_ceil(self.batch_size)
    }

    fn permutation(&self, epoch: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.num_pairs).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, epoch as u64));
        perm.shuffle(&mut rng);
        perm
    }

    /// Pair indices of the batch consumed at `step` (0-based).
    pub fn batch_indices(&self, step: usize) -> Vec<usize> {
        let bpe = self.batches_per_epoch();
        let epoch = step / bpe;
        let slot = step % bpe;
        let perm = self.permutation(epoch);
        let lo = slot * self.batch_size;
        let hi = (lo + self.batch_size).min(self.num_pairs);
        perm[lo..hi].to_vec()
    }
}

/// Stream of batches in training order; a thin iterator over [`BatchPlan`].
pub fn make_batches<'a>(
    pairs: &'a [WordPair],
    store: &'a FeatureStore,
    batch_size: usize,
    shuffle_seed: u64,
    token_fill: f64,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    let plan = BatchPlan::new(pairs.len(), batch_size, shuffle_seed)?;
    let bpe = plan.batches_per_epoch();
    Ok((0..bpe).map(move |slot| {
        let idx = plan.batch_indices(slot);
        assemble_batch(pairs, &idx, store, token_fill)
    }))
}

#[cfg(test)]
mod tests;
