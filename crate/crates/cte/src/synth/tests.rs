use super::*;
use crate::dataset::{build_pairs, PhoneManifest, Split};
use crate::eval::psed;

fn small_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        n_word_types: 6,
        instances_per_type: 4,
        n_speakers: 4,
        valid_speakers: 1,
        test_speakers: 1,
        seed,
        ..CorpusSpec::default()
    }
}

fn dir_digest(dir: &std::path::Path) -> Vec<(String, u64)> {
    let mut entries: Vec<(String, u64)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let e = e.unwrap();
            if e.path().is_dir() {
                stack.push(e.path());
            } else {
                let bytes = std::fs::read(e.path()).unwrap();
                // FNV over content
                let mut h: u64 = 0xcbf29ce484222325;
                for b in bytes {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001B3);
                }
                let name = e
                    .path()
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                entries.push((name, h));
            }
        }
    }
    entries.sort();
    entries
}

#[test]
fn same_seed_gives_byte_identical_corpus() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let d3 = tempfile::tempdir().unwrap();
    generate(&small_spec(42), d1.path()).unwrap();
    generate(&small_spec(42), d2.path()).unwrap();
    generate(&small_spec(43), d3.path()).unwrap();
    // wav paths embedded in manifests differ by temp dir; compare wavs
    // byte-wise and manifests structurally
    assert_eq!(
        dir_digest(&d1.path().join("wav")),
        dir_digest(&d2.path().join("wav"))
    );
    assert_ne!(
        dir_digest(&d1.path().join("wav")),
        dir_digest(&d3.path().join("wav"))
    );
    let strip = |p: &std::path::Path| {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                l.split('\t')
                    .enumerate()
                    .filter(|(i, _)| *i != 1) // drop the wav path column
                    .map(|(_, f)| f.to_string())
                    .collect::<Vec<_>>()
                    .join("\t")
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(
        strip(&d1.path().join("alignments_train.tsv")),
        strip(&d2.path().join("alignments_train.tsv"))
    );
    assert_eq!(
        std::fs::read_to_string(d1.path().join("phones.tsv")).unwrap(),
        std::fs::read_to_string(d2.path().join("phones.tsv")).unwrap()
    );
}

#[test]
fn counts_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        n_word_types: 20,
        instances_per_type: 12,
        n_speakers: 8,
        ..CorpusSpec::default()
    };
    let corpus = generate(&spec, dir.path()).unwrap();
    assert_eq!(corpus.segments.len(), 240);
    for t in 0..20 {
        let word = format!("w{t:02}");
        let n = corpus
            .segments
            .iter()
            .filter(|s| s.word_id.as_deref() == Some(&word))
            .count();
        assert_eq!(n, 12, "type {word}");
    }
    assert_eq!(
        std::fs::read_dir(&corpus.wav_dir).unwrap().count(),
        240
    );
}

#[test]
fn splits_are_speaker_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&small_spec(7), dir.path()).unwrap();
    let speaker_of = |utt: &str| utt.split('-').next().unwrap().to_string();
    let mut by_split: std::collections::HashMap<Split, std::collections::HashSet<String>> =
        Default::default();
    for seg in &corpus.segments {
        by_split
            .entry(seg.split)
            .or_default()
            .insert(speaker_of(&seg.utterance_id));
    }
    let train = &by_split[&Split::Train];
    let test = &by_split[&Split::Test];
    let valid = &by_split[&Split::Valid];
    assert!(train.is_disjoint(test));
    assert!(train.is_disjoint(valid));
    assert!(valid.is_disjoint(test));
    assert!(!train.is_empty() && !test.is_empty());
}

#[test]
fn durations_always_pass_the_training_filter() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&small_spec(11), dir.path()).unwrap();
    for seg in &corpus.segments {
        let d = seg.duration();
        assert!((0.5..=2.0).contains(&d), "{} has duration {d}", seg.utterance_id);
    }
    // consequence: pairing drops nothing
    let train: Vec<_> = corpus
        .segments
        .iter()
        .filter(|s| s.split == Split::Train)
        .cloned()
        .collect();
    let pairs = build_pairs(&train, 0).unwrap();
    let mut per_type: std::collections::HashMap<&str, usize> = Default::default();
    for s in &train {
        *per_type.entry(s.word_id.as_deref().unwrap()).or_default() += 1;
    }
    let expected: usize = per_type.values().map(|&n| n * (n.saturating_sub(1))).sum();
    assert_eq!(pairs.len(), expected);
}

#[test]
fn phone_manifest_agrees_with_edit_distance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&small_spec(13), dir.path()).unwrap();
    let manifest = PhoneManifest::load(&corpus.phone_manifest).unwrap();
    assert_eq!(manifest.len(), corpus.segments.len());
    for (seg, phones) in corpus.segments.iter().zip(corpus.phones.iter()) {
        assert_eq!(manifest.lookup(seg).unwrap(), phones.as_slice());
    }
    // types 1 and 2 are substitution neighbours of type 0 by construction
    let phones_of = |t: usize| -> Vec<String> {
        let word = format!("w{t:02}");
        corpus
            .segments
            .iter()
            .position(|s| s.word_id.as_deref() == Some(&word))
            .map(|i| corpus.phones[i].clone())
            .unwrap()
    };
    assert_eq!(psed(&phones_of(0), &phones_of(1)), 1);
    assert!(psed(&phones_of(0), &phones_of(2)) <= 2);
    assert!(psed(&phones_of(0), &phones_of(2)) >= 1);
}

#[test]
fn instances_of_a_type_share_phones_but_not_audio() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&small_spec(17), dir.path()).unwrap();
    let first: Vec<usize> = (0..corpus.segments.len())
        .filter(|&i| corpus.segments[i].word_id.as_deref() == Some("w00"))
        .collect();
    assert!(first.len() >= 2);
    let (a, b) = (first[0], first[1]);
    assert_eq!(corpus.phones[a], corpus.phones[b]);
    let wav_a = std::fs::read(corpus.wav_dir.join(format!(
        "{}.wav",
        corpus.segments[a].utterance_id
    )))
    .unwrap();
    let wav_b = std::fs::read(corpus.wav_dir.join(format!(
        "{}.wav",
        corpus.segments[b].utterance_id
    )))
    .unwrap();
    assert_ne!(wav_a, wav_b);
}

#[test]
fn infeasible_phone_range_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        phones_per_word: (1, 2), // cannot reach 0.63 s with 0.2 s units
        ..small_spec(1)
    };
    assert!(matches!(
        generate(&spec, dir.path()),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn oversized_jitter_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        duration_jitter: 0.5,
        ..small_spec(1)
    };
    assert!(matches!(
        generate(&spec, dir.path()),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn too_many_reserved_speakers_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec {
        n_speakers: 2,
        valid_speakers: 1,
        test_speakers: 1,
        ..small_spec(1)
    };
    assert!(matches!(
        generate(&spec, dir.path()),
        Err(crate::Error::Config(_))
    ));
}
