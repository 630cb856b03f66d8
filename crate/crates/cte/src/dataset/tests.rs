use super::*;
use crate::features::FeatureSequence;
use std::io::Write;
use std::path::PathBuf;

fn seg(utt: &str, start: f64, end: f64, word: &str) -> WordSegment {
    WordSegment {
        utterance_id: utt.into(),
        start,
        end,
        word_id: Some(word.into()),
        split: Split::Train,
    }
}

fn write_tmp(content: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.tsv");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    (dir, path)
}

// ── alignment manifest ───────────────────────────────────────────────

#[test]
fn empty_manifest_gives_empty_list() {
    let (_d, path) = write_tmp("# only a comment\n\n");
    let m = load_alignments(&path, Split::Train).unwrap();
    assert!(m.segments.is_empty());
}

#[test]
fn single_row_round_trip() {
    let (_d, path) = write_tmp("utt1\twav/utt1.wav\t0.25\t1.10\thello\n");
    let m = load_alignments(&path, Split::Test).unwrap();
    assert_eq!(m.segments.len(), 1);
    let s = &m.segments[0];
    assert_eq!(s.utterance_id, "utt1");
    assert_eq!(s.start, 0.25);
    assert_eq!(s.end, 1.10);
    assert_eq!(s.word_id.as_deref(), Some("hello"));
    assert_eq!(s.split, Split::Test);
    assert_eq!(
        m.wav_paths.get("utt1").unwrap(),
        &PathBuf::from("wav/utt1.wav")
    );
}

#[test]
fn bad_row_fails_with_line_number() {
    let mut content = String::new();
    for i in 0..10 {
        if i == 6 {
            content.push_str("utt6\twav/utt6.wav\t1.5\t0.5\tword\n"); // end < start
        } else {
            content.push_str(&format!("utt{i}\twav/utt{i}.wav\t0.0\t1.0\tword\n"));
        }
    }
    let (_d, path) = write_tmp(&content);
    match load_alignments(&path, Split::Train) {
        Err(crate::Error::Parse { line, .. }) => assert_eq!(line, 7),
        other => panic!("expected parse error, got {other:?}"),
    }
}

// ── build_pairs ──────────────────────────────────────────────────────

#[test]
fn two_instances_give_two_ordered_pairs() {
    let segs = vec![seg("u1", 0.0, 0.8, "cat"), seg("u2", 0.0, 0.9, "cat")];
    let pairs = build_pairs(&segs, 0).unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].a.utterance_id, "u1");
    assert_eq!(pairs[0].b.utterance_id, "u2");
    assert_eq!(pairs[1].a.utterance_id, "u2");
    assert_eq!(pairs[1].b.utterance_id, "u1");
}

#[test]
fn short_instance_is_excluded_entirely() {
    let segs = vec![
        seg("u1", 0.0, 0.3, "cat"), // 0.3 s, below the floor
        seg("u2", 0.0, 0.9, "cat"),
        seg("u3", 0.0, 0.8, "cat"),
    ];
    let pairs = build_pairs(&segs, 0).unwrap();
    assert_eq!(pairs.len(), 2);
    assert!(pairs
        .iter()
        .all(|p| p.a.utterance_id != "u1" && p.b.utterance_id != "u1"));
}

#[test]
fn duration_bounds_are_inclusive() {
    let segs = vec![
        seg("u1", 0.0, 0.5, "cat"),
        seg("u2", 0.0, 2.0, "cat"),
        seg("u3", 0.0, 2.000001, "cat"),
    ];
    let pairs = build_pairs(&segs, 0).unwrap();
    assert_eq!(pairs.len(), 2); // u1 and u2 admitted, u3 dropped
}

#[test]
fn four_instances_give_twelve_ordered_pairs() {
    let segs: Vec<WordSegment> = (0..4).map(|i| seg(&format!("u{i}"), 0.0, 1.0, "dog")).collect();
    let pairs = build_pairs(&segs, 0).unwrap();
    assert_eq!(pairs.len(), 12);
}

#[test]
fn pair_list_is_symmetric() {
    let segs: Vec<WordSegment> = (0..5)
        .map(|i| seg(&format!("u{i}"), 0.0, 1.0, if i < 3 { "a" } else { "b" }))
        .collect();
    let pairs = build_pairs(&segs, 0).unwrap();
    for p in &pairs {
        assert!(pairs
            .iter()
            .any(|q| q.a == p.b && q.b == p.a), "missing reverse of {p:?}");
    }
}

#[test]
fn oversized_type_is_subsampled_deterministically() {
    let segs: Vec<WordSegment> = (0..30)
        .map(|i| seg(&format!("u{i}"), 0.0, 1.0, "big"))
        .collect();
    let p1 = build_pairs(&segs, 42).unwrap();
    let p2 = build_pairs(&segs, 42).unwrap();
    assert_eq!(p1.len(), 20 * 19);
    assert_eq!(
        p1.iter().map(|p| p.a.utterance_id.clone()).collect::<Vec<_>>(),
        p2.iter().map(|p| p.a.utterance_id.clone()).collect::<Vec<_>>()
    );
    let p3 = build_pairs(&segs, 43).unwrap();
    assert_ne!(
        p1.iter().map(|p| p.a.utterance_id.clone()).collect::<Vec<_>>(),
        p3.iter().map(|p| p.a.utterance_id.clone()).collect::<Vec<_>>()
    );
}

#[test]
fn missing_word_id_is_input_error() {
    let mut s = seg("u1", 0.0, 1.0, "x");
    s.word_id = None;
    assert!(matches!(
        build_pairs(&[s], 0),
        Err(crate::Error::Input(_))
    ));
}

// ── UTD pairs ────────────────────────────────────────────────────────

#[test]
fn utd_pair_is_symmetrised() {
    let (_d, path) = write_tmp("u1\t0.0\t0.8\tu2\t0.1\t0.9\n");
    let pairs = load_utd_pairs(&path).unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].a.utterance_id, "u1");
    assert_eq!(pairs[1].a.utterance_id, "u2");
    assert!(pairs.iter().all(|p| p.a.word_id.is_none()));
}

#[test]
fn utd_existing_reverse_is_not_duplicated() {
    let content = "u1\t0.0\t0.8\tu2\t0.1\t0.9\n\
                   u2\t0.1\t0.9\tu1\t0.0\t0.8\n\
                   u3\t0.0\t0.7\tu4\t0.0\t0.7\n\
                   u4\t0.0\t0.7\tu3\t0.0\t0.7\n";
    let (_d, path) = write_tmp(content);
    let pairs = load_utd_pairs(&path).unwrap();
    assert_eq!(pairs.len(), 4, "4 lines with reverses stay 4 pairs");
}

#[test]
fn utd_overlong_segment_is_dropped() {
    let content = "u1\t0.0\t2.5\tu2\t0.1\t0.9\nu3\t0.0\t0.8\tu4\t0.1\t0.9\n";
    let (_d, path) = write_tmp(content);
    let pairs = load_utd_pairs(&path).unwrap();
    assert_eq!(pairs.len(), 2);
    assert!(pairs.iter().all(|p| p.a.utterance_id != "u1"));
}

#[test]
fn utd_malformed_line_is_parse_error() {
    let (_d, path) = write_tmp("u1\t0.0\t0.8\tu2\t0.1\n");
    assert!(matches!(
        load_utd_pairs(&path),
        Err(crate::Error::Parse { line: 1, .. })
    ));
}

// ── batching ─────────────────────────────────────────────────────────

fn const_features(t: usize, f: usize, v: f64) -> FeatureSequence {
    FeatureSequence::from_raw(vec![v; t * f], t, f).unwrap()
}

fn store_with(utts: &[(&str, usize)]) -> FeatureStore {
    let mut store = FeatureStore::new();
    for (utt, frames) in utts {
        store.insert(*utt, const_features(*frames, 80, 0.5));
    }
    store
}

fn word_pair(a: &str, ta: f64, b: &str, tb: f64) -> WordPair {
    WordPair {
        a: seg(a, 0.0, ta, "w"),
        b: seg(b, 0.0, tb, "w"),
    }
}

#[test]
fn single_pair_batch_has_no_padding_beyond_token() {
    let store = store_with(&[("u1", 50), ("u2", 60)]);
    let pairs = vec![word_pair("u1", 0.5, "u2", 0.6)];
    let batch = assemble_batch(&pairs, &[0], &store, 1.0).unwrap();
    assert_eq!(batch.student.shape(), &[1, 51, 80]);
    assert_eq!(batch.teacher.shape(), &[1, 61, 80]);
    assert!(batch.student_mask.iter().all(|&m| m));
    // token row is all ones
    assert!(batch.student.data()[..80].iter().all(|&v| v == 1.0));
}

#[test]
fn padding_arithmetic_for_mixed_lengths() {
    let store = store_with(&[("u1", 50), ("u2", 80), ("u3", 70), ("u4", 80)]);
    let pairs = vec![
        word_pair("u1", 0.5, "u3", 0.7),
        word_pair("u2", 0.8, "u4", 0.8),
    ];
    let batch = assemble_batch(&pairs, &[0, 1], &store, 1.0).unwrap();
    assert_eq!(batch.student.shape(), &[2, 81, 80]);
    let masked = batch.student_mask[..81].iter().filter(|&&m| !m).count();
    assert_eq!(masked, 30, "shorter row has 30 masked positions");
    assert_eq!(batch.student_len, vec![51, 81]);
    // padding holds zeros
    let row0 = &batch.student.data()[..81 * 80];
    assert!(row0[51 * 80..].iter().all(|&v| v == 0.0));
}

#[test]
fn missing_features_is_lookup_error() {
    let store = store_with(&[("u1", 50)]);
    let pairs = vec![word_pair("u1", 0.5, "nowhere", 0.5)];
    assert!(matches!(
        assemble_batch(&pairs, &[0], &store, 1.0),
        Err(crate::Error::Lookup(_))
    ));
}

#[test]
fn batch_plan_is_deterministic_and_partitions_epoch() {
    let plan = BatchPlan::new(11, 4, 7).unwrap();
    assert_eq!(plan.batches_per_epoch(), 3);
    let mut seen: Vec<usize> = Vec::new();
    for slot in 0..3 {
        seen.extend(plan.batch_indices(slot));
    }
    let mut sorted = seen.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..11).collect::<Vec<_>>(), "exact partition");
    assert_eq!(plan.batch_indices(2).len(), 3, "last incomplete batch kept");

    let plan2 = BatchPlan::new(11, 4, 7).unwrap();
    for step in 0..9 {
        assert_eq!(plan.batch_indices(step), plan2.batch_indices(step));
    }
    // different epochs use different permutations
    assert_ne!(
        (0..3).flat_map(|s| plan.batch_indices(s)).collect::<Vec<_>>(),
        (3..6).flat_map(|s| plan.batch_indices(s)).collect::<Vec<_>>()
    );
}

#[test]
fn mask_count_equals_len_per_row() {
    let store = store_with(&[("u1", 50), ("u2", 80), ("u3", 70), ("u4", 60)]);
    let pairs = vec![
        word_pair("u1", 0.5, "u2", 0.8),
        word_pair("u3", 0.7, "u4", 0.6),
    ];
    let batch = assemble_batch(&pairs, &[0, 1], &store, 1.0).unwrap();
    let tmax = batch.student.shape()[1];
    for (i, &len) in batch.student_len.iter().enumerate() {
        let unmasked = batch.student_mask[i * tmax..(i + 1) * tmax]
            .iter()
            .filter(|&&m| m)
            .count();
        assert_eq!(unmasked, len);
        assert!(batch.student_mask[i * tmax], "position 0 unmasked");
    }
}
