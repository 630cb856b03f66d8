//! End-to-end pipeline smoke test through the binary, plus the exit-code
//! contract.

use std::path::Path;
use std::process::{Command, Output};

fn cte(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cte"))
        .args(args)
        .output()
        .expect("spawn cte")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero() {
    let out = cte(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("gen-corpus"));
    assert!(text.contains("eval-samediff"));
}

#[test]
fn unknown_command_exits_one() {
    let out = cte(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_one() {
    let out = cte(&["gradcheck", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = cte(&[
        "train",
        "--config",
        "missing.cfg",
        "--pairs",
        "also-missing.tsv",
        "--features",
        "nowhere",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("missing.cfg"), "stderr: {text}");
}

#[test]
fn full_pipeline_produces_ap_summary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let corpus = root.join("corpus");
    let feats = root.join("feats");
    let run = root.join("run");
    let p = |p: &Path| p.to_str().unwrap().to_string();

    // tiny corpus: 6 types x 8 instances x 4 speakers, so the test
    // speaker holds two instances of every type (same-pairs exist)
    let out = cte(&[
        "gen-corpus",
        "--out-dir",
        &p(&corpus),
        "--seed",
        "5",
        "--word-types",
        "6",
        "--instances",
        "8",
        "--speakers",
        "4",
        "--valid-speakers",
        "1",
        "--test-speakers",
        "1",
    ]);
    assert_ok(&out, "gen-corpus");

    let train_manifest = corpus.join("alignments_train.tsv");
    let test_manifest = corpus.join("alignments_test.tsv");
    let out = cte(&[
        "featurize",
        "--alignments",
        &p(&train_manifest),
        "--alignments",
        &p(&test_manifest),
        "--out-dir",
        &p(&feats),
    ]);
    assert_ok(&out, "featurize");
    assert!(feats.read_dir().unwrap().count() > 0);

    let pairs = root.join("pairs.tsv");
    let out = cte(&[
        "pairs",
        "--alignments",
        &p(&train_manifest),
        "--out",
        &p(&pairs),
        "--seed",
        "5",
    ]);
    assert_ok(&out, "pairs");

    // a few steps of a tiny model
    let out = cte(&[
        "train",
        "--pairs",
        &p(&pairs),
        "--features",
        &p(&feats),
        "--out-dir",
        &p(&run),
        "--seed",
        "5",
        "--set",
        "model.layers=1",
        "--set",
        "model.dim=16",
        "--set",
        "model.ffn_dim=32",
        "--set",
        "model.heads=2",
        "--set",
        "model.top_k=1",
        "--set",
        "optim.total_steps=3",
        "--set",
        "optim.batch_size=4",
        "--set",
        "optim.log_interval=1",
    ]);
    assert_ok(&out, "train");
    assert!(run.join("effective.cfg").exists());
    let loss_csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(loss_csv.starts_with("step,loss\n"));
    assert_eq!(loss_csv.lines().count(), 4);
    let ckpt = run.join("step00000003.ctec");
    assert!(ckpt.exists());

    // evaluation on the speaker-disjoint test split
    let ap_csv = root.join("ap.csv");
    let out = cte(&[
        "eval-samediff",
        "--checkpoint",
        &p(&ckpt),
        "--alignments",
        &p(&test_manifest),
        "--features",
        &p(&feats),
        "--out",
        &p(&ap_csv),
    ]);
    assert_ok(&out, "eval-samediff");
    let text = std::fs::read_to_string(&ap_csv).unwrap();
    assert!(text.starts_with("metric,value,n_same,n_diff\n"));
    assert!(text.contains("ap_roc,"));
    assert!(text.contains("ap_pr,"));

    // baselines run on features alone
    let ds_csv = root.join("ap_ds.csv");
    let out = cte(&[
        "eval-samediff",
        "--method",
        "downsampling",
        "--alignments",
        &p(&test_manifest),
        "--features",
        &p(&feats),
        "--out",
        &p(&ds_csv),
    ]);
    assert_ok(&out, "eval-samediff downsampling");
    let dtw_csv = root.join("ap_dtw.csv");
    let out = cte(&[
        "eval-samediff",
        "--method",
        "dtw",
        "--alignments",
        &p(&test_manifest),
        "--features",
        &p(&feats),
        "--out",
        &p(&dtw_csv),
    ]);
    assert_ok(&out, "eval-samediff dtw");

    // embeddings, PSED curve, PCA coordinates
    let emb_csv = root.join("emb.csv");
    let out = cte(&[
        "embed",
        "--checkpoint",
        &p(&ckpt),
        "--alignments",
        &p(&test_manifest),
        "--features",
        &p(&feats),
        "--out",
        &p(&emb_csv),
    ]);
    assert_ok(&out, "embed");
    let text = std::fs::read_to_string(&emb_csv).unwrap();
    assert!(text.starts_with("id,word,speaker,e0,"));

    let psed_csv = root.join("psed.csv");
    let out = cte(&[
        "eval-psed",
        "--checkpoint",
        &p(&ckpt),
        "--alignments",
        &p(&test_manifest),
        "--phones",
        &p(&corpus.join("phones.tsv")),
        "--features",
        &p(&feats),
        "--out",
        &p(&psed_csv),
    ]);
    assert_ok(&out, "eval-psed");
    assert!(std::fs::read_to_string(&psed_csv)
        .unwrap()
        .starts_with("psed,mean_cos,count\n"));

    let pca_csv = root.join("pca.csv");
    let out = cte(&[
        "eval-pca",
        "--checkpoint",
        &p(&ckpt),
        "--alignments",
        &p(&test_manifest),
        "--features",
        &p(&feats),
        "--out",
        &p(&pca_csv),
    ]);
    assert_ok(&out, "eval-pca");
    assert!(std::fs::read_to_string(&pca_csv)
        .unwrap()
        .starts_with("id,word,speaker,x,y\n"));

    // fine-tune a few steps from the checkpoint
    let run2 = root.join("run2");
    let out = cte(&[
        "finetune",
        "--checkpoint",
        &p(&ckpt),
        "--pairs",
        &p(&pairs),
        "--features",
        &p(&feats),
        "--out-dir",
        &p(&run2),
        "--steps",
        "2",
        "--seed",
        "6",
        "--set",
        "optim.batch_size=4",
        "--set",
        "optim.log_interval=1",
    ]);
    assert_ok(&out, "finetune");
    assert!(run2.join("step00000002.ctec").exists());
}

#[test]
fn identical_seeds_produce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |p: &Path| p.to_str().unwrap().to_string();
    for run in ["a", "b"] {
        let corpus = root.join(format!("corpus_{run}"));
        let out = cte(&[
            "gen-corpus",
            "--out-dir",
            &p(&corpus),
            "--seed",
            "77",
            "--word-types",
            "4",
            "--instances",
            "3",
            "--speakers",
            "3",
            "--valid-speakers",
            "1",
            "--test-speakers",
            "1",
        ]);
        assert_ok(&out, "gen-corpus");
    }
    let wav_a = root.join("corpus_a/wav");
    let wav_b = root.join("corpus_b/wav");
    let mut names: Vec<String> = wav_a
        .read_dir()
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let a = std::fs::read(wav_a.join(&n)).unwrap();
        let b = std::fs::read(wav_b.join(&n)).unwrap();
        assert_eq!(a, b, "wav {n} differs between identical-seed runs");
    }
}
