use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use cte::dataset::{
    build_pairs, load_alignments, load_utd_pairs, write_pairs_manifest, FeatureStore,
    PhoneManifest, Split, WordPair, WordSegment,
};
use cte::eval::{
    collapse_metric, downsampling_baseline, dtw_distance, extract_embeddings, pca_project,
    psed_curve, same_different, summarize_pairs, write_ap_summary, write_pca_coords,
    write_psed_curve, PairScore, DOWNSAMPLE_FRAMES,
};
use cte::features::{compute_log_mel, read_features, read_wav, write_features, FrontendConfig};
use cte::model::{gradient_suite, Checkpoint};
use cte::synth::{generate, CorpusSpec};
use cte::trainer::{finetune, train_loop, write_loss_curve, RunConfig, TrainState};
use cte::{Embedding, FeatureSequence, Precision};

use crate::{Command, Method};

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::GenCorpus {
            out_dir,
            seed,
            word_types,
            instances,
            speakers,
            valid_speakers,
            test_speakers,
        } => {
            let spec = CorpusSpec {
                n_word_types: word_types,
                instances_per_type: instances,
                n_speakers: speakers,
                valid_speakers,
                test_speakers,
                seed,
                ..CorpusSpec::default()
            };
            std::fs::create_dir_all(&out_dir)?;
            let corpus = generate(&spec, &out_dir)?;
            eprintln!(
                "[cte] generated {} segments ({} word types x {} instances, {} speakers) under {}",
                corpus.segments.len(),
                word_types,
                instances,
                speakers,
                out_dir.display()
            );
            Ok(0)
        }
        Command::Featurize { alignments, out_dir } => {
            std::fs::create_dir_all(&out_dir)?;
            let cfg = FrontendConfig::default();
            let mut done: BTreeSet<String> = BTreeSet::new();
            for manifest_path in &alignments {
                let manifest = load_alignments(manifest_path, Split::Train)?;
                for (utt, wav) in &manifest.wav_paths {
                    if !done.insert(utt.clone()) {
                        continue;
                    }
                    let w = read_wav(wav)
                        .with_context(|| format!("reading {} for {utt}", wav.display()))?;
                    let feats = compute_log_mel(&w, &cfg)?;
                    write_features(&out_dir.join(format!("{utt}.ctef")), &feats)?;
                }
            }
            eprintln!("[cte] wrote features for {} utterances to {}", done.len(), out_dir.display());
            Ok(0)
        }
        Command::Pairs { alignments, out, seed } => {
            let manifest = load_alignments(&alignments, Split::Train)?;
            let pairs = build_pairs(&manifest.segments, seed)?;
            write_pairs_manifest(&out, &pairs)?;
            eprintln!(
                "[cte] {} segments -> {} ordered pairs -> {}",
                manifest.segments.len(),
                pairs.len(),
                out.display()
            );
            Ok(0)
        }
        Command::Train {
            config,
            set,
            seed,
            pairs,
            features,
            out_dir,
        } => {
            let run_config = effective_config(config.as_deref(), &set, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            run_config.save(&out_dir.join("effective.cfg"))?;
            let pair_list = load_utd_pairs(&pairs)?;
            let store = load_feature_store(&features, pair_list.iter().flat_map(pair_utts))?;
            let state = TrainState::new(run_config.model.clone(), run_config.optim.seed)?;
            eprintln!(
                "[cte] training {} steps on {} pairs (seed {})",
                run_config.optim.total_steps,
                pair_list.len(),
                run_config.optim.seed
            );
            let (state, curve) =
                train_loop(state, &pair_list, &store, &run_config.optim, Some(&out_dir))?;
            write_loss_curve(&out_dir.join("loss.csv"), &curve)?;
            eprintln!(
                "[cte] done at step {}; final checkpoint {}",
                state.step,
                out_dir.join(format!("step{:08}.ctec", state.step)).display()
            );
            Ok(0)
        }
        Command::Finetune {
            checkpoint,
            config,
            set,
            seed,
            steps,
            pairs,
            features,
            out_dir,
        } => {
            let mut run_config = effective_config(config.as_deref(), &set, seed)?;
            run_config.optim.total_steps = steps;
            std::fs::create_dir_all(&out_dir)?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            run_config.model = ckpt.config.clone();
            run_config.save(&out_dir.join("effective.cfg"))?;
            let pair_list = load_utd_pairs(&pairs)?;
            let store = load_feature_store(&features, pair_list.iter().flat_map(pair_utts))?;
            eprintln!(
                "[cte] fine-tuning {} steps from {} on {} pairs",
                steps,
                checkpoint.display(),
                pair_list.len()
            );
            let (state, curve) =
                finetune(ckpt, &pair_list, &store, &run_config.optim, Some(&out_dir))?;
            write_loss_curve(&out_dir.join("loss.csv"), &curve)?;
            eprintln!("[cte] done at step {}", state.step);
            Ok(0)
        }
        Command::Embed {
            checkpoint,
            alignments,
            features,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let manifest = load_alignments(&alignments, Split::Test)?;
            let store = load_feature_store(
                &features,
                manifest.segments.iter().map(|s| s.utterance_id.clone()),
            )?;
            let feats = segment_features(&manifest.segments, &store)?;
            let embeddings =
                extract_embeddings(&ckpt.student, &ckpt.config, &feats, Precision::F64)?;
            let mut f = std::fs::File::create(&out)?;
            let d = ckpt.config.model_dim;
            let header: Vec<String> = (0..d).map(|i| format!("e{i}")).collect();
            writeln!(f, "id,word,speaker,{}", header.join(","))?;
            for (seg, e) in manifest.segments.iter().zip(embeddings.iter()) {
                let vals: Vec<String> = e.as_slice().iter().map(|v| v.to_string()).collect();
                writeln!(
                    f,
                    "{},{},{},{}",
                    seg.id(),
                    seg.word_id.as_deref().unwrap_or("-"),
                    speaker_of(seg),
                    vals.join(",")
                )?;
            }
            eprintln!("[cte] wrote {} embeddings to {}", embeddings.len(), out.display());
            Ok(0)
        }
        Command::EvalSamediff {
            method,
            checkpoint,
            alignments,
            features,
            out,
        } => {
            let manifest = load_alignments(&alignments, Split::Test)?;
            let store = load_feature_store(
                &features,
                manifest.segments.iter().map(|s| s.utterance_id.clone()),
            )?;
            let feats = segment_features(&manifest.segments, &store)?;
            let labels = word_labels(&manifest.segments)?;
            let result = match method {
                Method::Cte => {
                    let path = checkpoint
                        .ok_or_else(|| anyhow!("--method cte requires --checkpoint"))?;
                    let ckpt = Checkpoint::load(&path)?;
                    let embeddings =
                        extract_embeddings(&ckpt.student, &ckpt.config, &feats, Precision::F64)?;
                    let collapse = collapse_metric(&embeddings)?;
                    eprintln!("[cte] collapse metric: {collapse:.4}");
                    same_different(&embeddings, &labels)?
                }
                Method::Downsampling => {
                    let embeddings: Vec<Embedding> = feats
                        .iter()
                        .map(|f| downsampling_baseline(f, DOWNSAMPLE_FRAMES))
                        .collect();
                    same_different(&embeddings, &labels)?
                }
                Method::Dtw => {
                    let mut pairs = Vec::new();
                    for i in 0..feats.len() {
                        for j in i + 1..feats.len() {
                            pairs.push(PairScore {
                                a: i,
                                b: j,
                                same: labels[i] == labels[j],
                                score: -dtw_distance(&feats[i], &feats[j]),
                            });
                        }
                    }
                    summarize_pairs(pairs)?
                }
            };
            write_ap_summary(&out, &result)?;
            eprintln!(
                "[cte] ap_roc = {:.4}, ap_pr = {:.4} over {} same / {} different pairs -> {}",
                result.ap_roc,
                result.ap_pr,
                result.n_same,
                result.n_diff,
                out.display()
            );
            Ok(0)
        }
        Command::EvalPsed {
            checkpoint,
            alignments,
            phones,
            features,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let manifest = load_alignments(&alignments, Split::Test)?;
            let phone_manifest = PhoneManifest::load(&phones)?;
            let store = load_feature_store(
                &features,
                manifest.segments.iter().map(|s| s.utterance_id.clone()),
            )?;
            let feats = segment_features(&manifest.segments, &store)?;
            let embeddings =
                extract_embeddings(&ckpt.student, &ckpt.config, &feats, Precision::F64)?;
            let segments = eval_segments(&manifest.segments, &feats, Some(&phone_manifest))?;
            let curve = psed_curve(&segments, &embeddings)?;
            write_psed_curve(&out, &curve)?;
            for b in &curve {
                let mean = b
                    .mean_cos
                    .map(|m| format!("{m:.4}"))
                    .unwrap_or_else(|| "NA".into());
                eprintln!("[cte] psed {}: mean_cos {} over {} pairs", b.bucket, mean, b.count);
            }
            Ok(0)
        }
        Command::EvalPca {
            checkpoint,
            alignments,
            features,
            out,
            components,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let manifest = load_alignments(&alignments, Split::Test)?;
            let store = load_feature_store(
                &features,
                manifest.segments.iter().map(|s| s.utterance_id.clone()),
            )?;
            let feats = segment_features(&manifest.segments, &store)?;
            let embeddings =
                extract_embeddings(&ckpt.student, &ckpt.config, &feats, Precision::F64)?;
            let projection = pca_project(&embeddings, components)?;
            let segments = eval_segments(&manifest.segments, &feats, None)?;
            write_pca_coords(&out, &segments, &projection)?;
            eprintln!(
                "[cte] pca explained variance: {:?}{}",
                projection.explained,
                if projection.reduced_rank { " (reduced rank)" } else { "" }
            );
            Ok(0)
        }
        Command::Gradcheck { h, tol } => {
            let reports = gradient_suite(h, tol)?;
            let mut all_pass = true;
            for (name, report) in &reports {
                eprintln!("== {name} ==\n{report}");
                all_pass &= report.pass();
            }
            if all_pass {
                eprintln!("[cte] gradient suite: PASS ({} checks)", reports.len());
                Ok(0)
            } else {
                eprintln!("[cte] gradient suite: FAIL");
                Ok(3)
            }
        }
    }
}

fn effective_config(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    for kv in sets {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(s) = seed {
        cfg.optim.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pair_utts(p: &WordPair) -> [String; 2] {
    [p.a.utterance_id.clone(), p.b.utterance_id.clone()]
}

fn load_feature_store(
    dir: &Path,
    utterances: impl Iterator<Item = String>,
) -> Result<FeatureStore> {
    let mut store = FeatureStore::new();
    for utt in utterances.collect::<BTreeSet<String>>() {
        let path = dir.join(format!("{utt}.ctef"));
        let feats =
            read_features(&path).with_context(|| format!("loading features for {utt}"))?;
        store.insert(utt, feats);
    }
    Ok(store)
}

fn segment_features(
    segments: &[WordSegment],
    store: &FeatureStore,
) -> Result<Vec<FeatureSequence>> {
    segments
        .iter()
        .map(|s| Ok(store.segment_features(s)?))
        .collect()
}

fn word_labels(segments: &[WordSegment]) -> Result<Vec<String>> {
    segments
        .iter()
        .map(|s| {
            s.word_id
                .clone()
                .ok_or_else(|| anyhow!("segment {} has no word id", s.id()))
        })
        .collect()
}

/// Speaker tag convention: the utterance-id prefix before the first '-'.
fn speaker_of(seg: &WordSegment) -> String {
    seg.utterance_id
        .split('-')
        .next()
        .unwrap_or("unknown")
        .to_string()
}

fn eval_segments(
    segments: &[WordSegment],
    feats: &[FeatureSequence],
    phones: Option<&PhoneManifest>,
) -> Result<Vec<cte::EvalSegment>> {
    segments
        .iter()
        .zip(feats.iter())
        .map(|(seg, f)| {
            let phone_seq = match phones {
                Some(manifest) => Some(
                    manifest
                        .lookup(seg)
                        .ok_or_else(|| anyhow!("no phones for segment {}", seg.id()))?
                        .to_vec(),
                ),
                None => None,
            };
            Ok(cte::EvalSegment {
                segment: seg.clone(),
                features: f.clone(),
                phones: phone_seq,
                speaker_id: speaker_of(seg),
            })
        })
        .collect()
}
