use std::io::Write;
use std::path::Path;

use crate::dataset::{assemble_batch, derive_seed, Batch, BatchPlan, FeatureStore, WordPair};
use crate::error::{Error, Result};
use crate::model::{
    build_target, cosine_loss_on_tape, ema_update, encode_batch, Checkpoint, TapedEncoder,
};
use crate::numerics::Tape;

use super::{adam_step, OptimConfig, TrainState};

/// (step, loss) samples emitted at the log interval.
pub type LossCurve = Vec<(u64, f64)>;

const SHUFFLE_SALT: u64 = 0x5348_5546; // "SHUF"
const DROPOUT_SALT: u64 = 0x44_524f50; // "DROP"

fn trimmed_row<'a>(batch_side: &'a crate::numerics::Tensor, lens: &[usize], i: usize) -> &'a [f64] {
    let t = batch_side.shape()[1];
    let f = batch_side.shape()[2];
    &batch_side.data()[i * t * f..i * t * f + lens[i] * f]
}

/// Pairs processed per worker thread; the partition (and therefore the
/// deterministic gradient-merge order) depends only on the batch size and
/// the worker count.
fn worker_count(batch: usize) -> usize {
    if let Ok(v) = std::env::var("CTE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.clamp(1, batch.max(1));
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
        .min(batch.max(1))
}

struct ChunkResult {
    losses: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

/// Teacher targets, student forward, and backward for one contiguous chunk
/// of the batch. Gradients come back unscaled (the 1/B folds into the Adam
/// scale), so merging chunk results in chunk order is deterministic.
fn process_chunk(
    state: &TrainState,
    batch: &Batch,
    optim: &OptimConfig,
    range: std::ops::Range<usize>,
    seeds: &[u64],
) -> Result<ChunkResult> {
    let teacher_rows: Vec<&[f64]> = range
        .clone()
        .map(|i| trimmed_row(&batch.teacher, &batch.teacher_len, i))
        .collect();
    let mut teacher_tape = Tape::new(optim.precision);
    let tenc = TapedEncoder::stage(&mut teacher_tape, &state.teacher, false);
    let touts = encode_batch(
        &mut teacher_tape,
        &tenc,
        &state.model_config,
        &teacher_rows,
        None,
    )?;
    let mut targets = Vec::with_capacity(teacher_rows.len());
    for tout in &touts {
        let layer_vecs: Vec<Vec<f64>> = tout
            .layer_firsts
            .iter()
            .map(|&id| teacher_tape.data(id).to_vec())
            .collect();
        targets.push(build_target(&layer_vecs, state.model_config.top_k)?);
    }
    drop(teacher_tape);

    let student_rows: Vec<&[f64]> = range
        .clone()
        .map(|i| trimmed_row(&batch.student, &batch.student_len, i))
        .collect();
    let mut tape = Tape::new(optim.precision);
    let enc = TapedEncoder::stage(&mut tape, &state.student, true);
    let outs = encode_batch(
        &mut tape,
        &enc,
        &state.model_config,
        &student_rows,
        Some(&seeds[range]),
    )?;
    let mut losses = Vec::with_capacity(outs.len());
    let mut loss_ids = Vec::with_capacity(outs.len());
    for (out, target) in outs.iter().zip(targets.iter()) {
        let l = cosine_loss_on_tape(&mut tape, out.v, target)?;
        losses.push(tape.scalar_value(l)?);
        loss_ids.push(l);
    }
    let mut total = loss_ids[0];
    for &l in &loss_ids[1..] {
        total = tape.add(total, l)?;
    }
    tape.backward(total)?;
    let mut grads = Vec::with_capacity(state.adam_m.len());
    for &id in &enc.grad_ids() {
        grads.push(
            tape.grad(id)
                .ok_or_else(|| {
                    Error::Contract(format!("parameter leaf {id:?} received no gradient"))
                })?
                .to_vec(),
        );
    }
    Ok(ChunkResult { losses, grads })
}

/// One optimization step over a batch; returns the mean pair loss.
///
/// Pairs are packed into tall per-chunk tapes (one chunk per worker; the
/// worker count is capped by available cores and overridable through
/// CTE_THREADS). Encoding uses each row's unmasked prefix — by the masking
/// contract the result is identical to running the padded row, just
/// cheaper. Per-pair dropout streams are seeded by (run seed, step, pair),
/// independent of the partition.
pub fn train_step(state: &mut TrainState, batch: &Batch, optim: &OptimConfig) -> Result<f64> {
    let b = batch.size();
    let inv_b = 1.0 / b as f64;
    let step_salt = derive_seed(state.seed, DROPOUT_SALT ^ state.step);
    let seeds: Vec<u64> = (0..b).map(|i| derive_seed(step_salt, i as u64)).collect();

    let workers = worker_count(b);
    let chunk = b.div_ceil(workers);
    let ranges: Vec<std::ops::Range<usize>> = (0..workers)
        .map(|w| (w * chunk).min(b)..((w + 1) * chunk).min(b))
        .filter(|r| !r.is_empty())
        .collect();

    let results: Vec<ChunkResult> = if ranges.len() == 1 {
        vec![process_chunk(state, batch, optim, ranges[0].clone(), &seeds)?]
    } else {
        let state_ref = &*state;
        let seeds_ref = &seeds;
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .map(|r| {
                    let r = r.clone();
                    scope.spawn(move || process_chunk(state_ref, batch, optim, r, seeds_ref))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    };

    // deterministic merge in chunk order
    let mut loss_sum = 0.0;
    for r in &results {
        for &l in &r.losses {
            loss_sum += l;
        }
    }
    let mean_loss = loss_sum * inv_b;
    if !mean_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss at step {} is {mean_loss}",
            state.step
        )));
    }
    let mut grads = results[0].grads.clone();
    for r in &results[1..] {
        for (dst, src) in grads.iter_mut().zip(r.grads.iter()) {
            for (x, y) in dst.iter_mut().zip(src.iter()) {
                *x += y;
            }
        }
    }

    // fold the batch mean and the global-norm clip into one scale
    let mut grad_scale = inv_b;
    if optim.grad_clip > 0.0 {
        let norm_sq: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum();
        let norm = norm_sq.sqrt() * inv_b;
        if norm > optim.grad_clip {
            grad_scale *= optim.grad_clip / norm;
        }
    }

    let t = state.step + 1;
    let lr_t = optim.lr_at(state.step);
    let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    adam_step(state, &grad_refs, grad_scale, lr_t, optim, t)?;
    ema_update(&mut state.teacher, &state.student, optim.tau)?;
    state.step = t;
    Ok(mean_loss)
}

/// Run (or resume) training until `optim.total_steps`, emitting the loss
/// curve at the log interval and checkpoints at the checkpoint interval
/// plus one at the end.
pub fn train_loop(
    mut state: TrainState,
    pairs: &[WordPair],
    store: &FeatureStore,
    optim: &OptimConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(TrainState, LossCurve)> {
    optim.validate()?;
    state.model_config.validate()?;
    if optim.total_steps > 0 && pairs.is_empty() {
        return Err(Error::Config("training requires a non-empty pair list".into()));
    }
    let mut curve = LossCurve::new();
    if state.step as usize >= optim.total_steps {
        return Ok((state, curve));
    }
    let plan = BatchPlan::new(
        pairs.len(),
        optim.batch_size,
        derive_seed(state.seed, SHUFFLE_SALT),
    )?;
    let token_fill = state.model_config.token_mode.fill();

    while (state.step as usize) < optim.total_steps {
        let indices = plan.batch_indices(state.step as usize);
        let batch = assemble_batch(pairs, &indices, store, token_fill)?;
        let loss = train_step(&mut state, &batch, optim)?;
        let step = state.step;
        let log_due = optim.log_interval > 0 && step % optim.log_interval as u64 == 0;
        if log_due || step as usize == optim.total_steps {
            curve.push((step, loss));
        }
        if let Some(dir) = checkpoint_dir {
            let ckpt_due = optim.checkpoint_interval > 0
                && step % optim.checkpoint_interval as u64 == 0;
            if ckpt_due && (step as usize) < optim.total_steps {
                state.save(&dir.join(format!("step{step:08}.ctec")))?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        state.save(&dir.join(format!("step{:08}.ctec", state.step)))?;
    }
    Ok((state, curve))
}

/// Fine-tune from a checkpoint on a new pair list: same step semantics,
/// initial parameters from the checkpoint, fresh optimizer state and
/// schedule. The default budget is 5000 steps.
pub const DEFAULT_FINETUNE_STEPS: usize = 5000;

pub fn finetune(
    checkpoint: Checkpoint,
    pairs: &[WordPair],
    store: &FeatureStore,
    optim: &OptimConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(TrainState, LossCurve)> {
    if pairs.is_empty() && optim.total_steps > 0 {
        return Err(Error::Config("fine-tuning requires a non-empty pair list".into()));
    }
    let mut state = TrainState::new(checkpoint.config.clone(), optim.seed)?;
    state.student = checkpoint.student;
    state.teacher = checkpoint.teacher;
    state.seed = optim.seed;
    state.step = 0;
    train_loop(state, pairs, store, optim, checkpoint_dir)
}

/// Write a loss curve as CSV `step,loss`.
pub fn write_loss_curve(path: &Path, curve: &LossCurve) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step,loss")?;
    for (step, loss) in curve {
        writeln!(f, "{step},{loss}")?;
    }
    Ok(())
}
