//! Batched forward and reverse-mode backward passes.
//!
//! Batches group sequences of identical length, so no step ever mixes pad
//! and real tokens and the recurrence needs no masking of its own. The
//! count mask enters as a constant additive term on the logits, so its
//! only effect on the backward pass is through the probabilities
//! themselves. When training without teacher forcing the decoder feeds its
//! own argmax back in; that discrete choice is treated as a constant by
//! the backward pass (the loss gradient flows through the probability
//! rows, not through the token selection).

use ndarray::{s, Array2, Axis};

use crate::dataset::DatasetSample;
use crate::error::{Result, SchedError};
use crate::metrics::{argmax_class, SequencePrediction};
use crate::task::NUM_TASK_TYPES;

use super::params::{LstmCellParams, ModelGrads, ModelParams};
use super::{position_weights, sigmoid, MASK_VALUE, START_TOKEN};

/// One sequence of a batch: type-id views into a sample.
#[derive(Clone, Copy)]
pub(crate) struct BatchSpec<'a> {
    pub input: &'a [usize],
    pub target: &'a [usize],
}

impl<'a> BatchSpec<'a> {
    pub fn of(sample: &'a DatasetSample) -> Self {
        BatchSpec {
            input: sample.input_ids(),
            target: sample.target_ids(),
        }
    }
}

/// Everything the backward pass needs about one forward LSTM step.
struct StepCache {
    tokens: Vec<usize>,
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gi: Array2<f64>,
    gf: Array2<f64>,
    gg: Array2<f64>,
    go: Array2<f64>,
    tanh_c: Array2<f64>,
    c: Array2<f64>,
    h: Array2<f64>,
}

fn gather_rows(embedding: &Array2<f64>, tokens: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((tokens.len(), embedding.ncols()));
    for (b, &tok) in tokens.iter().enumerate() {
        x.row_mut(b).assign(&embedding.row(tok));
    }
    x
}

fn forward_step(
    cell: &LstmCellParams,
    embedding: &Array2<f64>,
    tokens: Vec<usize>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
) -> StepCache {
    let hidden = h_prev.ncols();
    let x = gather_rows(embedding, &tokens);
    let mut z = x.dot(&cell.w_x) + h_prev.dot(&cell.w_h);
    z += &cell.b;
    let gi = z.slice(s![.., 0..hidden]).mapv(sigmoid);
    let gf = z.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
    let gg = z.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
    let go = z.slice(s![.., 3 * hidden..4 * hidden]).mapv(sigmoid);
    let c = &gf * &c_prev + &gi * &gg;
    let tanh_c = c.mapv(f64::tanh);
    let h = &go * &tanh_c;
    StepCache {
        tokens,
        x,
        h_prev,
        c_prev,
        gi,
        gf,
        gg,
        go,
        tanh_c,
        c,
        h,
    }
}

/// Standard LSTM step backward. Accumulates weight and embedding
/// gradients, returns the gradients flowing into the previous step.
fn backward_step(
    cell: &LstmCellParams,
    cache: &StepCache,
    dh: &Array2<f64>,
    dc: &Array2<f64>,
    gw: &mut LstmCellParams,
    gembed: &mut Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let hidden = cache.gi.ncols();
    let d_o = dh * &cache.tanh_c;
    let one_minus_tc2 = cache.tanh_c.mapv(|v| 1.0 - v * v);
    let dc_total = dc + &(dh * &cache.go * &one_minus_tc2);

    let di = &dc_total * &cache.gg;
    let dg = &dc_total * &cache.gi;
    let df = &dc_total * &cache.c_prev;
    let dc_prev = &dc_total * &cache.gf;

    let sig_i = cache.gi.mapv(|v| v * (1.0 - v));
    let sig_f = cache.gf.mapv(|v| v * (1.0 - v));
    let sig_o = cache.go.mapv(|v| v * (1.0 - v));
    let one_minus_g2 = cache.gg.mapv(|v| 1.0 - v * v);
    let dzi = &di * &sig_i;
    let dzf = &df * &sig_f;
    let dzg = &dg * &one_minus_g2;
    let dzo = &d_o * &sig_o;

    let bsz = cache.gi.nrows();
    let mut dz = Array2::zeros((bsz, 4 * hidden));
    dz.slice_mut(s![.., 0..hidden]).assign(&dzi);
    dz.slice_mut(s![.., hidden..2 * hidden]).assign(&dzf);
    dz.slice_mut(s![.., 2 * hidden..3 * hidden]).assign(&dzg);
    dz.slice_mut(s![.., 3 * hidden..4 * hidden]).assign(&dzo);

    gw.w_x += &cache.x.t().dot(&dz);
    gw.w_h += &cache.h_prev.t().dot(&dz);
    gw.b += &dz.sum_axis(Axis(0));

    let dx = dz.dot(&cell.w_x.t());
    let dh_prev = dz.dot(&cell.w_h.t());
    for (b, &tok) in cache.tokens.iter().enumerate() {
        let mut row = gembed.row_mut(tok);
        row += &dx.row(b);
    }
    (dh_prev, dc_prev)
}

/// Forward (and optionally backward) over one equal-length batch.
///
/// Returns the *sum* of per-sequence losses (`1 - sum_t w_t P_t(y_t)`
/// each) plus, when `collect_rows`, one [`SequencePrediction`] per
/// sequence in batch order. When `grads` is given the accumulated
/// gradients are those of the batch *mean* loss.
pub(crate) fn run_batch(
    params: &ModelParams,
    batch: &[BatchSpec<'_>],
    teacher_forcing: bool,
    weights: &[f64],
    collect_rows: bool,
    grads: Option<&mut ModelGrads>,
) -> Result<(f64, Vec<SequencePrediction>)> {
    let bsz = batch.len();
    if bsz == 0 {
        return Err(SchedError::EmptyDataset);
    }
    let len = batch[0].input.len();
    if len == 0 || len != weights.len() {
        return Err(SchedError::InvalidConfig(
            "batch sequences and weights must share a positive length".into(),
        ));
    }
    for spec in batch {
        if spec.input.len() != len || spec.target.len() != len {
            return Err(SchedError::InvalidConfig(
                "all sequences in a batch must have equal length".into(),
            ));
        }
    }
    let hidden = params.hidden_dim;

    let mut h = Array2::zeros((bsz, hidden));
    let mut c = Array2::zeros((bsz, hidden));
    let mut enc_caches = Vec::with_capacity(len);
    for t in 0..len {
        let tokens: Vec<usize> = batch.iter().map(|s| s.input[t] + 1).collect();
        let cache = forward_step(&params.encoder, &params.embedding, tokens, h, c);
        h = cache.h.clone();
        c = cache.c.clone();
        enc_caches.push(cache);
    }

    let mut counts: Vec<[usize; NUM_TASK_TYPES]> = batch
        .iter()
        .map(|s| {
            let mut counts = [0usize; NUM_TASK_TYPES];
            for &id in s.input {
                counts[id] += 1;
            }
            counts
        })
        .collect();
    let mut prev = vec![START_TOKEN; bsz];
    let mut dec_caches = Vec::with_capacity(len);
    let mut probs_steps: Vec<Array2<f64>> = Vec::with_capacity(len);
    for t in 0..len {
        let cache = forward_step(&params.decoder, &params.embedding, prev.clone(), h, c);
        h = cache.h.clone();
        c = cache.c.clone();

        let mut probs = cache.h.dot(&params.proj_w);
        probs += &params.proj_b;
        for b in 0..bsz {
            let mut row = probs.row_mut(b);
            for cl in 0..NUM_TASK_TYPES {
                if counts[b][cl] == 0 {
                    row[cl] += MASK_VALUE;
                }
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        for b in 0..bsz {
            let class = if teacher_forcing {
                batch[b].target[t]
            } else {
                argmax_class(probs.row(b).as_slice().expect("contiguous row"))
            };
            counts[b][class] -= 1;
            prev[b] = class + 1;
        }
        probs_steps.push(probs);
        dec_caches.push(cache);
    }

    let mut loss_sum = 0.0;
    for (b, spec) in batch.iter().enumerate() {
        let mut hit = 0.0;
        for t in 0..len {
            hit += weights[t] * probs_steps[t][[b, spec.target[t]]];
        }
        loss_sum += 1.0 - hit;
    }

    let rows = if collect_rows {
        batch
            .iter()
            .enumerate()
            .map(|(b, spec)| {
                let rows: Vec<[f64; NUM_TASK_TYPES]> = (0..len)
                    .map(|t| {
                        let mut row = [0.0; NUM_TASK_TYPES];
                        for cl in 0..NUM_TASK_TYPES {
                            row[cl] = probs_steps[t][[b, cl]];
                        }
                        row
                    })
                    .collect();
                SequencePrediction::new(rows, spec.target.to_vec())
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    if let Some(g) = grads {
        let mut dh = Array2::zeros((bsz, hidden));
        let mut dc = Array2::zeros((bsz, hidden));
        for t in (0..len).rev() {
            let probs = &probs_steps[t];
            // d(mean loss)/dP is nonzero only at the target entry; push it
            // through the softmax Jacobian row by row.
            let mut dlogits = Array2::zeros((bsz, NUM_TASK_TYPES));
            for (b, spec) in batch.iter().enumerate() {
                let y = spec.target[t];
                let dpy = -weights[t] / bsz as f64;
                let dot = dpy * probs[[b, y]];
                for j in 0..NUM_TASK_TYPES {
                    let dpj = if j == y { dpy } else { 0.0 };
                    dlogits[[b, j]] = probs[[b, j]] * (dpj - dot);
                }
            }
            g.proj_w += &dec_caches[t].h.t().dot(&dlogits);
            g.proj_b += &dlogits.sum_axis(Axis(0));
            let dh_total = &dh + &dlogits.dot(&params.proj_w.t());
            let (dh_prev, dc_prev) = backward_step(
                &params.decoder,
                &dec_caches[t],
                &dh_total,
                &dc,
                &mut g.decoder,
                &mut g.embedding,
            );
            dh = dh_prev;
            dc = dc_prev;
        }
        for t in (0..len).rev() {
            let (dh_prev, dc_prev) = backward_step(
                &params.encoder,
                &enc_caches[t],
                &dh,
                &dc,
                &mut g.encoder,
                &mut g.embedding,
            );
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    Ok((loss_sum, rows))
}

/// Group sample indices into equal-length batches of at most `batch_size`,
/// preserving the order of `indices` within each length group. Groups are
/// emitted in ascending length order.
pub(crate) fn batches_by_length(
    indices: &[usize],
    samples: &[DatasetSample],
    batch_size: usize,
) -> Vec<Vec<usize>> {
    let mut buckets: std::collections::BTreeMap<usize, Vec<usize>> =
        std::collections::BTreeMap::new();
    for &i in indices {
        buckets.entry(samples[i].actual_length).or_default().push(i);
    }
    let mut out = Vec::new();
    for bucket in buckets.into_values() {
        for chunk in bucket.chunks(batch_size) {
            out.push(chunk.to_vec());
        }
    }
    out
}

/// Mean per-sequence loss over a set of samples, in inference mode
/// (no gradients; rollout follows `teacher_forcing`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn mean_loss(
    params: &ModelParams,
    samples: &[DatasetSample],
    indices: &[usize],
    teacher_forcing: bool,
    weighted: bool,
    exponential: bool,
    batch_size: usize,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(SchedError::EmptyDataset);
    }
    let mut sum = 0.0;
    for batch_idx in batches_by_length(indices, samples, batch_size) {
        let spec: Vec<BatchSpec> = batch_idx.iter().map(|&i| BatchSpec::of(&samples[i])).collect();
        let weights = position_weights(spec[0].input.len(), weighted, exponential);
        let (loss_sum, _) = run_batch(params, &spec, teacher_forcing, &weights, false, None)?;
        sum += loss_sum;
    }
    Ok(sum / indices.len() as f64)
}

/// Mean loss of one equal-length batch with uniform position weights,
/// optionally accumulating the gradients of that mean into `grads`.
/// This is the training step's arithmetic exposed as a plain function,
/// mainly so gradients can be checked against finite differences.
pub fn batch_loss(
    params: &ModelParams,
    samples: &[DatasetSample],
    teacher_forcing: bool,
    grads: Option<&mut ModelGrads>,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(SchedError::EmptyDataset);
    }
    let spec: Vec<BatchSpec> = samples.iter().map(BatchSpec::of).collect();
    let weights = position_weights(spec[0].input.len(), false, false);
    let (loss_sum, _) = run_batch(params, &spec, teacher_forcing, &weights, false, grads)?;
    Ok(loss_sum / samples.len() as f64)
}

/// Greedy-rollout probability rows for every sample, in sample order.
/// This is the inference path used for metrics: the decoder feeds its own
/// argmax tokens, never the targets.
pub fn predict_batch(
    params: &ModelParams,
    samples: &[DatasetSample],
    batch_size: usize,
) -> Result<Vec<SequencePrediction>> {
    if batch_size == 0 {
        return Err(SchedError::InvalidConfig("batch_size must be positive".into()));
    }
    let indices: Vec<usize> = (0..samples.len()).collect();
    let mut out: Vec<Option<SequencePrediction>> = vec![None; samples.len()];
    for batch_idx in batches_by_length(&indices, samples, batch_size) {
        let spec: Vec<BatchSpec> = batch_idx.iter().map(|&i| BatchSpec::of(&samples[i])).collect();
        let weights = position_weights(spec[0].input.len(), false, false);
        let (_, rows) = run_batch(params, &spec, false, &weights, true, None)?;
        for (&i, pred) in batch_idx.iter().zip(rows) {
            out[i] = Some(pred);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("all samples batched")).collect())
}
