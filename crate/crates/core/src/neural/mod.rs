//! LSTM encoder-decoder scheduler with count-based masking.
//!
//! The model reads a task-type token sequence, then emits one task type per
//! step. A running per-type counter masks exhausted types with a large
//! negative logit offset, so any decode is a permutation of the input
//! multiset by construction, for any parameter values and any sequence
//! length. Everything is trained from scratch in this crate: manual
//! reverse-mode gradients (see [`batch`]) and an Adam optimizer (see
//! [`params`]); no tensor framework involved.
//!
//! Single-sequence operations here favor clarity; training and bulk
//! inference use the batched path in [`batch`], which is cross-checked
//! against this one in tests.

mod batch;
mod checkpoint;
mod params;
mod train;

pub use batch::{batch_loss, predict_batch};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use params::{AdamConfig, AdamState, LstmCellParams, ModelGrads, ModelParams};
pub use train::{split_indices, train, TrainConfig, TrainReport};

use ndarray::{Array1, ArrayView1};

use crate::error::{Result, SchedError};
use crate::metrics::argmax_class;
use crate::task::{ProblemInstance, Schedule, NUM_TASK_TYPES};

/// Padding token, shared with the on-disk convention of value 0.
pub const PAD_TOKEN: usize = 0;
/// First decoder input of every sequence.
pub const START_TOKEN: usize = 10;
/// Pad + 9 task tokens + start.
pub const VOCAB_SIZE: usize = 11;
/// The projection layer emits one logit per task type.
pub const OUTPUT_CLASSES: usize = NUM_TASK_TYPES;
/// Additive logit offset for exhausted task types.
pub const MASK_VALUE: f64 = -1.0e9;

/// Task tokens are type ids shifted by one, past the pad token.
pub fn token_of_type(type_id: usize) -> Result<usize> {
    if type_id >= NUM_TASK_TYPES {
        return Err(SchedError::InvalidTypeId(type_id));
    }
    Ok(type_id + 1)
}

/// Inverse of [`token_of_type`]; rejects pad and start tokens.
pub fn type_of_token(token: usize) -> Result<usize> {
    if (1..=NUM_TASK_TYPES).contains(&token) {
        Ok(token - 1)
    } else {
        Err(SchedError::InvalidToken(token))
    }
}

/// Map a type-id sequence to task tokens.
pub fn tokens_of_type_ids(type_ids: &[usize]) -> Result<Vec<usize>> {
    type_ids.iter().map(|&t| token_of_type(t)).collect()
}

/// Per-type counts of a task-token sequence.
pub fn counts_of_tokens(tokens: &[usize]) -> Result<[usize; NUM_TASK_TYPES]> {
    let mut counts = [0usize; NUM_TASK_TYPES];
    for &tok in tokens {
        counts[type_of_token(tok)?] += 1;
    }
    Ok(counts)
}

/// Hidden and cell state of one recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// z += xᵀ·w, streaming the contiguous rows of `w`. For one sequence this
/// beats a general matrix product by a wide margin: nothing gets repacked,
/// and the weights stay cache-resident across decode steps.
fn add_vec_mat(z: &mut [f64], x: ArrayView1<f64>, w: &ndarray::Array2<f64>) {
    let cols = z.len();
    let w = w.as_slice().expect("row-major weights");
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        for (zj, &wij) in z.iter_mut().zip(row) {
            *zj += xi * wij;
        }
    }
}

/// One LSTM step for a single sequence.
fn cell_step(cell: &LstmCellParams, x: ArrayView1<f64>, state: &LstmState) -> LstmState {
    let mut z = cell.b.to_vec();
    add_vec_mat(&mut z, x, &cell.w_x);
    cell_step_from(cell, &z, state)
}

/// One LSTM step starting from a precomputed input pre-activation
/// (b + x·W_x). Bitwise the same as [`cell_step`]: the accumulation order
/// b, then x·W_x, then h·W_h is preserved.
fn cell_step_from(cell: &LstmCellParams, pre: &[f64], state: &LstmState) -> LstmState {
    let hidden = state.h.len();
    let mut z = pre.to_vec();
    add_vec_mat(&mut z, state.h.view(), &cell.w_h);
    let mut h = Array1::zeros(hidden);
    let mut c = Array1::zeros(hidden);
    for k in 0..hidden {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hidden + k]);
        let g = z[2 * hidden + k].tanh();
        let o = sigmoid(z[3 * hidden + k]);
        let ck = f * state.c[k] + i * g;
        c[k] = ck;
        h[k] = o * ck.tanh();
    }
    LstmState { h, c }
}

/// b + x·W_x for every vocabulary token. Sequential decoding touches only
/// these eleven inputs, so hoisting them leaves one gemv per step.
fn token_preacts(cell: &LstmCellParams, embedding: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    (0..VOCAB_SIZE)
        .map(|tok| {
            let mut z = cell.b.to_vec();
            add_vec_mat(&mut z, embedding.row(tok), &cell.w_x);
            z
        })
        .collect()
}

/// Run the encoder over the first `actual_length` tokens (pads beyond that
/// never enter the recurrence) and return its final state.
pub fn encode(params: &ModelParams, tokens: &[usize], actual_length: usize) -> Result<LstmState> {
    if actual_length == 0 {
        return Err(SchedError::EmptyInstance);
    }
    if tokens.len() < actual_length {
        return Err(SchedError::SizeMismatch {
            instance: actual_length,
            schedule: tokens.len(),
        });
    }
    for &tok in &tokens[..actual_length] {
        if tok >= VOCAB_SIZE {
            return Err(SchedError::InvalidToken(tok));
        }
    }
    let pre = token_preacts(&params.encoder, &params.embedding);
    let mut state = LstmState::zeros(params.hidden_dim);
    for &tok in &tokens[..actual_length] {
        state = cell_step_from(&params.encoder, &pre[tok], &state);
    }
    Ok(state)
}

/// Additive mask: 0 for still-available types, [`MASK_VALUE`] for
/// exhausted ones. Errors when nothing is left to decode.
pub fn build_mask(remaining_counts: &[usize; NUM_TASK_TYPES]) -> Result<[f64; NUM_TASK_TYPES]> {
    if remaining_counts.iter().all(|&c| c == 0) {
        return Err(SchedError::NothingToDecode);
    }
    let mut mask = [0.0; NUM_TASK_TYPES];
    for (m, &c) in mask.iter_mut().zip(remaining_counts) {
        if c == 0 {
            *m = MASK_VALUE;
        }
    }
    Ok(mask)
}

fn masked_softmax(
    logits: &[f64; NUM_TASK_TYPES],
    mask: &[f64; NUM_TASK_TYPES],
) -> [f64; NUM_TASK_TYPES] {
    let mut shifted = [0.0; NUM_TASK_TYPES];
    for c in 0..NUM_TASK_TYPES {
        shifted[c] = logits[c] + mask[c];
    }
    let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in shifted.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in shifted.iter_mut() {
        *v /= sum;
    }
    shifted
}

/// One decoder step: embed the previous token, advance the cell, project
/// to 9 logits, add the count mask, softmax. Returns the raw (pre-mask)
/// logits, the masked probabilities, and the new state.
#[allow(clippy::type_complexity)]
pub fn decode_step(
    params: &ModelParams,
    prev_token: usize,
    state: &LstmState,
    remaining_counts: &[usize; NUM_TASK_TYPES],
) -> Result<([f64; NUM_TASK_TYPES], [f64; NUM_TASK_TYPES], LstmState)> {
    if prev_token != START_TOKEN && type_of_token(prev_token).is_err() {
        return Err(SchedError::InvalidToken(prev_token));
    }
    let mask = build_mask(remaining_counts)?;
    let next = cell_step(&params.decoder, params.embedding.row(prev_token), state);
    let mut logits = [0.0; NUM_TASK_TYPES];
    logits.copy_from_slice(params.proj_b.as_slice().expect("contiguous"));
    add_vec_mat(&mut logits, next.h.view(), &params.proj_w);
    let probs = masked_softmax(&logits, &mask);
    Ok((logits, probs, next))
}

/// Sequential decoding: each step's argmax token (ties to the lowest
/// class) is fed back as the next input and its type count decremented.
/// Returns the predicted task tokens; works for any length, including the
/// 40-50 task benchmark sizes.
pub fn greedy_decode(
    params: &ModelParams,
    tokens: &[usize],
    actual_length: usize,
) -> Result<Vec<usize>> {
    let mut counts = counts_of_tokens(&tokens[..actual_length.min(tokens.len())])?;
    let mut state = encode(params, tokens, actual_length)?;
    let pre = token_preacts(&params.decoder, &params.embedding);
    let proj_b = params.proj_b.as_slice().expect("contiguous");
    let mut prev = START_TOKEN;
    let mut out = Vec::with_capacity(actual_length);
    for _ in 0..actual_length {
        // Same arithmetic as decode_step, with the input gemv hoisted.
        let mask = build_mask(&counts)?;
        let next = cell_step_from(&params.decoder, &pre[prev], &state);
        let mut logits = [0.0; NUM_TASK_TYPES];
        logits.copy_from_slice(proj_b);
        add_vec_mat(&mut logits, next.h.view(), &params.proj_w);
        let probs = masked_softmax(&logits, &mask);
        let class = argmax_class(&probs);
        counts[class] -= 1;
        let tok = token_of_type(class)?;
        out.push(tok);
        prev = tok;
        state = next;
    }
    Ok(out)
}

/// Greedy-decode an instance and express the result as a schedule over
/// task indices (equal-type tasks consumed lowest index first).
pub fn schedule_instance(params: &ModelParams, instance: &ProblemInstance) -> Result<Schedule> {
    let tokens = tokens_of_type_ids(&instance.type_ids())?;
    let predicted = greedy_decode(params, &tokens, tokens.len())?;
    let type_order: Vec<usize> = predicted
        .into_iter()
        .map(type_of_token)
        .collect::<Result<_>>()?;
    Schedule::from_type_order(instance, &type_order)
}

/// Teacher-forced pass over one sample: the decoder input at step `t + 1`
/// is the ground-truth target token of step `t`, and the count mask is
/// updated with ground-truth consumption. Returns one probability row per
/// non-pad step.
pub fn teacher_forced_forward(
    params: &ModelParams,
    sample: &crate::dataset::DatasetSample,
) -> Result<Vec<[f64; NUM_TASK_TYPES]>> {
    sample.validate()?;
    let tokens = tokens_of_type_ids(sample.input_ids())?;
    let mut counts = counts_of_tokens(&tokens)?;
    let mut state = encode(params, &tokens, tokens.len())?;
    let mut prev = START_TOKEN;
    let mut rows = Vec::with_capacity(sample.actual_length);
    for &target in sample.target_ids() {
        let (_, probs, next) = decode_step(params, prev, &state, &counts)?;
        rows.push(probs);
        counts[target] -= 1;
        prev = token_of_type(target)?;
        state = next;
    }
    Ok(rows)
}

/// Uniform or linearly descending position weights, normalized to sum 1.
/// With `exponential`, weight halves at each position instead.
pub fn position_weights(len: usize, descending: bool, exponential: bool) -> Vec<f64> {
    if !descending {
        return vec![1.0 / len as f64; len];
    }
    let raw: Vec<f64> = if exponential {
        (0..len).map(|t| 0.5f64.powi(t as i32)).collect()
    } else {
        (0..len).map(|t| (len - t) as f64).collect()
    };
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn check_rows(rows: &[[f64; NUM_TASK_TYPES]], targets: &[usize]) -> Result<()> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(SchedError::SizeMismatch {
            instance: targets.len(),
            schedule: rows.len(),
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= NUM_TASK_TYPES) {
        return Err(SchedError::InvalidTypeId(bad));
    }
    Ok(())
}

/// `1 - mean_t P_t(target_t)`: zero iff every correct-token probability
/// is one.
pub fn soft_sequence_loss(rows: &[[f64; NUM_TASK_TYPES]], targets: &[usize]) -> Result<f64> {
    check_rows(rows, targets)?;
    let weights = position_weights(rows.len(), false, false);
    Ok(weighted_row_loss(rows, targets, &weights))
}

/// `1 - sum_t w_t P_t(target_t)` with descending normalized weights, so
/// early positions dominate.
pub fn weighted_soft_loss(
    rows: &[[f64; NUM_TASK_TYPES]],
    targets: &[usize],
    exponential: bool,
) -> Result<f64> {
    check_rows(rows, targets)?;
    let weights = position_weights(rows.len(), true, exponential);
    Ok(weighted_row_loss(rows, targets, &weights))
}

fn weighted_row_loss(
    rows: &[[f64; NUM_TASK_TYPES]],
    targets: &[usize],
    weights: &[f64],
) -> f64 {
    let hit: f64 = rows
        .iter()
        .zip(targets)
        .zip(weights)
        .map(|((row, &y), &w)| w * row[y])
        .sum();
    1.0 - hit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetSample;
    use crate::metrics::{soft_accuracy, SequencePrediction};
    use crate::task::TaskCatalog;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_params(seed: u64) -> ModelParams {
        ModelParams::init(12, 10, seed).unwrap()
    }

    #[test]
    fn greedy_fast_path_matches_decode_step_route() {
        // greedy_decode hoists the input pre-activations; the result must
        // stay bitwise equal to stepping decode_step directly.
        let params = ModelParams::init(14, 12, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..30 {
            let len = rng.gen_range(1..=30);
            let tokens: Vec<usize> =
                (0..len).map(|_| rng.gen_range(1..=NUM_TASK_TYPES)).collect();
            let fast = greedy_decode(&params, &tokens, len).unwrap();

            let mut counts = counts_of_tokens(&tokens).unwrap();
            let mut state = encode(&params, &tokens, len).unwrap();
            let mut prev = START_TOKEN;
            let mut slow = Vec::new();
            for _ in 0..len {
                let (_, probs, next) = decode_step(&params, prev, &state, &counts).unwrap();
                let class = argmax_class(&probs);
                counts[class] -= 1;
                prev = token_of_type(class).unwrap();
                slow.push(prev);
                state = next;
            }
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn vocabulary_round_trip() {
        for type_id in 0..NUM_TASK_TYPES {
            let tok = token_of_type(type_id).unwrap();
            assert!((1..=9).contains(&tok));
            assert_eq!(type_of_token(tok).unwrap(), type_id);
        }
        assert!(token_of_type(9).is_err());
        assert!(type_of_token(PAD_TOKEN).is_err());
        assert!(type_of_token(START_TOKEN).is_err());
    }

    #[test]
    fn mask_golden_example() {
        let mut counts = [0usize; NUM_TASK_TYPES];
        counts[0] = 2;
        counts[2] = 1;
        let mask = build_mask(&counts).unwrap();
        assert_eq!(mask[0], 0.0);
        assert_eq!(mask[1], MASK_VALUE);
        assert_eq!(mask[2], 0.0);
        for c in 3..NUM_TASK_TYPES {
            assert_eq!(mask[c], MASK_VALUE);
        }
        assert_eq!(build_mask(&[1; NUM_TASK_TYPES]).unwrap(), [0.0; NUM_TASK_TYPES]);
        assert!(build_mask(&[0; NUM_TASK_TYPES]).is_err());
    }

    #[test]
    fn decode_step_probabilities_are_masked_and_normalized() {
        let params = small_params(3);
        let state = LstmState::zeros(params.hidden_dim);
        let mut counts = [0usize; NUM_TASK_TYPES];
        counts[1] = 1;
        counts[4] = 2;
        let (_, probs, _) = decode_step(&params, START_TOKEN, &state, &counts).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (c, &p) in probs.iter().enumerate() {
            if counts[c] == 0 {
                assert!(p < 1e-300, "class {c} has probability {p}");
            } else {
                assert!(p > 0.0);
            }
        }
    }

    #[test]
    fn decode_step_rejects_bad_inputs() {
        let params = small_params(3);
        let state = LstmState::zeros(params.hidden_dim);
        let counts = [1usize; NUM_TASK_TYPES];
        assert!(decode_step(&params, PAD_TOKEN, &state, &counts).is_err());
        assert!(decode_step(&params, 11, &state, &counts).is_err());
        assert!(decode_step(&params, 3, &state, &[0; NUM_TASK_TYPES]).is_err());
    }

    #[test]
    fn encode_ignores_pad_tail() {
        let params = small_params(7);
        let a = encode(&params, &[3, 1, 4], 3).unwrap();
        let b = encode(&params, &[3, 1, 4, 0, 0, 0, 0], 3).unwrap();
        assert_eq!(a, b);
        let c = encode(&params, &[3, 1, 4, 2, 0, 0, 0], 4).unwrap();
        assert_ne!(a, c);
        assert!(a.h.iter().all(|v| v.is_finite()));
        assert!(encode(&params, &[3, 1], 0).is_err());
        assert!(encode(&params, &[3], 2).is_err());
        assert!(encode(&params, &[11], 1).is_err());
    }

    #[test]
    fn greedy_decode_is_multiset_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..50 {
            let params = small_params(trial);
            let n = rng.gen_range(1..=12);
            let types: Vec<usize> = (0..n).map(|_| rng.gen_range(0..NUM_TASK_TYPES)).collect();
            let tokens = tokens_of_type_ids(&types).unwrap();
            let out = greedy_decode(&params, &tokens, n).unwrap();
            assert_eq!(
                counts_of_tokens(&out).unwrap(),
                counts_of_tokens(&tokens).unwrap()
            );
        }
    }

    #[test]
    fn greedy_decode_single_task_and_n50() {
        let params = small_params(2);
        let out = greedy_decode(&params, &[5], 1).unwrap();
        assert_eq!(out, vec![5]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let types: Vec<usize> = (0..50).map(|_| rng.gen_range(0..NUM_TASK_TYPES)).collect();
        let tokens = tokens_of_type_ids(&types).unwrap();
        let out = greedy_decode(&params, &tokens, 50).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(
            counts_of_tokens(&out).unwrap(),
            counts_of_tokens(&tokens).unwrap()
        );
    }

    #[test]
    fn schedule_instance_yields_valid_permutation() {
        let params = small_params(6);
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[4, 4, 0, 8, 1, 4]).unwrap();
        let sched = schedule_instance(&params, &inst).unwrap();
        assert!(Schedule::new(sched.order().to_vec()).is_ok());
    }

    #[test]
    fn teacher_forced_rows_align_with_targets() {
        let params = small_params(8);
        let sample = DatasetSample::new(&[2, 2, 5, 0], &[0, 2, 5, 2]).unwrap();
        let rows = teacher_forced_forward(&params, &sample).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        // Padding further changes nothing: rows already exclude pads.
        let long = sample.clone();
        assert_eq!(long.input_seq.len(), 10);
        long.validate().unwrap();
        assert_eq!(teacher_forced_forward(&params, &long).unwrap(), rows);
    }

    #[test]
    fn loss_goldens() {
        let one_hot = |c: usize| {
            let mut row = [0.0; NUM_TASK_TYPES];
            row[c] = 1.0;
            row
        };
        // Perfect prediction.
        let rows = vec![one_hot(1), one_hot(2)];
        assert_eq!(soft_sequence_loss(&rows, &[1, 2]).unwrap(), 0.0);
        // Uniform rows.
        let uniform = [[1.0 / 9.0; NUM_TASK_TYPES]; 3];
        let loss = soft_sequence_loss(&uniform, &[0, 4, 8]).unwrap();
        assert!((loss - (1.0 - 1.0 / 9.0)).abs() < 1e-12);
        // Correct-token probabilities [1.0, 0.5, 0.0] -> loss 0.5.
        let mut half = one_hot(1);
        half[1] = 0.5;
        half[0] = 0.5;
        let rows = vec![one_hot(0), half, one_hot(3)];
        let loss = soft_sequence_loss(&rows, &[0, 1, 2]).unwrap();
        assert!((loss - 0.5).abs() < 1e-12);
        // Weighted: L = 3 weights are [3/6, 2/6, 1/6]; P = [1, 0, 0] on
        // the correct class gives 1 - 3/6 = 0.5 vs unweighted 2/3.
        let rows = vec![one_hot(5), one_hot(0), one_hot(0)];
        let w = weighted_soft_loss(&rows, &[5, 1, 2], false).unwrap();
        assert!((w - 0.5).abs() < 1e-12);
        let plain = soft_sequence_loss(&rows, &[5, 1, 2]).unwrap();
        assert!((plain - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn position_weight_shapes() {
        let w = position_weights(3, true, false);
        assert_eq!(w, vec![3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
        let u = position_weights(4, false, false);
        assert_eq!(u, vec![0.25; 4]);
        let e = position_weights(3, true, true);
        let sum: f64 = e.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(e[0] > e[1] && e[1] > e[2]);
        assert!((e[0] / e[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_complements_soft_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let batch: Vec<SequencePrediction> = (0..8)
                .map(|_| {
                    let len = rng.gen_range(1..=10);
                    let rows: Vec<[f64; NUM_TASK_TYPES]> = (0..len)
                        .map(|_| {
                            let mut row = [0.0; NUM_TASK_TYPES];
                            for v in row.iter_mut() {
                                *v = rng.gen::<f64>() + 1e-6;
                            }
                            let s: f64 = row.iter().sum();
                            row.map(|v| v / s)
                        })
                        .collect();
                    let targets =
                        (0..len).map(|_| rng.gen_range(0..NUM_TASK_TYPES)).collect();
                    SequencePrediction::new(rows, targets).unwrap()
                })
                .collect();
            let acc = soft_accuracy(&batch).unwrap();
            let mean_loss: f64 = batch
                .iter()
                .map(|s| soft_sequence_loss(s.rows(), s.targets()).unwrap())
                .sum::<f64>()
                / batch.len() as f64;
            assert!((acc - (1.0 - mean_loss)).abs() < 1e-12);
        }
    }
}
