//! Model tensors, seeded initialization, gradients and the Adam update.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SchedError};
use crate::task::NUM_TASK_TYPES;

use super::VOCAB_SIZE;

/// Weights of one LSTM cell. Gate order along the `4 * hidden` axis is
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// `input_dim x 4 * hidden`.
    pub w_x: Array2<f64>,
    /// `hidden x 4 * hidden`.
    pub w_h: Array2<f64>,
    /// `4 * hidden`.
    pub b: Array1<f64>,
}

impl LstmCellParams {
    fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmCellParams {
            w_x: init_matrix(input_dim, 4 * hidden, input_dim, rng),
            w_h: init_matrix(hidden, 4 * hidden, hidden, rng),
            b: init_vector(4 * hidden, hidden, rng),
        }
    }

    fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCellParams {
            w_x: Array2::zeros((input_dim, 4 * hidden)),
            w_h: Array2::zeros((hidden, 4 * hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }
}

/// All trainable tensors of the encoder-decoder model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// `VOCAB_SIZE x embed_dim`, shared by encoder and decoder inputs.
    pub embedding: Array2<f64>,
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    /// `hidden x 9`.
    pub proj_w: Array2<f64>,
    /// `9`.
    pub proj_b: Array1<f64>,
}

fn init_matrix(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

fn init_vector(len: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array1::from_shape_fn(len, |_| rng.gen_range(-bound..bound))
}

impl ModelParams {
    /// Seeded uniform init, each tensor in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
    /// (the embedding's fan-in is its row length).
    pub fn init(embed_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        if embed_dim == 0 || hidden_dim == 0 {
            return Err(SchedError::InvalidConfig(
                "model dimensions must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ModelParams {
            embed_dim,
            hidden_dim,
            embedding: init_matrix(VOCAB_SIZE, embed_dim, embed_dim, &mut rng),
            encoder: LstmCellParams::init(embed_dim, hidden_dim, &mut rng),
            decoder: LstmCellParams::init(embed_dim, hidden_dim, &mut rng),
            proj_w: init_matrix(hidden_dim, NUM_TASK_TYPES, hidden_dim, &mut rng),
            proj_b: init_vector(NUM_TASK_TYPES, hidden_dim, &mut rng),
        })
    }

    /// Tensor names and shapes, in checkpoint order.
    pub fn named_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("embedding", vec![VOCAB_SIZE, self.embed_dim]),
            ("encoder.w_x", vec![self.embed_dim, 4 * self.hidden_dim]),
            ("encoder.w_h", vec![self.hidden_dim, 4 * self.hidden_dim]),
            ("encoder.b", vec![4 * self.hidden_dim]),
            ("decoder.w_x", vec![self.embed_dim, 4 * self.hidden_dim]),
            ("decoder.w_h", vec![self.hidden_dim, 4 * self.hidden_dim]),
            ("decoder.b", vec![4 * self.hidden_dim]),
            ("proj.w", vec![self.hidden_dim, NUM_TASK_TYPES]),
            ("proj.b", vec![NUM_TASK_TYPES]),
        ]
    }

    pub fn all_finite(&self) -> bool {
        let finite2 = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        let finite1 = |a: &Array1<f64>| a.iter().all(|v| v.is_finite());
        finite2(&self.embedding)
            && finite2(&self.encoder.w_x)
            && finite2(&self.encoder.w_h)
            && finite1(&self.encoder.b)
            && finite2(&self.decoder.w_x)
            && finite2(&self.decoder.w_h)
            && finite1(&self.decoder.b)
            && finite2(&self.proj_w)
            && finite1(&self.proj_b)
    }

    /// All tensors concatenated in checkpoint order (row-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in [
            &self.embedding,
            &self.encoder.w_x,
            &self.encoder.w_h,
        ] {
            out.extend(t.iter());
        }
        out.extend(self.encoder.b.iter());
        for t in [&self.decoder.w_x, &self.decoder.w_h] {
            out.extend(t.iter());
        }
        out.extend(self.decoder.b.iter());
        out.extend(self.proj_w.iter());
        out.extend(self.proj_b.iter());
        out
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn from_flat(embed_dim: usize, hidden_dim: usize, data: &[f64]) -> Result<Self> {
        let mut params = ModelParams::init(embed_dim, hidden_dim, 0)?;
        let expected: usize = params
            .named_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if data.len() != expected {
            return Err(SchedError::InvalidConfig(format!(
                "expected {expected} parameters, got {}",
                data.len()
            )));
        }
        let mut it = data.iter().copied();
        let fill2 = |a: &mut Array2<f64>, it: &mut dyn Iterator<Item = f64>| {
            for v in a.iter_mut() {
                *v = it.next().unwrap();
            }
        };
        let fill1 = |a: &mut Array1<f64>, it: &mut dyn Iterator<Item = f64>| {
            for v in a.iter_mut() {
                *v = it.next().unwrap();
            }
        };
        fill2(&mut params.embedding, &mut it);
        fill2(&mut params.encoder.w_x, &mut it);
        fill2(&mut params.encoder.w_h, &mut it);
        fill1(&mut params.encoder.b, &mut it);
        fill2(&mut params.decoder.w_x, &mut it);
        fill2(&mut params.decoder.w_h, &mut it);
        fill1(&mut params.decoder.b, &mut it);
        fill2(&mut params.proj_w, &mut it);
        fill1(&mut params.proj_b, &mut it);
        Ok(params)
    }
}

/// Gradient accumulator with the same shapes as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub embedding: Array2<f64>,
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl ModelGrads {
    pub fn zeros(params: &ModelParams) -> Self {
        ModelGrads {
            embedding: Array2::zeros((VOCAB_SIZE, params.embed_dim)),
            encoder: LstmCellParams::zeros(params.embed_dim, params.hidden_dim),
            decoder: LstmCellParams::zeros(params.embed_dim, params.hidden_dim),
            proj_w: Array2::zeros((params.hidden_dim, NUM_TASK_TYPES)),
            proj_b: Array1::zeros(NUM_TASK_TYPES),
        }
    }

    pub fn all_finite(&self) -> bool {
        let finite2 = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        let finite1 = |a: &Array1<f64>| a.iter().all(|v| v.is_finite());
        finite2(&self.embedding)
            && finite2(&self.encoder.w_x)
            && finite2(&self.encoder.w_h)
            && finite1(&self.encoder.b)
            && finite2(&self.decoder.w_x)
            && finite2(&self.decoder.w_h)
            && finite1(&self.decoder.b)
            && finite2(&self.proj_w)
            && finite1(&self.proj_b)
    }

    /// Same layout as [`ModelParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.embedding.iter());
        out.extend(self.encoder.w_x.iter());
        out.extend(self.encoder.w_h.iter());
        out.extend(self.encoder.b.iter());
        out.extend(self.decoder.w_x.iter());
        out.extend(self.decoder.w_h.iter());
        out.extend(self.decoder.b.iter());
        out.extend(self.proj_w.iter());
        out.extend(self.proj_b.iter());
        out
    }

    /// Zero every entry in place, keeping the allocations.
    pub fn reset(&mut self) {
        self.embedding.fill(0.0);
        self.encoder.w_x.fill(0.0);
        self.encoder.w_h.fill(0.0);
        self.encoder.b.fill(0.0);
        self.decoder.w_x.fill(0.0);
        self.decoder.w_h.fill(0.0);
        self.decoder.b.fill(0.0);
        self.proj_w.fill(0.0);
        self.proj_b.fill(0.0);
    }
}

/// Adam first/second moment estimates for every tensor, plus the step
/// counter shared by all of them.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ModelGrads,
    v: ModelGrads,
    step: u64,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: ModelGrads::zeros(params),
            v: ModelGrads::zeros(params),
            step: 0,
        }
    }

    /// One Adam update with bias correction.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &ModelGrads, cfg: &AdamConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);

        let upd1 = |p: &mut Array1<f64>, g: &Array1<f64>, m: &mut Array1<f64>, v: &mut Array1<f64>| {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        };
        let upd2 = |p: &mut Array2<f64>, g: &Array2<f64>, m: &mut Array2<f64>, v: &mut Array2<f64>| {
            let (pp, gg) = (
                p.as_slice_mut().expect("contiguous"),
                g.as_slice().expect("contiguous"),
            );
            let (mm, vv) = (
                m.as_slice_mut().expect("contiguous"),
                v.as_slice_mut().expect("contiguous"),
            );
            for i in 0..pp.len() {
                let gi = gg[i];
                mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * gi;
                vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gi * gi;
                let mhat = mm[i] / bc1;
                let vhat = vv[i] / bc2;
                pp[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        };

        upd2(&mut params.embedding, &grads.embedding, &mut self.m.embedding, &mut self.v.embedding);
        upd2(&mut params.encoder.w_x, &grads.encoder.w_x, &mut self.m.encoder.w_x, &mut self.v.encoder.w_x);
        upd2(&mut params.encoder.w_h, &grads.encoder.w_h, &mut self.m.encoder.w_h, &mut self.v.encoder.w_h);
        upd1(&mut params.encoder.b, &grads.encoder.b, &mut self.m.encoder.b, &mut self.v.encoder.b);
        upd2(&mut params.decoder.w_x, &grads.decoder.w_x, &mut self.m.decoder.w_x, &mut self.v.decoder.w_x);
        upd2(&mut params.decoder.w_h, &grads.decoder.w_h, &mut self.m.decoder.w_h, &mut self.v.decoder.w_h);
        upd1(&mut params.decoder.b, &grads.decoder.b, &mut self.m.decoder.b, &mut self.v.decoder.b);
        upd2(&mut params.proj_w, &grads.proj_w, &mut self.m.proj_w, &mut self.v.proj_w);
        upd1(&mut params.proj_b, &grads.proj_b, &mut self.m.proj_b, &mut self.v.proj_b);
    }
}
