//! Hybrid classifier: graph network over the flow graph, BiLSTM over the
//! opcode matrix, fused by one fully connected softmax layer. Gradients are
//! computed by hand-written reverse-mode differentiation in `f64`.

pub mod gnn;
mod io;
pub mod lstm;
pub mod tensor;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowgraph::AbstractFlowGraph;
use crate::ir::Label;
use crate::trace::SequenceMatrix;
pub use gnn::{GnnParams, GraphInput};
pub use io::{MODEL_MAGIC, MODEL_VERSION};
pub use lstm::BiLstmParams;
use tensor::{softmax, Mat};

/// Tunable hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub row_len: usize,
    pub hidden_layers: usize,
    pub lstm_units: usize,
    pub label_len: usize,
    pub gnn_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    /// Optimal values from the tuning table.
    fn default() -> Self {
        Hyperparams {
            row_len: 100,
            hidden_layers: 2,
            lstm_units: 256,
            label_len: 13,
            gnn_steps: 10,
            epochs: 25,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Architecture: the hyperparameters plus the fixed layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hyper: Hyperparams,
    pub state_dim: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub const DEFAULT_STATE_DIM: usize = 32;
    pub const DEFAULT_EMBED_DIM: usize = 128;

    pub fn new(hyper: Hyperparams, seed: u64) -> Self {
        ModelConfig {
            hyper,
            state_dim: Self::DEFAULT_STATE_DIM,
            embed_dim: Self::DEFAULT_EMBED_DIM,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub w: Mat,
    pub b: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gnn: GnnParams,
    pub lstm: BiLstmParams,
    pub fusion: FusionParams,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let h = cfg.hyper;
        let gnn = GnnParams::new(cfg.state_dim, h.label_len, &mut rng);
        let lstm = BiLstmParams::new(cfg.embed_dim, h.lstm_units, h.hidden_layers, &mut rng);
        let fan_in = cfg.state_dim + lstm::OUT_DIM;
        let fusion = FusionParams {
            w: Mat::uniform(2, fan_in, fan_in, &mut rng),
            b: Mat::zeros(2, 1),
        };
        ModelParams { gnn, lstm, fusion }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            gnn: self.gnn.zeros_like(),
            lstm: self.lstm.zeros_like(),
            fusion: FusionParams {
                w: Mat::zeros(self.fusion.w.rows, self.fusion.w.cols),
                b: Mat::zeros(2, 1),
            },
        }
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> =
            self.gnn.tensors().into_iter().map(|(n, m)| (n.to_string(), m)).collect();
        out.extend(self.lstm.tensors());
        out.push(("fusion.w".into(), &self.fusion.w));
        out.push(("fusion.b".into(), &self.fusion.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = self.gnn.tensors_mut().into_iter().collect();
        out.extend(self.lstm.tensors_mut());
        out.push(&mut self.fusion.w);
        out.push(&mut self.fusion.b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.data.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// One app ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: GraphInput,
    pub matrix: SequenceMatrix,
    pub label: Label,
}

impl Sample {
    pub fn new(graph: &AbstractFlowGraph, matrix: SequenceMatrix, label: Label, cfg: &ModelConfig) -> Result<Self> {
        lstm::check_rows(&matrix, cfg.hyper.row_len)?;
        Ok(Sample {
            graph: GraphInput::new(graph, cfg.hyper.label_len, cfg.state_dim, cfg.seed),
            matrix,
            label,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Probability of `label`.
    pub probability: f64,
    /// Probability of the malicious class.
    pub malicious: f64,
}

pub fn classify(fusion: &FusionParams, h_g: &[f64], h_b: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = h_g.iter().chain(h_b).copied().collect();
    softmax(&fusion.w.affine(&x, &fusion.b))
}

pub fn loss(probs: &[f64], label: Label) -> f64 {
    -probs[label.index()].max(1e-12).ln()
}

/// Argmax with ties going to the lower index.
pub fn decide(probs: &[f64]) -> Prediction {
    let label = if probs[1] > probs[0] {
        Label::Malicious
    } else {
        Label::Benign
    };
    Prediction {
        label,
        probability: probs[label.index()],
        malicious: probs[1],
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Self {
        Model {
            params: ModelParams::init(&config),
            config,
        }
    }

    pub fn probabilities(&self, s: &Sample) -> Vec<f64> {
        let h_g = gnn::embed(&self.params.gnn, &s.graph, self.config.hyper.gnn_steps);
        let h_b = lstm::embed(&self.params.lstm, &s.matrix);
        classify(&self.params.fusion, &h_g, &h_b)
    }

    pub fn predict(&self, s: &Sample) -> Prediction {
        decide(&self.probabilities(s))
    }

    pub fn sample_loss(&self, s: &Sample) -> f64 {
        loss(&self.probabilities(s), s.label)
    }

    /// Loss of one sample; its gradient is added to `grads`.
    pub fn loss_and_grad(&self, s: &Sample, grads: &mut ModelParams) -> f64 {
        let p = &self.params;
        let steps = self.config.hyper.gnn_steps;
        let (h_g, g_cache) = gnn::forward(&p.gnn, &s.graph, steps);
        let n = s.matrix.rows.len();
        let mut h_b = vec![0.0; lstm::OUT_DIM];
        let mut caches = Vec::with_capacity(n);
        for row in &s.matrix.rows {
            let (v, c) = lstm::forward_row(&p.lstm, row);
            tensor::axpy(1.0 / n as f64, &v, &mut h_b);
            caches.push(c);
        }
        let x: Vec<f64> = h_g.iter().chain(&h_b).copied().collect();
        let probs = softmax(&p.fusion.w.affine(&x, &p.fusion.b));
        let l = loss(&probs, s.label);

        let mut dz = probs;
        dz[s.label.index()] -= 1.0;
        grads.fusion.w.outer_acc(&dz, &x);
        grads.fusion.b.add_assign(&dz);
        let mut dx = vec![0.0; x.len()];
        p.fusion.w.matvec_t_acc(&dz, &mut dx);
        let (d_g, d_b) = dx.split_at(h_g.len());
        gnn::backward(&p.gnn, &s.graph, &g_cache, d_g, &mut grads.gnn);
        if n > 0 {
            let d_row: Vec<f64> = d_b.iter().map(|d| d / n as f64).collect();
            for c in &caches {
                lstm::backward_row(&p.lstm, c, &d_row, &mut grads.lstm);
            }
        }
        l
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    t: i32,
}

impl Adam {
    fn new(p: &ModelParams) -> Self {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, tc: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - tc.beta1.powi(self.t);
        let c2 = 1.0 - tc.beta2.powi(self.t);
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = tc.beta1 * m.data[i] + (1.0 - tc.beta1) * gi;
                v.data[i] = tc.beta2 * v.data[i] + (1.0 - tc.beta2) * gi * gi;
                let step = tc.learning_rate * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + tc.epsilon);
                p.data[i] -= step;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch Adam over shuffled samples; deterministic for a given seed.
pub fn train(samples: &[Sample], config: ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    train_with(samples, config, tc, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with (epoch, loss).
pub fn train_with(
    samples: &[Sample],
    config: ModelConfig,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if tc.learning_rate.is_nan() || tc.learning_rate < 0.0 {
        return Err(Error::Config("learning rate must be non-negative".into()));
    }
    let mut model = Model::new(config);
    let mut adam = Adam::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5e_ed0f_7a11);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = config.hyper.batch_size.max(1);
    let mut losses = Vec::with_capacity(config.hyper.epochs);
    for epoch in 0..config.hyper.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = model.params.zeros_like();
            for &i in chunk {
                total += model.loss_and_grad(&samples[i], &mut grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            for g in grads.tensors_mut() {
                g.data.iter_mut().for_each(|x| *x *= scale);
            }
            if tc.learning_rate > 0.0 {
                adam.step(&mut model.params, &grads, tc);
            }
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() || !model.params.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        log::info!("epoch {} loss {:.6}", epoch + 1, mean);
        on_epoch(epoch, mean);
        losses.push(mean);
    }
    Ok(TrainOutcome { model, losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradScope {
    Gnn,
    BiLstm,
    Fusion,
    All,
}

/// Largest relative error between analytic and central-difference gradients
/// over `coords` random parameter coordinates of `scope`.
pub fn grad_check(model: &Model, sample: &Sample, scope: GradScope, epsilon: f64, coords: usize, seed: u64) -> f64 {
    let mut grads = model.params.zeros_like();
    model.loss_and_grad(sample, &mut grads);
    let analytic: Vec<Mat> = grads.tensors().into_iter().map(|(_, m)| m.clone()).collect();
    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
    let chosen: Vec<usize> = (0..names.len())
        .filter(|&i| match scope {
            GradScope::Gnn => names[i].starts_with("gnn."),
            GradScope::BiLstm => names[i].starts_with("lstm."),
            GradScope::Fusion => names[i].starts_with("fusion."),
            GradScope::All => true,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let ti = chosen[rng.gen_range(0..chosen.len())];
        let ci = rng.gen_range(0..analytic[ti].len());
        let orig = probe.params.tensors_mut()[ti].data[ci];
        probe.params.tensors_mut()[ti].data[ci] = orig + epsilon;
        let up = probe.sample_loss(sample);
        probe.params.tensors_mut()[ti].data[ci] = orig - epsilon;
        let down = probe.sample_loss(sample);
        probe.params.tensors_mut()[ti].data[ci] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[ti].data[ci];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
