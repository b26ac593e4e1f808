//! Stacked bidirectional LSTM over opcode rows.
//!
//! Each row of ℓ opcode codes is embedded, passed through the stacked
//! layers, mean-pooled over the ℓ axis, projected by `linear_3` then
//! `linear_4`, and the per-row vectors are averaged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{sigmoid, Mat};
use crate::error::{Error, Result};
use crate::trace::SequenceMatrix;

pub const VOCAB: usize = 256;
pub const LINEAR3_OUT: usize = 64;
pub const OUT_DIM: usize = 32;

/// One direction of one layer; gate rows are ordered i, f, g, o.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub wx: Mat,
    pub wh: Mat,
    pub b: Mat,
}

impl LstmCell {
    fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Mat::zeros(4 * hidden, 1);
        b.data[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        LstmCell {
            wx: Mat::uniform(4 * hidden, input, hidden, rng),
            wh: Mat::uniform(4 * hidden, hidden, hidden, rng),
            b,
        }
    }

    fn hidden(&self) -> usize {
        self.wh.cols
    }

    fn zeros_like(&self) -> Self {
        LstmCell {
            wx: Mat::zeros(self.wx.rows, self.wx.cols),
            wh: Mat::zeros(self.wh.rows, self.wh.cols),
            b: Mat::zeros(self.b.rows, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub embedding: Mat,
    /// `[forward, backward]` per layer.
    pub layers: Vec<[LstmCell; 2]>,
    pub l3w: Mat,
    pub l3b: Mat,
    pub l4w: Mat,
    pub l4b: Mat,
}

impl BiLstmParams {
    pub fn new<R: Rng>(embed_dim: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let mut embedding = Mat::uniform(VOCAB, embed_dim, 1, rng);
        embedding.data.iter_mut().for_each(|x| *x *= 0.1);
        let layers = (0..layers.max(1))
            .map(|k| {
                let input = if k == 0 { embed_dim } else { 2 * hidden };
                [LstmCell::new(input, hidden, rng), LstmCell::new(input, hidden, rng)]
            })
            .collect();
        BiLstmParams {
            embedding,
            layers,
            l3w: Mat::uniform(LINEAR3_OUT, 2 * hidden, 2 * hidden, rng),
            l3b: Mat::zeros(LINEAR3_OUT, 1),
            l4w: Mat::uniform(OUT_DIM, LINEAR3_OUT, LINEAR3_OUT, rng),
            l4b: Mat::zeros(OUT_DIM, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        BiLstmParams {
            embedding: z(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|[f, b]| [f.zeros_like(), b.zeros_like()])
                .collect(),
            l3w: z(&self.l3w),
            l3b: z(&self.l3b),
            l4w: z(&self.l4w),
            l4b: z(&self.l4b),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0][0].hidden()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols
    }

    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = vec![("lstm.embedding".to_string(), &self.embedding)];
        for (k, layer) in self.layers.iter().enumerate() {
            for (d, cell) in layer.iter().enumerate() {
                let dir = ["fw", "bw"][d];
                out.push((format!("lstm.l{k}.{dir}.wx"), &cell.wx));
                out.push((format!("lstm.l{k}.{dir}.wh"), &cell.wh));
                out.push((format!("lstm.l{k}.{dir}.b"), &cell.b));
            }
        }
        out.push(("lstm.linear3.w".into(), &self.l3w));
        out.push(("lstm.linear3.b".into(), &self.l3b));
        out.push(("lstm.linear4.w".into(), &self.l4w));
        out.push(("lstm.linear4.b".into(), &self.l4b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.embedding];
        for layer in self.layers.iter_mut() {
            for cell in layer.iter_mut() {
                out.push(&mut cell.wx);
                out.push(&mut cell.wh);
                out.push(&mut cell.b);
            }
        }
        out.extend([&mut self.l3w, &mut self.l3b, &mut self.l4w, &mut self.l4b]);
        out
    }
}

struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates i, f, g, o.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Runs one direction; `xs` and the returned outputs are in time order.
fn run_cell(cell: &LstmCell, xs: &[Vec<f64>], reverse: bool) -> (Vec<Vec<f64>>, Vec<Step>) {
    let h_dim = cell.hidden();
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut outs = vec![Vec::new(); xs.len()];
    let mut steps = Vec::with_capacity(xs.len());
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let mut pre = cell.b.data.clone();
        cell.wx.matvec_acc(&xs[t], &mut pre);
        cell.wh.matvec_acc(&h, &mut pre);
        let mut gates = pre;
        for (k, x) in gates.iter_mut().enumerate() {
            *x = if (2 * h_dim..3 * h_dim).contains(&k) {
                x.tanh()
            } else {
                sigmoid(*x)
            };
        }
        let mut c_new = vec![0.0; h_dim];
        let mut tanh_c = vec![0.0; h_dim];
        let mut h_new = vec![0.0; h_dim];
        for j in 0..h_dim {
            let (i, f, g, o) = (gates[j], gates[h_dim + j], gates[2 * h_dim + j], gates[3 * h_dim + j]);
            c_new[j] = f * c[j] + i * g;
            tanh_c[j] = c_new[j].tanh();
            h_new[j] = o * tanh_c[j];
        }
        steps.push(Step {
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new),
            gates,
            tanh_c,
        });
        outs[t] = h_new;
    }
    (outs, steps)
}

/// Backpropagates `d_out` (time order) through one direction; returns the
/// input gradients in time order.
fn back_cell(
    cell: &LstmCell,
    xs: &[Vec<f64>],
    steps: &[Step],
    d_out: &[Vec<f64>],
    reverse: bool,
    grads: &mut LstmCell,
) -> Vec<Vec<f64>> {
    let h_dim = cell.hidden();
    let mut dx = vec![vec![0.0; cell.wx.cols]; xs.len()];
    let mut dh_next = vec![0.0; h_dim];
    let mut dc_next = vec![0.0; h_dim];
    let n = xs.len();
    for (si, step) in steps.iter().enumerate().rev() {
        let t = if reverse { n - 1 - si } else { si };
        let mut dpre = vec![0.0; 4 * h_dim];
        for j in 0..h_dim {
            let g = &step.gates;
            let (i, f, gg, o) = (g[j], g[h_dim + j], g[2 * h_dim + j], g[3 * h_dim + j]);
            let dh = d_out[t][j] + dh_next[j];
            let tc = step.tanh_c[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            dpre[j] = dc * gg * i * (1.0 - i);
            dpre[h_dim + j] = dc * step.c_prev[j] * f * (1.0 - f);
            dpre[2 * h_dim + j] = dc * i * (1.0 - gg * gg);
            dpre[3 * h_dim + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        grads.wx.outer_acc(&dpre, &xs[t]);
        grads.wh.outer_acc(&dpre, &step.h_prev);
        grads.b.add_assign(&dpre);
        cell.wx.matvec_t_acc(&dpre, &mut dx[t]);
        dh_next.iter_mut().for_each(|x| *x = 0.0);
        cell.wh.matvec_t_acc(&dpre, &mut dh_next);
    }
    dx
}

pub struct RowCache {
    codes: Vec<u8>,
    /// Input of each layer, time order.
    inputs: Vec<Vec<Vec<f64>>>,
    steps: Vec<[Vec<Step>; 2]>,
    pooled: Vec<f64>,
    a3: Vec<f64>,
}

/// Forward pass of one row; returns the 32-dimensional row vector.
pub fn forward_row(p: &BiLstmParams, codes: &[u8]) -> (Vec<f64>, RowCache) {
    let mut x: Vec<Vec<f64>> = codes
        .iter()
        .map(|&c| p.embedding.row(usize::from(c)).to_vec())
        .collect();
    let mut inputs = Vec::with_capacity(p.layers.len());
    let mut steps = Vec::with_capacity(p.layers.len());
    for [fw, bw] in &p.layers {
        let (of, sf) = run_cell(fw, &x, false);
        let (ob, sb) = run_cell(bw, &x, true);
        let out: Vec<Vec<f64>> = of
            .into_iter()
            .zip(ob)
            .map(|(mut a, b)| {
                a.extend(b);
                a
            })
            .collect();
        inputs.push(std::mem::replace(&mut x, out));
        steps.push([sf, sb]);
    }
    let width = x.first().map_or(0, Vec::len);
    let mut pooled = vec![0.0; width];
    for row in &x {
        super::tensor::axpy(1.0 / x.len() as f64, row, &mut pooled);
    }
    let a3 = p.l3w.affine(&pooled, &p.l3b);
    let a4 = p.l4w.affine(&a3, &p.l4b);
    let cache = RowCache {
        codes: codes.to_vec(),
        inputs,
        steps,
        pooled,
        a3,
    };
    (a4, cache)
}

pub fn backward_row(p: &BiLstmParams, cache: &RowCache, d_out: &[f64], grads: &mut BiLstmParams) {
    grads.l4w.outer_acc(d_out, &cache.a3);
    grads.l4b.add_assign(d_out);
    let mut d_a3 = vec![0.0; LINEAR3_OUT];
    p.l4w.matvec_t_acc(d_out, &mut d_a3);
    grads.l3w.outer_acc(&d_a3, &cache.pooled);
    grads.l3b.add_assign(&d_a3);
    let mut d_pooled = vec![0.0; cache.pooled.len()];
    p.l3w.matvec_t_acc(&d_a3, &mut d_pooled);

    let len = cache.codes.len();
    let scale = 1.0 / len as f64;
    let mut d_h: Vec<Vec<f64>> = vec![d_pooled.iter().map(|d| d * scale).collect(); len];
    for (k, [fw, bw]) in p.layers.iter().enumerate().rev() {
        let h = fw.hidden();
        let xs = &cache.inputs[k];
        let d_f: Vec<Vec<f64>> = d_h.iter().map(|d| d[..h].to_vec()).collect();
        let d_b: Vec<Vec<f64>> = d_h.iter().map(|d| d[h..].to_vec()).collect();
        let [gf, gb] = &mut grads.layers[k];
        let mut dx = back_cell(fw, xs, &cache.steps[k][0], &d_f, false, gf);
        let dx_b = back_cell(bw, xs, &cache.steps[k][1], &d_b, true, gb);
        for (a, b) in dx.iter_mut().zip(&dx_b) {
            super::tensor::axpy(1.0, b, a);
        }
        d_h = dx;
    }
    for (t, &c) in cache.codes.iter().enumerate() {
        super::tensor::axpy(1.0, &d_h[t], grads.embedding.row_mut(usize::from(c)));
    }
}

pub fn check_rows(m: &SequenceMatrix, row_len: usize) -> Result<()> {
    if m.row_len != row_len {
        return Err(Error::RowLengthMismatch {
            expected: row_len,
            found: m.row_len,
        });
    }
    if let Some(r) = m.rows.iter().find(|r| r.len() != row_len) {
        return Err(Error::RowLengthMismatch {
            expected: row_len,
            found: r.len(),
        });
    }
    Ok(())
}

/// Mean of the row vectors; the zero vector for a matrix without rows.
pub fn embed(p: &BiLstmParams, m: &SequenceMatrix) -> Vec<f64> {
    let mut out = vec![0.0; OUT_DIM];
    for row in &m.rows {
        let (v, _) = forward_row(p, row);
        super::tensor::axpy(1.0 / m.rows.len() as f64, &v, &mut out);
    }
    out
}
