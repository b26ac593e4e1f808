//! Gated graph network over the abstract flow graph.
//!
//! `h_v(1)` is a small seeded random state. For `t = 2..=T`:
//! `h_v(t) = tanh(1/|in(v)| · Σ_{(u,v)} A(l_u ⊕ l_uv ⊕ l_v) · h_u(t−1) + W2·l_v + b2)`
//! with `A(x) = reshape_{s×s}(W1·x + b1)`. Readout:
//! `h_G = tanh(Σ_v σ(Wg·h_v(T) + bg) ⊙ h_v(T))`.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{sigmoid, Mat};
use crate::flowgraph::{AbstractFlowGraph, EdgeType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
    pub wg: Mat,
    pub bg: Mat,
}

impl GnnParams {
    pub fn new<R: Rng>(state: usize, label_len: usize, rng: &mut R) -> Self {
        let input = 2 * label_len + EdgeType::COUNT;
        // Kept small so that A(x) starts close to a contraction.
        let mut w1 = Mat::uniform(state * state, input, input * state, rng);
        w1.data.iter_mut().for_each(|x| *x *= 0.5);
        GnnParams {
            w1,
            b1: Mat::zeros(state * state, 1),
            w2: Mat::uniform(state, label_len, label_len, rng),
            b2: Mat::zeros(state, 1),
            wg: Mat::uniform(state, state, state, rng),
            bg: Mat::zeros(state, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows, m.cols);
        GnnParams {
            w1: z(&self.w1),
            b1: z(&self.b1),
            w2: z(&self.w2),
            b2: z(&self.b2),
            wg: z(&self.wg),
            bg: z(&self.bg),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.w2.rows
    }

    pub fn label_len(&self) -> usize {
        self.w2.cols
    }

    pub fn tensors(&self) -> [(&'static str, &Mat); 6] {
        [
            ("gnn.w1", &self.w1),
            ("gnn.b1", &self.b1),
            ("gnn.w2", &self.w2),
            ("gnn.b2", &self.b2),
            ("gnn.wg", &self.wg),
            ("gnn.bg", &self.bg),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wg,
            &mut self.bg,
        ]
    }
}

/// Parameter-independent view of one flow graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub labels: Vec<Vec<f64>>,
    /// `(u, v, edge type index)` over node positions.
    pub edges: Vec<(usize, usize, usize)>,
    pub init: Vec<Vec<f64>>,
}

fn fnv1a(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Initial state of a node, a function of the seed and the node label only,
/// so that relabeling node ids leaves the graph output unchanged.
pub fn initial_state(label: &[f64], state: usize, seed: u64) -> Vec<f64> {
    let key = fnv1a(std::iter::once(seed).chain(label.iter().map(|x| x.to_bits())));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    (0..state).map(|_| rng.gen_range(-0.1..=0.1)).collect()
}

impl GraphInput {
    pub fn new(g: &AbstractFlowGraph, label_len: usize, state: usize, seed: u64) -> Self {
        let pos = g.positions();
        let labels = g.labels(label_len);
        let init = labels.iter().map(|l| initial_state(l, state, seed)).collect();
        let edges = g
            .edges
            .iter()
            .map(|e| (pos[&e.source], pos[&e.target], e.kind.index()))
            .collect();
        GraphInput { labels, edges, init }
    }

    fn edge_input(&self, e: (usize, usize, usize)) -> Vec<f64> {
        let (u, v, k) = e;
        let mut x = self.labels[u].clone();
        let mut onehot = [0.0; EdgeType::COUNT];
        onehot[k] = 1.0;
        x.extend_from_slice(&onehot);
        x.extend_from_slice(&self.labels[v]);
        x
    }
}

pub struct GnnCache {
    inputs: Vec<Vec<f64>>,
    /// Per-edge transition matrix, row-major `s × s`.
    a: Vec<Vec<f64>>,
    inv_deg: Vec<f64>,
    /// `h[t][v]`, `t = 0..T`.
    h: Vec<Vec<Vec<f64>>>,
    gates: Vec<Vec<f64>>,
    out: Vec<f64>,
}

pub fn forward(p: &GnnParams, g: &GraphInput, steps: usize) -> (Vec<f64>, GnnCache) {
    let s = p.state_dim();
    let n = g.labels.len();
    let inputs: Vec<Vec<f64>> = g.edges.iter().map(|&e| g.edge_input(e)).collect();
    let a: Vec<Vec<f64>> = inputs.iter().map(|x| p.w1.affine(x, &p.b1)).collect();
    let mut deg = vec![0usize; n];
    for &(_, v, _) in &g.edges {
        deg[v] += 1;
    }
    let inv_deg: Vec<f64> = deg.iter().map(|&d| 1.0 / d.max(1) as f64).collect();
    let base: Vec<Vec<f64>> = g.labels.iter().map(|l| p.w2.affine(l, &p.b2)).collect();

    let mut h = vec![g.init.clone()];
    for _ in 1..steps.max(1) {
        let prev = h.last().expect("at least one step");
        let mut pre = base.clone();
        for (ei, &(u, v, _)) in g.edges.iter().enumerate() {
            let am = &a[ei];
            for r in 0..s {
                let row = &am[r * s..(r + 1) * s];
                pre[v][r] += inv_deg[v] * super::tensor::dot(row, &prev[u]);
            }
        }
        for row in pre.iter_mut() {
            row.iter_mut().for_each(|x| *x = x.tanh());
        }
        h.push(pre);
    }

    let last = h.last().expect("at least one step");
    let gates: Vec<Vec<f64>> = last
        .iter()
        .map(|hv| p.wg.affine(hv, &p.bg).into_iter().map(sigmoid).collect())
        .collect();
    let mut z = vec![0.0; s];
    for (hv, gv) in last.iter().zip(&gates) {
        for k in 0..s {
            z[k] += gv[k] * hv[k];
        }
    }
    let out: Vec<f64> = z.iter().map(|x| x.tanh()).collect();
    let cache = GnnCache {
        inputs,
        a,
        inv_deg,
        h,
        gates,
        out: out.clone(),
    };
    (out, cache)
}

pub fn backward(p: &GnnParams, g: &GraphInput, cache: &GnnCache, d_out: &[f64], grads: &mut GnnParams) {
    let s = p.state_dim();
    let n = g.labels.len();
    if n == 0 {
        return;
    }
    let dz: Vec<f64> = d_out
        .iter()
        .zip(&cache.out)
        .map(|(d, y)| d * (1.0 - y * y))
        .collect();
    let t_last = cache.h.len() - 1;
    let mut dh: Vec<Vec<f64>> = vec![vec![0.0; s]; n];
    for v in 0..n {
        let hv = &cache.h[t_last][v];
        let gv = &cache.gates[v];
        let mut dpre = vec![0.0; s];
        for k in 0..s {
            dh[v][k] += dz[k] * gv[k];
            dpre[k] = dz[k] * hv[k] * gv[k] * (1.0 - gv[k]);
        }
        grads.wg.outer_acc(&dpre, hv);
        grads.bg.add_assign(&dpre);
        p.wg.matvec_t_acc(&dpre, &mut dh[v]);
    }

    let mut da: Vec<Vec<f64>> = vec![vec![0.0; s * s]; g.edges.len()];
    for t in (1..=t_last).rev() {
        let mut dpre: Vec<Vec<f64>> = Vec::with_capacity(n);
        for v in 0..n {
            let hv = &cache.h[t][v];
            dpre.push((0..s).map(|k| dh[v][k] * (1.0 - hv[k] * hv[k])).collect());
        }
        for v in 0..n {
            grads.w2.outer_acc(&dpre[v], &g.labels[v]);
            grads.b2.add_assign(&dpre[v]);
        }
        let mut dprev: Vec<Vec<f64>> = vec![vec![0.0; s]; n];
        for (ei, &(u, v, _)) in g.edges.iter().enumerate() {
            let alpha = cache.inv_deg[v];
            let hu = &cache.h[t - 1][u];
            let am = &cache.a[ei];
            for r in 0..s {
                let d = alpha * dpre[v][r];
                if d == 0.0 {
                    continue;
                }
                let row = r * s..(r + 1) * s;
                super::tensor::axpy(d, hu, &mut da[ei][row.clone()]);
                super::tensor::axpy(d, &am[row], &mut dprev[u]);
            }
        }
        dh = dprev;
    }
    for (ei, x) in cache.inputs.iter().enumerate() {
        grads.w1.outer_acc(&da[ei], x);
        grads.b1.add_assign(&da[ei]);
    }
}

/// Graph vector, or the zero vector for an empty graph.
pub fn embed(p: &GnnParams, g: &GraphInput, steps: usize) -> Vec<f64> {
    if g.labels.is_empty() {
        return vec![0.0; p.state_dim()];
    }
    forward(p, g, steps).0
}
