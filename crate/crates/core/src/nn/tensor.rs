use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix; vectors are `n × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `[-a, a]` with `a = 1/sqrt(fan_in)`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Self {
        let a = 1.0 / (fan_in.max(1) as f64).sqrt();
        Mat {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self · x (+ out)`.
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `self · x + b`.
    pub fn affine(&self, x: &[f64], b: &Mat) -> Vec<f64> {
        let mut out = b.data.clone();
        self.matvec_acc(x, &mut out);
        out
    }

    /// `out += selfᵀ · dy`.
    pub fn matvec_t_acc(&self, dy: &[f64], out: &mut [f64]) {
        debug_assert_eq!(dy.len(), self.rows);
        for (&d, row) in dy.iter().zip(self.data.chunks_exact(self.cols)) {
            if d != 0.0 {
                axpy(d, row, out);
            }
        }
    }

    /// `self += dy ⊗ x`.
    pub fn outer_acc(&mut self, dy: &[f64], x: &[f64]) {
        for (&d, row) in dy.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if d != 0.0 {
                axpy(d, x, row);
            }
        }
    }

    pub fn add_assign(&mut self, v: &[f64]) {
        axpy(1.0, v, &mut self.data);
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
