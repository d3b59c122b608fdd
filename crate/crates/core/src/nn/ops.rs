use rand::Rng;

use super::Matrix;

/// Floor applied before taking logs of probabilities.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// `-log p[gold]`, clamped at 1e-12.
pub fn cross_entropy(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].max(LOG_CLAMP).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1/(1-p)`.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Matrix {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1)");
    if p == 0.0 {
        return Matrix::filled(rows, cols, 1.0);
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn dropout<R: Rng>(x: &[f64], p: f64, mode: Mode, rng: &mut R) -> Vec<f64> {
    match mode {
        Mode::Eval => x.to_vec(),
        Mode::Train => {
            let mask = dropout_mask(1, x.len(), p, rng);
            x.iter().zip(mask.data()).map(|(a, m)| a * m).collect()
        }
    }
}
