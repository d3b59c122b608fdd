use crate::error::{Error, Result};
use crate::nn::{Graph, Matrix, ParamId, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub beta_p: f64,
    pub beta_n: f64,
}

impl LossWeights {
    pub fn new(beta_p: f64, beta_n: f64) -> Result<Self> {
        if beta_p < 0.0 || beta_n < 0.0 || !beta_p.is_finite() || !beta_n.is_finite() {
            return Err(Error::Config(format!(
                "attention loss weights must be finite and non-negative, got {beta_p}, {beta_n}"
            )));
        }
        Ok(Self { beta_p, beta_n })
    }

    pub fn zero() -> Self {
        Self {
            beta_p: 0.0,
            beta_n: 0.0,
        }
    }
}

/// Cross-entropy of attention rows against clue-word targets,
/// `-Σ_k Σ_i t_ki log α_ki`. All-zero target rows contribute nothing.
pub fn attention_loss(g: &mut Graph<'_>, alpha: Var, target: &Matrix) -> Result<Var> {
    g.attention_ce(alpha, target.clone())
}

/// `loss_c + β_p·loss_att_p + β_n·loss_att_n`.
pub fn total_loss(
    g: &mut Graph<'_>,
    loss_c: Var,
    loss_att_p: Option<Var>,
    loss_att_n: Option<Var>,
    weights: LossWeights,
) -> Result<Var> {
    let mut total = loss_c;
    if let Some(att) = loss_att_p {
        let weighted = g.scale(att, weights.beta_p);
        total = g.add(total, weighted)?;
    }
    if let Some(att) = loss_att_n {
        let weighted = g.scale(att, weights.beta_n);
        total = g.add(total, weighted)?;
    }
    Ok(total)
}

/// `logit_k + w_k z_k`, row by row (one row per sentence or per token).
pub fn fuse_logits(g: &mut Graph<'_>, logits: Var, z: &Matrix, weights: ParamId) -> Result<Var> {
    let w = g.param(weights);
    let indicator = g.constant(z.clone());
    let bonus = g.mul_row(indicator, w)?;
    g.add(logits, bonus)
}

/// Plain-value version of [`attention_loss`].
pub fn attention_loss_value(alpha: &Matrix, target: &Matrix) -> f64 {
    -alpha
        .data()
        .iter()
        .zip(target.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&a, &t)| t * a.max(crate::nn::LOG_CLAMP).ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;

    fn eval_att(alpha: &[&[f64]], target: &[&[f64]]) -> f64 {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Matrix::from_rows(alpha));
        let l = attention_loss(&mut g, a, &Matrix::from_rows(target)).unwrap();
        g.scalar(l).unwrap()
    }

    #[test]
    fn one_hot_match_costs_nothing() {
        assert_eq!(eval_att(&[&[0.0, 1.0, 0.0]], &[&[0.0, 1.0, 0.0]]), 0.0);
    }

    #[test]
    fn zero_target_costs_nothing() {
        assert_eq!(eval_att(&[&[0.2, 0.3, 0.5]], &[&[0.0, 0.0, 0.0]]), 0.0);
    }

    #[test]
    fn half_half_against_uniform_is_log3() {
        let third = 1.0 / 3.0;
        let v = eval_att(&[&[third, third, third]], &[&[0.5, 0.5, 0.0]]);
        // hand evaluation: -(½·ln⅓ + ½·ln⅓) = ln 3
        assert!((v - 3f64.ln()).abs() < 1e-12);
        assert!((v - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn exact_zero_attention_is_clamped() {
        let v = eval_att(&[&[0.0, 1.0]], &[&[1.0, 0.0]]);
        assert!((v - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn total_loss_weights() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let c = g.constant(Matrix::filled(1, 1, 2.0));
        let p = g.constant(Matrix::filled(1, 1, 0.5));
        let n = g.constant(Matrix::filled(1, 1, 0.25));
        let zero = total_loss(&mut g, c, Some(p), Some(n), LossWeights::zero()).unwrap();
        assert_eq!(g.scalar(zero).unwrap(), 2.0);
        let w = LossWeights::new(16.0, 16.0).unwrap();
        let sixteen = total_loss(&mut g, c, Some(p), Some(n), w).unwrap();
        assert_eq!(g.scalar(sixteen).unwrap(), 2.0 + 8.0 + 4.0);
        let w2 = LossWeights::new(32.0, 32.0).unwrap();
        let doubled = total_loss(&mut g, c, Some(p), Some(n), w2).unwrap();
        assert_eq!(g.scalar(doubled).unwrap() - 2.0, 2.0 * (14.0 - 2.0));
        assert!(LossWeights::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn fuse_adds_only_where_indicated() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::row_vector(&[2.5, 7.0]));
        let mut g = Graph::new(&store);
        let logits = g.constant(Matrix::row_vector(&[0.5, 1.0]));
        let fused = fuse_logits(&mut g, logits, &Matrix::row_vector(&[1.0, 0.0]), w).unwrap();
        assert_eq!(g.value(fused).row(0), &[3.0, 1.0]);
        let untouched = fuse_logits(&mut g, logits, &Matrix::zeros(1, 2), w).unwrap();
        assert_eq!(g.value(untouched).row(0), &[0.5, 1.0]);
    }

    #[test]
    fn fuse_flips_argmax_when_weight_is_large() {
        let logits_raw = [1.0, 3.0, 2.0];
        for label in 0..3 {
            for w_val in [0.0, 0.5, 1.5, 2.5, 5.0] {
                let mut store = ParamStore::new();
                let w = store.add("w", Matrix::filled(1, 3, w_val));
                let mut z = Matrix::zeros(1, 3);
                z.set(0, label, 1.0);
                let mut g = Graph::new(&store);
                let logits = g.constant(Matrix::row_vector(&logits_raw));
                let fused = fuse_logits(&mut g, logits, &z, w).unwrap();
                let got = argmax(g.value(fused).row(0));
                // brute force over the label set with direct addition
                let direct: Vec<f64> = (0..3)
                    .map(|k| logits_raw[k] + if k == label { w_val } else { 0.0 })
                    .collect();
                assert_eq!(got, argmax(&direct));
            }
        }
    }

    fn argmax(v: &[f64]) -> usize {
        (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
    }
}
