use crate::error::Result;
use crate::nn::{Graph, Matrix, ParamId, Var};

/// Self-attentive intent classifier: `α = softmax_i(h_iᵀ W c)`,
/// `s = Σ α_i h_i`, logits from `[s; features]`.
#[derive(Debug, Clone, Copy)]
pub struct IntentBaseParams {
    pub att_w: ParamId,
    pub att_c: ParamId,
    pub cls_w: ParamId,
    pub cls_b: ParamId,
}

/// Per-intent positive and negative attention with a shared bilinear `W_a`.
#[derive(Debug, Clone, Copy)]
pub struct TwoSideIntentParams {
    pub att_wa: ParamId,
    pub ctx_pos: ParamId,
    pub ctx_neg: ParamId,
    pub out_w_pos: ParamId,
    pub out_b_pos: ParamId,
    pub out_w_neg: ParamId,
    pub out_b_neg: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct IntentOutput {
    /// `[1 × K]`
    pub logits: Var,
    /// `[1 × n]`
    pub alpha: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct TwoSideOutput {
    /// `[1 × K]`, positive minus negative logits.
    pub logits: Var,
    /// `[K × n]`
    pub alpha_pos: Var,
    pub alpha_neg: Var,
}

/// `features`, when given, is a `[1 × d_t]` row appended to the sentence
/// embedding before the classifier.
pub fn intent_forward_base(
    g: &mut Graph<'_>,
    h: Var,
    p: &IntentBaseParams,
    features: Option<Var>,
) -> Result<IntentOutput> {
    let w = g.param(p.att_w);
    let c = g.param(p.att_c);
    let hw = g.matmul(h, w)?;
    let scores = g.matmul(hw, c)?;
    let scores = g.transpose(scores);
    let alpha = g.softmax_rows(scores);
    let mut s = g.matmul(alpha, h)?;
    if let Some(f) = features {
        s = g.concat_cols(s, f)?;
    }
    let cls_w = g.param(p.cls_w);
    let cls_b = g.param(p.cls_b);
    let logits = g.matmul(s, cls_w)?;
    let logits = g.add_row(logits, cls_b)?;
    Ok(IntentOutput { logits, alpha })
}

fn one_side(
    g: &mut Graph<'_>,
    h: Var,
    hw: Var,
    ctx: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    features: Option<Var>,
) -> Result<(Var, Var)> {
    let ctx = g.param(ctx);
    let ctx_t = g.transpose(ctx);
    let scores = g.matmul(hw, ctx_t)?;
    let scores = g.transpose(scores);
    let alpha = g.softmax_rows(scores);
    let mut s = g.matmul(alpha, h)?;
    if let Some(f) = features {
        let k = g.shape(s).0;
        let ones = g.constant(Matrix::filled(k, 1, 1.0));
        let tiled = g.matmul(ones, f)?;
        s = g.concat_cols(s, tiled)?;
    }
    let w = g.param(out_w);
    let per_label = g.mul(s, w)?;
    let logits = g.sum_cols(per_label);
    let logits = g.transpose(logits);
    let b = g.param(out_b);
    let logits = g.add_row(logits, b)?;
    Ok((logits, alpha))
}

/// `logit_k = (w_pk·s_pk + b_pk) − (w_nk·s_nk + b_nk)` with
/// `s_k = Σ_i α_ki h_i`, `α_ki = softmax_i(h_iᵀ W_a c_k)`.
pub fn intent_forward_two_side(
    g: &mut Graph<'_>,
    h: Var,
    p: &TwoSideIntentParams,
    features: Option<Var>,
) -> Result<TwoSideOutput> {
    let wa = g.param(p.att_wa);
    let hw = g.matmul(h, wa)?;
    let (pos, alpha_pos) = one_side(g, h, hw, p.ctx_pos, p.out_w_pos, p.out_b_pos, features)?;
    let (neg, alpha_neg) = one_side(g, h, hw, p.ctx_neg, p.out_w_neg, p.out_b_neg, features)?;
    let logits = g.sub(pos, neg)?;
    Ok(TwoSideOutput {
        logits,
        alpha_pos,
        alpha_neg,
    })
}
