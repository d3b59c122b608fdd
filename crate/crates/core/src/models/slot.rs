use crate::error::Result;
use crate::nn::{Graph, ParamId, Var};

#[derive(Debug, Clone, Copy)]
pub struct SlotBaseParams {
    pub cls_w: ParamId,
    pub cls_b: ParamId,
}

/// Shared positive/negative word-to-word attention for slot filling.
/// Classifier inputs are `[s_i; h_i]`, width 4H.
#[derive(Debug, Clone, Copy)]
pub struct SlotTwoSideParams {
    pub w_sp: ParamId,
    pub w_sn: ParamId,
    pub w_p: ParamId,
    pub b_p: ParamId,
    pub w_n: ParamId,
    pub b_n: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct SlotTwoSideOutput {
    /// `[n × L]`
    pub logits: Var,
    /// `[n × n]`, row `i` attends over words `j`.
    pub alpha_pos: Var,
    pub alpha_neg: Var,
}

/// Per-token `W h_i + b`.
pub fn slot_forward_base(g: &mut Graph<'_>, h: Var, p: &SlotBaseParams) -> Result<Var> {
    let w = g.param(p.cls_w);
    let b = g.param(p.cls_b);
    let logits = g.matmul(h, w)?;
    g.add_row(logits, b)
}

/// Encoder input rows `[w_i; f_i]`, where `f_i` are the already aggregated
/// tag embeddings.
pub fn slot_forward_feat(g: &mut Graph<'_>, words: Var, tag_features: Var) -> Result<Var> {
    g.concat_cols(words, tag_features)
}

fn side(g: &mut Graph<'_>, h: Var, att: ParamId, w: ParamId, b: ParamId) -> Result<(Var, Var)> {
    let att = g.param(att);
    let hw = g.matmul(h, att)?;
    let hw_t = g.transpose(hw);
    // scores[i][j] = h_jᵀ W h_i
    let scores = g.matmul(h, hw_t)?;
    let alpha = g.softmax_rows(scores);
    let s = g.matmul(alpha, h)?;
    let input = g.concat_cols(s, h)?;
    let w = g.param(w);
    let b = g.param(b);
    let logits = g.matmul(input, w)?;
    let logits = g.add_row(logits, b)?;
    Ok((logits, alpha))
}

pub fn slot_forward_two_side(
    g: &mut Graph<'_>,
    h: Var,
    p: &SlotTwoSideParams,
) -> Result<SlotTwoSideOutput> {
    let (pos, alpha_pos) = side(g, h, p.w_sp, p.w_p, p.b_p)?;
    let (neg, alpha_neg) = side(g, h, p.w_sn, p.w_n, p.b_n)?;
    let logits = g.sub(pos, neg)?;
    Ok(SlotTwoSideOutput {
        logits,
        alpha_pos,
        alpha_neg,
    })
}
