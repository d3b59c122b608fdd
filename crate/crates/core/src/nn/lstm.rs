use rand::Rng;

use super::graph::{Graph, Var};
use super::{glorot, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gate blocks are laid out `[input | forget | candidate | output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirection {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
}

impl LstmDirection {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Matrix::zeros(1, 4 * hidden);
        bias.row_mut(0)[hidden..2 * hidden].fill(1.0);
        Self {
            wx: store.add(format!("{prefix}.wx"), glorot(input, 4 * hidden, rng)),
            wh: store.add(format!("{prefix}.wh"), glorot(hidden, 4 * hidden, rng)),
            bias: store.add(format!("{prefix}.bias"), bias),
        }
    }

    /// Hidden states in time order for the given step order.
    fn run(&self, g: &mut Graph<'_>, x: Var, hidden: usize, order: &[usize]) -> Result<Vec<Var>> {
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let bias = g.param(self.bias);
        let xw = g.matmul(x, wx)?;
        let pre = g.add_row(xw, bias)?;

        let mut states = vec![None; order.len()];
        let mut prev: Option<(Var, Var)> = None;
        for &t in order {
            let mut gates = g.row(pre, t)?;
            if let Some((h, _)) = prev {
                let rec = g.matmul(h, wh)?;
                gates = g.add(gates, rec)?;
            }
            let i = g.slice_cols(gates, 0, hidden)?;
            let i = g.sigmoid(i);
            let f = g.slice_cols(gates, hidden, hidden)?;
            let f = g.sigmoid(f);
            let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
            let cand = g.tanh(cand);
            let o = g.slice_cols(gates, 3 * hidden, hidden)?;
            let o = g.sigmoid(o);

            let mut c = g.mul(i, cand)?;
            if let Some((_, c_prev)) = prev {
                let keep = g.mul(f, c_prev)?;
                c = g.add(c, keep)?;
            }
            let squashed = g.tanh(c);
            let h = g.mul(o, squashed)?;
            states[t] = Some(h);
            prev = Some((h, c));
        }
        Ok(states.into_iter().map(|s| s.expect("every step visited")).collect())
    }
}

/// Single-layer bidirectional LSTM. Output row `i` is `[forward_i; backward_i]`.
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub forward: LstmDirection,
    pub backward: LstmDirection,
    pub input_dim: usize,
    pub hidden: usize,
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            forward: LstmDirection::new(store, &format!("{prefix}.fwd"), input_dim, hidden, rng),
            backward: LstmDirection::new(store, &format!("{prefix}.bwd"), input_dim, hidden, rng),
            input_dim,
            hidden,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `[n × input_dim]` embeddings to `[n × 2H]` hidden states.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (n, d) = g.shape(x);
        if n == 0 {
            return Err(Error::Shape("encoder input has no tokens".into()));
        }
        if d != self.input_dim {
            return Err(Error::Shape(format!(
                "encoder expects width {}, got {d}",
                self.input_dim
            )));
        }
        let ascending: Vec<usize> = (0..n).collect();
        let descending: Vec<usize> = (0..n).rev().collect();
        let fwd = self.forward.run(g, x, self.hidden, &ascending)?;
        let bwd = self.backward.run(g, x, self.hidden, &descending)?;
        let fwd = g.stack_rows(&fwd)?;
        let bwd = g.stack_rows(&bwd)?;
        g.concat_cols(fwd, bwd)
    }
}
