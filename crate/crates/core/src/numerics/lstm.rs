use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Graph handles of one single-layer LSTM's parameters.
///
/// Gate rows are stacked in the order input, forget, cell candidate, output:
/// `w_ih` is `[4H, Din]`, `w_hh` is `[4H, H]`, both biases are `[4H]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
}

pub struct LstmOutput {
    /// `[B, T, H]`
    pub all_hidden: Var,
    /// `[B, H]`, the hidden state after the final time step.
    pub last_hidden: Var,
}

/// Unidirectional LSTM over `seq: [B, T, Din]`. Missing initial states are zero.
pub fn lstm(g: &mut Graph, seq: Var, p: &LstmParams, h0: Option<Var>, c0: Option<Var>) -> Result<LstmOutput> {
    let s = g.shape(seq).to_vec();
    if s.len() != 3 {
        return Err(Error::shape(format!("lstm expects [B,T,Din], got {s:?}")));
    }
    let (b, t, din) = (s[0], s[1], s[2]);
    let wi = g.shape(p.w_ih).to_vec();
    let wh = g.shape(p.w_hh).to_vec();
    if wi.len() != 2 || wi[0] % 4 != 0 || wi[1] != din {
        return Err(Error::shape(format!("lstm input weight {wi:?} does not match input size {din}")));
    }
    let h = wi[0] / 4;
    if wh != [4 * h, h] || g.shape(p.b_ih) != [4 * h] || g.shape(p.b_hh) != [4 * h] {
        return Err(Error::shape(format!("lstm recurrent parameters inconsistent with hidden size {h}")));
    }
    for state in [h0, c0].into_iter().flatten() {
        if g.shape(state) != [b, h] {
            return Err(Error::shape(format!("lstm initial state must be [{b},{h}], got {:?}", g.shape(state))));
        }
    }

    // One projection for every time step at once.
    let flat = g.reshape(seq, &[b * t, din])?;
    let proj = g.linear(flat, p.w_ih, Some(p.b_ih))?;
    let proj = g.reshape(proj, &[b, t, 4 * h])?;

    let mut hidden = h0;
    let mut cell = c0;
    let mut outputs = Vec::with_capacity(t);
    for step in 0..t {
        let xt = g.slice(proj, 1, step, 1)?;
        let xt = g.reshape(xt, &[b, 4 * h])?;
        let gates = match hidden {
            Some(hp) => {
                let rec = g.linear(hp, p.w_hh, Some(p.b_hh))?;
                g.add(xt, rec)?
            }
            None => {
                // zero state: W_hh · 0 vanishes, the bias remains
                let zeros = g.constant(super::Tensor::zeros(&[b, h]));
                let rec = g.linear(zeros, p.w_hh, Some(p.b_hh))?;
                g.add(xt, rec)?
            }
        };
        let i_gate = g.slice(gates, 1, 0, h)?;
        let f_gate = g.slice(gates, 1, h, h)?;
        let g_gate = g.slice(gates, 1, 2 * h, h)?;
        let o_gate = g.slice(gates, 1, 3 * h, h)?;
        let i_gate = g.sigmoid(i_gate);
        let f_gate = g.sigmoid(f_gate);
        let g_gate = g.tanh(g_gate);
        let o_gate = g.sigmoid(o_gate);

        let fresh = g.mul(i_gate, g_gate)?;
        let c_next = match cell {
            Some(cp) => {
                let kept = g.mul(f_gate, cp)?;
                g.add(kept, fresh)?
            }
            None => fresh,
        };
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o_gate, squashed)?;
        outputs.push(g.reshape(h_next, &[b, 1, h])?);
        hidden = Some(h_next);
        cell = Some(c_next);
    }
    let all_hidden = g.concat(&outputs, 1)?;
    Ok(LstmOutput {
        all_hidden,
        last_hidden: hidden.expect("at least one time step"),
    })
}
