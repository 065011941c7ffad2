//! Gated recurrent unit cell built from tape primitives.

use crate::{Float, Init, ParamId, ParamStore, Result, Tape, Var};

/// Parameters of one GRU direction. Gate blocks are stacked in the order
/// update, reset, candidate.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    /// Input weights `[3h, e]`.
    pub w_input: ParamId,
    /// Recurrent weights for the update and reset gates `[2h, h]`.
    pub w_gates: ParamId,
    /// Recurrent weights for the candidate `[h, h]`.
    pub w_cand: ParamId,
    /// Biases `[1, 3h]`.
    pub bias: ParamId,
    pub hidden: usize,
    pub input: usize,
}

impl GruParams {
    pub fn new<F: Float>(store: &mut ParamStore<F>, prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_input: store.add(format!("{prefix}.w_input"), (3 * hidden, input), Init::Xavier),
            w_gates: store.add(format!("{prefix}.w_gates"), (2 * hidden, hidden), Init::Xavier),
            w_cand: store.add(format!("{prefix}.w_cand"), (hidden, hidden), Init::Xavier),
            bias: store.add(format!("{prefix}.bias"), (1, 3 * hidden), Init::Zeros),
            hidden,
            input,
        }
    }
}

/// One GRU step on a batch of rows: `state` is `[B, h]`, `input` `[B, e]`.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
pub fn gru_cell<F: Float>(
    tape: &Tape<F>,
    store: &ParamStore<F>,
    p: &GruParams,
    state: Var,
    input: Var,
) -> Result<Var> {
    let h = p.hidden;
    let w_input = tape.param(store, p.w_input);
    let w_gates = tape.param(store, p.w_gates);
    let w_cand = tape.param(store, p.w_cand);
    let bias = tape.param(store, p.bias);

    let xw = tape.matmul_t(input, w_input)?;
    let xw = tape.add_row(xw, bias)?;
    let hu = tape.matmul_t(state, w_gates)?;
    let x_parts = tape.split(xw, &[h, h, h])?;
    let h_parts = tape.split(hu, &[h, h])?;

    let z = tape.add(x_parts[0], h_parts[0])?;
    let z = tape.sigmoid(z);
    let r = tape.add(x_parts[1], h_parts[1])?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, state)?;
    let cand = tape.matmul_t(rh, w_cand)?;
    let cand = tape.add(x_parts[2], cand)?;
    let cand = tape.tanh(cand);

    let neg_z = tape.scale(z, -F::one());
    let keep = tape.add_scalar(neg_z, F::one());
    let kept = tape.mul(keep, state)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(kept, fresh)
}
