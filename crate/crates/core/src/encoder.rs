//! LSTM cell, bidirectional encoding and max-over-time pooling.
//!
//! Gates follow the usual layout: `i, f, o` are sigmoid gates and the
//! candidate cell `C̃` uses tanh. [`CellVariant::Linear`] emits
//! `h_t = o_t ⊙ C_t`; [`CellVariant::Standard`] emits `h_t = o_t ⊙ tanh(C_t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Tensor2D, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellVariant {
    /// `h_t = o_t ⊙ C_t`
    #[default]
    Linear,
    /// `h_t = o_t ⊙ tanh(C_t)`
    Standard,
}

impl std::str::FromStr for CellVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(CellVariant::Linear),
            "standard" => Ok(CellVariant::Standard),
            other => Err(format!("unknown cell variant {other:?} (expected linear or standard)")),
        }
    }
}

impl std::fmt::Display for CellVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellVariant::Linear => "linear",
            CellVariant::Standard => "standard",
        })
    }
}

pub const GATES: [&str; 4] = ["i", "f", "o", "c"];
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// Weights of one LSTM direction: `W_g` (H×d), `U_g` (H×H), `b_g` (H×1) for
/// each gate in [`GATES`] order.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Registers `{prefix}W_g`, `{prefix}U_g`, `{prefix}b_g` for every gate.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        forget_bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || input_dim == 0 {
            return Err(Error::Config(format!(
                "LSTM dimensions must be positive (hidden={hidden}, input={input_dim})"
            )));
        }
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |r: usize, c: usize| {
            let data = (0..r * c).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor2D::from_vec(r, c, data).expect("shape matches data")
        };
        let mut w = Vec::with_capacity(4);
        let mut u = Vec::with_capacity(4);
        let mut b = Vec::with_capacity(4);
        for (g, gate) in GATES.iter().enumerate() {
            w.push(store.insert(format!("{prefix}W_{gate}"), uniform(hidden, input_dim))?);
            u.push(store.insert(format!("{prefix}U_{gate}"), uniform(hidden, hidden))?);
            let bias = if g == FORGET { forget_bias } else { 0.0 };
            b.push(store.insert(format!("{prefix}b_{gate}"), Tensor2D::filled(hidden, 1, bias))?);
        }
        Ok(LstmParams {
            w: w.try_into().expect("four gates"),
            u: u.try_into().expect("four gates"),
            b: b.try_into().expect("four gates"),
            input_dim,
            hidden,
        })
    }

    /// Looks up previously registered parameters by name.
    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let find = |kind: &str, gate: &str| {
            let name = format!("{prefix}{kind}_{gate}");
            store
                .id(&name)
                .ok_or_else(|| Error::Corruption(format!("missing parameter {name}")))
        };
        let mut w = [ParamId(0); 4];
        let mut u = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (g, gate) in GATES.iter().enumerate() {
            w[g] = find("W", gate)?;
            u[g] = find("U", gate)?;
            b[g] = find("b", gate)?;
        }
        let (hidden, input_dim) = store.value(w[0]).shape();
        Ok(LstmParams {
            w,
            u,
            b,
            input_dim,
            hidden,
        })
    }
}

/// Hidden and cell state of one direction, both `H×1`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(g: &mut Graph<'_>, hidden: usize) -> Self {
        LstmState {
            h: g.constant(Tensor2D::zeros(hidden, 1)),
            c: g.constant(Tensor2D::zeros(hidden, 1)),
        }
    }
}

fn gate_preactivation(g: &mut Graph<'_>, p: &LstmParams, gate: usize, x: Var, h: Var) -> Result<Var> {
    let (w, u, b) = (g.param(p.w[gate]), g.param(p.u[gate]), g.param(p.b[gate]));
    let wx = g.matmul(w, x)?;
    let uh = g.matmul(u, h)?;
    let sum = g.add(wx, uh)?;
    g.add(sum, b)
}

/// One step of the recurrence for input column `x` (d×1).
pub fn lstm_cell(g: &mut Graph<'_>, x: Var, prev: LstmState, p: &LstmParams, variant: CellVariant) -> Result<LstmState> {
    let input = gate_preactivation(g, p, INPUT, x, prev.h)?;
    let input = g.sigmoid(input);
    let forget = gate_preactivation(g, p, FORGET, x, prev.h)?;
    let forget = g.sigmoid(forget);
    let output = gate_preactivation(g, p, OUTPUT, x, prev.h)?;
    let output = g.sigmoid(output);
    let candidate = gate_preactivation(g, p, CANDIDATE, x, prev.h)?;
    let candidate = g.tanh(candidate);

    let keep_new = g.hadamard(input, candidate)?;
    let keep_old = g.hadamard(forget, prev.c)?;
    let c = g.add(keep_new, keep_old)?;
    let h = match variant {
        CellVariant::Linear => g.hadamard(output, c)?,
        CellVariant::Standard => {
            let squashed = g.tanh(c);
            g.hadamard(output, squashed)?
        }
    };
    Ok(LstmState { h, c })
}

/// The single shared biLSTM used for both questions and candidates.
#[derive(Clone, Copy, Debug)]
pub struct BiLstmEncoder {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub variant: CellVariant,
}

pub const FORWARD_PREFIX: &str = "encoder.fwd.";
pub const BACKWARD_PREFIX: &str = "encoder.bwd.";

impl BiLstmEncoder {
    /// Registers both directions. The forward direction is initialized
    /// before the backward one.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        input_dim: usize,
        hidden: usize,
        variant: CellVariant,
        forget_bias: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let forward = LstmParams::register(store, FORWARD_PREFIX, input_dim, hidden, forget_bias, rng)?;
        let backward = LstmParams::register(store, BACKWARD_PREFIX, input_dim, hidden, forget_bias, rng)?;
        Ok(BiLstmEncoder {
            forward,
            backward,
            variant,
        })
    }

    pub fn lookup(store: &ParamStore, variant: CellVariant) -> Result<Self> {
        let forward = LstmParams::lookup(store, FORWARD_PREFIX)?;
        let backward = LstmParams::lookup(store, BACKWARD_PREFIX)?;
        Ok(BiLstmEncoder {
            forward,
            backward,
            variant,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim
    }

    /// Output width, `2H`.
    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// Encodes an `m×d` sequence into `m×2H`; row `t` is the forward state
    /// after positions `1..=t` joined with the backward state after `m..=t`.
    pub fn encode(&self, g: &mut Graph<'_>, seq: Var) -> Result<Var> {
        let (m, d) = g.value(seq).shape();
        if m == 0 {
            return Err(Error::EmptyInput("bilstm_encode"));
        }
        if d != self.input_dim() {
            return Err(Error::Dimension {
                op: "bilstm_encode",
                left: (m, d),
                right: (self.hidden(), self.input_dim()),
            });
        }
        let mut columns = Vec::with_capacity(m);
        for t in 0..m {
            let row = g.select_row(seq, t)?;
            columns.push(g.transpose(row));
        }

        let h = self.hidden();
        let mut fwd_rows = Vec::with_capacity(m);
        let mut state = LstmState::zeros(g, h);
        for &x in &columns {
            state = lstm_cell(g, x, state, &self.forward, self.variant)?;
            fwd_rows.push(g.transpose(state.h));
        }

        let mut bwd_rows = vec![None; m];
        let mut state = LstmState::zeros(g, h);
        for t in (0..m).rev() {
            state = lstm_cell(g, columns[t], state, &self.backward, self.variant)?;
            bwd_rows[t] = Some(g.transpose(state.h));
        }

        let mut rows = Vec::with_capacity(m);
        for (f, b) in fwd_rows.into_iter().zip(bwd_rows) {
            rows.push(g.concat_cols(f, b.expect("every position visited"))?);
        }
        g.stack_rows(&rows)
    }

    /// biLSTM followed by column-wise max pooling, returned as a `2H×1` column.
    pub fn encode_pooled(&self, g: &mut Graph<'_>, seq: Var) -> Result<Var> {
        let states = self.encode(g, seq)?;
        let pooled = g.max_over_rows(states)?;
        Ok(g.transpose(pooled))
    }
}
