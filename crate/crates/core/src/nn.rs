//! Small layer building blocks on top of the tape.

use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Fully connected layer `x · W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add_glorot(format!("{name}.weight"), input, output, rng)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, output))?;
        Ok(Self {
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.linear(x, w, b)
    }
}

/// Linear layers with ReLU between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists input, hidden, and output sizes in order.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output widths"));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Linear::new(store, &format!("{name}.l{k}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn output(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if k + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Single-layer LSTM. Gate blocks are laid out `[input, forget, cell, output]`
/// along the columns of the weight matrices.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input_weight = store.add_glorot(format!("{name}.w_ih"), input, 4 * hidden, rng)?;
        let hidden_weight = store.add_glorot(format!("{name}.w_hh"), hidden, 4 * hidden, rng)?;
        let mut b = Tensor::zeros(1, 4 * hidden);
        for k in hidden..2 * hidden {
            b.set(0, k, 1.0);
        }
        let bias = store.add(format!("{name}.bias"), b)?;
        Ok(Self {
            input_weight,
            hidden_weight,
            bias,
            input,
            hidden,
        })
    }

    /// Runs the batch of sequences `steps[t]` (each `batch × input`) from a
    /// zero state and returns the final hidden state `batch × hidden`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, steps: &[Var]) -> Result<Var> {
        let first = steps
            .first()
            .ok_or_else(|| Error::invalid("LSTM needs at least one step"))?;
        let batch = tape.value(*first).rows();
        let w_ih = tape.param(store, self.input_weight);
        let w_hh = tape.param(store, self.hidden_weight);
        let b = tape.param(store, self.bias);
        let hd = self.hidden;
        let mut h = tape.constant(Tensor::zeros(batch, hd))?;
        let mut c = tape.constant(Tensor::zeros(batch, hd))?;
        for &x in steps {
            let xi = tape.linear(x, w_ih, b)?;
            let hh = tape.matmul(h, w_hh)?;
            let gates = tape.add(xi, hh)?;
            let i_raw = tape.slice_cols(gates, 0, hd)?;
            let f_raw = tape.slice_cols(gates, hd, hd)?;
            let g_raw = tape.slice_cols(gates, 2 * hd, hd)?;
            let o_raw = tape.slice_cols(gates, 3 * hd, hd)?;
            let i = tape.sigmoid(i_raw)?;
            let f = tape.sigmoid(f_raw)?;
            let g = tape.tanh(g_raw)?;
            let o = tape.sigmoid(o_raw)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let ct = tape.tanh(c)?;
            h = tape.mul(o, ct)?;
        }
        Ok(h)
    }
}
