//! Dense layers, multi-layer perceptrons and a gated recurrent unit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Binding, ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Elu => g.elu(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
        })
    }
}

impl FromStr for Activation {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            other => Err(crate::error::Error::Config(format!("unknown activation `{other}` (expected relu or elu)"))),
        }
    }
}

fn uniform(rng: &mut (impl Rng + ?Sized), shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform(rng, &[inputs, outputs], bound));
        let bias = store.add(format!("{name}.bias"), uniform(rng, &[1, outputs], bound));
        Self { weight, bias, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.weight));
        g.add_row(y, p.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        depth: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut (impl Rng + ?Sized),
    ) -> Self {
        let mut layers = Vec::with_capacity(depth + 1);
        let mut width = inputs;
        for i in 0..depth {
            layers.push(Linear::new(store, &format!("{name}.{i}"), width, hidden, rng));
            width = hidden;
        }
        layers.push(Linear::new(store, &format!("{name}.out"), width, outputs, rng));
        Self { layers, activation }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn output_layer(&self) -> &Linear {
        self.layers.last().unwrap()
    }

    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h);
            if i < last {
                h = self.activation.apply(g, h);
            }
        }
        h
    }

    /// Zero the final layer so the network outputs exactly zero.
    pub fn zero_output(&self, store: &mut ParamStore) {
        let out = self.output_layer();
        store.get_mut(out.weight).data_mut().fill(0.0);
        store.get_mut(out.bias).data_mut().fill(0.0);
    }
}

/// Gated recurrent unit:
///
/// ```text
/// r  = σ(x W_r + h U_r + b_r)
/// u  = σ(x W_u + h U_u + b_u)
/// n  = tanh(x W_n + b_n + r ∘ (h U_n + c_n))
/// h' = n + u ∘ (h − n)
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub input_bias: ParamId,
    pub hidden_bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let input_weight = store.add(format!("{name}.w_x"), uniform(rng, &[inputs, 3 * hidden], bound));
        let hidden_weight = store.add(format!("{name}.w_h"), uniform(rng, &[hidden, 3 * hidden], bound));
        let input_bias = store.add(format!("{name}.b_x"), uniform(rng, &[1, 3 * hidden], bound));
        let hidden_bias = store.add(format!("{name}.b_h"), uniform(rng, &[1, 3 * hidden], bound));
        Self { input_weight, hidden_weight, input_bias, hidden_bias, inputs, hidden }
    }

    pub fn forward(&self, g: &mut Graph, p: &Binding, x: Var, h: Var) -> Var {
        let hs = self.hidden;
        let xw = g.matmul(x, p.var(self.input_weight));
        let xw = g.add_row(xw, p.var(self.input_bias));
        let hw = g.matmul(h, p.var(self.hidden_weight));
        let hw = g.add_row(hw, p.var(self.hidden_bias));
        let xr = g.slice_cols(xw, 0, 2 * hs);
        let hr = g.slice_cols(hw, 0, 2 * hs);
        let gates = g.add(xr, hr);
        let gates = g.sigmoid(gates);
        let reset = g.slice_cols(gates, 0, hs);
        let update = g.slice_cols(gates, hs, hs);
        let xn = g.slice_cols(xw, 2 * hs, hs);
        let hn = g.slice_cols(hw, 2 * hs, hs);
        let rn = g.mul(reset, hn);
        let cand = g.add(xn, rn);
        let cand = g.tanh(cand);
        let diff = g.sub(h, cand);
        let gated = g.mul(update, diff);
        g.add(cand, gated)
    }
}
