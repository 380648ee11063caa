//! Fully connected networks with sigmoid hidden layers and a linear output.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel::Point;

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Parameters are stored flat, layer by layer: the weight matrix row-major
/// (`out x in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub params: Vec<f64>,
}

impl Network {
    pub fn zeros(input_dim: usize, hidden: Vec<usize>) -> Self {
        let count = Self::param_count(input_dim, &hidden);
        Network { input_dim, hidden, params: vec![0.0; count] }
    }

    pub fn from_params(input_dim: usize, hidden: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let count = Self::param_count(input_dim, &hidden);
        if params.len() != count {
            return invalid(format!("network expects {count} parameters, got {}", params.len()));
        }
        Ok(Network { input_dim, hidden, params })
    }

    pub fn param_count(input_dim: usize, hidden: &[usize]) -> usize {
        let mut fan_in = input_dim;
        let mut count = 0;
        for &w in hidden.iter().chain(std::iter::once(&1)) {
            count += w * fan_in + w;
            fan_in = w;
        }
        count
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(1);
        w
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.forward(x.coords()).0
    }

    /// Value and gradient with respect to the parameters.
    pub fn eval_with_grad(&self, x: &Point) -> (f64, Vec<f64>) {
        let (value, acts) = self.forward(x.coords());
        let widths = self.widths();
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            offsets.push(off);
            off += widths[l + 1] * widths[l] + widths[l + 1];
        }
        // delta holds d value / d preactivation of the current layer
        let mut delta = vec![1.0];
        for l in (0..widths.len() - 1).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let input = &acts[l];
            let base = offsets[l];
            for o in 0..fan_out {
                for i in 0..fan_in {
                    grad[base + o * fan_in + i] = delta[o] * input[i];
                }
                grad[base + fan_out * fan_in + o] = delta[o];
            }
            if l > 0 {
                let mut next = vec![0.0; fan_in];
                for (i, slot) in next.iter_mut().enumerate() {
                    let back: f64 = (0..fan_out).map(|o| delta[o] * self.params[base + o * fan_in + i]).sum();
                    let a = input[i];
                    *slot = back * a * (1.0 - a);
                }
                delta = next;
            }
        }
        (value, grad)
    }

    /// Output and the activations feeding every layer.
    fn forward(&self, x: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let widths = self.widths();
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let input = acts.last().unwrap();
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let hidden = l + 1 < widths.len() - 1;
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let z = b[o] + (0..fan_in).map(|i| w[o * fan_in + i] * input[i]).sum::<f64>();
                    if hidden {
                        sigmoid(z)
                    } else {
                        z
                    }
                })
                .collect();
            off += fan_in * fan_out + fan_out;
            acts.push(out);
        }
        let value = acts.pop().unwrap()[0];
        (value, acts)
    }

    /// Embeds this network in one with wider hidden layers; new units get
    /// zero outgoing weights so the function is unchanged.
    pub fn widen(&self, hidden: &[usize], fill: &mut impl FnMut() -> f64) -> Result<Network> {
        if hidden.len() != self.hidden.len() || hidden.iter().zip(&self.hidden).any(|(n, o)| n < o) {
            return invalid("widened network must keep depth and not shrink layers");
        }
        let old_w = self.widths();
        let mut new_w = vec![self.input_dim];
        new_w.extend(hidden);
        new_w.push(1);
        let mut params = Vec::with_capacity(Self::param_count(self.input_dim, hidden));
        let mut off = 0;
        for l in 0..new_w.len() - 1 {
            let (oi, oo) = (old_w[l], old_w[l + 1]);
            let (ni, no) = (new_w[l], new_w[l + 1]);
            for o in 0..no {
                for i in 0..ni {
                    params.push(if o < oo && i < oi {
                        self.params[off + o * oi + i]
                    } else if i >= oi {
                        // outgoing weight of a new unit
                        0.0
                    } else {
                        fill()
                    });
                }
            }
            for o in 0..no {
                params.push(if o < oo { self.params[off + oo * oi + o] } else { fill() });
            }
            off += oo * oi + oo;
        }
        Network::from_params(self.input_dim, hidden.to_vec(), params)
    }
}
