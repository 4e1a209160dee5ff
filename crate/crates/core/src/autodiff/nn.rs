//! Stochastic encoder `t = f(x) + σ ⊙ ε` and decoder `ŷ = g(t)` built from
//! fully connected layers.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// `act(x W + b)` with `W` stored in×out and `b` as a 1×out row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Dense {
    /// Weights and biases uniform on `±1/√fan_in`.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-bound, bound));
        let bias = Matrix::from_fn(1, fan_out, |_, _| rng.uniform_range(-bound, bound));
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

/// Layer widths and noise settings from which a [`ModelGraph`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Widths of the ReLU encoder layers; empty means `t = x`.
    pub encoder: Vec<usize>,
    /// Widths of the ReLU decoder hidden layers before the linear output.
    pub decoder: Vec<usize>,
    pub output_dim: usize,
    /// Initial per-dimension noise scale σ.
    pub noise_init: f64,
    /// Whether σ is updated by the optimizer.
    pub learn_noise: bool,
}

impl ModelSpec {
    /// Three 128-unit ReLU encoder layers, one 128-unit decoder layer.
    pub fn tabular(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            encoder: alloc::vec![128, 128, 128],
            decoder: alloc::vec![128],
            output_dim,
            noise_init: 0.1,
            learn_noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dimensions must be positive".into()));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(self.noise_init >= 0.0 && self.noise_init.is_finite()) {
            return Err(Error::Config(format!("noise_init must be nonnegative, got {}", self.noise_init)));
        }
        Ok(())
    }
}

/// Encoder and decoder parameters plus the learnable noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub encoder: Vec<Dense>,
    /// 1×dim(t), kept nonnegative.
    pub noise_std: Matrix,
    pub decoder: Vec<Dense>,
    pub learn_noise: bool,
}

/// How encoder noise is drawn during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise<'a> {
    /// `ε = 0`, the noise mean.
    Mean,
    /// `ε` drawn from the noise stream of this seed.
    Seeded(u64),
    /// Caller-supplied `ε` of shape N×dim(t).
    Draws(&'a Matrix),
}

/// Tape and node handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub tape: Tape,
    pub x: Var,
    pub t: Var,
    pub y_hat: Var,
    /// Parameter nodes in [`ModelGraph::params`] order.
    pub params: Vec<Var>,
}

impl ModelGraph {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(seed, stream::INIT);
        let mut width = spec.input_dim;
        let mut encoder = Vec::new();
        for &w in &spec.encoder {
            encoder.push(Dense::init(width, w, Activation::Relu, &mut rng));
            width = w;
        }
        let t_dim = width;
        let mut decoder = Vec::new();
        for &w in &spec.decoder {
            decoder.push(Dense::init(width, w, Activation::Relu, &mut rng));
            width = w;
        }
        decoder.push(Dense::init(width, spec.output_dim, Activation::Identity, &mut rng));
        Ok(Self {
            encoder,
            noise_std: Matrix::filled(1, t_dim, spec.noise_init),
            decoder,
            learn_noise: spec.learn_noise,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder
            .first()
            .map_or(self.noise_std.cols(), Dense::fan_in)
    }

    pub fn t_dim(&self) -> usize {
        self.noise_std.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.decoder.last().map_or(self.t_dim(), Dense::fan_out)
    }

    /// Checks that layer shapes chain and that σ is nonnegative.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim();
        for (i, l) in self.encoder.iter().chain(&self.decoder).enumerate() {
            if l.fan_in() != width || l.bias.shape() != (1, l.fan_out()) {
                return Err(dim_err(format!("layer {i} does not chain: expected fan-in {width}")));
            }
            width = l.fan_out();
            if i + 1 == self.encoder.len() && width != self.t_dim() {
                return Err(dim_err("noise_std width does not match encoder output"));
            }
        }
        if self.noise_std.rows() != 1 || self.noise_std.as_slice().iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("noise_std must be a nonnegative row".into()));
        }
        if self.decoder.is_empty() {
            return Err(Error::Config("decoder needs an output layer".into()));
        }
        Ok(())
    }

    /// Every parameter: encoder (W, b) pairs, σ, decoder (W, b) pairs.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.noise_std);
        for l in &self.decoder {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.noise_std);
        for l in &mut self.decoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Position of σ within [`ModelGraph::params`].
    pub fn noise_param_index(&self) -> usize {
        2 * self.encoder.len()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.as_slice().len()).sum()
    }

    /// Records `t` and `ŷ` on a fresh tape. With `x_grad` the input is a
    /// differentiable leaf.
    pub fn forward(&self, x: &Matrix, noise: Noise<'_>, x_grad: bool) -> Result<Forward> {
        let mut tape = Tape::new();
        let xv = if x_grad {
            tape.param(x.clone())
        } else {
            tape.constant(x.clone())
        };
        let (t, y_hat, params) = self.record(&mut tape, xv, noise)?;
        Ok(Forward {
            tape,
            x: xv,
            t,
            y_hat,
            params,
        })
    }

    /// Appends the network to an existing tape.
    pub fn record(&self, tape: &mut Tape, x: Var, noise: Noise<'_>) -> Result<(Var, Var, Vec<Var>)> {
        let n = tape.value(x).rows();
        if tape.value(x).cols() != self.input_dim() {
            return Err(dim_err(format!(
                "input has {} columns, model expects {}",
                tape.value(x).cols(),
                self.input_dim()
            )));
        }
        let mut params = Vec::new();
        let mut h = x;
        for l in &self.encoder {
            h = dense(tape, h, l, &mut params)?;
        }
        let sigma = tape.param(self.noise_std.clone());
        params.push(sigma);
        let eps = match noise {
            Noise::Mean => None,
            Noise::Seeded(seed) => Some(Rng::new(seed, stream::NOISE).normal_matrix(n, self.t_dim())),
            Noise::Draws(m) => {
                if m.shape() != (n, self.t_dim()) {
                    return Err(dim_err("noise draws do not match N×dim(t)"));
                }
                Some(m.clone())
            }
        };
        let t = match eps {
            None => h,
            Some(e) => {
                let e = tape.constant(e);
                let w = tape.mul_row(e, sigma)?;
                tape.add(h, w)?
            }
        };
        let mut out = t;
        for l in &self.decoder {
            out = dense(tape, out, l, &mut params)?;
        }
        Ok((t, out, params))
    }

    /// `ŷ` with noise at its mean, no tape retained.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let f = self.forward(x, Noise::Mean, false)?;
        Ok(f.tape.value(f.y_hat).clone())
    }

    /// `t` under the given noise, no tape retained.
    pub fn encode(&self, x: &Matrix, noise: Noise<'_>) -> Result<Matrix> {
        let f = self.forward(x, noise, false)?;
        Ok(f.tape.value(f.t).clone())
    }
}

fn dense(tape: &mut Tape, h: Var, l: &Dense, params: &mut Vec<Var>) -> Result<Var> {
    let w = tape.param(l.weight.clone());
    let b = tape.param(l.bias.clone());
    params.push(w);
    params.push(b);
    let z = tape.matmul(h, w)?;
    let z = tape.add_row(z, b)?;
    Ok(match l.activation {
        Activation::Relu => tape.relu(z),
        Activation::Identity => z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> ModelSpec {
        ModelSpec {
            input_dim: 3,
            encoder: vec![5, 4],
            decoder: vec![6],
            output_dim: 1,
            noise_init: 0.1,
            learn_noise: true,
        }
    }

    #[test]
    fn shapes_chain() {
        let m = ModelGraph::new(&small(), 1).unwrap();
        m.validate().unwrap();
        assert_eq!((m.input_dim(), m.t_dim(), m.output_dim()), (3, 4, 1));
        assert_eq!(m.params().len(), 2 * 2 + 1 + 2 * 2);
        let x = Matrix::filled(7, 3, 0.2);
        let f = m.forward(&x, Noise::Seeded(3), false).unwrap();
        assert_eq!(f.tape.value(f.t).shape(), (7, 4));
        assert_eq!(f.tape.value(f.y_hat).shape(), (7, 1));
        assert!(m.forward(&Matrix::zeros(2, 4), Noise::Mean, false).is_err());
    }

    #[test]
    fn zero_noise_is_deterministic_across_seeds() {
        let mut spec = small();
        spec.noise_init = 0.0;
        let m = ModelGraph::new(&spec, 2).unwrap();
        let x = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let a = m.encode(&x, Noise::Seeded(1)).unwrap();
        let b = m.encode(&x, Noise::Seeded(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let m = ModelGraph::new(&small(), 4).unwrap();
        let x = Matrix::from_fn(5, 3, |i, j| (i + 2 * j) as f64 * 0.05);
        assert_eq!(m.encode(&x, Noise::Seeded(8)).unwrap(), m.encode(&x, Noise::Seeded(8)).unwrap());
        assert_ne!(m.encode(&x, Noise::Seeded(8)).unwrap(), m.encode(&x, Noise::Seeded(9)).unwrap());
        assert_eq!(ModelGraph::new(&small(), 4).unwrap(), m);
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let m = ModelGraph {
            encoder: vec![],
            noise_std: Matrix::zeros(1, 2),
            decoder: vec![Dense {
                weight: Matrix::from_rows(&[[1.5], [-2.0]]).unwrap(),
                bias: Matrix::scalar(0.25),
                activation: Activation::Identity,
            }],
            learn_noise: false,
        };
        m.validate().unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-0.5, 0.0]]).unwrap();
        let y = m.predict(&x).unwrap();
        assert_eq!(y.as_slice(), &[1.5 - 4.0 + 0.25, -0.75 + 0.25]);
    }
}
