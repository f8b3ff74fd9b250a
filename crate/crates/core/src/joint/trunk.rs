use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![128]
}

impl TrunkConfig {
    pub fn new(input_dim: usize) -> Self {
        TrunkConfig {
            input_dim,
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

/// Fully connected layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Dense {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.weights);
        y.add_row_vector(&self.bias);
        y
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn push_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weights.as_slice());
        out.extend_from_slice(&self.bias);
    }

    /// Reads this layer's parameters from the front of `src`, returning the rest.
    pub fn pull_params<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let w = self.weights.as_slice().len();
        let b = self.bias.len();
        self.weights.as_mut_slice().copy_from_slice(&src[..w]);
        self.bias.copy_from_slice(&src[w..w + b]);
        &src[w + b..]
    }

    /// `self -= lr · grad`, where `grad` already includes any weight decay.
    pub fn step(&mut self, lr: f64, grad: &Dense) {
        self.weights.axpy(-lr, &grad.weights);
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

/// Shared representation: affine → rectifier per hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trunk {
    pub input_dim: usize,
    pub layers: Vec<Dense>,
}

/// Per-layer inputs kept by [`Trunk::forward_cached`]; the last entry is the
/// trunk output.
pub struct TrunkCache {
    pub activations: Vec<Matrix>,
}

impl Trunk {
    /// He-normal weights, zero biases.
    pub fn init(config: &TrunkConfig) -> Result<Self> {
        if config.input_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::invalid("trunk dimensions must be positive"));
        }
        let mut rng = util::rng(config.seed);
        let mut fan_in = config.input_dim;
        let mut layers = Vec::with_capacity(config.hidden.len());
        for &width in &config.hidden {
            let scale = (2.0 / fan_in as f64).sqrt();
            let weights = Matrix::from_fn(width, fan_in, |_, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                scale * e
            });
            layers.push(Dense {
                weights,
                bias: vec![0.0; width],
            });
            fan_in = width;
        }
        Ok(Trunk {
            input_dim: config.input_dim,
            layers,
        })
    }

    /// Zero hidden layers: the trunk passes inputs through.
    pub fn identity(input_dim: usize) -> Self {
        Trunk {
            input_dim,
            layers: Vec::new(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Dense::outputs)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<TrunkCache> {
        if x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "trunk expects {} inputs, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let mut h = layer.forward(activations.last().expect("nonempty"));
            h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            activations.push(h);
        }
        Ok(TrunkCache { activations })
    }

    /// Backpropagates `d_out` (gradient w.r.t. the trunk output) and returns
    /// one gradient per layer, without weight decay.
    pub fn backward(&self, cache: &TrunkCache, d_out: &Matrix) -> Vec<Dense> {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut d = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.activations[l + 1];
            for (g, &o) in d.as_mut_slice().iter_mut().zip(out.as_slice()) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
            let input = &cache.activations[l];
            grads.push(Dense {
                weights: d.t_matmul(input),
                bias: d.sum_rows(),
            });
            if l > 0 {
                d = d.matmul(&layer.weights);
            }
        }
        grads.reverse();
        grads
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(|l| l.weights.squared_norm()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layers.iter().map(Dense::num_params).sum());
        for l in &self.layers {
            l.push_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, mut src: &[f64]) {
        for l in &mut self.layers {
            src = l.pull_params(src);
        }
        assert!(src.is_empty(), "parameter vector longer than the trunk");
    }
}

/// Trunk output for `x`.
pub fn trunk_forward(trunk: &Trunk, x: &Matrix) -> Result<Matrix> {
    Ok(trunk
        .forward_cached(x)?
        .activations
        .pop()
        .expect("input is always cached"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::grad_check;
    use rand::Rng;

    #[test]
    fn identity_trunk() {
        let x = Matrix::from_fn(3, 4, |i, j| i as f64 - j as f64);
        assert_eq!(trunk_forward(&Trunk::identity(4), &x).unwrap(), x);
    }

    #[test]
    fn negative_preactivations_are_zeroed() {
        let mut t = Trunk::init(&TrunkConfig {
            input_dim: 2,
            hidden: vec![3],
            seed: 0,
        })
        .unwrap();
        t.layers[0].weights = Matrix::from_fn(3, 2, |_, _| 1.0);
        t.layers[0].bias = vec![-10.0; 3];
        let x = Matrix::from_fn(4, 2, |i, _| i as f64);
        let f = trunk_forward(&t, &x).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_forward() {
        let t = Trunk::init(&TrunkConfig {
            input_dim: 6,
            hidden: vec![5],
            seed: 4,
        })
        .unwrap();
        let mut rng = util::rng(11);
        let x = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let f = trunk_forward(&t, &x).unwrap();
        let l = &t.layers[0];
        for i in 0..4 {
            for h in 0..5 {
                let mut acc = l.bias[h];
                for k in 0..6 {
                    acc += l.weights.get(h, k) * x.get(i, k);
                }
                assert!((f.get(i, h) - acc.max(0.0)).abs() < 1e-12);
            }
        }
        assert!(trunk_forward(&t, &Matrix::zeros(1, 5)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = TrunkConfig {
            input_dim: 5,
            hidden: vec![7, 4],
            seed: 3,
        };
        let trunk = Trunk::init(&cfg).unwrap();
        let mut rng = util::rng(5);
        let x = Matrix::from_fn(8, 5, |_, _| rng.random_range(-1.0..1.0));
        let g = Matrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
        let err = grad_check(
            |theta| {
                let mut t = trunk.clone();
                t.set_params(theta);
                let cache = t.forward_cached(&x).unwrap();
                let out = cache.activations.last().unwrap();
                let f = crate::matrix::dot(out.as_slice(), g.as_slice());
                let grads = t.backward(&cache, &g);
                let mut flat = Vec::new();
                grads.iter().for_each(|d| d.push_params(&mut flat));
                (f, flat)
            },
            &trunk.params(),
            1e-6,
        );
        assert!(err < 1e-6, "{err}");
    }
}
