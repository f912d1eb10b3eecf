//! Minimal dense feed-forward network with exact reverse-mode gradients,
//! an Adam optimizer, and Polyak target updates. 64-bit floats throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Sigmoid,
}

/// Fully connected net: ReLU on hidden layers, configurable output activation.
/// `weights[l]` is row-major `sizes[l+1] x sizes[l]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub output_activation: Activation,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

pub struct ForwardCache {
    /// activations[0] = input, activations[L] = network output.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    /// He-uniform init for the ReLU hidden layers, Xavier-uniform for the
    /// output layer.
    pub fn new(sizes: Vec<usize>, output_activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layer");
        let nl = sizes.len() - 1;
        let mut weights = Vec::with_capacity(nl);
        let mut biases = Vec::with_capacity(nl);
        for l in 0..nl {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = if l + 1 == nl {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..limit))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Mlp { sizes, weights, biases, output_activation }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).activations.pop().unwrap_or_default()
    }

    /// Output-layer pre-activation (useful for adding exploration noise
    /// before a sigmoid squash).
    pub fn forward_logits(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let mut a = x.to_vec();
        let nl = self.weights.len();
        for l in 0..nl {
            a = self.affine(l, &a);
            if l + 1 < nl {
                for v in a.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        a
    }

    pub fn output_from_logits(&self, logits: &[f64]) -> Vec<f64> {
        match self.output_activation {
            Activation::Identity => logits.to_vec(),
            Activation::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
        }
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let nl = self.weights.len();
        let mut activations = Vec::with_capacity(nl + 1);
        activations.push(x.to_vec());
        for l in 0..nl {
            let mut a = self.affine(l, activations.last().unwrap());
            if l + 1 < nl {
                for v in a.iter_mut() {
                    *v = v.max(0.0);
                }
            } else if self.output_activation == Activation::Sigmoid {
                for v in a.iter_mut() {
                    *v = sigmoid(*v);
                }
            }
            activations.push(a);
        }
        ForwardCache { activations }
    }

    fn affine(&self, l: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.weights[l];
        let mut out = self.biases[l].clone();
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out[o] += acc;
        }
        out
    }

    /// Exact reverse-mode gradients. `upstream` is dL/d(output) taken after
    /// the output activation. Returns parameter gradients and dL/d(input).
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> (Gradients, Vec<f64>) {
        let nl = self.weights.len();
        assert_eq!(upstream.len(), self.output_dim(), "upstream dimension mismatch");
        let mut grads = self.zero_gradients();

        // delta = dL/d(pre-activation of current layer)
        let mut delta: Vec<f64> = match self.output_activation {
            Activation::Identity => upstream.to_vec(),
            Activation::Sigmoid => upstream
                .iter()
                .zip(cache.output())
                .map(|(u, y)| u * y * (1.0 - y))
                .collect(),
        };

        for l in (0..nl).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.biases[l][o] += d;
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            // propagate to the previous layer's activation
            let mut prev = vec![0.0; n_in];
            let w = &self.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                // ReLU mask of the previous layer's post-activation
                for (p, a) in prev.iter_mut().zip(&cache.activations[l]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (grads, delta)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.output_activation == other.output_activation
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.biases.iter_mut().zip(&other.biases))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m_weights: Vec<Vec<f64>>,
    pub v_weights: Vec<Vec<f64>>,
    pub m_biases: Vec<Vec<f64>>,
    pub v_biases: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            m_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction, descending along `grads`.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);

    let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    };
    for l in 0..net.weights.len() {
        update(
            &mut net.weights[l],
            &grads.weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
        );
        update(
            &mut net.biases[l],
            &grads.biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
        );
    }
}

/// Bit-exact checkpoint form of an [`Mlp`]: f64 parameters stored as their
/// IEEE-754 bit patterns so a JSON round trip reproduces the network exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpBits {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<u64>>,
    pub biases: Vec<Vec<u64>>,
    pub output_activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamStateBits {
    pub m_weights: Vec<Vec<u64>>,
    pub v_weights: Vec<Vec<u64>>,
    pub m_biases: Vec<Vec<u64>>,
    pub v_biases: Vec<Vec<u64>>,
    pub step: u64,
    pub beta1: u64,
    pub beta2: u64,
    pub epsilon: u64,
}

fn to_bits(v: &[Vec<f64>]) -> Vec<Vec<u64>> {
    v.iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect()
}

fn from_bits(v: &[Vec<u64>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| r.iter().map(|&x| f64::from_bits(x)).collect()).collect()
}

impl From<&Mlp> for MlpBits {
    fn from(net: &Mlp) -> Self {
        MlpBits {
            sizes: net.sizes.clone(),
            weights: to_bits(&net.weights),
            biases: to_bits(&net.biases),
            output_activation: net.output_activation,
        }
    }
}

impl From<&MlpBits> for Mlp {
    fn from(b: &MlpBits) -> Self {
        Mlp {
            sizes: b.sizes.clone(),
            weights: from_bits(&b.weights),
            biases: from_bits(&b.biases),
            output_activation: b.output_activation,
        }
    }
}

impl From<&AdamState> for AdamStateBits {
    fn from(s: &AdamState) -> Self {
        AdamStateBits {
            m_weights: to_bits(&s.m_weights),
            v_weights: to_bits(&s.v_weights),
            m_biases: to_bits(&s.m_biases),
            v_biases: to_bits(&s.v_biases),
            step: s.step,
            beta1: s.beta1.to_bits(),
            beta2: s.beta2.to_bits(),
            epsilon: s.epsilon.to_bits(),
        }
    }
}

impl From<&AdamStateBits> for AdamState {
    fn from(b: &AdamStateBits) -> Self {
        AdamState {
            m_weights: from_bits(&b.m_weights),
            v_weights: from_bits(&b.v_weights),
            m_biases: from_bits(&b.m_biases),
            v_biases: from_bits(&b.v_biases),
            step: b.step,
            beta1: f64::from_bits(b.beta1),
            beta2: f64::from_bits(b.beta2),
            epsilon: f64::from_bits(b.epsilon),
        }
    }
}

/// target <- (1 - tau) * target + tau * source, parameter-wise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) {
    assert!(
        target.same_architecture(source),
        "soft_update: architecture mismatch"
    );
    for (t, s) in target
        .weights
        .iter_mut()
        .zip(&source.weights)
        .chain(target.biases.iter_mut().zip(&source.biases))
    {
        for (tv, sv) in t.iter_mut().zip(s) {
            *tv = (1.0 - tau) * *tv + tau * *sv;
        }
    }
}
