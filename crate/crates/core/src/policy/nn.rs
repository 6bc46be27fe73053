//! Dense tanh networks with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anything exposing its parameters as a fixed sequence of flat tensors.
///
/// The tensor order is part of the contract: optimisers, gradient buffers
/// and checkpoints all rely on it being stable.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// Reads parameter `index` in flattened order.
    fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Scales `grads` down so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / (norm + 1e-12));
    }
    norm
}

/// `target ← tau · source + (1 − tau) · target`
pub fn polyak_update<P: Parameters>(target: &mut P, source: &P, tau: f64) {
    for (t, s) in target.tensors_mut().into_iter().zip(source.tensors()) {
        for (a, &b) in t.iter_mut().zip(s) {
            *a = tau * b + (1.0 - tau) * *a;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// Shape `(inputs, outputs)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multi-layer perceptron with tanh hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output: OutputActivation,
}

/// Activations recorded by [`Mlp::forward`]; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace has an output")
    }
}

impl Mlp {
    /// Uniform fan-in initialisation `U(±1/√fan_in)`; the last layer's
    /// weights are additionally multiplied by `final_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, final_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let scale = if i == last { final_scale } else { 1.0 };
                let weight = Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound) * scale);
                let bias = Array1::from_shape_fn(w[1], |_| rng.gen_range(-bound..bound) * scale);
                Linear { weight, bias }
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Linear {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers, output }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weight.ncols()));
        s
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> MlpTrace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weight);
            z += &layer.bias;
            let is_last = i + 1 == self.layers.len();
            if !is_last || self.output == OutputActivation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        MlpTrace { activations }
    }

    /// Forward pass for one sample.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let mut a = Array1::from(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if i + 1 < self.layers.len() || self.output == OutputActivation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        a.to_vec()
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`, and returns `∂L/∂input`.
    pub fn backward(&self, trace: &MlpTrace, grad_output: ArrayView2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let n = self.layers.len();
        let mut g = grad_output.to_owned();
        if self.output == OutputActivation::Tanh {
            g.zip_mut_with(&trace.activations[n], |gi, &y| *gi *= 1.0 - y * y);
        }
        for i in (0..n).rev() {
            let input = &trace.activations[i];
            grads.layers[i].weight += &input.t().dot(&g);
            grads.layers[i].bias += &g.sum_axis(Axis(0));
            let mut g_in = g.dot(&self.layers[i].weight.t());
            if i > 0 {
                g_in.zip_mut_with(input, |gi, &a| *gi *= 1.0 - a * a);
            }
            g = g_in;
        }
        g
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let grad_tensors = grads.tensors();
        if self.first.is_empty() {
            self.first = grad_tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.tensors_mut().into_iter().zip(grad_tensors).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
