//! Fully connected network with tanh hidden layers and a linear output,
//! trained with hand-written reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("layer sizes must list >= 2 positive widths, got {sizes:?}")));
        }
        Ok(Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += scale * g;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!("network expects {} inputs, got {}", self.input_dim(), x.len())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.affine(&h);
            if k < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        Ok(h)
    }

    /// Activations entering each layer, plus the network output.
    fn forward_cached(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h);
            inputs.push(h);
            h = if k < last { z.into_iter().map(f64::tanh).collect() } else { z };
        }
        (inputs, h)
    }

    /// Gradient of `upstream · f(x)` with respect to every parameter.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Self> {
        Ok(self.gradient_with_output(x, upstream)?.0)
    }

    /// Parameter gradient together with the forward output.
    pub fn gradient_with_output(&self, x: &[f64], upstream: &[f64]) -> Result<(Self, Vec<f64>)> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(invalid(format!(
                "upstream gradient has {} entries, network has {} outputs",
                upstream.len(),
                self.output_dim()
            )));
        }
        let (inputs, out) = self.forward_cached(x);
        let mut grads = self.zeros_like();
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let h = &inputs[k];
            let g = &mut grads.layers[k];
            for o in 0..layer.outputs {
                g.biases[o] = delta[o];
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, hi) in row.iter_mut().zip(h) {
                    *w = delta[o] * hi;
                }
            }
            if k > 0 {
                // h = tanh(z) for hidden layers, so dh/dz = 1 - h^2.
                let mut next = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += delta[o] * w;
                    }
                }
                for (n, hi) in next.iter_mut().zip(h) {
                    *n *= 1.0 - hi * hi;
                }
                delta = next;
            }
        }
        Ok((grads, out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut p = MlpParams::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            p.layers[0].weights[i * 3 + i] = 1.0;
        }
        assert_eq!(p.forward(&[0.3, -1.2, 4.0]).unwrap(), vec![0.3, -1.2, 4.0]);
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // h = tanh(W1 x + b1), y = W2 h + b2 with x = (1, -1).
        let mut p = MlpParams::zeros(&[2, 2, 1]).unwrap();
        p.layers[0].weights = vec![0.5, -0.25, 1.0, 2.0];
        p.layers[0].biases = vec![0.1, -0.2];
        p.layers[1].weights = vec![1.5, -0.5];
        p.layers[1].biases = vec![0.3];
        // z1 = 0.5 + 0.25 + 0.1 = 0.85, z2 = 1 - 2 - 0.2 = -1.2
        let expected = 1.5 * 0.85f64.tanh() - 0.5 * (-1.2f64).tanh() + 0.3;
        let y = p.forward(&[1.0, -1.0]).unwrap();
        assert!((y[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let p = MlpParams::zeros(&[3, 2]).unwrap();
        let x = [1.0, 2.0, -3.0];
        let g = p.gradient(&x, &[0.5, -2.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![0.5, 1.0, -1.5, -2.0, -4.0, 6.0]);
        assert_eq!(g.layers[0].biases, vec![0.5, -2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::new(&[4, 8, 3], &mut rng).unwrap();
        let g = p.gradient(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.params().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = MlpParams::zeros(&[2, 1]).unwrap();
        assert!(p.forward(&[1.0]).is_err());
        assert!(p.gradient(&[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(MlpParams::zeros(&[3]).is_err());
        assert!(MlpParams::zeros(&[3, 0, 1]).is_err());
    }

    #[test]
    fn initialization_within_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::new(&[16, 32, 2], &mut rng).unwrap();
        assert!(p.layers[0].weights.iter().all(|w| w.abs() <= 0.25));
        assert!(p.layers[1].weights.iter().all(|w| w.abs() <= 1.0 / 32f64.sqrt()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = MlpParams::new(&[3, 6, 5, 2], &mut rng).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let up: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = p.gradient(&x, &up).unwrap();
            let f = |q: &MlpParams| q.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
            let h = 1e-5;
            for (idx, analytic) in g.params().enumerate() {
                let mut plus = p.clone();
                *plus.params_mut().nth(idx).unwrap() += h;
                let mut minus = p.clone();
                *minus.params_mut().nth(idx).unwrap() -= h;
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-4, "param {idx}: {analytic} vs {numeric}");
            }
        }
    }
}
