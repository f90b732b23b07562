//! A small fully connected binary classifier: ReLU hidden layers, a sigmoid
//! output unit, binary cross-entropy, mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64],
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn xavier<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Layer {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Layer {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-a..=a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|j| {
                let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
                self.bias[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a sigmoid unit written in terms of its logit.
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new(input_width: usize, hidden: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut width = input_width;
        for &h in hidden {
            layers.push(Layer::xavier(width, h, &mut rng));
            width = h;
        }
        layers.push(Layer::xavier(width, 1, &mut rng));
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    /// Activations of every layer; the last entry holds the output logit.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward(acts.last().unwrap());
            if i < last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            acts.push(z);
        }
        acts
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.activations(x).last().unwrap()[0]
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(sigmoid(self.logit(x)))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| bce_logit(self.logit(x), y)).sum();
        total / xs.len().max(1) as f64
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights and biases, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
    }

    /// Gradient of [`Mlp::loss`] in the layout of [`Mlp::params`].
    pub fn gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let n = xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            let acts = self.activations(x);
            let mut delta = vec![(sigmoid(acts.last().unwrap()[0]) - y) / n];
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let (gw, gb) = &mut grads[li];
                for j in 0..layer.outputs {
                    gb[j] += delta[j];
                    for i in 0..layer.inputs {
                        gw[j * layer.inputs + i] += delta[j] * input[i];
                    }
                }
                if li == 0 {
                    break;
                }
                delta = (0..layer.inputs)
                    .map(|i| {
                        if input[i] <= 0.0 {
                            return 0.0;
                        }
                        (0..layer.outputs)
                            .map(|j| delta[j] * layer.weights[j * layer.inputs + i])
                            .sum()
                    })
                    .collect();
            }
        }
        grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect()
    }

    fn step(&mut self, xs: &[Vec<f64>], ys: &[f64], lr: f64) {
        let g = self.gradient(xs, ys);
        let p: Vec<f64> = self.params().iter().zip(&g).map(|(p, g)| p - lr * g).collect();
        self.set_params(&p);
    }
}

/// Trains a classifier on 0/1 labels. Fails unless both classes are present.
pub fn train_mlp(xs: &[Vec<f64>], ys: &[f64], width: usize, cfg: &MlpConfig, seed: u64) -> Result<Mlp> {
    if xs.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    if !(ys.contains(&1.0) && ys.contains(&0.0)) {
        return Err(Error::SingleClass);
    }
    if let Some(x) = xs.iter().find(|x| x.len() != width) {
        return Err(Error::WidthMismatch {
            expected: width,
            got: x.len(),
        });
    }
    let mut mlp = Mlp::new(width, &cfg.hidden, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            mlp.step(&bx, &by, cfg.learning_rate);
        }
    }
    Ok(mlp)
}
