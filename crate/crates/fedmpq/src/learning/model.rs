//! Small differentiable classifiers trained with plain SGD.
//!
//! Two architectures: multinomial logistic regression and a two-layer
//! tanh MLP. Parameters live in [`ModelState`] as flat f32 vectors (the
//! unit of quantization); all training math runs in f64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::data::Dataset;
use crate::error::{Error, Result};

/// Flat parameters of one layer plus its logical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// The global model: ordered layers of flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub layers: Vec<LayerParams>,
    pub round: u32,
}

impl ModelState {
    pub fn layer_lens(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.values.len() as u32).collect()
    }

    /// Downlink serialization size: per layer a {layer_id u16, L u32}
    /// header plus raw little-endian f32 values.
    pub fn wire_size(&self) -> usize {
        self.layers.iter().map(|l| 6 + 4 * l.values.len()).sum()
    }

    pub(crate) fn params_f64(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .map(|l| l.values.iter().map(|&v| f64::from(v)).collect())
            .collect()
    }
}

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelArch {
    Logistic {
        dim: usize,
        classes: usize,
    },
    Mlp {
        dim: usize,
        hidden: usize,
        classes: usize,
    },
}

impl ModelArch {
    pub fn dim(&self) -> usize {
        match *self {
            ModelArch::Logistic { dim, .. } | ModelArch::Mlp { dim, .. } => dim,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            ModelArch::Logistic { classes, .. } | ModelArch::Mlp { classes, .. } => classes,
        }
    }

    pub fn layer_specs(&self) -> Vec<(String, Vec<usize>)> {
        match *self {
            ModelArch::Logistic { dim, classes } => vec![
                ("weights".into(), vec![classes, dim]),
                ("bias".into(), vec![classes]),
            ],
            ModelArch::Mlp {
                dim,
                hidden,
                classes,
            } => vec![
                ("w1".into(), vec![hidden, dim]),
                ("b1".into(), vec![hidden]),
                ("w2".into(), vec![classes, hidden]),
                ("b2".into(), vec![classes]),
            ],
        }
    }

    /// Initialize parameters. Logistic regression starts at zero; MLP
    /// weight matrices draw from a seeded normal scaled by fan-in.
    pub fn init_state(&self, seed: u64) -> ModelState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = self
            .layer_specs()
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let values = match (*self, shape.len()) {
                    (ModelArch::Mlp { .. }, 2) => {
                        let fan_in = shape[1] as f64;
                        let normal = Normal::new(0.0, (1.0 / fan_in).sqrt()).unwrap();
                        (0..len).map(|_| normal.sample(&mut rng) as f32).collect()
                    }
                    _ => vec![0.0f32; len],
                };
                LayerParams {
                    name,
                    shape,
                    values,
                }
            })
            .collect();
        ModelState { layers, round: 0 }
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// Class probabilities for one sample.
pub fn predict_proba(arch: &ModelArch, params: &[Vec<f64>], x: &[f32]) -> Vec<f64> {
    let mut logits = forward_logits(arch, params, x).0;
    softmax_in_place(&mut logits);
    logits
}

/// Returns (logits, hidden activations) — the hidden part is empty for
/// logistic regression.
fn forward_logits(arch: &ModelArch, params: &[Vec<f64>], x: &[f32]) -> (Vec<f64>, Vec<f64>) {
    match *arch {
        ModelArch::Logistic { dim, classes } => {
            let (w, b) = (&params[0], &params[1]);
            let mut logits = vec![0.0f64; classes];
            for c in 0..classes {
                let mut acc = b[c];
                for j in 0..dim {
                    acc += w[c * dim + j] * f64::from(x[j]);
                }
                logits[c] = acc;
            }
            (logits, Vec::new())
        }
        ModelArch::Mlp {
            dim,
            hidden,
            classes,
        } => {
            let (w1, b1, w2, b2) = (&params[0], &params[1], &params[2], &params[3]);
            let mut h = vec![0.0f64; hidden];
            for i in 0..hidden {
                let mut acc = b1[i];
                for j in 0..dim {
                    acc += w1[i * dim + j] * f64::from(x[j]);
                }
                h[i] = acc.tanh();
            }
            let mut logits = vec![0.0f64; classes];
            for c in 0..classes {
                let mut acc = b2[c];
                for i in 0..hidden {
                    acc += w2[c * hidden + i] * h[i];
                }
                logits[c] = acc;
            }
            (logits, h)
        }
    }
}

/// Mean cross-entropy loss and its gradient over the given sample
/// indices. Gradients come back in the same layer layout as `params`.
pub fn loss_and_grad(
    arch: &ModelArch,
    params: &[Vec<f64>],
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if indices.is_empty() {
        return Err(Error::InvalidConfig("gradient over an empty batch".into()));
    }
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut loss = 0.0f64;
    let n = indices.len() as f64;

    for &idx in indices {
        let (x, y) = data.sample(idx);
        let y = y as usize;
        let (mut logits, h) = forward_logits(arch, params, x);
        softmax_in_place(&mut logits);
        loss += -(logits[y].max(1e-300)).ln();

        match *arch {
            ModelArch::Logistic { dim, classes } => {
                for c in 0..classes {
                    let delta = logits[c] - f64::from(u8::from(c == y));
                    grads[1][c] += delta / n;
                    for j in 0..dim {
                        grads[0][c * dim + j] += delta * f64::from(x[j]) / n;
                    }
                }
            }
            ModelArch::Mlp {
                dim,
                hidden,
                classes,
            } => {
                let w2 = &params[2];
                let mut dh = vec![0.0f64; hidden];
                for c in 0..classes {
                    let delta = logits[c] - f64::from(u8::from(c == y));
                    grads[3][c] += delta / n;
                    for i in 0..hidden {
                        grads[2][c * hidden + i] += delta * h[i] / n;
                        dh[i] += delta * w2[c * hidden + i];
                    }
                }
                for i in 0..hidden {
                    let dz = dh[i] * (1.0 - h[i] * h[i]);
                    grads[1][i] += dz / n;
                    for j in 0..dim {
                        grads[0][i * dim + j] += dz * f64::from(x[j]) / n;
                    }
                }
            }
        }
    }
    Ok((loss / n, grads))
}

/// Accuracy and mean loss over a dataset.
pub fn evaluate(model: &ModelState, arch: &ModelArch, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("evaluate on an empty dataset".into()));
    }
    let params = model.params_f64();
    let mut correct = 0usize;
    let mut loss = 0.0f64;
    for idx in 0..data.len() {
        let (x, y) = data.sample(idx);
        let proba = predict_proba(arch, &params, x);
        let pred = proba
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if pred == y as usize {
            correct += 1;
        }
        loss += -(proba[y as usize].max(1e-300)).ln();
    }
    Ok((correct as f64 / data.len() as f64, loss / data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::data::Dataset;

    fn toy_dataset(dim: usize, samples: &[(Vec<f32>, u32)]) -> Dataset {
        let mut d = Dataset::new(dim);
        for (x, y) in samples {
            d.push(x, *y);
        }
        d
    }

    // Independent oracle: the closed-form softmax-CE gradient for a
    // linear model on a single sample, dW = (p - onehot(y)) x^T.
    #[test]
    fn logistic_gradient_matches_closed_form() {
        let arch = ModelArch::Logistic { dim: 2, classes: 3 };
        let params = vec![vec![0.3, -0.2, 0.0, 0.5, -0.4, 0.1], vec![0.05, -0.1, 0.2]];
        let data = toy_dataset(2, &[(vec![1.5, -0.5], 2)]);
        let (_, grads) = loss_and_grad(&arch, &params, &data, &[0]).unwrap();

        let x = [1.5f64, -0.5];
        let mut logits = [0.0f64; 3];
        for c in 0..3 {
            logits[c] = params[1][c] + params[0][c * 2] * x[0] + params[0][c * 2 + 1] * x[1];
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for c in 0..3 {
            let p = exps[c] / z;
            let delta = p - f64::from(u8::from(c == 2));
            assert!((grads[1][c] - delta).abs() < 1e-12);
            assert!((grads[0][c * 2] - delta * x[0]).abs() < 1e-12);
            assert!((grads[0][c * 2 + 1] - delta * x[1]).abs() < 1e-12);
        }
    }

    fn finite_difference_check(arch: ModelArch, seed: u64) -> f64 {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = arch.layer_specs();
        let params: Vec<Vec<f64>> = specs
            .iter()
            .map(|(_, shape)| {
                (0..shape.iter().product::<usize>())
                    .map(|_| rng.random_range(-0.8..0.8))
                    .collect()
            })
            .collect();
        let mut data = Dataset::new(arch.dim());
        for _ in 0..4 {
            let x: Vec<f32> = (0..arch.dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let y = rng.random_range(0..arch.classes() as u32);
            data.push(&x, y);
        }
        let indices: Vec<usize> = (0..data.len()).collect();
        let (_, grads) = loss_and_grad(&arch, &params, &data, &indices).unwrap();

        let h = 1e-5;
        let mut worst = 0.0f64;
        for l in 0..params.len() {
            for i in 0..params[l].len() {
                let mut plus = params.clone();
                plus[l][i] += h;
                let mut minus = params.clone();
                minus[l][i] -= h;
                let (lp, _) = loss_and_grad(&arch, &plus, &data, &indices).unwrap();
                let (lm, _) = loss_and_grad(&arch, &minus, &data, &indices).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grads[l][i].abs()).max(1e-6);
                worst = worst.max((fd - grads[l][i]).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_central_differences() {
        let worst_log = finite_difference_check(ModelArch::Logistic { dim: 3, classes: 4 }, 11);
        let worst_mlp = finite_difference_check(
            ModelArch::Mlp {
                dim: 3,
                hidden: 5,
                classes: 3,
            },
            12,
        );
        assert!(worst_log < 1e-4, "logistic: {worst_log}");
        assert!(worst_mlp < 1e-4, "mlp: {worst_mlp}");
    }

    #[test]
    fn evaluate_memorized_set_is_perfect() {
        let arch = ModelArch::Logistic { dim: 2, classes: 2 };
        let mut model = arch.init_state(0);
        // Hand weights that separate the two points.
        model.layers[0].values = vec![1.0, 0.0, -1.0, 0.0];
        let data = toy_dataset(2, &[(vec![2.0, 0.0], 0), (vec![-2.0, 0.0], 1)]);
        let (acc, loss) = evaluate(&model, &arch, &data).unwrap();
        assert_eq!(acc, 1.0);
        assert!(loss >= 0.0);
    }

    #[test]
    fn random_init_accuracy_near_chance() {
        use rand::Rng;
        let classes = 4;
        let arch = ModelArch::Logistic { dim: 6, classes };
        let model = arch.init_state(3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut data = Dataset::new(6);
        for _ in 0..4000 {
            let x: Vec<f32> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            data.push(&x, rng.random_range(0..classes as u32));
        }
        let (acc, loss) = evaluate(&model, &arch, &data).unwrap();
        assert!((acc - 1.0 / classes as f64).abs() < 0.05, "accuracy {acc}");
        assert!(loss >= 0.0);
    }
}
