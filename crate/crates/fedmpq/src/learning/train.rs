//! Local SGD and the server-side model update.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Dataset;
use super::model::{loss_and_grad, ModelArch, ModelState};
use crate::error::{Error, Result};

/// Optimization hyperparameters shared by every client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Client (local) learning rate.
    pub client_lr: f64,
    /// Server learning rate applied to the aggregated update.
    pub server_lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            client_lr: 0.3,
            server_lr: 1.0,
            local_epochs: 1,
            batch_size: 10,
        }
    }
}

/// One client's local pass: minibatch SGD from the global model, then
/// the parameter delta `local - global` per layer. Deterministic for a
/// fixed seed.
pub fn local_train(
    model: &ModelState,
    arch: &ModelArch,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<Vec<f32>>> {
    if data.is_empty() {
        return Err(Error::InvalidConfig(
            "local training on an empty dataset".into(),
        ));
    }
    if cfg.batch_size == 0 || cfg.local_epochs == 0 {
        return Err(Error::InvalidConfig(
            "batch_size and local_epochs must be >= 1".into(),
        ));
    }
    let mut params = model.params_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grads) = loss_and_grad(arch, &params, data, batch)?;
            for (p, g) in params.iter_mut().zip(&grads) {
                for (pv, &gv) in p.iter_mut().zip(g) {
                    *pv -= cfg.client_lr * gv;
                }
            }
        }
    }

    Ok(model
        .layers
        .iter()
        .zip(&params)
        .map(|(layer, local)| {
            layer
                .values
                .iter()
                .zip(local)
                .map(|(&g, &l)| (l - f64::from(g)) as f32)
                .collect()
        })
        .collect())
}

/// Apply the aggregated mean update: theta += server_lr * g, and bump
/// the round counter.
pub fn apply_server_update(
    model: &mut ModelState,
    update: &[Vec<f32>],
    server_lr: f64,
) -> Result<()> {
    if update.len() != model.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "update has {} layers, model has {}",
            update.len(),
            model.layers.len()
        )));
    }
    for (layer, u) in model.layers.iter().zip(update) {
        if layer.values.len() != u.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer {} length {} vs update {}",
                layer.name,
                layer.values.len(),
                u.len()
            )));
        }
    }
    for (layer, u) in model.layers.iter_mut().zip(update) {
        for (v, &g) in layer.values.iter_mut().zip(u) {
            *v = (f64::from(*v) + server_lr * f64::from(g)) as f32;
        }
    }
    model.round += 1;
    Ok(())
}
