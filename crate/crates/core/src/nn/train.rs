use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Gradients, Model, NnError};
use crate::geometry::VoxelGrid;
use crate::mix_seed;

/// Examples per parallel gradient job. Fixed so results never depend on the
/// thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Share of the data held out for model selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.epochs >= 1
            && self.batch_size >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.validation_fraction > 0.0
            && self.validation_fraction < 1.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Training(format!("invalid train config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

/// Thresholds predictions at 0.5 (positive iff `p > 0.5`).
pub fn evaluate(model: &Model, data: &[(&VoxelGrid, u8)]) -> Result<Metrics, NnError> {
    let probs = data
        .par_iter()
        .map(|(g, _)| model.predict_grid(g))
        .collect::<Result<Vec<f64>, NnError>>()?;
    let mut m = Metrics {
        n: data.len(),
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (p, (_, y)) in probs.iter().zip(data) {
        match (*p > 0.5, *y == 1) {
            (true, true) => m.true_pos += 1,
            (true, false) => m.false_pos += 1,
            (false, false) => m.true_neg += 1,
            (false, true) => m.false_neg += 1,
        }
    }
    if m.n > 0 {
        m.accuracy = (m.true_pos + m.true_neg) as f64 / m.n as f64;
    }
    if m.true_pos + m.false_pos > 0 {
        m.precision = m.true_pos as f64 / (m.true_pos + m.false_pos) as f64;
    }
    if m.true_pos + m.false_neg > 0 {
        m.recall = m.true_pos as f64 / (m.true_pos + m.false_neg) as f64;
    }
    Ok(m)
}

/// Mean gradient and mean loss of a batch, reduced in a fixed order.
fn batch_gradient(
    model: &Model,
    data: &[(&VoxelGrid, u8)],
    idx: &[usize],
) -> Result<(Gradients, f64), NnError> {
    let parts = idx
        .par_chunks(CHUNK)
        .map(|c| model.grid_gradient_sum(c.iter().map(|&i| (data[i].0, data[i].1 as f64))))
        .collect::<Result<Vec<_>, NnError>>()?;
    let mut it = parts.into_iter();
    let (mut g, mut loss) = it.next().expect("non-empty batch");
    for (gi, li) in it {
        g.add(&gi);
        loss += li;
    }
    let n = idx.len() as f64;
    g.scale(1.0 / n);
    Ok((g, loss / n))
}

/// Momentum SGD on the BCE loss.
///
/// A seeded `validation_fraction` of the data is held out; the weights with
/// the best validation accuracy (earliest on ties) are kept. Returns one row
/// per epoch.
pub fn train(
    model: &mut Model,
    data: &[(&VoxelGrid, u8)],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochStats>, NnError> {
    cfg.validate()?;
    let positives = data.iter().filter(|(_, y)| *y == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(NnError::Training(format!(
            "training data needs both classes ({positives} of {} positive)",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX)));
    let n_val = (cfg.validation_fraction * data.len() as f64).round() as usize;
    if n_val == 0 || n_val == data.len() {
        return Err(NnError::Training(format!(
            "validation fraction {} leaves an empty split of {} examples",
            cfg.validation_fraction,
            data.len()
        )));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<(&VoxelGrid, u8)> = val_idx.iter().map(|&i| data[i]).collect();
    let mut train_idx = train_idx.to_vec();

    let mut velocity = model.zero_gradients();
    let mut best: Option<(f64, Model)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.sort_unstable();
        train_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64)));
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (g, loss) = batch_gradient(model, data, batch)?;
            loss_sum += loss * batch.len() as f64;
            for ((v, gi), p) in velocity
                .0
                .iter_mut()
                .zip(&g.0)
                .zip(model.params_mut().iter_mut())
            {
                for ((vk, gk), pk) in v.iter_mut().zip(gi).zip(p.data.iter_mut()) {
                    *vk = cfg.momentum * *vk + gk;
                    *pk -= cfg.learning_rate * *vk;
                }
            }
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        if !train_loss.is_finite() {
            return Err(NnError::Training(format!("loss diverged at epoch {epoch}")));
        }
        let val_accuracy = evaluate(model, &val)?.accuracy;
        if best.as_ref().is_none_or(|(a, _)| val_accuracy > *a) {
            best = Some((val_accuracy, model.clone()));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });
    }
    if let Some((_, m)) = best {
        *model = m;
    }
    Ok(history)
}
