//! Full-sequence BPTT training: MSE loss on the interpolated output, Adam,
//! shuffled mini-batches and early stopping on validation R².

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::r2_score;
use crate::data::{windows, windows_with_hop, Recording, Window};
use crate::error::{Error, Result};
use crate::model::{ForwardCache, Model};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub adam: AdamConfig,
    /// Hop between training windows; `None` means non-overlapping.
    pub window_hop: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            early_stop_patience: 10,
            adam: AdamConfig::default(),
            window_hop: None,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so a run can be checked as a no-op.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate {} must be non-negative", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("epochs, batch size and patience must be at least 1"));
        }
        if self.window_hop == Some(0) {
            return Err(Error::config("window hop must be positive"));
        }
        Ok(())
    }
}

/// Mean squared error over all entries and its gradient `2(pred - target)/n`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::dim("mse_loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Tensor::new(pred.shape().to_vec(), diff.iter().map(|d| 2.0 * d / n).collect())?;
    Ok((loss, grad))
}

/// Parameter gradients for `loss_grad = ∂L/∂output` of the forward pass
/// that produced `cache`.
pub fn backward(model: &Model, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Model> {
    model.backward(cache, loss_grad)
}

/// First and second moment estimates, one tensor pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let z: Vec<Vec<f64>> = model.named().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: z.clone(),
            v: z,
        }
    }
}

/// Bias-corrected Adam update of every parameter in place.
pub fn adam_step(params: &mut Model, grads: &Model, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    let gs = grads.named();
    let mut ps = params.named_mut();
    if gs.len() != ps.len() || state.m.len() != ps.len() {
        return Err(Error::Usage("gradient container does not match the model".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, ((_, p), (_, g))) in ps.iter_mut().zip(&gs).enumerate() {
        if p.len() != g.len() {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *w -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_r2: f64,
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_r2\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_r2));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Loss and gradients of one window.
pub fn window_grad(model: &Model, w: &Window) -> Result<(f64, Model)> {
    let (pred, cache) = model.forward_cached(&w.input)?;
    let (loss, d) = mse_loss(&pred, &w.target)?;
    Ok((loss, model.backward(&cache, &d)?))
}

/// Mean loss and gradients over a batch. Windows are evaluated in
/// parallel; the reduction runs in batch order so the result does not
/// depend on the worker count.
pub fn batch_grad(model: &Model, batch: &[&Window]) -> Result<(f64, Model)> {
    let parts = batch
        .par_iter()
        .map(|w| window_grad(model, w))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = model.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for ((_, s), (_, gi)) in sum.named_mut().into_iter().zip(g.named()) {
            for (a, b) in s.data_mut().iter_mut().zip(gi.data()) {
                *a += b;
            }
        }
    }
    let k = 1.0 / parts.len() as f64;
    for (_, s) in sum.named_mut() {
        for a in s.data_mut() {
            *a *= k;
        }
    }
    Ok((loss * k, sum))
}

/// R² of the model over the concatenated non-overlapping windows.
pub fn evaluate_r2(model: &Model, wins: &[Window]) -> Result<f64> {
    if wins.is_empty() {
        return Err(Error::config("no evaluation windows"));
    }
    let preds = wins
        .par_iter()
        .map(|w| model.predict(&w.input))
        .collect::<Result<Vec<_>>>()?;
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for (pr, w) in preds.iter().zip(wins) {
        p.extend_from_slice(pr.data());
        t.extend_from_slice(w.target.data());
    }
    let rows = p.len() / 2;
    r2_score(&Tensor::new(vec![rows, 2], p)?, &Tensor::new(vec![rows, 2], t)?)
}

/// Trains `model` and returns the parameters with the best validation R²
/// together with the per-epoch history.
pub fn fit(model: &Model, train: &Recording, val: &Recording, cfg: &TrainConfig) -> Result<(Model, Vec<EpochRecord>)> {
    fit_with(model, train, val, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    model: &Model,
    train: &Recording,
    val: &Recording,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, Vec<EpochRecord>)> {
    cfg.validate()?;
    let len = model.config.seq_len;
    let train_w = windows_with_hop(train, len, cfg.window_hop.unwrap_or(len))?;
    if train_w.is_empty() {
        return Err(Error::config(format!(
            "training recording of {} bins holds no {len}-bin window",
            train.len()
        )));
    }
    let val_w = windows(val, len)?;
    if val_w.is_empty() {
        return Err(Error::config(format!(
            "validation recording of {} bins holds no {len}-bin window",
            val.len()
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut cur = model.clone();
    let mut state = AdamState::new(&cur);
    let mut best = cur.clone();
    let mut best_r2 = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train_w[i]).collect();
            let (loss, grads) = batch_grad(&cur, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Evaluation(format!("training loss diverged in epoch {epoch}")));
            }
            adam_step(&mut cur, &grads, &mut state, cfg.lr, &cfg.adam)?;
            loss_sum += loss;
            batches += 1;
        }
        let val_r2 = evaluate_r2(&cur, &val_w)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_r2,
        };
        on_epoch(&rec);
        history.push(rec);
        if val_r2 > best_r2 {
            best_r2 = val_r2;
            best = cur.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    if best_r2 == f64::NEG_INFINITY {
        best = cur;
    }
    Ok((best, history))
}
