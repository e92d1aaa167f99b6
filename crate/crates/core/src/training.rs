//! MAE loss, Adam, the mini-batch loop and finite-difference gradient checks.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Gradients, Network};
use crate::tensor::Tensor;
use crate::windowing::WindowPair;

/// Mean absolute error and its gradient, with `sign(0) = 0`.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() {
        return Err(Error::shape("mae_loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTrainConfig(format!("bad Adam hyperparameters {self:?}")))
        }
    }
}

/// First and second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| p.zeros_like()).collect(),
            v: params.iter().map(|p| p.zeros_like()).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One bias-corrected Adam update:
/// `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`, `p ← p − α·m̂ / (√v̂ + ε)`.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidTensor(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        g.expect_shape("adam_step", p.shape())?;
        m.expect_shape("adam_step", p.shape())?;
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub shuffle_seed: u64,
    /// Trailing (chronologically last) fraction of pairs held out for model selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            adam: AdamConfig::default(),
            epochs: 10,
            max_steps: None,
            shuffle_seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidTrainConfig(
                "batch_size and epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidTrainConfig(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAE, or the
    /// final parameters when there is no validation split.
    pub network: Network,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
    /// Mean batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

/// `epoch,train_mae,val_mae` with an empty `val_mae` when there was no split.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_mae,val_mae\n");
    for h in history {
        let val = h.val_mae.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", h.epoch, h.train_mae, val);
    }
    out
}

/// Mean MAE of `net` over `pairs`.
pub fn evaluate_mae(net: &Network, pairs: &[WindowPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate"));
    }
    let mut total = 0.0;
    for p in pairs {
        total += mae_loss(&net.forward(&p.x)?, p.target()?)?.0;
    }
    Ok(total / pairs.len() as f64)
}

/// Mini-batch Adam on the MAE loss. The batch gradient is the mean of the
/// per-example gradients, summed in index order so runs are bit-reproducible.
pub fn train(mut net: Network, pairs: &[WindowPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no training window pairs"));
    }
    for p in pairs {
        p.target()?;
    }
    let n_val = (pairs.len() as f64 * cfg.validation_fraction).floor() as usize;
    let n_val = if n_val == pairs.len() { 0 } else { n_val };
    let (train_set, val_set) = pairs.split_at(pairs.len() - n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut adam = AdamState::new(&net.params().tensors());
    let mut grads = net.params().zeros_like();
    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut stop = false;
        for batch in order.chunks(cfg.batch_size) {
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let pair = &train_set[i];
                let (pred, cache) = net.forward_cached(&pair.x)?;
                let (loss, mut g) = mae_loss(&pred, pair.target()?)?;
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
                net.backward_into(&cache, &g, &mut grads)?;
                batch_loss += loss;
            }
            epoch_loss += batch_loss;
            seen += batch.len();
            step_losses.push(batch_loss * scale);
            adam_step(
                &mut net.params_mut().tensors_mut(),
                &grads.tensors(),
                &mut adam,
                &cfg.adam,
            )?;
            if cfg.max_steps.is_some_and(|max| step_losses.len() >= max) {
                stop = true;
                break;
            }
        }
        let train_mae = epoch_loss / seen as f64;
        let val_mae = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_mae(&net, val_set)?)
        };
        history.push(EpochStats {
            epoch,
            train_mae,
            val_mae,
        });
        if let Some(v) = val_mae {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, net.clone()));
            }
        }
        if stop {
            break 'epochs;
        }
    }

    let last_epoch = history.len();
    let (network, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, epoch),
        None => (net, last_epoch),
    };
    Ok(TrainOutcome {
        network,
        best_epoch,
        history,
        step_losses,
    })
}

/// Analytic gradient of the MAE loss at `(x, y)` by backpropagation.
pub fn analytic_gradient(net: &Network, x: &Tensor, y: &Tensor) -> Result<Gradients> {
    let (pred, cache) = net.forward_cached(x)?;
    let (_, g) = mae_loss(&pred, y)?;
    net.backward(&cache, &g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            samples: 600,
            seed: 0,
        }
    }
}

/// Worst coordinate found in one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub per_tensor: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "checked {} coordinates ({} skipped), max relative error {:.3e}",
            self.checked, self.skipped, self.max_rel_error
        );
        let _ = writeln!(out, "tensor,checked,worst_index,analytic,numeric,rel_error");
        for t in &self.per_tensor {
            let _ = writeln!(
                out,
                "{},{},{},{:.9e},{:.9e},{:.3e}",
                t.name, t.checked, t.worst_index, t.analytic, t.numeric, t.rel_error
            );
        }
        out
    }
}

fn loss_at(net: &Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    Ok(mae_loss(&net.forward(x)?, y)?.0)
}

pub fn gradient_check(net: &Network, x: &Tensor, y: &Tensor, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    gradient_check_with(net, x, y, opts, analytic_gradient)
}

/// Compares `analytic` against central differences on a random subset of
/// coordinates that touches every parameter tensor. Coordinates where both
/// gradients are below 1e-12 are skipped.
pub fn gradient_check_with(
    net: &Network,
    x: &Tensor,
    y: &Tensor,
    opts: &GradCheckOptions,
    analytic: impl Fn(&Network, &Tensor, &Tensor) -> Result<Gradients>,
) -> Result<GradCheckReport> {
    let grads = analytic(net, x, y)?;
    let names = net.params().names();
    let total = net.params().num_scalars();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        per_tensor: Vec::new(),
    };

    for (ti, (name, g)) in names.into_iter().zip(grads.tensors()).enumerate() {
        let len = g.len();
        let share = (opts.samples * len).div_ceil(total);
        let quota = share.max(8).min(len);
        let mut worst = TensorCheck {
            name,
            checked: 0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_error: 0.0,
        };
        for idx in index::sample(&mut rng, len, quota) {
            let original = probe.params().tensors()[ti].data()[idx];
            probe.params_mut().tensors_mut()[ti].data_mut()[idx] = original + opts.step;
            let plus = loss_at(&probe, x, y)?;
            probe.params_mut().tensors_mut()[ti].data_mut()[idx] = original - opts.step;
            let minus = loss_at(&probe, x, y)?;
            probe.params_mut().tensors_mut()[ti].data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = g.data()[idx];
            if a.abs() < 1e-12 && numeric.abs() < 1e-12 {
                report.skipped += 1;
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            worst.checked += 1;
            if rel >= worst.rel_error {
                worst.worst_index = idx;
                worst.analytic = a;
                worst.numeric = numeric;
                worst.rel_error = rel;
            }
        }
        report.checked += worst.checked;
        report.max_rel_error = report.max_rel_error.max(worst.rel_error);
        report.per_tensor.push(worst);
    }
    Ok(report)
}
