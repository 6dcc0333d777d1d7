//! Mini-batch Adam training with dev-set early stopping, and RMSE evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::CollectionEmbedding;
use crate::error::{Error, Result};
use crate::model::{
    backward_from_trace, forward, init_params, loss, ModelConfig, ModelParams, TargetScaler, TaskWeights,
};
use crate::panel::CountryMonthKey;
use crate::seed;

/// One training/evaluation unit: a pseudo-collection and its raw targets
/// `[fci, food_price, social_events]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSample {
    pub embedding: CollectionEmbedding,
    pub targets: [f64; 3],
}

impl PanelSample {
    pub fn key(&self) -> &CountryMonthKey {
        &self.embedding.key
    }

    pub fn fold(&self) -> usize {
        self.embedding.fold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub task_weights: TaskWeights,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Start the fci head bias at the training-target mean.
    pub init_fci_bias_to_mean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            eval_every: 5,
            patience: 10,
            max_steps: 10_000,
            seed: 0,
            task_weights: TaskWeights::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init_fci_bias_to_mean: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 || self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "lr, batch_size, eval_every and patience must be positive".into(),
            ));
        }
        self.task_weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &TrainConfig) {
    let g = grads.to_flat();
    assert_eq!(g.len(), state.m.len(), "gradient and optimizer state disagree");
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut i = 0;
    params.visit_mut(|p| {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g[i];
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        i += 1;
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    MaxSteps,
}

/// Tracks the best dev score; an evaluation counts as progress only on a
/// strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records a score; returns true when it is a new best.
    pub fn observe(&mut self, step: usize, score: f64) -> bool {
        match self.best {
            Some((_, b)) if score >= b => {
                self.since_best += 1;
                false
            }
            _ => {
                self.best = Some((step, score));
                self.since_best = 0;
                true
            }
        }
    }

    pub fn exhausted(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub best_params: ModelParams,
    pub best_step: usize,
    pub best_dev_rmse: f64,
    /// `(step, dev fci RMSE)` at every evaluation.
    pub history: Vec<(usize, f64)>,
    pub stop_reason: StopReason,
    pub steps_run: usize,
    pub scaler: TargetScaler,
    pub task_weights: TaskWeights,
}

impl TrainReport {
    /// `step,dev_rmse_fci` log.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("step,dev_rmse_fci\n");
        for (s, r) in &self.history {
            out.push_str(&format!("{s},{r}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub rmse_fci: f64,
    pub per_country: BTreeMap<String, f64>,
    /// In z-scored units.
    pub rmse_price: f64,
    /// In z-scored units.
    pub rmse_social: f64,
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        return f64::NAN;
    }
    (sum / n as f64).sqrt()
}

/// Predictions for every sample, in input order.
pub fn predict(params: &ModelParams, data: &[PanelSample]) -> Result<Vec<[f64; 3]>> {
    data.par_iter()
        .map(|s| forward(&s.embedding, params).map(|t| t.preds))
        .collect()
}

pub fn evaluate(params: &ModelParams, scaler: &TargetScaler, data: &[PanelSample]) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation set".into()));
    }
    let preds = predict(params, data)?;
    let mut by_country: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (s, p) in data.iter().zip(&preds) {
        by_country
            .entry(s.key().country.clone())
            .or_default()
            .push(p[0] - s.targets[0]);
    }
    let scaled: Vec<[f64; 3]> = data.iter().map(|s| scaler.scale(&s.targets)).collect();
    Ok(EvalReport {
        n: data.len(),
        rmse_fci: rmse(data.iter().zip(&preds).map(|(s, p)| p[0] - s.targets[0])),
        per_country: by_country.into_iter().map(|(c, e)| (c, rmse(e))).collect(),
        rmse_price: rmse(preds.iter().zip(&scaled).map(|(p, t)| p[1] - t[1])),
        rmse_social: rmse(preds.iter().zip(&scaled).map(|(p, t)| p[2] - t[2])),
    })
}

fn dev_rmse(params: &ModelParams, dev: &[PanelSample]) -> Result<f64> {
    let preds = predict(params, dev)?;
    Ok(rmse(dev.iter().zip(&preds).map(|(s, p)| p[0] - s.targets[0])))
}

/// Mean loss and gradient over a batch; per-sample gradients are reduced in
/// batch order so the result does not depend on thread scheduling.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[(&CollectionEmbedding, [f64; 3])],
    weights: &TaskWeights,
) -> Result<(f64, ModelParams)> {
    let per_sample = batch
        .par_iter()
        .map(|(e, y)| {
            let trace = forward(e, params)?;
            let pred_grad = std::array::from_fn(|j| 2.0 * weights.0[j] * (trace.preds[j] - y[j]));
            let l = loss(&trace.preds, y, weights);
            Ok((l, backward_from_trace(params, &e.data, &trace, &pred_grad)))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = ModelParams::zeros(params.config);
    let mut total_loss = 0.0;
    for (l, g) in &per_sample {
        total_loss += l;
        total.add_scaled(g, scale);
    }
    Ok((total_loss * scale, total))
}

pub fn train(
    train_set: &[PanelSample],
    dev_set: &[PanelSample],
    model: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if dev_set.is_empty() {
        return Err(Error::EmptyDataset("dev set".into()));
    }
    if let Some(s) = train_set.iter().chain(dev_set).find(|s| s.embedding.dim != model.d) {
        return Err(Error::Shape(format!(
            "sample {} has dim {}, model expects {}",
            s.key(),
            s.embedding.dim,
            model.d
        )));
    }

    let scaler = TargetScaler::fit(train_set.iter().map(|s| &s.targets));
    let scaled: Vec<[f64; 3]> = train_set.iter().map(|s| scaler.scale(&s.targets)).collect();

    let mut params = init_params(model, cfg.seed)?;
    if cfg.init_fci_bias_to_mean {
        params.heads[0].bias = scaled.iter().map(|t| t[0]).sum::<f64>() / scaled.len() as f64;
    }
    let mut adam = AdamState::new(params.num_values());
    let mut shuffle_rng = seed::rng(cfg.seed, "shuffle", &[]);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut step = 0;
    let mut stop_reason = StopReason::MaxSteps;

    'outer: while step < cfg.max_steps {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&CollectionEmbedding, [f64; 3])> =
                chunk.iter().map(|&i| (&train_set[i].embedding, scaled[i])).collect();
            let (batch_loss, grads) = batch_gradient(&params, &batch, &cfg.task_weights)?;
            step += 1;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged(step));
            }
            adam_step(&mut params, &grads, &mut adam, cfg);
            if !params.is_finite() {
                return Err(Error::Diverged(step));
            }

            if step % cfg.eval_every == 0 {
                let r = dev_rmse(&params, dev_set)?;
                if !r.is_finite() {
                    return Err(Error::Diverged(step));
                }
                history.push((step, r));
                if stopper.observe(step, r) {
                    best_params = params.clone();
                }
                log::debug!("step {step}: dev fci rmse {r:.5}");
                if stopper.exhausted() {
                    stop_reason = StopReason::Patience;
                    break 'outer;
                }
            }
            if step >= cfg.max_steps {
                break 'outer;
            }
        }
    }

    if history.is_empty() {
        let r = dev_rmse(&params, dev_set)?;
        history.push((step, r));
        stopper.observe(step, r);
        best_params = params.clone();
    }
    let (best_step, best_dev_rmse) = stopper.best().expect("at least one evaluation");
    Ok(TrainReport {
        best_params,
        best_step,
        best_dev_rmse,
        history,
        stop_reason,
        steps_run: step,
        scaler,
        task_weights: cfg.task_weights,
    })
}
