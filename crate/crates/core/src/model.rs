//! Multi-task attention regression network.
//!
//! For a collection of `m` pseudo-article embeddings `h_i`:
//!
//! ```text
//! z_i   = tanh(W h_i + b)          (shared layer; z_i = h_i when disabled)
//! s_i   = z_i . a + c              (attention score)
//! w     = softmax(s)  or  w = s    (normalized / raw attention)
//! h_A   = sum_i w_i z_i
//! y_j   = u_j . h_A + v_j          (one linear head per task)
//! ```
//!
//! The loss is `sum_j lambda_j (y_j - t_j)^2`; [`backward`] returns its exact
//! gradient by reverse accumulation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::CollectionEmbedding;
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_to_string, Meta};
use crate::seed;

pub const TASKS: [&str; 3] = ["fci", "price", "social"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    #[default]
    Softmax,
    Raw,
}

impl std::str::FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(AttentionMode::Softmax),
            "raw" => Ok(AttentionMode::Raw),
            other => Err(Error::InvalidArgument(format!(
                "attention mode {other:?} (expected softmax or raw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input embedding width.
    pub d: usize,
    /// Shared-layer width; equals `d` when `shared` is false.
    pub hidden: usize,
    pub shared: bool,
    pub attention: AttentionMode,
}

impl ModelConfig {
    /// `hidden` is forced to `d` when the shared layer is disabled.
    pub fn new(d: usize, hidden: usize, shared: bool, attention: AttentionMode) -> Self {
        ModelConfig {
            d,
            hidden: if shared { hidden } else { d },
            shared,
            attention,
        }
    }

    /// Width of the pooled representation.
    pub fn width(&self) -> usize {
        if self.shared {
            self.hidden
        } else {
            self.d
        }
    }
}

/// Per-task loss weights, in [`TASKS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights(pub [f64; 3]);

impl Default for TaskWeights {
    fn default() -> Self {
        TaskWeights([1.0, 1.0, 1.0])
    }
}

impl TaskWeights {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        let tw = TaskWeights(w);
        tw.validate()?;
        Ok(tw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "task weights {:?} must be finite and >= 0",
                self.0
            )));
        }
        if self.0.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidArgument("task weights are all zero".into()));
        }
        Ok(())
    }

    /// Column name used in result tables for this task mask.
    pub fn variant_name(&self) -> String {
        let on = self.0.map(|w| w > 0.0);
        match on {
            [true, false, false] => "Single Task (Food Crisis)".into(),
            [true, true, false] => "Double-task with Food Price".into(),
            [true, false, true] => "Double-task with Social Insecurity".into(),
            [true, true, true] => "Triple-task".into(),
            _ => format!("Tasks {},{},{}", self.0[0], self.0[1], self.0[2]),
        }
    }
}

impl std::str::FromStr for TaskWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "task weights {s:?} must be three comma-separated numbers"
            )));
        }
        let mut w = [0.0; 3];
        for (slot, p) in w.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad task weight {p:?}")))?;
        }
        TaskWeights::new(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedLayer {
    /// `hidden x d`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// Network parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub shared: Option<SharedLayer>,
    pub attn_a: Vec<f64>,
    pub attn_b: f64,
    pub heads: [Head; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `m x width` shared representations, row-major.
    pub z: Vec<f64>,
    pub raw_scores: Vec<f64>,
    pub attn_w: Vec<f64>,
    pub pooled: Vec<f64>,
    pub preds: [f64; 3],
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        let w = config.width();
        ModelParams {
            config,
            shared: config.shared.then(|| SharedLayer {
                weight: vec![0.0; config.hidden * config.d],
                bias: vec![0.0; config.hidden],
            }),
            attn_a: vec![0.0; w],
            attn_b: 0.0,
            heads: std::array::from_fn(|_| Head {
                weight: vec![0.0; w],
                bias: 0.0,
            }),
        }
    }

    pub fn num_values(&self) -> usize {
        let mut n = 0;
        self.visit(|_| n += 1);
        n
    }

    /// Visits every scalar in a fixed canonical order.
    pub fn visit(&self, mut f: impl FnMut(f64)) {
        if let Some(s) = &self.shared {
            s.weight.iter().chain(&s.bias).for_each(|&v| f(v));
        }
        self.attn_a.iter().for_each(|&v| f(v));
        f(self.attn_b);
        for h in &self.heads {
            h.weight.iter().for_each(|&v| f(v));
            f(h.bias);
        }
    }

    /// Mutable counterpart of [`ModelParams::visit`], same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        if let Some(s) = &mut self.shared {
            s.weight.iter_mut().chain(s.bias.iter_mut()).for_each(&mut f);
        }
        self.attn_a.iter_mut().for_each(&mut f);
        f(&mut self.attn_b);
        for h in &mut self.heads {
            h.weight.iter_mut().for_each(&mut f);
            f(&mut h.bias);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        self.visit(|v| out.push(v));
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        self.visit_mut(|v| *v = *it.next().expect("flat vector too short"));
        assert!(it.next().is_none(), "flat vector too long");
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let o = other.to_flat();
        let mut it = o.iter();
        self.visit_mut(|v| *v += scale * it.next().expect("same shape"));
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|v| ok &= v.is_finite());
        ok
    }

    fn check_shapes(&self) -> Result<()> {
        let c = self.config;
        let w = c.width();
        let shared_ok = match (&self.shared, c.shared) {
            (Some(s), true) => s.weight.len() == c.hidden * c.d && s.bias.len() == c.hidden,
            (None, false) => true,
            _ => false,
        };
        if !shared_ok || self.attn_a.len() != w || self.heads.iter().any(|h| h.weight.len() != w) {
            return Err(Error::Shape("parameter shapes disagree with model config".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    if config.d == 0 || (config.shared && config.hidden == 0) {
        return Err(Error::InvalidArgument("d and d_h must be >= 1".into()));
    }
    let mut rng = seed::rng(seed, "init", &[]);
    let mut p = ModelParams::zeros(config);
    let w = config.width();
    let mut fill = |xs: &mut [f64], fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        xs.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
    };
    if let Some(s) = &mut p.shared {
        fill(&mut s.weight, config.d, config.hidden);
    }
    fill(&mut p.attn_a, w, 1);
    for h in &mut p.heads {
        fill(&mut h.weight, w, 1);
    }
    Ok(p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass over `data`, an `m x d` row-major matrix.
pub fn forward_rows(p: &ModelParams, data: &[f64], d: usize) -> Result<ForwardTrace> {
    p.check_shapes()?;
    let c = p.config;
    if d != c.d {
        return Err(Error::Shape(format!("embedding dim {d}, model expects {}", c.d)));
    }
    if data.is_empty() || !data.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("{} values are not rows of width {d}", data.len())));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("collection embedding".into()));
    }
    let m = data.len() / d;
    let w = c.width();

    let z = match &p.shared {
        Some(s) => {
            let mut z = vec![0.0; m * w];
            for (h, zi) in data.chunks_exact(d).zip(z.chunks_exact_mut(w)) {
                for (k, zk) in zi.iter_mut().enumerate() {
                    *zk = (dot(&s.weight[k * d..(k + 1) * d], h) + s.bias[k]).tanh();
                }
            }
            z
        }
        None => data.to_vec(),
    };

    let raw_scores: Vec<f64> = z.chunks_exact(w).map(|zi| dot(zi, &p.attn_a) + p.attn_b).collect();
    let attn_w = match c.attention {
        AttentionMode::Softmax => {
            let max = raw_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = raw_scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        }
        AttentionMode::Raw => raw_scores.clone(),
    };

    let mut pooled = vec![0.0; w];
    for (zi, &wi) in z.chunks_exact(w).zip(&attn_w) {
        for (acc, &v) in pooled.iter_mut().zip(zi) {
            *acc += wi * v;
        }
    }
    let preds = std::array::from_fn(|j| dot(&p.heads[j].weight, &pooled) + p.heads[j].bias);
    Ok(ForwardTrace {
        z,
        raw_scores,
        attn_w,
        pooled,
        preds,
    })
}

pub fn forward(e: &CollectionEmbedding, p: &ModelParams) -> Result<ForwardTrace> {
    forward_rows(p, &e.data, e.dim)
}

pub fn loss(preds: &[f64; 3], labels: &[f64; 3], weights: &TaskWeights) -> f64 {
    (0..3).map(|j| weights.0[j] * (preds[j] - labels[j]).powi(2)).sum()
}

/// Gradient of a scalar objective given its derivative `pred_grad` with
/// respect to the three predictions.
pub fn backward_from_trace(
    p: &ModelParams,
    data: &[f64],
    trace: &ForwardTrace,
    pred_grad: &[f64; 3],
) -> ModelParams {
    let c = p.config;
    let d = c.d;
    let w = c.width();
    let mut g = ModelParams::zeros(c);

    let mut d_pooled = vec![0.0; w];
    for (j, head) in p.heads.iter().enumerate() {
        let gj = pred_grad[j];
        g.heads[j].bias = gj;
        for (k, (gw, &hk)) in g.heads[j].weight.iter_mut().zip(&trace.pooled).enumerate() {
            *gw = gj * hk;
            d_pooled[k] += gj * head.weight[k];
        }
    }

    // d loss / d attn_w_i
    let d_attn: Vec<f64> = trace.z.chunks_exact(w).map(|zi| dot(zi, &d_pooled)).collect();
    let d_scores: Vec<f64> = match c.attention {
        AttentionMode::Softmax => {
            let mean = dot(&trace.attn_w, &d_attn);
            trace
                .attn_w
                .iter()
                .zip(&d_attn)
                .map(|(wi, di)| wi * (di - mean))
                .collect()
        }
        AttentionMode::Raw => d_attn,
    };

    g.attn_b = d_scores.iter().sum();
    let mut dz = vec![0.0; w];
    for (i, zi) in trace.z.chunks_exact(w).enumerate() {
        let ds = d_scores[i];
        let wi = trace.attn_w[i];
        for k in 0..w {
            g.attn_a[k] += ds * zi[k];
            dz[k] = wi * d_pooled[k] + ds * p.attn_a[k];
        }
        if let Some(gs) = &mut g.shared {
            let h = &data[i * d..(i + 1) * d];
            for k in 0..w {
                let du = dz[k] * (1.0 - zi[k] * zi[k]);
                gs.bias[k] += du;
                for (gw, &hv) in gs.weight[k * d..(k + 1) * d].iter_mut().zip(h) {
                    *gw += du * hv;
                }
            }
        }
    }
    g
}

/// Per-sample loss and its gradient.
pub fn backward(
    e: &CollectionEmbedding,
    p: &ModelParams,
    labels: &[f64; 3],
    weights: &TaskWeights,
) -> Result<(f64, ModelParams)> {
    let trace = forward(e, p)?;
    let pred_grad = std::array::from_fn(|j| 2.0 * weights.0[j] * (trace.preds[j] - labels[j]));
    let l = loss(&trace.preds, labels, weights);
    Ok((l, backward_from_trace(p, &e.data, &trace, &pred_grad)))
}

/// Mean and standard deviation used to z-score one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0 };

    /// Fits on `values`; a zero spread falls back to unit scale.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::IDENTITY;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * self.std + self.mean
    }
}

/// Scaling of the price and social targets; fci stays in index units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub price: Standardizer,
    pub social: Standardizer,
}

impl Default for TargetScaler {
    fn default() -> Self {
        TargetScaler {
            price: Standardizer::IDENTITY,
            social: Standardizer::IDENTITY,
        }
    }
}

impl TargetScaler {
    pub fn fit<'a>(targets: impl IntoIterator<Item = &'a [f64; 3]>) -> Self {
        let t: Vec<&[f64; 3]> = targets.into_iter().collect();
        TargetScaler {
            price: Standardizer::fit(t.iter().map(|x| x[1])),
            social: Standardizer::fit(t.iter().map(|x| x[2])),
        }
    }

    pub fn scale(&self, raw: &[f64; 3]) -> [f64; 3] {
        [raw[0], self.price.apply(raw[1]), self.social.apply(raw[2])]
    }

    pub fn unscale(&self, scaled: &[f64; 3]) -> [f64; 3] {
        [scaled[0], self.price.invert(scaled[1]), self.social.invert(scaled[2])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadJson {
    w: Vec<f64>,
    b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamsJson {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    shared_w: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    shared_b: Option<Vec<f64>>,
    attn_a: Vec<f64>,
    attn_b: f64,
    heads: std::collections::BTreeMap<String, HeadJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScalerJson {
    price: [f64; 2],
    social: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointJson {
    version: u32,
    d: usize,
    d_h: usize,
    shared: bool,
    #[serde(default)]
    attention: AttentionMode,
    params: ParamsJson,
    target_scaler: ScalerJson,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    task_weights: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    meta: Option<Meta>,
}

/// A trained model with everything needed to score new collections.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub scaler: TargetScaler,
    pub task_weights: Option<TaskWeights>,
    pub meta: Option<Meta>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let c = p.config;
        let heads = TASKS
            .iter()
            .zip(&p.heads)
            .map(|(name, h)| {
                (
                    name.to_string(),
                    HeadJson {
                        w: h.weight.clone(),
                        b: h.bias,
                    },
                )
            })
            .collect();
        let json = CheckpointJson {
            version: 1,
            d: c.d,
            d_h: c.width(),
            shared: c.shared,
            attention: c.attention,
            params: ParamsJson {
                shared_w: p
                    .shared
                    .as_ref()
                    .map(|s| s.weight.chunks(c.d).map(|r| r.to_vec()).collect()),
                shared_b: p.shared.as_ref().map(|s| s.bias.clone()),
                attn_a: p.attn_a.clone(),
                attn_b: p.attn_b,
                heads,
            },
            target_scaler: ScalerJson {
                price: [self.scaler.price.mean, self.scaler.price.std],
                social: [self.scaler.social.mean, self.scaler.social.std],
            },
            task_weights: self.task_weights.map(|t| t.0),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: CheckpointJson = serde_json::from_str(text)?;
        if j.version != 1 {
            return Err(Error::Validation(format!("unsupported checkpoint version {}", j.version)));
        }
        let config = ModelConfig::new(j.d, j.d_h, j.shared, j.attention);
        let shared = match (j.shared, j.params.shared_w, j.params.shared_b) {
            (true, Some(w), Some(b)) => Some(SharedLayer {
                weight: w.concat(),
                bias: b,
            }),
            (false, None, None) => None,
            _ => return Err(Error::Validation("shared layer fields disagree with 'shared'".into())),
        };
        let mut heads_map = j.params.heads;
        let mut take = |name: &str| -> Result<Head> {
            let h = heads_map
                .remove(name)
                .ok_or_else(|| Error::Validation(format!("missing head {name}")))?;
            Ok(Head { weight: h.w, bias: h.b })
        };
        let heads = [take("fci")?, take("price")?, take("social")?];
        let params = ModelParams {
            config,
            shared,
            attn_a: j.params.attn_a,
            attn_b: j.params.attn_b,
            heads,
        };
        params.check_shapes()?;
        if !params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        let s = j.target_scaler;
        Ok(Checkpoint {
            params,
            scaler: TargetScaler {
                price: Standardizer {
                    mean: s.price[0],
                    std: s.price[1],
                },
                social: Standardizer {
                    mean: s.social[0],
                    std: s.social[1],
                },
            },
            task_weights: j.task_weights.map(TaskWeights),
            meta: j.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CountryMonthKey, Month};
    use proptest::prelude::*;
    use rand::Rng;

    fn emb(rows: &[Vec<f64>]) -> CollectionEmbedding {
        CollectionEmbedding::new(
            CountryMonthKey::new("ML", Month::new(2019, 1).unwrap()),
            0,
            rows[0].len(),
            rows.concat(),
        )
        .unwrap()
    }

    fn random_instance(seed: u64, d: usize, hidden: usize, m: usize, shared: bool, mode: AttentionMode)
        -> (ModelParams, CollectionEmbedding, [f64; 3])
    {
        let cfg = ModelConfig::new(d, hidden, shared, mode);
        let mut p = init_params(cfg, seed).unwrap();
        let mut rng = seed::simple(seed ^ 0x5eed);
        // non-zero biases so every path is exercised
        p.visit_mut(|v| *v += rng.gen_range(-0.3..0.3));
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let labels = [rng.gen_range(1.0..5.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        (p, emb(&rows), labels)
    }

    /// Central-difference gradient of the per-sample loss.
    fn numeric_grad(p: &ModelParams, e: &CollectionEmbedding, y: &[f64; 3], tw: &TaskWeights, h: f64) -> Vec<f64> {
        let base = p.to_flat();
        let mut q = p.clone();
        (0..base.len())
            .map(|i| {
                let mut v = base.clone();
                v[i] = base[i] + h;
                q.set_flat(&v);
                let lp = loss(&forward(e, &q).unwrap().preds, y, tw);
                v[i] = base[i] - h;
                q.set_flat(&v);
                let lm = loss(&forward(e, &q).unwrap().preds, y, tw);
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-4))
            .fold(0.0, f64::max)
    }

    #[test]
    fn singleton_softmax() {
        let cfg = ModelConfig::new(3, 3, false, AttentionMode::Softmax);
        let p = init_params(cfg, 1).unwrap();
        let e = emb(&[vec![0.3, -0.2, 0.9]]);
        let t = forward(&e, &p).unwrap();
        assert_eq!(t.attn_w, vec![1.0]);
        assert_eq!(t.pooled, vec![0.3, -0.2, 0.9]);
    }

    #[test]
    fn zero_embeddings_give_bias() {
        let cfg = ModelConfig::new(2, 2, false, AttentionMode::Softmax);
        let mut p = init_params(cfg, 3).unwrap();
        p.heads[0].bias = 2.5;
        p.heads[1].bias = -1.0;
        p.heads[2].bias = 0.25;
        let t = forward(&emb(&[vec![0.0, 0.0], vec![0.0, 0.0]]), &p).unwrap();
        assert_eq!(t.preds, [2.5, -1.0, 0.25]);
    }

    #[test]
    fn hand_computed_forward() {
        let cfg = ModelConfig::new(2, 2, false, AttentionMode::Softmax);
        let mut p = ModelParams::zeros(cfg);
        p.attn_a = vec![1.0, 0.0];
        for h in &mut p.heads {
            h.weight = vec![1.0, 1.0];
        }
        let t = forward(&emb(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &p).unwrap();
        let e = std::f64::consts::E;
        let w0 = e / (e + 1.0);
        let w1 = 1.0 / (e + 1.0);
        assert!((t.attn_w[0] - w0).abs() < 1e-15 && (t.attn_w[1] - w1).abs() < 1e-15);
        assert!((t.pooled[0] - w0).abs() < 1e-15 && (t.pooled[1] - w1).abs() < 1e-15);
        assert!((t.preds[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_errors() {
        let cfg = ModelConfig::new(2, 2, true, AttentionMode::Softmax);
        let p = init_params(cfg, 3).unwrap();
        assert!(matches!(forward(&emb(&[vec![0.0, 0.0, 1.0]]), &p), Err(Error::Shape(_))));
        assert!(matches!(forward(&emb(&[vec![f64::NAN, 0.0]]), &p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn loss_examples() {
        let tw = TaskWeights::default();
        assert_eq!(loss(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &tw), 0.0);
        assert_eq!(loss(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &tw), 1.0);
        assert_eq!(loss(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &tw), 14.0);
    }

    #[test]
    fn stationary_heads_at_exact_fit() {
        let (p, e, _) = random_instance(5, 3, 2, 4, true, AttentionMode::Softmax);
        let y = forward(&e, &p).unwrap().preds;
        let (l, g) = backward(&e, &p, &y, &TaskWeights::default()).unwrap();
        assert_eq!(l, 0.0);
        for h in &g.heads {
            assert!(h.weight.iter().all(|&v| v == 0.0));
            assert_eq!(h.bias, 0.0);
        }
    }

    #[test]
    fn masked_tasks_have_zero_head_grads() {
        let (p, e, y) = random_instance(6, 3, 2, 4, true, AttentionMode::Softmax);
        let (_, g) = backward(&e, &p, &y, &TaskWeights([1.0, 0.0, 0.0])).unwrap();
        for h in &g.heads[1..] {
            assert!(h.weight.iter().all(|&v| v == 0.0));
            assert_eq!(h.bias, 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_seed7() {
        let (p, e, y) = random_instance(7, 3, 2, 4, true, AttentionMode::Softmax);
        let tw = TaskWeights::default();
        let (_, g) = backward(&e, &p, &y, &tw).unwrap();
        let num = numeric_grad(&p, &e, &y, &tw, 1e-5);
        let err = max_rel_err(&g.to_flat(), &num);
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = ModelConfig::new(10, 6, true, AttentionMode::Softmax);
        let a = init_params(cfg, 42).unwrap();
        assert_eq!(a, init_params(cfg, 42).unwrap());
        assert_ne!(a, init_params(cfg, 43).unwrap());
        let s = a.shared.as_ref().unwrap();
        assert!(s.bias.iter().all(|&b| b == 0.0));
        assert_eq!(a.attn_b, 0.0);
        assert!(a.heads.iter().all(|h| h.bias == 0.0));
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(s.weight.iter().all(|w| w.abs() <= limit));
    }

    #[test]
    fn init_variance_matches_glorot() {
        // Uniform(-L, L) has variance L^2 / 3 with L^2 = 6 / (d + d_h).
        let cfg = ModelConfig::new(100, 100, true, AttentionMode::Softmax);
        let mut all = Vec::new();
        for seed in 0..10 {
            all.extend(init_params(cfg, seed).unwrap().shared.unwrap().weight);
        }
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let expected = 6.0 / 200.0 / 3.0;
        assert!((var - expected).abs() / expected < 0.1, "var {var} vs {expected}");
    }

    #[test]
    fn checkpoint_round_trip() {
        for shared in [true, false] {
            let (p, _, _) = random_instance(9, 4, 3, 2, shared, AttentionMode::Raw);
            let ck = Checkpoint {
                params: p,
                scaler: TargetScaler {
                    price: Standardizer { mean: 100.0, std: 12.5 },
                    social: Standardizer { mean: 9.0, std: 3.0 },
                },
                task_weights: Some(TaskWeights([1.0, 0.0, 1.0])),
                meta: Some(Meta::new("abc", 7)),
            };
            let text = ck.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["version"], 1);
            assert_eq!(v["shared"], shared);
            assert_eq!(Checkpoint::from_json(&text).unwrap(), ck);
        }
    }

    #[test]
    fn task_weight_parsing() {
        assert_eq!("1,0,0".parse::<TaskWeights>().unwrap().0, [1.0, 0.0, 0.0]);
        assert!("0,0,0".parse::<TaskWeights>().is_err());
        assert!("1,2".parse::<TaskWeights>().is_err());
        assert!("1,-1,0".parse::<TaskWeights>().is_err());
        assert_eq!(TaskWeights([1.0, 1.0, 1.0]).variant_name(), "Triple-task");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn softmax_shift_invariance(seed in 0u64..1000, shift in -5.0f64..5.0, shared in any::<bool>()) {
            let (p, e, _) = random_instance(seed, 4, 3, 5, shared, AttentionMode::Softmax);
            let mut q = p.clone();
            q.attn_b += shift;
            let a = forward(&e, &p).unwrap();
            let b = forward(&e, &q).unwrap();
            for (x, y) in a.attn_w.iter().zip(&b.attn_w) {
                prop_assert!((x - y).abs() <= 1e-14);
            }
            for (x, y) in a.preds.iter().zip(&b.preds) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..1000, shared in any::<bool>(), raw in any::<bool>()) {
            let mode = if raw { AttentionMode::Raw } else { AttentionMode::Softmax };
            let (p, e, _) = random_instance(seed, 3, 4, 5, shared, mode);
            let perm = [3usize, 0, 4, 1, 2];
            let rows: Vec<Vec<f64>> = perm.iter().map(|&i| e.row(i).to_vec()).collect();
            let ep = emb(&rows);
            let a = forward(&e, &p).unwrap();
            let b = forward(&ep, &p).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((b.attn_w[k] - a.attn_w[i]).abs() <= 1e-14);
            }
            for (x, y) in a.preds.iter().zip(&b.preds) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn fci_independent_of_other_heads(seed in 0u64..1000, delta in -2.0f64..2.0) {
            let (p, e, _) = random_instance(seed, 3, 2, 4, true, AttentionMode::Softmax);
            let mut q = p.clone();
            q.heads[1].weight.iter_mut().for_each(|w| *w += delta);
            q.heads[1].bias += delta;
            q.heads[2].bias -= delta;
            prop_assert_eq!(forward(&e, &p).unwrap().preds[0].to_bits(), forward(&e, &q).unwrap().preds[0].to_bits());
        }

        #[test]
        fn gradient_check_random(seed in 0u64..10_000, d in 1usize..6, hidden in 1usize..5, m in 1usize..6,
                                 shared in any::<bool>(), raw in any::<bool>()) {
            let mode = if raw { AttentionMode::Raw } else { AttentionMode::Softmax };
            let (p, e, y) = random_instance(seed, d, hidden, m, shared, mode);
            let tw = TaskWeights([1.0, 0.5, 2.0]);
            let (_, g) = backward(&e, &p, &y, &tw).unwrap();
            let num = numeric_grad(&p, &e, &y, &tw, 1e-5);
            let err = max_rel_err(&g.to_flat(), &num);
            prop_assert!(err <= 1e-5, "max relative error {}", err);
        }
    }
}
