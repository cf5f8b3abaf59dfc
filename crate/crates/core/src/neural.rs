//! Residual successor-representation network.
//!
//! Each token is embedded, passed through a shared trunk of pre-norm residual
//! blocks and then through one head per discount: further residual blocks and
//! a projection to vocabulary logits. Positions never interact, so a window
//! of `L` tokens is just `L` independent rows.
//!
//! Training minimizes `KL(G || softmax(logits))` against normalized λ-return
//! targets whose bootstrap rows come from an EMA shadow of the parameters.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedCorpus, TokenId};
use crate::error::{Error, Result};
use crate::matfile::{self, Dtype, MatrixContainer};
use crate::rng::rng_for;
use crate::sr::{lambda_return_targets, TargetScale};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub trunk_blocks: usize,
    /// Layers per head, counting the output projection as the last one.
    pub head_blocks: usize,
    pub gammas: Vec<f64>,
    pub window_len: usize,
    pub lambda: f64,
    pub ema_alpha: f64,
    pub lr: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 20_000,
            hidden: 512,
            trunk_blocks: 8,
            head_blocks: 8,
            gammas: vec![0.2, 0.5, 0.8],
            window_len: 80,
            lambda: 0.9,
            ema_alpha: 0.999,
            lr: 1e-4,
            lr_min: 1e-6,
            warmup_steps: 1000,
            weight_decay: 1e-5,
            batch_size: 160,
            epochs: 10,
            grad_clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParamOutOfRange(msg));
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("trunk_blocks", self.trunk_blocks),
            ("head_blocks", self.head_blocks),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.window_len < 2 {
            return bad("window_len must be >= 2".into());
        }
        if self.gammas.is_empty() {
            return bad("at least one gamma is required".into());
        }
        for (i, g) in self.gammas.iter().enumerate() {
            if !(0.0..1.0).contains(g) {
                return Err(Error::DiscountOutOfRange(*g));
            }
            if self.gammas[..i].contains(g) {
                return bad(format!("duplicate gamma {g}"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} not in [0, 1]", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return bad(format!("ema_alpha {} not in [0, 1]", self.ema_alpha));
        }
        if !(self.lr >= 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return bad("need 0 <= lr_min <= lr".into());
        }
        if !(self.weight_decay >= 0.0 && self.grad_clip_norm > 0.0) {
            return bad("weight_decay must be >= 0 and grad_clip_norm > 0".into());
        }
        Ok(())
    }

    /// Optimizer steps in the whole run; the last batch of an epoch may be
    /// partial.
    pub fn planned_steps(&self, windows: usize) -> u64 {
        (self.epochs * windows.div_ceil(self.batch_size)) as u64
    }
}

/// Linear warm-up from 0 to `lr`, then cosine decay to `lr_min` at
/// `total_steps`.
pub fn lr_schedule(step: u64, config: &ModelConfig, total_steps: u64) -> f64 {
    let warmup = config.warmup_steps;
    if step < warmup {
        return config.lr * step as f64 / warmup as f64;
    }
    if step >= total_steps || total_steps <= warmup {
        return if step >= total_steps {
            config.lr_min
        } else {
            config.lr
        };
    }
    let progress = (step - warmup) as f64 / (total_steps - warmup) as f64;
    config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln_gain: Array2<f64>,
    pub ln_bias: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub blocks: Vec<BlockParams>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
}

/// Every learnable tensor. Vectors are stored as `1 × n` rows so that all
/// tensors share one type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub embedding: Array2<f64>,
    pub trunk: Vec<BlockParams>,
    pub heads: Vec<HeadParams>,
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl BlockParams {
    fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        BlockParams {
            ln_gain: Array2::ones((1, d)),
            ln_bias: Array2::zeros((1, d)),
            w1: uniform(d, d, d, rng),
            b1: uniform(1, d, d, rng),
            w2: uniform(d, d, d, rng),
            b2: uniform(1, d, d, rng),
        }
    }

    fn tensors(&self) -> [&Array2<f64>; 6] {
        [&self.ln_gain, &self.ln_bias, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 6] {
        [
            &mut self.ln_gain,
            &mut self.ln_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

const BLOCK_TENSOR_NAMES: [&str; 6] = ["ln_gain", "ln_bias", "w1", "b1", "w2", "b2"];

impl ModelParameters {
    /// Centered uniform initialization scaled by `1/sqrt(fan_in)`; LayerNorm
    /// gain 1 and bias 0.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let (v, d) = (config.vocab_size, config.hidden);
        let embedding = uniform(v, d, d, rng);
        let trunk = (0..config.trunk_blocks).map(|_| BlockParams::init(d, rng)).collect();
        let heads = config
            .gammas
            .iter()
            .map(|_| HeadParams {
                blocks: (0..config.head_blocks - 1)
                    .map(|_| BlockParams::init(d, rng))
                    .collect(),
                w_out: uniform(d, v, d, rng),
                b_out: uniform(1, v, d, rng),
            })
            .collect();
        ModelParameters {
            embedding,
            trunk,
            heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    /// Tensors with stable names, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (b, block) in self.trunk.iter().enumerate() {
            for (n, t) in BLOCK_TENSOR_NAMES.iter().zip(block.tensors()) {
                out.push((format!("trunk.{b}.{n}"), t));
            }
        }
        for (h, head) in self.heads.iter().enumerate() {
            for (b, block) in head.blocks.iter().enumerate() {
                for (n, t) in BLOCK_TENSOR_NAMES.iter().zip(block.tensors()) {
                    out.push((format!("head.{h}.{b}.{n}"), t));
                }
            }
            out.push((format!("head.{h}.w_out"), &head.w_out));
            out.push((format!("head.{h}.b_out"), &head.b_out));
        }
        out
    }

    /// Same order as [`ModelParameters::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.embedding];
        for block in &mut self.trunk {
            out.extend(block.tensors_mut());
        }
        for head in &mut self.heads {
            for block in &mut head.blocks {
                out.extend(block.tensors_mut());
            }
            out.push(&mut head.w_out);
            out.push(&mut head.b_out);
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// `θ_ema ← α θ_ema + (1 − α) θ`.
pub fn ema_update(ema: &mut ModelParameters, params: &ModelParameters, alpha: f64) {
    let src = params.named_tensors();
    for (dst, (_, src)) in ema.tensors_mut().into_iter().zip(src) {
        Zip::from(dst).and(src).for_each(|e, &p| *e = alpha * *e + (1.0 - alpha) * p);
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Intermediates of one residual block, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    normed: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

/// `x + W2 · GELU(W1 · LayerNorm(x) + b1) + b2`, applied to every row of `x`.
pub fn residual_block_forward(
    x: ArrayView2<f64>,
    p: &BlockParams,
) -> Result<(Array2<f64>, BlockCache)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite residual block input".into()));
    }
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = &x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LAYER_NORM_EPS).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let normed = &xhat * &p.ln_gain + &p.ln_bias;
    let pre_act = normed.dot(&p.w1) + &p.b1;
    let act = pre_act.mapv(gelu);
    let out = &x + &act.dot(&p.w2) + &p.b2;
    Ok((
        out,
        BlockCache {
            xhat,
            inv_std,
            normed,
            pre_act,
            act,
        },
    ))
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
fn residual_block_backward(
    dout: &Array2<f64>,
    p: &BlockParams,
    cache: &BlockCache,
    g: &mut BlockParams,
) -> Array2<f64> {
    g.w2 += &cache.act.t().dot(dout);
    g.b2 += &dout.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dpre = dout.dot(&p.w2.t());
    Zip::from(&mut dpre)
        .and(&cache.pre_act)
        .for_each(|d, &h| *d *= gelu_grad(h));
    g.w1 += &cache.normed.t().dot(&dpre);
    g.b1 += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dnormed = dpre.dot(&p.w1.t());
    g.ln_gain += &(&dnormed * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    g.ln_bias += &dnormed.sum_axis(Axis(0)).insert_axis(Axis(0));

    let dxhat = dnormed * &p.ln_gain;
    let d = dxhat.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&mean_dxhat)
        .and(&mean_dxhat_xhat)
        .and(&cache.inv_std)
        .for_each(|mut row, xh, &m1, &m2, &istd| {
            Zip::from(&mut row)
                .and(&xh)
                .for_each(|v, &xhv| *v = istd * (*v - m1 - xhv * m2));
        });
    dx + dout
}

fn check_ids(ids: &[TokenId], vocab_size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::VocabOutOfRange {
            id: id as usize,
            vocab_size,
        }),
        None => Ok(()),
    }
}

struct HeadCache {
    blocks: Vec<BlockCache>,
    features: Array2<f64>,
    logits: Array2<f64>,
}

struct ForwardCache {
    ids: Vec<usize>,
    trunk: Vec<BlockCache>,
    heads: Vec<HeadCache>,
}

fn trunk_forward(
    params: &ModelParameters,
    ids: &[usize],
) -> Result<(Array2<f64>, Vec<BlockCache>)> {
    let mut x = params.embedding.select(Axis(0), ids);
    let mut caches = Vec::with_capacity(params.trunk.len());
    for block in &params.trunk {
        let (out, cache) = residual_block_forward(x.view(), block)?;
        caches.push(cache);
        x = out;
    }
    Ok((x, caches))
}

fn head_forward(head: &HeadParams, trunk_out: &Array2<f64>) -> Result<HeadCache> {
    let mut x = trunk_out.clone();
    let mut blocks = Vec::with_capacity(head.blocks.len());
    for block in &head.blocks {
        let (out, cache) = residual_block_forward(x.view(), block)?;
        blocks.push(cache);
        x = out;
    }
    let logits = x.dot(&head.w_out) + &head.b_out;
    Ok(HeadCache {
        blocks,
        features: x,
        logits,
    })
}

/// Logits for a flat list of token ids, one row per id.
pub fn forward_rows(
    params: &ModelParameters,
    ids: &[TokenId],
    head: usize,
) -> Result<Array2<f64>> {
    check_ids(ids, params.vocab_size())?;
    let head = params
        .heads
        .get(head)
        .ok_or_else(|| Error::ParamOutOfRange(format!("no head {head}")))?;
    let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let (h, _) = trunk_forward(params, &ids)?;
    Ok(head_forward(head, &h)?.logits)
}

/// Logits of shape `batch × L × V` for one head.
pub fn forward(params: &ModelParameters, batch: &[Vec<TokenId>], head: usize) -> Result<Array3<f64>> {
    let len = batch.first().map(Vec::len).unwrap_or(0);
    if batch.iter().any(|w| w.len() != len) {
        return Err(Error::ShapeError("windows have unequal length".into()));
    }
    let flat: Vec<TokenId> = batch.concat();
    let logits = forward_rows(params, &flat, head)?;
    let v = logits.ncols();
    Ok(logits
        .into_shape_with_order((batch.len(), len, v))
        .expect("row count matches batch"))
}

pub fn log_softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    log_softmax_rows(logits).mapv(f64::exp)
}

/// `KL(target || softmax(logits))` and its gradient `softmax(logits) − target`.
pub fn kl_loss(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::ShapeError("logits and target differ in length".into()));
    }
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > 1e-6 || target.iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::InvalidTarget(format!("target sums to {sum}")));
    }
    let view = ArrayView2::from_shape((1, logits.len()), logits).expect("row");
    let logp = log_softmax_rows(view);
    let loss = kl_row(target, logp.row(0).as_slice().expect("contiguous"));
    let grad = logp.iter().zip(target).map(|(lp, g)| lp.exp() - g).collect();
    Ok((loss, grad))
}

fn kl_row(target: &[f64], logp: &[f64]) -> f64 {
    target
        .iter()
        .zip(logp)
        .filter(|(&g, _)| g > 0.0)
        .map(|(&g, &lp)| g * (g.ln() - lp))
        .sum()
}

/// Normalized λ-return targets (`batch × (L−1) × V`) bootstrapped from the
/// softmax of the EMA model's logits.
pub fn compute_targets_for_batch(
    batch: &[Vec<TokenId>],
    ema: &ModelParameters,
    head: usize,
    gamma: f64,
    lambda: f64,
) -> Result<Array3<f64>> {
    let logits = forward(ema, batch, head)?;
    let (b, len, v) = logits.dim();
    if len < 2 {
        return Err(Error::InputTooShort("windows need at least 2 tokens".into()));
    }
    let mut out = Array3::zeros((b, len - 1, v));
    for (i, window) in batch.iter().enumerate() {
        let boot = softmax_rows(logits.index_axis(Axis(0), i));
        let states: Vec<usize> = window.iter().map(|&id| id as usize).collect();
        let g = lambda_return_targets(&states, boot.view(), gamma, lambda, TargetScale::Normalized)?;
        out.index_axis_mut(Axis(0), i).assign(&g.g);
    }
    Ok(out)
}

/// Per-head mean KL over all non-final positions, and the gradient of their
/// sum with respect to every parameter.
pub fn loss_and_gradients(
    params: &ModelParameters,
    batch: &[Vec<TokenId>],
    targets: &[Array3<f64>],
) -> Result<(Vec<f64>, ModelParameters)> {
    let len = batch.first().map(Vec::len).unwrap_or(0);
    if len < 2 || batch.iter().any(|w| w.len() != len) {
        return Err(Error::ShapeError("batch needs equal windows of length >= 2".into()));
    }
    if targets.len() != params.heads.len() {
        return Err(Error::ShapeError("one target tensor per head required".into()));
    }
    let flat: Vec<TokenId> = batch.concat();
    check_ids(&flat, params.vocab_size())?;
    let ids: Vec<usize> = flat.iter().map(|&i| i as usize).collect();
    let (h, trunk_caches) = trunk_forward(params, &ids)?;
    let heads = params
        .heads
        .iter()
        .map(|head| head_forward(head, &h))
        .collect::<Result<Vec<_>>>()?;
    let cache = ForwardCache {
        ids,
        trunk: trunk_caches,
        heads,
    };

    let positions = (batch.len() * (len - 1)) as f64;
    let v = params.vocab_size();
    let mut losses = Vec::with_capacity(targets.len());
    let mut grads = params.zeros_like();
    let mut dh = Array2::<f64>::zeros(h.raw_dim());
    for (k, ((head, hc), target)) in params
        .heads
        .iter()
        .zip(&cache.heads)
        .zip(targets)
        .enumerate()
    {
        if target.dim() != (batch.len(), len - 1, v) {
            return Err(Error::ShapeError(format!("target {k} has shape {:?}", target.dim())));
        }
        let logp = log_softmax_rows(hc.logits.view());
        let mut dlogits = Array2::<f64>::zeros(hc.logits.raw_dim());
        let mut loss = 0.0;
        for (w, window_targets) in target.outer_iter().enumerate() {
            for (t, g) in window_targets.outer_iter().enumerate() {
                let row = w * len + t;
                let lp = logp.row(row);
                loss += kl_row(
                    g.as_slice().expect("contiguous"),
                    lp.as_slice().expect("contiguous"),
                );
                Zip::from(dlogits.row_mut(row))
                    .and(&lp)
                    .and(&g)
                    .for_each(|d, &lp, &g| *d = (lp.exp() - g) / positions);
            }
        }
        losses.push(loss / positions);

        let gh = &mut grads.heads[k];
        gh.w_out += &hc.features.t().dot(&dlogits);
        gh.b_out += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dx = dlogits.dot(&head.w_out.t());
        for ((block, bc), gb) in head
            .blocks
            .iter()
            .zip(&hc.blocks)
            .zip(gh.blocks.iter_mut())
            .rev()
        {
            dx = residual_block_backward(&dx, block, bc, gb);
        }
        dh += &dx;
    }
    let mut dx = dh;
    for ((block, bc), gb) in params
        .trunk
        .iter()
        .zip(&cache.trunk)
        .zip(grads.trunk.iter_mut())
        .rev()
    {
        dx = residual_block_backward(&dx, block, bc, gb);
    }
    for (row, &id) in dx.rows().into_iter().zip(&cache.ids) {
        let mut e = grads.embedding.row_mut(id);
        e += &row;
    }
    Ok((losses, grads))
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelParameters, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub losses: Vec<f64>,
    pub total: f64,
    pub grad_norm: f64,
}

/// Live parameters, EMA shadow and AdamW moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: ModelConfig,
    pub params: ModelParameters,
    pub ema: ModelParameters,
    pub adam_m: ModelParameters,
    pub adam_v: ModelParameters,
    pub step: u64,
    pub total_steps: u64,
}

impl TrainState {
    pub fn new(config: ModelConfig, total_steps: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, "init");
        let params = ModelParameters::init(&config, &mut rng);
        let zeros = params.zeros_like();
        Ok(TrainState {
            config,
            ema: params.clone(),
            adam_m: zeros.clone(),
            adam_v: zeros,
            params,
            step: 0,
            total_steps,
        })
    }

    /// One optimizer step: EMA-bootstrapped targets, summed per-head KL,
    /// global-norm clipping, AdamW at the scheduled rate, then the EMA
    /// update. On a non-finite loss or gradient the state is left untouched.
    pub fn training_step(&mut self, batch: &[Vec<TokenId>]) -> Result<StepReport> {
        let targets = self
            .config
            .gammas
            .iter()
            .enumerate()
            .map(|(k, &g)| compute_targets_for_batch(batch, &self.ema, k, g, self.config.lambda))
            .collect::<Result<Vec<_>>>()?;
        let (losses, mut grads) = loss_and_gradients(&self.params, batch, &targets)?;
        let total: f64 = losses.iter().sum();
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite loss or gradient at step {}",
                self.step
            )));
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.grad_clip_norm);
        let lr = lr_schedule(self.step, &self.config, self.total_steps);
        self.adamw_update(&grads, lr);
        ema_update(&mut self.ema, &self.params, self.config.ema_alpha);
        let report = StepReport {
            step: self.step,
            lr,
            losses,
            total,
            grad_norm,
        };
        self.step += 1;
        Ok(report)
    }

    fn adamw_update(&mut self, grads: &ModelParameters, lr: f64) {
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let wd = self.config.weight_decay;
        let grads = grads.named_tensors();
        for (((p, m), v), (_, g)) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.adam_m.tensors_mut())
            .zip(self.adam_v.tensors_mut())
            .zip(grads)
        {
            Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let update = (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                *p -= lr * (update + wd * *p);
            });
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let preamble = serde_json::json!({
            "format": "srlang-checkpoint",
            "version": 1,
            "config": self.config,
            "step": self.step,
            "total_steps": self.total_steps,
        });
        let mut mats = Vec::new();
        for (prefix, p) in [
            ("param", &self.params),
            ("ema", &self.ema),
            ("adam_m", &self.adam_m),
            ("adam_v", &self.adam_v),
        ] {
            for (name, t) in p.named_tensors() {
                mats.push(MatrixContainer::new(format!("{prefix}/{name}"), t.clone(), Dtype::F64));
            }
        }
        let mut buf = Vec::new();
        matfile::write_bundle(&mut buf, &preamble, &mats).map_err(|e| Error::io(path, e))?;
        matfile::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (preamble, mats) =
            matfile::read_bundle(&mut bytes.as_slice()).map_err(|e| matfile::malformed(path, e))?;
        if preamble["format"] != "srlang-checkpoint" {
            return Err(matfile::malformed(path, "not a checkpoint"));
        }
        let config: ModelConfig = serde_json::from_value(preamble["config"].clone())
            .map_err(|e| matfile::malformed(path, e))?;
        let step = preamble["step"].as_u64().ok_or_else(|| matfile::malformed(path, "no step"))?;
        let total_steps = preamble["total_steps"]
            .as_u64()
            .ok_or_else(|| matfile::malformed(path, "no total_steps"))?;
        let mut state = TrainState::new(config, total_steps)?;
        state.step = step;
        let mut by_name: std::collections::HashMap<String, Array2<f64>> =
            mats.into_iter().map(|m| (m.header.name, m.data)).collect();
        for (prefix, p) in [
            ("param", &mut state.params),
            ("ema", &mut state.ema),
            ("adam_m", &mut state.adam_m),
            ("adam_v", &mut state.adam_v),
        ] {
            let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
            for (name, dst) in names.into_iter().zip(p.tensors_mut()) {
                let key = format!("{prefix}/{name}");
                let src = by_name
                    .remove(&key)
                    .ok_or_else(|| matfile::malformed(path, format!("missing tensor {key}")))?;
                if src.dim() != dst.dim() {
                    return Err(matfile::malformed(path, format!("tensor {key} has wrong shape")));
                }
                *dst = src;
            }
        }
        Ok(state)
    }
}

/// Mean per-head and total loss over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_losses: Vec<f64>,
    pub mean_total: f64,
}

/// Runs the remaining epochs of a schedule. Windows are shuffled per epoch
/// with a seed derived from the config seed and epoch index. `on_step` sees
/// every step report; `on_epoch` runs after each epoch (for checkpointing).
pub fn train<F, G>(
    state: &mut TrainState,
    corpus: &EncodedCorpus,
    mut on_step: F,
    mut on_epoch: G,
) -> Result<Vec<EpochSummary>>
where
    F: FnMut(&StepReport),
    G: FnMut(&TrainState, &EpochSummary) -> Result<()>,
{
    if corpus.window_len != state.config.window_len {
        return Err(Error::ShapeError(format!(
            "corpus windows have length {} but the model expects {}",
            corpus.window_len, state.config.window_len
        )));
    }
    let steps_per_epoch = corpus.len().div_ceil(state.config.batch_size) as u64;
    let first_epoch = (state.step / steps_per_epoch.max(1)) as usize;
    let mut summaries = Vec::new();
    for epoch in first_epoch..state.config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = rng_for(state.config.seed, &format!("shuffle/{epoch}"));
        order.shuffle(&mut rng);
        let mut sums = vec![0.0; state.config.gammas.len()];
        let mut count = 0usize;
        for chunk in order.chunks(state.config.batch_size) {
            let batch: Vec<Vec<TokenId>> = chunk.iter().map(|&i| corpus.windows[i].clone()).collect();
            let report = state.training_step(&batch)?;
            for (s, l) in sums.iter_mut().zip(&report.losses) {
                *s += l;
            }
            count += 1;
            on_step(&report);
        }
        let mean_losses: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        let summary = EpochSummary {
            epoch,
            mean_total: mean_losses.iter().sum(),
            mean_losses,
        };
        on_epoch(state, &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Softmax rows of one head for the given tokens; each row is a probability
/// distribution over the vocabulary. Multiply by `1/(1−γ)` for occupancy.
pub fn extract_sr_table(params: &ModelParameters, head: usize, ids: &[TokenId]) -> Result<Array2<f64>> {
    let logits = forward_rows(params, ids, head)?;
    Ok(softmax_rows(logits.view()))
}

pub fn rescale_to_occupancy(rows: &Array2<f64>, gamma: f64) -> Array2<f64> {
    rows / (1.0 - gamma)
}
