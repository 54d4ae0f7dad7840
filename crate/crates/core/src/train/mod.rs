//! Adam training on mean Chamfer loss over autoregressively predicted frames.

pub mod eval;

pub use eval::{
    baseline_constant_flow, baseline_copy_last, evaluate, frame_metrics, metrics_csv, ConstantFlow, CopyLast, EvalConfig,
    EvalReport, FrameMetrics, MethodReport, ModelPredictor, Predictor,
};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::metrics::chamfer;
use crate::model::Monet;
use crate::nn::{Graph, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub iterations: usize,
    /// Observed frames `T`.
    pub input_frames: usize,
    /// Predicted frames `T_p`.
    pub predict_frames: usize,
    /// Drives the sample order.
    pub seed: u64,
    /// Steps between checkpoint callbacks; 0 disables them.
    pub checkpoint_every: usize,
    /// Global gradient norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            iterations: 2000,
            input_frames: 5,
            predict_frames: 5,
            seed: 0,
            checkpoint_every: 100,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.input_frames < 2 {
            return Err(Error::Config("at least 2 observed frames are required".into()));
        }
        if self.predict_frames == 0 {
            return Err(Error::Config("at least 1 predicted frame is required".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config("clip norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Mean Chamfer distance between paired frames, recorded for backprop.
pub fn loss(g: &mut Graph, preds: &[Var], targets: &[Var]) -> Result<Var> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Input(format!("loss needs equal, non-zero frame counts; got {} and {}", preds.len(), targets.len())));
    }
    let terms = preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| g.chamfer(p, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(g.mean(&terms))
}

/// Value of [`loss`] without a graph.
pub fn loss_value(preds: &[PointCloud], targets: &[PointCloud]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::Input(format!("loss needs equal, non-zero frame counts; got {} and {}", preds.len(), targets.len())));
    }
    let mut s = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        s += chamfer(p, t)?;
    }
    Ok(s / preds.len() as f64)
}

/// Scales gradients so their global norm is at most `max_norm`; returns
/// the norm before scaling.
pub fn clip_gradients(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let s = max_norm / norm;
        for (_, p) in params.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= s;
            }
        }
    }
    norm
}

/// One bias-corrected Adam update from the stored gradients. Nothing is
/// modified when any gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, p)| !p.grad.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in tensor {name}")));
    }
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (_, p) in params.iter_mut() {
        let n = p.value.data().len();
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = cfg.beta1 * p.m.data()[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.v.data()[i] + (1.0 - cfg.beta2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            p.value.data_mut()[i] -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Loss and gradients of one sequence; gradients are left in `params`.
pub fn compute_gradients(model: &Monet, params: &mut ParamStore, inputs: &[PointCloud], targets: &[PointCloud]) -> Result<f64> {
    let (value, grads) = {
        let mut g = Graph::new(params);
        let frames: Vec<Var> = inputs.iter().map(|f| g.points(f)).collect();
        let tv: Vec<Var> = targets.iter().map(|f| g.points(f)).collect();
        let r = model.rollout(&mut g, &frames, targets.len())?;
        let l = loss(&mut g, &r.predictions, &tv)?;
        let value = g.scalar(l);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss is {value}")));
        }
        (value, g.backward(l)?)
    };
    params.zero_grad();
    params.accumulate_grads(&grads)?;
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// Optimiser step this loss was measured before, counted from 1.
    pub iteration: u64,
    pub sample: usize,
    pub loss: f64,
    /// Norm before clipping.
    pub grad_norm: f64,
}

pub fn loss_csv(records: &[LossRecord]) -> String {
    let mut s = String::from("iteration,sample,loss,grad_norm\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.iteration, r.sample, r.loss, r.grad_norm);
    }
    s
}

/// Sequence used at global step `step`: a fresh seeded permutation per pass
/// over the data, so a resumed run picks the same samples.
pub fn sample_for_step(seed: u64, step: u64, n: usize) -> usize {
    let epoch = step / n as u64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order[(step % n as u64) as usize]
}

/// Runs `cfg.iterations` further steps from `params.step`. On divergence the
/// parameters are those of the last good step and the error says where.
pub fn train(
    model: &Monet,
    params: &mut ParamStore,
    cfg: &TrainConfig,
    data: &[Vec<PointCloud>],
    mut on_checkpoint: impl FnMut(&ParamStore) -> Result<()>,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let need = cfg.input_frames + cfg.predict_frames;
    if let Some(i) = data.iter().position(|s| s.len() < need) {
        return Err(Error::Input(format!("sequence {i} has {} frames; {need} are needed", data[i].len())));
    }
    let mut records = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let step = params.step;
        let iteration = step as usize + 1;
        let idx = sample_for_step(cfg.seed, step, data.len());
        let seq = &data[idx];
        let (inputs, targets) = (&seq[..cfg.input_frames], &seq[cfg.input_frames..need]);
        let loss = compute_gradients(model, params, inputs, targets).map_err(|e| match e {
            Error::Numeric(reason) => Error::Diverged { iteration, reason },
            other => other,
        })?;
        let grad_norm = match cfg.clip_norm {
            Some(c) => clip_gradients(params, c),
            None => params.grad_norm(),
        };
        adam_step(params, &cfg.adam).map_err(|e| Error::Diverged { iteration, reason: e.to_string() })?;
        let rec = LossRecord { iteration: step + 1, sample: idx, loss, grad_norm };
        on_step(&rec);
        records.push(rec);
        if cfg.checkpoint_every > 0 && params.step.is_multiple_of(cfg.checkpoint_every as u64) {
            on_checkpoint(params)?;
        }
    }
    Ok(records)
}
