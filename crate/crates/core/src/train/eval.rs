//! Per-frame evaluation and the non-learned baselines.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::geom::{knn, random_downsample, PointCloud};
use crate::metrics::{chamfer, emd_exact_capped};
use crate::model::Monet;
use crate::nn::ParamStore;

/// Anything that extrapolates a sequence.
pub trait Predictor {
    fn name(&self) -> &str;
    fn predict(&self, frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>>;
}

/// Every future frame equals the last observed one.
pub fn baseline_copy_last(frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
    let last = frames.last().ok_or_else(|| Error::Input("copy-last needs at least one frame".into()))?;
    Ok(vec![last.clone(); horizon])
}

/// Each point of the last frame keeps moving by its offset from the nearest
/// point of the frame before.
pub fn baseline_constant_flow(frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
    if frames.len() < 2 {
        return Err(Error::Input("constant-flow needs at least two frames".into()));
    }
    let (prev, last) = (&frames[frames.len() - 2], &frames[frames.len() - 1]);
    let nbr = knn(last, prev, 1)?;
    let flow: Vec<[f64; 3]> = last
        .points()
        .iter()
        .zip(nbr.indices())
        .map(|(p, &j)| {
            let q = prev.point(j);
            [p[0] - q[0], p[1] - q[1], p[2] - q[2]]
        })
        .collect();
    let mut out = Vec::with_capacity(horizon);
    let mut cur = last.clone();
    for _ in 0..horizon {
        cur = cur.displaced(&flow)?;
        out.push(cur.clone());
    }
    Ok(out)
}

pub struct CopyLast;

impl Predictor for CopyLast {
    fn name(&self) -> &str {
        "copy-last"
    }
    fn predict(&self, frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
        baseline_copy_last(frames, horizon)
    }
}

pub struct ConstantFlow;

impl Predictor for ConstantFlow {
    fn name(&self) -> &str {
        "constant-flow"
    }
    fn predict(&self, frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
        baseline_constant_flow(frames, horizon)
    }
}

pub struct ModelPredictor<'a> {
    pub name: String,
    pub model: &'a Monet,
    pub params: &'a ParamStore,
}

impl Predictor for ModelPredictor<'_> {
    fn name(&self) -> &str {
        &self.name
    }
    fn predict(&self, frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
        self.model.predict(self.params, frames, horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub cd: f64,
    pub emd: f64,
}

/// Chamfer on the full clouds; EMD after seeded downsampling of both clouds
/// to a common size of at most `emd_cap`. Both clouds share the seed, so
/// identical clouds keep identical subsets.
pub fn frame_metrics(pred: &PointCloud, truth: &PointCloud, emd_cap: usize, seed: u64) -> Result<FrameMetrics> {
    if emd_cap == 0 {
        return Err(Error::Config("EMD cap must be at least 1".into()));
    }
    let cd = chamfer(pred, truth)?;
    let m = emd_cap.min(pred.len()).min(truth.len());
    let shrink = |c: &PointCloud, s: u64| if c.len() == m { Ok(c.clone()) } else { random_downsample(c, m, s) };
    let p = shrink(pred, seed)?;
    let q = shrink(truth, seed)?;
    let (emd, _) = emd_exact_capped(&p, &q, emd_cap)?;
    Ok(FrameMetrics { cd, emd })
}

/// `frame,cd,emd` rows with frames counted from 1.
pub fn metrics_csv(rows: &[FrameMetrics]) -> String {
    let mut s = String::from("frame,cd,emd\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, r.cd, r.emd);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub input_frames: usize,
    pub horizon: usize,
    pub emd_cap: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { input_frames: 5, horizon: 5, emd_cap: crate::metrics::DEFAULT_EMD_CAP, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub name: String,
    /// Test-set means per future frame.
    pub cd: Vec<f64>,
    pub emd: Vec<f64>,
    pub seconds_per_prediction: f64,
}

impl MethodReport {
    pub fn mean_cd(&self) -> f64 {
        self.cd.iter().sum::<f64>() / self.cd.len() as f64
    }

    pub fn mean_emd(&self) -> f64 {
        self.emd.iter().sum::<f64>() / self.emd.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// `method,frame,cd,emd`; timings are left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,frame,cd,emd\n");
        for m in &self.methods {
            for (i, (cd, emd)) in m.cd.iter().zip(&m.emd).enumerate() {
                let _ = writeln!(s, "{},{},{},{}", m.name, i + 1, cd, emd);
            }
        }
        s
    }
}

pub fn evaluate(methods: &[&dyn Predictor], test: &[Vec<PointCloud>], cfg: &EvalConfig) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    let need = cfg.input_frames + cfg.horizon;
    if let Some(i) = test.iter().position(|s| s.len() < need) {
        return Err(Error::Input(format!("test sequence {i} has {} frames; {need} are needed", test[i].len())));
    }
    let mut out = Vec::with_capacity(methods.len());
    for m in methods {
        let mut cd = vec![0.0; cfg.horizon];
        let mut emd = vec![0.0; cfg.horizon];
        let mut elapsed = 0.0;
        for (s, seq) in test.iter().enumerate() {
            let start = Instant::now();
            let preds = m.predict(&seq[..cfg.input_frames], cfg.horizon)?;
            elapsed += start.elapsed().as_secs_f64();
            if preds.len() != cfg.horizon {
                return Err(Error::Input(format!("{} returned {} frames for horizon {}", m.name(), preds.len(), cfg.horizon)));
            }
            for (j, p) in preds.iter().enumerate() {
                let seed = cfg.seed ^ ((s as u64) << 20) ^ j as u64;
                let fm = frame_metrics(p, &seq[cfg.input_frames + j], cfg.emd_cap, seed)?;
                cd[j] += fm.cd;
                emd[j] += fm.emd;
            }
        }
        let n = test.len() as f64;
        cd.iter_mut().chain(emd.iter_mut()).for_each(|x| *x /= n);
        out.push(MethodReport { name: m.name().to_string(), cd, emd, seconds_per_prediction: elapsed / n });
    }
    Ok(EvalReport { methods: out })
}
