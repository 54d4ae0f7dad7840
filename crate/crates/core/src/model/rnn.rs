//! Point-aligned recurrent cells. Hidden (and cell) states are rows aligned
//! with the sampled coordinates of their level.

use crate::error::{Error, Result};
use crate::geom::{knn, PointCloud};
use crate::model::config::LayerConfig;
use crate::nn::{shared_mlp, Activation, Graph, MlpSpec, Var};
use crate::tensor::Mat;

/// Recurrent state of one level at one time step.
#[derive(Clone, Debug)]
pub struct LayerState {
    pub x: Var,
    pub cloud: PointCloud,
    pub h: Var,
    /// Present for the LSTM variant only.
    pub c: Option<Var>,
}

/// Gate values of one LSTM step.
#[derive(Clone, Copy, Debug)]
pub struct LstmGates {
    pub input: Var,
    pub forget: Var,
    pub output: Var,
    pub candidate: Var,
    pub pooled_cell: Var,
}

/// Gate values of one GRU step.
#[derive(Clone, Copy, Debug)]
pub struct GruGates {
    pub update: Var,
    pub reset: Var,
    pub pooled_hidden: Var,
    pub candidate: Var,
}

/// Current-frame inputs to a recurrent step.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    pub x: Var,
    pub cloud: &'a PointCloud,
    pub content: Var,
    pub motion: Var,
}

pub fn gate_spec(cfg: &LayerConfig) -> MlpSpec {
    MlpSpec::relu_hidden(vec![cfg.state_width, cfg.state_width])
}

pub const LSTM_GATES: [&str; 5] = ["input", "forget", "output", "candidate", "cell"];
pub const GRU_GATES: [&str; 4] = ["update", "reset", "hidden", "candidate"];

/// Input width of each gate MLP.
pub fn gate_input_width(cfg: &LayerConfig, gate: &str) -> usize {
    let s = cfg.state_width;
    match gate {
        "cell" | "hidden" => 4 + s,
        "candidate_gru" => s + cfg.motion_width + cfg.content_width,
        _ => 4 + s + cfg.motion_width + cfg.content_width,
    }
}

struct Clusters {
    geo: Var,
    hidden: Var,
    cell: Option<Var>,
}

/// kNN clusters of the current points in the previous state's points. Without
/// a previous state the clusters are all zero.
fn clusters(g: &mut Graph, cfg: &LayerConfig, cur: &StepInput, prev: Option<&LayerState>, want_cell: bool) -> Result<Clusters> {
    let n = cur.cloud.len();
    let k = cfg.k;
    match prev {
        Some(p) => {
            let hw = g.value(p.h).cols();
            if hw != cfg.state_width || g.value(p.h).rows() != p.cloud.len() {
                return Err(Error::Config("previous state not aligned with its points".into()));
            }
            let nbr = knn(cur.cloud, &p.cloud, k)?;
            let geo = g.geometry(cur.x, p.x, &nbr)?;
            let hidden = g.gather(p.h, nbr.indices().to_vec())?;
            let cell = if want_cell {
                let c = p.c.ok_or_else(|| Error::Config("LSTM step needs a cell state".into()))?;
                Some(g.gather(c, nbr.indices().to_vec())?)
            } else {
                None
            };
            Ok(Clusters { geo, hidden, cell })
        }
        None => {
            let geo = g.constant(Mat::zeros(n * k, 4));
            let hidden = g.constant(Mat::zeros(n * k, cfg.state_width));
            let cell = want_cell.then(|| g.constant(Mat::zeros(n * k, cfg.state_width)));
            Ok(Clusters { geo, hidden, cell })
        }
    }
}

fn check_inputs(g: &Graph, cur: &StepInput) -> Result<()> {
    let n = cur.cloud.len();
    if g.value(cur.content).rows() != n || g.value(cur.motion).rows() != n || g.value(cur.x).rows() != n {
        return Err(Error::Config("recurrent step inputs not aligned with current points".into()));
    }
    Ok(())
}

/// `act(maxpool(MLP(x)))`.
fn pooled_gate(g: &mut Graph, prefix: &str, spec: &MlpSpec, x: Var, k: usize, act: Activation) -> Result<Var> {
    let h = shared_mlp(g, prefix, spec, x)?;
    let p = g.maxpool(h, k)?;
    Ok(g.act(p, act))
}

pub fn motion_lstm_step(
    g: &mut Graph,
    prefix: &str,
    cfg: &LayerConfig,
    cur: &StepInput,
    prev: Option<&LayerState>,
) -> Result<(LayerState, LstmGates)> {
    check_inputs(g, cur)?;
    let k = cfg.k;
    let cl = clusters(g, cfg, cur, prev, true)?;
    let m = g.repeat_rows(cur.motion, k)?;
    let e = g.repeat_rows(cur.content, k)?;
    let fmap = g.concat(&[cl.geo, cl.hidden, m, e])?;
    let spec = gate_spec(cfg);
    let input = pooled_gate(g, &format!("{prefix}.input"), &spec, fmap, k, Activation::Sigmoid)?;
    let forget = pooled_gate(g, &format!("{prefix}.forget"), &spec, fmap, k, Activation::Sigmoid)?;
    let output = pooled_gate(g, &format!("{prefix}.output"), &spec, fmap, k, Activation::Sigmoid)?;
    let candidate = pooled_gate(g, &format!("{prefix}.candidate"), &spec, fmap, k, Activation::Tanh)?;
    let cmap = g.concat(&[cl.geo, cl.cell.expect("requested")])?;
    let pooled_cell = pooled_gate(g, &format!("{prefix}.cell"), &spec, cmap, k, Activation::None)?;
    let keep = g.mul(forget, pooled_cell)?;
    let write = g.mul(input, candidate)?;
    let c = g.add(keep, write)?;
    let tc = g.act(c, Activation::Tanh);
    let h = g.mul(output, tc)?;
    Ok((
        LayerState { x: cur.x, cloud: cur.cloud.clone(), h, c: Some(c) },
        LstmGates { input, forget, output, candidate, pooled_cell },
    ))
}

pub fn motion_gru_step(
    g: &mut Graph,
    prefix: &str,
    cfg: &LayerConfig,
    cur: &StepInput,
    prev: Option<&LayerState>,
) -> Result<(LayerState, GruGates)> {
    check_inputs(g, cur)?;
    let k = cfg.k;
    let cl = clusters(g, cfg, cur, prev, false)?;
    let m = g.repeat_rows(cur.motion, k)?;
    let e = g.repeat_rows(cur.content, k)?;
    let fmap = g.concat(&[cl.geo, cl.hidden, m, e])?;
    let spec = gate_spec(cfg);
    let update = pooled_gate(g, &format!("{prefix}.update"), &spec, fmap, k, Activation::Sigmoid)?;
    let reset = pooled_gate(g, &format!("{prefix}.reset"), &spec, fmap, k, Activation::Sigmoid)?;
    let hmap = g.concat(&[cl.geo, cl.hidden])?;
    let pooled_hidden = pooled_gate(g, &format!("{prefix}.hidden"), &spec, hmap, k, Activation::None)?;
    let gated = g.mul(reset, pooled_hidden)?;
    let cin = g.concat(&[gated, cur.motion, cur.content])?;
    let pre = shared_mlp(g, &format!("{prefix}.candidate"), &spec, cin)?;
    let candidate = g.act(pre, Activation::Tanh);
    let keep = g.mul(update, pooled_hidden)?;
    let inv = g.one_minus(update);
    let write = g.mul(inv, candidate)?;
    let h = g.add(keep, write)?;
    Ok((
        LayerState { x: cur.x, cloud: cur.cloud.clone(), h, c: None },
        GruGates { update, reset, pooled_hidden, candidate },
    ))
}
