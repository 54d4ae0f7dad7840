//! The prediction network: hierarchical content encoding, motion encoding,
//! point-aligned recurrence, motion align and coarse-to-fine flow decoding.
//!
//! The embedding pass runs one embedding cell per observed frame pair
//! `(t, t+1)`. The first inference cell consumes the last observed pair and
//! emits the first predicted frame; later inference cells consume the last
//! two frames available, predicted frames included.

pub mod align;
pub mod config;
pub mod encoder;
pub mod rnn;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{Ablation, LayerConfig, ModelConfig, Variant};
pub use encoder::{content_encoder_layer, motion_encoder, Encoded};
pub use rnn::{motion_gru_step, motion_lstm_step, GruGates, LayerState, LstmGates, StepInput};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::nn::{feature_propagation, init_mlp, Activation, Graph, MlpSpec, ParamStore, Var};
use crate::tensor::Mat;

/// Output of one embedding or inference cell at one level.
#[derive(Clone, Debug)]
pub struct CellOutput {
    /// Motion features fed to the recurrence (aligned ones for inference
    /// cells) before any ablation.
    pub motion: Var,
    pub state: LayerState,
}

/// Recorded result of a full observe-then-predict pass.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub predictions: Vec<Var>,
    pub flows: Vec<Var>,
    /// Per-level states after the last inference cell.
    pub states: Vec<LayerState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Monet {
    pub config: ModelConfig,
}

fn stream_id(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Monet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Monet { config })
    }

    pub fn levels(&self) -> usize {
        self.config.layers.len()
    }

    fn layer(&self, level: usize) -> &LayerConfig {
        &self.config.layers[level]
    }

    pub fn content_prefix(level: usize) -> String {
        format!("layer{}.content", level + 1)
    }

    pub fn motion_prefix(level: usize) -> String {
        format!("layer{}.motion", level + 1)
    }

    pub fn rnn_prefix(level: usize) -> String {
        format!("layer{}.rnn", level + 1)
    }

    pub fn align_prefix(level: usize) -> String {
        format!("layer{}.align", level + 1)
    }

    /// Feature propagation into `level` (0 is the full-resolution frame).
    pub fn propagation_prefix(level: usize) -> String {
        format!("decoder.fp{level}")
    }

    pub const HEAD_PREFIX: &'static str = "decoder.head";

    /// Feature-propagation MLP into `level` and its input width.
    fn propagation_spec(&self, level: usize) -> (MlpSpec, usize) {
        let l = &self.config.layers;
        if level == 0 {
            let w = l[0].state_width;
            (MlpSpec::uniform(vec![w, w], Activation::Relu), w)
        } else {
            let skip = l[level - 1].state_width;
            let below = l[level].state_width;
            (MlpSpec::uniform(vec![skip, skip], Activation::Relu), below + skip)
        }
    }

    fn head_spec(&self) -> MlpSpec {
        MlpSpec::relu_hidden(vec![self.config.layers[0].state_width, 3])
    }

    /// Fresh parameters. Each MLP draws from its own stream, so shared parts
    /// are identical across variants and ablations for the same seed.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        let add = |store: &mut ParamStore, prefix: &str, in_width: usize, spec: &MlpSpec| -> Result<()> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_id(prefix));
            init_mlp(store, prefix, in_width, spec, &mut rng)
        };
        let mut prev_width = 0;
        for (level, cfg) in self.config.layers.iter().enumerate() {
            add(&mut store, &Self::content_prefix(level), 4 + prev_width, &encoder::content_spec(cfg))?;
            add(&mut store, &Self::motion_prefix(level), 4 + 2 * cfg.content_width, &encoder::motion_spec(cfg))?;
            add(&mut store, &Self::align_prefix(level), 4 + cfg.motion_width, &align::align_spec(cfg))?;
            let rnn = Self::rnn_prefix(level);
            let spec = rnn::gate_spec(cfg);
            match self.config.variant {
                Variant::Lstm => {
                    for gate in rnn::LSTM_GATES {
                        add(&mut store, &format!("{rnn}.{gate}"), rnn::gate_input_width(cfg, gate), &spec)?;
                    }
                }
                Variant::Gru => {
                    for gate in rnn::GRU_GATES {
                        let key = if gate == "candidate" { "candidate_gru" } else { gate };
                        add(&mut store, &format!("{rnn}.{gate}"), rnn::gate_input_width(cfg, key), &spec)?;
                    }
                }
            }
            prev_width = cfg.content_width;
        }
        for level in 0..self.levels() {
            let (spec, w) = self.propagation_spec(level);
            add(&mut store, &Self::propagation_prefix(level), w, &spec)?;
        }
        add(&mut store, Self::HEAD_PREFIX, self.config.layers[0].state_width, &self.head_spec())?;
        Ok(store)
    }

    /// Content encoder of `level` applied to the level below.
    pub fn encode_level(&self, g: &mut Graph, level: usize, below: &Encoded) -> Result<Encoded> {
        content_encoder_layer(g, &Self::content_prefix(level), self.layer(level), below, self.config.fps_seed)
    }

    /// All levels of one frame, shallowest first.
    pub fn encode_frame(&self, g: &mut Graph, frame: Var) -> Result<Vec<Encoded>> {
        let mut cur = Encoded::input(g, frame)?;
        let mut out = Vec::with_capacity(self.levels());
        for level in 0..self.levels() {
            cur = self.encode_level(g, level, &cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn encode_motion(&self, g: &mut Graph, level: usize, t: &Encoded, t1: &Encoded) -> Result<Var> {
        motion_encoder(g, &Self::motion_prefix(level), self.layer(level), t, t1)
    }

    /// Recurrent update with ablation switches applied to its inputs.
    pub fn recurrent_step(&self, g: &mut Graph, level: usize, cur: &Encoded, motion: Var, prev: Option<&LayerState>) -> Result<LayerState> {
        let cfg = self.layer(level);
        let n = cur.cloud.len();
        let mut content = cur.features()?;
        let mut motion = motion;
        match self.config.ablation {
            Ablation::Full => {}
            Ablation::NoMotion => motion = g.constant(Mat::zeros(n, cfg.motion_width)),
            Ablation::NoContent => content = g.constant(Mat::zeros(n, cfg.content_width)),
        }
        let input = StepInput { x: cur.x, cloud: &cur.cloud, content, motion };
        let prefix = Self::rnn_prefix(level);
        Ok(match self.config.variant {
            Variant::Lstm => motion_lstm_step(g, &prefix, cfg, &input, prev)?.0,
            Variant::Gru => motion_gru_step(g, &prefix, cfg, &input, prev)?.0,
        })
    }

    fn zero_motion(&self, g: &mut Graph, level: usize, n: usize) -> Var {
        g.constant(Mat::zeros(n, self.layer(level).motion_width))
    }

    /// Embedding cell on already encoded frames `t` and `t+1`.
    pub fn mecell_step(&self, g: &mut Graph, level: usize, t: &Encoded, t1: &Encoded, prev: Option<&LayerState>) -> Result<CellOutput> {
        let motion = if self.config.ablation == Ablation::NoMotion {
            self.zero_motion(g, level, t.cloud.len())
        } else {
            self.encode_motion(g, level, t, t1)?
        };
        let state = self.recurrent_step(g, level, t, motion, prev)?;
        Ok(CellOutput { motion, state })
    }

    /// Inference cell on encoded frames `t-1` and `t`: motion of `t-1` is
    /// aligned onto `t`'s points before the recurrence.
    pub fn micell_step(&self, g: &mut Graph, level: usize, t_prev: &Encoded, t: &Encoded, prev: Option<&LayerState>) -> Result<CellOutput> {
        let motion = if self.config.ablation == Ablation::NoMotion {
            self.zero_motion(g, level, t.cloud.len())
        } else {
            let m_prev = self.encode_motion(g, level, t_prev, t)?;
            self.align_motion(g, level, t, t_prev, m_prev)?
        };
        let state = self.recurrent_step(g, level, t, motion, prev)?;
        Ok(CellOutput { motion, state })
    }

    pub fn align_motion(&self, g: &mut Graph, level: usize, t: &Encoded, t_prev: &Encoded, m_prev: Var) -> Result<Var> {
        align::motion_align(g, &Self::align_prefix(level), self.layer(level), t.x, &t.cloud, t_prev.x, &t_prev.cloud, m_prev)
    }

    /// Embedding cell including the content encoder of `level`; `below_*`
    /// are the two frames at the level underneath.
    pub fn mecell_forward(
        &self,
        g: &mut Graph,
        level: usize,
        below_t: &Encoded,
        below_t1: &Encoded,
        prev: Option<&LayerState>,
    ) -> Result<(CellOutput, Encoded, Encoded)> {
        let t = self.encode_level(g, level, below_t)?;
        let t1 = self.encode_level(g, level, below_t1)?;
        let out = self.mecell_step(g, level, &t, &t1, prev)?;
        Ok((out, t, t1))
    }

    /// Inference cell including the content encoder of `level`.
    pub fn micell_forward(
        &self,
        g: &mut Graph,
        level: usize,
        below_prev: &Encoded,
        below_t: &Encoded,
        prev: Option<&LayerState>,
    ) -> Result<(CellOutput, Encoded, Encoded)> {
        let tp = self.encode_level(g, level, below_prev)?;
        let t = self.encode_level(g, level, below_t)?;
        let out = self.micell_step(g, level, &tp, &t, prev)?;
        Ok((out, tp, t))
    }

    /// Coarse-to-fine decoding of per-level hidden states into one
    /// displacement per point of `frame`.
    pub fn decode_scene_flow(&self, g: &mut Graph, states: &[LayerState], frame: Var) -> Result<Var> {
        if states.len() != self.levels() {
            return Err(Error::Config(format!("decoder needs {} level states, got {}", self.levels(), states.len())));
        }
        let deepest = self.levels() - 1;
        let mut feats = states[deepest].h;
        let mut coords = states[deepest].x;
        for level in (0..deepest).rev() {
            let (spec, _) = self.propagation_spec(level + 1);
            let s = &states[level];
            feats = feature_propagation(g, s.x, coords, feats, Some(s.h), &Self::propagation_prefix(level + 1), &spec)?;
            coords = s.x;
        }
        let (spec, _) = self.propagation_spec(0);
        let full = feature_propagation(g, frame, coords, feats, None, &Self::propagation_prefix(0), &spec)?;
        crate::nn::shared_mlp(g, Self::HEAD_PREFIX, &self.head_spec(), full)
    }

    fn check_frames(&self, g: &Graph, frames: &[Var]) -> Result<()> {
        if frames.len() < 2 {
            return Err(Error::Input(format!("need at least 2 observed frames, got {}", frames.len())));
        }
        for (i, &f) in frames.iter().enumerate() {
            let shape = g.value(f).shape();
            if shape != (self.config.input_points, 3) {
                return Err(Error::Input(format!(
                    "frame {i} has shape {shape:?}; the model expects {} x 3",
                    self.config.input_points
                )));
            }
        }
        Ok(())
    }

    /// Observes `frames` and predicts `horizon` further frames, feeding each
    /// prediction back as an input.
    pub fn rollout(&self, g: &mut Graph, frames: &[Var], horizon: usize) -> Result<Rollout> {
        self.check_frames(g, frames)?;
        let mut seq: Vec<Var> = frames.to_vec();
        let mut encoded: Vec<Vec<Encoded>> = Vec::with_capacity(seq.len() + horizon);
        for &f in &seq {
            encoded.push(self.encode_frame(g, f)?);
        }
        let mut states: Vec<Option<LayerState>> = vec![None; self.levels()];
        for t in 0..seq.len() - 1 {
            for (level, st) in states.iter_mut().enumerate() {
                let out = self.mecell_step(g, level, &encoded[t][level], &encoded[t + 1][level], st.as_ref())?;
                *st = Some(out.state);
            }
        }
        let mut predictions = Vec::with_capacity(horizon);
        let mut flows = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let t = seq.len() - 1;
            for (level, st) in states.iter_mut().enumerate() {
                let out = self.micell_step(g, level, &encoded[t - 1][level], &encoded[t][level], st.as_ref())?;
                *st = Some(out.state);
            }
            let current: Vec<LayerState> = states.iter().map(|s| s.clone().expect("set above")).collect();
            let flow = self.decode_scene_flow(g, &current, seq[t])?;
            let next = g.add(seq[t], flow)?;
            if !g.value(next).is_finite() {
                return Err(Error::Numeric(format!("prediction {step} is not finite")));
            }
            predictions.push(next);
            flows.push(flow);
            seq.push(next);
            if step + 1 < horizon {
                encoded.push(self.encode_frame(g, next)?);
            }
        }
        let states = states.into_iter().map(|s| s.expect("at least one cell ran")).collect();
        Ok(Rollout { predictions, flows, states })
    }

    /// Predicted frames without gradient bookkeeping by the caller.
    pub fn predict(&self, params: &ParamStore, frames: &[PointCloud], horizon: usize) -> Result<Vec<PointCloud>> {
        let mut g = Graph::new(params);
        let vars: Vec<Var> = frames.iter().map(|f| g.points(f)).collect();
        let r = self.rollout(&mut g, &vars, horizon)?;
        r.predictions.iter().map(|&v| g.cloud(v)).collect()
    }
}

pub const CONFIG_FILE: &str = "model.cfg";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// Writes the config and a full checkpoint (with optimiser state) into `dir`.
pub fn save_model(dir: impl AsRef<Path>, model: &Monet, params: &ParamStore) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    model.config.save(dir.join(CONFIG_FILE))?;
    params.save_full(dir.join(CHECKPOINT_FILE))
}

/// Reads a model directory and checks every tensor against the shapes its
/// config implies.
pub fn load_model(dir: impl AsRef<Path>) -> Result<(Monet, ParamStore)> {
    let dir = dir.as_ref();
    let model = Monet::new(ModelConfig::load(dir.join(CONFIG_FILE))?)?;
    let params = ParamStore::load(dir.join(CHECKPOINT_FILE))?;
    model.init_params(0)?.check_compatible(&params)?;
    Ok((model, params))
}
