//! Content and motion encoders.

use crate::error::{Error, Result};
use crate::geom::{fps, knn, PointCloud};
use crate::model::config::LayerConfig;
use crate::nn::{shared_mlp, Activation, Graph, MlpSpec, Var};

/// Sampled coordinates and content features of one frame at one level.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub x: Var,
    pub cloud: PointCloud,
    /// `None` only for the raw input level, whose content features are empty.
    pub e: Option<Var>,
}

impl Encoded {
    /// The raw frame, before any encoder layer.
    pub fn input(g: &mut Graph, frame: Var) -> Result<Self> {
        let cloud = g.cloud(frame)?;
        Ok(Encoded { x: frame, cloud, e: None })
    }

    pub fn features(&self) -> Result<Var> {
        self.e.ok_or_else(|| Error::Config("encoded level carries no content features".into()))
    }
}

pub fn content_spec(cfg: &LayerConfig) -> MlpSpec {
    MlpSpec::uniform(vec![cfg.content_width, cfg.content_width], Activation::Relu)
}

pub fn motion_spec(cfg: &LayerConfig) -> MlpSpec {
    MlpSpec::uniform(vec![cfg.motion_width, cfg.motion_width], Activation::Relu)
}

/// FPS → kNN clusters in the previous level → `[geometry ‖ neighbour content]`
/// → shared MLP → maxpool.
pub fn content_encoder_layer(g: &mut Graph, prefix: &str, cfg: &LayerConfig, prev: &Encoded, fps_seed: usize) -> Result<Encoded> {
    if cfg.points > prev.cloud.len() {
        return Err(Error::Config(format!(
            "content encoder: cannot keep {} of {} points",
            cfg.points,
            prev.cloud.len()
        )));
    }
    let picked = fps(&prev.cloud, cfg.points, fps_seed.min(prev.cloud.len() - 1))?;
    let cloud = prev.cloud.select(&picked);
    let x = g.gather(prev.x, picked)?;
    let nbr = knn(&cloud, &prev.cloud, cfg.k)?;
    let geo = g.geometry(x, prev.x, &nbr)?;
    let fmap = match prev.e {
        Some(e) => {
            let ne = g.gather(e, nbr.indices().to_vec())?;
            g.concat(&[geo, ne])?
        }
        None => geo,
    };
    let h = shared_mlp(g, prefix, &content_spec(cfg), fmap)?;
    let e = g.maxpool(h, cfg.k)?;
    Ok(Encoded { x, cloud, e: Some(e) })
}

/// Motion features of frame `t` toward frame `t+1`, aligned with `t`'s points.
pub fn motion_encoder(g: &mut Graph, prefix: &str, cfg: &LayerConfig, t: &Encoded, t1: &Encoded) -> Result<Var> {
    let (et, et1) = (t.features()?, t1.features()?);
    if g.value(et).cols() != g.value(et1).cols() {
        return Err(Error::Config("motion encoder: content widths differ between frames".into()));
    }
    let nbr = knn(&t.cloud, &t1.cloud, cfg.k)?;
    let geo = g.geometry(t.x, t1.x, &nbr)?;
    let ne = g.gather(et1, nbr.indices().to_vec())?;
    let ce = g.repeat_rows(et, cfg.k)?;
    let fmap = g.concat(&[geo, ne, ce])?;
    let h = shared_mlp(g, prefix, &motion_spec(cfg), fmap)?;
    g.maxpool(h, cfg.k)
}
