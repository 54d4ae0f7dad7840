//! Attention-weighted transport of motion features from the previous frame's
//! points onto the current frame's points.

use crate::error::{Error, Result};
use crate::geom::{knn, PointCloud};
use crate::model::config::LayerConfig;
use crate::nn::{shared_mlp, Graph, MlpSpec, Var};

/// One logit per neighbour.
pub fn align_spec(cfg: &LayerConfig) -> MlpSpec {
    MlpSpec::relu_hidden(vec![cfg.motion_width, 1])
}

/// Each output row is a softmax-weighted convex combination of the motion
/// features of its k nearest previous-frame points.
#[allow(clippy::too_many_arguments)]
pub fn motion_align(
    g: &mut Graph,
    prefix: &str,
    cfg: &LayerConfig,
    x_t: Var,
    cloud_t: &PointCloud,
    x_prev: Var,
    cloud_prev: &PointCloud,
    m_prev: Var,
) -> Result<Var> {
    if g.value(m_prev).rows() != cloud_prev.len() {
        return Err(Error::Config("motion align: motion features not aligned with previous points".into()));
    }
    let nbr = knn(cloud_t, cloud_prev, cfg.k)?;
    let geo = g.geometry(x_t, x_prev, &nbr)?;
    let nm = g.gather(m_prev, nbr.indices().to_vec())?;
    let fmap = g.concat(&[geo, nm])?;
    let logits = shared_mlp(g, prefix, &align_spec(cfg), fmap)?;
    let w = g.softmax(logits, cfg.k)?;
    g.weighted_sum(w, nm, cfg.k)
}
