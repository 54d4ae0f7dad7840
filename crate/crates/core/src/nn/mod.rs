//! Learnable building blocks on top of the recording graph.

pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod params;

pub use gradcheck::{grad_check, grad_check_subset, relative_error, GradCheckReport};
pub use graph::{Activation, Graph, Var};
pub use mlp::{init_mlp, shared_mlp, MlpSpec};
pub use params::{Param, ParamStore};

use crate::error::{Error, Result};
use crate::geom::knn;

/// Neighbours used by feature propagation.
pub const PROPAGATION_NEIGHBORS: usize = 3;

/// Interpolates `sparse_feats` onto `dense` from the 3 nearest sparse points
/// with inverse-distance weights, concatenates `skip` and applies the shared
/// MLP under `prefix`.
///
/// With fewer than 3 sparse points all of them are used.
#[allow(clippy::too_many_arguments)]
pub fn feature_propagation(
    g: &mut Graph,
    dense: Var,
    sparse: Var,
    sparse_feats: Var,
    skip: Option<Var>,
    prefix: &str,
    spec: &MlpSpec,
) -> Result<Var> {
    let dense_pc = g.cloud(dense)?;
    let sparse_pc = g.cloud(sparse)?;
    if g.value(sparse_feats).rows() != sparse_pc.len() {
        return Err(Error::Config("feature propagation: sparse features not aligned with sparse points".into()));
    }
    if let Some(s) = skip {
        if g.value(s).rows() != dense_pc.len() {
            return Err(Error::Config("feature propagation: skip features not aligned with dense points".into()));
        }
    }
    let nbr = knn(&dense_pc, &sparse_pc, PROPAGATION_NEIGHBORS.min(sparse_pc.len()))?;
    let interp = g.interpolate(dense, sparse, sparse_feats, &nbr)?;
    let x = match skip {
        Some(s) => g.concat(&[interp, s])?,
        None => interp,
    };
    shared_mlp(g, prefix, spec, x)
}
