//! Furthest point sampling, kNN grouping and relative geometric features on
//! a synthetic frame.
//!
//! cargo run --release --example geometry

use monet::geom::{fps, group_geometric_features, knn};
use monet::synth::{make_sequence, SceneConfig};

fn main() -> monet::Result<()> {
    let frame = make_sequence(&SceneConfig { frames: 1, n_points: 512, seed: 3, ..SceneConfig::default() })?.frames.remove(0);
    let picked = fps(&frame, 64, 0)?;
    let centers = frame.select(&picked);
    let nbr = knn(&centers, &frame, 8)?;
    let feats = group_geometric_features(&centers, &frame, &nbr)?;
    println!("{} points -> {} centers, k = {}", frame.len(), centers.len(), nbr.k());
    for i in 0..3 {
        println!("center {i} at {:?}", centers.point(i));
        for (j, &r) in nbr.row(i).iter().enumerate() {
            let g = feats.rows[i * nbr.k() + j];
            println!("  neighbour {r:3}  offset ({:+.3}, {:+.3}, {:+.3})  distance {:.3}", g[0], g[1], g[2], g[3]);
        }
    }
    let shifted = knn(&centers.translated([5.0, -2.0, 1.0]), &frame.translated([5.0, -2.0, 1.0]), 8)?;
    println!("neighbour indices unchanged under translation: {}", shifted.indices() == nbr.indices());
    Ok(())
}
