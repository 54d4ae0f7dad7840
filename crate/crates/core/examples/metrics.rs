//! Chamfer distance and exact EMD between a frame and a perturbed copy.
//!
//! cargo run --release --example metrics

use monet::geom::random_downsample;
use monet::metrics::{chamfer, emd_bruteforce, emd_exact};
use monet::synth::{make_sequence, SceneConfig};
use monet::PointCloud;

fn main() -> monet::Result<()> {
    let seq = make_sequence(&SceneConfig { seed: 9, ..SceneConfig::default() })?;
    let (a, b) = (&seq.frames[0], &seq.frames[3]);
    println!("512 points, frames 0 and 3");
    println!("  chamfer {:.4} (symmetric: {})", chamfer(a, b)?, chamfer(a, b)? == chamfer(b, a)?);
    let (emd, assignment) = emd_exact(&random_downsample(a, 256, 1)?, &random_downsample(b, 256, 1)?)?;
    println!("  EMD on 256-point subsets {emd:.4}, first matches {:?}", &assignment.mapping[..5]);

    let p = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])?;
    let q = PointCloud::new(vec![[0.1, 2.0, 0.0], [0.0, 0.1, 0.0], [1.2, 0.0, 0.0]])?;
    println!("3-point toy: exact EMD {:.6}, brute force {:.6}", emd_exact(&p, &q)?.0, emd_bruteforce(&p, &q)?);
    Ok(())
}
