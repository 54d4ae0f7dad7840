//! Finite-difference check of the full unrolled model on a toy sequence.
//!
//! cargo run --release --example gradcheck

use monet::nn::{grad_check, Var};
use monet::train::loss;
use monet::{ModelConfig, Monet, PointCloud, Variant};

fn main() -> monet::Result<()> {
    let model = Monet::new(ModelConfig::uniform_k(32, &[16, 8], 4, &[6, 8]).with_variant(Variant::Lstm))?;
    let mut params = model.init_params(1)?;
    for (name, p) in params.iter_mut() {
        if name.ends_with(".bias") {
            for (i, v) in p.value.data_mut().iter_mut().enumerate() {
                *v += 0.05 * ((i * 7 + name.len()) as f64).sin();
            }
        }
    }
    let frames: Vec<PointCloud> = (0..3)
        .map(|t| {
            let pts = (0..32).map(|i| {
                let a = i as f64 * 0.7;
                [a.cos() + 0.1 * t as f64, a.sin(), 0.05 * i as f64]
            });
            PointCloud::new(pts.collect())
        })
        .collect::<monet::Result<_>>()?;
    let report = grad_check(&mut params, 1e-5, |g| {
        let inputs: Vec<Var> = frames[..2].iter().map(|f| g.points(f)).collect();
        let target = g.points(&frames[2]);
        let out = model.rollout(g, &inputs, 1)?;
        loss(g, &out.predictions, &[target])
    })?;
    println!(
        "{} elements checked, {} skipped at kinks, max relative error {:.2e} ({} #{})",
        report.checked, report.kinks, report.max_rel_error, report.worst_param, report.worst_index
    );
    Ok(())
}
