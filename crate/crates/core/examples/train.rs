//! Trains a small model on a handful of synthetic scenes, writes the loss
//! curve and a checkpoint, and reloads it.
//!
//! cargo run --release --example train -- [iterations] [out dir]

use std::fs;
use std::path::PathBuf;

use monet::model::{load_model, save_model, CHECKPOINT_FILE};
use monet::synth::{dataset, SceneConfig};
use monet::train::{loss_csv, train, TrainConfig};
use monet::{ModelConfig, Monet, Variant};

fn main() -> monet::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(100, |a| a.parse().expect("iteration count"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "run".into()));
    let template = SceneConfig { n_points: 256, ..SceneConfig::default() };
    let data: Vec<_> = dataset(&template, 1, (8, 0, 0)).map(|s| s.map(|s| s.frames)).collect::<monet::Result<_>>()?;
    let model = Monet::new(ModelConfig::uniform_k(256, &[128, 64, 32], 8, &[16, 32, 64]).with_variant(Variant::Lstm))?;
    let mut params = model.init_params(0)?;
    println!("{} tensors, {} parameters", params.len(), params.element_count());
    let cfg = TrainConfig { iterations, checkpoint_every: 50, ..TrainConfig::default() };
    fs::create_dir_all(&out)?;
    let records = train(
        &model,
        &mut params,
        &cfg,
        &data,
        |p| p.save_full(out.join(CHECKPOINT_FILE)),
        |r| {
            if r.iteration % 10 == 0 {
                println!("iteration {:4}  sample {}  loss {:.4}  grad norm {:.3}", r.iteration, r.sample, r.loss, r.grad_norm);
            }
        },
    )?;
    save_model(&out, &model, &params)?;
    fs::write(out.join("loss.csv"), loss_csv(&records))?;
    let (_, reloaded) = load_model(&out)?;
    println!("reloaded checkpoint at step {} (matches: {})", reloaded.step, reloaded == params);
    Ok(())
}
