//! Saves an untrained model directory, predicts from a sequence file and
//! shows that a translated input gives a translated output.
//!
//! cargo run --release --example predict

use monet::io::{read_pcsq, write_pcsq};
use monet::model::{load_model, save_model};
use monet::synth::{make_sequence, SceneConfig};
use monet::{ModelConfig, Monet};

fn main() -> monet::Result<()> {
    let dir = std::env::temp_dir().join("monet-predict-example");
    let seq = make_sequence(&SceneConfig { seed: 4, ..SceneConfig::default() })?;
    std::fs::create_dir_all(&dir)?;
    write_pcsq(dir.join("input.pcsq"), &seq.frames[..5])?;
    let model = Monet::new(ModelConfig::default())?;
    save_model(dir.join("model"), &model, &model.init_params(7)?)?;

    let (model, params) = load_model(dir.join("model"))?;
    let frames = read_pcsq(dir.join("input.pcsq"))?;
    let preds = model.predict(&params, &frames, 5)?;
    write_pcsq(dir.join("pred.pcsq"), &preds)?;
    let c = [10.0, -4.0, 2.0];
    let moved: Vec<_> = frames.iter().map(|f| f.translated(c)).collect();
    let shifted = model.predict(&params, &moved, 5)?;
    let err = preds
        .iter()
        .zip(&shifted)
        .flat_map(|(p, q)| p.points().iter().zip(q.points()).flat_map(move |(a, b)| (0..3).map(move |k| (a[k] + c[k] - b[k]).abs())))
        .fold(0.0, f64::max);
    println!("predicted {} frames into {}; translation error {err:.1e}", preds.len(), dir.display());
    Ok(())
}
