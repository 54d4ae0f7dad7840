//! Compares a briefly trained model against the copy-last and constant-flow
//! baselines on a synthetic test split.
//!
//! cargo run --release --example evaluate -- [iterations]

use monet::synth::{dataset, SceneConfig, Split};
use monet::train::{evaluate, train, ConstantFlow, CopyLast, EvalConfig, ModelPredictor, Predictor, TrainConfig};
use monet::{ModelConfig, Monet};

fn main() -> monet::Result<()> {
    let iterations = std::env::args().nth(1).map_or(100, |a| a.parse().expect("iteration count"));
    let template = SceneConfig { n_points: 256, ..SceneConfig::default() };
    let (mut train_set, mut test_set) = (Vec::new(), Vec::new());
    for s in dataset(&template, 3, (10, 0, 5)) {
        let s = s?;
        if s.split == Split::Train { train_set.push(s.frames) } else { test_set.push(s.frames) }
    }
    let model = Monet::new(ModelConfig::uniform_k(256, &[128, 64, 32], 8, &[16, 32, 64]))?;
    let mut params = model.init_params(0)?;
    let cfg = TrainConfig { iterations, checkpoint_every: 0, ..TrainConfig::default() };
    train(&model, &mut params, &cfg, &train_set, |_| Ok(()), |_| {})?;
    let ours = ModelPredictor { name: "monet".into(), model: &model, params: &params };
    let methods: [&dyn Predictor; 3] = [&CopyLast, &ConstantFlow, &ours];
    let report = evaluate(&methods, &test_set, &EvalConfig { emd_cap: 128, ..EvalConfig::default() })?;
    for m in &report.methods {
        println!("{:14} CD per frame {:?}  mean EMD {:.3}  {:.3}s per prediction", m.name, m.cd.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>(), m.mean_emd(), m.seconds_per_prediction);
    }
    print!("{}", report.to_csv());
    Ok(())
}
