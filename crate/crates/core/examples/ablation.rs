//! Trains the full model and both ablations with the same budget on one
//! synthetic dataset and compares test-set Chamfer distances.
//!
//! cargo run --release --example ablation -- [iterations] [points] [test scenes] [train scenes]

use std::time::Instant;

use monet::synth::{dataset, SceneConfig, Split};
use monet::train::{evaluate, train, ConstantFlow, CopyLast, EvalConfig, ModelPredictor, Predictor, TrainConfig};
use monet::{Ablation, ModelConfig, Monet};

fn main() -> monet::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let iterations = args.next().unwrap_or(300);
    let points = args.next().unwrap_or(256);
    let n_test = args.next().unwrap_or(20);
    let n_train = args.next().unwrap_or(200);
    let template = SceneConfig { n_points: points, resample: false, ..SceneConfig::default() };
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    for s in dataset(&template, 7, (n_train, 0, n_test)) {
        let s = s?;
        match s.split {
            Split::Train => train_set.push(s.frames),
            _ => test_set.push(s.frames),
        }
    }
    let layers = [points / 2, points / 4, points / 8];
    let cfg = TrainConfig { iterations, checkpoint_every: 0, ..TrainConfig::default() };
    let mut trained = Vec::new();
    for ablation in [Ablation::Full, Ablation::NoMotion, Ablation::NoContent] {
        let model = Monet::new(ModelConfig::uniform_k(points, &layers, 8, &[16, 32, 64]).with_ablation(ablation))?;
        let mut params = model.init_params(0)?;
        let start = Instant::now();
        let curve = train(&model, &mut params, &cfg, &train_set, |_| Ok(()), |_| {})?;
        let tail: f64 = curve.iter().rev().take(20).map(|r| r.loss).sum::<f64>() / 20f64.min(curve.len() as f64);
        println!("{ablation}: trained in {:.0}s, final train loss {tail:.4}", start.elapsed().as_secs_f64());
        trained.push((ablation, model, params));
    }
    let predictors: Vec<ModelPredictor> =
        trained.iter().map(|(a, m, p)| ModelPredictor { name: a.to_string(), model: m, params: p }).collect();
    let mut methods: Vec<&dyn Predictor> = vec![&CopyLast, &ConstantFlow];
    methods.extend(predictors.iter().map(|p| p as &dyn Predictor));
    let report = evaluate(&methods, &test_set, &EvalConfig { emd_cap: 128, ..EvalConfig::default() })?;
    for m in &report.methods {
        println!("{:14} mean CD {:.4}  mean EMD {:.4}  per-frame CD {:?}", m.name, m.mean_cd(), m.mean_emd(), m.cd.iter().map(|c| (c * 1e3).round() / 1e3).collect::<Vec<_>>());
    }
    Ok(())
}
