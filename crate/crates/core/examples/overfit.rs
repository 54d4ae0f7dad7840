//! Overfits a single constant-velocity scene and compares against the
//! baselines every `--every` steps.
//!
//! cargo run --release --example overfit -- [iterations] [every]

use std::time::Instant;

use monet::model::{ModelConfig, Monet};
use monet::synth::{make_sequence, SceneConfig};
use monet::train::{baseline_copy_last, loss_value, train, TrainConfig};

fn main() -> monet::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let iterations = args.next().unwrap_or(2000);
    let every = args.next().unwrap_or(100);
    let scene = SceneConfig { speed: (0.5, 0.5), angular_speed: (0.0, 0.0), resample: false, seed: 1, ..SceneConfig::default() };
    let seq = make_sequence(&scene)?.frames;
    let (obs, fut) = seq.split_at(5);
    let model = Monet::new(ModelConfig::default())?;
    let mut params = model.init_params(0)?;
    let copy_last = loss_value(&baseline_copy_last(obs, 5)?, fut)?;
    let untrained = loss_value(&model.predict(&params, obs, 5)?, fut)?;
    println!("copy-last CD {copy_last:.5}, untrained CD {untrained:.5}");
    let cfg = TrainConfig { iterations: every, checkpoint_every: 0, ..TrainConfig::default() };
    let start = Instant::now();
    let data = vec![seq.clone()];
    while (params.step as usize) < iterations {
        let recs = train(&model, &mut params, &cfg, &data, |_| Ok(()), |_| {})?;
        let cd = loss_value(&model.predict(&params, obs, 5)?, fut)?;
        println!(
            "step {:5}  train loss {:.5}  CD {cd:.5}  {:.1}% of copy-last  {:.1}% of untrained  {:.0}s",
            params.step,
            recs.last().map_or(f64::NAN, |r| r.loss),
            100.0 * cd / copy_last,
            100.0 * cd / untrained,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
