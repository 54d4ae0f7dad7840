//! Finite-difference checks of every recorded layer and of the unrolled model.

use super::{drifting, random_cloud};
use monet::model::{encoder, rnn, Encoded, LayerConfig, ModelConfig, Monet, StepInput, Variant};
use monet::nn::{feature_propagation, grad_check, init_mlp, Activation, GradCheckReport, Graph, MlpSpec, ParamStore, Var};
use monet::train::loss;
use monet::Ablation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn layer(points: usize, k: usize, w: usize) -> LayerConfig {
    LayerConfig { points, k, content_width: w, motion_width: w, state_width: w }
}

/// Weighted sum of all entries, so every output element matters.
fn reduce(g: &mut Graph, x: Var) -> Var {
    let (r, c) = g.value(x).shape();
    let w = g.constant(monet::tensor::Mat::from_fn(c, 1, |i, _| 0.3 + 0.17 * i as f64));
    let col = g.linear(x, w, None).unwrap();
    let ones = g.constant(monet::tensor::Mat::from_fn(1, r, |_, j| 1.0 + 0.01 * j as f64));
    let t = g.linear(ones, col, None).unwrap();
    g.scale(t, 1.0)
}

/// Zero biases put the self-neighbour row exactly on the relu kink, where
/// central differences are meaningless; shift them off it.
fn jitter_biases(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, p) in store.iter_mut() {
        if name.ends_with(".bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
    }
}

fn check(store: &mut ParamStore, f: impl Fn(&mut Graph) -> monet::Result<Var>) -> GradCheckReport {
    jitter_biases(store, 99);
    grad_check(store, EPS, f).unwrap()
}

/// Passes when enough elements were compared, kinks stay rare and the
/// worst relative error is below the tolerance.
pub fn verdict(r: &GradCheckReport, min_checked: usize) -> Result<(), String> {
    if r.checked < min_checked {
        return Err(format!("only {} elements checked", r.checked));
    }
    if r.kinks * 100 > r.checked {
        return Err(format!("{} of {} elements skipped as kinks", r.kinks, r.checked));
    }
    if r.max_rel_error.is_nan() || r.max_rel_error >= TOL {
        return Err(format!("max relative error {:e}", r.max_rel_error));
    }
    Ok(())
}

/// Every check with its name and the minimum element count it must reach.
pub fn suite() -> Vec<(String, usize, GradCheckReport)> {
    let mut out = vec![
        ("mlp".to_string(), 1, mlp()),
        ("content encoder".into(), 1, content_encoder()),
        ("motion encoder".into(), 1, motion_encoder()),
        ("lstm".into(), 1, recurrent(Variant::Lstm)),
        ("gru".into(), 1, recurrent(Variant::Gru)),
        ("align".into(), 1, align()),
        ("feature propagation".into(), 1, propagation()),
        ("chamfer".into(), 1, chamfer()),
    ];
    for (v, a, t, tp) in FULL_MODEL_CASES {
        out.push((format!("model {v} {a} {t}+{tp}"), 100, full_model(v, a, t, tp)));
    }
    out
}

pub const FULL_MODEL_CASES: [(Variant, Ablation, usize, usize); 5] = [
    (Variant::Gru, Ablation::Full, 2, 1),
    (Variant::Lstm, Ablation::Full, 2, 1),
    (Variant::Gru, Ablation::Full, 3, 2),
    (Variant::Gru, Ablation::NoMotion, 2, 1),
    (Variant::Lstm, Ablation::NoContent, 2, 1),
];

pub fn mlp() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = MlpSpec::uniform(vec![6, 5], Activation::Tanh);
    init_mlp(&mut store, "m", 4, &spec, &mut rng).unwrap();
    let x = monet::tensor::Mat::from_fn(7, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
    check(&mut store, |g| {
        let xv = g.constant(x.clone());
        let y = monet::nn::shared_mlp(g, "m", &spec, xv)?;
        Ok(reduce(g, y))
    })
}

pub fn content_encoder() -> GradCheckReport {
    let cfg = layer(8, 4, 5);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    init_mlp(&mut store, "c", 4, &encoder::content_spec(&cfg), &mut rng).unwrap();
    init_mlp(&mut store, "c2", 4 + 5, &encoder::content_spec(&layer(4, 3, 6)), &mut rng).unwrap();
    let frame = random_cloud(20, 3);
    check(&mut store, |g| {
        let f = g.points(&frame);
        let e0 = Encoded::input(g, f)?;
        let e1 = encoder::content_encoder_layer(g, "c", &cfg, &e0, 0)?;
        let e2 = encoder::content_encoder_layer(g, "c2", &layer(4, 3, 6), &e1, 0)?;
        Ok(reduce(g, e2.e.unwrap()))
    })
}

pub fn motion_encoder() -> GradCheckReport {
    let cfg = layer(8, 4, 5);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    init_mlp(&mut store, "c", 4, &encoder::content_spec(&cfg), &mut rng).unwrap();
    init_mlp(&mut store, "m", 4 + 10, &encoder::motion_spec(&cfg), &mut rng).unwrap();
    let frames = drifting(16, 2, [0.1, 0.0, 0.05], 5);
    check(&mut store, |g| {
        let enc: Vec<Encoded> = frames
            .iter()
            .map(|f| {
                let v = g.points(f);
                let e0 = Encoded::input(g, v).unwrap();
                encoder::content_encoder_layer(g, "c", &cfg, &e0, 0).unwrap()
            })
            .collect();
        let m = encoder::motion_encoder(g, "m", &cfg, &enc[0], &enc[1])?;
        Ok(reduce(g, m))
    })
}

pub fn recurrent(variant: Variant) -> GradCheckReport {
    let cfg = layer(10, 3, 4);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = rnn::gate_spec(&cfg);
    match variant {
        Variant::Lstm => {
            for gate in rnn::LSTM_GATES {
                init_mlp(&mut store, &format!("r.{gate}"), rnn::gate_input_width(&cfg, gate), &spec, &mut rng).unwrap();
            }
        }
        Variant::Gru => {
            for gate in rnn::GRU_GATES {
                let key = if gate == "candidate" { "candidate_gru" } else { gate };
                init_mlp(&mut store, &format!("r.{gate}"), rnn::gate_input_width(&cfg, key), &spec, &mut rng).unwrap();
            }
        }
    }
    let clouds = [random_cloud(10, 7), random_cloud(10, 8), random_cloud(10, 9)];
    let feats: Vec<monet::tensor::Mat> =
        (0..6).map(|s| monet::tensor::Mat::from_fn(10, 4, |i, j| ((i * 7 + j * 3 + s * 11) as f64 * 0.61).sin())).collect();
    check(&mut store, |g| {
        let mut prev = None;
        let mut last = None;
        for (t, c) in clouds.iter().enumerate() {
            let x = g.points(c);
            let content = g.constant(feats[2 * t].clone());
            let motion = g.constant(feats[2 * t + 1].clone());
            let input = StepInput { x, cloud: c, content, motion };
            let st = match variant {
                Variant::Lstm => rnn::motion_lstm_step(g, "r", &cfg, &input, prev.as_ref())?.0,
                Variant::Gru => rnn::motion_gru_step(g, "r", &cfg, &input, prev.as_ref())?.0,
            };
            last = Some(st.h);
            prev = Some(st);
        }
        Ok(reduce(g, last.unwrap()))
    })
}

pub fn align() -> GradCheckReport {
    let cfg = layer(10, 4, 5);
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    init_mlp(&mut store, "a", 4 + 5, &monet::model::align::align_spec(&cfg), &mut rng).unwrap();
    init_mlp(&mut store, "f", 3, &MlpSpec::uniform(vec![5], Activation::Tanh), &mut rng).unwrap();
    let (now, before) = (random_cloud(10, 11), random_cloud(12, 12));
    check(&mut store, |g| {
        let xn = g.points(&now);
        let xb = g.points(&before);
        let m = monet::nn::shared_mlp(g, "f", &MlpSpec::uniform(vec![5], Activation::Tanh), xb)?;
        let out = monet::model::align::motion_align(g, "a", &cfg, xn, &now, xb, &before, m)?;
        Ok(reduce(g, out))
    })
}

pub fn propagation() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let spec = MlpSpec::uniform(vec![4, 3], Activation::Relu);
    init_mlp(&mut store, "fp", 5 + 2, &spec, &mut rng).unwrap();
    init_mlp(&mut store, "s", 3, &MlpSpec::uniform(vec![5], Activation::Tanh), &mut rng).unwrap();
    let dense = random_cloud(15, 14);
    let sparse = random_cloud(6, 15);
    let skip = monet::tensor::Mat::from_fn(15, 2, |i, j| (i as f64 * 0.3 - j as f64).cos());
    check(&mut store, |g| {
        let d = g.points(&dense);
        let s = g.points(&sparse);
        let sf = monet::nn::shared_mlp(g, "s", &MlpSpec::uniform(vec![5], Activation::Tanh), s)?;
        let sk = g.constant(skip.clone());
        let out = feature_propagation(g, d, s, sf, Some(sk), "fp", &spec)?;
        Ok(reduce(g, out))
    })
}

pub fn chamfer() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    init_mlp(&mut store, "d", 3, &MlpSpec::relu_hidden(vec![6, 3]), &mut rng).unwrap();
    let a = random_cloud(12, 17);
    let b = random_cloud(9, 18);
    check(&mut store, |g| {
        let x = g.points(&a);
        let flow = monet::nn::shared_mlp(g, "d", &MlpSpec::relu_hidden(vec![6, 3]), x)?;
        let moved = g.add(x, flow)?;
        let t = g.points(&b);
        g.chamfer(moved, t)
    })
}

/// The 2-layer, 32-point model unrolled over `observed` + `horizon` frames.
pub fn full_model(variant: Variant, ablation: Ablation, observed: usize, horizon: usize) -> GradCheckReport {
    let cfg = ModelConfig::uniform_k(32, &[16, 8], 4, &[6, 8]).with_variant(variant).with_ablation(ablation);
    let model = Monet::new(cfg).unwrap();
    let mut store = model.init_params(21).unwrap();
    jitter_biases(&mut store, 23);
    let frames = drifting(32, observed + horizon, [0.08, -0.04, 0.02], 22);
    grad_check(&mut store, EPS, |g| {
        let inputs: Vec<Var> = frames[..observed].iter().map(|f| g.points(f)).collect();
        let targets: Vec<Var> = frames[observed..].iter().map(|f| g.points(f)).collect();
        let out = model.rollout(g, &inputs, horizon)?;
        loss(g, &out.predictions, &targets)
    })
    .unwrap()
}
