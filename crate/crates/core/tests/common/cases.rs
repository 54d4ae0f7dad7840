//! Randomised instances shared by the model tests and the acceptance run.

use super::oracle::{self, Prev, P};
use super::random_cloud;
use monet::model::{rnn, LayerConfig, StepInput};
use monet::nn::{init_mlp, Graph, ParamStore};
use monet::tensor::Mat;
use monet::Variant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn random_rows(n: usize, c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..c).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()
}

pub fn to_mat(r: &[Vec<f64>]) -> Mat {
    Mat::from_fn(r.len(), r[0].len(), |i, j| r[i][j])
}

pub fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for (name, p) in store.iter_mut() {
        if name.ends_with(".bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
    }
}

pub fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
}

pub fn rnn_store(variant: Variant, cfg: &LayerConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut store = ParamStore::new();
    let spec = rnn::gate_spec(cfg);
    let gates: Vec<(&str, &str)> = match variant {
        Variant::Lstm => rnn::LSTM_GATES.iter().map(|g| (*g, *g)).collect(),
        Variant::Gru => rnn::GRU_GATES.iter().map(|g| (*g, if *g == "candidate" { "candidate_gru" } else { *g })).collect(),
    };
    for (gate, key) in gates {
        init_mlp(&mut store, &format!("r.{gate}"), rnn::gate_input_width(cfg, key), &spec, rng).unwrap();
    }
    jitter(&mut store, rng);
    store
}

/// One random recurrent-step instance compared against the scalar loops.
pub fn recurrent_instance(variant: Variant, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let np = rng.gen_range(1..=8);
    let k = rng.gen_range(1..=n.min(np));
    let (s, m_w, e_w) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
    let cfg = LayerConfig { points: n, k, content_width: e_w, motion_width: m_w, state_width: s };
    let store = rnn_store(variant, &cfg, &mut rng);
    let cur = random_cloud(n, seed * 3 + 1);
    let prev_pc = random_cloud(np, seed * 3 + 2);
    let m = random_rows(n, m_w, &mut rng);
    let e = random_rows(n, e_w, &mut rng);
    let ph = random_rows(np, s, &mut rng);
    let pc = random_rows(np, s, &mut rng);
    let with_prev = !seed.is_multiple_of(5);

    let mut g = Graph::new(&store);
    let x = g.points(&cur);
    let (content, motion) = (g.constant(to_mat(&e)), g.constant(to_mat(&m)));
    let input = StepInput { x, cloud: &cur, content, motion };
    let prev_state = with_prev.then(|| {
        let px = g.points(&prev_pc);
        let h = g.constant(to_mat(&ph));
        let c = (variant == Variant::Lstm).then(|| g.constant(to_mat(&pc)));
        rnn::LayerState { x: px, cloud: prev_pc.clone(), h, c }
    });
    let cur_pts: Vec<P> = cur.points().to_vec();
    let prev_pts: Vec<P> = prev_pc.points().to_vec();
    let oprev = Prev { x: &prev_pts, h: &ph, c: Some(&pc) };
    let oprev = with_prev.then_some(&oprev);
    match variant {
        Variant::Lstm => {
            let (st, gates) = rnn::motion_lstm_step(&mut g, "r", &cfg, &input, prev_state.as_ref()).unwrap();
            for gv in [gates.input, gates.forget, gates.output] {
                assert!(g.value(gv).data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(g.value(gates.candidate).data().iter().all(|&v| v > -1.0 && v < 1.0));
            let (h, c) = oracle::lstm(&store, "r", k, s, &cur_pts, &m, &e, oprev);
            max_diff(&rows(g.value(st.h)), &h).max(max_diff(&rows(g.value(st.c.unwrap())), &c))
        }
        Variant::Gru => {
            let (st, gates) = rnn::motion_gru_step(&mut g, "r", &cfg, &input, prev_state.as_ref()).unwrap();
            for gv in [gates.update, gates.reset] {
                assert!(g.value(gv).data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(g.value(gates.candidate).data().iter().all(|&v| v > -1.0 && v < 1.0));
            let h = oracle::gru(&store, "r", k, s, &cur_pts, &m, &e, oprev);
            max_diff(&rows(g.value(st.h)), &h)
        }
    }
}
