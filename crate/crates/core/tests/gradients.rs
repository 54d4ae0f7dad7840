//! Finite-difference checks of every recorded layer and of the unrolled model.

mod common;

use common::grads::{self, verdict, FULL_MODEL_CASES};
use common::random_cloud;
use monet::geom::knn;
use monet::model::Variant;

fn pass(what: &str, min_checked: usize, r: monet::nn::GradCheckReport) {
    if let Err(e) = verdict(&r, min_checked) {
        panic!("{what}: {e} ({r:?})");
    }
}

#[test]
fn shared_mlp_gradients() {
    pass("mlp", 1, grads::mlp());
}

#[test]
fn content_encoder_gradients() {
    pass("content", 1, grads::content_encoder());
}

#[test]
fn motion_encoder_gradients() {
    pass("motion", 1, grads::motion_encoder());
}

#[test]
fn lstm_gradients() {
    pass("lstm", 1, grads::recurrent(Variant::Lstm));
}

#[test]
fn gru_gradients() {
    pass("gru", 1, grads::recurrent(Variant::Gru));
}

#[test]
fn align_gradients() {
    pass("align", 1, grads::align());
}

#[test]
fn feature_propagation_gradients() {
    pass("propagation", 1, grads::propagation());
}

#[test]
fn chamfer_gradients_through_points() {
    pass("chamfer", 1, grads::chamfer());
}

#[test]
fn full_model_gradients() {
    for (v, a, t, tp) in FULL_MODEL_CASES {
        pass(&format!("{v} {a} {t}+{tp}"), 100, grads::full_model(v, a, t, tp));
    }
}

#[test]
fn knn_used_by_tests_is_consistent() {
    let c = random_cloud(10, 1);
    let n = knn(&c, &c, 1).unwrap();
    assert!((0..10).all(|i| n.row(i)[0] == i));
}
