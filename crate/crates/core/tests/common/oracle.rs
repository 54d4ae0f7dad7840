//! Straightforward scalar-loop re-implementations used as references.
#![allow(dead_code)]

use monet::nn::ParamStore;

pub type P = [f64; 3];

/// Indices of the `k` nearest references, nearer first, lowest index on ties.
pub fn knn(q: &P, refs: &[P], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = refs
        .iter()
        .enumerate()
        .map(|(j, r)| ((r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2) + (r[2] - q[2]).powi(2), j))
        .collect();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    order.into_iter().take(k).map(|x| x.1).collect()
}

pub fn geo(c: &P, r: &P) -> Vec<f64> {
    let d = [r[0] - c[0], r[1] - c[1], r[2] - c[2]];
    vec![d[0], d[1], d[2], (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()]
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// `acts[i]` is applied after layer `i`.
pub fn mlp(store: &ParamStore, prefix: &str, acts: &[fn(f64) -> f64], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, act) in acts.iter().enumerate() {
        let w = store.value(&format!("{prefix}.{i}.weight")).unwrap();
        let b = store.value(&format!("{prefix}.{i}.bias")).unwrap();
        assert_eq!(w.rows(), h.len());
        let mut out = vec![0.0; w.cols()];
        for (o, slot) in out.iter_mut().enumerate() {
            let mut s = b.get(0, o);
            for (r, hv) in h.iter().enumerate() {
                s += hv * w.get(r, o);
            }
            *slot = act(s);
        }
        h = out;
    }
    h
}

pub fn ident(x: f64) -> f64 {
    x
}

/// Gate MLPs have a relu hidden layer and a linear output.
pub const GATE: [fn(f64) -> f64; 2] = [relu, ident];

fn pool(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = rows[0].clone();
    for r in &rows[1..] {
        for (o, v) in out.iter_mut().zip(r) {
            if *v > *o {
                *o = *v;
            }
        }
    }
    out
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Previous points with their hidden and (optionally) cell state rows.
pub struct Prev<'a> {
    pub x: &'a [P],
    pub h: &'a [Vec<f64>],
    pub c: Option<&'a [Vec<f64>]>,
}

struct Cluster {
    geo: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
}

fn cluster(p: &P, prev: Option<&Prev>, k: usize, s: usize) -> Cluster {
    match prev {
        None => Cluster { geo: vec![vec![0.0; 4]; k], h: vec![vec![0.0; s]; k], c: vec![vec![0.0; s]; k] },
        Some(pr) => {
            let nb = knn(p, pr.x, k);
            Cluster {
                geo: nb.iter().map(|&j| geo(p, &pr.x[j])).collect(),
                h: nb.iter().map(|&j| pr.h[j].clone()).collect(),
                c: nb.iter().map(|&j| pr.c.map_or(vec![0.0; s], |c| c[j].clone())).collect(),
            }
        }
    }
}

/// MotionLSTM step: returns `(H, C)` rows for every current point.
#[allow(clippy::too_many_arguments)]
pub fn lstm(
    store: &ParamStore,
    prefix: &str,
    k: usize,
    s: usize,
    x: &[P],
    m: &[Vec<f64>],
    e: &[Vec<f64>],
    prev: Option<&Prev>,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut hs = Vec::new();
    let mut cs = Vec::new();
    for i in 0..x.len() {
        let cl = cluster(&x[i], prev, k, s);
        let gate = |name: &str| -> Vec<f64> {
            let rows: Vec<Vec<f64>> =
                (0..k).map(|j| mlp(store, &format!("{prefix}.{name}"), &GATE, &cat(&[&cl.geo[j], &cl.h[j], &m[i], &e[i]]))).collect();
            pool(&rows)
        };
        let ig: Vec<f64> = gate("input").into_iter().map(sigmoid).collect();
        let fg: Vec<f64> = gate("forget").into_iter().map(sigmoid).collect();
        let og: Vec<f64> = gate("output").into_iter().map(sigmoid).collect();
        let cand: Vec<f64> = gate("candidate").into_iter().map(f64::tanh).collect();
        let chat = pool(&(0..k).map(|j| mlp(store, &format!("{prefix}.cell"), &GATE, &cat(&[&cl.geo[j], &cl.c[j]]))).collect::<Vec<_>>());
        let c: Vec<f64> = (0..s).map(|q| fg[q] * chat[q] + ig[q] * cand[q]).collect();
        let h: Vec<f64> = (0..s).map(|q| og[q] * c[q].tanh()).collect();
        hs.push(h);
        cs.push(c);
    }
    (hs, cs)
}

/// MotionGRU step: returns `H` rows.
#[allow(clippy::too_many_arguments)]
pub fn gru(
    store: &ParamStore,
    prefix: &str,
    k: usize,
    s: usize,
    x: &[P],
    m: &[Vec<f64>],
    e: &[Vec<f64>],
    prev: Option<&Prev>,
) -> Vec<Vec<f64>> {
    let mut hs = Vec::new();
    for i in 0..x.len() {
        let cl = cluster(&x[i], prev, k, s);
        let gate = |name: &str| -> Vec<f64> {
            let rows: Vec<Vec<f64>> =
                (0..k).map(|j| mlp(store, &format!("{prefix}.{name}"), &GATE, &cat(&[&cl.geo[j], &cl.h[j], &m[i], &e[i]]))).collect();
            pool(&rows)
        };
        let z: Vec<f64> = gate("update").into_iter().map(sigmoid).collect();
        let r: Vec<f64> = gate("reset").into_iter().map(sigmoid).collect();
        let hhat = pool(&(0..k).map(|j| mlp(store, &format!("{prefix}.hidden"), &GATE, &cat(&[&cl.geo[j], &cl.h[j]]))).collect::<Vec<_>>());
        let gated: Vec<f64> = (0..s).map(|q| r[q] * hhat[q]).collect();
        let cand: Vec<f64> = mlp(store, &format!("{prefix}.candidate"), &GATE, &cat(&[&gated, &m[i], &e[i]])).into_iter().map(f64::tanh).collect();
        hs.push((0..s).map(|q| z[q] * hhat[q] + (1.0 - z[q]) * cand[q]).collect());
    }
    hs
}

/// Inverse-distance interpolation from the 3 nearest sparse points.
pub fn interpolate(dense: &[P], sparse: &[P], feats: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = 3.min(sparse.len());
    dense
        .iter()
        .map(|p| {
            let nb = knn(p, sparse, k);
            let d: Vec<f64> = nb.iter().map(|&j| geo(p, &sparse[j])[3]).collect();
            if let Some(hit) = d.iter().position(|&x| x < 1e-10) {
                return feats[nb[hit]].clone();
            }
            let total: f64 = d.iter().map(|x| 1.0 / x).sum();
            let mut out = vec![0.0; feats[0].len()];
            for (&j, dj) in nb.iter().zip(&d) {
                for (o, f) in out.iter_mut().zip(&feats[j]) {
                    *o += (1.0 / dj) / total * f;
                }
            }
            out
        })
        .collect()
}
