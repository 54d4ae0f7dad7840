//! Forward-pass recording for the fixed set of operations the network uses,
//! with an exact reverse pass.
//!
//! Values are `Mat`s. A point-wise feature map over `n` centers with `k`
//! neighbours each is stored as `(n·k) × c`, neighbours of one center in
//! consecutive rows.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::geom::{NeighborIndex, PointCloud};
use crate::nn::params::ParamStore;
use crate::tensor::{gemm, Mat};

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    None,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::None => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::None => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Distances below this count as an exact coincidence during interpolation.
pub const EXACT_MATCH_EPS: f64 = 1e-10;

enum Op {
    Constant,
    Param,
    Linear { x: Var, w: Var, b: Option<Var> },
    Act { x: Var, kind: Activation },
    Gather { x: Var, idx: Vec<usize> },
    Concat { parts: Vec<Var> },
    MaxPool { x: Var, argmax: Vec<usize> },
    Softmax { x: Var, k: usize },
    WeightedSum { w: Var, x: Var, k: usize },
    Mul(Var, Var),
    Add(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Sum(Vec<Var>),
    Geometry { centers: Var, refs: Var, idx: Vec<usize>, k: usize },
    Interp { dense: Var, sparse: Var, feats: Var, idx: Vec<usize>, k: usize, weights: Vec<f64>, exact: Vec<bool> },
    Chamfer { a: Var, b: Var, nn_ab: Vec<usize>, nn_ba: Vec<usize> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param => vec![],
            Op::Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::Act { x, .. } | Op::Gather { x, .. } | Op::MaxPool { x, .. } | Op::Softmax { x, .. } => vec![*x],
            Op::Concat { parts } | Op::Sum(parts) => parts.clone(),
            Op::WeightedSum { w, x, .. } => vec![*w, *x],
            Op::Mul(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::OneMinus(a) | Op::Scale(a, _) => vec![*a],
            Op::Geometry { centers, refs, .. } => vec![*centers, *refs],
            Op::Interp { dense, sparse, feats, .. } => vec![*dense, *sparse, *feats],
            Op::Chamfer { a, b, .. } => vec![*a, *b],
        }
    }
}

struct Node {
    value: Mat,
    op: Op,
    /// Whether any parameter flows into this value.
    requires: bool,
}

/// A recorded computation bound to a parameter store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let requires = match op {
            Op::Param => true,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].requires),
        };
        self.nodes.push(Node { value, op, requires });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Constant)
    }

    pub fn points(&mut self, cloud: &PointCloud) -> Var {
        self.constant(cloud.to_mat())
    }

    /// The store's tensor `name`; repeated calls return the same handle.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = self.store.value(name)?.clone();
        let v = self.push(value, Op::Param);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn cloud(&self, v: Var) -> Result<PointCloud> {
        PointCloud::from_mat(self.value(v))
    }

    /// `x · w + b` row-wise.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.rows() {
            return Err(Error::Config(format!("linear: input width {} vs weight {:?}", xv.cols(), wv.shape())));
        }
        let mut out = Mat::zeros(xv.rows(), wv.cols());
        let beta = if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, wv.cols()) {
                return Err(Error::Config(format!("linear: bias {:?} vs output width {}", bv.shape(), wv.cols())));
            }
            for r in 0..out.rows() {
                out.row_mut(r).copy_from_slice(bv.row(0));
            }
            1.0
        } else {
            0.0
        };
        gemm(xv, false, wv, false, &mut out, beta);
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn act(&mut self, x: Var, kind: Activation) -> Var {
        if kind == Activation::None {
            return x;
        }
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
        self.push(out, Op::Act { x, kind })
    }

    /// Row `r` of the output is row `idx[r]` of `x`.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = Mat::zeros(idx.len(), c);
        for (r, &i) in idx.iter().enumerate() {
            if i >= xv.rows() {
                return Err(Error::Input(format!("gather index {i} out of range {}", xv.rows())));
            }
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        Ok(self.push(out, Op::Gather { x, idx }))
    }

    /// Each row of `x` repeated `k` times.
    pub fn repeat_rows(&mut self, x: Var, k: usize) -> Result<Var> {
        let n = self.value(x).rows();
        self.gather(x, (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect())
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Config("concat: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(r);
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat { parts: parts.to_vec() }))
    }

    /// Channel-wise maximum over consecutive groups of `k` rows.
    pub fn maxpool(&mut self, x: Var, k: usize) -> Result<Var> {
        let xv = self.value(x);
        if k == 0 || !xv.rows().is_multiple_of(k) {
            return Err(Error::Config(format!("maxpool: {} rows not divisible by k = {k}", xv.rows())));
        }
        let (n, c) = (xv.rows() / k, xv.cols());
        let mut out = Mat::zeros(n, c);
        let mut argmax = vec![0usize; n * c];
        for i in 0..n {
            for ch in 0..c {
                let mut best = i * k;
                let mut bv = xv.get(best, ch);
                for j in 1..k {
                    let v = xv.get(i * k + j, ch);
                    if v > bv {
                        bv = v;
                        best = i * k + j;
                    }
                }
                out.set(i, ch, bv);
                argmax[i * c + ch] = best;
            }
        }
        Ok(self.push(out, Op::MaxPool { x, argmax }))
    }

    /// Softmax over consecutive groups of `k` entries of an `(n·k) × 1` column.
    pub fn softmax(&mut self, x: Var, k: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() != 1 || k == 0 || !xv.rows().is_multiple_of(k) {
            return Err(Error::Config(format!("softmax: expected (n*{k}) x 1, got {:?}", xv.shape())));
        }
        let mut out = xv.clone();
        for g in out.data_mut().chunks_mut(k) {
            let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in g.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in g.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.push(out, Op::Softmax { x, k }))
    }

    /// `out[i] = Σ_j w[i·k + j] · x[i·k + j]` for an `(n·k) × 1` weight column.
    pub fn weighted_sum(&mut self, w: Var, x: Var, k: usize) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.cols() != 1 || wv.rows() != xv.rows() || k == 0 || xv.rows() % k != 0 {
            return Err(Error::Config("weighted_sum: shape mismatch".into()));
        }
        let (n, c) = (xv.rows() / k, xv.cols());
        let mut out = Mat::zeros(n, c);
        for i in 0..n {
            let dst = out.row_mut(i);
            for j in 0..k {
                let r = i * k + j;
                let wr = wv.get(r, 0);
                for (d, s) in dst.iter_mut().zip(xv.row(r)) {
                    *d += wr * s;
                }
            }
        }
        Ok(self.push(out, Op::WeightedSum { w, x, k }))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Config(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        self.push(out, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(a, s))
    }

    /// Sum of all entries of every input, as a `1 × 1` value.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let s: f64 = parts.iter().map(|&p| self.value(p).data().iter().sum::<f64>()).sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Sum(parts.to_vec()))
    }

    pub fn mean(&mut self, scalars: &[Var]) -> Var {
        let s = self.sum(scalars);
        self.scale(s, 1.0 / scalars.len() as f64)
    }

    /// `(dx, dy, dz, |d|)` rows, `d = refs[nbr] - centers[i]`.
    pub fn geometry(&mut self, centers: Var, refs: Var, nbr: &NeighborIndex) -> Result<Var> {
        let (cv, rv) = (self.value(centers), self.value(refs));
        if cv.cols() != 3 || rv.cols() != 3 || nbr.center_count() != cv.rows() {
            return Err(Error::Config("geometry: coordinate shapes do not match neighbor index".into()));
        }
        if nbr.indices().iter().any(|&j| j >= rv.rows()) {
            return Err(Error::Input("geometry: neighbor index out of range".into()));
        }
        let k = nbr.k();
        let mut out = Mat::zeros(cv.rows() * k, 4);
        for i in 0..cv.rows() {
            let c = cv.row(i);
            for (j, &r) in nbr.row(i).iter().enumerate() {
                let p = rv.row(r);
                let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                out.row_mut(i * k + j).copy_from_slice(&[d[0], d[1], d[2], n]);
            }
        }
        Ok(self.push(out, Op::Geometry { centers, refs, idx: nbr.indices().to_vec(), k }))
    }

    /// Inverse-distance interpolation of `feats` (rows aligned with `sparse`)
    /// onto `dense` using neighbour rows `nbr` (dense → sparse).
    pub fn interpolate(&mut self, dense: Var, sparse: Var, feats: Var, nbr: &NeighborIndex) -> Result<Var> {
        let (dv, sv, fv) = (self.value(dense), self.value(sparse), self.value(feats));
        if dv.cols() != 3 || sv.cols() != 3 || fv.rows() != sv.rows() || nbr.center_count() != dv.rows() {
            return Err(Error::Config("interpolate: shapes do not match".into()));
        }
        let k = nbr.k();
        let c = fv.cols();
        let mut out = Mat::zeros(dv.rows(), c);
        let mut weights = vec![0.0; dv.rows() * k];
        let mut exact = vec![false; dv.rows()];
        for i in 0..dv.rows() {
            let p = dv.row(i);
            let row = nbr.row(i);
            let ds: Vec<f64> = row
                .iter()
                .map(|&j| {
                    let q = sv.row(j);
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                })
                .collect();
            let w = &mut weights[i * k..(i + 1) * k];
            if let Some(hit) = ds.iter().position(|&d| d < EXACT_MATCH_EPS) {
                exact[i] = true;
                w[hit] = 1.0;
            } else {
                let total: f64 = ds.iter().map(|d| 1.0 / d).sum();
                for (wj, d) in w.iter_mut().zip(&ds) {
                    *wj = (1.0 / d) / total;
                }
            }
            let dst = out.row_mut(i);
            for (&j, &wj) in row.iter().zip(w.iter()) {
                if wj != 0.0 {
                    for (o, f) in dst.iter_mut().zip(fv.row(j)) {
                        *o += wj * f;
                    }
                }
            }
        }
        Ok(self.push(out, Op::Interp { dense, sparse, feats, idx: nbr.indices().to_vec(), k, weights, exact }))
    }

    /// Symmetric Chamfer distance between two `N × 3` coordinate sets, each
    /// direction averaged over its own point count.
    pub fn chamfer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != 3 || bv.cols() != 3 || av.rows() == 0 || bv.rows() == 0 {
            return Err(Error::Input("chamfer: expected non-empty N x 3 inputs".into()));
        }
        let (nn_ab, dab) = crate::metrics::nearest_rows(av, bv);
        let (nn_ba, dba) = crate::metrics::nearest_rows(bv, av);
        let loss = dab.iter().sum::<f64>() / av.rows() as f64 + dba.iter().sum::<f64>() / bv.rows() as f64;
        Ok(self.push(Mat::from_vec(1, 1, vec![loss]), Op::Chamfer { a, b, nn_ab, nn_ba }))
    }

    /// Reverse pass from a `1 × 1` root. Returns gradients by parameter name.
    pub fn backward(&self, root: Var) -> Result<BTreeMap<String, Mat>> {
        let grads = self.backward_all(root)?;
        let mut out = BTreeMap::new();
        for (name, &v) in &self.params {
            let (r, c) = self.value(v).shape();
            out.insert(name.clone(), grads[v.0].clone().unwrap_or_else(|| Mat::zeros(r, c)));
        }
        Ok(out)
    }

    /// Reverse pass returning the gradient of every recorded value.
    pub fn backward_all(&self, root: Var) -> Result<Vec<Option<Mat>>> {
        let nodes = &self.nodes;
        let acc = |grads: &mut [Option<Mat>], v: Var, g: Mat| {
            if nodes[v.0].requires {
                acc(grads, v, g)
            }
        };
        if self.value(root).shape() != (1, 1) {
            return Err(Error::Config("backward root must be a scalar".into()));
        }
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        for id in (0..=root.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[id];
            if !node.requires {
                continue;
            }
            match &node.op {
                Op::Constant | Op::Param => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if needs(&self.nodes, *x) {
                        let mut dx = Mat::zeros(xv.rows(), xv.cols());
                        gemm(&g, false, wv, true, &mut dx, 0.0);
                        acc(&mut grads, *x, dx);
                    }
                    let mut dw = Mat::zeros(wv.rows(), wv.cols());
                    gemm(xv, true, &g, false, &mut dw, 0.0);
                    acc(&mut grads, *w, dw);
                    if let Some(b) = b {
                        let mut db = Mat::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        acc(&mut grads, *b, db);
                    }
                }
                Op::Act { x, kind } => {
                    let mut dx = g;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d *= kind.grad_from_output(*y);
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Gather { x, idx } => {
                    let xv = self.value(*x);
                    let mut dx = Mat::zeros(xv.rows(), xv.cols());
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let part = Mat::from_fn(g.rows(), c, |r, ch| g.get(r, off + ch));
                        off += c;
                        acc(&mut grads, p, part);
                    }
                }
                Op::MaxPool { x, argmax } => {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut dx = Mat::zeros(xv.rows(), c);
                    for i in 0..g.rows() {
                        for ch in 0..c {
                            let src = argmax[i * c + ch];
                            dx.data_mut()[src * c + ch] += g.get(i, ch);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Softmax { x, k } => {
                    let y = node.value.data();
                    let mut dx = Mat::zeros(y.len(), 1);
                    for (grp, (yg, gg)) in y.chunks(*k).zip(g.data().chunks(*k)).enumerate() {
                        let dot: f64 = yg.iter().zip(gg).map(|(a, b)| a * b).sum();
                        for j in 0..*k {
                            dx.data_mut()[grp * k + j] = yg[j] * (gg[j] - dot);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::WeightedSum { w, x, k } => {
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    let c = xv.cols();
                    let mut dw = Mat::zeros(wv.rows(), 1);
                    let mut dx = Mat::zeros(xv.rows(), c);
                    for r in 0..xv.rows() {
                        let gi = g.row(r / k);
                        dw.data_mut()[r] = gi.iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        let wr = wv.get(r, 0);
                        for (d, gv) in dx.row_mut(r).iter_mut().zip(gi) {
                            *d = wr * gv;
                        }
                    }
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *x, dx);
                }
                Op::Mul(a, b) => {
                    let mut da = g.clone();
                    for (d, v) in da.data_mut().iter_mut().zip(self.value(*b).data()) {
                        *d *= v;
                    }
                    let mut db = g;
                    for (d, v) in db.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *d *= v;
                    }
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::OneMinus(a) => {
                    let mut da = g;
                    da.data_mut().iter_mut().for_each(|v| *v = -*v);
                    acc(&mut grads, *a, da);
                }
                Op::Scale(a, s) => {
                    let mut da = g;
                    da.data_mut().iter_mut().for_each(|v| *v *= s);
                    acc(&mut grads, *a, da);
                }
                Op::Sum(parts) => {
                    let s = g.get(0, 0);
                    for &p in parts {
                        let (r, c) = self.value(p).shape();
                        acc(&mut grads, p, Mat::from_vec(r, c, vec![s; r * c]));
                    }
                }
                Op::Geometry { centers, refs, idx, k } => {
                    let (cv, rv) = (self.value(*centers), self.value(*refs));
                    let mut dc = Mat::zeros(cv.rows(), 3);
                    let mut dr = Mat::zeros(rv.rows(), 3);
                    for (row, &j) in idx.iter().enumerate() {
                        let i = row / k;
                        let o = node.value.row(row);
                        let gr = g.row(row);
                        let mut gd = [gr[0], gr[1], gr[2]];
                        if o[3] > 0.0 {
                            for a in 0..3 {
                                gd[a] += gr[3] * o[a] / o[3];
                            }
                        }
                        for a in 0..3 {
                            dr.data_mut()[j * 3 + a] += gd[a];
                            dc.data_mut()[i * 3 + a] -= gd[a];
                        }
                    }
                    acc(&mut grads, *centers, dc);
                    acc(&mut grads, *refs, dr);
                }
                Op::Interp { dense, sparse, feats, idx, k, weights, exact } => {
                    let (dv, sv, fv) = (self.value(*dense), self.value(*sparse), self.value(*feats));
                    let mut df = Mat::zeros(fv.rows(), fv.cols());
                    let mut dd = Mat::zeros(dv.rows(), 3);
                    let mut ds = Mat::zeros(sv.rows(), 3);
                    for i in 0..dv.rows() {
                        let gi = g.row(i);
                        let row = &idx[i * k..(i + 1) * k];
                        let w = &weights[i * k..(i + 1) * k];
                        for (&j, &wj) in row.iter().zip(w) {
                            if wj != 0.0 {
                                for (d, gv) in df.row_mut(j).iter_mut().zip(gi) {
                                    *d += wj * gv;
                                }
                            }
                        }
                        if exact[i] {
                            continue;
                        }
                        let p = dv.row(i);
                        let out = node.value.row(i);
                        let dist: Vec<f64> = row
                            .iter()
                            .map(|&j| {
                                let q = sv.row(j);
                                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                            })
                            .collect();
                        let total: f64 = dist.iter().map(|d| 1.0 / d).sum();
                        for (jj, &j) in row.iter().enumerate() {
                            let f = fv.row(j);
                            // dL/du_j with u_j = 1/d_j
                            let s: f64 = gi.iter().zip(f).zip(out).map(|((gv, fv), ov)| gv * (fv - ov)).sum::<f64>() / total;
                            let dl_dd = -s / (dist[jj] * dist[jj]);
                            let q = sv.row(j);
                            for a in 0..3 {
                                let u = dl_dd * (p[a] - q[a]) / dist[jj];
                                dd.data_mut()[i * 3 + a] += u;
                                ds.data_mut()[j * 3 + a] -= u;
                            }
                        }
                    }
                    acc(&mut grads, *feats, df);
                    acc(&mut grads, *dense, dd);
                    acc(&mut grads, *sparse, ds);
                }
                Op::Chamfer { a, b, nn_ab, nn_ba } => {
                    let s = g.get(0, 0);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Mat::zeros(av.rows(), 3);
                    let mut db = Mat::zeros(bv.rows(), 3);
                    let one_side = |from: &Mat, to: &Mat, nn: &[usize], dfrom: &mut Mat, dto: &mut Mat| {
                        let scale = s / from.rows() as f64;
                        for (i, &j) in nn.iter().enumerate() {
                            let (p, q) = (from.row(i), to.row(j));
                            let d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
                            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                            if n > 0.0 {
                                for ax in 0..3 {
                                    let u = scale * d[ax] / n;
                                    dfrom.data_mut()[i * 3 + ax] += u;
                                    dto.data_mut()[j * 3 + ax] -= u;
                                }
                            }
                        }
                    };
                    one_side(av, bv, nn_ab, &mut da, &mut db);
                    one_side(bv, av, nn_ba, &mut db, &mut da);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
            }
        }
        Ok(grads)
    }
}

#[inline]
fn needs(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].requires
}

fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
