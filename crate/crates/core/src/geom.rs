//! Parameter-free geometric kernels: furthest point sampling, k-nearest
//! neighbours, cluster geometry and seeded random downsampling.
//!
//! Every kernel breaks ties by lowest index so results do not depend on
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Mat;

pub type Point = [f64; 3];

/// An ordered, non-empty set of finite 3D points (meters).
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Input(format!("point {i} has non-finite coordinates")));
        }
        Ok(PointCloud { points })
    }

    pub fn from_mat(m: &Mat) -> Result<Self> {
        if m.cols() != 3 {
            return Err(Error::Input(format!("expected N x 3 coordinates, got {:?}", m.shape())));
        }
        PointCloud::new((0..m.rows()).map(|r| [m.get(r, 0), m.get(r, 1), m.get(r, 2)]).collect())
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_vec(self.len(), 3, self.points.iter().flat_map(|p| p.iter().copied()).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud { points: indices.iter().map(|&i| self.points[i]).collect() }
    }

    pub fn translated(&self, offset: Point) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }

    /// Adds one displacement per point.
    pub fn displaced(&self, flow: &[Point]) -> Result<PointCloud> {
        if flow.len() != self.len() {
            return Err(Error::Size(format!("flow has {} rows, cloud has {}", flow.len(), self.len())));
        }
        PointCloud::new(
            self.points
                .iter()
                .zip(flow)
                .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
                .collect(),
        )
    }
}

#[inline]
pub fn dist_sq(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Furthest point sampling starting from `seed_index`.
///
/// Each further pick maximises the minimum distance to the points chosen so
/// far; ties go to the lowest index.
pub fn fps(cloud: &PointCloud, m: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if m == 0 || m > n {
        return Err(Error::Size(format!("fps: cannot select {m} of {n} points")));
    }
    if seed_index >= n {
        return Err(Error::Size(format!("fps: seed index {seed_index} out of range for {n} points")));
    }
    let pts = cloud.points();
    let mut selected = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut current = seed_index;
    for _ in 0..m {
        out.push(current);
        selected[current] = true;
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if selected[i] {
                continue;
            }
            let d2 = dist_sq(p, &c);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(out)
}

/// k nearest reference points for every query, rows sorted by distance then index.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    center_count: usize,
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborIndex {
    /// Builds an index from explicit rows; rows must already be sorted.
    pub fn from_rows(k: usize, indices: Vec<usize>, distances: Vec<f64>) -> Result<Self> {
        if k == 0 || indices.len() != distances.len() || !indices.len().is_multiple_of(k) {
            return Err(Error::Size("neighbor index rows do not match k".into()));
        }
        Ok(NeighborIndex { center_count: indices.len() / k, k, indices, distances })
    }

    #[inline]
    pub fn center_count(&self) -> usize {
        self.center_count
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Flat `center_count × k` reference indices.
    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn row_distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

/// Keeps the `k` best `(d2, index)` pairs in ascending order.
struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { k, items: Vec::with_capacity(k + 1) }
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    #[inline]
    fn push(&mut self, d2: f64, idx: usize) {
        if self.items.len() == self.k {
            let (wd, wi) = self.items[self.k - 1];
            if d2 > wd || (d2 == wd && idx > wi) {
                return;
            }
        }
        let pos = self.items.partition_point(|&(d, i)| d < d2 || (d == d2 && i < idx));
        self.items.insert(pos, (d2, idx));
        self.items.truncate(self.k);
    }
}

fn check_k(k: usize, refs: &PointCloud) -> Result<()> {
    if k == 0 || k > refs.len() {
        return Err(Error::Size(format!("knn: k = {k} invalid for {} reference points", refs.len())));
    }
    Ok(())
}

/// Exhaustive k-nearest-neighbour search.
pub fn knn(queries: &PointCloud, refs: &PointCloud, k: usize) -> Result<NeighborIndex> {
    check_k(k, refs)?;
    let mut indices = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    let mut top = TopK::new(k);
    for q in queries.points() {
        top.items.clear();
        for (j, r) in refs.points().iter().enumerate() {
            let d2 = dist_sq(q, r);
            if d2 <= top.worst() {
                top.push(d2, j);
            }
        }
        for &(d2, j) in &top.items {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborIndex { center_count: queries.len(), k, indices, distances })
}

/// Uniform-grid accelerated kNN. Returns exactly what [`knn`] returns.
pub fn knn_grid(queries: &PointCloud, refs: &PointCloud, k: usize, cell: f64) -> Result<NeighborIndex> {
    check_k(k, refs)?;
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::Config(format!("grid cell size must be positive, got {cell}")));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in refs.points() {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let dims: [i64; 3] = std::array::from_fn(|a| ((hi[a] - lo[a]) / cell).floor() as i64 + 1);
    let cell_of = |p: &Point| -> [i64; 3] {
        std::array::from_fn(|a| (((p[a] - lo[a]) / cell).floor() as i64).clamp(0, dims[a] - 1))
    };
    let ncells = (dims[0] * dims[1] * dims[2]) as usize;
    let flat = |c: [i64; 3]| ((c[0] * dims[1] + c[1]) * dims[2] + c[2]) as usize;
    // bucket sort of reference indices by cell
    let mut counts = vec![0usize; ncells + 1];
    let ref_cells: Vec<usize> = refs.points().iter().map(|p| flat(cell_of(p))).collect();
    for &c in &ref_cells {
        counts[c + 1] += 1;
    }
    for i in 0..ncells {
        counts[i + 1] += counts[i];
    }
    let mut fill = counts.clone();
    let mut order = vec![0usize; refs.len()];
    for (j, &c) in ref_cells.iter().enumerate() {
        order[fill[c]] = j;
        fill[c] += 1;
    }
    let max_ring = dims.iter().copied().max().unwrap_or(1);

    let mut indices = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    let mut top = TopK::new(k);
    for q in queries.points() {
        top.items.clear();
        // queries outside the reference box are clamped to the border cell
        let qc = cell_of(q);
        let mut ring = 0i64;
        loop {
            for x in (qc[0] - ring).max(0)..=(qc[0] + ring).min(dims[0] - 1) {
                for y in (qc[1] - ring).max(0)..=(qc[1] + ring).min(dims[1] - 1) {
                    for z in (qc[2] - ring).max(0)..=(qc[2] + ring).min(dims[2] - 1) {
                        let shell = (x - qc[0]).abs().max((y - qc[1]).abs()).max((z - qc[2]).abs());
                        if shell != ring {
                            continue;
                        }
                        let c = flat([x, y, z]);
                        for &j in &order[counts[c]..counts[c + 1]] {
                            let d2 = dist_sq(q, &refs.points()[j]);
                            if d2 <= top.worst() {
                                top.push(d2, j);
                            }
                        }
                    }
                }
            }
            if ring >= max_ring {
                break;
            }
            // every unvisited point is farther than this bound
            let bound = ring as f64 * cell;
            if top.items.len() == k && top.worst() < bound * bound {
                break;
            }
            ring += 1;
        }
        for &(d2, j) in &top.items {
            indices.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborIndex { center_count: queries.len(), k, indices, distances })
}

/// Per-neighbour `(dx, dy, dz, |d|)` of each cluster relative to its center.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometricFeatures {
    pub center_count: usize,
    pub k: usize,
    pub rows: Vec<[f64; 4]>,
}

pub fn group_geometric_features(
    centers: &PointCloud,
    refs: &PointCloud,
    nbr: &NeighborIndex,
) -> Result<GeometricFeatures> {
    if nbr.center_count() != centers.len() {
        return Err(Error::Input(format!(
            "neighbor index has {} rows for {} centers",
            nbr.center_count(),
            centers.len()
        )));
    }
    let k = nbr.k();
    let mut rows = Vec::with_capacity(centers.len() * k);
    for (i, c) in centers.points().iter().enumerate() {
        for &j in nbr.row(i) {
            let r = refs
                .points()
                .get(j)
                .ok_or_else(|| Error::Input(format!("neighbor index {j} out of range")))?;
            let d = [r[0] - c[0], r[1] - c[1], r[2] - c[2]];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            rows.push([d[0], d[1], d[2], n]);
        }
    }
    Ok(GeometricFeatures { center_count: centers.len(), k, rows })
}

/// Indices of `n` of `len` items drawn without replacement, ascending.
pub fn random_subset(len: usize, n: usize, rng_seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::Size(format!("cannot draw {n} of {len} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut idx = rand::seq::index::sample(&mut rng, len, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Seeded random downsampling without replacement; keeps original relative order.
pub fn random_downsample(cloud: &PointCloud, n: usize, rng_seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Size("cannot downsample to zero points".into()));
    }
    Ok(cloud.select(&random_subset(cloud.len(), n, rng_seed)?))
}
