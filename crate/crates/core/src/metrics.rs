//! Chamfer distance and exact Earth Mover's distance between point clouds.

use crate::error::{Error, Result};
use crate::geom::{dist, PointCloud};
use crate::tensor::Mat;

/// Largest cloud size the exact assignment solver accepts by default.
pub const DEFAULT_EMD_CAP: usize = 1024;

/// Largest size accepted by the factorial oracle.
pub const BRUTEFORCE_CAP: usize = 8;

/// Nearest row of `to` for every row of `from` (ties to the lowest index),
/// with the Euclidean distance.
pub(crate) fn nearest_rows(from: &Mat, to: &Mat) -> (Vec<usize>, Vec<f64>) {
    let mut idx = Vec::with_capacity(from.rows());
    let mut ds = Vec::with_capacity(from.rows());
    for i in 0..from.rows() {
        let p = from.row(i);
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for j in 0..to.rows() {
            let q = to.row(j);
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d2 < bd {
                bd = d2;
                best = j;
            }
        }
        idx.push(best);
        ds.push(bd.sqrt());
    }
    (idx, ds)
}

/// Mean nearest-neighbour distance from `p` to `q` plus from `q` to `p`.
///
/// Each direction is averaged over its own cloud size, which reduces to the
/// common-`N` form when the sizes agree.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Input("chamfer: empty cloud".into()));
    }
    let (pm, qm) = (p.to_mat(), q.to_mat());
    let (_, a) = nearest_rows(&pm, &qm);
    let (_, b) = nearest_rows(&qm, &pm);
    Ok(a.iter().sum::<f64>() / p.len() as f64 + b.iter().sum::<f64>() / q.len() as f64)
}

/// An optimal bijection from prediction indices to target indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub mapping: Vec<usize>,
    /// Mean assigned distance.
    pub cost: f64,
}

fn check_equal_sizes(p: &PointCloud, q: &PointCloud) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Input(format!("EMD needs equal sizes, got {} and {}", p.len(), q.len())));
    }
    Ok(())
}

/// Exact EMD with the default capacity.
pub fn emd_exact(p: &PointCloud, q: &PointCloud) -> Result<(f64, Assignment)> {
    emd_exact_capped(p, q, DEFAULT_EMD_CAP)
}

/// Minimum mean Euclidean distance over all bijections, solved with a
/// shortest-augmenting-path assignment (O(N³)).
pub fn emd_exact_capped(p: &PointCloud, q: &PointCloud, cap: usize) -> Result<(f64, Assignment)> {
    check_equal_sizes(p, q)?;
    let n = p.len();
    if n > cap {
        return Err(Error::Capacity(format!(
            "EMD on {n} points exceeds the exact-solver cap of {cap}; downsample both clouds first"
        )));
    }
    let cost = Mat::from_fn(n, n, |i, j| dist(&p.point(i), &q.point(j)));
    let mapping = solve_assignment(&cost);
    let total: f64 = mapping.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    let mean = total / n as f64;
    Ok((mean, Assignment { mapping, cost: mean }))
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Rows are inserted one at a time; each insertion runs a Dijkstra-like
/// search over reduced costs and augments along the shortest path found.
/// Returns `mapping[row] = column`.
pub fn solve_assignment(cost: &Mat) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "assignment needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with column 0 as the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let crow = cost.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[col_owner[j] - 1] = j - 1;
    }
    mapping
}

/// Exhaustive minimum over all `N!` bijections. Oracle for [`emd_exact`].
pub fn emd_bruteforce(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    check_equal_sizes(p, q)?;
    let n = p.len();
    if n > BRUTEFORCE_CAP {
        return Err(Error::Capacity(format!("brute-force EMD is limited to {BRUTEFORCE_CAP} points, got {n}")));
    }
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&p.point(i), &q.point(j))).collect()).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    best = best.min(eval(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best / n as f64)
}
