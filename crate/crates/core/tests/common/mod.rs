#![allow(dead_code)]

pub mod cases;
pub mod grads;
pub mod oracle;

use monet::geom::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new((0..n).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect()).unwrap()
}

/// `t` frames of a cloud drifting by `v` per frame with a little jitter.
pub fn drifting(n: usize, t: usize, v: [f64; 3], seed: u64) -> Vec<PointCloud> {
    let base = random_cloud(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    (0..t)
        .map(|i| {
            let pts = base
                .points()
                .iter()
                .map(|p| {
                    let j = 0.01;
                    [
                        p[0] + v[0] * i as f64 + rng.gen_range(-j..j),
                        p[1] + v[1] * i as f64 + rng.gen_range(-j..j),
                        p[2] + v[2] * i as f64 + rng.gen_range(-j..j),
                    ]
                })
                .collect();
            PointCloud::new(pts).unwrap()
        })
        .collect()
}
