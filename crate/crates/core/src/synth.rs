//! Synthetic rigid-motion scenes: boxes, spheres and planar patches moving
//! with constant linear and angular velocity over a static ground plane.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{random_subset, Point, PointCloud};

/// Surface points generated per output point before per-frame resampling.
pub const OVERSAMPLE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    pub n_objects: usize,
    /// Linear speed range in m/frame.
    pub speed: (f64, f64),
    /// Yaw rate range in rad/frame; the sign is drawn separately.
    pub angular_speed: (f64, f64),
    /// Share of points on the static ground when there are objects.
    pub background_fraction: f64,
    pub frames: usize,
    pub seed: u64,
    /// Draw each frame independently from an oversampled surface set.
    pub resample: bool,
    /// Replaces the sampled velocity of every object.
    pub fixed_velocity: Option<Point>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 512,
            n_objects: 3,
            speed: (0.1, 0.5),
            angular_speed: (0.0, 0.05),
            background_fraction: 0.5,
            frames: 10,
            seed: 0,
            resample: true,
            fixed_velocity: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::Config("scene needs at least one point".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("scene needs at least one frame".into()));
        }
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a <= b;
        if !range_ok(self.speed) || !range_ok(self.angular_speed) {
            return Err(Error::Config("velocity ranges must be finite with 0 <= min <= max".into()));
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return Err(Error::Config("background_fraction must lie in [0, 1]".into()));
        }
        if self.fixed_velocity.is_some_and(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Config("fixed velocity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    fn id(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub frames: Vec<PointCloud>,
    /// `gt_flow[t][i]` moves point `i` of frame `t` to its rigid position at
    /// `t + 1`.
    pub gt_flow: Vec<Vec<Point>>,
    pub split: Split,
    pub seed: u64,
}

impl SequenceSample {
    pub fn observed(&self, t: usize) -> &[PointCloud] {
        &self.frames[..t]
    }

    /// The `horizon` frames after the first `t`.
    pub fn future(&self, t: usize, horizon: usize) -> &[PointCloud] {
        &self.frames[t..t + horizon]
    }
}

struct RigidBody {
    /// Indices into the surface set.
    points: std::ops::Range<usize>,
    center: Point,
    velocity: Point,
    yaw_rate: f64,
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, center: Point, count: usize, out: &mut Vec<Point>) {
    let size = rng.gen_range(0.5..1.5);
    let kind = rng.gen_range(0..3);
    for _ in 0..count {
        let local = match kind {
            // box surface
            0 => {
                let half = [size, size * rng.gen_range(0.5..1.0), size * 0.5];
                let face = rng.gen_range(0..6);
                let axis = face / 2;
                let mut p = [0.0; 3];
                for (a, pa) in p.iter_mut().enumerate() {
                    *pa = if a == axis {
                        if face % 2 == 0 {
                            -half[a]
                        } else {
                            half[a]
                        }
                    } else {
                        rng.gen_range(-half[a]..half[a])
                    };
                }
                p
            }
            // sphere surface
            1 => {
                let u = unit_vector(rng);
                [u[0] * size, u[1] * size, u[2] * size]
            }
            // tilted planar patch
            _ => {
                let (a, b) = (rng.gen_range(-size..size), rng.gen_range(-size..size));
                [a, b * 0.6, b * 0.8]
            }
        };
        out.push([center[0] + local[0], center[1] + local[1], center[2] + local[2]]);
    }
}

/// Rotation about the vertical axis through `c` followed by a translation.
fn rigid_flow(p: &Point, c: &Point, yaw: f64, v: &Point) -> Point {
    let (s, co) = yaw.sin_cos();
    let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    let r = [co * d[0] - s * d[1], s * d[0] + co * d[1], d[2]];
    [r[0] - d[0] + v[0], r[1] - d[1] + v[1], r[2] - d[2] + v[2]]
}

/// One scene. Frame `t + 1` of the full surface set is frame `t` plus its
/// rigid flow, applied step by step so that pure translations stay exact.
pub fn make_sequence(cfg: &SceneConfig) -> Result<SequenceSample> {
    make_sequence_in(cfg, Split::Train)
}

fn make_sequence_in(cfg: &SceneConfig, split: Split) -> Result<SequenceSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = if cfg.resample { cfg.n_points * OVERSAMPLE } else { cfg.n_points };
    let n_bg = if cfg.n_objects == 0 {
        total
    } else {
        ((total as f64) * cfg.background_fraction).round() as usize
    };
    let mut surface: Vec<Point> = Vec::with_capacity(total);
    for _ in 0..n_bg {
        surface.push([rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), 0.0]);
    }
    let mut bodies = Vec::with_capacity(cfg.n_objects);
    let remaining = total - n_bg;
    for o in 0..cfg.n_objects {
        let count = remaining / cfg.n_objects + usize::from(o < remaining % cfg.n_objects);
        let center = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(2.0..3.0)];
        let start = surface.len();
        sample_shape(&mut rng, center, count, &mut surface);
        let heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = uniform_in(&mut rng, cfg.speed);
        let sampled = [speed * heading.cos(), speed * heading.sin(), 0.0];
        let yaw_mag = uniform_in(&mut rng, cfg.angular_speed);
        let yaw_rate = if rng.gen_bool(0.5) { yaw_mag } else { -yaw_mag };
        bodies.push(RigidBody {
            points: start..surface.len(),
            center,
            velocity: cfg.fixed_velocity.unwrap_or(sampled),
            yaw_rate,
        });
    }

    let mut frames = Vec::with_capacity(cfg.frames);
    let mut gt_flow = Vec::with_capacity(cfg.frames.saturating_sub(1));
    for t in 0..cfg.frames {
        let mut flow = vec![[0.0; 3]; surface.len()];
        for b in &bodies {
            for i in b.points.clone() {
                flow[i] = rigid_flow(&surface[i], &b.center, b.yaw_rate, &b.velocity);
            }
        }
        let keep: Vec<usize> = if cfg.resample {
            random_subset(surface.len(), cfg.n_points, rng.gen())?
        } else {
            (0..surface.len()).collect()
        };
        frames.push(PointCloud::new(keep.iter().map(|&i| surface[i]).collect())?);
        if t + 1 < cfg.frames {
            gt_flow.push(keep.iter().map(|&i| flow[i]).collect());
            for (p, f) in surface.iter_mut().zip(&flow) {
                *p = [p[0] + f[0], p[1] + f[1], p[2] + f[2]];
            }
            for b in &mut bodies {
                let c = b.center;
                b.center = [c[0] + b.velocity[0], c[1] + b.velocity[1], c[2] + b.velocity[2]];
            }
        }
    }
    Ok(SequenceSample { frames, gt_flow, split, seed: cfg.seed })
}

/// Scene seed for item `index` of `split`. The split occupies the top bits,
/// so seeds of different splits never coincide.
pub fn scene_seed(base: u32, split: Split, index: u32) -> u64 {
    assert!(index < 1 << 30, "scene index too large");
    (split.id() << 62) | ((base as u64) << 30) | index as u64
}

/// Deterministic (split, seed) enumeration for `counts = (train, val, test)`.
pub fn dataset_seeds(base: u32, counts: (usize, usize, usize)) -> Vec<(Split, u64)> {
    let (a, b, c) = counts;
    [(Split::Train, a), (Split::Val, b), (Split::Test, c)]
        .into_iter()
        .flat_map(|(s, n)| (0..n as u32).map(move |i| (s, scene_seed(base, s, i))))
        .collect()
}

/// Lazily generated samples; the template's seed is replaced per scene.
pub fn dataset(template: &SceneConfig, base: u32, counts: (usize, usize, usize)) -> impl Iterator<Item = Result<SequenceSample>> + '_ {
    dataset_seeds(base, counts).into_iter().map(move |(split, seed)| {
        let cfg = SceneConfig { seed, ..template.clone() };
        make_sequence_in(&cfg, split)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::chamfer;

    fn exact(n: usize, seed: u64) -> SceneConfig {
        SceneConfig { n_points: n, resample: false, seed, ..SceneConfig::default() }
    }

    #[test]
    fn shapes_and_flow_rows() {
        let s = make_sequence(&SceneConfig { n_points: 100, ..SceneConfig::default() }).unwrap();
        assert_eq!(s.frames.len(), 10);
        assert_eq!(s.gt_flow.len(), 9);
        assert!(s.frames.iter().all(|f| f.len() == 100));
        assert!(s.gt_flow.iter().all(|f| f.len() == 100));
    }

    #[test]
    fn zero_velocity_without_resampling_is_static() {
        let cfg = SceneConfig { speed: (0.0, 0.0), angular_speed: (0.0, 0.0), ..exact(64, 3) };
        let s = make_sequence(&cfg).unwrap();
        assert!(s.frames.iter().all(|f| f == &s.frames[0]));
    }

    #[test]
    fn single_translating_object_is_exact() {
        let v = [1.0, 0.0, 0.0];
        let cfg = SceneConfig {
            n_objects: 1,
            background_fraction: 0.0,
            angular_speed: (0.0, 0.0),
            fixed_velocity: Some(v),
            ..exact(50, 9)
        };
        let s = make_sequence(&cfg).unwrap();
        for t in 0..s.frames.len() - 1 {
            assert_eq!(s.frames[t + 1], s.frames[t].translated(v));
        }
    }

    #[test]
    fn flow_reproduces_next_frame_without_resampling() {
        let s = make_sequence(&SceneConfig { angular_speed: (0.05, 0.1), ..exact(80, 4) }).unwrap();
        for t in 0..s.frames.len() - 1 {
            let moved = s.frames[t].displaced(&s.gt_flow[t]).unwrap();
            assert_eq!(moved, s.frames[t + 1]);
            assert_eq!(chamfer(&moved, &s.frames[t + 1]).unwrap(), 0.0);
        }
    }

    #[test]
    fn seeds_are_disjoint_and_deterministic() {
        let seeds = dataset_seeds(7, (2, 1, 1));
        assert_eq!(seeds.len(), 4);
        let mut s: Vec<u64> = seeds.iter().map(|x| x.1).collect();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 4);
        let tmpl = SceneConfig { n_points: 16, ..SceneConfig::default() };
        let a: Vec<_> = dataset(&tmpl, 7, (2, 1, 1)).map(|r| r.unwrap()).collect();
        let b: Vec<_> = dataset(&tmpl, 7, (2, 1, 1)).map(|r| r.unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(a[3].split, Split::Test);
    }

    #[test]
    fn bad_configs() {
        assert!(make_sequence(&SceneConfig { n_points: 0, ..SceneConfig::default() }).is_err());
        assert!(make_sequence(&SceneConfig { background_fraction: 1.5, ..SceneConfig::default() }).is_err());
        assert!(make_sequence(&SceneConfig { speed: (1.0, f64::NAN), ..SceneConfig::default() }).is_err());
    }
}
