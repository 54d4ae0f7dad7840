//! Generates a small train/val/test dataset of sequence files plus a
//! manifest, then reads one sequence back.
//!
//! cargo run --release --example gen_data -- [out dir]

use std::fs;
use std::path::PathBuf;

use monet::io::{format_manifest, load_split, write_pcsq, ManifestEntry, MANIFEST_NAME};
use monet::synth::{dataset, SceneConfig, Split};

fn main() -> monet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic-data".into()));
    fs::create_dir_all(&out)?;
    let template = SceneConfig { frames: 10, n_points: 512, ..SceneConfig::default() };
    let mut entries = Vec::new();
    for (i, sample) in dataset(&template, 42, (6, 2, 2)).enumerate() {
        let sample = sample?;
        let path = PathBuf::from(format!("{}_{i:04}.pcsq", sample.split));
        write_pcsq(out.join(&path), &sample.frames)?;
        let speed: f64 = sample.gt_flow[0].iter().map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt()).fold(0.0, f64::max);
        println!("{:5} seed {:#018x}  fastest point {speed:.3} m/frame", sample.split, sample.seed);
        entries.push(ManifestEntry { path, split: sample.split, seed: sample.seed });
    }
    fs::write(out.join(MANIFEST_NAME), format_manifest(&entries))?;
    let test = load_split(&out, Split::Test)?;
    println!("wrote {} sequences to {}; test split has {} of {} frames", entries.len(), out.display(), test.len(), test[0].len());
    Ok(())
}
