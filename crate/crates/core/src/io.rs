//! Sequence files, dataset manifests and CSV helpers.
//!
//! A sequence file is `PCSQ1`, a version byte, little-endian `u32` frame and
//! point counts, then `f32` xyz triples frame after frame.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::synth::Split;

pub const PCSQ_MAGIC: &[u8; 5] = b"PCSQ1";
pub const PCSQ_VERSION: u8 = 1;
pub const PCSQ_HEADER_LEN: usize = 5 + 1 + 4 + 4;

/// Exact file size for `frames` frames of `points` points.
pub fn pcsq_len(frames: usize, points: usize) -> usize {
    PCSQ_HEADER_LEN + frames * points * 12
}

pub fn encode_pcsq(frames: &[PointCloud]) -> Result<Vec<u8>> {
    let n = frames.first().map_or(0, |f| f.len());
    if frames.iter().any(|f| f.len() != n) {
        return Err(Error::Input("all frames of a sequence must have the same point count".into()));
    }
    let to_u32 = |x: usize, what: &str| u32::try_from(x).map_err(|_| Error::Input(format!("{what} {x} does not fit the format")));
    let mut out = Vec::with_capacity(pcsq_len(frames.len(), n));
    out.extend_from_slice(PCSQ_MAGIC);
    out.push(PCSQ_VERSION);
    out.extend_from_slice(&to_u32(frames.len(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "point count")?.to_le_bytes());
    for f in frames {
        for p in f.points() {
            for &c in p {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_pcsq(bytes: &[u8]) -> Result<Vec<PointCloud>> {
    if bytes.len() < PCSQ_HEADER_LEN || &bytes[..5] != PCSQ_MAGIC {
        return Err(Error::Format("not a PCSQ file".into()));
    }
    if bytes[5] != PCSQ_VERSION {
        return Err(Error::Format(format!("unsupported PCSQ version {}", bytes[5])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("four bytes")) as usize;
    let (frames, points) = (u32_at(6), u32_at(10));
    let expected = frames
        .checked_mul(points)
        .and_then(|x| x.checked_mul(12))
        .and_then(|x| x.checked_add(PCSQ_HEADER_LEN))
        .ok_or_else(|| Error::Format("PCSQ header counts overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "PCSQ payload length mismatch: header says {frames} x {points}, file has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let mut vals = bytes[PCSQ_HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64);
    (0..frames)
        .map(|t| {
            let pts = (0..points)
                .map(|_| {
                    let mut p = [0.0; 3];
                    for c in &mut p {
                        *c = vals.next().expect("length checked");
                    }
                    p
                })
                .collect();
            PointCloud::new(pts).map_err(|e| Error::Format(format!("frame {t}: {e}")))
        })
        .collect()
}

pub fn write_pcsq(path: impl AsRef<Path>, frames: &[PointCloud]) -> Result<()> {
    std::fs::write(path, encode_pcsq(frames)?)?;
    Ok(())
}

pub fn read_pcsq(path: impl AsRef<Path>) -> Result<Vec<PointCloud>> {
    decode_pcsq(&std::fs::read(path)?)
}

/// One line of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub split: Split,
    pub seed: u64,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from("path\tsplit\tseed\n");
    for e in entries {
        let _ = writeln!(s, "{}\t{}\t{}", e.path.display(), e.split, e.seed);
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("path\tsplit\tseed") {
        return Err(Error::Format("manifest header must be path, split, seed".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("manifest line {}: expected 3 columns", i + 2)));
            }
            Ok(ManifestEntry {
                path: PathBuf::from(cols[0]),
                split: cols[1].parse()?,
                seed: cols[2].trim().parse().map_err(|_| Error::Format(format!("manifest line {}: bad seed", i + 2)))?,
            })
        })
        .collect()
}

/// Loads every sequence of `split` listed in `dir/manifest.txt`.
pub fn load_split(dir: impl AsRef<Path>, split: Split) -> Result<Vec<Vec<PointCloud>>> {
    let dir = dir.as_ref();
    let entries = parse_manifest(&std::fs::read_to_string(dir.join(MANIFEST_NAME))?)?;
    entries.iter().filter(|e| e.split == split).map(|e| read_pcsq(dir.join(&e.path))).collect()
}

/// `frame,point,x,y,z` rows.
pub fn pcsq_to_csv(frames: &[PointCloud]) -> String {
    let mut s = String::from("frame,point,x,y,z\n");
    for (t, f) in frames.iter().enumerate() {
        for (i, p) in f.points().iter().enumerate() {
            let _ = writeln!(s, "{t},{i},{},{},{}", p[0], p[1], p[2]);
        }
    }
    s
}
