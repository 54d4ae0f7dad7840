//! Network configuration and its flat `key=value` text form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Recurrent cell flavour.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Lstm,
    Gru,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Variant::Lstm),
            "gru" => Ok(Variant::Gru),
            _ => Err(Error::Config(format!("unknown variant {s:?} (expected lstm or gru)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Lstm => "lstm",
            Variant::Gru => "gru",
        })
    }
}

/// Which recurrent inputs are zeroed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    Full,
    NoMotion,
    NoContent,
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" => Ok(Ablation::Full),
            "no-motion" => Ok(Ablation::NoMotion),
            "no-content" => Ok(Ablation::NoContent),
            _ => Err(Error::Config(format!("unknown ablation {s:?} (expected full, no-motion or no-content)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoMotion => "no-motion",
            Ablation::NoContent => "no-content",
        })
    }
}

/// Sizes for one level of the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerConfig {
    /// Points kept at this level.
    pub points: usize,
    pub k: usize,
    pub content_width: usize,
    pub motion_width: usize,
    pub state_width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_points: usize,
    pub layers: Vec<LayerConfig>,
    pub variant: Variant,
    pub ablation: Ablation,
    /// First index picked by furthest point sampling.
    pub fps_seed: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::uniform_k(512, &[256, 128, 64], 8, &[32, 64, 128])
    }
}

impl ModelConfig {
    /// Layers with motion and state widths equal to the content width.
    pub fn uniform_k(input_points: usize, points: &[usize], k: usize, widths: &[usize]) -> Self {
        assert_eq!(points.len(), widths.len());
        ModelConfig {
            input_points,
            layers: points
                .iter()
                .zip(widths)
                .map(|(&p, &w)| LayerConfig { points: p, k, content_width: w, motion_width: w, state_width: w })
                .collect(),
            variant: Variant::Gru,
            ablation: Ablation::Full,
            fps_seed: 0,
        }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.ablation = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("at least one layer is required".into()));
        }
        let mut prev = self.input_points;
        for (i, l) in self.layers.iter().enumerate() {
            if l.points == 0 || l.points > prev {
                return Err(Error::Config(format!(
                    "layer {} keeps {} points but its input has {prev}",
                    i + 1,
                    l.points
                )));
            }
            if l.k == 0 || l.k > l.points || l.k > prev {
                return Err(Error::Config(format!("layer {}: k = {} invalid for {} points", i + 1, l.k, l.points)));
            }
            if l.content_width == 0 || l.motion_width == 0 || l.state_width == 0 {
                return Err(Error::Config(format!("layer {}: widths must be at least 1", i + 1)));
            }
            prev = l.points;
        }
        if self.fps_seed >= self.input_points {
            return Err(Error::Config("fps_seed out of range".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let join = |f: &dyn Fn(&LayerConfig) -> usize| self.layers.iter().map(|l| f(l).to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str(&format!("input_points={}\n", self.input_points));
        s.push_str(&format!("layer_points={}\n", join(&|l| l.points)));
        s.push_str(&format!("k={}\n", join(&|l| l.k)));
        s.push_str(&format!("content_width={}\n", join(&|l| l.content_width)));
        s.push_str(&format!("motion_width={}\n", join(&|l| l.motion_width)));
        s.push_str(&format!("state_width={}\n", join(&|l| l.state_width)));
        s.push_str(&format!("variant={}\n", self.variant));
        s.push_str(&format!("ablation={}\n", self.ablation));
        s.push_str(&format!("fps_seed={}\n", self.fps_seed));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| Error::Config(format!("missing key {key}")));
        let list = |key: &str| -> Result<Vec<usize>> {
            get(key)?
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad integer in {key}: {t:?}"))))
                .collect()
        };
        let num = |key: &str| -> Result<usize> { get(key)?.parse().map_err(|_| Error::Config(format!("bad integer for {key}"))) };
        let points = list("layer_points")?;
        let n = points.len();
        let expand = |key: &str| -> Result<Vec<usize>> {
            let v = list(key)?;
            match v.len() {
                1 => Ok(vec![v[0]; n]),
                m if m == n => Ok(v),
                m => Err(Error::Config(format!("{key} has {m} entries for {n} layers"))),
            }
        };
        let k = expand("k")?;
        let ce = expand("content_width")?;
        let me = expand("motion_width")?;
        let se = expand("state_width")?;
        let cfg = ModelConfig {
            input_points: num("input_points")?,
            layers: (0..n)
                .map(|i| LayerConfig { points: points[i], k: k[i], content_width: ce[i], motion_width: me[i], state_width: se[i] })
                .collect(),
            variant: get("variant")?.parse()?,
            ablation: get("ablation")?.parse()?,
            fps_seed: kv.iter().find(|(k, _)| k == "fps_seed").map(|(_, v)| v.parse().unwrap_or(0)).unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}
