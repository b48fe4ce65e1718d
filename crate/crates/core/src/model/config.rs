//! Flat `key = value` configuration files. Blank lines and `#` comments are
//! ignored; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::attention::{AttnConfig, Scheme};
use crate::error::{DvtError, Result};
use crate::motioncue::{Accumulation, CodecParams, CueKind, ResidualMode};
use crate::tokenization::{GridGeom, PatchSpec};

/// Parses `key = value` lines into pairs, in file order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DvtError::config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(DvtError::config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| DvtError::config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(DvtError::config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

/// Types configurable from `key = value` pairs.
pub trait KeyValue: Sized + Default {
    /// Applies one pair; returns `Ok(false)` for an unknown key.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Every key with its current value, in canonical order.
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            if !self.set(k, v)? {
                return Err(DvtError::config(format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }

    fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply(&parse_kv(text)?)?;
        Ok(c)
    }

    fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DvtError::io(path, e))?;
        Self::from_text(&text)
    }

    fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn residual_name(r: ResidualMode) -> &'static str {
    match r {
        ResidualMode::F32 => "f32",
        ResidualMode::Quantized => "quantized",
    }
}

fn accumulation_name(a: Accumulation) -> &'static str {
    match a {
        Accumulation::Chained => "chained",
        Accumulation::FixedLocation => "fixed",
    }
}

/// Architecture, input geometry and codec settings of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub dim: usize,
    pub mlp_ratio: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub patch: usize,
    pub tubelet: usize,
    pub cue: CueKind,
    pub classes: usize,
    pub seed: u64,
    /// Attention settings; `attn.heads` is the model's head count.
    pub attn: AttnConfig,
    pub codec: CodecParams,
    pub accumulation: Accumulation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 4,
            dim: 64,
            mlp_ratio: 4,
            frames: 8,
            height: 32,
            width: 32,
            patch: 4,
            tubelet: 1,
            cue: CueKind::Md,
            classes: 4,
            seed: 0,
            attn: AttnConfig {
                samples: 8,
                subclips: 4,
                ms_samples: 8,
                scales: 2,
                heads: 4,
                scheme: Scheme::Dsta,
                ..AttnConfig::default()
            },
            codec: CodecParams::default(),
            accumulation: Accumulation::Chained,
        }
    }
}

impl ModelConfig {
    pub fn heads(&self) -> usize {
        self.attn.heads
    }

    pub fn patch_spec(&self) -> PatchSpec {
        PatchSpec {
            patch: self.patch,
            tubelet: self.tubelet,
        }
    }

    pub fn geom(&self) -> Result<GridGeom> {
        self.patch_spec().geom(self.frames, self.height, self.width)
    }

    /// Checks every field and every cross-module divisibility constraint,
    /// reporting the first violation by field name.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("mlp_ratio", self.mlp_ratio),
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("patch", self.patch),
            ("tubelet", self.tubelet),
            ("classes", self.classes),
            ("heads", self.attn.heads),
            ("block", self.codec.block),
            ("gop", self.codec.gop_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(DvtError::config(format!("`{k}` must be >= 1")));
        }
        let geom = self.geom()?;
        if !self.height.is_multiple_of(self.codec.block) || !self.width.is_multiple_of(self.codec.block) {
            return Err(DvtError::config(format!(
                "`block` = {} does not divide the {}x{} frame",
                self.codec.block, self.height, self.width
            )));
        }
        self.attn.validate(&geom, self.dim)
    }
}

impl KeyValue for ModelConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "layers" => self.layers = parse_value(key, v)?,
            "dim" => self.dim = parse_value(key, v)?,
            "heads" => self.attn.heads = parse_value(key, v)?,
            "mlp_ratio" => self.mlp_ratio = parse_value(key, v)?,
            "frames" => self.frames = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "patch" => self.patch = parse_value(key, v)?,
            "tubelet" => self.tubelet = parse_value(key, v)?,
            "cue" => self.cue = v.parse()?,
            "classes" => self.classes = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "scheme" => self.attn.scheme = v.parse()?,
            "samples" => self.attn.samples = parse_value(key, v)?,
            "subclips" => self.attn.subclips = parse_value(key, v)?,
            "ms_samples" => self.attn.ms_samples = parse_value(key, v)?,
            "scales" => self.attn.scales = parse_value(key, v)?,
            "fusion" => self.attn.fusion = v.parse()?,
            "rho" => self.attn.rho = parse_value(key, v)?,
            "offset_from_raw_token" => self.attn.offset_from_raw_token = parse_bool(key, v)?,
            "block" => self.codec.block = parse_value(key, v)?,
            "radius" => self.codec.radius = parse_value(key, v)?,
            "gop" => self.codec.gop_len = parse_value(key, v)?,
            "residual" => {
                self.codec.residual = match v {
                    "f32" => ResidualMode::F32,
                    "quantized" => ResidualMode::Quantized,
                    _ => return Err(DvtError::config(format!("invalid value `{v}` for `residual`"))),
                }
            }
            "accumulation" => {
                self.accumulation = match v {
                    "chained" => Accumulation::Chained,
                    "fixed" => Accumulation::FixedLocation,
                    _ => return Err(DvtError::config(format!("invalid value `{v}` for `accumulation`"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let a = &self.attn;
        vec![
            ("layers", self.layers.to_string()),
            ("dim", self.dim.to_string()),
            ("heads", a.heads.to_string()),
            ("mlp_ratio", self.mlp_ratio.to_string()),
            ("frames", self.frames.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("patch", self.patch.to_string()),
            ("tubelet", self.tubelet.to_string()),
            ("cue", self.cue.to_string()),
            ("classes", self.classes.to_string()),
            ("seed", self.seed.to_string()),
            ("scheme", a.scheme.to_string()),
            ("samples", a.samples.to_string()),
            ("subclips", a.subclips.to_string()),
            ("ms_samples", a.ms_samples.to_string()),
            ("scales", a.scales.to_string()),
            ("fusion", a.fusion.to_string()),
            ("rho", a.rho.to_string()),
            ("offset_from_raw_token", a.offset_from_raw_token.to_string()),
            ("block", self.codec.block.to_string()),
            ("radius", self.codec.radius.to_string()),
            ("gop", self.codec.gop_len.to_string()),
            ("residual", residual_name(self.codec.residual).to_string()),
            ("accumulation", accumulation_name(self.accumulation).to_string()),
        ]
    }
}

/// Optimiser and schedule settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Stop once validation accuracy reaches this value; `0` disables.
    pub target_accuracy: f64,
    /// Parallel workers for per-clip gradients; `0` uses the rayon default.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            target_accuracy: 0.0,
            workers: 0,
        }
    }
}

impl KeyValue for TrainConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch" => self.batch = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "eps" => self.eps = parse_value(key, v)?,
            "target_accuracy" => self.target_accuracy = parse_value(key, v)?,
            "workers" => self.workers = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("target_accuracy", self.target_accuracy.to_string()),
            ("workers", self.workers.to_string()),
        ]
    }
}

/// Model and training settings read from one file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl KeyValue for RunConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        Ok(self.model.set(key, v)? || self.train.set(key, v)?)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = self.model.entries();
        e.extend(self.train.entries());
        e
    }
}
