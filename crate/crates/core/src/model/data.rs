//! Synthetic motion-classification clips: a textured square of random
//! colour slides over a static textured background in one of four
//! directions. The label depends on the direction only.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{DvtError, Result};
use crate::numerics::{Rng, Tensor};
use crate::tokenization::{read_clip, write_clip, ClipTensor};

use super::config::{parse_value, KeyValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    /// Unit step `(dy, dx)` in pixels.
    pub fn step(self) -> (i64, i64) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub num_clips: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Side of the moving square in pixels.
    pub square: usize,
    /// Inclusive integer speed range in pixels per frame.
    pub speed_min: usize,
    pub speed_max: usize,
    /// Standard deviation of per-pixel, per-frame Gaussian noise.
    pub noise: f64,
    /// Amplitude of the static background and square textures.
    pub texture: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            num_clips: 500,
            frames: 8,
            height: 32,
            width: 32,
            square: 8,
            speed_min: 1,
            speed_max: 2,
            noise: 0.02,
            texture: 0.15,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.square == 0 || self.speed_min == 0 || self.speed_min > self.speed_max {
            return Err(DvtError::config(
                "need frames, square >= 1 and 1 <= speed_min <= speed_max",
            ));
        }
        let travel = self.speed_max * (self.frames - 1);
        if self.square + travel > self.height.min(self.width) {
            return Err(DvtError::config(format!(
                "a {}-pixel square moving {travel} pixels does not fit a {}x{} frame",
                self.square, self.height, self.width
            )));
        }
        if !(self.noise >= 0.0 && self.texture >= 0.0) {
            return Err(DvtError::config("noise and texture must be non-negative"));
        }
        Ok(())
    }

    /// Direction of clip `index`: round-robin over the classes, then permuted
    /// in blocks of four so consecutive clips are not predictable.
    pub fn direction(&self, index: usize) -> Direction {
        let block = index / 4;
        let mut order = Direction::ALL;
        Rng::new(self.seed)
            .split_named("labels")
            .split(block as u64)
            .shuffle(&mut order);
        order[index % 4]
    }
}

impl KeyValue for SyntheticDatasetSpec {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "num_clips" => self.num_clips = parse_value(key, v)?,
            "frames" => self.frames = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "square" => self.square = parse_value(key, v)?,
            "speed_min" => self.speed_min = parse_value(key, v)?,
            "speed_max" => self.speed_max = parse_value(key, v)?,
            "noise" => self.noise = parse_value(key, v)?,
            "texture" => self.texture = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_clips", self.num_clips.to_string()),
            ("frames", self.frames.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("square", self.square.to_string()),
            ("speed_min", self.speed_min.to_string()),
            ("speed_max", self.speed_max.to_string()),
            ("noise", self.noise.to_string()),
            ("texture", self.texture.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Ground truth of one generated clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub direction: Direction,
    pub speed: usize,
    /// Top-left corner at frame 0.
    pub start: (usize, usize),
}

impl Trajectory {
    pub fn corner(&self, t: usize) -> (usize, usize) {
        let (dy, dx) = self.direction.step();
        let k = (self.speed * t) as i64;
        (
            (self.start.0 as i64 + dy * k) as usize,
            (self.start.1 as i64 + dx * k) as usize,
        )
    }
}

/// Renders clip `index` of the dataset.
pub fn generate_clip(spec: &SyntheticDatasetSpec, index: usize) -> Result<(ClipTensor, Trajectory)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed).split_named("clips").split(index as u64);
    let (t, h, w, sq) = (spec.frames, spec.height, spec.width, spec.square);
    let direction = spec.direction(index);
    let speed = spec.speed_min + rng.below(spec.speed_max - spec.speed_min + 1);
    let travel = speed * (t - 1);
    let (dy, dx) = direction.step();
    // pick a start so that the whole trajectory stays inside the frame
    let axis = |rng: &mut Rng, d: i64, n: usize| -> usize {
        match d {
            -1 => travel + rng.below(n - sq - travel + 1),
            1 => rng.below(n - sq - travel + 1),
            _ => rng.below(n - sq + 1),
        }
    };
    let start = (axis(&mut rng, dy, h), axis(&mut rng, dx, w));
    let traj = Trajectory {
        direction,
        speed,
        start,
    };

    let base: [f64; 3] = [rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5), rng.uniform(0.2, 0.5)];
    let background: Vec<f64> = (0..h * w * 3)
        .map(|i| base[i % 3] + spec.texture * rng.uniform(-1.0, 1.0))
        .collect();
    let colour: [f64; 3] = [rng.unit(), rng.unit(), rng.unit()];
    let pattern: Vec<f64> = (0..sq * sq * 3)
        .map(|_| spec.texture * rng.uniform(-1.0, 1.0))
        .collect();

    let mut frames = Vec::with_capacity(t);
    for f in 0..t {
        let (cy, cx) = traj.corner(f);
        let mut px = background.clone();
        for y in 0..sq {
            for x in 0..sq {
                for c in 0..3 {
                    px[((cy + y) * w + cx + x) * 3 + c] = colour[c] + pattern[(y * sq + x) * 3 + c];
                }
            }
        }
        let data: Vec<f32> = px
            .iter()
            .map(|&v| {
                let n = if spec.noise > 0.0 {
                    spec.noise * rng.normal()
                } else {
                    0.0
                };
                (v + n).clamp(0.0, 1.0) as f32
            })
            .collect();
        frames.push(Tensor::new(&[h, w, 3], data)?);
    }
    Ok((ClipTensor::from_frames(&frames)?, traj))
}

/// Every clip of the dataset with its label, in index order.
pub fn gen_dataset(spec: &SyntheticDatasetSpec) -> Result<Vec<(ClipTensor, usize)>> {
    spec.validate()?;
    (0..spec.num_clips)
        .into_par_iter()
        .map(|i| generate_clip(spec, i).map(|(c, traj)| (c, traj.direction.label())))
        .collect()
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes `clip_NNNNN.dvt-clip` files, `manifest.tsv` and an echo of the spec
/// into `dir`. Returns the manifest path.
pub fn write_dataset(spec: &SyntheticDatasetSpec, dir: &Path) -> Result<PathBuf> {
    let clips = gen_dataset(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| DvtError::io(dir, e))?;
    let mut manifest = String::new();
    for (i, (clip, label)) in clips.iter().enumerate() {
        let name = format!("clip_{i:05}.dvt-clip");
        write_clip(&dir.join(&name), clip)?;
        manifest.push_str(&format!("{name}\t{label}\n"));
    }
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, manifest).map_err(|e| DvtError::io(&path, e))?;
    let spec_path = dir.join("dataset.cfg");
    std::fs::write(&spec_path, spec.to_text()).map_err(|e| DvtError::io(&spec_path, e))?;
    Ok(path)
}

/// Parses `path<TAB>label` lines; relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| DvtError::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.lines() {
        if !line.trim().is_empty() {
            let bad = |msg: &str| DvtError::Format {
                kind: "manifest",
                offset,
                msg: msg.to_string(),
            };
            let (p, l) = line.split_once('\t').ok_or_else(|| bad("expected `path<TAB>label`"))?;
            let label = l
                .trim()
                .parse()
                .map_err(|_| bad("label is not a non-negative integer"))?;
            out.push((root.join(p), label));
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// Reads every clip listed in a manifest.
pub fn load_manifest(path: &Path) -> Result<Vec<(ClipTensor, usize)>> {
    read_manifest(path)?
        .into_par_iter()
        .map(|(p, label)| read_clip(&p).map(|c| (c, label)))
        .collect()
}
