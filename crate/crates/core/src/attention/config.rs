use std::fmt;
use std::str::FromStr;

use crate::error::{DvtError, Result};
use crate::tokenization::GridGeom;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Global,
    Space,
    Time,
    Dsta,
    Dmsa,
    DstMs,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Global,
        Scheme::Space,
        Scheme::Time,
        Scheme::Dsta,
        Scheme::Dmsa,
        Scheme::DstMs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Global => "global",
            Scheme::Space => "space",
            Scheme::Time => "time",
            Scheme::Dsta => "dsta",
            Scheme::Dmsa => "dmsa",
            Scheme::DstMs => "dst_ms",
        }
    }

    /// Whether the scheme reads motion cues.
    pub fn uses_cues(self) -> bool {
        matches!(self, Scheme::Dsta | Scheme::DstMs)
    }

    pub fn is_deformable(self) -> bool {
        matches!(self, Scheme::Dsta | Scheme::Dmsa | Scheme::DstMs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = DvtError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DvtError::config(format!("unknown attention scheme `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    Linear,
    Mixer,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Linear => "linear",
            FusionMode::Mixer => "mixer",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = DvtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(FusionMode::Linear),
            "mixer" => Ok(FusionMode::Mixer),
            _ => Err(DvtError::config(format!("unknown fusion mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnConfig {
    /// `N`: deformable samples per frame.
    pub samples: usize,
    /// `B`: sub-clips.
    pub subclips: usize,
    /// `N_ms`: samples per scale.
    pub ms_samples: usize,
    /// `F`: feature scales; scale `f` has spatial stride `2^f`.
    pub scales: usize,
    pub heads: usize,
    pub scheme: Scheme,
    pub fusion: FusionMode,
    /// Mixer expansion factor.
    pub rho: usize,
    /// Predict offsets from `z + m` instead of `q + m`.
    pub offset_from_raw_token: bool,
}

impl Default for AttnConfig {
    fn default() -> Self {
        AttnConfig {
            samples: 4,
            subclips: 1,
            ms_samples: 4,
            scales: 2,
            heads: 2,
            scheme: Scheme::Dsta,
            fusion: FusionMode::Linear,
            rho: 4,
            offset_from_raw_token: false,
        }
    }
}

impl AttnConfig {
    pub fn stride(&self, scale: usize) -> usize {
        1 << scale
    }

    pub fn head_dim(&self, dim: usize) -> usize {
        dim / self.heads
    }

    /// Checks the configuration against a token grid of width `dim`.
    pub fn validate(&self, geom: &GridGeom, dim: usize) -> Result<()> {
        if self.heads == 0 || !dim.is_multiple_of(self.heads) {
            return Err(DvtError::config(format!(
                "embedding dimension {dim} not divisible by {} heads",
                self.heads
            )));
        }
        if self.rho == 0 {
            return Err(DvtError::config("rho must be >= 1"));
        }
        if self.scheme.uses_cues() {
            if self.samples == 0 {
                return Err(DvtError::config("samples per frame must be >= 1"));
            }
            if self.subclips == 0 || !geom.frames.is_multiple_of(self.subclips) {
                return Err(DvtError::config(format!(
                    "{} token frames cannot be split into {} sub-clips",
                    geom.frames, self.subclips
                )));
            }
        }
        if matches!(self.scheme, Scheme::Dmsa | Scheme::DstMs) {
            if self.scales == 0 || self.ms_samples == 0 {
                return Err(DvtError::config(
                    "multi-scale attention needs >= 1 scale and >= 1 sample",
                ));
            }
            let r = self.stride(self.scales - 1);
            if geom.grid_h / r == 0 || geom.grid_w / r == 0 {
                return Err(DvtError::config(format!(
                    "scale {} (stride {r}) leaves an empty map on a {}x{} grid",
                    self.scales - 1,
                    geom.grid_h,
                    geom.grid_w
                )));
            }
        }
        Ok(())
    }
}
