//! Trace rendering: the JSONL dump plus one PPM per raw frame with the
//! sampling locations of a chosen query drawn on top.

use std::fs;
use std::path::{Path, PathBuf};

use crate::attention::{AttentionTrace, TraceRecord};
use crate::error::{DvtError, Result};
use crate::tokenization::{ClipTensor, GridGeom};

#[derive(Clone, Debug, PartialEq)]
pub struct ExportSummary {
    pub jsonl: PathBuf,
    pub frames: Vec<PathBuf>,
    /// Markers drawn on each raw frame.
    pub markers: Vec<usize>,
    /// Every record of the chosen query and head (two when both branches of
    /// the fused scheme sample).
    pub records: Vec<TraceRecord>,
}

/// Colour of the `rank`-th heaviest of `n` samples: red for the heaviest,
/// fading to blue.
fn rank_colour(rank: usize, n: usize) -> [u8; 3] {
    let a = if n <= 1 { 0.0 } else { rank as f64 / (n - 1) as f64 };
    [
        (255.0 * (1.0 - a)) as u8,
        (64.0 * (1.0 - (2.0 * a - 1.0).abs())) as u8,
        (255.0 * a) as u8,
    ]
}

fn check_geometry(
    trace: &AttentionTrace,
    clip: &ClipTensor,
    geom: &GridGeom,
    patch: usize,
    tubelet: usize,
) -> Result<()> {
    let (t, h, w) = clip.dims();
    if patch == 0 || tubelet == 0 || t / tubelet != geom.frames || h / patch != geom.grid_h || w / patch != geom.grid_w
    {
        return Err(DvtError::shape(
            "export_trace",
            &[t / tubelet.max(1), h / patch.max(1), w / patch.max(1)],
            &[geom.frames, geom.grid_h, geom.grid_w],
        ));
    }
    for r in &trace.records {
        if r.t >= geom.frames || r.s >= geom.sites() {
            return Err(DvtError::Domain(format!(
                "trace query ({}, {}) is outside the grid",
                r.t, r.s
            )));
        }
        for smp in &r.samples {
            let stride = 1usize << smp.scale;
            let (gh, gw) = (geom.grid_h.div_ceil(stride), geom.grid_w.div_ceil(stride));
            let inside = smp.y >= 0.0 && smp.x >= 0.0 && smp.y <= (gh - 1) as f64 && smp.x <= (gw - 1) as f64;
            if smp.tp >= geom.frames || !inside {
                return Err(DvtError::Domain(format!(
                    "sample (tp {}, y {}, x {}, scale {}) is outside the grid",
                    smp.tp, smp.y, smp.x, smp.scale
                )));
            }
        }
    }
    Ok(())
}

fn write_ppm(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<()> {
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(rgb);
    fs::write(path, bytes).map_err(|e| DvtError::io(path, e))?;
    Ok(())
}

/// Writes `trace.jsonl` and `frame_NNN.ppm` into `dir`. Markers show the
/// samples of the record for `(layer, head, t, s)`; a sample on token frame
/// `tp` is drawn on raw frame `tp · tubelet`.
#[allow(clippy::too_many_arguments)]
pub fn export_trace(
    trace: &AttentionTrace,
    clip: &ClipTensor,
    geom: &GridGeom,
    patch: usize,
    tubelet: usize,
    query: (usize, usize, usize, usize),
    dir: &Path,
) -> Result<ExportSummary> {
    check_geometry(trace, clip, geom, patch, tubelet)?;
    let (layer, head, qt, qs) = query;
    let records: Vec<TraceRecord> = trace
        .records
        .iter()
        .filter(|r| (r.layer, r.head, r.t, r.s) == query)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(DvtError::config(format!(
            "no trace record for layer {layer}, head {head}, query ({qt}, {qs})"
        )));
    }
    let samples: Vec<_> = records.iter().flat_map(|r| r.samples.iter().copied()).collect();
    fs::create_dir_all(dir).map_err(|e| DvtError::io(dir, e))?;
    let jsonl = dir.join("trace.jsonl");
    fs::write(&jsonl, trace.to_jsonl()).map_err(|e| DvtError::io(&jsonl, e))?;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[b].w.total_cmp(&samples[a].w));
    let mut rank = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let (frames, h, w) = clip.dims();
    let mut paths = Vec::with_capacity(frames);
    let mut markers = vec![0; frames];
    for f in 0..frames {
        let mut rgb: Vec<u8> = clip
            .frame(f)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        for (i, smp) in samples.iter().enumerate() {
            if smp.tp * tubelet != f {
                continue;
            }
            markers[f] += 1;
            let r = (1usize << smp.scale) as f64;
            let py = ((smp.y * r + 0.5) * patch as f64) as isize;
            let px = ((smp.x * r + 0.5) * patch as f64) as isize;
            let colour = rank_colour(rank[i], samples.len());
            for y in py - 1..=py + 1 {
                for x in px - 1..=px + 1 {
                    if (0..h as isize).contains(&y) && (0..w as isize).contains(&x) {
                        let o = 3 * (y as usize * w + x as usize);
                        rgb[o..o + 3].copy_from_slice(&colour);
                    }
                }
            }
        }
        let path = dir.join(format!("frame_{f:03}.ppm"));
        write_ppm(&path, w, h, &rgb)?;
        paths.push(path);
    }
    Ok(ExportSummary {
        jsonl,
        frames: paths,
        markers,
        records,
    })
}
