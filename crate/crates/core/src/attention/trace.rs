//! Sampling traces of the deformable schemes.
//!
//! JSON Lines, one object per (layer, head, query):
//!
//! ```text
//! {"layer":0,"head":0,"t":1,"s":5,"samples":[{"tp":1,"y":1.0,"x":1.25,"w":0.125,"scale":0}, ...]}
//! ```
//!
//! `tp` is the sampled token frame, `(y, x)` the clamped location in the
//! node-index space of that scale's grid, `w` the normalised weight and
//! `scale` the feature scale (always 0 for space-time attention).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{DvtError, Result};

use super::deform::SampleRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub tp: usize,
    pub y: f64,
    pub x: f64,
    pub w: f64,
    pub scale: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub layer: usize,
    pub head: usize,
    pub t: usize,
    pub s: usize,
    pub samples: Vec<TraceSample>,
}

impl TraceRecord {
    pub fn weight_sum(&self) -> f64 {
        self.samples.iter().map(|s| s.w).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub records: Vec<TraceRecord>,
}

impl AttentionTrace {
    /// Groups gather records (query-major, then head, then slot) by query and
    /// head. Query `i` is token `(i / sites, i % sites)`.
    pub(crate) fn from_records(
        layer: usize,
        sites: usize,
        heads: usize,
        slots: usize,
        records: &[SampleRecord],
    ) -> Self {
        let records = records
            .chunks(slots)
            .enumerate()
            .map(|(k, chunk)| {
                let (q, head) = (k / heads, k % heads);
                let samples = chunk
                    .iter()
                    .map(|r| TraceSample {
                        tp: r.frame,
                        y: r.y,
                        x: r.x,
                        w: r.weight,
                        scale: r.grid,
                    })
                    .collect();
                TraceRecord {
                    layer,
                    head,
                    t: q / sites,
                    s: q % sites,
                    samples,
                }
            })
            .collect();
        AttentionTrace { records }
    }

    pub fn extend(&mut self, other: AttentionTrace) {
        self.records.extend(other.records);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        let mut offset = 0;
        for line in input.lines() {
            let line = line.map_err(|e| DvtError::io("<trace>", e))?;
            if !line.trim().is_empty() {
                let r = serde_json::from_str(&line).map_err(|e| DvtError::Format {
                    kind: "trace",
                    offset,
                    msg: e.to_string(),
                })?;
                records.push(r);
            }
            offset += line.len() + 1;
        }
        Ok(AttentionTrace { records })
    }
}
