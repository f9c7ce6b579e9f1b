//! Statistics pooling: a variable-length sequence of embedding frames is
//! collapsed into one fixed-width vector.
//!
//! For an embedding width `D` the output has `6 * D` values laid out
//! statistic-major:
//!
//! ```text
//! [ mean | std | skewness | kurtosis | min | max ]   each block D wide
//! ```
//!
//! Moments are population moments (divide by `T`); skewness is `m3 / m2^1.5`
//! and kurtosis is the excess kurtosis `m4 / m2^2 - 3`. When `m2 < 1e-12`
//! both are defined as 0.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of statistics per embedding dimension.
pub const STATISTICS: usize = 6;

/// Width of the embeddings produced by the upstream speech model.
pub const DEFAULT_EMBEDDING_DIM: usize = 768;

/// Below this second central moment skewness and kurtosis are 0.
pub const ZERO_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Healthy,
    Parkinson,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Healthy => 0,
            Label::Parkinson => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Healthy),
            1 => Some(Label::Parkinson),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Parkinson
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Healthy => "HC",
            Label::Parkinson => "PD",
        })
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    /// Accepts `0`/`1`, `HC`/`PD` and `healthy`/`parkinson`, case-insensitive.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "hc" | "healthy" => Ok(Label::Healthy),
            "1" | "pd" | "parkinson" => Ok(Label::Parkinson),
            _ => Err(s.to_string()),
        }
    }
}

/// `T x D` frames of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    recording_id: String,
    frames: Array2<f64>,
}

impl EmbeddingSequence {
    pub fn new(recording_id: impl Into<String>, frames: Array2<f64>) -> Result<Self> {
        let recording_id = recording_id.into();
        if frames.nrows() == 0 {
            return Err(Error::Data(format!("recording {recording_id} has no frames")));
        }
        if frames.ncols() == 0 {
            return Err(Error::Data(format!("recording {recording_id} has zero-width frames")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("recording {recording_id} has non-finite values")));
        }
        Ok(Self {
            recording_id,
            frames: frames.as_standard_layout().into_owned(),
        })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// One labelled recording as stored in a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub site_id: String,
    pub label: Label,
    pub sequence: EmbeddingSequence,
}

/// Pooled static representation of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Label,
    pub subject_id: String,
    pub site_id: String,
}

/// Six statistics per embedding dimension, statistic-major.
pub fn pool_statistics(seq: &EmbeddingSequence) -> Result<Vec<f64>> {
    let frames = seq.frames();
    let (t, d) = frames.dim();
    if t == 0 {
        return Err(Error::Data(format!("recording {} has no frames", seq.recording_id())));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("recording {} has non-finite values", seq.recording_id())));
    }
    let n = t as f64;

    let mut mean = vec![0.0; d];
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in frames.rows() {
        for (j, &x) in row.iter().enumerate() {
            mean[j] += x;
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut m2 = vec![0.0; d];
    let mut m3 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    for row in frames.rows() {
        for (j, &x) in row.iter().enumerate() {
            let c = x - mean[j];
            let c2 = c * c;
            m2[j] += c2;
            m3[j] += c2 * c;
            m4[j] += c2 * c2;
        }
    }

    let mut out = Vec::with_capacity(STATISTICS * d);
    out.extend_from_slice(&mean);
    out.extend(m2.iter().map(|s| (s / n).sqrt()));
    for j in 0..d {
        let v = m2[j] / n;
        out.push(if v < ZERO_VARIANCE { 0.0 } else { (m3[j] / n) / v.powf(1.5) });
    }
    for j in 0..d {
        let v = m2[j] / n;
        out.push(if v < ZERO_VARIANCE { 0.0 } else { (m4[j] / n) / (v * v) - 3.0 });
    }
    if t == 1 {
        // min and max equal the single frame, which equals the mean.
        out.extend_from_slice(&mean);
        out.extend_from_slice(&mean);
    } else {
        out.extend_from_slice(&min);
        out.extend_from_slice(&max);
    }
    Ok(out)
}

/// Pools every recording, preserving order.
pub fn pool_corpus(recordings: &[Recording]) -> Result<Vec<FeatureVector>> {
    recordings
        .iter()
        .map(|r| {
            let values = pool_statistics(&r.sequence).map_err(|e| Error::Recording {
                recording: r.sequence.recording_id().to_string(),
                source: Box::new(e),
            })?;
            Ok(FeatureVector {
                values,
                label: r.label,
                subject_id: r.subject_id.clone(),
                site_id: r.site_id.clone(),
            })
        })
        .collect()
}
