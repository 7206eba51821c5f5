//! Scoring of extracted signals against reference waveforms.

use serde::{Deserialize, Serialize};

use crate::direction::pearson;
use crate::error::{Error, Result};
use crate::stack::{RespSignal, SignState};

/// Per-slice Pearson correlation of each signal with its reference.
pub fn correlate_with_reference(signals: &[RespSignal], refs: &[Vec<f64>]) -> Result<Vec<f64>> {
    if signals.len() != refs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals but {} references",
            signals.len(),
            refs.len()
        )));
    }
    signals
        .iter()
        .zip(refs)
        .map(|(s, r)| {
            s.require(SignState::GloballyCorrected)?;
            if s.len() != r.len() {
                return Err(Error::DimensionMismatch(format!(
                    "slice {}: signal has {} frames, reference {}",
                    s.slice_index(),
                    s.len(),
                    r.len()
                )));
            }
            pearson(s.values(), r).map_err(|e| e.in_slice(s.slice_index()))
        })
        .collect()
}

/// Fraction of correlations that are strictly positive.
pub fn sign_accuracy(correlations: &[f64]) -> f64 {
    if correlations.is_empty() {
        return 0.0;
    }
    correlations.iter().filter(|r| **r > 0.0).count() as f64 / correlations.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); zero for one value.
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("cannot summarize an empty list".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(Summary {
        mean,
        sd,
        median,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Label of the evaluated series (`"full"`, `"part 1/2"`, ...).
    pub label: String,
    pub correlations: Vec<f64>,
    pub sign_accuracy: f64,
    pub summary: Summary,
    pub sd_convention: String,
}

impl EvaluationReport {
    pub fn new(label: impl Into<String>, correlations: Vec<f64>) -> Result<Self> {
        let summary = summarize(&correlations)?;
        Ok(Self {
            label: label.into(),
            sign_accuracy: sign_accuracy(&correlations),
            correlations,
            summary,
            sd_convention: "sample (n-1)".into(),
        })
    }

    /// One row in the style `label  mean±sd  median  min–max  accuracy`.
    pub fn table_row(&self) -> String {
        let s = &self.summary;
        format!(
            "{:<12} {:.2}±{:.2}  {:.2}  {:.2}–{:.2}  {:.2}",
            self.label, s.mean, s.sd, s.median, s.min, s.max, self.sign_accuracy
        )
    }
}

pub const TABLE_HEADER: &str = "series       mean±SD    median  range      sign-accuracy";
