//! Sign resolution for per-slice respiratory signals.
//!
//! Step 1 makes every slice agree with slice 0: the sign applied to slice
//! `j + 1` is the sign of the running product of Pearson correlations
//! between adjacent eigen images. Step 2 picks one polarity for the whole
//! stack from the zeroth-moment-center (ZMC) curves, weighting each slice
//! by how far its correlation with the ZMC exceeds a threshold `tau`.
//!
//! ZMC values are stored superior-positive, so after Step 2 signal maxima
//! correspond to peak expiration.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_slice, LowpassKernel};
use crate::io::{reorient_with_plan, Reorientation};
use crate::pca::{extract_from_filtered, flatten, ExtractOptions, SliceExtraction};
use crate::stack::{CineStack, EigenImage, RespSignal, SignState, SliceSeries, ZmcCurve};

pub const DEFAULT_TAU: f64 = 0.7;

/// Record of every sign decision made for a stack.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignLedger {
    /// `r_{j,j+1}` between adjacent eigen images, length `J - 1`.
    pub pairwise_r: Vec<f64>,
    /// Correlation of each slice-consistent signal with its ZMC curve.
    /// Zero for slices whose ZMC curve has no variance.
    pub zmc_s: Vec<f64>,
    /// Step-1 flips. Entry 0 is always false: slice 0 is the reference and
    /// its raw sign only reflects extraction-time canonicalization.
    pub applied_flips: Vec<bool>,
    /// `+1` or `-1` once Step 2 has run, `0` before or when undetermined.
    pub global_sign: i8,
    pub consensus_score: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "correlating vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter("correlation needs at least 2 samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Step-1 flip decisions from the adjacent-pair correlation chain.
/// Entry `j` is true when slice `j` must be negated.
pub fn chain_flips(pairwise_r: &[f64]) -> Result<Vec<bool>> {
    let mut flips = Vec::with_capacity(pairwise_r.len() + 1);
    flips.push(false);
    let mut negative = false;
    for (j, r) in pairwise_r.iter().enumerate() {
        if *r == 0.0 {
            return Err(Error::DegenerateCorrelation(j, j + 1));
        }
        // Track the sign of the running product rather than the product
        // itself, which would underflow on long stacks.
        negative ^= *r < 0.0;
        flips.push(negative);
    }
    Ok(flips)
}

pub fn propagate_signs(
    eigen_images: &[EigenImage],
    signals: Vec<RespSignal>,
) -> Result<(Vec<RespSignal>, SignLedger)> {
    if eigen_images.len() != signals.len() || signals.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigen images for {} signals",
            eigen_images.len(),
            signals.len()
        )));
    }
    let pairwise_r = eigen_images
        .windows(2)
        .enumerate()
        .map(|(j, pair)| {
            let (a, b) = (pair[0].values(), pair[1].values());
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "eigen images {j} and {} have {} and {} pixels",
                    j + 1,
                    a.len(),
                    b.len()
                )));
            }
            pearson(a, b).map_err(|e| e.in_slice(j + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let applied_flips = chain_flips(&pairwise_r)?;
    let consistent = signals
        .into_iter()
        .zip(&applied_flips)
        .map(|(s, flip)| s.into_slice_consistent(*flip))
        .collect::<Result<Vec<_>>>()?;
    let ledger = SignLedger {
        pairwise_r,
        applied_flips,
        ..SignLedger::default()
    };
    Ok((consistent, ledger))
}

/// Sums each row across the horizontal axis: `P[row, frame]`, no clamping.
pub fn project_rows(slice: &SliceSeries) -> Array2<f64> {
    slice.pixels().sum_axis(Axis(2)).reversed_axes()
}

/// SI projection of a reoriented slice after low-pass filtering. Negative
/// sums from filter undershoot are clamped to zero.
pub fn si_projection(slice: &SliceSeries, kernel: &LowpassKernel) -> Result<Array2<f64>> {
    let filtered = filter_slice(slice, kernel)?;
    Ok(clamp_projection(project_rows(&filtered), slice.slice_index()))
}

fn clamp_projection(mut p: Array2<f64>, slice_index: usize) -> Array2<f64> {
    let mut clamped = 0usize;
    p.iter_mut().filter(|v| **v < 0.0).for_each(|v| {
        *v = 0.0;
        clamped += 1;
    });
    if clamped > 0 {
        log::debug!("slice {slice_index}: clamped {clamped} negative projection entries");
    }
    p
}

/// Interpolated zero crossing of `d(m) = Σ_{l≤m} P(l) − total/2`, in
/// 1-based row units. `d(0)` is taken as `−total/2`.
fn zmc_column(column: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let total: f64 = column.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let half = 0.5 * total;
    let mut cum = 0.0;
    let mut prev = -half;
    for (m, p) in column.enumerate() {
        cum += p;
        let d = cum - half;
        if d >= 0.0 {
            return Some((m + 1) as f64 - d / (d - prev));
        }
        prev = d;
    }
    None
}

/// Zeroth-moment-center curve of an `L_v × N` projection, stored negated.
pub fn zmc_curve(p: &Array2<f64>, slice_index: usize) -> Result<ZmcCurve> {
    let values = p
        .axis_iter(Axis(1))
        .enumerate()
        .map(|(frame, col)| {
            zmc_column(col.iter().copied())
                .map(|c| -c)
                .ok_or(Error::EmptyProjection { frame })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_slice(slice_index))?;
    ZmcCurve::new(values, p.nrows(), slice_index)
}

/// `Σ_j sign(s_j) · max(|s_j| − tau, 0)`.
pub fn consensus_score(s: &[f64], tau: f64) -> f64 {
    s.iter().map(|s| s.signum() * (s.abs() - tau).max(0.0)).sum()
}

pub fn global_sign(
    signals: Vec<RespSignal>,
    zmc: &[ZmcCurve],
    tau: f64,
    mut ledger: SignLedger,
) -> Result<(Vec<RespSignal>, SignLedger)> {
    if signals.len() != zmc.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} signals but {} ZMC curves",
            signals.len(),
            zmc.len()
        )));
    }
    for s in &signals {
        s.require(SignState::SliceConsistent)?;
    }
    let mut zmc_s = Vec::with_capacity(signals.len());
    for (s, c) in signals.iter().zip(zmc) {
        match pearson(s.values(), c.values()) {
            Ok(r) => zmc_s.push(r),
            Err(Error::ZeroVariance) => {
                log::warn!(
                    "slice {}: zero-variance ZMC or signal, excluded from consensus",
                    s.slice_index()
                );
                zmc_s.push(0.0);
            }
            Err(e) => return Err(e.in_slice(s.slice_index())),
        }
    }
    let consensus = consensus_score(&zmc_s, tau);
    ledger.zmc_s = zmc_s;
    ledger.consensus_score = consensus;
    if consensus == 0.0 || !consensus.is_finite() {
        ledger.global_sign = 0;
        return Err(Error::DirectionalityUndetermined {
            ledger: Box::new(ledger),
        });
    }
    let flip = consensus < 0.0;
    ledger.global_sign = if flip { -1 } else { 1 };
    let corrected = signals
        .into_iter()
        .map(|s| s.into_globally_corrected(flip))
        .collect::<Result<Vec<_>>>()?;
    Ok((corrected, ledger))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolveOptions {
    pub tau: f64,
    /// Compute ZMC on the low-pass-filtered series (default) rather than
    /// the raw images.
    pub zmc_filtered: bool,
    pub extract: ExtractOptions,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            zmc_filtered: true,
            extract: ExtractOptions::default(),
        }
    }
}

impl ResolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!(
                "tau {} must lie in [0, 1]",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Per-slice results that do not depend on any sign decision.
#[derive(Debug, Clone, PartialEq)]
pub struct StackAnalysis {
    pub extractions: Vec<SliceExtraction>,
    pub zmc: Vec<ZmcCurve>,
    pub reorientations: Vec<Reorientation>,
}

impl StackAnalysis {
    /// Negates the raw signal and eigen image of every slice where
    /// `flips[j]` is true.
    pub fn with_raw_flips(&self, flips: &[bool]) -> Self {
        let extractions = self
            .extractions
            .iter()
            .zip(flips)
            .map(|(e, f)| if *f { e.negated() } else { e.clone() })
            .collect();
        Self {
            extractions,
            ..self.clone()
        }
    }
}

fn analyze_slice(
    slice: &SliceSeries,
    kernel: &LowpassKernel,
    options: &ResolveOptions,
) -> Result<(SliceExtraction, ZmcCurve, Reorientation)> {
    let k = slice.slice_index();
    let filtered = filter_slice(slice, kernel)?;
    let extraction = extract_from_filtered(&flatten(&filtered), k, options.extract)?;
    let source = if options.zmc_filtered { &filtered } else { slice };
    let (reoriented, plan) = reorient_with_plan(source);
    let projection = clamp_projection(project_rows(&reoriented), k);
    let zmc = zmc_curve(&projection, k)?;
    Ok((extraction, zmc, plan))
}

/// Extraction, reorientation and ZMC for every slice, in parallel.
pub fn analyze_stack(
    stack: &CineStack,
    kernel: &LowpassKernel,
    options: &ResolveOptions,
) -> Result<StackAnalysis> {
    options.validate()?;
    let results: Vec<_> = stack
        .slices()
        .par_iter()
        .map(|s| analyze_slice(s, kernel, options))
        .collect();
    let mut analysis = StackAnalysis {
        extractions: Vec::with_capacity(stack.len()),
        zmc: Vec::with_capacity(stack.len()),
        reorientations: Vec::with_capacity(stack.len()),
    };
    for r in results {
        let (e, z, p) = r?;
        analysis.extractions.push(e);
        analysis.zmc.push(z);
        analysis.reorientations.push(p);
    }
    Ok(analysis)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub signals: Vec<RespSignal>,
    pub ledger: SignLedger,
    pub analysis: StackAnalysis,
}

impl Resolution {
    pub fn zmc(&self) -> &[ZmcCurve] {
        &self.analysis.zmc
    }
}

/// Both sign-resolution steps on a finished analysis.
pub fn resolve_analysis(analysis: StackAnalysis, tau: f64) -> Result<Resolution> {
    let eigen: Vec<EigenImage> = analysis
        .extractions
        .iter()
        .map(|e| e.eigen_image.clone())
        .collect();
    let raw: Vec<RespSignal> = analysis
        .extractions
        .iter()
        .map(|e| e.signal.clone())
        .collect();
    let (consistent, ledger) = propagate_signs(&eigen, raw)?;
    let (signals, ledger) = global_sign(consistent, &analysis.zmc, tau, ledger)?;
    Ok(Resolution {
        signals,
        ledger,
        analysis,
    })
}

pub fn resolve(
    stack: &CineStack,
    kernel: &LowpassKernel,
    options: &ResolveOptions,
) -> Result<Resolution> {
    let analysis = analyze_stack(stack, kernel, options)?;
    resolve_analysis(analysis, options.tau)
}
