//! Data model shared by every pipeline stage.
//!
//! Patient coordinates use the (left, posterior, superior) basis, so the
//! z-component of a direction cosine measures how much an image axis runs
//! along the superior-inferior direction.
//!
//! `row_dir` is the patient-space direction in which the row index
//! increases (down the image); `col_dir` is the direction in which the
//! column index increases (across the image).

use ndarray::{Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const MIN_ROWS: usize = 2;
pub const MIN_COLS: usize = 2;
pub const MIN_FRAMES: usize = 3;

const UNIT_TOL: f64 = 1e-6;
const ORTHO_TOL: f64 = 1e-3;
const SIGNAL_NORM_TOL: f64 = 1e-9;

pub(crate) fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn neg3(a: &Vec3) -> Vec3 {
    [-a[0], -a[1], -a[2]]
}

/// One slice of a real-time cine acquisition: `frames × rows × cols`
/// magnitudes plus acquisition geometry and ECG triggers.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSeries {
    pixels: Array3<f64>,
    frame_period_s: f64,
    row_dir: Vec3,
    col_dir: Vec3,
    rwave_times_s: Vec<f64>,
    slice_index: usize,
}

impl SliceSeries {
    /// Builds a validated slice. `pixels` is indexed `[frame, row, col]`.
    pub fn new(
        pixels: Array3<f64>,
        frame_period_s: f64,
        row_dir: Vec3,
        col_dir: Vec3,
        rwave_times_s: Vec<f64>,
        slice_index: usize,
    ) -> Result<Self> {
        for (frame, view) in pixels.axis_iter(Axis(0)).enumerate() {
            if view.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::BadIntensity {
                    slice: slice_index,
                    frame,
                });
            }
        }
        Self::new_unchecked_intensity(
            pixels,
            frame_period_s,
            row_dir,
            col_dir,
            rwave_times_s,
            slice_index,
        )
    }

    /// Same as [`SliceSeries::new`] but admits negative intensities, which
    /// appear as undershoot after low-pass filtering.
    pub(crate) fn new_unchecked_intensity(
        pixels: Array3<f64>,
        frame_period_s: f64,
        row_dir: Vec3,
        col_dir: Vec3,
        rwave_times_s: Vec<f64>,
        slice_index: usize,
    ) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidSlice {
            slice: slice_index,
            reason,
        };
        let (n, r, l) = pixels.dim();
        if r < MIN_ROWS || l < MIN_COLS || n < MIN_FRAMES {
            return Err(invalid(format!(
                "need at least {MIN_ROWS}x{MIN_COLS} pixels and {MIN_FRAMES} frames, got {r}x{l}x{n}"
            )));
        }
        if let Some((frame, _)) = pixels
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, f)| f.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::BadIntensity {
                slice: slice_index,
                frame,
            });
        }
        if !(frame_period_s.is_finite() && frame_period_s > 0.0) {
            return Err(invalid(format!("frame period {frame_period_s} must be positive")));
        }
        for (name, d) in [("row_dir", &row_dir), ("col_dir", &col_dir)] {
            let norm = dot3(d, d).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(invalid(format!("{name} has norm {norm}, expected 1")));
            }
        }
        let cos = dot3(&row_dir, &col_dir);
        if cos.abs() >= ORTHO_TOL {
            return Err(invalid(format!("row_dir and col_dir not orthogonal (cos = {cos:.2e})")));
        }
        let duration = n as f64 * frame_period_s;
        if rwave_times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("R-wave times must be strictly increasing".into()));
        }
        if rwave_times_s
            .iter()
            .any(|t| !t.is_finite() || *t < 0.0 || *t > duration)
        {
            return Err(invalid(format!("R-wave time outside [0, {duration}] s")));
        }
        Ok(Self {
            pixels,
            frame_period_s,
            row_dir,
            col_dir,
            rwave_times_s,
            slice_index,
        })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn frame(&self, n: usize) -> ArrayView2<'_, f64> {
        self.pixels.index_axis(Axis(0), n)
    }

    /// Temporal profile of the pixel at (`row`, `col`).
    pub fn pixel_series(&self, row: usize, col: usize) -> ArrayView1<'_, f64> {
        self.pixels.slice(ndarray::s![.., row, col])
    }

    pub fn rows(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn cols(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn frames(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn row_dir(&self) -> Vec3 {
        self.row_dir
    }

    pub fn col_dir(&self) -> Vec3 {
        self.col_dir
    }

    pub fn rwave_times_s(&self) -> &[f64] {
        &self.rwave_times_s
    }

    pub fn slice_index(&self) -> usize {
        self.slice_index
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 * self.frame_period_s
    }

    pub(crate) fn with_slice_index(mut self, slice_index: usize) -> Self {
        self.slice_index = slice_index;
        self
    }

    /// Replaces the pixel array, keeping metadata. Dimensions may change
    /// (reorientation transposes) but the frame count may not.
    pub(crate) fn with_geometry(&self, pixels: Array3<f64>, row_dir: Vec3, col_dir: Vec3) -> Self {
        debug_assert_eq!(pixels.dim().0, self.frames());
        Self {
            pixels,
            frame_period_s: self.frame_period_s,
            row_dir,
            col_dir,
            rwave_times_s: self.rwave_times_s.clone(),
            slice_index: self.slice_index,
        }
    }

    pub(crate) fn with_pixels(&self, pixels: Array3<f64>) -> Self {
        self.with_geometry(pixels, self.row_dir, self.col_dir)
    }
}

/// An ordered stack of slices sharing dimensions and frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct CineStack {
    slices: Vec<SliceSeries>,
}

impl CineStack {
    /// Validates shared geometry. Each slice's index is reset to its position.
    pub fn new(slices: Vec<SliceSeries>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::DimensionMismatch("stack has no slices".into()))?;
        let dims = first.pixels.dim();
        let dt = first.frame_period_s;
        for (k, s) in slices.iter().enumerate().skip(1) {
            if s.pixels.dim() != dims {
                return Err(Error::DimensionMismatch(format!(
                    "slice {k} has frames x rows x cols {:?}, slice 0 has {:?}",
                    s.pixels.dim(),
                    dims
                )));
            }
            if s.frame_period_s != dt {
                return Err(Error::DimensionMismatch(format!(
                    "slice {k} has frame period {} s, slice 0 has {dt} s",
                    s.frame_period_s
                )));
            }
        }
        let slices = slices
            .into_iter()
            .enumerate()
            .map(|(k, s)| s.with_slice_index(k))
            .collect();
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[SliceSeries] {
        &self.slices
    }

    pub fn into_slices(self) -> Vec<SliceSeries> {
        self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.slices[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.slices[0].cols()
    }

    pub fn frames(&self) -> usize {
        self.slices[0].frames()
    }

    pub fn frame_period_s(&self) -> f64 {
        self.slices[0].frame_period_s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignState {
    /// Straight from the eigensolver; sign arbitrary.
    Raw,
    /// Consistent with the reference slice after pairwise propagation.
    SliceConsistent,
    /// After the stack-wide ZMC consensus; maxima mark peak expiration.
    GloballyCorrected,
}

/// Unit-norm per-frame respiratory signal of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct RespSignal {
    values: Vec<f64>,
    sign_state: SignState,
    slice_index: usize,
}

impl RespSignal {
    pub fn new(values: Vec<f64>, sign_state: SignState, slice_index: usize) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > SIGNAL_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "respiratory signal for slice {slice_index} has norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            values,
            sign_state,
            slice_index,
        })
    }

    pub fn raw(values: Vec<f64>, slice_index: usize) -> Result<Self> {
        Self::new(values, SignState::Raw, slice_index)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sign_state(&self) -> SignState {
        self.sign_state
    }

    pub fn slice_index(&self) -> usize {
        self.slice_index
    }

    /// Same signal with opposite polarity and unchanged state.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            sign_state: self.sign_state,
            slice_index: self.slice_index,
        }
    }

    pub(crate) fn require(&self, expected: SignState) -> Result<()> {
        if self.sign_state == expected {
            Ok(())
        } else {
            Err(Error::WrongSignState {
                slice: self.slice_index,
                state: self.sign_state,
                expected,
            })
        }
    }

    fn advance(self, from: SignState, to: SignState, flip: bool) -> Result<Self> {
        self.require(from)?;
        let mut out = if flip { self.negated() } else { self };
        out.sign_state = to;
        Ok(out)
    }

    pub fn into_slice_consistent(self, flip: bool) -> Result<Self> {
        self.advance(SignState::Raw, SignState::SliceConsistent, flip)
    }

    pub fn into_globally_corrected(self, flip: bool) -> Result<Self> {
        self.advance(SignState::SliceConsistent, SignState::GloballyCorrected, flip)
    }
}

/// Projection of a slice's (filtered) image series onto its respiratory
/// vector, one value per pixel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenImage {
    values: Vec<f64>,
    slice_index: usize,
}

impl EigenImage {
    pub fn new(values: Vec<f64>, slice_index: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSlice {
                slice: slice_index,
                reason: "eigen image has non-finite entries".into(),
            });
        }
        Ok(Self {
            values,
            slice_index,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice_index(&self) -> usize {
        self.slice_index
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            slice_index: self.slice_index,
        }
    }
}

/// Zeroth-moment-center trajectory, superior-positive: each value is the
/// negated row-index center, so it lies in `[-rows, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZmcCurve {
    values: Vec<f64>,
    slice_index: usize,
}

impl ZmcCurve {
    pub fn new(values: Vec<f64>, vertical_len: usize, slice_index: usize) -> Result<Self> {
        let lo = -(vertical_len as f64);
        if values
            .iter()
            .any(|v| !v.is_finite() || *v > 0.0 || *v < lo)
        {
            return Err(Error::InvalidSlice {
                slice: slice_index,
                reason: format!("ZMC value outside [{lo}, 0]"),
            });
        }
        Ok(Self {
            values,
            slice_index,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice_index(&self) -> usize {
        self.slice_index
    }
}

/// Frames of one cardiac cycle, `start_frame..=end_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatWindow {
    pub start_frame: usize,
    pub end_frame: usize,
    pub rr_s: f64,
}

impl HeartbeatWindow {
    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start_frame..=self.end_frame
    }

    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.frames().contains(&frame)
    }
}

/// Known ground truth for a synthetic stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    /// Per slice: diaphragm displacement in mm, superior-positive.
    pub resp_signal: Vec<Vec<f64>>,
    /// Per slice: local maxima of `resp_signal` (peak expiration).
    pub pe_frames: Vec<Vec<usize>>,
    /// Per slice: local minima of `resp_signal` (peak inspiration).
    pub pi_frames: Vec<Vec<usize>>,
    /// Per slice: cardiac phase in `[0, 2π)` at each frame.
    pub cardiac_phase: Vec<Vec<f64>>,
}

impl PhantomTruth {
    pub fn num_slices(&self) -> usize {
        self.resp_signal.len()
    }
}
