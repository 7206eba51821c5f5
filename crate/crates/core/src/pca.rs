//! Per-slice principal component extraction of the respiratory signal.

use ndarray::{Array2, Array3, ArrayView1, Axis};

use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};
use crate::filter::{filter_rows, LowpassKernel};
use crate::stack::{EigenImage, RespSignal, SliceSeries};

/// Relative tolerance on `λ / ‖D‖²` below which a slice is considered static.
const STATIC_TOL: f64 = 1e-20;

/// Image series as an `M × N` matrix: column `n` is frame `n` flattened in
/// row-major order, so row `m = row * cols + col` is one pixel's time course.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedSeries {
    data: Array2<f64>,
}

impl FlattenedSeries {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() < crate::stack::MIN_FRAMES {
            return Err(Error::DimensionMismatch(format!(
                "need at least {} frames, got {}",
                crate::stack::MIN_FRAMES,
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in series matrix".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    pub fn frame(&self, n: usize) -> ArrayView1<'_, f64> {
        self.data.column(n)
    }
}

pub fn flatten(slice: &SliceSeries) -> FlattenedSeries {
    FlattenedSeries {
        data: flatten_frames(slice.pixels()),
    }
}

/// `[frame, row, col]` array to the `M × N` pixel-by-frame layout.
pub fn flatten_frames(pixels: &Array3<f64>) -> Array2<f64> {
    let (n, r, l) = pixels.dim();
    pixels
        .to_shape((n, r * l))
        .expect("frame-major pixels reshape to N x M")
        .t()
        .as_standard_layout()
        .into_owned()
}

/// Subtracts each pixel's temporal mean.
pub fn center_temporal(d: &FlattenedSeries) -> FlattenedSeries {
    let mut data = d.data.clone();
    let n = data.ncols() as f64;
    for mut row in data.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
    }
    FlattenedSeries { data }
}

/// Frame-space Gram matrix `DᵀD` (`N × N`), exactly symmetric.
pub fn covariance(centered: &FlattenedSeries) -> Array2<f64> {
    let mut sigma = centered.data.t().dot(&centered.data);
    let n = sigma.nrows();
    for i in 0..n {
        for j in i + 1..n {
            sigma[[j, i]] = sigma[[i, j]];
        }
    }
    sigma
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix and a
/// unit eigenvector for it. The vector's sign is whatever the solver
/// produced.
pub fn leading_eigenvector(sigma: &Array2<f64>) -> Result<(Vec<f64>, f64)> {
    let eig = symmetric_eigen(sigma)?;
    let last = eig.values.len() - 1;
    let lambda = eig.values[last].max(0.0);
    let v = eig.vectors.column(last).to_vec();
    Ok((v, lambda))
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
pub fn canonicalize_sign(v: &mut [f64]) -> bool {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    let flip = v.get(best).is_some_and(|x| *x < 0.0);
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    flip
}

/// `D · v`, one value per pixel.
pub fn eigen_image(d: &FlattenedSeries, v: &[f64], slice_index: usize) -> Result<EigenImage> {
    if v.len() != d.frames() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} against {} frames",
            v.len(),
            d.frames()
        )));
    }
    let image = d.data.dot(&ArrayView1::from(v));
    EigenImage::new(image.to_vec(), slice_index)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Make the raw signal's largest-magnitude entry positive.
    pub canonicalize: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { canonicalize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceExtraction {
    pub signal: RespSignal,
    pub eigen_image: EigenImage,
    /// Leading eigenvalue of the frame covariance.
    pub eigenvalue: f64,
    /// Trace of the frame covariance (sum of all eigenvalues).
    pub total_variance: f64,
}

impl SliceExtraction {
    /// Share of temporal variance captured by the leading component.
    pub fn energy_fraction(&self) -> f64 {
        self.eigenvalue / self.total_variance
    }

    /// Negates signal and eigen image together.
    pub fn negated(&self) -> Self {
        Self {
            signal: self.signal.negated(),
            eigen_image: self.eigen_image.negated(),
            ..*self
        }
    }
}

pub fn extract_slice_signal(slice: &SliceSeries, kernel: &LowpassKernel) -> Result<SliceExtraction> {
    extract_slice_signal_with(slice, kernel, ExtractOptions::default())
}

pub fn extract_slice_signal_with(
    slice: &SliceSeries,
    kernel: &LowpassKernel,
    options: ExtractOptions,
) -> Result<SliceExtraction> {
    let mut d = flatten(slice);
    filter_rows(&mut d.data, kernel).map_err(|e| e.in_slice(slice.slice_index()))?;
    extract_from_filtered(&d, slice.slice_index(), options)
}

/// The PCA stage on an already filtered series.
pub(crate) fn extract_from_filtered(
    d: &FlattenedSeries,
    slice_index: usize,
    options: ExtractOptions,
) -> Result<SliceExtraction> {
    let sigma = covariance(&center_temporal(d));
    let (mut v, lambda) = leading_eigenvector(&sigma).map_err(|e| e.in_slice(slice_index))?;
    let energy: f64 = d.data.iter().map(|x| x * x).sum();
    if lambda <= STATIC_TOL * energy || lambda == 0.0 {
        return Err(Error::NoTemporalVariation { slice: slice_index });
    }
    if options.canonicalize {
        canonicalize_sign(&mut v);
    }
    let eigen_image = eigen_image(d, &v, slice_index)?;
    let total_variance = sigma.diag().sum();
    Ok(SliceExtraction {
        signal: RespSignal::raw(v, slice_index)?,
        eigen_image,
        eigenvalue: lambda,
        total_variance,
    })
}
