//! Zero-phase temporal low-pass filtering.
//!
//! Kernels are Hamming-windowed sincs with an odd number of taps, applied
//! as a centered (non-causal) convolution so the output has no group delay.
//! Series ends are extended by mirror reflection about the first and last
//! samples.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stack::SliceSeries;

pub const DEFAULT_CUTOFF_HZ: f64 = 0.8;

/// Kernel length is the smallest odd count at or above this many cutoff
/// periods' worth of samples.
const CUTOFF_PERIODS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LowpassKernel {
    taps: Vec<f64>,
    cutoff_hz: f64,
    fs_hz: f64,
}

impl LowpassKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Samples on each side of the center tap.
    pub fn half_len(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }
}

pub fn design_lowpass(fs_hz: f64, cutoff_hz: f64) -> Result<LowpassKernel> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate {fs_hz} Hz must be positive"
        )));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz (Nyquist)",
            fs_hz / 2.0
        )));
    }
    let mut len = (CUTOFF_PERIODS * fs_hz / cutoff_hz).ceil() as usize;
    if len % 2 == 0 {
        len += 1;
    }
    let len = len.max(3);
    let center = (len / 2) as f64;
    let fc = cutoff_hz / fs_hz;
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let x = n as f64 - center;
            let ideal = if n as f64 == center {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos();
            ideal * window
        })
        .collect();
    // Mirror the first half so the taps are exactly symmetric.
    for n in 0..len / 2 {
        taps[len - 1 - n] = taps[n];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(LowpassKernel {
        taps,
        cutoff_hz,
        fs_hz,
    })
}

fn check_length(frames: usize, kernel: &LowpassKernel) -> Result<()> {
    if frames < crate::stack::MIN_FRAMES || kernel.len() > 2 * frames - 1 {
        return Err(Error::SignalTooShort {
            frames,
            taps: kernel.len(),
        });
    }
    Ok(())
}

/// Mirror index: ..., 2, 1, [0, 1, ..., n-1], n-2, n-3, ...
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 { -i } else { i };
    (if j >= n { 2 * (n - 1) - j } else { j }) as usize
}

fn convolve_into(input: ArrayView1<'_, f64>, mut out: ArrayViewMut1<'_, f64>, kernel: &LowpassKernel, scratch: &mut Vec<f64>) {
    let n = input.len();
    let half = kernel.half_len();
    scratch.clear();
    scratch.extend((0..n + 2 * half).map(|i| input[reflect(i as isize - half as isize, n)]));
    let taps = kernel.taps();
    for (i, o) in out.iter_mut().enumerate() {
        *o = scratch[i..i + taps.len()]
            .iter()
            .zip(taps)
            .map(|(x, t)| x * t)
            .sum();
    }
}

pub fn apply_zero_phase(series: &[f64], kernel: &LowpassKernel) -> Result<Vec<f64>> {
    check_length(series.len(), kernel)?;
    let mut out = vec![0.0; series.len()];
    convolve_into(
        ArrayView1::from(series),
        ArrayViewMut1::from(out.as_mut_slice()),
        kernel,
        &mut Vec::new(),
    );
    Ok(out)
}

/// `N × N` matrix `F` with `apply_zero_phase(x)[i] = Σ_j x[j] F[j, i]`,
/// mirror padding included.
pub fn filter_matrix(frames: usize, kernel: &LowpassKernel) -> Result<Array2<f64>> {
    check_length(frames, kernel)?;
    let half = kernel.half_len() as isize;
    let mut f = Array2::zeros((frames, frames));
    for i in 0..frames {
        for (k, t) in kernel.taps().iter().enumerate() {
            f[[reflect(i as isize + k as isize - half, frames), i]] += t;
        }
    }
    Ok(f)
}

/// Filters every row of a pixel-major `M × N` matrix in place.
pub(crate) fn filter_rows(data: &mut Array2<f64>, kernel: &LowpassKernel) -> Result<()> {
    let f = filter_matrix(data.ncols(), kernel)?;
    *data = data.dot(&f);
    Ok(())
}

/// Applies [`apply_zero_phase`] to every pixel's temporal profile.
pub fn filter_slice(slice: &SliceSeries, kernel: &LowpassKernel) -> Result<SliceSeries> {
    let (n, r, l) = slice.pixels().dim();
    let f = filter_matrix(n, kernel).map_err(|e| e.in_slice(slice.slice_index()))?;
    let frame_major = slice
        .pixels()
        .to_shape((n, r * l))
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    let filtered = f.t().dot(&frame_major);
    let pixels = filtered
        .into_shape_with_order((n, r, l))
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(slice.with_pixels(pixels))
}
