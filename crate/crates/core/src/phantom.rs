//! Synthetic multi-slice cine stacks with known respiratory ground truth.
//!
//! Each slice is rendered in a canonical frame (row index running superior
//! to inferior) and then stored under one of several orientation scenarios
//! so that reorientation is exercised. Content per slice:
//!
//! * a static body (a rounded square, so moving organs never touch its
//!   outline),
//! * a bright liver band below a dome-shaped diaphragm; the band (and
//!   its sigmoid upper edge) translates with the respiratory waveform and
//!   brightens slightly with expiration (through-plane partial volume),
//! * a bright disc (heart) whose radius pulsates at the cardiac rate and
//!   whose center rides along with a fraction of the respiratory motion,
//! * additive Gaussian noise, clamped so intensities stay nonnegative.
//!
//! Randomness comes from ChaCha8 seeded with the config seed, one stream
//! per slice (`set_stream(slice)`), so output is independent of the order
//! in which slices are generated.

use std::f64::consts::{PI, TAU};
use std::ops::Range;

use ndarray::{s, Array2, Array3, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{CineStack, PhantomTruth, SliceSeries, Vec3, MIN_COLS, MIN_FRAMES, MIN_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RespPattern {
    Periodic,
    /// Constant cycle twice the configured period.
    LongCycle,
    /// Period and amplitude follow bounded log-scale random walks.
    Irregular,
    /// Periodic plus a linear baseline drift.
    WithDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationScenario {
    /// Stored as rendered: rows run superior to inferior.
    Aligned,
    /// Stored transposed: columns carry the SI axis.
    Transposed,
    /// Stored upside down: rows run inferior to superior.
    Flipped,
    /// Tilted plane, stored transposed and flipped.
    Oblique,
}

impl OrientationScenario {
    pub const ALL: [OrientationScenario; 4] = [
        OrientationScenario::Aligned,
        OrientationScenario::Transposed,
        OrientationScenario::Flipped,
        OrientationScenario::Oblique,
    ];
}

impl RespPattern {
    pub const ALL: [RespPattern; 4] = [
        RespPattern::Periodic,
        RespPattern::LongCycle,
        RespPattern::Irregular,
        RespPattern::WithDrift,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub slices: usize,
    /// Rows of the rendered (SI-aligned) image.
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub frame_period_s: f64,
    pub resp_pattern: RespPattern,
    pub resp_period_s: f64,
    pub resp_amp_px: f64,
    pub cardiac_rate_hz: f64,
    pub cardiac_amp_px: f64,
    /// Starting respiratory phase per slice in radians; drawn at random
    /// when absent.
    pub phase_offsets: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub orientation: OrientationScenario,
    pub seed: u64,
    pub pixel_spacing_mm: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            slices: 10,
            rows: 64,
            cols: 64,
            frames: 250,
            frame_period_s: 0.04,
            resp_pattern: RespPattern::Periodic,
            resp_period_s: 4.0,
            resp_amp_px: 5.0,
            cardiac_rate_hz: 1.2,
            cardiac_amp_px: 2.0,
            phase_offsets: None,
            noise_sigma: 0.02,
            orientation: OrientationScenario::Aligned,
            seed: 7,
            pixel_spacing_mm: 1.6,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.slices == 0 {
            return bad("need at least one slice".into());
        }
        if self.rows < MIN_ROWS || self.cols < MIN_COLS || self.frames < MIN_FRAMES {
            return bad(format!(
                "need at least {MIN_ROWS}x{MIN_COLS} pixels and {MIN_FRAMES} frames, got {}x{}x{}",
                self.rows, self.cols, self.frames
            ));
        }
        if !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return bad(format!("frame period {} must be positive", self.frame_period_s));
        }
        if !(self.resp_period_s > 0.0 && self.resp_period_s.is_finite()) {
            return bad(format!("respiratory period {} must be positive", self.resp_period_s));
        }
        if !(self.resp_amp_px > 0.0 && self.resp_amp_px < self.rows as f64 / 4.0) {
            return bad(format!(
                "respiratory amplitude {} px must lie in (0, {})",
                self.resp_amp_px,
                self.rows as f64 / 4.0
            ));
        }
        if !(self.cardiac_rate_hz > 0.8 && self.cardiac_rate_hz < 2.5) {
            return bad(format!("cardiac rate {} Hz must lie in (0.8, 2.5)", self.cardiac_rate_hz));
        }
        if !(self.cardiac_amp_px >= 0.0 && self.cardiac_amp_px.is_finite()) {
            return bad(format!("cardiac amplitude {} must be nonnegative", self.cardiac_amp_px));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be nonnegative", self.noise_sigma));
        }
        if !(self.pixel_spacing_mm > 0.0 && self.pixel_spacing_mm.is_finite()) {
            return bad(format!("pixel spacing {} must be positive", self.pixel_spacing_mm));
        }
        if let Some(p) = &self.phase_offsets {
            if p.len() != self.slices || p.iter().any(|x| !x.is_finite()) {
                return bad(format!("need {} finite phase offsets, got {}", self.slices, p.len()));
            }
        }
        Ok(())
    }

    /// Nominal respiratory period after pattern adjustments.
    pub fn effective_period_s(&self) -> f64 {
        match self.resp_pattern {
            RespPattern::LongCycle => 2.0 * self.resp_period_s,
            _ => self.resp_period_s,
        }
    }

    fn extremum_half_window(&self) -> usize {
        ((0.25 * self.effective_period_s() / self.frame_period_s).round() as usize).max(1)
    }
}

/// Frames whose value is the maximum (minimum) of the window of
/// `half_window` frames on either side, clipped at the series ends.
pub fn local_extrema(signal: &[f64], half_window: usize) -> (Vec<usize>, Vec<usize>) {
    let n = signal.len();
    let (mut maxima, mut minima) = (Vec::new(), Vec::new());
    for i in 0..n {
        let win = &signal[i.saturating_sub(half_window)..(i + half_window + 1).min(n)];
        if win.iter().all(|v| *v <= signal[i]) {
            maxima.push(i);
        }
        if win.iter().all(|v| *v >= signal[i]) {
            minima.push(i);
        }
    }
    (maxima, minima)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Logistic scale giving a roughly 2-pixel edge.
const EDGE_SCALE_PX: f64 = 0.5;
/// Share of diaphragm displacement followed by the heart.
const HEART_COUPLING: f64 = 0.3;
/// Liver brightness gain per pixel of displacement, relative to image
/// height: through-plane motion changes how much liver the slice cuts.
const THROUGH_PLANE_GAIN: f64 = 1.0;

struct SliceWaveforms {
    /// Superior-positive diaphragm displacement, pixels.
    disp_px: Vec<f64>,
    cardiac_phase: Vec<f64>,
    rwave_times_s: Vec<f64>,
}

fn waveforms(cfg: &PhantomConfig, slice: usize, rng: &mut ChaCha8Rng) -> SliceWaveforms {
    let n = cfg.frames;
    let dt = cfg.frame_period_s;
    let duration = n as f64 * dt;

    // Fixed draw order keeps streams reproducible.
    let drawn_phase = rng.random::<f64>() * TAU;
    let phase0 = cfg.phase_offsets.as_ref().map_or(drawn_phase, |p| p[slice]);
    let cardiac0 = rng.random::<f64>() * TAU;
    let amp_scale = 0.85 + 0.3 * rng.random::<f64>();
    let drift_sign = if rng.random::<bool>() { 1.0 } else { -1.0 };

    let amp = cfg.resp_amp_px * amp_scale;
    let period = cfg.effective_period_s();
    let (mut log_period, mut log_amp) = (0.0f64, 0.0f64);
    let mut theta = phase0;
    let mut disp_px = Vec::with_capacity(n);
    for f in 0..n {
        let t = (f as f64 + 0.5) * dt;
        let (p, a) = match cfg.resp_pattern {
            RespPattern::Irregular => {
                let step_p: f64 = rng.sample(StandardNormal);
                let step_a: f64 = rng.sample(StandardNormal);
                log_period = (log_period + 0.03 * step_p).clamp(-0.4, 0.4);
                log_amp = (log_amp + 0.02 * step_a).clamp(-0.35, 0.35);
                (period * log_period.exp(), amp * log_amp.exp())
            }
            _ => (period, amp),
        };
        if f > 0 {
            theta += TAU * dt / p;
        }
        let mut d = a * theta.cos();
        if cfg.resp_pattern == RespPattern::WithDrift {
            d += drift_sign * 0.6 * amp * (t / duration - 0.5);
        }
        disp_px.push(d);
    }

    let omega = TAU * cfg.cardiac_rate_hz;
    let cardiac_phase = (0..n)
        .map(|f| (cardiac0 + omega * (f as f64 + 0.5) * dt).rem_euclid(TAU))
        .collect();
    // Triggers where the cardiac phase wraps through zero.
    let rwave_times_s = (0..)
        .map(|k| (TAU * k as f64 - cardiac0) / omega)
        .skip_while(|t| *t < 0.0)
        .take_while(|t| *t <= duration)
        .collect();

    SliceWaveforms {
        disp_px,
        cardiac_phase,
        rwave_times_s,
    }
}

/// Static geometry of one slice in the canonical orientation.
struct Anatomy {
    /// Body mask, rows × cols.
    body: Array2<f64>,
    /// Lateral extent of the liver, per column.
    liver_lateral: Vec<f64>,
    /// Resting diaphragm row, per column.
    dome: Vec<f64>,
    liver_depth: f64,
    rows: f64,
    heart_x: f64,
    heart_y: f64,
    heart_r: f64,
}

impl Anatomy {
    fn new(cfg: &PhantomConfig, slice: usize) -> Self {
        let (rows, cols) = (cfg.rows as f64, cfg.cols as f64);
        let pos = if cfg.slices > 1 {
            slice as f64 / (cfg.slices - 1) as f64
        } else {
            0.5
        };
        let (cy, cx) = (0.5 * rows, 0.5 * cols);
        let (ay, ax) = (0.46 * rows, 0.46 * cols);
        let body = Array2::from_shape_fn((cfg.rows, cfg.cols), |(r, c)| {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let rho = (((x - cx) / ax).powi(4) + ((y - cy) / ay).powi(4)).powf(0.25);
            sigmoid((1.0 - rho) * ax.min(ay) / EDGE_SCALE_PX)
        });
        let dome_base = (0.58 + 0.04 * (pos - 0.5)) * rows;
        let column_x = |c: usize| c as f64 + 0.5;
        Self {
            body,
            liver_lateral: (0..cfg.cols)
                .map(|c| sigmoid((0.35 * cols - (column_x(c) - cx).abs()) / EDGE_SCALE_PX))
                .collect(),
            dome: (0..cfg.cols)
                .map(|c| dome_base + 0.12 * rows * ((column_x(c) - cx) / cx).powi(2))
                .collect(),
            liver_depth: 0.14 * rows,
            rows,
            heart_x: 0.45 * cols,
            heart_y: 0.36 * rows,
            heart_r: 0.12 * rows.min(cols) * (1.1 - 0.3 * pos),
        }
    }

    /// Renders one frame into `out`.
    fn render(&self, disp: f64, heart_pulse: f64, mut out: ArrayViewMut2<f64>) {
        let heart_y = self.heart_y - HEART_COUPLING * disp;
        let heart_r = self.heart_r + heart_pulse;
        let liver_gain = 0.55 * (1.0 + THROUGH_PLANE_GAIN * disp / self.rows);
        for ((r, c), v) in out.indexed_iter_mut() {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let edge = self.dome[c] - disp;
            let liver = sigmoid((y - edge) / EDGE_SCALE_PX)
                * sigmoid((edge + self.liver_depth - y) / EDGE_SCALE_PX)
                * self.liver_lateral[c];
            let dist = ((x - self.heart_x).powi(2) + (y - heart_y).powi(2)).sqrt();
            let heart = sigmoid((heart_r - dist) / EDGE_SCALE_PX);
            *v = self.body[[r, c]] * (0.2 + liver_gain * liver + 0.6 * heart);
        }
    }
}

struct Placement {
    row_dir: Vec3,
    col_dir: Vec3,
    transpose: bool,
    flip_rows: bool,
}

fn placement(scenario: OrientationScenario) -> Placement {
    // Canonical axes: `down` is the rendered row direction (mostly
    // inferior), `across` the rendered column direction.
    let (down, across): (Vec3, Vec3) = match scenario {
        OrientationScenario::Oblique => {
            let a = 20f64.to_radians();
            let c30 = (PI / 6.0).cos();
            (
                [0.0, 0.5, -c30],
                [a.cos(), a.sin() * c30, a.sin() * 0.5],
            )
        }
        _ => ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0]),
    };
    let up = [-down[0], -down[1], -down[2]];
    match scenario {
        OrientationScenario::Aligned => Placement {
            row_dir: down,
            col_dir: across,
            transpose: false,
            flip_rows: false,
        },
        OrientationScenario::Transposed => Placement {
            row_dir: across,
            col_dir: down,
            transpose: true,
            flip_rows: false,
        },
        OrientationScenario::Flipped => Placement {
            row_dir: up,
            col_dir: across,
            transpose: false,
            flip_rows: true,
        },
        OrientationScenario::Oblique => Placement {
            row_dir: across,
            col_dir: up,
            transpose: true,
            flip_rows: true,
        },
    }
}

/// Maps a canonical `[frame, row, col]` array into stored layout.
fn store(canonical: Array3<f64>, p: &Placement) -> Array3<f64> {
    let flipped = if p.flip_rows {
        canonical.slice(s![.., ..;-1, ..]).to_owned()
    } else {
        canonical
    };
    if p.transpose {
        flipped
            .permuted_axes([0, 2, 1])
            .as_standard_layout()
            .into_owned()
    } else {
        flipped
    }
}

struct RenderedSlice {
    slice: SliceSeries,
    resp_mm: Vec<f64>,
    cardiac_phase: Vec<f64>,
}

fn generate_slice(cfg: &PhantomConfig, slice: usize) -> Result<RenderedSlice> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(slice as u64);
    let wf = waveforms(cfg, slice, &mut rng);

    let anatomy = Anatomy::new(cfg, slice);
    let mut canonical = Array3::zeros((cfg.frames, cfg.rows, cfg.cols));
    for (f, frame) in canonical.outer_iter_mut().enumerate() {
        let pulse = cfg.cardiac_amp_px * wf.cardiac_phase[f].cos();
        anatomy.render(wf.disp_px[f], pulse, frame);
    }
    if cfg.noise_sigma > 0.0 {
        for v in canonical.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = (*v + cfg.noise_sigma * z).max(0.0);
        }
    }
    let p = placement(cfg.orientation);
    let slice_series = SliceSeries::new(
        store(canonical, &p),
        cfg.frame_period_s,
        p.row_dir,
        p.col_dir,
        wf.rwave_times_s,
        slice,
    )?;
    Ok(RenderedSlice {
        slice: slice_series,
        resp_mm: wf.disp_px.iter().map(|d| d * cfg.pixel_spacing_mm).collect(),
        cardiac_phase: wf.cardiac_phase,
    })
}

pub fn generate(cfg: &PhantomConfig) -> Result<(CineStack, PhantomTruth)> {
    cfg.validate()?;
    let rendered = (0..cfg.slices)
        .into_par_iter()
        .map(|j| generate_slice(cfg, j))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let half = cfg.extremum_half_window();
    let mut truth = PhantomTruth {
        resp_signal: Vec::with_capacity(cfg.slices),
        pe_frames: Vec::with_capacity(cfg.slices),
        pi_frames: Vec::with_capacity(cfg.slices),
        cardiac_phase: Vec::with_capacity(cfg.slices),
    };
    let mut slices = Vec::with_capacity(cfg.slices);
    for r in rendered {
        let (pe, pi) = local_extrema(&r.resp_mm, half);
        truth.pe_frames.push(pe);
        truth.pi_frames.push(pi);
        truth.resp_signal.push(r.resp_mm);
        truth.cardiac_phase.push(r.cardiac_phase);
        slices.push(r.slice);
    }
    Ok((CineStack::new(slices)?, truth))
}

/// Contiguous, near-equal frame ranges; earlier parts take the remainder.
pub fn frame_partition(frames: usize, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 {
        return Err(Error::InvalidParameter("cannot split into zero parts".into()));
    }
    let base = frames / parts;
    let extra = frames % parts;
    if base < MIN_FRAMES {
        return Err(Error::InvalidParameter(format!(
            "splitting {frames} frames into {parts} parts leaves parts shorter than {MIN_FRAMES} frames"
        )));
    }
    let mut start = 0;
    Ok((0..parts)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Cuts every slice of a stack into `parts` consecutive sub-series. R-wave
/// times are shifted to each part's start; those outside a part are dropped.
pub fn split_series(stack: &CineStack, parts: usize) -> Result<Vec<CineStack>> {
    let ranges = frame_partition(stack.frames(), parts)?;
    let dt = stack.frame_period_s();
    ranges
        .iter()
        .map(|range| {
            let t0 = range.start as f64 * dt;
            let t1 = range.end as f64 * dt;
            let slices = stack
                .slices()
                .iter()
                .map(|s| {
                    let pixels = s.pixels().slice(s![range.clone(), .., ..]).to_owned();
                    let rwaves = s
                        .rwave_times_s()
                        .iter()
                        .filter(|t| **t >= t0 && **t <= t1)
                        .map(|t| (t - t0).clamp(0.0, t1 - t0))
                        .collect();
                    SliceSeries::new_unchecked_intensity(
                        pixels,
                        dt,
                        s.row_dir(),
                        s.col_dir(),
                        rwaves,
                        s.slice_index(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            CineStack::new(slices)
        })
        .collect()
}

impl PhantomTruth {
    /// Truth restricted to the same frame ranges as [`split_series`].
    pub fn split(&self, parts: usize) -> Result<Vec<PhantomTruth>> {
        let frames = self.resp_signal.first().map_or(0, |v| v.len());
        let ranges = frame_partition(frames, parts)?;
        let cut = |sets: &[Vec<usize>], r: &Range<usize>| -> Vec<Vec<usize>> {
            sets.iter()
                .map(|s| s.iter().filter(|f| r.contains(f)).map(|f| f - r.start).collect())
                .collect()
        };
        Ok(ranges
            .iter()
            .map(|r| PhantomTruth {
                resp_signal: self.resp_signal.iter().map(|v| v[r.clone()].to_vec()).collect(),
                pe_frames: cut(&self.pe_frames, r),
                pi_frames: cut(&self.pi_frames, r),
                cardiac_phase: self.cardiac_phase.iter().map(|v| v[r.clone()].to_vec()).collect(),
            })
            .collect())
    }
}
