//! Heartbeat segmentation from R-wave triggers and respiratory-phase
//! selection of one peak-expiration (PE) and one peak-inspiration (PI) beat.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{HeartbeatWindow, RespSignal, SignState};

pub const DEFAULT_RR_TOLERANCE: f64 = 0.15;

/// Splits the series into R-to-R windows. Frame `f` (center time
/// `(f + 0.5) * dt`) belongs to window `k` when its center lies in
/// `[t_k, t_{k+1})`. Windows holding fewer than two frames are dropped.
pub fn segment_heartbeats(
    rwave_times_s: &[f64],
    frame_period_s: f64,
    frames: usize,
) -> Result<Vec<HeartbeatWindow>> {
    if rwave_times_s.len() < 2 {
        return Err(Error::InsufficientTriggers(rwave_times_s.len()));
    }
    let center = |f: usize| (f as f64 + 0.5) * frame_period_s;
    // First frame whose center is at or after t.
    let first_at_or_after = |t: f64| {
        let mut f = (t / frame_period_s - 0.5).ceil().max(0.0) as usize;
        while f > 0 && center(f - 1) >= t {
            f -= 1;
        }
        while f < frames && center(f) < t {
            f += 1;
        }
        f
    };
    let mut windows = Vec::with_capacity(rwave_times_s.len() - 1);
    for pair in rwave_times_s.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        let start = first_at_or_after(t0);
        let stop = first_at_or_after(t1).min(frames);
        if stop < start + 2 {
            log::warn!("R-R interval [{t0}, {t1}) s spans fewer than two frames, skipped");
            continue;
        }
        windows.push(HeartbeatWindow {
            start_frame: start,
            end_frame: stop - 1,
            rr_s: t1 - t0,
        });
    }
    Ok(windows)
}

/// `true` for each window whose RR deviates from the mean RR (over all
/// windows) by at most `tolerance` as a fraction of the mean.
pub fn sinus_mask(windows: &[HeartbeatWindow], tolerance: f64) -> Vec<bool> {
    if windows.is_empty() {
        return Vec::new();
    }
    let mean = windows.iter().map(|w| w.rr_s).sum::<f64>() / windows.len() as f64;
    windows
        .iter()
        .map(|w| (w.rr_s - mean).abs() / mean <= tolerance)
        .collect()
}

pub fn reject_arrhythmic(windows: &[HeartbeatWindow], tolerance: f64) -> Result<Vec<HeartbeatWindow>> {
    if windows.is_empty() {
        return Err(Error::NoSinusBeats(0));
    }
    let kept: Vec<_> = windows
        .iter()
        .zip(sinus_mask(windows, tolerance))
        .filter_map(|(w, keep)| keep.then_some(*w))
        .collect();
    if kept.is_empty() {
        return Err(Error::NoSinusBeats(windows.len()));
    }
    Ok(kept)
}

/// How a heartbeat's respiratory position is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMethod {
    /// Mean signal over the beat's frames.
    #[default]
    Mean,
    /// Signal at the beat's first (end-diastolic) frame.
    FirstFrame,
}

pub fn score_window(window: &HeartbeatWindow, signal: &[f64], method: ScoreMethod) -> f64 {
    match method {
        ScoreMethod::Mean => {
            signal[window.frames()].iter().sum::<f64>() / window.len() as f64
        }
        ScoreMethod::FirstFrame => signal[window.start_frame],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PePiSelection {
    pub pe: HeartbeatWindow,
    pub pi: HeartbeatWindow,
}

/// Highest-scoring window is PE, lowest is PI; ties go to the earliest start.
pub fn select_pe_pi(
    windows: &[HeartbeatWindow],
    signal: &RespSignal,
    method: ScoreMethod,
) -> Result<PePiSelection> {
    signal.require(SignState::GloballyCorrected)?;
    if windows.is_empty() {
        return Err(Error::NoSinusBeats(0));
    }
    if let Some(w) = windows.iter().find(|w| w.end_frame >= signal.len()) {
        return Err(Error::DimensionMismatch(format!(
            "window ending at frame {} exceeds {}-frame signal",
            w.end_frame,
            signal.len()
        )));
    }
    if windows.len() == 1 {
        log::warn!(
            "slice {}: single heartbeat serves as both PE and PI",
            signal.slice_index()
        );
    }
    let mut ordered: Vec<&HeartbeatWindow> = windows.iter().collect();
    ordered.sort_by_key(|w| w.start_frame);
    let scored: Vec<(f64, &HeartbeatWindow)> = ordered
        .into_iter()
        .map(|w| (score_window(w, signal.values(), method), w))
        .collect();
    let (mut pe, mut pi) = (scored[0], scored[0]);
    for &(s, w) in &scored[1..] {
        if s > pe.0 {
            pe = (s, w);
        }
        if s < pi.0 {
            pi = (s, w);
        }
    }
    Ok(PePiSelection {
        pe: *pe.1,
        pi: *pi.1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    #[serde(flatten)]
    pub window: HeartbeatWindow,
    pub score: f64,
    pub accepted: bool,
    pub pe: bool,
    pub pi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceBeats {
    pub slice: usize,
    pub beats: Vec<BeatRecord>,
    /// Why no selection was made, when none was.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl SliceBeats {
    pub fn pe(&self) -> Option<&HeartbeatWindow> {
        self.beats.iter().find(|b| b.pe).map(|b| &b.window)
    }

    pub fn pi(&self) -> Option<&HeartbeatWindow> {
        self.beats.iter().find(|b| b.pi).map(|b| &b.window)
    }
}

/// Segments, screens and selects for one slice. Recoverable conditions
/// (too few triggers, every beat arrhythmic) are recorded in `note`.
pub fn classify_beats(
    rwave_times_s: &[f64],
    frame_period_s: f64,
    signal: &RespSignal,
    tolerance: f64,
    method: ScoreMethod,
) -> Result<SliceBeats> {
    let slice = signal.slice_index();
    let windows = match segment_heartbeats(rwave_times_s, frame_period_s, signal.len()) {
        Ok(w) => w,
        Err(e @ Error::InsufficientTriggers(_)) => {
            return Ok(SliceBeats {
                slice,
                beats: Vec::new(),
                note: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let mask = sinus_mask(&windows, tolerance);
    let mut beats: Vec<BeatRecord> = windows
        .iter()
        .zip(&mask)
        .map(|(w, ok)| BeatRecord {
            window: *w,
            score: score_window(w, signal.values(), method),
            accepted: *ok,
            pe: false,
            pi: false,
        })
        .collect();
    let accepted: Vec<HeartbeatWindow> = beats.iter().filter(|b| b.accepted).map(|b| b.window).collect();
    if accepted.is_empty() {
        return Ok(SliceBeats {
            slice,
            beats,
            note: Some(Error::NoSinusBeats(windows.len()).to_string()),
        });
    }
    let sel = select_pe_pi(&accepted, signal, method)?;
    for b in beats.iter_mut() {
        b.pe = b.window == sel.pe;
        b.pi = b.window == sel.pi;
    }
    Ok(SliceBeats {
        slice,
        beats,
        note: None,
    })
}
