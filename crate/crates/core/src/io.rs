//! On-disk stack format, result files, and reorientation to the
//! superior-inferior axis.
//!
//! A stack directory holds `stack.json` plus one `slice_<k>.raw` per slice.
//! Pixel files are little-endian `f32`, frame-major, row-major within a
//! frame: sample `(n, r, c)` sits at element `n * rows * cols + r * cols + c`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{neg3, CineStack, RespSignal, SignState, SliceSeries, Vec3, ZmcCurve};

pub const MANIFEST_FILE: &str = "stack.json";
pub const FORMAT_VERSION: &str = "1";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const ZMC_FILE: &str = "zmc.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub version: String,
    pub num_slices: usize,
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub frame_period_s: f64,
    pub slices: Vec<SliceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceEntry {
    /// Relative to the manifest's directory.
    pub pixel_file: String,
    pub row_dir: Vec3,
    pub col_dir: Vec3,
    #[serde(default)]
    pub rwave_times_s: Vec<f64>,
}

pub fn pixel_file_name(slice: usize) -> String {
    format!("slice_{slice}.raw")
}

/// Accepts either the stack directory or the manifest file itself.
fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<StackManifest> {
    let path = manifest_path(path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: StackManifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported version {:?}, expected {FORMAT_VERSION:?}",
            manifest.version
        )));
    }
    if manifest.slices.len() != manifest.num_slices {
        return Err(Error::Manifest(format!(
            "num_slices is {} but {} slice entries are listed",
            manifest.num_slices,
            manifest.slices.len()
        )));
    }
    if manifest.num_slices == 0 {
        return Err(Error::Manifest("stack has no slices".into()));
    }
    Ok(manifest)
}

fn read_pixels(dir: &Path, m: &StackManifest, k: usize) -> Result<Array3<f64>> {
    let path = dir.join(&m.slices[k].pixel_file);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingPixelFile { slice: k, path })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    let expected = m.frames * m.rows * m.cols * 4;
    if bytes.len() != expected {
        return Err(Error::TruncatedPixelFile {
            slice: k,
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(Array3::from_shape_vec((m.frames, m.rows, m.cols), values).expect("length checked"))
}

pub fn load_stack(path: &Path) -> Result<CineStack> {
    let manifest_path = manifest_path(path);
    let manifest = read_manifest(&manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let loaded: Vec<Result<SliceSeries>> = (0..manifest.num_slices)
        .into_par_iter()
        .map(|k| {
            let pixels = read_pixels(dir, &manifest, k)?;
            let entry = &manifest.slices[k];
            SliceSeries::new(
                pixels,
                manifest.frame_period_s,
                entry.row_dir,
                entry.col_dir,
                entry.rwave_times_s.clone(),
                k,
            )
        })
        .collect();
    let slices = loaded.into_iter().collect::<Result<Vec<_>>>()?;
    CineStack::new(slices)
}

/// Writes `stack.json` and the pixel files into `dir`, creating it if needed.
/// Intensities are narrowed to `f32`.
pub fn save_stack(dir: &Path, stack: &CineStack) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(stack.len());
    for (k, slice) in stack.slices().iter().enumerate() {
        let name = pixel_file_name(k);
        let mut bytes = Vec::with_capacity(slice.pixels().len() * 4);
        for v in slice.pixels().iter() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let path = dir.join(&name);
        fs::write(&path, bytes).map_err(|e| Error::io(path, e))?;
        entries.push(SliceEntry {
            pixel_file: name,
            row_dir: slice.row_dir(),
            col_dir: slice.col_dir(),
            rwave_times_s: slice.rwave_times_s().to_vec(),
        });
    }
    let manifest = StackManifest {
        version: FORMAT_VERSION.to_string(),
        num_slices: stack.len(),
        rows: stack.rows(),
        cols: stack.cols(),
        frames: stack.frames(),
        frame_period_s: stack.frame_period_s(),
        slices: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes equal-length columns as CSV: header `slice_0,slice_1,...`, one
/// row per frame.
pub fn write_columns(path: &Path, columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch("columns differ in length".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..columns.len()).map(|k| format!("slice_{k}")))?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a file written by [`write_columns`], returning one vector per column.
pub fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    let mut columns = vec![Vec::new(); width];
    for (line, record) in r.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {line} has {} fields, expected {width}",
                path.display(),
                record.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("{}: bad number {field:?}", path.display()))
            })?;
            col.push(v);
        }
    }
    Ok(columns)
}

/// Writes `signals.csv`, `zmc.csv` and, when given, `summary.json` into `dir`.
pub fn save_signals<S: Serialize>(
    dir: &Path,
    signals: &[RespSignal],
    zmc: &[ZmcCurve],
    summary: Option<&S>,
) -> Result<()> {
    for s in signals {
        s.require(SignState::GloballyCorrected)?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cols: Vec<&[f64]> = signals.iter().map(|s| s.values()).collect();
    write_columns(&dir.join(SIGNALS_FILE), &cols)?;
    let cols: Vec<&[f64]> = zmc.iter().map(|z| z.values()).collect();
    write_columns(&dir.join(ZMC_FILE), &cols)?;
    if let Some(summary) = summary {
        write_json(&dir.join(SUMMARY_FILE), summary)?;
    }
    Ok(())
}

/// Loads `signals.csv` from an output directory as globally corrected
/// signals. Values are renormalized to absorb text rounding.
pub fn load_signals(dir: &Path) -> Result<Vec<RespSignal>> {
    read_columns(&dir.join(SIGNALS_FILE))?
        .into_iter()
        .enumerate()
        .map(|(k, mut v)| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            RespSignal::new(v, SignState::GloballyCorrected, k)
        })
        .collect()
}

/// How [`reorient_to_si`] rearranged a slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reorientation {
    pub transposed: bool,
    pub flipped_vertical: bool,
    /// Both in-plane axes had equal superior-inferior components.
    pub tie: bool,
}

pub fn plan_reorientation(row_dir: Vec3, col_dir: Vec3) -> Reorientation {
    let (rz, cz) = (row_dir[2].abs(), col_dir[2].abs());
    let transposed = cz > rz;
    let vertical = if transposed { col_dir } else { row_dir };
    Reorientation {
        transposed,
        flipped_vertical: vertical[2] > 0.0,
        tie: rz == cz,
    }
}

/// Rearranges pixels so the row index runs superior to inferior along the
/// in-plane axis closest to the SI direction. Pure pixel permutation.
pub fn reorient_to_si(slice: &SliceSeries) -> SliceSeries {
    reorient_with_plan(slice).0
}

pub fn reorient_with_plan(slice: &SliceSeries) -> (SliceSeries, Reorientation) {
    let plan = plan_reorientation(slice.row_dir(), slice.col_dir());
    if plan.tie {
        log::warn!(
            "slice {}: row and column axes have equal SI components, keeping rows vertical",
            slice.slice_index()
        );
    }
    let (mut row_dir, col_dir, mut pixels) = if plan.transposed {
        (
            slice.col_dir(),
            slice.row_dir(),
            slice
                .pixels()
                .view()
                .permuted_axes([0, 2, 1])
                .as_standard_layout()
                .into_owned(),
        )
    } else {
        (slice.row_dir(), slice.col_dir(), slice.pixels().clone())
    };
    if plan.flipped_vertical {
        pixels = pixels.slice(s![.., ..;-1, ..]).to_owned();
        row_dir = neg3(&row_dir);
    }
    (slice.with_geometry(pixels, row_dir, col_dir), plan)
}
