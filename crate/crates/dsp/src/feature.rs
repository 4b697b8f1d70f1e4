//! Feature maps and their binary file format, little-endian:
//!
//! ```text
//! "DSFM" | u32 version = 1 | u32 rows | u32 cols
//! f64 seconds per frame | f64 row axis × rows | f32 values × rows·cols (row-major)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use num_traits::NumCast;

use crate::error::{DspError, Result};
use crate::signal::Sample;

const MAGIC: &[u8; 4] = b"DSFM";
const VERSION: u32 = 1;

/// Rows are frequency bins, mel bands or wavelet scales; columns are time.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows × cols`.
    pub values: Vec<T>,
    /// Frequency in Hz of each row (bin, mel band centre or scale).
    pub row_axis: Vec<f64>,
    pub seconds_per_frame: f64,
}

impl<T: Sample> FeatureMap<T> {
    /// Index of the time axis in `[rows, cols]`.
    pub const TIME_AXIS: usize = 1;

    pub fn new(rows: usize, cols: usize, values: Vec<T>, row_axis: Vec<f64>, seconds_per_frame: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DspError::Config(format!("feature map must be non-empty, got {rows}×{cols}")));
        }
        if values.len() != rows * cols || row_axis.len() != rows {
            return Err(DspError::Config(format!(
                "{rows}×{cols} feature map with {} values and {} row labels",
                values.len(),
                row_axis.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            row_axis,
            seconds_per_frame,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

pub fn write_feature_map<T: Sample>(map: &FeatureMap<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(28 + 8 * map.rows + 4 * map.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(map.rows as u32).to_le_bytes());
    out.extend_from_slice(&(map.cols as u32).to_le_bytes());
    out.extend_from_slice(&map.seconds_per_frame.to_le_bytes());
    for v in &map.row_axis {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &map.values {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_feature_map<T: Sample>(path: &Path) -> Result<FeatureMap<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let truncated = || DspError::Format(format!("{}: truncated", path.display()));
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(truncated)?;
        pos += n;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(DspError::Format(format!("{}: not a feature map (bad magic)", path.display())));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != VERSION as usize {
        return Err(DspError::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let rows = u32_at(take(4)?);
    let cols = u32_at(take(4)?);
    let seconds_per_frame = f64_at(take(8)?);
    let row_axis = take(8 * rows)?.chunks_exact(8).map(f64_at).collect();
    let count = rows.checked_mul(cols).ok_or_else(truncated)?;
    let values = take(4 * count)?
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            <T as NumCast>::from(v).unwrap_or_else(T::zero)
        })
        .collect();
    if pos != bytes.len() {
        return Err(DspError::Format(format!("{}: trailing bytes", path.display())));
    }
    FeatureMap::new(rows, cols, values, row_axis, seconds_per_frame)
        .map_err(|e| DspError::Format(format!("{}: {e}", path.display())))
}
