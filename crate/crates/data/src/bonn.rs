//! The Bonn EEG collection: five sets of 100 single-channel records at
//! 173.61 Hz, one value per line. Sets are named A–E or, in the
//! distributed archives, Z, O, N, F, S. Only set E contains seizures.

use std::path::{Path, PathBuf};

use deepself_dsp::{Sample, Signal};

use crate::error::{DataError, Result};
use crate::series::load_csv_series;

pub const BONN_SAMPLE_RATE: f64 = 173.61;

/// Records are cropped to this many samples (the files hold 4097).
pub const BONN_RECORD_LEN: usize = 4096;

#[derive(Clone, Debug)]
pub struct BonnRecord<T> {
    pub path: PathBuf,
    /// Canonical set letter `'A'..='E'`.
    pub set: char,
    pub signal: Signal<T>,
}

impl<T> BonnRecord<T> {
    pub fn is_seizure(&self) -> bool {
        self.set == 'E'
    }
}

fn canonical_set(c: char) -> Option<char> {
    match c.to_ascii_uppercase() {
        'Z' | 'A' => Some('A'),
        'O' | 'B' => Some('B'),
        'N' | 'C' => Some('C'),
        'F' | 'D' => Some('D'),
        'S' | 'E' => Some('E'),
        _ => None,
    }
}

fn collect(dir: &Path, set: Option<char>, out: &mut Vec<(PathBuf, char)>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let letter = name.chars().next().and_then(canonical_set);
        if path.is_dir() {
            if set.is_none() && name.len() == 1 {
                if let Some(l) = letter {
                    collect(&path, Some(l), out)?;
                }
            }
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt")) {
            if let Some(l) = set.or(letter) {
                out.push((path, l));
            }
        }
    }
    Ok(())
}

/// Loads every `.txt` record found either in single-letter set directories
/// under `dir` or directly in `dir` (set taken from the file name's first
/// letter), sorted by path.
pub fn load_bonn<T: Sample>(dir: &Path) -> Result<Vec<BonnRecord<T>>> {
    let mut found = Vec::new();
    collect(dir, None, &mut found)?;
    if found.is_empty() {
        return Err(DataError::Format {
            path: dir.to_path_buf(),
            message: "no Bonn records (.txt) found".into(),
        });
    }
    found.sort();
    found
        .into_iter()
        .map(|(path, set)| {
            let signal = load_csv_series(&path, BONN_SAMPLE_RATE)?.fit_length(BONN_RECORD_LEN)?;
            Ok(BonnRecord { path, set, signal })
        })
        .collect()
}
