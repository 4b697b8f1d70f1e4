use std::io::Write;
use std::path::Path;

use deepself_dsp::{Sample, Signal};

use crate::error::{DataError, Result};

/// Reads a header-less numeric CSV; each column becomes one channel.
pub fn load_csv_series<T: Sample>(path: &Path, sample_rate: f64) -> Result<Signal<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut channels: Vec<Vec<T>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if channels.is_empty() {
            channels = vec![Vec::new(); record.len()];
        } else if record.len() != channels.len() {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                row,
                expected: channels.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let parse_err = || DataError::Parse {
                path: path.to_path_buf(),
                row,
                col: col + 1,
                value: cell.to_string(),
            };
            let v: f64 = cell.parse().map_err(|_| parse_err())?;
            if !v.is_finite() {
                return Err(parse_err());
            }
            channels[col].push(T::from(v).ok_or_else(parse_err)?);
        }
    }
    if channels.is_empty() {
        return Err(DataError::Format {
            path: path.to_path_buf(),
            message: "no samples".into(),
        });
    }
    Ok(Signal::new(sample_rate, channels)?)
}

/// Writes one row per sample, one column per channel.
pub fn write_csv_series<T: Sample>(signal: &Signal<T>, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in 0..signal.len() {
        let row: Vec<String> = (0..signal.n_channels())
            .map(|c| signal.channel(c)[t].to_f64().unwrap_or(0.0).to_string())
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Signal<f64>> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, text).unwrap();
        load_csv_series(&path, 173.61)
    }

    #[test]
    fn single_column() {
        let text: String = (0..4096).map(|i| format!("{}\n", i as f64 * 0.5)).collect();
        let s = load(&text).unwrap();
        assert_eq!((s.n_channels(), s.len()), (1, 4096));
        assert_eq!(s.sample_rate(), 173.61);
        assert_eq!(s.channel(0)[3], 1.5);
    }

    #[test]
    fn three_columns() {
        let s = load("1,2,3\n4,5,6\n").unwrap();
        assert_eq!(s.n_channels(), 3);
        assert_eq!(s.channel(2), &[3.0, 6.0]);
    }

    #[test]
    fn bad_cell_reports_row() {
        let text = "1\n2\n3\n4\n5\n6\nabc\n8\n";
        match load(text) {
            Err(DataError::Parse { row: 7, col: 1, value, .. }) => assert_eq!(value, "abc"),
            other => panic!("{other:?}"),
        }
        let msg = load(text).unwrap_err().to_string();
        assert!(msg.contains("row 7"), "{msg}");
    }

    #[test]
    fn ragged_rows() {
        assert!(matches!(
            load("1,2\n3\n"),
            Err(DataError::Ragged {
                row: 2,
                expected: 2,
                found: 1,
                ..
            })
        ));
    }

    #[test]
    fn write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let s = Signal::new(50.0, vec![vec![0.1f64, -2.5], vec![3.0, 1e-7]]).unwrap();
        write_csv_series(&s, &path).unwrap();
        assert_eq!(load_csv_series::<f64>(&path, 50.0).unwrap(), s);
    }
}
