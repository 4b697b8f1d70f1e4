use std::path::Path;

use deepself_dsp::Sample;

use crate::error::{DataError, Result};

/// Grayscale image scaled to [0, 1], shape `[1 × height × width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage<T> {
    pub height: usize,
    pub width: usize,
    /// Row-major.
    pub pixels: Vec<T>,
}

impl<T> GrayImage<T> {
    pub fn shape(&self) -> [usize; 3] {
        [1, self.height, self.width]
    }
}

/// Whitespace-separated header tokens, skipping `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Option<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or(""))
    }
}

/// Reads a binary (P5) or ASCII (P2) PGM, dividing by `maxval`.
pub fn load_pgm_image<T: Sample>(path: &Path) -> Result<GrayImage<T>> {
    let bytes = std::fs::read(path)?;
    let format = |message: String| DataError::Format {
        path: path.to_path_buf(),
        message,
    };
    let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        _ => {
            return Err(DataError::UnsupportedImage {
                path: path.to_path_buf(),
                magic,
            })
        }
    };
    let mut header = Header { bytes: &bytes, pos: 2 };
    let mut number = |what: &str| -> Result<usize> {
        let tok = header.token().ok_or_else(|| format(format!("missing {what}")))?;
        tok.parse().map_err(|_| format(format!("bad {what} '{tok}'")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format(format!("empty image {width}×{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let raw: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = header.pos + 1;
        let width_bytes = if maxval < 256 { 1 } else { 2 };
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() != count * width_bytes {
            return Err(format(format!(
                "{width}×{height} image needs {} raster bytes, found {}",
                count * width_bytes,
                raster.len()
            )));
        }
        if width_bytes == 1 {
            raster.iter().map(|&b| b as usize).collect()
        } else {
            raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize).collect()
        }
    } else {
        let mut values = Vec::with_capacity(count);
        while let Some(tok) = header.token() {
            values.push(tok.parse().map_err(|_| format(format!("bad pixel '{tok}'")))?);
        }
        if values.len() != count {
            return Err(format(format!(
                "{width}×{height} image needs {count} pixels, found {}",
                values.len()
            )));
        }
        values
    };
    if let Some(v) = raw.iter().find(|&&v| v > maxval) {
        return Err(format(format!("pixel value {v} exceeds maxval {maxval}")));
    }
    Ok(GrayImage {
        height,
        width,
        pixels: raw.into_iter().map(|v| T::from(v as f64 * scale).unwrap_or_else(T::zero)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(bytes: &[u8]) -> Result<GrayImage<f64>> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.pgm");
        std::fs::write(&path, bytes).unwrap();
        load_pgm_image(&path)
    }

    #[test]
    fn binary_two_by_two() {
        let mut b = b"P5\n# comment\n2 2\n255\n".to_vec();
        b.extend_from_slice(&[0, 255, 128, 64]);
        let img = load(&b).unwrap();
        assert_eq!(img.shape(), [1, 2, 2]);
        let expected = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        assert_eq!(img.pixels, expected);
        assert!((img.pixels[2] - 0.50196).abs() < 1e-5 && (img.pixels[3] - 0.25098).abs() < 1e-5);
    }

    #[test]
    fn ascii_and_sixteen_bit() {
        let img = load(b"P2 3 1 4\n0 2 4\n").unwrap();
        assert_eq!(img.pixels, [0.0, 0.5, 1.0]);
        let mut b = b"P5 1 1 65535\n".to_vec();
        b.extend_from_slice(&[0x80, 0x00]);
        assert_eq!(load(&b).unwrap().pixels, [32768.0 / 65535.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(load(b"P2 1 1 0\n0\n"), Err(DataError::Format { .. })));
        assert!(matches!(load(b"P6 1 1 255\nabc"), Err(DataError::UnsupportedImage { .. })));
        assert!(matches!(load(b"P5 2 2 255\n\x00\x01\x02"), Err(DataError::Format { .. })));
        assert!(matches!(load(b"P2 2 1 9\n3\n"), Err(DataError::Format { .. })));
    }
}
