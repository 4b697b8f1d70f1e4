use std::path::Path;

use deepself_dsp::{Sample, Signal};

use crate::error::{DataError, Result};

const PCM: u16 = 1;
const EXTENSIBLE: u16 = 0xFFFE;

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn cast<T: Sample>(v: f64) -> T {
    T::from(v).unwrap_or_else(T::zero)
}

/// Reads a RIFF/WAVE PCM 16-bit file, scaling samples by 1/32768.
pub fn load_wav_pcm16<T: Sample>(path: &Path) -> Result<Signal<T>> {
    let bytes = std::fs::read(path)?;
    let path_buf = || path.to_path_buf();
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DataError::NotWave { path: path_buf() });
    }
    let mut pos = 12;
    let mut format: Option<(u16, u32)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body = pos + 8;
        let chunk = match id {
            b"fmt " => "fmt",
            b"data" => "data",
            _ => "unknown",
        };
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or(DataError::Truncated { path: path_buf(), chunk })?;
        let content = &bytes[body..end];
        match id {
            b"fmt " => {
                if content.len() < 16 {
                    return Err(DataError::Truncated { path: path_buf(), chunk });
                }
                let mut code = le_u16(&content[0..2]);
                if code == EXTENSIBLE && content.len() >= 26 {
                    code = le_u16(&content[24..26]);
                }
                if code != PCM {
                    return Err(DataError::UnsupportedWavFormat { path: path_buf(), code });
                }
                let bits = le_u16(&content[14..16]);
                if bits != 16 {
                    return Err(DataError::UnsupportedBitDepth { path: path_buf(), bits });
                }
                format = Some((le_u16(&content[2..4]), le_u32(&content[4..8])));
            }
            b"data" => data = Some(content),
            _ => {}
        }
        pos = end + (size & 1);
    }
    let (channels, rate) = format.ok_or(DataError::Truncated {
        path: path_buf(),
        chunk: "fmt",
    })?;
    let data = data.ok_or(DataError::Truncated {
        path: path_buf(),
        chunk: "data",
    })?;
    let channels = channels as usize;
    if channels == 0 || data.len() % (2 * channels) != 0 {
        return Err(DataError::Format {
            path: path_buf(),
            message: format!("{} data bytes do not form whole {channels}-channel frames", data.len()),
        });
    }
    let mut out = vec![Vec::with_capacity(data.len() / (2 * channels)); channels];
    for (i, pair) in data.chunks_exact(2).enumerate() {
        let v = i16::from_le_bytes([pair[0], pair[1]]);
        out[i % channels].push(cast(v as f64 / 32768.0));
    }
    Ok(Signal::new(rate as f64, out)?)
}

/// Writes a 16-bit PCM WAV, clipping to [−1, 1).
pub fn write_wav_pcm16<T: Sample>(signal: &Signal<T>, path: &Path) -> Result<()> {
    let channels = signal.n_channels();
    let frames = signal.len();
    let rate = signal.sample_rate().round() as u32;
    let data_len = (frames * channels * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(channels as u16 * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for t in 0..frames {
        for c in 0..channels {
            let v = signal.channel(c)[t].to_f64().unwrap_or(0.0);
            let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav(fmt: &[u8], data: &[u8]) -> Vec<u8> {
        let mut b = b"RIFF\0\0\0\0WAVEfmt ".to_vec();
        b.extend_from_slice(&(fmt.len() as u32).to_le_bytes());
        b.extend_from_slice(fmt);
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    fn fmt(code: u16, channels: u16, rate: u32, bits: u16) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&code.to_le_bytes());
        f.extend_from_slice(&channels.to_le_bytes());
        f.extend_from_slice(&rate.to_le_bytes());
        f.extend_from_slice(&(rate * channels as u32 * bits as u32 / 8).to_le_bytes());
        f.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        f.extend_from_slice(&bits.to_le_bytes());
        f
    }

    fn load(bytes: &[u8]) -> Result<Signal<f64>> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        std::fs::write(&path, bytes).unwrap();
        load_wav_pcm16(&path)
    }

    #[test]
    fn zero_file() {
        let s = load(&wav(&fmt(1, 1, 8000, 16), &[0; 20])).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.sample_rate(), 8000.0);
        assert!(s.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_scale_positive() {
        let data: Vec<u8> = std::iter::repeat_n(32767i16.to_le_bytes(), 4).flatten().collect();
        let s = load(&wav(&fmt(1, 1, 44100, 16), &data)).unwrap();
        assert!(s.channel(0).iter().all(|&v| v == 32767.0 / 32768.0));
        assert!((s.channel(0)[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn stereo_is_deinterleaved() {
        let data: Vec<u8> = [1i16, -1, 2, -2, 3, -3].iter().flat_map(|v| v.to_le_bytes()).collect();
        let s = load(&wav(&fmt(1, 2, 100, 16), &data)).unwrap();
        assert_eq!(s.n_channels(), 2);
        assert_eq!(s.channel(1), &[-1.0 / 32768.0, -2.0 / 32768.0, -3.0 / 32768.0]);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            load(&wav(&fmt(3, 1, 8000, 32), &[0; 8])),
            Err(DataError::UnsupportedWavFormat { code: 3, .. })
        ));
        assert!(matches!(
            load(&wav(&fmt(1, 1, 8000, 8), &[0; 8])),
            Err(DataError::UnsupportedBitDepth { bits: 8, .. })
        ));
        let mut cut = wav(&fmt(1, 1, 8000, 16), &[0; 20]);
        cut.truncate(cut.len() - 4);
        assert!(matches!(load(&cut), Err(DataError::Truncated { chunk: "data", .. })));
        assert!(matches!(load(b"RIFX0000WAVE"), Err(DataError::NotWave { .. })));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.wav");
        let s = Signal::new(16000.0, vec![vec![0.5f32, -0.25, 0.0], vec![0.125, 1.5, -1.0]]).unwrap();
        write_wav_pcm16(&s, &path).unwrap();
        let back: Signal<f32> = load_wav_pcm16(&path).unwrap();
        assert_eq!(back.channel(0), &[0.5, -0.25, 0.0]);
        assert_eq!(back.channel(1), &[0.125, 32767.0 / 32768.0, -1.0]);
    }
}
