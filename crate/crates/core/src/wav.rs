//! Minimal RIFF/PCM WAV reader and writer.
//!
//! Only integer PCM (8/16/24-bit) is accepted; multichannel files are reduced
//! to their first channel. Anything else is rejected so the decoder stays
//! dependency-free and predictable.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::Signal;
use crate::scalar::Real;

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::BadWav { path: path.to_path_buf(), msg: msg.into() }
}

/// Read a PCM WAV file, taking the first channel of multichannel recordings.
///
/// Samples are scaled to [-1, 1) by the nominal full-scale of the bit depth.
pub fn read<T: Real>(path: &Path) -> Result<Signal<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad(path, "not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, fs, bits)
    let mut data: Option<&[u8]> = None;
    let mut off = 12usize;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap()) as usize;
        let body_end = (off + 8 + size).min(bytes.len());
        let body = &bytes[off + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad(path, "fmt chunk truncated"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let fs = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, fs, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        off += 8 + size + (size & 1);
    }

    let (format, channels, fs, bits) = fmt.ok_or_else(|| bad(path, "missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad(path, "missing data chunk"))?;
    if format != 1 {
        return Err(bad(path, format!("unsupported format tag {format}, PCM only")));
    }
    if channels == 0 {
        return Err(bad(path, "zero channels"));
    }
    if fs == 0 {
        return Err(bad(path, "zero sample rate"));
    }
    let bytes_per = match bits {
        8 => 1usize,
        16 => 2,
        24 => 3,
        other => return Err(bad(path, format!("unsupported bit depth {other}"))),
    };

    let frame = bytes_per * channels as usize;
    let n = data.len() / frame;
    if n == 0 {
        return Err(bad(path, "empty data chunk"));
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let s = &data[i * frame..i * frame + bytes_per];
        let v = match bits {
            8 => (s[0] as f64 - 128.0) / 128.0,
            16 => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
            24 => {
                let raw = (s[0] as i32) | ((s[1] as i32) << 8) | ((s[2] as i32) << 16);
                // sign-extend from 24 bits
                let signed = (raw << 8) >> 8;
                signed as f64 / 8_388_608.0
            }
            _ => unreachable!(),
        };
        samples.push(T::of(v));
    }
    Signal::new(samples, fs as f64)
}

/// Write mono 16-bit PCM. Samples are clamped to [-1, 1] before quantization.
pub fn write(path: &Path, samples: &[f64], fs: u32) -> Result<()> {
    let n = samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&fs.to_le_bytes());
    out.extend_from_slice(&(fs * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| (i as f64 / 50.0 - 1.0) * 0.9).collect();
        write(&path, &samples, 8000).unwrap();
        let sig: Signal<f64> = read(&path).unwrap();
        assert_eq!(sig.fs, 8000.0);
        assert_eq!(sig.samples.len(), 100);
        for (a, b) in samples.iter().zip(&sig.samples) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_non_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        fs::write(&path, b"not a wave file at all").unwrap();
        assert!(matches!(read::<f64>(&path), Err(Error::BadWav { .. })));
    }

    #[test]
    fn first_channel_of_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        // hand-build a 2-channel 16-bit file where L=1000, R=-1000
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36u32 + 16).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&4000u32.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&16u32.to_le_bytes());
        for _ in 0..4 {
            out.extend_from_slice(&1000i16.to_le_bytes());
            out.extend_from_slice(&(-1000i16).to_le_bytes());
        }
        fs::write(&path, &out).unwrap();
        let sig: Signal<f64> = read(&path).unwrap();
        assert_eq!(sig.samples.len(), 4);
        for &s in &sig.samples {
            assert!((s - 1000.0 / 32768.0).abs() < 1e-12);
        }
    }
}
