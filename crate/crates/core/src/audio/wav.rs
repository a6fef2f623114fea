use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{domain, Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::TooWide => Error::Unsupported("sample width exceeds 32 bits".into()),
        hound::Error::UnfinishedSample => Error::Format("truncated sample data".into()),
        hound::Error::Unsupported => Error::Unsupported(format!("{}: unsupported WAV variant", path.display())),
        hound::Error::InvalidSampleFormat => Error::Unsupported("invalid sample format".into()),
    }
}

/// Read a RIFF/WAVE file holding 16-bit PCM or 32-bit float samples.
///
/// Multi-channel files are downmixed by averaging the channels; integer
/// samples are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    decode(reader, path)
}

fn decode<R: Read>(reader: WavReader<R>, path: &Path) -> Result<Waveform> {
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(Error::Format("zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{}: {bits}-bit {fmt:?} samples",
                path.display()
            )))
        }
    };
    let ch = spec.channels as usize;
    let samples = if ch == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(ch)
            .map(|frame| frame.iter().map(|&s| s as f64).sum::<f64>() as f32 / ch as f32)
            .collect()
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite samples", path.display())));
    }
    Ok(Waveform::new(samples, spec.sample_rate))
}

fn quantize(s: f32) -> i16 {
    let v = (s.clamp(-1.0, 1.0) as f64 * 32768.0).round();
    v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn encode<W: Write + Seek>(sink: W, w: &Waveform) -> std::result::Result<(), hound::Error> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::new(sink, spec)?;
    for &s in &w.samples {
        writer.write_sample(quantize(s))?;
    }
    writer.finalize()
}

/// Write a 16-bit PCM mono file. Samples are clamped to [-1, 1] and
/// quantised with the same 32768 scale the reader uses, saturating at 32767.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let bytes = wav_bytes(w)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The exact bytes [`write_wav`] would produce.
pub fn wav_bytes(w: &Waveform) -> Result<Vec<u8>> {
    if w.is_empty() {
        return Err(domain!("refusing to write an empty waveform"));
    }
    let mut cursor = Cursor::new(Vec::new());
    encode(&mut cursor, w).map_err(|e| map_hound(Path::new("<memory>"), e))?;
    Ok(cursor.into_inner())
}

#[cfg(test)]
pub(crate) fn read_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    let path = Path::new("<memory>");
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|e| map_hound(path, e))?;
    decode(reader, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_int16(path: &Path, channels: u16, data: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn reads_mono_int16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_int16(&p, 1, &vec![100; 16_000]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.len(), 16_000);
        assert_eq!(w.sample_rate_hz, 16_000);
    }

    #[test]
    fn full_scale_int_maps_below_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_int16(&p, 1, &[32767, -32768]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples[0], 32767.0 / 32768.0);
        assert!((w.samples[0] - 0.99997).abs() < 1e-5);
        assert_eq!(w.samples[1], -1.0);
    }

    #[test]
    fn stereo_antiphase_downmixes_to_silence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let data: Vec<i16> = (0..200).flat_map(|i| [i * 7, -(i * 7)]).collect();
        write_int16(&p, 2, &data);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.len(), 200);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn reads_float32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        for s in [0.25f32, -0.5, 0.125] {
            wr.write_sample(s).unwrap();
        }
        wr.finalize().unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples, vec![0.25, -0.5, 0.125]);
        assert_eq!(w.sample_rate_hz, 8000);
    }

    #[test]
    fn rejects_24_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        wr.write_sample(5i32).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejects_garbage_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFXnotawavefile at all").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format(_))));
        assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(Error::Io { .. })));
    }

    #[test]
    fn clamps_on_write() {
        let w = Waveform::new(vec![2.0, -3.0, 1.0], 16_000);
        let back = read_wav_bytes(&wav_bytes(&w).unwrap()).unwrap();
        assert_eq!(back.samples[0], 32767.0 / 32768.0);
        assert_eq!(back.samples[1], -1.0);
    }

    #[test]
    fn empty_write_rejected() {
        assert!(matches!(wav_bytes(&Waveform::zeros(0, 16_000)), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip_within_one_lsb() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f32> = (0..4000).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
        let w = Waveform::new(samples, 16_000);
        let back = read_wav_bytes(&wav_bytes(&w).unwrap()).unwrap();
        let max_err = w
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 32768.0, "max err {max_err}");
    }
}
