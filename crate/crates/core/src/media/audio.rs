use std::io::Cursor;

use super::MediaError;

pub const DEFAULT_SAMPLE_RATE: u32 = 22050;

/// Mono 16-bit PCM.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pcm {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
}

impl Pcm {
    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        Self {
            samples: vec![0; samples_for(seconds, sample_rate)],
            sample_rate,
        }
    }

    pub fn duration(&self) -> f64 {
        if self.sample_rate == 0 {
            return 0.0;
        }
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_wav_bytes(&self) -> Result<Vec<u8>, MediaError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut buf = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut buf, spec).map_err(wav_err)?;
        {
            let mut w16 = w.get_i16_writer(self.samples.len() as u32);
            for &s in &self.samples {
                w16.write_sample(s);
            }
            w16.flush().map_err(wav_err)?;
        }
        w.finalize().map_err(wav_err)?;
        Ok(buf.into_inner())
    }

    /// Decode a PCM WAV file. Multi-channel audio is averaged to mono and
    /// float or wider integer samples are scaled to 16 bits.
    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, MediaError> {
        let mut r = hound::WavReader::new(Cursor::new(bytes))
            .map_err(|e| MediaError::MalformedProviderOutput(format!("WAV: {e}")))?;
        let spec = r.spec();
        if spec.channels == 0 || spec.sample_rate == 0 {
            return Err(MediaError::MalformedProviderOutput(
                "WAV has no channels or a zero sample rate".into(),
            ));
        }
        let bad = |e: hound::Error| MediaError::MalformedProviderOutput(format!("WAV: {e}"));
        let raw: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample.clamp(1, 32) - 1)) as f64;
                r.samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<Result<_, _>>()
                    .map_err(bad)?
            }
            hound::SampleFormat::Float => r
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(bad)?,
        };
        let ch = spec.channels as usize;
        let samples = raw
            .chunks(ch)
            .map(|frame| {
                let m = frame.iter().sum::<f64>() / frame.len() as f64;
                (m * 32768.0).round().clamp(-32768.0, 32767.0) as i16
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate: spec.sample_rate,
        })
    }

    /// Linear-interpolation resample to `rate`.
    pub fn resampled(&self, rate: u32) -> Pcm {
        if self.samples.is_empty() {
            return Pcm {
                samples: Vec::new(),
                sample_rate: rate,
            };
        }
        if rate == self.sample_rate || self.sample_rate == 0 {
            return self.clone();
        }
        let n = samples_for(self.duration(), rate);
        let last = self.samples.len() - 1;
        let ratio = self.sample_rate as f64 / rate as f64;
        let samples = (0..n)
            .map(|k| {
                let x = k as f64 * ratio;
                let i = (x.floor() as usize).min(last);
                let f = x - i as f64;
                let a = self.samples[i] as f64;
                let b = self.samples[(i + 1).min(last)] as f64;
                (a + (b - a) * f).round() as i16
            })
            .collect();
        Pcm {
            samples,
            sample_rate: rate,
        }
    }

    /// Truncate or pad with silence to exactly `n` samples.
    pub fn fit_to(&mut self, n: usize) {
        self.samples.resize(n, 0);
    }
}

pub fn samples_for(seconds: f64, rate: u32) -> usize {
    (seconds.max(0.0) * rate as f64).round() as usize
}

fn wav_err(e: hound::Error) -> MediaError {
    match e {
        hound::Error::IoError(io) => MediaError::Io(io),
        other => MediaError::InvalidInput(format!("WAV encoding: {other}")),
    }
}
