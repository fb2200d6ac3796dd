//! Waveform and complex-spectrogram front-end: STFT with magnitude
//! compression, its weighted overlap-add inverse, frame fitting to the
//! network's fixed input width, and WAV I/O.

mod framing;
mod stft;
mod wav;

pub use framing::{frame_fit, FitMode, FrameFit};
pub use stft::{compress, decompress, istft, stft, StftConfig};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample rate must be > 0".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean square over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Scales to unit peak; returns the signal and the gain applied.
    pub fn peak_normalized(&self) -> Result<(Self, f64)> {
        let peak = self.peak();
        if peak == 0.0 {
            return Err(Error::Silent("cannot peak-normalize an all-zero waveform".into()));
        }
        Ok((self.scaled(1.0 / peak), 1.0 / peak))
    }

    /// Truncates or zero-pads to `len` samples.
    pub fn fitted(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}
