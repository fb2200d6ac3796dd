use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};
use crate::spectrogram::ComplexSpectrogram;

/// STFT geometry and magnitude compression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    /// Frame count of one network input.
    pub n_frames_target: usize,
    pub compress_exponent: f64,
    pub compress_scale: f64,
    /// Scale the transform by `1/sqrt(window_len)`.
    pub normalized: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_len: 510,
            hop: 128,
            n_frames_target: 256,
            compress_exponent: 0.5,
            compress_scale: 0.15,
            normalized: true,
        }
    }
}

impl StftConfig {
    /// Reduced front-end for CPU-scale experiments: 8 kHz audio, 64 bins,
    /// 64-frame inputs (about 0.26 s per chunk).
    pub fn toy() -> Self {
        Self {
            sample_rate: 8_000,
            window_len: 126,
            hop: 32,
            n_frames_target: 64,
            ..Self::default()
        }
    }

    /// Compression disabled.
    pub fn linear(self) -> Self {
        Self {
            compress_exponent: 1.0,
            compress_scale: 1.0,
            ..self
        }
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Frames produced for a waveform of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 4 || self.window_len % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "window_len must be even and >= 4, got {}",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len / 2 {
            return Err(Error::InvalidParam(format!(
                "hop must lie in [1, window_len/2], got {}",
                self.hop
            )));
        }
        if !(self.compress_exponent > 0.0 && self.compress_exponent <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "compress_exponent must lie in (0, 1], got {}",
                self.compress_exponent
            )));
        }
        if !(self.compress_scale > 0.0 && self.compress_scale.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "compress_scale must be > 0, got {}",
                self.compress_scale
            )));
        }
        if self.n_frames_target == 0 || self.sample_rate == 0 {
            return Err(Error::InvalidParam("n_frames_target and sample_rate must be > 0".into()));
        }
        Ok(())
    }

    fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect()
    }

    fn fft_scale(&self) -> f64 {
        if self.normalized {
            1.0 / (self.window_len as f64).sqrt()
        } else {
            1.0
        }
    }
}

/// `c |X|^α e^{i∠X}`.
pub fn compress(s: &ComplexSpectrogram, cfg: &StftConfig) -> ComplexSpectrogram {
    let (alpha, c) = (cfg.compress_exponent, cfg.compress_scale);
    if alpha == 1.0 && c == 1.0 {
        return s.clone();
    }
    s.map(|x| {
        let mag = x.norm();
        if mag == 0.0 {
            x
        } else {
            x * (c * mag.powf(alpha - 1.0))
        }
    })
}

/// Inverse of [`compress`]: `|X| ← (|X|/c)^{1/α}`.
pub fn decompress(s: &ComplexSpectrogram, cfg: &StftConfig) -> ComplexSpectrogram {
    let (alpha, c) = (cfg.compress_exponent, cfg.compress_scale);
    if alpha == 1.0 && c == 1.0 {
        return s.clone();
    }
    s.map(|x| {
        let mag = x.norm();
        if mag == 0.0 {
            x
        } else {
            x * ((mag / c).powf(1.0 / alpha) / mag)
        }
    })
}

/// One-sided STFT with centered frames (`window_len/2` zeros of padding at
/// both ends), followed by magnitude compression.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Audio(format!(
            "sample rate {} does not match the configured {}",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let n = cfg.window_len;
    if w.len() < n {
        return Err(Error::TooShort { len: w.len(), need: n });
    }
    let frames = cfg.frames_for(w.len());
    let bins = cfg.bins();
    let mut padded = vec![0.0; (frames - 1) * cfg.hop + n];
    padded[n / 2..n / 2 + w.len()].copy_from_slice(&w.samples);

    let window = cfg.window();
    let scale = cfg.fft_scale();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut out = ComplexSpectrogram::zeros(bins, frames);
    for f in 0..frames {
        let seg = &padded[f * cfg.hop..f * cfg.hop + n];
        for ((b, &x), &win) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(x * win, 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(bins).enumerate() {
            out.set(k, f, v * scale);
        }
    }
    Ok(compress(&out, cfg))
}

/// Decompression followed by weighted overlap-add with squared-window
/// normalization; returns `out_len` samples.
pub fn istft(s: &ComplexSpectrogram, cfg: &StftConfig, out_len: usize) -> Result<Waveform> {
    cfg.validate()?;
    let n = cfg.window_len;
    let bins = cfg.bins();
    if s.bins() != bins {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, configuration expects {bins}",
            s.bins()
        )));
    }
    let frames = s.frames();
    if frames == 0 {
        return Err(Error::Empty("spectrogram has no frames".into()));
    }
    let total = (frames - 1) * cfg.hop + n;
    if n / 2 + out_len > total {
        return Err(Error::Shape(format!(
            "{frames} frames cannot cover {out_len} output samples"
        )));
    }
    let spec = decompress(s, cfg);
    let window = cfg.window();
    let scale = 1.0 / (cfg.fft_scale() * n as f64);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    for f in 0..frames {
        for k in 0..bins {
            buf[k] = spec.get(k, f);
        }
        // Hermitian extension; DC and Nyquist are taken as real.
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = buf[k].conj();
        }
        ifft.process(&mut buf);
        let start = f * cfg.hop;
        for (i, (b, &win)) in buf.iter().zip(&window).enumerate() {
            acc[start + i] += b.re * scale * win;
            norm[start + i] += win * win;
        }
    }
    let mut samples = Vec::with_capacity(out_len);
    for i in n / 2..n / 2 + out_len {
        if norm[i] < 1e-10 {
            return Err(Error::InvalidParam(format!(
                "overlap-add normalization vanishes at sample {}",
                i - n / 2
            )));
        }
        samples.push(acc[i] / norm[i]);
    }
    Waveform::new(samples, cfg.sample_rate)
}
