//! Synthetic noise generators and a WAV-directory noise loader.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::synth::{synth_speech, SpeakerProfile};
use crate::dsp::{read_wav, Waveform};
use crate::error::{Error, Result};
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Babble,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }
}

/// A named noise recording.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSource {
    pub id: String,
    pub waveform: Waveform,
}

/// Generates `len` samples of the given noise type with unit power.
pub fn generate_noise<R: Rng + ?Sized>(
    rng: &mut R,
    kind: NoiseKind,
    len: usize,
    sample_rate: u32,
) -> Result<Waveform> {
    if len == 0 {
        return Err(Error::InvalidParam("noise length must be > 0".into()));
    }
    let samples = match kind {
        NoiseKind::White => (0..len).map(|_| standard_normal(rng)).collect(),
        NoiseKind::Pink => pink(rng, len),
        NoiseKind::Babble => babble(rng, len, sample_rate)?,
    };
    let w = Waveform::new(samples, sample_rate)?;
    let p = w.power();
    Ok(w.scaled(1.0 / p.sqrt()))
}

/// 1/f power spectrum by shaping white noise in the frequency domain.
fn pink<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..len).map(|_| Complex64::new(standard_normal(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..len {
        let f = k.min(len - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

const BABBLE_TALKERS: usize = 6;

fn babble<R: Rng + ?Sized>(rng: &mut R, len: usize, sample_rate: u32) -> Result<Vec<f64>> {
    let mut out = vec![0.0; len];
    for _ in 0..BABBLE_TALKERS {
        let speaker = SpeakerProfile::random(rng);
        let mut pos = rng.random_range(0..len.min(sample_rate as usize));
        while pos < len {
            let dur = rng.random_range(1.0..5.0);
            let utt = synth_speech(rng, &speaker, dur, sample_rate)?;
            for (o, s) in out[pos..].iter_mut().zip(&utt.samples) {
                *o += s;
            }
            pos += utt.len();
        }
    }
    Ok(out)
}

/// The standard synthetic noise bank: one unit-power recording per kind.
pub fn synthetic_noise_bank<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    sample_rate: u32,
) -> Result<Vec<NoiseSource>> {
    NoiseKind::ALL
        .iter()
        .map(|&kind| {
            Ok(NoiseSource {
                id: kind.name().to_string(),
                waveform: generate_noise(rng, kind, len, sample_rate)?,
            })
        })
        .collect()
}

/// Loads every `*.wav` in `dir` (sorted by file name) at the expected rate.
pub fn load_noise_dir(dir: impl AsRef<Path>, sample_rate: u32) -> Result<Vec<NoiseSource>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let waveform = read_wav(&p)?;
            if waveform.sample_rate != sample_rate {
                return Err(Error::Audio(format!(
                    "{}: {} Hz, expected {sample_rate} Hz",
                    p.display(),
                    waveform.sample_rate
                )));
            }
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(NoiseSource { id, waveform })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn band_power(x: &[f64], lo: usize, hi: usize) -> f64 {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        buf[lo..hi].iter().map(|c| c.norm_sqr()).sum()
    }

    #[test]
    fn generators_have_unit_power_and_are_seeded() {
        for kind in NoiseKind::ALL {
            let a = generate_noise(&mut seeded(1), kind, 8000, 8000).unwrap();
            let b = generate_noise(&mut seeded(1), kind, 8000, 8000).unwrap();
            assert_eq!(a, b);
            assert!((a.power() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pink_noise_falls_about_3db_per_octave() {
        let x = generate_noise(&mut seeded(2), NoiseKind::Pink, 1 << 16, 16_000).unwrap();
        // Octaves [512, 1024) and [4096, 8192) bins: 3 octaves apart, equal power per octave.
        let lo = band_power(&x.samples, 512, 1024);
        let hi = band_power(&x.samples, 4096, 8192);
        assert!((lo / hi - 1.0).abs() < 0.1);
        let white = generate_noise(&mut seeded(2), NoiseKind::White, 1 << 16, 16_000).unwrap();
        let ratio = band_power(&white.samples, 4096, 8192) / band_power(&white.samples, 512, 1024);
        assert!((ratio - 8.0).abs() < 0.8);
    }

    #[test]
    fn noise_dir_is_loaded_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::new(vec![0.1; 100], 8000).unwrap();
        crate::dsp::write_wav(dir.path().join("b.wav"), &w, crate::dsp::WavFormat::Float32).unwrap();
        crate::dsp::write_wav(dir.path().join("a.wav"), &w, crate::dsp::WavFormat::Float32).unwrap();
        std::fs::write(dir.path().join("readme.txt"), "x").unwrap();
        let bank = load_noise_dir(dir.path(), 8000).unwrap();
        assert_eq!(bank.iter().map(|n| n.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert!(load_noise_dir(dir.path(), 16_000).is_err());
    }
}
