//! Harmonic speech surrogate and the bone-conduction channel model.

use std::f64::consts::PI;

use rand::Rng;

use super::UtterancePair;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// Talker traits that stay fixed across the utterances of one speaker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeakerProfile {
    /// Median pitch in Hz.
    pub f0: f64,
    /// Multiplier on all formant frequencies (vocal-tract length).
    pub formant_scale: f64,
}

impl SpeakerProfile {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            f0: rng.random_range(95.0..240.0),
            formant_scale: rng.random_range(0.85..1.2),
        }
    }
}

/// Channel model mapping air-conducted to bone-conducted speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoneModel {
    pub cutoff_hz: f64,
    pub attenuation_db: f64,
    /// Self-noise power relative to the filtered signal, in dB.
    pub self_noise_db: f64,
}

impl Default for BoneModel {
    fn default() -> Self {
        Self {
            cutoff_hz: 1000.0,
            attenuation_db: 3.0,
            self_noise_db: -40.0,
        }
    }
}

// Vowel-like (F1, F2, F3) targets in Hz.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [90.0, 120.0, 170.0];
const FORMANT_GAINS: [f64; 3] = [1.0, 0.6, 0.3];

struct Syllable {
    start: usize,
    len: usize,
    peak: f64,
    from: [f64; 3],
    to: [f64; 3],
    fricative: Option<usize>,
}

/// Synthesizes a time-aligned air/bone pair for a random talker.
pub fn synth_pair<R: Rng + ?Sized>(rng: &mut R, duration_s: f64, sample_rate: u32) -> Result<UtterancePair> {
    let speaker = SpeakerProfile::random(rng);
    synth_pair_for(rng, &speaker, &BoneModel::default(), duration_s, sample_rate)
}

pub fn synth_pair_for<R: Rng + ?Sized>(
    rng: &mut R,
    speaker: &SpeakerProfile,
    bone: &BoneModel,
    duration_s: f64,
    sample_rate: u32,
) -> Result<UtterancePair> {
    if !(1.0..=5.0).contains(&duration_s) {
        return Err(Error::InvalidParam(format!(
            "utterance duration must lie in [1, 5] s, got {duration_s}"
        )));
    }
    let air = synth_speech(rng, speaker, duration_s, sample_rate)?;
    let bone = bone_channel(rng, &air, bone)?;
    Ok(UtterancePair {
        air,
        bone,
        speaker_id: "synthetic".into(),
        utterance_id: "synthetic".into(),
    })
}

/// Voiced harmonic source shaped by moving formants, syllabic amplitude
/// envelope with pauses, and occasional fricative bursts. Peak is 0.5.
pub fn synth_speech<R: Rng + ?Sized>(
    rng: &mut R,
    speaker: &SpeakerProfile,
    duration_s: f64,
    sample_rate: u32,
) -> Result<Waveform> {
    let fs = f64::from(sample_rate);
    let len = (duration_s * fs).round() as usize;
    if len == 0 {
        return Err(Error::InvalidParam("utterance has zero samples".into()));
    }

    let mut syllables = Vec::new();
    let mut pos = (rng.random_range(0.02..0.1) * fs) as usize;
    let mut prev = VOWELS[rng.random_range(0..VOWELS.len())];
    while pos < len {
        let syl_len = (rng.random_range(0.12..0.3) * fs) as usize;
        let to = VOWELS[rng.random_range(0..VOWELS.len())];
        let fricative = rng
            .random_bool(0.4)
            .then(|| (rng.random_range(0.03..0.07) * fs) as usize);
        syllables.push(Syllable {
            start: pos,
            len: syl_len.min(len - pos),
            peak: rng.random_range(0.5..1.0),
            from: prev,
            to,
            fricative,
        });
        prev = to;
        pos += syl_len;
        if rng.random_bool(0.3) {
            pos += (rng.random_range(0.05..0.25) * fs) as usize;
        }
    }

    // Slow pitch wander around the speaker median, kept within 80..300 Hz.
    let vib = [
        (rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.03..0.1)),
        (rng.random_range(2.0..5.0), rng.random_range(0.0..2.0 * PI), rng.random_range(0.01..0.04)),
    ];
    let declination = rng.random_range(0.0..0.15);
    let nyquist_margin = 0.45 * fs;

    let mut out = vec![0.0; len];
    let mut phase = 0.0;
    let block = 32;
    let mut amps: Vec<f64> = Vec::new();
    for syl in &syllables {
        // Phase stays continuous across syllables through `phase`.
        for i in 0..syl.len {
            let n = syl.start + i;
            let time = n as f64 / fs;
            let mut f0 = speaker.f0 * (1.0 - declination * time / duration_s);
            for &(rate, ph, depth) in &vib {
                f0 *= 1.0 + depth * (2.0 * PI * rate * time + ph).sin();
            }
            let f0 = f0.clamp(80.0, 300.0);
            phase = (phase + 2.0 * PI * f0 / fs) % (2.0 * PI);
            let harmonics = (nyquist_margin / f0) as usize;
            if i % block == 0 {
                let frac = (i as f64 / (0.3 * syl.len as f64)).min(1.0);
                let formants: Vec<f64> = (0..3)
                    .map(|k| speaker.formant_scale * (syl.from[k] + frac * (syl.to[k] - syl.from[k])))
                    .collect();
                amps.clear();
                for h in 1..=harmonics {
                    let f = h as f64 * f0;
                    let env: f64 = (0..3)
                        .map(|k| FORMANT_GAINS[k] / (1.0 + ((f - formants[k]) / BANDWIDTHS[k]).powi(2)))
                        .sum();
                    amps.push((0.05 + env) / (h as f64).sqrt());
                }
            }
            let voiced: f64 = amps
                .iter()
                .take(harmonics)
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
            let shape = (PI * i as f64 / syl.len as f64).sin().powi(2);
            out[n] += syl.peak * shape * voiced;
        }
        if let Some(fric_len) = syl.fricative {
            let mut last = 0.0;
            for i in 0..fric_len.min(syl.len) {
                let white = standard_normal(rng);
                let hp = white - last;
                last = white;
                let shape = (PI * i as f64 / fric_len as f64).sin();
                out[syl.start + i] += 0.08 * syl.peak * shape * hp;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    Waveform::new(out, sample_rate)
}

/// Second-order section in direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff_hz: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / fs;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        let b1 = (1.0 - cos) / a0;
        Self {
            b: [b1 / 2.0, b1, b1 / 2.0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }

    /// Squared magnitude response at `f` Hz.
    fn power_response(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        (num / den).norm_sqr()
    }
}

// Pole quality factors of a 4th-order Butterworth prototype.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

fn butterworth4(cutoff_hz: f64, fs: f64) -> [Biquad; 2] {
    BUTTERWORTH4_Q.map(|q| Biquad::lowpass(cutoff_hz, q, fs))
}

/// Zero-phase 4th-order Butterworth low-pass (forward and backward pass,
/// so the magnitude response is squared and no delay is introduced).
pub fn lowpass_zero_phase(x: &[f64], cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let fs = f64::from(sample_rate);
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::InvalidParam(format!(
            "cutoff {cutoff_hz} Hz outside (0, {})",
            fs / 2.0
        )));
    }
    let sections = butterworth4(cutoff_hz, fs);
    let mut y = x.to_vec();
    for s in &sections {
        s.run(&mut y);
    }
    y.reverse();
    for s in &sections {
        s.run(&mut y);
    }
    y.reverse();
    Ok(y)
}

/// Power gain of [`lowpass_zero_phase`] at `f` Hz.
pub fn lowpass_zero_phase_power(f: f64, cutoff_hz: f64, sample_rate: u32) -> f64 {
    let fs = f64::from(sample_rate);
    butterworth4(cutoff_hz, fs)
        .iter()
        .map(|s| s.power_response(f, fs).powi(2))
        .product()
}

/// Low-pass, attenuation and additive white sensor noise.
pub fn bone_channel<R: Rng + ?Sized>(rng: &mut R, air: &Waveform, model: &BoneModel) -> Result<Waveform> {
    let mut y = lowpass_zero_phase(&air.samples, model.cutoff_hz, air.sample_rate)?;
    let gain = 10f64.powf(-model.attenuation_db / 20.0);
    y.iter_mut().for_each(|v| *v *= gain);
    let power = y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64;
    let noise_std = (power * 10f64.powf(model.self_noise_db / 10.0)).sqrt();
    for v in y.iter_mut() {
        *v += noise_std * standard_normal(rng);
    }
    Waveform::new(y, air.sample_rate)
}
