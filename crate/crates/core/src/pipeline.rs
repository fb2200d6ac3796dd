//! Waveform-level glue between the data, the front-end and the sampler:
//! level normalization, training-example construction and chunked
//! enhancement of whole utterances.

use rand::Rng;

use crate::datagen::MixtureSample;
use crate::dsp::{frame_fit, istft, stft, FitMode, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sampler::{sample_seeded, SampleOutput, SamplerConfig, ScoreFunction};
use crate::sde::SdeParams;
use crate::spectrogram::ComplexSpectrogram;

/// Network inputs and regression target for one training crop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub x0: ComplexSpectrogram,
    pub y: ComplexSpectrogram,
    pub y_c: ComplexSpectrogram,
}

/// Peak-normalized inputs. The mixture and the clean reference share
/// `gain`; the bone signal is normalized on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub mixture: Waveform,
    pub bone: Waveform,
    pub gain: f64,
}

pub fn normalize_inputs(mixture: &Waveform, bone: &Waveform) -> Result<Normalized> {
    if mixture.len() != bone.len() {
        return Err(Error::Shape(format!(
            "mixture has {} samples, bone signal {}",
            mixture.len(),
            bone.len()
        )));
    }
    if mixture.sample_rate != bone.sample_rate {
        return Err(Error::Audio(format!(
            "mixture at {} Hz, bone signal at {} Hz",
            mixture.sample_rate, bone.sample_rate
        )));
    }
    let (mixture, gain) = mixture.peak_normalized()?;
    let bone = match bone.peak_normalized() {
        Ok((b, _)) => b,
        Err(Error::Silent(_)) => bone.clone(),
        Err(e) => return Err(e),
    };
    Ok(Normalized { mixture, bone, gain })
}

/// Builds one fixed-width training example from a mixture. All three
/// spectrograms share the crop drawn from `crop_seed`.
pub fn training_example(
    sample: &MixtureSample,
    cfg: &StftConfig,
    crop_seed: u64,
    zero_bone: bool,
) -> Result<TrainExample> {
    let n = normalize_inputs(&sample.mixture, &sample.pair.bone)?;
    let clean = sample.pair.air.scaled(n.gain);
    let target = cfg.n_frames_target;
    let fit = |w: &Waveform| -> Result<ComplexSpectrogram> {
        let s = stft(w, cfg)?;
        Ok(frame_fit(&s, target, FitMode::Train { seed: crop_seed }).chunks.remove(0))
    };
    let x0 = fit(&clean)?;
    let y = fit(&n.mixture)?;
    let y_c = if zero_bone {
        ComplexSpectrogram::zeros(x0.bins(), x0.frames())
    } else {
        fit(&n.bone)?
    };
    Ok(TrainExample { x0, y, y_c })
}

/// One utterance to enhance.
#[derive(Debug, Clone)]
pub struct EnhanceInput<'a> {
    pub id: &'a str,
    pub mixture: &'a Waveform,
    pub bone: &'a Waveform,
}

/// Enhances several utterances. Each is normalized, transformed, split into
/// network-width chunks, sampled, cross-faded back together, inverted and
/// returned at the input's level and length. All chunks of all utterances
/// share the sampler's forward passes; chunk `k` of utterance `id` draws
/// its randomness from a seed derived from `(cfg.seed, id, k)`, so results
/// do not depend on how inputs are grouped.
pub fn enhance_many<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    inputs: &[EnhanceInput<'_>],
    stft_cfg: &StftConfig,
    sampler: &SamplerConfig,
    sde: &SdeParams,
    zero_bone: bool,
) -> Result<Vec<Waveform>> {
    Ok(enhance_many_traced(score_fn, inputs, stft_cfg, sampler, sde, zero_bone)?.0)
}

/// [`enhance_many`] that also returns the sampler output with its
/// estimates moved out; trajectory items index chunks in input order.
pub fn enhance_many_traced<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    inputs: &[EnhanceInput<'_>],
    stft_cfg: &StftConfig,
    sampler: &SamplerConfig,
    sde: &SdeParams,
    zero_bone: bool,
) -> Result<(Vec<Waveform>, SampleOutput)> {
    let target = stft_cfg.n_frames_target;
    let mut fits = Vec::with_capacity(inputs.len());
    let mut gains = Vec::with_capacity(inputs.len());
    let (mut ys, mut ycs, mut seeds) = (Vec::new(), Vec::new(), Vec::new());
    for input in inputs {
        if input.mixture.sample_rate != stft_cfg.sample_rate {
            return Err(Error::Audio(format!(
                "{}: {} Hz input, front-end expects {} Hz",
                input.id, input.mixture.sample_rate, stft_cfg.sample_rate
            )));
        }
        let n = normalize_inputs(input.mixture, input.bone)?;
        let y_fit = frame_fit(&stft(&n.mixture, stft_cfg)?, target, FitMode::Inference);
        let yc_fit = frame_fit(&stft(&n.bone, stft_cfg)?, target, FitMode::Inference);
        for (k, (y, yc)) in y_fit.chunks.iter().zip(&yc_fit.chunks).enumerate() {
            ys.push(y.clone());
            ycs.push(if zero_bone { ComplexSpectrogram::zeros(yc.bins(), yc.frames()) } else { yc.clone() });
            seeds.push(derive_seed(sampler.seed, &format!("{}#{k}", input.id)));
        }
        fits.push(y_fit);
        gains.push(n.gain);
    }
    if ys.is_empty() {
        return Err(Error::Empty("no utterances to enhance".into()));
    }
    let mut output = sample_seeded(score_fn, &ys, &ycs, &seeds, sampler, sde)?;
    let mut estimates = std::mem::take(&mut output.estimates).into_iter();
    let mut out = Vec::with_capacity(inputs.len());
    for ((input, fit), gain) in inputs.iter().zip(&fits).zip(gains) {
        let chunks: Vec<_> = estimates.by_ref().take(fit.chunks.len()).collect();
        let spec = fit.reassemble(&chunks)?;
        let wave = istft(&spec, stft_cfg, input.mixture.len())?;
        out.push(wave.scaled(1.0 / gain));
    }
    Ok((out, output))
}

/// Enhances one utterance; see [`enhance_many`].
pub fn enhance<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    mixture: &Waveform,
    bone: &Waveform,
    stft_cfg: &StftConfig,
    sampler: &SamplerConfig,
    sde: &SdeParams,
    zero_bone: bool,
) -> Result<Waveform> {
    let input = EnhanceInput { id: "utt", mixture, bone };
    Ok(enhance_many(score_fn, &[input], stft_cfg, sampler, sde, zero_bone)?.remove(0))
}

/// Sample count whose STFT has exactly `frames` frames.
pub fn samples_for_frames(cfg: &StftConfig, frames: usize) -> usize {
    (frames.max(1) - 1) * cfg.hop
}

/// Cuts the same random segment of `frames` STFT frames out of the clean,
/// bone and mixture signals of a sample. Shorter samples are returned whole.
pub fn crop_sample<R: Rng + ?Sized>(sample: &MixtureSample, cfg: &StftConfig, frames: usize, rng: &mut R) -> MixtureSample {
    let len = samples_for_frames(cfg, frames);
    let total = sample.mixture.len();
    if total <= len {
        return sample.clone();
    }
    let start = rng.random_range(0..=total - len);
    let cut = |w: &Waveform| Waveform {
        samples: w.samples[start..start + len].to_vec(),
        sample_rate: w.sample_rate,
    };
    let mut out = sample.clone();
    out.pair.air = cut(&sample.pair.air);
    out.pair.bone = cut(&sample.pair.bone);
    out.mixture = cut(&sample.mixture);
    out.noise_offset = sample.noise_offset + start;
    out
}
