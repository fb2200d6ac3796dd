//! Toy-scale end-to-end experiment on the synthetic corpus: data
//! preparation, held-out SNR subsets, enhancement scoring and step sweeps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::{
    make_test_subsets, synthesize_corpus, synthetic_noise_bank, MixtureSample, NoiseSource, Split,
    SplitManifest, SubsetManifest, SyntheticCorpusConfig, TestSubset, UtterancePair,
};
use crate::dsp::{StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::eval::{median, score_utterance, si_sdr, Summary, SweepRow};
use crate::pipeline::{enhance_many, samples_for_frames, EnhanceInput};
use crate::rng::{derive_seed, seeded};
use crate::sampler::{SamplerConfig, ScoreFunction};
use crate::sde::SdeParams;
use crate::train::TrainingData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDataConfig {
    pub corpus: SyntheticCorpusConfig,
    /// Length of each synthetic noise recording.
    pub noise_seconds: f64,
    pub seed: u64,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            corpus: SyntheticCorpusConfig::default(),
            noise_seconds: 30.0,
            seed: 0,
        }
    }
}

/// Synthetic corpus split by speaker, with separate noise recordings for
/// training and testing.
#[derive(Debug, Clone)]
pub struct ToyData {
    pub manifest: SplitManifest,
    pub training: TrainingData,
    pub test: Vec<UtterancePair>,
    pub test_noises: Vec<NoiseSource>,
}

pub fn split_pairs(manifest: &SplitManifest, pairs: &[UtterancePair], split: Split) -> Vec<UtterancePair> {
    let speakers = manifest.speakers(split);
    pairs.iter().filter(|p| speakers.contains(&p.speaker_id)).cloned().collect()
}

pub fn toy_data(cfg: &ToyDataConfig, stft: StftConfig) -> Result<ToyData> {
    let corpus = SyntheticCorpusConfig {
        seed: derive_seed(cfg.seed, "corpus"),
        sample_rate: stft.sample_rate,
        ..cfg.corpus.clone()
    };
    let (manifest, pairs) = synthesize_corpus(&corpus)?;
    let len = (cfg.noise_seconds * f64::from(stft.sample_rate)).round() as usize;
    let noises = synthetic_noise_bank(&mut seeded(derive_seed(cfg.seed, "train-noise")), len, stft.sample_rate)?;
    let test_noises = synthetic_noise_bank(&mut seeded(derive_seed(cfg.seed, "test-noise")), len, stft.sample_rate)?;
    Ok(ToyData {
        training: TrainingData {
            train: split_pairs(&manifest, &pairs, Split::Train),
            val: split_pairs(&manifest, &pairs, Split::Val),
            noises,
            stft,
        },
        test: split_pairs(&manifest, &pairs, Split::Test),
        test_noises,
        manifest,
    })
}

/// The most energetic of a few seeded candidate segments of `len` samples,
/// cut identically from both channels.
pub fn active_segment(pair: &UtterancePair, len: usize, seed: u64) -> UtterancePair {
    if pair.air.len() <= len {
        return pair.clone();
    }
    let mut rng = seeded(seed);
    let span = pair.air.len() - len;
    let energy = |s: usize| pair.air.samples[s..s + len].iter().map(|v| v * v).sum::<f64>();
    let start = (0..8)
        .map(|_| rand::Rng::random_range(&mut rng, 0..=span))
        .max_by(|&a, &b| energy(a).total_cmp(&energy(b)))
        .unwrap_or(0);
    let cut = |w: &Waveform| Waveform {
        samples: w.samples[start..start + len].to_vec(),
        sample_rate: w.sample_rate,
    };
    UtterancePair {
        air: cut(&pair.air),
        bone: cut(&pair.bone),
        speaker_id: pair.speaker_id.clone(),
        utterance_id: pair.utterance_id.clone(),
    }
}

/// Held-out subsets of single network-width segments. Each utterance
/// contributes its most active segment; SNRs are drawn around every centre
/// with standard deviation `sigma_db` and hold exactly on the segment.
pub fn segment_subsets(
    pairs: &[UtterancePair],
    noises: &[NoiseSource],
    stft: &StftConfig,
    centers_db: &[f64],
    sigma_db: f64,
    seed: u64,
) -> Result<(Vec<TestSubset>, SubsetManifest)> {
    let len = samples_for_frames(stft, stft.n_frames_target);
    let segments: Vec<UtterancePair> = pairs
        .iter()
        .map(|p| active_segment(p, len, derive_seed(seed, &p.utterance_id)))
        .collect();
    if segments.is_empty() {
        return Err(Error::Empty("test utterances".into()));
    }
    make_test_subsets(&segments, noises, centers_db, sigma_db, seed)
}

/// SI-SDR of one utterance before and after enhancement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredUtterance {
    pub utterance_id: String,
    pub snr_db: f64,
    pub noisy_si_sdr: f64,
    pub enhanced_si_sdr: f64,
}

impl ScoredUtterance {
    pub fn improvement(&self) -> f64 {
        self.enhanced_si_sdr - self.noisy_si_sdr
    }
}

/// Enhances every sample and scores it against its clean reference.
pub fn score_samples<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    samples: &[MixtureSample],
    stft: &StftConfig,
    sampler: &SamplerConfig,
    sde: &SdeParams,
    zero_bone: bool,
) -> Result<Vec<ScoredUtterance>> {
    let inputs: Vec<EnhanceInput<'_>> = samples
        .iter()
        .map(|m| EnhanceInput {
            id: &m.pair.utterance_id,
            mixture: &m.mixture,
            bone: &m.pair.bone,
        })
        .collect();
    let enhanced = enhance_many(score_fn, &inputs, stft, sampler, sde, zero_bone)?;
    samples
        .iter()
        .zip(&enhanced)
        .map(|(m, e)| {
            Ok(ScoredUtterance {
                utterance_id: m.pair.utterance_id.clone(),
                snr_db: m.target_snr_db,
                noisy_si_sdr: si_sdr(&m.mixture, &m.pair.air)?,
                enhanced_si_sdr: si_sdr(e, &m.pair.air)?,
            })
        })
        .collect()
}

pub fn median_enhanced(rows: &[ScoredUtterance]) -> f64 {
    median(&rows.iter().map(|r| r.enhanced_si_sdr).collect::<Vec<_>>())
}

pub fn median_improvement(rows: &[ScoredUtterance]) -> f64 {
    median(&rows.iter().map(ScoredUtterance::improvement).collect::<Vec<_>>())
}

/// Enhances a subset once per step count and summarizes every metric of
/// [`score_utterance`]. Utterances are enhanced one at a time so a failure
/// only drops that utterance; with `strict` the first failure aborts the
/// sweep.
#[allow(clippy::too_many_arguments)]
pub fn sweep_steps<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    model_label: &str,
    samples: &[MixtureSample],
    n_list: &[usize],
    stft: &StftConfig,
    base: &SamplerConfig,
    sde: &SdeParams,
    zero_bone: bool,
    strict: bool,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &n in n_list {
        let cfg = SamplerConfig { n_steps: n, ..base.clone() };
        cfg.validate()?;
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut failures = 0;
        for m in samples {
            let input = EnhanceInput {
                id: &m.pair.utterance_id,
                mixture: &m.mixture,
                bone: &m.pair.bone,
            };
            let scored = enhance_many(score_fn, &[input], stft, &cfg, sde, zero_bone)
                .and_then(|e| score_utterance(&e[0], &m.pair.air, stft, None));
            match scored {
                Ok(metrics) => {
                    for (k, v) in metrics {
                        values.entry(k).or_default().push(v);
                    }
                }
                Err(e) if !strict => {
                    log::warn!("N={n}, {}: {e}; excluded", m.pair.utterance_id);
                    failures += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let metrics: Vec<String> = if values.is_empty() {
            vec!["si_sdr".into(), "lsd".into()]
        } else {
            values.keys().cloned().collect()
        };
        for metric in metrics {
            let s = Summary::of(values.get(&metric).map_or(&[][..], Vec::as_slice));
            let s = s.unwrap_or(Summary { mean: f64::NAN, std: f64::NAN, median: f64::NAN, count: 0 });
            rows.push(SweepRow {
                model: model_label.to_string(),
                n_steps: n,
                score_calls: cfg.score_calls(),
                metric,
                mean: s.mean,
                std: s.std,
                median: s.median,
                count: s.count,
                failures,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::synth_pair;

    #[test]
    fn active_segment_is_aligned_and_sized() {
        let pair = synth_pair(&mut seeded(1), 2.0, 8_000).unwrap();
        let seg = active_segment(&pair, 2016, 5);
        assert_eq!(seg.air.len(), 2016);
        assert_eq!(seg.bone.len(), 2016);
        let start = pair.air.samples.windows(2016).position(|w| w == &seg.air.samples[..]).unwrap();
        assert_eq!(seg.bone.samples[..], pair.bone.samples[start..start + 2016]);
        assert_eq!(seg, active_segment(&pair, 2016, 5));
        let short = active_segment(&seg, 4000, 5);
        assert_eq!(short, seg);
    }

    #[test]
    fn segment_subsets_hit_their_snr_on_the_segment() {
        let stft = StftConfig::toy();
        let pairs: Vec<_> = (0..3)
            .map(|i| UtterancePair {
                utterance_id: format!("u{i}"),
                ..synth_pair(&mut seeded(i), 1.5, 8_000).unwrap()
            })
            .collect();
        let noises = synthetic_noise_bank(&mut seeded(9), 8_000, 8_000).unwrap();
        let (subsets, manifest) = segment_subsets(&pairs, &noises, &stft, &[-5.0], 0.0, 3).unwrap();
        assert_eq!(manifest.entries.len(), 3);
        for m in &subsets[0].samples {
            assert_eq!(m.mixture.len(), samples_for_frames(&stft, 64));
            let snr = crate::datagen::realized_snr_db(&m.pair.air, &m.mixture);
            assert!((snr + 5.0).abs() < 1e-9);
        }
    }
}
