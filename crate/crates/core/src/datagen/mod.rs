//! Paired air/bone data: synthetic generation, corpus I/O, noise sources,
//! SNR-controlled mixing and Gaussian-centred test subsets.

mod corpus;
mod noise;
mod synth;

pub use corpus::{
    load_paired_corpus, synthesize_corpus, write_corpus, CorpusScan, Split, SplitManifest,
    SyntheticCorpusConfig, SPLITS_FILE,
};
pub use noise::{generate_noise, load_noise_dir, synthetic_noise_bank, NoiseKind, NoiseSource};
pub use synth::{
    bone_channel, lowpass_zero_phase, lowpass_zero_phase_power, synth_pair, synth_pair_for, synth_speech,
    BoneModel, SpeakerProfile,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, standard_normal};

/// Time-aligned air- and bone-conducted recordings of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub air: Waveform,
    pub bone: Waveform,
    pub speaker_id: String,
    pub utterance_id: String,
}

/// Result of scaling and adding noise to a clean signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    /// Gain `k` applied to the noise crop.
    pub noise_gain: f64,
    pub noise_offset: usize,
}

/// A noisy mixture together with its clean pair and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSample {
    pub pair: UtterancePair,
    pub noise_id: String,
    pub noise_offset: usize,
    pub target_snr_db: f64,
    pub mixture: Waveform,
}

/// `clean + k · noise[offset..offset + len]` with
/// `k = sqrt(P_clean / (P_noise · 10^{snr/10}))`; powers are whole-segment
/// mean squares.
pub fn mix_at_offset(clean: &Waveform, noise: &Waveform, snr_db: f64, offset: usize) -> Result<Mixture> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::Audio(format!(
            "clean at {} Hz, noise at {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidParam(format!("snr {snr_db} dB")));
    }
    if clean.is_empty() {
        return Err(Error::Empty("clean signal has no samples".into()));
    }
    if offset + clean.len() > noise.len() {
        return Err(Error::TooShort {
            len: noise.len(),
            need: offset + clean.len(),
        });
    }
    let crop = &noise.samples[offset..offset + clean.len()];
    let p_clean = clean.power();
    let p_noise = crop.iter().map(|s| s * s).sum::<f64>() / crop.len() as f64;
    if p_clean == 0.0 {
        return Err(Error::Silent("clean signal".into()));
    }
    if p_noise == 0.0 {
        return Err(Error::Silent("noise segment".into()));
    }
    let k = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples.iter().zip(crop).map(|(c, n)| c + k * n).collect();
    Ok(Mixture {
        mixture: Waveform::new(samples, clean.sample_rate)?,
        noise_gain: k,
        noise_offset: offset,
    })
}

/// [`mix_at_offset`] with a uniformly random aligned crop of the noise.
pub fn mix_at_snr<R: Rng + ?Sized>(clean: &Waveform, noise: &Waveform, snr_db: f64, rng: &mut R) -> Result<Mixture> {
    if noise.len() < clean.len() {
        return Err(Error::TooShort {
            len: noise.len(),
            need: clean.len(),
        });
    }
    let offset = rng.random_range(0..=noise.len() - clean.len());
    mix_at_offset(clean, noise, snr_db, offset)
}

/// `10 log10(P_clean / P_{mixture − clean})`.
pub fn realized_snr_db(clean: &Waveform, mixture: &Waveform) -> f64 {
    let p_clean = clean.power();
    let p_noise = clean
        .samples
        .iter()
        .zip(&mixture.samples)
        .map(|(c, m)| (m - c).powi(2))
        .sum::<f64>()
        / clean.len() as f64;
    10.0 * (p_clean / p_noise).log10()
}

/// Noisy training example with SNR drawn uniformly from `snr_range_db`.
pub fn random_training_mixture<R: Rng + ?Sized>(
    pair: &UtterancePair,
    noises: &[NoiseSource],
    snr_range_db: (f64, f64),
    rng: &mut R,
) -> Result<MixtureSample> {
    if noises.is_empty() {
        return Err(Error::Empty("noise bank".into()));
    }
    let noise = &noises[rng.random_range(0..noises.len())];
    let snr = rng.random_range(snr_range_db.0..=snr_range_db.1);
    let m = mix_at_snr(&pair.air, &noise.waveform, snr, rng)?;
    Ok(MixtureSample {
        pair: pair.clone(),
        noise_id: noise.id.clone(),
        noise_offset: m.noise_offset,
        target_snr_db: snr,
        mixture: m.mixture,
    })
}

pub const TEST_SNR_CENTERS_DB: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 15.0];

/// One row of a test-subset manifest; enough to rebuild the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEntry {
    pub center_db: f64,
    pub utterance_id: String,
    pub noise_id: String,
    pub noise_offset: usize,
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub master_seed: u64,
    pub sigma_db: f64,
    pub snr_convention: String,
    pub entries: Vec<SubsetEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSubset {
    pub center_db: f64,
    pub samples: Vec<MixtureSample>,
}

/// Mixes every pair once per centre, with SNR drawn from
/// `N(center, sigma²)`, noise and crop drawn from a seed derived from
/// (master seed, centre, utterance id).
pub fn make_test_subsets(
    pairs: &[UtterancePair],
    noises: &[NoiseSource],
    centers_db: &[f64],
    sigma_db: f64,
    master_seed: u64,
) -> Result<(Vec<TestSubset>, SubsetManifest)> {
    if pairs.is_empty() || noises.is_empty() {
        return Err(Error::Empty("test subsets need pairs and noises".into()));
    }
    if !(sigma_db >= 0.0) {
        return Err(Error::InvalidParam(format!("sigma must be >= 0, got {sigma_db}")));
    }
    let mut entries = Vec::with_capacity(pairs.len() * centers_db.len());
    for &center in centers_db {
        for pair in pairs {
            let seed = derive_seed(master_seed, &format!("{center}/{}", pair.utterance_id));
            let mut rng = seeded(seed);
            let snr = center + sigma_db * standard_normal(&mut rng);
            let noise = &noises[rng.random_range(0..noises.len())];
            if noise.waveform.len() < pair.air.len() {
                return Err(Error::TooShort {
                    len: noise.waveform.len(),
                    need: pair.air.len(),
                });
            }
            let offset = rng.random_range(0..=noise.waveform.len() - pair.air.len());
            entries.push(SubsetEntry {
                center_db: center,
                utterance_id: pair.utterance_id.clone(),
                noise_id: noise.id.clone(),
                noise_offset: offset,
                snr_db: snr,
                seed,
            });
        }
    }
    let manifest = SubsetManifest {
        master_seed,
        sigma_db,
        snr_convention: "whole-utterance mean square".into(),
        entries,
    };
    let subsets = replay_manifest(&manifest, pairs, noises)?;
    Ok((subsets, manifest))
}

/// Rebuilds the subsets described by a manifest.
pub fn replay_manifest(
    manifest: &SubsetManifest,
    pairs: &[UtterancePair],
    noises: &[NoiseSource],
) -> Result<Vec<TestSubset>> {
    let mut subsets: Vec<TestSubset> = Vec::new();
    for e in &manifest.entries {
        let pair = pairs
            .iter()
            .find(|p| p.utterance_id == e.utterance_id)
            .ok_or_else(|| Error::InvalidParam(format!("manifest utterance '{}' not found", e.utterance_id)))?;
        let noise = noises
            .iter()
            .find(|n| n.id == e.noise_id)
            .ok_or_else(|| Error::InvalidParam(format!("manifest noise '{}' not found", e.noise_id)))?;
        let m = mix_at_offset(&pair.air, &noise.waveform, e.snr_db, e.noise_offset)?;
        let sample = MixtureSample {
            pair: pair.clone(),
            noise_id: e.noise_id.clone(),
            noise_offset: e.noise_offset,
            target_snr_db: e.snr_db,
            mixture: m.mixture,
        };
        match subsets.iter_mut().find(|s| s.center_db == e.center_db) {
            Some(s) => s.samples.push(sample),
            None => subsets.push(TestSubset {
                center_db: e.center_db,
                samples: vec![sample],
            }),
        }
    }
    Ok(subsets)
}
