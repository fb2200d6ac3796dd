//! Paired air/bone corpus on disk.
//!
//! Layout:
//!
//! ```text
//! <root>/splits.json            {"train": [speakers], "val": [...], "test": [...]}
//! <root>/<speaker>/air/<utterance>.wav
//! <root>/<speaker>/bone/<utterance>.wav
//! ```
//!
//! Without `splits.json` every speaker belongs to every split.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::synth::{synth_pair_for, BoneModel, SpeakerProfile};
use super::UtterancePair;
use crate::dsp::{read_wav, write_wav, WavFormat};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParam(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn speakers(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub const SPLITS_FILE: &str = "splits.json";

/// Result of scanning a corpus: the valid pairs plus what was skipped.
#[derive(Debug, Clone, Default)]
pub struct CorpusScan {
    pub pairs: Vec<UtterancePair>,
    /// Files that have no partner in the other modality.
    pub orphans: Vec<PathBuf>,
    /// Pairs dropped for length or rate mismatch.
    pub rejected: Vec<String>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

fn wav_stems(dir: &Path) -> Result<BTreeSet<String>> {
    if !dir.is_dir() {
        return Ok(BTreeSet::new());
    }
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect())
}

/// Enumerates the pairs of one split in (speaker, utterance) order.
pub fn load_paired_corpus(root: impl AsRef<Path>, split: Split) -> Result<CorpusScan> {
    let root = root.as_ref();
    let manifest_path = root.join(SPLITS_FILE);
    let allowed: Option<BTreeSet<String>> = if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: SplitManifest = serde_json::from_str(&text)?;
        Some(m.speakers(split).iter().cloned().collect())
    } else {
        None
    };

    let mut scan = CorpusScan::default();
    for spk_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let speaker = spk_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if allowed.as_ref().is_some_and(|a| !a.contains(&speaker)) {
            continue;
        }
        let air_dir = spk_dir.join("air");
        let bone_dir = spk_dir.join("bone");
        let air = wav_stems(&air_dir)?;
        let bone = wav_stems(&bone_dir)?;
        for stem in air.symmetric_difference(&bone) {
            let path = if air.contains(stem) { &air_dir } else { &bone_dir }.join(format!("{stem}.wav"));
            warn!("orphan file without a partner: {}", path.display());
            scan.orphans.push(path);
        }
        for stem in air.intersection(&bone) {
            let a = read_wav(air_dir.join(format!("{stem}.wav")))?;
            let b = read_wav(bone_dir.join(format!("{stem}.wav")))?;
            if a.len() != b.len() || a.sample_rate != b.sample_rate {
                warn!(
                    "rejecting {speaker}/{stem}: air {} samples @ {} Hz, bone {} samples @ {} Hz",
                    a.len(),
                    a.sample_rate,
                    b.len(),
                    b.sample_rate
                );
                scan.rejected.push(format!("{speaker}/{stem}"));
                continue;
            }
            scan.pairs.push(UtterancePair {
                air: a,
                bone: b,
                speaker_id: speaker.clone(),
                utterance_id: format!("{speaker}/{stem}"),
            });
        }
    }
    Ok(scan)
}

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusConfig {
    pub train_speakers: usize,
    pub val_speakers: usize,
    pub test_speakers: usize,
    pub utterances_per_speaker: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        Self {
            train_speakers: 8,
            val_speakers: 2,
            test_speakers: 2,
            utterances_per_speaker: 10,
            min_duration_s: 1.0,
            max_duration_s: 3.0,
            sample_rate: 8_000,
            seed: 0,
        }
    }
}

/// Generates a synthetic corpus in memory. Every utterance draws from a
/// seed derived from (master seed, utterance id).
pub fn synthesize_corpus(cfg: &SyntheticCorpusConfig) -> Result<(SplitManifest, Vec<UtterancePair>)> {
    if !(1.0 <= cfg.min_duration_s && cfg.min_duration_s <= cfg.max_duration_s && cfg.max_duration_s <= 5.0) {
        return Err(Error::InvalidParam(format!(
            "durations must satisfy 1 <= min ({}) <= max ({}) <= 5",
            cfg.min_duration_s, cfg.max_duration_s
        )));
    }
    let mut manifest = SplitManifest::default();
    let mut pairs = Vec::new();
    let groups = [
        (Split::Train, cfg.train_speakers),
        (Split::Val, cfg.val_speakers),
        (Split::Test, cfg.test_speakers),
    ];
    let mut index = 0;
    for (split, count) in groups {
        for _ in 0..count {
            let speaker_id = format!("spk{index:03}");
            index += 1;
            let profile = SpeakerProfile::random(&mut seeded(derive_seed(cfg.seed, &speaker_id)));
            for u in 0..cfg.utterances_per_speaker {
                let utterance_id = format!("{speaker_id}/utt{u:03}");
                let mut rng = seeded(derive_seed(cfg.seed, &utterance_id));
                let dur = if cfg.max_duration_s > cfg.min_duration_s {
                    rand::Rng::random_range(&mut rng, cfg.min_duration_s..cfg.max_duration_s)
                } else {
                    cfg.min_duration_s
                };
                let mut pair = synth_pair_for(&mut rng, &profile, &BoneModel::default(), dur, cfg.sample_rate)?;
                pair.speaker_id = speaker_id.clone();
                pair.utterance_id = utterance_id;
                pairs.push(pair);
            }
            match split {
                Split::Train => manifest.train.push(speaker_id),
                Split::Val => manifest.val.push(speaker_id),
                Split::Test => manifest.test.push(speaker_id),
            }
        }
    }
    Ok((manifest, pairs))
}

/// Writes pairs and the split manifest in the documented layout.
pub fn write_corpus(root: impl AsRef<Path>, manifest: &SplitManifest, pairs: &[UtterancePair]) -> Result<()> {
    let root = root.as_ref();
    for pair in pairs {
        let stem = pair
            .utterance_id
            .rsplit('/')
            .next()
            .unwrap_or(&pair.utterance_id)
            .to_string();
        for (sub, w) in [("air", &pair.air), ("bone", &pair.bone)] {
            let dir = root.join(&pair.speaker_id).join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_wav(dir.join(format!("{stem}.wav")), w, WavFormat::Float32)?;
        }
    }
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(SPLITS_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}
