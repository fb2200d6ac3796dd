//! Denoising score matching with Adam, an EMA weight shadow and
//! validation-based checkpoint selection.

use std::io::Write;
use std::path::{Path, PathBuf};

use bcdm_nn::optim::{Adam, AdamConfig};
use bcdm_nn::{Graph, ParamStore, Real, Tensor};
use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{random_training_mixture, NoiseSource, UtterancePair};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::eval::si_sdr;
use crate::model::{save_checkpoint, to_tensor, Checkpoint, ScoreBatch, ScoreModel, ScoreModelConfig};
use crate::pipeline::{crop_sample, enhance_many, training_example, EnhanceInput, TrainExample};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::sampler::{SamplerConfig, ScoreFunction};
use crate::sde::{sample_xt, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// `‖s + z/σ‖²`: the regression onto the kernel score as written.
    Unweighted,
    /// `‖σ s + z‖²`: the same minimizer with bounded magnitude.
    SigmaSquared,
}

impl std::str::FromStr for LossWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unweighted" => Ok(LossWeighting::Unweighted),
            "sigma_squared" | "sigma-squared" => Ok(LossWeighting::SigmaSquared),
            other => Err(Error::InvalidParam(format!("unknown loss weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; off by default.
    pub clip_norm: Option<f64>,
    pub ema_decay: f64,
    pub max_steps: u64,
    pub loss_weighting: LossWeighting,
    /// Validation utterances scored at every validation round.
    pub val_utterances: usize,
    /// Steps between validation rounds (the last step always validates).
    pub val_every: u64,
    /// Reverse steps of the validation sampler.
    pub val_reverse_steps: usize,
    /// Training SNRs are drawn uniformly from this range.
    pub snr_range_db: (f64, f64),
    /// Replace the bone input by zeros (mixture-only ablation).
    pub zero_bone: bool,
    /// Abort instead of skipping a step with a non-finite gradient.
    pub strict: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: None,
            ema_decay: 0.999,
            max_steps: 10_000,
            loss_weighting: LossWeighting::SigmaSquared,
            val_utterances: 20,
            val_every: 1_000,
            val_reverse_steps: 20,
            snr_range_db: (-5.0, 20.0),
            zero_bone: false,
            strict: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.ema_decay > 0.9 && self.ema_decay < 1.0) {
            return bad(format!("ema_decay must lie in (0.9, 1), got {}", self.ema_decay));
        }
        if self.max_steps == 0 || self.val_every == 0 || self.val_utterances == 0 || self.val_reverse_steps == 0 {
            return bad("max_steps, val_every, val_utterances and val_reverse_steps must be positive".into());
        }
        if !(self.snr_range_db.0 <= self.snr_range_db.1) {
            return bad(format!("empty SNR range {:?}", self.snr_range_db));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            clip_norm: self.clip_norm,
        }
    }
}

/// Diffusion times and kernel draws of one batch.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub x_t: Vec<ComplexSpectrogram>,
    pub z: Vec<ComplexSpectrogram>,
}

/// Draws `t ~ U(t_eps, 1)` per example and `x_t` from the kernel.
pub fn perturb<R: Rng + ?Sized>(batch: &[TrainExample], sde: &SdeParams, rng: &mut R) -> Result<Perturbation> {
    let t: Vec<f64> = batch.iter().map(|_| rng.random_range(sde.t_eps..=1.0)).collect();
    perturb_at(batch, &t, sde, rng)
}

/// Kernel draws at given times.
pub fn perturb_at<R: Rng + ?Sized>(
    batch: &[TrainExample],
    t: &[f64],
    sde: &SdeParams,
    rng: &mut R,
) -> Result<Perturbation> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    if batch.len() != t.len() {
        return Err(Error::Shape(format!("{} examples, {} times", batch.len(), t.len())));
    }
    let mut p = Perturbation {
        t: t.to_vec(),
        sigma: Vec::with_capacity(t.len()),
        x_t: Vec::with_capacity(t.len()),
        z: Vec::with_capacity(t.len()),
    };
    for (ex, &ti) in batch.iter().zip(t) {
        let k = sample_xt(&ex.x0, &ex.y, ti, sde, rng)?;
        p.sigma.push(k.std);
        p.x_t.push(k.x_t);
        p.z.push(k.z);
    }
    Ok(p)
}

/// Mean over the batch of the weighted squared score error.
pub fn weighted_loss(scores: &[ComplexSpectrogram], p: &Perturbation, weighting: LossWeighting) -> Result<f64> {
    if scores.len() != p.z.len() {
        return Err(Error::Shape(format!("{} scores for {} draws", scores.len(), p.z.len())));
    }
    let mut total = 0.0;
    for ((s, z), &sigma) in scores.iter().zip(&p.z).zip(&p.sigma) {
        s.check_same_shape(z, "loss")?;
        total += s
            .data()
            .iter()
            .zip(z.data())
            .map(|(&s, &z)| match weighting {
                LossWeighting::Unweighted => (s + z / sigma).norm_sqr(),
                LossWeighting::SigmaSquared => (s * sigma + z).norm_sqr(),
            })
            .sum::<f64>();
    }
    let loss = total / scores.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at t = {:?}, sigma = {:?}", p.t, p.sigma)));
    }
    Ok(loss)
}

/// DSM loss of an arbitrary score function on a batch, drawing times and
/// noise from `rng`.
pub fn dsm_loss<S: ScoreFunction + ?Sized, R: Rng + ?Sized>(
    score_fn: &S,
    batch: &[TrainExample],
    weighting: LossWeighting,
    sde: &SdeParams,
    rng: &mut R,
) -> Result<f64> {
    let p = perturb(batch, sde, rng)?;
    let scores = scores_per_item(score_fn, batch, &p)?;
    weighted_loss(&scores, &p, weighting)
}

fn scores_per_item<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    batch: &[TrainExample],
    p: &Perturbation,
) -> Result<Vec<ComplexSpectrogram>> {
    batch
        .iter()
        .zip(&p.x_t)
        .zip(&p.t)
        .map(|((ex, x), &t)| {
            let out = score_fn.score(std::slice::from_ref(x), std::slice::from_ref(&ex.y), std::slice::from_ref(&ex.y_c), t)?;
            out.into_iter().next().ok_or_else(|| Error::Empty("score output".into()))
        })
        .collect()
}

/// Loss and parameter gradients of the network on a perturbed batch.
pub fn loss_and_gradients<T: Real>(
    model: &ScoreModel<T>,
    batch: &[TrainExample],
    p: &Perturbation,
    weighting: LossWeighting,
) -> Result<(f64, bcdm_nn::Gradients<T>)> {
    let refs = |f: fn(&TrainExample) -> &ComplexSpectrogram| batch.iter().map(f).collect::<Vec<_>>();
    let sb = ScoreBatch {
        x_t: to_tensor(&p.x_t.iter().collect::<Vec<_>>())?,
        y: to_tensor(&refs(|e| &e.y))?,
        y_c: to_tensor(&refs(|e| &e.y_c))?,
        t: p.t.clone(),
    };
    let mut g = Graph::new(model.params());
    let rec = model.record(&mut g, &sb)?;
    let out = g.value(rec.output);
    let z = to_tensor::<f64>(&p.z.iter().collect::<Vec<_>>())?;
    let n = batch.len() as f64;
    let per_sample = out.sample_len();
    let mut total = 0.0;
    let mut seed = Vec::with_capacity(out.len());
    for (i, (&s, &zv)) in out.data().iter().zip(z.data()).enumerate() {
        let sigma = p.sigma[i / per_sample];
        let s = s.as_f64();
        let (r, ds) = match weighting {
            LossWeighting::Unweighted => {
                let r = s + zv / sigma;
                (r, 2.0 * r / n)
            }
            LossWeighting::SigmaSquared => {
                let r = sigma * s + zv;
                (r, 2.0 * sigma * r / n)
            }
        };
        total += r * r;
        seed.push(T::lit(ds));
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at t = {:?}, sigma = {:?}", p.t, p.sigma)));
    }
    let grads = g.backward(rec.output, Tensor::from_vec(out.dims(), seed)?)?;
    Ok((loss, grads))
}

/// `ema ← d·ema + (1 − d)·params`.
pub fn ema_update<T: Real>(ema: &mut ParamStore<T>, params: &ParamStore<T>, decay: f64) {
    let d = T::lit(decay);
    let one_minus = T::lit(1.0 - decay);
    for (e, p) in ema.values_mut().iter_mut().zip(params.values()) {
        for (e, &p) in e.iter_mut().zip(p) {
            *e = d * *e + one_minus * p;
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState<T: Real> {
    pub step: u64,
    pub model: ScoreModel<T>,
    pub ema: ParamStore<T>,
    pub optimizer: Adam<T>,
    pub rng: SeededRng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
    pub skipped: bool,
}

impl<T: Real> TrainState<T> {
    /// Fresh state; the EMA shadow starts equal to the weights.
    pub fn new(model: ScoreModel<T>, cfg: &TrainConfig) -> Self {
        Self {
            step: 0,
            ema: model.params().clone(),
            optimizer: Adam::new(cfg.adam(), model.params()),
            model,
            rng: seeded(derive_seed(cfg.seed, "train")),
        }
    }

    /// One Adam step on the DSM loss of `batch`, then the EMA update. A
    /// non-finite gradient skips the update (or fails in strict mode).
    pub fn train_step(&mut self, batch: &[TrainExample], cfg: &TrainConfig) -> Result<StepOutcome> {
        let sde = self.model.config().sde;
        let p = perturb(batch, &sde, &mut self.rng)?;
        self.apply(batch, &p, cfg)
    }

    /// As [`TrainState::train_step`] with a given perturbation.
    pub fn apply(&mut self, batch: &[TrainExample], p: &Perturbation, cfg: &TrainConfig) -> Result<StepOutcome> {
        let (loss, grads) = loss_and_gradients(&self.model, batch, p, cfg.loss_weighting)?;
        let grad_norm = grads.norm();
        if !grads.is_finite() || !grad_norm.is_finite() {
            let msg = format!("non-finite gradient at step {} (t = {:?})", self.step + 1, p.t);
            if cfg.strict {
                return Err(Error::NonFinite(msg));
            }
            warn!("{msg}; step skipped");
            self.step += 1;
            return Ok(StepOutcome { loss, grad_norm, skipped: true });
        }
        self.optimizer.update(self.model.params_mut(), &grads.params);
        ema_update(&mut self.ema, self.model.params(), cfg.ema_decay);
        self.step += 1;
        Ok(StepOutcome { loss, grad_norm, skipped: false })
    }

    /// The network with EMA weights, used for validation and sampling.
    pub fn ema_model(&self) -> Result<ScoreModel<T>> {
        self.model.with_params(self.ema.clone())
    }
}

/// Index of the best validation score; ties go to the later entry and
/// NaN never wins.
pub fn select_checkpoint(history: &[f64]) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::Empty("validation history".into()));
    }
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        let b = history[best];
        if !v.is_nan() && (b.is_nan() || v >= b) {
            best = i;
        }
    }
    Ok(best)
}

/// Utterances and noise available to a training run.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: Vec<UtterancePair>,
    pub val: Vec<UtterancePair>,
    pub noises: Vec<NoiseSource>,
    pub stft: StftConfig,
}

impl TrainingData {
    /// Draws a batch of random crops of random mixtures.
    pub fn batch<R: Rng + ?Sized>(&self, cfg: &TrainConfig, rng: &mut R) -> Result<Vec<TrainExample>> {
        if self.train.is_empty() {
            return Err(Error::Empty("training utterances".into()));
        }
        (0..cfg.batch_size)
            .map(|_| {
                let pair = &self.train[rng.random_range(0..self.train.len())];
                let m = random_training_mixture(pair, &self.noises, cfg.snr_range_db, rng)?;
                training_example(&m, &self.stft, rng.random(), cfg.zero_bone)
            })
            .collect()
    }

    /// Fixed validation mixtures: one network-width segment each, drawn
    /// once from the run seed.
    pub fn validation_set(&self, cfg: &TrainConfig) -> Result<Vec<crate::datagen::MixtureSample>> {
        if self.val.is_empty() {
            return Err(Error::Empty("validation utterances".into()));
        }
        let mut rng = seeded(derive_seed(cfg.seed, "validation"));
        (0..cfg.val_utterances)
            .map(|i| {
                let pair = &self.val[i % self.val.len()];
                let m = random_training_mixture(pair, &self.noises, cfg.snr_range_db, &mut rng)?;
                Ok(crop_sample(&m, &self.stft, self.stft.n_frames_target, &mut rng))
            })
            .collect()
    }
}

/// Mean SI-SDR of enhanced validation segments.
pub fn validate_model<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    set: &[crate::datagen::MixtureSample],
    stft: &StftConfig,
    sde: &SdeParams,
    reverse_steps: usize,
    zero_bone: bool,
    seed: u64,
) -> Result<f64> {
    let ids: Vec<String> = (0..set.len()).map(|i| format!("val{i}")).collect();
    let inputs: Vec<EnhanceInput<'_>> = set
        .iter()
        .zip(&ids)
        .map(|(m, id)| EnhanceInput { id, mixture: &m.mixture, bone: &m.pair.bone })
        .collect();
    let sampler = SamplerConfig { n_steps: reverse_steps, seed, ..Default::default() };
    let out = enhance_many(score_fn, &inputs, stft, &sampler, sde, zero_bone)?;
    let scores = out
        .iter()
        .zip(set)
        .map(|(e, m)| si_sdr(e, &m.pair.air))
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationRecord {
    pub step: u64,
    pub si_sdr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub validations: Vec<ValidationRecord>,
    pub best_step: u64,
    /// Selected checkpoint (EMA weights of the best validation round).
    pub best: Checkpoint<f32>,
    pub skipped_steps: u64,
    pub manifest: serde_json::Value,
}

pub const TRAIN_LOG: &str = "train_log.csv";
pub const TRAIN_MANIFEST: &str = "manifest.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Runs training from scratch. When `out_dir` is given it receives the
/// CSV log, a checkpoint per validation round, the selected checkpoint and
/// the run manifest.
pub fn train(
    model_cfg: &ScoreModelConfig,
    cfg: &TrainConfig,
    data: &TrainingData,
    out_dir: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    model_cfg.validate()?;
    data.stft.validate()?;
    if (model_cfg.input_height, model_cfg.input_width) != (data.stft.bins(), data.stft.n_frames_target) {
        return Err(Error::Shape(format!(
            "model input {}x{} does not match front-end {}x{}",
            model_cfg.input_height,
            model_cfg.input_width,
            data.stft.bins(),
            data.stft.n_frames_target
        )));
    }
    let sde = model_cfg.sde;
    let model: ScoreModel<f32> = ScoreModel::build(model_cfg.clone(), &mut seeded(derive_seed(cfg.seed, "init")))?;
    let mut state = TrainState::new(model, cfg);
    let mut data_rng = seeded(derive_seed(cfg.seed, "data"));
    let val_set = data.validation_set(cfg)?;
    let val_seed = derive_seed(cfg.seed, "val-sampler");

    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(TRAIN_LOG);
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(f, "step,loss,val_metric").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };

    let mut losses = Vec::with_capacity(cfg.max_steps as usize);
    let mut validations = Vec::new();
    let mut checkpoints: Vec<(u64, Option<PathBuf>, Option<String>)> = Vec::new();
    let mut best: Option<(u64, Checkpoint<f32>)> = None;
    let mut skipped = 0;
    let started = std::time::Instant::now();
    while state.step < cfg.max_steps {
        let batch = data.batch(cfg, &mut data_rng)?;
        let outcome = state.train_step(&batch, cfg)?;
        skipped += u64::from(outcome.skipped);
        losses.push(outcome.loss);
        let step = state.step;
        let mut val_metric = None;
        if step % cfg.val_every == 0 || step == cfg.max_steps {
            let ema = state.ema_model()?;
            let v = validate_model(&ema, &val_set, &data.stft, &sde, cfg.val_reverse_steps, cfg.zero_bone, val_seed)?;
            info!(
                "step {step}: loss {:.4}, validation SI-SDR {v:.2} dB ({:.0} s)",
                outcome.loss,
                started.elapsed().as_secs_f64()
            );
            validations.push(ValidationRecord { step, si_sdr: v });
            val_metric = Some(v);
            let ckpt = checkpoint(&state, cfg, &data.stft, step, v);
            let (path, hash) = match out_dir {
                Some(dir) => {
                    let path = dir.join(format!("step{step:07}.ckpt"));
                    let hash = save_checkpoint(&path, &ckpt)?;
                    (Some(path), Some(hash))
                }
                None => (None, None),
            };
            checkpoints.push((step, path, hash));
            let history: Vec<f64> = validations.iter().map(|r| r.si_sdr).collect();
            if select_checkpoint(&history)? == history.len() - 1 {
                best = Some((step, ckpt));
            }
        }
        if let Some((f, path)) = log.as_mut() {
            let val = val_metric.map_or_else(String::new, |v| format!("{v:.6}"));
            writeln!(f, "{step},{:.6},{val}", outcome.loss).map_err(|e| Error::io(path.as_path(), e))?;
            if val_metric.is_some() {
                f.flush().map_err(|e| Error::io(path.as_path(), e))?;
            }
        }
    }
    if let Some((mut f, path)) = log {
        f.flush().map_err(|e| Error::io(&path, e))?;
    }

    let (best_step, best_ckpt) = best.ok_or_else(|| Error::Empty("validation history".into()))?;
    let best_hash = match out_dir {
        Some(dir) => Some(save_checkpoint(dir.join(BEST_CHECKPOINT), &best_ckpt)?),
        None => None,
    };
    let manifest = serde_json::json!({
        "model_config": model_cfg,
        "train_config": cfg,
        "stft": data.stft,
        "adam": {
            "learning_rate": cfg.learning_rate,
            "beta1": cfg.adam_beta1,
            "beta2": cfg.adam_beta2,
            "eps": cfg.adam_eps,
            "clip_norm": cfg.clip_norm,
        },
        "seeds": {
            "master": cfg.seed,
            "init": derive_seed(cfg.seed, "init"),
            "data": derive_seed(cfg.seed, "data"),
            "train": derive_seed(cfg.seed, "train"),
            "validation": derive_seed(cfg.seed, "validation"),
            "val_sampler": val_seed,
        },
        "data": {
            "train_utterances": data.train.len(),
            "val_utterances": data.val.len(),
            "noises": data.noises.iter().map(|n| n.id.clone()).collect::<Vec<_>>(),
        },
        "validation_metric": "si_sdr",
        "validations": validations,
        "skipped_steps": skipped,
        "best_step": best_step,
        "best_checkpoint": best_hash.as_ref().map(|h| serde_json::json!({"file": BEST_CHECKPOINT, "sha256": h})),
        "checkpoints": checkpoints.iter().filter_map(|(s, p, h)| {
            Some(serde_json::json!({"step": s, "file": p.as_ref()?.file_name()?.to_string_lossy(), "sha256": h}))
        }).collect::<Vec<_>>(),
        "final_loss": losses.last(),
    });
    if let Some(dir) = out_dir {
        let path = dir.join(TRAIN_MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainReport {
        losses,
        validations,
        best_step,
        best: best_ckpt,
        skipped_steps: skipped,
        manifest,
    })
}

fn checkpoint(state: &TrainState<f32>, cfg: &TrainConfig, stft: &StftConfig, step: u64, val: f64) -> Checkpoint<f32> {
    Checkpoint {
        config: state.model.config().clone(),
        params: state.model.params().clone(),
        ema: Some(state.ema.clone()),
        metadata: serde_json::json!({
            "step": step,
            "val_si_sdr": val,
            "zero_bone": cfg.zero_bone,
            "seed": cfg.seed,
            "stft": stft,
        }),
    }
}

/// Front-end the checkpoint was trained with, if recorded.
pub fn checkpoint_stft<T: Real>(ckpt: &Checkpoint<T>) -> Option<StftConfig> {
    serde_json::from_value(ckpt.metadata.get("stft")?.clone()).ok()
}

/// Whether a checkpoint was trained with the bone input zeroed.
pub fn checkpoint_zero_bone<T: Real>(ckpt: &Checkpoint<T>) -> bool {
    ckpt.metadata.get("zero_bone").and_then(|v| v.as_bool()).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_selection() {
        assert_eq!(select_checkpoint(&[2.0, 2.4, 2.1]).unwrap(), 1);
        assert_eq!(select_checkpoint(&[1.0, 2.0, 3.0]).unwrap(), 2);
        assert_eq!(select_checkpoint(&[5.0]).unwrap(), 0);
        assert_eq!(select_checkpoint(&[3.0, 1.0, 3.0]).unwrap(), 2);
        assert_eq!(select_checkpoint(&[f64::NAN, 1.0, f64::NAN]).unwrap(), 1);
        assert!(select_checkpoint(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        assert!(TrainConfig { ema_decay: 0.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert_eq!("sigma_squared".parse::<LossWeighting>().unwrap(), LossWeighting::SigmaSquared);
    }

    #[test]
    fn ema_follows_the_recurrence() {
        let mut a = ParamStore::<f64>::new();
        a.insert(bcdm_nn::ParamSpec::new("w", &[2]), vec![1.0, -1.0]).unwrap();
        let mut ema = a.zeros_like();
        for _ in 0..3 {
            ema_update(&mut ema, &a, 0.999);
        }
        let want = 1.0 - 0.999f64.powi(3);
        assert!((ema.values()[0][0] - want).abs() < 1e-15);
        assert!((ema.values()[0][1] + want).abs() < 1e-15);
    }
}
