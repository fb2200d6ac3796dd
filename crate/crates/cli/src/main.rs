//! `bcdm`: batch command line for data synthesis, training, enhancement,
//! evaluation and diagnostics.
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a usage or
//! configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use num_complex::Complex64;
use serde::Serialize;

use bcdm_core::datagen::{
    load_noise_dir, load_paired_corpus, make_test_subsets, write_corpus, Split, SyntheticCorpusConfig,
};
use bcdm_core::dsp::{read_wav, write_wav, StftConfig, WavFormat};
use bcdm_core::eval::{evaluate_dirs, plot_sweep_svg, write_sweep_csv, DEFAULT_SWEEP_STEPS};
use bcdm_core::experiment::{segment_subsets, sweep_steps, toy_data, ToyDataConfig};
use bcdm_core::model::{load_checkpoint, Checkpoint, ModelSize, ScoreModelConfig, Strategy};
use bcdm_core::pipeline::{enhance_many_traced, EnhanceInput};
use bcdm_core::sampler::{SamplerConfig, SamplerMode};
use bcdm_core::sde::{kernel_check, MonteCarloConfig, SdeParams};
use bcdm_core::train::{checkpoint_stft, checkpoint_zero_bone, train, LossWeighting, TrainConfig, TrainingData};

/// Bone-conduction conditioned diffusion speech enhancement.
#[derive(Debug, Parser)]
#[command(name = "bcdm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic paired air/bone corpus and noise recordings.
    SynthData(SynthDataArgs),
    /// Train a score model on a paired corpus.
    Train(TrainArgs),
    /// Enhance one noisy recording with its bone-conducted companion.
    Enhance(EnhanceArgs),
    /// Score a directory of estimates against a directory of references.
    Evaluate(EvaluateArgs),
    /// Compare the closed-form forward kernel with Monte-Carlo simulation.
    VerifySde(VerifySdeArgs),
    /// Enhance a held-out subset for several reverse step counts.
    SweepSteps(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthDataArgs {
    /// Output directory; receives `corpus/`, `noise/train/`, `noise/test/`
    /// and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    train_speakers: usize,
    #[arg(long, default_value_t = 2)]
    val_speakers: usize,
    #[arg(long, default_value_t = 2)]
    test_speakers: usize,
    #[arg(long, default_value_t = 10)]
    utterances_per_speaker: usize,
    #[arg(long, default_value_t = 1.0)]
    min_duration: f64,
    #[arg(long, default_value_t = 3.0)]
    max_duration: f64,
    #[arg(long, default_value_t = 8000)]
    sample_rate: u32,
    /// Length of each noise recording in seconds.
    #[arg(long, default_value_t = 30.0)]
    noise_seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus root (`<speaker>/{air,bone}/<utt>.wav` plus `splits.json`).
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of noise WAV files.
    #[arg(long)]
    noise: PathBuf,
    /// Run directory for the log, checkpoints and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Conditioning strategy: ic, dc or mixture_only.
    #[arg(long, default_value = "ic")]
    strategy: String,
    /// Model size: toy (8 kHz front-end), s or l (16 kHz front-end).
    #[arg(long, default_value = "toy")]
    size: String,
    /// TOML file with training settings; flags given explicitly win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    val_every: Option<u64>,
    #[arg(long)]
    val_utterances: Option<usize>,
    /// Gradient-norm clipping threshold.
    #[arg(long)]
    clip: Option<f64>,
    /// Loss weighting: sigma_squared or unweighted.
    #[arg(long)]
    weighting: Option<String>,
    /// Replace the bone input with zeros (mixture-only ablation).
    #[arg(long)]
    zero_bone: bool,
    /// Abort on a non-finite loss instead of skipping the step.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
struct SamplerArgs {
    /// Reverse steps N.
    #[arg(long, default_value_t = 60)]
    steps: usize,
    /// Sampler: pc or ode.
    #[arg(long, default_value = "pc")]
    mode: String,
    #[arg(long, default_value_t = 0.5)]
    corrector_snr: f64,
    #[arg(long, default_value_t = 1)]
    corrector_steps: usize,
    /// Finish with one noise-free predictor step down to t = 0.
    #[arg(long)]
    final_mean: bool,
    /// Start from the mixture instead of sampling the prior.
    #[arg(long)]
    deterministic_prior: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplerArgs {
    fn config(&self, record_trajectory: bool) -> Result<SamplerConfig, Failure> {
        let cfg = SamplerConfig {
            n_steps: self.steps,
            mode: self.mode.parse::<SamplerMode>().usage()?,
            corrector_steps: self.corrector_steps,
            corrector_snr: self.corrector_snr,
            final_mean: self.final_mean,
            deterministic_prior: self.deterministic_prior,
            record_trajectory,
            seed: self.seed,
        };
        cfg.validate().usage()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    /// Noisy air-conducted recording.
    #[arg(long = "in")]
    input: PathBuf,
    /// Bone-conducted recording of the same length and rate.
    #[arg(long)]
    bone: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Output WAV; defaults to `<input stem>_enhanced.wav` beside the input.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-step state norms as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "report")]
    stem: String,
    /// SNR centre recorded on every row.
    #[arg(long, allow_hyphen_values = true)]
    snr_center: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifySdeArgs {
    /// CSV with columns t, analytic_mean_err, analytic_std_err, pass.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma_min: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma_max: f64,
    /// Mean tolerance in standard errors.
    #[arg(long, default_value_t = 3.0)]
    max_mean_se: f64,
    /// Relative tolerance on the standard deviation.
    #[arg(long, default_value_t = 0.02)]
    max_std_rel: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Checkpoint, optionally `label=path`; repeat for several models.
    #[arg(long, required = true)]
    ckpt: Vec<String>,
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of noise WAV files used for the test mixtures.
    #[arg(long)]
    noise: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated step counts.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_STEPS.to_vec())]
    n_list: Vec<usize>,
    /// SNR centre of the test subset in dB.
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    center: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Use at most this many test utterances.
    #[arg(long)]
    max_utterances: Option<usize>,
    /// Evaluate one network-width segment per utterance.
    #[arg(long)]
    segments: bool,
    /// Metric drawn in the SVG plot.
    #[arg(long, default_value = "si_sdr")]
    plot_metric: String,
    /// Fail on the first utterance the sampler cannot enhance.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 0)]
    subset_seed: u64,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn synth_data(a: SynthDataArgs) -> Result<(), Failure> {
    let cfg = ToyDataConfig {
        corpus: SyntheticCorpusConfig {
            train_speakers: a.train_speakers,
            val_speakers: a.val_speakers,
            test_speakers: a.test_speakers,
            utterances_per_speaker: a.utterances_per_speaker,
            min_duration_s: a.min_duration,
            max_duration_s: a.max_duration,
            sample_rate: a.sample_rate,
            seed: a.seed,
        },
        noise_seconds: a.noise_seconds,
        seed: a.seed,
    };
    if !(a.noise_seconds > 0.0 && a.noise_seconds >= a.max_duration) {
        return Err(Failure::Usage(anyhow!("--noise-seconds must cover --max-duration")));
    }
    let stft = StftConfig { sample_rate: a.sample_rate, ..StftConfig::toy() };
    let data = toy_data(&cfg, stft).usage()?;
    let corpus = a.out.join("corpus");
    let pairs: Vec<_> = data.training.train.iter().chain(&data.training.val).chain(&data.test).cloned().collect();
    write_corpus(&corpus, &data.manifest, &pairs)?;
    for (sub, bank) in [("train", &data.training.noises), ("test", &data.test_noises)] {
        let dir = a.out.join("noise").join(sub);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for n in bank {
            write_wav(dir.join(format!("{}.wav", n.id)), &n.waveform, WavFormat::Float32)?;
        }
    }
    write_json(
        &a.out.join("manifest.json"),
        &serde_json::json!({"command": "synth-data", "config": cfg, "utterances": pairs.len(), "splits": data.manifest}),
    )?;
    info!("wrote {} utterance pairs to {}", pairs.len(), corpus.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Failure> {
    let strategy: Strategy = a.strategy.parse().usage()?;
    let size: ModelSize = a.size.parse().usage()?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
            toml::from_str::<TrainConfig>(&text).usage()?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.steps {
        cfg.max_steps = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.val_every {
        cfg.val_every = v;
    }
    if let Some(v) = a.val_utterances {
        cfg.val_utterances = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(w) = &a.weighting {
        cfg.loss_weighting = w.parse::<LossWeighting>().usage()?;
    }
    if a.clip.is_some() {
        cfg.clip_norm = a.clip;
    }
    cfg.zero_bone |= a.zero_bone;
    cfg.strict |= a.strict;
    cfg.validate().usage()?;
    let model_cfg = ScoreModelConfig::preset(strategy, size);
    model_cfg.validate().usage()?;
    let stft = match size {
        ModelSize::Toy => StftConfig::toy(),
        _ => StftConfig::default(),
    };

    let train_pairs = load_paired_corpus(&a.corpus, Split::Train)?.pairs;
    let val_pairs = load_paired_corpus(&a.corpus, Split::Val)?.pairs;
    let noises = load_noise_dir(&a.noise, stft.sample_rate)?;
    let data = TrainingData { train: train_pairs, val: val_pairs, noises, stft };
    info!(
        "training {strategy} ({} parameters) on {} utterances, validating on {}",
        bcdm_core::model::param_count(&model_cfg)?,
        data.train.len(),
        data.val.len()
    );
    let report = train(&model_cfg, &cfg, &data, Some(&a.out))?;
    info!(
        "best step {} with validation SI-SDR {:.2} dB; {} steps skipped",
        report.best_step,
        report.validations.iter().find(|v| v.step == report.best_step).map_or(f64::NAN, |v| v.si_sdr),
        report.skipped_steps
    );
    Ok(())
}

fn front_end(ckpt: &Checkpoint<f32>) -> Result<StftConfig, Failure> {
    checkpoint_stft(ckpt).ok_or_else(|| Failure::Usage(anyhow!("checkpoint does not record its front-end")))
}

fn enhance_cmd(a: EnhanceArgs) -> Result<(), Failure> {
    let sampler = a.sampler.config(a.trajectory.is_some())?;
    let (ckpt, hash) = load_checkpoint::<f32>(&a.ckpt).usage()?;
    let stft = front_end(&ckpt)?;
    let zero_bone = checkpoint_zero_bone(&ckpt);
    let model = ckpt.sampling_model()?;
    let mixture = read_wav(&a.input)?;
    let bone = read_wav(&a.bone)?;
    let id = a.input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let input = EnhanceInput { id: &id, mixture: &mixture, bone: &bone };
    let (mut out, trace) = enhance_many_traced(&model, &[input], &stft, &sampler, &ckpt.config.sde, zero_bone)?;
    let out_path = a
        .out
        .unwrap_or_else(|| a.input.with_file_name(format!("{id}_enhanced.wav")));
    write_wav(&out_path, &out.remove(0), WavFormat::Float32)?;
    if let Some(p) = &a.trajectory {
        trace.write_trajectory_csv(p)?;
    }
    write_json(
        &out_path.with_extension("json"),
        &serde_json::json!({
            "command": "enhance",
            "input": a.input,
            "bone": a.bone,
            "checkpoint": a.ckpt,
            "checkpoint_sha256": hash,
            "sampler": format!("{sampler:?}"),
            "score_calls": trace.score_calls,
        }),
    )?;
    info!("wrote {}", out_path.display());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<(), Failure> {
    if !a.estimates.is_dir() || !a.references.is_dir() {
        return Err(Failure::Usage(anyhow!("--estimates and --references must be directories")));
    }
    let probe = first_wav(&a.estimates)?;
    let rate = read_wav(&probe)?.sample_rate;
    let stft = if rate == StftConfig::toy().sample_rate {
        StftConfig::toy()
    } else {
        StftConfig { sample_rate: rate, ..StftConfig::default() }
    };
    let scratch = a.out.join("scratch");
    let mut report = evaluate_dirs(&a.estimates, &a.references, &stft, a.snr_center, Some(&scratch))?;
    report.metadata.insert("command".into(), "evaluate".into());
    let written = report.write(&a.out, &a.stem)?;
    if scratch.is_dir() {
        std::fs::remove_dir_all(&scratch).ok();
    }
    for ((center, metric), s) in report.aggregate() {
        println!("{center}\t{metric}\t{:.3} ± {:.3} (n={})", s.mean, s.std, s.count);
    }
    info!("wrote {}", written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    Ok(())
}

fn first_wav(dir: &Path) -> Result<PathBuf, Failure> {
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&d)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                return Ok(p);
            }
        }
    }
    Err(Failure::Usage(anyhow!("no WAV files under {}", dir.display())))
}

fn verify_sde(a: VerifySdeArgs) -> Result<(), Failure> {
    let params = SdeParams { gamma: a.gamma, sigma_min: a.sigma_min, sigma_max: a.sigma_max, ..SdeParams::default() };
    params.validate().usage()?;
    if a.steps % 10 != 0 {
        return Err(Failure::Usage(anyhow!("--steps must be a multiple of 10")));
    }
    let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let mc = MonteCarloConfig { paths: a.paths, steps: a.steps, seed: a.seed, ..MonteCarloConfig::default() };
    let rows = kernel_check(Complex64::new(1.0, -0.5), Complex64::new(-0.3, 0.2), &params, mc, &times).usage()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["t", "analytic_mean_err", "analytic_std_err", "pass"])?;
    let mut failed = 0;
    for r in &rows {
        let pass = r.passes(a.max_mean_se, a.max_std_rel);
        failed += usize::from(!pass);
        w.write_record([
            format!("{:.1}", r.t),
            format!("{:.6}", r.mean_err_se),
            format!("{:.6}", r.std_rel_err),
            pass.to_string(),
        ])?;
    }
    w.flush()?;
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failed} of {} times outside tolerance; see {}",
            rows.len(),
            a.out.display()
        )));
    }
    info!("kernel matches Monte-Carlo at all {} times", rows.len());
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Failure> {
    let sampler = a.sampler.config(false)?;
    if a.n_list.is_empty() || a.n_list.contains(&0) {
        return Err(Failure::Usage(anyhow!("--n-list needs positive step counts")));
    }
    let mut models = Vec::new();
    for spec in &a.ckpt {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (Some(l.to_string()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let (ckpt, hash) = load_checkpoint::<f32>(&path).with_context(|| format!("loading {}", path.display())).usage()?;
        let zero_bone = checkpoint_zero_bone(&ckpt);
        let label = label.unwrap_or_else(|| {
            format!("{}{}", ckpt.config.strategy, if zero_bone { "-zero-bone" } else { "" })
        });
        models.push((label, path, hash, ckpt, zero_bone));
    }
    let stft = front_end(&models[0].3)?;
    if models.iter().any(|m| checkpoint_stft(&m.3) != Some(stft)) {
        return Err(Failure::Usage(anyhow!("all checkpoints must share one front-end")));
    }

    let mut pairs = load_paired_corpus(&a.corpus, Split::Test)?.pairs;
    if let Some(n) = a.max_utterances {
        pairs.truncate(n);
    }
    let noises = load_noise_dir(&a.noise, stft.sample_rate)?;
    let (subsets, subset_manifest) = if a.segments {
        segment_subsets(&pairs, &noises, &stft, &[a.center], a.sigma, a.subset_seed)?
    } else {
        make_test_subsets(&pairs, &noises, &[a.center], a.sigma, a.subset_seed)?
    };
    std::fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("subset.json"), &subset_manifest)?;

    let mut rows = Vec::new();
    for (label, _, _, ckpt, zero_bone) in &models {
        info!("sweeping {label} over {:?}", a.n_list);
        let model = ckpt.sampling_model()?;
        rows.extend(sweep_steps(
            &model,
            label,
            &subsets[0].samples,
            &a.n_list,
            &stft,
            &sampler,
            &ckpt.config.sde,
            *zero_bone,
            a.strict,
        )?);
    }
    let csv_path = a.out.join("sweep.csv");
    write_sweep_csv(&csv_path, &rows)?;
    plot_sweep_svg(&a.out.join(format!("sweep_{}.svg", a.plot_metric)), &rows, &a.plot_metric)?;
    write_json(
        &a.out.join("manifest.json"),
        &serde_json::json!({
            "command": "sweep-steps",
            "checkpoints": models.iter().map(|m| serde_json::json!({"label": m.0, "path": m.1, "sha256": m.2})).collect::<Vec<_>>(),
            "n_list": a.n_list,
            "center_db": a.center,
            "sigma_db": a.sigma,
            "utterances": subsets[0].samples.len(),
            "segments": a.segments,
            "sampler": format!("{sampler:?}"),
        }),
    )?;
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    if failures > 0 {
        log::warn!("{failures} utterance enhancements failed and were excluded");
    }
    info!("wrote {}", csv_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Enhance(a) => enhance_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::VerifySde(a) => verify_sde(a),
        Command::SweepSteps(a) => sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
