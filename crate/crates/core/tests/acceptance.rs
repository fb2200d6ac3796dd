//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. Tolerances are pinned below.

mod common;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use bcdm_core::datagen::{mix_at_snr, realized_snr_db, synthesize_corpus, write_corpus, MixtureSample, SyntheticCorpusConfig, TestSubset};
use bcdm_core::dsp::{istft, stft, StftConfig, Waveform};
use bcdm_core::eval::{median, write_sweep_csv, DEFAULT_SWEEP_STEPS};
use bcdm_core::experiment::{median_enhanced, median_improvement, score_samples, segment_subsets, sweep_steps, toy_data, ToyData, ToyDataConfig};
use bcdm_core::model::{Checkpoint, ModelSize, ScoreModel, ScoreModelConfig, Strategy};
use bcdm_core::pipeline::TrainExample;
use bcdm_core::rng::{complex_normal, seeded, standard_normal};
use bcdm_core::sampler::{pc_sample, GaussianOracle, SamplerConfig};
use bcdm_core::sde::{gaussian_score, kernel_check, monte_carlo_moments, perturbation_mean, MonteCarloConfig, SdeParams};
use bcdm_core::train::{perturb, train, weighted_loss, LossWeighting, TrainConfig};
use bcdm_core::ComplexSpectrogram;
use common::{gradient_check, random_batch, randomize, small_toy};

// Criterion 1.
const MC_PATHS: usize = 100_000;
const MC_STEPS: usize = 2000;
const MC_MAX_MEAN_SE: f64 = 3.0;
const MC_MAX_STD_REL: f64 = 0.02;
const MC_MAX_RUNTIME: Duration = Duration::from_secs(120);
// Criterion 2.
const ORACLE_BATCHES: usize = 100;
const ORACLE_MAX_LOSS: f64 = 1e-20;
// Criterion 3.
const FD_MIN_CHECKED: usize = 100;
const FD_MAX_REL_ERR: f64 = 1e-4;
// Criterion 4.
const SAMPLER_SEEDS: u64 = 100;
const SAMPLER_MAX_REL_ERR: f64 = 0.1;
// Criterion 5.
const STFT_MAX_REL_ERR: f64 = 1e-6;
const STFT_BINS: usize = 256;
// Criterion 6.
const MIXTURES: usize = 1000;
const MIX_MAX_ERR_DB: f64 = 0.01;
// Criterion 7.
const TOY_STEPS: u64 = 600;
const TOY_LEARNING_RATE: f64 = 5e-4;
const TOY_EMA_DECAY: f64 = 0.99;
const TOY_VAL_EVERY: u64 = 200;
const TOY_TEST_UTTERANCES: usize = 16;
const TOY_REVERSE_STEPS: usize = 60;
const MIN_IMPROVEMENT_DB: f64 = 5.0;
const SUBSET_SIGMA_DB: f64 = 1.0;
// Criterion 8.
const SWEEP_UTTERANCES: usize = 8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn sde_kernel() -> Outcome {
    let times: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let cfg = MonteCarloConfig { paths: MC_PATHS, steps: MC_STEPS, ..Default::default() };
    let start = Instant::now();
    let rows = kernel_check(Complex64::new(1.0, -0.5), Complex64::new(-0.3, 0.2), &SdeParams::default(), cfg, &times).unwrap();
    let elapsed = start.elapsed();
    let worst_mean = rows.iter().map(|r| r.mean_err_se).fold(0.0, f64::max);
    let worst_std = rows.iter().map(|r| r.std_rel_err).fold(0.0, f64::max);
    let pass = rows.iter().all(|r| r.passes(MC_MAX_MEAN_SE, MC_MAX_STD_REL)) && elapsed < MC_MAX_RUNTIME;
    outcome(
        pass,
        format!(
            "worst mean error {worst_mean:.2} SE (<= {MC_MAX_MEAN_SE}), worst std error {:.3}% (<= {}%), {:.1} s (< {} s)",
            100.0 * worst_std,
            100.0 * MC_MAX_STD_REL,
            elapsed.as_secs_f64(),
            MC_MAX_RUNTIME.as_secs()
        ),
    )
}

fn score_target_identity() -> Outcome {
    let sde = SdeParams::default();
    let mut rng = seeded(1);
    let mut worst: f64 = 0.0;
    for _ in 0..ORACLE_BATCHES {
        let batch: Vec<TrainExample> = (0..4)
            .map(|_| {
                let mut spec = || ComplexSpectrogram::from_fn(8, 8, |_, _| complex_normal(&mut rng) * 0.3);
                TrainExample { x0: spec(), y: spec(), y_c: spec() }
            })
            .collect();
        let p = perturb(&batch, &sde, &mut rng).unwrap();
        let scores: Vec<_> = batch
            .iter()
            .zip(&p.x_t)
            .zip(p.t.iter().zip(&p.sigma))
            .map(|((ex, x), (&t, &sigma))| gaussian_score(x, &perturbation_mean(&ex.x0, &ex.y, t, &sde).unwrap(), sigma).unwrap())
            .collect();
        worst = worst.max(weighted_loss(&scores, &p, LossWeighting::Unweighted).unwrap());
    }
    outcome(
        worst < ORACLE_MAX_LOSS,
        format!("largest unweighted loss over {ORACLE_BATCHES} batches {worst:.2e} (< {ORACLE_MAX_LOSS:.0e})"),
    )
}

fn gradients() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for strategy in [Strategy::Ic, Strategy::Dc] {
        let mut m: ScoreModel<f64> = ScoreModel::build(small_toy(strategy, 16), &mut seeded(41)).unwrap();
        randomize(&mut m, 0.1, 42);
        let r = gradient_check(&m, &random_batch(m.config(), 2, 43), 44);
        pass &= r.checked >= FD_MIN_CHECKED && r.max_rel_err < FD_MAX_REL_ERR && r.negligible * 10 < r.checked;
        parts.push(format!("{strategy}: {} params, max rel err {:.2e}", r.checked, r.max_rel_err));
    }
    outcome(pass, format!("{} (need >= {FD_MIN_CHECKED}, < {FD_MAX_REL_ERR:.0e})", parts.join("; ")))
}

fn sampler_oracle() -> Outcome {
    let sde = SdeParams::default();
    let run = |n_steps: usize| -> (f64, bool) {
        let mut calls_ok = true;
        let errs: Vec<f64> = (0..SAMPLER_SEEDS)
            .map(|seed| {
                let mut rng = seeded(seed);
                let x0 = ComplexSpectrogram::from_fn(4, 4, |_, _| complex_normal(&mut rng));
                let y = x0.map(|v| v * 0.5).add(&ComplexSpectrogram::from_fn(4, 4, |_, _| complex_normal(&mut rng))).unwrap();
                let oracle = GaussianOracle { x0: vec![x0.clone()], sde };
                let cfg = SamplerConfig { n_steps, seed: 1000 + seed, ..Default::default() };
                let out = pc_sample(&oracle, &[y.clone()], &[y], &cfg, &sde).unwrap();
                calls_ok &= out.score_calls == 2 * n_steps;
                out.estimates[0].sub(&x0).unwrap().norm() / x0.norm()
            })
            .collect();
        (median(&errs), calls_ok)
    };
    let (e60, c60) = run(60);
    let (e5, c5) = run(5);
    outcome(
        e60 < SAMPLER_MAX_REL_ERR && e60 < e5 && c60 && c5,
        format!("median rel err N=60 {e60:.4} (< {SAMPLER_MAX_REL_ERR}), N=5 {e5:.4}; score calls == 2N: {}", c60 && c5),
    )
}

fn stft_round_trip() -> Outcome {
    let cfg = StftConfig::default();
    let mut rng = seeded(5);
    let w = Waveform::new((0..16_000).map(|_| standard_normal(&mut rng)).collect(), cfg.sample_rate).unwrap();
    let s = stft(&w, &cfg).unwrap();
    let back = istft(&s, &cfg, w.len()).unwrap();
    let interior = cfg.window_len..w.len() - cfg.window_len;
    let err: f64 = interior.clone().map(|i| (back.samples[i] - w.samples[i]).powi(2)).sum::<f64>();
    let norm: f64 = interior.map(|i| w.samples[i].powi(2)).sum::<f64>();
    let rel = (err / norm).sqrt();
    outcome(
        rel < STFT_MAX_REL_ERR && s.bins() == STFT_BINS && cfg.bins() == STFT_BINS,
        format!("interior rel err {rel:.2e} (< {STFT_MAX_REL_ERR:.0e}), {} bins (== {STFT_BINS})", s.bins()),
    )
}

fn snr_mixer() -> Outcome {
    let mut rng = seeded(6);
    let mut worst: f64 = 0.0;
    for _ in 0..MIXTURES {
        let len = rng.random_range(800..4000);
        let clean = Waveform::new((0..len).map(|_| 0.3 * standard_normal(&mut rng)).collect(), 8000).unwrap();
        let noise = Waveform::new((0..len + 500).map(|_| standard_normal(&mut rng)).collect(), 8000).unwrap();
        let snr = rng.random_range(-10.0..=20.0);
        let m = mix_at_snr(&clean, &noise, snr, &mut rng).unwrap();
        worst = worst.max((realized_snr_db(&clean, &m.mixture) - snr).abs());
    }
    outcome(worst <= MIX_MAX_ERR_DB, format!("{MIXTURES} mixtures in [-10, 20] dB, worst deviation {worst:.2e} dB (<= {MIX_MAX_ERR_DB})"))
}

struct Toy {
    data: ToyData,
    subsets: Vec<TestSubset>,
    models: Vec<(&'static str, Checkpoint<f32>, bool)>,
}

fn toy_train_config(zero_bone: bool) -> TrainConfig {
    TrainConfig {
        max_steps: TOY_STEPS,
        learning_rate: TOY_LEARNING_RATE,
        ema_decay: TOY_EMA_DECAY,
        val_every: TOY_VAL_EVERY,
        val_utterances: 8,
        zero_bone,
        seed: 11,
        ..Default::default()
    }
}

fn toy_models() -> Toy {
    let data = toy_data(&ToyDataConfig::default(), StftConfig::toy()).unwrap();
    let test = &data.test[..TOY_TEST_UTTERANCES.min(data.test.len())];
    let (subsets, _) = segment_subsets(test, &data.test_noises, &data.training.stft, &[-5.0, -10.0], SUBSET_SIGMA_DB, 7).unwrap();
    let mut models = Vec::new();
    for (label, strategy, zero_bone) in [("ic", Strategy::Ic, false), ("dc", Strategy::Dc, false), ("ablation", Strategy::Ic, true)] {
        let start = Instant::now();
        let cfg = ScoreModelConfig::preset(strategy, ModelSize::Toy);
        let report = train(&cfg, &toy_train_config(zero_bone), &data.training, None).unwrap();
        eprintln!(
            "trained {label} in {:.0} s; validation SI-SDR {:?}",
            start.elapsed().as_secs_f64(),
            report.validations.iter().map(|v| (v.step, (v.si_sdr * 100.0).round() / 100.0)).collect::<Vec<_>>()
        );
        models.push((label, report.best, zero_bone));
    }
    Toy { data, subsets, models }
}

fn subset(toy: &Toy, center: f64) -> &[MixtureSample] {
    &toy.subsets.iter().find(|s| s.center_db == center).unwrap().samples
}

fn toy_end_to_end(toy: &Toy) -> Outcome {
    let sampler = SamplerConfig { n_steps: TOY_REVERSE_STEPS, seed: 3, ..Default::default() };
    let stft = &toy.data.training.stft;
    let mut improvement = Vec::new();
    let mut at_minus10 = Vec::new();
    for (label, ckpt, zero_bone) in &toy.models {
        let model = ckpt.sampling_model().unwrap();
        let sde = ckpt.config.sde;
        if !zero_bone {
            let rows = score_samples(&model, subset(toy, -5.0), stft, &sampler, &sde, *zero_bone).unwrap();
            improvement.push((*label, median_improvement(&rows)));
        }
        let rows = score_samples(&model, subset(toy, -10.0), stft, &sampler, &sde, *zero_bone).unwrap();
        at_minus10.push((*label, median_enhanced(&rows)));
    }
    let ablation = at_minus10.iter().find(|m| m.0 == "ablation").unwrap().1;
    let pass = improvement.iter().all(|m| m.1 >= MIN_IMPROVEMENT_DB)
        && at_minus10.iter().filter(|m| m.0 != "ablation").all(|m| m.1 > ablation);
    let fmt = |v: &[(&str, f64)]| v.iter().map(|(l, x)| format!("{l} {x:.2}")).collect::<Vec<_>>().join(", ");
    outcome(
        pass,
        format!(
            "median improvement at -5 dB: {} (>= {MIN_IMPROVEMENT_DB}); median SI-SDR at -10 dB: {} (multimodal > ablation)",
            fmt(&improvement),
            fmt(&at_minus10)
        ),
    )
}

fn sweep(toy: &Toy) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let stft = &toy.data.training.stft;
    let base = SamplerConfig { seed: 3, ..Default::default() };
    let mut rows = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, ckpt, zero_bone) in toy.models.iter().filter(|m| m.0 == "ic") {
        let model = ckpt.sampling_model().unwrap();
        let samples = &subset(toy, -5.0)[..SWEEP_UTTERANCES];
        let r = sweep_steps(&model, label, samples, &DEFAULT_SWEEP_STEPS, stft, &base, &ckpt.config.sde, *zero_bone, true).unwrap();
        let si = |n: usize| r.iter().find(|x| x.metric == "si_sdr" && x.n_steps == n).unwrap().median;
        pass &= si(60) >= si(2);
        parts.push(format!("{label} N=2 {:.2}, N=60 {:.2}", si(2), si(60)));
        rows.extend(r);
    }
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &rows).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let mut well_formed = records.iter().all(|r| r.len() == header.len());
    for (label, _, _) in toy.models.iter().filter(|m| m.0 == "ic") {
        for metric in ["si_sdr", "lsd"] {
            let mine: Vec<&csv::StringRecord> =
                records.iter().filter(|r| &r[col("model")] == *label && &r[col("metric")] == metric).collect();
            let ns: Vec<usize> = mine.iter().map(|r| r[col("n_steps")].parse().unwrap()).collect();
            well_formed &= ns == DEFAULT_SWEEP_STEPS;
            well_formed &= mine.iter().all(|r| r[col("score_calls")].parse::<usize>().unwrap() == 2 * r[col("n_steps")].parse::<usize>().unwrap());
            well_formed &= mine.iter().all(|r| r[col("median")].parse::<f64>().is_ok_and(f64::is_finite));
        }
    }
    outcome(
        pass && well_formed,
        format!("median SI-SDR at -5 dB: {}; CSV one row per N per (model, metric) with 2N score calls: {well_formed}", parts.join("; ")),
    )
}

fn determinism(toy: &Toy) -> Outcome {
    let mut checks = Vec::new();

    let corpus = SyntheticCorpusConfig { train_speakers: 1, val_speakers: 1, test_speakers: 1, utterances_per_speaker: 2, seed: 5, ..Default::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (m, p) = synthesize_corpus(&corpus).unwrap();
        write_corpus(d.path(), &m, &p).unwrap();
    }
    let same_tree = walk(dirs[0].path()).into_iter().zip(walk(dirs[1].path())).all(|(a, b)| {
        a.0 == b.0 && a.1 == b.1
    }) && !walk(dirs[0].path()).is_empty();
    checks.push(("corpus files", same_tree));

    let same_data = {
        let a = toy_data(&ToyDataConfig::default(), StftConfig::toy()).unwrap();
        a.training.train == toy.data.training.train && a.test == toy.data.test && a.test_noises.iter().zip(&toy.data.test_noises).all(|(x, y)| x.waveform == y.waveform)
    };
    checks.push(("toy data", same_data));

    let mc = MonteCarloConfig { paths: 2000, steps: 100, ..Default::default() };
    let run = || monte_carlo_moments(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.5), &SdeParams::default(), mc, &[0.5, 1.0]).unwrap();
    checks.push(("monte carlo", run() == run()));

    let train_dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let short = TrainConfig { max_steps: 4, val_every: 2, val_utterances: 2, val_reverse_steps: 3, batch_size: 2, seed: 9, ..Default::default() };
    let cfg = ScoreModelConfig::preset(Strategy::Dc, ModelSize::Toy);
    for d in &train_dirs {
        train(&cfg, &short, &toy.data.training, Some(d.path())).unwrap();
    }
    let files = |d: &tempfile::TempDir| walk(d.path());
    checks.push(("training artifacts", files(&train_dirs[0]) == files(&train_dirs[1])));

    let (_, ckpt, zero_bone) = &toy.models[1];
    let model = ckpt.sampling_model().unwrap();
    let samples = &subset(toy, -5.0)[..4];
    let sampler = SamplerConfig { n_steps: 10, seed: 21, ..Default::default() };
    let enhance = || score_samples(&model, samples, &toy.data.training.stft, &sampler, &ckpt.config.sde, *zero_bone).unwrap();
    checks.push(("enhancement", enhance() == enhance()));

    let sweep_csv = || {
        let d = tempfile::tempdir().unwrap();
        let rows = sweep_steps(&model, "dc", samples, &[2, 5], &toy.data.training.stft, &sampler, &ckpt.config.sde, *zero_bone, true).unwrap();
        write_sweep_csv(&d.path().join("s.csv"), &rows).unwrap();
        std::fs::read(d.path().join("s.csv")).unwrap()
    };
    checks.push(("sweep CSV", sweep_csv() == sweep_csv()));

    let pass = checks.iter().all(|c| c.1);
    outcome(
        pass,
        checks.iter().map(|(n, ok)| format!("{n} {}", if *ok { "identical" } else { "DIFFER" })).collect::<Vec<_>>().join(", "),
    )
}

/// (relative path, bytes) of every file below `root`, sorted.
fn walk(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: u32| filter.as_deref().is_none_or(|f| f == n.to_string() || f == "acceptance");
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let start = Instant::now();
            let o = f();
            eprintln!("criterion {n} took {:.1} s", start.elapsed().as_secs_f64());
            println!("[{}] criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((n, name, o));
        }
    };
    run(1, "SDE kernel vs Monte-Carlo", &sde_kernel);
    run(2, "score-target identity", &score_target_identity);
    run(3, "gradient correctness", &gradients);
    run(4, "sampler oracle recovery", &sampler_oracle);
    run(5, "STFT round trip", &stft_round_trip);
    run(6, "SNR mixer identity", &snr_mixer);
    if wanted(7) || wanted(8) || wanted(9) {
        let start = Instant::now();
        let toy = toy_models();
        eprintln!("toy models trained in {:.0} s", start.elapsed().as_secs_f64());
        run(7, "toy end-to-end", &|| toy_end_to_end(&toy));
        run(8, "step sweep", &|| sweep(&toy));
        run(9, "determinism", &|| determinism(&toy));
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
