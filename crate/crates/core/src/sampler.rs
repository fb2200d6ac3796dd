//! Reverse-time samplers: Euler–Maruyama predictor with annealed Langevin
//! corrector, and the probability-flow ODE.
//!
//! Both integrate from `t = 1` down to `t_eps` on a uniform grid. The
//! reverse SDE of `dx = γ(y − x)dt + g(t)dw` stepped backwards by `Δ` is
//!
//! ```text
//! x ← x − γ(y − x)Δ + g(t)² s(x, t)Δ + g(t)√Δ z
//! ```
//!
//! and the probability-flow ODE uses half the score term and no noise.

use std::cell::Cell;
use std::path::Path;

use bcdm_nn::Real;
use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{from_tensor, to_tensor, ScoreBatch, ScoreModel};
use crate::rng::{complex_normal, derive_seed, seeded, SeededRng};
use crate::sde::{diffusion_coeff, perturbation_mean, perturbation_std, SdeParams};
use crate::spectrogram::ComplexSpectrogram;

/// Largest batch handed to the network in one forward pass.
const MAX_FORWARD_BATCH: usize = 8;

/// A score estimate `s(x_t, y, y_c, t)` evaluated for a batch sharing `t`.
pub trait ScoreFunction {
    fn score(
        &self,
        x_t: &[ComplexSpectrogram],
        y: &[ComplexSpectrogram],
        y_c: &[ComplexSpectrogram],
        t: f64,
    ) -> Result<Vec<ComplexSpectrogram>>;
}

impl<T: Real> ScoreFunction for ScoreModel<T> {
    fn score(
        &self,
        x_t: &[ComplexSpectrogram],
        y: &[ComplexSpectrogram],
        y_c: &[ComplexSpectrogram],
        t: f64,
    ) -> Result<Vec<ComplexSpectrogram>> {
        let mut out = Vec::with_capacity(x_t.len());
        for start in (0..x_t.len()).step_by(MAX_FORWARD_BATCH) {
            let end = (start + MAX_FORWARD_BATCH).min(x_t.len());
            let batch = ScoreBatch {
                x_t: tensor_range(x_t, start, end)?,
                y: tensor_range(y, start, end)?,
                y_c: tensor_range(y_c, start, end)?,
                t: vec![t; end - start],
            };
            out.extend(from_tensor(&self.forward_batch(&batch)?)?);
        }
        Ok(out)
    }
}

fn tensor_range<T: Real>(v: &[ComplexSpectrogram], start: usize, end: usize) -> Result<bcdm_nn::Tensor<T>> {
    to_tensor(&v[start..end].iter().collect::<Vec<_>>())
}

/// Exact score of the perturbation kernel around known clean targets:
/// `−(x − μ(t)) / σ(t)²`.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    pub x0: Vec<ComplexSpectrogram>,
    pub sde: SdeParams,
}

impl ScoreFunction for GaussianOracle {
    fn score(
        &self,
        x_t: &[ComplexSpectrogram],
        y: &[ComplexSpectrogram],
        _y_c: &[ComplexSpectrogram],
        t: f64,
    ) -> Result<Vec<ComplexSpectrogram>> {
        if x_t.len() != self.x0.len() {
            return Err(Error::Shape(format!("{} states for {} oracle targets", x_t.len(), self.x0.len())));
        }
        let std = perturbation_std(t, &self.sde)?;
        x_t.iter()
            .zip(&self.x0)
            .zip(y)
            .map(|((x, x0), y)| {
                let mean = perturbation_mean(x0, y, t, &self.sde)?;
                crate::sde::gaussian_score(x, &mean, std)
            })
            .collect()
    }
}

/// Wraps a score function and counts how many times it is evaluated.
pub struct CountingScore<'a, S: ?Sized> {
    inner: &'a S,
    calls: Cell<usize>,
}

impl<'a, S: ScoreFunction + ?Sized> CountingScore<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for CountingScore<'_, S> {
    fn score(
        &self,
        x_t: &[ComplexSpectrogram],
        y: &[ComplexSpectrogram],
        y_c: &[ComplexSpectrogram],
        t: f64,
    ) -> Result<Vec<ComplexSpectrogram>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.score(x_t, y, y_c, t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Pc,
    Ode,
}

impl std::str::FromStr for SamplerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pc" => Ok(SamplerMode::Pc),
            "ode" => Ok(SamplerMode::Ode),
            other => Err(Error::InvalidParam(format!("unknown sampler mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub mode: SamplerMode,
    pub corrector_steps: usize,
    /// Signal-to-noise ratio `r` of the Langevin corrector.
    pub corrector_snr: f64,
    /// Finish with one extra noise-free predictor step from `t_eps`.
    pub final_mean: bool,
    /// ODE only: start from `x_1 = y` instead of a prior draw.
    pub deterministic_prior: bool,
    /// Record `(t, ‖x‖)` after every step.
    pub record_trajectory: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 60,
            mode: SamplerMode::Pc,
            corrector_steps: 1,
            corrector_snr: 0.5,
            final_mean: false,
            deterministic_prior: false,
            record_trajectory: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParam("sampler needs at least one step".into()));
        }
        if !(self.corrector_snr > 0.0 && self.corrector_snr.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "corrector snr must be positive, got {}",
                self.corrector_snr
            )));
        }
        Ok(())
    }

    /// Score evaluations one trajectory costs.
    pub fn score_calls(&self) -> usize {
        let per_step = match self.mode {
            SamplerMode::Pc => 1 + self.corrector_steps,
            SamplerMode::Ode => 1,
        };
        self.n_steps * per_step + usize::from(self.final_mean)
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub estimates: Vec<ComplexSpectrogram>,
    /// Score-function evaluations per trajectory.
    pub score_calls: usize,
    /// `(step, t, item, ‖x‖)` rows when recording was requested.
    pub trajectory: Vec<(usize, f64, usize, f64)>,
}

impl SampleOutput {
    /// Writes the trajectory as CSV with columns `step,t,item,norm`.
    pub fn write_trajectory_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "t", "item", "norm"])?;
        for &(step, t, item, norm) in &self.trajectory {
            w.write_record([step.to_string(), format!("{t:.6}"), item.to_string(), format!("{norm:.9e}")])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// One reverse Euler–Maruyama step from `t` to `t − dt`. With `rng = None`
/// the noise term is dropped.
pub fn predictor_step<R: Rng + ?Sized>(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    score: &ComplexSpectrogram,
    t: f64,
    dt: f64,
    params: &SdeParams,
    rng: Option<&mut R>,
) -> Result<ComplexSpectrogram> {
    x.check_same_shape(y, "predictor y")?;
    x.check_same_shape(score, "predictor score")?;
    let g = diffusion_coeff(t, params)?;
    let g2dt = g * g * dt;
    let gamma_dt = params.gamma * dt;
    let mut out = x.clone();
    for ((o, &yv), &s) in out.data_mut().iter_mut().zip(y.data()).zip(score.data()) {
        *o = *o - (yv - *o) * gamma_dt + s * g2dt;
    }
    if let Some(rng) = rng {
        let noise = g * dt.sqrt();
        for o in out.data_mut() {
            *o += complex_normal(rng) * noise;
        }
    }
    Ok(out)
}

/// One Euler step of the probability-flow ODE from `t` to `t − dt`.
pub fn ode_step(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    score: &ComplexSpectrogram,
    t: f64,
    dt: f64,
    params: &SdeParams,
) -> Result<ComplexSpectrogram> {
    x.check_same_shape(y, "ode y")?;
    x.check_same_shape(score, "ode score")?;
    let g = diffusion_coeff(t, params)?;
    let half_g2dt = 0.5 * g * g * dt;
    let gamma_dt = params.gamma * dt;
    x.zip_with(y, |x, y| x - (y - x) * gamma_dt)?
        .zip_with(score, |x, s| x + s * half_g2dt)
}

/// One annealed Langevin step `x ← x + εs + √(2ε) z` with
/// `ε = 2 (r‖z‖/‖s‖)²`, applied to every batch item. Items whose score is
/// exactly zero are left unchanged.
pub fn corrector_step<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    x: &mut [ComplexSpectrogram],
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    t: f64,
    snr: f64,
    rngs: &mut [SeededRng],
) -> Result<()> {
    if !(snr > 0.0) {
        return Err(Error::InvalidParam(format!("corrector snr must be positive, got {snr}")));
    }
    let scores = score_fn.score(x, y, y_c, t)?;
    for (i, ((x, s), rng)) in x.iter_mut().zip(&scores).zip(rngs.iter_mut()).enumerate() {
        let z = ComplexSpectrogram::from_fn(x.bins(), x.frames(), |_, _| complex_normal(rng));
        let s_norm = s.norm();
        if s_norm == 0.0 {
            debug!("corrector at t={t:.4}: zero score for item {i}, step skipped");
            continue;
        }
        let eps = 2.0 * (snr * z.norm() / s_norm).powi(2);
        let noise = (2.0 * eps).sqrt();
        for ((xv, &sv), &zv) in x.data_mut().iter_mut().zip(s.data()).zip(z.data()) {
            *xv += sv * eps + zv * noise;
        }
    }
    Ok(())
}

fn check_inputs(y: &[ComplexSpectrogram], y_c: &[ComplexSpectrogram], seeds: &[u64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("nothing to sample".into()));
    }
    if y.len() != y_c.len() || y.len() != seeds.len() {
        return Err(Error::Shape(format!(
            "{} mixtures, {} bone inputs, {} seeds",
            y.len(),
            y_c.len(),
            seeds.len()
        )));
    }
    for (a, b) in y.iter().zip(y_c) {
        a.check_same_shape(b, "bone input")?;
    }
    Ok(())
}

fn check_finite(x: &[ComplexSpectrogram], step: usize, t: f64) -> Result<()> {
    if let Some(i) = x.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("sampler state of item {i} at step {step} (t = {t:.4})")));
    }
    Ok(())
}

fn record(trajectory: &mut Vec<(usize, f64, usize, f64)>, on: bool, step: usize, t: f64, x: &[ComplexSpectrogram]) {
    if on {
        trajectory.extend(x.iter().enumerate().map(|(i, s)| (step, t, i, s.norm())));
    }
}

/// Per-item seeds for a batch, derived from the sampler seed.
pub fn item_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| derive_seed(master, &format!("item{i}"))).collect()
}

/// Draws `x_1 ~ N(y, σ(1)²)` for every item.
fn prior(y: &[ComplexSpectrogram], rngs: &mut [SeededRng], params: &SdeParams) -> Result<Vec<ComplexSpectrogram>> {
    let std = perturbation_std(1.0, params)?;
    Ok(y.iter()
        .zip(rngs.iter_mut())
        .map(|(y, rng)| {
            let z = ComplexSpectrogram::from_fn(y.bins(), y.frames(), |_, _| complex_normal(rng));
            y.zip_with(&z, |y, z| y + z * std)
        })
        .collect::<Result<_>>()?)
}

/// Time grid `1 = t_0 > t_1 > … > t_N = t_eps` and its spacing.
fn grid(n: usize, params: &SdeParams) -> (Vec<f64>, f64) {
    let dt = (1.0 - params.t_eps) / n as f64;
    ((0..=n).map(|k| if k == n { params.t_eps } else { 1.0 - k as f64 * dt }).collect(), dt)
}

/// Predictor-corrector sampling with item seeds derived from `cfg.seed`.
pub fn pc_sample<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    pc_sample_seeded(score_fn, y, y_c, &item_seeds(cfg.seed, y.len()), cfg, params)
}

/// Predictor-corrector sampling where item `i` draws all its randomness
/// from `seeds[i]`, so a trajectory does not depend on its batch mates.
pub fn pc_sample_seeded<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    seeds: &[u64],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    cfg.validate()?;
    params.validate()?;
    check_inputs(y, y_c, seeds)?;
    let counter = CountingScore::new(score_fn);
    let mut rngs: Vec<SeededRng> = seeds.iter().map(|&s| seeded(s)).collect();
    let mut x = prior(y, &mut rngs, params)?;
    let (times, dt) = grid(cfg.n_steps, params);
    let mut trajectory = Vec::new();
    record(&mut trajectory, cfg.record_trajectory, 0, 1.0, &x);
    for k in 0..cfg.n_steps {
        let t = times[k];
        let scores = counter.score(&x, y, y_c, t)?;
        for (((xi, yi), si), rng) in x.iter_mut().zip(y).zip(&scores).zip(rngs.iter_mut()) {
            *xi = predictor_step(xi, yi, si, t, dt, params, Some(rng))?;
        }
        let t_next = times[k + 1];
        for _ in 0..cfg.corrector_steps {
            corrector_step(&counter, &mut x, y, y_c, t_next, cfg.corrector_snr, &mut rngs)?;
        }
        check_finite(&x, k + 1, t_next)?;
        record(&mut trajectory, cfg.record_trajectory, k + 1, t_next, &x);
    }
    finish(&counter, x, y, y_c, cfg, params, trajectory)
}

/// Probability-flow ODE sampling. With `deterministic_prior` the run uses
/// no randomness at all.
pub fn ode_sample<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    ode_sample_seeded(score_fn, y, y_c, &item_seeds(cfg.seed, y.len()), cfg, params)
}

/// ODE sampling with one prior seed per item.
pub fn ode_sample_seeded<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    seeds: &[u64],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    cfg.validate()?;
    params.validate()?;
    check_inputs(y, y_c, seeds)?;
    let counter = CountingScore::new(score_fn);
    let mut x = if cfg.deterministic_prior {
        y.to_vec()
    } else {
        let mut rngs: Vec<SeededRng> = seeds.iter().map(|&s| seeded(s)).collect();
        prior(y, &mut rngs, params)?
    };
    let (times, dt) = grid(cfg.n_steps, params);
    let mut trajectory = Vec::new();
    record(&mut trajectory, cfg.record_trajectory, 0, 1.0, &x);
    for k in 0..cfg.n_steps {
        let t = times[k];
        let scores = counter.score(&x, y, y_c, t)?;
        for ((xi, yi), si) in x.iter_mut().zip(y).zip(&scores) {
            *xi = ode_step(xi, yi, si, t, dt, params)?;
        }
        check_finite(&x, k + 1, times[k + 1])?;
        record(&mut trajectory, cfg.record_trajectory, k + 1, times[k + 1], &x);
    }
    finish(&counter, x, y, y_c, cfg, params, trajectory)
}

fn finish<S: ScoreFunction + ?Sized>(
    counter: &CountingScore<'_, S>,
    mut x: Vec<ComplexSpectrogram>,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    cfg: &SamplerConfig,
    params: &SdeParams,
    mut trajectory: Vec<(usize, f64, usize, f64)>,
) -> Result<SampleOutput> {
    if cfg.final_mean {
        let t = params.t_eps;
        let scores = counter.score(&x, y, y_c, t)?;
        for ((xi, yi), si) in x.iter_mut().zip(y).zip(&scores) {
            *xi = predictor_step::<SeededRng>(xi, yi, si, t, t, params, None)?;
        }
        check_finite(&x, cfg.n_steps + 1, 0.0)?;
        record(&mut trajectory, cfg.record_trajectory, cfg.n_steps + 1, 0.0, &x);
    }
    Ok(SampleOutput {
        estimates: x,
        score_calls: counter.calls(),
        trajectory,
    })
}

/// Dispatches on `cfg.mode`.
pub fn sample<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    match cfg.mode {
        SamplerMode::Pc => pc_sample(score_fn, y, y_c, cfg, params),
        SamplerMode::Ode => ode_sample(score_fn, y, y_c, cfg, params),
    }
}

/// Dispatches on `cfg.mode` with explicit item seeds.
pub fn sample_seeded<S: ScoreFunction + ?Sized>(
    score_fn: &S,
    y: &[ComplexSpectrogram],
    y_c: &[ComplexSpectrogram],
    seeds: &[u64],
    cfg: &SamplerConfig,
    params: &SdeParams,
) -> Result<SampleOutput> {
    match cfg.mode {
        SamplerMode::Pc => pc_sample_seeded(score_fn, y, y_c, seeds, cfg, params),
        SamplerMode::Ode => ode_sample_seeded(score_fn, y, y_c, seeds, cfg, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn scalar(v: f64) -> ComplexSpectrogram {
        ComplexSpectrogram::scalar(Complex64::new(v, 0.0))
    }

    #[test]
    fn noiseless_scorefree_step_is_the_reverse_drift() {
        let p = SdeParams::default();
        let x = scalar(0.2);
        let y = scalar(1.0);
        let out = predictor_step::<SeededRng>(&x, &y, &scalar(0.0), 0.5, 0.01, &p, None).unwrap();
        let want = 0.2 - p.gamma * (1.0 - 0.2) * 0.01;
        assert!((out.get(0, 0).re - want).abs() < 1e-15);
    }

    #[test]
    fn vanishing_steps_leave_the_state_unchanged() {
        let p = SdeParams::default();
        let x = scalar(0.3);
        let y = scalar(-0.4);
        let s = scalar(2.0);
        let mut rng = seeded(1);
        let out = predictor_step(&x, &y, &s, 0.7, 1e-14, &p, Some(&mut rng)).unwrap();
        assert!((out.get(0, 0) - x.get(0, 0)).norm() < 1e-6);

        let oracle = GaussianOracle { x0: vec![scalar(1.0)], sde: p };
        let mut xs = vec![scalar(0.3)];
        corrector_step(&oracle, &mut xs, &[y.clone()], &[y.clone()], 0.5, 1e-9, &mut [seeded(2)]).unwrap();
        assert!((xs[0].get(0, 0) - x.get(0, 0)).norm() < 1e-6);
    }

    #[test]
    fn corrector_is_seeded_and_skips_zero_scores() {
        let p = SdeParams::default();
        let y = vec![scalar(0.5)];
        let oracle = GaussianOracle { x0: vec![scalar(1.0)], sde: p };
        let run = || {
            let mut xs = vec![scalar(0.1)];
            corrector_step(&oracle, &mut xs, &y, &y, 0.5, 0.5, &mut [seeded(9)]).unwrap();
            xs
        };
        assert_eq!(run(), run());

        struct Zero;
        impl ScoreFunction for Zero {
            fn score(
                &self,
                x: &[ComplexSpectrogram],
                _: &[ComplexSpectrogram],
                _: &[ComplexSpectrogram],
                _: f64,
            ) -> Result<Vec<ComplexSpectrogram>> {
                Ok(x.iter().map(|s| s.scale(0.0)).collect())
            }
        }
        let mut xs = vec![scalar(0.1)];
        corrector_step(&Zero, &mut xs, &y, &y, 0.5, 0.5, &mut [seeded(9)]).unwrap();
        assert_eq!(xs, vec![scalar(0.1)]);
    }

    #[test]
    fn predictor_moves_towards_the_clean_value_on_average() {
        let p = SdeParams::default();
        let x0 = scalar(1.0);
        let y = scalar(-0.5);
        let (t, dt) = (0.5, 0.05);
        let oracle = GaussianOracle { x0: vec![x0.clone()], sde: p };
        let n = 1000;
        let (mut before, mut after) = (0.0, 0.0);
        for seed in 0..n {
            let mut rng = seeded(seed);
            let x = crate::sde::sample_xt(&x0, &y, t, &p, &mut rng).unwrap().x_t;
            let s = oracle.score(&[x.clone()], &[y.clone()], &[y.clone()], t).unwrap().remove(0);
            let next = predictor_step(&x, &y, &s, t, dt, &p, Some(&mut rng)).unwrap();
            before += x.sub(&x0).unwrap().norm();
            after += next.sub(&x0).unwrap().norm();
        }
        assert!(after < before, "mean distance {} -> {}", before / n as f64, after / n as f64);
    }

    #[test]
    fn corrector_keeps_chains_near_a_known_gaussian() {
        // Score of N(μ, s²): stationary chains should stay centred on μ.
        struct Fixed {
            mu: Complex64,
            var: f64,
        }
        impl ScoreFunction for Fixed {
            fn score(
                &self,
                x: &[ComplexSpectrogram],
                _: &[ComplexSpectrogram],
                _: &[ComplexSpectrogram],
                _: f64,
            ) -> Result<Vec<ComplexSpectrogram>> {
                Ok(x.iter().map(|s| s.map(|v| -(v - self.mu) / self.var)).collect())
            }
        }
        let mu = Complex64::new(0.7, -0.2);
        let var = 0.04;
        let f = Fixed { mu, var };
        let chains = 1000;
        // The step-size ratio ‖z‖/‖s‖ only concentrates for multi-entry states.
        let (bins, frames) = (8, 8);
        let mut rng = seeded(5);
        let mut xs: Vec<_> = (0..chains)
            .map(|_| ComplexSpectrogram::from_fn(bins, frames, |_, _| mu + complex_normal(&mut rng) * var.sqrt()))
            .collect();
        let y = vec![ComplexSpectrogram::zeros(bins, frames); chains];
        let mut rngs: Vec<_> = (0..chains as u64).map(|i| seeded(100 + i)).collect();
        for _ in 0..50 {
            corrector_step(&f, &mut xs, &y, &y, 0.5, 0.5, &mut rngs).unwrap();
        }
        let first: Vec<Complex64> = xs.iter().map(|s| s.get(0, 0)).collect();
        let mean: Complex64 = first.iter().sum::<Complex64>() / chains as f64;
        let n = chains as f64;
        let se_re = (first.iter().map(|v| (v.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let se_im = (first.iter().map(|v| (v.im - mean.im).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!((mean.re - mu.re).abs() < 3.0 * se_re, "re {} vs {}", mean.re, mu.re);
        assert!((mean.im - mu.im).abs() < 3.0 * se_im, "im {} vs {}", mean.im, mu.im);
        let spread = first.iter().map(|v| (v - mu).norm_sqr()).sum::<f64>() / n;
        assert!(spread > 0.5 * var && spread < 2.0 * var, "spread {spread}");
    }

    #[test]
    fn score_call_accounting() {
        let c = SamplerConfig::default();
        assert_eq!(c.score_calls(), 120);
        let ode = SamplerConfig { mode: SamplerMode::Ode, ..c.clone() };
        assert_eq!(ode.score_calls(), 60);
        assert!(SamplerConfig { n_steps: 0, ..c }.validate().is_err());
    }
}
