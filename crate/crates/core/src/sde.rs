//! Conditional forward SDE `dx = γ(y − x) dt + g(t) dw` with a geometric
//! (variance exploding) diffusion coefficient.
//!
//! The process mean drifts from the clean spectrogram `x0` towards the noisy
//! mixture `y` while complex Gaussian noise accumulates. Both transition
//! moments have closed forms:
//!
//! ```text
//! μ(t)  = e^{−γt} x0 + (1 − e^{−γt}) y
//! σ²(t) = σ_min² · ln ρ / (γ + ln ρ) · (ρ^{2t} − e^{−2γt}),   ρ = σ_max / σ_min
//! ```
//!
//! σ² is obtained from the variance ODE `dV/dt = −2γV + g(t)²`, `V(0) = 0`.
//! Complex noise uses unit total variance per entry, so σ² is the
//! per-entry complex variance. [`euler_maruyama_forward`] and
//! [`monte_carlo_moments`] simulate the SDE directly and serve as the
//! independent check on these formulas.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{complex_normal, derive_seed, seeded};
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    /// Stiffness of the mean drift towards the mixture.
    pub gamma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Smallest process time used by training and sampling.
    pub t_eps: f64,
}

impl Default for SdeParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            sigma_min: 0.05,
            sigma_max: 0.5,
            t_eps: 0.03,
        }
    }
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.sigma_min > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sigma_min must be > 0, got {}",
                self.sigma_min
            )));
        }
        if !(self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "sigma_max ({}) must exceed sigma_min ({})",
                self.sigma_max, self.sigma_min
            )));
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(Error::InvalidParam(format!(
                "t_eps must lie in (0, 1), got {}",
                self.t_eps
            )));
        }
        Ok(())
    }

    fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParam(format!("process time {t} outside [0, 1]")));
    }
    Ok(())
}

/// `γ (y − x)` elementwise.
pub fn drift(
    x: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    params: &SdeParams,
) -> Result<ComplexSpectrogram> {
    let gamma = params.gamma;
    y.zip_with(x, |y, x| (y - x) * gamma)
}

/// `g(t) = σ_min ρ^t √(2 ln ρ)`.
pub fn diffusion_coeff(t: f64, params: &SdeParams) -> Result<f64> {
    if !(params.sigma_min > 0.0 && params.sigma_max > params.sigma_min) {
        return Err(Error::InvalidParam(format!(
            "diffusion needs sigma_max > sigma_min > 0, got {} / {}",
            params.sigma_max, params.sigma_min
        )));
    }
    let log_ratio = params.log_ratio();
    Ok(params.sigma_min * (log_ratio * t).exp() * (2.0 * log_ratio).sqrt())
}

/// Mean of the perturbation kernel at time `t`.
pub fn perturbation_mean(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    params: &SdeParams,
) -> Result<ComplexSpectrogram> {
    check_time(t)?;
    let decay = (-params.gamma * t).exp();
    x0.zip_with(y, |x0, y| x0 * decay + y * (1.0 - decay))
}

/// Standard deviation of the perturbation kernel at time `t`.
pub fn perturbation_std(t: f64, params: &SdeParams) -> Result<f64> {
    check_time(t)?;
    params.validate()?;
    Ok(variance_closed_form(t, params).max(0.0).sqrt())
}

fn variance_closed_form(t: f64, params: &SdeParams) -> f64 {
    let lr = params.log_ratio();
    params.sigma_min.powi(2) * lr / (params.gamma + lr)
        * ((2.0 * lr * t).exp() - (-2.0 * params.gamma * t).exp())
}

/// A draw from the perturbation kernel together with the unit noise used.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSample {
    pub x_t: ComplexSpectrogram,
    pub z: ComplexSpectrogram,
    pub mean: ComplexSpectrogram,
    pub std: f64,
}

/// `x_t = μ(t) + σ(t) z` with `z` standard complex normal per entry.
pub fn sample_xt<R: Rng + ?Sized>(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    t: f64,
    params: &SdeParams,
    rng: &mut R,
) -> Result<KernelSample> {
    if t < params.t_eps || t > 1.0 {
        return Err(Error::InvalidParam(format!(
            "sample time {t} outside [t_eps = {}, 1]",
            params.t_eps
        )));
    }
    let mean = perturbation_mean(x0, y, t, params)?;
    let std = perturbation_std(t, params)?;
    let z = ComplexSpectrogram::from_fn(x0.bins(), x0.frames(), |_, _| complex_normal(rng));
    let x_t = mean.zip_with(&z, |m, z| m + z * std)?;
    Ok(KernelSample { x_t, z, mean, std })
}

/// Exact score `−(x_t − mean) / std²` of the Gaussian perturbation kernel.
pub fn gaussian_score(
    x_t: &ComplexSpectrogram,
    mean: &ComplexSpectrogram,
    std: f64,
) -> Result<ComplexSpectrogram> {
    if !(std > 0.0) {
        return Err(Error::InvalidParam(format!(
            "gaussian score needs std > 0, got {std}"
        )));
    }
    let inv_var = 1.0 / (std * std);
    x_t.zip_with(mean, |x, m| -(x - m) * inv_var)
}

/// Simulates the forward SDE on a uniform grid over `[0, 1]`, returning all
/// `n_steps + 1` states.
pub fn euler_maruyama_forward<R: Rng + ?Sized>(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    n_steps: usize,
    params: &SdeParams,
    rng: &mut R,
) -> Result<Vec<ComplexSpectrogram>> {
    euler_maruyama_forward_scaled(x0, y, n_steps, params, 1.0, rng)
}

/// As [`euler_maruyama_forward`] with the diffusion coefficient multiplied
/// by `diffusion_scale` (0 gives the deterministic drift ODE).
pub fn euler_maruyama_forward_scaled<R: Rng + ?Sized>(
    x0: &ComplexSpectrogram,
    y: &ComplexSpectrogram,
    n_steps: usize,
    params: &SdeParams,
    diffusion_scale: f64,
    rng: &mut R,
) -> Result<Vec<ComplexSpectrogram>> {
    if n_steps == 0 {
        return Err(Error::InvalidParam("n_steps must be >= 1".into()));
    }
    x0.check_same_shape(y, "euler_maruyama_forward")?;
    params.validate()?;
    let dt = 1.0 / n_steps as f64;
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    let mut x = x0.clone();
    trajectory.push(x.clone());
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let noise = diffusion_scale * diffusion_coeff(t, params)? * dt.sqrt();
        for (xv, &yv) in x.data_mut().iter_mut().zip(y.data()) {
            let mut next = *xv + (yv - *xv) * (params.gamma * dt);
            if noise != 0.0 {
                next += complex_normal(rng) * noise;
            }
            *xv = next;
        }
        trajectory.push(x.clone());
    }
    Ok(trajectory)
}

/// Monte-Carlo settings for [`monte_carlo_moments`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub steps: usize,
    /// Fixed shard count; results do not depend on the thread count.
    pub shards: usize,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps: 2000,
            shards: 16,
            seed: 0,
        }
    }
}

/// Empirical moments of `x_t` at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalMoments {
    pub t: f64,
    pub mean: Complex64,
    /// `sqrt(E|x − mean|²)`.
    pub std: f64,
    /// Standard error of each component (re, im) of the mean.
    pub mean_se: f64,
}

/// Simulates scalar paths of the forward SDE from `(x0, y)` with
/// Euler–Maruyama and reports the ensemble moments at `times`, which must
/// lie on the step grid.
pub fn monte_carlo_moments(
    x0: Complex64,
    y: Complex64,
    params: &SdeParams,
    cfg: MonteCarloConfig,
    times: &[f64],
) -> Result<Vec<EmpiricalMoments>> {
    params.validate()?;
    if cfg.paths < 2 || cfg.steps == 0 || cfg.shards == 0 {
        return Err(Error::InvalidParam("Monte-Carlo needs paths >= 2, steps >= 1, shards >= 1".into()));
    }
    let mut record_steps = Vec::with_capacity(times.len());
    for &t in times {
        check_time(t)?;
        let k = (t * cfg.steps as f64).round() as usize;
        if ((k as f64 / cfg.steps as f64) - t).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("time {t} is not on the {}-step grid", cfg.steps)));
        }
        record_steps.push(k);
    }
    let dt = 1.0 / cfg.steps as f64;
    let noise: Vec<f64> = (0..cfg.steps)
        .map(|k| diffusion_coeff(k as f64 * dt, params).map(|g| g * dt.sqrt()))
        .collect::<Result<_>>()?;
    let pull = params.gamma * dt;

    let shard_sizes: Vec<usize> = (0..cfg.shards)
        .map(|i| cfg.paths / cfg.shards + usize::from(i < cfg.paths % cfg.shards))
        .collect();
    // Per shard and recorded time: (Σx, Σ|x|²).
    let partial: Vec<Vec<(Complex64, f64)>> = shard_sizes
        .par_iter()
        .enumerate()
        .map(|(shard, &size)| {
            let mut rng = seeded(derive_seed(cfg.seed, &format!("mc-shard-{shard}")));
            let mut xs = vec![x0; size];
            let mut sums = vec![(Complex64::new(0.0, 0.0), 0.0); record_steps.len()];
            let record = |xs: &[Complex64], k: usize, sums: &mut [(Complex64, f64)]| {
                for (slot, &rk) in sums.iter_mut().zip(&record_steps) {
                    if rk == k {
                        for x in xs {
                            slot.0 += *x;
                            slot.1 += x.norm_sqr();
                        }
                    }
                }
            };
            record(&xs, 0, &mut sums);
            for (k, &nz) in noise.iter().enumerate() {
                for x in xs.iter_mut() {
                    *x += (y - *x) * pull + complex_normal(&mut rng) * nz;
                }
                record(&xs, k + 1, &mut sums);
            }
            sums
        })
        .collect();

    let n = cfg.paths as f64;
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (sum, sum_sq) = partial.iter().fold((Complex64::new(0.0, 0.0), 0.0), |acc, p| {
                (acc.0 + p[i].0, acc.1 + p[i].1)
            });
            let mean = sum / n;
            let var = ((sum_sq / n - mean.norm_sqr()) * n / (n - 1.0)).max(0.0);
            EmpiricalMoments {
                t,
                mean,
                std: var.sqrt(),
                // Each component carries half of the total variance.
                mean_se: (var / 2.0 / n).sqrt(),
            }
        })
        .collect())
}

/// Closed-form kernel against Monte-Carlo moments at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelCheck {
    pub t: f64,
    /// `|mean_mc − μ(t)|` divided by the per-component standard error,
    /// worst of the two components.
    pub mean_err_se: f64,
    /// `|std_mc − σ(t)| / σ(t)`.
    pub std_rel_err: f64,
}

impl KernelCheck {
    pub fn passes(&self, max_se: f64, max_rel: f64) -> bool {
        self.mean_err_se <= max_se && self.std_rel_err <= max_rel
    }
}

/// Runs [`monte_carlo_moments`] and compares each recorded time with the
/// closed-form mean and standard deviation.
pub fn kernel_check(
    x0: Complex64,
    y: Complex64,
    params: &SdeParams,
    cfg: MonteCarloConfig,
    times: &[f64],
) -> Result<Vec<KernelCheck>> {
    let x0s = ComplexSpectrogram::from_vec(1, 1, vec![x0])?;
    let ys = ComplexSpectrogram::from_vec(1, 1, vec![y])?;
    monte_carlo_moments(x0, y, params, cfg, times)?
        .into_iter()
        .map(|m| {
            let mu = perturbation_mean(&x0s, &ys, m.t, params)?.data()[0];
            let sigma = perturbation_std(m.t, params)?;
            let d = m.mean - mu;
            Ok(KernelCheck {
                t: m.t,
                mean_err_se: d.re.abs().max(d.im.abs()) / m.mean_se,
                std_rel_err: (m.std - sigma).abs() / sigma,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: f64) -> ComplexSpectrogram {
        ComplexSpectrogram::scalar(c(v, 0.0))
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = SdeParams {
            sigma_max: 0.05,
            ..SdeParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(diffusion_coeff(0.5, &bad).is_err());
        assert!(SdeParams { gamma: 0.0, ..SdeParams::default() }.validate().is_err());
        assert!(SdeParams { t_eps: 1.0, ..SdeParams::default() }.validate().is_err());
    }

    #[test]
    fn drift_examples() {
        let p = SdeParams::default();
        let x = ComplexSpectrogram::from_fn(2, 3, |b, t| c(b as f64, t as f64));
        assert!(drift(&x, &x, &p).unwrap().data().iter().all(|v| v.norm() == 0.0));
        assert_relative_eq!(drift(&scalar(0.0), &scalar(1.0), &p).unwrap().get(0, 0).re, 1.5);
        let y = ComplexSpectrogram::from_fn(2, 3, |b, t| c(t as f64 - 1.0, 2.0 * b as f64));
        let a = -2.5;
        let lhs = drift(&x.scale(a), &y.scale(a), &p).unwrap();
        let rhs = drift(&x, &y, &p).unwrap().scale(a);
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert_relative_eq!(l.re, r.re, epsilon = 1e-12);
            assert_relative_eq!(l.im, r.im, epsilon = 1e-12);
        }
        assert!(drift(&scalar(0.0), &x, &p).is_err());
    }

    #[test]
    fn diffusion_coefficient_examples() {
        let p = SdeParams::default();
        let root = (2.0 * 10f64.ln()).sqrt();
        assert_relative_eq!(diffusion_coeff(0.0, &p).unwrap(), 0.05 * root, epsilon = 1e-15);
        assert_relative_eq!(diffusion_coeff(0.0, &p).unwrap(), 0.10730, epsilon = 1e-5);
        assert_relative_eq!(diffusion_coeff(1.0, &p).unwrap(), 1.07298, epsilon = 1e-5);
        let g0 = diffusion_coeff(0.0, &p).unwrap();
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert_relative_eq!(
                diffusion_coeff(t, &p).unwrap() / g0,
                10f64.powf(t),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn mean_examples_and_forward_euler_cross_check() {
        let p = SdeParams::default();
        let x0 = ComplexSpectrogram::from_fn(2, 2, |b, t| c(b as f64 + 1.0, -(t as f64)));
        assert!(perturbation_mean(&x0, &scalar(0.0), 0.0, &p).is_err());
        let m0 = perturbation_mean(&x0, &x0.scale(3.0), 0.0, &p).unwrap();
        assert_eq!(m0, x0);
        let m = perturbation_mean(&x0, &x0, 0.7, &p).unwrap();
        for (a, b) in m.data().iter().zip(x0.data()) {
            assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
        }
        let v = perturbation_mean(&scalar(1.0), &scalar(0.0), 0.4, &p).unwrap().get(0, 0).re;
        assert_relative_eq!(v, (-0.6f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.5488, epsilon = 1e-4);
        // Forward Euler on dμ/dt = γ(y − μ).
        let (mut mu, steps) = (1.0f64, 100_000);
        let dt = 0.4 / steps as f64;
        for _ in 0..steps {
            mu += 1.5 * (0.0 - mu) * dt;
        }
        assert_relative_eq!(v, mu, max_relative = 1e-4);
    }

    #[test]
    fn mean_distance_to_mixture_decreases() {
        let p = SdeParams::default();
        let x0 = scalar(2.0);
        let y = scalar(-1.0);
        let mut last = f64::INFINITY;
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let d = perturbation_mean(&x0, &y, t, &p).unwrap().sub(&y).unwrap().norm();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn std_is_zero_at_origin_and_increasing() {
        let p = SdeParams::default();
        assert_eq!(perturbation_std(0.0, &p).unwrap(), 0.0);
        let mut last = 0.0;
        for i in 1..=100 {
            let s = perturbation_std(i as f64 / 100.0, &p).unwrap();
            assert!(s > last);
            last = s;
        }
        assert!(perturbation_std(1.2, &p).is_err());
    }

    #[test]
    fn std_matches_variance_ode_integration() {
        // RK4 on dV/dt = −2γV + g(t)², independent of the closed form.
        let p = SdeParams::default();
        let f = |t: f64, v: f64| -2.0 * p.gamma * v + diffusion_coeff(t, &p).unwrap().powi(2);
        let (mut v, n) = (0.0, 10_000);
        let h = 1.0 / n as f64;
        for k in 0..n {
            let t = k as f64 * h;
            let k1 = f(t, v);
            let k2 = f(t + h / 2.0, v + h / 2.0 * k1);
            let k3 = f(t + h / 2.0, v + h / 2.0 * k2);
            let k4 = f(t + h, v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (k + 1) % 1000 == 0 {
                let t_now = (k + 1) as f64 * h;
                assert_relative_eq!(perturbation_std(t_now, &p).unwrap(), v.sqrt(), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn std_matches_monte_carlo_at_half_and_one() {
        // 10^5 scalar paths, 2000 Euler–Maruyama steps; 2% relative.
        let p = SdeParams::default();
        let cfg = MonteCarloConfig { seed: 11, ..MonteCarloConfig::default() };
        let moments = monte_carlo_moments(c(1.0, 0.0), c(0.0, 0.0), &p, cfg, &[0.5, 1.0]).unwrap();
        for m in moments {
            let s = perturbation_std(m.t, &p).unwrap();
            assert!((m.std - s).abs() / s < 0.02, "t={} mc={} closed={}", m.t, m.std, s);
        }
    }

    #[test]
    fn sample_xt_moments_and_errors() {
        let p = SdeParams::default();
        let mut rng = seeded(5);
        let x0 = scalar(0.8);
        let y = ComplexSpectrogram::scalar(c(-0.3, 0.4));
        assert!(sample_xt(&x0, &y, 0.01, &p, &mut rng).is_err());
        let t = 0.6;
        let mu = perturbation_mean(&x0, &y, t, &p).unwrap().get(0, 0);
        let sigma = perturbation_std(t, &p).unwrap();
        let n = 10_000;
        let draws: Vec<Complex64> = (0..n)
            .map(|_| sample_xt(&x0, &y, t, &p, &mut rng).unwrap().x_t.get(0, 0))
            .collect();
        let mean = draws.iter().sum::<Complex64>() / n as f64;
        let se = sigma / (2.0 * n as f64).sqrt();
        assert!((mean.re - mu.re).abs() < 3.0 * se && (mean.im - mu.im).abs() < 3.0 * se);
        let var = draws.iter().map(|d| (d - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        // |x − μ|² is exponential with mean σ², so its SE is σ²/√n.
        assert!((var - sigma * sigma).abs() < 3.0 * sigma * sigma / (n as f64).sqrt());
    }

    #[test]
    fn sample_near_zero_time_collapses_to_mean() {
        let p = SdeParams { t_eps: 1e-12, ..SdeParams::default() };
        let mut rng = seeded(1);
        let x0 = scalar(0.5);
        let y = scalar(0.1);
        let s = sample_xt(&x0, &y, 1e-12, &p, &mut rng).unwrap();
        assert!((s.x_t.get(0, 0) - s.mean.get(0, 0)).norm() < 1e-6);
    }

    #[test]
    fn gaussian_score_examples() {
        let v = gaussian_score(&scalar(2.0), &scalar(1.0), 0.5).unwrap();
        assert_relative_eq!(v.get(0, 0).re, -4.0);
        let x = ComplexSpectrogram::from_fn(2, 2, |b, t| c(b as f64, t as f64));
        assert!(gaussian_score(&x, &x, 0.3).unwrap().norm() == 0.0);
        let m = x.scale(0.5);
        let a = gaussian_score(&x, &m, 0.3).unwrap();
        let b = gaussian_score(&x, &m, 0.6).unwrap();
        for (a, b) in a.data().iter().zip(b.data()) {
            assert_relative_eq!(b.re, a.re / 4.0, epsilon = 1e-12);
            assert_relative_eq!(b.im, a.im / 4.0, epsilon = 1e-12);
        }
        assert!(gaussian_score(&x, &m, 0.0).is_err());
    }

    #[test]
    fn score_of_sample_is_scaled_noise() {
        let p = SdeParams::default();
        let mut rng = seeded(9);
        let x0 = ComplexSpectrogram::from_fn(4, 5, |b, t| c((b * t) as f64 * 0.1, 0.2));
        let y = x0.map(|v| v * 0.3 + c(0.1, -0.1));
        for &t in &[0.03, 0.2, 0.9] {
            let s = sample_xt(&x0, &y, t, &p, &mut rng).unwrap();
            let score = gaussian_score(&s.x_t, &s.mean, s.std).unwrap();
            for (sc, z) in score.data().iter().zip(s.z.data()) {
                assert_relative_eq!(sc.re, -z.re / s.std, max_relative = 1e-9, epsilon = 1e-9);
                assert_relative_eq!(sc.im, -z.im / s.std, max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_euler_maruyama_follows_the_drift_ode() {
        let p = SdeParams::default();
        let mut rng = seeded(0);
        let x0 = ComplexSpectrogram::from_fn(2, 2, |b, t| c(1.0 + b as f64, t as f64));
        let y = x0.map(|v| v * -0.5);
        let traj = euler_maruyama_forward_scaled(&x0, &y, 4000, &p, 0.0, &mut rng).unwrap();
        assert_eq!(traj.len(), 4001);
        let expect = perturbation_mean(&x0, &y, 1.0, &p).unwrap();
        for (a, b) in traj.last().unwrap().data().iter().zip(expect.data()) {
            assert!((a - b).norm() < 1e-3 * b.norm().max(1.0));
        }
        assert!(euler_maruyama_forward(&x0, &y, 0, &p, &mut rng).is_err());
    }

    #[test]
    fn euler_maruyama_ensemble_mean_at_one() {
        let p = SdeParams::default();
        let mut rng = seeded(21);
        let x0 = ComplexSpectrogram::scalar(c(1.0, -0.5));
        let y = ComplexSpectrogram::scalar(c(-0.2, 0.3));
        let n = 10_000;
        let mut sum = c(0.0, 0.0);
        for _ in 0..n {
            let traj = euler_maruyama_forward(&x0, &y, 200, &p, &mut rng).unwrap();
            sum += traj.last().unwrap().get(0, 0);
        }
        let mean = sum / n as f64;
        let mu = perturbation_mean(&x0, &y, 1.0, &p).unwrap().get(0, 0);
        let se = perturbation_std(1.0, &p).unwrap() / (2.0 * n as f64).sqrt();
        assert!((mean.re - mu.re).abs() < 3.0 * se, "{mean} vs {mu}");
        assert!((mean.im - mu.im).abs() < 3.0 * se, "{mean} vs {mu}");
    }

    #[test]
    fn kernel_check_reports_small_errors() {
        let cfg = MonteCarloConfig { paths: 20_000, steps: 200, ..Default::default() };
        let rows = kernel_check(c(1.0, 0.0), c(0.0, 1.0), &SdeParams::default(), cfg, &[0.5, 1.0]).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.passes(4.0, 0.03), "{r:?}");
        }
        assert!(kernel_check(c(1.0, 0.0), c(0.0, 1.0), &SdeParams::default(), cfg, &[0.123]).is_err());
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let p = SdeParams::default();
        let cfg = MonteCarloConfig { paths: 1000, steps: 100, shards: 4, seed: 3 };
        let a = monte_carlo_moments(c(1.0, 0.0), c(0.0, 0.0), &p, cfg, &[0.5]).unwrap();
        let b = monte_carlo_moments(c(1.0, 0.0), c(0.0, 0.0), &p, cfg, &[0.5]).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_moments(c(1.0, 0.0), c(0.0, 0.0), &p, cfg, &[0.505]).is_err());
    }
}
