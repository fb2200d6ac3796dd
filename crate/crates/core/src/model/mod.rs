//! Multi-resolution U-Net score network `s_θ(x_t, y, y_c, t)`.
//!
//! The backbone is a reduced NCSN++: BigGAN-style residual blocks with
//! group normalization and per-channel scale/shift from a Fourier time
//! embedding, average-pool downsampling and nearest-neighbour upsampling
//! inside the resampling blocks, skip connections between matching encoder
//! and decoder stages. Complex spectrograms enter as stacked real and
//! imaginary planes.
//!
//! The bone-conducted spectrogram `y_c` is used in one of two ways:
//!
//! * [`Strategy::Ic`] stacks `x_t`, `y` and `y_c` at the input (six planes).
//! * [`Strategy::Dc`] runs `y_c` through a separate encoder with one
//!   time-conditioned residual block per resolution. At the first decoder
//!   block of every level the projected condition features are concatenated
//!   with the skip and the previous decoder output, and a 1×1 convolution
//!   brings the width back to what the unconditioned decoder expects.

mod checkpoint;
mod config;
mod forward;
mod layout;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelSize, ScoreModelConfig, Strategy};
pub use forward::{Injection, Recorded, ScoreBatch};

use std::f64::consts::PI;

use bcdm_nn::{ParamStore, Real, Tensor};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded, standard_normal};
use crate::spectrogram::ComplexSpectrogram;
use layout::{Layout, Plan};

const FOURIER_SEED: u64 = 0x00f0_u64;
const DEFAULT_FOURIER_SCALE: f64 = 16.0;

/// Gaussian random Fourier features of `ln(t + 1e-4)`: `dim/2` sines
/// followed by `dim/2` cosines. Frequencies come from a fixed seed, so the
/// features are a deterministic function of `(t, dim, scale)`.
pub fn fourier_features(t: f64, dim: usize, scale: f64) -> Vec<f64> {
    let half = dim / 2;
    let mut rng = seeded(FOURIER_SEED);
    let arg = (t + 1e-4).ln();
    let proj: Vec<f64> = (0..half)
        .map(|_| 2.0 * PI * scale * standard_normal(&mut rng) * arg)
        .collect();
    proj.iter().map(|p| p.sin()).chain(proj.iter().map(|p| p.cos())).collect()
}

/// Diffusion-time embedding of length `dim` (even) at the default scale.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    fourier_features(t, dim, DEFAULT_FOURIER_SCALE)
}

/// Parameter count of a configuration, computed without allocating.
pub fn param_count(cfg: &ScoreModelConfig) -> Result<usize> {
    Ok(Plan::new(cfg)?.param_count())
}

/// Network weights together with their configuration.
#[derive(Debug, Clone)]
pub struct ScoreModel<T: Real> {
    config: ScoreModelConfig,
    layout: Layout,
    params: ParamStore<T>,
}

impl<T: Real> ScoreModel<T> {
    pub fn build<R: Rng + ?Sized>(config: ScoreModelConfig, rng: &mut R) -> Result<Self> {
        let plan = Plan::new(&config)?;
        let params = plan.materialize(rng)?;
        Ok(Self {
            config,
            layout: plan.layout,
            params,
        })
    }

    /// Wraps existing parameters; names and shapes must match the plan.
    pub fn from_params(config: ScoreModelConfig, params: ParamStore<T>) -> Result<Self> {
        let plan = Plan::new(&config)?;
        plan.check_store(&params)?;
        Ok(Self {
            config,
            layout: plan.layout,
            params,
        })
    }

    pub fn config(&self) -> &ScoreModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    /// The same network with different weights of the same plan.
    pub fn with_params(&self, params: ParamStore<T>) -> Result<Self> {
        Self::from_params(self.config.clone(), params)
    }

    pub fn cast<U: Real>(&self) -> ScoreModel<U> {
        ScoreModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Score estimate for one spectrogram triple at time `t`.
    pub fn score(
        &self,
        x_t: &ComplexSpectrogram,
        y: &ComplexSpectrogram,
        y_c: &ComplexSpectrogram,
        t: f64,
    ) -> Result<ComplexSpectrogram> {
        let batch = ScoreBatch {
            x_t: to_tensor(&[x_t])?,
            y: to_tensor(&[y])?,
            y_c: to_tensor(&[y_c])?,
            t: vec![t],
        };
        let out = self.forward_batch(&batch)?;
        Ok(from_tensor(&out)?.remove(0))
    }
}

/// Stacks equally shaped spectrograms into an `[n, 2, bins, frames]` tensor.
pub fn to_tensor<T: Real>(specs: &[&ComplexSpectrogram]) -> Result<Tensor<T>> {
    let Some(first) = specs.first() else {
        return Err(Error::Empty("no spectrograms".into()));
    };
    let (bins, frames) = first.shape();
    let mut out = Tensor::zeros([specs.len(), 2, bins, frames]);
    for (i, s) in specs.iter().enumerate() {
        first.check_same_shape(s, "to_tensor")?;
        s.write_planes(out.sample_mut(i));
    }
    Ok(out)
}

/// Inverse of [`to_tensor`].
pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Vec<ComplexSpectrogram>> {
    let [n, c, h, w] = t.dims();
    if c != 2 {
        return Err(Error::Shape(format!("{c} planes, expected 2")));
    }
    (0..n).map(|i| ComplexSpectrogram::from_planes(h, w, t.sample(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_embedding_is_deterministic_and_continuous() {
        let a = time_embedding(0.0, 32);
        let b = time_embedding(1.0, 32);
        assert_eq!(a.len(), 32);
        assert_ne!(a, b);
        assert_eq!(time_embedding(0.37, 32), time_embedding(0.37, 32));
        let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let base = time_embedding(0.4, 32);
        // Oscillatory features: distances shrink monotonically once the
        // step is small enough for the linearization to hold.
        let mut last = f64::INFINITY;
        for k in 4..10 {
            let d = dist(&base, &time_embedding(0.4 + 10f64.powi(-k), 32));
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn tensor_round_trip() {
        let a = ComplexSpectrogram::from_fn(4, 8, |b, t| num_complex::Complex64::new(b as f64, t as f64));
        let b = a.scale(-2.0);
        let t: Tensor<f64> = to_tensor(&[&a, &b]).unwrap();
        assert_eq!(t.dims(), [2, 2, 4, 8]);
        assert_eq!(from_tensor(&t).unwrap(), vec![a.clone(), b]);
        assert!(to_tensor::<f64>(&[&a, &a.frame_slice(0, 3)]).is_err());
    }
}
