//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::real::Real;

/// Uniform variance scaling over the average fan, as used by the NCSN++
/// family. `scale == 0` yields a tiny but nonzero init so gradients still
/// flow through the layer.
pub fn variance_scaling<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    numel: usize,
    fan_in: usize,
    fan_out: usize,
    scale: f64,
) -> Vec<T> {
    let scale = if scale == 0.0 { 1e-10 } else { scale };
    let fan_avg = (fan_in + fan_out) as f64 / 2.0;
    let bound = (3.0 * scale / fan_avg).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..numel).map(|_| T::lit(dist.sample(rng))).collect()
}

pub fn constant<T: Real>(numel: usize, value: f64) -> Vec<T> {
    vec![T::lit(value); numel]
}
