//! Speech enhancement with a score-based diffusion model whose reverse
//! process is guided by a bone-conduction recording of the same talker.

mod error;
pub mod datagen;
pub mod dsp;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod sde;
pub mod spectrogram;
pub mod train;

pub use error::{Error, Result};
pub use spectrogram::ComplexSpectrogram;
