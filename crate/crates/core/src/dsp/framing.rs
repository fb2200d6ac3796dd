use rand::Rng;

use crate::rng::seeded;
use crate::spectrogram::ComplexSpectrogram;

/// How [`frame_fit`] handles spectrograms longer than the target width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// One random crop, drawn from the given seed.
    Train { seed: u64 },
    /// Overlapping chunks covering every frame.
    Inference,
}

/// Fixed-width views of a spectrogram plus what is needed to undo them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFit {
    pub chunks: Vec<ComplexSpectrogram>,
    /// First source frame of each chunk.
    pub starts: Vec<usize>,
    pub original_frames: usize,
    pub target: usize,
}

impl FrameFit {
    /// Number of chunk frames backed by source data (the rest is padding).
    pub fn valid_frames(&self, chunk: usize) -> usize {
        (self.original_frames - self.starts[chunk]).min(self.target)
    }

    /// Reassembles processed chunks into a spectrogram of the original
    /// width. Overlaps are cross-faded with linear ramps.
    pub fn reassemble(&self, processed: &[ComplexSpectrogram]) -> crate::Result<ComplexSpectrogram> {
        if processed.len() != self.chunks.len() {
            return Err(crate::Error::Shape(format!(
                "{} processed chunks for {} inputs",
                processed.len(),
                self.chunks.len()
            )));
        }
        let bins = self.chunks[0].bins();
        for p in processed {
            if p.shape() != (bins, self.target) {
                return Err(crate::Error::Shape(format!(
                    "processed chunk {:?}, expected {:?}",
                    p.shape(),
                    (bins, self.target)
                )));
            }
        }
        if processed.len() == 1 {
            return Ok(processed[0].frame_slice(0, self.original_frames));
        }
        let weights = ramp(self.target);
        let mut out = ComplexSpectrogram::zeros(bins, self.original_frames);
        let mut total = vec![0.0; self.original_frames];
        for (i, (p, &start)) in processed.iter().zip(&self.starts).enumerate() {
            for t in 0..self.valid_frames(i) {
                let w = weights[t];
                total[start + t] += w;
                for b in 0..bins {
                    let v = out.get(b, start + t) + p.get(b, t) * w;
                    out.set(b, start + t, v);
                }
            }
        }
        for (t, &w) in total.iter().enumerate() {
            for b in 0..bins {
                let v = out.get(b, t) / w;
                out.set(b, t, v);
            }
        }
        Ok(out)
    }
}

fn ramp(target: usize) -> Vec<f64> {
    let fade = (target / 4).max(1) as f64;
    (0..target)
        .map(|p| {
            let rise = (p as f64 + 1.0) / (fade + 1.0);
            let fall = (target - p) as f64 / (fade + 1.0);
            rise.min(fall).min(1.0)
        })
        .collect()
}

/// Brings a spectrogram to `target` frames: shorter inputs are zero-padded,
/// longer ones are cropped (training) or split into chunks that overlap by
/// at least a quarter of the target (inference).
pub fn frame_fit(s: &ComplexSpectrogram, target: usize, mode: FitMode) -> FrameFit {
    assert!(target > 0, "frame_fit target must be positive");
    let frames = s.frames();
    let starts = if frames <= target {
        vec![0]
    } else {
        match mode {
            FitMode::Train { seed } => vec![seeded(seed).random_range(0..=frames - target)],
            FitMode::Inference => chunk_starts(frames, target),
        }
    };
    FrameFit {
        chunks: starts.iter().map(|&st| s.frame_slice(st, target)).collect(),
        starts,
        original_frames: frames,
        target,
    }
}

fn chunk_starts(frames: usize, target: usize) -> Vec<usize> {
    let min_overlap = target / 4;
    let stride = target - min_overlap;
    let n = 1 + (frames - target).div_ceil(stride);
    let span = (frames - target) as f64;
    (0..n)
        .map(|i| (span * i as f64 / (n - 1) as f64).round() as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn ramp_spec(frames: usize) -> ComplexSpectrogram {
        ComplexSpectrogram::from_fn(3, frames, |b, t| Complex64::new(t as f64 + 1.0, b as f64 - 1.5))
    }

    #[test]
    fn exact_width_is_identity() {
        let s = ramp_spec(256);
        for mode in [FitMode::Inference, FitMode::Train { seed: 3 }] {
            let fit = frame_fit(&s, 256, mode);
            assert_eq!(fit.chunks, vec![s.clone()]);
            assert_eq!(fit.reassemble(&fit.chunks).unwrap(), s);
        }
    }

    #[test]
    fn long_input_chunks_and_reassembles() {
        let s = ramp_spec(300);
        let fit = frame_fit(&s, 256, FitMode::Inference);
        assert_eq!(fit.starts, vec![0, 44]);
        let back = fit.reassemble(&fit.chunks).unwrap();
        for (a, b) in back.data().iter().zip(s.data()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
        let long = ramp_spec(1000);
        let fit = frame_fit(&long, 256, FitMode::Inference);
        assert_eq!(*fit.starts.last().unwrap(), 1000 - 256);
        for pair in fit.starts.windows(2) {
            assert!(pair[1] - pair[0] <= 256 - 64);
        }
        let back = fit.reassemble(&fit.chunks).unwrap();
        assert!(back.sub(&long).unwrap().norm() < 1e-10 * long.norm());
    }

    #[test]
    fn short_input_is_padded() {
        let s = ramp_spec(100);
        let fit = frame_fit(&s, 256, FitMode::Inference);
        assert_eq!(fit.chunks[0].frames(), 256);
        assert_eq!(fit.valid_frames(0), 100);
        assert_eq!(fit.chunks[0].get(0, 150).norm(), 0.0);
        assert_eq!(fit.reassemble(&fit.chunks).unwrap(), s);
    }

    #[test]
    fn training_crop_is_seeded() {
        let s = ramp_spec(400);
        let a = frame_fit(&s, 64, FitMode::Train { seed: 9 });
        let b = frame_fit(&s, 64, FitMode::Train { seed: 9 });
        assert_eq!(a, b);
        assert_eq!(a.chunks.len(), 1);
        assert!(a.starts[0] <= 400 - 64);
        assert_eq!(a.chunks[0], s.frame_slice(a.starts[0], 64));
    }

    #[test]
    fn reassemble_rejects_wrong_shapes() {
        let fit = frame_fit(&ramp_spec(300), 256, FitMode::Inference);
        assert!(fit.reassemble(&fit.chunks[..1]).is_err());
        assert!(fit.reassemble(&[ramp_spec(256), ramp_spec(200)]).is_err());
    }
}
