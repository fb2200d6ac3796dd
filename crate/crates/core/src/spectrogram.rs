//! Complex time-frequency matrix shared by the SDE, the score network and
//! the front-end.

use bcdm_nn::Real;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex matrix of `bins × frames`, stored bin-major (row = frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    bins: usize,
    frames: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            bins,
            frames,
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
        }
    }

    pub fn from_vec(bins: usize, frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::Shape(format!(
                "{} entries for a {bins}x{frames} spectrogram",
                data.len()
            )));
        }
        Ok(Self { bins, frames, data })
    }

    pub fn from_fn(bins: usize, frames: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(bins * frames);
        for b in 0..bins {
            for t in 0..frames {
                data.push(f(b, t));
            }
        }
        Self { bins, frames, data }
    }

    /// A 1×1 spectrogram, handy for scalar oracles.
    pub fn scalar(v: Complex64) -> Self {
        Self {
            bins: 1,
            frames: 1,
            data: vec![v],
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.frames + frame]
    }

    pub fn set(&mut self, bin: usize, frame: usize, v: Complex64) {
        self.data[bin * self.frames + frame] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            bins: self.bins,
            frames: self.frames,
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped spectrograms.
    pub fn zip_with(
        &self,
        other: &Self,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.check_same_shape(other, "zip_with")?;
        Ok(Self {
            bins: self.bins,
            frames: self.frames,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|c| c * s)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Frames `[start, start + len)`; frames past the end are zero.
    pub fn frame_slice(&self, start: usize, len: usize) -> Self {
        Self::from_fn(self.bins, len, |b, t| {
            let src = start + t;
            if src < self.frames {
                self.get(b, src)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Writes the real and imaginary parts as two planes (`re` then `im`),
    /// each `bins × frames`, into `out`.
    pub fn write_planes<T: Real>(&self, out: &mut [T]) {
        let n = self.data.len();
        debug_assert_eq!(out.len(), 2 * n);
        let (re, im) = out.split_at_mut(n);
        for ((r, i), c) in re.iter_mut().zip(im.iter_mut()).zip(&self.data) {
            *r = T::lit(c.re);
            *i = T::lit(c.im);
        }
    }

    /// Inverse of [`write_planes`](Self::write_planes).
    pub fn from_planes<T: Real>(bins: usize, frames: usize, planes: &[T]) -> Result<Self> {
        let n = bins * frames;
        if planes.len() != 2 * n {
            return Err(Error::Shape(format!(
                "{} plane values for {bins}x{frames}",
                planes.len()
            )));
        }
        let data = planes[..n]
            .iter()
            .zip(&planes[n..])
            .map(|(r, i)| Complex64::new(r.as_f64(), i.as_f64()))
            .collect();
        Ok(Self { bins, frames, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planes_round_trip() {
        let s = ComplexSpectrogram::from_fn(3, 4, |b, t| Complex64::new(b as f64, -(t as f64)));
        let mut planes = vec![0.0f64; 24];
        s.write_planes(&mut planes);
        assert_eq!(planes[0..4], [0.0, 0.0, 0.0, 0.0]);
        assert_eq!(planes[12 + 5], -1.0);
        let back = ComplexSpectrogram::from_planes(3, 4, &planes).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn frame_slice_zero_pads_past_the_end() {
        let s = ComplexSpectrogram::from_fn(2, 3, |_, t| Complex64::new(t as f64 + 1.0, 0.0));
        let sl = s.frame_slice(2, 3);
        assert_eq!(sl.get(1, 0).re, 3.0);
        assert_eq!(sl.get(1, 1).re, 0.0);
        assert!(s.sub(&s.frame_slice(0, 2)).is_err());
    }
}
