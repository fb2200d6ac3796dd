use bcdm_nn::{Graph, Real, Tensor, Var};

use super::layout::{Conv, DecoderStep, Norm, ResBlock, Resample};
use super::{ScoreModel, Strategy};
use crate::error::{Error, Result};
use crate::sde::perturbation_std;

/// A batch of network inputs; every tensor is `[n, 2, H, W]` holding the
/// real and imaginary planes of one complex spectrogram per sample.
#[derive(Debug, Clone)]
pub struct ScoreBatch<T> {
    pub x_t: Tensor<T>,
    pub y: Tensor<T>,
    pub y_c: Tensor<T>,
    pub t: Vec<f64>,
}

/// Where the condition features of one decoder level were injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub level: usize,
    /// `[channels, height, width]` of the projected condition features.
    pub cond_shape: [usize; 3],
    /// Spatial size of the decoder features at that stage.
    pub decoder_hw: [usize; 2],
    /// Channels after the 1×1 reduction.
    pub reduced_channels: usize,
    /// Channels the unconditioned decoder would see (previous + skip).
    pub baseline_channels: usize,
}

/// Graph handles of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub output: Var,
    /// Stacked main-branch input planes.
    pub main_input: Var,
    /// `y_c` planes fed to the condition encoder (DC only).
    pub cond_input: Option<Var>,
    pub injections: Vec<Injection>,
    /// `[level, channels]` entering the first residual block of every
    /// decoder level, after any condition merge.
    pub decoder_inputs: Vec<[usize; 2]>,
}

impl<T: Real> ScoreModel<T> {
    fn check_batch(&self, b: &ScoreBatch<T>) -> Result<usize> {
        let n = b.t.len();
        let want = [n, 2, self.config.input_height, self.config.input_width];
        for (name, t) in [("x_t", &b.x_t), ("y", &b.y), ("y_c", &b.y_c)] {
            if t.dims() != want {
                return Err(Error::Shape(format!("{name} is {:?}, expected {want:?}", t.dims())));
            }
        }
        if n == 0 {
            return Err(Error::Empty("score batch".into()));
        }
        let t_eps = self.config.sde.t_eps;
        if let Some(&t) = b.t.iter().find(|&&t| !(t_eps..=1.0).contains(&t)) {
            return Err(Error::InvalidParam(format!("diffusion time {t} outside [{t_eps}, 1]")));
        }
        Ok(n)
    }

    /// Records the forward pass of a batch on `g`.
    pub fn record(&self, g: &mut Graph<'_, T>, batch: &ScoreBatch<T>) -> Result<Recorded> {
        let n = self.check_batch(batch)?;
        let cfg = &self.config;
        let lay = &self.layout;
        let (h, w) = (cfg.input_height, cfg.input_width);

        let nf = cfg.base_channels;
        let mut feats = Vec::with_capacity(n * nf);
        for &t in &batch.t {
            feats.extend(super::fourier_features(t, nf, cfg.fourier_scale).into_iter().map(T::lit));
        }
        let feats = g.input(Tensor::from_vec([n, nf, 1, 1], feats)?);
        let temb = g.linear(feats, lay.temb0.w, lay.temb0.b)?;
        let temb = g.silu(temb);
        let temb = g.linear(temb, lay.temb1.w, lay.temb1.b)?;
        let act_temb = g.silu(temb);

        let planes = match cfg.strategy {
            Strategy::Ic => vec![&batch.x_t, &batch.y, &batch.y_c],
            Strategy::Dc | Strategy::MixtureOnly => vec![&batch.x_t, &batch.y],
        };
        let main = stack(&planes, n, h, w)?;
        let main_input = g.input(main);

        let (cond_input, cond_feats) = match &lay.cond {
            Some(enc) => {
                let ci = g.input(batch.y_c.clone());
                let mut x = conv(g, ci, &enc.conv_in)?;
                let mut outs = Vec::with_capacity(enc.blocks.len());
                for (block, proj) in enc.blocks.iter().zip(&enc.proj) {
                    x = resblock(g, x, act_temb, block)?;
                    outs.push(conv(g, x, proj)?);
                }
                (Some(ci), outs)
            }
            None => (None, Vec::new()),
        };

        let mut x = conv(g, main_input, &lay.conv_in)?;
        let mut skips = vec![x];
        for block in &lay.encoder {
            x = resblock(g, x, act_temb, block)?;
            skips.push(x);
        }
        for block in &lay.mid {
            x = resblock(g, x, act_temb, block)?;
        }
        let mut injections = Vec::new();
        let mut decoder_inputs = Vec::new();
        for step in &lay.decoder {
            match step {
                DecoderStep::Block(d) => {
                    let skip = skips.pop().expect("skip stack matches decoder");
                    let merged = match d.reduce {
                        Some(reduce) => {
                            let cf = cond_feats[d.level];
                            let cd = g.value(cf).dims();
                            let xd = g.value(x).dims();
                            if cd[2..] != xd[2..] {
                                return Err(Error::Shape(format!(
                                    "condition features {:?} at level {} vs decoder {:?}",
                                    cd, d.level, xd
                                )));
                            }
                            let baseline = xd[1] + g.value(skip).dims()[1];
                            let cat = g.concat(&[skip, cf, x])?;
                            let red = conv(g, cat, &reduce)?;
                            injections.push(Injection {
                                level: d.level,
                                cond_shape: [cd[1], cd[2], cd[3]],
                                decoder_hw: [xd[2], xd[3]],
                                reduced_channels: g.value(red).channels(),
                                baseline_channels: baseline,
                            });
                            red
                        }
                        None => g.concat(&[x, skip])?,
                    };
                    if decoder_inputs.last().is_none_or(|&[level, _]: &[usize; 2]| level != d.level) {
                        decoder_inputs.push([d.level, g.value(merged).channels()]);
                    }
                    x = resblock(g, merged, act_temb, &d.block)?;
                }
                DecoderStep::Up(block) => x = resblock(g, x, act_temb, block)?,
            }
        }
        let x = norm(g, x, &lay.out_norm)?;
        let x = g.silu(x);
        let mut output = conv(g, x, &lay.conv_out)?;
        if cfg.scale_by_sigma {
            let inv = batch
                .t
                .iter()
                .map(|&t| perturbation_std(t, &cfg.sde).map(|s| T::lit(1.0 / s)))
                .collect::<Result<Vec<_>>>()?;
            output = g.scale_samples(output, inv)?;
        }
        Ok(Recorded {
            output,
            main_input,
            cond_input,
            injections,
            decoder_inputs,
        })
    }

    /// Evaluates the network on a batch and returns the `[n, 2, H, W]` output.
    pub fn forward_batch(&self, batch: &ScoreBatch<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.params);
        let rec = self.record(&mut g, batch)?;
        Ok(g.value(rec.output).clone())
    }
}

fn stack<T: Real>(parts: &[&Tensor<T>], n: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let c = 2 * parts.len();
    let mut out = Tensor::zeros([n, c, h, w]);
    for s in 0..n {
        let dst = out.sample_mut(s);
        for (i, p) in parts.iter().enumerate() {
            let src = p.sample(s);
            dst[i * src.len()..(i + 1) * src.len()].copy_from_slice(src);
        }
    }
    Ok(out)
}

fn conv<T: Real>(g: &mut Graph<'_, T>, x: Var, c: &Conv) -> Result<Var> {
    Ok(g.conv2d(x, c.w, c.b)?)
}

fn norm<T: Real>(g: &mut Graph<'_, T>, x: Var, n: &Norm) -> Result<Var> {
    Ok(g.group_norm(x, n.gamma, n.beta, n.groups)?)
}

fn resblock<T: Real>(g: &mut Graph<'_, T>, x: Var, act_temb: Var, b: &ResBlock) -> Result<Var> {
    let mut h = norm(g, x, &b.norm0)?;
    h = g.silu(h);
    let mut x = x;
    match b.resample {
        Resample::None => {}
        Resample::Down => {
            h = g.avg_pool2(h)?;
            x = g.avg_pool2(x)?;
        }
        Resample::Up => {
            h = g.upsample2(h);
            x = g.upsample2(x);
        }
    }
    h = conv(g, h, &b.conv0)?;
    h = norm(g, h, &b.norm1)?;
    let mods = g.linear(act_temb, b.temb.w, b.temb.b)?;
    h = g.film(h, mods)?;
    h = g.silu(h);
    h = conv(g, h, &b.conv1)?;
    if let Some(skip) = &b.skip {
        x = conv(g, x, skip)?;
    }
    let sum = g.add(x, h)?;
    Ok(g.scale(sum, T::lit(std::f64::consts::FRAC_1_SQRT_2)))
}
