//! Parameter plan of the score network: every layer's parameter ids,
//! shapes and initializers, computed without allocating weights.

use bcdm_nn::{init, ParamId, ParamSpec, ParamStore, Real};
use rand::Rng;

use super::config::{ScoreModelConfig, Strategy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Variance scaling with the given fans and scale.
    Scaled { fan_in: usize, fan_out: usize, scale: f64 },
    Const(f64),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Resample {
    None,
    Down,
    Up,
}

/// Time-conditioned residual block in the BigGAN style.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ResBlock {
    pub norm0: Norm,
    pub conv0: Conv,
    pub temb: Dense,
    pub norm1: Norm,
    pub conv1: Conv,
    pub skip: Option<Conv>,
    pub resample: Resample,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderBlock {
    pub level: usize,
    /// 1×1 convolution merging the condition features (DC, first block of
    /// each level).
    pub reduce: Option<Conv>,
    pub block: ResBlock,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum DecoderStep {
    Block(DecoderBlock),
    Up(ResBlock),
}

#[derive(Debug, Clone)]
pub(crate) struct CondEncoder {
    pub conv_in: Conv,
    pub blocks: Vec<ResBlock>,
    pub proj: Vec<Conv>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub temb0: Dense,
    pub temb1: Dense,
    pub conv_in: Conv,
    pub encoder: Vec<ResBlock>,
    pub mid: [ResBlock; 2],
    pub decoder: Vec<DecoderStep>,
    pub out_norm: Norm,
    pub conv_out: Conv,
    pub cond: Option<CondEncoder>,
}

fn group_count(c: usize) -> usize {
    (c / 4).clamp(1, 32)
}

#[derive(Default)]
struct Registry {
    specs: Vec<(ParamSpec, Init)>,
}

impl Registry {
    fn add(&mut self, name: String, dims: &[usize], init: Init) -> ParamId {
        self.specs.push((ParamSpec::new(name, dims), init));
        ParamId::from_index(self.specs.len() - 1)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, scale: f64) -> Conv {
        let w = self.add(
            format!("{name}.weight"),
            &[cout, cin, k, k],
            Init::Scaled { fan_in: cin * k * k, fan_out: cout * k * k, scale },
        );
        let b = self.add(format!("{name}.bias"), &[cout], Init::Const(0.0));
        Conv { w, b }
    }

    fn dense(&mut self, name: &str, din: usize, dout: usize) -> Dense {
        let w = self.add(
            format!("{name}.weight"),
            &[dout, din],
            Init::Scaled { fan_in: din, fan_out: dout, scale: 1.0 },
        );
        let b = self.add(format!("{name}.bias"), &[dout], Init::Const(0.0));
        Dense { w, b }
    }

    fn norm(&mut self, name: &str, c: usize) -> Result<Norm> {
        let groups = group_count(c);
        if c % groups != 0 {
            return Err(Error::InvalidParam(format!(
                "{name}: {c} channels do not split into {groups} groups"
            )));
        }
        let gamma = self.add(format!("{name}.gamma"), &[c], Init::Const(1.0));
        let beta = self.add(format!("{name}.beta"), &[c], Init::Const(0.0));
        Ok(Norm { gamma, beta, groups })
    }

    fn resblock(&mut self, name: &str, cin: usize, cout: usize, temb: usize, resample: Resample) -> Result<ResBlock> {
        let norm0 = self.norm(&format!("{name}.norm0"), cin)?;
        let conv0 = self.conv(&format!("{name}.conv0"), cin, cout, 3, 1.0);
        let temb = self.dense(&format!("{name}.temb"), temb, 2 * cout);
        let norm1 = self.norm(&format!("{name}.norm1"), cout)?;
        // Near-zero init keeps each block close to its skip path at start.
        let conv1 = self.conv(&format!("{name}.conv1"), cout, cout, 3, 0.0);
        let skip = (cin != cout || resample != Resample::None)
            .then(|| self.conv(&format!("{name}.skip"), cin, cout, 1, 1.0));
        Ok(ResBlock {
            norm0,
            conv0,
            temb,
            norm1,
            conv1,
            skip,
            resample,
        })
    }
}

/// Parameter plan for a configuration.
pub(crate) struct Plan {
    pub layout: Layout,
    specs: Vec<(ParamSpec, Init)>,
}

impl Plan {
    pub fn new(cfg: &ScoreModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut r = Registry::default();
        let levels = cfg.n_resolutions();
        let nf = cfg.base_channels;
        let te = cfg.time_embed_dim;

        let temb0 = r.dense("temb.dense0", nf, te);
        let temb1 = r.dense("temb.dense1", te, te);
        let conv_in = r.conv("conv_in", cfg.input_planes(), nf, 3, 1.0);

        let mut encoder = Vec::new();
        let mut skips = vec![nf];
        let mut c = nf;
        for level in 0..levels {
            let cout = cfg.channels(level);
            for d in 0..cfg.resnet_depth {
                encoder.push(r.resblock(&format!("enc.{level}.{d}"), c, cout, te, Resample::None)?);
                c = cout;
                skips.push(c);
            }
            if level + 1 < levels {
                encoder.push(r.resblock(&format!("enc.{level}.down"), c, c, te, Resample::Down)?);
                skips.push(c);
            }
        }

        let mid = [
            r.resblock("mid.0", c, c, te, Resample::None)?,
            r.resblock("mid.1", c, c, te, Resample::None)?,
        ];

        let mut decoder = Vec::new();
        for level in (0..levels).rev() {
            let cout = cfg.channels(level);
            for d in 0..=cfg.resnet_depth {
                let skip_c = skips.pop().expect("skip stack matches encoder");
                let baseline = c + skip_c;
                let reduce = (cfg.strategy == Strategy::Dc && d == 0).then(|| {
                    r.conv(
                        &format!("dec.{level}.reduce"),
                        baseline + cfg.cond_channels[level],
                        baseline,
                        1,
                        1.0,
                    )
                });
                let block = r.resblock(&format!("dec.{level}.{d}"), baseline, cout, te, Resample::None)?;
                decoder.push(DecoderStep::Block(DecoderBlock { level, reduce, block }));
                c = cout;
            }
            if level > 0 {
                decoder.push(DecoderStep::Up(r.resblock(&format!("dec.{level}.up"), c, c, te, Resample::Up)?));
            }
        }
        debug_assert!(skips.is_empty());

        let out_norm = r.norm("out.norm", c)?;
        let conv_out = r.conv("out.conv", c, 2, 3, 0.0);

        let cond = if cfg.strategy == Strategy::Dc {
            let plan = &cfg.cond_channels;
            let conv_in = r.conv("cond.conv_in", 2, plan[0], 3, 1.0);
            let mut blocks = Vec::with_capacity(levels);
            let mut proj = Vec::with_capacity(levels);
            let mut c = plan[0];
            for (level, &cout) in plan.iter().enumerate() {
                let resample = if level == 0 { Resample::None } else { Resample::Down };
                blocks.push(r.resblock(&format!("cond.{level}"), c, cout, te, resample)?);
                proj.push(r.conv(&format!("cond.{level}.proj"), cout, cout, 1, 1.0));
                c = cout;
            }
            Some(CondEncoder { conv_in, blocks, proj })
        } else {
            None
        };

        Ok(Self {
            layout: Layout {
                temb0,
                temb1,
                conv_in,
                encoder,
                mid,
                decoder,
                out_norm,
                conv_out,
                cond,
            },
            specs: r.specs,
        })
    }

    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|(s, _)| s.numel()).sum()
    }

    pub fn materialize<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        for (spec, init) in &self.specs {
            let n = spec.numel();
            let values = match *init {
                Init::Scaled { fan_in, fan_out, scale } => init::variance_scaling(rng, n, fan_in, fan_out, scale),
                Init::Const(v) => init::constant(n, v),
            };
            store.insert(spec.clone(), values)?;
        }
        Ok(store)
    }

    /// Checks that a store has exactly the planned names and shapes, in order.
    pub fn check_store<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        if store.len() != self.specs.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter arrays, configuration plans {}",
                store.len(),
                self.specs.len()
            )));
        }
        for ((planned, _), actual) in self.specs.iter().zip(store.specs()) {
            if planned != actual {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match planned `{}` {:?}",
                    actual.name, actual.dims, planned.name, planned.dims
                )));
            }
        }
        Ok(())
    }
}
