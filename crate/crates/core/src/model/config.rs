use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::SdeParams;

/// How the bone-conducted spectrogram enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Input concatenation: `x_t`, `y` and `y_c` stacked as six planes.
    Ic,
    /// Decoder conditioning: a separate time-conditioned encoder on `y_c`
    /// feeds every decoder resolution.
    Dc,
    /// `x_t` and `y` only; the reference point for parameter accounting.
    MixtureOnly,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ic" => Ok(Strategy::Ic),
            "dc" => Ok(Strategy::Dc),
            "mixture_only" | "mixture-only" => Ok(Strategy::MixtureOnly),
            other => Err(Error::InvalidParam(format!("unknown strategy '{other}'"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Ic => "ic",
            Strategy::Dc => "dc",
            Strategy::MixtureOnly => "mixture_only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSize {
    S,
    L,
    Toy,
}

impl std::str::FromStr for ModelSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" => Ok(ModelSize::S),
            "l" => Ok(ModelSize::L),
            "toy" => Ok(ModelSize::Toy),
            other => Err(Error::InvalidParam(format!("unknown model size '{other}'"))),
        }
    }
}

const L_BASE_CHANNELS: usize = 128;
const LARGE_MULT: [usize; 7] = [1, 1, 2, 2, 2, 2, 2];
// Condition-encoder plan shared by S and L.
const LARGE_COND: [usize; 7] = [32, 32, 64, 64, 64, 64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModelConfig {
    pub strategy: Strategy,
    pub size: ModelSize,
    pub base_channels: usize,
    /// Channel multiplier per resolution; its length is the number of
    /// resolutions.
    pub channel_mult: Vec<usize>,
    pub resnet_depth: usize,
    pub time_embed_dim: usize,
    /// Standard deviation of the random Fourier frequencies.
    pub fourier_scale: f64,
    /// Condition-encoder channels per resolution (DC only).
    pub cond_channels: Vec<usize>,
    pub input_height: usize,
    pub input_width: usize,
    /// Divide the network output by σ(t) so the body predicts unit noise.
    pub scale_by_sigma: bool,
    pub sde: SdeParams,
}

impl ScoreModelConfig {
    pub fn preset(strategy: Strategy, size: ModelSize) -> Self {
        match size {
            ModelSize::L => Self {
                strategy,
                size,
                base_channels: L_BASE_CHANNELS,
                channel_mult: LARGE_MULT.to_vec(),
                resnet_depth: 2,
                time_embed_dim: 4 * L_BASE_CHANNELS,
                fourier_scale: 16.0,
                cond_channels: LARGE_COND.to_vec(),
                input_height: 256,
                input_width: 256,
                scale_by_sigma: true,
                sde: SdeParams::default(),
            },
            ModelSize::S => Self {
                base_channels: L_BASE_CHANNELS / 2,
                resnet_depth: 1,
                time_embed_dim: 2 * L_BASE_CHANNELS,
                size,
                ..Self::preset(strategy, ModelSize::L)
            },
            ModelSize::Toy => Self {
                strategy,
                size,
                base_channels: 16,
                channel_mult: vec![1, 2, 2],
                resnet_depth: 1,
                time_embed_dim: 64,
                fourier_scale: 4.0,
                cond_channels: vec![16, 16, 16],
                input_height: 64,
                input_width: 64,
                scale_by_sigma: true,
                sde: SdeParams::default(),
            },
        }
    }

    pub fn n_resolutions(&self) -> usize {
        self.channel_mult.len()
    }

    /// Feature channels at resolution `level`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mult[level]
    }

    /// Real planes entering the main U-Net.
    pub fn input_planes(&self) -> usize {
        match self.strategy {
            Strategy::Ic => 6,
            Strategy::Dc | Strategy::MixtureOnly => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        self.sde.validate()?;
        let levels = self.n_resolutions();
        if levels == 0 || self.channel_mult.contains(&0) {
            return bad("channel_mult must be nonempty with positive entries".into());
        }
        if self.base_channels == 0 || self.base_channels % 4 != 0 {
            return bad(format!("base_channels must be a positive multiple of 4, got {}", self.base_channels));
        }
        if self.resnet_depth == 0 {
            return bad("resnet_depth must be >= 1".into());
        }
        if self.time_embed_dim == 0 || !(self.fourier_scale > 0.0) {
            return bad("time_embed_dim and fourier_scale must be positive".into());
        }
        if self.base_channels % 2 != 0 {
            return bad("base_channels must be even for sine/cosine features".into());
        }
        let div = 1usize << (levels - 1);
        if self.input_height == 0
            || self.input_width == 0
            || self.input_height % div != 0
            || self.input_width % div != 0
        {
            return bad(format!(
                "input {}x{} must be divisible by 2^(n_resolutions-1) = {div}",
                self.input_height, self.input_width
            ));
        }
        if self.size == ModelSize::S
            && (self.resnet_depth != 1 || self.base_channels != L_BASE_CHANNELS / 2)
        {
            return bad(format!(
                "size S requires base_channels {} and resnet_depth 1",
                L_BASE_CHANNELS / 2
            ));
        }
        if self.strategy == Strategy::Dc {
            if self.cond_channels.len() != levels {
                return bad(format!(
                    "condition encoder has {} resolutions, decoder has {levels}",
                    self.cond_channels.len()
                ));
            }
            if self.cond_channels.iter().any(|&c| c == 0 || c % 4 != 0) {
                return bad("condition channels must be positive multiples of 4".into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_follow_the_sizing_rule() {
        for strategy in [Strategy::Ic, Strategy::Dc, Strategy::MixtureOnly] {
            for size in [ModelSize::S, ModelSize::L, ModelSize::Toy] {
                ScoreModelConfig::preset(strategy, size).validate().unwrap();
            }
            let l = ScoreModelConfig::preset(strategy, ModelSize::L);
            let s = ScoreModelConfig::preset(strategy, ModelSize::S);
            assert_eq!(s.base_channels * 2, l.base_channels);
            assert_eq!(s.resnet_depth, 1);
            assert_eq!(s.cond_channels, l.cond_channels);
        }
    }

    #[test]
    fn inconsistent_plans_are_rejected() {
        let mut c = ScoreModelConfig::preset(Strategy::Dc, ModelSize::Toy);
        c.cond_channels.pop();
        assert!(c.validate().is_err());
        let mut c = ScoreModelConfig::preset(Strategy::Ic, ModelSize::Toy);
        c.input_width = 62;
        assert!(c.validate().is_err());
        let mut c = ScoreModelConfig::preset(Strategy::Ic, ModelSize::S);
        c.resnet_depth = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ScoreModelConfig::preset(Strategy::Dc, ModelSize::Toy);
        let text = c.to_toml().unwrap();
        assert!(text.contains("strategy = \"dc\""));
        assert_eq!(ScoreModelConfig::from_toml(&text).unwrap(), c);
    }
}
