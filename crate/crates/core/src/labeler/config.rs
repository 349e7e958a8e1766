use std::str::FromStr;

use crate::cost::CostKind;
use crate::measures::FeatureMode;
use crate::ot::SinkhornParams;

use super::LabelError;

/// How the squashing exponent scales raw rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    /// `beta * T * r / |A|`
    Locomotion,
    /// `T * r`
    Antmaze,
    /// `beta * r`
    Plain,
}

/// Dataset-level transform applied after squashing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PostScale {
    None,
    /// Multiply by `target / (max_return - min_return)` over the dataset.
    ReturnRange { target: f64 },
    /// Add `delta` to every reward.
    Shift { delta: f64 },
}

/// Bundled constants for the benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Locomotion,
    Antmaze,
    Plain,
}

impl FromStr for ScaleMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "locomotion" => Ok(ScaleMode::Locomotion),
            "antmaze" => Ok(ScaleMode::Antmaze),
            "plain" => Ok(ScaleMode::Plain),
            _ => Err(format!("unknown squash mode `{s}`")),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "locomotion" => Ok(Preset::Locomotion),
            "antmaze" => Ok(Preset::Antmaze),
            "plain" => Ok(Preset::Plain),
            _ => Err(format!("unknown preset `{s}`")),
        }
    }
}

/// Accepts `none`, `return-range`, `return-range:<target>` and `shift:<delta>`.
impl FromStr for PostScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let number = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("bad number `{v}` in post-scale `{s}`"))
        };
        match s.split_once(':') {
            None if s == "none" => Ok(PostScale::None),
            None if s == "return-range" => Ok(PostScale::ReturnRange { target: 1000.0 }),
            Some(("return-range", v)) => Ok(PostScale::ReturnRange { target: number(v)? }),
            Some(("shift", v)) => Ok(PostScale::Shift { delta: number(v)? }),
            _ => Err(format!(
                "unknown post-scale `{s}` (expected none, return-range[:T] or shift:D)"
            )),
        }
    }
}

/// Everything that controls how an episode is labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub cost: CostKind,
    pub features: FeatureMode,
    pub sinkhorn: SinkhornParams,
    pub squash_alpha: f64,
    pub squash_beta: f64,
    pub squash_scale: ScaleMode,
    /// The `T` of the squashing exponent: a fixed episode length shared by
    /// all episodes, not each episode's own length.
    pub episode_length: usize,
    /// `|A|`, required by [`ScaleMode::Locomotion`].
    pub action_dim: Option<usize>,
    pub post_scale: PostScale,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig::preset(Preset::Plain, None)
    }
}

impl LabelConfig {
    /// Cosine cost on states with `epsilon = 0.01`, plus the preset's
    /// squashing and post-scaling constants.
    pub fn preset(preset: Preset, action_dim: Option<usize>) -> Self {
        let base = LabelConfig {
            cost: CostKind::Cosine,
            features: FeatureMode::State,
            sinkhorn: SinkhornParams::default(),
            squash_alpha: 1.0,
            squash_beta: 1.0,
            squash_scale: ScaleMode::Plain,
            episode_length: 1000,
            action_dim,
            post_scale: PostScale::None,
        };
        match preset {
            Preset::Locomotion => LabelConfig {
                squash_alpha: 5.0,
                squash_beta: 5.0,
                squash_scale: ScaleMode::Locomotion,
                post_scale: PostScale::ReturnRange { target: 1000.0 },
                ..base
            },
            Preset::Antmaze => LabelConfig {
                squash_alpha: 5.0,
                squash_scale: ScaleMode::Antmaze,
                post_scale: PostScale::Shift { delta: -2.0 },
                ..base
            },
            Preset::Plain => base,
        }
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        self.sinkhorn.validate()?;
        if !(self.squash_alpha > 0.0 && self.squash_alpha.is_finite()) {
            return Err(LabelError::InvalidConfig("alpha must be positive"));
        }
        if !self.squash_beta.is_finite() {
            return Err(LabelError::InvalidConfig("beta must be finite"));
        }
        if self.episode_length == 0 {
            return Err(LabelError::InvalidConfig("episode length must be positive"));
        }
        if self.squash_scale == ScaleMode::Locomotion && !matches!(self.action_dim, Some(d) if d >= 1)
        {
            return Err(LabelError::InvalidConfig(
                "locomotion squashing needs an action dimension >= 1",
            ));
        }
        match self.post_scale {
            PostScale::ReturnRange { target } if !target.is_finite() => {
                Err(LabelError::InvalidConfig("return range target must be finite"))
            }
            PostScale::Shift { delta } if !delta.is_finite() => {
                Err(LabelError::InvalidConfig("shift must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Multiplier `E` in `alpha * exp(E * r)`.
    pub fn squash_exponent(&self) -> f64 {
        let t = self.episode_length as f64;
        match self.squash_scale {
            ScaleMode::Locomotion => {
                self.squash_beta * t / self.action_dim.unwrap_or(1) as f64
            }
            ScaleMode::Antmaze => t,
            ScaleMode::Plain => self.squash_beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        assert!(LabelConfig::preset(Preset::Locomotion, Some(6)).validate().is_ok());
        assert!(LabelConfig::preset(Preset::Antmaze, None).validate().is_ok());
        assert!(LabelConfig::preset(Preset::Plain, None).validate().is_ok());
    }

    #[test]
    fn locomotion_needs_action_dim() {
        let cfg = LabelConfig::preset(Preset::Locomotion, None);
        assert!(matches!(cfg.validate(), Err(LabelError::InvalidConfig(_))));
    }

    #[test]
    fn exponents() {
        let loco = LabelConfig::preset(Preset::Locomotion, Some(6));
        assert!((loco.squash_exponent() - 5.0 * 1000.0 / 6.0).abs() < 1e-12);
        assert_eq!(LabelConfig::preset(Preset::Antmaze, None).squash_exponent(), 1000.0);
        assert_eq!(LabelConfig::preset(Preset::Plain, None).squash_exponent(), 1.0);
    }

    #[test]
    fn parses_post_scale() {
        assert_eq!("none".parse(), Ok(PostScale::None));
        assert_eq!("shift:-2".parse(), Ok(PostScale::Shift { delta: -2.0 }));
        assert_eq!(
            "return-range".parse(),
            Ok(PostScale::ReturnRange { target: 1000.0 })
        );
        assert_eq!(
            "return-range:10".parse(),
            Ok(PostScale::ReturnRange { target: 10.0 })
        );
        assert!("shift:nan".parse::<PostScale>().is_err());
        assert!("scale:2".parse::<PostScale>().is_err());
    }

    #[test]
    fn rejects_bad_alpha() {
        let cfg = LabelConfig {
            squash_alpha: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
