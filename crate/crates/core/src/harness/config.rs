//! `key = value` config files for the gridworld demo.
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. Labeler keys are applied on top of `preset` whatever their order.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::{DatasetSpec, Gridworld, HarnessError};
use crate::labeler::{LabelConfig, Preset};

/// Which reward labels the demo trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelerChoice {
    Otr,
    Uds,
    Uniform,
    Truth,
}

impl FromStr for LabelerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "otr" => Ok(LabelerChoice::Otr),
            "uds" => Ok(LabelerChoice::Uds),
            "uniform" => Ok(LabelerChoice::Uniform),
            "truth" => Ok(LabelerChoice::Truth),
            _ => Err(format!("unknown labeler `{s}` (expected otr, uds, uniform or truth)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldConfig {
    pub env: Gridworld,
    pub data: DatasetSpec,
    /// Upper bound on Q-iteration sweeps.
    pub sweeps: usize,
    pub eval_episodes: usize,
    pub label: LabelConfig,
}

const KEYS: &[&str] = &[
    "width",
    "height",
    "start_x",
    "start_y",
    "goal_x",
    "goal_y",
    "horizon",
    "discount",
    "step_reward",
    "goal_reward",
    "n_expert",
    "n_medium",
    "n_random",
    "medium_epsilon",
    "seed",
    "sweeps",
    "eval_episodes",
    "preset",
    "cost",
    "features",
    "epsilon",
    "max_iters",
    "tolerance",
    "alpha",
    "beta",
    "squash_mode",
    "episode_length",
    "action_dim",
    "post_scale",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| HarnessError::Config {
                line: *line,
                message: format!("{key}: {e}"),
            }),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

/// Parses a config file's text. Missing keys take the defaults of an 8x8
/// grid from the top-left to the bottom-right corner.
pub fn parse_config(text: &str) -> Result<GridworldConfig, HarnessError> {
    let mut entries = BTreeMap::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| HarnessError::Config { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if entries.insert(key.to_string(), (line, value.to_string())).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
    }
    let e = Entries(entries);

    let width = e.or("width", 8usize)?;
    let height = e.or("height", 8usize)?;
    let start = (e.or("start_x", 0usize)?, e.or("start_y", 0usize)?);
    let goal = (
        e.or("goal_x", width.saturating_sub(1))?,
        e.or("goal_y", height.saturating_sub(1))?,
    );
    let env = Gridworld {
        width,
        height,
        start,
        goal,
        step_reward: e.or("step_reward", 0.0)?,
        goal_reward: e.or("goal_reward", 1.0)?,
        horizon: e.or("horizon", 4 * (width + height))?,
        discount: e.or("discount", 0.99)?,
    };
    env.validate()?;

    let data = DatasetSpec {
        n_expert: e.or("n_expert", 1)?,
        n_medium: e.or("n_medium", 20)?,
        n_random: e.or("n_random", 80)?,
        medium_epsilon: e.or("medium_epsilon", 0.3)?,
        seed: e.or("seed", 0)?,
    };

    let mut label = LabelConfig::preset(e.or("preset", Preset::Plain)?, e.get("action_dim")?);
    if let Some(v) = e.get("cost")? {
        label.cost = v;
    }
    if let Some(v) = e.get("features")? {
        label.features = v;
    }
    if let Some(v) = e.get("epsilon")? {
        label.sinkhorn.epsilon = v;
    }
    if let Some(v) = e.get("max_iters")? {
        label.sinkhorn.max_iterations = v;
    }
    if let Some(v) = e.get("tolerance")? {
        label.sinkhorn.marginal_tolerance = v;
    }
    if let Some(v) = e.get("alpha")? {
        label.squash_alpha = v;
    }
    if let Some(v) = e.get("beta")? {
        label.squash_beta = v;
    }
    if let Some(v) = e.get("squash_mode")? {
        label.squash_scale = v;
    }
    if let Some(v) = e.get("episode_length")? {
        label.episode_length = v;
    }
    if let Some(v) = e.get("post_scale")? {
        label.post_scale = v;
    }
    label.validate()?;

    Ok(GridworldConfig {
        env,
        data,
        sweeps: e.or("sweeps", 20_000)?,
        eval_episodes: e.or("eval_episodes", 1)?,
        label,
    })
}
