//! A small deterministic gridworld for end-to-end checks of the labeler.
//!
//! Mixed-quality datasets are generated from an expert, an epsilon-noisy
//! expert and a random policy. Labeled datasets are then fed to tabular
//! offline Q-iteration and the greedy policy is rolled out.

mod config;
mod demo;
mod qlearn;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::EpisodicDataset;
use crate::labeler::LabelError;
use crate::measures::Trajectory;

pub use config::{parse_config, GridworldConfig, LabelerChoice};
pub use demo::{run_demo, DemoReport};
pub use qlearn::{evaluate_policy, fit_offline_q, TabularQ, UPDATE_TOLERANCE};

/// `(x, y)`, with `y` growing downwards.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

/// Fixed order used for tie-breaking and one-hot encoding.
pub const ACTIONS: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; ACTIONS.len()];
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid gridworld: {0}")]
    InvalidEnv(&'static str),
    #[error("invalid episode counts: {0}")]
    InvalidCounts(&'static str),
    #[error("dataset has no transitions")]
    EmptyDataset,
    #[error("episode {episode}, step {step}: {reason}")]
    Decode {
        episode: usize,
        step: usize,
        reason: String,
    },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl Gridworld {
    /// Defaults: rewards 0 and 1, horizon `4 * (width + height)`, discount 0.99.
    pub fn new(width: usize, height: usize, start: Cell, goal: Cell) -> Result<Self, HarnessError> {
        let env = Gridworld {
            width,
            height,
            start,
            goal,
            step_reward: 0.0,
            goal_reward: 1.0,
            horizon: 4 * (width + height),
            discount: 0.99,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.width == 0 || self.height == 0 {
            return Err(HarnessError::InvalidEnv("grid must be nonempty"));
        }
        if !self.contains(self.start) || !self.contains(self.goal) {
            return Err(HarnessError::InvalidEnv("start and goal must lie on the grid"));
        }
        if self.start == self.goal {
            return Err(HarnessError::InvalidEnv("start equals goal"));
        }
        if self.horizon < manhattan(self.start, self.goal) {
            return Err(HarnessError::InvalidEnv("horizon is shorter than the shortest path"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(HarnessError::InvalidEnv("discount must lie in (0, 1)"));
        }
        if !(self.step_reward.is_finite() && self.goal_reward.is_finite()) {
            return Err(HarnessError::InvalidEnv("rewards must be finite"));
        }
        Ok(())
    }

    pub fn contains(&self, (x, y): Cell) -> bool {
        x < self.width && y < self.height
    }

    /// Moves off the grid leave the agent in place.
    pub fn step(&self, (x, y): Cell, a: Action) -> Cell {
        match a {
            Action::Up => (x, y.saturating_sub(1)),
            Action::Down => (x, (y + 1).min(self.height - 1)),
            Action::Left => (x.saturating_sub(1), y),
            Action::Right => ((x + 1).min(self.width - 1), y),
        }
    }

    /// Reward for a transition into `next`.
    pub fn reward(&self, next: Cell) -> f64 {
        if next == self.goal {
            self.goal_reward
        } else {
            self.step_reward
        }
    }

    /// `(x / (w - 1), y / (h - 1), 1)`; a zero-width axis maps to 0.
    pub fn features(&self, (x, y): Cell) -> Vec<f64> {
        vec![unit(x, self.width), unit(y, self.height), 1.0]
    }

    pub fn decode(&self, features: &[f64]) -> Option<Cell> {
        if features.len() != 3 {
            return None;
        }
        let x = decode_axis(features[0], self.width)?;
        let y = decode_axis(features[1], self.height)?;
        Some((x, y))
    }

    /// Shortest-path action, horizontal moves first.
    pub fn expert_action(&self, (x, y): Cell) -> Action {
        let (gx, gy) = self.goal;
        if x < gx {
            Action::Right
        } else if x > gx {
            Action::Left
        } else if y < gy {
            Action::Down
        } else {
            Action::Up
        }
    }

    /// Runs `policy` from the start until the goal or the horizon.
    ///
    /// The episode holds every visited state, goal included. `rewards[t]` is
    /// the reward of the move out of state `t`, and 0 for the last state.
    pub fn rollout(&self, mut policy: impl FnMut(Cell) -> Action) -> Trajectory {
        let mut s = self.start;
        let mut observations = vec![self.features(s)];
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut terminals = vec![false];
        for _ in 0..self.horizon {
            if s == self.goal {
                break;
            }
            let a = policy(s);
            let next = self.step(s, a);
            actions.push(a.one_hot());
            rewards.push(self.reward(next));
            observations.push(self.features(next));
            terminals.push(next == self.goal);
            s = next;
        }
        rewards.push(0.0);
        Trajectory {
            id: None,
            observations,
            actions: Some(actions),
            rewards: Some(rewards),
            terminals: Some(terminals),
        }
    }
}

fn unit(v: usize, n: usize) -> f64 {
    if n > 1 {
        v as f64 / (n - 1) as f64
    } else {
        0.0
    }
}

fn decode_axis(f: f64, n: usize) -> Option<usize> {
    let scaled = if n > 1 { f * (n - 1) as f64 } else { f };
    let v = scaled.round();
    if !(v >= 0.0 && v < n as f64) || (scaled - v).abs() > 1e-6 {
        return None;
    }
    Some(v as usize)
}

pub fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Episode counts and noise for [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub n_expert: usize,
    pub n_medium: usize,
    pub n_random: usize,
    /// Probability that a medium episode takes a uniformly random action.
    pub medium_epsilon: f64,
    pub seed: u64,
}

/// Output of [`generate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    /// Expert demonstrations with rewards.
    pub experts: EpisodicDataset,
    /// Every generated episode, experts included, with rewards removed.
    pub unlabeled: EpisodicDataset,
    /// `unlabeled` with its ground-truth rewards.
    pub truth: EpisodicDataset,
}

/// Generates `n_expert` shortest-path episodes, `n_medium` noisy ones and
/// `n_random` uniformly random ones, in that order.
pub fn generate_dataset(env: &Gridworld, spec: &DatasetSpec) -> Result<GeneratedData, HarnessError> {
    env.validate()?;
    if spec.n_expert == 0 {
        return Err(HarnessError::InvalidCounts("at least one expert episode is needed"));
    }
    if !(0.0..=1.0).contains(&spec.medium_epsilon) {
        return Err(HarnessError::InvalidCounts("medium epsilon must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = Vec::with_capacity(spec.n_expert + spec.n_medium + spec.n_random);
    for k in 0..spec.n_expert {
        truth.push(env.rollout(|s| env.expert_action(s)).with_id(format!("expert-{k}")));
    }
    for k in 0..spec.n_medium {
        let traj = env.rollout(|s| {
            if rng.random_bool(spec.medium_epsilon) {
                ACTIONS[rng.random_range(0..ACTIONS.len())]
            } else {
                env.expert_action(s)
            }
        });
        truth.push(traj.with_id(format!("medium-{k}")));
    }
    for k in 0..spec.n_random {
        let traj = env.rollout(|_| ACTIONS[rng.random_range(0..ACTIONS.len())]);
        truth.push(traj.with_id(format!("random-{k}")));
    }
    let experts = truth[..spec.n_expert].to_vec();
    let unlabeled = truth
        .iter()
        .map(|t| Trajectory {
            rewards: None,
            ..t.clone()
        })
        .collect();
    Ok(GeneratedData {
        experts: EpisodicDataset::new(experts),
        unlabeled: EpisodicDataset::new(unlabeled),
        truth: EpisodicDataset::new(truth),
    })
}
