//! Episodes and the discrete empirical measures built from them.
//!
//! An episode of `T` states becomes a measure with `T` atoms of mass `1/T`.
//! Batched solvers need every measure to share one length, so a measure can
//! be padded with zero vectors that carry exactly zero mass.

use thiserror::Error;

/// Tolerance on the total mass of a [`WeightedMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("trajectory has no observations")]
    EmptyTrajectory,
    #[error("observation {index} has dimension {found}, expected {expected}")]
    RaggedObservations {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("action {index} has dimension {found}, expected {expected}")]
    RaggedActions {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{field} has length {found}, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: String,
        found: usize,
    },
    #[error("state-action features requested but the trajectory has no actions")]
    MissingActions,
    #[error("pad target {target} is smaller than the measure length {len}")]
    TargetTooSmall { target: usize, len: usize },
    #[error("weights must be nonnegative and finite (weight {index} = {value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("measure has {points} points but {weights} weights")]
    WeightCount { points: usize, weights: usize },
    #[error("points have inconsistent dimensions")]
    RaggedPoints,
}

/// One episode: `observations` are the states `s_1..s_T`.
///
/// Actions may hold `T` entries or `T - 1` (no action after the final state).
/// Rewards and terminals, when present, hold one entry per state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub id: Option<String>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Option<Vec<Vec<f64>>>,
    pub rewards: Option<Vec<f64>>,
    pub terminals: Option<Vec<bool>>,
}

impl Trajectory {
    /// State-only episode.
    pub fn from_observations(observations: Vec<Vec<f64>>) -> Self {
        Trajectory {
            observations,
            ..Default::default()
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    pub fn action_dim(&self) -> Option<usize> {
        self.actions
            .as_ref()
            .and_then(|a| a.first())
            .map(Vec::len)
    }

    /// Sum of stored rewards, if any.
    pub fn episodic_return(&self) -> Option<f64> {
        self.rewards.as_ref().map(|r| r.iter().sum())
    }

    /// Checks the structural invariants of an episode.
    pub fn validate(&self) -> Result<(), MeasureError> {
        let t = self.observations.len();
        if t == 0 {
            return Err(MeasureError::EmptyTrajectory);
        }
        let d = self.observations[0].len();
        for (index, o) in self.observations.iter().enumerate() {
            if o.len() != d {
                return Err(MeasureError::RaggedObservations {
                    index,
                    expected: d,
                    found: o.len(),
                });
            }
        }
        if let Some(actions) = &self.actions {
            if actions.len() != t && actions.len() + 1 != t {
                return Err(MeasureError::LengthMismatch {
                    field: "actions",
                    expected: format!("{t} or {}", t - 1),
                    found: actions.len(),
                });
            }
            if let Some(first) = actions.first() {
                let da = first.len();
                for (index, a) in actions.iter().enumerate() {
                    if a.len() != da {
                        return Err(MeasureError::RaggedActions {
                            index,
                            expected: da,
                            found: a.len(),
                        });
                    }
                }
            }
        }
        if let Some(rewards) = &self.rewards {
            if rewards.len() != t {
                return Err(MeasureError::LengthMismatch {
                    field: "rewards",
                    expected: t.to_string(),
                    found: rewards.len(),
                });
            }
        }
        if let Some(terminals) = &self.terminals {
            if terminals.len() != t {
                return Err(MeasureError::LengthMismatch {
                    field: "terminals",
                    expected: t.to_string(),
                    found: terminals.len(),
                });
            }
        }
        Ok(())
    }
}

/// Which per-step features enter the measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    State,
    /// Observation concatenated with the action taken in that state.
    StateAction,
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "state" => Ok(FeatureMode::State),
            "state-action" => Ok(FeatureMode::StateAction),
            _ => Err(format!("unknown features `{s}` (expected state or state-action)")),
        }
    }
}

/// Discrete measure: feature vectors with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl WeightedMeasure {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if points.len() != weights.len() {
            return Err(MeasureError::WeightCount {
                points: points.len(),
                weights: weights.len(),
            });
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(MeasureError::RaggedPoints);
            }
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(MeasureError::InvalidWeight { index, value: w });
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(MeasureError::NotNormalized(total));
        }
        Ok(WeightedMeasure { points, weights })
    }

    /// Uniform weights `1/n` over `points`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, MeasureError> {
        let n = points.len();
        if n == 0 {
            return Err(MeasureError::NotNormalized(0.0));
        }
        let w = 1.0 / n as f64;
        WeightedMeasure::new(points, vec![w; n])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Builds the empirical measure of an episode with uniform weights `1/T`.
///
/// With [`FeatureMode::StateAction`] each point is `s_t ‖ a_t`; a final state
/// without a successor action is paired with a zero action.
pub fn trajectory_to_measure(
    traj: &Trajectory,
    features: FeatureMode,
) -> Result<WeightedMeasure, MeasureError> {
    traj.validate()?;
    let points = match features {
        FeatureMode::State => traj.observations.clone(),
        FeatureMode::StateAction => {
            let actions = traj.actions.as_ref().ok_or(MeasureError::MissingActions)?;
            let da = actions.first().map_or(0, Vec::len);
            traj.observations
                .iter()
                .enumerate()
                .map(|(t, obs)| {
                    let mut p = Vec::with_capacity(obs.len() + da);
                    p.extend_from_slice(obs);
                    match actions.get(t) {
                        Some(a) => p.extend_from_slice(a),
                        None => p.resize(obs.len() + da, 0.0),
                    }
                    p
                })
                .collect()
        }
    };
    WeightedMeasure::uniform(points)
}

/// Appends zero-mass zero vectors until the measure has `target_len` points.
pub fn pad_measure(m: &WeightedMeasure, target_len: usize) -> Result<WeightedMeasure, MeasureError> {
    let n = m.len();
    if target_len < n {
        return Err(MeasureError::TargetTooSmall {
            target: target_len,
            len: n,
        });
    }
    let d = m.dim();
    let mut points = m.points.clone();
    let mut weights = m.weights.clone();
    points.resize(target_len, vec![0.0; d]);
    weights.resize(target_len, 0.0);
    Ok(WeightedMeasure { points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(t: usize, d: usize) -> Trajectory {
        Trajectory::from_observations(
            (0..t)
                .map(|i| (0..d).map(|j| (i * d + j) as f64 + 1.0).collect())
                .collect(),
        )
    }

    #[test]
    fn uniform_weights() {
        let m = trajectory_to_measure(&traj(4, 3), FeatureMode::State).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn single_state_has_unit_mass() {
        let m = trajectory_to_measure(&traj(1, 2), FeatureMode::State).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert_eq!(m.points(), &[vec![1.0, 2.0]]);
    }

    #[test]
    fn state_action_pads_last_action_with_zero() {
        let mut t = Trajectory::from_observations(vec![
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 6.0],
        ]);
        t.actions = Some(vec![vec![0.5], vec![-0.5]]);
        let m = trajectory_to_measure(&t, FeatureMode::StateAction).unwrap();
        let expected = vec![
            vec![1.0, 2.0, 0.5],
            vec![3.0, 4.0, -0.5],
            vec![5.0, 6.0, 0.0],
        ];
        assert_eq!(m.points(), expected.as_slice());
        assert_eq!(m.dim(), 3);
    }

    #[test]
    fn state_action_with_full_length_actions() {
        let mut t = Trajectory::from_observations(vec![vec![1.0], vec![2.0]]);
        t.actions = Some(vec![vec![7.0], vec![8.0]]);
        let m = trajectory_to_measure(&t, FeatureMode::StateAction).unwrap();
        assert_eq!(m.points(), &[vec![1.0, 7.0], vec![2.0, 8.0]]);
    }

    #[test]
    fn state_action_requires_actions() {
        assert_eq!(
            trajectory_to_measure(&traj(3, 2), FeatureMode::StateAction),
            Err(MeasureError::MissingActions)
        );
    }

    #[test]
    fn invalid_trajectories_are_rejected() {
        assert_eq!(
            Trajectory::default().validate(),
            Err(MeasureError::EmptyTrajectory)
        );
        let ragged = Trajectory::from_observations(vec![vec![1.0, 2.0], vec![1.0]]);
        assert!(matches!(
            ragged.validate(),
            Err(MeasureError::RaggedObservations { index: 1, .. })
        ));
        let mut bad_rewards = traj(3, 1);
        bad_rewards.rewards = Some(vec![0.0; 2]);
        assert!(matches!(
            bad_rewards.validate(),
            Err(MeasureError::LengthMismatch { field: "rewards", .. })
        ));
    }

    #[test]
    fn padding_to_same_length_is_identity() {
        let m = trajectory_to_measure(&traj(3, 2), FeatureMode::State).unwrap();
        assert_eq!(pad_measure(&m, 3).unwrap(), m);
    }

    #[test]
    fn padding_appends_zero_mass() {
        let m = trajectory_to_measure(&traj(2, 2), FeatureMode::State).unwrap();
        let p = pad_measure(&m, 5).unwrap();
        assert_eq!(p.weights(), &[0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(&p.points()[..2], m.points());
        assert!(p.points()[2..].iter().all(|x| x == &vec![0.0, 0.0]));
        assert_eq!(pad_measure(&p, 5).unwrap(), p);
    }

    #[test]
    fn padding_below_length_fails() {
        let m = trajectory_to_measure(&traj(4, 1), FeatureMode::State).unwrap();
        assert_eq!(
            pad_measure(&m, 3),
            Err(MeasureError::TargetTooSmall { target: 3, len: 4 })
        );
    }

    #[test]
    fn measure_constructor_checks_mass() {
        assert!(WeightedMeasure::new(vec![vec![0.0]; 2], vec![0.5, 0.6]).is_err());
        assert!(WeightedMeasure::new(vec![vec![0.0]; 2], vec![1.5, -0.5]).is_err());
        assert!(WeightedMeasure::new(vec![vec![0.0]; 2], vec![1.0, 0.0]).is_ok());
    }
}
