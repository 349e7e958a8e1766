//! Reference labelers: the uniform transport plan and UDS.

use rayon::prelude::*;

use super::{post_scale_rewards, squash, LabelConfig, LabelError, LabeledTrajectory};
use crate::cost::pairwise_costs;
use crate::measures::{trajectory_to_measure, Trajectory};

/// Rewards under the plan that spreads every step evenly over the expert:
/// `r[t] = -sum_t' C[t][t'] / (T * T')`.
pub fn uniform_plan_rewards(
    unlabeled: &Trajectory,
    expert: &Trajectory,
    cfg: &LabelConfig,
) -> Result<Vec<f64>, LabelError> {
    cfg.validate()?;
    let x = trajectory_to_measure(unlabeled, cfg.features)?;
    let y = trajectory_to_measure(expert, cfg.features)?;
    let costs = pairwise_costs(&x, &y, cfg.cost)?;
    let mass = 1.0 / (x.len() * y.len()) as f64;
    Ok((0..costs.rows())
        .map(|i| -costs.row(i).iter().map(|c| c * mass).sum::<f64>())
        .collect())
}

/// [`super::label_dataset`] with the uniform plan in place of the optimal one.
pub fn label_dataset_uniform(
    unlabeled: &[Trajectory],
    experts: &[Trajectory],
    cfg: &LabelConfig,
) -> Result<Vec<LabeledTrajectory>, LabelError> {
    cfg.validate()?;
    if experts.is_empty() {
        return Err(LabelError::EmptyExpertSet);
    }
    let labeled = unlabeled
        .par_iter()
        .map(|traj| {
            let mut best: Option<(usize, Vec<f64>, f64)> = None;
            for (k, expert) in experts.iter().enumerate() {
                let r = uniform_plan_rewards(traj, expert, cfg)?;
                let ret: f64 = r.iter().sum();
                if best.as_ref().is_none_or(|(_, _, b)| ret > *b) {
                    best = Some((k, r, ret));
                }
            }
            let (k, raw, _) = best.expect("experts is nonempty");
            let ot_rewards = squash(&raw, cfg)?;
            Ok(LabeledTrajectory {
                base: traj.clone(),
                rewards: ot_rewards.clone(),
                ot_rewards,
                raw_ot_rewards: raw,
                source_expert: Some(k),
                converged: true,
            })
        })
        .collect::<Result<Vec<_>, LabelError>>()?;
    post_scale_rewards(labeled, cfg.post_scale)
}

/// UDS baseline: every unlabeled step gets `r_min`, experts keep their own
/// rewards. Experts come first in the output.
pub fn uds_rewards(
    unlabeled: &[Trajectory],
    experts: &[Trajectory],
    r_min: f64,
) -> Result<Vec<LabeledTrajectory>, LabelError> {
    let mut out = Vec::with_capacity(experts.len() + unlabeled.len());
    for (index, e) in experts.iter().enumerate() {
        let rewards = e
            .rewards
            .clone()
            .ok_or(LabelError::ExpertRewardsMissing { index })?;
        out.push(LabeledTrajectory {
            base: e.clone(),
            raw_ot_rewards: rewards.clone(),
            ot_rewards: rewards.clone(),
            rewards,
            source_expert: None,
            converged: true,
        });
    }
    for u in unlabeled {
        let rewards = vec![r_min; u.len()];
        out.push(LabeledTrajectory {
            base: u.clone(),
            raw_ot_rewards: rewards.clone(),
            ot_rewards: rewards.clone(),
            rewards,
            source_expert: None,
            converged: true,
        });
    }
    Ok(out)
}
