//! Per-step rewards from optimal transport alignment against expert episodes.
//!
//! For an unlabeled episode and one expert episode the labeler builds both
//! empirical measures, computes the pairwise cost matrix `C`, solves for the
//! entropic coupling `P`, and rewards step `t` with `-sum_t' C[t][t'] P[t][t']`.
//! With several experts, the expert giving the highest episodic reward wins.
//! Rewards are then squashed with `alpha * exp(E * r)` and optionally rescaled
//! across the whole dataset.

mod baselines;
mod config;

use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{pairwise_costs, CostError, CostMatrix};
use crate::measures::{trajectory_to_measure, MeasureError, Trajectory, WeightedMeasure};
use crate::ot::{sinkhorn, Coupling, SolverError};

pub use baselines::{label_dataset_uniform, uds_rewards, uniform_plan_rewards};
pub use config::{LabelConfig, PostScale, Preset, ScaleMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no expert demonstrations given")]
    EmptyExpertSet,
    #[error("invalid label config: {0}")]
    InvalidConfig(&'static str),
    #[error("reward {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("all episodic returns equal {0}; cannot rescale by the return range")]
    DegenerateReturnRange(f64),
    #[error("expert episode {index} has no stored rewards")]
    ExpertRewardsMissing { index: usize },
}

/// An episode together with its reward labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub base: Trajectory,
    /// `-sum_t' C[t][t'] P[t][t']`, all nonpositive.
    pub raw_ot_rewards: Vec<f64>,
    /// Squashed rewards, before any dataset-level post-scaling.
    pub ot_rewards: Vec<f64>,
    /// Final rewards after post-scaling; what gets written out.
    pub rewards: Vec<f64>,
    /// Index of the expert whose alignment produced the rewards.
    pub source_expert: Option<usize>,
    /// False if any Sinkhorn solve for this episode hit its iteration cap.
    pub converged: bool,
}

impl LabeledTrajectory {
    pub fn episodic_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// The base episode with its rewards replaced by the labels.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            rewards: Some(self.rewards.clone()),
            ..self.base.clone()
        }
    }
}

/// Raw rewards of one episode aligned to one expert.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub rewards: Vec<f64>,
    pub costs: CostMatrix,
    pub coupling: Coupling,
}

/// Result of aligning one episode against every expert.
#[derive(Debug, Clone, PartialEq)]
pub struct BestAlignment {
    pub rewards: Vec<f64>,
    pub source_expert: usize,
    /// Raw episodic return against each expert, in expert order.
    pub expert_returns: Vec<f64>,
    /// Every solve converged.
    pub converged: bool,
}

fn align_measures(
    unlabeled: &WeightedMeasure,
    expert: &WeightedMeasure,
    cfg: &LabelConfig,
) -> Result<Alignment, LabelError> {
    let costs = pairwise_costs(unlabeled, expert, cfg.cost)?;
    let coupling = sinkhorn(&costs, unlabeled.weights(), expert.weights(), &cfg.sinkhorn)?;
    let rewards = coupling.row_costs(&costs).into_iter().map(|c| -c).collect();
    Ok(Alignment {
        rewards,
        costs,
        coupling,
    })
}

/// Aligns `unlabeled` to a single expert episode and returns the per-step rewards
/// with the coupling that produced them.
pub fn ot_rewards_single(
    unlabeled: &Trajectory,
    expert: &Trajectory,
    cfg: &LabelConfig,
) -> Result<Alignment, LabelError> {
    cfg.validate()?;
    let x = trajectory_to_measure(unlabeled, cfg.features)?;
    let y = trajectory_to_measure(expert, cfg.features)?;
    align_measures(&x, &y, cfg)
}

fn best_of(
    unlabeled: &WeightedMeasure,
    experts: &[WeightedMeasure],
    cfg: &LabelConfig,
) -> Result<BestAlignment, LabelError> {
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut expert_returns = Vec::with_capacity(experts.len());
    let mut converged = true;
    for (k, expert) in experts.iter().enumerate() {
        let al = align_measures(unlabeled, expert, cfg)?;
        converged &= al.coupling.converged;
        let rewards = al.rewards;
        let ret: f64 = rewards.iter().sum();
        expert_returns.push(ret);
        // strict comparison keeps the lowest index on ties
        if best.as_ref().is_none_or(|(_, _, r)| ret > *r) {
            best = Some((k, rewards, ret));
        }
    }
    let (source_expert, rewards, _) = best.ok_or(LabelError::EmptyExpertSet)?;
    Ok(BestAlignment {
        rewards,
        source_expert,
        expert_returns,
        converged,
    })
}

fn expert_measures(
    experts: &[Trajectory],
    cfg: &LabelConfig,
) -> Result<Vec<WeightedMeasure>, LabelError> {
    if experts.is_empty() {
        return Err(LabelError::EmptyExpertSet);
    }
    experts
        .iter()
        .map(|e| trajectory_to_measure(e, cfg.features).map_err(LabelError::from))
        .collect()
}

/// Aligns `unlabeled` to every expert and keeps the rewards of the expert with
/// the highest raw episodic return (lowest index on ties).
pub fn aggregate_over_experts(
    unlabeled: &Trajectory,
    experts: &[Trajectory],
    cfg: &LabelConfig,
) -> Result<BestAlignment, LabelError> {
    cfg.validate()?;
    let experts = expert_measures(experts, cfg)?;
    let x = trajectory_to_measure(unlabeled, cfg.features)?;
    best_of(&x, &experts, cfg)
}

/// Elementwise `alpha * exp(E * r)`; see [`LabelConfig::squash_exponent`].
pub fn squash(raw: &[f64], cfg: &LabelConfig) -> Result<Vec<f64>, LabelError> {
    let e = cfg.squash_exponent();
    raw.iter()
        .enumerate()
        .map(|(index, &r)| {
            if r.is_finite() {
                Ok(cfg.squash_alpha * (e * r).exp())
            } else {
                Err(LabelError::NonFiniteInput { index })
            }
        })
        .collect()
}

/// Recomputes the final `rewards` of every episode from its squashed rewards.
pub fn post_scale_rewards(
    mut dataset: Vec<LabeledTrajectory>,
    mode: PostScale,
) -> Result<Vec<LabeledTrajectory>, LabelError> {
    let transform: Box<dyn Fn(f64) -> f64> = match mode {
        PostScale::None => Box::new(|r| r),
        PostScale::Shift { delta } => Box::new(move |r| r + delta),
        PostScale::ReturnRange { target } => {
            let returns = dataset.iter().map(|e| e.ot_rewards.iter().sum::<f64>());
            let (lo, hi) = returns.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            });
            if dataset.is_empty() {
                return Ok(dataset);
            }
            if !(hi > lo) {
                return Err(LabelError::DegenerateReturnRange(lo));
            }
            let factor = target / (hi - lo);
            Box::new(move |r| r * factor)
        }
    };
    for ep in &mut dataset {
        ep.rewards = ep.ot_rewards.iter().map(|&r| transform(r)).collect();
    }
    Ok(dataset)
}

fn label_one(
    traj: &Trajectory,
    experts: &[WeightedMeasure],
    cfg: &LabelConfig,
) -> Result<LabeledTrajectory, LabelError> {
    let x = trajectory_to_measure(traj, cfg.features)?;
    let best = best_of(&x, experts, cfg)?;
    let ot_rewards = squash(&best.rewards, cfg)?;
    Ok(LabeledTrajectory {
        base: traj.clone(),
        rewards: ot_rewards.clone(),
        ot_rewards,
        raw_ot_rewards: best.rewards,
        source_expert: Some(best.source_expert),
        converged: best.converged,
    })
}

/// Labels every unlabeled episode against the experts.
///
/// Episodes are processed in parallel on the current rayon pool; each one is
/// independent, so the output equals a sequential run exactly. Post-scaling is
/// the only step that looks at the whole dataset. Experts are not added to
/// the output.
pub fn label_dataset(
    unlabeled: &[Trajectory],
    experts: &[Trajectory],
    cfg: &LabelConfig,
) -> Result<Vec<LabeledTrajectory>, LabelError> {
    cfg.validate()?;
    if unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    let experts = expert_measures(experts, cfg)?;
    let labeled = unlabeled
        .par_iter()
        .map(|t| label_one(t, &experts, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    post_scale_rewards(labeled, cfg.post_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Trajectory {
        Trajectory::from_observations(
            (0..t)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
    }

    fn plain() -> LabelConfig {
        LabelConfig::preset(Preset::Plain, None)
    }

    #[test]
    fn self_alignment_is_nearly_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = random_traj(&mut rng, 12, 4);
        let al = ot_rewards_single(&e, &e, &plain()).unwrap();
        assert!(al.rewards.iter().all(|&r| r >= -1e-3 && r <= 0.0), "{:?}", al.rewards);
    }

    #[test]
    fn single_step_reward_is_minus_cost() {
        let x = Trajectory::from_observations(vec![vec![1.0, 2.0]]);
        let y = Trajectory::from_observations(vec![vec![2.0, -1.0]]);
        let al = ot_rewards_single(&x, &y, &plain()).unwrap();
        let c = crate::cost::cosine_cost(&[1.0, 2.0], &[2.0, -1.0]).unwrap();
        assert_eq!(al.rewards, vec![-c]);
    }

    #[test]
    fn two_by_two_rewards_vanish() {
        // Orthogonal pairs give C = [[0,1],[1,0]] under the cosine cost.
        let x = Trajectory::from_observations(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let al = ot_rewards_single(&x, &x.clone(), &plain()).unwrap();
        assert_eq!(al.costs.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        for r in al.rewards {
            assert!(r.abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn rewards_sum_to_minus_transport_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = LabelConfig {
            cost: CostKind::SquaredEuclidean,
            ..plain()
        };
        let x = random_traj(&mut rng, 9, 3);
        let y = random_traj(&mut rng, 14, 3);
        let al = ot_rewards_single(&x, &y, &cfg).unwrap();
        let total: f64 = al.rewards.iter().sum();
        assert!((total + al.coupling.transport_cost).abs() <= 1e-9);
    }

    #[test]
    fn single_expert_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_traj(&mut rng, 7, 3);
        let e = random_traj(&mut rng, 5, 3);
        let best = aggregate_over_experts(&x, std::slice::from_ref(&e), &plain()).unwrap();
        let single = ot_rewards_single(&x, &e, &plain()).unwrap();
        assert_eq!(best.source_expert, 0);
        assert_eq!(best.rewards, single.rewards);
    }

    #[test]
    fn copy_of_episode_wins_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_traj(&mut rng, 8, 3);
        let far: Trajectory =
            Trajectory::from_observations(x.observations.iter().map(|o| o.iter().map(|v| -v).collect()).collect());
        let best = aggregate_over_experts(&x, &[x.clone(), far], &plain()).unwrap();
        assert_eq!(best.source_expert, 0);
        let best = aggregate_over_experts(&x, &[random_traj(&mut rng, 8, 3), x.clone()], &plain())
            .unwrap();
        assert_eq!(best.source_expert, 1);
    }

    #[test]
    fn aggregation_picks_argmax_of_recomputed_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = plain();
        for _ in 0..10 {
            let x = random_traj(&mut rng, 10, 4);
            let experts: Vec<_> = (0..3)
                .map(|_| {
                    let t = 6 + rng.random_range(0..6);
                    random_traj(&mut rng, t, 4)
                })
                .collect();
            let best = aggregate_over_experts(&x, &experts, &cfg).unwrap();
            let mut sums = Vec::new();
            for e in &experts {
                let r = ot_rewards_single(&x, e, &cfg).unwrap().rewards;
                let mut s = 0.0;
                for v in &r {
                    s += v;
                }
                sums.push(s);
            }
            let mut argmax = 0;
            for k in 1..sums.len() {
                if sums[k] > sums[argmax] {
                    argmax = k;
                }
            }
            assert_eq!(best.source_expert, argmax);
            assert_eq!(best.expert_returns, sums);
        }
    }

    #[test]
    fn ties_pick_lowest_expert() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_traj(&mut rng, 5, 2);
        let e = random_traj(&mut rng, 5, 2);
        let best = aggregate_over_experts(&x, &[e.clone(), e.clone(), e], &plain()).unwrap();
        assert_eq!(best.source_expert, 0);
    }

    #[test]
    fn empty_expert_set() {
        let x = Trajectory::from_observations(vec![vec![1.0]]);
        assert_eq!(
            aggregate_over_experts(&x, &[], &plain()),
            Err(LabelError::EmptyExpertSet)
        );
    }

    #[test]
    fn squash_reference_values() {
        for preset in [Preset::Locomotion, Preset::Antmaze] {
            let cfg = LabelConfig::preset(preset, Some(6));
            assert_eq!(squash(&[0.0], &cfg).unwrap(), vec![5.0]);
        }
        let plain = plain();
        let s = squash(&[-1.0], &plain).unwrap()[0];
        assert!((s - 0.367879).abs() < 1e-6);
        let loco = LabelConfig::preset(Preset::Locomotion, Some(6));
        let s = squash(&[-0.006], &loco).unwrap()[0];
        // 5 * exp(-5 * 1000 * 0.006 / 6) = 5 * exp(-5)
        assert!((s - 5.0 * (-5.0f64).exp()).abs() < 1e-12);
        assert!((s - 0.033690).abs() < 1e-6);
    }

    #[test]
    fn squash_rejects_nan() {
        assert_eq!(
            squash(&[0.0, f64::NAN], &plain()),
            Err(LabelError::NonFiniteInput { index: 1 })
        );
    }

    fn labeled(rewards: Vec<f64>) -> LabeledTrajectory {
        LabeledTrajectory {
            base: Trajectory::from_observations(vec![vec![0.0]; rewards.len()]),
            raw_ot_rewards: vec![0.0; rewards.len()],
            ot_rewards: rewards.clone(),
            rewards,
            source_expert: Some(0),
            converged: true,
        }
    }

    #[test]
    fn post_scale_modes() {
        let data = vec![labeled(vec![0.0, 0.0]), labeled(vec![200.0, 300.0])];
        let same = post_scale_rewards(data.clone(), PostScale::None).unwrap();
        assert_eq!(same, data);

        let scaled =
            post_scale_rewards(data.clone(), PostScale::ReturnRange { target: 1000.0 }).unwrap();
        assert_eq!(scaled[1].rewards, vec![400.0, 600.0]);
        assert_eq!(scaled[1].ot_rewards, vec![200.0, 300.0]);

        let shifted = post_scale_rewards(data, PostScale::Shift { delta: -2.0 }).unwrap();
        assert_eq!(shifted[0].rewards, vec![-2.0, -2.0]);
        assert_eq!(shifted[1].rewards, vec![198.0, 298.0]);
    }

    #[test]
    fn degenerate_return_range() {
        let data = vec![labeled(vec![1.0]), labeled(vec![1.0])];
        assert_eq!(
            post_scale_rewards(data, PostScale::ReturnRange { target: 1000.0 }),
            Err(LabelError::DegenerateReturnRange(1.0))
        );
    }

    #[test]
    fn label_expert_against_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = random_traj(&mut rng, 10, 5);
        let out = label_dataset(std::slice::from_ref(&e), std::slice::from_ref(&e), &plain()).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].rewards.iter().all(|r| (r - 1.0).abs() < 1e-3));
        assert_eq!(out[0].source_expert, Some(0));
    }

    #[test]
    fn empty_unlabeled_set() {
        let e = Trajectory::from_observations(vec![vec![1.0]]);
        assert!(label_dataset(&[], &[e], &plain()).unwrap().is_empty());
    }
}
