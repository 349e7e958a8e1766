use std::time::{Duration, Instant};

use super::{
    evaluate_policy, fit_offline_q, generate_dataset, GeneratedData, GridworldConfig, HarnessError,
    LabelerChoice,
};
use crate::labeler::{label_dataset, label_dataset_uniform, uds_rewards};
use crate::measures::Trajectory;
use crate::stats::{pearson, spearman, Correlation};

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub labeler: LabelerChoice,
    pub success_rate: f64,
    pub q_sweeps: usize,
    pub q_converged: bool,
    /// Episodes the Q-function was fitted on.
    pub training: Vec<Trajectory>,
    pub data: GeneratedData,
    /// Labeled vs ground-truth episodic returns over the generated episodes;
    /// `None` for the truth and UDS labelers.
    pub pearson: Option<Correlation>,
    pub spearman: Option<Correlation>,
    pub label_time: Duration,
    pub fit_time: Duration,
}

/// Generates the dataset, labels it, fits offline Q and evaluates the policy.
pub fn run_demo(cfg: &GridworldConfig, labeler: LabelerChoice) -> Result<DemoReport, HarnessError> {
    let data = generate_dataset(&cfg.env, &cfg.data)?;
    let started = Instant::now();
    let training: Vec<Trajectory> = match labeler {
        LabelerChoice::Truth => data.truth.episodes.clone(),
        LabelerChoice::Otr => label_dataset(&data.unlabeled.episodes, &data.experts.episodes, &cfg.label)?
            .iter()
            .map(|l| l.to_trajectory())
            .collect(),
        LabelerChoice::Uniform => {
            label_dataset_uniform(&data.unlabeled.episodes, &data.experts.episodes, &cfg.label)?
                .iter()
                .map(|l| l.to_trajectory())
                .collect()
        }
        LabelerChoice::Uds => {
            let r_min = cfg.env.step_reward.min(cfg.env.goal_reward);
            uds_rewards(&data.unlabeled.episodes, &data.experts.episodes, r_min)?
                .iter()
                .map(|l| l.to_trajectory())
                .collect()
        }
    };
    let label_time = started.elapsed();

    let (pearson, spearman) = match labeler {
        LabelerChoice::Otr | LabelerChoice::Uniform => {
            let labeled: Vec<f64> = training.iter().map(|t| t.episodic_return().unwrap_or(0.0)).collect();
            let truth: Vec<f64> = data
                .truth
                .episodes
                .iter()
                .map(|t| t.episodic_return().unwrap_or(0.0))
                .collect();
            (Some(pearson(&labeled, &truth)), Some(spearman(&labeled, &truth)))
        }
        _ => (None, None),
    };

    let started = Instant::now();
    let q = fit_offline_q(&training, &cfg.env, cfg.sweeps)?;
    let success_rate = evaluate_policy(&q, &cfg.env, cfg.eval_episodes);
    Ok(DemoReport {
        labeler,
        success_rate,
        q_sweeps: q.trained_sweeps,
        q_converged: q.converged,
        training,
        data,
        pearson,
        spearman,
        label_time,
        fit_time: started.elapsed(),
    })
}
