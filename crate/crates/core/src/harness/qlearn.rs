use std::collections::BTreeMap;

use super::{Action, Cell, Gridworld, HarnessError, ACTIONS};
use crate::measures::Trajectory;

/// Q-iteration stops once no value moves by more than this in a sweep.
pub const UPDATE_TOLERANCE: f64 = 1e-8;

/// Action values for the `(cell, action)` pairs seen in a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TabularQ {
    pub values: BTreeMap<(Cell, Action), f64>,
    pub trained_sweeps: usize,
    pub converged: bool,
}

impl TabularQ {
    /// Unvisited pairs are worth 0.
    pub fn get(&self, s: Cell, a: Action) -> f64 {
        self.values.get(&(s, a)).copied().unwrap_or(0.0)
    }

    /// Greedy action among the actions seen at `s`, or among all actions if
    /// none were seen. Ties go to the earlier action in [`ACTIONS`].
    pub fn greedy(&self, s: Cell) -> Action {
        let seen: Vec<Action> = ACTIONS
            .into_iter()
            .filter(|&a| self.values.contains_key(&(s, a)))
            .collect();
        let candidates = if seen.is_empty() { ACTIONS.to_vec() } else { seen };
        let mut best = candidates[0];
        for &a in &candidates[1..] {
            if self.get(s, a) > self.get(s, best) {
                best = a;
            }
        }
        best
    }
}

/// Reward and successor actions of one transition; `None` when terminal.
type Backup<'a> = (f64, Option<&'a Vec<usize>>);

struct Transition {
    reward: f64,
    next: Cell,
    done: bool,
}

fn decode_action(v: &[f64]) -> Option<Action> {
    if v.len() != ACTIONS.len() {
        return None;
    }
    let hot: Vec<usize> = (0..v.len()).filter(|&i| v[i] == 1.0).collect();
    let rest_zero = v.iter().filter(|&&x| x == 0.0).count() == v.len() - 1;
    match hot.as_slice() {
        [i] if rest_zero => Some(ACTIONS[*i]),
        _ => None,
    }
}

fn transitions(
    episodes: &[Trajectory],
    env: &Gridworld,
) -> Result<BTreeMap<(Cell, Action), Vec<Transition>>, HarnessError> {
    let mut out: BTreeMap<(Cell, Action), Vec<Transition>> = BTreeMap::new();
    for (episode, traj) in episodes.iter().enumerate() {
        let fail = |step: usize, reason: &str| HarnessError::Decode {
            episode,
            step,
            reason: reason.to_string(),
        };
        let actions = traj.actions.as_ref().ok_or_else(|| fail(0, "no actions"))?;
        let rewards = traj.rewards.as_ref().ok_or_else(|| fail(0, "no rewards"))?;
        for t in 0..traj.len().saturating_sub(1) {
            let s = env
                .decode(&traj.observations[t])
                .ok_or_else(|| fail(t, "observation is not a grid cell"))?;
            let next = env
                .decode(&traj.observations[t + 1])
                .ok_or_else(|| fail(t + 1, "observation is not a grid cell"))?;
            let a = actions
                .get(t)
                .and_then(|v| decode_action(v))
                .ok_or_else(|| fail(t, "action is not one-hot"))?;
            let reward = *rewards.get(t).ok_or_else(|| fail(t, "missing reward"))?;
            if !reward.is_finite() {
                return Err(fail(t, "non-finite reward"));
            }
            let done = match &traj.terminals {
                Some(term) => term.get(t + 1).copied().unwrap_or(false),
                None => next == env.goal,
            };
            out.entry((s, a)).or_default().push(Transition { reward, next, done });
        }
    }
    Ok(out)
}

/// Synchronous Q-iteration over the dataset's transitions.
///
/// Each sweep sets `Q(s, a)` to the mean over the dataset's `(s, a)`
/// transitions of `r + discount * max Q(s', a')`, the max ranging over
/// actions seen at `s'` (0 if none, or if the transition is terminal).
pub fn fit_offline_q(
    episodes: &[Trajectory],
    env: &Gridworld,
    sweeps: usize,
) -> Result<TabularQ, HarnessError> {
    env.validate()?;
    let table = transitions(episodes, env)?;
    if table.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let keys: Vec<(Cell, Action)> = table.keys().copied().collect();
    let mut support: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
    for (i, (s, _)) in keys.iter().enumerate() {
        support.entry(*s).or_default().push(i);
    }
    let rows: Vec<Vec<Backup>> = keys
        .iter()
        .map(|k| {
            table[k]
                .iter()
                .map(|tr| {
                    let next = if tr.done { None } else { support.get(&tr.next) };
                    (tr.reward, next)
                })
                .collect()
        })
        .collect();

    let mut q = vec![0.0; keys.len()];
    let mut next_q = vec![0.0; keys.len()];
    let mut done_sweeps = 0;
    let mut converged = false;
    while done_sweeps < sweeps {
        let mut delta: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let total: f64 = row
                .iter()
                .map(|(r, next)| {
                    let v = next.map_or(0.0, |ids| {
                        ids.iter().map(|&j| q[j]).fold(f64::NEG_INFINITY, f64::max)
                    });
                    r + env.discount * v
                })
                .sum();
            next_q[i] = total / row.len() as f64;
            delta = delta.max((next_q[i] - q[i]).abs());
        }
        std::mem::swap(&mut q, &mut next_q);
        done_sweeps += 1;
        if delta < UPDATE_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(TabularQ {
        values: keys.into_iter().zip(q).collect(),
        trained_sweeps: done_sweeps,
        converged,
    })
}

/// Fraction of greedy rollouts from the start that reach the goal within the
/// horizon. The environment is deterministic, so every rollout is the same.
pub fn evaluate_policy(q: &TabularQ, env: &Gridworld, episodes: usize) -> f64 {
    let mut successes = 0;
    for _ in 0..episodes.max(1) {
        let traj = env.rollout(|s| q.greedy(s));
        if traj.terminals.as_ref().and_then(|t| t.last().copied()) == Some(true) {
            successes += 1;
        }
    }
    successes as f64 / episodes.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_dataset, DatasetSpec};

    /// Value iteration on the known model, for every (cell, action).
    fn value_iteration(env: &Gridworld) -> BTreeMap<(Cell, Action), f64> {
        let cells: Vec<Cell> = (0..env.height)
            .flat_map(|y| (0..env.width).map(move |x| (x, y)))
            .filter(|&c| c != env.goal)
            .collect();
        let mut v: BTreeMap<Cell, f64> = cells.iter().map(|&c| (c, 0.0)).collect();
        let q_of = |v: &BTreeMap<Cell, f64>, s: Cell, a: Action| {
            let next = env.step(s, a);
            let cont = if next == env.goal { 0.0 } else { v[&next] };
            env.reward(next) + env.discount * cont
        };
        for _ in 0..20_000 {
            let new: BTreeMap<Cell, f64> = cells
                .iter()
                .map(|&s| {
                    let best = ACTIONS.iter().map(|&a| q_of(&v, s, a)).fold(f64::MIN, f64::max);
                    (s, best)
                })
                .collect();
            v = new;
        }
        cells
            .iter()
            .flat_map(|&s| ACTIONS.iter().map(move |&a| (s, a)))
            .map(|(s, a)| ((s, a), q_of(&v, s, a)))
            .collect()
    }

    fn single_step(env: &Gridworld, s: Cell, a: Action) -> Trajectory {
        let next = env.step(s, a);
        Trajectory {
            id: None,
            observations: vec![env.features(s), env.features(next)],
            actions: Some(vec![a.one_hot()]),
            rewards: Some(vec![env.reward(next), 0.0]),
            terminals: Some(vec![false, next == env.goal]),
        }
    }

    #[test]
    fn full_coverage_matches_value_iteration() {
        let env = Gridworld::new(3, 3, (0, 0), (2, 2)).unwrap();
        let mut data = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                if (x, y) != env.goal {
                    data.extend(ACTIONS.iter().map(|&a| single_step(&env, (x, y), a)));
                }
            }
        }
        let q = fit_offline_q(&data, &env, 100_000).unwrap();
        assert!(q.converged);
        let oracle = value_iteration(&env);
        assert_eq!(q.values.len(), oracle.len());
        for (k, v) in &oracle {
            assert!((q.values[k] - v).abs() < 1e-6, "{k:?}: {} vs {v}", q.values[k]);
        }
        assert_eq!(evaluate_policy(&q, &env, 1), 1.0);
    }

    #[test]
    fn single_expert_episode_is_imitated() {
        let env = Gridworld::new(6, 6, (0, 0), (5, 5)).unwrap();
        let data = generate_dataset(
            &env,
            &DatasetSpec {
                n_expert: 1,
                n_medium: 0,
                n_random: 0,
                medium_epsilon: 0.3,
                seed: 0,
            },
        )
        .unwrap();
        let q = fit_offline_q(&data.truth.episodes, &env, 10_000).unwrap();
        assert_eq!(evaluate_policy(&q, &env, 1), 1.0);
    }

    #[test]
    fn zero_rewards_give_zero_q() {
        let env = Gridworld::new(4, 4, (0, 0), (3, 3)).unwrap();
        let mut data = generate_dataset(
            &env,
            &DatasetSpec {
                n_expert: 1,
                n_medium: 3,
                n_random: 3,
                medium_epsilon: 0.3,
                seed: 1,
            },
        )
        .unwrap()
        .truth
        .episodes;
        for t in &mut data {
            t.rewards = Some(vec![0.0; t.len()]);
        }
        let q = fit_offline_q(&data, &env, 100).unwrap();
        assert!(q.values.values().all(|&v| v == 0.0));
        assert!(q.converged);
    }

    #[test]
    fn zero_q_on_corridor_fails() {
        // Ties go to Up, which never moves in a one-row corridor.
        let env = Gridworld::new(5, 1, (0, 0), (4, 0)).unwrap();
        assert_eq!(evaluate_policy(&TabularQ::default(), &env, 3), 0.0);
    }

    #[test]
    fn adjacent_goal_is_reached() {
        let env = Gridworld::new(3, 3, (1, 1), (2, 1)).unwrap();
        let mut q = TabularQ::default();
        q.values.insert(((1, 1), Action::Right), 1.0);
        q.values.insert(((1, 1), Action::Up), 0.5);
        assert_eq!(evaluate_policy(&q, &env, 1), 1.0);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let env = Gridworld::new(3, 3, (0, 0), (2, 2)).unwrap();
        assert!(matches!(fit_offline_q(&[], &env, 10), Err(HarnessError::EmptyDataset)));
    }
}
