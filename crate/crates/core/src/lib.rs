//! Optimal transport reward labeling for offline reinforcement learning.
//!
//! Episodes without rewards are aligned against expert demonstrations with
//! entropy-regularized optimal transport, and each step is rewarded by minus
//! the cost it transports under the optimal coupling:
//!
//! ```text
//! r(s_t) = - sum_t' C[t][t'] * P*[t][t']
//! ```
//!
//! The crate also ships a small gridworld harness with tabular offline
//! Q-learning, used to check end to end that the labels support policy
//! learning.

pub mod cli;
pub mod cost;
pub mod dataset;
pub mod harness;
pub mod matrix;
pub mod measures;
pub mod labeler;
pub mod ot;
pub mod stats;

pub use cost::{cosine_cost, pairwise_costs, squared_euclidean_cost, CostKind, CostMatrix};
pub use matrix::Matrix;
pub use measures::{pad_measure, trajectory_to_measure, FeatureMode, Trajectory, WeightedMeasure};
pub use ot::{lp_oracle, sinkhorn, Coupling, SinkhornParams, SolverError};
