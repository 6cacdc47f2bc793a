//! Composite reward shaping and group-relative advantage estimation.
//!
//! Each sampled trajectory earns two binary signals: whether the judged
//! reasoning mode matched its label, and whether the final answer verified.
//! [`composite_reward`] folds them into one scalar in which the answer term
//! is modulated by judge correctness, so a right answer reached through the
//! wrong mode decision earns strictly less than one reached through the
//! right one. Advantages are computed per query group, normalized by the
//! group's own reward spread.

use serde::{Deserialize, Serialize};

use crate::format::ReasoningMode;
use crate::num::pairwise_sum;

/// Weights for the composite reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of the standalone judge term.
    pub judge_weight: f64,
    /// Fraction of the answer term paid even when the judge was wrong.
    pub modulation_floor: f64,
    /// Reward spread below which a group's advantages collapse to zero.
    pub std_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { judge_weight: 0.2, modulation_floor: 0.5, std_floor: 1e-6 }
    }
}

impl RewardConfig {
    /// Range checks: weights in [0,1], positive std floor.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.judge_weight) {
            return Err(format!("judge_weight {} outside [0, 1]", self.judge_weight));
        }
        if !(0.0..=1.0).contains(&self.modulation_floor) {
            return Err(format!("modulation_floor {} outside [0, 1]", self.modulation_floor));
        }
        if !(self.std_floor.is_finite() && self.std_floor > 0.0) {
            return Err(format!("std_floor {} must be positive", self.std_floor));
        }
        Ok(())
    }
}

/// Whether the chosen reasoning mode matches the query's label.
pub fn judge_reward(chosen: ReasoningMode, label: ReasoningMode) -> bool {
    chosen == label
}

/// Scalar reward from the two binary signals:
/// `w_j * R_j + R_a * (floor + (1 - floor) * R_j)`.
///
/// With the default weights the four possible outcomes grade
/// 1.2 (both right) > 0.5 (answer only) > 0.2 (judge only) > 0.
pub fn composite_reward(judge_correct: bool, answer_correct: bool, cfg: &RewardConfig) -> f64 {
    let r_j = if judge_correct { 1.0 } else { 0.0 };
    let r_a = if answer_correct { 1.0 } else { 0.0 };
    cfg.judge_weight * r_j + r_a * (cfg.modulation_floor + (1.0 - cfg.modulation_floor) * r_j)
}

/// One sampled trajectory, scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Query this trajectory answered.
    pub query_id: u64,
    /// Reasoning mode the policy chose.
    pub mode: ReasoningMode,
    /// Mode matched the label.
    pub judge_reward: bool,
    /// Final answer verified.
    pub answer_reward: bool,
    /// Whitespace-token count of the full transcript.
    pub token_count: u64,
    /// Composite scalar reward.
    pub total_reward: f64,
    /// Feature vector the mode decision was sampled from.
    pub policy_features: Vec<f64>,
    /// d/dw factor of log P(mode): `1{on} - P(on)` at the sampled features.
    pub score_factor: f64,
}

/// All trajectories sampled for one query in one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGroup {
    /// The shared query id.
    pub query_id: u64,
    /// The group's trajectories, in sampling order.
    pub trajectories: Vec<TrajectoryRecord>,
}

/// Group-relative advantages: `(r_i - mean) / max(std, floor)` with the
/// population standard deviation. A group whose spread is below the floor is
/// uninformative and gets all-zero advantages rather than amplified noise.
pub fn advantages_from_rewards(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    let n = rewards.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = pairwise_sum(rewards) / n as f64;
    let var = pairwise_sum(&rewards.iter().map(|r| (r - mean) * (r - mean)).collect::<Vec<_>>()) / n as f64;
    let std = var.sqrt();
    if std < std_floor {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// [`advantages_from_rewards`] over a [`TrajectoryGroup`]'s total rewards.
pub fn group_advantages(group: &TrajectoryGroup, cfg: &RewardConfig) -> Vec<f64> {
    let rewards: Vec<f64> = group.trajectories.iter().map(|t| t.total_reward).collect();
    advantages_from_rewards(&rewards, cfg.std_floor)
}
