//! Seeded policy-gradient simulator of reasoning-mode training dynamics.
//!
//! The policy is a logistic gate over small query features deciding whether
//! to think step-by-step. The environment models what that choice costs:
//! thinking keeps accuracy high on hard queries but spends an order of
//! magnitude more tokens; skipping it is cheap and fine on easy ones.
//! Training samples trajectory groups per query, converts composite rewards
//! into group-relative advantages, and ascends the score-function gradient.
//! Run with the defaults, a warm-started always-think policy learns to keep
//! thinking on hard queries while dropping it on easy ones — mean token
//! usage falls while reward rises.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coldstart::{apportion_largest_remainder, QueryRecord};
use crate::format::ReasoningMode;
use crate::reward::{
    composite_reward, group_advantages, judge_reward, RewardConfig, TrajectoryGroup,
    TrajectoryRecord,
};
use crate::rng::StreamId;
use crate::Domain;

/// Policy feature dimension: six domain indicators, difficulty, bias.
pub const FEATURE_DIM: usize = 8;

/// Difficulty at or above which a query counts as hard in metrics.
pub const HARD_DIFFICULTY: f64 = 0.5;

/// Environment response model: accuracy and token cost of each mode as
/// linear functions of difficulty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Think-on accuracy at difficulty 0.
    pub on_base: f64,
    /// Think-on accuracy lost per unit difficulty.
    pub on_slope: f64,
    /// Think-off accuracy at difficulty 0.
    pub off_base: f64,
    /// Think-off accuracy lost per unit difficulty.
    pub off_slope: f64,
    /// Think-on tokens at difficulty 0.
    pub t_on_base: f64,
    /// Extra think-on tokens per unit difficulty.
    pub t_on_slope: f64,
    /// Think-off tokens at difficulty 0.
    pub t_off_base: f64,
    /// Extra think-off tokens per unit difficulty.
    pub t_off_slope: f64,
    /// Utility lost per token when labeling the efficient mode.
    pub cost_weight: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            on_base: 0.95,
            on_slope: 0.35,
            off_base: 0.95,
            off_slope: 0.90,
            t_on_base: 4000.0,
            t_on_slope: 8000.0,
            t_off_base: 400.0,
            t_off_slope: 400.0,
            cost_weight: 1e-5,
        }
    }
}

impl EnvConfig {
    /// Range checks.
    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            ("on_base", self.on_base),
            ("off_base", self.off_base),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        let nonneg = [
            ("on_slope", self.on_slope),
            ("off_slope", self.off_slope),
            ("t_on_base", self.t_on_base),
            ("t_on_slope", self.t_on_slope),
            ("t_off_base", self.t_off_base),
            ("t_off_slope", self.t_off_slope),
            ("cost_weight", self.cost_weight),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Probability of a correct answer under `mode` at this difficulty.
    pub fn p_correct(&self, mode: ReasoningMode, difficulty: f64) -> f64 {
        let (base, slope) = match mode {
            ReasoningMode::ThinkOn => (self.on_base, self.on_slope),
            ReasoningMode::ThinkOff => (self.off_base, self.off_slope),
        };
        (base - slope * difficulty).clamp(0.0, 1.0)
    }

    /// Tokens a transcript under `mode` costs at this difficulty.
    pub fn token_count(&self, mode: ReasoningMode, difficulty: f64) -> u64 {
        let (base, slope) = match mode {
            ReasoningMode::ThinkOn => (self.t_on_base, self.t_on_slope),
            ReasoningMode::ThinkOff => (self.t_off_base, self.t_off_slope),
        };
        (base + slope * difficulty).round().max(0.0) as u64
    }

    /// Accuracy minus token cost — what a rational mode choice maximizes.
    pub fn utility(&self, mode: ReasoningMode, difficulty: f64) -> f64 {
        self.p_correct(mode, difficulty)
            - self.cost_weight * self.token_count(mode, difficulty) as f64
    }

    /// The mode a rational agent should pick: think-on exactly when its
    /// utility strictly exceeds think-off's (ties go to the cheaper mode).
    pub fn env_label(&self, difficulty: f64) -> ReasoningMode {
        if self.utility(ReasoningMode::ThinkOn, difficulty) > self.utility(ReasoningMode::ThinkOff, difficulty)
        {
            ReasoningMode::ThinkOn
        } else {
            ReasoningMode::ThinkOff
        }
    }
}

/// Logistic mode-gate weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// One weight per feature; the last is the bias.
    pub weights: [f64; FEATURE_DIM],
}

impl PolicyParams {
    /// The warm-started policy: mode-agnostic except for a bias that puts
    /// P(think-on) at 0.9 everywhere, mirroring a model cold-started on
    /// mostly-thinking transcripts.
    pub fn initial() -> Self {
        let mut weights = [0.0; FEATURE_DIM];
        weights[FEATURE_DIM - 1] = 9.0f64.ln();
        PolicyParams { weights }
    }
}

/// Feature vector of a query: domain one-hot, difficulty, constant bias.
pub fn features(query: &QueryRecord) -> [f64; FEATURE_DIM] {
    let mut x = [0.0; FEATURE_DIM];
    x[query.domain.index()] = 1.0;
    x[6] = query.difficulty;
    x[7] = 1.0;
    x
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// P(think-on) the policy assigns to a feature vector.
pub fn think_on_probability(policy: &PolicyParams, x: &[f64; FEATURE_DIM]) -> f64 {
    let z: f64 = policy.weights.iter().zip(x).map(|(w, f)| w * f).sum();
    sigmoid(z)
}

/// Samples one trajectory: the policy picks a mode, the environment grades
/// the mode choice and the answer, and the composite reward is recorded.
pub fn sample_trajectory(
    policy: &PolicyParams,
    query: &QueryRecord,
    env: &EnvConfig,
    reward_cfg: &RewardConfig,
    rng: &mut impl rand::Rng,
) -> TrajectoryRecord {
    let x = features(query);
    let p_on = think_on_probability(policy, &x);
    let mode = if rng.random_bool(p_on) { ReasoningMode::ThinkOn } else { ReasoningMode::ThinkOff };
    let judge = judge_reward(mode, env.env_label(query.difficulty));
    let answer = rng.random_bool(env.p_correct(mode, query.difficulty));
    let token_count = env.token_count(mode, query.difficulty);
    TrajectoryRecord {
        query_id: query.id,
        mode,
        judge_reward: judge,
        answer_reward: answer,
        token_count,
        total_reward: composite_reward(judge, answer, reward_cfg),
        policy_features: x.to_vec(),
        score_factor: if mode == ReasoningMode::ThinkOn { 1.0 - p_on } else { -p_on },
    }
}

/// One advantage-weighted score-function ascent step over a batch of
/// trajectory groups, normalized by the total trajectory count. Summation
/// order is fixed (groups in order, trajectories in order) so updates are
/// bit-reproducible.
pub fn policy_update(
    policy: &mut PolicyParams,
    groups: &[TrajectoryGroup],
    reward_cfg: &RewardConfig,
    learning_rate: f64,
) {
    let total: usize = groups.iter().map(|g| g.trajectories.len()).sum();
    if total == 0 {
        return;
    }
    let mut delta = [0.0; FEATURE_DIM];
    for group in groups {
        let advantages = group_advantages(group, reward_cfg);
        for (trajectory, advantage) in group.trajectories.iter().zip(advantages) {
            let coeff = advantage * trajectory.score_factor;
            for (d, f) in delta.iter_mut().zip(&trajectory.policy_features) {
                *d += coeff * f;
            }
        }
    }
    let scale = learning_rate / total as f64;
    for (w, d) in policy.weights.iter_mut().zip(delta) {
        *w += scale * d;
    }
}

/// Training-loop sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Queries drawn per update.
    pub queries_per_update: usize,
    /// Trajectories sampled per query.
    pub trajectories_per_query: usize,
    /// Ascent step size.
    pub learning_rate: f64,
    /// Gradient updates to run.
    pub updates: usize,
    /// Root seed for every stream in the run.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            queries_per_update: 64,
            trajectories_per_query: 32,
            learning_rate: 0.05,
            updates: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Range checks.
    pub fn validate(&self) -> Result<(), String> {
        if self.queries_per_update == 0 {
            return Err("queries_per_update must be at least 1".into());
        }
        if self.trajectories_per_query < 2 {
            return Err("trajectories_per_query must be at least 2 (a group of one has no reward spread)".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("learning_rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }
}

/// Batch-level measurements taken before each update (and once more on the
/// final policy).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Update index the batch was sampled at.
    pub update: usize,
    /// Fraction of trajectories that chose think-on.
    pub think_on_rate: f64,
    /// Mean transcript tokens.
    pub mean_tokens: f64,
    /// Mean composite reward.
    pub mean_total_reward: f64,
    /// Fraction of trajectories whose mode matched the environment label.
    pub judge_accuracy: f64,
    /// Think-on rate over trajectories of hard queries (difficulty at least
    /// [`HARD_DIFFICULTY`]); `None` when the batch drew no hard query.
    pub hard_think_on_rate: Option<f64>,
}

/// A finished training run: one metrics row per batch, plus the final gate.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRun {
    /// Rows 0..=updates; row 0 measures the initial policy, the final row
    /// measures the trained policy without updating it.
    pub metrics: Vec<SimMetrics>,
    /// The trained gate weights.
    pub final_policy: PolicyParams,
}

/// Simulator failures.
#[derive(Debug, Error)]
pub enum SimError {
    /// No queries to train on.
    #[error("training corpus is empty")]
    EmptyCorpus,
    /// A size or rate is out of range.
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

/// Runs the full training loop.
///
/// Every update draws a fresh batch of queries (stream `"batch"`, keyed by
/// update) and per-trajectory randomness (stream `"traj"`, keyed by update,
/// batch slot, trajectory index, and query id), measures the batch, then
/// ascends. The final extra batch is measured without an update, so the
/// metrics table has `updates + 1` rows. Identical inputs produce
/// bit-identical metrics and weights.
pub fn run_training(
    corpus: &[QueryRecord],
    env: &EnvConfig,
    reward_cfg: &RewardConfig,
    train: &TrainConfig,
) -> Result<TrainingRun, SimError> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    env.validate().map_err(SimError::InvalidConfig)?;
    train.validate().map_err(SimError::InvalidConfig)?;
    reward_cfg.validate().map_err(SimError::InvalidConfig)?;

    let root = StreamId::new(train.seed);
    let mut policy = PolicyParams::initial();
    let mut metrics = Vec::with_capacity(train.updates + 1);

    for update in 0..=train.updates {
        let mut batch_rng = root.with_str("batch").with_num(update as u64).rng();
        let mut groups = Vec::with_capacity(train.queries_per_update);
        for slot in 0..train.queries_per_update {
            let query = &corpus[batch_rng.random_range(0..corpus.len())];
            let mut trajectories = Vec::with_capacity(train.trajectories_per_query);
            for trajectory_index in 0..train.trajectories_per_query {
                let mut rng = root
                    .with_str("traj")
                    .with_num(update as u64)
                    .with_num(slot as u64)
                    .with_num(trajectory_index as u64)
                    .with_num(query.id)
                    .rng();
                trajectories.push(sample_trajectory(&policy, query, env, reward_cfg, &mut rng));
            }
            groups.push(TrajectoryGroup { query_id: query.id, trajectories });
        }

        metrics.push(measure_batch(update, &groups));

        if update < train.updates {
            policy_update(&mut policy, &groups, reward_cfg, train.learning_rate);
        }
    }

    Ok(TrainingRun { metrics, final_policy: policy })
}

fn measure_batch(update: usize, groups: &[TrajectoryGroup]) -> SimMetrics {
    let mut n = 0usize;
    let mut on = 0usize;
    let mut tokens = 0u64;
    let mut reward = 0.0;
    let mut judged = 0usize;
    let mut hard_n = 0usize;
    let mut hard_on = 0usize;
    for group in groups {
        for t in &group.trajectories {
            n += 1;
            if t.mode == ReasoningMode::ThinkOn {
                on += 1;
            }
            tokens += t.token_count;
            reward += t.total_reward;
            if t.judge_reward {
                judged += 1;
            }
            if t.policy_features[6] >= HARD_DIFFICULTY {
                hard_n += 1;
                if t.mode == ReasoningMode::ThinkOn {
                    hard_on += 1;
                }
            }
        }
    }
    let denom = n.max(1) as f64;
    SimMetrics {
        update,
        think_on_rate: on as f64 / denom,
        mean_tokens: tokens as f64 / denom,
        mean_total_reward: reward / denom,
        judge_accuracy: judged as f64 / denom,
        hard_think_on_rate: if hard_n == 0 { None } else { Some(hard_on as f64 / hard_n as f64) },
    }
}

/// Writes the metrics table as CSV with a fixed five-column layout.
pub fn write_metrics_csv<W: std::io::Write>(
    writer: &mut W,
    metrics: &[SimMetrics],
) -> std::io::Result<()> {
    writeln!(writer, "update,think_on_rate,mean_tokens,mean_total_reward,judge_accuracy")?;
    for row in metrics {
        writeln!(
            writer,
            "{},{:.6},{:.6},{:.6},{:.6}",
            row.update, row.think_on_rate, row.mean_tokens, row.mean_total_reward, row.judge_accuracy
        )?;
    }
    Ok(())
}

/// The default benchmark corpus: four domain/difficulty classes mixing easy
/// lookups (where thinking wastes tokens) with genuinely hard work (where it
/// pays), apportioned 40/20/20/20.
pub fn default_mixed_corpus(n: usize) -> Vec<QueryRecord> {
    let classes: [(Domain, f64, f64); 4] = [
        (Domain::General, 0.0, 0.4),
        (Domain::Science, 0.25, 0.2),
        (Domain::Math, 0.5, 0.2),
        (Domain::Code, 0.75, 0.2),
    ];
    let weights: Vec<f64> = classes.iter().map(|c| c.2).collect();
    let counts = apportion_largest_remainder(n, &weights);
    let mut corpus = Vec::with_capacity(n);
    let mut id = 0u64;
    for ((domain, difficulty, _), count) in classes.into_iter().zip(counts) {
        for _ in 0..count {
            corpus.push(QueryRecord {
                id,
                domain,
                difficulty,
                query: format!("{domain} benchmark query {id}"),
                reference: None,
                mode_label: None,
            });
            id += 1;
        }
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(id: u64, domain: Domain, difficulty: f64) -> QueryRecord {
        QueryRecord {
            id,
            domain,
            difficulty,
            query: String::new(),
            reference: None,
            mode_label: None,
        }
    }

    #[test]
    fn features_are_one_hot_plus_difficulty_and_bias() {
        let x = features(&query(1, Domain::Science, 0.3));
        assert_eq!(x[Domain::Science.index()], 1.0);
        assert_eq!(x.iter().take(6).sum::<f64>(), 1.0);
        assert_eq!(x[6], 0.3);
        assert_eq!(x[7], 1.0);
    }

    #[test]
    fn initial_policy_thinks_ninety_percent_of_the_time() {
        let policy = PolicyParams::initial();
        for d in [0.0, 0.5, 1.0] {
            let p = think_on_probability(&policy, &features(&query(0, Domain::Math, d)));
            assert!((p - 0.9).abs() <= 1e-12, "p {p} at difficulty {d}");
        }
    }

    #[test]
    fn rational_label_flips_at_low_difficulty() {
        let env = EnvConfig::default();
        assert_eq!(env.env_label(0.0), ReasoningMode::ThinkOff);
        assert_eq!(env.env_label(0.07), ReasoningMode::ThinkOff);
        assert_eq!(env.env_label(0.08), ReasoningMode::ThinkOn);
        assert_eq!(env.env_label(1.0), ReasoningMode::ThinkOn);
    }

    #[test]
    fn utility_ties_prefer_the_cheap_mode() {
        let env = EnvConfig {
            on_slope: 0.5,
            off_slope: 0.5,
            cost_weight: 0.0,
            ..EnvConfig::default()
        };
        // Identical accuracy curves and free tokens: always a tie.
        assert_eq!(env.env_label(0.3), ReasoningMode::ThinkOff);
    }

    #[test]
    fn token_counts_scale_linearly() {
        let env = EnvConfig::default();
        assert_eq!(env.token_count(ReasoningMode::ThinkOn, 0.5), 8000);
        assert_eq!(env.token_count(ReasoningMode::ThinkOff, 0.5), 600);
        assert_eq!(env.token_count(ReasoningMode::ThinkOn, 0.0), 4000);
    }

    #[test]
    fn update_pushes_probability_toward_the_advantaged_mode() {
        let reward_cfg = RewardConfig::default();
        let q = query(0, Domain::General, 0.0);
        let x = features(&q).to_vec();
        let make = |mode, reward: f64, p_on: f64| TrajectoryRecord {
            query_id: 0,
            mode,
            judge_reward: reward > 0.5,
            answer_reward: true,
            token_count: 100,
            total_reward: reward,
            policy_features: x.clone(),
            score_factor: if mode == ReasoningMode::ThinkOn { 1.0 - p_on } else { -p_on },
        };
        let mut policy = PolicyParams::initial();
        let p0 = think_on_probability(&policy, &features(&q));
        let group = TrajectoryGroup {
            query_id: 0,
            trajectories: vec![
                make(ReasoningMode::ThinkOn, 0.5, p0),
                make(ReasoningMode::ThinkOff, 1.2, p0),
                make(ReasoningMode::ThinkOn, 0.5, p0),
                make(ReasoningMode::ThinkOff, 1.2, p0),
            ],
        };
        policy_update(&mut policy, &[group], &reward_cfg, 0.5);
        let p1 = think_on_probability(&policy, &features(&q));
        assert!(p1 < p0, "off-mode advantage must lower P(on): {p0} -> {p1}");
    }

    #[test]
    fn short_runs_are_bit_reproducible() {
        let corpus = default_mixed_corpus(10);
        let env = EnvConfig::default();
        let reward_cfg = RewardConfig::default();
        let train = TrainConfig {
            queries_per_update: 4,
            trajectories_per_query: 4,
            updates: 3,
            ..TrainConfig::default()
        };
        let a = run_training(&corpus, &env, &reward_cfg, &train).unwrap();
        let b = run_training(&corpus, &env, &reward_cfg, &train).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_policy, b.final_policy);
        assert_eq!(a.metrics.len(), 4);
        assert_eq!(a.metrics[0].update, 0);
        assert_eq!(a.metrics[3].update, 3);
    }

    #[test]
    fn empty_corpus_and_bad_configs_error() {
        let env = EnvConfig::default();
        let reward_cfg = RewardConfig::default();
        let train = TrainConfig::default();
        assert!(matches!(
            run_training(&[], &env, &reward_cfg, &train),
            Err(SimError::EmptyCorpus)
        ));
        let bad = TrainConfig { trajectories_per_query: 1, ..TrainConfig::default() };
        assert!(matches!(
            run_training(&default_mixed_corpus(4), &env, &reward_cfg, &bad),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn default_corpus_mixes_four_classes() {
        let corpus = default_mixed_corpus(400);
        assert_eq!(corpus.len(), 400);
        let general = corpus.iter().filter(|q| q.domain == Domain::General).count();
        let hard = corpus.iter().filter(|q| q.difficulty >= HARD_DIFFICULTY).count();
        assert_eq!(general, 160);
        assert_eq!(hard, 160);
        // Ids are unique and dense.
        assert!(corpus.iter().enumerate().all(|(i, q)| q.id == i as u64));
    }

    #[test]
    fn metrics_csv_has_five_columns() {
        let corpus = default_mixed_corpus(8);
        let train = TrainConfig {
            queries_per_update: 2,
            trajectories_per_query: 2,
            updates: 2,
            ..TrainConfig::default()
        };
        let run =
            run_training(&corpus, &EnvConfig::default(), &RewardConfig::default(), &train).unwrap();
        let mut bytes = Vec::new();
        write_metrics_csv(&mut bytes, &run.metrics).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 rows
        assert_eq!(lines[0], "update,think_on_rate,mean_tokens,mean_total_reward,judge_accuracy");
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 5, "line {line:?}");
        }
    }
}
