//! Construction of mode-labeled warm-up corpora.
//!
//! Raw queries flow through five deterministic stages: difficulty-stratified
//! sampling from the pool, an ensemble mode vote per query, a flip pass that
//! nudges the narrowest-majority decisions until the corpus hits its
//! think-on ratio target, a rare uniform mode override that keeps both modes
//! represented everywhere, and transcript drafting plus strict re-validation
//! of every rendered example. All randomness is drawn from named streams of
//! one root seed, so the same pool, policy, and seed always produce the same
//! bytes.

pub mod backend;

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::format::{parse_response, render_response, ReasoningMode, StructuredResponse};
use crate::rng::StreamId;
use crate::verify::ReferenceSpec;
use crate::Domain;
use backend::{BackendError, BackendResponse, GeneratorBackend};

/// Ballots cast per query when voting on its reasoning mode.
pub const VOTES_PER_QUERY: usize = 5;

/// An unlabeled query in the raw pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Stable identifier; corpus output is sorted by it.
    pub id: u64,
    /// Task domain.
    pub domain: Domain,
    /// Difficulty in [0, 1].
    pub difficulty: f64,
    /// The question text.
    pub query: String,
    /// Ground truth for answer verification, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    /// Pre-assigned mode label, when the pool already carries one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_label: Option<ReasoningMode>,
}

/// Targets for the corpus's mode and difficulty composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixPolicy {
    /// Desired fraction of think-on examples after rebalancing.
    pub think_on_target: f64,
    /// Probability that an example's voted mode is replaced by a uniform
    /// draw (the example is flagged either way).
    pub override_rate: f64,
    /// Sampling weight of each difficulty quartile.
    pub difficulty_bin_weights: [f64; 4],
    /// Largest acceptable |achieved - target| think-on gap.
    pub ratio_tolerance: f64,
}

impl Default for MixPolicy {
    fn default() -> Self {
        MixPolicy {
            think_on_target: 0.348,
            override_rate: 0.01,
            difficulty_bin_weights: [0.25; 4],
            ratio_tolerance: 0.01,
        }
    }
}

impl MixPolicy {
    /// Range checks.
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.think_on_target) {
            return Err(format!("think_on_target {} outside [0, 1]", self.think_on_target));
        }
        if !(0.0..=1.0).contains(&self.override_rate) {
            return Err(format!("override_rate {} outside [0, 1]", self.override_rate));
        }
        if self.difficulty_bin_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("difficulty_bin_weights must be finite and non-negative".into());
        }
        if self.difficulty_bin_weights.iter().sum::<f64>() <= 0.0 {
            return Err("difficulty_bin_weights must not all be zero".into());
        }
        if !(self.ratio_tolerance.is_finite()
            && self.ratio_tolerance > 0.0
            && self.ratio_tolerance <= 1.0)
        {
            return Err(format!("ratio_tolerance {} outside (0, 1]", self.ratio_tolerance));
        }
        Ok(())
    }
}

/// One finished training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    /// Source query id.
    pub id: u64,
    /// Final reasoning mode of the transcript.
    pub mode: ReasoningMode,
    /// Whether the random override replaced the voted mode (set even when
    /// the uniform redraw happened to land on the same mode).
    pub overridden: bool,
    /// Source query domain.
    pub domain: Domain,
    /// Source query difficulty.
    pub difficulty: f64,
    /// The full rendered transcript.
    pub text: String,
}

/// Composition summary of a built corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Example count.
    pub n: usize,
    /// Fraction of think-on examples, overrides included.
    pub think_on_fraction: f64,
    /// Examples whose mode went through the random override.
    pub override_count: usize,
    /// Examples per domain.
    pub per_domain: BTreeMap<Domain, usize>,
    /// Examples per difficulty quartile.
    pub per_bin: [usize; 4],
}

/// Corpus construction failures.
#[derive(Debug, Error)]
pub enum CorpusError {
    /// A mode vote was requested over zero ballots.
    #[error("no votes cast")]
    EmptyVotes,
    /// A difficulty bin has a positive quota but no pool members at all.
    #[error("difficulty bin {bin} needs {needed} queries but the pool has none")]
    EmptyBinUnrecoverable {
        /// Quartile index 0-3.
        bin: usize,
        /// Its unmet quota.
        needed: usize,
    },
    /// The generator failed on a query.
    #[error("generation failed on query {id}: {source}")]
    BackendFailure {
        /// Query that failed.
        id: u64,
        /// Underlying generator error.
        source: BackendError,
    },
    /// A rendered transcript did not survive strict re-parsing.
    #[error("rendered example for query {id} failed re-validation: {detail}")]
    RenderInvalid {
        /// Query whose transcript is bad.
        id: u64,
        /// What went wrong.
        detail: String,
    },
    /// The mix policy is out of range or unreachable from this pool.
    #[error("invalid mix policy: {0}")]
    InvalidPolicy(String),
    /// No queries to sample from.
    #[error("query pool is empty")]
    EmptyPool,
}

/// Majority mode over an ensemble of ballots; ties resolve to think-on (the
/// conservative direction — reasoning is never wrongly withheld by a tie).
pub fn majority_vote(votes: &[ReasoningMode]) -> Result<ReasoningMode, CorpusError> {
    if votes.is_empty() {
        return Err(CorpusError::EmptyVotes);
    }
    let on = votes.iter().filter(|m| **m == ReasoningMode::ThinkOn).count();
    Ok(if 2 * on >= votes.len() { ReasoningMode::ThinkOn } else { ReasoningMode::ThinkOff })
}

/// Difficulty quartile of a query: [0, .25), [.25, .5), [.5, .75), [.75, 1].
/// Out-of-range difficulties clamp into the scale.
pub fn difficulty_bin(difficulty: f64) -> usize {
    let d = if difficulty.is_finite() { difficulty.clamp(0.0, 1.0) } else { 0.0 };
    if d < 0.25 {
        0
    } else if d < 0.5 {
        1
    } else if d < 0.75 {
        2
    } else {
        3
    }
}

/// Splits `total` into integer quotas proportional to `weights`: floor the
/// exact shares, then hand the leftovers to the largest fractional
/// remainders (ties to the lower index).
///
/// # Panics
///
/// Panics when the weights do not sum to a positive number; validate
/// policies before apportioning.
pub fn apportion_largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    assert!(sum > 0.0, "weights must have a positive sum");
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &bin in order.iter().take(total - assigned) {
        counts[bin] += 1;
    }
    counts
}

/// Draws `n` queries with the requested difficulty-quartile weights.
///
/// Each bin is sampled without replacement while it has enough members and
/// falls back to with-replacement draws when its quota exceeds its size; a
/// bin that is needed but completely empty is unrecoverable.
pub fn stratified_difficulty_sample(
    pool: &[QueryRecord],
    n: usize,
    weights: &[f64; 4],
    stream: StreamId,
) -> Result<Vec<QueryRecord>, CorpusError> {
    if pool.is_empty() {
        return Err(CorpusError::EmptyPool);
    }
    let mut bins: [Vec<usize>; 4] = Default::default();
    for (index, query) in pool.iter().enumerate() {
        bins[difficulty_bin(query.difficulty)].push(index);
    }
    let counts = apportion_largest_remainder(n, weights);
    let mut selected = Vec::with_capacity(n);
    for (bin, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let members = &bins[bin];
        if members.is_empty() {
            return Err(CorpusError::EmptyBinUnrecoverable { bin, needed: count });
        }
        let mut rng = stream.with_str("bin").with_num(bin as u64).rng();
        if members.len() >= count {
            // Partial Fisher-Yates: only the first `count` slots are settled.
            let mut indices = members.clone();
            for i in 0..count {
                let j = rng.random_range(i..indices.len());
                indices.swap(i, j);
            }
            selected.extend(indices[..count].iter().map(|&i| pool[i].clone()));
        } else {
            for _ in 0..count {
                let pick = members[rng.random_range(0..members.len())];
                selected.push(pool[pick].clone());
            }
        }
    }
    Ok(selected)
}

/// Replaces `mode` with a fresh uniform draw at the given rate. The flag
/// reports whether the override fired, even when the redraw landed on the
/// mode it replaced.
pub fn apply_random_override(
    mode: ReasoningMode,
    rate: f64,
    stream: StreamId,
) -> (ReasoningMode, bool) {
    let rate = if rate.is_finite() { rate.clamp(0.0, 1.0) } else { 0.0 };
    let mut rng = stream.rng();
    if rng.random_bool(rate) {
        let drawn = if rng.random_bool(0.5) { ReasoningMode::ThinkOn } else { ReasoningMode::ThinkOff };
        (drawn, true)
    } else {
        (mode, false)
    }
}

/// Renders a drafted transcript and proves it back: the canonical text must
/// re-parse strictly to exactly the structure that produced it.
pub fn assemble_example(
    query: &QueryRecord,
    mode: ReasoningMode,
    overridden: bool,
    response: &BackendResponse,
) -> Result<DatasetExample, CorpusError> {
    let thinking = match mode {
        ReasoningMode::ThinkOn => match &response.thinking {
            Some(t) => Some(t.clone()),
            None => {
                return Err(CorpusError::RenderInvalid {
                    id: query.id,
                    detail: "generator omitted thinking for a think-on transcript".into(),
                })
            }
        },
        ReasoningMode::ThinkOff => None,
    };
    let structured = StructuredResponse {
        judge_analysis: response.judge_analysis.clone(),
        mode,
        thinking,
        answer: response.answer.clone(),
    };
    let text = render_response(&structured);
    let parsed = parse_response(&text, true)
        .map_err(|e| CorpusError::RenderInvalid { id: query.id, detail: e.to_string() })?;
    if parsed != structured {
        return Err(CorpusError::RenderInvalid {
            id: query.id,
            detail: "canonical text re-parsed to a different structure".into(),
        });
    }
    Ok(DatasetExample {
        id: query.id,
        mode,
        overridden,
        domain: query.domain,
        difficulty: query.difficulty,
        text,
    })
}

struct VotedEntry {
    query: QueryRecord,
    mode: ReasoningMode,
    on_votes: usize,
}

/// Flips narrowest-majority decisions until the think-on count matches
/// `round(target * n)`. Only entries decided by a one-ballot margin are
/// eligible — their votes carry the least conviction.
fn rebalance_modes(entries: &mut [VotedEntry], policy: &MixPolicy) -> Result<(), CorpusError> {
    let n = entries.len();
    if n == 0 {
        return Ok(());
    }
    let desired_on = (policy.think_on_target * n as f64).round() as usize;
    let current_on = entries.iter().filter(|e| e.mode == ReasoningMode::ThinkOn).count();
    let (from, margin_votes, needed) = if current_on >= desired_on {
        (ReasoningMode::ThinkOn, VOTES_PER_QUERY / 2 + 1, current_on - desired_on)
    } else {
        (ReasoningMode::ThinkOff, VOTES_PER_QUERY / 2, desired_on - current_on)
    };
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| entries[i].mode == from && entries[i].on_votes == margin_votes)
        .collect();
    candidates.sort_by_key(|&i| (entries[i].query.id, i));
    for &i in candidates.iter().take(needed) {
        entries[i].mode = entries[i].mode.flipped();
    }
    let achieved_on = entries.iter().filter(|e| e.mode == ReasoningMode::ThinkOn).count();
    let achieved = achieved_on as f64 / n as f64;
    if (achieved - policy.think_on_target).abs() > policy.ratio_tolerance + 1e-12 {
        return Err(CorpusError::InvalidPolicy(format!(
            "think-on target {} unreachable from this pool: reached {achieved:.4} after exhausting narrow-majority flips",
            policy.think_on_target
        )));
    }
    Ok(())
}

/// Builds a corpus of `n` examples from the pool.
///
/// Stages: stratified sampling, [`VOTES_PER_QUERY`]-ballot majority voting,
/// narrow-majority rebalancing toward the think-on target, the random
/// override, then drafting and strict re-validation. Output is sorted by
/// query id and byte-deterministic in (pool, policy, backend, seed).
pub fn build_corpus(
    pool: &[QueryRecord],
    n: usize,
    policy: &MixPolicy,
    backend: &dyn GeneratorBackend,
    seed: u64,
) -> Result<(Vec<DatasetExample>, CorpusStats), CorpusError> {
    policy.validate().map_err(CorpusError::InvalidPolicy)?;
    if pool.is_empty() {
        return Err(CorpusError::EmptyPool);
    }
    let root = StreamId::new(seed);
    let sampled =
        stratified_difficulty_sample(pool, n, &policy.difficulty_bin_weights, root.with_str("stratified"))?;

    let mut entries = Vec::with_capacity(sampled.len());
    for query in sampled {
        let mut votes = Vec::with_capacity(VOTES_PER_QUERY);
        for ballot in 0..VOTES_PER_QUERY {
            let vote = backend
                .vote(&query, ballot as u32)
                .map_err(|e| CorpusError::BackendFailure { id: query.id, source: e })?;
            votes.push(vote);
        }
        let on_votes = votes.iter().filter(|m| **m == ReasoningMode::ThinkOn).count();
        let mode = majority_vote(&votes)?;
        entries.push(VotedEntry { query, mode, on_votes });
    }

    rebalance_modes(&mut entries, policy)?;

    let mut examples = Vec::with_capacity(entries.len());
    let mut override_count = 0usize;
    for entry in &entries {
        let (mode, overridden) = apply_random_override(
            entry.mode,
            policy.override_rate,
            root.with_str("override").with_num(entry.query.id),
        );
        if overridden {
            override_count += 1;
        }
        let response = backend
            .respond(&entry.query, mode)
            .map_err(|e| CorpusError::BackendFailure { id: entry.query.id, source: e })?;
        examples.push(assemble_example(&entry.query, mode, overridden, &response)?);
    }
    examples.sort_by_key(|e| e.id);

    let on = examples.iter().filter(|e| e.mode == ReasoningMode::ThinkOn).count();
    let mut per_domain = BTreeMap::new();
    let mut per_bin = [0usize; 4];
    for example in &examples {
        *per_domain.entry(example.domain).or_insert(0) += 1;
        per_bin[difficulty_bin(example.difficulty)] += 1;
    }
    let stats = CorpusStats {
        n: examples.len(),
        think_on_fraction: if examples.is_empty() {
            0.0
        } else {
            on as f64 / examples.len() as f64
        },
        override_count,
        per_domain,
        per_bin,
    };
    Ok((examples, stats))
}

/// Writes examples as one JSON object per line.
pub fn write_corpus_jsonl<W: std::io::Write>(
    writer: &mut W,
    examples: &[DatasetExample],
) -> std::io::Result<()> {
    for example in examples {
        serde_json::to_writer(&mut *writer, example)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use backend::SyntheticBackend;

    fn query(id: u64, difficulty: f64) -> QueryRecord {
        QueryRecord {
            id,
            domain: Domain::ALL[(id % 4) as usize],
            difficulty,
            query: format!("question {id}"),
            reference: None,
            mode_label: None,
        }
    }

    #[test]
    fn majority_breaks_ties_toward_thinking() {
        use ReasoningMode::{ThinkOff as Off, ThinkOn as On};
        assert_eq!(majority_vote(&[On, On, Off, Off, Off]).unwrap(), Off);
        assert_eq!(majority_vote(&[On, On, On, Off, Off]).unwrap(), On);
        assert_eq!(majority_vote(&[On, Off]).unwrap(), On);
        assert!(matches!(majority_vote(&[]), Err(CorpusError::EmptyVotes)));
    }

    #[test]
    fn quartile_edges_bin_left_inclusive() {
        assert_eq!(difficulty_bin(0.0), 0);
        assert_eq!(difficulty_bin(0.2499), 0);
        assert_eq!(difficulty_bin(0.25), 1);
        assert_eq!(difficulty_bin(0.5), 2);
        assert_eq!(difficulty_bin(0.75), 3);
        assert_eq!(difficulty_bin(1.0), 3);
        assert_eq!(difficulty_bin(7.0), 3);
        assert_eq!(difficulty_bin(-1.0), 0);
    }

    #[test]
    fn apportionment_is_exact_and_tie_stable() {
        assert_eq!(apportion_largest_remainder(10, &[0.25; 4]), vec![3, 3, 2, 2]);
        assert_eq!(apportion_largest_remainder(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(apportion_largest_remainder(400, &[0.4, 0.2, 0.2, 0.2]), vec![160, 80, 80, 80]);
        for total in [0usize, 1, 13, 99] {
            let counts = apportion_largest_remainder(total, &[0.17, 0.4, 0.03, 0.4]);
            assert_eq!(counts.iter().sum::<usize>(), total);
        }
    }

    #[test]
    fn stratified_sampling_honors_quotas_and_detects_empty_bins() {
        let pool: Vec<QueryRecord> =
            (0..400).map(|i| query(i, (i % 100) as f64 / 100.0)).collect();
        let stream = StreamId::new(3).with_str("stratified");
        let sample = stratified_difficulty_sample(&pool, 40, &[0.25; 4], stream).unwrap();
        assert_eq!(sample.len(), 40);
        let mut per_bin = [0usize; 4];
        for q in &sample {
            per_bin[difficulty_bin(q.difficulty)] += 1;
        }
        assert_eq!(per_bin, [10, 10, 10, 10]);
        // Big enough bins: no repeats.
        let mut ids: Vec<u64> = sample.iter().map(|q| q.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 40);

        let no_hard: Vec<QueryRecord> = (0..100).map(|i| query(i, 0.1)).collect();
        let stream = StreamId::new(3).with_str("stratified");
        assert!(matches!(
            stratified_difficulty_sample(&no_hard, 40, &[0.25; 4], stream),
            Err(CorpusError::EmptyBinUnrecoverable { bin: 1, .. })
        ));
    }

    #[test]
    fn small_bins_fall_back_to_replacement() {
        let mut pool: Vec<QueryRecord> = (0..30).map(|i| query(i, 0.1)).collect();
        pool.push(query(100, 0.9));
        pool.push(query(101, 0.8));
        let stream = StreamId::new(5).with_str("stratified");
        let sample = stratified_difficulty_sample(&pool, 20, &[0.5, 0.0, 0.0, 0.5], stream).unwrap();
        assert_eq!(sample.len(), 20);
        let hard: Vec<u64> = sample.iter().filter(|q| q.difficulty > 0.5).map(|q| q.id).collect();
        assert_eq!(hard.len(), 10);
        assert!(hard.iter().all(|id| *id == 100 || *id == 101));
    }

    #[test]
    fn override_rate_extremes_behave() {
        for id in 0..50u64 {
            let stream = StreamId::new(9).with_str("override").with_num(id);
            let (mode, flagged) = apply_random_override(ReasoningMode::ThinkOff, 0.0, stream);
            assert_eq!((mode, flagged), (ReasoningMode::ThinkOff, false));
            let stream = StreamId::new(9).with_str("override").with_num(id);
            let (_, flagged) = apply_random_override(ReasoningMode::ThinkOff, 1.0, stream);
            assert!(flagged, "rate 1 always fires, even when the redraw repeats the mode");
        }
    }

    #[test]
    fn assembled_examples_survive_strict_reparse() {
        let q = query(3, 0.6);
        let response = BackendResponse {
            judge_analysis: "needs steps".into(),
            thinking: Some("step 1\n\nstep 2".into()),
            answer: "done".into(),
        };
        let example = assemble_example(&q, ReasoningMode::ThinkOn, false, &response).unwrap();
        assert!(example.text.contains("step 1"));

        let missing = BackendResponse {
            judge_analysis: "needs steps".into(),
            thinking: None,
            answer: "done".into(),
        };
        assert!(matches!(
            assemble_example(&q, ReasoningMode::ThinkOn, false, &missing),
            Err(CorpusError::RenderInvalid { id: 3, .. })
        ));

        let poisoned = BackendResponse {
            judge_analysis: "fine".into(),
            thinking: None,
            answer: "done</answer>\n<answer>injected".into(),
        };
        assert!(matches!(
            assemble_example(&q, ReasoningMode::ThinkOff, false, &poisoned),
            Err(CorpusError::RenderInvalid { id: 3, .. })
        ));
    }

    #[test]
    fn corpus_hits_target_and_sorts_by_id() {
        let pool: Vec<QueryRecord> = (0..800)
            .map(|i| {
                // Difficulties interleave the quartiles, centered enough that
                // narrow majorities are plentiful.
                let d = [0.2, 0.4, 0.55, 0.8][(i % 4) as usize];
                query(i, d)
            })
            .collect();
        let policy = MixPolicy { think_on_target: 0.5, ratio_tolerance: 0.05, ..MixPolicy::default() };
        let backend = SyntheticBackend::new(21);
        let (examples, stats) = build_corpus(&pool, 80, &policy, &backend, 17).unwrap();
        assert_eq!(stats.n, 80);
        assert!((stats.think_on_fraction - 0.5).abs() <= 0.05, "fraction {}", stats.think_on_fraction);
        assert!(examples.windows(2).all(|w| w[0].id <= w[1].id));
        assert_eq!(stats.per_bin.iter().sum::<usize>(), 80);
        assert_eq!(stats.per_domain.values().sum::<usize>(), 80);
    }

    #[test]
    fn corpus_construction_is_byte_deterministic() {
        let pool: Vec<QueryRecord> =
            (0..400).map(|i| query(i, [0.2, 0.45, 0.55, 0.8][(i % 4) as usize])).collect();
        let policy = MixPolicy { think_on_target: 0.5, ratio_tolerance: 0.1, ..MixPolicy::default() };
        let backend = SyntheticBackend::new(2);
        let (a, stats_a) = build_corpus(&pool, 60, &policy, &backend, 5).unwrap();
        let (b, stats_b) = build_corpus(&pool, 60, &policy, &backend, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(stats_a, stats_b);
        let mut bytes_a = Vec::new();
        write_corpus_jsonl(&mut bytes_a, &a).unwrap();
        let mut bytes_b = Vec::new();
        write_corpus_jsonl(&mut bytes_b, &b).unwrap();
        assert_eq!(bytes_a, bytes_b);
        // A different seed moves at least something.
        let (c, _) = build_corpus(&pool, 60, &policy, &backend, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unreachable_targets_fail_instead_of_lying() {
        // Unanimous votes leave nothing to flip: difficulty 0 votes 0-5 off.
        let pool: Vec<QueryRecord> = (0..200).map(|i| query(i, 0.0)).collect();
        let policy = MixPolicy {
            think_on_target: 0.9,
            difficulty_bin_weights: [1.0, 0.0, 0.0, 0.0],
            ratio_tolerance: 0.01,
            ..MixPolicy::default()
        };
        let backend = SyntheticBackend::new(4);
        assert!(matches!(
            build_corpus(&pool, 50, &policy, &backend, 8),
            Err(CorpusError::InvalidPolicy(_))
        ));
    }

    #[test]
    fn jsonl_field_order_is_stable() {
        let example = DatasetExample {
            id: 12,
            mode: ReasoningMode::ThinkOn,
            overridden: false,
            domain: Domain::Math,
            difficulty: 0.5,
            text: "t".into(),
        };
        let mut bytes = Vec::new();
        write_corpus_jsonl(&mut bytes, &[example]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "{\"id\":12,\"mode\":\"on\",\"overridden\":false,\"domain\":\"math\",\"difficulty\":0.5,\"text\":\"t\"}\n"
        );
    }
}
