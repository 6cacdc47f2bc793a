//! Rank-aligned distribution distillation across mismatched vocabularies.
//!
//! A teacher and student that tokenize differently cannot be compared
//! entry-by-entry, so the loss here compares their next-token distributions
//! *by rank*: softmax each row, sort both descending, zero-pad the shorter,
//! and take the L1 distance. The per-position loss lives in [0, 2] and is
//! zero exactly when the sorted distributions coincide.
//!
//! [`uld_loss`] also returns the analytic gradient with respect to the
//! student logits (the sort permutation is locally constant away from ties,
//! so the loss is differentiable almost everywhere), and
//! [`mtp_distill_loss`] extends the objective to draft heads that predict
//! several tokens ahead.

use ndarray::{s, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{pairwise_mean, pairwise_sum, Real};

/// Validation and shape errors for distillation inputs.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DistillError {
    /// A logit was NaN or infinite.
    #[error("logit at row {row}, column {column} is not finite")]
    NonFinite {
        /// Position (row) of the offending entry.
        row: usize,
        /// Vocabulary index (column) of the offending entry.
        column: usize,
    },
    /// Degenerate matrix: no positions, or a vocabulary of fewer than two
    /// entries (a one-entry distribution is always the point mass 1).
    #[error("invalid shape {rows}x{vocab}: need at least 1 position and 2 vocabulary entries")]
    InvalidShape {
        /// Position count.
        rows: usize,
        /// Vocabulary size.
        vocab: usize,
    },
    /// Teacher and student disagree on the number of positions.
    #[error("position counts differ: teacher has {teacher_rows}, student has {student_rows}")]
    ShapeMismatch {
        /// Teacher position count.
        teacher_rows: usize,
        /// Student position count.
        student_rows: usize,
    },
}

/// A positions x vocabulary matrix of finite logits.
///
/// Rows are sequence positions, columns vocabulary entries. Vocabulary sizes
/// are allowed to differ between matrices — that mismatch is what the
/// rank-aligned loss exists to bridge.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix<T: Real> {
    data: Array2<T>,
}

impl<T: Real> LogitMatrix<T> {
    /// Validates shape and finiteness.
    pub fn new(data: Array2<T>) -> Result<Self, DistillError> {
        let (rows, vocab) = data.dim();
        if rows < 1 || vocab < 2 {
            return Err(DistillError::InvalidShape { rows, vocab });
        }
        for ((row, column), value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(DistillError::NonFinite { row, column });
            }
        }
        Ok(LogitMatrix { data })
    }

    /// Builds from row vectors; rows must all have the same length.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self, DistillError> {
        let nrows = rows.len();
        let vocab = rows.first().map_or(0, Vec::len);
        for row in &rows {
            if row.len() != vocab {
                return Err(DistillError::InvalidShape { rows: nrows, vocab: row.len() });
            }
        }
        let flat: Vec<T> = rows.into_iter().flatten().collect();
        let data = Array2::from_shape_vec((nrows, vocab), flat)
            .map_err(|_| DistillError::InvalidShape { rows: nrows, vocab })?;
        LogitMatrix::new(data)
    }

    /// Number of sequence positions.
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// Vocabulary size.
    pub fn vocab(&self) -> usize {
        self.data.ncols()
    }

    /// View of one position's logits.
    pub fn row(&self, index: usize) -> ArrayView1<'_, T> {
        self.data.row(index)
    }

    /// The underlying matrix.
    pub fn as_array(&self) -> &Array2<T> {
        &self.data
    }
}

/// Numerically stable softmax of one logit row (max-subtracted).
pub fn softmax_row<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let norm = pairwise_sum(&exps);
    exps.into_iter().map(|e| e / norm).collect()
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn sort_descending<T: Real>(values: &mut [T]) {
    values.sort_by(|a, b| b.partial_cmp(a).expect("probabilities are finite"));
}

/// L1 distance between two probability vectors after sorting each
/// descending and zero-padding the shorter to the longer's length.
pub fn uld_position_loss<T: Real>(teacher_probs: &[T], student_probs: &[T]) -> T {
    let mut t = teacher_probs.to_vec();
    let mut s = student_probs.to_vec();
    sort_descending(&mut t);
    sort_descending(&mut s);
    let len = t.len().max(s.len());
    let diffs: Vec<T> = (0..len)
        .map(|k| {
            let tv = t.get(k).copied().unwrap_or_else(T::zero);
            let sv = s.get(k).copied().unwrap_or_else(T::zero);
            (tv - sv).abs()
        })
        .collect();
    pairwise_sum(&diffs)
}

/// Loss, per-position breakdown, and student-logit gradient from
/// [`uld_loss`].
#[derive(Clone, Debug)]
pub struct UldResult<T: Real> {
    /// Mean of the per-position losses.
    pub loss: T,
    /// Loss at each position; each value is in [0, 2].
    pub per_position: Vec<T>,
    /// d(loss)/d(student logits), same shape as the student matrix.
    pub grad_student: Array2<T>,
}

/// Rank-aligned distillation loss between teacher and student logits, with
/// the analytic gradient for the student.
///
/// Per position the gradient composes the L1 term's subgradient with the
/// softmax Jacobian: with `g_j = -sign(t_rank(j) - p_j)` (the teacher's
/// sorted probability at vocabulary entry `j`'s own sorted rank), the
/// logit-space gradient is `p_k * (g_k - sum_j g_j p_j)`, divided by the
/// position count for the mean.
pub fn uld_loss<T: Real>(
    teacher: &LogitMatrix<T>,
    student: &LogitMatrix<T>,
) -> Result<UldResult<T>, DistillError> {
    if teacher.rows() != student.rows() {
        return Err(DistillError::ShapeMismatch {
            teacher_rows: teacher.rows(),
            student_rows: student.rows(),
        });
    }
    let positions = teacher.rows();
    let vocab = student.vocab();
    let inv_positions = T::one() / T::from_f64(positions as f64);
    let mut per_position = Vec::with_capacity(positions);
    let mut grad_student = Array2::zeros((positions, vocab));

    for pos in 0..positions {
        let p_t = softmax_row(&teacher.row(pos).to_vec());
        let p_s = softmax_row(&student.row(pos).to_vec());

        // order[k] = vocabulary entry at sorted rank k (stable, descending).
        let mut order: Vec<usize> = (0..vocab).collect();
        order.sort_by(|&a, &b| p_s[b].partial_cmp(&p_s[a]).expect("probabilities are finite"));
        let mut rank_of = vec![0usize; vocab];
        for (rank, &entry) in order.iter().enumerate() {
            rank_of[entry] = rank;
        }
        let mut t_sorted = p_t;
        sort_descending(&mut t_sorted);

        let len = t_sorted.len().max(vocab);
        let diffs: Vec<T> = (0..len)
            .map(|k| {
                let tv = t_sorted.get(k).copied().unwrap_or_else(T::zero);
                let sv = if k < vocab { p_s[order[k]] } else { T::zero() };
                (tv - sv).abs()
            })
            .collect();
        per_position.push(pairwise_sum(&diffs));

        // Entries padded onto the student side are constants, so only the
        // real vocabulary carries gradient.
        let g: Vec<T> = (0..vocab)
            .map(|j| {
                let t_at_rank = t_sorted.get(rank_of[j]).copied().unwrap_or_else(T::zero);
                -sign(t_at_rank - p_s[j])
            })
            .collect();
        let weighted: Vec<T> = (0..vocab).map(|j| g[j] * p_s[j]).collect();
        let g_bar = pairwise_sum(&weighted);
        for k in 0..vocab {
            grad_student[[pos, k]] = p_s[k] * (g[k] - g_bar) * inv_positions;
        }
    }

    Ok(UldResult { loss: pairwise_mean(&per_position), per_position, grad_student })
}

/// Weights for the multi-token drafting objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtpConfig {
    /// Number of draft heads; head `j` predicts `j` tokens ahead.
    pub num_heads: usize,
    /// Weight of the mean head loss relative to the main loss.
    pub mtp_weight: f64,
}

impl Default for MtpConfig {
    fn default() -> Self {
        MtpConfig { num_heads: 2, mtp_weight: 0.3 }
    }
}

impl MtpConfig {
    /// Range checks.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.mtp_weight.is_finite() && self.mtp_weight >= 0.0) {
            return Err(format!("mtp_weight {} must be finite and non-negative", self.mtp_weight));
        }
        Ok(())
    }
}

/// Pairs draft-head rows with the teacher rows they predict.
///
/// Head `head_offset` (1-indexed ahead-distance) at position `t` is graded
/// against teacher row `t + head_offset`, so the head's first rows align
/// with the teacher's rows from `head_offset` on. Returns `None` when the
/// offset leaves no position in range.
pub fn align_mtp_targets<T: Real>(
    teacher: &LogitMatrix<T>,
    head: &LogitMatrix<T>,
    head_offset: usize,
) -> Option<(LogitMatrix<T>, LogitMatrix<T>)> {
    let valid = head.rows().min(teacher.rows().saturating_sub(head_offset));
    if valid == 0 {
        return None;
    }
    let teacher_slice = teacher.as_array().slice(s![head_offset..head_offset + valid, ..]).to_owned();
    let head_slice = head.as_array().slice(s![..valid, ..]).to_owned();
    Some((
        LogitMatrix::new(teacher_slice).expect("slice of a valid matrix is valid"),
        LogitMatrix::new(head_slice).expect("slice of a valid matrix is valid"),
    ))
}

/// Combined main-plus-heads distillation result.
#[derive(Clone, Debug)]
pub struct MtpResult<T: Real> {
    /// `main + weight * mean(head losses)`.
    pub total: T,
    /// The main next-token result, gradient included.
    pub main: UldResult<T>,
    /// Per-head losses; `None` marks a head with no aligned position, which
    /// is excluded from the head mean.
    pub head_losses: Vec<Option<T>>,
}

/// Main rank-aligned loss plus the weighted mean over draft heads.
///
/// `student_heads[i]` predicts `i + 1` tokens ahead. Heads whose offset
/// leaves no teacher row to target contribute nothing (they are left out of
/// the mean entirely rather than averaged in as zero).
pub fn mtp_distill_loss<T: Real>(
    teacher: &LogitMatrix<T>,
    student_main: &LogitMatrix<T>,
    student_heads: &[LogitMatrix<T>],
    cfg: &MtpConfig,
) -> Result<MtpResult<T>, DistillError> {
    let main = uld_loss(teacher, student_main)?;
    let mut head_losses = Vec::with_capacity(student_heads.len());
    let mut live: Vec<T> = Vec::new();
    for (index, head) in student_heads.iter().enumerate() {
        match align_mtp_targets(teacher, head, index + 1) {
            Some((target, aligned)) => {
                let loss = uld_loss(&target, &aligned)?.loss;
                head_losses.push(Some(loss));
                live.push(loss);
            }
            None => head_losses.push(None),
        }
    }
    let head_term = if live.is_empty() { T::zero() } else { pairwise_mean(&live) };
    let total = main.loss + T::from_f64(cfg.mtp_weight) * head_term;
    Ok(MtpResult { total, main, head_losses })
}
