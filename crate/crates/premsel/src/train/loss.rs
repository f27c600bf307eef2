//! The contrastive objective over hole–candidate scores.
//!
//! Each hole contributes one term per positive candidate: the positive is
//! contrasted against all of the hole's negatives (but not against the other
//! positives), and the per-batch loss is the sum of every hole's terms.

use crate::model::ScoredHole;
use crate::tensor::{Scalar, Tensor, TensorError};

/// Per-batch loss values and pair counts.
#[derive(Debug, Clone)]
pub struct LossReport {
    /// One value per hole passed in, in order; zero for holes without
    /// positives.
    pub per_hole: Vec<f64>,
    /// Sum of the per-hole terms.
    pub total: f64,
    pub positive_pairs: usize,
    pub negative_pairs: usize,
    /// Holes that contributed nothing for lack of positive labels.
    pub holes_without_positives: usize,
}

/// Computes `ℒ = Σ_h Σ_{p∈P⁺_h} −log( e^{f(p)} / (e^{f(p)} + Σ_{n∈P⁻_h} e^{f(n)}) )`.
///
/// The log-sum is stabilized by subtracting each hole's maximum score, so
/// arbitrarily negative scores cannot overflow and an extra negative with
/// `f → −∞` leaves the loss unchanged.
pub fn info_nce_loss<E: Scalar>(
    holes: &[ScoredHole<E>],
) -> Result<(Tensor<E>, LossReport), TensorError> {
    let mut total = Tensor::<E>::zeros(Vec::<usize>::new());
    let mut report = LossReport {
        per_hole: Vec::with_capacity(holes.len()),
        total: 0.0,
        positive_pairs: 0,
        negative_pairs: 0,
        holes_without_positives: 0,
    };

    for hole in holes {
        let count = hole.scores.len();
        if hole.positives.is_empty() {
            report.holes_without_positives += 1;
            report.per_hole.push(0.0);
            continue;
        }
        let positive: Vec<usize> = hole.positives.clone();
        let negative: Vec<usize> =
            (0..count).filter(|i| !positive.contains(i)).collect();
        report.positive_pairs += positive.len();
        report.negative_pairs += negative.len();

        // Stabilizer: the maximum over every legal score of this hole.
        let max = hole
            .scores
            .data()
            .iter()
            .fold(f64::NEG_INFINITY, |acc, v| acc.max(v.as_f64()));
        let shift = E::from_f64(-max);
        let column = hole.scores.reshape([count, 1])?;

        // Σ_n e^{f(n) − m}, shared across this hole's positives.
        let neg_sum = if negative.is_empty() {
            None
        } else {
            Some(
                column
                    .gather_rows(&negative)?
                    .add_scalar(shift)
                    .exp()
                    .sum_all(),
            )
        };

        let pos = column
            .gather_rows(&positive)?
            .reshape([positive.len()])?
            .add_scalar(shift);
        let exp_pos = pos.exp();
        let denom = match &neg_sum {
            Some(ns) => {
                // Broadcast the scalar sum across the positives.
                let ones = Tensor::ones([positive.len(), 1]);
                let spread = ones.matmul(&ns.reshape([1, 1])?)?.reshape([positive.len()])?;
                exp_pos.add(&spread)?
            }
            None => exp_pos,
        };
        let hole_loss = denom.ln().sub(&pos)?.sum_all();
        report.per_hole.push(hole_loss.scalar_value().as_f64());
        total = total.add(&hole_loss)?;
    }

    report.total = total.scalar_value().as_f64();
    Ok((total, report))
}
