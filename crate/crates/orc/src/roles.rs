//! Role scheduling: ranking, control weights, feedback-subset construction,
//! temporary-teacher promotion/demotion, and feedback mixup.
//!
//! Selection always runs first; control weights and feedback are computed
//! over the students that remain after promotion. All tie-breaks are fixed
//! (lowest index wins) so a run is a pure function of its seeds.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Partition of ladder ids into pivot, temporary teachers, and students.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupState {
    pivot_id: usize,
    temp_teacher_ids: Vec<usize>,
    student_ids: Vec<usize>,
    iteration: u64,
}

impl GroupState {
    /// Initial partition: network 0 is the pivot, the rest are students.
    pub fn new(ladder_size: usize) -> Result<GroupState> {
        if ladder_size < 2 {
            return Err(Error::state(format!(
                "a group needs at least two networks, got {ladder_size}"
            )));
        }
        Ok(GroupState {
            pivot_id: 0,
            temp_teacher_ids: Vec::new(),
            student_ids: (1..ladder_size).collect(),
            iteration: 0,
        })
    }

    pub fn pivot_id(&self) -> usize {
        self.pivot_id
    }

    pub fn temp_teacher_ids(&self) -> &[usize] {
        &self.temp_teacher_ids
    }

    pub fn student_ids(&self) -> &[usize] {
        &self.student_ids
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Moves the given students into the teacher group.
    pub fn promote(&self, ids: &[usize]) -> Result<GroupState> {
        let mut next = self.clone();
        for &id in ids {
            if id == self.pivot_id {
                return Err(Error::state("the pivot teacher is never ranked or promoted"));
            }
            let pos = next
                .student_ids
                .iter()
                .position(|s| *s == id)
                .ok_or_else(|| {
                    Error::state(format!("cannot promote id {id}: not in the student group"))
                })?;
            next.student_ids.remove(pos);
            next.temp_teacher_ids.push(id);
        }
        next.temp_teacher_ids.sort_unstable();
        Ok(next)
    }

    /// Returns every temporary teacher to the student group and advances the
    /// iteration counter. A no-op demote still advances the counter.
    pub fn demote(&self) -> GroupState {
        let mut next = self.clone();
        next.student_ids.extend(next.temp_teacher_ids.drain(..));
        next.student_ids.sort_unstable();
        next.iteration += 1;
        next
    }
}

/// Per-student shares of the feedback budget; positive, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlWeights {
    weights: Vec<f64>,
}

impl ControlWeights {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Ids (relative to the candidate list) of the `k` networks with the
/// smallest mean cross-entropy; ties go to the lower index. Returned sorted.
pub fn select_temporary_teachers(mean_ce: &[f64], k: usize) -> Result<Vec<usize>> {
    if k >= mean_ce.len() {
        return Err(Error::config(format!(
            "cannot promote {k} temporary teachers from a pool of {}",
            mean_ce.len()
        )));
    }
    if mean_ce.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite loss in teacher selection"));
    }
    let mut order: Vec<usize> = (0..mean_ce.len()).collect();
    order.sort_by(|&a, &b| {
        mean_ce[a]
            .partial_cmp(&mean_ce[b])
            .expect("finiteness checked")
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order[..k].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// Softmax of the per-student losses: a higher loss yields a strictly higher
/// share of the feedback budget.
pub fn control_weights(mean_ce: &[f64]) -> Result<ControlWeights> {
    if mean_ce.is_empty() {
        return Err(Error::state("control weights require at least one student"));
    }
    if mean_ce.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite loss in control weights"));
    }
    let m = mean_ce.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = mean_ce.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ControlWeights {
        weights: exps.iter().map(|e| e / total).collect(),
    })
}

/// Integer feedback counts `D_i ≈ ω_i·B` with `Σ D_i = B` exactly.
///
/// Largest-remainder rounding: floors first, then one unit each to the
/// largest fractional parts (ties: larger weight, then lower index).
pub fn feedback_counts(w: &ControlWeights, batch_size: usize) -> Vec<usize> {
    let weights = w.weights();
    let mut counts: Vec<usize> = Vec::with_capacity(weights.len());
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, wi) in weights.iter().enumerate() {
        let exact = wi * batch_size as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        fractions.push((i, exact - exact.floor()));
    }
    let mut remainder = batch_size - assigned;
    fractions.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("weights are finite")
            .then_with(|| {
                weights[b.0]
                    .partial_cmp(&weights[a.0])
                    .expect("weights are finite")
            })
            .then(a.0.cmp(&b.0))
    });
    let mut cursor = 0;
    while remainder > 0 {
        counts[fractions[cursor].0] += 1;
        cursor = (cursor + 1) % fractions.len();
        remainder -= 1;
    }
    counts
}

/// The students' hardest instances for this iteration: batch indices (with
/// duplicates across students retained) plus the per-student contribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackSubset {
    /// Indices into the current mini-batch, exactly `B` of them.
    pub indices: Vec<usize>,
    /// How many instances each student contributed, aligned with the
    /// student order the counts were computed over.
    pub source_counts: Vec<usize>,
}

impl FeedbackSubset {
    /// A degenerate subset that mirrors the batch itself (plain mixup).
    pub fn identity(batch_size: usize) -> FeedbackSubset {
        FeedbackSubset {
            indices: (0..batch_size).collect(),
            source_counts: vec![batch_size],
        }
    }
}

/// Each student contributes its `counts[i]` highest-loss instances, ranked by
/// its own per-instance cross-entropy (ties: lower batch index first).
pub fn build_feedback_subset(
    per_instance_ce: &[Vec<f64>],
    counts: &[usize],
) -> Result<FeedbackSubset> {
    if per_instance_ce.len() != counts.len() {
        return Err(Error::shape(format!(
            "{} loss rows but {} counts",
            per_instance_ce.len(),
            counts.len()
        )));
    }
    let batch = per_instance_ce.first().map_or(0, Vec::len);
    let mut indices = Vec::with_capacity(batch);
    for (row, &take) in per_instance_ce.iter().zip(counts) {
        if row.len() != batch {
            return Err(Error::shape("ragged per-instance loss rows"));
        }
        if take > batch {
            return Err(Error::shape(format!(
                "count {take} exceeds the batch size {batch}"
            )));
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .expect("losses are finite")
                .then(a.cmp(&b))
        });
        indices.extend_from_slice(&order[..take]);
    }
    if indices.len() != batch {
        return Err(Error::shape(format!(
            "feedback subset has {} instances, expected the batch size {batch}",
            indices.len()
        )));
    }
    Ok(FeedbackSubset {
        indices,
        source_counts: counts.to_vec(),
    })
}

/// A mixed batch for intensive teaching.
#[derive(Clone, Debug)]
pub struct MixupSample {
    /// `λ·x + (1−λ)·x_feed` with the feedback side shuffled.
    pub x_mixed: Tensor,
    /// `λ·y + (1−λ)·y_feed`.
    pub y_mixed: Tensor,
    /// Labels of the shuffled feedback instances, aligned with `x_mixed`.
    pub y_feed: Tensor,
    pub lambda: f64,
}

/// Draws `λ ~ Beta(α, α)` (one per mini-batch), shuffles the feedback subset,
/// and blends it index-wise into the batch.
pub fn mixup_combine(
    batch_x: &Tensor,
    batch_y: &Tensor,
    feedback: &FeedbackSubset,
    alpha_mix: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MixupSample> {
    if !alpha_mix.is_finite() || alpha_mix <= 0.0 {
        return Err(Error::config(format!(
            "mixup alpha must be positive, got {alpha_mix}"
        )));
    }
    let beta = Beta::new(alpha_mix, alpha_mix)
        .map_err(|e| Error::config(format!("invalid beta distribution: {e}")))?;
    let lambda = beta.sample(rng);
    mixup_with_lambda(batch_x, batch_y, feedback, lambda, rng)
}

/// Mixup with a caller-fixed λ (degenerate arms and tests).
pub fn mixup_with_lambda(
    batch_x: &Tensor,
    batch_y: &Tensor,
    feedback: &FeedbackSubset,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MixupSample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("mix ratio must lie in [0,1], got {lambda}")));
    }
    let b = batch_x.shape().first().copied().unwrap_or(0);
    if feedback.indices.len() != b || batch_y.shape().first() != Some(&b) {
        return Err(Error::shape(format!(
            "feedback size {} does not match the batch size {b}",
            feedback.indices.len()
        )));
    }
    let mut shuffled = feedback.indices.clone();
    shuffled.shuffle(rng);
    let x_feed = batch_x.gather_rows(&shuffled)?;
    let y_feed = batch_y.gather_rows(&shuffled)?;
    let x_mixed = batch_x
        .mul_scalar(lambda)
        .add(&x_feed.mul_scalar(1.0 - lambda))?;
    let y_mixed = batch_y
        .mul_scalar(lambda)
        .add(&y_feed.mul_scalar(1.0 - lambda))?;
    Ok(MixupSample {
        x_mixed,
        y_mixed,
        y_feed,
        lambda,
    })
}
