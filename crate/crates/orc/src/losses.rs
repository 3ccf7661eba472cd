//! Distillation losses: softened probabilities, cross-entropy, the
//! temperature-scaled KL term, and the composite teaching losses.
//!
//! Conventions, applied uniformly:
//! - the teacher is the target distribution: `kd = τ² · mean_B Σ_c P_T·(ln P_T − ln P_S)`;
//! - teacher logits are detached inside every loss, so no gradient ever
//!   reaches a network through an argument it serves as a target in;
//! - every loss mean-reduces over the batch before weighting, keeping scales
//!   comparable across batch sizes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Temperature for probability softening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftenConfig {
    tau: f64,
}

impl SoftenConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::config(format!("temperature must be positive, got {tau}")));
        }
        Ok(SoftenConfig { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Balance between supervised cross-entropy and distillation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    alpha: f64,
}

impl LossWeights {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("alpha must lie in [0,1], got {alpha}")));
        }
        Ok(LossWeights { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// How the teacher group's knowledge reaches each student.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TeachingStyle {
    /// One KL term per teacher, summed.
    Individual,
    /// A single KL term against the mean of the teacher logits.
    Ensemble,
}

/// Row-wise log-softmax of a [B,C] tensor.
///
/// The row max is subtracted as a detached constant; the gradient of
/// log-softmax is unaffected by any fixed shift.
pub fn log_softmax(logits: &Tensor) -> Result<Tensor> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(Error::shape(format!(
            "log_softmax expects [batch, classes], got {shape:?}"
        )));
    }
    let m = logits.max(Some(1), true)?.detach();
    let shifted = logits.sub(&m)?;
    let lse = shifted.exp().sum(Some(1), true)?.log()?;
    shifted.sub(&lse)
}

/// Softened class probabilities `softmax(z/τ)`.
pub fn soften(logits: &Tensor, cfg: &SoftenConfig) -> Result<Tensor> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] < 2 {
        return Err(Error::shape(format!(
            "soften expects [batch, classes>=2], got {shape:?}"
        )));
    }
    if logits.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("soften received non-finite logits"));
    }
    Ok(log_softmax(&logits.mul_scalar(1.0 / cfg.tau()))?.exp())
}

/// Cross-entropy of logits against one-hot or soft label rows.
///
/// Returns the per-instance losses `[B]` and their batch mean.
pub fn cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<(Tensor, Tensor)> {
    let l_shape = logits.shape();
    let y_shape = labels.shape();
    if l_shape != y_shape || l_shape.len() != 2 {
        return Err(Error::shape(format!(
            "cross_entropy expects matching [batch, classes] shapes, got {l_shape:?} and {y_shape:?}"
        )));
    }
    let y = labels.values();
    let classes = l_shape[1];
    for (row, chunk) in y.chunks(classes).enumerate() {
        let s: f64 = chunk.iter().sum();
        if (s - 1.0).abs() > 1e-6 || chunk.iter().any(|v| *v < 0.0) {
            return Err(Error::label(format!(
                "label row {row} is not a distribution (sum {s})"
            )));
        }
    }
    let lsm = log_softmax(logits)?;
    let per_instance = labels.detach().mul(&lsm)?.sum(Some(1), false)?.neg();
    let mean = per_instance.mean(None, false)?;
    Ok((per_instance, mean))
}

/// Temperature-scaled distillation loss `τ² · mean_B KL(P_T ‖ P_S)`.
///
/// The teacher side is detached; gradients only flow into `student_logits`.
pub fn kd_loss(student_logits: &Tensor, teacher_logits: &Tensor, cfg: &SoftenConfig) -> Result<Tensor> {
    if student_logits.shape() != teacher_logits.shape() {
        return Err(Error::shape(format!(
            "kd_loss shape mismatch: {:?} vs {:?}",
            student_logits.shape(),
            teacher_logits.shape()
        )));
    }
    let tau = cfg.tau();
    let t_log = log_softmax(&teacher_logits.detach().mul_scalar(1.0 / tau))?;
    let s_log = log_softmax(&student_logits.mul_scalar(1.0 / tau))?;
    let p_t = t_log.exp();
    let kl_rows = p_t.mul(&t_log.sub(&s_log)?)?.sum(Some(1), false)?;
    Ok(kl_rows.mean(None, false)?.mul_scalar(tau * tau))
}

/// Convex combination `(1−α)·ce + α·distill`.
pub fn student_total_loss(ce: &Tensor, distill: &Tensor, w: &LossWeights) -> Result<Tensor> {
    let a = w.alpha();
    ce.mul_scalar(1.0 - a).add(&distill.mul_scalar(a))
}

/// Intensive-teaching loss for the pivot teacher.
///
/// `logits` are the pivot's outputs on the mixed input; the loss weights the
/// cross-entropies against the mini-batch labels and the feedback labels by
/// the mix ratio evaluated on those same logits.
pub fn pivot_intensive_loss(
    logits: &Tensor,
    y_batch: &Tensor,
    y_feed: &Tensor,
    lambda: f64,
) -> Result<Tensor> {
    if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("mix ratio must lie in [0,1], got {lambda}")));
    }
    let (_, ce_batch) = cross_entropy(logits, y_batch)?;
    let (_, ce_feed) = cross_entropy(logits, y_feed)?;
    ce_batch
        .mul_scalar(lambda)
        .add(&ce_feed.mul_scalar(1.0 - lambda))
}

/// Private-teaching loss for a temporary teacher: supervised cross-entropy
/// blended with distillation from the pivot only.
pub fn private_teaching_loss(
    temp_logits: &Tensor,
    pivot_logits: &Tensor,
    labels: &Tensor,
    w: &LossWeights,
    cfg: &SoftenConfig,
) -> Result<Tensor> {
    let (_, ce) = cross_entropy(temp_logits, labels)?;
    let kd = kd_loss(temp_logits, &pivot_logits.detach(), cfg)?;
    student_total_loss(&ce, &kd, w)
}

/// Distillation received by one student from the whole teacher group.
pub fn group_distill_loss(
    student_logits: &Tensor,
    temp_logits: &[Tensor],
    pivot_logits: &Tensor,
    cfg: &SoftenConfig,
    style: TeachingStyle,
) -> Result<Tensor> {
    match style {
        TeachingStyle::Individual => {
            let mut total = kd_loss(student_logits, &pivot_logits.detach(), cfg)?;
            for t in temp_logits {
                total = total.add(&kd_loss(student_logits, &t.detach(), cfg)?)?;
            }
            Ok(total)
        }
        TeachingStyle::Ensemble => {
            let mut sum = pivot_logits.detach();
            for t in temp_logits {
                sum = sum.add(&t.detach())?;
            }
            let mean = sum.mul_scalar(1.0 / (temp_logits.len() + 1) as f64);
            kd_loss(student_logits, &mean, cfg)
        }
    }
}

/// Total loss for one student under group teaching.
pub fn student_group_loss(
    student_logits: &Tensor,
    temp_logits: &[Tensor],
    pivot_logits: &Tensor,
    labels: &Tensor,
    w: &LossWeights,
    cfg: &SoftenConfig,
    style: TeachingStyle,
) -> Result<Tensor> {
    let (_, ce) = cross_entropy(student_logits, labels)?;
    let distill = group_distill_loss(student_logits, temp_logits, pivot_logits, cfg, style)?;
    student_total_loss(&ce, &distill, w)
}
