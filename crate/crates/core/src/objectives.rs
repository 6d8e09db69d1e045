//! Cue-alignment training objectives with analytic gradients.
//!
//! * [`infonce_loss`]: contrastive alignment between pooled video/audio
//!   representations and cue-text representations, cosine similarity scaled
//!   by a learnable temperature, in-batch negatives over the targets.
//! * [`temporal_bce`]: frame-order discrimination.
//! * [`mfm_loss`]: masked frame reconstruction, summed over masked rows.
//! * [`vecb_loss`] / [`aecb_loss`]: the stage objectives built from these.
//!
//! Every gradient is checked against central differences by
//! [`finite_difference_check`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{dot, l2_norm};

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("sequence has no rows")]
    EmptySequence,
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{anchors} anchors but {targets} targets")]
    BatchSizeMismatch { anchors: usize, targets: usize },
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("{side} row {row} has zero norm")]
    ZeroNorm { side: &'static str, row: usize },
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask index {index} out of range for length {len}")]
    MaskOutOfRange { index: usize, len: usize },
    #[error("predicted shape {got:?} does not match original {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("loss weights must be finite and non-negative, got ({0}, {1})")]
    BadWeights(f64, f64),
    #[error("finite-difference step must lie in [1e-7, 1e-3], got {0}")]
    BadStep(f64),
    #[error("analytic gradient has {analytic} entries for {params} parameters")]
    GradientLength { params: usize, analytic: usize },
    #[error("loss is not finite at perturbed coordinate {0}")]
    NonFiniteLoss(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
}

/// Time-major matrix of frame (or audio-step) embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    rows: Vec<Vec<f64>>,
    modality: Modality,
}

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize, ObjectiveError> {
    let dim = rows.first().ok_or(ObjectiveError::EmptySequence)?.len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(ObjectiveError::RaggedRows {
                row,
                expected: dim,
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite);
        }
    }
    Ok(dim)
}

impl EmbeddingSequence {
    pub fn new(rows: Vec<Vec<f64>>, modality: Modality) -> Result<Self, ObjectiveError> {
        check_matrix(&rows)?;
        Ok(EmbeddingSequence { rows, modality })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }
}

/// Mean over the time axis.
pub fn temporal_pool(seq: &EmbeddingSequence) -> Vec<f64> {
    let mut acc = vec![0.0; seq.dim()];
    for row in &seq.rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = seq.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Paired anchor/target rows for the contrastive loss. Row `i` of `anchors`
/// is the positive for row `i` of `targets`; every other target row is a
/// negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBatch {
    pub anchors: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    #[serde(rename = "tau")]
    pub temperature: f64,
}

impl AlignmentBatch {
    pub fn new(anchors: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, temperature: f64) -> Result<Self, ObjectiveError> {
        let batch = AlignmentBatch {
            anchors,
            targets,
            temperature,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.anchors.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        if self.anchors.len() != self.targets.len() {
            return Err(ObjectiveError::BatchSizeMismatch {
                anchors: self.anchors.len(),
                targets: self.targets.len(),
            });
        }
        let da = check_matrix(&self.anchors)?;
        let dt = check_matrix(&self.targets)?;
        if da != dt {
            return Err(ObjectiveError::RaggedRows {
                row: 0,
                expected: da,
                got: dt,
            });
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ObjectiveError::BadTemperature(self.temperature));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Anchors, targets and temperature as one flat parameter vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.anchors.iter().chain(&self.targets).flatten().copied().collect();
        out.push(self.temperature);
        out
    }

    /// Rebuild a batch of the same shape from [`flatten`](Self::flatten) output.
    pub fn unflatten_like(&self, params: &[f64]) -> AlignmentBatch {
        let d = self.anchors[0].len();
        let n = self.len();
        let rows = |start: usize| params[start..start + n * d].chunks(d).map(<[f64]>::to_vec).collect();
        AlignmentBatch {
            anchors: rows(0),
            targets: rows(n * d),
            temperature: params[2 * n * d],
        }
    }
}

/// Which softmax directions contribute to the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoNceDirection {
    /// Each anchor against all targets.
    #[default]
    AnchorToTarget,
    /// Average of anchor→target and target→anchor.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoNceOutput {
    pub loss: f64,
    pub grad_anchors: Vec<Vec<f64>>,
    pub grad_targets: Vec<Vec<f64>>,
    pub grad_temperature: f64,
}

impl InfoNceOutput {
    /// Gradient laid out like [`AlignmentBatch::flatten`].
    pub fn flat_gradient(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .grad_anchors
            .iter()
            .chain(&self.grad_targets)
            .flatten()
            .copied()
            .collect();
        out.push(self.grad_temperature);
        out
    }
}

fn normalize_rows(rows: &[Vec<f64>], side: &'static str) -> Result<(Vec<Vec<f64>>, Vec<f64>), ObjectiveError> {
    let mut units = Vec::with_capacity(rows.len());
    let mut norms = Vec::with_capacity(rows.len());
    for (row, r) in rows.iter().enumerate() {
        let n = l2_norm(r);
        if n == 0.0 {
            return Err(ObjectiveError::ZeroNorm { side, row });
        }
        units.push(r.iter().map(|x| x / n).collect());
        norms.push(n);
    }
    Ok((units, norms))
}

/// Softmax cross-entropy over the rows of `logits` with the diagonal as the
/// positive class. Returns the mean loss and d(loss)/d(logits).
fn diagonal_cross_entropy(logits: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = logits.len();
    let mut loss = 0.0;
    let mut grad = vec![vec![0.0; n]; n];
    for (i, row) in logits.iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[i];
        for (j, z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            grad[i][j] = (p - if i == j { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

/// Back-propagate through `u = x / |x|`.
fn through_normalization(grad_unit: &[f64], unit: &[f64], norm: f64) -> Vec<f64> {
    let radial = dot(grad_unit, unit);
    grad_unit
        .iter()
        .zip(unit)
        .map(|(g, u)| (g - radial * u) / norm)
        .collect()
}

/// Contrastive loss in the default anchor→target direction.
pub fn infonce_loss(batch: &AlignmentBatch) -> Result<InfoNceOutput, ObjectiveError> {
    infonce_loss_with(batch, InfoNceDirection::AnchorToTarget)
}

pub fn infonce_loss_with(batch: &AlignmentBatch, direction: InfoNceDirection) -> Result<InfoNceOutput, ObjectiveError> {
    batch.validate()?;
    let n = batch.len();
    let tau = batch.temperature;
    let (a_hat, a_norm) = normalize_rows(&batch.anchors, "anchor")?;
    let (t_hat, t_norm) = normalize_rows(&batch.targets, "target")?;

    let sim: Vec<Vec<f64>> = a_hat
        .iter()
        .map(|a| t_hat.iter().map(|t| dot(a, t)).collect())
        .collect();
    let logits: Vec<Vec<f64>> = sim.iter().map(|r| r.iter().map(|s| s / tau).collect()).collect();

    // d(loss)/d(logits), always indexed [anchor][target]
    let (loss, grad_logits) = match direction {
        InfoNceDirection::AnchorToTarget => diagonal_cross_entropy(&logits),
        InfoNceDirection::Symmetric => {
            let transposed: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| logits[i][j]).collect()).collect();
            let (l1, g1) = diagonal_cross_entropy(&logits);
            let (l2, g2) = diagonal_cross_entropy(&transposed);
            let g = (0..n)
                .map(|i| (0..n).map(|j| 0.5 * (g1[i][j] + g2[j][i])).collect())
                .collect();
            (0.5 * (l1 + l2), g)
        }
    };

    let mut grad_temperature = 0.0;
    for i in 0..n {
        for j in 0..n {
            grad_temperature -= grad_logits[i][j] * sim[i][j] / (tau * tau);
        }
    }

    let d = a_hat[0].len();
    let mut grad_a_hat = vec![vec![0.0; d]; n];
    let mut grad_t_hat = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..n {
            let gs = grad_logits[i][j] / tau;
            for k in 0..d {
                grad_a_hat[i][k] += gs * t_hat[j][k];
                grad_t_hat[j][k] += gs * a_hat[i][k];
            }
        }
    }
    let grad_anchors = (0..n)
        .map(|i| through_normalization(&grad_a_hat[i], &a_hat[i], a_norm[i]))
        .collect();
    let grad_targets = (0..n)
        .map(|j| through_normalization(&grad_t_hat[j], &t_hat[j], t_norm[j]))
        .collect();

    Ok(InfoNceOutput {
        loss,
        grad_anchors,
        grad_targets,
        grad_temperature,
    })
}

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BceOutput {
    pub loss: f64,
    /// Derivative with respect to the input (probability or logit).
    pub grad: f64,
}

/// Binary cross-entropy on a predicted probability that the frames are in
/// order; `ordered` is the label.
pub fn temporal_bce(predicted_prob: f64, ordered: bool) -> BceOutput {
    let p = predicted_prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if ordered {
        BceOutput {
            loss: -p.ln(),
            grad: -1.0 / p,
        }
    } else {
        BceOutput {
            loss: -(1.0 - p).ln(),
            grad: 1.0 / (1.0 - p),
        }
    }
}

/// [`temporal_bce`] on a logit; the gradient is with respect to the logit.
pub fn temporal_bce_logit(logit: f64, ordered: bool) -> BceOutput {
    let p = 1.0 / (1.0 + (-logit).exp());
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let y = if ordered { 1.0 } else { 0.0 };
    // log-sum-exp form stays finite for large |logit|
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    BceOutput { loss, grad: p - y }
}

/// Reconstruction targets for masked frame modeling.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    original: EmbeddingSequence,
    predicted: Vec<Vec<f64>>,
    mask: BTreeSet<usize>,
}

impl MaskedBatch {
    pub fn new(
        original: EmbeddingSequence,
        predicted: Vec<Vec<f64>>,
        mask: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ObjectiveError> {
        let mask: BTreeSet<usize> = mask.into_iter().collect();
        if mask.is_empty() {
            return Err(ObjectiveError::EmptyMask);
        }
        if let Some(&index) = mask.iter().find(|&&i| i >= original.len()) {
            return Err(ObjectiveError::MaskOutOfRange {
                index,
                len: original.len(),
            });
        }
        let shape = (original.len(), original.dim());
        let pd = check_matrix(&predicted)?;
        if (predicted.len(), pd) != shape {
            return Err(ObjectiveError::ShapeMismatch {
                expected: shape,
                got: (predicted.len(), pd),
            });
        }
        Ok(MaskedBatch {
            original,
            predicted,
            mask,
        })
    }

    pub fn predicted(&self) -> &[Vec<f64>] {
        &self.predicted
    }

    pub fn mask(&self) -> &BTreeSet<usize> {
        &self.mask
    }

    pub fn with_predicted_flat(&self, flat: &[f64]) -> MaskedBatch {
        let d = self.original.dim();
        MaskedBatch {
            original: self.original.clone(),
            predicted: flat.chunks(d).map(<[f64]>::to_vec).collect(),
            mask: self.mask.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfmOutput {
    pub loss: f64,
    /// Same shape as the predictions; rows outside the mask are zero.
    pub grad_predicted: Vec<Vec<f64>>,
}

/// Squared L2 reconstruction error summed over masked rows.
pub fn mfm_loss(batch: &MaskedBatch) -> MfmOutput {
    let mut loss = 0.0;
    let mut grad: Vec<Vec<f64>> = batch.predicted.iter().map(|r| vec![0.0; r.len()]).collect();
    for &i in &batch.mask {
        for (k, (p, x)) in batch.predicted[i].iter().zip(&batch.original.rows[i]).enumerate() {
            let diff = p - x;
            loss += diff * diff;
            grad[i][k] = 2.0 * diff;
        }
    }
    MfmOutput {
        loss,
        grad_predicted: grad,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VecbLossWeights {
    pub w1: f64,
    pub w2: f64,
}

impl VecbLossWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, ObjectiveError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(w1) || !ok(w2) {
            return Err(ObjectiveError::BadWeights(w1, w2));
        }
        Ok(VecbLossWeights { w1, w2 })
    }
}

/// Video bridge objective: contrastive + w1 * temporal + w2 * reconstruction.
pub fn vecb_loss(contrastive: f64, temporal: f64, reconstruction: f64, weights: VecbLossWeights) -> f64 {
    contrastive + weights.w1 * temporal + weights.w2 * reconstruction
}

/// Audio bridge objective: the audio-text contrastive loss alone.
pub fn aecb_loss(contrastive_audio_text: f64) -> f64 {
    contrastive_audio_text
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameter_count: usize,
    pub step: f64,
}

/// Compare `analytic` against central differences of `loss` at `params`.
///
/// Relative error per coordinate is `|num - ana| / max(|num|, |ana|, 1e-8)`.
pub fn finite_difference_check(
    loss: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    step: f64,
) -> Result<GradCheckReport, ObjectiveError> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(ObjectiveError::BadStep(step));
    }
    if analytic.len() != params.len() {
        return Err(ObjectiveError::GradientLength {
            params: params.len(),
            analytic: analytic.len(),
        });
    }
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = loss(&x);
        x[i] = orig - step;
        let minus = loss(&x);
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(ObjectiveError::NonFiniteLoss(i));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let denom = numeric.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        parameter_count: params.len(),
        step,
    })
}

/// Gradient check of [`infonce_loss_with`] over anchors, targets and temperature.
pub fn check_infonce(
    batch: &AlignmentBatch,
    direction: InfoNceDirection,
    step: f64,
) -> Result<GradCheckReport, ObjectiveError> {
    let out = infonce_loss_with(batch, direction)?;
    finite_difference_check(
        |p| infonce_loss_with(&batch.unflatten_like(p), direction).map_or(f64::NAN, |o| o.loss),
        &batch.flatten(),
        &out.flat_gradient(),
        step,
    )
}

/// Gradient check of [`mfm_loss`] over every predicted entry.
pub fn check_mfm(batch: &MaskedBatch, step: f64) -> Result<GradCheckReport, ObjectiveError> {
    let out = mfm_loss(batch);
    let params: Vec<f64> = batch.predicted.iter().flatten().copied().collect();
    let analytic: Vec<f64> = out.grad_predicted.iter().flatten().copied().collect();
    finite_difference_check(
        |p| mfm_loss(&batch.with_predicted_flat(p)).loss,
        &params,
        &analytic,
        step,
    )
}

/// Gradient check of [`temporal_bce`] at one probability.
pub fn check_bce(predicted_prob: f64, ordered: bool, step: f64) -> Result<GradCheckReport, ObjectiveError> {
    let out = temporal_bce(predicted_prob, ordered);
    finite_difference_check(
        |p| temporal_bce(p[0], ordered).loss,
        &[predicted_prob],
        &[out.grad],
        step,
    )
}
