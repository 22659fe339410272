//! Classification and feature-distillation losses, plus the combined replay
//! objective used during training.
//!
//! Each loss returns its value together with the upstream gradients that
//! [`MlpModel::backward_from`] consumes.

use crate::error::{Error, Result};
use crate::nn::{GradientSet, MlpModel, TeacherSnapshot};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    pub logit_grad: Option<Tensor>,
    pub feature_grad: Option<Tensor>,
}

/// Mean softmax cross-entropy. Gradient is `(softmax − onehot) / n`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossResult> {
    let n = logits.rows();
    let c = logits.cols();
    if n == 0 {
        return Err(Error::Empty("cross_entropy batch"));
    }
    if labels.len() != n {
        return Err(Error::dim("cross_entropy labels", n, labels.len()));
    }
    let mut grad = Tensor::zeros(&[n, c]);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Input(format!("label {y} out of range for {c} classes")));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        total += log_sum - (row[y] - max);
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp() / sum / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok(LossResult {
        value: total / n as f64,
        logit_grad: Some(grad),
        feature_grad: None,
    })
}

/// Paired 2-Wasserstein distance between feature batches with Euclidean
/// ground metric: `sqrt(mean_i ‖s_i − t_i‖²)`.
///
/// Rows are matched by index. Only the student receives a gradient, and it
/// is defined as zero when the distance is zero.
pub fn w2_distill(student: &Tensor, teacher: &Tensor) -> Result<LossResult> {
    if student.shape() != teacher.shape() {
        return Err(Error::dim(
            "w2_distill",
            format!("{:?}", student.shape()),
            format!("{:?}", teacher.shape()),
        ));
    }
    let n = student.rows();
    if n == 0 {
        return Err(Error::Empty("w2_distill batch"));
    }
    let diff = student.sub(teacher)?;
    let value = (diff.sum_squares() / n as f64).sqrt();
    let grad = if value > 0.0 {
        let mut g = diff;
        g.scale(1.0 / (n as f64 * value));
        g
    } else {
        Tensor::zeros(student.shape())
    };
    Ok(LossResult {
        value,
        logit_grad: None,
        feature_grad: Some(grad),
    })
}

/// Which replay terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayTerms {
    pub cross_entropy: bool,
    pub distill: bool,
}

impl ReplayTerms {
    pub const FULL: ReplayTerms = ReplayTerms {
        cross_entropy: true,
        distill: true,
    };
    pub const CE_ONLY: ReplayTerms = ReplayTerms {
        cross_entropy: true,
        distill: false,
    };
    pub const NONE: ReplayTerms = ReplayTerms {
        cross_entropy: false,
        distill: false,
    };

    pub fn any(self) -> bool {
        self.cross_entropy || self.distill
    }
}

/// A labelled mini-batch borrowed from a dataset or the episodic memory.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a Tensor,
    pub labels: &'a [usize],
}

/// Per-term values and the summed parameter gradient of the objective.
#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub total: f64,
    pub ce_current: f64,
    pub ce_replay: Option<f64>,
    pub distill: Option<f64>,
    pub grads: GradientSet,
}

/// `CE(current) + [CE(replay) + W2(Φ_s(replay), Φ_t(replay))]`.
///
/// The bracket is dropped when there is no replay batch; `terms` selects
/// which bracketed terms are active (ablation variants).
pub fn maer_loss(
    model: &MlpModel,
    teacher: Option<&TeacherSnapshot>,
    current: Batch<'_>,
    replay: Option<Batch<'_>>,
    terms: ReplayTerms,
) -> Result<ObjectiveOutput> {
    let pass = model.forward(current.inputs)?;
    let ce = cross_entropy(&pass.logits, current.labels)?;
    let mut grads = model.backward_from(&pass, ce.logit_grad.as_ref(), None)?;
    let mut out = ObjectiveOutput {
        total: ce.value,
        ce_current: ce.value,
        ce_replay: None,
        distill: None,
        grads: GradientSet::zeros_like(model),
    };

    if let Some(replay) = replay.filter(|_| terms.any()) {
        let teacher = teacher.ok_or_else(|| {
            Error::Config("replay batch supplied without a teacher snapshot".into())
        })?;
        let rpass = model.forward(replay.inputs)?;
        let mut logit_grad = None;
        let mut feature_grad = None;
        if terms.cross_entropy {
            let r = cross_entropy(&rpass.logits, replay.labels)?;
            out.total += r.value;
            out.ce_replay = Some(r.value);
            logit_grad = r.logit_grad;
        }
        if terms.distill {
            let t_feat = teacher.features(replay.inputs)?;
            let w = w2_distill(&rpass.features, &t_feat)?;
            out.total += w.value;
            out.distill = Some(w.value);
            feature_grad = w.feature_grad;
        }
        let rg = model.backward_from(&rpass, logit_grad.as_ref(), feature_grad.as_ref())?;
        grads.add_assign(&rg)?;
    }
    out.grads = grads;
    Ok(out)
}
