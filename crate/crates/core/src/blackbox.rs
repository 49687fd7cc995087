//! Black-box scorer abstraction and the built-in trainable classifier.
//!
//! The built-in model is a two-class kernel logistic regression trained by
//! deterministic full-batch gradient descent on the training Gram matrix, so
//! bundled runs are exactly reproducible. Anything else (a real SVM, a neural
//! network) plugs in through the external wire protocol in [`crate::external`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{gram, KahanSum, KernelKind, KernelSpec, SparseVector};

/// Per-class probability scores for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    class_ids: Vec<i32>,
}

impl ScoreVector {
    /// Validates the probability contract: every score in [0, 1], summing to
    /// 1 within 1e-6.
    pub fn new(scores: Vec<f64>, class_ids: Vec<i32>) -> Result<Self> {
        if scores.is_empty() || scores.len() != class_ids.len() {
            return Err(Error::Contract(format!(
                "scores/class_ids length mismatch: {} vs {}",
                scores.len(),
                class_ids.len()
            )));
        }
        let mut sum = 0.0;
        for &s in &scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Contract(format!("score {s} outside [0, 1]")));
            }
            sum += s;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("scores not normalized: sum {sum}")));
        }
        Ok(ScoreVector { scores, class_ids })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    pub fn score_for(&self, class_id: i32) -> Result<f64> {
        self.class_ids
            .iter()
            .position(|&c| c == class_id)
            .map(|i| self.scores[i])
            .ok_or_else(|| Error::Contract(format!("unknown class id {class_id}")))
    }

    /// Highest-scoring class; ties break toward the earlier position.
    pub fn argmax_class(&self) -> i32 {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        self.class_ids[best]
    }

    /// Dense score vector as a `SparseVector`, for kernel two-sample tests
    /// over score space.
    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::from_dense(&self.scores)
    }
}

/// A per-class probability scorer over a fixed input dimensionality.
pub trait Scorer: Sync {
    fn dim(&self) -> usize;
    fn class_ids(&self) -> &[i32];
    fn score(&self, x: &SparseVector) -> Result<ScoreVector>;

    fn score_batch(&self, xs: &[SparseVector]) -> Result<Vec<ScoreVector>> {
        xs.iter().map(|x| self.score(x)).collect()
    }
}

/// Two-class kernel logistic regression in dual form:
/// logit(x) = sum_i dual_coeffs[i] * k(x, support_set[i]) + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelLogisticModel {
    kernel: KernelSpec,
    support_set: Vec<SparseVector>,
    dual_coeffs: Vec<f64>,
    bias: f64,
    class_ids: [i32; 2],
    dim: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Hyperparameters for [`train_kernel_logistic`].
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub reg: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            reg: 1e-4,
            epochs: 1500,
            lr: 0.5,
        }
    }
}

/// Trains the built-in scorer by full-batch gradient descent on the mean
/// logistic loss plus (reg/2)||alpha||^2 (bias unpenalized). Deterministic:
/// identical inputs give bitwise-identical coefficients.
pub fn train_kernel_logistic(
    instances: &[SparseVector],
    labels: &[i32],
    kernel: &KernelSpec,
    params: &TrainParams,
) -> Result<KernelLogisticModel> {
    Ok(train_kernel_logistic_traced(instances, labels, kernel, params)?.0)
}

/// As [`train_kernel_logistic`], additionally returning the objective value
/// observed at the start of every epoch.
pub fn train_kernel_logistic_traced(
    instances: &[SparseVector],
    labels: &[i32],
    kernel: &KernelSpec,
    params: &TrainParams,
) -> Result<(KernelLogisticModel, Vec<f64>)> {
    if instances.is_empty() || instances.len() != labels.len() {
        return Err(Error::Train(format!(
            "instances/labels length mismatch: {} vs {}",
            instances.len(),
            labels.len()
        )));
    }
    if !(params.reg > 0.0) || !(params.lr > 0.0) {
        return Err(Error::Train(format!(
            "reg and lr must be positive, got reg {} lr {}",
            params.reg, params.lr
        )));
    }
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::Train(format!(
            "built-in model is two-class; dataset has {} class(es)",
            classes.len()
        )));
    }
    let kernel = kernel.resolve(instances)?;
    let n = instances.len();
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l == classes[1] { 1.0 } else { 0.0 })
        .collect();

    let g = gram(instances, instances, &kernel)?;
    let mut alpha = vec![0.0f64; n];
    let mut bias = 0.0f64;
    let mut trace = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let mut loss = KahanSum::new();
        let mut residual = vec![0.0f64; n]; // p - y
        for i in 0..n {
            let mut logit = KahanSum::new();
            for j in 0..n {
                logit.add(g[i][j] * alpha[j]);
            }
            let z = logit.value() + bias;
            // stable cross-entropy: max(z,0) - z*y + ln(1 + e^-|z|)
            loss.add(z.max(0.0) - z * targets[i] + (-z.abs()).exp().ln_1p());
            residual[i] = sigmoid(z) - targets[i];
        }
        let mut penalty = KahanSum::new();
        for &a in &alpha {
            penalty.add(a * a);
        }
        let total = loss.value() / n as f64 + 0.5 * params.reg * penalty.value();
        if !total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                hyperparameter: "lr".into(),
            });
        }
        trace.push(total);
        let mut bias_grad = KahanSum::new();
        for &r in &residual {
            bias_grad.add(r);
        }
        for i in 0..n {
            let mut grad = KahanSum::new();
            for j in 0..n {
                grad.add(g[i][j] * residual[j]);
            }
            alpha[i] -= params.lr * (grad.value() / n as f64 + params.reg * alpha[i]);
        }
        bias -= params.lr * bias_grad.value() / n as f64;
    }

    Ok((
        KernelLogisticModel {
            kernel,
            support_set: instances.to_vec(),
            dual_coeffs: alpha,
            bias,
            class_ids: [classes[0], classes[1]],
            dim: instances[0].dim(),
        },
        trace,
    ))
}

impl KernelLogisticModel {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dual_coeffs(&self) -> &[f64] {
        &self.dual_coeffs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn logit(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::Contract(format!(
                "dimension mismatch: instance {} vs model {}",
                x.dim(),
                self.dim
            )));
        }
        let mut acc = KahanSum::new();
        for (sv, &a) in self.support_set.iter().zip(&self.dual_coeffs) {
            if a != 0.0 {
                acc.add(a * self.kernel.eval(x, sv)?);
            }
        }
        Ok(acc.value() + self.bias)
    }

    /// Mean 0/1 accuracy against labels, using a 0.5 probability cut.
    pub fn accuracy(&self, instances: &[SparseVector], labels: &[i32]) -> Result<f64> {
        let mut hits = 0usize;
        for (x, &l) in instances.iter().zip(labels) {
            let predicted = if sigmoid(self.logit(x)?) > 0.5 {
                self.class_ids[1]
            } else {
                self.class_ids[0]
            };
            hits += (predicted == l) as usize;
        }
        Ok(hits as f64 / instances.len() as f64)
    }

    /// Training objective at the fitted coefficients: mean logistic loss plus
    /// (reg/2)||alpha||^2.
    pub fn training_loss(&self, instances: &[SparseVector], labels: &[i32], reg: f64) -> Result<f64> {
        let mut loss = KahanSum::new();
        for (x, &l) in instances.iter().zip(labels) {
            let y = (l == self.class_ids[1]) as u8 as f64;
            let z = self.logit(x)?;
            loss.add(z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
        }
        let mut penalty = KahanSum::new();
        for &a in &self.dual_coeffs {
            penalty.add(a * a);
        }
        Ok(loss.value() / instances.len() as f64 + 0.5 * reg * penalty.value())
    }
}

impl Scorer for KernelLogisticModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    fn score(&self, x: &SparseVector) -> Result<ScoreVector> {
        let p = sigmoid(self.logit(x)?);
        ScoreVector::new(vec![1.0 - p, p], self.class_ids.to_vec())
    }
}

#[derive(Serialize, Deserialize)]
struct SupportEntry {
    indices: Vec<u32>,
    values: Vec<f64>,
}

/// On-disk model document; field order is part of the format.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    kernel: String,
    gamma: Option<f64>,
    bias: f64,
    dual_coeffs: Vec<f64>,
    support_set: Vec<SupportEntry>,
    class_ids: Vec<i32>,
    dim: usize,
}

impl KernelLogisticModel {
    pub fn to_json(&self) -> Result<String> {
        let (kernel, gamma) = match self.kernel.kind() {
            KernelKind::Cosine => ("cosine".to_string(), None),
            KernelKind::Rbf { gamma } => (
                "rbf".to_string(),
                match gamma {
                    crate::numkit::GammaSpec::Fixed(g) => Some(g),
                    crate::numkit::GammaSpec::MedianHeuristic => {
                        return Err(Error::Config("model kernel gamma unresolved".into()))
                    }
                },
            ),
        };
        let file = ModelFile {
            kind: "kernel-logistic".into(),
            kernel,
            gamma,
            bias: self.bias,
            dual_coeffs: self.dual_coeffs.clone(),
            support_set: self
                .support_set
                .iter()
                .map(|sv| SupportEntry {
                    indices: sv.indices().to_vec(),
                    values: sv.values().to_vec(),
                })
                .collect(),
            class_ids: self.class_ids.to_vec(),
            dim: self.dim,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.kind != "kernel-logistic" {
            return Err(Error::Config(format!("unknown model kind {:?}", file.kind)));
        }
        let kernel = match file.kernel.as_str() {
            "cosine" => KernelSpec::cosine(),
            "rbf" => KernelSpec::rbf(file.gamma.ok_or_else(|| {
                Error::Config("rbf model file missing gamma".into())
            })?)?,
            other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
        };
        if file.class_ids.len() != 2 {
            return Err(Error::Config(format!(
                "model must have exactly 2 class ids, got {}",
                file.class_ids.len()
            )));
        }
        if file.dual_coeffs.len() != file.support_set.len() {
            return Err(Error::Config(format!(
                "dual_coeffs/support_set length mismatch: {} vs {}",
                file.dual_coeffs.len(),
                file.support_set.len()
            )));
        }
        let support_set = file
            .support_set
            .into_iter()
            .map(|e| SparseVector::new(file.dim, e.indices, e.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelLogisticModel {
            kernel,
            support_set,
            dual_coeffs: file.dual_coeffs,
            bias: file.bias,
            class_ids: [file.class_ids[0], file.class_ids[1]],
            dim: file.dim,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
