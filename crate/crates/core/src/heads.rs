//! Ordinal output heads and their training losses.
//!
//! Five per-example losses (cross-entropy, squared error on a soft argmax
//! with a fixed or learnable anchor, the sigmoid-bounded variant, and the
//! cumulative binary cross-entropy of the Cheng encoding) plus a batch-level
//! surrogate for the quadratic weighted kappa, all exposed behind one `Head`
//! used by the training loop.

use crate::qwk::{self, WeightKind, WeightMatrix};
use crate::tensor::{dot, Tensor};
use crate::{net, Error, Result};

/// Probabilities are clamped to at least this before any log.
pub const PROB_EPS: f64 = 1e-12;

/// Length-k anchor vector. Fixed anchors are exactly `[0, 1, …, k−1]`;
/// learnable anchors start there and move under the squared-error losses.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorVector {
    values: Vec<f64>,
    learnable: bool,
}

impl AnchorVector {
    pub fn fixed(k: usize) -> Self {
        Self {
            values: (0..k).map(|i| i as f64).collect(),
            learnable: false,
        }
    }

    pub fn learnable(k: usize) -> Self {
        Self {
            values: (0..k).map(|i| i as f64).collect(),
            learnable: true,
        }
    }

    pub fn from_values(values: Vec<f64>, learnable: bool) -> Self {
        Self { values, learnable }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_learnable(&self) -> bool {
        self.learnable
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gaussian interpretation of the squared-error head. The variance only
/// scales the density; the optimized objective is the squared error itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHeadParams {
    pub sigma_sq: f64,
}

impl GaussianHeadParams {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if sigma_sq > 0.0 {
            Ok(Self { sigma_sq })
        } else {
            Err(Error::Config(format!("sigma_sq must be positive, got {sigma_sq}")))
        }
    }
}

impl Default for GaussianHeadParams {
    fn default() -> Self {
        Self { sigma_sq: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    FixA,
    LearnA,
    LearnASigm,
    Cheng,
    Qwk,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::CrossEntropy,
        LossKind::FixA,
        LossKind::LearnA,
        LossKind::LearnASigm,
        LossKind::Cheng,
        LossKind::Qwk,
    ];

    pub fn token(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross-entropy",
            LossKind::FixA => "fix-a",
            LossKind::LearnA => "learn-a",
            LossKind::LearnASigm => "learn-a-sigm",
            LossKind::Cheng => "cheng",
            LossKind::Qwk => "qwk",
        }
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        match tok {
            "cross-entropy" => Ok(LossKind::CrossEntropy),
            "fix-a" => Ok(LossKind::FixA),
            "learn-a" => Ok(LossKind::LearnA),
            "learn-a-sigm" => Ok(LossKind::LearnASigm),
            "cheng" => Ok(LossKind::Cheng),
            "qwk" => Ok(LossKind::Qwk),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected cross-entropy|fix-a|learn-a|learn-a-sigm|cheng|qwk)"
            ))),
        }
    }

    /// Final-layer width this loss expects: k for softmax heads, k−1 for cheng.
    pub fn output_width(self, k: usize) -> usize {
        match self {
            LossKind::Cheng => k - 1,
            _ => k,
        }
    }

    pub fn output_activation(self) -> net::Activation {
        match self {
            LossKind::Cheng => net::Activation::Sigmoid,
            _ => net::Activation::Softmax,
        }
    }

    pub fn has_learnable_anchor(self) -> bool {
        matches!(self, LossKind::LearnA | LossKind::LearnASigm)
    }
}

fn check_stochastic(f: &[f64]) -> Result<()> {
    let sum: f64 = f.iter().sum();
    if f.iter().any(|&v| v < -1e-9) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "probability row is not stochastic (sum {sum})"
        )));
    }
    Ok(())
}

fn check_label(c: usize, k: usize) -> Result<()> {
    if c >= k {
        Err(Error::Label(format!("label {c} out of range for k={k}")))
    } else {
        Ok(())
    }
}

/// −Σᵢ yᵢ log fᵢ for a one-hot y, with f clamped before the log.
pub fn cross_entropy_loss(f: &[f64], c: usize) -> Result<f64> {
    check_stochastic(f)?;
    check_label(c, f.len())?;
    Ok(-f[c].max(PROB_EPS).ln())
}

/// The expectation aᵀf of the class index under f.
pub fn soft_argmax(f: &[f64], a: &AnchorVector) -> Result<f64> {
    if f.len() != a.len() {
        return Err(Error::Shape(format!(
            "distribution width {} vs anchor length {}",
            f.len(),
            a.len()
        )));
    }
    check_stochastic(f)?;
    Ok(dot(a.values(), f))
}

/// (c − aᵀf)² with a frozen to [0..k−1].
pub fn fix_a_loss(f: &[f64], c: usize) -> Result<f64> {
    check_label(c, f.len())?;
    let a = AnchorVector::fixed(f.len());
    let pred = soft_argmax(f, &a)?;
    Ok((c as f64 - pred).powi(2))
}

/// (c − aᵀf)² with a learnable anchor; also returns ∂loss/∂a = −2(c − aᵀf)·f.
pub fn learn_a_loss(f: &[f64], c: usize, a: &AnchorVector) -> Result<(f64, Vec<f64>)> {
    check_label(c, a.len())?;
    let pred = soft_argmax(f, a)?;
    let resid = c as f64 - pred;
    let grad_a = f.iter().map(|&fi| -2.0 * resid * fi).collect();
    Ok((resid * resid, grad_a))
}

/// (c − (k−1)σ(aᵀf))²; the prediction is bounded inside (0, k−1).
pub fn learn_a_sigm_loss(f: &[f64], c: usize, a: &AnchorVector) -> Result<(f64, Vec<f64>)> {
    let k = a.len();
    check_label(c, k)?;
    let u = soft_argmax(f, a)?;
    let s = net::sigmoid(u);
    let pred = (k - 1) as f64 * s;
    let resid = c as f64 - pred;
    let dloss_du = -2.0 * resid * (k - 1) as f64 * s * (1.0 - s);
    let grad_a = f.iter().map(|&fi| dloss_du * fi).collect();
    Ok((resid * resid, grad_a))
}

/// The bounded prediction (k−1)σ(aᵀf) used when decoding this head.
pub fn learn_a_sigm_prediction(f: &[f64], a: &AnchorVector) -> Result<f64> {
    let u = soft_argmax(f, a)?;
    Ok((a.len() - 1) as f64 * net::sigmoid(u))
}

/// Cumulative binary code for class c: c leading ones, then zeros.
pub fn cheng_encode(c: usize, k: usize) -> Result<Vec<f64>> {
    check_label(c, k)?;
    Ok((0..k - 1).map(|i| if i < c { 1.0 } else { 0.0 }).collect())
}

/// Σᵢ −yᵢ log gᵢ − (1−yᵢ) log(1−gᵢ) over the k−1 code positions.
pub fn cheng_bce_loss(g: &[f64], y_code: &[f64]) -> Result<f64> {
    if g.len() != y_code.len() {
        return Err(Error::Shape(format!(
            "code length {} vs output length {}",
            y_code.len(),
            g.len()
        )));
    }
    let mut total = 0.0;
    for (&gi, &yi) in g.iter().zip(y_code) {
        let gi = gi.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total += -yi * gi.ln() - (1.0 - yi) * (1.0 - gi).ln();
    }
    Ok(total)
}

/// An output head: the loss kind, the class count, and the anchor state.
#[derive(Debug, Clone)]
pub struct Head {
    pub kind: LossKind,
    pub k: usize,
    pub anchor: AnchorVector,
    weight: WeightMatrix,
}

impl Head {
    pub fn new(kind: LossKind, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need k >= 2 classes, got {k}")));
        }
        let anchor = if kind.has_learnable_anchor() {
            AnchorVector::learnable(k)
        } else {
            AnchorVector::fixed(k)
        };
        Ok(Self {
            kind,
            k,
            anchor,
            weight: qwk::weight_matrix(k, WeightKind::Quadratic)?,
        })
    }

    pub fn output_width(&self) -> usize {
        self.kind.output_width(self.k)
    }

    fn check_outputs(&self, outputs: &Tensor, labels: &[usize]) -> Result<()> {
        if outputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} output rows vs {} labels",
                outputs.rows(),
                labels.len()
            )));
        }
        if outputs.cols() != self.output_width() {
            return Err(Error::Shape(format!(
                "output width {} but head expects {}",
                outputs.cols(),
                self.output_width()
            )));
        }
        for &c in labels {
            check_label(c, self.k)?;
        }
        Ok(())
    }

    /// Batch loss: mean over examples, except the set-level QWK surrogate.
    pub fn batch_loss(&self, outputs: &Tensor, labels: &[usize]) -> Result<f64> {
        self.check_outputs(outputs, labels)?;
        let n = labels.len();
        match self.kind {
            LossKind::CrossEntropy => {
                let mut total = 0.0;
                for (r, &c) in labels.iter().enumerate() {
                    total += cross_entropy_loss(outputs.row(r), c)?;
                }
                Ok(total / n as f64)
            }
            LossKind::FixA => {
                let mut total = 0.0;
                for (r, &c) in labels.iter().enumerate() {
                    total += fix_a_loss(outputs.row(r), c)?;
                }
                Ok(total / n as f64)
            }
            LossKind::LearnA => {
                let mut total = 0.0;
                for (r, &c) in labels.iter().enumerate() {
                    total += learn_a_loss(outputs.row(r), c, &self.anchor)?.0;
                }
                Ok(total / n as f64)
            }
            LossKind::LearnASigm => {
                let mut total = 0.0;
                for (r, &c) in labels.iter().enumerate() {
                    total += learn_a_sigm_loss(outputs.row(r), c, &self.anchor)?.0;
                }
                Ok(total / n as f64)
            }
            LossKind::Cheng => {
                let mut total = 0.0;
                for (r, &c) in labels.iter().enumerate() {
                    let code = cheng_encode(c, self.k)?;
                    total += cheng_bce_loss(outputs.row(r), &code)?;
                }
                Ok(total / n as f64)
            }
            LossKind::Qwk => {
                let y = one_hot_matrix(labels, self.k);
                qwk::qwk_surrogate_loss(&y, outputs, &self.weight)
            }
        }
    }

    /// Batch loss gradient wrt the network outputs (post-activation), plus
    /// the anchor gradient when the anchor is learnable. Scaling matches
    /// `batch_loss` exactly.
    pub fn batch_grad(&self, outputs: &Tensor, labels: &[usize]) -> Result<(Tensor, Option<Vec<f64>>)> {
        self.check_outputs(outputs, labels)?;
        let n = labels.len();
        let scale = 1.0 / n as f64;
        let mut grad = Tensor::zeros(vec![outputs.rows(), outputs.cols()]);
        let mut grad_a = if self.anchor.is_learnable() {
            Some(vec![0.0; self.k])
        } else {
            None
        };
        match self.kind {
            LossKind::CrossEntropy => {
                for (r, &c) in labels.iter().enumerate() {
                    let f = outputs.row(r);
                    if f[c] > PROB_EPS {
                        grad.set(r, c, -scale / f[c]);
                    }
                }
            }
            LossKind::FixA => {
                let a = AnchorVector::fixed(self.k);
                for (r, &c) in labels.iter().enumerate() {
                    let resid = c as f64 - dot(a.values(), outputs.row(r));
                    for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                        *g = -2.0 * resid * a.values()[j] * scale;
                    }
                }
            }
            LossKind::LearnA => {
                for (r, &c) in labels.iter().enumerate() {
                    let f = outputs.row(r);
                    let resid = c as f64 - dot(self.anchor.values(), f);
                    let ga: Vec<f64> = f.iter().map(|&fi| -2.0 * resid * fi).collect();
                    for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                        *g = -2.0 * resid * self.anchor.values()[j] * scale;
                    }
                    if let Some(acc) = grad_a.as_mut() {
                        for (s, gi) in acc.iter_mut().zip(&ga) {
                            *s += gi * scale;
                        }
                    }
                }
            }
            LossKind::LearnASigm => {
                let km1 = (self.k - 1) as f64;
                for (r, &c) in labels.iter().enumerate() {
                    let f = outputs.row(r);
                    let u = dot(self.anchor.values(), f);
                    let s = net::sigmoid(u);
                    let resid = c as f64 - km1 * s;
                    let dloss_du = -2.0 * resid * km1 * s * (1.0 - s);
                    for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                        *g = dloss_du * self.anchor.values()[j] * scale;
                    }
                    if let Some(acc) = grad_a.as_mut() {
                        for (a, &fi) in acc.iter_mut().zip(f) {
                            *a += dloss_du * fi * scale;
                        }
                    }
                }
            }
            LossKind::Cheng => {
                for (r, &c) in labels.iter().enumerate() {
                    let code = cheng_encode(c, self.k)?;
                    let g_out = outputs.row(r).to_vec();
                    for (j, (gi, yi)) in g_out.iter().zip(&code).enumerate() {
                        let gc = gi.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        // zero derivative through a saturated clamp
                        if *gi < PROB_EPS || *gi > 1.0 - PROB_EPS {
                            continue;
                        }
                        grad.set(r, j, scale * (-yi / gc + (1.0 - yi) / (1.0 - gc)));
                    }
                }
            }
            LossKind::Qwk => {
                let y = one_hot_matrix(labels, self.k);
                grad = qwk::qwk_surrogate_grad(&y, outputs, &self.weight)?;
            }
        }
        Ok((grad, grad_a))
    }
}

/// One-hot encodes labels into an n×k matrix.
pub fn one_hot_matrix(labels: &[usize], k: usize) -> Tensor {
    let mut y = Tensor::zeros(vec![labels.len(), k]);
    for (r, &c) in labels.iter().enumerate() {
        y.set(r, c, 1.0);
    }
    y
}
