//! Quadratic weighted kappa via the observed/expected/weight matrix
//! construction, and the differentiable surrogate that minimizes the
//! kappa fraction directly.

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Quadratic,
    Discrete,
}

impl WeightKind {
    pub fn token(self) -> &'static str {
        match self {
            WeightKind::Quadratic => "quadratic",
            WeightKind::Discrete => "discrete",
        }
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        match tok {
            "quadratic" => Ok(WeightKind::Quadratic),
            "discrete" => Ok(WeightKind::Discrete),
            other => Err(Error::Config(format!(
                "unknown weight kind `{other}` (expected quadratic|discrete)"
            ))),
        }
    }
}

/// k×k misclassification cost matrix: symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub kind: WeightKind,
    values: Tensor,
}

impl WeightMatrix {
    pub fn k(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }
}

/// W_ij = (i−j)² for the quadratic kind, 1 off-diagonal for discrete.
pub fn weight_matrix(k: usize, kind: WeightKind) -> Result<WeightMatrix> {
    if k < 2 {
        return Err(Error::Config(format!("weight matrix needs k >= 2, got {k}")));
    }
    let mut values = Tensor::zeros(vec![k, k]);
    for i in 0..k {
        for j in 0..k {
            let w = match kind {
                WeightKind::Quadratic => {
                    let d = i as f64 - j as f64;
                    d * d
                }
                WeightKind::Discrete => {
                    if i == j {
                        0.0
                    } else {
                        1.0
                    }
                }
            };
            values.set(i, j, w);
        }
    }
    Ok(WeightMatrix { kind, values })
}

fn check_pair(y: &Tensor, p: &Tensor) -> Result<()> {
    if y.shape() != p.shape() {
        return Err(Error::Shape(format!(
            "label matrix {:?} vs prediction matrix {:?}",
            y.shape(),
            p.shape()
        )));
    }
    for r in 0..y.rows() {
        let row = y.row(r);
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != row.len() - 1 {
            return Err(Error::Domain(format!("label row {r} is not one-hot")));
        }
        let psum: f64 = p.row(r).iter().sum();
        if p.row(r).iter().any(|&v| v < -1e-9) || (psum - 1.0).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "prediction row {r} is not stochastic (sum {psum})"
            )));
        }
    }
    Ok(())
}

/// O = YᵀP, the unnormalized joint rating counts.
pub fn observed_matrix(y: &Tensor, p: &Tensor) -> Result<Tensor> {
    check_pair(y, p)?;
    y.transpose_matmul(p)
}

/// E = colsum(Y) ⊗ colsum(P), rescaled to share O's total sum.
pub fn expected_matrix(y: &Tensor, p: &Tensor) -> Result<Tensor> {
    check_pair(y, p)?;
    if y.rows() == 0 {
        return Err(Error::Domain("empty rating set".into()));
    }
    let o_sum = observed_matrix(y, p)?.sum();
    let u = y.column_sums();
    let v = p.column_sums();
    let k = u.len();
    let mut e = Tensor::zeros(vec![k, k]);
    for i in 0..k {
        for j in 0..k {
            e.set(i, j, u[i] * v[j] / o_sum);
        }
    }
    Ok(e)
}

fn weighted_sums(y: &Tensor, p: &Tensor, w: &WeightMatrix) -> Result<(f64, f64)> {
    if w.k() != y.cols() {
        return Err(Error::Shape(format!(
            "weight matrix is {}x{0} but data has {} classes",
            w.k(),
            y.cols()
        )));
    }
    let o = observed_matrix(y, p)?;
    let e = expected_matrix(y, p)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..w.k() {
        for j in 0..w.k() {
            num += w.get(i, j) * o.get(i, j);
            den += w.get(i, j) * e.get(i, j);
        }
    }
    Ok((num, den))
}

/// κ = 1 − (ΣW∘O)/(ΣW∘E). Degenerate zero denominator counts as complete
/// agreement when the numerator is also zero.
pub fn kappa(y: &Tensor, p: &Tensor, w: &WeightMatrix) -> Result<f64> {
    let (num, den) = weighted_sums(y, p, w)?;
    if den == 0.0 {
        return if num == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::Domain(
                "zero expected disagreement with nonzero observed disagreement".into(),
            ))
        };
    }
    Ok(1.0 - num / den)
}

/// The fractional part of κ: (ΣW∘O)/(ΣW∘E), to be minimized.
pub fn qwk_surrogate_loss(y: &Tensor, p: &Tensor, w: &WeightMatrix) -> Result<f64> {
    check_surrogate_batch(y)?;
    let (num, den) = weighted_sums(y, p, w)?;
    if den.abs() < 1e-30 {
        return Err(Error::Domain("degenerate expected-disagreement denominator".into()));
    }
    Ok(num / den)
}

/// True when the batch supports the surrogate: at least two examples with
/// at least two distinct labels.
pub fn surrogate_batch_ok(labels: &[usize]) -> bool {
    labels.len() >= 2 && labels.iter().any(|&c| c != labels[0])
}

fn check_surrogate_batch(y: &Tensor) -> Result<()> {
    if y.rows() < 2 {
        return Err(Error::Domain("surrogate batch needs at least 2 examples".into()));
    }
    let u = y.column_sums();
    if u.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(Error::Domain(
            "surrogate batch needs at least two distinct labels".into(),
        ));
    }
    Ok(())
}

/// Gradient of the surrogate wrt P.
///
/// With u = colsum(Y), v = colsum(P), S = ΣO:
///   ∂num/∂P_rj = (Y·W)_rj
///   ∂den/∂P_rj = ((uᵀW)_j − den) / S
pub fn qwk_surrogate_grad(y: &Tensor, p: &Tensor, w: &WeightMatrix) -> Result<Tensor> {
    check_surrogate_batch(y)?;
    let (num, den) = weighted_sums(y, p, w)?;
    if den.abs() < 1e-30 {
        return Err(Error::Domain("degenerate expected-disagreement denominator".into()));
    }
    let s = observed_matrix(y, p)?.sum();
    let u = y.column_sums();
    let k = w.k();
    let mut ut_w = vec![0.0; k];
    for (j, val) in ut_w.iter_mut().enumerate() {
        *val = (0..k).map(|i| u[i] * w.get(i, j)).sum();
    }
    let yw = y.matmul(w.values())?;
    let mut grad = Tensor::zeros(vec![p.rows(), p.cols()]);
    for r in 0..p.rows() {
        for j in 0..k {
            let dnum = yw.get(r, j);
            let dden = (ut_w[j] - den) / s;
            grad.set(r, j, dnum / den - num * dden / (den * den));
        }
    }
    grad.assert_finite("qwk surrogate gradient")?;
    Ok(grad)
}
