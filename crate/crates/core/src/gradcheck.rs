//! Cross-validation of the analytic gradients against central finite
//! differences, over random (network, loss, batch) triples. Used by the
//! `gradcheck` CLI subcommand and the acceptance suite.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::heads::{AnchorVector, Head, LossKind};
use crate::net::{self, Activation, NetworkParams};
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub kind: LossKind,
    pub instances: usize,
    /// Worst relative disagreement over all parameter coordinates.
    pub max_rel_error: f64,
    /// Worst disagreement of the anchor gradient, for learnable anchors.
    pub anchor_max_rel_error: Option<f64>,
}

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| rel_error(a, b))
        .fold(0.0, f64::max)
}

/// Checks one loss kind over `instances` random triples with the given
/// finite-difference step; returns the worst errors seen.
pub fn check_loss_kind(
    kind: LossKind,
    instances: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut max_err: f64 = 0.0;
    let mut anchor_max: f64 = 0.0;
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(i as u64 + 1)));
        let k = rng.random_range(3..=6usize);
        let d = rng.random_range(2..=4usize);
        let hidden = rng.random_range(3..=6usize);
        let n = rng.random_range(2..=4usize);

        let mut head = Head::new(kind, k)?;
        if head.anchor.is_learnable() {
            // move the anchor off its init so its gradient path is exercised
            let values: Vec<f64> = (0..k)
                .map(|j| j as f64 + rng.random_range(-0.3..0.3))
                .collect();
            head.anchor = AnchorVector::from_values(values, true);
        }
        let dims = [d, hidden, head.output_width()];
        let activations = [Activation::Relu, kind.output_activation()];
        let params = NetworkParams::init(&dims, &activations, rng.random())?;

        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if kind == LossKind::Qwk {
            // the surrogate needs two distinct labels in the batch
            labels[0] = 0;
            labels[1] = k - 1;
        }
        let batch = Tensor::matrix(
            n,
            d,
            (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )?;

        let loss_of = |p: &NetworkParams, anchor: &AnchorVector| -> Result<f64> {
            let acts = net::forward(p, &batch)?;
            let mut h = head.clone();
            h.anchor = anchor.clone();
            h.batch_loss(acts.last().expect("non-empty"), &labels)
        };

        // analytic path
        let acts = net::forward(&params, &batch)?;
        let outputs = acts.last().expect("non-empty");
        let (grad_out, grad_anchor) = head.batch_grad(outputs, &labels)?;
        let (grads, _) = net::backward(&params, &batch, &acts, &grad_out)?;

        // numeric path over network parameters
        let numeric = net::finite_difference_gradient(|p| loss_of(p, &head.anchor), &params, eps)?;
        max_err = max_err.max(max_rel_error(&grads.flatten(), &numeric));

        // numeric path over the anchor
        if let Some(ga) = grad_anchor {
            let numeric_a = net::finite_difference_gradient_vec(
                |a| loss_of(&params, &AnchorVector::from_values(a.to_vec(), true)),
                head.anchor.values(),
                eps,
            )?;
            anchor_max = anchor_max.max(max_rel_error(&ga, &numeric_a));
        }
    }
    Ok(GradCheckReport {
        kind,
        instances,
        max_rel_error: max_err,
        anchor_max_rel_error: if kind.has_learnable_anchor() {
            Some(anchor_max)
        } else {
            None
        },
    })
}

/// Runs the check for every loss kind.
pub fn check_all(instances: usize, eps: f64, seed: u64) -> Result<Vec<GradCheckReport>> {
    LossKind::ALL
        .iter()
        .map(|&kind| check_loss_kind(kind, instances, eps, seed))
        .collect()
}
