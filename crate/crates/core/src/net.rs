//! Minimal reverse-mode differentiable feedforward network.
//!
//! Dense layers with relu/softmax/sigmoid/identity activations, SGD with
//! Nesterov momentum, and a central finite-difference gradient oracle used
//! by the tests to cross-check `backward`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn token(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        match tok {
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// One dense layer: `y = act(x·W + b)` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    /// Glorot-uniform initialization in ±sqrt(6/(fan_in+fan_out)), zero bias,
    /// deterministic in the seed.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("need at least one layer".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} dims imply {} layers, got {} activations",
                dims.len(),
                dims.len() - 1,
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            layers.push(Layer {
                weight: Tensor::matrix(fan_in, fan_out, data)?,
                bias: Tensor::zeros(vec![fan_out]),
                activation: act,
            });
        }
        let net = Self { layers };
        net.check_chain()?;
        Ok(net)
    }

    fn check_chain(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} then {}",
                    pair[0].fan_out(),
                    pair[1].fan_in()
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().expect("non-empty").activation
    }

    /// Flattens every parameter into one vector (weights then bias per layer).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.weight.numel();
            l.weight.data_mut().copy_from_slice(&flat[off..off + wn]);
            off += wn;
            let bn = l.bias.numel();
            l.bias.data_mut().copy_from_slice(&flat[off..off + bn]);
            off += bn;
        }
        debug_assert_eq!(off, flat.len());
    }
}

/// Gradients (or velocities) with the same shapes as `NetworkParams`.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    (
                        Tensor::zeros(l.weight.shape().to_vec()),
                        Tensor::zeros(l.bias.shape().to_vec()),
                    )
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b.data());
        }
        out
    }
}

fn softmax_row(logits: &[f64], out: &mut [f64]) {
    // max-subtraction for stability
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - m).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn apply_activation(act: Activation, pre: &mut Tensor) {
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for v in pre.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for v in pre.data_mut() {
                *v = sigmoid(*v);
            }
        }
        Activation::Softmax => {
            let rows = pre.rows();
            for r in 0..rows {
                let row = pre.row_mut(r);
                let logits = row.to_vec();
                softmax_row(&logits, row);
            }
        }
    }
}

/// Runs the network on a batch, returning one activation tensor per layer.
/// The last entry is the network output.
pub fn forward(params: &NetworkParams, batch: &Tensor) -> Result<Vec<Tensor>> {
    batch.assert_finite("network input")?;
    if batch.cols() != params.input_width() {
        return Err(Error::Shape(format!(
            "batch width {} but first layer expects {}",
            batch.cols(),
            params.input_width()
        )));
    }
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut current = batch;
    for layer in &params.layers {
        let mut pre = current.matmul(&layer.weight)?;
        for r in 0..pre.rows() {
            for (v, &b) in pre.row_mut(r).iter_mut().zip(layer.bias.data()) {
                *v += b;
            }
        }
        apply_activation(layer.activation, &mut pre);
        pre.assert_finite("layer activation")?;
        activations.push(pre);
        current = activations.last().expect("just pushed");
    }
    Ok(activations)
}

/// Backpropagates `output_gradient` (dLoss/dOutput, post-activation) through
/// the network, returning parameter gradients and the gradient wrt the input.
pub fn backward(
    params: &NetworkParams,
    batch: &Tensor,
    activations: &[Tensor],
    output_gradient: &Tensor,
) -> Result<(ParamGrads, Tensor)> {
    if activations.len() != params.layers.len() {
        return Err(Error::Shape("activations do not match layer count".into()));
    }
    let out = activations.last().expect("non-empty");
    if output_gradient.shape() != out.shape() {
        return Err(Error::Shape(format!(
            "output gradient shape {:?} vs output {:?}",
            output_gradient.shape(),
            out.shape()
        )));
    }

    let mut grads = ParamGrads::zeros_like(params);
    let mut upstream = output_gradient.clone();
    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let act_out = &activations[idx];
        // dLoss/dPre from dLoss/dPost
        let mut dpre = upstream;
        match layer.activation {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &a) in dpre.data_mut().iter_mut().zip(act_out.data()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in dpre.data_mut().iter_mut().zip(act_out.data()) {
                    *g *= s * (1.0 - s);
                }
            }
            Activation::Softmax => {
                for r in 0..dpre.rows() {
                    let s = act_out.row(r);
                    let g = dpre.row_mut(r);
                    let inner: f64 = g.iter().zip(s.iter()).map(|(gi, si)| gi * si).sum();
                    for (gi, &si) in g.iter_mut().zip(s.iter()) {
                        *gi = si * (*gi - inner);
                    }
                }
            }
        }

        let input = if idx == 0 { batch } else { &activations[idx - 1] };
        let dw = input.transpose_matmul(&dpre)?;
        let mut db = Tensor::zeros(vec![layer.fan_out()]);
        for r in 0..dpre.rows() {
            for (b, &g) in db.data_mut().iter_mut().zip(dpre.row(r)) {
                *b += g;
            }
        }
        grads.layers[idx] = (dw, db);
        upstream = dpre.matmul_transpose(&layer.weight)?;
    }
    Ok((grads, upstream))
}

/// Optimizer state for SGD with Nesterov momentum. Velocity shapes mirror
/// the parameter shapes exactly.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: ParamGrads,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, learning_rate: f64, momentum: f64) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0,1), got {momentum}"
            )));
        }
        Ok(Self {
            velocity: ParamGrads::zeros_like(params),
            learning_rate,
            momentum,
        })
    }
}

fn nesterov_update(theta: &mut [f64], v: &mut [f64], g: &[f64], alpha: f64, mu: f64) {
    // v' = μv − αg;  θ' = θ + μv' − αg  (look-ahead form)
    for ((t, vi), &gi) in theta.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        let vnew = mu * *vi - alpha * gi;
        *t += mu * vnew - alpha * gi;
        *vi = vnew;
    }
}

/// One Nesterov step over every layer, in place.
pub fn sgd_nesterov_step(
    params: &mut NetworkParams,
    grads: &ParamGrads,
    state: &mut OptimizerState,
) -> Result<()> {
    if state.learning_rate <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradient layer count mismatch".into()));
    }
    let (alpha, mu) = (state.learning_rate, state.momentum);
    for ((layer, (gw, gb)), (vw, vb)) in params
        .layers
        .iter_mut()
        .zip(grads.layers.iter())
        .zip(state.velocity.layers.iter_mut())
    {
        if gw.shape() != layer.weight.shape() || gb.shape() != layer.bias.shape() {
            return Err(Error::Shape("gradient shape mismatch".into()));
        }
        nesterov_update(layer.weight.data_mut(), vw.data_mut(), gw.data(), alpha, mu);
        nesterov_update(layer.bias.data_mut(), vb.data_mut(), gb.data(), alpha, mu);
    }
    Ok(())
}

/// Nesterov step for a free parameter vector (the learnable anchor).
pub fn sgd_nesterov_step_vec(
    theta: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    alpha: f64,
    mu: f64,
) -> Result<()> {
    if alpha <= 0.0 {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    if grad.len() != theta.len() || velocity.len() != theta.len() {
        return Err(Error::Shape("vector length mismatch in optimizer step".into()));
    }
    nesterov_update(theta, velocity, grad, alpha, mu);
    Ok(())
}

/// Central-difference gradient of `loss_fn` over every network parameter.
pub fn finite_difference_gradient<F>(
    loss_fn: F,
    params: &NetworkParams,
    eps: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&NetworkParams) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let mut scratch = params.clone();
    let mut flat = params.flatten();
    let mut grad = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + eps;
        scratch.unflatten_into(&flat);
        let up = loss_fn(&scratch)?;
        flat[i] = orig - eps;
        scratch.unflatten_into(&flat);
        let down = loss_fn(&scratch)?;
        flat[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle("non-finite loss during finite differences".into()));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Central differences over a free vector, for anchor gradients.
pub fn finite_difference_gradient_vec<F>(loss_fn: F, theta: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let mut scratch = theta.to_vec();
    let mut grad = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let orig = scratch[i];
        scratch[i] = orig + eps;
        let up = loss_fn(&scratch)?;
        scratch[i] = orig - eps;
        let down = loss_fn(&scratch)?;
        scratch[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle("non-finite loss during finite differences".into()));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_layer(dim: usize) -> NetworkParams {
        let mut w = Tensor::zeros(vec![dim, dim]);
        for i in 0..dim {
            w.set(i, i, 1.0);
        }
        NetworkParams {
            layers: vec![Layer {
                weight: w,
                bias: Tensor::zeros(vec![dim]),
                activation: Activation::Identity,
            }],
        }
    }

    #[test]
    fn forward_identity() {
        let params = identity_layer(2);
        let batch = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let acts = forward(&params, &batch).unwrap();
        assert_eq!(acts.last().unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn forward_softmax_symmetry() {
        let mut params = identity_layer(3);
        params.layers[0].activation = Activation::Softmax;
        let batch = Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        let acts = forward(&params, &batch).unwrap();
        for &v in acts.last().unwrap().data() {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn forward_sigmoid_at_zero() {
        let mut params = identity_layer(1);
        params.layers[0].activation = Activation::Sigmoid;
        let batch = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let acts = forward(&params, &batch).unwrap();
        assert_abs_diff_eq!(acts.last().unwrap().data()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let params = identity_layer(2);
        let batch = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(forward(&params, &batch), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut params = identity_layer(4);
        params.layers[0].activation = Activation::Softmax;
        let logits = vec![1.5, -2.0, 0.25, 3.0];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 7.5).collect();
        let a = forward(&params, &Tensor::matrix(1, 4, logits).unwrap()).unwrap();
        let b = forward(&params, &Tensor::matrix(1, 4, shifted).unwrap()).unwrap();
        let (fa, fb) = (a.last().unwrap(), b.last().unwrap());
        assert_abs_diff_eq!(fa.data().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for (x, y) in fa.data().iter().zip(fb.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }

    #[test]
    fn backward_zero_output_gradient() {
        let params = NetworkParams::init(&[3, 4, 2], &[Activation::Relu, Activation::Identity], 1)
            .unwrap();
        let batch = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.0, 1.0, -0.5]).unwrap();
        let acts = forward(&params, &batch).unwrap();
        let zero = Tensor::zeros(vec![2, 2]);
        let (grads, _) = backward(&params, &batch, &acts, &zero).unwrap();
        for (w, b) in &grads.layers {
            assert!(w.data().iter().all(|&v| v == 0.0));
            assert!(b.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_matches_hand_derivative_linear_squared_error() {
        // 1-layer linear net, loss = (c − w·x)², scalar output:
        // dL/dw = −2(c − w·x)·x
        let params = NetworkParams {
            layers: vec![Layer {
                weight: Tensor::matrix(2, 1, vec![0.3, -0.7]).unwrap(),
                bias: Tensor::zeros(vec![1]),
                activation: Activation::Identity,
            }],
        };
        let (x, c) = (vec![1.5, 2.0], 1.0);
        let batch = Tensor::matrix(1, 2, x.clone()).unwrap();
        let acts = forward(&params, &batch).unwrap();
        let out = acts.last().unwrap().data()[0];
        let dout = Tensor::matrix(1, 1, vec![-2.0 * (c - out)]).unwrap();
        let (grads, _) = backward(&params, &batch, &acts, &dout).unwrap();
        let expect: Vec<f64> = x.iter().map(|xi| -2.0 * (c - out) * xi).collect();
        for (g, e) in grads.layers[0].0.data().iter().zip(&expect) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn nesterov_momentum_free_is_plain_sgd() {
        let mut params = identity_layer(2);
        let mut grads = ParamGrads::zeros_like(&params);
        grads.layers[0].0.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let mut state = OptimizerState::new(&params, 0.1, 0.0).unwrap();
        sgd_nesterov_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(
            params.layers[0].weight.data(),
            &[
                1.0 - 0.1 * 1.0,
                0.0 - 0.1 * 2.0,
                0.0 - 0.1 * 3.0,
                1.0 - 0.1 * 4.0
            ]
        );
    }

    #[test]
    fn nesterov_zero_gradient_zero_velocity_fixed_point() {
        let mut params = identity_layer(2);
        let before = params.clone();
        let grads = ParamGrads::zeros_like(&params);
        let mut state = OptimizerState::new(&params, 0.5, 0.9).unwrap();
        sgd_nesterov_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params.layers[0].weight.data(), before.layers[0].weight.data());
    }

    #[test]
    fn nesterov_scalar_case() {
        // μ=0.9, α=0.01, θ=1, g=1, v=0 → v'=−0.01, θ'=0.981
        let mut theta = [1.0];
        let mut v = [0.0];
        sgd_nesterov_step_vec(&mut theta, &[1.0], &mut v, 0.01, 0.9).unwrap();
        assert_abs_diff_eq!(v[0], -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(theta[0], 0.981, epsilon = 1e-15);
    }

    #[test]
    fn optimizer_rejects_nonpositive_lr() {
        let params = identity_layer(2);
        assert!(matches!(
            OptimizerState::new(&params, 0.0, 0.9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn finite_difference_quadratic() {
        // L(θ) = Σθ² on an identity layer seeded with θ=3 in one slot
        let mut params = identity_layer(1);
        params.layers[0].weight.data_mut()[0] = 3.0;
        let grad = finite_difference_gradient(
            |p| Ok(p.layers[0].weight.data()[0].powi(2)),
            &params,
            1e-5,
        )
        .unwrap();
        assert_abs_diff_eq!(grad[0], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn finite_difference_constant_loss() {
        let params = identity_layer(2);
        let grad = finite_difference_gradient(|_| Ok(42.0), &params, 1e-5).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn forward_backward_deterministic() {
        let params = NetworkParams::init(&[4, 8, 5], &[Activation::Relu, Activation::Softmax], 7)
            .unwrap();
        let batch = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64) * 0.1 - 0.5).collect()).unwrap();
        let a1 = forward(&params, &batch).unwrap();
        let a2 = forward(&params, &batch).unwrap();
        assert_eq!(a1.last().unwrap().data(), a2.last().unwrap().data());
        let dout = Tensor::matrix(3, 5, vec![0.1; 15]).unwrap();
        let (g1, _) = backward(&params, &batch, &a1, &dout).unwrap();
        let (g2, _) = backward(&params, &batch, &a2, &dout).unwrap();
        assert_eq!(g1.flatten(), g2.flatten());
    }
}
