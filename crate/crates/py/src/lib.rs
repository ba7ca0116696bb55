//! Python bindings for the core types and operations: losses, encoders,
//! decoders, the kappa metric and its surrogate, the synthetic generator,
//! and config-driven training.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use softord::data::{self, GeneratorSpec};
use softord::decode;
use softord::harness::{self, ExperimentConfig};
use softord::heads::{self, AnchorVector};
use softord::qwk::{self, WeightKind};

fn err(e: softord::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn one_hot_from_labels(labels: &[usize], k: usize) -> softord::tensor::Tensor {
    heads::one_hot_matrix(labels, k)
}

fn prob_matrix(rows: Vec<Vec<f64>>) -> PyResult<softord::tensor::Tensor> {
    let n = rows.len();
    if n == 0 {
        return Err(PyValueError::new_err("empty probability matrix"));
    }
    let k = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    softord::tensor::Tensor::matrix(n, k, flat).map_err(err)
}

/// Quadratic (or discrete) weighted kappa from labels and a prediction
/// probability matrix.
#[pyfunction]
#[pyo3(signature = (labels, probs, weights="quadratic"))]
fn kappa(labels: Vec<usize>, probs: Vec<Vec<f64>>, weights: &str) -> PyResult<f64> {
    let p = prob_matrix(probs)?;
    let k = p.cols();
    let y = one_hot_from_labels(&labels, k);
    let w = qwk::weight_matrix(k, WeightKind::from_token(weights).map_err(err)?).map_err(err)?;
    qwk::kappa(&y, &p, &w).map_err(err)
}

/// κ from hard class predictions.
#[pyfunction]
#[pyo3(signature = (labels, predictions, k, weights="quadratic"))]
fn kappa_from_predictions(
    labels: Vec<usize>,
    predictions: Vec<usize>,
    k: usize,
    weights: &str,
) -> PyResult<f64> {
    harness::kappa_from_predictions(
        &labels,
        &predictions,
        k,
        WeightKind::from_token(weights).map_err(err)?,
    )
    .map_err(err)
}

/// The fractional part of κ, as minimized during training.
#[pyfunction]
fn qwk_surrogate_loss(labels: Vec<usize>, probs: Vec<Vec<f64>>) -> PyResult<f64> {
    let p = prob_matrix(probs)?;
    let k = p.cols();
    let y = one_hot_from_labels(&labels, k);
    let w = qwk::weight_matrix(k, WeightKind::Quadratic).map_err(err)?;
    qwk::qwk_surrogate_loss(&y, &p, &w).map_err(err)
}

#[pyfunction]
fn cross_entropy_loss(f: Vec<f64>, label: usize) -> PyResult<f64> {
    heads::cross_entropy_loss(&f, label).map_err(err)
}

#[pyfunction]
fn fix_a_loss(f: Vec<f64>, label: usize) -> PyResult<f64> {
    heads::fix_a_loss(&f, label).map_err(err)
}

#[pyfunction]
fn soft_argmax(f: Vec<f64>) -> PyResult<f64> {
    let a = AnchorVector::fixed(f.len());
    heads::soft_argmax(&f, &a).map_err(err)
}

#[pyfunction]
fn cheng_encode(label: usize, k: usize) -> PyResult<Vec<f64>> {
    heads::cheng_encode(label, k).map_err(err)
}

#[pyfunction]
fn cheng_bce_loss(g: Vec<f64>, y_code: Vec<f64>) -> PyResult<f64> {
    heads::cheng_bce_loss(&g, &y_code).map_err(err)
}

#[pyfunction]
fn round_soft_argmax(f: Vec<f64>) -> PyResult<usize> {
    let a = AnchorVector::fixed(f.len());
    decode::round_soft_argmax(&f, &a).map_err(err)
}

#[pyfunction]
fn argmax_decode(f: Vec<f64>) -> usize {
    decode::argmax_decode(&f)
}

#[pyfunction]
fn cheng_decode(g: Vec<f64>) -> usize {
    decode::cheng_decode(&g)
}

#[pyfunction]
#[pyo3(signature = (f, weights="quadratic"))]
fn conditional_risk_decode(f: Vec<f64>, weights: &str) -> PyResult<usize> {
    let w = qwk::weight_matrix(f.len(), WeightKind::from_token(weights).map_err(err)?)
        .map_err(err)?;
    decode::conditional_risk_decode(&f, &w).map_err(err)
}

/// Generate a synthetic ordinal dataset; returns (features, labels).
#[pyfunction]
#[pyo3(signature = (n, d, k, seed=0, proportions=None, latent_noise_sd=0.75, label_noise_rate=0.05))]
#[allow(clippy::too_many_arguments)]
fn generate_dataset(
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    proportions: Option<Vec<f64>>,
    latent_noise_sd: f64,
    label_noise_rate: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let class_proportions = proportions.unwrap_or_else(|| {
        if k == 5 {
            data::dr_proportions()
        } else {
            vec![1.0 / k as f64; k]
        }
    });
    let spec = GeneratorSpec {
        n,
        d,
        k,
        seed,
        class_proportions,
        latent_noise_sd,
        label_noise_rate,
    };
    let ds = data::generate(&spec).map_err(err)?;
    Ok((ds.features, ds.labels))
}

/// Train one experiment from config key/value pairs; returns per-epoch
/// (epoch, train_loss, val_cross_entropy, val_qwk) rows. Missing values
/// come back as None.
#[pyfunction]
fn run_experiment(
    config: BTreeMap<String, String>,
) -> PyResult<Vec<(usize, Option<f64>, Option<f64>, f64)>> {
    let config = ExperimentConfig::from_pairs(&config).map_err(err)?;
    let summary = harness::run_experiment(&config).map_err(err)?;
    Ok(summary
        .metrics
        .iter()
        .map(|m| (m.epoch, m.train_loss, m.val_cross_entropy, m.val_qwk))
        .collect())
}

/// Evaluate saved parameters on a dataset CSV; returns
/// (val_cross_entropy, val_qwk, predictions).
#[pyfunction]
#[pyo3(signature = (params_path, data_path, decode_rule=None))]
fn evaluate(
    params_path: PathBuf,
    data_path: PathBuf,
    decode_rule: Option<String>,
) -> PyResult<(Option<f64>, f64, Vec<usize>)> {
    let model = harness::load_model(&params_path).map_err(err)?;
    let dataset = data::load_csv(&data_path, Some(model.head.k)).map_err(err)?;
    let rule = match decode_rule {
        Some(tok) => decode::DecodeRule::from_token(&tok).map_err(err)?,
        None => harness::default_decode_rule(model.head.kind),
    };
    let eval = harness::evaluate(&model, &dataset, rule).map_err(err)?;
    Ok((eval.cross_entropy, eval.kappa, eval.predictions))
}

#[pymodule]
fn softord_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_from_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(qwk_surrogate_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy_loss, m)?)?;
    m.add_function(wrap_pyfunction!(fix_a_loss, m)?)?;
    m.add_function(wrap_pyfunction!(soft_argmax, m)?)?;
    m.add_function(wrap_pyfunction!(cheng_encode, m)?)?;
    m.add_function(wrap_pyfunction!(cheng_bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(round_soft_argmax, m)?)?;
    m.add_function(wrap_pyfunction!(argmax_decode, m)?)?;
    m.add_function(wrap_pyfunction!(cheng_decode, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_risk_decode, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
