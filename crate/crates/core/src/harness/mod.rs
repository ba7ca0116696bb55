//! Experiment runner: configured training loops with learning-rate
//! schedules and warm starts, per-epoch validation metrics, diagnostic
//! probability dumps, and the file outputs behind the CLI.

pub mod config;
pub mod paramio;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::ExperimentConfig;
pub use paramio::{load_model, save_model, Model};

use crate::data::{self, Dataset};
use crate::decode::{self, DecodeRule};
use crate::heads::{self, Head, LossKind};
use crate::net::{self, Activation, NetworkParams, OptimizerState};
use crate::qwk::{self, WeightKind};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const HIST_BINS: usize = 20;

/// Each experiment reports κ under its own decoder.
pub fn default_decode_rule(loss: LossKind) -> DecodeRule {
    match loss {
        LossKind::CrossEntropy | LossKind::Qwk => DecodeRule::Argmax,
        LossKind::FixA | LossKind::LearnA | LossKind::LearnASigm => DecodeRule::RoundSoftArgmax,
        LossKind::Cheng => DecodeRule::ChengFirstZero,
    }
}

fn check_rule_compatible(head: &Head, rule: DecodeRule) -> Result<()> {
    let cheng_head = head.kind == LossKind::Cheng;
    let cheng_rule = rule == DecodeRule::ChengFirstZero;
    if cheng_head != cheng_rule {
        return Err(Error::Config(format!(
            "decode rule {} is incompatible with a {} head",
            rule.token(),
            head.kind.token()
        )));
    }
    Ok(())
}

/// Decodes every output row to a class under the given rule.
pub fn decode_outputs(head: &Head, outputs: &Tensor, rule: DecodeRule) -> Result<Vec<usize>> {
    check_rule_compatible(head, rule)?;
    let w = qwk::weight_matrix(head.k, WeightKind::Quadratic)?;
    let mut preds = Vec::with_capacity(outputs.rows());
    for r in 0..outputs.rows() {
        let row = outputs.row(r);
        let class = match rule {
            DecodeRule::Argmax => decode::argmax_decode(row),
            DecodeRule::ChengFirstZero => decode::cheng_decode(row),
            DecodeRule::ConditionalRisk => decode::conditional_risk_decode(row, &w)?,
            DecodeRule::RoundSoftArgmax => {
                // the sigmoid-bounded head rounds its own bounded prediction
                if head.kind == LossKind::LearnASigm {
                    let v = heads::learn_a_sigm_prediction(row, &head.anchor)?;
                    decode::round_prediction(v, head.k)
                } else {
                    let v = heads::soft_argmax(row, &head.anchor)?;
                    decode::round_prediction(v, head.k)
                }
            }
        };
        preds.push(class);
    }
    Ok(preds)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Mean validation cross-entropy; absent for the cheng head, where
    /// evaluating it on the sigmoid code outputs would be meaningless.
    pub cross_entropy: Option<f64>,
    /// Kappa of the hard decoded predictions against the labels.
    pub kappa: f64,
    pub predictions: Vec<usize>,
    pub outputs: Tensor,
}

/// Runs the network on a dataset and scores it under the decode rule.
pub fn evaluate(model: &Model, dataset: &Dataset, rule: DecodeRule) -> Result<Evaluation> {
    check_rule_compatible(&model.head, rule)?;
    let batch = features_tensor(dataset)?;
    let acts = net::forward(&model.params, &batch)?;
    let outputs = acts.last().expect("non-empty").clone();
    let predictions = decode_outputs(&model.head, &outputs, rule)?;
    let y = heads::one_hot_matrix(&dataset.labels, dataset.k);
    let p = heads::one_hot_matrix(&predictions, dataset.k);
    let w = qwk::weight_matrix(dataset.k, WeightKind::Quadratic)?;
    let kappa = qwk::kappa(&y, &p, &w)?;
    let cross_entropy = if model.head.kind == LossKind::Cheng {
        None
    } else {
        let mut total = 0.0;
        for (r, &c) in dataset.labels.iter().enumerate() {
            total += heads::cross_entropy_loss(outputs.row(r), c)?;
        }
        Some(total / dataset.len() as f64)
    };
    Ok(Evaluation {
        cross_entropy,
        kappa,
        predictions,
        outputs,
    })
}

/// p(correct class) per example plus a 20-equal-bin histogram on [0,1].
pub fn dump_correct_class_probabilities(
    model: &Model,
    dataset: &Dataset,
) -> Result<(Vec<f64>, [usize; HIST_BINS])> {
    if model.head.kind == LossKind::Cheng {
        return Err(Error::Unsupported(
            "correct-class probabilities need a k-wide softmax head".into(),
        ));
    }
    let batch = features_tensor(dataset)?;
    let acts = net::forward(&model.params, &batch)?;
    let outputs = acts.last().expect("non-empty");
    let mut probs = Vec::with_capacity(dataset.len());
    let mut hist = [0usize; HIST_BINS];
    for (r, &c) in dataset.labels.iter().enumerate() {
        let p = outputs.get(r, c);
        let bin = ((p * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        hist[bin] += 1;
        probs.push(p);
    }
    Ok((probs, hist))
}

/// min, q1, median, q3, max of p(class | x) over a dataset, per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

pub fn dump_per_class_probability_summary(
    model: &Model,
    dataset: &Dataset,
) -> Result<Vec<ClassSummary>> {
    if model.head.kind == LossKind::Cheng {
        return Err(Error::Unsupported(
            "per-class probability summaries need a k-wide softmax head".into(),
        ));
    }
    let batch = features_tensor(dataset)?;
    let acts = net::forward(&model.params, &batch)?;
    let outputs = acts.last().expect("non-empty");
    let mut summaries = Vec::with_capacity(dataset.k);
    for class in 0..dataset.k {
        let mut values: Vec<f64> = (0..dataset.len()).map(|r| outputs.get(r, class)).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        summaries.push(ClassSummary {
            min: values[0],
            q1: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q3: quantile(&values, 0.75),
            max: values[values.len() - 1],
        });
    }
    Ok(summaries)
}

fn features_tensor(dataset: &Dataset) -> Result<Tensor> {
    let flat: Vec<f64> = dataset.features.iter().flatten().copied().collect();
    Tensor::matrix(dataset.len(), dataset.dim(), flat)
}

/// One metrics row; the initial evaluation (epoch 0) has no train loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_cross_entropy: Option<f64>,
    pub val_qwk: f64,
}

#[derive(Debug)]
pub struct RunSummary {
    pub metrics: Vec<EpochMetrics>,
    pub model: Model,
    pub decode_rule: DecodeRule,
    /// Minibatches skipped because the QWK surrogate was degenerate there.
    pub skipped_batches: usize,
    pub train: Dataset,
    pub val: Dataset,
}

impl RunSummary {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.metrics.last().expect("at least the initial row")
    }
}

/// Loads or generates the configured dataset, splits it (stratified, seeded
/// by the data seed), and standardizes features on train statistics.
pub fn prepare_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let dataset = match &config.data_path {
        Some(path) => data::load_csv(path, Some(config.generator.k))?,
        None => data::generate(&config.generator)?,
    };
    let (mut train, mut val) = data::split(&dataset, config.val_fraction, config.generator.seed)?;
    data::standardize(&mut train, &mut val);
    Ok((train, val))
}

fn build_model(config: &ExperimentConfig, input_dim: usize) -> Result<Model> {
    let head = Head::new(config.loss, config.generator.k)?;
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.hidden);
    dims.push(head.output_width());
    let mut activations = vec![Activation::Relu; config.hidden.len()];
    activations.push(config.loss.output_activation());
    let params = NetworkParams::init(&dims, &activations, config.seed)?;
    Ok(Model { params, head })
}

/// Trains one experiment end to end and persists metrics, predictions,
/// diagnostic dumps, the config snapshot, and the final parameters into
/// the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let (train, val) = prepare_data(config)?;
    let mut model = build_model(config, train.dim())?;

    // warm-start head must share the main head's output geometry
    let warm_head = match config.warm_start {
        Some((warm_loss, _)) => {
            let head = Head::new(warm_loss, config.generator.k)?;
            if head.output_width() != model.head.output_width()
                || warm_loss.output_activation() != config.loss.output_activation()
            {
                return Err(Error::Config(format!(
                    "warm-start loss {} is head-incompatible with {}",
                    warm_loss.token(),
                    config.loss.token()
                )));
            }
            Some(head)
        }
        None => None,
    };

    let rule = config.decode_rule.unwrap_or_else(|| default_decode_rule(config.loss));
    check_rule_compatible(&model.head, rule)?;

    let mut state = OptimizerState::new(&model.params, config.lr_schedule[0].1, config.momentum)?;
    let mut anchor_velocity = vec![0.0; model.head.k];
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let train_batch = features_tensor(&train)?;

    let mut metrics = Vec::with_capacity(config.epochs + 1);
    let mut timings = Vec::with_capacity(config.epochs + 1);
    let mut skipped_batches = 0usize;

    let t0 = Instant::now();
    let initial = evaluate(&model, &val, rule)?;
    metrics.push(EpochMetrics {
        epoch: 0,
        train_loss: None,
        val_cross_entropy: initial.cross_entropy,
        val_qwk: initial.kappa,
    });
    timings.push(t0.elapsed().as_secs_f64());

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.epochs {
        let t_epoch = Instant::now();
        let warm = matches!(config.warm_start, Some((_, warm_epochs)) if epoch < warm_epochs);
        state.learning_rate = config.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let head = if warm {
                warm_head.as_ref().expect("warm phase implies warm head")
            } else {
                &model.head
            };
            if head.kind == LossKind::Qwk && !qwk::surrogate_batch_ok(&labels) {
                skipped_batches += 1;
                continue;
            }
            let mut flat = Vec::with_capacity(chunk.len() * train.dim());
            for &i in chunk {
                flat.extend_from_slice(train_batch.row(i));
            }
            let batch = Tensor::matrix(chunk.len(), train.dim(), flat)?;
            let acts = net::forward(&model.params, &batch)?;
            let outputs = acts.last().expect("non-empty");
            let loss = head.batch_loss(outputs, &labels)?;
            let (grad_out, grad_anchor) = head.batch_grad(outputs, &labels)?;
            let (grads, _) = net::backward(&model.params, &batch, &acts, &grad_out)?;
            net::sgd_nesterov_step(&mut model.params, &grads, &mut state)?;
            if let Some(ga) = grad_anchor {
                if !warm {
                    net::sgd_nesterov_step_vec(
                        model.head.anchor.values_mut(),
                        &ga,
                        &mut anchor_velocity,
                        state.learning_rate,
                        state.momentum,
                    )?;
                }
            }
            epoch_loss += loss;
            counted += 1;
        }

        let eval = evaluate(&model, &val, rule)?;
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss: (counted > 0).then(|| epoch_loss / counted as f64),
            val_cross_entropy: eval.cross_entropy,
            val_qwk: eval.kappa,
        });
        timings.push(t_epoch.elapsed().as_secs_f64());
    }

    if skipped_batches > 0 {
        eprintln!("warning: skipped {skipped_batches} degenerate single-class batches for the QWK surrogate");
    }

    write_outputs(config, &model, &val, &metrics, &timings, rule)?;
    Ok(RunSummary {
        metrics,
        model,
        decode_rule: rule,
        skipped_batches,
        train,
        val,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => String::new(),
    }
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_cross_entropy,val_qwk\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.epoch,
            fmt_opt(m.train_loss),
            fmt_opt(m.val_cross_entropy),
            m.val_qwk
        );
    }
    out
}

fn write_outputs(
    config: &ExperimentConfig,
    model: &Model,
    val: &Dataset,
    metrics: &[EpochMetrics],
    timings: &[f64],
    rule: DecodeRule,
) -> Result<()> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.snapshot"), config.snapshot())?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(metrics))?;

    // wall-clock timing lives outside metrics.csv so reruns of the same
    // (config, seed) stay byte-identical there
    let mut timing_text = String::from("epoch,wall_seconds\n");
    for (epoch, t) in timings.iter().enumerate() {
        let _ = writeln!(timing_text, "{epoch},{t}");
    }
    std::fs::write(dir.join("timings.csv"), timing_text)?;

    let eval = evaluate(model, val, rule)?;
    let softmax_head = model.head.kind != LossKind::Cheng;
    let mut pred_text = if softmax_head {
        String::from("index,label,prediction,p_correct\n")
    } else {
        String::from("index,label,prediction\n")
    };
    let probs = if softmax_head {
        let (probs, hist) = dump_correct_class_probabilities(model, val)?;
        let mut hist_text = String::from("bin,lo,hi,count\n");
        for (b, count) in hist.iter().enumerate() {
            let _ = writeln!(
                hist_text,
                "{b},{},{},{count}",
                b as f64 / HIST_BINS as f64,
                (b + 1) as f64 / HIST_BINS as f64
            );
        }
        std::fs::write(dir.join("hist_correct_prob.csv"), hist_text)?;

        let summaries = dump_per_class_probability_summary(model, val)?;
        let mut summary_text = String::from("class,min,q1,median,q3,max\n");
        for (class, s) in summaries.iter().enumerate() {
            let _ = writeln!(
                summary_text,
                "{class},{},{},{},{},{}",
                s.min, s.q1, s.median, s.q3, s.max
            );
        }
        std::fs::write(dir.join("class_prob_summary.csv"), summary_text)?;
        Some(probs)
    } else {
        None
    };
    for (i, (&label, &pred)) in val.labels.iter().zip(&eval.predictions).enumerate() {
        match &probs {
            Some(p) => {
                let _ = writeln!(pred_text, "{i},{label},{pred},{}", p[i]);
            }
            None => {
                let _ = writeln!(pred_text, "{i},{label},{pred}");
            }
        }
    }
    std::fs::write(dir.join("predictions.csv"), pred_text)?;
    save_model(model, &dir.join("params.bin"))?;
    Ok(())
}

/// κ from decoded (label, prediction) pairs under the given weights.
pub fn kappa_from_predictions(labels: &[usize], preds: &[usize], k: usize, kind: WeightKind) -> Result<f64> {
    if labels.len() != preds.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let y = heads::one_hot_matrix(labels, k);
    let p = heads::one_hot_matrix(preds, k);
    let w = qwk::weight_matrix(k, kind)?;
    qwk::kappa(&y, &p, &w)
}
