//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines.

mod common;

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use softord::data::Dataset;
use softord::decode::{self, DecodeRule};
use softord::gradcheck;
use softord::harness::{self, ExperimentConfig, Model, RunSummary};
use softord::heads::{self, AnchorVector, Head, LossKind};
use softord::net::{Activation, Layer, NetworkParams};
use softord::qwk::{self, WeightKind};
use softord::tensor::{dot, Tensor};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn report(criterion: usize, pass: bool, detail: &str) {
    println!(
        "criterion {criterion} [{}]: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_kappa_oracle_equivalence() {
    let t0 = Instant::now();
    let worst = common::oracle_deviation(250, 20_240_601);
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        1,
        worst < 1e-10 && elapsed < 10.0,
        &format!("kappa vs brute-force oracle over 250 instances: worst deviation {worst:.2e} (< 1e-10), {elapsed:.2}s (< 10s)"),
    );
}

#[test]
fn criterion_2_hand_worked_kappa() {
    let labels = [0usize, 1, 2];
    let preds = [0usize, 2, 1];
    let k = 3;
    let y = heads::one_hot_matrix(&labels, k);
    let p = heads::one_hot_matrix(&preds, k);
    let w = qwk::weight_matrix(k, WeightKind::Quadratic).unwrap();
    let o = qwk::observed_matrix(&y, &p).unwrap();
    let e = qwk::expected_matrix(&y, &p).unwrap();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..k {
        for j in 0..k {
            num += w.get(i, j) * o.get(i, j);
            den += w.get(i, j) * e.get(i, j);
        }
    }
    let kappa = qwk::kappa(&y, &p, &w).unwrap();
    let pass = (num - 2.0).abs() < 1e-12 && (den - 4.0).abs() < 1e-12 && (kappa - 0.5).abs() < 1e-12;
    report(
        2,
        pass,
        &format!("labels [0,1,2] vs hard [0,2,1]: ΣW∘O = {num}, ΣW∘E = {den}, κ = {kappa} (0.5 within 1e-12)"),
    );
}

#[test]
fn criterion_3_gradient_conformance() {
    let t0 = Instant::now();
    let reports = gradcheck::check_all(50, 1e-5, 0).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let worst = reports
        .iter()
        .flat_map(|r| std::iter::once(r.max_rel_error).chain(r.anchor_max_rel_error))
        .fold(0.0f64, f64::max);
    report(
        3,
        worst < 1e-4 && elapsed < 60.0,
        &format!(
            "backward vs central differences, all {} loss kinds x 50 instances: worst rel err {worst:.2e} (< 1e-4), {elapsed:.1}s (< 60s)",
            reports.len()
        ),
    );
}

#[test]
fn criterion_4_decoder_laws() {
    // every thresholded code for every k up to 8, including non-monotone
    // ones and the all-ones case
    let mut codes_checked = 0usize;
    let mut codes_ok = true;
    for k in 2..=8usize {
        for bits in 0..(1u32 << (k - 1)) {
            let code: Vec<f64> = (0..k - 1)
                .map(|i| if bits >> i & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            let expected = code
                .iter()
                .position(|&b| b == 0.0)
                .unwrap_or(k - 1);
            codes_ok &= decode::cheng_decode(&code) == expected;
            codes_checked += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut risk_ok = true;
    for _ in 0..1000 {
        let k = rng.random_range(2..=8usize);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        let f: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
        let w = qwk::weight_matrix(k, WeightKind::Quadratic).unwrap();
        let decoded = decode::conditional_risk_decode(&f, &w).unwrap();
        let mean = dot(&f, AnchorVector::fixed(k).values());
        risk_ok &= decoded == mean.floor() as usize || decoded == mean.ceil() as usize;
    }
    report(
        4,
        codes_ok && risk_ok,
        &format!("first-zero rule on all {codes_checked} codes for k ≤ 8; conditional-risk argmin in {{floor, ceil}} of aᵀf for 1000 random distributions"),
    );
}

/// Trains one run per seed 0..4 on the default synthetic dataset
/// (n = 3000, k = 5, DR-like proportions, 5% label noise, 60 epochs).
fn train_family(overrides: &[(&str, &str)]) -> Vec<RunSummary> {
    (0..5u64)
        .map(|seed| {
            let dir = tempfile::tempdir().unwrap();
            let mut pairs: BTreeMap<String, String> = overrides
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
            pairs.insert("seed".to_string(), seed.to_string());
            pairs.insert("out_dir".to_string(), dir.path().display().to_string());
            let config = ExperimentConfig::from_pairs(&pairs).unwrap();
            harness::run_experiment(&config).unwrap()
        })
        .collect()
}

static FIX_A: OnceLock<Vec<RunSummary>> = OnceLock::new();
static CROSS_ENTROPY: OnceLock<Vec<RunSummary>> = OnceLock::new();

fn fix_a_runs() -> &'static [RunSummary] {
    FIX_A.get_or_init(|| train_family(&[("loss", "fix-a")]))
}

fn cross_entropy_runs() -> &'static [RunSummary] {
    CROSS_ENTROPY.get_or_init(|| train_family(&[("loss", "cross-entropy")]))
}

fn mean_final_kappa(runs: &[RunSummary]) -> f64 {
    runs.iter().map(|r| r.final_metrics().val_qwk).sum::<f64>() / runs.len() as f64
}

fn mean_final_cross_entropy(runs: &[RunSummary]) -> f64 {
    runs.iter()
        .map(|r| r.final_metrics().val_cross_entropy.expect("softmax head"))
        .sum::<f64>()
        / runs.len() as f64
}

#[test]
fn criterion_5_directional_loss_ordering() {
    let t0 = Instant::now();
    let fix_a = mean_final_kappa(fix_a_runs());
    let ce = mean_final_kappa(cross_entropy_runs());
    let cheng = mean_final_kappa(&train_family(&[("loss", "cheng")]));
    let sigm = mean_final_kappa(&train_family(&[("loss", "learn-a-sigm")]));
    let elapsed = t0.elapsed().as_secs_f64();
    // learn-a-sigm is reported, not gated
    report(
        5,
        fix_a > ce && fix_a > cheng && elapsed < 600.0,
        &format!(
            "mean final val κ over 5 seeds: fix-a {fix_a:.4} > cross-entropy {ce:.4} and > cheng {cheng:.4} (learn-a-sigm {sigm:.4}, reported only), {elapsed:.0}s (< 600s)"
        ),
    );
}

#[test]
fn criterion_6_qwk_warm_start_tradeoff() {
    let qwk_runs = train_family(&[("loss", "qwk"), ("warm_start_loss", "cross-entropy")]);
    let qwk_kappa = mean_final_kappa(&qwk_runs);
    let qwk_ce = mean_final_cross_entropy(&qwk_runs);
    let ce_kappa = mean_final_kappa(cross_entropy_runs());
    let ce_ce = mean_final_cross_entropy(cross_entropy_runs());
    report(
        6,
        qwk_kappa >= ce_kappa && qwk_ce >= ce_ce,
        &format!(
            "qwk (warm start) mean final val κ {qwk_kappa:.4} ≥ cross-entropy's {ce_kappa:.4} while its val cross-entropy {qwk_ce:.3} ≥ {ce_ce:.3}"
        ),
    );
}

#[test]
fn criterion_7_decoder_kappa_gap() {
    let mut worst_gap = 0.0f64;
    for run in fix_a_runs() {
        let rsa = harness::evaluate(&run.model, &run.val, DecodeRule::RoundSoftArgmax)
            .unwrap()
            .kappa;
        let risk = harness::evaluate(&run.model, &run.val, DecodeRule::ConditionalRisk)
            .unwrap()
            .kappa;
        worst_gap = worst_gap.max((rsa - risk).abs());
    }
    report(
        7,
        worst_gap <= 0.02,
        &format!("per-seed |κ(round-soft-argmax) − κ(conditional-risk)| on fix-a models: worst gap {worst_gap:.4} (≤ 0.02)"),
    );
}

#[test]
fn criterion_8_byte_identical_reruns() {
    let run = |dir: &std::path::Path| {
        let pairs: BTreeMap<String, String> = [
            ("loss", "fix-a"),
            ("epochs", "10"),
            ("seed", "17"),
            ("out_dir", dir.to_str().unwrap()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        harness::run_experiment(&ExperimentConfig::from_pairs(&pairs).unwrap()).unwrap();
        std::fs::read(dir.join("metrics.csv")).unwrap()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let identical = run(dir_a.path()) == run(dir_b.path());
    report(
        8,
        identical,
        "re-running an experiment with identical config and seed yields byte-identical metrics.csv",
    );
}

#[test]
fn criterion_9_diagnostic_dumps() {
    // uniform predictor: zero weights into a softmax output
    let k = 5;
    let d = 3;
    let model = Model {
        params: NetworkParams {
            layers: vec![Layer {
                weight: Tensor::zeros(vec![d, k]),
                bias: Tensor::zeros(vec![k]),
                activation: Activation::Softmax,
            }],
        },
        head: Head::new(LossKind::CrossEntropy, k).unwrap(),
    };
    let labels: Vec<usize> = (0..40).map(|i| i % k).collect();
    let features = labels.iter().map(|&c| vec![c as f64, 1.0, -1.0]).collect();
    let dataset = Dataset::new(features, labels, k).unwrap();

    let (probs, hist) = harness::dump_correct_class_probabilities(&model, &dataset).unwrap();
    let uniform_probs = probs.iter().all(|&p| (p - 0.2).abs() < 1e-12);
    let hist_sums = hist.iter().sum::<usize>() == dataset.len();
    let hist_bin = hist[4] == dataset.len(); // 0.2 lies in bin [0.2, 0.25)
    let summaries = harness::dump_per_class_probability_summary(&model, &dataset).unwrap();
    let uniform_quartiles = summaries.iter().all(|s| {
        [s.min, s.q1, s.median, s.q3, s.max]
            .iter()
            .all(|&v| (v - 0.2).abs() < 1e-12)
    });

    // quartile monotonicity on a genuinely trained model
    let run = &fix_a_runs()[0];
    let trained = harness::dump_per_class_probability_summary(&run.model, &run.val).unwrap();
    let monotone = trained
        .iter()
        .all(|s| s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
    let trained_hist_sums =
        harness::dump_correct_class_probabilities(&run.model, &run.val).unwrap().1
            .iter()
            .sum::<usize>()
            == run.val.len();

    report(
        9,
        uniform_probs && hist_sums && hist_bin && uniform_quartiles && monotone && trained_hist_sums,
        "histogram counts sum to n, quartiles are monotone, and the uniform predictor hits its exact values",
    );
}
