//! Prediction rules: rounded soft argmax, plain argmax, first-zero decoding
//! of cumulative binary codes, and conditional-risk (minimum expected cost)
//! decoding.

use crate::heads::{soft_argmax, AnchorVector};
use crate::qwk::WeightMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeRule {
    RoundSoftArgmax,
    Argmax,
    ChengFirstZero,
    ConditionalRisk,
}

impl DecodeRule {
    pub fn token(self) -> &'static str {
        match self {
            DecodeRule::RoundSoftArgmax => "round-soft-argmax",
            DecodeRule::Argmax => "argmax",
            DecodeRule::ChengFirstZero => "cheng-first-zero",
            DecodeRule::ConditionalRisk => "conditional-risk",
        }
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        match tok {
            "round-soft-argmax" => Ok(DecodeRule::RoundSoftArgmax),
            "argmax" => Ok(DecodeRule::Argmax),
            "cheng-first-zero" => Ok(DecodeRule::ChengFirstZero),
            "conditional-risk" => Ok(DecodeRule::ConditionalRisk),
            other => Err(Error::Config(format!(
                "unknown decode rule `{other}` (expected round-soft-argmax|argmax|cheng-first-zero|conditional-risk)"
            ))),
        }
    }
}

/// Rounds a continuous prediction half-up and clamps it into [0, k−1].
pub fn round_prediction(value: f64, k: usize) -> usize {
    // f64::round is half-away-from-zero, which is half-up on [0, k−1]
    let r = value.round();
    (r.max(0.0) as usize).min(k - 1)
}

/// round(aᵀf) with a half-up tie rule.
pub fn round_soft_argmax(f: &[f64], a: &AnchorVector) -> Result<usize> {
    let v = soft_argmax(f, a)?;
    Ok(round_prediction(v, f.len()))
}

/// Lowest index attaining the maximum.
pub fn argmax_decode(f: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in f.iter().enumerate() {
        if v > f[best] {
            best = i;
        }
    }
    best
}

/// Thresholds each code position at ≥ 0.5, then returns the index of the
/// first zero; all-ones codes decode to the maximal class k−1.
pub fn cheng_decode(g: &[f64]) -> usize {
    for (i, &v) in g.iter().enumerate() {
        if v < 0.5 {
            return i;
        }
    }
    g.len()
}

/// argmin over j of Σᵢ fᵢ·W_ij; ties broken toward the lower class.
pub fn conditional_risk_decode(f: &[f64], w: &WeightMatrix) -> Result<usize> {
    let k = w.k();
    if f.len() != k {
        return Err(Error::Shape(format!(
            "distribution width {} vs weight matrix k={k}",
            f.len()
        )));
    }
    let mut best = 0;
    let mut best_risk = f64::INFINITY;
    for j in 0..k {
        let risk: f64 = (0..k).map(|i| f[i] * w.get(i, j)).sum();
        if risk < best_risk {
            best_risk = risk;
            best = j;
        }
    }
    Ok(best)
}
