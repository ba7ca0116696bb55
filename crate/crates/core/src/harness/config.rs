//! Experiment configuration: a flat `key = value` file where every key can
//! be overridden by a CLI flag of the same name. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::GeneratorSpec;
use crate::decode::DecodeRule;
use crate::heads::LossKind;
use crate::{Error, Result};

pub const KNOWN_KEYS: [&str; 20] = [
    "loss",
    "data",
    "n",
    "d",
    "k",
    "proportions",
    "latent_noise_sd",
    "label_noise_rate",
    "data_seed",
    "val_fraction",
    "hidden",
    "epochs",
    "batch_size",
    "lr_schedule",
    "momentum",
    "seed",
    "warm_start_loss",
    "warm_start_epochs",
    "decode_rule",
    "out_dir",
];

/// The reference schedules assume a 250-epoch budget; shorter runs scale
/// their breakpoints by the ratio of total epochs.
pub const REFERENCE_TOTAL_EPOCHS: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub loss: LossKind,
    pub data_path: Option<PathBuf>,
    pub generator: GeneratorSpec,
    pub val_fraction: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// (epoch_from, learning rate), strictly increasing from epoch 0.
    pub lr_schedule: Vec<(usize, f64)>,
    pub momentum: f64,
    pub seed: u64,
    pub warm_start: Option<(LossKind, usize)>,
    pub decode_rule: Option<DecodeRule>,
    pub out_dir: PathBuf,
}

/// Scales the reference epoch breakpoints (0.1→0.01 at 61 for fix 'a',
/// everything →0.001 after 200) down to the configured epoch budget.
pub fn default_schedule(loss: LossKind, epochs: usize) -> Vec<(usize, f64)> {
    let scale = |e: usize| (e * epochs) / REFERENCE_TOTAL_EPOCHS;
    let final_drop = scale(200).max(1);
    match loss {
        LossKind::FixA => {
            let first_drop = scale(61).max(1);
            if first_drop < final_drop {
                vec![(0, 0.1), (first_drop, 0.01), (final_drop, 0.001)]
            } else {
                vec![(0, 0.1), (final_drop, 0.001)]
            }
        }
        _ => vec![(0, 0.01), (final_drop, 0.001)],
    }
}

/// Desk-scaled analogue of warm starting after 150 of 250 epochs.
pub fn default_warm_start_epochs(epochs: usize) -> usize {
    ((150 * epochs) / REFERENCE_TOTAL_EPOCHS).max(1)
}

impl ExperimentConfig {
    /// Builds a config from key/value pairs, filling defaults for absent
    /// keys and rejecting unknown ones.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        for key in pairs.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let get = |key: &str| pairs.get(key).map(String::as_str);
        let loss = match get("loss") {
            Some(tok) => LossKind::from_token(tok)?,
            None => LossKind::FixA,
        };
        let mut generator = GeneratorSpec::default();
        if let Some(v) = get("n") {
            generator.n = parse_num(v, "n")?;
        }
        if let Some(v) = get("d") {
            generator.d = parse_num(v, "d")?;
        }
        if let Some(v) = get("k") {
            generator.k = parse_num(v, "k")?;
        }
        if let Some(v) = get("proportions") {
            generator.class_proportions = v
                .split(',')
                .map(|p| parse_float(p.trim(), "proportions"))
                .collect::<Result<_>>()?;
        } else if generator.k != 5 {
            generator.class_proportions = vec![1.0 / generator.k as f64; generator.k];
        }
        if let Some(v) = get("latent_noise_sd") {
            generator.latent_noise_sd = parse_float(v, "latent_noise_sd")?;
        }
        if let Some(v) = get("label_noise_rate") {
            generator.label_noise_rate = parse_float(v, "label_noise_rate")?;
        }
        generator.seed = match get("data_seed") {
            Some(v) => parse_num(v, "data_seed")?,
            None => 1234,
        };
        let epochs = match get("epochs") {
            Some(v) => parse_num(v, "epochs")?,
            None => 60,
        };
        let lr_schedule = match get("lr_schedule") {
            Some(v) => parse_schedule(v)?,
            None => default_schedule(loss, epochs),
        };
        let warm_start = match (get("warm_start_loss"), get("warm_start_epochs")) {
            (Some(tok), e) => {
                let warm_epochs = match e {
                    Some(v) => parse_num(v, "warm_start_epochs")?,
                    None => default_warm_start_epochs(epochs),
                };
                Some((LossKind::from_token(tok)?, warm_epochs))
            }
            (None, Some(_)) => {
                return Err(Error::Config(
                    "warm_start_epochs given without warm_start_loss".into(),
                ))
            }
            (None, None) => None,
        };
        let config = Self {
            loss,
            data_path: get("data").map(PathBuf::from),
            generator,
            val_fraction: match get("val_fraction") {
                Some(v) => parse_float(v, "val_fraction")?,
                None => 0.25,
            },
            hidden: match get("hidden") {
                Some(v) => v
                    .split(',')
                    .map(|h| parse_num(h.trim(), "hidden"))
                    .collect::<Result<_>>()?,
                None => vec![64, 64],
            },
            epochs,
            batch_size: match get("batch_size") {
                Some(v) => parse_num(v, "batch_size")?,
                None => 128,
            },
            lr_schedule,
            momentum: match get("momentum") {
                Some(v) => parse_float(v, "momentum")?,
                None => 0.9,
            },
            seed: match get("seed") {
                Some(v) => parse_num(v, "seed")?,
                None => 0,
            },
            warm_start,
            decode_rule: match get("decode_rule") {
                Some(tok) => Some(DecodeRule::from_token(tok)?),
                None => None,
            },
            out_dir: PathBuf::from(get("out_dir").unwrap_or("run")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr_schedule.is_empty() || self.lr_schedule[0].0 != 0 {
            return Err(Error::Config("lr_schedule must start at epoch 0".into()));
        }
        for pair in self.lr_schedule.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Config(
                    "lr_schedule epochs must be strictly increasing".into(),
                ));
            }
        }
        for &(_, alpha) in &self.lr_schedule {
            if alpha <= 0.0 {
                return Err(Error::Config("learning rates must be positive".into()));
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0,1)".into()));
        }
        if let Some((_, warm_epochs)) = self.warm_start {
            if warm_epochs >= self.epochs {
                return Err(Error::Config(format!(
                    "warm_start epochs {warm_epochs} must be below total epochs {}",
                    self.epochs
                )));
            }
        }
        if self.data_path.is_none() {
            self.generator.validate()?;
        }
        Ok(())
    }

    /// The learning rate in force during the given 0-based epoch.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let mut alpha = self.lr_schedule[0].1;
        for &(from, a) in &self.lr_schedule {
            if epoch >= from {
                alpha = a;
            }
        }
        alpha
    }

    /// Serializes the fully resolved config, one `key = value` per line.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "loss = {}", self.loss.token());
        if let Some(path) = &self.data_path {
            let _ = writeln!(out, "data = {}", path.display());
        } else {
            let g = &self.generator;
            let _ = writeln!(out, "n = {}", g.n);
            let _ = writeln!(out, "d = {}", g.d);
            let _ = writeln!(out, "k = {}", g.k);
            let props: Vec<String> = g.class_proportions.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "proportions = {}", props.join(","));
            let _ = writeln!(out, "latent_noise_sd = {}", g.latent_noise_sd);
            let _ = writeln!(out, "label_noise_rate = {}", g.label_noise_rate);
            let _ = writeln!(out, "data_seed = {}", g.seed);
        }
        let _ = writeln!(out, "val_fraction = {}", self.val_fraction);
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(out, "hidden = {}", hidden.join(","));
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let sched: Vec<String> = self
            .lr_schedule
            .iter()
            .map(|(e, a)| format!("{e}:{a}"))
            .collect();
        let _ = writeln!(out, "lr_schedule = {}", sched.join(","));
        let _ = writeln!(out, "momentum = {}", self.momentum);
        let _ = writeln!(out, "seed = {}", self.seed);
        if let Some((loss, warm_epochs)) = self.warm_start {
            let _ = writeln!(out, "warm_start_loss = {}", loss.token());
            let _ = writeln!(out, "warm_start_epochs = {warm_epochs}");
        }
        if let Some(rule) = self.decode_rule {
            let _ = writeln!(out, "decode_rule = {}", rule.token());
        }
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        out
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for key `{key}`")))
}

fn parse_float(value: &str, key: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for key `{key}`")))
}

/// Parses "0:0.1,61:0.01,200:0.001".
pub fn parse_schedule(text: &str) -> Result<Vec<(usize, f64)>> {
    text.split(',')
        .map(|entry| {
            let (e, a) = entry
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad lr_schedule entry `{entry}`")))?;
            Ok((parse_num(e, "lr_schedule")?, parse_float(a, "lr_schedule")?))
        })
        .collect()
}

/// Parses a flat `key = value` file into pairs; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown config key `{key}`",
                lineno + 1
            )));
        }
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate config key `{key}`")));
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let config = ExperimentConfig::from_pairs(&BTreeMap::new()).unwrap();
        assert_eq!(config.loss, LossKind::FixA);
        assert_eq!(config.batch_size, 128);
        assert_eq!(config.momentum, 0.9);
        assert_eq!(config.lr_schedule[0], (0, 0.1));
    }

    #[test]
    fn rejects_unknown_key() {
        let mut pairs = BTreeMap::new();
        pairs.insert("bogus".to_string(), "1".to_string());
        assert!(matches!(
            ExperimentConfig::from_pairs(&pairs),
            Err(Error::Config(_))
        ));
        assert!(parse_config_text("bogus = 1").is_err());
    }

    #[test]
    fn parses_file_text() {
        let text = "# comment\nloss = cheng\nepochs = 10\nlr_schedule = 0:0.05,5:0.005\n";
        let pairs = parse_config_text(text).unwrap();
        let config = ExperimentConfig::from_pairs(&pairs).unwrap();
        assert_eq!(config.loss, LossKind::Cheng);
        assert_eq!(config.epochs, 10);
        assert_eq!(config.lr_schedule, vec![(0, 0.05), (5, 0.005)]);
        assert_eq!(config.learning_rate_at(4), 0.05);
        assert_eq!(config.learning_rate_at(5), 0.005);
    }

    #[test]
    fn schedule_must_increase_from_zero() {
        let mut pairs = BTreeMap::new();
        pairs.insert("lr_schedule".to_string(), "5:0.1".to_string());
        assert!(ExperimentConfig::from_pairs(&pairs).is_err());
        pairs.insert("lr_schedule".to_string(), "0:0.1,3:0.01,3:0.001".to_string());
        assert!(ExperimentConfig::from_pairs(&pairs).is_err());
    }

    #[test]
    fn warm_start_bounds() {
        let mut pairs = BTreeMap::new();
        pairs.insert("loss".to_string(), "qwk".to_string());
        pairs.insert("warm_start_loss".to_string(), "cross-entropy".to_string());
        pairs.insert("warm_start_epochs".to_string(), "60".to_string());
        pairs.insert("epochs".to_string(), "60".to_string());
        assert!(ExperimentConfig::from_pairs(&pairs).is_err());
        pairs.insert("warm_start_epochs".to_string(), "36".to_string());
        let config = ExperimentConfig::from_pairs(&pairs).unwrap();
        assert_eq!(config.warm_start, Some((LossKind::CrossEntropy, 36)));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut pairs = BTreeMap::new();
        pairs.insert("loss".to_string(), "qwk".to_string());
        pairs.insert("warm_start_loss".to_string(), "cross-entropy".to_string());
        pairs.insert("epochs".to_string(), "40".to_string());
        let config = ExperimentConfig::from_pairs(&pairs).unwrap();
        let snap = config.snapshot();
        let back = ExperimentConfig::from_pairs(&parse_config_text(&snap).unwrap()).unwrap();
        assert_eq!(config, back);
    }
}
