//! CLI for the ordinal classification experiments: synthetic data
//! generation, training, evaluation, gradient checking, and kappa
//! computation from prediction files.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use softord::data::{self, GeneratorSpec};
use softord::decode::DecodeRule;
use softord::gradcheck;
use softord::harness::{self, config::parse_config_text, ExperimentConfig};
use softord::qwk::WeightKind;
use softord::{Error, Result};

#[derive(Parser)]
#[command(name = "softord", about = "Ordinal classification heads, QWK, and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ordinal dataset CSV
    GenerateData(GenerateArgs),
    /// Train one experiment and write its run directory
    Train(TrainArgs),
    /// Evaluate saved parameters on a dataset CSV
    Evaluate(EvaluateArgs),
    /// Cross-check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Compute kappa from a predictions CSV (label,prediction columns)
    Kappa(KappaArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated class proportions; defaults to the DR-like mix for
    /// k=5 and uniform otherwise
    #[arg(long)]
    proportions: Option<String>,
    #[arg(long, default_value_t = 0.75)]
    latent_noise_sd: f64,
    #[arg(long, default_value_t = 0.05)]
    label_noise_rate: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat `key = value` config file; any flag below overrides its key
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    proportions: Option<String>,
    #[arg(long)]
    latent_noise_sd: Option<String>,
    #[arg(long)]
    label_noise_rate: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    val_fraction: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr_schedule: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    warm_start_loss: Option<String>,
    #[arg(long)]
    warm_start_epochs: Option<String>,
    #[arg(long)]
    decode_rule: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Parameter file written by `train`
    #[arg(long)]
    params: PathBuf,
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Decode rule; defaults to the trained head's own rule
    #[arg(long)]
    decode_rule: Option<String>,
    /// Also write per-example predictions here
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KappaArgs {
    /// CSV with `label` and `prediction` columns
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "quadratic")]
    weights: String,
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let class_proportions = match &args.proportions {
        Some(text) => text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad proportion `{p}`")))
            })
            .collect::<Result<Vec<f64>>>()?,
        None if args.k == 5 => data::dr_proportions(),
        None => vec![1.0 / args.k as f64; args.k],
    };
    let spec = GeneratorSpec {
        n: args.n,
        d: args.d,
        k: args.k,
        seed: args.seed,
        class_proportions,
        latent_noise_sd: args.latent_noise_sd,
        label_noise_rate: args.label_noise_rate,
    };
    let dataset = data::generate(&spec)?;
    data::save_csv(&dataset, &args.out)?;
    println!(
        "wrote {} examples (k={}, d={}) to {}",
        dataset.len(),
        dataset.k,
        dataset.dim(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let mut pairs: BTreeMap<String, String> = match &args.config {
        Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let overrides: [(&str, &Option<String>); 20] = [
        ("loss", &args.loss),
        ("data", &args.data),
        ("n", &args.n),
        ("d", &args.d),
        ("k", &args.k),
        ("proportions", &args.proportions),
        ("latent_noise_sd", &args.latent_noise_sd),
        ("label_noise_rate", &args.label_noise_rate),
        ("data_seed", &args.data_seed),
        ("val_fraction", &args.val_fraction),
        ("hidden", &args.hidden),
        ("epochs", &args.epochs),
        ("batch_size", &args.batch_size),
        ("lr_schedule", &args.lr_schedule),
        ("momentum", &args.momentum),
        ("seed", &args.seed),
        ("warm_start_loss", &args.warm_start_loss),
        ("warm_start_epochs", &args.warm_start_epochs),
        ("decode_rule", &args.decode_rule),
        ("out_dir", &args.out_dir),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            pairs.insert(key.to_string(), v.clone());
        }
    }
    let config = ExperimentConfig::from_pairs(&pairs)?;
    let summary = harness::run_experiment(&config)?;
    let last = summary.final_metrics();
    println!(
        "{}: final val qwk {} ({} decode), outputs in {}",
        config.loss.token(),
        last.val_qwk,
        summary.decode_rule.token(),
        config.out_dir.display()
    );
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = harness::load_model(&args.params)?;
    let dataset = data::load_csv(&args.data, args.k.or(Some(model.head.k)))?;
    let rule = match &args.decode_rule {
        Some(tok) => DecodeRule::from_token(tok)?,
        None => harness::default_decode_rule(model.head.kind),
    };
    let eval = harness::evaluate(&model, &dataset, rule)?;
    match eval.cross_entropy {
        Some(ce) => println!("val_cross_entropy,{ce}"),
        None => println!("val_cross_entropy,"),
    }
    println!("val_qwk,{}", eval.kappa);
    if let Some(out) = &args.predictions_out {
        let mut text = String::from("index,label,prediction\n");
        for (i, (&label, &pred)) in dataset.labels.iter().zip(&eval.predictions).enumerate() {
            text.push_str(&format!("{i},{label},{pred}\n"));
        }
        std::fs::write(out, text)?;
    }
    Ok(())
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut ok = true;
    for report in gradcheck::check_all(args.instances, args.eps, args.seed)? {
        let pass = report.max_rel_error < 1e-4
            && report.anchor_max_rel_error.is_none_or(|a| a < 1e-4);
        ok &= pass;
        match report.anchor_max_rel_error {
            Some(a) => println!(
                "{:<14} max_rel_err {:.3e} anchor {:.3e} [{}]",
                report.kind.token(),
                report.max_rel_error,
                a,
                if pass { "ok" } else { "FAIL" }
            ),
            None => println!(
                "{:<14} max_rel_err {:.3e} [{}]",
                report.kind.token(),
                report.max_rel_error,
                if pass { "ok" } else { "FAIL" }
            ),
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Error::Oracle("gradient check failed".into()))
    }
}

fn run_kappa(args: &KappaArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.predictions)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty predictions file".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_col = columns
        .iter()
        .position(|&c| c == "label")
        .ok_or_else(|| Error::Parse("no `label` column".into()))?;
    let pred_col = columns
        .iter()
        .position(|&c| c == "prediction")
        .ok_or_else(|| Error::Parse("no `prediction` column".into()))?;
    let mut labels = Vec::new();
    let mut preds = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |col: usize| -> Result<usize> {
            cells
                .get(col)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse(format!("row {}: bad integer", lineno + 2)))
        };
        labels.push(parse(label_col)?);
        preds.push(parse(pred_col)?);
    }
    let k = args
        .k
        .unwrap_or_else(|| labels.iter().chain(&preds).max().map_or(2, |&m| m + 1));
    let kind = WeightKind::from_token(&args.weights)?;
    let kappa = harness::kappa_from_predictions(&labels, &preds, k, kind)?;
    println!("{kappa}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenerateData(args) => run_generate(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Gradcheck(args) => run_gradcheck(args),
        Command::Kappa(args) => run_kappa(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
