use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bleubound::oracle::{derive_seed, stream_rng};
use bleubound::train::{
    compare_gradients, run_toy, BaselineMode, CompareSettings, OptimizerKind, ToyConfig,
};
use bleubound::{
    corpus_bleu, exhaustive_expected_bleu, lb_bleu, mc_expected_bleu, BleuConfig, Breakdown, Dist,
    GradcheckSuite, TokenSeq, Vocab, DEFAULT_ENUM_CAP,
};
use clap::Args;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use crate::exit::{CliError, CHECK_FAILED};
use crate::input::{read_file, read_lines, read_logits, read_reference, read_vocab};
use crate::{Common, Format, Instance, Mode};

const ENUM_CAP_VAR: &str = "BLEUBOUND_ENUM_CAP";
const DEFAULT_MC_SAMPLES: u64 = 10_000;

fn emit(common: &Common, content: &str) -> Result<(), CliError> {
    match &common.output {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn json_only(common: &Common, command: &str) -> Result<(), CliError> {
    match common.format {
        Some(Format::Csv) => Err(CliError::usage(format!("{command} only writes JSON"))),
        _ => Ok(()),
    }
}

fn bleu_config(common: &Common, default_order: usize) -> Result<BleuConfig, CliError> {
    let order = common.max_order.unwrap_or(default_order);
    let cfg = match &common.weights {
        Some(w) => BleuConfig::with_weights(order, w.clone())?,
        None => {
            if order == 0 {
                return Err(CliError::usage("--max-order must be at least 1"));
            }
            BleuConfig::uniform(order)
        }
    };
    Ok(if common.no_bp { cfg.without_bp() } else { cfg })
}

fn enum_cap() -> Result<u64, CliError> {
    match std::env::var(ENUM_CAP_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{ENUM_CAP_VAR}={v:?} is not a positive integer"))),
        Err(_) => Ok(DEFAULT_ENUM_CAP),
    }
}

fn load_instance(instance: &Instance) -> Result<(Array2<f64>, TokenSeq), CliError> {
    let vocab: Option<Vocab> = instance.vocab.as_deref().map(read_vocab).transpose()?;
    let logits = read_logits(&instance.logits, instance.header)?;
    let reference = read_reference(&instance.reference, vocab.as_ref())?;
    if let Some(v) = &vocab {
        if logits.ncols() != v.len() {
            return Err(CliError::usage(format!(
                "logits have {} columns but the vocabulary has {} entries",
                logits.ncols(),
                v.len()
            )));
        }
    }
    if let Some(&id) = reference.iter().find(|&&id| id >= logits.ncols()) {
        return Err(CliError::usage(format!(
            "reference id {id} needs at least {} logits columns, found {}",
            id + 1,
            logits.ncols()
        )));
    }
    Ok((logits, reference))
}

fn breakdown_csv_row(out: &mut String, label: &str, b: &Breakdown) {
    let _ = write!(out, "{label},{},{},{},{}", b.score, b.bp, b.cand_len, b.ref_len);
    for p in &b.precisions {
        match p {
            Some(p) => {
                let _ = write!(out, ",{p}");
            }
            None => out.push(','),
        }
    }
    out.push('\n');
}

pub fn bleu(common: &Common, cand: &Path, reference: &Path, strict: bool) -> Result<(), CliError> {
    let mut cfg = bleu_config(common, 4)?;
    if strict {
        cfg = cfg.strict();
    }
    let cands = read_lines(cand)?;
    let refs = read_lines(reference)?;
    if cands.len() != refs.len() {
        return Err(CliError::usage(format!(
            "line counts differ: {} has {} lines, {} has {} lines",
            cand.display(),
            cands.len(),
            reference.display(),
            refs.len()
        )));
    }
    let vocab = Vocab::build(cands.iter().chain(&refs));
    let mut pairs = Vec::with_capacity(cands.len());
    let mut scores = Vec::with_capacity(cands.len());
    for (i, (c, r)) in cands.iter().zip(&refs).enumerate() {
        let pair = (vocab.encode(c)?, vocab.encode(r)?);
        let b = bleubound::bleu::<f64>(&pair.0, &pair.1, &cfg)
            .map_err(|e| CliError::usage(format!("line {}: {e}", i + 1)))?;
        scores.push(b);
        pairs.push(pair);
    }
    let corpus = corpus_bleu::<f64>(&pairs, &cfg)?;

    let mut out = String::new();
    match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            for b in &scores {
                out.push_str(&serde_json::to_string(b)?);
                out.push('\n');
            }
            out.push_str(&serde_json::to_string(&json!({ "corpus": corpus }))?);
            out.push('\n');
        }
        Format::Csv => {
            out.push_str("line,score,bp,cand_len,ref_len");
            for n in 1..=cfg.max_order {
                let _ = write!(out, ",p{n}");
            }
            out.push('\n');
            for (i, b) in scores.iter().enumerate() {
                breakdown_csv_row(&mut out, &(i + 1).to_string(), b);
            }
            breakdown_csv_row(&mut out, "corpus", &corpus);
        }
    }
    emit(common, &out)
}

pub fn lb(common: &Common, instance: &Instance) -> Result<(), CliError> {
    let cfg = bleu_config(common, 4)?;
    let (logits, reference) = load_instance(instance)?;
    let p = Dist::from_logits(logits)?;
    let result = lb_bleu(&p, &reference, &cfg, common.smoothing)?;
    let out = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut value = serde_json::to_value(&result)?;
            if let Value::Object(map) = &mut value {
                map.insert("smoothing".into(), json!(result.smoothing));
                map.insert("proven_regime".into(), json!(result.proven_regime));
                map.insert("bp_scaled".into(), json!(result.bp_scaled()?));
            }
            to_json(&value)?
        }
        Format::Csv => {
            let mut out = String::from("order,lb_overlap,lb_precision,smoothed\n");
            for k in 0..cfg.max_order {
                let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    k + 1,
                    cell(result.lb_overlaps[k]),
                    cell(result.lb_precisions[k]),
                    cell(result.smoothed[k])
                );
            }
            out
        }
    };
    emit(common, &out)
}

pub fn expected(common: &Common, instance: &Instance, mode: Mode, bp: bool) -> Result<(), CliError> {
    json_only(common, "expected")?;
    let mut cfg = bleu_config(common, 4)?;
    cfg.use_bp = bp && !common.no_bp;
    let (logits, reference) = load_instance(instance)?;
    let p = Dist::from_logits(logits)?;
    let out = match mode {
        Mode::Mc => {
            let samples = common.samples.unwrap_or(DEFAULT_MC_SAMPLES);
            if samples == 0 {
                return Err(CliError::usage("--samples must be positive"));
            }
            let est = mc_expected_bleu(&p, &reference, &cfg, samples, common.seed.unwrap_or(0))?;
            to_json(&json!({ "mode": "mc", "mean": est.mean, "std_error": est.std_error, "samples": est.samples, "seed": est.seed }))?
        }
        Mode::Exhaustive => {
            let exact = exhaustive_expected_bleu(&p, &reference, &cfg, enum_cap()?)?;
            to_json(&json!({ "mode": "exhaustive", "value": exact.value, "outcomes": exact.outcomes_enumerated }))?
        }
    };
    emit(common, &out)
}

pub fn gradcheck(
    common: &Common,
    instances: usize,
    max_len: usize,
    max_vocab: usize,
    step: f64,
    corrupt: Option<f64>,
) -> Result<(), CliError> {
    json_only(common, "gradcheck")?;
    if instances == 0 || max_len == 0 || max_vocab < 2 || step.is_nan() || step <= 0.0 {
        return Err(CliError::usage(
            "need --instances >= 1, --max-len >= 1, --max-vocab >= 2 and a positive --step",
        ));
    }
    let suite = GradcheckSuite {
        instances,
        max_len,
        max_vocab,
        step,
        seed: common.seed.unwrap_or(0),
        corrupt,
        ..GradcheckSuite::default()
    };
    let report = suite.run()?;
    emit(common, &to_json(&report)?)?;
    if report.passed(1e-4, 1e-9) {
        Ok(())
    } else {
        Err(CliError {
            code: CHECK_FAILED,
            message: format!(
                "gradient check failed: max relative error {:e}, max row sum {:e}",
                report.fd.max_rel_error, report.max_row_sum
            ),
        })
    }
}

#[derive(Args, Debug, Clone)]
pub struct ToyArgs {
    /// JSON file with ToyConfig fields; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_parser = ["adam", "sgd"])]
    optimizer: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    allow_duplicate_refs: bool,
    /// Where to write the summary JSON [default: stderr]
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn toy_config(common: &Common, args: &ToyArgs) -> Result<ToyConfig, CliError> {
    let mut cfg: ToyConfig = match &args.config {
        Some(path) => serde_json::from_str(&read_file(path)?)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?,
        None => ToyConfig::default(),
    };
    if let Some(v) = common.max_order {
        cfg.max_order = v;
    }
    if let Some(w) = &common.weights {
        cfg.weights = Some(w.clone());
    }
    if common.smoothing {
        cfg.smoothing = true;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.samples {
        cfg.mc_samples = v;
    }
    if let Some(v) = args.len {
        cfg.len = v;
    }
    if let Some(v) = args.vocab_size {
        cfg.vocab_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = &args.optimizer {
        cfg.optimizer = if v == "sgd" { OptimizerKind::Sgd } else { OptimizerKind::Adam };
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if args.allow_duplicate_refs {
        cfg.allow_duplicate_refs = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn toy(common: &Common, args: &ToyArgs) -> Result<(), CliError> {
    let cfg = toy_config(common, args)?;
    let run = run_toy(&cfg)?;
    let summary = run.summary();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            emit(common, &run.to_csv())?;
            let text = to_json(&summary)?;
            match &args.summary {
                Some(path) => fs::write(path, text)
                    .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?,
                None => eprint!("{text}"),
            }
        }
        Format::Json => {
            let value = json!({
                "config": cfg,
                "reference": run.reference.ids(),
                "summary": summary,
                "curve": run.curve,
            });
            emit(common, &to_json(&value)?)?;
        }
    }
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// CSV of logits; a random instance is drawn when absent
    #[arg(long, requires = "reference")]
    logits: Option<PathBuf>,
    #[arg(long = "ref", requires = "logits")]
    reference: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    /// Length of the random instance
    #[arg(long, default_value_t = 2)]
    len: usize,
    /// Vocabulary size of the random instance
    #[arg(long, default_value_t = 2)]
    vocab_size: usize,
    /// Central-difference step for the exact gradient
    #[arg(long, default_value_t = 1e-5)]
    fd_step: f64,
    /// Include the brevity penalty in the reward (off by default)
    #[arg(long)]
    bp: bool,
}

/// Standard-normal logits and a uniform reference of the same length.
fn random_instance(len: usize, vocab_size: usize, seed: u64) -> (Array2<f64>, TokenSeq) {
    let mut rng = stream_rng(derive_seed(seed, 0), 0);
    let logits = Array2::from_shape_simple_fn((len, vocab_size), || rng.sample(StandardNormal));
    let reference = (0..len).map(|_| rng.gen_range(0..vocab_size)).collect();
    (logits, reference)
}

pub fn compare_grad(common: &Common, args: &CompareArgs) -> Result<(), CliError> {
    json_only(common, "compare-grad")?;
    let mut cfg = bleu_config(common, 4)?;
    cfg.use_bp = args.bp && !common.no_bp;
    let seed = common.seed.unwrap_or(0);
    let (logits, reference) = match (&args.logits, &args.reference) {
        (Some(logits), Some(reference)) => load_instance(&Instance {
            logits: logits.clone(),
            reference: reference.clone(),
            vocab: args.vocab.clone(),
            header: args.header,
        })?,
        _ => {
            if args.len == 0 || args.vocab_size == 0 {
                return Err(CliError::usage("--len and --vocab-size must be positive"));
            }
            random_instance(args.len, args.vocab_size, seed)
        }
    };
    let base = common.samples.unwrap_or(1_000);
    if base == 0 {
        return Err(CliError::usage("--samples must be positive"));
    }
    let settings = CompareSettings {
        sample_counts: vec![base, 4 * base, 16 * base],
        baselines: vec![BaselineMode::None, BaselineMode::Mean],
        fd_step: args.fd_step,
        enum_cap: enum_cap()?,
        smoothing: common.smoothing,
    };
    let report = compare_gradients(&logits, &reference, &cfg, &settings, seed)?;
    let mut value = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut value {
        map.insert("reference".into(), json!(reference.ids()));
    }
    emit(common, &to_json(&value)?)
}
