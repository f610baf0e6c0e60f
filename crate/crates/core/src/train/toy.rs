//! Synthetic task: random logits and a random reference; the logits are
//! trained to maximize the bound aggregate while exact argmax BLEU and a
//! sampled expected BLEU are tracked along the way.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bleu::{bleu, BleuConfig};
use crate::error::{Error, Result};
use crate::grad::GradWorkspace;
use crate::lb::{lb_bleu_indexed, RefNGramIndex};
use crate::oracle::{derive_seed, mc_expected_bleu, stream_rng};
use crate::text::{argmax_decode, DistMatrix, TokenSeq};

use super::optim::{Adam, Optimizer, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub len: usize,
    pub vocab_size: usize,
    pub max_order: usize,
    /// Uniform over the orders when absent.
    pub weights: Option<Vec<f64>>,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub eval_every: usize,
    pub mc_samples: u64,
    pub smoothing: bool,
    /// Keep references with repeated words instead of redrawing them.
    pub allow_duplicate_refs: bool,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            len: 10,
            vocab_size: 10_000,
            max_order: 1,
            weights: None,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 10_000,
            eval_every: 100,
            mc_samples: 4096,
            smoothing: false,
            allow_duplicate_refs: false,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn bleu_config(&self) -> Result<BleuConfig> {
        let cfg = match &self.weights {
            Some(w) => BleuConfig::with_weights(self.max_order, w.clone())?,
            None => BleuConfig::uniform(self.max_order),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("len", self.len),
            ("vocab_size", self.vocab_size),
            ("max_order", self.max_order),
            ("eval_every", self.eval_every),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.len < self.max_order {
            return Err(Error::InvalidConfig(format!(
                "len {} is shorter than max order {}",
                self.len, self.max_order
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidConfig("mc_samples must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !self.allow_duplicate_refs && self.vocab_size < self.len {
            return Err(Error::InvalidConfig(
                "a reference without repeated words needs vocab_size >= len".into(),
            ));
        }
        self.bleu_config()?;
        Ok(())
    }
}

/// Logits i.i.d. standard normal and a reference drawn uniformly with
/// replacement (redrawn until word-unique unless duplicates are allowed).
pub fn gen_toy_instance<R: Rng>(cfg: &ToyConfig, rng: &mut R) -> (Array2<f64>, TokenSeq) {
    let logits = Array2::from_shape_simple_fn((cfg.len, cfg.vocab_size), || rng.sample(StandardNormal));
    loop {
        let reference: TokenSeq = (0..cfg.len).map(|_| rng.gen_range(0..cfg.vocab_size)).collect();
        if cfg.allow_duplicate_refs || reference.all_unique() {
            return (logits, reference);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    /// Unsmoothed bound aggregate (the bound on expected BLEU plus one).
    pub lb: f64,
    pub exact_argmax_bleu: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
}

pub const CURVE_CSV_HEADER: &str = "step,lb,exact_argmax_bleu,mc_mean,mc_stderr";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySummary {
    pub seed: u64,
    pub points: usize,
    pub initial_exact_bleu: f64,
    pub final_exact_bleu: f64,
    pub initial_lb: f64,
    pub final_lb: f64,
    pub initial_mc_mean: f64,
    pub final_mc_mean: f64,
    /// Pearson correlation of `lb` and `mc_mean` over the curve.
    pub correlation: Option<f64>,
    /// Points where `lb > mc_mean + 3 * mc_stderr`.
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub config: ToyConfig,
    pub reference: TokenSeq,
    pub curve: Vec<CurvePoint>,
    pub final_logits: Array2<f64>,
}

impl ToyRun {
    pub fn summary(&self) -> ToySummary {
        let first = self.curve.first().copied().expect("curve has a point at step 0");
        let last = self.curve.last().copied().expect("curve has a point at step 0");
        let lb: Vec<f64> = self.curve.iter().map(|p| p.lb).collect();
        let mc: Vec<f64> = self.curve.iter().map(|p| p.mc_mean).collect();
        ToySummary {
            seed: self.config.seed,
            points: self.curve.len(),
            initial_exact_bleu: first.exact_argmax_bleu,
            final_exact_bleu: last.exact_argmax_bleu,
            initial_lb: first.lb,
            final_lb: last.lb,
            initial_mc_mean: first.mc_mean,
            final_mc_mean: last.mc_mean,
            correlation: pearson(&lb, &mc),
            bound_violations: self
                .curve
                .iter()
                .filter(|p| p.lb > p.mc_mean + 3.0 * p.mc_stderr)
                .count(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for p in &self.curve {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.step, p.lb, p.exact_argmax_bleu, p.mc_mean, p.mc_stderr
            );
        }
        out
    }
}

/// Pearson correlation; `None` when either series is constant or shorter
/// than two points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn evaluate(
    step: usize,
    logits: &Array2<f64>,
    reference: &TokenSeq,
    index: &RefNGramIndex,
    bleu_cfg: &BleuConfig,
    cfg: &ToyConfig,
) -> Result<CurvePoint> {
    let p = DistMatrix::from_logits(logits.clone())?;
    let lb = lb_bleu_indexed(&p, index, bleu_cfg, false)?.aggregate;
    let exact = bleu::<f64>(&argmax_decode(&p), reference, bleu_cfg)?.score;
    let mc = mc_expected_bleu(
        &p,
        reference,
        bleu_cfg,
        cfg.mc_samples,
        derive_seed(cfg.seed, 1 + step as u64),
    )?;
    Ok(CurvePoint {
        step,
        lb,
        exact_argmax_bleu: exact,
        mc_mean: mc.mean,
        mc_stderr: mc.std_error,
    })
}

/// Trains the logits of a fresh instance. Curve points are recorded at step
/// 0, every `eval_every` steps and at the final step.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.validate()?;
    let bleu_cfg = cfg.bleu_config()?;
    let (mut logits, reference) = gen_toy_instance(cfg, &mut stream_rng(derive_seed(cfg.seed, 0), 0));
    run_toy_from(cfg, &bleu_cfg, &mut logits, &reference).map(|curve| ToyRun {
        config: cfg.clone(),
        reference,
        curve,
        final_logits: logits,
    })
}

fn run_toy_from(
    cfg: &ToyConfig,
    bleu_cfg: &BleuConfig,
    logits: &mut Array2<f64>,
    reference: &TokenSeq,
) -> Result<Vec<CurvePoint>> {
    let index = RefNGramIndex::new(reference, bleu_cfg.max_order);
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::Adam => Optimizer::Adam(Adam::new(
            logits.dim(),
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
        )),
        OptimizerKind::Sgd => Optimizer::Sgd { lr: cfg.learning_rate },
    };
    let mut curve = vec![evaluate(0, logits, reference, &index, bleu_cfg, cfg)?];
    let mut workspace = GradWorkspace::new();
    let mut grad = Array2::zeros(logits.dim());
    for step in 1..=cfg.steps {
        workspace.grad_into(logits, &index, bleu_cfg, cfg.smoothing, &mut grad)?;
        optimizer.step(logits, &grad);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            curve.push(evaluate(step, logits, reference, &index, bleu_cfg, cfg)?);
        }
    }
    Ok(curve)
}
