//! Score-function (REINFORCE) gradient of expected BLEU with respect to the
//! logits, and a side-by-side comparison with the bound's gradient on
//! instances small enough for the exhaustive oracle.
//!
//! The whole sentence reward is credited to every position:
//! `grad ~ (R(x) - b) * sum_t d/dz log softmax(z_t)[x_t]`, whose row-`t`
//! block is `onehot(x_t) - probs_t`.

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bleu::{bleu, BleuConfig};
use crate::error::{Error, Result};
use crate::grad::grad_lb;
use crate::oracle::{exhaustive_expected_bleu, mc_expected_bleu, stream_rng, Moments, RowSampler, SAMPLE_CHUNK};
use crate::text::{DistMatrix, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    #[default]
    None,
    /// Subtract the mean sampled reward.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceEstimate {
    pub grad_logits: Array2<f64>,
    /// Per-entry standard error of `grad_logits`.
    pub std_error: Array2<f64>,
    pub samples: u64,
    /// Reward subtracted from every sample (0 without a baseline).
    pub baseline: f64,
    pub seed: u64,
}

impl ReinforceEstimate {
    /// Per-entry estimator variance, `std_error^2`.
    pub fn variance(&self) -> Array2<f64> {
        self.std_error.mapv(|s| s * s)
    }
}

fn sentence_reward(x: &[usize], reference: &TokenSeq, cfg: &BleuConfig) -> f64 {
    bleu::<f64>(&TokenSeq::new(x.to_vec()), reference, cfg)
        .map(|b| b.score)
        .unwrap_or(f64::NAN)
}

/// Score-function estimate of `d E[BLEU] / d logits` from `samples` draws.
///
/// With the mean baseline the samples are drawn twice from the same streams:
/// once for the mean reward and once for the gradient. Using the in-sample
/// mean shrinks the expectation by `(S - 1) / S`; the estimate is rescaled by
/// `S / (S - 1)` to stay unbiased.
pub fn reinforce_grad(
    logits: &Array2<f64>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    samples: u64,
    baseline_mode: BaselineMode,
    seed: u64,
) -> Result<ReinforceEstimate> {
    if samples == 0 {
        return Err(Error::InvalidConfig("at least one sample is required".into()));
    }
    let p = DistMatrix::from_logits(logits.clone())?;
    if reference.is_empty() {
        return Err(Error::EmptyText);
    }
    reference.check_range(p.vocab_size())?;
    cfg.effective_weights(p.len())?;

    let (baseline, scale) = match baseline_mode {
        BaselineMode::None => (0.0, 1.0),
        BaselineMode::Mean if samples < 2 => (0.0, 1.0),
        BaselineMode::Mean => {
            let mean = mc_expected_bleu(&p, reference, cfg, samples, seed)?.mean;
            (mean, samples as f64 / (samples - 1) as f64)
        }
    };

    let probs = p.probs();
    let shape = probs.dim();
    let sampler = RowSampler::new(&p);
    let chunks = samples.div_ceil(SAMPLE_CHUNK as u64);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let take = (samples - k * SAMPLE_CHUNK as u64).min(SAMPLE_CHUNK as u64);
            let mut moments = vec![Moments::default(); shape.0 * shape.1];
            let mut x = Vec::with_capacity(shape.0);
            for _ in 0..take {
                sampler.sample_into(&mut rng, &mut x);
                let weight = scale * (sentence_reward(&x, reference, cfg) - baseline);
                for (t, &xt) in x.iter().enumerate() {
                    for j in 0..shape.1 {
                        let indicator = if j == xt { 1.0 } else { 0.0 };
                        moments[t * shape.1 + j].push(weight * (indicator - probs[[t, j]]));
                    }
                }
            }
            moments
        })
        .collect();

    let mut total = vec![Moments::default(); shape.0 * shape.1];
    for chunk in partial {
        for (acc, m) in total.iter_mut().zip(chunk) {
            *acc = acc.merge(m);
        }
    }
    let grad_logits = Array2::from_shape_fn(shape, |(t, j)| total[t * shape.1 + j].mean);
    let std_error = Array2::from_shape_fn(shape, |(t, j)| total[t * shape.1 + j].std_error());
    Ok(ReinforceEstimate {
        grad_logits,
        std_error,
        samples,
        baseline,
        seed,
    })
}

/// Central differences of the exhaustive expected BLEU with respect to the
/// logits.
pub fn exact_expected_bleu_grad(
    logits: &Array2<f64>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    step: f64,
    cap: u64,
) -> Result<Array2<f64>> {
    let value = |z: &Array2<f64>| -> Result<f64> {
        let p = DistMatrix::from_logits(z.clone())?;
        Ok(exhaustive_expected_bleu(&p, reference, cfg, cap)?.value)
    };
    value(logits)?;
    let mut probe = logits.clone();
    let mut grad = Array2::zeros(logits.dim());
    for ((r, c), g) in grad.indexed_iter_mut() {
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + step;
        let up = value(&probe)?;
        probe[[r, c]] = orig - step;
        let down = value(&probe)?;
        probe[[r, c]] = orig;
        *g = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Cosine similarity of two matrices flattened; zero when either is zero.
pub fn cosine(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| {
        dot += x * y;
        na += x * x;
        nb += y * y;
    });
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReinforceRow {
    pub samples: u64,
    pub baseline: BaselineMode,
    pub grad: Vec<Vec<f64>>,
    /// Per-entry estimator variance.
    pub variance: Vec<Vec<f64>>,
    pub mean_variance: f64,
    pub cosine_to_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientComparison {
    pub seed: u64,
    pub exact_grad: Vec<Vec<f64>>,
    pub lb_grad: Vec<Vec<f64>>,
    /// Bitwise agreement of two independent bound-gradient evaluations.
    pub lb_deterministic: bool,
    /// Per-entry variance of the bound gradient across repeated runs.
    pub lb_variance: Vec<Vec<f64>>,
    pub cosine_lb_exact: f64,
    pub reinforce: Vec<ReinforceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSettings {
    pub sample_counts: Vec<u64>,
    pub baselines: Vec<BaselineMode>,
    pub fd_step: f64,
    pub enum_cap: u64,
    /// Smoothing for the bound gradient.
    pub smoothing: bool,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            sample_counts: vec![1_000, 4_000, 16_000],
            baselines: vec![BaselineMode::None, BaselineMode::Mean],
            fd_step: 1e-5,
            enum_cap: crate::oracle::DEFAULT_ENUM_CAP,
            smoothing: false,
        }
    }
}

/// Exact gradient (finite differences on the exhaustive oracle), bound
/// gradient, and REINFORCE estimates at several sample counts.
pub fn compare_gradients(
    logits: &Array2<f64>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    settings: &CompareSettings,
    seed: u64,
) -> Result<GradientComparison> {
    let exact = exact_expected_bleu_grad(logits, reference, cfg, settings.fd_step, settings.enum_cap)?;
    let lb_a = grad_lb(logits, reference, cfg, settings.smoothing)?.grad_logits;
    let lb_b = grad_lb(logits, reference, cfg, settings.smoothing)?.grad_logits;
    let lb_deterministic = lb_a.iter().zip(lb_b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
    let lb_variance = Zip::from(&lb_a).and(&lb_b).map_collect(|&x, &y| {
        let m = 0.5 * (x + y);
        (x - m) * (x - m) + (y - m) * (y - m)
    });

    let mut reinforce = Vec::new();
    for &baseline in &settings.baselines {
        for &samples in &settings.sample_counts {
            let est = reinforce_grad(logits, reference, cfg, samples, baseline, seed)?;
            let variance = est.variance();
            reinforce.push(ReinforceRow {
                samples,
                baseline,
                grad: rows(&est.grad_logits),
                mean_variance: variance.mean().unwrap_or(0.0),
                variance: rows(&variance),
                cosine_to_exact: cosine(&est.grad_logits, &exact),
            });
        }
    }
    Ok(GradientComparison {
        seed,
        exact_grad: rows(&exact),
        cosine_lb_exact: cosine(&lb_a, &exact),
        lb_grad: rows(&lb_a),
        lb_deterministic,
        lb_variance: rows(&lb_variance),
        reinforce,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    // reference-token probabilities 0.57 and 0.43; the mean baseline only
    // lowers variance while they stay below 2/3
    fn tiny() -> (Array2<f64>, TokenSeq, BleuConfig) {
        (
            array![[0.1, -0.2], [0.3, 0.0]],
            TokenSeq::new(vec![0, 1]),
            BleuConfig::uniform(2).without_bp(),
        )
    }

    #[test]
    fn zero_reward_gives_zero_gradient() {
        // all mass on tokens 0 and 1, reference uses token 2 only
        let logits = array![[5.0, 5.0, -800.0], [5.0, 5.0, -800.0]];
        let reference = TokenSeq::new(vec![2]);
        let est = reinforce_grad(&logits, &reference, &BleuConfig::uniform(1), 2000, BaselineMode::None, 1).unwrap();
        assert!(est.grad_logits.iter().all(|&g| g == 0.0));
        assert_eq!(est.baseline, 0.0);
    }

    #[test]
    fn estimate_is_seed_deterministic_and_shaped() {
        let (logits, reference, cfg) = tiny();
        let a = reinforce_grad(&logits, &reference, &cfg, 3000, BaselineMode::Mean, 4).unwrap();
        let b = reinforce_grad(&logits, &reference, &cfg, 3000, BaselineMode::Mean, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.grad_logits.dim(), logits.dim());
        assert!(a.baseline > 0.0);
    }

    #[test]
    fn mean_baseline_keeps_mean_and_cuts_variance() {
        let (logits, reference, cfg) = tiny();
        let exact = exact_expected_bleu_grad(&logits, &reference, &cfg, 1e-5, 1_000_000).unwrap();
        let plain = reinforce_grad(&logits, &reference, &cfg, 200_000, BaselineMode::None, 2).unwrap();
        let based = reinforce_grad(&logits, &reference, &cfg, 200_000, BaselineMode::Mean, 2).unwrap();
        for est in [&plain, &based] {
            for ((g, e), s) in est.grad_logits.iter().zip(exact.iter()).zip(est.std_error.iter()) {
                assert!((g - e).abs() <= 4.0 * s, "{g} vs {e} (se {s})");
            }
        }
        assert!(based.variance().sum() < plain.variance().sum());
    }

    #[test]
    fn exact_grad_rows_sum_to_zero() {
        let (logits, reference, cfg) = tiny();
        let g = exact_expected_bleu_grad(&logits, &reference, &cfg, 1e-5, 1_000_000).unwrap();
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn comparison_report() {
        let (logits, reference, cfg) = tiny();
        let settings = CompareSettings {
            sample_counts: vec![2_000, 8_000],
            baselines: vec![BaselineMode::None],
            ..CompareSettings::default()
        };
        let report = compare_gradients(&logits, &reference, &cfg, &settings, 0).unwrap();
        assert!(report.lb_deterministic);
        assert!(report.lb_variance.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(report.reinforce.len(), 2);
        let ratio = report.reinforce[0].mean_variance / report.reinforce[1].mean_variance;
        assert!((ratio / 4.0 - 1.0).abs() < 0.3, "ratio {ratio}");
        assert!(report.cosine_lb_exact > 0.0);
    }

    #[test]
    fn comparison_refuses_large_instances() {
        let logits = Array2::zeros((7, 10));
        let reference = TokenSeq::new(vec![1, 2]);
        let err = compare_gradients(&logits, &reference, &BleuConfig::uniform(1), &CompareSettings::default(), 0);
        assert!(matches!(err, Err(Error::InstanceTooLarge { .. })));
    }

    #[test]
    fn cosine_basics() {
        let a = array![[1.0, 0.0]];
        assert_eq!(cosine(&a, &a), 1.0);
        assert_eq!(cosine(&a, &array![[0.0, 2.0]]), 0.0);
        assert_eq!(cosine(&a, &array![[0.0, 0.0]]), 0.0);
    }
}
