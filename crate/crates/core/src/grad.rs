//! Exact gradient of the bound aggregate with respect to the logits, and a
//! central-difference checker for it.
//!
//! The backward pass is the hand-derived chain rule through the sparse bound.
//! For one reference n-gram `g` with reference count `c`, write
//! `D_i = 1 + sum_{l != i} q_l` and `h_i = min(1, c / D_i)`. Then
//!
//! ```text
//! d LB / d q_l = h_l + sum_{i != l} q_i h'_i,    h'_i = -c / D_i^2  (0 where clipped)
//! ```
//!
//! and `q_l` is a product of one probability per n-gram slot. The clip is not
//! differentiable at `c / D = 1`; the flat branch is taken there.

use ndarray::{Array2, Axis, Zip};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bleu::BleuConfig;
use crate::error::{Error, Result};
use crate::lb::{gram_probs, lb_bleu_indexed, others_sum, RefNGramIndex};
use crate::oracle::stream_rng;
use crate::scalar::Scalar;
use crate::text::{check_finite, DistMatrix, TokenSeq};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradResult<T> {
    pub objective_value: T,
    pub grad_logits: Array2<T>,
}

impl<T: Scalar> GradResult<T> {
    /// Largest absolute row sum; zero up to round-off since softmax ignores
    /// a constant shift of a row.
    pub fn max_row_sum(&self) -> T {
        self.grad_logits
            .axis_iter(Axis(0))
            .map(|row| row.sum().abs())
            .fold(T::zero(), T::max)
    }

    /// Loss for minimizer-style drivers: the negated objective and gradient.
    pub fn into_loss(self) -> GradResult<T> {
        GradResult {
            objective_value: -self.objective_value,
            grad_logits: self.grad_logits.mapv(|g| -g),
        }
    }
}

/// Adds `scale * d LB[O_n] / d probs` into `out`.
pub(crate) fn accumulate_overlap_grad<T: Scalar>(
    probs: &Array2<T>,
    index: &RefNGramIndex,
    n: usize,
    scale: T,
    out: &mut Array2<T>,
) {
    let len = probs.nrows();
    if len < n {
        return;
    }
    let positions = len - n + 1;
    let mut dq = vec![T::zero(); positions];
    let mut slope = vec![T::zero(); positions];
    let mut value = vec![T::zero(); positions];
    for gram in index.grams(n) {
        let q = gram_probs(probs, &gram.ids, positions);
        let count = T::of_usize(gram.count);
        for i in 0..positions {
            let denom = T::one() + others_sum(&q, i);
            let ratio = count / denom;
            if ratio < T::one() {
                value[i] = ratio;
                slope[i] = -ratio / denom;
            } else {
                value[i] = T::one();
                slope[i] = T::zero();
            }
        }
        for l in 0..positions {
            let cross = (0..positions)
                .filter(|&i| i != l)
                .fold(T::zero(), |acc, i| acc + q[i] * slope[i]);
            dq[l] = scale * (value[l] + cross);
        }
        for (l, &d) in dq.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            for (k, &m) in gram.ids.iter().enumerate() {
                let rest = gram
                    .ids
                    .iter()
                    .enumerate()
                    .filter(|&(kk, _)| kk != k)
                    .fold(T::one(), |acc, (kk, &mm)| acc * probs[[l + kk, mm]]);
                out[[l + k, m]] = out[[l + k, m]] + d * rest;
            }
        }
    }
}

/// `dz_j = p_j (g_j - sum_k p_k g_k)` row by row.
pub(crate) fn softmax_backward<T: Scalar>(probs: &Array2<T>, grad_probs: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((p, g), mut o) in probs
        .axis_iter(Axis(0))
        .zip(grad_probs.axis_iter(Axis(0)))
        .zip(out.axis_iter_mut(Axis(0)))
    {
        let dot = p.iter().zip(g.iter()).fold(T::zero(), |acc, (&pi, &gi)| acc + pi * gi);
        for ((o, &pi), &gi) in o.iter_mut().zip(p.iter()).zip(g.iter()) {
            *o = pi * (gi - dot);
        }
    }
    out
}

/// Objective value and its gradient with respect to the probabilities.
pub(crate) fn lb_value_and_prob_grad<T: Scalar>(
    p: &DistMatrix<T>,
    index: &RefNGramIndex,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<(T, Array2<T>)> {
    let mut grad = Array2::zeros(p.probs().raw_dim());
    let value = add_prob_grad(p, index, cfg, smoothing, &mut grad)?;
    Ok((value, grad))
}

/// Adds the probability gradient into `grad`, which only gains nonzero
/// entries in reference-word columns. Returns the objective value.
fn add_prob_grad<T: Scalar>(
    p: &DistMatrix<T>,
    index: &RefNGramIndex,
    cfg: &BleuConfig,
    smoothing: bool,
    grad: &mut Array2<T>,
) -> Result<T> {
    let result = lb_bleu_indexed(p, index, cfg, smoothing)?;
    let weights = cfg.effective_weights(p.len())?;
    let aggregate = result.aggregate;
    if aggregate > T::zero() {
        for (k, w) in weights.iter().enumerate() {
            let (Some(w), Some(overlap)) = (w, result.lb_overlaps[k]) else {
                continue;
            };
            if *w == 0.0 {
                continue;
            }
            // d aggregate / d LB[O_n] for the plain and smoothed precision
            let denom = if smoothing { overlap + T::one() } else { overlap };
            let scale = aggregate * T::of(*w) / denom;
            accumulate_overlap_grad(p.probs(), index, k + 1, scale, grad);
        }
    }
    Ok(aggregate)
}

/// Value and logit-gradient of the bound aggregate.
pub fn grad_lb<T: Scalar>(
    logits: &Array2<T>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<GradResult<T>> {
    let index = RefNGramIndex::new(reference, cfg.max_order);
    grad_lb_indexed(logits, &index, cfg, smoothing)
}

pub fn grad_lb_indexed<T: Scalar>(
    logits: &Array2<T>,
    index: &RefNGramIndex,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<GradResult<T>> {
    if logits.nrows() == 0 {
        return Err(Error::EmptyText);
    }
    check_finite(logits.view())?;
    let p = DistMatrix::from_logits(logits.clone())?;
    let (objective_value, grad_probs) = lb_value_and_prob_grad(&p, index, cfg, smoothing)?;
    Ok(GradResult {
        objective_value,
        grad_logits: softmax_backward(p.probs(), &grad_probs),
    })
}

/// Reusable buffers for repeated gradient evaluations on logits of one
/// shape, as in a training loop. Results match [`grad_lb_indexed`] exactly.
#[derive(Debug, Clone)]
pub struct GradWorkspace<T> {
    dist: Option<DistMatrix<T>>,
    grad_probs: Array2<T>,
    columns: Vec<usize>,
}

impl<T: Scalar> Default for GradWorkspace<T> {
    fn default() -> Self {
        GradWorkspace {
            dist: None,
            grad_probs: Array2::zeros((0, 0)),
            columns: Vec::new(),
        }
    }
}

impl<T: Scalar> GradWorkspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Distribution from the latest call.
    pub fn dist(&self) -> Option<&DistMatrix<T>> {
        self.dist.as_ref()
    }

    /// Writes the logit gradient into `out` (resized if needed) and returns
    /// the objective value.
    pub fn grad_into(
        &mut self,
        logits: &Array2<T>,
        index: &RefNGramIndex,
        cfg: &BleuConfig,
        smoothing: bool,
        out: &mut Array2<T>,
    ) -> Result<T> {
        if logits.nrows() == 0 {
            return Err(Error::EmptyText);
        }
        match &mut self.dist {
            Some(d) => d.set_logits(logits.view())?,
            None => self.dist = Some(DistMatrix::from_logits(logits.clone())?),
        }
        let p = self.dist.as_ref().expect("set above");
        if self.grad_probs.dim() != logits.dim() {
            self.grad_probs = Array2::zeros(logits.dim());
        }
        if out.dim() != logits.dim() {
            *out = Array2::zeros(logits.dim());
        }
        self.columns.clear();
        self.columns.extend(index.grams(1).iter().map(|g| g.ids[0]));
        self.columns.sort_unstable();
        self.columns.dedup();
        if let Some(&c) = self.columns.last() {
            if c >= p.vocab_size() {
                return Err(Error::IdOutOfRange {
                    id: c,
                    vocab_size: p.vocab_size(),
                });
            }
        }

        let value = add_prob_grad(p, index, cfg, smoothing, &mut self.grad_probs);
        // softmax backward, reading the gradient only where it can be nonzero
        let probs = p.probs();
        for t in 0..probs.nrows() {
            let dot = self
                .columns
                .iter()
                .fold(T::zero(), |acc, &c| acc + probs[[t, c]] * self.grad_probs[[t, c]]);
            let neg = T::zero() - dot;
            Zip::from(out.row_mut(t)).and(probs.row(t)).for_each(|o, &pj| *o = pj * neg);
            for &c in &self.columns {
                out[[t, c]] = probs[[t, c]] * (self.grad_probs[[t, c]] - dot);
                self.grad_probs[[t, c]] = T::zero();
            }
        }
        value
    }
}

/// Bound aggregate as a plain function of the logits.
pub fn lb_objective<T: Scalar>(
    logits: &Array2<T>,
    index: &RefNGramIndex,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<T> {
    let p = DistMatrix::from_logits(logits.clone())?;
    Ok(lb_bleu_indexed(&p, index, cfg, smoothing)?.aggregate)
}

/// Distance of the closest clip argument `c / D` to 1 over every used order,
/// reference n-gram and position. Finite differences straddling a point
/// within ~1e-3 of the kink are not meaningful.
pub fn kink_margin<T: Scalar>(p: &DistMatrix<T>, index: &RefNGramIndex, cfg: &BleuConfig) -> Result<T> {
    let weights = cfg.effective_weights(p.len())?;
    let mut margin = T::infinity();
    for (k, w) in weights.iter().enumerate() {
        if w.is_none() {
            continue;
        }
        let n = k + 1;
        let positions = p.len() - n + 1;
        for gram in index.grams(n) {
            let q = gram_probs(p.probs(), &gram.ids, positions);
            for i in 0..positions {
                let ratio = T::of_usize(gram.count) / (T::one() + others_sum(&q, i));
                margin = margin.min((ratio - T::one()).abs());
            }
        }
    }
    Ok(margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub step: f64,
    pub entries_checked: usize,
}

impl FdReport {
    fn empty(step: f64) -> Self {
        FdReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            step,
            entries_checked: 0,
        }
    }

    pub fn combine(self, other: FdReport) -> FdReport {
        FdReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            step: self.step,
            entries_checked: self.entries_checked + other.entries_checked,
        }
    }
}

/// Which logits to perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdEntries {
    All,
    /// A seeded random subset of this many entries (all, if fewer exist).
    Sample(usize),
}

/// Compares `analytic` against central differences of `f` at `logits`.
/// Relative error uses `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn fd_compare<F>(
    logits: &Array2<f64>,
    analytic: &Array2<f64>,
    f: F,
    step: f64,
    entries: FdEntries,
    seed: u64,
) -> Result<FdReport>
where
    F: Fn(&Array2<f64>) -> Result<f64>,
{
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    if logits.dim() != analytic.dim() {
        return Err(Error::ShapeMismatch("gradient shape differs from logits".into()));
    }
    let (rows, cols) = logits.dim();
    let total = rows * cols;
    let chosen: Vec<usize> = match entries {
        FdEntries::All => (0..total).collect(),
        FdEntries::Sample(k) if k >= total => (0..total).collect(),
        FdEntries::Sample(k) => {
            let mut picked = sample_indices(&mut stream_rng(seed, 0), total, k).into_vec();
            picked.sort_unstable();
            picked
        }
    };
    let mut report = FdReport::empty(step);
    let mut probe = logits.clone();
    for flat in chosen {
        let (r, c) = (flat / cols, flat % cols);
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + step;
        let up = f(&probe)?;
        probe[[r, c]] = orig - step;
        let down = f(&probe)?;
        probe[[r, c]] = orig;
        let numeric = (up - down) / (2.0 * step);
        let exact = analytic[[r, c]];
        let abs = (numeric - exact).abs();
        let rel = abs / exact.abs().max(numeric.abs()).max(1e-8);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.entries_checked += 1;
    }
    Ok(report)
}

/// Checks [`grad_lb`] against central differences of the bound aggregate.
pub fn finite_diff_check(
    logits: &Array2<f64>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    smoothing: bool,
    step: f64,
    entries: FdEntries,
    seed: u64,
) -> Result<FdReport> {
    let index = RefNGramIndex::new(reference, cfg.max_order);
    let analytic = grad_lb_indexed(logits, &index, cfg, smoothing)?;
    fd_compare(
        logits,
        &analytic.grad_logits,
        |z| lb_objective(z, &index, cfg, smoothing),
        step,
        entries,
        seed,
    )
}

/// Settings for the randomized gradient-exactness suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSuite {
    pub instances: usize,
    pub max_len: usize,
    pub max_vocab: usize,
    pub step: f64,
    /// Instances whose clip argument lies this close to 1 are redrawn.
    pub kink_tolerance: f64,
    pub seed: u64,
    /// Added to one analytic entry per instance; used to check that the
    /// harness catches a wrong gradient.
    pub corrupt: Option<f64>,
}

impl Default for GradcheckSuite {
    fn default() -> Self {
        GradcheckSuite {
            instances: 100,
            max_len: 6,
            max_vocab: 8,
            step: 1e-5,
            kink_tolerance: 1e-3,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    #[serde(flatten)]
    pub fd: FdReport,
    pub max_row_sum: f64,
    pub instances: usize,
    pub redrawn: usize,
    pub seed: u64,
}

impl SuiteReport {
    pub fn passed(&self, rel_tolerance: f64, row_sum_tolerance: f64) -> bool {
        self.fd.max_rel_error < rel_tolerance && self.max_row_sum < row_sum_tolerance
    }
}

/// One random suite instance: logits, reference and configuration.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub logits: Array2<f64>,
    pub reference: TokenSeq,
    pub cfg: BleuConfig,
    pub smoothing: bool,
}

fn draw_instance<R: Rng>(rng: &mut R, suite: &GradcheckSuite) -> GradInstance {
    let len = rng.gen_range(1..=suite.max_len);
    let v = rng.gen_range(2..=suite.max_vocab);
    let logits = Array2::from_shape_simple_fn((len, v), || rng.sample(StandardNormal));
    let ref_len = rng.gen_range(1..=suite.max_len);
    let reference = (0..ref_len).map(|_| rng.gen_range(0..v)).collect();
    let order = rng.gen_range(1..=4);
    GradInstance {
        logits,
        reference,
        cfg: BleuConfig::uniform(order),
        smoothing: rng.gen_bool(0.5),
    }
}

impl GradcheckSuite {
    /// Draws the suite's instances, redrawing near-kink ones. Returns the
    /// instances and the number of redraws.
    pub fn instances(&self) -> Result<(Vec<GradInstance>, usize)> {
        let mut rng = stream_rng(self.seed, 0);
        let mut out = Vec::with_capacity(self.instances);
        let mut redrawn = 0;
        while out.len() < self.instances {
            let inst = draw_instance(&mut rng, self);
            let index = RefNGramIndex::new(&inst.reference, inst.cfg.max_order);
            let p = DistMatrix::from_logits(inst.logits.clone())?;
            if kink_margin(&p, &index, &inst.cfg)? < self.kink_tolerance {
                redrawn += 1;
                continue;
            }
            out.push(inst);
        }
        Ok((out, redrawn))
    }

    pub fn run(&self) -> Result<SuiteReport> {
        let (instances, redrawn) = self.instances()?;
        let mut fd = FdReport::empty(self.step);
        let mut max_row_sum = 0.0f64;
        for (k, inst) in instances.iter().enumerate() {
            let index = RefNGramIndex::new(&inst.reference, inst.cfg.max_order);
            let mut grad = grad_lb_indexed(&inst.logits, &index, &inst.cfg, inst.smoothing)?;
            max_row_sum = max_row_sum.max(grad.max_row_sum());
            if let Some(delta) = self.corrupt {
                grad.grad_logits[[0, 0]] += delta;
            }
            let report = fd_compare(
                &inst.logits,
                &grad.grad_logits,
                |z| lb_objective(z, &index, &inst.cfg, inst.smoothing),
                self.step,
                FdEntries::All,
                self.seed.wrapping_add(k as u64),
            )?;
            fd = fd.combine(report);
        }
        Ok(SuiteReport {
            fd,
            max_row_sum,
            instances: instances.len(),
            redrawn,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn workspace_matches_grad_lb_bitwise() {
        let mut rng = stream_rng(21, 0);
        let mut ws = GradWorkspace::new();
        let mut out = Array2::zeros((0, 0));
        for order in 1..=3 {
            for smoothing in [false, true] {
                let logits = Array2::from_shape_simple_fn((5, 7), || rng.sample::<f64, _>(StandardNormal));
                let reference = TokenSeq::new(vec![3, 1, 4, 1, 5]);
                let cfg = BleuConfig::uniform(order);
                let plain = grad_lb(&logits, &reference, &cfg, smoothing).unwrap();
                let index = RefNGramIndex::new(&reference, order);
                let value = ws.grad_into(&logits, &index, &cfg, smoothing, &mut out).unwrap();
                assert_eq!(value.to_bits(), plain.objective_value.to_bits());
                assert!(out.iter().zip(plain.grad_logits.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn single_position_example() {
        let g = grad_lb(&array![[0.0, 0.0]], &TokenSeq::new(vec![0]), &BleuConfig::uniform(1), false).unwrap();
        assert_relative_eq!(g.objective_value, 0.5, epsilon = 1e-15);
        assert_relative_eq!(g.grad_logits[[0, 0]], 0.25, epsilon = 1e-15);
        assert_relative_eq!(g.grad_logits[[0, 1]], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn symmetric_instance_has_symmetric_gradient() {
        // swapping tokens 0 and 1 maps the reference {0, 1} onto itself
        let logits = Array2::<f64>::zeros((3, 4));
        let g = grad_lb(&logits, &TokenSeq::new(vec![0, 1]), &BleuConfig::uniform(1), false).unwrap();
        for r in 0..3 {
            assert!((g.grad_logits[[r, 0]] - g.grad_logits[[r, 1]]).abs() < 1e-12);
            assert!((g.grad_logits[[r, 2]] - g.grad_logits[[r, 3]]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = BleuConfig::uniform(1);
        let reference = TokenSeq::new(vec![0]);
        assert!(matches!(
            grad_lb(&array![[0.0, f64::NAN]], &reference, &cfg, false),
            Err(Error::NonFiniteInput { .. })
        ));
        assert_eq!(
            grad_lb(&Array2::<f64>::zeros((0, 2)), &reference, &cfg, false),
            Err(Error::EmptyText)
        );
    }

    #[test]
    fn near_flat_region() {
        let logits = array![[10.0, -10.0]];
        let reference = TokenSeq::new(vec![0]);
        let r = finite_diff_check(&logits, &reference, &BleuConfig::uniform(1), false, 1e-5, FdEntries::All, 0).unwrap();
        assert!(r.max_abs_error < 1e-8, "{r:?}");
        assert_eq!(r.entries_checked, 2);
    }

    #[test]
    fn fd_check_is_deterministic() {
        let logits = array![[0.3, -0.1, 0.7, 0.0], [1.2, 0.4, -0.5, 0.2], [0.0, 0.1, 0.2, 0.3]];
        let reference = TokenSeq::new(vec![2, 0, 3]);
        let cfg = BleuConfig::uniform(2);
        let a = finite_diff_check(&logits, &reference, &cfg, true, 1e-5, FdEntries::Sample(5), 77).unwrap();
        let b = finite_diff_check(&logits, &reference, &cfg, true, 1e-5, FdEntries::Sample(5), 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries_checked, 5);
        assert!(a.max_rel_error < 1e-4);
    }

    #[test]
    fn fd_rejects_bad_step() {
        let logits = array![[0.0, 0.0]];
        let err = finite_diff_check(&logits, &TokenSeq::new(vec![0]), &BleuConfig::uniform(1), false, 0.0, FdEntries::All, 0);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn clipped_terms_contribute_flat_branch() {
        // a reference with the same word three times clips every term
        let logits = array![[0.2, -0.3], [0.5, 0.1]];
        let reference = TokenSeq::new(vec![0, 0, 0]);
        let r = finite_diff_check(&logits, &reference, &BleuConfig::uniform(1), false, 1e-5, FdEntries::All, 0).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn gradient_vanishes_as_logits_concentrate() {
        let mut rng = stream_rng(3, 0);
        let mut checked = 0;
        while checked < 20 {
            let logits = Array2::from_shape_simple_fn((4, 5), || rng.sample::<f64, _>(StandardNormal));
            // strict argmax: the top logit leads the runner-up by at least 0.5
            let clear = logits.rows().into_iter().all(|row| {
                let mut sorted = row.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                sorted[0] - sorted[1] >= 0.5
            });
            if !clear {
                continue;
            }
            checked += 1;
            let reference: TokenSeq = (0..4).map(|_| rng.gen_range(0..5)).collect();
            let cfg = BleuConfig::uniform(2);
            let norm = |z: &Array2<f64>| {
                let g = grad_lb(z, &reference, &cfg, true).unwrap();
                g.grad_logits.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            assert!(norm(&logits.mapv(|z| 10.0 * z)) < norm(&logits));
        }
    }

    #[test]
    fn small_suite_passes_and_corruption_is_caught() {
        let suite = GradcheckSuite {
            instances: 10,
            ..GradcheckSuite::default()
        };
        let report = suite.run().unwrap();
        assert!(report.passed(1e-4, 1e-9), "{report:?}");
        assert_eq!(report, suite.run().unwrap());

        let broken = GradcheckSuite {
            corrupt: Some(1e-2),
            ..suite
        };
        assert!(!broken.run().unwrap().passed(1e-4, 1e-9));
    }

    #[test]
    fn loss_is_negated_objective() {
        let g = grad_lb(&array![[0.0, 1.0]], &TokenSeq::new(vec![1]), &BleuConfig::uniform(1), false).unwrap();
        let loss = g.clone().into_loss();
        assert_eq!(loss.objective_value, -g.objective_value);
        assert_eq!(loss.grad_logits, g.grad_logits.mapv(|x| -x));
    }

    #[test]
    fn f32_gradient_close_to_f64() {
        let z64 = array![[0.3, -0.1, 0.7], [1.2, 0.4, -0.5]];
        let z32 = z64.mapv(|x| x as f32);
        let reference = TokenSeq::new(vec![2, 0]);
        let cfg = BleuConfig::uniform(2);
        let a = grad_lb(&z64, &reference, &cfg, false).unwrap();
        let b = grad_lb(&z32, &reference, &cfg, false).unwrap();
        for (x, y) in a.grad_logits.iter().zip(b.grad_logits.iter()) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
