//! Exact BLEU.
//!
//! Two routes to the clipped n-gram overlap are provided. [`count_overlap`]
//! counts distinct n-grams with hash maps. [`overlap_matrix_form`] goes
//! through the self-match and cross-match matrices of the one-hot encodings
//! and their column-sum counters, summing `min(1, v_y[i] / v_x[i])` over
//! candidate positions. The two are equal on every input; the matrix route
//! is the one that generalizes to distributions.

use std::collections::HashMap;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::{OneHotSeq, TokenSeq};

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    pub weights: Vec<f64>,
    pub use_bp: bool,
    /// Fail with `LengthTooShort` instead of skipping orders longer than the
    /// candidate.
    #[serde(default)]
    pub strict_short: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig::uniform(4)
    }
}

impl BleuConfig {
    /// Orders `1..=max_order` weighted `1 / max_order` each, brevity penalty on.
    pub fn uniform(max_order: usize) -> Self {
        let max_order = max_order.max(1);
        BleuConfig {
            max_order,
            weights: vec![1.0 / max_order as f64; max_order],
            use_bp: true,
            strict_short: false,
        }
    }

    pub fn with_weights(max_order: usize, weights: Vec<f64>) -> Result<Self> {
        let cfg = BleuConfig {
            max_order,
            weights,
            use_bp: true,
            strict_short: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn without_bp(mut self) -> Self {
        self.use_bp = false;
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict_short = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::InvalidConfig("max order must be at least 1".into()));
        }
        if self.weights.len() != self.max_order {
            return Err(Error::InvalidConfig(format!(
                "{} weights given for max order {}",
                self.weights.len(),
                self.max_order
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    /// Orders usable for a candidate of `cand_len` tokens, with weights
    /// renormalized over them. Errors in strict mode when an order is dropped.
    pub(crate) fn effective_weights(&self, cand_len: usize) -> Result<Vec<Option<f64>>> {
        self.validate()?;
        if self.strict_short && cand_len < self.max_order {
            return Err(Error::LengthTooShort {
                len: cand_len,
                order: self.max_order,
            });
        }
        let usable = cand_len.min(self.max_order);
        let mass: f64 = self.weights[..usable].iter().sum();
        Ok((0..self.max_order)
            .map(|k| {
                if k >= usable {
                    None
                } else if mass > 0.0 {
                    Some(self.weights[k] / mass)
                } else {
                    // every remaining weight is zero: fall back to uniform
                    Some(1.0 / usable as f64)
                }
            })
            .collect())
    }
}

/// `exp(sum_n w_n ln p_n)` over the orders that carry a weight, or zero as
/// soon as one weighted precision is zero.
pub(crate) fn weighted_geometric_mean<T: Scalar>(precisions: &[Option<T>], weights: &[Option<f64>]) -> T {
    let mut log_sum = T::zero();
    for (p, w) in precisions.iter().zip(weights) {
        if let (Some(p), Some(w)) = (p, w) {
            if *w == 0.0 {
                continue;
            }
            if *p <= T::zero() {
                return T::zero();
            }
            log_sum = log_sum + T::of(*w) * p.ln();
        }
    }
    log_sum.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuBreakdown<T> {
    pub score: T,
    pub bp: T,
    /// `None` for orders longer than the candidate.
    pub precisions: Vec<Option<T>>,
    pub overlaps: Vec<usize>,
    pub cand_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(seq: &[usize], n: usize) -> HashMap<&[usize], usize> {
    let mut counts = HashMap::new();
    if n == 0 || seq.len() < n {
        return counts;
    }
    for gram in seq.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped overlap: sum over distinct candidate n-grams of
/// `min(count in candidate, count in reference)`.
pub fn count_overlap(cand: &[usize], reference: &[usize], n: usize) -> usize {
    let ref_counts = ngram_counts(reference, n);
    ngram_counts(cand, n)
        .into_iter()
        .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum()
}

/// Match matrices and counters for one n-gram order.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramStats<T> {
    pub order: usize,
    /// `[(len_x-n+1) x (len_x-n+1)]`, entry 1 iff candidate n-grams at the two
    /// positions coincide.
    pub self_match: Array2<T>,
    /// `[(len_y-n+1) x (len_x-n+1)]`, entry `(j, i)` is 1 iff the reference
    /// n-gram at `j` equals the candidate n-gram at `i`.
    pub cross_match: Array2<T>,
    /// Column sums of `self_match`.
    pub cand_counts: Vec<T>,
    /// Column sums of `cross_match`.
    pub ref_counts: Vec<T>,
}

/// Builds both match matrices by comparing n-gram ids; the product of one-hot
/// rows over an n-gram is exactly this equality indicator.
pub fn ngram_stats<T: Scalar>(x: &OneHotSeq, y: &OneHotSeq, n: usize) -> Result<NGramStats<T>> {
    for len in [x.len(), y.len()] {
        if n == 0 || len < n {
            return Err(Error::LengthTooShort { len, order: n });
        }
    }
    let (xs, ys) = (x.ids(), y.ids());
    let lx = xs.len() - n + 1;
    let ly = ys.len() - n + 1;
    let indicator = |a: &[usize], b: &[usize]| if a == b { T::one() } else { T::zero() };

    let self_match = Array2::from_shape_fn((lx, lx), |(i, j)| indicator(&xs[i..i + n], &xs[j..j + n]));
    let cross_match = Array2::from_shape_fn((ly, lx), |(j, i)| indicator(&ys[j..j + n], &xs[i..i + n]));
    let cand_counts = self_match.columns().into_iter().map(|c| c.sum()).collect();
    let ref_counts = cross_match.columns().into_iter().map(|c| c.sum()).collect();
    Ok(NGramStats {
        order: n,
        self_match,
        cross_match,
        cand_counts,
        ref_counts,
    })
}

/// Overlap as `sum_i min(1, v_y[i] / v_x[i])`. Zero when either text is
/// shorter than `n`.
pub fn overlap_matrix_form<T: Scalar>(x: &OneHotSeq, y: &OneHotSeq, n: usize) -> T {
    match ngram_stats::<T>(x, y, n) {
        Ok(stats) => stats
            .cand_counts
            .iter()
            .zip(&stats.ref_counts)
            .map(|(&vx, &vy)| T::one().min(vy / vx))
            .sum(),
        Err(_) => T::zero(),
    }
}

/// `1` when the candidate is longer than the reference, else `exp(1 - r/c)`.
pub fn brevity_penalty<T: Scalar>(cand_len: usize, ref_len: usize) -> Result<T> {
    if cand_len == 0 || ref_len == 0 {
        return Err(Error::ZeroLength {
            cand: cand_len,
            reference: ref_len,
        });
    }
    if cand_len > ref_len {
        Ok(T::one())
    } else {
        Ok((T::one() - T::of_usize(ref_len) / T::of_usize(cand_len)).exp())
    }
}

/// Sentence-level BLEU against a single reference.
pub fn bleu<T: Scalar>(cand: &TokenSeq, reference: &TokenSeq, cfg: &BleuConfig) -> Result<BleuBreakdown<T>> {
    if cand.is_empty() || reference.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut acc = Accumulator::new(cfg.max_order);
    acc.add(cand, reference);
    acc.finish(cfg)
}

/// Micro-averaged corpus BLEU: overlaps and candidate n-gram totals are
/// summed over all pairs before forming precisions.
pub fn corpus_bleu<T: Scalar>(pairs: &[(TokenSeq, TokenSeq)], cfg: &BleuConfig) -> Result<BleuBreakdown<T>> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut acc = Accumulator::new(cfg.max_order);
    for (cand, reference) in pairs {
        if cand.is_empty() || reference.is_empty() {
            return Err(Error::EmptyText);
        }
        acc.add(cand, reference);
    }
    acc.finish(cfg)
}

/// Integer sufficient statistics; merging two accumulators is addition, so
/// corpus scoring can be split across workers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Accumulator {
    overlaps: Vec<usize>,
    totals: Vec<usize>,
    cand_len: usize,
    ref_len: usize,
}

impl Accumulator {
    pub fn new(max_order: usize) -> Self {
        Accumulator {
            overlaps: vec![0; max_order],
            totals: vec![0; max_order],
            cand_len: 0,
            ref_len: 0,
        }
    }

    pub fn add(&mut self, cand: &[usize], reference: &[usize]) {
        for (k, (o, t)) in self.overlaps.iter_mut().zip(&mut self.totals).enumerate() {
            let n = k + 1;
            *o += count_overlap(cand, reference, n);
            *t += (cand.len() + 1).saturating_sub(n);
        }
        self.cand_len += cand.len();
        self.ref_len += reference.len();
    }

    pub fn merge(mut self, other: &Accumulator) -> Self {
        for (a, b) in self.overlaps.iter_mut().zip(&other.overlaps) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn finish<T: Scalar>(&self, cfg: &BleuConfig) -> Result<BleuBreakdown<T>> {
        if cfg.max_order != self.overlaps.len() {
            return Err(Error::InvalidConfig("accumulator order differs from config".into()));
        }
        // an order is usable when at least one candidate position exists for it
        let usable = self.totals.iter().take_while(|&&t| t > 0).count();
        let weights = cfg.effective_weights(usable)?;
        let precisions: Vec<Option<T>> = self
            .overlaps
            .iter()
            .zip(&self.totals)
            .zip(&weights)
            .map(|((&o, &t), w)| w.map(|_| T::of_usize(o) / T::of_usize(t)))
            .collect();
        let bp = if cfg.use_bp {
            brevity_penalty(self.cand_len, self.ref_len)?
        } else {
            T::one()
        };
        let score = bp * weighted_geometric_mean(&precisions, &weights);
        Ok(BleuBreakdown {
            score,
            bp,
            precisions,
            overlaps: self.overlaps.clone(),
            cand_len: self.cand_len,
            ref_len: self.ref_len,
        })
    }
}
