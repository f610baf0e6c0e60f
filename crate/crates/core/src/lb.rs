//! Differentiable lower bound on expected BLEU.
//!
//! For candidate position `i` and order `n` the bound on the expected
//! overlap component is
//!
//! ```text
//! sum_g  q_i(g) * min(1, count_R(g) / (1 + sum_{l != i} q_l(g)))
//! q_l(g) = prod_k probs[l + k, g_k]
//! ```
//!
//! where `g` runs over n-grams. Any n-gram absent from the reference has a
//! zero numerator, so only the distinct reference n-grams are visited. The
//! per-order bounds are divided by the number of candidate positions and
//! combined with the BLEU weights in a geometric mean (no brevity penalty).
//!
//! The bound is proven for references without repeated words. Repeated
//! reference n-grams are accepted (their multiplicity enters the numerator)
//! but the result is flagged via [`LbResult::proven_regime`].

use serde::Serialize;

use crate::bleu::{brevity_penalty, weighted_geometric_mean, BleuConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::{DistMatrix, TokenSeq};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefNGram {
    pub ids: Vec<usize>,
    pub count: usize,
}

/// Distinct reference n-grams per order with their multiplicities, in order
/// of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefNGramIndex {
    orders: Vec<Vec<RefNGram>>,
    ref_len: usize,
    unique_words: bool,
}

impl RefNGramIndex {
    pub fn new(reference: &TokenSeq, max_order: usize) -> Self {
        let ids = reference.ids();
        let orders = (1..=max_order)
            .map(|n| {
                let mut grams: Vec<RefNGram> = Vec::new();
                if ids.len() >= n {
                    for w in ids.windows(n) {
                        match grams.iter_mut().find(|g| g.ids == w) {
                            Some(g) => g.count += 1,
                            None => grams.push(RefNGram {
                                ids: w.to_vec(),
                                count: 1,
                            }),
                        }
                    }
                }
                grams
            })
            .collect();
        RefNGramIndex {
            orders,
            ref_len: ids.len(),
            unique_words: reference.all_unique(),
        }
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn ref_len(&self) -> usize {
        self.ref_len
    }

    /// True when no reference word repeats, the regime where the bound is
    /// proven.
    pub fn unique_words(&self) -> bool {
        self.unique_words
    }

    /// Distinct n-grams of order `n` (empty when the reference is shorter).
    pub fn grams(&self, n: usize) -> &[RefNGram] {
        n.checked_sub(1)
            .and_then(|k| self.orders.get(k))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn check_ids(&self, vocab_size: usize) -> Result<()> {
        for gram in self.orders.iter().flatten() {
            if let Some(&id) = gram.ids.iter().find(|&&id| id >= vocab_size) {
                return Err(Error::IdOutOfRange { id, vocab_size });
            }
        }
        Ok(())
    }
}

/// Probability that positions `l..l+n` emit `gram`.
#[inline]
pub(crate) fn gram_prob<T: Scalar>(probs: &ndarray::Array2<T>, l: usize, gram: &[usize]) -> T {
    gram.iter()
        .enumerate()
        .fold(T::one(), |acc, (k, &m)| acc * probs[[l + k, m]])
}

/// `q_l(g)` for every candidate position `l`.
pub(crate) fn gram_probs<T: Scalar>(probs: &ndarray::Array2<T>, gram: &[usize], positions: usize) -> Vec<T> {
    (0..positions).map(|l| gram_prob(probs, l, gram)).collect()
}

/// `sum_{l != i} q[l]`, summed directly so the value does not pick up the
/// cancellation error of `total - q[i]`.
#[inline]
pub(crate) fn others_sum<T: Scalar>(q: &[T], i: usize) -> T {
    q.iter()
        .enumerate()
        .filter(|&(l, _)| l != i)
        .fold(T::zero(), |acc, (_, &x)| acc + x)
}

fn positions_for(p_len: usize, n: usize) -> Result<usize> {
    if n == 0 || p_len < n {
        return Err(Error::LengthTooShort { len: p_len, order: n });
    }
    Ok(p_len - n + 1)
}

/// Bound on the expected overlap contribution of candidate position `i`.
pub fn lb_overlap_component<T: Scalar>(
    p: &DistMatrix<T>,
    index: &RefNGramIndex,
    n: usize,
    i: usize,
) -> Result<T> {
    let positions = positions_for(p.len(), n)?;
    if i >= positions {
        return Err(Error::PositionOutOfRange {
            position: i,
            order: n,
            len: p.len(),
        });
    }
    index.check_ids(p.vocab_size())?;
    let probs = p.probs();
    let mut total = T::zero();
    for gram in index.grams(n) {
        let q = gram_probs(probs, &gram.ids, positions);
        let clip = T::one().min(T::of_usize(gram.count) / (T::one() + others_sum(&q, i)));
        total = total + q[i] * clip;
    }
    Ok(total)
}

/// Bound on the expected clipped overlap of order `n`: the components summed
/// over all candidate positions. Zero when the reference is shorter than `n`.
pub fn lb_overlap<T: Scalar>(p: &DistMatrix<T>, index: &RefNGramIndex, n: usize) -> Result<T> {
    let positions = positions_for(p.len(), n)?;
    index.check_ids(p.vocab_size())?;
    let probs = p.probs();
    let mut total = T::zero();
    for gram in index.grams(n) {
        let q = gram_probs(probs, &gram.ids, positions);
        let count = T::of_usize(gram.count);
        for i in 0..positions {
            total = total + q[i] * T::one().min(count / (T::one() + others_sum(&q, i)));
        }
    }
    Ok(total)
}

/// Per-order bounds and their aggregate. Orders longer than the candidate are
/// `None` and carry no weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbResult<T> {
    pub lb_overlaps: Vec<Option<T>>,
    pub lb_precisions: Vec<Option<T>>,
    pub smoothed: Vec<Option<T>>,
    /// Weighted geometric mean of the (smoothed, if enabled) precisions.
    pub aggregate: T,
    /// `aggregate - 1`, the stated lower bound on expected BLEU.
    pub bound_value: T,
    #[serde(skip)]
    pub smoothing: bool,
    /// False when the reference repeats a word; the bound is not proven there.
    #[serde(skip)]
    pub proven_regime: bool,
    #[serde(skip)]
    pub cand_len: usize,
    #[serde(skip)]
    pub ref_len: usize,
}

impl<T: Scalar> LbResult<T> {
    /// Aggregate scaled by the brevity penalty of the fixed candidate length,
    /// for reporting next to exact BLEU.
    pub fn bp_scaled(&self) -> Result<T> {
        Ok(self.aggregate * brevity_penalty::<T>(self.cand_len, self.ref_len)?)
    }
}

pub fn lb_bleu<T: Scalar>(
    p: &DistMatrix<T>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<LbResult<T>> {
    let index = RefNGramIndex::new(reference, cfg.max_order);
    lb_bleu_indexed(p, &index, cfg, smoothing)
}

pub fn lb_bleu_indexed<T: Scalar>(
    p: &DistMatrix<T>,
    index: &RefNGramIndex,
    cfg: &BleuConfig,
    smoothing: bool,
) -> Result<LbResult<T>> {
    if p.is_empty() || index.ref_len() == 0 {
        return Err(Error::EmptyText);
    }
    if index.max_order() < cfg.max_order {
        return Err(Error::InvalidConfig("reference index built for a lower order".into()));
    }
    let len = p.len();
    let weights = cfg.effective_weights(len)?;
    let mut lb_overlaps = Vec::with_capacity(cfg.max_order);
    let mut lb_precisions = Vec::with_capacity(cfg.max_order);
    let mut smoothed = Vec::with_capacity(cfg.max_order);
    for (k, w) in weights.iter().enumerate() {
        let n = k + 1;
        if w.is_none() {
            lb_overlaps.push(None);
            lb_precisions.push(None);
            smoothed.push(None);
            continue;
        }
        let overlap = lb_overlap(p, index, n)?;
        let positions = T::of_usize(len - n + 1);
        lb_overlaps.push(Some(overlap));
        lb_precisions.push(Some(overlap / positions));
        smoothed.push(Some(smoothed_precision(overlap, len, n)));
    }
    let used = if smoothing { &smoothed } else { &lb_precisions };
    let aggregate = weighted_geometric_mean(used, &weights);
    Ok(LbResult {
        lb_overlaps,
        lb_precisions,
        smoothed,
        aggregate,
        bound_value: aggregate - T::one(),
        smoothing,
        proven_regime: index.unique_words(),
        cand_len: len,
        ref_len: index.ref_len(),
    })
}

/// Additive smoothing: `(LB[O_n] + 1) / (len - n + 2)`.
pub fn smoothed_precision<T: Scalar>(lb_overlap: T, cand_len: usize, n: usize) -> T {
    (lb_overlap + T::one()) / T::of_usize(cand_len + 2 - n)
}

/// `min(1, a / (1 + b + c.z))`, the function Jensen's inequality is applied to.
pub fn clipped_ratio<T: Scalar>(a: T, b: T, c: &[T], z: &[T]) -> T {
    let dot = c.iter().zip(z).fold(T::zero(), |acc, (&ci, &zi)| acc + ci * zi);
    T::one().min(a / (T::one() + b + dot))
}

/// Evaluates both sides of the convexity inequality for the clipped ratio on
/// the segment between `x` and `y`: returns
/// `(f(alpha x + (1 - alpha) y), alpha f(x) + (1 - alpha) f(y))`.
///
/// The inequality holds whenever `a <= 1 + b` (the clip never binds for
/// non-negative `c` and `z`), which covers every term the bound produces from
/// a reference without repeated words. Above that the clip introduces a
/// concave kink and the inequality can fail.
pub fn convexity_probe<T: Scalar>(a: T, b: T, c: &[T], x: &[T], y: &[T], alpha: T) -> Result<(T, T)> {
    if c.is_empty() || c.len() != x.len() || c.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "convexity probe dimensions c={}, x={}, y={}",
            c.len(),
            x.len(),
            y.len()
        )));
    }
    let beta = T::one() - alpha;
    let mid: Vec<T> = x.iter().zip(y).map(|(&xi, &yi)| alpha * xi + beta * yi).collect();
    let lhs = clipped_ratio(a, b, c, &mid);
    let rhs = alpha * clipped_ratio(a, b, c, x) + beta * clipped_ratio(a, b, c, y);
    Ok((lhs, rhs))
}
