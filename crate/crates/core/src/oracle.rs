//! Ground-truth expectations under `x ~ p`: exhaustive enumeration for tiny
//! instances and seeded Monte-Carlo otherwise.
//!
//! Sampling is split into fixed-size chunks. Chunk `k` draws from a ChaCha8
//! stream selected by `(seed, k)` and the per-chunk moments are merged in
//! chunk order, so estimates are bit-identical for any thread count.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bleu::{bleu, count_overlap, BleuConfig};
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Scalar};
use crate::text::{DistMatrix, TokenSeq};

/// Largest outcome count the exhaustive oracle will enumerate by default.
pub const DEFAULT_ENUM_CAP: u64 = 1_000_000;

/// Samples per RNG stream.
pub const SAMPLE_CHUNK: usize = 4096;

const ENUM_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactExpectation {
    pub value: f64,
    #[serde(rename = "outcomes")]
    pub outcomes_enumerated: u64,
}

/// ChaCha8 generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a tag into a seed (SplitMix64 finalizer) to get an independent
/// seed for a sub-task.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Running count, mean and sum of squared deviations (Welford), mergeable
/// with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Per-row inverse-CDF sampler over a probability matrix.
#[derive(Debug, Clone)]
pub struct RowSampler {
    cdf: Array2<f64>,
}

impl RowSampler {
    pub fn new<T: Scalar>(p: &DistMatrix<T>) -> Self {
        let mut cdf = p.probs().mapv(Scalar::as_f64);
        for mut row in cdf.rows_mut() {
            let mut acc = 0.0;
            for x in row.iter_mut() {
                acc += *x;
                *x = acc;
            }
        }
        RowSampler { cdf }
    }

    pub fn len(&self) -> usize {
        self.cdf.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.nrows() == 0
    }

    /// Fills `out` with one draw per row.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        for row in self.cdf.rows() {
            let row = row.as_slice().expect("standard layout");
            let total = row[row.len() - 1];
            let u = rng.gen::<f64>() * total;
            let idx = row.partition_point(|&c| c <= u).min(row.len() - 1);
            out.push(idx);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenSeq {
        let mut out = Vec::with_capacity(self.len());
        self.sample_into(rng, &mut out);
        TokenSeq::new(out)
    }
}

/// Draws each position independently from its row of `p`.
pub fn sample_candidate<T: Scalar, R: Rng + ?Sized>(p: &DistMatrix<T>, rng: &mut R) -> TokenSeq {
    RowSampler::new(p).sample(rng)
}

/// Seeded Monte-Carlo mean of `f(x)` for `x ~ p`.
pub fn mc_expectation<T, F>(p: &DistMatrix<T>, samples: u64, seed: u64, f: F) -> Result<McEstimate>
where
    T: Scalar,
    F: Fn(&[usize]) -> f64 + Sync,
{
    if samples == 0 {
        return Err(Error::InvalidConfig("at least one sample is required".into()));
    }
    let sampler = RowSampler::new(p);
    let chunks = samples.div_ceil(SAMPLE_CHUNK as u64);
    let partial: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let take = (samples - k * SAMPLE_CHUNK as u64).min(SAMPLE_CHUNK as u64);
            let mut moments = Moments::default();
            let mut buf = Vec::with_capacity(sampler.len());
            for _ in 0..take {
                sampler.sample_into(&mut rng, &mut buf);
                moments.push(f(&buf));
            }
            moments
        })
        .collect();
    let total = partial.into_iter().fold(Moments::default(), Moments::merge);
    Ok(McEstimate {
        mean: total.mean,
        std_error: total.std_error(),
        samples,
        seed,
    })
}

pub fn mc_expected_bleu<T: Scalar>(
    p: &DistMatrix<T>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_reference(p, reference)?;
    cfg.effective_weights(p.len())?;
    mc_expectation(p, samples, seed, |x| {
        bleu::<f64>(&TokenSeq::new(x.to_vec()), reference, cfg)
            .map(|b| b.score)
            .unwrap_or(f64::NAN)
    })
}

fn check_reference<T: Scalar>(p: &DistMatrix<T>, reference: &TokenSeq) -> Result<()> {
    if p.is_empty() || reference.is_empty() {
        return Err(Error::EmptyText);
    }
    reference.check_range(p.vocab_size())
}

fn outcome_count<T: Scalar>(p: &DistMatrix<T>, cap: u64) -> Result<u64> {
    let outcomes = (p.vocab_size() as u128)
        .checked_pow(p.len() as u32)
        .unwrap_or(u128::MAX);
    if outcomes > cap as u128 {
        return Err(Error::InstanceTooLarge { outcomes, cap });
    }
    Ok(outcomes as u64)
}

/// `sum_x Prob(x) f(x)` over all `v^len` candidates.
pub fn exhaustive_expectation<T, F>(p: &DistMatrix<T>, cap: u64, f: F) -> Result<ExactExpectation>
where
    T: Scalar,
    F: Fn(&[usize]) -> f64 + Sync,
{
    let outcomes = outcome_count(p, cap)?;
    let probs = p.probs().mapv(Scalar::as_f64);
    let (len, v) = probs.dim();
    let chunks = outcomes.div_ceil(ENUM_CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let start = k * ENUM_CHUNK;
            let end = (start + ENUM_CHUNK).min(outcomes);
            // position 0 is the most significant digit
            let mut digits = vec![0usize; len];
            let mut rest = start;
            for d in digits.iter_mut().rev() {
                *d = (rest % v as u64) as usize;
                rest /= v as u64;
            }
            let mut terms = Vec::with_capacity((end - start) as usize);
            for _ in start..end {
                let prob: f64 = digits.iter().enumerate().map(|(t, &m)| probs[[t, m]]).product();
                if prob > 0.0 {
                    terms.push(prob * f(&digits));
                }
                for d in digits.iter_mut().rev() {
                    *d += 1;
                    if *d < v {
                        break;
                    }
                    *d = 0;
                }
            }
            pairwise_sum(&terms)
        })
        .collect();
    Ok(ExactExpectation {
        value: pairwise_sum(&partial),
        outcomes_enumerated: outcomes,
    })
}

/// Exact expected clipped overlap of order `n`.
pub fn exhaustive_expected_overlap<T: Scalar>(
    p: &DistMatrix<T>,
    reference: &TokenSeq,
    n: usize,
    cap: u64,
) -> Result<ExactExpectation> {
    check_reference(p, reference)?;
    exhaustive_expectation(p, cap, |x| count_overlap(x, reference, n) as f64)
}

/// Exact expected sentence BLEU.
pub fn exhaustive_expected_bleu<T: Scalar>(
    p: &DistMatrix<T>,
    reference: &TokenSeq,
    cfg: &BleuConfig,
    cap: u64,
) -> Result<ExactExpectation> {
    check_reference(p, reference)?;
    cfg.effective_weights(p.len())?;
    exhaustive_expectation(p, cap, |x| {
        bleu::<f64>(&TokenSeq::new(x.to_vec()), reference, cfg)
            .map(|b| b.score)
            .unwrap_or(f64::NAN)
    })
}
