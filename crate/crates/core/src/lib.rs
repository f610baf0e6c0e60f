//! Exact BLEU, a differentiable lower bound on expected BLEU under
//! per-position word distributions, its gradient with respect to logits,
//! and the sampling and enumeration oracles used to verify both.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the gradient checks and trainers use.
//!
//! ```
//! use bleubound::{lb_bleu, BleuConfig, Dist, TokenSeq};
//! use ndarray::array;
//!
//! let p = Dist::from_logits(array![[0.0, 0.0], [0.0, 0.0]]).unwrap();
//! let reference = TokenSeq::new(vec![0, 1]);
//! let lb = lb_bleu(&p, &reference, &BleuConfig::uniform(1), false).unwrap();
//! assert!((lb.aggregate - 2.0 / 3.0).abs() < 1e-12);
//! ```

pub mod bleu;
pub mod error;
pub mod grad;
pub mod lb;
pub mod oracle;
pub mod scalar;
pub mod text;
pub mod train;

pub use bleu::{
    bleu, brevity_penalty, corpus_bleu, count_overlap, ngram_stats, overlap_matrix_form, Accumulator,
    BleuBreakdown, BleuConfig, NGramStats,
};
pub use error::{Error, Result};
pub use grad::{
    fd_compare, finite_diff_check, grad_lb, grad_lb_indexed, kink_margin, lb_objective, FdEntries, FdReport,
    GradResult, GradWorkspace, GradcheckSuite, SuiteReport,
};
pub use lb::{
    clipped_ratio, convexity_probe, lb_bleu, lb_bleu_indexed, lb_overlap, lb_overlap_component,
    smoothed_precision, LbResult, RefNGram, RefNGramIndex,
};
pub use oracle::{
    exhaustive_expected_bleu, exhaustive_expected_overlap, mc_expected_bleu, sample_candidate, ExactExpectation,
    McEstimate, DEFAULT_ENUM_CAP,
};
pub use scalar::Scalar;
pub use text::{argmax_decode, softmax_rows, to_onehot, DistMatrix, OneHotSeq, TokenSeq, Vocab};

pub type Dist = DistMatrix<f64>;
pub type Dist32 = DistMatrix<f32>;
pub type Breakdown = BleuBreakdown<f64>;
pub type Breakdown32 = BleuBreakdown<f32>;
pub type Bound = LbResult<f64>;
pub type Bound32 = LbResult<f32>;
pub type Gradient = GradResult<f64>;
pub type Gradient32 = GradResult<f32>;
pub type Stats = NGramStats<f64>;
