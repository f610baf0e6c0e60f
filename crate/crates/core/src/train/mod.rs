//! Optimization drivers: the synthetic bound-maximization task and the
//! score-function baseline it is compared against.

pub mod optim;
pub mod reinforce;
pub mod toy;

pub use optim::{Adam, Optimizer, OptimizerKind};
pub use reinforce::{
    compare_gradients, cosine, exact_expected_bleu_grad, reinforce_grad, BaselineMode, CompareSettings,
    GradientComparison, ReinforceEstimate, ReinforceRow,
};
pub use toy::{gen_toy_instance, pearson, run_toy, CurvePoint, ToyConfig, ToyRun, ToySummary, CURVE_CSV_HEADER};
