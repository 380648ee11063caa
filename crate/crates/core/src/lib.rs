//! Regularized learning from generalized data.
//!
//! Training data are linear functionals (point values, Laplacian values,
//! quadrature integrals) paired with outputs. Minimizers of regularized
//! multi-loss empirical risks are computed over reproducing-kernel
//! expansions, feature expansions, or small sigmoid networks, and their
//! convergence as the data grow is checked by sweep diagnostics.

pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod kernel;
pub mod loss;
pub mod network;
pub mod quadrature;
pub mod risk;
pub mod solution;
pub mod solver;

pub use error::{Error, Result};
pub use functional::{
    dual_distance, dual_norm, epsilon_net_size, pair, ClosedForm, Functional, FunctionalEval, FunctionalSet,
};
pub use kernel::{
    bessel::bessel_k, eval_kernel, eval_op_kernel, gram, nystrom_features, DiffOp, FeatureMap, KernelSpec, Point,
};
pub use loss::{Loss, LossKind, MultiLoss, ScalarLoss};
pub use network::Network;
pub use risk::{empirical_risk, expected_risk, DataBlock, ExpectedRiskOracle, GeneralizedDataset};
pub use solution::{Representation, Solution};
pub use solver::{
    adaptive_lambda, objective, solve, solve_douglas_rachford, solve_feature_pnorm, solve_model_class, solve_prox_grad,
    solve_subgradient, solve_tikhonov, verify_representer, DrParams, Method, ModelClass, Regularizer, SolverConfig,
};
