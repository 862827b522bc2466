//! Constrained-learning laboratory: constraint maps over finite label spaces,
//! constrained conditional models, exact and empirical risk/violation
//! functionals, training, and complexity estimators.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ccm;
pub mod complexity;
pub mod constraint;
pub mod error;
pub mod format;
pub mod lab;
pub mod lambert;
pub mod losses;
pub mod numeric;
pub mod scoring;
pub mod synth;
pub mod training;

pub use constraint::{
    ConstraintMap, Dataset, FiniteDistribution, Instance, LabelSet, LabelSpace, LabeledSample,
    Point,
};
pub use error::{Error, Result};
pub use losses::{LossKind, RiskReport};
pub use scoring::{CcmModel, LinearScorer, Mu, ScoreTable, Scorer};
