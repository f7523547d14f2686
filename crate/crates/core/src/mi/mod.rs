//! Mutual-information lower bounds, negative sampling and critic fitting.

mod critic;
mod estimators;
mod mine;
mod sampling;

pub use critic::PairCritic;
pub use estimators::{dv_estimate, infonce_estimate, jsd_estimate, EstimatorKind, ScoreMatrix};
pub use mine::{mine_fit, CurvePoint, MineConfig, MineFit};
pub use sampling::{NegativeSamplingConfig, NegativeSource, PairScores};
