//! Synthetic data with known information content, and evaluation probes.

mod gaussian;
mod probe;
mod toy;

pub use gaussian::{analytic_gaussian_mi, sample_gaussian_pairs, GaussianPairSpec};
pub use probe::{train_probe, LabeledFeatures, ProbeKind, ProbeResult, ProbeSpec};
pub use toy::{sample_toy_images, ToyImageSpec};
