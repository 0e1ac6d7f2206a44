//! Desk-scale experiments around the codec: the contraction-plus-noise
//! training model, compression perturbations, rework cost against sparse
//! and partitioned baselines, the bucket ablation and the coupling probe.

pub mod ablation;
pub mod baselines;
pub mod corpus;
pub mod coupling;
pub mod logreg;
pub mod rework;
pub mod sim;
pub mod stats;
pub mod task;
