//! Unsupervised trajectory filtering and training-set assembly.
//!
//! A trajectory is kept as *plausible* unless the environment errored, some
//! step is unparsable, the model declared the task impossible, or the final
//! answer is a refusal. Plausible trajectories are then sampled 1:1:2 into
//! initial, final and intermediate step examples.

mod classify;
mod sample;

pub use classify::{
    classify_trajectory, filter_plausible, merge_with_fallback, FilterStatus, FilterVerdict, MergeError, PlausibleSet,
    StatusCounts,
};
pub use sample::{
    assemble_mixture, balanced_sample, read_training_set, write_training_set, Domain, MixtureError, MixtureKind,
    Origin, TrainingExample, TrainingSet,
};
