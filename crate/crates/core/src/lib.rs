//! Machine minimization for deadline scheduling: exact offline optima,
//! online policies and their composites, lower-bound generators and an
//! experiment harness.

pub mod adversary;
pub mod composite;
pub mod engine;
pub mod flow;
pub mod format;
pub mod harness;
pub mod logn;
pub mod model;
pub mod optimum;

pub use model::{
    Instance, Job, JobId, JobState, ModelError, NonpreemptiveSchedule, PreemptiveSchedule, Rational, Tightness, Time,
};
