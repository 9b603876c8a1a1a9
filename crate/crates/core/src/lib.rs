//! Numerical laboratory for twisted quantitative recurrence on interval maps.

pub mod correlation;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod mc;
pub mod measure;
pub mod numeric;
pub mod rational;
pub mod recurrence;
pub mod schedule;
pub mod twist;

pub use dynamics::MapSystem;
pub use error::{Result, TrlError};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use measure::MeasureModel;
pub use rational::Rational;
pub use schedule::TargetSchedule;
pub use twist::TwistSpec;
