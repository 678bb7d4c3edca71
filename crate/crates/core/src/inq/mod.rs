//! Incremental network quantization: weight partition, group-wise
//! quantization and re-training, repeated over a schedule of portions.

mod driver;
mod partition;
mod schedule;

pub use driver::{
    default_epochs_per_step, inq_step, resume_inq, run_inq, InqConfig, InqOutcome, InqState,
    StepMetrics, StepReport,
};
pub use partition::{partition_pruning, partition_random, target_count, PartitionStrategy};
pub use schedule::{preset, preset_schedules, InqSchedule};
