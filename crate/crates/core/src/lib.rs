//! Deadline-aware single-queue task scheduling workbench.
//!
//! An edge server receives a batch of typed tasks, each with a fixed
//! processing time and a relative deadline, and must pick a serving order.
//! The quality of an order is `lambda * D + (1 - lambda) * w`, where `D` is
//! the fraction of tasks that miss their deadline and `w` is the normalized
//! average waiting time of the served tasks. Crucially, the time the solver
//! itself spends computing the order counts against every deadline, so a
//! slow solver can produce a "better" order that performs worse in practice.
//!
//! The crate provides:
//!
//! - [`task`]: task types, the 9-entry catalog, problem instances, schedules
//!   and the permutation-matrix view of a schedule.
//! - [`evaluator`]: waiting times, drop flags and the scalar objective,
//!   the single source of truth used by every scheduler below.
//! - [`baselines`]: FIFO / shortest-task-first / shortest-deadline-first
//!   heuristics and an exhaustive brute-force oracle for small instances.
//! - [`ga`]: a genetic algorithm over permutation chromosomes and over flat
//!   binary assignment matrices (with repair).
//! - [`dataset`]: synthetic supervised dataset generation with GA-optimal
//!   target orderings, serialized as JSON lines.
//! - [`neural`]: an LSTM encoder-decoder scheduler with count-based masking,
//!   trained from scratch (manual backprop, Adam) on the generated dataset.
//! - [`metrics`]: soft accuracy / precision / recall and weighted F1.
//! - [`harness`]: the execution-time-aware benchmark that measures each
//!   scheduler's wall clock and re-evaluates drop ratios with that latency
//!   folded into the deadlines.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod ga;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod task;

pub use error::{Result, SchedError};
pub use evaluator::{evaluate, EvaluationReport};
pub use task::{
    BinaryAssignment, EvaluationContext, ProblemInstance, Schedule, Task, TaskCatalog, TaskType,
    NUM_TASK_TYPES,
};
