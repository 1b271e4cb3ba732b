//! Waiting times, drop flags and the scalar objective.
//!
//! Every scheduler in this crate (heuristics, brute force, both GA
//! encodings and the neural model) is scored by [`evaluate`], so their
//! objectives are directly comparable.
//!
//! For a serving order `x` the task at position `j` waits for the processing
//! times of all earlier positions. A task is dropped when its deadline is
//! strictly tighter than waiting + processing + solver execution time.
//! Dropped tasks still hold their server slot (their processing time keeps
//! delaying successors); see [`DropSemantics`] for the opt-in alternative.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};
use crate::task::{BinaryAssignment, DropSemantics, EvaluationContext, ProblemInstance, Schedule};

/// Per-task and aggregate results for one (instance, schedule, context).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Waiting time per task index (not per position).
    pub waiting_times: Vec<f64>,
    /// Waiting time divided by the instance's total processing time.
    pub normalized_waiting: Vec<f64>,
    /// True where the task misses its deadline.
    pub drop_flags: Vec<bool>,
    /// Fraction of dropped tasks.
    pub drop_ratio: f64,
    /// Mean normalized waiting over non-dropped tasks, divided by N.
    pub avg_waiting: f64,
    /// `lambda * drop_ratio + (1 - lambda) * avg_waiting`.
    pub objective: f64,
}

fn check_sizes(instance: &ProblemInstance, sched: &Schedule) -> Result<()> {
    if instance.len() != sched.len() {
        return Err(SchedError::SizeMismatch {
            instance: instance.len(),
            schedule: sched.len(),
        });
    }
    Ok(())
}

/// Waiting time per task index: the task at serving position `j` waits for
/// the summed processing times of positions before `j`, regardless of
/// whether those tasks end up dropped.
pub fn waiting_times(instance: &ProblemInstance, sched: &Schedule) -> Result<Vec<f64>> {
    check_sizes(instance, sched)?;
    let tasks = instance.tasks();
    let mut waits = vec![0.0; tasks.len()];
    let mut elapsed = 0.0;
    for &i in sched.order() {
        waits[i] = elapsed;
        elapsed += tasks[i].processing_time;
    }
    Ok(waits)
}

/// Drop flag per task index under the given context.
pub fn drop_flags(
    instance: &ProblemInstance,
    sched: &Schedule,
    ctx: &EvaluationContext,
) -> Result<Vec<bool>> {
    check_sizes(instance, sched)?;
    let n = instance.len();
    let mut waits = vec![0.0; n];
    let mut drops = vec![false; n];
    serve_pass(instance, sched.order(), ctx, &mut waits, &mut drops);
    Ok(drops)
}

/// The single serving pass every evaluation route shares, so objectives
/// computed with and without a full report round identically.
fn serve_pass(
    instance: &ProblemInstance,
    order: &[usize],
    ctx: &EvaluationContext,
    waits: &mut [f64],
    drops: &mut [bool],
) {
    let tasks = instance.tasks();
    let exec = ctx.exec_time_units();
    let mut elapsed = 0.0;
    for &i in order {
        let t = &tasks[i];
        waits[i] = elapsed;
        let dropped = t.deadline < elapsed + t.processing_time + exec;
        drops[i] = dropped;
        let occupies_slot = match ctx.drop_semantics {
            DropSemantics::HoldSlot => true,
            DropSemantics::ReleaseSlot => !dropped,
        };
        if occupies_slot {
            elapsed += t.processing_time;
        }
    }
}

/// Full evaluation of one serving order.
pub fn evaluate(
    instance: &ProblemInstance,
    sched: &Schedule,
    ctx: &EvaluationContext,
) -> Result<EvaluationReport> {
    check_sizes(instance, sched)?;
    ctx.validate()?;
    let n = instance.len();
    let total_p = instance.total_processing_time();
    if total_p <= 0.0 {
        return Err(SchedError::ZeroProcessingTime);
    }

    let mut waits = vec![0.0; n];
    let mut drops = vec![false; n];
    serve_pass(instance, sched.order(), ctx, &mut waits, &mut drops);

    let normalized: Vec<f64> = waits.iter().map(|w| w / total_p).collect();
    let dropped_count = drops.iter().filter(|&&d| d).count();
    let drop_ratio = dropped_count as f64 / n as f64;
    let avg_waiting = normalized
        .iter()
        .zip(&drops)
        .map(|(&wn, &d)| if d { 0.0 } else { wn })
        .sum::<f64>()
        / n as f64;
    let objective = ctx.lambda * drop_ratio + (1.0 - ctx.lambda) * avg_waiting;

    Ok(EvaluationReport {
        waiting_times: waits,
        normalized_waiting: normalized,
        drop_flags: drops,
        drop_ratio,
        avg_waiting,
        objective,
    })
}

/// Evaluate a schedule given as an assignment matrix. Identical report to
/// evaluating the equivalent permutation.
pub fn evaluate_matrix(
    instance: &ProblemInstance,
    assignment: &BinaryAssignment,
    ctx: &EvaluationContext,
) -> Result<EvaluationReport> {
    let sched = assignment.to_schedule()?;
    evaluate(instance, &sched, ctx)
}

/// Objective only, without building a report. Used in solver inner loops;
/// bit-identical to `evaluate(..).objective`.
pub(crate) fn objective_of_order(
    instance: &ProblemInstance,
    order: &[usize],
    ctx: &EvaluationContext,
) -> f64 {
    let n = instance.len();
    let total_p = instance.total_processing_time();
    let mut waits = vec![0.0; n];
    let mut drops = vec![false; n];
    serve_pass(instance, order, ctx, &mut waits, &mut drops);
    // Accumulate in task-index order, exactly as `evaluate` does, so the
    // two routes round identically (skipped zero terms are exact).
    let mut dropped_count = 0usize;
    let mut kept_normalized = 0.0;
    for (&w, &d) in waits.iter().zip(&drops) {
        if d {
            dropped_count += 1;
        } else {
            kept_normalized += w / total_p;
        }
    }
    let drop_ratio = dropped_count as f64 / n as f64;
    let avg_waiting = kept_normalized / n as f64;
    ctx.lambda * drop_ratio + (1.0 - ctx.lambda) * avg_waiting
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{Task, TaskCatalog};

    fn instance_of(specs: &[(f64, f64)]) -> ProblemInstance {
        let tasks = specs
            .iter()
            .map(|&(p, d)| Task {
                type_id: 0,
                arrival_time: 0.0,
                processing_time: p,
                deadline: d,
            })
            .collect();
        ProblemInstance::new(tasks).unwrap()
    }

    #[test]
    fn waiting_times_telescoping() {
        let inst = instance_of(&[(10.0, 1e9), (20.0, 1e9), (30.0, 1e9)]);
        let w = waiting_times(&inst, &Schedule::identity(3)).unwrap();
        assert_eq!(w, vec![0.0, 10.0, 30.0]);
        let sched = Schedule::new(vec![2, 0, 1]).unwrap();
        let w = waiting_times(&inst, &sched).unwrap();
        assert_eq!(w, vec![30.0, 40.0, 0.0]);
    }

    #[test]
    fn single_task_waits_nothing() {
        let inst = instance_of(&[(10.0, 50.0)]);
        let w = waiting_times(&inst, &Schedule::identity(1)).unwrap();
        assert_eq!(w, vec![0.0]);
    }

    #[test]
    fn drop_condition_is_strict() {
        let mk = |d: f64, exec: f64| {
            let inst = instance_of(&[(30.0, 1e9), (30.0, d)]);
            let ctx = EvaluationContext {
                solver_exec_seconds: exec,
                ..EvaluationContext::default()
            };
            drop_flags(&inst, &Schedule::identity(2), &ctx).unwrap()[1]
        };
        // waiting 30, processing 30.
        assert!(mk(50.0, 0.0)); // 50 < 60
        assert!(!mk(60.0, 0.0)); // boundary: 60 < 60 is false
        assert!(mk(60.0, 5.0)); // exec time shifts the condition
    }

    #[test]
    fn no_drop_average_example() {
        let inst = instance_of(&[(10.0, 1e9), (20.0, 1e9), (30.0, 1e9)]);
        let ctx = EvaluationContext::new(0.5);
        let rep = evaluate(&inst, &Schedule::identity(3), &ctx).unwrap();
        assert_eq!(rep.drop_ratio, 0.0);
        let expected_w = (0.0 + 10.0 / 60.0 + 30.0 / 60.0) / 3.0;
        assert!((rep.avg_waiting - expected_w).abs() < 1e-15);
        assert!((rep.objective - 0.5 * expected_w).abs() < 1e-15);
        assert!((rep.avg_waiting - 0.2222222222222222).abs() < 1e-12);
        assert!((rep.objective - 0.1111111111111111).abs() < 1e-12);
    }

    #[test]
    fn dropped_task_excluded_from_waiting_average() {
        // First-served task has an impossible deadline, so it drops; its
        // processing time still delays the others.
        let inst = instance_of(&[(10.0, 5.0), (20.0, 1e9), (30.0, 1e9)]);
        let rep = evaluate(&inst, &Schedule::identity(3), &EvaluationContext::default()).unwrap();
        assert_eq!(rep.drop_flags, vec![true, false, false]);
        assert!((rep.drop_ratio - 1.0 / 3.0).abs() < 1e-15);
        let expected_w = (10.0 / 60.0 + 30.0 / 60.0) / 3.0;
        assert!((rep.avg_waiting - expected_w).abs() < 1e-15);
    }

    #[test]
    fn two_task_enumeration_prefers_short_first() {
        // A = (30, 50), B = (10, 50), lambda = 0.9.
        let inst = instance_of(&[(30.0, 50.0), (10.0, 50.0)]);
        let ctx = EvaluationContext::default();
        let ab = evaluate(&inst, &Schedule::identity(2), &ctx).unwrap();
        let ba = evaluate(&inst, &Schedule::new(vec![1, 0]).unwrap(), &ctx).unwrap();
        assert!((ab.objective - 0.0375).abs() < 1e-15);
        assert!((ba.objective - 0.0125).abs() < 1e-15);
        assert!(ba.objective < ab.objective);
    }

    #[test]
    fn matrix_and_order_views_agree() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[6, 0, 8, 3, 1]).unwrap();
        let sched = Schedule::new(vec![4, 0, 3, 1, 2]).unwrap();
        let ctx = EvaluationContext::default();
        let direct = evaluate(&inst, &sched, &ctx).unwrap();
        let via_matrix =
            evaluate_matrix(&inst, &BinaryAssignment::from_schedule(&sched), &ctx).unwrap();
        assert_eq!(direct, via_matrix);
    }

    #[test]
    fn fast_objective_matches_report() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[6, 0, 8, 3, 1, 5, 2]).unwrap();
        let sched = Schedule::new(vec![4, 0, 3, 1, 2, 6, 5]).unwrap();
        let ctx = EvaluationContext {
            solver_exec_seconds: 1.5,
            ..EvaluationContext::default()
        };
        let rep = evaluate(&inst, &sched, &ctx).unwrap();
        let fast = objective_of_order(&inst, sched.order(), &ctx);
        assert_eq!(rep.objective.to_bits(), fast.to_bits());
        let release = EvaluationContext {
            drop_semantics: DropSemantics::ReleaseSlot,
            ..ctx
        };
        let rep = evaluate(&inst, &sched, &release).unwrap();
        let fast = objective_of_order(&inst, sched.order(), &release);
        assert_eq!(rep.objective.to_bits(), fast.to_bits());
    }

    #[test]
    fn release_slot_semantics_frees_time() {
        // Task 0 drops immediately; under ReleaseSlot its slot is skipped.
        let inst = instance_of(&[(10.0, 5.0), (20.0, 1e9)]);
        let ctx = EvaluationContext {
            drop_semantics: DropSemantics::ReleaseSlot,
            ..EvaluationContext::default()
        };
        let rep = evaluate(&inst, &Schedule::identity(2), &ctx).unwrap();
        assert_eq!(rep.waiting_times, vec![0.0, 0.0]);
        let hold = evaluate(&inst, &Schedule::identity(2), &EvaluationContext::default()).unwrap();
        assert_eq!(hold.waiting_times, vec![0.0, 10.0]);
    }

    #[test]
    fn size_mismatch_rejected() {
        let inst = instance_of(&[(10.0, 50.0)]);
        let sched = Schedule::identity(2);
        assert!(evaluate(&inst, &sched, &EvaluationContext::default()).is_err());
    }
}
