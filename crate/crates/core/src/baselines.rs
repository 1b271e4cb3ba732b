//! Heuristic schedulers and an exhaustive brute-force oracle.
//!
//! The heuristics are the comparison baselines FIFO, shortest-task-first
//! and shortest-deadline-first. The oracle enumerates every permutation of
//! a small instance and is the ground truth the GA and neural schedulers
//! are validated against.

use crate::error::{Result, SchedError};
use crate::evaluator::{self, evaluate, EvaluationReport};
use crate::task::{EvaluationContext, ProblemInstance, Schedule};

/// Largest instance the oracle accepts by default (8! = 40,320 orders).
pub const DEFAULT_BRUTE_FORCE_CAP: usize = 8;

/// Serve tasks in arrival (instance) order.
pub fn fifo_order(instance: &ProblemInstance) -> Schedule {
    Schedule::identity(instance.len())
}

/// Serve tasks in ascending processing-time order; ties keep the lower
/// task index first.
pub fn stf_order(instance: &ProblemInstance) -> Schedule {
    let mut idx: Vec<usize> = (0..instance.len()).collect();
    idx.sort_by(|&a, &b| {
        instance.tasks()[a]
            .processing_time
            .partial_cmp(&instance.tasks()[b].processing_time)
            .unwrap()
    });
    Schedule::from_permutation_unchecked(idx)
}

/// Serve tasks in ascending deadline order; ties keep the lower task index
/// first.
pub fn sdf_order(instance: &ProblemInstance) -> Schedule {
    let mut idx: Vec<usize> = (0..instance.len()).collect();
    idx.sort_by(|&a, &b| {
        instance.tasks()[a]
            .deadline
            .partial_cmp(&instance.tasks()[b].deadline)
            .unwrap()
    });
    Schedule::from_permutation_unchecked(idx)
}

/// Advance `perm` to its lexicographic successor. Returns false once the
/// last permutation has been visited.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Enumerate all `n!` serving orders and return a global minimizer of the
/// objective. Orders are visited in lexicographic order and only strict
/// improvements are kept, so ties resolve to the lexicographically
/// smallest order.
pub fn brute_force_optimal(
    instance: &ProblemInstance,
    ctx: &EvaluationContext,
    max_n: usize,
) -> Result<(Schedule, EvaluationReport)> {
    let n = instance.len();
    if n > max_n {
        return Err(SchedError::InstanceTooLarge { n, max_n });
    }
    ctx.validate()?;

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_obj = evaluator::objective_of_order(instance, &perm, ctx);
    while next_permutation(&mut perm) {
        let obj = evaluator::objective_of_order(instance, &perm, ctx);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&perm);
        }
    }
    let sched = Schedule::from_permutation_unchecked(best);
    let report = evaluate(instance, &sched, ctx)?;
    Ok((sched, report))
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
    fn fifo_is_arrival_order() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[5, 2, 7]).unwrap();
        assert_eq!(fifo_order(&inst).order(), &[0, 1, 2]);
        let single = ProblemInstance::from_type_ids(&cat, &[0]).unwrap();
        assert_eq!(fifo_order(&single).order(), &[0]);
    }

    #[test]
    fn stf_sorts_by_processing_time() {
        let inst = instance_of(&[(30.0, 50.0), (10.0, 50.0), (20.0, 50.0)]);
        assert_eq!(stf_order(&inst).order(), &[1, 2, 0]);
        let ties = instance_of(&[(10.0, 50.0), (10.0, 60.0), (10.0, 70.0)]);
        assert_eq!(stf_order(&ties).order(), &[0, 1, 2]);
        let sorted = instance_of(&[(10.0, 50.0), (20.0, 50.0), (30.0, 50.0)]);
        assert_eq!(stf_order(&sorted).order(), &[0, 1, 2]);
    }

    #[test]
    fn sdf_sorts_by_deadline() {
        let inst = instance_of(&[(10.0, 150.0), (10.0, 50.0), (10.0, 100.0)]);
        assert_eq!(sdf_order(&inst).order(), &[1, 2, 0]);
        let ties = instance_of(&[(10.0, 50.0), (20.0, 50.0), (30.0, 50.0)]);
        assert_eq!(sdf_order(&ties).order(), &[0, 1, 2]);
    }

    #[test]
    fn next_permutation_visits_lexicographic_order() {
        let mut perm = vec![0, 1, 2];
        let mut seen = vec![perm.clone()];
        while next_permutation(&mut perm) {
            seen.push(perm.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0],
            ]
        );
    }

    #[test]
    fn oracle_two_task_example() {
        // A = (30, 50), B = (10, 50): serving B first is optimal.
        let inst = instance_of(&[(30.0, 50.0), (10.0, 50.0)]);
        let ctx = EvaluationContext::default();
        let (sched, report) = brute_force_optimal(&inst, &ctx, 8).unwrap();
        assert_eq!(sched.order(), &[1, 0]);
        assert!((report.objective - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn oracle_single_task() {
        let inst = instance_of(&[(10.0, 50.0)]);
        let (sched, report) =
            brute_force_optimal(&inst, &EvaluationContext::default(), 8).unwrap();
        assert_eq!(sched.order(), &[0]);
        assert_eq!(report.drop_ratio, 0.0);
    }

    #[test]
    fn oracle_breaks_ties_lexicographically() {
        let inst = instance_of(&[(10.0, 50.0); 4]);
        let (sched, _) = brute_force_optimal(&inst, &EvaluationContext::default(), 8).unwrap();
        assert_eq!(sched.order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let inst = instance_of(&[(10.0, 50.0); 9]);
        let err = brute_force_optimal(&inst, &EvaluationContext::default(), 8);
        assert!(matches!(err, Err(SchedError::InstanceTooLarge { .. })));
    }

    #[test]
    fn oracle_beats_heuristics() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[6, 3, 0, 8, 5, 1]).unwrap();
        let ctx = EvaluationContext::default();
        let (_, oracle) = brute_force_optimal(&inst, &ctx, 8).unwrap();
        for sched in [fifo_order(&inst), stf_order(&inst), sdf_order(&inst)] {
            let rep = evaluate(&inst, &sched, &ctx).unwrap();
            assert!(oracle.objective <= rep.objective + 1e-15);
        }
    }
}
