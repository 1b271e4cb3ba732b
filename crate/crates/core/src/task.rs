//! Task types, the fixed 9-type catalog, problem instances and schedules.
//!
//! All time quantities are `f64` task time units. Catalog entries use exact
//! small integers, so waiting-time sums incur no rounding; fractional values
//! only appear when measured solver wall clock is folded in.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SchedError};

/// Number of distinct task types in the standard catalog.
pub const NUM_TASK_TYPES: usize = 9;

/// Processing times appearing in the standard catalog.
pub const CATALOG_PROCESSING_TIMES: [f64; 3] = [10.0, 20.0, 30.0];

/// Relative deadlines appearing in the standard catalog.
pub const CATALOG_DEADLINES: [f64; 3] = [50.0, 100.0, 150.0];

/// One task class: a fixed processing time and relative deadline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskType {
    pub id: usize,
    /// Server time needed to execute a task of this type.
    pub processing_time: f64,
    /// Time budget before the task expires, counted from the moment the
    /// server starts serving its queue.
    pub deadline: f64,
}

/// The ordered list of task types an instance may draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCatalog {
    entries: Vec<TaskType>,
}

impl TaskCatalog {
    /// The standard 9-entry catalog: the cross product of processing times
    /// `[10, 20, 30]` and deadlines `[50, 100, 150]`, deadline varying
    /// fastest. Id 0 is `(10, 50)`, id 1 is `(10, 100)`, ..., id 8 is
    /// `(30, 150)`.
    pub fn standard() -> Self {
        let mut entries = Vec::with_capacity(NUM_TASK_TYPES);
        for (i, &p) in CATALOG_PROCESSING_TIMES.iter().enumerate() {
            for (j, &d) in CATALOG_DEADLINES.iter().enumerate() {
                entries.push(TaskType {
                    id: i * CATALOG_DEADLINES.len() + j,
                    processing_time: p,
                    deadline: d,
                });
            }
        }
        TaskCatalog { entries }
    }

    pub fn entries(&self) -> &[TaskType] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Look up a type by id.
    pub fn get(&self, type_id: usize) -> Result<&TaskType> {
        self.entries
            .get(type_id)
            .ok_or(SchedError::InvalidTypeId(type_id))
    }

    /// Build a task of the given type with arrival time 0.
    pub fn task(&self, type_id: usize) -> Result<Task> {
        let ty = self.get(type_id)?;
        Ok(Task {
            type_id,
            arrival_time: 0.0,
            processing_time: ty.processing_time,
            deadline: ty.deadline,
        })
    }
}

impl Default for TaskCatalog {
    fn default() -> Self {
        TaskCatalog::standard()
    }
}

/// A single task: its catalog type plus resolved attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub type_id: usize,
    /// Informational only; no objective term depends on it.
    pub arrival_time: f64,
    pub processing_time: f64,
    pub deadline: f64,
}

/// An ordered multiset of tasks to be scheduled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    tasks: Vec<Task>,
}

impl ProblemInstance {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(SchedError::EmptyInstance);
        }
        Ok(ProblemInstance { tasks })
    }

    /// Build an instance from catalog type ids (repetition allowed).
    pub fn from_type_ids(catalog: &TaskCatalog, type_ids: &[usize]) -> Result<Self> {
        let tasks = type_ids
            .iter()
            .map(|&id| catalog.task(id))
            .collect::<Result<Vec<_>>>()?;
        ProblemInstance::new(tasks)
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn type_ids(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.type_id).collect()
    }

    /// How many tasks of each catalog type the instance contains.
    pub fn type_counts(&self) -> [usize; NUM_TASK_TYPES] {
        let mut counts = [0usize; NUM_TASK_TYPES];
        for t in &self.tasks {
            counts[t.type_id] += 1;
        }
        counts
    }

    /// Sum of all processing times.
    pub fn total_processing_time(&self) -> f64 {
        self.tasks.iter().map(|t| t.processing_time).sum()
    }
}

/// A serving order: `order[j]` is the index of the task served at position
/// `j` (0-based storage; positions are 1-based in report formulas).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schedule {
    order: Vec<usize>,
}

impl Schedule {
    /// Validate that `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(SchedError::InvalidPermutation {
                    n,
                    detail: format!("index {i} out of range"),
                });
            }
            if seen[i] {
                return Err(SchedError::InvalidPermutation {
                    n,
                    detail: format!("index {i} appears twice"),
                });
            }
            seen[i] = true;
        }
        Ok(Schedule { order })
    }

    /// The arrival order `[0, 1, ..., n-1]`.
    pub fn identity(n: usize) -> Self {
        Schedule {
            order: (0..n).collect(),
        }
    }

    /// Build from an order known to be a permutation (e.g. produced by a
    /// sort of `0..n`). Debug-checked only.
    pub(crate) fn from_permutation_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Schedule::new(order.clone()).is_ok());
        Schedule { order }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based serving position of every task: `positions[i] = j+1` when
    /// `order[j] == i`.
    pub fn serving_positions(&self) -> Vec<usize> {
        let mut pos = vec![0usize; self.order.len()];
        for (j, &i) in self.order.iter().enumerate() {
            pos[i] = j + 1;
        }
        pos
    }

    /// Reorder an instance's type ids into serving order.
    pub fn apply_to_type_ids(&self, instance: &ProblemInstance) -> Vec<usize> {
        self.order
            .iter()
            .map(|&i| instance.tasks()[i].type_id)
            .collect()
    }

    /// Turn a serving order expressed as task *types* back into a schedule
    /// over task indices. Tasks of equal type are interchangeable; each
    /// emitted type consumes the lowest-index unused task of that type.
    pub fn from_type_order(instance: &ProblemInstance, type_order: &[usize]) -> Result<Self> {
        let n = instance.len();
        if type_order.len() != n {
            return Err(SchedError::SizeMismatch {
                instance: n,
                schedule: type_order.len(),
            });
        }
        let mut unused: Vec<Vec<usize>> = vec![Vec::new(); NUM_TASK_TYPES];
        for (i, t) in instance.tasks().iter().enumerate().rev() {
            unused[t.type_id].push(i);
        }
        let mut order = Vec::with_capacity(n);
        for &ty in type_order {
            if ty >= NUM_TASK_TYPES {
                return Err(SchedError::InvalidTypeId(ty));
            }
            match unused[ty].pop() {
                Some(i) => order.push(i),
                None => {
                    return Err(SchedError::InvalidPermutation {
                        n,
                        detail: format!("type order demands more tasks of type {ty} than exist"),
                    })
                }
            }
        }
        Ok(Schedule { order })
    }
}

/// How the evaluator treats a dropped task's slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DropSemantics {
    /// A dropped task still occupies the server for its processing time, so
    /// it delays every successor. This is the literal reading of the
    /// waiting-time sum and the semantics every solver optimizes against.
    #[default]
    HoldSlot,
    /// A dropped task is skipped and frees its slot. Physically plausible
    /// alternative; not used by any acceptance path.
    ReleaseSlot,
}

/// Shared evaluation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationContext {
    /// Trade-off weight: objective = lambda * D + (1 - lambda) * w.
    pub lambda: f64,
    /// System time when the server starts serving; deadlines are stored
    /// relative to this instant. Kept so absolute expiry times can be
    /// derived (`deadline + current_time`); no objective term reads it.
    pub current_time: f64,
    /// Measured solver wall clock, in seconds.
    pub solver_exec_seconds: f64,
    /// Conversion factor from wall-clock seconds to task time units.
    pub time_unit_scale: f64,
    pub drop_semantics: DropSemantics,
}

impl EvaluationContext {
    pub fn new(lambda: f64) -> Self {
        EvaluationContext {
            lambda,
            ..EvaluationContext::default()
        }
    }

    /// Solver execution time expressed in task time units.
    pub fn exec_time_units(&self) -> f64 {
        self.solver_exec_seconds * self.time_unit_scale
    }

    /// Same context with the solver time replaced.
    pub fn with_exec_seconds(&self, seconds: f64) -> Self {
        EvaluationContext {
            solver_exec_seconds: seconds,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(SchedError::InvalidConfig(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.solver_exec_seconds < 0.0 || self.current_time < 0.0 || self.time_unit_scale < 0.0
        {
            return Err(SchedError::InvalidConfig(
                "times and scale must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for EvaluationContext {
    fn default() -> Self {
        EvaluationContext {
            lambda: 0.9,
            current_time: 0.0,
            solver_exec_seconds: 0.0,
            time_unit_scale: 1.0,
            drop_semantics: DropSemantics::HoldSlot,
        }
    }
}

/// Permutation-matrix view of a schedule: `X[i][j] = 1` iff task `i` is
/// served at position `j`. Every row and column sums to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryAssignment {
    n: usize,
    /// Row-major `n * n` cells.
    cells: Vec<u8>,
}

impl BinaryAssignment {
    /// Validate row/column sums and build the matrix.
    pub fn new(n: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(SchedError::InvalidAssignment(format!(
                "expected {} cells, got {}",
                n * n,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c > 1) {
            return Err(SchedError::InvalidAssignment(format!(
                "cell value {bad} is not 0/1"
            )));
        }
        let m = BinaryAssignment { n, cells };
        m.check_permutation()?;
        Ok(m)
    }

    fn check_permutation(&self) -> Result<()> {
        for i in 0..self.n {
            let row: u32 = (0..self.n).map(|j| u32::from(self.get(i, j))).sum();
            if row != 1 {
                return Err(SchedError::InvalidAssignment(format!(
                    "row {i} sums to {row}, expected 1"
                )));
            }
        }
        for j in 0..self.n {
            let col: u32 = (0..self.n).map(|i| u32::from(self.get(i, j))).sum();
            if col != 1 {
                return Err(SchedError::InvalidAssignment(format!(
                    "column {j} sums to {col}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.n + j]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Matrix view of a schedule: `X[order[j]][j] = 1`.
    pub fn from_schedule(sched: &Schedule) -> Self {
        let n = sched.len();
        let mut cells = vec![0u8; n * n];
        for (j, &i) in sched.order().iter().enumerate() {
            cells[i * n + j] = 1;
        }
        BinaryAssignment { n, cells }
    }

    /// Recover the serving order: `order[j]` is the unique `i` with
    /// `X[i][j] = 1`. Fails on matrices violating the permutation
    /// invariant (e.g. a malformed chromosome that escaped repair).
    pub fn to_schedule(&self) -> Result<Schedule> {
        self.check_permutation()?;
        let mut order = vec![0usize; self.n];
        for j in 0..self.n {
            for i in 0..self.n {
                if self.get(i, j) == 1 {
                    order[j] = i;
                    break;
                }
            }
        }
        Ok(Schedule { order })
    }

    /// 1-based serving position of task `i`: the weighted column sum
    /// `sum_j (j+1) * X[i][j]`.
    pub fn position_of(&self, i: usize) -> usize {
        (0..self.n)
            .map(|j| (j + 1) * usize::from(self.get(i, j)))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_catalog_matches_stated_entries() {
        let cat = TaskCatalog::standard();
        assert_eq!(cat.len(), 9);
        let e0 = cat.get(0).unwrap();
        assert_eq!((e0.processing_time, e0.deadline), (10.0, 50.0));
        let e1 = cat.get(1).unwrap();
        assert_eq!((e1.processing_time, e1.deadline), (10.0, 100.0));
        let e8 = cat.get(8).unwrap();
        assert_eq!((e8.processing_time, e8.deadline), (30.0, 150.0));
    }

    #[test]
    fn standard_catalog_is_the_cross_product() {
        let cat = TaskCatalog::standard();
        let mut pairs: Vec<(u32, u32)> = cat
            .entries()
            .iter()
            .map(|t| (t.processing_time as u32, t.deadline as u32))
            .collect();
        pairs.sort_unstable();
        let mut expected = Vec::new();
        for p in [10, 20, 30] {
            for d in [50, 100, 150] {
                expected.push((p, d));
            }
        }
        assert_eq!(pairs, expected);
        for (id, t) in cat.entries().iter().enumerate() {
            assert_eq!(t.id, id);
        }
    }

    #[test]
    fn schedule_rejects_non_permutations() {
        assert!(Schedule::new(vec![0, 1, 2]).is_ok());
        assert!(Schedule::new(vec![0, 0, 2]).is_err());
        assert!(Schedule::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn matrix_round_trip_identity() {
        let sched = Schedule::new(vec![1, 2, 0]).unwrap();
        let m = BinaryAssignment::from_schedule(&sched);
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.get(2, 1), 1);
        assert_eq!(m.get(0, 2), 1);
        assert_eq!(m.to_schedule().unwrap(), sched);
    }

    #[test]
    fn identity_matrix_maps_to_identity_schedule() {
        let m = BinaryAssignment::new(3, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        assert_eq!(m.to_schedule().unwrap().order(), &[0, 1, 2]);
    }

    #[test]
    fn forced_matrix_example() {
        // X[0][2] = X[1][0] = X[2][1] = 1.
        let m = BinaryAssignment::new(3, vec![0, 0, 1, 1, 0, 0, 0, 1, 0]).unwrap();
        assert_eq!(m.to_schedule().unwrap().order(), &[1, 2, 0]);
    }

    #[test]
    fn malformed_matrix_rejected() {
        assert!(BinaryAssignment::new(2, vec![1, 1, 0, 0]).is_err());
        assert!(BinaryAssignment::new(2, vec![1, 0, 1, 0]).is_err());
        assert!(BinaryAssignment::new(2, vec![1, 0, 0, 2]).is_err());
    }

    #[test]
    fn position_of_matches_schedule() {
        let sched = Schedule::new(vec![1, 2, 0]).unwrap();
        let m = BinaryAssignment::from_schedule(&sched);
        assert_eq!(m.position_of(0), 3);
        assert_eq!(m.position_of(1), 1);
        assert_eq!(m.position_of(2), 2);
        let ident = BinaryAssignment::from_schedule(&Schedule::identity(3));
        assert_eq!(ident.position_of(0), 1);
    }

    #[test]
    fn type_order_round_trip_with_duplicates() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[3, 1, 3, 0]).unwrap();
        let sched = Schedule::from_type_order(&inst, &[3, 3, 0, 1]).unwrap();
        // Duplicate type 3 tasks consumed lowest index first.
        assert_eq!(sched.order(), &[0, 2, 3, 1]);
        assert!(Schedule::from_type_order(&inst, &[3, 3, 3, 1]).is_err());
        assert!(Schedule::from_type_order(&inst, &[3, 3, 0]).is_err());
    }

    #[test]
    fn context_validation() {
        let ctx = EvaluationContext::default();
        assert!(ctx.validate().is_ok());
        assert_eq!(ctx.lambda, 0.9);
        let bad = EvaluationContext::new(1.5);
        assert!(bad.validate().is_err());
        let ctx = EvaluationContext {
            solver_exec_seconds: 2.0,
            time_unit_scale: 3.0,
            ..EvaluationContext::default()
        };
        assert_eq!(ctx.exec_time_units(), 6.0);
    }
}
