//! Genetic algorithm over serving orders.
//!
//! Two chromosome encodings share one evolution engine:
//!
//! - integer: a permutation of task indices, recombined with ordered
//!   crossover (OX1) and perturbed by swap mutation;
//! - binary: a flattened N x N assignment matrix, recombined with
//!   single-point crossover over the bits and repaired back to a
//!   permutation matrix after every crossover/mutation.
//!
//! Fitness is the evaluator objective with the solver execution time forced
//! to zero; the solver cannot know its own runtime while it searches. The
//! measured wall clock is reported in [`GAResult`] and folded back into the
//! drop condition by the benchmark harness afterwards.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fifo_order, sdf_order, stf_order};
use crate::error::{Result, SchedError};
use crate::evaluator::{self, evaluate};
use crate::task::{BinaryAssignment, EvaluationContext, ProblemInstance, Schedule};

/// GA hyperparameters. Defaults are the full search budget used for
/// benchmark runs; [`GAConfig::desk_scale`] is the reduced budget used for
/// high-throughput dataset labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GAConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Stop after this many generations without a strict improvement of
    /// the best objective.
    pub patience: usize,
    /// Probability that an offspring is mutated (one swap / one bit flip).
    pub mutation_probability: f64,
    /// Fraction of the population copied unchanged into the next
    /// generation.
    pub elitism_fraction: f64,
    /// Size of the tournament-selected mating pool, as a fraction of the
    /// population.
    pub parents_fraction: f64,
    pub tournament_size: usize,
    pub rng_seed: u64,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population_size: 200,
            generations: 500,
            patience: 100,
            mutation_probability: 0.3,
            elitism_fraction: 0.05,
            parents_fraction: 0.30,
            tournament_size: 3,
            rng_seed: 0,
        }
    }
}

impl GAConfig {
    /// Reduced budget for labeling tens of thousands of samples.
    pub fn desk_scale() -> Self {
        GAConfig {
            population_size: 60,
            generations: 120,
            patience: 40,
            ..GAConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(SchedError::InvalidConfig(
                "population_size must be at least 2".into(),
            ));
        }
        if self.generations == 0 {
            return Err(SchedError::InvalidConfig(
                "generations must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(SchedError::InvalidConfig(
                "mutation_probability must be in [0, 1]".into(),
            ));
        }
        if !(self.elitism_fraction > 0.0 && self.elitism_fraction < 1.0) {
            return Err(SchedError::InvalidConfig(
                "elitism_fraction must be in (0, 1)".into(),
            ));
        }
        if !(self.parents_fraction > 0.0 && self.parents_fraction <= 1.0) {
            return Err(SchedError::InvalidConfig(
                "parents_fraction must be in (0, 1]".into(),
            ));
        }
        if self.tournament_size == 0 {
            return Err(SchedError::InvalidConfig(
                "tournament_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one GA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GAResult {
    pub best_schedule: Schedule,
    pub best_objective: f64,
    pub generations_run: usize,
    /// Full run duration, including population setup.
    pub wall_clock_seconds: f64,
    /// Best objective after the initial population (entry 0) and after
    /// each completed generation. Non-increasing.
    pub history: Vec<f64>,
}

/// Ordered crossover (OX1): the child keeps `p1[cut1..cut2)` in place and
/// the remaining positions are filled cyclically from `cut2` with the
/// absent elements in the cyclic order they appear in `p2`, also read from
/// `cut2`.
pub fn ordered_crossover(
    p1: &Schedule,
    p2: &Schedule,
    cut1: usize,
    cut2: usize,
) -> Result<Schedule> {
    if p1.len() != p2.len() {
        return Err(SchedError::SizeMismatch {
            instance: p1.len(),
            schedule: p2.len(),
        });
    }
    if cut1 >= cut2 || cut2 > p1.len() {
        return Err(SchedError::InvalidConfig(format!(
            "invalid crossover cuts ({cut1}, {cut2}) for length {}",
            p1.len()
        )));
    }
    let child = ox1(p1.order(), p2.order(), cut1, cut2);
    Ok(Schedule::from_permutation_unchecked(child))
}

fn ox1(p1: &[usize], p2: &[usize], cut1: usize, cut2: usize) -> Vec<usize> {
    let n = p1.len();
    let mut child = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for k in cut1..cut2 {
        child[k] = p1[k];
        used[p1[k]] = true;
    }
    let mut write = cut2 % n;
    for k in 0..n {
        let v = p2[(cut2 + k) % n];
        if !used[v] {
            while child[write] != usize::MAX {
                write = (write + 1) % n;
            }
            child[write] = v;
            used[v] = true;
        }
    }
    child
}

/// With probability `probability`, swap two distinct uniformly chosen
/// positions; otherwise return the schedule unchanged.
pub fn swap_mutation(sched: &Schedule, probability: f64, rng: &mut impl Rng) -> Schedule {
    let mut order = sched.order().to_vec();
    swap_mutate_in_place(&mut order, probability, rng);
    Schedule::from_permutation_unchecked(order)
}

fn swap_mutate_in_place(order: &mut [usize], probability: f64, rng: &mut impl Rng) {
    let n = order.len();
    if n < 2 {
        return;
    }
    if rng.gen::<f64>() < probability {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        order.swap(a, b);
    }
}

/// Shared evolution loop. `seeds` go in front of the initial population;
/// the rest is filled by `random_individual`. Offspring are produced by
/// tournament selection, `crossover`, then `mutate` (which also repairs,
/// for encodings that need it).
fn evolve<G: Clone>(
    cfg: &GAConfig,
    rng: &mut ChaCha8Rng,
    seeds: Vec<G>,
    mut random_individual: impl FnMut(&mut ChaCha8Rng) -> G,
    mut crossover: impl FnMut(&G, &G, &mut ChaCha8Rng) -> G,
    mut mutate: impl FnMut(&mut G, &mut ChaCha8Rng),
    mut fitness: impl FnMut(&G) -> f64,
) -> (G, f64, usize, Vec<f64>) {
    let pop_size = cfg.population_size;
    let elite_count = ((pop_size as f64 * cfg.elitism_fraction).round() as usize)
        .clamp(1, pop_size - 1);
    let pool_size = ((pop_size as f64 * cfg.parents_fraction).round() as usize).clamp(2, pop_size);

    let mut population: Vec<(G, f64)> = Vec::with_capacity(pop_size);
    for g in seeds.into_iter().take(pop_size) {
        let f = fitness(&g);
        population.push((g, f));
    }
    while population.len() < pop_size {
        let g = random_individual(rng);
        let f = fitness(&g);
        population.push((g, f));
    }
    sort_by_fitness(&mut population);

    let mut history = vec![population[0].1];
    let mut stagnation = 0usize;
    let mut generations_run = 0usize;

    for gen in 1..=cfg.generations {
        let pool: Vec<usize> = (0..pool_size)
            .map(|_| tournament_pick(&population, cfg.tournament_size, rng))
            .collect();

        let mut next: Vec<(G, f64)> = population[..elite_count].to_vec();
        while next.len() < pop_size {
            let a = pool[rng.gen_range(0..pool.len())];
            let b = pool[rng.gen_range(0..pool.len())];
            let mut child = crossover(&population[a].0, &population[b].0, rng);
            mutate(&mut child, rng);
            let f = fitness(&child);
            next.push((child, f));
        }
        sort_by_fitness(&mut next);

        let best = next[0].1;
        let prev_best = *history.last().unwrap();
        debug_assert!(best <= prev_best);
        if best < prev_best {
            stagnation = 0;
        } else {
            stagnation += 1;
        }
        history.push(best);
        population = next;
        generations_run = gen;
        if stagnation >= cfg.patience {
            break;
        }
    }

    let (best, best_obj) = population.swap_remove(0);
    (best, best_obj, generations_run, history)
}

fn sort_by_fitness<G>(population: &mut [(G, f64)]) {
    // Stable sort: equal objectives keep their prior order, so runs are
    // fully deterministic.
    population.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
}

fn tournament_pick<G>(population: &[(G, f64)], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..size {
        let candidate = rng.gen_range(0..population.len());
        if population[candidate].1 < population[best].1 {
            best = candidate;
        }
    }
    best
}

fn trivial_result(
    instance: &ProblemInstance,
    ctx: &EvaluationContext,
    start: Instant,
) -> Result<GAResult> {
    let sched = Schedule::identity(instance.len());
    let report = evaluate(instance, &sched, &ctx.with_exec_seconds(0.0))?;
    Ok(GAResult {
        best_schedule: sched,
        best_objective: report.objective,
        generations_run: 0,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        history: vec![report.objective],
    })
}

/// GA over permutation chromosomes. The initial population is seeded with
/// the shortest-task-first, shortest-deadline-first and arrival orders,
/// plus random permutations, so the result is never worse than the best of
/// those heuristics. Deterministic given `cfg.rng_seed`.
pub fn run_ga_integer(
    instance: &ProblemInstance,
    ctx: &EvaluationContext,
    cfg: &GAConfig,
) -> Result<GAResult> {
    cfg.validate()?;
    ctx.validate()?;
    let start = Instant::now();
    let n = instance.len();
    if n == 1 {
        return trivial_result(instance, ctx, start);
    }
    let search_ctx = ctx.with_exec_seconds(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let seeds: Vec<Vec<usize>> = vec![
        stf_order(instance).order().to_vec(),
        sdf_order(instance).order().to_vec(),
        fifo_order(instance).order().to_vec(),
    ];

    let (best, best_obj, generations_run, history) = evolve(
        cfg,
        &mut rng,
        seeds,
        |rng| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            perm
        },
        |a, b, rng| {
            let cut1 = rng.gen_range(0..n);
            let cut2 = rng.gen_range(cut1 + 1..=n);
            ox1(a, b, cut1, cut2)
        },
        |child, rng| swap_mutate_in_place(child, cfg.mutation_probability, rng),
        |perm| evaluator::objective_of_order(instance, perm, &search_ctx),
    );

    Ok(GAResult {
        best_schedule: Schedule::from_permutation_unchecked(best),
        best_objective: best_obj,
        generations_run,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        history,
    })
}

/// Restore exact row/column sums of one: keep the first valid 1 per
/// row/column scanning row-major, clear the rest, then place every
/// unassigned task at the lowest-index free position in ascending order.
fn repair_assignment(bits: &mut [u8], n: usize) {
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if bits[i * n + j] == 1 {
                if !row_used[i] && !col_used[j] {
                    row_used[i] = true;
                    col_used[j] = true;
                } else {
                    bits[i * n + j] = 0;
                }
            }
        }
    }
    let mut j = 0;
    for i in 0..n {
        if !row_used[i] {
            while col_used[j] {
                j += 1;
            }
            bits[i * n + j] = 1;
            col_used[j] = true;
        }
    }
}

fn assignment_bits_to_order(bits: &[u8], n: usize) -> Vec<usize> {
    let mut order = vec![0usize; n];
    for j in 0..n {
        for i in 0..n {
            if bits[i * n + j] == 1 {
                order[j] = i;
                break;
            }
        }
    }
    order
}

fn permutation_to_bits(order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let mut bits = vec![0u8; n * n];
    for (j, &i) in order.iter().enumerate() {
        bits[i * n + j] = 1;
    }
    bits
}

/// GA over flattened assignment-matrix chromosomes: single-point crossover
/// on the bits, one optional bit flip per offspring, then repair back to a
/// permutation matrix. Searches 2^(N^2) raw strings instead of N! orders,
/// so it is expected to be slower and weaker than [`run_ga_integer`] at
/// equal budgets. Deterministic given `cfg.rng_seed`.
pub fn run_ga_binary(
    instance: &ProblemInstance,
    ctx: &EvaluationContext,
    cfg: &GAConfig,
) -> Result<GAResult> {
    cfg.validate()?;
    ctx.validate()?;
    let start = Instant::now();
    let n = instance.len();
    if n == 1 {
        return trivial_result(instance, ctx, start);
    }
    let search_ctx = ctx.with_exec_seconds(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let seeds: Vec<Vec<u8>> = vec![
        permutation_to_bits(stf_order(instance).order()),
        permutation_to_bits(sdf_order(instance).order()),
        permutation_to_bits(fifo_order(instance).order()),
    ];

    let (best, best_obj, generations_run, history) = evolve(
        cfg,
        &mut rng,
        seeds,
        |rng| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            permutation_to_bits(&perm)
        },
        |a, b, rng| {
            let point = rng.gen_range(1..n * n);
            let mut child = Vec::with_capacity(n * n);
            child.extend_from_slice(&a[..point]);
            child.extend_from_slice(&b[point..]);
            child
        },
        |child, rng| {
            if rng.gen::<f64>() < cfg.mutation_probability {
                let idx = rng.gen_range(0..n * n);
                child[idx] ^= 1;
            }
            repair_assignment(child, n);
        },
        |bits| {
            let order = assignment_bits_to_order(bits, n);
            evaluator::objective_of_order(instance, &order, &search_ctx)
        },
    );

    let assignment = BinaryAssignment::new(n, best)?;
    let best_schedule = assignment.to_schedule()?;
    Ok(GAResult {
        best_schedule,
        best_objective: best_obj,
        generations_run,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::brute_force_optimal;
    use crate::task::TaskCatalog;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> ProblemInstance {
        let cat = TaskCatalog::standard();
        let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..9)).collect();
        ProblemInstance::from_type_ids(&cat, &ids).unwrap()
    }

    /// Textbook OX1 written independently of the production code: collect
    /// absent elements from p2 starting at cut2, then write them into the
    /// free slots, also starting at cut2.
    fn reference_ox1(p1: &[usize], p2: &[usize], cut1: usize, cut2: usize) -> Vec<usize> {
        let n = p1.len();
        let mut child = vec![usize::MAX; n];
        child[cut1..cut2].copy_from_slice(&p1[cut1..cut2]);
        let segment: std::collections::HashSet<usize> = p1[cut1..cut2].iter().copied().collect();
        let values: Vec<usize> = (0..n)
            .map(|k| p2[(cut2 + k) % n])
            .filter(|v| !segment.contains(v))
            .collect();
        let slots: Vec<usize> = (0..n)
            .map(|k| (cut2 + k) % n)
            .filter(|&pos| child[pos] == usize::MAX)
            .collect();
        for (pos, v) in slots.into_iter().zip(values) {
            child[pos] = v;
        }
        child
    }

    #[test]
    fn ox_matches_hand_traced_example() {
        let p1 = Schedule::new(vec![0, 1, 2, 3, 4]).unwrap();
        let p2 = Schedule::new(vec![4, 3, 2, 1, 0]).unwrap();
        let child = ordered_crossover(&p1, &p2, 1, 3).unwrap();
        // Segment [1, 2] stays; p2 read cyclically from index 3 gives
        // 1, 0, 4, 3, 2 -> absent: 0, 4, 3 -> slots 3, 4, 0.
        assert_eq!(child.order(), &[3, 1, 2, 0, 4]);
        assert_eq!(
            child.order(),
            reference_ox1(p1.order(), p2.order(), 1, 3).as_slice()
        );
    }

    #[test]
    fn ox_identical_parents_reproduce() {
        let p = Schedule::new(vec![2, 0, 3, 1]).unwrap();
        let child = ordered_crossover(&p, &p, 1, 3).unwrap();
        assert_eq!(child, p);
    }

    #[test]
    fn ox_matches_reference_on_random_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(2..12);
            let mut p1: Vec<usize> = (0..n).collect();
            let mut p2: Vec<usize> = (0..n).collect();
            p1.shuffle(&mut rng);
            p2.shuffle(&mut rng);
            let cut1 = rng.gen_range(0..n);
            let cut2 = rng.gen_range(cut1 + 1..=n);
            let child = ox1(&p1, &p2, cut1, cut2);
            assert_eq!(child, reference_ox1(&p1, &p2, cut1, cut2));
            // Closure: always a permutation.
            assert!(Schedule::new(child).is_ok());
        }
    }

    #[test]
    fn ox_rejects_bad_inputs() {
        let p1 = Schedule::new(vec![0, 1, 2]).unwrap();
        let p2 = Schedule::new(vec![0, 1]).unwrap();
        assert!(ordered_crossover(&p1, &p2, 0, 1).is_err());
        let p2 = Schedule::new(vec![2, 1, 0]).unwrap();
        assert!(ordered_crossover(&p1, &p2, 2, 2).is_err());
        assert!(ordered_crossover(&p1, &p2, 0, 4).is_err());
    }

    #[test]
    fn swap_mutation_probability_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Schedule::new(vec![0, 1, 2, 3]).unwrap();
        for _ in 0..50 {
            assert_eq!(swap_mutation(&s, 0.0, &mut rng), s);
        }
        let two = Schedule::new(vec![0, 1]).unwrap();
        for _ in 0..50 {
            assert_eq!(swap_mutation(&two, 1.0, &mut rng).order(), &[1, 0]);
        }
        for _ in 0..200 {
            let m = swap_mutation(&s, 0.7, &mut rng);
            assert!(Schedule::new(m.order().to_vec()).is_ok());
        }
    }

    #[test]
    fn repair_restores_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let n = rng.gen_range(2..9);
            let mut bits: Vec<u8> = (0..n * n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
            repair_assignment(&mut bits, n);
            assert!(BinaryAssignment::new(n, bits).is_ok());
        }
    }

    #[test]
    fn ga_integer_single_task() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[4]).unwrap();
        let res = run_ga_integer(&inst, &EvaluationContext::default(), &GAConfig::default())
            .unwrap();
        assert_eq!(res.best_schedule.order(), &[0]);
        assert_eq!(res.generations_run, 0);
    }

    #[test]
    fn ga_integer_finds_two_task_optimum() {
        // A = (30, 50) is type 6, B = (10, 50) is type 0.
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[6, 0]).unwrap();
        let cfg = GAConfig {
            population_size: 10,
            generations: 20,
            patience: 20,
            ..GAConfig::default()
        };
        let res = run_ga_integer(&inst, &EvaluationContext::default(), &cfg).unwrap();
        assert_eq!(res.best_schedule.order(), &[1, 0]);
        assert!((res.best_objective - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn ga_history_non_increasing_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let inst = random_instance(&mut rng, 12);
        let ctx = EvaluationContext::default();
        let cfg = GAConfig {
            population_size: 40,
            generations: 60,
            patience: 25,
            rng_seed: 123,
            ..GAConfig::default()
        };
        let a = run_ga_integer(&inst, &ctx, &cfg).unwrap();
        let b = run_ga_integer(&inst, &ctx, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_schedule, b.best_schedule);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn ga_never_worse_than_heuristics() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let ctx = EvaluationContext::default();
        let cfg = GAConfig {
            population_size: 30,
            generations: 30,
            patience: 30,
            rng_seed: 7,
            ..GAConfig::default()
        };
        for _ in 0..10 {
            let n = rng.gen_range(2..15);
            let inst = random_instance(&mut rng, n);
            let res = run_ga_integer(&inst, &ctx, &cfg).unwrap();
            for sched in [fifo_order(&inst), stf_order(&inst), sdf_order(&inst)] {
                let rep = evaluate(&inst, &sched, &ctx).unwrap();
                assert!(res.best_objective <= rep.objective);
            }
        }
    }

    #[test]
    fn ga_integer_matches_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let ctx = EvaluationContext::default();
        let mut matched = 0;
        for trial in 0..20 {
            let n = rng.gen_range(2..=7);
            let inst = random_instance(&mut rng, n);
            let (_, oracle) = brute_force_optimal(&inst, &ctx, 8).unwrap();
            let cfg = GAConfig::default().with_seed(trial);
            let res = run_ga_integer(&inst, &ctx, &cfg).unwrap();
            assert!(res.best_objective >= oracle.objective - 1e-12);
            if (res.best_objective - oracle.objective).abs() <= 1e-12 {
                matched += 1;
            }
        }
        assert!(matched >= 18, "only {matched}/20 runs matched the oracle");
    }

    #[test]
    fn ga_binary_single_task_and_validity() {
        let cat = TaskCatalog::standard();
        let inst = ProblemInstance::from_type_ids(&cat, &[4]).unwrap();
        let res =
            run_ga_binary(&inst, &EvaluationContext::default(), &GAConfig::default()).unwrap();
        assert_eq!(res.best_schedule.order(), &[0]);
    }

    #[test]
    fn ga_binary_deterministic_and_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let inst = random_instance(&mut rng, 8);
        let ctx = EvaluationContext::default();
        let cfg = GAConfig {
            population_size: 30,
            generations: 40,
            patience: 20,
            rng_seed: 5,
            ..GAConfig::default()
        };
        let a = run_ga_binary(&inst, &ctx, &cfg).unwrap();
        let b = run_ga_binary(&inst, &ctx, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best_schedule, b.best_schedule);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // The decoded best is a valid permutation by construction.
        assert!(Schedule::new(a.best_schedule.order().to_vec()).is_ok());
    }
}
