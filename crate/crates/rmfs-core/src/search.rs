//! Multi-objective task-assignment search: guided neighborhood operators,
//! NSGA-II with PMX + ARC crossover, and ALNS under adaptive roulette
//! operator selection.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Scenario, TaskId};
use crate::sim::{simulate, Assignment, ObjectiveVector, PriorityMode, Schedule};

/// Two-section chromosome: a permutation of all task ids plus per-AGV counts
/// that split the permutation into contiguous sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chromosome {
    pub perm: Vec<TaskId>,
    pub counts: Vec<usize>,
}

impl Chromosome {
    pub fn is_valid(&self, n_tasks: usize) -> bool {
        if self.perm.len() != n_tasks || self.counts.iter().sum::<usize>() != n_tasks {
            return false;
        }
        let mut seen = vec![false; n_tasks];
        for &t in &self.perm {
            if t >= n_tasks || seen[t] {
                return false;
            }
            seen[t] = true;
        }
        true
    }

    /// Half-open index range of one AGV's segment in `perm`.
    fn segment_bounds(&self, agv: usize) -> (usize, usize) {
        let start: usize = self.counts[..agv].iter().sum();
        (start, start + self.counts[agv])
    }

    pub fn segment(&self, agv: usize) -> &[TaskId] {
        let (a, b) = self.segment_bounds(agv);
        &self.perm[a..b]
    }

    pub fn to_assignment(&self) -> Assignment {
        Assignment {
            per_agv: (0..self.counts.len())
                .map(|a| self.segment(a).to_vec())
                .collect(),
        }
    }

    pub fn from_assignment(assignment: &Assignment) -> Self {
        Chromosome {
            perm: assignment.per_agv.iter().flatten().copied().collect(),
            counts: assignment.per_agv.iter().map(Vec::len).collect(),
        }
    }

    /// Uniform random chromosome with every AGV getting at least one task.
    pub fn random(n_tasks: usize, n_agvs: usize, rng: &mut impl Rng) -> Self {
        let mut perm: Vec<TaskId> = (0..n_tasks).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut counts = vec![1usize; n_agvs];
        for _ in 0..n_tasks.saturating_sub(n_agvs) {
            counts[rng.gen_range(0..n_agvs)] += 1;
        }
        Chromosome { perm, counts }
    }
}

/// `a` dominates `b`: componentwise ≤ with at least one strict <.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let a = [a.total_ticks, a.max_ticks, a.total_joules, a.max_joules];
    let b = [b.total_ticks, b.max_ticks, b.total_joules, b.max_joules];
    a.iter().zip(&b).all(|(x, y)| x <= y) && a.iter().zip(&b).any(|(x, y)| x < y)
}

/// Chromosome with its cached evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluated {
    pub chrom: Chromosome,
    pub objectives: ObjectiveVector,
    /// Per-AGV completion ticks; the guided operators' running-time proxy.
    pub per_agv_ticks: Vec<u32>,
}

/// Infeasible (stuck) candidates score worst-possible and are never archived.
const WORST: ObjectiveVector = ObjectiveVector {
    total_ticks: u64::MAX,
    max_ticks: u64::MAX,
    total_joules: u64::MAX,
    max_joules: u64::MAX,
};

pub fn evaluate(scenario: &Scenario, chrom: Chromosome, mode: PriorityMode) -> Evaluated {
    match simulate(scenario, &chrom.to_assignment(), mode) {
        Ok(schedule) => Evaluated {
            per_agv_ticks: schedule.per_agv_ticks.clone(),
            objectives: schedule.objectives,
            chrom,
        },
        Err(_) => Evaluated {
            per_agv_ticks: vec![u32::MAX; chrom.counts.len()],
            objectives: WORST,
            chrom,
        },
    }
}

/// Memoizing evaluator: repeat candidates cost nothing against wall-clock
/// budgets, and only fresh simulations count against evaluation budgets.
struct Evaluator<'a> {
    scenario: &'a Scenario,
    mode: PriorityMode,
    cache: std::collections::HashMap<(Vec<TaskId>, Vec<usize>), (ObjectiveVector, Vec<u32>)>,
}

impl<'a> Evaluator<'a> {
    fn new(scenario: &'a Scenario, mode: PriorityMode) -> Self {
        Evaluator {
            scenario,
            mode,
            cache: std::collections::HashMap::new(),
        }
    }

    fn eval(&mut self, chrom: Chromosome, meter: &mut BudgetMeter) -> Evaluated {
        let key = (chrom.perm.clone(), chrom.counts.clone());
        if let Some((objectives, ticks)) = self.cache.get(&key) {
            return Evaluated {
                objectives: *objectives,
                per_agv_ticks: ticks.clone(),
                chrom,
            };
        }
        let out = evaluate(self.scenario, chrom, self.mode);
        meter.count(1);
        self.cache
            .insert(key, (out.objectives, out.per_agv_ticks.clone()));
        out
    }
}

/// Applies `op`; when the result degenerates to the parent (the guided
/// operators are identities on inputs without a qualifying move), retries
/// once with the random counterpart so the evaluation is not wasted.
fn apply_productive(
    op: Operator,
    parent: &Evaluated,
    scenario: &Scenario,
    rng: &mut impl Rng,
) -> Chromosome {
    let child = op.apply(parent, scenario, rng);
    if child != parent.chrom {
        return child;
    }
    let fallback = match op {
        Operator::GuidedInsertion => Operator::RandomInsertion,
        _ => Operator::RandomSwap,
    };
    fallback.apply(parent, scenario, rng)
}

pub fn evaluate_with_schedule(
    scenario: &Scenario,
    chrom: &Chromosome,
    mode: PriorityMode,
) -> Option<Schedule> {
    simulate(scenario, &chrom.to_assignment(), mode).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    RandomSwap,
    RandomInsertion,
    RandomArrangement,
    GuidedSwap,
    GuidedInsertion,
    GuidedArrangement,
}

pub const ALL_OPERATORS: [Operator; 6] = [
    Operator::RandomSwap,
    Operator::RandomInsertion,
    Operator::RandomArrangement,
    Operator::GuidedSwap,
    Operator::GuidedInsertion,
    Operator::GuidedArrangement,
];

pub const RANDOM_OPERATORS: [Operator; 3] = [
    Operator::RandomSwap,
    Operator::RandomInsertion,
    Operator::RandomArrangement,
];

impl Operator {
    pub fn apply(
        self,
        x: &Evaluated,
        scenario: &Scenario,
        rng: &mut impl Rng,
    ) -> Chromosome {
        match self {
            Operator::RandomSwap => random_swap(&x.chrom, rng),
            Operator::RandomInsertion => random_insertion(&x.chrom, rng),
            Operator::RandomArrangement => {
                let busy = busy_agvs(&x.chrom);
                if busy.is_empty() {
                    return x.chrom.clone();
                }
                let agv = busy[rng.gen_range(0..busy.len())];
                arrangement(&x.chrom, agv, scenario)
            }
            Operator::GuidedSwap => guided_swap(x, scenario, rng),
            Operator::GuidedInsertion => guided_insertion(x, scenario, rng),
            Operator::GuidedArrangement => match longest_running(x) {
                Some(agv) => arrangement(&x.chrom, agv, scenario),
                None => x.chrom.clone(),
            },
        }
    }
}

fn busy_agvs(x: &Chromosome) -> Vec<usize> {
    (0..x.counts.len()).filter(|&a| x.counts[a] > 0).collect()
}

/// AGV with the highest cached completion time, ties to the lowest id.
fn longest_running(x: &Evaluated) -> Option<usize> {
    busy_agvs(&x.chrom)
        .into_iter()
        .max_by_key(|&a| (x.per_agv_ticks[a], usize::MAX - a))
}

fn shortest_running(x: &Evaluated) -> Option<usize> {
    busy_agvs(&x.chrom)
        .into_iter()
        .min_by_key(|&a| (x.per_agv_ticks[a], a))
}

fn task_aisle(scenario: &Scenario, task: TaskId) -> Option<u32> {
    scenario.grid.aisle_id(scenario.tasks[task].pod_cell)
}

/// Aisle holding the most of `agv`'s tasks, ties to the lowest aisle id.
fn densest_aisle(x: &Chromosome, agv: usize, scenario: &Scenario) -> Option<u32> {
    let mut counts: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for &t in x.segment(agv) {
        if let Some(aisle) = task_aisle(scenario, t) {
            *counts.entry(aisle).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(aisle, c)| (c, u32::MAX - aisle))
        .map(|(aisle, _)| aisle)
}

pub fn random_swap(x: &Chromosome, rng: &mut impl Rng) -> Chromosome {
    let busy = busy_agvs(x);
    if busy.len() < 2 {
        return x.clone();
    }
    let a = busy[rng.gen_range(0..busy.len())];
    let b = loop {
        let b = busy[rng.gen_range(0..busy.len())];
        if b != a {
            break b;
        }
    };
    let (sa, _) = x.segment_bounds(a);
    let (sb, _) = x.segment_bounds(b);
    let i = sa + rng.gen_range(0..x.counts[a]);
    let j = sb + rng.gen_range(0..x.counts[b]);
    let mut out = x.clone();
    out.perm.swap(i, j);
    out
}

pub fn random_insertion(x: &Chromosome, rng: &mut impl Rng) -> Chromosome {
    // Donor keeps at least one task (all-AGVs-active policy).
    let donors: Vec<usize> = (0..x.counts.len()).filter(|&a| x.counts[a] >= 2).collect();
    if donors.is_empty() || x.counts.len() < 2 {
        return x.clone();
    }
    let a = donors[rng.gen_range(0..donors.len())];
    let b = loop {
        let b = rng.gen_range(0..x.counts.len());
        if b != a {
            break b;
        }
    };
    let (sa, _) = x.segment_bounds(a);
    let i = sa + rng.gen_range(0..x.counts[a]);
    insert_task(x, i, a, b, rng)
}

/// Removes the task at perm index `i` (owned by AGV `from`) and inserts it
/// at a random position inside AGV `to`'s segment.
fn insert_task(
    x: &Chromosome,
    i: usize,
    from: usize,
    to: usize,
    rng: &mut impl Rng,
) -> Chromosome {
    let mut out = x.clone();
    let task = out.perm.remove(i);
    out.counts[from] -= 1;
    let (sb, eb) = out.segment_bounds(to);
    let pos = sb + rng.gen_range(0..=eb - sb);
    out.perm.insert(pos, task);
    out.counts[to] += 1;
    out
}

/// Stable-groups one AGV's tasks by aisle, groups ordered by first
/// occurrence; idempotent.
pub fn arrangement(x: &Chromosome, agv: usize, scenario: &Scenario) -> Chromosome {
    let (s, e) = x.segment_bounds(agv);
    let seg = &x.perm[s..e];
    let mut order: Vec<Option<u32>> = Vec::new();
    for &t in seg {
        let aisle = task_aisle(scenario, t);
        if !order.contains(&aisle) {
            order.push(aisle);
        }
    }
    let mut grouped = Vec::with_capacity(seg.len());
    for aisle in order {
        grouped.extend(seg.iter().copied().filter(|&t| task_aisle(scenario, t) == aisle));
    }
    let mut out = x.clone();
    out.perm[s..e].copy_from_slice(&grouped);
    out
}

/// Swaps a task of the busiest AGV that lies outside its densest aisle with
/// another AGV's task inside that aisle.
pub fn guided_swap(x: &Evaluated, scenario: &Scenario, rng: &mut impl Rng) -> Chromosome {
    let chrom = &x.chrom;
    let busy = busy_agvs(chrom);
    if busy.len() < 2 {
        return chrom.clone();
    }
    let a = longest_running(x).unwrap();
    let others: Vec<usize> = busy.into_iter().filter(|&b| b != a).collect();
    let b = others[rng.gen_range(0..others.len())];
    let aisle = match densest_aisle(chrom, a, scenario) {
        Some(v) => v,
        None => return chrom.clone(),
    };
    let (sa, ea) = chrom.segment_bounds(a);
    let (sb, eb) = chrom.segment_bounds(b);
    let a_out: Vec<usize> = (sa..ea)
        .filter(|&i| task_aisle(scenario, chrom.perm[i]) != Some(aisle))
        .collect();
    let b_in: Vec<usize> = (sb..eb)
        .filter(|&i| task_aisle(scenario, chrom.perm[i]) == Some(aisle))
        .collect();
    if a_out.is_empty() || b_in.is_empty() {
        return chrom.clone();
    }
    let i = a_out[rng.gen_range(0..a_out.len())];
    let j = b_in[rng.gen_range(0..b_in.len())];
    let mut out = chrom.clone();
    out.perm.swap(i, j);
    out
}

/// Moves one of the busiest AGV's tasks from the least-busy AGV's densest
/// aisle over to that AGV.
pub fn guided_insertion(x: &Evaluated, scenario: &Scenario, rng: &mut impl Rng) -> Chromosome {
    let chrom = &x.chrom;
    if busy_agvs(chrom).len() < 2 {
        return chrom.clone();
    }
    let a = longest_running(x).unwrap();
    let b = shortest_running(x).unwrap();
    if a == b || chrom.counts[a] < 2 {
        return chrom.clone();
    }
    let aisle = match densest_aisle(chrom, b, scenario) {
        Some(v) => v,
        None => return chrom.clone(),
    };
    let (sa, ea) = chrom.segment_bounds(a);
    let movable: Vec<usize> = (sa..ea)
        .filter(|&i| task_aisle(scenario, chrom.perm[i]) == Some(aisle))
        .collect();
    if movable.is_empty() {
        return chrom.clone();
    }
    let i = movable[rng.gen_range(0..movable.len())];
    insert_task(chrom, i, a, b, rng)
}

/// PMX with explicit cut points `[a, b)`; children take the segment from the
/// opposite parent and repair outside genes through the segment mapping.
pub fn pmx_with_cuts(p1: &[TaskId], p2: &[TaskId], a: usize, b: usize) -> (Vec<TaskId>, Vec<TaskId>) {
    fn child(base: &[TaskId], donor: &[TaskId], a: usize, b: usize) -> Vec<TaskId> {
        let mut out = base.to_vec();
        out[a..b].copy_from_slice(&donor[a..b]);
        for i in (0..a).chain(b..out.len()) {
            let mut gene = base[i];
            // Follow the mapping until the gene leaves the donor segment.
            while let Some(k) = donor[a..b].iter().position(|&g| g == gene) {
                gene = base[a + k];
            }
            out[i] = gene;
        }
        out
    }
    (child(p1, p2, a, b), child(p2, p1, a, b))
}

pub fn pmx_crossover(
    p1: &Chromosome,
    p2: &Chromosome,
    rng: &mut impl Rng,
) -> (Vec<TaskId>, Vec<TaskId>) {
    let n = p1.perm.len();
    if n < 2 {
        return (p1.perm.clone(), p2.perm.clone());
    }
    let i = rng.gen_range(0..n);
    let j = rng.gen_range(0..n);
    let (a, b) = (i.min(j), i.max(j) + 1);
    pmx_with_cuts(&p1.perm, &p2.perm, a, b)
}

/// Arithmetic count crossover: `floor(α·p1 + (1−α)·p2)` per AGV, then repair
/// the sum by decrementing the max / incrementing the min count (ties to the
/// lowest AGV index) until Σ = |tasks|.
pub fn arc_crossover(c1: &[usize], c2: &[usize], alpha: f64, n_tasks: usize) -> Vec<usize> {
    let mut out: Vec<usize> = c1
        .iter()
        .zip(c2)
        .map(|(&a, &b)| (alpha * a as f64 + (1.0 - alpha) * b as f64).floor() as usize)
        .collect();
    loop {
        let sum: usize = out.iter().sum();
        match sum.cmp(&n_tasks) {
            std::cmp::Ordering::Equal => break,
            std::cmp::Ordering::Greater => {
                let i = (0..out.len()).max_by_key(|&i| (out[i], usize::MAX - i)).unwrap();
                out[i] -= 1;
            }
            std::cmp::Ordering::Less => {
                let i = (0..out.len()).min_by_key(|&i| (out[i], i)).unwrap();
                out[i] += 1;
            }
        }
    }
    out
}

/// Fast non-dominated sort; front 0 is the non-dominated set.
pub fn non_dominated_sort(pop: &[ObjectiveVector]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(&pop[i], &pop[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// NSGA-II crowding distance; boundary solutions get +∞, fronts of ≤ 2 are
/// all +∞, degenerate objectives contribute 0.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut dist = vec![0.0f64; n];
    let values: Vec<Vec<f64>> = front.iter().map(ObjectiveVector::as_vec).collect();
    let dims = values[0].len();
    for d in 0..dims {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| values[a][d].partial_cmp(&values[b][d]).unwrap());
        let range = values[idx[n - 1]][d] - values[idx[0]][d];
        dist[idx[0]] = f64::INFINITY;
        dist[idx[n - 1]] = f64::INFINITY;
        if range == 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = (values[idx[w + 1]][d] - values[idx[w - 1]][d]) / range;
            dist[idx[w]] += gap;
        }
    }
    dist
}

/// Mutually non-dominated chromosome/objective pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    pub entries: Vec<(Chromosome, ObjectiveVector)>,
}

impl ParetoArchive {
    /// Inserts unless dominated; evicts entries the newcomer dominates.
    /// Exact objective duplicates are kept once.
    pub fn insert(&mut self, chrom: Chromosome, objectives: ObjectiveVector) {
        if objectives == WORST {
            return;
        }
        if self
            .entries
            .iter()
            .any(|(_, o)| dominates(o, &objectives) || *o == objectives)
        {
            return;
        }
        self.entries.retain(|(_, o)| !dominates(&objectives, o));
        self.entries.push((chrom, objectives));
    }

    pub fn fronts(&self) -> Vec<ObjectiveVector> {
        self.entries.iter().map(|&(_, o)| o).collect()
    }
}

/// Adaptive operator weights for ALNS roulette selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorWeights {
    pub operators: Vec<Operator>,
    pub weights: Vec<f64>,
}

impl OperatorWeights {
    pub fn uniform(operators: &[Operator]) -> Self {
        OperatorWeights {
            operators: operators.to_vec(),
            weights: vec![1.0; operators.len()],
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Operator {
        let total: f64 = self.weights.iter().sum();
        let mut r = rng.gen::<f64>() * total;
        for (op, &w) in self.operators.iter().zip(&self.weights) {
            if r < w {
                return *op;
            }
            r -= w;
        }
        *self.operators.last().unwrap()
    }

    /// `w ← λ·w + (1−λ)·s`, s = 2 for the successful operator, 1 otherwise.
    pub fn update(&mut self, successful: Option<Operator>, lambda: f64) {
        for (op, w) in self.operators.iter().zip(self.weights.iter_mut()) {
            let s = if Some(*op) == successful { 2.0 } else { 1.0 };
            *w = lambda * *w + (1.0 - lambda) * s;
        }
    }
}

/// Search budget; evaluation counts give bit-reproducible runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Budget {
    Evaluations(u64),
    Seconds(u64),
}

struct BudgetMeter {
    budget: Budget,
    evaluations: u64,
    started: Instant,
}

impl BudgetMeter {
    fn new(budget: Budget) -> Self {
        BudgetMeter {
            budget,
            evaluations: 0,
            started: Instant::now(),
        }
    }

    fn exhausted(&self) -> bool {
        match self.budget {
            Budget::Evaluations(n) => self.evaluations >= n,
            Budget::Seconds(s) => self.started.elapsed().as_secs() >= s,
        }
    }

    fn count(&mut self, n: u64) {
        self.evaluations += n;
    }
}

/// Algorithm configuration: the benchmark variant uses random-only operators,
/// no ARC (counts copied from one parent) and the earliest-arrival priority;
/// the improved variant uses guided operators, ARC and the energy rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub guided: bool,
    pub use_arc: bool,
    pub mode: PriorityMode,
}

impl Variant {
    pub fn improved() -> Self {
        Variant {
            guided: true,
            use_arc: true,
            mode: PriorityMode::Energy,
        }
    }

    pub fn benchmark() -> Self {
        Variant {
            guided: false,
            use_arc: false,
            mode: PriorityMode::EarliestArrival,
        }
    }

    fn operators(&self) -> &'static [Operator] {
        if self.guided {
            &ALL_OPERATORS
        } else {
            &RANDOM_OPERATORS
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub archive: ParetoArchive,
    /// JSON-lines run log, one record per generation/iteration.
    pub log: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct NsgaParams {
    pub population: usize,
    pub parents: usize,
    pub alpha: f64,
    pub budget: Budget,
    pub seed: u64,
    pub variant: Variant,
}

fn log_record(iter: u64, archive: &ParetoArchive, weights: Option<&OperatorWeights>) -> String {
    let best = |pick: fn(&ObjectiveVector) -> u64| {
        archive.entries.iter().map(|(_, o)| pick(o)).min().unwrap_or(0)
    };
    let weights_json = match weights {
        Some(w) => {
            let parts: Vec<String> = w
                .operators
                .iter()
                .zip(&w.weights)
                .map(|(op, v)| format!("\"{op:?}\":{v:.6}"))
                .collect();
            format!(",\"operator_weights\":{{{}}}", parts.join(","))
        }
        None => String::new(),
    };
    format!(
        "{{\"iter\":{iter},\"archive_size\":{},\"best_G1\":{},\"best_G2\":{},\"best_G3\":{},\"best_G4\":{}{}}}",
        archive.entries.len(),
        best(|o| o.total_ticks),
        best(|o| o.max_ticks),
        best(|o| o.total_joules),
        best(|o| o.max_joules),
        weights_json
    )
}

pub fn nsga2_run(scenario: &Scenario, params: NsgaParams) -> Result<RunResult, SearchError> {
    let n_tasks = scenario.tasks.len();
    let n_agvs = scenario.agvs.len();
    if params.parents < 2 || params.population <= params.parents {
        return Err(SearchError::InvalidParams(format!(
            "need population > parents >= 2, got {} / {}",
            params.population, params.parents
        )));
    }
    if n_tasks == 0 || n_agvs == 0 {
        return Err(SearchError::InvalidParams("empty scenario".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut meter = BudgetMeter::new(params.budget);
    let mut evaluator = Evaluator::new(scenario, params.variant.mode);
    let mut archive = ParetoArchive::default();
    let mut log = Vec::new();

    let mut pop: Vec<Evaluated> = (0..params.population)
        .map(|_| {
            let c = Chromosome::random(n_tasks, n_agvs, &mut rng);
            evaluator.eval(c, &mut meter)
        })
        .collect();
    for e in &pop {
        archive.insert(e.chrom.clone(), e.objectives);
    }

    let mut iter = 0u64;
    let mut stale_generations = 0u32;
    while !meter.exhausted() {
        iter += 1;
        let fresh_before = meter.evaluations;
        // Rank and select the m best by (front, crowding).
        let objs: Vec<ObjectiveVector> = pop.iter().map(|e| e.objectives).collect();
        let fronts = non_dominated_sort(&objs);
        let mut selected: Vec<usize> = Vec::with_capacity(params.parents);
        'outer: for front in &fronts {
            let front_objs: Vec<ObjectiveVector> = front.iter().map(|&i| objs[i]).collect();
            let dist = crowding_distance(&front_objs);
            let mut ranked: Vec<usize> = (0..front.len()).collect();
            ranked.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap().then(a.cmp(&b)));
            for k in ranked {
                selected.push(front[k]);
                if selected.len() == params.parents {
                    break 'outer;
                }
            }
        }
        let parents: Vec<Evaluated> = selected.iter().map(|&i| pop[i].clone()).collect();

        // Offspring: half crossover, half neighborhood operators.
        let n_children = params.population - params.parents;
        let mut children = Vec::with_capacity(n_children);
        for k in 0..n_children {
            let chrom = if stale_generations > 0 && k >= n_children / 2 {
                // Previous generation was fully cached: the parent pool has
                // collapsed, so re-seed the operator half with immigrants.
                Chromosome::random(n_tasks, n_agvs, &mut rng)
            } else if k < n_children / 2 {
                let p1 = &parents[rng.gen_range(0..parents.len())];
                let p2 = &parents[rng.gen_range(0..parents.len())];
                let (perm, _) = pmx_crossover(&p1.chrom, &p2.chrom, &mut rng);
                let counts = if params.variant.use_arc {
                    // A fixed weight collapses section-2 diversity within a
                    // few generations; jitter it around the configured value.
                    let alpha = (params.alpha + rng.gen_range(-0.5..=0.5)).clamp(0.0, 1.0);
                    arc_crossover(&p1.chrom.counts, &p2.chrom.counts, alpha, n_tasks)
                } else {
                    p1.chrom.counts.clone()
                };
                Chromosome { perm, counts }
            } else {
                let ops = params.variant.operators();
                let op = ops[rng.gen_range(0..ops.len())];
                let parent = &parents[rng.gen_range(0..parents.len())];
                apply_productive(op, parent, scenario, &mut rng)
            };
            children.push(evaluator.eval(chrom, &mut meter));
        }
        for e in &children {
            archive.insert(e.chrom.clone(), e.objectives);
        }
        pop = parents;
        pop.extend(children);
        log.push(log_record(iter, &archive, None));
        // Exhausted search space: evaluation budgets must not spin forever
        // once even random immigrants only hit the cache.
        if meter.evaluations == fresh_before {
            stale_generations += 1;
            if stale_generations >= 50 {
                break;
            }
        } else {
            stale_generations = 0;
        }
    }
    Ok(RunResult { archive, log })
}

#[derive(Debug, Clone, Copy)]
pub struct AlnsParams {
    pub budget: Budget,
    pub lambda: f64,
    pub neighbors_per_iter: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for AlnsParams {
    fn default() -> Self {
        AlnsParams {
            budget: Budget::Evaluations(2000),
            lambda: 0.8,
            neighbors_per_iter: 12,
            seed: 0,
            variant: Variant::improved(),
        }
    }
}

pub fn alns_run(scenario: &Scenario, params: AlnsParams) -> Result<RunResult, SearchError> {
    let n_tasks = scenario.tasks.len();
    let n_agvs = scenario.agvs.len();
    if n_tasks == 0 || n_agvs == 0 {
        return Err(SearchError::InvalidParams("empty scenario".into()));
    }
    if params.neighbors_per_iter == 0 {
        return Err(SearchError::InvalidParams("no neighbors per iteration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut meter = BudgetMeter::new(params.budget);
    let mut evaluator = Evaluator::new(scenario, params.variant.mode);
    let mut archive = ParetoArchive::default();
    let mut log = Vec::new();
    let mut weights = OperatorWeights::uniform(params.variant.operators());

    let mut cur_best = evaluator.eval(
        Chromosome::random(n_tasks, n_agvs, &mut rng),
        &mut meter,
    );
    archive.insert(cur_best.chrom.clone(), cur_best.objectives);

    let mut iter = 0u64;
    while !meter.exhausted() {
        iter += 1;
        let mut improved: Option<(Operator, Evaluated)> = None;
        for _ in 0..params.neighbors_per_iter {
            let op = weights.draw(&mut rng);
            let neighbor = evaluator.eval(
                apply_productive(op, &cur_best, scenario, &mut rng),
                &mut meter,
            );
            archive.insert(neighbor.chrom.clone(), neighbor.objectives);
            if improved.is_none() && dominates(&neighbor.objectives, &cur_best.objectives) {
                improved = Some((op, neighbor));
            }
        }
        weights.update(improved.as_ref().map(|(op, _)| *op), params.lambda);
        log.push(log_record(iter, &archive, Some(&weights)));
        match improved {
            Some((_, neighbor)) => cur_best = neighbor,
            // No neighbor dominates the incumbent: converged.
            None => break,
        }
    }
    Ok(RunResult { archive, log })
}
