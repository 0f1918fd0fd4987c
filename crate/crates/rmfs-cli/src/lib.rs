//! Batch experiment driver: runs assignment-search algorithms and the exact
//! oracle over seeded instances, then emits hypervolume and coverage tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rmfs_core::metrics::{css, hypervolume, reference_point};
use rmfs_core::oracle::{front_json, refined_pareto, DEFAULT_TASK_CAP};
use rmfs_core::scenario::{load_scenario, AgvSpec, Cell, CellKind, Scenario, Task};
use rmfs_core::search::{
    alns_run, dominates, nsga2_run, AlnsParams, Budget, NsgaParams, ParetoArchive, Variant,
};
use rmfs_core::sim::{
    events_csv, objectives_json, simulate, validate_schedule, Assignment, ObjectiveVector,
    PriorityMode, Schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AlnsBench,
    AlnsImproved,
    Nsga2Bench,
    Nsga2Improved,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AlnsBench => "alns_bench",
            Algorithm::AlnsImproved => "alns_improved",
            Algorithm::Nsga2Bench => "nsga2_bench",
            Algorithm::Nsga2Improved => "nsga2_improved",
            Algorithm::Oracle => "oracle",
        }
    }

    fn improved(self) -> bool {
        matches!(self, Algorithm::AlnsImproved | Algorithm::Nsga2Improved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Energy,
    Earliest,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Energy => "energy",
            Mode::Earliest => "earliest",
        }
    }

    fn priority(self) -> PriorityMode {
        match self {
            Mode::Energy => PriorityMode::Energy,
            Mode::Earliest => PriorityMode::EarliestArrival,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanBudget {
    Evaluations(u64),
    Seconds(u64),
}

impl From<PlanBudget> for Budget {
    fn from(b: PlanBudget) -> Budget {
        match b {
            PlanBudget::Evaluations(n) => Budget::Evaluations(n),
            PlanBudget::Seconds(s) => Budget::Seconds(s),
        }
    }
}

fn default_population() -> usize {
    24
}

fn default_parents() -> usize {
    8
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Base scenario supplying the map; tasks and AGV starts are resampled
    /// per repetition from its storage and aisle cells.
    pub scenario: PathBuf,
    pub task_counts: Vec<usize>,
    pub agv_counts: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub budget: PlanBudget,
    pub algorithms: Vec<Algorithm>,
    pub priority_modes: Vec<Mode>,
    #[serde(default = "default_population")]
    pub nsga_population: usize,
    #[serde(default = "default_parents")]
    pub nsga_parents: usize,
    #[serde(default = "default_alpha")]
    pub arc_alpha: f64,
}

impl ExperimentPlan {
    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            bail!("plan needs repetitions >= 1");
        }
        if self.algorithms.is_empty() || self.priority_modes.is_empty() {
            bail!("plan needs at least one algorithm and one priority mode");
        }
        if self.task_counts.is_empty() || self.agv_counts.is_empty() {
            bail!("plan needs task and AGV counts");
        }
        Ok(())
    }
}

/// splitmix64-style stream mixing so every run gets an independent seed.
fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_mul(0xBF58_476D_1CE4_E5B9).rotate_left(31);
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    h
}

fn sample_cells(pool: &[Cell], n: usize, rng: &mut impl Rng) -> Vec<Cell> {
    let mut pool = pool.to_vec();
    for i in 0..n {
        let j = i + rng.gen_range(0..pool.len() - i);
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool
}

/// New instance on the base map: `n_tasks` pods sampled from storage cells,
/// `n_agvs` starts sampled from open cells. The map itself is unchanged, so
/// the base scenario's connectivity invariants carry over.
pub fn derive_instance(
    base: &Scenario,
    n_tasks: usize,
    n_agvs: usize,
    seed: u64,
) -> Result<Scenario> {
    let grid = &base.grid;
    let mut storage = Vec::new();
    let mut open = Vec::new();
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let c = Cell { x, y };
            match grid.kind(c) {
                CellKind::StoragePod => storage.push(c),
                CellKind::Aisle | CellKind::CrossAisle => open.push(c),
                CellKind::Workstation => {}
            }
        }
    }
    if storage.len() < n_tasks {
        bail!("map has {} storage cells, need {n_tasks}", storage.len());
    }
    if open.len() < n_agvs {
        bail!("map has {} open cells, need {n_agvs}", open.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pods = sample_cells(&storage, n_tasks, &mut rng);
    let starts = sample_cells(&open, n_agvs, &mut rng);
    let mut instance = base.clone();
    instance.tasks = pods
        .into_iter()
        .enumerate()
        .map(|(id, pod_cell)| Task { id, pod_cell })
        .collect();
    instance.agvs = starts
        .into_iter()
        .enumerate()
        .map(|(id, start_cell)| AgvSpec { id, start_cell })
        .collect();
    Ok(instance)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub task_count: usize,
    pub agv_count: usize,
    pub repetition: usize,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub seed: u64,
    pub front: Vec<ObjectiveVector>,
    pub hypervolume: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub plan: ExperimentPlan,
    pub runs: Vec<RunRecord>,
    pub hv_rows: Vec<HvRow>,
    pub css_rows: Vec<CssRow>,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HvRow {
    pub task_count: usize,
    pub agv_count: usize,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub mean_hv: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CssRow {
    pub task_count: usize,
    pub agv_count: usize,
    pub row: String,
    pub col: String,
    pub css: f64,
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub seed_override: Option<u64>,
    pub budget_override: Option<PlanBudget>,
}

struct RunSpec {
    name: String,
    task_count: usize,
    agv_count: usize,
    repetition: usize,
    algorithm: Algorithm,
    mode: Mode,
    seed: u64,
    instance: Scenario,
}

struct RunOutcome {
    archive: ParetoArchive,
    log: Vec<String>,
    error: Option<String>,
}

fn execute(spec: &RunSpec, plan: &ExperimentPlan, budget: Budget) -> RunOutcome {
    let variant = Variant {
        guided: spec.algorithm.improved(),
        use_arc: spec.algorithm.improved(),
        mode: spec.mode.priority(),
    };
    let result = match spec.algorithm {
        Algorithm::Oracle => refined_pareto(&spec.instance, spec.mode.priority(), DEFAULT_TASK_CAP)
            .map(|archive| RunOutcome {
                archive,
                log: Vec::new(),
                error: None,
            })
            .map_err(|e| e.to_string()),
        Algorithm::AlnsBench | Algorithm::AlnsImproved => alns_run(
            &spec.instance,
            AlnsParams {
                budget,
                seed: spec.seed,
                variant,
                ..AlnsParams::default()
            },
        )
        .map(|r| RunOutcome {
            archive: r.archive,
            log: r.log,
            error: None,
        })
        .map_err(|e| e.to_string()),
        Algorithm::Nsga2Bench | Algorithm::Nsga2Improved => nsga2_run(
            &spec.instance,
            NsgaParams {
                population: plan.nsga_population,
                parents: plan.nsga_parents,
                alpha: plan.arc_alpha,
                budget,
                seed: spec.seed,
                variant,
            },
        )
        .map(|r| RunOutcome {
            archive: r.archive,
            log: r.log,
            error: None,
        })
        .map_err(|e| e.to_string()),
    };
    result.unwrap_or_else(|e| RunOutcome {
        archive: ParetoArchive::default(),
        log: Vec::new(),
        error: Some(e),
    })
}

fn objective_floats(front: &[ObjectiveVector]) -> Vec<Vec<f64>> {
    front.iter().map(ObjectiveVector::as_vec).collect()
}

fn merged_front(fronts: impl Iterator<Item = ObjectiveVector>) -> Vec<ObjectiveVector> {
    let all: Vec<ObjectiveVector> = fronts.collect();
    let mut out: Vec<ObjectiveVector> = Vec::new();
    for o in all {
        if out.iter().any(|p| dominates(p, &o) || *p == o) {
            continue;
        }
        out.retain(|p| !dominates(&o, p));
        out.push(o);
    }
    out
}

pub fn run_plan(plan: &ExperimentPlan, opts: &PlanOptions) -> Result<Report> {
    let mut plan = plan.clone();
    plan.validate()?;
    if let Some(seed) = opts.seed_override {
        plan.seed = seed;
    }
    if let Some(budget) = opts.budget_override {
        plan.budget = budget;
    }
    let text = fs::read_to_string(&plan.scenario)
        .with_context(|| format!("reading {}", plan.scenario.display()))?;
    let base = load_scenario(&text)?;
    let budget: Budget = plan.budget.into();

    // Each (task count, AGV count, repetition) triple is one shared
    // instance, so algorithm and mode columns stay comparable.
    let mut specs = Vec::new();
    for &tc in &plan.task_counts {
        for &ac in &plan.agv_counts {
            for rep in 0..plan.repetitions {
                let inst_seed = mix_seed(plan.seed, &[tc as u64, ac as u64, rep as u64]);
                let instance = derive_instance(&base, tc, ac, inst_seed)?;
                for (ai, &algorithm) in plan.algorithms.iter().enumerate() {
                    for (mi, &mode) in plan.priority_modes.iter().enumerate() {
                        specs.push(RunSpec {
                            name: format!(
                                "t{tc}_a{ac}_r{rep}_{}_{}",
                                algorithm.name(),
                                mode.name()
                            ),
                            task_count: tc,
                            agv_count: ac,
                            repetition: rep,
                            algorithm,
                            mode,
                            seed: mix_seed(inst_seed, &[ai as u64 + 1, mi as u64 + 1]),
                            instance: instance.clone(),
                        });
                    }
                }
            }
        }
    }

    // Fan out across workers; outcomes land at their spec's index, so the
    // report is identical for any worker count.
    let workers = opts.workers.max(1).min(specs.len().max(1));
    let mut outcomes: Vec<Option<RunOutcome>> = (0..specs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = specs.len().div_ceil(workers);
        for (slice_specs, slice_out) in specs.chunks(chunk).zip(outcomes.chunks_mut(chunk)) {
            let plan = &plan;
            scope.spawn(move || {
                for (spec, out) in slice_specs.iter().zip(slice_out.iter_mut()) {
                    *out = Some(execute(spec, plan, budget));
                }
            });
        }
    });

    fs::create_dir_all(&opts.out_dir)?;
    let mut runs = Vec::with_capacity(specs.len());
    for (spec, outcome) in specs.iter().zip(outcomes.into_iter()) {
        let outcome = outcome.expect("every run executed");
        let run_dir = opts.out_dir.join("runs").join(&spec.name);
        fs::create_dir_all(&run_dir)?;
        fs::write(run_dir.join("front.json"), front_json(&outcome.archive))?;
        if !outcome.log.is_empty() {
            fs::write(run_dir.join("log.jsonl"), outcome.log.join("\n") + "\n")?;
        }
        // One representative schedule per run: the best-G1 front member.
        if let Some((chrom, _)) = outcome
            .archive
            .entries
            .iter()
            .min_by_key(|(_, o)| (o.total_ticks, o.as_vec().iter().map(|&v| v as u64).collect::<Vec<_>>()))
        {
            if let Ok(schedule) =
                simulate(&spec.instance, &chrom.to_assignment(), spec.mode.priority())
            {
                fs::write(run_dir.join("events.csv"), events_csv(&schedule))?;
            }
        }
        runs.push(RunRecord {
            name: spec.name.clone(),
            task_count: spec.task_count,
            agv_count: spec.agv_count,
            repetition: spec.repetition,
            algorithm: spec.algorithm,
            mode: spec.mode,
            seed: spec.seed,
            front: outcome.archive.fronts(),
            hypervolume: None,
            error: outcome.error,
        });
    }

    // Hypervolume shares one reference point per (task count, AGV count)
    // group; columns within a group are directly comparable.
    let mut hv_rows = Vec::new();
    let mut css_rows = Vec::new();
    for &tc in &plan.task_counts {
        for &ac in &plan.agv_counts {
            let group: Vec<usize> = (0..runs.len())
                .filter(|&i| runs[i].task_count == tc && runs[i].agv_count == ac)
                .collect();
            let floats: Vec<Vec<Vec<f64>>> = group
                .iter()
                .map(|&i| objective_floats(&runs[i].front))
                .collect();
            let refs: Vec<&[Vec<f64>]> = floats.iter().map(Vec::as_slice).collect();
            let reference = match reference_point(&refs, 1.1) {
                Some(r) => r,
                None => continue,
            };
            for (&i, front) in group.iter().zip(&floats) {
                if !front.is_empty() {
                    runs[i].hypervolume = Some(hypervolume(front, &reference)?);
                }
            }
            let mut by_column: BTreeMap<(Algorithm, Mode), Vec<usize>> = BTreeMap::new();
            for &i in &group {
                by_column
                    .entry((runs[i].algorithm, runs[i].mode))
                    .or_default()
                    .push(i);
            }
            for (&(algorithm, mode), members) in &by_column {
                let hvs: Vec<f64> = members.iter().filter_map(|&i| runs[i].hypervolume).collect();
                if hvs.is_empty() {
                    continue;
                }
                hv_rows.push(HvRow {
                    task_count: tc,
                    agv_count: ac,
                    algorithm,
                    mode,
                    mean_hv: hvs.iter().sum::<f64>() / hvs.len() as f64,
                    runs: hvs.len(),
                });
            }
            // CSS over per-column fronts merged across repetitions;
            // diagonal omitted.
            let columns: Vec<((Algorithm, Mode), Vec<Vec<f64>>)> = by_column
                .iter()
                .map(|(&key, members)| {
                    let merged = merged_front(
                        members.iter().flat_map(|&i| runs[i].front.iter().copied()),
                    );
                    (key, objective_floats(&merged))
                })
                .collect();
            for (rk, rf) in &columns {
                for (ck, cf) in &columns {
                    if rk == ck || rf.is_empty() || cf.is_empty() {
                        continue;
                    }
                    css_rows.push(CssRow {
                        task_count: tc,
                        agv_count: ac,
                        row: format!("{}_{}", rk.0.name(), rk.1.name()),
                        col: format!("{}_{}", ck.0.name(), ck.1.name()),
                        css: css(rf, cf)?,
                    });
                }
            }
        }
    }

    let summary = summarize(&hv_rows);
    let report = Report {
        plan,
        runs,
        hv_rows,
        css_rows,
        summary,
    };
    write_report_files(&report, &opts.out_dir)?;
    Ok(report)
}

/// Human-readable mean-HV lines; the better half of each bench/improved
/// pair is bolded.
fn summarize(rows: &[HvRow]) -> String {
    let mut out = String::new();
    for row in rows {
        let pair_best = rows
            .iter()
            .filter(|r| {
                r.task_count == row.task_count
                    && r.agv_count == row.agv_count
                    && r.mode == row.mode
                    && family(r.algorithm) == family(row.algorithm)
            })
            .all(|r| r.mean_hv <= row.mean_hv);
        let label = format!(
            "{} tasks, {} AGVs, {} / {}: mean HV {:.6}",
            row.task_count,
            row.agv_count,
            row.algorithm.name(),
            row.mode.name(),
            row.mean_hv
        );
        if pair_best {
            out.push_str(&format!("**{label}**\n"));
        } else {
            out.push_str(&label);
            out.push('\n');
        }
    }
    out
}

fn family(a: Algorithm) -> &'static str {
    match a {
        Algorithm::AlnsBench | Algorithm::AlnsImproved => "alns",
        Algorithm::Nsga2Bench | Algorithm::Nsga2Improved => "nsga2",
        Algorithm::Oracle => "oracle",
    }
}

fn write_report_files(report: &Report, out_dir: &Path) -> Result<()> {
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    let mut hv = String::from("task_count,agv_count,algorithm,mode,mean_hv,runs\n");
    for r in &report.hv_rows {
        hv.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            r.task_count,
            r.agv_count,
            r.algorithm.name(),
            r.mode.name(),
            r.mean_hv,
            r.runs
        ));
    }
    fs::write(out_dir.join("hv_table.csv"), hv)?;
    let mut cssv = String::from("task_count,agv_count,row,col,css\n");
    for r in &report.css_rows {
        cssv.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.task_count, r.agv_count, r.row, r.col, r.css
        ));
    }
    fs::write(out_dir.join("css_matrix.csv"), cssv)?;
    Ok(())
}

/// `simulate` bundle written next to the events file so `validate` can
/// re-check a schedule offline.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScheduleBundle {
    pub scenario: String,
    pub assignment: Assignment,
    pub schedule: Schedule,
}

pub fn cmd_oracle(scenario_path: &Path, mode: Mode, out_dir: Option<&Path>) -> Result<String> {
    let text = fs::read_to_string(scenario_path)
        .with_context(|| format!("reading {}", scenario_path.display()))?;
    let scenario = load_scenario(&text)?;
    let front = refined_pareto(&scenario, mode.priority(), DEFAULT_TASK_CAP)?;
    let json = front_json(&front);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("front.json"), &json)?;
    }
    Ok(json)
}

pub fn cmd_simulate(
    scenario_path: &Path,
    assignment_path: &Path,
    mode: Mode,
    out_dir: Option<&Path>,
) -> Result<String> {
    let text = fs::read_to_string(scenario_path)
        .with_context(|| format!("reading {}", scenario_path.display()))?;
    let scenario = load_scenario(&text)?;
    let assignment: Assignment =
        serde_json::from_str(&fs::read_to_string(assignment_path).with_context(|| {
            format!("reading {}", assignment_path.display())
        })?)?;
    let schedule = simulate(&scenario, &assignment, mode.priority())?;
    let objectives = objectives_json(&schedule.objectives);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("events.csv"), events_csv(&schedule))?;
        fs::write(dir.join("objectives.json"), &objectives)?;
        let bundle = ScheduleBundle {
            scenario: text,
            assignment,
            schedule,
        };
        fs::write(
            dir.join("schedule.json"),
            serde_json::to_string_pretty(&bundle)?,
        )?;
    }
    Ok(objectives)
}

/// Re-validates a `schedule.json` bundle; returns the violation report
/// lines (empty = clean).
pub fn cmd_validate(bundle_path: &Path) -> Result<Vec<String>> {
    let bundle: ScheduleBundle =
        serde_json::from_str(&fs::read_to_string(bundle_path).with_context(|| {
            format!("reading {}", bundle_path.display())
        })?)?;
    let scenario = load_scenario(&bundle.scenario)?;
    Ok(validate_schedule(&scenario, &bundle.schedule)
        .iter()
        .map(|v| v.to_string())
        .collect())
}
