//! Schedule simulator: executes a task assignment on the shared grid,
//! arbitrating collisions through the priority engine, and scores the
//! resulting schedule on the four objectives.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::priority::{
    choose_priority_with_free, earliest_arrival_priority_with_free, PlanRequest,
    DEFAULT_PERMUTATION_CAP,
};
use crate::router::{
    detect_conflicts, plan_leg, plan_path, GoalHold, PlannedPath, ReservationTable, RouteError,
    SpaceTimeNode,
};
use crate::scenario::{
    manhattan_distance, AgvId, Cell, CellKind, LoadStatus, Scenario, TaskId,
};

/// Ordered task sequences, one per AGV (outer index = AGV id).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub per_agv: Vec<Vec<TaskId>>,
}

impl Assignment {
    /// Every scenario task must appear exactly once across all sequences.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), SimError> {
        if self.per_agv.len() != scenario.agvs.len() {
            return Err(SimError::InvalidAssignment(format!(
                "{} sequences for {} AGVs",
                self.per_agv.len(),
                scenario.agvs.len()
            )));
        }
        let n = scenario.tasks.len();
        let mut seen = vec![false; n];
        for tasks in &self.per_agv {
            for &t in tasks {
                if t >= n {
                    return Err(SimError::InvalidAssignment(format!(
                        "unknown task id {t}"
                    )));
                }
                if seen[t] {
                    return Err(SimError::InvalidAssignment(format!(
                        "task {t} assigned more than once"
                    )));
                }
                seen[t] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(SimError::InvalidAssignment(format!(
                "task {missing} assigned to no AGV"
            )));
        }
        Ok(())
    }
}

/// How simultaneous colliding plans are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorityMode {
    /// Minimize total wasted joules (ties by ticks, then AGV id).
    Energy,
    /// Earliest unimpeded arrival goes first.
    EarliestArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Travel,
    Pick,
    Service,
    Release,
}

/// One tick of one AGV's life.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub tick: u32,
    pub cell: Cell,
    pub phase: Phase,
    pub status: LoadStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgvTrace {
    pub agv: AgvId,
    pub steps: Vec<Step>,
    /// Tick at which the final pod return (incl. release dwell) completes.
    pub completion_tick: u32,
    pub joules: u64,
}

impl AgvTrace {
    /// Position at `tick`, clamped to the trace endpoints (a finished AGV
    /// keeps occupying its final cell).
    pub fn cell_at(&self, tick: u32) -> Cell {
        let first = self.steps.first().expect("trace never empty");
        if tick <= first.tick {
            return first.cell;
        }
        let idx = (tick - first.tick) as usize;
        self.steps
            .get(idx)
            .unwrap_or_else(|| self.steps.last().unwrap())
            .cell
    }
}

/// Per-task milestones: arrival/departure ticks of the pick, service and
/// return stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: TaskId,
    pub agv: AgvId,
    pub station: Cell,
    pub pick_arrival: u32,
    pub pick_end: u32,
    pub service_arrival: u32,
    pub service_end: u32,
    pub return_arrival: u32,
    pub return_end: u32,
}

/// G1–G4, all minimized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub total_ticks: u64,
    pub max_ticks: u64,
    pub total_joules: u64,
    pub max_joules: u64,
}

impl ObjectiveVector {
    pub fn as_vec(&self) -> Vec<f64> {
        vec![
            self.total_ticks as f64,
            self.max_ticks as f64,
            self.total_joules as f64,
            self.max_joules as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub traces: Vec<AgvTrace>,
    pub tasks: Vec<TaskRecord>,
    pub objectives: ObjectiveVector,
    pub per_agv_ticks: Vec<u32>,
    pub per_agv_joules: Vec<u64>,
    /// Priority-engine audit lines, in arbitration order.
    pub decisions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("AGV {agv} stuck routing to ({},{}): {source}", goal.x, goal.y)]
    Stuck {
        agv: AgvId,
        goal: Cell,
        source: RouteError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    ToPod,
    ToStation,
    Return,
}

struct LegRecord {
    path: crate::router::PlannedPath,
    dwell_phase: Phase,
    dwell_end: u32,
}

struct Agent {
    id: AgvId,
    cell: Cell,
    ready: u32,
    queue: std::collections::VecDeque<TaskId>,
    stage: Option<(TaskId, Stage)>,
    legs: Vec<LegRecord>,
    records: Vec<TaskRecord>,
    joules: u64,
    completion: u32,
}

impl Agent {
    fn has_work(&self) -> bool {
        self.stage.is_some() || !self.queue.is_empty()
    }

    /// Goal, load status, dwell length and dwell phase of the next leg.
    fn next_leg(&self, scenario: &Scenario) -> (Cell, LoadStatus, u32, Phase) {
        let timing = &scenario.timing;
        let (task, stage) = match self.stage {
            Some(ts) => ts,
            None => (*self.queue.front().expect("has_work checked"), Stage::ToPod),
        };
        let pod = scenario.tasks[task].pod_cell;
        match stage {
            Stage::ToPod => (pod, LoadStatus::Unloaded, timing.pick_dwell, Phase::Pick),
            Stage::ToStation => {
                let station = scenario
                    .grid
                    .nearest_workstation(pod)
                    .expect("scenario has a workstation");
                (
                    station,
                    LoadStatus::Loaded,
                    timing.workstation_dwell,
                    Phase::Service,
                )
            }
            Stage::Return => (pod, LoadStatus::Unloaded, timing.release_dwell, Phase::Release),
        }
    }
}

/// Executes `assignment` under `mode`; every leg is planned against the
/// shared reservation table in (ready tick, AGV id) order, with the priority
/// engine ordering simultaneous colliding plans.
pub fn simulate(
    scenario: &Scenario,
    assignment: &Assignment,
    mode: PriorityMode,
) -> Result<Schedule, SimError> {
    assignment.validate(scenario)?;
    let grid = &scenario.grid;
    let mut table = ReservationTable::with_default_horizon(grid);
    let mut decisions = Vec::new();

    let mut agents: Vec<Agent> = scenario
        .agvs
        .iter()
        .map(|spec| Agent {
            id: spec.id,
            cell: spec.start_cell,
            ready: 0,
            queue: assignment.per_agv[spec.id].iter().copied().collect(),
            stage: None,
            legs: Vec::new(),
            records: Vec::new(),
            joules: 0,
            completion: 0,
        })
        .collect();

    for agent in &agents {
        table
            .claim_park(agent.cell, 0, agent.id)
            .expect("distinct start cells");
    }

    loop {
        let pending: Vec<usize> = agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.has_work())
            .map(|(i, _)| i)
            .collect();
        if pending.is_empty() {
            break;
        }
        let t = pending.iter().map(|&i| agents[i].ready).min().unwrap();
        let group: Vec<usize> = pending
            .into_iter()
            .filter(|&i| agents[i].ready == t)
            .collect();

        let order = if group.len() == 1 {
            group
        } else {
            arbitrate(scenario, &table, &agents, &group, t, mode, &mut decisions)
        };
        for i in order {
            plan_one_leg(scenario, &mut table, &mut agents[i])?;
        }
    }

    // Scores and traces.
    let per_agv_ticks: Vec<u32> = agents.iter().map(|a| a.completion).collect();
    let per_agv_joules: Vec<u64> = agents.iter().map(|a| a.joules).collect();
    let objectives = ObjectiveVector {
        total_ticks: per_agv_ticks.iter().map(|&t| u64::from(t)).sum(),
        max_ticks: per_agv_ticks.iter().map(|&t| u64::from(t)).max().unwrap_or(0),
        total_joules: per_agv_joules.iter().sum(),
        max_joules: per_agv_joules.iter().copied().max().unwrap_or(0),
    };
    let traces = agents.iter().map(build_trace).collect();
    let mut tasks: Vec<TaskRecord> = agents.iter().flat_map(|a| a.records.clone()).collect();
    tasks.sort_by_key(|r| r.task);

    Ok(Schedule {
        traces,
        tasks,
        objectives,
        per_agv_ticks,
        per_agv_joules,
        decisions,
    })
}

/// Orders simultaneously ready AGVs: mutually conflicting free plans form
/// groups that the priority engine orders; everyone else plans in id order.
fn arbitrate(
    scenario: &Scenario,
    table: &ReservationTable,
    agents: &[Agent],
    group: &[usize],
    tick: u32,
    mode: PriorityMode,
    decisions: &mut Vec<String>,
) -> Vec<usize> {
    let grid = &scenario.grid;
    let energy = &scenario.energy;

    // Base table: everything except the group's own park claims.
    let mut base = table.clone();
    for &i in group {
        base.release_park(agents[i].cell);
    }

    let mut requests = Vec::new();
    let mut paths = Vec::new();
    let mut members = Vec::new();
    for &i in group {
        let agent = &agents[i];
        let (goal, status, _, _) = agent.next_leg(scenario);
        let req = PlanRequest {
            agv: agent.id,
            start: SpaceTimeNode::new(agent.cell, tick),
            goal,
            status,
        };
        if let Ok(path) = plan_path(grid, energy, &base, req.agv, req.start, req.goal, req.status)
        {
            paths.push(path);
            requests.push(req);
            members.push(i);
        }
    }

    // Connected components over free-plan conflicts.
    let mut comp: Vec<usize> = (0..members.len()).collect();
    fn root(comp: &mut Vec<usize>, mut i: usize) -> usize {
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    for record in detect_conflicts(&paths) {
        let a = members
            .iter()
            .position(|&i| agents[i].id == record.agvs.0)
            .unwrap();
        let b = members
            .iter()
            .position(|&i| agents[i].id == record.agvs.1)
            .unwrap();
        let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
        comp[ra.max(rb)] = ra.min(rb);
    }

    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..members.len() {
        buckets.entry(root(&mut comp, k)).or_default().push(k);
    }

    let mut order = Vec::with_capacity(group.len());
    for bucket in buckets.values() {
        if bucket.len() < 2 || bucket.len() > DEFAULT_PERMUTATION_CAP {
            order.extend(bucket.iter().map(|&k| members[k]));
            continue;
        }
        let reqs: Vec<PlanRequest> = bucket.iter().map(|&k| requests[k]).collect();
        let free: Vec<PlannedPath> = bucket.iter().map(|&k| paths[k].clone()).collect();
        let decision = match mode {
            PriorityMode::Energy => choose_priority_with_free(
                grid,
                energy,
                &base,
                &reqs,
                &free,
                DEFAULT_PERMUTATION_CAP,
            ),
            PriorityMode::EarliestArrival => {
                earliest_arrival_priority_with_free(grid, energy, &base, &reqs, &free)
            }
        };
        match decision {
            Ok(d) => {
                decisions.push(d.log_line(tick));
                for agv in &d.ordering {
                    let k = bucket
                        .iter()
                        .copied()
                        .find(|&k| agents[members[k]].id == *agv)
                        .unwrap();
                    order.push(members[k]);
                }
            }
            Err(_) => order.extend(bucket.iter().map(|&k| members[k])),
        }
    }
    // Members whose free plan failed still get their normal turn.
    for &i in group {
        if !order.contains(&i) {
            order.push(i);
        }
    }
    order
}

fn plan_one_leg(
    scenario: &Scenario,
    table: &mut ReservationTable,
    agent: &mut Agent,
) -> Result<(), SimError> {
    let (goal, status, dwell, phase) = agent.next_leg(scenario);
    let (task, stage) = match agent.stage {
        Some(ts) => ts,
        None => {
            let task = agent.queue.pop_front().expect("has_work checked");
            (task, Stage::ToPod)
        }
    };

    let is_final = stage == Stage::Return && agent.queue.is_empty();
    let hold = if is_final {
        GoalHold::Forever
    } else {
        GoalHold::Dwell(dwell)
    };
    table.release_park(agent.cell);
    let start = SpaceTimeNode::new(agent.cell, agent.ready);
    let path = plan_leg(
        &scenario.grid,
        &scenario.energy,
        table,
        agent.id,
        start,
        goal,
        status,
        hold,
    )
    .map_err(|source| SimError::Stuck {
        agv: agent.id,
        goal,
        source,
    })?;
    table.commit_path(&path).map_err(|source| SimError::Stuck {
        agv: agent.id,
        goal,
        source,
    })?;

    let arrival = path.arrival_tick();
    let dwell_end = arrival + dwell;
    table
        .claim_range(goal, arrival + 1, dwell_end, agent.id)
        .map_err(|source| SimError::Stuck {
            agv: agent.id,
            goal,
            source,
        })?;
    if is_final {
        table
            .claim_park(goal, dwell_end + 1, agent.id)
            .map_err(|source| SimError::Stuck {
                agv: agent.id,
                goal,
                source,
            })?;
    }

    agent.joules += path.total_joules;
    agent.legs.push(LegRecord {
        path,
        dwell_phase: phase,
        dwell_end,
    });

    match stage {
        Stage::ToPod => {
            let station = scenario
                .grid
                .nearest_workstation(goal)
                .expect("scenario has a workstation");
            agent.records.push(TaskRecord {
                task,
                agv: agent.id,
                station,
                pick_arrival: arrival,
                pick_end: dwell_end,
                service_arrival: 0,
                service_end: 0,
                return_arrival: 0,
                return_end: 0,
            });
            agent.stage = Some((task, Stage::ToStation));
        }
        Stage::ToStation => {
            let rec = agent.records.last_mut().unwrap();
            rec.service_arrival = arrival;
            rec.service_end = dwell_end;
            agent.stage = Some((task, Stage::Return));
        }
        Stage::Return => {
            let rec = agent.records.last_mut().unwrap();
            rec.return_arrival = arrival;
            rec.return_end = dwell_end;
            agent.stage = None;
            agent.completion = dwell_end;
        }
    }
    agent.cell = goal;
    agent.ready = dwell_end;
    Ok(())
}

fn build_trace(agent: &Agent) -> AgvTrace {
    let mut steps = Vec::new();
    if agent.legs.is_empty() {
        steps.push(Step {
            tick: 0,
            cell: agent.cell,
            phase: Phase::Idle,
            status: LoadStatus::Unloaded,
        });
    }
    for leg in &agent.legs {
        for node in &leg.path.nodes {
            if steps.last().map_or(true, |s: &Step| node.tick > s.tick) {
                steps.push(Step {
                    tick: node.tick,
                    cell: node.cell,
                    phase: Phase::Travel,
                    status: leg.path.status,
                });
            }
        }
        let goal = leg.path.nodes.last().unwrap().cell;
        for tick in leg.path.arrival_tick() + 1..=leg.dwell_end {
            steps.push(Step {
                tick,
                cell: goal,
                phase: leg.dwell_phase,
                status: leg.path.status,
            });
        }
    }
    AgvTrace {
        agv: agent.id,
        steps,
        completion_tick: agent.completion,
        joules: agent.joules,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintFamily {
    Assignment,
    FlowContinuity,
    Dwell,
    Exclusivity,
    Collision,
    Ordering,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub family: ConstraintFamily,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.family, self.detail)
    }
}

/// Checks every schedule invariant; returns violations as data.
pub fn validate_schedule(scenario: &Scenario, schedule: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let timing = &scenario.timing;

    // Assignment: every task exactly once.
    let mut counts = vec![0usize; scenario.tasks.len()];
    for rec in &schedule.tasks {
        if rec.task < counts.len() {
            counts[rec.task] += 1;
        } else {
            out.push(Violation {
                family: ConstraintFamily::Assignment,
                detail: format!("unknown task {}", rec.task),
            });
        }
    }
    for (task, &c) in counts.iter().enumerate() {
        if c != 1 {
            out.push(Violation {
                family: ConstraintFamily::Assignment,
                detail: format!("task {task} completed {c} times"),
            });
        }
    }

    // Pods an AGV may legally stand on.
    let mut allowed_pods: BTreeMap<AgvId, Vec<Cell>> = BTreeMap::new();
    for rec in &schedule.tasks {
        if let Some(t) = scenario.tasks.get(rec.task) {
            allowed_pods.entry(rec.agv).or_default().push(t.pod_cell);
        }
    }

    // Flow continuity: unit steps over traversable cells, ticks consecutive.
    for trace in &schedule.traces {
        for pair in trace.steps.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.tick != a.tick + 1 {
                out.push(Violation {
                    family: ConstraintFamily::FlowContinuity,
                    detail: format!("AGV {} trace jumps tick {} -> {}", trace.agv, a.tick, b.tick),
                });
            }
            if a.cell != b.cell && manhattan_distance(a.cell, b.cell) != 1 {
                out.push(Violation {
                    family: ConstraintFamily::FlowContinuity,
                    detail: format!(
                        "AGV {} teleports ({},{}) -> ({},{}) at tick {}",
                        trace.agv, a.cell.x, a.cell.y, b.cell.x, b.cell.y, b.tick
                    ),
                });
            }
        }
        for step in &trace.steps {
            if !scenario.grid.in_bounds(step.cell) {
                out.push(Violation {
                    family: ConstraintFamily::FlowContinuity,
                    detail: format!("AGV {} leaves the grid at tick {}", trace.agv, step.tick),
                });
            } else if scenario.grid.kind(step.cell) == CellKind::StoragePod
                && !allowed_pods
                    .get(&trace.agv)
                    .map_or(false, |pods| pods.contains(&step.cell))
            {
                out.push(Violation {
                    family: ConstraintFamily::FlowContinuity,
                    detail: format!(
                        "AGV {} enters foreign pod ({},{}) at tick {}",
                        trace.agv, step.cell.x, step.cell.y, step.tick
                    ),
                });
            }
        }
    }

    // Dwell lengths and per-task ordering.
    for rec in &schedule.tasks {
        if rec.pick_end < rec.pick_arrival + timing.pick_dwell {
            out.push(Violation {
                family: ConstraintFamily::Dwell,
                detail: format!(
                    "task {} pick dwell {} < {}",
                    rec.task,
                    rec.pick_end - rec.pick_arrival,
                    timing.pick_dwell
                ),
            });
        }
        if rec.service_end < rec.service_arrival + timing.workstation_dwell {
            out.push(Violation {
                family: ConstraintFamily::Dwell,
                detail: format!(
                    "task {} service dwell {} < {}",
                    rec.task,
                    rec.service_end - rec.service_arrival,
                    timing.workstation_dwell
                ),
            });
        }
        if rec.return_end < rec.return_arrival + timing.release_dwell {
            out.push(Violation {
                family: ConstraintFamily::Dwell,
                detail: format!(
                    "task {} release dwell {} < {}",
                    rec.task,
                    rec.return_end - rec.return_arrival,
                    timing.release_dwell
                ),
            });
        }
        if rec.service_arrival < rec.pick_end || rec.return_arrival < rec.service_end {
            out.push(Violation {
                family: ConstraintFamily::Ordering,
                detail: format!("task {} stages out of order", rec.task),
            });
        }
        if rec.return_arrival < rec.pick_arrival {
            out.push(Violation {
                family: ConstraintFamily::Ordering,
                detail: format!("task {} returns before pickup", rec.task),
            });
        }
    }

    // Per-AGV task sequencing: next pickup only after previous pod returned.
    let mut by_agv: BTreeMap<AgvId, Vec<&TaskRecord>> = BTreeMap::new();
    for rec in &schedule.tasks {
        by_agv.entry(rec.agv).or_default().push(rec);
    }
    for recs in by_agv.values_mut() {
        recs.sort_by_key(|r| r.pick_arrival);
        for pair in recs.windows(2) {
            if pair[1].pick_arrival < pair[0].return_end {
                out.push(Violation {
                    family: ConstraintFamily::Ordering,
                    detail: format!(
                        "AGV {} starts task {} before returning task {}",
                        pair[0].agv, pair[1].task, pair[0].task
                    ),
                });
            }
        }
    }

    // Workstation exclusivity during service.
    for rec in &schedule.tasks {
        for trace in &schedule.traces {
            if trace.agv == rec.agv {
                continue;
            }
            for tick in rec.service_arrival..=rec.service_end {
                if trace.cell_at(tick) == rec.station {
                    out.push(Violation {
                        family: ConstraintFamily::Exclusivity,
                        detail: format!(
                            "AGV {} enters station ({},{}) during task {} service at tick {}",
                            trace.agv, rec.station.x, rec.station.y, rec.task, tick
                        ),
                    });
                    break;
                }
            }
        }
    }

    // Collisions over clamped positions.
    let horizon = schedule
        .traces
        .iter()
        .flat_map(|t| t.steps.last().map(|s| s.tick))
        .max()
        .unwrap_or(0);
    for i in 0..schedule.traces.len() {
        for j in i + 1..schedule.traces.len() {
            let (a, b) = (&schedule.traces[i], &schedule.traces[j]);
            for tick in 0..=horizon {
                let (ca, cb) = (a.cell_at(tick), b.cell_at(tick));
                if ca == cb {
                    out.push(Violation {
                        family: ConstraintFamily::Collision,
                        detail: format!(
                            "AGVs {} and {} share ({},{}) at tick {}",
                            a.agv, b.agv, ca.x, ca.y, tick
                        ),
                    });
                }
                if tick < horizon
                    && a.cell_at(tick + 1) == cb
                    && b.cell_at(tick + 1) == ca
                    && ca != cb
                {
                    out.push(Violation {
                        family: ConstraintFamily::Collision,
                        detail: format!(
                            "AGVs {} and {} swap cells at tick {}",
                            a.agv, b.agv, tick
                        ),
                    });
                }
            }
        }
    }

    out
}

/// Event log CSV: `agv,tick,x,y,phase,status`, ordered by AGV then tick.
pub fn events_csv(schedule: &Schedule) -> String {
    let mut out = String::from("agv,tick,x,y,phase,status\n");
    for trace in &schedule.traces {
        for step in &trace.steps {
            let status = match step.status {
                LoadStatus::Loaded => "loaded",
                LoadStatus::Unloaded => "unloaded",
            };
            out.push_str(&format!(
                "{},{},{},{},{:?},{}\n",
                trace.agv, step.tick, step.cell.x, step.cell.y, step.phase, status
            ));
        }
    }
    out
}

/// `{"G1":..,"G2":..,"G3":..,"G4":..}`.
pub fn objectives_json(v: &ObjectiveVector) -> String {
    format!(
        "{{\"G1\":{},\"G2\":{},\"G3\":{},\"G4\":{}}}",
        v.total_ticks, v.max_ticks, v.total_joules, v.max_joules
    )
}
