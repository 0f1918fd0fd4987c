//! Collision priority arbitration: evaluate every ordering of the colliding
//! AGVs and pick the one that wastes the least energy, tie-broken by wasted
//! time, then by lexicographic AGV id order.

use crate::router::{plan_path, PlannedPath, ReservationTable, RouteError, SpaceTimeNode};
use crate::scenario::{AgvId, Cell, EnergyModel, GridMap, LoadStatus};
use std::collections::BTreeMap;
use thiserror::Error;

/// One colliding AGV's pending routing request.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest {
    pub agv: AgvId,
    pub start: SpaceTimeNode,
    pub goal: Cell,
    pub status: LoadStatus,
}

#[derive(Debug, Clone)]
pub struct PriorityDecision {
    /// AGV ids from highest to lowest priority.
    pub ordering: Vec<AgvId>,
    pub wasted_ticks_total: u32,
    pub wasted_joules_total: u64,
    pub per_agv: BTreeMap<AgvId, (u32, u64)>,
    /// Paths planned under the chosen ordering, in priority order.
    pub paths: Vec<PlannedPath>,
}

impl PriorityDecision {
    /// Audit log line: `tick,agvs,chosen_order,wasted_J,wasted_s`.
    pub fn log_line(&self, tick: u32) -> String {
        let mut agvs: Vec<AgvId> = self.ordering.clone();
        agvs.sort_unstable();
        let agvs = agvs
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("|");
        let order = self
            .ordering
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("|");
        format!(
            "{},{},{},{},{}",
            tick, agvs, order, self.wasted_joules_total, self.wasted_ticks_total
        )
    }
}

pub const DEFAULT_PERMUTATION_CAP: usize = 4;

#[derive(Debug, Error)]
pub enum PriorityError {
    #[error("{count} colliding AGVs exceed the permutation cap {cap}")]
    TooManyAgvs { count: usize, cap: usize },
    #[error("priority arbitration needs at least two colliding AGVs, got {0}")]
    TooFewAgvs(usize),
    #[error("no ordering admits conflict-free paths for every AGV")]
    NoFeasibleOrdering,
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// Delay an AGV suffers when planned after `higher`: the arrival difference
/// between planning against `higher` and planning as if the colliding
/// higher-priority AGVs were absent. Wasted energy prices each delayed tick
/// at the per-meter rate of the AGV's load status.
pub fn wasted_cost(
    grid: &GridMap,
    energy: &EnergyModel,
    req: &PlanRequest,
    higher: &ReservationTable,
    without_colliders: &ReservationTable,
) -> Result<(u32, u64, PlannedPath), RouteError> {
    let free = plan_path(
        grid,
        energy,
        without_colliders,
        req.agv,
        req.start,
        req.goal,
        req.status,
    )?;
    let actual = plan_path(grid, energy, higher, req.agv, req.start, req.goal, req.status)?;
    let wasted_ticks = actual.arrival_tick().saturating_sub(free.arrival_tick());
    let rate = match req.status {
        LoadStatus::Loaded => energy.loaded_j_per_m,
        LoadStatus::Unloaded => energy.unloaded_j_per_m,
    };
    Ok((wasted_ticks, u64::from(wasted_ticks) * rate, actual))
}

/// Like [`wasted_cost`] but with the collider-free path precomputed; the
/// highest-priority AGV reuses it outright since it plans against the bare
/// table. `table` must hold exactly the base claims on entry and is restored
/// before returning, so one clone serves every ordering.
fn evaluate_ordering(
    grid: &GridMap,
    energy: &EnergyModel,
    table: &mut ReservationTable,
    requests: &[PlanRequest],
    free: &[PlannedPath],
    order: &[usize],
) -> Result<PriorityDecision, RouteError> {
    let mut tickets = Vec::with_capacity(order.len());
    let result = (|| {
        let mut per_agv = BTreeMap::new();
        let mut paths = Vec::with_capacity(order.len());
        let mut ticks_total = 0u32;
        let mut joules_total = 0u64;
        for (pos, &i) in order.iter().enumerate() {
            let req = &requests[i];
            let actual = if pos == 0 {
                free[i].clone()
            } else {
                plan_path(grid, energy, table, req.agv, req.start, req.goal, req.status)?
            };
            let wt = actual.arrival_tick().saturating_sub(free[i].arrival_tick());
            let rate = match req.status {
                LoadStatus::Loaded => energy.loaded_j_per_m,
                LoadStatus::Unloaded => energy.unloaded_j_per_m,
            };
            let wj = u64::from(wt) * rate;
            tickets.push(table.commit_path(&actual)?);
            per_agv.insert(req.agv, (wt, wj));
            ticks_total += wt;
            joules_total += wj;
            paths.push(actual);
        }
        Ok(PriorityDecision {
            ordering: order.iter().map(|&i| requests[i].agv).collect(),
            wasted_ticks_total: ticks_total,
            wasted_joules_total: joules_total,
            per_agv,
            paths,
        })
    })();
    for ticket in &tickets {
        table.release(ticket);
    }
    result
}

/// Collider-free plan per request; shared by every ordering evaluation.
fn free_paths(
    grid: &GridMap,
    energy: &EnergyModel,
    base: &ReservationTable,
    requests: &[PlanRequest],
) -> Result<Vec<PlannedPath>, RouteError> {
    requests
        .iter()
        .map(|r| plan_path(grid, energy, base, r.agv, r.start, r.goal, r.status))
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    fn recurse(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let item = rest.remove(i);
            prefix.push(item);
            recurse(prefix, rest, out);
            prefix.pop();
            rest.insert(i, item);
        }
    }
    recurse(&mut Vec::new(), &mut items, &mut out);
    out
}

/// Evaluates every priority permutation of the colliding AGVs against `base`
/// (the reservation table without any of their claims) and returns the
/// ordering with minimal total wasted joules, ties broken by wasted ticks,
/// remaining ties by lexicographic AGV id order.
pub fn choose_priority(
    grid: &GridMap,
    energy: &EnergyModel,
    base: &ReservationTable,
    requests: &[PlanRequest],
    cap: usize,
) -> Result<PriorityDecision, PriorityError> {
    if requests.len() < 2 {
        return Err(PriorityError::TooFewAgvs(requests.len()));
    }
    if requests.len() > cap {
        return Err(PriorityError::TooManyAgvs {
            count: requests.len(),
            cap,
        });
    }
    let free = match free_paths(grid, energy, base, requests) {
        Ok(f) => f,
        Err(_) => return Err(PriorityError::NoFeasibleOrdering),
    };
    choose_priority_with_free(grid, energy, base, requests, &free, cap)
}

/// [`choose_priority`] with the collider-free plans already known, e.g. from
/// the caller's own conflict detection pass; `free[i]` must be `requests[i]`
/// planned against `base`.
pub fn choose_priority_with_free(
    grid: &GridMap,
    energy: &EnergyModel,
    base: &ReservationTable,
    requests: &[PlanRequest],
    free: &[PlannedPath],
    cap: usize,
) -> Result<PriorityDecision, PriorityError> {
    if requests.len() < 2 {
        return Err(PriorityError::TooFewAgvs(requests.len()));
    }
    if requests.len() > cap {
        return Err(PriorityError::TooManyAgvs {
            count: requests.len(),
            cap,
        });
    }
    // Lexicographic order over AGV ids makes the final tie-break the
    // first-seen permutation.
    let mut idx: Vec<usize> = (0..requests.len()).collect();
    idx.sort_by_key(|&i| requests[i].agv);
    let sorted: Vec<PlanRequest> = idx.iter().map(|&i| requests[i]).collect();
    let free: Vec<PlannedPath> = idx.iter().map(|&i| free[i].clone()).collect();

    let mut table = base.clone();
    let mut best: Option<PriorityDecision> = None;
    for order in permutations(sorted.len()) {
        let decision = match evaluate_ordering(grid, energy, &mut table, &sorted, &free, &order) {
            Ok(d) => d,
            Err(_) => continue, // infeasible ordering
        };
        let key = (decision.wasted_joules_total, decision.wasted_ticks_total);
        let better = match &best {
            None => true,
            Some(b) => key < (b.wasted_joules_total, b.wasted_ticks_total),
        };
        if better {
            best = Some(decision);
        }
    }
    best.ok_or(PriorityError::NoFeasibleOrdering)
}

/// Benchmark rule: the AGV with the earliest unimpeded arrival goes first,
/// ties to the lower id.
pub fn earliest_arrival_priority(
    grid: &GridMap,
    energy: &EnergyModel,
    base: &ReservationTable,
    requests: &[PlanRequest],
) -> Result<PriorityDecision, PriorityError> {
    let free = free_paths(grid, energy, base, requests)?;
    earliest_arrival_priority_with_free(grid, energy, base, requests, &free)
}

/// [`earliest_arrival_priority`] with the collider-free plans already known;
/// `free[i]` must be `requests[i]` planned against `base`.
pub fn earliest_arrival_priority_with_free(
    grid: &GridMap,
    energy: &EnergyModel,
    base: &ReservationTable,
    requests: &[PlanRequest],
    free: &[PlannedPath],
) -> Result<PriorityDecision, PriorityError> {
    let mut keyed: Vec<(u32, AgvId, usize)> = requests
        .iter()
        .enumerate()
        .map(|(i, req)| (free[i].arrival_tick(), req.agv, i))
        .collect();
    keyed.sort_unstable();
    let order: Vec<usize> = keyed.iter().map(|&(_, _, i)| i).collect();
    let mut table = base.clone();
    Ok(evaluate_ordering(grid, energy, &mut table, requests, free, &order)?)
}
