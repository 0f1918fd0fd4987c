//! Exact Pareto oracle for small instances: exhaustive assignment
//! enumeration, a collision-free relaxed cost model, and a three-stage
//! simulation refinement that yields the true Pareto front.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{manhattan_distance, Scenario};
use crate::search::{dominates, ParetoArchive, Chromosome};
use crate::sim::{simulate, Assignment, ObjectiveVector, PriorityMode};

pub const DEFAULT_TASK_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large: {tasks} tasks exceeds the enumeration cap of {cap}")]
    InstanceTooLarge { tasks: usize, cap: usize },
    #[error("infeasible instance: {0}")]
    Infeasible(String),
}

/// Every ordered split of every task permutation into |AGVs| non-empty
/// contiguous groups: |tasks|! × C(|tasks|−1, |AGVs|−1) assignments.
pub fn enumerate_assignments(
    n_tasks: usize,
    n_agvs: usize,
    cap: usize,
) -> Result<Vec<Assignment>, OracleError> {
    if n_tasks > cap {
        return Err(OracleError::InstanceTooLarge { tasks: n_tasks, cap });
    }
    if n_agvs == 0 || n_tasks < n_agvs {
        return Err(OracleError::Infeasible(format!(
            "{n_tasks} tasks cannot give {n_agvs} AGVs one task each"
        )));
    }
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n_tasks).collect();
    permute(&mut perm, 0, &mut |perm| {
        for counts in compositions(n_tasks, n_agvs) {
            let mut per_agv = Vec::with_capacity(n_agvs);
            let mut at = 0;
            for c in counts {
                per_agv.push(perm[at..at + c].to_vec());
                at += c;
            }
            out.push(Assignment { per_agv });
        }
    });
    Ok(out)
}

/// Heap-style recursive permutation visit in lexicographic prefix order.
fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// All compositions of `n` into exactly `parts` positive integers.
fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(n);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=n - (parts - 1) {
            cur.push(first);
            rec(n - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, parts, &mut Vec::new(), &mut out);
    out
}

/// Collision-free lower bound: per AGV, the Manhattan chain over its task
/// pods plus each pod's fixed round trip to its nearest workstation and all
/// dwells. With one AGV the relaxation is exact.
pub fn relaxed_cost(assignment: &Assignment, scenario: &Scenario) -> ObjectiveVector {
    let timing = &scenario.timing;
    let energy = &scenario.energy;
    let mut totals = ObjectiveVector::default();
    for (agv, seq) in assignment.per_agv.iter().enumerate() {
        let mut ticks = 0u64;
        let mut joules = 0u64;
        let mut cur = scenario.agvs[agv].start_cell;
        for &task in seq {
            let pod = scenario.tasks[task].pod_cell;
            let station = scenario
                .grid
                .nearest_workstation(pod)
                .expect("validated scenarios have workstations");
            let approach = manhattan_distance(cur, pod) as u64;
            let round = manhattan_distance(pod, station) as u64;
            ticks += approach
                + timing.pick_dwell as u64
                + round
                + timing.workstation_dwell as u64
                + round
                + timing.release_dwell as u64;
            joules += approach * energy.unloaded_j_per_m
                + round * energy.loaded_j_per_m
                + round * energy.unloaded_j_per_m;
            cur = pod;
        }
        totals.total_ticks += ticks;
        totals.max_ticks = totals.max_ticks.max(ticks);
        totals.total_joules += joules;
        totals.max_joules = totals.max_joules.max(joules);
    }
    totals
}

fn pareto_filter<T: Clone>(items: &[(T, ObjectiveVector)]) -> Vec<(T, ObjectiveVector)> {
    items
        .iter()
        .filter(|(_, o)| !items.iter().any(|(_, other)| dominates(other, o)))
        .cloned()
        .collect()
}

/// Three-stage refinement: Pareto-filter the relaxed costs, simulate those
/// candidates, rescan for assignments whose relaxed bound is not dominated
/// by any simulated result, simulate them too, and filter the merged set.
pub fn refined_pareto(
    scenario: &Scenario,
    mode: PriorityMode,
    cap: usize,
) -> Result<ParetoArchive, OracleError> {
    let all = enumerate_assignments(scenario.tasks.len(), scenario.agvs.len(), cap)?;
    let relaxed: Vec<(usize, ObjectiveVector)> = all
        .iter()
        .enumerate()
        .map(|(i, a)| (i, relaxed_cost(a, scenario)))
        .collect();

    // Stage 1: Pareto-optimal relaxed candidates.
    let p_init = pareto_filter(&relaxed);
    let mut simulated = vec![None; all.len()];
    let sim_one = |i: usize, slot: &mut Vec<Option<ObjectiveVector>>| {
        if slot[i].is_none() {
            slot[i] = simulate(scenario, &all[i], mode).ok().map(|s| s.objectives);
        }
    };

    // Stage 2: full simulation of the initial candidates.
    for &(i, _) in &p_init {
        sim_one(i, &mut simulated);
    }
    let e_init: Vec<ObjectiveVector> = simulated.iter().flatten().copied().collect();

    // Stage 3: relaxed costs are lower bounds, so any assignment not
    // dominated by a simulated vector may still join the front.
    for &(i, relaxed) in &relaxed {
        if !e_init.iter().any(|o| dominates(o, &relaxed)) {
            sim_one(i, &mut simulated);
        }
    }

    let merged: Vec<(usize, ObjectiveVector)> = simulated
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.map(|o| (i, o)))
        .collect();
    let mut archive = ParetoArchive::default();
    for (i, objectives) in pareto_filter(&merged) {
        archive.insert(Chromosome::from_assignment(&all[i]), objectives);
    }
    if archive.entries.is_empty() {
        return Err(OracleError::Infeasible(
            "no enumerated assignment produced a feasible schedule".into(),
        ));
    }
    Ok(archive)
}

#[derive(Debug, Serialize)]
struct FrontEntry<'a> {
    assignment: &'a Vec<Vec<usize>>,
    #[serde(rename = "G1")]
    g1: u64,
    #[serde(rename = "G2")]
    g2: u64,
    #[serde(rename = "G3")]
    g3: u64,
    #[serde(rename = "G4")]
    g4: u64,
}

/// JSON list of `{assignment, G1..G4}` for an archive.
pub fn front_json(archive: &ParetoArchive) -> String {
    let mut entries: Vec<(Assignment, ObjectiveVector)> = archive
        .entries
        .iter()
        .map(|(c, o)| (c.to_assignment(), *o))
        .collect();
    entries.sort_by_key(|(a, o)| (o.as_vec().iter().map(|&v| v as u64).collect::<Vec<_>>(), a.per_agv.clone()));
    let rows: Vec<FrontEntry> = entries
        .iter()
        .map(|(a, o)| FrontEntry {
            assignment: &a.per_agv,
            g1: o.total_ticks,
            g2: o.max_ticks,
            g3: o.total_joules,
            g4: o.max_joules,
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("front serializes")
}
