//! Single-AGV shortest-path planning over a space-time reservation network.
//!
//! The search expands (cell, tick) nodes with f = g + h, where g is elapsed
//! ticks since the start time and h is Manhattan distance to the goal.
//! Conflicts outside aisles prune the node; conflicts inside aisles trigger
//! the retreat-based resolve step, which walks the camefrom chain backwards
//! and re-times the pivot node by twice the retreat length.

use crate::scenario::{
    manhattan_distance, step_energy, AgvId, Cell, EnergyModel, GridMap, LoadStatus,
};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::cmp::Reverse;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceTimeNode {
    pub cell: Cell,
    pub tick: u32,
}

impl SpaceTimeNode {
    pub const fn new(cell: Cell, tick: u32) -> Self {
        SpaceTimeNode { cell, tick }
    }
}

/// Committed space-time occupancy: at most one AGV per (cell, tick), and no
/// opposing edge claims (u->v, t) and (v->u, t) by different AGVs.
#[derive(Debug, Clone, Default)]
pub struct ReservationTable {
    vertex_claims: HashMap<(Cell, u32), AgvId>,
    edge_claims: HashMap<(Cell, Cell, u32), AgvId>,
    /// Open-ended occupancy: the cell is held from the given tick onwards,
    /// e.g. an AGV parked after its final pod return.
    park_claims: HashMap<Cell, (AgvId, u32)>,
    horizon: u32,
}

/// Keys inserted by one commit, so a leg can be released when replanned.
#[derive(Debug, Clone, Default)]
pub struct ClaimTicket {
    vertices: Vec<(Cell, u32)>,
    edges: Vec<(Cell, Cell, u32)>,
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("no conflict-free path to goal within the reservation horizon")]
    NoPath,
    #[error("goal unreachable before the planning horizon ({0} ticks)")]
    HorizonExceeded(u32),
    #[error("deadlock unresolvable: both retreat and wait-replan failed")]
    DeadlockUnresolvable,
    #[error("claim at {cell} tick {tick} already held by AGV {holder}")]
    ClaimTaken { cell: Cell, tick: u32, holder: AgvId },
}

impl ReservationTable {
    pub fn new(horizon: u32) -> Self {
        ReservationTable {
            horizon,
            ..Default::default()
        }
    }

    /// Default planning horizon for a grid: 8 * (width + height) ticks.
    pub fn with_default_horizon(grid: &GridMap) -> Self {
        Self::new(8 * (grid.width() + grid.height()) as u32)
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn vertex_owner(&self, cell: Cell, tick: u32) -> Option<AgvId> {
        self.vertex_claims
            .get(&(cell, tick))
            .copied()
            .or_else(|| match self.park_claims.get(&cell) {
                Some(&(agv, from)) if tick >= from => Some(agv),
                _ => None,
            })
    }

    /// Parks `agv` on `cell` from `from` onwards.
    pub fn claim_park(&mut self, cell: Cell, from: u32, agv: AgvId) -> Result<(), RouteError> {
        match self.park_claims.get(&cell) {
            Some(&(holder, _)) if holder != agv => Err(RouteError::ClaimTaken {
                cell,
                tick: from,
                holder,
            }),
            _ => {
                self.park_claims.insert(cell, (agv, from));
                Ok(())
            }
        }
    }

    pub fn release_park(&mut self, cell: Cell) {
        self.park_claims.remove(&cell);
    }

    fn vertex_blocked(&self, agv: AgvId, cell: Cell, tick: u32) -> Option<AgvId> {
        self.vertex_owner(cell, tick).filter(|&o| o != agv)
    }

    /// Head-on check: another AGV claims the opposing edge at the same tick.
    fn swap_blocked(&self, agv: AgvId, from: Cell, to: Cell, tick: u32) -> Option<AgvId> {
        self.edge_claims
            .get(&(to, from, tick))
            .copied()
            .filter(|&o| o != agv)
    }

    /// First conflicting AGV for the step `from@tick -> to@tick+1`, if any.
    pub fn step_conflict(&self, agv: AgvId, from: Cell, to: Cell, tick: u32) -> Option<AgvId> {
        self.vertex_blocked(agv, to, tick + 1)
            .or_else(|| self.swap_blocked(agv, from, to, tick))
    }

    pub fn claim_vertex(&mut self, cell: Cell, tick: u32, agv: AgvId) -> Result<(), RouteError> {
        match self.vertex_claims.get(&(cell, tick)) {
            Some(&holder) if holder != agv => Err(RouteError::ClaimTaken { cell, tick, holder }),
            _ => {
                self.vertex_claims.insert((cell, tick), agv);
                Ok(())
            }
        }
    }

    /// Claims every node and edge of `path`. Fails without partial effects
    /// rolled back only on the conflicting entry; callers commit verified
    /// paths, so a failure here indicates a planner bug.
    pub fn commit_path(&mut self, path: &PlannedPath) -> Result<ClaimTicket, RouteError> {
        // The ticket records only newly inserted keys so release() restores
        // the table exactly even when the path overlaps the AGV's own claims.
        let mut ticket = ClaimTicket::default();
        for node in &path.nodes {
            let key = (node.cell, node.tick);
            let fresh = !self.vertex_claims.contains_key(&key);
            self.claim_vertex(node.cell, node.tick, path.agv)?;
            if fresh {
                ticket.vertices.push(key);
            }
        }
        for pair in path.nodes.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if u.cell != v.cell {
                let key = (u.cell, v.cell, u.tick);
                if self.edge_claims.insert(key, path.agv).is_none() {
                    ticket.edges.push(key);
                }
            }
        }
        Ok(ticket)
    }

    /// Claims `cell` for every tick in `[from, to]`, e.g. dwell or parking.
    pub fn claim_range(
        &mut self,
        cell: Cell,
        from: u32,
        to: u32,
        agv: AgvId,
    ) -> Result<ClaimTicket, RouteError> {
        let mut ticket = ClaimTicket::default();
        for tick in from..=to {
            self.claim_vertex(cell, tick, agv)?;
            ticket.vertices.push((cell, tick));
        }
        Ok(ticket)
    }

    pub fn release(&mut self, ticket: &ClaimTicket) {
        for key in &ticket.vertices {
            self.vertex_claims.remove(key);
        }
        for key in &ticket.edges {
            self.edge_claims.remove(key);
        }
    }

    /// All conflicts `path` would have against currently committed claims.
    pub fn path_conflicts(&self, path: &PlannedPath) -> Vec<(SpaceTimeNode, AgvId)> {
        let mut out = Vec::new();
        for node in &path.nodes {
            if let Some(o) = self.vertex_blocked(path.agv, node.cell, node.tick) {
                out.push((*node, o));
            }
        }
        for pair in path.nodes.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if u.cell != v.cell {
                if let Some(o) = self.swap_blocked(path.agv, u.cell, v.cell, u.tick) {
                    out.push((v, o));
                }
            }
        }
        out
    }

    /// True when no other AGV claims `cell` anywhere in `[from, until]`
    /// (`until = None` means forever). Used to verify that an arriving AGV
    /// can hold its goal cell through a dwell or a terminal park.
    pub fn goal_free(&self, agv: AgvId, cell: Cell, from: u32, until: Option<u32>) -> bool {
        if let Some(&(holder, park_from)) = self.park_claims.get(&cell) {
            if holder != agv && until.map_or(true, |u| park_from <= u) {
                return false;
            }
        }
        self.vertex_claims.iter().all(|(&(c, tick), &holder)| {
            c != cell || holder == agv || tick < from || until.map_or(false, |u| tick > u)
        })
    }
}

/// How long the planner must be able to hold the goal cell after arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalHold {
    /// Arrival tick only (the path itself covers it).
    No,
    /// `n` dwell ticks after arrival.
    Dwell(u32),
    /// Terminal park: the cell must stay free forever.
    Forever,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPath {
    pub agv: AgvId,
    pub nodes: Vec<SpaceTimeNode>,
    pub status: LoadStatus,
    pub total_ticks: u32,
    pub total_joules: u64,
}

impl PlannedPath {
    fn from_nodes(
        agv: AgvId,
        nodes: Vec<SpaceTimeNode>,
        status: LoadStatus,
        energy: &EnergyModel,
    ) -> Self {
        let total_ticks = nodes.last().map_or(0, |n| n.tick) - nodes.first().map_or(0, |n| n.tick);
        let total_joules = nodes
            .windows(2)
            .map(|p| step_energy(status, p[0].cell != p[1].cell, energy))
            .sum();
        PlannedPath {
            agv,
            nodes,
            status,
            total_ticks,
            total_joules,
        }
    }

    pub fn arrival_tick(&self) -> u32 {
        self.nodes.last().map_or(0, |n| n.tick)
    }

    pub fn start_tick(&self) -> u32 {
        self.nodes.first().map_or(0, |n| n.tick)
    }

    /// Cell occupied at `tick`: clamped to the endpoints outside the path span.
    pub fn cell_at(&self, tick: u32) -> Option<Cell> {
        if self.nodes.is_empty() {
            return None;
        }
        if tick <= self.start_tick() {
            return Some(self.nodes[0].cell);
        }
        if tick >= self.arrival_tick() {
            return Some(self.nodes[self.nodes.len() - 1].cell);
        }
        let offset = (tick - self.start_tick()) as usize;
        Some(self.nodes[offset].cell)
    }

    /// CSV dump, one line per tick: `agv_id,tick,x,y,status`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let status = match self.status {
                LoadStatus::Loaded => "L",
                LoadStatus::Unloaded => "U",
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.agv, n.tick, n.cell.x, n.cell.y, status
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConflictKind {
    HeadOn,
    Cross,
    StayOn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictRecord {
    pub kind: ConflictKind,
    pub agvs: (AgvId, AgvId),
    pub cells: Vec<Cell>,
    pub tick: u32,
}

/// Pairwise conflict scan over planned paths. Head-on is an edge swap at the
/// same tick; vertex conflicts are stay-on when either AGV waited into the
/// tick and cross when both moved.
pub fn detect_conflicts(paths: &[PlannedPath]) -> Vec<ConflictRecord> {
    let mut out = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            scan_pair(&paths[i], &paths[j], &mut out);
        }
    }
    out
}

fn moved_into(path: &PlannedPath, tick: u32) -> bool {
    match (path.cell_at(tick.wrapping_sub(1)), path.cell_at(tick)) {
        (Some(prev), Some(cur)) => tick > path.start_tick() && prev != cur,
        _ => false,
    }
}

fn scan_pair(a: &PlannedPath, b: &PlannedPath, out: &mut Vec<ConflictRecord>) {
    if a.nodes.is_empty() || b.nodes.is_empty() {
        return;
    }
    let lo = a.start_tick().min(b.start_tick());
    let hi = a.arrival_tick().max(b.arrival_tick());
    for tick in lo..=hi {
        let (ca, cb) = match (a.cell_at(tick), b.cell_at(tick)) {
            (Some(ca), Some(cb)) => (ca, cb),
            _ => continue,
        };
        if ca == cb {
            let ma = moved_into(a, tick);
            let mb = moved_into(b, tick);
            let kind = if ma && mb {
                ConflictKind::Cross
            } else {
                ConflictKind::StayOn
            };
            out.push(ConflictRecord {
                kind,
                agvs: (a.agv, b.agv),
                cells: vec![ca],
                tick,
            });
        }
        if tick < hi {
            let (na, nb) = match (a.cell_at(tick + 1), b.cell_at(tick + 1)) {
                (Some(na), Some(nb)) => (na, nb),
                _ => continue,
            };
            if na == cb && nb == ca && na != ca {
                out.push(ConflictRecord {
                    kind: ConflictKind::HeadOn,
                    agvs: (a.agv, b.agv),
                    cells: vec![ca, cb],
                    tick,
                });
            }
        }
    }
}

/// Outcome of one resolve invocation, exposed for fixture-level tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedNode {
    /// Retreat pivot re-timed at `pivot_original_tick + 2 * added_time`.
    pub node: SpaceTimeNode,
    pub added_time: u32,
    /// Chain of retreat cells from the node just before the collision back
    /// to the pivot, in retreat order.
    pub retreat_cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolveOutcome {
    Resolved(ResolvedNode),
    /// A different AGV was met during the retreat: replan after waiting
    /// `wait_ticks` and keep the cheaper of the two paths.
    Deadlock { wait_ticks: u32 },
}

/// Walks the camefrom chain backwards from an in-aisle collision with AGV
/// `opponent`, incrementing `added_time` per step, until a node outside the
/// aisle or free of collision with the opponent is found. That node is
/// re-timed at `tick + 2 * added_time`.
pub fn resolve_aisle_collision(
    current: SpaceTimeNode,
    camefrom: &dyn Fn(SpaceTimeNode) -> Option<SpaceTimeNode>,
    grid: &GridMap,
    table: &ReservationTable,
    agv: AgvId,
    opponent: AgvId,
) -> ResolveOutcome {
    let collision_tick = current.tick;
    let mut added_time = 0u32;
    let mut node = current;
    let mut retreat_cells = Vec::new();
    loop {
        added_time += 1;
        node = match camefrom(node) {
            Some(prev) => prev,
            // Retreated past the start of the path: treat as a deadlock and
            // let the caller try waiting instead.
            None => return ResolveOutcome::Deadlock {
                wait_ticks: 2 * added_time,
            },
        };
        retreat_cells.push(node.cell);
        // Wall-clock tick at which the retreating AGV re-occupies this cell.
        let wall = collision_tick + added_time - 1;
        let colliding = table.vertex_owner(node.cell, wall).filter(|&o| o != agv);
        if let Some(other) = colliding {
            if other != opponent {
                return ResolveOutcome::Deadlock {
                    wait_ticks: 2 * added_time,
                };
            }
        }
        if !grid.inside_aisle(node.cell) || colliding.is_none() {
            return ResolveOutcome::Resolved(ResolvedNode {
                node: SpaceTimeNode::new(node.cell, node.tick + 2 * added_time),
                added_time,
                retreat_cells,
            });
        }
    }
}

#[derive(Clone, Copy)]
struct OpenEntry {
    f: u32,
    h: u32,
    tick: u32,
    y: i32,
    x: i32,
    index: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl OpenEntry {
    fn key(&self) -> (u32, u32, u32, i32, i32) {
        (self.f, self.h, self.tick, self.y, self.x)
    }
}

enum Parent {
    Root,
    Step(usize),
    /// Retreat splice: forward chain ends at `from`, then the stored
    /// intermediate nodes lead to the re-timed pivot.
    Segment { from: usize, steps: Vec<SpaceTimeNode> },
}

struct Arena {
    nodes: Vec<(SpaceTimeNode, Parent)>,
}

impl Arena {
    fn push(&mut self, node: SpaceTimeNode, parent: Parent) -> usize {
        self.nodes.push((node, parent));
        self.nodes.len() - 1
    }

    fn reconstruct(&self, mut idx: usize) -> Vec<SpaceTimeNode> {
        let mut rev = Vec::new();
        loop {
            let (node, parent) = &self.nodes[idx];
            rev.push(*node);
            match parent {
                Parent::Root => break,
                Parent::Step(p) => idx = *p,
                Parent::Segment { from, steps } => {
                    for s in steps.iter().rev() {
                        rev.push(*s);
                    }
                    idx = *from;
                }
            }
        }
        rev.reverse();
        rev
    }

    fn chain_lookup(&self, idx: usize) -> HashMap<SpaceTimeNode, SpaceTimeNode> {
        let nodes = self.reconstruct(idx);
        let mut map = HashMap::new();
        for pair in nodes.windows(2) {
            map.insert(pair[1], pair[0]);
        }
        map
    }
}

/// Planner entry point. Returns a path that violates no reservation and,
/// among such paths, minimizes arrival tick under the deterministic open-list
/// tie-break (f, h, tick, y, x).
pub fn plan_path(
    grid: &GridMap,
    energy: &EnergyModel,
    table: &ReservationTable,
    agv: AgvId,
    start: SpaceTimeNode,
    goal: Cell,
    status: LoadStatus,
) -> Result<PlannedPath, RouteError> {
    plan_leg(grid, energy, table, agv, start, goal, status, GoalHold::No)
}

/// Like [`plan_path`] but additionally requires the goal cell to stay free
/// for the given hold after arrival, so dwells and terminal parks can be
/// claimed without conflicting.
#[allow(clippy::too_many_arguments)]
pub fn plan_leg(
    grid: &GridMap,
    energy: &EnergyModel,
    table: &ReservationTable,
    agv: AgvId,
    start: SpaceTimeNode,
    goal: Cell,
    status: LoadStatus,
    hold: GoalHold,
) -> Result<PlannedPath, RouteError> {
    plan_with_depth(grid, energy, table, agv, start, goal, status, hold, 3)
}

#[allow(clippy::too_many_arguments)]
fn plan_with_depth(
    grid: &GridMap,
    energy: &EnergyModel,
    table: &ReservationTable,
    agv: AgvId,
    start: SpaceTimeNode,
    goal: Cell,
    status: LoadStatus,
    hold: GoalHold,
    replan_depth: u32,
) -> Result<PlannedPath, RouteError> {
    let outcome = search(
        grid, energy, table, agv, start, goal, status, hold, /* resolve: */ true,
    )?;
    let (primary_path, deadlock_wait) = (outcome.path, outcome.deadlock_wait);

    // Deadlock fallback: wait, replan, keep the cheaper of the two paths.
    let fallback = match deadlock_wait {
        Some(wait) if replan_depth > 0 => {
            let delayed = SpaceTimeNode::new(start.cell, start.tick + wait);
            if wait <= table.horizon()
                && start_wait_is_free(table, agv, start.cell, start.tick, delayed.tick)
            {
                plan_with_depth(
                    grid,
                    energy,
                    table,
                    agv,
                    delayed,
                    goal,
                    status,
                    hold,
                    replan_depth - 1,
                )
                .ok()
                .map(|p| prepend_wait(p, start.tick, energy))
            } else {
                None
            }
        }
        _ => None,
    };

    match (primary_path, fallback) {
        (Some(a), Some(b)) => Ok(if a.arrival_tick() <= b.arrival_tick() { a } else { b }),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => {
            if deadlock_wait.is_some() {
                Err(RouteError::DeadlockUnresolvable)
            } else if manhattan_distance(start.cell, goal) > table.horizon() {
                Err(RouteError::HorizonExceeded(start.tick + table.horizon()))
            } else {
                Err(RouteError::NoPath)
            }
        }
    }
}

fn start_wait_is_free(table: &ReservationTable, agv: AgvId, cell: Cell, from: u32, to: u32) -> bool {
    (from..=to).all(|t| table.vertex_owner(cell, t).map_or(true, |o| o == agv))
}

fn prepend_wait(path: PlannedPath, original_start: u32, energy: &EnergyModel) -> PlannedPath {
    let mut nodes: Vec<SpaceTimeNode> = (original_start..path.start_tick())
        .map(|t| SpaceTimeNode::new(path.nodes[0].cell, t))
        .collect();
    nodes.extend(path.nodes.iter().copied());
    PlannedPath::from_nodes(path.agv, nodes, path.status, energy)
}

struct SearchOutcome {
    path: Option<PlannedPath>,
    deadlock_wait: Option<u32>,
}

#[allow(clippy::too_many_arguments)]
fn search(
    grid: &GridMap,
    energy: &EnergyModel,
    table: &ReservationTable,
    agv: AgvId,
    start: SpaceTimeNode,
    goal: Cell,
    status: LoadStatus,
    hold: GoalHold,
    resolve: bool,
) -> Result<SearchOutcome, RouteError> {
    // The start cell is exempt from the pod rule: an AGV lifting a pod
    // stands on that pod's cell when its next leg begins.
    if !grid.in_bounds(start.cell) || !grid.traversable(goal, Some(goal)) {
        return Err(RouteError::NoPath);
    }
    // The horizon bounds search depth relative to the start tick.
    let limit = start.tick + table.horizon();
    let mut arena = Arena { nodes: Vec::new() };
    let mut open = BinaryHeap::new();
    let mut closed: HashSet<SpaceTimeNode> = HashSet::new();
    let mut pivots_emitted: HashSet<SpaceTimeNode> = HashSet::new();
    let mut deadlock_wait: Option<u32> = None;
    let mut truncated_by_horizon = false;

    let h0 = manhattan_distance(start.cell, goal);
    let root = arena.push(start, Parent::Root);
    open.push(Reverse(OpenEntry {
        f: h0,
        h: h0,
        tick: start.tick,
        y: start.cell.y,
        x: start.cell.x,
        index: root,
    }));

    while let Some(Reverse(entry)) = open.pop() {
        let (node, _) = arena.nodes[entry.index];
        if closed.contains(&node) {
            continue;
        }
        closed.insert(node);

        if node.cell == goal {
            let held = match hold {
                GoalHold::No => true,
                GoalHold::Dwell(d) => table.goal_free(agv, goal, node.tick + 1, Some(node.tick + d)),
                GoalHold::Forever => table.goal_free(agv, goal, node.tick + 1, None),
            };
            if !held {
                // Arriving here strands the AGV in someone else's claim
                // window; keep searching for a later or different arrival.
                continue;
            }
            let nodes = arena.reconstruct(entry.index);
            let path = PlannedPath::from_nodes(agv, nodes, status, energy);
            if table.path_conflicts(&path).is_empty() {
                return Ok(SearchOutcome {
                    path: Some(path),
                    deadlock_wait,
                });
            }
            // A spliced retreat segment ended up conflicting: drop this
            // candidate and keep searching.
            continue;
        }

        let next_tick = node.tick + 1;
        if next_tick > limit {
            truncated_by_horizon = true;
            continue;
        }

        let mut successors: Vec<Cell> = vec![node.cell];
        successors.extend(grid.neighbors(node.cell, Some(goal)));

        for succ_cell in successors {
            let succ = SpaceTimeNode::new(succ_cell, next_tick);
            if closed.contains(&succ) {
                continue;
            }
            match table.step_conflict(agv, node.cell, succ_cell, node.tick) {
                None => {
                    let idx = arena.push(succ, Parent::Step(entry.index));
                    let h = manhattan_distance(succ_cell, goal);
                    let g = succ.tick - start.tick;
                    open.push(Reverse(OpenEntry {
                        f: g + h,
                        h,
                        tick: succ.tick,
                        y: succ_cell.y,
                        x: succ_cell.x,
                        index: idx,
                    }));
                }
                Some(opponent) => {
                    if !resolve || !grid.inside_aisle(succ_cell) {
                        // Outside aisles the node is simply not expanded.
                        continue;
                    }
                    let chain = arena.chain_lookup(entry.index);
                    let succ_for_chain = succ;
                    let camefrom = |n: SpaceTimeNode| {
                        if n == succ_for_chain {
                            Some(node)
                        } else {
                            chain.get(&n).copied()
                        }
                    };
                    match resolve_aisle_collision(succ, &camefrom, grid, table, agv, opponent) {
                        ResolveOutcome::Resolved(resolved) => {
                            if resolved.node.tick > limit {
                                truncated_by_horizon = true;
                                continue;
                            }
                            if closed.contains(&resolved.node)
                                || !pivots_emitted.insert(resolved.node)
                            {
                                continue;
                            }
                            // Splice the physical retreat: forward prefix ends
                            // at the node before the collision; the AGV then
                            // steps back along the chain and waits at the
                            // pivot until its re-timed tick.
                            let steps = build_retreat_steps(node, &resolved);
                            if !segment_is_free(table, agv, node, &steps, resolved.node) {
                                continue;
                            }
                            let idx = arena.push(
                                resolved.node,
                                Parent::Segment {
                                    from: entry.index,
                                    steps,
                                },
                            );
                            let h = manhattan_distance(resolved.node.cell, goal);
                            let g = resolved.node.tick - start.tick;
                            open.push(Reverse(OpenEntry {
                                f: g + h,
                                h,
                                tick: resolved.node.tick,
                                y: resolved.node.cell.y,
                                x: resolved.node.cell.x,
                                index: idx,
                            }));
                        }
                        ResolveOutcome::Deadlock { wait_ticks } => {
                            deadlock_wait = Some(
                                deadlock_wait.map_or(wait_ticks, |w: u32| w.min(wait_ticks)),
                            );
                        }
                    }
                }
            }
        }
    }

    if truncated_by_horizon && deadlock_wait.is_none() {
        return Err(RouteError::HorizonExceeded(limit));
    }
    Ok(SearchOutcome {
        path: None,
        deadlock_wait,
    })
}

/// A spliced retreat must itself respect every reservation; the resolve rule
/// only inspects the collision tick, so each back-step and pivot wait is
/// re-checked here before the segment enters the arena.
fn segment_is_free(
    table: &ReservationTable,
    agv: AgvId,
    before: SpaceTimeNode,
    steps: &[SpaceTimeNode],
    pivot: SpaceTimeNode,
) -> bool {
    let mut prev = before;
    for &n in steps.iter().chain(std::iter::once(&pivot)) {
        if table.step_conflict(agv, prev.cell, n.cell, prev.tick).is_some() {
            return false;
        }
        prev = n;
    }
    true
}

/// Intermediate nodes between the pre-collision node (exclusive) and the
/// re-timed pivot (exclusive): back-steps along the retreat chain, then
/// waiting at the pivot cell.
fn build_retreat_steps(before: SpaceTimeNode, resolved: &ResolvedNode) -> Vec<SpaceTimeNode> {
    let mut steps = Vec::new();
    let mut tick = before.tick;
    // retreat_cells[0] is `before.cell` itself (first camefrom step).
    for &cell in resolved.retreat_cells.iter().skip(1) {
        tick += 1;
        steps.push(SpaceTimeNode::new(cell, tick));
    }
    let pivot = resolved.node;
    let arrived = if steps.is_empty() { before.tick } else { tick };
    for t in arrived + 1..pivot.tick {
        steps.push(SpaceTimeNode::new(pivot.cell, t));
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn open_grid() -> GridMap {
        let doc = "rmfs-scenario v1\nmap:\n\
                   W . . . . .\n\
                   . . . . . .\n\
                   . . . . . .\n\
                   . . . . . .\n";
        load_scenario(doc).unwrap().grid
    }

    /// Horizontal corridor at y=1, pods above and below, exits at both ends.
    fn corridor_grid() -> GridMap {
        let doc = "rmfs-scenario v1\nmap:\n\
                   + # # # # # # +\n\
                   + . . . . . . +\n\
                   + # # # # # # +\n\
                   W + + + + + + +\n";
        load_scenario(doc).unwrap().grid
    }

    #[test]
    fn straight_line_unobstructed() {
        let grid = open_grid();
        let energy = EnergyModel::default();
        let table = ReservationTable::with_default_horizon(&grid);
        let path = plan_path(
            &grid,
            &energy,
            &table,
            0,
            SpaceTimeNode::new(Cell::new(0, 0), 0),
            Cell::new(3, 0),
            LoadStatus::Unloaded,
        )
        .unwrap();
        assert_eq!(path.total_ticks, 3);
        assert_eq!(path.arrival_tick(), 3);
        assert_eq!(path.total_joules, 600);
    }

    #[test]
    fn stationary_blocker_in_corridor_forever() {
        // Single-row corridor: no way around a permanently parked AGV.
        let doc = "rmfs-scenario v1\nmap:\nW . . . . . . .\n";
        let grid = load_scenario(doc).unwrap().grid;
        let energy = EnergyModel::default();
        let mut table = ReservationTable::new(60);
        // AGV 1 parked mid-corridor indefinitely.
        table.claim_park(Cell::new(3, 0), 0, 1).unwrap();
        let err = plan_path(
            &grid,
            &energy,
            &table,
            0,
            SpaceTimeNode::new(Cell::new(1, 0), 0),
            Cell::new(6, 0),
            LoadStatus::Unloaded,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            RouteError::NoPath | RouteError::HorizonExceeded(_) | RouteError::DeadlockUnresolvable
        ));
    }

    /// Head-on meeting inside an aisle: the opposing AGV advances down the
    /// corridor, pauses in front of its pod and vacates two ticks after the
    /// first contact.
    fn figure6_table() -> (GridMap, ReservationTable) {
        let grid = corridor_grid();
        let mut table = ReservationTable::with_default_horizon(&grid);
        let b = 1;
        // B: (2,1)@0 (3,1)@1 (4,1)@2..4, then into its pod (4,0)@5 onwards.
        table.claim_vertex(Cell::new(2, 1), 0, b).unwrap();
        table.claim_vertex(Cell::new(3, 1), 1, b).unwrap();
        table
            .edge_claims
            .insert((Cell::new(2, 1), Cell::new(3, 1), 0), b);
        for t in 2..=4 {
            table.claim_vertex(Cell::new(4, 1), t, b).unwrap();
        }
        table
            .edge_claims
            .insert((Cell::new(3, 1), Cell::new(4, 1), 1), b);
        table.claim_park(Cell::new(4, 0), 5, b).unwrap();
        table
            .edge_claims
            .insert((Cell::new(4, 1), Cell::new(4, 0), 4), b);
        (grid, table)
    }

    #[test]
    fn figure6_resolve_added_time() {
        let (grid, table) = figure6_table();
        // A walked (5,1)@0 -> (4,1)@1 and its successor (3,1)@2 collides
        // head-on with B's (3,1)->(4,1) move.
        let n0 = SpaceTimeNode::new(Cell::new(5, 1), 0);
        let n1 = SpaceTimeNode::new(Cell::new(4, 1), 1);
        let n2 = SpaceTimeNode::new(Cell::new(3, 1), 2);
        let camefrom = move |n: SpaceTimeNode| {
            if n == n2 {
                Some(n1)
            } else if n == n1 {
                Some(n0)
            } else {
                None
            }
        };
        match resolve_aisle_collision(n2, &camefrom, &grid, &table, 0, 1) {
            ResolveOutcome::Resolved(r) => {
                assert_eq!(r.added_time, 2);
                // Pivot (5,1)@0 re-timed at 0 + 2*2 = 4.
                assert_eq!(r.node, SpaceTimeNode::new(Cell::new(5, 1), 4));
            }
            other => panic!("expected resolution, got {other:?}"),
        }
    }

    #[test]
    fn figure6_path_extended_by_four_ticks() {
        let (grid, table) = figure6_table();
        let energy = EnergyModel::default();
        let start = SpaceTimeNode::new(Cell::new(5, 1), 0);
        let goal = Cell::new(0, 1);
        let empty = ReservationTable::with_default_horizon(&grid);
        let free = plan_path(&grid, &energy, &empty, 0, start, goal, LoadStatus::Unloaded).unwrap();
        let blocked =
            plan_path(&grid, &energy, &table, 0, start, goal, LoadStatus::Unloaded).unwrap();
        assert_eq!(free.arrival_tick(), 5);
        assert_eq!(blocked.arrival_tick() - free.arrival_tick(), 4);
        assert!(table.path_conflicts(&blocked).is_empty());
    }

    #[test]
    fn resolve_single_step_retimes_by_two() {
        let grid = corridor_grid();
        let mut table = ReservationTable::with_default_horizon(&grid);
        // Opponent occupies (3,1) exactly when A would retreat into (4,1)@1?
        // No: occupy the colliding cell only, so one back-step resolves.
        table.claim_vertex(Cell::new(3, 1), 2, 1).unwrap();
        let n0 = SpaceTimeNode::new(Cell::new(5, 1), 0);
        let n1 = SpaceTimeNode::new(Cell::new(4, 1), 1);
        let n2 = SpaceTimeNode::new(Cell::new(3, 1), 2);
        let camefrom = move |n: SpaceTimeNode| {
            if n == n2 {
                Some(n1)
            } else if n == n1 {
                Some(n0)
            } else {
                None
            }
        };
        match resolve_aisle_collision(n2, &camefrom, &grid, &table, 0, 1) {
            ResolveOutcome::Resolved(r) => {
                assert_eq!(r.added_time, 1);
                assert_eq!(r.node, SpaceTimeNode::new(Cell::new(4, 1), 1 + 2));
            }
            other => panic!("expected resolution, got {other:?}"),
        }
    }

    #[test]
    fn third_agv_during_retreat_takes_wait_branch() {
        let grid = corridor_grid();
        let mut table = ReservationTable::with_default_horizon(&grid);
        // Opponent B blocks ahead; a third AGV C occupies the retreat cell
        // at the retreat tick.
        table.claim_vertex(Cell::new(3, 1), 2, 1).unwrap();
        table.claim_vertex(Cell::new(4, 1), 2, 2).unwrap();
        let n0 = SpaceTimeNode::new(Cell::new(5, 1), 0);
        let n1 = SpaceTimeNode::new(Cell::new(4, 1), 1);
        let n2 = SpaceTimeNode::new(Cell::new(3, 1), 2);
        let camefrom = move |n: SpaceTimeNode| {
            if n == n2 {
                Some(n1)
            } else if n == n1 {
                Some(n0)
            } else {
                None
            }
        };
        match resolve_aisle_collision(n2, &camefrom, &grid, &table, 0, 1) {
            ResolveOutcome::Deadlock { wait_ticks } => assert_eq!(wait_ticks, 2),
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn detect_disjoint_paths_empty() {
        let energy = EnergyModel::default();
        let a = PlannedPath::from_nodes(
            0,
            vec![
                SpaceTimeNode::new(Cell::new(0, 0), 0),
                SpaceTimeNode::new(Cell::new(1, 0), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        let b = PlannedPath::from_nodes(
            1,
            vec![
                SpaceTimeNode::new(Cell::new(0, 3), 0),
                SpaceTimeNode::new(Cell::new(1, 3), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        assert!(detect_conflicts(&[a, b]).is_empty());
    }

    #[test]
    fn detect_head_on() {
        let energy = EnergyModel::default();
        let a = PlannedPath::from_nodes(
            0,
            vec![
                SpaceTimeNode::new(Cell::new(0, 0), 0),
                SpaceTimeNode::new(Cell::new(1, 0), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        let b = PlannedPath::from_nodes(
            1,
            vec![
                SpaceTimeNode::new(Cell::new(1, 0), 0),
                SpaceTimeNode::new(Cell::new(0, 0), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        let conflicts = detect_conflicts(&[a, b]);
        assert!(conflicts.iter().any(|c| c.kind == ConflictKind::HeadOn));
    }

    #[test]
    fn detect_stay_on() {
        let energy = EnergyModel::default();
        let a = PlannedPath::from_nodes(
            0,
            vec![
                SpaceTimeNode::new(Cell::new(2, 2), 0),
                SpaceTimeNode::new(Cell::new(2, 2), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        let b = PlannedPath::from_nodes(
            1,
            vec![
                SpaceTimeNode::new(Cell::new(2, 1), 0),
                SpaceTimeNode::new(Cell::new(2, 2), 1),
            ],
            LoadStatus::Unloaded,
            &energy,
        );
        let conflicts = detect_conflicts(&[a, b]);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].kind, ConflictKind::StayOn);
        assert_eq!(conflicts[0].tick, 1);
    }

    #[test]
    fn monotonic_ticks_and_energy_consistency() {
        let grid = open_grid();
        let energy = EnergyModel::default();
        let table = ReservationTable::with_default_horizon(&grid);
        let path = plan_path(
            &grid,
            &energy,
            &table,
            0,
            SpaceTimeNode::new(Cell::new(0, 0), 5),
            Cell::new(5, 3),
            LoadStatus::Loaded,
        )
        .unwrap();
        for pair in path.nodes.windows(2) {
            assert_eq!(pair[1].tick, pair[0].tick + 1);
        }
        let recomputed: u64 = path
            .nodes
            .windows(2)
            .map(|p| step_energy(path.status, p[0].cell != p[1].cell, &energy))
            .sum();
        assert_eq!(recomputed, path.total_joules);
    }
}
