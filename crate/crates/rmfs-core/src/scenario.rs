//! Warehouse scenario model: grid geometry, tasks, AGVs and the timing and
//! energy constants shared by every other module.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use thiserror::Error;

/// Grid cell coordinate. `x` grows east (columns), `y` grows south (rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    StoragePod,
    Aisle,
    CrossAisle,
    Workstation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadStatus {
    Loaded,
    Unloaded,
}

pub type AgvId = usize;
pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub pod_cell: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgvSpec {
    pub id: AgvId,
    pub start_cell: Cell,
}

/// Dwell times in ticks. One tick is one second; AGVs move one cell per tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingModel {
    pub pick_dwell: u32,
    pub release_dwell: u32,
    pub workstation_dwell: u32,
}

impl Default for TimingModel {
    fn default() -> Self {
        TimingModel {
            pick_dwell: 8,
            release_dwell: 3,
            workstation_dwell: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub loaded_j_per_m: u64,
    pub unloaded_j_per_m: u64,
    pub wait_j_per_tick: u64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            loaded_j_per_m: 500,
            unloaded_j_per_m: 200,
            wait_j_per_tick: 0,
        }
    }
}

/// Cell-typed warehouse grid with per-cell aisle identifiers.
///
/// Aisle ids are derived at load time: every 4-connected component of plain
/// aisle cells gets one id, and each pod inherits the id of its first
/// adjacent aisle cell in N, E, S, W order. Cross-aisles and workstations
/// carry no aisle id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: i32,
    height: i32,
    kinds: Vec<CellKind>,
    aisle_ids: Vec<Option<u32>>,
    workstations: Vec<Cell>,
}

impl GridMap {
    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c));
        (c.y * self.width + c.x) as usize
    }

    pub fn kind(&self, c: Cell) -> CellKind {
        self.kinds[self.index(c)]
    }

    pub fn aisle_id(&self, c: Cell) -> Option<u32> {
        self.aisle_ids[self.index(c)]
    }

    /// A cell is inside an aisle iff it carries an aisle id.
    pub fn inside_aisle(&self, c: Cell) -> bool {
        self.aisle_id(c).is_some()
    }

    pub fn workstations(&self) -> &[Cell] {
        &self.workstations
    }

    /// True when an AGV whose current pick/return target is `target` may
    /// occupy `c`. Pods other than the target are obstacles.
    pub fn traversable(&self, c: Cell, target: Option<Cell>) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        match self.kind(c) {
            CellKind::StoragePod => target == Some(c),
            _ => true,
        }
    }

    /// 4-neighborhood of `c` restricted to traversable cells, in stable
    /// N, E, S, W order.
    pub fn neighbors(&self, c: Cell, target: Option<Cell>) -> Vec<Cell> {
        let candidates = [
            Cell::new(c.x, c.y - 1),
            Cell::new(c.x + 1, c.y),
            Cell::new(c.x, c.y + 1),
            Cell::new(c.x - 1, c.y),
        ];
        candidates
            .into_iter()
            .filter(|&n| self.traversable(n, target))
            .collect()
    }

    /// Nearest workstation by Manhattan distance, ties to the lowest index.
    pub fn nearest_workstation(&self, from: Cell) -> Option<Cell> {
        self.workstations
            .iter()
            .copied()
            .enumerate()
            .min_by_key(|&(i, w)| (manhattan_distance(from, w), i))
            .map(|(_, w)| w)
    }
}

pub fn manhattan_distance(p: Cell, q: Cell) -> u32 {
    ((p.x - q.x).abs() + (p.y - q.y).abs()) as u32
}

/// Energy spent over one tick: moving costs the per-meter rate of the load
/// status, staying put costs the wait rate.
pub fn step_energy(status: LoadStatus, moved: bool, energy: &EnergyModel) -> u64 {
    if moved {
        match status {
            LoadStatus::Loaded => energy.loaded_j_per_m,
            LoadStatus::Unloaded => energy.unloaded_j_per_m,
        }
    } else {
        energy.wait_j_per_tick
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub grid: GridMap,
    pub tasks: Vec<Task>,
    pub agvs: Vec<AgvSpec>,
    pub timing: TimingModel,
    pub energy: EnergyModel,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses and validates a `rmfs-scenario v1` document.
///
/// The map section is a grid of whitespace-separated cell tokens:
/// `.` aisle, `+` cross-aisle, `#` pod, `W` workstation, `A<n>` AGV start
/// (on an aisle cell), `T<n>` task pod.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty document"))?;
    if header.trim() != "rmfs-scenario v1" {
        return Err(parse_err(1, "expected header `rmfs-scenario v1`"));
    }

    let mut timing = TimingModel::default();
    let mut energy = EnergyModel::default();
    let mut map_rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut in_map = false;

    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if in_map {
            if line.trim().is_empty() {
                continue;
            }
            let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            map_rows.push((lineno, tokens));
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "map:" {
            in_map = true;
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(lineno, format!("expected `key value`, got `{line}`")))?;
        let value = value.trim();
        let parse_u32 = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| parse_err(lineno, format!("invalid number `{v}` for `{key}`")))
        };
        let parse_u64 = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| parse_err(lineno, format!("invalid number `{v}` for `{key}`")))
        };
        match key {
            "pick_dwell" => timing.pick_dwell = parse_u32(value)?,
            "release_dwell" => timing.release_dwell = parse_u32(value)?,
            "workstation_dwell" => timing.workstation_dwell = parse_u32(value)?,
            "loaded_j_per_m" => energy.loaded_j_per_m = parse_u64(value)?,
            "unloaded_j_per_m" => energy.unloaded_j_per_m = parse_u64(value)?,
            "wait_j_per_tick" => energy.wait_j_per_tick = parse_u64(value)?,
            other => return Err(parse_err(lineno, format!("unknown key `{other}`"))),
        }
    }

    if map_rows.is_empty() {
        return Err(ScenarioError::Invariant("document has no map section".into()));
    }

    let height = map_rows.len() as i32;
    let width = map_rows[0].1.len() as i32;
    let mut kinds = vec![CellKind::Aisle; (width * height) as usize];
    let mut workstations = Vec::new();
    let mut agv_starts: HashMap<usize, Cell> = HashMap::new();
    let mut task_pods: HashMap<usize, Cell> = HashMap::new();

    for (y, (lineno, tokens)) in map_rows.iter().enumerate() {
        if tokens.len() as i32 != width {
            return Err(parse_err(
                *lineno,
                format!("row has {} cells, expected {}", tokens.len(), width),
            ));
        }
        for (x, token) in tokens.iter().enumerate() {
            let cell = Cell::new(x as i32, y as i32);
            let idx = (cell.y * width + cell.x) as usize;
            kinds[idx] = match token.as_str() {
                "." => CellKind::Aisle,
                "+" => CellKind::CrossAisle,
                "#" => CellKind::StoragePod,
                "W" => {
                    workstations.push(cell);
                    CellKind::Workstation
                }
                t if t.starts_with('A') => {
                    let id = t[1..].parse::<usize>().map_err(|_| {
                        parse_err(*lineno, format!("invalid AGV token `{t}`"))
                    })?;
                    if agv_starts.insert(id, cell).is_some() {
                        return Err(parse_err(*lineno, format!("duplicate AGV id {id}")));
                    }
                    CellKind::Aisle
                }
                t if t.starts_with('T') => {
                    let id = t[1..].parse::<usize>().map_err(|_| {
                        parse_err(*lineno, format!("invalid task token `{t}`"))
                    })?;
                    if task_pods.insert(id, cell).is_some() {
                        return Err(parse_err(*lineno, format!("duplicate task id {id}")));
                    }
                    CellKind::StoragePod
                }
                t => return Err(parse_err(*lineno, format!("unknown cell token `{t}`"))),
            };
        }
    }

    let mut agvs: Vec<AgvSpec> = Vec::new();
    for id in 0..agv_starts.len() {
        let start_cell = *agv_starts
            .get(&id)
            .ok_or_else(|| ScenarioError::Invariant(format!("AGV ids must be 0..{}, missing {id}", agv_starts.len())))?;
        agvs.push(AgvSpec { id, start_cell });
    }
    let mut tasks: Vec<Task> = Vec::new();
    for id in 0..task_pods.len() {
        let pod_cell = *task_pods
            .get(&id)
            .ok_or_else(|| ScenarioError::Invariant(format!("task ids must be 0..{}, missing {id}", task_pods.len())))?;
        tasks.push(Task { id, pod_cell });
    }

    let mut seen_starts = HashSet::new();
    for agv in &agvs {
        if !seen_starts.insert(agv.start_cell) {
            return Err(ScenarioError::Invariant(format!(
                "duplicate start cell {} for AGV {}",
                agv.start_cell, agv.id
            )));
        }
    }

    let aisle_ids = derive_aisle_ids(width, height, &kinds)?;
    let grid = GridMap {
        width,
        height,
        kinds,
        aisle_ids,
        workstations,
    };

    check_connectivity(&grid, &agvs)?;

    if timing.pick_dwell < 1 || timing.release_dwell < 1 || timing.workstation_dwell < 1 {
        return Err(ScenarioError::Invariant("all dwells must be >= 1 tick".into()));
    }
    if energy.loaded_j_per_m <= energy.unloaded_j_per_m || energy.unloaded_j_per_m == 0 {
        return Err(ScenarioError::Invariant(
            "energy model requires loaded > unloaded > 0".into(),
        ));
    }

    Ok(Scenario {
        grid,
        tasks,
        agvs,
        timing,
        energy,
    })
}

fn derive_aisle_ids(
    width: i32,
    height: i32,
    kinds: &[CellKind],
) -> Result<Vec<Option<u32>>, ScenarioError> {
    let idx = |c: Cell| (c.y * width + c.x) as usize;
    let in_bounds = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < width && c.y < height;
    let mut ids: Vec<Option<u32>> = vec![None; kinds.len()];
    let mut next_id = 0u32;

    // Components of plain aisle cells; cross-aisles and workstations break them.
    for y in 0..height {
        for x in 0..width {
            let c = Cell::new(x, y);
            if kinds[idx(c)] != CellKind::Aisle || ids[idx(c)].is_some() {
                continue;
            }
            let id = next_id;
            next_id += 1;
            let mut queue = VecDeque::from([c]);
            ids[idx(c)] = Some(id);
            while let Some(cur) = queue.pop_front() {
                for n in [
                    Cell::new(cur.x, cur.y - 1),
                    Cell::new(cur.x + 1, cur.y),
                    Cell::new(cur.x, cur.y + 1),
                    Cell::new(cur.x - 1, cur.y),
                ] {
                    if in_bounds(n) && kinds[idx(n)] == CellKind::Aisle && ids[idx(n)].is_none() {
                        ids[idx(n)] = Some(id);
                        queue.push_back(n);
                    }
                }
            }
        }
    }

    // Pods inherit the aisle of their first adjacent aisle cell (N, E, S, W).
    for y in 0..height {
        for x in 0..width {
            let c = Cell::new(x, y);
            if kinds[idx(c)] != CellKind::StoragePod {
                continue;
            }
            let adjacent = [
                Cell::new(c.x, c.y - 1),
                Cell::new(c.x + 1, c.y),
                Cell::new(c.x, c.y + 1),
                Cell::new(c.x - 1, c.y),
            ]
            .into_iter()
            .find(|&n| in_bounds(n) && kinds[idx(n)] == CellKind::Aisle);
            match adjacent {
                Some(n) => ids[idx(c)] = ids[idx(n)],
                None => {
                    return Err(ScenarioError::Invariant(format!(
                        "storage cell {c} is not adjacent to any aisle cell"
                    )))
                }
            }
        }
    }

    Ok(ids)
}

/// The traversable subgraph must 4-connect every workstation, storage cell
/// and AGV start. Pods count as reachable when any adjacent non-pod cell is.
fn check_connectivity(grid: &GridMap, agvs: &[AgvSpec]) -> Result<(), ScenarioError> {
    let seed = match grid.workstations.first() {
        Some(&w) => w,
        None => return Err(ScenarioError::Invariant("scenario has no workstation".into())),
    };
    let reachable = flood_fill(grid, seed);
    for &w in &grid.workstations {
        if !reachable.contains(&w) {
            return Err(ScenarioError::Invariant(format!(
                "workstation {w} unreachable from workstation {seed}"
            )));
        }
    }
    for agv in agvs {
        if !reachable.contains(&agv.start_cell) {
            return Err(ScenarioError::Invariant(format!(
                "AGV {} start {} unreachable from workstations",
                agv.id, agv.start_cell
            )));
        }
    }
    for y in 0..grid.height {
        for x in 0..grid.width {
            let c = Cell::new(x, y);
            if grid.kind(c) != CellKind::StoragePod {
                continue;
            }
            let ok = grid
                .neighbors(c, None)
                .iter()
                .any(|n| reachable.contains(n));
            if !ok {
                return Err(ScenarioError::Invariant(format!(
                    "storage cell {c} unreachable from workstations"
                )));
            }
        }
    }
    Ok(())
}

/// Flood fill over non-pod cells, public so tests can use it as a
/// connectivity oracle.
pub fn flood_fill(grid: &GridMap, from: Cell) -> HashSet<Cell> {
    let mut seen = HashSet::new();
    if !grid.traversable(from, None) {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen.insert(from);
    while let Some(cur) = queue.pop_front() {
        for n in grid.neighbors(cur, None) {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Serializes a scenario back into document form; `load_scenario` of the
/// result reparses to an identical scenario.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::from("rmfs-scenario v1\n");
    out.push_str(&format!("pick_dwell {}\n", s.timing.pick_dwell));
    out.push_str(&format!("release_dwell {}\n", s.timing.release_dwell));
    out.push_str(&format!("workstation_dwell {}\n", s.timing.workstation_dwell));
    out.push_str(&format!("loaded_j_per_m {}\n", s.energy.loaded_j_per_m));
    out.push_str(&format!("unloaded_j_per_m {}\n", s.energy.unloaded_j_per_m));
    out.push_str(&format!("wait_j_per_tick {}\n", s.energy.wait_j_per_tick));
    out.push_str("map:\n");
    let agv_at: HashMap<Cell, AgvId> = s.agvs.iter().map(|a| (a.start_cell, a.id)).collect();
    let task_at: HashMap<Cell, TaskId> = s.tasks.iter().map(|t| (t.pod_cell, t.id)).collect();
    for y in 0..s.grid.height() {
        let mut row: Vec<String> = Vec::with_capacity(s.grid.width() as usize);
        for x in 0..s.grid.width() {
            let c = Cell::new(x, y);
            let token = if let Some(id) = agv_at.get(&c) {
                format!("A{id}")
            } else if let Some(id) = task_at.get(&c) {
                format!("T{id}")
            } else {
                match s.grid.kind(c) {
                    CellKind::Aisle => ".".into(),
                    CellKind::CrossAisle => "+".into(),
                    CellKind::StoragePod => "#".into(),
                    CellKind::Workstation => "W".into(),
                }
            };
            row.push(token);
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
