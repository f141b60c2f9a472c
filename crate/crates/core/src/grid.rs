//! Mission world: grid geometry, scheduled no-fly window, clusters,
//! obstacles, per-episode disruptions, and the motion executor.

use crate::config::{DisruptionConfig, MissionConfig};
use crate::pack::SerializedPack;
use crate::radio::{self, LinkConfig};
use crate::reasoner::MacroDecision;
use crate::rng::{substream, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct GridCell {
    pub x: i32,
    pub y: i32,
}

impl From<(i32, i32)> for GridCell {
    fn from((x, y): (i32, i32)) -> Self {
        GridCell { x, y }
    }
}

impl From<GridCell> for (i32, i32) {
    fn from(c: GridCell) -> Self {
        (c.x, c.y)
    }
}

impl std::fmt::Display for GridCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

pub fn cell(x: i32, y: i32) -> GridCell {
    GridCell { x, y }
}

impl GridCell {
    pub fn manhattan(self, other: GridCell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn chebyshev(self, other: GridCell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Periodic activation window for the restricted cell. The window never
/// wraps: start + len <= period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfzSchedule {
    pub cell: GridCell,
    pub period_steps: u32,
    pub active_start: u32,
    pub active_len: u32,
}

/// True iff the restricted cell is active at this episode clock.
pub fn nfz_active(schedule: &NfzSchedule, clock: u32, start_offset: u32) -> bool {
    let phase = (clock + start_offset) % schedule.period_steps;
    phase >= schedule.active_start && phase < schedule.active_start + schedule.active_len
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Disruption {
    /// The cluster actually sits one tile away from its nominal cell;
    /// discovered on arrival in the believed cell's 8-neighborhood.
    ClusterDrift { cluster: u32, offset: (i32, i32) },
    /// Every access measurement against this cluster loses `magnitude_db`;
    /// discovered at the first serve attempt.
    SnrDrop { cluster: u32, magnitude_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisruptionSet(pub Vec<Disruption>);

impl DisruptionSet {
    pub fn drift_of(&self, cluster: u32) -> Option<(i32, i32)> {
        self.0.iter().find_map(|d| match d {
            Disruption::ClusterDrift { cluster: c, offset } if *c == cluster => Some(*offset),
            _ => None,
        })
    }

    pub fn drop_of(&self, cluster: u32) -> Option<f64> {
        self.0.iter().find_map(|d| match d {
            Disruption::SnrDrop {
                cluster: c,
                magnitude_db,
            } if *c == cluster => Some(*magnitude_db),
            _ => None,
        })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub width: i32,
    pub height: i32,
    pub cell_size_m: f64,
    pub altitude_m: f64,
    pub home: GridCell,
    /// Cluster id is the index into this list.
    pub clusters: Vec<GridCell>,
    pub obstacles: BTreeSet<GridCell>,
    pub nfz: NfzSchedule,
    pub access: LinkConfig,
    pub backhaul: LinkConfig,
    pub access_threshold_bps: f64,
    pub backhaul_threshold_bps: f64,
    pub step_budget: u32,
}

impl World {
    pub fn in_grid(&self, c: GridCell) -> bool {
        c.x >= 0 && c.x < self.width && c.y >= 0 && c.y < self.height
    }

    pub fn passable(&self, c: GridCell) -> bool {
        self.in_grid(c) && !self.obstacles.contains(&c)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("special cells overlap at {0}")]
    Overlap(GridCell),
    #[error("cell {0} is outside the {1}x{2} grid")]
    OutOfGrid(GridCell, i32, i32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub fn build_world(cfg: &MissionConfig) -> Result<World, WorldError> {
    if cfg.grid.width < 2 || cfg.grid.height < 2 {
        return Err(WorldError::Invalid("grid must be at least 2x2".into()));
    }
    if cfg.clusters.is_empty() {
        return Err(WorldError::Invalid("at least one cluster required".into()));
    }
    if cfg.access_threshold_bps <= 0.0 || cfg.backhaul_threshold_bps <= 0.0 {
        return Err(WorldError::Invalid("thresholds must be positive".into()));
    }
    if cfg.step_budget == 0 {
        return Err(WorldError::Invalid("step budget must be positive".into()));
    }
    let nfz = &cfg.nfz;
    if nfz.period_steps == 0
        || nfz.active_len == 0
        || nfz.active_start >= nfz.period_steps
        || nfz.active_start + nfz.active_len > nfz.period_steps
    {
        return Err(WorldError::Invalid(
            "activation window must be a nonempty interval within one period".into(),
        ));
    }

    let world = World {
        width: cfg.grid.width,
        height: cfg.grid.height,
        cell_size_m: cfg.grid.cell_size_m,
        altitude_m: cfg.grid.altitude_m,
        home: cfg.home,
        clusters: cfg.clusters.clone(),
        obstacles: cfg.obstacles.iter().copied().collect(),
        nfz: *nfz,
        access: cfg.access.clone(),
        backhaul: cfg.backhaul.clone(),
        access_threshold_bps: cfg.access_threshold_bps,
        backhaul_threshold_bps: cfg.backhaul_threshold_bps,
        step_budget: cfg.step_budget,
    };

    let mut special: Vec<GridCell> = vec![world.home, world.nfz.cell];
    special.extend(&world.clusters);
    special.extend(world.obstacles.iter().copied());
    for c in &special {
        if !world.in_grid(*c) {
            return Err(WorldError::OutOfGrid(*c, world.width, world.height));
        }
    }
    let mut seen = BTreeSet::new();
    for c in &special {
        if !seen.insert(*c) {
            return Err(WorldError::Overlap(*c));
        }
    }
    if cfg.obstacles.len() != world.obstacles.len() {
        return Err(WorldError::Invalid("duplicate obstacle cells".into()));
    }
    Ok(world)
}

/// Deterministic per-episode disruption draw. Identical (seed, config,
/// world) always yields an identical set; drift displacements are kept
/// on legal cells.
pub fn sample_disruptions(seed: u64, cfg: &DisruptionConfig, world: &World) -> DisruptionSet {
    let mut rng = substream(seed, "disruptions");
    let mut out = Vec::new();
    for (id, &origin) in world.clusters.iter().enumerate() {
        let id = id as u32;
        if rng.gen::<f64>() < cfg.p_drift {
            let legal: Vec<(i32, i32)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                .into_iter()
                .filter(|&(dx, dy)| {
                    let c = cell(origin.x + dx, origin.y + dy);
                    world.passable(c)
                        && c != world.nfz.cell
                        && c != world.home
                        && !world.clusters.contains(&c)
                })
                .collect();
            if !legal.is_empty() {
                let offset = legal[rng.gen_range(0..legal.len())];
                out.push(Disruption::ClusterDrift {
                    cluster: id,
                    offset,
                });
            }
        }
        if rng.gen::<f64>() < cfg.p_snr {
            let magnitude_db = cfg.snr_drops_db[rng.gen_range(0..cfg.snr_drops_db.len())];
            out.push(Disruption::SnrDrop {
                cluster: id,
                magnitude_db,
            });
        }
    }
    DisruptionSet(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    Moved,
    Blocked,
    Served,
    ServeFailed,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    NfzEntry {
        cell: GridCell,
        clock: u32,
    },
    ObstacleCollision {
        cell: GridCell,
        clock: u32,
    },
    FailedServe {
        cluster: u32,
        waypoint: GridCell,
        rate_bps: f64,
    },
}

/// Mutable truth for one episode.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub uav: GridCell,
    pub clock: u32,
    pub start_offset: u32,
    pub remaining: BTreeSet<u32>,
    /// Where the agent thinks each cluster is; corrected on drift reveal.
    pub believed: BTreeMap<u32, GridCell>,
    /// Actual cluster cells (nominal plus any drift), fixed at episode start.
    pub truth: BTreeMap<u32, GridCell>,
    pub budget: u32,
    pub last_outcome: StepOutcome,
    pub cached_pack: Option<SerializedPack>,
    /// Disruptions not yet revealed to the agent.
    pub pending: DisruptionSet,
    /// Full draw, kept for measurement effects (drops apply even before reveal).
    pub drawn: DisruptionSet,
}

impl EpisodeState {
    pub fn new(world: &World, start_offset: u32, disruptions: DisruptionSet) -> Self {
        let believed: BTreeMap<u32, GridCell> = world
            .clusters
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u32, c))
            .collect();
        let truth = believed
            .iter()
            .map(|(&id, &c)| {
                let shifted = disruptions
                    .drift_of(id)
                    .map_or(c, |(dx, dy)| cell(c.x + dx, c.y + dy));
                (id, shifted)
            })
            .collect();
        EpisodeState {
            uav: world.home,
            clock: 0,
            start_offset,
            remaining: believed.keys().copied().collect(),
            believed,
            truth,
            budget: world.step_budget,
            last_outcome: StepOutcome::Idle,
            cached_pack: None,
            pending: disruptions.clone(),
            drawn: disruptions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Reveal {
    Drift { cluster: u32, at: GridCell },
    Drop { cluster: u32, magnitude_db: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TickAction {
    Move,
    Wait,
}

/// One executed motion tick, for trace building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub clock: u32,
    pub cell: GridCell,
    pub action: TickAction,
    /// Activation state observed whenever the tick ends within the
    /// restricted cell's 8-neighborhood: (absolute clock, active).
    pub nfz_obs: Option<(u32, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeRecord {
    pub cluster: u32,
    pub waypoint: GridCell,
    pub rate_bps: f64,
    pub served: bool,
}

#[derive(Debug, Clone)]
pub struct AdvanceResult {
    pub outcome: StepOutcome,
    pub violations: Vec<Violation>,
    pub reveals: Vec<Reveal>,
    pub serve: Option<ServeRecord>,
    pub ticks: Vec<TickRecord>,
    /// Budget ran out before the path completed.
    pub budget_exhausted: bool,
}

fn reveal_drifts(
    world: &World,
    state: &mut EpisodeState,
    current_target: Option<u32>,
    reveals: &mut Vec<Reveal>,
) -> bool {
    let _ = world;
    let mut abort = false;
    let drifted: Vec<u32> = state
        .pending
        .0
        .iter()
        .filter_map(|d| match d {
            Disruption::ClusterDrift { cluster, .. } => Some(*cluster),
            _ => None,
        })
        .collect();
    for c in drifted {
        let believed = state.believed[&c];
        if state.uav.chebyshev(believed) <= 1 {
            let actual = state.truth[&c];
            state.believed.insert(c, actual);
            state.pending.0.retain(
                |d| !matches!(d, Disruption::ClusterDrift { cluster, .. } if *cluster == c),
            );
            reveals.push(Reveal::Drift {
                cluster: c,
                at: actual,
            });
            if current_target == Some(c) {
                abort = true;
            }
        }
    }
    abort
}

/// Execute one macro decision: walk the path one cell per tick, surface
/// disruptions whose trigger fires, and attempt the serve at the hover
/// waypoint. A drift reveal that invalidates the current target aborts
/// the leg so the caller can re-decide.
pub fn advance(
    world: &World,
    state: &mut EpisodeState,
    decision: &MacroDecision,
    path: &[GridCell],
    radio_rng: &mut Stream,
) -> AdvanceResult {
    assert_eq!(
        path.first().copied(),
        Some(state.uav),
        "path must start at the UAV"
    );
    let mut res = AdvanceResult {
        outcome: StepOutcome::Idle,
        violations: Vec::new(),
        reveals: Vec::new(),
        serve: None,
        ticks: Vec::new(),
        budget_exhausted: false,
    };

    // a zero-move path is a one-tick hover
    let wait_only = path.len() == 1;
    let moves: Vec<(GridCell, TickAction)> = if wait_only {
        vec![(state.uav, TickAction::Wait)]
    } else {
        path[1..]
            .iter()
            .map(|&c| {
                (
                    c,
                    if c == state.uav {
                        TickAction::Wait
                    } else {
                        TickAction::Move
                    },
                )
            })
            .collect()
    };

    let mut aborted = false;
    let mut completed = true;
    for (next, action) in moves {
        if state.budget == 0 {
            res.budget_exhausted = true;
            completed = false;
            break;
        }
        if world.obstacles.contains(&next) {
            res.outcome = StepOutcome::Blocked;
            if decision.waypoint == next {
                res.violations.push(Violation::ObstacleCollision {
                    cell: next,
                    clock: state.clock,
                });
            }
            completed = false;
            break;
        }
        state.uav = next;
        state.clock += 1;
        state.budget -= 1;
        if action == TickAction::Move {
            res.outcome = StepOutcome::Moved;
        }

        let mut nfz_obs = None;
        if state.uav.chebyshev(world.nfz.cell) <= 1 {
            let active = nfz_active(&world.nfz, state.clock, state.start_offset);
            nfz_obs = Some((state.clock + state.start_offset, active));
            if state.uav == world.nfz.cell && active {
                res.violations.push(Violation::NfzEntry {
                    cell: state.uav,
                    clock: state.clock,
                });
            }
        }
        res.ticks.push(TickRecord {
            clock: state.clock,
            cell: state.uav,
            action,
            nfz_obs,
        });

        if reveal_drifts(world, state, decision.next_cluster, &mut res.reveals) {
            aborted = true;
            completed = false;
            res.outcome = StepOutcome::Moved;
            break;
        }
    }

    if completed && !aborted {
        if let Some(cluster) = decision.next_cluster {
            let drop_db = state.drawn.drop_of(cluster);
            if let Some(mag) = drop_db {
                if state
                    .pending
                    .0
                    .iter()
                    .any(|d| matches!(d, Disruption::SnrDrop { cluster: c, .. } if *c == cluster))
                {
                    state.pending.0.retain(
                        |d| !matches!(d, Disruption::SnrDrop { cluster: c, .. } if *c == cluster),
                    );
                    res.reveals.push(Reveal::Drop {
                        cluster,
                        magnitude_db: mag,
                    });
                }
            }
            let g = radio::geometry(world, state.uav, state.truth[&cluster]);
            let rate = radio::sample_rate_bps(&world.access, &g, radio_rng, drop_db.unwrap_or(0.0));
            let served = radio::link_feasible(rate, world.access_threshold_bps);
            if served {
                state.remaining.remove(&cluster);
                res.outcome = StepOutcome::Served;
            } else {
                res.outcome = StepOutcome::ServeFailed;
                res.violations.push(Violation::FailedServe {
                    cluster,
                    waypoint: state.uav,
                    rate_bps: rate,
                });
            }
            res.serve = Some(ServeRecord {
                cluster,
                waypoint: state.uav,
                rate_bps: rate,
                served,
            });
        } else if wait_only {
            res.outcome = StepOutcome::Idle;
        }
    }

    state.last_outcome = res.outcome;
    res
}
