//! Macro reasoning policies. Each decision is a short deliberation trace
//! plus a committed (cluster, hover waypoint, request) triple; traces count
//! reasoning steps and tokens, never motion ticks.

use crate::grid::{cell, GridCell, StepOutcome, World};
use crate::knowledge::{ActiveKnowledge, WorkflowCheck};
use crate::rng::Stream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Token price of each step kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub hypothesis: u64,
    pub check: u64,
    pub retrieve: u64,
    pub reconcile: u64,
    pub commit: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            hypothesis: 24,
            check: 16,
            retrieve: 20,
            reconcile: 28,
            commit: 12,
        }
    }
}

impl CostModel {
    pub fn of(&self, kind: StepKind) -> u64 {
        match kind {
            StepKind::Hypothesis => self.hypothesis,
            StepKind::Check => self.check,
            StepKind::Retrieve => self.retrieve,
            StepKind::Reconcile => self.reconcile,
            StepKind::Commit => self.commit,
        }
    }

    pub fn any_zero(&self) -> bool {
        [
            self.hypothesis,
            self.check,
            self.retrieve,
            self.reconcile,
            self.commit,
        ]
        .contains(&0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    Hypothesis,
    Check,
    Retrieve,
    Reconcile,
    Commit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub kind: StepKind,
    pub tokens: u64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub steps: Vec<ReasoningStep>,
}

impl ReasoningTrace {
    pub fn push(&mut self, kind: StepKind, costs: &CostModel, note: impl Into<String>) {
        self.steps.push(ReasoningStep {
            kind,
            tokens: costs.of(kind),
            note: note.into(),
        });
    }

    pub fn push_costed(&mut self, kind: StepKind, tokens: u64, note: impl Into<String>) {
        self.steps.push(ReasoningStep {
            kind,
            tokens,
            note: note.into(),
        });
    }

    pub fn step_count(&self) -> u64 {
        self.steps.len() as u64
    }

    pub fn token_total(&self) -> u64 {
        self.steps.iter().map(|s| s.tokens).sum()
    }

    pub fn extend(&mut self, other: ReasoningTrace) {
        self.steps.extend(other.steps);
    }
}

/// One macro decision: fly to `waypoint`, and if `next_cluster` is set,
/// attempt the serve there. `request_knowledge` asks Home for the pack at
/// the next contact opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroDecision {
    pub next_cluster: Option<u32>,
    pub waypoint: GridCell,
    pub request_knowledge: bool,
}

/// Everything the onboard policy may look at; no hidden truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub uav: GridCell,
    pub clock: u32,
    pub budget: u32,
    /// Unserved clusters with their believed cells.
    pub remaining: Vec<(u32, GridCell)>,
    pub last_outcome: StepOutcome,
    pub backhaul_feasible: bool,
    pub has_pack: bool,
}

/// Facts public to every policy: geometry of the map, not its schedule
/// or link behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicWorldView {
    pub width: i32,
    pub height: i32,
    pub home: GridCell,
    pub obstacles: BTreeSet<GridCell>,
}

impl PublicWorldView {
    pub fn of(world: &World) -> Self {
        PublicWorldView {
            width: world.width,
            height: world.height,
            home: world.home,
            obstacles: world.obstacles.clone(),
        }
    }

    pub fn passable(&self, c: GridCell) -> bool {
        c.x >= 0
            && c.x < self.width
            && c.y >= 0
            && c.y < self.height
            && !self.obstacles.contains(&c)
    }
}

/// Cross-call state for the fallback policy: hover cells whose serve
/// attempt failed, never retried until everything else failed too.
#[derive(Debug, Clone, Default)]
pub struct SearchMemory {
    pub blacklist: BTreeSet<(u32, GridCell)>,
}

impl SearchMemory {
    pub fn note_failure(&mut self, cluster: u32, waypoint: GridCell) {
        self.blacklist.insert((cluster, waypoint));
    }
}

fn mission_complete(view_home: GridCell, costs: &CostModel) -> (MacroDecision, ReasoningTrace) {
    let mut trace = ReasoningTrace::default();
    trace.push(
        StepKind::Commit,
        costs,
        "all clusters served; returning home",
    );
    (
        MacroDecision {
            next_cluster: None,
            waypoint: view_home,
            request_knowledge: false,
        },
        trace,
    )
}

/// Knowledge-free generate-and-test. Proposes hover cells nearest-first
/// around the closest unserved cluster, charging one hypothesis and one
/// check per proposal; earlier failures are re-examined and rejected, so
/// repeated failures produce longer traces.
pub fn search_decide(
    obs: &Observation,
    view: &PublicWorldView,
    costs: &CostModel,
    serve_range: i32,
    mem: &SearchMemory,
    rng: &mut Stream,
    allow_request: bool,
) -> (MacroDecision, ReasoningTrace) {
    if obs.remaining.is_empty() {
        return mission_complete(view.home, costs);
    }
    let mut trace = ReasoningTrace::default();
    let &(cluster, believed) = obs
        .remaining
        .iter()
        .min_by_key(|(id, c)| (obs.uav.manhattan(*c), *id))
        .expect("nonempty");

    let mut candidates: Vec<GridCell> = Vec::new();
    for dy in -serve_range..=serve_range {
        for dx in -serve_range..=serve_range {
            let c = cell(believed.x + dx, believed.y + dy);
            if view.passable(c) {
                candidates.push(c);
            }
        }
    }
    // random tie-breaking among equidistant hover cells
    for i in (1..candidates.len()).rev() {
        let j = rng.gen_range(0..=i);
        candidates.swap(i, j);
    }
    candidates.sort_by_key(|c| obs.uav.manhattan(*c));

    let request = allow_request && !obs.has_pack && obs.backhaul_feasible;
    for &wp in &candidates {
        trace.push(
            StepKind::Hypothesis,
            costs,
            format!(
                "try serving cluster {cluster} from {wp}, {} tiles out",
                obs.uav.manhattan(wp)
            ),
        );
        if mem.blacklist.contains(&(cluster, wp)) {
            trace.push(
                StepKind::Check,
                costs,
                format!("reject {wp}: serve already failed there"),
            );
            continue;
        }
        trace.push(
            StepKind::Check,
            costs,
            format!("{wp} close enough; no knowledge to consult"),
        );
        trace.push(
            StepKind::Commit,
            costs,
            format!("serve cluster {cluster} from {wp}"),
        );
        return (
            MacroDecision {
                next_cluster: Some(cluster),
                waypoint: wp,
                request_knowledge: request,
            },
            trace,
        );
    }
    // everything failed before: fall back to the closest option anyway
    let wp = candidates[0];
    trace.push(
        StepKind::Commit,
        costs,
        format!("every hover cell failed before; retrying {wp} for cluster {cluster}"),
    );
    (
        MacroDecision {
            next_cluster: Some(cluster),
            waypoint: wp,
            request_knowledge: request,
        },
        trace,
    )
}

#[derive(Debug, Error)]
#[error("no candidate passed the workflow")]
pub struct NoFeasibleDecision {
    pub trace: ReasoningTrace,
}

/// Serve-and-verify with promoted knowledge: candidates come from the
/// retrieved plan suffix and the access lookup (best measured rate first),
/// each vetted by the workflow checks; failure of any check rejects the
/// candidate and moves on. Hover cells are lookup offsets applied to the
/// currently believed cluster cell, so corrected beliefs retarget the
/// serve automatically.
pub fn procedural_decide(
    obs: &Observation,
    active: &ActiveKnowledge,
    costs: &CostModel,
    failed: &BTreeSet<(u32, GridCell)>,
) -> Result<(MacroDecision, ReasoningTrace), NoFeasibleDecision> {
    if obs.remaining.is_empty() {
        return Ok(mission_complete(active.structured.home, costs));
    }
    let mut trace = ReasoningTrace::default();
    let workflow = match &active.workflow {
        Some(w) if !active.lookup.is_empty() => w,
        _ => return Err(NoFeasibleDecision { trace }),
    };

    let believed = |id: u32| {
        obs.remaining
            .iter()
            .find(|(c, _)| *c == id)
            .map(|(_, b)| *b)
    };
    let mut candidates: Vec<(u32, GridCell)> = Vec::new();
    if let Some(suffix) = &active.plan_suffix {
        if let Some(leg) = suffix.first() {
            trace.push(
                StepKind::Retrieve,
                costs,
                format!(
                    "stored plan covers the remaining clusters; next leg {} via {}",
                    leg.cluster, leg.waypoint
                ),
            );
            candidates.push((leg.cluster, leg.waypoint));
        }
    }
    let mut rows: Vec<(u32, GridCell, f64)> = active
        .lookup
        .iter()
        .filter_map(|row| {
            let base = believed(row.cluster)?;
            let wp = cell(base.x + row.offset.0, base.y + row.offset.1);
            Some((row.cluster, wp, row.rate_bps))
        })
        .collect();
    rows.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(obs.uav.manhattan(a.1).cmp(&obs.uav.manhattan(b.1)))
            .then(a.0.cmp(&b.0))
            .then((a.1.y, a.1.x).cmp(&(b.1.y, b.1.x)))
    });
    candidates.extend(rows.into_iter().map(|(c, wp, _)| (c, wp)));

    let request = !obs.has_pack && obs.backhaul_feasible;
    'next_candidate: for (cluster, wp) in candidates {
        if believed(cluster).is_none() {
            continue; // plan leg for an already-served cluster
        }
        for check in &workflow.checks {
            match check {
                WorkflowCheck::Access => {
                    // plan legs are vouched for by the lookup like anything else
                    let known_good = active.lookup.iter().any(|r| {
                        r.cluster == cluster
                            && r.feasible
                            && believed(cluster)
                                .map(|b| cell(b.x + r.offset.0, b.y + r.offset.1) == wp)
                                == Some(true)
                    });
                    if !known_good || failed.contains(&(cluster, wp)) {
                        trace.push(
                            StepKind::Check,
                            costs,
                            format!("access check rejects {wp} for cluster {cluster}"),
                        );
                        continue 'next_candidate;
                    }
                    trace.push(
                        StepKind::Check,
                        costs,
                        format!("access check passes: {wp} feasible for cluster {cluster}"),
                    );
                }
                WorkflowCheck::Backhaul => {
                    trace.push(
                        StepKind::Check,
                        costs,
                        if request {
                            "backhaul check: link up and no pack cached; will request".to_string()
                        } else {
                            "backhaul check: nothing to request".to_string()
                        },
                    );
                }
                WorkflowCheck::Legality => {
                    let s = &active.structured;
                    let legal = wp.x >= 0
                        && wp.x < s.grid.0
                        && wp.y >= 0
                        && wp.y < s.grid.1
                        && !s.obstacles.contains(&wp)
                        && wp != s.nfz.cell;
                    if !legal {
                        trace.push(
                            StepKind::Check,
                            costs,
                            format!("legality check rejects {wp}: restricted or blocked"),
                        );
                        continue 'next_candidate;
                    }
                    trace.push(
                        StepKind::Check,
                        costs,
                        format!("legality check passes for {wp}"),
                    );
                }
            }
        }
        for (a, b) in &active.conflicts {
            trace.push(
                StepKind::Reconcile,
                costs,
                format!(
                    "weighed conflicting notes on {}: \"{}\" vs \"{}\"",
                    a.subject, a.text, b.text
                ),
            );
        }
        trace.push(
            StepKind::Commit,
            costs,
            format!("serve cluster {cluster} from {wp}"),
        );
        return Ok((
            MacroDecision {
                next_cluster: Some(cluster),
                waypoint: wp,
                request_knowledge: request,
            },
            trace,
        ));
    }
    Err(NoFeasibleDecision { trace })
}

/// Step-level baseline: no deliberation at all, fly straight at the
/// nearest unserved cluster and serve from overhead.
pub fn greedy_step_decide(
    obs: &Observation,
    home: GridCell,
    costs: &CostModel,
) -> (MacroDecision, ReasoningTrace) {
    if obs.remaining.is_empty() {
        return mission_complete(home, costs);
    }
    let &(cluster, believed) = obs
        .remaining
        .iter()
        .min_by_key(|(id, c)| (obs.uav.manhattan(*c), *id))
        .expect("nonempty");
    let mut trace = ReasoningTrace::default();
    trace.push(
        StepKind::Commit,
        costs,
        format!("greedy: fly to cluster {cluster} at {believed}"),
    );
    (
        MacroDecision {
            next_cluster: Some(cluster),
            waypoint: believed,
            request_knowledge: false,
        },
        trace,
    )
}
