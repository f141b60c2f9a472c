//! The Home side of cloud replanning: builds full-knowledge mission plans
//! and renders the uplink/downlink exchange texts whose sizes the comms
//! ledger charges. See docs/comms.md for both wire texts.

use crate::grid::{cell, GridCell, NfzSchedule, Reveal, StepOutcome};
use crate::knowledge::{count_tokens, KnowledgePack, MissionBriefing};
use crate::reasoner::{CostModel, ReasoningTrace, StepKind};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudLeg {
    pub cluster: u32,
    pub waypoint: GridCell,
    pub expect_bps: u64,
    /// Next-best hover cells, downlinked so the follower can shift without
    /// another round trip. This is knowledge a pack would have carried once
    /// — re-shipping it per exchange is what makes the closed loop heavy.
    pub fallbacks: Vec<(GridCell, u64)>,
}

/// A downlinked macro plan: ordered serve legs plus the activation rule so
/// the follower can route without onboard knowledge of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub nfz: NfzSchedule,
    pub legs: Vec<CloudLeg>,
}

impl MissionPlan {
    /// First leg whose cluster is still unserved.
    pub fn next_leg(&self, remaining: &BTreeSet<u32>) -> Option<CloudLeg> {
        self.legs
            .iter()
            .find(|l| remaining.contains(&l.cluster))
            .cloned()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlannerError {
    #[error("no feasible hover cell known for cluster {0}")]
    NoWaypoint(u32),
}

/// Plan the remaining mission with everything Home knows: pick each
/// cluster's best measured hover cell, then chain the serves greedily by
/// travel distance. The deliberation comes back as a costed trace — one
/// retrieve per cluster roster, one check per examined hover cell, one
/// hypothesis per chaining step — which the exchange bills end to end.
pub fn home_plan(
    pack: &KnowledgePack,
    briefing: &MissionBriefing,
    start: GridCell,
    believed: &BTreeMap<u32, GridCell>,
    remaining: &BTreeSet<u32>,
    costs: &CostModel,
) -> Result<(MissionPlan, ReasoningTrace), PlannerError> {
    let legal = |c: GridCell| {
        c.x >= 0
            && c.x < briefing.grid.0
            && c.y >= 0
            && c.y < briefing.grid.1
            && !pack.obstacles.contains(&c)
            && c != pack.nfz.cell
    };
    let mut trace = ReasoningTrace::default();
    let mut picks: BTreeMap<u32, CloudLeg> = BTreeMap::new();
    for &id in remaining {
        let base = believed
            .get(&id)
            .copied()
            .unwrap_or_else(|| briefing.clusters.get(id as usize).copied().unwrap_or(start));
        let mut rows: Vec<_> = pack
            .lookup
            .iter()
            .filter(|r| r.cluster == id && r.feasible)
            .collect();
        rows.sort_by(|a, b| {
            b.rate_bps
                .partial_cmp(&a.rate_bps)
                .unwrap()
                .then(a.offset.cmp(&b.offset))
        });
        trace.push(
            StepKind::Retrieve,
            costs,
            format!("hover roster for cluster {id}"),
        );
        let mut pick = None;
        let mut fallbacks: Vec<(GridCell, u64)> = Vec::new();
        for r in &rows {
            let wp = cell(base.x + r.offset.0, base.y + r.offset.1);
            trace.push(
                StepKind::Check,
                costs,
                format!("cluster {id} hover {wp} legality"),
            );
            if !legal(wp) {
                continue;
            }
            match pick {
                None => pick = Some((wp, r.rate_bps as u64)),
                Some((best, _)) if wp != best && fallbacks.len() < 2 => {
                    fallbacks.push((wp, r.rate_bps as u64));
                }
                Some(_) => break,
            }
        }
        let (waypoint, expect_bps) = pick.ok_or(PlannerError::NoWaypoint(id))?;
        picks.insert(
            id,
            CloudLeg {
                cluster: id,
                waypoint,
                expect_bps,
                fallbacks,
            },
        );
    }

    let mut legs = Vec::with_capacity(picks.len());
    let mut cursor = start;
    let mut pool: Vec<CloudLeg> = picks.into_values().collect();
    while !pool.is_empty() {
        let (i, _) = pool
            .iter()
            .enumerate()
            .min_by_key(|(_, l)| (cursor.manhattan(l.waypoint), l.cluster))
            .unwrap();
        let leg = pool.remove(i);
        trace.push(
            StepKind::Hypothesis,
            costs,
            format!(
                "nearest remaining serve is cluster {} from {}",
                leg.cluster, leg.waypoint
            ),
        );
        cursor = leg.waypoint;
        legs.push(leg);
    }
    trace.push(
        StepKind::Commit,
        costs,
        format!("fresh plan, {} legs", legs.len()),
    );
    Ok((
        MissionPlan {
            nfz: pack.nfz,
            legs,
        },
        trace,
    ))
}

/// What the UAV reports upward before Home replans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkReport {
    pub clock: u32,
    pub cell: GridCell,
    pub budget: u32,
    pub last_outcome: StepOutcome,
    pub backhaul_rate_bps: f64,
    pub remaining: Vec<(u32, GridCell)>,
    pub reveals: Vec<Reveal>,
    /// Every serve attempt so far: (clock, cluster, hover cell, served).
    /// Home needs these to keep a fresh plan off already-failed cells.
    pub serves: Vec<(u32, u32, GridCell, bool)>,
    /// Recent motion, oldest first, capped by config.
    pub trail: Vec<(u32, GridCell, StepOutcome)>,
    pub violations: u64,
}

fn outcome_word(o: StepOutcome) -> &'static str {
    match o {
        StepOutcome::Moved => "moved",
        StepOutcome::Blocked => "blocked",
        StepOutcome::Served => "served",
        StepOutcome::ServeFailed => "serve-failed",
        StepOutcome::Idle => "idle",
    }
}

pub fn render_summary(r: &UplinkReport) -> String {
    let mut b = String::from("SKYREPORT v1\n");
    let _ = writeln!(
        b,
        "clock={} cell=({},{}) budget={} outcome={}",
        r.clock,
        r.cell.x,
        r.cell.y,
        r.budget,
        outcome_word(r.last_outcome)
    );
    let _ = writeln!(b, "backhaul rate={}bps", r.backhaul_rate_bps as u64);
    let rem: Vec<String> = r
        .remaining
        .iter()
        .map(|(id, c)| format!("c{}@({},{})", id, c.x, c.y))
        .collect();
    let _ = writeln!(
        b,
        "remaining {}",
        if rem.is_empty() {
            "-".into()
        } else {
            rem.join(" ")
        }
    );
    for rev in &r.reveals {
        match rev {
            Reveal::Drift { cluster, at } => {
                let _ = writeln!(b, "reveal drift cluster={} at=({},{})", cluster, at.x, at.y);
            }
            Reveal::Drop {
                cluster,
                magnitude_db,
            } => {
                let _ = writeln!(
                    b,
                    "reveal drop cluster={} magnitude={}db",
                    cluster, magnitude_db
                );
            }
        }
    }
    for (t, cluster, c, served) in &r.serves {
        let _ = writeln!(
            b,
            "serve t={} c{}@({},{}) {}",
            t,
            cluster,
            c.x,
            c.y,
            if *served { "ok" } else { "miss" }
        );
    }
    for (t, c, o) in &r.trail {
        let _ = writeln!(b, "trail t={} ({},{}) {}", t, c.x, c.y, outcome_word(*o));
    }
    let _ = writeln!(b, "violations={}", r.violations);
    b
}

pub fn render_plan(plan: &MissionPlan) -> String {
    let mut b = String::from("SKYPLAN v1\n");
    let n = &plan.nfz;
    let _ = writeln!(
        b,
        "nfz ({},{}) period={} active={}..{}",
        n.cell.x,
        n.cell.y,
        n.period_steps,
        n.active_start,
        n.active_start + n.active_len
    );
    for (i, leg) in plan.legs.iter().enumerate() {
        let _ = writeln!(
            b,
            "leg {} cluster={} waypoint=({},{}) expect={}bps",
            i + 1,
            leg.cluster,
            leg.waypoint.x,
            leg.waypoint.y,
            leg.expect_bps
        );
        let _ = writeln!(
            b,
            "contingency {} if-serve-fails hold-at-waypoint-and-retry once then skip",
            i + 1
        );
        if !leg.fallbacks.is_empty() {
            let alts: Vec<String> = leg
                .fallbacks
                .iter()
                .map(|(c, bps)| format!("({},{})@{}bps", c.x, c.y, bps))
                .collect();
            let _ = writeln!(b, "fallbacks {} {}", i + 1, alts.join(" "));
        }
    }
    let _ = writeln!(b, "total-legs {}", plan.legs.len());
    b
}

pub fn summary_tokens(r: &UplinkReport) -> u64 {
    count_tokens(&render_summary(r))
}

pub fn plan_tokens(plan: &MissionPlan) -> u64 {
    count_tokens(&render_plan(plan))
}
