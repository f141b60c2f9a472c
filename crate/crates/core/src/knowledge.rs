//! Episode traces, offline promotion into a knowledge pack, and
//! per-decision activation of the relevant slice.

use crate::config::PromotionConfig;
use crate::grid::{Disruption, GridCell, NfzSchedule, StepOutcome, TickAction, World};
use crate::pack::{parse_pack, ParseError, SerializedPack};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Flat token accounting: one token per 4 bytes, rounded up.
pub fn count_tokens(text: &str) -> u64 {
    (text.len() as u64 + 3) / 4
}

/// One line of an episode log. A log is serialized as JSON lines in the
/// order events happened: meta first, end last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "line", rename_all = "snake_case")]
pub enum TraceLine {
    Meta {
        episode: u64,
        seed: u64,
        start_offset: u32,
    },
    Tick {
        clock: u32,
        cell: GridCell,
        action: TickAction,
        outcome: StepOutcome,
    },
    /// Activation state of the restricted cell, observed from next door.
    Nfz {
        clock_abs: u32,
        active: bool,
    },
    Backhaul {
        cell: GridCell,
        rate_bps: f64,
        feasible: bool,
    },
    Serve {
        clock: u32,
        cluster: u32,
        waypoint: GridCell,
        rate_bps: f64,
        served: bool,
    },
    Reveal {
        clock: u32,
        disruption: Disruption,
    },
    End {
        termination: String,
        success: bool,
        throughput_bps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub lines: Vec<TraceLine>,
}

impl EpisodeTrace {
    pub fn episode(&self) -> Option<u64> {
        self.lines.iter().find_map(|l| match l {
            TraceLine::Meta { episode, .. } => Some(*episode),
            _ => None,
        })
    }

    pub fn success(&self) -> bool {
        self.lines
            .iter()
            .any(|l| matches!(l, TraceLine::End { success: true, .. }))
    }

    pub fn throughput_bps(&self) -> f64 {
        self.lines
            .iter()
            .find_map(|l| match l {
                TraceLine::End { throughput_bps, .. } => Some(*throughput_bps),
                _ => None,
            })
            .unwrap_or(0.0)
    }

    pub fn nfz_obs(&self) -> impl Iterator<Item = (u32, bool)> + '_ {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Nfz { clock_abs, active } => Some((*clock_abs, *active)),
            _ => None,
        })
    }

    pub fn backhaul_obs(&self) -> impl Iterator<Item = (GridCell, bool)> + '_ {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Backhaul { cell, feasible, .. } => Some((*cell, *feasible)),
            _ => None,
        })
    }

    pub fn serves(&self) -> impl Iterator<Item = (u32, GridCell, f64, bool)> + '_ {
        self.lines.iter().filter_map(|l| match l {
            TraceLine::Serve {
                cluster,
                waypoint,
                rate_bps,
                served,
                ..
            } => Some((*cluster, *waypoint, *rate_bps, *served)),
            _ => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("trace line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut lines = Vec::new();
        for raw in text.lines() {
            if raw.trim().is_empty() {
                continue;
            }
            lines.push(serde_json::from_str(raw)?);
        }
        Ok(EpisodeTrace { lines })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkflowCheck {
    Access,
    Backhaul,
    Legality,
}

/// The serve-and-verify procedure: ordered checks, then commit or reject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub access_threshold_bps: f64,
    pub backhaul_threshold_bps: f64,
    pub checks: Vec<WorkflowCheck>,
}

impl Workflow {
    pub fn canonical(access_threshold_bps: f64, backhaul_threshold_bps: f64) -> Self {
        Workflow {
            access_threshold_bps,
            backhaul_threshold_bps,
            checks: vec![
                WorkflowCheck::Access,
                WorkflowCheck::Backhaul,
                WorkflowCheck::Legality,
            ],
        }
    }
}

/// One aggregated access measurement: hover at `offset` from the cluster's
/// current cell and expect `rate_bps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupRow {
    pub cluster: u32,
    pub offset: (i32, i32),
    pub rate_bps: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanLeg {
    pub cluster: u32,
    pub waypoint: GridCell,
}

/// A past mission worth imitating: serve order with hover cells and the
/// throughput it achieved. Carries no episode identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePlan {
    pub throughput_bps: f64,
    pub legs: Vec<PlanLeg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub subject: String,
    pub text: String,
    pub conflict_group: Option<u8>,
}

/// Everything Home distills from the corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePack {
    pub nfz: NfzSchedule,
    pub obstacles: BTreeSet<GridCell>,
    /// Feasibility deciles per cell, row-major by y: 0 ≈ never up, 9 ≈ always.
    pub backhaul_map: Vec<Vec<u8>>,
    pub workflow: Workflow,
    pub lookup: Vec<LookupRow>,
    pub plans: Vec<ReferencePlan>,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InductionError {
    #[error("no active observation in the corpus")]
    NoActiveSample,
    #[error("observations conflict at every candidate period")]
    Contradictory,
    #[error("no period up to the cap fits the observations")]
    NoFit,
}

/// Recover (period, window start, window length) from labeled sightings of
/// the restricted cell. Returns the smallest period whose phase labels are
/// consistent and boxable by one non-wrapping window; the window is the
/// tightest interval covering every active phase.
pub fn induce_nfz_schedule(
    observations: &[(u32, bool)],
    max_period: u32,
) -> Result<(u32, u32, u32), InductionError> {
    if !observations.iter().any(|&(_, a)| a) {
        return Err(InductionError::NoActiveSample);
    }
    let mut all_conflicted = true;
    for period in 1..=max_period {
        let mut labels: BTreeMap<u32, bool> = BTreeMap::new();
        let mut conflict = false;
        for &(clock, active) in observations {
            let phase = clock % period;
            match labels.get(&phase) {
                Some(&prev) if prev != active => {
                    conflict = true;
                    break;
                }
                _ => {
                    labels.insert(phase, active);
                }
            }
        }
        if conflict {
            continue;
        }
        all_conflicted = false;
        let lo = labels
            .iter()
            .filter(|(_, &a)| a)
            .map(|(&p, _)| p)
            .min()
            .unwrap();
        let hi = labels
            .iter()
            .filter(|(_, &a)| a)
            .map(|(&p, _)| p)
            .max()
            .unwrap();
        let boxed = labels.iter().all(|(&p, &a)| a || !(lo..=hi).contains(&p));
        if boxed {
            return Ok((period, lo, hi - lo + 1));
        }
    }
    Err(if all_conflicted {
        InductionError::Contradictory
    } else {
        InductionError::NoFit
    })
}

#[derive(Debug, Error)]
pub enum PromoteError {
    #[error("empty promotion corpus")]
    EmptyCorpus,
    #[error("trace references cluster {0} missing from the world")]
    UnknownCluster(u32),
    #[error("activation schedule induction failed: {0}")]
    Induction(#[from] InductionError),
}

/// Digest a corpus of episode logs into a pack. Aggregation only — no raw
/// records or episode identities survive — and the result is identical for
/// any ordering of the same corpus.
pub fn promote(
    traces: &[EpisodeTrace],
    world: &World,
    cfg: &PromotionConfig,
) -> Result<KnowledgePack, PromoteError> {
    if traces.is_empty() {
        return Err(PromoteError::EmptyCorpus);
    }

    let mut nfz_obs: Vec<(u32, bool)> = traces.iter().flat_map(|t| t.nfz_obs()).collect();
    nfz_obs.sort_unstable();
    let (period, start, len) = induce_nfz_schedule(&nfz_obs, cfg.max_period_steps)?;
    let nfz = NfzSchedule {
        cell: world.nfz.cell,
        period_steps: period,
        active_start: start,
        active_len: len,
    };

    let mut link_counts: BTreeMap<GridCell, (u64, u64)> = BTreeMap::new();
    for t in traces {
        for (cell, feasible) in t.backhaul_obs() {
            let e = link_counts.entry(cell).or_insert((0, 0));
            e.0 += 1;
            if feasible {
                e.1 += 1;
            }
        }
    }
    let mut backhaul_map = vec![vec![5u8; world.width as usize]; world.height as usize];
    for (cell, (n, f)) in &link_counts {
        let p = (*f as f64 + 1.0) / (*n as f64 + 2.0);
        backhaul_map[cell.y as usize][cell.x as usize] = ((p * 10.0).round() as u8).min(9);
    }

    let mut rates: BTreeMap<(u32, (i32, i32)), Vec<f64>> = BTreeMap::new();
    for t in traces {
        for (cluster, waypoint, rate, _) in t.serves() {
            let origin = world
                .clusters
                .get(cluster as usize)
                .ok_or(PromoteError::UnknownCluster(cluster))?;
            let offset = (waypoint.x - origin.x, waypoint.y - origin.y);
            rates.entry((cluster, offset)).or_default().push(rate);
        }
    }
    let lookup: Vec<LookupRow> = rates
        .iter()
        .map(|(&(cluster, offset), rs)| {
            let mean = (rs.iter().sum::<f64>() / rs.len() as f64).round();
            LookupRow {
                cluster,
                offset,
                rate_bps: mean,
                feasible: mean > world.access_threshold_bps,
            }
        })
        .collect();

    let mut ranked: Vec<(&EpisodeTrace, f64, u64)> = traces
        .iter()
        .filter(|t| t.success())
        .map(|t| (t, t.throughput_bps(), t.episode().unwrap_or(u64::MAX)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.2.cmp(&b.2)));
    let plans: Vec<ReferencePlan> = ranked
        .iter()
        .take(cfg.top_plans)
        .map(|(t, thr, _)| ReferencePlan {
            throughput_bps: thr.round(),
            legs: t
                .serves()
                .filter(|(_, _, _, served)| *served)
                .map(|(cluster, waypoint, _, _)| PlanLeg { cluster, waypoint })
                .collect(),
        })
        .collect();

    let workflow = Workflow::canonical(world.access_threshold_bps, world.backhaul_threshold_bps);
    let annotations = build_annotations(&lookup, cfg);

    Ok(KnowledgePack {
        nfz,
        obstacles: world.obstacles.clone(),
        backhaul_map,
        workflow,
        lookup,
        plans,
        annotations,
    })
}

/// Deepest-level extras: near-duplicates of lookup facts, plus scripted
/// contradicting heuristic pairs whose reconciliation cost shows up in
/// reasoning traces.
fn build_annotations(lookup: &[LookupRow], cfg: &PromotionConfig) -> Vec<Annotation> {
    let mut out = Vec::new();
    let conflict_texts = [
        (
            "prefer the hover cell with the highest measured rate even when it is farther",
            "prefer the nearest hover cell even when its measured rate is lower",
        ),
        (
            "request a fresh pack whenever the backhaul is up",
            "never spend backhaul tokens mid-mission",
        ),
        (
            "wait out active windows next to the restricted cell",
            "route around the restricted cell without waiting",
        ),
    ];
    for g in 0..cfg.conflict_pairs.min(conflict_texts.len()) {
        let (a, b) = conflict_texts[g];
        out.push(Annotation {
            subject: "global".into(),
            text: a.into(),
            conflict_group: Some(g as u8),
        });
        out.push(Annotation {
            subject: "global".into(),
            text: b.into(),
            conflict_group: Some(g as u8),
        });
    }
    let singles = cfg.annotations.saturating_sub(out.len());
    let mut best: Vec<&LookupRow> = lookup.iter().filter(|r| r.feasible).collect();
    best.sort_by(|a, b| {
        b.rate_bps
            .partial_cmp(&a.rate_bps)
            .unwrap()
            .then(a.cluster.cmp(&b.cluster))
            .then(a.offset.cmp(&b.offset))
    });
    for i in 0..singles {
        let text = match best.get(i % best.len().max(1)) {
            Some(r) => format!(
                "cluster {} averages {} bps served from offset ({},{})",
                r.cluster, r.rate_bps as u64, r.offset.0, r.offset.1
            ),
            None => "no feasible hover cell measured yet".to_string(),
        };
        out.push(Annotation {
            subject: format!("note-{i}"),
            text,
            conflict_group: None,
        });
    }
    out
}

/// Mission facts the UAV is briefed with before launch, independent of any
/// promoted knowledge: where it flies, whom it serves, what counts as served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionBriefing {
    pub grid: (i32, i32),
    pub home: GridCell,
    pub clusters: Vec<GridCell>,
    pub access_threshold_bps: f64,
    pub backhaul_threshold_bps: f64,
}

impl MissionBriefing {
    pub fn of(world: &World) -> Self {
        MissionBriefing {
            grid: (world.width, world.height),
            home: world.home,
            clusters: world.clusters.clone(),
            access_threshold_bps: world.access_threshold_bps,
            backhaul_threshold_bps: world.backhaul_threshold_bps,
        }
    }
}

/// Constraints visible to the procedural reasoner: briefing facts merged
/// with whatever the pack slice carries.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredFacts {
    pub grid: (i32, i32),
    pub home: GridCell,
    pub clusters: Vec<GridCell>,
    pub obstacles: BTreeSet<GridCell>,
    pub nfz: NfzSchedule,
    pub access_threshold_bps: f64,
    pub backhaul_threshold_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveKnowledge {
    pub structured: StructuredFacts,
    pub backhaul_map: Option<Vec<Vec<u8>>>,
    pub workflow: Option<Workflow>,
    pub lookup: Vec<LookupRow>,
    pub plan_suffix: Option<Vec<PlanLeg>>,
    pub conflicts: Vec<(Annotation, Annotation)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Situation {
    pub uav: GridCell,
    pub remaining: Vec<(u32, GridCell)>,
    pub clock: u32,
}

/// The longest plan tail whose clusters are exactly the unserved set; an
/// already-served prefix is skipped, not disqualifying.
pub fn matching_suffix(plans: &[ReferencePlan], remaining: &BTreeSet<u32>) -> Option<Vec<PlanLeg>> {
    if remaining.is_empty() {
        return None;
    }
    for plan in plans {
        for start in 0..plan.legs.len() {
            let suffix = &plan.legs[start..];
            let ids: BTreeSet<u32> = suffix.iter().map(|l| l.cluster).collect();
            if ids == *remaining && suffix.len() == remaining.len() {
                return Some(suffix.to_vec());
            }
        }
    }
    None
}

/// Parse a delivered pack and keep only what this moment needs: rows for
/// unserved clusters, a plan tail that matches them, constraints always.
pub fn activate(
    pack: &SerializedPack,
    briefing: &MissionBriefing,
    situation: &Situation,
) -> Result<ActiveKnowledge, ParseError> {
    let slice = parse_pack(pack)?;
    let remaining_ids: BTreeSet<u32> = situation.remaining.iter().map(|(id, _)| *id).collect();
    let lookup = slice
        .lookup
        .into_iter()
        .filter(|r| remaining_ids.contains(&r.cluster))
        .collect();
    let plan_suffix = matching_suffix(&slice.plans, &remaining_ids);

    let mut groups: BTreeMap<u8, Vec<Annotation>> = BTreeMap::new();
    for a in &slice.annotations {
        if let Some(g) = a.conflict_group {
            groups.entry(g).or_default().push(a.clone());
        }
    }
    let conflicts = groups
        .into_values()
        .filter(|v| v.len() == 2)
        .map(|mut v| {
            let b = v.pop().unwrap();
            let a = v.pop().unwrap();
            (a, b)
        })
        .collect();

    Ok(ActiveKnowledge {
        structured: StructuredFacts {
            grid: briefing.grid,
            home: briefing.home,
            clusters: briefing.clusters.clone(),
            obstacles: slice.obstacles,
            nfz: slice.nfz,
            access_threshold_bps: briefing.access_threshold_bps,
            backhaul_threshold_bps: briefing.backhaul_threshold_bps,
        },
        backhaul_map: slice.backhaul_map,
        workflow: slice.workflow,
        lookup,
        plan_suffix,
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MissionConfig;
    use crate::grid::{build_world, cell, nfz_active};

    #[test]
    fn token_counting_boundaries() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("abcd"), 1);
        assert_eq!(count_tokens("0123456789"), 3);
        assert_eq!(count_tokens("x"), 1);
    }

    #[test]
    fn dense_observations_recover_the_schedule_exactly() {
        let truth = NfzSchedule {
            cell: cell(3, 3),
            period_steps: 40,
            active_start: 0,
            active_len: 12,
        };
        let obs: Vec<(u32, bool)> = (0..100).map(|c| (c, nfz_active(&truth, c, 0))).collect();
        assert_eq!(induce_nfz_schedule(&obs, 96), Ok((40, 0, 12)));
    }

    #[test]
    fn shifted_window_recovers_too() {
        let truth = NfzSchedule {
            cell: cell(3, 3),
            period_steps: 24,
            active_start: 5,
            active_len: 9,
        };
        let obs: Vec<(u32, bool)> = (0..72).map(|c| (c, nfz_active(&truth, c, 0))).collect();
        assert_eq!(induce_nfz_schedule(&obs, 96), Ok((24, 5, 9)));
    }

    #[test]
    fn all_inactive_is_an_error() {
        let obs: Vec<(u32, bool)> = (0..50).map(|c| (c, false)).collect();
        assert_eq!(
            induce_nfz_schedule(&obs, 96),
            Err(InductionError::NoActiveSample)
        );
    }

    #[test]
    fn same_phase_both_labels_is_contradictory() {
        assert_eq!(
            induce_nfz_schedule(&[(7, true), (7, false)], 96),
            Err(InductionError::Contradictory)
        );
    }

    #[test]
    fn sparse_observations_pick_the_smallest_consistent_period() {
        assert_eq!(
            induce_nfz_schedule(&[(0, true), (3, false)], 96),
            Ok((2, 0, 1))
        );
    }

    #[test]
    fn unboxable_phases_within_the_cap_do_not_fit() {
        let obs = [(0, true), (1, false), (2, true), (4, false)];
        assert_eq!(induce_nfz_schedule(&obs, 3), Err(InductionError::NoFit));
    }

    fn mini_trace(episode: u64, serves: &[(u32, GridCell, f64)], success: bool) -> EpisodeTrace {
        let mut lines = vec![TraceLine::Meta {
            episode,
            seed: episode,
            start_offset: 0,
        }];
        let truth = NfzSchedule {
            cell: cell(3, 3),
            period_steps: 40,
            active_start: 0,
            active_len: 12,
        };
        for c in 0..100 {
            lines.push(TraceLine::Nfz {
                clock_abs: c,
                active: nfz_active(&truth, c, 0),
            });
        }
        lines.push(TraceLine::Backhaul {
            cell: cell(4, 4),
            rate_bps: 2e8,
            feasible: true,
        });
        lines.push(TraceLine::Backhaul {
            cell: cell(4, 4),
            rate_bps: 2e8,
            feasible: true,
        });
        lines.push(TraceLine::Backhaul {
            cell: cell(0, 0),
            rate_bps: 1e6,
            feasible: false,
        });
        let mut throughput = 0.0;
        for &(cluster, wp, rate) in serves {
            lines.push(TraceLine::Serve {
                clock: 10,
                cluster,
                waypoint: wp,
                rate_bps: rate,
                served: true,
            });
            throughput += rate;
        }
        lines.push(TraceLine::End {
            termination: "all clusters served".into(),
            success,
            throughput_bps: throughput,
        });
        EpisodeTrace { lines }
    }

    #[test]
    fn trace_jsonl_round_trips() {
        let t = mini_trace(3, &[(0, cell(1, 1), 9e6)], true);
        let text = t.to_jsonl();
        assert_eq!(EpisodeTrace::from_jsonl(&text).unwrap(), t);
        assert!(text.lines().next().unwrap().contains("\"meta\""));
    }

    #[test]
    fn promotion_aggregates_rates_and_links() {
        let w = build_world(&MissionConfig::default()).unwrap();
        let cfg = PromotionConfig::default();
        let traces = vec![
            mini_trace(0, &[(0, cell(1, 1), 10e6), (1, cell(6, 1), 20e6)], true),
            mini_trace(1, &[(0, cell(1, 1), 14e6), (0, cell(0, 1), 6e6)], true),
        ];
        let pack = promote(&traces, &w, &cfg).unwrap();
        assert_eq!(pack.nfz.period_steps, 40);
        assert_eq!((pack.nfz.active_start, pack.nfz.active_len), (0, 12));
        assert_eq!(pack.obstacles, w.obstacles);

        let overhead = pack
            .lookup
            .iter()
            .find(|r| r.cluster == 0 && r.offset == (0, 0))
            .unwrap();
        assert_eq!(overhead.rate_bps, 12e6);
        assert!(overhead.feasible);
        let west = pack
            .lookup
            .iter()
            .find(|r| r.cluster == 0 && r.offset == (-1, 0))
            .unwrap();
        assert_eq!(west.rate_bps, 6e6);
        assert!(!west.feasible); // 6 Mbps mean is below the serve bar

        // home cell: 2 of 2 feasible → (2+1)/(2+2) = 0.75 → decile 8
        assert_eq!(pack.backhaul_map[4][4], 8);
        // (0,0): 0 of 1 → 1/3 → decile 3
        assert_eq!(pack.backhaul_map[0][0], 3);
        // unvisited cells sit at the 1/2 prior
        assert_eq!(pack.backhaul_map[7][7], 5);

        // higher-throughput episode ranks first; no episode ids survive
        assert_eq!(pack.plans.len(), 2);
        assert_eq!(pack.plans[0].throughput_bps, 30e6);
        assert_eq!(pack.plans[0].legs.len(), 2);
        assert_eq!(pack.workflow.checks.len(), 3);
        assert_eq!(pack.annotations.len(), cfg.annotations);
    }

    #[test]
    fn corpus_order_does_not_matter() {
        let w = build_world(&MissionConfig::default()).unwrap();
        let cfg = PromotionConfig::default();
        let a = mini_trace(0, &[(0, cell(1, 1), 10e6)], true);
        let b = mini_trace(1, &[(1, cell(6, 1), 20e6)], true);
        let p1 = promote(&[a.clone(), b.clone()], &w, &cfg).unwrap();
        let p2 = promote(&[b, a], &w, &cfg).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn zero_serves_leaves_retrieval_empty() {
        let w = build_world(&MissionConfig::default()).unwrap();
        let mut t = mini_trace(0, &[], false);
        t.lines.retain(|l| !matches!(l, TraceLine::End { .. }));
        t.lines.push(TraceLine::End {
            termination: "budget exhausted".into(),
            success: false,
            throughput_bps: 0.0,
        });
        let pack = promote(&[t], &w, &PromotionConfig::default()).unwrap();
        assert!(pack.plans.is_empty());
        assert!(pack.lookup.is_empty());
        assert_eq!(pack.nfz.period_steps, 40);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let w = build_world(&MissionConfig::default()).unwrap();
        assert!(matches!(
            promote(&[], &w, &PromotionConfig::default()),
            Err(PromoteError::EmptyCorpus)
        ));
    }

    #[test]
    fn suffix_matching_skips_served_prefixes() {
        let plan = ReferencePlan {
            throughput_bps: 1.0,
            legs: vec![
                PlanLeg {
                    cluster: 0,
                    waypoint: cell(1, 1),
                },
                PlanLeg {
                    cluster: 1,
                    waypoint: cell(6, 1),
                },
                PlanLeg {
                    cluster: 2,
                    waypoint: cell(1, 6),
                },
                PlanLeg {
                    cluster: 3,
                    waypoint: cell(6, 6),
                },
            ],
        };
        let remaining: BTreeSet<u32> = [2, 3].into_iter().collect();
        let suffix = matching_suffix(&[plan.clone()], &remaining).unwrap();
        assert_eq!(suffix.len(), 2);
        assert_eq!(suffix[0].cluster, 2);

        // out-of-order remainder has no contiguous tail
        let remaining: BTreeSet<u32> = [1, 3].into_iter().collect();
        assert!(matching_suffix(&[plan.clone()], &remaining).is_none());

        let all: BTreeSet<u32> = [0, 1, 2, 3].into_iter().collect();
        assert_eq!(matching_suffix(&[plan], &all).unwrap().len(), 4);
    }
}
