//! Episode runner and suite evaluator. One episode is a loop of
//! observe → transfer → decide → fly → serve; methods differ only in how
//! the decide step gets its knowledge.

use crate::cloud::{home_plan, summary_tokens, MissionPlan, UplinkReport};
use crate::comms::{replan_exchange, try_sync, CommsLedger, Exchange, SyncOutcome};
use crate::config::{ConfigError, MissionConfig};
use crate::corpus::generate_corpus;
use crate::grid::{
    advance, build_world, sample_disruptions, Disruption, DisruptionSet, EpisodeState, GridCell,
    Reveal, StepOutcome, TickAction, Violation, World,
};
use crate::knowledge::{
    activate, promote, EpisodeTrace, KnowledgePack, MissionBriefing, PromoteError, Situation,
    TraceLine,
};
use crate::llm::LlmClient;
use crate::pack::{assemble_pack, SerializedPack};
use crate::path::plan_path;
use crate::radio::{geometry, sample_rate_bps};
use crate::reasoner::{
    greedy_step_decide, procedural_decide, search_decide, MacroDecision, Observation,
    PublicWorldView, ReasoningTrace, SearchMemory, StepKind,
};
use crate::rng::{episode_seed, substream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Packed knowledge at exposure depth 1..=5, fetched over the backhaul.
    WithK(u8),
    /// Onboard generate-and-test with no knowledge transfer at all.
    NoK,
    /// No onboard knowledge; Home replans over the link after every surprise.
    HomeReplan,
    /// Reactive single-step baseline standing in for a trained step policy.
    GreedyStep,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::WithK(k) => format!("with_k({k})"),
            Method::NoK => "no_k".into(),
            Method::HomeReplan => "home_replan".into(),
            Method::GreedyStep => "greedy_step".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MethodParseError {
    #[error("unknown method {0:?}; expected with_k, no_k, home_replan or greedy_step")]
    Unknown(String),
    #[error("method with_k needs an exposure level between 1 and 5")]
    MissingK,
    #[error("exposure level {0} out of range 1..=5")]
    BadK(u8),
}

/// Parse `--method`/`--k` CLI arguments. `with_k(3)` and `with_k` + `k=3`
/// are both accepted.
pub fn parse_method(name: &str, k: Option<u8>) -> Result<Method, MethodParseError> {
    let check = |k: u8| {
        if (1..=5).contains(&k) {
            Ok(Method::WithK(k))
        } else {
            Err(MethodParseError::BadK(k))
        }
    };
    match name {
        "no_k" => Ok(Method::NoK),
        "home_replan" => Ok(Method::HomeReplan),
        "greedy_step" => Ok(Method::GreedyStep),
        "with_k" => k.ok_or(MethodParseError::MissingK).and_then(check),
        other => {
            if let Some(inner) = other
                .strip_prefix("with_k(")
                .and_then(|s| s.strip_suffix(')'))
            {
                let k: u8 = inner
                    .parse()
                    .map_err(|_| MethodParseError::Unknown(other.into()))?;
                return check(k);
            }
            Err(MethodParseError::Unknown(other.into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForceBackhaul {
    /// Draw the link from the propagation model (default).
    Sampled,
    /// Link always up with unlimited window.
    Available,
    /// The first transfer attempt after each disruption reveal fails;
    /// later attempts sample normally.
    OutageAtReveal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub force_backhaul: ForceBackhaul,
    /// Load the pack before departure instead of fetching it in flight.
    pub precache: bool,
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            force_backhaul: ForceBackhaul::Sampled,
            precache: false,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub method: String,
    pub success: bool,
    pub ticks: u32,
    pub decisions: u64,
    pub reasoning_steps: u64,
    pub reasoning_tokens: u64,
    pub violations: Vec<Violation>,
    pub disruptions: DisruptionSet,
    pub stale_plan_decisions: u64,
    pub throughput_bps: f64,
    pub ledger: CommsLedger,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<EpisodeTrace>,
}

impl EpisodeResult {
    pub fn violation_count(&self) -> u64 {
        self.violations.len() as u64
    }

    pub fn comms_tokens(&self) -> u64 {
        self.ledger.total_tokens()
    }
}

/// Suite-level aggregates. Token-per-step is a ratio of totals, not a
/// mean of ratios, so long episodes weigh in proportionally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: u32,
    pub success_rate: f64,
    pub violation_rate: f64,
    pub total_violations: u64,
    pub mean_reasoning_steps: f64,
    pub mean_reasoning_tokens: f64,
    pub tokens_per_step: f64,
    pub mean_ticks: f64,
    pub mean_sync_tokens: f64,
    pub mean_exchange_tokens: f64,
    pub mean_comms_tokens: f64,
}

impl Metrics {
    pub fn of(results: &[EpisodeResult]) -> Metrics {
        let n = results.len().max(1) as f64;
        let steps: u64 = results.iter().map(|r| r.reasoning_steps).sum();
        let tokens: u64 = results.iter().map(|r| r.reasoning_tokens).sum();
        Metrics {
            episodes: results.len() as u32,
            success_rate: results.iter().filter(|r| r.success).count() as f64 / n,
            violation_rate: results.iter().filter(|r| !r.violations.is_empty()).count() as f64 / n,
            total_violations: results.iter().map(|r| r.violation_count()).sum(),
            mean_reasoning_steps: steps as f64 / n,
            mean_reasoning_tokens: tokens as f64 / n,
            tokens_per_step: if steps == 0 {
                0.0
            } else {
                tokens as f64 / steps as f64
            },
            mean_ticks: results.iter().map(|r| r.ticks as f64).sum::<f64>() / n,
            mean_sync_tokens: results
                .iter()
                .map(|r| r.ledger.sync_tokens as f64)
                .sum::<f64>()
                / n,
            mean_exchange_tokens: results
                .iter()
                .map(|r| {
                    (r.ledger.uplink_tokens + r.ledger.planning_tokens + r.ledger.downlink_tokens)
                        as f64
                })
                .sum::<f64>()
                / n,
            mean_comms_tokens: results.iter().map(|r| r.comms_tokens() as f64).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub results: Vec<EpisodeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u8,
    pub payload_tokens: u64,
    pub metrics: Metrics,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("promotion over the survey corpus failed: {0}")]
    Promote(#[from] PromoteError),
}

/// Owns the world, the promoted knowledge and its serialized exposures;
/// episodes borrow it immutably so suites parallelize freely.
pub struct Harness {
    pub config: MissionConfig,
    pub world: World,
    pub briefing: MissionBriefing,
    pub full_pack: KnowledgePack,
    packs: BTreeMap<u8, SerializedPack>,
    view: PublicWorldView,
}

impl Harness {
    pub fn new(config: MissionConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let world = build_world(&config).expect("validated");
        let corpus = generate_corpus(&world, config.promotion.corpus_episodes as u32);
        let full_pack = promote(&corpus, &world, &config.promotion)?;
        let packs = (1..=5u8)
            .map(|k| (k, assemble_pack(&full_pack, k)))
            .collect();
        let briefing = MissionBriefing::of(&world);
        let view = PublicWorldView::of(&world);
        Ok(Harness {
            config,
            world,
            briefing,
            full_pack,
            packs,
            view,
        })
    }

    pub fn pack(&self, k: u8) -> &SerializedPack {
        self.packs.get(&k).expect("levels 1..=5 assembled")
    }

    /// The episode's drawn disruptions and start offset — a pure function
    /// of the seed, identical for every method.
    pub fn draw_conditions(&self, seed: u64) -> (DisruptionSet, u32) {
        let disruptions = sample_disruptions(seed, &self.config.disruptions, &self.world);
        let mut off_rng = substream(seed, "start_offset");
        use rand::Rng;
        let start_offset = off_rng.gen_range(0..self.world.nfz.period_steps);
        (disruptions, start_offset)
    }

    pub fn run_episode(&self, method: Method, seed: u64, opts: &RunOptions) -> EpisodeResult {
        self.run_episode_impl(method, seed, opts, None)
    }

    /// Same episode, but macro decisions of the search and pack methods are
    /// delegated to the external adapter. A request error, an unparsable
    /// answer or an impassable waypoint falls back to onboard search, so
    /// the mission never deadlocks on adapter misbehavior.
    pub fn run_episode_llm(
        &self,
        method: Method,
        seed: u64,
        opts: &RunOptions,
        client: &LlmClient,
    ) -> EpisodeResult {
        self.run_episode_impl(method, seed, opts, Some(client))
    }

    fn run_episode_impl(
        &self,
        method: Method,
        seed: u64,
        opts: &RunOptions,
        llm: Option<&LlmClient>,
    ) -> EpisodeResult {
        let w = &self.world;
        let costs = &self.config.costs;
        let (disruptions, start_offset) = self.draw_conditions(seed);
        let mut radio_rng = substream(seed, "radio");
        let mut policy_rng = substream(seed, "policy");

        let mut state = EpisodeState::new(w, start_offset, disruptions.clone());
        if opts.precache {
            if let Method::WithK(k) = method {
                state.cached_pack = Some(self.pack(k).clone());
            }
        }

        let mut mem = SearchMemory::default();
        let mut failed: BTreeSet<(u32, GridCell)> = BTreeSet::new();
        let mut ledger = CommsLedger::default();
        let mut lines: Vec<TraceLine> = vec![TraceLine::Meta {
            episode: seed,
            seed,
            start_offset,
        }];
        let mut steps = 0u64;
        let mut tokens = 0u64;
        let mut decisions = 0u64;
        let mut violations: Vec<Violation> = Vec::new();
        let mut throughput = 0.0f64;
        let mut stale = 0u64;
        let mut pending_request = false;

        // cloud-replanning state: the departure plan is computed at Home
        // before takeoff and costs nothing over the air
        let mut plan: Option<MissionPlan> = if method == Method::HomeReplan {
            let (p, _) = home_plan(
                &self.full_pack,
                &self.briefing,
                w.home,
                &state.believed,
                &state.remaining,
                costs,
            )
            .expect("departure plan over promoted knowledge");
            Some(p)
        } else {
            None
        };
        let mut pending_replan = false;
        let mut just_revealed = false;
        let mut reveals_so_far: Vec<Reveal> = Vec::new();
        let mut serve_log: Vec<(u32, u32, GridCell, bool)> = Vec::new();
        let mut trail: Vec<(u32, GridCell, StepOutcome)> = Vec::new();

        let termination = loop {
            if state.remaining.is_empty() {
                break "all clusters served";
            }
            if state.budget == 0 {
                break "tick budget exhausted";
            }
            if decisions >= 10_000 {
                break "decision limit reached";
            }

            // observe: one backhaul sample per decision point; forcing
            // modes override what the agent experiences, not the draw
            let g = geometry(w, state.uav, w.home);
            let sampled = sample_rate_bps(&w.backhaul, &g, &mut radio_rng, 0.0);
            let rate = match opts.force_backhaul {
                ForceBackhaul::Sampled => sampled,
                ForceBackhaul::Available => 1e15,
                ForceBackhaul::OutageAtReveal => {
                    if just_revealed {
                        0.0
                    } else {
                        sampled
                    }
                }
            };
            let bh_feasible = rate > w.backhaul_threshold_bps;
            lines.push(TraceLine::Backhaul {
                cell: state.uav,
                rate_bps: rate,
                feasible: bh_feasible,
            });

            // transfer: honor last decision's pack request
            if let Method::WithK(k) = method {
                if pending_request && state.cached_pack.is_none() {
                    let res = try_sync(
                        self.pack(k),
                        rate,
                        self.config.sync.interval_s,
                        w.backhaul_threshold_bps,
                        self.config.sync.bits_per_token,
                    );
                    ledger.record_sync(state.clock, &res);
                    if res.outcome == SyncOutcome::Delivered {
                        state.cached_pack = Some(self.pack(k).clone());
                    }
                }
            }

            // transfer: replan with Home after a reveal, retrying at every
            // decision point until an exchange goes through
            if method == Method::HomeReplan && pending_replan {
                let report = UplinkReport {
                    clock: state.clock,
                    cell: state.uav,
                    budget: state.budget,
                    last_outcome: state.last_outcome,
                    backhaul_rate_bps: rate,
                    remaining: state
                        .remaining
                        .iter()
                        .map(|&id| (id, state.believed[&id]))
                        .collect(),
                    reveals: reveals_so_far.clone(),
                    serves: serve_log.clone(),
                    trail: trail
                        .iter()
                        .rev()
                        .take(self.config.summary_trail_len)
                        .rev()
                        .copied()
                        .collect(),
                    violations: violations.len() as u64,
                };
                let up = summary_tokens(&report);
                let exchanged = replan_exchange(
                    up,
                    rate,
                    w.backhaul_threshold_bps,
                    state.clock,
                    || {
                        home_plan(
                            &self.full_pack,
                            &self.briefing,
                            state.uav,
                            &state.believed,
                            &state.remaining,
                            costs,
                        )
                    },
                    &mut ledger,
                );
                if let Ok(Exchange::Plan { plan: fresh, .. }) = exchanged {
                    plan = Some(fresh);
                    pending_replan = false;
                }
            }
            just_revealed = false;

            // decide
            let obs = Observation {
                uav: state.uav,
                clock: state.clock,
                budget: state.budget,
                remaining: state
                    .remaining
                    .iter()
                    .map(|&id| (id, state.believed[&id]))
                    .collect(),
                last_outcome: state.last_outcome,
                backhaul_feasible: bh_feasible,
                has_pack: state.cached_pack.is_some(),
            };
            let delegated = match (llm, method) {
                (Some(client), Method::NoK | Method::WithK(_)) => Some(
                    client
                        .decide(&obs, state.cached_pack.as_ref(), (w.width, w.height))
                        .ok()
                        .filter(|(d, _)| w.passable(d.waypoint))
                        .unwrap_or_else(|| {
                            search_decide(
                                &obs,
                                &self.view,
                                costs,
                                self.config.search.serve_range,
                                &mem,
                                &mut policy_rng,
                                matches!(method, Method::WithK(_)),
                            )
                        }),
                ),
                _ => None,
            };
            let (decision, trace) = if let Some(hit) = delegated {
                hit
            } else {
                match method {
                    Method::NoK => search_decide(
                        &obs,
                        &self.view,
                        costs,
                        self.config.search.serve_range,
                        &mem,
                        &mut policy_rng,
                        false,
                    ),
                    Method::GreedyStep => greedy_step_decide(&obs, w.home, costs),
                    Method::WithK(_) => match &state.cached_pack {
                        None if decisions == 0 => {
                            let mut t = ReasoningTrace::default();
                            t.push(
                                StepKind::Commit,
                                costs,
                                "no pack aboard yet; hold and request one",
                            );
                            (
                                MacroDecision {
                                    next_cluster: None,
                                    waypoint: state.uav,
                                    request_knowledge: bh_feasible,
                                },
                                t,
                            )
                        }
                        None => search_decide(
                            &obs,
                            &self.view,
                            costs,
                            self.config.search.serve_range,
                            &mem,
                            &mut policy_rng,
                            true,
                        ),
                        Some(pack) => {
                            let situation = Situation {
                                uav: state.uav,
                                remaining: obs.remaining.clone(),
                                clock: state.clock,
                            };
                            let fall_back =
                                |prefix: ReasoningTrace, rng: &mut crate::rng::Stream| {
                                    let (d, t) = search_decide(
                                        &obs,
                                        &self.view,
                                        costs,
                                        self.config.search.serve_range,
                                        &mem,
                                        rng,
                                        true,
                                    );
                                    let mut merged = prefix;
                                    merged.extend(t);
                                    (d, merged)
                                };
                            match activate(pack, &self.briefing, &situation) {
                                Ok(active) => {
                                    match procedural_decide(&obs, &active, costs, &failed) {
                                        Ok(ok) => ok,
                                        Err(no_fit) => fall_back(no_fit.trace, &mut policy_rng),
                                    }
                                }
                                Err(_) => fall_back(ReasoningTrace::default(), &mut policy_rng),
                            }
                        }
                    },
                    Method::HomeReplan => {
                        let mut t = ReasoningTrace::default();
                        let leg = plan.as_ref().and_then(|p| p.next_leg(&state.remaining));
                        if pending_replan {
                            stale += 1;
                        }
                        match leg {
                            Some(leg) => {
                                t.push(
                                    StepKind::Commit,
                                    costs,
                                    if pending_replan {
                                        format!(
                                            "link down; holding stale plan, cluster {} from {}",
                                            leg.cluster, leg.waypoint
                                        )
                                    } else {
                                        format!(
                                            "follow plan: cluster {} from {}",
                                            leg.cluster, leg.waypoint
                                        )
                                    },
                                );
                                (
                                    MacroDecision {
                                        next_cluster: Some(leg.cluster),
                                        waypoint: leg.waypoint,
                                        request_knowledge: false,
                                    },
                                    t,
                                )
                            }
                            None => {
                                // plan ran dry with work left: hover and wait
                                // for the next exchange to go through
                                pending_replan = true;
                                t.push(
                                    StepKind::Commit,
                                    costs,
                                    "plan exhausted; holding for a fresh one",
                                );
                                (
                                    MacroDecision {
                                        next_cluster: None,
                                        waypoint: state.uav,
                                        request_knowledge: false,
                                    },
                                    t,
                                )
                            }
                        }
                    }
                }
            };
            steps += trace.step_count();
            tokens += trace.token_total();
            decisions += 1;
            pending_request = decision.request_knowledge;

            // fly: route nfz-aware only when the schedule is actually known
            let know_nfz = match method {
                Method::WithK(_) => state.cached_pack.is_some(),
                Method::HomeReplan => true,
                Method::NoK | Method::GreedyStep => false,
            };
            let path = plan_path(
                w,
                state.uav,
                decision.waypoint,
                state.clock,
                start_offset,
                know_nfz,
            )
            .unwrap_or_else(|_| vec![state.uav]);
            let res = advance(w, &mut state, &decision, &path, &mut radio_rng);

            violations.extend(res.violations.iter().cloned());
            for t in &res.ticks {
                lines.push(TraceLine::Tick {
                    clock: t.clock,
                    cell: t.cell,
                    action: t.action,
                    outcome: if t.action == TickAction::Move {
                        StepOutcome::Moved
                    } else {
                        StepOutcome::Idle
                    },
                });
                if let Some((abs, active)) = t.nfz_obs {
                    lines.push(TraceLine::Nfz {
                        clock_abs: abs,
                        active,
                    });
                }
                trail.push((
                    t.clock,
                    t.cell,
                    if t.action == TickAction::Move {
                        StepOutcome::Moved
                    } else {
                        StepOutcome::Idle
                    },
                ));
            }
            for r in &res.reveals {
                reveals_so_far.push(r.clone());
                lines.push(TraceLine::Reveal {
                    clock: state.clock,
                    disruption: reveal_to_disruption(r, w),
                });
            }
            if let Some(s) = &res.serve {
                lines.push(TraceLine::Serve {
                    clock: state.clock,
                    cluster: s.cluster,
                    waypoint: s.waypoint,
                    rate_bps: s.rate_bps,
                    served: s.served,
                });
                serve_log.push((state.clock, s.cluster, s.waypoint, s.served));
                if s.served {
                    throughput += s.rate_bps;
                } else {
                    failed.insert((s.cluster, s.waypoint));
                    mem.note_failure(s.cluster, s.waypoint);
                }
            }
            if !res.reveals.is_empty() {
                pending_replan = true;
                just_revealed = true;
            }
        };

        let success = state.remaining.is_empty();
        lines.push(TraceLine::End {
            termination: termination.into(),
            success,
            throughput_bps: throughput,
        });
        debug_assert!(ledger.consistent());
        EpisodeResult {
            seed,
            method: method.label(),
            success,
            ticks: state.clock,
            decisions,
            reasoning_steps: steps,
            reasoning_tokens: tokens,
            violations,
            disruptions,
            stale_plan_decisions: stale,
            throughput_bps: throughput,
            ledger,
            trace: opts.record_trace.then(|| EpisodeTrace { lines }),
        }
    }

    /// Run a seeded suite in parallel; results come back ordered by seed
    /// so downstream output is reproducible byte for byte.
    pub fn evaluate(
        &self,
        method: Method,
        episodes: u32,
        seed_base: u64,
        opts: &RunOptions,
    ) -> Evaluation {
        let mut results: Vec<EpisodeResult> = (0..episodes as u64)
            .into_par_iter()
            .map(|i| self.run_episode(method, episode_seed(seed_base, i), opts))
            .collect();
        results.sort_by_key(|r| r.seed);
        Evaluation {
            metrics: Metrics::of(&results),
            results,
        }
    }

    /// The exposure sweep: identical seeds at every depth.
    pub fn sweep_k(&self, episodes: u32, seed_base: u64, opts: &RunOptions) -> Vec<SweepRow> {
        (1..=5u8)
            .map(|k| SweepRow {
                k,
                payload_tokens: self.pack(k).token_count,
                metrics: self
                    .evaluate(Method::WithK(k), episodes, seed_base, opts)
                    .metrics,
            })
            .collect()
    }
}

fn reveal_to_disruption(r: &Reveal, world: &World) -> Disruption {
    match r {
        Reveal::Drift { cluster, at } => {
            let nominal = world.clusters[*cluster as usize];
            Disruption::ClusterDrift {
                cluster: *cluster,
                offset: (at.x - nominal.x, at.y - nominal.y),
            }
        }
        Reveal::Drop {
            cluster,
            magnitude_db,
        } => Disruption::SnrDrop {
            cluster: *cluster,
            magnitude_db: *magnitude_db,
        },
    }
}
