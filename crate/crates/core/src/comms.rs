//! Backhaul transfer accounting. Two things cross the link: knowledge
//! packs (downlink only, one shot) and replanning exchanges (report up,
//! Home's deliberation, plan down). Every attempt lands in a
//! [`CommsLedger`], and an exchange is billed end to end — the round trip
//! is only as cheap as the planning inside it.

use crate::cloud::{plan_tokens, MissionPlan, PlannerError};
use crate::pack::SerializedPack;
use crate::reasoner::ReasoningTrace;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncOutcome {
    Delivered,
    /// Link below the backhaul threshold: nothing is sent.
    Infeasible,
    /// Link is up but the pack does not fit in one transfer window.
    OutOfWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    pub outcome: SyncOutcome,
    pub tokens_charged: u64,
    pub rate_sampled_bps: f64,
}

/// Gate a pack transfer on the sampled link. Tokens are only charged on
/// delivery; a refused or truncated attempt costs nothing but time.
pub fn try_sync(
    pack: &SerializedPack,
    rate_bps: f64,
    interval_s: f64,
    threshold_bps: f64,
    bits_per_token: u32,
) -> SyncResult {
    if !(rate_bps > threshold_bps) {
        return SyncResult {
            outcome: SyncOutcome::Infeasible,
            tokens_charged: 0,
            rate_sampled_bps: rate_bps,
        };
    }
    let bits = pack.token_count * bits_per_token as u64;
    if bits as f64 <= rate_bps * interval_s {
        SyncResult {
            outcome: SyncOutcome::Delivered,
            tokens_charged: pack.token_count,
            rate_sampled_bps: rate_bps,
        }
    } else {
        SyncResult {
            outcome: SyncOutcome::OutOfWindow,
            tokens_charged: 0,
            rate_sampled_bps: rate_bps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommsEventKind {
    SyncDelivered {
        tokens: u64,
    },
    SyncInfeasible,
    SyncOutOfWindow,
    ExchangeUplink {
        tokens: u64,
    },
    /// Home's replanning deliberation, billed like any other reasoning.
    ExchangePlanning {
        tokens: u64,
    },
    ExchangeDownlink {
        tokens: u64,
    },
    ExchangeOutage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommsEvent {
    pub clock: u32,
    pub rate_bps: f64,
    #[serde(flatten)]
    pub kind: CommsEventKind,
}

/// Per-episode transfer totals, derived from the event list and kept in
/// lockstep with it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommsLedger {
    pub sync_tokens: u64,
    pub uplink_tokens: u64,
    pub planning_tokens: u64,
    pub downlink_tokens: u64,
    pub exchange_count: u64,
    pub outage_count: u64,
    pub events: Vec<CommsEvent>,
}

impl CommsLedger {
    pub fn record_sync(&mut self, clock: u32, res: &SyncResult) {
        let kind = match res.outcome {
            SyncOutcome::Delivered => {
                self.sync_tokens += res.tokens_charged;
                CommsEventKind::SyncDelivered {
                    tokens: res.tokens_charged,
                }
            }
            SyncOutcome::Infeasible => CommsEventKind::SyncInfeasible,
            SyncOutcome::OutOfWindow => CommsEventKind::SyncOutOfWindow,
        };
        self.events.push(CommsEvent {
            clock,
            rate_bps: res.rate_sampled_bps,
            kind,
        });
    }

    pub fn total_tokens(&self) -> u64 {
        self.sync_tokens + self.uplink_tokens + self.planning_tokens + self.downlink_tokens
    }

    /// Totals must always re-derive from the event list.
    pub fn consistent(&self) -> bool {
        let mut sync = 0u64;
        let mut up = 0u64;
        let mut plan = 0u64;
        let mut down = 0u64;
        let mut exchanges = 0u64;
        let mut outages = 0u64;
        for e in &self.events {
            match e.kind {
                CommsEventKind::SyncDelivered { tokens } => sync += tokens,
                CommsEventKind::ExchangeUplink { tokens } => {
                    up += tokens;
                    exchanges += 1;
                }
                CommsEventKind::ExchangePlanning { tokens } => plan += tokens,
                CommsEventKind::ExchangeDownlink { tokens } => down += tokens,
                CommsEventKind::ExchangeOutage => outages += 1,
                CommsEventKind::SyncInfeasible | CommsEventKind::SyncOutOfWindow => {}
            }
        }
        sync == self.sync_tokens
            && up == self.uplink_tokens
            && plan == self.planning_tokens
            && down == self.downlink_tokens
            && exchanges == self.exchange_count
            && outages == self.outage_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exchange {
    /// Report went up, Home deliberated, fresh plan came down.
    Plan {
        plan: MissionPlan,
        planning_tokens: u64,
        downlink_tokens: u64,
    },
    /// Link was below threshold; nothing crossed, outage logged.
    Outage,
}

/// One replanning round trip. The uplink is charged only when the link is
/// up, Home's deliberation is billed at its traced token cost, and the
/// downlink is charged at the rendered plan's size. Planner errors
/// propagate so the caller can decide what a missing plan means.
pub fn replan_exchange(
    summary_tokens: u64,
    rate_bps: f64,
    threshold_bps: f64,
    clock: u32,
    planner: impl FnOnce() -> Result<(MissionPlan, ReasoningTrace), PlannerError>,
    ledger: &mut CommsLedger,
) -> Result<Exchange, PlannerError> {
    if !(rate_bps > threshold_bps) {
        ledger.outage_count += 1;
        ledger.events.push(CommsEvent {
            clock,
            rate_bps,
            kind: CommsEventKind::ExchangeOutage,
        });
        return Ok(Exchange::Outage);
    }
    let (plan, deliberation) = planner()?;
    let planning = deliberation.token_total();
    let downlink = plan_tokens(&plan);
    ledger.uplink_tokens += summary_tokens;
    ledger.planning_tokens += planning;
    ledger.downlink_tokens += downlink;
    ledger.exchange_count += 1;
    ledger.events.push(CommsEvent {
        clock,
        rate_bps,
        kind: CommsEventKind::ExchangeUplink {
            tokens: summary_tokens,
        },
    });
    ledger.events.push(CommsEvent {
        clock,
        rate_bps,
        kind: CommsEventKind::ExchangePlanning { tokens: planning },
    });
    ledger.events.push(CommsEvent {
        clock,
        rate_bps,
        kind: CommsEventKind::ExchangeDownlink { tokens: downlink },
    });
    Ok(Exchange::Plan {
        plan,
        planning_tokens: planning,
        downlink_tokens: downlink,
    })
}

/// Mean cumulative comms cost per disruption count, for the two knowledge
/// transports, plus the first count where caching wins outright.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortRow {
    pub disruptions: u32,
    pub episodes: u32,
    pub cached_mean: f64,
    pub replan_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmortizationReport {
    pub rows: Vec<AmortRow>,
    /// Smallest disruption count at which the cached transport's mean cost
    /// is at or below replanning's.
    pub break_even: Option<u32>,
}

pub fn amortization_compare(points: &[(u32, u64, u64)]) -> AmortizationReport {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<u32, (u32, u64, u64)> = BTreeMap::new();
    for &(d, cached, replan) in points {
        let g = groups.entry(d).or_insert((0, 0, 0));
        g.0 += 1;
        g.1 += cached;
        g.2 += replan;
    }
    let rows: Vec<AmortRow> = groups
        .into_iter()
        .map(|(d, (n, c, r))| AmortRow {
            disruptions: d,
            episodes: n,
            cached_mean: c as f64 / n as f64,
            replan_mean: r as f64 / n as f64,
        })
        .collect();
    let break_even = rows
        .iter()
        .find(|r| r.cached_mean <= r.replan_mean)
        .map(|r| r.disruptions);
    AmortizationReport { rows, break_even }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cell;
    use crate::grid::NfzSchedule;

    fn pack_of(tokens: u64) -> SerializedPack {
        SerializedPack {
            level: 3,
            body: "x".repeat((tokens * 4) as usize),
            token_count: tokens,
        }
    }

    fn toy_plan() -> (MissionPlan, ReasoningTrace) {
        let plan = MissionPlan {
            nfz: NfzSchedule {
                cell: cell(3, 3),
                period_steps: 40,
                active_start: 0,
                active_len: 12,
            },
            legs: vec![crate::cloud::CloudLeg {
                cluster: 0,
                waypoint: cell(1, 1),
                expect_bps: 184462232,
                fallbacks: vec![],
            }],
        };
        let mut trace = ReasoningTrace::default();
        trace.push_costed(crate::reasoner::StepKind::Commit, 30, "one-leg plan");
        (plan, trace)
    }

    #[test]
    fn link_at_threshold_refuses_transfer() {
        let r = try_sync(&pack_of(10), 5e6, 1.0, 5e6, 32);
        assert_eq!(r.outcome, SyncOutcome::Infeasible);
        assert_eq!(r.tokens_charged, 0);
    }

    #[test]
    fn pack_within_window_is_delivered_and_charged() {
        // 1000 tokens * 32 bits = 32 kb, well inside 10 Mbps * 1 s
        let r = try_sync(&pack_of(1000), 1e7, 1.0, 5e6, 32);
        assert_eq!(r.outcome, SyncOutcome::Delivered);
        assert_eq!(r.tokens_charged, 1000);
    }

    #[test]
    fn oversized_pack_is_refused_above_threshold() {
        // 1e6 tokens * 32 bits = 3.2e7 bits > 6e6 * 1 s
        let r = try_sync(&pack_of(1_000_000), 6e6, 1.0, 5e6, 32);
        assert_eq!(r.outcome, SyncOutcome::OutOfWindow);
        assert_eq!(r.tokens_charged, 0);
    }

    #[test]
    fn exact_fit_still_delivers() {
        // 1000 tokens * 32 = 32000 bits at 32000 bps over 1 s: boundary holds
        let r = try_sync(&pack_of(1000), 32000.0, 1.0, 5e3, 32);
        assert_eq!(r.outcome, SyncOutcome::Delivered);
    }

    #[test]
    fn ledger_totals_rederive_from_events() {
        let mut led = CommsLedger::default();
        led.record_sync(3, &try_sync(&pack_of(250), 1e7, 1.0, 5e6, 32));
        led.record_sync(5, &try_sync(&pack_of(250), 4e6, 1.0, 5e6, 32));
        let ex = replan_exchange(80, 2e7, 5e6, 9, || Ok(toy_plan()), &mut led).unwrap();
        match ex {
            Exchange::Plan {
                planning_tokens,
                downlink_tokens,
                ..
            } => {
                assert_eq!(planning_tokens, 30);
                assert!(downlink_tokens > 0);
            }
            Exchange::Outage => panic!("link was up"),
        }
        let _ = replan_exchange(80, 1e6, 5e6, 12, || Ok(toy_plan()), &mut led).unwrap();
        assert_eq!(led.sync_tokens, 250);
        assert_eq!(led.uplink_tokens, 80);
        assert_eq!(led.planning_tokens, 30);
        assert_eq!(led.exchange_count, 1);
        assert_eq!(led.outage_count, 1);
        assert!(led.consistent());
        assert_eq!(led.total_tokens(), 250 + 80 + 30 + led.downlink_tokens);
    }

    #[test]
    fn outage_charges_nothing() {
        let mut led = CommsLedger::default();
        let ex = replan_exchange(500, 5e6, 5e6, 0, || Ok(toy_plan()), &mut led).unwrap();
        assert_eq!(ex, Exchange::Outage);
        assert_eq!(led.total_tokens(), 0);
        assert_eq!(led.outage_count, 1);
        assert!(led.consistent());
    }

    #[test]
    fn planner_failure_propagates() {
        let mut led = CommsLedger::default();
        let err = replan_exchange(
            10,
            1e9,
            5e6,
            0,
            || Err(PlannerError::NoWaypoint(2)),
            &mut led,
        );
        assert!(err.is_err());
        assert_eq!(led.total_tokens(), 0);
    }

    #[test]
    fn amortization_groups_and_breaks_even() {
        // cached cost flat at 300; replanning grows with each disruption
        let points = vec![
            (0, 300, 0),
            (1, 300, 250),
            (1, 300, 270),
            (2, 300, 520),
            (3, 300, 800),
        ];
        let rep = amortization_compare(&points);
        assert_eq!(rep.rows.len(), 4);
        assert_eq!(rep.rows[1].episodes, 2);
        assert!((rep.rows[1].replan_mean - 260.0).abs() < 1e-9);
        assert_eq!(rep.break_even, Some(2));
    }

    #[test]
    fn event_log_serializes_round_trip() {
        let mut led = CommsLedger::default();
        led.record_sync(3, &try_sync(&pack_of(9), 1e7, 1.0, 5e6, 32));
        let json = serde_json::to_string(&led).unwrap();
        let back: CommsLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(led, back);
    }
}
