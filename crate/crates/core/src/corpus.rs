//! Scripted survey flights that seed promotion. The flights are noise
//! free — every measurement is the link budget's expected value — so the
//! pack built from them can be checked against closed-form oracles.

use crate::grid::{GridCell, StepOutcome, TickAction, World};
use crate::knowledge::{EpisodeTrace, TraceLine};
use crate::path::plan_path;
use crate::radio::{expected_rate_bps, geometry};

/// Hover offsets exercised per cluster, relative to the cluster cell.
pub const SERVE_OFFSETS: [(i32, i32); 3] = [(0, 0), (-1, 0), (0, -1)];

/// A deliberately out-of-range measurement: one cluster sampled from six
/// cells away so the lookup table carries a negative example too.
pub const PROBE_CLUSTER: u32 = 3;
pub const PROBE_OFFSET: (i32, i32) = (0, -6);

/// Which offset episode `e` uses for cluster `c`. Every third flight is a
/// clean all-overhead pass — those become the reference plans — while the
/// rest rotate through all three offsets. The `e/3` term matters: without
/// it the two in-between flights of a block can only reach two of the
/// three indices, and some cluster/offset pairs would never be sampled.
pub fn serve_offset(episode: u64, cluster: u32) -> (i32, i32) {
    if episode % 3 == 0 {
        SERVE_OFFSETS[0]
    } else {
        SERVE_OFFSETS[((episode + episode / 3 + cluster as u64) % 3) as usize]
    }
}

struct Scribe<'w> {
    world: &'w World,
    clock: u32,
    pos: GridCell,
    start_offset: u32,
    lines: Vec<TraceLine>,
}

impl<'w> Scribe<'w> {
    /// Roster glance plus a link measurement at the current cell. Runs once
    /// on the pad before departure and again after every tick.
    fn record_site(&mut self) {
        if self.pos.chebyshev(self.world.nfz.cell) <= 1 {
            let abs = self.start_offset + self.clock;
            self.lines.push(TraceLine::Nfz {
                clock_abs: abs,
                active: crate::grid::nfz_active(&self.world.nfz, self.clock, self.start_offset),
            });
        }
        let g = geometry(self.world, self.pos, self.world.home);
        let rate = expected_rate_bps(&self.world.backhaul, &g);
        self.lines.push(TraceLine::Backhaul {
            cell: self.pos,
            rate_bps: rate,
            feasible: rate > self.world.backhaul_threshold_bps,
        });
    }

    fn record_tick(&mut self, next: GridCell) {
        let action = if next == self.pos {
            TickAction::Wait
        } else {
            TickAction::Move
        };
        let outcome = if next == self.pos {
            StepOutcome::Idle
        } else {
            StepOutcome::Moved
        };
        self.pos = next;
        self.clock += 1;
        self.lines.push(TraceLine::Tick {
            clock: self.clock,
            cell: self.pos,
            action,
            outcome,
        });
        self.record_site();
    }

    fn fly_to(&mut self, dest: GridCell) {
        // survey flights are flown with the duty roster in hand
        let path = plan_path(
            self.world,
            self.pos,
            dest,
            self.clock,
            self.start_offset,
            true,
        )
        .expect("survey route exists");
        // path[0] is the cell we already occupy
        for step in path.into_iter().skip(1) {
            self.record_tick(step);
        }
    }

    fn measure(&mut self, cluster: u32) -> f64 {
        let target = self.world.clusters[cluster as usize];
        let rate = expected_rate_bps(&self.world.access, &geometry(self.world, self.pos, target));
        let served = rate > self.world.access_threshold_bps;
        self.lines.push(TraceLine::Serve {
            clock: self.clock,
            cluster,
            waypoint: self.pos,
            rate_bps: rate,
            served,
        });
        if served {
            rate
        } else {
            0.0
        }
    }
}

/// Build the survey corpus: `episodes` flights, each dwelling beside the
/// restricted cell long enough to log its state, then measuring every
/// cluster from a rotating hover offset. Start offsets stride by 7 so the
/// dwells jointly cover the whole activation cycle; the first flight also
/// sits through two full cycles back to back, which contradicts every
/// shorter aliased period an offline fit might otherwise settle on.
pub fn generate_corpus(world: &World, episodes: u32) -> Vec<EpisodeTrace> {
    let dwell_cell = GridCell {
        x: world.nfz.cell.x,
        y: world.nfz.cell.y + 1,
    };
    let mut out = Vec::with_capacity(episodes as usize);
    for e in 0..episodes as u64 {
        let start_offset = (e as u32 * 7) % world.nfz.period_steps;
        let mut s = Scribe {
            world,
            clock: 0,
            pos: world.home,
            start_offset,
            lines: vec![TraceLine::Meta {
                episode: e,
                seed: 1000 + e,
                start_offset,
            }],
        };
        s.record_site();
        s.fly_to(dwell_cell);
        let dwell = if e == 0 {
            2 * world.nfz.period_steps + world.nfz.active_len
        } else {
            5
        };
        for _ in 0..dwell {
            s.record_tick(dwell_cell);
        }
        let mut throughput = 0.0;
        for c in 0..world.clusters.len() as u32 {
            let base = world.clusters[c as usize];
            let (dx, dy) = serve_offset(e, c);
            s.fly_to(GridCell {
                x: base.x + dx,
                y: base.y + dy,
            });
            throughput += s.measure(c);
        }
        if e >= episodes as u64 - 2 {
            let base = world.clusters[PROBE_CLUSTER as usize];
            s.fly_to(GridCell {
                x: base.x + PROBE_OFFSET.0,
                y: base.y + PROBE_OFFSET.1,
            });
            s.measure(PROBE_CLUSTER);
        }
        s.lines.push(TraceLine::End {
            termination: "survey complete".into(),
            success: true,
            throughput_bps: throughput,
        });
        out.push(EpisodeTrace { lines: s.lines });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MissionConfig;
    use crate::grid::{build_world, cell, nfz_active};
    use crate::knowledge::promote;
    use std::collections::{BTreeMap, BTreeSet};

    fn world() -> World {
        build_world(&MissionConfig::default()).unwrap()
    }

    #[test]
    fn corpus_is_deterministic_and_complete() {
        let w = world();
        let a = generate_corpus(&w, 20);
        let b = generate_corpus(&w, 20);
        assert_eq!(a.len(), 20);
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.success()));
    }

    #[test]
    fn dwells_jointly_observe_every_activation_phase() {
        let w = world();
        let mut seen: BTreeMap<u32, BTreeSet<bool>> = BTreeMap::new();
        for t in generate_corpus(&w, 20) {
            for (abs, active) in t.nfz_obs() {
                let phase = abs % w.nfz.period_steps;
                let truth = nfz_active(&w.nfz, abs, 0);
                assert_eq!(
                    active, truth,
                    "label must match the roster at phase {phase}"
                );
                seen.entry(phase).or_default().insert(active);
            }
        }
        assert_eq!(seen.len() as u32, w.nfz.period_steps, "all phases covered");
    }

    #[test]
    fn measurements_are_exactly_the_expected_rates() {
        let w = world();
        for t in generate_corpus(&w, 20) {
            for (cluster, wp, rate, served) in t.serves() {
                let g = geometry(&w, wp, w.clusters[cluster as usize]);
                let oracle = expected_rate_bps(&w.access, &g);
                assert_eq!(rate, oracle);
                assert_eq!(served, oracle > w.access_threshold_bps);
            }
        }
    }

    #[test]
    fn probe_measurement_is_infeasible_by_margin() {
        let w = world();
        let traces = generate_corpus(&w, 20);
        let probes: Vec<_> = traces
            .iter()
            .flat_map(|t| t.serves())
            .filter(|&(c, wp, _, _)| {
                c == PROBE_CLUSTER
                    && wp
                        == cell(
                            w.clusters[PROBE_CLUSTER as usize].x + PROBE_OFFSET.0,
                            w.clusters[PROBE_CLUSTER as usize].y + PROBE_OFFSET.1,
                        )
            })
            .collect();
        assert_eq!(probes.len(), 2);
        for (_, _, rate, served) in probes {
            assert!((rate - 7219463.654007).abs() / rate < 1e-9);
            assert!(!served);
        }
    }

    #[test]
    fn flights_stay_legal_throughout() {
        let w = world();
        for t in generate_corpus(&w, 20) {
            let offset = t.lines.iter().find_map(|l| match l {
                TraceLine::Meta { start_offset, .. } => Some(*start_offset),
                _ => None,
            });
            for l in &t.lines {
                if let TraceLine::Tick { clock, cell: c, .. } = l {
                    assert!(w.passable(*c), "obstacle hit at {c}");
                    if *c == w.nfz.cell {
                        assert!(
                            !nfz_active(&w.nfz, *clock, offset.unwrap()),
                            "entered the restricted cell while active"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn promotion_over_the_corpus_recovers_the_roster_and_rates() {
        let w = world();
        let cfg = crate::config::PromotionConfig::default();
        let pack = promote(&generate_corpus(&w, 20), &w, &cfg).unwrap();
        assert_eq!(pack.nfz, w.nfz);
        // 3 hover offsets per cluster plus the far probe
        assert_eq!(pack.lookup.len(), 13);
        for row in &pack.lookup {
            let base = w.clusters[row.cluster as usize];
            let wp = cell(base.x + row.offset.0, base.y + row.offset.1);
            let oracle = expected_rate_bps(&w.access, &geometry(&w, wp, base));
            assert_eq!(row.feasible, oracle > w.access_threshold_bps);
        }
        assert_eq!(pack.plans.len(), cfg.top_plans as usize);
        for plan in &pack.plans {
            assert_eq!(plan.legs.len(), 4);
            for leg in &plan.legs {
                assert_eq!(
                    leg.waypoint, w.clusters[leg.cluster as usize],
                    "reference plans serve overhead"
                );
            }
        }
        // home sits on a strong uplink; its map digit saturates
        let home = w.home;
        assert_eq!(pack.backhaul_map[home.y as usize][home.x as usize], 9);
    }
}
