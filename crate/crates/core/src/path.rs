//! Grid routing. Plain breadth-first search when the activation schedule
//! is unknown; time-expanded search (waiting allowed) when it is known,
//! so the restricted cell is never entered while active.

use crate::grid::{cell, nfz_active, GridCell, World};
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("no route from {from} to {to}")]
pub struct NoPathError {
    pub from: GridCell,
    pub to: GridCell,
}

/// Neighbors in a fixed (y, x) order so ties resolve identically everywhere.
fn neighbors(world: &World, c: GridCell) -> Vec<GridCell> {
    let mut out: Vec<GridCell> = [(0, -1), (-1, 0), (1, 0), (0, 1)]
        .iter()
        .map(|&(dx, dy)| cell(c.x + dx, c.y + dy))
        .filter(|&n| world.passable(n))
        .collect();
    out.sort_by_key(|n| (n.y, n.x));
    out
}

/// Shortest route as the visited cell sequence, departure cell included.
///
/// `know_nfz = false` routes around obstacles only — the agent cannot
/// avoid what it has not learned. With `know_nfz = true` the search runs
/// over (cell, tick) states, may insert waits, and never arrives in the
/// restricted cell during an active phase.
pub fn plan_path(
    world: &World,
    from: GridCell,
    to: GridCell,
    depart_clock: u32,
    start_offset: u32,
    know_nfz: bool,
) -> Result<Vec<GridCell>, NoPathError> {
    let err = || NoPathError { from, to };
    if !world.passable(from) || !world.passable(to) {
        return Err(err());
    }
    if from == to {
        return Ok(vec![from]);
    }
    if !know_nfz {
        let mut parent: BTreeMap<GridCell, GridCell> = BTreeMap::new();
        let mut q = VecDeque::from([from]);
        parent.insert(from, from);
        while let Some(cur) = q.pop_front() {
            if cur == to {
                return Ok(unwind(&parent, from, to));
            }
            for n in neighbors(world, cur) {
                parent.entry(n).or_insert_with(|| {
                    q.push_back(n);
                    cur
                });
            }
        }
        return Err(err());
    }

    let horizon = 2 * (world.width + world.height) as u32 + world.nfz.period_steps;
    let blocked = |c: GridCell, arrive: u32| {
        c == world.nfz.cell && nfz_active(&world.nfz, arrive, start_offset)
    };
    let mut parent: BTreeMap<(GridCell, u32), (GridCell, u32)> = BTreeMap::new();
    let start = (from, 0u32);
    parent.insert(start, start);
    let mut q = VecDeque::from([start]);
    while let Some((cur, t)) = q.pop_front() {
        if cur == to {
            let mut cells = Vec::new();
            let mut node = (cur, t);
            loop {
                cells.push(node.0);
                let p = parent[&node];
                if p == node {
                    break;
                }
                node = p;
            }
            cells.reverse();
            return Ok(cells);
        }
        if t >= horizon {
            continue;
        }
        let arrive = depart_clock + t + 1;
        let mut options = neighbors(world, cur);
        options.push(cur); // wait in place, considered last
        for n in options {
            if blocked(n, arrive) {
                continue;
            }
            parent.entry((n, t + 1)).or_insert_with(|| {
                q.push_back((n, t + 1));
                (cur, t)
            });
        }
    }
    Err(err())
}

fn unwind(parent: &BTreeMap<GridCell, GridCell>, from: GridCell, to: GridCell) -> Vec<GridCell> {
    let mut cells = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[&cur];
        cells.push(cur);
    }
    cells.reverse();
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MissionConfig;
    use crate::grid::{build_world, NfzSchedule};
    use std::collections::BinaryHeap;

    fn world() -> World {
        build_world(&MissionConfig::default()).unwrap()
    }

    fn moves(p: &[GridCell]) -> usize {
        p.len() - 1
    }

    #[test]
    fn straight_two_cell_hop() {
        let w = world();
        let p = plan_path(&w, cell(4, 4), cell(4, 6), 0, 0, false).unwrap();
        assert_eq!(moves(&p), 2);
        assert_eq!(p, vec![cell(4, 4), cell(4, 5), cell(4, 6)]);
    }

    #[test]
    fn trivial_self_route() {
        let w = world();
        let p = plan_path(&w, cell(4, 4), cell(4, 4), 3, 1, true).unwrap();
        assert_eq!(p, vec![cell(4, 4)]);
    }

    #[test]
    fn obstacles_force_detour() {
        let w = world();
        // (2,2) is an obstacle; the route around it costs 2 extra moves
        let p = plan_path(&w, cell(1, 2), cell(3, 2), 0, 0, false).unwrap();
        assert_eq!(moves(&p), 4);
        assert!(!p.contains(&cell(2, 2)));
    }

    #[test]
    fn active_window_cell_is_avoided() {
        let mut cfg = MissionConfig::default();
        cfg.nfz = NfzSchedule {
            cell: cell(3, 3),
            period_steps: 40,
            active_start: 0,
            active_len: 40,
        };
        let w = build_world(&cfg).unwrap();
        let p = plan_path(&w, cell(2, 3), cell(4, 3), 0, 0, true).unwrap();
        assert!(moves(&p) > cell(2, 3).manhattan(cell(4, 3)) as usize);
        assert!(!p.contains(&cell(3, 3)));
        // ignoring the schedule cuts straight through
        let blind = plan_path(&w, cell(2, 3), cell(4, 3), 0, 0, false).unwrap();
        assert_eq!(moves(&blind), 2);
        assert!(blind.contains(&cell(3, 3)));
    }

    #[test]
    fn waiting_beats_detour_when_window_closes_soon() {
        let mut cfg = MissionConfig::default();
        // corridor world: the only route passes the restricted cell
        cfg.grid.width = 5;
        cfg.grid.height = 2;
        cfg.home = cell(0, 0);
        cfg.clusters = vec![cell(4, 0)];
        cfg.obstacles = (0..5).map(|x| cell(x, 1)).collect();
        cfg.nfz = NfzSchedule {
            cell: cell(2, 0),
            period_steps: 10,
            active_start: 0,
            active_len: 3,
        };
        let w = build_world(&cfg).unwrap();
        let p = plan_path(&w, cell(0, 0), cell(4, 0), 0, 0, true).unwrap();
        // arrival at (2,0) must fall at phase >= 3; one wait suffices
        assert_eq!(moves(&p), 5);
        let arrive = p.iter().position(|&c| c == cell(2, 0)).unwrap();
        assert!(arrive as u32 >= 3);
    }

    #[test]
    fn walled_off_target_errors() {
        let mut cfg = MissionConfig::default();
        cfg.grid.width = 3;
        cfg.grid.height = 3;
        cfg.home = cell(0, 0);
        cfg.clusters = vec![cell(2, 2)];
        cfg.obstacles = vec![cell(1, 2), cell(2, 1)];
        cfg.nfz.cell = cell(0, 2);
        let w = build_world(&cfg).unwrap();
        let e = plan_path(&w, cell(0, 0), cell(2, 2), 0, 0, false).unwrap_err();
        assert_eq!(
            e,
            NoPathError {
                from: cell(0, 0),
                to: cell(2, 2)
            }
        );
        assert!(plan_path(&w, cell(0, 0), cell(2, 2), 0, 0, true).is_err());
    }

    #[test]
    fn path_cells_are_adjacent_and_legal() {
        let w = world();
        for (from, to) in [
            (cell(4, 4), cell(1, 1)),
            (cell(4, 4), cell(6, 6)),
            (cell(1, 6), cell(6, 1)),
            (cell(0, 0), cell(7, 7)),
        ] {
            for know in [false, true] {
                let p = plan_path(&w, from, to, 0, 0, know).unwrap();
                assert_eq!(p.first(), Some(&from));
                assert_eq!(p.last(), Some(&to));
                for pair in p.windows(2) {
                    let d = pair[0].manhattan(pair[1]);
                    assert!(d == 1 || (d == 0 && know));
                    assert!(w.passable(pair[1]));
                }
            }
        }
    }

    /// Independent optimality oracle: uniform-cost search over (cell, tick)
    /// with a priority queue, shared with nothing from the implementation.
    fn dijkstra_ticks(world: &World, from: GridCell, to: GridCell, offset: u32) -> Option<u32> {
        let mut heap: BinaryHeap<std::cmp::Reverse<(u32, (i32, i32))>> = BinaryHeap::new();
        let mut seen = std::collections::BTreeSet::new();
        heap.push(std::cmp::Reverse((0, (from.x, from.y))));
        while let Some(std::cmp::Reverse((t, (x, y)))) = heap.pop() {
            let c = cell(x, y);
            if c == to {
                return Some(t);
            }
            if t > 200 || !seen.insert((t, (x, y))) {
                continue;
            }
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)] {
                let n = cell(x + dx, y + dy);
                if !world.passable(n) {
                    continue;
                }
                if n == world.nfz.cell && nfz_active(&world.nfz, t + 1, offset) {
                    continue;
                }
                heap.push(std::cmp::Reverse((t + 1, (n.x, n.y))));
            }
        }
        None
    }

    #[test]
    fn schedule_aware_routes_match_independent_search() {
        let w = world();
        for offset in [0u32, 7, 19, 33] {
            for (from, to) in [
                (cell(4, 4), cell(1, 1)),
                (cell(4, 4), cell(2, 3)),
                (cell(2, 3), cell(4, 2)),
                (cell(4, 4), cell(3, 4)),
            ] {
                let got = plan_path(&w, from, to, 0, offset, true).unwrap();
                let want = dijkstra_ticks(&w, from, to, offset).unwrap();
                assert_eq!(moves(&got) as u32, want, "{from}->{to} offset {offset}");
            }
        }
    }
}
