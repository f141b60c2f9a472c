//! Canonical pack serialization: a line-oriented sectioned text grammar,
//! sliced cumulatively by exposure level. The same renderer drives
//! assembly and the round-trip tests, so the format on the wire is the
//! format in this file. See docs/pack-format.md for the grammar.

use crate::grid::{cell, GridCell, NfzSchedule};
use crate::knowledge::{
    count_tokens, Annotation, KnowledgePack, LookupRow, PlanLeg, ReferencePlan, Workflow,
    WorkflowCheck,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

pub const PACK_MAGIC: &str = "SKYPACK v1";

/// What actually travels over the backhaul.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedPack {
    pub level: u8,
    pub body: String,
    pub token_count: u64,
}

/// Parsed view of one exposure level: sections below the level are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PackSlice {
    pub level: u8,
    pub nfz: NfzSchedule,
    pub obstacles: BTreeSet<GridCell>,
    pub backhaul_map: Option<Vec<Vec<u8>>>,
    pub workflow: Option<Workflow>,
    pub lookup: Vec<LookupRow>,
    pub plans: Vec<ReferencePlan>,
    pub annotations: Vec<Annotation>,
}

fn render_cell(c: GridCell) -> String {
    format!("({},{})", c.x, c.y)
}

/// Cumulative body for exposure level `k`:
/// 1 adds [structured], 2 [backhaul], 3 [workflow] and [lookup],
/// 4 [retrieval], 5 [annotations].
pub fn assemble_pack(pack: &KnowledgePack, k: u8) -> SerializedPack {
    assert!((1..=5).contains(&k), "exposure level out of range");
    let mut b = String::new();
    let _ = writeln!(b, "{PACK_MAGIC} K={k}");

    b.push_str("[structured]\n");
    let n = &pack.nfz;
    let _ = writeln!(
        b,
        "nfz {} period={} active={}..{}",
        render_cell(n.cell),
        n.period_steps,
        n.active_start,
        n.active_start + n.active_len
    );
    let obs: Vec<String> = pack.obstacles.iter().map(|&c| render_cell(c)).collect();
    let _ = writeln!(b, "obstacles {}", obs.join(" "));

    if k >= 2 {
        b.push_str("[backhaul]\n");
        let h = pack.backhaul_map.len();
        let w = pack.backhaul_map.first().map_or(0, |r| r.len());
        let _ = writeln!(b, "map {w}x{h}");
        for row in &pack.backhaul_map {
            for d in row {
                let _ = write!(b, "{d}");
            }
            b.push('\n');
        }
    }

    if k >= 3 {
        b.push_str("[workflow]\n");
        for c in &pack.workflow.checks {
            match c {
                WorkflowCheck::Access => {
                    let _ = writeln!(
                        b,
                        "check access rate>{}",
                        pack.workflow.access_threshold_bps
                    );
                }
                WorkflowCheck::Backhaul => {
                    let _ = writeln!(
                        b,
                        "check backhaul rate>{}",
                        pack.workflow.backhaul_threshold_bps
                    );
                }
                WorkflowCheck::Legality => b.push_str("check legality\n"),
            }
        }
        b.push_str("commit-or-reject\n");

        b.push_str("[lookup]\n");
        for r in &pack.lookup {
            let _ = writeln!(
                b,
                "c{} ({},{}) {} {}",
                r.cluster,
                r.offset.0,
                r.offset.1,
                r.rate_bps as u64,
                u8::from(r.feasible)
            );
        }
    }

    if k >= 4 {
        b.push_str("[retrieval]\n");
        for p in &pack.plans {
            let legs: Vec<String> = p
                .legs
                .iter()
                .map(|l| format!("c{}@{}", l.cluster, render_cell(l.waypoint)))
                .collect();
            let _ = writeln!(
                b,
                "plan throughput={} legs {}",
                p.throughput_bps as u64,
                legs.join(" ")
            );
        }
    }

    if k >= 5 {
        b.push_str("[annotations]\n");
        for a in &pack.annotations {
            debug_assert!(!a.subject.contains(' ') && !a.text.contains(['"', '\n']));
            let group = a
                .conflict_group
                .map_or("-".to_string(), |g| format!("g{g}"));
            let _ = writeln!(b, "note {} {} \"{}\"", a.subject, group, a.text);
        }
    }

    let token_count = count_tokens(&b);
    SerializedPack {
        level: k,
        body: b,
        token_count,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed pack body: {0}")]
pub struct ParseError(pub String);

fn bad(msg: impl Into<String>) -> ParseError {
    ParseError(msg.into())
}

fn parse_cell(tok: &str) -> Result<GridCell, ParseError> {
    let inner = tok
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| bad(format!("expected (x,y), got {tok}")))?;
    let (x, y) = inner
        .split_once(',')
        .ok_or_else(|| bad(format!("expected (x,y), got {tok}")))?;
    Ok(cell(
        x.parse()
            .map_err(|_| bad(format!("bad coordinate in {tok}")))?,
        y.parse()
            .map_err(|_| bad(format!("bad coordinate in {tok}")))?,
    ))
}

fn parse_num<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| bad(format!("bad {what}: {tok}")))
}

pub fn parse_pack(sp: &SerializedPack) -> Result<PackSlice, ParseError> {
    let mut lines = sp.body.lines().peekable();
    let header = lines.next().ok_or_else(|| bad("empty body"))?;
    let level: u8 = header
        .strip_prefix(PACK_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("K="))
        .ok_or_else(|| bad(format!("bad header: {header}")))
        .and_then(|k| parse_num(k, "level"))?;
    if !(1..=5).contains(&level) || level != sp.level {
        return Err(bad(format!(
            "level mismatch: header {level}, wrapper {}",
            sp.level
        )));
    }

    let mut nfz: Option<NfzSchedule> = None;
    let mut obstacles = BTreeSet::new();
    let mut backhaul_map: Option<Vec<Vec<u8>>> = None;
    let mut workflow: Option<Workflow> = None;
    let mut lookup = Vec::new();
    let mut plans = Vec::new();
    let mut annotations = Vec::new();

    let mut section = String::new();
    while let Some(line) = lines.next() {
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            section = line.to_string();
            if section == "[backhaul]" {
                let dims = lines.next().ok_or_else(|| bad("truncated backhaul map"))?;
                let spec = dims
                    .strip_prefix("map ")
                    .ok_or_else(|| bad(format!("bad map line: {dims}")))?;
                let (w, h) = spec
                    .split_once('x')
                    .ok_or_else(|| bad(format!("bad map dims: {spec}")))?;
                let (w, h): (usize, usize) =
                    (parse_num(w, "map width")?, parse_num(h, "map height")?);
                let mut map = Vec::with_capacity(h);
                for _ in 0..h {
                    let row = lines.next().ok_or_else(|| bad("truncated backhaul map"))?;
                    if row.len() != w {
                        return Err(bad(format!("map row width {} != {w}", row.len())));
                    }
                    let digits: Option<Vec<u8>> = row
                        .chars()
                        .map(|c| c.to_digit(10).map(|d| d as u8))
                        .collect();
                    map.push(digits.ok_or_else(|| bad(format!("non-digit in map row: {row}")))?);
                }
                backhaul_map = Some(map);
            }
            if section == "[workflow]" {
                let mut checks = Vec::new();
                let mut access_thr = 0.0;
                let mut backhaul_thr = 0.0;
                loop {
                    let line = lines
                        .next()
                        .ok_or_else(|| bad("workflow missing commit line"))?;
                    if line == "commit-or-reject" {
                        break;
                    }
                    let rest = line
                        .strip_prefix("check ")
                        .ok_or_else(|| bad(format!("bad workflow line: {line}")))?;
                    if rest == "legality" {
                        checks.push(WorkflowCheck::Legality);
                    } else if let Some(t) = rest.strip_prefix("access rate>") {
                        access_thr = parse_num(t, "access threshold")?;
                        checks.push(WorkflowCheck::Access);
                    } else if let Some(t) = rest.strip_prefix("backhaul rate>") {
                        backhaul_thr = parse_num(t, "backhaul threshold")?;
                        checks.push(WorkflowCheck::Backhaul);
                    } else {
                        return Err(bad(format!("unknown check: {rest}")));
                    }
                }
                workflow = Some(Workflow {
                    access_threshold_bps: access_thr,
                    backhaul_threshold_bps: backhaul_thr,
                    checks,
                });
            }
            continue;
        }
        match section.as_str() {
            "[structured]" => {
                if let Some(rest) = line.strip_prefix("nfz ") {
                    let toks: Vec<&str> = rest.split(' ').collect();
                    if toks.len() != 3 {
                        return Err(bad(format!("bad nfz line: {line}")));
                    }
                    let c = parse_cell(toks[0])?;
                    let period = toks[1]
                        .strip_prefix("period=")
                        .ok_or_else(|| bad(format!("bad nfz period: {line}")))
                        .and_then(|p| parse_num(p, "period"))?;
                    let win = toks[2]
                        .strip_prefix("active=")
                        .ok_or_else(|| bad(format!("bad nfz window: {line}")))?;
                    let (s, e) = win
                        .split_once("..")
                        .ok_or_else(|| bad(format!("bad window: {win}")))?;
                    let (s, e): (u32, u32) =
                        (parse_num(s, "window start")?, parse_num(e, "window end")?);
                    if e <= s {
                        return Err(bad(format!("empty window: {win}")));
                    }
                    nfz = Some(NfzSchedule {
                        cell: c,
                        period_steps: period,
                        active_start: s,
                        active_len: e - s,
                    });
                } else if let Some(rest) = line.strip_prefix("obstacles") {
                    for tok in rest.split_whitespace() {
                        obstacles.insert(parse_cell(tok)?);
                    }
                } else {
                    return Err(bad(format!("unknown structured line: {line}")));
                }
            }
            "[lookup]" => {
                let toks: Vec<&str> = line.split(' ').collect();
                if toks.len() != 4 || !toks[0].starts_with('c') {
                    return Err(bad(format!("bad lookup row: {line}")));
                }
                let off = parse_cell(toks[1])?;
                lookup.push(LookupRow {
                    cluster: parse_num(&toks[0][1..], "cluster id")?,
                    offset: (off.x, off.y),
                    rate_bps: parse_num::<u64>(toks[2], "rate")? as f64,
                    feasible: match toks[3] {
                        "1" => true,
                        "0" => false,
                        other => return Err(bad(format!("bad feasible flag: {other}"))),
                    },
                });
            }
            "[retrieval]" => {
                let rest = line
                    .strip_prefix("plan throughput=")
                    .ok_or_else(|| bad(format!("bad plan line: {line}")))?;
                let (thr, legs_part) = rest
                    .split_once(" legs")
                    .ok_or_else(|| bad(format!("plan missing legs: {line}")))?;
                let mut legs = Vec::new();
                for tok in legs_part.split_whitespace() {
                    let (c, wp) = tok
                        .split_once('@')
                        .ok_or_else(|| bad(format!("bad leg: {tok}")))?;
                    if !c.starts_with('c') {
                        return Err(bad(format!("bad leg cluster: {tok}")));
                    }
                    legs.push(PlanLeg {
                        cluster: parse_num(&c[1..], "leg cluster")?,
                        waypoint: parse_cell(wp)?,
                    });
                }
                plans.push(ReferencePlan {
                    throughput_bps: parse_num::<u64>(thr, "throughput")? as f64,
                    legs,
                });
            }
            "[annotations]" => {
                let rest = line
                    .strip_prefix("note ")
                    .ok_or_else(|| bad(format!("bad note: {line}")))?;
                let (subject, rest) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad(format!("bad note: {line}")))?;
                let (group, rest) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad(format!("bad note: {line}")))?;
                let text = rest
                    .strip_prefix('"')
                    .and_then(|t| t.strip_suffix('"'))
                    .ok_or_else(|| bad(format!("unquoted note text: {line}")))?;
                let conflict_group = match group {
                    "-" => None,
                    g => Some(
                        g.strip_prefix('g')
                            .ok_or_else(|| bad(format!("bad group tag: {g}")))
                            .and_then(|n| parse_num(n, "group"))?,
                    ),
                };
                annotations.push(Annotation {
                    subject: subject.to_string(),
                    text: text.to_string(),
                    conflict_group,
                });
            }
            _ => return Err(bad(format!("line outside any section: {line}"))),
        }
    }

    let nfz = nfz.ok_or_else(|| bad("missing nfz rule"))?;
    if level >= 2 && backhaul_map.is_none() {
        return Err(bad("level promises a backhaul map but none present"));
    }
    if level >= 3 && workflow.is_none() {
        return Err(bad("level promises a workflow but none present"));
    }
    Ok(PackSlice {
        level,
        nfz,
        obstacles,
        backhaul_map,
        workflow,
        lookup,
        plans,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::count_tokens;

    fn sample_pack() -> KnowledgePack {
        KnowledgePack {
            nfz: NfzSchedule {
                cell: cell(3, 3),
                period_steps: 40,
                active_start: 0,
                active_len: 12,
            },
            obstacles: [cell(2, 2), cell(5, 2), cell(2, 5)].into_iter().collect(),
            backhaul_map: vec![vec![5; 8]; 8],
            workflow: Workflow::canonical(8e6, 5e6),
            lookup: vec![
                LookupRow {
                    cluster: 0,
                    offset: (0, 0),
                    rate_bps: 184462232.0,
                    feasible: true,
                },
                LookupRow {
                    cluster: 0,
                    offset: (-1, 0),
                    rate_bps: 50670296.0,
                    feasible: true,
                },
                LookupRow {
                    cluster: 3,
                    offset: (0, -1),
                    rate_bps: 7801209.0,
                    feasible: false,
                },
            ],
            plans: vec![ReferencePlan {
                throughput_bps: 630000000.0,
                legs: vec![
                    PlanLeg {
                        cluster: 0,
                        waypoint: cell(1, 1),
                    },
                    PlanLeg {
                        cluster: 1,
                        waypoint: cell(6, 1),
                    },
                ],
            }],
            annotations: vec![
                Annotation {
                    subject: "global".into(),
                    text: "favor rate".into(),
                    conflict_group: Some(0),
                },
                Annotation {
                    subject: "global".into(),
                    text: "favor distance".into(),
                    conflict_group: Some(0),
                },
                Annotation {
                    subject: "note-0".into(),
                    text: "plain remark".into(),
                    conflict_group: None,
                },
            ],
        }
    }

    #[test]
    fn level_one_is_constraints_only() {
        let sp = assemble_pack(&sample_pack(), 1);
        assert!(sp.body.contains("[structured]"));
        assert!(sp.body.contains("nfz (3,3) period=40 active=0..12"));
        assert!(sp.body.contains("obstacles (2,2) (2,5) (5,2)")); // ascending (x, y)
        for section in [
            "[backhaul]",
            "[workflow]",
            "[lookup]",
            "[retrieval]",
            "[annotations]",
        ] {
            assert!(
                !sp.body.contains(section),
                "{section} must not appear at level 1"
            );
        }
        assert_eq!(sp.token_count, count_tokens(&sp.body));
    }

    #[test]
    fn sections_arrive_in_level_order() {
        let pack = sample_pack();
        let present: Vec<Vec<&str>> = vec![
            vec!["[structured]"],
            vec!["[structured]", "[backhaul]"],
            vec!["[structured]", "[backhaul]", "[workflow]", "[lookup]"],
            vec![
                "[structured]",
                "[backhaul]",
                "[workflow]",
                "[lookup]",
                "[retrieval]",
            ],
            vec![
                "[structured]",
                "[backhaul]",
                "[workflow]",
                "[lookup]",
                "[retrieval]",
                "[annotations]",
            ],
        ];
        for k in 1..=5u8 {
            let sp = assemble_pack(&pack, k);
            for s in &present[(k - 1) as usize] {
                assert!(sp.body.contains(s), "level {k} missing {s}");
            }
        }
    }

    #[test]
    fn payload_strictly_grows_with_level() {
        let pack = sample_pack();
        let counts: Vec<u64> = (1..=5)
            .map(|k| assemble_pack(&pack, k).token_count)
            .collect();
        for w in counts.windows(2) {
            assert!(
                w[0] < w[1],
                "token counts not strictly increasing: {counts:?}"
            );
        }
    }

    #[test]
    fn lower_levels_are_content_subsets() {
        let pack = sample_pack();
        for k in 1..5u8 {
            let small = assemble_pack(&pack, k);
            let big = assemble_pack(&pack, k + 1);
            let big_lines: BTreeSet<&str> = big.body.lines().skip(1).collect();
            for line in small.body.lines().skip(1) {
                assert!(
                    big_lines.contains(line),
                    "level {} line lost at {}: {line}",
                    k,
                    k + 1
                );
            }
        }
    }

    #[test]
    fn every_level_round_trips() {
        let pack = sample_pack();
        for k in 1..=5u8 {
            let sp = assemble_pack(&pack, k);
            let slice = parse_pack(&sp).unwrap();
            assert_eq!(slice.level, k);
            assert_eq!(slice.nfz, pack.nfz);
            assert_eq!(slice.obstacles, pack.obstacles);
            assert_eq!(slice.backhaul_map.is_some(), k >= 2);
            if k >= 2 {
                assert_eq!(slice.backhaul_map.as_ref().unwrap(), &pack.backhaul_map);
            }
            assert_eq!(slice.workflow.is_some(), k >= 3);
            if k >= 3 {
                assert_eq!(slice.workflow.as_ref().unwrap(), &pack.workflow);
                assert_eq!(slice.lookup, pack.lookup);
            } else {
                assert!(slice.lookup.is_empty());
            }
            if k >= 4 {
                assert_eq!(slice.plans, pack.plans);
            } else {
                assert!(slice.plans.is_empty());
            }
            if k == 5 {
                assert_eq!(slice.annotations, pack.annotations);
            } else {
                assert!(slice.annotations.is_empty());
            }
        }
    }

    #[test]
    fn reassembly_is_byte_identical() {
        let pack = sample_pack();
        for k in [1u8, 3, 5] {
            let sp = assemble_pack(&pack, k);
            let slice = parse_pack(&sp).unwrap();
            let rebuilt = KnowledgePack {
                nfz: slice.nfz,
                obstacles: slice.obstacles,
                backhaul_map: slice
                    .backhaul_map
                    .unwrap_or_else(|| pack.backhaul_map.clone()),
                workflow: slice.workflow.unwrap_or_else(|| pack.workflow.clone()),
                lookup: if slice.lookup.is_empty() {
                    pack.lookup.clone()
                } else {
                    slice.lookup
                },
                plans: if slice.plans.is_empty() {
                    pack.plans.clone()
                } else {
                    slice.plans
                },
                annotations: if slice.annotations.is_empty() {
                    pack.annotations.clone()
                } else {
                    slice.annotations
                },
            };
            assert_eq!(assemble_pack(&rebuilt, k).body, sp.body);
        }
    }

    #[test]
    fn malformed_bodies_are_rejected() {
        let pack = sample_pack();
        let good = assemble_pack(&pack, 3);
        let cases: Vec<(&str, String)> = vec![
            (
                "bad header",
                good.body.replacen(PACK_MAGIC, "SKYJUNK v9", 1),
            ),
            ("level mismatch", good.body.replacen("K=3", "K=4", 1)),
            (
                "mangled nfz",
                good.body.replacen("period=", "perimeter=", 1),
            ),
            ("stray line", format!("{}noise\n", good.body)),
            ("bad lookup flag", good.body.replacen(" 1\n", " 7\n", 1)),
        ];
        for (what, body) in cases {
            let sp = SerializedPack {
                level: 3,
                body,
                token_count: 0,
            };
            assert!(parse_pack(&sp).is_err(), "{what} should fail");
        }
    }

    #[test]
    fn no_raw_episode_data_leaks_into_the_body() {
        let sp = assemble_pack(&sample_pack(), 5);
        for needle in ["episode", "seed", "tick", "clock"] {
            assert!(!sp.body.contains(needle), "pack body leaks {needle}");
        }
    }
}
