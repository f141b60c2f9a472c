//! The whole pipeline in one breath: survey flights are logged, the logs
//! are digested into a pack, the pack crosses the backhaul, and the slice
//! that activates onboard actually changes how the next decision is made.

use skypack_core::{
    activate, assemble_pack, build_world, cell, generate_corpus, procedural_decide, promote,
    search_decide, substream, try_sync, CostModel, EpisodeTrace, ForceBackhaul, Harness, Method,
    MissionBriefing, MissionConfig, Observation, PublicWorldView, RunOptions, SearchMemory,
    Situation, StepOutcome, SyncOutcome,
};
use std::collections::BTreeSet;
use std::fs;

#[test]
fn corpus_to_onboard_decision() {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();

    // fly the survey, digest it
    let corpus = generate_corpus(&world, cfg.promotion.corpus_episodes as u32);
    assert_eq!(corpus.len(), cfg.promotion.corpus_episodes as usize);
    assert!(
        corpus.iter().all(|t| t.success()),
        "survey flights are noise-free by design"
    );
    let pack = promote(&corpus, &world, &cfg.promotion).unwrap();
    assert_eq!(
        (
            pack.nfz.period_steps,
            pack.nfz.active_start,
            pack.nfz.active_len
        ),
        (
            world.nfz.period_steps,
            world.nfz.active_start,
            world.nfz.active_len
        ),
        "the induced schedule must match the one that generated the sightings"
    );

    // ship it
    let wire = assemble_pack(&pack, 3);
    let sync = try_sync(&wire, 5.0e7, 1.0, world.backhaul_threshold_bps, 32);
    assert_eq!(sync.outcome, SyncOutcome::Delivered);
    assert_eq!(sync.tokens_charged, wire.token_count);

    // activate mid-mission: clusters 0 and 2 still unserved
    let briefing = MissionBriefing::of(&world);
    let situation = Situation {
        uav: cell(6, 1),
        remaining: vec![(0, world.clusters[0]), (2, world.clusters[2])],
        clock: 25,
    };
    let active = activate(&wire, &briefing, &situation).unwrap();
    assert!(
        active.workflow.is_some(),
        "level 3 carries the serve-and-verify procedure"
    );
    assert!(active
        .lookup
        .iter()
        .all(|r| r.cluster == 0 || r.cluster == 2));
    assert!(!active.lookup.is_empty());
    assert!(
        active.plan_suffix.is_none(),
        "plan tails only ship at level 4 and up"
    );

    // the slice drives the next decision
    let obs = Observation {
        uav: situation.uav,
        clock: situation.clock,
        budget: 200,
        remaining: situation.remaining.clone(),
        last_outcome: StepOutcome::Served,
        backhaul_feasible: false,
        has_pack: true,
    };
    let costs = CostModel::default();
    // two serve attempts already went wrong near cluster 0
    let mut failed = BTreeSet::new();
    failed.insert((0u32, cell(2, 1)));
    failed.insert((0u32, cell(1, 1)));
    let (decision, trace) = procedural_decide(&obs, &active, &costs, &failed).unwrap();
    let target = decision.next_cluster.expect("two clusters still unserved");
    assert!(target == 0 || target == 2);
    let believed = obs.remaining.iter().find(|(c, _)| *c == target).unwrap().1;
    assert!(
        decision.waypoint.chebyshev(believed) <= 1,
        "hover cell comes from a lookup offset"
    );
    assert!(
        !failed.contains(&(target, decision.waypoint)),
        "failed cells stay rejected"
    );

    // generate-and-test wades back through the failed cells in proximity
    // order; the lookup rows never mention (2,1) at all, so the activated
    // side pays at most one rejected row
    let view = PublicWorldView::of(&world);
    let mut mem = SearchMemory::default();
    mem.note_failure(0, cell(2, 1));
    mem.note_failure(0, cell(1, 1));
    let mut rng = substream(99, "policy");
    let (_, search_trace) = search_decide(&obs, &view, &costs, 1, &mem, &mut rng, false);
    assert!(
        trace.token_total() < search_trace.token_total(),
        "activated knowledge should beat generate-and-test under a failure history: {} vs {}",
        trace.token_total(),
        search_trace.token_total()
    );
}

#[test]
fn deeper_slices_add_plan_tails() {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();
    let corpus = generate_corpus(&world, cfg.promotion.corpus_episodes as u32);
    let pack = promote(&corpus, &world, &cfg.promotion).unwrap();
    let briefing = MissionBriefing::of(&world);

    // a fresh departure: everything unserved, standing at home
    let situation = Situation {
        uav: world.home,
        remaining: (0..world.clusters.len() as u32)
            .map(|c| (c, world.clusters[c as usize]))
            .collect(),
        clock: 0,
    };
    let active = activate(&assemble_pack(&pack, 4), &briefing, &situation).unwrap();
    let suffix = active
        .plan_suffix
        .expect("a full reference plan covers a full remaining set");
    assert_eq!(suffix.len(), world.clusters.len());
    let served: BTreeSet<u32> = suffix.iter().map(|l| l.cluster).collect();
    assert_eq!(
        served.len(),
        world.clusters.len(),
        "each cluster exactly once"
    );

    // annotations and their conflicts only surface at level 5
    assert!(active.conflicts.is_empty());
    let deeper = activate(&assemble_pack(&pack, 5), &briefing, &situation).unwrap();
    assert!(
        !deeper.conflicts.is_empty(),
        "the curated conflict pair ships at level 5"
    );
}

#[test]
fn promotion_ignores_corpus_order() {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();
    let corpus = generate_corpus(&world, cfg.promotion.corpus_episodes as u32);
    let mut shuffled = corpus.clone();
    shuffled.reverse();
    shuffled.rotate_left(7);
    let a = promote(&corpus, &world, &cfg.promotion).unwrap();
    let b = promote(&shuffled, &world, &cfg.promotion).unwrap();
    assert_eq!(
        a, b,
        "promotion aggregates; it must not remember the filing order"
    );
}

#[test]
fn promotion_survives_the_disk() {
    let cfg = MissionConfig::default();
    let world = build_world(&cfg).unwrap();
    let corpus = generate_corpus(&world, cfg.promotion.corpus_episodes as u32);

    let dir = tempfile::tempdir().unwrap();
    for (i, t) in corpus.iter().enumerate() {
        fs::write(
            dir.path().join(format!("episode-{i:03}.jsonl")),
            t.to_jsonl(),
        )
        .unwrap();
    }
    let mut reread: Vec<EpisodeTrace> = Vec::new();
    let mut names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for p in names {
        reread.push(EpisodeTrace::from_jsonl(&fs::read_to_string(p).unwrap()).unwrap());
    }

    let direct = promote(&corpus, &world, &cfg.promotion).unwrap();
    let via_disk = promote(&reread, &world, &cfg.promotion).unwrap();
    assert_eq!(
        direct, via_disk,
        "serializing the corpus must not perturb the digest"
    );
}

#[test]
fn in_flight_fetch_bills_exactly_one_pack() {
    let h = Harness::new(MissionConfig::default()).unwrap();
    let opts = RunOptions {
        force_backhaul: ForceBackhaul::Available,
        ..RunOptions::default()
    };
    let r = h.run_episode(Method::WithK(3), 11, &opts);
    assert!(r.success);
    assert_eq!(
        r.ledger.sync_tokens,
        h.pack(3).token_count,
        "one delivery, billed at the pack's exact token count"
    );
    assert_eq!(
        r.ledger.uplink_tokens + r.ledger.downlink_tokens,
        0,
        "no cloud exchanges"
    );
}
