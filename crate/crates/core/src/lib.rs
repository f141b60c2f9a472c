//! Deterministic simulator of an aerial-base-station mission with a
//! knowledge lifecycle: episode traces are promoted at Home into a
//! serialized pack, synced over an intermittent backhaul, and activated
//! during onboard macro reasoning. Seeded end to end — same seed, same
//! bytes out.

pub mod check;
pub mod cloud;
pub mod comms;
pub mod config;
pub mod corpus;
pub mod grid;
pub mod harness;
pub mod knowledge;
pub mod llm;
pub mod pack;
pub mod path;
pub mod radio;
pub mod reasoner;
pub mod report;
pub mod rng;

pub use check::{run_acceptance, CriterionOutcome};
pub use cloud::{
    home_plan, render_plan, render_summary, CloudLeg, MissionPlan, PlannerError, UplinkReport,
};
pub use comms::{
    amortization_compare, replan_exchange, try_sync, AmortizationReport, CommsEvent,
    CommsEventKind, CommsLedger, Exchange, SyncOutcome, SyncResult,
};
pub use config::{ConfigError, MissionConfig, PromotionConfig, SyncConfig};
pub use corpus::generate_corpus;
pub use grid::{
    advance, build_world, cell, nfz_active, sample_disruptions, AdvanceResult, Disruption,
    DisruptionSet, EpisodeState, GridCell, NfzSchedule, Reveal, StepOutcome, TickAction, Violation,
    World, WorldError,
};
pub use harness::{
    parse_method, EpisodeResult, Evaluation, ForceBackhaul, Harness, HarnessError, Method, Metrics,
    RunOptions, SweepRow,
};
pub use knowledge::{
    activate, count_tokens, induce_nfz_schedule, matching_suffix, promote, ActiveKnowledge,
    Annotation, EpisodeTrace, InductionError, KnowledgePack, LookupRow, MissionBriefing, PlanLeg,
    PromoteError, ReferencePlan, Situation, TraceLine, Workflow, WorkflowCheck,
};
pub use llm::{build_prompt, parse_llm_response, LlmClient, LlmError, LlmParseError};
pub use pack::{assemble_pack, parse_pack, PackSlice, ParseError, SerializedPack, PACK_MAGIC};
pub use path::{plan_path, NoPathError};
pub use radio::{
    expected_rate_bps, geometry, geometry_from_horizontal, link_feasible, los_probability,
    sample_rate_bps, snr_los_db, Geometry, LinkConfig,
};
pub use reasoner::{
    greedy_step_decide, procedural_decide, search_decide, CostModel, MacroDecision,
    NoFeasibleDecision, Observation, PublicWorldView, ReasoningStep, ReasoningTrace, SearchMemory,
    StepKind,
};
pub use report::{render_all, write_report, MethodSummary, ReportData};
pub use rng::{episode_seed, substream, Stream};
