//! One binary over the simulator: fly episodes, evaluate suites, sweep
//! exposure depth, digest trace logs into packs, dump rate maps and
//! re-render saved results.
//!
//! Exit codes: 0 on success, 2 on configuration or usage errors, 3 when
//! `eval --check` finds a failing property, 1 on data/IO problems.

use clap::{Parser, Subcommand};
use skypack_core::llm::{ENV_KEY, ENV_MODEL, ENV_URL};
use skypack_core::{
    assemble_pack, episode_seed, expected_rate_bps, geometry, parse_method, promote,
    run_acceptance, write_report, EpisodeResult, EpisodeTrace, Evaluation, Harness, LlmClient,
    MethodSummary, Metrics, MissionConfig, ReportData, RunOptions, SweepRow,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "skypack", version, about = "Aerial-base-station mission simulator")]
struct Cli {
    /// Mission configuration JSON; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Suite seed base; episode i flies at a seed derived from (base, i).
    #[arg(long, global = true, default_value_t = 0)]
    seed_base: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one episode: the event log goes to stdout as JSON lines, a
    /// summary to stderr.
    Run {
        /// with_k, no_k, home_replan or greedy_step (with_k(3) also works).
        #[arg(long, default_value = "with_k")]
        method: String,

        /// Exposure depth for with_k.
        #[arg(long, default_value_t = 3, value_name = "1..5")]
        k: u8,

        /// Episode index within the suite; picks the derived seed.
        #[arg(long, default_value_t = 0)]
        episode: u64,

        /// Delegate onboard macro decisions to the external adapter
        /// configured via SKYPACK_LLM_URL / _MODEL / _KEY.
        #[arg(long)]
        llm: bool,

        /// Also write trace-<seed>.jsonl and episode-<seed>.json here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },

    /// Run one method over a seeded suite and print aggregate metrics.
    Eval {
        #[arg(long, default_value = "with_k")]
        method: String,

        #[arg(long, default_value_t = 3, value_name = "1..5")]
        k: u8,

        #[arg(long, default_value_t = 50)]
        episodes: u32,

        /// Run the eight acceptance properties instead of a suite;
        /// prints one line per property and exits 3 if any fails.
        #[arg(long)]
        check: bool,

        /// Delegate onboard macro decisions to the external adapter.
        #[arg(long)]
        llm: bool,

        /// Write results.json, episodes.csv, metrics.csv and charts here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },

    /// Fly the same seeds at every exposure depth 1..=5.
    SweepK {
        #[arg(long, default_value_t = 30)]
        episodes: u32,

        /// Write results.json, sweep.csv and charts here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },

    /// Digest a directory of episode logs (*.jsonl) into a serialized pack.
    Promote {
        /// Directory holding the episode logs.
        #[arg(value_name = "TRACE_DIR")]
        traces: PathBuf,

        /// Exposure depth of the emitted pack.
        #[arg(long, default_value_t = 5, value_name = "1..5")]
        k: u8,

        /// First log this many survey flights into TRACE_DIR, then digest
        /// them; mission logs from `run --out` work too, provided the set
        /// contains active sightings of the restricted cell.
        #[arg(long, value_name = "N")]
        survey: Option<u32>,

        /// Write pack-k<K>.txt here instead of stdout.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },

    /// Dump expected link rates per hover cell as CSV: the backhaul to
    /// Home and the access link to each cluster's nominal cell.
    Rates {
        /// Write rates.csv here instead of stdout.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },

    /// Re-render tables and charts from a saved results.json bundle.
    Report {
        #[arg(value_name = "RESULTS_JSON")]
        results: PathBuf,

        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

enum Fail {
    Config(String),
    Data(String),
    Check,
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Config(_) => 2,
            Fail::Data(_) => 1,
            Fail::Check => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Fail::Config(m) | Fail::Data(m) => m.clone(),
            Fail::Check => "one or more acceptance properties failed".into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<MissionConfig, Fail> {
    match path {
        Some(p) => MissionConfig::from_file(p).map_err(|e| Fail::Config(e.to_string())),
        None => Ok(MissionConfig::default()),
    }
}

fn harness(cfg: MissionConfig) -> Result<Harness, Fail> {
    Harness::new(cfg).map_err(|e| Fail::Config(e.to_string()))
}

fn llm_client(cfg: &MissionConfig) -> Result<LlmClient, Fail> {
    LlmClient::from_env(cfg.llm_timeout_s).ok_or_else(|| {
        Fail::Config(format!(
            "--llm needs {ENV_URL} and {ENV_MODEL} set (and {ENV_KEY} if the endpoint wants one)"
        ))
    })
}

fn write_text(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Fail::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn dispatch(cli: Cli) -> Result<(), Fail> {
    match cli.command {
        Command::Run { method, k, episode, llm, out } => {
            let cfg = load_config(&cli.config)?;
            let method = parse_method(&method, Some(k)).map_err(|e| Fail::Config(e.to_string()))?;
            let client = if llm { Some(llm_client(&cfg)?) } else { None };
            let h = harness(cfg)?;
            let opts = RunOptions { record_trace: true, ..RunOptions::default() };
            let seed = episode_seed(cli.seed_base, episode);
            let r = match &client {
                Some(c) => h.run_episode_llm(method, seed, &opts, c),
                None => h.run_episode(method, seed, &opts),
            };
            let trace = r.trace.as_ref().expect("recording requested");
            print!("{}", trace.to_jsonl());
            eprintln!("{}", run_summary(&r));
            if let Some(dir) = out {
                write_text(&dir, &format!("trace-{seed}.jsonl"), &trace.to_jsonl())?;
                let json = serde_json::to_string_pretty(&r).expect("episode serializes");
                write_text(&dir, &format!("episode-{seed}.json"), &(json + "\n"))?;
            }
            Ok(())
        }

        Command::Eval { method, k, episodes, check, llm, out } => {
            let cfg = load_config(&cli.config)?;
            if check {
                if llm {
                    return Err(Fail::Config(
                        "`eval --check` always runs the scripted reasoners; drop --llm".into(),
                    ));
                }
                let outcomes = run_acceptance(&cfg).map_err(|e| Fail::Config(e.to_string()))?;
                for o in &outcomes {
                    println!("{}", o.line());
                }
                return if outcomes.iter().all(|o| o.pass) { Ok(()) } else { Err(Fail::Check) };
            }
            let method = parse_method(&method, Some(k)).map_err(|e| Fail::Config(e.to_string()))?;
            let client = if llm { Some(llm_client(&cfg)?) } else { None };
            let h = harness(cfg)?;
            let opts = RunOptions::default();
            let ev = match &client {
                // one blocking adapter call per decision: run the suite serially
                Some(c) => {
                    let results: Vec<EpisodeResult> = (0..u64::from(episodes))
                        .map(|i| {
                            h.run_episode_llm(method, episode_seed(cli.seed_base, i), &opts, c)
                        })
                        .collect();
                    Evaluation { metrics: Metrics::of(&results), results }
                }
                None => h.evaluate(method, episodes, cli.seed_base, &opts),
            };
            print!("{}", eval_table(&method.label(), &ev));
            if let Some(dir) = out {
                let data = ReportData {
                    methods: vec![MethodSummary { method: method.label(), metrics: ev.metrics }],
                    sweep: Vec::new(),
                    amortization: None,
                    episodes: ev.results,
                };
                report_to(&dir, &data)?;
            }
            Ok(())
        }

        Command::SweepK { episodes, out } => {
            let cfg = load_config(&cli.config)?;
            let h = harness(cfg)?;
            let rows = h.sweep_k(episodes, cli.seed_base, &RunOptions::default());
            print!("{}", sweep_table(&rows));
            if let Some(dir) = out {
                let data = ReportData { sweep: rows, ..ReportData::default() };
                report_to(&dir, &data)?;
            }
            Ok(())
        }

        Command::Promote { traces, k, survey, out } => {
            let cfg = load_config(&cli.config)?;
            if !(1..=5).contains(&k) {
                return Err(Fail::Config(format!("exposure level {k} out of range 1..=5")));
            }
            let world =
                skypack_core::build_world(&cfg).map_err(|e| Fail::Config(e.to_string()))?;
            if let Some(n) = survey {
                for (i, t) in skypack_core::generate_corpus(&world, n).iter().enumerate() {
                    write_text(&traces, &format!("survey-{i:03}.jsonl"), &t.to_jsonl())?;
                }
            }
            let corpus = read_traces(&traces)?;
            let pack = promote(&corpus, &world, &cfg.promotion)
                .map_err(|e| Fail::Data(format!("promotion failed: {e}")))?;
            let wire = assemble_pack(&pack, k);
            match out {
                Some(dir) => {
                    let path = write_text(&dir, &format!("pack-k{k}.txt"), &wire.body)?;
                    println!("{} ({} tokens)", path.display(), wire.token_count);
                }
                None => print!("{}", wire.body),
            }
            Ok(())
        }

        Command::Rates { out } => {
            let cfg = load_config(&cli.config)?;
            let csv = rates_csv(&cfg)?;
            match out {
                Some(dir) => {
                    let path = write_text(&dir, "rates.csv", &csv)?;
                    println!("{}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(())
        }

        Command::Report { results, out } => {
            let text = fs::read_to_string(&results)
                .map_err(|e| Fail::Data(format!("cannot read {}: {e}", results.display())))?;
            let data: ReportData = serde_json::from_str(&text)
                .map_err(|e| Fail::Data(format!("cannot parse {}: {e}", results.display())))?;
            report_to(&out, &data)?;
            Ok(())
        }
    }
}

fn report_to(dir: &Path, data: &ReportData) -> Result<(), Fail> {
    let written = write_report(dir, data)
        .map_err(|e| Fail::Data(format!("cannot write report under {}: {e}", dir.display())))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn read_traces(dir: &Path) -> Result<Vec<EpisodeTrace>, Fail> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Fail::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Fail::Data(format!("no *.jsonl episode logs under {}", dir.display())));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let text = fs::read_to_string(&p)
            .map_err(|e| Fail::Data(format!("cannot read {}: {e}", p.display())))?;
        let trace = EpisodeTrace::from_jsonl(&text)
            .map_err(|e| Fail::Data(format!("cannot parse {}: {e}", p.display())))?;
        out.push(trace);
    }
    Ok(out)
}

fn run_summary(r: &EpisodeResult) -> String {
    format!(
        "episode seed {} method {}: success {}, {} ticks, {} decisions, \
         {} reasoning steps / {} tokens, comms sync {} + uplink {} + planning {} \
         + downlink {} tokens, {} violations, throughput {:.0} bps",
        r.seed,
        r.method,
        r.success,
        r.ticks,
        r.decisions,
        r.reasoning_steps,
        r.reasoning_tokens,
        r.ledger.sync_tokens,
        r.ledger.uplink_tokens,
        r.ledger.planning_tokens,
        r.ledger.downlink_tokens,
        r.violations.len(),
        r.throughput_bps,
    )
}

fn eval_table(label: &str, ev: &Evaluation) -> String {
    let m = &ev.metrics;
    let violations: u64 = ev.results.iter().map(EpisodeResult::violation_count).sum();
    let mut s = String::new();
    s.push_str("method            episodes  success  violations  steps/ep  tokens/step  sync/ep  exchange/ep  comms/ep\n");
    s.push_str(&format!(
        "{:<16}  {:>8}  {:>7.3}  {:>10}  {:>8.2}  {:>11.2}  {:>7.1}  {:>11.1}  {:>8.1}\n",
        label,
        m.episodes,
        m.success_rate,
        violations,
        m.mean_reasoning_steps,
        m.tokens_per_step,
        m.mean_sync_tokens,
        m.mean_exchange_tokens,
        m.mean_comms_tokens,
    ));
    s
}

fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = String::from("k  payload_tokens  steps/ep  tokens/step  success\n");
    for r in rows {
        s.push_str(&format!(
            "{}  {:>14}  {:>8.2}  {:>11.2}  {:>7.3}\n",
            r.k,
            r.payload_tokens,
            r.metrics.mean_reasoning_steps,
            r.metrics.tokens_per_step,
            r.metrics.success_rate,
        ));
    }
    s
}

fn rates_csv(cfg: &MissionConfig) -> Result<String, Fail> {
    let world = skypack_core::build_world(cfg).map_err(|e| Fail::Config(e.to_string()))?;
    let mut s = String::from("x,y,backhaul_home_bps");
    for c in 0..world.clusters.len() {
        s.push_str(&format!(",access_c{c}_bps"));
    }
    s.push('\n');
    for y in 0..world.height {
        for x in 0..world.width {
            let uav = skypack_core::cell(x, y);
            let bh = expected_rate_bps(&cfg.backhaul, &geometry(&world, uav, world.home));
            s.push_str(&format!("{x},{y},{bh:.1}"));
            for ground in &world.clusters {
                let rate = expected_rate_bps(&cfg.access, &geometry(&world, uav, *ground));
                s.push_str(&format!(",{rate:.1}"));
            }
            s.push('\n');
        }
    }
    Ok(s)
}
