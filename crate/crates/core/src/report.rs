//! Run artifacts: CSV tables, a JSON bundle that round-trips, and small
//! hand-rolled SVG charts. All numeric formatting is pinned so the same
//! inputs always produce the same bytes.

use crate::comms::AmortizationReport;
use crate::harness::{EpisodeResult, Metrics, SweepRow};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub metrics: Metrics,
}

/// Everything one evaluation run wants to keep. `report` re-renders the
/// tables and charts from this bundle alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReportData {
    #[serde(default)]
    pub methods: Vec<MethodSummary>,
    #[serde(default)]
    pub sweep: Vec<SweepRow>,
    #[serde(default)]
    pub amortization: Option<AmortizationReport>,
    #[serde(default)]
    pub episodes: Vec<EpisodeResult>,
}

pub fn episode_csv(results: &[EpisodeResult]) -> String {
    let mut out = String::from(
        "method,seed,success,ticks,decisions,reasoning_steps,reasoning_tokens,tokens_per_step,\
         violations,disruptions,sync_tokens,uplink_tokens,planning_tokens,downlink_tokens,\
         exchanges,outages,stale_plan_decisions,throughput_bps\n",
    );
    for r in results {
        let tps = if r.reasoning_steps == 0 {
            0.0
        } else {
            r.reasoning_tokens as f64 / r.reasoning_steps as f64
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{:.6}",
            r.method,
            r.seed,
            r.success,
            r.ticks,
            r.decisions,
            r.reasoning_steps,
            r.reasoning_tokens,
            tps,
            r.violations.len(),
            r.disruptions.len(),
            r.ledger.sync_tokens,
            r.ledger.uplink_tokens,
            r.ledger.planning_tokens,
            r.ledger.downlink_tokens,
            r.ledger.exchange_count,
            r.ledger.outage_count,
            r.stale_plan_decisions,
            r.throughput_bps,
        );
    }
    out
}

pub fn metrics_csv(rows: &[MethodSummary]) -> String {
    let mut out = String::from(
        "method,episodes,success_rate,violation_rate,total_violations,mean_reasoning_steps,\
         mean_reasoning_tokens,tokens_per_step,mean_ticks,mean_sync_tokens,\
         mean_exchange_tokens,mean_comms_tokens\n",
    );
    for s in rows {
        let m = &s.metrics;
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.method,
            m.episodes,
            m.success_rate,
            m.violation_rate,
            m.total_violations,
            m.mean_reasoning_steps,
            m.mean_reasoning_tokens,
            m.tokens_per_step,
            m.mean_ticks,
            m.mean_sync_tokens,
            m.mean_exchange_tokens,
            m.mean_comms_tokens,
        );
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "k,payload_tokens,success_rate,violation_rate,mean_reasoning_steps,tokens_per_step\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.k,
            r.payload_tokens,
            r.metrics.success_rate,
            r.metrics.violation_rate,
            r.metrics.mean_reasoning_steps,
            r.metrics.tokens_per_step,
        );
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 56.0; // margin on every side

fn svg_open(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    let _ = writeln!(
        s,
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"24\" font-family=\"monospace\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        title
    );
    let _ = writeln!(
        s,
        "  <line x1=\"{M}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        s,
        "  <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{:.2}\" stroke=\"black\"/>",
        H - M
    );
    s
}

fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi == lo {
        (a + b) / 2.0
    } else {
        a + (v - lo) / (hi - lo) * (b - a)
    }
}

/// One metric across the exposure sweep: a single polyline with one
/// vertex per depth, plus value labels.
pub fn sweep_svg(points: &[(u8, f64)], title: &str, y_label: &str) -> String {
    let mut s = svg_open(title);
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (lo - (hi - lo) * 0.1 - 1e-9, hi + (hi - lo) * 0.1 + 1e-9);
    let xs: Vec<f64> = points
        .iter()
        .map(|p| {
            scale(
                p.0 as f64,
                points[0].0 as f64,
                points[points.len() - 1].0 as f64,
                M,
                W - M,
            )
        })
        .collect();
    let mut line = String::new();
    for (i, p) in points.iter().enumerate() {
        let y = scale(p.1, lo, hi, H - M, M);
        let _ = write!(
            line,
            "{}{:.2},{:.2}",
            if i == 0 { "" } else { " " },
            xs[i],
            y
        );
        let _ = writeln!(
            s,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"black\"/>",
            xs[i], y
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{:.2}</text>",
            xs[i],
            y - 8.0,
            p.1
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">K={}</text>",
            xs[i],
            H - M + 18.0,
            p.0
        );
    }
    let _ = writeln!(
        s,
        "  <polyline points=\"{line}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>"
    );
    let _ = writeln!(
        s,
        "  <text x=\"16\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">{}</text>",
        H / 2.0,
        H / 2.0,
        y_label
    );
    s.push_str("</svg>\n");
    s
}

/// Paired bars per method: success rate (solid) and violation rate (hatched
/// as a lighter bar beside it), both on a 0..1 axis.
pub fn reliability_svg(rows: &[MethodSummary]) -> String {
    let mut s = svg_open("success and violation rates");
    let n = rows.len().max(1) as f64;
    let band = (W - 2.0 * M) / n;
    for (i, r) in rows.iter().enumerate() {
        let x0 = M + i as f64 * band;
        let bw = band * 0.32;
        let hs = (H - 2.0 * M) * r.metrics.success_rate;
        let hv = (H - 2.0 * M) * r.metrics.violation_rate;
        let _ = writeln!(
            s,
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#444444\"/>",
            x0 + band * 0.12,
            H - M - hs,
            bw,
            hs
        );
        let _ = writeln!(
            s,
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#bbbbbb\"/>",
            x0 + band * 0.52,
            H - M - hv,
            bw,
            hv
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            x0 + band / 2.0,
            H - M + 18.0,
            r.method
        );
    }
    let _ = writeln!(
        s,
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">dark: success, light: violations</text>",
        M,
        M - 10.0
    );
    s.push_str("</svg>\n");
    s
}

/// Mean cumulative comms tokens against disruption count for the cached
/// and replanned transports: two polylines.
pub fn amortization_svg(rep: &AmortizationReport) -> String {
    let mut s = svg_open("comms cost against disruption count");
    if rep.rows.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let hi = rep
        .rows
        .iter()
        .map(|r| r.cached_mean.max(r.replan_mean))
        .fold(f64::NEG_INFINITY, f64::max)
        * 1.1
        + 1e-9;
    let xlo = rep.rows[0].disruptions as f64;
    let xhi = rep.rows[rep.rows.len() - 1].disruptions as f64;
    for (field, color, label, ly) in [
        (0usize, "#222222", "cached pack", 36.0),
        (1, "#888888", "replanning", 52.0),
    ] {
        let mut line = String::new();
        for (i, r) in rep.rows.iter().enumerate() {
            let v = if field == 0 {
                r.cached_mean
            } else {
                r.replan_mean
            };
            let x = scale(r.disruptions as f64, xlo, xhi, M, W - M);
            let y = scale(v, 0.0, hi, H - M, M);
            let _ = write!(line, "{}{:.2},{:.2}", if i == 0 { "" } else { " " }, x, y);
        }
        let _ = writeln!(
            s,
            "  <polyline points=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{ly}\" font-family=\"monospace\" font-size=\"11\" fill=\"{color}\">{label}</text>",
            M + 4.0
        );
    }
    for r in &rep.rows {
        let x = scale(r.disruptions as f64, xlo, xhi, M, W - M);
        let _ = writeln!(
            s,
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            x,
            H - M + 18.0,
            r.disruptions
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Render every artifact the bundle supports, as (file name, contents).
pub fn render_all(data: &ReportData) -> Vec<(String, String)> {
    let mut out = Vec::new();
    out.push((
        "results.json".to_string(),
        serde_json::to_string_pretty(data).expect("report serializes") + "\n",
    ));
    if !data.episodes.is_empty() {
        out.push(("episodes.csv".to_string(), episode_csv(&data.episodes)));
    }
    if !data.methods.is_empty() {
        out.push(("metrics.csv".to_string(), metrics_csv(&data.methods)));
        out.push((
            "reliability.svg".to_string(),
            reliability_svg(&data.methods),
        ));
    }
    if !data.sweep.is_empty() {
        out.push(("sweep.csv".to_string(), sweep_csv(&data.sweep)));
        let steps: Vec<(u8, f64)> = data
            .sweep
            .iter()
            .map(|r| (r.k, r.metrics.mean_reasoning_steps))
            .collect();
        out.push((
            "sweep_steps.svg".to_string(),
            sweep_svg(
                &steps,
                "mean reasoning steps by exposure depth",
                "steps per episode",
            ),
        ));
        let tps: Vec<(u8, f64)> = data
            .sweep
            .iter()
            .map(|r| (r.k, r.metrics.tokens_per_step))
            .collect();
        out.push((
            "sweep_tokens_per_step.svg".to_string(),
            sweep_svg(
                &tps,
                "tokens per reasoning step by exposure depth",
                "tokens per step",
            ),
        ));
    }
    if let Some(am) = &data.amortization {
        out.push(("amortization.svg".to_string(), amortization_svg(am)));
    }
    out
}

pub fn write_report(dir: &Path, data: &ReportData) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, contents) in render_all(data) {
        let path = dir.join(name);
        std::fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::amortization_compare;
    use crate::config::MissionConfig;
    use crate::harness::{Harness, Method, RunOptions};

    fn small_bundle() -> ReportData {
        let h = Harness::new(MissionConfig::default()).unwrap();
        let eval = h.evaluate(Method::WithK(3), 4, 0, &RunOptions::default());
        let sweep = h.sweep_k(2, 0, &RunOptions::default());
        ReportData {
            methods: vec![MethodSummary {
                method: "with_k(3)".into(),
                metrics: eval.metrics,
            }],
            sweep,
            amortization: Some(amortization_compare(&[(1, 300, 400), (2, 300, 800)])),
            episodes: eval.results,
        }
    }

    #[test]
    fn rendering_is_byte_stable() {
        let data = small_bundle();
        assert_eq!(render_all(&data), render_all(&data));
    }

    #[test]
    fn sweep_chart_is_one_polyline_with_five_points() {
        let pts: Vec<(u8, f64)> = (1..=5).map(|k| (k, 10.0 + k as f64)).collect();
        let svg = sweep_svg(&pts, "t", "y");
        assert_eq!(svg.matches("<polyline").count(), 1);
        let line = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        let verts = line.split('"').nth(1).unwrap().split(' ').count();
        assert_eq!(verts, 5);
        assert_eq!(svg.matches("<circle").count(), 5);
    }

    #[test]
    fn csv_shapes_hold() {
        let data = small_bundle();
        let ep = episode_csv(&data.episodes);
        assert_eq!(ep.lines().count(), 1 + data.episodes.len());
        assert!(ep.starts_with("method,seed,success"));
        let mc = metrics_csv(&data.methods);
        assert_eq!(mc.lines().count(), 2);
        let sc = sweep_csv(&data.sweep);
        assert_eq!(sc.lines().count(), 6);
    }

    #[test]
    fn bundle_round_trips_through_json() {
        let data = small_bundle();
        let json = serde_json::to_string(&data).unwrap();
        let back: ReportData = serde_json::from_str(&json).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(dir.path(), &small_bundle()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("results.json")));
        assert!(files.iter().any(|p| p.ends_with("sweep_steps.svg")));
        assert!(files.iter().any(|p| p.ends_with("metrics.csv")));
        for f in files {
            assert!(f.exists());
        }
    }
}
