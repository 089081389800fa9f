//! Run artifacts: trajectory CSV, event and summary JSON, run manifest.
//!
//! Agent indices in every artifact are 1-based, matching scenario keys.
//! Numbers carry 12 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::engine::{effort_summary, EventRecord, ScenarioConfig, TrajectoryLog};
use crate::error::Result;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Format with 12 significant digits, trailing zeros trimmed, `%g`-style
/// switch to exponent form outside `[1e-5, 1e12)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Round to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().unwrap_or(x)
    } else {
        x
    }
}

fn r(x: f64) -> Value {
    if x.is_finite() {
        json!(round12(x))
    } else {
        Value::Null
    }
}

fn rv(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| r(x)).collect())
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let n = log.rows.first().map_or(log.final_states.len(), |row| row.states.len());
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",x_{i},y_{i},theta_{i},omega_nom_{i},omega_app_{i}").unwrap();
    }
    out.push_str(",h_tilde,deficit,active_set,event_id\n");
    for row in &log.rows {
        out.push_str(&fmt_num(row.t));
        for a in 0..n {
            let s = &row.states[a];
            for v in [s.x, s.y, s.theta, row.omega_nominal[a], row.omega_applied[a]] {
                out.push(',');
                out.push_str(&fmt_num(v));
            }
        }
        let active: Vec<String> = row.active.iter().map(|a| (a + 1).to_string()).collect();
        let event = row.event_id.map_or(-1, |e| e as i64);
        writeln!(
            out,
            ",{},{},{},{}",
            fmt_num(row.h_tilde),
            row.deficit.map_or("nan".into(), fmt_num),
            active.join(";"),
            event
        )
        .unwrap();
    }
    out
}

pub fn events_json(events: &[EventRecord]) -> Value {
    Value::Array(
        events
            .iter()
            .map(|e| {
                json!({
                    "t": r(e.t),
                    "reason": e.reason.as_str(),
                    "agents": e.agents.iter().map(|a| a + 1).collect::<Vec<_>>(),
                    "n": e.n,
                    "bids": e.bids.iter().map(|b| json!({"beta": r(b.beta), "d": r(b.demand)})).collect::<Vec<_>>(),
                    "credits": rv(&e.credits),
                    "payments": rv(&e.payments),
                    "iterations": e.iterations,
                    "converged": e.converged,
                })
            })
            .collect(),
    )
}

pub fn summary_json(log: &TrajectoryLog) -> Value {
    let effort = effort_summary(log);
    json!({
        "per_agent_effort": rv(&effort.per_agent),
        "total_effort": r(effort.total),
        "min_distance": r(log.min_distance),
        "min_h_tilde": r(log.min_h_tilde),
        "feasibility_violations": log.diagnostics.iter().map(|d| json!({
            "t": r(d.t),
            "kind": d.kind,
            "agent": d.agent.map(|a| a + 1),
            "detail": d.detail,
        })).collect::<Vec<_>>(),
    })
}

/// SHA-256 over the canonical JSON form of a validated scenario, so that
/// formatting and key order in the source file do not matter.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let canonical = serde_json::to_string(config).expect("scenario serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub controller: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// Write all artifacts of a finished run into `dir`, creating it if needed.
pub fn write_run(
    dir: &Path,
    config: &ScenarioConfig,
    log: &TrajectoryLog,
    events: &[EventRecord],
    wall_clock_seconds: f64,
) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [TRAJECTORY_FILE, EVENTS_FILE, SUMMARY_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    fs::write(&paths[0], trajectory_csv(log))?;
    fs::write(&paths[1], pretty(&events_json(events)))?;
    fs::write(&paths[2], pretty(&summary_json(log)))?;
    let manifest = RunManifest {
        config_hash: config_hash(config),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        controller: config.controller.as_str().to_string(),
        outputs: paths,
        wall_clock_seconds,
    };
    fs::write(dir.join(MANIFEST_FILE), pretty(&serde_json::to_value(&manifest)?))?;
    Ok(manifest)
}
