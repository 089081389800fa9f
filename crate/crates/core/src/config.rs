//! Scenario files.
//!
//! A scenario is a TOML document of flat keys and dotted sections:
//!
//! ```text
//! v = 0.1
//! d = 0.12
//! lambda = 50.0
//! auction.eps = 1e-6
//! agents.1.x0 = -1.5
//! agents.1.goal_x = 0.5
//! ```
//!
//! Required top-level keys: `v`, `d`, `lambda`, `kappa1`, `kappa2`, `kx`,
//! `ky`, `ktheta`, `gamma`, `k`. Optional: `dt` (0.033), `duration` (180),
//! `stop_at_goals` (true), `goal_tolerance` (0.05), `controller`
//! (`"auction"`), `omega_max` (none).
//!
//! `auction.*`: `eps` (1e-6), `grid_step` (1e-4), `max_rounds` (200).
//!
//! `agents.<i>.*` for `i = 1..N`: `x0`, `y0`, `goal_x` required; `theta0`
//! defaults to facing the goal, `y_ref` to `y0`, `alpha` to 1.
//!
//! Any other key is rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::engine::{AgentSpec, AuctionNumerics, ControllerMode, Gains, ScenarioConfig};
use crate::error::{Error, Result};
use crate::safety::BarrierParams;

/// The bundled four-agent crossing scenario.
pub const CROSSING_CFG: &str = include_str!("../scenarios/crossing.cfg");

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    v: f64,
    d: f64,
    lambda: f64,
    kappa1: f64,
    kappa2: f64,
    kx: f64,
    ky: f64,
    ktheta: f64,
    gamma: f64,
    k: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default = "default_true")]
    stop_at_goals: bool,
    #[serde(default = "default_goal_tolerance")]
    goal_tolerance: f64,
    #[serde(default)]
    controller: Option<String>,
    #[serde(default)]
    omega_max: Option<f64>,
    #[serde(default)]
    auction: AuctionFile,
    agents: BTreeMap<String, AgentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuctionFile {
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_grid_step")]
    grid_step: f64,
    #[serde(default = "default_max_rounds")]
    max_rounds: usize,
}

impl Default for AuctionFile {
    fn default() -> Self {
        let d = AuctionNumerics::default();
        Self {
            eps: d.eps,
            grid_step: d.grid_step,
            max_rounds: d.max_rounds,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    x0: f64,
    y0: f64,
    #[serde(default)]
    theta0: Option<f64>,
    goal_x: f64,
    #[serde(default)]
    y_ref: Option<f64>,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_dt() -> f64 {
    0.033
}
fn default_duration() -> f64 {
    180.0
}
fn default_true() -> bool {
    true
}
fn default_goal_tolerance() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    AuctionNumerics::default().eps
}
fn default_grid_step() -> f64 {
    AuctionNumerics::default().grid_step
}
fn default_max_rounds() -> usize {
    AuctionNumerics::default().max_rounds
}
fn default_alpha() -> f64 {
    1.0
}

/// Parse and validate scenario text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;

    let mut indexed = Vec::with_capacity(file.agents.len());
    for (key, agent) in file.agents {
        let idx: usize = key
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| Error::Config(format!("agent key `agents.{key}` must be a positive integer")))?;
        indexed.push((idx, agent));
    }
    indexed.sort_by_key(|(i, _)| *i);
    for (pos, (idx, _)) in indexed.iter().enumerate() {
        if *idx != pos + 1 {
            return Err(Error::Config(format!(
                "agents must be numbered 1..N without gaps; expected agents.{} but found agents.{idx}",
                pos + 1
            )));
        }
    }
    let agents = indexed
        .into_iter()
        .map(|(_, a)| AgentSpec {
            x0: a.x0,
            y0: a.y0,
            theta0: a.theta0.unwrap_or(if a.goal_x >= a.x0 { 0.0 } else { PI }),
            goal_x: a.goal_x,
            y_ref: a.y_ref.unwrap_or(a.y0),
            alpha: a.alpha,
        })
        .collect();

    let controller = match file.controller.as_deref() {
        None => ControllerMode::Auction,
        Some(s) => s.parse()?,
    };

    let config = ScenarioConfig {
        agents,
        v: file.v,
        barrier: BarrierParams {
            d: file.d,
            lambda: file.lambda,
            kappa1: file.kappa1,
            kappa2: file.kappa2,
        },
        gains: Gains {
            kx: file.kx,
            ky: file.ky,
            ktheta: file.ktheta,
        },
        gamma: file.gamma,
        k: file.k,
        dt: file.dt,
        duration: file.duration,
        stop_at_goals: file.stop_at_goals,
        goal_tolerance: file.goal_tolerance,
        controller,
        auction: AuctionNumerics {
            eps: file.auction.eps,
            grid_step: file.auction.grid_step,
            max_rounds: file.auction.max_rounds,
        },
        omega_max: file.omega_max,
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
