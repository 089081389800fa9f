//! Closed-loop simulation.
//!
//! Every step computes nominal controls, finds the pairs whose barrier
//! condition fails under them, and assembles the aggregated constraint over
//! those pairs. In auction mode an auction runs only when the deficit turns
//! positive or the active set changes; in between, agents keep their credits
//! and their corrections follow the current deficit. In QP mode the same
//! constraint is resolved by the minimum-deviation projection instead.

use serde::{Deserialize, Serialize};

use crate::allocation::{credit_to_correction, qp_baseline, synthesize_control};
use crate::auction::{run_auction, AuctionOutcome, Bid, ValuationParams};
use crate::dynamics::{step, wrap_angle, AgentState, ControlInput};
use crate::error::{Error, Result};
use crate::safety::{
    active_set_with_speeds, assemble_constraint_with_speeds, global_h_tilde, min_pairwise_distance, ActiveSet, BarrierParams,
    SafetyConstraint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Auction,
    Qp,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::Auction => "auction",
            ControllerMode::Qp => "qp",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auction" => Ok(ControllerMode::Auction),
            "qp" => Ok(ControllerMode::Qp),
            other => Err(Error::Config(format!("unknown controller `{other}` (expected auction|qp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    pub goal_x: f64,
    pub y_ref: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kx: f64,
    pub ky: f64,
    pub ktheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionNumerics {
    pub eps: f64,
    pub grid_step: f64,
    pub max_rounds: usize,
}

impl Default for AuctionNumerics {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            grid_step: 1e-4,
            max_rounds: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub agents: Vec<AgentSpec>,
    pub v: f64,
    pub barrier: BarrierParams,
    pub gains: Gains,
    /// Valuation escalation base.
    pub gamma: f64,
    /// Valuation shape.
    pub k: f64,
    pub dt: f64,
    /// Hard cap on simulated time, s.
    pub duration: f64,
    pub stop_at_goals: bool,
    pub goal_tolerance: f64,
    pub controller: ControllerMode,
    pub auction: AuctionNumerics,
    pub omega_max: Option<f64>,
}

impl ScenarioConfig {
    /// The four-agent crossing experiment.
    pub fn crossing() -> Self {
        use std::f64::consts::PI;
        let agent = |x0: f64, y0: f64, goal_x: f64, theta0: f64| AgentSpec {
            x0,
            y0,
            theta0,
            goal_x,
            y_ref: y0,
            alpha: 1.0,
        };
        Self {
            agents: vec![
                agent(-1.5, 0.0, 0.5, 0.0),
                agent(-0.5, -0.1, -1.5, PI),
                agent(0.5, -0.1, -1.0, PI),
                agent(1.5, -0.1, -0.5, PI),
            ],
            v: 0.1,
            barrier: BarrierParams {
                d: 0.12,
                lambda: 50.0,
                kappa1: 1.2,
                kappa2: 1.2,
            },
            gains: Gains {
                kx: 0.5,
                ky: 2.5,
                ktheta: 2.0,
            },
            gamma: 8.0,
            k: 5.0,
            dt: 0.033,
            duration: 180.0,
            stop_at_goals: true,
            goal_tolerance: 0.05,
            controller: ControllerMode::Auction,
            auction: AuctionNumerics::default(),
            omega_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        if self.agents.len() < 2 {
            return bad(format!("need at least two agents, got {}", self.agents.len()));
        }
        let positive = [
            ("v", self.v),
            ("kx", self.gains.kx),
            ("ky", self.gains.ky),
            ("ktheta", self.gains.ktheta),
            ("k", self.k),
            ("dt", self.dt),
            ("duration", self.duration),
            ("goal_tolerance", self.goal_tolerance),
            ("auction.eps", self.auction.eps),
            ("auction.grid_step", self.auction.grid_step),
        ];
        for (name, val) in positive {
            if !(val > 0.0 && val.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {val}"));
            }
        }
        BarrierParams::new(self.barrier.d, self.barrier.lambda, self.barrier.kappa1, self.barrier.kappa2)?;
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be at least 1, got {}", self.gamma));
        }
        if self.auction.grid_step > 1.0 {
            return bad(format!("auction.grid_step must be at most 1, got {}", self.auction.grid_step));
        }
        if self.auction.max_rounds == 0 {
            return bad("auction.max_rounds must be positive".into());
        }
        if let Some(w) = self.omega_max {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("omega_max must be positive, got {w}"));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            let vals = [a.x0, a.y0, a.theta0, a.goal_x, a.y_ref, a.alpha];
            if vals.iter().any(|v| !v.is_finite()) {
                return bad(format!("agent {} has a non-finite field", i + 1));
            }
            if a.alpha <= 0.0 {
                return bad(format!("agent {} alpha must be positive, got {}", i + 1, a.alpha));
            }
        }
        for i in 0..self.agents.len() {
            for j in i + 1..self.agents.len() {
                let (a, b) = (&self.agents[i], &self.agents[j]);
                if a.x0 == b.x0 && a.y0 == b.y0 {
                    return bad(format!("agents {} and {} start at the same position", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }

    pub fn initial_states(&self) -> Result<Vec<AgentState>> {
        self.agents
            .iter()
            .map(|a| AgentState::new(a.x0, a.y0, a.theta0))
            .collect()
    }
}

/// Goal-seeking heading law: steer toward the reference line while moving
/// toward the goal abscissa.
pub fn nominal_control(state: &AgentState, goal_x: f64, y_ref: f64, gains: &Gains) -> ControlInput {
    let theta_des = f64::atan2(-gains.ky * (state.y - y_ref), gains.kx * (goal_x - state.x));
    ControlInput::new(gains.ktheta * wrap_angle(theta_des - state.theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerReason {
    DeficitPositive,
    ActiveSetChange,
}

impl TriggerReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerReason::DeficitPositive => "deficit-positive",
            TriggerReason::ActiveSetChange => "active-set-change",
        }
    }
}

/// Decide whether a new auction is needed. A deficit of `None` means no pair
/// is active and counts as non-positive.
pub fn trigger_check(
    s_now: Option<f64>,
    s_prev: Option<f64>,
    active_now: &[usize],
    active_prev: &[usize],
) -> Option<TriggerReason> {
    let now_pos = s_now.is_some_and(|s| s > 0.0);
    let prev_pos = s_prev.is_some_and(|s| s > 0.0);
    if now_pos && !prev_pos {
        Some(TriggerReason::DeficitPositive)
    } else if active_now != active_prev && !active_now.is_empty() {
        Some(TriggerReason::ActiveSetChange)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: usize,
    pub t: f64,
    pub reason: TriggerReason,
    /// Participating agents, 0-based.
    pub agents: Vec<usize>,
    /// Encounter counts used for bidding, aligned with `agents`.
    pub n: Vec<u32>,
    pub bids: Vec<Bid>,
    pub credits: Vec<f64>,
    pub payments: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    /// A required correction could not be realised for lack of control authority.
    Uncontrollable,
    /// Saturation truncated a required correction.
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub t: f64,
    pub kind: DiagnosticKind,
    pub agent: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: f64,
    pub states: Vec<AgentState>,
    pub omega_nominal: Vec<f64>,
    pub omega_applied: Vec<f64>,
    /// Per-agent safety correction assigned this step (zero when none).
    pub corrections: Vec<f64>,
    pub h_tilde: f64,
    /// Deficit of the aggregated constraint over active pairs, if any.
    pub deficit: Option<f64>,
    pub active: Vec<usize>,
    pub event_id: Option<usize>,
    /// Agents that have arrived and stopped.
    pub parked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub controller: ControllerMode,
    pub rows: Vec<StepRow>,
    pub final_t: f64,
    pub final_states: Vec<AgentState>,
    /// Running integral of `|u_i - u_nom_i|`, rad.
    pub effort: Vec<f64>,
    pub min_h_tilde: f64,
    pub min_distance: f64,
    pub diagnostics: Vec<Diagnostic>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortSummary {
    pub per_agent: Vec<f64>,
    pub total: f64,
}

pub fn effort_summary(log: &TrajectoryLog) -> EffortSummary {
    EffortSummary {
        per_agent: log.effort.clone(),
        total: log.effort.iter().sum(),
    }
}

struct LiveEvent {
    id: usize,
    agents: Vec<usize>,
    credits: Vec<f64>,
}

/// Per-step safety view shared by both controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetySnapshot {
    pub nominal: Vec<ControlInput>,
    pub active: ActiveSet,
    pub constraint: Option<SafetyConstraint>,
}

/// Nominal controls, active set and the aggregated constraint over active
/// pairs for one joint state. Parked agents have zero speed and zero nominal turn.
pub fn safety_snapshot(config: &ScenarioConfig, states: &[AgentState], parked: &[bool]) -> Result<SafetySnapshot> {
    let nominal: Vec<ControlInput> = states
        .iter()
        .zip(&config.agents)
        .zip(parked)
        .map(|((s, a), &p)| {
            if p {
                ControlInput::default()
            } else {
                nominal_control(s, a.goal_x, a.y_ref, &config.gains)
            }
        })
        .collect();
    let speeds = speeds(config, parked);
    let active = active_set_with_speeds(states, &nominal, &speeds, &config.barrier);
    let constraint = if active.is_empty() {
        None
    } else {
        Some(assemble_constraint_with_speeds(
            states,
            &nominal,
            &active.pairs,
            &speeds,
            &config.barrier,
        )?)
    };
    Ok(SafetySnapshot {
        nominal,
        active,
        constraint,
    })
}

/// Controls the QP baseline applies for a snapshot, with diagnostics for
/// uncontrollable states.
pub fn qp_controls(snapshot: &SafetySnapshot) -> std::result::Result<Vec<ControlInput>, Error> {
    match &snapshot.constraint {
        Some(c) if c.deficit > 0.0 => qp_baseline(&snapshot.nominal, &c.a_row, c.b),
        _ => Ok(snapshot.nominal.clone()),
    }
}

/// Auction-mode controls for a snapshot given the credits held by
/// `agents`. Returns the controls, the per-agent corrections and the agents
/// whose share could not be realised.
pub fn auction_controls(
    snapshot: &SafetySnapshot,
    agents: &[usize],
    credits: &[f64],
) -> Result<(Vec<ControlInput>, Vec<f64>, Vec<Error>)> {
    let n = snapshot.nominal.len();
    let mut controls = snapshot.nominal.clone();
    let mut corrections = vec![0.0; n];
    let mut failures = Vec::new();
    let Some(c) = &snapshot.constraint else {
        return Ok((controls, corrections, failures));
    };
    if c.deficit <= 0.0 {
        return Ok((controls, corrections, failures));
    }
    let deltas = credit_to_correction(credits, c.deficit)?;
    for (&a, &delta) in agents.iter().zip(&deltas) {
        corrections[a] = delta;
        match synthesize_control(a, snapshot.nominal[a], c.a_row[a], delta) {
            Ok(u) => controls[a] = u,
            Err(e @ Error::Uncontrollable { .. }) => failures.push(e),
            Err(e) => return Err(e),
        }
    }
    Ok((controls, corrections, failures))
}

fn speeds(config: &ScenarioConfig, parked: &[bool]) -> Vec<f64> {
    parked.iter().map(|&p| if p { 0.0 } else { config.v }).collect()
}

fn at_goal(config: &ScenarioConfig, agent: usize, state: &AgentState) -> bool {
    let a = &config.agents[agent];
    let dx = state.x - a.goal_x;
    let dy = state.y - a.y_ref;
    (dx * dx + dy * dy).sqrt() <= config.goal_tolerance
}

/// Credits for an event. A lone bidder takes the whole resource at no cost.
fn resolve_event(config: &ScenarioConfig, bidders: &[usize], n_at_bid: &[u32]) -> Result<AuctionOutcome> {
    let valuations = bidders
        .iter()
        .zip(n_at_bid)
        .map(|(&a, &na)| ValuationParams::new(config.agents[a].alpha, config.gamma, config.k, na))
        .collect::<Result<Vec<_>>>()?;
    if valuations.len() == 1 {
        return Ok(AuctionOutcome {
            credits: vec![1.0],
            payments: vec![0.0],
            bids: vec![valuations[0].truthful_bid(1.0)],
            iterations: 0,
            converged: true,
        });
    }
    run_auction(
        &valuations,
        config.auction.eps,
        config.auction.grid_step,
        config.auction.max_rounds,
    )
}

/// Run the closed loop until the duration cap or, with `stop_at_goals`,
/// until every agent has arrived. An arrived agent parks: it stops, stays an
/// obstacle for the others, and no longer bids.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(TrajectoryLog, Vec<EventRecord>)> {
    config.validate()?;
    let n = config.agents.len();
    let mut states = config.initial_states()?;
    let steps = (config.duration / config.dt - 1e-9).ceil() as usize;

    let mut rows = Vec::with_capacity(steps);
    let mut events: Vec<EventRecord> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut warned_sizes: Vec<usize> = Vec::new();
    let mut effort = vec![0.0; n];
    let mut encounters = vec![0u32; n];
    let mut parked = vec![false; n];
    let mut min_h = global_h_tilde(&states, &config.barrier);
    let mut min_dist = min_pairwise_distance(&states);

    let mut prev_active: Vec<usize> = Vec::new();
    let mut prev_deficit: Option<f64> = None;
    let mut live: Option<LiveEvent> = None;
    let mut final_t = 0.0;

    for k in 0..steps {
        let t = k as f64 * config.dt;
        let sim_fault = |e: Error| Error::Simulation {
            t,
            reason: e.to_string(),
        };
        let snap = safety_snapshot(config, &states, &parked).map_err(sim_fault)?;
        let deficit = snap.constraint.as_ref().map(|c| c.deficit);
        let m = snap.active.pairs.len();
        let gap = config.barrier.lse_gap(m);
        if m > 1 && gap > 0.5 * config.barrier.d * config.barrier.d && !warned_sizes.contains(&m) {
            warned_sizes.push(m);
            warnings.push(format!(
                "t = {t:.3}: {m} active pairs give a log-sum-exp gap ln(M)/lambda = {gap:.4} above d^2/2"
            ));
        }

        if snap.active.is_empty() {
            live = None;
        }
        if config.controller == ControllerMode::Auction {
            if let Some(reason) = trigger_check(deficit, prev_deficit, &snap.active.agents, &prev_active) {
                let bidders: Vec<usize> = snap.active.agents.iter().copied().filter(|&a| !parked[a]).collect();
                if bidders.is_empty() {
                    live = None;
                } else {
                    let n_at_bid: Vec<u32> = bidders.iter().map(|&a| encounters[a]).collect();
                    let outcome = resolve_event(config, &bidders, &n_at_bid).map_err(sim_fault)?;
                    let id = events.len();
                    for &a in &bidders {
                        encounters[a] += 1;
                    }
                    live = Some(LiveEvent {
                        id,
                        agents: bidders.clone(),
                        credits: outcome.credits.clone(),
                    });
                    events.push(EventRecord {
                        id,
                        t,
                        reason,
                        agents: bidders,
                        n: n_at_bid,
                        bids: outcome.bids,
                        credits: outcome.credits,
                        payments: outcome.payments,
                        iterations: outcome.iterations,
                        converged: outcome.converged,
                    });
                }
            }
        }

        let mut corrections = vec![0.0; n];
        let mut applied = match config.controller {
            ControllerMode::Auction => match &live {
                Some(ev) => {
                    let (u, corr, failures) = auction_controls(&snap, &ev.agents, &ev.credits).map_err(sim_fault)?;
                    corrections = corr;
                    for e in failures {
                        let agent = match &e {
                            Error::Uncontrollable { agent, .. } => Some(*agent),
                            _ => None,
                        };
                        diagnostics.push(Diagnostic {
                            t,
                            kind: DiagnosticKind::Uncontrollable,
                            agent,
                            detail: e.to_string(),
                        });
                    }
                    u
                }
                None => snap.nominal.clone(),
            },
            ControllerMode::Qp => match qp_controls(&snap) {
                Ok(u) => {
                    if let Some(c) = &snap.constraint {
                        for a in 0..n {
                            corrections[a] = c.a_row[a] * (u[a].omega - snap.nominal[a].omega);
                        }
                    }
                    u
                }
                Err(e) => {
                    diagnostics.push(Diagnostic {
                        t,
                        kind: DiagnosticKind::Uncontrollable,
                        agent: None,
                        detail: e.to_string(),
                    });
                    snap.nominal.clone()
                }
            },
        };

        if let Some(limit) = config.omega_max {
            for (a, u) in applied.iter_mut().enumerate() {
                let clipped = u.omega.clamp(-limit, limit);
                if clipped != u.omega {
                    if corrections[a] != 0.0 {
                        diagnostics.push(Diagnostic {
                            t,
                            kind: DiagnosticKind::Saturated,
                            agent: Some(a),
                            detail: format!("omega {:.6} clipped to {:.6}", u.omega, clipped),
                        });
                    }
                    u.omega = clipped;
                }
            }
        }

        for a in 0..n {
            effort[a] += (applied[a].omega - snap.nominal[a].omega).abs() * config.dt;
        }

        rows.push(StepRow {
            t,
            states: states.clone(),
            omega_nominal: snap.nominal.iter().map(|u| u.omega).collect(),
            omega_applied: applied.iter().map(|u| u.omega).collect(),
            corrections,
            h_tilde: global_h_tilde(&states, &config.barrier),
            deficit,
            active: snap.active.agents.clone(),
            event_id: live.as_ref().map(|e| e.id),
            parked: parked.clone(),
        });

        let next_t = (k + 1) as f64 * config.dt;
        let speeds = speeds(config, &parked);
        states = states
            .iter()
            .zip(&applied)
            .zip(&speeds)
            .map(|((s, u), &v)| step(s, *u, v, config.dt))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Simulation {
                t: next_t,
                reason: e.to_string(),
            })?;
        final_t = next_t;
        min_h = min_h.min(global_h_tilde(&states, &config.barrier));
        min_dist = min_dist.min(min_pairwise_distance(&states));

        prev_active = snap.active.agents;
        prev_deficit = deficit;

        if config.stop_at_goals {
            for (a, s) in states.iter().enumerate() {
                if !parked[a] && at_goal(config, a, s) {
                    parked[a] = true;
                }
            }
            if parked.iter().all(|&p| p) {
                break;
            }
        }
    }

    let log = TrajectoryLog {
        controller: config.controller,
        rows,
        final_t,
        final_states: states,
        effort,
        min_h_tilde: min_h,
        min_distance: min_dist,
        diagnostics,
        warnings,
    };
    Ok((log, events))
}
