//! Constant-speed unicycle agents and fixed-step RK4 integration.
//!
//! Each agent carries a planar pose `(x, y, theta)` and is steered only through
//! its angular velocity. The drift field moves the agent forward at speed `v`
//! along its heading; the control field enters the heading rate alone.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Planar pose of one agent. `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl AgentState {
    pub fn new(x: f64, y: f64, theta: f64) -> Result<Self> {
        let s = Self {
            x,
            y,
            theta: wrap_angle(theta),
        };
        s.check_finite()?;
        Ok(s)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("agent state {self:?}")))
        }
    }
}

/// Angular velocity command for one agent, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub omega: f64,
}

impl ControlInput {
    pub const fn new(omega: f64) -> Self {
        Self { omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Forward speed, m/s.
    pub v: f64,
    /// Integration step, s.
    pub dt: f64,
}

impl DynamicsParams {
    pub fn new(v: f64, dt: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("speed must be positive, got {v}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { v, dt })
    }
}

/// Drift field `f(x) = (v cos(theta), v sin(theta), 0)`.
pub fn drift(state: &AgentState, v: f64) -> [f64; 3] {
    [v * state.theta.cos(), v * state.theta.sin(), 0.0]
}

/// Control field `g(x) = (0, 0, 1)`; the control enters only the heading rate.
pub fn control_field(_state: &AgentState) -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn derivative(x: f64, y: f64, theta: f64, v: f64, omega: f64) -> [f64; 3] {
    let s = AgentState { x, y, theta };
    let f = drift(&s, v);
    let g = control_field(&s);
    [f[0] + g[0] * omega, f[1] + g[1] * omega, f[2] + g[2] * omega]
}

/// Advance one agent by a single RK4 step with the control held constant over
/// the step. Heading is re-wrapped afterwards.
///
/// Zero-speed stepping is allowed here (pure rotation) even though scenario
/// parameters require `v > 0`.
pub fn step(state: &AgentState, u: ControlInput, v: f64, dt: f64) -> Result<AgentState> {
    if !state.is_finite() || !u.omega.is_finite() || !v.is_finite() || !dt.is_finite() {
        return Err(Error::NonFinite(format!(
            "step input state={state:?} omega={} v={v} dt={dt}",
            u.omega
        )));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let (x, y, th, w) = (state.x, state.y, state.theta, u.omega);
    let k1 = derivative(x, y, th, v, w);
    let h = 0.5 * dt;
    let k2 = derivative(x + h * k1[0], y + h * k1[1], th + h * k1[2], v, w);
    let k3 = derivative(x + h * k2[0], y + h * k2[1], th + h * k2[2], v, w);
    let k4 = derivative(x + dt * k3[0], y + dt * k3[1], th + dt * k3[2], v, w);
    let c = dt / 6.0;
    let next = AgentState {
        x: x + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y: y + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        theta: wrap_angle(th + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])),
    };
    next.check_finite()?;
    Ok(next)
}

/// Convenience wrapper taking validated parameters.
pub fn step_with(state: &AgentState, u: ControlInput, params: &DynamicsParams) -> Result<AgentState> {
    step(state, u, params.v, params.dt)
}
