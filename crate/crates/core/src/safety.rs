//! Pairwise distance barriers, their Lie derivatives along the unicycle
//! dynamics, log-sum-exp aggregation and the aggregated second-order barrier
//! condition `A u >= b`.
//!
//! Every pair barrier `h = |p_i - p_j|^2 - d^2` has relative degree two: the
//! heading rate first appears in the second time derivative. The aggregate
//! `H = -(1/lambda) ln sum_k exp(-lambda h_k)` inherits that degree, so its
//! control row is the softmin-weighted sum of the per-pair mixed derivatives.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, ControlInput};
use crate::error::{Error, Result};

/// Control rows with a norm below this are treated as having no authority.
pub const DEGENERATE_ROW_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    /// Minimum separation, m.
    pub d: f64,
    /// Log-sum-exp sharpness.
    pub lambda: f64,
    /// First linear class-K gain, 1/s.
    pub kappa1: f64,
    /// Second linear class-K gain, 1/s.
    pub kappa2: f64,
}

impl BarrierParams {
    pub fn new(d: f64, lambda: f64, kappa1: f64, kappa2: f64) -> Result<Self> {
        for (name, val) in [("d", d), ("lambda", lambda), ("kappa1", kappa1), ("kappa2", kappa2)] {
            if !(val > 0.0 && val.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {val}")));
            }
        }
        Ok(Self { d, lambda, kappa1, kappa2 })
    }

    /// Upper bound on `min h - H` for `m` aggregated pairs.
    pub fn lse_gap(&self, m: usize) -> f64 {
        (m.max(1) as f64).ln() / self.lambda
    }
}

/// Barrier value and Lie derivatives for one agent pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDerivatives {
    pub pair: (usize, usize),
    pub h: f64,
    pub lf_h: f64,
    pub lf2_h: f64,
    /// Mixed derivative entry multiplying agent `pair.0`'s heading rate.
    pub lglf_i: f64,
    /// Mixed derivative entry multiplying agent `pair.1`'s heading rate.
    pub lglf_j: f64,
}

impl PairDerivatives {
    /// Left side of the per-pair second-order barrier condition under controls
    /// `(u_i, u_j)`. Negative means the pair is unsafe under those controls.
    pub fn condition(&self, u_i: f64, u_j: f64, params: &BarrierParams) -> f64 {
        self.lf2_h
            + self.lglf_i * u_i
            + self.lglf_j * u_j
            + (params.kappa1 + params.kappa2) * self.lf_h
            + params.kappa1 * params.kappa2 * self.h
    }
}

/// Aggregated affine safety condition `a_row . u >= b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyConstraint {
    pub a_row: Vec<f64>,
    pub b: f64,
    /// `b - a_row . u_nominal` for the nominal control used at assembly.
    pub deficit: f64,
    pub h_tilde: f64,
    pub lf_h_tilde: f64,
    pub lf2_h_tilde: f64,
    pub pairs: Vec<(usize, usize)>,
}

impl SafetyConstraint {
    pub fn row_norm(&self) -> f64 {
        self.a_row.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// No agent has authority over the aggregated barrier at this state.
    pub fn is_degenerate(&self) -> bool {
        self.row_norm() < DEGENERATE_ROW_NORM
    }

    pub fn deficit_for(&self, controls: &[ControlInput]) -> f64 {
        safety_deficit(&self.a_row, self.b, controls)
    }
}

pub fn pair_barrier(pi: [f64; 2], pj: [f64; 2], d: f64) -> f64 {
    let dx = pi[0] - pj[0];
    let dy = pi[1] - pj[1];
    dx * dx + dy * dy - d * d
}

pub fn pair_derivatives(
    pair: (usize, usize),
    xi: &AgentState,
    xj: &AgentState,
    v: f64,
    params: &BarrierParams,
) -> PairDerivatives {
    pair_derivatives_with_speeds(pair, xi, xj, (v, v), params)
}

/// Pair terms when the two agents move at different speeds. A stopped agent
/// (`speed 0`) is a static obstacle with no steering authority.
pub fn pair_derivatives_with_speeds(
    pair: (usize, usize),
    xi: &AgentState,
    xj: &AgentState,
    (vi, vj): (f64, f64),
    params: &BarrierParams,
) -> PairDerivatives {
    let dx = xi.x - xj.x;
    let dy = xi.y - xj.y;
    let (si, ci) = xi.theta.sin_cos();
    let (sj, cj) = xj.theta.sin_cos();
    let dvx = vi * ci - vj * cj;
    let dvy = vi * si - vj * sj;
    PairDerivatives {
        pair,
        h: pair_barrier(xi.position(), xj.position(), params.d),
        lf_h: 2.0 * (dx * dvx + dy * dvy),
        lf2_h: 2.0 * (dvx * dvx + dvy * dvy),
        lglf_i: 2.0 * vi * (-dx * si + dy * ci),
        lglf_j: 2.0 * vj * (dx * sj - dy * cj),
    }
}

fn check_lse_input(h_values: &[f64], lambda: f64) -> Result<()> {
    if h_values.is_empty() {
        return Err(Error::Empty("barrier values"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(h) = h_values.iter().find(|h| !h.is_finite()) {
        return Err(Error::NonFinite(format!("barrier value {h}")));
    }
    Ok(())
}

/// Smooth minimum `-(1/lambda) ln sum exp(-lambda h_k)`, evaluated with a max
/// shift so the exponentials never overflow.
pub fn lse_aggregate(h_values: &[f64], lambda: f64) -> Result<f64> {
    check_lse_input(h_values, lambda)?;
    let shift = h_values
        .iter()
        .map(|h| -lambda * h)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = h_values.iter().map(|h| (-lambda * h - shift).exp()).sum();
    Ok(-(shift + sum.ln()) / lambda)
}

/// Softmin weights `w_k = exp(-lambda h_k) / sum_j exp(-lambda h_j)`, the
/// chain-rule coefficients of [`lse_aggregate`].
pub fn softmin_weights(h_values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lse_input(h_values, lambda)?;
    let shift = h_values
        .iter()
        .map(|h| -lambda * h)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = h_values.iter().map(|h| (-lambda * h - shift).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// `b - a_row . u`. Positive values mean `u` violates the constraint.
pub fn safety_deficit(a_row: &[f64], b: f64, controls: &[ControlInput]) -> f64 {
    let au: f64 = a_row.iter().zip(controls).map(|(a, u)| a * u.omega).sum();
    b - au
}

/// Assemble the aggregated constraint over `pairs`.
///
/// The mixed row needs no softmin-derivative term because every pair barrier
/// has zero control authority at first order. The second drift derivative
/// picks up the softmin curvature term
/// `-lambda (sum w_k (L_f h_k)^2 - (sum w_k L_f h_k)^2)`.
pub fn assemble_constraint(
    states: &[AgentState],
    nominal: &[ControlInput],
    pairs: &[(usize, usize)],
    v: f64,
    params: &BarrierParams,
) -> Result<SafetyConstraint> {
    assemble_constraint_with_speeds(states, nominal, pairs, &vec![v; states.len()], params)
}

/// [`assemble_constraint`] with a speed per agent.
pub fn assemble_constraint_with_speeds(
    states: &[AgentState],
    nominal: &[ControlInput],
    pairs: &[(usize, usize)],
    speeds: &[f64],
    params: &BarrierParams,
) -> Result<SafetyConstraint> {
    if pairs.is_empty() {
        return Err(Error::Empty("barrier pairs"));
    }
    if nominal.len() != states.len() {
        return Err(Error::InvalidParameter(format!(
            "{} nominal controls for {} agents",
            nominal.len(),
            states.len()
        )));
    }
    if speeds.len() != states.len() {
        return Err(Error::InvalidParameter(format!(
            "{} speeds for {} agents",
            speeds.len(),
            states.len()
        )));
    }
    if let Some(s) = states.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("agent state {s:?}")));
    }
    for &(i, j) in pairs {
        if i >= states.len() || j >= states.len() || i == j {
            return Err(Error::OutOfRange(format!("pair ({i}, {j}) for {} agents", states.len())));
        }
    }

    let terms: Vec<PairDerivatives> = pairs
        .iter()
        .map(|&(i, j)| pair_derivatives_with_speeds((i, j), &states[i], &states[j], (speeds[i], speeds[j]), params))
        .collect();
    let h: Vec<f64> = terms.iter().map(|t| t.h).collect();
    let h_tilde = lse_aggregate(&h, params.lambda)?;
    let w = softmin_weights(&h, params.lambda)?;

    let mut a_row = vec![0.0; states.len()];
    let mut lf = 0.0;
    let mut lf_sq = 0.0;
    let mut lf2 = 0.0;
    for (t, wk) in terms.iter().zip(&w) {
        lf += wk * t.lf_h;
        lf_sq += wk * t.lf_h * t.lf_h;
        lf2 += wk * t.lf2_h;
        a_row[t.pair.0] += wk * t.lglf_i;
        a_row[t.pair.1] += wk * t.lglf_j;
    }
    let lf2_h_tilde = lf2 - params.lambda * (lf_sq - lf * lf);
    let b = -lf2_h_tilde
        - (params.kappa1 + params.kappa2) * lf
        - params.kappa1 * params.kappa2 * h_tilde;
    let deficit = safety_deficit(&a_row, b, nominal);
    Ok(SafetyConstraint {
        a_row,
        b,
        deficit,
        h_tilde,
        lf_h_tilde: lf,
        lf2_h_tilde,
        pairs: pairs.to_vec(),
    })
}

/// All unordered pairs `(i, j)` with `i < j`.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Agents and pairs whose individual barrier condition fails under the
/// nominal controls.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    /// Sorted, unique.
    pub agents: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

impl ActiveSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.agents.binary_search(&agent).is_ok()
    }
}

pub fn active_set(
    states: &[AgentState],
    nominal: &[ControlInput],
    v: f64,
    params: &BarrierParams,
) -> ActiveSet {
    active_set_with_speeds(states, nominal, &vec![v; states.len()], params)
}

/// [`active_set`] with a speed per agent.
pub fn active_set_with_speeds(
    states: &[AgentState],
    nominal: &[ControlInput],
    speeds: &[f64],
    params: &BarrierParams,
) -> ActiveSet {
    let mut pairs = Vec::new();
    let mut agents = Vec::new();
    for (i, j) in all_pairs(states.len()) {
        let t = pair_derivatives_with_speeds((i, j), &states[i], &states[j], (speeds[i], speeds[j]), params);
        if t.condition(nominal[i].omega, nominal[j].omega, params) < 0.0 {
            pairs.push((i, j));
            agents.push(i);
            agents.push(j);
        }
    }
    agents.sort_unstable();
    agents.dedup();
    ActiveSet { agents, pairs }
}

/// Aggregated barrier over every agent pair, the global safety indicator.
/// Returns `+inf` for fewer than two agents.
pub fn global_h_tilde(states: &[AgentState], params: &BarrierParams) -> f64 {
    let h: Vec<f64> = all_pairs(states.len())
        .into_iter()
        .map(|(i, j)| pair_barrier(states[i].position(), states[j].position(), params.d))
        .collect();
    if h.is_empty() {
        return f64::INFINITY;
    }
    lse_aggregate(&h, params.lambda).unwrap_or(f64::NEG_INFINITY)
}

pub fn min_pairwise_distance(states: &[AgentState]) -> f64 {
    all_pairs(states.len())
        .into_iter()
        .map(|(i, j)| {
            let dx = states[i].x - states[j].x;
            let dy = states[i].y - states[j].y;
            (dx * dx + dy * dy).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn crossing() -> BarrierParams {
        BarrierParams::new(0.12, 50.0, 1.2, 1.2).unwrap()
    }

    fn st(x: f64, y: f64, th: f64) -> AgentState {
        AgentState::new(x, y, th).unwrap()
    }

    #[test]
    fn barrier_examples() {
        assert!(pair_barrier([0.0, 0.0], [0.12, 0.0], 0.12).abs() < 1e-15);
        assert!((pair_barrier([0.3, 0.3], [0.3, 0.3], 0.12) + 0.0144).abs() < 1e-15);
        assert!((pair_barrier([0.0, 0.0], [0.5, 0.0], 0.12) - 0.2356).abs() < 1e-15);
    }

    #[test]
    fn head_on_derivatives() {
        let p = crossing();
        let t = pair_derivatives((0, 1), &st(-0.1, 0.0, 0.0), &st(0.1, 0.0, PI), 0.1, &p);
        assert!((t.lf_h + 0.08).abs() < 1e-15);
        assert!((t.lf2_h - 0.08).abs() < 1e-15);
        assert!(t.lglf_i.abs() < 1e-15);
        assert!(t.lglf_j.abs() < 1e-15);
    }

    #[test]
    fn turned_agent_has_authority() {
        let p = crossing();
        let t = pair_derivatives((0, 1), &st(-0.1, 0.0, PI / 2.0), &st(0.1, 0.0, PI), 0.1, &p);
        assert!((t.lglf_i - 0.04).abs() < 1e-15);
    }

    #[test]
    fn parallel_headings_have_no_drift_terms() {
        let p = crossing();
        let t = pair_derivatives((0, 1), &st(-0.4, 0.7, 1.1), &st(0.9, -0.2, 1.1), 0.1, &p);
        assert_eq!(t.lf_h, 0.0);
        assert_eq!(t.lf2_h, 0.0);
    }

    #[test]
    fn lse_examples() {
        assert_eq!(lse_aggregate(&[0.5], 3.0).unwrap(), 0.5);
        assert!((lse_aggregate(&[1.0, 1.0], 1.0).unwrap() - (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((lse_aggregate(&[0.5, 10.0], 50.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(lse_aggregate(&[], 1.0).is_err());
        assert!(lse_aggregate(&[1.0], 0.0).is_err());
    }

    #[test]
    fn lse_does_not_overflow() {
        let v = lse_aggregate(&[-100.0, -99.0], 50.0).unwrap();
        assert!(v.is_finite() && v <= -100.0);
    }

    #[test]
    fn softmin_examples() {
        let w = softmin_weights(&[1.0, 1.0, 1.0], 7.0).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(softmin_weights(&[0.5], 2.0).unwrap(), vec![1.0]);
        let w = softmin_weights(&[0.0, 0.1], 50.0).unwrap();
        let e = (-5f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.993307).abs() < 1e-6);
    }

    #[test]
    fn single_pair_matches_pair_condition() {
        let p = crossing();
        let states = [st(-0.2, 0.03, 0.1), st(0.15, -0.05, 2.9)];
        let u = [ControlInput::new(0.3), ControlInput::new(-0.2)];
        let c = assemble_constraint(&states, &u, &[(0, 1)], 0.1, &p).unwrap();
        let t = pair_derivatives((0, 1), &states[0], &states[1], 0.1, &p);
        assert!((c.a_row[0] - t.lglf_i).abs() < 1e-9);
        assert!((c.a_row[1] - t.lglf_j).abs() < 1e-9);
        let b_pair = -t.lf2_h - 2.4 * t.lf_h - 1.44 * t.h;
        assert!((c.b - b_pair).abs() < 1e-9);
        // Deficit is the negated per-pair condition.
        assert!((c.deficit + t.condition(0.3, -0.2, &p)).abs() < 1e-12);
    }

    #[test]
    fn duplicated_pair_halves_weights() {
        let p = crossing();
        let states = [st(-0.2, 0.03, 0.1), st(0.15, -0.05, 2.9)];
        let u = [ControlInput::default(); 2];
        let one = assemble_constraint(&states, &u, &[(0, 1)], 0.1, &p).unwrap();
        let two = assemble_constraint(&states, &u, &[(0, 1), (0, 1)], 0.1, &p).unwrap();
        assert!((two.h_tilde - (one.h_tilde - 2f64.ln() / 50.0)).abs() < 1e-12);
        for k in 0..2 {
            assert!((two.a_row[k] - one.a_row[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn uninvolved_agents_get_zero_entries() {
        let p = crossing();
        let states = [st(0.0, 0.0, 0.0), st(0.3, 0.05, PI), st(2.0, 2.0, 1.0)];
        let c = assemble_constraint(&states, &[ControlInput::default(); 3], &[(0, 1)], 0.1, &p).unwrap();
        assert_eq!(c.a_row[2], 0.0);
        assert!(assemble_constraint(&states, &[ControlInput::default(); 3], &[], 0.1, &p).is_err());
        assert!(assemble_constraint(&states, &[ControlInput::default(); 3], &[(0, 5)], 0.1, &p).is_err());
    }

    #[test]
    fn deficit_examples() {
        let u0 = [ControlInput::new(0.0), ControlInput::new(0.0)];
        assert_eq!(safety_deficit(&[0.04, -0.04], 0.5, &u0), 0.5);
        let u = [ControlInput::new(2.0), ControlInput::new(0.0)];
        assert_eq!(safety_deficit(&[1.0, 0.0], 1.0, &u), -1.0);
        let u = [ControlInput::new(-5.0), ControlInput::new(5.0)];
        assert!((safety_deficit(&[0.04, -0.04], 0.1, &u) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diverging_agents_inactive() {
        let p = crossing();
        let states = [st(-0.5, 0.0, PI), st(0.5, 0.0, 0.0)];
        let set = active_set(&states, &[ControlInput::default(); 2], 0.1, &p);
        assert!(set.is_empty() && set.agents.is_empty());
    }

    #[test]
    fn closing_pair_active() {
        let p = crossing();
        let states = [st(-0.15, 0.0, 0.0), st(0.15, 0.0, PI)];
        let t = pair_derivatives((0, 1), &states[0], &states[1], 0.1, &p);
        assert!((t.h - 0.0756).abs() < 1e-12);
        assert!((t.lf_h + 0.12).abs() < 1e-12);
        assert!((t.lf2_h - 0.08).abs() < 1e-12);
        assert!((t.condition(0.0, 0.0, &p) + 0.099136).abs() < 1e-9);
        let set = active_set(&states, &[ControlInput::default(); 2], 0.1, &p);
        assert_eq!(set.agents, vec![0, 1]);
    }

    #[test]
    fn only_conflicting_agents_active() {
        let p = crossing();
        let states = [
            st(-0.15, 0.0, 0.0),
            st(0.15, 0.0, PI),
            st(-1.0, 2.0, PI / 2.0),
            st(1.5, -2.0, -PI / 2.0),
        ];
        let set = active_set(&states, &[ControlInput::default(); 4], 0.1, &p);
        assert_eq!(set.agents, vec![0, 1]);
        assert_eq!(set.pairs, vec![(0, 1)]);
        assert!(!set.contains(2) && !set.contains(3));
    }

    #[test]
    fn exact_head_on_is_degenerate() {
        let p = crossing();
        let states = [st(-0.2, 0.0, 0.0), st(0.2, 0.0, PI)];
        let c = assemble_constraint(&states, &[ControlInput::default(); 2], &[(0, 1)], 0.1, &p).unwrap();
        assert!(c.is_degenerate());
    }
}
