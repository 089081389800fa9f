//! Turning auction credits into corrections and controls, plus the impartial
//! minimum-deviation QP used as a baseline.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::safety::DEGENERATE_ROW_NORM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionAssignment {
    pub agent: usize,
    pub delta: f64,
    pub applied_control: ControlInput,
}

/// Split a deficit `s` so that agent `i` carries `(1 - c_i) s / sum_j (1 - c_j)`.
///
/// A single participant carries all of `s`. If every credit is 1 the
/// denominator vanishes and the deficit is split evenly.
pub fn credit_to_correction(credits: &[f64], s: f64) -> Result<Vec<f64>> {
    match credits.len() {
        0 => Err(Error::Empty("credits")),
        1 => Ok(vec![s]),
        n => {
            if let Some(c) = credits.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(Error::OutOfRange(format!("credit {c} outside [0, 1]")));
            }
            let denom: f64 = credits.iter().map(|c| 1.0 - c).sum();
            if denom <= 0.0 {
                return Ok(vec![s / n as f64; n]);
            }
            Ok(credits.iter().map(|c| (1.0 - c) * s / denom).collect())
        }
    }
}

/// Minimum-norm deviation `a^T delta / (a a^T)` achieving `a . dev = delta`.
pub fn pseudo_inverse_correction(a_i: &[f64], delta: f64) -> Result<Vec<f64>> {
    let sq: f64 = a_i.iter().map(|a| a * a).sum();
    if delta == 0.0 {
        return Ok(vec![0.0; a_i.len()]);
    }
    if sq.sqrt() <= DEGENERATE_ROW_NORM {
        return Err(Error::Uncontrollable {
            agent: usize::MAX,
            norm: sq.sqrt(),
            delta,
        });
    }
    Ok(a_i.iter().map(|a| a * delta / sq).collect())
}

/// Control for an agent with scalar control entry `a_i` that must contribute
/// `delta` to the aggregated barrier condition.
pub fn synthesize_control(agent: usize, nominal: ControlInput, a_i: f64, delta: f64) -> Result<ControlInput> {
    let dev = pseudo_inverse_correction(&[a_i], delta).map_err(|e| match e {
        Error::Uncontrollable { norm, delta, .. } => Error::Uncontrollable { agent, norm, delta },
        other => other,
    })?;
    Ok(ControlInput::new(nominal.omega + dev[0]))
}

/// Closest control to `nominal` (Euclidean) satisfying `a_row . u >= b`.
///
/// With a single affine inequality the KKT solution is the projection of the
/// nominal point onto the half-space.
pub fn qp_baseline(nominal: &[ControlInput], a_row: &[f64], b: f64) -> Result<Vec<ControlInput>> {
    if nominal.len() != a_row.len() {
        return Err(Error::InvalidParameter(format!(
            "{} controls for a row of length {}",
            nominal.len(),
            a_row.len()
        )));
    }
    let au: f64 = a_row.iter().zip(nominal).map(|(a, u)| a * u.omega).sum();
    if au >= b {
        return Ok(nominal.to_vec());
    }
    let sq: f64 = a_row.iter().map(|a| a * a).sum();
    if sq.sqrt() <= DEGENERATE_ROW_NORM {
        return Err(Error::Uncontrollable {
            agent: usize::MAX,
            norm: sq.sqrt(),
            delta: b - au,
        });
    }
    let mu = (b - au) / sq;
    Ok(nominal
        .iter()
        .zip(a_row)
        .map(|(u, a)| ControlInput::new(u.omega + a * mu))
        .collect())
}
