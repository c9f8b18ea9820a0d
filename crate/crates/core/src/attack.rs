//! Malicious transmissions for the consistent and intermittent-failure models.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::graph::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("unknown attack kind `{0}` (expected `consistent` or `intermittent`)")]
    UnknownKind(String),
    #[error("attack probability for malicious agent {index} must lie in (0, 1], got {value}")]
    BadProbability { index: usize, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    /// Always sends the attack value; the Bernoulli flag only shapes trust.
    Consistent,
    /// Sends the attack value when the flag is drawn, its own consensus value otherwise.
    IntermittentFailure,
}

impl FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consistent" => Ok(Self::Consistent),
            "intermittent" | "intermittent_failure" | "intermittentfailure" | "failure" => {
                Ok(Self::IntermittentFailure)
            }
            _ => Err(AttackError::UnknownKind(s.to_string())),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Consistent => "consistent",
            Self::IntermittentFailure => "intermittent",
        })
    }
}

/// `+1` when the nominal value is negative or zero, `-1` when positive.
pub fn sign_against(nominal_value: f64) -> f64 {
    if nominal_value > 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Per malicious agent, in malicious index order.
    pub p: Vec<f64>,
    /// `+1` or `-1`; attack values are `sign_target * eta`.
    pub sign_target: f64,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, p: Vec<f64>, nominal_value: f64) -> Result<Self, AttackError> {
        if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0 && v <= 1.0)) {
            return Err(AttackError::BadProbability { index, value });
        }
        Ok(Self {
            kind,
            p,
            sign_target: sign_against(nominal_value),
        })
    }
}

/// Internal consensus values of malicious agents (used by the failure model).
#[derive(Debug, Clone, PartialEq)]
pub struct MaliciousState {
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub values: Vec<f64>,
    pub attacked: Vec<bool>,
}

/// Draws one Bernoulli flag per malicious agent in ascending order, then
/// builds the transmitted values.
pub fn emit<R: Rng + ?Sized>(config: &AttackConfig, mstate: &MaliciousState, rng: &mut R, eta: f64) -> Emission {
    let attacked: Vec<bool> = config.p.iter().map(|&p| rng.random_bool(p)).collect();
    emit_with_flags(config, mstate, attacked, eta)
}

/// [`emit`] with the attack flags supplied by the caller.
pub fn emit_with_flags(config: &AttackConfig, mstate: &MaliciousState, attacked: Vec<bool>, eta: f64) -> Emission {
    let hit = config.sign_target * eta;
    let values = match config.kind {
        AttackKind::Consistent => vec![hit; attacked.len()],
        AttackKind::IntermittentFailure => attacked
            .iter()
            .zip(&mstate.x)
            .map(|(&a, &x)| if a { hit } else { x.clamp(-eta, eta) })
            .collect(),
    };
    Emission { values, attacked }
}

/// One uniform averaging step `x_m <- (x_m + sum_{j in N_m} v_j) / (|N_m| + 1)`
/// over all graph neighbors, where `network` holds the value each agent sent.
pub fn update_internal(mstate: &MaliciousState, network: &[f64], topology: &Topology) -> MaliciousState {
    let x = topology
        .malicious()
        .zip(&mstate.x)
        .map(|(m, &own)| {
            let nbrs = topology.neighbors(m);
            let w = 1.0 / (nbrs.len() + 1) as f64;
            w * own + nbrs.iter().map(|&j| w * network[j]).sum::<f64>()
        })
        .collect();
    MaliciousState { x }
}
