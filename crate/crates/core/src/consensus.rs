//! Weighted consensus among legitimate agents.
//!
//! Covers the per-step weight rule, the update itself, the nominal weight
//! matrix with its left Perron vector, and the split of legitimate values into
//! legitimate influence `x~_L` and malicious influence `phi_M`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::detection::TrustedNeighborhood;
use crate::graph::Topology;

/// Successive-iterate tolerance for the Perron vector.
pub const PERRON_TOLERANCE: f64 = 1e-12;
pub const PERRON_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("kappa must be positive and finite, got {0}")]
    BadKappa(f64),
    #[error("eta must be positive and finite, got {0}")]
    BadEta(f64),
    #[error("consensus start T_0 must be at least 1")]
    BadStart,
    #[error("legitimate subgraph is disconnected; the nominal matrix has no unique positive Perron vector")]
    Disconnected,
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("malicious agent {agent} sent {value}, exceeding the bound eta = {eta}")]
    ValueOutOfBounds { agent: usize, value: f64, eta: f64 },
    #[error("expected {expected} malicious values, got {got}")]
    MaliciousCount { expected: usize, got: usize },
    #[error("history mismatch: {0}")]
    History(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    kappa: f64,
    eta: f64,
    t0: u64,
}

impl ConsensusParams {
    pub fn new(kappa: f64, eta: f64, t0: u64) -> Result<Self, ConsensusError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(ConsensusError::BadKappa(kappa));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ConsensusError::BadEta(eta));
        }
        if t0 < 1 {
            return Err(ConsensusError::BadStart);
        }
        Ok(Self { kappa, eta, t0 })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Observation window length `T_0`; the first update produces `x(T_0)`.
    pub fn t0(&self) -> u64 {
        self.t0
    }

    /// `max{n + 1, kappa}` for an agent trusting `n` neighbors.
    pub fn normalizer(&self, trusted: usize) -> f64 {
        ((trusted + 1) as f64).max(self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub self_weight: f64,
    /// `(neighbor, weight)` for each trusted neighbor, ascending by index.
    pub neighbors: Vec<(usize, f64)>,
}

impl WeightRow {
    pub fn sum(&self) -> f64 {
        self.self_weight + self.neighbors.iter().map(|&(_, w)| w).sum::<f64>()
    }
}

/// Rows of `W(t)` for every legitimate agent.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRows {
    pub t: u64,
    pub rows: Vec<WeightRow>,
}

impl WeightRows {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        if i == j {
            return row.self_weight;
        }
        row.neighbors
            .iter()
            .find(|&&(n, _)| n == j)
            .map_or(0.0, |&(_, w)| w)
    }

    /// Largest `|sum_j w_ij - 1|` over rows.
    pub fn max_row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Dense blocks `(W_L, W_M)` of sizes `|L| x |L|` and `|L| x |M|`.
    pub fn to_dense(&self, topology: &Topology) -> (DMatrix<f64>, DMatrix<f64>) {
        let nl = topology.n_legit();
        let mut w_l = DMatrix::zeros(nl, nl);
        let mut w_m = DMatrix::zeros(nl, topology.n_malicious());
        for (i, row) in self.rows.iter().enumerate() {
            w_l[(i, i)] = row.self_weight;
            for &(j, w) in &row.neighbors {
                if j < nl {
                    w_l[(i, j)] = w;
                } else {
                    w_m[(i, j - nl)] = w;
                }
            }
        }
        (w_l, w_m)
    }
}

/// `w_ij = 1 / max{|N_i(t)| + 1, kappa}` on trusted neighbors, remainder on self.
pub fn build_weight_rows(trusted: &TrustedNeighborhood, params: &ConsensusParams) -> WeightRows {
    let rows = trusted
        .sets
        .iter()
        .map(|set| {
            let n = set.members.len();
            let w = 1.0 / params.normalizer(n);
            let self_weight = 1.0 - n as f64 * w;
            debug_assert!(self_weight > 0.0);
            WeightRow {
                self_weight,
                neighbors: set.members.iter().map(|&j| (j, w)).collect(),
            }
        })
        .collect();
    WeightRows { t: trusted.t, rows }
}

/// Nominal weights `W_bar_L` over legitimate agents and their left Perron vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalMatrix {
    pub w_bar: DMatrix<f64>,
    pub nu: DVector<f64>,
}

impl NominalMatrix {
    /// `nu^T x_L(0)`, the value reached without malicious influence.
    pub fn nominal_value(&self, x0_legit: &[f64]) -> f64 {
        self.nu.iter().zip(x0_legit).map(|(n, x)| n * x).sum()
    }

    /// `max_j |[nu^T W_bar]_j - nu_j|`.
    pub fn fixed_point_residual(&self) -> f64 {
        let left = self.w_bar.tr_mul(&self.nu);
        (left - &self.nu).amax()
    }
}

pub fn nominal_matrix(topology: &Topology, params: &ConsensusParams) -> Result<NominalMatrix, ConsensusError> {
    if !topology.legit_subgraph_connected() {
        return Err(ConsensusError::Disconnected);
    }
    let nl = topology.n_legit();
    let mut w_bar = DMatrix::zeros(nl, nl);
    for i in topology.legitimate() {
        let legit: Vec<usize> = topology.legit_neighbors(i).collect();
        let w = 1.0 / params.normalizer(legit.len());
        for &j in &legit {
            w_bar[(i, j)] = w;
        }
        w_bar[(i, i)] = 1.0 - legit.len() as f64 * w;
    }
    let nu = perron_vector(&w_bar)?;
    Ok(NominalMatrix { w_bar, nu })
}

/// Left fixed point of a primitive row-stochastic matrix by power iteration on
/// `nu <- W^T nu`, stopping when successive iterates agree to
/// [`PERRON_TOLERANCE`] in max norm.
pub fn perron_vector(w: &DMatrix<f64>) -> Result<DVector<f64>, ConsensusError> {
    let n = w.nrows();
    let mut nu = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..PERRON_MAX_ITERATIONS {
        let mut next = w.tr_mul(&nu);
        let total = next.sum();
        next /= total;
        let diff = (&next - &nu).amax();
        nu = next;
        if diff < PERRON_TOLERANCE {
            return Ok(nu);
        }
    }
    Err(ConsensusError::NoConvergence(PERRON_MAX_ITERATIONS))
}

/// Values of all agents at step `t`; malicious slots hold the values most
/// recently sent on the network.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: u64,
    pub x: Vec<f64>,
}

impl SimState {
    pub fn new(x0: Vec<f64>) -> Self {
        Self { t: 0, x: x0 }
    }

    pub fn legit(&self, n_legit: usize) -> &[f64] {
        &self.x[..n_legit]
    }
}

/// Advances one step. Legitimate agents update only for `t >= T_0 - 1`; before
/// that their values are carried over unchanged.
///
/// `malicious_values` are the values sent at step `t`, in malicious index order.
pub fn step(
    state: &SimState,
    rows: &WeightRows,
    malicious_values: &[f64],
    params: &ConsensusParams,
) -> Result<SimState, ConsensusError> {
    let nl = rows.rows.len();
    let expected = state.x.len() - nl;
    if malicious_values.len() != expected {
        return Err(ConsensusError::MaliciousCount {
            expected,
            got: malicious_values.len(),
        });
    }
    if let Some((k, &v)) = malicious_values
        .iter()
        .enumerate()
        .find(|(_, v)| v.abs() > params.eta)
    {
        return Err(ConsensusError::ValueOutOfBounds {
            agent: nl + k,
            value: v,
            eta: params.eta,
        });
    }
    let mut current = state.x.clone();
    current[nl..].copy_from_slice(malicious_values);
    let mut next = current.clone();
    if state.t + 1 >= params.t0 {
        for (i, row) in rows.rows.iter().enumerate() {
            next[i] = row.self_weight * current[i]
                + row
                    .neighbors
                    .iter()
                    .map(|&(j, w)| w * current[j])
                    .sum::<f64>();
        }
    }
    Ok(SimState {
        t: state.t + 1,
        x: next,
    })
}

/// One active step of recorded history: `W_L(k)`, `W_M(k)`, `x_M(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub w_l: DMatrix<f64>,
    pub w_m: DMatrix<f64>,
    pub x_m: DVector<f64>,
}

/// Splits `x_L(T_0, t)` into `x~_L = (prod_k W_L(k)) x_L(0)` and
/// `phi_M = sum_k (prod_{l>k} W_L(l)) W_M(k) x_M(k)`, with `k` running over
/// `T_0 - 1 ..= t - 1` and products taken backward (latest factor on the left).
///
/// `history[n]` holds step `k = T_0 - 1 + n`.
pub fn decompose(
    history: &[StepRecord],
    x0_legit: &DVector<f64>,
    t0: u64,
    t: u64,
) -> Result<(DVector<f64>, DVector<f64>), ConsensusError> {
    if t < t0 {
        return Err(ConsensusError::History(format!("t = {t} precedes T_0 = {t0}")));
    }
    let needed = (t - t0 + 1) as usize;
    if history.len() < needed {
        return Err(ConsensusError::History(format!(
            "need {needed} recorded steps for t = {t}, have {}",
            history.len()
        )));
    }
    let nl = x0_legit.len();
    let mut x_tilde = x0_legit.clone();
    let mut phi = DVector::zeros(nl);
    for rec in &history[..needed] {
        if rec.w_l.nrows() != nl || rec.w_m.ncols() != rec.x_m.len() {
            return Err(ConsensusError::History("matrix shapes disagree".into()));
        }
        // Applying W_L(k) to both running terms realizes the backward product.
        x_tilde = &rec.w_l * x_tilde;
        phi = &rec.w_l * phi + &rec.w_m * &rec.x_m;
    }
    Ok((x_tilde, phi))
}

/// `max_i |x_i - nominal|`.
pub fn max_deviation(x_legit: &[f64], nominal_value: f64) -> f64 {
    x_legit
        .iter()
        .map(|x| (x - nominal_value).abs())
        .fold(0.0, f64::max)
}

/// `max_i x_i - min_i x_i`.
pub fn spread(x_legit: &[f64]) -> f64 {
    let (lo, hi) = x_legit
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if x_legit.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
