//! Stochastic trust observations and the aggregate trust ledger.
//!
//! A legitimate agent `i` observes `alpha_ij(t) in [0, 1]` for every neighbor
//! `j` at every step and keeps `beta_ij(t) = sum_{k<=t} (alpha_ij(k) - 1/2)`.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::graph::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("legitimate support [{0}, {1}] is not a sub-interval of [0, 1]")]
    BadSupport(f64, f64),
    #[error("malicious expectation c = {0} outside [0, 1]")]
    BadExpectation(f64),
    #[error("attack probability p = {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("{c} expectations but {p} attack probabilities")]
    LengthMismatch { c: usize, p: usize },
    #[error("no observation for registered link ({0}, {1})")]
    MissingObservation(usize, usize),
    #[error("observation for unregistered link ({0}, {1})")]
    UnknownLink(usize, usize),
    #[error("expected {expected} observations, got {got}")]
    ObservationCount { expected: usize, got: usize },
}

/// Per-link observation distributions.
///
/// Legitimate transmissions draw from `U[a_L, b_L]` (mean `d`). An attacked
/// transmission from malicious agent `m` draws from a uniform with mean `c_m`:
/// `U[2 c_m - 1, 1]` when that interval lies in `[0, 1]`, otherwise `U[0, 2 c_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustModel {
    n_legit: usize,
    legit_support: (f64, f64),
    c: Vec<f64>,
    p: Vec<f64>,
}

impl TrustModel {
    /// `c[k]` and `p[k]` describe malicious agent `n_legit + k`.
    pub fn new(
        n_legit: usize,
        legit_support: (f64, f64),
        c: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self, TrustError> {
        let (lo, hi) = legit_support;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(TrustError::BadSupport(lo, hi));
        }
        if c.len() != p.len() {
            return Err(TrustError::LengthMismatch {
                c: c.len(),
                p: p.len(),
            });
        }
        if let Some(&bad) = c.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(TrustError::BadExpectation(bad));
        }
        if let Some(&bad) = p.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(TrustError::BadProbability(bad));
        }
        Ok(Self {
            n_legit,
            legit_support,
            c,
            p,
        })
    }

    /// Same attack probability for every malicious agent.
    pub fn uniform(
        n_legit: usize,
        legit_support: (f64, f64),
        c: Vec<f64>,
        p: f64,
    ) -> Result<Self, TrustError> {
        let p = vec![p; c.len()];
        Self::new(n_legit, legit_support, c, p)
    }

    /// Legitimate expectation `d`.
    pub fn d(&self) -> f64 {
        0.5 * (self.legit_support.0 + self.legit_support.1)
    }

    pub fn legit_support(&self) -> (f64, f64) {
        self.legit_support
    }

    pub fn n_malicious(&self) -> usize {
        self.c.len()
    }

    pub fn is_malicious(&self, agent: usize) -> bool {
        agent >= self.n_legit && agent - self.n_legit < self.c.len()
    }

    /// Configured attacked-step expectation `c_m`.
    ///
    /// Panics if `m` is not a malicious agent of this model.
    pub fn c(&self, m: usize) -> f64 {
        self.c[m - self.n_legit]
    }

    pub fn p(&self, m: usize) -> f64 {
        self.p[m - self.n_legit]
    }

    pub fn c_values(&self) -> &[f64] {
        &self.c
    }

    pub fn p_values(&self) -> &[f64] {
        &self.p
    }

    /// Support of the attacked-step distribution; its midpoint is `c_m`.
    pub fn attacked_support(&self, m: usize) -> (f64, f64) {
        attacked_support(self.c(m))
    }

    /// Per-step expectation of `alpha_im` under the intermittent mixture.
    pub fn mixture_expectation(&self, m: usize) -> f64 {
        mixture_mean(self.p(m), self.c(m), self.d())
    }

    /// `min_m (d - E[alpha_im])`, or `None` without malicious agents.
    pub fn effective_lambda(&self) -> Option<f64> {
        let d = self.d();
        self.malicious_agents()
            .map(|m| d - self.mixture_expectation(m))
            .reduce(f64::min)
    }

    /// `min_m (d - c_m)`, or `None` without malicious agents.
    pub fn configured_lambda(&self) -> Option<f64> {
        let d = self.d();
        self.c.iter().map(|c| d - c).reduce(f64::min)
    }

    fn malicious_agents(&self) -> impl Iterator<Item = usize> + '_ {
        self.n_legit..self.n_legit + self.c.len()
    }
}

/// Uniform support with mean `c` used on attacked steps.
pub fn attacked_support(c: f64) -> (f64, f64) {
    let lo = 2.0 * c - 1.0;
    if lo >= 0.0 {
        (lo, 1.0)
    } else {
        (0.0, 2.0 * c)
    }
}

/// `p * c + (1 - p) * d`.
pub fn mixture_mean(p: f64, c: f64, d: f64) -> f64 {
    p * c + (1.0 - p) * d
}

/// Draws one trust observation about neighbor `j`. `attacked` is ignored for
/// legitimate neighbors.
pub fn sample_alpha<R: Rng + ?Sized>(rng: &mut R, model: &TrustModel, j: usize, attacked: bool) -> f64 {
    let (lo, hi) = if attacked && model.is_malicious(j) {
        model.attacked_support(j)
    } else {
        model.legit_support
    };
    lo + (hi - lo) * rng.random::<f64>()
}

/// Running aggregates `beta_ij(t)` for every (legitimate agent, neighbor) link.
///
/// Links are stored in canonical order: legitimate `i` ascending, then
/// neighbor `j` ascending. Observation slices passed to [`TrustLedger::update`]
/// must follow the same order as [`TrustLedger::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrustLedger {
    links: Vec<(usize, usize)>,
    targets: Vec<usize>,
    row_start: Vec<usize>,
    beta: Vec<f64>,
    t_observed: u64,
}

impl TrustLedger {
    pub fn new(topology: &Topology) -> Self {
        let mut links = Vec::new();
        let mut row_start = Vec::with_capacity(topology.n_legit() + 1);
        for i in topology.legitimate() {
            row_start.push(links.len());
            links.extend(topology.neighbors(i).iter().map(|&j| (i, j)));
        }
        row_start.push(links.len());
        let beta = vec![0.0; links.len()];
        let targets = links.iter().map(|&(_, j)| j).collect();
        Self {
            links,
            targets,
            row_start,
            beta,
            t_observed: 0,
        }
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn n_legit(&self) -> usize {
        self.row_start.len() - 1
    }

    /// Number of global steps folded into the ledger so far.
    pub fn t_observed(&self) -> u64 {
        self.t_observed
    }

    pub fn beta(&self, i: usize, j: usize) -> Option<f64> {
        if i >= self.n_legit() {
            return None;
        }
        let range = self.row_start[i]..self.row_start[i + 1];
        self.targets[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.beta[range.start + k])
    }

    /// Neighbor indices and their aggregates for legitimate agent `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_start[i]..self.row_start[i + 1];
        (&self.targets[range.clone()], &self.beta[range])
    }

    /// Folds one global step of observations, aligned with [`Self::links`].
    pub fn update(&mut self, observations: &[f64]) -> Result<(), TrustError> {
        if observations.len() != self.links.len() {
            return Err(TrustError::ObservationCount {
                expected: self.links.len(),
                got: observations.len(),
            });
        }
        for (b, a) in self.beta.iter_mut().zip(observations) {
            *b += a - 0.5;
        }
        self.t_observed += 1;
        Ok(())
    }

    /// Map-keyed variant of [`Self::update`]; every registered link must be present.
    pub fn update_map(&mut self, observations: &BTreeMap<(usize, usize), f64>) -> Result<(), TrustError> {
        if let Some(&(i, j)) = observations.keys().find(|k| self.links.binary_search(k).is_err()) {
            return Err(TrustError::UnknownLink(i, j));
        }
        let ordered = self
            .links
            .iter()
            .map(|link| {
                observations
                    .get(link)
                    .copied()
                    .ok_or(TrustError::MissingObservation(link.0, link.1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.update(&ordered)
    }
}
