//! Trusted neighborhood learning with a time-varying tolerance.
//!
//! Each legitimate agent takes its most trusted neighbor as the reference and
//! keeps every neighbor whose aggregate trust is within `xi * (t + 1)^gamma`
//! of it.

use thiserror::Error;

use crate::graph::Topology;
use crate::trust::TrustLedger;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("threshold scale xi must be positive, got {0}")]
    BadXi(f64),
    #[error("threshold exponent gamma must lie in (0.5, 1), got {0}")]
    BadGamma(f64),
    #[error("agent {0} has no neighbors to choose from")]
    EmptyNeighborhood(usize),
    #[error("{neighbors} neighbors but {betas} trust aggregates")]
    RowMismatch { neighbors: usize, betas: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    xi: f64,
    gamma: f64,
}

impl DetectionParams {
    pub fn new(xi: f64, gamma: f64) -> Result<Self, DetectionError> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(DetectionError::BadXi(xi));
        }
        if !(gamma > 0.5 && gamma < 1.0) {
            return Err(DetectionError::BadGamma(gamma));
        }
        Ok(Self { xi, gamma })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Tolerance `xi_t = xi * (t + 1)^gamma`.
    pub fn threshold_at(&self, t: u64) -> f64 {
        self.xi * ((t + 1) as f64).powf(self.gamma)
    }
}

/// One agent's trusted neighbors at a step, plus its reference neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustedSet {
    /// Sorted ascending.
    pub members: Vec<usize>,
    pub reference: usize,
}

impl TrustedSet {
    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }
}

/// Keeps every neighbor `j` with `max_k beta_k - beta_j <= tolerance`.
///
/// `neighbors` must be sorted ascending; ties for the maximum go to the
/// lowest index.
pub fn trusted_within(
    neighbors: &[usize],
    betas: &[f64],
    tolerance: f64,
) -> Result<(Vec<usize>, usize), DetectionError> {
    if neighbors.len() != betas.len() {
        return Err(DetectionError::RowMismatch {
            neighbors: neighbors.len(),
            betas: betas.len(),
        });
    }
    let mut best = *betas.first().ok_or(DetectionError::EmptyNeighborhood(usize::MAX))?;
    let mut reference = neighbors[0];
    for (&j, &b) in neighbors.iter().zip(betas).skip(1) {
        if b > best {
            best = b;
            reference = j;
        }
    }
    let members = neighbors
        .iter()
        .zip(betas)
        .filter(|&(_, &b)| best - b <= tolerance)
        .map(|(&j, _)| j)
        .collect();
    Ok((members, reference))
}

/// Trusted set of one agent at step `t` from its row of aggregates.
pub fn trusted_neighborhood(
    neighbors: &[usize],
    betas: &[f64],
    params: &DetectionParams,
    t: u64,
) -> Result<TrustedSet, DetectionError> {
    let (members, reference) = trusted_within(neighbors, betas, params.threshold_at(t))?;
    Ok(TrustedSet { members, reference })
}

/// Trusted neighborhoods `N_i(t)` of every legitimate agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustedNeighborhood {
    pub t: u64,
    /// Indexed by legitimate agent.
    pub sets: Vec<TrustedSet>,
}

impl TrustedNeighborhood {
    pub fn set(&self, i: usize) -> &TrustedSet {
        &self.sets[i]
    }
}

/// Runs detection for every legitimate agent against the ledger at step `t`.
pub fn detect(
    ledger: &TrustLedger,
    params: &DetectionParams,
    t: u64,
) -> Result<TrustedNeighborhood, DetectionError> {
    let tolerance = params.threshold_at(t);
    let sets = (0..ledger.n_legit())
        .map(|i| {
            let (neighbors, betas) = ledger.row(i);
            trusted_within(neighbors, betas, tolerance)
                .map(|(members, reference)| TrustedSet { members, reference })
                .map_err(|e| match e {
                    DetectionError::EmptyNeighborhood(_) => DetectionError::EmptyNeighborhood(i),
                    other => other,
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(TrustedNeighborhood { t, sets })
}

/// Ground-truth classification error totals over all legitimate agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassificationErrors {
    /// Legitimate neighbors left out of `N_i(t)`.
    pub legit_excluded: usize,
    /// Malicious neighbors admitted into `N_i(t)`.
    pub malicious_included: usize,
}

impl ClassificationErrors {
    pub fn is_clean(&self) -> bool {
        self.legit_excluded == 0 && self.malicious_included == 0
    }
}

pub fn classify_errors(truth: &Topology, neigh: &TrustedNeighborhood) -> ClassificationErrors {
    let mut errors = ClassificationErrors::default();
    for (i, set) in neigh.sets.iter().enumerate() {
        errors.legit_excluded += truth.legit_neighbors(i).filter(|&l| !set.contains(l)).count();
        errors.malicious_included += truth.malicious_neighbors(i).filter(|&m| set.contains(m)).count();
    }
    errors
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parameter_validation() {
        assert!(DetectionParams::new(0.0, 0.7).is_err());
        assert!(DetectionParams::new(0.15, 0.5).is_err());
        assert!(DetectionParams::new(0.15, 1.0).is_err());
        assert!(DetectionParams::new(0.15, 0.7).is_ok());
    }

    #[test]
    fn threshold_values() {
        let p = DetectionParams::new(0.15, 0.7).unwrap();
        assert_abs_diff_eq!(p.threshold_at(0), 0.15, epsilon = 1e-15);
        // golden value from 50-digit arithmetic
        assert_abs_diff_eq!(p.threshold_at(63), 2.756_876_051_992_884, epsilon = 1e-13);
        let q = DetectionParams::new(1.0, 0.75).unwrap();
        assert_abs_diff_eq!(q.threshold_at(3), 2.0 * 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn direct_thresholding() {
        let (set, r) = trusted_within(&[1, 2, 3], &[5.0, 4.9, 2.0], 1.0).unwrap();
        assert_eq!((set, r), (vec![1, 2], 1));
        let (set, r) = trusted_within(&[1, 2], &[3.0, 3.0], 0.0).unwrap();
        assert_eq!((set, r), (vec![1, 2], 1));
        let (set, r) = trusted_within(&[1, 2], &[0.0, -0.2], 0.15).unwrap();
        assert_eq!((set, r), (vec![1], 1));
    }

    #[test]
    fn empty_row_is_an_error() {
        assert!(matches!(
            trusted_within(&[], &[], 1.0),
            Err(DetectionError::EmptyNeighborhood(_))
        ));
        let ledger = TrustLedger::new(&Topology::new(2, 0, &[]).unwrap());
        let p = DetectionParams::new(0.15, 0.7).unwrap();
        assert_eq!(detect(&ledger, &p, 0), Err(DetectionError::EmptyNeighborhood(0)));
    }

    #[test]
    fn classification_counts() {
        // 0-1-2 legitimate path, malicious 3 attached to 0 and 2.
        let t = Topology::new(3, 1, &[(0, 1), (1, 2), (0, 3), (2, 3)]).unwrap();
        let perfect = TrustedNeighborhood {
            t: 0,
            sets: vec![
                TrustedSet { members: vec![1], reference: 1 },
                TrustedSet { members: vec![0, 2], reference: 0 },
                TrustedSet { members: vec![1], reference: 1 },
            ],
        };
        assert!(classify_errors(&t, &perfect).is_clean());

        let mut one_bad = perfect.clone();
        one_bad.sets[0].members = vec![1, 3];
        assert_eq!(
            classify_errors(&t, &one_bad),
            ClassificationErrors { legit_excluded: 0, malicious_included: 1 }
        );
    }

    #[test]
    fn hand_set_fixture_matches_enumeration() {
        // 4 agents: 0,1,2 legitimate in a triangle, 3 malicious linked to 0 and 1.
        let t = Topology::new(3, 1, &[(0, 1), (0, 2), (1, 2), (0, 3), (1, 3)]).unwrap();
        let mut ledger = TrustLedger::new(&t);
        // links: (0,1) (0,2) (0,3) (1,0) (1,2) (1,3) (2,0) (2,1)
        let alphas = [0.9, 0.6, 0.85, 0.7, 0.2, 0.75, 0.8, 0.4];
        ledger.update(&alphas).unwrap();
        let tol = 0.2;
        let p = DetectionParams::new(tol, 0.7).unwrap();
        let neigh = detect(&ledger, &p, 0).unwrap();

        // brute force: j is excluded iff some other neighbor beats it by more than tol
        let mut expected = ClassificationErrors::default();
        for i in 0..3 {
            let row: Vec<(usize, f64)> = t
                .neighbors(i)
                .iter()
                .map(|&j| (j, ledger.beta(i, j).unwrap()))
                .collect();
            for &(j, bj) in &row {
                let kept = row.iter().all(|&(_, bk)| bk - bj <= tol);
                match (t.is_legit(j), kept) {
                    (true, false) => expected.legit_excluded += 1,
                    (false, true) => expected.malicious_included += 1,
                    _ => {}
                }
            }
        }
        // agent 0: 0.4, 0.1, 0.35 -> excludes 2, keeps 3; agent 1: 0.2, -0.3, 0.25 -> excludes 2, keeps 3
        // agent 2: 0.3, -0.1 -> excludes 1
        assert_eq!(expected, ClassificationErrors { legit_excluded: 3, malicious_included: 2 });
        assert_eq!(classify_errors(&t, &neigh), expected);
    }
}
