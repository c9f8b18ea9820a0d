//! Monte Carlo batches, their summary, and the empirical check of the
//! per-step bounds.

use rayon::prelude::*;

use super::trial::{run_trial, ExperimentSetup, TrialResult};
use super::HarnessError;
use crate::bounds::{self, BoundParams};
use crate::graph::Topology;

/// Runs trials `0..trials` on a pool of `jobs` threads (all cores when `None`).
/// Results come back in trial order regardless of scheduling.
pub fn run_batch(setup: &ExperimentSetup, jobs: Option<usize>) -> Result<Vec<TrialResult>, HarnessError> {
    run_trials(setup, 0..setup.config.trials, jobs)
}

pub fn run_trials(
    setup: &ExperimentSetup,
    trials: std::ops::Range<usize>,
    jobs: Option<usize>,
) -> Result<Vec<TrialResult>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Setup(format!("thread pool: {e}")))?;
    pool.install(|| {
        trials
            .into_par_iter()
            .map(|k| {
                run_trial(setup, k).map_err(|e| HarnessError::Trial {
                    index: k,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub trials: usize,
    pub mean_deviation: Vec<f64>,
    pub p20_deviation: Vec<f64>,
    pub p80_deviation: Vec<f64>,
    /// Excluded legitimate neighbors per legitimate pair, averaged over trials.
    pub legit_rate: Vec<f64>,
    /// Included malicious neighbors per malicious pair, averaged over trials.
    pub mal_rate: Vec<f64>,
    pub legit_pairs: usize,
    pub mal_pairs: usize,
    pub convergence_rate: f64,
    pub mean_final_deviation: f64,
    pub max_final_spread: f64,
    pub tf_reached: usize,
    pub mean_empirical_tf: Option<f64>,
    pub max_empirical_tf: Option<u64>,
    /// `Delta_max(T_0, delta)` when `T_0` is admissible.
    pub delta_max: Option<f64>,
    /// Fraction of trials whose deviation at `T_max` exceeds `delta_max`.
    pub exceedance: Option<f64>,
    pub max_row_sum_error: f64,
    pub max_abs_legit: f64,
    pub max_decomposition_error: Option<f64>,
}

pub fn summarize(results: &[TrialResult], setup: &ExperimentSetup, delta_max: Option<f64>) -> BatchSummary {
    let n = results.len();
    let steps = results.first().map_or(0, |r| r.deviation.len());
    let (legit_pairs, mal_pairs) = setup.pair_counts();
    let rate = |count: usize, pairs: usize| if pairs == 0 { 0.0 } else { count as f64 / pairs as f64 };

    let mut mean_deviation = Vec::with_capacity(steps);
    let mut p20 = Vec::with_capacity(steps);
    let mut p80 = Vec::with_capacity(steps);
    let mut legit_rate = Vec::with_capacity(steps);
    let mut mal_rate = Vec::with_capacity(steps);
    let mut column = vec![0.0; n];
    for t in 0..steps {
        for (slot, r) in column.iter_mut().zip(results) {
            *slot = r.deviation[t];
        }
        mean_deviation.push(column.iter().sum::<f64>() / n as f64);
        column.sort_by(f64::total_cmp);
        p20.push(quantile(&column, 0.2));
        p80.push(quantile(&column, 0.8));
        let (le, mi) = results.iter().fold((0, 0), |(a, b), r| {
            let e = r.misclassified[t];
            (a + e.legit_excluded, b + e.malicious_included)
        });
        legit_rate.push(rate(le, legit_pairs * n));
        mal_rate.push(rate(mi, mal_pairs * n));
    }

    let tfs: Vec<u64> = results.iter().filter_map(|r| r.empirical_tf).collect();
    let decomposition = results.iter().filter_map(|r| r.decomposition_error).reduce(f64::max);
    BatchSummary {
        trials: n,
        mean_deviation,
        p20_deviation: p20,
        p80_deviation: p80,
        legit_rate,
        mal_rate,
        legit_pairs,
        mal_pairs,
        convergence_rate: results.iter().filter(|r| r.converged).count() as f64 / n as f64,
        mean_final_deviation: results.iter().map(|r| r.final_deviation).sum::<f64>() / n as f64,
        max_final_spread: results.iter().map(|r| r.final_spread).fold(0.0, f64::max),
        tf_reached: tfs.len(),
        mean_empirical_tf: (!tfs.is_empty()).then(|| tfs.iter().sum::<u64>() as f64 / tfs.len() as f64),
        max_empirical_tf: tfs.iter().copied().max(),
        delta_max,
        exceedance: delta_max.map(|d| results.iter().filter(|r| r.final_deviation > d).count() as f64 / n as f64),
        max_row_sum_error: results.iter().map(|r| r.max_row_sum_error).fold(0.0, f64::max),
        max_abs_legit: results.iter().map(|r| r.max_abs_legit).fold(0.0, f64::max),
        max_decomposition_error: decomposition,
    }
}

/// Empirical misclassification frequency against the per-step bounds at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub t: u64,
    pub legit_freq: f64,
    pub legit_n: usize,
    pub legit_stderr: f64,
    /// Legitimate-neighbor bound averaged over (agent, legitimate neighbor) pairs.
    pub legit_bound: f64,
    pub legit_dominated: bool,
    pub mal_freq: f64,
    pub mal_n: usize,
    pub mal_stderr: f64,
    pub mal_bound: f64,
    pub mal_valid: bool,
    pub mal_dominated: bool,
}

impl ComparisonRow {
    pub fn dominated(&self) -> bool {
        self.legit_dominated && self.mal_dominated
    }
}

fn binomial_stderr(f: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (f * (1.0 - f) / n as f64).sqrt()
    }
}

/// Frequencies aggregate every (legitimate agent, neighbor) pair of the relevant
/// class over all trials. A bound dominates when `freq <= bound + 3 stderr`.
pub fn empirical_vs_bounds(
    results: &[TrialResult],
    topology: &Topology,
    params: &BoundParams,
    t_values: &[u64],
) -> Vec<ComparisonRow> {
    let trials = results.len();
    let mut per_pair_legit = Vec::new();
    let mut mal_pairs = 0;
    for i in topology.legitimate() {
        let sizes = topology.neighbor_counts(i);
        per_pair_legit.push((sizes, sizes.0));
        mal_pairs += sizes.1;
    }
    let legit_pairs: usize = per_pair_legit.iter().map(|&(_, k)| k).sum();

    t_values
        .iter()
        .copied()
        .filter(|&t| results.iter().all(|r| (t as usize) < r.misclassified.len()))
        .map(|t| {
            let (le, mi) = results.iter().fold((0, 0), |(a, b), r| {
                let e = r.misclassified[t as usize];
                (a + e.legit_excluded, b + e.malicious_included)
            });
            let legit_n = legit_pairs * trials;
            let mal_n = mal_pairs * trials;
            let legit_freq = if legit_n == 0 { 0.0 } else { le as f64 / legit_n as f64 };
            let mal_freq = if mal_n == 0 { 0.0 } else { mi as f64 / mal_n as f64 };
            let legit_bound = if legit_pairs == 0 {
                1.0
            } else {
                per_pair_legit
                    .iter()
                    .map(|&(sizes, k)| k as f64 * bounds::misclassify_legit_bound(params, sizes, t).probability())
                    .sum::<f64>()
                    / legit_pairs as f64
            };
            let mal = bounds::misclassify_mal_bound(params, t);
            let legit_stderr = binomial_stderr(legit_freq, legit_n);
            let mal_stderr = binomial_stderr(mal_freq, mal_n);
            ComparisonRow {
                t,
                legit_freq,
                legit_n,
                legit_stderr,
                legit_bound,
                legit_dominated: legit_freq <= legit_bound + 3.0 * legit_stderr,
                mal_freq,
                mal_n,
                mal_stderr,
                mal_bound: mal.probability(),
                mal_valid: mal.valid,
                mal_dominated: mal_freq <= mal.probability() + 3.0 * mal_stderr,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::ClassificationErrors;
    use crate::harness::config::{ConfigMap, ExperimentConfig};

    fn setup(trials: usize) -> ExperimentSetup {
        let mut map = ConfigMap::defaults();
        for kv in [
            "topology.n_legit=4",
            "topology.n_malicious=2",
            "topology.extra_legit_edges=1",
            "consensus.t0=10",
            "run.horizon=120",
        ] {
            map.apply_override(kv).unwrap();
        }
        map.apply_override(&format!("run.trials={trials}")).unwrap();
        ExperimentSetup::new(ExperimentConfig::from_map(&map).unwrap()).unwrap()
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.2) - 1.8).abs() < 1e-15);
        assert!((quantile(&v, 0.8) - 4.2).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn singleton_summary_equals_trial() {
        let s = setup(1);
        let results = run_batch(&s, Some(1)).unwrap();
        let sum = summarize(&results, &s, None);
        let r = &results[0];
        assert_eq!(sum.mean_deviation, r.deviation);
        assert_eq!(sum.p20_deviation, r.deviation);
        assert_eq!(sum.p80_deviation, r.deviation);
        assert_eq!(sum.mean_final_deviation, r.final_deviation);
        assert_eq!(sum.convergence_rate, if r.converged { 1.0 } else { 0.0 });
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let s = setup(6);
        let a = run_batch(&s, Some(1)).unwrap();
        let b = run_batch(&s, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(summarize(&a, &s, Some(1.0)), summarize(&b, &s, Some(1.0)));
    }

    #[test]
    fn zero_frequencies_dominate() {
        let s = setup(2);
        let mut results = run_batch(&s, Some(1)).unwrap();
        for r in &mut results {
            r.misclassified.iter_mut().for_each(|e| *e = ClassificationErrors::default());
        }
        let params = s.bound_params().unwrap();
        let rows = empirical_vs_bounds(&results, &s.topology, &params, &[0, 50, 100, 5000]);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(ComparisonRow::dominated));
        // t = 0 sits in the vacuous region
        assert_eq!(rows[0].legit_bound, 1.0);
        assert_eq!(rows[0].mal_bound, 1.0);
    }
}
