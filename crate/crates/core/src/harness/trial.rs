//! Fixed experiment setup and the single-trial pipeline.

use nalgebra::DVector;
use rand::Rng;

use super::config::{ExperimentConfig, TopologySource};
use super::seed::{self, stream_rng};
use super::HarnessError;
use crate::attack::{self, AttackConfig, Emission, MaliciousState};
use crate::bounds::BoundParams;
use crate::consensus::{self, ConsensusParams, NominalMatrix, SimState, StepRecord};
use crate::detection::{self, ClassificationErrors, DetectionParams};
use crate::graph::{self, check_assumptions, AssumptionReport, Topology};
use crate::trust::{sample_alpha, TrustLedger, TrustModel};

/// Builds the topology and trust model without judging the assumptions.
pub fn build_model(cfg: &ExperimentConfig) -> Result<(Topology, TrustModel), HarnessError> {
    let topology = match &cfg.topology {
        TopologySource::Generated {
            n_legit,
            n_malicious,
            extra_legit_edges,
            malicious_edge_prob,
        } => graph::generate_topology(
            &mut stream_rng(cfg.seed, seed::TOPOLOGY, 0),
            *n_legit,
            *n_malicious,
            *extra_legit_edges,
            *malicious_edge_prob,
        )?,
        TopologySource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            Topology::from_edge_list(&text)?
        }
    };
    let nm = topology.n_malicious();
    let c = match &cfg.c_values {
        Some(c) if c.len() == nm => c.clone(),
        Some(c) => {
            return Err(HarnessError::Setup(format!(
                "trust.c_values has {} entries for {nm} malicious agents",
                c.len()
            )))
        }
        None => {
            let mut rng = stream_rng(cfg.seed, seed::EXPECTATIONS, 0);
            let (lo, hi) = cfg.c_range;
            (0..nm).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
        }
    };
    let p = match cfg.p.len() {
        1 => vec![cfg.p[0]; nm],
        n if n == nm => cfg.p.clone(),
        n => {
            return Err(HarnessError::Setup(format!(
                "trust.p has {n} entries for {nm} malicious agents"
            )))
        }
    };
    let model = TrustModel::new(topology.n_legit(), cfg.legit_support, c, p)?;
    Ok((topology, model))
}

/// Everything held fixed across trials.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub config: ExperimentConfig,
    pub topology: Topology,
    pub model: TrustModel,
    pub report: AssumptionReport,
    pub detection: DetectionParams,
    pub consensus: ConsensusParams,
    pub nominal: NominalMatrix,
    pub nominal_value: f64,
    pub attack: AttackConfig,
    pub x0: Vec<f64>,
}

impl ExperimentSetup {
    /// Fails with [`HarnessError::Assumption`] when the topology/model pair
    /// violates the standing assumptions.
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        let (topology, model) = build_model(&config)?;
        let report = check_assumptions(&topology, &model);
        if !report.holds() {
            return Err(HarnessError::Assumption(Box::new(report)));
        }
        let detection = DetectionParams::new(config.xi, config.gamma)?;
        let consensus = ConsensusParams::new(config.kappa, config.eta, config.t0)?;
        let nominal = consensus::nominal_matrix(&topology, &consensus)?;
        let n = topology.n_agents();
        let x0 = match &config.init_values {
            Some(v) if v.len() == n => v.clone(),
            Some(v) => {
                return Err(HarnessError::Setup(format!(
                    "init.values has {} entries for {n} agents",
                    v.len()
                )))
            }
            None => {
                let mut rng = stream_rng(config.seed, seed::INITIAL, 0);
                let (lo, hi) = config.init_range;
                (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
        };
        let nominal_value = nominal.nominal_value(&x0[..topology.n_legit()]);
        let attack = AttackConfig::new(config.attack, model.p_values().to_vec(), nominal_value)?;
        Ok(Self {
            config,
            topology,
            model,
            report,
            detection,
            consensus,
            nominal,
            nominal_value,
            attack,
            x0,
        })
    }

    /// `lambda` for the bounds: the mixture gap, or 1 without malicious agents.
    pub fn effective_lambda(&self) -> f64 {
        self.report.lambda.unwrap_or(1.0).min(1.0)
    }

    pub fn bound_params(&self) -> Result<BoundParams, HarnessError> {
        Ok(BoundParams::new(
            self.config.xi,
            self.config.gamma,
            self.effective_lambda(),
            self.topology.n_legit(),
            self.topology.n_malicious(),
            self.config.kappa,
            self.config.eta,
            self.config.delta,
        )?)
    }

    /// `(|N^L|, |N^M|)` of the legitimate agent with the most neighbors.
    pub fn largest_neighborhood(&self) -> (usize, usize) {
        self.topology
            .legitimate()
            .map(|i| self.topology.neighbor_counts(i))
            .max_by_key(|&(l, m)| (l + m, l))
            .unwrap_or((0, 0))
    }

    /// Total (legitimate, malicious) neighbor pairs over legitimate agents.
    pub fn pair_counts(&self) -> (usize, usize) {
        self.topology
            .legitimate()
            .map(|i| self.topology.neighbor_counts(i))
            .fold((0, 0), |(a, b), (l, m)| (a + l, b + m))
    }
}

/// Optional per-trial logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOptions {
    pub trajectory: bool,
    pub attack_log: bool,
    pub sample_log: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub t: u64,
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub attacked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// `max_i |x_i(t) - nominal|` for `t = 0..=T_max`.
    pub deviation: Vec<f64>,
    /// Classification errors of the neighborhoods detected at each step.
    pub misclassified: Vec<ClassificationErrors>,
    pub empirical_tf: Option<u64>,
    pub final_spread: f64,
    pub final_deviation: f64,
    pub final_mean: f64,
    pub converged: bool,
    pub max_row_sum_error: f64,
    pub max_abs_legit: f64,
    /// Largest `||x_L - (x~_L + phi_M)||_inf` over the retained history window.
    pub decomposition_error: Option<f64>,
    /// Per step, legitimate values followed by the values malicious agents sent.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub attacks: Option<Vec<Emission>>,
    pub samples: Option<Vec<SampleRecord>>,
}

/// First step from which every later step is free of classification errors.
pub fn empirical_tf(errors: &[ClassificationErrors]) -> Option<u64> {
    if !errors.last()?.is_clean() {
        return None;
    }
    let dirty = errors.iter().rposition(|e| !e.is_clean());
    Some(dirty.map_or(0, |k| k as u64 + 1))
}

pub fn run_trial(setup: &ExperimentSetup, trial: usize) -> Result<TrialResult, HarnessError> {
    run_trial_with(setup, trial, TrialOptions::default())
}

/// Per step `t = 0..=T_max`: attack flags and values, trust samples on every
/// ledger link, ledger update, detection, classification, weights, and for
/// `t < T_max` the consensus step to `x(t + 1)`.
pub fn run_trial_with(setup: &ExperimentSetup, trial: usize, opts: TrialOptions) -> Result<TrialResult, HarnessError> {
    let cfg = &setup.config;
    let topo = &setup.topology;
    let nl = topo.n_legit();
    let horizon = cfg.horizon;
    let t0 = cfg.t0;

    let mut trust_rng = stream_rng(cfg.seed, seed::TRUST, trial as u64);
    let mut attack_rng = stream_rng(cfg.seed, seed::ATTACK, trial as u64);

    let mut ledger = TrustLedger::new(topo);
    let mut state = SimState::new(setup.x0.clone());
    let mut mstate = MaliciousState {
        x: setup.x0[nl..].to_vec(),
    };
    let mut alphas = vec![0.0; ledger.links().len()];

    let steps = horizon as usize + 1;
    let mut deviation = Vec::with_capacity(steps);
    let mut misclassified = Vec::with_capacity(steps);
    let mut max_row_sum_error = 0.0f64;
    let mut max_abs_legit = 0.0f64;
    let mut trajectory = opts.trajectory.then(|| Vec::with_capacity(steps));
    let mut attacks = opts.attack_log.then(|| Vec::with_capacity(steps));
    let mut samples = opts.sample_log.then(Vec::new);

    let window = cfg.history_window.min(horizon + 1 - t0);
    let mut history: Vec<StepRecord> = Vec::with_capacity(window as usize);
    let mut window_values: Vec<Vec<f64>> = Vec::with_capacity(window as usize);

    for t in 0..=horizon {
        let legit = &state.x[..nl];
        deviation.push(consensus::max_deviation(legit, setup.nominal_value));
        max_abs_legit = legit.iter().fold(max_abs_legit, |m, x| m.max(x.abs()));

        let emission = attack::emit(&setup.attack, &mstate, &mut attack_rng, cfg.eta);

        for (slot, &(i, j)) in alphas.iter_mut().zip(ledger.links()) {
            let attacked = topo.is_malicious(j) && emission.attacked[j - nl];
            *slot = sample_alpha(&mut trust_rng, &setup.model, j, attacked);
            if let Some(log) = samples.as_mut() {
                log.push(SampleRecord {
                    t,
                    i,
                    j,
                    alpha: *slot,
                    attacked,
                });
            }
        }
        ledger.update(&alphas)?;
        debug_assert_eq!(ledger.t_observed(), t + 1);

        let neigh = detection::detect(&ledger, &setup.detection, t)?;
        misclassified.push(detection::classify_errors(topo, &neigh));
        let rows = consensus::build_weight_rows(&neigh, &setup.consensus);
        max_row_sum_error = max_row_sum_error.max(rows.max_row_sum_error());

        if let Some(tr) = trajectory.as_mut() {
            let mut snapshot = state.x[..nl].to_vec();
            snapshot.extend_from_slice(&emission.values);
            tr.push(snapshot);
        }

        if t < horizon {
            let active = t + 1 >= t0;
            if active && (history.len() as u64) < window {
                let (w_l, w_m) = rows.to_dense(topo);
                history.push(StepRecord {
                    w_l,
                    w_m,
                    x_m: DVector::from_column_slice(&emission.values),
                });
            }
            let next = consensus::step(&state, &rows, &emission.values, &setup.consensus)?;
            if active && cfg.attack == attack::AttackKind::IntermittentFailure {
                let mut network = state.x[..nl].to_vec();
                network.extend_from_slice(&emission.values);
                mstate = attack::update_internal(&mstate, &network, topo);
            }
            state = next;
            if active && (window_values.len() as u64) < window {
                window_values.push(state.x[..nl].to_vec());
            }
        }

        if let Some(log) = attacks.as_mut() {
            log.push(emission);
        }
    }

    let decomposition_error = if history.is_empty() {
        None
    } else {
        let x0_l = DVector::from_column_slice(&setup.x0[..nl]);
        let mut worst = 0.0f64;
        for (n, values) in window_values.iter().enumerate() {
            let t = t0 + n as u64;
            let (xt, phi) = consensus::decompose(&history, &x0_l, t0, t)?;
            for i in 0..nl {
                worst = worst.max((values[i] - (xt[i] + phi[i])).abs());
            }
        }
        Some(worst)
    };

    let legit = &state.x[..nl];
    let final_spread = consensus::spread(legit);
    let final_deviation = *deviation.last().expect("at least one step");
    Ok(TrialResult {
        trial,
        empirical_tf: empirical_tf(&misclassified),
        deviation,
        misclassified,
        final_spread,
        final_deviation,
        final_mean: legit.iter().sum::<f64>() / nl as f64,
        converged: final_spread < cfg.converge_tol,
        max_row_sum_error,
        max_abs_legit,
        decomposition_error,
        trajectory,
        attacks,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ConfigMap;

    fn small(extra: &[&str]) -> ExperimentConfig {
        let mut map = ConfigMap::defaults();
        for kv in [
            "topology.n_legit=4",
            "topology.n_malicious=2",
            "topology.extra_legit_edges=1",
            "consensus.t0=10",
            "run.horizon=200",
            "run.trials=4",
        ] {
            map.apply_override(kv).unwrap();
        }
        for kv in extra {
            map.apply_override(kv).unwrap();
        }
        ExperimentConfig::from_map(&map).unwrap()
    }

    #[test]
    fn tf_scan() {
        let clean = ClassificationErrors::default();
        let dirty = ClassificationErrors {
            legit_excluded: 1,
            malicious_included: 0,
        };
        assert_eq!(empirical_tf(&[clean, clean]), Some(0));
        assert_eq!(empirical_tf(&[dirty, clean, dirty, clean, clean]), Some(3));
        assert_eq!(empirical_tf(&[clean, dirty]), None);
        assert_eq!(empirical_tf(&[]), None);
    }

    #[test]
    fn deterministic_trial() {
        let setup = ExperimentSetup::new(small(&[])).unwrap();
        let opts = TrialOptions {
            trajectory: true,
            attack_log: true,
            sample_log: true,
        };
        let a = run_trial_with(&setup, 3, opts).unwrap();
        let b = run_trial_with(&setup, 3, opts).unwrap();
        assert_eq!(a, b);
        let c = run_trial_with(&setup, 4, opts).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn trial_shapes_and_invariants() {
        let setup = ExperimentSetup::new(small(&["attack.kind=intermittent"])).unwrap();
        let r = run_trial_with(
            &setup,
            0,
            TrialOptions {
                trajectory: true,
                attack_log: true,
                sample_log: false,
            },
        )
        .unwrap();
        assert_eq!(r.deviation.len(), 201);
        assert_eq!(r.misclassified.len(), 201);
        assert_eq!(r.trajectory.as_ref().unwrap().len(), 201);
        assert!(r.max_row_sum_error < 1e-12);
        assert!(r.max_abs_legit <= 4.0);
        assert!(r.decomposition_error.unwrap() < 1e-10);
        // frozen before the window closes
        let tr = r.trajectory.unwrap();
        for t in 0..10 {
            assert_eq!(&tr[t][..4], &setup.x0[..4]);
        }
        assert_ne!(&tr[11][..4], &setup.x0[..4]);
    }

    #[test]
    fn beta_matches_sample_log() {
        let setup = ExperimentSetup::new(small(&["run.horizon=40"])).unwrap();
        let r = run_trial_with(
            &setup,
            1,
            TrialOptions {
                sample_log: true,
                ..Default::default()
            },
        )
        .unwrap();
        let samples = r.samples.unwrap();
        // replay the ledger from the log
        let mut ledger = TrustLedger::new(&setup.topology);
        let per_step = ledger.links().len();
        for chunk in samples.chunks(per_step) {
            let alphas: Vec<f64> = chunk.iter().map(|s| s.alpha).collect();
            ledger.update(&alphas).unwrap();
        }
        for &(i, j) in ledger.links() {
            let direct: f64 = samples
                .iter()
                .filter(|s| s.i == i && s.j == j)
                .fold(0.0, |acc, s| acc + (s.alpha - 0.5));
            assert_eq!(ledger.beta(i, j).unwrap(), direct);
        }
        assert!(samples.iter().all(|s| (0.0..=1.0).contains(&s.alpha)));
        assert!(samples.iter().all(|s| !s.attacked || setup.topology.is_malicious(s.j)));
    }

    #[test]
    fn assumption_failure_is_reported() {
        let cfg = small(&["trust.c_values=0.1,0.7"]);
        assert!(matches!(ExperimentSetup::new(cfg), Err(HarnessError::Assumption(_))));
    }
}
