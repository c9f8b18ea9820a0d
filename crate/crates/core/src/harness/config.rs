//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, keys are dotted
//! (`consensus.t0 = 60`). Lists are comma separated. Later entries and
//! command-line overrides replace earlier ones.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::attack::AttackKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {msg}")]
    BadValue { key: String, value: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// `(key, default, description)`; an empty default means unset.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("topology.n_legit", "10", "number of legitimate agents"),
    ("topology.n_malicious", "15", "number of malicious agents"),
    ("topology.extra_legit_edges", "10", "random legitimate chords added to the cycle"),
    ("topology.malicious_edge_prob", "0.2", "probability of each malicious link"),
    ("topology.file", "", "edge-list file replacing the generated topology"),
    ("trust.legit_low", "0.3", "lower end of the legitimate trust support"),
    ("trust.legit_high", "1.0", "upper end of the legitimate trust support"),
    ("trust.c_low", "0.0", "lower end of the range c_m is drawn from"),
    ("trust.c_high", "0.45", "upper end of the range c_m is drawn from"),
    ("trust.c_values", "", "explicit c_m list replacing the draw"),
    ("trust.p", "0.2", "attack probability, one value or one per malicious agent"),
    ("detection.xi", "0.15", "threshold scale"),
    ("detection.gamma", "0.7", "threshold exponent"),
    ("consensus.kappa", "10", "influence limiter"),
    ("consensus.eta", "4", "value bound"),
    ("consensus.t0", "60", "observation window before consensus starts"),
    ("attack.kind", "consistent", "consistent or intermittent"),
    ("init.low", "-4", "lower end of the initial value range"),
    ("init.high", "4", "upper end of the initial value range"),
    ("init.values", "", "explicit initial values for all agents"),
    ("run.horizon", "2000", "last simulated step T_max"),
    ("run.trials", "100", "Monte Carlo trials"),
    ("run.seed", "20240601", "base seed"),
    ("run.trial_index", "0", "trial simulated by `simulate`"),
    ("run.history_window", "64", "steps after T_0 kept for the decomposition check (0 disables)"),
    ("run.converge_tol", "1e-6", "final spread below which a trial counts as converged"),
    ("run.sample_log", "false", "write every trust sample from `simulate`"),
    ("bounds.delta", "0.1", "error level for Delta_max"),
    ("bounds.t_values", "100,200,500,1000,2000", "steps at which per-step bounds are reported"),
];

pub fn is_known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

/// Raw key/value entries after files and overrides are merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

impl ConfigMap {
    pub fn defaults() -> Self {
        let entries = KEYS
            .iter()
            .filter(|(_, v, _)| !v.is_empty())
            .map(|(k, v, _)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries, base_dir: None }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut map = Self::defaults();
        map.merge_text(&text)?;
        map.base_dir = path.parent().map(Path::to_path_buf);
        Ok(map)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies one `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            msg: format!("override `{kv}` is not KEY=VALUE"),
        })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !is_known_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if value.is_empty() {
            self.entries.remove(key);
        } else {
            self.entries.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Canonical `key = value` text, one line per set key.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .get(key)
            .ok_or_else(|| ConfigError::Invalid(format!("`{key}` is required")))?;
        parse_value(key, raw)
    }

    fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_value(key, s))
                    .collect()
            })
            .transpose()
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: raw.to_string(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Generated {
        n_legit: usize,
        n_malicious: usize,
        extra_legit_edges: usize,
        malicious_edge_prob: f64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    pub legit_support: (f64, f64),
    pub c_range: (f64, f64),
    pub c_values: Option<Vec<f64>>,
    /// One entry (shared) or one per malicious agent.
    pub p: Vec<f64>,
    pub xi: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub eta: f64,
    pub t0: u64,
    pub attack: AttackKind,
    pub init_range: (f64, f64),
    pub init_values: Option<Vec<f64>>,
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    pub trial_index: usize,
    pub history_window: u64,
    pub converge_tol: f64,
    pub sample_log: bool,
    pub delta: f64,
    pub t_values: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_map(&ConfigMap::defaults()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self, ConfigError> {
        let topology = match map.get("topology.file") {
            Some(f) => {
                let path = PathBuf::from(f);
                TopologySource::File(match &map.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path,
                })
            }
            None => TopologySource::Generated {
                n_legit: map.parse("topology.n_legit")?,
                n_malicious: map.parse("topology.n_malicious")?,
                extra_legit_edges: map.parse("topology.extra_legit_edges")?,
                malicious_edge_prob: map.parse("topology.malicious_edge_prob")?,
            },
        };
        let cfg = Self {
            topology,
            legit_support: (map.parse("trust.legit_low")?, map.parse("trust.legit_high")?),
            c_range: (map.parse("trust.c_low")?, map.parse("trust.c_high")?),
            c_values: map.parse_list("trust.c_values")?,
            p: map.parse_list("trust.p")?.unwrap_or_default(),
            xi: map.parse("detection.xi")?,
            gamma: map.parse("detection.gamma")?,
            kappa: map.parse("consensus.kappa")?,
            eta: map.parse("consensus.eta")?,
            t0: map.parse("consensus.t0")?,
            attack: map.parse("attack.kind")?,
            init_range: (map.parse("init.low")?, map.parse("init.high")?),
            init_values: map.parse_list("init.values")?,
            horizon: map.parse("run.horizon")?,
            trials: map.parse("run.trials")?,
            seed: map.parse("run.seed")?,
            trial_index: map.parse("run.trial_index")?,
            history_window: map.parse("run.history_window")?,
            converge_tol: map.parse("run.converge_tol")?,
            sample_log: map.parse("run.sample_log")?,
            delta: map.parse("bounds.delta")?,
            t_values: map.parse_list("bounds.t_values")?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need the topology.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.t0 < 1 {
            return fail("consensus.t0 must be at least 1".into());
        }
        if self.t0 >= self.horizon {
            return fail(format!(
                "consensus.t0 = {} must be below run.horizon = {}",
                self.t0, self.horizon
            ));
        }
        if self.trials == 0 {
            return fail("run.trials must be at least 1".into());
        }
        if self.p.is_empty() {
            return fail("trust.p needs at least one value".into());
        }
        let (lo, hi) = self.init_range;
        if !(lo <= hi && lo.abs() <= self.eta && hi.abs() <= self.eta) {
            return fail(format!("init range [{lo}, {hi}] must lie within [-eta, eta]"));
        }
        if let Some(v) = &self.init_values {
            if v.iter().any(|x| !(x.abs() <= self.eta)) {
                return fail("init.values must lie within [-eta, eta]".into());
            }
        }
        let (clo, chi) = self.c_range;
        if !(0.0 <= clo && clo <= chi && chi <= 1.0) {
            return fail(format!("c range [{clo}, {chi}] must lie within [0, 1]"));
        }
        if !(self.converge_tol > 0.0) {
            return fail("run.converge_tol must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_study_setup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.topology,
            TopologySource::Generated {
                n_legit: 10,
                n_malicious: 15,
                extra_legit_edges: 10,
                malicious_edge_prob: 0.2
            }
        );
        assert_eq!((cfg.xi, cfg.gamma, cfg.kappa, cfg.eta, cfg.t0), (0.15, 0.7, 10.0, 4.0, 60));
        assert_eq!(cfg.legit_support, (0.3, 1.0));
        assert_eq!(cfg.c_range, (0.0, 0.45));
        assert_eq!((cfg.horizon, cfg.trials), (2000, 100));
        assert_eq!(cfg.t_values, vec![100, 200, 500, 1000, 2000]);
    }

    #[test]
    fn parse_with_comments_and_overrides() {
        let mut map = ConfigMap::defaults();
        map.merge_text("# header\nattack.kind = intermittent  # trailing\n\ntrust.p = 0.8\n")
            .unwrap();
        map.apply_override("trust.p=0.2").unwrap();
        map.apply_override("trust.c_values = 0.1, 0.2").unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.attack, AttackKind::IntermittentFailure);
        assert_eq!(cfg.p, vec![0.2]);
        assert_eq!(cfg.c_values, Some(vec![0.1, 0.2]));
    }

    #[test]
    fn unknown_and_malformed() {
        let mut map = ConfigMap::defaults();
        assert_eq!(
            map.apply_override("consensus.tzero=3"),
            Err(ConfigError::UnknownKey("consensus.tzero".into()))
        );
        assert!(matches!(map.merge_text("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        map.apply_override("consensus.t0=abc").unwrap();
        assert!(matches!(
            ExperimentConfig::from_map(&map),
            Err(ConfigError::BadValue { ref key, .. }) if key == "consensus.t0"
        ));
    }

    #[test]
    fn range_validation() {
        let mut map = ConfigMap::defaults();
        map.apply_override("consensus.t0=3000").unwrap();
        assert!(matches!(ExperimentConfig::from_map(&map), Err(ConfigError::Invalid(_))));
        let mut map = ConfigMap::defaults();
        map.apply_override("init.high=5").unwrap();
        assert!(matches!(ExperimentConfig::from_map(&map), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn relative_topology_file_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("x.conf");
        std::fs::write(&conf, "topology.file = edges.txt\n").unwrap();
        let cfg = ExperimentConfig::from_map(&ConfigMap::from_file(&conf).unwrap()).unwrap();
        assert_eq!(cfg.topology, TopologySource::File(dir.path().join("edges.txt")));
    }

    #[test]
    fn text_round_trip() {
        let mut map = ConfigMap::defaults();
        map.apply_override("run.seed=99").unwrap();
        let mut again = ConfigMap::default();
        again.merge_text(&map.to_text()).unwrap();
        assert_eq!(again.entries, map.entries);
    }
}
