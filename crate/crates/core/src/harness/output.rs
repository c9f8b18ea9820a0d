//! CSV and text renderings of results, and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::batch::{BatchSummary, ComparisonRow};
use super::trial::{ExperimentSetup, TrialResult};
use crate::format::g12;

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn summary_csv(s: &BatchSummary) -> String {
    let mut out = String::from("t,mean_max_deviation,p20_dev,p80_dev,misclass_legit_rate,misclass_mal_rate\n");
    for t in 0..s.mean_deviation.len() {
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{}",
            g12(s.mean_deviation[t]),
            g12(s.p20_deviation[t]),
            g12(s.p80_deviation[t]),
            g12(s.legit_rate[t]),
            g12(s.mal_rate[t])
        );
    }
    out
}

pub fn trials_csv(results: &[TrialResult]) -> String {
    let mut out = String::from("trial,converged,final_spread,final_deviation,empirical_Tf\n");
    for r in results {
        let tf = r.empirical_tf.map_or_else(|| "not_reached".to_string(), |t| t.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.trial,
            r.converged,
            g12(r.final_spread),
            g12(r.final_deviation),
            tf
        );
    }
    out
}

/// Scalar batch statistics as `key=value` lines.
pub fn batch_txt(s: &BatchSummary) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), g12);
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("trials", s.trials.to_string());
    kv("convergence_rate", g12(s.convergence_rate));
    kv("mean_final_deviation", g12(s.mean_final_deviation));
    kv("max_final_spread", g12(s.max_final_spread));
    kv("tf_reached", s.tf_reached.to_string());
    kv("mean_empirical_Tf", opt(s.mean_empirical_tf));
    kv("max_empirical_Tf", s.max_empirical_tf.map_or_else(|| "none".into(), |t| t.to_string()));
    kv("legit_pairs", s.legit_pairs.to_string());
    kv("malicious_pairs", s.mal_pairs.to_string());
    kv("delta_max", opt(s.delta_max));
    kv("delta_max_exceedance", opt(s.exceedance));
    kv("deviation_proxy", "deviation at T_max".into());
    kv("max_row_sum_error", g12(s.max_row_sum_error));
    kv("max_abs_legit_value", g12(s.max_abs_legit));
    kv("max_decomposition_error", opt(s.max_decomposition_error));
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "t,legit_freq,legit_pairs,legit_stderr,legit_bound,legit_dominated,mal_freq,mal_pairs,mal_stderr,mal_bound,mal_valid,mal_dominated\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            g12(r.legit_freq),
            r.legit_n,
            g12(r.legit_stderr),
            g12(r.legit_bound),
            r.legit_dominated,
            g12(r.mal_freq),
            r.mal_n,
            g12(r.mal_stderr),
            g12(r.mal_bound),
            r.mal_valid,
            r.mal_dominated
        );
    }
    out
}

/// `t,agent,value`; malicious rows hold the value sent at `t`.
pub fn trajectory_csv(r: &TrialResult) -> Option<String> {
    let tr = r.trajectory.as_ref()?;
    let mut out = String::from("t,agent,value\n");
    for (t, row) in tr.iter().enumerate() {
        for (agent, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{t},{agent},{}", g12(*v));
        }
    }
    Some(out)
}

pub fn attacks_csv(r: &TrialResult, n_legit: usize) -> Option<String> {
    let log = r.attacks.as_ref()?;
    let mut out = String::from("t,m,attacked,value\n");
    for (t, e) in log.iter().enumerate() {
        for (k, (&a, &v)) in e.attacked.iter().zip(&e.values).enumerate() {
            let _ = writeln!(out, "{t},{},{},{}", n_legit + k, a as u8, g12(v));
        }
    }
    Some(out)
}

pub fn samples_csv(r: &TrialResult) -> Option<String> {
    let log = r.samples.as_ref()?;
    let mut out = String::from("t,i,j,alpha,attacked\n");
    for s in log {
        // alpha at full precision so the ledger can be rebuilt exactly
        let _ = writeln!(out, "{},{},{},{:?},{}", s.t, s.i, s.j, s.alpha, s.attacked as u8);
    }
    Some(out)
}

/// Per-step deviation and classification errors of one trial.
pub fn metrics_csv(r: &TrialResult) -> String {
    let mut out = String::from("t,max_deviation,legit_excluded,malicious_included\n");
    for (t, (d, e)) in r.deviation.iter().zip(&r.misclassified).enumerate() {
        let _ = writeln!(out, "{t},{},{},{}", g12(*d), e.legit_excluded, e.malicious_included);
    }
    out
}

/// JSON object with the nominal value, `nu` and the setup's fixed draws.
pub fn nominal_txt(setup: &ExperimentSetup) -> String {
    let list = |v: &mut dyn Iterator<Item = f64>| v.map(g12).collect::<Vec<_>>().join(", ");
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"nominal_value\": {},", g12(setup.nominal_value));
    let _ = writeln!(out, "  \"perron_residual\": {},", g12(setup.nominal.fixed_point_residual()));
    let _ = writeln!(out, "  \"nu\": [{}],", list(&mut setup.nominal.nu.iter().copied()));
    let _ = writeln!(out, "  \"attack_sign\": {},", g12(setup.attack.sign_target));
    let _ = writeln!(out, "  \"c\": [{}],", list(&mut setup.model.c_values().iter().copied()));
    let _ = writeln!(out, "  \"x0\": [{}]", list(&mut setup.x0.iter().copied()));
    out.push_str("}\n");
    out
}
