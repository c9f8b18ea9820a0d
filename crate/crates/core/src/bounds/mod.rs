//! Closed-form misclassification bounds, tail sums and the deviation radius.

mod gamma;

use std::fmt;

use thiserror::Error;

use crate::format::g12;

pub use gamma::{ln_gamma, upper_incomplete_gamma};

/// Smallest `gamma` accepted by the tail sums; the gamma index `1/(2 gamma - 1)`
/// blows up as `gamma -> 1/2`.
pub const MIN_TAIL_GAMMA: f64 = 0.51;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid bound parameter: {0}")]
    Param(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("T_0 = {t0} must exceed the admissibility threshold {t0_min}")]
    Precondition { t0: u64, t0_min: f64 },
    #[error("gamma = {0} is below the supported minimum {MIN_TAIL_GAMMA} for tail sums")]
    GammaCap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub xi: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub n_legit: usize,
    pub n_malicious: usize,
    pub kappa: f64,
    pub eta: f64,
    pub delta: f64,
}

impl BoundParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        xi: f64,
        gamma: f64,
        lambda: f64,
        n_legit: usize,
        n_malicious: usize,
        kappa: f64,
        eta: f64,
        delta: f64,
    ) -> Result<Self, BoundError> {
        let bad = |what: &str, v: f64| Err(BoundError::Param(format!("{what} = {v}")));
        if !(xi > 0.0 && xi.is_finite()) {
            return bad("xi", xi);
        }
        if !(gamma > 0.5 && gamma < 1.0) {
            return bad("gamma", gamma);
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return bad("lambda", lambda);
        }
        if n_legit == 0 {
            return Err(BoundError::Param("no legitimate agents".into()));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return bad("kappa", kappa);
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return bad("eta", eta);
        }
        if !(delta > 0.0 && delta < 1.0) {
            return bad("delta", delta);
        }
        Ok(Self {
            xi,
            gamma,
            lambda,
            n_legit,
            n_malicious,
            kappa,
            eta,
            delta,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, BoundError> {
        Self::new(
            self.xi,
            self.gamma,
            lambda,
            self.n_legit,
            self.n_malicious,
            self.kappa,
            self.eta,
            self.delta,
        )
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, BoundError> {
        Self::new(
            self.xi,
            self.gamma,
            self.lambda,
            self.n_legit,
            self.n_malicious,
            self.kappa,
            self.eta,
            delta,
        )
    }
}

/// A probability bound with its unclamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub raw: f64,
    /// False when evaluated outside the range where the statement holds.
    pub valid: bool,
}

impl TailBound {
    /// Clamped to `[0, 1]`; `1` when not valid.
    pub fn probability(&self) -> f64 {
        if self.valid {
            self.raw.clamp(0.0, 1.0)
        } else {
            1.0
        }
    }

    pub fn is_vacuous(&self) -> bool {
        self.probability() >= 1.0
    }
}

fn legit_exponent(p: &BoundParams, t: u64) -> f64 {
    let t1 = (t + 1) as f64;
    -(p.xi * p.xi * t1.powf(2.0 * p.gamma)) / (2.0 * t1)
}

fn mal_exponent(p: &BoundParams, t: u64) -> f64 {
    let t1 = (t + 1) as f64;
    let s = p.xi * t1.powf(p.gamma) + p.lambda * t1;
    -(s * s) / (2.0 * t1)
}

/// Probability that a legitimate agent with `sizes = (|N^L|, |N^M|)` misclassifies
/// some neighbor at step `t`.
pub fn misclassify_legit_bound(p: &BoundParams, sizes: (usize, usize), t: u64) -> TailBound {
    let raw = sizes.0 as f64 * legit_exponent(p, t).exp() + sizes.1 as f64 * mal_exponent(p, t).exp();
    TailBound { raw, valid: true }
}

/// Probability that one malicious neighbor is trusted at step `t`; valid for
/// `t > (xi/lambda)^{1/(1-gamma)}`.
pub fn misclassify_mal_bound(p: &BoundParams, t: u64) -> TailBound {
    TailBound {
        raw: mal_exponent(p, t).exp(),
        valid: t as f64 > t0_min(p),
    }
}

/// `(xi/lambda)^{1/(1-gamma)}`.
pub fn t0_min(p: &BoundParams) -> f64 {
    (p.xi / p.lambda).powf(1.0 / (1.0 - p.gamma))
}

fn check_t0(p: &BoundParams, t0: u64) -> Result<(), BoundError> {
    let min = t0_min(p);
    if (t0 as f64) <= min {
        return Err(BoundError::Precondition { t0, t0_min: min });
    }
    Ok(())
}

/// `e^{-a T_0} / (1 - e^{-a})` with `a = (xi^2/2) lambda^2`.
fn geometric_tail(p: &BoundParams, t0: u64) -> f64 {
    let a = 0.5 * p.xi * p.xi * p.lambda * p.lambda;
    (-a * t0 as f64).exp() / -(-a).exp_m1()
}

/// `g_M(T_0) = |L| |M| e^{-a T_0} / (1 - e^{-a})`.
pub fn g_m(p: &BoundParams, t0: u64) -> Result<f64, BoundError> {
    check_t0(p, t0)?;
    Ok((p.n_legit * p.n_malicious) as f64 * geometric_tail(p, t0))
}

/// `g_L(T_0)`: the malicious tail scaled by `|L| + 1` plus the legitimate
/// tail `|L|^3 2^s / ((2 gamma - 1) xi^{2s}) Gamma(s, (xi^2/2)(T_0 - 1)^{2 gamma - 1})`
/// with `s = 1/(2 gamma - 1)`.
pub fn g_l(p: &BoundParams, t0: u64) -> Result<f64, BoundError> {
    check_t0(p, t0)?;
    if p.gamma < MIN_TAIL_GAMMA {
        return Err(BoundError::GammaCap(p.gamma));
    }
    let l = p.n_legit as f64;
    let m = p.n_malicious as f64;
    let first = l * m * (l + 1.0) * geometric_tail(p, t0);
    Ok(first + l.powi(3) * legit_tail(p, t0)?)
}

/// `2^s / ((2 gamma - 1) xi^{2s}) Gamma(s, (xi^2/2)(T_0 - 1)^{2 gamma - 1})`.
fn legit_tail(p: &BoundParams, t0: u64) -> Result<f64, BoundError> {
    let e = 2.0 * p.gamma - 1.0;
    let s = 1.0 / e;
    let q = 0.5 * p.xi * p.xi * (t0.saturating_sub(1) as f64).powf(e);
    let scale = (s * 2f64.ln() - 2.0 * s * p.xi.ln()).exp() / e;
    Ok(scale * upper_incomplete_gamma(s, q)?)
}

/// `Delta_max(T_0, delta) = 2 ((2 eta / delta) g_L + (eta / (kappa delta)) g_M)`.
pub fn delta_max(p: &BoundParams, t0: u64) -> Result<f64, BoundError> {
    let gl = g_l(p, t0)?;
    let gm = g_m(p, t0)?;
    Ok(compose_delta_max(p, gl, gm))
}

fn compose_delta_max(p: &BoundParams, gl: f64, gm: f64) -> f64 {
    2.0 * ((2.0 * p.eta / p.delta) * gl + (p.eta / (p.kappa * p.delta)) * gm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBounds {
    pub t: u64,
    /// One legitimate neighbor, sizes `(1, 0)`.
    pub legit_pair: TailBound,
    /// The agent with the largest neighborhood.
    pub legit_agent: TailBound,
    pub mal_pair: TailBound,
}

/// Tail sums evaluated with `lambda` from the configured attacked-step
/// expectations, for comparison with the mixture-based values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfiguredBounds {
    pub lambda: f64,
    pub t0_min: f64,
    /// `(g_L, g_M, Delta_max)` when `T_0` is admissible under this `lambda`.
    pub tails: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub params: BoundParams,
    pub t0: u64,
    pub t0_min: f64,
    pub g_l: f64,
    pub g_m: f64,
    pub delta_max: f64,
    pub agent_sizes: (usize, usize),
    pub per_step: Vec<StepBounds>,
    pub configured: Option<ConfiguredBounds>,
}

impl BoundReport {
    /// Fails with [`BoundError::Precondition`] when `T_0` is not admissible.
    pub fn compute(
        params: &BoundParams,
        t0: u64,
        agent_sizes: (usize, usize),
        t_values: &[u64],
        configured_lambda: Option<f64>,
    ) -> Result<Self, BoundError> {
        let gl = g_l(params, t0)?;
        let gm = g_m(params, t0)?;
        let per_step = t_values
            .iter()
            .map(|&t| StepBounds {
                t,
                legit_pair: misclassify_legit_bound(params, (1, 0), t),
                legit_agent: misclassify_legit_bound(params, agent_sizes, t),
                mal_pair: misclassify_mal_bound(params, t),
            })
            .collect();
        let configured = match configured_lambda {
            Some(lambda) => {
                let cp = params.with_lambda(lambda)?;
                let tails = match (g_l(&cp, t0), g_m(&cp, t0)) {
                    (Ok(a), Ok(b)) => Some((a, b, compose_delta_max(&cp, a, b))),
                    _ => None,
                };
                Some(ConfiguredBounds {
                    lambda,
                    t0_min: t0_min(&cp),
                    tails,
                })
            }
            None => None,
        };
        Ok(Self {
            params: *params,
            t0,
            t0_min: t0_min(params),
            g_l: gl,
            g_m: gm,
            delta_max: compose_delta_max(params, gl, gm),
            agent_sizes,
            per_step,
            configured,
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("xi", g12(p.xi));
        kv("gamma", g12(p.gamma));
        kv("lambda", g12(p.lambda));
        kv("n_legit", p.n_legit.to_string());
        kv("n_malicious", p.n_malicious.to_string());
        kv("kappa", g12(p.kappa));
        kv("eta", g12(p.eta));
        kv("delta", g12(p.delta));
        kv("t0", self.t0.to_string());
        kv("t0_min", g12(self.t0_min));
        kv("g_L", g12(self.g_l));
        kv("g_M", g12(self.g_m));
        kv("delta_max", g12(self.delta_max));
        for row in &self.per_step {
            kv(&format!("legit_pair_bound.t{}", row.t), g12(row.legit_pair.probability()));
            kv(&format!("legit_agent_bound.t{}", row.t), g12(row.legit_agent.probability()));
            kv(&format!("mal_pair_bound.t{}", row.t), g12(row.mal_pair.probability()));
            kv(&format!("mal_pair_valid.t{}", row.t), row.mal_pair.valid.to_string());
        }
        if let Some(c) = &self.configured {
            kv("configured.lambda", g12(c.lambda));
            kv("configured.t0_min", g12(c.t0_min));
            if let Some((a, b, d)) = c.tails {
                kv("configured.g_L", g12(a));
                kv("configured.g_M", g12(b));
                kv("configured.delta_max", g12(d));
            }
        }
        out
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "bound report")?;
        let rows: [(&str, String); 13] = [
            ("xi", g12(p.xi)),
            ("gamma", g12(p.gamma)),
            ("lambda (mixture)", g12(p.lambda)),
            ("|L|", p.n_legit.to_string()),
            ("|M|", p.n_malicious.to_string()),
            ("kappa", g12(p.kappa)),
            ("eta", g12(p.eta)),
            ("delta", g12(p.delta)),
            ("T_0", self.t0.to_string()),
            ("T_0 minimum", g12(self.t0_min)),
            ("g_L(T_0)", g12(self.g_l)),
            ("g_M(T_0)", g12(self.g_m)),
            ("Delta_max(T_0, delta)", g12(self.delta_max)),
        ];
        for (k, v) in rows {
            writeln!(f, "  {k:<24} {v}")?;
        }
        if self.delta_max >= 2.0 * p.eta {
            writeln!(f, "  note: Delta_max exceeds 2*eta, so the radius is vacuous at these parameters")?;
        }
        if let Some(c) = &self.configured {
            writeln!(f, "configured attacked-step expectations")?;
            writeln!(f, "  {:<24} {}", "lambda (configured)", g12(c.lambda))?;
            writeln!(f, "  {:<24} {}", "T_0 minimum", g12(c.t0_min))?;
            match c.tails {
                Some((a, b, d)) => {
                    writeln!(f, "  {:<24} {}", "g_L(T_0)", g12(a))?;
                    writeln!(f, "  {:<24} {}", "g_M(T_0)", g12(b))?;
                    writeln!(f, "  {:<24} {}", "Delta_max(T_0, delta)", g12(d))?;
                }
                None => writeln!(f, "  T_0 not admissible under the configured lambda")?,
            }
        }
        if !self.per_step.is_empty() {
            writeln!(
                f,
                "per-step misclassification bounds (agent sizes |N^L|={}, |N^M|={})",
                self.agent_sizes.0, self.agent_sizes.1
            )?;
            writeln!(f, "  {:>8} {:>20} {:>20} {:>20} {:>6}", "t", "legit_pair", "legit_agent", "mal_pair", "valid")?;
            for r in &self.per_step {
                writeln!(
                    f,
                    "  {:>8} {:>20} {:>20} {:>20} {:>6}",
                    r.t,
                    g12(r.legit_pair.probability()),
                    g12(r.legit_agent.probability()),
                    g12(r.mal_pair.probability()),
                    r.mal_pair.valid
                )?;
            }
        }
        writeln!(
            f,
            "note: the per-step legitimate bound uses exp(-(xi(t+1)^gamma + lambda(t+1))^2 / (2(t+1))) for malicious neighbors, \
             while g_L and g_M use exp(-(xi^2/2) lambda^2 (k+1)); the two exponent forms differ and each is evaluated as stated"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(lambda: f64) -> BoundParams {
        BoundParams::new(0.15, 0.7, lambda, 10, 15, 10.0, 4.0, 0.1).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn params_validation() {
        assert!(BoundParams::new(0.15, 0.7, 0.0, 10, 15, 10.0, 4.0, 0.1).is_err());
        assert!(BoundParams::new(0.15, 0.7, 1.1, 10, 15, 10.0, 4.0, 0.1).is_err());
        assert!(BoundParams::new(0.15, 0.5, 0.2, 10, 15, 10.0, 4.0, 0.1).is_err());
        assert!(BoundParams::new(0.15, 0.7, 0.2, 10, 15, 10.0, 4.0, 1.0).is_err());
        assert!(BoundParams::new(0.15, 0.7, 0.2, 0, 15, 10.0, 4.0, 0.1).is_err());
    }

    #[test]
    fn legit_bound_cases() {
        let p = study(0.2);
        assert_eq!(misclassify_legit_bound(&p, (0, 0), 500).probability(), 0.0);
        assert_eq!(misclassify_legit_bound(&p, (2, 3), 0).probability(), 1.0);
        let b = misclassify_legit_bound(&p, (2, 3), 500);
        // 50-digit reference
        assert!(rel(b.raw, 1.747_033_404_579_765) < 1e-12);
        assert_eq!(b.probability(), 1.0);
    }

    #[test]
    fn mal_bound_cases() {
        let p = study(0.2);
        let b = misclassify_mal_bound(&p, 500);
        assert!(b.valid);
        assert!(rel(b.raw, 3.789_157_455_563_555e-6) < 1e-10);
        let q = BoundParams::new(2.0, 0.7, 0.1, 2, 1, 1.0, 1.0, 0.1).unwrap();
        let b = misclassify_mal_bound(&q, 10);
        assert!(!b.valid);
        assert_eq!(b.probability(), 1.0);
        let mut last = 1.0;
        for k in 1..10 {
            let b = misclassify_mal_bound(&study(0.1 * k as f64), 50);
            assert!(b.raw < last);
            last = b.raw;
        }
    }

    #[test]
    fn t0_min_cases() {
        let p = BoundParams::new(0.3, 0.8, 0.3, 2, 1, 1.0, 1.0, 0.1).unwrap();
        assert!((t0_min(&p) - 1.0).abs() < 1e-15);
        assert!(rel(t0_min(&study(0.2)), 0.383_298_875_050_529_46) < 1e-13);
        let q = BoundParams::new(0.4, 0.500_01, 0.2, 2, 1, 1.0, 1.0, 0.1).unwrap();
        assert!((t0_min(&q) - 4.0).abs() < 1e-3);
    }

    #[test]
    fn tail_sum_goldens() {
        let p = study(0.2);
        assert!(rel(g_l(&p, 60).unwrap(), 251_081_387.894_077_45) < 1e-10);
        assert!(rel(g_m(&p, 60).unwrap(), 324_526.754_743_050_2) < 1e-10);
        assert!(rel(delta_max(&p, 60).unwrap(), 40_175_618_277.090_336) < 1e-10);
        assert!(rel(g_l(&p, 2).unwrap(), 251_231_425.126_453_9) < 1e-10);
        assert!(g_l(&p, 60).unwrap() < g_l(&p, 2).unwrap());
    }

    #[test]
    fn closed_form_gamma_term() {
        // xi^2/2 = 1, gamma = 0.75 -> s = 2 and the tail is 2^2/(0.5 * 2^2) * Gamma(2, 1) = 2 * 2 e^{-1}
        let p = BoundParams::new(2f64.sqrt(), 0.75, 1.0, 3, 0, 1.0, 1.0, 0.1).unwrap();
        let want = 2.0 * 2.0 * (-1.0f64).exp();
        assert!(rel(legit_tail(&p, 2).unwrap(), want) < 1e-12);
        // with no malicious agents g_L is |L|^3 times the tail
        assert!(rel(g_l(&p, 5).unwrap(), 27.0 * legit_tail(&p, 5).unwrap()) < 1e-14);
    }

    #[test]
    fn g_m_scaling() {
        let p = BoundParams::new(0.5, 0.7, 0.5, 4, 0, 1.0, 1.0, 0.1).unwrap();
        assert_eq!(g_m(&p, 60).unwrap(), 0.0);
        let a = BoundParams::new(0.5, 0.7, 0.5, 4, 2, 1.0, 1.0, 0.1).unwrap();
        let b = BoundParams::new(0.5, 0.7, 0.5, 8, 2, 1.0, 1.0, 0.1).unwrap();
        assert!(rel(g_m(&b, 60).unwrap(), 2.0 * g_m(&a, 60).unwrap()) < 1e-14);
    }

    #[test]
    fn delta_max_scaling() {
        let p = study(0.2);
        let half = p.with_delta(0.05).unwrap();
        assert!(rel(delta_max(&half, 60).unwrap(), 2.0 * delta_max(&p, 60).unwrap()) < 1e-14);
        assert_eq!(compose_delta_max(&p, 0.0, 0.0), 0.0);
    }

    #[test]
    fn preconditions() {
        let p = BoundParams::new(1.0, 0.7, 0.1, 2, 1, 1.0, 1.0, 0.1).unwrap();
        let min = t0_min(&p);
        let below = min.floor() as u64;
        assert!(matches!(g_l(&p, below), Err(BoundError::Precondition { .. })));
        assert!(matches!(g_m(&p, below), Err(BoundError::Precondition { .. })));
        assert!(matches!(delta_max(&p, below), Err(BoundError::Precondition { .. })));
        assert!(g_m(&p, below + 1).is_ok());
        let q = BoundParams::new(0.5, 0.505, 0.9, 2, 1, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(g_l(&q, 100), Err(BoundError::GammaCap(_))));
    }

    #[test]
    fn report_contents() {
        let r = BoundReport::compute(&study(0.2), 60, (4, 6), &[100, 2000], Some(0.2)).unwrap();
        assert_eq!(r.per_step.len(), 2);
        let kv = r.to_kv();
        assert!(kv.contains("t0=60\n"));
        assert!(kv.contains("delta_max=40175618277.1\n"));
        let text = r.to_string();
        assert!(text.contains("g_L(T_0)"));
        assert!(text.contains("vacuous"));
        assert!(BoundReport::compute(&study(0.01), 1, (1, 1), &[], None).is_err());
    }
}
