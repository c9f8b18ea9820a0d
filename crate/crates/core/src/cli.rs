//! `trustcons` command line.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage or configuration
//! error, 3 standing assumptions violated, 4 bound precondition failed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{BoundError, BoundReport};
use crate::graph::check_assumptions;
use crate::harness::{
    self, output, trial::build_model, ConfigMap, ExperimentConfig, ExperimentSetup, HarnessError, TrialOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "trustcons", version, about = "Trust-based resilient consensus simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and write its trajectory, attack log and metrics.
    Simulate(Common),
    /// Run a Monte Carlo batch and write summary tables.
    Montecarlo(Common),
    /// Evaluate the closed-form bounds for the configured model.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Also print machine-readable key=value lines.
        #[arg(long)]
        kv: bool,
    },
    /// Check the standing assumptions and print the report.
    Validate(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (`key = value` lines); built-in study defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "TRUSTCONS_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set run.trials=N`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Shorthand for `--set run.seed=S`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for batches (default: all available).
    #[arg(long)]
    pub jobs: Option<usize>,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Assumption(_) => EXIT_ASSUMPTION,
            HarnessError::Bound(BoundError::Precondition { .. }) => EXIT_PRECONDITION,
            HarnessError::Io(_) | HarnessError::Trial { .. } => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses arguments, runs the subcommand, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate(c) => simulate(&c),
        Command::Montecarlo(c) => montecarlo(&c),
        Command::Bounds { common, kv } => bounds(&common, kv),
        Command::Validate(c) => validate(&c),
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut map = match &c.config {
        Some(p) => ConfigMap::from_file(p).map_err(HarnessError::from)?,
        None => ConfigMap::defaults(),
    };
    for kv in &c.set {
        map.apply_override(kv).map_err(HarnessError::from)?;
    }
    if let Some(n) = c.trials {
        map.set("run.trials", &n.to_string()).map_err(HarnessError::from)?;
    }
    if let Some(s) = c.seed {
        map.set("run.seed", &s.to_string()).map_err(HarnessError::from)?;
    }
    Ok(ExperimentConfig::from_map(&map).map_err(HarnessError::from)?)
}

struct OutDir(PathBuf);

impl OutDir {
    fn create(path: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(path).map_err(|e| io_failure(path, e))?;
        Ok(Self(path.to_path_buf()))
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.0.join(name);
        output::write_atomic(&path, contents).map_err(|e| io_failure(&path, e))
    }
}

fn setup(cfg: ExperimentConfig) -> Result<ExperimentSetup, Failure> {
    match ExperimentSetup::new(cfg) {
        Err(HarnessError::Assumption(report)) => Err(Failure {
            code: EXIT_ASSUMPTION,
            message: format!("standing assumptions violated\n{report}"),
        }),
        other => Ok(other?),
    }
}

fn write_setup_files(out: &OutDir, s: &ExperimentSetup) -> Result<(), Failure> {
    out.write("topology.txt", &s.topology.to_edge_list())?;
    out.write("nominal.txt", &output::nominal_txt(s))?;
    Ok(())
}

fn bound_report(s: &ExperimentSetup) -> Result<BoundReport, HarnessError> {
    let params = s.bound_params()?;
    Ok(BoundReport::compute(
        &params,
        s.config.t0,
        s.largest_neighborhood(),
        &s.config.t_values,
        s.report.lambda_configured,
    )?)
}

fn simulate(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let index = cfg.trial_index;
    let opts = TrialOptions {
        trajectory: true,
        attack_log: true,
        sample_log: cfg.sample_log,
    };
    let s = setup(cfg)?;
    let r = harness::run_trial_with(&s, index, opts).map_err(HarnessError::from)?;
    let out = OutDir::create(&c.out)?;
    write_setup_files(&out, &s)?;
    let nl = s.topology.n_legit();
    if let Some(t) = output::trajectory_csv(&r) {
        out.write("trajectory.csv", &t)?;
    }
    if let Some(a) = output::attacks_csv(&r, nl) {
        out.write("attacks.csv", &a)?;
    }
    if let Some(x) = output::samples_csv(&r) {
        out.write("samples.csv", &x)?;
    }
    out.write("metrics.csv", &output::metrics_csv(&r))?;
    let one = std::slice::from_ref(&r);
    out.write("trials.csv", &output::trials_csv(one))?;
    let summary = harness::summarize(one, &s, None);
    out.write("summary.csv", &output::summary_csv(&summary))?;
    println!(
        "trial {index}: converged={} final_spread={} final_deviation={} empirical_Tf={}",
        r.converged,
        crate::format::g12(r.final_spread),
        crate::format::g12(r.final_deviation),
        r.empirical_tf.map_or_else(|| "not_reached".into(), |t| t.to_string())
    );
    Ok(())
}

fn montecarlo(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let s = setup(cfg)?;
    let results = harness::run_batch(&s, c.jobs).map_err(HarnessError::from)?;
    let out = OutDir::create(&c.out)?;
    write_setup_files(&out, &s)?;

    let params = s.bound_params().map_err(HarnessError::from)?;
    let (bounds_text, delta_max) = match bound_report(&s) {
        Ok(rep) => (rep.to_string(), Some(rep.delta_max)),
        Err(HarnessError::Bound(e @ BoundError::Precondition { .. })) => {
            (format!("bounds not evaluated: {e}\n"), None)
        }
        Err(e) => return Err(e.into()),
    };
    let summary = harness::summarize(&results, &s, delta_max);
    let rows = harness::empirical_vs_bounds(&results, &s.topology, &params, &s.config.t_values);

    out.write("summary.csv", &output::summary_csv(&summary))?;
    out.write("trials.csv", &output::trials_csv(&results))?;
    out.write("comparison.csv", &output::comparison_csv(&rows))?;
    out.write("batch.txt", &output::batch_txt(&summary))?;
    out.write("bounds.txt", &bounds_text)?;
    print!("{}", output::batch_txt(&summary));
    Ok(())
}

fn bounds(c: &Common, kv: bool) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let s = setup(cfg)?;
    let report = bound_report(&s)?;
    let out = OutDir::create(&c.out)?;
    out.write("bounds.txt", &report.to_string())?;
    print!("{report}");
    if kv {
        out.write("bounds.kv", &report.to_kv())?;
        print!("{}", report.to_kv());
    }
    Ok(())
}

fn validate(c: &Common) -> Result<(), Failure> {
    let cfg = load_config(c)?;
    let (topology, model) = build_model(&cfg)?;
    let report = check_assumptions(&topology, &model);
    println!("{report}");
    if report.holds() {
        println!("assumptions hold");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_ASSUMPTION,
            message: "standing assumptions violated".into(),
        })
    }
}
