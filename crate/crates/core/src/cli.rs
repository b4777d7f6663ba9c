//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a scenario fails (for instance a run
//! that never stops), 2 on usage or configuration errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cheb::{cheb_coeffs, Interval};
use crate::consensus::{push_sum_round, AgentSchedule, AgentState, NoiseFamily, NoiseSpec};
use crate::netsim::{push_weights, RoundGraph};
use crate::polyopt::minimize_proxy;
use crate::privacy::{h_i, AdversaryModel};
use crate::runner::{self, ScenarioConfig};
use crate::ChebProxy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCENARIO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chebcon", version, about = "Distributed Chebyshev-proxy optimization with private consensus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Verbosity; repeat for more detail.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Scenario file (TOML or JSON). Without it the reference setup is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One end-to-end run.
    Run(Common),
    /// Stopping round and error across a sweep of accuracies.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = default_epsilons())]
        epsilons: Vec<f64>,
    },
    /// Analytic and empirical disclosure probabilities.
    Privacy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec!["uniform".to_string(), "normal".to_string(), "laplace".to_string()])]
        families: Vec<String>,
        /// Monte-Carlo trials per family; 0 skips the adversary.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Number of accuracy values on (0, 1.5].
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Rounds to reach the stopping tolerance under link failures.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.3, 0.5])]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// Prints the brute-force optimum `f*,x*` of the average objective.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Quick built-in checks, one line per module.
    Selftest,
}

fn default_epsilons() -> Vec<f64> {
    (2..=10).map(|k| 10f64.powi(-k)).collect()
}

/// Parses `args` (including the program name) and executes; returns the
/// exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

enum Failure {
    Config(String),
    Scenario(String),
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidParameter(_) | crate::Error::InvalidInterval { .. } => Failure::Config(e.to_string()),
            other => Failure::Scenario(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Scenario(format!("i/o error: {e}"))
    }
}

pub fn execute(cli: Cli) -> i32 {
    configure_threads();
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Run(common) => cmd_run(&common, verbose),
        Command::Convergence { common, epsilons } => cmd_convergence(&common, &epsilons, verbose),
        Command::Privacy { common, families, trials, points } => cmd_privacy(&common, &families, trials, points, verbose),
        Command::Robustness { common, rates, seeds } => cmd_robustness(&common, &rates, seeds, verbose),
        Command::Oracle { config, seed } => cmd_oracle(config.as_deref(), seed),
        Command::Selftest => Ok(cmd_selftest()),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Scenario(msg)) => {
            eprintln!("scenario failed: {msg}");
            EXIT_SCENARIO
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("CHEBCON_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        // fails harmlessly if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load(config: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::from_path(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Files written by one command, recorded in `manifest.txt`.
struct Output {
    dir: PathBuf,
    seed: u64,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path, seed: u64) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_path_buf(), seed, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(self) -> Result<(), Failure> {
        let mut m = String::new();
        for f in &self.files {
            let _ = writeln!(m, "{f} seed={}", self.seed);
        }
        fs::write(self.dir.join("manifest.txt"), m)?;
        Ok(())
    }
}

fn cmd_run(common: &Common, verbose: u8) -> Result<i32, Failure> {
    let cfg = load(common.config.as_deref(), common.seed)?;
    let mut out = Output::new(&common.out, cfg.seed)?;
    let report = runner::run_prcpoa(&cfg)?;
    if verbose > 0 {
        eprintln!("stopped at round {} with max error {:e}", report.stop_round, report.max_error);
    }
    let mut agents = String::from("agent,degree,evaluations,f_e_star,x_p_star,error,certified_gap,fallback\n");
    for (i, a) in report.agents.iter().enumerate() {
        let _ = writeln!(
            agents,
            "{i},{},{},{},{},{:e},{:e},{}",
            a.degree, a.evaluations, a.f_e_star, a.x_p_star, a.error, a.certified_gap, a.fallback
        );
    }
    out.write("agents.csv", &agents)?;
    let summary = format!(
        "seed,epsilon,m,stop_round,communication_rounds,delta,dissemination_error,oracle_f,oracle_x,max_error\n{},{:e},{},{},{},{:e},{:e},{},{},{:e}\n",
        report.seed,
        report.epsilon,
        report.m,
        report.stop_round,
        report.communication_rounds,
        report.delta,
        report.dissemination_error,
        report.oracle_f,
        report.oracle_x,
        report.max_error
    );
    out.write("summary.csv", &summary)?;
    let mut trace = String::from("round,max_ratio_error,mass_residual,stopped_flag\n");
    for r in &report.trace {
        let _ = writeln!(trace, "{},{:e},{:e},{}", r.round, r.max_ratio_error, r.mass_residual, u8::from(r.stopped));
    }
    out.write("trace.csv", &trace)?;
    let u = cfg.stop_period()?;
    out.write("graphs.txt", &cfg.graphs()?.dump_schedule(0..u + report.stop_round))?;
    out.finish()?;
    println!("max error {:e} (epsilon {:e}), stopped at round {}", report.max_error, report.epsilon, report.stop_round);
    Ok(EXIT_OK)
}

fn cmd_convergence(common: &Common, epsilons: &[f64], verbose: u8) -> Result<i32, Failure> {
    let cfg = load(common.config.as_deref(), common.seed)?;
    let mut out = Output::new(&common.out, cfg.seed)?;
    let (rows, reports) = runner::scenario_convergence(&cfg, epsilons)?;
    out.write("convergence.csv", &runner::convergence_csv(&rows))?;
    let c = runner::complexity_report(&reports)?;
    let body = format!(
        "evaluations_per_degree,evaluations_within_bound,slope_log_m_over_eps,r2_log_m_over_eps,slope_log_inv_eps,r2_log_inv_eps\n{},{},{},{},{},{}\n",
        c.evaluations_per_degree,
        c.evaluations_within_bound,
        c.rounds_vs_log_m_over_eps.slope,
        c.rounds_vs_log_m_over_eps.r_squared,
        c.rounds_vs_log_inv_eps.slope,
        c.rounds_vs_log_inv_eps.r_squared
    );
    out.write("complexity.csv", &body)?;
    out.finish()?;
    if verbose > 0 {
        eprintln!("rounds vs ln(1/eps): slope {:.3}, R^2 {:.3}", c.rounds_vs_log_inv_eps.slope, c.rounds_vs_log_inv_eps.r_squared);
    }
    let over = rows.iter().filter(|r| r.error > r.epsilon).count();
    if over > 0 {
        eprintln!("{over} runs missed their accuracy target");
        return Ok(EXIT_SCENARIO);
    }
    Ok(EXIT_OK)
}

fn cmd_privacy(common: &Common, families: &[String], trials: usize, points: usize, verbose: u8) -> Result<i32, Failure> {
    let cfg = load(common.config.as_deref(), common.seed)?;
    let families: Vec<NoiseFamily> =
        families.iter().map(|f| f.parse::<NoiseFamily>()).collect::<Result<_, _>>().map_err(|e| Failure::Config(e.to_string()))?;
    if points == 0 {
        return Err(Failure::Config("need at least one accuracy point".into()));
    }
    let alphas: Vec<f64> = (1..=points).map(|k| 1.5 * k as f64 / points as f64).collect();
    let mut out = Output::new(&common.out, cfg.seed)?;
    let rows = runner::scenario_privacy(&cfg, &alphas, &families, trials)?;
    if verbose > 0 && cfg.adversary.gamma_is_large(&NoiseSpec::unit_variance(families[0]), alphas[0]) {
        eprintln!("warning: gamma is not small next to the informed disclosure term");
    }
    out.write("privacy.csv", &runner::privacy_csv(&rows))?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_robustness(common: &Common, rates: &[f64], seeds: usize, verbose: u8) -> Result<i32, Failure> {
    let cfg = load(common.config.as_deref(), common.seed)?;
    let mut out = Output::new(&common.out, cfg.seed)?;
    let (rows, runs) = runner::scenario_robustness(&cfg, rates, seeds)?;
    out.write("robustness.csv", &runner::robustness_csv(&rows))?;
    let mut detail = String::from("rate,seed,rounds_to_delta,stop_round,decay_slope,decay_r2\n");
    for r in &runs {
        let opt = |v: Option<usize>| v.map_or(String::new(), |k| k.to_string());
        let (slope, r2) = r.decay.map_or((String::new(), String::new()), |f| (f.slope.to_string(), f.r_squared.to_string()));
        let _ = writeln!(detail, "{},{},{},{},{slope},{r2}", r.rate, r.seed, opt(r.rounds_to_delta), opt(r.stop_round));
    }
    out.write("robustness_runs.csv", &detail)?;
    out.finish()?;
    let failures: usize = rows.iter().map(|r| r.failures).sum();
    if verbose > 0 {
        for r in &rows {
            eprintln!("rate {}: mean rounds to delta {:.1}", r.rate, r.mean_rounds_to_delta);
        }
    }
    if failures > 0 {
        eprintln!("{failures} runs did not stop within the round cap");
        return Ok(EXIT_SCENARIO);
    }
    Ok(EXIT_OK)
}

fn cmd_oracle(config: Option<&Path>, seed: Option<u64>) -> Result<i32, Failure> {
    let cfg = load(config, seed)?;
    let (f, x) = runner::oracle(&cfg)?;
    println!("{f},{x}");
    Ok(EXIT_OK)
}

fn cmd_selftest() -> i32 {
    let checks: [(&str, fn() -> bool); 6] = [
        ("cheb", selftest_cheb),
        ("netsim", selftest_netsim),
        ("consensus", selftest_consensus),
        ("privacy", selftest_privacy),
        ("polyopt", selftest_polyopt),
        ("runner", selftest_runner),
    ];
    let mut ok = true;
    for (name, check) in checks {
        let pass = check();
        ok &= pass;
        println!("{name}: {}", if pass { "PASS" } else { "FAIL" });
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_SCENARIO
    }
}

fn selftest_cheb() -> bool {
    cheb_coeffs(&[1.0, 0.0, 1.0]).is_ok_and(|c| c == [0.5, 0.0, 0.5])
        && cheb_coeffs(&[1.0, 1.0, 1.0]).is_ok_and(|c| c == [1.0, 0.0, 0.0])
        && Interval::new(1.0, 1.0).is_err()
}

fn selftest_netsim() -> bool {
    let w = push_weights(&RoundGraph::ring(3));
    (0..3).all(|j| (w.column_sum(j) - 1.0).abs() < 1e-15)
}

fn selftest_consensus() -> bool {
    let sched = AgentSchedule { insert_counts: vec![1], subtraction_count: 1, subtraction_rounds: vec![2], noise_redraws: 0 };
    let mut states: Vec<AgentState> = [1.0, 2.0, 3.0]
        .iter()
        .map(|&v| AgentState { x: vec![v], ..AgentState::new(&[0.0], vec![0.0], sched.clone()).expect("valid") })
        .collect();
    push_sum_round(&mut states, &RoundGraph::complete(3));
    states.iter().all(|s| (s.ratio()[0] - 2.0).abs() < 1e-15)
}

fn selftest_privacy() -> bool {
    let adv = AdversaryModel::default();
    NoiseSpec::uniform(-1.0, 1.0).is_ok_and(|u| h_i(0.0, &u, &adv) == Ok(adv.gamma()))
}

fn selftest_polyopt() -> bool {
    let Ok(iv) = Interval::new(-1.0, 1.0) else { return false };
    let Ok(sq) = ChebProxy::new(iv, vec![0.5, 0.0, 0.5]) else { return false };
    minimize_proxy(&sq, 1e-10).is_ok_and(|r| r.f_e_star.abs() < 1e-15 && r.x_p_star.abs() < 1e-12)
}

fn selftest_runner() -> bool {
    let Ok(iv) = Interval::new(-1.0, 1.0) else { return false };
    runner::brute_force_optimum(|x| x * x, iv, 10_001).is_ok_and(|(f, x)| f.abs() < 1e-9 && x.abs() < 1e-9)
}
