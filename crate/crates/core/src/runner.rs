//! End-to-end runs, the brute-force oracle, and the experiment scenarios.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cheb::{adaptive_interpolate, ChebProxy, Interval, ObjectiveFn};
use crate::consensus::{
    disseminate, max_consensus_interval, DisseminationOptions, NoiseFamily, NoiseSpec, ProtocolParams,
    StopParams, TraceRow,
};
use crate::error::{Error, Result};
use crate::netsim::{GraphKind, GraphSequence};
use crate::polyopt::minimize_proxy;
use crate::privacy::{self, AdversaryModel, PrivacyExperiment};
use crate::rng;
use crate::stats::{linear_fit, mean_std, LinearFit};

/// Grid size of the reference oracle.
pub const ORACLE_GRID: usize = 1_000_000;
const GOLDEN_TOL: f64 = 1e-12;

/// Local objectives `f_i(x) = a_i / (1 + e^{-x}) + b_i ln(1 + x^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `a_i ~ N(a_mean, a_var)`, `b_i ~ N(b_mean, b_var)`, drawn from the
    /// master seed.
    SigmoidLog { a_mean: f64, a_var: f64, b_mean: f64, b_var: f64 },
    /// Fixed coefficients, one pair per agent.
    Explicit { a: Vec<f64>, b: Vec<f64> },
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::SigmoidLog { a_mean: 10.0, a_var: 2.0, b_mean: 5.0, b_var: 1.0 }
    }
}

impl ObjectiveSpec {
    /// `(a_i, b_i)` for each of `n` agents.
    pub fn coefficients(&self, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        match self {
            ObjectiveSpec::SigmoidLog { a_mean, a_var, b_mean, b_var } => {
                let da = Normal::new(*a_mean, a_var.sqrt())
                    .map_err(|e| Error::InvalidParameter(format!("a distribution: {e}")))?;
                let db = Normal::new(*b_mean, b_var.sqrt())
                    .map_err(|e| Error::InvalidParameter(format!("b distribution: {e}")))?;
                let mut r = rng::stream(seed, rng::STREAM_OBJECTIVE);
                Ok((0..n).map(|_| (da.sample(&mut r), db.sample(&mut r))).collect())
            }
            ObjectiveSpec::Explicit { a, b } => {
                if a.len() != n || b.len() != n {
                    return Err(Error::AgentCountMismatch(n, a.len().min(b.len())));
                }
                Ok(a.iter().copied().zip(b.iter().copied()).collect())
            }
        }
    }
}

/// `a / (1 + e^{-x}) + b ln(1 + x^2)`.
pub fn sigmoid_log(a: f64, b: f64, x: f64) -> f64 {
    a / (1.0 + (-x).exp()) + b * x.mul_add(x, 1.0).ln()
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of agents.
    pub n: usize,
    pub graph: GraphKind,
    /// Connectivity window `B` of the graph sequence.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub failure_rate: f64,
    /// Common local constraint set unless `local_intervals` is given.
    pub interval: Interval,
    #[serde(default)]
    pub local_intervals: Option<Vec<Interval>>,
    pub objective: ObjectiveSpec,
    /// Target accuracy; split evenly into `ε1 = ε2 = ε3 = ε / 3`.
    pub epsilon: f64,
    pub k1: usize,
    pub k2: usize,
    /// Lower bound on the per-round noise fraction.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub noise: NoiseSpec,
    /// Stopping period; defaults to `(N - 1) B`.
    #[serde(default)]
    pub u: Option<usize>,
    pub adversary: AdversaryModel,
    pub seed: u64,
    #[serde(default = "default_round_cap")]
    pub round_cap: usize,
    #[serde(default = "default_grid")]
    pub oracle_grid: usize,
}

fn default_window() -> usize {
    1
}

fn default_alpha() -> f64 {
    0.01
}

fn default_round_cap() -> usize {
    crate::consensus::DEFAULT_ROUND_CAP
}

fn default_grid() -> usize {
    ORACLE_GRID
}

impl Default for ScenarioConfig {
    /// The reference setup: 20 agents on `[-1, 1]`, `K1 = 10`, `K2 = 20`,
    /// `U(-1, 1)` noise, `p = 0.8`, `γ = 1e-5`.
    fn default() -> Self {
        ScenarioConfig {
            n: 20,
            graph: GraphKind::RingPlusRandom,
            window: 1,
            failure_rate: 0.0,
            interval: Interval::new(-1.0, 1.0).expect("valid"),
            local_intervals: None,
            objective: ObjectiveSpec::default(),
            epsilon: 1e-6,
            k1: 10,
            k2: 20,
            alpha: default_alpha(),
            noise: NoiseSpec::uniform(-1.0, 1.0).expect("valid"),
            u: None,
            adversary: AdversaryModel::default(),
            seed: 0,
            round_cap: default_round_cap(),
            oracle_grid: ORACLE_GRID,
        }
    }
}

impl ScenarioConfig {
    pub fn reference(seed: u64) -> Self {
        ScenarioConfig { seed, ..Default::default() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        ScenarioConfig { epsilon, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig { seed, ..self.clone() }
    }

    /// Reads TOML or JSON (chosen by extension, TOML otherwise). A
    /// `paper_defaults = true` key fills every missing field from
    /// [`ScenarioConfig::default`].
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::from_str_with(&text, is_json).map_err(|message| ConfigError::Parse { path: path.display().to_string(), message })
    }

    fn from_str_with(text: &str, is_json: bool) -> Result<Self, String> {
        let mut value: serde_json::Value =
            if is_json { serde_json::from_str(text).map_err(|e| e.to_string())? } else { toml::from_str(text).map_err(|e| e.to_string())? };
        let obj = value.as_object_mut().ok_or("config must be a table")?;
        let defaults = match obj.remove("paper_defaults") {
            None | Some(serde_json::Value::Bool(false)) => false,
            Some(serde_json::Value::Bool(true)) => true,
            Some(other) => return Err(format!("paper_defaults must be a boolean, got {other}")),
        };
        if defaults {
            let mut base = serde_json::to_value(ScenarioConfig::default()).map_err(|e| e.to_string())?;
            let base_obj = base.as_object_mut().expect("struct serializes to a map");
            for (k, v) in obj.iter() {
                base_obj.insert(k.clone(), v.clone());
            }
            value = base;
        }
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.oracle_grid < 10_000 {
            return Err(Error::InvalidParameter(format!("oracle grid needs >= 10^4 points, got {}", self.oracle_grid)));
        }
        if let Some(locals) = &self.local_intervals {
            if locals.len() != self.n {
                return Err(Error::AgentCountMismatch(self.n, locals.len()));
            }
        }
        if self.u == Some(0) {
            return Err(Error::InvalidParameter("U must be positive".into()));
        }
        self.graphs()?;
        self.protocol()?;
        Ok(())
    }

    pub fn graphs(&self) -> Result<GraphSequence> {
        GraphSequence::new(self.n, self.graph.clone(), self.seed, self.failure_rate, self.window)
    }

    pub fn protocol(&self) -> Result<ProtocolParams> {
        ProtocolParams::new(self.k1, self.k2, self.alpha)
    }

    /// `U`, the stopping period and interval-consensus budget.
    pub fn stop_period(&self) -> Result<usize> {
        Ok(self.u.unwrap_or(self.graphs()?.rounds_upper_bound()))
    }

    /// `ε / 3`, used for each of `ε1`, `ε2` and `ε3`.
    pub fn tolerance(&self) -> f64 {
        self.epsilon / 3.0
    }

    fn locals(&self) -> Vec<Interval> {
        self.local_intervals.clone().unwrap_or_else(|| vec![self.interval; self.n])
    }
}

/// Problems loading a configuration file.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
}

/// Per-agent results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub f_e_star: f64,
    pub x_p_star: f64,
    /// `m_i`.
    pub degree: usize,
    pub evaluations: usize,
    pub certified_gap: f64,
    pub fallback: bool,
    /// `|f_e* − f*|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub epsilon: f64,
    pub agents: Vec<AgentReport>,
    /// `m = max_i m_i`.
    pub m: usize,
    pub interval: Interval,
    /// Dissemination rounds until the stopping rule fired.
    pub stop_round: usize,
    /// Interval consensus plus dissemination rounds.
    pub communication_rounds: usize,
    /// `δ = ε2 / (m + 1)`.
    pub delta: f64,
    /// `max_i ‖p_i^K − p̄‖∞`.
    pub dissemination_error: f64,
    pub oracle_f: f64,
    pub oracle_x: f64,
    pub max_error: f64,
    pub trace: Vec<TraceRow>,
}

/// Minimum of `f` on a uniform grid of `points` nodes, refined by golden
/// section search inside the neighboring cells.
pub fn brute_force_optimum(f: impl Fn(f64) -> f64 + Sync, interval: Interval, points: usize) -> Result<(f64, f64)> {
    if points < 10_000 {
        return Err(Error::InvalidParameter(format!("oracle grid needs >= 10^4 points, got {points}")));
    }
    let h = interval.width() / (points - 1) as f64;
    let at = |k: usize| if k + 1 == points { interval.hi() } else { interval.lo() + h * k as f64 };
    let (best_k, best_v) = (0..points)
        .into_par_iter()
        .map(|k| (k, f(at(k))))
        .reduce(|| (usize::MAX, f64::INFINITY), |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let (mut lo, mut hi) = (at(best_k.saturating_sub(1)), at((best_k + 1).min(points - 1)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > GOLDEN_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    let v = f(x);
    Ok(if v < best_v { (v, x) } else { (best_v, at(best_k)) })
}

/// The average objective of a configuration and its oracle optimum.
pub fn oracle(cfg: &ScenarioConfig) -> Result<(f64, f64)> {
    let coeffs = cfg.objective.coefficients(cfg.n, cfg.seed)?;
    let interval = intersect(&cfg.locals())?;
    let n = cfg.n as f64;
    brute_force_optimum(move |x| coeffs.iter().map(|&(a, b)| sigmoid_log(a, b, x)).sum::<f64>() / n, interval, cfg.oracle_grid)
}

fn intersect(locals: &[Interval]) -> Result<Interval> {
    let lo = locals.iter().map(|i| i.lo()).fold(f64::NEG_INFINITY, f64::max);
    let hi = locals.iter().map(|i| i.hi()).fold(f64::INFINITY, f64::min);
    Interval::new(lo, hi).map_err(|_| Error::InfeasibleConstraints { lo, hi })
}

/// Agreed interval and per-agent proxies with their evaluation counts.
pub struct LocalProxies {
    pub interval: Interval,
    pub proxies: Vec<ChebProxy>,
    pub evaluations: Vec<usize>,
}

/// Interval consensus over graph rounds `0..U`, then one adaptive
/// interpolation per agent at `ε1`.
pub fn build_proxies(cfg: &ScenarioConfig) -> Result<LocalProxies> {
    let seq = cfg.graphs()?;
    let u = cfg.stop_period()?;
    let locals: Vec<(f64, f64)> = cfg.locals().iter().map(|i| (i.lo(), i.hi())).collect();
    let agreed = max_consensus_interval(&locals, &seq, u)?;
    let interval = agreed[0];
    if agreed.iter().any(|i| *i != interval) {
        return Err(Error::IntervalMismatch);
    }
    let coeffs = cfg.objective.coefficients(cfg.n, cfg.seed)?;
    let mut proxies = Vec::with_capacity(cfg.n);
    let mut evaluations = Vec::with_capacity(cfg.n);
    for (a, b) in coeffs {
        let f = ObjectiveFn::new(interval, move |x| sigmoid_log(a, b, x));
        proxies.push(adaptive_interpolate(&f, interval, cfg.tolerance())?);
        evaluations.push(f.evaluations());
    }
    Ok(LocalProxies { interval, proxies, evaluations })
}

/// Runs the whole algorithm and scores it against the oracle.
pub fn run_prcpoa(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let local = build_proxies(cfg)?;
    let seq = cfg.graphs()?;
    let u = cfg.stop_period()?;
    let stop = StopParams::new(u, cfg.tolerance())?;
    let opts = DisseminationOptions { round_cap: cfg.round_cap, stopping: true, record: false, graph_offset: u };
    let run = disseminate(&local.proxies, &seq, &cfg.noise, &cfg.protocol()?, &stop, cfg.seed, opts)?;
    let stop_round = run.stop_round.ok_or_else(|| Error::NonConvergence {
        rounds: run.trace.len(),
        last_error: run.trace.last().map_or(f64::NAN, |r| r.max_ratio_error),
    })?;
    let (oracle_f, oracle_x) = oracle(cfg)?;
    let m = local.proxies.iter().map(ChebProxy::degree).max().unwrap_or(0);
    let mut agents = Vec::with_capacity(cfg.n);
    for (i, out) in run.outputs.iter().enumerate() {
        let opt = minimize_proxy(out, cfg.tolerance())?;
        agents.push(AgentReport {
            f_e_star: opt.f_e_star,
            x_p_star: opt.x_p_star,
            degree: local.proxies[i].degree(),
            evaluations: local.evaluations[i],
            certified_gap: opt.certified_gap,
            fallback: opt.fallback,
            error: (opt.f_e_star - oracle_f).abs(),
        });
    }
    let max_error = agents.iter().map(|a| a.error).fold(0.0, f64::max);
    Ok(RunReport {
        seed: cfg.seed,
        epsilon: cfg.epsilon,
        m,
        interval: local.interval,
        stop_round,
        communication_rounds: u + stop_round,
        delta: stop.delta(m + 1),
        dissemination_error: run.final_error(),
        oracle_f,
        oracle_x,
        max_error,
        trace: run.trace,
        agents,
    })
}

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// Stopping round `K`.
    pub k: usize,
    pub error: f64,
}

/// One run per `ε`, in the given (decreasing) order.
pub fn scenario_convergence(cfg: &ScenarioConfig, epsilons: &[f64]) -> Result<(Vec<ConvergenceRow>, Vec<RunReport>)> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("epsilons must be strictly decreasing".into()));
    }
    let reports = epsilons.par_iter().map(|&e| run_prcpoa(&cfg.with_epsilon(e))).collect::<Result<Vec<_>>>()?;
    let rows = reports.iter().map(|r| ConvergenceRow { epsilon: r.epsilon, k: r.stop_round, error: r.max_error }).collect();
    Ok((rows, reports))
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("epsilon,K,error\n");
    for r in rows {
        s.push_str(&format!("{:e},{},{:e}\n", r.epsilon, r.k, r.error));
    }
    s
}

/// One row of the privacy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyRow {
    pub family: NoiseFamily,
    pub alpha_k: f64,
    pub beta_k_analytic: f64,
    /// Worst per-component hit rate of the simulated adversary.
    pub beta_k_empirical: f64,
    pub trials: usize,
}

/// Analytic `β_k` curves for zero-mean, unit-variance noise of each family,
/// with empirical adversary hit rates at the configured `p`.
pub fn scenario_privacy(
    cfg: &ScenarioConfig,
    alphas: &[f64],
    families: &[NoiseFamily],
    trials: usize,
) -> Result<Vec<PrivacyRow>> {
    if families.is_empty() {
        return Err(Error::InvalidParameter("need at least one noise family".into()));
    }
    let local = build_proxies(cfg)?;
    let mut rows = Vec::new();
    for &family in families {
        let noise = NoiseSpec::unit_variance(family);
        let exp = PrivacyExperiment {
            proxies: local.proxies.clone(),
            graphs: cfg.graphs()?,
            noise,
            params: cfg.protocol()?,
            target: 0,
        };
        let empirical = if trials > 0 {
            privacy::monte_carlo(&exp, &cfg.adversary, &[cfg.adversary.p()], alphas, trials, cfg.seed)?
        } else {
            Vec::new()
        };
        for (i, &a) in alphas.iter().enumerate() {
            rows.push(PrivacyRow {
                family,
                alpha_k: a,
                beta_k_analytic: privacy::beta_k(a, &noise, &cfg.adversary, cfg.k1, cfg.k2)?,
                beta_k_empirical: empirical.get(i).map_or(f64::NAN, |e| e.max_rate),
                trials,
            });
        }
    }
    Ok(rows)
}

pub fn privacy_csv(rows: &[PrivacyRow]) -> String {
    let mut s = String::from("family,alpha_k,beta_k_analytic,beta_k_empirical,trials\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.family, r.alpha_k, r.beta_k_analytic, r.beta_k_empirical, r.trials));
    }
    s
}

/// One dissemination run under link failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRun {
    pub rate: f64,
    pub seed: u64,
    /// First round after `K2` with ratio error at most `δ`.
    pub rounds_to_delta: Option<usize>,
    pub stop_round: Option<usize>,
    /// Least-squares fit of `ln(max ratio error)` against the round,
    /// over rounds after `K2`.
    pub decay: Option<LinearFit>,
    /// `max_i ‖p_i^K − p̄‖∞` at the stopping round.
    pub final_error: f64,
    pub delta: f64,
}

/// Aggregate over seeds for one failure rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub rate: f64,
    pub mean_rounds_to_delta: f64,
    pub mean_stop_round: f64,
    /// Runs that never fired the stopping rule within the round cap.
    pub failures: usize,
    pub runs: usize,
}

/// Dissemination of the configured proxies under each failure rate, for
/// `seeds` graph/noise seeds per rate. Seeds are shared across rates, so
/// the failed links at one rate are a subset of those at any higher rate.
pub fn scenario_robustness(cfg: &ScenarioConfig, rates: &[f64], seeds: usize) -> Result<(Vec<RobustnessRow>, Vec<RobustnessRun>)> {
    if rates.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::InvalidParameter("failure rates must lie in [0, 1)".into()));
    }
    let local = build_proxies(cfg)?;
    let params = cfg.protocol()?;
    let u = cfg.stop_period()?;
    let stop = StopParams::new(u, cfg.tolerance())?;
    let m = local.proxies.iter().map(ChebProxy::degree).max().unwrap_or(0);
    let delta = stop.delta(m + 1);
    let jobs: Vec<(f64, u64)> =
        rates.iter().flat_map(|&r| (0..seeds as u64).map(move |s| (r, rng::child_seed(cfg.seed, rng::STREAM_TRIAL, s)))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(rate, seed)| -> Result<RobustnessRun> {
            let seq = GraphSequence::new(cfg.n, cfg.graph.clone(), seed, rate, cfg.window)?;
            let opts = DisseminationOptions { round_cap: cfg.round_cap, stopping: true, record: false, graph_offset: u };
            let run = disseminate(&local.proxies, &seq, &cfg.noise, &params, &stop, seed, opts)?;
            Ok(RobustnessRun {
                rate,
                seed,
                rounds_to_delta: run.rounds_to(delta),
                stop_round: run.stop_round,
                decay: decay_fit(&run.trace, params.k2),
                final_error: run.final_error(),
                delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = rates
        .iter()
        .map(|&rate| {
            let mine: Vec<&RobustnessRun> = runs.iter().filter(|r| r.rate == rate).collect();
            let to_delta: Vec<f64> = mine.iter().filter_map(|r| r.rounds_to_delta).map(|k| k as f64).collect();
            let stops: Vec<f64> = mine.iter().filter_map(|r| r.stop_round).map(|k| k as f64).collect();
            RobustnessRow {
                rate,
                mean_rounds_to_delta: mean_std(&to_delta).0,
                mean_stop_round: mean_std(&stops).0,
                failures: mine.iter().filter(|r| r.stop_round.is_none()).count(),
                runs: mine.len(),
            }
        })
        .collect();
    Ok((rows, runs))
}

/// Fit of `ln(max ratio error)` against the round over rounds after `k2`
/// whose error is above the floating-point floor.
pub fn decay_fit(trace: &[TraceRow], k2: usize) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|r| r.round > k2 && r.max_ratio_error > 1e-13)
        .map(|r| (r.round as f64, r.max_ratio_error.ln()))
        .collect();
    linear_fit(&pts)
}

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut s = String::from("rate,mean_rounds_to_delta,mean_stop_round,failures,runs\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.rate, r.mean_rounds_to_delta, r.mean_stop_round, r.failures, r.runs));
    }
    s
}

/// Counter-based complexity summary over runs at different `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// Largest `evaluations / m_i` over all agents and runs.
    pub evaluations_per_degree: f64,
    /// True when every agent used at most `2 (2 m_i) + 1` evaluations.
    pub evaluations_within_bound: bool,
    /// Communication rounds against `ln(m / ε)`.
    pub rounds_vs_log_m_over_eps: LinearFit,
    /// Stopping round against `ln(1 / ε)`.
    pub rounds_vs_log_inv_eps: LinearFit,
}

pub fn complexity_report(reports: &[RunReport]) -> Result<ComplexityReport> {
    let mut eps: Vec<f64> = reports.iter().map(|r| r.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 2 {
        return Err(Error::NotEnoughPoints { needed: 2, got: eps.len() });
    }
    let agents = reports.iter().flat_map(|r| &r.agents);
    let evaluations_per_degree =
        agents.clone().map(|a| a.evaluations as f64 / a.degree.max(1) as f64).fold(0.0, f64::max);
    let evaluations_within_bound = agents.clone().all(|a| a.evaluations <= 4 * a.degree + 1);
    let pts_m: Vec<(f64, f64)> =
        reports.iter().map(|r| ((r.m.max(1) as f64 / r.epsilon).ln(), r.communication_rounds as f64)).collect();
    let pts_e: Vec<(f64, f64)> = reports.iter().map(|r| ((1.0 / r.epsilon).ln(), r.stop_round as f64)).collect();
    let fit = |p: &[(f64, f64)]| linear_fit(p).ok_or(Error::NotEnoughPoints { needed: 2, got: p.len() });
    Ok(ComplexityReport {
        evaluations_per_degree,
        evaluations_within_bound,
        rounds_vs_log_m_over_eps: fit(&pts_m)?,
        rounds_vs_log_inv_eps: fit(&pts_e)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> Interval {
        Interval::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn oracle_fixtures() {
        let (f, x) = brute_force_optimum(|x| x * x, unit(), 10_001).unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-9);
        let (f, x) = brute_force_optimum(|x| -x.cos(), unit(), 10_000).unwrap();
        assert_abs_diff_eq!(f, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-6);
        assert!(brute_force_optimum(|x| x, unit(), 100).is_err());
    }

    #[test]
    fn single_agent_run() {
        let cfg = ScenarioConfig { n: 1, epsilon: 1e-6, oracle_grid: 100_000, ..ScenarioConfig::reference(3) };
        let rep = run_prcpoa(&cfg).unwrap();
        assert!(rep.max_error <= 1e-6, "{}", rep.max_error);
        assert_eq!(rep.stop_round, cfg.k2 + 1);
    }

    #[test]
    fn identical_agents_stop_after_first_check() {
        let cfg = ScenarioConfig {
            n: 5,
            objective: ObjectiveSpec::Explicit { a: vec![10.0; 5], b: vec![5.0; 5] },
            oracle_grid: 100_000,
            ..ScenarioConfig::reference(9)
        };
        let rep = run_prcpoa(&cfg).unwrap();
        assert!(rep.max_error <= cfg.epsilon);
        assert!(rep.dissemination_error <= rep.delta);
    }

    #[test]
    fn config_parsing() {
        let cfg = ScenarioConfig::from_str_with("paper_defaults = true\nseed = 7\n", false).unwrap();
        assert_eq!(cfg, ScenarioConfig::reference(7));
        let json = serde_json::to_string(&ScenarioConfig::reference(5)).unwrap();
        assert_eq!(ScenarioConfig::from_str_with(&json, true).unwrap(), ScenarioConfig::reference(5));
        assert!(ScenarioConfig::from_str_with("seed = 7\n", false).is_err());
        assert!(ScenarioConfig::from_str_with("paper_defaults = true\nepsilon = -1.0\n", false).is_err());
        assert!(ScenarioConfig::from_str_with("paper_defaults = true\nbogus = 1\n", false).is_err());
    }

    #[test]
    fn complexity_needs_two_points() {
        let cfg = ScenarioConfig { n: 1, oracle_grid: 10_000, ..ScenarioConfig::reference(1) };
        let rep = run_prcpoa(&cfg).unwrap();
        let err = complexity_report(&[rep.clone(), rep]).unwrap_err();
        assert_eq!(err, Error::NotEnoughPoints { needed: 2, got: 1 });
        assert_eq!(err.to_string(), "need ≥ 2 points, got 1");
    }
}
