//! Privacy-preserving dissemination of coefficient vectors.
//!
//! Each agent perturbs its coefficient vector with noise, inserts the
//! perturbed entries into its push-sum numerator block by block during the
//! first `K1` rounds, removes the noise in `L` randomly chosen rounds of
//! `(K1, K2]`, and then runs plain push-sum together with max/min consensus
//! on two auxiliary vectors until the spread they report drops below
//! `δ = ε2 / (m + 1)`.
//!
//! Round `t` (1-based) proceeds as:
//!
//! * `t <= K1`: insert the block `d_i^t` into `x_i`, then mix;
//! * `K1 < t <= K2`: mix, then subtract `θ_i / L_i` if `t` is one of the
//!   agent's subtraction rounds;
//! * `t > K2`: mix `x, y` and the auxiliaries; every `U` rounds compare
//!   `‖r_i − s_i‖∞` against `δ` and reinitialize `r_i = s_i = x_i / y_i`.
//!
//! Vectors of unequal length are mixed by reading missing slots as zero; the
//! result takes the longest incoming length.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cheb::{proxy_average, ChebProxy, Interval};
use crate::error::{Error, Result};
use crate::netsim::{push_weights, GraphSequence, RoundGraph};
use crate::rng;

/// Largest number of rounds a dissemination run may take by default.
pub const DEFAULT_ROUND_CAP: usize = 100_000;

/// Redraw budget per noise component when enforcing `|θ(k)| > α`.
const MAX_NOISE_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Uniform,
    Normal,
    Laplace,
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(NoiseFamily::Uniform),
            "normal" | "gaussian" => Ok(NoiseFamily::Normal),
            "laplace" => Ok(NoiseFamily::Laplace),
            other => Err(Error::InvalidParameter(format!("unknown noise family `{other}`"))),
        }
    }
}

impl std::fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Normal => "normal",
            NoiseFamily::Laplace => "laplace",
        })
    }
}

/// Distribution of the masking noise.
///
/// `scale` is the half-width for uniform noise, the standard deviation for
/// normal noise and the diversity `b` for Laplace noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRaw", into = "NoiseSpecRaw")]
pub struct NoiseSpec {
    family: NoiseFamily,
    location: f64,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
struct NoiseSpecRaw {
    family: NoiseFamily,
    #[serde(default)]
    location: f64,
    scale: f64,
}

impl TryFrom<NoiseSpecRaw> for NoiseSpec {
    type Error = Error;
    fn try_from(r: NoiseSpecRaw) -> Result<Self> {
        NoiseSpec::new(r.family, r.location, r.scale)
    }
}

impl From<NoiseSpec> for NoiseSpecRaw {
    fn from(n: NoiseSpec) -> Self {
        NoiseSpecRaw { family: n.family, location: n.location, scale: n.scale }
    }
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && location.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise needs finite location and scale > 0, got {scale}")));
        }
        Ok(NoiseSpec { family, location, scale })
    }

    /// `U(lo, hi)`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        NoiseSpec::new(NoiseFamily::Uniform, 0.5 * (lo + hi), 0.5 * (hi - lo))
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        NoiseSpec::new(NoiseFamily::Normal, mean, sd)
    }

    pub fn laplace(location: f64, diversity: f64) -> Result<Self> {
        NoiseSpec::new(NoiseFamily::Laplace, location, diversity)
    }

    /// Zero-mean, unit-variance member of `family`.
    pub fn unit_variance(family: NoiseFamily) -> Self {
        let scale = match family {
            NoiseFamily::Uniform => 3f64.sqrt(),
            NoiseFamily::Normal => 1.0,
            NoiseFamily::Laplace => std::f64::consts::FRAC_1_SQRT_2,
        };
        NoiseSpec { family, location: 0.0, scale }
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Bounded support, if any.
    pub fn support(&self) -> Option<Interval> {
        match self.family {
            NoiseFamily::Uniform => Interval::new(self.location - self.scale, self.location + self.scale).ok(),
            _ => None,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.family {
            NoiseFamily::Uniform => self.scale * self.scale / 3.0,
            NoiseFamily::Normal => self.scale * self.scale,
            NoiseFamily::Laplace => 2.0 * self.scale * self.scale,
        }
    }

    /// Largest probability mass any window of half-width `alpha` can
    /// capture; attained by centering the window at the location.
    pub fn max_window_mass(&self, alpha: f64) -> f64 {
        let alpha = alpha.max(0.0);
        match self.family {
            NoiseFamily::Uniform => (alpha / self.scale).min(1.0),
            NoiseFamily::Normal => libm::erf(alpha / (self.scale * std::f64::consts::SQRT_2)),
            NoiseFamily::Laplace => 1.0 - (-alpha / self.scale).exp(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = match self.family {
            NoiseFamily::Uniform => rng.random_range(-1.0..1.0),
            NoiseFamily::Normal => StandardNormal.sample(rng),
            NoiseFamily::Laplace => {
                let a: f64 = Exp1.sample(rng);
                let b: f64 = Exp1.sample(rng);
                a - b
            }
        };
        self.location + self.scale * z
    }
}

/// Shared protocol constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Last insertion round.
    pub k1: usize,
    /// Last subtraction round.
    pub k2: usize,
    /// Every subtracted fraction must exceed this in magnitude.
    pub alpha: f64,
}

impl ProtocolParams {
    pub fn new(k1: usize, k2: usize, alpha: f64) -> Result<Self> {
        if k1 < 1 || k2 <= k1 {
            return Err(Error::InvalidParameter(format!("need K2 > K1 >= 1, got K1 = {k1}, K2 = {k2}")));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(ProtocolParams { k1, k2, alpha })
    }

    pub fn subtraction_window(&self) -> usize {
        self.k2 - self.k1
    }
}

/// One agent's private randomness: insertion counts, number of
/// subtractions and the rounds they happen in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSchedule {
    /// `d_i^t` for `t = 1..=K1` (index `t - 1`).
    pub insert_counts: Vec<usize>,
    /// `L_i`.
    pub subtraction_count: usize,
    /// Sorted rounds in `(K1, K2]`.
    pub subtraction_rounds: Vec<usize>,
    /// How many noise components were redrawn to meet `|θ(k)| > α`.
    pub noise_redraws: usize,
}

impl AgentSchedule {
    /// Round in which 0-based slot `k` is inserted.
    pub fn insertion_round(&self, k: usize) -> Option<usize> {
        let mut upto = 0;
        for (t, d) in self.insert_counts.iter().enumerate() {
            upto += d;
            if k < upto {
                return Some(t + 1);
            }
        }
        None
    }

    /// `l_i^t`, the number of slots inserted by the end of round `t`.
    pub fn inserted_by(&self, t: usize) -> usize {
        self.insert_counts.iter().take(t).sum()
    }
}

/// Draws the noise vector and schedule for one agent.
///
/// Components with `|θ(k)| <= α` are redrawn so that `L = 1` is always
/// admissible; `L` is then drawn uniformly from `{1, ..., K2 - K1}` and
/// redrawn until `|θ(k) / L| > α` for every `k`.
pub fn draw_perturbation<R: Rng + ?Sized>(
    dim: usize,
    noise: &NoiseSpec,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<(Vec<f64>, AgentSchedule)> {
    let mut redraws = 0;
    let mut theta = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut v = noise.sample(rng);
        let mut tries = 0;
        while v.abs() <= params.alpha {
            tries += 1;
            if tries > MAX_NOISE_REDRAWS {
                return Err(Error::InvalidParameter(format!(
                    "noise {noise:?} cannot satisfy |theta| > alpha = {}",
                    params.alpha
                )));
            }
            v = noise.sample(rng);
        }
        redraws += tries;
        theta.push(v);
    }
    let min_abs = theta.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let window = params.subtraction_window();
    let subtraction_count = loop {
        let l = rng.random_range(1..=window);
        if l == 1 || min_abs / l as f64 > params.alpha {
            break l;
        }
    };
    let mut insert_counts = vec![0; params.k1];
    for _ in 0..dim {
        insert_counts[rng.random_range(0..params.k1)] += 1;
    }
    let mut subtraction_rounds: Vec<usize> =
        index::sample(rng, window, subtraction_count).into_iter().map(|r| params.k1 + 1 + r).collect();
    subtraction_rounds.sort_unstable();
    Ok((theta, AgentSchedule { insert_counts, subtraction_count, subtraction_rounds, noise_redraws: redraws }))
}

/// Local state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Push-sum numerator; grows as slots are inserted or received.
    pub x: Vec<f64>,
    /// Push-sum weight.
    pub y: f64,
    /// Max auxiliary.
    pub r: Vec<f64>,
    /// Min auxiliary.
    pub s: Vec<f64>,
    /// `l_i^t`.
    pub inserted_upto: usize,
    /// Last round whose block was inserted.
    pub inserted_round: usize,
    /// `θ_i`.
    pub noise: Vec<f64>,
    /// `p_i^0 + θ_i`.
    pub perturbed: Vec<f64>,
    pub schedule: AgentSchedule,
    pub subtractions_done: usize,
}

impl AgentState {
    /// Fresh state holding `coeffs` perturbed by `noise`, with `x` still
    /// empty and `y = 1`.
    pub fn new(coeffs: &[f64], noise: Vec<f64>, schedule: AgentSchedule) -> Result<Self> {
        if noise.len() != coeffs.len() {
            return Err(Error::InvalidParameter("noise and coefficient lengths differ".into()));
        }
        if schedule.insert_counts.iter().sum::<usize>() != coeffs.len() {
            return Err(Error::InvalidParameter("insertion counts must sum to the coefficient count".into()));
        }
        let perturbed = coeffs.iter().zip(&noise).map(|(c, n)| c + n).collect();
        Ok(AgentState {
            x: Vec::new(),
            y: 1.0,
            r: Vec::new(),
            s: Vec::new(),
            inserted_upto: 0,
            inserted_round: 0,
            noise,
            perturbed,
            schedule,
            subtractions_done: 0,
        })
    }

    /// `x_i / y_i`.
    pub fn ratio(&self) -> Vec<f64> {
        self.x.iter().map(|v| v / self.y).collect()
    }

    /// `θ_i(k) / L_i`.
    pub fn subtracted_fraction(&self) -> Vec<f64> {
        let l = self.schedule.subtraction_count as f64;
        self.noise.iter().map(|v| v / l).collect()
    }
}

/// Adds the round-`t` block of the perturbed vector into `x` (Step 2).
pub fn insert_block(state: &mut AgentState, t: usize, k1: usize) -> Result<()> {
    if t == 0 || t > k1 || t > state.schedule.insert_counts.len() {
        return Err(Error::ProtocolOrder(format!("insertion at round {t} outside [1, {k1}]")));
    }
    let from = state.schedule.inserted_by(t - 1);
    if state.inserted_round + 1 != t || state.inserted_upto != from {
        return Err(Error::ProtocolOrder(format!("round {t} insertion repeated or skipped")));
    }
    let to = from + state.schedule.insert_counts[t - 1];
    if state.x.len() < to {
        state.x.resize(to, 0.0);
    }
    for k in from..to {
        state.x[k] += state.perturbed[k];
    }
    state.inserted_upto = to;
    state.inserted_round = t;
    Ok(())
}

/// Removes one fraction `θ_i / L_i` of the noise from `x` (Step 3).
pub fn subtract_noise(state: &mut AgentState, t: usize) -> Result<()> {
    if state.subtractions_done >= state.schedule.subtraction_count {
        return Err(Error::ProtocolOrder(format!(
            "more than L = {} subtractions",
            state.schedule.subtraction_count
        )));
    }
    if !state.schedule.subtraction_rounds.contains(&t) {
        return Err(Error::ProtocolOrder(format!("round {t} is not a subtraction round")));
    }
    if state.x.len() < state.noise.len() {
        return Err(Error::ProtocolOrder("subtraction before all slots were inserted".into()));
    }
    let l = state.schedule.subtraction_count as f64;
    for (x, theta) in state.x.iter_mut().zip(&state.noise) {
        *x -= theta / l;
    }
    state.subtractions_done += 1;
    Ok(())
}

/// One push-sum mixing step on `x` and `y` with the graph's push weights.
pub fn push_sum_round(states: &mut [AgentState], g: &RoundGraph) {
    let n = states.len();
    let w = push_weights(g);
    let mut new_x: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut new_y = vec![0.0; n];
    for j in 0..n {
        for &i in g.out_neighbors(j) {
            let a = w.get(i, j);
            let xs = &states[j].x;
            if new_x[i].len() < xs.len() {
                new_x[i].resize(xs.len(), 0.0);
            }
            for (acc, v) in new_x[i].iter_mut().zip(xs) {
                *acc += a * v;
            }
            new_y[i] += a * states[j].y;
        }
    }
    for ((st, x), y) in states.iter_mut().zip(new_x).zip(new_y) {
        st.x = x;
        st.y = y;
    }
}

/// Componentwise max of `r` and min of `s` over in-neighbors. Missing slots
/// read as zero, which is the ratio value of a slot an agent has not
/// received yet.
pub fn max_min_round(states: &mut [AgentState], g: &RoundGraph) {
    let n = states.len();
    let mut new_r: Vec<Vec<f64>> = states.iter().map(|s| s.r.clone()).collect();
    let mut new_s: Vec<Vec<f64>> = states.iter().map(|s| s.s.clone()).collect();
    for j in 0..n {
        for &i in g.out_neighbors(j) {
            if i == j {
                continue;
            }
            merge(&mut new_r[i], &states[j].r, f64::max);
            merge(&mut new_s[i], &states[j].s, f64::min);
        }
    }
    for ((st, r), s) in states.iter_mut().zip(new_r).zip(new_s) {
        st.r = r;
        st.s = s;
    }
}

fn merge(acc: &mut Vec<f64>, other: &[f64], op: fn(f64, f64) -> f64) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0.0);
    }
    for (k, a) in acc.iter_mut().enumerate() {
        *a = op(*a, other.get(k).copied().unwrap_or(0.0));
    }
}

/// Stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopParams {
    /// `U`, an upper bound on `(N - 1) B`; also the reinitialization period.
    pub u: usize,
    /// `ε2`; the componentwise tolerance is `ε2 / (m + 1)`.
    pub eps2: f64,
}

impl StopParams {
    pub fn new(u: usize, eps2: f64) -> Result<Self> {
        if u < 1 || !(eps2 > 0.0) {
            return Err(Error::InvalidParameter(format!("need U >= 1 and eps2 > 0, got U = {u}, eps2 = {eps2}")));
        }
        Ok(StopParams { u, eps2 })
    }

    /// `δ` for vectors with `dim = m + 1` entries.
    pub fn delta(&self, dim: usize) -> f64 {
        self.eps2 / dim.max(1) as f64
    }
}

/// One round of the stopping phase: mix, propagate the auxiliaries, and on
/// every `U`-th round after `K2` evaluate the criterion and reinitialize.
///
/// `rounds_since_k2` counts this round (the first stopping round is 1).
/// Returns per-agent flags, all `false` on non-check rounds.
pub fn stopping_round(
    states: &mut [AgentState],
    g: &RoundGraph,
    params: &StopParams,
    rounds_since_k2: usize,
) -> Vec<bool> {
    push_sum_round(states, g);
    max_min_round(states, g);
    if rounds_since_k2 == 0 || !rounds_since_k2.is_multiple_of(params.u) {
        return vec![false; states.len()];
    }
    states
        .iter_mut()
        .map(|st| {
            let spread = st.r.iter().zip(&st.s).fold(0.0_f64, |m, (r, s)| m.max(r - s));
            let converged = spread <= params.delta(st.r.len());
            if !converged {
                reinit_aux(st);
            }
            converged
        })
        .collect()
}

fn reinit_aux(st: &mut AgentState) {
    st.r = st.ratio();
    st.s = st.r.clone();
}

/// Per-agent feasible intervals after `rounds` rounds of max/min consensus
/// on the local interval endpoints.
pub fn max_consensus_interval(
    local: &[(f64, f64)],
    seq: &GraphSequence,
    rounds: usize,
) -> Result<Vec<Interval>> {
    if local.len() != seq.n() {
        return Err(Error::AgentCountMismatch(seq.n(), local.len()));
    }
    let mut lo: Vec<f64> = local.iter().map(|p| p.0).collect();
    let mut hi: Vec<f64> = local.iter().map(|p| p.1).collect();
    for t in 0..rounds {
        let g = seq.next_graph(t);
        let (mut nlo, mut nhi) = (lo.clone(), hi.clone());
        for (j, i) in g.edges() {
            nlo[i] = nlo[i].max(lo[j]);
            nhi[i] = nhi[i].min(hi[j]);
        }
        lo = nlo;
        hi = nhi;
    }
    lo.iter()
        .zip(&hi)
        .map(|(&a, &b)| Interval::new(a, b).map_err(|_| Error::InfeasibleConstraints { lo: a, hi: b }))
        .collect()
}

/// One row of the dissemination trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    /// `max_i ‖x_i / y_i − p̄‖∞`.
    pub max_ratio_error: f64,
    /// Worst per-slot relative gap between `Σ_i x_i(k)` and the mass the
    /// protocol has injected so far; from `K2` on the reference is
    /// `Σ_i p_i^0(k)`.
    pub mass_residual: f64,
    /// `Σ_i y_i`.
    pub y_total: f64,
    pub min_y: f64,
    /// True on the round the stopping rule fired for every agent.
    pub stopped: bool,
}

/// What one agent sent and ended up with in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub graph: RoundGraph,
    /// `x_j^{t+}`, the vectors transmitted this round.
    pub sent: Vec<Vec<f64>>,
    pub sent_y: Vec<f64>,
    /// States after mixing and any subtraction.
    pub post: Vec<Vec<f64>>,
    pub post_y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisseminationOptions {
    pub round_cap: usize,
    /// When false, no stopping checks happen and the run lasts exactly
    /// `round_cap` rounds.
    pub stopping: bool,
    /// Keep per-round transmissions.
    pub record: bool,
    /// Index of the first graph used; earlier graphs belong to other phases.
    pub graph_offset: usize,
}

impl Default for DisseminationOptions {
    fn default() -> Self {
        DisseminationOptions { round_cap: DEFAULT_ROUND_CAP, stopping: true, record: false, graph_offset: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Dissemination {
    /// `p_i^K` as proxies on the shared interval.
    pub outputs: Vec<ChebProxy>,
    /// The stopping round `K`, if the rule fired.
    pub stop_round: Option<usize>,
    pub trace: Vec<TraceRow>,
    pub records: Vec<RoundRecord>,
    pub states: Vec<AgentState>,
    /// `p̄`, for diagnostics.
    pub average: ChebProxy,
    pub params: ProtocolParams,
}

impl Dissemination {
    /// `max_i ‖p_i^K − p̄‖∞`.
    pub fn final_error(&self) -> f64 {
        self.outputs.iter().map(|p| sup_gap(p.coeffs(), self.average.coeffs())).fold(0.0, f64::max)
    }

    /// First round after `K2` where the ratio error is at most `tol`.
    pub fn rounds_to(&self, tol: f64) -> Option<usize> {
        self.trace.iter().find(|r| r.round > self.params.k2 && r.max_ratio_error <= tol).map(|r| r.round)
    }
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// Runs the full protocol and errors if the stopping rule never fires.
pub fn run_dissemination(
    proxies: &[ChebProxy],
    seq: &GraphSequence,
    noise: &NoiseSpec,
    params: &ProtocolParams,
    stop: &StopParams,
    seed: u64,
) -> Result<Dissemination> {
    let run = disseminate(proxies, seq, noise, params, stop, seed, DisseminationOptions::default())?;
    if run.stop_round.is_none() {
        let last_error = run.trace.last().map_or(f64::NAN, |r| r.max_ratio_error);
        return Err(Error::NonConvergence { rounds: run.trace.len(), last_error });
    }
    Ok(run)
}

/// Runs the protocol, reporting non-convergence through
/// [`Dissemination::stop_round`] instead of an error.
pub fn disseminate(
    proxies: &[ChebProxy],
    seq: &GraphSequence,
    noise: &NoiseSpec,
    params: &ProtocolParams,
    stop: &StopParams,
    seed: u64,
    opts: DisseminationOptions,
) -> Result<Dissemination> {
    if proxies.len() != seq.n() {
        return Err(Error::AgentCountMismatch(seq.n(), proxies.len()));
    }
    let average = proxy_average(proxies)?;
    let interval = average.interval();
    let dim = average.coeffs().len();

    let mut states = Vec::with_capacity(proxies.len());
    for (i, p) in proxies.iter().enumerate() {
        let mut r = rng::stream(rng::child_seed(seed, rng::STREAM_NOISE, i as u64), 0);
        let (theta, schedule) = draw_perturbation(p.coeffs().len(), noise, params, &mut r)?;
        states.push(AgentState::new(p.coeffs(), theta, schedule)?);
    }

    let target_mass: Vec<f64> = average.coeffs().iter().map(|c| c * proxies.len() as f64).collect();
    let mut ledger = vec![0.0; dim];
    let mut trace = Vec::new();
    let mut records = Vec::new();
    let mut stop_round = None;

    for t in 1..=opts.round_cap {
        let g = seq.next_graph(opts.graph_offset + t - 1);
        let mut flags_all = false;
        if t <= params.k1 {
            for st in states.iter_mut() {
                let from = st.inserted_upto;
                insert_block(st, t, params.k1)?;
                for k in from..st.inserted_upto {
                    ledger[k] += st.perturbed[k];
                }
            }
        }
        let sent = opts.record.then(|| snapshot(&states));
        if t <= params.k2 {
            push_sum_round(&mut states, &g);
            if t > params.k1 {
                for st in states.iter_mut() {
                    if st.schedule.subtraction_rounds.contains(&t) {
                        subtract_noise(st, t)?;
                        let l = st.schedule.subtraction_count as f64;
                        for (acc, th) in ledger.iter_mut().zip(&st.noise) {
                            *acc -= th / l;
                        }
                    }
                }
            }
            if t == params.k2 {
                states.iter_mut().for_each(reinit_aux);
            }
        } else if opts.stopping {
            let flags = stopping_round(&mut states, &g, stop, t - params.k2);
            flags_all = flags.iter().all(|&f| f);
        } else {
            push_sum_round(&mut states, &g);
        }

        if let Some((sent, sent_y)) = sent {
            let (post, post_y) = snapshot(&states);
            records.push(RoundRecord { round: t, graph: g, sent, sent_y, post, post_y });
        }
        let reference = if t >= params.k2 { &target_mass } else { &ledger };
        trace.push(trace_row(t, &states, average.coeffs(), reference, flags_all));
        if flags_all {
            stop_round = Some(t);
            break;
        }
    }

    let outputs = states
        .iter()
        .map(|st| ChebProxy::new(interval, if st.x.is_empty() { vec![0.0] } else { st.ratio() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dissemination { outputs, stop_round, trace, records, states, average, params: *params })
}

fn snapshot(states: &[AgentState]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (states.iter().map(|s| s.x.clone()).collect(), states.iter().map(|s| s.y).collect())
}

fn trace_row(round: usize, states: &[AgentState], average: &[f64], reference: &[f64], stopped: bool) -> TraceRow {
    let max_ratio_error = states.iter().map(|st| sup_gap(&st.ratio(), average)).fold(0.0, f64::max);
    let mut mass = vec![0.0; reference.len()];
    for st in states {
        for (m, v) in mass.iter_mut().zip(&st.x) {
            *m += v;
        }
    }
    let mass_residual =
        mass.iter().zip(reference).map(|(m, r)| (m - r).abs() / (1.0 + r.abs())).fold(0.0, f64::max);
    TraceRow {
        round,
        max_ratio_error,
        mass_residual,
        y_total: states.iter().map(|s| s.y).sum(),
        min_y: states.iter().map(|s| s.y).fold(f64::INFINITY, f64::min),
        stopped,
    }
}
