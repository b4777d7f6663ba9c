//! Disclosure bounds for the dissemination protocol and a simulated
//! honest-but-curious adversary to test them against.
//!
//! The adversary sits at (or next to) agent `i`, always sees what `i`
//! transmits, and in each round independently learns everything `i`'s
//! in-neighbors transmitted with probability `p`. With the in-neighbor
//! messages of round `t_k − 1` it recovers the perturbed entry `p̃_i(k)`;
//! with those of every round in `(K1, K2]` as well it also recovers the
//! noise and hence `p_i^0(k)` exactly. Otherwise it falls back to guessing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cheb::ChebProxy;
use crate::consensus::{
    disseminate, DisseminationOptions, Dissemination, NoiseFamily, NoiseSpec, ProtocolParams, StopParams,
};
use crate::error::{Error, Result};
use crate::netsim::{push_weights, GraphSequence};
use crate::rng;

/// Prior the adversary holds over the degree `m_i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DegreePrior {
    /// Uniform over the powers of two `2, 4, ..., m`.
    #[default]
    PowersOfTwo,
    /// Explicit `(degree, probability)` pairs.
    Explicit { support: Vec<(usize, f64)> },
}

impl DegreePrior {
    /// `F(x) = Pr{m_i <= x}` given the public upper bound `m`.
    pub fn cdf(&self, x: usize, m: usize) -> f64 {
        match self {
            DegreePrior::PowersOfTwo => {
                let support: Vec<usize> = std::iter::successors(Some(2usize), |d| d.checked_mul(2))
                    .take_while(|&d| d <= m.max(2))
                    .collect();
                support.iter().filter(|&&d| d <= x).count() as f64 / support.len() as f64
            }
            DegreePrior::Explicit { support } => {
                support.iter().filter(|(d, _)| *d <= x).map(|(_, w)| w).sum::<f64>().min(1.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let DegreePrior::Explicit { support } = self {
            let total: f64 = support.iter().map(|(_, w)| w).sum();
            if support.iter().any(|(_, w)| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("degree prior must sum to 1, got {total}")));
            }
        }
        Ok(())
    }
}

/// What the adversary can learn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdversaryRaw", into = "AdversaryRaw")]
pub struct AdversaryModel {
    p: f64,
    gamma: f64,
    prior: DegreePrior,
}

#[derive(Serialize, Deserialize)]
struct AdversaryRaw {
    p: f64,
    gamma: f64,
    #[serde(default)]
    prior: DegreePrior,
}

impl TryFrom<AdversaryRaw> for AdversaryModel {
    type Error = Error;
    fn try_from(r: AdversaryRaw) -> Result<Self> {
        AdversaryModel::new(r.p, r.gamma, r.prior)
    }
}

impl From<AdversaryModel> for AdversaryRaw {
    fn from(a: AdversaryModel) -> Self {
        AdversaryRaw { p: a.p, gamma: a.gamma, prior: a.prior }
    }
}

impl Default for AdversaryModel {
    fn default() -> Self {
        AdversaryModel { p: 0.8, gamma: 1e-5, prior: DegreePrior::PowersOfTwo }
    }
}

impl AdversaryModel {
    /// `p` may be 0 or 1 to simulate the blind and omniscient extremes.
    pub fn new(p: f64, gamma: f64, prior: DegreePrior) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        prior.validate()?;
        Ok(AdversaryModel { p, gamma, prior })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prior(&self) -> &DegreePrior {
        &self.prior
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        AdversaryModel::new(p, self.gamma, self.prior.clone())
    }

    /// True when `γ` is not small next to `p · max window mass` at `alpha_k`.
    pub fn gamma_is_large(&self, noise: &NoiseSpec, alpha_k: f64) -> bool {
        self.gamma > 0.01 * self.p * noise.max_window_mass(alpha_k)
    }
}

/// `h_i(α_k) = p · max_ν Pr{|θ − ν| <= α_k} + γ`.
pub fn h_i(alpha_k: f64, noise: &NoiseSpec, adv: &AdversaryModel) -> Result<f64> {
    if !(alpha_k >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha_k must be >= 0, got {alpha_k}")));
    }
    Ok(adv.p * noise.max_window_mass(alpha_k) + adv.gamma)
}

/// Per-component disclosure bound, clamped to `[0, 1]`.
pub fn beta_k(alpha_k: f64, noise: &NoiseSpec, adv: &AdversaryModel, k1: usize, k2: usize) -> Result<f64> {
    if k2 <= k1 {
        return Err(Error::InvalidParameter(format!("need K2 > K1, got K1 = {k1}, K2 = {k2}")));
    }
    let h = h_i(alpha_k, noise, adv)?;
    let extreme = adv.p.powi((k2 - k1 + 1) as i32);
    Ok(((1.0 - extreme) * h + extreme).clamp(0.0, 1.0))
}

/// Bound for the whole vector at total accuracy `alpha` split as `split`
/// over the `m_i + 1` real components.
///
/// The null slots `m_i + 2 ..= m + 1` contribute `F(k − 2)` each.
pub fn beta_total(
    alpha: f64,
    split: &[f64],
    m_i: usize,
    m: usize,
    noise: &NoiseSpec,
    adv: &AdversaryModel,
    k1: usize,
    k2: usize,
) -> Result<f64> {
    if m_i > m {
        return Err(Error::InvalidParameter(format!("m_i = {m_i} exceeds m = {m}")));
    }
    if split.len() != m_i + 1 {
        return Err(Error::InvalidParameter(format!("split has {} entries, need m_i + 1 = {}", split.len(), m_i + 1)));
    }
    let sum: f64 = split.iter().sum();
    if split.iter().any(|&a| !(0.0..=alpha).contains(&a)) || (sum - alpha).abs() > 1e-9 * alpha.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!("split must lie in [0, alpha] and sum to alpha = {alpha}, sums to {sum}")));
    }
    let mut beta = 1.0;
    for &a in split {
        beta *= beta_k(a, noise, adv, k1, k2)?;
    }
    for k in m_i + 2..=m + 1 {
        beta *= adv.prior.cdf(k - 2, m);
    }
    Ok(beta)
}

/// Analytic and aggregate bounds for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub family: NoiseFamily,
    /// `(α_k, β_k)` per real component.
    pub components: Vec<(f64, f64)>,
    pub alpha: f64,
    pub beta: f64,
    /// Set when `γ` is not small relative to the informed term.
    pub gamma_warning: bool,
}

/// Bounds for an even split of `alpha` over `m_i + 1` components.
pub fn privacy_report(
    alpha: f64,
    m_i: usize,
    m: usize,
    noise: &NoiseSpec,
    adv: &AdversaryModel,
    params: &ProtocolParams,
) -> Result<PrivacyReport> {
    let a = alpha / (m_i + 1) as f64;
    let split = vec![a; m_i + 1];
    let bk = beta_k(a, noise, adv, params.k1, params.k2)?;
    let beta = beta_total(alpha, &split, m_i, m, noise, adv, params.k1, params.k2)?;
    Ok(PrivacyReport {
        family: noise.family(),
        components: vec![(a, bk); m_i + 1],
        alpha,
        beta,
        gamma_warning: adv.gamma_is_large(noise, a),
    })
}

/// The adversary's reconstruction of one agent's vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryEstimate {
    pub estimate: Vec<f64>,
    /// Components where the extreme case held and recovery is exact.
    pub exact: Vec<bool>,
    /// Components where `p̃_i(k)` was recovered.
    pub perturbed_known: Vec<bool>,
}

impl AdversaryEstimate {
    /// Per-component `|p̂(k) − p^0(k)| <= alpha_k`.
    pub fn hits(&self, truth: &[f64], alpha_k: f64) -> Vec<bool> {
        self.estimate.iter().zip(truth).map(|(e, t)| (e - t).abs() <= alpha_k).collect()
    }

    /// `‖p̂ − p^0‖₁ <= alpha`.
    pub fn hit(&self, truth: &[f64], alpha: f64) -> bool {
        self.estimate.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() <= alpha
    }
}

/// Runs the adversary against agent `target` of a recorded run.
///
/// `knows[t]` says whether the in-neighbor transmissions of round `t` are
/// visible (`t = 0` is the empty round before the protocol starts), and must
/// cover rounds `0..=K2`. The adversary is told `t_k`. Guesses are drawn
/// from `rng`; `alpha_k` sizes the blind-guess domain so that a blind guess
/// lands within `alpha_k` with probability at most `γ`.
pub fn empirical_adversary<R: Rng + ?Sized>(
    run: &Dissemination,
    target: usize,
    knows: &[bool],
    alpha_k: f64,
    noise: &NoiseSpec,
    adv: &AdversaryModel,
    rng: &mut R,
) -> Result<AdversaryEstimate> {
    let params = run.params;
    if run.records.len() < params.k2 {
        return Err(Error::MissingTransmissions);
    }
    if knows.len() <= params.k2 {
        return Err(Error::InvalidParameter(format!("knowledge draws must cover rounds 0..={}", params.k2)));
    }
    let state = run.states.get(target).ok_or_else(|| Error::InvalidParameter(format!("no agent {target}")))?;
    let dim = state.noise.len();

    // Noise removed in (K1, K2], as far as visible: mixed value minus
    // what the agent sends on.
    let window_known = (params.k1 + 1..=params.k2).all(|t| knows[t]);
    let noise_removed: Vec<f64> = if window_known {
        let mut acc = vec![0.0; dim];
        for t in params.k1 + 1..=params.k2 {
            let rec = &run.records[t - 1];
            let mixed = mixed_at(run, t, target);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += mixed.get(k).copied().unwrap_or(0.0) - rec.post[target].get(k).copied().unwrap_or(0.0);
            }
        }
        acc
    } else {
        Vec::new()
    };

    let mut estimate = Vec::with_capacity(dim);
    let mut exact = Vec::with_capacity(dim);
    let mut perturbed_known = Vec::with_capacity(dim);
    for k in 0..dim {
        let tk = state.schedule.insertion_round(k).ok_or(Error::MissingTransmissions)?;
        let truth = state.perturbed[k] - state.noise[k];
        if knows[tk - 1] {
            let before = if tk == 1 { 0.0 } else { mixed_at(run, tk - 1, target).get(k).copied().unwrap_or(0.0) };
            let sent = run.records[tk - 1].sent[target].get(k).copied().unwrap_or(0.0);
            let p_tilde = sent - before;
            perturbed_known.push(true);
            if window_known {
                estimate.push(p_tilde - noise_removed[k]);
                exact.push(true);
            } else {
                estimate.push(p_tilde - noise.location());
                exact.push(false);
            }
        } else {
            // Blind guess: uniform over a domain of length 2 α_k / γ that
            // contains the true value at a random position.
            let half = alpha_k.max(f64::MIN_POSITIVE) / adv.gamma;
            let centre = truth + rng.random_range(-half..half);
            estimate.push(centre + rng.random_range(-half..half));
            perturbed_known.push(false);
            exact.push(false);
        }
    }
    Ok(AdversaryEstimate { estimate, exact, perturbed_known })
}

/// `Σ_j a_ij^t x_j^{t+}` for round `t`.
fn mixed_at(run: &Dissemination, t: usize, target: usize) -> Vec<f64> {
    let rec = &run.records[t - 1];
    let w = push_weights(&rec.graph);
    let mut out: Vec<f64> = Vec::new();
    for j in rec.graph.in_neighbors(target) {
        let a = w.get(target, j);
        let xs = &rec.sent[j];
        if out.len() < xs.len() {
            out.resize(xs.len(), 0.0);
        }
        for (o, v) in out.iter_mut().zip(xs) {
            *o += a * v;
        }
    }
    out
}

/// One Monte-Carlo cell: adversary strength and accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRate {
    pub p: f64,
    pub alpha_k: f64,
    /// Hit rate of the worst component.
    pub max_rate: f64,
    /// Hit rate pooled over components.
    pub mean_rate: f64,
    pub trials: usize,
    /// Binomial standard error at `beta_k`.
    pub sigma: f64,
    pub beta_k: f64,
}

/// Setup shared by all Monte-Carlo trials.
#[derive(Debug, Clone)]
pub struct PrivacyExperiment {
    pub proxies: Vec<ChebProxy>,
    pub graphs: GraphSequence,
    pub noise: NoiseSpec,
    pub params: ProtocolParams,
    pub target: usize,
}

/// Estimates per-component hit rates for every `(p, α_k)` pair.
///
/// Each trial reruns the protocol with fresh noise and schedules; the
/// knowledge draws use one uniform per round, shared across `p` values, so
/// a stronger adversary always knows a superset of rounds.
pub fn monte_carlo(
    exp: &PrivacyExperiment,
    adversary: &AdversaryModel,
    ps: &[f64],
    alphas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<EmpiricalRate>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let models: Vec<AdversaryModel> = ps.iter().map(|&p| adversary.with_p(p)).collect::<Result<_>>()?;
    let stop = StopParams::new(1, 1.0)?;
    let opts = DisseminationOptions { round_cap: exp.params.k2, stopping: false, record: true, graph_offset: 0 };

    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<Vec<usize>>> {
            let trial_seed = rng::child_seed(seed, rng::STREAM_TRIAL, trial as u64);
            let run = disseminate(&exp.proxies, &exp.graphs, &exp.noise, &exp.params, &stop, trial_seed, opts)?;
            let truth = exp.proxies[exp.target].coeffs();
            let mut r = rng::stream(rng::child_seed(seed, rng::STREAM_ADVERSARY, trial as u64), 0);
            let draws: Vec<f64> = (0..=exp.params.k2).map(|_| r.random::<f64>()).collect();
            let mut counts = Vec::with_capacity(models.len() * alphas.len());
            for model in &models {
                let knows: Vec<bool> = draws.iter().map(|&u| u < model.p).collect();
                for &a in alphas {
                    let est = empirical_adversary(&run, exp.target, &knows, a, &exp.noise, model, &mut r)?;
                    counts.push(est.hits(truth, a).iter().map(|&h| h as usize).collect());
                }
            }
            Ok(counts)
        })
        .collect::<Result<Vec<_>>>()?;

    let dim = exp.proxies[exp.target].coeffs().len();
    let mut out = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        for (ai, &a) in alphas.iter().enumerate() {
            let cell = mi * alphas.len() + ai;
            let mut per_comp = vec![0usize; dim];
            for t in &per_trial {
                for (c, h) in per_comp.iter_mut().zip(&t[cell]) {
                    *c += h;
                }
            }
            let rates: Vec<f64> = per_comp.iter().map(|&c| c as f64 / trials as f64).collect();
            let bk = beta_k(a, &exp.noise, model, exp.params.k1, exp.params.k2)?;
            out.push(EmpiricalRate {
                p: model.p,
                alpha_k: a,
                max_rate: rates.iter().copied().fold(0.0, f64::max),
                mean_rate: rates.iter().sum::<f64>() / dim as f64,
                trials,
                sigma: (bk * (1.0 - bk) / trials as f64).sqrt(),
                beta_k: bk,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn adv(p: f64) -> AdversaryModel {
        AdversaryModel::new(p, 1e-5, DegreePrior::PowersOfTwo).unwrap()
    }

    #[test]
    fn h_fixtures() {
        let u = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        assert_eq!(h_i(0.0, &u, &adv(0.8)).unwrap(), 1e-5);
        assert_abs_diff_eq!(h_i(0.5, &u, &adv(0.8)).unwrap(), 0.40001, epsilon = 1e-15);
        assert_abs_diff_eq!(h_i(1e6, &u, &adv(0.8)).unwrap(), 0.80001, epsilon = 1e-15);
        assert!(h_i(-1.0, &u, &adv(0.8)).is_err());
    }

    #[test]
    fn beta_k_fixtures() {
        let u = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        // (1 - 0.8^11) * 0.40001 + 0.8^11 with 0.8^11 = 0.08589934592
        assert_abs_diff_eq!(beta_k(0.5, &u, &adv(0.8), 10, 20).unwrap(), 0.451_548_748_558_540_8, epsilon = 1e-12);
        let strong = AdversaryModel::new(1.0, 0.5, DegreePrior::PowersOfTwo).unwrap();
        assert_eq!(beta_k(10.0, &u, &strong, 10, 20).unwrap(), 1.0);
        let far = beta_k(0.5, &u, &adv(0.8), 10, 400).unwrap();
        assert_abs_diff_eq!(far, 0.40001, epsilon = 1e-12);
        assert!(beta_k(0.5, &u, &adv(0.8), 10, 10).is_err());
    }

    #[test]
    fn beta_total_fixtures() {
        let u = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        let a = adv(0.8);
        let split = vec![0.5; 21];
        let b = beta_total(10.5, &split, 20, 20, &u, &a, 10, 20).unwrap();
        let bk = beta_k(0.5, &u, &a, 10, 20).unwrap();
        assert_abs_diff_eq!(b, bk.powi(21), epsilon = 1e-20);
        assert!(b < 1e-7 && b > 5e-8);
        assert!(beta_total(1.0, &split, 20, 20, &u, &a, 10, 20).is_err());
        assert!(beta_total(1.0, &[1.0], 0, 4, &u, &a, 10, 20).is_ok());
    }

    #[test]
    fn null_slots_use_prior() {
        let u = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        let a = adv(0.8);
        // m_i = 2, m = 8: slots 4..=9 contribute F(2), F(3), ..., F(7)
        let b = beta_total(0.3, &[0.1; 3], 2, 8, &u, &a, 10, 20).unwrap();
        let bk = beta_k(0.1, &u, &a, 10, 20).unwrap();
        let f = [1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        assert_abs_diff_eq!(b, bk.powi(3) * f.iter().product::<f64>(), epsilon = 1e-15);
    }

    #[test]
    fn prior_cdf() {
        let p = DegreePrior::PowersOfTwo;
        assert_eq!(p.cdf(1, 16), 0.0);
        assert_eq!(p.cdf(2, 16), 0.25);
        assert_eq!(p.cdf(16, 16), 1.0);
        let e = DegreePrior::Explicit { support: vec![(4, 0.5), (8, 0.5)] };
        assert_eq!(e.cdf(5, 8), 0.5);
        assert!(AdversaryModel::new(0.5, 0.1, DegreePrior::Explicit { support: vec![(4, 0.4)] }).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(AdversaryModel::new(1.5, 0.1, DegreePrior::PowersOfTwo).is_err());
        assert!(AdversaryModel::new(0.5, 0.0, DegreePrior::PowersOfTwo).is_err());
        assert!(adv(0.8).gamma_is_large(&NoiseSpec::uniform(-1.0, 1.0).unwrap(), 1e-6));
        assert!(!adv(0.8).gamma_is_large(&NoiseSpec::uniform(-1.0, 1.0).unwrap(), 0.5));
    }
}
