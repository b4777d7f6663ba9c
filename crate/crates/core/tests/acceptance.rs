//! Acceptance checks for the reference setup. Each test prints one
//! `criterion N ...: PASS|FAIL` line before asserting.

use chebcon::cheb::{adaptive_interpolate, cheb_coeffs, cheb_eval, Interval, ObjectiveFn};
use chebcon::consensus::{NoiseFamily, NoiseSpec};
use chebcon::privacy::{beta_k, monte_carlo, AdversaryModel, PrivacyExperiment};
use chebcon::runner::{
    build_proxies, run_prcpoa, scenario_convergence, scenario_robustness, sigmoid_log, ObjectiveSpec, RunReport,
    ScenarioConfig,
};
use chebcon::stats::linear_fit;
use chebcon::ChebProxy;

const SEEDS: u64 = 20;
const RATES: [f64; 4] = [0.0, 0.1, 0.3, 0.5];

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {n} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn base(seed: u64) -> ScenarioConfig {
    ScenarioConfig::reference(seed)
}

fn seeded_runs(epsilons: &[f64]) -> Vec<RunReport> {
    let mut out = Vec::new();
    for seed in 0..SEEDS {
        for &e in epsilons {
            out.push(run_prcpoa(&base(seed).with_epsilon(e)).expect("run stops"));
        }
    }
    out
}

#[test]
fn criterion_1_epsilon_optimality() {
    let runs = seeded_runs(&[1e-4, 1e-6]);
    let worst = runs.iter().map(|r| r.max_error / r.epsilon).fold(0.0, f64::max);
    let bad = runs.iter().filter(|r| r.max_error > r.epsilon).count();
    verdict(
        1,
        "epsilon-optimality",
        bad == 0,
        format!("{} runs, {bad} over target, worst error/epsilon = {worst:.3e}", runs.len()),
    );
}

#[test]
fn criterion_2_stopping_sufficiency() {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = 0.0_f64;
    for r in seeded_runs(&[1e-4, 1e-6]) {
        checked += 1;
        worst = worst.max(r.dissemination_error / r.delta);
        violations += usize::from(r.dissemination_error > r.delta);
    }
    let (_, runs) = scenario_robustness(&base(0), &RATES, 10).unwrap();
    for r in &runs {
        if r.stop_round.is_some() {
            checked += 1;
            worst = worst.max(r.final_error / r.delta);
            violations += usize::from(r.final_error > r.delta);
        }
    }
    verdict(
        2,
        "stopping sufficiency",
        violations == 0,
        format!("{checked} stopped runs, {violations} violations, worst error/delta = {worst:.3e}"),
    );
}

#[test]
fn criterion_3_mass_conservation() {
    let mut worst_mass = 0.0_f64;
    let mut worst_y = 0.0_f64;
    let mut rows = 0;
    let mut runs = 0;
    for seed in 0..SEEDS {
        for &rate in &RATES {
            let cfg = ScenarioConfig { failure_rate: rate, ..base(seed) };
            let rep = run_prcpoa(&cfg).unwrap();
            runs += 1;
            for row in &rep.trace {
                rows += 1;
                worst_y = worst_y.max((row.y_total - cfg.n as f64).abs());
                if row.round >= cfg.k2 {
                    worst_mass = worst_mass.max(row.mass_residual);
                }
            }
        }
    }
    verdict(
        3,
        "mass conservation",
        worst_mass <= 1e-9 && worst_y <= 1e-12,
        format!("{runs} runs, {rows} rounds, worst slot residual {worst_mass:.3e}, worst |sum y - N| {worst_y:.3e}"),
    );
}

#[test]
fn criterion_4_geometric_consensus() {
    let (rows, runs) = scenario_robustness(&base(0), &RATES, 10).unwrap();
    let mut ok = true;
    let mut min_r2 = f64::INFINITY;
    let mut max_slope = f64::NEG_INFINITY;
    for r in &runs {
        match r.decay {
            Some(fit) => {
                min_r2 = min_r2.min(fit.r_squared);
                max_slope = max_slope.max(fit.slope);
                ok &= fit.slope < 0.0 && fit.r_squared >= 0.95;
            }
            None => ok = false,
        }
        ok &= r.rounds_to_delta.is_some() && r.stop_round.is_some();
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean_rounds_to_delta).collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        4,
        "geometric consensus",
        ok && monotone,
        format!("min R^2 {min_r2:.4}, max slope {max_slope:.4}, mean rounds to delta by rate {means:?}"),
    );
}

#[test]
fn criterion_5_privacy_soundness() {
    let noise = NoiseSpec::uniform(-1.0, 1.0).unwrap();
    let adv = AdversaryModel::default();
    let spot = beta_k(0.5, &noise, &adv, 10, 20).unwrap();
    let oracle = (1.0 - 0.8f64.powi(11)) * (0.8 * 0.5 + 1e-5) + 0.8f64.powi(11);
    let spot_ok = (spot - 0.4516).abs() <= 1e-4 && (spot - oracle).abs() <= 1e-15;

    let cfg = base(0);
    let local = build_proxies(&cfg).unwrap();
    let exp = PrivacyExperiment {
        proxies: local.proxies,
        graphs: cfg.graphs().unwrap(),
        noise,
        params: cfg.protocol().unwrap(),
        target: 0,
    };
    let rates = monte_carlo(&exp, &adv, &[0.5, 0.8, 0.95], &[0.1, 0.5, 1.0], 10_000, 2024).unwrap();
    let mut ok = spot_ok;
    let mut worst = f64::NEG_INFINITY;
    for r in &rates {
        let margin = (r.max_rate - r.beta_k) / r.sigma;
        worst = worst.max(margin);
        ok &= r.max_rate <= r.beta_k + 3.0 * r.sigma;
    }
    verdict(
        5,
        "privacy bound soundness",
        ok,
        format!("beta_k(0.5) = {spot:.6}, worst (empirical - analytic)/sigma over {} cells = {worst:.2}", rates.len()),
    );
}

#[test]
fn criterion_6_family_ordering() {
    let adv = AdversaryModel::default();
    let [u, n, l] = [NoiseFamily::Uniform, NoiseFamily::Normal, NoiseFamily::Laplace].map(NoiseSpec::unit_variance);
    let mut ok = true;
    let mut closest = f64::INFINITY;
    for k in 1..=50 {
        let a = 1.5 * k as f64 / 50.0;
        let bu = beta_k(a, &u, &adv, 10, 20).unwrap();
        let bn = beta_k(a, &n, &adv, 10, 20).unwrap();
        let bl = beta_k(a, &l, &adv, 10, 20).unwrap();
        ok &= bu < bn && bu < bl;
        closest = closest.min(bn.min(bl) - bu);
    }
    verdict(6, "family ordering", ok, format!("smallest gap to the next family {closest:.3e}"));
}

#[test]
fn criterion_7_chebyshev_engine() {
    let iv = Interval::new(-1.0, 1.0).unwrap();
    let nodes = [1.0, 0.0, -1.0];
    let mut fixture_err = 0.0_f64;
    let fixtures: [(fn(f64) -> f64, [f64; 3]); 3] =
        [(|x| x, [0.0, 1.0, 0.0]), (|x| x * x, [0.5, 0.0, 0.5]), (|_| 2.5, [2.5, 0.0, 0.0])];
    for (f, want) in fixtures {
        let c = cheb_coeffs(&nodes.map(f)).unwrap();
        for (g, w) in c.iter().zip(want) {
            fixture_err = fixture_err.max((g - w).abs());
        }
        let p = ChebProxy::new(iv, c).unwrap();
        for x in iv.grid(101) {
            fixture_err = fixture_err.max((cheb_eval(&p, x).unwrap() - f(x)).abs());
        }
    }

    let eps1 = 1e-10 / 3.0;
    let coeffs = ObjectiveSpec::default().coefficients(20, 0).unwrap();
    let mut degrees = Vec::new();
    let mut grid_err = 0.0_f64;
    for (a, b) in coeffs {
        let f = ObjectiveFn::new(iv, move |x| sigmoid_log(a, b, x));
        let p = adaptive_interpolate(&f, iv, eps1).unwrap();
        degrees.push(p.degree());
        for x in iv.grid(100_001) {
            grid_err = grid_err.max((cheb_eval(&p, x).unwrap() - sigmoid_log(a, b, x)).abs());
        }
    }
    let in_band = degrees.iter().all(|d| (16..=64).contains(d));
    verdict(
        7,
        "Chebyshev engine",
        fixture_err <= 1e-12 && in_band && grid_err <= 10.0 * eps1,
        format!("fixture error {fixture_err:.1e}, degrees {degrees:?}, dense-grid error {grid_err:.3e} vs 10*eps1 {:.3e}", 10.0 * eps1),
    );
}

#[test]
fn criterion_8_complexity_shape() {
    let epsilons: Vec<f64> = (2..=10).map(|k| 10f64.powi(-k)).collect();
    let x: Vec<f64> = epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let seeds = 10;
    let mut mean_k = vec![0.0; epsilons.len()];
    let mut single_r2 = Vec::new();
    let mut evals_ok = true;
    for seed in 0..seeds {
        let (rows, reports) = scenario_convergence(&base(seed), &epsilons).unwrap();
        let pts: Vec<(f64, f64)> = x.iter().zip(&rows).map(|(&x, r)| (x, r.k as f64)).collect();
        single_r2.push(linear_fit(&pts).unwrap().r_squared);
        for (m, r) in mean_k.iter_mut().zip(&rows) {
            *m += r.k as f64 / seeds as f64;
        }
        evals_ok &= reports.iter().flat_map(|r| &r.agents).all(|a| a.evaluations <= 2 * (2 * a.degree) + 1);
    }
    let pts: Vec<(f64, f64)> = x.iter().copied().zip(mean_k.iter().copied()).collect();
    let fit = linear_fit(&pts).unwrap();
    let lo = single_r2.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = single_r2.iter().copied().fold(0.0, f64::max);
    verdict(
        8,
        "complexity shape",
        fit.slope > 0.0 && fit.r_squared >= 0.9 && evals_ok,
        format!(
            "seed-mean rounds vs ln(1/eps): slope {:.3}, R^2 {:.4}; single-seed R^2 in [{lo:.3}, {hi:.3}]; evaluations within 4 m_i + 1: {evals_ok}",
            fit.slope, fit.r_squared
        ),
    );
}
