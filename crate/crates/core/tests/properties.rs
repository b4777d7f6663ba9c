use chebcon::cheb::{cheb_coeffs, cheb_nodes, clenshaw, ChebProxy, Interval};
use chebcon::consensus::{
    disseminate, draw_perturbation, DisseminationOptions, NoiseFamily, NoiseSpec, ProtocolParams, StopParams,
};
use chebcon::netsim::{push_weights, GraphSequence};
use chebcon::polyopt::{cheb_derivative, minimize_proxy};
use chebcon::privacy::{beta_k, beta_total, empirical_adversary, AdversaryModel, DegreePrior};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interval() -> impl Strategy<Value = Interval> {
    (-5.0..5.0f64, 0.1..4.0f64).prop_map(|(lo, w)| Interval::new(lo, lo + w).unwrap())
}

fn proxy(max_degree: usize) -> impl Strategy<Value = ChebProxy> {
    (interval(), prop::collection::vec(-1.0..1.0f64, 1..=max_degree + 1))
        .prop_map(|(iv, c)| ChebProxy::new(iv, c).unwrap())
}

fn family() -> impl Strategy<Value = NoiseFamily> {
    prop_oneof![Just(NoiseFamily::Uniform), Just(NoiseFamily::Normal), Just(NoiseFamily::Laplace)]
}

fn direct_sum(c: &[f64], s: f64) -> f64 {
    let theta = s.clamp(-1.0, 1.0).acos();
    c.iter().enumerate().map(|(j, cj)| cj * (j as f64 * theta).cos()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_reproduces_polynomials(p in proxy(32)) {
        let m = p.degree().max(1);
        let values: Vec<f64> = cheb_nodes(m, p.interval()).unwrap().iter().map(|&x| p.eval(x).unwrap()).collect();
        let c = cheb_coeffs(&values).unwrap();
        for (k, got) in c.iter().enumerate() {
            let want = p.coeffs().get(k).copied().unwrap_or(0.0);
            prop_assert!((got - want).abs() <= 1e-12 * (m as f64), "slot {}: {} vs {}", k, got, want);
        }
    }

    #[test]
    fn clenshaw_matches_cosine_sum(c in prop::collection::vec(-1.0..1.0f64, 1..40), s in -1.0..1.0f64) {
        prop_assert!((clenshaw(&c, s) - direct_sum(&c, s)).abs() <= 1e-12);
    }

    #[test]
    fn push_weights_are_column_stochastic(n in 1usize..30, seed in any::<u64>(), rate in 0.0..0.9f64, t in 0usize..500) {
        let g = GraphSequence::ring_plus_random(n, seed, rate).unwrap().next_graph(t);
        let w = push_weights(&g);
        for j in 0..n {
            prop_assert!(g.has_edge(j, j));
            prop_assert!((w.column_sum(j) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn failures_are_nested(n in 2usize..20, seed in any::<u64>(), t in 0usize..100, lo in 0.0..0.5f64, d in 0.0..0.49f64) {
        let seq = GraphSequence::ring_plus_random(n, seed, lo).unwrap();
        let more = seq.with_failure_rate(lo + d).unwrap();
        let (a, b) = (seq.next_graph(t), more.next_graph(t));
        for (i, j) in b.edges() {
            prop_assert!(a.has_edge(i, j));
        }
    }

    #[test]
    fn perturbations_meet_the_alpha_condition(dim in 1usize..40, seed in any::<u64>(), fam in family(), k1 in 1usize..15, w in 1usize..15) {
        let params = ProtocolParams::new(k1, k1 + w, 0.01).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (theta, sched) = draw_perturbation(dim, &NoiseSpec::unit_variance(fam), &params, &mut r).unwrap();
        let l = sched.subtraction_count as f64;
        prop_assert!(theta.iter().all(|t| (t / l).abs() > 0.01));
        prop_assert_eq!(sched.insert_counts.iter().sum::<usize>(), dim);
        prop_assert_eq!(sched.subtraction_rounds.len(), sched.subtraction_count);
        prop_assert!(sched.subtraction_rounds.iter().all(|&t| t > k1 && t <= k1 + w));
    }

    #[test]
    fn beta_k_is_a_monotone_probability(p in 0.0..1.0f64, gamma in 1e-6..0.5f64, fam in family(), w in 1usize..20) {
        let adv = AdversaryModel::new(p, gamma, DegreePrior::PowersOfTwo).unwrap();
        let noise = NoiseSpec::unit_variance(fam);
        let mut prev = 0.0;
        for k in 0..100 {
            let b = beta_k(3.0 * k as f64 / 99.0, &noise, &adv, 10, 10 + w).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!(b >= prev);
            prev = b;
        }
        let near = beta_k(0.5, &noise, &adv, 10, 11).unwrap();
        let far = beta_k(0.5, &noise, &adv, 10, 10 + w + 1).unwrap();
        prop_assert!(far <= near);
    }

    #[test]
    fn beta_total_is_below_each_factor(m_i in 0usize..20, extra in 0usize..20, alpha in 0.01..5.0f64, p in 0.0..1.0f64) {
        let adv = AdversaryModel::new(p, 1e-5, DegreePrior::PowersOfTwo).unwrap();
        let noise = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        let split = vec![alpha / (m_i + 1) as f64; m_i + 1];
        let b = beta_total(alpha, &split, m_i, m_i + extra, &noise, &adv, 10, 20).unwrap();
        let bk = beta_k(split[0], &noise, &adv, 10, 20).unwrap();
        prop_assert!(b <= bk + 1e-15);
    }

    #[test]
    fn derivative_matches_finite_differences(p in proxy(16), u in prop::collection::vec(0.0..1.0f64, 100)) {
        let d = cheb_derivative(&p);
        let iv = p.interval();
        let h = 1e-6 * iv.width();
        let scale = d.l1_norm().max(1.0);
        for t in u {
            let x = iv.lo() + h + t * (iv.width() - 2.0 * h);
            let fd = (p.eval(x + h).unwrap() - p.eval(x - h).unwrap()) / (2.0 * h);
            let exact = d.eval(x).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * scale, "{} vs {}", fd, exact);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dissemination_conserves_mass(
        n in 1usize..12,
        dims in prop::collection::vec(1usize..12, 12),
        seed in any::<u64>(),
        rate in 0.0..0.6f64,
    ) {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let proxies: Vec<ChebProxy> = (0..n)
            .map(|i| ChebProxy::new(iv, (0..dims[i]).map(|k| (i + k) as f64 * 0.37 - 1.0).collect()).unwrap())
            .collect();
        let seq = GraphSequence::ring_plus_random(n, seed, rate).unwrap();
        let params = ProtocolParams::new(5, 12, 0.01).unwrap();
        let stop = StopParams::new(n.max(2) - 1, 1e-6).unwrap();
        let opts = DisseminationOptions { round_cap: 60, stopping: false, record: false, graph_offset: 0 };
        let noise = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        let run = disseminate(&proxies, &seq, &noise, &params, &stop, seed, opts).unwrap();
        for row in &run.trace {
            prop_assert!((row.y_total - n as f64).abs() <= 1e-12);
            prop_assert!(row.mass_residual <= 1e-9, "round {}: {}", row.round, row.mass_residual);
            prop_assert!(row.min_y > 0.0);
        }
    }

    #[test]
    fn extreme_case_recovery_is_exact(n in 2usize..10, seed in any::<u64>(), rate in 0.0..0.5f64, target in 0usize..10) {
        let target = target % n;
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let proxies: Vec<ChebProxy> = (0..n)
            .map(|i| ChebProxy::new(iv, (0..8).map(|k| ((i * 7 + k * 3) % 11) as f64 - 5.0).collect()).unwrap())
            .collect();
        let seq = GraphSequence::ring_plus_random(n, seed, rate).unwrap();
        let params = ProtocolParams::new(10, 20, 0.01).unwrap();
        let stop = StopParams::new(1, 1.0).unwrap();
        let opts = DisseminationOptions { round_cap: 20, stopping: false, record: true, graph_offset: 0 };
        let noise = NoiseSpec::uniform(-1.0, 1.0).unwrap();
        let run = disseminate(&proxies, &seq, &noise, &params, &stop, seed, opts).unwrap();
        let adv = AdversaryModel::new(1.0, 1e-5, DegreePrior::PowersOfTwo).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let est = empirical_adversary(&run, target, &[true; 21], 0.1, &noise, &adv, &mut r).unwrap();
        prop_assert!(est.exact.iter().all(|&e| e));
        for (e, t) in est.estimate.iter().zip(proxies[target].coeffs()) {
            prop_assert!((e - t).abs() <= 1e-12, "{} vs {}", e, t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Grid minimum on 10^6 points brackets `f_e*`: it can undercut the grid
    /// by at most the curvature term of a grid cell, and exceeds it by at
    /// most `ε3`.
    #[test]
    fn minimizer_is_sandwiched_by_the_grid(p in proxy(64)) {
        let eps3 = 1e-9;
        let r = minimize_proxy(&p, eps3).unwrap();
        let iv = p.interval();
        prop_assert!(r.x_p_star >= iv.lo() && r.x_p_star <= iv.hi());
        prop_assert!(r.certified_gap <= eps3);
        let points = 1_000_000;
        let grid_min = iv.grid(points).map(|x| p.eval(x).unwrap()).fold(f64::INFINITY, f64::min);
        let h = iv.width() / (points - 1) as f64;
        let m2 = cheb_derivative(&cheb_derivative(&p)).l1_norm();
        let slack = m2 * h * h / 8.0 + 1e-12 * p.l1_norm();
        prop_assert!(grid_min - slack <= r.f_e_star, "grid {} vs f_e* {}", grid_min, r.f_e_star);
        prop_assert!(r.f_e_star <= grid_min + eps3, "grid {} vs f_e* {}", grid_min, r.f_e_star);
    }
}
