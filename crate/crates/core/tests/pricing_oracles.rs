use ndi_core::dist::{gh_log_mgf, nig_pdf, GhParams};
use ndi_core::garch::GarchNigParams;
use ndi_core::pricing::{
    price_options, simulate_q_paths, solve_esscher, step_law, PricingConfig, QStart, StepLaw,
};
use ndi_core::stats;

fn model() -> GarchNigParams {
    GarchNigParams::new(0.001, 0.85, 0.1, 0.05, 2.0, -0.3).unwrap()
}

const START: QStart = QStart {
    s0: 6.0,
    ndi0: 0.2,
    h0: 0.01,
};

#[test]
fn gaussian_esscher_closed_form() {
    for (mu, var, r) in [(0.0, 0.04, 0.0), (0.01, 0.09, 0.002), (-0.2, 0.5, 0.03)] {
        let s = solve_esscher(&StepLaw::Gaussian { mean: mu, variance: var }, r).unwrap();
        let expected = (r - mu - var / 2.0) / var;
        assert!((s.theta - expected).abs() < 1e-8, "{s:?} vs {expected}");
    }
}

#[test]
fn tilted_law_prices_the_bond() {
    let r = 0.004;
    for h in [1e-4, 0.01, 0.2, 1.0] {
        let law = step_law(&model(), h, r).unwrap();
        let sol = solve_esscher(&law, r).unwrap();
        let StepLaw::Nig(q) = law.tilted(sol.theta).unwrap() else { unreachable!() };
        let m1 = gh_log_mgf(1.0, &q).unwrap();
        assert!((m1 - r).abs() < 1e-10, "h={h}: {m1}");
    }
}

#[test]
fn tilted_density_is_exponential_reweighting() {
    let law = step_law(&model(), 0.05, 0.001).unwrap();
    let StepLaw::Nig(p) = law else { unreachable!() };
    let theta = solve_esscher(&law, 0.001).unwrap().theta;
    let q = p.tilted(theta).unwrap();
    let log_m = gh_log_mgf(theta, &p).unwrap();
    for i in -40..=40 {
        let x = p.mu + 0.05 * i as f64;
        let direct = nig_pdf(x, &q).unwrap();
        let reweighted = (theta * x - log_m).exp() * nig_pdf(x, &p).unwrap();
        assert!((direct - reweighted).abs() <= 1e-10 * direct.max(1e-300), "x={x}");
    }
}

#[test]
fn nig_fixed_point_root() {
    let p = GhParams::nig(4.0, 1.0, 0.5, -0.1).unwrap();
    let r = gh_log_mgf(1.0, &p).unwrap() - gh_log_mgf(0.0, &p).unwrap();
    assert!(solve_esscher(&StepLaw::Nig(p), r).unwrap().theta.abs() < 1e-12);
}

#[test]
fn discounted_index_is_a_martingale() {
    let cfg = PricingConfig {
        n_paths: 100_000,
        horizon: 12,
        riskfree: 0.002,
        seed: 11,
        ..PricingConfig::default()
    };
    let set = simulate_q_paths(&model(), START, &cfg).unwrap();
    let disc = (-cfg.riskfree * 12.0).exp();
    let ratio: Vec<f64> = set.s_at(12).iter().map(|s| disc * s / START.s0).collect();
    let se = stats::std_dev(&ratio) / (ratio.len() as f64).sqrt();
    let dev = stats::mean(&ratio) - 1.0;
    assert!(dev.abs() < 4.0 * se, "deviation {dev}, se {se}");
    assert!(set.max_esscher_residual < 1e-10);
}

#[test]
fn standard_error_scales_with_root_n() {
    let base = PricingConfig {
        n_paths: 5_000,
        horizon: 4,
        strikes: vec![0.0],
        seed: 3,
        ..PricingConfig::default()
    };
    let big = PricingConfig {
        n_paths: 20_000,
        seed: 4,
        ..base.clone()
    };
    let se = |cfg: &PricingConfig| {
        let set = simulate_q_paths(&model(), START, cfg).unwrap();
        price_options(&set, cfg).unwrap().quote(4, 0.0).unwrap().se_call
    };
    let ratio = se(&big) / se(&base);
    assert!((ratio - 0.5).abs() < 0.1, "quadrupling N changed SE by {ratio}");
}

#[test]
fn shared_path_price_shape() {
    let cfg = PricingConfig {
        n_paths: 10_000,
        horizon: 6,
        strikes: (0..41).map(|i| -1.0 + 0.05 * i as f64).collect(),
        riskfree: 0.001,
        ..PricingConfig::default()
    };
    let set = simulate_q_paths(&model(), START, &cfg).unwrap();
    let surf = price_options(&set, &cfg).unwrap();
    for tau in 1..=6 {
        let row: Vec<_> = surf.quotes.iter().filter(|q| q.maturity == tau).collect();
        let mean = stats::mean(&set.ndi_at(tau));
        let disc = (-0.001 * tau as f64).exp();
        for w in row.windows(2) {
            assert!(w[0].call >= w[1].call);
            assert!(w[0].put <= w[1].put);
        }
        for q in row {
            assert!((q.call - q.put - disc * (mean - q.strike)).abs() < 1e-12);
        }
    }
}
