mod common;

use common::*;
use ndi_core::dist::{
    bessel_k, gh_mgf, nig_fit_mle, nig_log_pdf, nig_pdf, nig_sample, GhParams,
};
use ndi_core::rng;

#[test]
fn bessel_matches_integral_representation() {
    for &x in &[0.05, 0.5, 1.0, 1.999, 2.001, 3.0, 7.5, 20.0, 60.0] {
        for &nu in &[0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.5] {
            let got = bessel_k(nu, x).unwrap();
            let want = bessel_k_integral(nu, x);
            assert!(
                (got - want).abs() <= 1e-11 * want,
                "K_{nu}({x}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn bessel_k1_series_and_asymptotic_crossover() {
    // 60-term series below the crossover, asymptotic expansion well above it.
    let k1_one = bessel_k1_series(1.0);
    assert!((k1_one - 0.601_907_2).abs() < 1e-7);
    assert!((bessel_k(1.0, 1.0).unwrap() - k1_one).abs() < 1e-14);
    for &x in &[0.1, 0.9, 2.5, 4.0] {
        let s = bessel_k1_series(x);
        assert!((bessel_k(1.0, x).unwrap() - s).abs() < 1e-12 * s, "x={x}");
    }
    for &x in &[25.0, 40.0, 80.0] {
        let a = bessel_k1_asymptotic(x);
        assert!((bessel_k(1.0, x).unwrap() - a).abs() < 1e-10 * a, "x={x}");
    }
}

#[test]
fn nig_density_integrates_to_one() {
    for p in [
        GhParams::nig(2.0, 0.5, 1.0, 0.0).unwrap(),
        GhParams::nig(1.0, 0.0, 1.0, 0.0).unwrap(),
        GhParams::nig(5.0, -3.0, 0.3, 1.0).unwrap(),
    ] {
        let total = integrate(|x| nig_pdf(x, &p).unwrap(), -200.0, 200.0, 1e-12);
        assert!((total - 1.0).abs() < 1e-6, "{p:?}: {total}");
    }
}

#[test]
fn mgf_matches_density_integral() {
    let p = GhParams::nig(2.0, 0.5, 1.0, 0.1).unwrap();
    for &u in &[-2.0, -1.0, -0.3, 0.4, 1.0] {
        let num = integrate(|x| (u * x + nig_log_pdf(x, &p).unwrap()).exp(), -400.0, 400.0, 1e-13);
        let exact = gh_mgf(u, &p).unwrap();
        assert!((num - exact).abs() < 1e-5 * exact, "u={u}: {num} vs {exact}");
    }
}

#[test]
fn esscher_tilt_closure_is_pointwise_exact() {
    let p = GhParams::nig(2.5, -0.4, 0.8, 0.2).unwrap();
    for &theta in &[-1.5, -0.2, 0.7, 2.0] {
        let tilted = p.tilted(theta).unwrap();
        let m = gh_mgf(theta, &p).unwrap();
        for &x in &[-5.0, -1.0, 0.0, 0.3, 2.0, 6.0] {
            let by_tilt = (theta * x).exp() * nig_pdf(x, &p).unwrap() / m;
            let by_shift = nig_pdf(x, &tilted).unwrap();
            assert!(
                (by_tilt - by_shift).abs() <= 1e-10 * by_shift,
                "theta={theta} x={x}"
            );
        }
    }
}

#[test]
fn sample_moments_at_one_million() {
    let p = GhParams::nig(2.0, 0.5, 1.0, 0.0).unwrap();
    let n = 1_000_000;
    let xs = nig_sample(&p, &mut rng::stream(20240601), n).unwrap();
    let g = p.gamma();
    let mean_true = p.mu + p.delta * p.beta / g;
    let var_true = p.delta * p.alpha * p.alpha / g.powi(3);
    let m = mean(&xs);
    let v = var(&xs);
    assert!((m - mean_true).abs() < 4.0 * (var_true / n as f64).sqrt());
    // Var of the sample variance ≈ (μ4 − σ⁴)/n; μ4 = σ⁴(3 + excess kurtosis).
    let rho = p.beta / p.alpha;
    let zeta = p.delta * g;
    let kurt = 3.0 * (1.0 + 4.0 * rho * rho) / (zeta * (1.0 - rho * rho));
    let se_var = (var_true * var_true * (2.0 + kurt) / n as f64).sqrt();
    assert!((v - var_true).abs() < 4.0 * se_var, "{v} vs {var_true}");
}

#[test]
fn sampler_passes_ks_at_one_percent() {
    let p = GhParams::nig(2.0, 0.5, 1.0, 0.0).unwrap();
    let n = 100_000;
    let xs = nig_sample(&p, &mut rng::stream(77), n).unwrap();
    let cdf = GridCdf::new(|x| nig_pdf(x, &p).unwrap(), -40.0, 60.0, 20_000);
    let d = ks_distance(&xs, |x| cdf.at(x));
    assert!(d < ks_critical_1pct(n), "KS {d}");
}

#[test]
fn mle_recovers_simulated_parameters() {
    let truth = GhParams::nig(2.0, 0.5, 1.0, 0.0).unwrap();
    let xs = nig_sample(&truth, &mut rng::stream(4242), 50_000).unwrap();
    let fit = nig_fit_mle(&xs, None).unwrap();
    let p = fit.params;
    assert!(fit.converged);
    assert!(fit.log_likelihood >= fit.initial_log_likelihood);
    assert!((p.alpha / 2.0 - 1.0).abs() < 0.05, "{p:?}");
    assert!((p.beta / 0.5 - 1.0).abs() < 0.05, "{p:?}");
    assert!((p.delta - 1.0).abs() < 0.05, "{p:?}");
    assert!(p.mu.abs() < 0.05, "{p:?}");
}


