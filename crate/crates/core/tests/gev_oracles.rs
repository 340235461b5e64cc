use proptest::prelude::*;
use wxrisk::gev::{fit_gev, GevParams, TrendSpec};

fn empirical_cdf(x: &[f64], z: f64) -> f64 {
    x.iter().filter(|&&v| v <= z).count() as f64 / x.len() as f64
}

#[test]
fn fit_recovers_parameters_within_three_standard_errors() {
    let truth = GevParams::new(100.0, 2.0, -0.1).unwrap();
    let mut covered = [0usize; 3];
    for rep in 0..100 {
        let sample = truth.sample(500, 7_000 + rep).unwrap();
        let pts: Vec<(i32, f64)> = sample.iter().enumerate().map(|(i, &m)| (1900 + i as i32, m)).collect();
        let fit = fit_gev(&pts, TrendSpec::NONE).unwrap();
        let se = fit.std_errors;
        covered[0] += ((fit.mu1 - 100.0).abs() <= 3.0 * se.mu1) as usize;
        covered[1] += ((fit.sigma - 2.0).abs() <= 3.0 * se.sigma) as usize;
        covered[2] += ((fit.xi + 0.1).abs() <= 3.0 * se.xi) as usize;
    }
    assert!(covered.iter().all(|&c| c >= 95), "{covered:?}");
}

#[test]
fn unit_frechet_samples_follow_closed_form_cdf() {
    let x = GevParams::<f64>::unit_frechet().sample(100_000, 3).unwrap();
    for z in [0.5, 1.0, 2.0, 5.0] {
        assert!((empirical_cdf(&x, z) - (-1.0 / z).exp()).abs() < 0.01, "z={z}");
    }
}

#[test]
fn bounded_samples_respect_support() {
    let x = GevParams::new(0.0, 1.0, -0.5).unwrap().sample(100_000, 4).unwrap();
    assert!(x.iter().all(|&v| v <= 2.0));
}

#[test]
fn transformed_samples_are_unit_frechet() {
    let g = GevParams::new(5.0, 2.0, 0.1).unwrap();
    let u: Vec<f64> = g
        .sample(100_000, 5)
        .unwrap()
        .into_iter()
        .map(|y| g.to_unit_frechet(y).unwrap())
        .collect();
    for z in [0.5, 1.0, 2.0, 5.0] {
        assert!((empirical_cdf(&u, z) - (-1.0 / z).exp()).abs() < 0.01, "z={z}");
    }
}

#[test]
fn return_level_exceedance_rate() {
    let g = GevParams::new(110.0, 2.0, -0.1).unwrap();
    let x = g.sample(1_000_000, 6).unwrap();
    for t in [2.0f64, 10.0, 100.0] {
        let level = g.return_level(t).unwrap();
        let rate = x.iter().filter(|&&v| v > level).count() as f64 / x.len() as f64;
        let p = 1.0 / t;
        let band = 3.0 * (p * (1.0 - p) / 1e6).sqrt();
        assert!((rate - p).abs() <= band, "T={t} rate={rate}");
    }
    assert!(g.return_level(50.0).unwrap() < g.return_level(100.0).unwrap());
}

#[test]
fn cdf_nondecreasing_on_grids() {
    for xi in [-0.5, -0.1, 0.0, 0.1, 0.5] {
        let g = GevParams::new(0.0, 1.0, xi).unwrap();
        let mut prev = 0.0;
        for i in 0..=400 {
            let m = -10.0 + 0.05 * i as f64;
            let c = g.cdf(m).unwrap();
            assert!(c >= prev, "xi={xi} m={m}");
            prev = c;
        }
    }
}

#[test]
fn pdf_is_derivative_of_cdf_on_interior_grid() {
    for xi in [-0.3, 0.0, 0.2] {
        let g = GevParams::new(0.0, 1.0, xi).unwrap();
        for i in 0..40 {
            let m = -1.5 + 0.1 * i as f64;
            let h = 1e-5;
            let (lo, hi) = g.support();
            if m - h <= lo || m + h >= hi {
                continue;
            }
            let fd = (g.cdf(m + h).unwrap() - g.cdf(m - h).unwrap()) / (2.0 * h);
            assert!((fd - g.pdf(m).unwrap()).abs() < 1e-6, "xi={xi} m={m}");
        }
    }
}

proptest! {
    #[test]
    fn quantile_round_trip(p in 0.001f64..0.999, mu in -50.0f64..150.0, sigma in 0.1f64..10.0, xi in -0.5f64..0.5) {
        let g = GevParams::new(mu, sigma, xi).unwrap();
        let back = g.cdf(g.quantile(p).unwrap()).unwrap();
        prop_assert!((back - p).abs() <= 1e-10 * p.max(1.0));
    }

    #[test]
    fn unit_frechet_round_trip(u in 0.05f64..50.0, mu in 90.0f64..120.0, sigma in 0.5f64..4.0, xi in -0.3f64..0.4) {
        let g = GevParams::new(mu, sigma, xi).unwrap();
        let y = g.from_unit_frechet(u).unwrap();
        let back = g.to_unit_frechet(y).unwrap();
        prop_assert!((back - u).abs() <= 1e-10 * u.max(1.0));
    }

    #[test]
    fn max_stability_identity(z in 0.05f64..100.0, n in 1u32..50) {
        let g = GevParams::<f64>::unit_frechet();
        let lhs = g.cdf(z).unwrap().powi(n as i32);
        let rhs = g.cdf(z / n as f64).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }
}
