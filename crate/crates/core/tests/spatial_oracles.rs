use wxrisk::gev::{FittedGev, GevParams};
use wxrisk::rng::Stream;
use wxrisk::spatial::{
    madogram_extremal_coefficient, schlather_bivariate_cdf, schlather_bivariate_pdf, simulate_schlather,
    to_native_scale, CorrelationFamily, CorrelationModel, EventMatrix, EventScale, GaussianField, SiteSet,
};

#[test]
fn single_site_field_is_standard_normal() {
    let sites = SiteSet::new(vec![[0.0, 0.0]]).unwrap();
    let model = CorrelationModel::new(CorrelationFamily::Cauchy, 1.0, 1.0).unwrap();
    let field = GaussianField::new(&sites, &model).unwrap();
    let mut s = Stream::new(11);
    let x: Vec<f64> = (0..100_000).map(|_| field.sample(&mut s)[0]).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    assert!(mean.abs() < 0.01, "{mean}");
    assert!((var - 1.0).abs() < 0.02, "{var}");
}

#[test]
fn two_site_field_has_target_correlation() {
    // Powered exponential with ν=1: ρ(h) = exp(-h/c), so h = -c ln 0.7.
    let c = 2.0;
    let h = -c * 0.7f64.ln();
    let sites = SiteSet::new(vec![[0.0, 0.0], [h, 0.0]]).unwrap();
    let model = CorrelationModel::new(CorrelationFamily::PoweredExponential, c, 1.0).unwrap();
    assert!((model.correlation(h).unwrap() - 0.7).abs() < 1e-12);
    let field = GaussianField::new(&sites, &model).unwrap();
    let mut s = Stream::new(12);
    let (mut sxy, mut sxx, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let n = 100_000;
    for _ in 0..n {
        let v = field.sample(&mut s);
        sx += v[0];
        sy += v[1];
        sxy += v[0] * v[1];
        sxx += v[0] * v[0];
        syy += v[1] * v[1];
    }
    let nf = n as f64;
    let cov = sxy / nf - sx / nf * sy / nf;
    let r = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
    assert!((r - 0.7).abs() < 0.01, "{r}");
}

fn simpson_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 })
        .collect()
}

#[test]
fn density_integrates_to_rectangle_probability() {
    let (lo, hi, rho) = (0.01f64, 200.0f64, 0.5);
    let n = 600;
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / n as f64;
    let w = simpson_weights(n);
    let mut total = 0.0;
    for i in 0..=n {
        let z1 = (a + step * i as f64).exp();
        for j in 0..=n {
            let z2 = (a + step * j as f64).exp();
            total += w[i] * w[j] * schlather_bivariate_pdf(z1, z2, rho).unwrap() * z1 * z2;
        }
    }
    total *= (step / 3.0).powi(2);
    let f = |x: f64, y: f64| schlather_bivariate_cdf(x, y, rho).unwrap();
    let rect = f(hi, hi) - f(hi, lo) - f(lo, hi) + f(lo, lo);
    assert!((total - rect).abs() < 1e-4, "{total} vs {rect}");
}

#[test]
fn pairwise_extremal_coefficients_match_theory() {
    let sites = SiteSet::new(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [6.0, 0.0]]).unwrap();
    let model = CorrelationModel::new(CorrelationFamily::WhittleMatern, 3.0, 1.0).unwrap();
    let ev = simulate_schlather(&sites, &model, 100_000, 21).unwrap();
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 3)] {
        let h = sites.distance(i, j);
        let theta = wxrisk::spatial::extremal_coefficient(&model, h).unwrap();
        let est: f64 = madogram_extremal_coefficient(&ev.column(i), &ev.column(j)).unwrap();
        assert!((est - theta).abs() < 0.05, "h={h}: {est} vs {theta}");
    }
}

#[test]
fn native_scale_column_has_gev_margin() {
    let sites = SiteSet::new(vec![[0.0, 0.0], [2.0, 1.0]]).unwrap();
    let model = CorrelationModel::new(CorrelationFamily::Cauchy, 2.0, 1.0).unwrap();
    let ev = simulate_schlather(&sites, &model, 100_000, 22).unwrap();
    let g = GevParams::new(110.0, 2.0, -0.1).unwrap();
    let native = to_native_scale(&ev, &[FittedGev::from_params(g), FittedGev::from_params(g)], None).unwrap();
    let col = native.column(1);
    for q in [0.1, 0.5, 0.9, 0.99] {
        let m = g.quantile(q).unwrap();
        let emp = col.iter().filter(|&&v| v <= m).count() as f64 / col.len() as f64;
        assert!((emp - q).abs() < 0.015, "q={q}: {emp}");
    }
}

#[test]
fn event_matrix_rejects_nonpositive_frechet_values() {
    assert!(EventMatrix::new(vec![1.0, -2.0], vec!["a".into(), "b".into()], EventScale::UnitFrechet).is_err());
}
