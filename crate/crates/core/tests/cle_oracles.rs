use wxrisk::cle::{fit_maxstable, model_select, MaxStableFitOptions};
use wxrisk::rng::Stream;
use wxrisk::spatial::{
    schlather_bivariate_log_pdf, simulate_schlather, CorrelationFamily, CorrelationModel, SiteSet,
};

fn random_sites(k: usize, side: f64, seed: u64) -> SiteSet<f64> {
    let mut s = Stream::new(seed);
    SiteSet::new((0..k).map(|_| [s.uniform_in(0.0, side), s.uniform_in(0.0, side)]).collect()).unwrap()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-10 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

#[test]
fn two_site_fit_reaches_bivariate_likelihood_maximum() {
    let sites = SiteSet::new(vec![[0.0, 0.0], [1.5, 0.0]]).unwrap();
    let truth = CorrelationModel::new(CorrelationFamily::PoweredExponential, 2.0, 1.0).unwrap();
    let data = simulate_schlather(&sites, &truth, 2000, 11).unwrap();
    let ll = |rho: f64| -> f64 {
        data.rows().map(|r| schlather_bivariate_log_pdf(r[0], r[1], rho)).sum()
    };
    let rho_hat = golden_max(ll, 0.0, 0.999_999);
    let fit = fit_maxstable(&data, &sites, CorrelationFamily::PoweredExponential, None).unwrap();
    let rho_fit = fit.model().unwrap().correlation(1.5).unwrap();
    // Only ρ(h) is identified with two sites; compare on that scale.
    assert!((rho_fit - rho_hat).abs() < 1e-3, "{rho_fit} vs {rho_hat}");
    assert!(fit.log_likelihood >= ll(rho_hat) - 1e-4);
}

#[test]
fn powered_exponential_data_selects_powered_exponential() {
    let truth = CorrelationModel::new(CorrelationFamily::PoweredExponential, 2.0, 1.0).unwrap();
    let mut hits = 0;
    for rep in 0..10u64 {
        let sites = random_sites(15, 10.0, 500 + rep);
        let data = simulate_schlather(&sites, &truth, 250, 900 + rep).unwrap();
        let sel = model_select(&data, &sites, &CorrelationFamily::ALL, &MaxStableFitOptions::default())
            .unwrap();
        assert_eq!(sel.table.len(), 3);
        if sel.best.family == CorrelationFamily::PoweredExponential {
            hits += 1;
        }
    }
    assert!(hits >= 7, "selected {hits}/10");
}
