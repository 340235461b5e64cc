use proptest::prelude::*;
use wxrisk::gev::GevParams;
use wxrisk::linalg::CholeskyFactor;
use wxrisk::pricing::{
    covariance_share_risk_load, covariance_shares, marginal_variance, mc_moments, payment_covariance,
    portfolio_variance, price_portfolio, pure_premium_flat, PayoffSpec, RiskLoadMethod,
};
use wxrisk::rng::Stream;
use wxrisk::spatial::{EventMatrix, EventScale};

fn spec_strategy() -> impl Strategy<Value = PayoffSpec<f64>> {
    prop_oneof![
        (0.0f64..1000.0, 100.0f64..115.0).prop_map(|(alpha, strike)| PayoffSpec::Flat { alpha, strike }),
        (0.0f64..500.0, 100.0f64..115.0).prop_map(|(beta, strike)| PayoffSpec::Proportional { beta, strike }),
        (0.0f64..500.0, 100.0f64..110.0, 0.0f64..10.0)
            .prop_map(|(beta, strike, w)| PayoffSpec::Capped { beta, strike, limit: strike + w }),
    ]
}

fn book() -> impl Strategy<Value = (EventMatrix<f64>, Vec<PayoffSpec<f64>>)> {
    (1usize..6, 30usize..200).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(95.0f64..125.0, n * k),
            proptest::collection::vec(spec_strategy(), k),
        )
            .prop_map(move |(values, specs)| {
                let labels = (0..k).map(|j| format!("C{j}")).collect();
                (EventMatrix::new(values, labels, EventScale::Native).unwrap(), specs)
            })
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_loads_add_up_to_portfolio_load((events, specs) in book(), lambda in 0.0f64..1.0) {
        let total = portfolio_variance(&events, &specs).unwrap();
        let sum: f64 = (0..specs.len())
            .map(|k| covariance_share_risk_load(&events, &specs, lambda, k).unwrap())
            .sum();
        prop_assert!((sum - lambda * total).abs() <= 1e-9 * (lambda * total).abs().max(1e-12));
        let report = price_portfolio(&events, &specs, lambda, RiskLoadMethod::Variance).unwrap();
        let rsum: f64 = report.risk_loads.iter().sum();
        prop_assert!((rsum - lambda * total).abs() <= 1e-9 * (lambda * total).abs().max(1e-12));
    }

    #[test]
    fn marginal_variance_routes_agree((events, specs) in book()) {
        for k in 0..specs.len() {
            let mv = marginal_variance(&events, &specs, k).unwrap();
            let scale = mv.total_with.abs().max(1e-12);
            prop_assert!((mv.difference - mv.decomposition).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn portfolio_variance_is_covariance_sum((events, specs) in book()) {
        let cov = payment_covariance(&events, &specs).unwrap();
        let sum: f64 = cov.iter().flatten().sum();
        let total = portfolio_variance(&events, &specs).unwrap();
        prop_assert!((sum - total).abs() <= 1e-9 * total.abs().max(1e-12));
    }

    #[test]
    fn covariance_is_symmetric_psd((events, specs) in book()) {
        let cov = payment_covariance(&events, &specs).unwrap();
        let k = cov.len();
        let trace: f64 = (0..k).map(|i| cov[i][i]).sum();
        for i in 0..k {
            for j in 0..k {
                prop_assert_eq!(cov[i][j], cov[j][i]);
            }
        }
        // Shifting by the tolerance must leave a factorizable matrix.
        let shifted: Vec<f64> = (0..k * k)
            .map(|idx| cov[idx / k][idx % k] + if idx / k == idx % k { 1e-8 * trace.max(1.0) } else { 0.0 })
            .collect();
        prop_assert!(CholeskyFactor::new(&shifted, k).is_ok());
    }

    #[test]
    fn shares_are_complementary(means in proptest::collection::vec(0.0f64..1e4, 2..8)) {
        let a = covariance_shares(&means).unwrap();
        for j in 0..means.len() {
            for k in 0..means.len() {
                prop_assert!((0.0..=1.0).contains(&a[j][k]));
                if j != k {
                    prop_assert_eq!(a[j][k] + a[k][j], 1.0);
                }
            }
        }
    }

    #[test]
    fn moments_ignore_row_order((events, specs) in book(), seed in any::<u64>()) {
        let mut s = Stream::new(seed);
        let perm = s.permutation(events.n_events());
        let k = events.n_sites();
        let mut values = Vec::with_capacity(events.values().len());
        for &i in &perm {
            values.extend_from_slice(events.row(i));
        }
        let shuffled = EventMatrix::new(values, events.labels().to_vec(), EventScale::Native).unwrap();
        for j in 0..k {
            prop_assert_eq!(
                mc_moments(&events.column(j), &specs[j]).unwrap(),
                mc_moments(&shuffled.column(j), &specs[j]).unwrap()
            );
        }
    }
}

#[test]
fn flat_premium_matches_monte_carlo() {
    let g = GevParams::new(110.0, 2.0, -0.1).unwrap();
    let x = g.sample(1_000_000, 77).unwrap();
    for strike in [108.0, 112.0, 115.0] {
        let exact = pure_premium_flat(&g, 1000.0, strike).unwrap();
        let (e1, e2): (f64, f64) = (exact.first, exact.second);
        let mc = mc_moments(&x, &PayoffSpec::flat(1000.0, strike).unwrap()).unwrap();
        assert!((e1 - mc.first).abs() <= 3.0 * mc.se_first, "s={strike}");
        assert!((e2 - mc.second).abs() <= 3.0 * mc.se_second, "s={strike}");
    }
}

#[test]
fn gumbel_proportional_mean_matches_quadrature() {
    let g = GevParams::new(0.0, 1.0, 0.0).unwrap();
    // ∫₀^∞ m g(m) dm by Simpson on [0, 40].
    let n = 20_000;
    let h = 40.0 / n as f64;
    let mut q = 0.0;
    for i in 0..=n {
        let m = h * i as f64;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        q += w * m * g.pdf(m).unwrap();
    }
    q *= h / 3.0;
    let x = g.sample(1_000_000, 78).unwrap();
    let mc = mc_moments(&x, &PayoffSpec::proportional(1.0, 0.0).unwrap()).unwrap();
    assert!((mc.first - q).abs() <= 3.0 * mc.se_first, "{} vs {q}", mc.first);
}

fn shuffled_columns(n: usize, k: usize, seed: u64) -> EventMatrix<f64> {
    // Every column is the same series, rows permuted independently per column.
    let g = GevParams::new(110.0, 2.0, -0.1).unwrap();
    let base = g.sample(n, seed).unwrap();
    let mut s = Stream::new(seed + 1);
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|_| s.permutation(n).into_iter().map(|i| base[i]).collect())
        .collect();
    let labels = (0..k).map(|j| format!("C{j}")).collect();
    EventMatrix::from_columns(&cols, labels, EventScale::Native).unwrap()
}

#[test]
fn independent_columns_have_negligible_covariance() {
    let n = 200_000;
    let ev = shuffled_columns(n, 3, 90);
    let specs = vec![PayoffSpec::flat(1.0, 111.0).unwrap(); 3];
    let cov = payment_covariance(&ev, &specs).unwrap();
    let v = cov[0][0];
    // Under independence sd(cov̂) ≈ var/sqrt(n).
    let se = v / (n as f64).sqrt();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        assert!(cov[i][j].abs() < 3.0 * se * 1.5, "{} vs {se}", cov[i][j]);
    }
    let total = portfolio_variance(&ev, &specs).unwrap();
    let sum_var: f64 = (0..3).map(|k| cov[k][k]).sum();
    assert!(rel(total, sum_var) < 0.02);
    let mv = marginal_variance(&ev, &specs, 2).unwrap();
    assert!(rel(mv.difference, cov[2][2]) < 0.05);
}

#[test]
fn capped_moments_grow_to_proportional() {
    let g = GevParams::new(113.367 + 0.035 * 39.5, 1.931, -0.090).unwrap();
    let x = g.sample(200_000, 91).unwrap();
    let prop = mc_moments(&x, &PayoffSpec::proportional(1000.0, 114.0).unwrap()).unwrap();
    let inf = mc_moments(&x, &PayoffSpec::capped(1000.0, 114.0, f64::INFINITY).unwrap()).unwrap();
    assert_eq!(prop, inf);
    let mut prev = (0.0, 0.0);
    for limit in [115.0, 116.0, 118.0, 120.0, 122.0, 125.0, 130.0] {
        let m = mc_moments(&x, &PayoffSpec::capped(1000.0, 114.0, limit).unwrap()).unwrap();
        assert!(m.first >= prev.0 && m.second >= prev.1);
        assert!(m.first <= prop.first && m.second <= prop.second);
        prev = (m.first, m.second);
    }
}
