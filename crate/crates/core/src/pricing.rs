//! Contract payoffs, pure premiums, payment covariances and
//! covariance-share risk loads.
//!
//! Variances and covariances use the plug-in `1/I` denominator. Sums over
//! events are taken over sorted terms, so every estimate is invariant to the
//! order of event rows.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::GevParams;
use crate::scalar::Scalar;
use crate::spatial::{EventMatrix, EventScale};

/// Draw count below which Monte Carlo moments log a warning.
pub const MIN_RECOMMENDED_DRAWS: usize = 1_000;

/// Payment rule applied to a native-scale extreme `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
#[serde(bound = "")]
pub enum PayoffSpec<T: Scalar> {
    /// `α` whenever `m ≥ strike`.
    Flat { alpha: T, strike: T },
    /// `β (m − strike)` whenever `m ≥ strike`.
    Proportional { beta: T, strike: T },
    /// `β min(m − strike, limit − strike)` whenever `m ≥ strike`.
    /// An infinite limit behaves as [`PayoffSpec::Proportional`].
    Capped { beta: T, strike: T, limit: T },
}

impl<T: Scalar> PayoffSpec<T> {
    pub fn flat(alpha: T, strike: T) -> Result<Self> {
        let s = PayoffSpec::Flat { alpha, strike };
        s.validate()?;
        Ok(s)
    }

    pub fn proportional(beta: T, strike: T) -> Result<Self> {
        let s = PayoffSpec::Proportional { beta, strike };
        s.validate()?;
        Ok(s)
    }

    pub fn capped(beta: T, strike: T, limit: T) -> Result<Self> {
        let s = PayoffSpec::Capped { beta, strike, limit };
        s.validate()?;
        Ok(s)
    }

    pub fn strike(&self) -> T {
        match *self {
            PayoffSpec::Flat { strike, .. }
            | PayoffSpec::Proportional { strike, .. }
            | PayoffSpec::Capped { strike, .. } => strike,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (amount, strike) = match *self {
            PayoffSpec::Flat { alpha, strike } => (alpha, strike),
            PayoffSpec::Proportional { beta, strike } => (beta, strike),
            PayoffSpec::Capped { beta, strike, limit } => {
                if limit.is_nan() || limit < strike {
                    return Err(Error::domain(format!("limit {limit} below strike {strike}")));
                }
                (beta, strike)
            }
        };
        if !amount.is_finite() || amount < T::zero() {
            return Err(Error::domain(format!("payment amount must be finite and >= 0, got {amount}")));
        }
        if !strike.is_finite() {
            return Err(Error::domain(format!("strike must be finite, got {strike}")));
        }
        Ok(())
    }
}

/// Payment for extreme `m`; strike and limit boundaries are inclusive.
#[inline]
pub fn payoff<T: Scalar>(spec: &PayoffSpec<T>, m: T) -> T {
    match *spec {
        PayoffSpec::Flat { alpha, strike } => {
            if m >= strike {
                alpha
            } else {
                T::zero()
            }
        }
        PayoffSpec::Proportional { beta, strike } => {
            if m >= strike {
                beta * (m - strike)
            } else {
                T::zero()
            }
        }
        PayoffSpec::Capped { beta, strike, limit } => {
            if m >= strike {
                beta * (m - strike).min(limit - strike)
            } else {
                T::zero()
            }
        }
    }
}

/// First and second payment moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MomentEstimate<T: Scalar> {
    pub first: T,
    pub second: T,
    pub se_first: T,
    pub se_second: T,
    pub draws: usize,
}

impl<T: Scalar> MomentEstimate<T> {
    /// Plug-in variance `E(L²) − E(L)²`, floored at zero.
    pub fn variance(&self) -> T {
        (self.second - self.first * self.first).max(T::zero())
    }
}

/// Exact moments of a flat contract: `α(1 − G(s))` and `α²(1 − G(s))`.
pub fn pure_premium_flat<T: Scalar>(params: &GevParams<T>, alpha: T, strike: T) -> Result<MomentEstimate<T>> {
    PayoffSpec::flat(alpha, strike)?;
    let p = T::one() - params.cdf(strike)?;
    Ok(MomentEstimate {
        first: alpha * p,
        second: alpha * alpha * p,
        se_first: T::zero(),
        se_second: T::zero(),
        draws: 0,
    })
}

/// Order-independent sum: terms are sorted before accumulation.
pub(crate) fn invariant_sum<T: Scalar>(mut terms: Vec<T>) -> T {
    terms.par_sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut sum = T::zero();
    let mut comp = T::zero();
    for t in terms {
        let next = sum + t;
        comp = comp
            + if sum.abs() >= t.abs() {
                (sum - next) + t
            } else {
                (t - next) + sum
            };
        sum = next;
    }
    sum + comp
}

fn invariant_mean<T: Scalar>(terms: Vec<T>) -> T {
    let n = T::from_usize_lossy(terms.len());
    invariant_sum(terms) / n
}

/// Plug-in variance, two-pass around the mean.
fn plug_in_variance<T: Scalar>(x: &[T]) -> T {
    plug_in_covariance(x, x)
}

fn plug_in_covariance<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mx = invariant_mean(x.to_vec());
    let my = invariant_mean(y.to_vec());
    invariant_mean(x.par_iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).collect())
}

fn moments_of_payments<T: Scalar>(payments: &[T]) -> Result<MomentEstimate<T>> {
    if payments.is_empty() {
        return Err(Error::Usage("no draws to estimate moments from".into()));
    }
    let i = payments.len();
    if i < MIN_RECOMMENDED_DRAWS {
        log::warn!("estimating payment moments from only {i} draws");
    }
    let squares: Vec<T> = payments.par_iter().map(|&l| l * l).collect();
    let first = invariant_mean(payments.to_vec());
    let second = invariant_mean(squares.clone());
    let n = T::from_usize_lossy(i);
    Ok(MomentEstimate {
        first,
        second,
        se_first: (plug_in_variance(payments) / n).sqrt(),
        se_second: (plug_in_variance(&squares) / n).sqrt(),
        draws: i,
    })
}

/// Monte Carlo moments of `spec` over simulated native-scale extremes.
pub fn mc_moments<T: Scalar>(events_column: &[T], spec: &PayoffSpec<T>) -> Result<MomentEstimate<T>> {
    spec.validate()?;
    if let Some(bad) = events_column.iter().find(|m| !m.is_finite()) {
        return Err(Error::domain(format!("non-finite simulated extreme {bad}")));
    }
    let payments: Vec<T> = events_column.par_iter().map(|&m| payoff(spec, m)).collect();
    moments_of_payments(&payments)
}

/// How a risk load is formed from a variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskLoadMethod {
    /// `λ · variance`.
    #[default]
    Variance,
    /// `λ · sqrt(variance)`.
    StdDev,
}

/// `E + λ·var` or `E + λ·sqrt(var)`.
pub fn risk_loaded_premium<T: Scalar>(mean: T, variance: T, lambda: T, method: RiskLoadMethod) -> Result<T> {
    if variance.is_nan() || variance < T::zero() {
        return Err(Error::domain(format!("variance must be >= 0, got {variance}")));
    }
    if lambda.is_nan() || lambda < T::zero() {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(match method {
        RiskLoadMethod::Variance => mean + lambda * variance,
        RiskLoadMethod::StdDev => mean + lambda * variance.sqrt(),
    })
}

fn check_native(events: &EventMatrix<impl Scalar>, k: usize) -> Result<()> {
    if events.scale() != EventScale::Native {
        return Err(Error::Usage("payments need native-scale events".into()));
    }
    if events.n_sites() != k {
        return Err(Error::Shape(format!(
            "{} payoff specs for {} event columns",
            k,
            events.n_sites()
        )));
    }
    if events.n_events() == 0 {
        return Err(Error::Usage("event matrix has no rows".into()));
    }
    Ok(())
}

/// Per-contract payment columns.
pub fn payment_columns<T: Scalar>(events: &EventMatrix<T>, specs: &[PayoffSpec<T>]) -> Result<Vec<Vec<T>>> {
    check_native(events, specs.len())?;
    for s in specs {
        s.validate()?;
    }
    specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let col = events.column(k);
            if let Some(bad) = col.iter().find(|m| !m.is_finite()) {
                return Err(Error::domain(format!("non-finite extreme {bad} in column {k}")));
            }
            Ok(col.par_iter().map(|&m| payoff(spec, m)).collect())
        })
        .collect()
}

fn covariance_of_columns<T: Scalar>(cols: &[Vec<T>]) -> Vec<Vec<T>> {
    let k = cols.len();
    let mut cov = vec![vec![T::zero(); k]; k];
    for a in 0..k {
        for b in a..k {
            let c = plug_in_covariance(&cols[a], &cols[b]);
            cov[a][b] = c;
            cov[b][a] = c;
        }
    }
    cov
}

/// `K×K` plug-in covariance of payments.
pub fn payment_covariance<T: Scalar>(events: &EventMatrix<T>, specs: &[PayoffSpec<T>]) -> Result<Vec<Vec<T>>> {
    Ok(covariance_of_columns(&payment_columns(events, specs)?))
}

fn row_totals<T: Scalar>(cols: &[Vec<T>], skip: Option<usize>) -> Vec<T> {
    let n = cols.first().map_or(0, Vec::len);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = T::zero();
            for (k, c) in cols.iter().enumerate() {
                if Some(k) != skip {
                    s = s + c[i];
                }
            }
            s
        })
        .collect()
}

/// Plug-in variance of per-event portfolio totals.
pub fn portfolio_variance<T: Scalar>(events: &EventMatrix<T>, specs: &[PayoffSpec<T>]) -> Result<T> {
    let cols = payment_columns(events, specs)?;
    Ok(plug_in_variance(&row_totals(&cols, None)))
}

/// Marginal variance computed both ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MarginalVariance<T: Scalar> {
    /// `var(Σ all) − var(Σ all but k)`.
    pub difference: T,
    /// `var(L_k) + 2 Σ_{j≠k} cov(L_j, L_k)`.
    pub decomposition: T,
    pub total_with: T,
    pub total_without: T,
}

fn marginal_from_columns<T: Scalar>(cols: &[Vec<T>], cov: &[Vec<T>], k: usize) -> MarginalVariance<T> {
    let total_with = plug_in_variance(&row_totals(cols, None));
    let total_without = if cols.len() == 1 {
        T::zero()
    } else {
        plug_in_variance(&row_totals(cols, Some(k)))
    };
    let mut decomposition = cov[k][k];
    for (j, row) in cov.iter().enumerate() {
        if j != k {
            decomposition = decomposition + T::lit(2.0) * row[k];
        }
    }
    MarginalVariance {
        difference: total_with - total_without,
        decomposition,
        total_with,
        total_without,
    }
}

/// Increase in portfolio variance from contract `k`.
pub fn marginal_variance<T: Scalar>(
    events: &EventMatrix<T>,
    specs: &[PayoffSpec<T>],
    k: usize,
) -> Result<MarginalVariance<T>> {
    if k >= specs.len() {
        return Err(Error::Shape(format!("contract {k} out of range for {} specs", specs.len())));
    }
    let cols = payment_columns(events, specs)?;
    let cov = covariance_of_columns(&cols);
    Ok(marginal_from_columns(&cols, &cov, k))
}

/// `a[j][k] = E_k / (E_j + E_k)`: the part of `cov(L_j, L_k)` charged to
/// contract `k`. Pairs of zero means split evenly.
pub fn covariance_shares<T: Scalar>(means: &[T]) -> Result<Vec<Vec<T>>> {
    if let Some(bad) = means.iter().find(|m| m.is_nan() || **m < T::zero()) {
        return Err(Error::domain(format!("expected losses must be >= 0, got {bad}")));
    }
    let k = means.len();
    let mut a = vec![vec![T::lit(0.5); k]; k];
    let mut warned = false;
    for j in 0..k {
        for l in (j + 1)..k {
            let denom = means[j] + means[l];
            if denom > T::zero() {
                let v = means[l] / denom;
                a[j][l] = v;
                a[l][j] = T::one() - v;
            } else if !warned {
                log::warn!("contracts {j} and {l} both have zero expected loss; splitting covariance evenly");
                warned = true;
            }
        }
    }
    Ok(a)
}

/// `λ (var_k + 2 Σ_{j≠k} a_{j,k} cov_{j,k})` from summary statistics.
pub fn covariance_share_load_from_moments<T: Scalar>(
    means: &[T],
    covariance: &[Vec<T>],
    lambda: T,
    k: usize,
) -> Result<T> {
    let n = means.len();
    if covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("covariance must be K×K for K means".into()));
    }
    if k >= n {
        return Err(Error::Shape(format!("contract {k} out of range for {n} contracts")));
    }
    let a = covariance_shares(means)?;
    Ok(lambda * share_variance(&a, covariance, k))
}

fn share_variance<T: Scalar>(a: &[Vec<T>], cov: &[Vec<T>], k: usize) -> T {
    let mut v = cov[k][k];
    for j in 0..cov.len() {
        if j != k {
            v = v + T::lit(2.0) * a[j][k] * cov[j][k];
        }
    }
    v
}

/// Renewal-additive risk load of contract `k` against the rest of the book.
pub fn covariance_share_risk_load<T: Scalar>(
    events: &EventMatrix<T>,
    specs: &[PayoffSpec<T>],
    lambda: T,
    k: usize,
) -> Result<T> {
    if k >= specs.len() {
        return Err(Error::Shape(format!("contract {k} out of range for {} specs", specs.len())));
    }
    let cols = payment_columns(events, specs)?;
    let means: Vec<T> = cols.iter().map(|c| invariant_mean(c.clone())).collect();
    let cov = covariance_of_columns(&cols);
    covariance_share_load_from_moments(&means, &cov, lambda, k)
}

/// Everything needed to quote a book of contracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PortfolioReport<T: Scalar> {
    pub labels: Vec<String>,
    pub specs: Vec<PayoffSpec<T>>,
    pub draws: usize,
    pub lambda: T,
    pub method: RiskLoadMethod,
    pub moments: Vec<MomentEstimate<T>>,
    pub means: Vec<T>,
    pub variances: Vec<T>,
    pub covariance: Vec<Vec<T>>,
    /// `shares[j][k]` is `a_{j,k}`.
    pub shares: Vec<Vec<T>>,
    /// Variance charged to each contract by covariance shares.
    pub allocated_variance: Vec<T>,
    pub risk_loads: Vec<T>,
    pub premiums: Vec<T>,
    pub portfolio_variance: T,
    /// Variance of the book without its last contract.
    pub variance_without_newest: T,
    pub newest_marginal_variance: MarginalVariance<T>,
    /// Leading payment rows, for display.
    pub preview: Vec<Vec<T>>,
}

/// Rows kept in [`PortfolioReport::preview`].
pub const PREVIEW_ROWS: usize = 4;

/// Prices every contract in one pass. With [`RiskLoadMethod::StdDev`] the
/// allocated variances are scaled by `1/sqrt(portfolio variance)` so loads
/// still add up to `λ·sd(portfolio)`.
pub fn price_portfolio<T: Scalar>(
    events: &EventMatrix<T>,
    specs: &[PayoffSpec<T>],
    lambda: T,
    method: RiskLoadMethod,
) -> Result<PortfolioReport<T>> {
    if specs.is_empty() {
        return Err(Error::Usage("portfolio has no contracts".into()));
    }
    if lambda.is_nan() || lambda < T::zero() {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let cols = payment_columns(events, specs)?;
    let moments = cols.iter().map(|c| moments_of_payments(c)).collect::<Result<Vec<_>>>()?;
    let means: Vec<T> = moments.iter().map(|m| m.first).collect();
    let cov = covariance_of_columns(&cols);
    let variances: Vec<T> = (0..cols.len()).map(|k| cov[k][k]).collect();
    let shares = covariance_shares(&means)?;
    let allocated: Vec<T> = (0..cols.len()).map(|k| share_variance(&shares, &cov, k)).collect();
    let newest = marginal_from_columns(&cols, &cov, cols.len() - 1);
    let total = newest.total_with;
    let risk_loads: Vec<T> = allocated
        .iter()
        .map(|&v| match method {
            RiskLoadMethod::Variance => lambda * v,
            RiskLoadMethod::StdDev => {
                if total > T::zero() {
                    lambda * v / total.sqrt()
                } else {
                    T::zero()
                }
            }
        })
        .collect();
    let premiums = means.iter().zip(&risk_loads).map(|(&m, &r)| m + r).collect();
    let preview = (0..events.n_events().min(PREVIEW_ROWS))
        .map(|i| cols.iter().map(|c| c[i]).collect())
        .collect();
    Ok(PortfolioReport {
        labels: events.labels().to_vec(),
        specs: specs.to_vec(),
        draws: events.n_events(),
        lambda,
        method,
        moments,
        means,
        variances,
        covariance: cov,
        shares,
        allocated_variance: allocated,
        risk_loads,
        premiums,
        portfolio_variance: total,
        variance_without_newest: newest.total_without,
        newest_marginal_variance: newest,
        preview,
    })
}

impl<T: Scalar> PortfolioReport<T> {
    pub fn newest(&self) -> usize {
        self.means.len() - 1
    }

    /// Table with the older contracts, their total, the newest contract and
    /// the grand total as columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let k = self.newest();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["row".to_string()];
        header.extend(self.labels[..k].iter().cloned());
        header.push(format!("sum_1_{k}"));
        header.push(self.labels[k].clone());
        header.push(format!("sum_1_{}", k + 1));
        let csv_err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(&header).map_err(csv_err)?;

        let fmt = |v: T| format!("{v}");
        let line = |name: String, older: &[T], older_total: Option<T>, newest: Option<T>, total: Option<T>| {
            let mut rec = vec![name];
            rec.extend(older.iter().map(|&v| fmt(v)));
            for x in [older_total, newest, total] {
                rec.push(x.map(fmt).unwrap_or_default());
            }
            rec
        };
        for (i, row) in self.preview.iter().enumerate() {
            let older_total = row[..k].iter().copied().fold(T::zero(), |a, b| a + b);
            w.write_record(line(
                format!("event_{}", i + 1),
                &row[..k],
                Some(older_total),
                Some(row[k]),
                Some(older_total + row[k]),
            ))
            .map_err(csv_err)?;
        }
        let older_mean = self.means[..k].iter().copied().fold(T::zero(), |a, b| a + b);
        w.write_record(line(
            "mean".into(),
            &self.means[..k],
            Some(older_mean),
            Some(self.means[k]),
            Some(older_mean + self.means[k]),
        ))
        .map_err(csv_err)?;
        w.write_record(line(
            "variance".into(),
            &self.variances[..k],
            Some(self.variance_without_newest),
            Some(self.variances[k]),
            Some(self.portfolio_variance),
        ))
        .map_err(csv_err)?;
        let cov_newest: Vec<T> = (0..k).map(|j| self.covariance[j][k]).collect();
        let cov_total = cov_newest.iter().copied().fold(T::zero(), |a, b| a + b);
        w.write_record(line(
            "cov_with_newest".into(),
            &cov_newest,
            Some(cov_total),
            None,
            None,
        ))
        .map_err(csv_err)?;
        let share_newest: Vec<T> = (0..k).map(|j| self.shares[j][k]).collect();
        w.write_record(line("share_newest".into(), &share_newest, None, None, None))
            .map_err(csv_err)?;
        w.write_record(line("risk_load".into(), &self.risk_loads[..k], None, Some(self.risk_loads[k]), None))
            .map_err(csv_err)?;
        w.write_record(line("premium".into(), &self.premiums[..k], None, Some(self.premiums[k]), None))
            .map_err(csv_err)?;
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn native(cols: &[Vec<f64>]) -> EventMatrix<f64> {
        let labels = (1..=cols.len()).map(|i| format!("L{i}")).collect();
        EventMatrix::from_columns(cols, labels, EventScale::Native).unwrap()
    }

    #[test]
    fn payoff_examples() {
        let flat = PayoffSpec::flat(1000.0, 107.0).unwrap();
        assert_eq!(payoff(&flat, 107.0), 1000.0);
        assert_eq!(payoff(&flat, 106.999), 0.0);
        let capped = PayoffSpec::capped(300.0, 105.0, 110.0).unwrap();
        assert_eq!(payoff(&capped, 112.0), 1500.0);
        assert_eq!(payoff(&capped, 107.0), 600.0);
        let zero = PayoffSpec::capped(1.0, 5.0, 5.0).unwrap();
        for m in [0.0, 5.0, 9.0, 1e6] {
            assert_eq!(payoff(&zero, m), 0.0);
        }
        assert!(PayoffSpec::capped(1.0, 5.0, 4.0).is_err());
        assert!(PayoffSpec::flat(-1.0, 5.0).is_err());
    }

    #[test]
    fn unit_frechet_flat_premium() {
        let m = pure_premium_flat(&GevParams::<f64>::unit_frechet(), 1000.0, 1.0).unwrap();
        assert!((m.first - 1000.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!((m.second - 1000.0 * m.first).abs() < 1e-6);
    }

    #[test]
    fn risk_loaded_premium_examples() {
        let var = 618.16e3 - 223.89f64 * 223.89;
        let p = risk_loaded_premium(223.89, var, 1e-4, RiskLoadMethod::Variance).unwrap();
        assert!((p - 280.69).abs() < 0.01, "{p}");
        assert_eq!(risk_loaded_premium(5.0, 3.0, 0.0, RiskLoadMethod::Variance).unwrap(), 5.0);
        assert_eq!(risk_loaded_premium(5.0, 0.0, 2.0, RiskLoadMethod::StdDev).unwrap(), 5.0);
        assert_eq!(risk_loaded_premium(5.0, 4.0, 2.0, RiskLoadMethod::StdDev).unwrap(), 9.0);
        assert!(risk_loaded_premium(5.0, -1.0, 2.0, RiskLoadMethod::Variance).is_err());
    }

    #[test]
    fn constant_payments_have_zero_error() {
        let col = vec![200.0; 2000];
        let m = mc_moments(&col, &PayoffSpec::flat(10.0, 100.0).unwrap()).unwrap();
        assert_eq!((m.first, m.second, m.se_first, m.se_second), (10.0, 100.0, 0.0, 0.0));
        assert!(mc_moments(&[], &PayoffSpec::flat(10.0, 100.0).unwrap()).is_err());
    }

    #[test]
    fn shares_examples() {
        let a = covariance_shares(&[11.892f64, 55.271]).unwrap();
        assert!((a[0][1] - 0.8229).abs() < 1e-4);
        assert_eq!(a[0][1] + a[1][0], 1.0);
        assert_eq!(covariance_shares(&[3.0, 3.0]).unwrap()[0][1], 0.5);
        let z = covariance_shares(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!((z[0][1], z[1][0]), (0.5, 0.5));
        assert!(covariance_shares(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn regional_book_load_from_rounded_summaries() {
        // Rounded published summaries, in thousands.
        let means: [f64; 4] = [221.75, 96.751, 11.892, 55.271];
        let mut cov = vec![vec![0.0; 4]; 4];
        let var = [172.58, 99.89, 6.35, 46.95];
        let c4 = [28.46, 29.93, 8.43];
        for k in 0..4 {
            cov[k][k] = var[k];
        }
        for j in 0..3 {
            cov[j][3] = c4[j];
            cov[3][j] = c4[j];
        }
        let load: f64 = covariance_share_load_from_moments(&means, &cov, 1e3, 3).unwrap();
        let expected: f64 = (46.95 + 2.0 * (0.8229 * 8.43 + 0.3636 * 29.93 + 0.1995 * 28.46)) * 1e3;
        assert!((load - expected).abs() < 5.0, "{load} {expected}");
        assert!((load - 93_044.0).abs() / 93_044.0 < 0.02);
    }

    #[test]
    fn identical_columns_covariance_equals_variance() {
        let x: Vec<f64> = (0..500).map(|i| 100.0 + (i % 17) as f64).collect();
        let ev = native(&[x.clone(), x]);
        let spec = PayoffSpec::proportional(2.0, 105.0).unwrap();
        let c = payment_covariance(&ev, &[spec, spec]).unwrap();
        assert_eq!(c[0][1], c[0][0]);
        assert_eq!(c[1][0], c[1][1]);
    }

    #[test]
    fn single_contract_portfolio() {
        let x: Vec<f64> = (0..1500).map(|i| 100.0 + (i % 13) as f64).collect();
        let ev = native(&[x]);
        let spec = PayoffSpec::flat(1.0, 108.0).unwrap();
        let r = price_portfolio(&ev, &[spec], 0.5, RiskLoadMethod::Variance).unwrap();
        assert_eq!(r.covariance.len(), 1);
        assert!((r.risk_loads[0] - 0.5 * r.variances[0]).abs() < 1e-15);
        assert_eq!(r.newest_marginal_variance.difference, r.variances[0]);
        let zero = price_portfolio(&ev, &[spec], 0.0, RiskLoadMethod::Variance).unwrap();
        assert_eq!(zero.premiums, zero.means);
    }

    #[test]
    fn moments_ignore_row_order() {
        let x: Vec<f64> = (0..3000).map(|i| 100.0 + ((i * 7919) % 1000) as f64 / 97.0).collect();
        let mut y = x.clone();
        y.reverse();
        let spec = PayoffSpec::capped(3.0, 103.0, 108.0).unwrap();
        assert_eq!(mc_moments(&x, &spec).unwrap(), mc_moments(&y, &spec).unwrap());
    }

    #[test]
    fn csv_layout() {
        let a: Vec<f64> = (0..10).map(|i| 100.0 + i as f64).collect();
        let ev = native(&[a.clone(), a.clone(), a]);
        let spec = PayoffSpec::flat(1.0, 104.0).unwrap();
        let r = price_portfolio(&ev, &[spec; 3], 1.0, RiskLoadMethod::Variance).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row,L1,L2,sum_1_2,L3,sum_1_3");
        assert!(lines[1].starts_with("event_1,0,0,0,0,0"));
        assert!(lines.iter().any(|l| l.starts_with("share_newest,0.5,0.5")));
    }
}
