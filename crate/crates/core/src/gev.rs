//! Univariate Generalized Extreme Value law.
//!
//! `G(m) = exp(-(1 + ξ (m - μ)/σ)₊^(-1/ξ))`, with the Gumbel form
//! `exp(-exp(-(m - μ)/σ))` used whenever `|ξ| < 1e-8`.
//!
//! Fitting maximizes the likelihood of annual (block) maxima by simplex
//! search, optionally with a linear trend `μ = μ₁ + μ₂ t` where
//! `t = year - mean(year)` over the fitting sample. The centering constant is
//! stored on the fit so prediction years are coded the same way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::invert_dense;
use crate::optim::NelderMead;
use crate::rng::Stream;
use crate::scalar::Scalar;

/// Below this `|ξ|` the Gumbel limit is used.
pub const GUMBEL_SWITCH: f64 = 1e-8;

/// Location, scale and shape of a GEV distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GevParams<T: Scalar> {
    pub mu: T,
    pub sigma: T,
    pub xi: T,
}

impl<T: Scalar> GevParams<T> {
    pub fn new(mu: T, sigma: T, xi: T) -> Result<Self> {
        let p = GevParams { mu, sigma, xi };
        p.validate()?;
        Ok(p)
    }

    /// `GEV(1, 1, 1)`, whose CDF is `exp(-1/z)`.
    pub fn unit_frechet() -> Self {
        GevParams {
            mu: T::one(),
            sigma: T::one(),
            xi: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.xi.is_finite()) {
            return Err(Error::domain("GEV location and shape must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > T::zero()) {
            return Err(Error::domain(format!("GEV scale must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    #[inline]
    fn is_gumbel(&self) -> bool {
        self.xi.abs() < T::lit(GUMBEL_SWITCH)
    }

    /// Support `(lower, upper)`; infinite ends where unbounded.
    pub fn support(&self) -> (T, T) {
        if self.is_gumbel() {
            (T::neg_infinity(), T::infinity())
        } else {
            let end = self.mu - self.sigma / self.xi;
            if self.xi > T::zero() {
                (end, T::infinity())
            } else {
                (T::neg_infinity(), end)
            }
        }
    }

    /// `-ln G(m)`, i.e. `(1 + ξ z)^(-1/ξ)`; `None` outside the support.
    #[inline]
    fn tail_term(&self, m: T) -> Option<T> {
        let z = (m - self.mu) / self.sigma;
        if self.is_gumbel() {
            return Some((-z).exp());
        }
        let t = T::one() + self.xi * z;
        if t <= T::zero() {
            None
        } else {
            Some((-(self.xi * z).ln_1p() / self.xi).exp())
        }
    }

    fn check_arg(&self, m: T) -> Result<()> {
        self.validate()?;
        if !m.is_finite() {
            return Err(Error::domain(format!("GEV argument must be finite, got {m}")));
        }
        Ok(())
    }

    /// Distribution function `G(m)`.
    pub fn cdf(&self, m: T) -> Result<T> {
        self.check_arg(m)?;
        Ok(match self.tail_term(m) {
            Some(v) => (-v).exp(),
            None if self.xi > T::zero() => T::zero(),
            None => T::one(),
        })
    }

    /// Density `g(m) = dG/dm`.
    pub fn pdf(&self, m: T) -> Result<T> {
        self.check_arg(m)?;
        Ok(self.log_pdf_unchecked(m).exp())
    }

    /// Log density; `-∞` outside the support. Parameters are not validated.
    pub fn log_pdf_unchecked(&self, m: T) -> T {
        let z = (m - self.mu) / self.sigma;
        if self.is_gumbel() {
            return -self.sigma.ln() - z - (-z).exp();
        }
        let t = T::one() + self.xi * z;
        if t <= T::zero() {
            return T::neg_infinity();
        }
        let log_t = (self.xi * z).ln_1p();
        -self.sigma.ln() - (T::one() + T::one() / self.xi) * log_t - (-log_t / self.xi).exp()
    }

    /// Inverse distribution function.
    pub fn quantile(&self, p: T) -> Result<T> {
        self.validate()?;
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::domain(format!("quantile probability must lie in (0,1), got {p}")));
        }
        let y = -p.ln();
        Ok(if self.is_gumbel() {
            self.mu - self.sigma * y.ln()
        } else {
            self.mu + self.sigma * (-self.xi * y.ln()).exp_m1() / self.xi
        })
    }

    /// `n` inverse-CDF draws from a stream seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<T>> {
        self.validate()?;
        let mut stream = Stream::new(seed);
        (0..n)
            .map(|_| {
                let u = T::lit(stream.open_uniform());
                // f32 rounding can push u to exactly 1.
                let u = u.min(T::one() - T::epsilon()).max(T::min_positive_value());
                self.quantile(u)
            })
            .collect()
    }

    /// Maps `y` to the unit-Fréchet scale: `(1 + ξ (y-μ)/σ)^(1/ξ)`.
    pub fn to_unit_frechet(&self, y: T) -> Result<T> {
        self.check_arg(y)?;
        let z = (y - self.mu) / self.sigma;
        if self.is_gumbel() {
            return Ok(z.exp());
        }
        if T::one() + self.xi * z <= T::zero() {
            let (lo, hi) = self.support();
            return Err(Error::domain(format!(
                "value {y} outside GEV support ({lo}, {hi})"
            )));
        }
        Ok(((self.xi * z).ln_1p() / self.xi).exp())
    }

    /// Inverse of [`to_unit_frechet`](Self::to_unit_frechet).
    pub fn from_unit_frechet(&self, u: T) -> Result<T> {
        self.validate()?;
        if !(u > T::zero()) || !u.is_finite() {
            return Err(Error::domain(format!("unit-Fréchet value must be > 0, got {u}")));
        }
        Ok(if self.is_gumbel() {
            self.mu + self.sigma * u.ln()
        } else {
            self.mu + self.sigma * (self.xi * u.ln()).exp_m1() / self.xi
        })
    }

    /// Level exceeded on average once every `period` blocks.
    pub fn return_level(&self, period: T) -> Result<T> {
        if !(period > T::one()) || !period.is_finite() {
            return Err(Error::domain(format!("return period must exceed 1, got {period}")));
        }
        self.quantile(T::one() - T::one() / period)
    }
}

/// Whether the location carries a linear year trend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrendSpec {
    pub enabled: bool,
}

impl TrendSpec {
    pub const NONE: TrendSpec = TrendSpec { enabled: false };
    pub const LINEAR: TrendSpec = TrendSpec { enabled: true };
}

/// Standard errors of the fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GevStdErrors<T: Scalar> {
    pub mu1: T,
    pub mu2: Option<T>,
    pub sigma: T,
    pub xi: T,
}

/// Maximum-likelihood GEV fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FittedGev<T: Scalar> {
    /// Location, or location intercept at the centering year when trended.
    pub mu1: T,
    /// Location slope per year; zero without a trend.
    pub mu2: T,
    pub sigma: T,
    pub xi: T,
    pub std_errors: GevStdErrors<T>,
    pub log_likelihood: T,
    pub n: usize,
    pub trend: TrendSpec,
    /// Mean fitting year; trend covariate is `year - year_center`.
    pub year_center: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Scalar> FittedGev<T> {
    /// Wraps fixed parameters as a stationary "fit" (no uncertainty).
    pub fn from_params(p: GevParams<T>) -> Self {
        FittedGev {
            mu1: p.mu,
            mu2: T::zero(),
            sigma: p.sigma,
            xi: p.xi,
            std_errors: GevStdErrors {
                mu1: T::zero(),
                mu2: None,
                sigma: T::zero(),
                xi: T::zero(),
            },
            log_likelihood: T::zero(),
            n: 0,
            trend: TrendSpec::NONE,
            year_center: 0.0,
            converged: true,
            iterations: 0,
        }
    }

    /// Marginal law for `year`, which is required when the fit is trended.
    pub fn params_at(&self, year: Option<f64>) -> Result<GevParams<T>> {
        let mu = if self.trend.enabled {
            let year = year.ok_or_else(|| {
                Error::Usage("trended GEV margin needs a prediction year".into())
            })?;
            self.mu1 + self.mu2 * T::lit(year - self.year_center)
        } else {
            self.mu1
        };
        GevParams::new(mu, self.sigma, self.xi)
    }

    /// Stationary parameters; errors for trended fits.
    pub fn params(&self) -> Result<GevParams<T>> {
        self.params_at(None)
    }
}

/// Options for [`fit_gev_with`].
#[derive(Debug, Clone)]
pub struct GevFitOptions {
    /// Minimum number of block maxima.
    pub min_points: usize,
    pub max_iter: usize,
}

impl Default for GevFitOptions {
    fn default() -> Self {
        GevFitOptions {
            min_points: 20,
            max_iter: 5000,
        }
    }
}

/// Fits a GEV to `(year, maximum)` pairs with default options.
pub fn fit_gev<T: Scalar>(maxima: &[(i32, T)], trend: TrendSpec) -> Result<FittedGev<T>> {
    fit_gev_with(maxima, trend, &GevFitOptions::default())
}

/// Negative log-likelihood in natural coordinates `(μ₁, [μ₂], σ, ξ)`.
fn negative_log_likelihood<T: Scalar>(theta: &[T], values: &[T], covariate: Option<&[T]>) -> T {
    let (mu1, mu2, sigma, xi) = match covariate {
        Some(_) => (theta[0], theta[1], theta[2], theta[3]),
        None => (theta[0], T::zero(), theta[1], theta[2]),
    };
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return T::infinity();
    }
    let mut total = T::zero();
    for (i, &m) in values.iter().enumerate() {
        let mu = match covariate {
            Some(t) => mu1 + mu2 * t[i],
            None => mu1,
        };
        let lp = GevParams { mu, sigma, xi }.log_pdf_unchecked(m);
        if !lp.is_finite() {
            return T::infinity();
        }
        total = total - lp;
    }
    total
}

pub fn fit_gev_with<T: Scalar>(
    maxima: &[(i32, T)],
    trend: TrendSpec,
    options: &GevFitOptions,
) -> Result<FittedGev<T>> {
    let present: Vec<(i32, T)> = maxima.iter().copied().filter(|(_, v)| v.is_finite()).collect();
    let n = present.len();
    if n < options.min_points {
        return Err(Error::Fit(format!(
            "need at least {} block maxima, got {n}",
            options.min_points
        )));
    }
    let values: Vec<T> = present.iter().map(|&(_, v)| v).collect();
    let nf = T::from_usize_lossy(n);
    let mean = values.iter().copied().sum::<T>() / nf;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
    if !(var > T::epsilon() * mean.abs().max(T::one())) {
        return Err(Error::Fit("block maxima are constant".into()));
    }

    let year_center = present.iter().map(|&(y, _)| y as f64).sum::<f64>() / n as f64;
    let covariate: Option<Vec<T>> = if trend.enabled {
        let t: Vec<T> = present.iter().map(|&(y, _)| T::lit(y as f64 - year_center)).collect();
        if t.iter().all(|&c| c == T::zero()) {
            return Err(Error::Fit("trend requested but all maxima share one year".into()));
        }
        Some(t)
    } else {
        None
    };
    let cov = covariate.as_deref();

    let sigma0 = (T::lit(6.0) * var).sqrt() / T::PI();
    let mu0 = mean - T::lit(0.5772) * sigma0;
    let natural0 = |xi0: T| -> Vec<T> {
        match cov {
            Some(_) => vec![mu0, T::zero(), sigma0, xi0],
            None => vec![mu0, sigma0, xi0],
        }
    };
    let mut xi0 = T::lit(0.1);
    if !negative_log_likelihood(&natural0(xi0), &values, cov).is_finite() {
        xi0 = T::zero();
    }

    // Optimizer coordinates replace σ with ln σ.
    let sigma_index = if cov.is_some() { 2 } else { 1 };
    let to_natural = |x: &[T]| -> Vec<T> {
        let mut th = x.to_vec();
        th[sigma_index] = x[sigma_index].exp();
        th
    };
    let mut x0 = natural0(xi0);
    x0[sigma_index] = sigma0.ln();
    let mut step = vec![T::lit(0.25) * sigma0];
    if let Some(t) = cov {
        let spread = t.iter().fold(T::zero(), |m, &c| m.max(c.abs()));
        step.push(T::lit(0.25) * sigma0 / spread);
    }
    step.push(T::lit(0.2));
    step.push(T::lit(0.1));

    let nm = NelderMead::new(x0.len())
        .with_step(step)
        .with_max_iter(options.max_iter)
        .with_ftol(T::lit(1e-12));
    let result = nm.minimize(|x| negative_log_likelihood(&to_natural(x), &values, cov), &x0);
    if !result.value.is_finite() {
        return Err(Error::Fit("likelihood is not finite at any simplex vertex".into()));
    }
    let theta = to_natural(&result.x);

    let dim = theta.len();
    let hessian = numerical_hessian(|th| negative_log_likelihood(th, &values, cov), &theta);
    let covariance = invert_dense(&hessian, dim)
        .map_err(|e| Error::Fit(format!("observed information is singular: {e}")))?;
    let mut se = Vec::with_capacity(dim);
    for i in 0..dim {
        let v = covariance[i * dim + i];
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::Fit(format!(
                "observed information not positive definite at the optimum (variance {v} for parameter {i})"
            )));
        }
        se.push(v.sqrt());
    }

    let (mu1, mu2, sigma, xi, std_errors) = match cov {
        Some(_) => (
            theta[0],
            theta[1],
            theta[2],
            theta[3],
            GevStdErrors {
                mu1: se[0],
                mu2: Some(se[1]),
                sigma: se[2],
                xi: se[3],
            },
        ),
        None => (
            theta[0],
            T::zero(),
            theta[1],
            theta[2],
            GevStdErrors {
                mu1: se[0],
                mu2: None,
                sigma: se[1],
                xi: se[2],
            },
        ),
    };
    Ok(FittedGev {
        mu1,
        mu2,
        sigma,
        xi,
        std_errors,
        log_likelihood: -result.value,
        n,
        trend,
        year_center: if trend.enabled { year_center } else { 0.0 },
        converged: result.converged,
        iterations: result.iterations,
    })
}

/// Central-difference Hessian with steps `1e-4 · max(1, |θᵢ|)`.
fn numerical_hessian<T: Scalar, F: Fn(&[T]) -> T>(f: F, theta: &[T]) -> Vec<T> {
    let n = theta.len();
    let h: Vec<T> = theta.iter().map(|&t| T::lit(1e-4) * t.abs().max(T::one())).collect();
    let at = |shifts: &[(usize, T)]| {
        let mut x = theta.to_vec();
        for &(i, d) in shifts {
            x[i] = x[i] + d;
        }
        f(&x)
    };
    let f0 = f(theta);
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        out[i * n + i] = (fp - T::lit(2.0) * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..n {
            let v = (at(&[(i, h[i]), (j, h[j])]) - at(&[(i, h[i]), (j, -h[j])])
                - at(&[(i, -h[i]), (j, h[j])])
                + at(&[(i, -h[i]), (j, -h[j])]))
                / (T::lit(4.0) * h[i] * h[j]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}
