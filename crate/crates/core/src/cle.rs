//! Pairwise composite likelihood for Schlather dependence parameters.
//!
//! `ℓ_C(θ) = Σₙ Σ_{i<j} log f(z_{n,i}, z_{n,j}; ρ(‖xᵢ − xⱼ‖; θ))` with
//! `θ = (c₂, ν)`. The maximizer comes with a sandwich covariance
//! `H⁻¹ J H⁻¹` and the CLIC score `−2ℓ_C − tr(J H⁻¹)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::optim::NelderMead;
use crate::scalar::Scalar;
use crate::spatial::{
    schlather_bivariate_log_pdf, CorrelationFamily, CorrelationModel, EventMatrix, EventScale,
    SiteSet,
};

/// Stand-in for `log 0` so simplex search stays well defined.
pub const LOG_SENTINEL: f64 = -1e300;

fn sentinel<T: Scalar>() -> T {
    T::from_f64(LOG_SENTINEL)
        .filter(|v| v.is_finite())
        .unwrap_or(-T::max_value())
}

/// How the score variability `J` is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVariance {
    /// Outer products of each replicate's total pairwise score.
    #[default]
    PerReplicate,
    /// Outer products of every individual pair-term score.
    PerPairTerm,
}

/// Data and geometry of a composite likelihood, with pairs in a canonical
/// order so sums do not depend on how sites were listed.
pub struct CompositeLikelihood<'a, T: Scalar> {
    data: &'a EventMatrix<T>,
    /// `(column a, column b, distance)`.
    pairs: Vec<(usize, usize, T)>,
}

/// Value of `ℓ_C` and the number of bivariate terms summed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseEvaluation<T> {
    pub value: T,
    pub terms: usize,
}

impl<'a, T: Scalar> CompositeLikelihood<'a, T> {
    pub fn new(data: &'a EventMatrix<T>, sites: &SiteSet<T>) -> Result<Self> {
        if data.scale() != EventScale::UnitFrechet {
            return Err(Error::Usage(
                "composite likelihood needs unit-Fréchet data; transform the margins first".into(),
            ));
        }
        if data.n_sites() != sites.len() {
            return Err(Error::Shape(format!(
                "{} data columns for {} sites",
                data.n_sites(),
                sites.len()
            )));
        }
        if sites.len() < 2 {
            return Err(Error::domain("composite likelihood needs at least two sites"));
        }
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (sites.coords[a], sites.coords[b]);
            ca[0].partial_cmp(&cb[0])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ca[1].partial_cmp(&cb[1]).unwrap_or(std::cmp::Ordering::Equal))
                .then(a.cmp(&b))
        });
        let mut pairs = Vec::with_capacity(order.len() * (order.len() - 1) / 2);
        for (p, &a) in order.iter().enumerate() {
            for &b in &order[p + 1..] {
                pairs.push((a, b, sites.distance(a, b)));
            }
        }
        Ok(CompositeLikelihood { data, pairs })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_replicates(&self) -> usize {
        self.data.n_events()
    }

    pub fn n_terms(&self) -> usize {
        self.n_pairs() * self.n_replicates()
    }

    /// Median inter-site distance.
    pub fn median_distance(&self) -> T {
        let mut d: Vec<T> = self.pairs.iter().map(|p| p.2).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let m = d.len();
        if m % 2 == 1 {
            d[m / 2]
        } else {
            (d[m / 2 - 1] + d[m / 2]) * T::lit(0.5)
        }
    }

    fn distance_extent(&self) -> (T, T) {
        let positive = self.pairs.iter().map(|p| p.2).filter(|&d| d > T::zero());
        let lo = positive.clone().fold(T::infinity(), T::min);
        let hi = positive.fold(T::zero(), T::max);
        (lo, hi)
    }

    fn correlations(&self, model: &CorrelationModel<T>) -> Vec<T> {
        self.pairs
            .iter()
            .map(|&(_, _, h)| model.correlation_unchecked(h).max(-T::one()).min(T::one()))
            .collect()
    }

    /// Per-pair log densities of one replicate, in pair order.
    #[inline]
    fn row_terms<'r>(&'r self, row: &'r [T], rhos: &'r [T]) -> impl Iterator<Item = T> + 'r {
        self.pairs
            .iter()
            .zip(rhos)
            .map(move |(&(a, b, _), &rho)| schlather_bivariate_log_pdf(row[a], row[b], rho))
    }

    /// `ℓ_C` at `model`; any non-finite term collapses the total to the sentinel.
    pub fn evaluate(&self, model: &CorrelationModel<T>) -> PairwiseEvaluation<T> {
        let rhos = self.correlations(model);
        let row_sums: Vec<Option<T>> = (0..self.data.n_events())
            .into_par_iter()
            .map(|n| {
                let mut acc = T::zero();
                for t in self.row_terms(self.data.row(n), &rhos) {
                    if !t.is_finite() {
                        return None;
                    }
                    acc = acc + t;
                }
                Some(acc)
            })
            .collect();
        let mut total = T::zero();
        for s in row_sums {
            match s {
                Some(v) => total = total + v,
                None => {
                    total = sentinel();
                    break;
                }
            }
        }
        if !total.is_finite() {
            total = sentinel();
        }
        PairwiseEvaluation {
            value: total,
            terms: self.n_terms(),
        }
    }

    /// All `N·P` term log densities, replicate-major.
    fn all_terms(&self, model: &CorrelationModel<T>) -> Vec<T> {
        let rhos = self.correlations(model);
        let p = self.n_pairs();
        let mut out = vec![T::zero(); self.n_terms()];
        out.par_chunks_mut(p).enumerate().for_each(|(n, chunk)| {
            for (slot, t) in chunk.iter_mut().zip(self.row_terms(self.data.row(n), &rhos)) {
                *slot = t;
            }
        });
        out
    }
}

/// `ℓ_C(θ; z)` for unit-Fréchet data at `sites` under `model`.
pub fn pairwise_loglik<T: Scalar>(
    data: &EventMatrix<T>,
    sites: &SiteSet<T>,
    model: &CorrelationModel<T>,
) -> Result<T> {
    model.validate()?;
    Ok(CompositeLikelihood::new(data, sites)?.evaluate(model).value)
}

/// Sandwich ingredients at an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SandwichVariance<T: Scalar> {
    /// Negative summed Hessian of the pair-term log densities.
    pub h: Mat2<T>,
    /// Summed outer products of scores.
    pub j: Mat2<T>,
    /// `H⁻¹ J H⁻¹`.
    pub covariance: Mat2<T>,
    pub std_errors: [T; 2],
}

/// Maximum composite likelihood fit of one correlation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CompositeFit<T: Scalar> {
    pub family: CorrelationFamily,
    pub range: T,
    pub smooth: T,
    pub h: Mat2<T>,
    pub j: Mat2<T>,
    pub covariance: Mat2<T>,
    /// Standard errors of `(range, smooth)`.
    pub std_errors: [T; 2],
    pub log_likelihood: T,
    pub n_pairs: usize,
    pub n_replicates: usize,
    pub iterations: usize,
    pub converged: bool,
    pub score_variance: ScoreVariance,
}

impl<T: Scalar> CompositeFit<T> {
    pub fn model(&self) -> Result<CorrelationModel<T>> {
        CorrelationModel::new(self.family, self.range, self.smooth)
    }
}

/// Options for [`fit_maxstable_with`].
#[derive(Debug, Clone)]
pub struct MaxStableFitOptions<T> {
    pub init: Option<(T, T)>,
    pub max_iter: usize,
    pub ftol: f64,
    pub score_variance: ScoreVariance,
}

impl<T> Default for MaxStableFitOptions<T> {
    fn default() -> Self {
        MaxStableFitOptions {
            init: None,
            max_iter: 2000,
            ftol: 1e-8,
            score_variance: ScoreVariance::PerReplicate,
        }
    }
}

/// Unconstrained optimizer coordinates for `(c₂, ν)`.
#[derive(Debug, Clone, Copy)]
struct Coordinates {
    family: CorrelationFamily,
}

impl Coordinates {
    fn to_natural<T: Scalar>(&self, eta: &[T]) -> (T, T) {
        let range = eta[0].exp();
        let smooth = match self.family {
            // ν = 2 / (1 + e^{-η}) keeps powered-exponential inside (0, 2).
            CorrelationFamily::PoweredExponential => T::lit(2.0) / (T::one() + (-eta[1]).exp()),
            _ => eta[1].exp(),
        };
        (range, smooth)
    }

    fn from_natural<T: Scalar>(&self, range: T, smooth: T) -> [T; 2] {
        let eta1 = match self.family {
            CorrelationFamily::PoweredExponential => {
                let s = smooth.max(T::lit(1e-6)).min(T::lit(2.0 - 1e-6)) / T::lit(2.0);
                (s / (T::one() - s)).ln()
            }
            _ => smooth.ln(),
        };
        [range.ln(), eta1]
    }
}

/// Fits `family` by maximum composite likelihood with default options.
pub fn fit_maxstable<T: Scalar>(
    data: &EventMatrix<T>,
    sites: &SiteSet<T>,
    family: CorrelationFamily,
    init: Option<(T, T)>,
) -> Result<CompositeFit<T>> {
    let options = MaxStableFitOptions {
        init,
        ..Default::default()
    };
    fit_maxstable_with(data, sites, family, &options)
}

pub fn fit_maxstable_with<T: Scalar>(
    data: &EventMatrix<T>,
    sites: &SiteSet<T>,
    family: CorrelationFamily,
    options: &MaxStableFitOptions<T>,
) -> Result<CompositeFit<T>> {
    let lik = CompositeLikelihood::new(data, sites)?;
    if lik.n_terms() < 10 {
        return Err(Error::Fit(format!(
            "only {} pair terms; at least 10 needed",
            lik.n_terms()
        )));
    }
    let coords = Coordinates { family };
    let (d_lo, d_hi) = lik.distance_extent();
    if !(d_hi > T::zero()) {
        return Err(Error::Fit("all sites coincide; range is not identifiable".into()));
    }
    // Box in optimizer space; outside it the objective is rejected.
    let (ln_range_lo, ln_range_hi) = ((d_lo * T::lit(1e-3)).ln(), (d_hi * T::lit(1e3)).ln());
    let (ln_smooth_lo, ln_smooth_hi) = (T::lit(-5.0), T::lit(3.5));

    let (r0, s0) = options.init.unwrap_or((lik.median_distance(), T::one()));
    let s0 = s0.min(T::lit(family.max_smooth().min(1e6)) * T::lit(0.95));
    let eta0 = coords.from_natural(r0, s0);

    let objective = |eta: &[T]| -> T {
        if eta[0] < ln_range_lo || eta[0] > ln_range_hi {
            return T::infinity();
        }
        if family != CorrelationFamily::PoweredExponential
            && (eta[1] < ln_smooth_lo || eta[1] > ln_smooth_hi)
        {
            return T::infinity();
        }
        if family == CorrelationFamily::PoweredExponential && eta[1].abs() > T::lit(30.0) {
            return T::infinity();
        }
        let (range, smooth) = coords.to_natural(eta);
        let model = CorrelationModel { family, range, smooth };
        let v = lik.evaluate(&model).value;
        if v <= sentinel() {
            T::infinity()
        } else {
            -v
        }
    };

    let nm = NelderMead::new(2)
        .with_step(vec![T::lit(0.5), T::lit(0.5)])
        .with_max_iter(options.max_iter)
        .with_ftol(T::lit(options.ftol));
    let best = nm.minimize(objective, &eta0);
    let (range, smooth) = coords.to_natural(&best.x);
    if !best.value.is_finite() {
        return Err(Error::Fit(format!(
            "{family}: composite likelihood not finite near ({range}, {smooth})"
        )));
    }
    if !best.converged {
        return Err(Error::Fit(format!(
            "{family}: simplex did not converge in {} iterations; best point range={range}, smooth={smooth}, loglik={}",
            best.iterations, -best.value
        )));
    }
    let model = CorrelationModel { family, range, smooth };
    let sandwich = sandwich_variance_with(&lik, &model, options.score_variance)?;
    Ok(CompositeFit {
        family,
        range,
        smooth,
        h: sandwich.h,
        j: sandwich.j,
        covariance: sandwich.covariance,
        std_errors: sandwich.std_errors,
        log_likelihood: -best.value,
        n_pairs: lik.n_pairs(),
        n_replicates: lik.n_replicates(),
        iterations: best.iterations,
        converged: best.converged,
        score_variance: options.score_variance,
    })
}

/// Sandwich variance of `(c₂, ν)` at `model` for the given data.
pub fn sandwich_variance<T: Scalar>(
    data: &EventMatrix<T>,
    sites: &SiteSet<T>,
    model: &CorrelationModel<T>,
    score_variance: ScoreVariance,
) -> Result<SandwichVariance<T>> {
    let lik = CompositeLikelihood::new(data, sites)?;
    sandwich_variance_with(&lik, model, score_variance)
}

fn sandwich_variance_with<T: Scalar>(
    lik: &CompositeLikelihood<'_, T>,
    model: &CorrelationModel<T>,
    score_variance: ScoreVariance,
) -> Result<SandwichVariance<T>> {
    let theta = [model.range, model.smooth];
    let family = model.family;
    let terms_at = |d: [T; 2]| {
        let m = CorrelationModel {
            family,
            range: theta[0] + d[0],
            smooth: theta[1] + d[1],
        };
        lik.all_terms(&m)
    };
    let finite = |v: &[T]| v.iter().all(|t| t.is_finite());

    // Scores by central differences.
    let hs: Vec<T> = theta.iter().map(|&t| T::lit(1e-5) * t.abs().max(T::one())).collect();
    let mut scores: Vec<Vec<T>> = Vec::with_capacity(2);
    for k in 0..2 {
        let mut up = [T::zero(); 2];
        up[k] = hs[k];
        let mut dn = [T::zero(); 2];
        dn[k] = -hs[k];
        let (tp, tm) = (terms_at(up), terms_at(dn));
        if !finite(&tp) || !finite(&tm) {
            return Err(Error::Numerical("non-finite pair term in score stencil".into()));
        }
        let two_h = T::lit(2.0) * hs[k];
        scores.push(tp.iter().zip(&tm).map(|(&a, &b)| (a - b) / two_h).collect());
    }

    let p = lik.n_pairs();
    let mut j = Mat2::zero();
    match score_variance {
        ScoreVariance::PerPairTerm => {
            for (&s0, &s1) in scores[0].iter().zip(&scores[1]) {
                j = j.add(&Mat2::outer([s0, s1]));
            }
        }
        ScoreVariance::PerReplicate => {
            for (c0, c1) in scores[0].chunks_exact(p).zip(scores[1].chunks_exact(p)) {
                let s0: T = c0.iter().copied().sum();
                let s1: T = c1.iter().copied().sum();
                j = j.add(&Mat2::outer([s0, s1]));
            }
        }
    }

    // Hessians by nested central differences; summing per-term second
    // differences in a fixed order.
    let hh: Vec<T> = theta.iter().map(|&t| T::lit(1e-4) * t.abs().max(T::one())).collect();
    let center = terms_at([T::zero(); 2]);
    if !finite(&center) {
        return Err(Error::Numerical("non-finite pair term at the estimate".into()));
    }
    let mut hess = Mat2::zero();
    for k in 0..2 {
        let mut up = [T::zero(); 2];
        up[k] = T::lit(2.0) * hh[k];
        let mut dn = [T::zero(); 2];
        dn[k] = -T::lit(2.0) * hh[k];
        let (tp, tm) = (terms_at(up), terms_at(dn));
        if !finite(&tp) || !finite(&tm) {
            return Err(Error::Numerical("non-finite pair term in Hessian stencil".into()));
        }
        let denom = T::lit(4.0) * hh[k] * hh[k];
        let mut acc = T::zero();
        for i in 0..center.len() {
            acc = acc + (tp[i] - T::lit(2.0) * center[i] + tm[i]) / denom;
        }
        hess.0[k][k] = acc;
    }
    let corners = [
        terms_at([hh[0], hh[1]]),
        terms_at([hh[0], -hh[1]]),
        terms_at([-hh[0], hh[1]]),
        terms_at([-hh[0], -hh[1]]),
    ];
    if corners.iter().any(|c| !finite(c)) {
        return Err(Error::Numerical("non-finite pair term in Hessian stencil".into()));
    }
    let denom = T::lit(4.0) * hh[0] * hh[1];
    let mut cross = T::zero();
    for i in 0..center.len() {
        cross = cross + (corners[0][i] - corners[1][i] - corners[2][i] + corners[3][i]) / denom;
    }
    hess.0[0][1] = cross;
    hess.0[1][0] = cross;
    let h = hess.scale(-T::one());

    let h_inv = h.inverse()?;
    let covariance = h_inv.mul(&j).mul(&h_inv);
    let std_errors = [
        covariance.0[0][0].max(T::zero()).sqrt(),
        covariance.0[1][1].max(T::zero()).sqrt(),
    ];
    Ok(SandwichVariance {
        h,
        j,
        covariance,
        std_errors,
    })
}

/// Composite likelihood information criterion; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClicScore<T: Scalar> {
    pub family: CorrelationFamily,
    /// `−2ℓ_C − penalty`.
    pub value: T,
    /// `tr(J H⁻¹)`.
    pub penalty: T,
    pub log_likelihood: T,
}

impl<T: Scalar> ClicScore<T> {
    pub fn from_parts(family: CorrelationFamily, log_likelihood: T, penalty: T) -> Self {
        ClicScore {
            family,
            value: -T::lit(2.0) * log_likelihood - penalty,
            penalty,
            log_likelihood,
        }
    }
}

pub fn clic<T: Scalar>(fit: &CompositeFit<T>) -> Result<ClicScore<T>> {
    let penalty = fit.j.mul(&fit.h.inverse()?).trace();
    let score = ClicScore::from_parts(fit.family, fit.log_likelihood, penalty);
    if !score.value.is_finite() {
        return Err(Error::Numerical("CLIC is not finite".into()));
    }
    Ok(score)
}

/// One row of a model-selection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ClicRow<T: Scalar> {
    pub family: CorrelationFamily,
    pub score: Option<ClicScore<T>>,
    pub fit: Option<CompositeFit<T>>,
    pub error: Option<String>,
}

/// Fits of every candidate family plus the CLIC-minimizing one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelSelection<T: Scalar> {
    pub best: CompositeFit<T>,
    pub best_score: ClicScore<T>,
    pub table: Vec<ClicRow<T>>,
}

/// Fits each family and picks the lowest CLIC. Ties go to the fit that
/// needed fewer iterations, then to the earlier family in `families`.
pub fn model_select<T: Scalar>(
    data: &EventMatrix<T>,
    sites: &SiteSet<T>,
    families: &[CorrelationFamily],
    options: &MaxStableFitOptions<T>,
) -> Result<ModelSelection<T>> {
    if families.is_empty() {
        return Err(Error::Usage("model selection needs at least one family".into()));
    }
    let table: Vec<ClicRow<T>> = families
        .iter()
        .map(|&family| {
            let outcome = fit_maxstable_with(data, sites, family, options)
                .and_then(|fit| clic(&fit).map(|score| (fit, score)));
            match outcome {
                Ok((fit, score)) => ClicRow {
                    family,
                    score: Some(score),
                    fit: Some(fit),
                    error: None,
                },
                Err(e) => ClicRow {
                    family,
                    score: None,
                    fit: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best: Option<(usize, &CompositeFit<T>, &ClicScore<T>)> = None;
    for (idx, row) in table.iter().enumerate() {
        if let (Some(fit), Some(score)) = (&row.fit, &row.score) {
            let better = match best {
                None => true,
                Some((_, bf, bs)) => {
                    score.value < bs.value || (score.value == bs.value && fit.iterations < bf.iterations)
                }
            };
            if better {
                best = Some((idx, fit, score));
            }
        }
    }
    match best {
        Some((_, fit, score)) => Ok(ModelSelection {
            best: fit.clone(),
            best_score: *score,
            table: table.clone(),
        }),
        None => {
            let reasons: Vec<String> = table
                .iter()
                .map(|r| format!("{}: {}", r.family, r.error.as_deref().unwrap_or("unknown")))
                .collect();
            Err(Error::Fit(format!("every family failed: {}", reasons.join("; "))))
        }
    }
}


#[cfg(test)]
mod fit_tests {
    use super::*;
    use crate::rng::Stream;
    use crate::spatial::simulate_schlather;

    fn random_sites(k: usize, seed: u64) -> SiteSet<f64> {
        let mut s = Stream::new(seed);
        SiteSet::new((0..k).map(|_| [s.uniform_in(0.0, 10.0), s.uniform_in(0.0, 10.0)]).collect()).unwrap()
    }

    #[test]
    fn recovers_whittle_matern_parameters() {
        let truth = CorrelationModel::new(CorrelationFamily::WhittleMatern, 3.0, 1.0).unwrap();
        let mut covered = 0;
        for rep in 0..10 {
            let sites = random_sites(12, 100 + rep);
            let ev = simulate_schlather(&sites, &truth, 200, 200 + rep).unwrap();
            let fit = fit_maxstable(&ev, &sites, CorrelationFamily::WhittleMatern, None).unwrap();
            let z0 = (fit.range - 3.0) / fit.std_errors[0];
            let z1 = (fit.smooth - 1.0) / fit.std_errors[1];
            if z0.abs() < 3.0 && z1.abs() < 3.0 {
                covered += 1;
            }
        }
        assert!(covered >= 8, "{covered}/10 within 3 SE");
    }

    #[test]
    fn estimate_is_stationary() {
        let sites = random_sites(10, 3);
        let truth = CorrelationModel::new(CorrelationFamily::Cauchy, 2.0, 1.0).unwrap();
        let ev = simulate_schlather(&sites, &truth, 150, 5).unwrap();
        let fit = fit_maxstable(&ev, &sites, CorrelationFamily::Cauchy, None).unwrap();
        let at = |r: f64, s: f64| {
            pairwise_loglik(&ev, &sites, &CorrelationModel::new(CorrelationFamily::Cauchy, r, s).unwrap()).unwrap()
        };
        let h = 1e-4f64;
        let g0 = (at(fit.range * (1.0 + h), fit.smooth) - at(fit.range * (1.0 - h), fit.smooth)) / 2.0;
        let g1 = (at(fit.range, fit.smooth * (1.0 + h)) - at(fit.range, fit.smooth * (1.0 - h))) / 2.0;
        // Change in ℓ per relative step of 1e-4; tiny next to a total of ~10⁴.
        assert!(g0.abs() < 0.05 && g1.abs() < 0.05, "{g0} {g1}");
        assert!(fit.j.sym_eigenvalues().iter().all(|&e| e >= -1e-9 * fit.j.trace().abs()));
    }

    #[test]
    fn two_site_sandwich_matches_inverse_information() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let truth = CorrelationModel::new(CorrelationFamily::PoweredExponential, 3.0f64, 1.0).unwrap();
        let ev = simulate_schlather(&sites, &truth, 20_000, 9).unwrap();
        let s = sandwich_variance(&ev, &sites, &truth, ScoreVariance::PerReplicate).unwrap();
        let inv_h = s.h.inverse().unwrap();
        // One pair: J and H estimate the same Fisher information.
        let ratio = s.j.0[0][0] / s.h.0[0][0];
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
        let per_term = sandwich_variance(&ev, &sites, &truth, ScoreVariance::PerPairTerm).unwrap();
        assert!(per_term.j.asymmetry() < 1e-12);
        assert!((per_term.j.0[0][0] - s.j.0[0][0]).abs() < 1e-9 * s.j.0[0][0]);
        assert!(inv_h.0[0][0] > 0.0);
    }

    #[test]
    fn standard_errors_shrink_with_more_replicates() {
        let truth = CorrelationModel::new(CorrelationFamily::WhittleMatern, 3.0, 1.0).unwrap();
        let mut shrunk = 0;
        for rep in 0..10 {
            let sites = random_sites(12, 300 + rep);
            let se = |n: usize| {
                let ev = simulate_schlather(&sites, &truth, n, 400 + rep).unwrap();
                fit_maxstable(&ev, &sites, CorrelationFamily::WhittleMatern, None).unwrap().std_errors
            };
            let (small, large) = (se(150), se(300));
            if large[0] < small[0] && large[1] < small[1] {
                shrunk += 1;
            }
        }
        assert!(shrunk >= 8, "{shrunk}/10");
    }

    #[test]
    fn site_relabeling_gives_identical_estimates() {
        let sites = random_sites(9, 21);
        let truth = CorrelationModel::new(CorrelationFamily::WhittleMatern, 2.5, 1.0).unwrap();
        let ev = simulate_schlather(&sites, &truth, 100, 22).unwrap();
        let perm = [8, 2, 5, 0, 7, 1, 4, 6, 3];
        let a = fit_maxstable(&ev, &sites, CorrelationFamily::WhittleMatern, None).unwrap();
        let b = fit_maxstable(
            &ev.select_columns(&perm).unwrap(),
            &sites.select(&perm).unwrap(),
            CorrelationFamily::WhittleMatern,
            None,
        )
        .unwrap();
        assert!((a.range - b.range).abs() < 1e-8 && (a.smooth - b.smooth).abs() < 1e-8);
    }

    #[test]
    fn model_select_reports_every_family() {
        let sites = random_sites(10, 31);
        let truth = CorrelationModel::new(CorrelationFamily::Cauchy, 2.0, 1.0).unwrap();
        let ev = simulate_schlather(&sites, &truth, 150, 32).unwrap();
        let sel = model_select(&ev, &sites, &CorrelationFamily::ALL, &MaxStableFitOptions::default()).unwrap();
        assert_eq!(sel.table.len(), 3);
        let min = sel
            .table
            .iter()
            .filter_map(|r| r.score.map(|s| s.value))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(sel.best_score.value, min);
    }

    #[test]
    fn single_precision_fit() {
        let sites = SiteSet::<f32>::new(vec![[0.0, 0.0], [1.0, 0.5], [2.0, 2.0], [0.5, 3.0]]).unwrap();
        let truth = CorrelationModel::new(CorrelationFamily::Cauchy, 2.0f32, 1.0).unwrap();
        let ev = simulate_schlather(&sites, &truth, 200, 41).unwrap();
        let fit = fit_maxstable(&ev, &sites, CorrelationFamily::Cauchy, None).unwrap();
        assert!(fit.range.is_finite() && fit.range > 0.0);
    }
}
