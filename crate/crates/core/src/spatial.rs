//! Isotropic correlation families, the Schlather (extremal Gaussian)
//! max-stable process, and simulation of joint extremes at a site set.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gev::FittedGev;
use crate::linalg::CholeskyFactor;
use crate::rng::{child_seed, Stream};
use crate::scalar::Scalar;
use crate::special::matern_kernel;

/// `E max(0, Y)` for a standard normal `Y`.
pub const SPECTRAL_MEAN: f64 = 0.398_942_280_401_432_7;

/// Bound assumed on `max(0, Y)` by the simulation stopping rule.
pub const TRUNCATION: f64 = 3.5;

/// Hard cap on spectral points per simulated event.
pub const MAX_SPECTRAL_POINTS: usize = 10_000;

/// Correlation family of the underlying Gaussian process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationFamily {
    WhittleMatern,
    Cauchy,
    PoweredExponential,
}

impl CorrelationFamily {
    pub const ALL: [CorrelationFamily; 3] = [
        CorrelationFamily::WhittleMatern,
        CorrelationFamily::Cauchy,
        CorrelationFamily::PoweredExponential,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CorrelationFamily::WhittleMatern => "whittle-matern",
            CorrelationFamily::Cauchy => "cauchy",
            CorrelationFamily::PoweredExponential => "powered-exponential",
        }
    }

    /// Upper bound on the smoothness parameter.
    pub fn max_smooth(&self) -> f64 {
        match self {
            CorrelationFamily::PoweredExponential => 2.0,
            _ => f64::INFINITY,
        }
    }
}

impl fmt::Display for CorrelationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorrelationFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "whittle-matern" | "matern" => Ok(CorrelationFamily::WhittleMatern),
            "cauchy" => Ok(CorrelationFamily::Cauchy),
            "powered-exponential" | "powexp" | "stable" => Ok(CorrelationFamily::PoweredExponential),
            other => Err(Error::Usage(format!("unknown correlation family '{other}'"))),
        }
    }
}

/// Correlation model with the nugget fixed at 1: `ρ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorrelationModel<T: Scalar> {
    pub family: CorrelationFamily,
    /// Range `c₂ > 0`, in site-coordinate units.
    pub range: T,
    /// Smoothness `ν > 0` (at most 2 for powered-exponential).
    pub smooth: T,
}

impl<T: Scalar> CorrelationModel<T> {
    pub fn new(family: CorrelationFamily, range: T, smooth: T) -> Result<Self> {
        let m = CorrelationModel { family, range, smooth };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range > T::zero() && self.range.is_finite()) {
            return Err(Error::domain(format!("range must be > 0, got {}", self.range)));
        }
        if !(self.smooth > T::zero() && self.smooth.is_finite()) {
            return Err(Error::domain(format!("smooth must be > 0, got {}", self.smooth)));
        }
        if self.smooth.to_f64_lossy() > self.family.max_smooth() {
            return Err(Error::domain(format!(
                "{} smooth must be <= {}, got {}",
                self.family,
                self.family.max_smooth(),
                self.smooth
            )));
        }
        Ok(())
    }

    /// `ρ(h)`.
    pub fn correlation(&self, h: T) -> Result<T> {
        self.validate()?;
        if !(h >= T::zero()) || !h.is_finite() {
            return Err(Error::domain(format!("distance must be finite and >= 0, got {h}")));
        }
        Ok(self.correlation_unchecked(h))
    }

    /// `ρ(h)` without parameter checks; used inside optimizers and
    /// finite-difference stencils that may step past family bounds.
    pub fn correlation_unchecked(&self, h: T) -> T {
        if h == T::zero() {
            return T::one();
        }
        let x = h / self.range;
        match self.family {
            CorrelationFamily::WhittleMatern => {
                T::lit(matern_kernel(x.to_f64_lossy(), self.smooth.to_f64_lossy()))
            }
            CorrelationFamily::Cauchy => (T::one() + x * x).powf(-self.smooth),
            CorrelationFamily::PoweredExponential => (-x.powf(self.smooth)).exp(),
        }
    }
}

/// Ordered planar site coordinates with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SiteSet<T: Scalar> {
    pub coords: Vec<[T; 2]>,
    pub labels: Vec<String>,
}

impl<T: Scalar> SiteSet<T> {
    /// Sites labelled `S1..SK`.
    pub fn new(coords: Vec<[T; 2]>) -> Result<Self> {
        let labels = (1..=coords.len()).map(|i| format!("S{i}")).collect();
        Self::with_labels(coords, labels)
    }

    pub fn with_labels(coords: Vec<[T; 2]>, labels: Vec<String>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("a site set needs at least one site"));
        }
        if labels.len() != coords.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} sites",
                labels.len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(Error::domain("site coordinates must be finite"));
        }
        Ok(SiteSet { coords, labels })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Euclidean distance between sites `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> T {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Subset of sites in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Shape(format!("site index {bad} out of range")));
        }
        Self::with_labels(
            indices.iter().map(|&i| self.coords[i]).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }

    /// Pairwise distances `i < j` in lexicographic order.
    pub fn pair_distances(&self) -> Vec<(usize, usize, T)> {
        let k = self.len();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                out.push((i, j, self.distance(i, j)));
            }
        }
        out
    }
}

/// `−ln F(z₁, z₂)` for the Schlather bivariate law.
///
/// Written as `1/(2z₁) + 1/(2z₂) + R/(2 z₁ z₂)` with
/// `R = sqrt(z₁² + z₂² − 2ρ z₁ z₂)`.
#[inline]
fn exponent_measure<T: Scalar>(z1: T, z2: T, rho: T) -> (T, T) {
    // Argument order is canonicalized so the result is exactly symmetric.
    let (z1, z2) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
    let d = z1 - z2;
    let r2 = d * d + T::lit(2.0) * (T::one() - rho) * z1 * z2;
    let r = r2.max(T::zero()).sqrt();
    let half = T::lit(0.5);
    (half / z1 + half / z2 + half * r / (z1 * z2), r)
}

fn check_bivariate<T: Scalar>(z1: T, z2: T, rho: T) -> Result<()> {
    if !(z1 > T::zero() && z2 > T::zero()) || !(z1.is_finite() && z2.is_finite()) {
        return Err(Error::domain(format!(
            "bivariate arguments must be positive and finite, got ({z1}, {z2})"
        )));
    }
    if !(rho >= -T::one() && rho <= T::one()) {
        return Err(Error::domain(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}

/// `P(Z₁ ≤ z₁, Z₂ ≤ z₂)` for unit-Fréchet margins and Gaussian correlation `rho`.
pub fn schlather_bivariate_cdf<T: Scalar>(z1: T, z2: T, rho: T) -> Result<T> {
    check_bivariate(z1, z2, rho)?;
    Ok((-exponent_measure(z1, z2, rho).0).exp())
}

/// Joint density `∂²F/∂z₁∂z₂`.
pub fn schlather_bivariate_pdf<T: Scalar>(z1: T, z2: T, rho: T) -> Result<T> {
    check_bivariate(z1, z2, rho)?;
    Ok(schlather_bivariate_log_pdf(z1, z2, rho).exp())
}

/// Log of the joint density without argument checks.
///
/// With `V = −ln F`, the density is `e^{−V}(V₁V₂ − V₁₂)` where
/// `V₁ = −(R − ρz₁ + z₂)/(2z₁²R)`, `V₂` symmetric, and `V₁₂ = −(1−ρ²)/(2R³)`.
/// Returns `−∞` on the singular diagonal of a perfectly correlated pair.
#[inline]
pub fn schlather_bivariate_log_pdf<T: Scalar>(z1: T, z2: T, rho: T) -> T {
    let (z1, z2) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
    let (v, r) = exponent_measure(z1, z2, rho);
    if !(r > T::zero()) {
        return T::neg_infinity();
    }
    let two = T::lit(2.0);
    let v1 = (r - rho * z1 + z2) / (two * z1 * z1 * r);
    let v2 = (r - rho * z2 + z1) / (two * z2 * z2 * r);
    let mixed = (T::one() - rho * rho) / (two * r * r * r);
    (v1 * v2 + mixed).ln() - v
}

/// `θ = 1 + sqrt((1 − ρ)/2)`.
pub fn extremal_coefficient_from_correlation<T: Scalar>(rho: T) -> T {
    T::one() + ((T::one() - rho).max(T::zero()) * T::lit(0.5)).sqrt()
}

/// Pairwise extremal coefficient at separation `h`, in `[1, 2]`.
pub fn extremal_coefficient<T: Scalar>(model: &CorrelationModel<T>, h: T) -> Result<T> {
    Ok(extremal_coefficient_from_correlation(model.correlation(h)?))
}

/// Madogram estimate of the extremal coefficient from two unit-Fréchet columns.
pub fn madogram_extremal_coefficient<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape("madogram needs two equal-length, non-empty columns".into()));
    }
    let total: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| ((-T::one() / x).exp() - (-T::one() / y).exp()).abs())
        .sum();
    let nu = T::lit(0.5) * total / T::from_usize_lossy(a.len());
    let two = T::lit(2.0);
    Ok((T::one() + two * nu) / (T::one() - two * nu))
}

/// Zero-mean, unit-variance Gaussian vector with correlation `ρ(‖xᵢ − xⱼ‖)`.
///
/// Coincident sites share one factor row, so their draws are identical.
#[derive(Debug, Clone)]
pub struct GaussianField<T: Scalar> {
    factor: CholeskyFactor<T>,
    /// Index into the de-duplicated site list for each input site.
    site_map: Vec<usize>,
}

impl<T: Scalar> GaussianField<T> {
    pub fn new(sites: &SiteSet<T>, model: &CorrelationModel<T>) -> Result<Self> {
        model.validate()?;
        let mut unique: Vec<[T; 2]> = Vec::new();
        let mut site_map = Vec::with_capacity(sites.len());
        for c in &sites.coords {
            match unique.iter().position(|u| u[0] == c[0] && u[1] == c[1]) {
                Some(i) => site_map.push(i),
                None => {
                    site_map.push(unique.len());
                    unique.push(*c);
                }
            }
        }
        let n = unique.len();
        let mut cov = vec![T::zero(); n * n];
        for i in 0..n {
            cov[i * n + i] = T::one();
            for j in (i + 1)..n {
                let h = (unique[i][0] - unique[j][0]).hypot(unique[i][1] - unique[j][1]);
                let rho = model.correlation_unchecked(h);
                cov[i * n + j] = rho;
                cov[j * n + i] = rho;
            }
        }
        let factor = CholeskyFactor::new(&cov, n)?;
        Ok(GaussianField { factor, site_map })
    }

    pub fn n_sites(&self) -> usize {
        self.site_map.len()
    }

    /// Writes one realization into `out` (length `n_sites`); `scratch` holds the
    /// de-duplicated draw and must have length `factor.dim() * 2`.
    fn draw_into(&self, stream: &mut Stream, scratch: &mut [T], out: &mut [T]) {
        let m = self.factor.dim();
        let (z, y) = scratch.split_at_mut(m);
        for v in z.iter_mut() {
            *v = T::lit(stream.standard_normal());
        }
        self.factor.mul_vec(z, y);
        for (o, &idx) in out.iter_mut().zip(&self.site_map) {
            *o = y[idx];
        }
    }

    pub fn sample(&self, stream: &mut Stream) -> Vec<T> {
        let mut scratch = vec![T::zero(); 2 * self.factor.dim()];
        let mut out = vec![T::zero(); self.n_sites()];
        self.draw_into(stream, &mut scratch, &mut out);
        out
    }
}

/// One Gaussian field realization at `sites`, seeded by `seed`.
pub fn gaussian_field_sample<T: Scalar>(
    sites: &SiteSet<T>,
    model: &CorrelationModel<T>,
    seed: u64,
) -> Result<Vec<T>> {
    let field = GaussianField::new(sites, model)?;
    Ok(field.sample(&mut Stream::new(seed)))
}

/// Scale of the entries of an [`EventMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventScale {
    UnitFrechet,
    Native,
}

/// `I` events (rows) × `K` sites (columns), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EventMatrix<T: Scalar> {
    n_events: usize,
    labels: Vec<String>,
    values: Vec<T>,
    scale: EventScale,
    seed: Option<u64>,
}

impl<T: Scalar> EventMatrix<T> {
    pub fn new(values: Vec<T>, labels: Vec<String>, scale: EventScale) -> Result<Self> {
        let k = labels.len();
        if k == 0 || values.len() % k != 0 || values.is_empty() {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {} sites",
                values.len(),
                k
            )));
        }
        if scale == EventScale::UnitFrechet && values.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::domain("unit-Fréchet events must be positive"));
        }
        Ok(EventMatrix {
            n_events: values.len() / k,
            labels,
            values,
            scale,
            seed: None,
        })
    }

    /// Builds from columns (one `Vec` per site).
    pub fn from_columns(columns: &[Vec<T>], labels: Vec<String>, scale: EventScale) -> Result<Self> {
        if columns.len() != labels.len() || columns.is_empty() {
            return Err(Error::Shape("one label per column required".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("columns differ in length".into()));
        }
        let k = columns.len();
        let mut values = vec![T::zero(); n * k];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * k + j] = v;
            }
        }
        Self::new(values, labels, scale)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn n_sites(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn scale(&self) -> EventScale {
        self.scale
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, event: usize, site: usize) -> T {
        self.values[event * self.n_sites() + site]
    }

    #[inline]
    pub fn row(&self, event: usize) -> &[T] {
        let k = self.n_sites();
        &self.values[event * k..(event + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n_sites())
    }

    pub fn column(&self, site: usize) -> Vec<T> {
        self.rows().map(|r| r[site]).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, sites: &[usize]) -> Result<Self> {
        if let Some(&bad) = sites.iter().find(|&&s| s >= self.n_sites()) {
            return Err(Error::Shape(format!("column {bad} out of range")));
        }
        let values = self
            .rows()
            .flat_map(|r| sites.iter().map(move |&s| r[s]))
            .collect();
        let labels = sites.iter().map(|&s| self.labels[s].clone()).collect();
        Ok(EventMatrix {
            n_events: self.n_events,
            labels,
            values,
            scale: self.scale,
            seed: self.seed,
        })
    }

    /// CSV with a header of site labels and one row per event.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
        w.write_record(&self.labels).map_err(csv_err)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Approximate Schlather process simulator at a fixed site set.
///
/// Spectral points `wᵢ = 1/(δ Γᵢ)` with `Γᵢ` a unit-rate Poisson arrival
/// sequence are combined as `Z(x) = maxᵢ wᵢ max(0, Yᵢ(x))`. An event stops
/// once `wᵢ · C < min_x Z(x)` for truncation `C`, or after the point cap.
#[derive(Debug, Clone)]
pub struct SchlatherSimulator<T: Scalar> {
    field: GaussianField<T>,
    labels: Vec<String>,
    truncation: T,
    max_points: usize,
}

impl<T: Scalar> SchlatherSimulator<T> {
    pub fn new(sites: &SiteSet<T>, model: &CorrelationModel<T>) -> Result<Self> {
        Ok(SchlatherSimulator {
            field: GaussianField::new(sites, model)?,
            labels: sites.labels.clone(),
            truncation: T::lit(TRUNCATION),
            max_points: MAX_SPECTRAL_POINTS,
        })
    }

    /// Fills `out` with event number `index` of the stream keyed by `master_seed`.
    pub fn event_into(&self, master_seed: u64, index: u64, out: &mut [T]) {
        let mut stream = Stream::new(child_seed(master_seed, index));
        let m = self.field.factor.dim();
        let mut scratch = vec![T::zero(); 2 * m];
        let mut y = vec![T::zero(); out.len()];
        out.iter_mut().for_each(|v| *v = T::zero());
        let delta = T::lit(SPECTRAL_MEAN);
        let mut arrival = T::zero();
        let mut floor = T::zero();
        for _ in 0..self.max_points {
            arrival = arrival + T::lit(stream.unit_exponential());
            let w = T::one() / (delta * arrival);
            if w * self.truncation < floor {
                break;
            }
            self.field.draw_into(&mut stream, &mut scratch, &mut y);
            for (z, &g) in out.iter_mut().zip(&y) {
                let cand = w * g.max(T::zero());
                if cand > *z {
                    *z = cand;
                }
            }
            floor = out.iter().copied().fold(T::infinity(), T::min);
        }
        // A site never hit within the cap keeps the smallest admissible value.
        let eps = T::min_positive_value();
        out.iter_mut().for_each(|v| *v = v.max(eps));
    }

    /// `n_events` independent events; row `i` depends only on `(seed, i)`.
    pub fn simulate(&self, n_events: usize, seed: u64) -> Result<EventMatrix<T>> {
        if n_events == 0 {
            return Err(Error::domain("need at least one event"));
        }
        let k = self.labels.len();
        let mut values = vec![T::zero(); n_events * k];
        values
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, row)| self.event_into(seed, i as u64, row));
        Ok(EventMatrix::new(values, self.labels.clone(), EventScale::UnitFrechet)?.with_seed(seed))
    }
}

/// Simulates `n_events` Schlather events at `sites` on the unit-Fréchet scale.
pub fn simulate_schlather<T: Scalar>(
    sites: &SiteSet<T>,
    model: &CorrelationModel<T>,
    n_events: usize,
    seed: u64,
) -> Result<EventMatrix<T>> {
    SchlatherSimulator::new(sites, model)?.simulate(n_events, seed)
}

fn check_margins<T: Scalar>(events: &EventMatrix<T>, margins: &[FittedGev<T>]) -> Result<()> {
    if margins.len() != events.n_sites() {
        return Err(Error::Shape(format!(
            "{} margins for {} sites",
            margins.len(),
            events.n_sites()
        )));
    }
    Ok(())
}

/// Maps unit-Fréchet events to each site's GEV margin, with trended margins
/// evaluated at `prediction_year`.
pub fn to_native_scale<T: Scalar>(
    events: &EventMatrix<T>,
    margins: &[FittedGev<T>],
    prediction_year: Option<f64>,
) -> Result<EventMatrix<T>> {
    check_margins(events, margins)?;
    if events.scale() != EventScale::UnitFrechet {
        return Err(Error::Usage("events are already on the native scale".into()));
    }
    let params = margins
        .iter()
        .map(|m| m.params_at(prediction_year))
        .collect::<Result<Vec<_>>>()?;
    let k = events.n_sites();
    let values = events
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &u)| params[idx % k].from_unit_frechet(u))
        .collect::<Result<Vec<_>>>()?;
    let mut out = EventMatrix::new(values, events.labels().to_vec(), EventScale::Native)?;
    out.seed = events.seed();
    Ok(out)
}

/// Maps native observations to unit-Fréchet margins. `row_years` supplies the
/// year of each row when any margin is trended.
pub fn to_unit_frechet_scale<T: Scalar>(
    events: &EventMatrix<T>,
    margins: &[FittedGev<T>],
    row_years: Option<&[f64]>,
) -> Result<EventMatrix<T>> {
    check_margins(events, margins)?;
    if events.scale() != EventScale::Native {
        return Err(Error::Usage("events are already on the unit-Fréchet scale".into()));
    }
    if let Some(years) = row_years {
        if years.len() != events.n_events() {
            return Err(Error::Shape("one year per event row required".into()));
        }
    }
    let k = events.n_sites();
    let mut values = Vec::with_capacity(events.values().len());
    for (i, row) in events.rows().enumerate() {
        let year = row_years.map(|y| y[i]);
        for (j, &v) in row.iter().enumerate() {
            let p = margins[j].params_at(year)?;
            values.push(p.to_unit_frechet(v)?);
        }
        debug_assert_eq!(values.len(), (i + 1) * k);
    }
    let mut out = EventMatrix::new(values, events.labels().to_vec(), EventScale::UnitFrechet)?;
    out.seed = events.seed();
    Ok(out)
}
