//! Station records, summer block maxima and pre-fit diagnostics.
//!
//! Input files are CSV with the header `station,date,value`, ISO dates and
//! `-9999` for missing values:
//!
//! ```text
//! station,date,value
//! PHX,1990-06-26,122
//! PHX,1990-06-27,-9999
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::gev::{FittedGev, GevParams};
use crate::scalar::Scalar;

/// Value marking a missing observation.
pub const MISSING_SENTINEL: f64 = -9999.0;

/// Fraction of window days a year needs to be kept.
pub const DEFAULT_COMPLETENESS: f64 = 0.9;

/// One daily observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub station: String,
    pub date: NaiveDate,
    /// `NaN` when missing.
    pub value: f64,
    pub missing: bool,
}

/// Parses station CSV text. Line numbers in errors count the header as 1.
pub fn parse_station_csv_reader<R: Read>(reader: R) -> Result<Vec<DailyRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    check_header(&headers, &["station", "date", "value"])?;
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if row.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", row.len()),
            });
        }
        let station = row[0].to_string();
        if station.is_empty() {
            return Err(Error::Parse { line, message: "empty station id".into() });
        }
        let date = NaiveDate::parse_from_str(&row[1], "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{}`: {e}", &row[1]),
        })?;
        let text = row[2].trim();
        let raw: f64 = if text.is_empty() {
            MISSING_SENTINEL
        } else {
            text.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value `{}`", &row[2]),
            })?
        };
        let missing = raw == MISSING_SENTINEL;
        if !missing && !raw.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite value `{}`", &row[2]) });
        }
        out.push(DailyRecord {
            station,
            date,
            value: if missing { f64::NAN } else { raw },
            missing,
        });
    }
    Ok(out)
}

pub fn parse_station_csv(path: &Path) -> Result<Vec<DailyRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_station_csv_reader(std::io::BufReader::new(f))
}

/// Inclusive month-day range inside one calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub start: (u32, u32),
    pub end: (u32, u32),
}

impl Default for SeasonWindow {
    /// June 1 to August 31.
    fn default() -> Self {
        SeasonWindow {
            start: (6, 1),
            end: (8, 31),
        }
    }
}

impl SeasonWindow {
    pub fn new(start: (u32, u32), end: (u32, u32)) -> Result<Self> {
        let w = SeasonWindow { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        // A leap year admits every valid month-day.
        let s = NaiveDate::from_ymd_opt(2000, self.start.0, self.start.1);
        let e = NaiveDate::from_ymd_opt(2000, self.end.0, self.end.1);
        match (s, e) {
            (Some(s), Some(e)) if s <= e => Ok(()),
            (Some(_), Some(_)) => Err(Error::domain("season window must not wrap the year end")),
            _ => Err(Error::domain(format!("invalid season window {:?}..{:?}", self.start, self.end))),
        }
    }

    fn bounds(&self, year: i32) -> (NaiveDate, NaiveDate) {
        let start = NaiveDate::from_ymd_opt(year, self.start.0, self.start.1)
            .or_else(|| NaiveDate::from_ymd_opt(year, self.start.0, self.start.1 - 1).and_then(|d| d.succ_opt()))
            .expect("validated window");
        let end = NaiveDate::from_ymd_opt(year, self.end.0, self.end.1)
            .or_else(|| NaiveDate::from_ymd_opt(year, self.end.0, self.end.1 - 1))
            .expect("validated window");
        (start, end)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        let (s, e) = self.bounds(date.year());
        date >= s && date <= e
    }

    pub fn days_in(&self, year: i32) -> u32 {
        let (s, e) = self.bounds(year);
        ((e - s).num_days() + 1) as u32
    }
}

/// Maximum of one season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnualMaximum {
    pub year: i32,
    pub maximum: f64,
    pub days_present: u32,
}

/// A season left out for too few observed days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedYear {
    pub year: i32,
    pub days_present: u32,
    pub days_expected: u32,
}

/// Seasonal maxima of one station, in increasing year order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMaxima {
    pub station: String,
    pub window: SeasonWindow,
    pub years: Vec<AnnualMaximum>,
    pub dropped: Vec<DroppedYear>,
}

impl BlockMaxima {
    /// `(year, maximum)` pairs for fitting.
    pub fn series<T: Scalar>(&self) -> Vec<(i32, T)> {
        self.years.iter().map(|y| (y.year, T::lit(y.maximum))).collect()
    }
}

/// Seasonal maxima for every station, ordered by station id.
pub fn block_maxima(records: &[DailyRecord], window: SeasonWindow, completeness: f64) -> Result<Vec<BlockMaxima>> {
    window.validate()?;
    if !(0.0..=1.0).contains(&completeness) {
        return Err(Error::domain(format!("completeness must lie in [0, 1], got {completeness}")));
    }
    // station -> year -> date -> value (None when missing)
    let mut grouped: BTreeMap<&str, BTreeMap<i32, BTreeMap<NaiveDate, Option<f64>>>> = BTreeMap::new();
    for r in records.iter().filter(|r| window.contains(r.date)) {
        let days = grouped
            .entry(r.station.as_str())
            .or_default()
            .entry(r.date.year())
            .or_default();
        let v = if r.missing { None } else { Some(r.value) };
        match days.get(&r.date) {
            Some(prev) if *prev != v && prev.is_some() && v.is_some() => {
                return Err(Error::Data(format!(
                    "station {} has conflicting values on {}",
                    r.station, r.date
                )));
            }
            Some(Some(_)) => {}
            _ => {
                days.insert(r.date, v);
            }
        }
    }
    let mut out = Vec::new();
    for (station, years) in grouped {
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (year, days) in years {
            let present: Vec<f64> = days.values().filter_map(|v| *v).collect();
            let expected = window.days_in(year);
            let count = present.len() as u32;
            if present.is_empty() || (count as f64) < completeness * expected as f64 {
                log::info!("station {station}: dropping {year} ({count} of {expected} days present)");
                dropped.push(DroppedYear {
                    year,
                    days_present: count,
                    days_expected: expected,
                });
                continue;
            }
            let maximum = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            kept.push(AnnualMaximum {
                year,
                maximum,
                days_present: count,
            });
        }
        if kept.is_empty() {
            return Err(Error::Data(format!("station {station} has no usable seasons")));
        }
        out.push(BlockMaxima {
            station: station.to_string(),
            window,
            years: kept,
            dropped,
        });
    }
    if out.is_empty() {
        return Err(Error::Data("no records fall inside the season window".into()));
    }
    Ok(out)
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != *e) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

fn data_rows<R: Read>(reader: R, expected: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    check_header(&headers, expected)?;
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 2;
            let r = r.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if r.len() != expected.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", expected.len(), r.len()),
                });
            }
            Ok((line, r))
        })
        .collect()
}

fn number<F: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<F> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric {what} `{field}`"),
    })
}

/// Reads precomputed maxima, `station,year,maximum`, grouped by station.
pub fn parse_maxima_csv_reader<R: Read>(reader: R) -> Result<Vec<BlockMaxima>> {
    let mut grouped: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
    for (line, r) in data_rows(reader, &["station", "year", "maximum"])? {
        let year: i32 = number(&r[1], line, "year")?;
        let maximum: f64 = number(&r[2], line, "maximum")?;
        if !maximum.is_finite() || maximum == MISSING_SENTINEL {
            continue;
        }
        if grouped.entry(r[0].to_string()).or_default().insert(year, maximum).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate year {year} for station {}", &r[0]),
            });
        }
    }
    if grouped.is_empty() {
        return Err(Error::Data("maxima file holds no values".into()));
    }
    Ok(grouped
        .into_iter()
        .map(|(station, years)| BlockMaxima {
            station,
            window: SeasonWindow::default(),
            years: years
                .into_iter()
                .map(|(year, maximum)| AnnualMaximum {
                    year,
                    maximum,
                    days_present: 0,
                })
                .collect(),
            dropped: Vec::new(),
        })
        .collect())
}

pub fn parse_maxima_csv(path: &Path) -> Result<Vec<BlockMaxima>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_maxima_csv_reader(std::io::BufReader::new(f))
}

pub fn write_maxima_csv<W: Write>(writer: W, maxima: &[BlockMaxima]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["station", "year", "maximum"]).map_err(err)?;
    for bm in maxima {
        for y in &bm.years {
            w.write_record([bm.station.clone(), y.year.to_string(), y.maximum.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

/// Reads site coordinates, `site,x,y`.
pub fn parse_sites_csv_reader<R: Read>(reader: R) -> Result<crate::spatial::SiteSet<f64>> {
    let mut labels = Vec::new();
    let mut coords = Vec::new();
    for (line, r) in data_rows(reader, &["site", "x", "y"])? {
        let x: f64 = number(&r[1], line, "x")?;
        let y: f64 = number(&r[2], line, "y")?;
        if labels.iter().any(|l: &String| l == &r[0]) {
            return Err(Error::Parse { line, message: format!("duplicate site {}", &r[0]) });
        }
        labels.push(r[0].to_string());
        coords.push([x, y]);
    }
    crate::spatial::SiteSet::with_labels(coords, labels)
}

pub fn parse_sites_csv(path: &Path) -> Result<crate::spatial::SiteSet<f64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_sites_csv_reader(std::io::BufReader::new(f))
}

/// Least-squares trend of maxima on year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrendTest<T: Scalar> {
    /// Change per year.
    pub slope: T,
    pub intercept: T,
    pub std_error: T,
    pub t_statistic: T,
    /// Two-sided.
    pub p_value: T,
    pub n: usize,
}

pub fn trend_test<T: Scalar>(maxima: &[(i32, T)]) -> Result<TrendTest<T>> {
    let n = maxima.len();
    if n < 3 {
        return Err(Error::domain(format!("trend test needs at least 3 years, got {n}")));
    }
    let nf = T::from_usize_lossy(n);
    let xbar = maxima.iter().map(|&(y, _)| T::lit(y as f64)).sum::<T>() / nf;
    let ybar = maxima.iter().map(|&(_, m)| m).sum::<T>() / nf;
    let sxx: T = maxima.iter().map(|&(y, _)| (T::lit(y as f64) - xbar).powi(2)).sum();
    if !(sxx > T::zero()) {
        return Err(Error::domain("trend test needs at least two distinct years"));
    }
    let sxy: T = maxima
        .iter()
        .map(|&(y, m)| (T::lit(y as f64) - xbar) * (m - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: T = maxima
        .iter()
        .map(|&(y, m)| (m - ybar - slope * (T::lit(y as f64) - xbar)).powi(2))
        .sum();
    let df = n - 2;
    let std_error = (rss / T::from_usize_lossy(df) / sxx).sqrt();
    let (t_statistic, p_value) = if std_error > T::zero() {
        let t = slope / std_error;
        let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        let p = 2.0 * dist.sf(t.to_f64_lossy().abs());
        (t, T::lit(p.clamp(0.0, 1.0)))
    } else if slope == T::zero() {
        (T::zero(), T::one())
    } else {
        (T::infinity() * slope.signum(), T::zero())
    };
    Ok(TrendTest {
        slope,
        intercept,
        std_error,
        t_statistic,
        p_value,
        n,
    })
}

/// Sample autocorrelations with a white-noise band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Autocorrelation<T: Scalar> {
    /// Lags `0..=max_lag`.
    pub values: Vec<T>,
    /// Half-width `1.96/sqrt(n)`.
    pub band: T,
}

impl<T: Scalar> Autocorrelation<T> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let points: Vec<(T, T, T)> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &r)| (T::from_usize_lossy(k), r, self.band))
            .collect();
        write_rows(writer, &["lag", "acf", "band"], points.iter().map(|p| vec![p.0, p.1, p.2]))
    }
}

pub fn acf<T: Scalar>(series: &[T], max_lag: usize) -> Result<Autocorrelation<T>> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::domain(format!("max lag {max_lag} needs more than {n} observations")));
    }
    let nf = T::from_usize_lossy(n);
    let mean = series.iter().copied().sum::<T>() / nf;
    let dev: Vec<T> = series.iter().map(|&x| x - mean).collect();
    let c0: T = dev.iter().map(|&d| d * d).sum();
    if !(c0 > T::zero()) {
        return Err(Error::domain("autocorrelation of a constant series is undefined"));
    }
    let values = (0..=max_lag)
        .map(|k| dev[..n - k].iter().zip(&dev[k..]).map(|(&a, &b)| a * b).sum::<T>() / c0)
        .collect();
    Ok(Autocorrelation {
        values,
        band: T::lit(1.96) / nf.sqrt(),
    })
}

/// Plot data for probability, quantile and return-level diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GofTables<T: Scalar> {
    /// `(i/(n+1), model probability)`, sorted.
    pub pp: Vec<(T, T)>,
    /// `(model quantile, empirical quantile)`. Trended fits are compared on
    /// the standard Gumbel scale.
    pub qq: Vec<(T, T)>,
    /// `(period, return level)`.
    pub return_levels: Vec<(T, T)>,
    /// Year used for the return-level curve of a trended fit.
    pub prediction_year: Option<f64>,
}

/// Points on the return-level grid.
pub const RETURN_LEVEL_POINTS: usize = 60;

/// Diagnostics of `fit` against the maxima it came from. A trended fit
/// draws its return-level curve at `prediction_year`, defaulting to the
/// last observed year.
pub fn gof_tables<T: Scalar>(
    fit: &FittedGev<T>,
    maxima: &[(i32, T)],
    prediction_year: Option<f64>,
) -> Result<GofTables<T>> {
    if maxima.is_empty() {
        return Err(Error::domain("no maxima for diagnostics"));
    }
    let n = maxima.len();
    let plot_pos: Vec<T> = (1..=n)
        .map(|i| T::from_usize_lossy(i) / T::from_usize_lossy(n + 1))
        .collect();
    let trended = fit.trend.enabled;
    let mut probs = Vec::with_capacity(n);
    let mut gumbel = Vec::with_capacity(n);
    for &(year, m) in maxima {
        let g = fit.params_at(Some(year as f64))?;
        let p = g.cdf(m)?;
        probs.push(p);
        if trended {
            gumbel.push(-(-p.ln()).ln());
        }
    }
    sort(&mut probs);
    let pp = plot_pos.iter().copied().zip(probs).collect();

    let qq = if trended {
        sort(&mut gumbel);
        plot_pos.iter().map(|&p| -(-p.ln()).ln()).zip(gumbel).collect()
    } else {
        let g = fit.params()?;
        let mut sorted: Vec<T> = maxima.iter().map(|&(_, m)| m).collect();
        sort(&mut sorted);
        plot_pos
            .iter()
            .map(|&p| g.quantile(p))
            .collect::<Result<Vec<T>>>()?
            .into_iter()
            .zip(sorted)
            .collect()
    };

    let year = if trended {
        Some(prediction_year.unwrap_or_else(|| maxima.iter().map(|&(y, _)| y).max().unwrap_or(0) as f64))
    } else {
        None
    };
    let g: GevParams<T> = fit.params_at(year)?;
    let (lo, hi) = (1.1f64.ln(), 1000f64.ln());
    let return_levels = (0..RETURN_LEVEL_POINTS)
        .map(|i| {
            let t = (lo + (hi - lo) * i as f64 / (RETURN_LEVEL_POINTS - 1) as f64).exp();
            let t = T::lit(t);
            g.return_level(t).map(|r| (t, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GofTables {
        pp,
        qq,
        return_levels,
        prediction_year: year,
    })
}

fn sort<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
}

fn write_rows<T: Scalar, W: Write>(writer: W, header: &[&str], rows: impl Iterator<Item = Vec<T>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}

impl<T: Scalar> GofTables<T> {
    /// Writes `pp.csv`, `qq.csv` and `return_levels.csv` into `dir` with
    /// the given file-name prefix.
    pub fn save_csv(&self, dir: &Path, prefix: &str) -> Result<()> {
        let tables: [(&str, [&str; 2], &Vec<(T, T)>); 3] = [
            ("pp", ["empirical", "model"], &self.pp),
            ("qq", ["model", "empirical"], &self.qq),
            ("return_levels", ["period", "level"], &self.return_levels),
        ];
        for (name, header, points) in tables {
            let path = dir.join(format!("{prefix}{name}.csv"));
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_rows(std::io::BufWriter::new(f), &header, points.iter().map(|p| vec![p.0, p.1]))?;
        }
        Ok(())
    }
}
