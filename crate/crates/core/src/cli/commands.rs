//! Subcommand bodies. Each returns the files it wrote.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DependenceConfig, RunConfig};
use super::study::run_study;
use crate::cle::{model_select, ClicRow, CompositeFit, MaxStableFitOptions};
use crate::data::{
    acf, block_maxima, gof_tables, parse_maxima_csv, parse_sites_csv, parse_station_csv, trend_test, write_maxima_csv,
    Autocorrelation, BlockMaxima, DroppedYear, TrendTest,
};
use crate::error::{Error, Result};
use crate::gev::{fit_gev, FittedGev, TrendSpec};
use crate::pricing::{price_portfolio, PayoffSpec};
use crate::spatial::{
    simulate_schlather, to_native_scale, to_unit_frechet_scale, CorrelationModel, EventMatrix, EventScale, SiteSet,
};

/// `margins.json`: one GEV fit per station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsFile {
    pub fits: BTreeMap<String, FittedGev<f64>>,
}

/// Per-station `gev_<station>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationReport {
    pub station: String,
    pub fit: FittedGev<f64>,
    pub trend_test: Option<TrendTest<f64>>,
    pub acf: Option<Autocorrelation<f64>>,
    pub dropped_years: Vec<DroppedYear>,
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn file_stem(station: &str) -> String {
    station
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn load_maxima(cfg: &RunConfig) -> Result<Vec<BlockMaxima>> {
    if let Some(p) = &cfg.daily {
        let records = parse_station_csv(&cfg.input(p)?)?;
        block_maxima(&records, cfg.window, cfg.completeness)
    } else if let Some(p) = &cfg.maxima {
        parse_maxima_csv(&cfg.input(p)?)
    } else {
        Err(Error::Config("config needs `daily` or `maxima` input".into()))
    }
}

fn load_margins(cfg: &RunConfig) -> Result<MarginsFile> {
    read_json(&cfg.require(&cfg.margins, "margins")?)
}

fn load_sites(cfg: &RunConfig) -> Result<SiteSet<f64>> {
    parse_sites_csv(&cfg.require(&cfg.sites, "sites")?)
}

fn load_dependence(cfg: &RunConfig) -> Result<CorrelationModel<f64>> {
    match &cfg.dependence {
        Some(DependenceConfig::Inline(m)) => Ok(*m),
        Some(DependenceConfig::File(p)) => {
            let fit: CompositeFit<f64> = read_json(&cfg.input(p)?)?;
            fit.model()
        }
        None => Err(Error::Config("config field `dependence` is required for this command".into())),
    }
}

fn margins_for(margins: &MarginsFile, labels: &[String]) -> Result<Vec<FittedGev<f64>>> {
    labels
        .iter()
        .map(|l| {
            margins
                .fits
                .get(l)
                .cloned()
                .ok_or_else(|| Error::Data(format!("no GEV fit for site {l}")))
        })
        .collect()
}

fn site_indices(sites: &SiteSet<f64>, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            sites
                .labels
                .iter()
                .position(|l| l == n)
                .ok_or_else(|| Error::Data(format!("site {n} is not in the sites table")))
        })
        .collect()
}

pub fn fit_gev_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let maxima = load_maxima(cfg)?;
    let trend = if cfg.trend { TrendSpec::LINEAR } else { TrendSpec::NONE };
    let mut written = Vec::new();
    let mut fits = BTreeMap::new();
    let mut failures = Vec::new();
    for bm in &maxima {
        let series = bm.series::<f64>();
        let fit = match fit_gev(&series, trend) {
            Ok(f) => f,
            Err(e) => {
                log::error!("station {}: {e}", bm.station);
                failures.push(format!("{}: {e}", bm.station));
                continue;
            }
        };
        let values: Vec<f64> = series.iter().map(|p| p.1).collect();
        let report = StationReport {
            station: bm.station.clone(),
            fit: fit.clone(),
            trend_test: trend_test(&series).ok(),
            acf: acf(&values, cfg.max_lag.min(values.len().saturating_sub(1))).ok(),
            dropped_years: bm.dropped.clone(),
        };
        let stem = file_stem(&bm.station);
        let p = out.join(format!("gev_{stem}.json"));
        write_json(&p, &report)?;
        written.push(p);
        let gof = gof_tables(&fit, &series, cfg.prediction_year)?;
        gof.save_csv(out, &format!("gof_{stem}_"))?;
        for name in ["pp", "qq", "return_levels"] {
            written.push(out.join(format!("gof_{stem}_{name}.csv")));
        }
        if let Some(a) = &report.acf {
            let p = out.join(format!("acf_{stem}.csv"));
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            a.write_csv(std::io::BufWriter::new(f))?;
            written.push(p);
        }
        fits.insert(bm.station.clone(), fit);
    }
    let p = out.join("margins.json");
    write_json(&p, &MarginsFile { fits })?;
    written.push(p);
    let p = out.join("maxima.csv");
    let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
    write_maxima_csv(std::io::BufWriter::new(f), &maxima)?;
    written.push(p);
    if !failures.is_empty() {
        return Err(Error::Fit(format!("{} station fit(s) failed: {}", failures.len(), failures.join("; "))));
    }
    Ok(written)
}

/// Years observed at every site, with the native maxima matrix.
fn common_years(maxima: &[BlockMaxima], labels: &[String]) -> Result<(Vec<i32>, EventMatrix<f64>)> {
    let by_station: BTreeMap<&str, BTreeMap<i32, f64>> = maxima
        .iter()
        .map(|bm| (bm.station.as_str(), bm.years.iter().map(|y| (y.year, y.maximum)).collect()))
        .collect();
    let series: Vec<&BTreeMap<i32, f64>> = labels
        .iter()
        .map(|l| {
            by_station
                .get(l.as_str())
                .ok_or_else(|| Error::Data(format!("no maxima for site {l}")))
        })
        .collect::<Result<_>>()?;
    let mut years: BTreeSet<i32> = series[0].keys().copied().collect();
    for s in &series[1..] {
        years.retain(|y| s.contains_key(y));
    }
    if years.is_empty() {
        return Err(Error::Data("sites share no common years".into()));
    }
    let years: Vec<i32> = years.into_iter().collect();
    let mut values = Vec::with_capacity(years.len() * labels.len());
    for y in &years {
        for s in &series {
            values.push(s[y]);
        }
    }
    Ok((years.clone(), EventMatrix::new(values, labels.to_vec(), EventScale::Native)?))
}

pub fn fit_spatial_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sites = load_sites(cfg)?;
    let margins = load_margins(cfg)?;
    let maxima = load_maxima(cfg)?;
    let (years, native) = common_years(&maxima, &sites.labels)?;
    log::info!("fitting dependence on {} common years at {} sites", years.len(), sites.len());
    let fits = margins_for(&margins, &sites.labels)?;
    let row_years: Vec<f64> = years.iter().map(|&y| y as f64).collect();
    let frechet = to_unit_frechet_scale(&native, &fits, Some(&row_years))?;
    let selection = model_select(&frechet, &sites, &cfg.families, &MaxStableFitOptions::default())?;

    let mut written = Vec::new();
    let p = out.join("spatial_fit.json");
    write_json(&p, &selection.best)?;
    written.push(p);
    let p = out.join("model_selection.json");
    write_json(&p, &selection)?;
    written.push(p);
    let p = out.join("clic_table.csv");
    write_clic_table(&p, &selection.table)?;
    written.push(p);
    Ok(written)
}

fn write_clic_table(path: &Path, table: &[ClicRow<f64>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    let err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record([
        "family", "clic", "penalty", "log_likelihood", "range", "smooth", "se_range", "se_smooth", "error",
    ])
    .map_err(err)?;
    for row in table {
        let mut rec = vec![row.family.name().to_string()];
        match (&row.score, &row.fit) {
            (Some(s), Some(f)) => rec.extend(
                [s.value, s.penalty, s.log_likelihood, f.range, f.smooth, f.std_errors[0], f.std_errors[1]]
                    .iter()
                    .map(|v| v.to_string()),
            ),
            _ => rec.extend(std::iter::repeat_n(String::new(), 7)),
        }
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let all = load_sites(cfg)?;
    let sites = if cfg.simulate_sites.is_empty() {
        all
    } else {
        all.select(&site_indices(&all, &cfg.simulate_sites)?)?
    };
    let model = load_dependence(cfg)?;
    let mut events = simulate_schlather(&sites, &model, cfg.events, cfg.master_seed())?;
    if cfg.margins.is_some() {
        let margins = load_margins(cfg)?;
        events = to_native_scale(&events, &margins_for(&margins, &sites.labels)?, cfg.prediction_year)?;
    }
    let p = out.join("events.csv");
    events.save_csv(&p)?;
    Ok(vec![p])
}

pub fn price_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    if cfg.contracts.is_empty() {
        return Err(Error::Config("config lists no contracts".into()));
    }
    let all = load_sites(cfg)?;
    let names: Vec<String> = cfg.contracts.iter().map(|c| c.site.clone()).collect();
    let sites = all.select(&site_indices(&all, &names)?)?;
    let model = load_dependence(cfg)?;
    let margins = margins_for(&load_margins(cfg)?, &names)?;
    let frechet = simulate_schlather(&sites, &model, cfg.events, cfg.master_seed())?;
    let native = to_native_scale(&frechet, &margins, cfg.prediction_year)?;
    let specs: Vec<PayoffSpec<f64>> = cfg.contracts.iter().map(|c| c.payoff).collect();
    let report = price_portfolio(&native, &specs, cfg.lambda, cfg.method)?;
    let mut written = Vec::new();
    let p = out.join("portfolio.json");
    report.save_json(&p)?;
    written.push(p);
    let p = out.join("portfolio.csv");
    report.save_csv(&p)?;
    written.push(p);
    Ok(written)
}

pub fn study_cmd(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut study = cfg
        .study
        .clone()
        .ok_or_else(|| Error::Config("config field `study` is required for this command".into()))?;
    if let Some(seed) = cfg.seed {
        study.seed = seed;
    }
    let results = run_study(&study)?;
    results.save(out)?;
    Ok(["study_results.csv", "study_mape.csv", "study_summary.json"]
        .iter()
        .map(|n| out.join(n))
        .collect())
}
