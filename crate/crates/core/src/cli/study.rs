//! Simulation study of marginal-variance estimation.
//!
//! Each replicate places sites at random, simulates `Y` years of maxima
//! from a known Schlather process with latitude-dependent GEV margins, refits
//! margins and dependence, and estimates the marginal variance of a fourth
//! contract joining three others. Method 1 simulates from the fitted
//! max-stable model; Method 2 keeps only contract 4's own variance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cle::{fit_maxstable_with, MaxStableFitOptions};
use crate::error::{Error, Result};
use crate::gev::{fit_gev, FittedGev, GevParams, TrendSpec};
use crate::pricing::{marginal_variance, mc_moments, PayoffSpec};
use crate::rng::{child_seed_path, Stream};
use crate::spatial::{
    to_native_scale, to_unit_frechet_scale, CorrelationFamily, CorrelationModel, EventMatrix, SchlatherSimulator,
    SiteSet,
};

/// True dependence of one study arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub range: f64,
    #[serde(default = "one")]
    pub smooth: f64,
}

fn one() -> f64 {
    1.0
}

/// Study design. Defaults follow the published design except the replicate
/// and oracle counts, which are sized for a workstation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Side of the square region sites are drawn from.
    pub grid_extent: f64,
    pub n_sites: usize,
    pub n_derivative_sites: usize,
    pub family: CorrelationFamily,
    pub scenarios: Vec<Scenario>,
    pub years: Vec<usize>,
    pub replicates: usize,
    /// Draws used for Method 1 estimates.
    pub estimate_draws: usize,
    /// Draws under the true model for the reference marginal variance.
    pub oracle_draws: usize,
    /// Every contract pays this on a maximum at or above `strike`.
    pub alpha: f64,
    pub strike: f64,
    /// Site margins are `μ = mu_base + mu_slope·lat`,
    /// `σ = sigma_base + sigma_slope·lat`, with `lat` the second coordinate.
    pub mu_base: f64,
    pub mu_slope: f64,
    pub sigma_base: f64,
    pub sigma_slope: f64,
    pub xi: f64,
    /// Skip estimation and use the true parameters in Method 1.
    pub force_true_parameters: bool,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            grid_extent: 10.0,
            n_sites: 25,
            n_derivative_sites: 4,
            family: CorrelationFamily::WhittleMatern,
            scenarios: vec![
                Scenario { name: "short".into(), range: 0.5, smooth: 1.0 },
                Scenario { name: "medium".into(), range: 3.0, smooth: 1.0 },
                Scenario { name: "long".into(), range: 8.0, smooth: 1.0 },
            ],
            years: vec![50, 100, 250, 500],
            replicates: 20,
            estimate_draws: 100_000,
            oracle_draws: 100_000,
            alpha: 1.0,
            strike: 112.0,
            mu_base: 110.0,
            mu_slope: -0.5,
            sigma_base: 1.5,
            sigma_slope: 0.2,
            xi: -0.1,
            force_true_parameters: false,
            seed: 20_110_601,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.grid_extent > 0.0) {
            return bad(format!("grid_extent must be positive, got {}", self.grid_extent));
        }
        if self.n_derivative_sites < 2 || self.n_derivative_sites > self.n_sites {
            return bad(format!(
                "need 2 <= n_derivative_sites <= n_sites, got {} of {}",
                self.n_derivative_sites, self.n_sites
            ));
        }
        if self.scenarios.is_empty() || self.years.is_empty() {
            return bad("study needs at least one scenario and one year count".into());
        }
        for s in &self.scenarios {
            if !(s.range > 0.0) || !(s.smooth > 0.0) {
                return bad(format!("scenario {} needs positive range and smooth", s.name));
            }
            CorrelationModel::new(self.family, s.range, s.smooth).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.years.iter().any(|&y| y < 20) {
            return bad("each year count must be at least 20 for the GEV fits".into());
        }
        if self.estimate_draws < 2 || self.oracle_draws < 2 {
            return bad("draw counts must be at least 2".into());
        }
        if !(self.alpha >= 0.0) || !self.strike.is_finite() {
            return bad("contract needs alpha >= 0 and a finite strike".into());
        }
        Ok(())
    }

    fn margin(&self, lat: f64) -> Result<GevParams<f64>> {
        GevParams::new(
            self.mu_base + self.mu_slope * lat,
            self.sigma_base + self.sigma_slope * lat,
            self.xi,
        )
    }
}

/// Which estimator produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMethod {
    /// Fitted max-stable model, covariances included.
    Spatial,
    /// Contract 4's own variance only.
    Independent,
}

impl StudyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            StudyMethod::Spatial => "spatial",
            StudyMethod::Independent => "independent",
        }
    }
}

/// One replicate of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scenario: String,
    pub range: f64,
    pub years: usize,
    pub replicate: usize,
    pub method: StudyMethod,
    pub estimate: Option<f64>,
    pub truth: Option<f64>,
    /// `(estimate − truth) / truth`.
    pub pe: Option<f64>,
    pub error: Option<String>,
}

/// Aggregates for one scenario × year count × method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub scenario: String,
    pub range: f64,
    pub years: usize,
    pub method: StudyMethod,
    pub mape: Option<f64>,
    pub median_pe: Option<f64>,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub cells: Vec<StudyCell>,
}

pub fn mape(pe: &[f64]) -> Option<f64> {
    (!pe.is_empty()).then(|| pe.iter().map(|p| p.abs()).sum::<f64>() / pe.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

struct ReplicateOutcome {
    spatial: f64,
    independent: f64,
    truth: f64,
}

/// Marginal variance of the last contract and the variance of that
/// contract alone, both from the same draws.
fn mv_pair(events: &EventMatrix<f64>, specs: &[PayoffSpec<f64>]) -> Result<(f64, f64)> {
    let k = specs.len() - 1;
    let mv = marginal_variance(events, specs, k)?;
    let own = mc_moments(&events.column(k), &specs[k])?.variance();
    Ok((mv.difference, own))
}

fn run_replicate(cfg: &StudyConfig, scenario_idx: usize, years: usize, rep: usize) -> Result<ReplicateOutcome> {
    let seed = child_seed_path(cfg.seed, &[scenario_idx as u64, years as u64, rep as u64]);
    let sc = &cfg.scenarios[scenario_idx];
    let truth_model = CorrelationModel::new(cfg.family, sc.range, sc.smooth)?;

    let mut placement = Stream::child(seed, 0);
    let coords: Vec<[f64; 2]> = (0..cfg.n_sites)
        .map(|_| [placement.uniform_in(0.0, cfg.grid_extent), placement.uniform_in(0.0, cfg.grid_extent)])
        .collect();
    let sites = SiteSet::new(coords)?;
    let derivative: Vec<usize> = placement.permutation(cfg.n_sites)[..cfg.n_derivative_sites].to_vec();
    let true_margins: Vec<GevParams<f64>> = sites.coords.iter().map(|c| cfg.margin(c[1])).collect::<Result<_>>()?;
    let specs = vec![PayoffSpec::flat(cfg.alpha, cfg.strike)?; cfg.n_derivative_sites];
    let deriv_sites = sites.select(&derivative)?;
    let margins_of = |idx: &[usize], m: &[GevParams<f64>]| -> Vec<FittedGev<f64>> {
        idx.iter().map(|&i| FittedGev::from_params(m[i])).collect()
    };

    // Reference marginal variance under the true model.
    let oracle_events = SchlatherSimulator::new(&deriv_sites, &truth_model)?
        .simulate(cfg.oracle_draws, child_seed_path(seed, &[1]))?;
    let oracle_native = to_native_scale(&oracle_events, &margins_of(&derivative, &true_margins), None)?;
    let (truth, _) = mv_pair(&oracle_native, &specs)?;
    if !(truth > 0.0) {
        return Err(Error::Numerical(format!("true marginal variance is {truth}")));
    }

    let (fitted_model, fitted_margins) = if cfg.force_true_parameters {
        (truth_model, margins_of(&derivative, &true_margins))
    } else {
        let observed = SchlatherSimulator::new(&sites, &truth_model)?.simulate(years, child_seed_path(seed, &[2]))?;
        let observed = to_native_scale(&observed, &margins_of(&(0..cfg.n_sites).collect::<Vec<_>>(), &true_margins), None)?;
        let fits: Vec<FittedGev<f64>> = (0..cfg.n_sites)
            .map(|j| {
                let series: Vec<(i32, f64)> =
                    observed.column(j).into_iter().enumerate().map(|(i, m)| (i as i32, m)).collect();
                fit_gev(&series, TrendSpec::NONE)
            })
            .collect::<Result<_>>()?;
        let frechet = to_unit_frechet_scale(&observed, &fits, None)?;
        let fit = fit_maxstable_with(&frechet, &sites, cfg.family, &MaxStableFitOptions::default())?;
        let model = fit.model()?;
        let picked = derivative.iter().map(|&i| fits[i].clone()).collect();
        (model, picked)
    };

    let est_events = SchlatherSimulator::new(&deriv_sites, &fitted_model)?
        .simulate(cfg.estimate_draws, child_seed_path(seed, &[3]))?;
    let est_native = to_native_scale(&est_events, &fitted_margins, None)?;
    let (spatial, independent) = mv_pair(&est_native, &specs)?;
    Ok(ReplicateOutcome {
        spatial,
        independent,
        truth,
    })
}

/// Runs every scenario × year count × replicate. Failed replicates are kept
/// as rows with an error and left out of the aggregates.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResults> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for s in 0..cfg.scenarios.len() {
        for &y in &cfg.years {
            for r in 0..cfg.replicates {
                jobs.push((s, y, r));
            }
        }
    }
    let outcomes: Vec<Result<ReplicateOutcome>> =
        jobs.par_iter().map(|&(s, y, r)| run_replicate(cfg, s, y, r)).collect();

    let mut rows = Vec::with_capacity(jobs.len() * 2);
    for (&(s, y, r), outcome) in jobs.iter().zip(outcomes) {
        let sc = &cfg.scenarios[s];
        let row = |method, estimate: Option<f64>, truth: Option<f64>, error: Option<String>| StudyRow {
            scenario: sc.name.clone(),
            range: sc.range,
            years: y,
            replicate: r,
            method,
            estimate,
            truth,
            pe: estimate.zip(truth).map(|(e, t)| (e - t) / t),
            error,
        };
        match outcome {
            Ok(o) => {
                rows.push(row(StudyMethod::Spatial, Some(o.spatial), Some(o.truth), None));
                rows.push(row(StudyMethod::Independent, Some(o.independent), Some(o.truth), None));
            }
            Err(e) => {
                log::warn!("study replicate {}/{y}/{r} failed: {e}", sc.name);
                for m in [StudyMethod::Spatial, StudyMethod::Independent] {
                    rows.push(row(m, None, None, Some(e.to_string())));
                }
            }
        }
    }

    let mut grouped: BTreeMap<(usize, usize, StudyMethod), (Vec<f64>, usize)> = BTreeMap::new();
    for (row, &(s, y, _)) in rows.iter().zip(jobs.iter().flat_map(|j| [j, j])) {
        let entry = grouped.entry((s, y, row.method)).or_default();
        match row.pe {
            Some(pe) => entry.0.push(pe),
            None => entry.1 += 1,
        }
    }
    let cells = grouped
        .into_iter()
        .map(|((s, y, method), (pes, failed))| StudyCell {
            scenario: cfg.scenarios[s].name.clone(),
            range: cfg.scenarios[s].range,
            years: y,
            method,
            mape: mape(&pes),
            median_pe: median(&pes),
            succeeded: pes.len(),
            failed,
        })
        .collect();
    Ok(StudyResults {
        config: cfg.clone(),
        rows,
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StudyResults {
    pub fn cell(&self, scenario: &str, years: usize, method: StudyMethod) -> Option<&StudyCell> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.years == years && c.method == method)
    }

    /// Long format: one line per replicate and method.
    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(["scenario", "range", "years", "replicate", "method", "estimate", "truth", "pe", "error"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.range.to_string(),
                r.years.to_string(),
                r.replicate.to_string(),
                r.method.name().to_string(),
                opt(r.estimate),
                opt(r.truth),
                opt(r.pe),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }

    /// Method 1 MAPE with one row per scenario and one column per year count.
    pub fn write_mape_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Data(e.to_string());
        let mut header = vec!["scenario".to_string(), "range".to_string()];
        header.extend(self.config.years.iter().map(|y| format!("Y={y}")));
        w.write_record(&header).map_err(err)?;
        for s in &self.config.scenarios {
            let mut rec = vec![s.name.clone(), s.range.to_string()];
            for &y in &self.config.years {
                rec.push(opt(self.cell(&s.name, y, StudyMethod::Spatial).and_then(|c| c.mape)));
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(&p, e))
        };
        self.write_rows_csv(create("study_results.csv")?)?;
        self.write_mape_csv(create("study_mape.csv")?)?;
        let summary = serde_json::json!({
            "config": self.config,
            "cells": self.cells,
        });
        let p = dir.join("study_summary.json");
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StudyConfig {
        StudyConfig {
            n_sites: 8,
            scenarios: vec![Scenario { name: "medium".into(), range: 3.0, smooth: 1.0 }],
            years: vec![40],
            replicates: 2,
            estimate_draws: 20_000,
            oracle_draws: 20_000,
            ..Default::default()
        }
    }

    #[test]
    fn mape_of_exact_estimator_is_zero() {
        assert_eq!(mape(&[0.0, 0.0, 0.0]), Some(0.0));
        assert_eq!(mape(&[]), None);
        assert_eq!(median(&[3.0, -1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn true_parameter_probe_has_small_error() {
        let cfg = StudyConfig {
            force_true_parameters: true,
            ..small()
        };
        let res = run_study(&cfg).unwrap();
        for r in res.rows.iter().filter(|r| r.method == StudyMethod::Spatial) {
            assert!(r.pe.unwrap().abs() < 0.08, "{r:?}");
        }
    }

    #[test]
    fn independent_method_is_own_variance() {
        let res = run_study(&small()).unwrap();
        assert_eq!(res.rows.len(), 4);
        let cell = res.cell("medium", 40, StudyMethod::Spatial).unwrap();
        assert_eq!(cell.succeeded + cell.failed, 2);
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.replicates = 0;
        assert!(matches!(run_study(&c), Err(Error::Config(_))));
        let mut c = small();
        c.n_derivative_sites = 9;
        assert!(c.validate().is_err());
    }
}
