use std::fmt::Write as _;
use std::path::Path;

use wxrisk::gev::{FittedGev, GevParams};
use wxrisk::rng::Stream;
use wxrisk::spatial::{simulate_schlather, to_native_scale, CorrelationFamily, CorrelationModel, SiteSet};

pub const STATIONS: [(&str, f64, f64); 4] = [("S1", 0.0, 0.0), ("S2", 1.0, 0.5), ("S3", 2.5, 1.0), ("S4", 0.5, 3.0)];

/// Daily summer records whose seasonal maxima follow a Schlather field.
pub fn write_fixture(dir: &Path, n_stations: usize) {
    let coords: Vec<[f64; 2]> = STATIONS[..n_stations].iter().map(|s| [s.1, s.2]).collect();
    let labels: Vec<String> = STATIONS[..n_stations].iter().map(|s| s.0.to_string()).collect();
    let sites = SiteSet::with_labels(coords, labels.clone()).unwrap();
    let model = CorrelationModel::new(CorrelationFamily::PoweredExponential, 2.0, 1.0).unwrap();
    let frechet = simulate_schlather(&sites, &model, 40, 5).unwrap();
    let g = GevParams::new(105.0, 2.0, -0.1).unwrap();
    let margins: Vec<_> = (0..n_stations).map(|_| FittedGev::from_params(g)).collect();
    let native = to_native_scale(&frechet, &margins, None).unwrap();
    let mut s = Stream::new(6);
    let mut csv = String::from("station,date,value\n");
    for (k, name) in labels.iter().enumerate() {
        for (row, year) in (1971..2011).enumerate() {
            let peak = native.get(row, k);
            let peak_day = (s.uniform_in(0.0, 92.0) as u32).min(91);
            let mut d = chrono::NaiveDate::from_ymd_opt(year, 6, 1).unwrap();
            for day in 0..92 {
                let v = if day == peak_day { peak } else { peak - 1.0 - s.uniform_in(0.0, 15.0) };
                writeln!(csv, "{name},{},{v:.3}", d.format("%Y-%m-%d")).unwrap();
                d = d.succ_opt().unwrap();
            }
        }
    }
    std::fs::write(dir.join("daily.csv"), csv).unwrap();
    let mut sites_csv = String::from("site,x,y\n");
    for st in &STATIONS[..n_stations] {
        writeln!(sites_csv, "{},{},{}", st.0, st.1, st.2).unwrap();
    }
    std::fs::write(dir.join("sites.csv"), sites_csv).unwrap();
}

