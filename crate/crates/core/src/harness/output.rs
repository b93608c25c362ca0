//! CSV rows and gnuplot-ready plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wishart::{Ensemble, WishartSpec};

use super::config::Scenario;
use super::run::PointResult;

pub const CSV_HEADER: &str = "scenario,n,p,rho,mode,recovery,r,s,k,c_half,sigma,delta_star,rate_emp,rate_se,rate_R,rate_Ra,rate_Reff,rate_Rd,recov_rate,bits_fed";

pub const WISHART_HEADER: &str =
    "scenario,s,r,rho,entry_variance,ensemble,beta,closed_form,asymptotic,mc_mean,mc_se,dedicated,trials";

/// One throughput sweep point. Columns that do not apply are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub mode: String,
    pub recovery: String,
    pub r: usize,
    pub s: usize,
    pub k: usize,
    pub c_half: f64,
    pub sigma: f64,
    pub delta_star: f64,
    pub rate_emp: f64,
    pub rate_se: f64,
    #[serde(rename = "rate_R")]
    pub rate_r: f64,
    #[serde(rename = "rate_Ra")]
    pub rate_ra: f64,
    #[serde(rename = "rate_Reff")]
    pub rate_reff: f64,
    #[serde(rename = "rate_Rd")]
    pub rate_rd: f64,
    pub recov_rate: f64,
    pub bits_fed: usize,
}

impl ResultRow {
    /// Bitwise equality, so NaN columns compare equal.
    pub fn bit_eq(&self, other: &ResultRow) -> bool {
        let floats = |r: &ResultRow| {
            [
                r.rho,
                r.c_half,
                r.sigma,
                r.delta_star,
                r.rate_emp,
                r.rate_se,
                r.rate_r,
                r.rate_ra,
                r.rate_reff,
                r.rate_rd,
                r.recov_rate,
            ]
            .map(f64::to_bits)
        };
        (
            &self.scenario,
            self.n,
            self.p,
            &self.mode,
            &self.recovery,
            self.r,
            self.s,
            self.k,
            self.bits_fed,
        ) == (
            &other.scenario,
            other.n,
            other.p,
            &other.mode,
            &other.recovery,
            other.r,
            other.s,
            other.k,
            other.bits_fed,
        ) && floats(self) == floats(other)
    }
}

/// One eigenvalue-scenario point. Inapplicable columns are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WishartRow {
    pub scenario: String,
    pub s: usize,
    pub r: usize,
    pub rho: f64,
    pub entry_variance: f64,
    pub ensemble: String,
    pub beta: f64,
    pub closed_form: f64,
    pub asymptotic: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub dedicated: f64,
    pub trials: usize,
}

impl WishartRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: Scenario,
        spec: &WishartSpec,
        beta: f64,
        closed_form: f64,
        asymptotic: f64,
        mc_mean: f64,
        mc_se: f64,
        dedicated: f64,
        trials: usize,
    ) -> Self {
        WishartRow {
            scenario: scenario.as_str().to_string(),
            s: spec.s,
            r: spec.r,
            rho: spec.rho_fb,
            entry_variance: spec.entry_variance,
            ensemble: match spec.ensemble {
                Ensemble::Real => "real",
                Ensemble::Complex => "complex",
            }
            .to_string(),
            beta,
            closed_form,
            asymptotic,
            mc_mean,
            mc_se,
            dedicated,
            trials,
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("refusing to write an empty result set"));
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes throughput rows. Floats use shortest round-trip formatting, so
/// [`parse_csv`] gives back identical bits.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

pub fn emit_wishart_csv(rows: &[WishartRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

/// CSV text of any row type, header included.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|source| Error::Csv {
            path: "<memory>".into(),
            source,
        })?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("CSV buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn parse_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err(path))
}

pub fn parse_wishart_csv(path: &Path) -> Result<Vec<WishartRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_err(path))
}

/// The sweep variable on the x axis of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    CHalf,
    Channels,
    Thresholds,
}

impl PlotAxis {
    /// The axis a throughput scenario is usually drawn against.
    pub fn for_results(results: &[PointResult]) -> PlotAxis {
        if results.iter().any(|p| p.budget_bits.is_some()) {
            PlotAxis::Thresholds
        } else {
            PlotAxis::CHalf
        }
    }

    fn name(&self) -> &'static str {
        match self {
            PlotAxis::CHalf => "c_half",
            PlotAxis::Channels => "r",
            PlotAxis::Thresholds => "k",
        }
    }
}

/// Writes one whitespace-separated block per curve, blocks separated by two
/// blank lines (gnuplot `index`). Each block opens with a `#` title line.
pub fn emit_plot_data(results: &[PointResult], axis: PlotAxis, path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::invalid("refusing to write an empty result set"));
    }
    let mut curves: BTreeMap<String, Vec<(f64, &ResultRow)>> = BTreeMap::new();
    for pr in results {
        let row = &pr.row;
        let (x, title) = match axis {
            PlotAxis::CHalf => (
                row.c_half,
                format!("{} s={} k={}", row.recovery, row.s, row.k),
            ),
            PlotAxis::Channels => (
                row.r as f64,
                format!("{} s={} k={}", row.recovery, row.s, row.k),
            ),
            PlotAxis::Thresholds => {
                let budget = pr
                    .budget_bits
                    .map_or_else(|| "none".to_string(), |b| b.to_string());
                (
                    row.k as f64,
                    format!("{} s={} budget={budget}", row.recovery, row.s),
                )
            }
        };
        curves.entry(title).or_default().push((x, row));
    }
    let mut text = String::new();
    for (i, (title, mut points)) in curves.into_iter().enumerate() {
        if i > 0 {
            text.push_str("\n\n");
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let _ = writeln!(text, "# {title}");
        let _ = writeln!(text, "# {} r rate_emp rate_se recov_rate", axis.name());
        for (x, row) in points {
            let _ = writeln!(
                text,
                "{x} {} {} {} {}",
                row.r, row.rate_emp, row.rate_se, row.recov_rate
            );
        }
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rate: f64) -> ResultRow {
        ResultRow {
            scenario: "fig2".into(),
            n: 100,
            p: 4,
            rho: 10.0,
            mode: "analog".into(),
            recovery: "maxcorr".into(),
            r: 11,
            s: 6,
            k: 1,
            c_half: 0.4,
            sigma: 0.1 + 0.2,
            delta_star: 1.0 / 3.0,
            rate_emp: rate,
            rate_se: 1e-300,
            rate_r: std::f64::consts::PI,
            rate_ra: f64::NAN,
            rate_reff: -0.0,
            rate_rd: f64::NAN,
            recov_rate: 0.95,
            bits_fed: 44,
        }
    }

    #[test]
    fn header_is_exact_and_rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows = vec![row(7.123456789012345), row(f64::MIN_POSITIVE)];
        emit_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let back = parse_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert!(a.bit_eq(b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.csv");
        assert!(emit_csv(&[], &path).is_err());
        assert!(!path.exists());
        assert!(emit_plot_data(&[], PlotAxis::CHalf, &path).is_err());
    }

    #[test]
    fn io_errors_carry_the_path() {
        let path = Path::new("/nonexistent-dir/x.csv");
        match emit_csv(&[row(1.0)], path) {
            Err(Error::Csv { path: p, .. }) | Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }
}
