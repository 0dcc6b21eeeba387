//! Price ingestion, daily log-returns, descriptive statistics and density
//! curves for plotting.

use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mixture::MixtureModel;

/// Percentage log-returns `100 * ln(P_t / P_{t-1})`.
pub fn compute_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::Input("need at least two prices".into()));
    }
    if let Some(i) = prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Input(format!("price at index {i} is not positive: {}", prices[i])));
    }
    Ok(prices.windows(2).map(|w| 100.0 * (w[1] / w[0]).ln()).collect())
}

/// A labelled return series; `dates[i]` is the date of `returns[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    pub ticker: String,
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    /// Builds the series from price rows. Each return takes the date of the
    /// later price.
    pub fn from_prices(ticker: impl Into<String>, dates: &[String], prices: &[f64]) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::Input(format!("{} dates for {} prices", dates.len(), prices.len())));
        }
        let returns = compute_returns(prices)?;
        Ok(Self { ticker: ticker.into(), dates: dates[1..].to_vec(), returns })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["date", &self.ticker])?;
        for (d, r) in self.dates.iter().zip(&self.returns) {
            w.write_record([d.as_str(), &r.to_string()])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
}

/// One numeric column read from a CSV with a header row. The first column is
/// kept as the row label.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvColumn {
    pub name: String,
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

/// Reads column `col` (by header name or zero-based index; default last).
/// A single-column file is read as values with row numbers as labels.
pub fn read_csv_column<R: Read>(reader: R, col: Option<&str>) -> Result<CsvColumn> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Input("CSV has no columns".into()));
    }
    let idx = match col {
        None => headers.len() - 1,
        Some(c) => match headers.iter().position(|h| h == c) {
            Some(i) => i,
            None => c
                .parse::<usize>()
                .ok()
                .filter(|&i| i < headers.len())
                .ok_or_else(|| Error::Input(format!("no column {c:?} in CSV header")))?,
        },
    };
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).ok_or_else(|| Error::Input(format!("row {} has no column {idx}", row + 1)))?;
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Input(format!("row {}: {field:?} is not a number", row + 1)))?;
        if !v.is_finite() {
            return Err(Error::Input(format!("row {}: non-finite value", row + 1)));
        }
        values.push(v);
        labels.push(if headers.len() > 1 { rec.get(0).unwrap_or_default().to_string() } else { (row + 1).to_string() });
    }
    if values.is_empty() {
        return Err(Error::Input("CSV has no data rows".into()));
    }
    Ok(CsvColumn { name: headers[idx].to_string(), labels, values })
}

/// Sample summary in the layout of a descriptive-statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Uses the n - 1 denominator.
    pub std: f64,
    pub skewness: f64,
    /// Non-excess.
    pub kurtosis: f64,
    pub min: f64,
    pub max: f64,
    /// Jarque-Bera statistic.
    pub jb: f64,
}

/// `n/6 * (S^2 + (K - 3)^2 / 4)`.
pub fn jarque_bera(n: usize, skewness: f64, kurtosis: f64) -> f64 {
    n as f64 / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0)
}

pub fn describe(returns: &[f64]) -> Result<DescriptiveStats> {
    let n = returns.len();
    if n < 4 {
        return Err(Error::Stats(format!("need at least 4 observations, got {n}")));
    }
    if returns.iter().any(|x| !x.is_finite()) {
        return Err(Error::Stats("non-finite observation".into()));
    }
    let nf = n as f64;
    let mean = returns.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in returns {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 {
        return Err(Error::Stats("zero variance".into()));
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);

    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };

    Ok(DescriptiveStats {
        n,
        mean,
        median,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
        min: sorted[0],
        max: sorted[n - 1],
        jb: jarque_bera(n, skewness, kurtosis),
    })
}

impl DescriptiveStats {
    /// Header plus one row, numbers to six significant digits.
    pub fn to_table(&self, label: &str) -> String {
        use crate::family::format_sig6 as f;
        format!(
            "{:<10} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}\n{:<10} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}\n",
            "series", "N", "mean", "median", "std", "skewness", "kurtosis", "min", "max", "JB",
            label, self.n, f(self.mean), f(self.median), f(self.std), f(self.skewness), f(self.kurtosis),
            f(self.min), f(self.max), f(self.jb),
        )
    }
}

/// Mixture density on a uniform grid, with the weighted component terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// `components[k][i]` is `w_k f_k(x[i])`.
    pub components: Vec<Vec<f64>>,
}

pub fn density_curve(m: &MixtureModel, lo: f64, hi: f64, points: usize) -> Result<DensityCurve> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Input(format!("grid bounds must satisfy lo < hi, got {lo}, {hi}")));
    }
    if points < 2 {
        return Err(Error::Input("grid needs at least 2 points".into()));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let x: Vec<f64> = (0..points).map(|i| if i == points - 1 { hi } else { lo + step * i as f64 }).collect();
    let components: Vec<Vec<f64>> = m
        .weights()
        .iter()
        .zip(m.components())
        .map(|(w, c)| x.iter().map(|&xi| w * c.log_pdf_unchecked(xi).exp()).collect())
        .collect();
    let density = (0..points).map(|i| components.iter().map(|col| col[i]).sum()).collect();
    Ok(DensityCurve { x, density, components })
}

impl DensityCurve {
    /// Trapezoid rule over the mixture column.
    pub fn trapezoid(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
            .sum()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["x".to_string(), "density".to_string()];
        header.extend((1..=self.components.len()).map(|k| format!("component_{k}")));
        w.write_record(&header)?;
        for i in 0..self.x.len() {
            let mut row = vec![self.x[i].to_string(), self.density[i].to_string()];
            row.extend(self.components.iter().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        csv_string(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnd::GndParams;

    #[test]
    fn flat_prices_give_zero_return() {
        assert_eq!(compute_returns(&[100.0, 100.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn five_percent_rise() {
        let r = compute_returns(&[100.0, 105.0, 100.0]).unwrap();
        assert!((r[0] - 4.879016416943200).abs() < 1e-12);
        assert_eq!(r[1], -r[0]);
    }

    #[test]
    fn bad_price_reports_index() {
        let err = compute_returns(&[1.0, 2.0, 0.0]).unwrap_err().to_string();
        assert!(err.contains("index 2"), "{err}");
        assert!(compute_returns(&[1.0]).is_err());
    }

    #[test]
    fn jb_from_published_summary() {
        let jb = jarque_bera(3786, -0.5261, 15.2961);
        assert!((jb - 24057.0).abs() / 24057.0 < 5e-3, "{jb}");
        assert_eq!(jarque_bera(100, 0.0, 3.0), 0.0);
    }

    #[test]
    fn two_point_sample() {
        let data: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let s = describe(&data).unwrap();
        assert_eq!(s.skewness, 0.0);
        assert_eq!(s.kurtosis, 1.0);
        assert_eq!(s.median, 0.0);
        assert!((s.std - (10.0f64 / 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn describe_rejects_degenerate_samples() {
        assert!(matches!(describe(&[1.0, 1.0, 1.0, 1.0]), Err(Error::Stats(_))));
        assert!(matches!(describe(&[1.0, 2.0, 3.0]), Err(Error::Stats(_))));
    }

    #[test]
    fn density_of_normal_shape() {
        let m = MixtureModel::unconstrained(vec![1.0], vec![GndParams::new(1.0, 2.0, 2.0).unwrap()]).unwrap();
        let c = density_curve(&m, -5.0, 5.0, 101).unwrap();
        let sd = 2.0 / 2f64.sqrt();
        for (x, d) in c.x.iter().zip(&c.density) {
            let normal = (-(x - 1.0f64).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            assert!((d - normal).abs() < 1e-12);
        }
    }

    #[test]
    fn columns_sum_and_integrate() {
        let m = MixtureModel::unconstrained(
            vec![0.3, 0.7],
            vec![GndParams::new(-1.0, 0.5, 1.2).unwrap(), GndParams::new(2.0, 1.0, 3.0).unwrap()],
        )
        .unwrap();
        let c = density_curve(&m, -13.0, 14.0, 10_000).unwrap();
        for i in 0..c.x.len() {
            let s: f64 = c.components.iter().map(|col| col[i]).sum();
            assert!((s - c.density[i]).abs() <= 1e-14);
        }
        assert!((c.trapezoid() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn csv_column_selection() {
        let text = "date,open,close\n2020-01-01,1,2\n2020-01-02,3,4\n";
        let last = read_csv_column(text.as_bytes(), None).unwrap();
        assert_eq!(last.values, vec![2.0, 4.0]);
        assert_eq!(last.labels, vec!["2020-01-01", "2020-01-02"]);
        let open = read_csv_column(text.as_bytes(), Some("open")).unwrap();
        assert_eq!(open.values, vec![1.0, 3.0]);
        assert!(read_csv_column(text.as_bytes(), Some("volume")).is_err());
        assert!(read_csv_column("x\nabc\n".as_bytes(), None).is_err());
    }
}
