//! Price and return panels, CSV ingestion, and whole-sample moments.
//!
//! Two CSV layouts are accepted. A price file has a `date` header followed by
//! one column per ticker, with ISO-8601 dates in the first column. A returns
//! file starts with a `#returns` sentinel line; the next line is a header
//! whose first cell names the row-key column (ignored) and whose remaining
//! cells are tickers.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const RETURNS_SENTINEL: &str = "#returns";

#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    labels: Vec<String>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    /// Builds a panel, sorting rows by date. Rejects duplicate dates and
    /// non-positive or non-finite prices.
    pub fn new(dates: Vec<NaiveDate>, labels: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != labels.len() {
            return Err(Error::shape(format!(
                "price matrix is {}x{} but there are {} dates and {} labels",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                labels.len()
            )));
        }
        for (i, j) in (0..prices.nrows()).flat_map(|i| (0..prices.ncols()).map(move |j| (i, j))) {
            let p = prices[(i, j)];
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::domain(format!(
                    "price {p} for `{}` on {} is not strictly positive",
                    labels[j], dates[i]
                )));
            }
        }
        let mut order: Vec<usize> = (0..dates.len()).collect();
        order.sort_by_key(|&i| dates[i]);
        for w in order.windows(2) {
            if dates[w[0]] == dates[w[1]] {
                return Err(Error::domain(format!("duplicate date {}", dates[w[0]])));
            }
        }
        let sorted_dates = order.iter().map(|&i| dates[i]).collect();
        let sorted = DMatrix::from_fn(prices.nrows(), prices.ncols(), |i, j| prices[(order[i], j)]);
        Ok(Self {
            dates: sorted_dates,
            labels,
            prices: sorted,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_rows(&self) -> usize {
        self.prices.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.prices.ncols()
    }
}

/// T×N log-returns with the (constant) sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    labels: Vec<String>,
    returns: DMatrix<f64>,
    mean: DVector<f64>,
}

impl ReturnPanel {
    pub fn new(labels: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != labels.len() {
            return Err(Error::shape(format!(
                "{} return columns but {} labels",
                returns.ncols(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InsufficientData("no assets".into()));
        }
        if let Some(pos) = returns.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % returns.nrows(), pos / returns.nrows());
            return Err(Error::domain(format!(
                "non-finite return for `{}` at row {row}",
                labels[col]
            )));
        }
        let t = returns.nrows();
        let mean = if t == 0 {
            DVector::zeros(returns.ncols())
        } else {
            DVector::from_fn(returns.ncols(), |j, _| returns.column(j).sum() / t as f64)
        };
        Ok(Self {
            labels,
            returns,
            mean,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn n_obs(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// ε_t = r_t − μ with μ held at the sample mean.
    pub fn demeaned(&self) -> DMatrix<f64> {
        let mut eps = self.returns.clone();
        for (j, mut col) in eps.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        eps
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.n_assets()) {
            return Err(Error::shape(format!("column {bad} out of range")));
        }
        let labels = columns.iter().map(|&c| self.labels[c].clone()).collect();
        let returns = self.returns.select_columns(columns);
        Self::new(labels, returns)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "{RETURNS_SENTINEL}")?;
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.labels.iter().cloned());
        wtr.write_record(&header).map_err(csv_to_io)?;
        for t in 0..self.n_obs() {
            let mut row = vec![(t + 1).to_string()];
            row.extend(self.returns.row(t).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&row).map_err(csv_to_io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub corr: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    /// Diagonal matrix Γ of sample standard deviations.
    pub gamma: DMatrix<f64>,
}

impl SampleMoments {
    pub fn std_devs(&self) -> DVector<f64> {
        self.gamma.diagonal()
    }
}

enum Layout {
    Prices,
    Returns,
}

fn sniff(text: &str) -> Layout {
    match text.lines().next() {
        Some(l) if l.trim().starts_with(RETURNS_SENTINEL) => Layout::Returns,
        _ => Layout::Prices,
    }
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<PricePanel> {
    let text = std::fs::read_to_string(path)?;
    parse_prices(text.as_bytes())
}

/// Loads either layout and returns the log-return panel.
pub fn load_panel(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let text = std::fs::read_to_string(path)?;
    match sniff(&text) {
        Layout::Prices => log_returns(&parse_prices(text.as_bytes())?),
        Layout::Returns => parse_returns(text.as_bytes()),
    }
}

struct Table {
    header: Vec<String>,
    keys: Vec<String>,
    values: DMatrix<f64>,
}

/// `first_line` is the 1-based file line of the header row.
fn read_table<R: Read>(input: R, first_line: usize) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: first_line,
            column: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: first_line,
            column: 1,
            message: "expected a key column and at least one ticker".into(),
        });
    }
    let n = header.len() - 1;
    let mut keys = Vec::new();
    let mut data = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = first_line + 1 + k;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 1,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        keys.push(rec[0].to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            data.push(v);
        }
    }
    let values = DMatrix::from_row_slice(keys.len(), n, &data);
    Ok(Table {
        header,
        keys,
        values,
    })
}

pub fn parse_prices<R: Read>(input: R) -> Result<PricePanel> {
    let table = read_table(input, 1)?;
    if !table.header[0].eq_ignore_ascii_case("date") {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: format!("first header must be `date`, found `{}`", table.header[0]),
        });
    }
    let dates = table
        .keys
        .iter()
        .enumerate()
        .map(|(k, s)| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Parse {
                row: k + 2,
                column: 1,
                message: format!("bad date `{s}`: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PricePanel::new(dates, table.header[1..].to_vec(), table.values)
}

pub fn parse_returns<R: Read>(mut input: R) -> Result<ReturnPanel> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let rest = match text.split_once('\n') {
        Some((first, rest)) if first.trim().starts_with(RETURNS_SENTINEL) => rest,
        _ => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: format!("missing `{RETURNS_SENTINEL}` sentinel"),
            })
        }
    };
    let table = read_table(rest.as_bytes(), 2)?;
    ReturnPanel::new(table.header[1..].to_vec(), table.values)
}

/// Square labelled matrix: header `,A,B,…`, then one row per label in the
/// same order. Returns the labels and the matrix.
pub fn parse_matrix<R: Read>(input: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let table = read_table(input, 1)?;
    let labels = table.header[1..].to_vec();
    if table.keys.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} rows for {} column labels",
            table.keys.len(),
            labels.len()
        )));
    }
    if let Some(k) = table.keys.iter().zip(&labels).position(|(a, b)| a != b) {
        return Err(Error::Parse {
            row: k + 2,
            column: 1,
            message: format!("row label `{}` does not match column `{}`", table.keys[k], labels[k]),
        });
    }
    Ok((labels, table.values))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(text.as_bytes())
}

/// r_jt = ln(P_jt / P_j,t−1).
pub fn log_returns(p: &PricePanel) -> Result<ReturnPanel> {
    let rows = p.n_rows();
    if rows < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 price rows, got {rows}"
        )));
    }
    let prices = p.prices();
    let returns = DMatrix::from_fn(rows - 1, p.n_assets(), |t, j| {
        (prices[(t + 1, j)] / prices[(t, j)]).ln()
    });
    ReturnPanel::new(p.labels().to_vec(), returns)
}

/// Sample covariance (divisor T−1) of the columns of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    let n = x.ncols();
    let means: Vec<f64> = (0..n).map(|j| x.column(j).sum() / t as f64).collect();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..t)
                .map(|k| (x[(k, i)] - means[i]) * (x[(k, j)] - means[j]))
                .sum();
            let v = s / (t as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

fn check_not_constant(x: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    for (j, col) in x.column_iter().enumerate() {
        if col.max() == col.min() {
            return Err(Error::DegenerateSeries(labels[j].clone()));
        }
    }
    Ok(())
}

/// Pearson correlation of the columns of `x`; unit diagonal, clamped to [−1, 1].
pub fn pearson_correlation(x: &DMatrix<f64>, labels: &[String]) -> Result<DMatrix<f64>> {
    Ok(moments_of(x, labels)?.corr)
}

fn moments_of(x: &DMatrix<f64>, labels: &[String]) -> Result<SampleMoments> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations, got {}",
            x.nrows()
        )));
    }
    check_not_constant(x, labels)?;
    let cov = sample_covariance(x);
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].sqrt()).collect();
    let corr = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    });
    let gamma = DMatrix::from_diagonal(&DVector::from_vec(sd));
    Ok(SampleMoments { corr, cov, gamma })
}

pub fn sample_moments(r: &ReturnPanel) -> Result<SampleMoments> {
    moments_of(r.returns(), r.labels())
}
