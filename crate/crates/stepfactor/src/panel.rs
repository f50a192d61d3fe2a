//! Balanced panels of periodic excess returns.
//!
//! A [`ReturnPanel`] holds a T x N matrix of decimal per-period excess
//! returns (0.0062 = 0.62% per period), one column per factor or test asset,
//! one row per period. Period labels are opaque ordered strings; the toolkit
//! never does calendar arithmetic, it only needs ordering and counts.
//!
//! Ingestion rejects rather than imputes: a blank or non-numeric cell is an
//! error, because every downstream statistic assumes a balanced panel.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Balanced T x N panel of periodic excess returns.
///
/// Invariants: names are unique and nonempty, matrix dimensions match the
/// label vectors, and every entry is finite. Values are immutable after
/// construction, so panels can be shared freely across parallel workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    periods: Vec<String>,
    names: Vec<String>,
    returns: DMatrix<f64>,
    index: HashMap<String, usize>,
}

/// Per-name one-way cost in basis points per period.
#[derive(Debug, Clone, Default)]
pub struct CostSchedule {
    costs: Vec<(String, f64)>,
}

/// Contiguous k-way split of period positions: disjoint, covering 1..=T.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    folds: Vec<std::ops::Range<usize>>,
}

/// CSV parsing settings. The first field of each row is the period label by
/// default; the header row supplies the column names.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Zero-based index of the period-label column.
    pub period_column: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { delimiter: b',', period_column: 0 }
    }
}

impl ReturnPanel {
    /// Builds a panel from parts, validating every invariant.
    pub fn new(periods: Vec<String>, names: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if names.is_empty() || periods.is_empty() {
            return Err(Error::EmptySelection { context: "panel has no rows or columns".into() });
        }
        if returns.nrows() != periods.len() || returns.ncols() != names.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "matrix is {}x{}, labels imply {}x{}",
                    returns.nrows(),
                    returns.ncols(),
                    periods.len(),
                    names.len()
                ),
            });
        }
        let mut index = HashMap::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::DuplicateName { name: "(empty)".into() });
            }
            if index.insert(name.clone(), j).is_some() {
                return Err(Error::DuplicateName { name: name.clone() });
            }
        }
        for j in 0..returns.ncols() {
            for t in 0..returns.nrows() {
                if !returns[(t, j)].is_finite() {
                    return Err(Error::NonFinite { row: t + 1, column: names[j].clone() });
                }
            }
        }
        Ok(ReturnPanel { periods, names, returns, index })
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_assets(&self) -> usize {
        self.names.len()
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownName { name: name.into() })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Column of returns for one asset.
    pub fn series(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.index_of(name)?;
        Ok(self.returns.column(j).iter().copied().collect())
    }

    /// Loads a panel from a delimited file. Rows are re-ordered by ascending
    /// period label (labels are opaque strings, compared lexicographically).
    pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let pstr = path.display().to_string();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: pstr.clone(), source: e })?;
        Self::parse_str(&raw, options, &pstr)
    }

    /// Parses panel CSV content. Exposed for in-memory round trips.
    pub fn parse_str(raw: &str, options: &LoadOptions, origin: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(raw.as_bytes());

        let mut rows = reader.records();
        let header = match rows.next() {
            Some(Ok(rec)) if !rec.is_empty() && !(rec.len() == 1 && rec[0].is_empty()) => rec,
            Some(Err(e)) => {
                return Err(Error::Io {
                    path: origin.into(),
                    source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                })
            }
            _ => return Err(Error::EmptyFile { path: origin.into() }),
        };
        let pcol = options.period_column;
        if pcol >= header.len() {
            return Err(Error::InvalidParam {
                name: "period_column".into(),
                reason: format!("index {} out of range for {} columns", pcol, header.len()),
            });
        }
        let names: Vec<String> =
            header.iter().enumerate().filter(|(j, _)| *j != pcol).map(|(_, s)| s.to_string()).collect();
        let width = header.len();

        let mut periods = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (i, rec) in rows.enumerate() {
            let row_no = i + 2; // 1-based, after header
            let rec = rec.map_err(|e| Error::Io {
                path: origin.into(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            if rec.len() == 1 && rec[0].is_empty() {
                continue; // trailing blank line
            }
            if rec.len() != width {
                return Err(Error::RaggedRow { row: row_no, got: rec.len(), expected: width });
            }
            periods.push(rec[pcol].to_string());
            for (j, field) in rec.iter().enumerate() {
                if j == pcol {
                    continue;
                }
                let col_name = &header[j];
                let v: f64 = field.parse().map_err(|_| Error::UnparseableNumber {
                    row: row_no,
                    column: col_name.to_string(),
                    value: field.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: row_no, column: col_name.to_string() });
                }
                values.push(v);
            }
        }
        if periods.is_empty() {
            return Err(Error::EmptyFile { path: origin.into() });
        }

        let t = periods.len();
        let n = names.len();
        let mut order: Vec<usize> = (0..t).collect();
        order.sort_by(|&a, &b| periods[a].cmp(&periods[b]));
        let sorted_periods: Vec<String> = order.iter().map(|&i| periods[i].clone()).collect();
        let returns = DMatrix::from_fn(t, n, |r, c| values[order[r] * n + c]);
        ReturnPanel::new(sorted_periods, names, returns)
    }

    /// Writes the panel as CSV. Floats use Rust's shortest round-trip
    /// representation (17 significant digits at most), so `load` after `save`
    /// reproduces every value bit-exactly.
    pub fn save(&self, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
        let pstr = path.as_ref().display().to_string();
        let mut file = std::fs::File::create(path.as_ref())
            .map_err(|e| Error::Io { path: pstr.clone(), source: e })?;
        file.write_all(self.to_csv_string(delimiter).as_bytes())
            .map_err(|e| Error::Io { path: pstr, source: e })
    }

    pub fn to_csv_string(&self, delimiter: u8) -> String {
        let d = delimiter as char;
        let mut out = String::new();
        out.push_str("date");
        for name in &self.names {
            out.push(d);
            out.push_str(name);
        }
        out.push('\n');
        for t in 0..self.n_periods() {
            out.push_str(&self.periods[t]);
            for j in 0..self.n_assets() {
                out.push(d);
                out.push_str(&format!("{}", self.returns[(t, j)]));
            }
            out.push('\n');
        }
        out
    }

    /// Returns a copy with per-period costs deducted from the named columns.
    ///
    /// The deduction is `bps / 10_000` per period, applied uniformly to every
    /// row. Adjusting with schedule `c1` then `c2` equals adjusting once with
    /// `c1 + c2`.
    pub fn adjust_costs(&self, costs: &CostSchedule) -> Result<ReturnPanel> {
        let mut returns = self.returns.clone();
        for (name, bps) in &costs.costs {
            let j = self.index_of(name)?;
            let delta = bps / 10_000.0;
            for t in 0..returns.nrows() {
                returns[(t, j)] -= delta;
            }
        }
        ReturnPanel::new(self.periods.clone(), self.names.clone(), returns)
    }

    /// Restricts the panel to the given columns and/or period-label range.
    /// Column and row order is preserved relative to the source.
    pub fn subset(
        &self,
        names: Option<&[String]>,
        period_range: Option<(Option<&str>, Option<&str>)>,
    ) -> Result<ReturnPanel> {
        let col_idx: Vec<usize> = match names {
            Some(req) => {
                let mut idx = Vec::with_capacity(req.len());
                for name in req {
                    idx.push(self.index_of(name)?);
                }
                idx.sort_unstable();
                idx
            }
            None => (0..self.n_assets()).collect(),
        };
        let row_idx: Vec<usize> = match period_range {
            Some((from, to)) => (0..self.n_periods())
                .filter(|&t| {
                    let p = self.periods[t].as_str();
                    from.map_or(true, |f| p >= f) && to.map_or(true, |u| p <= u)
                })
                .collect(),
            None => (0..self.n_periods()).collect(),
        };
        if col_idx.is_empty() || row_idx.is_empty() {
            return Err(Error::EmptySelection { context: "subset selects no rows or columns".into() });
        }
        let periods = row_idx.iter().map(|&t| self.periods[t].clone()).collect();
        let names = col_idx.iter().map(|&j| self.names[j].clone()).collect();
        let returns =
            DMatrix::from_fn(row_idx.len(), col_idx.len(), |r, c| self.returns[(row_idx[r], col_idx[c])]);
        ReturnPanel::new(periods, names, returns)
    }

    /// Splits the sample into `k` consecutive folds whose sizes differ by at
    /// most one, earliest periods in fold 1.
    pub fn split_folds(&self, k: usize) -> Result<FoldSplit> {
        let t = self.n_periods();
        if k < 2 {
            return Err(Error::InvalidParam { name: "folds".into(), reason: "k must be at least 2".into() });
        }
        if k > t {
            return Err(Error::InvalidParam {
                name: "folds".into(),
                reason: format!("k = {} exceeds T = {}", k, t),
            });
        }
        let base = t / k;
        let rem = t % k;
        let mut folds = Vec::with_capacity(k);
        let mut start = 0;
        for i in 0..k {
            let len = base + usize::from(i < rem);
            folds.push(start..start + len);
            start += len;
        }
        Ok(FoldSplit { folds })
    }

    /// Horizontally concatenates two panels covering identical periods with
    /// disjoint names.
    pub fn hstack(&self, other: &ReturnPanel) -> Result<ReturnPanel> {
        if self.n_periods() != other.n_periods() {
            return Err(Error::PeriodMismatch { row: self.n_periods().min(other.n_periods()) + 1 });
        }
        for (t, (a, b)) in self.periods.iter().zip(other.periods.iter()).enumerate() {
            if a != b {
                return Err(Error::PeriodMismatch { row: t + 1 });
            }
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let t = self.n_periods();
        let returns = DMatrix::from_fn(t, names.len(), |r, c| {
            if c < self.n_assets() {
                self.returns[(r, c)]
            } else {
                other.returns[(r, c - self.n_assets())]
            }
        });
        ReturnPanel::new(self.periods.clone(), names, returns)
    }

    /// Copy of the panel restricted to the given row positions (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<ReturnPanel> {
        if rows.is_empty() {
            return Err(Error::EmptySelection { context: "no rows selected".into() });
        }
        let periods = rows.iter().map(|&t| self.periods[t].clone()).collect();
        let returns = DMatrix::from_fn(rows.len(), self.n_assets(), |r, c| self.returns[(rows[r], c)]);
        ReturnPanel::new(periods, self.names.clone(), returns)
    }
}

impl CostSchedule {
    pub fn new(costs: Vec<(String, f64)>) -> Result<Self> {
        for (name, bps) in &costs {
            if *bps < 0.0 || !bps.is_finite() {
                return Err(Error::InvalidParam {
                    name: format!("cost[{name}]"),
                    reason: "costs must be finite and non-negative".into(),
                });
            }
        }
        Ok(CostSchedule { costs })
    }

    /// Loads a two-column `name,bps` CSV (no header required; a `name,bps`
    /// header row is skipped if present).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let pstr = path.as_ref().display().to_string();
        let raw = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io { path: pstr.clone(), source: e })?;
        let mut costs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, ',');
            let name = parts.next().unwrap_or("").trim().to_string();
            let value = parts.next().unwrap_or("").trim();
            if i == 0 && value.parse::<f64>().is_err() {
                continue; // header row
            }
            let bps: f64 = value.parse().map_err(|_| Error::UnparseableNumber {
                row: i + 1,
                column: "bps".into(),
                value: value.into(),
            })?;
            costs.push((name, bps));
        }
        CostSchedule::new(costs)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.costs
    }
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, i: usize) -> &std::ops::Range<usize> {
        &self.folds[i]
    }

    pub fn folds(&self) -> &[std::ops::Range<usize>] {
        &self.folds
    }

    /// Row positions outside fold `i`, in ascending order.
    pub fn complement(&self, i: usize) -> Vec<usize> {
        let f = &self.folds[i];
        (0..self.total()).filter(|t| !f.contains(t)).collect()
    }

    pub fn total(&self) -> usize {
        self.folds.last().map_or(0, |r| r.end)
    }
}
