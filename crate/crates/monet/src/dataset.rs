//! Quarterly country data: parsing, validation, alignment and log views.
//!
//! Input CSV schema, one row per quarter:
//! `date,country,m1,ngdp,gold_usd` with an ISO-8601 date on the first day of
//! the quarter, an uppercase 2-letter country code and positive decimal values.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DatasetError {
    #[error("unknown country code {0:?}")]
    UnknownCountry(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("row {row}: parse error: {msg}")]
    Parse { row: usize, msg: String },
    #[error("row {row}: non-positive value {value} for {variable}")]
    NonPositiveValue { row: usize, variable: Variable, value: f64 },
    #[error("missing quarter {0} in requested range")]
    MissingQuarter(QuarterStamp),
    #[error("duplicate quarter {0}")]
    DuplicateQuarter(QuarterStamp),
    #[error("no rows for country {0} in the requested range")]
    EmptyRange(Country),
    #[error("series are misaligned at {0}")]
    Misaligned(QuarterStamp),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Country {
    US,
    CA,
    UK,
    BR,
}

impl Country {
    pub const ALL: [Country; 4] = [Country::US, Country::CA, Country::UK, Country::BR];

    /// Coverage of the source dataset, used as the default range.
    pub fn default_range(self) -> (QuarterStamp, QuarterStamp) {
        match self {
            Country::US => (QuarterStamp::new(1959, 1).unwrap(), QuarterStamp::new(2022, 4).unwrap()),
            Country::CA => (QuarterStamp::new(1961, 1).unwrap(), QuarterStamp::new(2022, 4).unwrap()),
            Country::UK => (QuarterStamp::new(1986, 1).unwrap(), QuarterStamp::new(2022, 4).unwrap()),
            Country::BR => (QuarterStamp::new(1996, 1).unwrap(), QuarterStamp::new(2022, 4).unwrap()),
        }
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Country::US => "US",
            Country::CA => "CA",
            Country::UK => "UK",
            Country::BR => "BR",
        };
        f.write_str(s)
    }
}

impl FromStr for Country {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "US" => Ok(Country::US),
            "CA" => Ok(Country::CA),
            "UK" | "GB" => Ok(Country::UK),
            "BR" => Ok(Country::BR),
            other => Err(DatasetError::UnknownCountry(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    M1,
    Ngdp,
    Gold,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::M1, Variable::Ngdp, Variable::Gold];
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variable::M1 => "M1",
            Variable::Ngdp => "NGDP",
            Variable::Gold => "GOLD",
        };
        f.write_str(s)
    }
}

impl FromStr for Variable {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "M1" | "LOG_M1" => Ok(Variable::M1),
            "NGDP" | "PRICES" | "LOG_NGDP" | "LOG_PRICES" => Ok(Variable::Ngdp),
            "GOLD" | "LOG_GOLD" => Ok(Variable::Gold),
            other => Err(DatasetError::UnknownVariable(other.to_string())),
        }
    }
}

/// Year/quarter stamp with total ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QuarterStamp {
    pub year: i32,
    pub quarter: u8,
}

impl QuarterStamp {
    pub fn new(year: i32, quarter: u8) -> Option<Self> {
        (1..=4).contains(&quarter).then_some(Self { year, quarter })
    }

    /// Parses either `YYYYQn` or an ISO date (month mapped to its quarter).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            return Self::new(y.parse().ok()?, q.parse().ok()?);
        }
        let mut parts = s.split('-');
        let year: i32 = parts.next()?.parse().ok()?;
        let month: u8 = parts.next()?.parse().ok()?;
        if !(1..=12).contains(&month) {
            return None;
        }
        Self::new(year, (month - 1) / 3 + 1)
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self { year: self.year + 1, quarter: 1 }
        } else {
            Self { year: self.year, quarter: self.quarter + 1 }
        }
    }

    /// First day of the quarter as an ISO date string.
    pub fn iso_date(self) -> String {
        format!("{:04}-{:02}-01", self.year, (self.quarter - 1) * 3 + 1)
    }
}

impl fmt::Display for QuarterStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.quarter)
    }
}

/// One variable's quarterly series for one country. Stamps are strictly
/// increasing with no gaps and every value is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountrySeries {
    pub country: Country,
    pub variable: Variable,
    pub stamps: Vec<QuarterStamp>,
    pub values: Vec<f64>,
}

impl CountrySeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }
}

/// The three aligned series for one country plus cached log views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryDataset {
    pub country: Country,
    pub stamps: Vec<QuarterStamp>,
    pub m1: Vec<f64>,
    pub ngdp: Vec<f64>,
    pub gold: Vec<f64>,
    log_m1: Vec<f64>,
    log_ngdp: Vec<f64>,
    log_gold: Vec<f64>,
}

impl CountryDataset {
    pub fn from_series(
        country: Country,
        stamps: Vec<QuarterStamp>,
        m1: Vec<f64>,
        ngdp: Vec<f64>,
        gold: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        assert_eq!(stamps.len(), m1.len());
        assert_eq!(stamps.len(), ngdp.len());
        assert_eq!(stamps.len(), gold.len());
        for (i, w) in stamps.windows(2).enumerate() {
            if w[1] != w[0].next() {
                return Err(DatasetError::MissingQuarter(w[0].next()));
            }
            let _ = i;
        }
        for (row, (&a, (&b, &c))) in m1.iter().zip(ngdp.iter().zip(gold.iter())).enumerate() {
            for (v, var) in [(a, Variable::M1), (b, Variable::Ngdp), (c, Variable::Gold)] {
                if !(v > 0.0) {
                    return Err(DatasetError::NonPositiveValue { row, variable: var, value: v });
                }
            }
        }
        let log_m1 = m1.iter().map(|v| v.ln()).collect();
        let log_ngdp = ngdp.iter().map(|v| v.ln()).collect();
        let log_gold = gold.iter().map(|v| v.ln()).collect();
        Ok(Self { country, stamps, m1, ngdp, gold, log_m1, log_ngdp, log_gold })
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn values(&self, variable: Variable) -> &[f64] {
        match variable {
            Variable::M1 => &self.m1,
            Variable::Ngdp => &self.ngdp,
            Variable::Gold => &self.gold,
        }
    }

    /// Cached natural-log view of one variable.
    pub fn log_values(&self, variable: Variable) -> &[f64] {
        match variable {
            Variable::M1 => &self.log_m1,
            Variable::Ngdp => &self.log_ngdp,
            Variable::Gold => &self.log_gold,
        }
    }

    pub fn series(&self, variable: Variable) -> CountrySeries {
        CountrySeries {
            country: self.country,
            variable,
            stamps: self.stamps.clone(),
            values: self.values(variable).to_vec(),
        }
    }

    /// Renders the dataset back to the input CSV schema.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        writeln!(w, "date,country,m1,ngdp,gold_usd")?;
        for (i, stamp) in self.stamps.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                stamp.iso_date(),
                self.country,
                fmt_value(self.m1[i]),
                fmt_value(self.ngdp[i]),
                fmt_value(self.gold[i]),
            )?;
        }
        Ok(())
    }
}

// Shortest representation that round-trips through f64 parsing.
fn fmt_value(v: f64) -> String {
    let mut s = format!("{v}");
    if s.parse::<f64>() != Ok(v) {
        s = format!("{v:?}");
    }
    s
}

/// Parses the raw CSV bytes into per-quarter rows for one country, without
/// range validation. Shared by the loader and the fuzz harness.
pub fn parse_rows(
    bytes: &[u8],
    country: Country,
) -> Result<Vec<(QuarterStamp, f64, f64, f64)>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // header is row 1
        let record = record?;
        if record.len() < 5 {
            return Err(DatasetError::Parse { row, msg: format!("expected 5 fields, got {}", record.len()) });
        }
        let stamp = QuarterStamp::parse(&record[0])
            .ok_or_else(|| DatasetError::Parse { row, msg: format!("bad date {:?}", &record[0]) })?;
        let row_country: Country = match record[1].parse() {
            Ok(c) => c,
            Err(_) => continue, // other countries in the same file are fine
        };
        if row_country != country {
            continue;
        }
        let mut vals = [0.0f64; 3];
        for (slot, (field, variable)) in
            vals.iter_mut().zip([(2, Variable::M1), (3, Variable::Ngdp), (4, Variable::Gold)])
        {
            let raw = record[field].trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| DatasetError::Parse { row, msg: format!("bad number {raw:?}") })?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(DatasetError::NonPositiveValue { row, variable, value: v });
            }
            *slot = v;
        }
        rows.push((stamp, vals[0], vals[1], vals[2]));
    }
    Ok(rows)
}

/// Loads one country's aligned dataset covering exactly the requested range.
pub fn load_country_dataset(
    path: &Path,
    country: Country,
    range: (QuarterStamp, QuarterStamp),
) -> Result<CountryDataset, DatasetError> {
    let bytes = std::fs::read(path)?;
    dataset_from_bytes(&bytes, country, range)
}

pub fn dataset_from_bytes(
    bytes: &[u8],
    country: Country,
    range: (QuarterStamp, QuarterStamp),
) -> Result<CountryDataset, DatasetError> {
    let mut rows = parse_rows(bytes, country)?;
    rows.sort_by_key(|r| r.0);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(DatasetError::DuplicateQuarter(w[0].0));
        }
    }
    let (start, end) = range;
    let mut stamps = Vec::new();
    let mut m1 = Vec::new();
    let mut ngdp = Vec::new();
    let mut gold = Vec::new();
    let mut cursor = start;
    let mut iter = rows.iter().skip_while(|r| r.0 < start).peekable();
    loop {
        match iter.peek() {
            Some(&&(stamp, a, b, c)) if stamp == cursor => {
                stamps.push(stamp);
                m1.push(a);
                ngdp.push(b);
                gold.push(c);
                iter.next();
            }
            _ => return Err(DatasetError::MissingQuarter(cursor)),
        }
        if cursor == end {
            break;
        }
        cursor = cursor.next();
    }
    if stamps.is_empty() {
        return Err(DatasetError::EmptyRange(country));
    }
    CountryDataset::from_series(country, stamps, m1, ngdp, gold)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic_csv(
        country: Country,
        range: (QuarterStamp, QuarterStamp),
        skip: Option<QuarterStamp>,
    ) -> String {
        let mut out = String::from("date,country,m1,ngdp,gold_usd\n");
        let mut stamp = range.0;
        let mut t = 0usize;
        loop {
            if Some(stamp) != skip {
                let m1 = 100.0 * (1.0 + 0.01 * t as f64);
                let ngdp = 400.0 * (1.0 + 0.012 * t as f64);
                let gold = 35.0 * (1.0 + 0.02 * t as f64);
                out.push_str(&format!("{},{country},{m1},{ngdp},{gold}\n", stamp.iso_date()));
            }
            if stamp == range.1 {
                break;
            }
            stamp = stamp.next();
            t += 1;
        }
        out
    }

    fn us_range() -> (QuarterStamp, QuarterStamp) {
        (QuarterStamp::new(1959, 1).unwrap(), QuarterStamp::new(2022, 4).unwrap())
    }

    #[test]
    fn us_range_has_256_observations() {
        let csv = synthetic_csv(Country::US, us_range(), None);
        let ds = dataset_from_bytes(csv.as_bytes(), Country::US, us_range()).unwrap();
        assert_eq!(ds.len(), 256);
    }

    #[test]
    fn brazil_range_has_108_observations() {
        let range = Country::BR.default_range();
        let csv = synthetic_csv(Country::BR, range, None);
        let ds = dataset_from_bytes(csv.as_bytes(), Country::BR, range).unwrap();
        assert_eq!(ds.len(), 108);
    }

    #[test]
    fn missing_quarter_is_named() {
        let gap = QuarterStamp::new(1970, 3).unwrap();
        let csv = synthetic_csv(Country::US, us_range(), Some(gap));
        let err = dataset_from_bytes(csv.as_bytes(), Country::US, us_range()).unwrap_err();
        match err {
            DatasetError::MissingQuarter(s) => assert_eq!(s, gap),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn nonpositive_value_rejected() {
        let csv = "date,country,m1,ngdp,gold_usd\n1959-01-01,US,-1,2,3\n";
        let err = dataset_from_bytes(
            csv.as_bytes(),
            Country::US,
            (QuarterStamp::new(1959, 1).unwrap(), QuarterStamp::new(1959, 1).unwrap()),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::NonPositiveValue { row: 2, .. }));
    }

    #[test]
    fn parse_error_carries_row_number() {
        let csv = "date,country,m1,ngdp,gold_usd\n1959-01-01,US,1,2,3\n1959-04-01,US,abc,2,3\n";
        let err = parse_rows(csv.as_bytes(), Country::US).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { row: 3, .. }));
    }

    #[test]
    fn log_view_identities() {
        let range = (QuarterStamp::new(2000, 1).unwrap(), QuarterStamp::new(2003, 4).unwrap());
        let csv = synthetic_csv(Country::CA, range, None);
        let ds = dataset_from_bytes(csv.as_bytes(), Country::CA, range).unwrap();
        for variable in Variable::ALL {
            for (lv, v) in ds.log_values(variable).iter().zip(ds.values(variable)) {
                assert!((lv - v.ln()).abs() < 1e-15);
            }
        }
        assert!((1.0f64.ln()).abs() < 1e-15);
        // geometric series becomes arithmetic under logs
        let logs: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|v: &f64| v.ln()).collect();
        assert!((logs[1] - logs[0] - (logs[2] - logs[1])).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let range = (QuarterStamp::new(1990, 1).unwrap(), QuarterStamp::new(1999, 4).unwrap());
        let csv = synthetic_csv(Country::UK, range, None);
        let ds = dataset_from_bytes(csv.as_bytes(), Country::UK, range).unwrap();
        let mut rendered = Vec::new();
        ds.to_csv(&mut rendered).unwrap();
        let reloaded = dataset_from_bytes(&rendered, Country::UK, range).unwrap();
        assert_eq!(ds, reloaded);
    }

    #[test]
    fn stamp_ordering_and_parse() {
        let a = QuarterStamp::parse("1970-07-01").unwrap();
        assert_eq!(a, QuarterStamp::new(1970, 3).unwrap());
        assert_eq!(QuarterStamp::parse("1970Q3").unwrap(), a);
        assert!(QuarterStamp::new(1970, 2).unwrap() < a);
        assert!(QuarterStamp::parse("1970-13-01").is_none());
        assert_eq!(a.next(), QuarterStamp::new(1970, 4).unwrap());
        assert_eq!(QuarterStamp::new(1970, 4).unwrap().next(), QuarterStamp::new(1971, 1).unwrap());
    }
}
