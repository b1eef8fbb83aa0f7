//! Daily close series, trading-day indexing and crash statistics.
//!
//! Every position used by the fitting code is a trading-day index: the
//! `i`-th row of the series is at position `i` regardless of weekends and
//! holidays. Calendar dates only appear at the edges (loading, reporting).

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DATE_COLUMN: &str = "Date";

/// Price columns tried in order when none is requested explicitly.
pub const DEFAULT_PRICE_COLUMNS: [&str; 2] = ["Adj Close", "Close"];

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header has no `{0}` column")]
    MissingColumn(String),
    #[error("header has none of the price columns {0:?}")]
    NoPriceColumn(Vec<String>),
    #[error("line {line}: unparseable date `{value}`")]
    BadDate { line: u64, value: String },
    #[error("line {line}: missing or unparseable price `{value}`")]
    BadPrice { line: u64, value: String },
    #[error("line {line}: non-positive price {value}")]
    NonPositivePrice { line: u64, value: f64 },
    #[error("dates not strictly increasing at {date}")]
    NonMonotoneDates { date: NaiveDate },
    #[error("series is empty")]
    Empty,
    #[error("series lengths differ: {dates} dates, {closes} closes")]
    LengthMismatch { dates: usize, closes: usize },
    #[error("date {0} is outside the series")]
    DateOutOfRange(NaiveDate),
    #[error("date {0} is not a trading date of the series")]
    NotATradingDate(NaiveDate),
    #[error("window needs at least two trading days")]
    WindowTooShort,
    #[error("no post-peak valley: the window peaks on its last day")]
    NoPostPeakValley,
}

/// What to do with rows whose price is missing, unparseable or non-positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowPolicy {
    /// Abort on the first bad row.
    #[default]
    Strict,
    /// Drop bad rows.
    Skip,
}

/// How [`PriceSeries::date_to_index`] treats dates that are not trading dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateLookup {
    Exact,
    NearestFollowing,
}

/// A calendar date plus the fraction of a trading day past it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalDate {
    pub date: NaiveDate,
    pub fraction: f64,
}

/// Daily closes indexed by dense trading-day position.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    log_closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self, SeriesError> {
        if dates.len() != closes.len() {
            return Err(SeriesError::LengthMismatch {
                dates: dates.len(),
                closes: closes.len(),
            });
        }
        if dates.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(SeriesError::NonMonotoneDates { date: w[1] });
        }
        if let Some((i, &c)) = closes
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(SeriesError::NonPositivePrice {
                line: i as u64 + 1,
                value: c,
            });
        }
        let log_closes = closes.iter().map(|c| c.ln()).collect();
        Ok(Self {
            dates,
            closes,
            log_closes,
        })
    }

    /// Reads a CSV with a `Date` column and a price column.
    ///
    /// `column = None` picks the first of [`DEFAULT_PRICE_COLUMNS`] present.
    pub fn load_csv(
        path: impl AsRef<Path>,
        column: Option<&str>,
        policy: RowPolicy,
    ) -> Result<Self, SeriesError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| SeriesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file, column, policy)
    }

    pub fn read_csv<R: Read>(
        reader: R,
        column: Option<&str>,
        policy: RowPolicy,
    ) -> Result<Self, SeriesError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let date_col =
            find(DATE_COLUMN).ok_or_else(|| SeriesError::MissingColumn(DATE_COLUMN.into()))?;
        let price_col = match column {
            Some(name) => find(name).ok_or_else(|| SeriesError::MissingColumn(name.into()))?,
            None => DEFAULT_PRICE_COLUMNS
                .iter()
                .find_map(|name| find(name))
                .ok_or_else(|| {
                    SeriesError::NoPriceColumn(
                        DEFAULT_PRICE_COLUMNS.iter().map(|s| s.to_string()).collect(),
                    )
                })?,
        };

        let mut dates = Vec::new();
        let mut closes = Vec::new();
        for record in rdr.records() {
            let record = record?;
            // header is line 1
            let line = record.position().map_or(0, |p| p.line());
            let raw_date = record.get(date_col).unwrap_or("");
            let raw_price = record.get(price_col).unwrap_or("");
            let row = parse_row(line, raw_date, raw_price);
            match (row, policy) {
                (Ok((d, p)), _) => {
                    dates.push(d);
                    closes.push(p);
                }
                (Err(_), RowPolicy::Skip) => continue,
                (Err(e), RowPolicy::Strict) => return Err(e),
            }
        }
        Self::new(dates, closes)
    }

    /// Writes `Date,Close` rows that [`PriceSeries::read_csv`] reads back
    /// into an identical series.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SeriesError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([DATE_COLUMN, "Close"])?;
        for (d, c) in self.dates.iter().zip(&self.closes) {
            wtr.write_record([d.format(DATE_FORMAT).to_string(), c.to_string()])?;
        }
        wtr.flush().map_err(|e| SeriesError::Csv(e.into()))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn log_closes(&self) -> &[f64] {
        &self.log_closes
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// The series truncated to positions `0..=last`.
    pub fn prefix(&self, last: usize) -> PriceSeries {
        let end = (last + 1).min(self.len());
        PriceSeries {
            dates: self.dates[..end].to_vec(),
            closes: self.closes[..end].to_vec(),
            log_closes: self.log_closes[..end].to_vec(),
        }
    }

    pub fn date_to_index(&self, d: NaiveDate, lookup: DateLookup) -> Result<usize, SeriesError> {
        match self.dates.binary_search(&d) {
            Ok(i) => Ok(i),
            Err(i) if i == self.dates.len() || (i == 0 && lookup == DateLookup::Exact) => {
                Err(SeriesError::DateOutOfRange(d))
            }
            Err(i) => match lookup {
                DateLookup::Exact => Err(SeriesError::NotATradingDate(d)),
                DateLookup::NearestFollowing => Ok(i),
            },
        }
    }

    /// Maps a real trading-day position to a calendar date.
    ///
    /// In range, the date is that of `floor(x)`. Past the last observation
    /// whole trading days are counted forward on a Monday-to-Friday calendar.
    /// Negative positions clamp to the first date.
    pub fn index_to_fractional_date(&self, x: f64) -> FractionalDate {
        let x = x.max(0.0);
        let last = self.len() - 1;
        let whole = x.floor();
        let fraction = x - whole;
        let whole = whole as usize;
        if whole <= last {
            FractionalDate {
                date: self.dates[whole],
                fraction,
            }
        } else {
            FractionalDate {
                date: add_weekdays(self.last_date(), (whole - last) as u64),
                fraction,
            }
        }
    }

    /// The calendar date of the trading day nearest to `x`.
    pub fn nearest_date(&self, x: f64) -> NaiveDate {
        self.index_to_fractional_date(x.max(0.0).round()).date
    }

    /// Peak-to-valley statistics over `[start, end]`.
    ///
    /// The peak is the first maximum close; the valley is the lowest close
    /// strictly after it.
    pub fn crash_stats(&self, start: NaiveDate, end: NaiveDate) -> Result<CrashStats, SeriesError> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        if hi <= lo || hi - lo < 2 {
            return Err(SeriesError::WindowTooShort);
        }
        let peak = (lo..hi).fold(lo, |best, i| {
            if self.closes[i] > self.closes[best] {
                i
            } else {
                best
            }
        });
        if peak + 1 >= hi {
            return Err(SeriesError::NoPostPeakValley);
        }
        let valley = (peak + 1..hi).fold(peak + 1, |best, i| {
            if self.closes[i] < self.closes[best] {
                i
            } else {
                best
            }
        });
        let peak_price = self.closes[peak];
        let valley_price = self.closes[valley];
        Ok(CrashStats {
            peak_date: self.dates[peak],
            peak_price,
            valley_date: self.dates[valley],
            valley_price,
            crash_size: (peak_price - valley_price) / peak_price,
        })
    }
}

fn parse_row(line: u64, raw_date: &str, raw_price: &str) -> Result<(NaiveDate, f64), SeriesError> {
    let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| SeriesError::BadDate {
        line,
        value: raw_date.to_string(),
    })?;
    let price: f64 = raw_price.parse().map_err(|_| SeriesError::BadPrice {
        line,
        value: raw_price.to_string(),
    })?;
    if !price.is_finite() {
        return Err(SeriesError::BadPrice {
            line,
            value: raw_price.to_string(),
        });
    }
    if price <= 0.0 {
        return Err(SeriesError::NonPositivePrice { line, value: price });
    }
    Ok((date, price))
}

/// Moves `n` Monday-to-Friday days forward from `from`.
pub fn add_weekdays(from: NaiveDate, n: u64) -> NaiveDate {
    let mut d = from;
    let mut left = n;
    // whole weeks first
    let weeks = left / 5;
    if weeks > 0 && is_weekday(d) {
        d = d + Days::new(7 * weeks);
        left -= 5 * weeks;
    }
    while left > 0 {
        d = d.succ_opt().expect("date overflow");
        if is_weekday(d) {
            left -= 1;
        }
    }
    d
}

fn is_weekday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Peak and valley of a crash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashStats {
    pub peak_date: NaiveDate,
    pub peak_price: f64,
    pub valley_date: NaiveDate,
    pub valley_price: f64,
    /// `(peak - valley) / peak`
    pub crash_size: f64,
}
