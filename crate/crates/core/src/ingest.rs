//! Price and universe ingestion.
//!
//! Prices arrive as long-format CSV (`date,ticker,adj_close`) or, optionally,
//! as a wide table with one column per ticker. Only tickers quoted on every
//! trading date of the requested range survive; the rest are reported in a
//! [`DroppedTicker`] list. No forward-filling or calendar compensation is
//! applied.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sector abbreviations used by the S&P 500 and Nikkei 225 constituent tables.
pub const SECTOR_CODES: &[(&str, &str)] = &[
    ("CD", "Consumer Discretionary"),
    ("CS", "Consumer Staples"),
    ("EG", "Energy"),
    ("FN", "Financial"),
    ("HC", "Health Care"),
    ("ID", "Industrials"),
    ("IT", "Information Technology"),
    ("MT", "Materials"),
    ("TC", "Telecommunication Services"),
    ("UT", "Utilities"),
    ("CG", "Consumer Goods"),
    ("CP", "Capital Goods/Others"),
];

pub fn is_known_sector(code: &str) -> bool {
    SECTOR_CODES.iter().any(|(c, _)| *c == code)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    pub ticker: String,
    pub name: String,
    /// Two-letter sector abbreviation; `None` when prices were loaded without
    /// a universe file.
    pub sector_code: Option<String>,
}

impl Instrument {
    pub fn bare(ticker: impl Into<String>) -> Self {
        let ticker = ticker.into();
        Instrument {
            name: ticker.clone(),
            ticker,
            sector_code: None,
        }
    }

    fn sort_key(&self) -> (Option<&str>, &str) {
        (self.sector_code.as_deref(), self.ticker.as_str())
    }
}

/// Dense N×T table of adjusted closing prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    instruments: Vec<Instrument>,
    dates: Vec<NaiveDate>,
    /// Row-major, one row per instrument.
    prices: Vec<f64>,
}

impl PriceTable {
    pub fn new(instruments: Vec<Instrument>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        let n = instruments.len();
        let t = dates.len();
        if n < 2 {
            return Err(Error::TooFewInstruments(n));
        }
        if t < 2 {
            return Err(Error::TooFewDates(t));
        }
        if prices.len() != n * t {
            return Err(Error::Misaligned {
                expected: n * t,
                found: prices.len(),
            });
        }
        check_increasing(&dates)?;
        let mut seen = HashSet::new();
        for inst in &instruments {
            if inst.ticker.is_empty() {
                return Err(Error::InvalidParameter("empty ticker".into()));
            }
            if !seen.insert(inst.ticker.as_str()) {
                return Err(Error::DuplicateTicker(inst.ticker.clone()));
            }
        }
        for (idx, &p) in prices.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidPrice {
                    line: 0,
                    ticker: instruments[idx / t].ticker.clone(),
                    value: p,
                });
            }
        }
        Ok(PriceTable {
            instruments,
            dates,
            prices,
        })
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn series(&self, i: usize) -> &[f64] {
        let t = self.dates.len();
        &self.prices[i * t..(i + 1) * t]
    }

    pub fn price(&self, i: usize, t: usize) -> f64 {
        self.prices[i * self.dates.len() + t]
    }

    /// Replaces instrument metadata with the universe entries and re-sorts rows
    /// by `(sector_code, ticker)`.
    pub fn with_universe(self, universe: &[Instrument]) -> Result<Self> {
        let lookup: BTreeMap<&str, &Instrument> =
            universe.iter().map(|i| (i.ticker.as_str(), i)).collect();
        let t = self.dates.len();
        let mut rows: Vec<(Instrument, &[f64])> = Vec::with_capacity(self.instruments.len());
        for (i, inst) in self.instruments.iter().enumerate() {
            let meta = lookup
                .get(inst.ticker.as_str())
                .ok_or_else(|| Error::UnknownTicker(inst.ticker.clone()))?;
            rows.push(((*meta).clone(), &self.prices[i * t..(i + 1) * t]));
        }
        rows.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));
        let mut prices = Vec::with_capacity(self.prices.len());
        let mut instruments = Vec::with_capacity(rows.len());
        for (inst, row) in rows {
            prices.extend_from_slice(row);
            instruments.push(inst);
        }
        Ok(PriceTable {
            instruments,
            dates: self.dates,
            prices,
        })
    }

    /// Keeps only dates in `[start, end]`.
    pub fn restrict(&self, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let keep: Vec<usize> = (0..self.dates.len())
            .filter(|&t| self.dates[t] >= start && self.dates[t] <= end)
            .collect();
        if keep.is_empty() {
            return Err(Error::NoTradingDates);
        }
        let dates = keep.iter().map(|&t| self.dates[t]).collect();
        let prices = (0..self.instruments.len())
            .flat_map(|i| keep.iter().map(move |&t| (i, t)))
            .map(|(i, t)| self.price(i, t))
            .collect();
        PriceTable::new(self.instruments.clone(), dates, prices)
    }
}

pub(crate) fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    match dates.windows(2).position(|w| w[0] >= w[1]) {
        Some(pos) => Err(Error::NonIncreasingDates(pos + 1)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedTicker {
    pub ticker: String,
    pub missing_dates_count: usize,
    pub first_missing: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub table: PriceTable,
    pub dropped: Vec<DroppedTicker>,
}

/// Loads a long-format price CSV, restricted to `[start, end]`.
pub fn load_prices(path: &Path, start: NaiveDate, end: NaiveDate) -> Result<LoadedPrices> {
    let reader = open(path)?;
    read_prices(reader, start, end)
}

/// Loads a wide-format price CSV: header `date,<ticker>,<ticker>,...`, empty
/// cells mark missing quotes.
pub fn load_prices_wide(path: &Path, start: NaiveDate, end: NaiveDate) -> Result<LoadedPrices> {
    let reader = open(path)?;
    read_prices_wide(reader, start, end)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

type Quotes = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

pub fn read_prices<R: Read>(reader: R, start: NaiveDate, end: NaiveDate) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let expected = ["date", "ticker", "adj_close"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header date,ticker,adj_close, got {}", join(&headers)),
        });
    }
    let mut quotes: Quotes = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = line_of(&record);
        if record.len() != 3 {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let date = parse_date(&record[0], line)?;
        let ticker = &record[1];
        if ticker.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty ticker".into(),
            });
        }
        let price = parse_price(&record[2], ticker, line)?;
        if date < start || date > end {
            continue;
        }
        if quotes
            .entry(ticker.to_string())
            .or_default()
            .insert(date, price)
            .is_some()
        {
            return Err(Error::MalformedRow {
                line,
                message: format!("duplicate quote for {ticker} on {date}"),
            });
        }
    }
    assemble(quotes)
}

pub fn read_prices_wide<R: Read>(reader: R, start: NaiveDate, end: NaiveDate) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 || &headers[0] != "date" {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header date,<tickers...>, got {}", join(&headers)),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() || !seen.insert(t.as_str()) {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!("empty or duplicate ticker column {t:?}"),
            });
        }
    }
    let mut quotes: Quotes = tickers.iter().map(|t| (t.clone(), BTreeMap::new())).collect();
    let mut dates_seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = line_of(&record);
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let date = parse_date(&record[0], line)?;
        if !dates_seen.insert(date) {
            return Err(Error::MalformedRow {
                line,
                message: format!("duplicate date {date}"),
            });
        }
        if date < start || date > end {
            continue;
        }
        for (ticker, cell) in tickers.iter().zip(record.iter().skip(1)) {
            if cell.is_empty() {
                continue;
            }
            let price = parse_price(cell, ticker, line)?;
            quotes.get_mut(ticker).expect("column").insert(date, price);
        }
    }
    assemble(quotes)
}

fn assemble(quotes: Quotes) -> Result<LoadedPrices> {
    let calendar: BTreeSet<NaiveDate> = quotes.values().flat_map(|q| q.keys().copied()).collect();
    if calendar.is_empty() {
        return Err(Error::NoTradingDates);
    }
    let mut dropped = Vec::new();
    let mut survivors = Vec::new();
    for (ticker, series) in quotes {
        if series.len() == calendar.len() {
            survivors.push((ticker, series));
        } else {
            let first_missing = *calendar
                .iter()
                .find(|d| !series.contains_key(d))
                .expect("gap exists");
            dropped.push(DroppedTicker {
                ticker,
                missing_dates_count: calendar.len() - series.len(),
                first_missing,
            });
        }
    }
    if survivors.len() < 2 {
        return Err(Error::TooFewInstruments(survivors.len()));
    }
    if calendar.len() < 2 {
        return Err(Error::TooFewDates(calendar.len()));
    }
    let dates: Vec<NaiveDate> = calendar.into_iter().collect();
    let mut prices = Vec::with_capacity(survivors.len() * dates.len());
    let mut instruments = Vec::with_capacity(survivors.len());
    for (ticker, series) in survivors {
        prices.extend(series.into_values());
        instruments.push(Instrument::bare(ticker));
    }
    Ok(LoadedPrices {
        table: PriceTable::new(instruments, dates, prices)?,
        dropped,
    })
}

#[derive(Debug, Deserialize)]
struct UniverseRow {
    code: String,
    name: String,
    #[allow(dead_code)]
    sector: String,
    abbrv: String,
}

/// Loads a constituent list with header `code,name,sector,abbrv`.
pub fn load_universe(path: &Path) -> Result<Vec<Instrument>> {
    read_universe(open(path)?)
}

pub fn read_universe<R: Read>(reader: R) -> Result<Vec<Instrument>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.deserialize::<UniverseRow>() {
        let row = row.map_err(csv_err)?;
        if row.code.is_empty() {
            return Err(Error::InvalidParameter("empty ticker in universe".into()));
        }
        if row.abbrv.is_empty() || !is_known_sector(&row.abbrv) {
            return Err(Error::UnknownSector {
                ticker: row.code,
                sector: row.abbrv,
            });
        }
        if !seen.insert(row.code.clone()) {
            return Err(Error::DuplicateTicker(row.code));
        }
        out.push(Instrument {
            ticker: row.code,
            name: row.name,
            sector_code: Some(row.abbrv),
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    Ok(out)
}

/// Writes a table in the canonical long format. Prices use the shortest
/// representation that parses back to the same `f64`.
pub fn write_prices<W: Write>(table: &PriceTable, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "date,ticker,adj_close")?;
    for (t, date) in table.dates().iter().enumerate() {
        for (i, inst) in table.instruments().iter().enumerate() {
            writeln!(w, "{},{},{}", date.format("%Y-%m-%d"), inst.ticker, table.price(i, t))?;
        }
    }
    w.flush()
}

pub fn write_drop_report<W: Write>(dropped: &[DroppedTicker], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, dropped)?;
    Ok(())
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::MalformedRow {
        line,
        message: format!("bad date {s:?}: {e}"),
    })
}

fn parse_price(s: &str, ticker: &str, line: u64) -> Result<f64> {
    let value: f64 = s.parse().map_err(|_| Error::MalformedRow {
        line,
        message: format!("bad price {s:?}"),
    })?;
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidPrice {
            line,
            ticker: ticker.to_string(),
            value,
        });
    }
    Ok(value)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::MalformedRow {
        line,
        message: e.to_string(),
    }
}

fn join(r: &csv::StringRecord) -> String {
    r.iter().collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn full_range() -> (NaiveDate, NaiveDate) {
        (d("1900-01-01"), d("2100-01-01"))
    }

    const TOY: &str = "date,ticker,adj_close\n\
        2020-01-02,A,10\n2020-01-02,B,20\n2020-01-02,C,30\n\
        2020-01-03,A,11\n2020-01-03,B,21\n\
        2020-01-06,A,12\n2020-01-06,B,22\n2020-01-06,C,32\n";

    #[test]
    fn gap_ticker_is_dropped_and_reported() {
        let (s, e) = full_range();
        let out = read_prices(TOY.as_bytes(), s, e).unwrap();
        assert_eq!(out.table.n_instruments(), 2);
        assert_eq!(out.table.n_dates(), 3);
        assert_eq!(
            out.dropped,
            vec![DroppedTicker {
                ticker: "C".into(),
                missing_dates_count: 1,
                first_missing: d("2020-01-03"),
            }]
        );
        assert_eq!(out.table.series(1), &[20.0, 21.0, 22.0]);
    }

    #[test]
    fn date_range_filters_before_presence_check() {
        let out = read_prices(TOY.as_bytes(), d("2020-01-04"), d("2020-01-10"));
        // a single date remains
        assert!(matches!(out, Err(Error::TooFewDates(1))));
        let out = read_prices(TOY.as_bytes(), d("2021-01-01"), d("2021-12-31"));
        assert!(matches!(out, Err(Error::NoTradingDates)));
    }

    #[test]
    fn crlf_and_row_order_do_not_matter() {
        let (s, e) = full_range();
        let mut lines: Vec<&str> = TOY.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let shuffled = format!("{header}\r\n{}\r\n", lines.join("\r\n"));
        let a = read_prices(TOY.as_bytes(), s, e).unwrap();
        let b = read_prices(shuffled.as_bytes(), s, e).unwrap();
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn malformed_rows_report_line() {
        let (s, e) = full_range();
        let bad = "date,ticker,adj_close\n2020-01-02,A,10\n2020-13-02,B,20\n";
        match read_prices(bad.as_bytes(), s, e) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let neg = "date,ticker,adj_close\n2020-01-02,A,10\n2020-01-02,B,-1\n";
        assert!(matches!(
            read_prices(neg.as_bytes(), s, e),
            Err(Error::InvalidPrice { line: 3, .. })
        ));
        let nan = "date,ticker,adj_close\n2020-01-02,A,NaN\n";
        assert!(matches!(read_prices(nan.as_bytes(), s, e), Err(Error::InvalidPrice { .. })));
        let hdr = "day,ticker,close\n";
        assert!(matches!(read_prices(hdr.as_bytes(), s, e), Err(Error::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn single_survivor_is_an_error() {
        let (s, e) = full_range();
        let csv = "date,ticker,adj_close\n2020-01-02,A,10\n2020-01-03,A,11\n2020-01-02,B,5\n";
        assert!(matches!(read_prices(csv.as_bytes(), s, e), Err(Error::TooFewInstruments(1))));
    }

    #[test]
    fn wide_format_matches_long() {
        let (s, e) = full_range();
        let wide = "date,A,B,C\n2020-01-02,10,20,30\n2020-01-03,11,21,\n2020-01-06,12,22,32\n";
        let a = read_prices_wide(wide.as_bytes(), s, e).unwrap();
        let b = read_prices(TOY.as_bytes(), s, e).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.dropped, b.dropped);
    }

    #[test]
    fn universe_parsing() {
        let csv = "code,name,sector,abbrv\nAAP,Advance Auto Parts,Consumer Discretionary,CD\n";
        let u = read_universe(csv.as_bytes()).unwrap();
        assert_eq!(u[0].ticker, "AAP");
        assert_eq!(u[0].sector_code.as_deref(), Some("CD"));

        assert!(matches!(read_universe("code,name,sector,abbrv\n".as_bytes()), Err(Error::EmptyUniverse)));
        let err = read_universe("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty universe");

        let dup = "code,name,sector,abbrv\nX,x,Energy,EG\nX,x,Energy,EG\n";
        match read_universe(dup.as_bytes()) {
            Err(Error::DuplicateTicker(t)) => assert_eq!(t, "X"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "code,name,sector,abbrv\nX,x,Energy,ZZ\n";
        assert!(matches!(read_universe(bad.as_bytes()), Err(Error::UnknownSector { .. })));
        let empty = "code,name,sector,abbrv\nX,x,Energy,\n";
        assert!(matches!(read_universe(empty.as_bytes()), Err(Error::UnknownSector { .. })));
    }

    #[test]
    fn universe_orders_by_sector_then_ticker() {
        let (s, e) = full_range();
        let table = read_prices(TOY.as_bytes(), s, e).unwrap().table;
        let u = read_universe("code,name,sector,abbrv\nA,a,Utilities,UT\nB,b,Energy,EG\n".as_bytes()).unwrap();
        let t = table.with_universe(&u).unwrap();
        assert_eq!(t.instruments()[0].ticker, "B");
        assert_eq!(t.series(0), &[20.0, 21.0, 22.0]);

        let u = read_universe("code,name,sector,abbrv\nA,a,Utilities,UT\n".as_bytes()).unwrap();
        let table = read_prices(TOY.as_bytes(), s, e).unwrap().table;
        assert!(matches!(table.with_universe(&u), Err(Error::UnknownTicker(_))));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (s, e) = full_range();
        let dates = vec![d("2020-01-02"), d("2020-01-03")];
        let prices = vec![0.1 + 0.2, 1.0 / 3.0, 123456.789012345, f64::MIN_POSITIVE];
        let table = PriceTable::new(vec![Instrument::bare("A"), Instrument::bare("B")], dates, prices).unwrap();
        let mut buf = Vec::new();
        write_prices(&table, &mut buf).unwrap();
        let back = read_prices(buf.as_slice(), s, e).unwrap().table;
        assert_eq!(back, table);
    }

    #[test]
    fn drop_report_json_shape() {
        let dropped = vec![DroppedTicker {
            ticker: "C".into(),
            missing_dates_count: 2,
            first_missing: d("2020-01-03"),
        }];
        let mut buf = Vec::new();
        write_drop_report(&dropped, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v[0]["ticker"], "C");
        assert_eq!(v[0]["missing_dates_count"], 2);
        assert_eq!(v[0]["first_missing"], "2020-01-03");
    }
}
