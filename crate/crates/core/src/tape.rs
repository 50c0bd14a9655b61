//! Normalized trade/quote tape: record types, CSV parsing, and the merged
//! per-symbol event stream.
//!
//! Prices are stored as integer ten-thousandths of a dollar so that tick
//! comparisons are exact. Timestamps are integer milliseconds since midnight
//! on the session clock. Input files must be sorted by timestamp; the loader
//! validates this instead of assuming it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use arrayvec::ArrayString;
use flate2::read::GzDecoder;
use thiserror::Error;

/// Milliseconds since midnight on the session clock.
pub type Ms = i64;

/// One session day.
pub const MS_PER_DAY: Ms = 86_400_000;

/// Ticker symbol, stored inline (no heap) for throughput.
pub type Symbol = ArrayString<12>;

/// Opaque sale/quote condition code.
pub type ConditionCode = ArrayString<8>;

/// Fixed-point price in ten-thousandths of a dollar.
///
/// `Price(1_213_500)` is $121.3500. All tick-direction and threshold
/// comparisons are done on the integer representation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Price(pub i64);

impl Price {
    pub const SCALE: i64 = 10_000;
    pub const ZERO: Price = Price(0);

    /// Nearest fixed-point price to a dollar amount.
    pub fn from_dollars(dollars: f64) -> Price {
        Price((dollars * Self::SCALE as f64).round() as i64)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl fmt::Display for Price {
    /// Canonical form: four decimal places, e.g. `121.3500`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:04}", abs / 10_000, abs % 10_000)
    }
}

impl fmt::Debug for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Price({self})")
    }
}

impl FromStr for Price {
    type Err = ParseError;

    /// Exact fixed-point parse: an optional sign, an integer part, and at
    /// most four fractional digits. More precision than the tape carries is
    /// rejected rather than rounded.
    fn from_str(s: &str) -> Result<Price, ParseError> {
        let bytes = s.as_bytes();
        if bytes.is_empty() {
            return Err(ParseError::malformed("empty price"));
        }
        let (neg, rest) = match bytes[0] {
            b'-' => (true, &bytes[1..]),
            b'+' => (false, &bytes[1..]),
            _ => (false, bytes),
        };
        let mut int_part: i64 = 0;
        let mut frac_part: i64 = 0;
        let mut frac_digits = 0usize;
        let mut seen_dot = false;
        let mut seen_digit = false;
        for &b in rest {
            match b {
                b'0'..=b'9' => {
                    seen_digit = true;
                    let d = (b - b'0') as i64;
                    if seen_dot {
                        if frac_digits == 4 {
                            return Err(ParseError::malformed(format!(
                                "price `{s}` has more than 4 decimal places"
                            )));
                        }
                        frac_part = frac_part * 10 + d;
                        frac_digits += 1;
                    } else {
                        int_part = int_part
                            .checked_mul(10)
                            .and_then(|v| v.checked_add(d))
                            .ok_or_else(|| ParseError::malformed(format!("price `{s}` overflows")))?;
                    }
                }
                b'.' if !seen_dot => seen_dot = true,
                _ => return Err(ParseError::malformed(format!("invalid price `{s}`"))),
            }
        }
        if !seen_digit {
            return Err(ParseError::malformed(format!("invalid price `{s}`")));
        }
        for _ in frac_digits..4 {
            frac_part *= 10;
        }
        let magnitude = int_part
            .checked_mul(Price::SCALE)
            .and_then(|v| v.checked_add(frac_part))
            .ok_or_else(|| ParseError::malformed(format!("price `{s}` overflows")))?;
        Ok(Price(if neg { -magnitude } else { magnitude }))
    }
}

/// Exchange venue with the numeric code used as the `Exch` regressor.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
#[repr(u8)]
pub enum ExchangeId {
    Other = 0,
    Nyse = 1,
    Nasdaq = 2,
    Arca = 3,
    Amex = 4,
    Bats = 5,
    Ise = 6,
}

impl ExchangeId {
    pub const ALL: [ExchangeId; 7] = [
        ExchangeId::Other,
        ExchangeId::Nyse,
        ExchangeId::Nasdaq,
        ExchangeId::Arca,
        ExchangeId::Amex,
        ExchangeId::Bats,
        ExchangeId::Ise,
    ];

    /// Case-insensitive venue lookup; unknown names map to `Other`.
    pub fn from_name(name: &str) -> ExchangeId {
        match name.as_bytes().first().map(|b| b.to_ascii_uppercase()) {
            Some(b'N') => {
                if name.eq_ignore_ascii_case("NYSE") {
                    ExchangeId::Nyse
                } else if name.eq_ignore_ascii_case("NASDAQ") {
                    ExchangeId::Nasdaq
                } else {
                    ExchangeId::Other
                }
            }
            Some(b'A') => {
                if name.eq_ignore_ascii_case("ARCA") {
                    ExchangeId::Arca
                } else if name.eq_ignore_ascii_case("AMEX") {
                    ExchangeId::Amex
                } else {
                    ExchangeId::Other
                }
            }
            Some(b'B') if name.eq_ignore_ascii_case("BATS") => ExchangeId::Bats,
            Some(b'I') if name.eq_ignore_ascii_case("ISE") => ExchangeId::Ise,
            _ => ExchangeId::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExchangeId::Nyse => "NYSE",
            ExchangeId::Nasdaq => "NASDAQ",
            ExchangeId::Arca => "ARCA",
            ExchangeId::Amex => "AMEX",
            ExchangeId::Bats => "BATS",
            ExchangeId::Ise => "ISE",
            ExchangeId::Other => "OTHER",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ExchangeId> {
        ExchangeId::ALL.iter().copied().find(|e| e.code() == code)
    }

    /// Dense index for per-venue arrays.
    pub fn index(self) -> usize {
        self as usize
    }
}

/// A trade print.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TradeRecord {
    /// Position in the merged stream; 0 for standalone parses.
    pub seq: u64,
    pub ts: Ms,
    pub symbol: Symbol,
    pub exchange: ExchangeId,
    pub price: Price,
    pub size: u32,
    /// Sale condition contains "F".
    pub is_iso: bool,
    pub condition: ConditionCode,
}

/// A top-of-book quote from one exchange. A side with size 0 is absent.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct QuoteRecord {
    pub seq: u64,
    pub ts: Ms,
    pub symbol: Symbol,
    pub exchange: ExchangeId,
    pub bid: Price,
    pub bid_size: u32,
    pub offer: Price,
    pub offer_size: u32,
}

impl QuoteRecord {
    pub fn bid_quote(&self) -> Option<(Price, u32)> {
        (self.bid_size > 0).then_some((self.bid, self.bid_size))
    }

    pub fn offer_quote(&self) -> Option<(Price, u32)> {
        (self.offer_size > 0).then_some((self.offer, self.offer_size))
    }

    /// Raw feeds occasionally publish a book that crosses itself; such
    /// records are kept but counted by the loader.
    pub fn is_self_crossed(&self) -> bool {
        self.bid_size > 0 && self.offer_size > 0 && self.bid > self.offer
    }
}

/// A tagged event in the merged per-symbol stream.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TapeEvent {
    Trade(TradeRecord),
    Quote(QuoteRecord),
}

impl TapeEvent {
    pub fn ts(&self) -> Ms {
        match self {
            TapeEvent::Trade(t) => t.ts,
            TapeEvent::Quote(q) => q.ts,
        }
    }

    pub fn seq(&self) -> u64 {
        match self {
            TapeEvent::Trade(t) => t.seq,
            TapeEvent::Quote(q) => q.seq,
        }
    }

    pub fn symbol(&self) -> &Symbol {
        match self {
            TapeEvent::Trade(t) => &t.symbol,
            TapeEvent::Quote(q) => &q.symbol,
        }
    }
}

/// Time-ordered trade/quote events for one symbol.
///
/// Ordering key is `(ts, seq)`; `seq` preserves input order with trades
/// sorted ahead of quotes at the same instant.
#[derive(Clone, Debug, Default)]
pub struct EventStream {
    pub symbol: Symbol,
    pub events: Vec<TapeEvent>,
}

impl EventStream {
    pub fn trades(&self) -> impl Iterator<Item = &TradeRecord> {
        self.events.iter().filter_map(|e| match e {
            TapeEvent::Trade(t) => Some(t),
            TapeEvent::Quote(_) => None,
        })
    }

    pub fn quotes(&self) -> impl Iterator<Item = &QuoteRecord> {
        self.events.iter().filter_map(|e| match e {
            TapeEvent::Quote(q) => Some(q),
            TapeEvent::Trade(_) => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("domain error: {0}")]
    Domain(String),
}

impl ParseError {
    fn malformed(msg: impl Into<String>) -> ParseError {
        ParseError::Malformed(msg.into())
    }

    fn domain(msg: impl Into<String>) -> ParseError {
        ParseError::Domain(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{path} line {line}: {source}")]
    BadRecord {
        path: String,
        line: u64,
        source: ParseError,
    },
    #[error("{path}: unsorted input at line {line}: ts {ts} after {prev}")]
    UnsortedInput {
        path: String,
        line: u64,
        ts: Ms,
        prev: Ms,
    },
    #[error("{path}: {rejected} of {total} records rejected, above the {max_rate:.2}% threshold")]
    RejectRateExceeded {
        path: String,
        rejected: u64,
        total: u64,
        max_rate: f64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn symbol_from(field: &str) -> Result<Symbol, ParseError> {
    if field.is_empty() {
        return Err(ParseError::malformed("empty symbol"));
    }
    Symbol::from(field).map_err(|_| {
        ParseError::malformed(format!("symbol `{field}` longer than {} chars", Symbol::new().capacity()))
    })
}

fn ts_from(field: &str) -> Result<Ms, ParseError> {
    let ts: Ms = field
        .parse()
        .map_err(|_| ParseError::malformed(format!("invalid timestamp `{field}`")))?;
    if !(0..MS_PER_DAY).contains(&ts) {
        return Err(ParseError::domain(format!("timestamp {ts} outside 0..{MS_PER_DAY}")));
    }
    Ok(ts)
}

fn size_from(field: &str) -> Result<u32, ParseError> {
    field
        .parse()
        .map_err(|_| ParseError::malformed(format!("invalid size `{field}`")))
}

/// Parse one line of the trade CSV: `ts_ms,symbol,exchange,price,size,condition`.
pub fn parse_trade_line(line: &str) -> Result<TradeRecord, ParseError> {
    let mut fields = line.trim_end_matches(['\r', '\n']).split(',');
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| ParseError::malformed(format!("missing field `{name}`")))
    };
    let ts = ts_from(next("ts_ms")?)?;
    let symbol = symbol_from(next("symbol")?)?;
    let exchange = ExchangeId::from_name(next("exchange")?);
    let price: Price = next("price")?.parse()?;
    let size = size_from(next("size")?)?;
    let condition_field = next("condition")?;
    let condition = ConditionCode::from(condition_field).map_err(|_| {
        ParseError::malformed(format!("condition `{condition_field}` too long"))
    })?;
    if fields.next().is_some() {
        return Err(ParseError::malformed("too many fields for a trade record"));
    }
    if !price.is_positive() {
        return Err(ParseError::domain(format!("trade price {price} not positive")));
    }
    if size == 0 {
        return Err(ParseError::domain("trade size is zero"));
    }
    Ok(TradeRecord {
        seq: 0,
        ts,
        symbol,
        exchange,
        price,
        size,
        is_iso: condition.contains('F'),
        condition,
    })
}

/// Parse one line of the quote CSV:
/// `ts_ms,symbol,exchange,bid,bid_size,offer,offer_size`.
pub fn parse_quote_line(line: &str) -> Result<QuoteRecord, ParseError> {
    let mut fields = line.trim_end_matches(['\r', '\n']).split(',');
    let mut next = |name: &str| {
        fields
            .next()
            .ok_or_else(|| ParseError::malformed(format!("missing field `{name}`")))
    };
    let ts = ts_from(next("ts_ms")?)?;
    let symbol = symbol_from(next("symbol")?)?;
    let exchange = ExchangeId::from_name(next("exchange")?);
    let bid: Price = next("bid")?.parse()?;
    let bid_size = size_from(next("bid_size")?)?;
    let offer: Price = next("offer")?.parse()?;
    let offer_size = size_from(next("offer_size")?)?;
    if fields.next().is_some() {
        return Err(ParseError::malformed("too many fields for a quote record"));
    }
    if bid.0 < 0 || offer.0 < 0 {
        return Err(ParseError::domain("negative quote price"));
    }
    Ok(QuoteRecord {
        seq: 0,
        ts,
        symbol,
        exchange,
        bid,
        bid_size,
        offer,
        offer_size,
    })
}

/// Canonical CSV form of a trade record.
pub fn format_trade_line(t: &TradeRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        t.ts,
        t.symbol,
        t.exchange.name(),
        t.price,
        t.size,
        t.condition
    )
}

/// Canonical CSV form of a quote record.
pub fn format_quote_line(q: &QuoteRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        q.ts,
        q.symbol,
        q.exchange.name(),
        q.bid,
        q.bid_size,
        q.offer,
        q.offer_size
    )
}

/// Filters and limits applied while loading tape files.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Keep only these symbols; `None` keeps all.
    pub symbols: Option<Vec<Symbol>>,
    pub from_ms: Option<Ms>,
    pub to_ms: Option<Ms>,
    /// Malformed records are skipped until they exceed this fraction of the
    /// file, at which point loading fails.
    pub max_reject_rate: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            symbols: None,
            from_ms: None,
            to_ms: None,
            max_reject_rate: 0.01,
        }
    }
}

impl LoadOptions {
    fn keeps(&self, symbol: &Symbol, ts: Ms) -> bool {
        if let Some(from) = self.from_ms {
            if ts < from {
                return false;
            }
        }
        if let Some(to) = self.to_ms {
            if ts >= to {
                return false;
            }
        }
        match &self.symbols {
            Some(list) => list.iter().any(|s| s == symbol),
            None => true,
        }
    }
}

/// Counts reported by [`load_merged_stream`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub trades_read: u64,
    pub trades_kept: u64,
    pub trades_rejected: u64,
    pub quotes_read: u64,
    pub quotes_kept: u64,
    pub quotes_rejected: u64,
    /// Quote records whose own book was crossed (bid > offer, both sides
    /// present). Kept, but flagged.
    pub crossed_quote_warnings: u64,
}

/// Per-symbol merged streams plus load statistics.
#[derive(Clone, Debug, Default)]
pub struct LoadedTape {
    pub streams: BTreeMap<Symbol, EventStream>,
    pub summary: LoadSummary,
}

impl LoadedTape {
    /// Build a tape directly from in-memory records (simulator output,
    /// fixtures). Records must be sorted by ts per source; ties put trades
    /// ahead of quotes, matching the file loader.
    pub fn from_records(trades: &[TradeRecord], quotes: &[QuoteRecord]) -> LoadedTape {
        let mut tape = LoadedTape {
            summary: LoadSummary {
                trades_read: trades.len() as u64,
                trades_kept: trades.len() as u64,
                quotes_read: quotes.len() as u64,
                quotes_kept: quotes.len() as u64,
                ..LoadSummary::default()
            },
            ..LoadedTape::default()
        };
        let mut seq = 0u64;
        let (mut ti, mut qi) = (0usize, 0usize);
        while ti < trades.len() || qi < quotes.len() {
            let take_trade = match (trades.get(ti), quotes.get(qi)) {
                (Some(t), Some(q)) => t.ts <= q.ts,
                (Some(_), None) => true,
                (None, _) => false,
            };
            let event = if take_trade {
                let mut t = trades[ti];
                ti += 1;
                t.seq = seq;
                TapeEvent::Trade(t)
            } else {
                let mut q = quotes[qi];
                qi += 1;
                if q.is_self_crossed() {
                    tape.summary.crossed_quote_warnings += 1;
                }
                q.seq = seq;
                TapeEvent::Quote(q)
            };
            seq += 1;
            tape.streams
                .entry(*event.symbol())
                .or_insert_with(|| EventStream {
                    symbol: *event.symbol(),
                    events: Vec::new(),
                })
                .events
                .push(event);
        }
        tape
    }

    pub fn total_events(&self) -> usize {
        self.streams.values().map(|s| s.events.len()).sum()
    }
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>, TapeError> {
    let file = File::open(path).map_err(|source| TapeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

struct FileScan<R> {
    records: Vec<R>,
    read: u64,
    kept: u64,
    rejected: u64,
    crossed: u64,
}

fn scan_file<R, F>(
    path: &Path,
    opts: &LoadOptions,
    mut parse: F,
) -> Result<FileScan<R>, TapeError>
where
    F: FnMut(&str) -> Result<(R, Symbol, Ms, bool), ParseError>,
{
    let reader = open_reader(path)?;
    let path_str = path.display().to_string();
    let mut scan = FileScan {
        records: Vec::new(),
        read: 0,
        kept: 0,
        rejected: 0,
        crossed: 0,
    };
    let mut prev_ts: Option<Ms> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|source| TapeError::Io {
            path: path_str.clone(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        scan.read += 1;
        match parse(&line) {
            Ok((record, symbol, ts, crossed)) => {
                // Sortedness is validated on everything parsed, including
                // records the filters will drop.
                if let Some(prev) = prev_ts {
                    if ts < prev {
                        return Err(TapeError::UnsortedInput {
                            path: path_str,
                            line: line_no,
                            ts,
                            prev,
                        });
                    }
                }
                prev_ts = Some(ts);
                if opts.keeps(&symbol, ts) {
                    if crossed {
                        scan.crossed += 1;
                    }
                    scan.kept += 1;
                    scan.records.push(record);
                }
            }
            Err(err) => {
                scan.rejected += 1;
                log::debug!("{path_str} line {line_no}: skipped: {err}");
            }
        }
    }
    if scan.read > 0 && scan.rejected as f64 > opts.max_reject_rate * scan.read as f64 {
        return Err(TapeError::RejectRateExceeded {
            path: path_str,
            rejected: scan.rejected,
            total: scan.read,
            max_rate: opts.max_reject_rate * 100.0,
        });
    }
    Ok(scan)
}

/// Load a trade file and a quote file, validate per-file ordering, and merge
/// them into per-symbol streams ordered by `(ts, input order)` with trades
/// ahead of quotes at the same instant.
///
/// Files ending in `.gz` are read through gzip. Malformed records are counted
/// and skipped up to `max_reject_rate`.
pub fn load_merged_stream(
    trades_path: &Path,
    quotes_path: &Path,
    opts: &LoadOptions,
) -> Result<LoadedTape, TapeError> {
    let trades = scan_file(trades_path, opts, |line| {
        parse_trade_line(line).map(|t| (t, t.symbol, t.ts, false))
    })?;
    let quotes = scan_file(quotes_path, opts, |line| {
        parse_quote_line(line).map(|q| (q, q.symbol, q.ts, q.is_self_crossed()))
    })?;

    let mut tape = LoadedTape::from_records(&trades.records, &quotes.records);
    tape.summary = LoadSummary {
        trades_read: trades.read,
        trades_kept: trades.kept,
        trades_rejected: trades.rejected,
        quotes_read: quotes.read,
        quotes_kept: quotes.kept,
        quotes_rejected: quotes.rejected,
        crossed_quote_warnings: quotes.crossed,
    };
    Ok(tape)
}

/// Write records out in canonical CSV form (used by the simulator and tests).
pub fn write_trades(path: &Path, trades: &[TradeRecord]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for t in trades {
        writeln!(out, "{}", format_trade_line(t))?;
    }
    out.flush()
}

/// Quote-side counterpart of [`write_trades`].
pub fn write_quotes(path: &Path, quotes: &[QuoteRecord]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for q in quotes {
        writeln!(out, "{}", format_quote_line(q))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_iso_trade() {
        let t = parse_trade_line("34200000,GS,NYSE,121.3500,500,F").unwrap();
        assert_eq!(t.ts, 34_200_000);
        assert_eq!(t.symbol.as_str(), "GS");
        assert_eq!(t.exchange, ExchangeId::Nyse);
        assert_eq!(t.price, Price(1_213_500));
        assert_eq!(t.size, 500);
        assert!(t.is_iso);
    }

    #[test]
    fn non_f_condition_is_not_iso() {
        let t = parse_trade_line("34200000,GS,NYSE,121.3500,500,@").unwrap();
        assert!(!t.is_iso);
        // "F" anywhere in the condition string marks an ISO.
        let t = parse_trade_line("34200000,GS,NYSE,121.3500,500,@F").unwrap();
        assert!(t.is_iso);
    }

    #[test]
    fn negative_price_is_domain_error() {
        let err = parse_trade_line("34200000,GS,NYSE,-1.00,500,F").unwrap_err();
        assert!(matches!(err, ParseError::Domain(_)), "{err}");
    }

    #[test]
    fn zero_size_is_domain_error() {
        let err = parse_trade_line("34200000,GS,NYSE,1.00,0,F").unwrap_err();
        assert!(matches!(err, ParseError::Domain(_)));
    }

    #[test]
    fn timestamp_outside_session_rejected() {
        assert!(parse_trade_line("86400000,GS,NYSE,1.00,10,@").is_err());
        assert!(parse_trade_line("-1,GS,NYSE,1.00,10,@").is_err());
        assert!(parse_trade_line("86399999,GS,NYSE,1.00,10,@").is_ok());
    }

    #[test]
    fn parses_quote() {
        let q = parse_quote_line("34200000,GS,ARCA,121.30,300,121.40,200").unwrap();
        assert_eq!(q.bid, Price(1_213_000));
        assert_eq!(q.bid_quote(), Some((Price(1_213_000), 300)));
        assert_eq!(q.offer_quote(), Some((Price(1_214_000), 200)));
    }

    #[test]
    fn zero_size_side_is_absent() {
        let q = parse_quote_line("34200000,GS,ARCA,0,0,121.40,200").unwrap();
        assert_eq!(q.bid_quote(), None);
        assert!(q.offer_quote().is_some());
    }

    #[test]
    fn wrong_arity_is_malformed() {
        let err = parse_quote_line("34200000,GS,ARCA,121.30,300").unwrap_err();
        assert!(matches!(err, ParseError::Malformed(_)));
        let err = parse_trade_line("34200000,GS,NYSE,121.35,500,F,extra").unwrap_err();
        assert!(matches!(err, ParseError::Malformed(_)));
    }

    #[test]
    fn exchange_names_case_insensitive_unknown_to_other() {
        assert_eq!(ExchangeId::from_name("nyse"), ExchangeId::Nyse);
        assert_eq!(ExchangeId::from_name("Nasdaq"), ExchangeId::Nasdaq);
        assert_eq!(ExchangeId::from_name("arca"), ExchangeId::Arca);
        assert_eq!(ExchangeId::from_name("EDGX"), ExchangeId::Other);
        assert_eq!(ExchangeId::from_name(""), ExchangeId::Other);
    }

    #[test]
    fn exchange_codes_match_regressor_encoding() {
        assert_eq!(ExchangeId::Nyse.code(), 1);
        assert_eq!(ExchangeId::Nasdaq.code(), 2);
        assert_eq!(ExchangeId::Arca.code(), 3);
        assert_eq!(ExchangeId::Amex.code(), 4);
        assert_eq!(ExchangeId::Bats.code(), 5);
        assert_eq!(ExchangeId::Ise.code(), 6);
        assert_eq!(ExchangeId::Other.code(), 0);
    }

    #[test]
    fn price_parse_is_exact_fixed_point() {
        assert_eq!("121.3500".parse::<Price>().unwrap(), Price(1_213_500));
        assert_eq!("121.35".parse::<Price>().unwrap(), Price(1_213_500));
        assert_eq!("0.0002".parse::<Price>().unwrap(), Price(2));
        assert_eq!("7".parse::<Price>().unwrap(), Price(70_000));
        assert!("1.23456".parse::<Price>().is_err());
        assert!("".parse::<Price>().is_err());
        assert!("1.2.3".parse::<Price>().is_err());
        assert_eq!(Price(1_213_500).to_string(), "121.3500");
        assert_eq!(Price(2).to_string(), "0.0002");
    }

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn merges_interleaved_files_in_ts_order() {
        let dir = tempfile::tempdir().unwrap();
        let trades = write_lines(
            dir.path(),
            "t.csv",
            &[
                "100,GS,NYSE,10.00,10,@",
                "300,GS,NYSE,10.01,10,@",
                "500,GS,NYSE,10.02,10,@",
            ],
        );
        let quotes = write_lines(
            dir.path(),
            "q.csv",
            &[
                "100,GS,NYSE,9.99,5,10.01,5",
                "200,GS,NYSE,9.99,5,10.02,5",
                "600,GS,NYSE,10.00,5,10.03,5",
            ],
        );
        let tape = load_merged_stream(&trades, &quotes, &LoadOptions::default()).unwrap();
        let stream = &tape.streams[&Symbol::from("GS").unwrap()];
        assert_eq!(stream.events.len(), 6);
        let ts: Vec<Ms> = stream.events.iter().map(|e| e.ts()).collect();
        assert_eq!(ts, vec![100, 100, 200, 300, 500, 600]);
        // Trade sorts ahead of the quote at ts=100.
        assert!(matches!(stream.events[0], TapeEvent::Trade(_)));
        assert!(matches!(stream.events[1], TapeEvent::Quote(_)));
        let seq: Vec<u64> = stream.events.iter().map(|e| e.seq()).collect();
        assert_eq!(seq, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn empty_quote_file_yields_trades_only() {
        let dir = tempfile::tempdir().unwrap();
        let trades = write_lines(dir.path(), "t.csv", &["100,GS,NYSE,10.00,10,@"]);
        let quotes = write_lines(dir.path(), "q.csv", &[]);
        let tape = load_merged_stream(&trades, &quotes, &LoadOptions::default()).unwrap();
        assert_eq!(tape.summary.quotes_read, 0);
        assert_eq!(tape.total_events(), 1);
    }

    #[test]
    fn ts_regression_is_unsorted_input() {
        let dir = tempfile::tempdir().unwrap();
        let trades = write_lines(
            dir.path(),
            "t.csv",
            &["300,GS,NYSE,10.00,10,@", "100,GS,NYSE,10.00,10,@"],
        );
        let quotes = write_lines(dir.path(), "q.csv", &[]);
        let err = load_merged_stream(&trades, &quotes, &LoadOptions::default()).unwrap_err();
        match err {
            TapeError::UnsortedInput { line, ts, prev, .. } => {
                assert_eq!(line, 2);
                assert_eq!(ts, 100);
                assert_eq!(prev, 300);
            }
            other => panic!("expected UnsortedInput, got {other}"),
        }
    }

    #[test]
    fn reject_rate_threshold_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let mut lines: Vec<String> = (0..98)
            .map(|i| format!("{},GS,NYSE,10.00,10,@", 100 + i))
            .collect();
        lines.push("bogus".to_string());
        lines.push("also bogus".to_string());
        let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
        let trades = write_lines(dir.path(), "t.csv", &refs);
        let quotes = write_lines(dir.path(), "q.csv", &[]);
        // 2% rejects > default 1% threshold.
        let err = load_merged_stream(&trades, &quotes, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, TapeError::RejectRateExceeded { rejected: 2, .. }));
        // A looser threshold loads and reports the counts.
        let opts = LoadOptions {
            max_reject_rate: 0.05,
            ..LoadOptions::default()
        };
        let tape = load_merged_stream(&trades, &quotes, &opts).unwrap();
        assert_eq!(tape.summary.trades_read, 100);
        assert_eq!(tape.summary.trades_kept, 98);
        assert_eq!(tape.summary.trades_rejected, 2);
    }

    #[test]
    fn filters_by_symbol_and_time() {
        let dir = tempfile::tempdir().unwrap();
        let trades = write_lines(
            dir.path(),
            "t.csv",
            &[
                "100,GS,NYSE,10.00,10,@",
                "200,IBM,NYSE,10.00,10,@",
                "900,GS,NYSE,10.00,10,@",
            ],
        );
        let quotes = write_lines(dir.path(), "q.csv", &[]);
        let opts = LoadOptions {
            symbols: Some(vec![Symbol::from("GS").unwrap()]),
            from_ms: Some(0),
            to_ms: Some(500),
            ..LoadOptions::default()
        };
        let tape = load_merged_stream(&trades, &quotes, &opts).unwrap();
        assert_eq!(tape.summary.trades_kept, 1);
        assert_eq!(tape.total_events(), 1);
    }

    #[test]
    fn gzip_input_accepted() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let gz_path = dir.path().join("t.csv.gz");
        let mut enc = flate2::write::GzEncoder::new(
            File::create(&gz_path).unwrap(),
            flate2::Compression::default(),
        );
        enc.write_all(b"100,GS,NYSE,10.00,10,@\n").unwrap();
        enc.finish().unwrap();
        let quotes = write_lines(dir.path(), "q.csv", &[]);
        let tape = load_merged_stream(&gz_path, &quotes, &LoadOptions::default()).unwrap();
        assert_eq!(tape.summary.trades_kept, 1);
    }

    #[test]
    fn crossed_quote_counted_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let trades = write_lines(dir.path(), "t.csv", &[]);
        let quotes = write_lines(dir.path(), "q.csv", &["100,GS,NYSE,10.05,5,10.00,5"]);
        let tape = load_merged_stream(&trades, &quotes, &LoadOptions::default()).unwrap();
        assert_eq!(tape.summary.crossed_quote_warnings, 1);
        assert_eq!(tape.summary.quotes_kept, 1);
    }
}
