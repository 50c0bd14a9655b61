//! Hand-built demonstration tapes with known properties.

use crate::tape::{ConditionCode, ExchangeId, Ms, Price, QuoteRecord, Symbol, TradeRecord};

/// A canned ISO-heavy down-crash replay: 58 trades on one venue, the last
/// 57 marked ISO, 86,000 shares in total, dropping the price $1.89 from
/// $121.35 within 342 ms, followed by an immediate partial recovery.
///
/// The quote tape provides a stable two-venue book for the preceding second
/// (best bid 121.34, best offer 121.35) and a refresh afterwards, so the
/// crash classifies as ISO-initiated with a one-trade exception prefix (the
/// opening regular-marked print at the offer).
pub struct ReplayTape {
    pub trades: Vec<TradeRecord>,
    pub quotes: Vec<QuoteRecord>,
    pub symbol: Symbol,
    pub exchange: ExchangeId,
    pub crash_start_ts: Ms,
}

/// Build the replay tape. Deterministic; no randomness involved.
pub fn iso_down_crash_replay() -> ReplayTape {
    let symbol = Symbol::from("GS").unwrap();
    let venue = ExchangeId::Nyse;
    let away = ExchangeId::Arca;
    let cond_regular = ConditionCode::from("@").unwrap();
    let cond_iso = ConditionCode::from("F").unwrap();
    let start: Ms = 34_200_000; // 09:30:00

    let mut quotes = Vec::new();
    let mut quote = |ts: Ms, exch: ExchangeId, bid: i64, bs: u32, offer: i64, os: u32| {
        quotes.push(QuoteRecord {
            seq: 0,
            ts,
            symbol,
            exchange: exch,
            bid: Price(bid),
            bid_size: bs,
            offer: Price(offer),
            offer_size: os,
        });
    };
    // One second of stable pre-crash book.
    quote(start - 1000, venue, 1_213_400, 300, 1_213_500, 200);
    quote(start - 1000, away, 1_213_300, 400, 1_213_600, 300);
    quote(start - 500, venue, 1_213_400, 300, 1_213_500, 200);
    quote(start - 250, away, 1_213_300, 400, 1_213_600, 300);
    // Post-crash requote: wide, then recovering.
    quote(start + 400, venue, 1_212_000, 200, 1_214_000, 200);
    quote(start + 900, away, 1_213_000, 300, 1_214_000, 300);
    quote(start + 2000, venue, 1_213_300, 300, 1_213_500, 200);

    let mut trades = Vec::new();
    // Opening print: regular-marked buy at the displayed offer.
    trades.push(TradeRecord {
        seq: 0,
        ts: start,
        symbol,
        exchange: venue,
        price: Price(1_213_500),
        size: 500,
        is_iso: false,
        condition: cond_regular,
    });
    // 57 ISO prints walking the book down $1.89 in total: 24 steps of
    // $0.0375 then 33 steps of $0.0300 (24*375 + 33*300 = 18,900).
    let mut price = 1_213_500i64;
    for k in 1..=57u32 {
        price -= if k <= 24 { 375 } else { 300 };
        trades.push(TradeRecord {
            seq: 0,
            ts: start + 6 * k as Ms,
            symbol,
            exchange: venue,
            price: Price(price),
            size: 1500,
            is_iso: true,
            condition: cond_iso,
        });
    }
    debug_assert_eq!(price, 1_213_500 - 18_900);
    debug_assert_eq!(
        trades.iter().map(|t| t.size as u64).sum::<u64>(),
        86_000
    );
    // Recovery print closes the run.
    trades.push(TradeRecord {
        seq: 0,
        ts: start + 600,
        symbol,
        exchange: venue,
        price: Price(1_205_000),
        size: 100,
        is_iso: false,
        condition: cond_regular,
    });

    ReplayTape {
        trades,
        quotes,
        symbol,
        exchange: venue,
        crash_start_ts: start,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_crashes, DetectorConfig, Direction};

    #[test]
    fn replay_has_expected_shape() {
        let tape = iso_down_crash_replay();
        assert_eq!(tape.trades.len(), 59);
        let crash_trades = &tape.trades[..58];
        assert_eq!(crash_trades.iter().filter(|t| t.is_iso).count(), 57);
        assert_eq!(crash_trades.iter().map(|t| t.size as u64).sum::<u64>(), 86_000);
        let drop = crash_trades[0].price.0 - crash_trades[57].price.0;
        assert_eq!(drop, 18_900); // $1.89
        assert!(crash_trades[57].ts - crash_trades[0].ts < 400);
    }

    #[test]
    fn replay_detects_exactly_one_down_crash() {
        let tape = iso_down_crash_replay();
        let crashes = detect_crashes(&tape.trades, DetectorConfig::default());
        assert_eq!(crashes.len(), 1);
        let c = &crashes[0];
        assert_eq!(c.direction, Direction::Down);
        assert_eq!(c.n_trades, 58);
        assert!(!c.truncated);
        assert!((c.iso_fraction - 57.0 / 58.0).abs() < 1e-12);
        assert!(c.pct_change > -1.7 && c.pct_change < -1.5, "{}", c.pct_change);
    }
}
