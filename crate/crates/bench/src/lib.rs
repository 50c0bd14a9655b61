//! Shared event generators for the benchmarks.

use flashfx_core::tape::{ConditionCode, ExchangeId, Ms, Price, QuoteRecord, Symbol, TapeEvent, TradeRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixed quote/trade stream resembling consolidated-feed traffic: mostly
/// quote updates across two venues with a slowly walking price.
pub fn synthetic_events(seed: u64, n: usize) -> Vec<TapeEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = Symbol::from("BENCH").unwrap();
    let mut ts: Ms = 0;
    let mut price: i64 = 1_000_000;
    let mut out = Vec::with_capacity(n);
    for seq in 0..n as u64 {
        ts += rng.random_range(0..4);
        let venue = if rng.random_bool(0.5) {
            ExchangeId::Nyse
        } else {
            ExchangeId::Arca
        };
        if rng.random_range(0..16u32) == 0 {
            price = (price + rng.random_range(-20i64..=20)).max(10_000);
            out.push(TapeEvent::Trade(TradeRecord {
                seq,
                ts,
                symbol: sym,
                exchange: venue,
                price: Price(price),
                size: 100,
                is_iso: rng.random_bool(0.3),
                condition: ConditionCode::new(),
            }));
        } else {
            let mid = price + rng.random_range(-100i64..=100);
            out.push(TapeEvent::Quote(QuoteRecord {
                seq,
                ts,
                symbol: sym,
                exchange: venue,
                bid: Price(mid - 50),
                bid_size: rng.random_range(1..900),
                offer: Price(mid + 50),
                offer_size: rng.random_range(1..900),
            }));
        }
    }
    out
}

/// Raw CSV lines for the parser benchmark.
pub fn trade_lines(seed: u64, n: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let price = 1_000_000 + rng.random_range(-50_000i64..50_000);
            format!(
                "{},BENCH,NYSE,{}.{:04},{},{}",
                34_200_000 + i as i64,
                price / 10_000,
                price % 10_000,
                rng.random_range(1..5_000u32),
                if rng.random_bool(0.3) { "F" } else { "@" },
            )
        })
        .collect()
}
