//! Reference implementations used by the verification suites.
//!
//! These deliberately share no code with the streaming paths they check:
//! crash detection is re-done by enumerating every contiguous trade window,
//! and the NBBO is recomputed from scratch from the latest quote per venue.
//! They are exact but slow, and exist so the fast paths can be tested by
//! differential comparison.

use std::collections::BTreeMap;

use crate::detect::{Direction, DetectorConfig};
use crate::nbbo::{Nbbo, SideAgg, VenueQuote};
use crate::tape::{ExchangeId, Price, QuoteRecord, TradeRecord};

/// A qualifying merged window found by brute force, as trade indices into
/// the input slice (both ends inclusive).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OracleCrash {
    pub direction: Direction,
    pub start: usize,
    pub end: usize,
}

/// Enumerate every contiguous window, keep those satisfying all three crash
/// conditions, and merge overlapping qualifying windows (windows sharing at
/// least one trade) into maximal runs.
pub fn brute_force_crashes(trades: &[TradeRecord], cfg: &DetectorConfig) -> Vec<OracleCrash> {
    let mut out = Vec::new();
    for dir in [Direction::Down, Direction::Up] {
        let mut windows: Vec<(usize, usize)> = Vec::new();
        for i in 0..trades.len() {
            let mut dticks = 0u32;
            for j in i + 1..trades.len() {
                let step = trades[j].price.0 - trades[j - 1].price.0;
                let opposing = match dir {
                    Direction::Down => step > 0,
                    Direction::Up => step < 0,
                };
                if opposing {
                    break;
                }
                // Once the window is out of time it stays out of time.
                if trades[j].ts - trades[i].ts > cfg.max_window_ms {
                    break;
                }
                if step != 0 {
                    dticks += 1;
                }
                if dticks >= cfg.min_ticks && move_exceeds(dir, trades[i].price, trades[j].price, cfg) {
                    windows.push((i, j));
                }
            }
        }
        windows.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (s, e) in windows {
            match merged.last_mut() {
                Some((_, le)) if s <= *le => *le = (*le).max(e),
                _ => merged.push((s, e)),
            }
        }
        out.extend(merged.into_iter().map(|(start, end)| OracleCrash {
            direction: dir,
            start,
            end,
        }));
    }
    out.sort_unstable_by_key(|c| (c.start, c.end, c.direction == Direction::Up));
    out
}

fn move_exceeds(dir: Direction, first: Price, last: Price, cfg: &DetectorConfig) -> bool {
    match dir {
        Direction::Down => 10_000 * (first.0 - last.0) > cfg.min_move_tenk * first.0,
        Direction::Up => 10_000 * (last.0 - first.0) > cfg.min_move_tenk * first.0,
    }
}

/// From-scratch NBBO: retains only the latest quote per venue and rebuilds
/// both sides on every query.
#[derive(Default)]
pub struct NbboMirror {
    latest: BTreeMap<ExchangeId, QuoteRecord>,
}

impl NbboMirror {
    pub fn new() -> NbboMirror {
        NbboMirror::default()
    }

    pub fn apply(&mut self, q: &QuoteRecord) {
        self.latest.insert(q.exchange, *q);
    }

    pub fn compute(&self) -> Nbbo {
        let best_bid = self
            .latest
            .values()
            .filter(|q| q.bid_size > 0)
            .map(|q| q.bid)
            .max();
        let best_offer = self
            .latest
            .values()
            .filter(|q| q.offer_size > 0)
            .map(|q| q.offer)
            .min();
        let side = |price: Option<Price>, pick_bid: bool| -> Option<SideAgg> {
            let price = price?;
            let mut venues: Vec<(ExchangeId, u32)> = self
                .latest
                .values()
                .filter_map(|q| {
                    let (p, s) = if pick_bid {
                        (q.bid, q.bid_size)
                    } else {
                        (q.offer, q.offer_size)
                    };
                    (s > 0 && p == price).then_some((q.exchange, s))
                })
                .collect();
            venues.sort_by_key(|(e, _)| e.index());
            let mut agg = SideAgg {
                price,
                size: 0,
                venues: Default::default(),
            };
            for (exchange, size) in venues {
                agg.size += size as u64;
                agg.venues.push(VenueQuote { exchange, size });
            }
            Some(agg)
        };
        Nbbo {
            bid: side(best_bid, true),
            offer: side(best_offer, false),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{ConditionCode, Symbol};

    fn trade(seq: u64, ts: i64, price: i64) -> TradeRecord {
        TradeRecord {
            seq,
            ts,
            symbol: Symbol::from("T").unwrap(),
            exchange: ExchangeId::Nyse,
            price: Price(price),
            size: 100,
            is_iso: false,
            condition: ConditionCode::from("@").unwrap(),
        }
    }

    #[test]
    fn finds_a_plain_down_run() {
        let trades: Vec<TradeRecord> = (0..=12)
            .map(|k| trade(k, k as i64 * 50, 1_000_000 - 1_000 * k as i64))
            .collect();
        let crashes = brute_force_crashes(&trades, &DetectorConfig::default());
        assert_eq!(crashes.len(), 1);
        assert_eq!(crashes[0].direction, Direction::Down);
        assert_eq!((crashes[0].start, crashes[0].end), (0, 12));
    }

    #[test]
    fn respects_strict_move_threshold() {
        let trades: Vec<TradeRecord> = (0..=10)
            .map(|k| trade(k, k as i64 * 50, 1_000_000 - 800 * k as i64))
            .collect();
        assert!(brute_force_crashes(&trades, &DetectorConfig::default()).is_empty());
    }
}
