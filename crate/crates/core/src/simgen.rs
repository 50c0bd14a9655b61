//! Deterministic multi-venue order-book simulator.
//!
//! The simulator keeps one price-ordered ladder per venue per side and
//! executes two order shapes against them:
//!
//! * [`Market::submit_iso_package`] — companion orders match every away
//!   venue's protected top, then the main order rips through the target
//!   venue's ladder level by level, all prints ISO-marked.
//! * [`Market::submit_routable_order`] — slices matching each away venue's
//!   protected top execute there first, then the balance walks the
//!   receiving venue's ladder regardless of away depth, regular-marked.
//!
//! Simulated time advances one millisecond per submitted operation; every
//! fill of one operation prints at the same instant. Book changes are
//! disseminated as quote records delayed by a configurable SIP latency,
//! which is what makes fleeting-liquidity tapes constructible: a venue can
//! cancel its top while the consolidated feed still displays it.
//!
//! [`generate_scenario`] builds ground-truth-labelled tapes from a JSON
//! [`ScenarioSpec`]: ISO sweeps, auto-routing crashes, benign random walks
//! with a same-direction tick cap (structurally incapable of producing a
//! crash), or a mix. With `depth_protection` set, orders execute in global
//! price priority across every displayed level — the counterfactual where
//! trade-throughs of depth are impossible.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::{ConditionCode, ExchangeId, Ms, Price, QuoteRecord, Symbol, TradeRecord};

/// One displayed price level.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Level {
    pub price: Price,
    pub size: u32,
}

/// Taker side: a sell consumes bids, a buy consumes offers.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum OrderSide {
    Buy,
    Sell,
}

/// Per-venue ladders: bids strictly decreasing, offers strictly increasing,
/// all sizes positive.
#[derive(Clone, Debug, Default)]
pub struct ExchangeBook {
    pub bids: Vec<Level>,
    pub offers: Vec<Level>,
}

impl ExchangeBook {
    pub fn best_bid(&self) -> Option<Level> {
        self.bids.first().copied()
    }

    pub fn best_offer(&self) -> Option<Level> {
        self.offers.first().copied()
    }

    fn side(&mut self, side: OrderSide) -> &mut Vec<Level> {
        match side {
            OrderSide::Sell => &mut self.bids,
            OrderSide::Buy => &mut self.offers,
        }
    }

    fn validate(&self) -> bool {
        self.bids.windows(2).all(|w| w[0].price > w[1].price)
            && self.offers.windows(2).all(|w| w[0].price < w[1].price)
            && self
                .bids
                .iter()
                .chain(&self.offers)
                .all(|l| l.size > 0 && l.price.is_positive())
    }
}

/// A sell within `limit` means `price >= limit`; a buy means
/// `price <= limit`.
fn within_limit(side: OrderSide, price: Price, limit: Price) -> bool {
    match side {
        OrderSide::Sell => price >= limit,
        OrderSide::Buy => price <= limit,
    }
}

/// An intermarket sweep package: the main order aimed at one venue plus
/// companion orders sized to every away protected quotation.
#[derive(Clone, Copy, Debug)]
pub struct IsoPackage {
    pub side: OrderSide,
    pub limit: Price,
    pub size: u64,
    pub target: ExchangeId,
}

/// A plain order handed to one venue, which must route around better away
/// tops before filling the balance locally.
#[derive(Clone, Copy, Debug)]
pub struct RoutableOrder {
    pub side: OrderSide,
    pub limit: Price,
    pub size: u64,
    pub venue: ExchangeId,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no displayed liquidity to execute against")]
    EmptyBook,
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

/// Multi-venue market with SIP-delayed quote dissemination.
pub struct Market {
    symbol: Symbol,
    books: BTreeMap<ExchangeId, ExchangeBook>,
    clock: Ms,
    sip_latency_ms: Ms,
    depth_protection: bool,
    trades: Vec<TradeRecord>,
    quotes: Vec<QuoteRecord>,
    cond_regular: ConditionCode,
    cond_iso: ConditionCode,
}

impl Market {
    pub fn new(symbol: Symbol, start_ts: Ms, sip_latency_ms: Ms) -> Market {
        Market {
            symbol,
            books: BTreeMap::new(),
            clock: start_ts,
            sip_latency_ms,
            depth_protection: false,
            trades: Vec::new(),
            quotes: Vec::new(),
            cond_regular: ConditionCode::from("@").unwrap(),
            cond_iso: ConditionCode::from("F").unwrap(),
        }
    }

    /// Enable the depth-of-book protection counterfactual: all executions
    /// run in global price priority across every displayed level.
    pub fn set_depth_protection(&mut self, on: bool) {
        self.depth_protection = on;
    }

    pub fn clock(&self) -> Ms {
        self.clock
    }

    pub fn advance_to(&mut self, ts: Ms) {
        self.clock = self.clock.max(ts);
    }

    fn step(&mut self) {
        self.clock += 1;
    }

    pub fn book(&self, venue: ExchangeId) -> Option<&ExchangeBook> {
        self.books.get(&venue)
    }

    /// Install (or replace) a venue's ladders and disseminate its top.
    pub fn post_book(&mut self, venue: ExchangeId, bids: Vec<Level>, offers: Vec<Level>) {
        let book = ExchangeBook { bids, offers };
        debug_assert!(book.validate(), "malformed ladder for {}", venue.name());
        self.books.insert(venue, book);
        self.emit_quote(venue);
    }

    /// Re-disseminate a venue's current top (background quote traffic).
    pub fn refresh_quote(&mut self, venue: ExchangeId) {
        self.emit_quote(venue);
    }

    /// Pull a venue's best level on one side without trading, e.g. a
    /// cancellation racing ahead of the SIP feed.
    pub fn cancel_best(&mut self, venue: ExchangeId, side: OrderSide) {
        if let Some(book) = self.books.get_mut(&venue) {
            let ladder = book.side(side);
            if !ladder.is_empty() {
                ladder.remove(0);
            }
        }
        self.emit_quote(venue);
    }

    fn emit_quote(&mut self, venue: ExchangeId) {
        let Some(book) = self.books.get(&venue) else { return };
        let (bid, bid_size) = book.best_bid().map_or((Price::ZERO, 0), |l| (l.price, l.size));
        let (offer, offer_size) = book
            .best_offer()
            .map_or((Price::ZERO, 0), |l| (l.price, l.size));
        self.quotes.push(QuoteRecord {
            seq: 0,
            ts: self.clock + self.sip_latency_ms,
            symbol: self.symbol,
            exchange: venue,
            bid,
            bid_size,
            offer,
            offer_size,
        });
    }

    fn print_trade(&mut self, venue: ExchangeId, price: Price, size: u32, iso: bool) -> TradeRecord {
        self.print_trade_at(venue, price, size, iso, self.clock)
    }

    /// Record a print at an explicit time, outside the matching clock.
    /// Scripted background traffic uses this so it cannot collide with the
    /// operation steps; the final tape is sorted by timestamp anyway.
    fn print_trade_at(&mut self, venue: ExchangeId, price: Price, size: u32, iso: bool, ts: Ms) -> TradeRecord {
        let t = TradeRecord {
            seq: 0,
            ts,
            symbol: self.symbol,
            exchange: venue,
            price,
            size,
            is_iso: iso,
            condition: if iso { self.cond_iso } else { self.cond_regular },
        };
        self.trades.push(t);
        t
    }

    /// Walk one venue's ladder: one print per level consumed, stopping at
    /// the limit, a full fill, or ladder exhaustion.
    fn walk_ladder(
        &mut self,
        venue: ExchangeId,
        side: OrderSide,
        mut remaining: u64,
        limit: Price,
        iso: bool,
    ) -> Vec<TradeRecord> {
        let mut fills = Vec::new();
        while remaining > 0 {
            let Some(book) = self.books.get_mut(&venue) else { break };
            let ladder = book.side(side);
            let Some(level) = ladder.first_mut() else { break };
            if !within_limit(side, level.price, limit) {
                break;
            }
            let take = remaining.min(level.size as u64) as u32;
            let price = level.price;
            level.size -= take;
            if level.size == 0 {
                ladder.remove(0);
            }
            remaining -= take as u64;
            fills.push(self.print_trade(venue, price, take, iso));
            self.emit_quote(venue);
        }
        fills
    }

    /// Global price-priority walk across all venues (the depth-protection
    /// counterfactual): always executes against the single best displayed
    /// level anywhere, so no print is ever inferior to a displayed level.
    fn walk_protected(&mut self, side: OrderSide, mut remaining: u64, limit: Price, iso: bool) -> Vec<TradeRecord> {
        let mut fills = Vec::new();
        while remaining > 0 {
            let mut best: Option<(Price, ExchangeId)> = None;
            for (&venue, book) in &self.books {
                let top = match side {
                    OrderSide::Sell => book.best_bid(),
                    OrderSide::Buy => book.best_offer(),
                };
                if let Some(level) = top {
                    let better = match (&best, side) {
                        (None, _) => true,
                        (Some((p, _)), OrderSide::Sell) => level.price > *p,
                        (Some((p, _)), OrderSide::Buy) => level.price < *p,
                    };
                    if better {
                        best = Some((level.price, venue));
                    }
                }
            }
            let Some((price, venue)) = best else { break };
            if !within_limit(side, price, limit) {
                break;
            }
            let book = self.books.get_mut(&venue).unwrap();
            let ladder = book.side(side);
            let level = ladder.first_mut().unwrap();
            let take = remaining.min(level.size as u64) as u32;
            level.size -= take;
            if level.size == 0 {
                ladder.remove(0);
            }
            remaining -= take as u64;
            fills.push(self.print_trade(venue, price, take, iso));
            self.emit_quote(venue);
        }
        fills
    }

    /// Marketable limit order against a single venue (background traffic
    /// and the opening prints of scripted crashes).
    pub fn submit_taker(
        &mut self,
        venue: ExchangeId,
        side: OrderSide,
        size: u64,
        limit: Price,
    ) -> Result<Vec<TradeRecord>, SimError> {
        self.step();
        if self.depth_protection {
            return Ok(self.walk_protected(side, size, limit, false));
        }
        Ok(self.walk_ladder(venue, side, size, limit, false))
    }

    /// National best on the taker's contra side, from venue truth.
    fn national_best(&self, side: OrderSide) -> Option<Price> {
        self.books
            .values()
            .filter_map(|b| match side {
                OrderSide::Sell => b.best_bid(),
                OrderSide::Buy => b.best_offer(),
            })
            .map(|l| l.price)
            .reduce(|a, b| match side {
                OrderSide::Sell => a.max(b),
                OrderSide::Buy => a.min(b),
            })
    }

    /// Venues other than `except` displaying the national best, with their
    /// displayed top size.
    fn away_at_best(&self, side: OrderSide, best: Price, except: ExchangeId) -> Vec<(ExchangeId, u32)> {
        self.books
            .iter()
            .filter(|(v, _)| **v != except)
            .filter_map(|(v, b)| {
                let top = match side {
                    OrderSide::Sell => b.best_bid(),
                    OrderSide::Buy => b.best_offer(),
                }?;
                (top.price == best).then_some((*v, top.size))
            })
            .collect()
    }

    /// Submit an ISO package: companions execute each away venue's
    /// protected top, the main order walks the target ladder. All prints
    /// are ISO-marked and share one timestamp.
    pub fn submit_iso_package(&mut self, pkg: &IsoPackage) -> Result<Vec<TradeRecord>, SimError> {
        self.step();
        if self.depth_protection {
            let fills = self.walk_protected(pkg.side, pkg.size, pkg.limit, true);
            return if fills.is_empty() {
                Err(SimError::EmptyBook)
            } else {
                Ok(fills)
            };
        }
        let target_has_liquidity = self.books.get(&pkg.target).is_some_and(|b| match pkg.side {
            OrderSide::Sell => !b.bids.is_empty(),
            OrderSide::Buy => !b.offers.is_empty(),
        });
        if !target_has_liquidity {
            return Err(SimError::EmptyBook);
        }
        let mut fills = Vec::new();
        if let Some(best) = self.national_best(pkg.side) {
            // Companions sized to the displayed protected depth (order
            // protection compliance).
            for (venue, displayed) in self.away_at_best(pkg.side, best, pkg.target) {
                let mut companion = self.walk_ladder(venue, pkg.side, displayed as u64, best, true);
                fills.append(&mut companion);
            }
        }
        let mut main = self.walk_ladder(pkg.target, pkg.side, pkg.size, pkg.limit, true);
        fills.append(&mut main);
        Ok(fills)
    }

    /// Submit an order to one venue that must satisfy order protection by
    /// routing slices to away venues displaying the national best, then
    /// fills the balance from its own ladder one millisecond later. All
    /// prints are regular-marked.
    pub fn submit_routable_order(&mut self, order: &RoutableOrder) -> Result<Vec<TradeRecord>, SimError> {
        self.step();
        if self.depth_protection {
            let fills = self.walk_protected(order.side, order.size, order.limit, false);
            return if fills.is_empty() {
                Err(SimError::EmptyBook)
            } else {
                Ok(fills)
            };
        }
        if !self.books.contains_key(&order.venue) {
            return Err(SimError::EmptyBook);
        }
        let mut remaining = order.size;
        let mut fills = Vec::new();
        if let Some(best) = self.national_best(order.side) {
            let receiving_at_best = self
                .books
                .get(&order.venue)
                .and_then(|b| match order.side {
                    OrderSide::Sell => b.best_bid(),
                    OrderSide::Buy => b.best_offer(),
                })
                .is_some_and(|l| l.price == best);
            if !receiving_at_best {
                let mut routed_any = false;
                for (venue, displayed) in self.away_at_best(order.side, best, order.venue) {
                    if remaining == 0 {
                        break;
                    }
                    let slice = remaining.min(displayed as u64);
                    let routed = self.walk_ladder(venue, order.side, slice, best, false);
                    let executed: u64 = routed.iter().map(|t| t.size as u64).sum();
                    remaining -= executed;
                    fills.extend(routed);
                    routed_any = true;
                }
                // The balance fills locally on the next matching step.
                if routed_any && remaining > 0 {
                    self.step();
                }
            }
        }
        if remaining > 0 {
            let local = self.walk_ladder(order.venue, order.side, remaining, order.limit, false);
            fills.extend(local);
        }
        Ok(fills)
    }

    /// Consume the market, returning the tape sorted by timestamp (stable,
    /// so emission order breaks ties).
    pub fn into_tape(mut self) -> (Vec<TradeRecord>, Vec<QuoteRecord>) {
        self.trades.sort_by_key(|t| t.ts);
        self.quotes.sort_by_key(|q| q.ts);
        (self.trades, self.quotes)
    }
}

/// Scenario families the generator can produce.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    IsoSweep,
    AutoRouting,
    BenignRandomWalk,
    Mixed,
}

/// Generator parameters. `(spec, seed)` fully determines the output tape.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub symbol: String,
    pub crash_venue: String,
    pub away_venue: String,
    /// Session time of the scripted crash.
    pub crash_ts: Ms,
    /// Anchor price in dollars; ladders hang off it.
    pub top_price: f64,
    /// Levels in the crash venue's bid ladder.
    pub ladder_levels: u32,
    /// Geometric spacing between levels, percent.
    pub level_step_pct: f64,
    pub level_size: u32,
    /// How many levels the scripted order consumes.
    pub sweep_levels: u32,
    pub sip_latency_ms: Ms,
    /// Cancel the target's top just before the sweep so the SIP keeps
    /// displaying a quote the trades never touch.
    pub fleeting: bool,
    pub depth_protection: bool,
    /// Quote coverage around the crash.
    pub pre_quote_ms: Ms,
    pub post_quote_ms: Ms,
    pub quote_refresh_ms: Ms,
    /// Add this many percentage points to the reposted NBBO spread after
    /// the crash (event-study calibration hook).
    pub post_spread_widen_pct: f64,
    /// Background prints for the benign walk kinds.
    pub background_trades: u32,
    /// Same-direction tick cap for background prints, per venue.
    pub run_cap: u32,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::IsoSweep,
            seed: 1,
            symbol: "SIM".to_string(),
            crash_venue: "NYSE".to_string(),
            away_venue: "ARCA".to_string(),
            crash_ts: 36_000_000,
            top_price: 100.0,
            ladder_levels: 14,
            level_step_pct: 0.1,
            level_size: 300,
            sweep_levels: 12,
            sip_latency_ms: 10,
            fleeting: false,
            depth_protection: false,
            pre_quote_ms: 3_000,
            post_quote_ms: 3_000,
            quote_refresh_ms: 500,
            post_spread_widen_pct: 0.0,
            background_trades: 0,
            run_cap: 5,
        }
    }
}

/// Ground truth recorded alongside a generated tape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub symbol: String,
    pub crash_venue: String,
    /// `iso_initiated` / `auto_routing_initiated`, absent for benign tapes.
    pub expected_classification: Option<String>,
    pub expected_fleeting: Option<bool>,
    pub expected_crash_count: u32,
}

/// A generated tape plus its label.
pub struct ScenarioOutput {
    pub trades: Vec<TradeRecord>,
    pub quotes: Vec<QuoteRecord>,
    pub label: ScenarioLabel,
}

fn venue_of(name: &str) -> Result<ExchangeId, SimError> {
    let v = ExchangeId::from_name(name);
    if v == ExchangeId::Other && !name.eq_ignore_ascii_case("other") {
        return Err(SimError::InvalidSpec(format!("unknown venue `{name}`")));
    }
    Ok(v)
}

fn scaled(anchor: Price, factor: f64) -> Price {
    Price((anchor.0 as f64 * factor).round() as i64)
}

fn geometric_ladder(top: Price, step_pct: f64, levels: u32, size: u32, down: bool) -> Vec<Level> {
    let factor = if down {
        1.0 - step_pct / 100.0
    } else {
        1.0 + step_pct / 100.0
    };
    let mut out = Vec::with_capacity(levels as usize);
    let mut px = top.0 as f64;
    for _ in 0..levels {
        px *= factor;
        out.push(Level {
            price: Price(px.round() as i64),
            size,
        });
    }
    out
}

struct ScenarioBuilder<'a> {
    spec: &'a ScenarioSpec,
    market: Market,
    crash_venue: ExchangeId,
    away_venue: ExchangeId,
    anchor: Price,
    pre_spread_pct: f64,
}

impl<'a> ScenarioBuilder<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<ScenarioBuilder<'a>, SimError> {
        if spec.sweep_levels + 1 >= spec.ladder_levels {
            return Err(SimError::InvalidSpec(
                "ladder_levels must exceed sweep_levels + 1".to_string(),
            ));
        }
        if spec.level_step_pct <= 0.0 || spec.top_price <= 0.0 {
            return Err(SimError::InvalidSpec(
                "steps and prices must be positive".to_string(),
            ));
        }
        if spec.quote_refresh_ms <= 0 {
            return Err(SimError::InvalidSpec(
                "quote_refresh_ms must be positive".to_string(),
            ));
        }
        if spec.sip_latency_ms < 0 {
            return Err(SimError::InvalidSpec("negative SIP latency".to_string()));
        }
        let crash_venue = venue_of(&spec.crash_venue)?;
        let away_venue = venue_of(&spec.away_venue)?;
        if crash_venue == away_venue {
            return Err(SimError::InvalidSpec(
                "crash and away venues must differ".to_string(),
            ));
        }
        if !matches!(spec.kind, ScenarioKind::BenignRandomWalk) {
            // The label promises a detectable crash. A sweep of L levels
            // prints L-1 directional ticks (variants without an opening
            // print), so the canonical 10-tick / 0.8% thresholds need depth
            // and magnitude headroom.
            if spec.sweep_levels < 11 {
                return Err(SimError::InvalidSpec(
                    "sweep_levels must be at least 11 to guarantee 10 directional ticks".to_string(),
                ));
            }
            let worst_move = 100.0
                * (1.0 - (1.0 - spec.level_step_pct / 100.0).powi(spec.sweep_levels as i32 - 1));
            if worst_move <= 0.85 {
                return Err(SimError::InvalidSpec(format!(
                    "sweep too shallow: {worst_move:.3}% move cannot clear the 0.8% threshold"
                )));
            }
        }
        let symbol = Symbol::from(spec.symbol.as_str())
            .map_err(|_| SimError::InvalidSpec(format!("symbol `{}` too long", spec.symbol)))?;
        let anchor = Price::from_dollars(spec.top_price);
        let session_open = spec.crash_ts - spec.pre_quote_ms;
        if session_open < 0 {
            return Err(SimError::InvalidSpec("crash_ts before session open".to_string()));
        }
        let market = Market::new(symbol, session_open, spec.sip_latency_ms);
        // Half-step spread around the anchor on the away venue. The
        // pre-crash NBBO is that bid against the crash venue's offer at the
        // anchor, which is what the reposted books must widen from.
        let half = spec.level_step_pct / 2.0;
        let away_bid = scaled(anchor, 1.0 - half / 100.0);
        let away_offer = scaled(anchor, 1.0 + half / 100.0);
        let pre_spread_pct = 100.0 * (anchor.dollars() - away_bid.dollars())
            / ((anchor.dollars() + away_bid.dollars()) / 2.0);
        let mut b = ScenarioBuilder {
            spec,
            market,
            crash_venue,
            away_venue,
            anchor,
            pre_spread_pct,
        };
        b.post_initial_books(away_bid, away_offer);
        Ok(b)
    }

    fn post_initial_books(&mut self, away_bid: Price, away_offer: Price) {
        let spec = self.spec;
        // Crash venue: offer at the anchor, bids laddered below it.
        let bids = geometric_ladder(
            self.anchor,
            spec.level_step_pct,
            spec.ladder_levels,
            spec.level_size,
            true,
        );
        let offers = vec![
            Level {
                price: self.anchor,
                size: 400,
            },
            Level {
                price: scaled(self.anchor, 1.0 + spec.level_step_pct / 100.0),
                size: spec.level_size,
            },
        ];
        self.market.post_book(self.crash_venue, bids, offers);
        let sweep_total = (spec.level_size as u64 * spec.sweep_levels as u64).max(1200) as u32;
        if spec.fleeting {
            // Fleeting tapes isolate the cancellation-vs-SIP race on the
            // crash venue, so it must own the NBB: the away bid sits well
            // inside the ladder and never matters to the sweep.
            let away_bids = vec![Level {
                price: scaled(self.anchor, 1.0 - 6.0 * spec.level_step_pct / 100.0),
                size: 500,
            }];
            let away_offers = vec![Level { price: away_offer, size: 500 }];
            self.market.post_book(self.away_venue, away_bids, away_offers);
        } else {
            // Away venue: top inside the crash venue's ladder (it posts the
            // NBB), plus deep backup liquidity so the depth-protection
            // counterfactual can absorb the sweep near the top of the book.
            let backup = scaled(self.anchor, 1.0 - 0.55 * spec.level_step_pct / 100.0);
            let away_bids = vec![
                Level { price: away_bid, size: 500 },
                Level { price: backup, size: sweep_total },
                Level {
                    price: scaled(self.anchor, 1.0 - 5.0 * spec.level_step_pct / 100.0),
                    size: sweep_total,
                },
            ];
            let away_offers = vec![Level { price: away_offer, size: 500 }];
            self.market.post_book(self.away_venue, away_bids, away_offers);
        }
    }

    fn refresh_quotes_between(&mut self, from: Ms, until: Ms) {
        let mut t = from;
        while t < until {
            self.market.advance_to(t);
            self.market.refresh_quote(self.crash_venue);
            self.market.refresh_quote(self.away_venue);
            t += self.spec.quote_refresh_ms;
        }
    }

    /// Repost calm books after the crash, optionally with a widened NBBO
    /// spread, so event studies see a clean step.
    fn repost_after_crash(&mut self, at: Ms) {
        let spec = self.spec;
        self.market.advance_to(at);
        let spread_pct = self.pre_spread_pct + spec.post_spread_widen_pct;
        let mid = self.anchor.0 as f64;
        let bid = Price((mid * (1.0 - spread_pct / 200.0)).round() as i64);
        let offer = Price((mid * (1.0 + spread_pct / 200.0)).round() as i64);
        self.market.post_book(
            self.away_venue,
            vec![Level { price: bid, size: 500 }],
            vec![Level { price: offer, size: 500 }],
        );
        self.market.post_book(
            self.crash_venue,
            vec![Level { price: Price(bid.0 - 25), size: spec.level_size }],
            vec![Level { price: Price(offer.0 + 25), size: spec.level_size }],
        );
    }

    /// Scripted ISO sweep at `crash_ts`. Returns the expected fleeting flag.
    fn run_iso_sweep(&mut self) -> Result<bool, SimError> {
        let spec = self.spec;
        self.market.advance_to(spec.crash_ts - 1);
        if spec.fleeting {
            // The top bid is pulled just before the sweep. No opening print
            // at the offer: a print at or inside the displayed quote would
            // count as hitting it, and the point of this tape is that the
            // displayed liquidity is never touched.
            self.market.cancel_best(self.crash_venue, OrderSide::Sell);
        } else {
            // Opening print: regular buy at the displayed offer (the anchor).
            self.market
                .submit_taker(self.crash_venue, OrderSide::Buy, 100, self.anchor)?;
        }
        let book = self.market.book(self.crash_venue).ok_or(SimError::EmptyBook)?;
        let take = (spec.sweep_levels as usize).min(book.bids.len());
        let levels = &book.bids[..take];
        let size: u64 = levels.iter().map(|l| l.size as u64).sum();
        let limit = levels.last().ok_or(SimError::EmptyBook)?.price;
        let pkg = IsoPackage {
            side: OrderSide::Sell,
            limit,
            size,
            target: self.crash_venue,
        };
        self.market.submit_iso_package(&pkg)?;
        self.repost_after_crash(self.market.clock() + 1);
        self.recovery_print()?;
        // The sweep prints strictly below the book the SIP was still
        // displaying only if the cancellation raced the feed.
        Ok(spec.fleeting && spec.sip_latency_ms >= 1)
    }

    /// A small buy against the reposted offer: the up tick closes the
    /// crash run the way real tapes do.
    fn recovery_print(&mut self) -> Result<(), SimError> {
        let t = self.market.clock() + 5;
        self.market.advance_to(t);
        self.market
            .submit_taker(self.crash_venue, OrderSide::Buy, 100, scaled(self.anchor, 2.0))?;
        Ok(())
    }

    /// Scripted auto-routing crash at `crash_ts`.
    fn run_auto_routing(&mut self) -> Result<bool, SimError> {
        let spec = self.spec;
        if spec.sip_latency_ms < 1 && !spec.depth_protection {
            // With an instantaneous feed, the consolidated snapshot taken
            // just before the local run already shows the cleared top, so
            // the routing evidence the label promises is unobservable.
            return Err(SimError::InvalidSpec(
                "auto-routing scenarios need sip_latency_ms >= 1".to_string(),
            ));
        }
        self.market.advance_to(spec.crash_ts - 1);
        let away_top = self
            .market
            .book(self.away_venue)
            .and_then(|b| b.best_bid())
            .ok_or(SimError::EmptyBook)?;
        let book = self.market.book(self.crash_venue).ok_or(SimError::EmptyBook)?;
        let take = (spec.sweep_levels as usize).min(book.bids.len());
        let levels = &book.bids[..take];
        let local_size: u64 = levels.iter().map(|l| l.size as u64).sum();
        let limit = levels.last().ok_or(SimError::EmptyBook)?.price;
        let order = RoutableOrder {
            side: OrderSide::Sell,
            limit,
            size: local_size + away_top.size as u64,
            venue: self.crash_venue,
        };
        self.market.submit_routable_order(&order)?;
        self.repost_after_crash(self.market.clock() + 1);
        self.recovery_print()?;
        // The local run prints below the away venue's still-displayed
        // backup bid throughout, so its displayed quotes are never hit.
        Ok(true)
    }

    /// Background prints with a per-venue same-direction tick cap, so no
    /// window can ever reach the detector's tick minimum.
    fn run_benign_walk(&mut self, rng: &mut ChaCha8Rng, from: Ms, until: Ms, prints: u32) {
        let spec = self.spec;
        let venues = [self.crash_venue, self.away_venue];
        let mut last_price: BTreeMap<ExchangeId, Price> = BTreeMap::new();
        let mut runs: BTreeMap<ExchangeId, (i8, u32)> = BTreeMap::new();
        let tick = 10i64;
        let span = (until - from).max(1);
        let stride = (span / prints.max(1) as Ms).max(1);
        // Jitter stays below the stride so generation order is time order;
        // otherwise sorting could reorder prints and defeat the tick cap.
        let jitter = stride.min(20);
        for i in 0..prints {
            let ts = from + (span * i as Ms) / prints.max(1) as Ms + rng.random_range(0..jitter);
            if ts >= until {
                break;
            }
            let venue = venues[rng.random_range(0..venues.len())];
            let prev = last_price.get(&venue).copied().unwrap_or(self.anchor);
            let (dir, len) = runs.get(&venue).copied().unwrap_or((0, 0));
            let mut step: i8 = match rng.random_range(0..4u32) {
                0 => 1,
                1 => -1,
                _ => 0,
            };
            if step != 0 && step == dir && len >= spec.run_cap {
                step = -dir;
            }
            let price = Price(prev.0 + step as i64 * tick);
            let next_run = if step == 0 {
                (dir, len)
            } else if step == dir {
                (dir, len + 1)
            } else {
                (step, 1)
            };
            runs.insert(venue, next_run);
            last_price.insert(venue, price);
            // Background prints are synthetic; they do not consume the
            // scripted ladders.
            let size = 100 + rng.random_range(0..5u32) * 100;
            self.market.print_trade_at(venue, price, size, false, ts);
        }
    }

    fn finish(self) -> (Vec<TradeRecord>, Vec<QuoteRecord>) {
        self.market.into_tape()
    }
}

/// Generate the tape and ground-truth label for a scenario.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutput, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Seed-derived timing jitter makes every seed a distinct tape even for
    // fully scripted kinds, without touching the labelled outcome.
    let mut spec = spec.clone();
    if !matches!(spec.kind, ScenarioKind::BenignRandomWalk) {
        spec.crash_ts += rng.random_range(0..400);
    }
    let spec = &spec;
    let mut builder = ScenarioBuilder::new(spec)?;
    builder.market.set_depth_protection(spec.depth_protection);
    let t0 = spec.crash_ts;
    let session_open = t0 - spec.pre_quote_ms;
    let session_close = t0 + spec.post_quote_ms;

    builder.refresh_quotes_between(session_open, t0 - 100);

    let (expected_class, expected_fleeting, expected_crashes) = match spec.kind {
        ScenarioKind::IsoSweep => {
            let fleeting = builder.run_iso_sweep()?;
            if spec.depth_protection {
                (None, None, 0)
            } else {
                (Some("iso_initiated".to_string()), Some(fleeting), 1)
            }
        }
        ScenarioKind::AutoRouting => {
            let fleeting = builder.run_auto_routing()?;
            if spec.depth_protection {
                (None, None, 0)
            } else {
                (Some("auto_routing_initiated".to_string()), Some(fleeting), 1)
            }
        }
        ScenarioKind::BenignRandomWalk => {
            let prints = spec.background_trades.max(40);
            builder.run_benign_walk(&mut rng, session_open + 100, session_close - 100, prints);
            (None, None, 0)
        }
        ScenarioKind::Mixed => {
            // Background prints kept clear of the crash window.
            let prints = spec.background_trades.max(20);
            builder.run_benign_walk(&mut rng, session_open + 100, t0 - 2_000, prints);
            let (class, fleeting) = if spec.seed.is_multiple_of(2) {
                ("iso_initiated", builder.run_iso_sweep()?)
            } else {
                ("auto_routing_initiated", builder.run_auto_routing()?)
            };
            if spec.depth_protection {
                (None, None, 0)
            } else {
                (Some(class.to_string()), Some(fleeting), 1)
            }
        }
    };

    let resume = builder.market.clock().max(t0) + spec.quote_refresh_ms;
    builder.refresh_quotes_between(resume, session_close);

    let label = ScenarioLabel {
        kind: spec.kind,
        seed: spec.seed,
        symbol: spec.symbol.clone(),
        crash_venue: spec.crash_venue.clone(),
        expected_classification: expected_class,
        expected_fleeting,
        expected_crash_count: expected_crashes,
    };
    let (trades, quotes) = builder.finish();
    Ok(ScenarioOutput {
        trades,
        quotes,
        label,
    })
}

/// Parse a scenario spec from JSON.
pub fn parse_spec(json: &str) -> Result<ScenarioSpec, SimError> {
    serde_json::from_str(json).map_err(|e| SimError::InvalidSpec(e.to_string()))
}

/// Write `trades.csv`, `quotes.csv`, and `label.json` into `out_dir`.
pub fn write_scenario(out: &ScenarioOutput, out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    crate::tape::write_trades(&out_dir.join("trades.csv"), &out.trades)?;
    crate::tape::write_quotes(&out_dir.join("quotes.csv"), &out.quotes)?;
    let label = serde_json::to_string_pretty(&out.label).expect("label serializes");
    std::fs::write(out_dir.join("label.json"), label + "\n")
}
