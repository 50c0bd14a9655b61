//! Per-exchange top-of-book state and the derived NBBO.
//!
//! One [`BookState`] per symbol consumes the quote stream, keeps each
//! venue's displayed top, and recomputes the national best bid/offer after
//! every update. It also retains a short ring of NBBO change points so the
//! least-aggressive quote bounds over a trailing window (flicker protection)
//! can be answered exactly.

use std::collections::VecDeque;

use thiserror::Error;

use crate::tape::{ExchangeId, Ms, Price, QuoteRecord, Symbol, TradeRecord};

/// Book side.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Bid,
    Offer,
}

/// NBBO state classification.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NbboStatus {
    Normal,
    Locked,
    Crossed,
    OneSided,
    Empty,
}

impl NbboStatus {
    pub fn name(self) -> &'static str {
        match self {
            NbboStatus::Normal => "normal",
            NbboStatus::Locked => "locked",
            NbboStatus::Crossed => "crossed",
            NbboStatus::OneSided => "one_sided",
            NbboStatus::Empty => "empty",
        }
    }

    pub fn is_two_sided(self) -> bool {
        matches!(self, NbboStatus::Normal | NbboStatus::Locked | NbboStatus::Crossed)
    }
}

/// Locked/crossed rule: crossed when the best bid is above the best offer,
/// locked when they are equal.
pub fn nbbo_status(best_bid: Option<Price>, best_offer: Option<Price>) -> NbboStatus {
    match (best_bid, best_offer) {
        (Some(b), Some(o)) => {
            if b > o {
                NbboStatus::Crossed
            } else if b == o {
                NbboStatus::Locked
            } else {
                NbboStatus::Normal
            }
        }
        (None, None) => NbboStatus::Empty,
        _ => NbboStatus::OneSided,
    }
}

/// A venue's displayed size at the national best price.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VenueQuote {
    pub exchange: ExchangeId,
    pub size: u32,
}

/// Up to one entry per venue, inline and `Copy` so NBBO snapshots stay
/// cheap to store in rings and histories.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct VenueSet {
    len: u8,
    items: [Option<VenueQuote>; 7],
}

impl VenueSet {
    pub fn push(&mut self, v: VenueQuote) {
        self.items[self.len as usize] = Some(v);
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &VenueQuote> {
        self.items[..self.len as usize].iter().filter_map(|v| v.as_ref())
    }

    pub fn contains(&self, exchange: ExchangeId) -> bool {
        self.iter().any(|v| v.exchange == exchange)
    }
}

impl FromIterator<VenueQuote> for VenueSet {
    fn from_iter<T: IntoIterator<Item = VenueQuote>>(iter: T) -> Self {
        let mut set = VenueSet::default();
        for v in iter {
            set.push(v);
        }
        set
    }
}

/// One side of the NBBO: best price, aggregate displayed size, and the
/// venues quoting at it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SideAgg {
    pub price: Price,
    pub size: u64,
    pub venues: VenueSet,
}

impl SideAgg {
    fn single(price: Price, exchange: ExchangeId, size: u32) -> SideAgg {
        let mut venues = VenueSet::default();
        venues.push(VenueQuote { exchange, size });
        SideAgg {
            price,
            size: size as u64,
            venues,
        }
    }
}

/// National best bid and offer.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct Nbbo {
    pub bid: Option<SideAgg>,
    pub offer: Option<SideAgg>,
}

impl Nbbo {
    pub fn status(&self) -> NbboStatus {
        nbbo_status(self.bid.map(|b| b.price), self.offer.map(|o| o.price))
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bid.map(|b| b.price)
    }

    pub fn best_offer(&self) -> Option<Price> {
        self.offer.map(|o| o.price)
    }

    pub fn side(&self, side: Side) -> Option<&SideAgg> {
        match side {
            Side::Bid => self.bid.as_ref(),
            Side::Offer => self.offer.as_ref(),
        }
    }

    /// Midpoint of the two best prices, half-units truncated.
    pub fn mid(&self) -> Option<Price> {
        match (self.bid, self.offer) {
            (Some(b), Some(o)) => Some(Price((b.price.0 + o.price.0) / 2)),
            _ => None,
        }
    }

    fn same_display(&self, other: &Nbbo) -> bool {
        let key = |s: &Option<SideAgg>| s.map(|a| (a.price, a.size));
        key(&self.bid) == key(&other.bid)
            && key(&self.offer) == key(&other.offer)
            && self.status() == other.status()
    }
}

/// NBBO at a change point, with the sequence number of the quote that
/// produced it and a reference price for stub filtering.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NbboSnapshot {
    pub ts: Ms,
    pub seq: u64,
    pub nbbo: Nbbo,
    /// Midprice when two-sided, otherwise the last trade price.
    pub ref_price: Option<Price>,
}

/// Least aggressive market-wide best quotes over a trailing window: the
/// minimum best bid and the maximum best offer observed.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct QuoteBounds {
    pub least_aggressive_bid: Option<Price>,
    pub least_aggressive_offer: Option<Price>,
}

impl QuoteBounds {
    /// Whether a trade price sits within the bounds, both ends inclusive
    /// (a print at either bound is at a displayed price). Requires both
    /// sides to have been observed.
    pub fn contains(&self, price: Price) -> bool {
        match (self.least_aggressive_bid, self.least_aggressive_offer) {
            (Some(b), Some(o)) => b <= price && price <= o,
            _ => false,
        }
    }
}

/// A quote placed well off the reference price: more than `threshold`
/// (fraction, default 0.5) away, or at one cent or less.
pub fn is_stub_quote(price: Price, ref_price: Option<Price>, threshold: f64) -> bool {
    if price.0 <= 100 {
        return true;
    }
    let Some(r) = ref_price else { return false };
    if r.0 <= 0 {
        return false;
    }
    let deviation = (price.0 - r.0).abs() as f64 / r.0 as f64;
    deviation > threshold
}

/// A venue entitled to trade-through protection on one side.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ProtectedQuote {
    pub exchange: ExchangeId,
    pub side: Side,
    pub price: Price,
    pub size: u32,
}

#[derive(Debug, Error)]
#[error("no NBBO snapshot in the requested window")]
pub struct NoHistory;

/// Outcome of applying one quote to the book state.
#[derive(Clone, Debug)]
pub enum QuoteOutcome {
    /// Best prices, aggregate sizes, or status moved.
    Changed(NbboSnapshot),
    NoChange,
    /// Quote timestamp ran backwards; rejected and counted.
    Stale,
}

#[derive(Clone, Copy, Debug)]
pub struct BookConfig {
    /// Trailing window retained for quote-bounds queries.
    pub flicker_window_ms: Ms,
    /// Stub-quote deviation threshold as a fraction of the reference price.
    pub stub_threshold: f64,
}

impl Default for BookConfig {
    fn default() -> Self {
        BookConfig {
            flicker_window_ms: 1000,
            stub_threshold: 0.5,
        }
    }
}

#[derive(Clone, Copy, Default)]
struct ExchangeTop {
    bid: Option<(Price, u32)>,
    offer: Option<(Price, u32)>,
}

/// Consolidated book state for one symbol.
#[derive(Clone)]
pub struct BookState {
    symbol: Symbol,
    cfg: BookConfig,
    tops: [ExchangeTop; 7],
    clock: Ms,
    last_trade: Option<Price>,
    current: Nbbo,
    ring: VecDeque<NbboSnapshot>,
    stale_count: u64,
}

impl BookState {
    pub fn new(symbol: Symbol, cfg: BookConfig) -> BookState {
        BookState {
            symbol,
            cfg,
            tops: [ExchangeTop::default(); 7],
            clock: 0,
            last_trade: None,
            current: Nbbo::default(),
            ring: VecDeque::new(),
            stale_count: 0,
        }
    }

    pub fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    pub fn nbbo(&self) -> &Nbbo {
        &self.current
    }

    pub fn stale_count(&self) -> u64 {
        self.stale_count
    }

    /// Number of retained NBBO change points; bounded by quote density over
    /// the flicker window.
    pub fn history_len(&self) -> usize {
        self.ring.len()
    }

    /// Replace one venue's top and recompute the NBBO. A quote with both
    /// sides absent removes the venue from the book.
    pub fn apply_quote(&mut self, q: &QuoteRecord) -> QuoteOutcome {
        if q.ts < self.clock {
            self.stale_count += 1;
            return QuoteOutcome::Stale;
        }
        self.clock = q.ts;
        self.tops[q.exchange.index()] = ExchangeTop {
            bid: q.bid_quote(),
            offer: q.offer_quote(),
        };
        let next = self.consolidate();
        if next.same_display(&self.current) {
            self.current = next;
            return QuoteOutcome::NoChange;
        }
        self.current = next;
        let snapshot = NbboSnapshot {
            ts: q.ts,
            seq: q.seq,
            nbbo: self.current,
            ref_price: self.current.mid().or(self.last_trade),
        };
        self.ring.push_back(snapshot);
        self.prune();
        QuoteOutcome::Changed(snapshot)
    }

    /// Trades advance the clock and set the stub-filter reference price.
    pub fn apply_trade(&mut self, t: &TradeRecord) {
        if t.ts >= self.clock {
            self.clock = t.ts;
        }
        self.last_trade = Some(t.price);
    }

    fn consolidate(&self) -> Nbbo {
        let mut bid: Option<SideAgg> = None;
        let mut offer: Option<SideAgg> = None;
        for venue in ExchangeId::ALL {
            let top = &self.tops[venue.index()];
            if let Some((price, size)) = top.bid {
                match &mut bid {
                    Some(agg) if price == agg.price => {
                        agg.size += size as u64;
                        agg.venues.push(VenueQuote { exchange: venue, size });
                    }
                    Some(agg) if price > agg.price => *agg = SideAgg::single(price, venue, size),
                    None => bid = Some(SideAgg::single(price, venue, size)),
                    _ => {}
                }
            }
            if let Some((price, size)) = top.offer {
                match &mut offer {
                    Some(agg) if price == agg.price => {
                        agg.size += size as u64;
                        agg.venues.push(VenueQuote { exchange: venue, size });
                    }
                    Some(agg) if price < agg.price => *agg = SideAgg::single(price, venue, size),
                    None => offer = Some(SideAgg::single(price, venue, size)),
                    _ => {}
                }
            }
        }
        Nbbo { bid, offer }
    }

    fn prune(&mut self) {
        // Keep every change point inside the window plus one straddling
        // snapshot at or before the window start.
        let cutoff = self.clock - self.cfg.flicker_window_ms;
        while self.ring.len() >= 2 && self.ring[1].ts <= cutoff {
            self.ring.pop_front();
        }
    }

    /// Venues quoting at the national best on each side, with displayed size.
    pub fn protected_quotes(&self) -> Vec<ProtectedQuote> {
        let mut out = Vec::new();
        if let Some(agg) = &self.current.bid {
            for v in agg.venues.iter() {
                out.push(ProtectedQuote {
                    exchange: v.exchange,
                    side: Side::Bid,
                    price: agg.price,
                    size: v.size,
                });
            }
        }
        if let Some(agg) = &self.current.offer {
            for v in agg.venues.iter() {
                out.push(ProtectedQuote {
                    exchange: v.exchange,
                    side: Side::Offer,
                    price: agg.price,
                    size: v.size,
                });
            }
        }
        out
    }

    /// Least aggressive best quotes over `(t - window, t]`, stub quotes
    /// excluded. `window` must not exceed the configured flicker window.
    pub fn quote_bounds(&self, t: Ms, window: Ms) -> Result<QuoteBounds, NoHistory> {
        bounds_over(self.ring.iter(), t, window, None, self.cfg.stub_threshold)
    }
}

/// Quote bounds from an arbitrary span of NBBO history (sorted by `(ts, seq)`).
///
/// Considers snapshots with `t - window < ts <= t`, plus the last snapshot at
/// or before the window start (the state prevailing as the window opened).
/// `seq_cutoff` restricts to snapshots seen strictly before a stream position,
/// so bounds can be evaluated "as of" a trade.
pub fn bounds_from_history(
    history: &[NbboSnapshot],
    t: Ms,
    window: Ms,
    seq_cutoff: Option<u64>,
    stub_threshold: f64,
) -> Result<QuoteBounds, NoHistory> {
    bounds_over(history.iter(), t, window, seq_cutoff, stub_threshold)
}

fn bounds_over<'a>(
    snaps: impl Iterator<Item = &'a NbboSnapshot>,
    t: Ms,
    window: Ms,
    seq_cutoff: Option<u64>,
    stub_threshold: f64,
) -> Result<QuoteBounds, NoHistory> {
    let start = t - window;
    let mut straddler: Option<&NbboSnapshot> = None;
    let mut any = false;
    let mut min_bid: Option<Price> = None;
    let mut max_offer: Option<Price> = None;
    let mut fold = |s: &NbboSnapshot| {
        if let Some(b) = s.nbbo.best_bid() {
            if !is_stub_quote(b, s.ref_price, stub_threshold) {
                min_bid = Some(min_bid.map_or(b, |m| m.min(b)));
            }
        }
        if let Some(o) = s.nbbo.best_offer() {
            if !is_stub_quote(o, s.ref_price, stub_threshold) {
                max_offer = Some(max_offer.map_or(o, |m| m.max(o)));
            }
        }
    };
    for s in snaps {
        if seq_cutoff.is_some_and(|c| s.seq >= c) {
            break;
        }
        if s.ts <= start {
            straddler = Some(s);
            continue;
        }
        if s.ts > t {
            break;
        }
        any = true;
        fold(s);
    }
    if let Some(s) = straddler {
        any = true;
        fold(s);
    }
    if !any {
        return Err(NoHistory);
    }
    Ok(QuoteBounds {
        least_aggressive_bid: min_bid,
        least_aggressive_offer: max_offer,
    })
}

/// Last snapshot ordered strictly before stream position `seq`.
pub fn snapshot_before_seq(history: &[NbboSnapshot], seq: u64) -> Option<&NbboSnapshot> {
    let idx = history.partition_point(|s| s.seq < seq);
    idx.checked_sub(1).map(|i| &history[i])
}
