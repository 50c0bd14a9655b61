//! Streaming mini-flash-crash detector.
//!
//! A down crash is a run of trades on one venue that ticks down at least
//! `min_ticks` times before ticking up, within `max_window_ms`, and moves
//! the price by more than `min_move_pct`; up crashes are symmetric. Zero
//! ticks neither count toward the minimum nor terminate a run — only an
//! opposing tick ends one.
//!
//! Detection is exact: a contiguous window of trades qualifies when all
//! three conditions hold, and overlapping qualifying windows are merged
//! into one reported event. The streaming state machine reproduces the
//! brute-force all-windows enumeration (see the `oracle` module) while
//! keeping only the trades inside the time horizon.

use std::collections::VecDeque;

use crate::tape::{ExchangeId, Ms, Price, Symbol, TradeRecord};

/// Trade-to-trade price change. Equal prices are `Zero`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TickDirection {
    Up,
    Down,
    Zero,
}

/// Exact fixed-point comparison of consecutive trade prices.
pub fn tick_direction(prev: Price, cur: Price) -> TickDirection {
    match cur.0.cmp(&prev.0) {
        std::cmp::Ordering::Greater => TickDirection::Up,
        std::cmp::Ordering::Less => TickDirection::Down,
        std::cmp::Ordering::Equal => TickDirection::Zero,
    }
}

/// Crash direction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }

    fn matches(self, tick: TickDirection) -> bool {
        matches!(
            (self, tick),
            (Direction::Up, TickDirection::Up) | (Direction::Down, TickDirection::Down)
        )
    }

    fn opposes(self, tick: TickDirection) -> bool {
        matches!(
            (self, tick),
            (Direction::Up, TickDirection::Down) | (Direction::Down, TickDirection::Up)
        )
    }
}

/// Detection thresholds. Defaults: 10 ticks, 1.5 s, 0.8%.
#[derive(Clone, Copy, Debug)]
pub struct DetectorConfig {
    pub min_ticks: u32,
    pub max_window_ms: Ms,
    /// Minimum relative move in ten-thousandths (80 = 0.8%). The comparison
    /// is strict, on integer fixed-point prices.
    pub min_move_tenk: i64,
}

impl DetectorConfig {
    pub fn with_move_pct(min_ticks: u32, max_window_ms: Ms, min_move_pct: f64) -> DetectorConfig {
        DetectorConfig {
            min_ticks,
            max_window_ms,
            min_move_tenk: (min_move_pct * 100.0).round() as i64,
        }
    }

    /// `|last/first - 1| > threshold`, strict, exact in fixed point.
    fn move_qualifies(&self, dir: Direction, first: Price, last: Price) -> bool {
        match dir {
            Direction::Down => 10_000 * (first.0 - last.0) > self.min_move_tenk * first.0,
            Direction::Up => 10_000 * (last.0 - first.0) > self.min_move_tenk * first.0,
        }
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::with_move_pct(10, 1500, 0.8)
    }
}

/// A detected mini flash crash on a single venue.
#[derive(Clone, Debug)]
pub struct CrashEvent {
    pub symbol: Symbol,
    pub exchange: ExchangeId,
    pub direction: Direction,
    /// Constituent trades, first to last.
    pub trades: Vec<TradeRecord>,
    pub start_ts: Ms,
    pub end_ts: Ms,
    /// Directional ticks inside the run (zero ticks excluded).
    pub tick_count: u32,
    /// Signed percent change from the first to the last constituent price.
    pub pct_change: f64,
    pub total_volume: u64,
    pub n_trades: u32,
    /// Fraction of constituent trades marked ISO.
    pub iso_fraction: f64,
    /// Run was still extendable when the tape ended.
    pub truncated: bool,
}

impl CrashEvent {
    pub fn duration_ms(&self) -> Ms {
        self.end_ts - self.start_ts
    }

    pub fn first_price(&self) -> Price {
        self.trades.first().map(|t| t.price).unwrap_or(Price::ZERO)
    }

    pub fn last_price(&self) -> Price {
        self.trades.last().map(|t| t.price).unwrap_or(Price::ZERO)
    }

    pub fn first_seq(&self) -> u64 {
        self.trades.first().map(|t| t.seq).unwrap_or(0)
    }

    pub fn last_seq(&self) -> u64 {
        self.trades.last().map(|t| t.seq).unwrap_or(0)
    }
}

struct SegEntry {
    trade: TradeRecord,
    /// Position within the current directional segment.
    idx: u64,
    /// Directional ticks from the segment start up to and including this
    /// trade's incoming tick. Ticks strictly inside a window [i..j] are
    /// `dticks[j] - dticks[i]`.
    dticks: u64,
}

struct OpenRun {
    start_idx: u64,
    end_idx: u64,
    start_dticks: u64,
    end_dticks: u64,
    end_ts: Ms,
    /// Every segment trade since `start_idx`; trimmed to `end_idx` on emit.
    trades: Vec<TradeRecord>,
}

struct DirTracker {
    dir: Direction,
    entries: VecDeque<SegEntry>,
    next_idx: u64,
    cum_dticks: u64,
    run: Option<OpenRun>,
}

impl DirTracker {
    fn new(dir: Direction) -> DirTracker {
        DirTracker {
            dir,
            entries: VecDeque::new(),
            next_idx: 0,
            cum_dticks: 0,
            run: None,
        }
    }

    fn start_segment(&mut self, trade: TradeRecord) {
        self.entries.clear();
        self.next_idx = 0;
        self.cum_dticks = 0;
        self.entries.push_back(SegEntry {
            trade,
            idx: 0,
            dticks: 0,
        });
        self.next_idx = 1;
    }

    fn emit(&mut self, run: OpenRun, truncated: bool, cfg: &DetectorConfig, out: &mut Vec<CrashEvent>) {
        let n = (run.end_idx - run.start_idx + 1) as usize;
        let mut trades = run.trades;
        trades.truncate(n);
        debug_assert_eq!(trades.len(), n);
        let first = trades[0];
        let last = trades[n - 1];
        debug_assert!(run.end_dticks - run.start_dticks >= cfg.min_ticks as u64);
        debug_assert!(cfg.move_qualifies(self.dir, first.price, last.price));
        let total_volume: u64 = trades.iter().map(|t| t.size as u64).sum();
        let iso = trades.iter().filter(|t| t.is_iso).count();
        out.push(CrashEvent {
            symbol: first.symbol,
            exchange: first.exchange,
            direction: self.dir,
            start_ts: first.ts,
            end_ts: last.ts,
            tick_count: (run.end_dticks - run.start_dticks) as u32,
            pct_change: 100.0 * (last.price.0 as f64 / first.price.0 as f64 - 1.0),
            total_volume,
            n_trades: n as u32,
            iso_fraction: iso as f64 / n as f64,
            truncated,
            trades,
        });
    }

    fn push(&mut self, trade: TradeRecord, tick: TickDirection, cfg: &DetectorConfig, out: &mut Vec<CrashEvent>) {
        if self.dir.opposes(tick) {
            if let Some(run) = self.run.take() {
                self.emit(run, false, cfg, out);
            }
            self.start_segment(trade);
            return;
        }

        // A run that can no longer be reached by any window ending at or
        // after this trade is complete.
        if let Some(run) = &self.run {
            if trade.ts > run.end_ts + cfg.max_window_ms {
                let run = self.run.take().unwrap();
                self.emit(run, false, cfg, out);
            }
        }

        self.cum_dticks += self.dir.matches(tick) as u64;
        self.entries.push_back(SegEntry {
            trade,
            idx: self.next_idx,
            dticks: self.cum_dticks,
        });
        self.next_idx += 1;
        if let Some(run) = &mut self.run {
            run.trades.push(trade);
        }

        while let Some(front) = self.entries.front() {
            if front.trade.ts < trade.ts - cfg.max_window_ms {
                self.entries.pop_front();
            } else {
                break;
            }
        }

        // The earliest in-horizon entry has the fewest counted ticks and the
        // most favorable start price of any candidate window start, so a
        // qualifying window ending here exists iff the front qualifies; the
        // union of all of them is [front, here].
        if self.entries.len() < 2 {
            return;
        }
        let front = self.entries.front().unwrap();
        let ticks_ok = self.cum_dticks - front.dticks >= cfg.min_ticks as u64;
        if !ticks_ok || !cfg.move_qualifies(self.dir, front.trade.price, trade.price) {
            return;
        }
        let lo_idx = front.idx;
        let j_idx = self.next_idx - 1;
        if let Some(run) = &mut self.run {
            if lo_idx <= run.end_idx {
                // Overlaps the open run: extend it.
                run.end_idx = j_idx;
                run.end_dticks = self.cum_dticks;
                run.end_ts = trade.ts;
                return;
            }
        }
        // Disjoint from (or absent) the open run: emit and reopen.
        if let Some(run) = self.run.take() {
            self.emit(run, false, cfg, out);
        }
        let front = self.entries.front().unwrap();
        self.run = Some(OpenRun {
            start_idx: front.idx,
            end_idx: j_idx,
            start_dticks: front.dticks,
            end_dticks: self.cum_dticks,
            end_ts: trade.ts,
            trades: self.entries.iter().map(|e| e.trade).collect(),
        });
    }

    fn finish(&mut self, cfg: &DetectorConfig, out: &mut Vec<CrashEvent>) {
        if let Some(run) = self.run.take() {
            self.emit(run, true, cfg, out);
        }
    }

    fn buffered(&self) -> usize {
        self.entries.len() + self.run.as_ref().map_or(0, |r| r.trades.len())
    }
}

/// Streaming detector for one `(symbol, exchange)` trade sequence.
pub struct CrashDetector {
    cfg: DetectorConfig,
    last_price: Option<Price>,
    down: DirTracker,
    up: DirTracker,
}

impl CrashDetector {
    pub fn new(cfg: DetectorConfig) -> CrashDetector {
        CrashDetector {
            cfg,
            last_price: None,
            down: DirTracker::new(Direction::Down),
            up: DirTracker::new(Direction::Up),
        }
    }

    /// Feed the next trade (non-decreasing ts); completed crashes are
    /// appended to `out`.
    pub fn push(&mut self, trade: &TradeRecord, out: &mut Vec<CrashEvent>) {
        match self.last_price {
            None => {
                self.down.start_segment(*trade);
                self.up.start_segment(*trade);
            }
            Some(prev) => {
                let tick = tick_direction(prev, trade.price);
                self.down.push(*trade, tick, &self.cfg, out);
                self.up.push(*trade, tick, &self.cfg, out);
            }
        }
        self.last_price = Some(trade.price);
    }

    /// Flush runs still open at end of tape; those are tagged truncated.
    pub fn finish(&mut self, out: &mut Vec<CrashEvent>) {
        self.down.finish(&self.cfg, out);
        self.up.finish(&self.cfg, out);
    }

    /// Trades currently buffered; stays bounded by trade density over the
    /// detection window plus any open run.
    pub fn buffered(&self) -> usize {
        self.down.buffered().max(self.up.buffered())
    }
}

/// Run the detector over a complete per-venue trade sequence.
pub fn detect_crashes(trades: &[TradeRecord], cfg: DetectorConfig) -> Vec<CrashEvent> {
    let mut det = CrashDetector::new(cfg);
    let mut out = Vec::new();
    for t in trades {
        det.push(t, &mut out);
    }
    det.finish(&mut out);
    out
}

/// Aggregate crash statistics: average absolute percent change (penny
/// stocks and moves above 100% excluded from this column only), average
/// duration, volume, trade count, ISO percentage, and per-venue shares.
#[derive(Clone, Debug, Default)]
pub struct CrashStats {
    pub n_crashes: usize,
    pub n_up: usize,
    pub n_down: usize,
    pub avg_pct_change: Option<f64>,
    /// Crashes excluded from the percent-change average.
    pub pct_change_excluded: usize,
    pub avg_duration_ms: Option<f64>,
    pub avg_total_volume: Option<f64>,
    pub avg_n_trades: Option<f64>,
    /// Mean over crashes of the per-crash ISO trade percentage.
    pub avg_iso_pct: Option<f64>,
    /// Percent of crashes per venue; sums to 100 when any crash exists.
    pub exchange_share_pct: Vec<(ExchangeId, f64)>,
}

const PENNY_STOCK: Price = Price(10_000);

pub fn crash_stats(crashes: &[CrashEvent]) -> CrashStats {
    let mut stats = CrashStats {
        n_crashes: crashes.len(),
        ..CrashStats::default()
    };
    if crashes.is_empty() {
        return stats;
    }
    let n = crashes.len() as f64;
    let mut pct_sum = 0.0;
    let mut pct_n = 0usize;
    let mut venue_counts = [0usize; 7];
    let mut dur_sum = 0.0;
    let mut vol_sum = 0.0;
    let mut trades_sum = 0.0;
    let mut iso_sum = 0.0;
    for c in crashes {
        match c.direction {
            Direction::Up => stats.n_up += 1,
            Direction::Down => stats.n_down += 1,
        }
        let abs_pct = c.pct_change.abs();
        if c.first_price() >= PENNY_STOCK && abs_pct <= 100.0 {
            pct_sum += abs_pct;
            pct_n += 1;
        }
        dur_sum += c.duration_ms() as f64;
        vol_sum += c.total_volume as f64;
        trades_sum += c.n_trades as f64;
        iso_sum += 100.0 * c.iso_fraction;
        venue_counts[c.exchange.index()] += 1;
    }
    stats.pct_change_excluded = crashes.len() - pct_n;
    stats.avg_pct_change = (pct_n > 0).then(|| pct_sum / pct_n as f64);
    stats.avg_duration_ms = Some(dur_sum / n);
    stats.avg_total_volume = Some(vol_sum / n);
    stats.avg_n_trades = Some(trades_sum / n);
    stats.avg_iso_pct = Some(iso_sum / n);
    stats.exchange_share_pct = ExchangeId::ALL
        .iter()
        .filter(|e| venue_counts[e.index()] > 0)
        .map(|&e| (e, 100.0 * venue_counts[e.index()] as f64 / n))
        .collect();
    stats
}
