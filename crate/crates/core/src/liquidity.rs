//! Event-study liquidity metrics around crashes.
//!
//! Metrics are sampled into fixed buckets (default 100 ms) over a window
//! (default ±60 s) centered on the crash start; bucket offset 0 contains
//! the crash start instant. Quote state is a step function, so smoothing is
//! last-observation-carried-forward: each bucket reports the state
//! prevailing at its end. Buckets with no state yet are absent, not zero.

use thiserror::Error;

use crate::nbbo::{NbboSnapshot, NbboStatus, Side};
use crate::tape::{Ms, Price, QuoteRecord};

#[derive(Debug, Error)]
#[error("quote side missing")]
pub struct MissingSide;

#[derive(Debug, Error)]
#[error("no two-sided NBBO update in the window")]
pub struct EmptyWindow;

/// Average of the quoted bid and offer, in dollars.
pub fn midprice(bid: Price, offer: Price) -> f64 {
    (bid.dollars() + offer.dollars()) / 2.0
}

/// Quoted spread divided by midprice, in percent.
pub fn relative_spread(bid: Price, offer: Price) -> f64 {
    100.0 * (offer.dollars() - bid.dollars()) / midprice(bid, offer)
}

/// NBBO spread with the locked/crossed rule: a locked or crossed NBBO has
/// spread exactly 0. One-sided or empty books have no spread.
pub fn nbbo_spread(snapshot: &NbboSnapshot) -> Option<f64> {
    let nbbo = &snapshot.nbbo;
    match nbbo.status() {
        NbboStatus::Locked | NbboStatus::Crossed => Some(0.0),
        NbboStatus::Normal => Some(relative_spread(nbbo.best_bid()?, nbbo.best_offer()?)),
        NbboStatus::OneSided | NbboStatus::Empty => None,
    }
}

/// Aggregate displayed shares at the national best on one side.
pub fn nbbo_volume(snapshot: &NbboSnapshot, side: Side) -> Option<f64> {
    snapshot.nbbo.side(side).map(|agg| agg.size as f64)
}

/// One venue's own top-of-book spread; absent when one-sided or when the
/// venue book is crossed (feed glitch).
pub fn venue_spread(q: &QuoteRecord) -> Option<f64> {
    let (bid, _) = q.bid_quote()?;
    let (offer, _) = q.offer_quote()?;
    (bid <= offer).then(|| relative_spread(bid, offer))
}

/// One venue's displayed size at its own best, per side.
pub fn venue_volume(q: &QuoteRecord, side: Side) -> Option<f64> {
    match side {
        Side::Bid => q.bid_quote().map(|(_, s)| s as f64),
        Side::Offer => q.offer_quote().map(|(_, s)| s as f64),
    }
}

/// Window and bucket geometry for the event study.
#[derive(Clone, Copy, Debug)]
pub struct StudyConfig {
    pub window_ms: Ms,
    pub bucket_ms: Ms,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            window_ms: 60_000,
            bucket_ms: 100,
        }
    }
}

impl StudyConfig {
    /// Buckets on each side of the crash start.
    pub fn buckets_per_side(&self) -> usize {
        (self.window_ms / self.bucket_ms) as usize
    }
}

/// Per-crash bucketed series of one metric. `values[i]` belongs to bucket
/// offset `start_offset + i`; bucket `b` covers
/// `[crash_start + b*bucket_ms, crash_start + (b+1)*bucket_ms)`.
#[derive(Clone, Debug)]
pub struct EventWindowSeries {
    pub crash_id: usize,
    pub metric: &'static str,
    pub bucket_ms: Ms,
    pub start_offset: i64,
    pub values: Vec<Option<f64>>,
}

impl EventWindowSeries {
    pub fn value_at_offset(&self, offset: i64) -> Option<f64> {
        let idx = offset - self.start_offset;
        if idx < 0 {
            return None;
        }
        self.values.get(idx as usize).copied().flatten()
    }
}

/// Bucket a step-function metric (time-ordered `(ts, value)` change points)
/// into the event window. Each bucket samples the last state at or before
/// the bucket end; a change point exactly on a bucket boundary belongs to
/// the bucket it opens.
pub fn event_window_series(
    points: &[(Ms, Option<f64>)],
    crash_start: Ms,
    cfg: &StudyConfig,
    crash_id: usize,
    metric: &'static str,
) -> EventWindowSeries {
    let per_side = cfg.buckets_per_side() as i64;
    let start_offset = -per_side;
    let n = (2 * per_side) as usize;
    let window_start = crash_start - cfg.window_ms;

    // Last change point strictly before the first bucket end seeds LOCF.
    let mut idx = points.partition_point(|(ts, _)| *ts < window_start);
    let mut last: Option<&(Ms, Option<f64>)> = idx.checked_sub(1).map(|i| &points[i]);

    let mut values = Vec::with_capacity(n);
    for b in 0..n as i64 {
        let bucket_end = window_start + (b + 1) * cfg.bucket_ms;
        while idx < points.len() && points[idx].0 < bucket_end {
            last = Some(&points[idx]);
            idx += 1;
        }
        values.push(last.and_then(|(_, v)| *v));
    }
    EventWindowSeries {
        crash_id,
        metric,
        bucket_ms: cfg.bucket_ms,
        start_offset,
        values,
    }
}

/// NBBO metric change points for the series builder.
pub fn nbbo_points<F>(history: &[NbboSnapshot], extract: F) -> Vec<(Ms, Option<f64>)>
where
    F: Fn(&NbboSnapshot) -> Option<f64>,
{
    history.iter().map(|s| (s.ts, extract(s))).collect()
}

/// One venue's quote change points for the series builder.
pub fn venue_points<F>(quotes: &[QuoteRecord], extract: F) -> Vec<(Ms, Option<f64>)>
where
    F: Fn(&QuoteRecord) -> Option<f64>,
{
    quotes.iter().map(|q| (q.ts, extract(q))).collect()
}

/// Percentage of locked or crossed NBBO updates among two-sided updates in
/// the slice. Event-weighted: each update counts once.
pub fn locked_crossed_fraction(snapshots: &[NbboSnapshot]) -> Result<f64, EmptyWindow> {
    let mut two_sided = 0u64;
    let mut locked_crossed = 0u64;
    for s in snapshots {
        let status = s.nbbo.status();
        if status.is_two_sided() {
            two_sided += 1;
            if matches!(status, NbboStatus::Locked | NbboStatus::Crossed) {
                locked_crossed += 1;
            }
        }
    }
    if two_sided == 0 {
        return Err(EmptyWindow);
    }
    Ok(100.0 * locked_crossed as f64 / two_sided as f64)
}

/// Cross-crash mean of a metric per bucket offset, with scalar pre/post
/// means over the per-offset means.
#[derive(Clone, Debug)]
pub struct AggregateSeries {
    pub metric: &'static str,
    pub bucket_ms: Ms,
    pub start_offset: i64,
    pub mean: Vec<Option<f64>>,
    pub count: Vec<u32>,
    pub pre_mean: Option<f64>,
    pub post_mean: Option<f64>,
}

impl AggregateSeries {
    pub fn pct_change(&self) -> Option<f64> {
        match (self.pre_mean, self.post_mean) {
            (Some(pre), Some(post)) if pre != 0.0 => Some(100.0 * (post - pre) / pre),
            _ => None,
        }
    }
}

/// Mean per offset over crashes with data at that offset. Summation runs in
/// input order, so results are deterministic for a fixed crash ordering.
pub fn aggregate_event_study(series: &[EventWindowSeries]) -> AggregateSeries {
    let first = series.first().expect("at least one series");
    let n = first.values.len();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    for s in series {
        assert_eq!(s.values.len(), n, "series geometry must match");
        for (i, v) in s.values.iter().enumerate() {
            if let Some(v) = v {
                sum[i] += v;
                count[i] += 1;
            }
        }
    }
    let mean: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let side_mean = |range: std::ops::Range<usize>| {
        let vals: Vec<f64> = range.filter_map(|i| mean[i]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let split = (-first.start_offset) as usize;
    AggregateSeries {
        metric: first.metric,
        bucket_ms: first.bucket_ms,
        start_offset: first.start_offset,
        pre_mean: side_mean(0..split),
        post_mean: side_mean(split..n),
        mean,
        count,
    }
}
