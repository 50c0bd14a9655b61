//! Crash cause classification.
//!
//! A crash is *ISO-initiated* when its constituent trades are all marked
//! ISO apart from a leading prefix of exceptions executed within the least
//! aggressive market-wide best quotes of the prior second. It is
//! *auto-routing-initiated* when the constituents are all regular-marked
//! (same prefix exception), and additionally every away venue displaying
//! the NBBO on the crash side had its protected top matched by trades
//! before the regular run began. Everything else is unclassified.

use thiserror::Error;

use crate::detect::{CrashEvent, Direction};
use crate::nbbo::{bounds_from_history, snapshot_before_seq, NbboSnapshot, QuoteBounds, Side};
use crate::tape::{Ms, TradeRecord};

/// Classification outcome; the numeric codes are the `Type` regressor.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum ClassKind {
    IsoInitiated = 1,
    AutoRoutingInitiated = 2,
    Unclassified = 3,
}

impl ClassKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassKind::IsoInitiated => "iso_initiated",
            ClassKind::AutoRoutingInitiated => "auto_routing_initiated",
            ClassKind::Unclassified => "unclassified",
        }
    }
}

/// Classification with its evidence.
#[derive(Clone, Debug)]
pub struct CrashClassification {
    pub kind: ClassKind,
    /// Number of wrongly-marked leading exception trades.
    pub prefix_k: u32,
    /// Auto-routing evidence: protected tops away from the crash venue were
    /// matched before the run.
    pub top_cleared: bool,
    pub notes: String,
}

impl CrashClassification {
    fn unclassified(notes: impl Into<String>) -> CrashClassification {
        CrashClassification {
            kind: ClassKind::Unclassified,
            prefix_k: 0,
            top_cleared: false,
            notes: notes.into(),
        }
    }
}

/// Which mark the post-prefix run must carry.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RequiredMark {
    Iso,
    Regular,
}

impl RequiredMark {
    fn wrongly_marked(self, t: &TradeRecord) -> bool {
        match self {
            RequiredMark::Iso => !t.is_iso,
            RequiredMark::Regular => t.is_iso,
        }
    }
}

/// Result of the exception-prefix test.
#[derive(Clone, Copy, Debug)]
pub struct PrefixCheck {
    /// All wrongly-marked trades sit in the leading prefix and printed
    /// within the quote bounds.
    pub valid: bool,
    /// Count of wrongly-marked exception trades (0 when invalid).
    pub k: u32,
    /// Index of the first trade of the correctly-marked run.
    pub suffix_start: usize,
}

impl PrefixCheck {
    pub fn suffix_len(&self, n: usize) -> usize {
        n - self.suffix_start
    }
}

/// Find the leading exception prefix: everything up to the last
/// wrongly-marked trade is prefix, and each wrongly-marked trade in it
/// must have printed within the bounds (both ends inclusive).
pub fn exception_prefix(
    trades: &[TradeRecord],
    bounds: &QuoteBounds,
    required: RequiredMark,
) -> PrefixCheck {
    let suffix_start = trades
        .iter()
        .rposition(|t| required.wrongly_marked(t))
        .map_or(0, |p| p + 1);
    let mut k = 0u32;
    for t in &trades[..suffix_start] {
        if required.wrongly_marked(t) {
            if !bounds.contains(t.price) {
                return PrefixCheck {
                    valid: false,
                    k: 0,
                    suffix_start,
                };
            }
            k += 1;
        }
    }
    PrefixCheck {
        valid: true,
        k,
        suffix_start,
    }
}

#[derive(Debug, Error)]
#[error("insufficient quote history around the crash")]
pub struct InsufficientQuoteHistory;

#[derive(Clone, Copy, Debug)]
pub struct ClassifyConfig {
    /// Window for the least-aggressive quote bounds before the crash.
    pub flicker_window_ms: Ms,
    /// How far before the regular run clearing trades may sit.
    pub clearing_lookback_ms: Ms,
    pub stub_threshold: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            flicker_window_ms: 1000,
            clearing_lookback_ms: 1000,
            stub_threshold: 0.5,
        }
    }
}

/// Whether every away venue posting the NBBO on the crash side, as of the
/// last NBBO snapshot before the regular run, had its displayed size matched
/// by trades at that venue at the protected price before the run started.
///
/// Price improvement does not count: clearing trades must print exactly at
/// the protected price, at the protected venue, within the lookback window.
pub fn top_of_book_cleared(
    crash: &CrashEvent,
    first_regular: &TradeRecord,
    history: &[NbboSnapshot],
    nearby_trades: &[TradeRecord],
    cfg: &ClassifyConfig,
) -> Result<bool, InsufficientQuoteHistory> {
    let snap = snapshot_before_seq(history, first_regular.seq).ok_or(InsufficientQuoteHistory)?;
    let side = match crash.direction {
        Direction::Down => Side::Bid,
        Direction::Up => Side::Offer,
    };
    let Some(agg) = snap.nbbo.side(side) else {
        // Nothing displayed on the crash side: vacuously cleared.
        return Ok(true);
    };
    let window_start = first_regular.ts - cfg.clearing_lookback_ms;
    for venue in agg.venues.iter() {
        if venue.exchange == crash.exchange {
            continue;
        }
        let executed: u64 = nearby_trades
            .iter()
            .filter(|t| {
                t.exchange == venue.exchange
                    && t.price == agg.price
                    && t.seq < first_regular.seq
                    && t.ts >= window_start
            })
            .map(|t| t.size as u64)
            .sum();
        if executed < venue.size as u64 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Classify one crash against the NBBO history and cross-venue trades
/// around it. Missing history yields `Unclassified` with a diagnostic.
pub fn classify_crash(
    crash: &CrashEvent,
    history: &[NbboSnapshot],
    nearby_trades: &[TradeRecord],
    cfg: &ClassifyConfig,
) -> CrashClassification {
    let bounds = match bounds_from_history(
        history,
        crash.start_ts,
        cfg.flicker_window_ms,
        Some(crash.first_seq()),
        cfg.stub_threshold,
    ) {
        Ok(b) => b,
        Err(_) => {
            return CrashClassification::unclassified(
                "insufficient quote history: no NBBO snapshot in the pre-crash window",
            )
        }
    };

    let n = crash.trades.len();

    let iso = exception_prefix(&crash.trades, &bounds, RequiredMark::Iso);
    if iso.valid && iso.suffix_len(n) > 0 {
        return CrashClassification {
            kind: ClassKind::IsoInitiated,
            prefix_k: iso.k,
            top_cleared: false,
            notes: format!("{} exception trade(s), ISO run of {}", iso.k, iso.suffix_len(n)),
        };
    }

    let regular = exception_prefix(&crash.trades, &bounds, RequiredMark::Regular);
    if regular.valid && regular.suffix_len(n) > 0 {
        let first_regular = &crash.trades[regular.suffix_start];
        match top_of_book_cleared(crash, first_regular, history, nearby_trades, cfg) {
            Ok(true) => {
                return CrashClassification {
                    kind: ClassKind::AutoRoutingInitiated,
                    prefix_k: regular.k,
                    top_cleared: true,
                    notes: format!(
                        "{} exception trade(s), regular run of {}, protected tops cleared",
                        regular.k,
                        regular.suffix_len(n)
                    ),
                };
            }
            Ok(false) => {
                return CrashClassification::unclassified(
                    "regular run but protected tops not cleared before it",
                )
            }
            Err(e) => return CrashClassification::unclassified(e.to_string()),
        }
    }

    CrashClassification::unclassified("mixed trade marks violate both definitions")
}
