//! End-to-end wiring: tape → NBBO → detection → classification →
//! event study → fleeting liquidity → logit.
//!
//! Work is partitioned per symbol (and per venue inside the detector), so
//! it parallelizes freely; results are reassembled in a fixed order so a
//! run is byte-identical regardless of thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::classify::{classify_crash, ClassKind, ClassifyConfig, CrashClassification};
use crate::detect::{crash_stats, CrashDetector, CrashEvent, CrashStats, DetectorConfig};
use crate::fleetliq::{
    build_feature_rows, detect_fleeting_liquidity, fit_logit, FeatureVector, LogitConfig,
    LogitError, LogitModel,
};
use crate::liquidity::{
    aggregate_event_study, event_window_series, locked_crossed_fraction, nbbo_points,
    nbbo_spread, nbbo_volume, venue_points, venue_spread, venue_volume, AggregateSeries,
    EventWindowSeries, StudyConfig,
};
use crate::nbbo::{BookConfig, BookState, NbboSnapshot, QuoteOutcome, Side};
use crate::tape::{ExchangeId, LoadedTape, Ms, QuoteRecord, Symbol, TapeEvent, TradeRecord};

/// Metrics computed in the event study, in report order.
pub const STUDY_METRICS: [&str; 6] = [
    "nbbo_spread",
    "exchange_spread",
    "nbbo_bid_volume",
    "nbbo_offer_volume",
    "venue_bid_volume",
    "venue_offer_volume",
];

#[derive(Clone, Debug, Default)]
pub struct AnalysisConfig {
    pub detector: DetectorConfig,
    pub book: BookConfig,
    pub classify: ClassifyConfig,
    pub study: StudyConfig,
    pub logit: LogitConfig,
    /// Thread count; 0 uses the rayon default.
    pub jobs: usize,
    /// When false, stop after detection (no NBBO history is retained).
    pub full_analysis: bool,
}

impl AnalysisConfig {
    pub fn full() -> AnalysisConfig {
        AnalysisConfig {
            full_analysis: true,
            ..AnalysisConfig::default()
        }
    }

    pub fn detect_only() -> AnalysisConfig {
        AnalysisConfig::default()
    }
}

/// One analyzed crash.
#[derive(Clone, Debug)]
pub struct CrashRecord {
    pub crash: CrashEvent,
    pub classification: CrashClassification,
    /// Absent when the quote history could not support the test.
    pub fleeting: Option<bool>,
}

/// Outcome of the logit stage.
#[derive(Clone, Debug)]
pub enum LogitOutcome {
    Fitted(LogitModel),
    Skipped(String),
}

/// Everything the reports need.
#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub crashes: Vec<CrashRecord>,
    pub stats: CrashStats,
    pub class_counts: BTreeMap<&'static str, usize>,
    pub fleeting_count: usize,
    pub fleeting_known: usize,
    /// One aggregate per entry of [`STUDY_METRICS`]; `None` without crashes.
    pub studies: Vec<Option<AggregateSeries>>,
    /// Mean over crashes of the locked/crossed percentage before/after.
    pub locked_crossed_pre: Option<f64>,
    pub locked_crossed_post: Option<f64>,
    pub logit: LogitOutcome,
    pub feature_rows: Vec<FeatureVector>,
    pub stale_quotes: u64,
}

struct CrashBundle {
    record: CrashRecord,
    series: Vec<EventWindowSeries>,
    locked_pre: Option<f64>,
    locked_post: Option<f64>,
}

struct SymbolOutcome {
    bundles: Vec<CrashBundle>,
    stale_quotes: u64,
}

fn ts_slice<T, F: Fn(&T) -> Ms>(items: &[T], ts_of: F, from: Ms, to: Ms) -> &[T] {
    let lo = items.partition_point(|x| ts_of(x) < from);
    let hi = items.partition_point(|x| ts_of(x) < to);
    &items[lo..hi]
}

fn analyze_symbol(stream: &[TapeEvent], symbol: Symbol, cfg: &AnalysisConfig) -> SymbolOutcome {
    let mut book = BookState::new(symbol, cfg.book);
    let mut history: Vec<NbboSnapshot> = Vec::new();
    let mut venue_quotes: BTreeMap<ExchangeId, Vec<QuoteRecord>> = BTreeMap::new();
    let mut venue_trades: BTreeMap<ExchangeId, Vec<TradeRecord>> = BTreeMap::new();
    let mut all_trades: Vec<TradeRecord> = Vec::new();

    for ev in stream {
        match ev {
            TapeEvent::Quote(q) => {
                if let QuoteOutcome::Changed(s) = book.apply_quote(q) {
                    history.push(s);
                }
                venue_quotes.entry(q.exchange).or_default().push(*q);
            }
            TapeEvent::Trade(t) => {
                book.apply_trade(t);
                venue_trades.entry(t.exchange).or_default().push(*t);
                all_trades.push(*t);
            }
        }
    }

    // Detection runs per venue.
    let mut crashes: Vec<CrashEvent> = Vec::new();
    for trades in venue_trades.values() {
        let mut det = CrashDetector::new(cfg.detector);
        for t in trades {
            det.push(t, &mut crashes);
        }
        det.finish(&mut crashes);
    }
    crashes.sort_by_key(|c| (c.start_ts, c.first_seq(), c.exchange.index()));

    let window = cfg.study.window_ms;
    let bundles = crashes
        .into_iter()
        .enumerate()
        .map(|(crash_id, crash)| {
            let near = ts_slice(
                &all_trades,
                |t| t.ts,
                crash.start_ts - cfg.classify.clearing_lookback_ms - cfg.classify.flicker_window_ms,
                crash.end_ts + 1,
            );
            let classification = classify_crash(&crash, &history, near, &cfg.classify);
            let fleeting = detect_fleeting_liquidity(&crash, &history).ok();

            let start = crash.start_ts;
            let empty: Vec<QuoteRecord> = Vec::new();
            let vq = venue_quotes.get(&crash.exchange).unwrap_or(&empty);
            let series = vec![
                event_window_series(&nbbo_points(&history, nbbo_spread), start, &cfg.study, crash_id, STUDY_METRICS[0]),
                event_window_series(&venue_points(vq, venue_spread), start, &cfg.study, crash_id, STUDY_METRICS[1]),
                event_window_series(&nbbo_points(&history, |s| nbbo_volume(s, Side::Bid)), start, &cfg.study, crash_id, STUDY_METRICS[2]),
                event_window_series(&nbbo_points(&history, |s| nbbo_volume(s, Side::Offer)), start, &cfg.study, crash_id, STUDY_METRICS[3]),
                event_window_series(&venue_points(vq, |q| venue_volume(q, Side::Bid)), start, &cfg.study, crash_id, STUDY_METRICS[4]),
                event_window_series(&venue_points(vq, |q| venue_volume(q, Side::Offer)), start, &cfg.study, crash_id, STUDY_METRICS[5]),
            ];
            let pre = ts_slice(&history, |s| s.ts, start - window, start);
            let post = ts_slice(&history, |s| s.ts, start, start + window);
            CrashBundle {
                record: CrashRecord {
                    crash,
                    classification,
                    fleeting,
                },
                series,
                locked_pre: locked_crossed_fraction(pre).ok(),
                locked_post: locked_crossed_fraction(post).ok(),
            }
        })
        .collect();

    SymbolOutcome {
        bundles,
        stale_quotes: book.stale_count(),
    }
}

/// Detection-only pass over one stream: crashes, no retained history.
fn detect_symbol(stream: &[TapeEvent], symbol: Symbol, cfg: &AnalysisConfig) -> SymbolOutcome {
    let mut engine = StreamEngine::new(symbol, cfg);
    let mut crashes = Vec::new();
    for ev in stream {
        engine.on_event(ev, &mut crashes);
    }
    engine.finish(&mut crashes);
    crashes.sort_by_key(|c| (c.start_ts, c.first_seq(), c.exchange.index()));
    SymbolOutcome {
        bundles: crashes
            .into_iter()
            .map(|crash| CrashBundle {
                record: CrashRecord {
                    crash,
                    classification: CrashClassification {
                        kind: ClassKind::Unclassified,
                        prefix_k: 0,
                        top_cleared: false,
                        notes: "detection-only run".to_string(),
                    },
                    fleeting: None,
                },
                series: Vec::new(),
                locked_pre: None,
                locked_post: None,
            })
            .collect(),
        stale_quotes: engine.book.stale_count(),
    }
}

/// Analyze a loaded tape. Deterministic for fixed inputs and config,
/// independent of `jobs`.
pub fn analyze(tape: &LoadedTape, cfg: &AnalysisConfig) -> AnalysisReport {
    let run = || {
        let symbols: Vec<(&Symbol, &crate::tape::EventStream)> = tape.streams.iter().collect();
        let outcomes: Vec<SymbolOutcome> = symbols
            .par_iter()
            .map(|(symbol, stream)| {
                if cfg.full_analysis {
                    analyze_symbol(&stream.events, **symbol, cfg)
                } else {
                    detect_symbol(&stream.events, **symbol, cfg)
                }
            })
            .collect();
        assemble(outcomes, cfg)
    };
    if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .expect("thread pool");
        pool.install(run)
    } else {
        run()
    }
}

fn assemble(outcomes: Vec<SymbolOutcome>, cfg: &AnalysisConfig) -> AnalysisReport {
    let mut crashes = Vec::new();
    let mut per_metric: Vec<Vec<EventWindowSeries>> = vec![Vec::new(); STUDY_METRICS.len()];
    let mut locked_pre = Vec::new();
    let mut locked_post = Vec::new();
    let mut stale_quotes = 0;
    for outcome in outcomes {
        stale_quotes += outcome.stale_quotes;
        for bundle in outcome.bundles {
            for (i, s) in bundle.series.into_iter().enumerate() {
                per_metric[i].push(s);
            }
            if let Some(v) = bundle.locked_pre {
                locked_pre.push(v);
            }
            if let Some(v) = bundle.locked_post {
                locked_post.push(v);
            }
            crashes.push(bundle.record);
        }
    }

    let stats = crash_stats(&crashes.iter().map(|r| r.crash.clone()).collect::<Vec<_>>());
    let mut class_counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    for r in &crashes {
        *class_counts.entry(r.classification.kind.name()).or_default() += 1;
    }
    let fleeting_known = crashes.iter().filter(|r| r.fleeting.is_some()).count();
    let fleeting_count = crashes.iter().filter(|r| r.fleeting == Some(true)).count();

    let studies = per_metric
        .into_iter()
        .map(|series| (!series.is_empty()).then(|| aggregate_event_study(&series)))
        .collect();

    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);

    // Only crashes with a known label enter the regression.
    let labelled: Vec<(&CrashRecord, bool)> = crashes
        .iter()
        .filter_map(|r| r.fleeting.map(|f| (r, f)))
        .collect();
    let feature_rows = build_feature_rows(
        &labelled.iter().map(|(r, _)| r.crash.clone()).collect::<Vec<_>>(),
        &labelled
            .iter()
            .map(|(r, _)| r.classification.clone())
            .collect::<Vec<_>>(),
        &labelled.iter().map(|(_, f)| *f).collect::<Vec<_>>(),
    );
    let logit = if !cfg.full_analysis {
        LogitOutcome::Skipped("detection-only run".to_string())
    } else if feature_rows.len() < 16 {
        LogitOutcome::Skipped(format!(
            "{} labelled crashes; need at least 16 for a meaningful fit",
            feature_rows.len()
        ))
    } else {
        match fit_logit(&feature_rows, &cfg.logit) {
            Ok(model) => LogitOutcome::Fitted(model),
            Err(e @ (LogitError::OneLabel | LogitError::Separation | LogitError::Singular)) => {
                LogitOutcome::Skipped(e.to_string())
            }
            Err(e) => LogitOutcome::Skipped(e.to_string()),
        }
    };

    AnalysisReport {
        stats,
        class_counts,
        fleeting_count,
        fleeting_known,
        studies,
        locked_crossed_pre: mean(&locked_pre),
        locked_crossed_post: mean(&locked_post),
        logit,
        feature_rows,
        crashes,
        stale_quotes,
    }
}

/// Detection + NBBO state machine for one symbol with bounded memory:
/// the book keeps a flicker-window ring and the detectors keep only the
/// trades inside the detection horizon.
pub struct StreamEngine {
    book: BookState,
    detectors: [Option<CrashDetector>; 7],
    detector_cfg: DetectorConfig,
}

impl StreamEngine {
    pub fn new(symbol: Symbol, cfg: &AnalysisConfig) -> StreamEngine {
        StreamEngine {
            book: BookState::new(symbol, cfg.book),
            detectors: Default::default(),
            detector_cfg: cfg.detector,
        }
    }

    pub fn on_event(&mut self, ev: &TapeEvent, out: &mut Vec<CrashEvent>) {
        match ev {
            TapeEvent::Quote(q) => {
                self.book.apply_quote(q);
            }
            TapeEvent::Trade(t) => {
                self.book.apply_trade(t);
                let det = self.detectors[t.exchange.index()]
                    .get_or_insert_with(|| CrashDetector::new(self.detector_cfg));
                det.push(t, out);
            }
        }
    }

    pub fn finish(&mut self, out: &mut Vec<CrashEvent>) {
        for det in self.detectors.iter_mut().flatten() {
            det.finish(out);
        }
    }

    pub fn nbbo(&self) -> &crate::nbbo::Nbbo {
        self.book.nbbo()
    }

    /// Upper bound on retained state, for memory-boundedness checks.
    pub fn buffered(&self) -> usize {
        self.book.history_len()
            + self
                .detectors
                .iter()
                .flatten()
                .map(|d| d.buffered())
                .max()
                .unwrap_or(0)
    }
}
