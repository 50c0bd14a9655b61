//! Report rendering: crash CSVs, summary tables, event-study files, the
//! NBBO change log, and the logit report.
//!
//! Output is deterministic: fixed decimal formatting, fixed orderings, no
//! wall-clock anywhere.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::detect::CrashStats;
use crate::fleetliq::LogitModel;
use crate::liquidity::AggregateSeries;
use crate::nbbo::NbboSnapshot;
use crate::pipeline::{AnalysisReport, CrashRecord, LogitOutcome, STUDY_METRICS};

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.decimals$}"))
}

/// `symbol,exchange,direction,start_ts,end_ts,n_trades,tick_count,pct_change,volume,iso_fraction`
/// plus `,type,prefix_k,top_cleared` when classifications were computed.
pub fn crashes_csv(records: &[CrashRecord], with_classification: bool) -> String {
    let mut out = String::new();
    out.push_str("symbol,exchange,direction,start_ts,end_ts,n_trades,tick_count,pct_change,volume,iso_fraction");
    if with_classification {
        out.push_str(",type,prefix_k,top_cleared");
    }
    out.push('\n');
    for r in records {
        let c = &r.crash;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{:.6},{},{:.6}",
            c.symbol,
            c.exchange.name(),
            c.direction.name(),
            c.start_ts,
            c.end_ts,
            c.n_trades,
            c.tick_count,
            c.pct_change,
            c.total_volume,
            c.iso_fraction
        );
        if with_classification {
            let _ = write!(
                out,
                ",{},{},{}",
                r.classification.kind.code(),
                r.classification.prefix_k,
                r.classification.top_cleared
            );
        }
        out.push('\n');
    }
    out
}

/// Optional NBBO change log: `ts,best_bid,bid_size,best_offer,offer_size,status`.
pub fn nbbo_log_csv(history: &[NbboSnapshot]) -> String {
    let mut out = String::from("ts,best_bid,bid_size,best_offer,offer_size,status\n");
    for s in history {
        let (bid, bid_size) = s
            .nbbo
            .bid
            .map_or((String::new(), String::new()), |b| (b.price.to_string(), b.size.to_string()));
        let (offer, offer_size) = s
            .nbbo
            .offer
            .map_or((String::new(), String::new()), |o| (o.price.to_string(), o.size.to_string()));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.ts,
            bid,
            bid_size,
            offer,
            offer_size,
            s.nbbo.status().name()
        );
    }
    out
}

/// Per-metric event-study CSV: `offset_ms,mean,count`.
pub fn study_csv(agg: &AggregateSeries) -> String {
    let mut out = String::from("offset_ms,mean,count\n");
    for (i, (mean, count)) in agg.mean.iter().zip(&agg.count).enumerate() {
        let offset_ms = (agg.start_offset + i as i64) * agg.bucket_ms;
        let _ = writeln!(out, "{},{},{}", offset_ms, fmt_opt(*mean, 6), count);
    }
    out
}

#[derive(Serialize)]
struct StudySummaryEntry {
    pre_mean: Option<f64>,
    post_mean: Option<f64>,
    pct_change: Option<f64>,
}

/// Scalar pre/post summary for every metric plus the locked/crossed
/// percentages, as JSON.
pub fn study_summary_json(report: &AnalysisReport) -> String {
    #[derive(Serialize)]
    struct Summary {
        metrics: BTreeMap<&'static str, StudySummaryEntry>,
        locked_crossed_pre_pct: Option<f64>,
        locked_crossed_post_pct: Option<f64>,
        n_crashes: usize,
    }
    let mut metrics = BTreeMap::new();
    for (name, agg) in STUDY_METRICS.iter().zip(&report.studies) {
        if let Some(agg) = agg {
            metrics.insert(
                *name,
                StudySummaryEntry {
                    pre_mean: agg.pre_mean,
                    post_mean: agg.post_mean,
                    pct_change: agg.pct_change(),
                },
            );
        }
    }
    let summary = Summary {
        metrics,
        locked_crossed_pre_pct: report.locked_crossed_pre,
        locked_crossed_post_pct: report.locked_crossed_post,
        n_crashes: report.crashes.len(),
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
}

fn stats_rows(stats: &CrashStats) -> Vec<(String, String)> {
    let mut rows = vec![
        ("Total Crashes".to_string(), stats.n_crashes.to_string()),
        ("  Up Crashes".to_string(), stats.n_up.to_string()),
        ("  Down Crashes".to_string(), stats.n_down.to_string()),
        (
            "Avg % Change".to_string(),
            stats
                .avg_pct_change
                .map_or("n/a".to_string(), |v| format!("{v:.2}%")),
        ),
        (
            "Avg Time (ms)".to_string(),
            fmt_opt(stats.avg_duration_ms, 0),
        ),
        (
            "Avg Trade Vol".to_string(),
            fmt_opt(stats.avg_total_volume, 2),
        ),
        (
            "Avg No of Trades".to_string(),
            fmt_opt(stats.avg_n_trades, 2),
        ),
        (
            "  ISO Trades".to_string(),
            stats
                .avg_iso_pct
                .map_or("n/a".to_string(), |v| format!("{v:.2}%")),
        ),
    ];
    for (venue, share) in &stats.exchange_share_pct {
        rows.push((format!("  {}", venue.name()), format!("{share:.2}%")));
    }
    rows
}

/// Human-readable descriptive-statistics table for one bucket of crashes.
pub fn summary_text(report: &AnalysisReport, bucket_label: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Mini flash crash summary [{bucket_label}]");
    let _ = writeln!(out, "{}", "=".repeat(44));
    let n = report.crashes.len().max(1);
    for (label, value) in stats_rows(&report.stats) {
        let _ = writeln!(out, "{label:<26}{value:>16}");
    }
    let _ = writeln!(out);
    for kind in ["iso_initiated", "auto_routing_initiated", "unclassified"] {
        let count = report.class_counts.get(kind).copied().unwrap_or(0);
        let pct = 100.0 * count as f64 / n as f64;
        let _ = writeln!(out, "{kind:<26}{:>10} ({pct:.2}%)", count);
    }
    let _ = writeln!(out);
    let fleet = report.fleeting_count;
    let known = report.fleeting_known.max(1);
    let _ = writeln!(
        out,
        "{:<26}{:>10} ({:.2}%)",
        "fleeting liquidity",
        fleet,
        100.0 * fleet as f64 / known as f64
    );
    out
}

/// Machine-readable summary mirroring [`summary_text`].
pub fn summary_json(report: &AnalysisReport, bucket_label: &str) -> String {
    #[derive(Serialize)]
    struct ExchangeShare {
        exchange: &'static str,
        share_pct: f64,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        bucket: &'a str,
        total_crashes: usize,
        up_crashes: usize,
        down_crashes: usize,
        iso_initiated: usize,
        auto_routing_initiated: usize,
        unclassified: usize,
        avg_pct_change: Option<f64>,
        avg_duration_ms: Option<f64>,
        avg_total_volume: Option<f64>,
        avg_n_trades: Option<f64>,
        avg_iso_pct: Option<f64>,
        exchange_shares: Vec<ExchangeShare>,
        fleeting_count: usize,
        fleeting_known: usize,
        stale_quotes: u64,
    }
    let s = &report.stats;
    let count = |k: &str| report.class_counts.get(k).copied().unwrap_or(0);
    let summary = Summary {
        bucket: bucket_label,
        total_crashes: s.n_crashes,
        up_crashes: s.n_up,
        down_crashes: s.n_down,
        iso_initiated: count("iso_initiated"),
        auto_routing_initiated: count("auto_routing_initiated"),
        unclassified: count("unclassified"),
        avg_pct_change: s.avg_pct_change,
        avg_duration_ms: s.avg_duration_ms,
        avg_total_volume: s.avg_total_volume,
        avg_n_trades: s.avg_n_trades,
        avg_iso_pct: s.avg_iso_pct,
        exchange_shares: s
            .exchange_share_pct
            .iter()
            .map(|(e, p)| ExchangeShare {
                exchange: e.name(),
                share_pct: *p,
            })
            .collect(),
        fleeting_count: report.fleeting_count,
        fleeting_known: report.fleeting_known,
        stale_quotes: report.stale_quotes,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
}

/// Coefficient table with z-statistics in parentheses and significance
/// stars, plus the fleeting-liquidity share and classification precision.
pub fn logit_report_text(report: &AnalysisReport, bucket_label: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Fleeting liquidity logit [{bucket_label}]");
    let _ = writeln!(out, "{}", "=".repeat(44));
    let known = report.fleeting_known.max(1);
    let _ = writeln!(
        out,
        "Fleeting Liquidity        {:>6} of {} ({:.2}%)",
        report.fleeting_count,
        report.fleeting_known,
        100.0 * report.fleeting_count as f64 / known as f64
    );
    let _ = writeln!(out);
    match &report.logit {
        LogitOutcome::Skipped(reason) => {
            let _ = writeln!(out, "logit not fitted: {reason}");
        }
        LogitOutcome::Fitted(model) => {
            out.push_str(&logit_table(model));
        }
    }
    out
}

pub fn logit_table(model: &LogitModel) -> String {
    let mut out = String::new();
    for c in &model.coef {
        if c.dropped {
            let _ = writeln!(out, "{:<16}{:>14}", c.name, "dropped");
            continue;
        }
        let _ = writeln!(out, "{:<16}{:>14.4}{}", c.name, c.estimate, c.stars());
        let _ = writeln!(out, "{:<16}{:>14}", "", format!("({:.4})", c.z));
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Classification Precision {:>11.2}%",
        100.0 * model.classification_precision
    );
    let _ = writeln!(out, "Converged: {} in {} iterations", model.converged, model.iterations);
    let _ = writeln!(out, "Log-likelihood: {:.6}", model.log_likelihood);
    let _ = writeln!(out, "** significant at the 1% level (|z| > 2.576)");
    let _ = writeln!(out, "*  significant at the 5% level (|z| > 1.960)");
    out
}

/// Logit results as JSON.
pub fn logit_json(report: &AnalysisReport) -> String {
    #[derive(Serialize)]
    struct Coef {
        name: &'static str,
        estimate: Option<f64>,
        std_error: Option<f64>,
        z: Option<f64>,
        stars: &'static str,
    }
    #[derive(Serialize)]
    struct Out {
        fitted: bool,
        skip_reason: Option<String>,
        coefficients: Vec<Coef>,
        log_likelihood: Option<f64>,
        converged: Option<bool>,
        classification_precision: Option<f64>,
        n_rows: usize,
        fleeting_count: usize,
        fleeting_known: usize,
    }
    let out = match &report.logit {
        LogitOutcome::Skipped(reason) => Out {
            fitted: false,
            skip_reason: Some(reason.clone()),
            coefficients: Vec::new(),
            log_likelihood: None,
            converged: None,
            classification_precision: None,
            n_rows: report.feature_rows.len(),
            fleeting_count: report.fleeting_count,
            fleeting_known: report.fleeting_known,
        },
        LogitOutcome::Fitted(m) => Out {
            fitted: true,
            skip_reason: None,
            coefficients: m
                .coef
                .iter()
                .map(|c| Coef {
                    name: c.name,
                    estimate: (!c.dropped).then_some(c.estimate),
                    std_error: (!c.dropped).then_some(c.std_error),
                    z: (!c.dropped).then_some(c.z),
                    stars: c.stars(),
                })
                .collect(),
            log_likelihood: Some(m.log_likelihood),
            converged: Some(m.converged),
            classification_precision: Some(m.classification_precision),
            n_rows: m.n_rows,
            fleeting_count: report.fleeting_count,
            fleeting_known: report.fleeting_known,
        },
    };
    serde_json::to_string_pretty(&out).expect("logit serializes") + "\n"
}
