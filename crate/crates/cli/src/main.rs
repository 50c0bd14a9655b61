//! `flashfx` — mini-flash-crash forensics over trade/quote tapes.
//!
//! Subcommands mirror the pipeline stages: `detect` streams a tape and
//! reports crashes, `classify` adds cause attribution, `study` runs the
//! liquidity event study, `fleetliq` adds fleeting-liquidity labels and the
//! logit fit, `all` produces every report, and `simulate` generates
//! ground-truth tapes from a scenario spec.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use flashfx_core::classify::ClassifyConfig;
use flashfx_core::detect::DetectorConfig;
use flashfx_core::liquidity::StudyConfig;
use flashfx_core::nbbo::{BookConfig, BookState, QuoteOutcome};
use flashfx_core::pipeline::{analyze, AnalysisConfig, AnalysisReport, STUDY_METRICS};
use flashfx_core::report;
use flashfx_core::simgen;
use flashfx_core::tape::{load_merged_stream, LoadOptions, LoadedTape, Symbol};

#[derive(Parser)]
#[command(name = "flashfx", version, about = "Tick-data forensics for mini flash crashes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect crashes on a tape (streaming; no classification).
    Detect(RunArgs),
    /// Detect and classify crashes (ISO / auto-routing / unclassified).
    Classify(RunArgs),
    /// Classify plus the ±60 s liquidity event study.
    Study(RunArgs),
    /// Classify plus fleeting-liquidity labels and the logit report.
    Fleetliq(RunArgs),
    /// Run the whole pipeline and write every report.
    All(RunArgs),
    /// Generate a ground-truth-labelled tape from a scenario spec.
    Simulate(SimArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Trade CSV (ts_ms,symbol,exchange,price,size,condition); .gz accepted.
    #[arg(long)]
    trades: Option<PathBuf>,
    /// Quote CSV (ts_ms,symbol,exchange,bid,bid_size,offer,offer_size).
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Comma-separated symbol filter.
    #[arg(long)]
    symbols: Option<String>,
    /// Keep events at or after this session millisecond.
    #[arg(long)]
    from_ms: Option<i64>,
    /// Keep events strictly before this session millisecond.
    #[arg(long)]
    to_ms: Option<i64>,
    /// Minimum directional ticks in a crash.
    #[arg(long)]
    min_ticks: Option<u32>,
    /// Maximum crash window, milliseconds.
    #[arg(long)]
    max_window_ms: Option<i64>,
    /// Minimum absolute price move, percent.
    #[arg(long)]
    min_move_pct: Option<f64>,
    /// Trailing window for the least-aggressive quote bounds, milliseconds.
    #[arg(long)]
    flicker_ms: Option<i64>,
    /// Stub-quote threshold as a percentage of the reference price.
    #[arg(long)]
    stub_pct: Option<f64>,
    /// Event-study half-window, seconds.
    #[arg(long)]
    study_window_s: Option<i64>,
    /// Event-study bucket, milliseconds.
    #[arg(long)]
    bucket_ms: Option<i64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = library default).
    #[arg(long)]
    jobs: Option<usize>,
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Session date (YYYY-MM-DD); labels the summary's month bucket.
    #[arg(long)]
    date: Option<String>,
    /// Also write the NBBO change log CSV (not available under `detect`).
    #[arg(long)]
    nbbo_log: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Scenario spec JSON. Omitted fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Generate this many tapes with seeds seed, seed+1, ... in
    /// subdirectories seed_<n>/.
    #[arg(long, default_value_t = 1)]
    sweep: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// File-backed configuration; every field optional, flags win.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    trades: Option<PathBuf>,
    quotes: Option<PathBuf>,
    symbols: Option<String>,
    from_ms: Option<i64>,
    to_ms: Option<i64>,
    min_ticks: Option<u32>,
    max_window_ms: Option<i64>,
    min_move_pct: Option<f64>,
    flicker_ms: Option<i64>,
    stub_pct: Option<f64>,
    study_window_s: Option<i64>,
    bucket_ms: Option<i64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    date: Option<String>,
    nbbo_log: Option<bool>,
}

struct Resolved {
    trades: PathBuf,
    quotes: PathBuf,
    load: LoadOptions,
    analysis: AnalysisConfig,
    out: PathBuf,
    bucket_label: String,
    nbbo_log: bool,
}

fn resolve(args: &RunArgs, full_analysis: bool) -> Result<Resolved> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let trades = args
        .trades
        .clone()
        .or(file.trades)
        .context("--trades is required (or set `trades` in --config)")?;
    let quotes = args
        .quotes
        .clone()
        .or(file.quotes)
        .context("--quotes is required (or set `quotes` in --config)")?;

    let symbols = args.symbols.clone().or(file.symbols).map(|s| {
        s.split(',')
            .filter(|p| !p.is_empty())
            .map(|p| Symbol::from(p.trim()).map_err(|_| anyhow::anyhow!("symbol `{p}` too long")))
            .collect::<Result<Vec<_>>>()
    });
    let symbols = match symbols {
        Some(r) => Some(r?),
        None => None,
    };

    let min_ticks = args.min_ticks.or(file.min_ticks).unwrap_or(10);
    let max_window_ms = args.max_window_ms.or(file.max_window_ms).unwrap_or(1500);
    let min_move_pct = args.min_move_pct.or(file.min_move_pct).unwrap_or(0.8);
    let flicker_ms = args.flicker_ms.or(file.flicker_ms).unwrap_or(1000);
    let stub_pct = args.stub_pct.or(file.stub_pct).unwrap_or(50.0);
    let study_window_s = args.study_window_s.or(file.study_window_s).unwrap_or(60);
    let bucket_ms = args.bucket_ms.or(file.bucket_ms).unwrap_or(100);
    let jobs = args.jobs.or(file.jobs).unwrap_or(0);

    if min_ticks == 0 || max_window_ms <= 0 || min_move_pct <= 0.0 {
        bail!("detector thresholds must be positive");
    }
    if bucket_ms <= 0 || study_window_s <= 0 || study_window_s * 1000 % bucket_ms != 0 {
        bail!("study window must be a whole number of buckets");
    }
    if flicker_ms <= 0 || stub_pct <= 0.0 {
        bail!("flicker window and stub threshold must be positive");
    }

    let bucket_label = match args.date.clone().or(file.date) {
        Some(date) => {
            let ok = date.len() == 10
                && date.bytes().enumerate().all(|(i, b)| match i {
                    4 | 7 => b == b'-',
                    _ => b.is_ascii_digit(),
                });
            if !ok {
                bail!("--date must be YYYY-MM-DD, got `{date}`");
            }
            date[..7].to_string()
        }
        None => "all".to_string(),
    };

    let analysis = AnalysisConfig {
        detector: DetectorConfig::with_move_pct(min_ticks, max_window_ms, min_move_pct),
        book: BookConfig {
            flicker_window_ms: flicker_ms,
            stub_threshold: stub_pct / 100.0,
        },
        classify: ClassifyConfig {
            flicker_window_ms: flicker_ms,
            clearing_lookback_ms: flicker_ms,
            stub_threshold: stub_pct / 100.0,
        },
        study: StudyConfig {
            window_ms: study_window_s * 1000,
            bucket_ms,
        },
        logit: Default::default(),
        jobs,
        full_analysis,
    };

    Ok(Resolved {
        trades,
        quotes,
        load: LoadOptions {
            symbols,
            from_ms: args.from_ms.or(file.from_ms),
            to_ms: args.to_ms.or(file.to_ms),
            ..LoadOptions::default()
        },
        analysis,
        out: args
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("flashfx_out")),
        bucket_label,
        nbbo_log: args.nbbo_log || file.nbbo_log.unwrap_or(false),
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Rebuild the NBBO change log from the tape (for `--nbbo-log`).
fn nbbo_history_csv(tape: &LoadedTape, cfg: &AnalysisConfig) -> String {
    let mut all = Vec::new();
    for (symbol, stream) in &tape.streams {
        let mut book = BookState::new(*symbol, cfg.book);
        for ev in &stream.events {
            match ev {
                flashfx_core::tape::TapeEvent::Quote(q) => {
                    if let QuoteOutcome::Changed(s) = book.apply_quote(q) {
                        all.push(s);
                    }
                }
                flashfx_core::tape::TapeEvent::Trade(t) => book.apply_trade(t),
            }
        }
    }
    all.sort_by_key(|s| (s.ts, s.seq));
    report::nbbo_log_csv(&all)
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Detect,
    Classify,
    Study,
    Fleetliq,
    All,
}

fn run_pipeline(args: &RunArgs, mode: Mode) -> Result<()> {
    let resolved = resolve(args, mode != Mode::Detect)?;
    let tape = load_merged_stream(&resolved.trades, &resolved.quotes, &resolved.load)?;
    let report: AnalysisReport = analyze(&tape, &resolved.analysis);

    std::fs::create_dir_all(&resolved.out)
        .with_context(|| format!("creating {}", resolved.out.display()))?;
    let out = &resolved.out;

    let s = &tape.summary;
    log::info!(
        "loaded {} trades ({} rejected), {} quotes ({} rejected, {} self-crossed)",
        s.trades_kept,
        s.trades_rejected,
        s.quotes_kept,
        s.quotes_rejected,
        s.crossed_quote_warnings
    );

    let with_class = mode != Mode::Detect;
    write(&out.join("crashes.csv"), &report::crashes_csv(&report.crashes, with_class))?;
    write(&out.join("summary.txt"), &report::summary_text(&report, &resolved.bucket_label))?;
    write(&out.join("summary.json"), &report::summary_json(&report, &resolved.bucket_label))?;

    if resolved.nbbo_log && with_class {
        write(&out.join("nbbo_log.csv"), &nbbo_history_csv(&tape, &resolved.analysis))?;
    }

    if matches!(mode, Mode::Study | Mode::All) {
        for (name, agg) in STUDY_METRICS.iter().zip(&report.studies) {
            if let Some(agg) = agg {
                write(&out.join(format!("study_{name}.csv")), &report::study_csv(agg))?;
            }
        }
        write(&out.join("study_summary.json"), &report::study_summary_json(&report))?;
    }

    if matches!(mode, Mode::Fleetliq | Mode::All) {
        write(
            &out.join("fleetliq_report.txt"),
            &report::logit_report_text(&report, &resolved.bucket_label),
        )?;
        write(&out.join("logit.json"), &report::logit_json(&report))?;
    }

    println!(
        "{} crash(es) written to {}",
        report.crashes.len(),
        out.display()
    );
    Ok(())
}

fn run_simulate(args: &SimArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading spec {}", path.display()))?;
            simgen::parse_spec(&text).map_err(|e| anyhow::anyhow!("{path:?}: {e}", path = path.display()))?
        }
        None => simgen::ScenarioSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let base_seed = spec.seed;
    for i in 0..args.sweep {
        spec.seed = base_seed + i;
        let out = simgen::generate_scenario(&spec)?;
        let dir = if args.sweep == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("seed_{}", spec.seed))
        };
        simgen::write_scenario(&out, &dir)
            .with_context(|| format!("writing scenario to {}", dir.display()))?;
        println!(
            "wrote {} trades, {} quotes to {}",
            out.trades.len(),
            out.quotes.len(),
            dir.display()
        );
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("FLASHFX_LOG")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Detect(args) => run_pipeline(args, Mode::Detect),
        Command::Classify(args) => run_pipeline(args, Mode::Classify),
        Command::Study(args) => run_pipeline(args, Mode::Study),
        Command::Fleetliq(args) => run_pipeline(args, Mode::Fleetliq),
        Command::All(args) => run_pipeline(args, Mode::All),
        Command::Simulate(args) => run_simulate(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
