//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the measured numbers. Run with
//! `cargo test -p flashfx-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::Instant;

use flashfx_core::detect::{detect_crashes, DetectorConfig, Direction};
use flashfx_core::fixtures::iso_down_crash_replay;
use flashfx_core::fleetliq::{
    classification_precision, design_matrix, fit_logit, log_likelihood, predict, score,
    FeatureVector, LogitConfig,
};
use flashfx_core::liquidity::{locked_crossed_fraction, relative_spread};
use flashfx_core::nbbo::{BookConfig, BookState, QuoteOutcome};
use flashfx_core::oracle::{brute_force_crashes, NbboMirror};
use flashfx_core::pipeline::{analyze, AnalysisConfig, LogitOutcome, StreamEngine, STUDY_METRICS};
use flashfx_core::simgen::{generate_scenario, ScenarioKind, ScenarioSpec};
use flashfx_core::tape::{
    ConditionCode, ExchangeId, LoadedTape, Ms, Price, QuoteRecord, Symbol, TradeRecord,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trade(seq: u64, ts: Ms, price: i64) -> TradeRecord {
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

/// Random tape with directional bursts sized to straddle the thresholds.
fn random_tape(seed: u64, n: usize) -> Vec<TradeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut ts: Ms = 34_200_000;
    let mut price: i64 = 1_000_000;
    let mut burst: Option<(i64, usize)> = None;
    for i in 0..n {
        ts += rng.random_range(1..50);
        match &mut burst {
            Some((sign, left)) => {
                if rng.random_range(0..5u32) != 0 {
                    price += *sign * rng.random_range(300..1500);
                    *left -= 1;
                }
                if *left == 0 {
                    burst = None;
                }
            }
            None => {
                if rng.random_range(0..200u32) == 0 {
                    let sign = if rng.random_bool(0.5) { -1 } else { 1 };
                    burst = Some((sign, rng.random_range(8..26)));
                } else {
                    let step = rng.random_range(0..30);
                    match rng.random_range(0..3u32) {
                        0 => price += step,
                        1 => price -= step,
                        _ => {}
                    }
                }
            }
        }
        price = price.max(5_000);
        out.push(trade(i as u64, ts, price));
    }
    out
}

/// Criterion 1: the 58-trade replay yields exactly one down crash,
/// ISO-initiated with a one-trade exception prefix, iso_fraction 57/58,
/// pct_change in [-1.7, -1.5], in under a second.
#[test]
fn acceptance_01_replay() {
    let started = Instant::now();
    let tape = iso_down_crash_replay();
    let loaded = LoadedTape::from_records(&tape.trades, &tape.quotes);
    let report = analyze(&loaded, &AnalysisConfig::full());
    assert_eq!(report.crashes.len(), 1);
    let r = &report.crashes[0];
    assert_eq!(r.crash.direction, Direction::Down);
    assert_eq!(r.crash.n_trades, 58);
    assert_eq!(r.crash.total_volume, 86_000);
    assert!((r.crash.iso_fraction - 57.0 / 58.0).abs() < 1e-12);
    assert!(r.crash.pct_change >= -1.7 && r.crash.pct_change <= -1.5);
    assert!(r.crash.duration_ms() < 400);
    assert_eq!(r.classification.kind.name(), "iso_initiated");
    assert_eq!(r.classification.prefix_k, 1);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "replay took {elapsed:?}");
    println!(
        "ACCEPTANCE 01 PASS replay: 1 down crash, iso_initiated k=1, pct {:.4}%, {:?}",
        r.crash.pct_change, elapsed
    );
}

/// Criterion 2: streaming detection equals the brute-force all-windows
/// oracle on 1000 seeded random tapes, same crash set and boundaries.
#[test]
fn acceptance_02_detector_oracle_equivalence() {
    let started = Instant::now();
    let cfg = DetectorConfig::default();
    let mut total_crashes = 0usize;
    let mut total_trades = 0usize;
    for seed in 0..1000u64 {
        let n = if seed % 20 == 0 {
            10_000
        } else {
            100 + (seed as usize * 97) % 1900
        };
        total_trades += n;
        let tape = random_tape(seed, n);
        let fast: Vec<(Direction, u64, u64)> = {
            let mut v: Vec<_> = detect_crashes(&tape, cfg)
                .iter()
                .map(|c| (c.direction, c.first_seq(), c.last_seq()))
                .collect();
            v.sort();
            v
        };
        let slow: Vec<(Direction, u64, u64)> = {
            let mut v: Vec<_> = brute_force_crashes(&tape, &cfg)
                .iter()
                .map(|c| (c.direction, c.start as u64, c.end as u64))
                .collect();
            v.sort();
            v
        };
        assert_eq!(fast, slow, "divergence on seed {seed}");
        total_crashes += fast.len();
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "oracle sweep took {elapsed:?}");
    assert!(total_crashes > 100, "corpus too tame: {total_crashes} crashes");
    println!(
        "ACCEPTANCE 02 PASS oracle equivalence: 1000 tapes, {total_trades} trades, {total_crashes} crashes, {elapsed:?}"
    );
}

/// Criterion 3: threshold boundaries are exact.
#[test]
fn acceptance_03_threshold_boundaries() {
    let cfg = DetectorConfig::default();
    let run = |step: i64, n: usize, dt: Ms| -> Vec<TradeRecord> {
        (0..=n)
            .map(|k| trade(k as u64, k as Ms * dt, 1_000_000 + step * k as i64))
            .collect()
    };
    // 9 directional ticks: never a crash.
    assert!(detect_crashes(&run(-2_000, 9, 50), cfg).is_empty());
    // 10 ticks over 1501 ms: out of time.
    let mut late = run(-810, 10, 150);
    late[10].ts = 34_200_000; // keep constructor simple: rebuild exact case
    let mut late = run(-810, 10, 150);
    late[10].ts = late[9].ts + 151; // first-to-last = 1501 ms
    assert!(detect_crashes(&late, cfg).is_empty());
    // 10 ticks totaling exactly 0.8%: the strict inequality rejects it.
    assert!(detect_crashes(&run(-800, 10, 100), cfg).is_empty());
    // 10 ticks, 1500 ms, 0.81%: exactly one.
    let crashes = detect_crashes(&run(-810, 10, 150), cfg);
    assert_eq!(crashes.len(), 1);
    assert_eq!(crashes[0].tick_count, 10);
    assert_eq!(crashes[0].duration_ms(), 1500);
    println!("ACCEPTANCE 03 PASS threshold boundaries exact (9 ticks / 1501 ms / 0.80% rejected; 10/1500/0.81% detected)");
}

/// Criterion 4: simulator ground truth. 100 ISO-sweep and 100 auto-routing
/// scenarios classify with 100% agreement; 100 benign tapes have no crashes.
#[test]
fn acceptance_04_classification_ground_truth() {
    let started = Instant::now();
    let mut agree = 0usize;
    for seed in 0..100u64 {
        let spec = ScenarioSpec {
            kind: ScenarioKind::IsoSweep,
            seed,
            fleeting: seed % 3 == 0,
            sip_latency_ms: 5 + (seed % 3) as Ms * 5,
            ..ScenarioSpec::default()
        };
        let out = generate_scenario(&spec).unwrap();
        let tape = LoadedTape::from_records(&out.trades, &out.quotes);
        let report = analyze(&tape, &AnalysisConfig::full());
        assert_eq!(report.crashes.len(), 1, "iso seed {seed}");
        assert_eq!(
            report.crashes[0].classification.kind.name(),
            out.label.expected_classification.as_deref().unwrap(),
            "iso seed {seed}: {}",
            report.crashes[0].classification.notes
        );
        agree += 1;
    }
    for seed in 0..100u64 {
        let spec = ScenarioSpec {
            kind: ScenarioKind::AutoRouting,
            seed,
            sip_latency_ms: 5 + (seed % 4) as Ms * 5,
            ..ScenarioSpec::default()
        };
        let out = generate_scenario(&spec).unwrap();
        let tape = LoadedTape::from_records(&out.trades, &out.quotes);
        let report = analyze(&tape, &AnalysisConfig::full());
        assert_eq!(report.crashes.len(), 1, "routing seed {seed}");
        assert_eq!(
            report.crashes[0].classification.kind.name(),
            out.label.expected_classification.as_deref().unwrap(),
            "routing seed {seed}: {}",
            report.crashes[0].classification.notes
        );
        assert!(report.crashes[0].classification.top_cleared);
        agree += 1;
    }
    for seed in 0..100u64 {
        let spec = ScenarioSpec {
            kind: ScenarioKind::BenignRandomWalk,
            seed,
            background_trades: 200,
            ..ScenarioSpec::default()
        };
        let out = generate_scenario(&spec).unwrap();
        let tape = LoadedTape::from_records(&out.trades, &out.quotes);
        let report = analyze(&tape, &AnalysisConfig::full());
        assert!(report.crashes.is_empty(), "benign seed {seed} produced a crash");
        agree += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "scenario sweep took {elapsed:?}");
    println!("ACCEPTANCE 04 PASS ground truth: {agree}/300 scenarios agree, {elapsed:?}");
}

/// Criterion 5: incremental NBBO equals from-scratch recomputation after
/// every event of a 100,000-event fuzz stream.
#[test]
fn acceptance_05_nbbo_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let sym = Symbol::from("T").unwrap();
    let mut book = BookState::new(sym, BookConfig::default());
    let mut mirror = NbboMirror::new();
    let mut ts: Ms = 0;
    for seq in 0..100_000u64 {
        ts += rng.random_range(0..10);
        let exchange = ExchangeId::ALL[rng.random_range(0..7)];
        let mid = 1_000_000 + rng.random_range(-30_000i64..30_000);
        let (bid, bs, offer, os) = match rng.random_range(0..10u32) {
            0 => (0, 0, 0, 0),
            1 => (mid - 50, rng.random_range(1..900), 0, 0),
            2 => (0, 0, mid + 50, rng.random_range(1..900)),
            3 => (mid + 150, rng.random_range(1..400), mid - 150, rng.random_range(1..400)),
            _ => {
                let spread = rng.random_range(0..500);
                (
                    mid - spread / 2,
                    rng.random_range(1..900),
                    mid + (spread + 1) / 2,
                    rng.random_range(1..900),
                )
            }
        };
        let q = QuoteRecord {
            seq,
            ts,
            symbol: sym,
            exchange,
            bid: Price(bid),
            bid_size: bs,
            offer: Price(offer),
            offer_size: os,
        };
        book.apply_quote(&q);
        mirror.apply(&q);
        let want = mirror.compute();
        let got = book.nbbo();
        assert_eq!(got.best_bid(), want.best_bid(), "seq {seq}");
        assert_eq!(got.best_offer(), want.best_offer(), "seq {seq}");
        assert_eq!(got.status(), want.status(), "seq {seq}");
        assert_eq!(
            (got.bid.map(|b| b.size), got.offer.map(|o| o.size)),
            (want.bid.map(|b| b.size), want.offer.map(|o| o.size)),
            "seq {seq}"
        );
    }
    println!("ACCEPTANCE 05 PASS NBBO oracle: 100000 events, incremental == recomputed");
}

/// Criterion 6: spread formula checks and price-scaling invariance.
#[test]
fn acceptance_06_spread_checks() {
    // (100, 101): spread 1 over midprice 100.5, in percent.
    let exact = 100.0 * 1.0 / 100.5;
    let got = relative_spread(Price::from_dollars(100.0), Price::from_dollars(101.0));
    assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
    assert_eq!(format!("{got:.5}"), "0.99502");

    // Locked and crossed NBBOs have spread exactly 0.
    let sym = Symbol::from("T").unwrap();
    let snap = |bid: f64, offer: f64| {
        let mut b = BookState::new(sym, BookConfig::default());
        match b.apply_quote(&QuoteRecord {
            seq: 0,
            ts: 0,
            symbol: sym,
            exchange: ExchangeId::Nyse,
            bid: Price::from_dollars(bid),
            bid_size: 100,
            offer: Price::from_dollars(offer),
            offer_size: 100,
        }) {
            QuoteOutcome::Changed(s) => s,
            _ => panic!("expected change"),
        }
    };
    assert_eq!(flashfx_core::liquidity::nbbo_spread(&snap(10.05, 10.05)), Some(0.0));
    assert_eq!(flashfx_core::liquidity::nbbo_spread(&snap(10.06, 10.05)), Some(0.0));

    // Scaling both prices never moves the relative spread by more than 1e-12.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let bid = rng.random_range(1_000i64..50_000_000);
        let offer = bid + rng.random_range(0..bid / 2 + 1);
        let c = rng.random_range(2i64..1000);
        let base = relative_spread(Price(bid), Price(offer));
        let scaled = relative_spread(Price(bid * c), Price(offer * c));
        worst = worst.max((base - scaled).abs());
    }
    assert!(worst <= 1e-12, "worst scaling drift {worst}");
    println!("ACCEPTANCE 06 PASS spread checks: 0.99502% exact, locked/crossed => 0, scaling drift {worst:.2e}");
}

/// Criterion 7: event-study calibration. A simulated corpus with +1.00
/// percentage point of injected post-crash spread widening recovers
/// post-mean - pre-mean within 0.01; a constructed tape with exactly 25%
/// locked updates measures 25% exactly.
#[test]
fn acceptance_07_event_study_calibration() {
    let mut trades = Vec::new();
    let mut quotes = Vec::new();
    for k in 0..10u64 {
        let spec = ScenarioSpec {
            kind: ScenarioKind::IsoSweep,
            seed: k,
            symbol: format!("SIM{k}"),
            pre_quote_ms: 61_000,
            post_quote_ms: 61_000,
            post_spread_widen_pct: 1.0,
            ..ScenarioSpec::default()
        };
        let out = generate_scenario(&spec).unwrap();
        trades.extend(out.trades);
        quotes.extend(out.quotes);
    }
    trades.sort_by_key(|t| t.ts);
    quotes.sort_by_key(|q| q.ts);
    let tape = LoadedTape::from_records(&trades, &quotes);
    let report = analyze(&tape, &AnalysisConfig::full());
    assert_eq!(report.crashes.len(), 10);
    let idx = STUDY_METRICS.iter().position(|m| *m == "nbbo_spread").unwrap();
    let agg = report.studies[idx].as_ref().unwrap();
    let (pre, post) = (agg.pre_mean.unwrap(), agg.post_mean.unwrap());
    let widening = post - pre;
    assert!(
        (widening - 1.0).abs() <= 0.01,
        "recovered widening {widening} (pre {pre}, post {post})"
    );

    // Exactly 25% locked NBBO updates.
    let sym = Symbol::from("T").unwrap();
    let mut book = BookState::new(sym, BookConfig::default());
    let mut snaps = Vec::new();
    let mut seq = 0u64;
    let mut ts = 0i64;
    for _ in 0..250 {
        for (bid, offer) in [(10.00, 10.05), (10.05, 10.05), (10.01, 10.06), (10.02, 10.06)] {
            ts += 10;
            seq += 1;
            if let QuoteOutcome::Changed(s) = book.apply_quote(&QuoteRecord {
                seq,
                ts,
                symbol: sym,
                exchange: ExchangeId::Nyse,
                bid: Price::from_dollars(bid),
                bid_size: 100,
                offer: Price::from_dollars(offer),
                offer_size: 100,
            }) {
                snaps.push(s);
            }
        }
    }
    assert_eq!(snaps.len(), 1000);
    let locked = locked_crossed_fraction(&snaps).unwrap();
    assert_eq!(locked, 25.0);
    println!(
        "ACCEPTANCE 07 PASS event study: widening {widening:.4} (target 1.00 +- 0.01), locked fraction {locked:.2}% exact"
    );
}

fn synthetic_rows(seed: u64, n: usize, alpha: &[f64; 8]) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = [
                rng.random_range(50.0..1500.0),
                rng.random_range(0.8..5.0),
                rng.random_range(1..7) as f64,
                rng.random_range(100.0..5000.0),
                rng.random_range(0..2) as f64,
                rng.random_range(11..120) as f64,
                rng.random_range(1..4) as f64,
            ];
            let f: f64 = alpha[0] + x.iter().zip(&alpha[1..]).map(|(xi, ai)| xi * ai).sum::<f64>();
            let p = 1.0 / (1.0 + (-f).exp());
            FeatureVector {
                time_ms: x[0],
                pct_price_change: x[1],
                exch: x[2],
                vol: x[3],
                up_down: x[4],
                no_trades: x[5],
                crash_type: x[6],
                fleet_liq: if rng.random_bool(p) { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

/// Criterion 8: logit verification. Analytic gradient against central
/// finite differences at 20 random points; coefficient recovery on 5000
/// synthetic rows within 3 standard errors; score equations at the MLE
/// below 1e-6; the logistic at f = 0 is exactly 0.5.
#[test]
fn acceptance_08_logit() {
    // Gradient vs central finite differences.
    let rows = synthetic_rows(7, 500, &[0.2, -0.001, 0.1, 0.02, -0.0003, 0.05, -0.005, -0.05]);
    let (x, y) = design_matrix(&rows);
    let scales = [1.0, 1e-3, 0.2, 0.05, 1e-4, 0.5, 0.02, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let beta = DVector::from_iterator(
            8,
            scales.iter().map(|s| s * rng.random_range(-1.0..1.0)),
        );
        let g = score(&x, &y, &beta);
        for j in 0..8 {
            let h = 1e-6 * scales[j].max(1e-8);
            let mut up = beta.clone();
            up[j] += h;
            let mut dn = beta.clone();
            dn[j] -= h;
            let fd = (log_likelihood(&x, &y, &up) - log_likelihood(&x, &y, &dn)) / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1.0);
            worst_rel = worst_rel.max(rel);
        }
    }
    assert!(worst_rel < 1e-5, "gradient mismatch {worst_rel}");

    // Coefficient recovery within 3 SE componentwise on n = 5000.
    let truth = [0.3, -0.0015, 0.12, 0.02, -0.0004, 0.05, -0.004, -0.06];
    let rows = synthetic_rows(2024, 5000, &truth);
    let model = fit_logit(&rows, &LogitConfig::default()).unwrap();
    assert!(model.converged, "fit did not converge");
    for (j, c) in model.coef.iter().enumerate() {
        assert!(!c.dropped, "{} dropped", c.name);
        let dev = (c.estimate - truth[j]).abs();
        assert!(
            dev <= 3.0 * c.std_error,
            "{}: estimate {} vs truth {} (3se {})",
            c.name,
            c.estimate,
            truth[j],
            3.0 * c.std_error
        );
    }

    // Score equations hold at the MLE.
    let (x, y) = design_matrix(&rows);
    let beta = DVector::from_iterator(8, model.coef.iter().map(|c| c.estimate));
    let residual = score(&x, &y, &beta).amax();
    assert!(residual < 1e-6, "score at MLE {residual}");

    // f = 0 predicts exactly one half.
    let zero_model = {
        let mut m = model.clone();
        for c in &mut m.coef {
            c.estimate = 0.0;
        }
        m
    };
    assert_eq!(predict(&zero_model, &rows[0]), 0.5);

    // Precision is a well-defined fraction on the training rows.
    let precision = classification_precision(&model, &rows).unwrap();
    assert!((0.0..=1.0).contains(&precision));
    println!(
        "ACCEPTANCE 08 PASS logit: gradient rel err {worst_rel:.2e}, recovery within 3se, score {residual:.2e}, precision {precision:.4}"
    );
}

/// Criterion 9: fleeting-liquidity mechanism. Cancellation racing a slow
/// SIP is labelled fleeting; with an instantaneous SIP it is not. Pipeline
/// output agrees with ground truth on every tape.
#[test]
fn acceptance_09_fleeting_mechanism() {
    let mut checked = 0;
    for latency in [0i64, 5, 10, 20] {
        for seed in 0..10u64 {
            let spec = ScenarioSpec {
                kind: ScenarioKind::IsoSweep,
                seed,
                fleeting: true,
                sip_latency_ms: latency,
                ..ScenarioSpec::default()
            };
            let out = generate_scenario(&spec).unwrap();
            let expected = latency >= 1; // sweep duration is sub-millisecond
            assert_eq!(out.label.expected_fleeting, Some(expected));
            let tape = LoadedTape::from_records(&out.trades, &out.quotes);
            let report = analyze(&tape, &AnalysisConfig::full());
            assert_eq!(report.crashes.len(), 1, "latency {latency} seed {seed}");
            assert_eq!(
                report.crashes[0].fleeting,
                Some(expected),
                "latency {latency} seed {seed}"
            );
            checked += 1;
        }
    }
    println!("ACCEPTANCE 09 PASS fleeting mechanism: {checked}/40 tapes agree with ground truth");
}

/// Criterion 10: the detection + NBBO pipeline sustains at least 500,000
/// events per second per core on a 10-million-event synthetic tape with
/// bounded state.
#[test]
fn acceptance_10_throughput() {
    const N: u64 = 10_000_000;
    let sym = Symbol::from("T").unwrap();
    let cfg = AnalysisConfig::detect_only();
    let mut engine = StreamEngine::new(sym, &cfg);
    let mut out = Vec::new();

    // Cheap xorshift so generation cost does not dominate the measurement.
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };

    let mut ts: Ms = 0;
    let mut price: i64 = 1_000_000;
    let mut max_buffered = 0usize;
    let started = Instant::now();
    for i in 0..N {
        let r = next();
        ts += (r & 3) as Ms;
        let venue = if r & 4 == 0 { ExchangeId::Nyse } else { ExchangeId::Arca };
        if r & 0xF0 == 0 {
            // ~6% trades
            price += ((r >> 8) % 41) as i64 - 20;
            price = price.max(10_000);
            let t = TradeRecord {
                seq: i,
                ts,
                symbol: sym,
                exchange: venue,
                price: Price(price),
                size: 100,
                is_iso: r & 0x100 == 0,
                condition: ConditionCode::new(),
            };
            engine.on_event(&flashfx_core::tape::TapeEvent::Trade(t), &mut out);
        } else {
            let mid = price + ((r >> 16) % 201) as i64 - 100;
            let q = QuoteRecord {
                seq: i,
                ts,
                symbol: sym,
                exchange: venue,
                bid: Price(mid - 50),
                bid_size: ((r >> 32) % 900 + 1) as u32,
                offer: Price(mid + 50),
                offer_size: ((r >> 42) % 900 + 1) as u32,
            };
            engine.on_event(&flashfx_core::tape::TapeEvent::Quote(q), &mut out);
        }
        if i % 1_000_000 == 0 {
            max_buffered = max_buffered.max(engine.buffered());
            out.clear();
        }
    }
    engine.finish(&mut out);
    let elapsed = started.elapsed();
    let rate = N as f64 / elapsed.as_secs_f64();
    assert!(
        rate >= 500_000.0,
        "throughput {rate:.0} events/s below 500k"
    );
    // State stays bounded by the detection horizon, not the tape length.
    assert!(
        max_buffered < 100_000,
        "state grew to {max_buffered} entries"
    );
    println!(
        "ACCEPTANCE 10 PASS throughput: {rate:.0} events/s over {N} events, max state {max_buffered}, {elapsed:?}"
    );
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(p).unwrap(),
            )
        })
        .collect()
}

/// Criterion 11: running the full pipeline twice, and with different
/// worker counts, produces byte-identical report files.
#[test]
fn acceptance_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let scen_dir = dir.path().join("scen");
    let spec = ScenarioSpec {
        kind: ScenarioKind::Mixed,
        seed: 12,
        background_trades: 80,
        ..ScenarioSpec::default()
    };
    let out = generate_scenario(&spec).unwrap();
    flashfx_core::simgen::write_scenario(&out, &scen_dir).unwrap();

    let bin = env!("CARGO_BIN_EXE_flashfx");
    let run = |out_name: &str, jobs: &str| {
        let out_dir = dir.path().join(out_name);
        let status = std::process::Command::new(bin)
            .args([
                "all",
                "--trades",
                scen_dir.join("trades.csv").to_str().unwrap(),
                "--quotes",
                scen_dir.join("quotes.csv").to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--jobs",
                jobs,
            ])
            .status()
            .expect("spawn flashfx");
        assert!(status.success());
        read_dir_sorted(&out_dir)
    };

    let a = run("run_a", "1");
    let b = run("run_b", "1");
    let c = run("run_c", "8");
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "{na} differs between identical runs");
    }
    for ((na, ba), (nc, bc)) in a.iter().zip(&c) {
        assert_eq!(na, nc);
        assert_eq!(ba, bc, "{na} differs between --jobs 1 and --jobs 8");
    }
    println!(
        "ACCEPTANCE 11 PASS determinism: {} report files byte-identical across reruns and thread counts",
        a.len()
    );
}

/// The logit stage also runs end-to-end on a large mixed corpus; this keeps
/// the full-pipeline path (detection through regression) exercised.
#[test]
fn full_pipeline_logit_on_simulated_corpus() {
    let mut trades = Vec::new();
    let mut quotes = Vec::new();
    for k in 0..40u64 {
        let spec = ScenarioSpec {
            kind: if k % 2 == 0 { ScenarioKind::IsoSweep } else { ScenarioKind::AutoRouting },
            seed: k,
            symbol: format!("S{k:02}"),
            fleeting: k % 4 == 0,
            sweep_levels: 11 + (k % 2) as u32,
            level_size: 200 + (k % 5) as u32 * 100,
            ..ScenarioSpec::default()
        };
        let out = generate_scenario(&spec).unwrap();
        trades.extend(out.trades);
        quotes.extend(out.quotes);
    }
    trades.sort_by_key(|t| t.ts);
    quotes.sort_by_key(|q| q.ts);
    let tape = LoadedTape::from_records(&trades, &quotes);
    let report = analyze(&tape, &AnalysisConfig::full());
    assert_eq!(report.crashes.len(), 40);
    assert_eq!(report.feature_rows.len(), 40);
    match &report.logit {
        LogitOutcome::Fitted(model) => {
            assert_eq!(model.n_rows, 40);
            assert!((0.0..=1.0).contains(&model.classification_precision));
        }
        LogitOutcome::Skipped(reason) => {
            // Acceptable only for degenerate labels (all fleeting flags equal
            // or a separating regressor); both labels are present here, so a
            // skip must be separation on this small deterministic corpus.
            assert!(
                reason.contains("separation"),
                "unexpected logit skip: {reason}"
            );
        }
    }
}
