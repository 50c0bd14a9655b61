//! Fleeting-liquidity labelling and the logit model linking it to crash
//! characteristics.
//!
//! A crash experienced fleeting liquidity when the SIP-displayed best
//! quotes on the crash side were never hit by its trades: every print
//! landed strictly beyond the displayed best prevailing at its own
//! timestamp, meaning the displayed quotation was cancelled faster than
//! the SIP disseminated the removal. A print at the displayed best, or
//! inside the quote, counts as a hit.
//!
//! The logit is fit by Newton iteration (iteratively reweighted least
//! squares) on raw regressors, with standard errors from the inverse
//! observed information.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classify::CrashClassification;
use crate::detect::{CrashEvent, Direction};
use crate::nbbo::NbboSnapshot;

#[derive(Debug, Error)]
#[error("no SIP quote history supplied for the crash interval")]
pub struct InsufficientQuoteHistory;

/// True when no constituent trade hit the prevailing SIP-displayed best on
/// the crash side. For a down crash, a trade at or above the displayed best
/// bid is a hit; for an up crash, a trade at or below the displayed best
/// offer. A crash with no displayed crash-side quote is vacuously fleeting.
pub fn detect_fleeting_liquidity(
    crash: &CrashEvent,
    sip_history: &[NbboSnapshot],
) -> Result<bool, InsufficientQuoteHistory> {
    if sip_history.is_empty() {
        return Err(InsufficientQuoteHistory);
    }
    let mut idx = 0usize;
    let mut prevailing: Option<&NbboSnapshot> = None;
    for trade in &crash.trades {
        while idx < sip_history.len() && sip_history[idx].seq < trade.seq {
            prevailing = Some(&sip_history[idx]);
            idx += 1;
        }
        let Some(snap) = prevailing else { continue };
        let hit = match crash.direction {
            Direction::Down => snap
                .nbbo
                .best_bid()
                .is_some_and(|bid| trade.price >= bid),
            Direction::Up => snap
                .nbbo
                .best_offer()
                .is_some_and(|offer| trade.price <= offer),
        };
        if hit {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One regression row. Encodings: `exch` is the venue code 1-6 (0 for
/// other venues), `up_down` is 0 for down and 1 for up, `crash_type` is
/// 1 ISO / 2 auto-routing / 3 unclassified, `fleet_liq` is the 0/1 label.
#[derive(Clone, Copy, Debug)]
pub struct FeatureVector {
    pub time_ms: f64,
    pub pct_price_change: f64,
    pub exch: f64,
    pub vol: f64,
    pub up_down: f64,
    pub no_trades: f64,
    pub crash_type: f64,
    pub fleet_liq: f64,
}

impl FeatureVector {
    pub fn regressors(&self) -> [f64; 7] {
        [
            self.time_ms,
            self.pct_price_change,
            self.exch,
            self.vol,
            self.up_down,
            self.no_trades,
            self.crash_type,
        ]
    }
}

pub const COEF_NAMES: [&str; 8] = [
    "Intercept",
    "Time",
    "%PriceChange",
    "Exch",
    "Vol",
    "UpDown",
    "NoTrades",
    "Type",
];

/// Assemble one row per crash from the detection, classification, and
/// fleeting-liquidity results.
pub fn build_feature_rows(
    crashes: &[CrashEvent],
    classifications: &[CrashClassification],
    fleeting: &[bool],
) -> Vec<FeatureVector> {
    assert_eq!(crashes.len(), classifications.len());
    assert_eq!(crashes.len(), fleeting.len());
    crashes
        .iter()
        .zip(classifications)
        .zip(fleeting)
        .map(|((c, class), &fleet)| FeatureVector {
            time_ms: c.duration_ms() as f64,
            pct_price_change: c.pct_change.abs(),
            exch: c.exchange.code() as f64,
            vol: c.total_volume as f64,
            up_down: match c.direction {
                Direction::Down => 0.0,
                Direction::Up => 1.0,
            },
            no_trades: c.n_trades as f64,
            crash_type: class.kind.code() as f64,
            fleet_liq: if fleet { 1.0 } else { 0.0 },
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("empty input")]
    EmptyInput,
    #[error("both labels must be present to fit")]
    OneLabel,
    #[error("perfect separation: likelihood is unbounded")]
    Separation,
    #[error("information matrix is singular")]
    Singular,
}

#[derive(Clone, Copy, Debug)]
pub struct LogitConfig {
    pub max_iter: usize,
    /// Convergence: max absolute score component below this.
    pub score_tol: f64,
    /// Added to the information diagonal when plain inversion fails.
    pub ridge: f64,
}

impl Default for LogitConfig {
    fn default() -> Self {
        LogitConfig {
            max_iter: 100,
            score_tol: 1e-8,
            ridge: 1e-8,
        }
    }
}

/// One fitted coefficient. Regressors constant across all rows are dropped
/// (estimate 0, no standard error) and flagged.
#[derive(Clone, Debug)]
pub struct CoefEntry {
    pub name: &'static str,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub dropped: bool,
}

impl CoefEntry {
    /// Two stars at the 1% level (|z| > 2.576), one at 5% (|z| > 1.960).
    pub fn stars(&self) -> &'static str {
        if self.dropped || !self.z.is_finite() {
            ""
        } else if self.z.abs() > 2.576 {
            "**"
        } else if self.z.abs() > 1.960 {
            "*"
        } else {
            ""
        }
    }
}

/// Fitted logit model.
#[derive(Clone, Debug)]
pub struct LogitModel {
    /// Intercept plus the seven regressors, in order.
    pub coef: Vec<CoefEntry>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_rows: usize,
    /// Fraction of training rows whose thresholded prediction matches the
    /// label.
    pub classification_precision: f64,
}

fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

/// `sum_i y_i f_i - ln(1 + e^{f_i})`, computed stably.
pub fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let f = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        let fi = f[i];
        ll += y[i] * fi - (fi.max(0.0) + (-fi.abs()).exp().ln_1p());
    }
    ll
}

/// Score (gradient of the log-likelihood): `X' (y - p)`.
pub fn score(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let p = (x * beta).map(sigmoid);
    x.transpose() * (y - p)
}

/// Design matrix with intercept: one row per feature vector, columns in
/// `COEF_NAMES` order.
pub fn design_matrix(rows: &[FeatureVector]) -> (DMatrix<f64>, DVector<f64>) {
    let n = rows.len();
    let mut x = DMatrix::zeros(n, 8);
    let mut y = DVector::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in row.regressors().iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
        y[i] = row.fleet_liq;
    }
    (x, y)
}

/// Maximum-likelihood logit fit via Newton iteration.
pub fn fit_logit(rows: &[FeatureVector], cfg: &LogitConfig) -> Result<LogitModel, LogitError> {
    if rows.is_empty() {
        return Err(LogitError::EmptyInput);
    }
    let ones = rows.iter().filter(|r| r.fleet_liq > 0.5).count();
    if ones == 0 || ones == rows.len() {
        return Err(LogitError::OneLabel);
    }

    let (x_full, y) = design_matrix(rows);
    let n = rows.len();

    // Drop regressors constant across all rows; the intercept column stays.
    let mut included: Vec<usize> = vec![0];
    for (j, name) in COEF_NAMES.iter().enumerate().skip(1) {
        let col = x_full.column(j);
        let constant = (1..n).all(|i| col[i] == col[0]);
        if constant {
            log::warn!("regressor {name} is constant across rows; dropped from the fit");
        } else {
            included.push(j);
        }
    }
    let x = x_full.select_columns(included.iter());
    let k = included.len();

    let mut beta = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_info: Option<DMatrix<f64>> = None;
    for iter in 1..=cfg.max_iter {
        iterations = iter;
        let f = &x * &beta;
        let p = f.map(sigmoid);

        // Complete (or quasi-complete) separation: the likelihood supremum
        // is being approached, every row fit to its label. The MLE does not
        // exist, so diverging coefficients would only saturate further.
        let separated = (0..n).all(|i| (y[i] - p[i]).abs() < 1e-6);
        if separated || beta.amax() > 1e10 {
            return Err(LogitError::Separation);
        }

        let g = x.transpose() * (&y - &p);
        if g.amax() < cfg.score_tol {
            converged = true;
            break;
        }

        let w = p.map(|pi| pi * (1.0 - pi));
        let mut xw = x.clone();
        for i in 0..n {
            let wi = w[i].sqrt();
            for j in 0..k {
                xw[(i, j)] *= wi;
            }
        }
        let info = xw.transpose() * &xw;
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                let mut ridged = info.clone();
                for j in 0..k {
                    ridged[(j, j)] += cfg.ridge;
                }
                match ridged.cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => return Err(LogitError::Singular),
                }
            }
        };
        beta += step;
        last_info = Some(info);
    }

    // Standard errors from the inverse observed information at the optimum.
    // Convergence on the very first pass leaves no saved matrix; rebuild it
    // at the final coefficients.
    let info_at_optimum = last_info.unwrap_or_else(|| {
        let p = (&x * &beta).map(sigmoid);
        let mut xw = x.clone();
        for i in 0..n {
            let wi = (p[i] * (1.0 - p[i])).sqrt();
            for j in 0..k {
                xw[(i, j)] *= wi;
            }
        }
        xw.transpose() * &xw
    });
    let cov = info_at_optimum
        .clone()
        .try_inverse()
        .or_else(|| {
            let mut ridged = info_at_optimum;
            for j in 0..k {
                ridged[(j, j)] += cfg.ridge;
            }
            ridged.try_inverse()
        })
        .ok_or(LogitError::Singular)?;

    let mut coef = Vec::with_capacity(8);
    for (j, name) in COEF_NAMES.iter().enumerate() {
        match included.iter().position(|&c| c == j) {
            Some(pos) => {
                let estimate = beta[pos];
                let std_error = cov[(pos, pos)].sqrt();
                coef.push(CoefEntry {
                    name,
                    estimate,
                    std_error,
                    z: estimate / std_error,
                    dropped: false,
                });
            }
            None => coef.push(CoefEntry {
                name,
                estimate: 0.0,
                std_error: f64::NAN,
                z: f64::NAN,
                dropped: true,
            }),
        }
    }

    let ll = log_likelihood(&x, &y, &beta);
    let mut model = LogitModel {
        coef,
        log_likelihood: ll,
        converged,
        iterations,
        n_rows: n,
        classification_precision: 0.0,
    };
    model.classification_precision = classification_precision(&model, rows)?;
    Ok(model)
}

/// Linear predictor for one row under the fitted coefficients.
pub fn linear_predictor(model: &LogitModel, row: &FeatureVector) -> f64 {
    let mut f = model.coef[0].estimate;
    for (j, v) in row.regressors().iter().enumerate() {
        f += model.coef[j + 1].estimate * v;
    }
    f
}

/// Predicted probability of the label being 1.
pub fn predict(model: &LogitModel, row: &FeatureVector) -> f64 {
    sigmoid(linear_predictor(model, row))
}

/// Fraction of rows where the prediction thresholded at 0.5 equals the
/// label.
pub fn classification_precision(
    model: &LogitModel,
    rows: &[FeatureVector],
) -> Result<f64, LogitError> {
    if rows.is_empty() {
        return Err(LogitError::EmptyInput);
    }
    let correct = rows
        .iter()
        .filter(|r| (predict(model, r) > 0.5) == (r.fleet_liq > 0.5))
        .count();
    Ok(correct as f64 / rows.len() as f64)
}
