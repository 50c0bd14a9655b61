//! Tick-data forensics for mini flash crashes.
//!
//! The crate is organized as a pipeline over normalized trade/quote tapes:
//!
//! 1. [`tape`] — parse and merge trade/quote CSV files into per-symbol
//!    event streams with millisecond timestamps and fixed-point prices.
//! 2. [`nbbo`] — consolidate per-exchange tops into the NBBO, with
//!    locked/crossed status, protected quotations, and trailing quote bounds.
//! 3. [`detect`] — streaming detector for mini flash crashes (runs of 10+
//!    same-direction ticks, within 1.5 s, moving more than 0.8%).
//! 4. [`classify`] — split detected crashes into ISO-initiated,
//!    auto-routing-initiated, and unclassified.
//! 5. [`liquidity`] — event-study metrics in ±60 s windows around crashes.
//! 6. [`fleetliq`] — fleeting-liquidity labelling and the logit model
//!    relating it to crash characteristics.
//! 7. [`simgen`] — a deterministic multi-venue order-book simulator that
//!    produces ground-truth-labelled tapes for verifying the pipeline.
//!
//! [`pipeline`] wires the stages together and [`report`] renders results.

pub mod classify;
pub mod detect;
pub mod fixtures;
pub mod fleetliq;
pub mod liquidity;
pub mod nbbo;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod simgen;
pub mod tape;

pub use detect::{CrashEvent, CrashStats, Direction, TickDirection};
pub use classify::{ClassKind, CrashClassification};
pub use nbbo::{Nbbo, NbboStatus, QuoteBounds};
pub use tape::{EventStream, ExchangeId, Price, QuoteRecord, TapeEvent, TradeRecord};
