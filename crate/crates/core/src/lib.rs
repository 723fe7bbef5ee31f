//! Energy storage opportunity valuation, bid design and market dispatch
//! backtesting.
//!
//! The pipeline: a price forecast is valued by backward induction into
//! marginal opportunity value curves ([`valuation`]), the curves become
//! power bids or SoC bids ([`bids`]), and the bids are dispatched period
//! by period against realized prices ([`simulate`]). [`sweep`] runs the
//! zone × duration × case matrix, [`oracle`] solves the perfect-foresight
//! problem directly for certification and [`dispatch`] clears a
//! single-bus merit-order market with storage bids.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bids;
pub mod data_io;
pub mod dispatch;
pub mod error;
pub mod model;
pub mod oracle;
pub mod report;
pub mod series;
pub mod simulate;
pub mod sweep;
pub mod synth;
pub mod valuation;

pub use bids::{make_power_bids, make_soc_bids, BidSchedule, PowerBid, SoCBidCurve};
pub use dispatch::{clear_power_bid_ed, clear_soc_bid_ed, ClearingResult, GeneratorOffer, MarketInstance};
pub use error::{Error, Result};
pub use model::{DispatchDecision, SoCGrid, StorageParams};
pub use series::{PriceSeries, Resolution};
pub use simulate::{run_case, utilization, CaseConfig, CaseId, RunOptions, SimulationResult, ValuationStep};
pub use sweep::{run_sweep, SummaryRow, SweepSpec, ZoneInputs};
pub use valuation::{average_marginal, backward_induct, update_step, ValueCurve, ValueSurface};
