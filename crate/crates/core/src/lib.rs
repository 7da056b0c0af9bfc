//! Mixed-frequency quantile VaR engine.
//!
//! The centrepiece is the MF-Q-ARCH-X model: a linear ARCH model for
//! the conditional return quantile, augmented with a MIDAS low-frequency term
//! (a Beta-weighted sum of lagged monthly observations) and a lagged daily
//! realized-volatility regressor. Coefficients are estimated by quantile
//! regression with the MIDAS weight parameter profiled out over a grid.
//!
//! Around it sit the pieces needed to use and evaluate the model: data
//! alignment ([`timegrid`]), the quantile-regression solver and lag test
//! ([`qreg`]), benchmark VaR models ([`competitors`]), backtests
//! ([`backtest`]), the model confidence set ([`mcs`]), a rolling
//! out-of-sample engine ([`forecast`]) and the Monte Carlo harness
//! ([`simulate`]).

pub mod backtest;
pub mod competitors;
pub mod error;
pub mod forecast;
pub mod mcs;
pub mod mfqarch;
pub mod midas;
pub mod qreg;
pub mod simulate;
pub mod stats;
pub mod timegrid;

pub use error::{Error, Result};
