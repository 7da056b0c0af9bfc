//! Benchmark VaR models: CAViaR, GARCH/GJR, RiskMetrics and GARCH-MIDAS.

mod caviar;
mod garch;
mod garch_midas;
mod optim;

pub use caviar::{fit_caviar, fit_caviar_with, CaviarModel, CaviarOptions, CaviarVariant};
pub use garch::{
    fit_garch, fit_riskmetrics, riskmetrics_path, var_garch, GarchDist, GarchFamily, GarchModel,
    RISKMETRICS_LAMBDA,
};
pub use garch_midas::{fit_garch_midas, GarchMidasModel};
