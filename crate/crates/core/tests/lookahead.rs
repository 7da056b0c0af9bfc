//! Sentinel checks that rolling forecasts never read the future: a spike
//! planted on day `d` (and in the monthly value of `d`'s month) must leave
//! every VaR up to and including day `d` bit-for-bit unchanged.

use mfq_core::competitors::CaviarOptions;
use mfq_core::forecast::{rolling_forecast, LagChoice, ModelKind, RollingSettings};
use mfq_core::simulate::{simulate_dgp, DgpConfig};
use mfq_core::timegrid::{build_panel, MixedFreqPanel};

const K: usize = 12;

fn base_panel() -> MixedFreqPanel {
    simulate_dgp(&DgpConfig {
        n_daily: 900,
        k_lags: K,
        beta_x: 0.05,
        seed: 77,
        ..DgpConfig::default()
    })
    .unwrap()
}

fn spiked(panel: &MixedFreqPanel, d: usize) -> MixedFreqPanel {
    let mut daily = panel.daily().to_vec();
    let mut monthly = panel.monthly().to_vec();
    daily[d].ret = -25.0;
    daily[d].x = Some(25.0);
    monthly[panel.month_of(d)].value += 40.0;
    build_panel(daily, monthly, K).unwrap()
}

fn settings() -> RollingSettings {
    RollingSettings {
        q: LagChoice::Fixed(2),
        k_lags: K,
        window: 400,
        stride: 60,
        oos_len: Some(300),
        omega2_grid: mfq_core::mfqarch::log_grid(1.001, 30.0, 15),
        caviar: CaviarOptions {
            n_starts: 200,
            n_refine: 3,
            ..CaviarOptions::default()
        },
        ..RollingSettings::new(0.05, 410)
    }
}

#[test]
fn spike_on_day_d_does_not_move_earlier_forecasts() {
    let panel = base_panel();
    let s = settings();
    // mid-way between two refits, so d is neither a refit day nor the first
    let d = s.oos_start + 137;
    let shocked = spiked(&panel, d);
    for kind in ModelKind::ALL {
        let a = rolling_forecast(&panel, kind, &s).unwrap().track.vars();
        let b = rolling_forecast(&shocked, kind, &s).unwrap().track.vars();
        let upto = d - s.oos_start;
        for i in 0..=upto {
            assert_eq!(a[i].to_bits(), b[i].to_bits(), "{kind} VaR at offset {i} moved");
        }
        assert_ne!(a[upto + 1], b[upto + 1], "{kind} ignored the spike on the next day");
    }
}

#[test]
fn spike_on_a_refit_day_is_outside_that_window() {
    let panel = base_panel();
    let s = settings();
    let d = s.oos_start + 2 * s.stride;
    let shocked = spiked(&panel, d);
    for kind in [ModelKind::MfqArchX, ModelKind::Garch, ModelKind::Sav, ModelKind::GarchMidas] {
        let a = rolling_forecast(&panel, kind, &s).unwrap().track.vars();
        let b = rolling_forecast(&shocked, kind, &s).unwrap().track.vars();
        let upto = d - s.oos_start;
        assert_eq!(
            a[..=upto].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b[..=upto].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "{kind}"
        );
    }
}
