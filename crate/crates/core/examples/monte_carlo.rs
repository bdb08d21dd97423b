//! Repeated fits over independent benchmark realizations at a fixed SNR.
//!
//! ```text
//! cargo run --release --example monte_carlo -- [runs]
//! ```

use ctlss::cli::{monte_carlo_runs, summary, MONTE_CARLO_TAU};
use ctlss::io::Settings;

fn main() -> ctlss::Result<()> {
    let runs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let base = Settings {
        tau: MONTE_CARLO_TAU,
        ..Settings::default()
    };
    let results = monte_carlo_runs(&base, runs, 30.0)?;
    for r in &results {
        println!(
            "run {:>3}: SNR {:.2} dB, BFR {:6.2}%, mode fit {:6.2}%",
            r.run, r.snr_db, r.bfr, r.mode_fit
        );
    }
    let bfr: Vec<f64> = results.iter().map(|r| r.bfr).collect();
    let mf: Vec<f64> = results.iter().map(|r| r.mode_fit).collect();
    let (lo, med, hi) = summary(&bfr);
    println!("BFR       min {lo:.2}  median {med:.2}  max {hi:.2}");
    let (lo, med, hi) = summary(&mf);
    println!("mode fit  min {lo:.2}  median {med:.2}  max {hi:.2}");
    Ok(())
}
