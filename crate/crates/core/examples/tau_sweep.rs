//! Mode fit against the switch penalty τ for a few noise levels.
//!
//! Small τ lets the segmentation chase noise, large τ forbids switching
//! altogether, and the best mode fit sits in between.
//!
//! ```text
//! cargo run --release --example tau_sweep
//! ```

use ctlss::cli::sweep_cells;
use ctlss::io::Settings;

fn main() -> ctlss::Result<()> {
    let taus = [1e-8, 1e-7, 1e-6, 1e-5, 1e-3, 1e-1];
    let sigmas = [0.02, 0.05];
    let base = Settings {
        restarts: 2,
        n_max: 300,
        ..Settings::default()
    };
    let cells = sweep_cells(&base, &taus, &sigmas)?;
    println!("{:>8} {:>9} {:>8} {:>9} {:>9}", "tau", "sigma", "SNR dB", "mode fit", "switches");
    for c in &cells {
        println!(
            "{:>8.0e} {:>9.3} {:>8.2} {:>8.2}% {:>9}",
            c.tau, c.sigma_eta, c.snr_db, c.mode_fit, c.switches
        );
    }
    Ok(())
}
