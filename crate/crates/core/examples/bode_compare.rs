//! Frequency responses of a fitted model next to the true benchmark modes.
//!
//! ```text
//! cargo run --release --example bode_compare -- [bode.csv]
//! ```
//!
//! The CSV has columns `omega, mag_db, phase_deg, mode, which` and plots
//! directly with gnuplot or any spreadsheet.

use std::path::PathBuf;

use ctlss::bcd::multistart_fit;
use ctlss::io::{write_bode_csv, BodeRow};
use ctlss::metrics::{default_grid, frequency_response, mode_fit, model_tfs, system_tfs};
use ctlss::model::FitConfig;
use ctlss::simulator::{generate_benchmark_dataset, BenchmarkSpec};

fn main() -> ctlss::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bode.csv"));

    let data = generate_benchmark_dataset(&BenchmarkSpec::default())?;
    let fit = multistart_fit(&data, &FitConfig::default())?.best;
    let truth = data.true_modes.as_ref().expect("generator attaches truth");
    let perm = mode_fit(&fit.modes, truth, true)?.permutation;

    let grid = default_grid();
    let estimated = model_tfs(&fit.model)?;
    let actual = system_tfs(&ctlss::simulator::benchmark_system())?;
    let mut rows = Vec::new();
    for (i, tf) in estimated.iter().enumerate() {
        let true_tf = &actual[perm[i] - 1];
        let est = frequency_response(tf, &grid)?;
        let tru = frequency_response(true_tf, &grid)?;
        println!("estimated mode {} against true mode {}", i + 1, perm[i]);
        println!("  {:>9} {:>10} {:>10} {:>10} {:>10}", "omega", "|G| dB", "|Ĝ| dB", "∠G deg", "∠Ĝ deg");
        for k in (0..grid.len()).step_by(25) {
            println!(
                "  {:>9.3} {:>10.2} {:>10.2} {:>10.1} {:>10.1}",
                grid[k], tru[k].mag_db, est[k].mag_db, tru[k].phase_deg, est[k].phase_deg
            );
        }
        let mode = i + 1;
        rows.extend(est.into_iter().map(|point| BodeRow { point, mode, which: "estimated" }));
        rows.extend(tru.into_iter().map(|point| BodeRow { point, mode, which: "true" }));
    }
    write_bode_csv(&rows, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
