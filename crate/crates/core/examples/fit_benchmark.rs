//! Multi-start fit on the two-mode benchmark, with the fitted transfer
//! functions next to the true ones.
//!
//! ```text
//! cargo run --release --example fit_benchmark
//! ```

use std::time::Instant;

use ctlss::bcd::multistart_fit;
use ctlss::metrics::{compare_models, mode_fit};
use ctlss::model::FitConfig;
use ctlss::simulator::{benchmark_system, generate_benchmark_dataset, measured_snr_db, BenchmarkSpec};

fn main() -> ctlss::Result<()> {
    let spec = BenchmarkSpec::default();
    let data = generate_benchmark_dataset(&spec)?;
    let y0 = data.noise_free.as_ref().expect("generator attaches truth");
    println!("SNR: {:.2} dB", measured_snr_db(y0, &data.y)[0]);

    let config = FitConfig::default();
    let start = Instant::now();
    let fit = multistart_fit(&data, &config)?;
    println!("elapsed: {:.1?}", start.elapsed());

    let truth = data.true_modes.as_ref().expect("generator attaches truth");
    for (r, run) in &fit.runs {
        let mf = mode_fit(&run.modes, truth, true)?;
        println!(
            "restart {}: J = {:.6e}, BFR = {:.2}%, mode fit = {:.2}%, iterations = {}, mode-step increases = {}",
            r + 1,
            run.cost.total,
            run.bfr,
            mf.percent,
            run.iterations,
            run.mode_step_increases
        );
    }
    let best = &fit.best;
    let mf = mode_fit(&best.modes, truth, true)?;
    println!("selected restart {}: mode fit {:.2}%", fit.best_index + 1, mf.percent);
    for cmp in compare_models(&best.model, &benchmark_system(), &mf.permutation)? {
        println!("mode {}: true    {}", cmp.true_label, cmp.truth);
        println!("mode {}: fitted  {}", cmp.true_label, cmp.estimate);
        println!("        max relative coefficient error {:.2}%", 100.0 * cmp.max_error());
    }
    Ok(())
}
