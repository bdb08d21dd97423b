//! Simulate the two-mode benchmark and write it as CSV.
//!
//! ```text
//! cargo run --example simulate_benchmark -- [out.csv]
//! ```

use std::path::PathBuf;

use ctlss::io::write_dataset;
use ctlss::simulator::{generate_benchmark_dataset, measured_snr_db, BenchmarkSpec};

fn main() -> ctlss::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("benchmark.csv"));

    let spec = BenchmarkSpec::default();
    let data = generate_benchmark_dataset(&spec)?;
    let modes = data.true_modes.as_ref().expect("generator attaches truth");
    let y0 = data.noise_free.as_ref().expect("generator attaches truth");

    println!("samples:     {}", data.len());
    println!("duration:    {:.2} s", data.t[data.len() - 1]);
    println!("switches:    {}", modes.switches());
    let freq = modes.label_frequencies();
    println!("time in mode 1: {:.1}%, mode 2: {:.1}%", 100.0 * freq[0], 100.0 * freq[1]);
    println!("SNR:         {:.2} dB", measured_snr_db(y0, &data.y)[0]);

    write_dataset(&data, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
