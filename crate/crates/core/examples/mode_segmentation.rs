//! Exact mode segmentation for a known model.
//!
//! With the true dynamics and the true states fixed, the dynamic program
//! recovers the switching signal from one-step prediction residuals. The
//! switch penalty τ trades residual fit against the number of switches.

use ctlss::dp::{estimate_modes, markov_mode_loss};
use ctlss::metrics::mode_fit;
use ctlss::model::EstimatedModel;
use ctlss::simulator::{benchmark_system, generate_benchmark_dataset, BenchmarkSpec, NoiseLevel};

fn main() -> ctlss::Result<()> {
    let sys = benchmark_system();
    let model = EstimatedModel::new(
        sys.modes().iter().map(|m| m.a.clone()).collect(),
        sys.modes().iter().map(|m| m.b.clone()).collect(),
        sys.modes()[0].c.clone(),
    )?;
    let data = generate_benchmark_dataset(&BenchmarkSpec {
        noise: NoiseLevel::StdDev(0.0),
        ..Default::default()
    })?;
    let states = data.true_states.as_ref().expect("generator attaches truth");
    let truth = data.true_modes.as_ref().expect("generator attaches truth");
    println!("true sequence: {} switches", truth.switches());

    for tau in [0.0, 1e-6, 1e-5, 1e-4, 1e-2] {
        let loss = markov_mode_loss(2, 0.1, tau, false)?;
        let est = estimate_modes(&model, states, &data, 0.01, &loss)?;
        let fit = mode_fit(&est, truth, false)?;
        println!(
            "tau = {tau:>7.0e}: mode fit {:6.2}%, {:3} switches",
            fit.percent,
            est.switches()
        );
    }
    Ok(())
}
