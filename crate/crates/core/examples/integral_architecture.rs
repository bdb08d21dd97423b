//! The integral block and the three terms of the criterion.
//!
//! States that follow the forward-Euler recursion of the model reproduce
//! themselves through the integral block, so the state term vanishes. The
//! exact (RK4) states of the same system leave a residual that shrinks
//! linearly with the sampling interval.

use ctlss::dp::markov_mode_loss;
use ctlss::integral::{evaluate_cost, propagate_integral_states};
use ctlss::model::{EstimatedModel, ModeSequence, SampledDataset, Vector};
use ctlss::simulator::{benchmark_system, simulate};

fn main() -> ctlss::Result<()> {
    let sys = benchmark_system();
    let model = EstimatedModel::new(
        sys.modes().iter().map(|m| m.a.clone()).collect(),
        sys.modes().iter().map(|m| m.b.clone()).collect(),
        sys.modes()[0].c.clone(),
    )?;
    let loss = markov_mode_loss(2, 0.1, 1e-6, false)?;

    for dt in [0.01, 0.005, 0.0025] {
        let n = (2.0 / dt) as usize + 1;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let u: Vec<Vector> = t.iter().map(|&s| Vector::from_element(1, (3.0 * s).sin())).collect();
        let labels: Vec<usize> = t.iter().map(|&s| if s < 1.0 { 1 } else { 2 }).collect();
        let modes = ModeSequence::from_labels(&labels, 2)?;

        // forward-Euler states of the model
        let mut euler = vec![Vector::zeros(2)];
        for k in 0..n - 1 {
            let i = labels[k];
            let x = &euler[k];
            euler.push(x + (model.a(i) * x + model.b(i) * &u[k]) * dt);
        }
        let x_i = propagate_integral_states(&model, &euler, &u, &modes, &vec![dt; n - 1])?;
        let gap = euler.iter().zip(&x_i).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);

        // exact trajectory of the continuous-time system
        let exact = simulate(&sys, &u, &modes, &t, &Vector::zeros(2), 20)?;
        let data = SampledDataset::new(t, u, exact.outputs.clone())?;
        let j_euler = evaluate_cost(&model, &euler, &modes, &data, 0.01, &loss)?;
        let j_exact = evaluate_cost(&model, &exact.states, &modes, &data, 0.01, &loss)?;

        println!("dt = {dt}");
        println!("  Euler states: max |x_I - x| = {gap:.1e}, J_x = {:.3e}", j_euler.state_fit);
        println!(
            "  exact states: J_y = {:.3e}, J_x = {:.3e}, L(S) = {:.3e}, J = {:.3e}",
            j_exact.output_fit, j_exact.state_fit, j_exact.mode_loss, j_exact.total
        );
        let max_dev = exact
            .states
            .iter()
            .zip(propagate_integral_states(&model, &exact.states, &data.u, &modes, &data.steps())?)
            .map(|(x, xi)| (x - xi).amax())
            .fold(0.0, f64::max);
        println!("  exact states: max |x_I - x| = {max_dev:.3e}");
    }
    Ok(())
}
