//! The integral architecture: state map, output map, the integral block
//! approximated by a left Riemann sum, and the fitting criterion.
//!
//! With piecewise-constant states and rectangular quadrature the integral
//! block reduces to
//!
//! ```text
//! x_I(t_0)     = x(t_0)
//! x_I(t_{k+1}) = x_I(t_k) + Δt_{k+1} (Â_{s_k} x(t_k) + B̂_{s_k} u(t_k))
//! ```
//!
//! where the derivative is always evaluated at the *fed* state `x`, never at
//! `x_I`. The criterion is
//!
//! ```text
//! J = Σ_{k=0}^{N-1} ‖Ĉ x(t_k) − y(t_k)‖²  +  α Σ_{k=1}^{N-1} ‖x_I(t_k) − x(t_k)‖² Δt_k  +  L(S)
//! ```

use crate::error::{Error, Result};
use crate::model::{EstimatedModel, ModeLossSpec, ModeSequence, SampledDataset, Vector};

/// Value of the criterion split into its three terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    /// Output fit `J_y`.
    pub output_fit: f64,
    /// State consistency `J_x`, before weighting by α.
    pub state_fit: f64,
    pub mode_loss: f64,
}

fn check_label(model: &EstimatedModel, label: usize) -> Result<()> {
    if (1..=model.num_modes()).contains(&label) {
        Ok(())
    } else {
        Err(Error::ModeOutOfRange {
            label,
            index: 0,
            modes: model.num_modes(),
        })
    }
}

/// `Â_s x + B̂_s u`.
pub fn state_derivative(model: &EstimatedModel, x: &Vector, u: &Vector, label: usize) -> Result<Vector> {
    check_label(model, label)?;
    if x.len() != model.n_x() {
        return Err(Error::dims("state", model.n_x(), x.len()));
    }
    if u.len() != model.n_u() {
        return Err(Error::dims("input", model.n_u(), u.len()));
    }
    Ok(model.a(label) * x + model.b(label) * u)
}

/// `Ĉ x`; the feedthrough of an estimated model is zero, so `u` does not
/// enter.
pub fn model_output(model: &EstimatedModel, x: &Vector, u: &Vector, label: usize) -> Result<Vector> {
    check_label(model, label)?;
    if x.len() != model.n_x() {
        return Err(Error::dims("state", model.n_x(), x.len()));
    }
    if u.len() != model.n_u() {
        return Err(Error::dims("input", model.n_u(), u.len()));
    }
    Ok(model.c() * x)
}

/// Integral-block outputs `x_I(t_0..t_{N-1})`. `steps[k]` holds
/// `Δt_{k+1} = t_{k+1} − t_k`.
pub fn propagate_integral_states(
    model: &EstimatedModel,
    states: &[Vector],
    u: &[Vector],
    modes: &ModeSequence,
    steps: &[f64],
) -> Result<Vec<Vector>> {
    let n = states.len();
    if n == 0 {
        return Err(Error::TooFewSamples { min: 1, found: 0 });
    }
    check_lengths(n, u.len(), modes, steps.len())?;
    if modes.num_modes() > model.num_modes() {
        return Err(Error::dims("mode count", model.num_modes(), modes.num_modes()));
    }
    let mut out = Vec::with_capacity(n);
    let mut xi = states[0].clone();
    out.push(xi.clone());
    for k in 0..n - 1 {
        let i = modes.index(k);
        xi += (&model.a[i] * &states[k] + &model.b[i] * &u[k]) * steps[k];
        out.push(xi.clone());
    }
    Ok(out)
}

fn check_lengths(n: usize, n_u: usize, modes: &ModeSequence, n_steps: usize) -> Result<()> {
    if n_u != n {
        return Err(Error::dims("input samples", n, n_u));
    }
    if modes.len() != n {
        return Err(Error::dims("mode sequence", n, modes.len()));
    }
    if n_steps + 1 != n {
        return Err(Error::dims("step sizes", n.saturating_sub(1), n_steps));
    }
    Ok(())
}

/// Output-fit term `Σ ‖Ĉ x_k − y_k‖²`.
pub(crate) fn output_fit(model: &EstimatedModel, states: &[Vector], y: &[Vector]) -> f64 {
    states
        .iter()
        .zip(y)
        .map(|(x, yk)| (model.c() * x - yk).norm_squared())
        .sum()
}

/// State-consistency term `Σ_{k≥1} ‖x_I(t_k) − x(t_k)‖² Δt_k`.
pub(crate) fn state_fit(
    model: &EstimatedModel,
    states: &[Vector],
    u: &[Vector],
    modes: &ModeSequence,
    steps: &[f64],
) -> f64 {
    let n = states.len();
    let mut xi = states[0].clone();
    let mut total = 0.0;
    for k in 0..n - 1 {
        let i = modes.index(k);
        xi += (&model.a[i] * &states[k] + &model.b[i] * &u[k]) * steps[k];
        total += (&xi - &states[k + 1]).norm_squared() * steps[k];
    }
    total
}

pub fn evaluate_cost(
    model: &EstimatedModel,
    states: &[Vector],
    modes: &ModeSequence,
    dataset: &SampledDataset,
    alpha: f64,
    mode_loss: &ModeLossSpec,
) -> Result<CostBreakdown> {
    let n = dataset.len();
    if states.len() != n {
        return Err(Error::dims("state trajectory", n, states.len()));
    }
    if modes.len() != n {
        return Err(Error::dims("mode sequence", n, modes.len()));
    }
    if modes.num_modes() != model.num_modes() || mode_loss.num_modes() != model.num_modes() {
        return Err(Error::dims("mode count", model.num_modes(), modes.num_modes()));
    }
    if states[0].len() != model.n_x() {
        return Err(Error::dims("state width", model.n_x(), states[0].len()));
    }
    if dataset.n_y() != model.n_y() || dataset.n_u() != model.n_u() {
        return Err(Error::dims("output width", model.n_y(), dataset.n_y()));
    }
    let steps = dataset.steps();
    let output = output_fit(model, states, &dataset.y);
    let state = state_fit(model, states, &dataset.u, modes, &steps);
    let loss = mode_loss.evaluate(modes);
    Ok(CostBreakdown {
        total: output + alpha * state + loss,
        output_fit: output,
        state_fit: state,
        mode_loss: loss,
    })
}
