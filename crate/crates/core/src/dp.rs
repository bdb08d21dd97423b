//! Mode-sequence block: exact segmentation by backward dynamic programming,
//! and the Markov transition loss.

use crate::error::{Error, Result};
use crate::model::{EstimatedModel, Matrix, ModeLossSpec, ModeSequence, SampledDataset, Vector};

/// Markov-chain mode loss with zero initial and per-mode costs.
///
/// Staying costs `−τ log(1−π)`, switching costs `−τ log π` (negative
/// log-likelihood of a chain that switches with probability π). With
/// `literal_sign` the switch branch is `+τ log π` instead, which rewards
/// switching for π < 1.
pub fn markov_mode_loss(modes: usize, pi: f64, tau: f64, literal_sign: bool) -> Result<ModeLossSpec> {
    if modes == 0 {
        return Err(Error::invalid("K", "mode count must be at least 1"));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::invalid("pi", format!("{pi} is not in (0, 1)")));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", "must be finite and non-negative"));
    }
    let stay = -tau * (1.0 - pi).ln();
    let switch = if literal_sign { tau * pi.ln() } else { -tau * pi.ln() };
    let trans = Matrix::from_fn(modes, modes, |r, c| if r == c { stay } else { switch });
    ModeLossSpec::new(vec![0.0; modes], vec![0.0; modes], trans)
}

/// One-step residual `‖x_{k+1} − x_k − Δt Â_i x_k − Δt B̂_i u_k‖²` of mode
/// `label` at index `k`.
pub fn transition_cost(
    model: &EstimatedModel,
    states: &[Vector],
    u: &[Vector],
    k: usize,
    label: usize,
    dt: f64,
) -> Result<f64> {
    if states.len() < 2 || k + 1 >= states.len() || k >= u.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: states.len().saturating_sub(2),
        });
    }
    if !(1..=model.num_modes()).contains(&label) {
        return Err(Error::ModeOutOfRange {
            label,
            index: k,
            modes: model.num_modes(),
        });
    }
    Ok(step_residual(model, states, u, k, label - 1, dt))
}

fn step_residual(model: &EstimatedModel, states: &[Vector], u: &[Vector], k: usize, i: usize, dt: f64) -> f64 {
    let pred = &states[k] + (&model.a[i] * &states[k] + &model.b[i] * &u[k]) * dt;
    (&states[k + 1] - pred).norm_squared()
}

/// Data term of every (sample, mode) pair: `α Δt_{k+1} ℓ_k(i)` for
/// `k ≤ N−2` and zero for the last sample. Row `k`, column `i` (0-based).
pub fn stage_costs(model: &EstimatedModel, states: &[Vector], dataset: &SampledDataset, alpha: f64) -> Matrix {
    let n = dataset.len();
    let k_modes = model.num_modes();
    let steps = dataset.steps();
    Matrix::from_fn(n, k_modes, |k, i| {
        if k + 1 < n {
            alpha * steps[k] * step_residual(model, states, &dataset.u, k, i, steps[k])
        } else {
            0.0
        }
    })
}

/// Total sequence cost `Σ_k stage[k, s_k] + L(S)`.
pub fn sequence_cost(stage: &Matrix, mode_loss: &ModeLossSpec, seq: &ModeSequence) -> f64 {
    let data: f64 = seq.indices().iter().enumerate().map(|(k, &i)| stage[(k, i)]).sum();
    data + mode_loss.evaluate(seq)
}

/// Globally optimal mode sequence for a table of stage costs.
///
/// Backward recursion over the value table `V` (N × K) with successor table
/// `U`; the sequence is read forward from the minimum of `V_0`. Every argmin
/// keeps the smallest mode index among ties, which yields the
/// lexicographically smallest optimal sequence.
pub fn segment(stage: &Matrix, mode_loss: &ModeLossSpec) -> ModeSequence {
    let (n, k_modes) = stage.shape();
    assert_eq!(mode_loss.num_modes(), k_modes);
    if n == 0 {
        return ModeSequence::from_indices(vec![], k_modes);
    }
    let trans = mode_loss.trans_matrix();
    let mut value = Matrix::zeros(n, k_modes);
    let mut succ = vec![vec![0usize; k_modes]; n];
    for i in 0..k_modes {
        value[(n - 1, i)] = stage[(n - 1, i)] + mode_loss.mode_cost[i];
    }
    for k in (0..n - 1).rev() {
        for i in 0..k_modes {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for j in 0..k_modes {
                let c = trans[(j, i)] + value[(k + 1, j)];
                if c < best {
                    best = c;
                    arg = j;
                }
            }
            let own = if k == 0 {
                mode_loss.init_cost[i]
            } else {
                mode_loss.mode_cost[i]
            };
            value[(k, i)] = stage[(k, i)] + own + best;
            succ[k][i] = arg;
        }
    }
    let mut cur = 0;
    for i in 1..k_modes {
        if value[(0, i)] < value[(0, cur)] {
            cur = i;
        }
    }
    let mut idx = Vec::with_capacity(n);
    idx.push(cur);
    for row in succ.iter().take(n - 1) {
        cur = row[cur];
        idx.push(cur);
    }
    ModeSequence::from_indices(idx, k_modes)
}

/// Mode sequence minimizing
/// `G(S) = α Σ_{k≤N−2} Δt_{k+1} ℓ_k(s_k) + L(S)` for fixed model and states.
pub fn estimate_modes(
    model: &EstimatedModel,
    states: &[Vector],
    dataset: &SampledDataset,
    alpha: f64,
    mode_loss: &ModeLossSpec,
) -> Result<ModeSequence> {
    let n = dataset.len();
    if states.len() != n {
        return Err(Error::dims("state trajectory", n, states.len()));
    }
    if mode_loss.num_modes() != model.num_modes() {
        return Err(Error::dims("mode loss size", model.num_modes(), mode_loss.num_modes()));
    }
    if states[0].len() != model.n_x() {
        return Err(Error::dims("state width", model.n_x(), states[0].len()));
    }
    let stage = stage_costs(model, states, dataset, alpha);
    Ok(segment(&stage, mode_loss))
}
