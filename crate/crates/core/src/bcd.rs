//! Block coordinate descent over model matrices, mode sequence and states,
//! with the single-mode initializer and multi-start selection.

use rayon::prelude::*;

use crate::dp::estimate_modes;
use crate::error::{Error, Result};
use crate::estimation::{fit_parameters, fit_states};
use crate::integral::evaluate_cost;
use crate::metrics::{bfr, open_loop_output};
use crate::model::{
    FitConfig, FitResult, ModeSequence, SampledDataset, StateTrajectory, StepCosts, Termination, Vector,
};
use crate::rng::{mix_seed, Rng};

/// Half-width (in samples) of the local polynomial smoother that seeds the
/// single-mode initializer.
pub const SMOOTHER_HALF_WIDTH: usize = 5;

/// Local least-squares polynomial fit of each output channel: returns the
/// smoothed value and time derivatives up to `order` at every sample.
///
/// Entry `[d][k]` is the `d`-th derivative at `t_k`, one value per channel.
pub fn smoothed_derivatives(dataset: &SampledDataset, order: usize) -> Vec<Vec<Vector>> {
    let n = dataset.len();
    let n_y = dataset.n_y();
    let degree = (order + 1).max(3);
    let half = SMOOTHER_HALF_WIDTH.max(degree);
    let mut out = vec![vec![Vector::zeros(n_y); n]; order + 1];
    for k in 0..n {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(n);
        let deg = degree.min(hi - lo - 1);
        let scale = (dataset.t[hi - 1] - dataset.t[lo]).max(f64::MIN_POSITIVE);
        let vander = crate::model::Matrix::from_fn(hi - lo, deg + 1, |r, p| {
            ((dataset.t[lo + r] - dataset.t[k]) / scale).powi(p as i32)
        });
        let rhs = crate::model::Matrix::from_fn(hi - lo, n_y, |r, c| dataset.y[lo + r][c]);
        let (coef, _) = crate::linalg::lstsq(&vander, &rhs);
        let mut fact = 1.0;
        for (d, row) in out.iter_mut().enumerate() {
            if d > 0 {
                fact *= d as f64;
            }
            row[k] = if d <= deg {
                Vector::from_fn(n_y, |c, _| coef[(d, c)] * fact / scale.powi(d as i32))
            } else {
                Vector::zeros(n_y)
            };
        }
    }
    out
}

/// Unperturbed state seed of a single-mode (LTI) model.
///
/// Starts from smoothed outputs and their time derivatives (each column
/// rescaled to the RMS of the outputs), then alternates the parameter and
/// state blocks with one mode for `rounds` rounds.
pub fn lti_states(dataset: &SampledDataset, n_x: usize, alpha: f64, rounds: usize) -> Result<StateTrajectory> {
    dataset.validate()?;
    let n = dataset.len();
    let n_y = dataset.n_y();
    let order = n_x.div_ceil(n_y) - 1;
    let derivs = smoothed_derivatives(dataset, order);
    let y_rms = (dataset.y.iter().map(|v| v.norm_squared()).sum::<f64>() / (n * n_y) as f64)
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n_x);
    'fill: for row in &derivs {
        for c in 0..n_y {
            if columns.len() == n_x {
                break 'fill;
            }
            let col: Vec<f64> = row.iter().map(|v| v[c]).collect();
            let rms = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let s = if rms > 0.0 { y_rms / rms } else { 1.0 };
            columns.push(col.into_iter().map(|v| v * s).collect());
        }
    }
    let mut states: Vec<Vector> = (0..n)
        .map(|k| Vector::from_fn(n_x, |r, _| columns[r][k]))
        .collect();
    let modes = ModeSequence::constant(1, n, 1)?;
    for _ in 0..rounds {
        let fit = fit_parameters(&states, &modes, dataset)?;
        states = fit_states(&fit.model, &modes, dataset, alpha)?.into_inner();
    }
    StateTrajectory::new(states)
}

/// `x + v` with i.i.d. `N(0, σ²)` entries in `v`.
pub fn perturb_states(states: &StateTrajectory, sigma: f64, seed: u64) -> StateTrajectory {
    let mut rng = Rng::new(seed);
    let out = states
        .iter()
        .map(|x| x.map(|v| v + sigma * rng.normal()))
        .collect();
    StateTrajectory::from_vec_unchecked(out)
}

/// Perturbed single-mode state seed.
pub fn initialize_states(
    dataset: &SampledDataset,
    n_x: usize,
    alpha: f64,
    rounds: usize,
    sigma_x: f64,
    seed: u64,
) -> Result<StateTrajectory> {
    if !(sigma_x >= 0.0) {
        return Err(Error::invalid("sigma_x", "must be non-negative"));
    }
    Ok(perturb_states(&lti_states(dataset, n_x, alpha, rounds)?, sigma_x, seed))
}

/// I.i.d. uniform labels over `1..=K`.
pub fn initialize_modes(modes: usize, len: usize, seed: u64) -> Result<ModeSequence> {
    if modes == 0 {
        return Err(Error::invalid("K", "mode count must be at least 1"));
    }
    let mut rng = Rng::new(seed);
    let idx = (0..len).map(|_| rng.below(modes)).collect();
    Ok(ModeSequence::from_indices(idx, modes))
}

/// Run the three-block descent from the given initial states and modes.
///
/// Each iteration updates parameters, then modes, then states. The mode
/// block adopts the dynamic-programming segmentation, which scores one-step
/// residuals while the criterion scores accumulated ones, so that block can
/// raise the total cost; such iterations are counted in
/// [`FitResult::mode_step_increases`].
pub fn coordinate_descent(
    dataset: &SampledDataset,
    config: &FitConfig,
    states: StateTrajectory,
    modes: ModeSequence,
) -> Result<FitResult> {
    run(dataset, config, states, modes, 0)
}

/// Slack used when counting cost increases of the mode block.
pub const INCREASE_SLACK: f64 = 1e-9;

fn run(
    dataset: &SampledDataset,
    config: &FitConfig,
    states: StateTrajectory,
    modes: ModeSequence,
    seed: u64,
) -> Result<FitResult> {
    dataset.validate()?;
    config.validate()?;
    let n = dataset.len();
    if states.len() != n {
        return Err(Error::dims("initial states", n, states.len()));
    }
    if states.n_x() != config.n_x {
        return Err(Error::dims("initial state width", config.n_x, states.n_x()));
    }
    if modes.len() != n {
        return Err(Error::dims("initial modes", n, modes.len()));
    }
    if modes.num_modes() != config.modes {
        return Err(Error::dims("initial mode count", config.modes, modes.num_modes()));
    }
    let alpha = config.alpha;
    let loss = &config.mode_loss;
    let cost = |m: &_, x: &[Vector], s: &ModeSequence| evaluate_cost(m, x, s, dataset, alpha, loss);
    let finite = |v: f64, step: &'static str, iteration: usize| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteCost { step, iteration })
        }
    };

    let mut x = states;
    let mut s = modes;
    let mut cost_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut increases = 0;
    let mut previous = f64::INFINITY;
    let mut termination = Termination::MaxIterations;
    let mut last = None;
    for it in 1..=config.n_max {
        let model = fit_parameters(&x, &s, dataset)?.model;
        let after_parameters = finite(cost(&model, &x, &s)?.total, "parameter update", it)?;

        s = estimate_modes(&model, &x, dataset, alpha, loss)?;
        let after_modes = finite(cost(&model, &x, &s)?.total, "mode update", it)?;
        if after_modes > after_parameters + INCREASE_SLACK {
            increases += 1;
        }

        x = fit_states(&model, &s, dataset, alpha).map_err(|e| match e {
            Error::Divergence { .. } => Error::NonFiniteCost {
                step: "state update",
                iteration: it,
            },
            e => e,
        })?;
        let breakdown = cost(&model, &x, &s)?;
        let after_states = finite(breakdown.total, "state update", it)?;

        cost_trace.push(after_states);
        step_trace.push(StepCosts {
            after_parameters,
            after_modes,
            after_states,
        });
        let done = (after_states - previous).abs() <= config.eps;
        previous = after_states;
        last = Some((model, breakdown));
        if done {
            termination = Termination::Tolerance;
            break;
        }
    }
    let (model, breakdown) = last.expect("n_max >= 1");
    let fitted: Vec<Vector> = x.iter().map(|xk| model.c() * xk).collect();
    let state_bfr = bfr(&fitted, &dataset.y).unwrap_or(f64::NEG_INFINITY);
    let open_loop = open_loop_output(&model, &s, dataset, &x[0])
        .and_then(|y| bfr(&y, &dataset.y))
        .unwrap_or(f64::NEG_INFINITY);
    Ok(FitResult {
        iterations: cost_trace.len(),
        model,
        modes: s,
        states: x,
        cost_trace,
        step_trace,
        cost: breakdown,
        termination,
        mode_step_increases: increases,
        bfr: if open_loop.is_nan() { f64::NEG_INFINITY } else { open_loop },
        state_bfr,
        seed,
    })
}

/// All restarts of a multi-start fit and the selected one.
#[derive(Clone, Debug)]
pub struct MultiStart {
    pub best: FitResult,
    /// 0-based restart number of `best`.
    pub best_index: usize,
    /// Completed restarts as `(restart, result)`, in restart order.
    pub runs: Vec<(usize, FitResult)>,
    /// Restarts that aborted, with their diagnostic.
    pub failures: Vec<(usize, String)>,
}

/// Seed of restart `r`, a stable mix of the master seed and `r`.
pub fn restart_seed(master: u64, restart: usize) -> u64 {
    mix_seed(master, restart as u64)
}

/// Run `config.restarts` independent descents and keep the one with the
/// largest open-loop best fit rate on the training outputs (ties keep the
/// earliest restart).
///
/// Restarts share the single-mode state seed and differ in the state
/// perturbation and the random initial mode sequence.
pub fn multistart_fit(dataset: &SampledDataset, config: &FitConfig) -> Result<MultiStart> {
    dataset.validate()?;
    config.validate()?;
    let base = lti_states(dataset, config.n_x, config.alpha, config.init_rounds)?;
    let outcomes: Vec<Result<FitResult>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = restart_seed(config.seed, r);
            let x0 = perturb_states(&base, config.sigma_x, mix_seed(seed, 0));
            let s0 = initialize_modes(config.modes, dataset.len(), mix_seed(seed, 1))?;
            run(dataset, config, x0, s0, seed)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(fit) => runs.push((r, fit)),
            Err(e) => {
                failures.push((r, e.to_string()));
                first_error.get_or_insert(e);
            }
        }
    }
    if runs.is_empty() {
        return Err(first_error.expect("restarts >= 1"));
    }
    let mut best = 0;
    for (i, (_, run)) in runs.iter().enumerate() {
        if run.bfr > runs[best].1.bfr {
            best = i;
        }
    }
    Ok(MultiStart {
        best: runs[best].1.clone(),
        best_index: runs[best].0,
        runs,
        failures,
    })
}
