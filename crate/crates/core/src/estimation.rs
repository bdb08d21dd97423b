//! The two least-squares blocks of the coordinate descent: model matrices
//! for fixed states and modes, and states for fixed model and modes.
//!
//! Parameter vectors use column-major vectorization,
//! `θ_i = [vec(Â_i); vec(B̂_i)]`, so that with `z = [x; u]`
//! `(zᵀ ⊗ I) θ_i = Â_i x + B̂_i u`.

use crate::error::{Error, Result};
use crate::linalg::{lstsq, lstsq_vec, solve_psd};
use crate::model::{EstimatedModel, Matrix, ModeSequence, SampledDataset, StateTrajectory, Vector};

/// Largest `N·n_x` for which the dense state solve is allowed.
pub const DENSE_STATE_LIMIT: usize = 5000;

/// `Φ = Δt [x; u] ⊗ I_{n_x}`, an `n_θ × n_x` matrix with
/// `Φᵀ θ = Δt (Â x + B̂ u)`.
pub fn build_regressor(x: &Vector, u: &Vector, dt: f64) -> Matrix {
    let n_x = x.len();
    let z: Vec<f64> = x.iter().chain(u.iter()).map(|v| v * dt).collect();
    let mut phi = Matrix::zeros(z.len() * n_x, n_x);
    for (p, zp) in z.iter().enumerate() {
        for r in 0..n_x {
            phi[(p * n_x + r, r)] = *zp;
        }
    }
    phi
}

/// Stacked parameter regression: rows `k = 1..N-1` of
/// `x(t_k) − x(t_0) ≈ Σ_{j<k} Φᵀ(t_j) θ_{s_j}`.
#[derive(Clone, Debug)]
pub struct Step1System {
    /// `Ψ P̄`, `(N−1)·n_x × K·n_θ`.
    pub regressor: Matrix,
    /// `Δx̂`, stacked `x(t_k) − x(t_0)`.
    pub target: Vector,
    /// Quadrature weight `Δt_k` of each row block.
    pub weights: Vec<f64>,
}

pub fn assemble_step1(
    states: &[Vector],
    modes: &ModeSequence,
    u: &[Vector],
    steps: &[f64],
) -> Result<Step1System> {
    let n = states.len();
    check_inputs(n, modes, u, steps)?;
    let n_x = states[0].len();
    let n_theta = n_x * (n_x + u[0].len());
    let k_modes = modes.num_modes();
    let mut regressor = Matrix::zeros((n - 1) * n_x, k_modes * n_theta);
    let mut target = Vector::zeros((n - 1) * n_x);
    let mut cumulative = Matrix::zeros(n_x, k_modes * n_theta);
    for k in 1..n {
        let j = k - 1;
        let i = modes.index(j);
        let phi_t = build_regressor(&states[j], &u[j], steps[j]).transpose();
        let mut block = cumulative.columns_mut(i * n_theta, n_theta);
        block += phi_t;
        regressor
            .view_mut(((k - 1) * n_x, 0), (n_x, k_modes * n_theta))
            .copy_from(&cumulative);
        target
            .rows_mut((k - 1) * n_x, n_x)
            .copy_from(&(&states[k] - &states[0]));
    }
    Ok(Step1System {
        regressor,
        target,
        weights: steps.to_vec(),
    })
}

fn check_inputs(n: usize, modes: &ModeSequence, u: &[Vector], steps: &[f64]) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, found: n });
    }
    if modes.len() != n {
        return Err(Error::dims("mode sequence", n, modes.len()));
    }
    if u.len() != n {
        return Err(Error::dims("input samples", n, u.len()));
    }
    if steps.len() + 1 != n {
        return Err(Error::dims("step sizes", n - 1, steps.len()));
    }
    Ok(())
}

/// Outcome of the parameter block.
#[derive(Clone, Debug)]
pub struct ParameterFit {
    pub model: EstimatedModel,
    /// The dynamics or output regression was numerically rank deficient and
    /// the minimum-norm solution was returned.
    pub rank_deficient: bool,
    /// 1-based labels of modes that never drive a transition in the
    /// sequence; their parameters are zero.
    pub unvisited: Vec<usize>,
}

/// Exact minimizer of the criterion over `(Â_i, B̂_i)` and `Ĉ` for fixed
/// states and modes.
///
/// The two parts decouple: `Ĉ` only enters the output fit and the
/// `(Â_i, B̂_i)` only the state-consistency term. Neither minimizer depends
/// on α. The dynamics regression is further separable per state component,
/// since every row block of `Ψ P̄` is `(cumulative z)ᵀ ⊗ I`: all components
/// share one `(N−1) × K(n_x+n_u)` design matrix.
pub fn fit_parameters(
    states: &[Vector],
    modes: &ModeSequence,
    dataset: &SampledDataset,
) -> Result<ParameterFit> {
    let n = dataset.len();
    if states.len() != n {
        return Err(Error::dims("state trajectory", n, states.len()));
    }
    let steps = dataset.steps();
    check_inputs(n, modes, &dataset.u, &steps)?;
    let n_x = states[0].len();
    let n_u = dataset.n_u();
    let n_y = dataset.n_y();
    let n_z = n_x + n_u;
    let k_modes = modes.num_modes();

    // rows k = 1..N-1, weighted by sqrt(Δt_k)
    let mut design = Matrix::zeros(n - 1, k_modes * n_z);
    let mut rhs = Matrix::zeros(n - 1, n_x);
    let mut cumulative = vec![0.0; k_modes * n_z];
    for k in 1..n {
        let j = k - 1;
        let i = modes.index(j);
        let h = steps[j];
        for (p, zp) in states[j].iter().chain(dataset.u[j].iter()).enumerate() {
            cumulative[i * n_z + p] += h * zp;
        }
        let w = steps[k - 1].sqrt();
        for (c, v) in cumulative.iter().enumerate() {
            design[(k - 1, c)] = w * v;
        }
        for r in 0..n_x {
            rhs[(k - 1, r)] = w * (states[k][r] - states[0][r]);
        }
    }
    let (coef, rank) = lstsq(&design, &rhs);
    // coef row (i*n_z + p), column r  ->  [Â_i B̂_i][r, p]
    let mut a = Vec::with_capacity(k_modes);
    let mut b = Vec::with_capacity(k_modes);
    for i in 0..k_modes {
        a.push(Matrix::from_fn(n_x, n_x, |r, p| coef[(i * n_z + p, r)]));
        b.push(Matrix::from_fn(n_x, n_u, |r, p| coef[(i * n_z + n_x + p, r)]));
    }

    let x_rows = Matrix::from_fn(n, n_x, |k, r| states[k][r]);
    let y_rows = Matrix::from_fn(n, n_y, |k, c| dataset.y[k][c]);
    let (ct, c_rank) = lstsq(&x_rows, &y_rows);

    let mut driven = vec![false; k_modes];
    for &i in &modes.indices()[..n - 1] {
        driven[i] = true;
    }
    let unvisited = driven
        .iter()
        .enumerate()
        .filter(|(_, &d)| !d)
        .map(|(i, _)| i + 1)
        .collect();

    Ok(ParameterFit {
        model: EstimatedModel::new(a, b, ct.transpose())?,
        rank_deficient: rank < k_modes * n_z || c_rank < n_x,
        unvisited,
    })
}

/// Matrix form of the integral block for the state solve:
/// `x_I = Ã x + B̃` and `ŷ = C̃ x`.
#[derive(Clone, Debug)]
pub struct Step3System {
    pub a_tilde: Matrix,
    pub b_tilde: Vector,
    pub c_tilde: Matrix,
}

pub fn assemble_step3(
    model: &EstimatedModel,
    modes: &ModeSequence,
    dataset: &SampledDataset,
) -> Result<Step3System> {
    let n = dataset.len();
    let steps = dataset.steps();
    check_inputs(n, modes, &dataset.u, &steps)?;
    check_model(model, modes, dataset)?;
    let n_x = model.n_x();
    let n_y = model.n_y();
    let dim = n * n_x;
    if dim > DENSE_STATE_LIMIT {
        return Err(Error::invalid(
            "dataset",
            format!("dense state system of size {dim} exceeds {DENSE_STATE_LIMIT}"),
        ));
    }
    let mut a_tilde = Matrix::zeros(dim, dim);
    let mut b_tilde = Vector::zeros(dim);
    let eye = Matrix::identity(n_x, n_x);
    a_tilde.view_mut((0, 0), (n_x, n_x)).copy_from(&eye);
    let mut b_acc = Vector::zeros(n_x);
    for k in 1..n {
        let j = k - 1;
        let i = modes.index(j);
        b_acc += &model.b[i] * &dataset.u[j] * steps[j];
        b_tilde.rows_mut(k * n_x, n_x).copy_from(&b_acc);
        for col in 0..k {
            let mut blk = &model.a[modes.index(col)] * steps[col];
            if col == 0 {
                blk += &eye;
            }
            a_tilde.view_mut((k * n_x, col * n_x), (n_x, n_x)).copy_from(&blk);
        }
    }
    let mut c_tilde = Matrix::zeros(n * n_y, dim);
    for k in 0..n {
        c_tilde
            .view_mut((k * n_y, k * n_x), (n_y, n_x))
            .copy_from(model.c());
    }
    Ok(Step3System {
        a_tilde,
        b_tilde,
        c_tilde,
    })
}

fn check_model(model: &EstimatedModel, modes: &ModeSequence, dataset: &SampledDataset) -> Result<()> {
    if modes.num_modes() != model.num_modes() {
        return Err(Error::dims("mode count", model.num_modes(), modes.num_modes()));
    }
    if dataset.n_u() != model.n_u() {
        return Err(Error::dims("input width", model.n_u(), dataset.n_u()));
    }
    if dataset.n_y() != model.n_y() {
        return Err(Error::dims("output width", model.n_y(), dataset.n_y()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("alpha", "must be positive and finite"))
    }
}

/// Exact minimizer of the criterion over the state trajectory for fixed
/// model and modes, computed by the dense stacked least-squares problem
/// `[C̃; W(Ã − I)] x ≈ [y; −W B̃]` with `W = diag(√(α Δt_k))`.
///
/// Cost is cubic in `N·n_x`; [`fit_states`] is the linear-time route.
pub fn fit_states_dense(
    model: &EstimatedModel,
    modes: &ModeSequence,
    dataset: &SampledDataset,
    alpha: f64,
) -> Result<(StateTrajectory, bool)> {
    check_alpha(alpha)?;
    let sys = assemble_step3(model, modes, dataset)?;
    let (m, rhs) = stacked_state_system(&sys, dataset, alpha);
    let (z, rank) = lstsq_vec(&m, &rhs);
    let states = StateTrajectory::from_stacked(&z, model.n_x());
    Ok((states, rank < m.ncols()))
}

/// The stacked matrix and right-hand side whose least-squares solution is
/// the state block minimizer.
pub fn stacked_state_system(sys: &Step3System, dataset: &SampledDataset, alpha: f64) -> (Matrix, Vector) {
    let n = dataset.len();
    let dim = sys.a_tilde.ncols();
    let n_x = dim / n;
    let n_y = sys.c_tilde.nrows() / n;
    let steps = dataset.steps();
    let rows_y = n * n_y;
    let mut m = Matrix::zeros(rows_y + dim, dim);
    let mut rhs = Vector::zeros(rows_y + dim);
    m.view_mut((0, 0), (rows_y, dim)).copy_from(&sys.c_tilde);
    for k in 0..n {
        rhs.rows_mut(k * n_y, n_y).copy_from(&dataset.y[k]);
    }
    let mut residual_op = &sys.a_tilde - Matrix::identity(dim, dim);
    for k in 1..n {
        let w = (alpha * steps[k - 1]).sqrt();
        let mut rows = residual_op.rows_mut(k * n_x, n_x);
        rows *= w;
        for r in 0..n_x {
            rhs[rows_y + k * n_x + r] = -w * sys.b_tilde[k * n_x + r];
        }
    }
    residual_op.rows_mut(0, n_x).fill(0.0);
    m.view_mut((rows_y, 0), (dim, dim)).copy_from(&residual_op);
    (m, rhs)
}

/// Exact minimizer of the criterion over the state trajectory for fixed
/// model and modes.
///
/// Treats the integral-block output `w_k = x_I(t_k)` as the state of a
/// linear–quadratic problem whose "control" is the fed state `x_k`:
///
/// ```text
/// w_{k+1} = w_k + Δt_{k+1} (Â_{s_k} x_k + B̂_{s_k} u_k),   w_0 = x_0
/// stage k ≥ 1:  ‖Ĉ x_k − y_k‖² + α Δt_k ‖w_k − x_k‖²
/// ```
///
/// A backward Riccati sweep followed by a forward pass gives the same
/// minimizer as [`fit_states_dense`] in `O(N n_x³)`.
pub fn fit_states(
    model: &EstimatedModel,
    modes: &ModeSequence,
    dataset: &SampledDataset,
    alpha: f64,
) -> Result<StateTrajectory> {
    check_alpha(alpha)?;
    let n = dataset.len();
    let steps = dataset.steps();
    check_inputs(n, modes, &dataset.u, &steps)?;
    check_model(model, modes, dataset)?;
    let n_x = model.n_x();
    let c = model.c();
    let ctc = c.transpose() * c;
    let eye = Matrix::identity(n_x, n_x);

    // backward sweep; gains[k] = (H_k^{-1} K_k, H_k^{-1} b_k) for k = 1..N-1
    let mut gains: Vec<(Matrix, Vector)> = vec![(Matrix::zeros(0, 0), Vector::zeros(0)); n];
    let mut p_mat = Matrix::zeros(n_x, n_x);
    let mut p_vec = Vector::zeros(n_x);
    for k in (1..n).rev() {
        let rho = alpha * steps[k - 1];
        let cty = c.transpose() * &dataset.y[k];
        let (h, kk, b) = if k + 1 < n {
            let i = modes.index(k);
            let g_mat = &model.a[i] * steps[k];
            let g_vec = &model.b[i] * &dataset.u[k] * steps[k];
            let gt_p = g_mat.transpose() * &p_mat;
            let h = &ctc + &eye * rho + &gt_p * &g_mat;
            let kk = &eye * rho - &gt_p;
            let b = cty + g_mat.transpose() * (&p_vec - &p_mat * &g_vec);
            p_vec -= &p_mat * &g_vec;
            (h, kk, b)
        } else {
            (&ctc + &eye * rho, &eye * rho, cty)
        };
        let mut rhs = Matrix::zeros(n_x, n_x + 1);
        rhs.columns_mut(0, n_x).copy_from(&kk);
        rhs.column_mut(n_x).copy_from(&b);
        let sol = solve_psd(&h, &rhs);
        let gain = sol.columns(0, n_x).into_owned();
        let offset = sol.column(n_x).into_owned();
        // P_k = ρI + P − Kᵀ H⁻¹ K,  p_k = p − P g + Kᵀ H⁻¹ b
        p_mat += &eye * rho - kk.transpose() * &gain;
        p_vec += kk.transpose() * &offset;
        p_mat = (&p_mat + p_mat.transpose()) * 0.5;
        gains[k] = (gain, offset);
    }

    // initial state: x_0 = w_0 minimizes ‖Ĉ x_0 − y_0‖² + V_1((I + Δt_1 Â) x_0 + Δt_1 B̂ u_0)
    let i0 = modes.index(0);
    let f = &eye + &model.a[i0] * steps[0];
    let g0 = &model.b[i0] * &dataset.u[0] * steps[0];
    let h0 = &ctc + f.transpose() * &p_mat * &f;
    let rhs0 = c.transpose() * &dataset.y[0] + f.transpose() * (&p_vec - &p_mat * &g0);
    let x0 = solve_psd(&h0, &Matrix::from_column_slice(n_x, 1, rhs0.as_slice()))
        .column(0)
        .into_owned();

    let mut states = Vec::with_capacity(n);
    let mut w = &f * &x0 + g0;
    states.push(x0);
    for k in 1..n {
        let (gain, offset) = &gains[k];
        let x = gain * &w + offset;
        if k + 1 < n {
            let i = modes.index(k);
            w += (&model.a[i] * &x + &model.b[i] * &dataset.u[k]) * steps[k];
        }
        states.push(x);
    }
    StateTrajectory::new(states)
}
