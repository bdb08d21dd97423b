//! Core domain types: the true switched generator, the identified model,
//! sampled datasets, mode sequences, state trajectories and mode losses.
//!
//! Mode labels are 1-based (`1..=K`) everywhere they cross the public API or
//! a file boundary. Internally sequences keep 0-based indices.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integral::CostBreakdown;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// One LTI submodel `(A, B, C, D)` of a switched system.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

/// Continuous-time linear switched state-space system
/// `dx/dt = A_s x + B_s u`, `y = C_s x + D_s u`.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedSystem {
    modes: Vec<Subsystem>,
    n_x: usize,
    n_u: usize,
    n_y: usize,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<Subsystem>) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::invalid("modes", "a switched system needs at least one mode"))?;
        let n_x = first.a.nrows();
        let n_u = first.b.ncols();
        let n_y = first.c.nrows();
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::invalid("dimensions", "n_x, n_u and n_y must be at least 1"));
        }
        for (i, m) in modes.iter().enumerate() {
            let label = i + 1;
            check_shape(&m.a, n_x, n_x, format!("A_{label}"))?;
            check_shape(&m.b, n_x, n_u, format!("B_{label}"))?;
            check_shape(&m.c, n_y, n_x, format!("C_{label}"))?;
            check_shape(&m.d, n_y, n_u, format!("D_{label}"))?;
        }
        Ok(SwitchedSystem { modes, n_x, n_u, n_y })
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    /// Submodel for a 1-based mode label.
    pub fn mode(&self, label: usize) -> Option<&Subsystem> {
        label.checked_sub(1).and_then(|i| self.modes.get(i))
    }

    pub fn modes(&self) -> &[Subsystem] {
        &self.modes
    }
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, what: String) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::dims(format!("{what} rows"), rows, m.nrows()));
    }
    if m.ncols() != cols {
        return Err(Error::dims(format!("{what} columns"), cols, m.ncols()));
    }
    Ok(())
}

/// Identified model: per-mode `(Â_i, B̂_i)`, one shared output matrix `Ĉ`,
/// and a feedthrough fixed to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedModel {
    pub(crate) a: Vec<Matrix>,
    pub(crate) b: Vec<Matrix>,
    pub(crate) c: Matrix,
}

impl EstimatedModel {
    pub fn new(a: Vec<Matrix>, b: Vec<Matrix>, c: Matrix) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("modes", "model needs at least one mode"));
        }
        if a.len() != b.len() {
            return Err(Error::dims("number of B matrices", a.len(), b.len()));
        }
        let n_x = a[0].nrows();
        let n_u = b[0].ncols();
        let n_y = c.nrows();
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::invalid("dimensions", "n_x, n_u and n_y must be at least 1"));
        }
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            check_shape(ai, n_x, n_x, format!("Â_{}", i + 1))?;
            check_shape(bi, n_x, n_u, format!("B̂_{}", i + 1))?;
        }
        check_shape(&c, n_y, n_x, "Ĉ".to_string())?;
        Ok(EstimatedModel { a, b, c })
    }

    /// All-zero model of the given orders.
    pub fn zeros(modes: usize, n_x: usize, n_u: usize, n_y: usize) -> Self {
        EstimatedModel {
            a: vec![Matrix::zeros(n_x, n_x); modes],
            b: vec![Matrix::zeros(n_x, n_u); modes],
            c: Matrix::zeros(n_y, n_x),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.a.len()
    }

    pub fn n_x(&self) -> usize {
        self.c.ncols()
    }

    pub fn n_u(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    /// Length of one mode's parameter vector, `n_x (n_x + n_u)`.
    pub fn n_theta(&self) -> usize {
        self.n_x() * (self.n_x() + self.n_u())
    }

    /// `Â` of a 1-based mode label.
    pub fn a(&self, label: usize) -> &Matrix {
        &self.a[label - 1]
    }

    /// `B̂` of a 1-based mode label.
    pub fn b(&self, label: usize) -> &Matrix {
        &self.b[label - 1]
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Stacked parameters `θ = [vec(Â); vec(B̂)]` (column-major vec).
    pub fn theta(&self, label: usize) -> Vector {
        let a = self.a(label);
        let b = self.b(label);
        Vector::from_iterator(
            a.len() + b.len(),
            a.iter().copied().chain(b.iter().copied()),
        )
    }

    /// Rebuild `(Â, B̂)` pairs from stacked parameter vectors.
    pub fn from_thetas(thetas: &[Vector], n_x: usize, n_u: usize, c: Matrix) -> Result<Self> {
        let mut a = Vec::with_capacity(thetas.len());
        let mut b = Vec::with_capacity(thetas.len());
        for th in thetas {
            if th.len() != n_x * (n_x + n_u) {
                return Err(Error::dims("θ length", n_x * (n_x + n_u), th.len()));
            }
            a.push(Matrix::from_column_slice(n_x, n_x, &th.as_slice()[..n_x * n_x]));
            b.push(Matrix::from_column_slice(n_x, n_u, &th.as_slice()[n_x * n_x..]));
        }
        EstimatedModel::new(a, b, c)
    }

    /// View the estimate as a switched system with `C_i = Ĉ` and `D_i = 0`.
    pub fn to_switched_system(&self) -> SwitchedSystem {
        let d = Matrix::zeros(self.n_y(), self.n_u());
        let modes = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| Subsystem {
                a: a.clone(),
                b: b.clone(),
                c: self.c.clone(),
                d: d.clone(),
            })
            .collect();
        SwitchedSystem::new(modes).expect("estimated model dimensions are consistent")
    }
}

/// Input/output samples, optionally with ground truth attached.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDataset {
    pub t: Vec<f64>,
    pub u: Vec<Vector>,
    pub y: Vec<Vector>,
    pub true_modes: Option<ModeSequence>,
    pub true_states: Option<Vec<Vector>>,
    pub noise_free: Option<Vec<Vector>>,
}

impl SampledDataset {
    pub fn new(t: Vec<f64>, u: Vec<Vector>, y: Vec<Vector>) -> Result<Self> {
        let ds = SampledDataset {
            t,
            u,
            y,
            true_modes: None,
            true_states: None,
            noise_free: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Check every structural invariant of the dataset.
    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n < 2 {
            return Err(Error::TooFewSamples { min: 2, found: n });
        }
        if self.u.len() != n {
            return Err(Error::dims("input samples", n, self.u.len()));
        }
        if self.y.len() != n {
            return Err(Error::dims("output samples", n, self.y.len()));
        }
        for (k, w) in self.t.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::NonMonotoneTimestamps {
                    index: k + 1,
                    previous: w[0],
                    value: w[1],
                });
            }
        }
        uniform_dim(&self.u, "input")?;
        uniform_dim(&self.y, "output")?;
        if let Some(s) = &self.true_modes {
            if s.len() != n {
                return Err(Error::dims("true modes", n, s.len()));
            }
        }
        if let Some(x) = &self.true_states {
            if x.len() != n {
                return Err(Error::dims("true states", n, x.len()));
            }
            uniform_dim(x, "true state")?;
        }
        if let Some(y0) = &self.noise_free {
            if y0.len() != n {
                return Err(Error::dims("noise-free outputs", n, y0.len()));
            }
            if y0[0].len() != self.n_y() {
                return Err(Error::dims("noise-free output width", self.n_y(), y0[0].len()));
            }
            uniform_dim(y0, "noise-free output")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.u.first().map_or(0, |v| v.len())
    }

    pub fn n_y(&self) -> usize {
        self.y.first().map_or(0, |v| v.len())
    }

    /// Step sizes `Δt_k = t_k - t_{k-1}` for `k = 1..N-1`; entry `k-1` holds `Δt_k`.
    pub fn steps(&self) -> Vec<f64> {
        self.t.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn uniform_dim(v: &[Vector], what: &str) -> Result<()> {
    let d = v.first().map_or(0, |x| x.len());
    if d == 0 {
        return Err(Error::invalid("dimensions", format!("{what} vectors must be non-empty")));
    }
    for x in v {
        if x.len() != d {
            return Err(Error::dims(format!("{what} width"), d, x.len()));
        }
    }
    Ok(())
}

/// A mode label per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSequence {
    idx: Vec<usize>,
    modes: usize,
}

impl ModeSequence {
    /// Build from 1-based labels.
    pub fn from_labels(labels: &[usize], modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("K", "mode count must be at least 1"));
        }
        let idx = labels
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                if (1..=modes).contains(&l) {
                    Ok(l - 1)
                } else {
                    Err(Error::ModeOutOfRange {
                        label: l,
                        index: k,
                        modes,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(ModeSequence { idx, modes })
    }

    pub fn constant(label: usize, len: usize, modes: usize) -> Result<Self> {
        ModeSequence::from_labels(&vec![label; len], modes)
    }

    pub(crate) fn from_indices(idx: Vec<usize>, modes: usize) -> Self {
        debug_assert!(idx.iter().all(|&i| i < modes));
        ModeSequence { idx, modes }
    }

    /// 1-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.idx.iter().map(|i| i + 1).collect()
    }

    /// 1-based label at sample `k`.
    pub fn label(&self, k: usize) -> usize {
        self.idx[k] + 1
    }

    pub(crate) fn index(&self, k: usize) -> usize {
        self.idx[k]
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.idx
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn num_modes(&self) -> usize {
        self.modes
    }

    /// Number of label changes between consecutive samples.
    pub fn switches(&self) -> usize {
        self.idx.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Fraction of samples carrying each label.
    pub fn label_frequencies(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.modes];
        for &i in &self.idx {
            counts[i] += 1;
        }
        let n = self.idx.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Relabel: sample with label `i` gets label `perm[i-1]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.modes {
            return Err(Error::dims("permutation length", self.modes, perm.len()));
        }
        let labels: Vec<usize> = self.idx.iter().map(|&i| perm[i]).collect();
        ModeSequence::from_labels(&labels, self.modes)
    }
}

/// Estimated state at every sample (held constant over each sampling interval).
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory(Vec<Vector>);

impl StateTrajectory {
    pub fn new(states: Vec<Vector>) -> Result<Self> {
        let n_x = states.first().map_or(0, |x| x.len());
        if n_x == 0 {
            return Err(Error::invalid("states", "trajectory must be non-empty with n_x >= 1"));
        }
        for (k, x) in states.iter().enumerate() {
            if x.len() != n_x {
                return Err(Error::dims("state width", n_x, x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { index: k });
            }
        }
        Ok(StateTrajectory(states))
    }

    pub(crate) fn from_vec_unchecked(states: Vec<Vector>) -> Self {
        StateTrajectory(states)
    }

    pub fn n_x(&self) -> usize {
        self.0[0].len()
    }

    pub fn into_inner(self) -> Vec<Vector> {
        self.0
    }

    /// All states stacked into one `N·n_x` vector.
    pub fn stacked(&self) -> Vector {
        let n_x = self.n_x();
        Vector::from_iterator(self.0.len() * n_x, self.0.iter().flat_map(|x| x.iter().copied()))
    }

    pub fn from_stacked(z: &Vector, n_x: usize) -> Self {
        let states = z
            .as_slice()
            .chunks(n_x)
            .map(Vector::from_column_slice)
            .collect();
        StateTrajectory(states)
    }
}

impl Deref for StateTrajectory {
    type Target = [Vector];

    fn deref(&self) -> &[Vector] {
        &self.0
    }
}

/// Additive mode loss
/// `L(S) = init(s_0) + Σ_{k≥1} mode(s_k) + Σ_{k≥1} trans(s_k, s_{k-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeLossSpec {
    pub(crate) init_cost: Vec<f64>,
    pub(crate) mode_cost: Vec<f64>,
    /// Entry `(to, from)`, 0-based.
    pub(crate) trans_cost: Matrix,
}

impl ModeLossSpec {
    /// `trans_cost[(j, i)]` is the cost of moving from mode `i+1` to mode `j+1`.
    pub fn new(init_cost: Vec<f64>, mode_cost: Vec<f64>, trans_cost: Matrix) -> Result<Self> {
        let k = init_cost.len();
        if k == 0 {
            return Err(Error::invalid("mode_loss", "needs at least one mode"));
        }
        if mode_cost.len() != k {
            return Err(Error::dims("mode cost length", k, mode_cost.len()));
        }
        if trans_cost.nrows() != k || trans_cost.ncols() != k {
            return Err(Error::dims("transition cost size", k, trans_cost.nrows()));
        }
        let all = init_cost.iter().chain(&mode_cost).chain(trans_cost.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mode_loss", "all costs must be finite"));
        }
        Ok(ModeLossSpec {
            init_cost,
            mode_cost,
            trans_cost,
        })
    }

    pub fn zeros(modes: usize) -> Self {
        ModeLossSpec {
            init_cost: vec![0.0; modes],
            mode_cost: vec![0.0; modes],
            trans_cost: Matrix::zeros(modes, modes),
        }
    }

    pub fn num_modes(&self) -> usize {
        self.init_cost.len()
    }

    pub fn init_cost(&self) -> &[f64] {
        &self.init_cost
    }

    pub fn mode_cost(&self) -> &[f64] {
        &self.mode_cost
    }

    /// Cost of switching from label `from` to label `to` (1-based).
    pub fn transition(&self, to: usize, from: usize) -> f64 {
        self.trans_cost[(to - 1, from - 1)]
    }

    pub fn trans_matrix(&self) -> &Matrix {
        &self.trans_cost
    }

    /// Multiply every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        ModeLossSpec {
            init_cost: self.init_cost.iter().map(|v| v * c).collect(),
            mode_cost: self.mode_cost.iter().map(|v| v * c).collect(),
            trans_cost: &self.trans_cost * c,
        }
    }

    pub fn evaluate(&self, seq: &ModeSequence) -> f64 {
        let s = seq.indices();
        if s.is_empty() {
            return 0.0;
        }
        let mut total = self.init_cost[s[0]];
        for w in s.windows(2) {
            total += self.mode_cost[w[1]] + self.trans_cost[(w[1], w[0])];
        }
        total
    }
}

/// Hyper-parameters of one identification run.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    /// Weight of the state-consistency term.
    pub alpha: f64,
    pub mode_loss: ModeLossSpec,
    /// Stop when successive costs differ by at most this much.
    pub eps: f64,
    pub n_max: usize,
    pub restarts: usize,
    /// Std of the perturbation added to the LTI state seed.
    pub sigma_x: f64,
    pub seed: u64,
    /// Number of modes K of the model.
    pub modes: usize,
    pub n_x: usize,
    /// Alternation rounds of the single-mode initializer.
    pub init_rounds: usize,
}

impl Default for FitConfig {
    /// Two modes, two states, `α = 0.01`, Markov loss with `π = 0.1`,
    /// `τ = 1e-6`, five restarts of at most 1000 iterations.
    fn default() -> Self {
        FitConfig {
            alpha: 0.01,
            mode_loss: crate::dp::markov_mode_loss(2, 0.1, 1e-6, false).expect("valid constants"),
            eps: 1e-10,
            n_max: 1000,
            restarts: 5,
            sigma_x: 0.01,
            seed: 1,
            modes: 2,
            n_x: 2,
            init_rounds: 20,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha", "must be positive and finite"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        if !(self.sigma_x >= 0.0) {
            return Err(Error::invalid("sigma_x", "must be non-negative"));
        }
        if self.modes == 0 || self.n_x == 0 {
            return Err(Error::invalid("orders", "K and n_x must be at least 1"));
        }
        if self.mode_loss.num_modes() != self.modes {
            return Err(Error::dims("mode loss size", self.modes, self.mode_loss.num_modes()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIterations,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIterations => "max-iterations",
        }
    }
}

/// Cost measured after each of the three block updates of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCosts {
    pub after_parameters: f64,
    pub after_modes: f64,
    pub after_states: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: EstimatedModel,
    pub modes: ModeSequence,
    pub states: StateTrajectory,
    /// Total cost after every full iteration.
    pub cost_trace: Vec<f64>,
    pub step_trace: Vec<StepCosts>,
    pub cost: CostBreakdown,
    pub iterations: usize,
    pub termination: Termination,
    /// Iterations in which the mode update raised the total cost.
    pub mode_step_increases: usize,
    /// Best fit rate of the model simulated open loop from `x̂(t_0)` along
    /// the estimated modes; `-inf` if that simulation diverges.
    pub bfr: f64,
    /// Best fit rate of `Ĉ x̂` against the training outputs.
    pub state_bfr: f64,
    pub seed: u64,
}
