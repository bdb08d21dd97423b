#![allow(dead_code)]

use ctlss::model::{EstimatedModel, Matrix, ModeLossSpec, ModeSequence, SampledDataset, Vector};
use ctlss::rng::Rng;
use ctlss::simulator::benchmark_system;

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

pub fn random_vector(rng: &mut Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.normal())
}

pub fn random_model(rng: &mut Rng, k: usize, n_x: usize, n_u: usize, n_y: usize) -> EstimatedModel {
    EstimatedModel::new(
        (0..k).map(|_| random_matrix(rng, n_x, n_x, 1.0)).collect(),
        (0..k).map(|_| random_matrix(rng, n_x, n_u, 1.0)).collect(),
        random_matrix(rng, n_y, n_x, 1.0),
    )
    .unwrap()
}

/// Strictly increasing timestamps with steps drawn from `[0.5 h, 1.5 h]`.
pub fn random_times(rng: &mut Rng, n: usize, h: f64) -> Vec<f64> {
    let mut t = vec![0.0];
    for _ in 1..n {
        let last = *t.last().unwrap();
        t.push(last + h * (0.5 + rng.uniform()));
    }
    t
}

pub fn random_dataset(rng: &mut Rng, n: usize, n_u: usize, n_y: usize, h: f64) -> SampledDataset {
    let t = random_times(rng, n, h);
    let u = (0..n).map(|_| random_vector(rng, n_u, 1.0)).collect();
    let y = (0..n).map(|_| random_vector(rng, n_y, 1.0)).collect();
    SampledDataset::new(t, u, y).unwrap()
}

pub fn random_states(rng: &mut Rng, n: usize, n_x: usize) -> Vec<Vector> {
    (0..n).map(|_| random_vector(rng, n_x, 1.0)).collect()
}

pub fn random_modes(rng: &mut Rng, k: usize, n: usize) -> ModeSequence {
    let labels: Vec<usize> = (0..n).map(|_| 1 + rng.below(k)).collect();
    ModeSequence::from_labels(&labels, k).unwrap()
}

/// Non-negative random initial, per-mode and transition costs.
pub fn random_mode_loss(rng: &mut Rng, k: usize, scale: f64) -> ModeLossSpec {
    ModeLossSpec::new(
        (0..k).map(|_| scale * rng.uniform()).collect(),
        (0..k).map(|_| scale * rng.uniform()).collect(),
        Matrix::from_fn(k, k, |_, _| scale * rng.uniform()),
    )
    .unwrap()
}

pub fn steps(t: &[f64]) -> Vec<f64> {
    t.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Forward-Euler trajectory of `model` along `labels` (1-based).
pub fn euler_states(model: &EstimatedModel, x0: &Vector, u: &[Vector], labels: &[usize], t: &[f64]) -> Vec<Vector> {
    let mut x = vec![x0.clone()];
    for k in 0..t.len() - 1 {
        let i = labels[k];
        let xk = &x[k];
        let next = xk + (model.a(i) * xk + model.b(i) * &u[k]) * (t[k + 1] - t[k]);
        x.push(next);
    }
    x
}

/// Iterative least-squares oracle: conjugate gradient on the normal
/// equations (CGLS), iterated until the gradient stalls.
pub fn cgls(m: &Matrix, b: &Vector) -> Vector {
    let n = m.ncols();
    let mut z = Vector::zeros(n);
    let mut r = b.clone();
    let mut s = m.transpose() * &r;
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    let gamma0 = gamma;
    for _ in 0..50 * n {
        if gamma <= 1e-30 * gamma0.max(1e-300) {
            break;
        }
        let q = m * &p;
        let step = gamma / q.norm_squared();
        z += &p * step;
        r -= &q * step;
        s = m.transpose() * &r;
        let next = s.norm_squared();
        p = &s + &p * (next / gamma);
        gamma = next;
    }
    z
}

/// Matrix and offset of an affine map `f(z) = M z − b`, probed column by
/// column.
pub fn affine_system(dim: usize, f: impl Fn(&Vector) -> Vector) -> (Matrix, Vector) {
    let f0 = f(&Vector::zeros(dim));
    let mut m = Matrix::zeros(f0.len(), dim);
    for j in 0..dim {
        let mut e = Vector::zeros(dim);
        e[j] = 1.0;
        m.set_column(j, &(f(&e) - &f0));
    }
    (m, -f0)
}

/// Sequence cost written straight from its definition, 1-based labels. The
/// per-mode cost is charged from the second sample on.
pub fn naive_cost(
    model: &EstimatedModel,
    x: &[Vector],
    ds: &SampledDataset,
    alpha: f64,
    loss: &ModeLossSpec,
    labels: &[usize],
) -> f64 {
    let n = labels.len();
    let mut g = loss.init_cost()[labels[0] - 1];
    for k in 0..n - 1 {
        let dt = ds.t[k + 1] - ds.t[k];
        let i = labels[k];
        let r = &x[k + 1] - &x[k] - model.a(i) * &x[k] * dt - model.b(i) * &ds.u[k] * dt;
        g += alpha * dt * r.norm_squared();
    }
    for k in 1..n {
        g += loss.mode_cost()[labels[k] - 1] + loss.transition(labels[k], labels[k - 1]);
    }
    g
}

/// Every sequence in lexicographic order; keeps the first strict minimum.
pub fn brute_force(k: usize, n: usize, cost: impl Fn(&[usize]) -> f64) -> (Vec<usize>, f64) {
    let mut labels = vec![1; n];
    let mut best = (labels.clone(), cost(&labels));
    loop {
        let mut pos = n;
        while pos > 0 && labels[pos - 1] == k {
            labels[pos - 1] = 1;
            pos -= 1;
        }
        if pos == 0 {
            return best;
        }
        labels[pos - 1] += 1;
        let c = cost(&labels);
        if c < best.1 {
            best = (labels.clone(), c);
        }
    }
}

/// Largest relative cost gap and number of differing sequences between the
/// segmentation and exhaustive enumeration.
pub fn dp_against_enumeration(k: usize, n: usize, instances: usize, seed: u64) -> (f64, usize) {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..instances {
        let n_x = 1 + rng.below(2);
        let model = random_model(&mut rng, k, n_x, 1, 1);
        let ds = random_dataset(&mut rng, n, 1, 1, 0.1);
        let x = random_states(&mut rng, n, n_x);
        let alpha = 0.1 + rng.uniform();
        let loss = random_mode_loss(&mut rng, k, 0.05);
        let est = ctlss::dp::estimate_modes(&model, &x, &ds, alpha, &loss).unwrap();
        let g_dp = naive_cost(&model, &x, &ds, alpha, &loss, &est.labels());
        let (labels, g_bf) = brute_force(k, n, |s| naive_cost(&model, &x, &ds, alpha, &loss, s));
        worst = worst.max((g_dp - g_bf).abs() / (1.0 + g_bf.abs()));
        if est.labels() != labels {
            mismatches += 1;
        }
    }
    (worst, mismatches)
}

/// `x_I(t_k) − x(t_k)` for `k ≥ 1`, accumulated directly from the Riemann sum.
pub fn integral_gaps(a: &[Matrix], b: &[Matrix], x: &[Vector], u: &[Vector], labels: &[usize], t: &[f64]) -> Vec<Vector> {
    let mut xi = x[0].clone();
    let mut gaps = Vec::new();
    for k in 1..x.len() {
        let i = labels[k - 1] - 1;
        xi = &xi + (&a[i] * &x[k - 1] + &b[i] * &u[k - 1]) * (t[k] - t[k - 1]);
        gaps.push(&xi - &x[k]);
    }
    gaps
}

pub fn stack(v: &[Vector]) -> Vector {
    Vector::from_iterator(v.iter().map(Vector::len).sum(), v.iter().flat_map(|x| x.iter().copied()))
}

fn unpack_thetas(z: &Vector, k: usize, n_x: usize, n_u: usize) -> (Vec<Matrix>, Vec<Matrix>) {
    let n_theta = n_x * (n_x + n_u);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..k {
        let th = z.rows(i * n_theta, n_theta);
        a.push(Matrix::from_column_slice(n_x, n_x, th.rows(0, n_x * n_x).as_slice()));
        b.push(Matrix::from_column_slice(n_x, n_u, th.rows(n_x * n_x, n_x * n_u).as_slice()));
    }
    (a, b)
}

/// `‖Mᵀ(Mz − b)‖` over its allowance `1e-8 (‖M‖‖r‖ + 1)`; at most 1 passes.
fn certificate_ratio(m: &Matrix, b: &Vector, z: &Vector) -> f64 {
    let r = m * z - b;
    (m.transpose() * &r).norm() / (1e-8 * (m.norm() * r.norm() + 1.0))
}

/// Worst normal-equation certificate ratio and largest entry gap to the
/// iterative oracle over a batch of least-squares solves.
#[derive(Clone, Copy, Debug, Default)]
pub struct LsCheck {
    pub certificate: f64,
    pub deviation: f64,
}

impl LsCheck {
    fn record(&mut self, m: &Matrix, b: &Vector, z: &Vector) {
        let oracle = cgls(m, b);
        self.certificate = self.certificate.max(certificate_ratio(m, b, z));
        self.deviation = self.deviation.max((z - oracle).amax());
    }

    pub fn passes(&self) -> bool {
        self.certificate <= 1.0 && self.deviation <= 1e-6
    }
}

struct LsInstance {
    ds: SampledDataset,
    x: Vec<Vector>,
    modes: ModeSequence,
}

fn ls_instance(seed: u64) -> LsInstance {
    let mut rng = Rng::new(seed);
    let ds = random_dataset(&mut rng, 20, 1, 1, 0.1);
    let x = random_states(&mut rng, 20, 2);
    let modes = random_modes(&mut rng, 2, 20);
    LsInstance { ds, x, modes }
}

/// Parameter block (K = 2, n_x = 2, 12 dynamics unknowns, 2 output unknowns)
/// against the oracle.
pub fn check_parameter_block(seed: u64) -> LsCheck {
    let inst = ls_instance(seed);
    let (k, n_x, n_u) = (2, 2, 1);
    let labels = inst.modes.labels();
    let fit = ctlss::estimation::fit_parameters(&inst.x, &inst.modes, &inst.ds).unwrap();
    let mut check = LsCheck::default();

    // dynamics: residual √Δt_k (x_I − x)
    let dim = k * n_x * (n_x + n_u);
    let (m, b) = affine_system(dim, |z| {
        let (a, bm) = unpack_thetas(z, k, n_x, n_u);
        let gaps = integral_gaps(&a, &bm, &inst.x, &inst.ds.u, &labels, &inst.ds.t);
        let w: Vec<Vector> = gaps
            .iter()
            .enumerate()
            .map(|(j, g)| g * (inst.ds.t[j + 1] - inst.ds.t[j]).sqrt())
            .collect();
        stack(&w)
    });
    let z = Vector::from_iterator(dim, (1..=k).flat_map(|i| fit.model.theta(i).iter().copied().collect::<Vec<_>>()));
    check.record(&m, &b, &z);

    // output map: residual Ĉ x_k − y_k
    let (m, b) = affine_system(n_x, |c| {
        let c = Matrix::from_row_slice(1, n_x, c.as_slice());
        stack(&inst.x.iter().zip(&inst.ds.y).map(|(x, y)| &c * x - y).collect::<Vec<_>>())
    });
    check.record(&m, &b, &Vector::from_row_slice(fit.model.c().as_slice()));
    check
}

/// State block (N = 20, n_x = 2, 40 unknowns) against the oracle, for the
/// Riccati and the dense solver.
pub fn check_state_block(seed: u64) -> LsCheck {
    let inst = ls_instance(seed);
    let mut rng = Rng::new(seed + 100);
    let model = random_model(&mut rng, 2, 2, 1, 1);
    let alpha = 0.5 + rng.uniform();
    let labels = inst.modes.labels();
    let a: Vec<Matrix> = (1..=2).map(|i| model.a(i).clone()).collect();
    let bm: Vec<Matrix> = (1..=2).map(|i| model.b(i).clone()).collect();
    let n = inst.ds.len();
    let (m, b) = affine_system(n * 2, |z| {
        let x: Vec<Vector> = (0..n).map(|k| z.rows(k * 2, 2).into_owned()).collect();
        let mut r: Vec<Vector> = x.iter().zip(&inst.ds.y).map(|(xk, yk)| model.c() * xk - yk).collect();
        for (j, g) in integral_gaps(&a, &bm, &x, &inst.ds.u, &labels, &inst.ds.t).iter().enumerate() {
            r.push(g * (alpha * (inst.ds.t[j + 1] - inst.ds.t[j])).sqrt());
        }
        stack(&r)
    });
    let mut check = LsCheck::default();
    let riccati = ctlss::estimation::fit_states(&model, &inst.modes, &inst.ds, alpha).unwrap();
    let dense = ctlss::estimation::fit_states_dense(&model, &inst.modes, &inst.ds, alpha).unwrap().0;
    check.record(&m, &b, &riccati.stacked());
    check.record(&m, &b, &dense.stacked());
    check
}

/// Augmented generator of `[x; sin ωt; cos ωt]` for benchmark mode 1 driven
/// by `u = sin ωt`.
fn forced_mode_one(omega: f64) -> (Matrix, Matrix, Matrix, Matrix) {
    let sys = benchmark_system();
    let m = &sys.modes()[0];
    let mut aug = Matrix::zeros(4, 4);
    aug.view_mut((0, 0), (2, 2)).copy_from(&m.a);
    aug.view_mut((0, 2), (2, 1)).copy_from(&m.b);
    aug[(2, 3)] = omega;
    aug[(3, 2)] = -omega;
    (aug, m.a.clone(), m.b.clone(), m.c.clone())
}

/// `max_k ‖x_I(t_k) − x(t_k)‖_∞` on `[0, 2]` for benchmark mode 1 driven by
/// `u = sin 3t`, with exact states fed to the integral block.
pub fn rectangular_rule_error(h: f64) -> f64 {
    let (aug, a, b, c) = forced_mode_one(3.0);
    let z0 = Vector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]);
    let n = (2.0 / h).round() as usize + 1;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let z: Vec<Vector> = t.iter().map(|&tk| (&aug * tk).exp() * &z0).collect();
    let x: Vec<Vector> = z.iter().map(|v| v.rows(0, 2).into_owned()).collect();
    let u: Vec<Vector> = z.iter().map(|v| v.rows(2, 1).into_owned()).collect();
    let model = EstimatedModel::new(vec![a], vec![b], c).unwrap();
    let modes = ModeSequence::constant(1, n, 1).unwrap();
    let xi = ctlss::integral::propagate_integral_states(&model, &x, &u, &modes, &vec![h; n - 1]).unwrap();
    x.iter().zip(&xi).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
}

/// Max-norm error of RK4 with one substep against `e^{A t} x0`, mode 1 of
/// the benchmark, unforced.
pub fn rk4_error(h: f64) -> f64 {
    let sys = benchmark_system();
    let a = &sys.modes()[0].a;
    let n = (1.0 / h).round() as usize + 1;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let x0 = Vector::from_row_slice(&[1.0, -0.5]);
    let modes = ModeSequence::constant(1, n, 2).unwrap();
    let sim = ctlss::simulator::simulate(&sys, &vec![Vector::zeros(1); n], &modes, &t, &x0, 1).unwrap();
    sim.states
        .iter()
        .zip(&t)
        .map(|(x, &tk)| (x - (a * tk).exp() * &x0).amax())
        .fold(0.0, f64::max)
}

/// Error ratios of successive halvings.
pub fn halving_ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}
