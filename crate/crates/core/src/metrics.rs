//! Evaluation: best fit rate, mode fit up to relabeling, transfer functions
//! and frequency responses.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{EstimatedModel, Matrix, ModeSequence, SampledDataset, SwitchedSystem, Vector};

/// Largest mode count for which label matching enumerates permutations.
pub const MAX_MATCHED_MODES: usize = 8;

/// `100 (1 − ‖ŷ − y‖ / ‖y − ȳ‖)` per output channel, averaged over channels.
pub fn bfr(y_hat: &[Vector], y: &[Vector]) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::dims("predicted outputs", y.len(), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(Error::TooFewSamples { min: 2, found: y.len() });
    }
    let n_y = y[0].len();
    let n = y.len() as f64;
    let mut total = 0.0;
    for c in 0..n_y {
        let mean = y.iter().map(|v| v[c]).sum::<f64>() / n;
        let den: f64 = y.iter().map(|v| (v[c] - mean).powi(2)).sum();
        if den == 0.0 {
            return Err(Error::ConstantSignal { channel: c });
        }
        let num: f64 = y_hat.iter().zip(y).map(|(a, b)| (a[c] - b[c]).powi(2)).sum();
        total += 100.0 * (1.0 - (num / den).sqrt());
    }
    Ok(total / n_y as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeFit {
    pub percent: f64,
    /// Estimated label `i` corresponds to true label `permutation[i-1]`.
    pub permutation: Vec<usize>,
}

/// Percentage of samples whose label agrees with the truth. With
/// `match_labels` the estimate is first relabeled by the permutation that
/// maximizes the agreement (ties keep the lexicographically first one).
pub fn mode_fit(estimated: &ModeSequence, truth: &ModeSequence, match_labels: bool) -> Result<ModeFit> {
    if estimated.len() != truth.len() {
        return Err(Error::dims("mode sequence", truth.len(), estimated.len()));
    }
    if estimated.is_empty() {
        return Err(Error::TooFewSamples { min: 1, found: 0 });
    }
    let k = estimated.num_modes().max(truth.num_modes());
    // confusion[i][j]: samples with estimated index i and true index j
    let mut confusion = vec![vec![0usize; k]; k];
    for (&e, &t) in estimated.indices().iter().zip(truth.indices()) {
        confusion[e][t] += 1;
    }
    let score = |perm: &[usize]| (0..k).map(|i| confusion[i][perm[i]]).sum::<usize>();
    let identity: Vec<usize> = (0..k).collect();
    let best = if match_labels {
        if k > MAX_MATCHED_MODES {
            return Err(Error::invalid(
                "K",
                format!("label matching supports at most {MAX_MATCHED_MODES} modes"),
            ));
        }
        let mut best = identity.clone();
        let mut best_score = score(&best);
        let mut perm = identity;
        while next_permutation(&mut perm) {
            let s = score(&perm);
            if s > best_score {
                best_score = s;
                best = perm.clone();
            }
        }
        best
    } else {
        identity
    };
    let hits = score(&best);
    Ok(ModeFit {
        percent: 100.0 * hits as f64 / estimated.len() as f64,
        permutation: best.iter().map(|j| j + 1).collect(),
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Strictly proper SISO transfer function
/// `(b_{n-1} s^{n-1} + … + b_0) / (s^n + a_{n-1} s^{n-1} + … + a_0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    /// `b_{n-1}, …, b_0`.
    pub num: Vec<f64>,
    /// `1, a_{n-1}, …, a_0`.
    pub den: Vec<f64>,
}

impl TransferFunction {
    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// All coefficients except the leading 1 of the denominator.
    pub fn coefficients(&self) -> Vec<f64> {
        self.num.iter().chain(&self.den[1..]).copied().collect()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        horner(&self.num, s) / horner(&self.den, s)
    }
}

impl std::fmt::Display for TransferFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}) / ({})", poly_string(&self.num), poly_string(&self.den))
    }
}

fn poly_string(c: &[f64]) -> String {
    let n = c.len();
    let terms: Vec<String> = c
        .iter()
        .enumerate()
        .map(|(i, v)| match n - 1 - i {
            0 => format!("{v:.4}"),
            1 => format!("{v:.4} s"),
            p => format!("{v:.4} s^{p}"),
        })
        .collect();
    terms.join(" + ")
}

fn horner(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * s + v)
}

/// Transfer function `C (sI − A)⁻¹ B` by the Faddeev–LeVerrier recursion:
/// `M_1 = I`, `a_{n-1} = −tr A`, `M_k = A M_{k-1} + a_{n-k+1} I`,
/// `a_{n-k} = −tr(A M_k) / k`, and `adj(sI − A) = Σ_k M_k s^{n-k}`.
pub fn ss_to_tf(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<TransferFunction> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::dims("A columns", n, a.ncols()));
    }
    if n > 6 {
        return Err(Error::invalid("n_x", "transfer function extraction supports n_x <= 6"));
    }
    if b.nrows() != n || b.ncols() != 1 {
        return Err(Error::dims("B (n_x × 1)", n, b.nrows() * b.ncols()));
    }
    if c.ncols() != n || c.nrows() != 1 {
        return Err(Error::dims("C (1 × n_x)", n, c.nrows() * c.ncols()));
    }
    let eye = Matrix::identity(n, n);
    let mut den = vec![1.0];
    let mut num = Vec::with_capacity(n);
    let mut m = eye.clone();
    for k in 1..=n {
        if k > 1 {
            m = a * &m + &eye * den[k - 1];
        }
        num.push((c * &m * b)[(0, 0)]);
        den.push(-(a * &m).trace() / k as f64);
    }
    Ok(TransferFunction { num, den })
}

/// Transfer functions of every mode of a SISO switched system.
pub fn system_tfs(sys: &SwitchedSystem) -> Result<Vec<TransferFunction>> {
    sys.modes().iter().map(|m| ss_to_tf(&m.a, &m.b, &m.c)).collect()
}

pub fn model_tfs(model: &EstimatedModel) -> Result<Vec<TransferFunction>> {
    (1..=model.num_modes())
        .map(|l| ss_to_tf(model.a(l), model.b(l), model.c()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// `n` logarithmically spaced frequencies from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Default Bode grid: 200 points from 0.1 to 1000 rad/s.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-1, 1e3, 200)
}

/// Magnitude (dB) and phase (degrees) of `G(jω)` on an ascending grid.
/// Phase is unwrapped by continuing each point to the multiple of 360°
/// nearest the previous one.
pub fn frequency_response(tf: &TransferFunction, omegas: &[f64]) -> Result<Vec<BodePoint>> {
    if let Some(w) = omegas.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::invalid("omega", format!("{w} is not positive")));
    }
    let mut out: Vec<BodePoint> = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let g = tf.eval(Complex64::new(0.0, w));
        let raw = g.arg().to_degrees();
        let phase = match out.last() {
            Some(prev) => raw + 360.0 * ((prev.phase_deg - raw) / 360.0).round(),
            None => raw,
        };
        out.push(BodePoint {
            omega: w,
            mag_db: 20.0 * g.norm().log10(),
            phase_deg: phase,
        });
    }
    Ok(out)
}

/// `C (jωI − A)⁻¹ B` evaluated directly from the state-space matrices.
pub fn resolvent_response(a: &Matrix, b: &Matrix, c: &Matrix, omega: f64) -> Result<Complex64> {
    let n = a.nrows();
    let lhs = nalgebra::DMatrix::<Complex64>::from_fn(n, n, |r, k| {
        let diag = if r == k { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
        diag - a[(r, k)]
    });
    let rhs = nalgebra::DMatrix::<Complex64>::from_fn(n, 1, |r, _| Complex64::new(b[(r, 0)], 0.0));
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("omega", format!("jω = j{omega} is an eigenvalue of A")))?;
    Ok((0..n).map(|k| x[(k, 0)] * c[(0, k)]).sum())
}

/// Relative error of each coefficient (absolute when the true coefficient
/// is zero), in the order of [`TransferFunction::coefficients`].
pub fn coefficient_errors(estimated: &TransferFunction, truth: &TransferFunction) -> Result<Vec<f64>> {
    if estimated.order() != truth.order() {
        return Err(Error::dims("transfer function order", truth.order(), estimated.order()));
    }
    Ok(estimated
        .coefficients()
        .iter()
        .zip(truth.coefficients())
        .map(|(e, t)| if t != 0.0 { ((e - t) / t).abs() } else { (e - t).abs() })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeComparison {
    pub true_label: usize,
    pub estimated_label: usize,
    pub truth: TransferFunction,
    pub estimate: TransferFunction,
    /// Per-coefficient relative errors, numerator first.
    pub errors: Vec<f64>,
}

impl ModeComparison {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare each true mode with the estimated mode mapped onto it by
/// `permutation` (as returned by [`mode_fit`]).
pub fn compare_models(
    estimated: &EstimatedModel,
    truth: &SwitchedSystem,
    permutation: &[usize],
) -> Result<Vec<ModeComparison>> {
    let k = truth.num_modes();
    if estimated.num_modes() != k {
        return Err(Error::dims("mode count", k, estimated.num_modes()));
    }
    if permutation.len() != k {
        return Err(Error::dims("permutation length", k, permutation.len()));
    }
    let est_tfs = model_tfs(estimated)?;
    let true_tfs = system_tfs(truth)?;
    (1..=k)
        .map(|true_label| {
            let estimated_label = permutation
                .iter()
                .position(|&p| p == true_label)
                .map(|i| i + 1)
                .ok_or_else(|| Error::invalid("permutation", "not a permutation of 1..=K"))?;
            let estimate = est_tfs[estimated_label - 1].clone();
            let truth_tf = true_tfs[true_label - 1].clone();
            Ok(ModeComparison {
                true_label,
                estimated_label,
                errors: coefficient_errors(&estimate, &truth_tf)?,
                truth: truth_tf,
                estimate,
            })
        })
        .collect()
}

/// Outputs of the estimated model re-simulated open loop from `x0` along
/// the given mode sequence (fourth-order Runge–Kutta, zero-order hold).
pub fn open_loop_output(
    model: &EstimatedModel,
    modes: &ModeSequence,
    dataset: &SampledDataset,
    x0: &Vector,
) -> Result<Vec<Vector>> {
    let sim = crate::simulator::simulate(&model.to_switched_system(), &dataset.u, modes, &dataset.t, x0, 10)?;
    Ok(sim.outputs)
}
