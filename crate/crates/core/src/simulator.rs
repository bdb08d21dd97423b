//! Ground-truth data generation for continuous-time switched systems.
//!
//! Trajectories are integrated with classical fourth-order Runge–Kutta.
//! Within each sampling interval `[t_k, t_{k+1})` the active mode is held at
//! `s(t_k)` and the input at `u(t_k)` (zero-order hold).

use crate::error::{Error, Result};
use crate::model::{
    Matrix, ModeSequence, SampledDataset, Subsystem, SwitchedSystem, Vector,
};
use crate::rng::{mix_seed, Rng};

/// How the mode signal of a simulation is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum SwitchingSpec {
    /// At each step the mode changes with probability `pi`, to one of the
    /// other modes drawn uniformly.
    Markov { pi: f64, initial: usize, seed: u64 },
    Fixed(ModeSequence),
}

impl SwitchingSpec {
    pub fn realize(&self, modes: usize, len: usize) -> Result<ModeSequence> {
        match self {
            SwitchingSpec::Markov { pi, initial, seed } => {
                sample_markov_switching(modes, *pi, *initial, len, *seed)
            }
            SwitchingSpec::Fixed(s) => {
                if s.len() != len {
                    return Err(Error::dims("fixed mode sequence", len, s.len()));
                }
                if s.num_modes() != modes {
                    return Err(Error::dims("fixed mode sequence K", modes, s.num_modes()));
                }
                Ok(s.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseLevel {
    StdDev(f64),
    /// Per-channel std chosen so that `10 log10(var(y°) / σ²)` hits this value.
    TargetSnrDb(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub level: NoiseLevel,
    pub seed: u64,
}

pub fn sample_markov_switching(
    modes: usize,
    pi: f64,
    initial: usize,
    len: usize,
    seed: u64,
) -> Result<ModeSequence> {
    if modes == 0 {
        return Err(Error::invalid("K", "mode count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid("pi", format!("switch probability {pi} not in [0, 1]")));
    }
    if !(1..=modes).contains(&initial) {
        return Err(Error::ModeOutOfRange {
            label: initial,
            index: 0,
            modes,
        });
    }
    let mut rng = Rng::new(seed);
    let mut idx = Vec::with_capacity(len);
    let mut cur = initial - 1;
    for k in 0..len {
        if k > 0 && modes > 1 && rng.bernoulli(pi) {
            let other = rng.below(modes - 1);
            cur = if other >= cur { other + 1 } else { other };
        }
        idx.push(cur);
    }
    Ok(ModeSequence::from_indices(idx, modes))
}

/// States and noise-free outputs at the sampling instants.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

pub fn simulate(
    system: &SwitchedSystem,
    u: &[Vector],
    modes: &ModeSequence,
    t: &[f64],
    x0: &Vector,
    substeps: usize,
) -> Result<Simulation> {
    let n = t.len();
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    if u.len() != n {
        return Err(Error::dims("input samples", n, u.len()));
    }
    if modes.len() != n {
        return Err(Error::dims("mode sequence", n, modes.len()));
    }
    if modes.num_modes() > system.num_modes() {
        return Err(Error::dims("mode count", system.num_modes(), modes.num_modes()));
    }
    if x0.len() != system.n_x() {
        return Err(Error::dims("initial state", system.n_x(), x0.len()));
    }
    if let Some(bad) = u.iter().find(|v| v.len() != system.n_u()) {
        return Err(Error::dims("input width", system.n_u(), bad.len()));
    }

    let mut states = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    let mut x = x0.clone();
    for k in 0..n {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { index: k });
        }
        let sys = &system.modes()[modes.index(k)];
        outputs.push(&sys.c * &x + &sys.d * &u[k]);
        states.push(x.clone());
        if k + 1 < n {
            let dt = t[k + 1] - t[k];
            x = rk4_interval(sys, &x, &u[k], dt, substeps);
        }
    }
    Ok(Simulation { states, outputs })
}

fn rk4_interval(sys: &Subsystem, x: &Vector, u: &Vector, dt: f64, substeps: usize) -> Vector {
    let h = dt / substeps as f64;
    let bu = &sys.b * u;
    let f = |x: &Vector| &sys.a * x + &bu;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Unbiased sample variance of each output channel.
pub fn channel_variances(y: &[Vector]) -> Vec<f64> {
    let n_y = y.first().map_or(0, |v| v.len());
    let n = y.len() as f64;
    (0..n_y)
        .map(|c| {
            let mean = y.iter().map(|v| v[c]).sum::<f64>() / n;
            y.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect()
}

/// Noise std per channel that realizes a target SNR on `y0`.
pub fn noise_std_for_snr(y0: &[Vector], snr_db: f64) -> Vec<f64> {
    channel_variances(y0)
        .into_iter()
        .map(|v| (v / 10f64.powf(snr_db / 10.0)).sqrt())
        .collect()
}

/// `10 log10(var(y°) / var(y - y°))` per channel.
pub fn measured_snr_db(y0: &[Vector], y: &[Vector]) -> Vec<f64> {
    let noise: Vec<Vector> = y.iter().zip(y0).map(|(a, b)| a - b).collect();
    channel_variances(y0)
        .into_iter()
        .zip(channel_variances(&noise))
        .map(|(s, e)| 10.0 * (s / e).log10())
        .collect()
}

pub fn add_output_noise(y0: &[Vector], noise: &NoiseSpec) -> Result<Vec<Vector>> {
    if y0.is_empty() {
        return Err(Error::TooFewSamples { min: 1, found: 0 });
    }
    let n_y = y0[0].len();
    let sigma = match noise.level {
        NoiseLevel::StdDev(s) => {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::invalid("sigma_eta", "must be finite and non-negative"));
            }
            vec![s; n_y]
        }
        NoiseLevel::TargetSnrDb(db) => {
            if !db.is_finite() {
                return Err(Error::invalid("snr_db", "must be finite"));
            }
            noise_std_for_snr(y0, db)
        }
    };
    let mut rng = Rng::new(noise.seed);
    Ok(y0
        .iter()
        .map(|v| Vector::from_iterator(n_y, v.iter().zip(&sigma).map(|(x, s)| x + s * rng.normal())))
        .collect())
}

/// Two-mode second-order benchmark system.
pub fn benchmark_system() -> SwitchedSystem {
    let mode = |a: [f64; 4], b: [f64; 2]| Subsystem {
        a: Matrix::from_row_slice(2, 2, &a),
        b: Matrix::from_row_slice(2, 1, &b),
        c: Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
        d: Matrix::zeros(1, 1),
    };
    SwitchedSystem::new(vec![
        mode([0.0, -120.0, 1.0, -4.0], [120.0, -12.0]),
        mode([0.0, -50.0, 1.0, -1.8], [53.0, 25.0]),
    ])
    .expect("benchmark matrices are consistent")
}

/// Parameters of a benchmark data set.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub dt: f64,
    pub pi: f64,
    pub noise: NoiseLevel,
    /// Master seed; input, switching and noise streams are derived from it.
    pub seed: u64,
    pub substeps: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            n: 400,
            dt: 0.01,
            pi: 0.1,
            noise: NoiseLevel::StdDev(0.025),
            seed: 1,
            substeps: 10,
        }
    }
}

impl BenchmarkSpec {
    pub fn input_seed(&self) -> u64 {
        mix_seed(self.seed, 1)
    }

    pub fn switching_seed(&self) -> u64 {
        mix_seed(self.seed, 2)
    }

    pub fn noise_seed(&self) -> u64 {
        mix_seed(self.seed, 3)
    }
}

/// Simulate the benchmark system under Gaussian white input and Markov
/// switching starting in mode 1, then add output noise. Ground truth is
/// attached to the returned dataset.
pub fn generate_benchmark_dataset(spec: &BenchmarkSpec) -> Result<SampledDataset> {
    generate_dataset(&benchmark_system(), spec)
}

/// Same as [`generate_benchmark_dataset`] for an arbitrary system.
pub fn generate_dataset(system: &SwitchedSystem, spec: &BenchmarkSpec) -> Result<SampledDataset> {
    if spec.n < 2 {
        return Err(Error::TooFewSamples { min: 2, found: spec.n });
    }
    if !(spec.dt > 0.0) || !spec.dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    let t: Vec<f64> = (0..spec.n).map(|k| k as f64 * spec.dt).collect();
    let mut rng = Rng::new(spec.input_seed());
    let u: Vec<Vector> = (0..spec.n)
        .map(|_| Vector::from_fn(system.n_u(), |_, _| rng.normal()))
        .collect();
    let modes =
        sample_markov_switching(system.num_modes(), spec.pi, 1, spec.n, spec.switching_seed())?;
    let x0 = Vector::zeros(system.n_x());
    let sim = simulate(system, &u, &modes, &t, &x0, spec.substeps)?;
    let y = add_output_noise(
        &sim.outputs,
        &NoiseSpec {
            level: spec.noise,
            seed: spec.noise_seed(),
        },
    )?;
    let ds = SampledDataset {
        t,
        u,
        y,
        true_modes: Some(modes),
        true_states: Some(sim.states),
        noise_free: Some(sim.outputs),
    };
    ds.validate()?;
    Ok(ds)
}
