//! Persistence: datasets as CSV, settings as TOML, fit results as JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dp::markov_mode_loss;
use crate::error::{Error, Result};
use crate::integral::CostBreakdown;
use crate::metrics::BodePoint;
use crate::model::{
    EstimatedModel, FitConfig, FitResult, Matrix, ModeLossSpec, ModeSequence, SampledDataset, StateTrajectory,
    StepCosts, Termination, Vector,
};
use crate::simulator::{BenchmarkSpec, NoiseLevel};

/// Render a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Column {
    Time,
    Input(usize),
    Output(usize),
    Mode,
    State(usize),
    NoiseFree(usize),
}

fn parse_column(name: &str) -> Option<Column> {
    let index = |rest: &str| rest.parse::<usize>().ok().filter(|&i| i >= 1).map(|i| i - 1);
    match name {
        "t" => Some(Column::Time),
        "s" => Some(Column::Mode),
        _ => {
            if let Some(rest) = name.strip_prefix("y0_") {
                index(rest).map(Column::NoiseFree)
            } else if let Some(rest) = name.strip_prefix('u') {
                index(rest).map(Column::Input)
            } else if let Some(rest) = name.strip_prefix('y') {
                index(rest).map(Column::Output)
            } else if let Some(rest) = name.strip_prefix('x') {
                index(rest).map(Column::State)
            } else {
                None
            }
        }
    }
}

/// Column counts of a group named `prefix1..prefixN`; indices must be
/// exactly `1..=N`.
fn group_width(columns: &[Column], pick: impl Fn(&Column) -> Option<usize>) -> Option<usize> {
    let mut idx: Vec<usize> = columns.iter().filter_map(pick).collect();
    if idx.is_empty() {
        return Some(0);
    }
    idx.sort_unstable();
    idx.iter().enumerate().all(|(i, &v)| i == v).then_some(idx.len())
}

/// Write a dataset as CSV: `t, u1.., y1.., [s], [x1..], [y0_1..]`.
pub fn write_dataset(dataset: &SampledDataset, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_dataset_to(dataset, file)
}

pub fn write_dataset_to<W: Write>(dataset: &SampledDataset, writer: W) -> Result<()> {
    dataset.validate()?;
    let n_u = dataset.n_u();
    let n_y = dataset.n_y();
    let n_x = dataset.true_states.as_ref().map_or(0, |x| x[0].len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_u).map(|i| format!("u{i}")));
    header.extend((1..=n_y).map(|i| format!("y{i}")));
    if dataset.true_modes.is_some() {
        header.push("s".into());
    }
    header.extend((1..=n_x).map(|i| format!("x{i}")));
    if dataset.noise_free.is_some() {
        header.extend((1..=n_y).map(|i| format!("y0_{i}")));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header).map_err(csv_io)?;
    for k in 0..dataset.len() {
        let mut row = vec![format_float(dataset.t[k])];
        row.extend(dataset.u[k].iter().map(|&v| format_float(v)));
        row.extend(dataset.y[k].iter().map(|&v| format_float(v)));
        if let Some(s) = &dataset.true_modes {
            row.push(s.label(k).to_string());
        }
        if let Some(x) = &dataset.true_states {
            row.extend(x[k].iter().map(|&v| format_float(v)));
        }
        if let Some(y0) = &dataset.noise_free {
            row.extend(y0[k].iter().map(|&v| format_float(v)));
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Read a dataset written by [`write_dataset`] (columns may come in any
/// order). The mode count of the optional `s` column is its largest label.
pub fn read_dataset(path: &Path) -> Result<SampledDataset> {
    read_dataset_from(File::open(path)?, path)
}

pub fn read_dataset_from<R: Read>(reader: R, path: &Path) -> Result<SampledDataset> {
    let header_err = |message: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| header_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = Vec::with_capacity(names.len());
    for name in &names {
        let col = parse_column(name).ok_or_else(|| header_err(format!("unknown column `{name}`")))?;
        if columns.contains(&col) {
            return Err(header_err(format!("duplicate column `{name}`")));
        }
        columns.push(col);
    }
    if !columns.contains(&Column::Time) {
        return Err(header_err("missing `t` column".into()));
    }
    let width = |pick: fn(&Column) -> Option<usize>, what: &str| {
        group_width(&columns, pick).ok_or_else(|| header_err(format!("{what} columns must be numbered 1..n")))
    };
    let n_u = width(|c| if let Column::Input(i) = c { Some(*i) } else { None }, "input")?;
    let n_y = width(|c| if let Column::Output(i) = c { Some(*i) } else { None }, "output")?;
    let n_x = width(|c| if let Column::State(i) = c { Some(*i) } else { None }, "state")?;
    let n_y0 = width(|c| if let Column::NoiseFree(i) = c { Some(*i) } else { None }, "noise-free output")?;
    if n_u == 0 || n_y == 0 {
        return Err(header_err("need at least one `u` and one `y` column".into()));
    }
    if n_y0 != 0 && n_y0 != n_y {
        return Err(header_err(format!("{n_y0} noise-free columns for {n_y} outputs")));
    }
    let has_modes = columns.contains(&Column::Mode);

    let mut t = Vec::new();
    let mut u = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    let mut x = Vec::new();
    let mut y0 = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let cell_err = |column: usize, message: String| Error::Csv {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        let record = record.map_err(|e| cell_err(0, e.to_string()))?;
        if record.len() != columns.len() {
            return Err(cell_err(
                record.len().min(columns.len()) + 1,
                format!("expected {} fields, found {}", columns.len(), record.len()),
            ));
        }
        let mut tk = 0.0;
        let mut uk = Vector::zeros(n_u);
        let mut yk = Vector::zeros(n_y);
        let mut xk = Vector::zeros(n_x);
        let mut y0k = Vector::zeros(n_y0);
        for (c, (col, cell)) in columns.iter().zip(record.iter()).enumerate() {
            let cell = cell.trim();
            if *col == Column::Mode {
                let label = cell
                    .parse::<usize>()
                    .ok()
                    .filter(|&l| l >= 1)
                    .ok_or_else(|| cell_err(c + 1, format!("`{cell}` is not a mode label")))?;
                labels.push(label);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| cell_err(c + 1, format!("`{cell}` is not a number")))?;
            match *col {
                Column::Time => tk = v,
                Column::Input(i) => uk[i] = v,
                Column::Output(i) => yk[i] = v,
                Column::State(i) => xk[i] = v,
                Column::NoiseFree(i) => y0k[i] = v,
                Column::Mode => unreachable!(),
            }
        }
        t.push(tk);
        u.push(uk);
        y.push(yk);
        if n_x > 0 {
            x.push(xk);
        }
        if n_y0 > 0 {
            y0.push(y0k);
        }
    }
    let mut ds = SampledDataset::new(t, u, y)?;
    if has_modes {
        let k = labels.iter().copied().max().unwrap_or(1);
        ds.true_modes = Some(ModeSequence::from_labels(&labels, k)?);
    }
    if n_x > 0 {
        ds.true_states = Some(x);
    }
    if n_y0 > 0 {
        ds.noise_free = Some(y0);
    }
    Ok(ds)
}

/// Values read from a settings file. Every field has a documented default;
/// explicit command-line flags take precedence over the file.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub alpha: f64,
    pub tau: f64,
    /// Markov switch probability, used both by the data generator and by
    /// the transition loss.
    pub pi: f64,
    pub literal_sign: bool,
    pub eps: f64,
    pub n_max: usize,
    pub restarts: usize,
    pub sigma_x: f64,
    pub seed: u64,
    pub k: usize,
    pub nx: usize,
    pub init_rounds: usize,
    pub n: usize,
    pub dt: f64,
    pub sigma_eta: f64,
    /// When set, overrides `sigma_eta` with a target signal-to-noise ratio.
    pub snr_db: Option<f64>,
    pub substeps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let fit = FitConfig::default();
        let bench = BenchmarkSpec::default();
        Settings {
            alpha: fit.alpha,
            tau: 1e-6,
            pi: 0.1,
            literal_sign: false,
            eps: fit.eps,
            n_max: fit.n_max,
            restarts: fit.restarts,
            sigma_x: fit.sigma_x,
            seed: fit.seed,
            k: fit.modes,
            nx: fit.n_x,
            init_rounds: fit.init_rounds,
            n: bench.n,
            dt: bench.dt,
            sigma_eta: 0.025,
            snr_db: None,
            substeps: bench.substeps,
        }
    }
}

/// Keys accepted in a settings file.
pub const SETTINGS_KEYS: &[&str] = &[
    "alpha",
    "tau",
    "pi",
    "literal_sign",
    "eps",
    "n_max",
    "restarts",
    "sigma_x",
    "seed",
    "k",
    "nx",
    "init_rounds",
    "n",
    "dt",
    "sigma_eta",
    "snr_db",
    "substeps",
];

impl Settings {
    pub fn fit_config(&self) -> Result<FitConfig> {
        let config = FitConfig {
            alpha: self.alpha,
            mode_loss: markov_mode_loss(self.k, self.pi, self.tau, self.literal_sign)?,
            eps: self.eps,
            n_max: self.n_max,
            restarts: self.restarts,
            sigma_x: self.sigma_x,
            seed: self.seed,
            modes: self.k,
            n_x: self.nx,
            init_rounds: self.init_rounds,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            n: self.n,
            dt: self.dt,
            pi: self.pi,
            noise: match self.snr_db {
                Some(db) => NoiseLevel::TargetSnrDb(db),
                None => NoiseLevel::StdDev(self.sigma_eta),
            },
            seed: self.seed,
            substeps: self.substeps,
        }
    }
}

/// Parse a settings file: one `key = value` per line, `#` starts a comment,
/// values are numbers or booleans. Unknown keys are rejected.
pub fn parse_settings(text: &str) -> Result<Settings> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config {
        key: e.span().map(|s| text[s].to_string()).unwrap_or_default(),
        message: e.message().to_string(),
    })?;
    let mut s = Settings::default();
    for (key, value) in &table {
        let err = |message: &str| Error::Config {
            key: key.clone(),
            message: message.to_string(),
        };
        let float = || match value {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(err("expected a number")),
        };
        let count = || match value {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(err("expected a non-negative integer")),
        };
        match key.as_str() {
            "alpha" => s.alpha = float()?,
            "tau" => s.tau = float()?,
            "pi" => s.pi = float()?,
            "literal_sign" | "literal_eq12" => s.literal_sign = value.as_bool().ok_or_else(|| err("expected true or false"))?,
            "eps" => s.eps = float()?,
            "n_max" => s.n_max = count()?,
            "restarts" => s.restarts = count()?,
            "sigma_x" => s.sigma_x = float()?,
            "seed" => s.seed = count()? as u64,
            "k" => s.k = count()?,
            "nx" => s.nx = count()?,
            "init_rounds" => s.init_rounds = count()?,
            "n" => s.n = count()?,
            "dt" => s.dt = float()?,
            "sigma_eta" => s.sigma_eta = float()?,
            "snr_db" => s.snr_db = Some(float()?),
            "substeps" => s.substeps = count()?,
            _ => return Err(err("unknown key")),
        }
    }
    Ok(s)
}

pub fn read_settings(path: &Path) -> Result<Settings> {
    parse_settings(&std::fs::read_to_string(path)?)
}

/// Matrix stored row-major with explicit dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().copied().collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::dims("matrix entries", self.rows * self.cols, self.data.len()));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub modes: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub a: Vec<MatrixDoc>,
    pub b: Vec<MatrixDoc>,
    pub c: MatrixDoc,
}

impl ModelDoc {
    pub fn from_model(m: &EstimatedModel) -> Self {
        ModelDoc {
            modes: m.num_modes(),
            n_x: m.n_x(),
            n_u: m.n_u(),
            n_y: m.n_y(),
            a: (1..=m.num_modes()).map(|l| MatrixDoc::from_matrix(m.a(l))).collect(),
            b: (1..=m.num_modes()).map(|l| MatrixDoc::from_matrix(m.b(l))).collect(),
            c: MatrixDoc::from_matrix(m.c()),
        }
    }

    pub fn to_model(&self) -> Result<EstimatedModel> {
        let a = self.a.iter().map(MatrixDoc::to_matrix).collect::<Result<Vec<_>>>()?;
        let b = self.b.iter().map(MatrixDoc::to_matrix).collect::<Result<Vec<_>>>()?;
        let model = EstimatedModel::new(a, b, self.c.to_matrix()?)?;
        if (model.num_modes(), model.n_x(), model.n_u(), model.n_y()) != (self.modes, self.n_x, self.n_u, self.n_y) {
            return Err(Error::invalid("model", "declared dimensions disagree with the matrices"));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostDoc {
    pub total: f64,
    pub output_fit: f64,
    pub state_fit: f64,
    pub mode_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub alpha: f64,
    pub eps: f64,
    pub n_max: usize,
    pub restarts: usize,
    pub sigma_x: f64,
    pub seed: u64,
    pub modes: usize,
    pub n_x: usize,
    pub init_rounds: usize,
    pub init_cost: Vec<f64>,
    pub mode_cost: Vec<f64>,
    pub trans_cost: MatrixDoc,
}

impl ConfigDoc {
    pub fn from_config(c: &FitConfig) -> Self {
        ConfigDoc {
            alpha: c.alpha,
            eps: c.eps,
            n_max: c.n_max,
            restarts: c.restarts,
            sigma_x: c.sigma_x,
            seed: c.seed,
            modes: c.modes,
            n_x: c.n_x,
            init_rounds: c.init_rounds,
            init_cost: c.mode_loss.init_cost().to_vec(),
            mode_cost: c.mode_loss.mode_cost().to_vec(),
            trans_cost: MatrixDoc::from_matrix(c.mode_loss.trans_matrix()),
        }
    }

    pub fn to_config(&self) -> Result<FitConfig> {
        let mode_loss = ModeLossSpec::new(self.init_cost.clone(), self.mode_cost.clone(), self.trans_cost.to_matrix()?)?;
        Ok(FitConfig {
            alpha: self.alpha,
            mode_loss,
            eps: self.eps,
            n_max: self.n_max,
            restarts: self.restarts,
            sigma_x: self.sigma_x,
            seed: self.seed,
            modes: self.modes,
            n_x: self.n_x,
            init_rounds: self.init_rounds,
        })
    }
}

/// Scores against ground truth, when it is available.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    pub mode_fit: Option<f64>,
    pub mode_fit_literal: Option<f64>,
    pub permutation: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    /// Open-loop best fit rate; `null` when the simulation diverged.
    pub bfr: Option<f64>,
    pub state_bfr: Option<f64>,
    #[serde(flatten)]
    pub truth: TruthMetrics,
}

/// JSON document of one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub version: String,
    pub model: ModelDoc,
    /// 1-based labels.
    pub modes: Vec<usize>,
    /// One row per sample.
    pub states: Vec<Vec<f64>>,
    pub cost_trace: Vec<f64>,
    /// Cost after the parameter, mode and state updates of each iteration.
    pub step_costs: Vec<[f64; 3]>,
    pub cost: CostDoc,
    pub iterations: usize,
    pub termination: String,
    pub mode_step_increases: usize,
    pub seed: u64,
    pub metrics: MetricsDoc,
    pub config: ConfigDoc,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl ResultDoc {
    pub fn new(fit: &FitResult, config: &FitConfig, truth: TruthMetrics) -> Self {
        ResultDoc {
            version: env!("CARGO_PKG_VERSION").to_string(),
            model: ModelDoc::from_model(&fit.model),
            modes: fit.modes.labels(),
            states: fit.states.iter().map(|x| x.iter().copied().collect()).collect(),
            cost_trace: fit.cost_trace.clone(),
            step_costs: fit
                .step_trace
                .iter()
                .map(|s| [s.after_parameters, s.after_modes, s.after_states])
                .collect(),
            cost: CostDoc {
                total: fit.cost.total,
                output_fit: fit.cost.output_fit,
                state_fit: fit.cost.state_fit,
                mode_loss: fit.cost.mode_loss,
            },
            iterations: fit.iterations,
            termination: fit.termination.as_str().to_string(),
            mode_step_increases: fit.mode_step_increases,
            seed: fit.seed,
            metrics: MetricsDoc {
                bfr: finite(fit.bfr),
                state_bfr: finite(fit.state_bfr),
                truth,
            },
            config: ConfigDoc::from_config(config),
        }
    }

    pub fn fit_result(&self) -> Result<FitResult> {
        let model = self.model.to_model()?;
        let states = StateTrajectory::new(self.states.iter().map(|r| Vector::from_column_slice(r)).collect())?;
        let termination = match self.termination.as_str() {
            "tolerance" => Termination::Tolerance,
            "max-iterations" => Termination::MaxIterations,
            other => return Err(Error::invalid("termination", format!("unknown reason `{other}`"))),
        };
        Ok(FitResult {
            modes: ModeSequence::from_labels(&self.modes, model.num_modes())?,
            model,
            states,
            cost_trace: self.cost_trace.clone(),
            step_trace: self
                .step_costs
                .iter()
                .map(|s| StepCosts {
                    after_parameters: s[0],
                    after_modes: s[1],
                    after_states: s[2],
                })
                .collect(),
            cost: CostBreakdown {
                total: self.cost.total,
                output_fit: self.cost.output_fit,
                state_fit: self.cost.state_fit,
                mode_loss: self.cost.mode_loss,
            },
            iterations: self.iterations,
            termination,
            mode_step_increases: self.mode_step_increases,
            bfr: self.metrics.bfr.unwrap_or(f64::NEG_INFINITY),
            state_bfr: self.metrics.state_bfr.unwrap_or(f64::NEG_INFINITY),
            seed: self.seed,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result document serializes");
        s.push('\n');
        s
    }
}

pub fn write_result(doc: &ResultDoc, path: &Path) -> Result<()> {
    std::fs::write(path, doc.to_json())?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<ResultDoc> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One line of Bode data.
#[derive(Clone, Debug, PartialEq)]
pub struct BodeRow {
    pub point: BodePoint,
    pub mode: usize,
    /// `true` or `estimated`.
    pub which: &'static str,
}

pub fn write_bode_csv(rows: &[BodeRow], path: &Path) -> Result<()> {
    let header = ["omega", "mag_db", "phase_deg", "mode", "which"];
    let records = rows.iter().map(|r| {
        vec![
            format_float(r.point.omega),
            format_float(r.point.mag_db),
            format_float(r.point.phase_deg),
            r.mode.to_string(),
            r.which.to_string(),
        ]
    });
    write_table(path, &header, records)
}

/// Write a CSV file with the given header and string records.
pub fn write_table<I>(path: &Path, header: &[&str], records: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_io)?;
    for r in records {
        w.write_record(&r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Path used in error messages for in-memory readers.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
