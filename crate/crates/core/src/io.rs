//! CSV and JSON serialization of signals, phases, decompositions and run
//! reports.
//!
//! Floats are written with 17 significant digits so every file read back
//! reproduces the written doubles exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::WellDiffStats;
use crate::error::{Error, Result};
use crate::gmd::{GmdConfig, GmdResult, Scheme, StopReason};
use crate::mmd::{MmdConfig, MmdResult};
use crate::signal_model::{bin_center, Carrier, PhasePrior, SampledSignal, ShapeTable};
use crate::synth::GridMode;

/// Formats a double with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Header and numeric rows of a CSV file, each row with its line number.
struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let vals = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!(
                        "column {:?}: cannot parse {field:?} as a number",
                        header[col]
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, vals));
    }
    Ok(Table { header, rows })
}

fn header_error(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    }
}

/// Reads a `t,value` file.
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<SampledSignal> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.header != ["t", "value"] {
        return Err(header_error(
            path,
            format!("expected header t,value, found {}", table.header.join(",")),
        ));
    }
    let (times, values) = table.rows.into_iter().map(|(_, r)| (r[0], r[1])).unzip();
    SampledSignal::new(times, values)
}

pub fn write_signal_csv(path: impl AsRef<Path>, signal: &SampledSignal) -> Result<()> {
    let rows = signal
        .times()
        .iter()
        .zip(signal.values())
        .map(|(&t, &v)| vec![t, v]);
    write_rows(path.as_ref(), &["t", "value"], rows)
}

/// Phase priors read from a `t,p_1,…,p_K[,q_1,…,q_K]` file, with rows sorted
/// by time.
#[derive(Debug, Clone)]
pub struct PhaseFile {
    pub times: Vec<f64>,
    pub priors: Vec<PhasePrior>,
}

impl PhaseFile {
    /// Checks that the phase grid equals the signal grid.
    pub fn check_grid(&self, signal: &SampledSignal) -> Result<()> {
        if self.times != signal.times() {
            return Err(Error::GridMismatch(
                "phase and signal files have different time columns".into(),
            ));
        }
        Ok(())
    }
}

/// Reads phase columns `p_k` (cycles) and optional amplitude columns `q_k`;
/// missing amplitudes default to 1.
pub fn read_phases_csv(path: impl AsRef<Path>) -> Result<PhaseFile> {
    let path = path.as_ref();
    let mut table = read_table(path)?;
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(header_error(path, "first column must be t".into()));
    }
    let mut p_cols = Vec::new();
    let mut q_cols = Vec::new();
    for (col, name) in table.header.iter().enumerate().skip(1) {
        let (kind, idx) = name
            .split_once('_')
            .and_then(|(kind, idx)| Some((kind, idx.parse::<usize>().ok()?)))
            .ok_or_else(|| header_error(path, format!("unexpected column {name:?}")))?;
        match kind {
            "p" => p_cols.push((idx, col)),
            "q" => q_cols.push((idx, col)),
            _ => return Err(header_error(path, format!("unexpected column {name:?}"))),
        }
    }
    p_cols.sort_unstable();
    q_cols.sort_unstable();
    let expected: Vec<usize> = (1..=p_cols.len()).collect();
    if p_cols.is_empty() || p_cols.iter().map(|c| c.0).collect::<Vec<_>>() != expected {
        return Err(header_error(path, "phase columns must be p_1..p_K".into()));
    }
    if !q_cols.is_empty() && q_cols.iter().map(|c| c.0).collect::<Vec<_>>() != expected {
        return Err(header_error(
            path,
            "amplitude columns must be q_1..q_K".into(),
        ));
    }
    table.rows.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]));
    let times: Vec<f64> = table.rows.iter().map(|r| r.1[0]).collect();
    let column = |col: usize| table.rows.iter().map(|r| r.1[col]).collect::<Vec<f64>>();
    let priors = p_cols
        .iter()
        .enumerate()
        .map(|(k, &(_, pc))| {
            let amp = q_cols.get(k).map(|&(_, qc)| column(qc));
            PhasePrior::new(&times, column(pc), amp)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseFile { times, priors })
}

pub fn write_phases_csv(
    path: impl AsRef<Path>,
    times: &[f64],
    priors: &[PhasePrior],
) -> Result<()> {
    let k = priors.len();
    let with_amp = priors.iter().any(|p| p.amplitude().is_some());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("p_{i}")));
    if with_amp {
        header.extend((1..=k).map(|i| format!("q_{i}")));
    }
    let rows = times.iter().enumerate().map(|(i, &t)| {
        let mut row = vec![t];
        row.extend(priors.iter().map(|p| p.phase()[i]));
        if with_amp {
            row.extend(priors.iter().map(|p| p.amplitude_at(i)));
        }
        row
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(path.as_ref(), &header, rows)
}

/// Writes a shape table as `x,value` rows at the bin centers.
pub fn write_shape_csv(path: impl AsRef<Path>, shape: &ShapeTable) -> Result<()> {
    let b = shape.len();
    let rows = shape
        .bins()
        .iter()
        .enumerate()
        .map(|(j, &v)| vec![bin_center(j, b), v]);
    write_rows(path.as_ref(), &["x", "value"], rows)
}

/// Reads an `x,value` file written by [`write_shape_csv`].
pub fn read_shape_csv(path: impl AsRef<Path>) -> Result<ShapeTable> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.header != ["x", "value"] {
        return Err(header_error(path, "expected header x,value".into()));
    }
    ShapeTable::new(table.rows.into_iter().map(|r| r.1[1]).collect())
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes `mode_k.csv`, `shapes/` and `coefficients.csv` for an MMD result,
/// plus `residual.csv`. Components are numbered from 1.
///
/// `shapes/k{k}_n{n}_{cos,sin}.csv` hold the normalized band shapes and
/// `shapes/k{k}_n{n}_{cos,sin}_raw.csv` the unnormalized products.
pub fn write_mmd_decomposition(dir: impl AsRef<Path>, result: &MmdResult) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let shapes_dir = dir.join("shapes");
    ensure_dir(&shapes_dir)?;
    let mut written = Vec::new();
    let mut coeff_rows = Vec::new();
    for (k, est) in result.estimates.iter().enumerate() {
        let k1 = k + 1;
        if let Some(mode) = &est.mode {
            let p = dir.join(format!("mode_{k1}.csv"));
            write_signal_csv(&p, mode)?;
            written.push(p);
        }
        for band in est.bands() {
            let n = band.n;
            coeff_rows.push(vec![k1 as f64, n as f64, band.cos_coeff, band.sin_coeff]);
            for carrier in [Carrier::Cos, Carrier::Sin] {
                let (tag, shape) = match carrier {
                    Carrier::Cos => ("cos", band.cos_shape()),
                    Carrier::Sin => ("sin", band.sin_shape()),
                };
                let p = shapes_dir.join(format!("k{k1}_n{n}_{tag}.csv"));
                write_shape_csv(&p, &shape)?;
                written.push(p);
                let p = shapes_dir.join(format!("k{k1}_n{n}_{tag}_raw.csv"));
                write_shape_csv(&p, band.acc(carrier))?;
                written.push(p);
            }
        }
    }
    let p = dir.join("coefficients.csv");
    write_coefficients(&p, &coeff_rows)?;
    written.push(p);
    let p = dir.join("residual.csv");
    write_signal_csv(&p, &result.residual)?;
    written.push(p);
    Ok(written)
}

fn write_coefficients(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from("k,n,a_n,b_n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r[0] as usize,
            r[1] as i64,
            fmt_f64(r[2]),
            fmt_f64(r[3])
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

/// One row of `coefficients.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRow {
    pub k: usize,
    pub n: i32,
    pub a_n: f64,
    pub b_n: f64,
}

pub fn read_coefficients_csv(path: impl AsRef<Path>) -> Result<Vec<CoefficientRow>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    if table.header != ["k", "n", "a_n", "b_n"] {
        return Err(header_error(path, "expected header k,n,a_n,b_n".into()));
    }
    Ok(table
        .rows
        .into_iter()
        .map(|(_, r)| CoefficientRow {
            k: r[0] as usize,
            n: r[1] as i32,
            a_n: r[2],
            b_n: r[3],
        })
        .collect())
}

/// Writes `mode_k.csv`, `shapes/k{k}.csv` and `residual.csv` for a GMD result.
pub fn write_gmd_decomposition(dir: impl AsRef<Path>, result: &GmdResult) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let shapes_dir = dir.join("shapes");
    ensure_dir(&shapes_dir)?;
    let mut written = Vec::new();
    for (k, (mode, shape)) in result.modes.iter().zip(&result.shapes).enumerate() {
        let p = dir.join(format!("mode_{}.csv", k + 1));
        write_signal_csv(&p, mode)?;
        written.push(p);
        let p = shapes_dir.join(format!("k{}.csv", k + 1));
        write_shape_csv(&p, shape)?;
        written.push(p);
    }
    let p = dir.join("residual.csv");
    write_signal_csv(&p, &result.residual)?;
    written.push(p);
    Ok(written)
}

/// Which decomposition a run performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gmd,
    Mmd,
}

/// Everything needed to repeat a run.
///
/// For GMD runs `eps_outer` and `max_outer` hold ε and J, and the band and
/// inner-loop fields are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub bandwidth: usize,
    pub eps_outer: f64,
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub bins: usize,
    pub scheme: Scheme,
    pub grid_mode: Option<GridMode>,
    pub seed: Option<u64>,
    pub signal: PathBuf,
    pub phases: PathBuf,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_mmd(cfg: &MmdConfig, signal: PathBuf, phases: PathBuf, out: PathBuf) -> Self {
        Self {
            algorithm: Algorithm::Mmd,
            bandwidth: cfg.bandwidth,
            eps_outer: cfg.eps_outer,
            eps_inner: cfg.eps_inner,
            max_outer: cfg.max_outer,
            max_inner: cfg.max_inner,
            bins: cfg.bins,
            scheme: cfg.scheme,
            grid_mode: None,
            seed: None,
            signal,
            phases,
            out,
        }
    }

    pub fn from_gmd(cfg: &GmdConfig, signal: PathBuf, phases: PathBuf, out: PathBuf) -> Self {
        Self {
            algorithm: Algorithm::Gmd,
            bandwidth: 0,
            eps_outer: cfg.eps,
            eps_inner: cfg.eps,
            max_outer: cfg.max_iter,
            max_inner: 1,
            bins: cfg.bins,
            scheme: cfg.scheme,
            grid_mode: None,
            seed: None,
            signal,
            phases,
            out,
        }
    }

    pub fn mmd_config(&self) -> MmdConfig {
        MmdConfig {
            bandwidth: self.bandwidth,
            eps_outer: self.eps_outer,
            eps_inner: self.eps_inner,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            bins: self.bins,
            scheme: self.scheme,
        }
    }

    pub fn gmd_config(&self) -> GmdConfig {
        GmdConfig {
            eps: self.eps_outer,
            max_iter: self.max_outer,
            bins: self.bins,
            scheme: self.scheme,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("signal", &self.signal),
            ("phases", &self.phases),
            ("out", &self.out),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::InvalidConfig(format!("{name} path is empty")));
            }
        }
        match self.algorithm {
            Algorithm::Mmd => self.mmd_config().validate(),
            Algorithm::Gmd => self.gmd_config().validate(),
        }
    }
}

/// Contents of `report.json`. Non-finite diagnostics are stored as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub residual_norms: Vec<f64>,
    pub shape_increment_norms: Vec<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub contraction_bound: Option<f64>,
    pub seed: Option<u64>,
    pub config: RunConfig,
}

impl RunReport {
    pub fn new(
        trace: &crate::gmd::DecompositionReport,
        stats: Option<&WellDiffStats>,
        config: RunConfig,
    ) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            residual_norms: trace.residual_norms.clone(),
            shape_increment_norms: trace.shape_increment_norms.clone(),
            stop_reason: trace.stop_reason,
            iterations: trace.iterations,
            gamma: stats.and_then(|s| finite(s.gamma)),
            beta: stats.and_then(|s| finite(s.beta)),
            contraction_bound: stats.and_then(|s| finite(s.contraction_bound)),
            seed: config.seed,
            config,
        }
    }
}

/// Writes `report.json` into `dir` and returns its path.
pub fn write_report(dir: impl AsRef<Path>, report: &RunReport) -> Result<PathBuf> {
    let dir = dir.as_ref();
    ensure_dir(dir)?;
    let path = dir.join("report.json");
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}
