use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EnergyLedger, StateSnapshot, StepStats, Trajectory};
use crate::tensors::SymTensor;

/// Version of the CSV columns and of the sidecar layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 17] = [
    "step",
    "t",
    "Q",
    "D",
    "grad",
    "Qtilde",
    "VH_cum",
    "work_sigma_cum",
    "work_load_cum",
    "load_term",
    "stability_functional",
    "balance_residual",
    "sweeps",
    "newton_iterations",
    "alpha_iterations",
    "objective",
    "warm_start_objective",
];

/// Shortest decimal representation that parses back to the same value.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// One snapshot with tensors in storage order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub alpha: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub energy: EnergyLedger,
    pub stats: StepStats,
}

/// The JSON sidecar: the complete state at every snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub schema_version: u32,
    pub scenario: String,
    pub tensor_dim: usize,
    pub snapshots: Vec<SnapshotRecord>,
}

fn tensors_out(ts: &[SymTensor]) -> Vec<Vec<f64>> {
    ts.iter().map(|t| t.voigt().to_vec()).collect()
}

fn tensors_in(dim: usize, rows: &[Vec<f64>]) -> Result<Vec<SymTensor>> {
    let n = crate::tensors::n_components(dim);
    rows.iter()
        .map(|r| {
            if r.len() == n {
                Ok(SymTensor::from_voigt(dim, r))
            } else {
                Err(Error::Format(format!(
                    "tensor with {} components, expected {n}",
                    r.len()
                )))
            }
        })
        .collect()
}

impl TrajectoryFile {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let tensor_dim = traj
            .snapshots
            .first()
            .and_then(|s| s.e.first())
            .map_or(3, |e| e.dim());
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: traj.scenario.clone(),
            tensor_dim,
            snapshots: traj
                .snapshots
                .iter()
                .map(|s| SnapshotRecord {
                    t: s.t,
                    alpha: s.alpha.clone(),
                    u: s.u.clone(),
                    e: tensors_out(&s.e),
                    p: tensors_out(&s.p),
                    sigma: tensors_out(&s.sigma),
                    energy: s.energy,
                    stats: s.stats,
                })
                .collect(),
        }
    }

    pub fn into_trajectory(self) -> Result<Trajectory> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported trajectory schema version {}",
                self.schema_version
            )));
        }
        let dim = self.tensor_dim;
        if dim != 2 && dim != 3 {
            return Err(Error::Format(format!("unsupported tensor dimension {dim}")));
        }
        let snapshots = self
            .snapshots
            .into_iter()
            .map(|s| {
                Ok(StateSnapshot {
                    t: s.t,
                    alpha: s.alpha,
                    u: s.u,
                    e: tensors_in(dim, &s.e)?,
                    p: tensors_in(dim, &s.p)?,
                    sigma: tensors_in(dim, &s.sigma)?,
                    energy: s.energy,
                    stats: s.stats,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            scenario: self.scenario,
            snapshots,
        })
    }
}

/// One CSV row read back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyLedger,
    pub stats: StepStats,
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams ledger rows to `trajectory.csv` as snapshots arrive and writes the
/// `trajectory.json` sidecar on [`TrajectoryWriter::finish`].
pub struct TrajectoryWriter {
    dir: PathBuf,
    csv_path: PathBuf,
    csv: csv::Writer<BufWriter<File>>,
    initial: Option<EnergyLedger>,
    rows: usize,
}

impl TrajectoryWriter {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let csv_path = dir.join("trajectory.csv");
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# geoplast trajectory schema {SCHEMA_VERSION}").map_err(|e| Error::io(&csv_path, e))?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(CSV_COLUMNS).map_err(|e| csv_err(&csv_path, e))?;
        Ok(Self {
            dir,
            csv_path,
            csv,
            initial: None,
            rows: 0,
        })
    }

    /// Appends and flushes one row.
    pub fn push(&mut self, s: &StateSnapshot) -> Result<()> {
        let initial = *self.initial.get_or_insert(s.energy);
        let en = &s.energy;
        let st = &s.stats;
        let record = [
            self.rows.to_string(),
            format_f64(s.t),
            format_f64(en.q),
            format_f64(en.d),
            format_f64(en.grad),
            format_f64(en.qtilde),
            format_f64(en.vh_cum),
            format_f64(en.work_sigma_cum),
            format_f64(en.work_load_cum),
            format_f64(en.load_term),
            format_f64(en.stability_functional()),
            format_f64(en.balance_lhs() - en.balance_rhs(&initial)),
            st.sweeps.to_string(),
            st.newton_iterations.to_string(),
            st.alpha_iterations.to_string(),
            format_f64(st.objective),
            format_f64(st.warm_start_objective),
        ];
        self.csv.write_record(&record).map_err(|e| csv_err(&self.csv_path, e))?;
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        self.rows += 1;
        Ok(())
    }

    /// Writes the sidecar for `traj`, whose snapshots must be the rows pushed.
    pub fn finish(mut self, traj: &Trajectory) -> Result<()> {
        if traj.len() != self.rows {
            return Err(Error::Precondition(format!(
                "trajectory has {} snapshots but {} rows were written",
                traj.len(),
                self.rows
            )));
        }
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        let path = self.dir.join("trajectory.json");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &TrajectoryFile::from_trajectory(traj)).map_err(|source| {
            Error::Json {
                path: path.clone(),
                source,
            }
        })?;
        out.write_all(b"\n")
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(&path, e))
    }
}

/// Writes `trajectory.csv` and `trajectory.json` into `dir`.
pub fn write_trajectory(traj: &Trajectory, dir: impl AsRef<Path>) -> Result<()> {
    let mut w = TrajectoryWriter::create(dir)?;
    for s in &traj.snapshots {
        w.push(s)?;
    }
    w.finish(traj)
}

/// Reads the sidecar written by [`write_trajectory`].
pub fn read_trajectory(dir: impl AsRef<Path>) -> Result<Trajectory> {
    let path = dir.as_ref().join("trajectory.json");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let tf: TrajectoryFile =
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
    tf.into_trajectory()
}

/// Reads the ledger columns of a trajectory CSV.
pub fn read_ledger_csv(path: impl AsRef<Path>) -> Result<Vec<LedgerRow>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Format(format!(
            "{}: unexpected columns {:?}",
            path.display(),
            header
        )));
    }
    let bad = |what: &str| Error::Format(format!("{}: cannot parse {what}", path.display()));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(CSV_COLUMNS[i]));
        let n = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(CSV_COLUMNS[i]));
        rows.push(LedgerRow {
            step: n(0)?,
            t: f(1)?,
            energy: EnergyLedger {
                q: f(2)?,
                d: f(3)?,
                grad: f(4)?,
                qtilde: f(5)?,
                vh_cum: f(6)?,
                work_sigma_cum: f(7)?,
                work_load_cum: f(8)?,
                load_term: f(9)?,
            },
            stats: StepStats {
                sweeps: n(12)?,
                newton_iterations: n(13)?,
                alpha_iterations: n(14)?,
                objective: f(15)?,
                warm_start_objective: f(16)?,
            },
        });
    }
    Ok(rows)
}
