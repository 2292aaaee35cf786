//! On-disk formats. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial artifact.
//!
//! CSV files open with a comment line `# einsel:<name>:v<version>` followed by
//! the column header; readers reject any other schema line or header.
//!
//! The binary Wigner raster is little-endian:
//! `b"EINSELW1"`, `u64 nx`, `u64 np`, `f64 x_min, x_max, p_min, p_max`, then
//! `nx·np` `f64` values in row-major order (row = x index).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::einselection::{OptimizationResult, PurityRates, SweepTable};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, StateVector, C64};
use crate::phase_space::{Axis, HarmonicDecomposition, WignerGrid};
use crate::trajectories::TrajectoryRecord;

pub const RASTER_MAGIC: &[u8; 8] = b"EINSELW1";
pub const STATE_SCHEMA: &str = "einsel.state.v1";
pub const DENSITY_SCHEMA: &str = "einsel.density.v1";
pub const OPTIMUM_SCHEMA: &str = "einsel.optimum.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub name: &'static str,
    pub version: u32,
    pub columns: &'static [&'static str],
}

impl CsvSchema {
    pub fn tag(&self) -> String {
        format!("# einsel:{}:v{}", self.name, self.version)
    }
}

pub const MOMENTS_CSV: CsvSchema = CsvSchema {
    name: "moments",
    version: 1,
    columns: &["t", "mean_n", "re_a", "im_a", "re_a2", "im_a2", "purity", "var_x", "var_p"],
};

pub const WIGNER_CSV: CsvSchema = CsvSchema { name: "wigner", version: 1, columns: &["x", "p", "W"] };

pub const HARMONICS_CSV: CsvSchema = CsvSchema { name: "harmonics", version: 1, columns: &["r", "l", "re_W_l", "im_W_l"] };

pub const SWEEP_CSV: CsvSchema = CsvSchema {
    name: "sweep",
    version: 1,
    columns: &["ratio", "abs_gamma_dot", "overlap_fock", "overlap_coherent", "converged"],
};

pub const ENSEMBLE_CSV: CsvSchema = CsvSchema {
    name: "ensemble",
    version: 1,
    columns: &["t", "n_samples", "frobenius_distance", "std_error", "mean_n_exact", "mean_n_estimate"],
};

pub const HISTOGRAM_CSV: CsvSchema = CsvSchema { name: "histogram", version: 1, columns: &["level", "count", "expected"] };

pub const PURITY_CSV: CsvSchema = CsvSchema { name: "purity", version: 1, columns: &["t", "purity"] };

/// Writes `contents` to `path` through a temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes rows under `schema`. Row lengths must match the column count.
pub fn csv_bytes(schema: &CsvSchema, rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "{}", schema.tag())?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(schema.columns)?;
        for row in rows {
            if row.len() != schema.columns.len() {
                return Err(Error::Schema(format!(
                    "{} row has {} fields, expected {}",
                    schema.name,
                    row.len(),
                    schema.columns.len()
                )));
            }
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn write_csv(path: &Path, schema: &CsvSchema, rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, &csv_bytes(schema, rows)?)
}

/// Reads a CSV written under `schema`, checking the tag line and header.
pub fn read_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<csv::StringRecord>> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut tag = String::new();
    reader.read_line(&mut tag)?;
    if tag.trim_end() != schema.tag() {
        return Err(Error::Schema(format!("expected `{}`, found `{}`", schema.tag(), tag.trim_end())));
    }
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != schema.columns {
        return Err(Error::Schema(format!("{} header mismatch: {:?}", schema.name, header)));
    }
    r.records().map(|rec| rec.map_err(Error::from)).collect()
}

/// Numeric view of a CSV; `true`/`false` map to 1/0.
pub fn read_numeric_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<Vec<f64>>> {
    read_csv(path, schema)?
        .iter()
        .map(|rec| {
            rec.iter()
                .map(|field| match field {
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    _ => field.parse::<f64>().map_err(|e| Error::Schema(format!("bad number `{field}`: {e}"))),
                })
                .collect()
        })
        .collect()
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn wigner_csv_rows(grid: &WignerGrid) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(grid.values.len());
    for i in 0..grid.x_axis.points {
        let x = grid.x_axis.value(i);
        for j in 0..grid.p_axis.points {
            rows.push(vec![num(x), num(grid.p_axis.value(j)), num(grid.value(i, j))]);
        }
    }
    rows
}

pub fn harmonics_csv_rows(h: &HarmonicDecomposition) -> Vec<Vec<String>> {
    let lm = h.l_max as i64;
    let mut rows = Vec::new();
    for (i, r) in h.radial_grid.iter().enumerate() {
        for l in -lm..=lm {
            let c = h.component(l)[i];
            rows.push(vec![num(*r), l.to_string(), num(c.re), num(c.im)]);
        }
    }
    rows
}

pub fn sweep_csv_rows(table: &SweepTable) -> Vec<Vec<String>> {
    table
        .points
        .iter()
        .map(|p| match &p.result {
            Ok(r) => vec![num(p.ratio), num(r.objective()), num(r.overlap_fock), num(r.overlap_coherent), r.converged.to_string()],
            Err(_) => vec![num(p.ratio), "NaN".into(), "NaN".into(), "NaN".into(), "false".into()],
        })
        .collect()
}

pub fn raster_bytes(grid: &WignerGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(56 + 8 * grid.values.len());
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&(grid.x_axis.points as u64).to_le_bytes());
    out.extend_from_slice(&(grid.p_axis.points as u64).to_le_bytes());
    for v in [grid.x_axis.min, grid.x_axis.max, grid.p_axis.min, grid.p_axis.max] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_raster(path: &Path, grid: &WignerGrid) -> Result<()> {
    write_atomic(path, &raster_bytes(grid))
}

pub fn read_raster(path: &Path) -> Result<WignerGrid> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 56 || &bytes[..8] != RASTER_MAGIC {
        return Err(Error::Schema("not an einsel Wigner raster".into()));
    }
    let u = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let (nx, np) = (u(8), u(16));
    let count = nx.checked_mul(np).ok_or_else(|| Error::Schema("raster size overflows".into()))?;
    if bytes.len() != 56 + 8 * count {
        return Err(Error::Schema(format!("raster holds {} bytes, header promises {}", bytes.len(), 56 + 8 * count)));
    }
    let values = (0..count).map(|k| f(56 + 8 * k)).collect();
    WignerGrid::new(Axis::new(f(24), f(32), nx)?, Axis::new(f(40), f(48), np)?, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRecord {
    pub schema: String,
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl StateRecord {
    pub fn from_state(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self {
            schema: STATE_SCHEMA.into(),
            dim: psi.dim(),
            re: a.iter().map(|c| c.re).collect(),
            im: a.iter().map(|c| c.im).collect(),
            metadata: Default::default(),
        }
    }

    /// Renormalizes and fixes the global phase on the way in.
    pub fn to_state(&self) -> Result<StateVector> {
        if self.schema != STATE_SCHEMA {
            return Err(Error::Schema(format!("expected {STATE_SCHEMA}, found {}", self.schema)));
        }
        if self.re.len() != self.dim || self.im.len() != self.dim {
            return Err(Error::Schema(format!("state arrays disagree with dim {}", self.dim)));
        }
        StateVector::from_amplitudes(self.re.iter().zip(&self.im).map(|(r, i)| C64::new(*r, *i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityRecord {
    pub schema: String,
    pub t: f64,
    pub dim: usize,
    /// Row-major.
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl DensityRecord {
    pub fn from_density(rho: &DensityMatrix, t: f64) -> Self {
        let d = rho.dim();
        let e = rho.elements();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(e[(i, j)].re);
                im.push(e[(i, j)].im);
            }
        }
        Self { schema: DENSITY_SCHEMA.into(), t, dim: d, re, im }
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        if self.schema != DENSITY_SCHEMA {
            return Err(Error::Schema(format!("expected {DENSITY_SCHEMA}, found {}", self.schema)));
        }
        let d = self.dim;
        if self.re.len() != d * d || self.im.len() != d * d {
            return Err(Error::Schema(format!("density arrays disagree with dim {d}")));
        }
        DensityMatrix::from_matrix(nalgebra::DMatrix::from_fn(d, d, |i, j| C64::new(self.re[i * d + j], self.im[i * d + j])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumRecord {
    pub schema: String,
    pub energy_target: f64,
    pub kappa_a: f64,
    pub kappa_n: f64,
    pub state: StateRecord,
    pub rates: PurityRates,
    pub abs_gamma_dot: f64,
    pub overlap_fock: f64,
    pub fock_reference: crate::einselection::FockReference,
    pub overlap_coherent: f64,
    pub residual_norm: f64,
    pub residual_energy: f64,
    pub converged: bool,
    pub restarts_used: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub note: Option<String>,
}

impl OptimumRecord {
    pub fn new(result: &OptimizationResult, energy_target: f64, kappa_a: f64, kappa_n: f64) -> Self {
        Self {
            schema: OPTIMUM_SCHEMA.into(),
            energy_target,
            kappa_a,
            kappa_n,
            state: StateRecord::from_state(&result.state),
            rates: result.rates,
            abs_gamma_dot: result.objective(),
            overlap_fock: result.overlap_fock,
            fock_reference: result.fock_reference,
            overlap_coherent: result.overlap_coherent,
            residual_norm: result.constraint_residuals.norm,
            residual_energy: result.constraint_residuals.energy,
            converged: result.converged,
            restarts_used: result.restarts_used,
            iterations: result.iterations,
            gradient_norm: result.gradient_norm,
            note: result.note.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

/// One JSON object per trajectory: its seed, jump events and final time.
pub fn write_trajectories_jsonl(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        index: usize,
        seed: crate::trajectories::TrajectorySeed,
        t_final: f64,
        events: &'a [crate::trajectories::JumpEvent],
    }
    let mut out = Vec::new();
    for (index, r) in records.iter().enumerate() {
        serde_json::to_writer(&mut out, &Line { index, seed: r.seed, t_final: r.t_final, events: &r.events })?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{cat_state, TruncatedBasis};
    use crate::phase_space::GridSpec;

    #[test]
    fn csv_round_trip_and_schema_drift() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("purity.csv");
        let rows = vec![vec![num(0.0), num(1.0)], vec![num(0.5), num(0.75)]];
        write_csv(&path, &PURITY_CSV, &rows).unwrap();
        let back = read_numeric_csv(&path, &PURITY_CSV).unwrap();
        assert_eq!(back, vec![vec![0.0, 1.0], vec![0.5, 0.75]]);
        assert!(matches!(read_csv(&path, &HISTOGRAM_CSV), Err(Error::Schema(_))));
        let drifted = CsvSchema { version: 2, ..PURITY_CSV };
        assert!(read_csv(&path, &drifted).is_err());
        let renamed = CsvSchema { columns: &["t", "gamma"], ..PURITY_CSV };
        assert!(read_csv(&path, &renamed).is_err());
        assert!(csv_bytes(&PURITY_CSV, &[vec!["1".into()]]).is_err());
    }

    #[test]
    fn raster_round_trip() {
        let rho = cat_state(C64::new(1.0, 0.5), 1.0, TruncatedBasis::new(16).unwrap()).unwrap().to_density();
        let grid = crate::phase_space::wigner(&rho, &GridSpec::square(4.0, 17).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        write_raster(&path, &grid).unwrap();
        assert_eq!(read_raster(&path).unwrap(), grid);
        fs::write(&path, b"garbage").unwrap();
        assert!(read_raster(&path).is_err());
    }

    #[test]
    fn state_and_density_json_round_trip() {
        let psi = cat_state(C64::new(1.2, 0.0), 2.0, TruncatedBasis::new(20).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        write_json(&path, &StateRecord::from_state(&psi)).unwrap();
        let back: StateRecord = read_json(&path).unwrap();
        let psi2 = back.to_state().unwrap();
        assert!(psi.amplitudes().iter().zip(psi2.amplitudes().iter()).all(|(a, b)| (a - b).norm() < 1e-15));
        let rho = psi.to_density();
        let rec = DensityRecord::from_density(&rho, 0.0);
        assert_eq!(rec.to_density().unwrap().max_abs_diff(&rho).unwrap(), 0.0);
        let bad = r#"{"schema":"einsel.state.v1","dim":1,"re":[1],"im":[0],"extra":1}"#;
        assert!(serde_json::from_str::<StateRecord>(bad).is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
