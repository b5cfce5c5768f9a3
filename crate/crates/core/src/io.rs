//! CSV and JSON artifact files.
//!
//! Every writer goes through a temporary file in the destination directory
//! followed by an atomic rename, so readers never observe a half-written
//! artifact. Readers report the 1-based line number of the first malformed
//! row they encounter.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::scorenet::ScoreErrorPoint;
use crate::string::{StringDiagnostics, StringState};
use crate::walkers::WalkerEnsemble;

/// Writes `contents` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            tempfile::NamedTempFile::new_in(d)?
        }
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    std::io::Write::write_all(&mut tmp, contents)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Serializes a value to pretty JSON at `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads a JSON value from `path`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_to_bytes(rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory cannot fail");
    }
    w.into_inner().expect("writing to memory cannot fail")
}

fn coordinate_headers(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("x{k}")).collect()
}

/// One row per image: `image,t,x0,...,x{d-1}`.
pub fn write_string_snapshot(path: &Path, state: &StringState) -> Result<()> {
    let dim = state.dim();
    let mut header = vec!["image".to_string(), "t".to_string()];
    header.extend(coordinate_headers(dim));
    let mut rows = vec![header];
    for (i, img) in state.images.iter().enumerate() {
        let mut row = vec![i.to_string(), format_float(state.t)];
        row.extend(img.iter().map(|v| format_float(*v)));
        rows.push(row);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// Reads a snapshot written by [`write_string_snapshot`].
pub fn read_string_snapshot(path: &Path) -> Result<StringState> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "image" || &headers[1] != "t" {
        return Err(Error::MalformedRow {
            line: 1,
            what: "expected header image,t,x0,...".into(),
        });
    }
    let dim = headers.len() - 2;
    let mut images = Vec::new();
    let mut t = None;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record?;
        let malformed = |what: &str| Error::MalformedRow {
            line,
            what: what.into(),
        };
        if record.len() != dim + 2 {
            return Err(malformed("wrong number of fields"));
        }
        let idx: usize = record[0]
            .parse()
            .map_err(|_| malformed("image index is not an integer"))?;
        if idx != images.len() {
            return Err(malformed("image indices must be 0,1,2,... in order"));
        }
        let row_t: f64 = record[1]
            .parse()
            .map_err(|_| malformed("t is not a number"))?;
        match t {
            None => t = Some(row_t),
            Some(t0) if t0 != row_t => {
                return Err(malformed("t differs between rows of one snapshot"))
            }
            _ => {}
        }
        let mut coords = Vec::with_capacity(dim);
        for f in record.iter().skip(2) {
            coords.push(
                f.parse::<f64>()
                    .map_err(|_| malformed("coordinate is not a number"))?,
            );
        }
        images.push(DVector::from_vec(coords));
    }
    let t = t.ok_or(Error::MalformedRow {
        line: 2,
        what: "snapshot has no rows".into(),
    })?;
    StringState::new(images, t)
}

/// One row per recorded step: `step,t,arc_length,max_displacement[,logp_0...]`.
///
/// The log-density columns appear when every record carries them.
pub fn write_diagnostics(path: &Path, diagnostics: &[StringDiagnostics]) -> Result<()> {
    let n_logp = diagnostics
        .iter()
        .map(|d| d.log_density.as_ref().map_or(0, Vec::len))
        .min()
        .unwrap_or(0);
    let mut header = vec![
        "step".to_string(),
        "t".to_string(),
        "arc_length".to_string(),
        "max_displacement".to_string(),
    ];
    header.extend((0..n_logp).map(|k| format!("logp_{k}")));
    let mut rows = vec![header];
    for d in diagnostics {
        let mut row = vec![
            d.step.to_string(),
            format_float(d.t),
            format_float(d.arc_length),
            format_float(d.max_displacement),
        ];
        if n_logp > 0 {
            let logp = d.log_density.as_ref().expect("n_logp > 0 implies presence");
            row.extend(logp[..n_logp].iter().map(|v| format_float(*v)));
        }
        rows.push(row);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// One row per walker: `image,x0,...,x{d-1},reject_count`.
pub fn write_walkers(path: &Path, ensemble: &WalkerEnsemble) -> Result<()> {
    let dim = ensemble.positions.first().map_or(0, DVector::len);
    let mut header = vec!["image".to_string()];
    header.extend(coordinate_headers(dim));
    header.push("reject_count".to_string());
    let mut rows = vec![header];
    for (i, pos) in ensemble.positions.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(pos.iter().map(|v| format_float(*v)));
        row.push(ensemble.reject_counts[i].to_string());
        rows.push(row);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// One row per stored time: `t,x0,...,x{d-1}`.
pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let dim = trajectory.states.first().map_or(0, DVector::len);
    let mut header = vec!["t".to_string()];
    header.extend(coordinate_headers(dim));
    let mut rows = vec![header];
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        let mut row = vec![format_float(*t)];
        row.extend(x.iter().map(|v| format_float(*v)));
        rows.push(row);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// One row per input point: `id,log_likelihood`.
pub fn write_likelihoods(path: &Path, values: &[f64]) -> Result<()> {
    let mut rows = vec![vec!["id".to_string(), "log_likelihood".to_string()]];
    for (i, v) in values.iter().enumerate() {
        rows.push(vec![i.to_string(), format_float(*v)]);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// One row per evaluation time: `t,mean_relative_error,n_excluded`.
pub fn write_error_curve(path: &Path, curve: &[ScoreErrorPoint]) -> Result<()> {
    let mut rows = vec![vec![
        "t".to_string(),
        "mean_relative_error".to_string(),
        "n_excluded".to_string(),
    ]];
    for p in curve {
        rows.push(vec![
            format_float(p.t),
            format_float(p.mean_relative_error),
            p.n_excluded.to_string(),
        ]);
    }
    write_atomic(path, &csv_to_bytes(rows))
}

/// Shortest decimal form that parses back to the identical f64.
fn format_float(v: f64) -> String {
    let mut buf = ryu::Buffer::new();
    buf.format(v).to_string()
}
