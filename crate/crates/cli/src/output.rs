//! Output plumbing: shortest round-trip floats, atomic writes, CSV tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use nedm_core::comagnetometer::CycleRecord;
use nedm_core::inference::{FlipDataset, FlipPoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCAN_HEADER: &str = "xi,p_closed,p_quadrature,abs_diff";
pub const CYCLE_HEADER: &str = "index,polarity,n_up,n_down,f_n,f_hg,R";
pub const DATASET_HEADER: &str = "xi,trials,flips";

/// Shortest decimal form that parses back to the same `f64`.
pub fn float(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub xi: f64,
    pub p_closed: f64,
    pub p_quadrature: f64,
    pub abs_diff: f64,
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            float(r.xi),
            float(r.p_closed),
            float(r.p_quadrature),
            float(r.abs_diff)
        ));
    }
    out
}

pub fn cycles_csv(records: &[CycleRecord]) -> String {
    let mut out = String::from(CYCLE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.index,
            r.polarity,
            r.n_up,
            r.n_down,
            float(r.f_n),
            float(r.f_hg),
            float(r.r)
        ));
    }
    out
}

pub fn dataset_csv(dataset: &FlipDataset) -> String {
    let mut out = String::from(DATASET_HEADER);
    out.push('\n');
    for p in dataset.points() {
        out.push_str(&format!("{},{},{}\n", float(p.xi), p.trials, p.flips));
    }
    out
}

fn reader<'a>(bytes: &'a [u8], header: &str, what: &str) -> CliResult<csv::Reader<&'a [u8]>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let found = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("{what}: {e}")))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(CliError::Usage(format!(
            "{what}: expected header `{header}`, found `{found}`"
        )));
    }
    Ok(rdr)
}

pub fn parse_dataset(bytes: &[u8]) -> CliResult<FlipDataset> {
    #[derive(Deserialize)]
    struct Row {
        xi: f64,
        trials: u64,
        flips: u64,
    }
    let mut rdr = reader(bytes, DATASET_HEADER, "dataset")?;
    let points = rdr
        .deserialize::<Row>()
        .enumerate()
        .map(|(i, row)| {
            row.map(|r| FlipPoint {
                xi: r.xi,
                trials: r.trials,
                flips: r.flips,
            })
            .map_err(|e| CliError::Usage(format!("dataset row {}: {e}", i + 1)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(FlipDataset::new(points)?)
}

pub fn parse_cycles(bytes: &[u8]) -> CliResult<Vec<CycleRecord>> {
    let mut rdr = reader(bytes, CYCLE_HEADER, "cycle table")?;
    rdr.deserialize::<CycleRecord>()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Usage(format!("cycle row {}: {e}", i + 1))))
        .collect()
}

pub fn parse_scan(bytes: &[u8]) -> CliResult<Vec<ScanRow>> {
    let mut rdr = reader(bytes, SCAN_HEADER, "scan table")?;
    rdr.deserialize::<(f64, f64, f64, f64)>()
        .enumerate()
        .map(|(i, row)| {
            row.map(|(xi, p_closed, p_quadrature, abs_diff)| ScanRow {
                xi,
                p_closed,
                p_quadrature,
                abs_diff,
            })
            .map_err(|e| CliError::Usage(format!("scan row {}: {e}", i + 1)))
        })
        .collect()
}
