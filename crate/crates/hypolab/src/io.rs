//! File formats: CSV series, JSON reports and binary snapshots of h.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

/// Snapshot file magic.
pub const SNAPSHOT_MAGIC: [u8; 8] = *b"HYPOSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Shortest fixed format that round-trips every double: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Writes a header and rows of doubles. An empty `rows` gives a header-only file.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?);
    let wrap = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|x| fmt_f64(*x))).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes preformatted records, for tables that mix labels and numbers.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?);
    let wrap = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a numeric CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let bad = |msg: String| CliError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let row = rec.iter().map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")))).collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Pretty JSON with a trailing newline; key order follows the struct layout.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Grid state of h with its box.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    /// Row-major, x slowest.
    pub h: Vec<f64>,
}

/// Layout: magic, u32 version, u64 nx, u64 nv, f64 Lx, f64 Lv, then nx·nv
/// doubles. Everything little-endian.
pub fn write_snapshot(path: &Path, s: &Snapshot) -> Result<(), CliError> {
    let mut buf = Vec::with_capacity(44 + 8 * s.h.len());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(s.nx as u64).to_le_bytes());
    buf.extend_from_slice(&(s.nv as u64).to_le_bytes());
    buf.extend_from_slice(&s.lx.to_le_bytes());
    buf.extend_from_slice(&s.lv.to_le_bytes());
    for x in &s.h {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: &str| CliError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()));
    if bytes.len() < 44 || bytes[..8] != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != SNAPSHOT_VERSION {
        return Err(bad("unsupported snapshot version"));
    }
    let (nx, nv) = (u64_at(12) as usize, u64_at(20) as usize);
    let lx = f64::from_bits(u64_at(28));
    let lv = f64::from_bits(u64_at(36));
    let n = nx.checked_mul(nv).ok_or_else(|| bad("grid size overflows"))?;
    if bytes.len() != 44 + 8 * n {
        return Err(bad("snapshot length does not match its header"));
    }
    let h = (0..n).map(|k| f64::from_bits(u64_at(44 + 8 * k))).collect();
    Ok(Snapshot { nx, nv, lx, lv, h })
}
