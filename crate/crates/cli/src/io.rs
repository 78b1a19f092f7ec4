//! Files on disk: CSV panels, draw containers, manifests and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use cratio::regression::ObservationRecord;
use cratio::PosteriorDraws;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::SchemaConfig;
use crate::error::{CliError, CliResult};

/// Leading bytes of the binary draw container.
pub const DRAWS_MAGIC: &[u8; 8] = b"CRDRAWS1";
const DRAWS_HEADER: usize = 8 + 3 * 8;

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::write(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::write(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::write(path, e))?;
    tmp.persist(path).map_err(|e| CliError::write(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::read(path, e))
}

/// Serializes CSV rows (header first) into bytes.
pub fn csv_bytes<I, R>(header: &[String], rows: I) -> CliResult<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Internal(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter()).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Internal(format!("CSV encoding failed: {e}")))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a days-of-use panel. Every declared covariate must have a column;
/// empty or `NA` cells are kept and dropped later as incomplete records.
pub fn read_panel(path: &Path, schema: &SchemaConfig) -> CliResult<Vec<ObservationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::read(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::read(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Data(format!("{}: missing column `{name}`", path.display())))
    };
    let person = column(&schema.person_id)?;
    let wave = column(&schema.wave)?;
    let response = column(&schema.response)?;
    let covs: Vec<(String, usize)> = schema
        .covariates
        .iter()
        .map(|c| Ok((c.name.clone(), column(&c.name)?)))
        .collect::<CliResult<_>>()?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CliError::read(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let raw = row.get(response).unwrap_or("").trim();
        let days: u32 = raw.parse().map_err(|_| {
            CliError::Data(format!(
                "{} line {line}: response `{raw}` is not a non-negative integer",
                path.display()
            ))
        })?;
        if days > schema.n_days {
            return Err(CliError::Data(format!(
                "{} line {line} (person `{}`): response {days} exceeds n_days = {}",
                path.display(),
                row.get(person).unwrap_or(""),
                schema.n_days
            )));
        }
        let person_id = row.get(person).unwrap_or("").trim().to_string();
        if person_id.is_empty() {
            return Err(CliError::Data(format!("{} line {line}: empty person id", path.display())));
        }
        out.push(ObservationRecord {
            person_id,
            wave: row.get(wave).unwrap_or("").trim().to_string(),
            covariates: covs.iter().map(|(n, i)| (n.clone(), row.get(*i).unwrap_or("").trim().to_string())).collect(),
            days,
        });
    }
    Ok(out)
}

/// Columns of a written panel: person id, wave, covariates other than the
/// wave column, then the response.
pub fn panel_header(schema: &SchemaConfig) -> Vec<String> {
    let mut h = vec![schema.person_id.clone(), schema.wave.clone()];
    h.extend(schema.covariates.iter().filter(|c| c.name != schema.wave).map(|c| c.name.clone()));
    h.push(schema.response.clone());
    h
}

/// Panel CSV in the ingestion layout.
pub fn panel_bytes(records: &[ObservationRecord], schema: &SchemaConfig) -> CliResult<Vec<u8>> {
    let rows = records.iter().map(|r| {
        let mut row = vec![r.person_id.clone(), r.wave.clone()];
        row.extend(
            schema
                .covariates
                .iter()
                .filter(|c| c.name != schema.wave)
                .map(|c| r.covariates.get(&c.name).cloned().unwrap_or_default()),
        );
        row.push(r.days.to_string());
        row
    });
    csv_bytes(&panel_header(schema), rows)
}

/// Binary draw container: magic, then `n_chains`, `draws_per_chain` and
/// `dim` as little-endian `u64`, then the row-major draws as little-endian
/// `f64` (chains concatenated in order).
pub fn draws_to_bytes(draws: &PosteriorDraws) -> Vec<u8> {
    let mut out = Vec::with_capacity(DRAWS_HEADER + draws.values.len() * 8);
    out.extend_from_slice(DRAWS_MAGIC);
    for v in [draws.n_chains, draws.draws_per_chain, draws.dim] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in &draws.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn draws_from_bytes(bytes: &[u8]) -> Result<PosteriorDraws, String> {
    if bytes.len() < DRAWS_HEADER || &bytes[..8] != DRAWS_MAGIC {
        return Err("not a draw container".into());
    }
    let word = |i: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[8 + 8 * i..16 + 8 * i]);
        u64::from_le_bytes(b) as usize
    };
    let (n_chains, per, dim) = (word(0), word(1), word(2));
    let n = n_chains
        .checked_mul(per)
        .and_then(|x| x.checked_mul(dim))
        .ok_or("header sizes overflow")?;
    if bytes.len() != DRAWS_HEADER + 8 * n {
        return Err(format!("expected {} bytes of draws, found {}", 8 * n, bytes.len() - DRAWS_HEADER));
    }
    let values = bytes[DRAWS_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(PosteriorDraws {
        dim,
        n_chains,
        draws_per_chain: per,
        values,
        chain_id: (0..n_chains).flat_map(|c| std::iter::repeat_n(c, per)).collect(),
        stats: Vec::new(),
    })
}

/// Draws as CSV: `chain`, `draw` (within chain), then one column per parameter.
pub fn draws_csv_bytes(draws: &PosteriorDraws, names: &[String]) -> CliResult<Vec<u8>> {
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(names.iter().cloned());
    let per = draws.draws_per_chain.max(1);
    let rows = (0..draws.n_draws()).map(|s| {
        let mut row = vec![draws.chain_id[s].to_string(), (s % per).to_string()];
        row.extend(draws.draw(s).iter().map(|v| v.to_string()));
        row
    });
    csv_bytes(&header, rows)
}
