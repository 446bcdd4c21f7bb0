//! CSV and JSON interchange: parameter files, distribution / balance /
//! occupation tables, and atomic file replacement.
//!
//! Column layouts:
//!
//! * distribution: `a1,...,ad,n,log_prob,prob`
//! * balance: `a1,a2,n,bstar_direct,bstar_closed,abs_diff`
//! * occupation: `a1,...,ad,n,time_fraction`
//! * ratios: `n,rho_minus,rho_plus` (`rho_minus` is empty at `n = 0`)
//!
//! Reals are written with 17 significant digits so tables round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::balance::{BalanceRow, HypRatios};
use crate::error::{Error, Result};
use crate::model::{Distribution, ParamsConfig, State};
use crate::ssa::OccupationMeasure;

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn state_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("a{i}")).collect()
}

fn state_fields(s: &State) -> Vec<String> {
    let mut v: Vec<String> = s.counts().iter().map(|c| c.to_string()).collect();
    v.push(s.n().to_string());
    v
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn dimension<'a>(mut states: impl Iterator<Item = &'a State>) -> usize {
    states.next().map_or(2, |s| s.dim())
}

/// Distribution table in `(n, a)` order.
pub fn distribution_csv(dist: &Distribution) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = state_header(dimension(dist.support()));
    header.extend(["n", "log_prob", "prob"].map(String::from));
    w.write_record(&header)?;
    for (s, l) in dist.iter() {
        let mut row = state_fields(s);
        row.push(real(l));
        row.push(real(l.exp()));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Occupation table; each weight is divided by the total recorded time.
pub fn occupation_csv(occ: &OccupationMeasure) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = state_header(dimension(occ.weights().keys()));
    header.extend(["n", "time_fraction"].map(String::from));
    w.write_record(&header)?;
    for (s, t) in occ.weights() {
        let mut row = state_fields(s);
        row.push(real(t / occ.total_time()));
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn balance_csv(rows: &[BalanceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a1", "a2", "n", "bstar_direct", "bstar_closed", "abs_diff"])?;
    for r in rows {
        w.write_record([
            r.a1.to_string(),
            r.a2.to_string(),
            r.n.to_string(),
            real(r.bstar_direct),
            real(r.bstar_closed),
            real(r.abs_diff),
        ])?;
    }
    finish(w)
}

pub fn ratios_csv(rows: &[HypRatios]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "rho_minus", "rho_plus"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.minus.map(real).unwrap_or_default(), real(r.plus)])?;
    }
    finish(w)
}

/// Reads a distribution or occupation table. Probabilities are taken from
/// `log_prob` when present, else from `prob`, else from `time_fraction`, and
/// renormalised.
pub fn read_distribution_csv(path: &Path) -> Result<Distribution> {
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut d = 0;
    while col(&format!("a{}", d + 1)) == Some(d) {
        d += 1;
    }
    if d < 2 {
        return Err(bad("expected leading columns a1, a2, ...".into()));
    }
    let n_col = col("n").ok_or_else(|| bad("missing column n".into()))?;
    let (value_col, is_log) = match (col("log_prob"), col("prob"), col("time_fraction")) {
        (Some(c), _, _) => (c, true),
        (None, Some(c), _) | (None, None, Some(c)) => (c, false),
        _ => return Err(bad("need a log_prob, prob or time_fraction column".into())),
    };
    let mut weights = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).ok_or_else(|| bad(format!("row {} is short", line + 2)));
        let counts = (0..d)
            .map(|c| field(c)?.trim().parse::<u64>().map_err(|e| bad(format!("row {}: {e}", line + 2))))
            .collect::<Result<Vec<u64>>>()?;
        let state = State::new(counts);
        let n: u64 = field(n_col)?.trim().parse().map_err(|e| bad(format!("row {}: {e}", line + 2)))?;
        if n != state.n() {
            return Err(bad(format!("row {}: n = {n} but the counts sum to {}", line + 2, state.n())));
        }
        let v: f64 = field(value_col)?.trim().parse().map_err(|e| bad(format!("row {}: {e}", line + 2)))?;
        let valid = if is_log { !v.is_nan() && v <= 0.0 } else { (0.0..=1.0).contains(&v) };
        if !valid {
            return Err(bad(format!("row {}: invalid probability {v}", line + 2)));
        }
        weights.push((state, if is_log { v } else { v.ln() }));
    }
    Distribution::from_log_weights(weights, 0.0)
}

/// Reads a JSON parameter file.
pub fn load_params(path: &Path) -> Result<ParamsConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            detail: "not a file path".into(),
        })?
        .to_string_lossy();
    let tmp: PathBuf = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
