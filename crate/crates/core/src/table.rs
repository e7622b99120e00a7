//! Plain-text CSV tables for sweep and lock-shift results.
//!
//! Each file starts with a `# schema=1` line and a `#`-prefixed column
//! header. Numbers use Rust's shortest round-trip formatting, so parsing an
//! emitted table and emitting it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::pdh::{CavityModel, LockShiftCurve};
use crate::spectral::{Band, SweepRow};
use crate::Real;

pub const SCHEMA_LINE: &str = "# schema=1";
pub const SWEEP_HEADER: &str = "f_m_hz,N,a_star,conversion_loss_db,suppression_db,spur_offset_hz";
pub const LOCK_SHIFT_HEADER: &str = "f_m_hz,dxi_hz,dxi_over_linewidth";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing or unsupported schema line (expected `{SCHEMA_LINE}`)")]
    Schema,
    #[error("column header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
}

/// Sweep table row as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord<T> {
    pub f_m: T,
    pub n_index: u32,
    pub a_star: T,
    pub conversion_loss_db: T,
    pub suppression_db: T,
    pub spur_offset_hz: T,
}

impl<T: Real> From<&SweepRow<T>> for SweepRecord<T> {
    fn from(r: &SweepRow<T>) -> Self {
        Self {
            f_m: r.f_m,
            n_index: r.n_index,
            a_star: r.amplitude,
            conversion_loss_db: r.metrics.conversion_loss_db,
            suppression_db: r.metrics.suppression_db,
            spur_offset_hz: r.metrics.spur_offset_hz,
        }
    }
}

/// Lock-shift table row; `dxi` is `None` where no lock point exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockShiftRecord<T> {
    pub f_m: T,
    pub dxi_hz: Option<T>,
    pub dxi_over_linewidth: Option<T>,
}

impl<T: Real> LockShiftRecord<T> {
    pub fn from_curve(curve: &LockShiftCurve<T>) -> Vec<Self> {
        curve
            .rows
            .iter()
            .map(|r| match &r.result {
                Ok(s) => Self { f_m: r.f_m, dxi_hz: Some(s.dxi), dxi_over_linewidth: Some(s.dxi_over_linewidth) },
                Err(_) => Self { f_m: r.f_m, dxi_hz: None, dxi_over_linewidth: None },
            })
            .collect()
    }
}

fn opt<T: Real>(v: Option<T>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

pub fn emit_sweep<T: Real>(rows: &[SweepRecord<T>]) -> String {
    emit_sweep_with(rows, "")
}

/// Sweep table with `preamble` (comment lines) between schema and header.
pub fn emit_sweep_with<T: Real>(rows: &[SweepRecord<T>], preamble: &str) -> String {
    let mut out = format!("{SCHEMA_LINE}\n{preamble}# {SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.f_m, r.n_index, r.a_star, r.conversion_loss_db, r.suppression_db, r.spur_offset_hz
        );
    }
    out
}

pub fn emit_lock_shift<T: Real>(rows: &[LockShiftRecord<T>]) -> String {
    emit_lock_shift_with(rows, "")
}

/// Lock-shift table with `preamble` (comment lines) between schema and header.
pub fn emit_lock_shift_with<T: Real>(rows: &[LockShiftRecord<T>], preamble: &str) -> String {
    let mut out = format!("{SCHEMA_LINE}\n{preamble}# {LOCK_SHIFT_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.f_m, opt(r.dxi_hz), opt(r.dxi_over_linewidth));
    }
    out
}

/// Footer listing contiguous bands, appended after the sweep rows.
pub fn emit_band_footer<T: Real>(label: &str, bands: &[Band<T>]) -> String {
    let mut out = String::new();
    for b in bands {
        let _ = writeln!(out, "# band {label}: {} .. {} Hz", b.start, b.end);
    }
    if bands.is_empty() {
        let _ = writeln!(out, "# band {label}: none");
    }
    out
}

/// Data lines after the column header. Comment lines may sit between the
/// schema line and the header.
fn data_lines<'a>(text: &'a str, header: &'static str) -> Result<Vec<(usize, &'a str)>, TableError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l == SCHEMA_LINE => {}
        _ => return Err(TableError::Schema),
    }
    let mut last = "";
    loop {
        match lines.next() {
            Some((_, l)) if l.starts_with('#') && l.trim_start_matches('#').trim() == header => break,
            Some((_, l)) if l.starts_with('#') || l.is_empty() => last = l,
            Some((_, l)) => return Err(TableError::Header { expected: header, found: l.to_string() }),
            None => return Err(TableError::Header { expected: header, found: last.to_string() }),
        }
    }
    Ok(lines.filter(|(_, l)| !l.is_empty() && !l.starts_with('#')).collect())
}

fn field<F: FromStr>(line: usize, name: &str, s: &str) -> Result<F, TableError> {
    s.trim()
        .parse()
        .map_err(|_| TableError::Parse { line, message: format!("bad {name} value `{s}`") })
}

fn split(line: usize, l: &str, n: usize) -> Result<Vec<&str>, TableError> {
    let cols: Vec<&str> = l.split(',').collect();
    if cols.len() != n {
        return Err(TableError::Parse { line, message: format!("expected {n} columns, found {}", cols.len()) });
    }
    Ok(cols)
}

pub fn parse_sweep<T: Real + FromStr>(text: &str) -> Result<Vec<SweepRecord<T>>, TableError> {
    data_lines(text, SWEEP_HEADER)?
        .into_iter()
        .map(|(n, l)| {
            let c = split(n, l, 6)?;
            Ok(SweepRecord {
                f_m: field(n, "f_m_hz", c[0])?,
                n_index: field(n, "N", c[1])?,
                a_star: field(n, "a_star", c[2])?,
                conversion_loss_db: field(n, "conversion_loss_db", c[3])?,
                suppression_db: field(n, "suppression_db", c[4])?,
                spur_offset_hz: field(n, "spur_offset_hz", c[5])?,
            })
        })
        .collect()
}

pub fn parse_lock_shift<T: Real + FromStr>(text: &str) -> Result<Vec<LockShiftRecord<T>>, TableError> {
    data_lines(text, LOCK_SHIFT_HEADER)?
        .into_iter()
        .map(|(n, l)| {
            let c = split(n, l, 3)?;
            let o = |name, s: &str| -> Result<Option<T>, TableError> {
                let v: T = field(n, name, s)?;
                Ok(if v.is_nan() { None } else { Some(v) })
            };
            Ok(LockShiftRecord {
                f_m: field(n, "f_m_hz", c[0])?,
                dxi_hz: o("dxi_hz", c[1])?,
                dxi_over_linewidth: o("dxi_over_linewidth", c[2])?,
            })
        })
        .collect()
}

/// Human-readable summary of a cavity: FSR, transverse spacing and the
/// coupled mode families within one FSR of `TEM_{0,00}`.
pub fn cavity_report<T: Real>(cavity: &CavityModel<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# cavity d = {} m, R1 = {} m, R2 = {} m", cavity.length(), cavity.mirror_radii().0, cavity.mirror_radii().1);
    let _ = writeln!(out, "# nu_FSR = {} Hz", cavity.fsr());
    let _ = writeln!(out, "# nu_h = {} Hz", cavity.transverse_spacing());
    let _ = writeln!(out, "# linewidth = {} Hz", cavity.linewidth());
    let _ = writeln!(out, "# k, offset_hz, offset_mod_fsr_hz, contrast");
    for k in cavity.families() {
        let off = T::from_u32(k).unwrap() * cavity.transverse_spacing();
        let c = if k == 0 { T::one() } else { cavity.contrasts()[&k] };
        let _ = writeln!(out, "# {k}, {off}, {}, {c}", off % cavity.fsr());
    }
    out
}
