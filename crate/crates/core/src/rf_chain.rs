//! DAC-to-optical transfer function: tabulated complex response of the RF
//! amplifier and modulator, and its application to periodic drive records.
//!
//! Tables store magnitude in dB and already-unwrapped phase in radians.
//! Between points both are interpolated linearly in Hz; outside the table the
//! edge value is held. Tables that should interpolate on a log-frequency axis
//! must be densified by the caller.

use std::io::BufRead;

use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::waveform::{SampledWaveform, SignalUnit};
use crate::Real;

/// Magnitude assigned to the DC end of AC-coupled synthetic tables.
pub const DC_FLOOR_DB: f64 = -120.0;

/// Points per decade of [`synth_bandpass`] tables.
pub const BANDPASS_POINTS_PER_DECADE: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfChainError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate frequency {freq} Hz in transfer-function table")]
    DuplicateFrequency { freq: f64 },
    #[error("transfer-function table has no data rows")]
    EmptyTable,
    #[error("invalid transfer-function point: {0}")]
    InvalidPoint(String),
    #[error("invalid band edges: need 0 < f_lo < f_hi (got {f_lo}, {f_hi})")]
    InvalidBand { f_lo: f64, f_hi: f64 },
    #[error("transfer function can only be applied to a coherent periodic record")]
    NonCoherentRecord,
    #[error("i/o error reading table: {0}")]
    Io(String),
}

/// One tabulated response sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfPoint<T> {
    pub freq: T,
    pub mag_db: T,
    pub phase: T,
}

impl<T: Real> TfPoint<T> {
    pub fn new(freq: T, mag_db: T, phase: T) -> Self {
        Self { freq, mag_db, phase }
    }
}

/// Tabulated complex frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction<T> {
    points: Vec<TfPoint<T>>,
    pub name: String,
    pub source: String,
}

impl<T: Real> TransferFunction<T> {
    /// Builds a table from points in any order; rejects duplicates and
    /// non-positive or non-finite values.
    pub fn from_points(
        mut points: Vec<TfPoint<T>>,
        name: impl Into<String>,
    ) -> Result<Self, RfChainError> {
        if points.is_empty() {
            return Err(RfChainError::EmptyTable);
        }
        for p in &points {
            if !(p.freq > T::zero()) || !p.freq.is_finite() {
                return Err(RfChainError::InvalidPoint(format!(
                    "frequency must be positive and finite, got {}",
                    p.freq
                )));
            }
            if !p.mag_db.is_finite() || !p.phase.is_finite() {
                return Err(RfChainError::InvalidPoint(format!(
                    "non-finite magnitude or phase at {} Hz",
                    p.freq
                )));
            }
        }
        points.sort_by(|a, b| a.freq.partial_cmp(&b.freq).unwrap());
        if let Some(w) = points.windows(2).find(|w| w[0].freq == w[1].freq) {
            return Err(RfChainError::DuplicateFrequency { freq: w[0].freq.to_f64_lossy() });
        }
        Ok(Self { points, name: name.into(), source: String::new() })
    }

    /// Frequency-independent response of `gain_db`, zero phase.
    pub fn flat(gain_db: T) -> Self {
        Self {
            points: vec![TfPoint::new(T::one(), gain_db, T::zero())],
            name: format!("flat {gain_db} dB"),
            source: "synthetic".into(),
        }
    }

    /// Tabulates a complex response on the given frequencies.
    ///
    /// Phase is unwrapped along the grid so the table stays continuous.
    pub fn from_response<F>(
        freqs: &[T],
        name: impl Into<String>,
        mut response: F,
    ) -> Result<Self, RfChainError>
    where
        F: FnMut(T) -> Complex<T>,
    {
        let mut points = Vec::with_capacity(freqs.len());
        let mut prev_phase: Option<T> = None;
        for &f in freqs {
            let h = response(f);
            let mag_db = T::lit(20.0) * h.norm().log10();
            let mut phase = h.arg();
            if let Some(prev) = prev_phase {
                let turns = ((prev - phase) / T::TAU()).round();
                phase = phase + turns * T::TAU();
            }
            prev_phase = Some(phase);
            points.push(TfPoint::new(f, mag_db, phase));
        }
        Self::from_points(points, name)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn points(&self) -> &[TfPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interpolated `(magnitude dB, phase rad)` at `f`.
    pub fn mag_phase_at(&self, f: T) -> (T, T) {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if f <= first.freq {
            return (first.mag_db, first.phase);
        }
        if f >= last.freq {
            return (last.mag_db, last.phase);
        }
        let hi = pts.partition_point(|p| p.freq <= f);
        let (a, b) = (pts[hi - 1], pts[hi]);
        let t = (f - a.freq) / (b.freq - a.freq);
        (a.mag_db + (b.mag_db - a.mag_db) * t, a.phase + (b.phase - a.phase) * t)
    }

    /// Linear-scale complex response `10^(dB/20)·e^{iφ}` at `f ≥ 0`.
    pub fn evaluate(&self, f: T) -> Complex<T> {
        let (mag_db, phase) = self.mag_phase_at(f);
        Complex::from_polar(T::lit(10.0).powf(mag_db / T::lit(20.0)), phase)
    }

    /// Cascade of two responses on the union of both grids.
    pub fn compose(&self, other: &Self) -> Self {
        let mut freqs: Vec<T> = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|p| p.freq)
            .collect();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        freqs.dedup();
        let points = freqs
            .into_iter()
            .map(|f| {
                let (ma, pa) = self.mag_phase_at(f);
                let (mb, pb) = other.mag_phase_at(f);
                TfPoint::new(f, ma + mb, pa + pb)
            })
            .collect();
        Self {
            points,
            name: format!("{} * {}", self.name, other.name),
            source: "composed".into(),
        }
    }
}

/// Parses a `freq_hz,mag_db,phase_rad` table.
///
/// Blank lines and lines starting with `#` are ignored. The first
/// non-comment row may be a header (any row whose first field is not a
/// number).
pub fn load_table<T: Real, R: BufRead>(
    reader: R,
    name: &str,
) -> Result<TransferFunction<T>, RfChainError> {
    let mut points = Vec::new();
    let mut seen_row = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| RfChainError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if !seen_row && fields[0].parse::<f64>().is_err() {
            seen_row = true;
            continue;
        }
        seen_row = true;
        if fields.len() != 3 {
            return Err(RfChainError::Parse {
                line: line_no,
                column: fields.len().min(3) + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 3];
        for (col, (field, slot)) in fields.iter().zip(vals.iter_mut()).enumerate() {
            *slot = field.parse::<f64>().map_err(|_| RfChainError::Parse {
                line: line_no,
                column: col + 1,
                message: format!("not a number: {field:?}"),
            })?;
        }
        points.push(TfPoint::new(T::lit(vals[0]), T::lit(vals[1]), T::lit(vals[2])));
    }
    if points.is_empty() {
        return Err(RfChainError::EmptyTable);
    }
    Ok(TransferFunction::from_points(points, name)?.with_source(name.to_string()))
}

/// Parses a table held in memory.
pub fn parse_table<T: Real>(text: &str, name: &str) -> Result<TransferFunction<T>, RfChainError> {
    load_table(text.as_bytes(), name)
}

/// First-order high-pass at `f_lo` cascaded with a first-order low-pass at
/// `f_hi`, tabulated on a logarithmic grid.
///
/// The grid runs from `f_lo·10⁻⁶` (where the high-pass reaches the −120 dB
/// DC floor) to `f_hi·10³`; magnitudes are clamped at the floor.
pub fn synth_bandpass<T: Real>(f_lo: T, f_hi: T) -> Result<TransferFunction<T>, RfChainError> {
    if !(f_lo > T::zero()) || !(f_hi > f_lo) || !f_hi.is_finite() {
        return Err(RfChainError::InvalidBand { f_lo: f_lo.to_f64_lossy(), f_hi: f_hi.to_f64_lossy() });
    }
    let start = f_lo.to_f64_lossy() * 1e-6;
    let stop = f_hi.to_f64_lossy() * 1e3;
    let decades = (stop / start).log10();
    let n = (decades * BANDPASS_POINTS_PER_DECADE as f64).ceil() as usize;
    let freqs: Vec<T> = (0..=n)
        .map(|i| T::lit(start * 10f64.powf(decades * i as f64 / n as f64)))
        .collect();
    let one = Complex::new(T::one(), T::zero());
    let mut tf = TransferFunction::from_response(&freqs, "bandpass", |f| {
        let hp = Complex::new(T::zero(), f / f_lo);
        let lp = Complex::new(T::zero(), f / f_hi);
        (hp / (one + hp)) / (one + lp)
    })?;
    let floor = T::lit(DC_FLOOR_DB);
    for p in tf.points.iter_mut() {
        p.mag_db = p.mag_db.max(floor);
    }
    tf.name = format!("bandpass {f_lo}-{f_hi} Hz");
    tf.source = "synthetic".into();
    Ok(tf)
}

/// Forward DFT of a real record.
pub(crate) fn forward_dft<T: Real>(samples: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = samples.iter().map(|&v| Complex::new(v, T::zero())).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Per-bin multipliers for a record of `len` samples at `sample_rate`.
///
/// Positive-frequency bins take `H(k·f_s/L)`, negative bins its conjugate;
/// DC and (for even `L`) the Nyquist bin take the real part so the result
/// stays real.
pub fn bin_response<T: Real>(tf: &TransferFunction<T>, len: usize, sample_rate: T) -> Vec<Complex<T>> {
    let df = sample_rate / T::from_count(len);
    let mut h = vec![Complex::new(T::zero(), T::zero()); len];
    h[0] = Complex::new(tf.evaluate(T::zero()).re, T::zero());
    for k in 1..len {
        let mirror = len - k;
        if k < mirror {
            let v = tf.evaluate(df * T::from_count(k));
            h[k] = v;
            h[mirror] = v.conj();
        } else if k == mirror {
            h[k] = Complex::new(tf.evaluate(df * T::from_count(k)).re, T::zero());
        }
    }
    h
}

/// `F⁻¹{H·F{w}}` for a coherent periodic record; the result is in radians.
pub fn apply<T: Real>(
    tf: &TransferFunction<T>,
    w: &SampledWaveform<T>,
) -> Result<SampledWaveform<T>, RfChainError> {
    if !w.is_coherent() {
        return Err(RfChainError::NonCoherentRecord);
    }
    let len = w.len();
    let mut spectrum = forward_dft(w.samples());
    for (x, h) in spectrum.iter_mut().zip(bin_response(tf, len, w.sample_rate())) {
        *x = *x * h;
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
    let scale = T::one() / T::from_count(len);
    let out = spectrum.into_iter().map(|c| c.re * scale).collect();
    Ok(w.with_samples(out).scaled(T::one(), SignalUnit::Radians))
}
