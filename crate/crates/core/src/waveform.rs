//! Serrodyne drive waveforms.
//!
//! Three sources of a sawtooth are modelled:
//!
//! * the ideal continuous ramp ([`ideal_phase`]),
//! * the same ramp point-sampled at a finite DAC rate ([`sample_ideal`]) and
//!   reconstructed on a finer grid ([`interpolate`]),
//! * a bit-accurate model of an FPGA ramp generator feeding a DAC
//!   ([`rampgen_emulate`]): a wrapping 32-bit phase accumulator, a 16-bit gain
//!   multiply and an MSB slice down to the DAC width.

use thiserror::Error;

use crate::Real;

/// 2^32, the accumulator modulus.
const ACC_MODULUS: f64 = 4_294_967_296.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveformError {
    #[error("invalid sawtooth: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(&'static str),
    #[error("ramp frequency {f_m} Hz must lie strictly between 0 and f_s/2 = {half_fs} Hz")]
    AboveNyquist { f_m: f64, half_fs: f64 },
    #[error("{periods} periods at f_m/f_s = {ratio} do not span an integer number of samples ({samples})")]
    NonCommensurate { periods: usize, ratio: f64, samples: f64 },
    #[error("oversampling factor must be at least 2, got {0}")]
    InvalidOversample(usize),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid ramp generator config: {0}")]
    InvalidRampGen(&'static str),
}

/// What a [`SampledWaveform`]'s values represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalUnit {
    Volts,
    Radians,
    /// Dimensionless DAC full-scale units in `[-1, 1)`.
    Normalized,
}

/// Parametric description of the serrodyne drive ramp.
///
/// With `amplitude = 1` the optical phase sweeps `2πN` rad peak to peak,
/// i.e. the drive voltage sweeps `2N·V_π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SawtoothSpec<T> {
    f_m: T,
    n_index: u32,
    v_pi: T,
    amplitude: T,
}

impl<T: Real> SawtoothSpec<T> {
    pub fn new(f_m: T, n_index: u32, v_pi: T, amplitude: T) -> Result<Self, WaveformError> {
        if !(f_m > T::zero()) || !f_m.is_finite() {
            return Err(WaveformError::InvalidSpec("f_m must be positive and finite"));
        }
        if n_index < 1 {
            return Err(WaveformError::InvalidSpec("shift index N must be >= 1"));
        }
        if !(v_pi > T::zero()) || !v_pi.is_finite() {
            return Err(WaveformError::InvalidSpec("V_pi must be positive and finite"));
        }
        if !(amplitude >= T::zero()) || !amplitude.is_finite() {
            return Err(WaveformError::InvalidSpec("amplitude must be non-negative and finite"));
        }
        Ok(Self { f_m, n_index, v_pi, amplitude })
    }

    /// Unit-amplitude ramp with `V_π = 1 V`.
    pub fn unit(f_m: T, n_index: u32) -> Result<Self, WaveformError> {
        Self::new(f_m, n_index, T::one(), T::one())
    }

    pub fn f_m(&self) -> T {
        self.f_m
    }

    pub fn n_index(&self) -> u32 {
        self.n_index
    }

    pub fn v_pi(&self) -> T {
        self.v_pi
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn with_amplitude(self, amplitude: T) -> Result<Self, WaveformError> {
        Self::new(self.f_m, self.n_index, self.v_pi, amplitude)
    }

    /// Target optical shift `N·f_m`.
    pub fn target_shift(&self) -> T {
        T::from_u32(self.n_index).unwrap() * self.f_m
    }

    /// Peak-to-peak phase excursion in rad, `2πN·a`.
    fn phase_span(&self) -> T {
        T::TAU() * T::from_u32(self.n_index).unwrap() * self.amplitude
    }
}

/// Ideal serrodyne phase at time `t`: `a·2πN·[(f_m·t mod 1) − ½]`.
pub fn ideal_phase<T: Real>(spec: &SawtoothSpec<T>, t: T) -> T {
    let x = spec.f_m * t;
    let frac = x - x.floor();
    spec.phase_span() * (frac - T::lit(0.5))
}

/// Ideal drive voltage; the phase map is `φ = π·V/V_π`.
pub fn ideal_voltage<T: Real>(spec: &SawtoothSpec<T>, t: T) -> T {
    ideal_phase(spec, t) * spec.v_pi / T::PI()
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform<T> {
    sample_rate: T,
    samples: Vec<T>,
    unit: SignalUnit,
    /// Number of fundamental periods the record spans when it is an exact
    /// (leakage-free) period of a periodic signal.
    coherent_periods: Option<usize>,
}

impl<T: Real> SampledWaveform<T> {
    pub fn new(sample_rate: T, samples: Vec<T>, unit: SignalUnit) -> Result<Self, WaveformError> {
        if !(sample_rate > T::zero()) || !sample_rate.is_finite() {
            return Err(WaveformError::InvalidWaveform("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(WaveformError::InvalidWaveform("record is empty"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(WaveformError::InvalidWaveform("non-finite sample"));
        }
        Ok(Self { sample_rate, samples, unit, coherent_periods: None })
    }

    /// Marks the record as holding exactly `periods` periods of a periodic signal.
    pub fn into_coherent(mut self, periods: usize) -> Self {
        self.coherent_periods = Some(periods);
        self
    }

    pub fn sample_rate(&self) -> T {
        self.sample_rate
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn unit(&self) -> SignalUnit {
        self.unit
    }

    pub fn coherent_periods(&self) -> Option<usize> {
        self.coherent_periods
    }

    pub fn is_coherent(&self) -> bool {
        self.coherent_periods.is_some()
    }

    /// DFT bin spacing `f_s/L`.
    pub fn bin_width(&self) -> T {
        self.sample_rate / T::from_count(self.samples.len())
    }

    /// Multiplies every sample by `factor` and relabels the unit.
    pub fn scaled(&self, factor: T, unit: SignalUnit) -> Self {
        Self {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().map(|&v| v * factor).collect(),
            unit,
            coherent_periods: self.coherent_periods,
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<T>) -> Self {
        Self {
            sample_rate: self.sample_rate,
            samples,
            unit: self.unit,
            coherent_periods: self.coherent_periods,
        }
    }
}

/// Record length `n_periods·f_s/f_m`, required to be an integer.
pub fn coherent_length<T: Real>(f_m: T, f_s: T, n_periods: usize) -> Result<usize, WaveformError> {
    if !(f_m > T::zero()) || !(f_s > T::zero()) || f_m * T::lit(2.0) >= f_s {
        return Err(WaveformError::AboveNyquist {
            f_m: f_m.to_f64_lossy(),
            half_fs: f_s.to_f64_lossy() / 2.0,
        });
    }
    if n_periods == 0 {
        return Err(WaveformError::InvalidSpec("n_periods must be >= 1"));
    }
    let ratio = f_m.to_f64_lossy() / f_s.to_f64_lossy();
    let samples = n_periods as f64 / ratio;
    let rounded = samples.round();
    let rel_tol = 1e-9_f64.max(4.0 * T::epsilon().to_f64_lossy());
    if rounded < 1.0 || (samples - rounded).abs() > rel_tol * samples {
        return Err(WaveformError::NonCommensurate { periods: n_periods, ratio, samples });
    }
    Ok(rounded as usize)
}

/// Point samples of [`ideal_phase`] at `t_k = k/f_s` over `n_periods` ramps.
///
/// The record must be coherent: `n_periods·f_s/f_m` has to be an integer.
/// The ramp fraction at each sample is evaluated in exact integer arithmetic,
/// so samples at the wrap instants land exactly on the ramp start.
pub fn sample_ideal<T: Real>(
    spec: &SawtoothSpec<T>,
    f_s: T,
    n_periods: usize,
) -> Result<SampledWaveform<T>, WaveformError> {
    let len = coherent_length(spec.f_m, f_s, n_periods)?;
    let span = spec.phase_span();
    let half = T::lit(0.5);
    let len_t = T::from_count(len);
    let samples = (0..len)
        .map(|k| {
            let step = ((k as u128 * n_periods as u128) % len as u128) as usize;
            span * (T::from_count(step) / len_t - half)
        })
        .collect();
    Ok(SampledWaveform::new(f_s, samples, SignalUnit::Radians)?.into_coherent(n_periods))
}

/// Point samples of a sinusoidal phase modulation `depth·sin(2π f_m t)`.
pub fn sample_sine<T: Real>(
    depth: T,
    f_m: T,
    f_s: T,
    n_periods: usize,
) -> Result<SampledWaveform<T>, WaveformError> {
    let len = coherent_length(f_m, f_s, n_periods)?;
    let len_t = T::from_count(len);
    let samples = (0..len)
        .map(|k| {
            let step = ((k as u128 * n_periods as u128) % len as u128) as usize;
            depth * (T::TAU() * T::from_count(step) / len_t).sin()
        })
        .collect();
    Ok(SampledWaveform::new(f_s, samples, SignalUnit::Radians)?.into_coherent(n_periods))
}

/// Reconstruction used between DAC samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Straight line from each sample to the next, wrapping last to first.
    #[default]
    Linear,
    /// Each sample held for one DAC period.
    ZeroOrderHold,
}

/// Linear interpolation onto a grid `oversample` times finer.
pub fn interpolate<T: Real>(
    w: &SampledWaveform<T>,
    oversample: usize,
) -> Result<SampledWaveform<T>, WaveformError> {
    interpolate_with(w, oversample, Interpolation::Linear)
}

/// Resamples a periodic record onto a grid of rate `oversample·f_s`.
///
/// Output length is `oversample·L`; the segment after the last sample
/// interpolates back to the first one.
pub fn interpolate_with<T: Real>(
    w: &SampledWaveform<T>,
    oversample: usize,
    kind: Interpolation,
) -> Result<SampledWaveform<T>, WaveformError> {
    if oversample < 2 {
        return Err(WaveformError::InvalidOversample(oversample));
    }
    let src = w.samples();
    let len = src.len();
    let os_t = T::from_count(oversample);
    let mut out = Vec::with_capacity(len * oversample);
    for (k, &v) in src.iter().enumerate() {
        let next = src[(k + 1) % len];
        match kind {
            Interpolation::Linear => {
                let step = next - v;
                out.extend((0..oversample).map(|j| v + step * T::from_count(j) / os_t));
            }
            Interpolation::ZeroOrderHold => out.extend(std::iter::repeat_n(v, oversample)),
        }
    }
    Ok(SampledWaveform {
        sample_rate: w.sample_rate * os_t,
        samples: out,
        unit: w.unit,
        coherent_periods: w.coherent_periods,
    })
}

/// Accumulator increment for a ramp at `f_m`: `round(f_m/f_s · 2^32)`.
pub fn freq_to_inc<T: Real>(f_m: T, f_s: T) -> Result<u32, WaveformError> {
    let (fm, fs) = (f_m.to_f64_lossy(), f_s.to_f64_lossy());
    if !(fm > 0.0) || !(fs > 0.0) || fm >= fs / 2.0 {
        return Err(WaveformError::OutOfRange(format!(
            "f_m = {fm} Hz must satisfy 0 < f_m < f_s/2 = {} Hz",
            fs / 2.0
        )));
    }
    let inc = (fm / fs * ACC_MODULUS).round();
    if inc < 1.0 {
        return Err(WaveformError::OutOfRange(format!(
            "f_m = {fm} Hz is below the accumulator resolution f_s/2^32"
        )));
    }
    Ok(inc as u32)
}

/// Ramp frequency produced by increment `inc`: `inc·f_s/2^32`.
pub fn inc_to_freq<T: Real>(inc: u32, f_s: T) -> T {
    T::lit(inc as f64 * (f_s.to_f64_lossy() / ACC_MODULUS))
}

/// Register and datapath settings of the ramp generator core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampGenConfig<T> {
    /// Phase increment per output sample.
    pub inc: u32,
    /// Gain applied to the signed accumulator value.
    pub gain: u16,
    /// Samples computed per fabric clock cycle.
    pub lanes: usize,
    pub dac_bits: u32,
    pub sample_rate: T,
    /// Accumulator value of sample 0.
    pub acc0: u32,
}

impl<T: Real> RampGenConfig<T> {
    pub const DEFAULT_LANES: usize = 16;
    pub const DEFAULT_DAC_BITS: u32 = 14;
    pub const DEFAULT_SAMPLE_RATE: f64 = 9.85e9;

    /// 16 lanes, 14-bit DAC at 9.85 GS/s, accumulator seeded at 0.
    pub fn new(inc: u32, gain: u16) -> Self {
        Self {
            inc,
            gain,
            lanes: Self::DEFAULT_LANES,
            dac_bits: Self::DEFAULT_DAC_BITS,
            sample_rate: T::lit(Self::DEFAULT_SAMPLE_RATE),
            acc0: 0,
        }
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        if self.inc == 0 {
            return Err(WaveformError::InvalidRampGen("inc must be non-zero"));
        }
        if self.lanes == 0 {
            return Err(WaveformError::InvalidRampGen("lanes must be >= 1"));
        }
        if !(1..=16).contains(&self.dac_bits) {
            return Err(WaveformError::InvalidRampGen("dac_bits must be in 1..=16"));
        }
        if !(self.sample_rate > T::zero()) {
            return Err(WaveformError::InvalidRampGen("sample rate must be positive"));
        }
        Ok(())
    }

    /// Number of ramp periods in `n_samples` if the record closes exactly.
    pub fn coherent_periods(&self, n_samples: usize) -> Option<usize> {
        let total = n_samples as u128 * self.inc as u128;
        total.is_multiple_of(1u128 << 32).then_some((total >> 32) as usize)
    }
}

/// DAC code for one accumulator value: signed accumulator times gain, then
/// the top `dac_bits` of the 48-bit product by arithmetic shift (truncation).
#[inline]
pub fn dac_code(acc: u32, gain: u16, dac_bits: u32) -> i32 {
    let signed = acc as i64 - (1i64 << 31);
    let product = signed * gain as i64;
    (product >> (48 - dac_bits)) as i32
}

/// Accumulator values `acc_k = acc_0 + k·inc mod 2^32`.
pub fn accumulator_sequence<T: Real>(cfg: &RampGenConfig<T>, n_samples: usize) -> Vec<u32> {
    let mut acc = cfg.acc0;
    (0..n_samples)
        .map(|_| {
            let v = acc;
            acc = acc.wrapping_add(cfg.inc);
            v
        })
        .collect()
}

/// DAC codes computed one sample at a time.
pub fn rampgen_codes_scalar<T: Real>(cfg: &RampGenConfig<T>, n_samples: usize) -> Vec<i32> {
    accumulator_sequence(cfg, n_samples)
        .into_iter()
        .map(|acc| dac_code(acc, cfg.gain, cfg.dac_bits))
        .collect()
}

/// DAC codes computed the way the fabric does it: `lanes` accumulators
/// seeded at consecutive phases, each advancing by `lanes·inc` per clock.
pub fn rampgen_codes_lanes<T: Real>(cfg: &RampGenConfig<T>, n_samples: usize) -> Vec<i32> {
    let lanes = cfg.lanes.max(1);
    let stride = cfg.inc.wrapping_mul(lanes as u32);
    let mut lane_acc: Vec<u32> = (0..lanes)
        .map(|l| cfg.acc0.wrapping_add(cfg.inc.wrapping_mul(l as u32)))
        .collect();
    let mut out = Vec::with_capacity(n_samples);
    while out.len() < n_samples {
        for acc in lane_acc.iter_mut() {
            if out.len() == n_samples {
                break;
            }
            out.push(dac_code(*acc, cfg.gain, cfg.dac_bits));
            *acc = acc.wrapping_add(stride);
        }
    }
    out
}

/// Bit-accurate ramp generator output, normalized to `code / 2^(dac_bits−1)`.
pub fn rampgen_emulate<T: Real>(
    cfg: &RampGenConfig<T>,
    n_samples: usize,
) -> Result<SampledWaveform<T>, WaveformError> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(WaveformError::InvalidWaveform("n_samples must be >= 1"));
    }
    let full_scale = T::lit((1u64 << (cfg.dac_bits - 1)) as f64);
    let samples = rampgen_codes_lanes(cfg, n_samples)
        .into_iter()
        .map(|c| T::from_i32(c).unwrap() / full_scale)
        .collect();
    let mut w = SampledWaveform::new(cfg.sample_rate, samples, SignalUnit::Normalized)?;
    w.coherent_periods = cfg.coherent_periods(n_samples);
    Ok(w)
}

/// The same ramp without gain quantization or DAC truncation:
/// `(acc_k − 2^31)/2^31 · gain/2^16`.
pub fn rampgen_unquantized<T: Real>(
    cfg: &RampGenConfig<T>,
    n_samples: usize,
) -> Result<SampledWaveform<T>, WaveformError> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(WaveformError::InvalidWaveform("n_samples must be >= 1"));
    }
    let scale = cfg.gain as f64 / 65_536.0 / 2_147_483_648.0;
    let samples = accumulator_sequence(cfg, n_samples)
        .into_iter()
        .map(|acc| T::lit((acc as i64 - (1i64 << 31)) as f64 * scale))
        .collect();
    let mut w = SampledWaveform::new(cfg.sample_rate, samples, SignalUnit::Normalized)?;
    w.coherent_periods = cfg.coherent_periods(n_samples);
    Ok(w)
}

/// Strongest spectral line of the quantization error (emulated minus
/// unquantized ramp), in dB relative to the ramp fundamental.
///
/// The record must close on a whole number of ramp periods so every line
/// falls on a bin.
pub fn quantization_spur_dbc<T: Real>(cfg: &RampGenConfig<T>, n_samples: usize) -> Result<T, WaveformError> {
    let q = rampgen_emulate(cfg, n_samples)?;
    let u = rampgen_unquantized(cfg, n_samples)?;
    let periods = q
        .coherent_periods
        .ok_or(WaveformError::InvalidRampGen("record must hold a whole number of ramp periods"))?;
    if cfg.gain == 0 {
        return Err(WaveformError::InvalidRampGen("gain is zero, the ramp has no fundamental"));
    }
    let err: Vec<T> = q.samples.iter().zip(&u.samples).map(|(&a, &b)| a - b).collect();
    let e = crate::rf_chain::forward_dft(&err);
    let fundamental = crate::rf_chain::forward_dft(&u.samples)[periods % n_samples].norm_sqr();
    let worst = e[..=n_samples / 2].iter().fold(T::zero(), |m, c| m.max(c.norm_sqr()));
    Ok(T::lit(10.0) * (worst / fundamental).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(n: u32, a: f64) -> SawtoothSpec<f64> {
        SawtoothSpec::new(1e8, n, 1.6, a).unwrap()
    }

    #[test]
    fn ideal_phase_ramp_points() {
        let s = spec(1, 1.0);
        assert_eq!(ideal_phase(&s, 0.0), -PI);
        assert!(ideal_phase(&s, 0.5 / 1e8).abs() < 1e-15);
        let s3 = spec(3, 1.0);
        let near_end = ideal_phase(&s3, (1.0 - 1e-12) / 1e8);
        assert!((near_end - 3.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn ideal_voltage_peak_to_peak_is_2n_vpi() {
        let s = spec(2, 1.0);
        let lo = ideal_voltage(&s, 0.0);
        let hi = ideal_voltage(&s, (1.0 - 1e-13) / 1e8);
        assert!((hi - lo - 2.0 * 2.0 * 1.6).abs() < 1e-9);
    }

    #[test]
    fn spec_rejects_bad_fields() {
        assert!(SawtoothSpec::new(0.0, 1, 1.0, 1.0).is_err());
        assert!(SawtoothSpec::new(1.0, 0, 1.0, 1.0).is_err());
        assert!(SawtoothSpec::new(1.0, 1, -1.0, 1.0).is_err());
        assert!(SawtoothSpec::new(1.0, 1, 1.0, -0.1).is_err());
        assert!(SawtoothSpec::new(f64::NAN, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn quarter_rate_samples() {
        let s = SawtoothSpec::unit(1.0, 1).unwrap();
        let w = sample_ideal(&s, 4.0, 1).unwrap();
        assert_eq!(w.samples(), &[-PI, -PI / 2.0, 0.0, PI / 2.0]);
        assert_eq!(w.coherent_periods(), Some(1));
        assert_eq!(w.unit(), SignalUnit::Radians);
    }

    #[test]
    fn nyquist_edge_rejected() {
        let s = SawtoothSpec::unit(2.0, 1).unwrap();
        assert!(matches!(sample_ideal(&s, 4.0, 1), Err(WaveformError::AboveNyquist { .. })));
    }

    #[test]
    fn record_length_for_paper_rate() {
        let s = spec(1, 1.0);
        let w = sample_ideal(&s, 9.85e9, 20).unwrap();
        assert_eq!(w.len(), 1970);
    }

    #[test]
    fn non_commensurate_rejected() {
        let s = SawtoothSpec::unit(3.0, 1).unwrap();
        assert!(matches!(
            sample_ideal(&s, 10.0, 1),
            Err(WaveformError::NonCommensurate { .. })
        ));
        assert_eq!(sample_ideal(&s, 10.0, 3).unwrap().len(), 10);
    }

    #[test]
    fn interpolate_constant_and_pair() {
        let w = SampledWaveform::new(1.0, vec![2.5; 3], SignalUnit::Volts).unwrap();
        let up = interpolate(&w, 4).unwrap();
        assert_eq!(up.len(), 12);
        assert!(up.samples().iter().all(|&v| v == 2.5));
        assert_eq!(up.sample_rate(), 4.0);

        let w = SampledWaveform::new(1.0, vec![0.0, 1.0], SignalUnit::Volts).unwrap();
        assert_eq!(interpolate(&w, 2).unwrap().samples(), &[0.0, 0.5, 1.0, 0.5]);
    }

    #[test]
    fn zero_order_hold_repeats() {
        let w = SampledWaveform::new(1.0, vec![0.0, 1.0], SignalUnit::Volts).unwrap();
        let up = interpolate_with(&w, 3, Interpolation::ZeroOrderHold).unwrap();
        assert_eq!(up.samples(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn interpolate_rejects_small_factor() {
        let w = SampledWaveform::new(1.0, vec![0.0, 1.0], SignalUnit::Volts).unwrap();
        assert_eq!(interpolate(&w, 1), Err(WaveformError::InvalidOversample(1)));
    }

    #[test]
    fn interpolated_sawtooth_step_bound() {
        let s = SawtoothSpec::unit(1.0, 1).unwrap();
        let w = sample_ideal(&s, 37.0, 3).unwrap();
        let max_step = |v: &[f64]| {
            (0..v.len())
                .map(|k| (v[(k + 1) % v.len()] - v[k]).abs())
                .fold(0.0, f64::max)
        };
        let up = interpolate(&w, 8).unwrap();
        assert!(max_step(up.samples()) <= max_step(w.samples()) / 8.0 + 1e-12);
    }

    #[test]
    fn quantization_spur_floor() {
        let cfg = RampGenConfig::<f64>::new(1 << 28, u16::MAX);
        let dbc = quantization_spur_dbc(&cfg, 1 << 12).unwrap();
        assert!(dbc < -60.0, "{dbc}");
        // golden value from this emulator
        assert!((dbc - -75.407_254_450_360_77).abs() < 1e-9, "{dbc}");
        let coarse = RampGenConfig::<f64> { dac_bits: 8, ..cfg };
        assert!(quantization_spur_dbc(&coarse, 1 << 12).unwrap() > dbc + 30.0);
        assert!(quantization_spur_dbc(&RampGenConfig::<f64>::new(1 << 28, 0), 64).is_err());
        assert!(quantization_spur_dbc(&RampGenConfig::<f64>::new(3, u16::MAX), 64).is_err());
    }

    #[test]
    fn inc_register_mapping() {
        assert_eq!(freq_to_inc(1.0, 4.0).unwrap(), 1 << 30);
        assert_eq!(freq_to_inc(1.0, 16.0).unwrap(), 1 << 28);
        // 1e8 / 9.85e9 · 2^32 = 43_603_728.89…
        assert_eq!(freq_to_inc(1e8, 9.85e9).unwrap(), 43_603_729);
        assert!(freq_to_inc(2.0, 4.0).is_err());
        assert!(freq_to_inc(0.0, 4.0).is_err());
    }

    #[test]
    fn rampgen_hand_trace() {
        let cfg = RampGenConfig::<f64> { sample_rate: 4.0, ..RampGenConfig::new(1 << 30, 1 << 15) };
        let w = rampgen_emulate(&cfg, 4).unwrap();
        // gain 2^15 is half of the 2^16 full-scale multiplier
        assert_eq!(w.samples(), &[-0.5, -0.25, 0.0, 0.25]);
        assert_eq!(w.coherent_periods(), Some(1));

        let cfg = RampGenConfig::<f64> { gain: u16::MAX, ..cfg };
        let w = rampgen_emulate(&cfg, 4).unwrap();
        assert_eq!(&w.samples()[..3], &[-1.0, -0.5, 0.0]);
        assert_eq!(w.samples()[3], 4095.0 / 8192.0);
    }

    #[test]
    fn rampgen_zero_gain() {
        let cfg = RampGenConfig::<f64>::new(12_345_678, 0);
        let w = rampgen_emulate(&cfg, 100).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rampgen_rejects_bad_config() {
        let cfg = RampGenConfig::<f64>::new(0, 1);
        assert!(rampgen_emulate(&cfg, 10).is_err());
        let cfg = RampGenConfig::<f64> { dac_bits: 17, ..RampGenConfig::new(1, 1) };
        assert!(rampgen_emulate(&cfg, 10).is_err());
        let cfg = RampGenConfig::<f64>::new(1, 1);
        assert!(rampgen_emulate(&cfg, 0).is_err());
    }

    #[test]
    fn seeded_accumulator() {
        let cfg = RampGenConfig::<f64> { acc0: 1 << 31, ..RampGenConfig::new(1 << 30, 1 << 15) };
        assert_eq!(rampgen_codes_scalar(&cfg, 2), vec![0, 2048]);
        assert_eq!(rampgen_codes_lanes(&cfg, 2), vec![0, 2048]);
    }

    #[test]
    fn generic_over_f32() {
        let s = SawtoothSpec::<f32>::unit(1.0, 1).unwrap();
        let w = sample_ideal(&s, 4.0, 1).unwrap();
        assert_eq!(w.samples()[0], -std::f32::consts::PI);
    }

    proptest! {
        #[test]
        fn ideal_phase_is_periodic(k in 0u32..10_000, n in 1u32..4) {
            // dyadic frequency and time keep t and t + 1/f_m exactly representable
            let s = SawtoothSpec::new(0.25, n, 1.0, 1.0).unwrap();
            let t = k as f64 * 0.125;
            prop_assert_eq!(ideal_phase(&s, t), ideal_phase(&s, t + 4.0));
        }

        #[test]
        fn sampled_mean_is_small(periods in 1usize..8, per in 4usize..64, n in 1u32..4, a in 0.1f64..2.0) {
            let len = periods * per + 1;
            let s = SawtoothSpec::new(periods as f64, n, 1.0, a).unwrap();
            let w = sample_ideal(&s, len as f64, periods).unwrap();
            let mean = w.samples().iter().sum::<f64>() / len as f64;
            prop_assert!(mean.abs() <= 2.0 * PI * n as f64 * a / len as f64 + 1e-12);
        }

        #[test]
        fn accumulator_difference(inc in 1u32.., acc0 in any::<u32>(), len in 1usize..500) {
            let cfg = RampGenConfig::<f64> { acc0, ..RampGenConfig::new(inc, 1) };
            let acc = accumulator_sequence(&cfg, len);
            prop_assert_eq!(acc[0], acc0);
            for pair in acc.windows(2) {
                prop_assert_eq!(pair[1].wrapping_sub(pair[0]), inc);
            }
        }

        #[test]
        fn lanes_match_scalar(inc in 1u32.., gain in any::<u16>(), lanes in 1usize..20, len in 1usize..300) {
            let cfg = RampGenConfig::<f64> { lanes, ..RampGenConfig::new(inc, gain) };
            prop_assert_eq!(rampgen_codes_scalar(&cfg, len), rampgen_codes_lanes(&cfg, len));
        }

        #[test]
        fn monotone_between_wraps(inc in 1_000u32..50_000_000, gain in 1u16..) {
            let cfg = RampGenConfig::<f64>::new(inc, gain);
            let len = 4096;
            let acc = accumulator_sequence(&cfg, len);
            let codes = rampgen_codes_scalar(&cfg, len);
            let mut wraps = 0usize;
            for k in 0..len - 1 {
                if acc[k + 1] < acc[k] {
                    wraps += 1;
                } else {
                    prop_assert!(codes[k + 1] >= codes[k]);
                }
            }
            // len samples span len − 1 increments
            let expected = (len - 1) as f64 * inc as f64 / ACC_MODULUS;
            prop_assert!((wraps as f64 - expected).abs() <= 1.0);
        }

        #[test]
        fn inc_round_trip(f_m in 1e3f64..4.9e9) {
            let fs = 9.85e9;
            let inc = freq_to_inc(f_m, fs).unwrap();
            prop_assert!((inc_to_freq(inc, fs) - f_m).abs() < fs / 2f64.powi(33));
        }
    }
}
