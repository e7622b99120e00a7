//! PDH offset locking against a misaligned Fabry-Pérot cavity.
//!
//! A misaligned probe couples into higher-order transverse modes that sit at
//! `ν₀₀ + k·ν_h` above every fundamental mode. Spectral features of the
//! offset laser other than the locked one can overlap those modes (or other
//! fundamental modes `TEM_{q,00}` one or more FSR away) and add their own
//! dispersive error signal, pulling the lock point. This module computes
//! that pull for arbitrary laser spectra, plus the closed-form worst case and
//! the half-power dynamic-range rule for swept offsets.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use thiserror::Error;

use crate::search::bisect;
use crate::special::bessel_j;
use crate::spectral::SweepRow;
use crate::Real;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Half-width of the feature–mode interaction window, in cavity linewidths.
pub const INTERACTION_WINDOW_LINEWIDTHS: f64 = 20.0;

/// Bisection tolerance on the lock point, in cavity linewidths.
pub const ROOT_TOLERANCE_LINEWIDTHS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdhError {
    #[error("unstable cavity: (1 - d/R1)(1 - d/R2) = {g} lies outside [0, 1] (d = {length} m, R1 = {r1} m, R2 = {r2} m)")]
    UnstableCavity { g: f64, length: f64, r1: f64, r2: f64 },
    #[error("invalid cavity: {0}")]
    InvalidCavity(String),
    #[error("invalid PDH configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid laser spectrum: {0}")]
    InvalidLaser(String),
    #[error("no lock point within ±linewidth/2 at f_m = {f_m} Hz")]
    NoLockPoint { f_m: f64 },
    #[error("f1 = {f1} Hz lies outside the gain curve [{lo}, {hi}] Hz")]
    F1OutOfRange { f1: f64, lo: f64, hi: f64 },
}

/// Transverse mode spacing `ν_h = (ν_FSR/π)·arccos√((1−d/R1)(1−d/R2))`.
///
/// Mirror radii may be `+∞` for planar mirrors.
pub fn transverse_mode_spacing<T: Real>(length: T, r1: T, r2: T) -> Result<T, PdhError> {
    let g = (T::one() - length / r1) * (T::one() - length / r2);
    if !(g >= T::zero() && g <= T::one()) {
        return Err(PdhError::UnstableCavity {
            g: g.to_f64_lossy(),
            length: length.to_f64_lossy(),
            r1: r1.to_f64_lossy(),
            r2: r2.to_f64_lossy(),
        });
    }
    let fsr = T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * length);
    Ok(fsr / T::PI() * g.sqrt().acos())
}

/// Cavity geometry, linewidth and alignment contrasts.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityModel<T> {
    length: T,
    r1: T,
    r2: T,
    linewidth: T,
    /// `C_k = V₀₀/V_k` for the mode family `k·ν_h` above each fundamental.
    /// Families missing from the map do not couple.
    contrasts: BTreeMap<u32, T>,
    fsr: T,
    nu_h: T,
}

impl<T: Real> CavityModel<T> {
    pub fn new(length: T, r1: T, r2: T, linewidth: T) -> Result<Self, PdhError> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(PdhError::InvalidCavity(format!("length must be positive, got {length}")));
        }
        if !(linewidth > T::zero()) || !linewidth.is_finite() {
            return Err(PdhError::InvalidCavity(format!("linewidth must be positive, got {linewidth}")));
        }
        if r1.is_nan() || r2.is_nan() || r1 == T::zero() || r2 == T::zero() {
            return Err(PdhError::InvalidCavity("mirror radii must be non-zero".into()));
        }
        let nu_h = transverse_mode_spacing(length, r1, r2)?;
        let fsr = T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * length);
        Ok(Self { length, r1, r2, linewidth, contrasts: BTreeMap::new(), fsr, nu_h })
    }

    pub fn with_contrast(mut self, k: u32, contrast: T) -> Result<Self, PdhError> {
        if k == 0 {
            return Err(PdhError::InvalidCavity("contrast index k must be >= 1".into()));
        }
        if !(contrast >= T::one()) || !contrast.is_finite() {
            return Err(PdhError::InvalidCavity(format!("contrast C_{k} must be >= 1, got {contrast}")));
        }
        self.contrasts.insert(k, contrast);
        Ok(self)
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn mirror_radii(&self) -> (T, T) {
        (self.r1, self.r2)
    }

    pub fn linewidth(&self) -> T {
        self.linewidth
    }

    pub fn contrasts(&self) -> &BTreeMap<u32, T> {
        &self.contrasts
    }

    /// `ν_FSR = c/2d`.
    pub fn fsr(&self) -> T {
        self.fsr
    }

    /// `ν_h`, see [`transverse_mode_spacing`].
    pub fn transverse_spacing(&self) -> T {
        self.nu_h
    }

    /// Coupling weight `1/C_k` (1 for the fundamental), `None` if absent.
    pub fn mode_weight(&self, k: u32) -> Option<T> {
        if k == 0 {
            Some(T::one())
        } else {
            self.contrasts.get(&k).map(|&c| T::one() / c)
        }
    }

    /// Mode families present: 0 plus every `k` with a contrast.
    pub fn families(&self) -> impl Iterator<Item = u32> + '_ {
        std::iter::once(0).chain(self.contrasts.keys().copied())
    }

    pub fn mode_frequency(&self, mode: CavityMode) -> T {
        T::from_i64(mode.q).unwrap() * self.fsr + T::from_u32(mode.k).unwrap() * self.nu_h
    }

    /// Modes whose resonance lies within `[lo, hi]` (relative to `ν_{0,00}`).
    pub fn modes_in(&self, lo: T, hi: T) -> Vec<CavityMode> {
        let mut out = Vec::new();
        for k in self.families() {
            let base = T::from_u32(k).unwrap() * self.nu_h;
            let q_lo = ((lo - base) / self.fsr).ceil().to_i64().unwrap_or(0);
            let q_hi = ((hi - base) / self.fsr).floor().to_i64().unwrap_or(-1);
            out.extend((q_lo..=q_hi).map(|q| CavityMode { q, k }));
        }
        out.sort_by(|a, b| self.mode_frequency(*a).partial_cmp(&self.mode_frequency(*b)).unwrap());
        out
    }
}

/// `ν_h` of a cavity; the geometry was validated on construction.
pub fn higher_order_mode_offset<T: Real>(cavity: &CavityModel<T>) -> T {
    cavity.transverse_spacing()
}

/// Cavity resonance `TEM_{q}` of transverse order `k`, at `q·ν_FSR + k·ν_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CavityMode {
    pub q: i64,
    pub k: u32,
}

fn lorentzian<T: Real>(x: T, centre: T, linewidth: T) -> T {
    let u = (x - centre) / (linewidth * T::lit(0.5));
    T::one() / (T::one() + u * u)
}

/// Transmitted photodetector voltage while scanning the probe across `grid`
/// (Hz relative to `ν_{0,00}`).
///
/// Every mode family contributes a Lorentzian of FWHM `δν_c` at
/// `n·ν_FSR + k·ν_h` weighted by `1/C_k`. The FSR sum covers the grid span
/// padded by two FSR (at least ten linewidths), which keeps truncated tails
/// far below 10⁻⁶·V₀₀.
pub fn transmission_spectrum<T: Real>(cavity: &CavityModel<T>, v00: T, grid: &[T]) -> Vec<T> {
    if grid.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = grid
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let pad = (cavity.fsr * T::lit(2.0)).max(cavity.linewidth * T::lit(10.0));
    let modes: Vec<(T, T)> = cavity
        .modes_in(lo - pad, hi + pad)
        .into_iter()
        .map(|m| (cavity.mode_frequency(m), cavity.mode_weight(m.k).unwrap()))
        .collect();
    grid.iter()
        .map(|&x| {
            v00 * modes
                .iter()
                .fold(T::zero(), |acc, &(f, w)| acc + w * lorentzian(x, f, cavity.linewidth))
        })
        .collect()
}

/// PDH modulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhConfig<T> {
    /// `Ω/2π` (Hz).
    pub mod_freq: T,
    /// Phase-modulation depth `β` (rad).
    pub depth: T,
    /// Cavity FWHM `δν_c` (Hz).
    pub linewidth: T,
}

impl<T: Real> PdhConfig<T> {
    pub fn new(mod_freq: T, depth: T, linewidth: T) -> Result<Self, PdhError> {
        if !(mod_freq > T::zero()) || !mod_freq.is_finite() {
            return Err(PdhError::InvalidConfig("modulation frequency must be positive"));
        }
        if !(depth > T::zero()) || !depth.is_finite() {
            return Err(PdhError::InvalidConfig("modulation depth must be positive"));
        }
        if !(linewidth > T::zero()) || !linewidth.is_finite() {
            return Err(PdhError::InvalidConfig("linewidth must be positive"));
        }
        Ok(Self { mod_freq, depth, linewidth })
    }

    pub fn for_cavity(cavity: &CavityModel<T>, mod_freq: T, depth: T) -> Result<Self, PdhError> {
        Self::new(mod_freq, depth, cavity.linewidth())
    }
}

/// Error-signal value at one detuning and the lock slope at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhResponse<T> {
    pub value: T,
    /// `k_e = dε/dΔ` at `Δ = 0` (1/Hz).
    pub slope: T,
}

/// Reflection-PDH discriminant of a single Lorentzian resonance.
///
/// With `F(Δ) = (iΔ/γ)/(1 + iΔ/γ)`, `γ = δν_c/2`, the error is
/// `J₀(β)J₁(β)·Im[F(Δ)F*(Δ+Ω) − F*(Δ)F(Δ−Ω)]`, positive slope at lock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhDiscriminant<T> {
    gamma: T,
    mod_freq: T,
    gain: T,
    slope: T,
}

impl<T: Real> PdhDiscriminant<T> {
    pub fn new(cfg: &PdhConfig<T>) -> Self {
        let gamma = cfg.linewidth * T::lit(0.5);
        let gain = bessel_j(0, cfg.depth) * bessel_j(1, cfg.depth);
        // dε/dΔ at 0 = gain·(2/γ)·Re F(Ω)
        let x = cfg.mod_freq / gamma;
        let slope = gain * T::lit(2.0) / gamma * (x * x / (T::one() + x * x));
        Self { gamma, mod_freq: cfg.mod_freq, gain, slope }
    }

    fn reflection(&self, detuning: T) -> Complex<T> {
        let z = Complex::new(T::zero(), detuning / self.gamma);
        z / (Complex::new(T::one(), T::zero()) + z)
    }

    pub fn value(&self, detuning: T) -> T {
        let f0 = self.reflection(detuning);
        let fp = self.reflection(detuning + self.mod_freq);
        let fm = self.reflection(detuning - self.mod_freq);
        self.gain * (f0 * fp.conj() - f0.conj() * fm).im
    }

    pub fn slope(&self) -> T {
        self.slope
    }
}

/// Error signal at `detuning` and the lock slope `k_e`.
pub fn pdh_error<T: Real>(detuning: T, cfg: &PdhConfig<T>) -> PdhResponse<T> {
    let d = PdhDiscriminant::new(cfg);
    PdhResponse { value: d.value(detuning), slope: d.slope() }
}

/// Closed-form worst-case lock shift `(1/C_k)·(P′/P₀₀)·(δν_c/2)`.
///
/// Assumes the spurious error signal reaches `k_e′·δν_c/2`; the full
/// reflection discriminant peaks at about half of that when `Ω ≫ δν_c`.
pub fn lock_shift_worst_case<T: Real>(contrast: T, power_ratio: T, linewidth: T) -> T {
    power_ratio / contrast * linewidth * T::lit(0.5)
}

/// One discrete line of the offset laser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeature<T> {
    /// Harmonic order of the EOM drive (0 = optical carrier).
    pub order: i32,
    /// Power relative to the lock-target feature.
    pub power: T,
}

/// Discrete optical spectrum of the offset laser.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserSpectrumModel<T> {
    features: Vec<SpectralFeature<T>>,
    target_order: i32,
}

impl<T: Real> LaserSpectrumModel<T> {
    pub fn new(features: Vec<SpectralFeature<T>>, target_order: i32) -> Result<Self, PdhError> {
        if features.iter().any(|f| !(f.power >= T::zero()) || !f.power.is_finite()) {
            return Err(PdhError::InvalidLaser("feature powers must be finite and non-negative".into()));
        }
        let targets: Vec<_> = features.iter().filter(|f| f.order == target_order).collect();
        if targets.len() != 1 || targets[0].power != T::one() {
            return Err(PdhError::InvalidLaser(format!(
                "exactly one feature of order {target_order} with relative power 1 is required"
            )));
        }
        Ok(Self { features, target_order })
    }

    /// Lock target alone, no spurs.
    pub fn target_only() -> Self {
        Self { features: vec![SpectralFeature { order: 1, power: T::one() }], target_order: 1 }
    }

    /// Serrodyne spectrum with spur levels as observed on the bench:
    /// orders 0 and +2 at −13 dB, −1 and +3 at −16 dB relative to +1.
    pub fn serrodyne_measured() -> Self {
        let db = |x: f64| T::lit(10f64.powf(x / 10.0));
        let features = vec![
            SpectralFeature { order: -1, power: db(-16.0) },
            SpectralFeature { order: 0, power: db(-13.0) },
            SpectralFeature { order: 1, power: T::one() },
            SpectralFeature { order: 2, power: db(-13.0) },
            SpectralFeature { order: 3, power: db(-16.0) },
        ];
        Self { features, target_order: 1 }
    }

    pub fn features(&self) -> &[SpectralFeature<T>] {
        &self.features
    }

    pub fn target_order(&self) -> i32 {
        self.target_order
    }

    /// Frequency of `feature` relative to the lock target, in units of `f_m`.
    pub fn offset_of(&self, feature: &SpectralFeature<T>) -> i32 {
        feature.order - self.target_order
    }

    /// Every non-target power multiplied by `factor`.
    pub fn with_spurs_scaled(&self, factor: T) -> Self {
        let features = self
            .features
            .iter()
            .map(|f| SpectralFeature {
                order: f.order,
                power: if f.order == self.target_order { f.power } else { f.power * factor },
            })
            .collect();
        Self { features, target_order: self.target_order }
    }
}

/// Single-tone (DSB) spectrum at depth `β`: orders −2..=+2 with powers
/// `J_k(β)²` relative to the +1 sideband.
pub fn dsb_spectrum<T: Real>(depth: T) -> Result<LaserSpectrumModel<T>, PdhError> {
    if !(depth > T::zero()) || !depth.is_finite() {
        return Err(PdhError::InvalidLaser("modulation depth must be positive".into()));
    }
    let j1 = bessel_j(1, depth);
    let p1 = j1 * j1;
    let features = (-2..=2)
        .map(|k| {
            let j = bessel_j(k, depth);
            SpectralFeature { order: k, power: if k == 1 { T::one() } else { j * j / p1 } }
        })
        .collect();
    LaserSpectrumModel::new(features, 1)
}

/// A laser feature near a cavity resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction<T> {
    pub order: i32,
    pub mode: CavityMode,
    /// Feature frequency minus mode frequency at zero lock shift (Hz).
    pub detuning: T,
    /// `P_feature/C_mode`.
    pub weight: T,
}

/// Lock point of one offset frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct LockShift<T> {
    /// Laser detuning at which the summed error signal vanishes (Hz).
    pub dxi: T,
    pub dxi_over_linewidth: T,
    pub interactions: Vec<Interaction<T>>,
}

impl<T: Real> LockShift<T> {
    /// Sum of closed-form worst cases over every interaction except the
    /// lock target on `TEM_{0,00}`.
    pub fn worst_case_bound(&self, target_order: i32, linewidth: T) -> T {
        self.interactions
            .iter()
            .filter(|i| !(i.order == target_order && i.mode == CavityMode { q: 0, k: 0 }))
            .fold(T::zero(), |acc, i| acc + i.weight * linewidth * T::lit(0.5))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockShiftRow<T> {
    pub f_m: T,
    pub result: Result<LockShift<T>, PdhError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockShiftCurve<T> {
    pub linewidth: T,
    pub rows: Vec<LockShiftRow<T>>,
}

impl<T: Real> LockShiftCurve<T> {
    /// Largest `|Δξ|` over rows that locked.
    pub fn max_abs_shift(&self) -> T {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().ok())
            .fold(T::zero(), |acc, s| acc.max(s.dxi.abs()))
    }
}

/// Feature–mode pairs within the interaction window at offset `f_m`.
pub fn interactions<T: Real>(
    f_m: T,
    cavity: &CavityModel<T>,
    laser: &LaserSpectrumModel<T>,
    window: T,
) -> Vec<Interaction<T>> {
    let mut out = Vec::new();
    for feature in laser.features() {
        if feature.power == T::zero() {
            continue;
        }
        let x = T::from_i32(laser.offset_of(feature)).unwrap() * f_m;
        for mode in cavity.modes_in(x - window, x + window) {
            out.push(Interaction {
                order: feature.order,
                mode,
                detuning: x - cavity.mode_frequency(mode),
                weight: feature.power * cavity.mode_weight(mode.k).unwrap(),
            });
        }
    }
    out
}

/// Lock point at a single offset frequency.
pub fn lock_shift_at<T: Real>(
    f_m: T,
    cavity: &CavityModel<T>,
    laser: &LaserSpectrumModel<T>,
    cfg: &PdhConfig<T>,
) -> Result<LockShift<T>, PdhError> {
    let lw = cfg.linewidth;
    let pairs = interactions(f_m, cavity, laser, lw * T::lit(INTERACTION_WINDOW_LINEWIDTHS));
    let disc = PdhDiscriminant::new(cfg);
    let total = |shift: T| {
        pairs
            .iter()
            .fold(T::zero(), |acc, p| acc + p.weight * disc.value(p.detuning + shift))
    };
    let half = lw * T::lit(0.5);
    let dxi = bisect(total, -half, half, lw * T::lit(ROOT_TOLERANCE_LINEWIDTHS))
        .ok_or(PdhError::NoLockPoint { f_m: f_m.to_f64_lossy() })?;
    Ok(LockShift { dxi, dxi_over_linewidth: dxi / lw, interactions: pairs })
}

/// Lock shift across a list of offset frequencies (the laser carrier sits
/// `f_m` below `TEM_{0,00}` and the target feature is locked to it).
pub fn lock_shift_sweep<T: Real>(
    f_ms: &[T],
    cavity: &CavityModel<T>,
    laser: &LaserSpectrumModel<T>,
    cfg: &PdhConfig<T>,
) -> LockShiftCurve<T> {
    let rows = f_ms
        .par_iter()
        .map(|&f_m| LockShiftRow { f_m, result: lock_shift_at(f_m, cavity, laser, cfg) })
        .collect();
    LockShiftCurve { linewidth: cfg.linewidth, rows }
}

/// Offset grid for a lock-shift sweep: a uniform `coarse_step` grid over
/// `[lo, hi]` refined to `detuning_step` (in feature detuning) across the
/// interaction window of every feature–mode resonance in range.
pub fn resonance_grid<T: Real>(
    lo: T,
    hi: T,
    coarse_step: T,
    detuning_step: T,
    cavity: &CavityModel<T>,
    laser: &LaserSpectrumModel<T>,
) -> Vec<T> {
    let mut grid = Vec::new();
    if !(hi >= lo) || !(coarse_step > T::zero()) || !(detuning_step > T::zero()) {
        return grid;
    }
    let n = ((hi - lo) / coarse_step).floor().to_usize().unwrap_or(0);
    grid.extend((0..=n).map(|i| lo + coarse_step * T::from_count(i)));
    if grid.last() != Some(&hi) {
        grid.push(hi);
    }
    let window = cavity.linewidth() * T::lit(INTERACTION_WINDOW_LINEWIDTHS);
    let per_side = (window / detuning_step).floor().to_i64().unwrap_or(0);
    for feature in laser.features() {
        let o = laser.offset_of(feature);
        if o == 0 || feature.power == T::zero() {
            continue;
        }
        let o_t = T::from_i32(o).unwrap();
        let (a, b) = if o > 0 { (o_t * lo, o_t * hi) } else { (o_t * hi, o_t * lo) };
        for mode in cavity.modes_in(a - window, b + window) {
            let centre = cavity.mode_frequency(mode) / o_t;
            for j in -per_side..=per_side {
                let f = centre + T::from_i64(j).unwrap() * detuning_step / o_t.abs();
                if f >= lo && f <= hi {
                    grid.push(f);
                }
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// Upper offset `f2` at which the shifted power has halved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRange<T> {
    pub f1: T,
    pub f2: T,
    /// False when the power never halves; `f2` is then the curve's upper edge.
    pub reached: bool,
}

/// Smallest `f2 > f1` with `P(f2)/P(f1) = 1/2`, linearly interpolating the
/// shifted power `10^(−loss/10)` between sweep rows.
pub fn dynamic_range<T: Real>(gain_curve: &[SweepRow<T>], f1: T) -> Result<DynamicRange<T>, PdhError> {
    let mut pts: Vec<(T, T)> = gain_curve.iter().map(|r| (r.f_m, r.metrics.shifted_power())).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let out_of_range = || PdhError::F1OutOfRange {
        f1: f1.to_f64_lossy(),
        lo: pts.first().map_or(f64::NAN, |p| p.0.to_f64_lossy()),
        hi: pts.last().map_or(f64::NAN, |p| p.0.to_f64_lossy()),
    };
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(out_of_range()),
    };
    if f1 < first.0 || f1 > last.0 {
        return Err(out_of_range());
    }
    let start = pts.partition_point(|p| p.0 <= f1);
    let p1 = if start == pts.len() {
        last.1
    } else {
        let (a, b) = (pts[start - 1], pts[start]);
        a.1 + (b.1 - a.1) * (f1 - a.0) / (b.0 - a.0)
    };
    let half = p1 * T::lit(0.5);
    let mut prev = (f1, p1);
    for &(f, p) in &pts[start..] {
        if p <= half {
            let f2 = if prev.1 == p { f } else { prev.0 + (f - prev.0) * (prev.1 - half) / (prev.1 - p) };
            return Ok(DynamicRange { f1, f2, reached: true });
        }
        prev = (f, p);
    }
    Ok(DynamicRange { f1, f2: last.0, reached: false })
}
