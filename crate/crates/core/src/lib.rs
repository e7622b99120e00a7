//! Serrodyne optical frequency shifting and PDH offset-lock simulation.
//!
//! The crate models the path from an RF sawtooth drive through a measured
//! RF chain and an electro-optic phase modulator to the optical spectrum,
//! and the lock-point pull that residual spectral features cause in a
//! Pound-Drever-Hall lock to a misaligned cavity.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases below name the common concrete types.

// `!(x > 0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod pdh;
pub mod rf_chain;
pub mod scalar;
pub mod search;
pub mod special;
pub mod spectral;
pub mod table;
pub mod waveform;

pub use scalar::Real;

pub use pdh::{
    dynamic_range, lock_shift_sweep, lock_shift_worst_case, pdh_error, transmission_spectrum,
    CavityModel, LaserSpectrumModel, PdhConfig, PdhError,
};
pub use rf_chain::{apply, load_table, synth_bandpass, RfChainError, TransferFunction};
pub use spectral::{
    extract_bands, metrics, modulate, optimize_amplitude, sweep, ModelConfig, OpticalSpectrum,
    ShiftMetrics, SpectralError,
};
pub use waveform::{
    interpolate, rampgen_emulate, sample_ideal, RampGenConfig, SampledWaveform, SawtoothSpec,
    WaveformError,
};

pub type SawtoothSpecF64 = SawtoothSpec<f64>;
pub type SawtoothSpecF32 = SawtoothSpec<f32>;
pub type SampledWaveformF64 = SampledWaveform<f64>;
pub type SampledWaveformF32 = SampledWaveform<f32>;
pub type RampGenConfigF64 = RampGenConfig<f64>;
pub type TransferFunctionF64 = TransferFunction<f64>;
pub type TransferFunctionF32 = TransferFunction<f32>;
pub type OpticalSpectrumF64 = OpticalSpectrum<f64>;
pub type OpticalSpectrumF32 = OpticalSpectrum<f32>;
pub type ModelConfigF64 = ModelConfig<f64>;
pub type ModelConfigF32 = ModelConfig<f32>;
pub type CavityModelF64 = CavityModel<f64>;
pub type PdhConfigF64 = PdhConfig<f64>;
pub type LaserSpectrumModelF64 = LaserSpectrumModel<f64>;
