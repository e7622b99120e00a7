//! Subcommand bodies. Each returns the text destined for `--out` or stdout.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;

use serrodyne::pdh::{
    dsb_spectrum, dynamic_range, lock_shift_sweep, pdh_error, resonance_grid, CavityModel, LaserSpectrumModel,
    PdhConfig, PdhError,
};
use serrodyne::rf_chain::{self, load_table, synth_bandpass, TransferFunction};
use serrodyne::spectral::{
    extract_bands, metrics, modulate, optimize_amplitude, plan_record, sweep as run_sweep, BandPredicate, ModelConfig,
    SweepRow,
};
use serrodyne::table::{
    cavity_report, emit_band_footer, emit_lock_shift_with, emit_sweep_with, LockShiftRecord, SweepRecord, SCHEMA_LINE,
};
use serrodyne::waveform::{
    freq_to_inc, inc_to_freq, quantization_spur_dbc, rampgen_codes_lanes, rampgen_emulate, RampGenConfig,
    SawtoothSpec, SignalUnit,
};

use crate::config::{CliError, LaserSpec, Settings, TfSource};

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn config<E: std::fmt::Display>(field: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Config(format!("{field}: {e}"))
}

fn load_tf(s: &Settings) -> Result<TransferFunction<f64>, CliError> {
    match &s.tf {
        TfSource::Flat => Ok(TransferFunction::flat(0.0)),
        TfSource::Bandpass { f_lo, f_hi } => synth_bandpass(*f_lo, *f_hi).map_err(config("tf")),
        TfSource::File(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("tf: cannot open {}: {e}", path.display())))?;
            let name = path.display().to_string();
            load_table(BufReader::new(file), &name)
                .map(|tf| tf.with_source(name.clone()))
                .map_err(|e| CliError::Config(format!("tf: {name}: {e}")))
        }
    }
}

fn model_cfg(s: &Settings) -> ModelConfig<f64> {
    ModelConfig { oversample: s.oversample, min_periods: s.periods, ..ModelConfig::default() }
}

/// Optimal-amplitude metrics at one ramp frequency.
pub fn simulate(s: &Settings) -> Result<String, CliError> {
    let fm = s.require_fm()?;
    let tf = load_tf(s)?;
    let cfg = model_cfg(s);
    let plan = plan_record(fm, s.fs, &cfg).map_err(config("fm"))?;
    let mut out = format!("{SCHEMA_LINE}\n# simulate\n");
    for &n in &s.n_index {
        let spec = SawtoothSpec::unit(plan.f_m, n).map_err(compute)?;
        let opt = optimize_amplitude(&spec, &tf, s.fs, plan.n_periods, &cfg).map_err(compute)?;
        let m = &opt.metrics;
        let _ = writeln!(out, "f_m_requested_hz = {fm}");
        let _ = writeln!(out, "f_m_hz = {}", plan.f_m);
        let _ = writeln!(out, "fs_hz = {}", s.fs);
        let _ = writeln!(out, "n_index = {n}");
        let _ = writeln!(out, "tf = {}", tf.name);
        let _ = writeln!(out, "record_samples = {}", plan.len);
        let _ = writeln!(out, "record_periods = {}", plan.n_periods);
        let _ = writeln!(out, "a_star = {}", opt.amplitude);
        let _ = writeln!(out, "target_hz = {}", m.target_hz);
        let _ = writeln!(out, "conversion_loss_db = {}", m.conversion_loss_db);
        let _ = writeln!(out, "suppression_db = {}", m.suppression_db);
        let _ = writeln!(out, "spur_offset_hz = {}", m.spur_offset_hz);
        if s.spectrum {
            let _ = writeln!(out, "# offset_hz,power");
            for (f, p) in opt.spectrum.bins() {
                let _ = writeln!(out, "{f},{p}");
            }
        }
    }
    Ok(out)
}

/// Performance table over a ramp-frequency grid, one table per index.
pub fn sweep(s: &Settings) -> Result<String, CliError> {
    let grid = s.fm_grid()?;
    if let Some(&last) = grid.last() {
        if last >= s.fs / 2.0 {
            return Err(CliError::Config(format!(
                "fm-stop: {last} Hz is not below the Nyquist frequency fs/2 = {} Hz",
                s.fs / 2.0
            )));
        }
    }
    let tf = load_tf(s)?;
    let cfg = model_cfg(s);
    let mut out = String::new();
    let mut computed = 0;
    let mut first_error = None;
    for &n in &s.n_index {
        let entries = run_sweep(&grid, n, &tf, s.fs, &cfg);
        let rows: Vec<SweepRow<f64>> = entries.iter().filter_map(|e| e.result.as_ref().ok().copied()).collect();
        computed += rows.len();
        let records: Vec<SweepRecord<f64>> = rows.iter().map(SweepRecord::from).collect();
        let preamble = format!("# sweep N = {n}, fs = {} Hz, tf = {}\n", s.fs, tf.name);
        out.push_str(&emit_sweep_with(&records, &preamble));
        for e in &entries {
            if let Err(err) = &e.result {
                let _ = writeln!(out, "# row f_m = {} Hz failed: {err}", e.requested_f_m);
                first_error.get_or_insert_with(|| err.to_string());
            }
        }
        for (label, pred) in [
            ("loss<1dB", BandPredicate::LossBelow(1.0)),
            ("loss<2dB", BandPredicate::LossBelow(2.0)),
            ("suppression>10dB", BandPredicate::SuppressionAbove(10.0)),
            ("suppression>15dB", BandPredicate::SuppressionAbove(15.0)),
        ] {
            out.push_str(&emit_band_footer(&format!("N={n} {label}"), &extract_bands(&rows, pred)));
        }
    }
    if computed == 0 {
        return Err(CliError::Compute(format!(
            "every sweep row failed: {}",
            first_error.unwrap_or_default()
        )));
    }
    Ok(out)
}

fn laser_model(spec: LaserSpec) -> Result<(LaserSpectrumModel<f64>, String), CliError> {
    Ok(match spec {
        LaserSpec::Serrodyne => (LaserSpectrumModel::serrodyne_measured(), "serrodyne".into()),
        LaserSpec::Dsb(beta) => (dsb_spectrum(beta).map_err(config("laser"))?, format!("dsb:{beta}")),
        LaserSpec::Target => (LaserSpectrumModel::target_only(), "target".into()),
    })
}

/// Lock-shift curve with cavity report and dynamic-range footer.
pub fn pdh(s: &Settings) -> Result<String, CliError> {
    let c = s.cavity.ok_or_else(|| {
        CliError::Config("cavity: required (--cavity d=<m>,r1=<m>,r2=<m|inf>,linewidth=<hz> or a [cavity] section)".into())
    })?;
    let mut cavity = CavityModel::new(c.d, c.r1, c.r2, c.linewidth).map_err(config("cavity"))?;
    for (&k, &v) in &s.contrasts {
        cavity = cavity.with_contrast(k, v).map_err(config("contrast"))?;
    }
    let (laser, laser_name) = laser_model(s.laser)?;
    let cfg = PdhConfig::for_cavity(&cavity, s.pdh_freq, s.pdh_depth).map_err(config("pdh-freq"))?;
    let coarse = s.fm_grid()?;
    let (lo, hi) = (coarse[0], *coarse.last().unwrap());
    let step = s.fm_step.unwrap_or(hi - lo);
    let grid = resonance_grid(lo, hi, step, cavity.linewidth() / 20.0, &cavity, &laser);
    let curve = lock_shift_sweep(&grid, &cavity, &laser, &cfg);

    let mut preamble = cavity_report(&cavity);
    let features: Vec<String> =
        laser.features().iter().map(|f| format!("{}:{}", f.order, f.power)).collect();
    let _ = writeln!(
        preamble,
        "# laser = {laser_name}, target order {}, features (order:power) {}",
        laser.target_order(),
        features.join(" ")
    );
    let _ = writeln!(
        preamble,
        "# pdh Omega/2pi = {} Hz, beta = {} rad, slope = {} 1/Hz",
        cfg.mod_freq,
        cfg.depth,
        pdh_error(0.0, &cfg).slope
    );
    let mut out = emit_lock_shift_with(&LockShiftRecord::from_curve(&curve), &preamble);
    let unlocked: Vec<f64> = curve
        .rows
        .iter()
        .filter(|r| matches!(r.result, Err(PdhError::NoLockPoint { .. })))
        .map(|r| r.f_m)
        .collect();
    let max = curve.max_abs_shift();
    let _ = writeln!(out, "# max |dxi| = {max} Hz ({} linewidths)", max / cavity.linewidth());
    let _ = writeln!(out, "# rows without a lock point: {}", unlocked.len());

    // half-power dynamic range of the serrodyne shifter on the coarse grid
    if hi < s.fs / 2.0 {
        let tf = load_tf(s)?;
        let gain: Vec<SweepRow<f64>> = run_sweep(&coarse, s.n_index[0], &tf, s.fs, &model_cfg(s))
            .into_iter()
            .filter_map(|e| e.result.ok())
            .collect();
        let f1 = s.f1.unwrap_or(gain.first().map_or(lo, |r| r.f_m));
        match dynamic_range(&gain, f1) {
            Ok(r) if r.reached => {
                let _ = writeln!(out, "# dynamic range: f1 = {} Hz, f2 = {} Hz", r.f1, r.f2);
            }
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "# dynamic range: f1 = {} Hz, shifted power stays above half up to {} Hz",
                    r.f1, r.f2
                );
            }
            Err(e @ PdhError::F1OutOfRange { .. }) if s.f1.is_some() => return Err(CliError::Config(format!("f1: {e}"))),
            Err(e) => {
                let _ = writeln!(out, "# dynamic range: unavailable ({e})");
            }
        }
    } else {
        let _ = writeln!(out, "# dynamic range: unavailable (fm-stop is not below fs/2)");
    }
    Ok(out)
}

/// Ramp generator registers, sample dump and spectrum.
pub fn rampgen(s: &Settings) -> Result<String, CliError> {
    let fm = s.require_fm()?;
    let inc = freq_to_inc(fm, s.fs).map_err(config("fm"))?;
    let gain = ((s.amplitude * 65_536.0).round() as u32).min(u16::MAX as u32) as u16;
    if gain == 0 {
        eprintln!("warning: amplitude {} gives gain register g = 0; the output is all zeros", s.amplitude);
    }
    let cfg = RampGenConfig { sample_rate: s.fs, ..RampGenConfig::new(inc, gain) };
    let n = s.n_index[0];

    let mut out = format!("{SCHEMA_LINE}\n# rampgen\n");
    let _ = writeln!(out, "# inc = {inc}");
    let _ = writeln!(out, "# g = {gain}");
    let _ = writeln!(out, "# f_m_hz = {}", inc_to_freq(inc, s.fs));
    let _ = writeln!(out, "# lanes = {}, dac_bits = {}, fs_hz = {}", cfg.lanes, cfg.dac_bits, s.fs);
    let _ = writeln!(out, "# sample,code,value");
    let codes = rampgen_codes_lanes(&cfg, s.samples);
    let values = rampgen_emulate(&cfg, s.samples).map_err(compute)?;
    for (k, (c, v)) in codes.iter().zip(values.samples()).enumerate() {
        let _ = writeln!(out, "{k},{c},{v}");
    }

    // Spectrum on a power-of-two record: snap inc so the record closes.
    let len = s.record_len;
    let shift = 32 - len.trailing_zeros();
    let rec_inc = ((inc as f64 / (1u64 << shift) as f64).round() as u64) << shift;
    if rec_inc == 0 || rec_inc >= 1 << 31 {
        return Err(CliError::Config(format!(
            "record-len: {len} samples cannot resolve f_m = {fm} Hz; use a longer record"
        )));
    }
    let rec = RampGenConfig { inc: rec_inc as u32, ..cfg };
    let rec_fm = inc_to_freq(rec.inc, s.fs);
    let _ = writeln!(out, "# spectrum record: {len} samples, inc = {}, f_m = {rec_fm} Hz", rec.inc);
    if gain == 0 {
        let _ = writeln!(out, "# spectrum: skipped, gain is zero");
        return Ok(out);
    }
    let spur = quantization_spur_dbc(&rec, len).map_err(compute)?;
    let _ = writeln!(out, "# quantization spur = {spur} dBc");
    let tf = load_tf(s)?;
    let ramp = rampgen_emulate(&rec, len).map_err(compute)?;
    let phi = ramp.scaled(PI * n as f64, SignalUnit::Radians);
    let phi = rf_chain::apply(&tf, &phi).map_err(compute)?;
    let spectrum = modulate(&phi).map_err(compute)?;
    let m = metrics(&spectrum, rec_fm * n as f64, 1).map_err(compute)?;
    let _ = writeln!(
        out,
        "# N = {n}, tf = {}, conversion_loss_db = {}, suppression_db = {}, spur_offset_hz = {}",
        tf.name, m.conversion_loss_db, m.suppression_db, m.spur_offset_hz
    );
    let _ = writeln!(out, "# offset_hz,power_db");
    let order = 2 * n as i64 + 4;
    for k in -order..=order {
        let f = rec_fm * k as f64;
        if let Some(p) = spectrum.power_at(f) {
            let _ = writeln!(out, "{f},{}", 10.0 * p.log10());
        }
    }
    Ok(out)
}
