//! Run settings: command-line flags merged over an optional TOML file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Config(String),
    /// Valid input the models could not evaluate: exit code 3.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Compute(m) => write!(f, "computation error: {m}"),
        }
    }
}

fn config_err(field: &str, message: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

/// Flags shared by every subcommand. Each one overrides the matching key
/// of the `--config` file.
#[derive(Args, Debug, Default, Clone)]
pub struct Opts {
    /// TOML file with default settings (keys match the long flag names).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// DAC sample rate (Hz). Default 9.85e9.
    #[arg(long, value_name = "HZ")]
    pub fs: Option<f64>,
    /// Ramp frequency for single-point commands (Hz).
    #[arg(long, value_name = "HZ")]
    pub fm: Option<f64>,
    #[arg(long, value_name = "HZ")]
    pub fm_start: Option<f64>,
    #[arg(long, value_name = "HZ")]
    pub fm_stop: Option<f64>,
    #[arg(long, value_name = "HZ")]
    pub fm_step: Option<f64>,
    /// Serrodyne index N; repeat for one sweep table per index.
    #[arg(long = "n-index", value_name = "N")]
    pub n_index: Vec<u32>,
    /// Transfer function: `flat`, `bandpass:<f_lo>:<f_hi>` or a CSV path.
    #[arg(long, value_name = "SPEC")]
    pub tf: Option<String>,
    /// Minimum ramp periods per simulated record. Default 32.
    #[arg(long, value_name = "N")]
    pub periods: Option<usize>,
    /// Reconstruction points per DAC sample (1 = ideal point samples). Default 8.
    #[arg(long, value_name = "N")]
    pub oversample: Option<usize>,
    /// Cavity geometry: `d=<m>,r1=<m>,r2=<m|inf>,linewidth=<hz>`.
    #[arg(long, value_name = "SPEC")]
    pub cavity: Option<String>,
    /// Contrast of mode family k, `k=<value>`; repeatable.
    #[arg(long, value_name = "K=V")]
    pub contrast: Vec<String>,
    /// Offset-laser spectrum: `serrodyne`, `dsb:<beta>` or `target`.
    #[arg(long, value_name = "SPEC")]
    pub laser: Option<String>,
    /// PDH modulation frequency (Hz). Default 25e6.
    #[arg(long, value_name = "HZ")]
    pub pdh_freq: Option<f64>,
    /// PDH modulation depth (rad). Default 1.082.
    #[arg(long, value_name = "RAD")]
    pub pdh_depth: Option<f64>,
    /// Reference offset for the dynamic-range estimate (Hz). Default fm-start.
    #[arg(long, value_name = "HZ")]
    pub f1: Option<f64>,
    /// Ramp generator output amplitude as a fraction of full scale. Default 1.
    #[arg(long, value_name = "FRACTION")]
    pub amplitude: Option<f64>,
    /// Samples in the ramp generator dump. Default 64.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Record length (power of two) for the ramp generator spectrum. Default 65536.
    #[arg(long, value_name = "N")]
    pub record_len: Option<usize>,
    /// Also print the full optical spectrum.
    #[arg(long)]
    pub spectrum: bool,
    /// Output file (default stdout).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    fs: Option<f64>,
    fm: Option<f64>,
    fm_start: Option<f64>,
    fm_stop: Option<f64>,
    fm_step: Option<f64>,
    n_index: Option<Vec<u32>>,
    tf: Option<String>,
    periods: Option<usize>,
    oversample: Option<usize>,
    laser: Option<String>,
    pdh_freq: Option<f64>,
    pdh_depth: Option<f64>,
    f1: Option<f64>,
    amplitude: Option<f64>,
    samples: Option<usize>,
    record_len: Option<usize>,
    spectrum: Option<bool>,
    out: Option<PathBuf>,
    cavity: Option<CavitySection>,
    contrast: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CavitySection {
    d: f64,
    r1: Radius,
    r2: Radius,
    linewidth: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Radius {
    Value(f64),
    Text(String),
}

impl Radius {
    fn resolve(&self, field: &str) -> Result<f64, CliError> {
        match self {
            Radius::Value(v) => Ok(*v),
            Radius::Text(t) => parse_radius(field, t),
        }
    }
}

fn parse_radius(field: &str, s: &str) -> Result<f64, CliError> {
    match s.trim() {
        "inf" | "infinity" | "Inf" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| config_err(field, format!("expected a radius in m or `inf`, got `{t}`"))),
    }
}

/// Source of the RF transfer function.
#[derive(Debug, Clone, PartialEq)]
pub enum TfSource {
    Flat,
    Bandpass { f_lo: f64, f_hi: f64 },
    File(PathBuf),
}

impl TfSource {
    fn parse(s: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let s = s.trim();
        if s == "flat" {
            return Ok(TfSource::Flat);
        }
        if let Some(rest) = s.strip_prefix("bandpass:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let num = |t: &str| {
                t.trim().parse::<f64>().map_err(|_| config_err("tf", format!("bad bandpass corner `{t}`")))
            };
            if parts.len() != 2 {
                return Err(config_err("tf", "expected bandpass:<f_lo>:<f_hi>"));
            }
            return Ok(TfSource::Bandpass { f_lo: num(parts[0])?, f_hi: num(parts[1])? });
        }
        let path = PathBuf::from(s);
        Ok(TfSource::File(match base {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path,
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavitySpec {
    pub d: f64,
    pub r1: f64,
    pub r2: f64,
    pub linewidth: f64,
}

impl CavitySpec {
    fn parse(s: &str) -> Result<Self, CliError> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| config_err("cavity", format!("expected key=value, got `{part}`")))?;
            let k = k.trim();
            if !matches!(k, "d" | "r1" | "r2" | "linewidth") {
                return Err(config_err("cavity", format!("unknown key `{k}`")));
            }
            fields.insert(k, v.trim());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| config_err(&format!("cavity.{k}"), "missing"))
        };
        let num = |k: &str| -> Result<f64, CliError> {
            let v = get(k)?;
            v.parse().map_err(|_| config_err(&format!("cavity.{k}"), format!("not a number: `{v}`")))
        };
        Ok(CavitySpec {
            d: num("d")?,
            r1: parse_radius("cavity.r1", get("r1")?)?,
            r2: parse_radius("cavity.r2", get("r2")?)?,
            linewidth: num("linewidth")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaserSpec {
    Serrodyne,
    Dsb(f64),
    Target,
}

impl LaserSpec {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "serrodyne" => Ok(LaserSpec::Serrodyne),
            "target" => Ok(LaserSpec::Target),
            t => match t.strip_prefix("dsb:") {
                Some(b) => b
                    .trim()
                    .parse()
                    .map(LaserSpec::Dsb)
                    .map_err(|_| config_err("laser", format!("bad DSB depth `{b}`"))),
                None => Err(config_err("laser", format!("expected serrodyne, dsb:<beta> or target, got `{t}`"))),
            },
        }
    }
}

/// Fully resolved settings. Command-specific values stay optional until a
/// command asks for them.
#[derive(Debug, Clone)]
pub struct Settings {
    pub fs: f64,
    pub fm: Option<f64>,
    pub fm_start: Option<f64>,
    pub fm_stop: Option<f64>,
    pub fm_step: Option<f64>,
    pub n_index: Vec<u32>,
    pub tf: TfSource,
    pub periods: usize,
    pub oversample: usize,
    pub cavity: Option<CavitySpec>,
    pub contrasts: BTreeMap<u32, f64>,
    pub laser: LaserSpec,
    pub pdh_freq: f64,
    pub pdh_depth: f64,
    pub f1: Option<f64>,
    pub amplitude: f64,
    pub samples: usize,
    pub record_len: usize,
    pub spectrum: bool,
    pub out: Option<PathBuf>,
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err("config", format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err("config", format!("{}: {e}", path.display())))
}

fn parse_contrast(field: &str, k: &str, v: f64) -> Result<(u32, f64), CliError> {
    let k: u32 = k
        .trim()
        .parse()
        .map_err(|_| config_err(field, format!("mode index must be a positive integer, got `{k}`")))?;
    if k == 0 {
        return Err(config_err(field, "mode index must be >= 1"));
    }
    if !v.is_finite() || v < 1.0 {
        return Err(config_err(field, format!("contrast C_{k} must be >= 1, got {v}")));
    }
    Ok((k, v))
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(field, format!("must be positive and finite, got {v}")))
    }
}

impl Settings {
    pub fn resolve(opts: &Opts) -> Result<Self, CliError> {
        let (file, base) = match &opts.config {
            Some(p) => (load_file(p)?, p.parent().map(Path::to_path_buf)),
            None => (FileConfig::default(), None),
        };

        let tf = match (&opts.tf, &file.tf) {
            (Some(s), _) => TfSource::parse(s, None)?,
            (None, Some(s)) => TfSource::parse(s, base.as_deref())?,
            (None, None) => TfSource::Flat,
        };
        let cavity = match (&opts.cavity, &file.cavity) {
            (Some(s), _) => Some(CavitySpec::parse(s)?),
            (None, Some(c)) => Some(CavitySpec {
                d: c.d,
                r1: c.r1.resolve("cavity.r1")?,
                r2: c.r2.resolve("cavity.r2")?,
                linewidth: c.linewidth,
            }),
            (None, None) => None,
        };
        let mut contrasts = BTreeMap::new();
        for (k, &v) in file.contrast.iter().flatten() {
            let (k, v) = parse_contrast("contrast", k, v)?;
            contrasts.insert(k, v);
        }
        for s in &opts.contrast {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| config_err("contrast", format!("expected k=value, got `{s}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| config_err("contrast", format!("not a number: `{v}`")))?;
            let (k, v) = parse_contrast("contrast", k, v)?;
            contrasts.insert(k, v);
        }
        let laser = match opts.laser.as_ref().or(file.laser.as_ref()) {
            Some(s) => LaserSpec::parse(s)?,
            None => LaserSpec::Serrodyne,
        };
        let n_index = if !opts.n_index.is_empty() {
            opts.n_index.clone()
        } else {
            file.n_index.clone().unwrap_or_else(|| vec![1])
        };

        let s = Settings {
            fs: opts.fs.or(file.fs).unwrap_or(9.85e9),
            fm: opts.fm.or(file.fm),
            fm_start: opts.fm_start.or(file.fm_start),
            fm_stop: opts.fm_stop.or(file.fm_stop),
            fm_step: opts.fm_step.or(file.fm_step),
            n_index,
            tf,
            periods: opts.periods.or(file.periods).unwrap_or(32),
            oversample: opts.oversample.or(file.oversample).unwrap_or(8),
            cavity,
            contrasts,
            laser,
            pdh_freq: opts.pdh_freq.or(file.pdh_freq).unwrap_or(25e6),
            pdh_depth: opts.pdh_depth.or(file.pdh_depth).unwrap_or(1.082),
            f1: opts.f1.or(file.f1),
            amplitude: opts.amplitude.or(file.amplitude).unwrap_or(1.0),
            samples: opts.samples.or(file.samples).unwrap_or(64),
            record_len: opts.record_len.or(file.record_len).unwrap_or(1 << 16),
            spectrum: opts.spectrum || file.spectrum.unwrap_or(false),
            out: opts.out.clone().or(file.out),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        positive("fs", self.fs)?;
        for (name, v) in [("fm", self.fm), ("fm-start", self.fm_start), ("fm-stop", self.fm_stop), ("fm-step", self.fm_step), ("f1", self.f1)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if self.n_index.contains(&0) {
            return Err(config_err("n-index", "must be >= 1"));
        }
        if self.periods == 0 {
            return Err(config_err("periods", "must be >= 1"));
        }
        if self.oversample == 0 {
            return Err(config_err("oversample", "must be >= 1"));
        }
        positive("pdh-freq", self.pdh_freq)?;
        positive("pdh-depth", self.pdh_depth)?;
        if let TfSource::Bandpass { f_lo, f_hi } = self.tf {
            positive("tf", f_lo)?;
            positive("tf", f_hi)?;
        }
        if let Some(c) = &self.cavity {
            positive("cavity.d", c.d)?;
            positive("cavity.linewidth", c.linewidth)?;
        }
        if let LaserSpec::Dsb(beta) = self.laser {
            positive("laser", beta)?;
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(config_err("amplitude", format!("must lie in [0, 1], got {}", self.amplitude)));
        }
        if self.samples == 0 {
            return Err(config_err("samples", "must be >= 1"));
        }
        if !self.record_len.is_power_of_two() || !(16..=1 << 24).contains(&self.record_len) {
            return Err(config_err("record-len", "must be a power of two between 16 and 2^24"));
        }
        Ok(())
    }

    pub fn require_fm(&self) -> Result<f64, CliError> {
        let fm = self.fm.ok_or_else(|| config_err("fm", "required for this command"))?;
        if fm >= self.fs / 2.0 {
            return Err(config_err("fm", format!("{fm} Hz is not below the Nyquist frequency fs/2 = {} Hz", self.fs / 2.0)));
        }
        Ok(fm)
    }

    /// `fm-start, fm-start + fm-step, ...` up to and including `fm-stop`.
    pub fn fm_grid(&self) -> Result<Vec<f64>, CliError> {
        let start = self.fm_start.ok_or_else(|| config_err("fm-start", "required for this command"))?;
        let stop = self.fm_stop.ok_or_else(|| config_err("fm-stop", "required for this command"))?;
        let step = self.fm_step.ok_or_else(|| config_err("fm-step", "required for this command"))?;
        if stop < start {
            return Err(config_err("fm-stop", format!("frequency range is empty ({start} .. {stop} Hz)")));
        }
        let count = ((stop - start) / step * (1.0 + 1e-12)).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(config_err("fm-step", format!("range has {count} points (limit 1e6)")));
        }
        Ok((0..count).map(|i| start + step * i as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cavity_flag() {
        let c = CavitySpec::parse("d=0.1,r1=0.5,r2=inf,linewidth=2e5").unwrap();
        assert_eq!(c, CavitySpec { d: 0.1, r1: 0.5, r2: f64::INFINITY, linewidth: 2e5 });
        assert!(CavitySpec::parse("d=0.1,r1=0.5,linewidth=2e5").unwrap_err().to_string().contains("cavity.r2"));
        assert!(CavitySpec::parse("d=0.1,r1=0.5,r2=1,linewidth=2e5,x=1").is_err());
    }

    #[test]
    fn tf_and_laser_specs() {
        assert_eq!(TfSource::parse("flat", None).unwrap(), TfSource::Flat);
        assert_eq!(
            TfSource::parse("bandpass:1e6:2e9", None).unwrap(),
            TfSource::Bandpass { f_lo: 1e6, f_hi: 2e9 }
        );
        assert_eq!(
            TfSource::parse("t.csv", Some(Path::new("/cfg"))).unwrap(),
            TfSource::File(PathBuf::from("/cfg/t.csv"))
        );
        assert!(TfSource::parse("bandpass:1", None).is_err());
        assert_eq!(LaserSpec::parse("dsb:1.84").unwrap(), LaserSpec::Dsb(1.84));
        assert!(LaserSpec::parse("dsb").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "fs = 1e9\nfm = 1e7\nn-index = [2]\n\n[cavity]\nd = 0.1\nr1 = 0.5\nr2 = inf\nlinewidth = 2e5\n\n[contrast]\n1 = 30.0\n2 = 15.0\n",
        )
        .unwrap();
        let opts = Opts { config: Some(path), fm: Some(2e7), contrast: vec!["2=20".into()], ..Opts::default() };
        let s = Settings::resolve(&opts).unwrap();
        assert_eq!(s.fs, 1e9);
        assert_eq!(s.fm, Some(2e7));
        assert_eq!(s.n_index, vec![2]);
        assert_eq!(s.cavity.unwrap().r2, f64::INFINITY);
        assert_eq!(s.contrasts, BTreeMap::from([(1, 30.0), (2, 20.0)]));
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "sample-rate = 1e9\n").unwrap();
        let err = Settings::resolve(&Opts { config: Some(path), ..Opts::default() }).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("sample-rate"));
    }

    #[test]
    fn grid_edges() {
        let s = |a, b, c| Settings::resolve(&Opts { fm_start: Some(a), fm_stop: Some(b), fm_step: Some(c), ..Opts::default() });
        assert_eq!(s(1.0, 3.0, 1.0).unwrap().fm_grid().unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(s(0.1, 0.3, 0.1).unwrap().fm_grid().unwrap().len(), 3);
        assert!(s(3.0, 1.0, 1.0).unwrap().fm_grid().is_err());
        assert!(s(1.0, 3.0, -1.0).is_err());
    }
}
