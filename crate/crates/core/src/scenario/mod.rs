//! Config-driven experiment runner behind the `ddsim` binary.
//!
//! Configuration is a TOML file whose keys can be overridden from the command
//! line. Times are in microseconds and field strengths in krad/s; the engine
//! itself works in rad/us.

pub mod analysis;
pub mod presets;
pub mod table;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{EnsembleConfig, ErrorSpread};
use crate::error::{DdError, Result};
use crate::noise::NoiseModel;
use crate::pulse_errors::{PulseErrorModel, PulseMode};
use crate::sequences::{parse_sequence_name, SequenceSpec};
use crate::timeline::Timeline;

pub use presets::{find_preset, list_presets, Preset, PRESETS};
pub use table::{OutputFormat, Provenance, ResultTable, Value};

/// rad/us per krad/s.
pub const KRAD_PER_S: f64 = 1e-3;

/// A scalar, an explicit list, or a text range `start:stop:count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Scalar(f64),
    List(Vec<f64>),
    Text(String),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::Scalar(x) => vec![*x],
            GridSpec::List(v) => v.clone(),
            GridSpec::Text(s) => parse_grid(s)?,
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(DdError::Config(format!("grid {self:?} must be non-empty and finite")));
        }
        Ok(v)
    }
}

/// Parse `0.1`, `0,0.1,0.2` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || DdError::Config(format!("cannot parse grid '{s}'"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s.split(',').map(num).collect(),
        3 => {
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
            match n {
                0 => Err(bad()),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()),
            }
        }
        _ => Err(bad()),
    }
}

/// `n` evenly spaced values on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    parse_grid(&format!("{a}:{b}:{n}")).expect("valid linspace")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// `none`, `static`, `ou` or `vector`.
    pub kind: Option<String>,
    /// krad/s
    pub sigma: Option<f64>,
    /// Per-axis spreads for `vector`, krad/s.
    pub sigma_xyz: Option<[f64; 3]>,
    /// us
    pub tau_corr: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<String>,
}

/// Everything a config file or the command line can set. Unset fields fall
/// back to the preset defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    /// Sequence names such as `xy16s` or `cdd3`.
    pub sequence: Option<Vec<String>>,
    pub tau: Option<f64>,
    pub cycles: Option<usize>,
    pub epsilon: Option<GridSpec>,
    pub delta: Option<GridSpec>,
    /// `instantaneous` or `finite`.
    pub pulse_mode: Option<String>,
    pub pulse_duration: Option<f64>,
    pub epsilon_spread: Option<f64>,
    pub delta_spread: Option<f64>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseSection>,
    pub ensemble: Option<EnsembleSection>,
    pub output: Option<OutputSection>,
}

fn pick<T>(over: Option<T>, base: Option<T>) -> Option<T> {
    over.or(base)
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| DdError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DdError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Field-wise merge; values in `over` win.
    pub fn merged(self, over: ConfigFile) -> ConfigFile {
        let noise = match (self.noise, over.noise) {
            (Some(b), Some(o)) => Some(NoiseSection {
                kind: pick(o.kind, b.kind),
                sigma: pick(o.sigma, b.sigma),
                sigma_xyz: pick(o.sigma_xyz, b.sigma_xyz),
                tau_corr: pick(o.tau_corr, b.tau_corr),
                seed: pick(o.seed, b.seed),
            }),
            (b, o) => o.or(b),
        };
        let ensemble = match (self.ensemble, over.ensemble) {
            (Some(b), Some(o)) => Some(EnsembleSection { size: pick(o.size, b.size), seed: pick(o.seed, b.seed) }),
            (b, o) => o.or(b),
        };
        let output = match (self.output, over.output) {
            (Some(b), Some(o)) => Some(OutputSection { path: pick(o.path, b.path), format: pick(o.format, b.format) }),
            (b, o) => o.or(b),
        };
        ConfigFile {
            preset: pick(over.preset, self.preset),
            sequence: pick(over.sequence, self.sequence),
            tau: pick(over.tau, self.tau),
            cycles: pick(over.cycles, self.cycles),
            epsilon: pick(over.epsilon, self.epsilon),
            delta: pick(over.delta, self.delta),
            pulse_mode: pick(over.pulse_mode, self.pulse_mode),
            pulse_duration: pick(over.pulse_duration, self.pulse_duration),
            epsilon_spread: pick(over.epsilon_spread, self.epsilon_spread),
            delta_spread: pick(over.delta_spread, self.delta_spread),
            seed: pick(over.seed, self.seed),
            noise,
            ensemble,
            output,
        }
    }
}

/// Parse a command-line noise description: `none`, `static:<sigma>`,
/// `ou:<sigma>:<tau_corr>` or `vector:<sx>,<sy>,<sz>` (krad/s, us). Missing
/// values fall back to the Ornstein-Uhlenbeck preset amplitude.
pub fn parse_noise_flag(s: &str) -> Result<NoiseSection> {
    let bad = || DdError::Config(format!("cannot parse noise '{s}'"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or("").trim().to_ascii_lowercase();
    let args: Vec<&str> = parts.collect();
    let mut out = NoiseSection { kind: Some(kind.clone()), ..Default::default() };
    match (kind.as_str(), args.len()) {
        ("none", 0) | ("static", 0) | ("ou", 0) => {}
        ("static", 1) => out.sigma = Some(num(args[0])?),
        ("ou", 1) => out.sigma = Some(num(args[0])?),
        ("ou", 2) => {
            out.sigma = Some(num(args[0])?);
            out.tau_corr = Some(num(args[1])?);
        }
        ("vector", 1) => {
            let v: Vec<f64> = args[0].split(',').map(num).collect::<Result<_>>()?;
            let arr: [f64; 3] = v.try_into().map_err(|_| bad())?;
            out.sigma_xyz = Some(arr);
        }
        _ => return Err(bad()),
    }
    Ok(out)
}

/// Resolved run parameters in engine units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub sequences: Vec<SequenceSpec>,
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub pulse_mode: PulseMode,
    pub error_spread: ErrorSpread,
    /// Field strengths in rad/us.
    pub noise: NoiseModel,
    pub ensemble: usize,
    pub seed: u64,
}

impl Params {
    pub fn error_model(&self, epsilon: f64, delta: f64) -> Result<PulseErrorModel> {
        PulseErrorModel::new(epsilon, delta, self.pulse_mode).map_err(|e| DdError::Config(e.to_string()))
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig { size: self.ensemble, seed: self.seed, error_spread: self.error_spread }
    }

    pub fn build(&self, spec: &SequenceSpec) -> Result<Timeline> {
        spec.build().map_err(|e| match e {
            DdError::Config(_) => e,
            other => DdError::Config(other.to_string()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(DdError::Config(m));
        if self.sequences.is_empty() {
            return cfg("no sequences selected".into());
        }
        for spec in &self.sequences {
            self.build(spec)?;
        }
        if self.epsilon.is_empty() || self.delta.is_empty() {
            return cfg("error grids must be non-empty".into());
        }
        if self.ensemble == 0 {
            return cfg("ensemble size must be >= 1".into());
        }
        if !(self.error_spread.epsilon >= 0.0 && self.error_spread.delta >= 0.0) {
            return cfg("error spreads must be non-negative".into());
        }
        for &e in &self.epsilon {
            for &d in &self.delta {
                self.error_model(e, d)?;
            }
        }
        self.noise.validate().map_err(|e| DdError::Config(e.to_string()))
    }

    /// Apply config-file / command-line settings on top of preset defaults.
    pub fn apply(mut self, c: &ConfigFile) -> Result<Params> {
        if let Some(names) = &c.sequence {
            let (tau, cycles) = self.sequences.first().map(|s| (s.tau, s.cycles)).unwrap_or((1.0, 1));
            self.sequences = names
                .iter()
                .flat_map(|n| n.split(','))
                .filter(|n| !n.trim().is_empty())
                .map(|n| parse_sequence_name(n, tau, cycles))
                .collect::<Result<_>>()?;
        }
        for spec in &mut self.sequences {
            if let Some(tau) = c.tau {
                spec.tau = tau;
            }
            if let Some(cycles) = c.cycles {
                spec.cycles = cycles;
            }
        }
        if let Some(g) = &c.epsilon {
            self.epsilon = g.values()?;
        }
        if let Some(g) = &c.delta {
            self.delta = g.values()?;
        }
        let current_tp = match self.pulse_mode {
            PulseMode::Finite { pulse_duration } => Some(pulse_duration),
            PulseMode::Instantaneous => None,
        };
        match c.pulse_mode.as_deref().map(str::to_ascii_lowercase).as_deref() {
            None => {
                if let (Some(tp), PulseMode::Finite { .. }) = (c.pulse_duration, self.pulse_mode) {
                    self.pulse_mode = PulseMode::Finite { pulse_duration: tp };
                }
            }
            Some("instantaneous") => self.pulse_mode = PulseMode::Instantaneous,
            Some("finite") => {
                let tp = c.pulse_duration.or(current_tp).ok_or_else(|| {
                    DdError::Config("finite pulses need pulse_duration".into())
                })?;
                self.pulse_mode = PulseMode::Finite { pulse_duration: tp };
            }
            Some(other) => return Err(DdError::Config(format!("unknown pulse mode '{other}'"))),
        }
        if let Some(s) = c.epsilon_spread {
            self.error_spread.epsilon = s;
        }
        if let Some(s) = c.delta_spread {
            self.error_spread.delta = s;
        }
        if let Some(n) = &c.noise {
            self.noise = resolve_noise(n, &self.noise)?;
        }
        if let Some(size) = c.ensemble.as_ref().and_then(|e| e.size) {
            self.ensemble = size;
        }
        let seed = c.seed.or(c.noise.as_ref().and_then(|n| n.seed)).or(c.ensemble.as_ref().and_then(|e| e.seed));
        if let Some(seed) = seed {
            self.seed = seed;
        }
        self.validate()?;
        Ok(self)
    }
}

/// Default Ornstein-Uhlenbeck environment: correlation time 200 us and a
/// free-induction 1/e time of 120 us.
pub fn preset_ou_noise() -> NoiseModel {
    let tau_corr = 200.0;
    let sigma = crate::noise::ou_sigma_for_decay(tau_corr, 120.0).expect("positive times");
    NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr }
}

fn resolve_noise(n: &NoiseSection, current: &NoiseModel) -> Result<NoiseModel> {
    let (default_sigma, default_tau) = match preset_ou_noise() {
        NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } => (sigma, tau_corr),
        _ => unreachable!(),
    };
    let sigma = n.sigma.map(|s| s * KRAD_PER_S);
    let kind = match &n.kind {
        Some(k) => k.to_ascii_lowercase(),
        None => match current {
            NoiseModel::None => "none".into(),
            NoiseModel::StaticDephasing { .. } => "static".into(),
            NoiseModel::OrnsteinUhlenbeck { .. } => "ou".into(),
            NoiseModel::StaticVector { .. } => "vector".into(),
        },
    };
    let model = match kind.as_str() {
        "none" => NoiseModel::None,
        "static" | "static_dephasing" => NoiseModel::StaticDephasing {
            sigma: sigma.unwrap_or(match current {
                NoiseModel::StaticDephasing { sigma } => *sigma,
                _ => default_sigma,
            }),
        },
        "ou" | "ornstein_uhlenbeck" => {
            let (cur_sigma, cur_tau) = match current {
                NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } => (*sigma, *tau_corr),
                _ => (default_sigma, default_tau),
            };
            NoiseModel::OrnsteinUhlenbeck { sigma: sigma.unwrap_or(cur_sigma), tau_corr: n.tau_corr.unwrap_or(cur_tau) }
        }
        "vector" | "static_vector" => {
            let s = match (n.sigma_xyz, sigma) {
                (Some(v), _) => [v[0] * KRAD_PER_S, v[1] * KRAD_PER_S, v[2] * KRAD_PER_S],
                (None, Some(s)) => [s, s, s],
                (None, None) => match current {
                    NoiseModel::StaticVector { sigma } => *sigma,
                    _ => [default_sigma; 3],
                },
            };
            NoiseModel::StaticVector { sigma: s }
        }
        other => return Err(DdError::Config(format!("unknown noise kind '{other}'"))),
    };
    model.validate().map_err(|e| DdError::Config(e.to_string()))?;
    Ok(model)
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub params: Params,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub format: OutputFormat,
}

impl ScenarioConfig {
    /// Resolve a preset (or the custom sweep when `preset` is unset) with overrides.
    pub fn resolve(c: &ConfigFile) -> Result<ScenarioConfig> {
        let name = c.preset.clone().unwrap_or_else(|| presets::CUSTOM.to_string());
        let preset = find_preset(&name)?;
        if !preset.accepts_noise && c.noise.as_ref().is_some_and(|n| n.kind.as_deref().is_some_and(|k| k != "none")) {
            return Err(DdError::Config(format!("preset {name} is noise-free and does not take a noise model")));
        }
        if name == presets::CUSTOM && c.sequence.is_none() {
            return Err(DdError::Config("a run without a preset needs --sequence".into()));
        }
        let params = (preset.defaults)().apply(c)?;
        let output = c.output.as_ref().and_then(|o| o.path.clone());
        let format = match c.output.as_ref().and_then(|o| o.format.as_deref()) {
            Some(f) => f.parse()?,
            None => match output.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("json") => OutputFormat::Json,
                _ => OutputFormat::Csv,
            },
        };
        Ok(ScenarioConfig { scenario: name, params, output, format })
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_path(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.{}", self.scenario, self.format.extension())))
    }
}

/// Run a resolved scenario. The first table is the primary result.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<ResultTable>> {
    let preset = find_preset(&cfg.scenario)?;
    let mut tables = (preset.run)(&cfg.params)?;
    let provenance = Provenance::new(&cfg.scenario, &cfg.hash(), cfg.params.seed);
    for t in &mut tables {
        t.provenance = Some(provenance.clone());
    }
    Ok(tables)
}

/// Path of table `index` when the primary output goes to `primary`.
pub fn table_path(primary: &Path, table: &ResultTable, index: usize) -> PathBuf {
    if index == 0 {
        return primary.to_path_buf();
    }
    let stem = primary.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = primary.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    primary.with_file_name(format!("{stem}.{}.{ext}", table.name))
}

/// Write all tables. Everything is rendered and staged before the first file
/// is put in place, so a failure leaves no partial table behind.
pub fn write_tables(tables: &[ResultTable], primary: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    let mut staged = Vec::new();
    for (k, t) in tables.iter().enumerate() {
        let path = table_path(primary, t, k);
        let err = |source: std::io::Error| DdError::Output { path: path.display().to_string(), source };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(err)?;
        std::io::Write::write_all(&mut tmp, t.render(format).as_bytes()).map_err(err)?;
        staged.push((tmp, path));
    }
    let mut written = Vec::new();
    for (tmp, path) in staged {
        tmp.persist(&path)
            .map_err(|e| DdError::Output { path: path.display().to_string(), source: e.error })?;
        written.push(path);
    }
    Ok(written)
}

/// Serialise one sequence as text or JSON.
pub fn dump_timeline(spec: &SequenceSpec, format: &str) -> Result<String> {
    let t = spec.build().map_err(|e| match e {
        DdError::Config(_) => e,
        other => DdError::Config(other.to_string()),
    })?;
    match format {
        "text" => Ok(t.to_text()),
        "json" => Ok(t.to_json()),
        other => Err(DdError::Config(format!("unknown timeline format '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0,0.1, 0.2").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(parse_grid("-1:1:5").unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("a").is_err());
        assert!(GridSpec::List(vec![]).values().is_err());
    }

    #[test]
    fn noise_flags() {
        let n = parse_noise_flag("ou:12.961:200").unwrap();
        assert_eq!((n.sigma, n.tau_corr), (Some(12.961), Some(200.0)));
        assert!(parse_noise_flag("ou:1:2:3").is_err());
        assert!(parse_noise_flag("pink").is_err());
        let model = resolve_noise(&parse_noise_flag("static:500").unwrap(), &NoiseModel::None).unwrap();
        assert_eq!(model, NoiseModel::StaticDephasing { sigma: 0.5 });
        let pink = NoiseSection { kind: Some("pink".into()), ..Default::default() };
        assert!(resolve_noise(&pink, &NoiseModel::None).is_err());
    }

    #[test]
    fn preset_noise_amplitude() {
        match preset_ou_noise() {
            NoiseModel::OrnsteinUhlenbeck { sigma, tau_corr } => {
                assert_eq!(tau_corr, 200.0);
                assert!((sigma - 0.012961).abs() < 1e-6);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn config_file_and_overrides() {
        let file = ConfigFile::from_toml(
            r#"
            preset = "fig4"
            epsilon = "0:0.1:3"
            [ensemble]
            size = 8
            [noise]
            seed = 5
            "#,
        )
        .unwrap();
        let flags = ConfigFile { seed: Some(9), sequence: Some(vec!["kdd".into()]), ..Default::default() };
        let cfg = ScenarioConfig::resolve(&file.merged(flags)).unwrap();
        assert_eq!(cfg.scenario, "fig4");
        assert_eq!(cfg.params.epsilon, vec![0.0, 0.05, 0.1]);
        assert_eq!(cfg.params.ensemble, 8);
        assert_eq!(cfg.params.seed, 9);
        assert_eq!(cfg.params.sequences.len(), 1);
        assert!(ConfigFile::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn resolution_errors() {
        let unknown = ConfigFile { preset: Some("fig99".into()), ..Default::default() };
        assert_eq!(ScenarioConfig::resolve(&unknown).unwrap_err().exit_code(), 2);
        let no_seq = ConfigFile::default();
        assert_eq!(ScenarioConfig::resolve(&no_seq).unwrap_err().exit_code(), 3);
        let bad_tau = ConfigFile { preset: Some("fig4".into()), tau: Some(-1.0), ..Default::default() };
        assert_eq!(ScenarioConfig::resolve(&bad_tau).unwrap_err().exit_code(), 3);
        let noisy = ConfigFile {
            preset: Some("fig5".into()),
            noise: Some(parse_noise_flag("ou").unwrap()),
            ..Default::default()
        };
        assert_eq!(ScenarioConfig::resolve(&noisy).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn hash_tracks_configuration() {
        let a = ScenarioConfig::resolve(&ConfigFile { preset: Some("fig4".into()), ..Default::default() }).unwrap();
        let b = ScenarioConfig::resolve(&ConfigFile { preset: Some("fig4".into()), seed: Some(2), ..Default::default() })
            .unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn secondary_table_paths() {
        let t = ResultTable::new("chi", &["a"]);
        assert_eq!(table_path(Path::new("out/fig2.csv"), &t, 1), PathBuf::from("out/fig2.chi.csv"));
        assert_eq!(table_path(Path::new("out/fig2.csv"), &t, 0), PathBuf::from("out/fig2.csv"));
    }

    #[test]
    fn timeline_dumps() {
        let spec = parse_sequence_name("cpmg", 1.0, 1).unwrap();
        let text = dump_timeline(&spec, "text").unwrap();
        assert!(text.contains("D 0.5\nP 90 180\nD 1\nP 90 180\nD 0.5"), "{text}");
        let kdd = dump_timeline(&parse_sequence_name("kdd", 1.0, 1).unwrap(), "text").unwrap();
        assert_eq!(kdd.lines().filter(|l| l.starts_with("P ")).count(), 20);
        assert!(dump_timeline(&spec, "yaml").is_err());
    }
}
