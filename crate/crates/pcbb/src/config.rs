//! Scenario files.
//!
//! A scenario file is TOML. Every section of [`ScenarioConfig`] is a table
//! with the same field names (`[traffic]`, `[sim]`, `[channel]`, `[mac]`,
//! `[beacon]`, `[pcbb]`, `[protocol]`, `[metrics]`); omitted keys take their
//! defaults and unknown keys are rejected. Two things differ from the core
//! struct:
//!
//! - `protocol.kind` is required and may name one protocol, a list of them,
//!   or `"all"`.
//! - `[run]` holds `seeds` (list of integers) and `output_dir`.
//!
//! Command-line overrides replace file values; see [`Overrides`].

use std::fmt;
use std::path::{Path, PathBuf};

use pcbb_core::beaconing::BeaconParams;
use pcbb_core::channel::ChannelParams;
use pcbb_core::forwarder::PcbbParams;
use pcbb_core::mac::MacParams;
use pcbb_core::metrics::MetricsParams;
use pcbb_core::mobility::TrafficParams;
use pcbb_core::protocols::{DangerEvent, ProtocolKind, ProtocolParams};
use pcbb_core::scenario::SimParams;
use pcbb_core::ScenarioConfig;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::Error;

pub const DEFAULT_OUTPUT_DIR: &str = "out";

pub fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// A config problem, located in the file when possible.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct Diagnostic {
    pub path: Option<PathBuf>,
    /// 1-based.
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}", p.display())?,
            None => f.write_str("<config>")?,
        }
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        f.write_str(": ")?;
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Flag values that beat the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub protocol: Option<ProtocolKind>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
}

/// A validated sweep: one scenario, run for every protocol and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    /// `protocol.kind` here is a placeholder; each run sets its own.
    pub scenario: ScenarioConfig,
    pub protocols: Vec<ProtocolKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Experiment {
    pub fn scenario_for(&self, kind: ProtocolKind) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        s.protocol.kind = kind;
        s
    }

    pub fn hash(&self) -> String {
        scenario_hash(&self.scenario)
    }
}

/// SHA-256 over every simulation key except `protocol.kind`, as hex.
pub fn scenario_hash(scenario: &ScenarioConfig) -> String {
    let mut s = scenario.clone();
    s.protocol.kind = ProtocolKind::Pcbb;
    let canonical = toml::to_string(&s).expect("scenario serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
struct ProtocolSet(Vec<ProtocolKind>);

impl<'de> Deserialize<'de> for ProtocolSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(String),
            Many(Vec<String>),
        }
        let names = match Raw::deserialize(d)? {
            Raw::One(s) => vec![s],
            Raw::Many(v) => v,
        };
        let mut out = Vec::new();
        for name in &names {
            let kinds = if name == "all" {
                ProtocolKind::ALL.to_vec()
            } else {
                match ProtocolKind::parse(name) {
                    Some(k) => vec![k],
                    None => {
                        return Err(serde::de::Error::custom(format!(
                            "unknown protocol `{name}`; expected pcbb, cbb, emdv or all"
                        )))
                    }
                }
            };
            for k in kinds {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        if out.is_empty() {
            return Err(serde::de::Error::custom("at least one protocol is required"));
        }
        Ok(ProtocolSet(out))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProtocol {
    kind: Option<ProtocolSet>,
    hop_cap: Option<u8>,
    danger_schedule: Option<Vec<DangerEvent>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRun {
    seeds: Option<Vec<u64>>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    traffic: TrafficParams,
    #[serde(default)]
    sim: SimParams,
    #[serde(default)]
    channel: ChannelParams,
    #[serde(default)]
    mac: MacParams,
    #[serde(default)]
    beacon: BeaconParams,
    #[serde(default)]
    pcbb: PcbbParams,
    protocol: Option<FileProtocol>,
    #[serde(default)]
    metrics: MetricsParams,
    #[serde(default)]
    run: FileRun,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `section.key`, or of the `[section]` header when the key is
/// absent.
pub fn find_key_line(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.')?;
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            current = name.trim().to_string();
            if current.starts_with(&format!("{section}.")) && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        let k = k.trim();
        if (current == section && k == key) || (current.is_empty() && k == dotted) {
            return Some(i + 1);
        }
    }
    header
}

/// Parses and validates a scenario file's text.
pub fn load_str(text: &str, path: Option<&Path>, overrides: &Overrides) -> Result<Experiment, Diagnostic> {
    let diag = |line: Option<usize>, key: Option<String>, message: String| Diagnostic {
        path: path.map(Path::to_path_buf),
        line,
        key,
        message,
    };

    let file: FileConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        diag(line, None, e.message().to_string())
    })?;

    let protocol = file.protocol;
    let protocols = match (&overrides.protocol, protocol.as_ref().and_then(|p| p.kind.clone())) {
        (Some(k), _) => vec![*k],
        (None, Some(set)) => set.0,
        (None, None) => {
            return Err(diag(
                find_key_line(text, "protocol.kind"),
                Some("protocol.kind".into()),
                "required key is missing (pcbb, cbb, emdv, a list of them, or \"all\")".into(),
            ))
        }
    };
    let mut protocol_params = ProtocolParams::default();
    if let Some(p) = protocol {
        if let Some(h) = p.hop_cap {
            protocol_params.hop_cap = h;
        }
        if let Some(s) = p.danger_schedule {
            protocol_params.danger_schedule = s;
        }
    }

    let scenario = ScenarioConfig {
        traffic: file.traffic,
        sim: file.sim,
        channel: file.channel,
        mac: file.mac,
        beacon: file.beacon,
        pcbb: file.pcbb,
        protocol: protocol_params,
        metrics: file.metrics,
    };
    scenario
        .validate()
        .map_err(|e| diag(find_key_line(text, e.key), Some(e.key.to_string()), e.reason))?;

    let seeds = overrides.seeds.clone().or(file.run.seeds).unwrap_or_else(default_seeds);
    if seeds.is_empty() {
        return Err(diag(
            find_key_line(text, "run.seeds"),
            Some("run.seeds".into()),
            "at least one seed is required".into(),
        ));
    }
    let output_dir = overrides
        .output_dir
        .clone()
        .or(file.run.output_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    Ok(Experiment {
        scenario,
        protocols,
        seeds,
        output_dir,
    })
}

pub fn load_file(path: &Path, overrides: &Overrides) -> Result<Experiment, Error> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(load_str(&text, Some(path), overrides)?)
}

/// Parses `"1,2,5"`, `"0..20"` (end exclusive) or a mix such as `"0..3,7"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
            if a >= b {
                return Err(format!("empty seed range `{part}`"));
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}
