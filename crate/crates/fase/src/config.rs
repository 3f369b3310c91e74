//! Run configuration: defaults, a key=value config-file parser, and
//! validation. Command-line flags override file values field by field.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::transport::{ChannelConfig, FrameFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    InProcess,
    Socket,
    Serial,
}

impl BackendKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inprocess" => Some(BackendKind::InProcess),
            "socket" => Some(BackendKind::Socket),
            "serial" => Some(BackendKind::Serial),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::InProcess => "inprocess",
            BackendKind::Socket => "socket",
            BackendKind::Serial => "serial",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub elf: PathBuf,
    pub argv: Vec<String>,
    pub envp: Vec<String>,
    pub libdir: Option<PathBuf>,
    pub preload: Vec<PathBuf>,
    /// Preload the workload's own file pages into target buffer pages.
    pub preload_workload: bool,
    pub cores: u8,
    pub mem_mib: u64,
    pub baud: u64,
    pub frame: FrameFormat,
    pub latency_extra: f64,
    pub backend: BackendKind,
    pub socket_addr: Option<String>,
    pub serial_dev: Option<PathBuf>,
    pub hfutex: bool,
    pub direct: bool,
    pub seed: u64,
    pub ns_per_tick: u64,
    /// CLOCK_REALTIME epoch offset in seconds.
    pub epoch_sec: u64,
    pub report_path: Option<PathBuf>,
    pub capture_stdout: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            elf: PathBuf::new(),
            argv: Vec::new(),
            envp: Vec::new(),
            libdir: None,
            preload: Vec::new(),
            preload_workload: true,
            cores: 4,
            mem_mib: 256,
            baud: 921_600,
            frame: FrameFormat::EIGHT_N_TWO,
            latency_extra: 0.0,
            backend: BackendKind::InProcess,
            socket_addr: None,
            serial_dev: None,
            hfutex: true,
            direct: false,
            seed: 0,
            ns_per_tick: 10,
            epoch_sec: 1_600_000_000,
            report_path: None,
            capture_stdout: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid {key}: {value}")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunConfig {
    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig { baud: self.baud, frame: self.frame, latency_extra: self.latency_extra }
    }

    /// Parse a `key=value` config file into `self` (later keys win).
    /// `arg=` and `env=` and `preload=` accumulate.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line: i + 1, msg: format!("expected key=value, got {line:?}") })?;
            self.apply_kv(key.trim(), value.trim())
                .map_err(|msg| ConfigError::Parse { line: i + 1, msg })?;
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |v: &str| format!("invalid value {v:?} for {key}");
        match key {
            "elf" => self.elf = PathBuf::from(value),
            "arg" => self.argv.push(value.to_string()),
            "env" => self.envp.push(value.to_string()),
            "libdir" => self.libdir = Some(PathBuf::from(value)),
            "preload" => self.preload.push(PathBuf::from(value)),
            "preload_workload" => self.preload_workload = parse_bool(value).ok_or_else(|| bad(value))?,
            "cores" => self.cores = value.parse().map_err(|_| bad(value))?,
            "mem_mib" => self.mem_mib = value.parse().map_err(|_| bad(value))?,
            "baud" => self.baud = value.parse().map_err(|_| bad(value))?,
            "frame" => self.frame = FrameFormat::parse(value).ok_or_else(|| bad(value))?,
            "latency_extra" => self.latency_extra = value.parse().map_err(|_| bad(value))?,
            "backend" => self.backend = BackendKind::parse(value).ok_or_else(|| bad(value))?,
            "socket_addr" => self.socket_addr = Some(value.to_string()),
            "serial_dev" => self.serial_dev = Some(PathBuf::from(value)),
            "hfutex" => self.hfutex = parse_bool(value).ok_or_else(|| bad(value))?,
            "direct" => self.direct = parse_bool(value).ok_or_else(|| bad(value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(value))?,
            "ns_per_tick" => self.ns_per_tick = value.parse().map_err(|_| bad(value))?,
            "epoch_sec" => self.epoch_sec = value.parse().map_err(|_| bad(value))?,
            "report" => self.report_path = Some(PathBuf::from(value)),
            "capture_stdout" => self.capture_stdout = parse_bool(value).ok_or_else(|| bad(value))?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cores == 0 {
            return Err(ConfigError::Invalid("core count must be at least 1".into()));
        }
        if self.baud == 0 {
            return Err(ConfigError::Invalid("baud must be positive".into()));
        }
        if self.ns_per_tick == 0 || 1_000_000_000 % self.ns_per_tick != 0 {
            return Err(ConfigError::Invalid("ns_per_tick must divide 1e9".into()));
        }
        if self.mem_mib < 16 {
            return Err(ConfigError::Invalid("memory must be at least 16 MiB".into()));
        }
        if !self.elf.exists() {
            return Err(ConfigError::Invalid(format!("elf not found: {}", self.elf.display())));
        }
        if let Some(d) = &self.libdir {
            if !d.is_dir() {
                return Err(ConfigError::Invalid(format!("libdir not found: {}", d.display())));
            }
        }
        for p in &self.preload {
            if !p.exists() {
                return Err(ConfigError::Invalid(format!("preload file not found: {}", p.display())));
            }
        }
        if self.backend == BackendKind::Socket && self.socket_addr.is_none() {
            return Err(ConfigError::Invalid("socket backend needs socket_addr".into()));
        }
        if self.backend == BackendKind::Serial && self.serial_dev.is_none() {
            return Err(ConfigError::Invalid("serial backend needs serial_dev".into()));
        }
        Ok(())
    }
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "1" | "yes" => Some(true),
        "off" | "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_round_trip_and_overrides() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\ncores=2\nbaud=115200\nframe=8N1\narg=alpha\narg=beta\nhfutex=off").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(f.path()).unwrap();
        assert_eq!(cfg.cores, 2);
        assert_eq!(cfg.baud, 115_200);
        assert_eq!(cfg.frame.bits_per_byte(), 10);
        assert_eq!(cfg.argv, vec!["alpha", "beta"]);
        assert!(!cfg.hfutex);
        cfg.apply_kv("cores", "8").unwrap();
        assert_eq!(cfg.cores, 8);
        assert!(cfg.apply_kv("nonsense", "1").is_err());
    }

    #[test]
    fn validation_catches_missing_elf() {
        let cfg = RunConfig { elf: PathBuf::from("/no/such/file"), ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
