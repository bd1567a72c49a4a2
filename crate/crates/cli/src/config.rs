//! Scenario configuration: JSON or `key = value` lines, plus command-line overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use concpp::coordinator::Scheduling;
use concpp::sim::{ClockMode, MissionConfig, PlannerModel};
use concpp::workspace::{parse_map, SensorModel};
use concpp::RobotKind;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    DifferentialDrive,
    Holonomic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Concurrent,
    Synchronous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    Virtual,
    Wall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: Option<PathBuf>,
    pub robots: usize,
    pub kind: Kind,
    pub seed: u64,
    pub mode: Mode,
    pub clock: Clock,
    pub tau_ms: u64,
    /// Look-ahead slack; defaults to 0 on the virtual clock and 50 on the wall clock.
    pub bias_ms: Option<u64>,
    pub cop_ms: u64,
    pub cfp_ms: u64,
    pub cfp_per_participant_ms: u64,
    pub first_attempt_extra_ms: u64,
    pub transport_delay_ms: u64,
    pub sensor_range: u32,
    pub repeats: usize,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let planner = PlannerModel::default();
        Self {
            map: None,
            robots: 4,
            kind: Kind::DifferentialDrive,
            seed: 0,
            mode: Mode::Concurrent,
            clock: Clock::Virtual,
            tau_ms: 1000,
            bias_ms: None,
            cop_ms: planner.cop_ms,
            cfp_ms: planner.cfp_ms,
            cfp_per_participant_ms: planner.cfp_per_participant_ms,
            first_attempt_extra_ms: planner.first_attempt_extra_ms,
            transport_delay_ms: 0,
            sensor_range: SensorModel::default().range,
            repeats: 1,
            threads: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl ScenarioConfig {
    /// Reads a config file. A relative `map` is taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(map), Some(dir)) = (&cfg.map, path.parent()) {
            if map.is_relative() {
                cfg.map = Some(dir.join(map));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| e.to_string());
        }
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment. The value is read with the type
    /// the key already has.
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| format!("expected key=value, got {assignment:?}"))?;
        let (key, raw) = (key.trim(), raw.trim());
        let Value::Object(mut fields) = serde_json::to_value(&*self).map_err(|e| e.to_string())? else { unreachable!() };
        let current = fields.get(key).ok_or_else(|| format!("unknown key {key:?}"))?;
        let value = match current {
            Value::Number(_) => serde_json::from_str(raw).map_err(|_| format!("{key}: expected a number, got {raw:?}"))?,
            Value::Null if raw == "auto" => Value::Null,
            Value::Null if key != "map" => serde_json::from_str(raw).map_err(|_| format!("{key}: expected a number or auto, got {raw:?}"))?,
            _ => Value::String(raw.to_string()),
        };
        fields.insert(key.to_string(), value);
        *self = serde_json::from_value(Value::Object(fields)).map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn resolved_bias(&self) -> u64 {
        self.bias_ms.unwrap_or(match self.clock {
            Clock::Virtual => 0,
            Clock::Wall => 50,
        })
    }

    /// Every key with its effective value, one `key = value` per line.
    pub fn to_key_values(&self) -> String {
        let mut resolved = self.clone();
        resolved.bias_ms = Some(self.resolved_bias());
        let Ok(Value::Object(fields)) = serde_json::to_value(&resolved) else { unreachable!() };
        let mut out = String::new();
        for key in field_order() {
            let text = match &fields[key] {
                Value::String(s) => s.clone(),
                Value::Null => "auto".into(),
                v => v.to_string(),
            };
            if key == "map" && fields[key].is_null() {
                continue;
            }
            let _ = writeln!(out, "{key} = {text}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.robots == 0 {
            return bad("robots must be at least 1");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.tau_ms == 0 {
            return bad("tau_ms must be positive");
        }
        match &self.map {
            None => bad("no map given"),
            Some(m) if !m.is_file() => Err(CliError::Config(format!("map {} does not exist", m.display()))),
            Some(_) => Ok(()),
        }
    }

    pub fn mission(&self) -> Result<MissionConfig, CliError> {
        self.validate()?;
        let path = self.map.as_ref().expect("validated");
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let ws = parse_map(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let kind = match self.kind {
            Kind::DifferentialDrive => RobotKind::DifferentialDrive,
            Kind::Holonomic => RobotKind::Holonomic,
        };
        let mut cfg = MissionConfig::new(ws, self.robots, kind, self.seed);
        cfg.tau_ms = self.tau_ms;
        cfg.bias_ms = Some(self.resolved_bias());
        cfg.sensor = SensorModel { range: self.sensor_range };
        cfg.scheduling = match self.mode {
            Mode::Concurrent => Scheduling::Concurrent,
            Mode::Synchronous => Scheduling::Synchronous,
        };
        cfg.clock = match self.clock {
            Clock::Virtual => ClockMode::Virtual {
                planner: PlannerModel {
                    cop_ms: self.cop_ms,
                    cfp_ms: self.cfp_ms,
                    cfp_per_participant_ms: self.cfp_per_participant_ms,
                    first_attempt_extra_ms: self.first_attempt_extra_ms,
                },
                transport_delay_ms: self.transport_delay_ms,
            },
            Clock::Wall => ClockMode::WallClock,
        };
        Ok(cfg)
    }
}

fn field_order() -> [&'static str; 17] {
    [
        "map",
        "robots",
        "kind",
        "seed",
        "mode",
        "clock",
        "tau_ms",
        "bias_ms",
        "cop_ms",
        "cfp_ms",
        "cfp_per_participant_ms",
        "first_attempt_extra_ms",
        "transport_delay_ms",
        "sensor_range",
        "repeats",
        "threads",
        "out",
    ]
}
