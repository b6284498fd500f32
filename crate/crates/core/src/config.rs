//! Scenario configuration: a TOML document mapping 1:1 onto [`ScenarioConfig`].
//!
//! ```toml
//! n_slots = 101
//! slot_duration_ms = 20.0
//! n_ch = 16
//! t_app_s = 30.0
//! t_update_min = 30.0
//! consip_enabled = true
//! duration_s = 31536000.0   # one 365-day year
//! cell_i = 1
//! cell_j = 51
//! channel_offset = 0
//! seed = 1
//!
//! [frame]
//! l_header = 29
//! l_payload = 30
//! l_ie_h = 2
//! l_ie_p = 16
//!
//! [loss]
//! eps_f = 0.126
//! eps_a = 0.08
//!
//! [energy]
//! e_tx0 = 7.0
//! e_tx_per_byte = 2.0
//! e_rx0 = 65.0
//! e_rx_per_byte = 1.3
//! e_tx_ack = 106.0
//! e_rx_ack = 79.0
//! e_listen = 138.0
//! ```
//!
//! Every key is optional; missing keys take the values shown. Overrides use
//! dotted keys (`loss.eps_f=0`) and TOML value syntax, falling back to a bare
//! string when the value does not parse.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{EnergyParams, FrameSizeModel};
use crate::hopping::{SlotframeConfig, BAND_CHANNELS};
use crate::ie;
use crate::medium::LossParams;

pub const SECONDS_PER_YEAR: f64 = 365.0 * 86_400.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("override {key:?}: {reason}")]
    OverridePath { key: String, reason: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_slots: u32,
    pub slot_duration_ms: f64,
    /// Channels of the initial hopping function.
    pub n_ch: usize,
    /// Application generation period, seconds.
    pub t_app_s: f64,
    /// Period between hopping-function updates, minutes. Ignored when disabled.
    pub t_update_min: f64,
    pub consip_enabled: bool,
    /// Simulated time, seconds.
    pub duration_s: f64,
    /// Slot offset of the initial current cell.
    pub cell_i: u32,
    /// Slot offset of the initial backup cell.
    pub cell_j: u32,
    pub channel_offset: u16,
    pub seed: u64,
    pub frame: FrameSizeModel,
    pub loss: LossParams,
    pub energy: EnergyParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_slots: 101,
            slot_duration_ms: 20.0,
            n_ch: 16,
            t_app_s: 30.0,
            t_update_min: 30.0,
            consip_enabled: true,
            duration_s: SECONDS_PER_YEAR,
            cell_i: 1,
            cell_j: 51,
            channel_offset: 0,
            seed: 1,
            frame: FrameSizeModel::default(),
            loss: LossParams::default(),
            energy: EnergyParams::default(),
        }
    }
}

/// A validated scenario with every period expressed in whole slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub slotframe: SlotframeConfig,
    pub t_app_slots: u64,
    /// `None` when the exchange protocol is disabled.
    pub t_update_slots: Option<u64>,
    pub duration_slots: u64,
}

impl Scenario {
    pub fn slot_seconds(&self) -> f64 {
        self.slotframe.slot_seconds()
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.slotframe.slots_to_seconds(self.duration_slots)
    }
}

fn whole_slots(what: &str, seconds: f64, slot_s: f64) -> Result<u64, ConfigError> {
    let slots = seconds / slot_s;
    let rounded = slots.round();
    if !slots.is_finite() || rounded < 1.0 || (slots - rounded).abs() > 1e-6 {
        return Err(invalid(format!(
            "{what} = {seconds} s is not a positive whole number of {slot_s} s slots"
        )));
    }
    Ok(rounded as u64)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok(table.try_into()?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    pub fn with_duration_years(mut self, years: f64) -> Self {
        self.duration_s = years * SECONDS_PER_YEAR;
        self
    }

    /// Samples per channel available to compute each new hopping function.
    pub fn samples_per_channel(&self) -> f64 {
        self.t_update_min * 60.0 / (self.t_app_s * self.n_ch as f64)
    }

    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        if !(self.slot_duration_ms.is_finite() && self.slot_duration_ms > 0.0) {
            return Err(invalid("slot_duration_ms must be positive"));
        }
        let slotframe = SlotframeConfig::new(
            self.n_slots,
            Duration::from_secs_f64(self.slot_duration_ms / 1000.0),
        )
        .map_err(|e| invalid(e.to_string()))?;
        let slot_s = slotframe.slot_seconds();
        if self.cell_i == self.cell_j {
            return Err(invalid(format!(
                "cell_i and cell_j must differ (both {})",
                self.cell_i
            )));
        }
        for (name, off) in [("cell_i", self.cell_i), ("cell_j", self.cell_j)] {
            if off >= self.n_slots {
                return Err(invalid(format!(
                    "{name} = {off} outside 0..{}",
                    self.n_slots
                )));
            }
        }
        if !(1..=BAND_CHANNELS).contains(&self.n_ch) {
            return Err(invalid(format!(
                "n_ch = {} outside 1..={BAND_CHANNELS}",
                self.n_ch
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return Err(invalid("duration_s must be non-negative"));
        }
        let t_app_slots = whole_slots("t_app_s", self.t_app_s, slot_s)?;
        let t_update_slots = if self.consip_enabled {
            let slots = whole_slots("t_update_min", self.t_update_min * 60.0, slot_s)?;
            if slots % t_app_slots != 0 {
                return Err(invalid(format!(
                    "t_update_min = {} is not a whole multiple of t_app_s = {}",
                    self.t_update_min, self.t_app_s
                )));
            }
            if ie::max_channels_for_budget(self.frame.l_ie_p as usize) == 0 {
                return Err(invalid(format!(
                    "frame.l_ie_p = {} leaves no room for a hopping sequence",
                    self.frame.l_ie_p
                )));
            }
            Some(slots)
        } else {
            None
        };
        if self.frame.l_tot(false) == 0 {
            return Err(invalid("frames must be at least one byte long"));
        }
        self.loss.validate().map_err(|e| invalid(e.to_string()))?;
        if !self.energy.is_valid() {
            return Err(invalid("energy parameters must be finite and non-negative"));
        }
        Ok(Scenario {
            config: self.clone(),
            slotframe,
            t_app_slots,
            t_update_slots,
            duration_slots: (self.duration_s / slot_s + 1e-9).floor() as u64,
        })
    }
}

/// Sets a dotted key in a TOML table from a `key=value` string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cursor = table;
    for part in parts {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::OverridePath {
                key: key.to_string(),
                reason: format!("{part} is not a table"),
            })?;
    }
    cursor.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let s = cfg.validate().unwrap();
        assert_eq!(s.t_app_slots, 1500);
        assert_eq!(s.t_update_slots, Some(90_000));
        assert_eq!(s.duration_slots, 1_576_800_000);
        assert!((cfg.samples_per_channel() - 3.75).abs() < 1e-12);
    }

    #[test]
    fn shipped_sample_config_is_the_default() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(
            ScenarioConfig::from_toml_str(text).unwrap(),
            ScenarioConfig::default()
        );
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }

    #[test]
    fn overrides_apply_dotted_keys() {
        let cfg = ScenarioConfig::from_toml_with_overrides(
            "t_app_s = 30.0\n[loss]\neps_f = 0.1\n",
            &[
                "t_app_s=5".into(),
                "loss.eps_a = 0".into(),
                "frame.l_ie_p=8".into(),
                "consip_enabled=false".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.t_app_s, 5.0);
        assert_eq!(cfg.loss.eps_f, 0.1);
        assert_eq!(cfg.loss.eps_a, 0.0);
        assert_eq!(cfg.frame.l_ie_p, 8);
        assert!(!cfg.consip_enabled);
    }

    #[test]
    fn bad_overrides_are_reported() {
        assert!(matches!(
            ScenarioConfig::from_toml_with_overrides("", &["nonsense".into()]),
            Err(ConfigError::BadOverride(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_with_overrides("t_app_s = 30.0", &["t_app_s.x=1".into()]),
            Err(ConfigError::OverridePath { .. })
        ));
        assert!(ScenarioConfig::from_toml_with_overrides("", &["no_such_key=1".into()]).is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_scenarios() {
        let bad = |f: fn(&mut ScenarioConfig)| {
            let mut c = ScenarioConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.cell_j = c.cell_i));
        assert!(bad(|c| c.cell_j = 101));
        assert!(bad(|c| c.t_update_min = 7.25));
        assert!(bad(|c| c.t_app_s = 0.03));
        assert!(bad(|c| c.n_slots = 1));
        assert!(bad(|c| c.loss.eps_f = 1.0));
        assert!(bad(|c| c.energy.e_listen = -1.0));
        assert!(bad(|c| c.frame.l_ie_p = 3));
        assert!(bad(|c| c.duration_s = -1.0));
        // a non-multiple update period is fine when the protocol is off
        let c = ScenarioConfig {
            consip_enabled: false,
            t_update_min: 7.25,
            ..ScenarioConfig::default()
        };
        assert!(c.validate().is_ok());
    }
}
