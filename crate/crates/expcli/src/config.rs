//! Experiment configuration: a TOML file with `[system]`, `[deviation]` and
//! `[algorithm]` tables, optionally patched by `key=value` overrides.
//!
//! ```toml
//! [system]
//! k_a = 20
//! k_o = 5
//! m1 = 5
//! m2 = 5
//! n = 10
//! bandwidth_hz = 1e6
//! period_s = 1.0
//! p_a_dbm = 5.0
//! p_o_dbm = 5.0
//! p_es_dbm = 20.0
//! noise_es_dbm = -80.0
//! noise_cs_dbm = -80.0
//! rho = 500.0
//! kappa = 1e-28
//! w_a = 0.5
//! w_o = 0.5
//! f_lo_max = 1e9
//! f_es_max = 3e9
//! aircomp_bandwidth = true
//!
//! [deviation]
//! ue_fraction = 0.1
//! es_fraction = 0.1
//!
//! [algorithm]
//! epsilon = 1e-3
//! max_outer = 50
//! multi_start = true
//! ```
//!
//! Every key is optional; missing keys take the values above. Powers are
//! given in dBm and converted to watts once, here.

use std::path::Path;

use hybridcomp_core::orchestrator::AlgoParams;
use hybridcomp_core::sysmodel::{dbm_to_watts, DtState, SystemConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub k_a: usize,
    pub k_o: usize,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub bandwidth_hz: f64,
    pub period_s: f64,
    pub p_a_dbm: f64,
    pub p_o_dbm: f64,
    pub p_es_dbm: f64,
    pub noise_es_dbm: f64,
    pub noise_cs_dbm: f64,
    pub rho: f64,
    pub kappa: f64,
    pub w_a: f64,
    pub w_o: f64,
    /// Per-UE CPU cap (cycles/s), shared by every MEC UE.
    pub f_lo_max: f64,
    pub f_es_max: f64,
    pub aircomp_bandwidth: bool,
}

impl Default for SystemSection {
    fn default() -> Self {
        let c = SystemConfig::default();
        Self {
            k_a: c.k_a,
            k_o: c.k_o,
            m1: c.m1,
            m2: c.m2,
            n: c.n,
            bandwidth_hz: c.bandwidth,
            period_s: c.period,
            p_a_dbm: 5.0,
            p_o_dbm: 5.0,
            p_es_dbm: 20.0,
            noise_es_dbm: -80.0,
            noise_cs_dbm: -80.0,
            rho: c.rho,
            kappa: c.kappa,
            w_a: c.w_a,
            w_o: c.w_o,
            f_lo_max: c.f_lo_max[0],
            f_es_max: c.f_es_max,
            aircomp_bandwidth: c.aircomp_bandwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationSection {
    /// UE deviation as a fraction of the UE CPU cap.
    pub ue_fraction: f64,
    /// ES deviation as a fraction of the ES CPU cap.
    pub es_fraction: f64,
}

impl Default for DeviationSection {
    fn default() -> Self {
        Self { ue_fraction: 0.1, es_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSection {
    pub epsilon: f64,
    pub max_outer: usize,
    pub multi_start: bool,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let p = AlgoParams::default();
        Self { epsilon: p.epsilon, max_outer: p.max_outer, multi_start: p.multi_start }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpConfig {
    pub system: SystemSection,
    pub deviation: DeviationSection,
    pub algorithm: AlgorithmSection,
}

impl ExpConfig {
    /// Parses a TOML document and applies `section.key=value` overrides.
    /// Override values are parsed as TOML literals, falling back to strings.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for item in overrides {
            let (key, raw) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            let (section, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("override key '{key}' must be section.field")))?;
            let value = parse_literal(raw.trim());
            let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(Error::Config(format!("'{section}' is not a table")));
            };
            t.insert(field.to_string(), value);
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.system_config(0)?;
        Ok(cfg)
    }

    /// Loads the file if given, otherwise starts from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn system_config(&self, seed: u64) -> Result<SystemConfig> {
        let s = &self.system;
        let mut c = SystemConfig {
            k_a: s.k_a,
            m1: s.m1,
            m2: s.m2,
            n: s.n,
            bandwidth: s.bandwidth_hz,
            period: s.period_s,
            p_a: dbm_to_watts(s.p_a_dbm),
            p_o: dbm_to_watts(s.p_o_dbm),
            p_es: dbm_to_watts(s.p_es_dbm),
            sigma_e2: dbm_to_watts(s.noise_es_dbm),
            sigma_c2: dbm_to_watts(s.noise_cs_dbm),
            rho: s.rho,
            kappa: s.kappa,
            w_a: s.w_a,
            w_o: s.w_o,
            f_es_max: s.f_es_max,
            seed,
            aircomp_bandwidth: s.aircomp_bandwidth,
            ..SystemConfig::default()
        };
        c.f_lo_max = vec![s.f_lo_max; 1];
        c.set_k_o(s.k_o);
        c.validate()?;
        Ok(c)
    }

    pub fn dt_state(&self, config: &SystemConfig) -> Result<DtState> {
        let dt = DtState::from_fractions(config, self.deviation.ue_fraction, self.deviation.es_fraction);
        dt.validate(config)?;
        Ok(dt)
    }

    pub fn algo_params(&self) -> Result<AlgoParams> {
        let p = AlgoParams {
            epsilon: self.algorithm.epsilon,
            max_outer: self.algorithm.max_outer,
            multi_start: self.algorithm.multi_start,
            ..AlgoParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}
