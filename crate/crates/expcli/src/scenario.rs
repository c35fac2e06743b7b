use std::fmt;
use std::str::FromStr;

use hybridcomp_core::orchestrator::BaselineKind;
use serde::{Deserialize, Serialize};

use crate::config::ExpConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Convergence,
    VsN,
    VsUePower,
    VsEsPower,
    VsUeDeviation,
    VsEsDeviation,
    VsOffloadingOnly,
    VsSingleTier,
}

impl ScenarioKind {
    pub const ALL: [Self; 8] = [
        Self::Convergence,
        Self::VsN,
        Self::VsUePower,
        Self::VsEsPower,
        Self::VsUeDeviation,
        Self::VsEsDeviation,
        Self::VsOffloadingOnly,
        Self::VsSingleTier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::VsN => "vs_n",
            Self::VsUePower => "vs_ue_power",
            Self::VsEsPower => "vs_es_power",
            Self::VsUeDeviation => "vs_ue_deviation",
            Self::VsEsDeviation => "vs_es_deviation",
            Self::VsOffloadingOnly => "vs_offloading_only",
            Self::VsSingleTier => "vs_single_tier",
        }
    }

    /// What the sweep varies.
    pub fn sweep(self) -> Sweep {
        match self {
            Self::Convergence => Sweep::Iteration,
            Self::VsN => Sweep::IrsElements,
            Self::VsUePower | Self::VsOffloadingOnly => Sweep::UePowerDbm,
            Self::VsEsPower | Self::VsSingleTier => Sweep::EsPowerDbm,
            Self::VsUeDeviation => Sweep::UeDeviation,
            Self::VsEsDeviation => Sweep::EsDeviation,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Outer iteration index; the trace of a single solve.
    Iteration,
    IrsElements,
    UePowerDbm,
    EsPowerDbm,
    /// Fraction of the UE CPU cap.
    UeDeviation,
    /// Fraction of the ES CPU cap.
    EsDeviation,
}

impl Sweep {
    /// Column label written to the CSV.
    pub fn param(self) -> &'static str {
        match self {
            Self::Iteration => "iteration",
            Self::IrsElements => "n",
            Self::UePowerDbm => "p_o_dbm",
            Self::EsPowerDbm => "p_es_dbm",
            Self::UeDeviation => "ue_deviation_fraction",
            Self::EsDeviation => "es_deviation_fraction",
        }
    }

    /// Applies a sweep value to a copy of the configuration.
    pub fn apply(self, base: &ExpConfig, value: f64) -> Result<ExpConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Iteration => {}
            Self::IrsElements => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("N must be a positive integer, got {value}")));
                }
                cfg.system.n = value as usize;
            }
            Self::UePowerDbm => cfg.system.p_o_dbm = value,
            Self::EsPowerDbm => cfg.system.p_es_dbm = value,
            Self::UeDeviation => cfg.deviation.ue_fraction = value,
            Self::EsDeviation => cfg.deviation.es_fraction = value,
        }
        Ok(cfg)
    }

    /// The sweep value in SI units: watts for powers, cycles/s for
    /// deviations, unchanged otherwise.
    pub fn si_value(self, base: &ExpConfig, value: f64) -> f64 {
        match self {
            Self::Iteration | Self::IrsElements => value,
            Self::UePowerDbm | Self::EsPowerDbm => hybridcomp_core::sysmodel::dbm_to_watts(value),
            Self::UeDeviation => value * base.system.f_lo_max,
            Self::EsDeviation => value * base.system.f_es_max,
        }
    }
}

/// A scheme run in a scenario: the full optimizer or a comparison scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Optimize,
    Baseline(BaselineKind),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Optimize => f.write_str("optimize"),
            Self::Baseline(k) => k.fmt(f),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "optimize" {
            return Ok(Self::Optimize);
        }
        s.parse::<BaselineKind>().map(Self::Baseline).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
}

/// Iterations recorded by the convergence scenario. Runs that stop earlier
/// repeat their final objective.
pub const CONVERGENCE_HORIZON: usize = 20;

impl Scenario {
    /// The default grid, schemes and trial count for a scenario.
    pub fn preset(kind: ScenarioKind) -> Self {
        use BaselineKind::*;
        let irs = vec![Scheme::Optimize, Scheme::Baseline(RandomPhase), Scheme::Baseline(NoIrs)];
        let dev = vec![0.0, 0.1, 0.2, 0.3];
        let ue_power = vec![0.0, 5.0, 10.0, 15.0];
        let es_power = vec![10.0, 15.0, 20.0, 25.0, 30.0];
        let (grid, schemes) = match kind {
            ScenarioKind::Convergence => {
                ((0..=CONVERGENCE_HORIZON).map(|i| i as f64).collect(), vec![Scheme::Optimize])
            }
            ScenarioKind::VsN => (vec![10.0, 20.0, 30.0, 40.0, 50.0], irs),
            ScenarioKind::VsUePower => (ue_power, irs),
            ScenarioKind::VsEsPower => (es_power, irs),
            ScenarioKind::VsUeDeviation | ScenarioKind::VsEsDeviation => {
                (dev, vec![Scheme::Optimize, Scheme::Baseline(NoDt)])
            }
            ScenarioKind::VsOffloadingOnly => (ue_power, vec![Scheme::Optimize, Scheme::Baseline(OffloadingOnly)]),
            ScenarioKind::VsSingleTier => (es_power, vec![Scheme::Optimize, Scheme::Baseline(SingleTier)]),
        };
        let trials = if kind == ScenarioKind::Convergence { 1 } else { 20 };
        Self { kind, grid, trials, schemes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if self.kind == ScenarioKind::Convergence && self.grid.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Config("convergence grid holds iteration indices".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
            Scenario::preset(k).validate().unwrap();
        }
        assert!("vs_m".parse::<ScenarioKind>().is_err());
        assert_eq!("quantized(3)".parse::<Scheme>().unwrap().to_string(), "quantized(3)");
    }

    #[test]
    fn sweeps_touch_the_right_field() {
        let base = ExpConfig::default();
        assert_eq!(Sweep::IrsElements.apply(&base, 30.0).unwrap().system.n, 30);
        assert!(Sweep::IrsElements.apply(&base, 2.5).is_err());
        assert_eq!(Sweep::EsPowerDbm.apply(&base, 25.0).unwrap().system.p_es_dbm, 25.0);
        assert!((Sweep::UePowerDbm.si_value(&base, 0.0) - 1e-3).abs() < 1e-15);
        assert_eq!(Sweep::EsDeviation.si_value(&base, 0.2), 0.2 * base.system.f_es_max);
    }
}
