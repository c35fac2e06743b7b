use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{initial_irs, optimize_scheme, AlgoParams, Solution};
use crate::error::{Error, Result};
use crate::subproblems::{quantize_phases, repair, retime, Problem, QuantizationSpec, SchemeOptions};
use crate::sysmodel::{evaluate, evaluate_no_dt, ChannelSet, DtState, SystemConfig};

/// Comparison schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Random phases, never optimized.
    RandomPhase,
    /// Reflected paths removed.
    NoIrs,
    /// UEs and the ES do no computing of their own.
    OffloadingOnly,
    /// No cloud tier: the ES keeps everything it receives.
    SingleTier,
    /// Designed as if every deviation were zero, scored with the true ones.
    NoDt,
    /// Phases quantized to `l` bits after optimization.
    Quantized(u32),
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RandomPhase => f.write_str("random_phase"),
            Self::NoIrs => f.write_str("no_irs"),
            Self::OffloadingOnly => f.write_str("offloading_only"),
            Self::SingleTier => f.write_str("single_tier"),
            Self::NoDt => f.write_str("no_dt"),
            Self::Quantized(l) => write!(f, "quantized({l})"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random_phase" => Self::RandomPhase,
            "no_irs" => Self::NoIrs,
            "offloading_only" => Self::OffloadingOnly,
            "single_tier" => Self::SingleTier,
            "no_dt" => Self::NoDt,
            _ => {
                let bits = s
                    .strip_prefix("quantized(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|b| b.parse::<u32>().ok())
                    .filter(|&b| (1..=16).contains(&b));
                match bits {
                    Some(l) => Self::Quantized(l),
                    None => return Err(Error::InvalidInput(format!("unknown scheme '{s}'"))),
                }
            }
        })
    }
}

/// Runs one comparison scheme. Every scheme starts from the same random
/// phases as [`super::optimize`] for the same seed.
pub fn run_baseline(
    kind: BaselineKind,
    config: &SystemConfig,
    channels: &ChannelSet,
    dt: &DtState,
    params: &AlgoParams,
) -> Result<Solution> {
    let irs = initial_irs(config);
    let full = SchemeOptions::default();
    match kind {
        BaselineKind::RandomPhase => {
            optimize_scheme(config, channels, dt, params, SchemeOptions { optimize_irs: false, ..full }, irs)
        }
        BaselineKind::NoIrs => {
            let opts = SchemeOptions { optimize_irs: false, ..full };
            optimize_scheme(config, &channels.without_reflection(), dt, params, opts, irs)
        }
        BaselineKind::OffloadingOnly => {
            let opts = SchemeOptions { local_compute: false, es_compute: false, ..full };
            optimize_scheme(config, channels, dt, params, opts, irs)
        }
        BaselineKind::SingleTier => {
            optimize_scheme(config, channels, dt, params, SchemeOptions { cloud_tier: false, ..full }, irs)
        }
        BaselineKind::NoDt => {
            let unaware = DtState::zero(config.k_o);
            let mut sol = optimize_scheme(config, channels, &unaware, params, full, irs)?;
            sol.report = evaluate_no_dt(config, channels, &sol.irs, dt, &sol.decision)?;
            Ok(sol)
        }
        BaselineKind::Quantized(l) => {
            let mut sol = optimize_scheme(config, channels, dt, params, full, irs)?;
            let Some(mut it) = sol.iterate.take() else {
                return Ok(sol);
            };
            let spec = QuantizationSpec { l };
            it.irs.v1 = quantize_phases(&it.irs.v1, spec);
            it.irs.v2 = quantize_phases(&it.irs.v2, spec);
            let problem = Problem { config, channels, dt, options: full, params: params.inner };
            retime(&problem, &mut it)?;
            repair(&problem, &mut it);
            sol.decision = it.to_decision(&problem)?;
            sol.report = evaluate(config, channels, &it.irs, dt, &sol.decision)?;
            sol.irs = it.irs.clone();
            sol.iterate = Some(it);
            Ok(sol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in [
            BaselineKind::RandomPhase,
            BaselineKind::NoIrs,
            BaselineKind::OffloadingOnly,
            BaselineKind::SingleTier,
            BaselineKind::NoDt,
            BaselineKind::Quantized(3),
        ] {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("quantized(0)".parse::<BaselineKind>().is_err());
        assert!("bogus".parse::<BaselineKind>().is_err());
    }
}
