use serde::{Deserialize, Serialize};

/// Per-second coefficients of the time-allocation linear program.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeCoefficients {
    /// Objective gained per second of stage 1.
    pub stage1: f64,
    /// Objective gained per second of stage 2.
    pub stage2: f64,
    /// Bits offloaded per second of stage 1.
    pub offload: f64,
    /// Bits the ES absorbs per second of stage 2.
    pub es_throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub t1: f64,
    pub t2: f64,
    pub objective: f64,
}

/// Maximizes `stage1 T1 + stage2 T2` subject to `T1 + T2 <= T`,
/// `offload T1 <= es_throughput T2` and `T1, T2 >= 0` by enumerating the
/// vertices of the feasible polygon.
pub fn solve_time(coef: &TimeCoefficients, period: f64) -> TimeSplit {
    let mut vertices = vec![(0.0, 0.0), (0.0, period)];
    if coef.offload <= 0.0 {
        vertices.push((period, 0.0));
    } else if coef.es_throughput > 0.0 {
        let t1 = period * coef.es_throughput / (coef.offload + coef.es_throughput);
        vertices.push((t1, period - t1));
    }
    let mut best = TimeSplit { t1: 0.0, t2: 0.0, objective: 0.0 };
    for (t1, t2) in vertices {
        let objective = coef.stage1 * t1 + coef.stage2 * t2;
        if objective > best.objective {
            best = TimeSplit { t1, t2, objective };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causality_vertex() {
        let c = TimeCoefficients { stage1: 2.0, stage2: 0.0, offload: 1.0, es_throughput: 3.0 };
        let s = solve_time(&c, 1.0);
        assert_eq!((s.t1, s.t2, s.objective), (0.75, 0.25, 1.5));
    }

    #[test]
    fn stage2_corner() {
        let c = TimeCoefficients { stage1: 1.0, stage2: 5.0, offload: 1.0, es_throughput: 1.0 };
        let s = solve_time(&c, 2.0);
        assert_eq!((s.t1, s.t2), (0.0, 2.0));
    }

    #[test]
    fn zero_rates() {
        let c = TimeCoefficients { stage1: 0.0, stage2: 0.0, offload: 0.0, es_throughput: 0.0 };
        let s = solve_time(&c, 1.0);
        assert_eq!(s.objective, 0.0);
        assert!(s.t1 + s.t2 <= 1.0);
    }

    #[test]
    fn no_offloading_uses_whole_frame() {
        let c = TimeCoefficients { stage1: 3.0, stage2: 1.0, offload: 0.0, es_throughput: 0.0 };
        let s = solve_time(&c, 1.0);
        assert_eq!((s.t1, s.t2), (1.0, 0.0));
    }

    #[test]
    fn matches_dense_grid() {
        let c = TimeCoefficients { stage1: 1.3, stage2: 0.4, offload: 2.0, es_throughput: 0.7 };
        let s = solve_time(&c, 1.0);
        let mut best: f64 = 0.0;
        for i in 0..=400 {
            for j in 0..=(400 - i) {
                let (t1, t2) = (i as f64 / 400.0, j as f64 / 400.0);
                if c.offload * t1 <= c.es_throughput * t2 + 1e-12 {
                    best = best.max(c.stage1 * t1 + c.stage2 * t2);
                }
            }
        }
        assert!(s.objective >= best - 1e-12);
        assert!(s.objective <= best + 0.01);
    }
}
