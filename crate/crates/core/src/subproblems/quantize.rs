use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::linalg::{cis, CVec};

/// Uniform phase grid `{0, 2 pi / 2^l, ..., 2 pi (2^l - 1) / 2^l}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub l: u32,
}

impl QuantizationSpec {
    pub fn levels(&self) -> usize {
        1usize << self.l
    }

    pub fn step(&self) -> f64 {
        TAU / self.levels() as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.levels()).map(|i| i as f64 * self.step()).collect()
    }
}

/// Maps every phase to the circularly nearest grid point; exact midpoints
/// go to the smaller grid phase.
pub fn quantize_phases(v: &CVec, spec: QuantizationSpec) -> CVec {
    let step = spec.step();
    let levels = spec.levels() as i64;
    v.map(|z| {
        let theta = z.arg().rem_euclid(TAU);
        let idx = (theta / step - 0.5).ceil() as i64;
        cis(idx.rem_euclid(levels) as f64 * step)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn q(theta: f64, l: u32) -> f64 {
        let v = CVec::from_element(1, cis(theta));
        quantize_phases(&v, QuantizationSpec { l })[0].arg().rem_euclid(TAU)
    }

    #[test]
    fn one_bit() {
        assert!(q(PI / 3.0, 1).abs() < 1e-12);
        assert!((q(0.9 * PI, 1) - PI).abs() < 1e-12);
        assert!(q(1.9 * PI, 1).abs() < 1e-12 || (q(1.9 * PI, 1) - TAU).abs() < 1e-12);
    }

    #[test]
    fn midpoint_rounds_down() {
        // pi/2 lies halfway between 0 and pi for l = 1.
        let v = CVec::from_element(1, num_complex::Complex64::new(0.0, 1.0));
        let out = quantize_phases(&v, QuantizationSpec { l: 1 });
        assert!((out[0] - num_complex::Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_size() {
        assert_eq!(QuantizationSpec { l: 3 }.grid().len(), 8);
    }
}
