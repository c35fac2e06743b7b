//! Small dense complex linear-algebra helpers shared by the model and the
//! block solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Unit-modulus complex number with the given phase.
pub fn cis(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues in ascending order.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(a.nrows(), a.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Checks Hermitian positive semidefiniteness with a tolerance relative to the
/// matrix scale.
pub fn check_hermitian_psd(a: &CMat, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotPsd(format!("{what} is not square")));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NotPsd(format!("{what} has non-finite entries")));
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if hermitian_defect(a) > 1e-9 * scale.max(1.0) {
        return Err(Error::NotPsd(format!("{what} is not Hermitian")));
    }
    if a.nrows() == 0 {
        return Ok(());
    }
    let (values, _) = hermitian_eigen(a);
    if values[0] < -1e-9 * scale.max(1.0) {
        return Err(Error::NotPsd(format!("{what} has negative eigenvalue {:.3e}", values[0])));
    }
    Ok(())
}

/// `log2 det(A)` of a Hermitian positive-definite matrix via Cholesky.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let sym = (a + a.adjoint()).scale(0.5);
    let chol = sym.cholesky().ok_or_else(|| Error::NotPsd("matrix is not positive definite".into()))?;
    let l = chol.l();
    Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() * LOG2_E)
}

/// Water-filling over parallel channels with gains `gains` (SNR per unit
/// power) and total power `budget`. Returns per-channel powers.
pub fn water_filling(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut powers = vec![0.0; gains.len()];
    if budget <= 0.0 {
        return powers;
    }
    let mut active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    active.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    while !active.is_empty() {
        let inv_sum: f64 = active.iter().map(|&i| 1.0 / gains[i]).sum();
        let level = (budget + inv_sum) / active.len() as f64;
        let weakest = *active.last().unwrap();
        if level - 1.0 / gains[weakest] > 0.0 {
            for &i in &active {
                powers[i] = level - 1.0 / gains[i];
            }
            break;
        }
        active.pop();
    }
    powers
}

/// Maximizes a concave function on `[lo, hi]` by golden-section search.
pub fn golden_section_max(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut guard = 0;
    while hi - lo > tol && guard < 200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        guard += 1;
    }
    // The interval ends are candidates too: concave maxima often sit there.
    let mut best = (x1, f1);
    for x in [x2, lo, hi] {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_det_of_diagonal() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(8.0, 0.0)]));
        assert_relative_eq!(log2_det_hpd(&a).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn water_filling_drops_weak_channel() {
        let p = water_filling(&[10.0, 0.01], 1.0);
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_eq!(p[1], 0.0);
        let p = water_filling(&[1.0, 1.0], 2.0);
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_check_rejects_negative_eigenvalue() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]));
        assert!(check_hermitian_psd(&a, "W").is_err());
        assert!(check_hermitian_psd(&identity(3), "W").is_ok());
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, v) = golden_section_max(0.0, 4.0, 1e-10, |x| -(x - 1.3) * (x - 1.3));
        assert!((x - 1.3).abs() < 1e-6);
        assert!(v <= 0.0 && v > -1e-10);
    }
}
