use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, hermitian_eigen, log2_det_hpd, water_filling, CMat, CVec};

fn check_lengths(h_a: &[CVec], h_o: &[CVec], m1: usize, p: &[f64]) -> Result<()> {
    if h_a.iter().chain(h_o).any(|h| h.len() != m1) {
        return Err(Error::dims("composite channel length", m1, "other"));
    }
    if p.len() != h_o.len() {
        return Err(Error::dims("MEC power vector", h_o.len(), p.len()));
    }
    Ok(())
}

/// AirComp decoding MSE for decoder `a`, AirComp transmit scalars `b` and
/// MEC powers `p`:
/// `sum_k |a^H h_a[k] b_k - 1|^2 + sum_k p_k |a^H h_o[k]|^2 + ||a||^2 sigma^2`.
pub fn aircomp_mse(h_a: &[CVec], h_o: &[CVec], a: &CVec, b: &[Complex64], p: &[f64], sigma_e2: f64) -> Result<f64> {
    check_lengths(h_a, h_o, a.len(), p)?;
    if b.len() != h_a.len() {
        return Err(Error::dims("AirComp transmit scalars", h_a.len(), b.len()));
    }
    let one = Complex64::new(1.0, 0.0);
    let misalignment: f64 = h_a.iter().zip(b).map(|(h, bk)| (a.dotc(h) * bk - one).norm_sqr()).sum();
    let interference: f64 = h_o.iter().zip(p).map(|(h, pk)| pk * a.dotc(h).norm_sqr()).sum();
    Ok(misalignment + interference + a.norm_squared() * sigma_e2)
}

/// `log2+(1 / mse)`.
pub fn aircomp_rate(mse: f64) -> f64 {
    if mse < 1.0 {
        -mse.log2()
    } else {
        0.0
    }
}

/// Uniform-forcing AirComp transceiver for an unnormalized decoder `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformForcing {
    pub eta: f64,
    pub b: Vec<Complex64>,
    pub mse: f64,
}

/// Inverts every effective AirComp channel `m^H h_a[k]`, with the common
/// scaling `eta` set by the weakest user at full power.
pub fn uniform_forcing(
    h_a: &[CVec],
    h_o: &[CVec],
    m: &CVec,
    p_a: f64,
    p: &[f64],
    sigma_e2: f64,
) -> Result<UniformForcing> {
    check_lengths(h_a, h_o, m.len(), p)?;
    let gains: Vec<Complex64> = h_a.iter().map(|h| m.dotc(h)).collect();
    let weakest = gains.iter().map(|g| g.norm_sqr()).fold(f64::INFINITY, f64::min);
    if !(weakest > 0.0) || !weakest.is_finite() {
        return Err(Error::DegenerateChannel("decoder is orthogonal to an AirComp channel".into()));
    }
    let eta = p_a * weakest;
    let root = eta.sqrt();
    let b = gains.iter().map(|g| g.conj() * (root / g.norm_sqr())).collect();
    let interference: f64 = h_o.iter().zip(p).map(|(h, pk)| pk * m.dotc(h).norm_sqr()).sum();
    let mse = (interference + m.norm_squared() * sigma_e2) / eta;
    Ok(UniformForcing { eta, b, mse })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffloadRates {
    /// Per-user rates (bits/s/Hz) for ascending-index SIC.
    pub per_user: Vec<f64>,
    /// Sum rate from the closed form `log2(1 + sum_k p_k ||h_k||^2 / sigma^2)`.
    pub sum: f64,
}

/// NOMA offloading rates at the edge server after the AirComp signal is
/// removed. User `k` sees interference from users `i > k`.
pub fn offload_rates(h_o: &[CVec], p: &[f64], sigma_e2: f64) -> Result<OffloadRates> {
    if p.len() != h_o.len() {
        return Err(Error::dims("MEC power vector", h_o.len(), p.len()));
    }
    if p.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("transmit powers must be nonnegative".into()));
    }
    let received: Vec<f64> = h_o.iter().zip(p).map(|(h, pk)| pk * h.norm_squared()).collect();
    let mut tail = 0.0;
    let mut per_user = vec![0.0; received.len()];
    for k in (0..received.len()).rev() {
        per_user[k] = (1.0 + received[k] / (tail + sigma_e2)).log2();
        tail += received[k];
    }
    let sum = (1.0 + received.iter().sum::<f64>() / sigma_e2).log2();
    Ok(OffloadRates { per_user, sum })
}

/// `log2 det(I + H W H^H / sigma^2)` for the ES -> CS hop.
pub fn es_cs_rate(h_c: &CMat, w: &CMat, sigma_c2: f64) -> Result<f64> {
    if w.nrows() != h_c.ncols() || w.ncols() != h_c.ncols() {
        return Err(Error::dims("transmit covariance", h_c.ncols(), w.nrows()));
    }
    check_hermitian_psd(w, "transmit covariance")?;
    let m2 = h_c.nrows();
    let gram = h_c * w * h_c.adjoint();
    let a = CMat::identity(m2, m2) + gram.unscale(sigma_c2);
    Ok(log2_det_hpd(&a)?.max(0.0))
}

/// Capacity-achieving covariance for total power `power` over `h_c`,
/// returned with its rate (bits/s/Hz).
pub fn water_filling_covariance(h_c: &CMat, power: f64, sigma_c2: f64) -> (CMat, f64) {
    let m1 = h_c.ncols();
    let gram = h_c.ad_mul(h_c).unscale(sigma_c2);
    let (gains, vectors) = hermitian_eigen(&gram);
    let gains: Vec<f64> = gains.into_iter().map(|g| g.max(0.0)).collect();
    let powers = water_filling(&gains, power.max(0.0));
    let mut w = CMat::zeros(m1, m1);
    let mut rate = 0.0;
    for (i, (&g, &pw)) in gains.iter().zip(&powers).enumerate() {
        if pw > 0.0 {
            let u = vectors.column(i);
            w += (u * u.adjoint()).scale(pw);
            rate += (1.0 + g * pw).log2();
        }
    }
    (w, rate)
}

/// Bits processed per second with assigned frequency `f` when the twin
/// reports deviation `f_hat`.
pub fn local_rate(f: f64, f_hat: f64, rho: f64) -> Result<f64> {
    if f < f_hat {
        return Err(Error::InvalidInput(format!("assigned frequency {f} is below the deviation {f_hat}")));
    }
    Ok((f - f_hat) / rho)
}
