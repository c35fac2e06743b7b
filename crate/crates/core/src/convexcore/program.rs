use std::ops::{Add, AddAssign, Mul, Neg, Range, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, CMat, CVec};

/// `constant + sum(coef * x[var])`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, coef: f64) -> Self {
        Self { terms: vec![(i, coef)], constant: 0.0 }
    }

    /// Adds `coef * x[i]` in place.
    pub fn push(&mut self, i: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((i, coef));
        }
        self
    }

    pub fn with(mut self, i: usize, coef: f64) -> Self {
        self.push(i, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Largest absolute value among the constant and the individual terms at
    /// `x`, used to scale residuals.
    pub(crate) fn magnitude(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| (c * x[i]).abs()).fold(self.constant.abs(), f64::max)
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        if !self.constant.is_finite() {
            return Err(Error::InvalidInput("non-finite constant in affine expression".into()));
        }
        for &(i, c) in &self.terms {
            if i >= n_vars {
                return Err(Error::InvalidInput(format!("variable index {i} out of range {n_vars}")));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coefficient on variable {i}")));
            }
        }
        Ok(())
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self += rhs;
        self
    }
}

impl AddAssign for AffineExpr {
    fn add_assign(&mut self, rhs: AffineExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + (-rhs)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(mut self, s: f64) -> AffineExpr {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }
}

/// A complex affine expression as its real and imaginary parts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexAffine {
    pub re: AffineExpr,
    pub im: AffineExpr,
}

impl ComplexAffine {
    pub fn constant(c: Complex64) -> Self {
        Self { re: AffineExpr::constant(c.re), im: AffineExpr::constant(c.im) }
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.re.eval(x), self.im.eval(x))
    }

    /// `Re(conj(w) * self)`, affine in the variables.
    pub fn real_part_against(&self, w: Complex64) -> AffineExpr {
        self.re.clone() * w.re + self.im.clone() * w.im
    }
}

impl Add for ComplexAffine {
    type Output = ComplexAffine;
    fn add(self, rhs: ComplexAffine) -> ComplexAffine {
        ComplexAffine { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

/// A block of complex variables stored as interleaved `(re, im)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexVars {
    pub start: usize,
    pub len: usize,
}

impl ComplexVars {
    pub fn re(&self, i: usize) -> usize {
        self.start + 2 * i
    }

    pub fn im(&self, i: usize) -> usize {
        self.start + 2 * i + 1
    }

    /// `sum_i c_i z_i`.
    pub fn linear(&self, c: &[Complex64]) -> ComplexAffine {
        let mut out = ComplexAffine::default();
        for (i, ci) in c.iter().enumerate() {
            out.re.push(self.re(i), ci.re).push(self.im(i), -ci.im);
            out.im.push(self.re(i), ci.im).push(self.im(i), ci.re);
        }
        out
    }

    /// `z^H h = sum_i conj(z_i) h_i`.
    pub fn conj_dot(&self, h: &CVec) -> ComplexAffine {
        let mut out = ComplexAffine::default();
        for (i, hi) in h.iter().enumerate() {
            out.re.push(self.re(i), hi.re).push(self.im(i), hi.im);
            out.im.push(self.re(i), hi.im).push(self.im(i), -hi.re);
        }
        out
    }

    /// Real coordinates of entry `i`, useful inside cone constraints.
    pub fn parts(&self, i: usize) -> [AffineExpr; 2] {
        [AffineExpr::var(self.re(i)), AffineExpr::var(self.im(i))]
    }

    /// All `2 len` real coordinates in storage order.
    pub fn all_parts(&self) -> Vec<AffineExpr> {
        (0..2 * self.len).map(|k| AffineExpr::var(self.start + k)).collect()
    }

    pub fn value(&self, x: &[f64]) -> CVec {
        CVec::from_fn(self.len, |i, _| Complex64::new(x[self.re(i)], x[self.im(i)]))
    }
}

/// `C0 + sum_i x_i C_i` with Hermitian coefficient matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianAffine {
    pub constant: CMat,
    pub terms: Vec<(usize, CMat)>,
}

impl HermitianAffine {
    pub fn new(constant: CMat) -> Self {
        Self { constant, terms: Vec::new() }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(CMat::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn with(mut self, i: usize, c: CMat) -> Self {
        self.terms.push((i, c));
        self
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (i, c) in &self.terms {
            out += c * Complex64::new(x[*i], 0.0);
        }
        out
    }

    /// Real symmetric lifting of a Hermitian matrix, size `2n`.
    pub fn lift(a: &CMat) -> DMatrix<f64> {
        let n = a.nrows();
        DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let z = a[(r % n, c % n)];
            match (r < n, c < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }

    pub(crate) fn lifted_terms(&self) -> (DMatrix<f64>, Vec<(usize, DMatrix<f64>)>) {
        (Self::lift(&self.constant), self.terms.iter().map(|(i, c)| (*i, Self::lift(c))).collect())
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        let n = self.dim();
        if self.constant.ncols() != n {
            return Err(Error::dims("matrix expression", "square", format!("{:?}", self.constant.shape())));
        }
        for m in std::iter::once(&self.constant).chain(self.terms.iter().map(|t| &t.1)) {
            if m.shape() != (n, n) {
                return Err(Error::dims("matrix expression term", n, m.nrows()));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidInput("non-finite matrix coefficient".into()));
            }
            let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if hermitian_defect(m) > 1e-9 * scale {
                return Err(Error::InvalidInput("matrix coefficient is not Hermitian".into()));
            }
        }
        for (i, _) in &self.terms {
            if *i >= n_vars {
                return Err(Error::InvalidInput(format!("variable index {i} out of range {n_vars}")));
            }
        }
        Ok(())
    }
}

/// One convex constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `expr == 0`.
    Eq(AffineExpr),
    /// `expr <= 0`.
    Le(AffineExpr),
    /// `||x|| <= t`.
    Soc { t: AffineExpr, x: Vec<AffineExpr> },
    /// `||x||^2 <= u v` with `u, v >= 0`.
    RotatedSoc { u: AffineExpr, v: AffineExpr, x: Vec<AffineExpr> },
    /// `x^alpha y^(1 - alpha) >= |z|` with `x, y >= 0`.
    Power { x: AffineExpr, y: AffineExpr, z: AffineExpr, alpha: f64 },
    /// `y exp(x / y) <= z` with `y > 0`.
    Exp { x: AffineExpr, y: AffineExpr, z: AffineExpr },
    /// Hermitian matrix expression is positive semidefinite.
    Psd(HermitianAffine),
    /// `t <= ln det X` with `X` Hermitian positive definite.
    LogDet { t: AffineExpr, matrix: HermitianAffine },
}

impl Constraint {
    /// `lhs <= rhs`.
    pub fn le(lhs: AffineExpr, rhs: AffineExpr) -> Self {
        Constraint::Le(lhs - rhs)
    }

    /// `lhs >= rhs`.
    pub fn ge(lhs: AffineExpr, rhs: AffineExpr) -> Self {
        Constraint::Le(rhs - lhs)
    }

    pub fn eq(lhs: AffineExpr, rhs: AffineExpr) -> Self {
        Constraint::Eq(lhs - rhs)
    }

    /// `t <= ln(x)`.
    pub fn log_hypograph(t: AffineExpr, x: AffineExpr) -> Self {
        Constraint::Exp { x: t, y: AffineExpr::constant(1.0), z: x }
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        match self {
            Constraint::Eq(e) | Constraint::Le(e) => e.check(n_vars),
            Constraint::Soc { t, x } => {
                t.check(n_vars)?;
                x.iter().try_for_each(|e| e.check(n_vars))
            }
            Constraint::RotatedSoc { u, v, x } => {
                u.check(n_vars)?;
                v.check(n_vars)?;
                x.iter().try_for_each(|e| e.check(n_vars))
            }
            Constraint::Power { x, y, z, alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::InvalidInput(format!("power cone exponent {alpha} outside (0, 1)")));
                }
                x.check(n_vars)?;
                y.check(n_vars)?;
                z.check(n_vars)
            }
            Constraint::Exp { x, y, z } => {
                x.check(n_vars)?;
                y.check(n_vars)?;
                z.check(n_vars)
            }
            Constraint::Psd(m) => m.check(n_vars),
            Constraint::LogDet { t, matrix } => {
                t.check(n_vars)?;
                matrix.check(n_vars)
            }
        }
    }

    /// Violation at `x`, scaled by the magnitude of the quantities involved
    /// (never by less than one).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let pos = |v: f64| if v.is_nan() { f64::INFINITY } else { v.max(0.0) };
        match self {
            Constraint::Eq(e) => e.eval(x).abs() / e.magnitude(x).max(1.0),
            Constraint::Le(e) => pos(e.eval(x)) / e.magnitude(x).max(1.0),
            Constraint::Soc { t, x: v } => {
                let tv = t.eval(x);
                let norm = v.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                pos(norm - tv) / tv.abs().max(norm).max(1.0)
            }
            Constraint::RotatedSoc { u, v, x: w } => {
                let (uv, vv) = (u.eval(x), v.eval(x));
                let sq = w.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                let lhs = (4.0 * sq + (uv - vv).powi(2)).sqrt();
                pos(lhs - (uv + vv)) / lhs.max(uv.abs() + vv.abs()).max(1.0)
            }
            Constraint::Power { x: a, y: b, z: c, alpha } => {
                let (a, b, c) = (a.eval(x), b.eval(x), c.eval(x));
                let neg = pos(-a).max(pos(-b));
                let geo = a.max(0.0).powf(*alpha) * b.max(0.0).powf(1.0 - alpha);
                neg.max(pos(c.abs() - geo) / c.abs().max(geo).max(1.0))
            }
            Constraint::Exp { x: a, y: b, z: c } => {
                let (a, b, c) = (a.eval(x), b.eval(x), c.eval(x));
                if b <= 0.0 {
                    // Closure of the cone: y = 0 requires x <= 0, z >= 0.
                    return pos(-b).max(if b == 0.0 { pos(a).max(pos(-c)) } else { 0.0 });
                }
                // Compare in log space to avoid overflow.
                if c <= 0.0 {
                    return 1.0 + pos(-c);
                }
                pos(a / b - (c / b).ln()) / (a / b).abs().max(1.0)
            }
            Constraint::Psd(m) => {
                let a = m.eval(x);
                let lifted = HermitianAffine::lift(&a);
                let scale = lifted.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
                let eig = lifted.symmetric_eigenvalues();
                pos(-eig.min()) / scale
            }
            Constraint::LogDet { t, matrix } => {
                let a = matrix.eval(x);
                let eig = HermitianAffine::lift(&a).symmetric_eigenvalues();
                if eig.min() <= 0.0 {
                    return f64::INFINITY;
                }
                let logdet = 0.5 * eig.iter().map(|l| l.ln()).sum::<f64>();
                let tv = t.eval(x);
                pos(tv - logdet) / tv.abs().max(1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A conic program over a real decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    n_vars: usize,
    pub sense: Sense,
    pub objective: AffineExpr,
    pub constraints: Vec<Constraint>,
}

impl Default for ConvexProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self { n_vars: 0, sense: Sense::Minimize, objective: AffineExpr::zero(), constraints: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, k: usize) -> Range<usize> {
        let start = self.n_vars;
        self.n_vars += k;
        start..self.n_vars
    }

    pub fn add_complex_vars(&mut self, len: usize) -> ComplexVars {
        let r = self.add_vars(2 * len);
        ComplexVars { start: r.start, len }
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn minimize(&mut self, objective: AffineExpr) {
        self.sense = Sense::Minimize;
        self.objective = objective;
    }

    pub fn maximize(&mut self, objective: AffineExpr) {
        self.sense = Sense::Maximize;
        self.objective = objective;
    }

    /// Largest scaled constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.check(self.n_vars)?;
        self.constraints.iter().try_for_each(|c| c.check(self.n_vars))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// The solver stalled short of its tolerances but the returned point
    /// satisfies every constraint within the residual limit.
    Inaccurate,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal values of the program's own variables.
    pub x: Vec<f64>,
    /// Objective in the program's sense, evaluated at `x`.
    pub objective: f64,
    /// Largest scaled constraint violation at `x`.
    pub residual: f64,
    pub iterations: u32,
    pub diagnostic: Option<String>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Optimal, or feasible within tolerance with optimality uncertified.
    pub fn is_usable(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_linear_matches_direct_sum() {
        let mut p = ConvexProgram::new();
        let z = p.add_complex_vars(2);
        let x = [1.0, 2.0, -0.5, 0.25];
        let c = [Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.5)];
        let zv = z.value(&x);
        let want = c[0] * zv[0] + c[1] * zv[1];
        let got = z.linear(&c).eval(&x);
        assert!((want - got).norm() < 1e-14);

        let h = CVec::from_vec(c.to_vec());
        let want = zv.dotc(&h);
        let got = z.conj_dot(&h).eval(&x);
        assert!((want - got).norm() < 1e-14);
    }

    #[test]
    fn lift_preserves_quadratic_form_and_spectrum() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.7), Complex64::new(0.5, -0.7), Complex64::new(1.0, 0.0)],
        );
        let l = HermitianAffine::lift(&a);
        assert!((&l - l.transpose()).norm() < 1e-15);
        let (vals, _) = crate::linalg::hermitian_eigen(&a);
        let mut lv: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
        lv.sort_by(f64::total_cmp);
        for (i, v) in vals.iter().enumerate() {
            assert!((lv[2 * i] - v).abs() < 1e-12 && (lv[2 * i + 1] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn violations() {
        let x = [3.0, 4.0, 4.0];
        let soc = Constraint::Soc { t: AffineExpr::var(2), x: vec![AffineExpr::var(0), AffineExpr::var(1)] };
        assert!(soc.violation(&x) > 0.1);
        let soc = Constraint::Soc { t: AffineExpr::constant(5.0), x: vec![AffineExpr::var(0), AffineExpr::var(1)] };
        assert_eq!(soc.violation(&x), 0.0);
        let log = Constraint::log_hypograph(AffineExpr::constant(1.0), AffineExpr::var(0));
        assert_eq!(log.violation(&x), 0.0);
        let log = Constraint::log_hypograph(AffineExpr::constant(2.0), AffineExpr::var(0));
        assert!(log.violation(&x) > 0.0);
    }

    #[test]
    fn validate_rejects_bad_index_and_exponent() {
        let mut p = ConvexProgram::new();
        p.add_var();
        p.add(Constraint::Le(AffineExpr::var(3)));
        assert!(p.validate().is_err());
        let mut p = ConvexProgram::new();
        let v = p.add_var();
        p.add(Constraint::Power {
            x: AffineExpr::var(v),
            y: AffineExpr::constant(1.0),
            z: AffineExpr::constant(0.0),
            alpha: 1.5,
        });
        assert!(p.validate().is_err());
    }
}
