use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;

use super::program::{AffineExpr, Constraint, ConvexProgram, Sense, SolveResult, SolveStatus};
use crate::error::{Error, Result};

/// Interior-point settings passed to the backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub max_iter: u32,
    /// Gap and feasibility tolerance.
    pub tol: f64,
    /// Largest scaled violation accepted for an optimal status.
    pub max_residual: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8, max_residual: 1e-6 }
    }
}

/// Rows `s = b - A x` grouped by cone, in Clarabel's layout.
struct Lowering {
    n_total: usize,
    rows: usize,
    ai: Vec<usize>,
    aj: Vec<usize>,
    av: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Lowering {
    fn new(n_vars: usize) -> Self {
        Self { n_total: n_vars, rows: 0, ai: vec![], aj: vec![], av: vec![], b: vec![], cones: vec![] }
    }

    fn aux(&mut self, k: usize) -> usize {
        self.n_total += k;
        self.n_total - k
    }

    /// Appends a row whose slack equals `e`.
    fn row(&mut self, e: &AffineExpr) {
        for &(j, c) in &e.terms {
            self.ai.push(self.rows);
            self.aj.push(j);
            self.av.push(-c);
        }
        self.b.push(e.constant);
        self.rows += 1;
    }

    fn cone(&mut self, exprs: &[AffineExpr], cone: SupportedConeT<f64>) {
        exprs.iter().for_each(|e| self.row(e));
        self.cones.push(cone);
    }

    /// Symmetric matrix `M0 + sum x_i M_i` into the scaled upper-triangle
    /// PSD cone.
    fn psd(&mut self, constant: &DMatrix<f64>, terms: &[(usize, DMatrix<f64>)]) {
        let d = constant.nrows();
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut exprs = Vec::with_capacity(d * (d + 1) / 2);
        for col in 0..d {
            for row in 0..=col {
                let s = if row == col { 1.0 } else { sqrt2 };
                let mut e = AffineExpr::constant(s * constant[(row, col)]);
                for (i, m) in terms {
                    e.push(*i, s * m[(row, col)]);
                }
                exprs.push(e);
            }
        }
        self.cone(&exprs, SupportedConeT::PSDTriangleConeT(d));
    }

    fn constraint(&mut self, c: &Constraint) {
        match c {
            Constraint::Eq(e) => self.cone(std::slice::from_ref(e), SupportedConeT::ZeroConeT(1)),
            Constraint::Le(e) => self.cone(&[-e.clone()], SupportedConeT::NonnegativeConeT(1)),
            Constraint::Soc { t, x } => {
                let mut exprs = vec![t.clone()];
                exprs.extend(x.iter().cloned());
                let n = exprs.len();
                self.cone(&exprs, SupportedConeT::SecondOrderConeT(n));
            }
            Constraint::RotatedSoc { u, v, x } => {
                let mut exprs = vec![u.clone() + v.clone(), u.clone() - v.clone()];
                exprs.extend(x.iter().map(|e| e.clone() * 2.0));
                let n = exprs.len();
                self.cone(&exprs, SupportedConeT::SecondOrderConeT(n));
            }
            Constraint::Power { x, y, z, alpha } => {
                self.cone(&[x.clone(), y.clone(), z.clone()], SupportedConeT::PowerConeT(*alpha))
            }
            Constraint::Exp { x, y, z } => {
                self.cone(&[x.clone(), y.clone(), z.clone()], SupportedConeT::ExponentialConeT())
            }
            Constraint::Psd(m) => {
                let (c0, terms) = m.lifted_terms();
                self.psd(&c0, &terms);
            }
            Constraint::LogDet { t, matrix } => self.log_det(t, matrix),
        }
    }

    /// `t <= ln det X` via `[[L(X), Z], [Z^T, diag Z]] >= 0` with `Z` lower
    /// triangular and `u_i <= ln Z_ii`, where `L` is the real lifting
    /// (`ln det L(X) = 2 ln det X`).
    fn log_det(&mut self, t: &AffineExpr, matrix: &super::program::HermitianAffine) {
        let (c0, terms) = matrix.lifted_terms();
        let d = c0.nrows();
        let n_z = d * (d + 1) / 2;
        let z0 = self.aux(n_z);
        let u0 = self.aux(d);
        // Lower-triangular entry (r, c), r >= c, packed column by column.
        let z_index = |r: usize, c: usize| z0 + c * d - c * (c + 1) / 2 + r;

        let big = 2 * d;
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut exprs = Vec::with_capacity(big * (big + 1) / 2);
        for col in 0..big {
            for row in 0..=col {
                let s = if row == col { 1.0 } else { sqrt2 };
                let mut e = AffineExpr::zero();
                if col < d {
                    e.constant = s * c0[(row, col)];
                    for (i, m) in &terms {
                        e.push(*i, s * m[(row, col)]);
                    }
                } else {
                    let zc = col - d;
                    if row < d && row >= zc {
                        e.push(z_index(row, zc), s);
                    } else if row == col {
                        e.push(z_index(zc, zc), 1.0);
                    }
                }
                exprs.push(e);
            }
        }
        self.cone(&exprs, SupportedConeT::PSDTriangleConeT(big));

        for i in 0..d {
            self.cone(
                &[AffineExpr::var(u0 + i), AffineExpr::constant(1.0), AffineExpr::var(z_index(i, i))],
                SupportedConeT::ExponentialConeT(),
            );
        }
        let mut bound = t.clone();
        for i in 0..d {
            bound.push(u0 + i, -0.5);
        }
        self.cone(&[-bound], SupportedConeT::NonnegativeConeT(1));
    }
}

/// Solves with default settings.
pub fn solve(program: &ConvexProgram) -> Result<SolveResult> {
    solve_with(program, &SolveSettings::default())
}

/// Solves the program. Malformed programs are an error; infeasibility and
/// numerical trouble are reported through the status.
pub fn solve_with(program: &ConvexProgram, settings: &SolveSettings) -> Result<SolveResult> {
    program.validate()?;
    let n = program.n_vars();
    let mut low = Lowering::new(n);
    for c in &program.constraints {
        low.constraint(c);
    }
    let n_total = low.n_total;

    let sign = match program.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut q = vec![0.0; n_total];
    for &(i, c) in &program.objective.terms {
        q[i] += sign * c;
    }
    let p = CscMatrix::zeros((n_total, n_total));
    let a = CscMatrix::new_from_triplets(low.rows, n_total, low.ai, low.aj, low.av);
    let opts = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;
    let mut solver =
        DefaultSolver::new(&p, &q, &a, &low.b, &low.cones, opts).map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let x: Vec<f64> = sol.x[..n].to_vec();
    let objective = program.objective.eval(&x);
    let residual = if x.iter().all(|v| v.is_finite()) { program.max_violation(&x) } else { f64::INFINITY };
    let (status, diagnostic) = match sol.status {
        SolverStatus::Solved if residual <= settings.max_residual && objective.is_finite() => {
            (SolveStatus::Optimal, None)
        }
        SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
            if residual <= settings.max_residual && objective.is_finite() =>
        {
            (SolveStatus::Inaccurate, Some(format!("solver status {:?}", sol.status)))
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            (SolveStatus::Infeasible, Some(format!("{:?}", sol.status)))
        }
        s => (SolveStatus::NumericalFailure, Some(format!("solver status {s:?}, residual {residual:e}"))),
    };
    Ok(SolveResult { status, x, objective, residual, iterations: sol.iterations, diagnostic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexcore::HermitianAffine;
    use crate::linalg::CMat;
    use num_complex::Complex64;

    fn var(i: usize) -> AffineExpr {
        AffineExpr::var(i)
    }

    fn c(v: f64) -> AffineExpr {
        AffineExpr::constant(v)
    }

    #[test]
    fn lp_upper_bound() {
        let mut p = ConvexProgram::new();
        let x = p.add_var();
        p.add(Constraint::le(var(x), c(3.0)));
        p.maximize(var(x));
        let r = solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-7);
        assert!((r.objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn soc_projection() {
        let mut p = ConvexProgram::new();
        let v = p.add_vars(3);
        let (x, y, t) = (v.start, v.start + 1, v.start + 2);
        p.add(Constraint::Soc { t: var(t), x: vec![var(x).plus(-1.0), var(y).plus(-1.0)] });
        p.minimize(var(t));
        let r = solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(r.x[t].abs() < 1e-6);
        assert!((r.x[x] - 1.0).abs() < 1e-4 && (r.x[y] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn scalar_log_det_is_monotone() {
        let mut p = ConvexProgram::new();
        let w = p.add_var();
        let t = p.add_var();
        p.add(Constraint::ge(var(w), c(0.0)));
        p.add(Constraint::le(var(w), c(2.0)));
        let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        p.add(Constraint::LogDet { t: var(t), matrix: HermitianAffine::new(one.clone()).with(w, one) });
        p.maximize(var(t));
        let r = solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[w] - 2.0).abs() < 1e-6);
        assert!((r.objective - 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConvexProgram::new();
        let x = p.add_var();
        p.add(Constraint::le(var(x), c(1.0)));
        p.add(Constraint::ge(var(x), c(2.0)));
        p.minimize(var(x));
        assert_eq!(solve(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn malformed_is_error() {
        let mut p = ConvexProgram::new();
        p.minimize(var(0));
        assert!(solve(&p).is_err());
    }

    #[test]
    fn rotated_soc_quad_over_lin() {
        // minimize s with s >= x^2 / y, x = 3, y = 2 -> 4.5
        let mut p = ConvexProgram::new();
        let v = p.add_vars(3);
        let (x, y, s) = (v.start, v.start + 1, v.start + 2);
        p.add(Constraint::eq(var(x), c(3.0)));
        p.add(Constraint::eq(var(y), c(2.0)));
        p.add(Constraint::RotatedSoc { u: var(s), v: var(y), x: vec![var(x)] });
        p.minimize(var(s));
        let r = solve(&p).unwrap();
        assert!((r.x[s] - 4.5).abs() < 1e-6, "{:?}", r);
    }

    #[test]
    fn power_cone_cubic() {
        // maximize f with f^3 <= 8, i.e. (c, 1, f) in the 1/3 power cone, c <= 8.
        let mut p = ConvexProgram::new();
        let v = p.add_vars(2);
        let (f, cube) = (v.start, v.start + 1);
        p.add(Constraint::Power { x: var(cube), y: c(1.0), z: var(f), alpha: 1.0 / 3.0 });
        p.add(Constraint::le(var(cube), c(8.0)));
        p.maximize(var(f));
        let r = solve(&p).unwrap();
        assert!((r.x[f] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn log_hypograph() {
        let mut p = ConvexProgram::new();
        let v = p.add_vars(2);
        let (t, x) = (v.start, v.start + 1);
        p.add(Constraint::log_hypograph(var(t), var(x)));
        p.add(Constraint::le(var(x), c(5.0)));
        p.maximize(var(t));
        let r = solve(&p).unwrap();
        assert!((r.x[t] - 5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn psd_layout_off_diagonal() {
        // [[1, x], [x, 1]] >= 0, maximize x -> 1; complex off-diagonal via lifting.
        let mut p = ConvexProgram::new();
        let x = p.add_var();
        let mut off = CMat::zeros(2, 2);
        off[(0, 1)] = Complex64::new(0.0, 1.0);
        off[(1, 0)] = Complex64::new(0.0, -1.0);
        p.add(Constraint::Psd(HermitianAffine::new(CMat::identity(2, 2)).with(x, off)));
        p.maximize(var(x));
        let r = solve(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[x] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psd_lower_bound_on_diagonal() {
        // minimize t s.t. [[t, 1], [1, t]] >= 0 -> t = 1; also check a 3x3
        // element in the last column lands where expected.
        let mut p = ConvexProgram::new();
        let t = p.add_var();
        let mut c0 = CMat::zeros(3, 3);
        c0[(0, 2)] = Complex64::new(1.0, 0.0);
        c0[(2, 0)] = Complex64::new(1.0, 0.0);
        c0[(1, 1)] = Complex64::new(1.0, 0.0);
        let mut diag = CMat::zeros(3, 3);
        diag[(0, 0)] = Complex64::new(1.0, 0.0);
        diag[(2, 2)] = Complex64::new(1.0, 0.0);
        p.add(Constraint::Psd(HermitianAffine::new(c0).with(t, diag)));
        p.minimize(var(t));
        let r = solve(&p).unwrap();
        assert!((r.x[t] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn deterministic() {
        let mut p = ConvexProgram::new();
        let v = p.add_vars(2);
        p.add(Constraint::Soc { t: c(1.0), x: vec![var(v.start), var(v.start + 1)] });
        p.maximize(var(v.start) * 2.0 + var(v.start + 1));
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a, b);
    }
}
