use crate::convexcore::{AffineExpr, ComplexVars};
use crate::error::{Error, Result};
use crate::linalg::{check_hermitian_psd, CMat, CVec, LOG2_E};

/// First-order expansion `f(x0) + g . (x - x0)` of a convex function, hence
/// a global lower bound that is tight at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBound {
    pub anchor: Vec<f64>,
    pub value_at_anchor: f64,
    pub gradient: Vec<f64>,
}

impl AffineBound {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value_at_anchor
            + self.gradient.iter().zip(x.iter().zip(&self.anchor)).map(|(g, (xi, ai))| g * (xi - ai)).sum::<f64>()
    }

    /// The bound as an affine expression in the given variables.
    pub fn to_expr(&self, vars: &[usize]) -> AffineExpr {
        let mut e = AffineExpr::constant(self.value_at_anchor);
        for ((&v, g), a) in vars.iter().zip(&self.gradient).zip(&self.anchor) {
            e.push(v, *g);
            e.constant -= g * a;
        }
        e
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Lower bound of `log2(P_a / (S_a I_a))` around `(S_a0, I_a0)`.
pub fn surrogate_ra_low(p_a: f64, s_a0: f64, i_a0: f64) -> Result<AffineBound> {
    positive("P_a", p_a)?;
    positive("S_a anchor", s_a0)?;
    positive("I_a anchor", i_a0)?;
    Ok(AffineBound {
        anchor: vec![s_a0, i_a0],
        value_at_anchor: (p_a / (s_a0 * i_a0)).log2(),
        gradient: vec![-LOG2_E / s_a0, -LOG2_E / i_a0],
    })
}

/// Lower bound of `log2(1 + 1/S_o)` around `S_o0`.
pub fn surrogate_ro_low(s_o0: f64) -> Result<AffineBound> {
    positive("S_o anchor", s_o0)?;
    Ok(AffineBound {
        anchor: vec![s_o0],
        value_at_anchor: (1.0 + 1.0 / s_o0).log2(),
        gradient: vec![-LOG2_E / (s_o0 * (s_o0 + 1.0))],
    })
}

/// Affine lower bound `2 Re(c^H x) - offset` of `x^H M x` with `c = M x0`
/// and `offset = x0^H M x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadBound {
    pub c: CVec,
    pub offset: f64,
}

impl QuadBound {
    /// Bound for the rank-one Gram matrix `h h^H`, i.e. for `|x^H h|^2`,
    /// without forming the matrix.
    pub fn rank_one(h: &CVec, x0: &CVec) -> Self {
        let z0 = x0.dotc(h);
        Self { c: h * z0.conj(), offset: z0.norm_sqr() }
    }

    pub fn eval(&self, x: &CVec) -> f64 {
        2.0 * self.c.dotc(x).re - self.offset
    }

    pub fn to_expr(&self, vars: &ComplexVars) -> AffineExpr {
        // Re(c^H x) = Re(x^H c).
        vars.conj_dot(&self.c).re * 2.0 + AffineExpr::constant(-self.offset)
    }
}

/// Lower bound of `x^H M x` around `x0` for Hermitian PSD `M`.
pub fn surrogate_quad_low(x0: &CVec, gram: &CMat) -> Result<QuadBound> {
    check_hermitian_psd(gram, "Gram matrix")?;
    if gram.nrows() != x0.len() {
        return Err(Error::dims("surrogate_quad_low", gram.nrows(), x0.len()));
    }
    let c = gram * x0;
    let offset = x0.dotc(&c).re;
    Ok(QuadBound { c, offset })
}
