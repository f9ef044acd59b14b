//! Exponent calculus for the functional
//! `J(v) = ∫ a(x, v) j(∇v) - ∫ f v` with `a(x, s) = beta1 / (b + |s|)^(alpha p)`.
//!
//! Everything here is a pure function of [`ProblemParams`].

use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance on `r - threshold` when deciding which regime `r` is in.
pub const REGIME_TOLERANCE: f64 = 1e-12;

/// `t* = n t / (n - t)`.
pub fn sobolev_conjugate(t: f64, n: f64) -> Result<f64> {
    if !(t >= 1.0 && t < n) {
        return Err(Error::domain(format!(
            "Sobolev conjugate needs 1 <= t < n, got t = {t}, n = {n}"
        )));
    }
    Ok(n * t / (n - t))
}

/// `t' = t / (t - 1)`.
pub fn holder_conjugate(t: f64) -> Result<f64> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "Hölder conjugate needs t > 1, got {t}"
        )));
    }
    Ok(t / (t - 1.0))
}

/// Data of the functional and of the source class `f ∈ M^r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    pub r: f64,
    pub beta1: f64,
    /// Constant lower-order term `b(x) ≡ b_const`.
    pub b_const: f64,
}

impl ProblemParams {
    pub fn new(n: u32, p: f64, alpha: f64, r: f64, beta1: f64, b_const: f64) -> Result<Self> {
        let params = ProblemParams {
            n,
            p,
            alpha,
            r,
            beta1,
            b_const,
        };
        params.validate()?;
        Ok(params)
    }

    /// Convenience constructor with `beta1 = b_const = 1`.
    pub fn unit(n: u32, p: f64, alpha: f64, r: f64) -> Result<Self> {
        Self::new(n, p, alpha, r, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n as f64;
        if self.n < 2 {
            return Err(Error::domain(format!("dimension must be >= 2, got {}", self.n)));
        }
        if !(self.p > 1.0 && self.p < n) {
            return Err(Error::domain(format!(
                "growth exponent must satisfy 1 < p < n, got p = {}, n = {}",
                self.p, self.n
            )));
        }
        let alpha_pp = self.alpha * self.p_prime();
        if !(self.alpha > 0.0 && alpha_pp < 1.0) {
            return Err(Error::domain(format!(
                "alpha must satisfy 0 < alpha < 1/p' = {}, got {}",
                1.0 / self.p_prime(),
                self.alpha
            )));
        }
        if !(self.r > 1.0) || !self.r.is_finite() {
            return Err(Error::domain(format!("r must be > 1, got {}", self.r)));
        }
        if !(self.beta1 > 0.0) || !self.beta1.is_finite() {
            return Err(Error::domain(format!("beta1 must be > 0, got {}", self.beta1)));
        }
        if !(self.b_const > 0.0) || !self.b_const.is_finite() {
            return Err(Error::domain(format!(
                "b_const must be > 0, got {}",
                self.b_const
            )));
        }
        Ok(())
    }

    /// `p' = p / (p - 1)`.
    pub fn p_prime(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// The same problem with a different source exponent.
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.alpha, r, self.beta1, self.b_const)
    }
}

/// The four exponents `A, B, C, D` of the level-set inequality
/// `|A_h| <= c (|A_k|^B h^A + |A_k|^C) / (h - k)^D`.
///
/// Outside `r > r_low` the values of `B` and `C` may be nonpositive; they are
/// reported raw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetExponents {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    pub q: f64,
    pub q_star: f64,
    pub p_star: f64,
    /// `(p*(1 - alpha))'`, the lower end of the admissible source range.
    pub r_low: f64,
    /// `(p*/(1 + alpha p))'`, gradient Marcinkiewicz / Sobolev boundary.
    pub r_mid: f64,
    /// `n / p`.
    pub r_high: f64,
    /// Marcinkiewicz exponent of `u`, when `r_low < r < r_high`.
    pub s: Option<f64>,
    /// Marcinkiewicz exponent of `|∇u|`, when `r_low < r <= r_mid`.
    pub rho: Option<f64>,
    pub hyp: LevelSetExponents,
}

pub fn compute_exponents(params: &ProblemParams) -> Result<ExponentSet> {
    params.validate()?;
    let n = params.n as f64;
    let (p, alpha, r) = (params.p, params.alpha, params.r);
    let denom = n - alpha * p;
    if !(denom > 0.0) {
        return Err(Error::domain("n - alpha p must be positive"));
    }
    let q = n * p * (1.0 - alpha) / denom;
    let q_star = sobolev_conjugate(q, n)?;
    let p_star = sobolev_conjugate(p, n)?;
    let r_low = holder_conjugate(p_star * (1.0 - alpha))?;
    let r_mid = holder_conjugate(p_star / (1.0 + alpha * p))?;
    let r_high = n / p;

    let spare = p * (1.0 - alpha) - 1.0;
    let a = alpha * p * q_star / (p - 1.0);
    let b = (p - 1.0 - q / r + q / n) * q_star / (q * (p - 1.0));
    let c = (q - 1.0 - q / r + q / n) * q_star / (q * spare);
    let d = q_star;

    let s = (r > r_low && r < r_high).then(|| n * r * spare / (n - r * p));
    let rho = (r > r_low && r <= r_mid).then(|| n * r * spare / (n - r * (1.0 + alpha * p)));

    Ok(ExponentSet {
        q,
        q_star,
        p_star,
        r_low,
        r_mid,
        r_high,
        s,
        rho,
        hyp: LevelSetExponents { a, b, c, d },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `r <= r_low`: outside the range where the minimizer is controlled.
    BelowRange,
    /// `r_low < r <= r_mid`: `u ∈ M^s`, `|∇u| ∈ M^rho`.
    GradientMarcinkiewicz,
    /// `r_mid < r < n/p`: `u ∈ M^s ∩ W^{1,p}_0`.
    SobolevW1p,
    /// `r = n/p`: `exp(lambda |u|^(1 - alpha p'))` is integrable.
    ExponentialIntegrability,
    /// `r > n/p`: `u` is bounded.
    Bounded,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::BelowRange => "BelowRange",
            Regime::GradientMarcinkiewicz => "GradientMarcinkiewicz",
            Regime::SobolevW1p => "SobolevW1p",
            Regime::ExponentialIntegrability => "ExponentialIntegrability",
            Regime::Bounded => "Bounded",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn classify_regime(params: &ProblemParams) -> Result<Regime> {
    let e = compute_exponents(params)?;
    Ok(regime_from_thresholds(params.r, &e))
}

pub(crate) fn regime_from_thresholds(r: f64, e: &ExponentSet) -> Regime {
    let tol = REGIME_TOLERANCE;
    if (r - e.r_high).abs() <= tol {
        Regime::ExponentialIntegrability
    } else if r > e.r_high {
        Regime::Bounded
    } else if r <= e.r_low + tol {
        Regime::BelowRange
    } else if r <= e.r_mid + tol {
        Regime::GradientMarcinkiewicz
    } else {
        Regime::SobolevW1p
    }
}
