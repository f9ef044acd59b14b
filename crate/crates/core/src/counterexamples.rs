//! Functions that satisfy the doubling inequality
//! `psi(2k) <= c2 ((2k)^A psi(k)^B + psi(k)^C) / k^D` but not the full
//! two-level hypothesis, together with the constant that makes the two
//! equivalent in the power-decay case.
//!
//! Values of these functions underflow `f64` long before the interesting
//! levels, so every evaluator also has a log form.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::lemma::{exp_decay_tau, vanishing_level, DecayHypothesis, EnvelopeConstants};

/// `2^(-ln 2)`: the doubling constant produced by the exact identity
/// `psi(2k) = psi(k) (2k^2)^(-ln 2)` for `psi(k) = exp(-(ln k)^2)`.
pub fn log_square_doubling_constant() -> f64 {
    (-LN_2 * LN_2).exp()
}

/// `1 / (2 ln 2)`, the value quoted alongside the example. Also a valid
/// doubling constant since it exceeds [`log_square_doubling_constant`].
pub fn log_square_doubling_constant_alt() -> f64 {
    1.0 / (2.0 * LN_2)
}

/// `D = 2 ln 2` for the log-square example.
pub const LOG_SQUARE_D: f64 = 2.0 * LN_2;

/// `exp(-(ln k)^2)` on `[1, ∞)`.
pub fn psi_log_square(k: f64) -> Result<f64> {
    Ok(ln_psi_log_square(k)?.exp())
}

pub fn ln_psi_log_square(k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("log-square example needs k >= 1, got {k}")));
    }
    let l = k.ln();
    Ok(-l * l)
}

/// Exponent `p = log2(2C)` of the exp-power example.
pub fn exp_power_exponent(c_exp: f64) -> f64 {
    (2.0 * c_exp).log2()
}

/// `exp(-k^p)` with `p = log2(2 c_exp)`, on `[1, ∞)`.
pub fn psi_exp_power(k: f64, c_exp: f64) -> Result<f64> {
    Ok(ln_psi_exp_power(k, c_exp)?.exp())
}

pub fn ln_psi_exp_power(k: f64, c_exp: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("exp-power example needs k >= 1, got {k}")));
    }
    if !(c_exp > 1.0) || !c_exp.is_finite() {
        return Err(Error::domain(format!("exp-power example needs C > 1, got {c_exp}")));
    }
    Ok(-k.powf(exp_power_exponent(c_exp)))
}

/// Smallest `k0 >= 1` with `C k^p >= D ln k` for every `k >= k0`, i.e.
/// `exp(-k^p)^C <= k^-D` from `k0` on.
///
/// `g(k) = C k^p - D ln k` decreases up to `k* = (D/(C p))^(1/p)` and
/// increases after it, so the answer is 1 when `g(max(1, k*)) >= 0` and the
/// root of `g` past `k*` otherwise, located by bisection to `1e-9`.
pub fn k0_for_exp_power(d_exp: f64, c_exp: f64) -> Result<f64> {
    if !(d_exp > 0.0) || !d_exp.is_finite() {
        return Err(Error::domain(format!("need D > 0, got {d_exp}")));
    }
    if !(c_exp > 1.0) || !c_exp.is_finite() {
        return Err(Error::domain(format!("need C > 1, got {c_exp}")));
    }
    let p = exp_power_exponent(c_exp);
    let g = |k: f64| c_exp * k.powf(p) - d_exp * k.ln();
    let turn = (d_exp / (c_exp * p)).powf(1.0 / p).max(1.0);
    if g(turn) >= 0.0 {
        return Ok(1.0);
    }
    let mut lo = turn;
    let mut hi = 2.0 * turn;
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-9 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A closed-form nonincreasing function on `[k0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedPsi {
    /// `exp(-(ln k)^2)`, `k >= 1`.
    LogSquare,
    /// `exp(-k^p)`, `p = log2(2 c_exp)`, `k >= 1`.
    ExpPower { c_exp: f64 },
    /// Identically zero on `[0, ∞)`.
    Zero,
}

impl NamedPsi {
    pub fn name(&self) -> &'static str {
        match self {
            NamedPsi::LogSquare => "log_square",
            NamedPsi::ExpPower { .. } => "exp_power",
            NamedPsi::Zero => "zero",
        }
    }

    /// Left end of the domain.
    pub fn k0(&self) -> f64 {
        match self {
            NamedPsi::LogSquare | NamedPsi::ExpPower { .. } => 1.0,
            NamedPsi::Zero => 0.0,
        }
    }

    pub fn ln_value(&self, k: f64) -> Result<f64> {
        match *self {
            NamedPsi::LogSquare => ln_psi_log_square(k),
            NamedPsi::ExpPower { c_exp } => ln_psi_exp_power(k, c_exp),
            NamedPsi::Zero => {
                if k >= 0.0 {
                    Ok(f64::NEG_INFINITY)
                } else {
                    Err(Error::domain(format!("need k >= 0, got {k}")))
                }
            }
        }
    }

    pub fn value(&self, k: f64) -> Result<f64> {
        Ok(self.ln_value(k)?.exp())
    }
}

/// Evidence that a function escapes the envelope the lemma would force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationCertificate {
    /// `psi(level) > envelope(level)`; both sides given as logs.
    ExceedsEnvelope {
        level: f64,
        ln_psi: f64,
        ln_envelope: f64,
    },
    /// The vanishing case demands `psi(2L) = 0`; `ln_psi` finite means
    /// `psi(2L) > 0` even when `value` underflows.
    PositiveAtTwoL { level: f64, value: f64, ln_psi: f64 },
}

impl ViolationCertificate {
    pub fn level(&self) -> f64 {
        match *self {
            ViolationCertificate::ExceedsEnvelope { level, .. } => level,
            ViolationCertificate::PositiveAtTwoL { level, .. } => level,
        }
    }
}

/// Points per decade of the geometric sweep.
pub const SWEEP_POINTS_PER_DECADE: usize = 64;

/// First sweep level where `psi` exceeds the stretched-exponential envelope
/// `psi(k0) exp(1 - ((k - k0)/tau)^theta)`, searching `k0 <= k <= k_max`.
pub fn find_exponential_violation(
    psi: &NamedPsi,
    ln_psi_at_k0: f64,
    k0: f64,
    tau: f64,
    theta: f64,
    k_max: f64,
) -> Result<Option<ViolationCertificate>> {
    if !(tau > 0.0 && theta > 0.0) {
        return Err(Error::domain(format!("need tau, theta > 0, got {tau}, {theta}")));
    }
    let mut start = k0.max(psi.k0());
    if start == 0.0 {
        start = k_max * 1e-12;
    }
    if !(k_max > start) {
        return Ok(None);
    }
    let decades = k_max.log10() - start.log10();
    let steps = (decades * SWEEP_POINTS_PER_DECADE as f64).ceil() as usize;
    for i in 0..=steps {
        let k = (start * 10f64.powf(i as f64 / SWEEP_POINTS_PER_DECADE as f64)).min(k_max);
        let ln_psi = psi.ln_value(k)?;
        let ln_envelope = ln_psi_at_k0 + 1.0 - ((k - k0).max(0.0) / tau).powf(theta);
        if ln_psi > ln_envelope {
            return Ok(Some(ViolationCertificate::ExceedsEnvelope {
                level: k,
                ln_psi,
                ln_envelope,
            }));
        }
    }
    Ok(None)
}

/// Shows that `psi` cannot satisfy the full hypothesis `hyp`.
///
/// Exponential case: sweep for a level where `psi` beats the envelope.
/// Vanishing case: evaluate `psi(2L)`; the certificate is returned whenever
/// `psi(2L) > 0`, and `None` when `psi(2L) = 0`.
pub fn find_envelope_violation(
    psi: &NamedPsi,
    hyp: &DecayHypothesis,
    psi_at_k0: f64,
    k_max: f64,
) -> Result<Option<ViolationCertificate>> {
    hyp.validate()?;
    match exp_decay_tau(hyp) {
        Ok(EnvelopeConstants::ExponentialDecay { tau }) => {
            let theta = (hyp.d - hyp.a) / hyp.d;
            return find_exponential_violation(psi, psi_at_k0.ln(), hyp.k0, tau, theta, k_max);
        }
        Ok(_) => unreachable!(),
        Err(Error::WrongCase { .. }) => {}
        Err(e) => return Err(e),
    }
    let level = match vanishing_level(hyp, psi_at_k0) {
        Ok(EnvelopeConstants::Vanishing { level }) => level,
        Ok(_) => unreachable!(),
        Err(Error::WrongCase { found, .. }) => {
            return Err(Error::WrongCase {
                expected: "ExponentialDecay or Vanishing",
                found,
            })
        }
        Err(e) => return Err(e),
    };
    let two_l = 2.0 * level;
    let ln_psi = psi.ln_value(two_l)?;
    if ln_psi == f64::NEG_INFINITY {
        return Ok(None);
    }
    Ok(Some(ViolationCertificate::PositiveAtTwoL {
        level: two_l,
        value: ln_psi.exp(),
        ln_psi,
    }))
}

/// `max(4^D c2, c_bar^(1-B))`: with the doubling inequality (constant `c2`)
/// and the power envelope (constant `c_bar`), the full hypothesis holds with
/// this `c1`.
pub fn equivalence_constant(c2: f64, d_exp: f64, c_bar: f64, b_exp: f64) -> Result<f64> {
    if !(c2 > 0.0 && d_exp > 0.0 && c_bar > 0.0 && b_exp > 0.0) {
        return Err(Error::domain("equivalence constant needs positive arguments"));
    }
    if !(b_exp < 1.0) {
        return Err(Error::domain(format!("need B < 1, got {b_exp}")));
    }
    Ok((4f64.powf(d_exp) * c2).max(c_bar.powf(1.0 - b_exp)))
}
