//! The generalized level-set decay lemma.
//!
//! A nonincreasing `psi: [k0, ∞) -> [0, ∞)` satisfying
//!
//! ```text
//! psi(h) <= c1 (h^A psi(k)^B + psi(k)^C) / (h - k)^D     for h > k > k0
//! ```
//!
//! with `A < D` obeys one of three envelopes depending on `B` and `C`:
//!
//! * `C < B < 1` with `(D - A)/(1 - B) = D/(1 - C) = lambda`: `psi(k) <= c_bar k^-lambda`;
//! * `B = C = 1`: `psi(k) <= psi(k0) exp(1 - ((k - k0)/tau)^((D - A)/D))`;
//! * `min(B, C) > 1`: `psi(2L) = 0`.
//!
//! The constants below are the explicit ones of the proof, not optimal ones.

use std::f64::consts::{E, LN_2};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_CLASSIFY_TOLERANCE: f64 = 1e-9;

/// Rounding slack accepted on ratios before a check counts as violated.
pub const RATIO_SLACK: f64 = 1e-12;

/// Cap on the number of individual violating pairs kept in a report.
const MAX_RECORDED_VIOLATIONS: usize = 1000;

/// Constants `(c1, A, B, C, D, k0)` of the decay inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayHypothesis {
    pub c1: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub k0: f64,
}

impl DecayHypothesis {
    pub fn new(c1: f64, a: f64, b: f64, c: f64, d: f64, k0: f64) -> Result<Self> {
        let hyp = DecayHypothesis { c1, a, b, c, d, k0 };
        hyp.validate()?;
        Ok(hyp)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.a, self.b, self.c, self.d, self.k0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("hypothesis constants must be finite"));
        }
        if !(self.c1 > 0.0 && self.a > 0.0 && self.b > 0.0 && self.c > 0.0 && self.d > 0.0) {
            return Err(Error::domain(format!(
                "c1, A, B, C, D must be positive, got {self:?}"
            )));
        }
        if !(self.a < self.d) {
            return Err(Error::domain(format!(
                "need A < D, got A = {}, D = {}",
                self.a, self.d
            )));
        }
        if !(self.k0 >= 0.0) {
            return Err(Error::domain(format!("need k0 >= 0, got {}", self.k0)));
        }
        Ok(())
    }

    /// Right-hand side of the inequality for the pair `h > k` given `psi(k)`.
    pub fn rhs(&self, h: f64, k: f64, psi_k: f64) -> f64 {
        self.c1 * (h.powf(self.a) * psi_k.powf(self.b) + psi_k.powf(self.c)) / (h - k).powf(self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseKind {
    PowerDecay,
    ExponentialDecay,
    Vanishing,
    Unclassified,
}

impl CaseKind {
    pub fn name(self) -> &'static str {
        match self {
            CaseKind::PowerDecay => "PowerDecay",
            CaseKind::ExponentialDecay => "ExponentialDecay",
            CaseKind::Vanishing => "Vanishing",
            CaseKind::Unclassified => "Unclassified",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseClass {
    pub kind: CaseKind,
    /// `(D - A)/(1 - B) - D/(1 - C)`, reported whenever `max(B, C) < 1`.
    pub balance_residual: Option<f64>,
}

/// Decides which case of the lemma applies.
///
/// The balance test is relative: `|residual| <= tol * max(1, |lambda|)`.
pub fn classify(hyp: &DecayHypothesis, tol: f64) -> CaseClass {
    let (b, c) = (hyp.b, hyp.c);
    if (b - 1.0).abs() <= tol && (c - 1.0).abs() <= tol {
        return CaseClass {
            kind: CaseKind::ExponentialDecay,
            balance_residual: None,
        };
    }
    if b.min(c) > 1.0 {
        return CaseClass {
            kind: CaseKind::Vanishing,
            balance_residual: None,
        };
    }
    if b.max(c) < 1.0 {
        let lambda = (hyp.d - hyp.a) / (1.0 - b);
        let residual = lambda - hyp.d / (1.0 - c);
        let kind = if residual.abs() <= tol * lambda.abs().max(1.0) {
            CaseKind::PowerDecay
        } else {
            CaseKind::Unclassified
        };
        return CaseClass {
            kind,
            balance_residual: Some(residual),
        };
    }
    CaseClass {
        kind: CaseKind::Unclassified,
        balance_residual: None,
    }
}

/// Explicit constants of the envelope for each case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeConstants {
    PowerDecay { lambda: f64, m: f64, c_bar: f64 },
    ExponentialDecay { tau: f64 },
    Vanishing { level: f64 },
}

impl EnvelopeConstants {
    pub fn kind(&self) -> CaseKind {
        match self {
            EnvelopeConstants::PowerDecay { .. } => CaseKind::PowerDecay,
            EnvelopeConstants::ExponentialDecay { .. } => CaseKind::ExponentialDecay,
            EnvelopeConstants::Vanishing { .. } => CaseKind::Vanishing,
        }
    }
}

fn require_case(hyp: &DecayHypothesis, tol: f64, expected: CaseKind) -> Result<()> {
    hyp.validate()?;
    let found = classify(hyp, tol).kind;
    if found != expected {
        return Err(Error::WrongCase {
            expected: expected.name(),
            found: found.name(),
        });
    }
    Ok(())
}

fn check_psi_k0(psi_at_k0: f64) -> Result<()> {
    if !(psi_at_k0 >= 0.0) || !psi_at_k0.is_finite() {
        return Err(Error::domain(format!(
            "psi(k0) must be finite and nonnegative, got {psi_at_k0}"
        )));
    }
    Ok(())
}

/// Case i: `lambda`, `M` and `c_bar = 2^lambda M`.
///
/// `c1` is replaced by `max(c1, 1)` before use.
pub fn power_decay_constants(hyp: &DecayHypothesis, psi_at_k0: f64) -> Result<EnvelopeConstants> {
    require_case(hyp, DEFAULT_CLASSIFY_TOLERANCE, CaseKind::PowerDecay)?;
    check_psi_k0(psi_at_k0)?;
    let one_minus_b = 1.0 - hyp.b;
    let lambda = (hyp.d - hyp.a) / one_minus_b;
    let c1 = hyp.c1.max(1.0);
    let rho_k0 = if hyp.k0 > 0.0 {
        hyp.k0.powf(lambda) * psi_at_k0
    } else {
        0.0
    };
    let m = c1.powf(1.0 / one_minus_b)
        * 2f64.powf((lambda + hyp.a + 1.0) / one_minus_b)
        * (1.0 + rho_k0).powf(hyp.b);
    Ok(EnvelopeConstants::PowerDecay {
        lambda,
        m,
        c_bar: 2f64.powf(lambda) * m,
    })
}

/// Case ii: the stretched-exponential scale `tau`.
pub fn exp_decay_tau(hyp: &DecayHypothesis) -> Result<EnvelopeConstants> {
    require_case(hyp, DEFAULT_CLASSIFY_TOLERANCE, CaseKind::ExponentialDecay)?;
    let (a, d) = (hyp.a, hyp.d);
    let gap = d - a;
    let inner = 2.0 * hyp.c1 * E * 2f64.powf((2.0 * d - a) * a / gap) * gap.powf(d) / d.powf(d);
    Ok(EnvelopeConstants::ExponentialDecay {
        tau: (hyp.k0 + 1.0).max(inner.powf(1.0 / gap)),
    })
}

/// Case iii: the level `L` with `psi(2L) = 0`.
///
/// The formula is applied with `B := max(B, C)` and `C := min(B, C)`.
pub fn vanishing_level(hyp: &DecayHypothesis, psi_at_k0: f64) -> Result<EnvelopeConstants> {
    require_case(hyp, DEFAULT_CLASSIFY_TOLERANCE, CaseKind::Vanishing)?;
    check_psi_k0(psi_at_k0)?;
    let (a, d, c1) = (hyp.a, hyp.d, hyp.c1);
    let big = hyp.b.max(hyp.c);
    let small = hyp.b.min(hyp.c);
    let gap = d - a;
    let lift = (1.0 + psi_at_k0).powf(big);

    let third = (c1 * 2f64.powf(1.0 + d) * lift).powf(1.0 / gap);
    let cm1 = small - 1.0;
    let two_exp = d + 1.0 + (a + d + 1.0) / cm1 + d / (cm1 * cm1);
    let fourth = (c1.powf(small / cm1) * lift * 2f64.powf(two_exp)).powf(cm1 / (gap * small));

    let level = 1f64.max(2.0 * hyp.k0).max(third).max(fourth);
    Ok(EnvelopeConstants::Vanishing { level })
}

/// Constants for whichever case `hyp` falls in.
pub fn envelope_constants(
    hyp: &DecayHypothesis,
    psi_at_k0: f64,
    tol: f64,
) -> Result<EnvelopeConstants> {
    hyp.validate()?;
    match classify(hyp, tol).kind {
        CaseKind::PowerDecay => power_decay_constants(hyp, psi_at_k0),
        CaseKind::ExponentialDecay => exp_decay_tau(hyp),
        CaseKind::Vanishing => vanishing_level(hyp, psi_at_k0),
        CaseKind::Unclassified => Err(Error::WrongCase {
            expected: "PowerDecay, ExponentialDecay or Vanishing",
            found: CaseKind::Unclassified.name(),
        }),
    }
}

/// The envelope of a hypothesis, ready for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub hyp: DecayHypothesis,
    pub psi_at_k0: f64,
    pub constants: EnvelopeConstants,
}

impl Envelope {
    pub fn new(hyp: &DecayHypothesis, psi_at_k0: f64) -> Result<Self> {
        Self::with_tolerance(hyp, psi_at_k0, DEFAULT_CLASSIFY_TOLERANCE)
    }

    pub fn with_tolerance(hyp: &DecayHypothesis, psi_at_k0: f64, tol: f64) -> Result<Self> {
        let constants = envelope_constants(hyp, psi_at_k0, tol)?;
        Ok(Envelope {
            hyp: *hyp,
            psi_at_k0,
            constants,
        })
    }

    /// Envelope value at `k`; `+∞` at `k = 0` in the power case.
    pub fn eval(&self, k: f64) -> f64 {
        match self.constants {
            EnvelopeConstants::PowerDecay { lambda, c_bar, .. } => {
                if k <= 0.0 {
                    f64::INFINITY
                } else {
                    c_bar * k.powf(-lambda)
                }
            }
            EnvelopeConstants::ExponentialDecay { .. } => self.ln_eval(k).exp(),
            EnvelopeConstants::Vanishing { level } => {
                if k < 2.0 * level {
                    self.psi_at_k0
                } else {
                    0.0
                }
            }
        }
    }

    /// Natural log of the envelope, finite where [`Envelope::eval`] underflows.
    pub fn ln_eval(&self, k: f64) -> f64 {
        match self.constants {
            EnvelopeConstants::PowerDecay { lambda, c_bar, .. } => {
                if k <= 0.0 {
                    f64::INFINITY
                } else {
                    c_bar.ln() - lambda * k.ln()
                }
            }
            EnvelopeConstants::ExponentialDecay { tau } => {
                let theta = (self.hyp.d - self.hyp.a) / self.hyp.d;
                let x = ((k - self.hyp.k0).max(0.0) / tau).powf(theta);
                self.psi_at_k0.ln() + 1.0 - x
            }
            EnvelopeConstants::Vanishing { .. } => self.eval(k).ln(),
        }
    }
}

/// Envelope at a single level. `k` must be at least `k0`.
pub fn envelope(hyp: &DecayHypothesis, psi_at_k0: f64, k: f64) -> Result<f64> {
    if !(k >= hyp.k0) {
        return Err(Error::domain(format!("need k >= k0 = {}, got {k}", hyp.k0)));
    }
    Ok(Envelope::new(hyp, psi_at_k0)?.eval(k))
}

/// A nonincreasing nonnegative function tabulated on increasing knots.
///
/// Between knots the table is a right-continuous step function: the value at
/// `k` is the value at the largest knot `<= k`. Left of the first knot the
/// first value is used.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    knots: Vec<f64>,
    values: Vec<f64>,
    k0: f64,
}

impl PsiTable {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, k0: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "values",
                expected: knots.len(),
                found: values.len(),
            });
        }
        if knots.is_empty() {
            return Err(Error::EmptyTable);
        }
        if !(k0 >= 0.0) || !k0.is_finite() {
            return Err(Error::domain(format!("k0 must be finite and >= 0, got {k0}")));
        }
        if knots[0] < k0 {
            return Err(Error::invalid(format!(
                "first knot {} lies below k0 = {k0}",
                knots[0]
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::invalid(format!(
                    "knots must be strictly increasing and finite ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("value {v} at knot {} is invalid", knots[i])));
            }
        }
        for (i, w) in values.windows(2).enumerate() {
            if w[1] > w[0] + 1e-12 * w[0] {
                return Err(Error::invalid(format!(
                    "values must be nonincreasing: {} at k = {} then {} at k = {}",
                    w[0],
                    knots[i],
                    w[1],
                    knots[i + 1]
                )));
            }
        }
        Ok(PsiTable { knots, values, k0 })
    }

    /// Tabulates `f` on the given knots.
    pub fn from_fn(knots: Vec<f64>, k0: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots.iter().map(|&k| f(k)).collect();
        Self::new(knots, values, k0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn last_knot(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Step evaluation.
    pub fn value_at(&self, k: f64) -> f64 {
        let idx = self.knots.partition_point(|&x| x <= k);
        if idx == 0 {
            self.values[0]
        } else {
            self.values[idx - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStrategy {
    /// Every pair of knots `h > k`.
    AllKnotPairs,
    /// `h = 2k` for each knot `k` with `2k` inside the table.
    Doubling,
    /// `count` uniformly drawn knot pairs.
    RandomPairs { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRatio {
    pub h: f64,
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// `max lhs / rhs` over the sampled pairs; `<= 1` means the inequality held.
    pub max_ratio: f64,
    pub worst: Option<PairRatio>,
    pub pairs_checked: usize,
    pub violation_count: usize,
    /// The first violating pairs, at most a thousand of them.
    pub violations: Vec<PairRatio>,
}

impl HypothesisReport {
    pub fn passes(&self) -> bool {
        self.max_ratio <= 1.0 + RATIO_SLACK
    }
}

fn ratio_of(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Checks the decay inequality on pairs of levels from the table.
pub fn check_hypothesis(
    table: &PsiTable,
    hyp: &DecayHypothesis,
    strategy: PairStrategy,
) -> Result<HypothesisReport> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    hyp.validate()?;

    let knots = table.knots();
    let start = knots.partition_point(|&k| k < hyp.k0);
    let mut report = HypothesisReport {
        max_ratio: 0.0,
        worst: None,
        pairs_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
    };
    let mut visit = |h: f64, k: f64, psi_h: f64, psi_k: f64| {
        let rhs = hyp.rhs(h, k, psi_k);
        let ratio = ratio_of(psi_h, rhs);
        let pair = PairRatio {
            h,
            k,
            lhs: psi_h,
            rhs,
            ratio,
        };
        report.pairs_checked += 1;
        if report.worst.is_none() || ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst = Some(pair);
        }
        if ratio > 1.0 + RATIO_SLACK {
            report.violation_count += 1;
            if report.violations.len() < MAX_RECORDED_VIOLATIONS {
                report.violations.push(pair);
            }
        }
    };

    let values = table.values();
    match strategy {
        PairStrategy::AllKnotPairs => {
            for i in start..knots.len() {
                for j in i + 1..knots.len() {
                    visit(knots[j], knots[i], values[j], values[i]);
                }
            }
        }
        PairStrategy::Doubling => {
            let last = table.last_knot();
            for i in start..knots.len() {
                let k = knots[i];
                let h = 2.0 * k;
                if h > last {
                    break;
                }
                if h > k {
                    visit(h, k, table.value_at(h), values[i]);
                }
            }
        }
        PairStrategy::RandomPairs { count, seed } => {
            let usable = knots.len() - start;
            if usable >= 2 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..count {
                    let x = start + rng.random_range(0..usable);
                    let mut y = start + rng.random_range(0..usable - 1);
                    if y >= x {
                        y += 1;
                    }
                    let (i, j) = if x < y { (x, y) } else { (y, x) };
                    visit(knots[j], knots[i], values[j], values[i]);
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// `max psi(k) / envelope(k)` over the knots.
    pub max_ratio: f64,
    pub worst_knot: Option<f64>,
    pub first_violation: Option<f64>,
    pub knots_checked: usize,
}

impl EnvelopeReport {
    pub fn passes(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compares the table against the envelope at every knot `k >= k0`.
///
/// In the power case the knot `k = 0` is skipped (the bound is vacuous there).
pub fn check_envelope(
    table: &PsiTable,
    hyp: &DecayHypothesis,
    psi_at_k0: f64,
) -> Result<EnvelopeReport> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let env = Envelope::new(hyp, psi_at_k0)?;
    let mut report = EnvelopeReport {
        max_ratio: 0.0,
        worst_knot: None,
        first_violation: None,
        knots_checked: 0,
    };
    for (&k, &psi) in table.knots().iter().zip(table.values()) {
        if k < hyp.k0 {
            continue;
        }
        if k <= 0.0 && env.constants.kind() == CaseKind::PowerDecay {
            continue;
        }
        let ratio = ratio_of(psi, env.eval(k));
        report.knots_checked += 1;
        if report.worst_knot.is_none() || ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_knot = Some(k);
        }
        if ratio > 1.0 + RATIO_SLACK && report.first_violation.is_none() {
            report.first_violation = Some(k);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GiustiTrace {
    /// `x_0, ..., x_steps`.
    pub values: Vec<f64>,
    /// `x0 <= c_bar^(-1/(beta-1)) m^(-1/(beta-1)^2)`, decided as `kappa <= 1`.
    pub premise_holds: bool,
    /// `x_i <= m^(-i/(beta-1)) x0` at every computed step.
    pub bound_holds: bool,
}

/// Largest `x0` allowed by the premise of the recursion lemma.
pub fn giusti_threshold(c_bar: f64, m: f64, beta: f64) -> f64 {
    let bm1 = beta - 1.0;
    c_bar.powf(-1.0 / bm1) * m.powf(-1.0 / (bm1 * bm1))
}

/// The sequence `x_{i+1} = c_bar m^i x_i^beta`.
///
/// The values are evaluated through the normalized ratios
/// `r_i = x_i / (m^(-i/(beta-1)) x0)`, which obey `r_0 = 1`,
/// `r_{i+1} = kappa r_i^beta` with `kappa = c_bar x0^(beta-1) m^(1/(beta-1))`.
/// The premise is exactly `kappa <= 1`. In this form rounding is not
/// amplified by `beta` at every step.
pub fn giusti_recursion(c_bar: f64, m: f64, beta: f64, x0: f64, steps: usize) -> Result<GiustiTrace> {
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::domain(format!("need beta > 1, got {beta}")));
    }
    if !(c_bar > 0.0) || !c_bar.is_finite() {
        return Err(Error::domain(format!("need c_bar > 0, got {c_bar}")));
    }
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::domain(format!("need m > 1, got {m}")));
    }
    if !(x0 >= 0.0) || !x0.is_finite() {
        return Err(Error::domain(format!("need x0 >= 0, got {x0}")));
    }
    let bm1 = beta - 1.0;
    let kappa = c_bar * x0.powf(bm1) * m.powf(1.0 / bm1);

    let mut values = Vec::with_capacity(steps + 1);
    let mut ratio = 1.0f64;
    let mut bound_holds = true;
    for i in 0..=steps {
        let bound = m.powf(-(i as f64) / bm1) * x0;
        let x = if i == 0 { x0 } else { ratio * bound };
        if x > bound {
            bound_holds = false;
        }
        values.push(x);
        ratio = kappa * ratio.powf(beta);
    }
    Ok(GiustiTrace {
        values,
        premise_holds: kappa <= 1.0,
        bound_holds,
    })
}

/// Levels used by the proof of the exponential and vanishing cases.
///
/// Exponential: `k_s = k0 + tau s^(D/(D-A))` for `s = 0, 1, ...`.
/// Vanishing: `k_i = 2L (1 - 2^(-i-1))`, increasing from `L` to `2L`.
pub fn level_sequence(
    hyp: &DecayHypothesis,
    constants: &EnvelopeConstants,
    count: usize,
) -> Result<Vec<f64>> {
    match *constants {
        EnvelopeConstants::ExponentialDecay { tau } => {
            let power = hyp.d / (hyp.d - hyp.a);
            Ok((0..count)
                .map(|s| hyp.k0 + tau * (s as f64).powf(power))
                .collect())
        }
        EnvelopeConstants::Vanishing { level } => Ok((0..count)
            .map(|i| 2.0 * level * (1.0 - (-(i as f64 + 1.0) * LN_2).exp()))
            .collect()),
        EnvelopeConstants::PowerDecay { .. } => Err(Error::WrongCase {
            expected: "ExponentialDecay or Vanishing",
            found: CaseKind::PowerDecay.name(),
        }),
    }
}
