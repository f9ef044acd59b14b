//! Distribution functions and weak-`L^r` (Marcinkiewicz) diagnostics for
//! sampled fields.
//!
//! A field is a list of values with a positive measure attached to each
//! value. Superlevel sets use `|u| >= k`, so a profile evaluated at `0` is
//! the total measure.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: u32) -> f64 {
    let mut v = if n.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

/// Sampled distribution function `k -> |{|u| >= k}|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionProfile {
    pub levels: Vec<f64>,
    pub measures: Vec<f64>,
    pub total_measure: f64,
}

impl DistributionProfile {
    pub fn new(levels: Vec<f64>, measures: Vec<f64>, total_measure: f64) -> Result<Self> {
        if levels.len() != measures.len() {
            return Err(Error::LengthMismatch {
                what: "measures",
                expected: levels.len(),
                found: measures.len(),
            });
        }
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("profile levels must be strictly increasing"));
        }
        if measures.iter().any(|m| !(*m >= 0.0)) || measures.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("profile measures must be nonnegative and nonincreasing"));
        }
        if let Some(&first) = measures.first() {
            if first > total_measure {
                return Err(Error::invalid(format!(
                    "measure {first} exceeds total measure {total_measure}"
                )));
            }
        }
        Ok(DistributionProfile {
            levels,
            measures,
            total_measure,
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Step evaluation: the measure at the largest level `<= k`, or the total
    /// measure below the first level.
    pub fn measure_at(&self, k: f64) -> f64 {
        let idx = self.levels.partition_point(|&l| l <= k);
        if idx == 0 {
            self.total_measure
        } else {
            self.measures[idx - 1]
        }
    }

    /// Largest level whose superlevel set has positive measure.
    pub fn largest_positive_level(&self) -> Option<f64> {
        self.levels
            .iter()
            .zip(&self.measures)
            .rev()
            .find(|(_, &m)| m > 0.0)
            .map(|(&l, _)| l)
    }
}

/// `measures[j] = Σ weights[i]` over `|values[i]| >= levels[j]`.
pub fn distribution_function(
    values: &[f64],
    weights: &[f64],
    levels: &[f64],
) -> Result<DistributionProfile> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: values.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    if levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("levels must be strictly increasing"));
    }

    let mut samples: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .map(|(v, &w)| (v.abs(), w))
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut cumulative = Vec::with_capacity(samples.len() + 1);
    let mut acc = 0.0;
    cumulative.push(acc);
    for &(_, w) in &samples {
        acc += w;
        cumulative.push(acc);
    }

    let measures = levels
        .iter()
        .map(|&t| cumulative[samples.partition_point(|s| s.0 >= t)])
        .collect();
    Ok(DistributionProfile {
        levels: levels.to_vec(),
        measures,
        total_measure: acc,
    })
}

/// `count` geometrically spaced levels covering `[lo, hi]`.
pub fn geometric_levels(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi > lo) || per_decade == 0 {
        return if lo > 0.0 && hi == lo { vec![lo] } else { Vec::new() };
    }
    let steps = ((hi / lo).log10() * per_decade as f64).ceil() as usize;
    let ratio = (hi / lo).ln() / steps as f64;
    let mut levels: Vec<f64> = (0..=steps).map(|i| lo * (ratio * i as f64).exp()).collect();
    levels[steps] = hi;
    levels
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakNormEstimate {
    pub r: f64,
    /// `max_k k^r |{|u| >= k}|`, a lower bound for `‖u‖_{M^r}^r`.
    pub norm_estimate: f64,
    pub attained_at: Option<f64>,
}

pub fn weak_norm_estimate(profile: &DistributionProfile, r: f64) -> Result<WeakNormEstimate> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("need r > 0, got {r}")));
    }
    let mut best = WeakNormEstimate {
        r,
        norm_estimate: 0.0,
        attained_at: None,
    };
    for (&k, &m) in profile.levels.iter().zip(&profile.measures) {
        if k <= 0.0 {
            continue;
        }
        let v = k.powf(r) * m;
        if v > best.norm_estimate {
            best.norm_estimate = v;
            best.attained_at = Some(k);
        }
    }
    Ok(best)
}

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r_squared,
        points: xs.len(),
    }
}

/// Minimum number of positive-measure points a fit needs.
pub const MIN_FIT_POINTS: usize = 8;

fn fit_window(
    profile: &DistributionProfile,
    keep: impl Fn(f64) -> bool,
    transform: impl Fn(f64) -> f64,
) -> Result<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = profile
        .levels
        .iter()
        .zip(&profile.measures)
        .filter(|(&k, &m)| k > 0.0 && m > 0.0 && keep(k))
        .map(|(&k, &m)| (transform(k), m.ln()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            found: xs.len(),
        });
    }
    Ok(least_squares(&xs, &ys))
}

/// Fits `ln|A_k|` against `ln k` on `[k_min, k_max]`; the slope estimates `-s`.
pub fn tail_exponent_fit(profile: &DistributionProfile, k_min: f64, k_max: f64) -> Result<LinearFit> {
    fit_window(profile, |k| k >= k_min && k <= k_max, f64::ln)
}

/// Fits `ln|A_k|` against `k^theta` for `k >= k_min`.
///
/// A stretched-exponential tail `|A_k| <= C exp(-2 lambda k^theta)` shows up as
/// a straight line with slope `-2 lambda`.
pub fn exp_integrability_fit(
    profile: &DistributionProfile,
    theta: f64,
    k_min: f64,
) -> Result<LinearFit> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain(format!("need 0 < theta < 1, got {theta}")));
    }
    fit_window(profile, |k| k >= k_min, |k| k.powf(theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summability {
    /// `S_K = Σ_{k=1..K} k^(r-1) |A_k|` for `K = 1..=k_top`.
    pub partial_sums: Vec<f64>,
    /// Heuristic: the last decade adds less than 1% of the total.
    pub convergent: bool,
}

/// Partial sums of the series characterizing `u ∈ L^r`.
pub fn summability_test(profile: &DistributionProfile, r: f64, k_top: usize) -> Result<Summability> {
    if !(r >= 1.0) {
        return Err(Error::domain(format!("need r >= 1, got {r}")));
    }
    if k_top < 10 {
        return Err(Error::domain(format!("need k_top >= 10, got {k_top}")));
    }
    let mut partial_sums = Vec::with_capacity(k_top);
    let mut acc = 0.0;
    for k in 1..=k_top {
        let kf = k as f64;
        acc += kf.powf(r - 1.0) * profile.measure_at(kf);
        partial_sums.push(acc);
    }
    let total = partial_sums[k_top - 1];
    let before_last_decade = partial_sums[k_top / 10 - 1];
    let convergent = total == 0.0 || (total - before_last_decade) < 0.01 * total;
    Ok(Summability {
        partial_sums,
        convergent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralBound {
    /// `Σ_E |f| w`.
    pub lhs: f64,
    /// `norm_const (Σ_E w)^(1 - 1/r)`.
    pub rhs: f64,
    pub ratio: f64,
    pub passes: bool,
}

/// Checks `∫_E |f| <= norm_const |E|^(1 - 1/r)` for the subset selected by `mask`.
pub fn integral_bound_check(
    values: &[f64],
    weights: &[f64],
    mask: &[bool],
    r: f64,
    norm_const: f64,
) -> Result<IntegralBound> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: values.len(),
            found: weights.len(),
        });
    }
    if mask.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "mask",
            expected: values.len(),
            found: mask.len(),
        });
    }
    if !(r > 1.0) {
        return Err(Error::domain(format!("need r > 1, got {r}")));
    }
    if !(norm_const > 0.0) {
        return Err(Error::domain(format!("need a positive constant, got {norm_const}")));
    }
    let (mut lhs, mut measure) = (0.0, 0.0);
    for ((v, w), &inside) in values.iter().zip(weights).zip(mask) {
        if inside {
            lhs += v.abs() * w;
            measure += w;
        }
    }
    let rhs = norm_const * measure.powf(1.0 - 1.0 / r);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(IntegralBound {
        lhs,
        rhs,
        ratio,
        passes: ratio <= 1.0 + 1e-12,
    })
}

/// Constant `B` with `∫_E |f| <= B |E|^(1 - 1/r)` for every `E`, given
/// `‖f‖_{M^r}^r = norm_pow_r`: `B = r/(r - 1) (norm_pow_r)^(1/r)`.
pub fn weak_holder_constant(norm_pow_r: f64, r: f64) -> f64 {
    r / (r - 1.0) * norm_pow_r.powf(1.0 / r)
}

/// `Σ |v|^t w`.
pub fn lp_integral(values: &[f64], weights: &[f64], t: f64) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v.abs().powf(t) * w).sum()
}

/// The radial source `f(x) = scale |x|^(-n/r)`, a canonical member of `M^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSource {
    pub n: u32,
    pub r: f64,
    pub scale: f64,
    /// Outer radius of the sampled ball.
    pub radius: f64,
    /// Exact averages of `f` over the radial cells `[nodes[i], nodes[i+1]]`.
    pub cell_averages: Vec<f64>,
}

/// `b^e - a^e` for `0 <= a < b`, accurate when `a` is close to `b`.
fn power_difference(a: f64, b: f64, e: f64) -> f64 {
    if a == 0.0 {
        b.powf(e)
    } else {
        a.powf(e) * (e * (b / a).ln()).exp_m1()
    }
}

impl PowerSource {
    pub fn point_value(&self, rho: f64) -> f64 {
        self.scale * rho.powf(-(self.n as f64) / self.r)
    }

    /// `|{f > t}|` on the ball: `min(|B_1| scale^r t^-r, |Ω|)`.
    pub fn distribution(&self, t: f64) -> f64 {
        let vn = unit_ball_volume(self.n);
        let full = vn * self.radius.powi(self.n as i32);
        if t <= 0.0 {
            return full;
        }
        (vn * self.scale.powf(self.r) * t.powf(-self.r)).min(full)
    }

    /// `‖f‖_{M^r}^r` on all of `R^n` (an upper bound on the ball).
    pub fn weak_norm_pow_r(&self) -> f64 {
        unit_ball_volume(self.n) * self.scale.powf(self.r)
    }

    /// Average of `f` over the shell `a <= |x| <= b`.
    pub fn shell_average(&self, a: f64, b: f64) -> f64 {
        let n = self.n as f64;
        let e = n - n / self.r;
        self.scale * (n / e) * power_difference(a, b, e) / power_difference(a, b, n)
    }
}

pub fn power_source(nodes: &[f64], n: u32, r: f64, scale: f64) -> Result<PowerSource> {
    if !(r > 1.0) {
        return Err(Error::domain(format!("need r > 1, got {r}")));
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!("need scale >= 0, got {scale}")));
    }
    if nodes.len() < 2 || nodes[0] < 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("nodes must be nonnegative and strictly increasing"));
    }
    let mut src = PowerSource {
        n,
        r,
        scale,
        radius: nodes[nodes.len() - 1],
        cell_averages: Vec::new(),
    };
    src.cell_averages = nodes
        .windows(2)
        .map(|w| src.shell_average(w[0], w[1]))
        .collect();
    Ok(src)
}
