//! Radial discretization of the functional
//! `J(v) = ∫ a(v) j(∇v) - ∫ f v` on a ball, with
//! `a(s) = beta1 / (b + |s|)^(alpha p)` and `j(ξ) = |ξ|^p`.
//!
//! Fields are nodal values on a uniform radial grid with `u(R) = 0`. On each
//! cell the energy density is evaluated at the nodal average and the divided
//! difference, against the exact measure of the spherical shell.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponents::{
    compute_exponents, regime_from_thresholds, ExponentSet, LevelSetExponents, ProblemParams,
    Regime,
};
use crate::marcinkiewicz::{
    distribution_function, exp_integrability_fit, geometric_levels, power_source,
    tail_exponent_fit, unit_ball_volume, DistributionProfile, LinearFit,
};

/// Default smoothing parameter for `j`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Backtracking gives up once the step falls below this.
pub const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub n: u32,
    pub radius: f64,
    pub cells: usize,
    pub nodes: Vec<f64>,
    pub cell_measures: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(n: u32, radius: f64, cells: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(format!("radius must be > 0, got {radius}")));
        }
        if cells == 0 {
            return Err(Error::domain("need at least one cell"));
        }
        let h = radius / cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
        nodes[cells] = radius;
        let vn = unit_ball_volume(n);
        let e = n as i32;
        let cell_measures = nodes
            .windows(2)
            .map(|w| vn * (w[1].powi(e) - w[0].powi(e)))
            .collect();
        Ok(RadialGrid {
            n,
            radius,
            cells,
            nodes,
            cell_measures,
        })
    }

    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    pub fn total_measure(&self) -> f64 {
        unit_ball_volume(self.n) * self.radius.powi(self.n as i32)
    }

    fn width(&self, c: usize) -> f64 {
        self.nodes[c + 1] - self.nodes[c]
    }
}

/// Nodal values with the zero boundary value at the last node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.last() {
            None => Err(Error::invalid("field needs at least one node")),
            Some(&v) if v != 0.0 => Err(Error::invalid(format!(
                "boundary value must be 0, got {v}"
            ))),
            _ => Ok(DiscreteField { values }),
        }
    }

    pub fn zeros(nodes: usize) -> Self {
        DiscreteField {
            values: vec![0.0; nodes.max(1)],
        }
    }

    /// Builds a field from a function of the radius; the boundary value is
    /// overwritten with 0.
    pub fn from_fn(grid: &RadialGrid, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut values: Vec<f64> = grid.nodes.iter().map(|&x| f(x)).collect();
        values[grid.cells] = 0.0;
        DiscreteField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `|u|` averaged over each cell.
    pub fn cell_abs_averages(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .map(|w| 0.5 * (w[0].abs() + w[1].abs()))
            .collect()
    }

    pub fn negated(&self) -> Self {
        DiscreteField {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Coefficients of the discrete functional.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub n: u32,
    pub p: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub b_const: f64,
    /// Cell averages of `f`.
    pub source: Vec<f64>,
    pub epsilon: f64,
}

impl FunctionalSpec {
    /// Unlike [`ProblemParams`], `alpha = 0` is accepted here; it gives the
    /// linear-coefficient functional.
    pub fn new(
        n: u32,
        p: f64,
        alpha: f64,
        beta1: f64,
        b_const: f64,
        source: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let spec = FunctionalSpec {
            n,
            p,
            alpha,
            beta1,
            b_const,
            source,
            epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_params(params: &ProblemParams, source: Vec<f64>, epsilon: f64) -> Result<Self> {
        params.validate()?;
        Self::new(
            params.n,
            params.p,
            params.alpha,
            params.beta1,
            params.b_const,
            source,
            epsilon,
        )
    }

    /// The problem with source `scale |x|^(-n/r)`, averaged exactly over cells.
    pub fn with_power_source(
        params: &ProblemParams,
        grid: &RadialGrid,
        scale: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if grid.n != params.n {
            return Err(Error::invalid(format!(
                "grid dimension {} differs from problem dimension {}",
                grid.n, params.n
            )));
        }
        let src = power_source(&grid.nodes, params.n, params.r, scale)?;
        Self::from_params(params, src.cell_averages, epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::domain(format!("p must be > 1, got {}", self.p)));
        }
        let p_prime = self.p / (self.p - 1.0);
        if !(self.alpha >= 0.0 && self.alpha * p_prime < 1.0) {
            return Err(Error::domain(format!(
                "alpha must satisfy 0 <= alpha < 1/p', got {}",
                self.alpha
            )));
        }
        if !(self.beta1 > 0.0) || !self.beta1.is_finite() {
            return Err(Error::domain(format!("beta1 must be > 0, got {}", self.beta1)));
        }
        if !(self.b_const > 0.0) || !self.b_const.is_finite() {
            return Err(Error::domain(format!("b_const must be > 0, got {}", self.b_const)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.source.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("source values must be finite"));
        }
        Ok(())
    }

    fn coefficient(&self, s: f64) -> f64 {
        self.beta1 * (self.b_const + s.abs()).powf(-self.alpha * self.p)
    }

    fn coefficient_derivative(&self, s: f64) -> f64 {
        if s == 0.0 || self.alpha == 0.0 {
            return 0.0;
        }
        let ap = self.alpha * self.p;
        -ap * self.beta1 * s.signum() * (self.b_const + s.abs()).powf(-ap - 1.0)
    }

    /// `j_eps(ξ) = (eps² + ξ²)^(p/2) - eps^p`.
    fn j(&self, xi: f64) -> f64 {
        let eps = self.epsilon;
        if eps == 0.0 {
            return xi.abs().powf(self.p);
        }
        let z = (xi / eps) * (xi / eps);
        eps.powf(self.p) * (0.5 * self.p * z.ln_1p()).exp_m1()
    }

    fn j_prime(&self, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        let e2 = self.epsilon * self.epsilon;
        self.p * xi * (e2 + xi * xi).powf(0.5 * self.p - 1.0)
    }

    fn j_second(&self, xi: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        let s = e2 + xi * xi;
        if s == 0.0 {
            return if self.p == 2.0 { 2.0 } else { 0.0 };
        }
        self.p * s.powf(0.5 * self.p - 2.0) * (e2 + (self.p - 1.0) * xi * xi)
    }
}

fn check_consistent(field: &[f64], grid: &RadialGrid, spec: &FunctionalSpec) -> Result<()> {
    if field.len() != grid.node_count() {
        return Err(Error::LengthMismatch {
            what: "field",
            expected: grid.node_count(),
            found: field.len(),
        });
    }
    if spec.source.len() != grid.cells {
        return Err(Error::LengthMismatch {
            what: "source",
            expected: grid.cells,
            found: spec.source.len(),
        });
    }
    if spec.n != grid.n {
        return Err(Error::invalid(format!(
            "functional dimension {} differs from grid dimension {}",
            spec.n, grid.n
        )));
    }
    Ok(())
}

/// Compensated summation.
fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

fn energy_unchecked(u: &[f64], grid: &RadialGrid, spec: &FunctionalSpec) -> f64 {
    neumaier_sum((0..grid.cells).map(|c| {
        let mean = 0.5 * (u[c] + u[c + 1]);
        let slope = (u[c + 1] - u[c]) / grid.width(c);
        grid.cell_measures[c] * (spec.coefficient(mean) * spec.j(slope) - spec.source[c] * mean)
    }))
}

pub fn assemble_energy(field: &DiscreteField, grid: &RadialGrid, spec: &FunctionalSpec) -> Result<f64> {
    check_consistent(&field.values, grid, spec)?;
    Ok(energy_unchecked(&field.values, grid, spec))
}

/// Gradient with respect to the free nodes `0..cells`.
fn gradient_unchecked(u: &[f64], grid: &RadialGrid, spec: &FunctionalSpec) -> Vec<f64> {
    let mut g = vec![0.0; grid.cells + 1];
    for c in 0..grid.cells {
        let w = grid.cell_measures[c];
        let h = grid.width(c);
        let mean = 0.5 * (u[c] + u[c + 1]);
        let slope = (u[c + 1] - u[c]) / h;
        let mean_part = 0.5 * (spec.coefficient_derivative(mean) * spec.j(slope) - spec.source[c]);
        let slope_part = spec.coefficient(mean) * spec.j_prime(slope) / h;
        g[c] += w * (mean_part - slope_part);
        g[c + 1] += w * (mean_part + slope_part);
    }
    g.truncate(grid.cells);
    g
}

/// Partial derivatives of [`assemble_energy`] with respect to every nodal
/// value except the boundary node.
pub fn energy_gradient(
    field: &DiscreteField,
    grid: &RadialGrid,
    spec: &FunctionalSpec,
) -> Result<Vec<f64>> {
    check_consistent(&field.values, grid, spec)?;
    Ok(gradient_unchecked(&field.values, grid, spec))
}

/// Symmetric tridiagonal metric from the frozen coefficient and the second
/// derivative of `j`: `Σ_c w_c a(ū_c) j''(u'_c) (δ_c u)² / h_c²`.
fn metric(u: &[f64], grid: &RadialGrid, spec: &FunctionalSpec) -> (Vec<f64>, Vec<f64>) {
    let m = grid.cells;
    let mut kappa: Vec<f64> = (0..m)
        .map(|c| {
            let h = grid.width(c);
            let mean = 0.5 * (u[c] + u[c + 1]);
            let slope = (u[c + 1] - u[c]) / h;
            grid.cell_measures[c] * spec.coefficient(mean) * spec.j_second(slope) / (h * h)
        })
        .collect();
    let top = kappa.iter().cloned().fold(0.0, f64::max);
    if top > 0.0 && top.is_finite() {
        let floor = 1e-10 * top;
        kappa.iter_mut().for_each(|k| *k = k.max(floor));
    } else {
        for (c, k) in kappa.iter_mut().enumerate() {
            let h = grid.width(c);
            *k = grid.cell_measures[c] / (h * h);
        }
    }
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for c in 0..m {
        diag[c] += kappa[c];
        if c + 1 < m {
            diag[c + 1] += kappa[c];
            off[c] = -kappa[c];
        }
    }
    (diag, off)
}

/// Solves a symmetric tridiagonal system by the Thomas algorithm.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    let mut denom = diag[0];
    d_prime[0] = rhs[0] / denom;
    for i in 1..m {
        c_prime[i - 1] = off[i - 1] / denom;
        denom = diag[i] - off[i - 1] * c_prime[i - 1];
        d_prime[i] = (rhs[i] - off[i - 1] * d_prime[i - 1]) / denom;
    }
    let mut x = d_prime;
    for i in (0..m.saturating_sub(1)).rev() {
        let next = x[i + 1];
        x[i] -= c_prime[i] * next;
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop once the gradient norm (in the descent metric) is at most this.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub armijo_factor: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            grad_tol: 1e-9,
            max_iters: 10_000,
            step_init: 1.0,
            armijo_factor: 1e-4,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol >= 0.0) {
            return Err(Error::domain(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        if !(self.step_init > 0.0) || !self.step_init.is_finite() {
            return Err(Error::domain(format!("step_init must be > 0, got {}", self.step_init)));
        }
        if !(self.armijo_factor > 0.0 && self.armijo_factor < 1.0) {
            return Err(Error::domain(format!(
                "armijo factor must lie in (0, 1), got {}",
                self.armijo_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub final_field: DiscreteField,
    /// Energy of the initial field followed by one entry per accepted step.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Backtracking hit [`MIN_STEP`] before the tolerance was met.
    pub stagnated: bool,
    /// `sqrt(gᵀ P⁻¹ g)` at the final field.
    pub final_gradient_norm: f64,
}

impl MinimizeReport {
    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace holds the initial energy")
    }
}

/// Descent with Armijo backtracking.
///
/// Directions are `-P⁻¹ g` where `P` is the tridiagonal metric built from the
/// current coefficient `a(ū)` and `j''`. Curvature of `a` is left out, so `P`
/// stays positive definite. A step `t` is accepted when
/// `E(u + t d) <= E(u) - armijo_factor t gᵀP⁻¹g`; once that required
/// decrease is at the level of rounding in `E`, any step that does not raise
/// the energy is accepted.
pub fn minimize(
    grid: &RadialGrid,
    spec: &FunctionalSpec,
    initial: &DiscreteField,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport> {
    check_consistent(&initial.values, grid, spec)?;
    spec.validate()?;
    opts.validate()?;
    if spec.p < 2.0 && spec.epsilon == 0.0 {
        return Err(Error::domain("epsilon must be > 0 when p < 2"));
    }

    let m = grid.cells;
    let mut u = initial.values.clone();
    let mut energy = energy_unchecked(&u, grid, spec);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy {
            iteration: 0,
            iterate: u,
        });
    }
    let mut trace = vec![energy];
    let mut converged = false;
    let mut stagnated = false;
    let mut grad_norm;
    let mut trial = u.clone();

    loop {
        let g = gradient_unchecked(&u, grid, spec);
        let (diag, off) = metric(&u, grid, spec);
        let pg = solve_tridiagonal(&diag, &off, &g);
        let sigma: f64 = g.iter().zip(&pg).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        grad_norm = sigma.sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NonFiniteEnergy {
                iteration: trace.len() - 1,
                iterate: u,
            });
        }
        if grad_norm <= opts.grad_tol {
            converged = true;
            break;
        }
        if trace.len() > opts.max_iters {
            break;
        }

        let noise = 8.0 * f64::EPSILON * energy.abs().max(f64::MIN_POSITIVE);
        let mut t = opts.step_init;
        let accepted = loop {
            for i in 0..m {
                trial[i] = u[i] - t * pg[i];
            }
            let e_trial = energy_unchecked(&trial, grid, spec);
            let required = opts.armijo_factor * t * sigma;
            if e_trial.is_finite()
                && (e_trial <= energy - required || (required <= noise && e_trial <= energy))
            {
                break Some(e_trial);
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some(e) => {
                std::mem::swap(&mut u, &mut trial);
                energy = e;
                trace.push(e);
            }
            None => {
                stagnated = true;
                break;
            }
        }
    }

    Ok(MinimizeReport {
        final_field: DiscreteField { values: u },
        iterations: trace.len() - 1,
        energy_trace: trace,
        converged,
        stagnated,
        final_gradient_norm: grad_norm,
    })
}

/// `T_k(u) = max(-k, min(k, u))` nodewise.
pub fn truncate(field: &DiscreteField, k: f64) -> Result<DiscreteField> {
    if !(k >= 0.0) {
        return Err(Error::domain(format!("level must be >= 0, got {k}")));
    }
    Ok(DiscreteField {
        values: field.values.iter().map(|&v| v.clamp(-k, k)).collect(),
    })
}

/// `G_k(u) = u - T_k(u)`.
///
/// The subtraction is exact when `|u| <= 2k`; beyond that `T_k(u) + G_k(u)`
/// can differ from `u` by one ulp.
pub fn excess(field: &DiscreteField, k: f64) -> Result<DiscreteField> {
    let t = truncate(field, k)?;
    Ok(DiscreteField {
        values: field.values.iter().zip(&t.values).map(|(u, t)| u - t).collect(),
    })
}

/// Distribution function of the cell-averaged `|u|` against cell measures.
pub fn level_profile(
    field: &DiscreteField,
    grid: &RadialGrid,
    levels: &[f64],
) -> Result<DistributionProfile> {
    if field.len() != grid.node_count() {
        return Err(Error::LengthMismatch {
            what: "field",
            expected: grid.node_count(),
            found: field.len(),
        });
    }
    distribution_function(&field.cell_abs_averages(), &grid.cell_measures, levels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPairResidual {
    pub h: f64,
    pub k: f64,
    pub measure_h: f64,
    pub measure_k: f64,
    /// `(h^A |A_k|^B + |A_k|^C) / (h - k)^D`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetFit {
    /// Smallest `c` for which every checked pair satisfies
    /// `|A_h| <= c rhs`.
    pub constant: f64,
    pub residuals: Vec<LevelPairResidual>,
    /// Pairs with `|A_k| = 0`.
    pub skipped: Vec<(f64, f64)>,
}

/// Fits the constant of the level-set inequality on the given `(h, k)` pairs.
pub fn levelset_inequality_check(
    field: &DiscreteField,
    grid: &RadialGrid,
    exponents: &LevelSetExponents,
    pairs: &[(f64, f64)],
) -> Result<LevelSetFit> {
    if field.len() != grid.node_count() {
        return Err(Error::LengthMismatch {
            what: "field",
            expected: grid.node_count(),
            found: field.len(),
        });
    }
    if let Some(&(h, k)) = pairs.iter().find(|(h, k)| !(*k > 0.0 && h > k)) {
        return Err(Error::invalid(format!("need h > k > 0, got h = {h}, k = {k}")));
    }
    let values = field.cell_abs_averages();
    let measure = |t: f64| -> f64 {
        values
            .iter()
            .zip(&grid.cell_measures)
            .filter(|(v, _)| **v >= t)
            .fold(0.0, |acc, (_, w)| acc + w)
    };
    let LevelSetExponents { a, b, c, d } = *exponents;
    let mut fit = LevelSetFit {
        constant: 0.0,
        residuals: Vec::with_capacity(pairs.len()),
        skipped: Vec::new(),
    };
    for &(h, k) in pairs {
        let measure_k = measure(k);
        if measure_k == 0.0 {
            fit.skipped.push((h, k));
            continue;
        }
        let measure_h = measure(h);
        let rhs = (h.powf(a) * measure_k.powf(b) + measure_k.powf(c)) / (h - k).powf(d);
        let ratio = measure_h / rhs;
        fit.constant = fit.constant.max(ratio);
        fit.residuals.push(LevelPairResidual {
            h,
            k,
            measure_h,
            measure_k,
            rhs,
            ratio,
        });
    }
    Ok(fit)
}

/// Settings shared by every grid of a regularity experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub grid_sizes: Vec<usize>,
    pub radius: f64,
    pub source_scale: f64,
    pub epsilon: f64,
    pub solver: MinimizeOptions,
    pub levels_per_decade: usize,
    /// Profiles hold level 0 and a geometric grid on
    /// `[max|u| 10^-decades, max|u|]`.
    pub level_decades: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            grid_sizes: vec![1024, 2048, 4096],
            radius: 1.0,
            source_scale: 1.0,
            epsilon: DEFAULT_EPSILON,
            solver: MinimizeOptions::default(),
            levels_per_decade: 32,
            level_decades: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub cells: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stagnated: bool,
    pub energy: f64,
    pub gradient_norm: f64,
    pub max_u: f64,
    pub nodes: Vec<f64>,
    pub field: DiscreteField,
    pub profile: DistributionProfile,
    /// Power-law fit on the top decade of positive-measure levels.
    pub tail_fit: Option<LinearFit>,
    /// Stretched-exponential fit, on the exponential-integrability regime.
    pub exp_fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub params: ProblemParams,
    pub exponents: ExponentSet,
    pub regime: Regime,
    pub predicted_s: Option<f64>,
    /// `1 - alpha p'`.
    pub theta: f64,
    /// One entry per grid size, in input order.
    pub runs: Vec<std::result::Result<GridRun, Error>>,
    /// `|max_u(j) - max_u(j-1)| / max_u(j-1)` for consecutive successful runs.
    pub stabilization: Vec<f64>,
}

/// Lower end of the tail-fit window relative to the top positive level.
pub const TAIL_FIT_SPAN: f64 = 10.0;

/// Lower end of the stretched-exponential fit relative to `max|u|`.
pub const EXP_FIT_SPAN: f64 = 100.0;

fn run_grid(
    params: &ProblemParams,
    regime: Regime,
    theta: f64,
    cells: usize,
    opts: &ExperimentOptions,
) -> Result<GridRun> {
    let grid = RadialGrid::uniform(params.n, opts.radius, cells)?;
    let spec = FunctionalSpec::with_power_source(params, &grid, opts.source_scale, opts.epsilon)?;
    let report = minimize(&grid, &spec, &DiscreteField::zeros(grid.node_count()), &opts.solver)?;
    let max_u = report.final_field.max_abs();
    let mut levels = vec![0.0];
    levels.extend(geometric_levels(
        max_u * 10f64.powf(-opts.level_decades),
        max_u,
        opts.levels_per_decade,
    ));
    let profile = level_profile(&report.final_field, &grid, &levels)?;

    let tail_fit = match regime {
        Regime::GradientMarcinkiewicz | Regime::SobolevW1p => profile
            .largest_positive_level()
            .and_then(|top| tail_exponent_fit(&profile, top / TAIL_FIT_SPAN, top).ok()),
        _ => None,
    };
    let exp_fit = match regime {
        Regime::ExponentialIntegrability => {
            exp_integrability_fit(&profile, theta, max_u / EXP_FIT_SPAN).ok()
        }
        _ => None,
    };

    Ok(GridRun {
        cells,
        iterations: report.iterations,
        converged: report.converged,
        stagnated: report.stagnated,
        energy: report.final_energy(),
        gradient_norm: report.final_gradient_norm,
        max_u,
        nodes: grid.nodes,
        field: report.final_field,
        profile,
        tail_fit,
        exp_fit,
    })
}

/// Minimizes with the power source on each grid and collects the
/// regime-specific diagnostics. Grids run in parallel; results keep the
/// input order.
pub fn experiment_regularity(
    params: &ProblemParams,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let exponents = compute_exponents(params)?;
    let regime = regime_from_thresholds(params.r, &exponents);
    let theta = 1.0 - params.alpha * params.p_prime();
    if opts.grid_sizes.is_empty() {
        return Err(Error::invalid("need at least one grid size"));
    }

    let runs: Vec<Result<GridRun>> = opts
        .grid_sizes
        .par_iter()
        .map(|&cells| run_grid(params, regime, theta, cells, opts))
        .collect();

    let maxima: Vec<f64> = runs.iter().flatten().map(|r| r.max_u).collect();
    let stabilization = maxima
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0])
        .collect();

    Ok(ExperimentReport {
        params: *params,
        predicted_s: exponents.s,
        exponents,
        regime,
        theta,
        runs,
        stabilization,
    })
}
