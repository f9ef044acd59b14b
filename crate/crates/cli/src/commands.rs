use std::fs;
use std::io::Write;
use std::path::Path;

use levelset::counterexamples::{
    find_envelope_violation, k0_for_exp_power, log_square_doubling_constant, NamedPsi,
    ViolationCertificate, LOG_SQUARE_D,
};
use levelset::exponents::{compute_exponents, ProblemParams};
use levelset::lemma::{
    check_envelope, check_hypothesis, classify, CaseKind, envelope_constants, DecayHypothesis, Envelope,
    EnvelopeConstants, PairStrategy, PsiTable,
};
use levelset::marcinkiewicz::{
    exp_integrability_fit, tail_exponent_fit, weak_norm_estimate, DistributionProfile, LinearFit,
};
use levelset::variational::{
    experiment_regularity, ExperimentReport, GridRun, EXP_FIT_SPAN, TAIL_FIT_SPAN,
};
use rayon::prelude::*;

use crate::config::{LemmaSection, RunConfig};
use crate::csvio::{fmt_num, fmt_opt, read_psi_table, read_table, write_file, write_pairs, write_rows};
use crate::error::CliError;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// A mathematical violation was found or the solver did not converge.
    Fail,
}

impl Status {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

type CmdResult = Result<Status, CliError>;

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

/// Number of knots in counterexample tables: `k0 2^j`, `j = 0..=TABLE_DOUBLINGS`.
const TABLE_DOUBLINGS: i32 = 40;

/// Upper end of the envelope sweep in the exponential case.
const SWEEP_K_MAX: f64 = 1e300;

pub fn constants(cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let lemma = cfg.lemma()?;
    let hyp = lemma.hypothesis()?;
    let tol = lemma.tolerance();
    let class = classify(&hyp, tol);
    let needs_psi = match class.kind {
        CaseKind::Vanishing => true,
        CaseKind::PowerDecay => hyp.k0 > 0.0,
        _ => false,
    };
    let psi_k0 = match (lemma.psi_k0, needs_psi) {
        (Some(v), _) => v,
        (None, false) => 0.0,
        (None, true) => {
            return Err(CliError::Usage(format!(
                "lemma.psi_k0 is required for a {} hypothesis with k0 = {}",
                class.kind, hyp.k0
            )))
        }
    };

    let mut row = vec![String::new(); 6];
    row[0] = class.kind.name().to_string();
    if class.kind != CaseKind::Unclassified {
        match envelope_constants(&hyp, psi_k0, tol)? {
            EnvelopeConstants::PowerDecay { lambda, m, c_bar } => {
                row[1] = fmt_num(lambda);
                row[2] = fmt_num(m);
                row[3] = fmt_num(c_bar);
            }
            EnvelopeConstants::ExponentialDecay { tau } => row[4] = fmt_num(tau),
            EnvelopeConstants::Vanishing { level } => row[5] = fmt_num(level),
        }
    }
    write_rows(out, &["case", "lambda", "M", "c_bar", "tau", "L"], &[row]).map_err(stdout_err)?;
    Ok(Status::Pass)
}

pub fn exponents(cfg: &RunConfig, out: &mut dyn Write) -> CmdResult {
    let params = cfg.problem_params()?;
    let row = exponent_row(&params)?;
    write_rows(out, &EXPONENT_HEADER, &[row]).map_err(stdout_err)?;
    Ok(Status::Pass)
}

const EXPONENT_HEADER: [&str; 16] = [
    "n", "p", "alpha", "r", "q", "q_star", "r_low", "r_mid", "r_high", "A", "B", "C", "D", "s",
    "rho", "regime",
];

fn exponent_row(params: &ProblemParams) -> Result<Vec<String>, CliError> {
    let e = compute_exponents(params)?;
    let regime = levelset::exponents::classify_regime(params)?;
    Ok(vec![
        params.n.to_string(),
        fmt_num(params.p),
        fmt_num(params.alpha),
        fmt_num(params.r),
        fmt_num(e.q),
        fmt_num(e.q_star),
        fmt_num(e.r_low),
        fmt_num(e.r_mid),
        fmt_num(e.r_high),
        fmt_num(e.hyp.a),
        fmt_num(e.hyp.b),
        fmt_num(e.hyp.c),
        fmt_num(e.hyp.d),
        fmt_opt(e.s),
        fmt_opt(e.rho),
        regime.name().to_string(),
    ])
}

pub fn verify(cfg: &RunConfig, psi_path: &Path, pairs: PairStrategy, out: &mut dyn Write) -> CmdResult {
    let lemma = cfg.lemma()?;
    let hyp = lemma.hypothesis()?;
    let table = read_psi_table(psi_path, hyp.k0)?;
    let psi_k0 = lemma.psi_k0.unwrap_or_else(|| table.value_at(hyp.k0));
    verify_table(&table, &hyp, psi_k0, pairs, out)
}

fn verify_table(
    table: &PsiTable,
    hyp: &DecayHypothesis,
    psi_k0: f64,
    pairs: PairStrategy,
    out: &mut dyn Write,
) -> CmdResult {
    let hyp_report = check_hypothesis(table, hyp, pairs)?;
    let env_report = check_envelope(table, hyp, psi_k0)?;

    let summary = vec![
        vec![
            "hypothesis".to_string(),
            hyp_report.passes().to_string(),
            hyp_report.pairs_checked.to_string(),
            fmt_num(hyp_report.max_ratio),
            hyp_report.violation_count.to_string(),
        ],
        vec![
            "envelope".to_string(),
            env_report.passes().to_string(),
            env_report.knots_checked.to_string(),
            fmt_num(env_report.max_ratio),
            usize::from(env_report.first_violation.is_some()).to_string(),
        ],
    ];
    write_rows(&mut *out, &["check", "passes", "checked", "max_ratio", "violations"], &summary)
        .map_err(stdout_err)?;

    let mut violations: Vec<Vec<String>> = hyp_report
        .violations
        .iter()
        .map(|v| vec!["hypothesis".into(), fmt_num(v.k), fmt_num(v.h), fmt_num(v.ratio)])
        .collect();
    if let Some(k) = env_report.first_violation {
        let env = Envelope::new(hyp, psi_k0)?;
        let ratio = table.value_at(k) / env.eval(k);
        violations.push(vec!["envelope".into(), fmt_num(k), String::new(), fmt_num(ratio)]);
    }
    if !violations.is_empty() {
        writeln!(out).map_err(stdout_err)?;
        write_rows(&mut *out, &["check", "k", "h", "ratio"], &violations).map_err(stdout_err)?;
    }
    Ok(Status::from_pass(hyp_report.passes() && env_report.passes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counterexample {
    LogSquare,
    ExpPower,
}

/// Overrides for the exp-power example given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpPowerArgs {
    pub c_exp: Option<f64>,
    pub d_exp: Option<f64>,
}

pub fn counterexample(
    name: Counterexample,
    lemma: Option<&LemmaSection>,
    args: ExpPowerArgs,
    out: &mut dyn Write,
) -> CmdResult {
    // (c1, A, B, C, D) of the full hypothesis; the doubling check uses c2 in
    // place of c1.
    let (psi, c2, full, k0) = match name {
        Counterexample::LogSquare => {
            let c2 = log_square_doubling_constant();
            let full = match lemma {
                Some(l) => [l.c1, l.a, l.b, l.c, l.d],
                None => [c2, 1.0, 1.0, 1.0, LOG_SQUARE_D],
            };
            let k0 = lemma.map_or(1.0, |l| l.k0.max(1.0));
            (NamedPsi::LogSquare, c2, full, k0)
        }
        Counterexample::ExpPower => {
            let mut full = match lemma {
                Some(l) => [l.c1, l.a, l.b, l.c, l.d],
                None => [1.0, 1.0, 3.0, 2.0, 2.0],
            };
            if let Some(c) = args.c_exp {
                full[3] = c;
            }
            if let Some(d) = args.d_exp {
                full[4] = d;
            }
            let k0 = k0_for_exp_power(full[4], full[3])?;
            (NamedPsi::ExpPower { c_exp: full[3] }, 1.0, full, k0)
        }
    };
    let [c1, a, b, c, d] = full;
    let doubling = DecayHypothesis::new(c2, a, b, c, d, k0)?;
    let hyp = DecayHypothesis::new(c1, a, b, c, d, k0)?;

    let knots: Vec<f64> = (0..=TABLE_DOUBLINGS).map(|j| k0 * 2f64.powi(j)).collect();
    let ln_values = knots
        .iter()
        .map(|&k| psi.ln_value(k))
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = ln_values.iter().map(|l| l.exp()).collect();
    let table = PsiTable::new(knots.clone(), values.clone(), k0)?;
    let report = check_hypothesis(&table, &doubling, PairStrategy::Doubling)?;
    let psi_k0 = psi.value(k0)?;
    let cert = find_envelope_violation(&psi, &hyp, psi_k0, SWEEP_K_MAX)?;

    write_rows(
        &mut *out,
        &["name", "c1", "c2", "A", "B", "C", "D", "k0"],
        &[vec![psi.name().into(), fmt_num(c1), fmt_num(c2), fmt_num(a), fmt_num(b), fmt_num(c), fmt_num(d), fmt_num(k0)]],
    )
    .map_err(stdout_err)?;
    writeln!(out).map_err(stdout_err)?;
    let rows: Vec<Vec<String>> = knots
        .iter()
        .zip(&values)
        .zip(&ln_values)
        .map(|((&k, &v), &l)| vec![fmt_num(k), fmt_num(v), fmt_num(l)])
        .collect();
    write_rows(&mut *out, &["k", "psi", "ln_psi"], &rows).map_err(stdout_err)?;
    writeln!(out).map_err(stdout_err)?;
    write_rows(
        &mut *out,
        &["check", "pairs", "max_ratio", "violations", "passes"],
        &[vec![
            "doubling".into(),
            report.pairs_checked.to_string(),
            fmt_num(report.max_ratio),
            report.violation_count.to_string(),
            report.passes().to_string(),
        ]],
    )
    .map_err(stdout_err)?;
    writeln!(out).map_err(stdout_err)?;
    let cert_row = match cert {
        Some(ViolationCertificate::ExceedsEnvelope { level, ln_psi, ln_envelope }) => vec![
            "exceeds_envelope".into(),
            fmt_num(level),
            fmt_num(ln_psi.exp()),
            fmt_num(ln_psi),
            fmt_num(ln_envelope),
        ],
        Some(ViolationCertificate::PositiveAtTwoL { level, value, ln_psi }) => vec![
            "positive_at_2L".into(),
            fmt_num(level),
            fmt_num(value),
            fmt_num(ln_psi),
            String::new(),
        ],
        None => vec!["none".into(), String::new(), String::new(), String::new(), String::new()],
    };
    write_rows(&mut *out, &["certificate", "level", "psi", "ln_psi", "ln_bound"], &[cert_row])
        .map_err(stdout_err)?;
    Ok(Status::from_pass(report.passes() && cert.is_some()))
}

const REPORT_HEADER: [&str; 15] = [
    "cells",
    "iterations",
    "converged",
    "stagnated",
    "energy",
    "gradient_norm",
    "max_u",
    "regime",
    "predicted_s",
    "fitted_slope",
    "fitted_s",
    "fit_r_squared",
    "exp_slope",
    "exp_r_squared",
    "error",
];

fn report_row(report: &ExperimentReport, run: &Result<GridRun, levelset::Error>, cells: usize) -> Vec<String> {
    let regime = report.regime.name().to_string();
    let predicted = fmt_opt(report.predicted_s);
    match run {
        Ok(g) => vec![
            g.cells.to_string(),
            g.iterations.to_string(),
            g.converged.to_string(),
            g.stagnated.to_string(),
            fmt_num(g.energy),
            fmt_num(g.gradient_norm),
            fmt_num(g.max_u),
            regime,
            predicted,
            fmt_opt(g.tail_fit.map(|f| f.slope)),
            fmt_opt(g.tail_fit.map(|f| -f.slope)),
            fmt_opt(g.tail_fit.map(|f| f.r_squared)),
            fmt_opt(g.exp_fit.map(|f| f.slope)),
            fmt_opt(g.exp_fit.map(|f| f.r_squared)),
            String::new(),
        ],
        Err(e) => {
            let mut row = vec![cells.to_string(), String::new(), "false".into()];
            row.extend(std::iter::repeat_n(String::new(), 4));
            row.extend([regime, predicted]);
            row.extend(std::iter::repeat_n(String::new(), 5));
            row.push(e.to_string());
            row
        }
    }
}

fn all_converged(report: &ExperimentReport) -> bool {
    report.runs.iter().all(|r| matches!(r, Ok(g) if g.converged))
}

/// Runs every grid of the config and writes `field.csv` and `profile.csv`
/// for the finest grid that produced a field, plus `report.csv` with a row
/// per grid.
pub fn minimize(cfg: &RunConfig, out_dir: &Path) -> CmdResult {
    let params = cfg.problem_params()?;
    let opts = cfg.experiment_options()?;
    let report = experiment_regularity(&params, &opts)?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    if let Some(run) = report.runs.iter().rev().find_map(|r| r.as_ref().ok()) {
        let mut buf = Vec::new();
        write_pairs(&mut buf, ["radius", "u"], &run.nodes, run.field.values())
            .map_err(stdout_err)?;
        let path = out_dir.join("field.csv");
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
        let mut buf = Vec::new();
        write_pairs(&mut buf, ["k", "measure"], &run.profile.levels, &run.profile.measures)
            .map_err(stdout_err)?;
        let path = out_dir.join("profile.csv");
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
    }
    let rows: Vec<Vec<String>> = report
        .runs
        .iter()
        .zip(&opts.grid_sizes)
        .map(|(run, &cells)| report_row(&report, run, cells))
        .collect();
    write_file(&out_dir.join("report.csv"), &REPORT_HEADER, &rows)?;
    Ok(Status::from_pass(all_converged(&report)))
}

/// Builds the distribution profile stored in a `k,measure` file. The total
/// measure is taken as the measure at the lowest level.
pub fn read_profile(path: &Path) -> Result<DistributionProfile, CliError> {
    let (levels, measures) = read_table(path)?;
    let total = measures[0];
    DistributionProfile::new(levels, measures, total).map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn analyze(profile_path: &Path, cfg: Option<&RunConfig>, out: &mut dyn Write) -> CmdResult {
    let profile = read_profile(profile_path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |name: &str, value: String| rows.push(vec![name.to_string(), value]);
    let top = profile.largest_positive_level();
    push("largest_level", fmt_opt(top));

    let fit_rows = |prefix: &str, fit: Option<LinearFit>, push: &mut dyn FnMut(&str, String)| {
        push(&format!("{prefix}_slope"), fmt_opt(fit.map(|f| f.slope)));
        push(&format!("{prefix}_intercept"), fmt_opt(fit.map(|f| f.intercept)));
        push(&format!("{prefix}_r_squared"), fmt_opt(fit.map(|f| f.r_squared)));
        push(&format!("{prefix}_points"), fit.map(|f| f.points.to_string()).unwrap_or_default());
    };
    let tail = top.and_then(|t| tail_exponent_fit(&profile, t / TAIL_FIT_SPAN, t).ok());
    fit_rows("tail", tail, &mut push);

    if let Some(cfg) = cfg {
        let params = cfg.problem_params()?;
        let e = compute_exponents(&params)?;
        push("regime", levelset::exponents::classify_regime(&params)?.name().to_string());
        push("predicted_s", fmt_opt(e.s));
        let theta = 1.0 - params.alpha * params.p_prime();
        push("theta", fmt_num(theta));
        let exp_fit = top.and_then(|t| exp_integrability_fit(&profile, theta, t / EXP_FIT_SPAN).ok());
        fit_rows("exp", exp_fit, &mut push);
        let weak = match e.s {
            Some(s) => Some(weak_norm_estimate(&profile, s)?),
            None => None,
        };
        push("weak_norm_s", fmt_opt(weak.map(|w| w.norm_estimate)));
        push("weak_norm_attained_at", fmt_opt(weak.and_then(|w| w.attained_at)));
    }
    write_rows(out, &["quantity", "value"], &rows).map_err(stdout_err)?;
    Ok(Status::Pass)
}

const SWEEP_HEADER: [&str; 10] = [
    "r",
    "regime",
    "predicted_s",
    "cells",
    "converged",
    "iterations",
    "max_u",
    "fitted_slope",
    "exp_slope",
    "error",
];

/// Runs the experiment for each `r`; rows come out in the order given.
pub fn sweep(cfg: &RunConfig, rs: &[f64], out: &mut dyn Write) -> CmdResult {
    if rs.is_empty() {
        return Err(CliError::Usage("sweep needs at least one r".into()));
    }
    let base = cfg.problem_params()?;
    let opts = cfg.experiment_options()?;
    let params = rs
        .iter()
        .map(|&r| base.with_r(r))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = params
        .par_iter()
        .map(|p| experiment_regularity(p, &opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for report in &reports {
        for (run, &cells) in report.runs.iter().zip(&opts.grid_sizes) {
            let mut row = vec![
                fmt_num(report.params.r),
                report.regime.name().to_string(),
                fmt_opt(report.predicted_s),
                cells.to_string(),
            ];
            match run {
                Ok(g) => row.extend([
                    g.converged.to_string(),
                    g.iterations.to_string(),
                    fmt_num(g.max_u),
                    fmt_opt(g.tail_fit.map(|f| f.slope)),
                    fmt_opt(g.exp_fit.map(|f| f.slope)),
                    String::new(),
                ]),
                Err(e) => row.extend([
                    "false".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    e.to_string(),
                ]),
            }
            rows.push(row);
        }
    }
    write_rows(out, &SWEEP_HEADER, &rows).map_err(stdout_err)?;
    Ok(Status::from_pass(reports.iter().all(all_converged)))
}
