//! Task runners: one function per scenario kind.
//!
//! Every runner resolves parameters, evaluates its quantity over the active
//! scan axis, and writes CSV artifacts whose metadata records the inputs,
//! derived scalars, and resolved cutoffs. Failures split into scenario
//! problems (exit code 2) and numeric or runtime problems (exit code 3).

use std::path::{Path, PathBuf};

use quasibell::specfun::THETA_TOL;
use quasibell::{
    complexity_m2_series, delocalization_record, fit_slopes, peak_index, smooth, weight_ratio,
    Error as CoreError, GridRule, M2Cutoffs, Method, MomentMethod, MomentRecord, QGrid, QMethod,
    QubitSolver, QubitStateRecord, SystemParams,
};

use crate::config::{Axis, MethodChoice, Scenario, TaskKind};
use crate::output::{g17, write_grid, CsvDoc};

/// How a run failed; decides the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// The scenario asks for something invalid (exit code 2).
    Config(String),
    /// Evaluation or output failed (exit code 3).
    Numeric(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "config error: {msg}"),
            Failure::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

fn classify(op: &str, e: CoreError) -> Failure {
    match e {
        CoreError::InvalidParameter(_) | CoreError::Window(_) => {
            Failure::Config(format!("{op}: {e}"))
        }
        _ => Failure::Numeric(format!("{op}: {e}")),
    }
}

fn io_fail(op: &str, e: std::io::Error) -> Failure {
    Failure::Numeric(format!("{op}: {e}"))
}

/// Runs one validated scenario, returning the artifact paths it wrote.
pub fn run(sc: &Scenario, out_dir: &Path, fine: bool) -> Result<Vec<PathBuf>, Failure> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_fail("create output directory", e))?;
    match sc.task {
        TaskKind::QubitDynamics => {
            qubit_scan(sc, out_dir, &["zeta", "re_xi", "im_xi", "varpi", "s", "s_lin"])
        }
        TaskKind::EntropyTime => qubit_scan(sc, out_dir, &["s", "s_lin"]),
        TaskKind::EntropyLambdaScan => entropy_lambda_scan(sc, out_dir),
        TaskKind::QGrid => q_grid(sc, out_dir, fine),
        TaskKind::Moments => moments(sc, out_dir),
        TaskKind::WehrlTime => wehrl_time(sc, out_dir, fine),
        TaskKind::ComplexityLambdaScan => complexity_scan(sc, out_dir, fine),
        TaskKind::SlopeFit => slope_fit(sc, out_dir, fine),
    }
}

fn qubit_methods(choice: MethodChoice) -> Vec<Method> {
    match choice {
        MethodChoice::Series => vec![Method::Series],
        MethodChoice::Theta => vec![Method::Theta],
        MethodChoice::Both => vec![Method::Series, Method::Theta],
    }
}

fn moment_methods(choice: MethodChoice) -> Vec<MomentMethod> {
    match choice {
        MethodChoice::Series => vec![MomentMethod::Series],
        MethodChoice::Theta => vec![MomentMethod::Theta],
        MethodChoice::Both => vec![MomentMethod::Series, MomentMethod::Theta],
    }
}

fn grid_method(choice: MethodChoice) -> QMethod {
    match choice {
        MethodChoice::Theta => QMethod::Linear,
        _ => QMethod::Series,
    }
}

fn rule_label(rule: GridRule) -> &'static str {
    match rule {
        GridRule::GaussLegendre => "gauss-legendre",
        GridRule::Trapezoid => "trapezoid",
    }
}

fn stamp(doc: &mut CsvDoc, sc: &Scenario) {
    doc.meta("tool", format!("quasibell {}", env!("CARGO_PKG_VERSION")));
    doc.meta("task", sc.task.label());
    doc.meta("branch", sc.branch.label());
    doc.meta("method", sc.method.label());
    doc.meta("omega", g17(sc.omega));
    doc.meta("delta", g17(sc.delta));
    doc.meta("epsilon", g17(sc.epsilon));
    doc.meta("alpha", g17(sc.alpha));
    if let Some(lambda) = sc.lambda {
        doc.meta("lambda", g17(lambda));
    }
    match sc.axis {
        Axis::TimeRange { t0, t1, dt } => {
            doc.meta("t0", g17(t0));
            doc.meta("t1", g17(t1));
            doc.meta("dt", g17(dt));
        }
        Axis::SingleTime { t } => doc.meta("t", g17(t)),
        Axis::LambdaRange { lo, hi, dl, t } => {
            doc.meta("lambda_lo", g17(lo));
            doc.meta("lambda_hi", g17(hi));
            doc.meta("lambda_dl", g17(dl));
            doc.meta("t", g17(t));
        }
    }
}

fn stamp_derived(doc: &mut CsvDoc, params: &SystemParams) {
    doc.meta("x", g17(params.x));
    doc.meta("delta_tilde", g17(params.delta_tilde));
    doc.meta("eps_tilde", g17(params.eps_tilde));
    doc.meta("rho_hat", g17(params.rho_hat));
    let r = params.regimes();
    doc.meta(
        "regimes",
        format!(
            "adiabatic={} strong_coupling={} linear_laguerre={} ultra_strong={} theta_forms={}",
            r.adiabatic, r.strong_coupling, r.linear_laguerre, r.ultra_strong, r.theta_forms
        ),
    );
}

fn stamp_derived_span(doc: &mut CsvDoc, lo: &SystemParams, hi: &SystemParams) {
    doc.meta("x_span", format!("{} .. {}", g17(lo.x), g17(hi.x)));
    doc.meta(
        "delta_tilde_span",
        format!("{} .. {}", g17(lo.delta_tilde), g17(hi.delta_tilde)),
    );
    doc.meta("eps_tilde", g17(lo.eps_tilde));
    doc.meta(
        "rho_hat_span",
        format!("{} .. {}", g17(lo.rho_hat), g17(hi.rho_hat)),
    );
}

fn endpoint_params(sc: &Scenario, lambdas: &[f64]) -> Result<(SystemParams, SystemParams), Failure> {
    let lo = sc
        .params_at(lambdas[0])
        .map_err(|e| classify("model.derive", e))?;
    let hi = sc
        .params_at(*lambdas.last().unwrap())
        .map_err(|e| classify("model.derive", e))?;
    Ok((lo, hi))
}

fn record_field(rec: &QubitStateRecord, quantity: &str) -> f64 {
    match quantity {
        "zeta" => rec.zeta,
        "re_xi" => rec.xi.re,
        "im_xi" => rec.xi.im,
        "varpi" => rec.varpi,
        "s" => rec.s_vn,
        "s_lin" => rec.s_lin,
        other => unreachable!("unknown quantity {other}"),
    }
}

fn quantity_major_columns(first: &str, quantities: &[&str], labels: &[&str]) -> Vec<String> {
    let mut cols = vec![first.to_string()];
    for q in quantities {
        for l in labels {
            cols.push(format!("{q}_{l}"));
        }
    }
    cols
}

fn finish(doc: &CsvDoc, path: PathBuf) -> Result<Vec<PathBuf>, Failure> {
    doc.write_to(&path).map_err(|e| io_fail("write csv", e))?;
    Ok(vec![path])
}

fn qubit_scan(sc: &Scenario, out_dir: &Path, quantities: &[&str]) -> Result<Vec<PathBuf>, Failure> {
    let lambda = sc.lambda.expect("time tasks carry a fixed coupling");
    let params = sc
        .params_at(lambda)
        .map_err(|e| classify("model.derive", e))?;
    let methods = qubit_methods(sc.method);
    let times = sc.axis.times();
    let solver = QubitSolver::new(&params).map_err(|e| classify("qubit.solver", e))?;

    let rows: Vec<quasibell::Result<Vec<QubitStateRecord>>> =
        quasibell::parallel::map_indexed(times.len(), |i| {
            methods
                .iter()
                .map(|&m| solver.record(times[i], sc.branch, m))
                .collect()
        });

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    stamp_derived(&mut doc, &params);
    if methods.contains(&Method::Series) {
        doc.meta("mode_cutoff", solver.n_max().to_string());
    }
    if methods.contains(&Method::Theta) {
        doc.meta("theta_tol", g17(THETA_TOL));
    }
    let labels: Vec<&str> = methods.iter().map(|m| m.label()).collect();
    let cols = quantity_major_columns("t", quantities, &labels);
    doc.columns(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, row) in rows.into_iter().enumerate() {
        let recs =
            row.map_err(|e| classify(&format!("qubit.record at t={}", g17(times[i])), e))?;
        let mut out = vec![g17(times[i])];
        for q in quantities {
            for rec in &recs {
                out.push(g17(record_field(rec, q)));
            }
        }
        doc.push_row(out);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}

fn entropy_lambda_scan(sc: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let methods = qubit_methods(sc.method);
    let lambdas = sc.axis.lambdas();
    let t = sc.axis.fixed_time().expect("lambda scans carry a fixed time");

    let rows: Vec<quasibell::Result<(usize, Vec<QubitStateRecord>)>> =
        quasibell::parallel::map_indexed(lambdas.len(), |i| {
            let params = sc.params_at(lambdas[i])?;
            let solver = QubitSolver::new(&params)?;
            let recs = methods
                .iter()
                .map(|&m| solver.record(t, sc.branch, m))
                .collect::<quasibell::Result<Vec<_>>>()?;
            Ok((solver.n_max(), recs))
        });

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    let (p_lo, p_hi) = endpoint_params(sc, &lambdas)?;
    stamp_derived_span(&mut doc, &p_lo, &p_hi);
    if methods.contains(&Method::Theta) {
        doc.meta("theta_tol", g17(THETA_TOL));
    }
    let labels: Vec<&str> = methods.iter().map(|m| m.label()).collect();
    let cols = quantity_major_columns("lambda", &["s", "s_lin"], &labels);

    let mut cutoff_span = (usize::MAX, 0usize);
    let mut data = Vec::with_capacity(lambdas.len());
    for (i, row) in rows.into_iter().enumerate() {
        let (n_max, recs) = row
            .map_err(|e| classify(&format!("qubit.record at lambda={}", g17(lambdas[i])), e))?;
        cutoff_span = (cutoff_span.0.min(n_max), cutoff_span.1.max(n_max));
        let mut out = vec![g17(lambdas[i])];
        for q in ["s", "s_lin"] {
            for rec in &recs {
                out.push(g17(record_field(rec, q)));
            }
        }
        data.push(out);
    }
    if methods.contains(&Method::Series) {
        doc.meta(
            "mode_cutoff_span",
            format!("{} .. {}", cutoff_span.0, cutoff_span.1),
        );
    }
    doc.columns(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    for row in data {
        doc.push_row(row);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}

fn moments(sc: &Scenario, out_dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let lambda = sc.lambda.expect("time tasks carry a fixed coupling");
    let params = sc
        .params_at(lambda)
        .map_err(|e| classify("model.derive", e))?;
    let methods = moment_methods(sc.method);
    let times = sc.axis.times();

    let rows: Vec<quasibell::Result<Vec<MomentRecord>>> =
        quasibell::parallel::map_indexed(times.len(), |i| {
            methods
                .iter()
                .map(|&m| match m {
                    MomentMethod::Series => {
                        quasibell::moments_series(&params, times[i], sc.branch)
                    }
                    MomentMethod::Theta => quasibell::moments_theta(&params, times[i], sc.branch),
                    MomentMethod::Quadrature => unreachable!("not offered by the CLI"),
                })
                .collect()
        });

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    stamp_derived(&mut doc, &params);
    if methods.contains(&MomentMethod::Series) {
        doc.meta("mode_cutoff", params.mode_cutoff().to_string());
    }
    if methods.contains(&MomentMethod::Theta) {
        doc.meta("theta_tol", g17(THETA_TOL));
    }
    let labels: Vec<&str> = methods.iter().map(|m| m.label()).collect();
    let cols = quantity_major_columns("t", &["e1", "b1", "e2", "b2", "uncertainty"], &labels);
    doc.columns(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, row) in rows.into_iter().enumerate() {
        let recs = row.map_err(|e| classify(&format!("moments at t={}", g17(times[i])), e))?;
        let mut out = vec![g17(times[i])];
        for field in 0..5 {
            for rec in &recs {
                out.push(g17(match field {
                    0 => rec.e1,
                    1 => rec.b1,
                    2 => rec.e2,
                    3 => rec.b2,
                    _ => rec.uncertainty,
                }));
            }
        }
        doc.push_row(out);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}

fn q_grid(sc: &Scenario, out_dir: &Path, fine: bool) -> Result<Vec<PathBuf>, Failure> {
    let lambda = sc.lambda.expect("grid snapshots carry a fixed coupling");
    let params = sc
        .params_at(lambda)
        .map_err(|e| classify("model.derive", e))?;
    let t = sc.axis.fixed_time().expect("grid snapshots carry a fixed time");
    let spec = sc.grid_spec(&params, fine);
    let evaluators = match sc.method {
        MethodChoice::Series => vec![QMethod::Series],
        MethodChoice::Theta => vec![QMethod::Linear],
        MethodChoice::Both => vec![QMethod::Series, QMethod::Linear],
    };

    let mut paths = Vec::new();
    for method in evaluators {
        let grid = QGrid::build(&params, t, sc.branch, &spec, method)
            .map_err(|e| classify("phase_space.grid", e))?;
        let bin = out_dir.join(format!("{}_{}.qgrid", sc.out_stem, method.label()));
        write_grid(&bin, &grid).map_err(|e| io_fail("write grid", e))?;
        paths.push(bin);

        let mut doc = CsvDoc::new();
        stamp(&mut doc, sc);
        stamp_derived(&mut doc, &params);
        doc.meta("evaluator", method.label());
        doc.meta("grid_rule", rule_label(spec.rule));
        doc.meta("grid_n", format!("{}x{}", spec.n_re, spec.n_im));
        doc.meta("grid_half_width", g17(spec.half_width));
        doc.meta(
            "grid_center",
            format!("{} {}", g17(spec.center.re), g17(spec.center.im)),
        );
        doc.meta("n_modes", grid.n_modes.to_string());
        doc.meta("normalization", g17(grid.integrate()));
        doc.meta("q_min", g17(grid.min_value()));
        doc.meta("q_max", g17(grid.max_value()));
        doc.columns(&["re_beta", "im_beta", "q"]);
        for (i_im, &y) in grid.im_nodes.iter().enumerate() {
            for (i_re, &x) in grid.re_nodes.iter().enumerate() {
                doc.push_row(vec![g17(x), g17(y), g17(grid.value(i_re, i_im))]);
            }
        }
        let csv = out_dir.join(format!("{}_{}.csv", sc.out_stem, method.label()));
        doc.write_to(&csv).map_err(|e| io_fail("write csv", e))?;
        paths.push(csv);
    }
    Ok(paths)
}

const DELOC_COLUMNS: [&str; 8] = [
    "lambda",
    "t",
    "branch",
    "s_wehrl",
    "s_wehrl_smoothed",
    "m2",
    "w2",
    "uncertainty",
];

fn wehrl_time(sc: &Scenario, out_dir: &Path, fine: bool) -> Result<Vec<PathBuf>, Failure> {
    let lambda = sc.lambda.expect("time tasks carry a fixed coupling");
    let params = sc
        .params_at(lambda)
        .map_err(|e| classify("model.derive", e))?;
    let spec = sc.grid_spec(&params, fine);
    let evaluator = grid_method(sc.method);
    let times = sc.axis.times();
    let (window, order) = sc.smoothing;

    let mut records = Vec::with_capacity(times.len());
    let mut n_modes = 0usize;
    for &t in &times {
        let grid = QGrid::build(&params, t, sc.branch, &spec, evaluator)
            .map_err(|e| classify(&format!("phase_space.grid at t={}", g17(t)), e))?;
        n_modes = n_modes.max(grid.n_modes);
        records.push(
            delocalization_record(&grid)
                .map_err(|e| classify(&format!("delocalization at t={}", g17(t)), e))?,
        );
    }
    let raw: Vec<f64> = records.iter().map(|r| r.s_wehrl).collect();
    let smoothed = smooth(&raw, window, order).map_err(|e| classify("delocalization.smooth", e))?;

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    stamp_derived(&mut doc, &params);
    doc.meta("evaluator", evaluator.label());
    doc.meta("grid_rule", rule_label(spec.rule));
    doc.meta("grid_n", format!("{}x{}", spec.n_re, spec.n_im));
    doc.meta("grid_half_width", g17(spec.half_width));
    doc.meta("n_modes", n_modes.to_string());
    doc.meta("smoothing", format!("window={window} order={order}"));
    doc.columns(&DELOC_COLUMNS);
    for (i, rec) in records.iter().enumerate() {
        doc.push_row(vec![
            g17(lambda),
            g17(times[i]),
            sc.branch.label().to_string(),
            g17(rec.s_wehrl),
            g17(smoothed[i]),
            g17(rec.m2),
            g17(rec.w2),
            g17(rec.uncertainty),
        ]);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}

fn scan_deloc_records(
    sc: &Scenario,
    fine: bool,
    evaluator: QMethod,
) -> Result<(Vec<f64>, Vec<quasibell::DelocalizationRecord>, usize), Failure> {
    let lambdas = sc.axis.lambdas();
    let t = sc.axis.fixed_time().expect("lambda scans carry a fixed time");
    let mut records = Vec::with_capacity(lambdas.len());
    let mut n_modes = 0usize;
    for &lambda in &lambdas {
        let params = sc
            .params_at(lambda)
            .map_err(|e| classify("model.derive", e))?;
        let spec = sc.grid_spec(&params, fine);
        let grid = QGrid::build(&params, t, sc.branch, &spec, evaluator)
            .map_err(|e| classify(&format!("phase_space.grid at lambda={}", g17(lambda)), e))?;
        n_modes = n_modes.max(grid.n_modes);
        records.push(
            delocalization_record(&grid)
                .map_err(|e| classify(&format!("delocalization at lambda={}", g17(lambda)), e))?,
        );
    }
    Ok((lambdas, records, n_modes))
}

fn stamp_scan_grid(doc: &mut CsvDoc, sc: &Scenario, evaluator: QMethod, n_modes: usize) {
    doc.meta("evaluator", evaluator.label());
    doc.meta(
        "grid_rule",
        if sc.grid.trapezoid {
            "trapezoid"
        } else {
            "gauss-legendre"
        },
    );
    doc.meta("n_modes_max", n_modes.to_string());
    let (window, order) = sc.smoothing;
    doc.meta("smoothing", format!("window={window} order={order}"));
}

fn complexity_scan(sc: &Scenario, out_dir: &Path, fine: bool) -> Result<Vec<PathBuf>, Failure> {
    let evaluator = grid_method(sc.method);
    let t = sc.axis.fixed_time().expect("lambda scans carry a fixed time");
    let (lambdas, records, n_modes) = scan_deloc_records(sc, fine, evaluator)?;

    let mut m2 = Vec::with_capacity(lambdas.len());
    let mut m2_cutoff_span = (usize::MAX, 0usize);
    for (i, &lambda) in lambdas.iter().enumerate() {
        if evaluator == QMethod::Series {
            let params = sc
                .params_at(lambda)
                .map_err(|e| classify("model.derive", e))?;
            let cutoffs = M2Cutoffs::adaptive(&params);
            m2_cutoff_span = (
                m2_cutoff_span.0.min(cutoffs.n_max),
                m2_cutoff_span.1.max(cutoffs.n_max),
            );
            m2.push(
                complexity_m2_series(&params, t, sc.branch, cutoffs)
                    .map_err(|e| classify(&format!("complexity at lambda={}", g17(lambda)), e))?,
            );
        } else {
            m2.push(records[i].m2);
        }
    }
    let raw: Vec<f64> = records.iter().map(|r| r.s_wehrl).collect();
    let (window, order) = sc.smoothing;
    let smoothed = smooth(&raw, window, order).map_err(|e| classify("delocalization.smooth", e))?;

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    let (p_lo, p_hi) = endpoint_params(sc, &lambdas)?;
    stamp_derived_span(&mut doc, &p_lo, &p_hi);
    stamp_scan_grid(&mut doc, sc, evaluator, n_modes);
    if evaluator == QMethod::Series {
        doc.meta("m2_source", "series-sum");
        doc.meta(
            "m2_cutoff_span",
            format!("{} .. {}", m2_cutoff_span.0, m2_cutoff_span.1),
        );
    } else {
        doc.meta("m2_source", "grid-quadrature");
    }
    doc.columns(&DELOC_COLUMNS);
    for (i, rec) in records.iter().enumerate() {
        doc.push_row(vec![
            g17(lambdas[i]),
            g17(t),
            sc.branch.label().to_string(),
            g17(rec.s_wehrl),
            g17(smoothed[i]),
            g17(m2[i]),
            g17(m2[i].recip()),
            g17(rec.uncertainty),
        ]);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}

fn slope_fit(sc: &Scenario, out_dir: &Path, fine: bool) -> Result<Vec<PathBuf>, Failure> {
    let evaluator = grid_method(sc.method);
    let t = sc.axis.fixed_time().expect("lambda scans carry a fixed time");
    let (lambdas, records, n_modes) = scan_deloc_records(sc, fine, evaluator)?;
    let raw: Vec<f64> = records.iter().map(|r| r.s_wehrl).collect();
    let (window, order) = sc.smoothing;
    let smoothed = smooth(&raw, window, order).map_err(|e| classify("delocalization.smooth", e))?;
    let fit = fit_slopes(&lambdas, &smoothed)
        .map_err(|e| classify("delocalization.fit_slopes", e))?;
    let peak = peak_index(&smoothed);
    let ratios = weight_ratio(&smoothed, peak);

    let mut doc = CsvDoc::new();
    stamp(&mut doc, sc);
    let (p_lo, p_hi) = endpoint_params(sc, &lambdas)?;
    stamp_derived_span(&mut doc, &p_lo, &p_hi);
    stamp_scan_grid(&mut doc, sc, evaluator, n_modes);
    doc.meta("lambda_0", g17(fit.lambda_0));
    doc.meta("m_less", g17(fit.m_less));
    doc.meta("m_greater", g17(fit.m_greater));
    doc.meta(
        "fit_window",
        format!("{} .. {}", g17(fit.window.0), g17(fit.window.1)),
    );
    doc.columns(&[
        "lambda",
        "t",
        "branch",
        "s_wehrl",
        "s_wehrl_smoothed",
        "weight_ratio",
    ]);
    for (i, rec) in records.iter().enumerate() {
        doc.push_row(vec![
            g17(lambdas[i]),
            g17(t),
            sc.branch.label().to_string(),
            g17(rec.s_wehrl),
            g17(smoothed[i]),
            g17(ratios[i]),
        ]);
    }
    finish(&doc, out_dir.join(format!("{}.csv", sc.out_stem)))
}
