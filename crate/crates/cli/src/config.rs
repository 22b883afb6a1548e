//! Scenario files: one TOML document describes one reproducible run.
//!
//! All physical inputs are in units of the oscillator frequency, which itself
//! defaults to 1. Exactly one scan axis is active per task: a time range for
//! dynamics sweeps, a single time for phase-space grids, or a coupling range
//! carrying its own fixed time for lambda scans. Unknown keys are rejected so
//! a typo cannot silently change what a run means.

use serde::Deserialize;

use quasibell::{Branch, Complex64, GridRule, GridSpec, SystemParams};

/// Computation a scenario dispatches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    QubitDynamics,
    EntropyTime,
    EntropyLambdaScan,
    QGrid,
    Moments,
    WehrlTime,
    ComplexityLambdaScan,
    SlopeFit,
}

impl TaskKind {
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::QubitDynamics => "qubit-dynamics",
            TaskKind::EntropyTime => "entropy-time",
            TaskKind::EntropyLambdaScan => "entropy-lambda-scan",
            TaskKind::QGrid => "q-grid",
            TaskKind::Moments => "moments",
            TaskKind::WehrlTime => "wehrl-time",
            TaskKind::ComplexityLambdaScan => "complexity-lambda-scan",
            TaskKind::SlopeFit => "slope-fit",
        }
    }

    fn wants_lambda_scan(self) -> bool {
        matches!(
            self,
            TaskKind::EntropyLambdaScan | TaskKind::ComplexityLambdaScan | TaskKind::SlopeFit
        )
    }

    fn wants_single_time(self) -> bool {
        matches!(self, TaskKind::QGrid)
    }

    fn uses_grid(self) -> bool {
        matches!(
            self,
            TaskKind::QGrid
                | TaskKind::WehrlTime
                | TaskKind::ComplexityLambdaScan
                | TaskKind::SlopeFit
        )
    }

    fn uses_smoothing(self) -> bool {
        matches!(
            self,
            TaskKind::WehrlTime | TaskKind::ComplexityLambdaScan | TaskKind::SlopeFit
        )
    }

    fn allows_both(self) -> bool {
        matches!(
            self,
            TaskKind::QubitDynamics
                | TaskKind::EntropyTime
                | TaskKind::EntropyLambdaScan
                | TaskKind::QGrid
                | TaskKind::Moments
        )
    }
}

/// Evaluation route requested for a run. For phase-space grids `theta`
/// selects the closed-form linearized evaluator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Series,
    Theta,
    Both,
}

impl MethodChoice {
    pub fn label(self) -> &'static str {
        match self {
            MethodChoice::Series => "series",
            MethodChoice::Theta => "theta",
            MethodChoice::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum BranchChoice {
    Plus,
    Minus,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    task: TaskKind,
    method: Option<MethodChoice>,
    branch: Option<BranchChoice>,
    out: Option<String>,
    params: RawParams,
    time: Option<RawTime>,
    lambda_scan: Option<RawLambdaScan>,
    grid: Option<RawGrid>,
    smoothing: Option<RawSmoothing>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    omega: Option<f64>,
    delta: f64,
    epsilon: f64,
    lambda: Option<f64>,
    alpha: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t: Option<f64>,
    t0: Option<f64>,
    t1: Option<f64>,
    dt: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLambdaScan {
    lo: f64,
    hi: f64,
    dl: f64,
    t: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    fine: Option<bool>,
    n: Option<usize>,
    half_width: Option<f64>,
    rule: Option<RuleChoice>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RuleChoice {
    GaussLegendre,
    Trapezoid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSmoothing {
    window: usize,
    order: usize,
}

/// The one active scan axis of a run.
#[derive(Clone, Copy, Debug)]
pub enum Axis {
    TimeRange { t0: f64, t1: f64, dt: f64 },
    SingleTime { t: f64 },
    LambdaRange { lo: f64, hi: f64, dl: f64, t: f64 },
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl Axis {
    /// Sample times of a time-range axis, or the single fixed time.
    pub fn times(&self) -> Vec<f64> {
        match *self {
            Axis::TimeRange { t0, t1, dt } => steps(t0, t1, dt),
            Axis::SingleTime { t } | Axis::LambdaRange { t, .. } => vec![t],
        }
    }

    /// Sample couplings of a lambda-range axis.
    pub fn lambdas(&self) -> Vec<f64> {
        match *self {
            Axis::LambdaRange { lo, hi, dl, .. } => steps(lo, hi, dl),
            _ => Vec::new(),
        }
    }

    /// Fixed time of a single-time or lambda-range axis.
    pub fn fixed_time(&self) -> Option<f64> {
        match *self {
            Axis::SingleTime { t } | Axis::LambdaRange { t, .. } => Some(t),
            Axis::TimeRange { .. } => None,
        }
    }
}

/// Grid shape overrides layered on the adaptive default.
#[derive(Clone, Copy, Debug, Default)]
pub struct GridOptions {
    pub fine: bool,
    pub n: Option<usize>,
    pub half_width: Option<f64>,
    pub trapezoid: bool,
}

/// A validated run description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub task: TaskKind,
    pub method: MethodChoice,
    pub branch: Branch,
    /// Output file stem; artifact names start with it.
    pub out_stem: String,
    pub omega: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    /// Fixed coupling; absent when the coupling is the scan axis.
    pub lambda: Option<f64>,
    pub axis: Axis,
    pub grid: GridOptions,
    /// Smoothing filter (window, order) for tasks that report a smoothed
    /// column: 51/3 on time scans, 21/3 on coupling scans unless overridden.
    pub smoothing: (usize, usize),
}

impl Scenario {
    /// Parses and validates one TOML scenario document.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| format!("parse: {e}"))?;
        let task = raw.task;

        let method = raw.method.unwrap_or(MethodChoice::Series);
        if method == MethodChoice::Both && !task.allows_both() {
            return Err(format!(
                "method 'both' is not available for task '{}'",
                task.label()
            ));
        }
        let branch = match raw.branch.unwrap_or(BranchChoice::Plus) {
            BranchChoice::Plus => Branch::Plus,
            BranchChoice::Minus => Branch::Minus,
        };

        let axis = if task.wants_lambda_scan() {
            if raw.time.is_some() {
                return Err(format!(
                    "task '{}' scans the coupling; drop the [time] section",
                    task.label()
                ));
            }
            let scan = raw.lambda_scan.ok_or_else(|| {
                format!("task '{}' needs a [lambda_scan] section", task.label())
            })?;
            if !(scan.dl > 0.0) || !(scan.hi > scan.lo) || !(scan.lo >= 0.0) {
                return Err("lambda_scan needs 0 <= lo < hi and dl > 0".into());
            }
            if !(scan.t >= 0.0) {
                return Err("lambda_scan.t must be nonnegative".into());
            }
            Axis::LambdaRange {
                lo: scan.lo,
                hi: scan.hi,
                dl: scan.dl,
                t: scan.t,
            }
        } else {
            if raw.lambda_scan.is_some() {
                return Err(format!(
                    "task '{}' does not scan the coupling; drop [lambda_scan]",
                    task.label()
                ));
            }
            let time = raw
                .time
                .ok_or_else(|| format!("task '{}' needs a [time] section", task.label()))?;
            if task.wants_single_time() {
                match time {
                    RawTime {
                        t: Some(t),
                        t0: None,
                        t1: None,
                        dt: None,
                    } => {
                        if !(t >= 0.0) {
                            return Err("time.t must be nonnegative".into());
                        }
                        Axis::SingleTime { t }
                    }
                    _ => {
                        return Err(format!(
                            "task '{}' takes a single time.t, not a range",
                            task.label()
                        ))
                    }
                }
            } else {
                match time {
                    RawTime {
                        t: None,
                        t0: Some(t0),
                        t1: Some(t1),
                        dt: Some(dt),
                    } => {
                        if !(dt > 0.0) || !(t1 > t0) || !(t0 >= 0.0) {
                            return Err("time range needs 0 <= t0 < t1 and dt > 0".into());
                        }
                        Axis::TimeRange { t0, t1, dt }
                    }
                    _ => {
                        return Err(format!(
                            "task '{}' takes a time range t0/t1/dt",
                            task.label()
                        ))
                    }
                }
            }
        };

        let lambda = if task.wants_lambda_scan() {
            if raw.params.lambda.is_some() {
                return Err("params.lambda conflicts with the coupling scan".into());
            }
            None
        } else {
            Some(
                raw.params
                    .lambda
                    .ok_or_else(|| "params.lambda is required".to_string())?,
            )
        };

        if raw.grid.is_some() && !task.uses_grid() {
            return Err(format!(
                "task '{}' builds no phase-space grid; drop [grid]",
                task.label()
            ));
        }
        if raw.smoothing.is_some() && !task.uses_smoothing() {
            return Err(format!(
                "task '{}' reports no smoothed column; drop [smoothing]",
                task.label()
            ));
        }

        let grid = match raw.grid {
            Some(g) => {
                if let Some(n) = g.n {
                    if n < 2 {
                        return Err("grid.n must be at least 2".into());
                    }
                }
                if let Some(h) = g.half_width {
                    if !(h > 0.0) {
                        return Err("grid.half_width must be positive".into());
                    }
                }
                GridOptions {
                    fine: g.fine.unwrap_or(false),
                    n: g.n,
                    half_width: g.half_width,
                    trapezoid: matches!(g.rule, Some(RuleChoice::Trapezoid)),
                }
            }
            None => GridOptions::default(),
        };

        let default_smoothing = if task.wants_lambda_scan() { (21, 3) } else { (51, 3) };
        let smoothing = match raw.smoothing {
            Some(s) => {
                if s.window == 0 || s.window % 2 == 0 || s.order >= s.window {
                    return Err("smoothing needs an odd window and order < window".into());
                }
                (s.window, s.order)
            }
            None => default_smoothing,
        };

        let omega = raw.params.omega.unwrap_or(1.0);
        let scenario = Scenario {
            task,
            method,
            branch,
            out_stem: raw.out.unwrap_or_else(|| task.label().to_string()),
            omega,
            delta: raw.params.delta,
            epsilon: raw.params.epsilon,
            alpha: raw.params.alpha,
            lambda,
            axis,
            grid,
            smoothing,
        };
        let probe = scenario
            .lambda
            .unwrap_or_else(|| scenario.axis.lambdas()[0]);
        scenario
            .params_at(probe)
            .map_err(|e| format!("params: {e}"))?;
        Ok(scenario)
    }

    /// System parameters at one coupling.
    pub fn params_at(&self, lambda: f64) -> quasibell::Result<SystemParams> {
        SystemParams::derive(
            self.omega,
            self.delta,
            self.epsilon,
            lambda,
            Complex64::new(self.alpha, 0.0),
        )
    }

    /// Grid shape for one parameter point, with config and command-line
    /// overrides applied to the adaptive default.
    pub fn grid_spec(&self, params: &SystemParams, fine_flag: bool) -> GridSpec {
        let mut spec = GridSpec::adaptive(params, self.grid.fine || fine_flag);
        if let Some(n) = self.grid.n {
            spec.n_re = n;
            spec.n_im = n;
        }
        if let Some(h) = self.grid.half_width {
            spec.half_width = h;
        }
        if self.grid.trapezoid {
            spec.rule = GridRule::Trapezoid;
        }
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
        task = "qubit-dynamics"
        method = "both"
        branch = "minus"
        out = "sweep"

        [params]
        delta = 0.15
        epsilon = 0.01
        lambda = 0.15
        alpha = 2.0

        [time]
        t0 = 0.0
        t1 = 2000.0
        dt = 1.0
    "#;

    #[test]
    fn full_scenario_parses() {
        let sc = Scenario::from_toml(FULL).unwrap();
        assert_eq!(sc.task, TaskKind::QubitDynamics);
        assert_eq!(sc.method, MethodChoice::Both);
        assert_eq!(sc.branch, Branch::Minus);
        assert_eq!(sc.out_stem, "sweep");
        assert_eq!(sc.omega, 1.0);
        assert_eq!(sc.lambda, Some(0.15));
        let times = sc.axis.times();
        assert_eq!(times.len(), 2001);
        assert!((times[2000] - 2000.0).abs() < 1e-9);
        assert_eq!(sc.smoothing, (51, 3));
    }

    #[test]
    fn lambda_scan_axis_validates() {
        let text = r#"
            task = "complexity-lambda-scan"
            method = "series"

            [params]
            delta = 0.15
            epsilon = 0.1
            alpha = 3.0

            [lambda_scan]
            lo = 0.05
            hi = 1.0
            dl = 0.05
            t = 76.5
        "#;
        let sc = Scenario::from_toml(text).unwrap();
        assert!(sc.lambda.is_none());
        assert_eq!(sc.axis.lambdas().len(), 20);
        assert_eq!(sc.axis.fixed_time(), Some(76.5));
        assert_eq!(sc.smoothing, (21, 3));
    }

    #[test]
    fn misplaced_sections_are_rejected() {
        for (needle, mangle) in [
            ("lambda", FULL.replace("lambda = 0.15\n", "")),
            ("time", FULL.replace("t1 = 2000.0", "t1 = -1.0")),
            ("dt", FULL.replace("dt = 1.0", "dt = 0.0")),
            ("both", FULL.replace("qubit-dynamics", "wehrl-time")),
            ("unknown", FULL.replace("out = \"sweep\"", "outt = \"sweep\"")),
        ] {
            assert!(
                Scenario::from_toml(&mangle).is_err(),
                "expected rejection for mangled {needle}"
            );
        }
    }

    #[test]
    fn scan_tasks_reject_fixed_lambda() {
        let text = r#"
            task = "entropy-lambda-scan"

            [params]
            delta = 0.15
            epsilon = 0.3
            lambda = 0.2
            alpha = 0.5

            [lambda_scan]
            lo = 0.01
            hi = 0.6
            dl = 0.01
            t = 201.0
        "#;
        let err = Scenario::from_toml(text).unwrap_err();
        assert!(err.contains("params.lambda"), "{err}");
    }

    #[test]
    fn grid_single_time_shape() {
        let text = r#"
            task = "q-grid"
            method = "series"

            [params]
            delta = 0.15
            epsilon = 0.01
            lambda = 0.08
            alpha = 2.0

            [time]
            t = 300.0

            [grid]
            n = 101
            half_width = 5.0
            rule = "trapezoid"
        "#;
        let sc = Scenario::from_toml(text).unwrap();
        let p = sc.params_at(0.08).unwrap();
        let spec = sc.grid_spec(&p, false);
        assert_eq!(spec.n_re, 101);
        assert!((spec.half_width - 5.0).abs() < 1e-15);
        assert_eq!(spec.rule, GridRule::Trapezoid);
        assert_eq!(sc.axis.fixed_time(), Some(300.0));
    }
}
