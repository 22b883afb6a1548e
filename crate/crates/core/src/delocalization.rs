//! Phase-space delocalization measures built on the Husimi distribution: the
//! Wehrl entropy of a sampled grid, the closed-form second moment of Q with
//! its inverse (the complexity), a least-squares polynomial smoothing filter
//! for long scans, and slope fits for coupling-strength sweeps.
//!
//! The Wehrl entropy S_Q = -integral Q ln Q d^2(beta) uses the grid's own
//! quadrature rule, with the integrand at Q = 0 taken as 0. A pure coherent
//! state gives S_Q = 1 + ln(pi), and that value floors every normalized Q.
//!
//! The second moment M2 = integral Q^2 d^2(beta) admits a double series over
//! the displaced-basis blocks. With p_N = e^(-2 rho^2) (rho^2/2)^N / N! and
//! g = lambda/omega it reads
//!
//!   M2 = (1/8pi) [ sum_N p_N D_N + 2 e^(-x/2) sum_mu |S_mu|^2 / (2^mu mu!) ],
//!   D_N = |sum_n C(N,n) C_n^+ C_(N-n)^+|^2 + |sum_n C(N,n) C_n^- C_(N-n)^-|^2,
//!   S_mu = sum_(N>=mu) e^(-rho^2) (ahat e^(-i omega t))^N g^(N-mu)
//!          F_(N,mu) / (N-mu)!,
//!   F_(N,mu) = sum_n Lambda_(N,n,mu) C_n conj(C'_(N-n)),
//!
//! where C, C' are the block coefficients of the chosen branch and its
//! opposite, and Lambda_(N,n,mu) is the coefficient of y^(N-n) in
//! (1-y)^mu (1+y)^(N-mu). The sum over mu is the diagonal remnant of the
//! printed (N, M, mu) block after the N and M sums factorize. The complexity
//! W2 = 1/M2 >= pi is the effective phase-space area covered by Q.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Branch, SpectrumTable, SystemParams};
use crate::phase_space::{moments_from_grid, QGrid};
use crate::specfun::ln_factorial;

/// Lower bound 1 + ln(pi) of the Wehrl entropy, attained by coherent states.
pub fn wehrl_floor() -> f64 {
    1.0 + std::f64::consts::PI.ln()
}

/// Wehrl entropy -integral Q ln Q d^2(beta) of a sampled Husimi grid.
///
/// Refuses grids whose quadrature normalization defect exceeds ten times the
/// tolerance appropriate to the grid resolution, since the entropy of an
/// unnormalized distribution has no floor.
pub fn wehrl_entropy(grid: &QGrid) -> Result<f64> {
    let tol = 10.0 * grid.spec.norm_tolerance();
    let defect = (grid.integrate() - 1.0).abs();
    if defect > tol {
        return Err(Error::Normalization { defect, tol });
    }
    Ok(grid.integrate_with(|_, q| if q > 0.0 { -q * q.ln() } else { 0.0 }))
}

/// Second moment integral Q^2 d^2(beta) of a sampled Husimi grid.
pub fn m2_from_grid(grid: &QGrid) -> f64 {
    grid.integrate_with(|_, q| q * q)
}

/// Truncation controls for the closed-form second moment.
#[derive(Clone, Copy, Debug)]
pub struct M2Cutoffs {
    /// Largest total excitation N kept in both blocks of the series.
    pub n_max: usize,
    /// Relative tail bound demanded at the cutoff.
    pub tail_tol: f64,
}

impl M2Cutoffs {
    /// Cutoff twelve standard deviations past the doubled Poisson mean
    /// 2 rho^2 that governs the diagonal block, plus a flat margin.
    pub fn adaptive(params: &SystemParams) -> Self {
        let mean = 2.0 * params.rho_hat * params.rho_hat;
        let n = (mean + 12.0 * (mean + 1.0).sqrt()).ceil() as usize + 60;
        Self {
            n_max: n.min(400),
            tail_tol: 1e-10,
        }
    }
}

/// Coefficients of (1 - y)^mu (1 + y)^(N - mu), advanced one factor of
/// (1 + y) at a time. Entries stay exact integers until they approach the
/// i128 range, then continue in floating point; the series weights multiplying
/// them are negligible long before rounding there could matter.
enum LambdaRow {
    Exact(Vec<i128>),
    Float(Vec<f64>),
}

impl LambdaRow {
    fn start(mu: usize) -> Self {
        if mu > 120 {
            let mut c = vec![0.0f64; mu + 1];
            c[0] = 1.0;
            for k in 1..=mu {
                c[k] = -c[k - 1] * (mu - k + 1) as f64 / k as f64;
            }
            return LambdaRow::Float(c);
        }
        let mut c = vec![0i128; mu + 1];
        c[0] = 1;
        for k in 1..=mu {
            c[k] = -c[k - 1] * (mu - k + 1) as i128 / k as i128;
        }
        LambdaRow::Exact(c)
    }

    fn value(&self, j: usize) -> f64 {
        match self {
            LambdaRow::Exact(c) => c[j] as f64,
            LambdaRow::Float(c) => c[j],
        }
    }

    fn advance(&mut self) {
        match self {
            LambdaRow::Exact(c) => {
                let peak = c.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
                if peak > i128::MAX as u128 / 4 {
                    let f: Vec<f64> = c.iter().map(|&v| v as f64).collect();
                    *self = LambdaRow::Float(f);
                    self.advance();
                    return;
                }
                let mut next = vec![0i128; c.len() + 1];
                next[0] = c[0];
                for j in 1..c.len() {
                    next[j] = c[j] + c[j - 1];
                }
                next[c.len()] = c[c.len() - 1];
                *c = next;
            }
            LambdaRow::Float(c) => {
                let mut next = vec![0.0f64; c.len() + 1];
                next[0] = c[0];
                for j in 1..c.len() {
                    next[j] = c[j] + c[j - 1];
                }
                next[c.len()] = c[c.len() - 1];
                *c = next;
            }
        }
    }
}

/// Closed-form second moment of the Husimi distribution for one branch.
///
/// Evaluates the double series in the module header with the diagonal block
/// run to `cutoffs.n_max` and the mu block stopped once two consecutive terms
/// fall below the tail tolerance. Signals truncation failure if either block
/// still carries relative weight above `cutoffs.tail_tol` at its cutoff.
pub fn complexity_m2_series(
    params: &SystemParams,
    t: f64,
    branch: Branch,
    cutoffs: M2Cutoffs,
) -> Result<f64> {
    let n_max = cutoffs.n_max.max(2);
    let spectrum = SpectrumTable::build(params, n_max)?;
    let c_plus: Vec<Complex64> = (0..=n_max)
        .map(|n| spectrum.block(n).coeff_c(t, Branch::Plus))
        .collect();
    let c_minus: Vec<Complex64> = (0..=n_max)
        .map(|n| spectrum.block(n).coeff_c(t, Branch::Minus))
        .collect();

    let rho_sq = params.rho_hat * params.rho_hat;
    let half = 0.5 * rho_sq;

    let mut diag = 0.0;
    let mut diag_last = 0.0;
    let mut row = vec![1.0f64];
    for nn in 0..=n_max {
        let mut sp = Complex64::new(0.0, 0.0);
        let mut sm = Complex64::new(0.0, 0.0);
        for k in 0..=nn {
            sp += row[k] * c_plus[k] * c_plus[nn - k];
            sm += row[k] * c_minus[k] * c_minus[nn - k];
        }
        let ln_p = if nn == 0 {
            -2.0 * rho_sq
        } else {
            -2.0 * rho_sq + nn as f64 * half.ln() - ln_factorial(nn)
        };
        let term = ln_p.exp() * (sp.norm_sqr() + sm.norm_sqr());
        diag += term;
        if nn == n_max {
            diag_last = term;
        }
        let mut next = vec![0.0f64; row.len() + 1];
        next[0] = 1.0;
        for j in 1..row.len() {
            next[j] = row[j] + row[j - 1];
        }
        next[row.len()] = 1.0;
        row = next;
    }

    let (same, opp) = match branch {
        Branch::Plus => (&c_plus, &c_minus),
        Branch::Minus => (&c_minus, &c_plus),
    };
    let g = params.g();
    let step = params.alpha_hat * Complex64::new(0.0, -params.omega * t).exp();
    let off_scale = 2.0 * (-params.x / 2.0).exp();

    let mut cross = 0.0;
    let mut mu_weight = 1.0;
    let mut head = Complex64::new((-rho_sq).exp(), 0.0);
    let mut small_run = 0usize;
    let mut cross_last = 0.0;
    for mu in 0..=n_max {
        let mut lam = LambdaRow::start(mu);
        let mut s = Complex64::new(0.0, 0.0);
        let mut base = head;
        for nn in mu..=n_max {
            let mut f = Complex64::new(0.0, 0.0);
            for j in 0..=nn {
                f += lam.value(j) * same[nn - j] * opp[j].conj();
            }
            s += base * f;
            if nn < n_max {
                lam.advance();
                base *= step * g / ((nn - mu + 1) as f64);
            }
        }
        let term = mu_weight * s.norm_sqr();
        cross += term;
        cross_last = term;
        let total = diag + off_scale * cross;
        if off_scale * term <= 1e-4 * cutoffs.tail_tol * total {
            small_run += 1;
            if small_run >= 2 {
                break;
            }
        } else {
            small_run = 0;
        }
        mu_weight /= 2.0 * (mu as f64 + 1.0);
        head *= step;
    }

    let total = diag + off_scale * cross;
    let tail = (diag_last + off_scale * cross_last) / total;
    if small_run < 2 && tail > cutoffs.tail_tol {
        return Err(Error::Truncation {
            tail,
            tol: cutoffs.tail_tol,
        });
    }
    if diag_last / total > cutoffs.tail_tol {
        return Err(Error::Truncation {
            tail: diag_last / total,
            tol: cutoffs.tail_tol,
        });
    }
    Ok(total / (8.0 * std::f64::consts::PI))
}

/// One row of a delocalization scan: entropy, complexity, and the
/// phase-space uncertainty at a single (lambda, t, branch) point.
#[derive(Clone, Copy, Debug)]
pub struct DelocalizationRecord {
    pub t: f64,
    pub lambda: f64,
    pub branch: Branch,
    /// Wehrl entropy, at least 1 + ln(pi) up to quadrature error.
    pub s_wehrl: f64,
    /// Second moment of Q, positive and at most 1/pi.
    pub m2: f64,
    /// Complexity 1/m2, at least pi up to quadrature error.
    pub w2: f64,
    /// Heisenberg uncertainty product of the oscillator quadratures.
    pub uncertainty: f64,
    /// Smoothed entropy, filled by scan drivers after filtering.
    pub smoothed: Option<f64>,
}

impl DelocalizationRecord {
    /// Assembles a record from measured values; w2 is derived from m2.
    pub fn new(
        t: f64,
        lambda: f64,
        branch: Branch,
        s_wehrl: f64,
        m2: f64,
        uncertainty: f64,
    ) -> Result<Self> {
        if !(m2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "second moment must be positive, got {m2:e}"
            )));
        }
        Ok(Self {
            t,
            lambda,
            branch,
            s_wehrl,
            m2,
            w2: m2.recip(),
            uncertainty,
            smoothed: None,
        })
    }
}

/// Measures entropy, second moment, and uncertainty on one grid, all through
/// the grid's quadrature rule.
pub fn delocalization_record(grid: &QGrid) -> Result<DelocalizationRecord> {
    let s_wehrl = wehrl_entropy(grid)?;
    let m2 = m2_from_grid(grid);
    let moments = moments_from_grid(grid);
    DelocalizationRecord::new(
        grid.t,
        grid.params.lambda,
        grid.branch,
        s_wehrl,
        m2,
        moments.uncertainty,
    )
}

/// Convolution weights of a least-squares polynomial fit over the given
/// integer offsets, evaluated at `eval_at`. Built from a discretely
/// orthonormalized monomial basis so truncated windows cost nothing extra.
fn fit_weights(offsets: &[i64], eval_at: i64, order: usize) -> Vec<f64> {
    let scale = offsets
        .iter()
        .map(|o| o.unsigned_abs() as f64)
        .fold(1.0, f64::max);
    let u: Vec<f64> = offsets.iter().map(|&o| o as f64 / scale).collect();
    let ue = eval_at as f64 / scale;
    let order = order.min(offsets.len() - 1);

    let mut weights = vec![0.0; u.len()];
    let mut basis: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(order + 1);
    for k in 0..=order {
        let mut v: Vec<f64> = u.iter().map(|&x| x.powi(k as i32)).collect();
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        for _ in 0..2 {
            for (bv, bc) in &basis {
                let d: f64 = v.iter().zip(bv).map(|(a, b)| a * b).sum();
                for (vj, bj) in v.iter_mut().zip(bv) {
                    *vj -= d * bj;
                }
                for (cj, bj) in c.iter_mut().zip(bc) {
                    *cj -= d * bj;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        for vj in v.iter_mut() {
            *vj /= norm;
        }
        for cj in c.iter_mut() {
            *cj /= norm;
        }
        let at_eval = c.iter().rev().fold(0.0, |acc, &cj| acc * ue + cj);
        for (wj, vj) in weights.iter_mut().zip(&v) {
            *wj += at_eval * vj;
        }
        basis.push((v, c));
    }
    weights
}

/// Least-squares polynomial convolution smoothing of a time-ordered series.
///
/// Interior points use a symmetric window of the given odd width; endpoints
/// are re-fit on the window truncated at the series edge. The fit order is
/// capped at one below the effective window width.
pub fn smooth(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Window(format!("width {window} is not odd")));
    }
    if order >= window {
        return Err(Error::Window(format!(
            "order {order} does not fit a window of {window} samples"
        )));
    }
    if window > series.len() {
        return Err(Error::Window(format!(
            "width {window} exceeds the series length {}",
            series.len()
        )));
    }
    let n = series.len();
    let h = window / 2;
    let interior_offsets: Vec<i64> = (-(h as i64)..=h as i64).collect();
    let interior = fit_weights(&interior_offsets, 0, order);

    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= h && i + h < n {
            out[i] = interior
                .iter()
                .zip(&series[i - h..=i + h])
                .map(|(w, s)| w * s)
                .sum();
        } else {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            let offsets: Vec<i64> = (lo..=hi).map(|j| j as i64 - i as i64).collect();
            let w = fit_weights(&offsets, 0, order);
            out[i] = w
                .iter()
                .zip(&series[lo..=hi])
                .map(|(w, s)| w * s)
                .sum();
        }
    }
    Ok(out)
}

/// Centered boxcar mean with window shrinkage at the series edges.
pub fn boxcar(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Window("width 0 boxcar".into()));
    }
    let n = series.len();
    let back = (window - 1) / 2;
    let fwd = window / 2;
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd).min(n - 1);
            series[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(out)
}

/// Index of the first maximum of a series.
pub fn peak_index(series: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in series.iter().enumerate() {
        if v > series[best] {
            best = i;
        }
    }
    best
}

/// Statistical-weight ratio W(lambda)/W(lambda_0) = exp(S(lambda) - S(lambda_0))
/// of an entropy scan relative to its peak sample.
pub fn weight_ratio(s_lambda: &[f64], peak: usize) -> Vec<f64> {
    let s0 = s_lambda[peak];
    s_lambda.iter().map(|s| (s - s0).exp()).collect()
}

/// Two-sided slopes of an entropy scan around its interior maximum.
#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    /// Coupling at the entropy peak.
    pub lambda_0: f64,
    /// Magnitude of the fitted slope below the peak.
    pub m_less: f64,
    /// Magnitude of the fitted slope above the peak.
    pub m_greater: f64,
    /// Coupling range the fit used.
    pub window: (f64, f64),
}

fn line_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Least-squares linear slopes of a smoothed entropy scan on each side of
/// its maximum, peak point included in both fits.
///
/// The couplings must be strictly increasing, and the maximum must sit in
/// the interior of the scan.
pub fn fit_slopes(lambdas: &[f64], s_smoothed: &[f64]) -> Result<SlopeFit> {
    if lambdas.len() != s_smoothed.len() || lambdas.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "slope fit needs at least 3 matched samples, got {} couplings and {} values",
            lambdas.len(),
            s_smoothed.len()
        )));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "couplings must increase strictly".into(),
        ));
    }
    let peak = peak_index(s_smoothed);
    if peak == 0 || peak == lambdas.len() - 1 {
        return Err(Error::BoundaryExtremum(peak));
    }
    let m_less = line_slope(&lambdas[..=peak], &s_smoothed[..=peak]).abs();
    let m_greater = line_slope(&lambdas[peak..], &s_smoothed[peak..]).abs();
    Ok(SlopeFit {
        lambda_0: lambdas[peak],
        m_less,
        m_greater,
        window: (lambdas[0], lambdas[lambdas.len() - 1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{GridSpec, QGrid, QMethod};
    use crate::specfun::binomial_f64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(lambda: f64, delta: f64, epsilon: f64, alpha: f64) -> SystemParams {
        SystemParams::derive(1.0, delta, epsilon, lambda, Complex64::new(alpha, 0.0)).unwrap()
    }

    fn binom_i128(n: usize, k: usize) -> i128 {
        if k > n {
            return 0;
        }
        let mut c = 1i128;
        for j in 1..=k {
            c = c * (n - j + 1) as i128 / j as i128;
        }
        c
    }

    fn lambda_direct(nn: usize, n: usize, mu: usize) -> i128 {
        let lo = mu.saturating_sub(n);
        let hi = mu.min(nn - n);
        let mut s = 0i128;
        for k in lo..=hi {
            let sign = if k % 2 == 0 { 1 } else { -1 };
            s += sign * binom_i128(mu, k) * binom_i128(nn - mu, nn - n - k);
        }
        s
    }

    #[test]
    fn lambda_row_mu_zero_is_pascal() {
        let mut row = LambdaRow::start(0);
        for nn in 0..=60usize {
            for j in 0..=nn {
                let expect = binomial_f64(nn, j);
                let got = row.value(j);
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.max(1.0),
                    "N={nn} j={j}: {got} vs {expect}"
                );
            }
            row.advance();
        }
    }

    #[test]
    fn lambda_row_matches_direct_alternating_sum() {
        for mu in 0..=8usize {
            let mut row = LambdaRow::start(mu);
            for nn in mu..=34 {
                for n in 0..=nn {
                    let expect = lambda_direct(nn, n, mu) as f64;
                    let got = row.value(nn - n);
                    assert!(
                        got == expect,
                        "mu={mu} N={nn} n={n}: {got} vs {expect}"
                    );
                }
                row.advance();
            }
        }
    }

    #[test]
    fn lambda_row_survives_the_float_handoff() {
        let mu = 3usize;
        let mut row = LambdaRow::start(mu);
        for _ in mu..170 {
            row.advance();
        }
        assert!(matches!(row, LambdaRow::Float(_)));
        let nn = 170usize;
        for n in [0usize, 1, 40, 85, 169, 170] {
            let lo = mu.saturating_sub(n);
            let hi = mu.min(nn - n);
            let mut expect = 0.0f64;
            let mut bound = 1.0f64;
            for k in lo..=hi {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let term = binomial_f64(mu, k) * binomial_f64(nn - mu, nn - n - k);
                expect += sign * term;
                bound += term;
            }
            let got = row.value(nn - n);
            assert!(
                (got - expect).abs() <= 1e-9 * bound,
                "n={n}: {got} vs {expect}"
            );
        }
        // the polynomial is degree-antisymmetric for odd mu, so the center
        // coefficient vanishes identically and the row must preserve that
        assert_eq!(row.value(85), 0.0);
    }

    #[test]
    fn m2_series_matches_independent_references() {
        let cases: [(SystemParams, f64, Branch, f64); 4] = [
            (params(0.15, 0.15, 0.01, 2.0), 300.0, Branch::Plus, 0.07312387044990183),
            (params(0.30, 0.15, 0.10, 3.0), 76.5, Branch::Plus, 0.073289923913298006),
            (params(0.30, 0.15, 0.10, 3.0), 76.5, Branch::Minus, 0.073290028771494344),
            (params(0.90, 0.15, 0.03, 3.0), 100.0, Branch::Plus, 0.042685569503953122),
        ];
        for (p, t, branch, expect) in cases {
            let got = complexity_m2_series(&p, t, branch, M2Cutoffs::adaptive(&p)).unwrap();
            assert!(
                (got - expect).abs() < 1e-12,
                "lambda={} t={t}: {got} vs {expect}",
                p.lambda
            );
        }
    }

    #[test]
    fn m2_initial_time_is_coupling_independent() {
        let expect = (2.0 + 2.0 * (-18.0f64).exp()) / (8.0 * std::f64::consts::PI);
        for lambda in [0.0, 0.4, 0.9] {
            let p = params(lambda, 0.15, 0.03, 3.0);
            let got = complexity_m2_series(&p, 0.0, Branch::Plus, M2Cutoffs::adaptive(&p)).unwrap();
            assert!(
                (got - expect).abs() < 1e-10,
                "lambda={lambda}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn m2_vacuum_is_coherent_value() {
        let p = params(0.0, 0.15, 0.3, 0.0);
        let got = complexity_m2_series(&p, 137.0, Branch::Plus, M2Cutoffs::adaptive(&p)).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI);
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn m2_series_matches_grid_quadrature() {
        let p = params(0.15, 0.15, 0.01, 2.0);
        let t = 300.0;
        let spec = GridSpec::adaptive(&p, true);
        let grid = QGrid::build(&p, t, Branch::Plus, &spec, QMethod::Series).unwrap();
        let by_grid = m2_from_grid(&grid);
        let by_series =
            complexity_m2_series(&p, t, Branch::Plus, M2Cutoffs::adaptive(&p)).unwrap();
        assert!(
            (by_grid - by_series).abs() < 1e-6,
            "grid {by_grid} vs series {by_series}"
        );
    }

    #[test]
    fn wehrl_coherent_state_sits_on_the_floor() {
        let p = params(0.0, 0.15, 0.3, 0.0);
        let spec = GridSpec::adaptive(&p, false);
        let grid = QGrid::build(&p, 0.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        let s = wehrl_entropy(&grid).unwrap();
        assert!((s - wehrl_floor()).abs() < 1e-4, "{s}");
    }

    #[test]
    fn wehrl_two_lobe_mixture_adds_ln_two() {
        let p = params(0.0, 0.15, 0.3, 4.0);
        let spec = GridSpec::adaptive(&p, false);
        let grid = QGrid::build(&p, 0.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        let s = wehrl_entropy(&grid).unwrap();
        let expect = wehrl_floor() + std::f64::consts::LN_2;
        assert!((s - expect).abs() < 1e-3, "{s} vs {expect}");
    }

    #[test]
    fn wehrl_flags_unnormalized_grids() {
        let p = params(0.15, 0.15, 0.01, 2.0);
        let spec = GridSpec::adaptive(&p, false);
        let mut grid = QGrid::build(&p, 50.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        for v in grid.values.iter_mut() {
            *v *= 0.5;
        }
        assert!(matches!(
            wehrl_entropy(&grid),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn smoothing_reproduces_constants_and_lines() {
        let n = 301;
        let constant = vec![2.5; n];
        let line: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 - 7.0).collect();
        let sc = smooth(&constant, 51, 3).unwrap();
        let sl = smooth(&line, 51, 3).unwrap();
        for i in 0..n {
            assert!((sc[i] - 2.5).abs() < 1e-12, "constant at {i}: {}", sc[i]);
            assert!((sl[i] - line[i]).abs() < 1e-12, "line at {i}: {}", sl[i]);
        }
    }

    #[test]
    fn smoothing_weights_sum_to_one() {
        let n = 151;
        let center = 75;
        let mut total = 0.0;
        for k in center - 25..=center + 25 {
            let mut impulse = vec![0.0; n];
            impulse[k] = 1.0;
            total += smooth(&impulse, 51, 3).unwrap()[center];
        }
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn smoothing_rejects_bad_windows() {
        let series = vec![0.0; 40];
        assert!(matches!(smooth(&series, 10, 3), Err(Error::Window(_))));
        assert!(matches!(smooth(&series, 11, 11), Err(Error::Window(_))));
        assert!(matches!(smooth(&series, 41, 3), Err(Error::Window(_))));
        assert!(matches!(boxcar(&series, 0), Err(Error::Window(_))));
    }

    // The interior variance-reduction bound of a width-51 cubic filter is
    // 1/sqrt(sum w^2) = 4.76, so white noise cannot shrink by a full 5x.
    #[test]
    fn smoothing_cuts_white_noise_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5147);
        let n = 2000;
        let clean: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 400.0).sin())
            .collect();
        let noisy: Vec<f64> = clean
            .iter()
            .map(|c| {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let gauss =
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                c + 0.15 * gauss
            })
            .collect();
        let smoothed = smooth(&noisy, 51, 3).unwrap();
        let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        let raw_residual: Vec<f64> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let smooth_residual: Vec<f64> =
            smoothed.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let ratio = rms(&raw_residual) / rms(&smooth_residual);
        assert!(ratio >= 4.5, "reduction only {ratio}");
    }

    #[test]
    fn boxcar_averages_lines_exactly_inside() {
        let series: Vec<f64> = (0..100).map(|i| 1.5 * i as f64).collect();
        let avg = boxcar(&series, 21).unwrap();
        for i in 10..90 {
            assert!((avg[i] - series[i]).abs() < 1e-10, "at {i}");
        }
        assert!((avg[0] - series[..11].iter().sum::<f64>() / 11.0).abs() < 1e-12);
    }

    #[test]
    fn weight_ratio_pins_the_peak_to_one() {
        let s = [2.0, 2.4, 2.9, 2.6, 2.2];
        let peak = peak_index(&s);
        assert_eq!(peak, 2);
        let ratio = weight_ratio(&s, peak);
        assert!((ratio[peak] - 1.0).abs() < 1e-15);
        for (i, r) in ratio.iter().enumerate() {
            assert!(*r <= 1.0 + 1e-15, "at {i}");
            assert!((r - (s[i] - s[peak]).exp()).abs() < 1e-15);
        }
        let flat = [1.3; 7];
        for r in weight_ratio(&flat, peak_index(&flat)) {
            assert!((r - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_slopes_recovers_a_tent() {
        let lambdas: Vec<f64> = (0..41).map(|i| 0.1 + 0.02 * i as f64).collect();
        let s: Vec<f64> = lambdas.iter().map(|l| 2.0 - 3.0 * (l - 0.5).abs()).collect();
        let fit = fit_slopes(&lambdas, &s).unwrap();
        assert!((fit.lambda_0 - 0.5).abs() < 1e-12);
        assert!((fit.m_less - 3.0).abs() < 1e-9, "{}", fit.m_less);
        assert!((fit.m_greater - 3.0).abs() < 1e-9, "{}", fit.m_greater);
        assert!((fit.window.0 - 0.1).abs() < 1e-12);
        assert!((fit.window.1 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn fit_slopes_rejects_boundary_peaks() {
        let lambdas: Vec<f64> = (0..10).map(|i| 0.1 * (i + 1) as f64).collect();
        let rising: Vec<f64> = lambdas.iter().map(|l| 2.0 * l).collect();
        assert!(matches!(
            fit_slopes(&lambdas, &rising),
            Err(Error::BoundaryExtremum(_))
        ));
    }

    #[test]
    fn record_invariants_hold_on_a_grid() {
        let p = params(0.15, 0.15, 0.01, 2.0);
        let spec = GridSpec::adaptive(&p, false);
        let grid = QGrid::build(&p, 300.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        let rec = delocalization_record(&grid).unwrap();
        assert!(rec.s_wehrl >= wehrl_floor() - 1e-3, "{}", rec.s_wehrl);
        assert!(rec.w2 >= std::f64::consts::PI - 1e-3, "{}", rec.w2);
        assert!((rec.m2 * rec.w2 - 1.0).abs() < 2e-16);
        assert!(rec.uncertainty >= 0.5 - 1e-9, "{}", rec.uncertainty);
        assert!(rec.smoothed.is_none());
    }
}
