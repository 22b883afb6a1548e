//! Reduced density matrix of the qubit and its entropies.
//!
//! For the initial state (|1, alpha> +- |-1, -alpha>)/sqrt(2) the reduced
//! qubit matrix stays of the form
//!
//! `rho_Q = [[1/2 -+ zeta, +-xi], [+-conj(xi), 1/2 +- zeta]]`
//!
//! with eigenvalues 1/2 +- varpi, varpi = sqrt(zeta^2 + |xi|^2). The
//! diagonal shift zeta and coherence xi are computed two ways: the exact
//! displaced-Fock series, and closed forms built from Jacobi theta
//! functions that hold for moderate coupling (lambda/omega <= 0.2,
//! eps/Delta_tilde of order 0.1, rho_hat around 1.5..2.5). The series is
//! ground truth; the theta route is validated against it in the tests.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{sinc_chi, Branch, SpectrumTable, SystemParams};
use crate::specfun::{poisson_weight, theta3, theta4, OverlapTable, ThetaArgs};

/// Which evaluation route produced a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Series,
    Theta,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Series => "series",
            Method::Theta => "theta",
        }
    }
}

/// Qubit state summary at one instant.
#[derive(Clone, Copy, Debug)]
pub struct QubitStateRecord {
    pub t: f64,
    pub branch: Branch,
    pub zeta: f64,
    pub xi: Complex64,
    /// varpi = sqrt(zeta^2 + |xi|^2), half the eigenvalue splitting
    pub varpi: f64,
    /// von Neumann entropy, natural log, in [0, ln 2]
    pub s_vn: f64,
    /// linear entropy 1 - Tr rho^2 = 1/2 - 2 varpi^2
    pub s_lin: f64,
    pub method: Method,
}

/// -(1/2+w)ln(1/2+w) - (1/2-w)ln(1/2-w) with 0 ln 0 := 0.
pub fn von_neumann_entropy(varpi: f64) -> f64 {
    fn xlnx(p: f64) -> f64 {
        if p <= 0.0 {
            0.0
        } else {
            p * p.ln()
        }
    }
    -xlnx(0.5 + varpi) - xlnx(0.5 - varpi)
}

/// 1 - Tr rho^2 for eigenvalues 1/2 +- w.
pub fn linear_entropy(varpi: f64) -> f64 {
    0.5 - 2.0 * varpi * varpi
}

/// Cached tables for repeated series evaluation at one parameter point.
#[derive(Clone, Debug)]
pub struct QubitSolver {
    params: SystemParams,
    spectrum: SpectrumTable,
    overlaps: OverlapTable,
    amps: Vec<Complex64>,
    n_max: usize,
}

impl QubitSolver {
    /// Builds spectrum, overlap, and amplitude tables at the adaptive
    /// Fock cutoff of the parameter point.
    pub fn new(params: &SystemParams) -> Result<Self> {
        Self::with_cutoff(params, params.mode_cutoff())
    }

    /// Same, at an explicit cutoff (used by truncation-doubling tests).
    pub fn with_cutoff(params: &SystemParams, n_max: usize) -> Result<Self> {
        Ok(Self {
            params: *params,
            spectrum: SpectrumTable::build(params, n_max)?,
            overlaps: OverlapTable::build(n_max + 1, params.x)?,
            amps: params.coherent_amplitudes(n_max),
            n_max,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn spectrum(&self) -> &SpectrumTable {
        &self.spectrum
    }

    /// Diagonal shift zeta(t) of the qubit matrix:
    /// eps_tilde e^(-rho^2) sum_n (-1)^n rho^(2n)/n! delta_n sin^2(chi_n t)/chi_n^2.
    pub fn zeta_series(&self, t: f64) -> f64 {
        let r = self.params.rho_hat * self.params.rho_hat;
        let mut sum = 0.0;
        for b in self.spectrum.blocks() {
            let s = sinc_chi(b.chi_n, t);
            let term = poisson_weight(b.n, r) * b.delta_n * s * s;
            sum += if b.n % 2 == 1 { -term } else { term };
        }
        self.params.eps_tilde * sum
    }

    /// Coherence xi(t) of the qubit matrix: the double displaced-Fock sum
    /// (1/2) sum_{n,m} (-1)^m v_n conj(v_m) C_n^pm C_m^mp e^(-i(n-m) omega t) <m-|n+>.
    pub fn xi_series(&self, t: f64, branch: Branch) -> Complex64 {
        let opposite = match branch {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        };
        let rot = Complex64::new(0.0, -self.params.omega * t).exp();
        let mut u = Vec::with_capacity(self.n_max + 1);
        let mut y = Vec::with_capacity(self.n_max + 1);
        let mut phase = Complex64::new(1.0, 0.0);
        for n in 0..=self.n_max {
            let b = self.spectrum.block(n);
            u.push(self.amps[n] * b.coeff_c(t, branch) * phase);
            let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
            y.push(self.amps[n].conj() * b.coeff_c(t, opposite) * phase.conj() * sign);
            phase *= rot;
        }
        let mut xi = Complex64::new(0.0, 0.0);
        for m in 0..=self.n_max {
            let mut inner = Complex64::new(0.0, 0.0);
            for n in 0..=self.n_max {
                inner += self.overlaps.get(m, n) * u[n];
            }
            xi += y[m] * inner;
        }
        0.5 * xi
    }

    /// Assembles a full record along the requested route.
    pub fn record(&self, t: f64, branch: Branch, method: Method) -> Result<QubitStateRecord> {
        let (zeta, xi) = match method {
            Method::Series => (self.zeta_series(t), self.xi_series(t, branch)),
            Method::Theta => (zeta_theta(&self.params, t)?, xi_theta(&self.params, t, branch)?),
        };
        let raw = zeta.hypot(xi.norm());
        if raw > 0.5 + 1e-12 {
            return Err(Error::EigenvalueRange { value: 0.5 + raw });
        }
        let varpi = raw.min(0.5);
        Ok(QubitStateRecord {
            t,
            branch,
            zeta,
            xi,
            varpi,
            s_vn: von_neumann_entropy(varpi),
            s_lin: linear_entropy(varpi),
            method,
        })
    }
}

/// One-off series evaluation of zeta; builds the spectrum table internally.
pub fn zeta_series(params: &SystemParams, t: f64) -> Result<f64> {
    let spectrum = SpectrumTable::build(params, params.mode_cutoff())?;
    let r = params.rho_hat * params.rho_hat;
    let mut sum = 0.0;
    for b in spectrum.blocks() {
        let s = sinc_chi(b.chi_n, t);
        let term = poisson_weight(b.n, r) * b.delta_n * s * s;
        sum += if b.n % 2 == 1 { -term } else { term };
    }
    Ok(params.eps_tilde * sum)
}

/// One-off series evaluation of xi; builds all tables internally.
pub fn xi_series(params: &SystemParams, t: f64, branch: Branch) -> Result<Complex64> {
    Ok(QubitSolver::new(params)?.xi_series(t, branch))
}

/// One-off record along either route.
pub fn qubit_record(params: &SystemParams, t: f64, branch: Branch, method: Method) -> Result<QubitStateRecord> {
    QubitSolver::new(params)?.record(t, branch, method)
}

/// Shared abbreviations of the theta closed forms at one (params, t) point.
///
/// tau = Delta_tilde t, f = x rho^2, and the nomes/arguments
///
/// `q = exp(-1/(2 rho^2) - i x^2 tau/4)`, `frak_q = exp(-1/(2 rho^2))`,
/// `z_j = (x (1 + (1-j) x/4) tau - i)/2`, `frak_z_j = -(j x^2 tau/4 + i)/2`.
///
/// Phase factors are exposed as methods since they are indexed two ways:
/// `phi(j, l) = exp(-i tau (1 - j x/2 + l x^2/4))` and
/// `phi_tilde(j, p) = exp(i p tau x (1 - j x/4))`, the latter with an
/// explicit power p so fractional powers stay branch-safe.
#[derive(Clone, Copy, Debug)]
pub struct ThetaContext {
    pub tau: f64,
    pub f: f64,
    pub q: Complex64,
    pub frak_q: Complex64,
    pub z: [Complex64; 5],
    pub frak_z: [Complex64; 4],
    x: f64,
    /// powers (alpha_hat e^(-i omega t))^n for n = 1..=4
    w: [Complex64; 4],
}

impl ThetaContext {
    pub fn new(params: &SystemParams, t: f64) -> Result<Self> {
        let rho_sq = params.rho_hat * params.rho_hat;
        if rho_sq == 0.0 {
            return Err(Error::InvalidParameter(
                "theta closed forms need rho_hat > 0 (Gaussian limit of the Poisson weights)".into(),
            ));
        }
        let x = params.x;
        let tau = params.delta_tilde * t;
        let decay = -1.0 / (2.0 * rho_sq);
        let q = Complex64::new(decay, -x * x * tau / 4.0).exp();
        let frak_q = Complex64::new(decay, 0.0).exp();
        let mut z = [Complex64::new(0.0, 0.0); 5];
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = Complex64::new(0.5 * x * (1.0 + (1.0 - j as f64) * x / 4.0) * tau, -0.5);
        }
        let mut frak_z = [Complex64::new(0.0, 0.0); 4];
        for (idx, fz) in frak_z.iter_mut().enumerate() {
            let j = (idx + 1) as f64;
            *fz = Complex64::new(-0.5 * j * x * x * tau / 4.0, -0.5);
        }
        let w1 = params.alpha_hat * Complex64::new(0.0, -params.omega * t).exp();
        Ok(Self {
            tau,
            f: x * rho_sq,
            q,
            frak_q,
            z,
            frak_z,
            x,
            w: [w1, w1 * w1, w1 * w1 * w1, w1 * w1 * w1 * w1],
        })
    }

    /// exp(-i tau (1 - j x/2 + l x^2/4))
    pub fn phi(&self, j: f64, l: f64) -> Complex64 {
        Complex64::new(0.0, -self.tau * (1.0 - j * self.x / 2.0 + l * self.x * self.x / 4.0)).exp()
    }

    /// phi_tilde_j to the power p: exp(i p tau x (1 - j x/4))
    pub fn phi_tilde(&self, j: f64, p: f64) -> Complex64 {
        Complex64::new(0.0, p * self.tau * self.x * (1.0 - j * self.x / 4.0)).exp()
    }

    /// Re(alpha_hat^n e^(-i n omega t)), n in 1..=4
    pub fn r(&self, n: usize) -> f64 {
        self.w[n - 1].re
    }

    /// Im(alpha_hat^n e^(-i n omega t)), n in 1..=4
    pub fn i(&self, n: usize) -> f64 {
        self.w[n - 1].im
    }
}

fn require_theta_inputs(params: &SystemParams) -> Result<()> {
    if params.delta_tilde <= 0.0 {
        return Err(Error::InvalidParameter(
            "theta closed forms need delta > 0 (their clock is tau = delta_tilde t)".into(),
        ));
    }
    Ok(())
}

/// Closed form for zeta built from the Gaussian limit of the Poisson
/// weights:
///
/// `zeta = -(eps/2 Delta_tilde) [e^(-2 rho^2)(1 - f(1+x) + 3f^2/4)
///         - e^(-rho^2/2)/sqrt(2 pi rho^2) Re Theta(tau)]`,
/// `Theta = phi(0,0) th4(q,z0) - f(1+x) phi(2,0) th4(q,z2) + (3/4) f^2 phi(4,2) th4(q,z4)`.
///
/// Outside the validity window (see `SystemParams::regimes`) it still
/// evaluates; callers decide whether to warn.
pub fn zeta_theta(params: &SystemParams, t: f64) -> Result<f64> {
    require_theta_inputs(params)?;
    if params.epsilon == 0.0 {
        return Ok(0.0);
    }
    let ctx = ThetaContext::new(params, t)?;
    let rho_sq = params.rho_hat * params.rho_hat;
    let (f, x) = (ctx.f, params.x);
    let poly = 1.0 - f * (1.0 + x) + 0.75 * f * f;
    let theta_combo = ctx.phi(0.0, 0.0) * theta4(ThetaArgs::new(ctx.q, ctx.z[0]))?
        - f * (1.0 + x) * ctx.phi(2.0, 0.0) * theta4(ThetaArgs::new(ctx.q, ctx.z[2]))?
        + 0.75 * f * f * ctx.phi(4.0, 2.0) * theta4(ThetaArgs::new(ctx.q, ctx.z[4]))?;
    let gauss = (-0.5 * rho_sq).exp() / (2.0 * std::f64::consts::PI * rho_sq).sqrt();
    Ok(-(params.epsilon / (2.0 * params.delta_tilde)) * ((-2.0 * rho_sq).exp() * poly - gauss * theta_combo.re))
}

/// Closed form for xi, transcribed block by block from the theta-function
/// resummation of the double series; O(eps^2) accurate with eps-dependent
/// phases dropped. The series route is ground truth and the two are held
/// together by the in-regime agreement tests.
pub fn xi_theta(params: &SystemParams, t: f64, branch: Branch) -> Result<Complex64> {
    require_theta_inputs(params)?;
    let ctx = ThetaContext::new(params, t)?;
    let rho_sq = params.rho_hat * params.rho_hat;
    let (f, x) = (ctx.f, params.x);
    let sx = x.sqrt();
    let sgn = branch.sign();

    let t4_z0 = theta4(ThetaArgs::new(ctx.q, ctx.z[0]))?;
    let t4_z1 = theta4(ThetaArgs::new(ctx.q, ctx.z[1]))?;
    let t4_z2 = theta4(ThetaArgs::new(ctx.q, ctx.z[2]))?;
    let t4_z3 = theta4(ThetaArgs::new(ctx.q, ctx.z[3]))?;
    let t4_z4 = theta4(ThetaArgs::new(ctx.q, ctx.z[4]))?;
    let t4_f1 = theta4(ThetaArgs::new(ctx.frak_q, ctx.frak_z[0]))?;
    let t4_f2 = theta4(ThetaArgs::new(ctx.frak_q, ctx.frak_z[1]))?;
    let t4_f4 = theta4(ThetaArgs::new(ctx.frak_q, ctx.frak_z[3]))?;
    let t3_z1 = theta3(ThetaArgs::new(ctx.q, ctx.z[1]))?;
    let t3_z2 = theta3(ThetaArgs::new(ctx.q, ctx.z[2]))?;
    let t3_z3 = theta3(ThetaArgs::new(ctx.q, ctx.z[3]))?;
    let t3_f1 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[0]))?;
    let t3_f2 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[1]))?;
    let t3_f3 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[2]))?;
    let t3_f4 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[3]))?;

    // bias-free real blocks, weighted by R_n
    let b1 = sx * ctx.r(1) * (ctx.phi(1.0, 0.0) * t4_z1 + 0.5 * f * ctx.phi(3.0, 1.0) * t4_z3).re;
    let b2 = 0.5 * x * ctx.r(2) * ((ctx.phi_tilde(1.0, 1.0) + f / 3.0 * ctx.phi_tilde(3.0, 1.0)) * t4_f2).re;
    let b3 = sx * x / 6.0 * ctx.r(3) * (ctx.phi(3.0, 3.0) * t4_z3).re;
    let b4 = x * x / 24.0 * ctx.r(4) * (ctx.phi_tilde(3.0, 2.0) * t4_f4).re;

    // second order in the bias, real
    let e1 = x
        * ctx.r(2)
        * ((0.5 + x) * ctx.phi(2.0, 2.0) * t4_z2 - 5.0 * f / 6.0 * ctx.phi(4.0, 3.0) * t4_z4
            - ((0.5 + x) * ctx.phi_tilde(1.0, 1.0) - 5.0 * f / 6.0 * ctx.phi_tilde(3.0, 1.0)) * t4_f2)
            .re;
    let e2 = x * x / 24.0 * ctx.r(4) * (ctx.phi(4.0, 6.0) * t4_z4 - ctx.phi_tilde(3.0, 2.0) * t4_f4).re;

    // first order in the bias, imaginary, theta3 row weighted by I_n
    let i1 = sx
        * ctx.i(1)
        * ((1.0 + 0.5 * x) * ctx.phi(1.0, 0.0) * t3_z1 + 0.5 * f * ctx.phi(3.0, 1.0) * t3_z3
            - ((1.0 + 0.5 * x) * ctx.phi_tilde(0.0, 0.5) + 0.5 * f * ctx.phi_tilde(2.0, 0.5)) * t3_f1)
            .re;
    let i2 = 0.5 * x * x * ctx.i(2) * (ctx.phi(2.0, 2.0) * t3_z2 - ctx.phi_tilde(1.0, 1.0) * t3_f2).re;
    let i3 = sx * x / 6.0 * ctx.i(3) * (ctx.phi(3.0, 3.0) * t3_z3 - ctx.phi_tilde(1.0, 1.5) * t3_f3).re;

    // first order in the bias, imaginary, theta4 row weighted by R_n
    let j1 = sx
        * ctx.r(1)
        * ((1.0 + 0.5 * x) * ctx.phi(1.0, 0.0) * t4_z1 - 0.5 * f * ctx.phi(3.0, 1.0) * t4_z3
            + 0.5 * x * ctx.phi_tilde(0.0, 0.5) * t4_f1)
            .im;
    let j2 = x
        * ctx.r(2)
        * (0.5 * (1.0 + x) * ctx.phi(2.0, 2.0) * t4_z2 - f / 3.0 * ctx.phi(4.0, 3.0) * t4_z4
            + 0.5 * x * ctx.phi_tilde(1.0, 1.0) * t4_f2)
            .im;
    let j3 = sx * x / 6.0 * ctx.r(3) * (ctx.phi(3.0, 3.0) * t4_z3).im;
    let j4 = x * x / 24.0 * ctx.r(4) * (ctx.phi(4.0, 6.0) * t4_z4).im;

    // branch-odd real block
    let k = sx * ctx.i(1) * (ctx.phi(1.0, 0.0) * t3_z1 - 0.5 * f * ctx.phi(3.0, 1.0) * t3_z3).im
        - 0.5 * x * ctx.i(2) * ((ctx.phi_tilde(1.0, 1.0) - f / 3.0 * ctx.phi_tilde(3.0, 1.0)) * t3_f2).im
        + sx * x / 6.0 * ctx.i(3) * (ctx.phi(3.0, 3.0) * t3_z3).im
        - x * x / 24.0 * ctx.i(4) * (ctx.phi_tilde(3.0, 2.0) * t3_f4).im;

    // branch-odd real block, second order in the bias
    let l = sx
        * ctx.i(1)
        * ((1.0 + x) * ctx.phi(1.0, 0.0) * t3_z1 + 1.5 * f * ctx.phi(3.0, 1.0) * t3_z3
            - x * ctx.phi_tilde(0.0, 0.5) * t3_f1)
            .im
        - x * ctx.i(2)
            * (x * ctx.phi(2.0, 2.0) * t3_z2
                - ((0.5 + x) * ctx.phi_tilde(1.0, 1.0) + 5.0 * f / 6.0 * ctx.phi_tilde(3.0, 1.0)) * t3_f2)
                .im
        + sx * x / 6.0 * ctx.i(3) * (ctx.phi(3.0, 3.0) * t3_z3).im
        - x * x / 24.0 * ctx.i(4) * (ctx.phi_tilde(3.0, 2.0) * t3_f4).im;

    let bias = params.epsilon / params.delta_tilde;
    let inner_re = b1 + b2 + b3 + b4 + bias * bias * (e1 + e2) - sgn * k + sgn * 0.5 * bias * bias * l;
    // the i-block enters with the opposite branch sign; the series route
    // pins this convention on both branches
    let inner_im = -0.5 * bias * (ctx.phi(0.0, 0.0) * t4_z0).im - sgn * bias * (i1 + i2 + i3) - bias * (j1 + j2 + j3 + j4);

    let leading = 0.5 * (1.0 + f + 0.25 * f * f) * (-2.0 * rho_sq - 0.5 * x).exp();
    let zeta_part = if params.epsilon == 0.0 { 0.0 } else { params.epsilon / params.delta * zeta_theta(params, t)? };
    let gauss = (-0.5 * (x + rho_sq)).exp() / (2.0 * std::f64::consts::PI * rho_sq).sqrt();
    Ok(Complex64::new(leading + zeta_part + gauss * inner_re, gauss * inner_im))
}

/// Traces of the ell-th power of both reduced density matrices,
/// (Tr rho_O^ell, Tr rho_Q^ell); equality is the entropy-agreement
/// criterion for the pure composite state.
pub fn trace_power_check(params: &SystemParams, t: f64, branch: Branch, ell: u32, n_max: usize) -> Result<(f64, f64)> {
    if !(2..=6).contains(&ell) {
        return Err(Error::InvalidParameter(format!("ell = {ell} (supported range 2..=6)")));
    }
    let rho_o = crate::phase_space::oscillator_density(params, t, branch, n_max)?;
    let mut pow_o = rho_o.clone();
    for _ in 1..ell {
        pow_o = &pow_o * &rho_o;
    }
    let trace_o = pow_o.diagonal().iter().map(|c| c.re).sum::<f64>();

    let rec = QubitSolver::with_cutoff(params, n_max)?.record(t, branch, Method::Series)?;
    let s = branch.sign();
    let rho_q = nalgebra::Matrix2::new(
        Complex64::new(0.5 - s * rec.zeta, 0.0),
        s * rec.xi,
        s * rec.xi.conj(),
        Complex64::new(0.5 + s * rec.zeta, 0.0),
    );
    let mut pow_q = rho_q;
    for _ in 1..ell {
        pow_q *= rho_q;
    }
    let trace_q = pow_q.trace().re;
    Ok((trace_o, trace_q))
}

/// Solves the purity-deficit estimate S = -x (ln(x/N) - 1) for the weight
/// x in (0, 1) that leaks out of the dominant projector near an entropy
/// minimum; N is the retained expansion cutoff.
pub fn min_entropy_fraction(s: f64, n_cutoff: usize) -> Result<f64> {
    if !(s > 0.0) || s >= std::f64::consts::LN_2 {
        return Err(Error::InvalidParameter(format!("entropy {s} outside (0, ln 2)")));
    }
    if n_cutoff == 0 {
        return Err(Error::InvalidParameter("cutoff must be >= 1".into()));
    }
    let n = n_cutoff as f64;
    let deficit = |x: f64| -x * ((x / n).ln() - 1.0) - s;
    let (mut lo, mut hi) = (1e-300, 1.0 - 1e-12);
    if deficit(lo) > 0.0 || deficit(hi) < 0.0 {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deficit(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * hi.max(1e-30) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_strong() -> SystemParams {
        SystemParams::derive(1.0, 0.15, 0.01, 0.15, Complex64::new(2.0, 0.0)).unwrap()
    }

    #[test]
    fn zeta_series_vanishes_at_zero_time_and_zero_bias() {
        let p = fig_strong();
        assert_eq!(zeta_series(&p, 0.0).unwrap(), 0.0);
        let p0 = SystemParams::derive(1.0, 0.15, 0.0, 0.15, Complex64::new(2.0, 0.0)).unwrap();
        for &t in &[0.0, 17.0, 433.0] {
            assert_eq!(zeta_series(&p0, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn zeta_series_stable_under_cutoff_doubling() {
        let p = fig_strong();
        let n_max = p.mode_cutoff();
        let base = QubitSolver::with_cutoff(&p, n_max).unwrap();
        let fine = QubitSolver::with_cutoff(&p, 2 * n_max).unwrap();
        for &t in &[200.0, 500.0, 1500.0] {
            assert!((base.zeta_series(t) - fine.zeta_series(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn xi_series_initial_value_is_half_overlap() {
        // at t = 0 the coherence is half the overlap <-alpha|alpha>,
        // for alpha = 2: (1/2) e^(-8)
        let p = fig_strong();
        let xi0 = xi_series(&p, 0.0, Branch::Plus).unwrap();
        assert!((xi0.re - 0.5 * (-8.0f64).exp()).abs() < 1e-14);
        assert!(xi0.im.abs() < 1e-14);
        assert!((xi0.re - 1.6773e-4).abs() < 1e-8);
        let xim = xi_series(&p, 0.0, Branch::Minus).unwrap();
        assert!((xim - xi0).norm() < 1e-14);
    }

    #[test]
    fn xi_series_constant_at_zero_coupling_zero_bias() {
        // lambda = 0, eps = 0: every block rotates as cos +- i (-1)^n sin,
        // the product C^+ C^- collapses to 1 and xi stays (1/2) e^(-2|alpha|^2)
        let p = SystemParams::derive(1.0, 0.15, 0.0, 0.0, Complex64::new(1.2, 0.0)).unwrap();
        let solver = QubitSolver::new(&p).unwrap();
        let expect = 0.5 * (-2.0 * 1.44f64).exp();
        for &t in &[0.0, 3.7, 55.0, 411.0] {
            let xi = solver.xi_series(t, Branch::Plus);
            assert!((xi - Complex64::new(expect, 0.0)).norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn xi_series_stable_under_cutoff_doubling() {
        let p = fig_strong();
        let n_max = p.mode_cutoff();
        let base = QubitSolver::with_cutoff(&p, n_max).unwrap();
        let fine = QubitSolver::with_cutoff(&p, 2 * n_max).unwrap();
        let d = (base.xi_series(500.0, Branch::Plus) - fine.xi_series(500.0, Branch::Plus)).norm();
        assert!(d < 1e-10, "cutoff doubling moved xi by {d}");
    }

    #[test]
    fn record_entropies_and_identities() {
        let p = fig_strong();
        let rec = qubit_record(&p, 0.0, Branch::Plus, Method::Series).unwrap();
        assert!((rec.varpi - rec.xi.norm()).abs() < 1e-15);
        assert!((rec.varpi - 1.68e-4).abs() < 1e-6);
        assert!((rec.s_vn - std::f64::consts::LN_2).abs() < 1e-6);
        // identity s_lin = 1/2 - 2 varpi^2 against 1 - Tr rho^2 from the matrix
        let tr2 = (0.5 + rec.varpi).powi(2) + (0.5 - rec.varpi).powi(2);
        assert!((rec.s_lin - (1.0 - tr2)).abs() < 1e-12);
    }

    #[test]
    fn entropy_helpers_edge_values() {
        assert_eq!(von_neumann_entropy(0.5), 0.0);
        assert!((von_neumann_entropy(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(linear_entropy(0.5), 0.0);
        assert!((linear_entropy(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zeta_theta_zero_bias_and_bad_inputs() {
        let p0 = SystemParams::derive(1.0, 0.15, 0.0, 0.15, Complex64::new(2.0, 0.0)).unwrap();
        assert_eq!(zeta_theta(&p0, 123.0).unwrap(), 0.0);
        let frozen = SystemParams::derive(1.0, 0.0, 0.01, 0.15, Complex64::new(2.0, 0.0)).unwrap();
        assert!(zeta_theta(&frozen, 1.0).is_err());
    }

    #[test]
    fn theta_context_invariants() {
        let p = fig_strong();
        for &t in &[0.0, 10.0, 500.0, 2000.0] {
            let ctx = ThetaContext::new(&p, t).unwrap();
            let qmod = (-1.0 / (2.0 * p.rho_hat * p.rho_hat)).exp();
            assert!((ctx.q.norm() - qmod).abs() < 1e-14);
            assert!((ctx.frak_q.norm() - qmod).abs() < 1e-14);
            assert!((ctx.phi(3.0, 1.0).norm() - 1.0).abs() < 1e-14);
            assert!((ctx.phi_tilde(2.0, 0.5).norm() - 1.0).abs() < 1e-14);
            assert!((ctx.z[0].im + 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn zeta_theta_tracks_series_in_regime() {
        // agreement metric: time-averaged |series - theta| within 10% of
        // the series peak-to-peak amplitude
        let p = fig_strong();
        let solver = QubitSolver::new(&p).unwrap();
        let mut peak_lo = f64::INFINITY;
        let mut peak_hi = f64::NEG_INFINITY;
        let mut dev_sum = 0.0;
        let mut count = 0usize;
        for k in 0..=200 {
            let t = 10.0 * k as f64;
            let s = solver.zeta_series(t);
            let th = zeta_theta(&p, t).unwrap();
            peak_lo = peak_lo.min(s);
            peak_hi = peak_hi.max(s);
            dev_sum += (s - th).abs();
            count += 1;
        }
        let avg = dev_sum / count as f64;
        let band = 0.10 * (peak_hi - peak_lo);
        assert!(avg <= band, "avg |series-theta| = {avg}, band = {band}");
    }

    #[test]
    fn xi_theta_tracks_series_in_regime() {
        let p = fig_strong();
        let solver = QubitSolver::new(&p).unwrap();
        for branch in [Branch::Plus, Branch::Minus] {
            let mut lo = (f64::INFINITY, f64::INFINITY);
            let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut dev = (0.0f64, 0.0f64);
            let mut count = 0usize;
            for k in 0..=200 {
                let t = 10.0 * k as f64;
                let s = solver.xi_series(t, branch);
                let th = xi_theta(&p, t, branch).unwrap();
                lo = (lo.0.min(s.re), lo.1.min(s.im));
                hi = (hi.0.max(s.re), hi.1.max(s.im));
                dev = (dev.0 + (s.re - th.re).abs(), dev.1 + (s.im - th.im).abs());
                count += 1;
            }
            let avg_re = dev.0 / count as f64;
            let avg_im = dev.1 / count as f64;
            let band_re = 0.10 * (hi.0 - lo.0);
            let band_im = 0.10 * (hi.1 - lo.1);
            assert!(avg_re <= band_re, "{}: Re avg dev {avg_re} > {band_re}", branch.label());
            assert!(avg_im <= band_im, "{}: Im avg dev {avg_im} > {band_im}", branch.label());
        }
    }

    #[test]
    fn min_entropy_fraction_inverts_the_estimate() {
        // tuples chosen so the forward estimate stays below ln 2
        for &(x0, n) in &[(0.0092f64, 60usize), (0.0247, 45), (0.05, 30)] {
            let s = -x0 * ((x0 / n as f64).ln() - 1.0);
            let x = min_entropy_fraction(s, n).unwrap();
            assert!((x - x0).abs() < 1e-10, "x0={x0}: recovered {x}");
        }
        // s -> 0 drives x -> 0
        let x = min_entropy_fraction(1e-9, 50).unwrap();
        assert!(x < 1e-9);
        assert!(min_entropy_fraction(0.8, 50).is_err());
        assert!(min_entropy_fraction(0.1, 0).is_err());
    }
}
