//! Oscillator reduced state, Husimi Q distribution, and quadrature moments.
//!
//! The oscillator density matrix keeps the rank-two form
//! `rho_O = (1/2)(|a><a| + |b><b|)` with
//!
//! `|a> = sum_n v_n C_n^pm e^(-i n omega t) |n+>`,
//! `|b> = sum_n v_n (-1)^n conj(C_n^mp) e^(-i n omega t) |n->`,
//!
//! so the Husimi function Q = <beta|rho_O|beta>/pi splits into two
//! positive Fourier-sum pieces evaluated directly (no matrix needed):
//!
//! `Q = (1/2 pi) e^(-rho^2) (e^(-|beta_hat|^2) |X|^2 + e^(-|beta_check|^2) |Y|^2)`,
//!
//! with beta_hat = beta + lambda/omega and beta_check = beta - lambda/omega.
//! Quadrature moments of the field operators E = (a - a')/(sqrt(2) i) and
//! B = (a + a')/sqrt(2) come in three routes: mode sums, theta closed
//! forms, and direct integration over a grid; the routes cross-check each
//! other in the tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Branch, SpectrumTable, SystemParams};
use crate::parallel::{map_indexed, map_indexed_serial};
use crate::qubit::ThetaContext;
use crate::specfun::{theta3, theta4, ThetaArgs};

/// Fock-space padding above the adaptive cutoff absorbing displacement
/// leakage.
pub const DISPLACEMENT_MARGIN: usize = 20;

fn expm(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = m.nrows();
    let norm = m.iter().map(|c| c.norm()).fold(0.0, f64::max) * dim as f64;
    let s = if norm > 0.5 { norm.log2().ceil() as i32 + 1 } else { 0 };
    let scaled = m.map(|c| c / 2f64.powi(s));
    let mut result = DMatrix::<Complex64>::identity(dim, dim);
    let mut term = DMatrix::<Complex64>::identity(dim, dim);
    for k in 1..=60 {
        term = (&term * &scaled) / Complex64::new(k as f64, 0.0);
        result += &term;
        if term.iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-20 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Truncated displacement operator D(g) = exp(g(a' - a)) for real g on a
/// dim-dimensional Fock block; the leading `used` columns must be unitary
/// to 1e-8 or the truncation is rejected.
pub fn displacement_matrix(g: f64, dim: usize, used: usize) -> Result<DMatrix<Complex64>> {
    if used > dim {
        return Err(Error::InvalidParameter(format!("used block {used} exceeds dimension {dim}")));
    }
    let mut gen = DMatrix::<Complex64>::zeros(dim, dim);
    for n in 0..dim - 1 {
        let amp = g * ((n + 1) as f64).sqrt();
        gen[(n + 1, n)] = Complex64::new(amp, 0.0);
        gen[(n, n + 1)] = Complex64::new(-amp, 0.0);
    }
    let d = expm(&gen);
    let gram = d.adjoint() * &d;
    let mut defect = 0.0f64;
    for i in 0..used {
        for j in 0..used {
            let expect = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[(i, j)] - Complex64::new(expect, 0.0)).norm());
        }
    }
    if defect > 1e-8 {
        return Err(Error::Normalization { defect, tol: 1e-8 });
    }
    Ok(d)
}

/// Oscillator reduced density matrix in the ordinary Fock basis,
/// truncated at n_max + margin. Hermitian and positive by construction;
/// a trace deficit beyond 1e-6 signals that n_max is too small.
pub fn oscillator_density(params: &SystemParams, t: f64, branch: Branch, n_max: usize) -> Result<DMatrix<Complex64>> {
    let dim = n_max + 1 + DISPLACEMENT_MARGIN;
    let spectrum = SpectrumTable::build(params, n_max)?;
    let amps = params.coherent_amplitudes(n_max);
    let opposite = match branch {
        Branch::Plus => Branch::Minus,
        Branch::Minus => Branch::Plus,
    };
    let rot = Complex64::new(0.0, -params.omega * t).exp();
    let mut a_disp = DVector::<Complex64>::zeros(dim);
    let mut b_disp = DVector::<Complex64>::zeros(dim);
    let mut phase = Complex64::new(1.0, 0.0);
    for n in 0..=n_max {
        let block = spectrum.block(n);
        let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
        a_disp[n] = amps[n] * block.coeff_c(t, branch) * phase;
        b_disp[n] = amps[n] * sign * block.coeff_c(t, opposite).conj() * phase;
        phase *= rot;
    }
    // |n+> = D'(g)|n> and |n-> = D'(-g)|n> = D(g)|n>
    let d_plus = displacement_matrix(params.g(), dim, n_max + 1)?;
    let a = d_plus.adjoint() * a_disp;
    let b = &d_plus * b_disp;
    let rho = (&a * a.adjoint() + &b * b.adjoint()) * Complex64::new(0.5, 0.0);
    let trace: f64 = rho.diagonal().iter().map(|c| c.re).sum();
    let deficit = (1.0 - trace).abs();
    if deficit > 1e-6 {
        return Err(Error::TraceDeficit { deficit, tol: 1e-6 });
    }
    Ok(rho)
}

/// Husimi value and the shifted arguments at one phase-space point.
#[derive(Clone, Copy, Debug)]
pub struct QPoint {
    pub beta: Complex64,
    pub beta_hat: Complex64,
    pub beta_check: Complex64,
    pub q_value: f64,
}

fn husimi_cutoff(mean: f64) -> usize {
    (mean + 12.0 * (mean + 1.0).sqrt() + 30.0).ceil() as usize
}

/// Exact Fourier-sum evaluation of Q at one point, using a prebuilt
/// spectrum table that must extend past the local Poisson-like cutoff.
pub fn q_series_with(params: &SystemParams, spectrum: &SpectrumTable, t: f64, branch: Branch, beta: Complex64) -> f64 {
    let g = params.g();
    let beta_hat = beta + Complex64::new(g, 0.0);
    let beta_check = beta - Complex64::new(g, 0.0);
    let rho_sq = params.rho_hat * params.rho_hat;
    let rot = Complex64::new(0.0, -params.omega * t).exp();
    let opposite = match branch {
        Branch::Plus => Branch::Minus,
        Branch::Minus => Branch::Plus,
    };

    let sum = |shift: Complex64, same: bool| -> Complex64 {
        let w = params.alpha_hat * shift.conj() * rot;
        let mean = w.norm();
        let mut base = Complex64::new((-0.5 * (rho_sq + shift.norm_sqr())).exp(), 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..=spectrum.n_max() {
            let block = spectrum.block(n);
            let coeff = if same {
                block.coeff_c(t, branch)
            } else {
                let c = block.coeff_c(t, opposite).conj();
                if n % 2 == 1 {
                    -c
                } else {
                    c
                }
            };
            acc += base * coeff;
            if n >= 10 && (n as f64) > mean && base.norm() * 2.0 < 1e-16 * (acc.norm() + 1.0) {
                break;
            }
            base *= w / (n as f64 + 1.0);
        }
        acc
    };

    let x_sum = sum(beta_hat, true);
    let y_sum = sum(beta_check, false);
    (x_sum.norm_sqr() + y_sum.norm_sqr()) / (2.0 * std::f64::consts::PI)
}

/// One-off exact Q at a point; builds the spectrum table it needs.
pub fn q_series(params: &SystemParams, t: f64, branch: Branch, beta: Complex64) -> Result<f64> {
    let reach = params.rho_hat * (beta.norm() + params.g() + 1.0);
    let spectrum = SpectrumTable::build(params, husimi_cutoff(reach))?;
    Ok(q_series_with(params, &spectrum, t, branch, beta))
}

/// Exact Q packaged with the shifted arguments.
pub fn q_point(params: &SystemParams, t: f64, branch: Branch, beta: Complex64) -> Result<QPoint> {
    let g = params.g();
    Ok(QPoint {
        beta,
        beta_hat: beta + Complex64::new(g, 0.0),
        beta_check: beta - Complex64::new(g, 0.0),
        q_value: q_series(params, t, branch, beta)?,
    })
}

/// Closed-form Q with the Laguerre polynomials linearized, valid for
/// lambda/omega up to about 0.1; first and second order bias corrections
/// included. The trigonometric arguments are genuinely complex.
pub fn q_linear(params: &SystemParams, t: f64, branch: Branch, beta: Complex64) -> f64 {
    let g = params.g();
    let x = params.x;
    let tau = params.delta_tilde * t;
    let rho_sq = params.rho_hat * params.rho_hat;
    let beta_hat = beta + Complex64::new(g, 0.0);
    let beta_check = beta - Complex64::new(g, 0.0);
    let rot = Complex64::new(0.0, -params.omega * t).exp();
    let bias = if params.epsilon == 0.0 { 0.0 } else { params.epsilon / params.delta_tilde };
    let half_tau = Complex64::new(0.5 * tau, 0.0);
    let skew = Complex64::new(0.5 * (1.0 - x) * tau, 0.0);
    let (cos_half, sin_half) = ((0.5 * x * tau).cos(), (0.5 * x * tau).sin());
    let sgn = branch.sign();

    let phi_t = params.alpha_hat * beta_hat.conj() * rot;
    let (phi_par, phi_perp) = (phi_t * cos_half, phi_t * sin_half);
    let x_sum = phi_par.exp() * (phi_perp - half_tau).cos()
        + Complex64::new(0.0, sgn) * (-phi_par).exp() * (phi_perp + half_tau).sin()
        - Complex64::new(0.0, bias)
            * phi_par.exp()
            * ((phi_perp - half_tau).sin() + x * phi_t * (phi_perp - skew).sin())
        - Complex64::new(0.0, sgn * 0.5 * bias * bias)
            * (-phi_par).exp()
            * ((phi_perp + half_tau).sin() - 2.0 * x * phi_t * (phi_perp + skew).sin());

    let psi_t = params.alpha_hat * beta_check.conj() * rot;
    let (psi_par, psi_perp) = (psi_t * cos_half, psi_t * sin_half);
    let y_sum = (-psi_par).exp() * (psi_perp + half_tau).cos()
        - Complex64::new(0.0, sgn) * psi_par.exp() * (psi_perp - half_tau).sin()
        - Complex64::new(0.0, bias)
            * (-psi_par).exp()
            * ((psi_perp + half_tau).sin() - x * psi_t * (psi_perp + skew).sin())
        + Complex64::new(0.0, sgn * 0.5 * bias * bias)
            * psi_par.exp()
            * ((psi_perp - half_tau).sin() + 2.0 * x * psi_t * (psi_perp - skew).sin());

    ((-rho_sq - beta_hat.norm_sqr()).exp() * x_sum.norm_sqr() + (-rho_sq - beta_check.norm_sqr()).exp() * y_sum.norm_sqr())
        / (2.0 * std::f64::consts::PI)
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on
/// the recurrence for P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k as f64 + 1.0) * z * p1 - k as f64 * p2) / (k as f64 + 1.0);
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Quadrature rule of a phase-space grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridRule {
    /// Tensor Gauss-Legendre, for integration
    GaussLegendre,
    /// Uniformly spaced with trapezoid weights, for plotting
    Trapezoid,
}

/// Which Husimi evaluator fills a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QMethod {
    Series,
    Linear,
}

impl QMethod {
    pub fn label(self) -> &'static str {
        match self {
            QMethod::Series => "series",
            QMethod::Linear => "linear",
        }
    }
}

/// Rectangular phase-space window and resolution.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub center: Complex64,
    pub half_width: f64,
    pub n_re: usize,
    pub n_im: usize,
    pub rule: GridRule,
}

impl GridSpec {
    /// Square box around the origin wide enough for every displaced lobe:
    /// half-width rho_hat + lambda/omega + 6, 301 (default) or 601 (fine)
    /// Gauss-Legendre points per axis.
    pub fn adaptive(params: &SystemParams, fine: bool) -> Self {
        let n = if fine { 601 } else { 301 };
        Self {
            center: Complex64::new(0.0, 0.0),
            half_width: params.rho_hat + params.g() + 6.0,
            n_re: n,
            n_im: n,
            rule: GridRule::GaussLegendre,
        }
    }

    /// Normalization defect tolerable at this resolution: 1e-4 on the
    /// default Gauss-Legendre box, 1e-6 on the fine one, 1e-3 on trapezoid
    /// plotting grids.
    pub fn norm_tolerance(&self) -> f64 {
        match self.rule {
            GridRule::GaussLegendre => {
                if self.n_re.min(self.n_im) >= 601 {
                    1e-6
                } else {
                    1e-4
                }
            }
            GridRule::Trapezoid => 1e-3,
        }
    }

    fn axis(&self, n: usize, center: f64) -> (Vec<f64>, Vec<f64>) {
        match self.rule {
            GridRule::GaussLegendre => {
                let (x, w) = gauss_legendre(n);
                (
                    x.iter().map(|xi| center + self.half_width * xi).collect(),
                    w.iter().map(|wi| self.half_width * wi).collect(),
                )
            }
            GridRule::Trapezoid => {
                let h = 2.0 * self.half_width / (n - 1) as f64;
                let nodes = (0..n).map(|i| center - self.half_width + i as f64 * h).collect();
                let weights = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
                (nodes, weights)
            }
        }
    }
}

/// Husimi values sampled on a grid, with the quadrature weights that
/// turn sums over it into phase-space integrals.
#[derive(Clone, Debug)]
pub struct QGrid {
    pub params: SystemParams,
    pub t: f64,
    pub branch: Branch,
    pub spec: GridSpec,
    pub method: QMethod,
    pub re_nodes: Vec<f64>,
    pub im_nodes: Vec<f64>,
    pub re_weights: Vec<f64>,
    pub im_weights: Vec<f64>,
    /// row-major, index = i_im * n_re + i_re
    pub values: Vec<f64>,
    /// Fock modes resolved for the farthest grid corner (0 for the
    /// closed-form evaluator, which sums nothing).
    pub n_modes: usize,
}

impl QGrid {
    /// Fills the grid, parallelizing over rows; output is identical to
    /// the serial builder.
    pub fn build(params: &SystemParams, t: f64, branch: Branch, spec: &GridSpec, method: QMethod) -> Result<Self> {
        Self::assemble(params, t, branch, spec, method, false)
    }

    /// Fills the grid on the calling thread only.
    pub fn build_serial(params: &SystemParams, t: f64, branch: Branch, spec: &GridSpec, method: QMethod) -> Result<Self> {
        Self::assemble(params, t, branch, spec, method, true)
    }

    fn assemble(params: &SystemParams, t: f64, branch: Branch, spec: &GridSpec, method: QMethod, serial: bool) -> Result<Self> {
        let (re_nodes, re_weights) = spec.axis(spec.n_re, spec.center.re);
        let (im_nodes, im_weights) = spec.axis(spec.n_im, spec.center.im);
        let corner_re = spec.center.re.abs() + spec.half_width + params.g();
        let corner_im = spec.center.im.abs() + spec.half_width;
        let reach = params.rho_hat * corner_re.hypot(corner_im);
        let spectrum = match method {
            QMethod::Series => Some(SpectrumTable::build(params, husimi_cutoff(reach))?),
            QMethod::Linear => None,
        };
        let n_modes = spectrum.as_ref().map_or(0, |table| table.n_max());
        let row = |i: usize| -> Vec<f64> {
            let im = im_nodes[i];
            re_nodes
                .iter()
                .map(|&re| {
                    let beta = Complex64::new(re, im);
                    match &spectrum {
                        Some(table) => q_series_with(params, table, t, branch, beta),
                        None => q_linear(params, t, branch, beta),
                    }
                })
                .collect()
        };
        let rows = if serial {
            map_indexed_serial(spec.n_im, row)
        } else {
            map_indexed(spec.n_im, row)
        };
        Ok(Self {
            params: *params,
            t,
            branch,
            spec: *spec,
            method,
            re_nodes,
            im_nodes,
            re_weights,
            im_weights,
            values: rows.into_iter().flatten().collect(),
            n_modes,
        })
    }

    pub fn value(&self, i_re: usize, i_im: usize) -> f64 {
        self.values[i_im * self.spec.n_re + i_re]
    }

    /// Integral of Q over the window.
    pub fn integrate(&self) -> f64 {
        self.integrate_with(|_, q| q)
    }

    /// Integral of f(beta, Q(beta)) over the window.
    pub fn integrate_with<F: Fn(Complex64, f64) -> f64>(&self, f: F) -> f64 {
        let mut total = 0.0;
        for (i_im, (&im, &w_im)) in self.im_nodes.iter().zip(&self.im_weights).enumerate() {
            let mut row = 0.0;
            for (i_re, (&re, &w_re)) in self.re_nodes.iter().zip(&self.re_weights).enumerate() {
                row += w_re * f(Complex64::new(re, im), self.value(i_re, i_im));
            }
            total += w_im * row;
        }
        total
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Which route produced a moment record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentMethod {
    Series,
    Theta,
    Quadrature,
}

impl MomentMethod {
    pub fn label(self) -> &'static str {
        match self {
            MomentMethod::Series => "series",
            MomentMethod::Theta => "theta",
            MomentMethod::Quadrature => "quadrature",
        }
    }
}

/// First and second quadrature moments and the uncertainty product.
#[derive(Clone, Copy, Debug)]
pub struct MomentRecord {
    pub t: f64,
    pub branch: Branch,
    /// <E>
    pub e1: f64,
    /// <B>
    pub b1: f64,
    /// <E^2>
    pub e2: f64,
    /// <B^2>
    pub b2: f64,
    /// sqrt(Var E * Var B), at least 1/2
    pub uncertainty: f64,
    pub method: MomentMethod,
}

impl MomentRecord {
    fn close(t: f64, branch: Branch, e1: f64, b1: f64, e2: f64, b2: f64, method: MomentMethod) -> Self {
        let var_e = e2 - e1 * e1;
        let var_b = b2 - b1 * b1;
        Self {
            t,
            branch,
            e1,
            b1,
            e2,
            b2,
            uncertainty: (var_e * var_b).max(0.0).sqrt(),
            method,
        }
    }
}

/// Mode-sum moments:
///
/// `<E> = (1/sqrt 2) sum_n P(n) Im curlG_{n;1}`,
/// `<B> = (1/sqrt 2) sum_n P(n) Re curlG_{n;1} +- sqrt(2x) zeta`,
/// `<E^2> = rho^2 + (1 - sum_n P(n) Re G_{n;2})/2`,
/// `<B^2> = rho^2 + (1 + x + sum_n P(n) Re(G_{n;2} - 2 sqrt(x) G_{n;1}))/2`,
///
/// with G (curlG) the +/- (-) pairings of C-coefficient products.
pub fn moments_series(params: &SystemParams, t: f64, branch: Branch) -> Result<MomentRecord> {
    let n_max = params.mode_cutoff();
    let spectrum = SpectrumTable::build(params, n_max + 2)?;
    let opposite = match branch {
        Branch::Plus => Branch::Minus,
        Branch::Minus => Branch::Plus,
    };
    let c_same: Vec<Complex64> = (0..=n_max + 2).map(|n| spectrum.block(n).coeff_c(t, branch)).collect();
    let c_opp: Vec<Complex64> = (0..=n_max + 2).map(|n| spectrum.block(n).coeff_c(t, opposite)).collect();
    let rho_sq = params.rho_hat * params.rho_hat;
    let a1 = params.alpha_hat * Complex64::new(0.0, -params.omega * t).exp();
    let a2 = a1 * a1;

    let mut sum_g1 = Complex64::new(0.0, 0.0);
    let mut sum_curl_g1 = Complex64::new(0.0, 0.0);
    let mut sum_g2 = Complex64::new(0.0, 0.0);
    let mut zeta = 0.0;
    for n in 0..=n_max {
        let p = crate::specfun::poisson_weight(n, rho_sq);
        let same_pair_1 = c_same[n + 1] * c_same[n].conj();
        let opp_pair_1 = c_opp[n + 1].conj() * c_opp[n];
        sum_g1 += p * a1 * (same_pair_1 + opp_pair_1);
        sum_curl_g1 += p * a1 * (same_pair_1 - opp_pair_1);
        sum_g2 += p * a2 * (c_same[n + 2] * c_same[n].conj() + c_opp[n + 2].conj() * c_opp[n]);
        let block = spectrum.block(n);
        let s = crate::model::sinc_chi(block.chi_n, t);
        let term = p * block.delta_n * s * s;
        zeta += if n % 2 == 1 { -term } else { term };
    }
    zeta *= params.eps_tilde;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let e1 = inv_sqrt2 * sum_curl_g1.im;
    let b1 = inv_sqrt2 * sum_curl_g1.re + branch.sign() * (2.0 * params.x).sqrt() * zeta;
    let e2 = rho_sq + 0.5 * (1.0 - sum_g2.re);
    let b2 = rho_sq + 0.5 * (1.0 + params.x + (sum_g2 - 2.0 * params.x.sqrt() * sum_g1).re);
    Ok(MomentRecord::close(t, branch, e1, b1, e2, b2, MomentMethod::Series))
}

/// Theta-closed-form moments, built from the same context as the qubit
/// closed forms; valid in the same parameter window.
pub fn moments_theta(params: &SystemParams, t: f64, branch: Branch) -> Result<MomentRecord> {
    if params.delta_tilde <= 0.0 {
        return Err(Error::InvalidParameter(
            "theta closed forms need delta > 0 (their clock is tau = delta_tilde t)".into(),
        ));
    }
    let ctx = ThetaContext::new(params, t)?;
    let rho_sq = params.rho_hat * params.rho_hat;
    let (f, x) = (ctx.f, params.x);
    let sgn = branch.sign();
    let bias = params.epsilon / params.delta_tilde;
    let bias_sq = bias * bias;

    let t3_z1 = theta3(ThetaArgs::new(ctx.q, ctx.z[1]))?;
    let t3_z2 = theta3(ThetaArgs::new(ctx.q, ctx.z[2]))?;
    let t3_z3 = theta3(ThetaArgs::new(ctx.q, ctx.z[3]))?;
    let t3_f1 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[0]))?;
    let t3_f2 = theta3(ThetaArgs::new(ctx.frak_q, ctx.frak_z[1]))?;
    let t4_z1 = theta4(ThetaArgs::new(ctx.q, ctx.z[1]))?;
    let t4_z2 = theta4(ThetaArgs::new(ctx.q, ctx.z[2]))?;
    let t4_z3 = theta4(ThetaArgs::new(ctx.q, ctx.z[3]))?;
    let t4_z4 = theta4(ThetaArgs::new(ctx.q, ctx.z[4]))?;
    let t4_f1 = theta4(ThetaArgs::new(ctx.frak_q, ctx.frak_z[0]))?;
    let t4_f2 = theta4(ThetaArgs::new(ctx.frak_q, ctx.frak_z[1]))?;

    let combo_t = ((2.0 + x + x * x) * ctx.phi_tilde(0.0, 0.5)
        + (2.0 + 3.5 * x) * f * ctx.phi_tilde(2.0, 0.5)
        + 1.5 * f * f * ctx.phi_tilde(4.0, 0.5))
        * t3_f1
        + x * (1.0 + x) * ctx.phi(1.0, 0.0) * t3_z1
        + 1.5 * x * f * ctx.phi(3.0, 1.0) * t3_z3;
    let combo_h = (x * (1.0 + x) * ctx.phi_tilde(0.0, 0.5) - 1.5 * x * f * ctx.phi_tilde(2.0, 0.5)) * t4_f1
        - x * (1.0 + x) * ctx.phi(1.0, 0.0) * t4_z1
        + 1.5 * x * f * ctx.phi(3.0, 1.0) * t4_z3;

    let combo_t2 = (1.0 - bias_sq * x * x) * ctx.phi_tilde(1.0, 1.0) * t3_f2 + bias_sq * x * x * ctx.phi(2.0, 1.0) * t3_z2;
    let combo_h2 = ((1.0 - 0.5 * bias_sq * (1.0 + 2.0 * x + 5.5 * x * x)) * ctx.phi_tilde(1.0, 1.0)
        + bias_sq * f * (1.0 + 4.0 * x) * ctx.phi_tilde(3.0, 1.0)
        - 1.25 * bias_sq * f * f * ctx.phi_tilde(5.0, 1.0))
        * t4_f2
        - bias_sq * x * (1.0 + 2.75 * x) * ctx.phi(2.0, 1.0) * t4_z2
        + 2.5 * bias_sq * x * f * ctx.phi(4.0, 3.0) * t4_z4;
    let combo_t1 = (1.0 - bias_sq * (1.0 + x)) * ctx.phi(1.0, 0.0) * t3_z1 - 2.0 * bias_sq * f * ctx.phi(3.0, 1.0) * t3_z3
        + bias_sq * ((1.0 + x) * ctx.phi_tilde(0.0, 0.5) + 2.0 * f * ctx.phi_tilde(2.0, 0.5)) * t3_f1;
    let combo_h1 = (1.0 - 0.5 * bias_sq * (1.0 + x)) * ctx.phi(1.0, 0.0) * t4_z1 + bias_sq * f * ctx.phi(3.0, 1.0) * t4_z3
        - 0.5 * bias_sq * x * ctx.phi_tilde(0.0, 0.5) * t4_f1;

    let pref_first = (-0.5 * rho_sq).exp() / (4.0 * std::f64::consts::PI * rho_sq).sqrt();
    let pref_second = (-0.5 * rho_sq).exp() / (2.0 * std::f64::consts::PI * rho_sq).sqrt();
    let zeta = crate::qubit::zeta_theta(params, t)?;

    let e1 = -bias * pref_first * (ctx.r(1) * combo_t.im - sgn * ctx.i(1) * combo_h.re);
    let b1 = bias * pref_first * (ctx.i(1) * combo_t.im + sgn * ctx.r(1) * combo_h.re) + sgn * (2.0 * x).sqrt() * zeta;
    let second_core = ctx.r(2) * combo_t2.re + sgn * ctx.i(2) * combo_h2.im;
    let e2 = 0.5 + rho_sq - pref_second * second_core;
    let b2 = 0.5 * (1.0 + x)
        + rho_sq
        + pref_second * (second_core - 2.0 * x.sqrt() * (ctx.r(1) * combo_t1.re - sgn * ctx.i(1) * combo_h1.im));
    Ok(MomentRecord::close(t, branch, e1, b1, e2, b2, MomentMethod::Theta))
}

/// Moments by direct quadrature of an already-built Husimi grid, with the
/// antinormal-order corrections:
///
/// `<E> = sqrt 2 int Im(beta) Q`, `<B> = sqrt 2 int Re(beta) Q`,
/// `<E^2> = 2 int Im(beta)^2 Q - 1/2`, `<B^2> = 2 int Re(beta)^2 Q - 1/2`.
pub fn moments_from_grid(grid: &QGrid) -> MomentRecord {
    let sqrt2 = std::f64::consts::SQRT_2;
    let e1 = sqrt2 * grid.integrate_with(|b, q| b.im * q);
    let b1 = sqrt2 * grid.integrate_with(|b, q| b.re * q);
    let e2 = 2.0 * grid.integrate_with(|b, q| b.im * b.im * q) - 0.5;
    let b2 = 2.0 * grid.integrate_with(|b, q| b.re * b.re * q) - 0.5;
    MomentRecord::close(grid.t, grid.branch, e1, b1, e2, b2, MomentMethod::Quadrature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::{Method, QubitSolver};

    fn fig_strong() -> SystemParams {
        SystemParams::derive(1.0, 0.15, 0.01, 0.15, Complex64::new(2.0, 0.0)).unwrap()
    }

    fn fig_husimi() -> SystemParams {
        SystemParams::derive(1.0, 0.15, 0.01, 0.08, Complex64::new(2.0, 0.0)).unwrap()
    }

    fn fig_moments() -> SystemParams {
        SystemParams::derive(1.0, 0.15, 0.01, 0.16, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        for k in [0usize, 2, 4, 6, 8] {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let exact = 2.0 / (k as f64 + 1.0);
            assert!((got - exact).abs() < 1e-14, "k={k}: {got} vs {exact}");
        }
        let odd: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(3)).sum();
        assert!(odd.abs() < 1e-15);
        // degree 2n is the first one that misses
        let got10: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(10)).sum();
        assert!((got10 - 2.0 / 11.0).abs() > 1e-6);
    }

    #[test]
    fn displacement_matrix_is_unitary_and_inverts() {
        let d = displacement_matrix(0.3, 50, 30).unwrap();
        let dinv = displacement_matrix(-0.3, 50, 30).unwrap();
        let prod = &d * &dinv;
        for i in 0..30 {
            for j in 0..30 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
        // coherent state from the vacuum: column 0 is e^(-g^2/2) g^n/sqrt(n!)
        let g = 0.3f64;
        for n in 0..10 {
            let expect = (-0.5 * g * g).exp() * g.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>().sqrt();
            assert!((d[(n, 0)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn density_zero_coupling_is_coherent_mixture() {
        let p = SystemParams::derive(1.0, 0.15, 0.0, 0.0, Complex64::new(1.5, 0.0)).unwrap();
        let n_max = p.mode_cutoff();
        let rho = oscillator_density(&p, 0.0, Branch::Plus, n_max).unwrap();
        let dim = rho.nrows();
        let coherent = |a: f64| -> DVector<Complex64> {
            DVector::from_fn(dim, |n, _| {
                let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
                let mag = (-0.5 * a * a + n as f64 * a.abs().ln() - 0.5 * ln_fact).exp();
                Complex64::new(if a < 0.0 && n % 2 == 1 { -mag } else { mag }, 0.0)
            })
        };
        let plus = coherent(1.5);
        let minus = coherent(-1.5);
        let expect = (&plus * plus.adjoint() + &minus * minus.adjoint()) * Complex64::new(0.5, 0.0);
        let defect = (&rho - &expect).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-10, "defect {defect}");
    }

    #[test]
    fn density_trace_hermiticity_and_purity() {
        let p = fig_strong();
        let n_max = p.mode_cutoff();
        let rho = oscillator_density(&p, 300.0, Branch::Plus, n_max).unwrap();
        let trace: f64 = rho.diagonal().iter().map(|c| c.re).sum();
        assert!((trace - 1.0).abs() < 1e-10);
        let herm_defect = (&rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(herm_defect < 1e-14);
        let purity = (&rho * &rho).diagonal().iter().map(|c| c.re).sum::<f64>();
        let rec = QubitSolver::new(&p).unwrap().record(300.0, Branch::Plus, Method::Series).unwrap();
        let expect = (0.5 + rec.varpi).powi(2) + (0.5 - rec.varpi).powi(2);
        assert!((purity - expect).abs() < 1e-8, "purity {purity} vs {expect}");
    }

    #[test]
    fn q_series_initial_state_is_two_gaussians() {
        // at t = 0 the reduction is the bare cat mixture for any coupling,
        // so Q = (e^(-|b-a|^2) + e^(-|b+a|^2))/(2 pi)
        let p = fig_husimi();
        let alpha = Complex64::new(2.0, 0.0);
        for &(re, im) in &[(0.0, 0.0), (2.0, 0.0), (-2.0, 0.5), (1.3, -1.1), (4.0, 2.0)] {
            let beta = Complex64::new(re, im);
            let expect = ((-(beta - alpha).norm_sqr()).exp() + (-(beta + alpha).norm_sqr()).exp())
                / (2.0 * std::f64::consts::PI);
            let got = q_series(&p, 0.0, Branch::Plus, beta).unwrap();
            assert!((got - expect).abs() < 1e-12, "beta={beta}: {got} vs {expect}");
        }
        let at_alpha = q_series(&p, 0.0, Branch::Plus, alpha).unwrap();
        let expect = (1.0 + (-16.0f64).exp()) / (2.0 * std::f64::consts::PI);
        assert!((at_alpha - expect).abs() < 1e-12);
    }

    #[test]
    fn q_series_within_husimi_bounds() {
        let p = fig_husimi();
        let cap = 1.0 / std::f64::consts::PI + 1e-12;
        for &t in &[0.0, 300.0, 900.0] {
            for &(re, im) in &[(0.0, 0.0), (2.1, 0.3), (-1.0, -2.0), (0.5, 1.7)] {
                let q = q_series(&p, t, Branch::Minus, Complex64::new(re, im)).unwrap();
                assert!(q >= 0.0 && q <= cap, "t={t} beta=({re},{im}): {q}");
            }
        }
    }

    #[test]
    fn q_linear_matches_series_at_zero_bias_initial_time() {
        let p = SystemParams::derive(1.0, 0.15, 0.0, 0.08, Complex64::new(2.0, 0.0)).unwrap();
        for &(re, im) in &[(0.0, 0.0), (2.0, 0.1), (-1.9, -0.4), (0.8, 2.2)] {
            let beta = Complex64::new(re, im);
            let lin = q_linear(&p, 0.0, Branch::Plus, beta);
            let ser = q_series(&p, 0.0, Branch::Plus, beta).unwrap();
            assert!((lin - ser).abs() < 1e-10, "beta=({re},{im}): {lin} vs {ser}");
        }
    }

    #[test]
    fn q_linear_tracks_series_at_weak_coupling() {
        // the dominant deviation is the dropped quadratic Laguerre term,
        // whose phase error grows linearly in t; 12% of the per-time peak
        // holds through the first revivals at lambda = 0.08
        let p = fig_husimi();
        let spec = GridSpec {
            center: Complex64::new(0.0, 0.0),
            half_width: p.rho_hat + p.g() + 4.0,
            n_re: 81,
            n_im: 81,
            rule: GridRule::Trapezoid,
        };
        for &t in &[300.0, 900.0] {
            let series = QGrid::build(&p, t, Branch::Plus, &spec, QMethod::Series).unwrap();
            let linear = QGrid::build(&p, t, Branch::Plus, &spec, QMethod::Linear).unwrap();
            let peak = series.max_value();
            let sup = series
                .values
                .iter()
                .zip(&linear.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(sup <= 0.12 * peak, "t={t}: sup {sup}, peak {peak}");
        }
    }

    #[test]
    fn grid_normalization_default() {
        let p = fig_husimi();
        let grid = QGrid::build(&p, 300.0, Branch::Plus, &GridSpec::adaptive(&p, false), QMethod::Series).unwrap();
        let norm = grid.integrate();
        assert!((norm - 1.0).abs() < 1e-4, "norm {norm}");
        assert!(grid.min_value() >= 0.0);
        assert!(grid.max_value() <= 1.0 / std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn grid_parallel_and_serial_agree_bitwise() {
        let p = fig_husimi();
        let spec = GridSpec {
            center: Complex64::new(0.0, 0.0),
            half_width: 6.0,
            n_re: 41,
            n_im: 37,
            rule: GridRule::GaussLegendre,
        };
        let par = QGrid::build(&p, 120.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        let ser = QGrid::build_serial(&p, 120.0, Branch::Plus, &spec, QMethod::Series).unwrap();
        assert_eq!(par.values, ser.values);
    }

    #[test]
    fn moments_vacuum_is_minimum_uncertainty() {
        // disabled qubit, no displacement: the state stays the vacuum
        let p = SystemParams::derive(1.0, 0.0, 0.0, 0.0, Complex64::new(0.0, 0.0)).unwrap();
        for &t in &[0.0, 42.0] {
            let m = moments_series(&p, t, Branch::Plus).unwrap();
            assert!(m.e1.abs() < 1e-14 && m.b1.abs() < 1e-14);
            assert!((m.e2 - 0.5).abs() < 1e-13 && (m.b2 - 0.5).abs() < 1e-13);
            assert!((m.uncertainty - 0.5).abs() < 1e-13);
        }
        // displaced vacuum at t = 0 keeps both variances at 1/2
        let pd = SystemParams::derive(1.0, 0.15, 0.02, 0.3, Complex64::new(0.0, 0.0)).unwrap();
        let m = moments_series(&pd, 0.0, Branch::Plus).unwrap();
        assert!((m.e2 - m.e1 * m.e1 - 0.5).abs() < 1e-12);
        assert!((m.b2 - m.b1 * m.b1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn moments_match_quadrature() {
        let p = fig_moments();
        let t = 200.0;
        for branch in [Branch::Plus, Branch::Minus] {
            let series = moments_series(&p, t, branch).unwrap();
            let grid = QGrid::build(&p, t, branch, &GridSpec::adaptive(&p, false), QMethod::Series).unwrap();
            let quad = moments_from_grid(&grid);
            assert!((series.e1 - quad.e1).abs() < 1e-6, "{}: e1 {} vs {}", branch.label(), series.e1, quad.e1);
            assert!((series.b1 - quad.b1).abs() < 1e-6, "{}: b1 {} vs {}", branch.label(), series.b1, quad.b1);
            assert!((series.e2 - quad.e2).abs() < 1e-6, "{}: e2 {} vs {}", branch.label(), series.e2, quad.e2);
            assert!((series.b2 - quad.b2).abs() < 1e-6, "{}: b2 {} vs {}", branch.label(), series.b2, quad.b2);
        }
    }

    #[test]
    fn moments_theta_matches_series_at_initial_time() {
        let p = fig_moments();
        let series = moments_series(&p, 0.0, Branch::Plus).unwrap();
        let theta = moments_theta(&p, 0.0, Branch::Plus).unwrap();
        assert!((theta.e2 - series.e2).abs() < 0.02 * series.e2.abs());
        assert!((theta.b2 - series.b2).abs() < 0.02 * series.b2.abs());
        assert!((theta.e1 - series.e1).abs() < 1e-3);
        assert!((theta.b1 - series.b1).abs() < 1e-3);
    }

    #[test]
    fn moments_zero_bias_first_moments_vanish() {
        let p = SystemParams::derive(1.0, 0.15, 0.0, 0.16, Complex64::new(1.0, 0.0)).unwrap();
        for &t in &[0.0, 77.0, 350.0] {
            let m = moments_series(&p, t, Branch::Plus).unwrap();
            assert!(m.e1.abs() < 1e-12 && m.b1.abs() < 1e-12, "t={t}");
            let th = moments_theta(&p, t, Branch::Plus).unwrap();
            assert!(th.e1.abs() < 1e-12 && th.b1.abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn uncertainty_floor_holds() {
        let p = fig_moments();
        for &t in &[0.0, 50.0, 200.0, 800.0] {
            for branch in [Branch::Plus, Branch::Minus] {
                let m = moments_series(&p, t, branch).unwrap();
                assert!(m.uncertainty >= 0.5 - 1e-9, "t={t} {}: {}", branch.label(), m.uncertainty);
                assert!(m.e2 - m.e1 * m.e1 >= 0.5 - 1e-9);
                assert!(m.b2 - m.b1 * m.b1 >= 0.5 - 1e-9);
            }
        }
    }
}
