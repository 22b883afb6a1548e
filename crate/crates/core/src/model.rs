//! System parameters and the block spectrum of the adiabatically
//! decoupled Hamiltonian
//!
//! `H = -(Delta/2) sigma_x - (epsilon/2) sigma_z + omega a'a + lambda sigma_z (a' + a)`.
//!
//! In the displaced Fock basis |n+-> = D'(+-lambda/omega)|n> the flip term
//! only connects |+1, n+> with |-1, n->, so H splits into 2x2 blocks with
//! tunnelling element delta_n = -(Delta_tilde/2) L_n(x) and bias
//! eps_tilde = epsilon/2, where x = (2 lambda/omega)^2 and
//! Delta_tilde = Delta e^(-x/2).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::specfun::{laguerre, poisson_weight};

/// Which quasi-Bell superposition the pair starts in:
/// (|+1, alpha> +- |-1, -alpha>)/sqrt(2).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    /// +1 for the plus branch, -1 for the minus branch.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

/// Raw couplings plus the derived scalars every routine needs.
#[derive(Clone, Copy, Debug)]
pub struct SystemParams {
    pub omega: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub alpha: Complex64,
    /// x = (2 lambda / omega)^2
    pub x: f64,
    /// alpha + lambda/omega
    pub alpha_hat: Complex64,
    /// |alpha_hat|
    pub rho_hat: f64,
    /// Delta e^(-x/2)
    pub delta_tilde: f64,
    /// epsilon / 2
    pub eps_tilde: f64,
}

/// Qualitative regime flags; advisory only, nothing refuses to compute.
#[derive(Clone, Copy, Debug)]
pub struct RegimeReport {
    /// Delta/omega < 1, required by the adiabatic decoupling
    pub adiabatic: bool,
    /// lambda/omega <= 0.2, where the theta closed forms were matched
    pub strong_coupling: bool,
    /// lambda/omega <= 0.1, where the linearized Laguerre Husimi form holds
    pub linear_laguerre: bool,
    /// lambda of order omega
    pub ultra_strong: bool,
    /// full parametric window of the theta closed forms
    pub theta_forms: bool,
}

impl SystemParams {
    /// Validates raw inputs and computes the derived scalars.
    ///
    /// delta = 0 is accepted (it freezes the qubit flip channel and is
    /// useful as a disabled-qubit check); the theta closed forms then
    /// refuse to evaluate since their time scale tau = Delta_tilde t
    /// degenerates.
    pub fn derive(omega: f64, delta: f64, epsilon: f64, lambda: f64, alpha: Complex64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("omega = {omega} (must be > 0)")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta = {delta} (must be >= 0)")));
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} (must be >= 0)")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} (must be >= 0)")));
        }
        if !alpha.re.is_finite() || !alpha.im.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
        }
        let g = lambda / omega;
        let x = 4.0 * g * g;
        let alpha_hat = alpha + Complex64::new(g, 0.0);
        Ok(Self {
            omega,
            delta,
            epsilon,
            lambda,
            alpha,
            x,
            alpha_hat,
            rho_hat: alpha_hat.norm(),
            delta_tilde: delta * (-0.5 * x).exp(),
            eps_tilde: 0.5 * epsilon,
        })
    }

    /// lambda / omega, the displacement of the oscillator basis.
    pub fn g(&self) -> f64 {
        self.lambda / self.omega
    }

    pub fn regimes(&self) -> RegimeReport {
        let rel = self.lambda / self.omega;
        let bias_ratio = if self.delta_tilde > 0.0 { self.epsilon / self.delta_tilde } else { f64::INFINITY };
        RegimeReport {
            adiabatic: self.delta / self.omega < 1.0,
            strong_coupling: rel <= 0.2,
            linear_laguerre: rel <= 0.1,
            ultra_strong: rel >= 0.5,
            theta_forms: bias_ratio <= 0.15 && (1.5..=2.5).contains(&self.rho_hat) && rel <= 0.2,
        }
    }

    /// Smallest Fock cutoff whose cumulative Poisson weight at mean
    /// rho_hat^2 reaches 1 - 1e-12, floored at rho^2 + 10 rho + 20.
    pub fn mode_cutoff(&self) -> usize {
        let r = self.rho_hat * self.rho_hat;
        let floor = (r + 10.0 * self.rho_hat + 20.0).ceil() as usize;
        let mut cum = 0.0;
        let mut n = 0usize;
        while cum < 1.0 - 1e-12 && n < 100_000 {
            cum += poisson_weight(n, r);
            n += 1;
        }
        n.max(floor)
    }

    /// Coherent amplitudes v_n = e^(-rho^2/2) alpha_hat^n / sqrt(n!) of the
    /// displaced initial state, for n = 0..=n_max.
    pub fn coherent_amplitudes(&self, n_max: usize) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(n_max + 1);
        let mut cur = Complex64::new((-0.5 * self.rho_hat * self.rho_hat).exp(), 0.0);
        v.push(cur);
        for n in 1..=n_max {
            cur *= self.alpha_hat / (n as f64).sqrt();
            v.push(cur);
        }
        v
    }
}

/// sin(chi t)/chi with the chi -> 0 limit taken explicitly.
pub(crate) fn sinc_chi(chi: f64, t: f64) -> f64 {
    let u = chi * t;
    if u.abs() < 1e-8 {
        t * (1.0 - u * u / 6.0)
    } else {
        u.sin() / chi
    }
}

/// Spectrum of one 2x2 block: tunnelling element, gap, dressed energies,
/// and the quench coefficients that build the time dependence.
#[derive(Clone, Copy, Debug)]
pub struct BlockSpectrum {
    pub n: usize,
    /// delta_n = -(Delta_tilde/2) L_n(x)
    pub delta_n: f64,
    /// chi_n = sqrt(delta_n^2 + eps_tilde^2)
    pub chi_n: f64,
    /// n omega - lambda^2/omega + chi_n
    pub energy_plus: f64,
    /// n omega - lambda^2/omega - chi_n
    pub energy_minus: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub b_plus: f64,
    pub b_minus: f64,
    eps_tilde: f64,
}

impl BlockSpectrum {
    pub fn new(params: &SystemParams, n: usize) -> Result<Self> {
        let delta_n = -0.5 * params.delta_tilde * laguerre(n, 0, params.x)?;
        let chi_n = delta_n.hypot(params.eps_tilde);
        let base = n as f64 * params.omega - params.lambda * params.lambda / params.omega;
        let parity = if n % 2 == 1 { -1.0 } else { 1.0 };
        let (a_plus, a_minus, b_plus, b_minus) = if chi_n == 0.0 {
            // fully degenerate block: both exponentials coincide, any split
            // summing to one is equivalent
            (0.5, 0.5, 0.5, 0.5)
        } else {
            let s = parity * delta_n;
            (
                (chi_n + params.eps_tilde + s) / (2.0 * chi_n),
                (chi_n + params.eps_tilde - s) / (2.0 * chi_n),
                (chi_n - params.eps_tilde + s) / (2.0 * chi_n),
                (chi_n - params.eps_tilde - s) / (2.0 * chi_n),
            )
        };
        Ok(Self {
            n,
            delta_n,
            chi_n,
            energy_plus: base + chi_n,
            energy_minus: base - chi_n,
            a_plus,
            a_minus,
            b_plus,
            b_minus,
            eps_tilde: params.eps_tilde,
        })
    }

    /// Time coefficient C_n^pm(t) = A_n^mp e^(i chi t) + B_n^pm e^(-i chi t).
    ///
    /// Evaluated as cos(chi t) + i (eps_tilde -+ (-1)^n delta_n) sin(chi t)/chi,
    /// which is the same combination written so the chi -> 0 limit stays
    /// finite. A single coefficient may exceed one (up to sqrt(2)); the
    /// conserved combination is |C_n^+|^2 + |C_n^-|^2 = 2.
    pub fn coeff_c(&self, t: f64, branch: Branch) -> Complex64 {
        let parity = if self.n % 2 == 1 { -1.0 } else { 1.0 };
        let u = self.chi_n * t;
        let im = (self.eps_tilde - branch.sign() * parity * self.delta_n) * sinc_chi(self.chi_n, t);
        Complex64::new(u.cos(), im)
    }

    /// Components of the upper-gap eigenvector on {|+1, n+>, |-1, n->},
    /// with the sign convention delta_n/|delta_n| := +1 at delta_n = 0.
    pub fn eigvec_plus(&self) -> [f64; 2] {
        self.eigvec(1.0)
    }

    /// Components of the lower-gap eigenvector on {|+1, n+>, |-1, n->}.
    pub fn eigvec_minus(&self) -> [f64; 2] {
        self.eigvec(-1.0)
    }

    fn eigvec(&self, which: f64) -> [f64; 2] {
        if self.chi_n == 0.0 {
            return [std::f64::consts::FRAC_1_SQRT_2, which * std::f64::consts::FRAC_1_SQRT_2];
        }
        let sign_delta = if self.delta_n < 0.0 { -1.0 } else { 1.0 };
        let c1 = ((self.chi_n - which * self.eps_tilde) / (2.0 * self.chi_n)).max(0.0).sqrt();
        let c2 = ((self.chi_n + which * self.eps_tilde) / (2.0 * self.chi_n)).max(0.0).sqrt();
        [c1, which * sign_delta * c2]
    }
}

/// Blocks 0..=n_max, shared read-only across threads.
#[derive(Clone, Debug)]
pub struct SpectrumTable {
    blocks: Vec<BlockSpectrum>,
}

impl SpectrumTable {
    pub fn build(params: &SystemParams, n_max: usize) -> Result<Self> {
        let mut blocks = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            blocks.push(BlockSpectrum::new(params, n)?);
        }
        Ok(Self { blocks })
    }

    pub fn block(&self, n: usize) -> &BlockSpectrum {
        &self.blocks[n]
    }

    pub fn blocks(&self) -> &[BlockSpectrum] {
        &self.blocks
    }

    /// Largest tabulated n.
    pub fn n_max(&self) -> usize {
        self.blocks.len() - 1
    }
}
