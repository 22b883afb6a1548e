//! Special-function kernels: associated Laguerre polynomials, overlaps of
//! oppositely displaced Fock states, Jacobi theta functions, and number
//! weights.
//!
//! Laguerre values come from the stable three-term recurrence
//! `(k+1) L_{k+1}^j = (2k + j + 1 - x) L_k^j - (k + j) L_{k-1}^j`;
//! the direct alternating sum is kept only as a test oracle. Factorial
//! ratios go through cumulative log sums so no raw factorial is formed
//! past n = 20. Theta functions are summed symmetrically,
//! `theta3(q, z) = sum_n q^(n^2) exp(2 i n z)` and `theta4` with an extra
//! `(-1)^n`, truncated adaptively against an absolute term tolerance.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const LN_FACT_TABLE_LEN: usize = 1025;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE_LEN);
        t.push(0.0);
        for n in 1..LN_FACT_TABLE_LEN {
            t.push(t[n - 1] + (n as f64).ln());
        }
        t
    })
}

/// ln(n!) via tabulated cumulative log sums.
pub fn ln_factorial(n: usize) -> f64 {
    let table = ln_fact_table();
    if n < table.len() {
        return table[n];
    }
    let mut acc = *table.last().unwrap();
    for k in table.len()..=n {
        acc += (k as f64).ln();
    }
    acc
}

/// Binomial coefficient as f64 through log factorials.
#[cfg(test)]
pub(crate) fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

/// Associated Laguerre polynomial L_n^j(x) by three-term recurrence.
pub fn laguerre(n: usize, j: usize, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("laguerre argument x = {x}")));
    }
    let jf = j as f64;
    if n == 0 {
        return Ok(1.0);
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + jf - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + jf + 1.0 - x) * cur - (kf + jf) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    if cur.is_finite() {
        Ok(cur)
    } else {
        Err(Error::Overflow { what: "laguerre recurrence", term: n })
    }
}

/// Overlap of oppositely displaced Fock states, as a function of
/// x = (2 lambda / omega)^2.
///
/// With |n+> and |m-> the Fock states displaced by -lambda/omega and
/// +lambda/omega respectively,
///   <m-|n+> = (-1)^(m-n) e^(-x/2) x^((m-n)/2) sqrt(n!/m!) L_n^(m-n)(x)
/// for m >= n, and the same expression without the sign factor with
/// (m, n) swapped for m < n. Magnitudes never exceed 1.
pub fn displaced_overlap(m: usize, n: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("overlap argument x = {x}")));
    }
    if x == 0.0 {
        return Ok(if m == n { 1.0 } else { 0.0 });
    }
    let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
    let d = hi - lo;
    let ln_ratio = 0.5 * (ln_factorial(lo) - ln_factorial(hi));
    let val = (-0.5 * x + ln_ratio).exp() * x.powf(0.5 * d as f64) * laguerre(lo, d, x)?;
    Ok(if m >= n && d % 2 == 1 { -val } else { val })
}

/// Dense table of displaced-Fock overlaps <m-|n+> for 0 <= m, n <= n_max.
#[derive(Clone, Debug)]
pub struct OverlapTable {
    dim: usize,
    x: f64,
    entries: Vec<f64>,
}

impl OverlapTable {
    pub fn build(n_max: usize, x: f64) -> Result<Self> {
        let dim = n_max + 1;
        let mut entries = vec![0.0; dim * dim];
        for m in 0..dim {
            for n in 0..dim {
                entries[m * dim + n] = displaced_overlap(m, n, x)?;
            }
        }
        Ok(Self { dim, x, entries })
    }

    /// <m-|n+>
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m * self.dim + n]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self) -> f64 {
        self.x
    }
}

/// Arguments of a theta evaluation: nome q, argument z, and the absolute
/// tolerance at which the symmetric term sum is truncated.
#[derive(Clone, Copy, Debug)]
pub struct ThetaArgs {
    pub q: Complex64,
    pub z: Complex64,
    pub tol: f64,
}

/// Absolute term-sum tolerance the theta evaluators default to.
pub const THETA_TOL: f64 = 1e-14;

impl ThetaArgs {
    pub fn new(q: Complex64, z: Complex64) -> Self {
        Self { q, z, tol: THETA_TOL }
    }
}

const THETA_MAX_HALF_TERMS: usize = 20_000;

fn theta_sum(args: ThetaArgs, alternating: bool) -> Result<Complex64> {
    let ThetaArgs { q, z, tol } = args;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("theta tolerance {tol}")));
    }
    let qn = q.norm();
    if !(qn < 1.0) {
        return Err(Error::ThetaDivergence(format!("|q| = {qn} >= 1")));
    }
    // |q^(n^2) e^(+-2inz)| <= |q|^(n^2) e^(2n|Im z|); find the first n where
    // this bound drops below tol. It can grow before it decays when |Im z|
    // is large relative to ln(1/|q|).
    let ln_q = qn.ln();
    let b = 2.0 * z.im.abs();
    let ln_tol = tol.ln();
    let mut n_cut = 0usize;
    loop {
        n_cut += 1;
        let nf = n_cut as f64;
        if nf * nf * ln_q + nf * b < ln_tol {
            break;
        }
        if n_cut > THETA_MAX_HALF_TERMS {
            return Err(Error::ThetaDivergence(format!(
                "term bound not below {tol:.1e} within {THETA_MAX_HALF_TERMS} terms (|q| = {qn}, |Im z| = {})",
                z.im.abs()
            )));
        }
    }
    let i2z = Complex64::new(0.0, 2.0) * z;
    let mut sum = Complex64::new(1.0, 0.0);
    for n in 1..=n_cut {
        let nf = n as f64;
        let pair = q.powf(nf * nf) * ((i2z * nf).exp() + (-i2z * nf).exp());
        sum += if alternating && n % 2 == 1 { -pair } else { pair };
    }
    if sum.re.is_finite() && sum.im.is_finite() {
        Ok(sum)
    } else {
        Err(Error::Overflow { what: "theta series", term: n_cut })
    }
}

/// theta3(q, z) = sum over all integers n of q^(n^2) e^(2 i n z).
pub fn theta3(args: ThetaArgs) -> Result<Complex64> {
    theta_sum(args, false)
}

/// theta4(q, z) = sum over all integers n of (-1)^n q^(n^2) e^(2 i n z).
pub fn theta4(args: ThetaArgs) -> Result<Complex64> {
    theta_sum(args, true)
}

/// Poisson number weight e^(-r) r^n / n! at mean r = rho^2.
pub fn poisson_weight(n: usize, rho_sq: f64) -> f64 {
    if rho_sq == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-rho_sq + n as f64 * rho_sq.ln() - ln_factorial(n)).exp()
}

/// Gaussian limit of the Poisson weight, evaluated at real n.
pub fn gaussian_weight(n: f64, rho_sq: f64) -> f64 {
    let d = n - rho_sq;
    ((2.0 * std::f64::consts::PI * rho_sq).sqrt()).recip() * (-d * d / (2.0 * rho_sq)).exp()
}
