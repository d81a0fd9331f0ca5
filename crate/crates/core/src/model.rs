//! The static (time-zero) soft-core Widom-Rowlinson model on the Cayley tree:
//! transfer operators, the spin-flip-symmetric intermediate boundary law via
//! scalar root finding, the induced tree-indexed Markov chain, spectral and
//! Dobrushin classifiers, and exact edge marginals.
//!
//! Spin tables are always indexed in the order `(-1, 0, +1)`.

use serde::Serialize;

use crate::rootfind;
use crate::tree::Spin;
use crate::{Error, Result};

/// Static model parameters. `h` is an external field slot that must stay at
/// zero for every intermediate-measure operation; the symmetric boundary law
/// only exists there, so those operations reject `h != 0` instead of
/// silently ignoring it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub d: u32,
    pub beta: f64,
    pub lambda: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(d: u32, beta: f64, lambda: f64) -> Result<Self> {
        let p = ModelParams { d, beta, lambda, h: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_field(mut self, h: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::invalid("field h must be finite"));
        }
        self.h = h;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::invalid(format!("d must be >= 2, got {}", self.d)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !self.h.is_finite() {
            return Err(Error::invalid("field h must be finite"));
        }
        Ok(())
    }

    /// Intermediate-measure operations are only defined at `h = 0`.
    pub fn require_symmetric(&self) -> Result<()> {
        if self.h != 0.0 {
            return Err(Error::invalid(format!(
                "operation requires h = 0 (intermediate measure), got h = {}",
                self.h
            )));
        }
        Ok(())
    }
}

/// Edge weight `Q(x, y)`: pair repulsion plus the single-site terms split
/// evenly over the `d + 1` edges at each endpoint.
pub fn transfer_operator(p: &ModelParams, spin_i: Spin, spin_j: Spin) -> f64 {
    let (x, y) = (spin_i.value(), spin_j.value());
    let repulsion = if x * y == -1.0 { p.beta } else { 0.0 };
    let deg = (p.d + 1) as f64;
    let site = |s: f64| (p.h * s + p.lambda.ln() * s * s) / deg;
    (-repulsion + site(x) + site(y)).exp()
}

/// The symmetric boundary law of the intermediate measure, parametrized by
/// the unique positive solution `xi` of `x = lambda ((1+(1+e^-beta) x)/(1+2x))^d`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntermediateBoundaryLaw {
    pub xi: f64,
    /// `(l(-1), l(0), l(+1))` normalized to `l(0) = 1`.
    pub law: [f64; 3],
    /// `alpha = (1 + (1+e^-beta) xi) / (1 + 2 xi)`.
    pub alpha: f64,
}

/// Solves the scalar consistency equation for `xi` by bracketed bisection on
/// `(2^-d lambda, lambda)` followed by Newton polish.
pub fn solve_xi(p: &ModelParams) -> Result<IntermediateBoundaryLaw> {
    p.validate()?;
    p.require_symmetric()?;
    let a = 1.0 + (-p.beta).exp();
    let d = p.d as i32;
    let lambda = p.lambda;
    let residual = move |x: f64| x - lambda * ((1.0 + a * x) / (1.0 + 2.0 * x)).powi(d);
    let dresidual = move |x: f64| {
        let q = (1.0 + a * x) / (1.0 + 2.0 * x);
        let dq = (a - 2.0) / ((1.0 + 2.0 * x) * (1.0 + 2.0 * x));
        1.0 - lambda * d as f64 * q.powi(d - 1) * dq
    };
    let lo = 2f64.powi(-d) * lambda * (1.0 - 1e-6);
    let hi = lambda * (1.0 + 1e-6);
    let x0 = rootfind::bisect(lo, hi, residual, 0.0)?;
    let xi = rootfind::newton_polish(x0, lo, hi, residual, dresidual, 6);
    // 1e-12 absolute is attainable up to rounding of the two lambda-scale
    // terms; allow for that at large lambda.
    let tol = 1e-12f64.max(f64::EPSILON * 64.0 * lambda.max(1.0));
    let r = residual(xi);
    if r.abs() > tol {
        return Err(Error::internal(format!(
            "xi solve left residual {r:e} at xi = {xi} (beta={}, lambda={}, d={})",
            p.beta, p.lambda, p.d
        )));
    }
    if xi <= 2f64.powi(-d) * lambda * (1.0 - 1e-9) || xi >= lambda * (1.0 + 1e-9) {
        return Err(Error::internal(format!(
            "xi = {xi} escaped the bracket (2^-d lambda, lambda)"
        )));
    }
    let l_occ = xi * lambda.powf(-1.0 / (p.d as f64 + 1.0));
    Ok(IntermediateBoundaryLaw {
        xi,
        law: [l_occ, 1.0, l_occ],
        alpha: (1.0 + a * xi) / (1.0 + 2.0 * xi),
    })
}

/// Transition matrix of the tree-indexed Markov chain defined by the
/// intermediate boundary law, with its invariant distribution and the three
/// eigenvalues ordered by absolute value.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionMatrix {
    /// Row-stochastic, rows/columns indexed `(-1, 0, +1)`.
    pub entries: [[f64; 3]; 3],
    pub rho: [f64; 3],
    /// `(u1, u2, u3)` with `u1 = 1`, from the closed forms.
    pub eigenvalues: [f64; 3],
}

/// Builds the transition matrix from the closed-form display and verifies the
/// closed-form eigenvalues against an independent numeric eigensolve
/// (characteristic polynomial deflated by the stochastic eigenvalue 1).
pub fn transition_matrix(p: &ModelParams, bl: &IntermediateBoundaryLaw) -> Result<TransitionMatrix> {
    p.require_symmetric()?;
    let e = (-p.beta).exp();
    if e == 0.0 {
        return Err(Error::invalid(format!(
            "beta = {} underflows e^-beta; transition matrix entries must stay strictly positive",
            p.beta
        )));
    }
    let xi = bl.xi;
    let alpha = bl.alpha;
    let pre = 1.0 / (1.0 + (1.0 + e) * xi);
    let entries = [
        [xi * pre, pre, e * xi * pre],
        [alpha * xi * pre, alpha * pre, alpha * xi * pre],
        [e * xi * pre, pre, xi * pre],
    ];
    let occ = xi * (1.0 + (1.0 + e) * xi);
    let z = 2.0 * occ + 1.0 + 2.0 * xi;
    let rho = [occ / z, (1.0 + 2.0 * xi) / z, occ / z];
    let u2 = (1.0 - e) * xi * pre;
    let u3 = -u2 / (1.0 + 2.0 * xi);
    let eigenvalues = [1.0, u2, u3];

    let tm = TransitionMatrix { entries, rho, eigenvalues };
    for (i, row) in entries.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::internal(format!("row {i} sums to {sum}")));
        }
        if row.iter().any(|&x| x <= 0.0) {
            return Err(Error::internal(format!("row {i} has a non-positive entry")));
        }
    }
    for y in 0..3 {
        let img: f64 = (0..3).map(|x| rho[x] * entries[x][y]).sum();
        if (img - rho[y]).abs() > 1e-12 {
            return Err(Error::internal(format!(
                "rho is not invariant: component {y} maps to {img} vs {}",
                rho[y]
            )));
        }
    }
    let numeric = numeric_eigenvalues(&entries);
    for k in 0..3 {
        if (numeric[k] - eigenvalues[k]).abs() > 1e-8 {
            return Err(Error::internal(format!(
                "closed-form eigenvalue u{} = {} disagrees with numeric {}",
                k + 1,
                eigenvalues[k],
                numeric[k]
            )));
        }
    }
    Ok(tm)
}

/// Eigenvalues of a row-stochastic 3x3 matrix, ordered by absolute value.
/// Uses only the matrix entries: the characteristic polynomial is deflated by
/// the root at 1 (every row-stochastic matrix has it), leaving a quadratic
/// solved in the numerically stable Vieta form.
pub fn numeric_eigenvalues(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    // Remaining roots satisfy x^2 - (tr - 1) x + det = 0.
    let p = tr - 1.0;
    let disc = (p * p - 4.0 * det).max(0.0).sqrt();
    let r1 = if p >= 0.0 { 0.5 * (p + disc) } else { 0.5 * (p - disc) };
    let r2 = if r1 == 0.0 { 0.0 } else { det / r1 };
    let mut out = [1.0, r1, r2];
    out.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    out
}

/// Kesten-Stigum criterion: `u2^2 d > 1` (strict) proves the chain
/// non-extremal.
pub fn kesten_stigum(p: &ModelParams, tm: &TransitionMatrix) -> bool {
    let u2 = tm.eigenvalues[1];
    u2 * u2 * p.d as f64 > 1.0
}

/// Dobrushin criterion `beta (d + 1) < 2`: the time-evolved measure is Gibbs
/// for every `t > 0`.
pub fn dobrushin_flag(d: u32, beta: f64) -> bool {
    beta * (d as f64 + 1.0) < 2.0
}

/// Joint spin distribution of the two endpoints of an arbitrary edge,
/// `mu(sigma_i = x, sigma_j = y) \propto l(x) Q(x,y) l(y)`.
pub fn edge_marginal(p: &ModelParams, bl: &IntermediateBoundaryLaw) -> Result<[[f64; 3]; 3]> {
    p.require_symmetric()?;
    let mut table = [[0.0; 3]; 3];
    let mut z = 0.0;
    for x in Spin::ALL {
        for y in Spin::ALL {
            let w = bl.law[x.index()] * transfer_operator(p, x, y) * bl.law[y.index()];
            table[x.index()][y.index()] = w;
            z += w;
        }
    }
    for row in &mut table {
        for v in row {
            *v /= z;
        }
    }
    Ok(table)
}

/// Row of the transition matrix for `spin_from`.
pub fn conditional_row(tm: &TransitionMatrix, spin_from: Spin) -> [f64; 3] {
    tm.entries[spin_from.index()]
}

/// Log-spaced reference grid `beta in {0.1, ..., 10}` used by the
/// verification suites.
pub fn beta_grid() -> [f64; 7] {
    std::array::from_fn(|i| 10f64.powf(-1.0 + i as f64 / 3.0))
}

/// Log-spaced reference grid `lambda in {1e-3, ..., 1e3}`.
pub fn lambda_grid() -> [f64; 7] {
    std::array::from_fn(|i| 10f64.powi(i as i32 - 3))
}

/// Tree orders exercised by the verification suites.
pub fn d_grid() -> [u32; 4] {
    [2, 3, 4, 8]
}
