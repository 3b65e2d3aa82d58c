//! Gaussian laser-power fluctuations: a shot-level scale `H(s) = s H₀` with
//! `s ~ N(1, σ_s²)` dephases the state in the energy eigenbasis.
//!
//! All quantities are in the frame of the ideal (`s = 1`) evolution, so only the
//! fluctuation `s − 1` acts. Frequencies and times share one unit convention chosen by
//! the caller: `ω t` must be a phase in radians.

use crate::error::{invalid, mismatch, Result};
use crate::linopt::hermitian_eigen;
use crate::{CMatrix, Complex64};

#[derive(Clone, Debug, PartialEq)]
pub struct DephasingParams {
    pub sigma_s: f64,
    pub t: f64,
    /// Energy eigenfrequencies; may be empty when only a bandwidth is known.
    pub omegas: Vec<f64>,
    /// Particle count for the many-body bound.
    pub n: usize,
    /// Single-particle bandwidth `W`.
    pub w: f64,
}

impl DephasingParams {
    /// Bandwidth is taken as `max(ω) − min(ω)`.
    pub fn new(sigma_s: f64, t: f64, omegas: Vec<f64>, n: usize) -> Result<Self> {
        if omegas.is_empty() || omegas.iter().any(|w| !w.is_finite()) {
            return invalid("need finite eigenfrequencies");
        }
        let max = omegas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = omegas.iter().copied().fold(f64::INFINITY, f64::min);
        Self::check(sigma_s, t, max - min)?;
        Ok(DephasingParams {
            sigma_s,
            t,
            omegas,
            n,
            w: max - min,
        })
    }

    pub fn from_bandwidth(sigma_s: f64, t: f64, w: f64, n: usize) -> Result<Self> {
        Self::check(sigma_s, t, w)?;
        Ok(DephasingParams {
            sigma_s,
            t,
            omegas: Vec::new(),
            n,
            w,
        })
    }

    fn check(sigma_s: f64, t: f64, w: f64) -> Result<()> {
        if !(sigma_s >= 0.0 && t >= 0.0 && w >= 0.0) || !(sigma_s.is_finite() && t.is_finite() && w.is_finite()) {
            return invalid("sigma_s, t and W must be finite and nonnegative");
        }
        Ok(())
    }

    /// Damping factor `exp(−(σ_s (ω_i − ω_k) t)²/2)` of entry `(i, k)`.
    pub fn damping(&self, i: usize, k: usize) -> f64 {
        let x = self.sigma_s * (self.omegas[i] - self.omegas[k]) * self.t;
        (-0.5 * x * x).exp()
    }

    /// `exp(−(σ_s W t)²/2)`.
    pub fn single_body_bound(&self) -> f64 {
        fidelity_lower_bound(1, self.sigma_s, self.w, self.t)
    }

    /// `exp(−(n σ_s W t)²/2)`.
    pub fn many_body_bound(&self) -> f64 {
        fidelity_lower_bound(self.n, self.sigma_s, self.w, self.t)
    }
}

fn check_state(rho: &CMatrix, params: &DephasingParams) -> Result<()> {
    let d = params.omegas.len();
    if rho.shape() != (d, d) {
        return mismatch(format!("state must be {d}x{d} to match the eigenfrequencies"));
    }
    let scale = rho.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    if rho.iter().zip(rho.adjoint().iter()).any(|(a, b)| (a - b).norm() > 1e-10 * scale) {
        return invalid("state is not Hermitian");
    }
    Ok(())
}

/// `ρ′_{ik} = ρ_{ik} exp(−(σ_s(ω_i−ω_k)t)²/2)`.
pub fn dephase(rho: &CMatrix, params: &DephasingParams) -> Result<CMatrix> {
    check_state(rho, params)?;
    Ok(CMatrix::from_fn(rho.nrows(), rho.ncols(), |i, k| {
        rho[(i, k)] * params.damping(i, k)
    }))
}

/// Fidelity `⟨ψ|ρ′|ψ⟩ = Σ_{kk′} |ρ_{k′k}|² exp(−(σ_s(ω_{k′}−ω_k)t)²/2)` of a pure target.
pub fn fidelity_after_dephasing(rho0: &CMatrix, params: &DephasingParams) -> Result<f64> {
    check_state(rho0, params)?;
    let purity: f64 = rho0.iter().map(|z| z.norm_sqr()).sum();
    let trace = rho0.trace();
    if (purity - 1.0).abs() > 1e-8 || (trace - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
        return invalid(format!("target is not a pure state (purity {purity})"));
    }
    let d = rho0.nrows();
    let mut f = 0.0;
    for i in 0..d {
        for k in 0..d {
            f += rho0[(i, k)].norm_sqr() * params.damping(i, k);
        }
    }
    Ok(f)
}

/// `exp(−(n σ_s W t)²/2)`, a lower bound on the fidelity of an `n`-particle state whose
/// single-particle spectrum spans `W`.
///
/// Holds for mixed targets too, by concavity of the square-root fidelity.
pub fn fidelity_lower_bound(n: usize, sigma_s: f64, w: f64, t: f64) -> f64 {
    let x = n as f64 * sigma_s * w * t;
    (-0.5 * x * x).exp()
}

/// Pure state `|ψ⟩⟨ψ|` from amplitudes, normalized.
pub fn pure_state(psi: &[Complex64]) -> Result<CMatrix> {
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return invalid("state vector must be nonzero");
    }
    let v: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
    Ok(CMatrix::from_fn(v.len(), v.len(), |i, k| v[i] * v[k].conj()))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(rho: &CMatrix) -> f64 {
    hermitian_eigen(rho).0.into_iter().fold(f64::INFINITY, f64::min)
}
