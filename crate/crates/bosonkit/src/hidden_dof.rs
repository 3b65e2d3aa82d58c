//! Outcome distributions of bosons that carry a hidden degree of freedom.
//!
//! The hidden state enters either through its auxiliary state `h` (an
//! explicit density matrix on `n` labelled copies of the hidden space) or,
//! for permutation-invariant states, through the class function
//! `k(σ) = Tr(P_σ† h)`. The class function determines partition weights
//! `p^λ`, and for singly occupied inputs the distribution is the mixture
//! `Σ_λ p^λ q_λ(g)` of irrep components.

use std::collections::HashMap;

use num_complex::Complex64;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linopt::{hermitian_eigen, submatrix, xi, zeta, OccupationList, SiteList};
use crate::symrep::{
    all_permutations, factorial, fourier_transform, hook_dimension, partitions_of, CharacterTable, Partition, Permutation,
};
use crate::CMatrix;

/// Default cap on `n` for the double permutation sums and projector construction.
pub const DEFAULT_MAX_N: usize = 6;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Class function `k(σ)` stored by cycle type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryClassFunction {
    n: usize,
    values: Vec<(Partition, Complex64)>,
}

impl AuxiliaryClassFunction {
    /// Requires a value for every cycle type and `k(e) = 1`.
    pub fn new(n: usize, values: Vec<(Partition, Complex64)>) -> Result<Self> {
        let classes = partitions_of(n)?;
        let mut ordered = Vec::with_capacity(classes.len());
        for mu in classes {
            let v = values
                .iter()
                .find(|(p, _)| *p == mu)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::InvalidInput(format!("missing class {mu}")))?;
            ordered.push((mu, v));
        }
        let id = ordered.last().expect("at least one class").1;
        if (id - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return invalid(format!("k(identity) = {id}, expected 1"));
        }
        Ok(AuxiliaryClassFunction { n, values: ordered })
    }

    /// Builds `k` from a function of the cycle type.
    pub fn from_fn(n: usize, f: impl Fn(&Partition) -> Complex64) -> Result<Self> {
        let values = partitions_of(n)?.into_iter().map(|mu| {
            let v = f(&mu);
            (mu, v)
        });
        AuxiliaryClassFunction::new(n, values.collect())
    }

    /// `k = δ_e`: perfectly distinguishable particles.
    pub fn distinguishable(n: usize) -> Result<Self> {
        AuxiliaryClassFunction::from_fn(n, |mu| {
            Complex64::new(if mu.parts().iter().all(|&p| p == 1) { 1.0 } else { 0.0 }, 0.0)
        })
    }

    /// `k ≡ 1`: perfectly indistinguishable particles.
    pub fn indistinguishable(n: usize) -> Result<Self> {
        AuxiliaryClassFunction::from_fn(n, |_| Complex64::new(1.0, 0.0))
    }

    /// `k(σ) = Σ_λ p^λ χ_λ(σ)/f^λ`, the class function with the given partition weights.
    pub fn from_mixture(mix: &PartitionMixture) -> Result<Self> {
        let table = CharacterTable::new(mix.n)?;
        AuxiliaryClassFunction::from_fn(mix.n, |mu| {
            let c = table.class_index(mu);
            let v: f64 = mix
                .weights
                .iter()
                .enumerate()
                .map(|(li, (l, p))| p * table.values[li][c] as f64 / hook_dimension(l) as f64)
                .sum();
            Complex64::new(v, 0.0)
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[(Partition, Complex64)] {
        &self.values
    }

    pub fn on_class(&self, mu: &Partition) -> Complex64 {
        self.values
            .iter()
            .find(|(p, _)| p == mu)
            .map(|(_, v)| *v)
            .expect("class of matching n")
    }

    pub fn eval(&self, sigma: &Permutation) -> Complex64 {
        self.on_class(&sigma.cycle_type())
    }
}

/// Explicit auxiliary state on `n` copies of a `w`-label hidden space.
///
/// Basis index of the label tuple `(j_1, …, j_n)` is `Σ_x j_x w^{n-1-x}`,
/// matching the Kronecker product of single-particle states.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitAuxiliaryState {
    n: usize,
    w: usize,
    matrix: CMatrix,
}

impl ExplicitAuxiliaryState {
    /// Validates side `wⁿ`, Hermitian PSD to `1e-10` and unit trace.
    pub fn new(n: usize, w: usize, matrix: CMatrix) -> Result<Self> {
        let side = w
            .checked_pow(n as u32)
            .ok_or_else(|| Error::SizeLimit("label space too large".into()))?;
        if matrix.shape() != (side, side) {
            return mismatch(format!("auxiliary state must be {side}x{side}"));
        }
        let herm = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-10 {
            return invalid("auxiliary state is not Hermitian");
        }
        let (vals, _) = hermitian_eigen(&matrix);
        if vals.iter().any(|&v| v < -1e-10) {
            return invalid("auxiliary state is not positive semidefinite");
        }
        if (matrix.trace().re - 1.0).abs() > 1e-10 {
            return invalid("auxiliary state must have unit trace");
        }
        Ok(ExplicitAuxiliaryState { n, w, matrix })
    }

    /// `h = ρ_1 ⊗ ⋯ ⊗ ρ_n` for independent particles on distinct sites.
    pub fn product(states: &[CMatrix]) -> Result<Self> {
        let w = states.first().map(|s| s.nrows()).unwrap_or(1);
        let mut h = CMatrix::identity(1, 1);
        for s in states {
            if s.shape() != (w, w) {
                return mismatch("single-particle states must share a label dimension");
            }
            h = h.kronecker(s);
        }
        ExplicitAuxiliaryState::new(states.len(), w, h)
    }

    /// `h = |ψ⟩⟨ψ|` from label-tuple coefficients `ψ_j`.
    pub fn pure(n: usize, w: usize, psi: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        ExplicitAuxiliaryState::new(n, w, &v * v.adjoint())
    }

    /// `h = |ψ⟩⟨ψ|` for coefficients that are symmetric under the permutations fixing `i`.
    ///
    /// Checks that the Fock-space state built with the orbit-size normalization
    /// has unit norm.
    pub fn from_symmetrized(i: &SiteList, w: usize, psi: &[Complex64]) -> Result<Self> {
        let norm = symmetrized_state_norm(i, w, psi)?;
        if (norm - 1.0).abs() > 1e-10 {
            return invalid(format!("coefficients are not properly symmetrized (norm {norm})"));
        }
        ExplicitAuxiliaryState::pure(i.len(), w, psi)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> usize {
        self.w
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    fn label_index(&self, j: &[usize]) -> usize {
        j.iter().fold(0, |acc, &x| acc * self.w + x)
    }

    fn label_tuple(&self, mut idx: usize) -> Vec<usize> {
        let mut j = vec![0; self.n];
        for x in (0..self.n).rev() {
            j[x] = idx % self.w;
            idx /= self.w;
        }
        j
    }

    /// `Tr(P_π h)` with `P_π|j⟩ = |π·j⟩`, `(π·j)_x = j_{π⁻¹(x)}`.
    pub fn trace_with_permutation(&self, pi: &Permutation) -> Complex64 {
        let side = self.matrix.nrows();
        let mut total = ZERO;
        for idx in 0..side {
            let j = self.label_tuple(idx);
            // ⟨j|P_π = ⟨π⁻¹·j|, and (π⁻¹·j)_x = j_{π(x)}
            let moved: Vec<usize> = (0..self.n).map(|x| j[pi.apply(x)]).collect();
            total += self.matrix[(self.label_index(&moved), idx)];
        }
        total
    }

    /// `k(σ) = Tr(P_σ† h)`; a class function only for permutation-invariant `h`.
    pub fn indistinguishability_function(&self, sigma: &Permutation) -> Complex64 {
        self.trace_with_permutation(&sigma.inverse())
    }
}

/// Hidden-state description accepted by [`direct_model_probability`].
#[derive(Clone, Copy, Debug)]
pub enum Auxiliary<'a> {
    ClassFunction(&'a AuxiliaryClassFunction),
    Explicit(&'a ExplicitAuxiliaryState),
}

impl Auxiliary<'_> {
    fn n(&self) -> usize {
        match self {
            Auxiliary::ClassFunction(k) => k.n(),
            Auxiliary::Explicit(h) => h.n(),
        }
    }
}

/// Probability weights `p^λ` over the partitions of `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionMixture {
    pub n: usize,
    /// One entry per `λ ⊢ n` in [`partitions_of`] order.
    pub weights: Vec<(Partition, f64)>,
}

#[derive(Serialize, Deserialize)]
struct MixtureEntry {
    partition: Vec<usize>,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct MixtureFile {
    n: usize,
    weights: Vec<MixtureEntry>,
}

impl Serialize for PartitionMixture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MixtureFile {
            n: self.n,
            weights: self
                .weights
                .iter()
                .map(|(l, p)| MixtureEntry {
                    partition: l.parts().to_vec(),
                    p: *p,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartitionMixture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = MixtureFile::deserialize(d)?;
        let weights = file
            .weights
            .into_iter()
            .map(|e| Ok((Partition::new(e.partition)?, e.p)))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        PartitionMixture::new(file.n, weights).map_err(serde::de::Error::custom)
    }
}

impl PartitionMixture {
    /// Missing partitions get weight zero; weights must be `≥ −1e-12` and sum to `1 ± 1e-10`.
    pub fn new(n: usize, weights: Vec<(Partition, f64)>) -> Result<Self> {
        for (l, _) in &weights {
            if l.n() != n {
                return mismatch(format!("partition {l} is not a partition of {n}"));
            }
        }
        let mut out = Vec::new();
        for l in partitions_of(n)? {
            let p: f64 = weights.iter().filter(|(q, _)| *q == l).map(|(_, p)| *p).sum();
            if p < -1e-12 || !p.is_finite() {
                return invalid(format!("weight {p} for {l}"));
            }
            out.push((l, p.max(0.0)));
        }
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-10 {
            return invalid(format!("weights sum to {total}"));
        }
        Ok(PartitionMixture { n, weights: out })
    }

    /// All weight on a single partition.
    pub fn delta(lambda: &Partition) -> Result<Self> {
        PartitionMixture::new(lambda.n(), vec![(lambda.clone(), 1.0)])
    }

    /// Plancherel weights `(f^λ)²/n!`, the distinguishable-particle mixture.
    pub fn plancherel(n: usize) -> Result<Self> {
        let nf = factorial(n) as f64;
        let w = partitions_of(n)?
            .into_iter()
            .map(|l| {
                let f = hook_dimension(&l) as f64;
                (l, f * f / nf)
            })
            .collect();
        PartitionMixture::new(n, w)
    }

    pub fn weight(&self, lambda: &Partition) -> f64 {
        self.weights.iter().find(|(l, _)| l == lambda).map(|(_, p)| *p).unwrap_or(0.0)
    }
}

fn check_thermal_x(x: f64) -> Result<()> {
    if !(0.0..1.0).contains(&x) {
        return invalid(format!("thermal parameter x = {x} must lie in [0, 1)"));
    }
    Ok(())
}

/// `k_x(π) = Z(x)^{-n} ∏_c Z(x^{l(c)})` with `Z(x) = 1/(1−x)`.
///
/// At `x = 0` every value is 1 (the indistinguishable limit).
pub fn thermal_class_function(x: f64, n: usize) -> Result<AuxiliaryClassFunction> {
    check_thermal_x(x)?;
    AuxiliaryClassFunction::from_fn(n, |mu| {
        let v = mu.parts().iter().fold(1.0, |acc, &l| acc * (1.0 - x) / (1.0 - x.powi(l as i32))) * (1.0 - x).powi((n - mu.len()) as i32);
        Complex64::new(v, 0.0)
    })
}

/// `[h]_x = 1 + x + ⋯ + x^{h-1}`.
fn q_integer(x: f64, h: usize) -> f64 {
    (0..h).rev().fold(0.0, |acc, _| acc * x + 1.0)
}

/// Thermal weight `p^λ_x = f^λ (1−x)ⁿ x^{b(λ)} / ∏_u (1 − x^{h(u)})`.
///
/// Evaluated as `f^λ x^{b(λ)} / ∏_u [h(u)]_x`, which avoids cancellation near `x = 1`.
pub fn thermal_weight(lambda: &Partition, x: f64) -> f64 {
    let denom: f64 = lambda.hook_lengths().iter().map(|&h| q_integer(x, h)).product();
    hook_dimension(lambda) as f64 * x.powi(lambda.b() as i32) / denom
}

/// Thermal partition weights for `x ∈ [0, 1)`.
pub fn thermal_partition_weights(x: f64, n: usize) -> Result<PartitionMixture> {
    check_thermal_x(x)?;
    let w = partitions_of(n)?.into_iter().map(|l| {
        let p = thermal_weight(&l, x);
        (l, p)
    });
    PartitionMixture::new(n, w.collect())
}

/// Analytic `x → 1` limit of the thermal weights, `f^λ / ∏_u h(u)`, in exact rationals.
pub fn thermal_limit_exact(n: usize) -> Result<Vec<(Partition, Ratio<u128>)>> {
    Ok(partitions_of(n)?
        .into_iter()
        .map(|l| {
            let prod: u128 = l.hook_lengths().iter().map(|&h| h as u128).product();
            let r = Ratio::new(hook_dimension(&l), prod);
            (l, r)
        })
        .collect())
}

/// Plancherel weights `(f^λ)²/n!` in exact rationals.
pub fn plancherel_exact(n: usize) -> Result<Vec<(Partition, Ratio<u128>)>> {
    Ok(partitions_of(n)?
        .into_iter()
        .map(|l| {
            let f = hook_dimension(&l);
            (l, Ratio::new(f * f, factorial(n)))
        })
        .collect())
}

/// `p^λ = (f^λ/n!) Σ_σ χ_λ(σ) k(σ)`.
///
/// Negative weights down to `−1e-6` are clipped to zero and the result is
/// renormalized; anything outside `[−1e-6, 1 + 1e-6]` is rejected.
pub fn weights_from_class_function(k: &AuxiliaryClassFunction) -> Result<PartitionMixture> {
    let n = k.n();
    let table = CharacterTable::new(n)?;
    let nf = factorial(n) as f64;
    let mut weights = Vec::with_capacity(table.partitions.len());
    for (li, l) in table.partitions.iter().enumerate() {
        let s: Complex64 = table
            .partitions
            .iter()
            .enumerate()
            .map(|(ci, mu)| k.on_class(mu) * (table.class_sizes[ci] as f64 * table.values[li][ci] as f64))
            .sum();
        let p = s.re * hook_dimension(l) as f64 / nf;
        if !(-1e-6..=1.0 + 1e-6).contains(&p) || s.im.abs() > 1e-8 {
            return invalid(format!("class function induces weight {s} on {l}"));
        }
        weights.push((l.clone(), p.max(0.0)));
    }
    let total: f64 = weights.iter().map(|(_, p)| p).sum();
    for (_, p) in weights.iter_mut() {
        *p /= total;
    }
    PartitionMixture::new(n, weights)
}

fn check_n(n: usize, cap: usize) -> Result<()> {
    if n == 0 || n > cap {
        return Err(Error::SizeLimit(format!("n = {n} outside 1..={cap}")));
    }
    Ok(())
}

/// Literal double sum over `S_n × S_n`:
/// `p(g) = (1/ξ(i)!)(1/g!) Σ_{σ,τ} Tr(P_τ† P_σ h) Δ(U*(ζ(g)|τ·i)) Δ(U(ζ(g)|σ·i))`.
///
/// For a class function the trace is `k(σ⁻¹τ)`. `n ≤ 6`.
pub fn direct_model_probability(u: &CMatrix, i: &SiteList, aux: Auxiliary<'_>, g: &OccupationList) -> Result<f64> {
    let n = i.len();
    check_n(n, DEFAULT_MAX_N)?;
    if aux.n() != n {
        return mismatch(format!("hidden state for {} particles, {} inputs", aux.n(), n));
    }
    if g.total() != n || g.modes() != u.nrows() {
        return mismatch("outcome does not match inputs and modes");
    }
    if let Auxiliary::ClassFunction(_) = aux {
        if !i.is_distinct() {
            return invalid("class-function route requires distinct input sites");
        }
    }
    let rows = zeta(g);
    let sub = submatrix(u, &rows, i)?;
    let perms = all_permutations(n);
    // a(σ) = Δ(U(ζ(g)|σ·i)) = ∏_x U_{ζ_x, i_{σ⁻¹(x)}}
    let amp: Vec<Complex64> = perms
        .iter()
        .map(|s| {
            let inv = s.inverse();
            (0..n).map(|x| sub[(x, inv.apply(x))]).product()
        })
        .collect();
    let mut total = ZERO;
    for (si, s) in perms.iter().enumerate() {
        if amp[si] == ZERO {
            continue;
        }
        let s_inv = s.inverse();
        for (ti, t) in perms.iter().enumerate() {
            let trace = match aux {
                Auxiliary::ClassFunction(k) => k.eval(&s_inv.compose(t)),
                Auxiliary::Explicit(h) => h.trace_with_permutation(&t.inverse().compose(s)),
            };
            total += trace * amp[ti].conj() * amp[si];
        }
    }
    let norm = xi(i, u.ncols())?.factorial() * g.factorial();
    Ok(total.re / norm as f64)
}

/// `α̂_g(λ)` for every `λ`, where `α_g(σ) = Δ(U*(ζ(g)|σ⁻¹·i))/√g!`.
fn alpha_transform(u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<crate::symrep::IrrepBlocks> {
    let n = i.len();
    check_n(n, DEFAULT_MAX_N)?;
    if !i.is_distinct() {
        return invalid("irrep projectors require distinct input sites");
    }
    if g.total() != n || g.modes() != u.nrows() {
        return mismatch("outcome does not match inputs and modes");
    }
    let sub = submatrix(u, &zeta(g), i)?;
    let scale = 1.0 / (g.factorial() as f64).sqrt();
    fourier_transform(n, |s| (0..n).map(|x| sub[(x, s.apply(x))].conj()).product::<Complex64>() * scale)
}

/// `Π^λ_g = α̂_g(λ) α̂_g(λ)†` for distinct inputs.
pub fn irrep_projector(lambda: &Partition, u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<CMatrix> {
    if lambda.n() != i.len() {
        return mismatch("partition size differs from particle number");
    }
    let blocks = alpha_transform(u, i, g)?;
    let a = blocks.get(lambda).expect("every partition present");
    Ok(a * a.adjoint())
}

/// Mixture components `q_λ(g) = Tr(Π^λ_g)/f^λ` for every `λ ⊢ n`.
pub fn mixture_components(u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<Vec<(Partition, f64)>> {
    let blocks = alpha_transform(u, i, g)?;
    Ok(blocks
        .blocks
        .into_iter()
        .map(|(l, a)| {
            let q = a.iter().map(|z| z.norm_sqr()).sum::<f64>() / hook_dimension(&l) as f64;
            (l, q)
        })
        .collect())
}

/// `p(g) = Σ_λ p^λ Tr(Π^λ_g)/f^λ` for distinct inputs.
pub fn mixture_probability(mix: &PartitionMixture, u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<f64> {
    if mix.n != i.len() {
        return mismatch("mixture size differs from particle number");
    }
    let comps = mixture_components(u, i, g)?;
    Ok(comps.iter().zip(&mix.weights).map(|((_, q), (_, p))| p * q).sum())
}

/// Probability that exactly the pattern `h` lands in the output set `S` and the
/// other `n − |h|` particles land outside it, for a thermal hidden state.
///
/// `u_sub` is `U(S|i)` (`|S| × n`, inputs distinct) and `h` has length `|S|`.
pub fn restricted_probability(u_sub: &CMatrix, x: f64, h: &OccupationList) -> Result<f64> {
    let k = thermal_class_function(x, u_sub.ncols())?;
    restricted_probability_class(u_sub, &k, h)
}

fn check_restricted(u_sub: &CMatrix, k: &AuxiliaryClassFunction, h: &OccupationList) -> Result<()> {
    let n = u_sub.ncols();
    check_n(n, DEFAULT_MAX_N)?;
    if k.n() != n {
        return mismatch("class function size differs from number of inputs");
    }
    if h.modes() != u_sub.nrows() || h.total() > n {
        return mismatch("pattern must live on S with |h| ≤ n");
    }
    let gram_def = CMatrix::identity(n, n) - u_sub.adjoint() * u_sub;
    let (vals, _) = hermitian_eigen(&gram_def);
    if vals.iter().any(|&v| v < -1e-8) {
        return invalid("matrix is not a submatrix of a unitary (I − M†M not PSD)");
    }
    Ok(())
}

/// [`restricted_probability`] for an arbitrary class function.
pub fn restricted_probability_class(u_sub: &CMatrix, k: &AuxiliaryClassFunction, h: &OccupationList) -> Result<f64> {
    Ok(restricted_with_gradient(u_sub, k, h, false)?.0)
}

/// Restricted probability and its Wirtinger gradient `∂p/∂M_{ab}` (with `M*` held fixed).
///
/// Since `p` is real, `dp = 2 Re Σ_{ab} (∂p/∂M_{ab}) dM_{ab}`.
pub fn restricted_probability_gradient(u_sub: &CMatrix, k: &AuxiliaryClassFunction, h: &OccupationList) -> Result<(f64, CMatrix)> {
    restricted_with_gradient(u_sub, k, h, true)
}

fn restricted_with_gradient(m: &CMatrix, k: &AuxiliaryClassFunction, h: &OccupationList, want_grad: bool) -> Result<(f64, CMatrix)> {
    check_restricted(m, k, h)?;
    let n = m.ncols();
    let s_rows = m.nrows();
    let rows: Vec<usize> = zeta(h).0.iter().map(|x| x - 1).collect();
    let hn = rows.len();
    let gram = m.adjoint() * m;
    let perms = all_permutations(n);
    let norm = (h.factorial() * factorial(n - hn)) as f64;
    let class_cache: HashMap<Partition, Complex64> = k.values().iter().cloned().collect();
    let mut total = ZERO;
    let mut grad = CMatrix::zeros(s_rows, n);
    let mut factors = vec![ZERO; n];
    let mut prefix = vec![ZERO; n + 1];
    let mut suffix = vec![ZERO; n + 1];
    for s in &perms {
        for t in &perms {
            // weight k(σ τ⁻¹)
            let w = class_cache[&s.compose(&t.inverse()).cycle_type()];
            for x in 0..n {
                factors[x] = if x < hn {
                    m[(rows[x], s.apply(x))] * m[(rows[x], t.apply(x))].conj()
                } else {
                    let delta = if s.apply(x) == t.apply(x) { 1.0 } else { 0.0 };
                    Complex64::new(delta, 0.0) - gram[(t.apply(x), s.apply(x))]
                };
            }
            prefix[0] = Complex64::new(1.0, 0.0);
            for x in 0..n {
                prefix[x + 1] = prefix[x] * factors[x];
            }
            total += w * prefix[n];
            if !want_grad {
                continue;
            }
            suffix[n] = Complex64::new(1.0, 0.0);
            for x in (0..n).rev() {
                suffix[x] = suffix[x + 1] * factors[x];
            }
            for x in 0..n {
                let rest = w * prefix[x] * suffix[x + 1];
                let b = s.apply(x);
                if x < hn {
                    // ∂/∂M_{rows[x], σ(x)} of M_{rows[x],σ(x)} M*_{rows[x],τ(x)}
                    grad[(rows[x], b)] += rest * m[(rows[x], t.apply(x))].conj();
                } else {
                    // ∂/∂M_{a,σ(x)} of −Σ_s M*_{s,τ(x)} M_{s,σ(x)}
                    let c = t.apply(x);
                    for a in 0..s_rows {
                        grad[(a, b)] -= rest * m[(a, c)].conj();
                    }
                }
            }
        }
    }
    Ok((total.re / norm, grad / Complex64::new(norm, 0.0)))
}

/// Occupation patterns on `s` sites with total at most `n`.
pub fn restricted_outcomes(s: usize, n: usize) -> Vec<OccupationList> {
    (0..=n).rev().flat_map(|t| crate::linopt::all_occupations(s, t)).collect()
}

/// `N(i, j) = ξ(i)!/ξ(i, j)!`, the orbit size of the label tuple `j` under the
/// permutations fixing the site tuple `i`.
pub fn orbit_normalization(i: &SiteList, j: &[usize]) -> u128 {
    let mut sites: HashMap<usize, usize> = HashMap::new();
    let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
    for (x, &site) in i.0.iter().enumerate() {
        *sites.entry(site).or_default() += 1;
        *pairs.entry((site, j[x])).or_default() += 1;
    }
    let num: u128 = sites.values().map(|&c| factorial(c)).product();
    let den: u128 = pairs.values().map(|&c| factorial(c)).product();
    num / den
}

/// Norm of `Σ_j ψ_j a†(i, j)|0⟩ / √(N(i,j) ξ(i,j)!)` computed in the Fock basis of
/// (site, label) modes. Equals 1 for properly symmetrized, normalized `ψ`.
pub fn symmetrized_state_norm(i: &SiteList, w: usize, psi: &[Complex64]) -> Result<f64> {
    let n = i.len();
    let side = w
        .checked_pow(n as u32)
        .ok_or_else(|| Error::SizeLimit("label space too large".into()))?;
    if psi.len() != side {
        return mismatch(format!("expected {side} coefficients"));
    }
    let mut amps: HashMap<Vec<(usize, usize)>, Complex64> = HashMap::new();
    for (idx, &c) in psi.iter().enumerate() {
        let mut j = vec![0; n];
        let mut rem = idx;
        for x in (0..n).rev() {
            j[x] = rem % w;
            rem /= w;
        }
        let mut occ: Vec<(usize, usize)> = i.0.iter().copied().zip(j.iter().copied()).collect();
        occ.sort_unstable();
        // a†(i,j)|0⟩ = √(ξ(i,j)!) |ξ(i,j)⟩, which cancels the 1/√ξ(i,j)! prefactor
        let scale = 1.0 / (orbit_normalization(i, &j) as f64).sqrt();
        *amps.entry(occ).or_insert(ZERO) += c * scale;
    }
    Ok(amps.values().map(|a| a.norm_sqr()).sum())
}
