//! Fock-space bookkeeping and ideal linear-optical distributions.
//!
//! Sites are one-based in [`SiteList`] and in every public function that
//! takes site indices. Matrices are dense `nalgebra` complex matrices.

use nalgebra::linalg::{Schur, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::symrep::factorial;
use crate::CMatrix;

/// Largest matrix side accepted by [`permanent`].
pub const PERMANENT_CAP: usize = 16;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Input sites `i = (i_1, …, i_n)`, one-based, possibly repeated.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteList(pub Vec<usize>);

/// Output occupations `g = (g_1, …, g_m)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationList(pub Vec<usize>);

impl SiteList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_distinct(&self) -> bool {
        let mut s = self.0.clone();
        s.sort_unstable();
        s.windows(2).all(|w| w[0] != w[1])
    }

    pub(crate) fn check_range(&self, m: usize) -> Result<()> {
        match self.0.iter().find(|&&x| x == 0 || x > m) {
            Some(x) => invalid(format!("site {x} outside 1..={m}")),
            None => Ok(()),
        }
    }
}

impl OccupationList {
    /// Number of modes `m`.
    pub fn modes(&self) -> usize {
        self.0.len()
    }

    /// Total particle number `|g|`.
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// `g! = ∏_x g_x!`.
    pub fn factorial(&self) -> u128 {
        self.0.iter().map(|&g| factorial(g)).product()
    }

    /// `#(g)`, the number of occupied sites.
    pub fn occupied(&self) -> usize {
        self.0.iter().filter(|&&g| g > 0).count()
    }
}

/// `ζ(g)`: nondecreasing site list with site `x` repeated `g_x` times.
pub fn zeta(g: &OccupationList) -> SiteList {
    SiteList(g.0.iter().enumerate().flat_map(|(x, &c)| std::iter::repeat_n(x + 1, c)).collect())
}

/// `ξ(i)`: occupation counts of the sites in `i` over `m` modes.
pub fn xi(i: &SiteList, m: usize) -> Result<OccupationList> {
    i.check_range(m)?;
    let mut g = vec![0; m];
    for &x in &i.0 {
        g[x - 1] += 1;
    }
    Ok(OccupationList(g))
}

/// All occupation lists with `m` modes and `n` particles, descending lexicographically.
pub fn all_occupations(m: usize, n: usize) -> Vec<OccupationList> {
    let mut out = Vec::new();
    let mut cur = vec![0; m];
    fn rec(x: usize, rem: usize, cur: &mut Vec<usize>, out: &mut Vec<OccupationList>) {
        if x + 1 == cur.len() {
            cur[x] = rem;
            out.push(OccupationList(cur.clone()));
            return;
        }
        for c in (0..=rem).rev() {
            cur[x] = c;
            rec(x + 1, rem - c, cur, out);
        }
    }
    if m == 0 {
        if n == 0 {
            out.push(OccupationList(vec![]));
        }
        return out;
    }
    rec(0, n, &mut cur, &mut out);
    out
}

/// `U(l|i)`: rows `l`, columns `i`, one-based, repetitions allowed.
pub fn submatrix(u: &CMatrix, rows: &SiteList, cols: &SiteList) -> Result<CMatrix> {
    rows.check_range(u.nrows())?;
    cols.check_range(u.ncols())?;
    Ok(CMatrix::from_fn(rows.len(), cols.len(), |a, b| u[(rows.0[a] - 1, cols.0[b] - 1)]))
}

/// Elementwise `|M|²` as a complex matrix with zero imaginary part.
pub fn abs_squared(m: &CMatrix) -> CMatrix {
    m.map(|z| Complex64::new(z.norm_sqr(), 0.0))
}

/// `Perm(M)` by Ryser's formula with Gray-code updates, `O(2ⁿ n)`.
pub fn permanent(m: &CMatrix) -> Result<Complex64> {
    let n = m.nrows();
    if m.ncols() != n {
        return mismatch(format!("permanent of a {}x{} matrix", n, m.ncols()));
    }
    if n > PERMANENT_CAP {
        return Err(Error::SizeLimit(format!("permanent side {n} exceeds {PERMANENT_CAP}")));
    }
    if n == 0 {
        return Ok(ONE);
    }
    let mut rowsum = vec![ZERO; n];
    let mut total = ZERO;
    let mut prev_gray: usize = 0;
    for k in 1usize..(1 << n) {
        let gray = k ^ (k >> 1);
        let diff = gray ^ prev_gray;
        let j = diff.trailing_zeros() as usize;
        if gray & diff != 0 {
            for (r, s) in rowsum.iter_mut().enumerate() {
                *s += m[(r, j)];
            }
        } else {
            for (r, s) in rowsum.iter_mut().enumerate() {
                *s -= m[(r, j)];
            }
        }
        let prod: Complex64 = rowsum.iter().product();
        if gray.count_ones() % 2 == 1 {
            total -= prod;
        } else {
            total += prod;
        }
        prev_gray = gray;
    }
    Ok(if n.is_multiple_of(2) { total } else { -total })
}

fn check_model_dims(u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<()> {
    if u.nrows() != u.ncols() {
        return mismatch("unitary must be square");
    }
    if g.modes() != u.nrows() {
        return mismatch(format!("{} occupations for {} modes", g.modes(), u.nrows()));
    }
    if g.total() != i.len() {
        return mismatch(format!("|g| = {} but {} inputs", g.total(), i.len()));
    }
    i.check_range(u.ncols())
}

/// `|Perm(U(ζ(g)|i))|² / (g! ξ(i)!)` for perfectly indistinguishable bosons.
pub fn bosonic_probability(u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<f64> {
    check_model_dims(u, i, g)?;
    let sub = submatrix(u, &zeta(g), i)?;
    let norm = g.factorial() * xi(i, u.ncols())?.factorial();
    Ok(permanent(&sub)?.norm_sqr() / norm as f64)
}

/// `Perm(|U|²(ζ(g)|i)) / g!` for perfectly distinguishable particles.
pub fn distinguishable_probability(u: &CMatrix, i: &SiteList, g: &OccupationList) -> Result<f64> {
    check_model_dims(u, i, g)?;
    let sub = abs_squared(&submatrix(u, &zeta(g), i)?);
    Ok(permanent(&sub)?.re / g.factorial() as f64)
}

/// Coefficients of a Hermitian matrix in the generalized Gell-Mann basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GellMannCoeffs {
    pub d: usize,
    pub c: Vec<f64>,
}

impl GellMannCoeffs {
    pub fn zeros(d: usize) -> Self {
        GellMannCoeffs { d, c: vec![0.0; d * d] }
    }

    /// `H = Σ c_{kl} B_{kl}`.
    pub fn hermitian(&self) -> CMatrix {
        let basis = gellmann_basis(self.d);
        let mut h = CMatrix::zeros(self.d, self.d);
        for (b, &c) in basis.iter().zip(&self.c) {
            h += b * Complex64::new(c, 0.0);
        }
        h
    }
}

/// Position of `B_{kl}` (one-based `k, l`) in the canonical row-major order.
pub fn gellmann_index(d: usize, k: usize, l: usize) -> usize {
    (k - 1) * d + (l - 1)
}

/// The `d²` generalized Gell-Mann matrices `B_{kl}`, ordered row-major in `(k, l)`.
///
/// Off-diagonal pairs are the symmetric (`k < l`) and antisymmetric (`k > l`)
/// combinations scaled by `1/√2`; `B_{kk}` for `k < d` is the traceless
/// diagonal matrix on the first `k+1` entries and `B_{dd} = I/√d`.
pub fn gellmann_basis(d: usize) -> Vec<CMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            let mut b = CMatrix::zeros(d, d);
            if k < l {
                b[(k, l)] = Complex64::new(s, 0.0);
                b[(l, k)] = Complex64::new(s, 0.0);
            } else if k > l {
                b[(k, l)] = Complex64::new(0.0, s);
                b[(l, k)] = Complex64::new(0.0, -s);
            } else if k + 1 < d {
                let kk = (k + 1) as f64;
                let norm = 1.0 / (kk * (kk + 1.0)).sqrt();
                for q in 0..=k {
                    b[(q, q)] = Complex64::new(norm, 0.0);
                }
                b[(k + 1, k + 1)] = Complex64::new(-kk * norm, 0.0);
            } else {
                let v = 1.0 / (d as f64).sqrt();
                for q in 0..d {
                    b[(q, q)] = Complex64::new(v, 0.0);
                }
            }
            out.push(b);
        }
    }
    out
}

/// Hermitian eigendecomposition `H = Q diag(w) Q†`.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(h.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `V = exp(i H)` with `H = Σ c_{kl} B_{kl}`.
pub fn unitary_from_coeffs(c: &GellMannCoeffs) -> CMatrix {
    let (w, q) = hermitian_eigen(&c.hermitian());
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        w.len(),
        w.iter().map(|&x| Complex64::from_polar(1.0, x)),
    ));
    &q * phases * q.adjoint()
}

/// `V = exp(i H)` together with `∂V/∂c_{kl}` for every Gell-Mann coefficient.
///
/// With `H = Q diag(λ) Q†` the derivative along `B` is `Q (Φ ∘ (Q† iB Q)) Q†`,
/// `Φ_{jk} = e^{i(λ_j+λ_k)/2} sinc((λ_j−λ_k)/2)`.
pub fn unitary_from_coeffs_with_derivatives(c: &GellMannCoeffs) -> (CMatrix, Vec<CMatrix>) {
    let (w, q) = hermitian_eigen(&c.hermitian());
    let d = w.len();
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        w.iter().map(|&x| Complex64::from_polar(1.0, x)),
    ));
    let v = &q * phases * q.adjoint();
    let phi = CMatrix::from_fn(d, d, |j, k| {
        let half = 0.5 * (w[j] - w[k]);
        let sinc = if half.abs() < 1e-8 {
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        Complex64::from_polar(sinc, 0.5 * (w[j] + w[k]))
    });
    let qa = q.adjoint();
    let derivs = gellmann_basis(d)
        .iter()
        .map(|b| {
            let inner = &qa * b * &q * Complex64::new(0.0, 1.0);
            &q * inner.component_mul(&phi) * &qa
        })
        .collect();
    (v, derivs)
}

/// Largest entry of `|V V† − I|`.
pub fn unitarity_defect(v: &CMatrix) -> f64 {
    if v.nrows() != v.ncols() {
        return f64::INFINITY;
    }
    let d = v * v.adjoint() - CMatrix::identity(v.nrows(), v.ncols());
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Principal logarithm coefficients: eigenphases in `(−π, π]`, `c_{kl} = Tr(H B_{kl})`.
///
/// Eigenphases within `1e-10` of `−π` are mapped to `+π`.
pub fn coeffs_from_unitary(v: &CMatrix) -> Result<GellMannCoeffs> {
    let defect = unitarity_defect(v);
    if defect > 1e-8 {
        return invalid(format!("matrix is not unitary (defect {defect:.2e})"));
    }
    let d = v.nrows();
    let (q, t) = Schur::new(v.clone()).unpack();
    let phases: Vec<f64> = (0..d)
        .map(|k| {
            let phi = t[(k, k)].arg();
            if phi < -std::f64::consts::PI + 1e-10 {
                phi + 2.0 * std::f64::consts::PI
            } else {
                phi
            }
        })
        .collect();
    let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, phases.iter().map(|&p| Complex64::new(p, 0.0))));
    let h = &q * diag * q.adjoint();
    let c = gellmann_basis(d).iter().map(|b| (b * &h).trace().re).collect();
    Ok(GellMannCoeffs { d, c })
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Hermitian PSD square root; eigenvalues below `1e-13` are treated as zero.
pub fn psd_sqrt(a: &CMatrix) -> CMatrix {
    let (w, q) = hermitian_eigen(a);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        w.len(),
        w.iter().map(|&x| Complex64::new(if x < 1e-13 { 0.0 } else { x.sqrt() }, 0.0)),
    ));
    &q * d * q.adjoint()
}

/// Unitary of side `rows + cols` whose top-left block is `M`.
///
/// Stacks `M` over `√(I − M†M)` to get an isometry and appends an orthonormal
/// basis of the complement of its range.
pub fn unitary_completion(m: &CMatrix) -> Result<CMatrix> {
    let (r, c) = m.shape();
    let norm = spectral_norm(m);
    if norm > 1.0 + 1e-10 {
        return invalid(format!("spectral norm {norm} exceeds 1"));
    }
    let d = r + c;
    let lower = psd_sqrt(&(CMatrix::identity(c, c) - m.adjoint() * m));
    let mut w = CMatrix::zeros(d, c);
    w.view_mut((0, 0), (r, c)).copy_from(m);
    w.view_mut((r, 0), (c, c)).copy_from(&lower);
    let proj = CMatrix::identity(d, d) - &w * w.adjoint();
    let (vals, vecs) = hermitian_eigen(&proj);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut out = CMatrix::zeros(d, d);
    out.view_mut((0, 0), (d, c)).copy_from(&w);
    for (slot, &idx) in order.iter().take(r).enumerate() {
        out.set_column(c + slot, &vecs.column(idx));
    }
    Ok(out)
}

/// Haar-random `m × m` unitary (QR of a complex Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(m, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = z.qr();
    let (q, rr) = (qr.q(), qr.r());
    let mut out = q;
    for k in 0..m {
        let d = rr[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let col = out.column(k) * phase;
        out.set_column(k, &col);
    }
    out
}

/// The balanced beam splitter `(1/√2)[[1, −1], [1, 1]]`.
pub fn beam_splitter() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(s, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(s, 0.0),
        ],
    )
}

/// On-disk complex matrix: `{"dim_rows", "dim_cols", "entries": [[[re, im], …], …], "unitary"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub dim_rows: usize,
    pub dim_cols: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub unitary: bool,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMatrix, unitary: bool) -> Self {
        let entries = (0..m.nrows())
            .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
            .collect();
        MatrixFile {
            dim_rows: m.nrows(),
            dim_cols: m.ncols(),
            entries,
            unitary,
        }
    }

    /// Parses the entries, validating shape and, when flagged, unitarity to `1e-10`.
    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.entries.len() != self.dim_rows || self.entries.iter().any(|r| r.len() != self.dim_cols) {
            return mismatch("entries do not match dim_rows x dim_cols");
        }
        let m = CMatrix::from_fn(self.dim_rows, self.dim_cols, |r, c| {
            let [re, im] = self.entries[r][c];
            Complex64::new(re, im)
        });
        if self.unitary {
            let defect = unitarity_defect(&m);
            if defect > 1e-10 {
                return invalid(format!("matrix flagged unitary has defect {defect:.2e}"));
            }
        }
        Ok(m)
    }
}
