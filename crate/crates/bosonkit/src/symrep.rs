//! Combinatorics and representation theory of the symmetric group `S_n`.
//!
//! Permutations act on `0..n` internally; constructors taking one-based
//! images are provided for interfaces that speak the usual `1..n` language.
//! Composition follows `(σ ∘ τ)(x) = σ(τ(x))`.
//!
//! Irreducible representations are realized in Young's orthogonal form. The
//! basis of the irrep `λ` is the set of standard tableaux of shape `λ` in
//! last-letter order: tableaux are compared by the sequence
//! `(row of n, row of n-1, …, row of 1)`, ascending lexicographically.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::CMatrix;

/// Default cap on `n` for operations that enumerate all of `S_n`.
pub const MAX_N: usize = 10;

/// `n!` as an exact integer. Panics beyond `n = 34`.
pub fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |acc, k| acc.checked_mul(k).expect("factorial overflow"))
}

/// Binomial coefficient `C(n, k)`, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// An integer partition `λ ⊢ n` stored as nonincreasing positive parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    parts: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(parts: Vec<usize>) -> Result<Self> {
        Partition::new(parts)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.parts
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

impl Partition {
    /// Validates that `parts` is nonincreasing with every part at least 1.
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.contains(&0) {
            return invalid("partition parts must be positive");
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return invalid("partition parts must be nonincreasing");
        }
        Ok(Partition { parts })
    }

    /// Sorts arbitrary positive parts into a partition (used for cycle types).
    pub fn from_unsorted(mut parts: Vec<usize>) -> Result<Self> {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Partition::new(parts)
    }

    /// The one-row partition `(n)`.
    pub fn row(n: usize) -> Self {
        Partition {
            parts: if n == 0 { vec![] } else { vec![n] },
        }
    }

    /// The one-column partition `(1^n)`.
    pub fn column(n: usize) -> Self {
        Partition { parts: vec![1; n] }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Total `n = Σ λ_i`.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of rows `len(λ)`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Conjugate partition `λᵀ`.
    pub fn transpose(&self) -> Partition {
        let cols = self.parts.first().copied().unwrap_or(0);
        let parts = (0..cols).map(|c| self.parts.iter().filter(|&&p| p > c).count()).collect();
        Partition { parts }
    }

    /// `b(λ) = Σ_i (i-1) λ_i` with one-based row index `i`.
    pub fn b(&self) -> usize {
        self.parts.iter().enumerate().map(|(i, &p)| i * p).sum()
    }

    /// Hook lengths of all boxes, row by row.
    pub fn hook_lengths(&self) -> Vec<usize> {
        let t = self.transpose();
        let mut out = Vec::with_capacity(self.n());
        for (r, &row_len) in self.parts.iter().enumerate() {
            for c in 0..row_len {
                out.push(row_len - c + t.parts[c] - r - 1);
            }
        }
        out
    }

    /// Cells as `(row, col)` pairs, row by row.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.parts
            .iter()
            .enumerate()
            .flat_map(|(r, &p)| (0..p).map(move |c| (r, c)))
            .collect()
    }

    /// Number of permutations with this cycle type, `n!/z_μ`.
    pub fn class_size(&self) -> u128 {
        let mut z: u128 = 1;
        let mut i = 0;
        while i < self.parts.len() {
            let part = self.parts[i];
            let mult = self.parts[i..].iter().take_while(|&&p| p == part).count();
            z *= (part as u128).pow(mult as u32) * factorial(mult);
            i += mult;
        }
        factorial(self.n()) / z
    }
}

/// All partitions of `n` in descending lexicographic order, `1 ≤ n ≤ MAX_N`.
pub fn partitions_of(n: usize) -> Result<Vec<Partition>> {
    partitions_of_with_cap(n, MAX_N)
}

/// As [`partitions_of`] with an explicit cap on `n`.
pub fn partitions_of_with_cap(n: usize, cap: usize) -> Result<Vec<Partition>> {
    if n == 0 || n > cap {
        return Err(Error::SizeLimit(format!("n = {n} outside 1..={cap}")));
    }
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if rem == 0 {
            out.push(Partition { parts: cur.clone() });
            return;
        }
        for p in (1..=rem.min(max)).rev() {
            cur.push(p);
            rec(rem - p, p, cur, out);
            cur.pop();
        }
    }
    rec(n, n, &mut cur, &mut out);
    Ok(out)
}

/// `f^λ = n!/∏ h(u)`, the number of standard tableaux of shape `λ`.
pub fn hook_dimension(lambda: &Partition) -> u128 {
    let prod: u128 = lambda.hook_lengths().iter().map(|&h| h as u128).product();
    factorial(lambda.n()) / prod
}

/// Dimension of the `U(m)` irrep labelled by `λ`; zero when `len(λ) > m`.
pub fn weyl_dimension(lambda: &Partition, m: usize) -> u128 {
    if lambda.len() > m {
        return 0;
    }
    let part = |i: usize| lambda.parts.get(i).copied().unwrap_or(0) as i128;
    let mut acc = Ratio::from_integer(1i128);
    for i in 0..m {
        for j in (i + 1)..m {
            let gap = (j - i) as i128;
            acc *= Ratio::new(part(i) - part(j) + gap, gap);
        }
    }
    debug_assert!(acc.is_integer());
    acc.to_integer() as u128
}

/// A bijection of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from zero-based images.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &x in &images {
            if x >= n || seen[x] {
                return invalid("images must be a bijection on 0..n");
            }
            seen[x] = true;
        }
        Ok(Permutation { images })
    }

    /// Builds a permutation from one-based images `1..n`.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return invalid("one-based images must be at least 1");
        }
        Permutation::new(images.iter().map(|x| x - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Permutation { images: (0..n).collect() }
    }

    /// Adjacent transposition swapping `k` and `k+1` (zero-based).
    pub fn adjacent(n: usize, k: usize) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(k, k + 1);
        Permutation { images }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `σ(x)`.
    pub fn apply(&self, x: usize) -> usize {
        self.images[x]
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.n(), other.n(), "composing permutations of different degree");
        Permutation {
            images: other.images.iter().map(|&x| self.images[x]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.n()];
        for (x, &y) in self.images.iter().enumerate() {
            inv[y] = x;
        }
        Permutation { images: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(x, &y)| x == y)
    }

    /// Cycle lengths, including fixed points.
    pub fn cycle_lengths(&self) -> Vec<usize> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut lens = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.images[x];
                len += 1;
            }
            lens.push(len);
        }
        lens
    }

    pub fn cycle_type(&self) -> Partition {
        Partition::from_unsorted(self.cycle_lengths()).expect("cycle lengths are positive")
    }

    /// `+1` for even, `-1` for odd permutations.
    pub fn sign(&self) -> i64 {
        let odd = self.cycle_lengths().iter().filter(|&&l| l % 2 == 0).count() % 2;
        if odd == 0 {
            1
        } else {
            -1
        }
    }

    /// Factors `σ = s_{k_1} s_{k_2} ⋯ s_{k_r}` into adjacent transpositions
    /// by bubble sort, returning `[k_1, …, k_r]`.
    pub fn adjacent_factorization(&self) -> Vec<usize> {
        // swapping positions k, k+1 of the image array right-multiplies by s_k
        let mut a = self.images.clone();
        let mut swaps = Vec::new();
        let n = a.len();
        for pass in 0..n {
            let mut swapped = false;
            for k in 0..n.saturating_sub(1 + pass) {
                if a[k] > a[k + 1] {
                    a.swap(k, k + 1);
                    swaps.push(k);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
        swaps.reverse();
        swaps
    }

    /// Canonical permutation with the given cycle type: consecutive cycles.
    pub fn with_cycle_type(mu: &Partition) -> Permutation {
        let mut images = Vec::with_capacity(mu.n());
        let mut start = 0;
        for &len in mu.parts() {
            for j in 0..len {
                images.push(start + (j + 1) % len);
            }
            start += len;
        }
        Permutation { images }
    }
}

/// All permutations of `0..n` in lexicographic order of their image arrays.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::with_capacity(factorial(n) as usize);
    let mut a: Vec<usize> = (0..n).collect();
    loop {
        out.push(Permutation { images: a.clone() });
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| a[i - 1] < a[i]) else { break };
        let j = (i..n).rev().find(|&j| a[j] > a[i - 1]).unwrap();
        a.swap(i - 1, j);
        a[i..].reverse();
    }
    out
}

/// Steinhaus-Johnson-Trotter order: every permutation after the first is the
/// previous one right-multiplied by the adjacent transposition `s_k`.
/// Returns the permutations and, for each, the `k` that produced it.
pub fn sjt_order(n: usize) -> (Vec<Permutation>, Vec<Option<usize>>) {
    let total = factorial(n) as usize;
    let mut perms = Vec::with_capacity(total);
    let mut steps = Vec::with_capacity(total);
    let mut a: Vec<usize> = (0..n).collect();
    let mut dir: Vec<isize> = vec![-1; n];
    perms.push(Permutation { images: a.clone() });
    steps.push(None);
    loop {
        let mut best: Option<usize> = None;
        for pos in 0..n {
            let v = a[pos];
            let np = pos as isize + dir[v];
            if np >= 0 && (np as usize) < n && a[np as usize] < v && best.is_none_or(|b| a[b] < v) {
                best = Some(pos);
            }
        }
        let Some(pos) = best else { break };
        let v = a[pos];
        let np = (pos as isize + dir[v]) as usize;
        a.swap(pos, np);
        for d in dir.iter_mut().skip(v + 1) {
            *d = -*d;
        }
        perms.push(Permutation { images: a.clone() });
        steps.push(Some(pos.min(np)));
    }
    (perms, steps)
}

/// A standard Young tableau, stored as the cell of each letter `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StandardTableau {
    shape: Partition,
    cells: Vec<(usize, usize)>,
}

impl StandardTableau {
    /// Builds a tableau from its rows of zero-based letters, checking standardness.
    pub fn from_rows(rows: &[Vec<usize>]) -> Result<Self> {
        let shape = Partition::new(rows.iter().map(|r| r.len()).collect())?;
        let n = shape.n();
        let mut cells = vec![(usize::MAX, usize::MAX); n];
        for (r, row) in rows.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if x >= n || cells[x].0 != usize::MAX {
                    return invalid("tableau entries must be 0..n, each once");
                }
                cells[x] = (r, c);
                if c > 0 && row[c - 1] > x {
                    return invalid("rows must increase");
                }
                if r > 0 && rows[r - 1][c] > x {
                    return invalid("columns must increase");
                }
            }
        }
        Ok(StandardTableau { shape, cells })
    }

    pub fn shape(&self) -> &Partition {
        &self.shape
    }

    /// Cell `(row, col)` holding letter `x`.
    pub fn cell(&self, x: usize) -> (usize, usize) {
        self.cells[x]
    }

    /// Content `c_T(x) = col − row` of letter `x`.
    pub fn content(&self, x: usize) -> isize {
        let (r, c) = self.cells[x];
        c as isize - r as isize
    }

    /// Axial distance `d_T(x, y) = c_T(y) − c_T(x)`.
    pub fn axial_distance(&self, x: usize, y: usize) -> isize {
        self.content(y) - self.content(x)
    }

    /// Rows of letters.
    pub fn rows(&self) -> Vec<Vec<usize>> {
        let mut rows: Vec<Vec<usize>> = self.shape.parts().iter().map(|&p| vec![0; p]).collect();
        for (x, &(r, c)) in self.cells.iter().enumerate() {
            rows[r][c] = x;
        }
        rows
    }

    fn row_key(&self) -> Vec<usize> {
        self.cells.iter().map(|&(r, _)| r).collect()
    }
}

/// Standard tableaux of shape `λ` in last-letter order.
pub fn standard_tableaux(lambda: &Partition) -> Vec<StandardTableau> {
    let n = lambda.n();
    let mut out = Vec::new();
    let mut cells = vec![(0, 0); n];
    fn rec(shape: &mut Vec<usize>, k: usize, cells: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if k == 0 {
            out.push(cells.clone());
            return;
        }
        for r in 0..shape.len() {
            let len = shape[r];
            let removable = len > 0 && shape.get(r + 1).is_none_or(|&next| next < len);
            if removable {
                cells[k - 1] = (r, len - 1);
                shape[r] -= 1;
                rec(shape, k - 1, cells, out);
                shape[r] += 1;
            }
        }
    }
    let mut raw = Vec::new();
    rec(&mut lambda.parts().to_vec(), n, &mut cells, &mut raw);
    for c in raw {
        out.push(StandardTableau {
            shape: lambda.clone(),
            cells: c,
        });
    }
    out
}

#[derive(Clone, Debug)]
struct GeneratorEntry {
    diag: f64,
    partner: Option<(usize, f64)>,
}

/// Young's orthogonal form of the irrep `λ`.
#[derive(Clone, Debug)]
pub struct YoungOrthogonalForm {
    lambda: Partition,
    tableaux: Vec<StandardTableau>,
    generators: Vec<Vec<GeneratorEntry>>,
}

impl YoungOrthogonalForm {
    pub fn new(lambda: &Partition) -> Self {
        let n = lambda.n();
        let tableaux = standard_tableaux(lambda);
        let index: HashMap<Vec<usize>, usize> = tableaux.iter().enumerate().map(|(i, t)| (t.row_key(), i)).collect();
        let mut generators = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            let gens = tableaux
                .iter()
                .map(|t| {
                    let d = t.axial_distance(k, k + 1) as f64;
                    let partner = if d.abs() > 1.0 {
                        let mut key = t.row_key();
                        key.swap(k, k + 1);
                        let j = index[&key];
                        Some((j, (1.0 - 1.0 / (d * d)).sqrt()))
                    } else {
                        None
                    };
                    GeneratorEntry { diag: 1.0 / d, partner }
                })
                .collect();
            generators.push(gens);
        }
        YoungOrthogonalForm {
            lambda: lambda.clone(),
            tableaux,
            generators,
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.lambda
    }

    pub fn tableaux(&self) -> &[StandardTableau] {
        &self.tableaux
    }

    pub fn dim(&self) -> usize {
        self.tableaux.len()
    }

    /// Replaces `m` with `m · r(s_k)` (column operation).
    pub fn right_mul_generator(&self, m: &mut DMatrix<f64>, k: usize) {
        let gens = &self.generators[k];
        for (t, g) in gens.iter().enumerate() {
            match g.partner {
                None => m.column_mut(t).scale_mut(g.diag),
                Some((u, off)) if t < u => {
                    let ct = m.column(t).clone_owned();
                    let cu = m.column(u).clone_owned();
                    let du = gens[u].diag;
                    m.set_column(t, &(&ct * g.diag + &cu * off));
                    m.set_column(u, &(&ct * off + &cu * du));
                }
                Some(_) => {}
            }
        }
    }

    /// `r_λ(s_k)` as a dense matrix.
    pub fn generator_matrix(&self, k: usize) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.dim(), self.dim());
        self.right_mul_generator(&mut m, k);
        m
    }

    /// `r_λ(σ)`.
    pub fn matrix(&self, sigma: &Permutation) -> Result<DMatrix<f64>> {
        if sigma.n() != self.lambda.n() {
            return mismatch(format!("permutation on {} letters, partition of {}", sigma.n(), self.lambda.n()));
        }
        let mut m = DMatrix::identity(self.dim(), self.dim());
        for k in sigma.adjacent_factorization() {
            self.right_mul_generator(&mut m, k);
        }
        Ok(m)
    }
}

/// `r_λ(σ)` in Young's orthogonal form.
pub fn young_orthogonal_rep(lambda: &Partition, sigma: &Permutation) -> Result<DMatrix<f64>> {
    YoungOrthogonalForm::new(lambda).matrix(sigma)
}

/// Character value `χ_λ(μ)` by the Murnaghan-Nakayama rule.
pub fn murnaghan_nakayama(lambda: &Partition, mu: &Partition) -> Result<i64> {
    if lambda.n() != mu.n() {
        return mismatch("partitions of different n");
    }
    let l = lambda.len();
    // beta-set: distinct positions λ_i + (l - 1 - i)
    let beta: Vec<usize> = lambda.parts().iter().enumerate().map(|(i, &p)| p + l - 1 - i).collect();
    fn rec(beta: &mut Vec<usize>, parts: &[usize]) -> i64 {
        let Some((&r, rest)) = parts.split_first() else { return 1 };
        let mut total = 0;
        for idx in 0..beta.len() {
            let b = beta[idx];
            if b < r || beta.contains(&(b - r)) {
                continue;
            }
            let height = beta.iter().filter(|&&x| x > b - r && x < b).count();
            beta[idx] = b - r;
            let sign = if height % 2 == 0 { 1 } else { -1 };
            total += sign * rec(beta, rest);
            beta[idx] = b;
        }
        total
    }
    let mut beta = beta;
    Ok(rec(&mut beta, mu.parts()))
}

/// Irreducible character `χ_λ` on the class of cycle type `μ`.
///
/// For `n ≤ 8` this traces Young's orthogonal form on a class
/// representative; larger `n` uses the Murnaghan-Nakayama rule.
pub fn character(lambda: &Partition, mu: &Partition) -> Result<i64> {
    if lambda.n() != mu.n() {
        return mismatch("partitions of different n");
    }
    if lambda.n() <= 8 {
        let r = young_orthogonal_rep(lambda, &Permutation::with_cycle_type(mu))?;
        Ok(r.trace().round() as i64)
    } else {
        murnaghan_nakayama(lambda, mu)
    }
}

/// Character table of `S_n`; rows and columns both follow [`partitions_of`].
#[derive(Clone, Debug)]
pub struct CharacterTable {
    pub partitions: Vec<Partition>,
    pub values: Vec<Vec<i64>>,
    pub class_sizes: Vec<u128>,
}

impl CharacterTable {
    pub fn new(n: usize) -> Result<Self> {
        let partitions = partitions_of(n)?;
        let values = partitions
            .iter()
            .map(|l| partitions.iter().map(|m| character(l, m)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let class_sizes = partitions.iter().map(|m| m.class_size()).collect();
        Ok(CharacterTable {
            partitions,
            values,
            class_sizes,
        })
    }

    pub fn class_index(&self, mu: &Partition) -> usize {
        self.partitions.iter().position(|p| p == mu).expect("class of the right n")
    }

    /// `χ_λ(σ)` by table lookup.
    pub fn value(&self, lambda_idx: usize, sigma: &Permutation) -> i64 {
        self.values[lambda_idx][self.class_index(&sigma.cycle_type())]
    }
}

/// Fourier coefficients `f̂(λ)` for every `λ ⊢ n`, in [`partitions_of`] order.
#[derive(Clone, Debug)]
pub struct IrrepBlocks {
    pub n: usize,
    pub blocks: Vec<(Partition, CMatrix)>,
}

impl IrrepBlocks {
    pub fn get(&self, lambda: &Partition) -> Option<&CMatrix> {
        self.blocks.iter().find(|(l, _)| l == lambda).map(|(_, m)| m)
    }

    /// Blockwise product `f̂(λ) ĝ(λ)`.
    pub fn mul(&self, other: &IrrepBlocks) -> IrrepBlocks {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|((l, a), (_, b))| (l.clone(), a * b))
            .collect();
        IrrepBlocks { n: self.n, blocks }
    }

    /// Blockwise conjugate transpose.
    pub fn adjoint(&self) -> IrrepBlocks {
        let blocks = self.blocks.iter().map(|(l, a)| (l.clone(), a.adjoint())).collect();
        IrrepBlocks { n: self.n, blocks }
    }

    /// `(1/n!) Σ_λ f^λ Tr(F(λ))`.
    pub fn weighted_trace(&self) -> Complex64 {
        let total: Complex64 = self.blocks.iter().map(|(l, m)| m.trace() * hook_dimension(l) as f64).sum();
        total / factorial(self.n) as f64
    }
}

fn check_fourier_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return Err(Error::SizeLimit(format!("Fourier transform needs 1 ≤ n ≤ {MAX_N}, got {n}")));
    }
    Ok(())
}

/// `f̂(λ) = Σ_σ f(σ) r_λ(σ)` for every `λ ⊢ n`.
pub fn fourier_transform<F>(n: usize, f: F) -> Result<IrrepBlocks>
where
    F: Fn(&Permutation) -> Complex64,
{
    check_fourier_n(n)?;
    let (perms, steps) = sjt_order(n);
    let values: Vec<Complex64> = perms.iter().map(&f).collect();
    fourier_from_sjt_values(n, &values, &steps)
}

/// [`fourier_transform`] for a function given as a table; every permutation must be present.
pub fn fourier_transform_map(n: usize, f: &HashMap<Permutation, Complex64>) -> Result<IrrepBlocks> {
    check_fourier_n(n)?;
    let (perms, steps) = sjt_order(n);
    let values = perms
        .iter()
        .map(|p| {
            f.get(p)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("missing value for {:?}", p.images())))
        })
        .collect::<Result<Vec<_>>>()?;
    fourier_from_sjt_values(n, &values, &steps)
}

fn fourier_from_sjt_values(n: usize, values: &[Complex64], steps: &[Option<usize>]) -> Result<IrrepBlocks> {
    let parts = partitions_of(n)?;
    let blocks = parts
        .par_iter()
        .map(|lambda| {
            let yof = YoungOrthogonalForm::new(lambda);
            let d = yof.dim();
            let mut r = DMatrix::<f64>::identity(d, d);
            let mut acc = CMatrix::zeros(d, d);
            for (v, step) in values.iter().zip(steps) {
                if let Some(k) = step {
                    yof.right_mul_generator(&mut r, *k);
                }
                if *v != Complex64::new(0.0, 0.0) {
                    acc.zip_apply(&r, |a, x| *a += v * x);
                }
            }
            (lambda.clone(), acc)
        })
        .collect();
    Ok(IrrepBlocks { n, blocks })
}

/// `f(σ) = (1/n!) Σ_λ f^λ Tr(F(λ) r_λ(σ⁻¹))` for every permutation.
pub fn inverse_fourier(fh: &IrrepBlocks) -> Result<HashMap<Permutation, Complex64>> {
    let n = fh.n;
    check_fourier_n(n)?;
    let (perms, steps) = sjt_order(n);
    let nfact = factorial(n) as f64;
    let partial: Vec<Vec<Complex64>> = fh
        .blocks
        .par_iter()
        .map(|(lambda, block)| {
            let yof = YoungOrthogonalForm::new(lambda);
            let d = yof.dim();
            let weight = hook_dimension(lambda) as f64 / nfact;
            let mut r = DMatrix::<f64>::identity(d, d);
            steps
                .iter()
                .map(|step| {
                    if let Some(k) = step {
                        yof.right_mul_generator(&mut r, *k);
                    }
                    // r(σ⁻¹) = r(σ)ᵀ, so Tr(F r(σ⁻¹)) = Σ_ij F_ij r_ij
                    let s: Complex64 = block.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
                    s * weight
                })
                .collect()
        })
        .collect();
    let mut out = HashMap::with_capacity(perms.len());
    for (idx, p) in perms.into_iter().enumerate() {
        let v: Complex64 = partial.iter().map(|col| col[idx]).sum();
        out.insert(p, v);
    }
    Ok(out)
}
