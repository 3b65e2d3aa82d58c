//! Two-particle interference, indistinguishability estimators and bunching
//! probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, mismatch, Error, Result};
use crate::hidden_dof::{mixture_probability, PartitionMixture};
use crate::linopt::{all_occupations, hermitian_eigen, submatrix, SiteList};
use crate::stats::{
    bootstrap_bc_interval, bootstrap_replicates, multinomial, multinomial_covariance, numerical_hessian, time_label_two_particle,
    CountsDataset, CountsTable, OutcomeCount, OutcomeLabel, SettingCounts,
};
use crate::symrep::{all_permutations, binomial, hook_dimension, CharacterTable, Partition};
use crate::{CMatrix, Complex64};

/// Largest side accepted by [`normalized_immanant`].
pub const IMMANANT_CAP: usize = 8;

fn check_site(u: &CMatrix, s: usize, rows: bool) -> Result<()> {
    let bound = if rows { u.nrows() } else { u.ncols() };
    if s == 0 || s > bound {
        return invalid(format!("site {s} outside 1..={bound}"));
    }
    Ok(())
}

/// Two distinct inputs and two disjoint output site sets (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct HomSetting {
    pub u: CMatrix,
    pub inputs: (usize, usize),
    pub outputs: (Vec<usize>, Vec<usize>),
}

impl HomSetting {
    pub fn new(u: CMatrix, inputs: (usize, usize), outputs: (Vec<usize>, Vec<usize>)) -> Result<Self> {
        if inputs.0 == inputs.1 {
            return invalid("HOM inputs must be distinct");
        }
        check_site(&u, inputs.0, false)?;
        check_site(&u, inputs.1, false)?;
        for &s in outputs.0.iter().chain(&outputs.1) {
            check_site(&u, s, true)?;
        }
        if outputs.0.iter().any(|s| outputs.1.contains(s)) {
            return invalid("output sets must be disjoint");
        }
        Ok(HomSetting { u, inputs, outputs })
    }

    pub fn tau(&self) -> Result<f64> {
        tau(&self.u, (&self.outputs.0, &self.outputs.1), self.inputs)
    }

    /// Lossless probability of one particle in each output set.
    pub fn coincidence(&self, indist: f64) -> Result<f64> {
        let mut p = 0.0;
        for &a in &self.outputs.0 {
            for &b in &self.outputs.1 {
                p += coincidence_probability(&self.u, self.inputs, (a, b), indist)?;
            }
        }
        Ok(p)
    }
}

/// Distinguishable term and interference term for one output pair.
fn pair_terms(u: &CMatrix, i: (usize, usize), l: (usize, usize)) -> (f64, f64) {
    let e = |r: usize, c: usize| u[(r - 1, c - 1)];
    let (a, b) = (e(l.0, i.0) * e(l.1, i.1), e(l.0, i.1) * e(l.1, i.0));
    (a.norm_sqr() + b.norm_sqr(), 2.0 * (a * b.conj()).re)
}

/// `p(l|i) = |U_{l₁i₁}|²|U_{l₂i₂}|² + |U_{l₁i₂}|²|U_{l₂i₁}|² + 2𝓘 Re(U_{l₁i₁}U_{l₂i₂}U*_{l₁i₂}U*_{l₂i₁})`.
pub fn coincidence_probability(u: &CMatrix, i: (usize, usize), l: (usize, usize), indist: f64) -> Result<f64> {
    if i.0 == i.1 || l.0 == l.1 {
        return invalid("inputs and outputs must be distinct pairs");
    }
    if !(0.0..=1.0).contains(&indist) {
        return invalid(format!("indistinguishability {indist} outside [0, 1]"));
    }
    check_site(u, i.0, false)?;
    check_site(u, i.1, false)?;
    check_site(u, l.0, true)?;
    check_site(u, l.1, true)?;
    let (dist, cross) = pair_terms(u, i, l);
    Ok(dist + indist * cross)
}

/// `τ_{S,i}(U) = −Σ 2Re(U*U*UU) / Σ (|U|²|U|² + |U|²|U|²)` over `l₁ ∈ S₁, l₂ ∈ S₂`.
pub fn tau(u: &CMatrix, s: (&[usize], &[usize]), i: (usize, usize)) -> Result<f64> {
    if i.0 == i.1 {
        return invalid("inputs must be distinct");
    }
    check_site(u, i.0, false)?;
    check_site(u, i.1, false)?;
    if s.0.iter().any(|x| s.1.contains(x)) {
        return invalid("output sets must be disjoint");
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &a in s.0 {
        check_site(u, a, true)?;
        for &b in s.1 {
            check_site(u, b, true)?;
            let (d, c) = pair_terms(u, i, (a, b));
            den += d;
            num += c;
        }
    }
    if den <= 1e-300 {
        return Err(Error::Degenerate("zero distinguishable coincidence probability".into()));
    }
    Ok(-num / den)
}

/// `𝓘 = (1 − Q)/τ`, clipped above at 1.
pub fn estimate_indistinguishability(q_hat: f64, tau: f64) -> Result<f64> {
    if tau <= 0.0 || !tau.is_finite() {
        return invalid(format!("τ = {tau} must be positive"));
    }
    Ok(((1.0 - q_hat) / tau).min(1.0))
}

/// `𝓘 ≥ 1 − Q`, valid for any `τ ≤ 1`.
pub fn indistinguishability_lower_bound(q_hat: f64) -> f64 {
    1.0 - q_hat
}

/// Calibrated-loss estimate `𝓘 = (p₂(∅) − p₁ᵃ(∅)p₁ᵇ(∅) − D)/D`.
///
/// `same_site_dist` is `D = Σ_l p_obs(l|i₁)p_obs(l|i₂)` built from the observed
/// (loss-inclusive) single-particle distributions, which carries the `(1 − p_λ)²`
/// survival factor of the two-particle same-site term.
pub fn indistinguishability_from_vacuum(p2_empty: f64, p1a_empty: f64, p1b_empty: f64, same_site_dist: f64) -> Result<f64> {
    if same_site_dist <= 0.0 {
        return Err(Error::Degenerate("same-site distinguishable probability must be positive".into()));
    }
    Ok((p2_empty - p1a_empty * p1b_empty - same_site_dist) / same_site_dist)
}

/// Gram matrix `G_{xy} = ⟨U(S|i_x), U(S|i_y)⟩` of the columns of `U(S|i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix(pub CMatrix);

impl GramMatrix {
    pub fn new(u: &CMatrix, s: &[usize], i: &SiteList) -> Result<Self> {
        let sub = submatrix(u, &SiteList(s.to_vec()), i)?;
        let g = sub.adjoint() * sub;
        let (vals, _) = hermitian_eigen(&g);
        if vals.iter().any(|&v| v < -1e-10) || g.diagonal().iter().any(|d| d.re > 1.0 + 1e-10) {
            return invalid("Gram matrix is not PSD with diagonal ≤ 1");
        }
        Ok(GramMatrix(g))
    }
}

/// `(1/χ_λ(e)) Σ_σ χ_λ(σ) ∏_x M_{x,σ(x)}` by the literal character sum.
pub fn normalized_immanant(m: &CMatrix, lambda: &Partition) -> Result<Complex64> {
    let table = CharacterTable::new(lambda.n())?;
    immanant_with_table(m, lambda, &table)
}

fn immanant_with_table(m: &CMatrix, lambda: &Partition, table: &CharacterTable) -> Result<Complex64> {
    let n = lambda.n();
    if m.shape() != (n, n) {
        return mismatch(format!("matrix must be {n}x{n} for partition {lambda}"));
    }
    if n > IMMANANT_CAP {
        return Err(Error::SizeLimit(format!("immanant side {n} above {IMMANANT_CAP}")));
    }
    let li = table.class_index(lambda);
    let total: Complex64 = all_permutations(n)
        .iter()
        .map(|s| {
            let chi = table.value(li, s);
            if chi == 0 {
                return Complex64::new(0.0, 0.0);
            }
            (0..n).map(|x| m[(x, s.apply(x))]).product::<Complex64>() * chi as f64
        })
        .sum();
    Ok(total / hook_dimension(lambda) as f64)
}

/// Probability that every particle lands in `S`: `Σ_λ p^λ f_{χ_λ}(G)` with `G` the Gram matrix of `U(S|i)`.
pub fn generalized_bunching(u: &CMatrix, i: &SiteList, s: &[usize], mix: &PartitionMixture) -> Result<f64> {
    if s.is_empty() {
        return invalid("bunching set must be nonempty");
    }
    if !i.is_distinct() {
        return invalid("generalized bunching requires distinct inputs");
    }
    if mix.n != i.len() {
        return mismatch("mixture size differs from particle number");
    }
    let g = GramMatrix::new(u, s, i)?;
    let table = CharacterTable::new(mix.n)?;
    let mut total = 0.0;
    for (l, p) in &mix.weights {
        if *p != 0.0 {
            total += p * immanant_with_table(&g.0, l, &table)?.re;
        }
    }
    Ok(total)
}

/// Normalized immanant of the Gram matrix for each `λ`.
pub fn bunching_components(u: &CMatrix, i: &SiteList, s: &[usize]) -> Result<Vec<(Partition, f64)>> {
    let g = GramMatrix::new(u, s, i)?;
    let table = CharacterTable::new(i.len())?;
    table
        .partitions
        .iter()
        .map(|l| Ok((l.clone(), immanant_with_table(&g.0, l, &table)?.re)))
        .collect()
}

/// Averaged bunching value with a flag for `k < n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AveragedBunching {
    pub value: f64,
    /// `k < n`: outside the supported range, `value` is 0.
    pub below_n: bool,
}

/// `C(m − c, k − c)/C(m, k)`: fraction of `k`-subsets containing `c` given sites.
pub fn subset_fraction(m: usize, k: usize, c: usize) -> f64 {
    if c > k || k > m {
        return 0.0;
    }
    binomial(m - c, k - c) as f64 / binomial(m, k) as f64
}

/// `b_k = 𝔼_g[C(m − #(g), k − #(g))/C(m, k)]`, the bunching probability averaged over all `k`-subsets.
///
/// Computed exactly from the outcome distribution. For `k < n` the value is reported as 0
/// with `below_n` set.
pub fn average_generalized_bunching(u: &CMatrix, i: &SiteList, k: usize, mix: &PartitionMixture) -> Result<AveragedBunching> {
    let m = u.nrows();
    let n = i.len();
    if k == 0 || k > m {
        return invalid(format!("subset size {k} outside 1..={m}"));
    }
    if k < n {
        return Ok(AveragedBunching { value: 0.0, below_n: true });
    }
    let outcomes = all_occupations(m, n);
    let terms: Vec<Result<f64>> = outcomes
        .par_iter()
        .map(|g| {
            let w = subset_fraction(m, k, g.occupied());
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * mixture_probability(mix, u, i, g)?)
        })
        .collect();
    let mut value = 0.0;
    for t in terms {
        value += t?;
    }
    Ok(AveragedBunching { value, below_n: k < n })
}

/// `C(m − n, k − n)/C(m, k)`: the averaged bunching of fermions, independent of `U`.
pub fn fermionic_floor(m: usize, n: usize, k: usize) -> f64 {
    subset_fraction(m, k, n)
}

/// `k = ⌊m − m/n⌉`, clamped to `n..=m`.
pub fn optimal_k(m: usize, n: usize) -> usize {
    let k = (m as f64 - m as f64 / n as f64).round() as usize;
    k.clamp(n.min(m), m)
}

/// Site-resolved single-particle counts; `None` marks a lost particle.
pub type SingleParticleCounts = CountsTable<Option<usize>>;

/// Resampling chunk size for [`modified_bunching_mc`]; part of the determinism contract.
pub const MC_CHUNK: usize = 4096;

struct Sampler {
    cumulative: Vec<u64>,
    labels: Vec<Option<usize>>,
}

impl Sampler {
    fn new(t: &SingleParticleCounts) -> Self {
        let mut acc = 0;
        let cumulative = t
            .counts
            .iter()
            .map(|&c| {
                acc += c;
                acc
            })
            .collect();
        Sampler {
            cumulative,
            labels: t.outcomes.clone(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        let total = *self.cumulative.last().expect("nonempty");
        let x = rng.random_range(0..total);
        self.labels[self.cumulative.partition_point(|&c| c <= x)]
    }
}

/// Monte Carlo estimate of the averaged modified bunching probability of time-labelled particles.
///
/// Each draw takes one outcome from every single-particle dataset (with replacement),
/// reduces the composite occupation modulo 2 and scores `C(m − c, k − c)/C(m, k)` with
/// `c` the number of odd sites. Draws are split into chunks of [`MC_CHUNK`], each with its
/// own ChaCha8 stream derived from `seed`, so the estimate does not depend on threading.
pub fn modified_bunching_mc(counts: &[SingleParticleCounts], m: usize, k: usize, n_mc: u64, seed: u64) -> Result<f64> {
    if counts.is_empty() {
        return invalid("no single-particle datasets");
    }
    if n_mc == 0 {
        return invalid("need at least one Monte Carlo draw");
    }
    if k == 0 || k > m {
        return invalid(format!("subset size {k} outside 1..={m}"));
    }
    for t in counts {
        if t.total() == 0 {
            return invalid("empty single-particle dataset");
        }
        if t.outcomes.iter().flatten().any(|&s| s == 0 || s > m) {
            return invalid("site label outside 1..=m");
        }
    }
    let samplers: Vec<Sampler> = counts.iter().map(Sampler::new).collect();
    let score: Vec<f64> = (0..=counts.len()).map(|c| subset_fraction(m, k, c)).collect();
    let chunks = n_mc.div_ceil(MC_CHUNK as u64);
    let sums: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|ch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ch);
            let len = (n_mc - ch * MC_CHUNK as u64).min(MC_CHUNK as u64);
            let mut parity = vec![false; m + 1];
            let mut touched = Vec::with_capacity(samplers.len());
            let mut sum = 0.0;
            for _ in 0..len {
                for s in &samplers {
                    if let Some(site) = s.draw(&mut rng) {
                        parity[site] = !parity[site];
                        touched.push(site);
                    }
                }
                let mut odd = 0;
                for &site in &touched {
                    if parity[site] {
                        odd += 1;
                        parity[site] = false;
                    }
                }
                touched.clear();
                sum += score[odd];
            }
            sum
        })
        .collect();
    Ok(sums.iter().sum::<f64>() / n_mc as f64)
}

/// Outcome of a permanental-dominance check on one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceReport {
    pub bosonic: f64,
    pub components: Vec<(Partition, f64)>,
    /// Partitions whose bunching exceeds the bosonic value by more than `1e-12`.
    pub violations: Vec<(Partition, f64)>,
}

/// Compares `b(S|φ_(n))` against `b(S|φ_λ)` for every `λ ⊢ n`.
///
/// A violation would be a counterexample to Lieb's permanental-dominance conjecture;
/// it is reported, never turned into an error.
pub fn permanental_dominance(u: &CMatrix, i: &SiteList, s: &[usize]) -> Result<DominanceReport> {
    let components = bunching_components(u, i, s)?;
    let bosonic = components[0].1;
    let violations = components.iter().filter(|(_, b)| *b > bosonic + 1e-12).cloned().collect();
    Ok(DominanceReport {
        bosonic,
        components,
        violations,
    })
}

/// One- and two-particle datasets for an HOM measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct HomData {
    pub single_a: SettingCounts,
    pub single_b: SettingCounts,
    pub pairs: SettingCounts,
}

impl HomData {
    /// Looks up the three settings in a combined dataset.
    pub fn from_dataset(d: &CountsDataset, inputs: (usize, usize)) -> Result<Self> {
        let find = |p: &[usize]| {
            d.setting(p)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("dataset lacks setting {p:?}")))
        };
        let mut pair = [inputs.0, inputs.1];
        pair.sort_unstable();
        Ok(HomData {
            single_a: find(&[inputs.0])?,
            single_b: find(&[inputs.1])?,
            pairs: find(&pair)?,
        })
    }
}

/// Options for [`estimate_hom`].
#[derive(Clone, Debug, PartialEq)]
pub struct HomOptions {
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub tau: Option<f64>,
    pub bootstrap: usize,
    pub seed: u64,
    /// One-sided level; the interval has intended coverage `1 − 2α`.
    pub alpha: f64,
}

/// Result of [`estimate_hom`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomEstimate {
    pub loss: f64,
    pub q_plugin: f64,
    /// Delta-method corrected `Q`.
    pub q: f64,
    pub indist: Option<f64>,
    pub indist_interval: Option<(f64, f64)>,
    pub lower_bound: f64,
    pub lower_bound_interval: Option<(f64, f64)>,
    /// Calibrated-loss estimate from vacuum events, when its denominator is positive.
    pub vacuum_estimate: Option<f64>,
    /// Every bootstrap replicate equals the point estimate.
    pub degenerate: bool,
}

/// Counts reduced to the categories the estimator depends on.
#[derive(Clone, Debug)]
struct ReducedHom {
    /// coincidences between S₁ and S₂, exactly one detection, everything else
    pair: [u64; 3],
    /// one count per site of S₁ ∪ S₂, then empty, then everything else
    a: Vec<u64>,
    b: Vec<u64>,
    s1_idx: Vec<usize>,
    s2_idx: Vec<usize>,
}

fn reduce_single(s: &SettingCounts, sites: &[usize]) -> Vec<u64> {
    let mut out: Vec<u64> = sites.iter().map(|&l| s.count(&OutcomeLabel::Sites(vec![l]))).collect();
    let empty = s.count(&OutcomeLabel::Empty);
    let used: u64 = out.iter().sum::<u64>() + empty;
    out.push(empty);
    out.push(s.total() - used);
    out
}

impl ReducedHom {
    fn new(data: &HomData, s1: &[usize], s2: &[usize]) -> Result<Self> {
        let sites: Vec<usize> = s1.iter().chain(s2).copied().collect();
        let mut coinc = 0;
        let mut beta = 0;
        for o in &data.pairs.outcomes {
            if let OutcomeLabel::Sites(v) = &o.label {
                match v.as_slice() {
                    [_] => beta += o.count,
                    [x, y] if (s1.contains(x) && s2.contains(y)) || (s1.contains(y) && s2.contains(x)) => coinc += o.count,
                    _ => {}
                }
            }
        }
        let n_pair = data.pairs.total();
        if n_pair == 0 || data.single_a.total() == 0 || data.single_b.total() == 0 {
            return invalid("HOM estimation needs nonempty one- and two-particle datasets");
        }
        Ok(ReducedHom {
            pair: [coinc, beta, n_pair - coinc - beta],
            a: reduce_single(&data.single_a, &sites),
            b: reduce_single(&data.single_b, &sites),
            s1_idx: (0..s1.len()).collect(),
            s2_idx: (s1.len()..sites.len()).collect(),
        })
    }

    fn freqs(c: &[u64]) -> Vec<f64> {
        let n: u64 = c.iter().sum();
        c.iter().map(|&x| x as f64 / n as f64).collect()
    }

    /// `Q` from frequency vectors (trailing "rest" categories dropped).
    fn q(&self, pair: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let loss = loss_extended(pair[1]);
        let p_c = pair[0] / ((1.0 - loss) * (1.0 - loss));
        let d = a.len() - 1;
        let pa: Vec<f64> = a[..d].iter().map(|x| x / (1.0 - a[d])).collect();
        let pb: Vec<f64> = b[..d].iter().map(|x| x / (1.0 - b[d])).collect();
        let mut p_d = 0.0;
        for &x in &self.s1_idx {
            for &y in &self.s2_idx {
                p_d += pa[x] * pb[y] + pa[y] * pb[x];
            }
        }
        p_c / p_d
    }

    /// Plug-in and delta-corrected `Q` for the given counts.
    fn estimate(&self, pair: &[u64], a: &[u64], b: &[u64]) -> (f64, f64) {
        let fp = Self::freqs(pair);
        let fa = Self::freqs(a);
        let fb = Self::freqs(b);
        let (xp, xa, xb) = (&fp[..2], &fa[..fa.len() - 1], &fb[..fb.len() - 1]);
        let q0 = self.q(xp, xa, xb);
        if !q0.is_finite() {
            return (q0, q0);
        }
        let h = 1e-4;
        let mut corr = 0.0;
        let hp = numerical_hessian(|x| self.q(x, xa, xb), xp, h);
        corr += (multinomial_covariance(xp) * hp).trace() / pair.iter().sum::<u64>() as f64;
        let ha = numerical_hessian(|x| self.q(xp, x, xb), xa, h);
        corr += (multinomial_covariance(xa) * ha).trace() / a.iter().sum::<u64>() as f64;
        let hb = numerical_hessian(|x| self.q(xp, xa, x), xb, h);
        corr += (multinomial_covariance(xb) * hb).trace() / b.iter().sum::<u64>() as f64;
        (q0, q0 - 0.5 * corr)
    }
}

/// Smaller root of `2p(1−p) = p_β`, continued smoothly below zero for finite differences.
fn loss_extended(p_beta: f64) -> f64 {
    let p = p_beta.min(0.5);
    p / (1.0 + (1.0 - 2.0 * p).sqrt())
}

/// Indistinguishability from HOM data with loss and parity detection.
///
/// The loss probability comes from the one-detection frequency of the pair data, the
/// distinguishable coincidence probability from time labelling of survival-conditioned
/// single-particle data, and `Q` is bias-corrected with the delta method (independent
/// multinomial blocks). Bootstrap replicates resample all three datasets.
pub fn estimate_hom(data: &HomData, opts: &HomOptions) -> Result<HomEstimate> {
    if opts.s1.is_empty() || opts.s2.is_empty() || opts.s1.iter().any(|x| opts.s2.contains(x)) {
        return invalid("output sets must be nonempty and disjoint");
    }
    let red = ReducedHom::new(data, &opts.s1, &opts.s2)?;
    let f_beta = red.pair[1] as f64 / red.pair.iter().sum::<u64>() as f64;
    if f_beta > 0.5 {
        return Err(Error::Infeasible(format!("one-detection frequency {f_beta} above 1/2")));
    }
    let (q_plugin, q) = red.estimate(&red.pair, &red.a, &red.b);
    if !q.is_finite() {
        return Err(Error::Degenerate(
            "no distinguishable coincidences in the single-particle data".into(),
        ));
    }
    if let Some(t) = opts.tau {
        if t <= 0.0 {
            return invalid(format!("τ = {t} must be positive"));
        }
    }
    let (mut indist_interval, mut lower_bound_interval, mut degenerate) = (None, None, false);
    if opts.bootstrap > 0 {
        let qs = bootstrap_replicates(opts.bootstrap, opts.seed, |rng| {
            let p = multinomial(red.pair.iter().sum(), &ReducedHom::freqs(&red.pair), rng);
            let a = multinomial(red.a.iter().sum(), &ReducedHom::freqs(&red.a), rng);
            let b = multinomial(red.b.iter().sum(), &ReducedHom::freqs(&red.b), rng);
            red.estimate(&p, &a, &b).1
        });
        let lb: Vec<f64> = qs.iter().map(|q| 1.0 - q).collect();
        let r = bootstrap_bc_interval(&lb, 1.0 - q, opts.alpha, Some(1.0))?;
        lower_bound_interval = Some(r.interval);
        degenerate = r.degenerate;
        if let Some(t) = opts.tau {
            let is: Vec<f64> = qs.iter().map(|q| (1.0 - q) / t).collect();
            let r = bootstrap_bc_interval(&is, (1.0 - q) / t, opts.alpha, Some(1.0))?;
            indist_interval = Some(r.interval);
        }
    }
    let vacuum_estimate = vacuum_from_data(data).ok();
    Ok(HomEstimate {
        loss: loss_extended(f_beta),
        q_plugin,
        q,
        indist: opts.tau.map(|t| ((1.0 - q) / t).min(1.0)),
        indist_interval,
        lower_bound: indistinguishability_lower_bound(q).min(1.0),
        lower_bound_interval,
        vacuum_estimate,
        degenerate,
    })
}

/// [`indistinguishability_from_vacuum`] with plug-in frequencies.
pub fn vacuum_from_data(data: &HomData) -> Result<f64> {
    let ta = data.single_a.table();
    let tb = data.single_b.table();
    let empty = OutcomeLabel::Empty;
    let mut same = 0.0;
    for (l, _) in ta.outcomes.iter().zip(&ta.counts) {
        if let OutcomeLabel::Sites(v) = l {
            if v.len() == 1 {
                same += ta.frequency(l) * tb.frequency(l);
            }
        }
    }
    indistinguishability_from_vacuum(
        data.pairs.table().frequency(&empty),
        ta.frequency(&empty),
        tb.frequency(&empty),
        same,
    )
}

/// Outcome distribution of one lossy particle entering `input` (1-based).
pub fn single_particle_distribution(u: &CMatrix, input: usize, loss: f64) -> Vec<(OutcomeLabel, f64)> {
    let mut out: Vec<(OutcomeLabel, f64)> = (1..=u.nrows())
        .map(|l| (OutcomeLabel::Sites(vec![l]), (1.0 - loss) * u[(l - 1, input - 1)].norm_sqr()))
        .collect();
    out.push((OutcomeLabel::Empty, loss));
    out
}

/// Outcome distribution of two lossy particles under parity detection.
///
/// Both survive with `(1−p_λ)²` (same-site pairs read as empty), exactly one survives
/// with `2p_λ(1−p_λ)` and both are lost with `p_λ²`.
pub fn pair_parity_distribution(u: &CMatrix, i: (usize, usize), indist: f64, loss: f64) -> Result<Vec<(OutcomeLabel, f64)>> {
    let m = u.nrows();
    let surv = (1.0 - loss) * (1.0 - loss);
    let col = |l: usize, c: usize| u[(l - 1, c - 1)].norm_sqr();
    let mut out = Vec::new();
    let mut empty = loss * loss;
    for l1 in 1..=m {
        empty += surv * (1.0 + indist) * col(l1, i.0) * col(l1, i.1);
        for l2 in l1 + 1..=m {
            out.push((
                OutcomeLabel::Sites(vec![l1, l2]),
                surv * coincidence_probability(u, i, (l1, l2), indist)?,
            ));
        }
    }
    for l in 1..=m {
        out.push((OutcomeLabel::Sites(vec![l]), loss * (1.0 - loss) * (col(l, i.0) + col(l, i.1))));
    }
    out.push((OutcomeLabel::Empty, empty));
    Ok(out)
}

fn sample_setting<R: Rng + ?Sized>(prepared: Vec<usize>, dist: &[(OutcomeLabel, f64)], shots: u64, rng: &mut R) -> SettingCounts {
    let probs: Vec<f64> = dist.iter().map(|(_, p)| p.max(0.0)).collect();
    let counts = multinomial(shots, &probs, rng);
    SettingCounts {
        prepared_sites: prepared,
        outcomes: dist
            .iter()
            .zip(counts)
            .map(|((l, _), c)| OutcomeCount {
                label: l.clone(),
                count: c,
            })
            .collect(),
    }
}

/// Synthetic HOM datasets for a unitary, indistinguishability and loss.
pub fn simulate_hom<R: Rng + ?Sized>(
    u: &CMatrix,
    i: (usize, usize),
    indist: f64,
    loss: f64,
    shots_single: u64,
    shots_pair: u64,
    rng: &mut R,
) -> Result<HomData> {
    if !(0.0..=1.0).contains(&loss) {
        return invalid(format!("loss {loss} outside [0, 1]"));
    }
    let pair_dist = pair_parity_distribution(u, i, indist, loss)?;
    let mut pair = [i.0, i.1];
    pair.sort_unstable();
    Ok(HomData {
        single_a: sample_setting(vec![i.0], &single_particle_distribution(u, i.0, loss), shots_single, rng),
        single_b: sample_setting(vec![i.1], &single_particle_distribution(u, i.1, loss), shots_single, rng),
        pairs: sample_setting(pair.to_vec(), &pair_dist, shots_pair, rng),
    })
}

/// Survival-conditioned single-particle site distribution from counts.
pub fn conditioned_site_distribution(s: &SettingCounts, m: usize) -> Vec<f64> {
    let t = s.table();
    let detected: u64 = t.total() - t.count(&OutcomeLabel::Empty);
    (1..=m)
        .map(|l| {
            if detected == 0 {
                0.0
            } else {
                t.count(&OutcomeLabel::Sites(vec![l])) as f64 / detected as f64
            }
        })
        .collect()
}

/// Time-labelled distinguishable coincidence probability between `s1` and `s2`.
pub fn time_labelled_coincidence(a: &SettingCounts, b: &SettingCounts, m: usize, s1: &[usize], s2: &[usize]) -> Result<f64> {
    let d = time_label_two_particle(&conditioned_site_distribution(a, m), &conditioned_site_distribution(b, m))?;
    Ok(d.between(s1, s2))
}
