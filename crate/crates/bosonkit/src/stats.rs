//! Estimation utilities: delta-method bias correction, bias-corrected
//! percentile bootstrap, exact binomial bounds, Monte Carlo sample sizing,
//! loss calibration and count-data containers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use crate::error::{invalid, mismatch, Error, Result};
use crate::RMatrix;

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal CDF `Φ`.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// Standard normal quantile `Φ⁻¹`.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Outcome counts for one experimental setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsTable<L> {
    pub outcomes: Vec<L>,
    pub counts: Vec<u64>,
}

impl<L: PartialEq + Clone> CountsTable<L> {
    /// Labels must be unique and paired one-to-one with counts.
    pub fn new(outcomes: Vec<L>, counts: Vec<u64>) -> Result<Self> {
        if outcomes.len() != counts.len() {
            return mismatch("one count per outcome label required");
        }
        for (a, l) in outcomes.iter().enumerate() {
            if outcomes[..a].contains(l) {
                return invalid("duplicate outcome label");
            }
        }
        Ok(CountsTable { outcomes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, label: &L) -> u64 {
        self.outcomes.iter().position(|l| l == label).map(|k| self.counts[k]).unwrap_or(0)
    }

    /// Empirical frequencies; all zero for an empty table.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total();
        if n == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / n as f64).collect()
    }

    pub fn frequency(&self, label: &L) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.count(label) as f64 / n as f64
        }
    }

    /// Multinomial resample with the same total.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let probs = self.frequencies();
        CountsTable {
            outcomes: self.outcomes.clone(),
            counts: multinomial(self.total(), &probs, rng),
        }
    }
}

/// Multinomial draw via sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass = probs.iter().map(|p| p.max(0.0)).sum::<f64>();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 || mass <= 0.0 {
            break;
        }
        let p = p.max(0.0);
        let cond = (p / mass).clamp(0.0, 1.0);
        let draw = if k + 1 == probs.len() || cond >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, cond).expect("probability in [0,1]").sample(rng)
        };
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

/// Outcome label in a counts file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeLabel {
    /// Detected sites (1-based, nondecreasing).
    Sites(Vec<usize>),
    /// Nothing detected.
    Empty,
    /// Aggregated remainder event.
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCount {
    pub label: OutcomeLabel,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub prepared_sites: Vec<usize>,
    pub outcomes: Vec<OutcomeCount>,
}

impl SettingCounts {
    pub fn table(&self) -> CountsTable<OutcomeLabel> {
        CountsTable {
            outcomes: self.outcomes.iter().map(|o| o.label.clone()).collect(),
            counts: self.outcomes.iter().map(|o| o.count).collect(),
        }
    }

    pub fn from_table(prepared_sites: Vec<usize>, table: &CountsTable<OutcomeLabel>) -> Self {
        SettingCounts {
            prepared_sites,
            outcomes: table
                .outcomes
                .iter()
                .zip(&table.counts)
                .map(|(l, &c)| OutcomeCount {
                    label: l.clone(),
                    count: c,
                })
                .collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.outcomes.iter().map(|o| o.count).sum()
    }

    pub fn count(&self, label: &OutcomeLabel) -> u64 {
        self.outcomes.iter().filter(|o| &o.label == label).map(|o| o.count).sum()
    }
}

fn default_schema() -> u32 {
    1
}

/// Per-setting outcome counts as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsDataset {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub modes: usize,
    pub settings: Vec<SettingCounts>,
}

impl CountsDataset {
    pub fn new(modes: usize, settings: Vec<SettingCounts>) -> Result<Self> {
        let d = CountsDataset {
            schema_version: 1,
            modes,
            settings,
        };
        d.validate()?;
        Ok(d)
    }

    /// Site indices in range, site labels nondecreasing, labels unique per setting.
    pub fn validate(&self) -> Result<()> {
        let in_range = |s: &usize| (1..=self.modes).contains(s);
        for (k, s) in self.settings.iter().enumerate() {
            if s.prepared_sites.is_empty() || !s.prepared_sites.iter().all(in_range) {
                return invalid(format!("setting {k}: prepared sites out of range"));
            }
            for (a, o) in s.outcomes.iter().enumerate() {
                if let OutcomeLabel::Sites(v) = &o.label {
                    if !v.iter().all(in_range) || v.windows(2).any(|w| w[0] > w[1]) || v.is_empty() {
                        return invalid(format!("setting {k}: bad site label {v:?}"));
                    }
                }
                if s.outcomes[..a].iter().any(|p| p.label == o.label) {
                    return invalid(format!("setting {k}: duplicate label {:?}", o.label));
                }
            }
        }
        Ok(())
    }

    pub fn setting(&self, prepared: &[usize]) -> Option<&SettingCounts> {
        self.settings.iter().find(|s| s.prepared_sites == prepared)
    }
}

/// `G = f(X̄) − (1/2n) Tr(Σ̂ H)`, with `Σ̂` the per-sample covariance.
pub fn delta_correct(f_value: f64, hessian: &RMatrix, sample_cov: &RMatrix, n_samples: u64) -> Result<f64> {
    if !hessian.is_square() || hessian.shape() != sample_cov.shape() {
        return mismatch("Hessian and covariance must be square and of equal size");
    }
    if n_samples == 0 {
        return invalid("need at least one sample");
    }
    let tr = (sample_cov * hessian).trace();
    Ok(f_value - 0.5 * tr / n_samples as f64)
}

/// Central-difference Hessian of `f` at `x` with step `h`.
pub fn numerical_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> RMatrix {
    let d = x.len();
    let mut hess = RMatrix::zeros(d, d);
    let mut y = x.to_vec();
    let f0 = f(x);
    for a in 0..d {
        y[a] = x[a] + h;
        let fp = f(&y);
        y[a] = x[a] - h;
        let fm = f(&y);
        y[a] = x[a];
        hess[(a, a)] = (fp - 2.0 * f0 + fm) / (h * h);
        for b in 0..a {
            let mut corner = |sa: f64, sb: f64| {
                y[a] = x[a] + sa * h;
                y[b] = x[b] + sb * h;
                let v = f(&y);
                y[a] = x[a];
                y[b] = x[b];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    hess
}

/// Per-trial covariance `diag(f) − f fᵀ` of disjoint multinomial categories with frequencies `f`.
pub fn multinomial_covariance(freqs: &[f64]) -> RMatrix {
    let d = freqs.len();
    RMatrix::from_fn(d, d, |a, b| {
        if a == b {
            freqs[a] * (1.0 - freqs[a])
        } else {
            -freqs[a] * freqs[b]
        }
    })
}

/// Bias-corrected ratio `a/f − a f(1−f)/(n f³)` for an independent unbiased numerator `a`
/// and a denominator frequency `f` over `n` Bernoulli trials.
pub fn delta_ratio(a: f64, f: f64, n: u64) -> Result<f64> {
    if f <= 0.0 || n == 0 {
        return Err(Error::Degenerate("ratio with zero denominator".into()));
    }
    Ok(a / f - (1.0 - f) * f * a / (n as f64 * f.powi(3)))
}

/// Bootstrap summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub point: f64,
    pub replicates: Vec<f64>,
    pub interval: (f64, f64),
    pub alpha: f64,
    /// Histogram has all mass at the point estimate; use an exact-count interval instead.
    pub degenerate: bool,
}

/// Empirical `β` quantile `θ*_(⌈βB⌉)` of sorted replicates.
///
/// `βB` within `1e-6` of an integer is snapped to it, absorbing the round-trip
/// error of `Φ(Φ⁻¹(α))`.
fn percentile(sorted: &[f64], beta: f64) -> f64 {
    let b = sorted.len();
    let x = beta * b as f64;
    let x = if (x - x.round()).abs() < 1e-6 { x.round() } else { x };
    let rank = x.ceil().max(1.0) as usize;
    sorted[rank.min(b) - 1]
}

/// Bias-corrected percentile interval of intended coverage `1 − 2α`, without acceleration.
///
/// `ẑ₀ = Φ⁻¹(#(θ*_b ≤ θ̂)/B)`, with the proportion kept inside `[1/2B, 1 − 1/2B]`.
pub fn bootstrap_bc_interval(replicates: &[f64], point: f64, alpha: f64, clip_hi: Option<f64>) -> Result<BootstrapResult> {
    if replicates.len() < 2 {
        return invalid("need at least two bootstrap replicates");
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return invalid(format!("alpha = {alpha} outside (0, 0.5)"));
    }
    if replicates.iter().any(|r| r.is_nan()) || point.is_nan() {
        return Err(Error::Numerical("NaN bootstrap replicate".into()));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let clip = |v: f64| clip_hi.map_or(v, |c| v.min(c));
    if sorted[0] == sorted[sorted.len() - 1] && sorted[0] == point {
        return Ok(BootstrapResult {
            point: clip(point),
            replicates: replicates.to_vec(),
            interval: (clip(point), clip(point)),
            alpha,
            degenerate: true,
        });
    }
    let b = sorted.len() as f64;
    let below = sorted.iter().filter(|&&r| r <= point).count() as f64;
    let prop = (below / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = normal_quantile(prop);
    let a1 = normal_cdf(2.0 * z0 + normal_quantile(alpha));
    let a2 = normal_cdf(2.0 * z0 + normal_quantile(1.0 - alpha));
    let lo = percentile(&sorted, a1);
    let hi = percentile(&sorted, a2);
    Ok(BootstrapResult {
        point: clip(point),
        replicates: replicates.to_vec(),
        interval: (clip(lo), clip(hi)),
        alpha,
        degenerate: false,
    })
}

/// `B` replicates of `stat`, each with its own RNG stream derived from `seed`.
///
/// Results are independent of the thread count.
pub fn bootstrap_replicates<F>(b: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            stat(&mut rng)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

/// `P(X ≥ k)` for `X ~ Bin(n, p)`.
fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    beta_reg(k as f64, (n - k + 1) as f64, p)
}

/// `P(X ≤ k)` for `X ~ Bin(n, p)`.
fn lower_tail(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    1.0 - upper_tail(k + 1, n, p)
}

/// Exact one-sided binomial bound at significance `alpha`.
///
/// The lower bound solves `P(X ≥ k | p) = α` and the upper bound solves
/// `P(X ≤ k | p) = α`, both by bisection on the binomial tail.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64, side: Side) -> Result<f64> {
    if k > n {
        return invalid(format!("{k} successes in {n} trials"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha = {alpha} outside (0, 1)"));
    }
    match side {
        Side::Lower if k == 0 => return Ok(0.0),
        Side::Upper if k == n => return Ok(1.0),
        _ => {}
    }
    // tail(p) is increasing in p for the lower bound, decreasing for the upper
    let increasing = side == Side::Lower;
    let tail = |p: f64| match side {
        Side::Lower => upper_tail(k, n, p),
        Side::Upper => lower_tail(k, n, p),
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = tail(mid) > alpha;
        if above == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Significance split for [`union_ratio_interval`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnionSplit {
    pub alpha: f64,
    pub beta_u: f64,
    pub beta_l: f64,
}

impl Default for UnionSplit {
    fn default() -> Self {
        UnionSplit {
            alpha: (1.0 - 0.68) / 2.0,
            beta_u: 0.004,
            beta_l: 0.15999,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioInterval {
    pub lo: f64,
    pub hi: f64,
    /// The denominator's lower bound is zero, so `hi` is `+∞`.
    pub unbounded: bool,
}

/// One-sided bounds on `p_num/p_den` from Clopper–Pearson bounds combined by a union bound.
///
/// Upper: `CP_up(num, α−β_u)/CP_lo(den, β_u)`. Lower: `CP_lo(num, α−β_l)/CP_up(den, β_l)`.
pub fn union_ratio_interval(num: (u64, u64), den: (u64, u64), split: UnionSplit) -> Result<RatioInterval> {
    let UnionSplit { alpha, beta_u, beta_l } = split;
    if !(beta_u > 0.0 && beta_u < alpha && beta_l > 0.0 && beta_l < alpha) {
        return invalid("split parameters must satisfy 0 < β < α");
    }
    let den_lo = clopper_pearson(den.0, den.1, beta_u, Side::Lower)?;
    let num_hi = clopper_pearson(num.0, num.1, alpha - beta_u, Side::Upper)?;
    let (hi, unbounded) = if den_lo > 0.0 {
        (num_hi / den_lo, false)
    } else {
        (f64::INFINITY, true)
    };
    let num_lo = clopper_pearson(num.0, num.1, alpha - beta_l, Side::Lower)?;
    let den_hi = clopper_pearson(den.0, den.1, beta_l, Side::Upper)?;
    Ok(RatioInterval {
        lo: num_lo / den_hi,
        hi,
        unbounded,
    })
}

/// Bernoulli relative entropy `D(a‖b)` in nats.
pub fn kl_bernoulli(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

fn apply_cap(n: f64, cap: Option<u64>) -> u64 {
    let n = n.max(0.0).ceil();
    let n = if n >= u64::MAX as f64 { u64::MAX } else { n as u64 };
    cap.map_or(n, |c| n.min(c))
}

/// `⌈2 log(1/δ) / D(p(1+ε)‖p)⌉` samples for multiplicative error `ε` with probability `1 − δ`.
pub fn chernoff_samples(p_ref: f64, epsilon: f64, delta: f64, cap: Option<u64>) -> Result<u64> {
    let a = p_ref * (1.0 + epsilon);
    if !(p_ref > 0.0 && p_ref < 1.0 && a > 0.0 && a < 1.0) {
        return invalid(format!("p_ref = {p_ref}, ε = {epsilon} outside the valid range"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("δ = {delta} outside (0, 1)"));
    }
    let d = kl_bernoulli(a, p_ref);
    if d <= 0.0 {
        return invalid("zero divergence: ε = 0 needs infinitely many samples");
    }
    Ok(apply_cap(2.0 * (1.0 / delta).ln() / d, cap))
}

/// `⌈log(2/δ) / (2 (p ε)²)⌉`, clamped at zero.
pub fn hoeffding_samples(p_ref: f64, epsilon: f64, delta: f64, cap: Option<u64>) -> Result<u64> {
    let pe = p_ref * epsilon;
    if pe == 0.0 || !pe.is_finite() || delta <= 0.0 {
        return invalid("need p·ε ≠ 0 and δ > 0");
    }
    Ok(apply_cap((2.0 / delta).ln() / (2.0 * pe * pe), cap))
}

/// Loss probability from the one-survivor probability `p_β = 2 p_λ (1 − p_λ)` (smaller root).
///
/// Evaluated as `p_β / (1 + √(1 − 2p_β))`, which is exact at `p_β = 0`.
pub fn loss_from_single_survival(p_beta: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&p_beta) {
        return Err(Error::Infeasible(format!("single-survival probability {p_beta} outside [0, 1/2]")));
    }
    Ok(p_beta / (1.0 + (1.0 - 2.0 * p_beta).sqrt()))
}

/// Two-particle distribution over unordered site pairs `(l₁ ≤ l₂)`, 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDistribution {
    pub entries: Vec<((usize, usize), f64)>,
}

impl PairDistribution {
    pub fn get(&self, l1: usize, l2: usize) -> f64 {
        let key = (l1.min(l2), l1.max(l2));
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, p)| *p).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Probability that one particle lands in `s1` and the other in `s2` (disjoint sets).
    pub fn between(&self, s1: &[usize], s2: &[usize]) -> f64 {
        s1.iter()
            .flat_map(|&a| s2.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.get(a, b))
            .sum()
    }

    /// Probability that both particles land on the same site.
    pub fn same_site(&self) -> f64 {
        self.entries.iter().filter(|((a, b), _)| a == b).map(|(_, p)| p).sum()
    }
}

/// Time-labelled distinguishable pair distribution
/// `p(l₁,l₂) = p_a(l₁)p_b(l₂) + p_a(l₂)p_b(l₁)` for `l₁ < l₂` and `p_a(l)p_b(l)` on the diagonal.
///
/// Inputs may be subnormalized (loss-inclusive) single-particle distributions.
pub fn time_label_two_particle(dist_a: &[f64], dist_b: &[f64]) -> Result<PairDistribution> {
    if dist_a.len() != dist_b.len() {
        return mismatch("single-particle distributions over different site sets");
    }
    for d in [dist_a, dist_b] {
        if d.iter().any(|&p| p < 0.0) || d.iter().sum::<f64>() > 1.0 + 1e-10 {
            return invalid("not a (sub)probability distribution");
        }
    }
    let m = dist_a.len();
    let mut entries = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        entries.push(((a + 1, a + 1), dist_a[a] * dist_b[a]));
        for b in a + 1..m {
            entries.push(((a + 1, b + 1), dist_a[a] * dist_b[b] + dist_a[b] * dist_b[a]));
        }
    }
    entries.sort_by_key(|x| x.0);
    Ok(PairDistribution { entries })
}
