//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use bosonkit::bunching::{
    average_generalized_bunching, bunching_components, estimate_hom, fermionic_floor, permanental_dominance, simulate_hom, HomOptions,
};
use bosonkit::design::*;
use bosonkit::error_model::{dephase, fidelity_lower_bound, pure_state, DephasingParams};
use bosonkit::hidden_dof::{
    direct_model_probability, mixture_components, mixture_probability, plancherel_exact, thermal_limit_exact, thermal_weight, Auxiliary,
    AuxiliaryClassFunction, PartitionMixture,
};
use bosonkit::linopt::{
    all_occupations, beam_splitter, bosonic_probability, coeffs_from_unitary, distinguishable_probability, random_unitary, spectral_norm,
    unitary_completion, OccupationList, SiteList,
};
use bosonkit::stats::{clopper_pearson, delta_correct, loss_from_single_survival, numerical_hessian, Side};
use bosonkit::symrep::{partitions_of, Partition};
use bosonkit::{CMatrix, Complex64, RMatrix};
use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn distinct_inputs(n: usize, m: usize, r: &mut ChaCha8Rng) -> SiteList {
    let mut v: Vec<usize> = sample(r, m, n).into_iter().map(|x| x + 1).collect();
    v.sort_unstable();
    SiteList(v)
}

fn random_mixture(n: usize, r: &mut ChaCha8Rng) -> PartitionMixture {
    let parts = partitions_of(n).unwrap();
    let raw: Vec<f64> = parts.iter().map(|_| -r.random::<f64>().ln()).collect();
    let t: f64 = raw.iter().sum();
    PartitionMixture::new(n, parts.into_iter().zip(raw).map(|(l, w)| (l, w / t)).collect()).unwrap()
}

/// `f^λ` by removing corners recursively.
fn tableau_count(parts: &[usize]) -> u128 {
    if parts.iter().sum::<usize>() <= 1 {
        return 1;
    }
    let mut total = 0;
    for r in 0..parts.len() {
        let is_corner = r + 1 == parts.len() || parts[r + 1] < parts[r];
        if is_corner {
            let mut smaller = parts.to_vec();
            smaller[r] -= 1;
            if smaller[r] == 0 {
                smaller.pop();
            }
            total += tableau_count(&smaller);
        }
    }
    total
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn c1_hom_suppression() -> Outcome {
    let u = beam_splitter();
    let i = SiteList(vec![1, 2]);
    let start = Instant::now();
    let p11 = bosonic_probability(&u, &i, &OccupationList(vec![1, 1])).map_err(err)?;
    let p20 = bosonic_probability(&u, &i, &OccupationList(vec![2, 0])).map_err(err)?;
    let p02 = bosonic_probability(&u, &i, &OccupationList(vec![0, 2])).map_err(err)?;
    let elapsed = start.elapsed();
    check(p11.abs() <= 1e-12, format!("p(1,1) = {p11:e}"))?;
    check(
        (p20 - 0.5).abs() <= 1e-12 && (p02 - 0.5).abs() <= 1e-12,
        format!("p(2,0) = {p20}, p(0,2) = {p02}"),
    )?;
    check(elapsed < Duration::from_millis(1), format!("took {elapsed:?}"))?;
    Ok(format!("p(1,1) = {p11:.1e}, p(2,0) = {p20}, p(0,2) = {p02}, {elapsed:?}"))
}

fn c2_model_equivalence() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for inst in 0..50 {
        let n = 2 + inst % 3;
        let m = [3, 4, 5][r.random_range(0..3)].max(n);
        let u = random_unitary(m, &mut r);
        let i = distinct_inputs(n, m, &mut r);
        let mix = random_mixture(n, &mut r);
        let k = AuxiliaryClassFunction::from_mixture(&mix).map_err(err)?;
        for g in all_occupations(m, n) {
            let direct = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&k), &g).map_err(err)?;
            let irrep = mixture_probability(&mix, &u, &i, &g).map_err(err)?;
            worst = worst.max((direct - irrep).abs());
            compared += 1;
        }
    }
    check(worst <= 1e-10, format!("max |Δ| = {worst:e}"))?;
    Ok(format!("50 instances, {compared} outcomes, max |Δ| = {worst:.1e}"))
}

fn c3_thermal_weights() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        let top = Partition::new(vec![n]).map_err(err)?;
        for step in 0..20 {
            let x = step as f64 * 0.05;
            let product: f64 = (1..=n).map(|k| (1.0 - x) / (1.0 - x.powi(k as i32))).product();
            worst = worst.max((thermal_weight(&top, x) - product).abs());
        }
    }
    check(worst <= 1e-12, format!("p^(n) mismatch {worst:e}"))?;
    for n in 1..=8 {
        let limit = thermal_limit_exact(n).map_err(err)?;
        let planch = plancherel_exact(n).map_err(err)?;
        check(limit == planch, format!("n = {n}: x → 1 limit differs from Plancherel"))?;
        for (l, p) in &limit {
            let f = tableau_count(l.parts());
            check(*p == Ratio::new(f * f, factorial(n)), format!("n = {n}, {l}: {p}"))?;
        }
    }
    for n in 1..=10 {
        let total: u128 = partitions_of(n).map_err(err)?.iter().map(|l| tableau_count(l.parts()).pow(2)).sum();
        check(total == factorial(n), format!("Σ(f^λ)² = {total} for n = {n}"))?;
    }
    Ok(format!(
        "max |Δp^(n)| = {worst:.1e}; endpoints exact for n ≤ 8; Σ(f^λ)² = n! for n ≤ 10"
    ))
}

fn c4_full_bunching() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        for _ in 0..10 {
            let m = r.random_range(n.max(2)..=6);
            let u = random_unitary(m, &mut r);
            let i = distinct_inputs(n, m, &mut r);
            for site in 0..m {
                let mut g = vec![0; m];
                g[site] = n;
                let g = OccupationList(g);
                let b = bosonic_probability(&u, &i, &g).map_err(err)?;
                let d = distinguishable_probability(&u, &i, &g).map_err(err)?;
                let want = factorial(n) as f64 * d;
                worst = worst.max((b - want).abs() / want);
            }
        }
    }
    check(worst <= 1e-9, format!("relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn c5_generalized_bunching() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        for m in n.max(2)..=5 {
            let u = random_unitary(m, &mut r);
            let i = distinct_inputs(n, m, &mut r);
            let outcomes = all_occupations(m, n);
            let comps: Vec<Vec<(Partition, f64)>> = outcomes
                .iter()
                .map(|g| mixture_components(&u, &i, g))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            for mask in 1u32..(1 << m) {
                let s: Vec<usize> = (0..m).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect();
                let imm = bunching_components(&u, &i, &s).map_err(err)?;
                for (li, (l, value)) in imm.iter().enumerate() {
                    let oracle: f64 = outcomes
                        .iter()
                        .zip(&comps)
                        .filter(|(g, _)| g.0.iter().enumerate().all(|(site, &c)| c == 0 || s.contains(&(site + 1))))
                        .map(|(_, c)| {
                            debug_assert_eq!(&c[li].0, l);
                            c[li].1
                        })
                        .sum();
                    worst = worst.max((oracle - value).abs());
                }
            }
        }
    }
    check(worst <= 1e-10, format!("subset-sum vs immanant {worst:e}"))?;
    let mut floor_err: f64 = 0.0;
    for (m, n) in [(4, 2), (5, 3), (6, 3), (5, 4)] {
        let u = random_unitary(m, &mut r);
        let i = distinct_inputs(n, m, &mut r);
        let fermi = PartitionMixture::delta(&Partition::new(vec![1; n]).map_err(err)?).map_err(err)?;
        for k in n..=m {
            let b = average_generalized_bunching(&u, &i, k, &fermi).map_err(err)?;
            let want = binomial(m - n, k - n) / binomial(m, k);
            floor_err = floor_err.max((b.value - want).abs()).max((fermionic_floor(m, n, k) - want).abs());
        }
    }
    check(floor_err <= 1e-12, format!("fermionic floor error {floor_err:e}"))?;
    let mut violations = 0;
    for _ in 0..1000 {
        let n = r.random_range(2..=4);
        let m = r.random_range(n..=6);
        let u = random_unitary(m, &mut r);
        let i = distinct_inputs(n, m, &mut r);
        let size = r.random_range(1..=m);
        let mut s: Vec<usize> = sample(&mut r, m, size).into_iter().map(|x| x + 1).collect();
        s.sort_unstable();
        let report = permanental_dominance(&u, &i, &s).map_err(err)?;
        if !report.violations.is_empty() {
            violations += 1;
            eprintln!("dominance violation: inputs {:?}, S {s:?}, {:?}", i.0, report.violations);
        }
    }
    Ok(format!("immanant max |Δ| = {worst:.1e}; fermionic floor |Δ| = {floor_err:.1e}; dominance scan 1000 instances, {violations} violations logged"))
}

fn random_setting(id: usize, outcomes: usize, params: usize, r: &mut ChaCha8Rng) -> SettingModel {
    let raw: Vec<f64> = (0..outcomes).map(|_| 0.05 + r.random::<f64>()).collect();
    let t: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.into_iter().map(|x| x / t).collect();
    let b = RMatrix::from_fn(outcomes, params, |_, _| r.random::<f64>() * 2.0 - 1.0);
    let cov = RMatrix::from_fn(outcomes, outcomes, |a, c| if a == c { p[a] - p[a] * p[c] } else { -p[a] * p[c] });
    let labels = (0..outcomes).map(|o| o.to_string()).collect();
    SettingModel::new(id.to_string(), labels, p, cov * b).unwrap()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn c6_design() -> Outcome {
    let start = Instant::now();
    let mut r = rng(6);
    let mut worst_gap: f64 = 0.0;
    let mut instances = 0;
    while instances < 25 {
        let params = r.random_range(2..=4);
        let count = r.random_range(3..=6);
        let settings: Vec<SettingModel> = (0..count)
            .map(|s| random_setting(s, r.random_range(2..=5), params, &mut r))
            .collect();
        let y: Vec<f64> = (0..params).map(|_| 0.2 + r.random::<f64>()).collect();
        let problem = DesignProblem::new(settings, None).map_err(err)?;
        if problem.rank() != params {
            continue;
        }
        let problem = DesignProblem::new(problem.settings, Some(y)).map_err(err)?;
        let opts = DesignOptions::default();
        let direct = a_optimal_direct(&problem.fishers, &problem.y, &opts).map_err(err)?;
        let socp = a_optimal_socp(&problem.projection.projected, &problem.probs(), &problem.y, &opts).map_err(err)?;
        worst_gap = worst_gap.max((direct.cost - socp.cost).abs() / direct.cost);
        instances += 1;
    }
    check(worst_gap <= 1e-5, format!("SOCP/direct relative gap {worst_gap:e}"))?;

    let v = random_unitary(5, &mut r);
    let spec = BosonDesignSpec {
        inputs: vec![1, 2],
        outputs: vec![3, 4, 5],
        x: 0.05,
    };
    let design = BosonDesign::new(spec, &v).map_err(err)?;
    let c0 = design.coeffs.c.clone();
    let mut worst_fim: f64 = 0.0;
    for k in 0..design.subsets.len() {
        let model = design.setting_model(k).map_err(err)?;
        let f = model.fisher().map_err(err)?;
        let p0 = model.probs.clone();
        let hess = numerical_hessian(|c| kl(&p0, &design.setting_probs(k, c).unwrap()), &c0, 1e-4);
        worst_fim = worst_fim.max((&f - &hess).norm() / hess.norm());
    }
    check(worst_fim <= 1e-4, format!("Fisher vs KL Hessian {worst_fim:e}"))?;

    let u = random_unitary(9, &mut rng(7));
    let spec = BosonDesignSpec {
        inputs: vec![1, 2, 3, 4],
        outputs: vec![5, 6, 7, 8, 9],
        x: 0.05,
    };
    let rank = BosonDesign::new(spec, &u).map_err(err)?.problem(None).map_err(err)?.rank();
    check(rank == 32, format!("{rank} inferable parameters"))?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{instances} instances, max gap {worst_gap:.1e}; FIM vs KL Hessian {worst_fim:.1e}; {rank} inferable parameters; {elapsed:.1?}"
    ))
}

fn c7_mle_recovery() -> Outcome {
    let start = Instant::now();
    let mut r = rng(7);
    let v = random_unitary(6, &mut r);
    let truth = TwoParticleModel::new(v.view((0, 0), (3, 3)).into_owned(), 0.1, 0.99, vec![1, 2, 3], vec![4, 5, 6]).map_err(err)?;
    let settings = truth.settings();
    let shots = 100_000u64;
    let data = synthesize_counts(&truth, &settings, shots, &mut r).map_err(err)?;
    let noise = CMatrix::from_fn(3, 3, |_, _| Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5));
    let mut m0 = &truth.m + noise * Complex64::new(0.15, 0.0);
    let norm = spectral_norm(&m0);
    if norm > 1.0 {
        m0 /= Complex64::new(norm * 1.001, 0.0);
    }
    let init = coeffs_from_unitary(&unitary_completion(&m0).map_err(err)?).map_err(err)?;
    let fit = mle_fit(&data, &truth.inputs, &truth.outputs, &init, truth.indist, &FitOptions::default()).map_err(err)?;
    let d = max_tvd(&fit.model, &truth, &settings).map_err(err)?;
    check(d <= 0.01, format!("max TVD {d}"))?;
    let singles = data.settings.iter().filter(|s| s.prepared_sites.len() == 1).count() as f64;
    let sigma = (truth.loss * (1.0 - truth.loss) / (singles * shots as f64)).sqrt();
    let z = (fit.model.loss - truth.loss) / sigma;
    check(z.abs() <= 3.0, format!("loss {} is {z:.2}σ from truth", fit.model.loss))?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!(
        "max TVD {d:.2e}, loss {:.5} ({z:+.2}σ), converged {}, {elapsed:.1?}",
        fit.model.loss, fit.converged
    ))
}

fn c8_hom_coverage() -> Outcome {
    let mut u = CMatrix::identity(4, 4);
    u.view_mut((0, 0), (2, 2)).copy_from(&beam_splitter());
    let mut covered = 0;
    for run in 0..50u64 {
        let data = simulate_hom(&u, (1, 2), 0.95, 0.1, 10_000, 10_000, &mut rng(800 + run)).map_err(err)?;
        let opts = HomOptions {
            s1: vec![1],
            s2: vec![2],
            tau: Some(1.0),
            bootstrap: 1000,
            seed: run,
            alpha: 0.16,
        };
        let est = estimate_hom(&data, &opts).map_err(err)?;
        let (lo, hi) = est.indist_interval.ok_or("no interval")?;
        if lo <= 0.95 && 0.95 <= hi {
            covered += 1;
        }
    }
    check(covered >= 30, format!("coverage {covered}/50"))?;
    Ok(format!("68% interval covered 𝓘 = 0.95 in {covered}/50 runs"))
}

fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    (0..n)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect()
}

fn c9_error_model() -> Outcome {
    let mut r = rng(9);
    let nodes = gauss_hermite(64);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let psi: Vec<Complex64> = (0..4)
            .map(|_| Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
            .collect();
        let rho = pure_state(&psi).map_err(err)?;
        let omegas: Vec<f64> = (0..4).map(|_| r.random::<f64>() * 10.0).collect();
        let sigma = r.random::<f64>() * 0.2;
        let t = r.random::<f64>() * 2.0;
        let exact = dephase(&rho, &DephasingParams::new(sigma, t, omegas.clone(), 1).map_err(err)?).map_err(err)?;
        let mut quad = CMatrix::zeros(4, 4);
        for &(x, w) in &nodes {
            let delta = std::f64::consts::SQRT_2 * sigma * x;
            let ph: Vec<Complex64> = omegas.iter().map(|om| Complex64::from_polar(1.0, -delta * om * t)).collect();
            quad +=
                CMatrix::from_fn(4, 4, |a, b| ph[a] * rho[(a, b)] * ph[b].conj()) * Complex64::new(w / std::f64::consts::PI.sqrt(), 0.0);
        }
        worst = worst.max((exact - quad).iter().fold(0.0, |a, z| a.max(z.norm())));
    }
    check(worst <= 1e-8, format!("quadrature mismatch {worst:e}"))?;
    let b = fidelity_lower_bound(180, 1e-3, 1000.0, 6.45e-3);
    check((b - 0.51).abs() < 0.005 && b >= 0.3, format!("bound {b}"))?;
    let one = fidelity_lower_bound(180, 0.0, 1000.0, 6.45e-3);
    check(one == 1.0, format!("σ = 0 bound {one}"))?;
    Ok(format!("quadrature max |Δ| = {worst:.1e}; bound {b:.4}; σ = 0 gives {one}"))
}

fn c10_statistics() -> Outcome {
    let mut r = rng(10);
    let alpha = 0.05;
    let mut coverage = Vec::new();
    for &(n, p) in &[(20u64, 0.1), (50, 0.3), (200, 0.5), (100, 0.02)] {
        let bounds: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                Ok((
                    clopper_pearson(k, n, alpha / 2.0, Side::Lower)?,
                    clopper_pearson(k, n, alpha / 2.0, Side::Upper)?,
                ))
            })
            .collect::<Result<_, bosonkit::Error>>()
            .map_err(err)?;
        let reps = 10_000;
        let mut hits = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| r.random::<f64>() < p).count();
            let (lo, hi) = bounds[k];
            if lo <= p && p <= hi {
                hits += 1;
            }
        }
        let c = hits as f64 / reps as f64;
        check(c >= 1.0 - alpha - 0.01, format!("Clopper-Pearson coverage {c} at n = {n}, p = {p}"))?;
        coverage.push(c);
    }

    let (n, reps, mu) = (10u64, 10_000, 1.0);
    let (mut plain, mut corrected) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for _ in 0..reps {
        let xs: Vec<f64> = (0..n).map(|_| mu + r.sample::<f64, _>(StandardNormal)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        plain.push(mean * mean);
        corrected.push(delta_correct(mean * mean, &RMatrix::from_element(1, 1, 2.0), &RMatrix::from_element(1, 1, var), n).map_err(err)?);
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, sd / (v.len() as f64).sqrt())
    };
    let (mc, se_c) = stats(&corrected);
    let (mp, se_p) = stats(&plain);
    let z_c = (mc - mu * mu) / se_c;
    let z_p = (mp - mu * mu) / se_p;
    check(z_c.abs() <= 3.0, format!("corrected bias {z_c:.2}σ"))?;
    check(z_p > 3.0, format!("plug-in bias only {z_p:.2}σ"))?;

    let mut worst: f64 = 0.0;
    for k in 0..=5000 {
        let p = k as f64 * 1e-4;
        let pb = 2.0 * p * (1.0 - p);
        let back = loss_from_single_survival(pb).map_err(err)?;
        check((2.0 * back * (1.0 - back) - pb).abs() <= 1e-15, format!("residual at p = {p}"))?;
        let scaled = (back - p).abs() * (1.0 - 2.0 * p).max(1e-8);
        worst = worst.max(scaled);
    }
    check(worst <= 1e-15, format!("round trip error {worst:e}"))?;
    check(
        loss_from_single_survival(0.0).map_err(err)? == 0.0 && loss_from_single_survival(0.5).map_err(err)? == 0.5,
        "endpoints",
    )?;
    Ok(format!(
        "CP coverage {coverage:?}; delta-corrected bias {z_c:+.2}σ (plug-in {z_p:+.2}σ); loss round trip ok"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("HOM suppression", c1_hom_suppression),
        ("model equivalence", c2_model_equivalence),
        ("thermal weights", c3_thermal_weights),
        ("full bunching ratio", c4_full_bunching),
        ("generalized bunching", c5_generalized_bunching),
        ("design", c6_design),
        ("MLE recovery", c7_mle_recovery),
        ("HOM estimation coverage", c8_hom_coverage),
        ("error model", c9_error_model),
        ("statistics", c10_statistics),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?}): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
