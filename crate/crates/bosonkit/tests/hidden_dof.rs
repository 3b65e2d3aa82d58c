use bosonkit::hidden_dof::*;
use bosonkit::linopt::{
    all_occupations, bosonic_probability, distinguishable_probability, random_unitary, submatrix, unitary_completion, zeta, OccupationList,
    SiteList,
};
use bosonkit::symrep::{all_permutations, factorial, partitions_of, Partition};
use bosonkit::{CMatrix, Complex64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_state(w: usize, r: &mut ChaCha8Rng) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..w).map(|_| c(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

fn ket_bra(v: &[Complex64]) -> CMatrix {
    let k = nalgebra::DVector::from_column_slice(v);
    &k * k.adjoint()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// First-quantized Gram formula for a product of pure internal states on distinct inputs.
fn gram_oracle(u: &CMatrix, i: &[usize], states: &[Vec<Complex64>], g: &OccupationList) -> f64 {
    let n = i.len();
    let rows = zeta(g).0;
    let perms = all_permutations(n);
    let mut total = c(0.0, 0.0);
    for s in &perms {
        for t in &perms {
            let mut term = c(1.0, 0.0);
            for x in 0..n {
                let a = s.apply(x);
                let b = t.apply(x);
                term *= u[(rows[x] - 1, i[a] - 1)] * u[(rows[x] - 1, i[b] - 1)].conj() * dot(&states[b], &states[a]);
            }
            total += term;
        }
    }
    total.re / g.factorial() as f64
}

fn fermionic_oracle(u: &CMatrix, i: &SiteList, g: &OccupationList) -> f64 {
    let sub = submatrix(u, &zeta(g), i).unwrap();
    sub.determinant().norm_sqr() / g.factorial() as f64
}

fn distinct_inputs(n: usize) -> SiteList {
    SiteList((1..=n).collect())
}

fn random_mixture(n: usize, r: &mut ChaCha8Rng) -> PartitionMixture {
    let parts = partitions_of(n).unwrap();
    let raw: Vec<f64> = parts.iter().map(|_| r.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    PartitionMixture::new(n, parts.into_iter().zip(raw.into_iter().map(|w| w / total)).collect()).unwrap()
}

#[test]
fn direct_model_limits_match_permanent_models() {
    let mut r = rng(1);
    let u = random_unitary(4, &mut r);
    let i = SiteList(vec![1, 2, 4]);
    let dist = AuxiliaryClassFunction::distinguishable(3).unwrap();
    let bos = AuxiliaryClassFunction::indistinguishable(3).unwrap();
    for g in all_occupations(4, 3) {
        let pd = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&dist), &g).unwrap();
        let pb = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&bos), &g).unwrap();
        assert!((pd - distinguishable_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
        assert!((pb - bosonic_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn direct_thermal_matches_thermal_mixture() {
    let mut r = rng(2);
    for n in 2..=4 {
        let m = n + 1;
        let u = random_unitary(m, &mut r);
        let i = distinct_inputs(n);
        for &x in &[0.1, 0.5, 0.9] {
            let k = thermal_class_function(x, n).unwrap();
            let mix = thermal_partition_weights(x, n).unwrap();
            for g in all_occupations(m, n) {
                let pd = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&k), &g).unwrap();
                let pm = mixture_probability(&mix, &u, &i, &g).unwrap();
                assert!((pd - pm).abs() < 1e-10, "n={n} x={x} {g:?}: {pd} vs {pm}");
            }
        }
    }
}

#[test]
fn explicit_product_state_matches_gram_formula() {
    let mut r = rng(3);
    let u = random_unitary(4, &mut r);
    let inputs = [1usize, 3, 4];
    let states: Vec<Vec<Complex64>> = (0..3).map(|_| random_state(3, &mut r)).collect();
    let h = ExplicitAuxiliaryState::product(&states.iter().map(|s| ket_bra(s)).collect::<Vec<_>>()).unwrap();
    let i = SiteList(inputs.to_vec());
    let mut total = 0.0;
    for g in all_occupations(4, 3) {
        let p = direct_model_probability(&u, &i, Auxiliary::Explicit(&h), &g).unwrap();
        let oracle = gram_oracle(&u, &inputs, &states, &g);
        assert!((p - oracle).abs() < 1e-12, "{g:?}: {p} vs {oracle}");
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn explicit_repeated_inputs_reduce_to_bosonic() {
    let mut r = rng(4);
    let u = random_unitary(3, &mut r);
    let i = SiteList(vec![1, 1, 2]);
    let mut psi = vec![c(0.0, 0.0); 8];
    psi[0] = c(1.0, 0.0);
    let h = ExplicitAuxiliaryState::from_symmetrized(&i, 2, &psi).unwrap();
    let mut total = 0.0;
    for g in all_occupations(3, 3) {
        let p = direct_model_probability(&u, &i, Auxiliary::Explicit(&h), &g).unwrap();
        assert!((p - bosonic_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn permutation_invariant_explicit_state_matches_its_class_function() {
    // Werner-type state: mixture of symmetric and antisymmetric projectors on two qubits.
    let mut r = rng(5);
    let u = random_unitary(3, &mut r);
    let i = SiteList(vec![1, 3]);
    let mut h = CMatrix::zeros(4, 4);
    let sym = ket_bra(&[c(0.0, 0.0), c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)]);
    let anti = ket_bra(&[c(0.0, 0.0), c(0.5f64.sqrt(), 0.0), c(-(0.5f64.sqrt()), 0.0), c(0.0, 0.0)]);
    h += sym * c(0.3, 0.0) + anti * c(0.7, 0.0);
    let h = ExplicitAuxiliaryState::new(2, 2, h).unwrap();
    let swap = all_permutations(2).pop().unwrap();
    let k_swap = h.indistinguishability_function(&swap);
    assert!((k_swap - c(-0.4, 0.0)).norm() < 1e-12);
    let k = AuxiliaryClassFunction::new(2, vec![(Partition::row(2), k_swap), (Partition::column(2), c(1.0, 0.0))]).unwrap();
    let mix = weights_from_class_function(&k).unwrap();
    assert!((mix.weight(&Partition::column(2)) - 0.7).abs() < 1e-12);
    for g in all_occupations(3, 2) {
        let pe = direct_model_probability(&u, &i, Auxiliary::Explicit(&h), &g).unwrap();
        let pk = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&k), &g).unwrap();
        let pm = mixture_probability(&mix, &u, &i, &g).unwrap();
        assert!((pe - pk).abs() < 1e-12 && (pk - pm).abs() < 1e-12);
    }
}

#[test]
fn explicit_state_validation() {
    let bad = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
    assert!(ExplicitAuxiliaryState::new(1, 2, bad).is_err());
    let half = CMatrix::identity(2, 2) * c(0.4, 0.0);
    assert!(ExplicitAuxiliaryState::new(1, 2, half).is_err());
    assert!(ExplicitAuxiliaryState::new(2, 2, CMatrix::identity(2, 2)).is_err());
    let i = SiteList(vec![1, 1]);
    // |01⟩ alone is not symmetric under swapping the two particles on site 1
    let psi = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
    assert!(ExplicitAuxiliaryState::from_symmetrized(&i, 2, &psi).is_err());
}

#[test]
fn orbit_normalization_gives_unit_norm() {
    let mut r = rng(6);
    for (sites, w) in [(vec![1, 1], 2usize), (vec![1, 1, 1], 2), (vec![1, 1, 2], 3), (vec![2, 2, 2], 3)] {
        let i = SiteList(sites);
        let n = i.len();
        let side = w.pow(n as u32);
        // symmetrize random coefficients over permutations fixing i
        let raw = random_state(side, &mut r);
        let stab: Vec<_> = all_permutations(n)
            .into_iter()
            .filter(|p| (0..n).all(|x| i.0[p.apply(x)] == i.0[x]))
            .collect();
        let tuple = |mut idx: usize| {
            let mut j = vec![0; n];
            for x in (0..n).rev() {
                j[x] = idx % w;
                idx /= w;
            }
            j
        };
        let index = |j: &[usize]| j.iter().fold(0, |a, &b| a * w + b);
        let mut psi = vec![c(0.0, 0.0); side];
        for (idx, slot) in psi.iter_mut().enumerate() {
            let j = tuple(idx);
            for p in &stab {
                let moved: Vec<usize> = (0..n).map(|x| j[p.apply(x)]).collect();
                *slot += raw[index(&moved)];
            }
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        let n_fock = symmetrized_state_norm(&i, w, &psi).unwrap();
        assert!((n_fock - 1.0).abs() < 1e-12, "{:?}: {n_fock}", i.0);
        assert!(ExplicitAuxiliaryState::from_symmetrized(&i, w, &psi).is_ok());
    }
    assert_eq!(orbit_normalization(&SiteList(vec![1, 1, 1]), &[0, 0, 1]), 3);
    assert_eq!(orbit_normalization(&SiteList(vec![1, 2, 2]), &[0, 0, 1]), 2);
}

#[test]
fn projector_extremes() {
    let mut r = rng(7);
    let u = random_unitary(5, &mut r);
    let i = SiteList(vec![1, 2, 5]);
    for g in all_occupations(5, 3) {
        let comps = mixture_components(&u, &i, &g).unwrap();
        let q_row = comps.iter().find(|(l, _)| *l == Partition::row(3)).unwrap().1;
        let q_col = comps.iter().find(|(l, _)| *l == Partition::column(3)).unwrap().1;
        assert!((q_row - bosonic_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
        assert!((q_col - fermionic_oracle(&u, &i, &g)).abs() < 1e-12);
        let proj = irrep_projector(&Partition::new(vec![2, 1]).unwrap(), &u, &i, &g).unwrap();
        assert_eq!(proj.shape(), (2, 2));
        let herm = (&proj - proj.adjoint()).norm();
        assert!(herm < 1e-12);
        let eig = bosonkit::linopt::hermitian_eigen(&proj).0;
        assert!(eig.iter().all(|&e| e > -1e-12));
    }
    assert!(irrep_projector(&Partition::row(2), &u, &SiteList(vec![1, 1]), &all_occupations(5, 2)[0]).is_err());
}

#[test]
fn projectors_are_complete() {
    let mut r = rng(8);
    let u = random_unitary(4, &mut r);
    let i = distinct_inputs(3);
    let mut sums = vec![0.0; 3];
    for g in all_occupations(4, 3) {
        for (k, (_, q)) in mixture_components(&u, &i, &g).unwrap().iter().enumerate() {
            sums[k] += q;
        }
    }
    for s in sums {
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mixture_examples() {
    let mut r = rng(9);
    let u = random_unitary(4, &mut r);
    let i = SiteList(vec![2, 3, 4]);
    let plan = PartitionMixture::plancherel(3).unwrap();
    let delta = PartitionMixture::delta(&Partition::row(3)).unwrap();
    let mix = random_mixture(3, &mut r);
    let mut total = 0.0;
    for g in all_occupations(4, 3) {
        let pp = mixture_probability(&plan, &u, &i, &g).unwrap();
        assert!((pp - distinguishable_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
        let pd = mixture_probability(&delta, &u, &i, &g).unwrap();
        assert!((pd - bosonic_probability(&u, &i, &g).unwrap()).abs() < 1e-12);
        total += mixture_probability(&mix, &u, &i, &g).unwrap();
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn mixture_json_schema() {
    let mix = thermal_partition_weights(0.4, 3).unwrap();
    let text = serde_json::to_string(&mix).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(value["n"], 3);
    assert_eq!(value["weights"][0]["partition"], serde_json::json!([3]));
    let back: PartitionMixture = serde_json::from_str(&text).unwrap();
    assert_eq!(back, mix);
    let bad = r#"{"n": 2, "weights": [{"partition": [2], "p": 0.3}]}"#;
    assert!(serde_json::from_str::<PartitionMixture>(bad).is_err());
}

#[test]
fn thermal_weight_closed_forms() {
    for n in 1..=6 {
        for &x in &[0.0, 0.2, 0.7, 0.99] {
            let mix = thermal_partition_weights(x, n).unwrap();
            let top: f64 = (1..=n).map(|k| (1.0 - x) / (1.0 - x.powi(k as i32))).product();
            assert!((mix.weight(&Partition::row(n)) - top).abs() < 1e-12);
            let via_k = weights_from_class_function(&thermal_class_function(x, n).unwrap()).unwrap();
            for ((_, a), (_, b)) in mix.weights.iter().zip(&via_k.weights) {
                assert!((a - b).abs() < 1e-10, "n={n} x={x}");
            }
        }
        // analytic x → 1 endpoint equals the Plancherel weights exactly
        assert_eq!(thermal_limit_exact(n).unwrap(), plancherel_exact(n).unwrap());
        let near = thermal_partition_weights(1.0 - 1e-7, n).unwrap();
        let plan = PartitionMixture::plancherel(n).unwrap();
        for ((_, a), (_, b)) in near.weights.iter().zip(&plan.weights) {
            assert!((a - b).abs() < 1e-5);
        }
    }
    assert!(thermal_partition_weights(1.0, 3).is_err());
    let swap = thermal_class_function(0.25, 2).unwrap();
    assert!((swap.on_class(&Partition::row(2)).re - 0.75 / 1.25).abs() < 1e-15);
}

#[test]
fn top_thermal_weight_is_monotone() {
    for n in 2..=6 {
        let mut prev = f64::INFINITY;
        for step in 0..100 {
            let x = step as f64 / 100.0;
            let p = thermal_partition_weights(x, n).unwrap().weight(&Partition::row(n));
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }
}

#[test]
fn weights_from_bad_class_function_rejected() {
    // k(swap) = 2 would give p^(1,1) = -1/2
    let k = AuxiliaryClassFunction::new(2, vec![(Partition::row(2), c(2.0, 0.0)), (Partition::column(2), c(1.0, 0.0))]).unwrap();
    assert!(weights_from_class_function(&k).is_err());
    assert!(AuxiliaryClassFunction::new(2, vec![(Partition::row(2), c(0.0, 0.0)), (Partition::column(2), c(0.5, 0.0))]).is_err());
}

fn embedded(m: usize, s: usize, n: usize, r: &mut ChaCha8Rng) -> (CMatrix, CMatrix) {
    let u = random_unitary(m, r);
    let sub = u.view((0, 0), (s, n)).into_owned();
    (u, sub)
}

#[test]
fn restricted_full_rows_match_mixture() {
    let mut r = rng(10);
    let (u, _) = embedded(4, 4, 3, &mut r);
    let sub = u.columns(0, 3).into_owned();
    let i = distinct_inputs(3);
    let x = 0.35;
    let mix = thermal_partition_weights(x, 3).unwrap();
    let mut total = 0.0;
    for h in all_occupations(4, 3) {
        let p = restricted_probability(&sub, x, &h).unwrap();
        assert!((p - mixture_probability(&mix, &u, &i, &h).unwrap()).abs() < 1e-10);
        total += p;
    }
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn restricted_single_particle() {
    let mut r = rng(11);
    let (_, sub) = embedded(5, 3, 1, &mut r);
    let mut sum = 0.0;
    for s in 0..3 {
        let mut occ = vec![0; 3];
        occ[s] = 1;
        let p = restricted_probability(&sub, 0.5, &OccupationList(occ)).unwrap();
        assert!((p - sub[(s, 0)].norm_sqr()).abs() < 1e-14);
        sum += sub[(s, 0)].norm_sqr();
    }
    let empty = restricted_probability(&sub, 0.5, &OccupationList(vec![0; 3])).unwrap();
    assert!((empty - (1.0 - sum)).abs() < 1e-14);
}

/// Marginal over the full output space for one completion.
fn restricted_by_marginal(u: &CMatrix, mix: &PartitionMixture, s: usize, n: usize, h: &OccupationList) -> f64 {
    let i = distinct_inputs(n);
    all_occupations(u.nrows(), n)
        .into_iter()
        .filter(|g| g.0[..s] == h.0[..])
        .map(|g| mixture_probability(mix, u, &i, &g).unwrap())
        .sum()
}

#[test]
fn restricted_matches_marginals_for_two_completions() {
    let mut r = rng(12);
    let (m, s, n) = (5, 2, 3);
    let (u, sub) = embedded(m, s, n, &mut r);
    // a different completion of the same submatrix: rotate the complement rows
    let mut v = CMatrix::identity(m, m);
    let rot = random_unitary(m - s, &mut r);
    v.view_mut((s, s), (m - s, m - s)).copy_from(&rot);
    let u2 = &v * &u;
    let u3 = unitary_completion(&sub).unwrap();
    assert!((u2.view((0, 0), (s, n)) - &sub).norm() < 1e-12);
    let x = 0.6;
    let mix = thermal_partition_weights(x, n).unwrap();
    let mut total = 0.0;
    for t in 0..=n {
        for h in all_occupations(s, t) {
            let p = restricted_probability(&sub, x, &h).unwrap();
            let m1 = restricted_by_marginal(&u, &mix, s, n, &h);
            let m2 = restricted_by_marginal(&u2, &mix, s, n, &h);
            assert!((p - m1).abs() < 1e-10 && (p - m2).abs() < 1e-10, "{h:?}: {p} {m1} {m2}");
            let i3 = SiteList((1..=n).collect());
            let m3: f64 = all_occupations(u3.nrows(), n)
                .into_iter()
                .filter(|g| g.0[..s] == h.0[..])
                .map(|g| mixture_probability(&mix, &u3, &i3, &g).unwrap())
                .sum();
            assert!((p - m3).abs() < 1e-10);
            total += p;
        }
    }
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn restricted_rejects_non_submatrix() {
    let m = CMatrix::from_element(2, 2, c(0.9, 0.0));
    assert!(restricted_probability(&m, 0.2, &OccupationList(vec![1, 1])).is_err());
}

#[test]
fn restricted_gradient_matches_finite_differences() {
    let mut r = rng(13);
    let (_, sub) = embedded(6, 3, 3, &mut r);
    let k = thermal_class_function(0.3, 3).unwrap();
    for h in [
        OccupationList(vec![1, 0, 1]),
        OccupationList(vec![0, 0, 0]),
        OccupationList(vec![2, 0, 1]),
    ] {
        let (p, grad) = restricted_probability_gradient(&sub, &k, &h).unwrap();
        assert!((p - restricted_probability_class(&sub, &k, &h).unwrap()).abs() < 1e-15);
        let eps = 1e-6;
        for a in 0..3 {
            for b in 0..3 {
                for dir in [c(1.0, 0.0), c(0.0, 1.0)] {
                    let mut plus = sub.clone();
                    plus[(a, b)] += dir * eps;
                    let mut minus = sub.clone();
                    minus[(a, b)] -= dir * eps;
                    let fd = (restricted_probability_class(&plus, &k, &h).unwrap() - restricted_probability_class(&minus, &k, &h).unwrap())
                        / (2.0 * eps);
                    let an = 2.0 * (grad[(a, b)] * dir).re;
                    assert!((fd - an).abs() < 1e-7, "{h:?} ({a},{b}): {fd} vs {an}");
                }
            }
        }
    }
}

#[test]
fn size_cap_is_enforced() {
    let mut r = rng(14);
    let u = random_unitary(8, &mut r);
    let i = distinct_inputs(7);
    let g = all_occupations(8, 7).pop().unwrap();
    assert!(matches!(mixture_components(&u, &i, &g), Err(bosonkit::Error::SizeLimit(_))));
    let _ = factorial(7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn thermal_weights_form_a_distribution(x in 0.0f64..0.999, n in 1usize..=7) {
        let mix = thermal_partition_weights(x, n).unwrap();
        let total: f64 = mix.weights.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(mix.weights.iter().all(|(_, p)| *p >= 0.0));
    }

    #[test]
    fn direct_equals_mixture_for_random_class_functions(seed in 0u64..1000, n in 2usize..=4) {
        let mut r = rng(seed);
        let m = r.random_range(n..=5);
        let u = random_unitary(m, &mut r);
        let mix = random_mixture(n, &mut r);
        let k = AuxiliaryClassFunction::from_mixture(&mix).unwrap();
        let back = weights_from_class_function(&k).unwrap();
        for ((_, a), (_, b)) in back.weights.iter().zip(&mix.weights) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let i = distinct_inputs(n);
        for g in all_occupations(m, n) {
            let pd = direct_model_probability(&u, &i, Auxiliary::ClassFunction(&k), &g).unwrap();
            let pm = mixture_probability(&mix, &u, &i, &g).unwrap();
            prop_assert!((pd - pm).abs() < 1e-10);
        }
    }

    #[test]
    fn restricted_sums_to_one(seed in 0u64..1000, x in 0.0f64..0.95) {
        let mut r = rng(seed);
        let (_, sub) = embedded(5, 2, 2, &mut r);
        let total: f64 = restricted_outcomes(2, 2)
            .iter()
            .map(|h| restricted_probability(&sub, x, h).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}
