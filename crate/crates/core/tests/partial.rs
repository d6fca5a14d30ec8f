use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stdgm::error::Error;
use stdgm::linalg::CMatrix;
use stdgm::partial::*;
use stdgm::simulate::{simulate, MarkDist, SimSpec};
use stdgm::spectra::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_hpd(rng: &mut impl Rng, d: usize) -> CMatrix {
    let b = CMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let mut a = b.matmul(&b.conj_transpose());
    a.add_to_diagonal(0.05);
    a.make_hermitian();
    a
}

fn grid(n: i32) -> FrequencyGrid {
    FrequencyGrid {
        p_max: n - 1,
        q_min: 0,
        q_max: 0,
        u_min: 0,
        u_max: 0,
        t_steps: 1,
        include_dc: true,
    }
}

fn field_from(mats: &[CMatrix]) -> SpectralField {
    let d = mats[0].rows();
    SpectralField {
        grid: grid(mats.len() as i32),
        d,
        kind: FieldKind::Smoothed,
        marked: false,
        normalisation: Normalisation::Unit,
        scale: vec![1.0; d],
        half_widths: Some((2, 2, 0)),
        values: mats.iter().flat_map(|m| m.as_slice().to_vec()).collect(),
    }
}

fn random_field(rng: &mut impl Rng, d: usize, n: usize) -> SpectralField {
    let mats: Vec<CMatrix> = (0..n).map(|_| random_hpd(rng, d)).collect();
    field_from(&mats)
}

#[test]
fn dual_route_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let policy = RidgePolicy::default();
    for d in 3..=5 {
        let f = random_field(&mut rng, d, 100);
        let inv = invert_spectral_matrix(&f, &policy).unwrap();
        for i in 0..d {
            for j in i + 1..d {
                let via_inv = partial_coherence_via_inverse(&inv, i, j).unwrap();
                let direct = coherency_from_conditional(&partial_cross_spectrum_direct(&f, i, j, &policy).unwrap());
                for (a, b) in via_inv.iter().zip(&direct) {
                    assert!((a - b).norm() <= 1e-8, "d={d} ({i},{j})");
                }
                if d == 3 {
                    let k = 3 - i - j;
                    let three = partial_coherence_three(&f, i, j, k).unwrap();
                    for (a, b) in via_inv.iter().zip(&three) {
                        assert!((a - b).norm() <= 1e-8);
                    }
                }
                // the partial cross-spectrum itself agrees as well
                let (_, _, cross) = partial_spectra_via_inverse(&inv, i, j).unwrap();
                let direct = partial_cross_spectrum_direct(&f, i, j, &policy).unwrap();
                for (k, a) in cross.iter().enumerate() {
                    let b = direct.entry(k, 0, 1);
                    assert!((a - b).norm() <= 1e-8 * b.norm().max(1.0));
                }
            }
        }
    }
}

#[test]
fn diagonal_input_gives_zero_abs_d() {
    let mats: Vec<CMatrix> = (0..5)
        .map(|k| CMatrix::from_fn(3, 3, |i, j| if i == j { c(1.0 + (i + k) as f64, 0.0) } else { c(0.0, 0.0) }))
        .collect();
    let inv = invert_spectral_matrix(&field_from(&mats), &RidgePolicy::default()).unwrap();
    assert!(rescaled_inverse_density(&inv, 0, 2).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn two_components_reduce_to_coherency() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_field(&mut rng, 2, 50);
    let inv = invert_spectral_matrix(&f, &RidgePolicy::default()).unwrap();
    let d = rescaled_inverse_density(&inv, 0, 1).unwrap();
    let r = partial_coherence_via_inverse(&inv, 0, 1).unwrap();
    for k in 0..50 {
        let coh = f.entry(k, 0, 1) / (f.entry(k, 0, 0).re * f.entry(k, 1, 1).re).sqrt();
        assert!((d[k] - coh.norm()).abs() < 1e-10);
        assert!((r[k] - coh).norm() < 1e-10);
    }
}

#[test]
fn abs_d_bounded_and_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_field(&mut rng, 5, 100);
    let pf = partial_field(&f, &RidgePolicy::default()).unwrap();
    for &(i, j) in &pf.pairs {
        for k in 0..100 {
            let v = pf.abs_d_at(i, j, k);
            assert_eq!(v, pf.abs_d_at(j, i, k));
            assert!((0.0..=1.0 + 1e-9).contains(&v));
        }
    }
    let inv = invert_spectral_matrix(&f, &RidgePolicy::default()).unwrap();
    assert_eq!(rescaled_inverse_density(&inv, 1, 3).unwrap(), rescaled_inverse_density(&inv, 3, 1).unwrap());
}

#[test]
fn block_diagonal_conditioning_removes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mats: Vec<CMatrix> = (0..10)
        .map(|_| {
            let a = random_hpd(&mut rng, 2);
            let b = random_hpd(&mut rng, 2);
            CMatrix::from_fn(4, 4, |i, j| match (i < 2, j < 2) {
                (true, true) => a[(i, j)],
                (false, false) => b[(i - 2, j - 2)],
                _ => c(0.0, 0.0),
            })
        })
        .collect();
    let f = field_from(&mats);
    let direct = partial_cross_spectrum_direct(&f, 0, 1, &RidgePolicy::default()).unwrap();
    for k in 0..10 {
        assert!((direct.entry(k, 0, 1) - f.entry(k, 0, 1)).norm() < 1e-12);
    }
}

/// 3×3 Hermitian PD matrix with `f_01 = f_02 f_22⁻¹ f_21` exactly.
fn conditionally_independent(rng: &mut impl Rng) -> CMatrix {
    let f22 = rng.random_range(1.0..2.0);
    let f02 = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let f12 = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let f01 = f02 * f12.conj() / f22;
    let f00 = f02.norm_sqr() / f22 + rng.random_range(0.5..1.0);
    let f11 = f12.norm_sqr() / f22 + rng.random_range(0.5..1.0);
    CMatrix::from_row_major(
        3,
        3,
        vec![c(f00, 0.0), f01, f02, f01.conj(), c(f11, 0.0), f12, f02.conj(), f12.conj(), c(f22, 0.0)],
    )
}

#[test]
fn constructed_conditional_independence_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mats: Vec<CMatrix> = (0..20).map(|_| conditionally_independent(&mut rng)).collect();
    let f = field_from(&mats);
    let direct = partial_cross_spectrum_direct(&f, 0, 1, &RidgePolicy::default()).unwrap();
    let pf = partial_field(&f, &RidgePolicy::default()).unwrap();
    for k in 0..20 {
        assert!(direct.entry(k, 0, 1).norm() < 1e-12);
        assert!(pf.abs_d_at(0, 1, k) < 1e-12);
    }
}

#[test]
fn diagonal_congruence_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = random_field(&mut rng, 4, 30);
    let s = [0.3, 2.0, 7.5, 1.1];
    let mut g = f.clone();
    for k in 0..30 {
        for i in 0..4 {
            for j in 0..4 {
                g.values[k * 16 + i * 4 + j] *= s[i] * s[j];
            }
        }
    }
    let a = partial_field(&f, &RidgePolicy::default()).unwrap();
    let b = partial_field(&g, &RidgePolicy::default()).unwrap();
    for (x, y) in a.abs_d.iter().flatten().zip(b.abs_d.iter().flatten()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn three_component_with_uncorrelated_conditioner() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mats: Vec<CMatrix> = (0..10)
        .map(|_| {
            let a = random_hpd(&mut rng, 2);
            CMatrix::from_fn(3, 3, |i, j| match (i, j) {
                (2, 2) => c(1.5, 0.0),
                (2, _) | (_, 2) => c(0.0, 0.0),
                _ => a[(i, j)],
            })
        })
        .collect();
    let f = field_from(&mats);
    let three = partial_coherence_three(&f, 0, 1, 2).unwrap();
    for (k, z) in three.iter().enumerate() {
        let r = f.entry(k, 0, 1) / (f.entry(k, 0, 0).re * f.entry(k, 1, 1).re).sqrt();
        assert!((z - r).norm() < 1e-15);
    }
}

#[test]
fn partial_dot_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let policy = RidgePolicy::default();
    let f = random_field(&mut rng, 5, 20);
    // K = {k}, J = everything else: the ordinary partial cross-spectrum
    let pd = partial_dot_spectrum(&f, 0, &[3], &[1, 2, 4], &policy).unwrap();
    let direct = partial_cross_spectrum_direct(&f, 0, 3, &policy).unwrap();
    for (k, z) in pd.iter().enumerate() {
        assert!((z - direct.entry(k, 0, 1)).norm() <= 1e-10 * z.norm().max(1.0));
    }
    // J = ∅: the unconditioned sum of cross-spectra over K
    let pd = partial_dot_spectrum(&f, 2, &[0, 4], &[], &policy).unwrap();
    for (k, z) in pd.iter().enumerate() {
        assert!((z - (f.entry(k, 2, 0) + f.entry(k, 2, 4))).norm() < 1e-12);
    }
}

#[test]
fn partial_dot_over_all_others_is_dot_spectrum() {
    let p = simulate(&SimSpec::poisson(vec![200.0; 4], 4, 9)).unwrap().pattern;
    let g = FrequencyGrid::default_for(4);
    let dfts = dft_separable(&p, &g).unwrap();
    let h = (1, 1, 0);
    let s = smooth_spectra(&periodogram_matrix(&dfts, Normalisation::Unit), h);
    let pd = partial_dot_spectrum(&s, 1, &[0, 2, 3], &[], &RidgePolicy::default()).unwrap();
    let dot = dot_spectrum(&dfts, 1, h, Normalisation::Unit).unwrap().cross();
    for (a, b) in pd.iter().zip(&dot) {
        assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
    }
}

#[test]
fn raw_field_and_small_neighbourhood_rejected() {
    let p = simulate(&SimSpec::poisson(vec![100.0; 3], 4, 1)).unwrap().pattern;
    let g = FrequencyGrid::default_for(4);
    let raw = periodogram_matrix(&dft_separable(&p, &g).unwrap(), Normalisation::SqrtCounts);
    assert!(matches!(invert_spectral_matrix(&raw, &RidgePolicy::default()), Err(Error::Contract(_))));
    let tiny = smooth_spectra(&raw, (0, 0, 0));
    assert!(matches!(partial_field(&tiny, &RidgePolicy::default()), Err(Error::Contract(_))));
}

#[test]
fn non_hermitian_input_is_contract_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut f = random_field(&mut rng, 3, 4);
    f.values[1] += c(0.5, 0.0);
    assert!(matches!(invert_spectral_matrix(&f, &RidgePolicy::default()), Err(Error::Contract(_))));
}

fn marked_field(p: &stdgm::ingest::MultiPattern) -> SpectralField {
    let g = FrequencyGrid::default_for(p.t_steps());
    smooth_spectra(&periodogram_matrix(&marked_dft_separable(p, &g).unwrap(), Normalisation::SqrtCounts), (1, 1, 0))
}

#[test]
fn constant_marks_are_degenerate() {
    let p = simulate(&SimSpec::poisson(vec![100.0; 3], 4, 2)).unwrap().pattern.map_marks(|_| Some(2.0)).unwrap();
    let pf = partial_field(&marked_field(&p), &RidgePolicy::default()).unwrap();
    assert!(pf.is_degenerate());
    assert_eq!(pf.degenerate, vec![0, 1, 2]);
}

#[test]
fn mark_scaling_leaves_abs_d_unchanged() {
    let mut spec = SimSpec::poisson(vec![150.0; 3], 4, 3);
    spec.marks = Some(MarkDist::Normal { mu: 10.0, sigma: 2.0 });
    let p = simulate(&spec).unwrap().pattern;
    let p2 = p.map_marks(|m| m.map(|m| 2.0 * m)).unwrap();
    let a = partial_field(&marked_field(&p), &RidgePolicy::default()).unwrap();
    let b = partial_field(&marked_field(&p2), &RidgePolicy::default()).unwrap();
    for (x, y) in a.abs_d.iter().flatten().zip(b.abs_d.iter().flatten()) {
        assert!((x - y).abs() <= 1e-10);
    }
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut dmax) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        dmax = dmax.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    dmax
}

#[test]
fn marked_and_unmarked_abs_d_match_under_independent_marks() {
    // One summary per seed (median |d_12| over the grid) so samples are independent.
    let g = FrequencyGrid::default_for(4);
    let (mut marked, mut unmarked) = (Vec::new(), Vec::new());
    for seed in 0..60 {
        let mut spec = SimSpec::poisson(vec![200.0; 3], 4, 700 + seed);
        spec.marks = Some(MarkDist::Normal { mu: 5.0, sigma: 1.0 });
        let p = simulate(&spec).unwrap().pattern;
        let median = |f: &SpectralField| {
            let pf = partial_field(f, &RidgePolicy::default()).unwrap();
            let mut v: Vec<f64> = g.stat_indices().iter().map(|&k| pf.abs_d_at(0, 1, k)).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        marked.push(median(&marked_field(&p)));
        let uf = smooth_spectra(&periodogram_matrix(&dft_separable(&p, &g).unwrap(), Normalisation::SqrtCounts), (1, 1, 0));
        unmarked.push(median(&uf));
    }
    let n = marked.len() as f64;
    let crit = 1.628 * (2.0 / n).sqrt(); // α = 0.01
    let stat = ks(marked, unmarked);
    assert!(stat < crit, "KS {stat} vs {crit}");
}

#[test]
fn standard_simulations_rarely_need_a_ridge() {
    let g = FrequencyGrid::default_for(4);
    for seed in 0..10 {
        let p = simulate(&SimSpec::poisson(vec![300.0; 3], 4, seed)).unwrap().pattern;
        let s = smooth_spectra(&periodogram_matrix(&dft_separable(&p, &g).unwrap(), Normalisation::SqrtCounts), (1, 1, 0));
        let pf = partial_field(&s, &RidgePolicy::default()).unwrap();
        assert!(pf.unregularised_fraction() >= 0.99);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_dual_route(seed in any::<u64>(), d in 3usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&mut rng, d, 3);
        let policy = RidgePolicy::default();
        let inv = invert_spectral_matrix(&f, &policy).unwrap();
        prop_assume!(inv.ridge.iter().all(|&r| r == 0.0));
        let via_inv = partial_coherence_via_inverse(&inv, 0, d - 1).unwrap();
        let direct = coherency_from_conditional(&partial_cross_spectrum_direct(&f, 0, d - 1, &policy).unwrap());
        for (a, b) in via_inv.iter().zip(&direct) {
            prop_assert!((a - b).norm() <= 1e-8);
            prop_assert!(a.norm() <= 1.0 + 1e-9);
        }
    }
}
