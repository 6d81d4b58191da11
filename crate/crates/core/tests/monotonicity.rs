use std::sync::Arc;

use elastoscan::fem::{FeSpace, FrequencyConfig, MaterialField};
use elastoscan::linalg::{inertia_count_below, spectral_norm_symmetric, Matrix};
use elastoscan::mesh::{
    build_plate_mesh, tag_boundaries, test_inclusion_grid, PlateGeometry, TestInclusionGrid,
};
use elastoscan::monotonicity::{
    check_assumption, count_negative_eigenvalues, monotonicity_test, reconstruct, select_threshold,
    verify_monotonicity_lower, verify_monotonicity_upper, ReconstructionSettings, TestParameters,
    Threshold,
};
use elastoscan::ntd::{
    build_load_basis, ntd_solution, BasisSpec, ElementPairings, FrechetDirection, LoadBasis,
    NtdKind,
};
use elastoscan::synthetic::{aluminum, makrolon, materialize, phantom_center_disc};
use elastoscan::{Error, Mesh};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.add(&a.transpose()).unwrap().scale(0.5)
}

/// Negative pivots of an unpivoted dense `LDLᵀ` of `A − xI`.
fn ldl_count_below(a: &Matrix<f64>, x: f64) -> usize {
    let n = a.rows();
    let mut w = Matrix::from_fn(n, n, |i, j| a[(i, j)] - if i == j { x } else { 0.0 });
    let mut negative = 0;
    for k in 0..n {
        let d = w[(k, k)];
        assert!(d != 0.0, "zero pivot");
        if d < 0.0 {
            negative += 1;
        }
        for i in k + 1..n {
            let l = w[(i, k)] / d;
            for j in k + 1..=i {
                let v = w[(i, j)] - l * w[(j, k)];
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    negative
}

#[test]
fn eigen_count_agrees_with_inertia_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for k in 0..200 {
        let n = 1 + k % 30;
        let a = random_symmetric(n, &mut rng);
        let norm = spectral_norm_symmetric(&a).unwrap();
        for delta in [0.0, 1e-8, 1e-2 * norm] {
            let (count, values) = count_negative_eigenvalues(&a, delta).unwrap();
            assert_eq!(
                count,
                inertia_count_below(&a, -delta).unwrap(),
                "n={n} delta={delta}"
            );
            assert_eq!(count, ldl_count_below(&a, -delta), "n={n} delta={delta}");
            assert_eq!(count, values.iter().filter(|&&v| v < -delta).count());
            assert!(values.windows(2).all(|w| w[0] <= w[1]));
            checked += 1;
        }
    }
    assert_eq!(checked, 600);
}

#[test]
fn planted_spectrum_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // random orthogonal Q from Gram-Schmidt, A = Q diag(σ) Qᵀ
    let n = 8;
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.push(v.into_iter().map(|x| x / nv).collect());
    }
    let sigma = [-3.0, -2.0, -1.0, -0.5, 0.25, 1.0, 2.0, 4.0];
    let a = Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| q[k][i] * sigma[k] * q[k][j]).sum()
    });
    for (delta, want) in [(0.0, 4), (0.4, 4), (0.75, 3), (1.5, 2), (2.5, 1), (3.5, 0)] {
        assert_eq!(count_negative_eigenvalues(&a, delta).unwrap().0, want);
        assert_eq!(inertia_count_below(&a, -delta).unwrap(), want);
    }
}

#[test]
fn threshold_selection_errors() {
    assert!(matches!(select_threshold(&[3, 3, 3]), Err(Error::NoGap(3))));
    assert!(matches!(
        select_threshold(&[4]),
        Err(Error::InsufficientData(_))
    ));
    // ties go to the smaller threshold
    assert_eq!(select_threshold(&[0, 2, 4]).unwrap(), 0);
}

fn arb_symmetric(max: usize) -> impl Strategy<Value = Matrix<f64>> {
    (1..=max).prop_flat_map(|n| {
        proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
            let a = Matrix::from_row_major(n, n, v).unwrap();
            a.add(&a.transpose()).unwrap().scale(0.5)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_is_non_increasing_in_delta(a in arb_symmetric(12), d1 in 0.0f64..2.0, d2 in 0.0f64..2.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(count_negative_eigenvalues(&a, hi).unwrap().0 <= count_negative_eigenvalues(&a, lo).unwrap().0);
    }

    #[test]
    fn noise_within_delta_never_raises_the_count(
        t in arb_symmetric(10),
        seed in any::<u64>(),
        size in 1e-6f64..0.5,
    ) {
        let n = t.rows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_symmetric(n, &mut rng);
        let en = spectral_norm_symmetric(&e).unwrap();
        let e = if en > 0.0 { e.scale(size / en) } else { e };
        let noisy = t.add(&e).unwrap();
        let bound = spectral_norm_symmetric(&e).unwrap();
        let clean = count_negative_eigenvalues(&t, 0.0).unwrap().0;
        prop_assert!(count_negative_eigenvalues(&noisy, bound * (1.0 + 1e-12)).unwrap().0 <= clean);
    }
}

struct Setup {
    mesh: Mesh,
    space: Arc<FeSpace<f64>>,
    basis: LoadBasis<f64>,
    grid: TestInclusionGrid<f64>,
    background: MaterialField<f64>,
    truth: MaterialField<f64>,
}

fn setup() -> Setup {
    let geometry = PlateGeometry::default_experiment().with_edge_pads(5, 0.02);
    let mesh = tag_boundaries(&build_plate_mesh(&geometry, 0.02).unwrap(), &geometry).unwrap();
    let space = FeSpace::new(&mesh).unwrap();
    let basis = build_load_basis(&mesh, BasisSpec::default()).unwrap();
    let grid = test_inclusion_grid(&geometry, 5, 5).unwrap();
    let phantom = phantom_center_disc(&geometry, 0.12, makrolon(), aluminum()).unwrap();
    Setup {
        background: MaterialField::uniform(mesh.num_elements(), makrolon()),
        truth: materialize(&phantom, &mesh),
        mesh,
        space,
        basis,
        grid,
    }
}

fn directions(scales: &[f64]) -> Vec<FrechetDirection<f64>> {
    let d = aluminum::<f64>().minus(&makrolon());
    scales
        .iter()
        .map(|s| FrechetDirection {
            alpha_lambda: s * d.lambda,
            alpha_mu: s * d.lambda,
            alpha_rho: d.rho,
            rho_sign: -1.0,
        })
        .collect()
}

#[test]
fn null_data_and_assumption_boundary_case() {
    let s = setup();
    let freq = FrequencyConfig::hz(21.0);
    let bg = ntd_solution(
        &s.space,
        &s.background,
        &freq,
        &s.basis,
        NtdKind::Background,
    )
    .unwrap();
    let pairings = ElementPairings::new(&s.space, &bg.solutions).unwrap();
    let params = TestParameters {
        direction: FrechetDirection {
            alpha_lambda: 0.0,
            alpha_mu: 0.0,
            alpha_rho: 0.0,
            rho_sign: -1.0,
        },
        delta: 0.0,
        max_count: 0,
    };
    let out = monotonicity_test(
        12, &s.grid, &s.mesh, &bg.matrix, &bg.matrix, &pairings, &params, &freq,
    )
    .unwrap();
    assert_eq!(out.negative_count, 0);
    assert!(out.inside);
    assert!(out.eigenvalues.iter().all(|&v| v == 0.0));

    let settings = ReconstructionSettings::new(directions(&[1e-2]), 0.0, Threshold::Strict(6));
    let r = reconstruct(
        &s.grid, &s.mesh, &bg.matrix, &bg.matrix, &pairings, &settings, &freq,
    )
    .unwrap();
    assert!(r.null_data);

    let a = check_assumption(&pairings, &s.background, &s.background, &freq).unwrap();
    assert_eq!((a.lhs, a.rhs, a.holds), (0.0, 0.0, false));
    let a = check_assumption(&pairings, &s.truth, &s.background, &freq).unwrap();
    assert!(a.holds && a.ratio() > 10.0, "{a:?}");
}

#[test]
fn reconstruction_is_deterministic_and_monotone_in_threshold() {
    let s = setup();
    let freq = FrequencyConfig::hz(41.0);
    let bg = ntd_solution(
        &s.space,
        &s.background,
        &freq,
        &s.basis,
        NtdKind::Background,
    )
    .unwrap();
    let truth = ntd_solution(&s.space, &s.truth, &freq, &s.basis, NtdKind::True).unwrap();
    let pairings = ElementPairings::new(&s.space, &bg.solutions).unwrap();
    let run = |m: usize| {
        let settings =
            ReconstructionSettings::new(directions(&[1e-2, 1e-1]), 0.0, Threshold::Strict(m));
        reconstruct(
            &s.grid,
            &s.mesh,
            &bg.matrix,
            &truth.matrix,
            &pairings,
            &settings,
            &freq,
        )
        .unwrap()
    };
    let a = run(6);
    assert_eq!(a, run(6));
    assert!(!a.null_data);
    let mut previous: Vec<usize> = Vec::new();
    for m in 0..=s.basis.len() + 1 {
        let r = run(m);
        assert!(
            previous.iter().all(|k| r.accepted.contains(k)),
            "threshold {m}"
        );
        for o in &r.outcomes {
            assert_eq!(o.inside, r.accepted.contains(&o.box_id));
        }
        previous = r.accepted;
    }
    assert_eq!(previous.len(), s.grid.len());

    let empty = reconstruct(
        &TestInclusionGrid::empty(),
        &s.mesh,
        &bg.matrix,
        &truth.matrix,
        &pairings,
        &a.settings,
        &freq,
    )
    .unwrap();
    assert!(
        empty.accepted.is_empty() && empty.outcomes.is_empty() && empty.completed_mask.count() == 0
    );
}

#[test]
fn monotonicity_inequalities() {
    let s = setup();
    // identical materials: both sides vanish
    let freq = FrequencyConfig::hz(21.0);
    let same =
        verify_monotonicity_lower(&s.space, &s.background, &s.background, &freq, &s.basis).unwrap();
    assert!(same.rows.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));
    let same =
        verify_monotonicity_upper(&s.space, &s.background, &s.background, &freq, &s.basis).unwrap();
    assert!(same.rows.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));

    // static limit, stiffer first material with equal density
    let stat = FrequencyConfig::rad_s(1e-3);
    let mut equal_rho = s.truth.clone();
    equal_rho.rho = s.background.rho.clone();
    let low =
        verify_monotonicity_lower(&s.space, &equal_rho, &s.background, &stat, &s.basis).unwrap();
    assert_eq!(low.violations, 0, "{low:?}");
    let up =
        verify_monotonicity_upper(&s.space, &equal_rho, &s.background, &stat, &s.basis).unwrap();
    assert_eq!(up.violations, 0, "{up:?}");

    // load scaling scales both sides by s²
    let mut scaled = s.basis.clone();
    scaled.loads = scaled.loads.iter().map(|g| g.scaled(3.0)).collect();
    let a = verify_monotonicity_upper(&s.space, &s.truth, &s.background, &freq, &s.basis).unwrap();
    let b = verify_monotonicity_upper(&s.space, &s.truth, &s.background, &freq, &scaled).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((9.0 * x.lhs - y.lhs).abs() <= 1e-9 * y.lhs.abs());
        assert!((9.0 * x.rhs - y.rhs).abs() <= 1e-9 * y.rhs.abs());
    }
    assert_eq!(a.violations, b.violations);
    let again =
        verify_monotonicity_upper(&s.space, &s.truth, &s.background, &freq, &s.basis).unwrap();
    assert_eq!(again, a);
}
