use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elastoscan::fem::{FeSpace, FrequencyConfig, MaterialField};
use elastoscan::linalg::{spectral_norm_symmetric, Matrix};
use elastoscan::mesh::{build_plate_mesh, tag_boundaries, test_inclusion_grid, PlateGeometry};
use elastoscan::monotonicity::{reconstruct, ReconstructionSettings, Threshold};
use elastoscan::ntd::{
    build_load_basis, ntd_solution, BasisSpec, ElementPairings, FrechetDirection, NtdKind,
    NtdMatrix,
};
use elastoscan::pipeline::{
    assemble_measured_ntd, estimate_noise, force_channel_name, fourier_extract, load_response,
    read_record_csv, read_sidecar, trim_and_align, write_record_csv, write_sidecar, AnalysisBands,
    LoadResponse, SensorLayout, Window,
};
use elastoscan::synthetic::{
    add_noise, aluminum, makrolon, materialize, phantom_center_disc, phantom_two_discs,
    sensor_transfer, tone_record, NoiseModel, Phantom, Shape, ToneProfile,
};
use elastoscan::Error;

fn ntd(entries: Matrix<f64>) -> NtdMatrix<f64> {
    NtdMatrix {
        entries,
        omega: 2.0 * std::f64::consts::PI * 21.0,
        kind: NtdKind::Measured,
    }
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let a = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.add(&a.transpose()).unwrap().scale(0.5)
}

#[test]
fn closed_loop_through_csv_matches_direct_ntd() {
    let geometry = PlateGeometry::default_experiment().with_edge_pads(5, 0.02);
    let mesh = tag_boundaries(&build_plate_mesh(&geometry, 0.02).unwrap(), &geometry).unwrap();
    let space = FeSpace::new(&mesh).unwrap();
    let basis = build_load_basis(&mesh, BasisSpec::default()).unwrap();
    let phantom = phantom_center_disc(&geometry, 0.12, makrolon(), aluminum()).unwrap();
    let truth = materialize(&phantom, &mesh);
    let background = MaterialField::uniform(mesh.num_elements(), makrolon());
    let freq = FrequencyConfig::hz(21.0);
    let direct = ntd_solution(&space, &truth, &freq, &basis, NtdKind::True).unwrap();

    let layout =
        read_sidecar::<f64>(&write_sidecar(&SensorLayout::boundary_nodes(&mesh)).unwrap()).unwrap();
    layout.validate(&mesh).unwrap();
    let present: Vec<bool> = layout.blocked(&geometry).iter().map(|b| !b).collect();
    assert!(
        present.iter().any(|p| !p),
        "clamps should hide some sensors"
    );
    let transfer = sensor_transfer(&mesh, &basis, &direct.solutions, &layout).unwrap();
    let profile = ToneProfile::new(21.0);
    let bands = AnalysisBands::default();
    let responses: Vec<LoadResponse<f64>> = transfer
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let channel = force_channel_name(j, &basis, &geometry).unwrap();
            let rec = tone_record(&profile, &channel, h, &layout, &present).unwrap();
            let rec = read_record_csv::<f64>(&write_record_csv(&rec).unwrap()).unwrap();
            let (f, d) = rec.series();
            let sweep = trim_and_align(&f, &d).unwrap();
            let sample = fourier_extract(&sweep, 21.0, Window::Hann, &bands).unwrap();
            assert!(sample.in_band);
            load_response(&sample, &layout, &basis, &mesh, &geometry).unwrap()
        })
        .collect();
    assert!(responses.iter().enumerate().all(|(j, r)| r.load == j));
    let measured = assemble_measured_ntd(&responses, &layout, &basis, &mesh, freq.omega).unwrap();
    assert!(measured.filled > 0);
    assert!(
        measured.relative_imaginary < 1e-8,
        "{:e}",
        measured.relative_imaginary
    );
    let norm = direct.matrix.spectral_norm().unwrap();
    let diff = spectral_norm_symmetric(
        &measured
            .matrix
            .entries
            .sub(&direct.matrix.entries)
            .unwrap()
            .symmetrized(),
    )
    .unwrap();
    assert!(diff <= 1e-2 * norm, "relative deviation {:e}", diff / norm);

    let bg = ntd_solution(&space, &background, &freq, &basis, NtdKind::Background).unwrap();
    let pairings = ElementPairings::new(&space, &bg.solutions).unwrap();
    let grid = test_inclusion_grid(&geometry, 5, 5).unwrap();
    let d = aluminum::<f64>().minus(&makrolon());
    let settings = ReconstructionSettings::new(
        [1e-2, 1e-1]
            .iter()
            .map(|s| FrechetDirection {
                alpha_lambda: s * d.lambda,
                alpha_mu: s * d.lambda,
                alpha_rho: d.rho,
                rho_sign: -1.0,
            })
            .collect(),
        0.0,
        Threshold::Strict(6),
    );
    let from_direct = reconstruct(
        &grid,
        &mesh,
        &bg.matrix,
        &direct.matrix,
        &pairings,
        &settings,
        &freq,
    )
    .unwrap();
    let from_records = reconstruct(
        &grid,
        &mesh,
        &bg.matrix,
        &measured.matrix,
        &pairings,
        &settings,
        &freq,
    )
    .unwrap();
    assert_eq!(from_direct.accepted, from_records.accepted);
}

#[test]
fn all_zero_displacements_give_zero_matrix() {
    let geometry = PlateGeometry::default_experiment().with_edge_pads(2, 0.04);
    let mesh = tag_boundaries(&build_plate_mesh(&geometry, 0.02).unwrap(), &geometry).unwrap();
    let basis = build_load_basis(&mesh, BasisSpec::default()).unwrap();
    let layout = SensorLayout::boundary_nodes(&mesh);
    let responses: Vec<LoadResponse<f64>> = (0..basis.len())
        .map(|load| LoadResponse {
            load,
            values: vec![Some(Complex::new(0.0, 0.0)); layout.len()],
        })
        .collect();
    let m = assemble_measured_ntd(&responses, &layout, &basis, &mesh, 100.0).unwrap();
    assert_eq!(m.matrix.entries.max_abs(), 0.0);
    assert_eq!(m.filled, 0);

    // a missing load is reported rather than silently zero-filled
    assert!(assemble_measured_ntd(&responses[1..], &layout, &basis, &mesh, 100.0).is_err());
}

#[test]
fn conjugated_responses_give_the_same_real_matrix() {
    let geometry = PlateGeometry::default_experiment().with_edge_pads(2, 0.04);
    let mesh = tag_boundaries(&build_plate_mesh(&geometry, 0.02).unwrap(), &geometry).unwrap();
    let basis = build_load_basis(&mesh, BasisSpec::default()).unwrap();
    let layout = SensorLayout::boundary_nodes(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let responses: Vec<LoadResponse<f64>> = (0..basis.len())
        .map(|load| LoadResponse {
            load,
            values: (0..layout.len())
                .map(|_| {
                    Some(Complex::new(
                        rng.gen_range(-1e-6..1e-6),
                        rng.gen_range(-1e-9..1e-9),
                    ))
                })
                .collect(),
        })
        .collect();
    let conj: Vec<LoadResponse<f64>> = responses
        .iter()
        .map(|r| LoadResponse {
            load: r.load,
            values: r.values.iter().map(|v| v.map(|c| c.conj())).collect(),
        })
        .collect();
    let a = assemble_measured_ntd(&responses, &layout, &basis, &mesh, 100.0).unwrap();
    let b = assemble_measured_ntd(&conj, &layout, &basis, &mesh, 100.0).unwrap();
    assert!(
        a.matrix.entries.sub(&b.matrix.entries).unwrap().max_abs()
            <= 1e-15 * a.matrix.entries.max_abs()
    );
}

#[test]
fn fourier_extract_is_linear_in_the_record() {
    let layout = SensorLayout::<f64> {
        channels: Vec::new(),
    };
    let profile = ToneProfile::new(41.0);
    let rec = tone_record(&profile, "shaker", &[], &layout, &[]).unwrap();
    let (f, d) = rec.series();
    let sweep = trim_and_align(&f, &d).unwrap();
    let bands = AnalysisBands::default();
    let a = fourier_extract(&sweep, 41.0, Window::Hann, &bands)
        .unwrap()
        .force("shaker")
        .unwrap();
    let mut scaled = sweep.clone();
    scaled.force[0].values.iter_mut().for_each(|v| *v *= -3.5);
    let b = fourier_extract(&scaled, 41.0, Window::Hann, &bands)
        .unwrap()
        .force("shaker")
        .unwrap();
    assert!((b + a * 3.5).norm() <= 1e-12 * a.norm());
    assert!(a.norm() > 0.0);
}

#[test]
fn noise_estimate_covers_every_repeat() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base = random_symmetric(12, &mut rng);
    let repeats: Vec<NtdMatrix<f64>> = (0..5)
        .map(|_| {
            ntd(base
                .add(&random_symmetric(12, &mut rng).scale(1e-3))
                .unwrap())
        })
        .collect();
    let est = estimate_noise(&repeats).unwrap();
    let mean = elastoscan::pipeline::mean_matrix(&repeats).unwrap();
    for r in &repeats {
        let dev = spectral_norm_symmetric(&r.entries.sub(&mean).unwrap()).unwrap();
        assert!(est.delta >= dev);
    }
    assert_eq!(est.repeats_used, 5);
    assert!(matches!(
        estimate_noise(&repeats[..1]),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn injected_noise_has_the_requested_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = ntd(random_symmetric(20, &mut rng));
    let model = |seed| NoiseModel {
        delta_target: 0.25,
        seed,
    };
    let a = add_noise(&l, &model(1)).unwrap();
    let b = add_noise(&l, &model(1)).unwrap();
    let c = add_noise(&l, &model(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    for noisy in [&a, &c] {
        let e = noisy.entries.sub(&l.entries).unwrap();
        assert_eq!(e.symmetry_defect(), 0.0);
        assert!((spectral_norm_symmetric(&e).unwrap() - 0.99 * 0.25).abs() < 1e-12);
    }
    assert_eq!(
        add_noise(
            &l,
            &NoiseModel {
                delta_target: 0.0,
                seed: 1
            }
        )
        .unwrap()
        .entries,
        l.entries
    );
    assert!(add_noise(
        &l,
        &NoiseModel {
            delta_target: -1.0,
            seed: 1
        }
    )
    .is_err());
}

#[test]
fn materialize_matches_centroid_oracle() {
    let geometry = PlateGeometry::default_experiment();
    let mesh = build_plate_mesh(&geometry, 0.01).unwrap();
    let phantom = phantom_center_disc(&geometry, 0.12, makrolon(), aluminum()).unwrap();
    let field = materialize(&phantom, &mesh);
    let al = aluminum::<f64>();
    let mut expected = 0;
    for e in 0..mesh.num_elements() {
        let c: [f64; 3] = mesh.element_centroid(e).into();
        let inside = ((c[0] - 0.15).powi(2) + (c[1] - 0.15).powi(2)).sqrt() <= 0.06;
        expected += usize::from(inside);
        assert_eq!(field.get(e) == al, inside, "element {e}");
    }
    // 12 columns per row through the middle, roughly π·6² cells in plane
    assert!((100..=120).contains(&expected), "{expected}");
}

#[test]
fn phantom_validation() {
    let g = PlateGeometry::default_experiment();
    assert!(matches!(
        phantom_center_disc(&g, 0.31, makrolon(), aluminum()),
        Err(Error::Containment(_))
    ));
    assert!(matches!(
        phantom_two_discs(&g, 0.18, [[0.1, 0.1], [0.2, 0.2]], makrolon(), aluminum()),
        Err(Error::Overlap(_))
    ));
    let ok = phantom_two_discs(
        &g,
        0.10,
        [[0.09, 0.09], [0.21, 0.21]],
        makrolon(),
        aluminum(),
    )
    .unwrap();
    assert_eq!(ok.inclusions.len(), 2);

    let bare = Phantom::homogeneous(makrolon::<f64>());
    let mesh = build_plate_mesh(&g, 0.01).unwrap();
    let plain = materialize(&bare, &mesh);
    assert!((0..plain.len()).all(|e| plain.get(e) == makrolon()));

    let round = Phantom::from_document(&ok.to_document()).unwrap();
    assert_eq!(round, ok);
    assert!(matches!(ok.inclusions[0].shape, Shape::Disc { .. }));
}
