//! Subcommand bodies. Each writes its artifacts under `out` and returns a short summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use elastoscan::fem::Coefficients;
use elastoscan::mesh::FacetTag;
use elastoscan::monotonicity::{
    assumption_failure_frequency, check_assumption, verify_monotonicity_lower,
    verify_monotonicity_upper, AssumptionReport, AssumptionScan, ViolationReport,
};
use elastoscan::ntd::{frechet_convergence_report, loglog_slope, NtdKind, NtdMatrix, RemainderRow};
use elastoscan::pipeline::{
    assemble_measured_ntd, estimate_noise, force_channel_name, fourier_extract, load_response,
    mean_matrix, read_record_csv, read_sidecar, trim_and_align, write_record_csv, write_sidecar,
    LoadResponse, NoiseEstimate, SpectralSample,
};
use elastoscan::report::{render_grid_svg, ReconstructionReport};
use elastoscan::synthetic::{sensor_transfer, tone_record};

use crate::run::{frequency_tag, Setup};

/// Frequencies outside the analysis bands, refused unless forced.
#[derive(Debug, thiserror::Error)]
#[error("{value} Hz lies outside the analysis bands ({bands}); pass --force to run anyway")]
pub struct OutOfBand {
    pub value: f64,
    pub bands: String,
}

pub fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn hertz_of(setup: &Setup, value: f64) -> f64 {
    if setup.config.interpret_hz {
        value
    } else {
        value / std::f64::consts::TAU
    }
}

/// Refuses configured frequencies outside the bands unless `force`.
pub fn check_bands(setup: &Setup, force: bool) -> anyhow::Result<()> {
    for &f in &setup.config.frequencies {
        let hz = hertz_of(setup, f);
        if !setup.config.bands.contains(hz) {
            if force {
                log::warn!("{hz} Hz is outside the analysis bands; continuing (--force)");
            } else {
                return Err(OutOfBand {
                    value: hz,
                    bands: setup.config.bands.describe(),
                }
                .into());
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MeshSummary {
    nodes: usize,
    elements: usize,
    dofs: usize,
    dims: [usize; 3],
    cell: [f64; 3],
    free_facets: usize,
    clamped_facets: usize,
    neumann_patches: Vec<(String, usize)>,
    basis_size: usize,
    basis_labels: Vec<String>,
    sensors: usize,
}

pub fn cmd_mesh(setup: &Setup, out: &Path) -> anyhow::Result<String> {
    let m = &setup.mesh;
    let patches = setup
        .geometry
        .neumann_patches
        .iter()
        .enumerate()
        .map(|(p, r)| {
            (
                r.name.clone(),
                m.facets_with_tag(FacetTag::Neumann(p)).count(),
            )
        })
        .collect();
    let summary = MeshSummary {
        nodes: m.num_nodes(),
        elements: m.num_elements(),
        dofs: m.num_dofs(),
        dims: m.dims,
        cell: m.cell,
        free_facets: m.facets.iter().filter(|f| f.tag == FacetTag::Free).count(),
        clamped_facets: m
            .facets
            .iter()
            .filter(|f| matches!(f.tag, FacetTag::Dirichlet(_)))
            .count(),
        neumann_patches: patches,
        basis_size: setup.basis.len(),
        basis_labels: setup.basis.labels.clone(),
        sensors: setup.layout.len(),
    };
    write(&out.join("mesh.json"), &json(&summary))?;
    write(
        &out.join("geometry.txt"),
        &setup.geometry.to_document().render(),
    )?;
    write(&out.join("sensors.csv"), &write_sidecar(&setup.layout)?)?;
    Ok(format!(
        "{} elements, {} nodes, {} basis loads, {} sensor channels",
        summary.elements, summary.nodes, summary.basis_size, summary.sensors
    ))
}

/// Per-load displacement traces at the sensor channels; with `records`, also
/// single-shaker time records and the sensor sidecar for `ingest`.
pub fn cmd_forward(setup: &Setup, out: &Path, records: bool) -> anyhow::Result<String> {
    let mut summary = String::new();
    if records {
        write(&out.join("sensors.csv"), &write_sidecar(&setup.layout)?)?;
    }
    for &f in &setup.config.frequencies {
        let freq = setup.frequency(f)?;
        let tag = frequency_tag(f, setup.config.interpret_hz);
        let sol = setup.true_solution(&freq)?;
        let mut table = String::from("channel,x,y,z,axis");
        for l in &setup.basis.labels {
            let _ = write!(table, ",{l}");
        }
        table.push('\n');
        for c in &setup.layout.channels {
            let _ = write!(
                table,
                "{},{},{},{},{}",
                c.name,
                c.position[0],
                c.position[1],
                c.position[2],
                c.axis.as_str()
            );
            for u in &sol.solutions {
                let v = u
                    .sample(&setup.mesh, &c.position)
                    .context("sensor outside the mesh")?;
                let _ = write!(table, ",{:e}", v[c.axis.index()]);
            }
            table.push('\n');
        }
        write(&out.join(format!("traces_{tag}.csv")), &table)?;
        let peak = sol
            .solutions
            .iter()
            .map(|u| u.max_abs())
            .fold(0.0, f64::max);
        let _ = writeln!(
            summary,
            "{tag}: {} loads, peak |u| {peak:e} m per unit load",
            sol.solutions.len()
        );
        if records {
            let transfer =
                sensor_transfer(&setup.mesh, &setup.basis, &sol.solutions, &setup.layout)?;
            let present: Vec<bool> = setup
                .layout
                .blocked(&setup.geometry)
                .iter()
                .map(|b| !b)
                .collect();
            let mut profile = setup.config.tone;
            profile.frequency = freq.hertz();
            let dir = out.join(format!("records_{tag}"));
            for (j, h) in transfer.iter().enumerate() {
                let channel = force_channel_name(j, &setup.basis, &setup.geometry)?;
                let rec = tone_record(&profile, &channel, h, &setup.layout, &present)?;
                write(
                    &dir.join(format!("load_{j:03}.csv")),
                    &write_record_csv(&rec)?,
                )?;
            }
            let _ = writeln!(
                summary,
                "{tag}: {} records in {} ({} sensor channels blocked by clamps)",
                transfer.len(),
                dir.display(),
                present.iter().filter(|p| !**p).count()
            );
        }
    }
    Ok(summary)
}

pub fn cmd_ntd(setup: &Setup, out: &Path) -> anyhow::Result<String> {
    let mut summary = String::new();
    for &f in &setup.config.frequencies {
        let tag = frequency_tag(f, setup.config.interpret_hz);
        let bg = setup.background_data(setup.frequency(f)?)?;
        write(
            &out.join(format!("ntd_background_{tag}.txt")),
            &bg.solution.matrix.to_text(),
        )?;
        let truth = setup.true_solution(&bg.freq)?;
        write(
            &out.join(format!("ntd_true_{tag}.txt")),
            &truth.matrix.to_text(),
        )?;
        let _ = write!(
            summary,
            "{tag}: size {}, |L0| {:e}, symmetry defect {:e}",
            bg.solution.matrix.dim(),
            bg.solution.matrix.spectral_norm()?,
            bg.solution.symmetry_defect
        );
        if setup.config.noise > 0.0 {
            let (noisy, target) = setup.synthetic_measurement(&bg)?;
            write(&out.join(format!("ntd_noisy_{tag}.txt")), &noisy.to_text())?;
            let _ = write!(summary, ", noise target {target:e}");
        }
        summary.push('\n');
    }
    Ok(summary)
}

fn read_ntd(path: &Path) -> anyhow::Result<NtdMatrix<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(NtdMatrix::from_text(&text)?)
}

fn now_unix() -> Option<u64> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

/// Reconstruction per configured frequency from synthetic data, or from a measured NtD file.
pub fn cmd_reconstruct(
    setup: &Setup,
    out: &Path,
    measured: Option<&Path>,
    reproducible: bool,
) -> anyhow::Result<String> {
    let stamp = if reproducible { None } else { now_unix() };
    let mut summary = String::new();
    let mut runs: Vec<(String, f64, Option<NtdMatrix<f64>>)> = Vec::new();
    match measured {
        Some(path) => {
            let l = read_ntd(path)?;
            let value = if setup.config.interpret_hz {
                l.omega / std::f64::consts::TAU
            } else {
                l.omega
            };
            runs.push((
                frequency_tag(value, setup.config.interpret_hz),
                value,
                Some(l),
            ));
        }
        None => {
            for &f in &setup.config.frequencies {
                runs.push((frequency_tag(f, setup.config.interpret_hz), f, None));
            }
        }
    }
    for (tag, value, lmeas) in runs {
        let bg = setup.background_data(setup.frequency(value)?)?;
        let (lmeas, target, source) = match lmeas {
            Some(l) => {
                if l.dim() != setup.basis.len() {
                    bail!(
                        "measured NtD has size {} but the configured basis has {} loads",
                        l.dim(),
                        setup.basis.len()
                    );
                }
                (l, 0.0, "measured")
            }
            None => {
                let (l, t) = setup.synthetic_measurement(&bg)?;
                (l, t, "synthetic")
            }
        };
        let report = setup.reconstruct_report(&bg, &lmeas, target, source, stamp)?;
        write(&out.join(format!("report_{tag}.json")), &report.to_json())?;
        write(
            &out.join(format!("grid_{tag}.svg")),
            &render_grid_svg(&report),
        )?;
        let _ = writeln!(
            summary,
            "{tag}: accepted boxes {:?} ({} component(s)){}",
            report.accepted,
            report.components.len(),
            if report.warnings.is_empty() {
                String::new()
            } else {
                format!("; warnings: {}", report.warnings.join("; "))
            }
        );
    }
    Ok(summary)
}

#[derive(Serialize)]
struct IngestSummary {
    frequency_hz: f64,
    bin_frequency_hz: f64,
    bin_width_hz: f64,
    in_band: bool,
    records: usize,
    repeats: usize,
    filled_values: usize,
    imaginary_norm: f64,
    relative_imaginary: f64,
    asymmetry: f64,
    noise: Option<NoiseEstimate<f64>>,
}

/// Record files to spectral samples and a measured NtD matrix per configured frequency.
/// Several records exciting the same load are treated as repeats.
pub fn cmd_ingest(
    setup: &Setup,
    out: &Path,
    sidecar: &Path,
    records: &[PathBuf],
    force: bool,
) -> anyhow::Result<String> {
    check_bands(setup, force)?;
    let layout = read_sidecar(
        &fs::read_to_string(sidecar).with_context(|| format!("reading {}", sidecar.display()))?,
    )
    .with_context(|| format!("parsing {}", sidecar.display()))?;
    layout.validate(&setup.mesh)?;
    if records.is_empty() {
        bail!("no record files given");
    }
    let raw: Vec<_> = records
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let rec = read_record_csv::<f64>(&text)
                .with_context(|| format!("parsing {}", p.display()))?;
            let (f, d) = rec.series();
            trim_and_align(&f, &d).with_context(|| format!("aligning {}", p.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut summary = String::new();
    for &value in &setup.config.frequencies {
        let tag = frequency_tag(value, setup.config.interpret_hz);
        let hz = hertz_of(setup, value);
        let freq = setup.frequency(value)?;
        let samples: Vec<SpectralSample<f64>> = raw
            .iter()
            .map(|r| fourier_extract(r, hz, setup.config.window, &setup.config.bands))
            .collect::<Result<_, _>>()?;
        write(&out.join(format!("spectral_{tag}.json")), &json(&samples))?;
        let responses: Vec<LoadResponse<f64>> = samples
            .iter()
            .zip(records)
            .map(|(s, p)| {
                load_response(s, &layout, &setup.basis, &setup.mesh, &setup.geometry)
                    .with_context(|| format!("interpreting {}", p.display()))
            })
            .collect::<anyhow::Result<_>>()?;
        let mut per_load: Vec<Vec<LoadResponse<f64>>> = vec![Vec::new(); setup.basis.len()];
        for r in responses {
            per_load[r.load].push(r);
        }
        let repeats = per_load.iter().map(Vec::len).min().unwrap_or(0);
        if repeats == 0 {
            let j = per_load.iter().position(Vec::is_empty).unwrap_or(0);
            bail!(elastoscan::Error::Coverage(format!(
                "no record excites basis load {j} ({})",
                setup.basis.labels[j]
            )));
        }
        let measured: Vec<_> = (0..repeats)
            .map(|k| {
                let set: Vec<LoadResponse<f64>> = per_load.iter().map(|v| v[k].clone()).collect();
                assemble_measured_ntd(&set, &layout, &setup.basis, &setup.mesh, freq.omega)
            })
            .collect::<Result<_, _>>()?;
        let (matrix, noise) = if repeats >= 2 {
            let mats: Vec<NtdMatrix<f64>> = measured.iter().map(|m| m.matrix.clone()).collect();
            let noise = estimate_noise(&mats)?;
            let mean = NtdMatrix {
                entries: mean_matrix(&mats)?,
                omega: freq.omega,
                kind: NtdKind::Measured,
            };
            (mean, Some(noise))
        } else {
            (measured[0].matrix.clone(), None)
        };
        write(
            &out.join(format!("ntd_measured_{tag}.txt")),
            &matrix.to_text(),
        )?;
        let first = &measured[0];
        let report = IngestSummary {
            frequency_hz: hz,
            bin_frequency_hz: samples[0].frequency,
            bin_width_hz: samples[0].bin_width,
            in_band: samples[0].in_band,
            records: records.len(),
            repeats,
            filled_values: first.filled,
            imaginary_norm: first.imaginary_norm,
            relative_imaginary: first.relative_imaginary,
            asymmetry: first.asymmetry,
            noise,
        };
        write(&out.join(format!("ingest_{tag}.json")), &json(&report))?;
        let _ = writeln!(
            summary,
            "{tag}: {} records, {} repeat(s), {} spline-filled values, relative imaginary part {:e}",
            records.len(),
            repeats,
            first.filled,
            first.relative_imaginary
        );
    }
    Ok(summary)
}

#[derive(Serialize)]
struct InequalitySummary {
    violations: usize,
    worst_relative_margin: f64,
    report: ViolationReport,
}

impl InequalitySummary {
    fn of(report: ViolationReport) -> Self {
        let worst = report
            .rows
            .iter()
            .map(|r| {
                let scale = r.lhs.abs().max(r.rhs.abs());
                if scale > 0.0 {
                    r.margin / scale
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min);
        Self {
            violations: report.violations,
            worst_relative_margin: if worst.is_finite() { worst } else { 0.0 },
            report,
        }
    }
}

#[derive(Serialize)]
struct FrequencyCheck {
    value: f64,
    hz: f64,
    omega: f64,
    assumption: AssumptionReport,
    assumption_ratio: f64,
    lower: InequalitySummary,
    upper: InequalitySummary,
    frechet: Vec<RemainderRow>,
    frechet_slope: Option<f64>,
}

#[derive(Serialize)]
struct CheckReport {
    schema: &'static str,
    frequencies: Vec<FrequencyCheck>,
    scan: Option<AssumptionScan>,
}

/// Assumption, both monotonicity inequalities and the Fréchet remainder per frequency,
/// plus an optional scan `(start, stop)` Hz for the assumption failure frequency.
pub fn cmd_check(setup: &Setup, out: &Path, scan: Option<(f64, f64)>) -> anyhow::Result<String> {
    let mut summary = String::new();
    let h = setup.truth.difference(&setup.background)?;
    let mut freqs = Vec::new();
    for &value in &setup.config.frequencies {
        let bg = setup.background_data(setup.frequency(value)?)?;
        let assumption = check_assumption(&bg.pairings, &setup.truth, &setup.background, &bg.freq)?;
        let lower = verify_monotonicity_lower(
            &setup.space,
            &setup.background,
            &setup.truth,
            &bg.freq,
            &setup.basis,
        )?;
        let upper = verify_monotonicity_upper(
            &setup.space,
            &setup.background,
            &setup.truth,
            &bg.freq,
            &setup.basis,
        )?;
        let frechet = if is_zero(&h) {
            vec![]
        } else {
            frechet_convergence_report(
                &setup.space,
                &setup.background,
                &bg.freq,
                &setup.basis,
                &h,
                &[1e-2, 1e-3, 1e-4],
            )?
        };
        let slope = loglog_slope(&frechet);
        let status = |ok: bool| if ok { "pass" } else { "warn" };
        let _ = writeln!(
            summary,
            "{}: assumption {} (lhs {:e}, rhs {:e}, ratio {:.3}); lower {} ({} violations); upper {} ({} violations); Fréchet slope {}",
            frequency_tag(value, setup.config.interpret_hz),
            status(assumption.holds),
            assumption.lhs,
            assumption.rhs,
            assumption.ratio(),
            status(lower.violations == 0),
            lower.violations,
            status(upper.violations == 0),
            upper.violations,
            slope.map_or("n/a".to_string(), |s| format!("{s:.3}"))
        );
        freqs.push(FrequencyCheck {
            value,
            hz: bg.freq.hertz(),
            omega: bg.freq.omega,
            assumption_ratio: assumption.ratio(),
            assumption,
            lower: InequalitySummary::of(lower),
            upper: InequalitySummary::of(upper),
            frechet,
            frechet_slope: slope,
        });
    }
    let scan = match scan {
        Some((start, stop)) => {
            let s = assumption_failure_frequency(
                &setup.space,
                &setup.truth,
                &setup.background,
                &setup.basis,
                start,
                stop,
                1.1,
                6,
            )?;
            let _ = writeln!(
                summary,
                "assumption failure frequency in [{start}, {stop}] Hz: {}",
                s.failure_hz
                    .map_or("none found".to_string(), |f| format!("{f:.2} Hz"))
            );
            Some(s)
        }
        None => None,
    };
    write(
        &out.join("check.json"),
        &json(&CheckReport {
            schema: "elastoscan-check/1",
            frequencies: freqs,
            scan,
        }),
    )?;
    Ok(summary)
}

fn is_zero(h: &Coefficients<f64>) -> bool {
    h.lambda
        .iter()
        .chain(&h.mu)
        .chain(&h.rho)
        .all(|v| *v == 0.0)
}

/// Re-renders the SVG of an existing report.
pub fn cmd_report(input: &Path, out: &Path) -> anyhow::Result<String> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report = ReconstructionReport::from_json(&text)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    let name = stem
        .strip_prefix("report_")
        .map_or("grid.svg".to_string(), |t| format!("grid_{t}.svg"));
    write(&out.join(&name), &render_grid_svg(&report))?;
    Ok(format!(
        "{:.3} Hz: accepted boxes {:?} in {} component(s); wrote {name}",
        report.frequency_hz,
        report.accepted,
        report.components.len()
    ))
}
