//! Experiment setup shared by the subcommands.

use std::sync::Arc;

use elastoscan::fem::{FeSpace, FrequencyConfig, Material, MaterialField};
use elastoscan::mesh::{
    build_plate_mesh, tag_boundaries, test_inclusion_grid, Mesh, PlateGeometry, TestInclusionGrid,
};
use elastoscan::monotonicity::{check_assumption, reconstruct, ReconstructionSettings};
use elastoscan::ntd::{
    build_load_basis, ntd_solution, ElementPairings, FrechetDirection, LoadBasis, NtdKind,
    NtdMatrix, NtdSolution,
};
use elastoscan::pipeline::SensorLayout;
use elastoscan::report::{build_report, ReconstructionReport, ReportContext};
use elastoscan::synthetic::{
    add_noise, aluminum, default_two_disc_centers, makrolon, materialize, phantom_center_disc,
    phantom_two_discs, NoiseModel, Phantom,
};
use elastoscan::{config::Document, Error, Result};

use crate::config::{PhantomSource, RunConfig};

pub struct Setup {
    pub config: RunConfig,
    pub geometry: PlateGeometry<f64>,
    pub mesh: Mesh<f64>,
    pub space: Arc<FeSpace<f64>>,
    pub basis: LoadBasis<f64>,
    pub grid: TestInclusionGrid<f64>,
    pub phantom: Phantom<f64>,
    pub truth: MaterialField<f64>,
    pub background: MaterialField<f64>,
    pub layout: SensorLayout<f64>,
}

/// Background solutions at one frequency, with the pairings every test matrix needs.
pub struct BackgroundData {
    pub freq: FrequencyConfig<f64>,
    pub solution: NtdSolution<f64>,
    pub pairings: ElementPairings<f64>,
}

fn read_document(path: &std::path::Path) -> Result<Document> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Document::parse(&text)
}

impl Setup {
    pub fn new(config: RunConfig) -> Result<Self> {
        let mut geometry = match &config.geometry {
            Some(p) => PlateGeometry::from_document(&read_document(p)?)?,
            None => PlateGeometry::default_experiment(),
        };
        if let Some((n, len)) = config.edge_pads {
            geometry = geometry.with_edge_pads(n, len);
            geometry.validate()?;
        }
        let mesh = tag_boundaries(&build_plate_mesh(&geometry, config.cell_size)?, &geometry)?;
        let space = FeSpace::new(&mesh)?;
        let basis = build_load_basis(&mesh, config.basis)?;
        let grid = test_inclusion_grid(&geometry, config.grid.0, config.grid.1)?;
        let bg = makrolon();
        let phantom = match &config.phantom {
            PhantomSource::CenterDisc => phantom_center_disc(
                &geometry,
                config.disc_diameter.unwrap_or(0.12),
                bg,
                aluminum(),
            )?,
            PhantomSource::TwoDiscs => phantom_two_discs(
                &geometry,
                config.disc_diameter.unwrap_or(0.10),
                default_two_disc_centers(),
                bg,
                aluminum(),
            )?,
            PhantomSource::None => Phantom::homogeneous(bg),
            PhantomSource::File(p) => {
                let ph = Phantom::from_document(&read_document(p)?)?;
                ph.validate(&geometry, 0.0)?;
                ph
            }
        };
        let truth = materialize(&phantom, &mesh);
        let background = MaterialField::uniform(mesh.num_elements(), phantom.background);
        let layout = SensorLayout::boundary_nodes(&mesh);
        Ok(Self {
            config,
            geometry,
            mesh,
            space,
            basis,
            grid,
            phantom,
            truth,
            background,
            layout,
        })
    }

    pub fn frequency(&self, value: f64) -> Result<FrequencyConfig<f64>> {
        FrequencyConfig::new(value, self.config.interpret_hz)
    }

    /// Contrast used to scale the test directions: the first inclusion's increment, or the aluminum one.
    pub fn contrast(&self) -> Material<f64> {
        self.phantom
            .inclusions
            .first()
            .map(|i| i.perturbation)
            .unwrap_or_else(|| aluminum().minus(&self.phantom.background))
    }

    pub fn directions(&self) -> Vec<FrechetDirection<f64>> {
        let d = self.contrast();
        self.config
            .alpha_scales
            .iter()
            .map(|&s| FrechetDirection {
                alpha_lambda: s * d.lambda,
                alpha_mu: s * d.lambda,
                alpha_rho: self.config.alpha_rho.unwrap_or(d.rho),
                rho_sign: self.config.rho_sign,
            })
            .collect()
    }

    pub fn background_data(&self, freq: FrequencyConfig<f64>) -> Result<BackgroundData> {
        let solution = ntd_solution(
            &self.space,
            &self.background,
            &freq,
            &self.basis,
            NtdKind::Background,
        )?;
        let pairings = ElementPairings::new(&self.space, &solution.solutions)?;
        Ok(BackgroundData {
            freq,
            solution,
            pairings,
        })
    }

    pub fn true_solution(&self, freq: &FrequencyConfig<f64>) -> Result<NtdSolution<f64>> {
        ntd_solution(&self.space, &self.truth, freq, &self.basis, NtdKind::True)
    }

    /// Noise level injected for this background: `noise · ‖L0‖₂`.
    pub fn noise_target(&self, l0: &NtdMatrix<f64>) -> Result<f64> {
        Ok(self.config.noise * l0.spectral_norm()?)
    }

    /// Synthetic measurement: the true NtD matrix plus seeded noise.
    pub fn synthetic_measurement(&self, bg: &BackgroundData) -> Result<(NtdMatrix<f64>, f64)> {
        let truth = self.true_solution(&bg.freq)?;
        let target = self.noise_target(&bg.solution.matrix)?;
        let noisy = add_noise(
            &truth.matrix,
            &NoiseModel {
                delta_target: target,
                seed: self.config.seed,
            },
        )?;
        Ok((noisy, target))
    }

    pub fn settings(&self, noise_target: f64) -> ReconstructionSettings<f64> {
        ReconstructionSettings::new(
            self.directions(),
            self.config.delta.unwrap_or(noise_target),
            self.config.threshold,
        )
    }

    /// Runs the box tests and wraps the result in a report.
    pub fn reconstruct_report(
        &self,
        bg: &BackgroundData,
        lmeas: &NtdMatrix<f64>,
        noise_target: f64,
        data_source: &str,
        generated_unix_s: Option<u64>,
    ) -> Result<ReconstructionReport> {
        let settings = self.settings(noise_target);
        let result = reconstruct(
            &self.grid,
            &self.mesh,
            &bg.solution.matrix,
            lmeas,
            &bg.pairings,
            &settings,
            &bg.freq,
        )?;
        let assumption = check_assumption(&bg.pairings, &self.truth, &self.background, &bg.freq)?;
        let mut warnings = Vec::new();
        if noise_target > 0.0 {
            warnings.push(format!(
                "injected noise of spectral norm {:e} (seed {})",
                0.99 * noise_target,
                self.config.seed
            ));
        }
        Ok(build_report(
            &self.grid,
            &result,
            ReportContext {
                frequency_hz: bg.freq.hertz(),
                plate: [self.geometry.length_x, self.geometry.length_y],
                basis_size: self.basis.len(),
                data_source: data_source.into(),
                assumption: Some(assumption),
                inclusions: self
                    .phantom
                    .inclusions
                    .iter()
                    .map(|i| i.shape.clone())
                    .collect(),
                warnings,
                generated_unix_s,
            },
        ))
    }
}

/// File-name tag of a frequency value: `21hz`, `55.4hz`, `0.001rad`.
pub fn frequency_tag(value: f64, interpret_hz: bool) -> String {
    let unit = if interpret_hz { "hz" } else { "rad" };
    format!("{value}{unit}")
}
