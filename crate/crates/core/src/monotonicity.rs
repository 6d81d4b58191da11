//! Linearized monotonicity tests, threshold selection and reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FeSpace, FrequencyConfig, MaterialField};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::mesh::{
    aligned_box_mask, outer_support_completion, Mesh, RegionMask, TestInclusionGrid,
};
use crate::ntd::{
    ntd_solution, ElementPairings, FrechetDirection, LoadBasis, NtdKind, NtdMatrix, RegionParts,
};
use crate::scalar::Real;

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigenvalues in ascending order and the number strictly below `−δ`.
pub fn count_negative_eigenvalues<T: Real>(
    matrix: &Matrix<T>,
    delta: T,
) -> Result<(usize, Vec<T>)> {
    if !matrix.is_square() {
        return Err(Error::Dimension(
            "eigenvalue count needs a square matrix".into(),
        ));
    }
    if !matrix.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entries".into()));
    }
    if delta < T::zero() {
        return Err(Error::InvalidMatrix(format!("negative threshold {delta}")));
    }
    if matrix.symmetry_defect() > T::lit(SYMMETRY_TOLERANCE) {
        log::debug!(
            "symmetrizing matrix with defect {}",
            matrix.symmetry_defect()
        );
    }
    let values = symmetric_eigenvalues(&matrix.symmetrized())?;
    let count = values.iter().filter(|&&v| v < -delta).count();
    Ok((count, values))
}

/// Parameters of a single test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestParameters<T> {
    pub direction: FrechetDirection<T>,
    /// Noise level in NtD spectral-norm units.
    pub delta: T,
    /// Inside iff the count is at most this value.
    pub max_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome<T> {
    pub box_id: usize,
    pub negative_count: usize,
    pub eigenvalues: Vec<T>,
    pub inside: bool,
}

/// `L0 + F_B − L_meas`, the matrix whose eigenvalues the test counts.
pub fn test_matrix<T: Real>(
    parts: &RegionParts<T>,
    l0: &NtdMatrix<T>,
    lmeas: &NtdMatrix<T>,
    direction: &FrechetDirection<T>,
    freq: &FrequencyConfig<T>,
) -> Result<Matrix<T>> {
    l0.check_compatible(lmeas)?;
    if parts.shear.rows() != l0.dim() {
        return Err(Error::Dimension(format!(
            "pairings over {} loads, NtD matrices of size {}",
            parts.shear.rows(),
            l0.dim()
        )));
    }
    let f = parts.combine(direction, freq.omega_sq());
    l0.entries.add(&f)?.sub(&lmeas.entries)
}

/// Single-box test on an element-aligned box.
pub fn monotonicity_test<T: Real>(
    box_id: usize,
    grid: &TestInclusionGrid<T>,
    mesh: &Mesh<T>,
    l0: &NtdMatrix<T>,
    lmeas: &NtdMatrix<T>,
    pairings: &ElementPairings<T>,
    params: &TestParameters<T>,
    freq: &FrequencyConfig<T>,
) -> Result<TestOutcome<T>> {
    let b = grid
        .boxes
        .get(box_id)
        .ok_or_else(|| Error::Dimension(format!("box {box_id} outside grid of {}", grid.len())))?;
    let mask = aligned_box_mask(mesh, b)?;
    let parts = pairings.region_parts(mask.elements());
    let t = test_matrix(&parts, l0, lmeas, &params.direction, freq)?;
    let (count, eigenvalues) = count_negative_eigenvalues(&t, params.delta)?;
    Ok(TestOutcome {
        box_id,
        negative_count: count,
        eigenvalues,
        inside: count <= params.max_count,
    })
}

/// Lower end of the largest gap in the sorted counts; ties go to the smaller value.
pub fn select_threshold(counts: &[usize]) -> Result<usize> {
    if counts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "threshold selection needs at least 2 counts, got {}",
            counts.len()
        )));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    for w in sorted.windows(2) {
        let gap = w[1] - w[0];
        if gap > 0 && best.map_or(true, |(g, _)| gap > g) {
            best = Some((gap, w[0]));
        }
    }
    best.map(|(_, v)| v).ok_or(Error::NoGap(sorted[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `Σ_g ∫ 2(μ−μ₀)|ε(u₀)|² + (λ−λ₀)|div u₀|²`
    pub lhs: f64,
    /// `Σ_g ∫ ω²(ρ−ρ₀)|u₀|²`
    pub rhs: f64,
    pub holds: bool,
}

impl AssumptionReport {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

/// Evaluates the frequency assumption summed over the background solutions of every basis load.
pub fn check_assumption<T: Real>(
    pairings: &ElementPairings<T>,
    truth: &MaterialField<T>,
    background: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
) -> Result<AssumptionReport> {
    let diff = truth.difference(background)?;
    let support: Vec<usize> = (0..diff.len())
        .filter(|&e| {
            diff.lambda[e] != T::zero() || diff.mu[e] != T::zero() || diff.rho[e] != T::zero()
        })
        .collect();
    let stiff = pairings.weighted_matrix(
        support
            .iter()
            .map(|&e| (e, diff.lambda[e], diff.mu[e], T::zero())),
        T::zero(),
    );
    let inertia = pairings.weighted_matrix(
        support
            .iter()
            .map(|&e| (e, T::zero(), T::zero(), diff.rho[e])),
        freq.omega_sq(),
    );
    let m = stiff.rows();
    let lhs: T = (0..m).map(|i| stiff[(i, i)]).sum();
    let rhs: T = -(0..m).map(|i| inertia[(i, i)]).sum::<T>();
    Ok(AssumptionReport {
        lhs: lhs.to_f64_lossy(),
        rhs: rhs.to_f64_lossy(),
        holds: lhs > rhs,
    })
}

/// Assumption sides at one frequency, from fresh background solutions.
pub fn assumption_at<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    truth: &MaterialField<T>,
    background: &MaterialField<T>,
    basis: &LoadBasis<T>,
    freq: &FrequencyConfig<T>,
) -> Result<AssumptionReport> {
    let sol = ntd_solution(space, background, freq, basis, NtdKind::Background)?;
    let pairings = ElementPairings::new(space, &sol.solutions)?;
    check_assumption(&pairings, truth, background, freq)
}

/// One evaluated frequency of an assumption scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSample {
    pub hz: f64,
    pub report: AssumptionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionScan {
    pub samples: Vec<AssumptionSample>,
    /// Lowest scanned frequency at which the assumption fails, refined by bisection.
    pub failure_hz: Option<f64>,
    /// Frequencies skipped because the background operator is resonant there.
    pub resonant_hz: Vec<f64>,
}

/// Geometric scan `start, start·factor, …` up to `stop` (Hz) for the first frequency
/// where the assumption fails, refined by `refinements` bisection steps.
pub fn assumption_failure_frequency<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    truth: &MaterialField<T>,
    background: &MaterialField<T>,
    basis: &LoadBasis<T>,
    start: f64,
    stop: f64,
    factor: f64,
    refinements: usize,
) -> Result<AssumptionScan> {
    if !(start > 0.0) || !(stop > start) || !(factor > 1.0) {
        return Err(Error::InvalidMaterial(format!(
            "scan needs 0 < start < stop and factor > 1, got {start}, {stop}, {factor}"
        )));
    }
    let eval = |hz: f64| {
        assumption_at(
            space,
            truth,
            background,
            basis,
            &FrequencyConfig::hz(T::lit(hz)),
        )
    };
    let mut scan = AssumptionScan {
        samples: Vec::new(),
        failure_hz: None,
        resonant_hz: Vec::new(),
    };
    let mut last_ok: Option<f64> = None;
    let mut hz = start;
    while hz <= stop * (1.0 + 1e-12) {
        match eval(hz) {
            Ok(report) => {
                scan.samples.push(AssumptionSample { hz, report });
                if !report.holds {
                    let mut hi = hz;
                    if let Some(mut lo) = last_ok {
                        for _ in 0..refinements {
                            let mid = (lo * hi).sqrt();
                            match eval(mid) {
                                Ok(r) if r.holds => lo = mid,
                                Ok(_) => hi = mid,
                                Err(Error::Resonance { .. }) => break,
                                Err(e) => return Err(e),
                            }
                        }
                    }
                    scan.failure_hz = Some(hi);
                    return Ok(scan);
                }
                last_ok = Some(hz);
            }
            Err(Error::Resonance { .. }) => scan.resonant_hz.push(hz),
            Err(e) => return Err(e),
        }
        hz *= factor;
    }
    Ok(scan)
}

/// How the count threshold of [`reconstruct`] is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Threshold {
    /// Accept iff the count is strictly below this value.
    Strict(usize),
    /// Per direction, one above the lower end of the largest count gap.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSettings<T> {
    /// Sweep of test directions; a box is accepted if any member accepts it.
    pub directions: Vec<FrechetDirection<T>>,
    pub delta: T,
    pub threshold: Threshold,
}

impl<T: Real> ReconstructionSettings<T> {
    pub fn new(directions: Vec<FrechetDirection<T>>, delta: T, threshold: Threshold) -> Self {
        Self {
            directions,
            delta,
            threshold,
        }
    }
}

/// Count of one sweep member on one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCount<T> {
    pub direction: usize,
    pub negative_count: usize,
    pub eigenvalues: Vec<T>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxOutcome<T> {
    pub box_id: usize,
    pub sweep: Vec<SweepCount<T>>,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult<T> {
    pub outcomes: Vec<BoxOutcome<T>>,
    pub accepted: Vec<usize>,
    pub completed_mask: RegionMask,
    /// Strict threshold used per sweep member; `None` when auto mode found no gap.
    pub thresholds: Vec<Option<usize>>,
    pub settings: ReconstructionSettings<T>,
    pub omega: T,
    /// Measured and background data coincide, so every count is trivially zero.
    pub null_data: bool,
}

/// Tests every grid box for every sweep member and completes the union of accepted boxes.
pub fn reconstruct<T: Real>(
    grid: &TestInclusionGrid<T>,
    mesh: &Mesh<T>,
    l0: &NtdMatrix<T>,
    lmeas: &NtdMatrix<T>,
    pairings: &ElementPairings<T>,
    settings: &ReconstructionSettings<T>,
    freq: &FrequencyConfig<T>,
) -> Result<ReconstructionResult<T>> {
    l0.check_compatible(lmeas)?;
    let null_data = l0.entries == lmeas.entries;
    let n = mesh.num_elements();
    if grid.is_empty() {
        return Ok(ReconstructionResult {
            outcomes: Vec::new(),
            accepted: Vec::new(),
            completed_mask: RegionMask::empty(n),
            thresholds: vec![None; settings.directions.len()],
            settings: settings.clone(),
            omega: freq.omega,
            null_data,
        });
    }
    let masks: Vec<RegionMask> = grid
        .boxes
        .iter()
        .map(|b| aligned_box_mask(mesh, b))
        .collect::<Result<_>>()?;
    if settings.delta < T::zero() || !settings.delta.is_finite() {
        return Err(Error::InvalidMatrix(format!(
            "noise level {} must be non-negative",
            settings.delta
        )));
    }
    // counts[box][direction]
    let counts: Vec<Vec<(usize, Vec<T>)>> = masks
        .par_iter()
        .map(|mask| {
            let parts = pairings.region_parts(mask.elements());
            settings
                .directions
                .iter()
                .map(|dir| {
                    let t = test_matrix(&parts, l0, lmeas, dir, freq)?;
                    count_negative_eigenvalues(&t, settings.delta)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let thresholds: Vec<Option<usize>> = (0..settings.directions.len())
        .map(|d| match settings.threshold {
            Threshold::Strict(m) => Some(m),
            Threshold::Auto => {
                let c: Vec<usize> = counts.iter().map(|row| row[d].0).collect();
                match select_threshold(&c) {
                    Ok(v) => Some(v + 1),
                    Err(Error::NoGap(_)) | Err(Error::InsufficientData(_)) => None,
                    Err(e) => unreachable!("unexpected threshold error {e}"),
                }
            }
        })
        .collect();
    if thresholds.iter().all(Option::is_none) {
        log::warn!("no sweep member produced a count gap; no box accepted");
    }
    let mut outcomes = Vec::with_capacity(grid.len());
    let mut accepted = Vec::new();
    let mut union = RegionMask::empty(n);
    for (k, row) in counts.into_iter().enumerate() {
        let sweep: Vec<SweepCount<T>> = row
            .into_iter()
            .enumerate()
            .map(|(d, (count, eigenvalues))| SweepCount {
                direction: d,
                negative_count: count,
                eigenvalues,
                accepted: thresholds[d].map_or(false, |m| count < m),
            })
            .collect();
        let inside = sweep.iter().any(|s| s.accepted);
        if inside {
            accepted.push(k);
            union = union.union(&masks[k]);
        }
        outcomes.push(BoxOutcome {
            box_id: k,
            sweep,
            inside,
        });
    }
    Ok(ReconstructionResult {
        outcomes,
        accepted,
        completed_mask: outer_support_completion(&union, mesh)?,
        thresholds,
        settings: settings.clone(),
        omega: freq.omega,
        null_data,
    })
}

/// Per-load sides of a monotonicity inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub lhs: f64,
    pub rhs: f64,
    /// Non-negative when the inequality holds.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub rows: Vec<InequalityRow>,
    pub violations: usize,
    /// Margins below `−tolerance · max(|lhs|, |rhs|)` count as violations.
    pub tolerance: f64,
}

pub const INEQUALITY_TOLERANCE: f64 = 1e-8;

fn report(rows: Vec<InequalityRow>) -> ViolationReport {
    let violations = rows
        .iter()
        .filter(|r| r.margin < -INEQUALITY_TOLERANCE * r.lhs.abs().max(r.rhs.abs()))
        .count();
    ViolationReport {
        rows,
        violations,
        tolerance: INEQUALITY_TOLERANCE,
    }
}

struct PairData<T> {
    l1: Matrix<T>,
    l2: Matrix<T>,
    p1: ElementPairings<T>,
    p2: ElementPairings<T>,
    diff: crate::fem::Coefficients<T>,
    diag_mass_diff: Vec<T>,
}

fn pair_data<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    m1: &MaterialField<T>,
    m2: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
) -> Result<PairData<T>> {
    let s1 = ntd_solution(space, m1, freq, basis, NtdKind::True)?;
    let s2 = ntd_solution(space, m2, freq, basis, NtdKind::True)?;
    let diff = m1.difference(m2)?;
    // ∫ ρ₁ |u₁ − u₂|² per load
    let diffs: Vec<_> = s1
        .solutions
        .iter()
        .zip(&s2.solutions)
        .map(|(a, b)| crate::fem::DisplacementField {
            values: a
                .values
                .iter()
                .zip(&b.values)
                .map(|(&x, &y)| x - y)
                .collect(),
        })
        .collect();
    let pd = ElementPairings::new(space, &diffs)?;
    let md = pd.weighted_matrix(
        (0..m1.len()).map(|e| (e, T::zero(), T::zero(), m1.rho[e])),
        -T::one(),
    );
    Ok(PairData {
        l1: s1.matrix.entries,
        l2: s2.matrix.entries,
        p1: ElementPairings::new(space, &s1.solutions)?,
        p2: ElementPairings::new(space, &s2.solutions)?,
        diff,
        diag_mass_diff: (0..basis.len()).map(|i| md[(i, i)]).collect(),
    })
}

fn diff_terms<T: Real>(
    p: &ElementPairings<T>,
    diff: &crate::fem::Coefficients<T>,
    omega_sq: T,
) -> Matrix<T> {
    // ∫ 2Δμ|ε|² + Δλ|div|² − ω²Δρ|u|²
    p.weighted_matrix(
        (0..diff.len()).map(|e| (e, diff.lambda[e], diff.mu[e], diff.rho[e])),
        omega_sq,
    )
}

/// Per basis load: `gᵀ(L₂ − L₁)g` against the energy bound evaluated at `u₁`.
pub fn verify_monotonicity_lower<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    m1: &MaterialField<T>,
    m2: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
) -> Result<ViolationReport> {
    let d = pair_data(space, m1, m2, freq, basis)?;
    let bound = diff_terms(&d.p1, &d.diff, freq.omega_sq());
    let rows = (0..basis.len())
        .map(|i| {
            let lhs = (d.l2[(i, i)] - d.l1[(i, i)]).to_f64_lossy();
            let rhs = bound[(i, i)].to_f64_lossy();
            InequalityRow {
                lhs,
                rhs,
                margin: lhs - rhs,
            }
        })
        .collect();
    Ok(report(rows))
}

/// Per basis load: the energy bound at `u₂` plus `ω²∫ρ₁|u₁ − u₂|²` against `gᵀ(L₂ − L₁)g`.
pub fn verify_monotonicity_upper<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    m1: &MaterialField<T>,
    m2: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
) -> Result<ViolationReport> {
    let d = pair_data(space, m1, m2, freq, basis)?;
    let bound = diff_terms(&d.p2, &d.diff, freq.omega_sq());
    let rows = (0..basis.len())
        .map(|i| {
            let lhs = (d.l2[(i, i)] - d.l1[(i, i)]).to_f64_lossy();
            let rhs = (bound[(i, i)] + freq.omega_sq() * d.diag_mass_diff[i]).to_f64_lossy();
            InequalityRow {
                lhs,
                rhs,
                margin: rhs - lhs,
            }
        })
        .collect();
    Ok(report(rows))
}
