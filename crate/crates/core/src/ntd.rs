//! Discrete Neumann-to-Dirichlet matrices over a boundary-load basis and the
//! matching Fréchet-derivative matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Document;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_on, BoundaryLoad, Coefficients, DisplacementField, FeSpace, ForwardSolver,
    FrequencyConfig, MaterialField, QUAD_POINTS,
};
use crate::linalg::{dot, spectral_norm_symmetric, Matrix};
use crate::mesh::{aligned_box_mask, AxisBox, FacetTag, Mesh, RegionMask};
use crate::scalar::{Real, Vec3};

/// How the Neumann facets are grouped into basis loads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Contiguous groups per Neumann patch, split along the patch's longest axis.
    pub groups_per_patch: usize,
    /// Scale the traction so each load carries a unit resultant force instead of unit traction.
    pub unit_force: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            groups_per_patch: 1,
            unit_force: false,
        }
    }
}

/// Ordered, linearly independent boundary loads.
#[derive(Debug, Clone)]
pub struct LoadBasis<T> {
    pub loads: Vec<BoundaryLoad<T>>,
    /// `<patch>.<group>.<axis>` per load.
    pub labels: Vec<String>,
    /// Facet indices of each group, with the owning patch.
    pub groups: Vec<(usize, Vec<usize>)>,
    pub spec: BasisSpec,
}

impl<T> LoadBasis<T> {
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }
}

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn build_load_basis<T: Real>(mesh: &Mesh<T>, spec: BasisSpec) -> Result<LoadBasis<T>> {
    let patches = mesh.neumann_patch_count();
    if patches == 0 {
        return Err(Error::EmptyPatch("<neumann boundary>".into()));
    }
    let per = spec.groups_per_patch.max(1);
    let mut groups = Vec::new();
    for p in 0..patches {
        let mut facets: Vec<usize> = mesh
            .facets_with_tag(FacetTag::Neumann(p))
            .map(|(i, _)| i)
            .collect();
        if facets.is_empty() {
            continue;
        }
        let axis = longest_axis(mesh, &facets);
        facets.sort_by(|&a, &b| {
            mesh.facets[a].centroid[axis]
                .partial_cmp(&mesh.facets[b].centroid[axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let k = per.min(facets.len());
        for g in 0..k {
            let lo = g * facets.len() / k;
            let hi = (g + 1) * facets.len() / k;
            groups.push((p, facets[lo..hi].to_vec()));
        }
    }
    let mut loads = Vec::new();
    let mut labels = Vec::new();
    let mut kept: Vec<BoundaryLoad<T>> = Vec::new();
    for (gi, (p, facets)) in groups.iter().enumerate() {
        let area: T = facets.iter().map(|&f| mesh.facets[f].area).sum();
        for (c, axis) in AXES.iter().enumerate() {
            let mut load = BoundaryLoad::zeros(mesh);
            let mag = if spec.unit_force && area > T::zero() {
                T::one() / area
            } else {
                T::one()
            };
            for &f in facets {
                load.traction[f][c] = mag;
            }
            if is_independent(&load, &kept, mesh) {
                kept.push(load.clone());
                loads.push(load);
                labels.push(format!("{p}.{}.{axis}", gi));
            }
        }
    }
    if loads.is_empty() {
        return Err(Error::EmptyPatch("<neumann boundary>".into()));
    }
    Ok(LoadBasis {
        loads,
        labels,
        groups,
        spec,
    })
}

fn longest_axis<T: Real>(mesh: &Mesh<T>, facets: &[usize]) -> usize {
    let mut lo = [T::infinity(); 3];
    let mut hi = [T::neg_infinity(); 3];
    for &f in facets {
        for n in mesh.facets[f].nodes {
            for a in 0..3 {
                lo[a] = lo[a].min(mesh.nodes[n][a]);
                hi[a] = hi[a].max(mesh.nodes[n][a]);
            }
        }
    }
    (0..3).fold(0, |best, a| {
        if hi[a] - lo[a] > hi[best] - lo[best] {
            a
        } else {
            best
        }
    })
}

/// Gram–Schmidt residual test in the boundary `L²` inner product.
fn is_independent<T: Real>(
    load: &BoundaryLoad<T>,
    kept: &[BoundaryLoad<T>],
    mesh: &Mesh<T>,
) -> bool {
    let norm = load.inner(load, mesh);
    if !(norm > T::zero()) {
        return false;
    }
    let n = kept.len();
    if n == 0 {
        return true;
    }
    let g = Matrix::from_fn(n, n, |i, j| kept[i].inner(&kept[j], mesh));
    let rhs: Vec<T> = kept.iter().map(|k| k.inner(load, mesh)).collect();
    let Ok(eig) = crate::linalg::symmetric_eigen(&g) else {
        return false;
    };
    // ‖P g‖² = rhsᵀ G⁻¹ rhs
    let mut proj = T::zero();
    for k in 0..n {
        let lam = eig.values[k];
        if lam > T::zero() {
            let c: T = (0..n).map(|i| eig.vectors[(i, k)] * rhs[i]).sum();
            proj += c * c / lam;
        }
    }
    norm - proj > T::lit(1e-10) * norm
}

/// Gram matrix `∫_{Γ_N} g_i · g_j dS` of a basis.
pub fn gram_matrix<T: Real>(basis: &LoadBasis<T>, mesh: &Mesh<T>) -> Matrix<T> {
    let m = basis.len();
    Matrix::from_fn(m, m, |i, j| basis.loads[i].inner(&basis.loads[j], mesh))
}

/// Which operator an NtD matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtdKind {
    Background,
    True,
    Measured,
}

impl NtdKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NtdKind::Background => "background",
            NtdKind::True => "true",
            NtdKind::Measured => "measured",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "background" => Some(NtdKind::Background),
            "true" => Some(NtdKind::True),
            "measured" => Some(NtdKind::Measured),
            _ => None,
        }
    }
}

/// Symmetric matrix of boundary pairings `∫ g_i · u_j dS`.
#[derive(Debug, Clone, PartialEq)]
pub struct NtdMatrix<T> {
    pub entries: Matrix<T>,
    /// rad/s
    pub omega: T,
    pub kind: NtdKind,
}

impl<T: Real> NtdMatrix<T> {
    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "NtD matrices of size {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let scale = self.omega.abs().max(other.omega.abs()).max(T::one());
        if (self.omega - other.omega).abs() > T::lit(1e-9) * scale {
            return Err(Error::Dimension(format!(
                "NtD matrices at different frequencies {} and {}",
                self.omega, other.omega
            )));
        }
        Ok(())
    }

    pub fn spectral_norm(&self) -> Result<T> {
        spectral_norm_symmetric(&self.entries)
    }

    /// Text form `elastoscan-ntd v1`, row-major with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut doc = Document::new("ntd", 1);
        doc.push(None, "omega", format!("{:e}", self.omega.to_f64_lossy()));
        doc.push(None, "kind", self.kind.as_str());
        doc.push(None, "size", self.dim().to_string());
        for i in 0..self.dim() {
            let row: Vec<String> = self
                .entries
                .row(i)
                .iter()
                .map(|v| format!("{:e}", v.to_f64_lossy()))
                .collect();
            doc.push(Some("row"), &i.to_string(), row.join(" "));
        }
        doc.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        doc.expect_kind("ntd", 1)?;
        doc.check_known(&["omega", "kind", "size"], &["row"])?;
        let omega = T::lit(doc.scalar::<f64>("omega")?);
        let kind_entry = doc.require("kind")?;
        let kind = NtdKind::parse(&kind_entry.value).ok_or_else(|| Error::Parse {
            line: kind_entry.line,
            message: format!("unknown NtD kind `{}`", kind_entry.value),
        })?;
        let m: usize = doc.scalar("size")?;
        let mut data = vec![T::zero(); m * m];
        let mut seen = vec![false; m];
        for e in doc.section("row") {
            let i: usize = e.key.parse().map_err(|_| Error::Parse {
                line: e.line,
                message: format!("row index `{}`", e.key),
            })?;
            if i >= m || seen[i] {
                return Err(Error::Parse {
                    line: e.line,
                    message: format!("row {i} out of range or repeated"),
                });
            }
            seen[i] = true;
            let vals: Vec<f64> = e.parse_fixed(m)?;
            for (j, v) in vals.into_iter().enumerate() {
                data[i * m + j] = T::lit(v);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!("NtD file misses row {i}")));
        }
        Ok(Self {
            entries: Matrix::from_row_major(m, m, data)?,
            omega,
            kind,
        })
    }
}

/// NtD matrix together with the displacement fields it was computed from.
#[derive(Debug, Clone)]
pub struct NtdSolution<T> {
    pub matrix: NtdMatrix<T>,
    pub solutions: Vec<DisplacementField<T>>,
    /// Relative symmetry defect before averaging.
    pub symmetry_defect: T,
    /// `max |L_ij − energy_form(u_i, u_j)| / ‖L‖`.
    pub energy_defect: T,
}

const ENERGY_TOLERANCE: f64 = 1e-8;

/// Solves every basis load against one factorization and forms the pairing matrix.
pub fn ntd_solution<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
    kind: NtdKind,
) -> Result<NtdSolution<T>> {
    let system = assemble_on(space, materials, freq)?;
    let solver = ForwardSolver::new(&system)?;
    let rhs: Vec<Vec<T>> = basis
        .loads
        .iter()
        .map(|g| space.load_vector(g))
        .collect::<Result<_>>()?;
    let solutions: Vec<DisplacementField<T>> = rhs
        .par_iter()
        .map(|b| solver.solve_rhs(b))
        .collect::<Result<_>>()?;
    let m = basis.len();
    let raw = Matrix::from_fn(m, m, |i, j| dot(&rhs[i], &solutions[j].values));
    let symmetry_defect = raw.symmetry_defect();
    let pairings = ElementPairings::new(space, &solutions)?;
    let energy = pairings.weighted_matrix(
        (0..space.mesh.num_elements())
            .map(|e| (e, materials.lambda[e], materials.mu[e], materials.rho[e])),
        freq.omega_sq(),
    );
    let scale = raw.max_abs();
    let energy_defect = if scale > T::zero() {
        raw.sub(&energy)?.max_abs() / scale
    } else {
        T::zero()
    };
    if energy_defect > T::lit(ENERGY_TOLERANCE) {
        log::warn!(
            "boundary pairing and energy form differ by {:e} (relative)",
            energy_defect.to_f64_lossy()
        );
    }
    Ok(NtdSolution {
        matrix: NtdMatrix {
            entries: raw.symmetrized(),
            omega: freq.omega,
            kind,
        },
        solutions,
        symmetry_defect,
        energy_defect,
    })
}

/// NtD matrix only.
pub fn ntd_matrix<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
) -> Result<NtdMatrix<T>> {
    Ok(ntd_solution(space, materials, freq, basis, NtdKind::True)?.matrix)
}

/// Strain (Voigt order xx, yy, zz, xy, yz, xz), divergence and value at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct QuadSample<T> {
    strain: [T; 6],
    div: T,
    value: Vec3<T>,
}

/// Quadrature samples of a set of displacement fields, for fast region pairings.
#[derive(Debug, Clone)]
pub struct ElementPairings<T> {
    /// `samples[e][q][i]` for field `i`.
    samples: Vec<[Vec<QuadSample<T>>; QUAD_POINTS]>,
    weights: Vec<[T; QUAD_POINTS]>,
    fields: usize,
}

impl<T: Real> ElementPairings<T> {
    pub fn new(space: &FeSpace<T>, fields: &[DisplacementField<T>]) -> Result<Self> {
        let n = space.num_dofs();
        if fields.iter().any(|u| u.values.len() != n) {
            return Err(Error::Dimension(
                "displacement fields do not match the mesh".into(),
            ));
        }
        let samples = (0..space.mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let kin = &space.kinematics[e];
                let ue: Vec<[T; 24]> = fields.iter().map(|u| space.gather(e, &u.values)).collect();
                std::array::from_fn(|q| {
                    ue.iter()
                        .map(|u| {
                            let g = kin.gradient(q, u);
                            let half = T::half();
                            QuadSample {
                                strain: [
                                    g[0][0],
                                    g[1][1],
                                    g[2][2],
                                    half * (g[0][1] + g[1][0]),
                                    half * (g[1][2] + g[2][1]),
                                    half * (g[0][2] + g[2][0]),
                                ],
                                div: g[0][0] + g[1][1] + g[2][2],
                                value: kin.value(q, u),
                            }
                        })
                        .collect()
                })
            })
            .collect();
        Ok(Self {
            samples,
            weights: space.kinematics.iter().map(|k| k.weight).collect(),
            fields: fields.len(),
        })
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    /// The three region integrals `∫ 2ε:ε`, `∫ div div`, `∫ u·u` over `elements`.
    pub fn region_parts(&self, elements: impl IntoIterator<Item = usize>) -> RegionParts<T> {
        let m = self.fields;
        let mut shear = Matrix::zeros(m, m);
        let mut dil = Matrix::zeros(m, m);
        let mut mass = Matrix::zeros(m, m);
        let two = T::two();
        for e in elements {
            for q in 0..QUAD_POINTS {
                let w = self.weights[e][q];
                let s = &self.samples[e][q];
                for i in 0..m {
                    for j in i..m {
                        let (a, b) = (&s[i], &s[j]);
                        let normal = a.strain[0] * b.strain[0]
                            + a.strain[1] * b.strain[1]
                            + a.strain[2] * b.strain[2];
                        let offd = a.strain[3] * b.strain[3]
                            + a.strain[4] * b.strain[4]
                            + a.strain[5] * b.strain[5];
                        let sv = w * two * (normal + two * offd);
                        let dv = w * a.div * b.div;
                        let mv = w
                            * (a.value[0] * b.value[0]
                                + a.value[1] * b.value[1]
                                + a.value[2] * b.value[2]);
                        shear[(i, j)] += sv;
                        dil[(i, j)] += dv;
                        mass[(i, j)] += mv;
                    }
                }
            }
        }
        for mat in [&mut shear, &mut dil, &mut mass] {
            for i in 0..m {
                for j in 0..i {
                    mat[(i, j)] = mat[(j, i)];
                }
            }
        }
        RegionParts { shear, dil, mass }
    }

    /// `Σ_e ∫ 2μ_e ε_i:ε_j + λ_e div_i div_j − ω² ρ_e u_i·u_j` for `(e, λ_e, μ_e, ρ_e)`.
    pub fn weighted_matrix(
        &self,
        coeffs: impl IntoIterator<Item = (usize, T, T, T)>,
        omega_sq: T,
    ) -> Matrix<T> {
        let m = self.fields;
        let mut out = Matrix::zeros(m, m);
        for (e, l, mu, rho) in coeffs {
            let p = self.region_parts(std::iter::once(e));
            out.add_scaled_assign(mu, &p.shear);
            out.add_scaled_assign(l, &p.dil);
            out.add_scaled_assign(-omega_sq * rho, &p.mass);
        }
        out
    }
}

/// Unit-coefficient pairings of a region: shear `∫2ε:ε`, dilatation `∫div div`, mass `∫u·u`.
#[derive(Debug, Clone)]
pub struct RegionParts<T> {
    pub shear: Matrix<T>,
    pub dil: Matrix<T>,
    pub mass: Matrix<T>,
}

/// Scalings of a test-region perturbation `(α_λ, α_μ, α_ρ)` and the sign applied to the density term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetDirection<T> {
    pub alpha_lambda: T,
    pub alpha_mu: T,
    pub alpha_rho: T,
    pub rho_sign: T,
}

impl<T: Real> RegionParts<T> {
    /// `−(α_μ S + α_λ D − ω² s α_ρ M)`.
    pub fn combine(&self, dir: &FrechetDirection<T>, omega_sq: T) -> Matrix<T> {
        let m = self.shear.rows();
        let mut out = Matrix::zeros(m, m);
        out.add_scaled_assign(-dir.alpha_mu, &self.shear);
        out.add_scaled_assign(-dir.alpha_lambda, &self.dil);
        out.add_scaled_assign(omega_sq * dir.rho_sign * dir.alpha_rho, &self.mass);
        out
    }
}

/// Element-aligned support of a Fréchet perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum Region<T> {
    Mask(RegionMask),
    Box(AxisBox<T>),
}

impl<T: Real> Region<T> {
    pub fn to_mask(&self, mesh: &Mesh<T>) -> Result<RegionMask> {
        match self {
            Region::Mask(m) => {
                m.check_len(mesh.num_elements())?;
                Ok(m.clone())
            }
            Region::Box(b) => aligned_box_mask(mesh, b),
        }
    }
}

/// Fréchet derivative of the NtD matrix at the background in a region direction.
#[derive(Debug, Clone)]
pub struct FrechetOperator<T> {
    pub entries: Matrix<T>,
    pub region: RegionMask,
    pub direction: FrechetDirection<T>,
}

/// `F_ij = −∫_B 2α_μ ε_i:ε_j + α_λ div_i div_j − ω² (s α_ρ) u_i·u_j` from background solutions.
pub fn frechet_matrix<T: Real>(
    pairings: &ElementPairings<T>,
    mesh: &Mesh<T>,
    region: &Region<T>,
    direction: FrechetDirection<T>,
    freq: &FrequencyConfig<T>,
) -> Result<FrechetOperator<T>> {
    for a in [
        direction.alpha_lambda,
        direction.alpha_mu,
        direction.alpha_rho,
    ] {
        if a < T::zero() || !a.is_finite() {
            return Err(Error::InvalidMaterial(format!(
                "alpha components must be non-negative, got {a}"
            )));
        }
    }
    let mask = region.to_mask(mesh)?;
    let parts = pairings.region_parts(mask.elements());
    Ok(FrechetOperator {
        entries: parts.combine(&direction, freq.omega_sq()),
        region: mask,
        direction,
    })
}

/// `Λ'[h]` for an arbitrary element-wise direction `h`.
pub fn frechet_general<T: Real>(
    pairings: &ElementPairings<T>,
    h: &Coefficients<T>,
    freq: &FrequencyConfig<T>,
) -> Matrix<T> {
    pairings
        .weighted_matrix(
            (0..h.len())
                .filter(|&e| {
                    h.lambda[e] != T::zero() || h.mu[e] != T::zero() || h.rho[e] != T::zero()
                })
                .map(|e| (e, h.lambda[e], h.mu[e], h.rho[e])),
            freq.omega_sq(),
        )
        .scale(-T::one())
}

/// One row of a finite-difference check of the Fréchet derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub t: f64,
    pub remainder: f64,
}

/// `‖Λ(p + t h) − Λ(p) − t Λ'(p)[h]‖₂` for each `t`.
pub fn frechet_convergence_report<T: Real>(
    space: &std::sync::Arc<FeSpace<T>>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
    basis: &LoadBasis<T>,
    h: &Coefficients<T>,
    t_values: &[T],
) -> Result<Vec<RemainderRow>> {
    if t_values.iter().any(|&t| !(t > T::zero())) || t_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidMaterial(
            "t values must be positive and decreasing".into(),
        ));
    }
    let base = ntd_solution(space, materials, freq, basis, NtdKind::Background)?;
    let pairings = ElementPairings::new(space, &base.solutions)?;
    let derivative = frechet_general(&pairings, h, freq);
    t_values
        .iter()
        .map(|&t| {
            let perturbed = h.perturb(materials, t)?;
            let lt = ntd_solution(space, &perturbed, freq, basis, NtdKind::True)?;
            let mut r = lt.matrix.entries.sub(&base.matrix.entries)?;
            r.add_scaled_assign(-t, &derivative);
            Ok(RemainderRow {
                t: t.to_f64_lossy(),
                remainder: spectral_norm_symmetric(&r)?.to_f64_lossy(),
            })
        })
        .collect()
}

/// Least-squares slope of `log(remainder)` against `log(t)`.
pub fn loglog_slope(rows: &[RemainderRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0.0 && r.remainder > 0.0)
        .map(|r| (r.t.ln(), r.remainder.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
