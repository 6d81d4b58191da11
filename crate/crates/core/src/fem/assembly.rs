use std::collections::BTreeSet;
use std::sync::Arc;

use super::element::{mesh_kinematics, shape_functions, ElementKinematics, QUAD_POINTS};
use super::material::{FrequencyConfig, MaterialField};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::mesh::{facet_quadrature, FacetTag, Mesh};
use crate::scalar::{Mat3, Real, Vec3};

/// Mesh-dependent data shared by every assembly on the same mesh: element
/// kinematics, the constrained DOF set and the sparsity structure.
#[derive(Debug)]
pub struct FeSpace<T> {
    pub mesh: Mesh<T>,
    pub kinematics: Vec<ElementKinematics<T>>,
    pub constrained: Vec<bool>,
    free_dofs: Vec<usize>,
    reduced_index: Vec<Option<usize>>,
    pattern: CsrMatrix<T>,
    /// Skyline row starts of the reduced (free DOF) operator.
    profile: Vec<usize>,
}

impl<T: Real> FeSpace<T> {
    pub fn new(mesh: &Mesh<T>) -> Result<Arc<Self>> {
        let kinematics = mesh_kinematics(mesh)?;
        let constrained = mesh.dirichlet_dofs();
        let n = mesh.num_dofs();
        let mut free_dofs = Vec::new();
        let mut reduced_index = vec![None; n];
        for d in 0..n {
            if !constrained[d] {
                reduced_index[d] = Some(free_dofs.len());
                free_dofs.push(d);
            }
        }
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); mesh.num_nodes()];
        for el in &mesh.elements {
            for &a in el {
                adj[a].extend(el.iter().copied());
            }
        }
        let mut rows = Vec::with_capacity(n);
        let mut profile = vec![0; free_dofs.len()];
        for (node, nbrs) in adj.iter().enumerate() {
            let cols: Vec<usize> = nbrs
                .iter()
                .flat_map(|&b| (0..3).map(move |c| 3 * b + c))
                .collect();
            for c in 0..3 {
                let d = 3 * node + c;
                if let Some(r) = reduced_index[d] {
                    profile[r] = cols
                        .iter()
                        .filter_map(|&j| reduced_index[j])
                        .min()
                        .unwrap_or(r)
                        .min(r);
                }
                rows.push(cols.clone());
            }
        }
        Ok(Arc::new(Self {
            mesh: mesh.clone(),
            kinematics,
            constrained,
            free_dofs,
            reduced_index,
            pattern: CsrMatrix::from_pattern(rows),
            profile,
        }))
    }

    pub fn num_dofs(&self) -> usize {
        self.constrained.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn reduced_index(&self, dof: usize) -> Option<usize> {
        self.reduced_index[dof]
    }

    pub(crate) fn profile(&self) -> &[usize] {
        &self.profile
    }

    /// Element DOF vector gathered from a global vector.
    #[inline]
    pub fn gather(&self, e: usize, u: &[T]) -> [T; 24] {
        let el = &self.mesh.elements[e];
        std::array::from_fn(|k| u[3 * el[k / 3] + k % 3])
    }

    /// Consistent load vector `b_i = ∫_{Γ_N} g · φ_i dS`.
    pub fn load_vector(&self, load: &BoundaryLoad<T>) -> Result<Vec<T>> {
        load.check(&self.mesh)?;
        let mut b = vec![T::zero(); self.num_dofs()];
        for (f, facet) in self.mesh.facets.iter().enumerate() {
            let t = load.traction[f];
            if t == [T::zero(); 3] {
                continue;
            }
            let pts = facet.nodes.map(|n| self.mesh.nodes[n]);
            for q in facet_quadrature(&pts) {
                for (a, &node) in facet.nodes.iter().enumerate() {
                    let s = q.weight * q.shape[a];
                    for c in 0..3 {
                        b[3 * node + c] += s * t[c];
                    }
                }
            }
        }
        Ok(b)
    }

    /// Right-hand side of the source problem, `∫ A:∇φ − ∫ F·φ`.
    pub fn source_vector(&self, src: &SourceData<T>) -> Result<Vec<T>> {
        src.check(self.mesh.num_elements())?;
        let mut b = vec![T::zero(); self.num_dofs()];
        for (e, kin) in self.kinematics.iter().enumerate() {
            let f = src.body_force[e];
            let a = src.stress[e];
            let el = &self.mesh.elements[e];
            for q in 0..QUAD_POINTS {
                let w = kin.weight[q];
                for (loc, &node) in el.iter().enumerate() {
                    let g = &kin.grad[q][loc];
                    let n = kin.shape[q][loc];
                    for i in 0..3 {
                        let div: T = (0..3).map(|k| a[i][k] * g[k]).sum();
                        b[3 * node + i] += w * (div - f[i] * n);
                    }
                }
            }
        }
        Ok(b)
    }
}

/// Stiffness and mass operators on the full DOF set, plus the frequency.
#[derive(Debug, Clone)]
pub struct AssembledSystem<T> {
    pub space: Arc<FeSpace<T>>,
    pub stiffness: CsrMatrix<T>,
    pub mass: CsrMatrix<T>,
    pub omega: T,
}

/// Assembles on a fresh [`FeSpace`] for `mesh`.
pub fn assemble<T: Real>(
    mesh: &Mesh<T>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
) -> Result<AssembledSystem<T>> {
    assemble_on(&FeSpace::new(mesh)?, materials, freq)
}

/// Assembles `K` and `M` in fixed element order.
pub fn assemble_on<T: Real>(
    space: &Arc<FeSpace<T>>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
) -> Result<AssembledSystem<T>> {
    materials.validate(space.mesh.num_elements())?;
    let mut k = space.pattern.zeros_like();
    let mut m = space.pattern.zeros_like();
    for (e, kin) in space.kinematics.iter().enumerate() {
        let (ke, me) = kin.matrices(materials.lambda[e], materials.mu[e], materials.rho[e]);
        let el = &space.mesh.elements[e];
        for r in 0..24 {
            let i = 3 * el[r / 3] + r % 3;
            for c in 0..24 {
                let j = 3 * el[c / 3] + c % 3;
                k.add(i, j, ke[r][c]);
                if me[r][c] != T::zero() {
                    m.add(i, j, me[r][c]);
                }
            }
        }
    }
    Ok(AssembledSystem {
        space: Arc::clone(space),
        stiffness: k,
        mass: m,
        omega: freq.omega,
    })
}

impl<T: Real> AssembledSystem<T> {
    pub fn with_omega(&self, omega: T) -> Self {
        Self {
            omega,
            ..self.clone()
        }
    }

    /// `(K − ω²M) x` on the full DOF set.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let w2 = self.omega * self.omega;
        let kx = self.stiffness.matvec(x);
        let mx = self.mass.matvec(x);
        kx.iter().zip(&mx).map(|(&a, &b)| a - w2 * b).collect()
    }

    /// Dense reduced `K` and `M` on the free DOFs. Intended for small meshes.
    pub fn dense_reduced(&self) -> (Matrix<T>, Matrix<T>) {
        let free = self.space.free_dofs();
        let n = free.len();
        let mut k = Matrix::zeros(n, n);
        let mut m = Matrix::zeros(n, n);
        for (r, &i) in free.iter().enumerate() {
            for (j, v) in self.stiffness.row(i) {
                if let Some(c) = self.space.reduced_index(j) {
                    k[(r, c)] = v;
                }
            }
            for (j, v) in self.mass.row(i) {
                if let Some(c) = self.space.reduced_index(j) {
                    m[(r, c)] = v;
                }
            }
        }
        (k, m)
    }
}

/// Piecewise constant traction per boundary facet; zero off the Neumann part.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoad<T> {
    pub traction: Vec<Vec3<T>>,
}

impl<T: Real> BoundaryLoad<T> {
    pub fn zeros(mesh: &Mesh<T>) -> Self {
        Self {
            traction: vec![[T::zero(); 3]; mesh.facets.len()],
        }
    }

    pub fn new(mesh: &Mesh<T>, traction: Vec<Vec3<T>>) -> Result<Self> {
        let load = Self { traction };
        load.check(mesh)?;
        Ok(load)
    }

    /// Constant traction on every facet of one Neumann patch.
    pub fn on_patch(mesh: &Mesh<T>, patch: usize, traction: Vec3<T>) -> Self {
        let mut load = Self::zeros(mesh);
        for (f, facet) in mesh.facets.iter().enumerate() {
            if facet.tag == FacetTag::Neumann(patch) {
                load.traction[f] = traction;
            }
        }
        load
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            traction: self.traction.iter().map(|t| t.map(|v| v * s)).collect(),
        }
    }

    pub fn check(&self, mesh: &Mesh<T>) -> Result<()> {
        if self.traction.len() != mesh.facets.len() {
            return Err(Error::Dimension(format!(
                "{} facet tractions for {} boundary facets",
                self.traction.len(),
                mesh.facets.len()
            )));
        }
        for (f, facet) in mesh.facets.iter().enumerate() {
            let t = self.traction[f];
            if !matches!(facet.tag, FacetTag::Neumann(_)) && t != [T::zero(); 3] {
                return Err(Error::Dimension(format!(
                    "non-zero traction on non-Neumann facet {f}"
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!(
                    "non-finite traction on facet {f}"
                )));
            }
        }
        Ok(())
    }

    /// `∫_{Γ_N} g · h dS`.
    pub fn inner(&self, other: &Self, mesh: &Mesh<T>) -> T {
        mesh.facets
            .iter()
            .enumerate()
            .map(|(f, facet)| {
                let (a, b) = (self.traction[f], other.traction[f]);
                facet.area * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            })
            .sum()
    }
}

/// Nodal displacement vector, three components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    pub values: Vec<T>,
}

impl<T: Real> DisplacementField<T> {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            values: vec![T::zero(); 3 * nodes],
        }
    }

    pub fn from_fn(mesh: &Mesh<T>, f: impl Fn(&Vec3<T>) -> Vec3<T>) -> Self {
        Self {
            values: mesh.nodes.iter().flat_map(|p| f(p)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len() / 3
    }

    pub fn node(&self, i: usize) -> Vec3<T> {
        [
            self.values[3 * i],
            self.values[3 * i + 1],
            self.values[3 * i + 2],
        ]
    }

    /// Trilinear interpolation at an arbitrary point of the plate.
    pub fn sample(&self, mesh: &Mesh<T>, p: &Vec3<T>) -> Option<Vec3<T>> {
        let (e, xi) = mesh.locate(p)?;
        let (n, _) = shape_functions(&xi);
        let mut u = [T::zero(); 3];
        for (a, &node) in mesh.elements[e].iter().enumerate() {
            let v = self.node(node);
            for c in 0..3 {
                u[c] += n[a] * v[c];
            }
        }
        Some(u)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }
}

/// Volume sources of the source problem, constant per element.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceData<T> {
    /// N/m³
    pub body_force: Vec<Vec3<T>>,
    /// Pa
    pub stress: Vec<Mat3<T>>,
}

impl<T: Real> SourceData<T> {
    pub fn zeros(elements: usize) -> Self {
        Self {
            body_force: vec![[T::zero(); 3]; elements],
            stress: vec![[[T::zero(); 3]; 3]; elements],
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            body_force: self.body_force.iter().map(|f| f.map(|v| v * s)).collect(),
            stress: self
                .stress
                .iter()
                .map(|a| a.map(|r| r.map(|v| v * s)))
                .collect(),
        }
    }

    fn check(&self, elements: usize) -> Result<()> {
        if self.body_force.len() != elements || self.stress.len() != elements {
            return Err(Error::Dimension(format!(
                "source data does not match {elements} elements"
            )));
        }
        let finite = self.body_force.iter().flatten().all(|v| v.is_finite())
            && self
                .stress
                .iter()
                .flatten()
                .flatten()
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Dimension("non-finite source data".into()));
        }
        Ok(())
    }
}
