use super::assembly::{AssembledSystem, BoundaryLoad, DisplacementField, FeSpace, SourceData};
use super::element::{symmetric_part, QUAD_POINTS};
use super::material::{Coefficients, FrequencyConfig, MaterialField};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, LdlFactor, SkylineMatrix};
use crate::scalar::{Mat3, Real};

/// Condition estimates above this are treated as resonance.
pub const RESONANCE_CONDITION: f64 = 1e12;

const INVERSE_ITERATIONS: usize = 4;
const REFINEMENT_STEPS: usize = 3;

/// `LDLᵀ` factorization of `K − ω²M` restricted to the free DOFs.
pub struct ForwardSolver<'a, T> {
    system: &'a AssembledSystem<T>,
    factor: LdlFactor<T>,
    condition: T,
}

impl<'a, T: Real> ForwardSolver<'a, T> {
    pub fn new(system: &'a AssembledSystem<T>) -> Result<Self> {
        let space = &system.space;
        let w2 = system.omega * system.omega;
        let mut sky = SkylineMatrix::with_profile(space.profile().to_vec());
        let mut row_norm = T::zero();
        for (r, &i) in space.free_dofs().iter().enumerate() {
            let mut sum = T::zero();
            for ((j, k), (_, m)) in system.stiffness.row(i).zip(system.mass.row(i)) {
                if let Some(c) = space.reduced_index(j) {
                    let v = k - w2 * m;
                    sum += v.abs();
                    if c <= r {
                        sky.add_lower(r, c, v);
                    }
                }
            }
            row_norm = row_norm.max(sum);
        }
        let resonance = |condition: T| Error::Resonance {
            omega: system.omega.to_f64_lossy(),
            condition: condition.to_f64_lossy(),
        };
        let factor = sky.factor().map_err(|_| resonance(T::infinity()))?;
        if factor.pivots().iter().any(|&d| d == T::zero()) {
            return Err(resonance(T::infinity()));
        }
        let n = factor.pivots().len();
        // inverse iteration from a fixed start vector estimates ‖A⁻¹‖₂
        let mut x: Vec<T> = (0..n)
            .map(|i| T::one() + T::lit(((i * 7919) % 101) as f64 / 101.0))
            .collect();
        let mut inv_norm = T::zero();
        for _ in 0..INVERSE_ITERATIONS {
            let nx = norm2(&x);
            if nx == T::zero() {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            x = factor.solve(&x);
            let grow = norm2(&x);
            if !grow.is_finite() {
                return Err(resonance(T::infinity()));
            }
            inv_norm = inv_norm.max(grow);
        }
        let condition = row_norm * inv_norm;
        let limit = T::lit(RESONANCE_CONDITION).min(T::lit(0.01) / T::epsilon());
        log::debug!(
            "factored {} free dofs at omega {}: condition ~ {:e}, {} negative pivots",
            n,
            system.omega,
            condition.to_f64_lossy(),
            factor.negative_pivots()
        );
        if !(condition < limit) {
            return Err(resonance(condition));
        }
        Ok(Self {
            system,
            factor,
            condition,
        })
    }

    pub fn system(&self) -> &AssembledSystem<T> {
        self.system
    }

    /// Estimate of the 2-norm condition number of the reduced operator.
    pub fn condition(&self) -> T {
        self.condition
    }

    /// Number of generalized eigenvalues of `(K, M)` below `ω²` on the free DOFs.
    pub fn resonances_below(&self) -> usize {
        self.factor.negative_pivots()
    }

    /// Solves `(K − ω²M) u = b` for a full-length right-hand side; constrained
    /// entries of `b` are ignored and those of `u` are zero.
    pub fn solve_rhs(&self, b: &[T]) -> Result<DisplacementField<T>> {
        let space = &self.system.space;
        if b.len() != space.num_dofs() {
            return Err(Error::Dimension(format!(
                "rhs has {} entries, expected {}",
                b.len(),
                space.num_dofs()
            )));
        }
        let free = space.free_dofs();
        let br: Vec<T> = free.iter().map(|&d| b[d]).collect();
        let bnorm = norm2(&br);
        let mut u = vec![T::zero(); b.len()];
        if bnorm == T::zero() {
            return Ok(DisplacementField { values: u });
        }
        let mut xr = self.factor.solve(&br);
        let mut rel = T::infinity();
        for step in 0..=REFINEMENT_STEPS {
            for (k, &d) in free.iter().enumerate() {
                u[d] = xr[k];
            }
            let ax = self.system.apply(&u);
            let r: Vec<T> = free.iter().zip(&br).map(|(&d, &bv)| bv - ax[d]).collect();
            rel = norm2(&r) / bnorm;
            if rel <= T::epsilon() * T::lit(16.0) || step == REFINEMENT_STEPS {
                break;
            }
            let dx = self.factor.solve(&r);
            xr.iter_mut().zip(&dx).for_each(|(x, d)| *x += *d);
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(1e3));
        if rel > tol {
            log::warn!(
                "relative residual {:e} above {:e} at omega {}",
                rel.to_f64_lossy(),
                tol.to_f64_lossy(),
                self.system.omega
            );
        }
        Ok(DisplacementField { values: u })
    }

    pub fn solve(&self, load: &BoundaryLoad<T>) -> Result<DisplacementField<T>> {
        self.solve_rhs(&self.system.space.load_vector(load)?)
    }
}

/// Factors and solves the forward problem for one traction load.
pub fn solve_forward<T: Real>(
    system: &AssembledSystem<T>,
    load: &BoundaryLoad<T>,
) -> Result<DisplacementField<T>> {
    ForwardSolver::new(system)?.solve(load)
}

/// Weak solution of the source problem with volume force `F` and stress source `A`;
/// the Neumann datum `Aν` enters through the weak form.
pub fn solve_source<T: Real>(
    system: &AssembledSystem<T>,
    src: &SourceData<T>,
) -> Result<DisplacementField<T>> {
    ForwardSolver::new(system)?.solve_rhs(&system.space.source_vector(src)?)
}

/// Symmetric strain and divergence at the eight quadrature points of element `e`.
pub fn element_strain_div<T: Real>(
    space: &FeSpace<T>,
    u: &DisplacementField<T>,
    e: usize,
) -> ([Mat3<T>; QUAD_POINTS], [T; QUAD_POINTS]) {
    let ue = space.gather(e, &u.values);
    let kin = &space.kinematics[e];
    let mut strain = [[[T::zero(); 3]; 3]; QUAD_POINTS];
    let mut div = [T::zero(); QUAD_POINTS];
    for q in 0..QUAD_POINTS {
        let g = kin.gradient(q, &ue);
        strain[q] = symmetric_part(&g);
        div[q] = g[0][0] + g[1][1] + g[2][2];
    }
    (strain, div)
}

/// `∫ 2c_μ ε(u):ε(v) + c_λ div u div v − ω² c_ρ u·v` over the elements where
/// any coefficient is non-zero.
pub fn weighted_energy<T: Real>(
    space: &FeSpace<T>,
    u: &DisplacementField<T>,
    v: &DisplacementField<T>,
    coeffs: &Coefficients<T>,
    omega_sq: T,
) -> Result<T> {
    let n = space.num_dofs();
    if u.values.len() != n || v.values.len() != n {
        return Err(Error::Dimension(
            "displacement fields do not match the mesh".into(),
        ));
    }
    if coeffs.len() != space.mesh.num_elements() {
        return Err(Error::Dimension(
            "coefficients do not match the mesh".into(),
        ));
    }
    let mut total = T::zero();
    for (e, kin) in space.kinematics.iter().enumerate() {
        let (cl, cm, cr) = (coeffs.lambda[e], coeffs.mu[e], coeffs.rho[e]);
        if cl == T::zero() && cm == T::zero() && cr == T::zero() {
            continue;
        }
        let ue = space.gather(e, &u.values);
        let ve = space.gather(e, &v.values);
        for q in 0..QUAD_POINTS {
            let gu = kin.gradient(q, &ue);
            let gv = kin.gradient(q, &ve);
            let (su, sv) = (symmetric_part(&gu), symmetric_part(&gv));
            let eps: T = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| su[i][j] * sv[i][j])
                .sum();
            let du = gu[0][0] + gu[1][1] + gu[2][2];
            let dv = gv[0][0] + gv[1][1] + gv[2][2];
            let (xu, xv) = (kin.value(q, &ue), kin.value(q, &ve));
            let mass = xu[0] * xv[0] + xu[1] * xv[1] + xu[2] * xv[2];
            total += kin.weight[q] * (T::two() * cm * eps + cl * du * dv - omega_sq * cr * mass);
        }
    }
    Ok(total)
}

/// `∫ 2μ ε(u):ε(v) + λ div u div v − ω²ρ u·v`, equal to `vᵀ(K − ω²M)u`.
pub fn energy_form<T: Real>(
    space: &FeSpace<T>,
    u: &DisplacementField<T>,
    v: &DisplacementField<T>,
    materials: &MaterialField<T>,
    freq: &FrequencyConfig<T>,
) -> Result<T> {
    weighted_energy(space, u, v, &materials.as_coefficients(), freq.omega_sq())
}

/// `∫_{Γ_N} g · u dS`, the boundary pairing behind the NtD matrix.
pub fn boundary_pairing<T: Real>(
    space: &FeSpace<T>,
    load: &BoundaryLoad<T>,
    u: &DisplacementField<T>,
) -> Result<T> {
    if u.values.len() != space.num_dofs() {
        return Err(Error::Dimension(
            "displacement field does not match the mesh".into(),
        ));
    }
    Ok(dot(&space.load_vector(load)?, &u.values))
}
