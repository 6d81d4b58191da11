//! Trilinear hexahedron with 2×2×2 Gauss quadrature.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::{Mat3, Real, Vec3};

/// Reference coordinates of the eight nodes, matching the mesh node order.
pub const REF_NODES: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

pub const QUAD_POINTS: usize = 8;

/// Shape values and reference derivatives at `xi`.
pub fn shape_functions<T: Real>(xi: &Vec3<T>) -> ([T; 8], [Vec3<T>; 8]) {
    let eighth = T::lit(0.125);
    let mut n = [T::zero(); 8];
    let mut dn = [[T::zero(); 3]; 8];
    for (a, r) in REF_NODES.iter().enumerate() {
        let f: Vec3<T> = std::array::from_fn(|k| T::one() + T::lit(r[k]) * xi[k]);
        n[a] = eighth * f[0] * f[1] * f[2];
        dn[a] = [
            eighth * T::lit(r[0]) * f[1] * f[2],
            eighth * T::lit(r[1]) * f[0] * f[2],
            eighth * T::lit(r[2]) * f[0] * f[1],
        ];
    }
    (n, dn)
}

/// Gauss points of the 2×2×2 rule (all weights are one).
pub fn gauss_points<T: Real>() -> [Vec3<T>; QUAD_POINTS] {
    let g = T::one() / T::lit(3.0).sqrt();
    std::array::from_fn(|q| {
        let r = REF_NODES[q];
        [T::lit(r[0]) * g, T::lit(r[1]) * g, T::lit(r[2]) * g]
    })
}

/// Physical shape gradients and integration weights of one element.
#[derive(Debug, Clone)]
pub struct ElementKinematics<T> {
    pub shape: [[T; 8]; QUAD_POINTS],
    /// `grad[q][a][k] = ∂N_a/∂x_k` at quadrature point `q`.
    pub grad: [[Vec3<T>; 8]; QUAD_POINTS],
    /// Gauss weight times Jacobian determinant.
    pub weight: [T; QUAD_POINTS],
}

impl<T: Real> ElementKinematics<T> {
    pub fn new(coords: &[Vec3<T>; 8]) -> Result<Self> {
        let mut shape = [[T::zero(); 8]; QUAD_POINTS];
        let mut grad = [[[T::zero(); 3]; 8]; QUAD_POINTS];
        let mut weight = [T::zero(); QUAD_POINTS];
        for (q, xi) in gauss_points::<T>().iter().enumerate() {
            let (n, dn) = shape_functions(xi);
            // J[i][k] = ∂x_i/∂ξ_k
            let mut j = [[T::zero(); 3]; 3];
            for a in 0..8 {
                for i in 0..3 {
                    for k in 0..3 {
                        j[i][k] += coords[a][i] * dn[a][k];
                    }
                }
            }
            let det = det3(&j);
            if !(det > T::zero()) {
                return Err(Error::InvalidGeometry(format!(
                    "non-positive Jacobian determinant {det} at quadrature point {q}"
                )));
            }
            let inv = inv3(&j, det);
            for a in 0..8 {
                // ∂N/∂x_i = Σ_k ∂N/∂ξ_k ∂ξ_k/∂x_i
                grad[q][a] = std::array::from_fn(|i| (0..3).map(|k| dn[a][k] * inv[k][i]).sum());
            }
            shape[q] = n;
            weight[q] = det;
        }
        Ok(Self {
            shape,
            grad,
            weight,
        })
    }

    pub fn volume(&self) -> T {
        self.weight.iter().copied().sum()
    }

    /// Full displacement gradient `G[i][k] = ∂u_i/∂x_k` at `q` from the 24 element DOFs.
    #[inline]
    pub fn gradient(&self, q: usize, ue: &[T; 24]) -> Mat3<T> {
        let mut g = [[T::zero(); 3]; 3];
        for a in 0..8 {
            let d = &self.grad[q][a];
            for i in 0..3 {
                let u = ue[3 * a + i];
                for k in 0..3 {
                    g[i][k] += u * d[k];
                }
            }
        }
        g
    }

    #[inline]
    pub fn value(&self, q: usize, ue: &[T; 24]) -> Vec3<T> {
        let mut v = [T::zero(); 3];
        for a in 0..8 {
            let n = self.shape[q][a];
            for i in 0..3 {
                v[i] += n * ue[3 * a + i];
            }
        }
        v
    }

    /// Element matrices `∫ 2μ ε:ε + λ div div` and `∫ ρ u·v` for constant coefficients.
    pub fn matrices(&self, lambda: T, mu: T, rho: T) -> ([[T; 24]; 24], [[T; 24]; 24]) {
        let mut k = [[T::zero(); 24]; 24];
        let mut m = [[T::zero(); 24]; 24];
        for q in 0..QUAD_POINTS {
            let w = self.weight[q];
            let g = &self.grad[q];
            let n = &self.shape[q];
            for a in 0..8 {
                for b in 0..8 {
                    let gab: T = (0..3).map(|l| g[a][l] * g[b][l]).sum();
                    let mab = w * rho * n[a] * n[b];
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut v = mu * g[b][i] * g[a][j] + lambda * g[a][i] * g[b][j];
                            if i == j {
                                v += mu * gab;
                                m[3 * a + i][3 * b + j] += mab;
                            }
                            k[3 * a + i][3 * b + j] += w * v;
                        }
                    }
                }
            }
        }
        (k, m)
    }
}

fn det3<T: Real>(j: &Mat3<T>) -> T {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

fn inv3<T: Real>(j: &Mat3<T>, det: T) -> Mat3<T> {
    let c =
        |r0: usize, c0: usize, r1: usize, c1: usize| j[r0][c0] * j[r1][c1] - j[r0][c1] * j[r1][c0];
    [
        [
            c(1, 1, 2, 2) / det,
            -c(0, 1, 2, 2) / det,
            c(0, 1, 1, 2) / det,
        ],
        [
            -c(1, 0, 2, 2) / det,
            c(0, 0, 2, 2) / det,
            -c(0, 0, 1, 2) / det,
        ],
        [
            c(1, 0, 2, 1) / det,
            -c(0, 0, 2, 1) / det,
            c(0, 0, 1, 1) / det,
        ],
    ]
}

/// Kinematics of every mesh element.
pub fn mesh_kinematics<T: Real>(mesh: &Mesh<T>) -> Result<Vec<ElementKinematics<T>>> {
    (0..mesh.num_elements())
        .map(|e| {
            ElementKinematics::new(&mesh.element_nodes(e))
                .map_err(|err| Error::InvalidGeometry(format!("element {e}: {err}")))
        })
        .collect()
}

/// Symmetric part of a 3×3 matrix.
#[inline]
pub fn symmetric_part<T: Real>(g: &Mat3<T>) -> Mat3<T> {
    std::array::from_fn(|i| std::array::from_fn(|j| (g[i][j] + g[j][i]) * T::half()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube(s: f64) -> [Vec3<f64>; 8] {
        REF_NODES.map(|r| r.map(|v| (v + 1.0) * 0.5 * s))
    }

    #[test]
    fn partition_of_unity() {
        let (n, dn) = shape_functions(&[0.3, -0.2, 0.7]);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..3 {
            assert!(dn.iter().map(|d| d[k]).sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn volume_and_rigid_modes() {
        let kin = ElementKinematics::new(&unit_cube(0.5)).unwrap();
        assert!((kin.volume() - 0.125).abs() < 1e-15);
        let (k, m) = kin.matrices(2.0, 3.0, 5.0);
        let t: [f64; 24] = std::array::from_fn(|i| [1.0, -2.0, 0.5][i % 3]);
        for row in &k {
            let r: f64 = row.iter().zip(&t).map(|(a, b)| a * b).sum();
            assert!(r.abs() < 1e-12);
        }
        let mass: f64 = (0..24)
            .map(|i| (0..24).map(|j| t[i] * m[i][j] * t[j]).sum::<f64>())
            .sum();
        assert!((mass - 5.0 * 0.125 * (1.0 + 4.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn inverted_element_rejected() {
        let mut c = unit_cube(1.0);
        c.swap(0, 1);
        c.swap(2, 3);
        c.swap(4, 5);
        c.swap(6, 7);
        assert!(ElementKinematics::new(&c).is_err());
    }
}
