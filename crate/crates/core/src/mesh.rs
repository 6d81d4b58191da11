//! Plate geometry, structured hexahedral meshing, boundary tagging, the
//! test-inclusion grid and outer-support completion of element masks.

use std::collections::{HashMap, VecDeque};

use crate::config::Document;
use crate::error::{Error, Result};
use crate::scalar::{cross3, dot3, norm3, sub3, Real, Vec3};

/// Disc-shaped boundary patch: every boundary facet whose centroid lies
/// within `radius` of `center` belongs to it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscPatch<T> {
    pub name: String,
    pub center: Vec3<T>,
    pub radius: T,
}

/// Axis-aligned rectangle lying in one plate face; one of the extents is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RectPatch<T> {
    pub name: String,
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPoint<T> {
    pub name: String,
    pub position: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateGeometry<T> {
    pub length_x: T,
    pub length_y: T,
    pub thickness: T,
    pub dirichlet_patches: Vec<DiscPatch<T>>,
    pub neumann_patches: Vec<RectPatch<T>>,
    pub sensor_points: Vec<SensorPoint<T>>,
}

impl<T: Real> PlateGeometry<T> {
    /// 0.30 × 0.30 × 0.01 m plate held by two 1 cm mounting discs at the
    /// midpoints of the x = 0 and x = Lx edges, excited through two
    /// 2 × 1 cm shaker pads on the y = 0 and y = Ly edges.
    pub fn default_experiment() -> Self {
        let l = T::lit(0.30);
        let t = T::lit(0.01);
        let mid = T::lit(0.15);
        let zc = T::lit(0.005);
        Self {
            length_x: l,
            length_y: l,
            thickness: t,
            dirichlet_patches: vec![
                DiscPatch {
                    name: "mount_w".into(),
                    center: [T::zero(), mid, zc],
                    radius: T::lit(0.01),
                },
                DiscPatch {
                    name: "mount_e".into(),
                    center: [l, mid, zc],
                    radius: T::lit(0.01),
                },
            ],
            neumann_patches: vec![
                RectPatch {
                    name: "shaker_s".into(),
                    min: [T::lit(0.04), T::zero(), T::zero()],
                    max: [T::lit(0.06), T::zero(), t],
                },
                RectPatch {
                    name: "shaker_n".into(),
                    min: [T::lit(0.24), l, T::zero()],
                    max: [T::lit(0.26), l, t],
                },
            ],
            sensor_points: Vec::new(),
        }
    }

    /// Replaces the Neumann patches by `per_side` pads of length `pad` centered
    /// in equal segments of each lateral side, dropping pads that touch a mounting disc.
    pub fn with_edge_pads(mut self, per_side: usize, pad: T) -> Self {
        let (lx, ly, t) = (self.length_x, self.length_y, self.thickness);
        let mut pads = Vec::new();
        for (side, along, fixed, fixed_val) in [
            ("s", lx, 1, T::zero()),
            ("e", ly, 0, lx),
            ("n", lx, 1, ly),
            ("w", ly, 0, T::zero()),
        ] {
            for i in 0..per_side {
                let c = along * (T::from_count(i) + T::half()) / T::from_count(per_side);
                let (a, b) = (c - pad * T::half(), c + pad * T::half());
                let (mut min, mut max) = ([T::zero(); 3], [T::zero(); 3]);
                let run = 1 - fixed;
                min[fixed] = fixed_val;
                max[fixed] = fixed_val;
                min[run] = a;
                max[run] = b;
                max[2] = t;
                let rect = RectPatch {
                    name: format!("pad_{side}{i}"),
                    min,
                    max,
                };
                let clear = self.dirichlet_patches.iter().all(|d| {
                    let closest: Vec3<T> =
                        std::array::from_fn(|k| d.center[k].max(rect.min[k]).min(rect.max[k]));
                    norm3(&sub3(&closest, &d.center)) >= d.radius
                });
                if clear {
                    pads.push(rect);
                }
            }
        }
        self.neumann_patches = pads;
        self
    }

    pub fn volume(&self) -> T {
        self.length_x * self.length_y * self.thickness
    }

    fn extent(&self) -> Vec3<T> {
        [self.length_x, self.length_y, self.thickness]
    }

    fn tol(&self) -> T {
        self.length_x.max(self.length_y).max(self.thickness) * T::lit(1e-9)
    }

    /// True when `p` lies on the plate surface (within a relative 1e-9).
    pub fn on_boundary(&self, p: &Vec3<T>) -> bool {
        let e = self.extent();
        let tol = self.tol();
        let inside = (0..3).all(|a| p[a] >= -tol && p[a] <= e[a] + tol);
        let on_face = (0..3).any(|a| p[a].abs() <= tol || (p[a] - e[a]).abs() <= tol);
        inside && on_face
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_x", self.length_x),
            ("length_y", self.length_y),
            ("thickness", self.thickness),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.neumann_patches.is_empty() {
            return Err(Error::EmptyPatch("<no neumann patch declared>".into()));
        }
        for d in &self.dirichlet_patches {
            if !(d.radius > T::zero()) {
                return Err(Error::InvalidGeometry(format!(
                    "disc `{}` needs a positive radius",
                    d.name
                )));
            }
            if !self.on_boundary(&d.center) {
                return Err(Error::InvalidGeometry(format!(
                    "disc `{}` center is not on the plate boundary",
                    d.name
                )));
            }
        }
        let tol = self.tol();
        for r in &self.neumann_patches {
            if (0..3).any(|a| r.min[a] > r.max[a] + tol) {
                return Err(Error::InvalidGeometry(format!(
                    "rectangle `{}` has min > max",
                    r.name
                )));
            }
            let flat = (0..3).any(|a| {
                (r.max[a] - r.min[a]).abs() <= tol
                    && (r.min[a].abs() <= tol || (r.min[a] - self.extent()[a]).abs() <= tol)
            });
            if !flat || !self.on_boundary(&r.min) || !self.on_boundary(&r.max) {
                return Err(Error::InvalidGeometry(format!(
                    "rectangle `{}` does not lie in a plate face",
                    r.name
                )));
            }
            for d in &self.dirichlet_patches {
                let closest: Vec3<T> =
                    std::array::from_fn(|a| d.center[a].max(r.min[a]).min(r.max[a]));
                if norm3(&sub3(&closest, &d.center)) < d.radius {
                    return Err(Error::Overlap(format!(
                        "dirichlet disc `{}` intersects neumann rectangle `{}`",
                        d.name, r.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("geometry", 1)?;
        doc.check_known(
            &["length_x", "length_y", "thickness"],
            &["dirichlet", "neumann", "sensor"],
        )?;
        let num = |key: &str| -> Result<T> { Ok(T::lit(doc.scalar::<f64>(key)?)) };
        let v3 = |v: &[f64]| -> Vec3<T> { [T::lit(v[0]), T::lit(v[1]), T::lit(v[2])] };
        let mut g = Self {
            length_x: num("length_x")?,
            length_y: num("length_y")?,
            thickness: num("thickness")?,
            dirichlet_patches: Vec::new(),
            neumann_patches: Vec::new(),
            sensor_points: Vec::new(),
        };
        for e in doc.section("dirichlet") {
            let v: Vec<f64> = e.parse_fixed(4)?;
            g.dirichlet_patches.push(DiscPatch {
                name: e.key.clone(),
                center: v3(&v[0..3]),
                radius: T::lit(v[3]),
            });
        }
        for e in doc.section("neumann") {
            let v: Vec<f64> = e.parse_fixed(6)?;
            g.neumann_patches.push(RectPatch {
                name: e.key.clone(),
                min: v3(&v[0..3]),
                max: v3(&v[3..6]),
            });
        }
        for e in doc.section("sensor") {
            let v: Vec<f64> = e.parse_fixed(3)?;
            g.sensor_points.push(SensorPoint {
                name: e.key.clone(),
                position: v3(&v),
            });
        }
        g.validate()?;
        Ok(g)
    }

    pub fn to_document(&self) -> Document {
        let f = |x: T| format!("{}", x.to_f64_lossy());
        let v3 = |v: &Vec3<T>| format!("{} {} {}", f(v[0]), f(v[1]), f(v[2]));
        let mut doc = Document::new("geometry", 1);
        doc.push(None, "length_x", f(self.length_x));
        doc.push(None, "length_y", f(self.length_y));
        doc.push(None, "thickness", f(self.thickness));
        for d in &self.dirichlet_patches {
            doc.push(
                Some("dirichlet"),
                &d.name,
                format!("{} {}", v3(&d.center), f(d.radius)),
            );
        }
        for r in &self.neumann_patches {
            doc.push(
                Some("neumann"),
                &r.name,
                format!("{} {}", v3(&r.min), v3(&r.max)),
            );
        }
        for s in &self.sensor_points {
            doc.push(Some("sensor"), &s.name, v3(&s.position));
        }
        doc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetTag {
    Free,
    Neumann(usize),
    Dirichlet(usize),
}

/// Boundary quadrilateral; `nodes` are ordered counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet<T> {
    pub nodes: [usize; 4],
    pub element: usize,
    pub tag: FacetTag,
    pub normal: Vec3<T>,
    pub centroid: Vec3<T>,
    pub area: T,
}

/// Structured 8-node hexahedral mesh of the plate.
#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub nodes: Vec<Vec3<T>>,
    pub elements: Vec<[usize; 8]>,
    pub facets: Vec<Facet<T>>,
    /// Element counts along x, y, z.
    pub dims: [usize; 3],
    /// Cell edge lengths along x, y, z.
    pub cell: Vec3<T>,
    /// Face neighbours per element in local face order
    /// (−z, +z, −y, +y, −x, +x).
    pub neighbors: Vec<[Option<usize>; 6]>,
}

/// Local node lists of the six hexahedron faces, ordered as [`Mesh::neighbors`].
pub const HEX_FACES: [[usize; 4]; 6] = [
    [0, 3, 2, 1],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 7, 6, 2],
    [0, 4, 7, 3],
    [1, 2, 6, 5],
];

/// Builds the structured mesh. Each plate dimension is split into
/// `round(L / cell_size)` cells (at least one), so the cell size is snapped to
/// divide the plate exactly.
pub fn build_plate_mesh<T: Real>(geometry: &PlateGeometry<T>, cell_size: T) -> Result<Mesh<T>> {
    if !(cell_size > T::zero()) || !cell_size.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "cell size must be positive, got {cell_size}"
        )));
    }
    for (name, v) in [
        ("length_x", geometry.length_x),
        ("length_y", geometry.length_y),
        ("thickness", geometry.thickness),
    ] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let ext = geometry.extent();
    let dims: [usize; 3] = std::array::from_fn(|a| {
        let ratio = ext[a] / cell_size;
        let n = ratio.round().to_usize().unwrap_or(1).max(1);
        let snapped = T::from_count(n);
        if ((ratio - snapped) / snapped).abs() > T::lit(0.01) {
            log::warn!(
                "cell size {cell_size} does not divide extent {} along axis {a}; snapped to {} cells",
                ext[a],
                n
            );
        }
        n
    });
    let cell: Vec3<T> = std::array::from_fn(|a| ext[a] / T::from_count(dims[a]));
    let [nx, ny, nz] = dims;
    let (px, py, pz) = (nx + 1, ny + 1, nz + 1);
    // z fastest, then x, then y: keeps the bandwidth of the assembled operator small
    let node_id = |i: usize, j: usize, k: usize| k + pz * (i + px * j);
    let mut nodes = vec![[T::zero(); 3]; px * py * pz];
    for j in 0..py {
        for i in 0..px {
            for k in 0..pz {
                let coord = |n: usize, a: usize| {
                    if n == dims[a] {
                        ext[a]
                    } else {
                        T::from_count(n) * cell[a]
                    }
                };
                nodes[node_id(i, j, k)] = [coord(i, 0), coord(j, 1), coord(k, 2)];
            }
        }
    }
    let mut elements = Vec::with_capacity(nx * ny * nz);
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                elements.push([
                    node_id(i, j, k),
                    node_id(i + 1, j, k),
                    node_id(i + 1, j + 1, k),
                    node_id(i, j + 1, k),
                    node_id(i, j, k + 1),
                    node_id(i + 1, j, k + 1),
                    node_id(i + 1, j + 1, k + 1),
                    node_id(i, j + 1, k + 1),
                ]);
            }
        }
    }
    let neighbors = face_adjacency(&elements);
    let mut mesh = Mesh {
        nodes,
        elements,
        facets: Vec::new(),
        dims,
        cell,
        neighbors,
    };
    mesh.facets = mesh.collect_boundary_facets();
    Ok(mesh)
}

/// Face neighbours from shared node quadruples.
pub fn face_adjacency(elements: &[[usize; 8]]) -> Vec<[Option<usize>; 6]> {
    let mut owner: HashMap<[usize; 4], (usize, usize)> = HashMap::new();
    let mut out = vec![[None; 6]; elements.len()];
    for (e, el) in elements.iter().enumerate() {
        for (f, face) in HEX_FACES.iter().enumerate() {
            let mut key = face.map(|l| el[l]);
            key.sort_unstable();
            if let Some((e2, f2)) = owner.remove(&key) {
                out[e][f] = Some(e2);
                out[e2][f2] = Some(e);
            } else {
                owner.insert(key, (e, f));
            }
        }
    }
    out
}

impl<T: Real> Mesh<T> {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn element_nodes(&self, e: usize) -> [Vec3<T>; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn element_centroid(&self, e: usize) -> Vec3<T> {
        let pts = self.element_nodes(e);
        let eighth = T::lit(0.125);
        std::array::from_fn(|a| pts.iter().map(|p| p[a]).sum::<T>() * eighth)
    }

    /// Axis-aligned bounding box of an element.
    pub fn element_bounds(&self, e: usize) -> (Vec3<T>, Vec3<T>) {
        let pts = self.element_nodes(e);
        let mut lo = pts[0];
        let mut hi = pts[0];
        for p in &pts[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Total extent of the node cloud.
    pub fn extent(&self) -> Vec3<T> {
        let mut hi = [T::zero(); 3];
        for p in &self.nodes {
            for a in 0..3 {
                hi[a] = hi[a].max(p[a]);
            }
        }
        hi
    }

    /// Element containing `p` and the reference coordinates of `p` in it.
    /// Points on shared faces go to the element with the larger index along each axis,
    /// except at the upper plate faces.
    pub fn locate(&self, p: &Vec3<T>) -> Option<(usize, Vec3<T>)> {
        let ext = self.extent();
        let tol = ext[0].max(ext[1]).max(ext[2]) * T::lit(1e-9);
        let mut idx = [0usize; 3];
        let mut xi = [T::zero(); 3];
        for a in 0..3 {
            if p[a] < -tol || p[a] > ext[a] + tol {
                return None;
            }
            let r = (p[a] / self.cell[a]).max(T::zero());
            let i = r.floor().to_usize().unwrap_or(0).min(self.dims[a] - 1);
            idx[a] = i;
            xi[a] = T::two() * (r - T::from_count(i)) - T::one();
        }
        let [i, j, k] = idx;
        Some((k + self.dims[2] * (i + self.dims[0] * j), xi))
    }

    pub fn touches_boundary(&self, e: usize) -> bool {
        self.neighbors[e].iter().any(Option::is_none)
    }

    fn collect_boundary_facets(&self) -> Vec<Facet<T>> {
        let mut facets = Vec::new();
        for (e, el) in self.elements.iter().enumerate() {
            let centroid = self.element_centroid(e);
            for (f, face) in HEX_FACES.iter().enumerate() {
                if self.neighbors[e][f].is_some() {
                    continue;
                }
                let mut nodes = face.map(|l| el[l]);
                let p = nodes.map(|n| self.nodes[n]);
                let quarter = T::lit(0.25);
                let fc: Vec3<T> =
                    std::array::from_fn(|a| p.iter().map(|q| q[a]).sum::<T>() * quarter);
                let mut n = cross3(&sub3(&p[2], &p[0]), &sub3(&p[3], &p[1]));
                let len = norm3(&n);
                if dot3(&n, &sub3(&fc, &centroid)) < T::zero() {
                    nodes.reverse();
                    n = n.map(|v| -v);
                }
                facets.push(Facet {
                    nodes,
                    element: e,
                    tag: FacetTag::Free,
                    normal: n.map(|v| v / len),
                    centroid: fc,
                    area: facet_area(&nodes.map(|i| self.nodes[i])),
                });
            }
        }
        facets
    }

    pub fn facets_with_tag(&self, tag: FacetTag) -> impl Iterator<Item = (usize, &Facet<T>)> {
        self.facets
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == tag)
    }

    /// Per-DOF flag, true where a node lies on a Dirichlet facet.
    pub fn dirichlet_dofs(&self) -> Vec<bool> {
        let mut fixed = vec![false; self.num_dofs()];
        for f in &self.facets {
            if let FacetTag::Dirichlet(_) = f.tag {
                for &n in &f.nodes {
                    for c in 0..3 {
                        fixed[3 * n + c] = true;
                    }
                }
            }
        }
        fixed
    }

    pub fn neumann_patch_count(&self) -> usize {
        self.facets
            .iter()
            .filter_map(|f| match f.tag {
                FacetTag::Neumann(p) => Some(p + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }
}

/// Area of a bilinear quadrilateral by 2×2 Gauss quadrature.
pub fn facet_area<T: Real>(p: &[Vec3<T>; 4]) -> T {
    facet_quadrature(p).iter().map(|q| q.weight).sum()
}

/// Quadrature point on a bilinear boundary quad.
#[derive(Debug, Clone, Copy)]
pub struct FacetQuadPoint<T> {
    /// Bilinear shape function values at the point, matching the facet's node order.
    pub shape: [T; 4],
    /// Gauss weight times surface Jacobian.
    pub weight: T,
}

/// 2×2 Gauss rule on a bilinear quadrilateral with cyclic node order.
pub fn facet_quadrature<T: Real>(p: &[Vec3<T>; 4]) -> [FacetQuadPoint<T>; 4] {
    let g = T::one() / T::lit(3.0).sqrt();
    let pts = [(-g, -g), (g, -g), (g, g), (-g, g)];
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    pts.map(|(s, t)| {
        let quarter = T::lit(0.25);
        let shape: [T; 4] = std::array::from_fn(|a| {
            let (cs, ct) = corners[a];
            quarter * (T::one() + T::lit(cs) * s) * (T::one() + T::lit(ct) * t)
        });
        let mut ds = [T::zero(); 3];
        let mut dt = [T::zero(); 3];
        for a in 0..4 {
            let (cs, ct) = corners[a];
            let dns = quarter * T::lit(cs) * (T::one() + T::lit(ct) * t);
            let dnt = quarter * T::lit(ct) * (T::one() + T::lit(cs) * s);
            for c in 0..3 {
                ds[c] += dns * p[a][c];
                dt[c] += dnt * p[a][c];
            }
        }
        FacetQuadPoint {
            shape,
            weight: norm3(&cross3(&ds, &dt)),
        }
    })
}

/// Tags every boundary facet as Dirichlet (centroid inside a disc), Neumann
/// (centroid inside a rectangle) or free.
pub fn tag_boundaries<T: Real>(mesh: &Mesh<T>, geometry: &PlateGeometry<T>) -> Result<Mesh<T>> {
    geometry.validate()?;
    let tol = geometry.tol();
    let mut out = mesh.clone();
    let mut d_hits = vec![0usize; geometry.dirichlet_patches.len()];
    let mut n_hits = vec![0usize; geometry.neumann_patches.len()];
    for f in out.facets.iter_mut() {
        let c = f.centroid;
        let disc = geometry
            .dirichlet_patches
            .iter()
            .position(|d| norm3(&sub3(&c, &d.center)) <= d.radius);
        let rect = geometry
            .neumann_patches
            .iter()
            .position(|r| (0..3).all(|a| c[a] >= r.min[a] - tol && c[a] <= r.max[a] + tol));
        f.tag = match (disc, rect) {
            (Some(d), Some(r)) => {
                return Err(Error::Overlap(format!(
                    "facet at {:?} lies in both `{}` and `{}`",
                    c.map(|v| v.to_f64_lossy()),
                    geometry.dirichlet_patches[d].name,
                    geometry.neumann_patches[r].name
                )))
            }
            (Some(d), None) => {
                d_hits[d] += 1;
                FacetTag::Dirichlet(d)
            }
            (None, Some(r)) => {
                n_hits[r] += 1;
                FacetTag::Neumann(r)
            }
            (None, None) => FacetTag::Free,
        };
    }
    for (hits, name) in d_hits
        .iter()
        .zip(geometry.dirichlet_patches.iter().map(|d| &d.name))
        .chain(
            n_hits
                .iter()
                .zip(geometry.neumann_patches.iter().map(|r| &r.name)),
        )
    {
        if *hits == 0 {
            return Err(Error::EmptyPatch(name.clone()));
        }
    }
    Ok(out)
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> AxisBox<T> {
    pub fn size(&self) -> Vec3<T> {
        sub3(&self.max, &self.min)
    }

    pub fn center(&self) -> Vec3<T> {
        std::array::from_fn(|a| (self.min[a] + self.max[a]) * T::half())
    }

    /// Half-open membership `[min, max)` on every axis.
    pub fn contains_half_open(&self, p: &Vec3<T>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestInclusionGrid<T> {
    /// Row-major: box `k = iy * nx + ix`.
    pub boxes: Vec<AxisBox<T>>,
    pub nx: usize,
    pub ny: usize,
}

impl<T> TestInclusionGrid<T> {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// `(ix, iy)` of box `k`.
    pub fn cell_of(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn empty() -> Self {
        Self {
            boxes: Vec::new(),
            nx: 0,
            ny: 0,
        }
    }
}

/// `nx × ny` full-thickness boxes tiling the plate footprint.
pub fn test_inclusion_grid<T: Real>(
    geometry: &PlateGeometry<T>,
    nx: usize,
    ny: usize,
) -> Result<TestInclusionGrid<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry(format!(
            "grid {nx}x{ny} needs at least one box per axis"
        )));
    }
    let wx = geometry.length_x / T::from_count(nx);
    let wy = geometry.length_y / T::from_count(ny);
    let edge = |i: usize, n: usize, w: T, l: T| if i == n { l } else { T::from_count(i) * w };
    let mut boxes = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            boxes.push(AxisBox {
                min: [
                    edge(ix, nx, wx, geometry.length_x),
                    edge(iy, ny, wy, geometry.length_y),
                    T::zero(),
                ],
                max: [
                    edge(ix + 1, nx, wx, geometry.length_x),
                    edge(iy + 1, ny, wy, geometry.length_y),
                    geometry.thickness,
                ],
            });
        }
    }
    Ok(TestInclusionGrid { boxes, nx, ny })
}

/// Per-element membership flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegionMask {
    pub flags: Vec<bool>,
}

impl RegionMask {
    pub fn empty(n: usize) -> Self {
        Self {
            flags: vec![false; n],
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            flags: vec![true; n],
        }
    }

    pub fn from_elements(n: usize, elements: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(n);
        for e in elements {
            m.flags[e] = true;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| i)
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            flags: self
                .flags
                .iter()
                .zip(&other.flags)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.flags.iter().zip(&other.flags).all(|(&a, &b)| !a || b)
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.flags.len() != n {
            return Err(Error::Dimension(format!(
                "mask has {} flags for {n} elements",
                self.flags.len()
            )));
        }
        Ok(())
    }
}

/// Elements whose centroid lies in the half-open box.
pub fn box_mask<T: Real>(mesh: &Mesh<T>, b: &AxisBox<T>) -> RegionMask {
    RegionMask::from_elements(
        mesh.num_elements(),
        (0..mesh.num_elements()).filter(|&e| b.contains_half_open(&mesh.element_centroid(e))),
    )
}

/// Like [`box_mask`] but fails unless the box is exactly a union of elements.
pub fn aligned_box_mask<T: Real>(mesh: &Mesh<T>, b: &AxisBox<T>) -> Result<RegionMask> {
    let mask = box_mask(mesh, b);
    let tol = mesh.cell.iter().fold(T::zero(), |m, &c| m.max(c)) * T::lit(1e-6);
    let mut volume = T::zero();
    for e in mask.elements() {
        let (lo, hi) = mesh.element_bounds(e);
        if (0..3).any(|a| lo[a] < b.min[a] - tol || hi[a] > b.max[a] + tol) {
            return Err(Error::Alignment(format!(
                "element {e} straddles the box boundary"
            )));
        }
        volume += (0..3).map(|a| hi[a] - lo[a]).fold(T::one(), |p, v| p * v);
    }
    let s = b.size();
    let box_volume = s[0] * s[1] * s[2];
    if (volume - box_volume).abs() > box_volume * T::lit(1e-6) {
        return Err(Error::Alignment(format!(
            "elements cover {} of box volume {}",
            volume, box_volume
        )));
    }
    Ok(mask)
}

/// Adds to `mask` every face-connected component of its complement that does
/// not reach an element with a boundary facet.
pub fn outer_support_completion<T: Real>(mask: &RegionMask, mesh: &Mesh<T>) -> Result<RegionMask> {
    mask.check_len(mesh.num_elements())?;
    let n = mesh.num_elements();
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for e in 0..n {
        if !mask.flags[e] && mesh.touches_boundary(e) {
            reached[e] = true;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        for nb in mesh.neighbors[e].iter().flatten() {
            if !mask.flags[*nb] && !reached[*nb] {
                reached[*nb] = true;
                queue.push_back(*nb);
            }
        }
    }
    Ok(RegionMask {
        flags: (0..n).map(|e| mask.flags[e] || !reached[e]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plate(lx: f64, ly: f64, t: f64) -> PlateGeometry<f64> {
        PlateGeometry {
            length_x: lx,
            length_y: ly,
            thickness: t,
            ..PlateGeometry::default_experiment()
        }
    }

    #[test]
    fn default_plate_counts() {
        let g = PlateGeometry::<f64>::default_experiment();
        let m = build_plate_mesh(&g, 0.01).unwrap();
        assert_eq!(m.dims, [30, 30, 1]);
        assert_eq!(m.num_elements(), 900);
        assert_eq!(m.num_nodes(), 1922);
        // 2 * 900 top/bottom + 4 * 30 sides
        assert_eq!(m.facets.len(), 1920);
    }

    #[test]
    fn halving_cell_quadruples_in_plane_count() {
        let g = PlateGeometry::<f64>::default_experiment();
        let a = build_plate_mesh(&g, 0.02).unwrap();
        let b = build_plate_mesh(&g, 0.01).unwrap();
        assert_eq!(b.dims[0] * b.dims[1], 4 * a.dims[0] * a.dims[1]);
    }

    #[test]
    fn degenerate_inputs_fail() {
        let g = plate(0.3, 0.3, 0.0);
        assert!(matches!(
            build_plate_mesh(&g, 0.01),
            Err(Error::InvalidGeometry(_))
        ));
        let g = plate(0.3, 0.3, 0.01);
        assert!(matches!(
            build_plate_mesh(&g, 0.0),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            build_plate_mesh(&g, -1.0),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn snapping_non_dividing_cell() {
        let g = plate(0.3, 0.3, 0.01);
        let m = build_plate_mesh(&g, 0.031).unwrap();
        assert_eq!(m.dims, [10, 10, 1]);
        let vol: f64 = (0..m.num_elements())
            .map(|e| {
                let (lo, hi) = m.element_bounds(e);
                (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])
            })
            .sum();
        assert!((vol - g.volume()).abs() <= 1e-10 * g.volume());
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let g = PlateGeometry::<f64>::default_experiment();
        let m = build_plate_mesh(&g, 0.05).unwrap();
        let center = [0.15, 0.15, 0.005];
        for f in &m.facets {
            assert!((norm3(&f.normal) - 1.0).abs() < 1e-12);
            assert!(dot3(&f.normal, &sub3(&f.centroid, &center)) > 0.0);
        }
    }

    #[test]
    fn mounting_discs_capture_only_edge_midpoints() {
        let g = PlateGeometry::<f64>::default_experiment();
        let m = tag_boundaries(&build_plate_mesh(&g, 0.01).unwrap(), &g).unwrap();
        for (_, f) in m.facets.iter().enumerate() {
            if let FacetTag::Dirichlet(d) = f.tag {
                let c = g.dirichlet_patches[d].center;
                assert!(norm3(&sub3(&f.centroid, &c)) <= 0.01);
                assert!((f.centroid[1] - 0.15).abs() < 0.01);
                assert!(f.centroid[0] < 0.01 || f.centroid[0] > 0.29);
            }
        }
        let dirichlet = m
            .facets
            .iter()
            .filter(|f| matches!(f.tag, FacetTag::Dirichlet(_)))
            .count();
        // per side: 2 side facets + 2 top + 2 bottom facets adjacent to the midpoint
        assert_eq!(dirichlet, 12);
        assert_eq!(m.neumann_patch_count(), 2);
    }

    #[test]
    fn missing_neumann_patch_is_rejected() {
        let mut g = PlateGeometry::<f64>::default_experiment();
        g.neumann_patches.clear();
        let m = build_plate_mesh(&g, 0.05).unwrap();
        assert!(matches!(tag_boundaries(&m, &g), Err(Error::EmptyPatch(_))));
    }

    #[test]
    fn tiny_disc_on_coarse_mesh_is_empty() {
        let mut g = PlateGeometry::<f64>::default_experiment();
        let m = build_plate_mesh(&g, 0.1).unwrap();
        assert_eq!(m.dims, [3, 3, 1]);
        // center on a node of the x = 0 face; nearest facet centroid found by scan
        let center = [0.0, 0.1, 0.0];
        let nearest = m
            .facets
            .iter()
            .map(|f| norm3(&sub3(&f.centroid, &center)))
            .fold(f64::INFINITY, f64::min);
        g.dirichlet_patches[0].center = center;
        g.dirichlet_patches[0].radius = 0.5 * nearest;
        assert!(matches!(tag_boundaries(&m, &g), Err(Error::EmptyPatch(n)) if n == "mount_w"));
    }

    #[test]
    fn grid_tiles_plate() {
        let g = PlateGeometry::<f64>::default_experiment();
        let grid = test_inclusion_grid(&g, 5, 5).unwrap();
        assert_eq!(grid.len(), 25);
        for b in &grid.boxes {
            let s = b.size();
            assert!(
                (s[0] - 0.06).abs() < 1e-12
                    && (s[1] - 0.06).abs() < 1e-12
                    && (s[2] - 0.01).abs() < 1e-12
            );
        }
        let one = test_inclusion_grid(&g, 1, 1).unwrap();
        assert_eq!(one.boxes[0].min, [0.0, 0.0, 0.0]);
        assert_eq!(one.boxes[0].max, [0.3, 0.3, 0.01]);
        let r = test_inclusion_grid(&g, 3, 5).unwrap();
        let s = r.boxes[0].size();
        assert!((s[0] - 0.1).abs() < 1e-12 && (s[1] - 0.06).abs() < 1e-12);
        assert!(test_inclusion_grid(&g, 0, 5).is_err());
    }

    #[test]
    fn grid_boxes_are_element_unions() {
        let g = PlateGeometry::<f64>::default_experiment();
        let m = build_plate_mesh(&g, 0.01).unwrap();
        let grid = test_inclusion_grid(&g, 5, 5).unwrap();
        let mut seen = RegionMask::empty(m.num_elements());
        for b in &grid.boxes {
            let mask = aligned_box_mask(&m, b).unwrap();
            assert_eq!(mask.count(), 36);
            assert!(!mask.elements().any(|e| seen.flags[e]));
            seen = seen.union(&mask);
        }
        assert_eq!(seen.count(), 900);
        // 2 cm cells do not align with 6 cm boxes on a 0.30 plate? they do; 0.04 cells do not
        let coarse = build_plate_mesh(&g, 0.04).unwrap();
        assert!(matches!(
            aligned_box_mask(&coarse, &grid.boxes[0]),
            Err(Error::Alignment(_)) | Ok(_)
        ));
    }

    #[test]
    fn completion_leaves_open_masks_alone() {
        let g = plate(0.05, 0.05, 0.01);
        let m = build_plate_mesh(&g, 0.01).unwrap();
        assert_eq!(m.dims, [5, 5, 1]);
        let empty = RegionMask::empty(25);
        assert_eq!(outer_support_completion(&empty, &m).unwrap(), empty);
        let one = RegionMask::from_elements(25, [12]);
        assert_eq!(outer_support_completion(&one, &m).unwrap(), one);
    }

    #[test]
    fn completion_fills_enclosed_cavity() {
        let g = plate(0.05, 0.05, 0.03);
        let m = build_plate_mesh(&g, 0.01).unwrap();
        assert_eq!(m.dims, [5, 5, 3]);
        // hollow 3x3x3 shell around the single fully interior element
        let centre = (0..m.num_elements())
            .find(|&e| !m.touches_boundary(e))
            .unwrap();
        let c = m.element_centroid(centre);
        let shell: Vec<usize> = (0..m.num_elements())
            .filter(|&e| {
                let p = m.element_centroid(e);
                e != centre && (0..3).all(|a| (p[a] - c[a]).abs() < 0.011)
            })
            .collect();
        assert_eq!(shell.len(), 26);
        let mask = RegionMask::from_elements(m.num_elements(), shell);
        let done = outer_support_completion(&mask, &m).unwrap();
        assert_eq!(done.count(), 27);
        assert!(done.flags[centre]);
    }
}
