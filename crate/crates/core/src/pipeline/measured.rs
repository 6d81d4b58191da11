use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::spectral::SpectralSample;
use super::spline::interpolate_missing;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_symmetric, Matrix};
use crate::mesh::{facet_quadrature, Mesh, PlateGeometry};
use crate::ntd::{LoadBasis, NtdKind, NtdMatrix};
use crate::scalar::{norm3, sub3, Real, Vec3};

/// Lateral side of the plate. The arc coordinate runs along x on the
/// south (y = 0) and north (y = Ly) sides and along y on the west (x = 0) and east (x = Lx) sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    South,
    East,
    North,
    West,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::South, Side::East, Side::North, Side::West];

    pub fn arc<T: Real>(&self, p: &Vec3<T>) -> T {
        match self {
            Side::South | Side::North => p[0],
            Side::East | Side::West => p[1],
        }
    }

    fn tag(&self) -> char {
        match self {
            Side::South => 's',
            Side::East => 'e',
            Side::North => 'n',
            Side::West => 'w',
        }
    }

    /// Side whose outward normal is `n`; `None` for the top and bottom faces.
    pub fn of_normal<T: Real>(n: &Vec3<T>) -> Option<Side> {
        let c = T::lit(0.5);
        if n[1] < -c {
            Some(Side::South)
        } else if n[0] > c {
            Some(Side::East)
        } else if n[1] > c {
            Some(Side::North)
        } else if n[0] < -c {
            Some(Side::West)
        } else {
            None
        }
    }

    fn holds<T: Real>(&self, p: &Vec3<T>, lx: T, ly: T, tol: T) -> bool {
        match self {
            Side::South => p[1].abs() <= tol,
            Side::East => (p[0] - lx).abs() <= tol,
            Side::North => (p[1] - ly).abs() <= tol,
            Side::West => p[0].abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn as_str(&self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }
}

/// One displacement channel: a sensor position and the measured component.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorChannel<T> {
    pub name: String,
    pub position: Vec3<T>,
    pub axis: Axis,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLayout<T> {
    pub channels: Vec<SensorChannel<T>>,
}

/// Channels of one side and axis sorted by arc coordinate.
struct Line<T> {
    side: Side,
    axis: Axis,
    members: Vec<(usize, T)>,
}

impl<T: Real> SensorLayout<T> {
    /// Three channels at every boundary node column of the lateral sides, at mid-thickness.
    pub fn boundary_nodes(mesh: &Mesh<T>) -> Self {
        let ext = mesh.extent();
        let zc = ext[2] * T::half();
        let [nx, ny, _] = mesh.dims;
        let mut channels = Vec::new();
        let mut push = |side: Side, k: usize, p: Vec3<T>| {
            for axis in Axis::ALL {
                channels.push(SensorChannel {
                    name: format!("{}{k:02}{}", side.tag(), axis.as_str()),
                    position: p,
                    axis,
                });
            }
        };
        for i in 0..=nx {
            push(
                Side::South,
                i,
                [mesh.cell[0] * T::from_count(i), T::zero(), zc],
            );
        }
        for j in 1..ny {
            push(Side::East, j, [ext[0], mesh.cell[1] * T::from_count(j), zc]);
        }
        for i in 0..=nx {
            push(
                Side::North,
                i,
                [mesh.cell[0] * T::from_count(i), ext[1], zc],
            );
        }
        for j in 1..ny {
            push(
                Side::West,
                j,
                [T::zero(), mesh.cell[1] * T::from_count(j), zc],
            );
        }
        // snap the far corners exactly onto the plate extent
        for c in &mut channels {
            for a in 0..2 {
                if (c.position[a] - ext[a]).abs() <= ext[a] * T::lit(1e-12) {
                    c.position[a] = ext[a];
                }
            }
        }
        Self { channels }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Channels whose position lies inside a clamping disc, where no sensor can be mounted.
    pub fn blocked(&self, geometry: &PlateGeometry<T>) -> Vec<bool> {
        self.channels
            .iter()
            .map(|c| {
                geometry
                    .dirichlet_patches
                    .iter()
                    .any(|d| norm3(&sub3(&c.position, &d.center)) < d.radius)
            })
            .collect()
    }

    pub fn validate(&self, mesh: &Mesh<T>) -> Result<()> {
        let ext = mesh.extent();
        let tol = ext[0].max(ext[1]) * T::lit(1e-9);
        let mut names = std::collections::HashSet::new();
        for c in &self.channels {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("sensor `{}` listed twice", c.name)));
            }
            if !Side::ALL
                .iter()
                .any(|s| s.holds(&c.position, ext[0], ext[1], tol))
            {
                return Err(Error::Schema(format!(
                    "sensor `{}` at {:?} is not on a lateral side",
                    c.name,
                    c.position.map(|v| v.to_f64_lossy())
                )));
            }
        }
        Ok(())
    }

    fn lines(&self, mesh: &Mesh<T>) -> Vec<Line<T>> {
        let ext = mesh.extent();
        let tol = ext[0].max(ext[1]) * T::lit(1e-9);
        let mut out = Vec::new();
        for side in Side::ALL {
            for axis in Axis::ALL {
                let mut members: Vec<(usize, T)> = self
                    .channels
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.axis == axis && side.holds(&c.position, ext[0], ext[1], tol))
                    .map(|(k, c)| (k, side.arc(&c.position)))
                    .collect();
                members.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
                members.dedup_by(|a, b| (a.1 - b.1).abs() <= tol);
                out.push(Line {
                    side,
                    axis,
                    members,
                });
            }
        }
        out
    }
}

/// Net force `∫ g dS` of a load.
pub fn load_resultant<T: Real>(load: &crate::fem::BoundaryLoad<T>, mesh: &Mesh<T>) -> Vec3<T> {
    let mut r = [T::zero(); 3];
    for (f, facet) in mesh.facets.iter().enumerate() {
        for c in 0..3 {
            r[c] += facet.area * load.traction[f][c];
        }
    }
    r
}

fn parse_label(label: &str) -> Option<(usize, usize, Axis)> {
    let mut it = label.split('.');
    let p = it.next()?.parse().ok()?;
    let g = it.next()?.parse().ok()?;
    let a = Axis::parse(it.next()?)?;
    Some((p, g, a))
}

/// Force channel name (`<patch>_<axis>`) that drives basis load `j`.
pub fn force_channel_name<T: Real>(
    j: usize,
    basis: &LoadBasis<T>,
    geometry: &PlateGeometry<T>,
) -> Result<String> {
    let (p, _, axis) = basis
        .labels
        .get(j)
        .and_then(|l| parse_label(l))
        .ok_or_else(|| Error::Dimension(format!("no basis load {j}")))?;
    let patch = geometry
        .neumann_patches
        .get(p)
        .ok_or_else(|| Error::Dimension(format!("basis load {j} refers to unknown patch {p}")))?;
    Ok(format!("{}_{}", patch.name, axis.as_str()))
}

/// Basis load excited by a force channel `<patch>_<axis>`.
pub fn load_for_force_channel<T: Real>(
    name: &str,
    basis: &LoadBasis<T>,
    geometry: &PlateGeometry<T>,
) -> Result<usize> {
    let (patch, axis) = name
        .rsplit_once('_')
        .and_then(|(p, a)| Axis::parse(a).map(|a| (p, a)))
        .ok_or_else(|| Error::Schema(format!("force channel `{name}` is not `<patch>_<axis>`")))?;
    let p = geometry
        .neumann_patches
        .iter()
        .position(|r| r.name == patch)
        .ok_or_else(|| {
            Error::Schema(format!(
                "force channel `{name}` names unknown patch `{patch}`"
            ))
        })?;
    if basis.spec.groups_per_patch > 1 {
        return Err(Error::Coverage(format!(
            "a shaker on `{patch}` excites the whole patch; the basis splits it into {} groups",
            basis.spec.groups_per_patch
        )));
    }
    basis
        .labels
        .iter()
        .position(|l| parse_label(l).is_some_and(|(lp, _, la)| lp == p && la == axis))
        .ok_or_else(|| Error::Coverage(format!("no basis load matches force channel `{name}`")))
}

/// Displacement per unit basis load at every layout channel; `None` where no sensor reported.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadResponse<T> {
    pub load: usize,
    pub values: Vec<Option<Complex<T>>>,
}

/// Converts one single-shaker spectral sample into the response to its basis load.
/// The dominant force channel identifies the load; transfer functions are scaled by the load's resultant.
pub fn load_response<T: Real>(
    sample: &SpectralSample<T>,
    layout: &SensorLayout<T>,
    basis: &LoadBasis<T>,
    mesh: &Mesh<T>,
    geometry: &PlateGeometry<T>,
) -> Result<LoadResponse<T>> {
    let (name, force) = sample
        .force_amp
        .iter()
        .max_by(|a, b| {
            a.1.norm()
                .partial_cmp(&b.1.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .ok_or_else(|| Error::InsufficientData("sample has no force channel".into()))?;
    if !(force.norm() > T::zero()) {
        return Err(Error::InsufficientData(format!(
            "force channel `{name}` carries no signal"
        )));
    }
    let load = load_for_force_channel(name, basis, geometry)?;
    let axis = parse_label(&basis.labels[load]).map_or(0, |(_, _, a)| a.index());
    let resultant = load_resultant(&basis.loads[load], mesh)[axis];
    let mut values = vec![None; layout.len()];
    for (ch, amp) in &sample.disp_amp {
        let k = layout.find(ch).ok_or_else(|| {
            Error::Schema(format!(
                "displacement channel `{ch}` is not in the sensor sidecar"
            ))
        })?;
        values[k] = Some(*amp / *force * resultant);
    }
    Ok(LoadResponse { load, values })
}

/// Measured NtD matrix with data-quality metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredNtd<T> {
    pub matrix: NtdMatrix<T>,
    /// Spectral norm of the (symmetrized) imaginary part of the complex pairing.
    pub imaginary_norm: T,
    /// `imaginary_norm / ‖Re‖`.
    pub relative_imaginary: T,
    /// Relative symmetry defect of the real part before averaging.
    pub asymmetry: T,
    /// Channel values filled by spline interpolation, summed over loads.
    pub filled: usize,
}

/// Quadrature of `∫ g_i · (trace) dS`: side, axis, arc coordinate and weight times traction.
type Probe<T> = (usize, T, T);

fn load_probes<T: Real>(
    i: usize,
    basis: &LoadBasis<T>,
    mesh: &Mesh<T>,
    lines: &[Line<T>],
) -> Result<Vec<Probe<T>>> {
    let mut out = Vec::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        let t = basis.loads[i].traction[f];
        if t == [T::zero(); 3] {
            continue;
        }
        let side = Side::of_normal(&facet.normal).ok_or_else(|| {
            Error::Coverage(format!("basis load {i} acts on a top or bottom facet; sensors only cover the lateral sides"))
        })?;
        let pts = facet.nodes.map(|n| mesh.nodes[n]);
        for q in facet_quadrature(&pts) {
            let x: Vec3<T> = std::array::from_fn(|c| (0..4).map(|a| q.shape[a] * pts[a][c]).sum());
            for axis in Axis::ALL {
                let tc = t[axis.index()];
                if tc == T::zero() {
                    continue;
                }
                let line = lines
                    .iter()
                    .position(|l| l.side == side && l.axis == axis)
                    .unwrap_or(0);
                out.push((line, side.arc(&x), q.weight * tc));
            }
        }
    }
    Ok(out)
}

/// Piecewise-linear trace value at arc coordinate `s`.
fn trace_at<T: Real>(
    line: &Line<T>,
    values: &[Option<Complex<T>>],
    s: T,
    tol: T,
) -> Result<Complex<T>> {
    let m = &line.members;
    let missing = || {
        Error::Coverage(format!(
            "no {} data on the {:?} side around arc position {s} m",
            line.axis.as_str(),
            line.side
        ))
    };
    if m.is_empty() || s < m[0].1 - tol || s > m[m.len() - 1].1 + tol {
        return Err(missing());
    }
    let k = m
        .partition_point(|&(_, a)| a <= s)
        .clamp(1, m.len().max(2) - 1);
    if m.len() == 1 {
        return values[m[0].0].ok_or_else(missing);
    }
    let (c0, a0) = m[k - 1];
    let (c1, a1) = m[k];
    let (v0, v1) = (
        values[c0].ok_or_else(missing)?,
        values[c1].ok_or_else(missing)?,
    );
    let w = ((s - a0) / (a1 - a0)).max(T::zero()).min(T::one());
    Ok(v0 + (v1 - v0) * w)
}

/// Assembles `L̂_ij = Re ∫ g_i · û_j dS` from one response per basis load.
/// Missing channels are filled per side and axis by natural-spline interpolation
/// where at least four channels of that line reported.
pub fn assemble_measured_ntd<T: Real>(
    responses: &[LoadResponse<T>],
    layout: &SensorLayout<T>,
    basis: &LoadBasis<T>,
    mesh: &Mesh<T>,
    omega: T,
) -> Result<MeasuredNtd<T>> {
    let m = basis.len();
    let mut by_load: Vec<Option<&LoadResponse<T>>> = vec![None; m];
    for r in responses {
        if r.values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "response to load {} has {} channels, layout has {}",
                r.load,
                r.values.len(),
                layout.len()
            )));
        }
        let slot = by_load
            .get_mut(r.load)
            .ok_or_else(|| Error::Dimension(format!("response to unknown load {}", r.load)))?;
        if slot.is_some() {
            return Err(Error::Dimension(format!(
                "load {} has more than one response",
                r.load
            )));
        }
        *slot = Some(r);
    }
    if let Some(j) = by_load.iter().position(Option::is_none) {
        return Err(Error::Coverage(format!(
            "no record excites basis load {} ({})",
            j, basis.labels[j]
        )));
    }
    let lines = layout.lines(mesh);
    let ext = mesh.extent();
    let tol = ext[0].max(ext[1]) * T::lit(1e-9);

    let mut filled = 0;
    let mut completed: Vec<Vec<Option<Complex<T>>>> = Vec::with_capacity(m);
    for r in by_load.iter().flatten() {
        let mut v = r.values.clone();
        for line in &lines {
            let known = line.members.iter().filter(|(c, _)| v[*c].is_some()).count();
            if known == line.members.len() || known < super::spline::MIN_KNOTS {
                continue;
            }
            let pos: Vec<T> = line.members.iter().map(|&(_, a)| a).collect();
            let vals: Vec<Option<Complex<T>>> = line.members.iter().map(|&(c, _)| v[c]).collect();
            let full = interpolate_missing(&pos, &vals)?;
            for (&(c, _), z) in line.members.iter().zip(full) {
                if v[c].is_none() {
                    v[c] = Some(z);
                    filled += 1;
                }
            }
        }
        completed.push(v);
    }

    let probes: Vec<Vec<Probe<T>>> = (0..m)
        .map(|i| load_probes(i, basis, mesh, &lines))
        .collect::<Result<_>>()?;
    let mut re = Matrix::zeros(m, m);
    let mut im = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = Complex::new(T::zero(), T::zero());
            for &(line, s, w) in &probes[i] {
                acc = acc + trace_at(&lines[line], &completed[j], s, tol)? * w;
            }
            re[(i, j)] = acc.re;
            im[(i, j)] = acc.im;
        }
    }
    let asymmetry = re.symmetry_defect();
    let re = re.symmetrized();
    let imaginary_norm = spectral_norm_symmetric(&im.symmetrized())?;
    let re_norm = spectral_norm_symmetric(&re)?;
    Ok(MeasuredNtd {
        matrix: NtdMatrix {
            entries: re,
            omega,
            kind: NtdKind::Measured,
        },
        imaginary_norm,
        relative_imaginary: if re_norm > T::zero() {
            imaginary_norm / re_norm
        } else {
            T::zero()
        },
        asymmetry,
        filled,
    })
}
