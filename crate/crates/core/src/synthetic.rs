//! Material phantoms and controlled noise for synthetic experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Document;
use crate::error::{Error, Result};
use crate::fem::{DisplacementField, Material, MaterialField};
use crate::linalg::{spectral_norm_symmetric, Matrix};
use crate::mesh::{AxisBox, Mesh, PlateGeometry};
use crate::ntd::{LoadBasis, NtdKind, NtdMatrix};
use crate::pipeline::{load_resultant, Channel, RawRecord, SensorLayout, Series};
use crate::scalar::Real;

/// Polycarbonate plate material.
pub fn makrolon<T: Real>() -> Material<T> {
    Material::new(T::lit(2.8910e9), T::lit(1.1808e9), T::lit(1171.0))
}

/// Aluminum insert material.
pub fn aluminum<T: Real>() -> Material<T> {
    Material::new(T::lit(5.1084e10), T::lit(2.6316e10), T::lit(2700.0))
}

/// Footprint of an inclusion; every shape spans the full plate thickness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape<T> {
    Disc { center: [T; 2], diameter: T },
    Rect { min: [T; 2], max: [T; 2] },
}

impl<T: Real> Shape<T> {
    /// Closed membership of an in-plane point.
    pub fn contains(&self, p: [T; 2]) -> bool {
        match self {
            Shape::Disc { center, diameter } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                (dx * dx + dy * dy).sqrt() <= *diameter * T::half()
            }
            Shape::Rect { min, max } => (0..2).all(|a| p[a] >= min[a] && p[a] <= max[a]),
        }
    }

    /// In-plane bounding rectangle grown by `margin`.
    fn bounds(&self, margin: T) -> ([T; 2], [T; 2]) {
        match self {
            Shape::Disc { center, diameter } => {
                let r = *diameter * T::half() + margin;
                (
                    [center[0] - r, center[1] - r],
                    [center[0] + r, center[1] + r],
                )
            }
            Shape::Rect { min, max } => (
                [min[0] - margin, min[1] - margin],
                [max[0] + margin, max[1] + margin],
            ),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Shape::Disc { diameter, .. } => *diameter <= T::zero(),
            Shape::Rect { min, max } => max[0] <= min[0] || max[1] <= min[1],
        }
    }

    /// Relation of a box footprint to the shape.
    pub fn relation(&self, b: &AxisBox<T>) -> CellRelation {
        let corners = [
            [b.min[0], b.min[1]],
            [b.max[0], b.min[1]],
            [b.max[0], b.max[1]],
            [b.min[0], b.max[1]],
        ];
        match self {
            Shape::Disc { center, diameter } => {
                let r = *diameter * T::half();
                if corners.iter().all(|&c| self.contains(c)) {
                    return CellRelation::Inside;
                }
                let cx = center[0].max(b.min[0]).min(b.max[0]);
                let cy = center[1].max(b.min[1]).min(b.max[1]);
                let d = ((cx - center[0]).powi(2) + (cy - center[1]).powi(2)).sqrt();
                if d >= r {
                    CellRelation::Outside
                } else {
                    CellRelation::Partial
                }
            }
            Shape::Rect { min, max } => {
                if corners.iter().all(|&c| self.contains(c)) {
                    CellRelation::Inside
                } else if b.max[0] <= min[0]
                    || b.min[0] >= max[0]
                    || b.max[1] <= min[1]
                    || b.min[1] >= max[1]
                {
                    CellRelation::Outside
                } else {
                    CellRelation::Partial
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRelation {
    Inside,
    Outside,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inclusion<T> {
    pub shape: Shape<T>,
    /// Non-negative increments of λ, μ and ρ.
    pub perturbation: Material<T>,
}

/// Background material plus inclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom<T> {
    pub background: Material<T>,
    pub inclusions: Vec<Inclusion<T>>,
    /// `+1` adds the density increment, `−1` subtracts it.
    pub rho_sign: T,
}

impl<T: Real> Phantom<T> {
    pub fn homogeneous(background: Material<T>) -> Self {
        Self {
            background,
            inclusions: Vec::new(),
            rho_sign: T::one(),
        }
    }

    /// Material inside inclusion `k`.
    pub fn inclusion_material(&self, k: usize) -> Material<T> {
        let p = self.inclusions[k].perturbation;
        Material::new(
            self.background.lambda + p.lambda,
            self.background.mu + p.mu,
            self.background.rho + self.rho_sign * p.rho,
        )
    }

    /// Positivity, containment with a `margin` and pairwise disjointness.
    pub fn validate(&self, geometry: &PlateGeometry<T>, margin: T) -> Result<()> {
        self.background.validate()?;
        if self.rho_sign.abs() != T::one() {
            return Err(Error::InvalidMaterial(format!(
                "density sign must be ±1, got {}",
                self.rho_sign
            )));
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            let p = inc.perturbation;
            if p.lambda < T::zero() || p.mu < T::zero() || p.rho < T::zero() {
                return Err(Error::InvalidMaterial(format!(
                    "inclusion {k} has a negative increment"
                )));
            }
            self.inclusion_material(k).validate()?;
            let (lo, hi) = inc.shape.bounds(margin);
            if lo[0] <= T::zero()
                || lo[1] <= T::zero()
                || hi[0] >= geometry.length_x
                || hi[1] >= geometry.length_y
            {
                return Err(Error::Containment(format!(
                    "inclusion {k} is not compactly inside the plate"
                )));
            }
        }
        for i in 0..self.inclusions.len() {
            for j in (i + 1)..self.inclusions.len() {
                if overlaps(&self.inclusions[i].shape, &self.inclusions[j].shape) {
                    return Err(Error::Overlap(format!("inclusions {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    /// Relation of a box to the union of all inclusions.
    pub fn relation(&self, b: &AxisBox<T>) -> CellRelation {
        let rel: Vec<CellRelation> = self
            .inclusions
            .iter()
            .map(|i| i.shape.relation(b))
            .collect();
        if rel.contains(&CellRelation::Inside) {
            CellRelation::Inside
        } else if rel.iter().all(|&r| r == CellRelation::Outside) {
            CellRelation::Outside
        } else {
            CellRelation::Partial
        }
    }

    pub fn to_document(&self) -> Document {
        let f = |x: T| format!("{}", x.to_f64_lossy());
        let mut doc = Document::new("phantom", 1);
        let b = self.background;
        doc.push(
            None,
            "background",
            format!("{} {} {}", f(b.lambda), f(b.mu), f(b.rho)),
        );
        doc.push(None, "rho_sign", f(self.rho_sign));
        for (k, inc) in self.inclusions.iter().enumerate() {
            let p = inc.perturbation;
            let pert = format!("{} {} {}", f(p.lambda), f(p.mu), f(p.rho));
            let (section, geom) = match &inc.shape {
                Shape::Disc { center, diameter } => (
                    "disc",
                    format!("{} {} {}", f(center[0]), f(center[1]), f(*diameter)),
                ),
                Shape::Rect { min, max } => (
                    "rect",
                    format!("{} {} {} {}", f(min[0]), f(min[1]), f(max[0]), f(max[1])),
                ),
            };
            doc.push(Some(section), &format!("inc{k}"), format!("{geom} {pert}"));
        }
        doc
    }

    pub fn from_document(doc: &Document) -> Result<Self> {
        doc.expect_kind("phantom", 1)?;
        doc.check_known(&["background", "rho_sign"], &["disc", "rect"])?;
        let b: Vec<f64> = doc.require("background")?.parse_fixed(3)?;
        let mut p = Self::homogeneous(Material::new(T::lit(b[0]), T::lit(b[1]), T::lit(b[2])));
        p.rho_sign = T::lit(doc.scalar_or("rho_sign", 1.0)?);
        for e in &doc.entries {
            let (shape, rest) = match e.section.as_deref() {
                Some("disc") => {
                    let v: Vec<f64> = e.parse_fixed(6)?;
                    (
                        Shape::Disc {
                            center: [T::lit(v[0]), T::lit(v[1])],
                            diameter: T::lit(v[2]),
                        },
                        v[3..].to_vec(),
                    )
                }
                Some("rect") => {
                    let v: Vec<f64> = e.parse_fixed(7)?;
                    (
                        Shape::Rect {
                            min: [T::lit(v[0]), T::lit(v[1])],
                            max: [T::lit(v[2]), T::lit(v[3])],
                        },
                        v[4..].to_vec(),
                    )
                }
                _ => continue,
            };
            p.inclusions.push(Inclusion {
                shape,
                perturbation: Material::new(T::lit(rest[0]), T::lit(rest[1]), T::lit(rest[2])),
            });
        }
        Ok(p)
    }
}

fn overlaps<T: Real>(a: &Shape<T>, b: &Shape<T>) -> bool {
    match (a, b) {
        (
            Shape::Disc {
                center: c1,
                diameter: d1,
            },
            Shape::Disc {
                center: c2,
                diameter: d2,
            },
        ) => {
            let d = ((c1[0] - c2[0]).powi(2) + (c1[1] - c2[1]).powi(2)).sqrt();
            d < (*d1 + *d2) * T::half()
        }
        _ => {
            let (l1, h1) = a.bounds(T::zero());
            let (l2, h2) = b.bounds(T::zero());
            (0..2).all(|k| l1[k] < h2[k] && l2[k] < h1[k])
        }
    }
}

/// Centered full-thickness disc of `inclusion` material in a `background` plate.
pub fn phantom_center_disc<T: Real>(
    geometry: &PlateGeometry<T>,
    diameter: T,
    background: Material<T>,
    inclusion: Material<T>,
) -> Result<Phantom<T>> {
    let mut p = Phantom::homogeneous(background);
    let shape = Shape::Disc {
        center: [geometry.length_x * T::half(), geometry.length_y * T::half()],
        diameter,
    };
    if !shape.is_empty() {
        p.inclusions.push(Inclusion {
            shape,
            perturbation: inclusion.minus(&background),
        });
    }
    p.validate(geometry, T::zero())?;
    Ok(p)
}

/// Default centers of the two-disc sample, one per opposite corner region.
pub fn default_two_disc_centers<T: Real>() -> [[T; 2]; 2] {
    [[T::lit(0.09), T::lit(0.09)], [T::lit(0.21), T::lit(0.21)]]
}

/// Two equal discs at the given centers.
pub fn phantom_two_discs<T: Real>(
    geometry: &PlateGeometry<T>,
    diameter: T,
    centers: [[T; 2]; 2],
    background: Material<T>,
    inclusion: Material<T>,
) -> Result<Phantom<T>> {
    let mut p = Phantom::homogeneous(background);
    for c in centers {
        p.inclusions.push(Inclusion {
            shape: Shape::Disc {
                center: c,
                diameter,
            },
            perturbation: inclusion.minus(&background),
        });
    }
    p.validate(geometry, T::zero())?;
    Ok(p)
}

/// Element-wise material field; an element takes an inclusion's material iff its centroid lies in the shape.
pub fn materialize<T: Real>(phantom: &Phantom<T>, mesh: &Mesh<T>) -> MaterialField<T> {
    let mut field = MaterialField::uniform(mesh.num_elements(), phantom.background);
    for e in 0..mesh.num_elements() {
        let c = mesh.element_centroid(e);
        if let Some(k) = phantom
            .inclusions
            .iter()
            .position(|i| i.shape.contains([c[0], c[1]]))
        {
            field.set(e, phantom.inclusion_material(k));
        }
    }
    field
}

/// Seeded symmetric noise of prescribed spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub delta_target: T,
    pub seed: u64,
}

/// Fraction of the target the injected perturbation norm is scaled to.
pub const NOISE_FILL: f64 = 0.99;

/// `L + E` with `E` symmetric, `‖E‖₂ = 0.99 δ`.
pub fn add_noise<T: Real>(l: &NtdMatrix<T>, model: &NoiseModel<T>) -> Result<NtdMatrix<T>> {
    if model.delta_target < T::zero() || !model.delta_target.is_finite() {
        return Err(Error::InvalidMatrix(format!(
            "noise level {} must be non-negative",
            model.delta_target
        )));
    }
    let mut out = l.clone();
    out.kind = NtdKind::Measured;
    if model.delta_target == T::zero() {
        return Ok(out);
    }
    let m = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut e = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = T::lit(rng.gen_range(-1.0..1.0));
            e[(i, j)] = v;
            e[(j, i)] = v;
        }
    }
    let norm = spectral_norm_symmetric(&e)?;
    if norm == T::zero() {
        return Ok(out);
    }
    out.entries
        .add_scaled_assign(T::lit(NOISE_FILL) * model.delta_target / norm, &e);
    Ok(out)
}

/// Stepped-sine shaker record: silence, `active` seconds of `amplitude·sin(2πf(t − lead))`, silence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneProfile<T> {
    /// Hz
    pub rate: T,
    /// Hz
    pub frequency: T,
    /// N
    pub amplitude: T,
    /// s
    pub lead: T,
    /// s
    pub active: T,
    /// s
    pub tail: T,
}

impl<T: Real> ToneProfile<T> {
    pub fn new(frequency: T) -> Self {
        Self {
            rate: T::lit(500.0),
            frequency,
            amplitude: T::lit(400.0),
            lead: T::lit(0.25),
            active: T::lit(2.0),
            tail: T::lit(0.25),
        }
    }

    fn samples(&self) -> usize {
        ((self.lead + self.active + self.tail) * self.rate)
            .round()
            .to_usize()
            .unwrap_or(0)
            + 1
    }

    fn force_at(&self, t: T) -> T {
        if t < self.lead || t > self.lead + self.active {
            return T::zero();
        }
        self.amplitude * (T::lit(std::f64::consts::TAU) * self.frequency * (t - self.lead)).sin()
    }
}

/// Linear sine sweep from `f0` to `f1` Hz over `[lead, lead + active]`, silent elsewhere.
pub fn sweep_force<T: Real>(profile: &ToneProfile<T>, f0: T, f1: T) -> Series<T> {
    let time: Vec<T> = (0..profile.samples())
        .map(|k| T::from_count(k) / profile.rate)
        .collect();
    let rate_of_change = (f1 - f0) / profile.active;
    let values = time
        .iter()
        .map(|&t| {
            if t < profile.lead || t > profile.lead + profile.active {
                return T::zero();
            }
            let tau = t - profile.lead;
            let phase =
                T::lit(std::f64::consts::TAU) * (f0 * tau + T::half() * rate_of_change * tau * tau);
            profile.amplitude * phase.sin()
        })
        .collect();
    Series {
        name: "sweep".into(),
        time,
        values,
    }
}

/// Displacement per newton of shaker force at every layout channel, one row per basis load.
pub fn sensor_transfer<T: Real>(
    mesh: &Mesh<T>,
    basis: &LoadBasis<T>,
    solutions: &[DisplacementField<T>],
    layout: &SensorLayout<T>,
) -> Result<Vec<Vec<T>>> {
    if solutions.len() != basis.len() {
        return Err(Error::Dimension(format!(
            "{} solutions for {} basis loads",
            solutions.len(),
            basis.len()
        )));
    }
    basis
        .loads
        .iter()
        .zip(solutions)
        .map(|(load, u)| {
            let r = load_resultant(load, mesh);
            let a = (0..3).fold(0, |b, a| if r[a].abs() > r[b].abs() { a } else { b });
            if r[a] == T::zero() {
                return Err(Error::InvalidMatrix(
                    "basis load with zero resultant cannot be driven by a shaker".into(),
                ));
            }
            layout
                .channels
                .iter()
                .map(|c| {
                    let v = u.sample(mesh, &c.position).ok_or_else(|| {
                        Error::InvalidGeometry(format!("sensor `{}` lies outside the mesh", c.name))
                    })?;
                    Ok(v[c.axis.index()] / r[a])
                })
                .collect()
        })
        .collect()
}

/// Time record of one shaker driving `force_channel`, with displacement channels
/// `transfer[c] · force(t)` for every present layout channel.
pub fn tone_record<T: Real>(
    profile: &ToneProfile<T>,
    force_channel: &str,
    transfer: &[T],
    layout: &SensorLayout<T>,
    present: &[bool],
) -> Result<RawRecord<T>> {
    if transfer.len() != layout.len() || present.len() != layout.len() {
        return Err(Error::Dimension(format!(
            "{} transfer values and {} presence flags for {} channels",
            transfer.len(),
            present.len(),
            layout.len()
        )));
    }
    let time: Vec<T> = (0..profile.samples())
        .map(|k| T::from_count(k) / profile.rate)
        .collect();
    let force: Vec<T> = time.iter().map(|&t| profile.force_at(t)).collect();
    let displacement = layout
        .channels
        .iter()
        .zip(transfer)
        .zip(present)
        .filter(|(_, &p)| p)
        .map(|((c, &h), _)| Channel {
            name: c.name.clone(),
            values: force.iter().map(|&f| h * f).collect(),
        })
        .collect();
    Ok(RawRecord {
        time,
        force: vec![Channel {
            name: force_channel.to_string(),
            values: force,
        }],
        displacement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values_subtract() {
        let p = aluminum::<f64>().minus(&makrolon());
        assert!((p.lambda - 4.8193e10).abs() < 1.0);
        assert!((p.mu - 2.51352e10).abs() < 1.0);
        assert!((p.rho - 1529.0).abs() < 1e-9);
    }

    #[test]
    fn disc_relations() {
        let s = Shape::Disc {
            center: [0.15, 0.15],
            diameter: 0.12,
        };
        let cell = |ix: usize, iy: usize| AxisBox {
            min: [0.06 * ix as f64, 0.06 * iy as f64, 0.0],
            max: [0.06 * (ix + 1) as f64, 0.06 * (iy + 1) as f64, 0.01],
        };
        assert_eq!(s.relation(&cell(2, 2)), CellRelation::Inside);
        assert_eq!(s.relation(&cell(1, 2)), CellRelation::Partial);
        assert_eq!(s.relation(&cell(1, 1)), CellRelation::Partial);
        assert_eq!(s.relation(&cell(0, 0)), CellRelation::Outside);
        assert_eq!(s.relation(&cell(0, 2)), CellRelation::Outside);
    }

    #[test]
    fn sweep_window_is_recovered_by_trimming() {
        let profile = ToneProfile {
            rate: 1000.0_f64,
            frequency: 0.0,
            amplitude: 400.0,
            lead: 2.0,
            active: 30.0,
            tail: 1.5,
        };
        let f = sweep_force(&profile, 20.0, 57.0);
        let d = Series {
            name: "s01x".into(),
            time: f.time.clone(),
            values: f.values.iter().map(|v| v * 1e-9).collect(),
        };
        let r = crate::pipeline::trim_and_align(&[f], &[d]).unwrap();
        let dt = 1.0 / profile.rate;
        assert!((r.start - 2.0).abs() <= dt + 1e-12, "start {}", r.start);
        assert!((r.end() - 32.0).abs() <= dt + 1e-12, "end {}", r.end());
    }
}
