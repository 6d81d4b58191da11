//! Reconstruction reports: schema-versioned JSON and an SVG rendering of the box grid.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TestInclusionGrid;
use crate::monotonicity::{AssumptionReport, ReconstructionResult, Threshold};
use crate::ntd::FrechetDirection;
use crate::synthetic::{CellRelation, Shape};

pub const REPORT_SCHEMA: &str = "elastoscan-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub directions: Vec<FrechetDirection<f64>>,
    pub delta: f64,
    pub threshold: Threshold,
    /// Strict threshold in effect per sweep member.
    pub thresholds_used: Vec<Option<usize>>,
    pub basis_size: usize,
    pub grid: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxReport {
    pub id: usize,
    pub cell: [usize; 2],
    /// In-plane footprint, m.
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub inside: bool,
    /// Negative-eigenvalue count per sweep member.
    pub counts: Vec<usize>,
    /// Ascending eigenvalues of the test matrix per sweep member.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Relation to the phantom when the data are synthetic.
    pub truth: Option<CellRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub schema: String,
    /// Seconds since the Unix epoch; omitted in reproducible mode.
    pub generated_unix_s: Option<u64>,
    pub frequency_hz: f64,
    pub omega: f64,
    /// Plate footprint, m.
    pub plate: [f64; 2],
    pub data_source: String,
    pub parameters: ReportParameters,
    pub assumption: Option<AssumptionReport>,
    pub null_data: bool,
    pub accepted: Vec<usize>,
    /// Face-connected groups of accepted boxes.
    pub components: Vec<Vec<usize>>,
    pub boxes: Vec<BoxReport>,
    pub inclusions: Vec<Shape<f64>>,
    pub warnings: Vec<String>,
}

/// Everything a report needs beyond the reconstruction itself.
#[derive(Debug, Clone, Default)]
pub struct ReportContext {
    pub frequency_hz: f64,
    pub plate: [f64; 2],
    pub basis_size: usize,
    pub data_source: String,
    pub assumption: Option<AssumptionReport>,
    pub inclusions: Vec<Shape<f64>>,
    pub warnings: Vec<String>,
    pub generated_unix_s: Option<u64>,
}

/// Face-connected components of accepted boxes in an `nx × ny` grid, each sorted, ordered by smallest id.
pub fn box_components(nx: usize, ny: usize, accepted: &[usize]) -> Vec<Vec<usize>> {
    let mut on = vec![false; nx * ny];
    for &k in accepted {
        if k < on.len() {
            on[k] = true;
        }
    }
    let mut seen = vec![false; nx * ny];
    let mut out = Vec::new();
    for start in 0..nx * ny {
        if !on[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            comp.push(k);
            let (ix, iy) = (k % nx, k / nx);
            let mut nb = Vec::with_capacity(4);
            if ix > 0 {
                nb.push(k - 1);
            }
            if ix + 1 < nx {
                nb.push(k + 1);
            }
            if iy > 0 {
                nb.push(k - nx);
            }
            if iy + 1 < ny {
                nb.push(k + nx);
            }
            for n in nb {
                if on[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn build_report(
    grid: &TestInclusionGrid<f64>,
    result: &ReconstructionResult<f64>,
    ctx: ReportContext,
) -> ReconstructionReport {
    let boxes = result
        .outcomes
        .iter()
        .map(|o| {
            let b = &grid.boxes[o.box_id];
            let (ix, iy) = grid.cell_of(o.box_id);
            let truth = (!ctx.inclusions.is_empty()).then(|| {
                let rel: Vec<CellRelation> = ctx.inclusions.iter().map(|s| s.relation(b)).collect();
                if rel.contains(&CellRelation::Inside) {
                    CellRelation::Inside
                } else if rel.contains(&CellRelation::Partial) {
                    CellRelation::Partial
                } else {
                    CellRelation::Outside
                }
            });
            BoxReport {
                id: o.box_id,
                cell: [ix, iy],
                min: [b.min[0], b.min[1]],
                max: [b.max[0], b.max[1]],
                inside: o.inside,
                counts: o.sweep.iter().map(|s| s.negative_count).collect(),
                eigenvalues: o.sweep.iter().map(|s| s.eigenvalues.clone()).collect(),
                truth,
            }
        })
        .collect();
    let mut warnings = ctx.warnings;
    if result.null_data {
        warnings.push(
            "measured data equal the background data (null data); every count is zero".into(),
        );
    }
    if let Some(a) = &ctx.assumption {
        if !a.holds {
            warnings.push(format!(
                "frequency assumption fails: stiffness side {:e} does not exceed inertia side {:e}",
                a.lhs, a.rhs
            ));
        }
    }
    ReconstructionReport {
        schema: REPORT_SCHEMA.into(),
        generated_unix_s: ctx.generated_unix_s,
        frequency_hz: ctx.frequency_hz,
        omega: result.omega,
        plate: ctx.plate,
        data_source: ctx.data_source,
        parameters: ReportParameters {
            directions: result.settings.directions.clone(),
            delta: result.settings.delta,
            threshold: result.settings.threshold,
            thresholds_used: result.thresholds.clone(),
            basis_size: ctx.basis_size,
            grid: [grid.nx, grid.ny],
        },
        assumption: ctx.assumption,
        null_data: result.null_data,
        accepted: result.accepted.clone(),
        components: box_components(grid.nx, grid.ny, &result.accepted),
        boxes,
        inclusions: ctx.inclusions,
        warnings,
    }
}

impl ReconstructionReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(REPORT_SCHEMA) => {}
            Some(other) => {
                return Err(Error::Schema(format!(
                    "unsupported report schema `{other}`"
                )))
            }
            None => return Err(Error::Schema("report has no schema field".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))
    }
}

const ACCEPTED: &str = "#d62728";
const REJECTED: &str = "#2ca02c";

/// Plate view of the box grid: red boxes accepted, green rejected, phantom outlines dashed.
pub fn render_grid_svg(report: &ReconstructionReport) -> String {
    let scale = 1000.0 / report.plate[0].max(report.plate[1]).max(1e-9) * 0.4;
    let margin = 20.0;
    let legend = 60.0;
    let (w, h) = (report.plate[0] * scale, report.plate[1] * scale);
    let width = w + 2.0 * margin;
    let height = h + 2.0 * margin + legend;
    // plate y grows upwards, SVG y downwards
    let px = |x: f64| margin + x * scale;
    let py = |y: f64| margin + h - y * scale;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<title>Reconstruction at {:.3} Hz</title>"#,
        report.frequency_hz
    );
    for b in &report.boxes {
        let fill = if b.inside { ACCEPTED } else { REJECTED };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="black" stroke-width="1"><title>box {} counts {:?}</title></rect>"#,
            px(b.min[0]),
            py(b.max[1]),
            (b.max[0] - b.min[0]) * scale,
            (b.max[1] - b.min[1]) * scale,
            b.id,
            b.counts
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="white">{}</text>"#,
            px(0.5 * (b.min[0] + b.max[0])),
            py(0.5 * (b.min[1] + b.max[1])) + 4.0,
            b.counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("/")
        );
    }
    for shape in &report.inclusions {
        match shape {
            Shape::Disc { center, diameter } => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="6 4"/>"#,
                    px(center[0]),
                    py(center[1]),
                    0.5 * diameter * scale
                );
            }
            Shape::Rect { min, max } => {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="2" stroke-dasharray="6 4"/>"#,
                    px(min[0]),
                    py(max[1]),
                    (max[0] - min[0]) * scale,
                    (max[1] - min[1]) * scale
                );
            }
        }
    }
    let ly = margin + h + 20.0;
    let _ = writeln!(
        s,
        r#"<rect x="{margin:.1}" y="{:.1}" width="14" height="14" fill="{ACCEPTED}"/><text x="{:.1}" y="{:.1}">inside (accepted)</text>"#,
        ly - 11.0,
        margin + 20.0,
        ly
    );
    let _ = writeln!(
        s,
        r#"<rect x="{:.1}" y="{:.1}" width="14" height="14" fill="{REJECTED}"/><text x="{:.1}" y="{:.1}">outside (rejected)</text>"#,
        margin + 150.0,
        ly - 11.0,
        margin + 170.0,
        ly
    );
    let _ = writeln!(
        s,
        r#"<text x="{margin:.1}" y="{:.1}">{:.3} Hz, delta {:e}, box labels: negative counts per sweep member</text>"#,
        ly + 22.0,
        report.frequency_hz,
        report.parameters.delta
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_of_diagonal_boxes_are_separate() {
        // 5×5 grid, boxes (1,1) and (3,3)
        assert_eq!(box_components(5, 5, &[6, 18]), vec![vec![6], vec![18]]);
        assert_eq!(
            box_components(5, 5, &[6, 7, 12, 18]),
            vec![vec![6, 7, 12], vec![18]]
        );
        assert_eq!(box_components(5, 5, &[]), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn row_wrap_is_not_adjacency() {
        assert_eq!(box_components(5, 5, &[4, 5]), vec![vec![4], vec![5]]);
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let err = ReconstructionReport::from_json(r#"{"schema":"other/9"}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }
}
