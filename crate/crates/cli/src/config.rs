//! Run configuration (`elastoscan-run v1`).
//!
//! ```text
//! elastoscan-run v1
//! geometry = plate.txt        # omitted: built-in 0.30 m plate
//! edge_pads = 5 0.02          # pads per side and pad length; 0 keeps the geometry's patches
//! cell_size = 0.01
//! phantom = center_disc       # center_disc | two_discs | none | <path>
//! disc_diameter = 0.12       # omitted: 0.12 (center disc) or 0.10 (two discs)
//! frequencies = 21 41 55.4
//! interpret_hz = true
//! alpha_scales = 0.01 0.1     # α_λ = α_μ = s·Δλ per sweep member
//! rho_sign = -1
//! threshold = 6               # strict count bound, or auto
//! delta = 0                   # absolute eigenvalue threshold; omitted: noise level
//! noise = 0                   # injected noise relative to the background NtD norm
//! seed = 1
//! grid = 5 5
//! ```
//! Relative paths resolve against the configuration file's directory.

use std::path::{Path, PathBuf};

use elastoscan::config::Document;
use elastoscan::monotonicity::Threshold;
use elastoscan::ntd::BasisSpec;
use elastoscan::pipeline::{AnalysisBands, Window};
use elastoscan::synthetic::ToneProfile;
use elastoscan::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSource {
    CenterDisc,
    TwoDiscs,
    None,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: Option<PathBuf>,
    /// Pads per lateral side and pad length, replacing the geometry's Neumann patches.
    pub edge_pads: Option<(usize, f64)>,
    pub cell_size: f64,
    pub phantom: PhantomSource,
    pub disc_diameter: Option<f64>,
    pub frequencies: Vec<f64>,
    pub interpret_hz: bool,
    pub alpha_scales: Vec<f64>,
    /// Defaults to the inclusion's density increment.
    pub alpha_rho: Option<f64>,
    pub rho_sign: f64,
    pub threshold: Threshold,
    /// Absolute eigenvalue threshold; `None` uses the injected noise level.
    pub delta: Option<f64>,
    /// Injected noise norm relative to the background NtD norm.
    pub noise: f64,
    pub seed: u64,
    pub grid: (usize, usize),
    pub basis: BasisSpec,
    pub bands: AnalysisBands,
    pub window: Window,
    pub tone: ToneProfile<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: None,
            edge_pads: Some((5, 0.02)),
            cell_size: 0.01,
            phantom: PhantomSource::CenterDisc,
            disc_diameter: None,
            frequencies: vec![21.0, 41.0, 55.4],
            interpret_hz: true,
            alpha_scales: vec![1e-2, 1e-1],
            alpha_rho: None,
            rho_sign: -1.0,
            threshold: Threshold::Strict(6),
            delta: None,
            noise: 0.0,
            seed: 1,
            grid: (5, 5),
            basis: BasisSpec::default(),
            bands: AnalysisBands::default(),
            window: Window::Hann,
            tone: ToneProfile::new(21.0),
        }
    }
}

const KEYS: &[&str] = &[
    "geometry",
    "edge_pads",
    "cell_size",
    "phantom",
    "disc_diameter",
    "frequencies",
    "interpret_hz",
    "alpha_scales",
    "alpha_rho",
    "rho_sign",
    "threshold",
    "delta",
    "noise",
    "seed",
    "grid",
    "groups_per_patch",
    "unit_force",
    "bands",
    "window",
    "tone",
];

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_threshold(s: &str) -> Option<Threshold> {
    if s == "auto" {
        Some(Threshold::Auto)
    } else {
        s.parse().ok().map(Threshold::Strict)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let doc = Document::parse(text)?;
        doc.expect_kind("run", 1)?;
        doc.check_known(KEYS, &[])?;
        let mut c = Self::default();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if let Some(e) = doc.get("geometry") {
            c.geometry = Some(resolve(&e.value));
        }
        if let Some(e) = doc.get("edge_pads") {
            let v: Vec<f64> = e.parse_list()?;
            c.edge_pads = match v.as_slice() {
                [n] if *n == 0.0 => None,
                [n, len] if *n >= 1.0 && n.fract() == 0.0 && *len > 0.0 => {
                    Some((*n as usize, *len))
                }
                [n, _] if *n == 0.0 => None,
                _ => return Err(bad(e.line, "edge_pads expects `<count> <length>` or 0")),
            };
        }
        c.cell_size = doc.scalar_or("cell_size", c.cell_size)?;
        if let Some(e) = doc.get("phantom") {
            c.phantom = match e.value.as_str() {
                "center_disc" => PhantomSource::CenterDisc,
                "two_discs" => PhantomSource::TwoDiscs,
                "none" => PhantomSource::None,
                other => PhantomSource::File(resolve(other)),
            };
        }
        if let Some(e) = doc.get("disc_diameter") {
            c.disc_diameter = Some(e.parse_one()?);
        }
        if let Some(e) = doc.get("frequencies") {
            c.frequencies = e.parse_list()?;
            if c.frequencies.is_empty() || c.frequencies.iter().any(|f| !(*f > 0.0)) {
                return Err(bad(e.line, "frequencies must be positive"));
            }
        }
        c.interpret_hz = doc.scalar_or("interpret_hz", c.interpret_hz)?;
        if let Some(e) = doc.get("alpha_scales") {
            c.alpha_scales = e.parse_list()?;
            if c.alpha_scales.is_empty() || c.alpha_scales.iter().any(|s| !(*s >= 0.0)) {
                return Err(bad(e.line, "alpha_scales must be non-negative"));
            }
        }
        if let Some(e) = doc.get("alpha_rho") {
            c.alpha_rho = Some(e.parse_one()?);
        }
        c.rho_sign = doc.scalar_or("rho_sign", c.rho_sign)?;
        if c.rho_sign.abs() != 1.0 {
            return Err(bad(
                doc.require("rho_sign")?.line,
                "rho_sign must be 1 or -1",
            ));
        }
        if let Some(e) = doc.get("threshold") {
            c.threshold = parse_threshold(&e.value)
                .ok_or_else(|| bad(e.line, "threshold must be `auto` or a count"))?;
        }
        if let Some(e) = doc.get("delta") {
            let d: f64 = e.parse_one()?;
            if !(d >= 0.0) {
                return Err(bad(e.line, "delta must be non-negative"));
            }
            c.delta = Some(d);
        }
        c.noise = doc.scalar_or("noise", c.noise)?;
        if !(c.noise >= 0.0) {
            return Err(bad(
                doc.require("noise")?.line,
                "noise must be non-negative",
            ));
        }
        c.seed = doc.scalar_or("seed", c.seed)?;
        if let Some(e) = doc.get("grid") {
            let v: Vec<usize> = e.parse_fixed(2)?;
            c.grid = (v[0], v[1]);
        }
        c.basis.groups_per_patch = doc.scalar_or("groups_per_patch", c.basis.groups_per_patch)?;
        c.basis.unit_force = doc.scalar_or("unit_force", c.basis.unit_force)?;
        if let Some(e) = doc.get("bands") {
            let v: Vec<f64> = e.parse_list()?;
            if v.is_empty() || v.len() % 2 != 0 || v.chunks(2).any(|b| b[0] > b[1]) {
                return Err(bad(e.line, "bands expects pairs `lo hi` in Hz"));
            }
            c.bands = AnalysisBands(v.chunks(2).map(|b| (b[0], b[1])).collect());
        }
        if let Some(e) = doc.get("window") {
            c.window = match e.value.as_str() {
                "hann" => Window::Hann,
                "rectangular" => Window::Rectangular,
                _ => return Err(bad(e.line, "window must be `hann` or `rectangular`")),
            };
        }
        if let Some(e) = doc.get("tone") {
            let v: Vec<f64> = e.parse_fixed(5)?;
            if v.iter().any(|x| !(*x >= 0.0)) || v[0] <= 0.0 || v[3] <= 0.0 {
                return Err(bad(
                    e.line,
                    "tone expects `rate amplitude lead active tail` (positive rate and duration)",
                ));
            }
            c.tone = ToneProfile {
                rate: v[0],
                frequency: c.tone.frequency,
                amplitude: v[1],
                lead: v[2],
                active: v[3],
                tail: v[4],
            };
        }
        Ok(c)
    }

    pub fn to_document(&self) -> Document {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut d = Document::new("run", 1);
        if let Some(g) = &self.geometry {
            d.push(None, "geometry", g.display().to_string());
        }
        d.push(
            None,
            "edge_pads",
            self.edge_pads
                .map_or("0".to_string(), |(n, l)| format!("{n} {l}")),
        );
        d.push(None, "cell_size", self.cell_size.to_string());
        d.push(
            None,
            "phantom",
            match &self.phantom {
                PhantomSource::CenterDisc => "center_disc".to_string(),
                PhantomSource::TwoDiscs => "two_discs".to_string(),
                PhantomSource::None => "none".to_string(),
                PhantomSource::File(p) => p.display().to_string(),
            },
        );
        if let Some(x) = self.disc_diameter {
            d.push(None, "disc_diameter", x.to_string());
        }
        d.push(None, "frequencies", list(&self.frequencies));
        d.push(None, "interpret_hz", self.interpret_hz.to_string());
        d.push(None, "alpha_scales", list(&self.alpha_scales));
        if let Some(a) = self.alpha_rho {
            d.push(None, "alpha_rho", a.to_string());
        }
        d.push(None, "rho_sign", self.rho_sign.to_string());
        d.push(
            None,
            "threshold",
            match self.threshold {
                Threshold::Auto => "auto".to_string(),
                Threshold::Strict(m) => m.to_string(),
            },
        );
        if let Some(x) = self.delta {
            d.push(None, "delta", x.to_string());
        }
        d.push(None, "noise", self.noise.to_string());
        d.push(None, "seed", self.seed.to_string());
        d.push(None, "grid", format!("{} {}", self.grid.0, self.grid.1));
        d.push(
            None,
            "groups_per_patch",
            self.basis.groups_per_patch.to_string(),
        );
        d.push(None, "unit_force", self.basis.unit_force.to_string());
        let bands: Vec<f64> = self.bands.0.iter().flat_map(|&(a, b)| [a, b]).collect();
        d.push(None, "bands", list(&bands));
        d.push(
            None,
            "window",
            match self.window {
                Window::Hann => "hann",
                Window::Rectangular => "rectangular",
            },
        );
        let t = &self.tone;
        d.push(
            None,
            "tone",
            format!(
                "{} {} {} {} {}",
                t.rate, t.amplitude, t.lead, t.active, t.tail
            ),
        );
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_document().render();
        let back = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err =
            RunConfig::parse("elastoscan-run v1\nfrobnicate = 1\n", Path::new(".")).unwrap_err();
        assert!(
            matches!(err, Error::Parse { line: 2, .. } | Error::Schema(_)),
            "{err:?}"
        );
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let c = RunConfig::parse(
            "elastoscan-run v1\ngeometry = g.txt\nthreshold = auto\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.geometry, Some(PathBuf::from("/cfg/g.txt")));
        assert_eq!(c.threshold, Threshold::Auto);
    }
}
