//! Run configuration: TOML (preferred) or JSON, validated before any
//! numerics run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wkahler_core::fixtures;
use wkahler_core::legendre::{FamilyReference, LiftMode, SGridSpec};
use wkahler_core::linalg::{Matd, Vecd};
use wkahler_core::potential::Correction;
use wkahler_core::quadrature::QuadOptions;
use wkahler_core::rng::substream;
use wkahler_core::sample::random_correction;
use wkahler_core::torus::{Facet, Polytope, Weight};

use crate::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// run the s-grid oracle next to every x-path functional
    #[serde(default)]
    pub oracle: bool,
    pub fixture: FixtureConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// φ as a sum of corrections of the reference symplectic potential
    #[serde(default)]
    pub potential: Vec<CorrectionConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureConfig {
    /// one of the named fixtures
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<String>,
    /// H-representation rows [u_1, .., u_n, λ] for ⟨u, x⟩ + λ ≥ 0
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chop: Vec<ChopConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChopConfig {
    pub vertex: Vec<f64>,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { kind: "constant".into(), params: vec![1.0] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub v: WeightConfig,
    #[serde(default)]
    pub w: WeightConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "d_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub grading_levels: usize,
    #[serde(default = "d_half")]
    pub sgrid_half_width: f64,
    #[serde(default = "d_points")]
    pub sgrid_points: usize,
    /// refinement factor applied to the quadrature order and s-grid spacing
    #[serde(default = "d_one")]
    pub scale: f64,
}

fn d_order() -> usize {
    8
}
// the box on which the s-grid oracles were validated
fn d_half() -> f64 {
    9.0
}
fn d_points() -> usize {
    145
}
fn d_one() -> f64 {
    1.0
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { quad_order: 8, grading_levels: 0, sgrid_half_width: d_half(), sgrid_points: d_points(), scale: 1.0 }
    }
}

impl GridConfig {
    pub fn quad(&self) -> QuadOptions {
        QuadOptions { order: ((self.quad_order as f64) * self.scale).ceil() as usize, grading_levels: self.grading_levels }
    }

    pub fn sgrid(&self) -> SGridSpec {
        // keep the box, shrink the spacing; odd counts keep s = 0 on the grid
        let cells = ((self.sgrid_points.max(2) - 1) as f64 * self.scale).round() as usize;
        SGridSpec { half_width: self.sgrid_half_width, points: cells + 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// relative part of the dual-path tolerance; the tail mass is added
    #[serde(default = "d_dual")]
    pub dual_path: f64,
    #[serde(default = "d_eaff")]
    pub energy_affine: f64,
    #[serde(default = "d_speed")]
    pub speed: f64,
    #[serde(default = "d_speed")]
    pub convexity: f64,
    #[serde(default = "d_lah")]
    pub lahdili: f64,
    #[serde(default = "d_speed")]
    pub calibration: f64,
}

fn d_dual() -> f64 {
    1e-6
}
fn d_eaff() -> f64 {
    1e-7
}
fn d_speed() -> f64 {
    1e-6
}
fn d_lah() -> f64 {
    1e-8
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { dual_path: 1e-6, energy_affine: 1e-7, speed: 1e-6, convexity: 1e-6, lahdili: 1e-8, calibration: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectionConfig {
    Zero,
    Constant { c: f64 },
    Affine { xi: Vec<f64>, c: f64 },
    /// a·|x − center|²
    Quadratic { center: Vec<f64>, a: f64 },
    LogSumExp { xis: Vec<Vec<f64>>, bs: Vec<f64>, tau: f64, amp: f64 },
    EllLogEll { u: Vec<f64>, lambda: f64, coef: f64 },
    /// seeded random convex correction; `seed` defaults to the run seed
    Random {
        amp: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        stream: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    Functionals {
        #[serde(default = "all_functionals")]
        names: Vec<String>,
        /// second potential for d₁ (defaults to φ = 0)
        #[serde(default)]
        other: Vec<CorrectionConfig>,
    },
    Curvature {},
    Geodesics {
        #[serde(default = "d_pairs")]
        pairs: usize,
        #[serde(default = "d_samples")]
        samples: usize,
    },
    Threshold {
        #[serde(default = "d_budget")]
        ray_budget: usize,
        #[serde(default = "d_tmax")]
        t_max: f64,
    },
    Family {
        /// vertices of P to chop, by coordinates
        corners: Vec<Vec<f64>>,
        /// ε_j = 2^{-j}, j = 1..=j_max, unless `eps` is given
        #[serde(default = "d_jmax")]
        j_max: usize,
        #[serde(default)]
        eps: Vec<f64>,
        #[serde(default = "d_reference")]
        reference: String,
        #[serde(default = "d_lift")]
        lift: String,
        #[serde(default = "d_window")]
        window: f64,
        #[serde(default)]
        psi: Vec<CorrectionConfig>,
        #[serde(default)]
        psi2: Vec<CorrectionConfig>,
        /// per-member coercivity thresholds
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<FamilyThreshold>,
    },
    Probes {
        #[serde(default = "d_probe_samples")]
        samples: usize,
        #[serde(default = "d_probe_order")]
        quad_order: usize,
        #[serde(default = "d_probe_points")]
        sgrid_points: usize,
    },
    Fano {
        vertex: Vec<f64>,
        eps: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyThreshold {
    #[serde(default = "d_budget")]
    pub ray_budget: usize,
    #[serde(default = "d_tmax")]
    pub t_max: f64,
    #[serde(default = "d_jmin")]
    pub j_min: usize,
}

pub const FUNCTIONALS: [&str; 8] = ["energy", "weighted_energy", "ricci_energy", "entropy", "mabuchi", "mabuchi_relative", "futaki", "d1"];

fn all_functionals() -> Vec<String> {
    FUNCTIONALS.iter().map(|s| s.to_string()).collect()
}
fn d_pairs() -> usize {
    10
}
fn d_samples() -> usize {
    5
}
fn d_budget() -> usize {
    64
}
fn d_tmax() -> f64 {
    50.0
}
fn d_jmax() -> usize {
    8
}
fn d_jmin() -> usize {
    4
}
fn d_reference() -> String {
    "matched".into()
}
fn d_lift() -> String {
    "restricted".into()
}
fn d_window() -> f64 {
    3.0
}
fn d_probe_samples() -> usize {
    200
}
fn d_probe_order() -> usize {
    4
}
fn d_probe_points() -> usize {
    33
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Functionals { .. } => "functionals",
            ExperimentConfig::Curvature {} => "curvature",
            ExperimentConfig::Geodesics { .. } => "geodesics",
            ExperimentConfig::Threshold { .. } => "threshold",
            ExperimentConfig::Family { .. } => "family",
            ExperimentConfig::Probes { .. } => "probes",
            ExperimentConfig::Fano { .. } => "fano",
        }
    }
}

// ------------------------------------------------------------------ parsing

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Parse TOML or JSON (by extension, else by the first non-blank byte).
pub fn parse(src: &str, path: Option<&Path>) -> Result<RunConfig, LabError> {
    let json = match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => true,
        Some("toml") => false,
        _ => src.trim_start().starts_with('{'),
    };
    if json {
        let de = &mut serde_json::Deserializer::from_str(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            LabError::Schema { line: Some(inner.line()), field: e.path().to_string(), msg: inner.to_string() }
        })
    } else {
        let de = toml::Deserializer::new(src);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            LabError::Schema {
                line: inner.span().map(|s| line_of(src, s.start)),
                field: e.path().to_string(),
                msg: inner.message().to_string(),
            }
        })
    }
}

pub fn load(path: &Path) -> Result<RunConfig, LabError> {
    let src = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    let cfg = parse(&src, Some(path))?;
    cfg.validate()?;
    Ok(cfg)
}

fn schema(field: &str, msg: impl Into<String>) -> LabError {
    LabError::Schema { line: None, field: field.into(), msg: msg.into() }
}

fn vecd(field: &str, v: &[f64], n: usize) -> Result<Vecd, LabError> {
    if v.len() != n {
        return Err(schema(field, format!("expected {n} components, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(schema(field, "non-finite component"));
    }
    Ok(Vecd::from_slice(v))
}

impl RunConfig {
    pub fn polytope(&self) -> Result<Polytope, LabError> {
        let f = &self.fixture;
        let mut p = match (&f.polytope, &f.facets) {
            (Some(name), None) => fixtures::by_name(name).map_err(|e| schema("fixture.polytope", e.to_string()))?,
            (None, Some(rows)) => {
                let n = rows.first().map(|r| r.len().saturating_sub(1)).unwrap_or(0);
                if !(1..=3).contains(&n) {
                    return Err(schema("fixture.facets", "rows must be [u_1, .., u_n, lambda] with 1 <= n <= 3"));
                }
                let mut fs = Vec::new();
                for (i, r) in rows.iter().enumerate() {
                    if r.len() != n + 1 {
                        return Err(schema(&format!("fixture.facets[{i}]"), format!("expected {} numbers", n + 1)));
                    }
                    fs.push(Facet::new(&r[..n], r[n]));
                }
                Polytope::new(n, fs).map_err(|e| schema("fixture.facets", e.to_string()))?
            }
            _ => return Err(schema("fixture", "give exactly one of `polytope` or `facets`")),
        };
        if !f.chop.is_empty() {
            let mut corners = Vec::new();
            for (i, c) in f.chop.iter().enumerate() {
                corners.push((vecd(&format!("fixture.chop[{i}].vertex"), &c.vertex, p.dim)?, c.eps));
            }
            p = p.chop_corners(&corners).map_err(|e| schema("fixture.chop", e.to_string()))?;
        }
        if !p.is_delzant() {
            return Err(schema("fixture", "polytope is not Delzant"));
        }
        Ok(p)
    }

    pub fn weight(&self, which: &str) -> Result<Weight, LabError> {
        let n = self.dim()?;
        let wc = if which == "v" { &self.weights.v } else { &self.weights.w };
        Weight::builtin(&wc.kind, n, &wc.params).map_err(|e| schema(&format!("weights.{which}"), e.to_string()))
    }

    pub fn dim(&self) -> Result<usize, LabError> {
        Ok(self.polytope()?.dim)
    }

    /// Static checks that need no numerics beyond building P.
    pub fn validate(&self) -> Result<(), LabError> {
        let p = self.polytope()?;
        let n = p.dim;
        for which in ["v", "w"] {
            let w = self.weight(which)?;
            let pts: Vec<Vecd> = p.vertices.iter().map(|v| v.x).collect();
            w.check_positive(pts.iter()).map_err(|e| schema(&format!("weights.{which}"), e.to_string()))?;
        }
        let g = &self.grid;
        if g.quad_order == 0 || g.quad_order > 64 {
            return Err(schema("grid.quad_order", "must be in 1..=64"));
        }
        if g.sgrid_points < 3 || !(g.sgrid_half_width > 0.0) {
            return Err(schema("grid", "s-grid needs >= 3 points and a positive half width"));
        }
        if !(g.scale > 0.0 && g.scale <= 8.0) {
            return Err(schema("grid.scale", "must be in (0, 8]"));
        }
        self.correction_checked("potential", &self.potential, n)?;
        for (i, e) in self.experiments.iter().enumerate() {
            let at = |f: &str| format!("experiments[{i}].{f}");
            match e {
                ExperimentConfig::Functionals { names, other } => {
                    for nm in names {
                        if !FUNCTIONALS.contains(&nm.as_str()) {
                            return Err(schema(&at("names"), format!("unknown functional '{nm}'")));
                        }
                    }
                    self.correction_checked(&at("other"), other, n)?;
                }
                ExperimentConfig::Geodesics { pairs, samples } => {
                    if *pairs == 0 || *samples < 3 {
                        return Err(schema(&at("samples"), "need pairs >= 1 and samples >= 3"));
                    }
                }
                ExperimentConfig::Threshold { ray_budget, t_max } => {
                    if *ray_budget == 0 || !(*t_max > 0.0) {
                        return Err(schema(&at("ray_budget"), "need ray_budget >= 1 and t_max > 0"));
                    }
                }
                ExperimentConfig::Family { corners, eps, reference, lift, psi, psi2, threshold, j_max, .. } => {
                    for (k, c) in corners.iter().enumerate() {
                        let x = vecd(&at(&format!("corners[{k}]")), c, n)?;
                        if p.vertex_index_near(x.as_slice()).is_none() {
                            return Err(schema(&at(&format!("corners[{k}]")), "not a vertex of P"));
                        }
                    }
                    if eps.is_empty() && *j_max == 0 {
                        return Err(schema(&at("j_max"), "empty family"));
                    }
                    parse_reference(reference).map_err(|m| schema(&at("reference"), m))?;
                    parse_lift(lift).map_err(|m| schema(&at("lift"), m))?;
                    self.correction_checked(&at("psi"), psi, n)?;
                    self.correction_checked(&at("psi2"), psi2, n)?;
                    if let Some(t) = threshold {
                        if t.ray_budget == 0 || !(t.t_max > 0.0) {
                            return Err(schema(&at("threshold"), "need ray_budget >= 1 and t_max > 0"));
                        }
                    }
                }
                ExperimentConfig::Probes { samples, quad_order, sgrid_points } => {
                    if *samples == 0 || *quad_order == 0 || *sgrid_points < 3 {
                        return Err(schema(&at("samples"), "need samples >= 1, quad_order >= 1, sgrid_points >= 3"));
                    }
                }
                ExperimentConfig::Fano { vertex, .. } => {
                    let x = vecd(&at("vertex"), vertex, n)?;
                    if p.vertex_index_near(x.as_slice()).is_none() {
                        return Err(schema(&at("vertex"), "not a vertex of P"));
                    }
                }
                ExperimentConfig::Curvature {} => {}
            }
        }
        Ok(())
    }

    fn correction_checked(&self, field: &str, cs: &[CorrectionConfig], n: usize) -> Result<(), LabError> {
        for (i, c) in cs.iter().enumerate() {
            let f = format!("{field}[{i}]");
            match c {
                CorrectionConfig::Affine { xi, .. } => drop(vecd(&f, xi, n)?),
                CorrectionConfig::Quadratic { center, .. } => drop(vecd(&f, center, n)?),
                CorrectionConfig::LogSumExp { xis, bs, tau, .. } => {
                    if xis.is_empty() || xis.len() != bs.len() || !(*tau > 0.0) {
                        return Err(schema(&f, "need matching non-empty xis/bs and tau > 0"));
                    }
                    for x in xis {
                        vecd(&f, x, n)?;
                    }
                }
                CorrectionConfig::EllLogEll { u, .. } => drop(vecd(&f, u, n)?),
                CorrectionConfig::Random { amp, .. } => {
                    if !(*amp >= 0.0) {
                        return Err(schema(&f, "amp must be >= 0"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Sum of the listed corrections; `Random` terms need the base state.
    pub fn correction(&self, cs: &[CorrectionConfig], base: &wkahler_core::legendre::KahlerState) -> Correction {
        let mut out = Correction::Zero;
        for c in cs {
            let h = match c {
                CorrectionConfig::Zero => Correction::Zero,
                CorrectionConfig::Constant { c } => Correction::Constant(*c),
                CorrectionConfig::Affine { xi, c } => Correction::Affine { xi: Vecd::from_slice(xi), c: *c },
                CorrectionConfig::Quadratic { center, a } => {
                    let n = center.len();
                    Correction::Quadratic { center: Vecd::from_slice(center), a: Matd::identity(n).scale(*a) }
                }
                CorrectionConfig::LogSumExp { xis, bs, tau, amp } => Correction::LogSumExp {
                    xis: xis.iter().map(|x| Vecd::from_slice(x)).collect(),
                    bs: bs.clone(),
                    tau: *tau,
                    amp: *amp,
                },
                CorrectionConfig::EllLogEll { u, lambda, coef } => {
                    Correction::EllLogEll { u: Vecd::from_slice(u), lambda: *lambda, coef: *coef }
                }
                CorrectionConfig::Random { amp, seed, stream } => {
                    let mut r = substream(seed.unwrap_or(self.seed), *stream);
                    random_correction(&mut r, base, *amp)
                }
            };
            if !h.is_zero() {
                out = out.plus(h);
            }
        }
        out
    }

    /// Canonical JSON used for hashing.
    pub fn canonical(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_value(&c).expect("config serialises")
    }

    /// The config with the fields `verify` tolerates blanked out.
    pub fn structural(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_dir = None;
        c.seed = 0;
        c.oracle = false;
        c.grid.scale = 1.0;
        serde_json::to_value(&c).expect("config serialises")
    }
}

pub fn parse_reference(s: &str) -> Result<FamilyReference, String> {
    match s {
        "matched" => Ok(FamilyReference::Matched),
        "guillemin" => Ok(FamilyReference::Guillemin),
        o => Err(format!("unknown reference '{o}' (matched | guillemin)")),
    }
}

pub fn parse_lift(s: &str) -> Result<LiftMode, String> {
    match s {
        "restricted" => Ok(LiftMode::Restricted),
        "scaled" => Ok(LiftMode::Scaled),
        o => Err(format!("unknown lift '{o}' (restricted | scaled)")),
    }
}
