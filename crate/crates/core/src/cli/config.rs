//! TOML run configuration with strict key checking.

use crate::error::{Error, Result};
use crate::fock::{AngularMode, ModeGrid};
use crate::model::{normalize_gap_to, AtomSpec, CouplingSpec, Kappa, KappaKind};
use crate::num::{c, C64};
use crate::rg::RGConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Complex {
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl Complex {
    pub fn value(&self) -> C64 {
        c(self.re, self.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Two-level toy with a scalar dipole (radial grid).
    Matrix,
    /// Two-level toy with a vector dipole (full angular grid).
    MatrixVector,
    Hydrogen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaConfig {
    #[serde(rename = "type")]
    pub kind: KappaKind,
    pub scale: f64,
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig { kind: KappaKind::Exponential, scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: ModelMode,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub n_grid: Option<usize>,
    #[serde(default, rename = "box")]
    pub box_len: Option<f64>,
    /// Atomic gap after rescaling (hydrogen is always rescaled; default 1).
    #[serde(default)]
    pub gap: Option<f64>,
    #[serde(default)]
    pub g: Complex,
    #[serde(default)]
    pub theta: Complex,
    #[serde(default)]
    pub alpha: Complex,
    #[serde(default)]
    pub kappa: KappaConfig,
    #[serde(default = "one")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularConfig {
    Radial,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "J")]
    pub j: usize,
    pub rho_grid: f64,
    #[serde(default = "one")]
    pub k_max: f64,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_angular")]
    pub angular_mode: AngularConfig,
    #[serde(default)]
    pub n_dirs: Option<usize>,
}

fn default_n_r() -> usize {
    65
}

fn default_angular() -> AngularConfig {
    AngularConfig::Radial
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgSection {
    pub rho: Option<f64>,
    pub xi: Option<f64>,
    pub eps0: Option<f64>,
    #[serde(rename = "L_max", alias = "l_max")]
    pub l_max: Option<usize>,
    #[serde(rename = "M_max", alias = "m_max")]
    pub m_max: Option<usize>,
    pub cap: Option<usize>,
    pub tol_e: Option<f64>,
    pub max_iters: Option<usize>,
    pub min_iters: Option<usize>,
    pub z_nodes: Option<usize>,
    pub z_radius: Option<f64>,
    pub pair_n_max: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub enabled: bool,
}

fn default_n_max() -> usize {
    3
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { n_max: default_n_max(), enabled: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), formats: default_formats() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    G,
    Theta,
    Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub param: ScanParam,
    pub radius: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// O'Connor series parameter.
    #[serde(default = "half")]
    pub t: f64,
    #[serde(default = "default_terms")]
    pub n_terms: usize,
}

fn half() -> f64 {
    0.5
}

fn default_terms() -> usize {
    30
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig { t: half(), n_terms: default_terms() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub rg: RgSection,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub decay: Option<DecayConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn bad<T>(field: &str, why: &str) -> Result<T> {
    Err(Error::Config(format!("{field}: {why}")))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn rg_config(&self) -> RGConfig {
        let d = RGConfig::default();
        let r = &self.rg;
        let rho = r.rho.unwrap_or(self.grid.rho_grid);
        RGConfig {
            rho,
            xi: r.xi.unwrap_or(d.xi),
            eps0: r.eps0.unwrap_or(rho / 8.0),
            l_max: r.l_max.unwrap_or(d.l_max),
            m_max: r.m_max.unwrap_or(d.m_max),
            cap: r.cap.unwrap_or(d.cap),
            tol_e: r.tol_e.unwrap_or(d.tol_e),
            max_iters: r.max_iters.unwrap_or(d.max_iters),
            min_iters: r.min_iters.unwrap_or(d.min_iters),
            z_nodes: r.z_nodes.unwrap_or(d.z_nodes),
            z_radius: r.z_radius.unwrap_or(d.z_radius),
            n_r: self.grid.n_r,
            pair_n_max: r.pair_n_max.unwrap_or(d.pair_n_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match m.mode {
            ModelMode::Matrix | ModelMode::MatrixVector => {
                if m.d.is_some_and(|d| d != 2) {
                    return bad("model.d", "the built-in matrix atom has d = 2");
                }
                if m.n_grid.is_some() || m.box_len.is_some() {
                    return bad("model.n_grid", "only hydrogen mode takes n_grid/box");
                }
            }
            ModelMode::Hydrogen => {
                if m.n_grid.is_none_or(|n| n < 10) {
                    return bad("model.n_grid", "hydrogen mode needs n_grid >= 10");
                }
                if m.box_len.is_none_or(|b| !(b > 0.0)) {
                    return bad("model.box", "hydrogen mode needs a positive box length");
                }
                if m.d.is_some() {
                    return bad("model.d", "hydrogen mode does not take d");
                }
            }
        }
        if m.gap.is_some_and(|g| !(g >= 1.0)) {
            return bad("model.gap", "must be at least 1 (the photon cutoff)");
        }
        if !(m.kappa.scale > 0.0) {
            return bad("model.kappa.scale", "must be positive");
        }
        if !(m.beta > 0.0) {
            return bad("model.beta", "must be positive");
        }
        for (name, z) in [("model.g", m.g), ("model.theta", m.theta), ("model.alpha", m.alpha)] {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return bad(name, "must be finite");
            }
        }
        let g = &self.grid;
        if g.j == 0 {
            return bad("grid.J", "must be positive");
        }
        if !(g.rho_grid > 0.0 && g.rho_grid < 1.0) {
            return bad("grid.rho_grid", "must lie in (0, 1)");
        }
        if !(g.k_max > 0.0) {
            return bad("grid.k_max", "must be positive");
        }
        match (g.angular_mode, g.n_dirs) {
            (AngularConfig::Full, Some(n)) if n != 6 => return bad("grid.n_dirs", "the full grid uses the 6 axis directions"),
            (AngularConfig::Radial, Some(n)) if n != 1 => return bad("grid.n_dirs", "the radial grid has one direction"),
            _ => {}
        }
        let full = g.angular_mode == AngularConfig::Full;
        if full != (m.mode == ModelMode::MatrixVector) {
            return bad("grid.angular_mode", "matrix_vector runs on the full grid, the other modes on the radial grid");
        }
        if let Some(rho) = self.rg.rho {
            if (rho - g.rho_grid).abs() > 1e-15 {
                return bad("rg.rho", &format!("must equal grid.rho_grid ({} != {})", rho, g.rho_grid));
            }
        }
        self.rg_config().validate()?;
        if self.oracle.n_max == 0 {
            return bad("oracle.n_max", "must be positive");
        }
        if let Some(s) = &self.scan {
            if !(s.radius > 0.0) {
                return bad("scan.radius", "must be positive");
            }
            if s.nodes == 0 {
                return bad("scan.nodes", "must be positive");
            }
        }
        if let Some(d) = &self.decay {
            if !(d.t > 0.0) {
                return bad("decay.t", "must be positive");
            }
            if d.n_terms < 4 {
                return bad("decay.n_terms", "must be at least 4");
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ModeGrid> {
        let g = &self.grid;
        let ang = match g.angular_mode {
            AngularConfig::Radial => AngularMode::Radial,
            AngularConfig::Full => AngularMode::Full { n_dirs: 6 },
        };
        ModeGrid::build(g.j, g.rho_grid, g.k_max, ang)
    }

    pub fn atom(&self) -> Result<AtomSpec> {
        let m = &self.model;
        let a = match m.mode {
            ModelMode::Matrix => AtomSpec::matrix_toy(),
            ModelMode::MatrixVector => AtomSpec::matrix_toy_vector(),
            ModelMode::Hydrogen => AtomSpec::hydrogen_radial(m.n_grid.unwrap(), m.box_len.unwrap())?,
        };
        match (m.mode, m.gap) {
            (ModelMode::Hydrogen, g) => normalize_gap_to(&a, g.unwrap_or(1.0)),
            (_, Some(g)) => normalize_gap_to(&a, g),
            (_, None) => Ok(a),
        }
    }

    pub fn coupling(&self) -> CouplingSpec {
        let m = &self.model;
        CouplingSpec {
            g: m.g.value(),
            theta: m.theta.value(),
            alpha: m.alpha.value(),
            kappa: Kappa { kind: m.kappa.kind, scale: m.kappa.scale },
            beta: m.beta,
        }
    }
}
