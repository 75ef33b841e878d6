//! Run configuration: a TOML document with a `schema_version` key. Unknown keys
//! are rejected and every default is written back into the effective config.

use bandframe::model::{builtin, HoppingTable, BUILTIN_MODELS};
use bandframe::phases::FluctuationPotential;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub family: FamilySection,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub magnetic: MagneticSection,
    #[serde(default, rename = "box")]
    pub lattice_box: BoxSection,
    #[serde(default)]
    pub window: WindowSection,
    #[serde(default)]
    pub butterfly: ButterflySection,
    #[serde(default)]
    pub schur: SchurSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub limits: LimitsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Built-in model name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// JSON model file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Replaces the model's energy shift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { name: Some("qwz".into()), path: None, shift: None }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Points per axis; defaults to `box.L`.
    pub n_k: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub k0: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub gap_tol: f64,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self { k0: 1, n: 0, gap_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    /// Defaults to `N + 1`.
    #[serde(rename = "nB_start")]
    pub nb_start: Option<usize>,
    #[serde(rename = "A_min")]
    pub a_min: f64,
    pub jump_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self { nb_start: None, a_min: 1e-3, jump_max: 0.75, seed: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluctSection {
    /// `A(x) = a (sin(2 pi x_2 / n), sin(2 pi x_1 / n))`.
    pub amplitude: f64,
    pub period: usize,
    /// Explicit potential; replaces the sine form when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<FluctuationPotential>,
}

impl Default for FluctSection {
    fn default() -> Self {
        Self { amplitude: 0.6, period: 8, potential: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagneticSection {
    pub b: f64,
    /// Flux per plaquette `2 pi p / q` for each `[p, q]`; `eps = flux / b`.
    pub flux: Option<Vec<[i64; 2]>>,
    /// Explicit `eps` values; overrides `flux`.
    pub eps_list: Option<Vec<f64>>,
    pub c: f64,
    #[serde(default)]
    pub fluct: FluctSection,
}

impl Default for MagneticSection {
    fn default() -> Self {
        Self { b: 1.0, flux: None, eps_list: None, c: 0.0, fluct: FluctSection::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxSection {
    #[serde(rename = "L")]
    pub l: usize,
    pub boundary: String,
}

impl Default for BoxSection {
    fn default() -> Self {
        Self { l: 64, boundary: "magnetic-periodic".into() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    /// Defaults to `d0 / 8`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ButterflySection {
    pub q_max: usize,
    /// Smallest box side; each flux uses the next multiple of `q`.
    pub min_l: usize,
    /// Effective hoppings below this shell norm are dropped.
    pub tail_tol: f64,
}

impl Default for ButterflySection {
    fn default() -> Self {
        Self { q_max: 8, min_l: 12, tail_tol: 1e-10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchurSection {
    pub n_grid: usize,
}

impl Default for SchurSection {
    fn default() -> Self {
        Self { n_grid: 200 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSection {
    pub times: Vec<f64>,
    pub seed: u64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self { times: vec![0.0, 1.0, 2.0, 4.0, 8.0], seed: 11 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    /// Largest box Hilbert-space dimension `L^d * M`.
    pub max_dim: usize,
    /// Largest number of grid points.
    pub max_grid: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self { max_dim: 1 << 16, max_grid: 1 << 16 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Frozen reference outputs for built-in models.
    pub reference_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), reference_dir: "reference".into() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelSection::default(),
            grid: GridSection::default(),
            family: FamilySection::default(),
            frame: FrameSection::default(),
            magnetic: MagneticSection::default(),
            lattice_box: BoxSection::default(),
            window: WindowSection::default(),
            butterfly: ButterflySection::default(),
            schur: SchurSection::default(),
            evolve: EvolveSection::default(),
            limits: LimitsSection::default(),
            output: OutputSection::default(),
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            err(if key == "." { "config" } else { &key }, inner.message().trim().to_string())
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fill derived defaults and check ranges.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(err("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        match (&self.model.name, &self.model.path) {
            (Some(_), Some(_)) => return Err(err("model", "give either `name` or `path`, not both")),
            (None, None) => return Err(err("model", "one of `name` or `path` is required")),
            (Some(n), None) if builtin(n).is_none() => {
                return Err(err("model.name", format!("unknown model `{n}`; built-ins are {}", BUILTIN_MODELS.join(", "))));
            }
            _ => {}
        }
        if self.family.k0 == 0 {
            return Err(err("family.k0", "band indices start at 1"));
        }
        if !(self.family.gap_tol > 0.0) {
            return Err(err("family.gap_tol", "must be positive"));
        }
        let l = self.lattice_box.l;
        if l < 4 || l % 2 != 0 {
            return Err(err("box.L", format!("must be even and at least 4, got {l}")));
        }
        if self.lattice_box.boundary != "magnetic-periodic" {
            return Err(err("box.boundary", "spectral comparisons run on magnetic-periodic boxes only"));
        }
        let n_k = *self.grid.n_k.get_or_insert(l);
        if n_k < 4 || n_k % 2 != 0 {
            return Err(err("grid.n_k", format!("must be even and at least 4, got {n_k}")));
        }
        let rank = self.family.n + 1;
        let nb = *self.frame.nb_start.get_or_insert(rank);
        if nb == 0 {
            return Err(err("frame.nB_start", "must be at least 1"));
        }
        if !(self.frame.a_min > 0.0) {
            return Err(err("frame.A_min", "must be positive"));
        }
        if !(self.frame.jump_max > 0.0) {
            return Err(err("frame.jump_max", "must be positive"));
        }
        let m = &mut self.magnetic;
        if !(m.b > 0.0) {
            return Err(err("magnetic.b", "must be positive"));
        }
        if !(0.0..=1.0).contains(&m.c) {
            return Err(err("magnetic.c", format!("must lie in [0, 1], got {}", m.c)));
        }
        if m.fluct.period == 0 {
            return Err(err("magnetic.fluct.period", "must be positive"));
        }
        if m.eps_list.is_none() {
            let flux = m.flux.get_or_insert_with(|| (1..=5).map(|k| [k, l as i64]).collect());
            for (i, f) in flux.iter_mut().enumerate() {
                if f[1] <= 0 || f[0] < 0 {
                    return Err(err(&format!("magnetic.flux[{i}]"), "need p >= 0 and q > 0"));
                }
                let g = gcd(f[0], f[1]).max(1);
                *f = [f[0] / g, f[1] / g];
            }
            m.eps_list = Some(flux.iter().map(|f| 2.0 * PI * f[0] as f64 / f[1] as f64 / m.b).collect());
        }
        for (i, &e) in m.eps_list.as_ref().unwrap().iter().enumerate() {
            let quanta = e * m.b * l as f64 / (2.0 * PI);
            if !(e >= 0.0) || (quanta - quanta.round()).abs() > 1e-9 {
                return Err(err(
                    &format!("magnetic.eps_list[{i}]"),
                    format!("flux per plaquette {} is not commensurate with box side {l}", e * m.b),
                ));
            }
        }
        if let Some(d) = self.window.delta {
            if !(d > 0.0) {
                return Err(err("window.delta", "must be positive"));
            }
        }
        if self.butterfly.q_max == 0 {
            return Err(err("butterfly.q_max", "must be at least 1"));
        }
        if self.schur.n_grid < 2 {
            return Err(err("schur.n_grid", "need at least two grid points"));
        }
        if self.evolve.times.iter().any(|t| !t.is_finite()) {
            return Err(err("evolve.times", "times must be finite"));
        }
        Ok(self)
    }

    pub fn model(&self) -> Result<HoppingTable, ConfigError> {
        let h = match (&self.model.name, &self.model.path) {
            (Some(n), _) => builtin(n).ok_or_else(|| err("model.name", format!("unknown model `{n}`")))?,
            (None, Some(p)) => HoppingTable::load(p).map_err(|e| err("model.path", e.to_string()))?,
            _ => return Err(err("model", "no model given")),
        };
        let h = match self.model.shift {
            Some(s) => h.with_shift(s),
            None => h,
        };
        if self.family.k0 + self.family.n > h.orbitals {
            return Err(err("family.k0", format!("bands {}..{} exceed the {} bands of the model", self.family.k0, self.family.k0 + self.family.n, h.orbitals)));
        }
        Ok(h)
    }

    pub fn eps_list(&self) -> &[f64] {
        self.magnetic.eps_list.as_deref().unwrap_or(&[])
    }

    pub fn fluctuation(&self) -> FluctuationPotential {
        let f = &self.magnetic.fluct;
        f.potential.clone().unwrap_or_else(|| bandframe::pipeline::sine_fluctuation(f.amplitude, f.period))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
