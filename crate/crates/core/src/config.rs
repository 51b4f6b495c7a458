//! TOML system descriptions and the bundled example setups.
//!
//! A config holds one plant, either as expressions (`[system]`) or as raw
//! piecewise-affine matrices (`[pwa]`), plus optional sections for the
//! observer gains and for each pipeline. See `configs/example*.toml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::exprparse::ParamTable;
use crate::measures::MeasureKind;
use crate::regularize::TransitionKind;
use crate::simulate::IntegratorConfig;
use crate::systems::{BimodalSystem, ExprSystemDef, ObserverSpec, PwaMatrices, SystemError};

const EXAMPLES: [&str; 3] = [
    include_str!("../configs/example1.toml"),
    include_str!("../configs/example2.toml"),
    include_str!("../configs/example3.toml"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {source}")]
    Toml {
        origin: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{origin}: {msg}")]
    Invalid { origin: String, msg: String },
    #[error("{origin}: {source}")]
    System {
        origin: String,
        #[source]
        source: SystemError,
    },
    #[error("no built-in example {0}; choose 1, 2 or 3")]
    UnknownExample(u32),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: String,
    #[serde(default)]
    description: String,
    dim: usize,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    system: Option<RawSystem>,
    pwa: Option<RawPwa>,
    observer: Option<RawObserver>,
    certify: Option<CertifySection>,
    #[serde(default)]
    simulate: SimulateSection,
    observe: Option<ObserveSection>,
    synth: Option<SynthSection>,
    regstudy: Option<RegStudySection>,
    disturbance: Option<DisturbanceSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    f_plus: Vec<String>,
    f_minus: Vec<String>,
    h: String,
    g: Option<Vec<String>>,
    u: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPwa {
    a_plus: Vec<Vec<f64>>,
    b_plus: Vec<f64>,
    a_minus: Vec<Vec<f64>>,
    b_minus: Vec<f64>,
    input_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    input: Vec<String>,
    normal: Vec<f64>,
    #[serde(default)]
    offset: f64,
    output: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObserver {
    l_plus: Vec<Vec<f64>>,
    l_minus: Vec<Vec<f64>>,
}

/// `[certify]`: sampling region for the contraction checks.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    #[serde(default = "default_measure")]
    pub measure: MeasureKind,
    /// One `[lo, hi]` per state.
    pub region: Vec<[f64; 2]>,
    /// One `[lo, hi]` per output; needed for observers.
    pub output_range: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_sliding_tol")]
    pub sliding_tol: f64,
    #[serde(default)]
    pub t_eval: f64,
}

fn default_measure() -> MeasureKind {
    MeasureKind::L1
}
fn default_grid() -> usize {
    41
}
fn default_sliding_tol() -> f64 {
    1e-9
}

/// `[simulate]`: horizon, initial states and integrator settings.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub t0: f64,
    pub tf: f64,
    pub x0: Option<Vec<f64>>,
    pub xhat0: Option<Vec<f64>>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub tol_event: f64,
    pub sample_interval: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            t0: d.t0,
            tf: 10.0,
            x0: None,
            xhat0: None,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step: d.max_step,
            tol_event: d.tol_event,
            sample_interval: d.sample_interval,
        }
    }
}

impl SimulateSection {
    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            tol_event: self.tol_event,
            t0: self.t0,
            tf: self.tf,
            sample_interval: self.sample_interval,
            ..IntegratorConfig::default()
        }
    }
}

/// `[observe]`: envelope to check the estimation error against.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObserveSection {
    #[serde(default = "one")]
    pub k: f64,
    /// Envelope rate; the certified rate when absent.
    pub rate: Option<f64>,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn one() -> f64 {
    1.0
}
fn default_slack() -> f64 {
    0.05
}

impl Default for ObserveSection {
    fn default() -> Self {
        Self {
            k: 1.0,
            rate: None,
            slack: default_slack(),
        }
    }
}

/// `[synth]`: gain search settings.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    /// Uniform `[lo, hi]` for every gain entry.
    #[serde(default = "default_gain_box")]
    pub gain_box: [f64; 2],
    /// Gain names held at their template value, e.g. `l2p`.
    #[serde(default)]
    pub freeze: Vec<String>,
    /// Search a single gain shared by both modes.
    #[serde(default)]
    pub tie: bool,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_gain_box() -> [f64; 2] {
    [-5.0, 5.0]
}
fn default_budget() -> usize {
    300
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            gain_box: default_gain_box(),
            freeze: Vec::new(),
            tie: false,
            budget: default_budget(),
            seed: 0,
        }
    }
}

/// `[regstudy]`: regularization order study.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegStudySection {
    pub eps: Vec<f64>,
    #[serde(default)]
    pub transition: TransitionKind,
    pub tf: Option<f64>,
}

/// `[disturbance]`: plant-only parameter perturbation sweep.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    pub param: String,
    /// Relative perturbation sizes, e.g. `[0.1, 0.2]`.
    pub levels: Vec<f64>,
    pub tf: Option<f64>,
}

/// A parsed config: the plant, its observer and per-pipeline settings.
#[derive(Debug, Clone)]
pub struct Setup {
    pub name: String,
    pub description: String,
    /// `"builtin:N"` or the file path.
    pub origin: String,
    pub system: Arc<BimodalSystem>,
    pub observer: Option<ObserverSpec>,
    pub certify: Option<CertifySection>,
    pub simulate: SimulateSection,
    pub observe: ObserveSection,
    pub synth: SynthSection,
    pub regstudy: Option<RegStudySection>,
    pub disturbance: Option<DisturbanceSection>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(format!("{what} is empty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(format!("{what} has rows of different lengths"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn builtin_example(n: u32) -> Result<Setup, ConfigError> {
    let src = EXAMPLES
        .get((n as usize).wrapping_sub(1))
        .ok_or(ConfigError::UnknownExample(n))?;
    parse_config(src, &format!("builtin:{n}"))
}

pub fn builtin_source(n: u32) -> Option<&'static str> {
    EXAMPLES.get((n as usize).wrapping_sub(1)).copied()
}

pub fn load_config(path: &Path) -> Result<Setup, ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&src, &path.display().to_string())
}

pub fn parse_config(src: &str, origin: &str) -> Result<Setup, ConfigError> {
    let raw: RawConfig = toml::from_str(src).map_err(|source| ConfigError::Toml {
        origin: origin.to_string(),
        source,
    })?;
    let invalid = |msg: String| ConfigError::Invalid {
        origin: origin.to_string(),
        msg,
    };
    let sys_err = |source: SystemError| ConfigError::System {
        origin: origin.to_string(),
        source,
    };

    let mut params = ParamTable::new();
    if !raw.params.contains_key("pi") {
        params.set("pi", std::f64::consts::PI);
    }
    for (k, v) in &raw.params {
        params.set(k, *v);
    }

    let system = match (&raw.system, &raw.pwa) {
        (Some(s), None) => BimodalSystem::from_exprs(&ExprSystemDef {
            name: raw.name.clone(),
            n: raw.dim,
            params,
            f_plus: s.f_plus.clone(),
            f_minus: s.f_minus.clone(),
            h: s.h.clone(),
            g: s.g.clone(),
            u: s.u.clone(),
        })
        .map_err(sys_err)?,
        (None, Some(p)) => {
            let m = PwaMatrices {
                a_plus: matrix(&p.a_plus, "pwa.a_plus").map_err(invalid)?,
                b_plus: DVector::from_vec(p.b_plus.clone()),
                a_minus: matrix(&p.a_minus, "pwa.a_minus").map_err(invalid)?,
                b_minus: DVector::from_vec(p.b_minus.clone()),
                input_matrix: p
                    .input_matrix
                    .as_ref()
                    .map(|b| matrix(b, "pwa.input_matrix"))
                    .transpose()
                    .map_err(invalid)?,
                normal: DVector::from_vec(p.normal.clone()),
                offset: p.offset,
                output: p.output.as_ref().map(|c| matrix(c, "pwa.output")).transpose().map_err(invalid)?,
            };
            if m.a_plus.nrows() != raw.dim {
                return Err(invalid(format!(
                    "dim = {} but pwa.a_plus has {} rows",
                    raw.dim,
                    m.a_plus.nrows()
                )));
            }
            BimodalSystem::pwa(&raw.name, m, &p.input, params).map_err(sys_err)?
        }
        (Some(_), Some(_)) => return Err(invalid("give either [system] or [pwa], not both".into())),
        (None, None) => return Err(invalid("missing [system] or [pwa] section".into())),
    };
    let system = Arc::new(system);

    let observer = match &raw.observer {
        Some(o) => {
            let lp = matrix(&o.l_plus, "observer.l_plus").map_err(invalid)?;
            let lm = matrix(&o.l_minus, "observer.l_minus").map_err(invalid)?;
            Some(ObserverSpec::new(system.clone(), lp, lm).map_err(sys_err)?)
        }
        None => None,
    };

    let n = raw.dim;
    let p = system.output_dim();
    if let Some(c) = &raw.certify {
        if c.region.len() != n {
            return Err(invalid(format!("certify.region has {} intervals, expected {n}", c.region.len())));
        }
        if let (Some(range), Some(p)) = (&c.output_range, p) {
            if range.len() != p {
                return Err(invalid(format!(
                    "certify.output_range has {} intervals, expected {p}",
                    range.len()
                )));
            }
        }
        let all = c.region.iter().chain(c.output_range.iter().flatten());
        if all.clone().any(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(invalid("certify intervals must be finite with lo <= hi".into()));
        }
        if c.grid < 2 {
            return Err(invalid("certify.grid must be at least 2".into()));
        }
    }
    for (label, v) in [("simulate.x0", &raw.simulate.x0), ("simulate.xhat0", &raw.simulate.xhat0)] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(invalid(format!("{label} has length {}, expected {n}", v.len())));
            }
        }
    }
    raw.simulate.integrator().validate().map_err(|m| invalid(format!("simulate: {m}")))?;
    if let Some(d) = &raw.disturbance {
        if system.params().index_of(&d.param).is_none() {
            return Err(invalid(format!("disturbance.param '{}' is not a parameter", d.param)));
        }
    }

    Ok(Setup {
        name: raw.name,
        description: raw.description,
        origin: origin.to_string(),
        system,
        observer,
        certify: raw.certify,
        simulate: raw.simulate,
        observe: raw.observe.unwrap_or_default(),
        synth: raw.synth.unwrap_or_default(),
        regstudy: raw.regstudy,
        disturbance: raw.disturbance,
    })
}

impl Setup {
    /// Initial plant state; zero when the config gives none.
    pub fn x0(&self) -> Vec<f64> {
        self.simulate.x0.clone().unwrap_or_else(|| vec![0.0; self.system.dim()])
    }

    /// Initial observer state; zero when the config gives none.
    pub fn xhat0(&self) -> Vec<f64> {
        self.simulate.xhat0.clone().unwrap_or_else(|| vec![0.0; self.system.dim()])
    }

    /// Human-readable echo of the parsed system.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let s = &self.system;
        let params = s.params();
        let mut out = String::new();
        let _ = writeln!(out, "system {} ({}), n = {}", self.name, self.origin, s.dim());
        if !self.description.is_empty() {
            let _ = writeln!(out, "  {}", self.description);
        }
        for (name, v) in params.iter() {
            let _ = writeln!(out, "  param {name} = {v}");
        }
        for (label, mode) in [("f+", crate::systems::Mode::Plus), ("f-", crate::systems::Mode::Minus)] {
            for (i, e) in s.field(mode).components().iter().enumerate() {
                let _ = writeln!(out, "  {label}[{}] = {}", i + 1, e.display(params));
            }
        }
        let _ = writeln!(out, "  h = {}", s.surface().expr().display(params));
        if let Some(g) = s.output_map() {
            for (i, e) in g.components().iter().enumerate() {
                let _ = writeln!(out, "  g[{}] = {}", i + 1, e.display(params));
            }
        }
        if let Some(u) = s.input_exprs() {
            for (i, e) in u.iter().enumerate() {
                let _ = writeln!(out, "  u[{}] = {}", i + 1, e.display(params));
            }
        }
        if let Some(obs) = &self.observer {
            let _ = writeln!(out, "  L+ = {:?}", obs.gain(crate::systems::Mode::Plus).as_slice());
            let _ = writeln!(out, "  L- = {:?}", obs.gain(crate::systems::Mode::Minus).as_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for n in 1..=3 {
            let s = builtin_example(n).unwrap();
            assert_eq!(s.system.dim(), 2);
            assert!(s.observer.is_some());
            assert!(s.certify.is_some());
            assert!(!s.describe().is_empty());
        }
        assert!(matches!(builtin_example(4), Err(ConfigError::UnknownExample(4))));
        assert!(matches!(builtin_example(0), Err(ConfigError::UnknownExample(0))));
    }

    #[test]
    fn errors_carry_location() {
        let err = parse_config("name = \"x\"\ndim = \n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("bad.toml"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");

        let src = "name = \"x\"\ndim = 1\n[system]\nf_plus = [\"1\"]\nf_minus = [\"1\"]\nh = \"x1 + y\"\n";
        let err = parse_config(src, "c.toml").unwrap_err();
        assert!(err.to_string().contains("unknown identifier"), "{err}");

        let src = "name = \"x\"\ndim = 1\nbogus = 3\n[system]\nf_plus = [\"1\"]\nf_minus = [\"1\"]\nh = \"x1\"\n";
        assert!(matches!(parse_config(src, "c.toml"), Err(ConfigError::Toml { .. })));
    }

    #[test]
    fn pi_is_predefined() {
        let s = builtin_example(1).unwrap();
        assert_eq!(s.system.params().get("pi"), Some(std::f64::consts::PI));
    }
}
