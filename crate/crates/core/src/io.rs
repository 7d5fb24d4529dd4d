//! Run configuration, command execution and the EKF1 field format.
//!
//! EKF1 layout: the 8 magic bytes `EKFLD1\0\0`, a little-endian u64 header
//! length, a UTF-8 JSON header `{dims, spacing, fields, t?, c?}`, then one
//! row-major block of little-endian f64 per field, in header order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evolve1d::{self, ExperimentOptions, PerturbationShape};
use crate::fluid_model::{rescale, CapillarityLaw, CutoffSpec, FluidModel, PressureLaw};
use crate::minimize2d::{self, MinimizeOptions, TorusField2D, TorusOptions};
use crate::spectral1d;
use crate::wave1d::{self, ProfileOptions, WaveKind, WaveProfile1D};

pub const EKF1_MAGIC: &[u8; 8] = b"EKFLD1\0\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Named fields on a common regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub header: FieldHeader,
    pub data: Vec<Vec<f64>>,
}

impl FieldFile {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, fields: Vec<(&str, Vec<f64>)>) -> Result<Self> {
        let header = FieldHeader {
            dims,
            spacing,
            fields: fields.iter().map(|(n, _)| n.to_string()).collect(),
            t: None,
            c: None,
        };
        let f = Self { header, data: fields.into_iter().map(|(_, v)| v).collect() };
        f.check()?;
        Ok(f)
    }

    pub fn points(&self) -> usize {
        self.header.dims.iter().product()
    }

    fn check(&self) -> Result<()> {
        let h = &self.header;
        if h.dims.is_empty() || h.dims.len() != h.spacing.len() {
            return Err(Error::HeaderMismatch(format!("{} dims but {} spacings", h.dims.len(), h.spacing.len())));
        }
        if h.fields.len() != self.data.len() {
            return Err(Error::HeaderMismatch("field names and data blocks differ in number".into()));
        }
        let n = self.points();
        if let Some(v) = self.data.iter().find(|v| v.len() != n) {
            return Err(Error::HeaderMismatch(format!("field of length {} on a grid of {n} points", v.len())));
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Result<&[f64]> {
        self.header
            .fields
            .iter()
            .position(|f| f == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::HeaderMismatch(format!("no field `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.points() * self.data.len());
        out.extend_from_slice(EKF1_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != EKF1_MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(Error::TruncatedPayload { expected: 16, found: bytes.len() });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or(Error::TruncatedPayload {
            expected: 16usize.saturating_add(hlen),
            found: bytes.len(),
        })?;
        let header: FieldHeader =
            serde_json::from_slice(&bytes[16..body]).map_err(|e| Error::HeaderMismatch(format!("header: {e}")))?;
        if header.dims.len() != header.spacing.len() {
            return Err(Error::HeaderMismatch(format!("{} dims but {} spacings", header.dims.len(), header.spacing.len())));
        }
        let n: usize = header.dims.iter().product();
        let expected = body + 8 * n * header.fields.len();
        if bytes.len() != expected {
            return Err(Error::TruncatedPayload { expected, found: bytes.len() });
        }
        let data = (0..header.fields.len())
            .map(|k| {
                let start = body + 8 * n * k;
                bytes[start..start + 8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
            })
            .collect();
        Ok(Self { header, data })
    }
}

pub fn write_field_ekf1(field: &FieldFile, path: &Path) -> Result<()> {
    let bytes = field.to_bytes()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_field_ekf1(path: &Path) -> Result<FieldFile> {
    FieldFile::from_bytes(&fs::read(path)?)
}

impl From<&WaveProfile1D> for FieldFile {
    fn from(p: &WaveProfile1D) -> Self {
        let mut f = FieldFile::new(vec![p.len()], vec![p.h], vec![("rho", p.rho.clone()), ("u", p.u.clone())])
            .expect("profile fields have equal length");
        f.header.c = Some(p.c);
        f
    }
}

impl From<&TorusField2D> for FieldFile {
    fn from(t: &TorusField2D) -> Self {
        FieldFile::new(vec![t.n1, t.n2], vec![t.h1(), t.h2()], vec![("rho", t.rho.clone()), ("phi", t.phi.clone())])
            .expect("torus fields have equal length")
    }
}

impl From<&evolve1d::EvolutionState> for FieldFile {
    fn from(s: &evolve1d::EvolutionState) -> Self {
        let mut f = FieldFile::new(vec![s.n()], vec![s.h()], vec![("rho", s.rho.clone()), ("u", s.u.clone())])
            .expect("state fields have equal length");
        f.header.t = Some(s.t);
        f
    }
}

/// Profile on the symmetric grid; rho_inf comes from the model.
pub fn profile_from_field(f: &FieldFile, rho_inf: f64) -> Result<WaveProfile1D> {
    if f.header.dims.len() != 1 {
        return Err(Error::HeaderMismatch("a 1D profile needs one dimension".into()));
    }
    let c = f.header.c.ok_or_else(|| Error::HeaderMismatch("profile header lacks `c`".into()))?;
    WaveProfile1D::from_samples(c, rho_inf, f.header.spacing[0], f.field("rho")?.to_vec(), f.field("u")?.to_vec())
}

pub fn torus_from_field(f: &FieldFile) -> Result<TorusField2D> {
    let h = &f.header;
    if h.dims.len() != 2 {
        return Err(Error::HeaderMismatch("a torus field needs two dimensions".into()));
    }
    Ok(TorusField2D {
        n1: h.dims[0],
        n2: h.dims[1],
        l1: h.spacing[0] * h.dims[0] as f64,
        l2: h.spacing[1] * h.dims[1] as f64,
        rho: f.field("rho")?.to_vec(),
        phi: f.field("phi")?.to_vec(),
    })
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub pressure: PressureLaw,
    pub capillarity: CapillarityLaw,
    #[serde(default = "one")]
    pub rho_inf: f64,
    #[serde(default)]
    pub cutoff: CutoffSpec,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            pressure: PressureLaw::GrossPitaevskii {},
            capillarity: CapillarityLaw::Constant { kappa: 1.0 },
            rho_inf: 1.0,
            cutoff: CutoffSpec::default(),
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<FluidModel> {
        FluidModel::new(self.pressure.clone(), self.capillarity.clone(), self.rho_inf)
    }

    /// The model rescaled to rho_inf = 1, c_s = 1.
    pub fn build_normalized(&self) -> Result<FluidModel> {
        let m = self.build()?;
        if m.rho_inf == 1.0 && m.c_s() == 1.0 {
            Ok(m)
        } else {
            rescale(&m, m.rho_inf)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Wave1d,
    Curve1d,
    Spectrum1d,
    Evolve1d,
    Minimize2d,
    Sweep2d,
    KpLump,
}

impl CommandName {
    pub const ALL: [CommandName; 7] = [
        CommandName::Wave1d,
        CommandName::Curve1d,
        CommandName::Spectrum1d,
        CommandName::Evolve1d,
        CommandName::Minimize2d,
        CommandName::Sweep2d,
        CommandName::KpLump,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CommandName::Wave1d => "wave1d",
            CommandName::Curve1d => "curve1d",
            CommandName::Spectrum1d => "spectrum1d",
            CommandName::Evolve1d => "evolve1d",
            CommandName::Minimize2d => "minimize2d",
            CommandName::Sweep2d => "sweep2d",
            CommandName::KpLump => "kp-lump",
        }
    }
}

impl std::str::FromStr for CommandName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Validation { field: "command".into(), msg: format!("unknown command `{s}`") })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave1dParams {
    pub c: f64,
    #[serde(default)]
    pub kind: Option<WaveKind>,
    #[serde(default = "d_n_half")]
    pub n_half: usize,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "d_n_quad")]
    pub n_quad: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curve1dParams {
    pub c_min: f64,
    pub c_max: f64,
    #[serde(default = "d_points")]
    pub n_points: usize,
    #[serde(default)]
    pub kind: Option<WaveKind>,
    /// Speeds at which to report the stability verdict.
    #[serde(default)]
    pub verdict_at: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectrum1dParams {
    pub c: f64,
    #[serde(default)]
    pub kind: Option<WaveKind>,
    #[serde(default = "d_n_half")]
    pub n_half: usize,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "d_n_quad")]
    pub n_quad: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolve1dParams {
    /// Speed of the wave to build; ignored when `input` is given.
    #[serde(default)]
    pub c: Option<f64>,
    /// EKF1 profile (fields rho, u; header c) to embed instead.
    #[serde(default)]
    pub input: Option<PathBuf>,
    pub delta: f64,
    pub horizon: f64,
    #[serde(default)]
    pub shape: PerturbationShape,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "d_sample_dt")]
    pub sample_dt: f64,
    #[serde(default = "d_escape")]
    pub escape_factor: f64,
    #[serde(default = "d_close")]
    pub close_factor: f64,
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
    #[serde(default)]
    pub kind: Option<WaveKind>,
    #[serde(default)]
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Minimize2dParams {
    pub p: f64,
    #[serde(default = "d_n2d")]
    pub n1: usize,
    #[serde(default = "d_n2d")]
    pub n2: usize,
    /// Torus half-width in KP variables; sized from the ansatz tail when absent.
    #[serde(default)]
    pub rz: Option<f64>,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default = "d_schedule")]
    pub eps_schedule: Vec<f64>,
    /// EKF1 torus field (rho, phi) to start from instead of the lump ansatz.
    #[serde(default)]
    pub warm_start: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep2dParams {
    pub p_list: Vec<f64>,
    #[serde(default = "d_n2d")]
    pub n1: usize,
    #[serde(default = "d_n2d")]
    pub n2: usize,
    #[serde(default)]
    pub rz: Option<f64>,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    #[serde(default = "d_schedule")]
    pub eps_schedule: Vec<f64>,
    #[serde(default = "d_true")]
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpLumpParams {
    #[serde(default = "d_n2d")]
    pub n1: usize,
    #[serde(default = "d_n2d")]
    pub n2: usize,
    #[serde(default = "d_half")]
    pub half1: f64,
    #[serde(default = "d_half")]
    pub half2: f64,
}

fn d_n_half() -> usize {
    4096
}
fn d_tail_tol() -> f64 {
    1e-10
}
fn d_n_quad() -> usize {
    2048
}
fn d_points() -> usize {
    21
}
fn d_sample_dt() -> f64 {
    0.5
}
fn d_escape() -> f64 {
    100.0
}
fn d_close() -> f64 {
    5.0
}
fn d_n2d() -> usize {
    512
}
fn d_tol() -> f64 {
    1e-5
}
fn d_max_iter() -> usize {
    5000
}
fn d_schedule() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 0.0]
}
fn d_true() -> bool {
    true
}
fn d_half() -> f64 {
    40.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Wave1d(Wave1dParams),
    Curve1d(Curve1dParams),
    Spectrum1d(Spectrum1dParams),
    Evolve1d(Evolve1dParams),
    Minimize2d(Minimize2dParams),
    Sweep2d(Sweep2dParams),
    KpLump(KpLumpParams),
}

/// Fully resolved run configuration; serializes to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub model: ModelConfig,
    pub params: Params,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: CommandName,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default = "default_out")]
    output_dir: PathBuf,
    #[serde(default)]
    rng_seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn data_error(prefix: &str, e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    let field = match (prefix, path.as_str()) {
        ("", p) => p.to_string(),
        (pre, ".") => pre.to_string(),
        (pre, p) => format!("{pre}.{p}"),
    };
    Error::Validation { field, msg: e.into_inner().to_string() }
}

fn parse_params<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| data_error("params", e))
}

/// Parse JSON text into a value, reporting syntax errors with position.
pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), column: e.column(), msg: e.to_string() })
}

/// Resolve a config value: strict keys, defaults materialized, values checked.
pub fn config_from_value(v: Value) -> Result<RunConfig> {
    let raw: RawConfig = serde_path_to_error::deserialize(v).map_err(|e| data_error("", e))?;
    let pv = raw.params.unwrap_or_else(|| Value::Object(Default::default()));
    let params = match raw.command {
        CommandName::Wave1d => Params::Wave1d(parse_params(pv)?),
        CommandName::Curve1d => Params::Curve1d(parse_params(pv)?),
        CommandName::Spectrum1d => Params::Spectrum1d(parse_params(pv)?),
        CommandName::Evolve1d => Params::Evolve1d(parse_params(pv)?),
        CommandName::Minimize2d => Params::Minimize2d(parse_params(pv)?),
        CommandName::Sweep2d => Params::Sweep2d(parse_params(pv)?),
        CommandName::KpLump => Params::KpLump(parse_params(pv)?),
    };
    let cfg = RunConfig { command: raw.command, model: raw.model, params, output_dir: raw.output_dir, rng_seed: raw.rng_seed };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    config_from_value(parse_json(text)?)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

fn invalid(field: &str, msg: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), msg: msg.into() }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn grid_size(field: &str, n: usize, min: usize) -> Result<()> {
    if n >= min {
        Ok(())
    } else {
        Err(invalid(field, format!("must be at least {min}, got {n}")))
    }
}

fn schedule(s: &[f64]) -> Result<()> {
    if s.is_empty() || s.iter().any(|e| !(*e >= 0.0 && e.is_finite())) || s.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("params.eps_schedule", "must be a nonempty, nonincreasing list of nonnegative numbers"));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.cutoff.validate().map_err(|e| match e {
            Error::Validation { field, msg } => invalid(&format!("model.{field}"), msg),
            e => e,
        })?;
        if !(self.model.rho_inf > 0.0 && self.model.rho_inf.is_finite()) {
            return Err(invalid("model.rho_inf", "must be positive"));
        }
        match &self.params {
            Params::Wave1d(p) => {
                positive("params.c", p.c)?;
                positive("params.tail_tol", p.tail_tol)?;
                grid_size("params.n_half", p.n_half, 4)?;
                grid_size("params.n_quad", p.n_quad, 16)?;
            }
            Params::Spectrum1d(p) => {
                positive("params.c", p.c)?;
                positive("params.tail_tol", p.tail_tol)?;
                grid_size("params.n_half", p.n_half, 4)?;
                grid_size("params.n_quad", p.n_quad, 16)?;
            }
            Params::Curve1d(p) => {
                positive("params.c_min", p.c_min)?;
                if !(p.c_max > p.c_min && p.c_max.is_finite()) {
                    return Err(invalid("params.c_max", "must exceed c_min"));
                }
                grid_size("params.n_points", p.n_points, 2)?;
            }
            Params::Evolve1d(p) => {
                match (&p.c, &p.input) {
                    (None, None) => return Err(invalid("params.c", "either `c` or `input` is required")),
                    (Some(c), _) => positive("params.c", *c)?,
                    _ => {}
                }
                if !p.delta.is_finite() {
                    return Err(invalid("params.delta", "must be finite"));
                }
                positive("params.horizon", p.horizon)?;
                positive("params.sample_dt", p.sample_dt)?;
                positive("params.tail_tol", p.tail_tol)?;
                if let Some(n) = p.n {
                    if !n.is_power_of_two() || n < 16 {
                        return Err(invalid("params.n", format!("must be a power of two >= 16, got {n}")));
                    }
                }
            }
            Params::Minimize2d(p) => {
                if !(p.p >= 0.0 && p.p.is_finite()) {
                    return Err(invalid("params.p", "must be nonnegative"));
                }
                grid_size("params.n1", p.n1, 8)?;
                grid_size("params.n2", p.n2, 8)?;
                positive("params.tol", p.tol)?;
                if let Some(r) = p.rz {
                    positive("params.rz", r)?;
                }
                schedule(&p.eps_schedule)?;
            }
            Params::Sweep2d(p) => {
                if p.p_list.is_empty() || p.p_list.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(invalid("params.p_list", "must be a nonempty list of nonnegative numbers"));
                }
                if p.p_list.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("params.p_list", "must be strictly increasing"));
                }
                grid_size("params.n1", p.n1, 8)?;
                grid_size("params.n2", p.n2, 8)?;
                positive("params.tol", p.tol)?;
                if let Some(r) = p.rz {
                    positive("params.rz", r)?;
                }
                schedule(&p.eps_schedule)?;
            }
            Params::KpLump(p) => {
                grid_size("params.n1", p.n1, 8)?;
                grid_size("params.n2", p.n2, 8)?;
                positive("params.half1", p.half1)?;
                positive("params.half2", p.half2)?;
            }
        }
        Ok(())
    }

    /// Pretty JSON of the resolved config, newline terminated.
    pub fn manifest(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

// ---------------------------------------------------------------------------
// execution

#[derive(Clone, Debug, Serialize)]
pub struct WaveSummary {
    pub c: f64,
    pub c_s: f64,
    pub kind: WaveKind,
    pub rho_turn: f64,
    pub momentum: f64,
    pub energy: f64,
    pub momentum_trapezoid: f64,
    pub energy_trapezoid: f64,
    pub ode_residual: f64,
    pub n_half: usize,
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub turning_points: wave1d::TurningPointReport,
}

#[derive(Clone, Debug, Serialize)]
struct CurveOutput<'a> {
    curve: &'a wave1d::SpeedCurve,
    verdicts: Vec<wave1d::StabilityVerdict>,
}

fn write_text(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text)?;
    written.push(p);
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    write_text(dir, name, &s, written)
}

fn write_field(dir: &Path, name: &str, f: &FieldFile, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    write_field_ekf1(f, &p)?;
    written.push(p);
    Ok(())
}

/// Execute a resolved config, writing the manifest and all outputs into
/// `output_dir`. Returns the written paths (manifest first).
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir)?;
    let mut written = vec![];
    write_text(dir, "manifest.json", &cfg.manifest(), &mut written)?;
    match &cfg.params {
        Params::Wave1d(p) => {
            let model = cfg.model.build()?;
            let opts = ProfileOptions { n_half: p.n_half, tail_tol: p.tail_tol, n_quad: p.n_quad, kind: p.kind };
            let wave = wave1d::SolitaryWave::new(&model, p.c, p.kind, p.n_quad)?;
            let prof = wave.profile(&opts)?;
            let summary = WaveSummary {
                c: p.c,
                c_s: model.c_s(),
                kind: wave.kind(),
                rho_turn: wave.rho_turn(),
                momentum: wave.momentum(),
                energy: wave.energy(),
                momentum_trapezoid: prof.momentum_trapezoid(),
                energy_trapezoid: prof.energy_trapezoid(&model),
                ode_residual: prof.ode_residual(&model),
                n_half: prof.n_half,
                h: prof.h,
                l: prof.l,
                turning_points: wave1d::find_turning_points(&model, p.c)?,
            };
            write_json(dir, "wave.json", &summary, &mut written)?;
            write_field(dir, "profile.ekf", &FieldFile::from(&prof), &mut written)?;
        }
        Params::Curve1d(p) => {
            let model = cfg.model.build()?;
            let n = p.n_points;
            let cs: Vec<f64> = (0..n).map(|i| p.c_min + (p.c_max - p.c_min) * i as f64 / (n - 1) as f64).collect();
            let curve = wave1d::speed_curve(&model, &cs, p.kind);
            let verdicts = p.verdict_at.iter().map(|&c| wave1d::stability_verdict(&curve, c)).collect::<Result<Vec<_>>>()?;
            write_text(dir, "curve.csv", &curve.to_csv(), &mut written)?;
            write_json(dir, "curve.json", &CurveOutput { curve: &curve, verdicts }, &mut written)?;
        }
        Params::Spectrum1d(p) => {
            let model = cfg.model.build()?;
            let opts = ProfileOptions { n_half: p.n_half, tail_tol: p.tail_tol, n_quad: p.n_quad, kind: p.kind };
            let prof = wave1d::build_profile(&model, p.c, &opts)?;
            let report = spectral1d::spectral_report(&prof, &model, p.tail_tol)?;
            write_json(dir, "spectrum.json", &report, &mut written)?;
        }
        Params::Evolve1d(p) => {
            let model = cfg.model.build()?;
            let opts = ExperimentOptions {
                delta: p.delta,
                shape: p.shape.clone(),
                horizon: p.horizon,
                n: p.n,
                sample_dt: p.sample_dt,
                escape_factor: p.escape_factor,
                close_factor: p.close_factor,
                tail_tol: p.tail_tol,
                seed: cfg.rng_seed,
                kind: p.kind,
                snapshot_stride: p.snapshot_stride,
            };
            let report = match (&p.input, p.c) {
                (Some(path), _) => {
                    let prof = profile_from_field(&read_field_ekf1(path)?, model.rho_inf)?;
                    evolve1d::stability_experiment_from_profile(&model, &prof, &opts)?
                }
                (None, Some(c)) => evolve1d::stability_experiment(&model, c, &opts)?,
                (None, None) => unreachable!("validated"),
            };
            write_json(dir, "report.json", &report, &mut written)?;
            if !report.snapshots.is_empty() {
                let sd = dir.join("snapshots");
                fs::create_dir_all(&sd)?;
                for (k, s) in report.snapshots.iter().enumerate() {
                    write_field(&sd, &format!("snap_{k:05}.ekf"), &FieldFile::from(s), &mut written)?;
                }
            }
        }
        Params::Minimize2d(p) => {
            let model = cfg.model.build_normalized()?;
            let opts = MinimizeOptions {
                tol: p.tol,
                max_iter: p.max_iter,
                eps_schedule: p.eps_schedule.clone(),
                cutoff: cfg.model.cutoff,
                torus: TorusOptions { n1: p.n1, n2: p.n2, rz: p.rz },
            };
            let report = match &p.warm_start {
                Some(path) => {
                    let init = torus_from_field(&read_field_ekf1(path)?)?;
                    if (init.n1, init.n2) != (p.n1, p.n2) {
                        return Err(Error::HeaderMismatch(format!(
                            "warm start is {}x{}, config asks for {}x{}",
                            init.n1, init.n2, p.n1, p.n2
                        )));
                    }
                    minimize2d::minimize_from(&model, p.p, init, &opts)?
                }
                None => minimize2d::minimize(&model, p.p, &opts)?,
            };
            write_json(dir, "report.json", &report, &mut written)?;
            let mut f = FieldFile::from(&report.field);
            f.header.c = report.c;
            write_field(dir, "field.ekf", &f, &mut written)?;
        }
        Params::Sweep2d(p) => {
            let model = cfg.model.build_normalized()?;
            let opts = MinimizeOptions {
                tol: p.tol,
                max_iter: p.max_iter,
                eps_schedule: p.eps_schedule.clone(),
                cutoff: cfg.model.cutoff,
                torus: TorusOptions { n1: p.n1, n2: p.n2, rz: p.rz },
            };
            let curve = minimize2d::sweep_energy_curve(&model, &p.p_list, &opts, p.warm_start)?;
            write_text(dir, "curve.csv", &curve.to_csv(), &mut written)?;
            write_json(dir, "curve.json", &curve, &mut written)?;
        }
        Params::KpLump(p) => {
            let lump = minimize2d::kp1_lump(p.n1, p.n2, p.half1, p.half2)?;
            write_json(dir, "lump.json", &lump, &mut written)?;
            let f = FieldFile::new(vec![p.n1, p.n2], vec![2.0 * p.half1 / p.n1 as f64, 2.0 * p.half2 / p.n2 as f64], vec![("w", lump.w.clone())])?;
            write_field(dir, "lump.ekf", &f, &mut written)?;
        }
    }
    Ok(written)
}

/// JSON error report printed by the CLI for numerical failures.
pub fn error_report(e: &Error) -> String {
    let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::SupersonicSpeed { c, c_s } = e {
        v["c"] = serde_json::json!(c);
        v["c_s"] = serde_json::json!(c_s);
    }
    serde_json::to_string(&v).expect("report serializes")
}
