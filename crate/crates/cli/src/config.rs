//! Run configuration: a TOML file with global keys and one table per
//! subcommand. Every table and key is optional; missing keys take defaults.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/radial"
//!
//! [grid]
//! n_radial = 256
//! r_max_factor = 8
//!
//! [model]
//! method = "if"
//! beta = 8.4
//!
//! [crosstalk]
//! family = "radial"
//! p_max = 7
//! ```

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use lgflat::detection::{DetectionModel, Method};
use lgflat::optimizer::GaParams;
use lgflat::quadrature::{default_n_azimuthal, GridSpec, DEFAULT_N_RADIAL, DEFAULT_R_MAX_FACTOR};
use lgflat::tomography::MaskNormalization;
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: `{}`: {}", self.key, self.message),
            None => write!(f, "config: `{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Source text kept around to turn byte spans into line numbers.
#[derive(Debug, Clone, Default)]
struct Source {
    text: String,
}

impl Source {
    fn line(&self, span: Range<usize>) -> Option<usize> {
        if self.text.is_empty() {
            return None;
        }
        Some(self.text[..span.start.min(self.text.len())].matches('\n').count() + 1)
    }

    fn error<T>(&self, value: &Spanned<T>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.line(value.span()), key: key.to_string(), message: message.into() }
    }
}

fn missing(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { line: None, key: key.to_string(), message: message.into() }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<Spanned<u64>>,
    output_dir: Option<Spanned<String>>,
    workers: Option<Spanned<usize>>,
    waist: Option<Spanned<f64>>,
    grid: Option<RawGrid>,
    model: Option<RawModel>,
    crosstalk: Option<RawCrosstalk>,
    tradeoff: Option<RawTradeoff>,
    subspace: Option<RawSubspace>,
    qst: Option<RawQst>,
    #[serde(rename = "mub-check")]
    mub_check: Option<RawMubCheck>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n_radial: Option<Spanned<usize>>,
    n_azimuthal: Option<Spanned<usize>>,
    r_max_factor: Option<Spanned<f64>>,
    rel_tol: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    method: Option<Spanned<String>>,
    beta: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrosstalk {
    family: Option<Spanned<String>>,
    ell: Option<Spanned<i32>>,
    p: Option<Spanned<u32>>,
    p_min: Option<Spanned<u32>>,
    p_max: Option<Spanned<u32>>,
    ell_min: Option<Spanned<i32>>,
    ell_max: Option<Spanned<i32>>,
    max_order: Option<Spanned<u32>>,
    check_convergence: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTradeoff {
    d_max: Option<Spanned<usize>>,
    targets: Option<Spanned<Vec<f64>>>,
    beta_min: Option<Spanned<f64>>,
    beta_max: Option<Spanned<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubspace {
    matrix: Option<Spanned<String>>,
    d_min: Option<Spanned<usize>>,
    d_max: Option<Spanned<usize>>,
    samples: Option<Spanned<usize>>,
    distinct: Option<bool>,
    population: Option<Spanned<usize>>,
    generations: Option<Spanned<usize>>,
    mutation_rate: Option<Spanned<f64>>,
    elite_count: Option<Spanned<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQst {
    state: Option<Spanned<String>>,
    d: Option<Spanned<usize>>,
    support: Option<Spanned<String>>,
    ell: Option<Spanned<i32>>,
    state_seed: Option<u64>,
    measurement: Option<Spanned<String>>,
    normalization: Option<Spanned<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMubCheck {
    dimensions: Option<Spanned<Vec<usize>>>,
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Common {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub waist: f64,
    pub grid: GridConfig,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub n_radial: usize,
    /// `None` picks the default for the largest `|ell|` in play.
    pub n_azimuthal: Option<usize>,
    pub r_max_factor: f64,
    pub rel_tol: f64,
}

impl GridConfig {
    pub fn spec(&self, waist: f64, ell_max: u32) -> GridSpec {
        GridSpec {
            n_radial: self.n_radial,
            n_azimuthal: self.n_azimuthal.unwrap_or_else(|| default_n_azimuthal(ell_max)),
            r_max: self.r_max_factor * waist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConfig {
    pub method: Method,
    pub beta: f64,
}

impl ModelConfig {
    pub fn model(&self, grid: GridSpec) -> lgflat::Result<DetectionModel> {
        DetectionModel::new(self.method, self.beta, grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Radial { ell: i32, p_min: u32, p_max: u32 },
    Azimuthal { p: u32, ell_min: i32, ell_max: i32 },
    FullField { max_order: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosstalkConfig {
    #[serde(flatten)]
    pub family: Family,
    pub check_convergence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffConfig {
    pub d_max: usize,
    pub targets: Vec<f64>,
    pub beta_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceConfig {
    pub matrix: PathBuf,
    pub d_min: usize,
    /// `None` runs up to the matrix dimension.
    pub d_max: Option<usize>,
    pub samples: usize,
    pub distinct: bool,
    pub ga: GaParams,
    #[serde(skip)]
    d_max_line: Option<usize>,
}

impl SubspaceConfig {
    /// Checks the `d` range against the loaded matrix.
    pub fn d_range(&self, dim: usize) -> Result<std::ops::RangeInclusive<usize>, ConfigError> {
        let d_max = self.d_max.unwrap_or(dim);
        if d_max > dim {
            return Err(ConfigError {
                line: self.d_max_line,
                key: "subspace.d_max".into(),
                message: format!("{d_max} exceeds the matrix dimension {dim}"),
            });
        }
        if self.d_min > d_max {
            return Err(missing("subspace.d_min", format!("{} exceeds d_max {d_max}", self.d_min)));
        }
        Ok(self.d_min..=d_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measurement {
    Exact,
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportKind {
    Radial,
    Oam,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QstConfig {
    /// State file; when absent a seeded random state is drawn.
    pub state: Option<PathBuf>,
    pub d: usize,
    pub support: SupportKind,
    pub ell: i32,
    pub state_seed: u64,
    pub measurement: Measurement,
    pub normalization: MaskNormalization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MubCheckConfig {
    pub dimensions: Vec<usize>,
}

/// Parsed config file plus the directory its relative paths resolve against.
#[derive(Debug, Default)]
pub struct ConfigFile {
    raw: RawConfig,
    source: Source,
    base: PathBuf,
}

/// Overrides from the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().and_then(|s| Source { text: text.to_string() }.line(s)),
            key: "<file>".into(),
            message: e.message().to_string(),
        })?;
        Ok(Self { raw, source: Source { text: text.to_string() }, base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| missing("--config", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn common(&self, overrides: &Overrides) -> Result<Common, ConfigError> {
        let src = &self.source;
        let r = &self.raw;

        let waist = spanned_or(&r.waist, 1.0);
        if let Some(w) = &r.waist {
            if !(*w.get_ref() > 0.0 && w.get_ref().is_finite()) {
                return Err(src.error(w, "waist", "must be positive"));
            }
        }

        let g = r.grid.as_ref();
        let n_radial = g.and_then(|g| g.n_radial.as_ref());
        let n_azimuthal = g.and_then(|g| g.n_azimuthal.as_ref());
        let r_max_factor = g.and_then(|g| g.r_max_factor.as_ref());
        let rel_tol = g.and_then(|g| g.rel_tol.as_ref());
        if let Some(v) = n_radial {
            if *v.get_ref() < 16 {
                return Err(src.error(v, "grid.n_radial", "must be at least 16"));
            }
        }
        if let Some(v) = n_azimuthal {
            if *v.get_ref() < 8 || v.get_ref() % 2 != 0 {
                return Err(src.error(v, "grid.n_azimuthal", "must be even and at least 8"));
            }
        }
        if let Some(v) = r_max_factor {
            if !(*v.get_ref() > 0.0 && v.get_ref().is_finite()) {
                return Err(src.error(v, "grid.r_max_factor", "must be positive"));
            }
        }
        if let Some(v) = rel_tol {
            if v.get_ref().is_nan() || *v.get_ref() <= 0.0 {
                return Err(src.error(v, "grid.rel_tol", "must be positive"));
            }
        }
        let grid = GridConfig {
            n_radial: n_radial.map_or(DEFAULT_N_RADIAL, |v| *v.get_ref()),
            n_azimuthal: n_azimuthal.map(|v| *v.get_ref()),
            r_max_factor: r_max_factor.map_or(DEFAULT_R_MAX_FACTOR, |v| *v.get_ref()),
            rel_tol: rel_tol.map_or(1e-6, |v| *v.get_ref()),
        };

        let m = r.model.as_ref();
        let method = match m.and_then(|m| m.method.as_ref()) {
            Some(v) => v
                .get_ref()
                .parse::<Method>()
                .map_err(|_| src.error(v, "model.method", "expected one of if, pf, pf-am"))?,
            None => Method::IntensityFlattening,
        };
        let beta = match (method, m.and_then(|m| m.beta.as_ref())) {
            (Method::IntensityFlattening, Some(b)) if !(*b.get_ref() >= 1.0 && b.get_ref().is_finite()) => {
                return Err(src.error(b, "model.beta", "intensity flattening needs beta >= 1"));
            }
            (Method::IntensityFlattening, b) => b.map_or(8.4, |b| *b.get_ref()),
            (_, Some(b)) if *b.get_ref() != 1.0 => {
                return Err(src.error(b, "model.beta", "phase flattening fixes beta = 1"));
            }
            _ => 1.0,
        };

        let output_dir = match (&overrides.out, &r.output_dir) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => self.path(p.get_ref()),
            (None, None) => PathBuf::from("out"),
        };
        Ok(Common {
            seed: overrides.seed.unwrap_or_else(|| spanned_or(&r.seed, 0)),
            output_dir,
            workers: overrides.workers.unwrap_or_else(|| spanned_or(&r.workers, 0)),
            waist,
            grid,
            model: ModelConfig { method, beta },
        })
    }

    pub fn crosstalk(&self) -> Result<CrosstalkConfig, ConfigError> {
        let src = &self.source;
        let default = RawCrosstalk::default();
        let c = self.raw.crosstalk.as_ref().unwrap_or(&default);
        let family = match c.family.as_ref().map(|f| f.get_ref().as_str()) {
            None | Some("radial") => {
                let p_min = spanned_or(&c.p_min, 0);
                let p_max = spanned_or(&c.p_max, 7);
                if p_min > p_max {
                    return Err(match &c.p_max {
                        Some(v) => src.error(v, "crosstalk.p_max", "must be >= p_min"),
                        None => missing("crosstalk.p_min", "must be <= p_max"),
                    });
                }
                Family::Radial { ell: spanned_or(&c.ell, 0), p_min, p_max }
            }
            Some("azimuthal") => {
                let ell_min = spanned_or(&c.ell_min, -5);
                let ell_max = spanned_or(&c.ell_max, 5);
                if ell_min > ell_max {
                    return Err(match &c.ell_max {
                        Some(v) => src.error(v, "crosstalk.ell_max", "must be >= ell_min"),
                        None => missing("crosstalk.ell_min", "must be <= ell_max"),
                    });
                }
                Family::Azimuthal { p: spanned_or(&c.p, 0), ell_min, ell_max }
            }
            Some("full-field") => {
                let max_order = spanned_or(&c.max_order, 10);
                if max_order == 0 {
                    return Err(src.error(c.max_order.as_ref().unwrap(), "crosstalk.max_order", "must be >= 1"));
                }
                Family::FullField { max_order }
            }
            Some(_) => {
                return Err(src.error(
                    c.family.as_ref().unwrap(),
                    "crosstalk.family",
                    "expected radial, azimuthal or full-field",
                ))
            }
        };
        Ok(CrosstalkConfig { family, check_convergence: c.check_convergence.unwrap_or(true) })
    }

    pub fn tradeoff(&self) -> Result<TradeoffConfig, ConfigError> {
        let src = &self.source;
        let default = RawTradeoff::default();
        let t = self.raw.tradeoff.as_ref().unwrap_or(&default);
        let d_max = spanned_or(&t.d_max, 10);
        if d_max < 2 {
            return Err(src.error(t.d_max.as_ref().unwrap(), "tradeoff.d_max", "must be >= 2"));
        }
        let targets = match &t.targets {
            Some(v) => {
                if v.get_ref().is_empty() {
                    return Err(src.error(v, "tradeoff.targets", "needs at least one target visibility"));
                }
                if v.get_ref().iter().any(|x| !(*x > 0.0 && *x < 1.0)) {
                    return Err(src.error(v, "tradeoff.targets", "targets must lie in (0, 1)"));
                }
                v.get_ref().clone()
            }
            None => vec![0.90, 0.95, 0.99],
        };
        let lo = spanned_or(&t.beta_min, 1.0);
        let hi = spanned_or(&t.beta_max, 32.0);
        if !(lo >= 1.0 && hi > lo && hi.is_finite()) {
            return Err(match (&t.beta_max, &t.beta_min) {
                (Some(v), _) => src.error(v, "tradeoff.beta_max", "need 1 <= beta_min < beta_max"),
                (None, Some(v)) => src.error(v, "tradeoff.beta_min", "need 1 <= beta_min < beta_max"),
                _ => missing("tradeoff", "need 1 <= beta_min < beta_max"),
            });
        }
        Ok(TradeoffConfig { d_max, targets, beta_range: (lo, hi) })
    }

    pub fn subspace(&self) -> Result<SubspaceConfig, ConfigError> {
        let src = &self.source;
        let default = RawSubspace::default();
        let s = self.raw.subspace.as_ref().unwrap_or(&default);
        let matrix = match &s.matrix {
            Some(p) => self.path(p.get_ref()),
            None => return Err(missing("subspace.matrix", "path to a crosstalk CSV is required")),
        };
        let d_min = spanned_or(&s.d_min, 2);
        if d_min < 2 {
            return Err(src.error(s.d_min.as_ref().unwrap(), "subspace.d_min", "must be >= 2"));
        }
        let samples = spanned_or(&s.samples, 1000);
        if samples == 0 {
            return Err(src.error(s.samples.as_ref().unwrap(), "subspace.samples", "must be >= 1"));
        }
        let defaults = GaParams::default();
        let ga = GaParams {
            population: spanned_or(&s.population, defaults.population),
            generations: spanned_or(&s.generations, defaults.generations),
            mutation_rate: spanned_or(&s.mutation_rate, defaults.mutation_rate),
            elite_count: spanned_or(&s.elite_count, defaults.elite_count),
            rng_seed: 0,
        };
        if let Err(e) = ga.validate() {
            let at = s
                .population
                .as_ref()
                .map(|v| src.line(v.span()))
                .or_else(|| s.mutation_rate.as_ref().map(|v| src.line(v.span())))
                .flatten();
            return Err(ConfigError { line: at, key: "subspace".into(), message: e.to_string() });
        }
        Ok(SubspaceConfig {
            matrix,
            d_min,
            d_max: s.d_max.as_ref().map(|v| *v.get_ref()),
            samples,
            distinct: s.distinct.unwrap_or(false),
            ga,
            d_max_line: s.d_max.as_ref().and_then(|v| src.line(v.span())),
        })
    }

    pub fn qst(&self, seed: u64) -> Result<QstConfig, ConfigError> {
        let src = &self.source;
        let default = RawQst::default();
        let q = self.raw.qst.as_ref().unwrap_or(&default);
        let d = spanned_or(&q.d, 5);
        if !lgflat::tomography::is_prime(d) && q.state.is_none() {
            return Err(match &q.d {
                Some(v) => src.error(v, "qst.d", format!("dimension {d} is not prime")),
                None => missing("qst.d", format!("dimension {d} is not prime")),
            });
        }
        let support = match q.support.as_ref().map(|s| s.get_ref().as_str()) {
            None | Some("radial") => SupportKind::Radial,
            Some("oam") => SupportKind::Oam,
            Some(_) => return Err(src.error(q.support.as_ref().unwrap(), "qst.support", "expected radial or oam")),
        };
        let measurement = match q.measurement.as_ref().map(|s| s.get_ref().as_str()) {
            None | Some("simulated") => Measurement::Simulated,
            Some("exact") => Measurement::Exact,
            Some(_) => {
                return Err(src.error(
                    q.measurement.as_ref().unwrap(),
                    "qst.measurement",
                    "expected exact or simulated",
                ))
            }
        };
        let normalization = match q.normalization.as_ref().map(|s| s.get_ref().as_str()) {
            None | Some("shared-peak") => MaskNormalization::SharedPeak,
            Some("per-state") => MaskNormalization::PerState,
            Some(_) => {
                return Err(src.error(
                    q.normalization.as_ref().unwrap(),
                    "qst.normalization",
                    "expected shared-peak or per-state",
                ))
            }
        };
        Ok(QstConfig {
            state: q.state.as_ref().map(|p| self.path(p.get_ref())),
            d,
            support,
            ell: spanned_or(&q.ell, 0),
            state_seed: q.state_seed.unwrap_or(seed),
            measurement,
            normalization,
        })
    }

    pub fn mub_check(&self) -> Result<MubCheckConfig, ConfigError> {
        let src = &self.source;
        let dims = self.raw.mub_check.as_ref().and_then(|m| m.dimensions.as_ref());
        let dimensions = match dims {
            Some(v) => {
                if v.get_ref().is_empty() {
                    return Err(src.error(v, "mub-check.dimensions", "needs at least one dimension"));
                }
                if let Some(d) = v.get_ref().iter().find(|d| !lgflat::tomography::is_prime(**d)) {
                    return Err(src.error(v, "mub-check.dimensions", format!("dimension {d} is not prime")));
                }
                v.get_ref().clone()
            }
            None => vec![2, 3, 5, 7, 11, 13, 17, 19],
        };
        Ok(MubCheckConfig { dimensions })
    }
}

fn spanned_or<T: Copy>(v: &Option<Spanned<T>>, default: T) -> T {
    v.as_ref().map_or(default, |s| *s.get_ref())
}
