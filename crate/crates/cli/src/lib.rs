//! Front end for the `lgflat` binary: argument parsing, config resolution
//! and the five experiment subcommands.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use lgflat::crosstalk::{
    azimuthal_states, crosstalk_matrix, efficiency_vs_dimension_scan, full_field_states, radial_states, ScanConfig,
};
use lgflat::detection::converged_coupling_amplitude;
use lgflat::io::{
    fmt_f64, load_crosstalk_csv, read_state_file, write_crosstalk_csv, write_density_abs_csv, CrosstalkSidecar,
    DensityMatrixFile, StateFile,
};
use lgflat::modes::SpatialState;
use lgflat::optimizer::{ga_optimize, random_subset_stats_with, GaParams, Sampling};
use lgflat::qkd::subset_key_rate;
use lgflat::tomography::{
    direct_inversion, exact_tomography, fidelity, mub_bases, oam_support, radial_support, random_pure_state,
    simulate_tomography_with,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{Common, ConfigError, ConfigFile, Family, Measurement, Overrides, SupportKind};

#[derive(Debug, Parser)]
#[command(name = "lgflat", version, about = "Single-phase-screen LG mode measurement experiments")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides `workers`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Crosstalk matrix of a mode family, with visibility and efficiency.
    Crosstalk,
    /// Minimal beta and efficiency per dimension and target visibility.
    Tradeoff,
    /// Random and GA subset search for the best key rate.
    Subspace,
    /// MUB state tomography of one state.
    Qst,
    /// Verify the MUB construction for a list of dimensions.
    MubCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Crosstalk => "crosstalk",
            Command::Tradeoff => "tradeoff",
            Command::Subspace => "subspace",
            Command::Qst => "qst",
            Command::MubCheck => "mub-check",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] lgflat::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Pool(String),
}

impl CliError {
    /// 2 for bad configuration or inputs, 3 for numerical non-convergence,
    /// 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        use lgflat::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::NonConverged { .. }) => 3,
            CliError::Core(E::InvalidArgument(_) | E::NotPrime(_) | E::Format(_) | E::TooManySubsets { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs one subcommand end to end and returns the output directory.
pub fn run(cli: &Cli) -> CliResult<PathBuf> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let overrides = Overrides { seed: cli.seed, workers: cli.workers, out: cli.out.clone() };
    let common = file.common(&overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;

    let mut run = Run::new(cli.command, &common);
    pool.install(|| -> CliResult<()> {
        match cli.command {
            Command::Crosstalk => cmd_crosstalk(&file, &common, &mut run),
            Command::Tradeoff => cmd_tradeoff(&file, &common, &mut run),
            Command::Subspace => cmd_subspace(&file, &common, &mut run),
            Command::Qst => cmd_qst(&file, &common, &mut run),
            Command::MubCheck => cmd_mub_check(&file, &common, &mut run),
        }
    })?;
    run.finish()?;
    Ok(common.output_dir)
}

/// Bookkeeping for the manifest: resolved config and stage timings.
struct Run {
    command: Command,
    dir: PathBuf,
    config: serde_json::Value,
    started: Instant,
    timings: Vec<(String, f64)>,
    outputs: Vec<String>,
}

impl Run {
    fn new(command: Command, common: &Common) -> Self {
        Self {
            command,
            dir: common.output_dir.clone(),
            config: json!({ "common": common }),
            started: Instant::now(),
            timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn section<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.config[name] = serde_json::to_value(value)?;
        Ok(())
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        Ok(out)
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        fs::create_dir_all(&self.dir)?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self) -> CliResult<()> {
        let timings: serde_json::Map<String, serde_json::Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let manifest = json!({
            "tool": "lgflat",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command.name(),
            "config": self.config,
            "outputs": self.outputs,
            "timings_seconds": timings,
            "total_seconds": self.started.elapsed().as_secs_f64(),
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn states_for(family: &Family, waist: f64) -> Vec<SpatialState> {
    match *family {
        Family::Radial { ell, p_min, p_max } => radial_states(ell, p_min..=p_max, waist),
        Family::Azimuthal { p, ell_min, ell_max } => azimuthal_states(p, ell_min..=ell_max, waist),
        Family::FullField { max_order } => full_field_states(max_order, waist),
    }
}

fn cmd_crosstalk(file: &ConfigFile, common: &Common, run: &mut Run) -> CliResult<()> {
    let cfg = file.crosstalk()?;
    run.section("crosstalk", &cfg)?;
    let states = states_for(&cfg.family, common.waist);
    let ell_max = states.iter().map(SpatialState::max_abs_ell).max().unwrap_or(0);
    let spec = common.grid.spec(common.waist, ell_max);
    let model = common.model.model(spec)?;
    run.section("grid_spec", &spec)?;

    if cfg.check_convergence {
        // diagonal entries and the first off-diagonal pair, on refined and
        // enlarged grids
        run.time("convergence_check", || {
            let mut pairs: Vec<(usize, usize)> = (0..states.len()).map(|i| (i, i)).collect();
            if states.len() > 1 {
                pairs.push((0, 1));
            }
            for (i, j) in pairs {
                converged_coupling_amplitude(&states[i], &states[j], &model, common.grid.rel_tol)?;
            }
            Ok(())
        })?;
    }

    let m = run.time("crosstalk_matrix", || Ok(crosstalk_matrix(&states, &model)?))?;
    let sidecar = CrosstalkSidecar::for_matrix(&m)?;
    write_crosstalk_csv(&m, run.create("crosstalk.csv")?)?;
    run.write_json("crosstalk.json", &sidecar)?;

    // display form, scaled so the largest entry is 1
    let mut w = csv::Writer::from_writer(run.create("crosstalk_display.csv")?);
    w.write_record(std::iter::once("label").chain(m.labels().iter().map(String::as_str)))?;
    let display = m.normalized_to_max();
    for (i, label) in m.labels().iter().enumerate() {
        let row = display[i * m.dim()..(i + 1) * m.dim()].iter().map(|&x| fmt_f64(x));
        w.write_record(std::iter::once(label.clone()).chain(row))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_tradeoff(file: &ConfigFile, common: &Common, run: &mut Run) -> CliResult<()> {
    let cfg = file.tradeoff()?;
    run.section("tradeoff", &cfg)?;
    let scan = ScanConfig { beta_range: cfg.beta_range, waist: common.waist, grid: common.grid.spec(common.waist, 0) };
    let points = run.time("scan", || Ok(efficiency_vs_dimension_scan(cfg.d_max, &cfg.targets, &scan)?))?;
    let mut w = csv::Writer::from_writer(run.create("tradeoff.csv")?);
    w.write_record(["d", "target_visibility", "beta_min", "visibility", "mean_efficiency"])?;
    for p in &points {
        w.write_record([
            p.dimension.to_string(),
            fmt_f64(p.target_visibility),
            fmt_f64(p.beta_min),
            fmt_f64(p.visibility),
            fmt_f64(p.mean_efficiency),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BestSubset {
    d: usize,
    subset: Vec<String>,
    qber: f64,
    rate_bits: f64,
}

fn cmd_subspace(file: &ConfigFile, common: &Common, run: &mut Run) -> CliResult<()> {
    let cfg = file.subspace()?;
    run.section("subspace", &cfg)?;
    let m = load_crosstalk_csv(&cfg.matrix).map_err(|e| match e {
        lgflat::Error::Io(io) => CliError::Config(ConfigError {
            line: None,
            key: "subspace.matrix".into(),
            message: format!("cannot read {}: {io}", cfg.matrix.display()),
        }),
        other => other.into(),
    })?;
    let range = cfg.d_range(m.dim())?;
    let sampling = if cfg.distinct { Sampling::Distinct } else { Sampling::Independent };

    let mut summary = Vec::new();
    let mut best = Vec::new();
    let mut traces = Vec::new();
    run.time("search", || {
        for d in range.clone() {
            let seed = common.seed.wrapping_add(d as u64);
            let stats = random_subset_stats_with(&m, d, cfg.samples, seed, sampling)?;
            let ga = ga_optimize(&m, d, &GaParams { rng_seed: seed, ..cfg.ga })?;
            let key = subset_key_rate(&m, ga.best.indices())?;
            summary.push([
                d.to_string(),
                fmt_f64(stats.mean),
                fmt_f64(stats.stddev),
                fmt_f64(stats.max),
                fmt_f64(ga.rate),
                fmt_f64((d as f64).log2()),
            ]);
            best.push(BestSubset {
                d,
                subset: ga.best.indices().iter().map(|&i| m.labels()[i].clone()).collect(),
                qber: key.qber,
                rate_bits: key.rate_bits,
            });
            traces.push((d, ga.trace));
        }
        Ok(())
    })?;

    let mut w = csv::Writer::from_writer(run.create("subspace.csv")?);
    w.write_record(["d", "mean", "std", "random_max", "ga_best", "log2_d"])?;
    for row in &summary {
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(run.create("best_subsets.csv")?);
    w.write_record(["d", "subset", "qber", "rate_bits"])?;
    for b in &best {
        w.write_record([b.d.to_string(), b.subset.join(" "), fmt_f64(b.qber), fmt_f64(b.rate_bits)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(run.create("ga_trace.csv")?);
    w.write_record(["d", "generation", "best", "mean"])?;
    for (d, trace) in &traces {
        for g in trace {
            w.write_record([d.to_string(), g.generation.to_string(), fmt_f64(g.best), fmt_f64(g.mean)])?;
        }
    }
    w.flush()?;

    run.write_json("best_subsets.json", &best)
}

fn cmd_qst(file: &ConfigFile, common: &Common, run: &mut Run) -> CliResult<()> {
    let cfg = file.qst(common.seed)?;
    run.section("qst", &cfg)?;
    let truth = match &cfg.state {
        Some(path) => read_state_file(path).map_err(|e| match e {
            lgflat::Error::Io(io) => CliError::Config(ConfigError {
                line: None,
                key: "qst.state".into(),
                message: format!("cannot read {}: {io}", path.display()),
            }),
            other => other.into(),
        })?,
        None => {
            let support = match cfg.support {
                SupportKind::Radial => radial_support(cfg.ell, cfg.d),
                SupportKind::Oam => oam_support(cfg.d),
            };
            random_pure_state(&support, common.waist, cfg.state_seed)?
        }
    };
    let support = truth.modes().to_vec();
    let mubs = mub_bases(support.len(), &support)?;
    let spec = common.grid.spec(truth.waist(), truth.max_abs_ell());
    run.section("grid_spec", &spec)?;

    let rec = run.time("measurement", || {
        Ok(match cfg.measurement {
            Measurement::Exact => exact_tomography(&truth, &mubs)?,
            Measurement::Simulated => {
                simulate_tomography_with(&truth, &mubs, &common.model.model(spec)?, cfg.normalization)?
            }
        })
    })?;
    let rho = direct_inversion(&rec);
    let f = fidelity(&rho, &truth)?;

    if cfg.state.is_none() {
        run.write_json("state.json", &StateFile::from_state(&truth))?;
    }
    let mut w = csv::Writer::from_writer(run.create("probabilities.csv")?);
    w.write_record(["basis", "outcome", "probability"])?;
    for (a, row) in rec.probs.iter().enumerate() {
        for (m, p) in row.iter().enumerate() {
            w.write_record([a.to_string(), m.to_string(), fmt_f64(*p)])?;
        }
    }
    w.flush()?;
    run.write_json("rho.json", &DensityMatrixFile::from_density(&rho))?;
    write_density_abs_csv(&rho, run.create("rho_abs.csv")?)?;
    let report = json!({
        "dimension": support.len(),
        "support": support.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "measurement": cfg.measurement,
        "method": rec.model.map(|m| m.method().token()),
        "beta": rec.model.map(|m| m.beta()),
        "fidelity": f,
        "trace": rho.trace().re,
    });
    run.write_json("fidelity.json", &report)
}

fn cmd_mub_check(file: &ConfigFile, _common: &Common, run: &mut Run) -> CliResult<()> {
    let cfg = file.mub_check()?;
    run.section("mub-check", &cfg)?;
    let reports = run.time("check", || {
        cfg.dimensions.iter().map(|&d| Ok(mub_bases(d, &oam_support(d))?.check())).collect::<CliResult<Vec<_>>>()
    })?;
    let mut w = csv::Writer::from_writer(run.create("mub_check.csv")?);
    w.write_record(["d", "orthonormality", "unbiasedness", "completeness", "pass"])?;
    for r in &reports {
        w.write_record([
            r.dimension.to_string(),
            fmt_f64(r.orthonormality),
            fmt_f64(r.unbiasedness),
            fmt_f64(r.completeness),
            r.passes(1e-12, 1e-10).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path of a named output inside a run directory.
pub fn output(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
