//! Command-line runner: `spectrum | thermalize | mi | circuit | sweep | plot`.
//!
//! Every run directory receives `config.resolved.toml` and `manifest.json`.
//! Metric tables use the schema `time,subset,metric,value,protocol,seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{self, iqr, linear_vs_constant, log_vs_linear, median, KappaRatio, SweepResult};
use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::experiment::{self, CircuitSetup, Comparison, SectorSetup, ShockPlan, SweepSpec};
use crate::hilbert::{LatticeSpec, SectorBasis, SiteSubset, SubsetRole};
use crate::metrology::{self, MetricKind, MetricSample, METRIC_CSV_HEADER};
use crate::spinmodel::{density_of_states, solve_beta_star, Spectrum, XxTerm};
use crate::state::StateVector;
use crate::svg::{Plot, Series, Style};

#[derive(Debug, Parser)]
#[command(name = "gibbsforge", version, about = "Noise-accelerated thermalization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seeds.master`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "GIBBSFORGE_THREADS")]
    pub threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output formats, comma separated.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Spectrum, density of states and beta*.
    Spectrum,
    /// Plain vs noisy distance to the thermal state, with decay fits.
    Thermalize,
    /// Mutual information between noisy and test subsets.
    Mi,
    /// Trotter circuit with per-gate phase-flip noise.
    Circuit,
    /// kappa ratio sweep along one axis.
    Sweep,
    /// Re-render figures from the tables in the output directory.
    Plot,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Thermalize => "thermalize",
            Command::Mi => "mi",
            Command::Circuit => "circuit",
            Command::Sweep => "sweep",
            Command::Plot => "plot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub master_seed: u64,
    pub threads: usize,
}

/// Output directory with one writer per file; files land via rename.
pub struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.part"));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, self.dir.join(name))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, text.as_bytes())
    }
}

struct Ctx {
    config: ExperimentConfig,
    formats: Vec<Format>,
    out: RunDir,
}

impl Ctx {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write_samples(&mut self, stem: &str, samples: &[MetricSample]) -> Result<()> {
        if self.wants(Format::Csv) {
            let mut text = String::with_capacity(64 * samples.len());
            text.push_str(METRIC_CSV_HEADER);
            text.push('\n');
            for s in samples {
                text.push_str(&s.csv_row());
                text.push('\n');
            }
            self.out.write(&format!("{stem}.csv"), text.as_bytes())?;
        }
        if self.wants(Format::Json) {
            self.out.write_json(&format!("{stem}.json"), &samples)?;
        }
        Ok(())
    }

    fn write_plot(&mut self, name: &str, plot: &Plot) -> Result<()> {
        if self.wants(Format::Svg) {
            self.out.write(name, plot.render().as_bytes())?;
        }
        Ok(())
    }
}

/// Parses arguments, runs the command and maps failures to a nonzero exit
/// with a JSON error report on stderr (and in `error.json` when possible).
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    let out = cli.out.clone();
    match run(cli) {
        Ok(m) => {
            println!("{}", serde_json::to_string(&m).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({ "command": command, "error": e.to_string(), "kind": error_kind(&e) });
            eprintln!("{report}");
            if let Some(dir) = out {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), report.to_string());
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::InvalidLattice(_) | Error::InvalidSubset(_) | Error::InvalidArgument(_) => "config",
        Error::Io(_) | Error::Json(_) => "io",
        _ => "numerical",
    }
}

pub fn run(cli: Cli) -> Result<RunManifest> {
    let start = Instant::now();
    crate::linalg::sequential_kernels();
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let c = ExperimentConfig::default();
            c.validate()?;
            c
        }
    };
    if let Some(seed) = cli.seed {
        config.seeds.master = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists (tests, repeated calls)
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
    let formats = if cli.format.is_empty() { vec![Format::Csv] } else { cli.format.clone() };
    let resolved = config.to_toml();
    let config_hash = hex::encode(Sha256::digest(resolved.as_bytes()));
    let mut ctx = Ctx {
        out: RunDir::create(&config.output.dir)?,
        config,
        formats,
    };
    if cli.command != Command::Plot {
        ctx.out.write("config.resolved.toml", resolved.as_bytes())?;
    }
    log::info!("{} -> {}", cli.command.name(), ctx.out.path().display());
    match cli.command {
        Command::Spectrum => cmd_spectrum(&mut ctx)?,
        Command::Thermalize => cmd_thermalize(&mut ctx)?,
        Command::Mi => cmd_mi(&mut ctx)?,
        Command::Circuit => cmd_circuit(&mut ctx)?,
        Command::Sweep => cmd_sweep(&mut ctx)?,
        Command::Plot => cmd_plot(&mut ctx)?,
    }
    let mut manifest = RunManifest {
        command: cli.command.name().to_string(),
        config_hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: ctx.out.files.clone(),
        master_seed: ctx.config.seeds.master,
        threads: rayon::current_num_threads(),
    };
    manifest.files.push("manifest.json".into());
    ctx.out.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn sector_setup(config: &ExperimentConfig) -> Result<SectorSetup> {
    if config.mode != Mode::SectorExact {
        return Err(Error::Config("this command needs mode = \"sector_exact\"".into()));
    }
    SectorSetup::new(
        &config.params(),
        config.lattice.length,
        config.lattice.up_count,
        config.pattern()?,
        config.test_subset()?,
        config.metrics.thermal_mode.into(),
    )
}

#[derive(Serialize)]
struct BetaReport {
    beta_star: f64,
    initial_energy: f64,
    thermal_energy: f64,
    e_min: f64,
    e_max: f64,
    dim: usize,
    length: usize,
    basis: String,
    dos_bandwidth: f64,
}

pub fn cmd_spectrum_to(config: &ExperimentConfig, out: &Path, formats: &[Format]) -> Result<()> {
    let mut ctx = Ctx {
        config: config.clone(),
        formats: formats.to_vec(),
        out: RunDir::create(out)?,
    };
    cmd_spectrum(&mut ctx)
}

fn cmd_spectrum(ctx: &mut Ctx) -> Result<()> {
    let c = &ctx.config;
    let (params, basis) = match c.mode {
        Mode::SectorExact => (c.params(), SectorBasis::sector(LatticeSpec::new(c.lattice.length, c.lattice.up_count)?)?),
        Mode::Circuit => (c.params().with_xx_term(XxTerm::Literal), SectorBasis::full(c.circuit.qubits)?),
    };
    let basis = Arc::new(basis);
    let spectrum = Arc::new(Spectrum::compute(&params, basis.clone())?);
    let psi0 = StateVector::product(basis.clone(), c.pattern()?)?;
    let e0 = spectrum.energy_of(psi0.amps());
    let dos = density_of_states(&spectrum.eigenvalues, c.spectrum.bandwidth, c.spectrum.dos_points)?;
    let reference = solve_beta_star(spectrum.clone(), e0);
    let mut buf = Vec::new();
    spectrum.write_csv(&mut buf)?;
    ctx.out.write("spectrum.csv", &buf)?;
    buf.clear();
    dos.write_csv(&mut buf)?;
    ctx.out.write("dos.csv", &buf)?;
    let beta = reference.as_ref().map(|r| r.beta_star).unwrap_or(f64::NAN);
    let report = BetaReport {
        beta_star: beta,
        initial_energy: e0,
        thermal_energy: reference.as_ref().map(|r| r.thermal_energy).unwrap_or(f64::NAN),
        e_min: spectrum.min(),
        e_max: spectrum.max(),
        dim: basis.dim(),
        length: basis.length(),
        basis: basis.id().to_string(),
        dos_bandwidth: dos.bandwidth,
    };
    ctx.out.write_json("beta_star.json", &report)?;
    if let Err(e) = &reference {
        log::warn!("no beta*: {e}");
    }
    let mut plot = Plot::new(format!("Density of states, {}", basis.id()), "energy", "scaled density");
    plot.push(Series::new("DOS", &dos.energies, &dos.density));
    plot.vline(e0, format!("E0, beta* = {beta:.3}"));
    ctx.write_plot("spectrum.svg", &plot)
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    noisy_sites: Vec<usize>,
    kappa_noisy: f64,
    kappa_plain: f64,
    noisy_flat: bool,
    plain_flat: bool,
    ratio: KappaRatio,
    final_noisy: f64,
    final_plain: f64,
    noisy_recurrences: usize,
    plain_recurrences: usize,
}

#[derive(Serialize)]
struct VariantSummary {
    label: String,
    window: (f64, f64),
    shock_steps: Vec<usize>,
    ratio_median: f64,
    ratio_iqr: f64,
    kappa_noisy_median: f64,
    kappa_noisy_iqr: f64,
    plain_non_thermalizing: usize,
    seeds: Vec<SeedSummary>,
}

#[derive(Serialize)]
struct ThermalizeReport {
    metric: MetricKind,
    beta_star: f64,
    thermal_energy: f64,
    variants: Vec<VariantSummary>,
}

fn metric_series(
    metric: MetricKind,
    reduced: &[crate::linalg::CMat],
    energies: &[f64],
    setup: &SectorSetup,
) -> Result<Vec<f64>> {
    match metric {
        MetricKind::EnergyRatio => energies.iter().map(|&e| metrology::energy_ratio(e, &setup.reference)).collect(),
        MetricKind::MutualInfo => Err(Error::Config("mutual_info belongs to the mi command".into())),
        m => reduced.iter().map(|r| metrology::subset_metric(m, r, &setup.thermal_test)).collect(),
    }
}

fn samples(times: &[f64], tag: &str, metric: MetricKind, values: &[f64], protocol: &str, seed: u64) -> Vec<MetricSample> {
    times
        .iter()
        .zip(values)
        .map(|(&time, &value)| MetricSample {
            time,
            subset: tag.to_string(),
            metric,
            value,
            protocol: protocol.to_string(),
            seed,
        })
        .collect()
}

fn cmd_thermalize(ctx: &mut Ctx) -> Result<()> {
    let c = ctx.config.clone();
    let setup = sector_setup(&c)?;
    let plain = setup.plain(c.schedule.t_max, c.schedule.n_steps, &[])?;
    let seeds = c.seeds();
    let variants = c.noise_variants();
    let protocols = variants.iter().map(|v| v.protocol()).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..variants.len()).flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let results: Vec<Result<Comparison>> = jobs
        .par_iter()
        .map(|&(v, s)| experiment::compare(&setup, &plain, &protocols[v], c.metrics.fit, s))
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let tag = "T";
    for &m in &c.metrics.list {
        let v = metric_series(m, &plain.reduced[0], &plain.energies, &setup)?;
        rows.extend(samples(&plain.times, tag, m, &v, "plain", c.seeds.master));
    }
    let mut report = ThermalizeReport {
        metric: c.metrics.fit,
        beta_star: setup.reference.beta_star,
        thermal_energy: setup.reference.thermal_energy,
        variants: Vec::new(),
    };
    let mut plot = Plot::new(format!("{} to the thermal state", c.metrics.fit), "time", c.metrics.fit.name());
    plot.push(Series::new("plain", &plain.times, &results[0].plain).style(Style::Dotted).color("#000000"));
    for (v, variant) in variants.iter().enumerate() {
        let label = variant.label()?;
        let group: Vec<&Comparison> = results.iter().zip(&jobs).filter(|(_, j)| j.0 == v).map(|(r, _)| r).collect();
        for r in &group {
            for &m in &c.metrics.list {
                let vals = metric_series(m, &r.noisy_record.reduced[0], &r.noisy_record.energies, &setup)?;
                rows.extend(samples(&r.times, tag, m, &vals, &label, r.seed));
            }
        }
        let ratios: Vec<f64> = group.iter().filter_map(|r| r.ratio.value()).collect();
        let kn: Vec<f64> = group.iter().map(|r| r.noisy_fit.kappa).collect();
        let median_curve: Vec<f64> = (0..plain.times.len())
            .map(|k| median(&group.iter().map(|r| r.noisy[k]).collect::<Vec<_>>()))
            .collect();
        plot.push(Series::new(format!("{label} (median)"), &plain.times, &median_curve));
        report.variants.push(VariantSummary {
            label,
            window: (group[0].noisy_fit.t_lo, group[0].noisy_fit.t_hi),
            shock_steps: group[0].shock_steps.clone(),
            ratio_median: median(&ratios),
            ratio_iqr: if ratios.is_empty() { f64::NAN } else { iqr(&ratios) },
            kappa_noisy_median: median(&kn),
            kappa_noisy_iqr: iqr(&kn),
            plain_non_thermalizing: group.iter().filter(|r| r.ratio.value().is_none()).count(),
            seeds: group
                .iter()
                .map(|r| SeedSummary {
                    seed: r.seed,
                    noisy_sites: r.noisy_sites.clone(),
                    kappa_noisy: r.noisy_fit.kappa,
                    kappa_plain: r.plain_fit.kappa,
                    noisy_flat: r.noisy_fit.flat,
                    plain_flat: r.plain_fit.flat,
                    ratio: r.ratio,
                    final_noisy: *r.noisy.last().unwrap_or(&f64::NAN),
                    final_plain: *r.plain.last().unwrap_or(&f64::NAN),
                    noisy_recurrences: r.noisy_recurrence.count,
                    plain_recurrences: r.plain_recurrence.count,
                })
                .collect(),
        });
    }
    ctx.write_samples("metrics", &rows)?;
    ctx.out.write_json("fits.json", &report)?;
    ctx.write_plot("thermalize.svg", &plot)
}

/// First time a series reaches `fraction` of its plateau (mean of the last fifth).
pub fn onset_time(times: &[f64], values: &[f64], fraction: f64) -> f64 {
    let tail = &values[values.len() - (values.len() / 5).max(1)..];
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    times
        .iter()
        .zip(values)
        .find(|(_, &v)| v >= fraction * plateau)
        .map(|(&t, _)| t)
        .unwrap_or(f64::INFINITY)
}

#[derive(Serialize)]
struct MiSummary {
    label: String,
    n: Vec<usize>,
    t: Vec<usize>,
    plain_onset: f64,
    plain_plateau: f64,
    noisy_onset_median: f64,
    noisy_plateau_median: f64,
}

fn cmd_mi(ctx: &mut Ctx) -> Result<()> {
    let c = ctx.config.clone();
    if c.subsets.mi.is_empty() {
        return Err(Error::Config("mi needs at least one [[subsets.mi]] pair".into()));
    }
    let setup = sector_setup(&c)?;
    let l = c.lattice.length;
    let noise = c.noise.shock_noise()?;
    let plan = ShockPlan {
        first_step: c.noise.first_step,
        count: c.noise.count,
    };
    let seeds = c.seeds();
    let times = crate::dynamics::EvolutionSchedule::plain(c.schedule.t_max, c.schedule.n_steps)?.times();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut plot = Plot::new("Mutual information I(N:T)", "time", "I(N:T) [nats]");
    for (i, pair) in c.subsets.mi.iter().enumerate() {
        let n = SiteSubset::new(pair.n.clone(), SubsetRole::Noisy, l)?;
        let t = SiteSubset::new(pair.t.clone(), SubsetRole::Test, l)?;
        let plain = experiment::mutual_information_run(&setup, &n, &t, c.schedule.t_max, c.schedule.n_steps, None, 0)?;
        let noisy = seeds
            .par_iter()
            .map(|&s| {
                experiment::mutual_information_run(&setup, &n, &t, c.schedule.t_max, c.schedule.n_steps, Some((&noise, plan)), s)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(samples(&times, &pair.label, MetricKind::MutualInfo, &plain, "plain", c.seeds.master));
        for (s, v) in seeds.iter().zip(&noisy) {
            rows.extend(samples(&times, &pair.label, MetricKind::MutualInfo, v, "noisy", *s));
        }
        let med: Vec<f64> = (0..times.len()).map(|k| median(&noisy.iter().map(|v| v[k]).collect::<Vec<_>>())).collect();
        let color = crate::svg::PALETTE[i % crate::svg::PALETTE.len()];
        plot.push(Series::new(format!("{} plain", pair.label), &times, &plain).style(Style::Dotted).color(color));
        plot.push(Series::new(format!("{} noisy", pair.label), &times, &med).color(color));
        let plateau = |v: &[f64]| {
            let tail = &v[v.len() - (v.len() / 5).max(1)..];
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        summaries.push(MiSummary {
            label: pair.label.clone(),
            n: pair.n.clone(),
            t: pair.t.clone(),
            plain_onset: onset_time(&times, &plain, 0.1),
            plain_plateau: plateau(&plain),
            noisy_onset_median: median(&noisy.iter().map(|v| onset_time(&times, v, 0.1)).collect::<Vec<_>>()),
            noisy_plateau_median: median(&noisy.iter().map(|v| plateau(v)).collect::<Vec<_>>()),
        });
    }
    ctx.write_samples("mi", &rows)?;
    ctx.out.write_json("mi_summary.json", &summaries)?;
    ctx.write_plot("mi.svg", &plot)
}

fn cmd_circuit(ctx: &mut Ctx) -> Result<()> {
    let c = ctx.config.clone();
    if c.mode != Mode::Circuit {
        return Err(Error::Config("circuit needs mode = \"circuit\"".into()));
    }
    let q = c.circuit.qubits;
    let setup = CircuitSetup::new(&c.params(), q, c.pattern()?, c.test_subset()?)?;
    let circuit = setup.circuit(c.schedule.t_max, c.circuit.n_steps, c.circuit.order)?;
    let mut dump = Vec::new();
    circuit.write_dump(&mut dump)?;
    ctx.out.write("circuit.txt", &dump)?;
    let cmp = experiment::circuit_comparison(&setup, &circuit, c.circuit.noise_p, c.circuit.n_traj, c.seeds.master, c.metrics.fit)?;
    let mut rows = Vec::new();
    let runs = [cmp.noiseless_run.as_ref(), cmp.noisy_run.as_ref()];
    for run in runs.into_iter().flatten() {
        for &m in &c.metrics.list {
            if matches!(m, MetricKind::EnergyRatio | MetricKind::MutualInfo) {
                continue;
            }
            let v = run.distance_series(0, &setup.thermal_test, m)?;
            rows.extend(run.samples("T", m, &v));
        }
    }
    ctx.write_samples("metrics", &rows)?;
    #[derive(Serialize)]
    struct Report<'a> {
        beta_star: f64,
        #[serde(flatten)]
        comparison: &'a experiment::CircuitComparison,
    }
    ctx.out.write_json(
        "recurrence.json",
        &Report {
            beta_star: setup.reference.beta_star,
            comparison: &cmp,
        },
    )?;
    let mut plot = Plot::new(format!("{q}-qubit Trotter circuit"), "time", c.metrics.fit.name());
    plot.push(Series::new("noiseless", &cmp.times, &cmp.noiseless).style(Style::Dotted));
    plot.push(Series::new(format!("phase flip p = {}", cmp.noise_p), &cmp.times, &cmp.noisy));
    ctx.write_plot("circuit.svg", &plot)
}

#[derive(Serialize)]
struct TrendReport {
    linear_vs_constant_residual_ratio: f64,
    linear_slope: f64,
    log_vs_linear_residual_ratio: f64,
}

fn cmd_sweep(ctx: &mut Ctx) -> Result<()> {
    let c = ctx.config.clone();
    let sweep = c.sweep.clone().ok_or_else(|| Error::Config("sweep needs a [sweep] table".into()))?;
    if c.mode != Mode::SectorExact {
        return Err(Error::Config("sweep needs mode = \"sector_exact\"".into()));
    }
    let spec = SweepSpec {
        params: c.params(),
        length: c.lattice.length,
        up_count: c.lattice.up_count,
        t_max: c.schedule.t_max,
        n_steps: c.schedule.n_steps,
        test_tail: c.test_subset()?.len(),
        metric: c.metrics.fit,
        protocol: c.noise.protocol()?,
    };
    let result = experiment::run_axis_sweep(&spec, sweep.axis, &sweep.grid, &c.seeds())?;
    write_sweep(ctx, &result)
}

fn write_sweep(ctx: &mut Ctx, result: &SweepResult) -> Result<()> {
    ctx.out.write_json("sweep.json", result)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    ctx.out.write("sweep.csv", &buf)?;
    let (x, y): (Vec<f64>, Vec<f64>) = result
        .points
        .iter()
        .filter(|p| p.ratio_median.is_finite())
        .map(|p| (p.value, p.ratio_median))
        .unzip();
    if x.len() >= 3 {
        let lin = linear_vs_constant(&x, &y);
        let trend = TrendReport {
            linear_vs_constant_residual_ratio: lin.residual_ratio(),
            linear_slope: lin.slope,
            log_vs_linear_residual_ratio: if x.iter().all(|&v| v > 0.0) { log_vs_linear(&x, &y).residual_ratio() } else { f64::NAN },
        };
        ctx.out.write_json("trend.json", &trend)?;
    }
    ctx.write_plot("sweep.svg", &sweep_plot(result))
}

fn sweep_plot(result: &SweepResult) -> Plot {
    let mut plot = Plot::new(format!("kappa_noisy / kappa_plain vs {}", result.axis.name()), result.axis.name(), "ratio (median, IQR)");
    let x: Vec<f64> = result.points.iter().map(|p| p.value).collect();
    let y: Vec<f64> = result.points.iter().map(|p| p.ratio_median).collect();
    let e: Vec<f64> = result.points.iter().map(|p| p.ratio_iqr / 2.0).collect();
    plot.push(Series::new("median ratio", &x, &y).style(Style::LineMarkers).errors(e));
    plot
}

fn cmd_plot(ctx: &mut Ctx) -> Result<()> {
    ctx.formats = vec![Format::Svg];
    let dir = ctx.out.path().to_path_buf();
    let mut any = false;
    for stem in ["metrics", "mi"] {
        let path = dir.join(format!("{stem}.csv"));
        if !path.exists() {
            continue;
        }
        any = true;
        let text = std::fs::read_to_string(&path)?;
        for (metric, plot) in plots_from_csv(&text)? {
            ctx.write_plot(&format!("{stem}_{metric}.svg"), &plot)?;
        }
    }
    let sweep = dir.join("sweep.json");
    if sweep.exists() {
        any = true;
        let result: SweepResult = serde_json::from_str(&std::fs::read_to_string(sweep)?)?;
        ctx.write_plot("sweep.svg", &sweep_plot(&result))?;
    }
    let dos = dir.join("dos.csv");
    if dos.exists() {
        any = true;
        let text = std::fs::read_to_string(dos)?;
        let (x, y) = two_columns(&text)?;
        let mut plot = Plot::new("Density of states", "energy", "scaled density");
        plot.push(Series::new("DOS", &x, &y));
        if let Ok(b) = std::fs::read_to_string(dir.join("beta_star.json")) {
            let v: serde_json::Value = serde_json::from_str(&b)?;
            if let (Some(e0), Some(beta)) = (v["initial_energy"].as_f64(), v["beta_star"].as_f64()) {
                plot.vline(e0, format!("E0, beta* = {beta:.3}"));
            }
        }
        ctx.write_plot("spectrum.svg", &plot)?;
    }
    if !any {
        return Err(Error::Config(format!("nothing to plot in {}", dir.display())));
    }
    Ok(())
}

fn two_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut it = line.split(',').map(|v| v.trim().parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(b))) => {
                x.push(a);
                y.push(b);
            }
            _ => return Err(Error::Config(format!("bad row {line:?}"))),
        }
    }
    Ok((x, y))
}

type LineKey = (String, String, u64);
type Lines = BTreeMap<LineKey, (Vec<f64>, Vec<f64>)>;

/// One plot per metric from a metrics table; one line per (subset, protocol, seed).
pub fn plots_from_csv(text: &str) -> Result<Vec<(String, Plot)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(METRIC_CSV_HEADER) {
        return Err(Error::Config(format!("metrics table must start with {METRIC_CSV_HEADER:?}")));
    }
    let mut groups: BTreeMap<String, Lines> = BTreeMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Config(format!("bad row {line:?}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("bad number in {line:?}")));
        let seed = f[5].parse::<u64>().map_err(|_| Error::Config(format!("bad seed in {line:?}")))?;
        let e = groups
            .entry(f[2].to_string())
            .or_default()
            .entry((f[1].to_string(), f[4].to_string(), seed))
            .or_default();
        e.0.push(parse(f[0])?);
        e.1.push(parse(f[3])?);
    }
    Ok(groups
        .into_iter()
        .map(|(metric, lines)| {
            let mut plot = Plot::new(metric.clone(), "time", metric.clone());
            for ((subset, protocol, seed), (x, y)) in lines {
                let style = if protocol == "plain" || protocol == "circuit_plain" { Style::Dotted } else { Style::Solid };
                plot.push(Series::new(format!("{subset} {protocol} s{seed}"), &x, &y).style(style).width(1.0));
            }
            (metric, plot)
        })
        .collect())
}

/// Summary statistics used by reports.
pub fn ratio_summary(ratios: &[KappaRatio]) -> (f64, f64, usize) {
    let v: Vec<f64> = ratios.iter().filter_map(|r| r.value()).collect();
    let markers = ratios.len() - v.len();
    (median(&v), if v.is_empty() { f64::NAN } else { analysis::iqr(&v) }, markers)
}
