//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] from an optional config file
//! (TOML, or JSON) overridden by flags, runs, and writes its artifacts plus
//! a `metadata.json` holding the resolved configuration. That metadata file
//! can be passed back through `--config` to reproduce the run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_curve, RadioConfig};
use crate::error::{Error, Result};
use crate::fitting::{fit, fit_gibbs_pseudolikelihood, FitConfig, FitResult};
use crate::geometry::{load_csv, mean_latitude, project, read_pattern_csv, sample_regions, write_pattern_csv, PointPattern, Window};
use crate::hypothesis::{envelope_test, format_outage_table, run_batch, BatchConfig, DataSource, EnvelopeConfig, Metric};
use crate::models::{simulate, McmcConfig, ModelKind, ProcessModel};

#[derive(Debug, Parser)]
#[command(name = "cellpp", version, about = "Point process modelling of base station deployments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Master seed (required by stochastic commands unless set in the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config file, TOML or JSON. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one realisation of a model.
    Simulate {
        /// Model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Window JSON.
        #[arg(long)]
        window: Option<PathBuf>,
        /// MCMC steps for Gibbs models.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Fit a model to a pattern.
    Fit {
        #[command(flatten)]
        input: PatternArgs,
        /// ppp, hardcore, strauss, geyer, mcp or tcp.
        #[arg(long)]
        variant: Option<String>,
        /// Fixed interaction radius for Gibbs models (skips the profile).
        #[arg(long)]
        r: Option<f64>,
        /// Fixed Geyer saturation, used with --r.
        #[arg(long)]
        sat: Option<u32>,
    },
    /// Simultaneous envelope test of a model against a pattern.
    Envelope {
        #[command(flatten)]
        input: PatternArgs,
        /// Fitted model: FitResult JSON or model JSON.
        #[arg(long)]
        fitted: Option<PathBuf>,
        /// Fit this variant first instead of reading --fitted.
        #[arg(long)]
        variant: Option<String>,
        /// L or coverage.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        n_sim: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Coverage probability curve of a pattern.
    Coverage {
        #[command(flatten)]
        input: PatternArgs,
        #[arg(long)]
        n_users: Option<usize>,
    },
    /// Fit and test candidate models over many sampled regions.
    Batch {
        /// Parent pattern CSV (or use --generator).
        #[arg(long)]
        pattern: Option<PathBuf>,
        /// Parent window JSON.
        #[arg(long)]
        window: Option<PathBuf>,
        /// Model JSON simulated independently in every region.
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Number of regions.
        #[arg(long)]
        regions: Option<usize>,
        /// Region size as WIDTHxHEIGHT in km, e.g. 6x6.
        #[arg(long)]
        region_size: Option<String>,
        /// Comma-separated candidate list.
        #[arg(long)]
        candidates: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        n_sim: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        /// Row label in the outage table.
        #[arg(long)]
        label: Option<String>,
    },
    /// Project a base station CSV (id,lon,lat,kind) to a planar pattern.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    /// Pattern CSV with x,y[,kind] columns.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Window JSON.
    #[arg(long)]
    pub window: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeSection {
    pub n_sim: usize,
    pub rank: usize,
    pub grid_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        let e = EnvelopeConfig::default();
        EnvelopeSection {
            n_sim: e.n_sim,
            rank: e.rank,
            grid_len: e.grid_len,
            r_max: e.r_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchSection {
    pub regions: usize,
    /// Region width and height in km.
    pub region_size: [f64; 2],
    pub candidates: Vec<ModelKind>,
    pub label: String,
    pub clustering_grid_len: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        BatchSection {
            regions: 100,
            region_size: [6.0, 6.0],
            candidates: ModelKind::ALL.to_vec(),
            label: "Region".into(),
            clustering_grid_len: BatchConfig::default().clustering_grid_len,
        }
    }
}

/// Resolved settings of a run. Unused sections are harmless.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    /// Model to simulate, to test, or to generate batch regions from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ProcessModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<ModelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sat: Option<u32>,
    pub metric: Option<Metric>,
    pub envelope: EnvelopeSection,
    pub mcmc: McmcConfig,
    pub fit: FitConfig,
    pub radio: RadioConfig,
    pub batch: BatchSection,
}

impl RunConfig {
    fn envelope_config(&self) -> EnvelopeConfig {
        EnvelopeConfig {
            n_sim: self.envelope.n_sim,
            rank: self.envelope.rank,
            grid_len: self.envelope.grid_len,
            r_max: self.envelope.r_max,
            radio: self.radio.clone(),
            mcmc: self.mcmc.clone(),
        }
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a master seed is required (--seed or `seed` in the config)".into()))
    }

    fn require_window(&self) -> Result<Window> {
        self.window.ok_or_else(|| Error::Config("a window is required (--window or `window` in the config)".into()))
    }

    fn require_pattern(&self) -> Result<PointPattern> {
        let path = self
            .pattern
            .as_ref()
            .ok_or_else(|| Error::Config("a pattern CSV is required (--pattern)".into()))?;
        let window = self.require_window()?;
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_pattern_csv(file, window)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    command: String,
    version: String,
    config: RunConfig,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a TOML or JSON config. A `metadata.json` written by a previous run
/// is accepted and yields that run's configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = read_text(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    let fail = |e: String| Error::Config(format!("{}: {e}", path.display()));
    if is_json {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        if value.get("command").is_some() && value.get("config").is_some() {
            let meta: Metadata = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
            return Ok(meta.config);
        }
        serde_json::from_value(value).map_err(|e| fail(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| fail(e.to_string()))
    }
}

fn parse_kind(s: &str) -> Result<ModelKind> {
    s.trim().parse()
}

fn parse_size(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    let bad = || Error::Config(format!("region size `{s}` must look like 6x6"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let w: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let h: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    Ok([w, h])
}

/// Files produced by a command, written only after every one of them is
/// known not to clobber an existing file (unless forced).
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Outputs { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn write(self, force: bool) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = self.files.iter().map(|(n, _)| self.dir.join(n)).collect();
        if !force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display())));
            }
        }
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for (path, (_, bytes)) in paths.iter().zip(&self.files) {
            fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

fn metadata(outputs: &mut Outputs, command: &str, cfg: &RunConfig, details: serde_json::Value) -> Result<()> {
    outputs.add_json(
        "metadata.json",
        &Metadata {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            details,
        },
    )
}

fn pattern_bytes(pattern: &PointPattern) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_pattern_csv(pattern, &mut buf)?;
    Ok(buf)
}

fn load_window(path: &Option<PathBuf>, cfg: &mut RunConfig) -> Result<()> {
    if let Some(p) = path {
        cfg.window = Some(read_json(p)?);
    }
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Applies the subcommand's flags to `cfg`.
fn apply_flags(command: &Command, cfg: &mut RunConfig) -> Result<()> {
    match command {
        Command::Simulate { model, window, steps } => {
            if let Some(p) = model {
                cfg.model = Some(read_json(p)?);
            }
            load_window(window, cfg)?;
            set(&mut cfg.mcmc.n_steps, *steps);
            if steps.is_some() {
                cfg.mcmc.burn_in = cfg.mcmc.n_steps;
            }
        }
        Command::Fit { input, variant, r, sat } => {
            set(&mut cfg.pattern, input.pattern.clone().map(Some));
            load_window(&input.window, cfg)?;
            if let Some(v) = variant {
                cfg.variant = Some(parse_kind(v)?);
            }
            set(&mut cfg.r, r.map(Some));
            set(&mut cfg.sat, sat.map(Some));
        }
        Command::Envelope {
            input,
            fitted,
            variant,
            metric,
            n_sim,
            rank,
            steps,
        } => {
            set(&mut cfg.pattern, input.pattern.clone().map(Some));
            load_window(&input.window, cfg)?;
            if let Some(p) = fitted {
                let value: serde_json::Value = read_json(p)?;
                let model = if value.get("model").is_some() {
                    serde_json::from_value::<FitResult>(value)?.model
                } else {
                    serde_json::from_value::<ProcessModel>(value)?
                };
                cfg.model = Some(model);
            }
            if let Some(v) = variant {
                cfg.variant = Some(parse_kind(v)?);
            }
            if let Some(m) = metric {
                cfg.metric = Some(m.parse()?);
            }
            set(&mut cfg.envelope.n_sim, *n_sim);
            set(&mut cfg.envelope.rank, *rank);
            set(&mut cfg.mcmc.n_steps, *steps);
            if steps.is_some() {
                cfg.mcmc.burn_in = cfg.mcmc.n_steps;
            }
        }
        Command::Coverage { input, n_users } => {
            set(&mut cfg.pattern, input.pattern.clone().map(Some));
            load_window(&input.window, cfg)?;
            set(&mut cfg.radio.n_users, *n_users);
        }
        Command::Batch {
            pattern,
            window,
            generator,
            regions,
            region_size,
            candidates,
            metric,
            n_sim,
            rank,
            steps,
            label,
        } => {
            set(&mut cfg.pattern, pattern.clone().map(Some));
            load_window(window, cfg)?;
            if let Some(p) = generator {
                cfg.model = Some(read_json(p)?);
            }
            set(&mut cfg.batch.regions, *regions);
            if let Some(s) = region_size {
                cfg.batch.region_size = parse_size(s)?;
            }
            if let Some(c) = candidates {
                cfg.batch.candidates = c.split(',').map(parse_kind).collect::<Result<_>>()?;
            }
            if let Some(m) = metric {
                cfg.metric = Some(m.parse()?);
            }
            set(&mut cfg.envelope.n_sim, *n_sim);
            set(&mut cfg.envelope.rank, *rank);
            set(&mut cfg.mcmc.n_steps, *steps);
            if steps.is_some() {
                cfg.mcmc.burn_in = cfg.mcmc.n_steps;
            }
            set(&mut cfg.batch.label, label.clone());
        }
        Command::Ingest { input } => {
            set(&mut cfg.input, input.clone().map(Some));
        }
    }
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let seed = cfg.require_seed()?;
    let model = cfg.model.as_ref().ok_or_else(|| Error::Config("a model is required (--model)".into()))?;
    let window = cfg.require_window()?;
    let pattern = simulate(model, &window, seed, &cfg.mcmc)?;
    out.add("pattern.csv", pattern_bytes(&pattern)?);
    metadata(out, "simulate", cfg, serde_json::json!({ "n_points": pattern.len() }))
}

fn cmd_fit(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let pattern = cfg.require_pattern()?;
    let kind = cfg.variant.ok_or_else(|| Error::Config("a model variant is required (--variant)".into()))?;
    let result = match cfg.r {
        Some(r) if kind.is_gibbs() => fit_gibbs_pseudolikelihood(&pattern, kind, r, cfg.sat, &cfg.fit)?,
        _ => fit(&pattern, kind, &cfg.fit)?,
    };
    out.add_json("fit.json", &result)?;
    metadata(out, "fit", cfg, serde_json::json!({ "n_points": pattern.len() }))
}

fn cmd_envelope(cfg: &mut RunConfig, out: &mut Outputs) -> Result<()> {
    let seed = cfg.require_seed()?;
    let pattern = cfg.require_pattern()?;
    if cfg.model.is_none() {
        let kind = cfg
            .variant
            .ok_or_else(|| Error::Config("a fitted model (--fitted) or a variant to fit (--variant) is required".into()))?;
        cfg.model = Some(fit(&pattern, kind, &cfg.fit)?.model);
    }
    let metric = *cfg.metric.get_or_insert(Metric::L);
    let env_cfg = cfg.envelope_config();
    let model = cfg.model.expect("model resolved above");
    let result = envelope_test(&pattern, &model, metric, &env_cfg, seed)?;
    out.add_json("envelope.json", &result)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv).map_err(|e| Error::io("envelope.csv", e))?;
    out.add("envelope.csv", csv);
    metadata(
        out,
        "envelope",
        cfg,
        serde_json::json!({
            "n_sim": env_cfg.n_sim,
            "rank": env_cfg.rank,
            "significance": env_cfg.significance(),
            "reject": result.reject,
        }),
    )
}

fn cmd_coverage(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let seed = cfg.require_seed()?;
    let pattern = cfg.require_pattern()?;
    let curve = coverage_curve(&pattern, &cfg.radio, seed)?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv, "threshold_db", "coverage").map_err(|e| Error::io("coverage.csv", e))?;
    out.add("coverage.csv", csv);
    metadata(out, "coverage", cfg, serde_json::json!({ "n_users": cfg.radio.n_users }))
}

fn cmd_batch(cfg: &mut RunConfig, out: &mut Outputs) -> Result<()> {
    let seed = cfg.require_seed()?;
    let parent = cfg.require_window()?;
    let source = match (&cfg.pattern, &cfg.model) {
        (Some(_), None) => DataSource::Pattern(cfg.require_pattern()?),
        (None, Some(m)) => DataSource::Generator(*m),
        (Some(_), Some(_)) => return Err(Error::Config("give either a parent pattern or a generator model, not both".into())),
        (None, None) => return Err(Error::Config("a parent pattern (--pattern) or generator (--generator) is required".into())),
    };
    let [w, h] = cfg.batch.region_size;
    let regions = sample_regions(&parent, (w, h), cfg.batch.regions, seed)?;
    let metric = *cfg.metric.get_or_insert(Metric::L);
    let batch_cfg = BatchConfig {
        candidates: cfg.batch.candidates.clone(),
        metric,
        envelope: cfg.envelope_config(),
        fit: cfg.fit.clone(),
        clustering_grid_len: cfg.batch.clustering_grid_len,
    };
    let report = run_batch(&regions, &source, &batch_cfg, seed)?;
    out.add_json("batch.json", &report)?;
    let mut csv = Vec::new();
    report.write_regions_csv(&mut csv).map_err(|e| Error::io("regions.csv", e))?;
    out.add("regions.csv", csv);
    out.add("outage.txt", format_outage_table(&[(cfg.batch.label.as_str(), &report)]).into_bytes());
    let mut clus = Vec::new();
    report.clustering.write_csv(&mut clus, "r", "p_cluster").map_err(|e| Error::io("clustering.csv", e))?;
    out.add("clustering.csv", clus);
    metadata(
        out,
        "batch",
        cfg,
        serde_json::json!({
            "n_regions": report.n_regions,
            "n_tested": report.n_tested,
            "n_skipped": report.n_skipped,
            "significance": report.significance,
        }),
    )
}

fn cmd_ingest(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let path = cfg.input.as_ref().ok_or_else(|| Error::Config("an input CSV is required (--input)".into()))?;
    let records = load_csv(path)?;
    let ref_lat = mean_latitude(&records).ok_or_else(|| Error::InvalidPattern("input has no records".into()))?;
    let pattern = project(&records, ref_lat)?;
    out.add("pattern.csv", pattern_bytes(&pattern)?);
    out.add_json("window.json", pattern.window())?;
    metadata(
        out,
        "ingest",
        cfg,
        serde_json::json!({
            "n_points": pattern.len(),
            "reference_latitude": ref_lat,
            "area_km2": pattern.window().area(),
            "intensity": pattern.intensity(),
        }),
    )
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = Some(s);
    }
    apply_flags(&cli.command, &mut cfg)?;
    for w in cfg.radio.warnings() {
        eprintln!("warning: {w}");
    }
    let mut out = Outputs::new(cli.common.out.clone().unwrap_or_else(|| PathBuf::from(".")));
    match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg, &mut out)?,
        Command::Fit { .. } => cmd_fit(&cfg, &mut out)?,
        Command::Envelope { .. } => cmd_envelope(&mut cfg, &mut out)?,
        Command::Coverage { .. } => cmd_coverage(&cfg, &mut out)?,
        Command::Batch { .. } => cmd_batch(&mut cfg, &mut out)?,
        Command::Ingest { .. } => cmd_ingest(&cfg, &mut out)?,
    }
    out.write(cli.common.force)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the written file paths.
pub fn run<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run_parsed(&cli)
}

pub fn run_parsed(cli: &Cli) -> Result<Vec<PathBuf>> {
    match cli.common.jobs {
        Some(0) => Err(Error::Config("--jobs must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| execute(cli))
        }
        None => execute(cli),
    }
}
