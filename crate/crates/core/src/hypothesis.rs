//! Monte Carlo goodness-of-fit testing.
//!
//! The simultaneous envelope test simulates the fitted model `n_sim` times,
//! measures each simulated curve's largest absolute deviation from the
//! expected curve, and takes the `rank`-th largest of those as the band
//! half-width `dev`. The model is rejected when the observed curve leaves
//! `expected ± dev` anywhere; the level is exactly `rank / (n_sim + 1)`.
//!
//! [`run_batch`] repeats fit-then-test over many regions and reports, per
//! model, the fraction of regions where it was rejected (its outage
//! probability).

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_values, RadioConfig};
use crate::error::{Error, Result};
use crate::fitting::{fit, min_points, FitConfig};
use crate::geometry::{clip, Mark, PointPattern, Window};
use crate::models::{simulate, McmcConfig, ModelKind, ProcessModel};
use crate::rng::{self, derive_seed, tag};
use crate::summaries::{l_function, DistanceGrid, SummaryCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// Besag's L over a distance grid.
    L,
    /// Coverage probability over an SIR threshold grid.
    #[serde(rename = "coverage")]
    Coverage,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" => Ok(Metric::L),
            "coverage" => Ok(Metric::Coverage),
            _ => Err(Error::InvalidParameter(format!("unknown metric `{s}` (expected L or coverage)"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::L => "L",
            Metric::Coverage => "coverage",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub n_sim: usize,
    pub rank: usize,
    /// Points in the distance grid for the L metric.
    pub grid_len: usize,
    /// Largest distance for the L metric; defaults to a quarter of the
    /// window's shorter side.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub radio: RadioConfig,
    /// Chain settings for simulating Gibbs models (its seed is ignored).
    pub mcmc: McmcConfig,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            n_sim: 199,
            rank: 10,
            grid_len: crate::summaries::DEFAULT_GRID_LEN,
            r_max: None,
            radio: RadioConfig::default(),
            mcmc: McmcConfig::default(),
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 {
            return Err(Error::InvalidParameter("n_sim must be positive".into()));
        }
        if self.rank == 0 || self.rank > self.n_sim {
            return Err(Error::InvalidParameter(format!(
                "rank must lie in 1..={}, got {}",
                self.n_sim, self.rank
            )));
        }
        if self.grid_len < 2 {
            return Err(Error::InvalidParameter("grid_len must be at least 2".into()));
        }
        self.radio.validate()?;
        self.mcmc.validate()
    }

    pub fn significance(&self) -> f64 {
        self.rank as f64 / (self.n_sim + 1) as f64
    }

    fn grid(&self, window: &Window) -> Result<DistanceGrid> {
        match self.r_max {
            Some(r) => {
                let g = DistanceGrid::uniform(r, self.grid_len)?;
                g.check_window(window)?;
                Ok(g)
            }
            None => Ok(DistanceGrid::quarter_side(window, self.grid_len)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub metric: Metric,
    pub expected: SummaryCurve,
    pub low: SummaryCurve,
    pub high: SummaryCurve,
    pub dev: f64,
    pub observed: SummaryCurve,
    /// Largest absolute deviation of the observed curve from `expected`.
    pub observed_dev: f64,
    pub reject: bool,
    pub n_sim: usize,
    pub rank: usize,
    pub significance: f64,
}

impl EnvelopeResult {
    /// Plot data: `x,observed,expected,low,high` with `x` named `r` or
    /// `threshold_db`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let x = match self.metric {
            Metric::L => "r",
            Metric::Coverage => "threshold_db",
        };
        writeln!(out, "{x},observed,expected,low,high")?;
        for i in 0..self.expected.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.expected.grid[i],
                self.observed.values[i],
                self.expected.values[i],
                self.low.values[i],
                self.high.values[i]
            )?;
        }
        Ok(())
    }
}

/// Envelope from precomputed curves. `expected` defaults to the pointwise
/// mean of `simulated`.
pub fn envelope_from_curves(
    metric: Metric,
    observed: SummaryCurve,
    simulated: &[Vec<f64>],
    expected: Option<Vec<f64>>,
    rank: usize,
) -> Result<EnvelopeResult> {
    let n_sim = simulated.len();
    if rank == 0 || rank > n_sim {
        return Err(Error::InvalidParameter(format!("rank must lie in 1..={n_sim}, got {rank}")));
    }
    let k = observed.len();
    if simulated.iter().any(|s| s.len() != k) {
        return Err(Error::InvalidParameter("simulated curves differ in length from the observed curve".into()));
    }
    let expected = match expected {
        Some(e) => e,
        None => (0..k)
            .map(|j| simulated.iter().map(|s| s[j]).sum::<f64>() / n_sim as f64)
            .collect(),
    };
    let deviation = |v: &[f64]| {
        v.iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let mut devs: Vec<f64> = simulated.iter().map(|s| deviation(s)).collect();
    devs.sort_by(|a, b| b.total_cmp(a));
    let dev = devs[rank - 1];
    let observed_dev = deviation(&observed.values);
    let grid = observed.grid.clone();
    let shifted = |d: f64| SummaryCurve::new(grid.clone(), expected.iter().map(|e| e + d).collect());
    Ok(EnvelopeResult {
        metric,
        low: shifted(-dev)?,
        high: shifted(dev)?,
        expected: SummaryCurve::new(grid.clone(), expected.clone())?,
        dev,
        observed,
        observed_dev,
        reject: observed_dev > dev,
        n_sim,
        rank,
        significance: rank as f64 / (n_sim + 1) as f64,
    })
}

/// L curve, or zero when the pattern has fewer than two points.
fn l_values(pattern: &PointPattern, grid: &DistanceGrid) -> Result<Vec<f64>> {
    if pattern.len() < 2 {
        return Ok(vec![0.0; grid.len()]);
    }
    Ok(l_function(pattern, grid)?.values)
}

/// Marks a simulated pattern like the observed one: each point is a macro
/// station with the observed macro share.
fn mark_like(sim: PointPattern, observed: &PointPattern, seed: u64) -> Result<PointPattern> {
    if observed.marks().is_none() || observed.is_empty() {
        return Ok(sim);
    }
    let share = observed.count_mark(Mark::Macro) as f64 / observed.len() as f64;
    let mut r = rng::seeded(seed);
    let marks = (0..sim.len())
        .map(|_| if r.random::<f64>() < share { Mark::Macro } else { Mark::Micro })
        .collect();
    PointPattern::new(*sim.window(), sim.points().to_vec(), Some(marks))
}

/// Simultaneous envelope test of `model` against `pattern`.
pub fn envelope_test(
    pattern: &PointPattern,
    model: &ProcessModel,
    metric: Metric,
    cfg: &EnvelopeConfig,
    seed: u64,
) -> Result<EnvelopeResult> {
    cfg.validate()?;
    model.validate()?;
    let window = *pattern.window();
    let (observed, grid) = match metric {
        Metric::L => {
            let grid = cfg.grid(&window)?;
            (l_function(pattern, &grid)?, Some(grid))
        }
        Metric::Coverage => {
            if pattern.len() < 2 {
                return Err(Error::Degenerate(format!(
                    "coverage metric needs at least two stations, pattern has {}",
                    pattern.len()
                )));
            }
            let values = coverage_values(pattern, &cfg.radio, derive_seed(seed, tag::OBSERVED_METRIC, 0))?;
            (SummaryCurve::new(cfg.radio.thresholds_db.clone(), values)?, None)
        }
    };
    let simulated: Vec<Vec<f64>> = (0..cfg.n_sim)
        .into_par_iter()
        .map(|i| {
            let sim = simulate(model, &window, derive_seed(seed, tag::ENVELOPE_SIM, i as u64), &cfg.mcmc)?;
            match &grid {
                Some(g) => l_values(&sim, g),
                None => {
                    let metric_seed = derive_seed(seed, tag::ENVELOPE_METRIC, i as u64);
                    let sim = mark_like(sim, pattern, metric_seed)?;
                    coverage_values(&sim, &cfg.radio, metric_seed)
                }
            }
        })
        .collect::<Result<_>>()?;
    let expected = match (metric, model) {
        (Metric::L, ProcessModel::Poisson { .. }) => Some(observed.grid.clone()),
        _ => None,
    };
    envelope_from_curves(metric, observed, &simulated, expected, cfg.rank)
}

/// Fraction of patterns with `L̂(r) > r` at each grid distance.
pub fn clustering_probability(patterns: &[PointPattern], grid: &DistanceGrid) -> Result<SummaryCurve> {
    if patterns.is_empty() {
        return Err(Error::InvalidParameter("clustering probability needs at least one pattern".into()));
    }
    let curves: Vec<SummaryCurve> = patterns
        .par_iter()
        .map(|p| l_function(p, grid))
        .collect::<Result<_>>()?;
    let r = grid.values();
    let n = patterns.len() as f64;
    let values = (0..r.len())
        .map(|j| curves.iter().filter(|c| c.values[j] > r[j]).count() as f64 / n)
        .collect();
    SummaryCurve::new(r.to_vec(), values)
}

/// Where region patterns come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Clip regions out of an observed pattern.
    Pattern(PointPattern),
    /// Simulate each region independently from a model.
    Generator(ProcessModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub candidates: Vec<ModelKind>,
    pub metric: Metric,
    pub envelope: EnvelopeConfig,
    pub fit: FitConfig,
    /// Points in the clustering-probability grid.
    pub clustering_grid_len: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            candidates: ModelKind::ALL.to_vec(),
            metric: Metric::L,
            envelope: EnvelopeConfig::default(),
            fit: FitConfig::default(),
            clustering_grid_len: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    /// `None` when fitting or testing failed.
    pub reject: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<ProcessModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub region_id: usize,
    pub window: Window,
    pub n_points: usize,
    /// Why the region was not tested, if it was not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    pub outcomes: Vec<ModelOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub label: String,
    /// Regions where the model was fitted and tested.
    pub tested: usize,
    pub rejected: usize,
    pub failed: usize,
    /// `rejected / tested`; `None` if nothing was tested.
    pub outage_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub metric: Metric,
    pub n_sim: usize,
    pub rank: usize,
    pub significance: f64,
    pub n_regions: usize,
    pub n_tested: usize,
    pub n_skipped: usize,
    pub point_floor: usize,
    pub summary: Vec<ModelSummary>,
    pub clustering: SummaryCurve,
    pub regions: Vec<RegionRecord>,
}

impl BatchReport {
    pub fn outage(&self, kind: ModelKind) -> Option<f64> {
        self.summary.iter().find(|s| s.model == kind).and_then(|s| s.outage_probability)
    }

    /// One row per model outcome: `region_id,model,reject,n_points`.
    /// Failed fits have an empty `reject` field; skipped regions are omitted.
    pub fn write_regions_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "region_id,model,reject,n_points")?;
        for r in self.regions.iter().filter(|r| r.skipped.is_none()) {
            for o in &r.outcomes {
                let reject = o.reject.map(|b| b.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", r.region_id, o.model.label(), reject, r.n_points)?;
            }
        }
        Ok(())
    }
}

/// Aligned outage table, one row per labelled report and one column per
/// model, entries in percent.
pub fn format_outage_table(rows: &[(&str, &BatchReport)]) -> String {
    let mut models: Vec<ModelKind> = Vec::new();
    for (_, r) in rows {
        for s in &r.summary {
            if !models.contains(&s.model) {
                models.push(s.model);
            }
        }
    }
    models.sort_by_key(|m| ModelKind::ALL.iter().position(|k| k == m));
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Area".to_string())
        .chain(models.iter().map(|m| m.label().to_string()))
        .collect()];
    for (label, r) in rows {
        let mut row = vec![label.to_string()];
        for m in &models {
            row.push(match r.outage(*m) {
                Some(p) => format!("{:.2}%", 100.0 * p),
                None => "-".to_string(),
            });
        }
        cells.push(row);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    format!("{c:<w$}", w = widths[j])
                } else {
                    format!("{c:>w$}", w = widths[j])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn model_index(kind: ModelKind) -> u64 {
    ModelKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

fn region_pattern(source: &DataSource, region: &Window, seed: u64, mcmc: &McmcConfig) -> Result<PointPattern> {
    match source {
        DataSource::Pattern(p) => clip(p, region),
        DataSource::Generator(m) => simulate(m, region, seed, mcmc),
    }
}

/// Fits and tests every candidate on every region.
pub fn run_batch(regions: &[Window], source: &DataSource, cfg: &BatchConfig, seed: u64) -> Result<BatchReport> {
    cfg.envelope.validate()?;
    if cfg.candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate models".into()));
    }
    if regions.is_empty() {
        return Err(Error::InvalidParameter("no regions".into()));
    }
    if let DataSource::Generator(m) = source {
        m.validate()?;
    }
    let mut candidates = cfg.candidates.clone();
    candidates.sort_by_key(|&k| model_index(k));
    candidates.dedup();
    let floor = candidates.iter().map(|&k| min_points(k)).max().unwrap_or(2).max(2);

    let records: Vec<(RegionRecord, Option<PointPattern>)> = regions
        .par_iter()
        .enumerate()
        .map(|(i, region)| {
            let pattern_seed = derive_seed(seed, tag::REGION_PATTERN, i as u64);
            let mut record = RegionRecord {
                region_id: i,
                window: *region,
                n_points: 0,
                skipped: None,
                outcomes: Vec::new(),
            };
            let pattern = match region_pattern(source, region, pattern_seed, &cfg.envelope.mcmc) {
                Ok(p) => p,
                Err(e) => {
                    record.skipped = Some(e.to_string());
                    return (record, None);
                }
            };
            record.n_points = pattern.len();
            if pattern.len() < floor {
                record.skipped = Some(format!("{} points, below the floor of {floor}", pattern.len()));
                return (record, None);
            }
            let region_seed = derive_seed(seed, tag::CANDIDATE, i as u64);
            record.outcomes = candidates
                .iter()
                .map(|&kind| {
                    let test_seed = derive_seed(region_seed, tag::ENVELOPE, model_index(kind));
                    let result = fit(&pattern, kind, &cfg.fit).and_then(|f| {
                        let env = envelope_test(&pattern, &f.model, cfg.metric, &cfg.envelope, test_seed)?;
                        Ok((f.model, env.reject))
                    });
                    match result {
                        Ok((fitted, reject)) => ModelOutcome {
                            model: kind,
                            reject: Some(reject),
                            fitted: Some(fitted),
                            error: None,
                        },
                        Err(e) => ModelOutcome {
                            model: kind,
                            reject: None,
                            fitted: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            (record, Some(pattern))
        })
        .collect();

    let tested: Vec<&PointPattern> = records.iter().filter_map(|(_, p)| p.as_ref()).collect();
    if tested.is_empty() {
        return Err(Error::Degenerate(format!(
            "zero admissible regions: every region has fewer than {floor} points"
        )));
    }
    let shortest = tested
        .iter()
        .map(|p| p.window().shorter_side())
        .fold(f64::INFINITY, f64::min);
    let grid = DistanceGrid::uniform(shortest / 4.0, cfg.clustering_grid_len.max(2))?;
    let owned: Vec<PointPattern> = tested.into_iter().cloned().collect();
    let clustering = clustering_probability(&owned, &grid)?;

    let regions: Vec<RegionRecord> = records.into_iter().map(|(r, _)| r).collect();
    let summary = candidates
        .iter()
        .map(|&kind| {
            let outcomes = regions
                .iter()
                .flat_map(|r| r.outcomes.iter())
                .filter(|o| o.model == kind);
            let (mut tested, mut rejected, mut failed) = (0, 0, 0);
            for o in outcomes {
                match o.reject {
                    Some(true) => {
                        tested += 1;
                        rejected += 1;
                    }
                    Some(false) => tested += 1,
                    None => failed += 1,
                }
            }
            ModelSummary {
                model: kind,
                label: kind.label().to_string(),
                tested,
                rejected,
                failed,
                outage_probability: (tested > 0).then(|| rejected as f64 / tested as f64),
            }
        })
        .collect();
    let n_tested = regions.iter().filter(|r| r.skipped.is_none()).count();
    Ok(BatchReport {
        seed,
        metric: cfg.metric,
        n_sim: cfg.envelope.n_sim,
        rank: cfg.envelope.rank,
        significance: cfg.envelope.significance(),
        n_regions: regions.len(),
        n_tested,
        n_skipped: regions.len() - n_tested,
        point_floor: floor,
        summary,
        clustering,
        regions,
    })
}
