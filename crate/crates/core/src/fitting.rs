//! Parameter estimation.
//!
//! * Poisson: maximum likelihood, λ = n/|W|.
//! * Gibbs models: maximum pseudolikelihood with the Berman–Turner device,
//!   and profile pseudolikelihood over the irregular parameters (r, sat).
//! * Cluster models: minimum contrast between the empirical and theoretical
//!   K functions, `∫ (K̂(r)^q − K_θ(r)^q)² dr`.
//!
//! The Gibbs log-pseudolikelihood is
//! `Σ_i log λ_θ(z_i; z∖z_i) − ∫_W λ_θ(u; z) du`, with the integral replaced
//! by a weighted sum over quadrature nodes (a dummy grid plus the data).
//! For all three Gibbs models `log λ_θ = log β + log γ · s(u)` where `s` is
//! an integer statistic of the configuration, so the problem reduces to a
//! concave maximisation in `log γ` with `β` profiled out in closed form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nn_distances, Point, PointPattern};
use crate::models::{ModelKind, ProcessModel};
use crate::neighbors::CellIndex;
use crate::optimize::{bisect_decreasing, NelderMead};
use crate::summaries::{k_function, theoretical_k_at, DistanceGrid, SummaryCurve};

/// Tuning knobs shared by all fitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Dummy points per axis of the quadrature grid.
    pub dummy_grid: usize,
    /// Number of r values in the profile search.
    pub profile_len: usize,
    /// Candidate Geyer saturation values.
    pub sat_values: Vec<u32>,
    /// Exponent of the K-function contrast.
    pub contrast_exponent: f64,
    /// Grid length for the contrast integral.
    pub contrast_grid_len: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            dummy_grid: 64,
            profile_len: 16,
            sat_values: vec![1, 2, 3, 4, 5],
            contrast_exponent: 0.25,
            contrast_grid_len: crate::summaries::DEFAULT_GRID_LEN,
        }
    }
}

/// One row of a profile search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sat: Option<u32>,
    /// Maximised log-pseudolikelihood; `None` when the fit at this point
    /// failed (e.g. a hardcore radius violated by the data).
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// An estimate hit a parameter bound (e.g. Strauss γ clamped to 1).
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<ProfileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ProcessModel,
    /// Log-likelihood / log-pseudolikelihood (maximised) or contrast
    /// (minimised), depending on the model family.
    pub objective: f64,
    pub diagnostics: FitDiagnostics,
}

/// Smallest pattern each family can be fitted to.
pub fn min_points(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Poisson => 1,
        ModelKind::Hardcore | ModelKind::Strauss | ModelKind::Geyer => 2,
        ModelKind::Matern | ModelKind::Thomas => 10,
    }
}

/// Fits `kind` with the procedure used for batch identification: MLE for
/// Poisson, profile pseudolikelihood for Gibbs models and minimum contrast
/// for cluster models.
pub fn fit(pattern: &PointPattern, kind: ModelKind, cfg: &FitConfig) -> Result<FitResult> {
    match kind {
        ModelKind::Poisson => fit_poisson(pattern),
        ModelKind::Hardcore | ModelKind::Strauss | ModelKind::Geyer => fit_gibbs_profile(pattern, kind, cfg),
        ModelKind::Matern | ModelKind::Thomas => fit_cluster_contrast(pattern, kind, cfg),
    }
}

/// Poisson MLE.
pub fn fit_poisson(pattern: &PointPattern) -> Result<FitResult> {
    if pattern.is_empty() {
        return Err(Error::Degenerate("intensity estimate degenerate at zero".into()));
    }
    let n = pattern.len() as f64;
    let lambda = n / pattern.window().area();
    Ok(FitResult {
        model: ProcessModel::Poisson { lambda },
        objective: n * lambda.ln() - n,
        diagnostics: FitDiagnostics {
            converged: true,
            ..FitDiagnostics::default()
        },
    })
}

/// Berman–Turner quadrature: data points first, then one dummy point at the
/// centre of every grid cell. Each node in a cell gets the cell area divided
/// by the number of nodes in it.
#[derive(Debug, Clone)]
struct Quadrature {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    n_data: usize,
    /// Per node, data points within the neighbour reach sorted by distance
    /// (a data node never lists itself).
    neighbours: Vec<Vec<(f64, u32)>>,
}

impl Quadrature {
    fn new(pattern: &PointPattern, per_axis: usize, reach: f64) -> Self {
        let w = pattern.window();
        let m = per_axis.max(1);
        let (cw, ch) = (w.width() / m as f64, w.height() / m as f64);
        let cell_of = |p: Point| -> usize {
            let cx = (((p.x - w.x_min) / cw).floor().max(0.0) as usize).min(m - 1);
            let cy = (((p.y - w.y_min) / ch).floor().max(0.0) as usize).min(m - 1);
            cy * m + cx
        };
        let mut nodes: Vec<Point> = pattern.points().to_vec();
        for cy in 0..m {
            for cx in 0..m {
                nodes.push(Point::new(w.x_min + (cx as f64 + 0.5) * cw, w.y_min + (cy as f64 + 0.5) * ch));
            }
        }
        let mut per_cell = vec![0usize; m * m];
        let cells: Vec<usize> = nodes.iter().map(|&p| cell_of(p)).collect();
        for &c in &cells {
            per_cell[c] += 1;
        }
        let weights = cells.iter().map(|&c| cw * ch / per_cell[c] as f64).collect();

        let data = pattern.points();
        let index = CellIndex::new(data, w, reach);
        let n_data = data.len();
        let neighbours = nodes
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let mut list = Vec::new();
                index.for_each_within(data, u, reach, |j, d| {
                    if !(k < n_data && j == k) {
                        list.push((d, j as u32));
                    }
                });
                list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                list
            })
            .collect();
        Quadrature {
            nodes,
            weights,
            n_data,
            neighbours,
        }
    }

    /// Neighbour count of every node at radius `r`.
    fn counts(&self, r: f64) -> Vec<usize> {
        self.neighbours
            .iter()
            .map(|l| l.partition_point(|&(d, _)| d <= r))
            .collect()
    }

    /// Sufficient statistic `s(u)` of every node for `model`'s interaction
    /// at radius `r`: `log λ(u) = log β + s(u) log γ`.
    fn statistics(&self, kind: ModelKind, r: f64, sat: u32) -> Vec<usize> {
        let t = self.counts(r);
        match kind {
            ModelKind::Hardcore | ModelKind::Strauss => t,
            ModelKind::Geyer => {
                let sat = sat as usize;
                let sat_min = |v: usize| v.min(sat);
                (0..self.nodes.len())
                    .map(|k| {
                        let close = &self.neighbours[k][..t[k]];
                        let own = sat_min(t[k]);
                        if k < self.n_data {
                            // neighbours lose z_k when it is removed
                            own + close
                                .iter()
                                .map(|&(_, i)| sat_min(t[i as usize]) - sat_min(t[i as usize] - 1))
                                .sum::<usize>()
                        } else {
                            own + close
                                .iter()
                                .map(|&(_, i)| sat_min(t[i as usize] + 1) - sat_min(t[i as usize]))
                                .sum::<usize>()
                        }
                    })
                    .collect()
            }
            _ => unreachable!("statistics requested for a non-Gibbs model"),
        }
    }
}

/// Total quadrature weight for each value of the integer statistic.
fn weight_by_statistic(weights: &[f64], stats: &[usize]) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for (w, &s) in weights.iter().zip(stats) {
        *out.entry(s).or_insert(0.0) += w;
    }
    out
}

/// log Σ_s W_s e^{b s} and the weighted mean of s at `b`.
fn log_partition(groups: &BTreeMap<usize, f64>, b: f64) -> (f64, f64) {
    let top = groups
        .iter()
        .map(|(&s, &w)| w.ln() + b * s as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut first = 0.0;
    for (&s, &w) in groups {
        let e = (w.ln() + b * s as f64 - top).exp();
        sum += e;
        first += e * s as f64;
    }
    (top + sum.ln(), first / sum)
}

struct GammaFit {
    beta: f64,
    gamma: f64,
    log_pl: f64,
    iterations: usize,
    clamped: bool,
}

/// Maximises `n·a + b·T − Σ_j w_j exp(a + b s_j)` over `a` (closed form)
/// and `b ∈ [b_lo, b_hi]`. `b_lo = -inf` allows γ = 0.
fn maximise_gamma(groups: &BTreeMap<usize, f64>, n: f64, total: f64, b_lo: f64, b_hi: f64) -> Result<GammaFit> {
    let value = |b: f64| -> (f64, f64) {
        let (log_s, mean) = log_partition(groups, b);
        (n * n.ln() - n * log_s + b * total - n, total - n * mean)
    };
    let finish = |b: f64, iterations: usize, clamped: bool| -> Result<GammaFit> {
        let (log_s, _) = log_partition(groups, b);
        let log_pl = n * n.ln() - n * log_s + b * total - n;
        Ok(GammaFit {
            beta: (n.ln() - log_s).exp(),
            gamma: b.exp(),
            log_pl,
            iterations,
            clamped,
        })
    };

    if total == 0.0 {
        if b_lo == f64::NEG_INFINITY {
            // γ̂ = 0: only nodes without interactions carry intensity
            let free = groups.get(&0).copied().unwrap_or(0.0);
            if free <= 0.0 {
                return Err(Error::Fit("no interaction-free quadrature mass".into()));
            }
            let beta = n / free;
            return Ok(GammaFit {
                beta,
                gamma: 0.0,
                log_pl: n * beta.ln() - n,
                iterations: 0,
                clamped: false,
            });
        }
        return finish(b_lo, 0, true);
    }

    let (_, g_hi) = value(b_hi);
    if g_hi >= 0.0 {
        return finish(b_hi, 0, true);
    }
    let lo = if b_lo.is_finite() {
        if value(b_lo).1 <= 0.0 {
            return finish(b_lo, 0, true);
        }
        b_lo
    } else {
        let mut lo = b_hi - 1.0;
        while value(lo).1 <= 0.0 {
            lo = b_hi - 2.0 * (b_hi - lo);
            if lo < -700.0 {
                return finish(lo, 0, true);
            }
        }
        lo
    };
    let (b, it) = bisect_decreasing(|b| value(b).1, lo, b_hi, 1e-12, 200);
    finish(b, it, false)
}

const GEYER_LOG_GAMMA_BOUND: f64 = 10.0;

fn gibbs_fit_on(quad: &Quadrature, kind: ModelKind, r: f64, sat: u32) -> Result<FitResult> {
    let n = quad.n_data as f64;
    let stats = quad.statistics(kind, r, sat);
    match kind {
        ModelKind::Hardcore => {
            if stats[..quad.n_data].iter().any(|&t| t > 0) {
                return Err(Error::Fit(format!("pattern violates hardcore at r = {r}")));
            }
            let free: f64 = quad
                .weights
                .iter()
                .zip(&stats)
                .filter(|(_, &s)| s == 0)
                .map(|(w, _)| w)
                .sum();
            let beta = n / free;
            Ok(FitResult {
                model: ProcessModel::Hardcore { beta, r },
                objective: n * beta.ln() - n,
                diagnostics: FitDiagnostics {
                    converged: true,
                    ..FitDiagnostics::default()
                },
            })
        }
        ModelKind::Strauss | ModelKind::Geyer => {
            let groups = weight_by_statistic(&quad.weights, &stats);
            let total = stats[..quad.n_data].iter().sum::<usize>() as f64;
            let (lo, hi) = if kind == ModelKind::Strauss {
                (f64::NEG_INFINITY, 0.0)
            } else {
                (-GEYER_LOG_GAMMA_BOUND, GEYER_LOG_GAMMA_BOUND)
            };
            let g = maximise_gamma(&groups, n, total, lo, hi)?;
            let model = if kind == ModelKind::Strauss {
                ProcessModel::Strauss { beta: g.beta, gamma: g.gamma.min(1.0), r }
            } else {
                ProcessModel::Geyer { beta: g.beta, gamma: g.gamma, r, sat }
            };
            Ok(FitResult {
                model,
                objective: g.log_pl,
                diagnostics: FitDiagnostics {
                    iterations: g.iterations,
                    converged: true,
                    clamped: g.clamped,
                    profile: Vec::new(),
                },
            })
        }
        _ => Err(Error::UnsupportedModel(format!("{kind} is not a Gibbs model"))),
    }
}

fn require_gibbs(kind: ModelKind) -> Result<()> {
    if kind.is_gibbs() {
        Ok(())
    } else {
        Err(Error::UnsupportedModel(format!("{kind} is not a Gibbs model")))
    }
}

/// Maximum pseudolikelihood for a Gibbs model at a fixed interaction
/// radius (and saturation, for Geyer; default 1).
pub fn fit_gibbs_pseudolikelihood(
    pattern: &PointPattern,
    kind: ModelKind,
    r: f64,
    sat: Option<u32>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    require_gibbs(kind)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("interaction radius must be positive, got {r}")));
    }
    if pattern.is_empty() {
        return Err(Error::Degenerate("cannot fit a Gibbs model to an empty pattern".into()));
    }
    let quad = Quadrature::new(pattern, cfg.dummy_grid, r);
    gibbs_fit_on(&quad, kind, r, sat.unwrap_or(1))
}

/// Profile pseudolikelihood: r over `profile_len` values spanning
/// `[R̄/2, 4R̄]` (R̄ the mean nearest-neighbour distance) and, for Geyer,
/// sat over `cfg.sat_values`. Hardcore additionally tries
/// `d_min · n/(n+1)`, the largest radius the data admit.
pub fn fit_gibbs_profile(pattern: &PointPattern, kind: ModelKind, cfg: &FitConfig) -> Result<FitResult> {
    require_gibbs(kind)?;
    let nn = nn_distances(pattern)?;
    let mean_nn = nn.iter().sum::<f64>() / nn.len() as f64;
    let (lo, hi) = (mean_nn / 2.0, 4.0 * mean_nn);
    let len = cfg.profile_len.max(2);
    let mut radii: Vec<f64> = (0..len)
        .map(|i| lo + (hi - lo) * i as f64 / (len - 1) as f64)
        .collect();
    radii[len - 1] = hi;
    if kind == ModelKind::Hardcore {
        let n = pattern.len() as f64;
        let d_min = nn.iter().copied().fold(f64::INFINITY, f64::min);
        let admissible = d_min * n / (n + 1.0);
        if admissible > 0.0 {
            radii.push(admissible);
            radii.sort_by(f64::total_cmp);
            radii.dedup();
        }
    }
    let sats: Vec<Option<u32>> = if kind == ModelKind::Geyer {
        if cfg.sat_values.is_empty() {
            return Err(Error::InvalidParameter("no saturation candidates".into()));
        }
        cfg.sat_values.iter().map(|&s| Some(s)).collect()
    } else {
        vec![None]
    };

    let quad = Quadrature::new(pattern, cfg.dummy_grid, hi.max(*radii.last().unwrap()));
    let mut profile = Vec::with_capacity(radii.len() * sats.len());
    let mut best: Option<FitResult> = None;
    for &r in &radii {
        for &sat in &sats {
            match gibbs_fit_on(&quad, kind, r, sat.unwrap_or(1)) {
                Ok(f) => {
                    profile.push(ProfileEntry {
                        r,
                        sat,
                        objective: Some(f.objective),
                        error: None,
                    });
                    // strict improvement keeps the smaller (r, sat) on ties
                    if best.as_ref().is_none_or(|b| f.objective > b.objective) {
                        best = Some(f);
                    }
                }
                Err(e) => profile.push(ProfileEntry {
                    r,
                    sat,
                    objective: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::Fit(format!("{kind} profile: every candidate failed"))
    })?;
    best.diagnostics.iterations = profile.len();
    best.diagnostics.profile = profile;
    Ok(best)
}

/// Closed-form K of a cluster family with parent intensity and scale.
fn cluster_model(kind: ModelKind, lambda_p: f64, lambda: f64, scale: f64) -> ProcessModel {
    let lambda_c = lambda / lambda_p;
    match kind {
        ModelKind::Matern => ProcessModel::Matern { lambda_p, lambda_c, radius: scale },
        _ => ProcessModel::Thomas { lambda_p, lambda_c, sigma: scale },
    }
}

/// Contrast `∫ (K̂^q − K_θ^q)² dr` by the trapezoid rule on `grid[from..]`.
fn contrast(k_hat: &SummaryCurve, from: usize, model: &ProcessModel, q: f64) -> f64 {
    let g = &k_hat.grid;
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for i in from..g.len() {
        let r = g[i];
        let kt = theoretical_k_at(model, r).unwrap_or(f64::NAN);
        let d = k_hat.values[i].max(0.0).powf(q) - kt.powf(q);
        let sq = d * d;
        if let Some((r0, s0)) = prev {
            total += 0.5 * (r - r0) * (sq + s0);
        }
        prev = Some((r, sq));
    }
    total
}

/// Minimum-contrast fit of a Matérn or Thomas model.
pub fn fit_cluster_contrast(pattern: &PointPattern, kind: ModelKind, cfg: &FitConfig) -> Result<FitResult> {
    if !kind.is_cluster() {
        return Err(Error::UnsupportedModel(format!("{kind} is not a cluster model")));
    }
    let floor = min_points(kind);
    if pattern.len() < floor {
        return Err(Error::Degenerate(format!(
            "cluster fit needs at least {floor} points, pattern has {}",
            pattern.len()
        )));
    }
    let grid = DistanceGrid::quarter_side(pattern.window(), cfg.contrast_grid_len);
    let k_hat = k_function(pattern, &grid)?;
    let step = grid.step();
    let r_hi = grid.r_max();
    let lambda = pattern.intensity();
    let q = cfg.contrast_exponent;

    let lp_hi = lambda;
    let lp_lo = 1e-3f64.min(lambda * 1e-3);
    let in_bounds = |lp: f64, s: f64| lp >= lp_lo && lp <= lp_hi && s >= step && s <= r_hi;

    // start: λp = λ/20 and the scale where L̂(r) − r peaks
    let mut scale0 = step;
    let mut best_excess = f64::NEG_INFINITY;
    for (i, &r) in grid.values().iter().enumerate().skip(1) {
        let excess = (k_hat.values[i] / std::f64::consts::PI).sqrt() - r;
        if excess > best_excess {
            best_excess = excess;
            scale0 = r;
        }
    }
    let lp0 = (lambda / 20.0).clamp(lp_lo, lp_hi);
    let scale0 = scale0.clamp(step, r_hi);

    let objective = |x: &[f64]| -> f64 {
        let (lp, s) = (x[0].exp(), x[1].exp());
        if !in_bounds(lp, s) {
            return f64::INFINITY;
        }
        contrast(&k_hat, 1, &cluster_model(kind, lp, lambda, s), q)
    };
    let nm = NelderMead {
        max_iter: 1000,
        f_tol: 1e-10,
        x_tol: 1e-7,
        step: 0.5,
    };
    let mut x = vec![lp0.ln(), scale0.ln()];
    let mut iterations = 0;
    let mut converged = false;
    let mut value = objective(&x);
    // restarts guard against premature simplex collapse
    for _ in 0..3 {
        let m = nm.minimize(objective, &x);
        iterations += m.iterations;
        converged = m.converged;
        let improved = m.value < value - 1e-14 * value.abs();
        if m.value <= value {
            x = m.x;
            value = m.value;
        }
        if !improved {
            break;
        }
    }
    let (lp, s) = (x[0].exp(), x[1].exp());
    let clamped = [lp_lo, lp_hi].iter().any(|b| (lp - b).abs() <= 1e-6 * b)
        || [step, r_hi].iter().any(|b| (s - b).abs() <= 1e-6 * b);
    Ok(FitResult {
        model: cluster_model(kind, lp, lambda, s),
        objective: value,
        diagnostics: FitDiagnostics {
            iterations,
            converged,
            clamped,
            profile: Vec::new(),
        },
    })
}

/// Contrast of `model` against a pattern's K̂ with the fitter's settings.
pub fn cluster_contrast(pattern: &PointPattern, model: &ProcessModel, cfg: &FitConfig) -> Result<f64> {
    let grid = DistanceGrid::quarter_side(pattern.window(), cfg.contrast_grid_len);
    let k_hat = k_function(pattern, &grid)?;
    Ok(contrast(&k_hat, 1, model, cfg.contrast_exponent))
}

/// Start point used by the contrast fitter, exposed for diagnostics.
pub fn contrast_start(pattern: &PointPattern, kind: ModelKind, cfg: &FitConfig) -> Result<ProcessModel> {
    let grid = DistanceGrid::quarter_side(pattern.window(), cfg.contrast_grid_len);
    let k_hat = k_function(pattern, &grid)?;
    let lambda = pattern.intensity();
    let mut scale0 = grid.step();
    let mut best = f64::NEG_INFINITY;
    for (i, &r) in grid.values().iter().enumerate().skip(1) {
        let excess = (k_hat.values[i] / std::f64::consts::PI).sqrt() - r;
        if excess > best {
            best = excess;
            scale0 = r;
        }
    }
    let lp0 = (lambda / 20.0).clamp(1e-3f64.min(lambda * 1e-3), lambda);
    Ok(cluster_model(kind, lp0, lambda, scale0.clamp(grid.step(), grid.r_max())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::models::{simulate_cluster, simulate_gibbs, simulate_poisson, McmcConfig};

    fn square(side: f64) -> Window {
        Window::with_size(side, side).unwrap()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn poisson_mle_matches_counts() {
        let w = Window::with_size(20.0, 20.0).unwrap();
        let mut r = crate::rng::seeded(1);
        let p = PointPattern::unmarked(w, (0..79).map(|_| w.uniform_point(&mut r)).collect()).unwrap();
        let f = fit_poisson(&p).unwrap();
        assert_eq!(f.model, ProcessModel::Poisson { lambda: 79.0 / 400.0 });

        let one = PointPattern::unmarked(square(1.0), vec![Point::new(0.5, 0.5)]).unwrap();
        assert_eq!(fit_poisson(&one).unwrap().model, ProcessModel::Poisson { lambda: 1.0 });
        let err = fit_poisson(&PointPattern::empty(w)).unwrap_err().to_string();
        assert!(err.contains("degenerate at zero"));
    }

    #[test]
    fn quadrature_weights_cover_the_window() {
        let w = Window::with_size(3.0, 2.0).unwrap();
        let p = simulate_poisson(20.0, &w, 3).unwrap();
        let q = Quadrature::new(&p, 64, 0.2);
        let total: f64 = q.weights.iter().sum();
        assert!((total - w.area()).abs() < 1e-9);
        assert_eq!(q.nodes.len(), p.len() + 64 * 64);
    }

    #[test]
    fn strauss_with_unit_gamma_recovers_poisson_intensity() {
        // with γ fixed at 1 the profiled β̂ is n / Σ w = n / |W|
        let w = square(5.0);
        let p = simulate_poisson(2.0, &w, 8).unwrap();
        let q = Quadrature::new(&p, 64, 0.3);
        let stats = q.statistics(ModelKind::Strauss, 0.3, 1);
        let groups = weight_by_statistic(&q.weights, &stats);
        let (log_s, _) = log_partition(&groups, 0.0);
        let beta = (p.len() as f64).ln() - log_s;
        let expect = p.len() as f64 / w.area();
        assert!((beta.exp() - expect).abs() / expect < 0.02);
    }

    #[test]
    fn geyer_statistics_match_model_papangelou() {
        let w = square(2.0);
        let p = simulate_poisson(15.0, &w, 12).unwrap();
        let (r, sat) = (0.3, 2);
        let q = Quadrature::new(&p, 8, r);
        let stats = q.statistics(ModelKind::Geyer, r, sat);
        let model = ProcessModel::Geyer { beta: 1.0, gamma: 2.0, r, sat };
        for k in (0..q.nodes.len()).step_by(3) {
            let lambda = if k < q.n_data {
                let mut rest = p.points().to_vec();
                let u = rest.remove(k);
                let z = PointPattern::unmarked(w, rest).unwrap();
                crate::models::papangelou(&model, &z, u).unwrap()
            } else {
                crate::models::papangelou(&model, &p, q.nodes[k]).unwrap()
            };
            assert!((lambda - 2f64.powi(stats[k] as i32)).abs() < 1e-9, "node {k}");
        }
    }

    #[test]
    fn pseudolikelihood_is_maximal_at_the_estimate() {
        let w = square(4.0);
        let m = ProcessModel::Strauss { beta: 3.0, gamma: 0.4, r: 0.3 };
        let p = simulate_gibbs(&m, &w, &McmcConfig { seed: 2, ..McmcConfig::with_steps(20_000) }).unwrap();
        let cfg = FitConfig::default();
        let fit = fit_gibbs_pseudolikelihood(&p, ModelKind::Strauss, 0.3, None, &cfg).unwrap();
        let ProcessModel::Strauss { beta, gamma, .. } = fit.model else { panic!() };
        let q = Quadrature::new(&p, 64, 0.3);
        let stats = q.statistics(ModelKind::Strauss, 0.3, 1);
        let lpl = |b: f64, g: f64| {
            let data: f64 = stats[..q.n_data].iter().map(|&s| b.ln() + s as f64 * g.ln()).sum();
            let integral: f64 = q.weights.iter().zip(&stats).map(|(w, &s)| w * b * g.powi(s as i32)).sum();
            data - integral
        };
        let at = lpl(beta, gamma);
        assert!((at - fit.objective).abs() < 1e-6 * at.abs());
        for (db, dg) in [(1.05, 1.0), (0.95, 1.0), (1.0, 1.05), (1.0, 0.95), (1.03, 0.97)] {
            assert!(lpl(beta * db, gamma * dg) <= at + 1e-9);
        }
    }

    #[test]
    fn hardcore_fit_requires_admissible_radius() {
        let w = square(3.0);
        let p = PointPattern::unmarked(w, vec![Point::new(1.0, 1.0), Point::new(1.1, 1.0), Point::new(2.0, 2.0)]).unwrap();
        let cfg = FitConfig::default();
        let err = fit_gibbs_pseudolikelihood(&p, ModelKind::Hardcore, 0.2, None, &cfg).unwrap_err();
        assert!(err.to_string().contains("violates hardcore"));
        let d = nn_distances(&p).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        let f = fit_gibbs_pseudolikelihood(&p, ModelKind::Hardcore, d / 2.0, None, &cfg).unwrap();
        let ProcessModel::Hardcore { beta, .. } = f.model else { panic!() };
        assert!(beta.is_finite() && beta > 0.0);
        assert!(fit_gibbs_pseudolikelihood(&p, ModelKind::Poisson, 0.1, None, &cfg).is_err());
        assert!(fit_gibbs_pseudolikelihood(&p, ModelKind::Strauss, 0.0, None, &cfg).is_err());
    }

    #[test]
    fn strauss_without_close_pairs_estimates_zero_gamma() {
        let w = square(3.0);
        let pts = (0..5).flat_map(|i| (0..5).map(move |j| Point::new(0.3 + 0.6 * i as f64, 0.3 + 0.6 * j as f64))).collect();
        let p = PointPattern::unmarked(w, pts).unwrap();
        let f = fit_gibbs_pseudolikelihood(&p, ModelKind::Strauss, 0.5, None, &FitConfig::default()).unwrap();
        let ProcessModel::Strauss { gamma, beta, .. } = f.model else { panic!() };
        assert_eq!(gamma, 0.0);
        assert!(beta > 0.0 && beta.is_finite());
    }

    #[test]
    fn two_point_profile_spans_the_pair_distance() {
        let w = square(3.0);
        let p = PointPattern::unmarked(w, vec![Point::new(1.0, 1.0), Point::new(1.5, 1.0)]).unwrap();
        let f = fit_gibbs_profile(&p, ModelKind::Strauss, &FitConfig::default()).unwrap();
        let rs: Vec<f64> = f.diagnostics.profile.iter().map(|e| e.r).collect();
        assert_eq!(rs.len(), 16);
        assert!((rs[0] - 0.25).abs() < 1e-12);
        assert!((rs[15] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn geyer_profile_covers_every_sat() {
        let w = square(4.0);
        let p = simulate_poisson(4.0, &w, 6).unwrap();
        let f = fit_gibbs_profile(&p, ModelKind::Geyer, &FitConfig::default()).unwrap();
        assert_eq!(f.diagnostics.profile.len(), 16 * 5);
        let best = f.diagnostics.profile.iter().filter_map(|e| e.objective).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, f.objective);
    }

    #[test]
    fn hardcore_profile_uses_the_largest_admissible_radius() {
        let w = square(4.0);
        let p = simulate_gibbs(
            &ProcessModel::Hardcore { beta: 3.0, r: 0.2 },
            &w,
            &McmcConfig::with_steps(20_000),
        )
        .unwrap();
        let f = fit_gibbs_profile(&p, ModelKind::Hardcore, &FitConfig::default()).unwrap();
        let ProcessModel::Hardcore { r, .. } = f.model else { panic!() };
        let d_min = nn_distances(&p).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        assert!(r <= d_min && r >= 0.9 * d_min, "{r} vs {d_min}");
    }

    #[test]
    fn profile_fits_are_deterministic() {
        let w = square(4.0);
        let p = simulate_poisson(3.0, &w, 77).unwrap();
        let cfg = FitConfig::default();
        let a = fit_gibbs_profile(&p, ModelKind::Geyer, &cfg).unwrap();
        let b = fit_gibbs_profile(&p, ModelKind::Geyer, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn strauss_fit_on_poisson_data_is_near_one() {
        let w = square(10.0);
        let mut gammas = Vec::new();
        for s in 0..100 {
            let p = simulate_poisson(1.5, &w, 300 + s).unwrap();
            let f = fit_gibbs_profile(&p, ModelKind::Strauss, &FitConfig::default()).unwrap();
            let ProcessModel::Strauss { gamma, .. } = f.model else { panic!() };
            gammas.push(gamma);
        }
        let m = median(gammas);
        assert!(m >= 0.85, "median γ̂ = {m}");
    }

    #[test]
    fn strauss_recovery_at_known_radius() {
        let w = square(10.0);
        let m = ProcessModel::Strauss { beta: 2.0, gamma: 0.5, r: 0.3 };
        let mut gammas = Vec::new();
        for s in 0..100 {
            let p = simulate_gibbs(&m, &w, &McmcConfig { seed: 900 + s, ..McmcConfig::with_steps(30_000) }).unwrap();
            let f = fit_gibbs_pseudolikelihood(&p, ModelKind::Strauss, 0.3, None, &FitConfig::default()).unwrap();
            let ProcessModel::Strauss { gamma, .. } = f.model else { panic!() };
            gammas.push(gamma);
        }
        let med = median(gammas);
        assert!((0.35..=0.65).contains(&med), "median γ̂ = {med}");
    }

    #[test]
    fn strauss_profile_recovery() {
        let w = square(10.0);
        let m = ProcessModel::Strauss { beta: 2.0, gamma: 0.5, r: 0.3 };
        let (mut gammas, mut radii) = (Vec::new(), Vec::new());
        for s in 0..100 {
            let p = simulate_gibbs(&m, &w, &McmcConfig { seed: 500 + s, ..McmcConfig::with_steps(30_000) }).unwrap();
            let f = fit_gibbs_profile(&p, ModelKind::Strauss, &FitConfig::default()).unwrap();
            let ProcessModel::Strauss { gamma, r, .. } = f.model else { panic!() };
            let best = f.diagnostics.profile.iter().filter_map(|e| e.objective).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(best, f.objective);
            gammas.push(gamma);
            radii.push(r);
        }
        let (g, r) = (median(gammas), median(radii));
        assert!((0.35..=0.65).contains(&g), "median γ̂ = {g}");
        assert!((0.15..=0.45).contains(&r), "median r̂ = {r}");
    }

    #[test]
    fn cluster_fit_floor() {
        let w = square(3.0);
        let p = PointPattern::unmarked(w, vec![Point::new(1.0, 1.0), Point::new(2.0, 2.0)]).unwrap();
        assert!(fit_cluster_contrast(&p, ModelKind::Matern, &FitConfig::default()).is_err());
        assert!(fit_cluster_contrast(&p, ModelKind::Strauss, &FitConfig::default()).is_err());
    }

    #[test]
    fn contrast_never_worse_than_start() {
        let w = square(6.0);
        let cfg = FitConfig::default();
        for (s, kind) in [(1, ModelKind::Thomas), (2, ModelKind::Matern), (3, ModelKind::Thomas)] {
            let truth = ProcessModel::Matern { lambda_p: 0.5, lambda_c: 10.0, radius: 0.3 };
            let p = simulate_cluster(&truth, &w, s).unwrap();
            let f = fit_cluster_contrast(&p, kind, &cfg).unwrap();
            let start = contrast_start(&p, kind, &cfg).unwrap();
            assert!(f.objective <= cluster_contrast(&p, &start, &cfg).unwrap());
            assert!((f.objective - cluster_contrast(&p, &f.model, &cfg).unwrap()).abs() < 1e-12);
            assert!((f.model.intensity().unwrap() - p.intensity()).abs() < 1e-9);
        }
    }

    #[test]
    fn thomas_recovery() {
        let w = square(10.0);
        let truth = ProcessModel::Thomas { lambda_p: 1.0, lambda_c: 20.0, sigma: 0.1 };
        let mut err_lp = Vec::new();
        let mut err_sigma = Vec::new();
        for s in 0..20 {
            let p = simulate_cluster(&truth, &w, 40 + s).unwrap();
            let f = fit_cluster_contrast(&p, ModelKind::Thomas, &FitConfig::default()).unwrap();
            let ProcessModel::Thomas { lambda_p, sigma, .. } = f.model else { panic!() };
            err_lp.push((lambda_p - 1.0).abs());
            err_sigma.push((sigma - 0.1).abs() / 0.1);
        }
        assert!(median(err_lp) <= 0.25);
        assert!(median(err_sigma) <= 0.25);
    }

    #[test]
    fn cluster_fit_on_poisson_has_small_excess() {
        let w = square(10.0);
        let cfg = FitConfig::default();
        for s in 0..5 {
            let p = simulate_poisson(1.0, &w, 70 + s).unwrap();
            let f = fit_cluster_contrast(&p, ModelKind::Thomas, &cfg).unwrap();
            let grid = DistanceGrid::quarter_side(&w, 256);
            let (mut excess, mut base) = (0.0, 0.0);
            for &r in &grid.values()[1..] {
                let k = theoretical_k_at(&f.model, r).unwrap();
                excess += (k - std::f64::consts::PI * r * r).abs();
                base += std::f64::consts::PI * r * r;
            }
            assert!(excess < 0.1 * base, "{:?}: {excess} vs {base}", f.model);
        }
    }
}
