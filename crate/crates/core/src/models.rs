//! The six candidate process models: parameters, unnormalised Gibbs
//! densities, Papangelou conditional intensities and simulators.
//!
//! Gibbs normalising constants are never computed. Everything downstream
//! (pseudolikelihood, Metropolis–Hastings) works with density ratios, in
//! which the constant cancels.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, Window};
use crate::rng::{self, StreamRng};

pub use crate::mcmc::{simulate_gibbs, GibbsChain, McmcConfig};

/// A fully parameterised candidate model. Intensities are per km², lengths
/// in km. Serialised as a JSON object tagged by `"kind"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProcessModel {
    Poisson { lambda: f64 },
    Hardcore { beta: f64, r: f64 },
    Strauss { beta: f64, gamma: f64, r: f64 },
    Geyer { beta: f64, gamma: f64, r: f64, sat: u32 },
    Matern { lambda_p: f64, lambda_c: f64, radius: f64 },
    Thomas { lambda_p: f64, lambda_c: f64, sigma: f64 },
}

/// Model family without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Poisson,
    Hardcore,
    Strauss,
    Geyer,
    Matern,
    Thomas,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Poisson,
        ModelKind::Hardcore,
        ModelKind::Strauss,
        ModelKind::Geyer,
        ModelKind::Matern,
        ModelKind::Thomas,
    ];

    /// Short column label used in outage tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Poisson => "PPP",
            ModelKind::Hardcore => "Hardcore",
            ModelKind::Strauss => "Strauss",
            ModelKind::Geyer => "Geyer",
            ModelKind::Matern => "MCP",
            ModelKind::Thomas => "TCP",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::Hardcore => "hardcore",
            ModelKind::Strauss => "strauss",
            ModelKind::Geyer => "geyer",
            ModelKind::Matern => "matern",
            ModelKind::Thomas => "thomas",
        }
    }

    pub fn is_gibbs(self) -> bool {
        matches!(self, ModelKind::Hardcore | ModelKind::Strauss | ModelKind::Geyer)
    }

    pub fn is_cluster(self) -> bool {
        matches!(self, ModelKind::Matern | ModelKind::Thomas)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" | "ppp" => Ok(ModelKind::Poisson),
            "hardcore" => Ok(ModelKind::Hardcore),
            "strauss" => Ok(ModelKind::Strauss),
            "geyer" => Ok(ModelKind::Geyer),
            "matern" | "mcp" => Ok(ModelKind::Matern),
            "thomas" | "tcp" => Ok(ModelKind::Thomas),
            other => Err(Error::InvalidParameter(format!("unknown model {other:?}"))),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ProcessModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ProcessModel::Poisson { .. } => ModelKind::Poisson,
            ProcessModel::Hardcore { .. } => ModelKind::Hardcore,
            ProcessModel::Strauss { .. } => ModelKind::Strauss,
            ProcessModel::Geyer { .. } => ModelKind::Geyer,
            ProcessModel::Matern { .. } => ModelKind::Matern,
            ProcessModel::Thomas { .. } => ModelKind::Thomas,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().as_str()
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProcessModel::Poisson { lambda } => positive("lambda", lambda),
            ProcessModel::Hardcore { beta, r } => {
                positive("beta", beta)?;
                positive("r", r)
            }
            ProcessModel::Strauss { beta, gamma, r } => {
                positive("beta", beta)?;
                positive("r", r)?;
                if !(0.0..=1.0).contains(&gamma) {
                    return Err(Error::InvalidParameter(format!(
                        "Strauss gamma must lie in [0, 1], got {gamma}"
                    )));
                }
                Ok(())
            }
            ProcessModel::Geyer { beta, gamma, r, .. } => {
                positive("beta", beta)?;
                positive("r", r)?;
                positive("gamma", gamma)
            }
            ProcessModel::Matern { lambda_p, lambda_c, radius } => {
                positive("lambda_p", lambda_p)?;
                positive("lambda_c", lambda_c)?;
                positive("radius", radius)
            }
            ProcessModel::Thomas { lambda_p, lambda_c, sigma } => {
                positive("lambda_p", lambda_p)?;
                positive("lambda_c", lambda_c)?;
                positive("sigma", sigma)
            }
        }
    }

    /// Mean number of points per unit area.
    pub fn intensity(&self) -> Option<f64> {
        match *self {
            ProcessModel::Poisson { lambda } => Some(lambda),
            ProcessModel::Matern { lambda_p, lambda_c, .. } | ProcessModel::Thomas { lambda_p, lambda_c, .. } => {
                Some(lambda_p * lambda_c)
            }
            _ => None,
        }
    }

    /// Interaction radius of a Gibbs model.
    pub fn interaction_radius(&self) -> Option<f64> {
        match *self {
            ProcessModel::Hardcore { r, .. } | ProcessModel::Strauss { r, .. } | ProcessModel::Geyer { r, .. } => Some(r),
            _ => None,
        }
    }

    pub(crate) fn beta(&self) -> Option<f64> {
        match *self {
            ProcessModel::Hardcore { beta, .. } | ProcessModel::Strauss { beta, .. } | ProcessModel::Geyer { beta, .. } => {
                Some(beta)
            }
            _ => None,
        }
    }

    fn require_gibbs(&self) -> Result<f64> {
        self.interaction_radius().ok_or_else(|| {
            Error::UnsupportedModel(format!("{} is not a Gibbs model", self.name()))
        })
    }
}

/// Papangelou intensity of a Gibbs model at `u` from interaction counts:
/// `t_u` is the number of points within `r` of `u`, and
/// `neighbour_counts` yields, for each of those points, its own number of
/// r-close points in the configuration without `u`.
pub(crate) fn conditional_intensity(
    model: &ProcessModel,
    t_u: usize,
    neighbour_counts: impl Iterator<Item = usize>,
) -> f64 {
    match *model {
        ProcessModel::Hardcore { beta, .. } => {
            if t_u == 0 {
                beta
            } else {
                0.0
            }
        }
        ProcessModel::Strauss { beta, gamma, .. } => beta * gamma.powi(t_u as i32),
        ProcessModel::Geyer { beta, gamma, sat, .. } => {
            let sat = sat as usize;
            let increment: usize = t_u.min(sat)
                + neighbour_counts
                    .map(|t| (t + 1).min(sat) - t.min(sat))
                    .sum::<usize>();
            beta * gamma.powi(increment as i32)
        }
        _ => unreachable!("conditional intensity requested for a non-Gibbs model"),
    }
}

/// Number of r-close neighbours of every point (brute force).
fn neighbour_counts(points: &[Point], r: f64) -> Vec<usize> {
    let r2 = r * r;
    let mut t = vec![0usize; points.len()];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if points[i].distance_sq(points[j]) <= r2 {
                t[i] += 1;
                t[j] += 1;
            }
        }
    }
    t
}

/// Log of the Gibbs density up to the normalising constant.
pub fn log_density_unnormalized(model: &ProcessModel, pattern: &PointPattern) -> Result<f64> {
    let r = model.require_gibbs()?;
    let n = pattern.len() as f64;
    let t = neighbour_counts(pattern.points(), r);
    let pairs = t.iter().sum::<usize>() / 2;
    Ok(match *model {
        ProcessModel::Hardcore { beta, .. } => {
            if pairs == 0 {
                n * beta.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        ProcessModel::Strauss { beta, gamma, .. } => {
            if pairs == 0 {
                n * beta.ln()
            } else {
                n * beta.ln() + pairs as f64 * gamma.ln()
            }
        }
        ProcessModel::Geyer { beta, gamma, sat, .. } => {
            let saturated: usize = t.iter().map(|&ti| ti.min(sat as usize)).sum();
            if saturated == 0 {
                n * beta.ln()
            } else {
                n * beta.ln() + saturated as f64 * gamma.ln()
            }
        }
        _ => unreachable!(),
    })
}

/// Conditional intensity f(z ∪ {u}) / f(z) for a Gibbs model.
pub fn papangelou(model: &ProcessModel, pattern: &PointPattern, u: Point) -> Result<f64> {
    let r = model.require_gibbs()?;
    if !pattern.window().contains(u) {
        return Err(Error::InvalidParameter(format!("({}, {}) lies outside the window", u.x, u.y)));
    }
    if pattern.points().contains(&u) {
        return Err(Error::InvalidParameter("u is already part of the pattern".into()));
    }
    let r2 = r * r;
    let pts = pattern.points();
    let close: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].distance_sq(u) <= r2).collect();
    let counts = if matches!(model, ProcessModel::Geyer { .. }) {
        let t = neighbour_counts(pts, r);
        close.iter().map(|&i| t[i]).collect()
    } else {
        Vec::new()
    };
    Ok(conditional_intensity(model, close.len(), counts.into_iter()))
}

pub(crate) fn poisson_points<R: Rng + ?Sized>(rng: &mut R, lambda: f64, window: &Window) -> Vec<Point> {
    let n = poisson_count(rng, lambda * window.area());
    (0..n).map(|_| window.uniform_point(rng)).collect()
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite Poisson mean");
    d.sample(rng) as usize
}

/// Homogeneous Poisson pattern on `window`.
pub fn simulate_poisson(lambda: f64, window: &Window, seed: u64) -> Result<PointPattern> {
    positive("lambda", lambda)?;
    let mut rng = rng::seeded(seed);
    simulate_poisson_with(&mut rng, lambda, window)
}

pub fn simulate_poisson_with(rng: &mut StreamRng, lambda: f64, window: &Window) -> Result<PointPattern> {
    positive("lambda", lambda)?;
    PointPattern::unmarked(*window, poisson_points(rng, lambda, window))
}

/// A cluster-process draw with its latent structure.
#[derive(Debug, Clone)]
pub struct ClusterDraw {
    pub pattern: PointPattern,
    /// Parents on the dilated window.
    pub parents: Vec<Point>,
    /// Index into `parents` for each returned point.
    pub parent_of: Vec<usize>,
}

/// Neyman–Scott draw keeping the parent structure, for diagnostics.
pub fn simulate_cluster_with_parents(model: &ProcessModel, window: &Window, seed: u64) -> Result<ClusterDraw> {
    let mut rng = rng::seeded(seed);
    cluster_draw(&mut rng, model, window)
}

/// Matérn or Thomas cluster pattern on `window`. Parents live on the
/// window dilated by R (Matérn) or 4σ (Thomas) and are not returned.
pub fn simulate_cluster(model: &ProcessModel, window: &Window, seed: u64) -> Result<PointPattern> {
    simulate_cluster_with_parents(model, window, seed).map(|d| d.pattern)
}

pub(crate) fn cluster_draw(rng: &mut StreamRng, model: &ProcessModel, window: &Window) -> Result<ClusterDraw> {
    model.validate()?;
    let (lambda_p, lambda_c, reach) = match *model {
        ProcessModel::Matern { lambda_p, lambda_c, radius } => (lambda_p, lambda_c, radius),
        ProcessModel::Thomas { lambda_p, lambda_c, sigma } => (lambda_p, lambda_c, 4.0 * sigma),
        _ => {
            return Err(Error::UnsupportedModel(format!(
                "{} is not a cluster model",
                model.name()
            )))
        }
    };
    let parent_window = window.dilate(reach)?;
    let parents = poisson_points(rng, lambda_p, &parent_window);
    let mut points = Vec::new();
    let mut parent_of = Vec::new();
    for (k, c) in parents.iter().enumerate() {
        let m = poisson_count(rng, lambda_c);
        for _ in 0..m {
            let p = match *model {
                ProcessModel::Matern { radius, .. } => {
                    let rho = radius * rng.random::<f64>().sqrt();
                    let theta = 2.0 * PI * rng.random::<f64>();
                    Point::new(c.x + rho * theta.cos(), c.y + rho * theta.sin())
                }
                ProcessModel::Thomas { sigma, .. } => {
                    let normal = Normal::new(0.0, sigma).expect("sigma validated");
                    Point::new(c.x + normal.sample(rng), c.y + normal.sample(rng))
                }
                _ => unreachable!(),
            };
            if window.contains(p) {
                points.push(p);
                parent_of.push(k);
            }
        }
    }
    Ok(ClusterDraw {
        pattern: PointPattern::unmarked(*window, points)?,
        parents,
        parent_of,
    })
}

/// One draw of any model. Gibbs models run the MCMC chain described by
/// `mcmc`, whose own seed is replaced by `seed`.
pub fn simulate(model: &ProcessModel, window: &Window, seed: u64, mcmc: &McmcConfig) -> Result<PointPattern> {
    match model {
        ProcessModel::Poisson { lambda } => simulate_poisson(*lambda, window, seed),
        ProcessModel::Matern { .. } | ProcessModel::Thomas { .. } => simulate_cluster(model, window, seed),
        _ => simulate_gibbs(model, window, &McmcConfig { seed, ..mcmc.clone() }),
    }
}
