//! Second-order summaries: Ripley's K, Besag's L and close-pair counts.
//!
//! K is estimated with the translation edge correction: an ordered pair at
//! offset `(dx, dy)` is weighted by `|W| / |W ∩ (W + (dx, dy))|`, which for
//! a rectangle is `|W| / ((w - |dx|)(h - |dy|))`. The squared intensity is
//! estimated by `n(n-1)/|W|²`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::models::ProcessModel;
use crate::neighbors::for_each_pair_within;

/// Number of r values in the default grid.
pub const DEFAULT_GRID_LEN: usize = 512;

/// Ascending distances starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DistanceGrid {
    r_values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DistanceGrid {
    type Error = Error;

    fn try_from(r_values: Vec<f64>) -> Result<Self> {
        DistanceGrid::new(r_values)
    }
}

impl From<DistanceGrid> for Vec<f64> {
    fn from(g: DistanceGrid) -> Self {
        g.r_values
    }
}

impl DistanceGrid {
    pub fn new(r_values: Vec<f64>) -> Result<Self> {
        if r_values.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("distance grid must start at 0".into()));
        }
        if r_values.windows(2).any(|w| !(w[1] > w[0])) || r_values.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("distance grid must be strictly increasing".into()));
        }
        Ok(DistanceGrid { r_values })
    }

    /// `len` equally spaced values on `[0, r_max]`.
    pub fn uniform(r_max: f64, len: usize) -> Result<Self> {
        if len < 2 || !(r_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "uniform grid needs len >= 2 and r_max > 0, got {len}, {r_max}"
            )));
        }
        let step = r_max / (len - 1) as f64;
        let mut r: Vec<f64> = (0..len).map(|i| i as f64 * step).collect();
        r[len - 1] = r_max;
        DistanceGrid::new(r)
    }

    /// 512 values from 0 to a quarter of the window's shorter side.
    pub fn default_for(window: &Window) -> Self {
        Self::quarter_side(window, DEFAULT_GRID_LEN)
    }

    pub fn quarter_side(window: &Window, len: usize) -> Self {
        DistanceGrid::uniform(window.shorter_side() / 4.0, len.max(2)).expect("window sides are positive")
    }

    pub fn values(&self) -> &[f64] {
        &self.r_values
    }

    pub fn len(&self) -> usize {
        self.r_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_values.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.r_values.last().expect("grid is never empty")
    }

    /// Smallest positive spacing.
    pub fn step(&self) -> f64 {
        self.r_values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_window(&self, window: &Window) -> Result<()> {
        let limit = window.shorter_side() / 2.0;
        if self.r_max() > limit * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "grid max {} exceeds half the shorter window side {limit}",
                self.r_max()
            )));
        }
        Ok(())
    }
}

/// A function sampled on a grid (distances in km, or SIR thresholds in dB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SummaryCurve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "curve has {} grid values and {} function values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("curve values must be finite".into()));
        }
        Ok(SummaryCurve { grid, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute pointwise difference to `other`.
    pub fn max_abs_deviation(&self, other: &SummaryCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Two-column CSV with the given header names.
    pub fn write_csv<W: Write>(&self, mut out: W, x_name: &str, y_name: &str) -> std::io::Result<()> {
        writeln!(out, "{x_name},{y_name}")?;
        for (x, y) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

fn require_pairs(pattern: &PointPattern) -> Result<()> {
    if pattern.len() < 2 {
        return Err(Error::Degenerate(format!(
            "K function needs at least two points, pattern has {}",
            pattern.len()
        )));
    }
    Ok(())
}

/// Translation-corrected estimate of Ripley's K.
pub fn k_function(pattern: &PointPattern, grid: &DistanceGrid) -> Result<SummaryCurve> {
    require_pairs(pattern)?;
    grid.check_window(pattern.window())?;
    let window = *pattern.window();
    let r = grid.values();
    let mut mass = vec![0.0; r.len()];
    for_each_pair_within(pattern.points(), &window, grid.r_max(), |_, _, dx, dy, d| {
        let k = r.partition_point(|&rv| rv < d);
        // both orderings share the same overlap
        mass[k] += 2.0 * window.area() / window.translation_overlap(dx, dy);
    });
    let n = pattern.len() as f64;
    let scale = window.area() / (n * (n - 1.0));
    let mut acc = 0.0;
    let values = mass
        .into_iter()
        .map(|m| {
            acc += m;
            acc * scale
        })
        .collect();
    Ok(SummaryCurve {
        grid: r.to_vec(),
        values,
    })
}

/// Besag's L = sqrt(K / π).
pub fn l_function(pattern: &PointPattern, grid: &DistanceGrid) -> Result<SummaryCurve> {
    let mut k = k_function(pattern, grid)?;
    for v in &mut k.values {
        *v = (*v / PI).sqrt();
    }
    Ok(k)
}

/// Unordered pairs at distance at most `r`. Negative `r` counts nothing.
pub fn close_pair_count(pattern: &PointPattern, r: f64) -> usize {
    if !(r >= 0.0) {
        return 0;
    }
    let mut n = 0;
    for_each_pair_within(pattern.points(), pattern.window(), r, |_, _, _, _, _| n += 1);
    n
}

/// Cumulative unordered pair counts at each grid distance: the unweighted
/// sum behind `k_function`.
pub fn pair_counts(pattern: &PointPattern, grid: &DistanceGrid) -> Vec<usize> {
    let r = grid.values();
    let mut hist = vec![0usize; r.len()];
    for_each_pair_within(pattern.points(), pattern.window(), grid.r_max(), |_, _, _, _, d| {
        hist[r.partition_point(|&rv| rv < d)] += 1;
    });
    let mut acc = 0;
    hist.into_iter()
        .map(|h| {
            acc += h;
            acc
        })
        .collect()
}

/// Probability that two independent uniform points in a disc of radius R
/// lie within `2R·z` of each other.
fn disc_pair_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= 1.0 {
        return 1.0;
    }
    let s = (1.0 - z * z).sqrt();
    2.0 + ((8.0 * z * z - 4.0) * z.acos() - 2.0 * z.asin() + 4.0 * z * s * s * s - 6.0 * z * s) / PI
}

/// Closed-form K at a single distance.
pub fn theoretical_k_at(model: &ProcessModel, r: f64) -> Result<f64> {
    let base = PI * r * r;
    match *model {
        ProcessModel::Poisson { .. } => Ok(base),
        ProcessModel::Matern { lambda_p, radius, .. } => Ok(base + disc_pair_cdf(r / (2.0 * radius)) / lambda_p),
        ProcessModel::Thomas { lambda_p, sigma, .. } => {
            Ok(base + (-(-r * r / (4.0 * sigma * sigma)).exp_m1()) / lambda_p)
        }
        _ => Err(Error::UnsupportedModel(format!(
            "{} has no closed-form K; use the simulation mean",
            model.name()
        ))),
    }
}

/// Theoretical K of a Poisson, Matérn or Thomas model on `grid`.
pub fn scaled_theoretical_k(model: &ProcessModel, grid: &DistanceGrid) -> Result<SummaryCurve> {
    let values = grid
        .values()
        .iter()
        .map(|&r| theoretical_k_at(model, r))
        .collect::<Result<Vec<_>>>()?;
    SummaryCurve::new(grid.values().to_vec(), values)
}
