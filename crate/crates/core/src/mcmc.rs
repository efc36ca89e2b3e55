//! Birth–death–shift Metropolis–Hastings sampler for Gibbs models.
//!
//! Births propose a uniform location in the window, deaths remove a
//! uniformly chosen point and shifts relocate one to a uniform location.
//! Acceptance ratios use the Papangelou conditional intensity only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointPattern, Window};
use crate::models::{conditional_intensity, poisson_points, ProcessModel};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_steps: u64,
    /// Steps discarded before the returned state. Only the final state is
    /// returned, so any value up to `n_steps` gives the same output.
    pub burn_in: u64,
    pub p_birth: f64,
    pub p_death: f64,
    pub p_shift: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_steps: 100_000,
            burn_in: 100_000,
            p_birth: 0.35,
            p_death: 0.35,
            p_shift: 0.30,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn with_steps(n_steps: u64) -> Self {
        McmcConfig {
            n_steps,
            burn_in: n_steps,
            ..McmcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be positive".into()));
        }
        if self.burn_in > self.n_steps {
            return Err(Error::InvalidParameter("burn_in exceeds n_steps".into()));
        }
        let probs = [self.p_birth, self.p_death, self.p_shift];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("proposal probabilities must lie in [0, 1]".into()));
        }
        if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("proposal probabilities must sum to 1".into()));
        }
        if (self.p_birth > 0.0) != (self.p_death > 0.0) {
            return Err(Error::InvalidParameter(
                "births and deaths must both be enabled or both disabled".into(),
            ));
        }
        Ok(())
    }
}

const MAX_CELLS_PER_AXIS: usize = 256;

/// Mutable configuration with a bucket grid sized to the interaction radius.
#[derive(Debug, Clone)]
struct ChainState {
    window: Window,
    points: Vec<Point>,
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
    cw: f64,
    ch: f64,
}

impl ChainState {
    fn new(window: Window, r: f64, expected: f64) -> Self {
        let cap = ((expected.max(1.0)).sqrt() * 2.0).ceil() as usize;
        let cap = cap.clamp(1, MAX_CELLS_PER_AXIS);
        let axis = |len: f64| ((len / r).floor() as usize).clamp(1, cap);
        let (nx, ny) = (axis(window.width()), axis(window.height()));
        ChainState {
            window,
            points: Vec::new(),
            cell_of: Vec::new(),
            cells: vec![Vec::new(); nx * ny],
            nx,
            ny,
            cw: window.width() / nx as f64,
            ch: window.height() / ny as f64,
        }
    }

    fn coords(&self, p: Point) -> (usize, usize) {
        let cx = (((p.x - self.window.x_min) / self.cw).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p.y - self.window.y_min) / self.ch).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn insert(&mut self, p: Point) {
        let (cx, cy) = self.coords(p);
        let c = cy * self.nx + cx;
        self.cells[c].push(self.points.len());
        self.points.push(p);
        self.cell_of.push(c);
    }

    fn remove(&mut self, i: usize) {
        let last = self.points.len() - 1;
        let cell = &mut self.cells[self.cell_of[i]];
        let pos = cell.iter().position(|&k| k == i).expect("indexed point");
        cell.swap_remove(pos);
        if i != last {
            let moved = &mut self.cells[self.cell_of[last]];
            let pos = moved.iter().position(|&k| k == last).expect("indexed point");
            moved[pos] = i;
        }
        self.points.swap_remove(i);
        self.cell_of.swap_remove(i);
    }

    /// Indices of points within `r` of `u`, skipping `skip`.
    fn within(&self, u: Point, r: f64, skip: Option<usize>, out: &mut Vec<usize>) {
        out.clear();
        let (cx, cy) = self.coords(u);
        let kx = (r / self.cw).ceil() as usize;
        let ky = (r / self.ch).ceil() as usize;
        let r2 = r * r;
        for gy in cy.saturating_sub(ky)..=(cy + ky).min(self.ny - 1) {
            for gx in cx.saturating_sub(kx)..=(cx + kx).min(self.nx - 1) {
                for &j in &self.cells[gy * self.nx + gx] {
                    if Some(j) != skip && self.points[j].distance_sq(u) <= r2 {
                        out.push(j);
                    }
                }
            }
        }
    }
}

/// A running chain targeting one Gibbs model on one window.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    model: ProcessModel,
    r: f64,
    state: ChainState,
    rng: StreamRng,
    cfg: McmcConfig,
    scratch: Vec<usize>,
    scratch2: Vec<usize>,
    accepted: u64,
    steps: u64,
}

impl GibbsChain {
    /// Starts from a Poisson(β) draw; for models forbidding r-close pairs the
    /// draw is thinned sequentially so the start has positive density.
    pub fn new(model: &ProcessModel, window: &Window, cfg: &McmcConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        let (r, beta) = match (model.interaction_radius(), model.beta()) {
            (Some(r), Some(b)) => (r, b),
            _ => {
                return Err(Error::UnsupportedModel(format!(
                    "{} is not a Gibbs model",
                    model.name()
                )))
            }
        };
        let mut rng = rng::seeded(cfg.seed);
        let mut state = ChainState::new(*window, r, beta * window.area());
        let hard = matches!(model, ProcessModel::Hardcore { .. })
            || matches!(model, ProcessModel::Strauss { gamma, .. } if *gamma == 0.0);
        let mut buf = Vec::new();
        for p in poisson_points(&mut rng, beta, window) {
            if hard {
                state.within(p, r, None, &mut buf);
                if !buf.is_empty() {
                    continue;
                }
            }
            state.insert(p);
        }
        Ok(GibbsChain {
            model: *model,
            r,
            state,
            rng,
            cfg: cfg.clone(),
            scratch: Vec::new(),
            scratch2: Vec::new(),
            accepted: 0,
            steps: 0,
        })
    }

    /// Papangelou intensity of `u` against the current state without `skip`.
    fn lambda(&mut self, u: Point, skip: Option<usize>) -> f64 {
        let mut close = std::mem::take(&mut self.scratch);
        self.state.within(u, self.r, skip, &mut close);
        let value = if matches!(self.model, ProcessModel::Geyer { .. }) {
            let mut buf = std::mem::take(&mut self.scratch2);
            let counts: Vec<usize> = close
                .iter()
                .map(|&j| {
                    self.state.within(self.state.points[j], self.r, Some(j), &mut buf);
                    buf.iter().filter(|&&k| Some(k) != skip).count()
                })
                .collect();
            self.scratch2 = buf;
            conditional_intensity(&self.model, close.len(), counts.into_iter())
        } else {
            conditional_intensity(&self.model, close.len(), std::iter::empty())
        };
        self.scratch = close;
        value
    }

    pub fn step(&mut self) {
        let area = self.state.window.area();
        let n = self.state.points.len();
        let move_kind: f64 = self.rng.random();
        let (pb, pd) = (self.cfg.p_birth, self.cfg.p_death);
        self.steps += 1;
        if move_kind < pb {
            let u = self.state.window.uniform_point(&mut self.rng);
            let ratio = self.lambda(u, None) * area * pd / ((n + 1) as f64 * pb);
            if self.rng.random::<f64>() < ratio {
                self.state.insert(u);
                self.accepted += 1;
            }
        } else if move_kind < pb + pd {
            if n == 0 {
                return;
            }
            let i = self.rng.random_range(0..n);
            let current = self.lambda(self.state.points[i], Some(i));
            let ratio = n as f64 * pb / (area * current * pd);
            if self.rng.random::<f64>() < ratio {
                self.state.remove(i);
                self.accepted += 1;
            }
        } else {
            if n == 0 {
                return;
            }
            let i = self.rng.random_range(0..n);
            let u = self.state.window.uniform_point(&mut self.rng);
            let current = self.lambda(self.state.points[i], Some(i));
            let proposed = self.lambda(u, Some(i));
            let ratio = proposed / current;
            if self.rng.random::<f64>() < ratio {
                self.state.remove(i);
                self.state.insert(u);
                self.accepted += 1;
            }
        }
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn len(&self) -> usize {
        self.state.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.points.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }

    pub fn pattern(&self) -> PointPattern {
        PointPattern::unmarked(self.state.window, self.state.points.clone())
            .expect("chain states stay inside the window")
    }
}

/// Final state of a chain run for `cfg.n_steps` steps.
pub fn simulate_gibbs(model: &ProcessModel, window: &Window, cfg: &McmcConfig) -> Result<PointPattern> {
    let mut chain = GibbsChain::new(model, window, cfg)?;
    chain.run(cfg.n_steps);
    Ok(chain.pattern())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summaries::close_pair_count;

    fn square(side: f64) -> Window {
        Window::with_size(side, side).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert!(McmcConfig { p_birth: 0.5, p_death: 0.0, p_shift: 0.5, ..McmcConfig::default() }.validate().is_err());
        assert!(McmcConfig { p_shift: 0.5, ..McmcConfig::default() }.validate().is_err());
        assert!(McmcConfig { burn_in: 200_000, ..McmcConfig::default() }.validate().is_err());
    }

    #[test]
    fn rejects_non_gibbs() {
        let w = square(1.0);
        assert!(simulate_gibbs(&ProcessModel::Poisson { lambda: 1.0 }, &w, &McmcConfig::default()).is_err());
    }

    #[test]
    fn chain_is_deterministic() {
        let w = square(4.0);
        let m = ProcessModel::Geyer { beta: 2.0, gamma: 1.5, r: 0.3, sat: 2 };
        let cfg = McmcConfig { seed: 5, ..McmcConfig::with_steps(5000) };
        assert_eq!(simulate_gibbs(&m, &w, &cfg).unwrap(), simulate_gibbs(&m, &w, &cfg).unwrap());
    }

    #[test]
    fn hardcore_never_violates() {
        let w = square(3.0);
        let m = ProcessModel::Hardcore { beta: 8.0, r: 0.25 };
        for s in 0..100 {
            let p = simulate_gibbs(&m, &w, &McmcConfig { seed: s, ..McmcConfig::with_steps(3000) }).unwrap();
            assert_eq!(close_pair_count(&p, 0.25 - 1e-12), 0);
        }
        let s0 = ProcessModel::Strauss { beta: 8.0, gamma: 0.0, r: 0.25 };
        let p = simulate_gibbs(&s0, &w, &McmcConfig::with_steps(3000)).unwrap();
        assert_eq!(close_pair_count(&p, 0.25 - 1e-12), 0);
    }

    #[test]
    fn grid_bookkeeping_survives_churn() {
        let w = square(2.0);
        let mut st = ChainState::new(w, 0.2, 50.0);
        let mut r = rng::seeded(3);
        for _ in 0..2000 {
            if st.points.is_empty() || r.random::<f64>() < 0.55 {
                st.insert(w.uniform_point(&mut r));
            } else {
                let i = r.random_range(0..st.points.len());
                st.remove(i);
            }
        }
        let mut buf = Vec::new();
        for _ in 0..50 {
            let u = w.uniform_point(&mut r);
            st.within(u, 0.2, None, &mut buf);
            let mut fast = buf.clone();
            fast.sort_unstable();
            let slow: Vec<usize> = (0..st.points.len()).filter(|&j| st.points[j].distance_sq(u) <= 0.04).collect();
            assert_eq!(fast, slow);
        }
    }

    /// Uniform-point Monte Carlo estimate of E[γ^{p(z)}] for k points.
    fn interaction_mean(k: usize, gamma: f64, r: f64, samples: usize, seed: u64) -> f64 {
        let mut g = rng::seeded(seed);
        let w = square(1.0);
        let mut acc = 0.0;
        let mut pts = vec![Point::new(0.0, 0.0); k];
        for _ in 0..samples {
            for p in pts.iter_mut() {
                *p = w.uniform_point(&mut g);
            }
            let mut pairs = 0;
            for i in 0..k {
                for j in i + 1..k {
                    if pts[i].distance(pts[j]) <= r {
                        pairs += 1;
                    }
                }
            }
            acc += gamma.powi(pairs);
        }
        acc / samples as f64
    }

    #[test]
    fn stationary_count_distribution_matches_normalised_density() {
        // P(n = k) ∝ (β|W|)^k / k! · E[γ^{p}] for a Strauss model on the unit square
        let (beta, gamma, r) = (1.5f64, 0.3, 0.4);
        let kmax = 9;
        let mut weights = Vec::new();
        let mut fact = 1.0;
        for k in 0..=kmax {
            if k > 0 {
                fact *= k as f64;
            }
            let e = if k < 2 { 1.0 } else { interaction_mean(k, gamma, r, 200_000, 40 + k as u64) };
            weights.push(beta.powi(k as i32) / fact * e);
        }
        let z: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| w / z).collect();

        let m = ProcessModel::Strauss { beta, gamma, r };
        let mut chain = GibbsChain::new(&m, &square(1.0), &McmcConfig::with_steps(1)).unwrap();
        chain.run(10_000);
        let mut hist = vec![0.0; kmax + 2];
        let samples = 1_000_000;
        for _ in 0..samples {
            chain.step();
            hist[chain.len().min(kmax + 1)] += 1.0;
        }
        let tv: f64 = 0.5
            * (0..=kmax + 1)
                .map(|k| (hist[k] / samples as f64 - exact.get(k).copied().unwrap_or(0.0)).abs())
                .sum::<f64>();
        assert!(tv < 0.05, "total variation {tv}");
    }

    #[test]
    fn strauss_without_interaction_has_poisson_mean() {
        let w = square(5.0);
        let m = ProcessModel::Strauss { beta: 2.0, gamma: 1.0, r: 0.3 };
        let draws = 300;
        let total: usize = (0..draws)
            .map(|s| simulate_gibbs(&m, &w, &McmcConfig { seed: s, ..McmcConfig::with_steps(2000) }).unwrap().len())
            .sum();
        let mean = total as f64 / draws as f64;
        assert!((mean - 50.0).abs() / 50.0 < 0.03, "{mean}");
    }
}
