//! Downlink SIR and coverage probability.
//!
//! Every base station transmits on the same band. A user at `s` receives
//! `P_x h_x d(s,x)^{-α} s_x` from station `x`, where `h_x` is the fading
//! gain and `s_x` the lognormal shadowing. The user attaches to one station
//! and all the others interfere; noise is ignored.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mark, Point, PointPattern, Window};
use crate::rng::{self, StreamRng};
use crate::summaries::SummaryCurve;

/// Distances are floored here (km) to avoid the path-loss singularity.
pub const DISTANCE_FLOOR_KM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    Rayleigh,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    /// Strongest received power including fading.
    MaxInstantaneous,
    /// Strongest power averaged over fading (shadowing still applies).
    MaxMean,
}

/// Linear transmit power per station kind. Unmarked patterns use `macro`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxPower {
    #[serde(rename = "macro")]
    pub macro_cell: f64,
    pub micro: f64,
}

impl Default for TxPower {
    fn default() -> Self {
        TxPower {
            macro_cell: 10.0,
            micro: 1.0,
        }
    }
}

impl TxPower {
    fn of(&self, mark: Option<Mark>) -> f64 {
        match mark {
            Some(Mark::Micro) => self.micro,
            _ => self.macro_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    pub path_loss_exponent: f64,
    /// Lognormal shadowing standard deviation in dB; 0 disables it.
    pub shadowing_sigma_db: f64,
    pub tx_power: TxPower,
    /// Ascending SIR thresholds in dB.
    pub thresholds_db: Vec<f64>,
    pub n_users: usize,
    pub fading: Fading,
    pub association: Association,
    /// Users are dropped this far (km) inside the window border.
    pub user_margin_km: f64,
}

/// -10 dB to 20 dB in 0.5 dB steps.
pub fn default_thresholds_db() -> Vec<f64> {
    (0..=60).map(|i| -10.0 + 0.5 * i as f64).collect()
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            path_loss_exponent: 4.0,
            shadowing_sigma_db: 3.0,
            tx_power: TxPower::default(),
            thresholds_db: default_thresholds_db(),
            n_users: 2000,
            fading: Fading::Rayleigh,
            association: Association::MaxInstantaneous,
            user_margin_km: 0.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return bad(format!("path loss exponent must be positive, got {}", self.path_loss_exponent));
        }
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return bad(format!("shadowing std must be nonnegative, got {}", self.shadowing_sigma_db));
        }
        let p = self.tx_power;
        if !(p.macro_cell > 0.0 && p.micro > 0.0 && p.macro_cell.is_finite() && p.micro.is_finite()) {
            return bad("transmit powers must be positive".into());
        }
        if self.thresholds_db.is_empty() || self.thresholds_db.iter().any(|t| !t.is_finite()) {
            return bad("thresholds must be a nonempty list of finite values".into());
        }
        if self.thresholds_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thresholds must be strictly ascending".into());
        }
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if !(self.user_margin_km.is_finite() && self.user_margin_km >= 0.0) {
            return bad(format!("user margin must be nonnegative, got {}", self.user_margin_km));
        }
        Ok(())
    }

    /// Non-fatal configuration concerns.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.path_loss_exponent <= 2.0 {
            out.push(format!(
                "path loss exponent {} <= 2: interference from an unbounded network would diverge",
                self.path_loss_exponent
            ));
        }
        out
    }

    fn user_window(&self, w: &Window) -> Result<Window> {
        if self.user_margin_km == 0.0 {
            Ok(*w)
        } else {
            w.erode(self.user_margin_km)
        }
    }
}

/// One SIR draw with the index of the serving station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirDraw {
    pub sir: f64,
    pub serving: usize,
}

/// Draws fading and shadowing for every link (in station order) and
/// evaluates the SIR at `user`.
pub fn sir_draw_with(rng: &mut StreamRng, user: Point, pattern: &PointPattern, cfg: &RadioConfig) -> Result<SirDraw> {
    if pattern.len() < 2 {
        return Err(Error::Degenerate("no interferer set: SIR needs at least two stations".into()));
    }
    let alpha = cfg.path_loss_exponent;
    let shadow_scale = cfg.shadowing_sigma_db * std::f64::consts::LN_10 / 10.0;
    let marks = pattern.marks();
    let mut total = 0.0;
    let (mut best_key, mut serving, mut serving_power) = (f64::NEG_INFINITY, 0, 0.0);
    for (i, &x) in pattern.points().iter().enumerate() {
        let d = user.distance(x).max(DISTANCE_FLOOR_KM);
        let mut mean = cfg.tx_power.of(marks.map(|m| m[i])) * d.powf(-alpha);
        if cfg.shadowing_sigma_db > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            mean *= (shadow_scale * z).exp();
        }
        let h: f64 = match cfg.fading {
            Fading::Rayleigh => rng.sample(Exp1),
            Fading::None => 1.0,
        };
        let power = mean * h;
        total += power;
        let key = match cfg.association {
            Association::MaxInstantaneous => power,
            Association::MaxMean => mean,
        };
        if key > best_key {
            best_key = key;
            serving = i;
            serving_power = power;
        }
    }
    let interference = total - serving_power;
    let sir = if interference > 0.0 {
        serving_power / interference
    } else {
        f64::INFINITY
    };
    Ok(SirDraw { sir, serving })
}

/// Linear SIR at `user`.
pub fn sir_sample(user: Point, pattern: &PointPattern, cfg: &RadioConfig, seed: u64) -> Result<f64> {
    if !pattern.window().contains(user) {
        return Err(Error::InvalidParameter("user lies outside the window".into()));
    }
    let mut rng = rng::seeded(seed);
    Ok(sir_draw_with(&mut rng, user, pattern, cfg)?.sir)
}

/// Coverage values at `cfg.thresholds_db`. Patterns with fewer than two
/// stations are allowed here: one station always covers, none never does.
pub(crate) fn coverage_values(pattern: &PointPattern, cfg: &RadioConfig, seed: u64) -> Result<Vec<f64>> {
    let k = cfg.thresholds_db.len();
    match pattern.len() {
        0 => return Ok(vec![0.0; k]),
        1 => return Ok(vec![1.0; k]),
        _ => {}
    }
    let users = cfg.user_window(pattern.window())?;
    let thresholds: Vec<f64> = cfg.thresholds_db.iter().map(|t| 10f64.powf(t / 10.0)).collect();
    let sirs: Vec<f64> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, rng::tag::USER_DROP, i as u64);
            let user = users.uniform_point(&mut rng);
            sir_draw_with(&mut rng, user, pattern, cfg).map(|d| d.sir)
        })
        .collect::<Result<_>>()?;
    let n = sirs.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| sirs.iter().filter(|&&s| s > t).count() as f64 / n)
        .collect())
}

/// Empirical `P(SIR > T)` over `cfg.n_users` uniform user drops, indexed by
/// threshold in dB.
pub fn coverage_curve(pattern: &PointPattern, cfg: &RadioConfig, seed: u64) -> Result<SummaryCurve> {
    cfg.validate()?;
    if pattern.len() < 2 {
        return Err(Error::Degenerate("no interferer set: coverage needs at least two stations".into()));
    }
    SummaryCurve::new(cfg.thresholds_db.clone(), coverage_values(pattern, cfg, seed)?)
}

/// Coverage of a Poisson network with Rayleigh fading, α = 4, nearest-BS
/// association and no noise at linear threshold `t`.
pub fn ppp_rayleigh_coverage(t: f64) -> f64 {
    let s = t.sqrt();
    1.0 / (1.0 + s * (std::f64::consts::FRAC_PI_2 - (1.0 / s).atan()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_poisson;

    fn plain() -> RadioConfig {
        RadioConfig {
            shadowing_sigma_db: 0.0,
            fading: Fading::None,
            association: Association::MaxMean,
            ..RadioConfig::default()
        }
    }

    fn two_stations(d1: f64, d2: f64) -> (PointPattern, Point) {
        let w = Window::with_size(10.0, 10.0).unwrap();
        let user = Point::new(5.0, 5.0);
        let p = PointPattern::unmarked(w, vec![Point::new(5.0 - d1, 5.0), Point::new(5.0 + d2, 5.0)]).unwrap();
        (p, user)
    }

    #[test]
    fn symmetric_pair_gives_unit_sir() {
        let (p, u) = two_stations(1.0, 1.0);
        assert!((sir_sample(u, &p, &plain(), 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_ratio_sets_sir() {
        let (p, u) = two_stations(0.5, 1.0);
        let s = sir_sample(u, &p, &plain(), 1).unwrap();
        assert!((s - 16.0).abs() < 1e-9);
        assert!((10.0 * s.log10() - 12.04).abs() < 0.01);
    }

    #[test]
    fn rayleigh_pair_matches_exponential_ratio() {
        let (p, u) = two_stations(1.0, 1.0);
        let cfg = RadioConfig {
            fading: Fading::Rayleigh,
            ..plain()
        };
        let n = 100_000;
        let mut rng = rng::seeded(5);
        let sirs: Vec<f64> = (0..n).map(|_| sir_draw_with(&mut rng, u, &p, &cfg).unwrap().sir).collect();
        // serving the first station regardless of fading: SIR = h1/h2
        for t in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let emp = sirs.iter().filter(|&&s| s > t).count() as f64 / n as f64;
            assert!((emp - 1.0 / (1.0 + t)).abs() < 0.01, "t = {t}: {emp}");
        }
    }

    #[test]
    fn too_few_stations_is_an_error() {
        let w = Window::with_size(1.0, 1.0).unwrap();
        let p = PointPattern::unmarked(w, vec![Point::new(0.5, 0.5)]).unwrap();
        let e = sir_sample(Point::new(0.2, 0.2), &p, &plain(), 0).unwrap_err();
        assert!(e.to_string().contains("no interferer set"));
        assert!(coverage_curve(&p, &plain(), 0).is_err());
    }

    #[test]
    fn colocated_user_is_floored() {
        let (p, _) = two_stations(1.0, 1.0);
        let s = sir_sample(Point::new(4.0, 5.0), &p, &plain(), 0).unwrap();
        assert!((s - (2.0 / DISTANCE_FLOOR_KM).powi(4)).abs() / s < 1e-9);
    }

    #[test]
    fn no_randomness_without_fading_or_shadowing() {
        let w = Window::with_size(5.0, 5.0).unwrap();
        let p = simulate_poisson(2.0, &w, 3).unwrap();
        let u = Point::new(2.2, 3.1);
        let a = sir_sample(u, &p, &plain(), 1).unwrap();
        let b = sir_sample(u, &p, &plain(), 999).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn removing_an_interferer_never_hurts() {
        let w = Window::with_size(5.0, 5.0).unwrap();
        let cfg = RadioConfig::default();
        let mut checked = 0;
        for seed in 0..200 {
            let p = simulate_poisson(2.0, &w, seed).unwrap();
            let u = Point::new(2.5, 2.5);
            let full = sir_draw_with(&mut rng::seeded(seed), u, &p, &cfg).unwrap();
            let last = p.len() - 1;
            if full.serving == last || p.len() < 3 {
                continue;
            }
            // dropping the last station leaves the earlier links' draws intact
            let fewer = PointPattern::unmarked(w, p.points()[..last].to_vec()).unwrap();
            let less = sir_draw_with(&mut rng::seeded(seed), u, &fewer, &cfg).unwrap();
            assert_eq!(less.serving, full.serving);
            assert!(less.sir >= full.sir);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn curve_is_monotone_and_scale_invariant() {
        let w = Window::with_size(6.0, 6.0).unwrap();
        let marks: Vec<Mark> = (0..40).map(|i| if i % 3 == 0 { Mark::Macro } else { Mark::Micro }).collect();
        let base = simulate_poisson(2.0, &w, 4).unwrap();
        let n = base.len().min(40);
        let p = PointPattern::new(w, base.points()[..n].to_vec(), Some(marks[..n].to_vec())).unwrap();
        let cfg = RadioConfig {
            n_users: 500,
            ..RadioConfig::default()
        };
        let c = coverage_curve(&p, &cfg, 11).unwrap();
        assert!(c.values.windows(2).all(|v| v[1] <= v[0]));
        assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let louder = RadioConfig {
            tx_power: TxPower {
                macro_cell: 1000.0,
                micro: 100.0,
            },
            ..cfg.clone()
        };
        assert_eq!(c, coverage_curve(&p, &louder, 11).unwrap());
    }

    #[test]
    fn low_thresholds_are_always_covered() {
        let (p, _) = two_stations(1.0, 1.0);
        let cfg = RadioConfig {
            thresholds_db: vec![-400.0, -300.0],
            n_users: 200,
            ..plain()
        };
        assert_eq!(coverage_curve(&p, &cfg, 2).unwrap().values, vec![1.0, 1.0]);
    }

    #[test]
    fn poisson_network_matches_closed_form() {
        let w = Window::with_size(20.0, 20.0).unwrap();
        let cfg = RadioConfig {
            fading: Fading::Rayleigh,
            thresholds_db: vec![0.0],
            n_users: 4000,
            user_margin_km: 5.0,
            ..plain()
        };
        let draws = 5;
        let mean: f64 = (0..draws)
            .map(|s| {
                let p = simulate_poisson(1.0, &w, 50 + s).unwrap();
                coverage_curve(&p, &cfg, s).unwrap().values[0]
            })
            .sum::<f64>()
            / draws as f64;
        assert!((mean - ppp_rayleigh_coverage(1.0)).abs() < 0.02, "{mean}");
        assert!((ppp_rayleigh_coverage(1.0) - 1.0 / (1.0 + std::f64::consts::FRAC_PI_4)).abs() < 1e-12);
    }

    #[test]
    fn standard_error_shrinks_with_users() {
        let w = Window::with_size(6.0, 6.0).unwrap();
        let p = simulate_poisson(2.0, &w, 9).unwrap();
        let se = |n_users: usize| {
            let cfg = RadioConfig {
                thresholds_db: vec![0.0],
                n_users,
                ..RadioConfig::default()
            };
            let v: Vec<f64> = (0..200).map(|s| coverage_values(&p, &cfg, 1000 + s).unwrap()[0]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let ratio = se(400) / se(100);
        assert!((ratio - 0.5).abs() <= 0.15, "{ratio}");
    }

    #[test]
    fn config_validation() {
        assert!(RadioConfig::default().validate().is_ok());
        let bad = RadioConfig {
            thresholds_db: vec![1.0, 0.0],
            ..RadioConfig::default()
        };
        assert!(bad.validate().is_err());
        let low = RadioConfig {
            path_loss_exponent: 2.0,
            ..RadioConfig::default()
        };
        assert!(low.validate().is_ok());
        assert_eq!(low.warnings().len(), 1);
        let cfg: RadioConfig = toml::from_str("n_users = 10\n[tx_power]\nmacro = 4.0\nmicro = 2.0\n").unwrap();
        assert_eq!(cfg.tx_power.macro_cell, 4.0);
        assert_eq!(cfg.thresholds_db.len(), 61);
    }
}
