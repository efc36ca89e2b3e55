//! Small derivative-free optimisers used by the fitting code.

/// Outcome of a minimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the simplex values span less than this.
    pub f_tol: f64,
    /// Stop when the simplex is smaller than this in every coordinate.
    pub x_tol: f64,
    /// Initial edge length along each axis.
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 2000,
            f_tol: 1e-12,
            x_tol: 1e-9,
            step: 0.5,
        }
    }
}

impl NelderMead {
    /// Minimises `f` from `start`. The start is a simplex vertex, so the
    /// returned value never exceeds `f(start)`.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, start: &[f64]) -> Minimum {
        let dim = start.len();
        let eval = |f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((start.to_vec(), eval(&mut f, start)));
        for i in 0..dim {
            let mut x = start.to_vec();
            x[i] += self.step;
            let v = eval(&mut f, &x);
            simplex.push((x, v));
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[dim].1 - simplex[0].1;
            let size = (0..dim)
                .map(|k| {
                    simplex
                        .iter()
                        .map(|v| (v.0[k] - simplex[0].0[k]).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if (spread.is_finite() && spread <= self.f_tol * (1.0 + simplex[0].1.abs())) || size <= self.x_tol {
                converged = true;
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..dim)
                .map(|k| simplex[..dim].iter().map(|v| v.0[k]).sum::<f64>() / dim as f64)
                .collect();
            let worst = simplex[dim].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = along(-1.0);
            let fr = eval(&mut f, &xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&mut f, &xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                let v = eval(&mut f, &x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&mut f, &x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                let val = eval(&mut f, &x);
                *v = (x, val);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, value) = simplex.swap_remove(0);
        Minimum {
            x,
            value,
            iterations,
            converged,
        }
    }
}

/// Root of a nonincreasing function on `[lo, hi]` by bisection, assuming
/// `g(lo) >= 0 >= g(hi)`.
pub fn bisect_decreasing(mut g: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> (f64, usize) {
    let mut it = 0;
    while hi - lo > tol && it < max_iter {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    (0.5 * (lo + hi), it)
}
