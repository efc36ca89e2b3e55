//! Uniform cell lists for fixed-radius and nearest-neighbour queries.

use crate::geometry::{Point, Window};

const MAX_CELLS_PER_AXIS: usize = 512;

/// Static bucket grid over a window. Points outside the window are clamped
/// into the border cells, so queries stay correct for any input.
#[derive(Debug, Clone)]
pub struct CellIndex {
    x0: f64,
    y0: f64,
    cw: f64,
    ch: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl CellIndex {
    /// Builds an index whose cells are at least `cell_size` on each side.
    pub fn new(points: &[Point], window: &Window, cell_size: f64) -> Self {
        let per_axis_cap = ((points.len() as f64).sqrt() * 2.0).ceil() as usize;
        let cap = per_axis_cap.clamp(1, MAX_CELLS_PER_AXIS);
        let axis = |len: f64| -> usize {
            if !(cell_size > 0.0) || !cell_size.is_finite() {
                return 1;
            }
            ((len / cell_size).floor() as usize).clamp(1, cap)
        };
        let nx = axis(window.width());
        let ny = axis(window.height());
        let mut index = CellIndex {
            x0: window.x_min,
            y0: window.y_min,
            cw: window.width() / nx as f64,
            ch: window.height() / ny as f64,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        };
        for (i, p) in points.iter().enumerate() {
            let c = index.cell_of(*p);
            index.cells[c].push(i as u32);
        }
        index
    }

    fn coords(&self, p: Point) -> (usize, usize) {
        let cx = ((p.x - self.x0) / self.cw).floor();
        let cy = ((p.y - self.y0) / self.ch).floor();
        let cx = if cx.is_nan() { 0.0 } else { cx.clamp(0.0, (self.nx - 1) as f64) };
        let cy = if cy.is_nan() { 0.0 } else { cy.clamp(0.0, (self.ny - 1) as f64) };
        (cx as usize, cy as usize)
    }

    fn cell_of(&self, p: Point) -> usize {
        let (cx, cy) = self.coords(p);
        cy * self.nx + cx
    }

    /// Calls `f(j, d)` for every indexed point `j` with `|points[j] - u| <= r`.
    pub fn for_each_within(&self, points: &[Point], u: Point, r: f64, mut f: impl FnMut(usize, f64)) {
        let (cx, cy) = self.coords(u);
        let kx = (r / self.cw).ceil() as usize;
        let ky = (r / self.ch).ceil() as usize;
        let r2 = r * r;
        let xs = cx.saturating_sub(kx)..=(cx + kx).min(self.nx - 1);
        for gy in cy.saturating_sub(ky)..=(cy + ky).min(self.ny - 1) {
            for gx in xs.clone() {
                for &j in &self.cells[gy * self.nx + gx] {
                    let p = points[j as usize];
                    let (dx, dy) = (p.x - u.x, p.y - u.y);
                    let d2 = dx * dx + dy * dy;
                    if d2 <= r2 {
                        f(j as usize, d2.sqrt());
                    }
                }
            }
        }
    }

    /// Number of indexed points within distance `r` of `u`.
    pub fn count_within(&self, points: &[Point], u: Point, r: f64) -> usize {
        let mut n = 0;
        self.for_each_within(points, u, r, |_, _| n += 1);
        n
    }

    /// Nearest indexed point to `points[i]`, excluding `i` itself.
    pub fn nearest_other(&self, points: &[Point], i: usize) -> Option<(usize, f64)> {
        let u = points[i];
        let (cx, cy) = self.coords(u);
        let step = self.cw.min(self.ch);
        let max_ring = self.nx.max(self.ny);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            let x_lo = cx.saturating_sub(ring);
            let x_hi = (cx + ring).min(self.nx - 1);
            let y_lo = cy.saturating_sub(ring);
            let y_hi = (cy + ring).min(self.ny - 1);
            for gy in y_lo..=y_hi {
                for gx in x_lo..=x_hi {
                    let on_ring = gx + ring == cx || gx == cx + ring || gy + ring == cy || gy == cy + ring;
                    if !on_ring {
                        continue;
                    }
                    for &j in &self.cells[gy * self.nx + gx] {
                        let j = j as usize;
                        if j == i {
                            continue;
                        }
                        let d = points[j].distance(u);
                        if best.is_none_or(|(_, b)| d < b) {
                            best = Some((j, d));
                        }
                    }
                }
            }
            // every unvisited cell is at least `ring * step` away
            if let Some((_, d)) = best {
                if d <= ring as f64 * step {
                    break;
                }
            }
        }
        best
    }
}

/// Visits every unordered pair `i < j` with distance at most `r` as
/// `f(i, j, dx, dy, d)` where `(dx, dy) = points[j] - points[i]`.
pub fn for_each_pair_within(
    points: &[Point],
    window: &Window,
    r: f64,
    mut f: impl FnMut(usize, usize, f64, f64, f64),
) {
    let index = CellIndex::new(points, window, r);
    for (i, &u) in points.iter().enumerate() {
        index.for_each_within(points, u, r, |j, d| {
            if j > i {
                let p = points[j];
                f(i, j, p.x - u.x, p.y - u.y, d);
            }
        });
    }
}
