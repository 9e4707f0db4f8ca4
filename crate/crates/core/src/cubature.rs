//! Two-dimensional adaptive cubature over cells clipped by a disk, with
//! polar rules around isolated integrable point singularities.
//!
//! A region is an axis-aligned rectangle intersected with a disk (or the
//! whole rectangle). Leaves without a singular point use iterated
//! Gauss–Legendre with breakpoints where the circle crosses the rectangle;
//! leaves holding one singular point use a polar rule centred at it, with the
//! graded radial substitution `r = rho t^m` that absorbs `r^{-p}` behaviour.

use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::quad::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Disk {
    fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        (x - self.cx).hypot(y - self.cy) <= self.r + tol
    }
}

/// `[x0, x1] x [y0, y1]`, optionally intersected with a disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub disk: Option<Disk>,
}

fn disk_antiderivative(t: f64, r: f64) -> f64 {
    let t = t.clamp(-r, r);
    0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
}

impl Region {
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1, disk: None }
    }

    pub fn clipped(x0: f64, x1: f64, y0: f64, y1: f64, disk: Disk) -> Self {
        let full = Self { x0, x1, y0, y1, disk: None };
        // drop the disk when the rectangle lies inside it
        let inside = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
            .iter()
            .all(|&(x, y)| disk.contains(x, y, -1e-14 * disk.r));
        if inside {
            full
        } else {
            Self { disk: Some(disk), ..full }
        }
    }

    pub fn size(&self) -> f64 {
        (self.x1 - self.x0).max(self.y1 - self.y0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-12 * self.size();
        x >= self.x0 - tol
            && x <= self.x1 + tol
            && y >= self.y0 - tol
            && y <= self.y1 + tol
            && self.disk.is_none_or(|d| d.contains(x, y, tol))
    }

    // vertical extent of the region at abscissa x
    fn y_range(&self, x: f64) -> (f64, f64) {
        match self.disk {
            None => (self.y0, self.y1),
            Some(d) => {
                let s = (d.r * d.r - (x - d.cx).powi(2)).max(0.0).sqrt();
                (self.y0.max(d.cy - s), self.y1.min(d.cy + s))
            }
        }
    }

    // x-breakpoints between which the top and bottom curves are smooth
    fn x_breaks(&self) -> Vec<f64> {
        let mut xs = vec![self.x0, self.x1];
        if let Some(d) = self.disk {
            xs.push(d.cx - d.r);
            xs.push(d.cx + d.r);
            for y in [self.y0, self.y1] {
                let dy = y - d.cy;
                if dy.abs() < d.r {
                    let s = (d.r * d.r - dy * dy).sqrt();
                    xs.push(d.cx - s);
                    xs.push(d.cx + s);
                }
            }
        }
        let mut xs: Vec<f64> = xs.into_iter().filter(|&x| x >= self.x0 && x <= self.x1).collect();
        if let Some(d) = self.disk {
            xs.retain(|&x| x >= d.cx - d.r && x <= d.cx + d.r);
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + a.abs()));
        xs
    }

    /// Exact area.
    pub fn area(&self) -> f64 {
        let d = match self.disk {
            None => return (self.x1 - self.x0) * (self.y1 - self.y0),
            Some(d) => d,
        };
        let xs = self.x_breaks();
        let mut area = 0.0;
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let m = 0.5 * (a + b);
            let s = (d.r * d.r - (m - d.cx).powi(2)).max(0.0).sqrt();
            let top_curve = d.cy + s < self.y1;
            let bot_curve = d.cy - s > self.y0;
            let (top, bot) = (self.y1.min(d.cy + s), self.y0.max(d.cy - s));
            if top <= bot {
                continue;
            }
            let arc = disk_antiderivative(b - d.cx, d.r) - disk_antiderivative(a - d.cx, d.r);
            let top_int = if top_curve { d.cy * (b - a) + arc } else { self.y1 * (b - a) };
            let bot_int = if bot_curve { d.cy * (b - a) - arc } else { self.y0 * (b - a) };
            area += top_int - bot_int;
        }
        area
    }

    pub fn is_empty(&self) -> bool {
        self.area() <= 0.0
    }

    /// Iterated Gauss rule with `n` nodes per direction on each smooth piece.
    pub fn tensor_rule(&self, n: usize) -> Vec<([f64; 2], f64)> {
        let (gx, gw) = gl(n);
        let mut out = Vec::with_capacity(n * n * 3);
        let xs = self.x_breaks();
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            // grade toward an endpoint where the vertical extent has a square-root edge
            let (grade_lo, grade_hi) = match self.disk {
                Some(d) => (
                    (a - (d.cx - d.r)).abs() <= 1e-14 * d.r,
                    (b - (d.cx + d.r)).abs() <= 1e-14 * d.r,
                ),
                None => (false, false),
            };
            for i in 0..n {
                let u = 0.5 * (gx[i] + 1.0);
                let (x, jac) = if grade_lo && !grade_hi {
                    (a + (b - a) * u * u, (b - a) * 2.0 * u)
                } else if grade_hi && !grade_lo {
                    (b - (b - a) * u * u, (b - a) * 2.0 * u)
                } else if grade_lo && grade_hi {
                    // whole chord: x = c - r cos(pi u)
                    let c = 0.5 * (a + b);
                    let r = 0.5 * (b - a);
                    (c - r * (PI * u).cos(), r * PI * (PI * u).sin())
                } else {
                    (a + (b - a) * u, b - a)
                };
                let wx = 0.5 * gw[i] * jac;
                let (lo, hi) = self.y_range(x);
                if hi <= lo {
                    continue;
                }
                for j in 0..n {
                    let y = lo + (hi - lo) * 0.5 * (gx[j] + 1.0);
                    out.push(([x, y], wx * 0.5 * gw[j] * (hi - lo)));
                }
            }
        }
        out
    }

    fn children(&self) -> [Region; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        let mk = |x0, x1, y0, y1| match self.disk {
            Some(d) => Region::clipped(x0, x1, y0, y1, d),
            None => Region::rect(x0, x1, y0, y1),
        };
        [
            mk(self.x0, xm, self.y0, ym),
            mk(xm, self.x1, self.y0, ym),
            mk(self.x0, xm, ym, self.y1),
            mk(xm, self.x1, ym, self.y1),
        ]
    }

    // Distance from an interior point along the unit direction (c, s) to the boundary.
    fn ray_exit(&self, p: [f64; 2], c: f64, s: f64) -> f64 {
        let mut t = f64::INFINITY;
        if c > 0.0 {
            t = t.min((self.x1 - p[0]) / c);
        } else if c < 0.0 {
            t = t.min((self.x0 - p[0]) / c);
        }
        if s > 0.0 {
            t = t.min((self.y1 - p[1]) / s);
        } else if s < 0.0 {
            t = t.min((self.y0 - p[1]) / s);
        }
        if let Some(d) = self.disk {
            let (ox, oy) = (p[0] - d.cx, p[1] - d.cy);
            let bq = ox * c + oy * s;
            let cq = ox * ox + oy * oy - d.r * d.r;
            let disc = (bq * bq - cq).max(0.0);
            t = t.min(-bq + disc.sqrt());
        }
        t.max(0.0)
    }

    // Angles (from p) at which the boundary of the region has a corner.
    fn corner_angles(&self, p: [f64; 2]) -> Vec<f64> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for &(x, y) in &[(self.x0, self.y0), (self.x1, self.y0), (self.x0, self.y1), (self.x1, self.y1)] {
            if self.disk.is_none_or(|d| d.contains(x, y, 0.0)) {
                pts.push((x, y));
            }
        }
        if let Some(d) = self.disk {
            for y in [self.y0, self.y1] {
                let dy = y - d.cy;
                if dy.abs() < d.r {
                    let s = (d.r * d.r - dy * dy).sqrt();
                    for x in [d.cx - s, d.cx + s] {
                        if x > self.x0 && x < self.x1 {
                            pts.push((x, y));
                        }
                    }
                }
            }
            for x in [self.x0, self.x1] {
                let dx = x - d.cx;
                if dx.abs() < d.r {
                    let s = (d.r * d.r - dx * dx).sqrt();
                    for y in [d.cy - s, d.cy + s] {
                        if y > self.y0 && y < self.y1 {
                            pts.push((x, y));
                        }
                    }
                }
            }
        }
        let tiny = 1e-12 * self.size();
        let mut angles: Vec<f64> = pts
            .into_iter()
            .filter(|&(x, y)| (x - p[0]).hypot(y - p[1]) > tiny)
            .map(|(x, y)| (y - p[1]).atan2(x - p[0]).rem_euclid(2.0 * PI))
            .collect();
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        angles
    }

    /// Polar rule centred at `p` (inside or on the boundary of the region).
    ///
    /// `grade` is the exponent `m` of `r = rho t^m`.
    pub fn polar_rule(&self, p: [f64; 2], n: usize, grade: f64) -> Vec<([f64; 2], f64)> {
        let (gx, gw) = gl(n);
        let mut angles = self.corner_angles(p);
        if angles.is_empty() {
            angles = vec![0.0, 0.5 * PI, PI, 1.5 * PI];
        }
        let k = angles.len();
        let mut out = Vec::with_capacity(n * n * (k + 1));
        for i in 0..k {
            let a = angles[i];
            let b = if i + 1 < k { angles[i + 1] } else { angles[0] + 2.0 * PI };
            if b - a < 1e-14 {
                continue;
            }
            // a wedge wider than pi would straddle the outside when p is on the boundary
            let mid = 0.5 * (a + b);
            if self.ray_exit(p, mid.cos(), mid.sin()) <= 1e-12 * self.size() {
                continue;
            }
            let pieces = ((b - a) / (0.5 * PI)).ceil().max(1.0) as usize;
            let step = (b - a) / pieces as f64;
            for q in 0..pieces {
                let a2 = a + step * q as f64;
                for ti in 0..n {
                    let th = a2 + step * 0.5 * (gx[ti] + 1.0);
                    let wt = 0.5 * step * gw[ti];
                    let (c, s) = (th.cos(), th.sin());
                    let rho = self.ray_exit(p, c, s);
                    if rho <= 0.0 {
                        continue;
                    }
                    for ri in 0..n {
                        let t = 0.5 * (gx[ri] + 1.0);
                        let r = rho * t.powf(grade);
                        let dr = rho * grade * t.powf(grade - 1.0) * 0.5 * gw[ri];
                        out.push(([p[0] + r * c, p[1] + r * s], wt * dr * r));
                    }
                }
            }
        }
        out
    }
}

fn gl(n: usize) -> (&'static [f64], &'static [f64]) {
    static RULES: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=32).map(|k| if k == 0 { (vec![], vec![]) } else { gauss_legendre(k) }).collect());
    let r = &rules[n.min(32)];
    (&r.0, &r.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubatureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_leaves: usize,
    /// Exponent of the radial grading in polar leaves.
    pub grade: f64,
    /// Nodes per direction of the low-order rules (the check rule doubles them).
    pub order: usize,
}

impl Default for CubatureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-6, max_leaves: 4000, grade: 2.0, order: 5 }
    }
}

impl CubatureConfig {
    /// Grading that smooths an `r^{alpha - 2}` singularity (after the polar Jacobian).
    pub fn for_alpha(alpha: f64) -> Self {
        let m = if alpha > 1.0 { (1.0 / (alpha - 1.0)).ceil().max(2.0) } else { 4.0 };
        Self { grade: m.min(6.0), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cubature<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

struct Leaf<const K: usize> {
    region: Region,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Leaf<K> {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl<const K: usize> Eq for Leaf<K> {}
impl<const K: usize> PartialOrd for Leaf<K> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<const K: usize> Ord for Leaf<K> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn apply<const K: usize, F: FnMut([f64; 2]) -> [f64; K]>(f: &mut F, rule: &[([f64; 2], f64)]) -> [f64; K] {
    let mut acc = [0.0; K];
    for (p, w) in rule {
        let v = f(*p);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc
}

fn max_diff<const K: usize>(a: &[f64; K], b: &[f64; K]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs<const K: usize>(a: &[f64; K]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

// Estimate one leaf: returns (value, error, evals), or None when it must be split.
fn leaf_estimate<const K: usize, F: FnMut([f64; 2]) -> [f64; K]>(
    f: &mut F,
    region: &Region,
    singular: &[[f64; 2]],
    cfg: &CubatureConfig,
) -> Option<([f64; K], f64, usize)> {
    let inside: Vec<&[f64; 2]> = singular.iter().filter(|p| region.contains(p[0], p[1])).collect();
    match inside.len() {
        0 => {
            let lo = region.tensor_rule(cfg.order);
            let hi = region.tensor_rule(2 * cfg.order);
            let (a, b) = (apply(f, &lo), apply(f, &hi));
            Some((b, max_diff(&a, &b), lo.len() + hi.len()))
        }
        1 => {
            let p = *inside[0];
            let lo = region.polar_rule(p, cfg.order + 1, cfg.grade);
            let hi = region.polar_rule(p, 2 * cfg.order + 2, cfg.grade);
            let (a, b) = (apply(f, &lo), apply(f, &hi));
            Some((b, max_diff(&a, &b), lo.len() + hi.len()))
        }
        _ => None,
    }
}

/// Adaptive cubature of a vector-valued integrand over `region`.
///
/// `singular` lists points where the integrand may blow up (integrably).
pub fn integrate_2d<const K: usize, F: FnMut([f64; 2]) -> [f64; K]>(
    mut f: F,
    region: Region,
    singular: &[[f64; 2]],
    cfg: CubatureConfig,
) -> Cubature<K> {
    let mut heap: BinaryHeap<Leaf<K>> = BinaryHeap::new();
    let mut pending = vec![region];
    let mut evals = 0usize;
    let mut leaves = 0usize;
    let mut value = [0.0; K];
    let mut error = 0.0;
    let mut converged = true;
    loop {
        while let Some(r) = pending.pop() {
            if r.area() <= 0.0 {
                continue;
            }
            match leaf_estimate(&mut f, &r, singular, &cfg) {
                Some((v, e, n)) => {
                    evals += n;
                    leaves += 1;
                    for k in 0..K {
                        value[k] += v[k];
                    }
                    error += e;
                    heap.push(Leaf { region: r, value: v, error: e });
                }
                None => {
                    if r.size() < 1e-13 {
                        // coincident singular points: nothing left to resolve
                        continue;
                    }
                    pending.extend(r.children());
                }
            }
        }
        let target = cfg.abs_tol.max(cfg.rel_tol * max_abs(&value));
        if error <= target {
            break;
        }
        if leaves >= cfg.max_leaves {
            converged = false;
            break;
        }
        let worst = match heap.pop() {
            Some(l) => l,
            None => break,
        };
        for k in 0..K {
            value[k] -= worst.value[k];
        }
        error -= worst.error;
        if worst.region.size() < 1e-12 {
            converged = false;
            for k in 0..K {
                value[k] += worst.value[k];
            }
            error += worst.error;
            break;
        }
        pending.extend(worst.region.children());
    }
    // re-sum to shed accumulated cancellation in the running totals
    let mut v = [0.0; K];
    let mut e = 0.0;
    for l in heap.iter() {
        for k in 0..K {
            v[k] += l.value[k];
        }
        e += l.error;
    }
    if converged {
        value = v;
        error = e;
    }
    Cubature { value, error, evals, converged }
}

/// Scalar convenience wrapper around [`integrate_2d`].
pub fn integrate_2d_scalar<F: FnMut([f64; 2]) -> f64>(
    mut f: F,
    region: Region,
    singular: &[[f64; 2]],
    cfg: CubatureConfig,
) -> Cubature<1> {
    integrate_2d(|p| [f(p)], region, singular, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn clipped_area_exact() {
        let d = Disk { cx: 0.0, cy: 0.0, r: 1.0 };
        // quarter disk
        let q = Region::clipped(0.0, 1.0, 0.0, 1.0, d);
        assert!(rel(q.area(), PI / 4.0) < 1e-14);
        // full disk
        let f = Region::clipped(-2.0, 2.0, -2.0, 2.0, d);
        assert!(rel(f.area(), PI) < 1e-14);
        // square fully inside keeps its own area
        let s = Region::clipped(-0.1, 0.1, -0.1, 0.1, d);
        assert!(s.disk.is_none() && rel(s.area(), 0.04) < 1e-14);
        // tensor rule integrates 1 to the area
        for (n, tol) in [(3, 1e-3), (8, 1e-9)] {
            let a: f64 = q.tensor_rule(n).iter().map(|x| x.1).sum();
            assert!(rel(a, PI / 4.0) < tol, "n={n}: {a}");
        }
    }

    #[test]
    fn polynomial_over_disk() {
        let d = Disk { cx: 0.0, cy: 0.0, r: 1.0 };
        let reg = Region::clipped(-1.0, 1.0, -1.0, 1.0, d);
        // int_disk x^2 = pi / 4
        let c = integrate_2d_scalar(|p| p[0] * p[0], reg, &[], CubatureConfig::default());
        assert!(c.converged && rel(c.value[0], PI / 4.0) < 1e-8, "{c:?}");
    }

    #[test]
    fn singular_point_inside_square() {
        // int over [-1,1]^2 of |p|^{-1/2} has the closed form 8 int_0^{pi/4} (sec t)^{3/2} / (3/2) dt
        let reg = Region::rect(-1.0, 1.0, -1.0, 1.0);
        let c = integrate_2d_scalar(|p| p[0].hypot(p[1]).powf(-0.5), reg, &[[0.0, 0.0]], CubatureConfig::default());
        let inner = crate::quad::integrate(|t: f64| t.cos().powf(-1.5) / 1.5, 0.0, PI / 4.0, Default::default()).value;
        assert!(c.converged && rel(c.value[0], 8.0 * inner) < 1e-6, "{c:?} vs {}", 8.0 * inner);
    }

    #[test]
    fn two_singular_points_and_clipping() {
        // |p - a|^{-1/2} + |p - b|^{-1/2} over the unit disk; each term by symmetry
        // about its own point is checked against a polar quadrature oracle
        let d = Disk { cx: 0.0, cy: 0.0, r: 1.0 };
        let reg = Region::clipped(-1.0, 1.0, -1.0, 1.0, d);
        let a = [0.3, 0.1];
        let b = [-0.5, -0.2];
        let f = |p: [f64; 2]| (p[0] - a[0]).hypot(p[1] - a[1]).powf(-0.5) + (p[0] - b[0]).hypot(p[1] - b[1]).powf(-0.5);
        let c = integrate_2d_scalar(f, reg, &[a, b], CubatureConfig::default());
        let oracle = |q: [f64; 2]| {
            // int_disk |p - q|^{-1/2} = int_0^{2pi} rho(t)^{3/2} / (3/2) dt
            crate::quad::integrate(
                |t: f64| {
                    let (c, s) = (t.cos(), t.sin());
                    let bq = q[0] * c + q[1] * s;
                    let rho = -bq + (bq * bq - (q[0] * q[0] + q[1] * q[1] - 1.0)).sqrt();
                    rho.powf(1.5) / 1.5
                },
                0.0,
                2.0 * PI,
                Default::default(),
            )
            .value
        };
        let want = oracle(a) + oracle(b);
        assert!(c.converged && rel(c.value[0], want) < 1e-6, "{c:?} vs {want}");
    }

    #[test]
    fn singular_point_on_corner() {
        let reg = Region::rect(0.0, 1.0, 0.0, 1.0);
        let c = integrate_2d_scalar(|p| p[0].hypot(p[1]).powf(-0.5), reg, &[[0.0, 0.0]], CubatureConfig::default());
        let inner = crate::quad::integrate(|t: f64| t.cos().powf(-1.5) / 1.5, 0.0, PI / 4.0, Default::default()).value;
        assert!(rel(c.value[0], 2.0 * inner) < 1e-6, "{c:?}");
    }
}
