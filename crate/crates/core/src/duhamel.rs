//! The Green-level perturbation series `G~ = sum_n G_n`, with
//! `G_n(x, y) = int G_{n-1}(x, z) b(z) . grad_z G(z, y) dz`, on planar cell grids.
//!
//! Each term is stored as cell averages. Writing `G_n = rho_n G_0` cellwise,
//! the recursion becomes `rho_n = M rho_{n-1}` with a source-dependent
//! transfer matrix `M`, assembled once and reused for every term.

use serde::Serialize;

use crate::cubature::{integrate_2d, CubatureConfig};
use crate::error::{Error, Result};
use crate::geometry::{dist, Domain};
use crate::grid::{CellGrid, GreenGrid};
use crate::kernels::{domain_regions, kappa_pair, DriftField, GreenKernel};

// ---------------------------------------------------------------------------
// Gradient bound

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumGrad {
    pub grad: Vec<f64>,
    /// Largest change between the step-`h` and step-`h/2` estimates.
    pub richardson: f64,
}

/// Central-difference gradient `grad_z G(z, y)`, Richardson-extrapolated from steps `h` and `h/2`.
pub fn grad_green_num(kernel: &dyn GreenKernel, z: &[f64], y: &[f64], h: f64) -> Result<NumGrad> {
    if z == y {
        return Err(Error::Pole("z = y".into()));
    }
    let dz = kernel.domain().delta(z);
    if !(h > 0.0) || dz <= 2.0 * h || dist(z, y) <= 2.0 * h {
        return Err(Error::InvalidParameter(format!(
            "step {h} too large: delta(z) = {dz}, |z - y| = {}",
            dist(z, y)
        )));
    }
    let d = z.len();
    let diff = |step: f64, k: usize| {
        let mut p = z.to_vec();
        let mut m = z.to_vec();
        p[k] += step;
        m[k] -= step;
        (kernel.green(&p, y) - kernel.green(&m, y)) / (2.0 * step)
    };
    let mut grad = vec![0.0; d];
    let mut rich: f64 = 0.0;
    for (k, g) in grad.iter_mut().enumerate() {
        let (a, b) = (diff(h, k), diff(h / 2.0, k));
        *g = (4.0 * b - a) / 3.0;
        rich = rich.max((b - a).abs());
    }
    Ok(NumGrad { grad, richardson: rich })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C0Report {
    /// `max |grad_z G(z, y)| (|z - y| ∧ delta(z) ∧ 1) / G(z, y)` over the probed pairs.
    pub c0: f64,
    pub at: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
}

/// Measured constant of the gradient bound, using the kernel's analytic gradient.
pub fn measure_c0(kernel: &dyn GreenKernel, points: &[Vec<f64>]) -> Result<C0Report> {
    let dom = kernel.domain();
    let mut best = C0Report { c0: 0.0, at: (vec![], vec![]), pairs: 0 };
    let mut g = vec![0.0; dom.dim()];
    for z in points {
        for y in points {
            if z == y || !dom.contains(z) || !dom.contains(y) {
                continue;
            }
            let gv = kernel.green(z, y);
            if gv <= 0.0 {
                continue;
            }
            kernel.grad_x(z, y, &mut g);
            let scale = dist(z, y).min(dom.delta(z)).min(1.0);
            let c = crate::geometry::norm(&g) * scale / gv;
            best.pairs += 1;
            if c > best.c0 {
                best.c0 = c;
                best.at = (z.clone(), y.clone());
            }
        }
    }
    if best.pairs == 0 {
        return Err(Error::Empty("no admissible pair for the gradient bound".into()));
    }
    Ok(best)
}

/// Probe points: each ball's centre plus rings at the given radius fractions.
pub fn probe_points(domain: &Domain, fractions: &[f64], angles: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for b in domain.balls() {
        out.push(b.center.clone());
        for (k, &f) in fractions.iter().enumerate() {
            // stagger alternate rings so pairs are not all radially aligned
            let off = if k % 2 == 0 { 0.0 } else { 0.5 };
            for a in 0..angles {
                let th = 2.0 * std::f64::consts::PI * (a as f64 + off) / angles as f64;
                let mut p = b.center.clone();
                p[0] += f * b.radius * th.cos();
                p[1] += f * b.radius * th.sin();
                out.push(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaMax {
    pub kappa: f64,
    pub kappa_hat: f64,
    pub at: (Vec<f64>, Vec<f64>),
    pub pairs: usize,
    pub all_converged: bool,
}

pub fn kappa_max(kernel: &dyn GreenKernel, b: &DriftField, points: &[Vec<f64>], cfg: CubatureConfig) -> Result<KappaMax> {
    let mut best = KappaMax { kappa: 0.0, kappa_hat: 0.0, at: (vec![], vec![]), pairs: 0, all_converged: true };
    for x in points {
        for y in points {
            if x == y {
                continue;
            }
            let k = kappa_pair(kernel, b, x, y, cfg)?;
            best.pairs += 1;
            best.all_converged &= k.converged;
            best.kappa_hat = best.kappa_hat.max(k.kappa_hat);
            if k.kappa > best.kappa {
                best.kappa = k.kappa;
                best.at = (x.clone(), y.clone());
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contraction {
    pub c0: f64,
    pub kappa_max: f64,
    pub kappa_hat_max: f64,
    /// `q = C0 max kappa`.
    pub q: f64,
}

/// `q = C0 max kappa`, both measured on `kernel`.
pub fn contraction(
    kernel: &dyn GreenKernel,
    b: &DriftField,
    c0_points: &[Vec<f64>],
    kappa_points: &[Vec<f64>],
    cfg: CubatureConfig,
) -> Result<Contraction> {
    let c0 = measure_c0(kernel, c0_points)?.c0;
    let k = kappa_max(kernel, b, kappa_points, cfg)?;
    Ok(Contraction { c0, kappa_max: k.kappa, kappa_hat_max: k.kappa_hat, q: c0 * k.kappa })
}

// ---------------------------------------------------------------------------
// Pointwise terms (reference values on a handful of pairs)

/// `G_1(x, y) = int G(x, z) b(z) . grad_z G(z, y) dz` at a single pair.
pub fn green_term1_point(kernel: &dyn GreenKernel, b: &DriftField, x: &[f64], y: &[f64], cfg: CubatureConfig) -> Result<(f64, f64)> {
    let dom = kernel.domain();
    let mut v = 0.0;
    let mut e = 0.0;
    let mut bz = [0.0; 2];
    let mut gz = [0.0; 2];
    for reg in domain_regions(dom)? {
        let c = integrate_2d(
            |z: [f64; 2]| {
                if z[..] == x[..] || z[..] == y[..] || !dom.contains(&z) {
                    return [0.0];
                }
                b.eval(&z, &mut bz);
                kernel.grad_x(&z, y, &mut gz);
                [kernel.green(x, &z) * (bz[0] * gz[0] + bz[1] * gz[1])]
            },
            reg,
            &[[x[0], x[1]], [y[0], y[1]]],
            cfg,
        );
        v += c.value[0];
        e += c.error;
    }
    Ok((v, e))
}

/// `G_2(x, y)` from the defining recursion, gradient on the base kernel:
/// `int G_1(x, w) b(w) . grad_w G(w, y) dw`.
pub fn green_term2_point(kernel: &dyn GreenKernel, b: &DriftField, x: &[f64], y: &[f64], outer: CubatureConfig, inner: CubatureConfig) -> Result<f64> {
    let dom = kernel.domain();
    let mut v = 0.0;
    let mut bw = [0.0; 2];
    let mut gw = [0.0; 2];
    for reg in domain_regions(dom)? {
        let c = integrate_2d(
            |w: [f64; 2]| {
                if w[..] == x[..] || w[..] == y[..] || !dom.contains(&w) {
                    return [0.0];
                }
                b.eval(&w, &mut bw);
                kernel.grad_x(&w, y, &mut gw);
                let g1 = green_term1_point(kernel, b, x, &w, inner).map(|r| r.0).unwrap_or(f64::NAN);
                [g1 * (bw[0] * gw[0] + bw[1] * gw[1])]
            },
            reg,
            &[[x[0], x[1]], [y[0], y[1]]],
            outer,
        );
        v += c.value[0];
    }
    Ok(v)
}

/// `G_2(x, y)` from the alternative recursion, gradient on the first term:
/// `int G(x, z) b(z) . grad_z G_1(z, y) dz`, the gradient by central differences.
pub fn green_term2_point_alternate(
    kernel: &dyn GreenKernel,
    b: &DriftField,
    x: &[f64],
    y: &[f64],
    outer: CubatureConfig,
    inner: CubatureConfig,
    h: f64,
) -> Result<f64> {
    let dom = kernel.domain();
    let mut v = 0.0;
    let mut bz = [0.0; 2];
    for reg in domain_regions(dom)? {
        let c = integrate_2d(
            |z: [f64; 2]| {
                if z[..] == x[..] || z[..] == y[..] || !dom.contains(&z) {
                    return [0.0];
                }
                let step = h.min(dom.delta(&z) / 2.0).min(dist(&z, y) / 2.0);
                let g1 = |p: [f64; 2]| green_term1_point(kernel, b, &p, y, inner).map(|r| r.0).unwrap_or(f64::NAN);
                let dx = (g1([z[0] + step, z[1]]) - g1([z[0] - step, z[1]])) / (2.0 * step);
                let dy = (g1([z[0], z[1] + step]) - g1([z[0], z[1] - step])) / (2.0 * step);
                b.eval(&z, &mut bz);
                [kernel.green(x, &z) * (bz[0] * dx + bz[1] * dy)]
            },
            reg,
            &[[x[0], x[1]], [y[0], y[1]]],
            outer,
        );
        v += c.value[0];
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Transfer operator

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuhamelConfig {
    /// Cell pairs up to this index distance integrate the kernel gradient adaptively.
    pub near: i64,
    /// Up to this distance the target-cell rule is `z_order`²; beyond, `far_order`².
    pub mid: i64,
    pub z_order: usize,
    pub far_order: usize,
    /// Polar rule order for the cell holding the source.
    pub source_order: usize,
    /// Adaptive cubature for near-diagonal gradient integrals.
    pub near_cubature: CubatureConfig,
    /// Cubature for the base cell averages.
    pub green_cubature: CubatureConfig,
}

impl DuhamelConfig {
    pub fn for_alpha(alpha: f64) -> Self {
        let base = CubatureConfig::for_alpha(alpha);
        Self {
            near: 1,
            mid: 3,
            z_order: 4,
            far_order: 2,
            source_order: 8,
            near_cubature: CubatureConfig { abs_tol: 0.0, rel_tol: 1e-4, max_leaves: 64, order: 3, ..base },
            green_cubature: CubatureConfig { rel_tol: 1e-7, abs_tol: 1e-12, ..base },
        }
    }
}

/// Source-dependent transfer matrices `M[s][i * n + j]`: the contribution of
/// `rho_{n-1}` on cell `j` to `rho_n` on cell `i`.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub base: GreenGrid,
    m: Vec<Vec<f64>>,
    m_err: Vec<Vec<f64>>,
    drift_is_zero: bool,
}

type Rule = Vec<([f64; 2], f64)>;

impl TransferOperator {
    pub fn build(
        kernel: &dyn GreenKernel,
        b: &DriftField,
        cells: &CellGrid,
        sources: &[[f64; 2]],
        band: f64,
        cfg: DuhamelConfig,
    ) -> Result<Self> {
        let dom = kernel.domain();
        for s in sources {
            if !dom.contains(s) {
                return Err(Error::OutsideDomain(format!("source {s:?} outside D")));
            }
        }
        let base = GreenGrid::from_kernel(dom, cells.clone(), sources.to_vec(), band, |x, y| kernel.green(&x, &y), cfg.green_cubature)?;
        let n = cells.len();
        let ns = sources.len();
        if b.is_zero() {
            return Ok(Self { base, m: vec![vec![0.0; n * n]; ns], m_err: vec![vec![0.0; n * n]; ns], drift_is_zero: true });
        }
        let cl = cells.cells();
        let h = cells.spacing();
        let src_cell: Vec<usize> = sources
            .iter()
            .map(|s| cells.locate(s).ok_or_else(|| Error::OutsideDomain("source outside the grid".into())))
            .collect::<Result<_>>()?;
        // cells needing the fine z rule whatever the target: clipped, near the boundary, or near a source
        let fine_z: Vec<bool> = (0..n)
            .map(|j| {
                cl[j].region.disk.is_some()
                    || cl[j].delta < 2.0 * h
                    || src_cell.iter().any(|&sc| cells.index_distance(j, sc) <= cfg.mid)
            })
            .collect();
        let fine_y: Vec<bool> = (0..n).map(|i| cl[i].region.disk.is_some() || cl[i].delta < 2.0 * h).collect();
        let rule = |j: usize, order: usize| -> Rule { cl[j].region.tensor_rule(order) };
        let z4: Vec<Rule> = (0..n).map(|j| rule(j, cfg.z_order)).collect();
        let z2: Vec<Rule> = (0..n).map(|j| rule(j, cfg.far_order)).collect();
        let zs: Vec<Rule> = sources
            .iter()
            .zip(&src_cell)
            .map(|(s, &c)| cl[c].region.polar_rule(*s, cfg.source_order, cfg.green_cubature.grade))
            .collect();
        // weights w_k b(z_k) G(x_s, z_k) at every z node, per source
        let bvec = |p: [f64; 2]| {
            let mut o = [0.0; 2];
            b.eval(&p, &mut o);
            o
        };
        let weigh = |r: &Rule, s: usize| -> Vec<[f64; 2]> {
            r.iter()
                .map(|(p, w)| {
                    let bz = bvec(*p);
                    let g = if *p == sources[s] { 0.0 } else { w * kernel.green(&sources[s], p) };
                    [g * bz[0], g * bz[1]]
                })
                .collect()
        };
        let wz4: Vec<Vec<Vec<[f64; 2]>>> = (0..ns).map(|s| z4.iter().map(|r| weigh(r, s)).collect()).collect();
        let wz2: Vec<Vec<Vec<[f64; 2]>>> = (0..ns).map(|s| z2.iter().map(|r| weigh(r, s)).collect()).collect();
        let wzs: Vec<Vec<[f64; 2]>> = (0..ns).map(|s| weigh(&zs[s], s)).collect();

        let mut m = vec![vec![0.0; n * n]; ns];
        let mut m_err = vec![vec![0.0; n * n]; ns];
        let mut gbuf = [0.0; 2];
        for i in 0..n {
            let y4 = rule(i, cfg.z_order);
            let y2 = if fine_y[i] { y4.clone() } else { rule(i, cfg.far_order) };
            // F_i(z) = int_{c_i} grad_z G(z, y) dy, with an error estimate
            let mut f_at = |z: [f64; 2], dij: i64| -> ([f64; 2], f64) {
                if dij <= cfg.near {
                    let sing: &[[f64; 2]] = if cl[i].region.contains(z[0], z[1]) { &[z] } else { &[] };
                    // the third component, int |grad G|, sets the tolerance scale
                    // when the signed integrals nearly cancel
                    let c = integrate_2d(
                        |y: [f64; 2]| {
                            if y == z {
                                return [0.0; 3];
                            }
                            let mut g = [0.0; 2];
                            kernel.grad_x(&z, &y, &mut g);
                            [g[0], g[1], g[0].hypot(g[1])]
                        },
                        cl[i].region,
                        sing,
                        cfg.near_cubature,
                    );
                    ([c.value[0], c.value[1]], c.error)
                } else {
                    let yr = if dij <= cfg.mid { &y4 } else { &y2 };
                    let mut acc = [0.0; 2];
                    for (y, w) in yr {
                        kernel.grad_x(&z, y, &mut gbuf);
                        acc[0] += w * gbuf[0];
                        acc[1] += w * gbuf[1];
                    }
                    (acc, 0.0)
                }
            };
            for j in 0..n {
                let dij = cells.index_distance(i, j);
                let use4 = dij <= cfg.mid || fine_z[j];
                let (zr, wz) = if use4 { (&z4[j], &wz4) } else { (&z2[j], &wz2) };
                let generic_needed = src_cell.iter().any(|&sc| sc != j);
                if generic_needed {
                    let mut acc = vec![0.0; ns];
                    let mut err = vec![0.0; ns];
                    for (k, (z, _)) in zr.iter().enumerate() {
                        let (f, e) = f_at(*z, dij);
                        for s in 0..ns {
                            if src_cell[s] == j {
                                continue;
                            }
                            let wb = wz[s][j][k];
                            acc[s] += wb[0] * f[0] + wb[1] * f[1];
                            err[s] += wb[0].hypot(wb[1]) * e;
                        }
                    }
                    for s in 0..ns {
                        if src_cell[s] != j {
                            m[s][i * n + j] = acc[s];
                            m_err[s][i * n + j] = err[s];
                        }
                    }
                }
                for s in 0..ns {
                    if src_cell[s] != j {
                        continue;
                    }
                    let (mut acc, mut err) = (0.0, 0.0);
                    for (k, (z, _)) in zs[s].iter().enumerate() {
                        let (f, e) = f_at(*z, dij);
                        let wb = wzs[s][k];
                        acc += wb[0] * f[0] + wb[1] * f[1];
                        err += wb[0].hypot(wb[1]) * e;
                    }
                    m[s][i * n + j] = acc;
                    m_err[s][i * n + j] = err;
                }
            }
            for s in 0..ns {
                let denom = base.values[s][i] * cl[i].area;
                if !(denom > 0.0) {
                    return Err(Error::Degenerate(format!("zero base Green mass on cell {i}")));
                }
                for j in 0..n {
                    m[s][i * n + j] /= denom;
                    m_err[s][i * n + j] /= denom;
                }
            }
        }
        Ok(Self { base, m, m_err, drift_is_zero: false })
    }

    pub fn cells(&self) -> &CellGrid {
        &self.base.cells
    }

    pub fn len(&self) -> usize {
        self.base.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `rho_n = M rho_{n-1}` for source `s`, with propagated quadrature error.
    pub fn apply(&self, s: usize, rho: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut out = vec![0.0; n];
        let mut err = vec![0.0; n];
        if self.drift_is_zero {
            return (out, err);
        }
        for i in 0..n {
            let row = &self.m[s][i * n..(i + 1) * n];
            let erow = &self.m_err[s][i * n..(i + 1) * n];
            let mut a = 0.0;
            let mut e = 0.0;
            for j in 0..n {
                a += row[j] * rho[j];
                e += erow[j] * rho[j].abs();
            }
            out[i] = a;
            err[i] = e;
        }
        (out, err)
    }
}

/// `G_n` from `G_{n-1}` (both as cell averages aligned with the operator's grid).
pub fn duhamel_step(op: &TransferOperator, prev: &GreenGrid) -> Result<GreenGrid> {
    if !op.base.same_shape(prev) {
        return Err(Error::InvalidParameter("grids are not aligned".into()));
    }
    let mut out = GreenGrid::zeros(&op.base.domain, op.base.cells.clone(), op.base.sources.clone(), op.base.band);
    for s in 0..prev.sources.len() {
        let rho: Vec<f64> = prev.values[s].iter().zip(&op.base.values[s]).map(|(g, b)| g / b).collect();
        let (r, e) = op.apply(s, &rho);
        for c in 0..r.len() {
            out.values[s][c] = r[c] * op.base.values[s][c];
            out.sigma[s][c] = e[c] * op.base.values[s][c];
        }
    }
    Ok(out)
}

/// The base grid, the terms computed so far, and the contraction estimate.
#[derive(Debug, Clone)]
pub struct SeriesState {
    pub op: TransferOperator,
    pub terms: Vec<GreenGrid>,
    /// Measured `q = C0 max kappa`, if available.
    pub q: Option<f64>,
}

impl SeriesState {
    pub fn new(op: TransferOperator, q: Option<f64>) -> Self {
        Self { op, terms: Vec::new(), q }
    }

    pub fn base(&self) -> &GreenGrid {
        &self.op.base
    }

    /// Make sure `G_1..G_n` exist.
    pub fn extend_to(&mut self, n: usize) -> Result<()> {
        while self.terms.len() < n {
            let prev = self.terms.last().unwrap_or(&self.op.base).clone();
            let next = duhamel_step(&self.op, &prev)?;
            self.terms.push(next);
        }
        Ok(())
    }

    /// `max |G_n| / G_0` over all entries.
    pub fn term_ratio(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let t = &self.terms[n - 1];
        let b = &self.op.base;
        let mut m: f64 = 0.0;
        for s in 0..b.sources.len() {
            for c in 0..b.cells.len() {
                m = m.max((t.values[s][c] / b.values[s][c]).abs());
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SeriesSum {
    pub g_tilde: GreenGrid,
    /// Bound on the neglected tail, per entry.
    pub remainder: Vec<Vec<f64>>,
    pub terms: usize,
    pub q: Option<f64>,
    /// The tail bound follows from `q < 1` rather than from the observed term ratio.
    pub certified: bool,
    /// Observed ratio of the last two term norms.
    pub observed_ratio: f64,
}

/// Partial sum `G_0 + ... + G_n`, stopping early once `max |G_n| / G_0 < tol`.
pub fn duhamel_sum(state: &mut SeriesState, n_max: usize, tol: f64) -> Result<SeriesSum> {
    let mut n = 0;
    while n < n_max {
        state.extend_to(n + 1)?;
        n += 1;
        if state.term_ratio(n) < tol {
            break;
        }
    }
    let base = state.op.base.clone();
    let mut g = base.clone();
    for t in &state.terms[..n] {
        for s in 0..g.sources.len() {
            for c in 0..g.cells.len() {
                g.values[s][c] += t.values[s][c];
                g.sigma[s][c] += t.sigma[s][c];
            }
        }
    }
    let last = state.term_ratio(n);
    let observed = if n >= 1 { last / state.term_ratio(n - 1) } else { 0.0 };
    let (factor, certified) = match state.q {
        _ if last == 0.0 => (0.0, true),
        Some(q) if q < 1.0 => (q.powi(n as i32 + 1) / (1.0 - q), true),
        _ => {
            if n >= 2 && observed >= 1.0 {
                return Err(Error::Divergence(format!(
                    "term {n} is {observed:.3} times term {}; the series does not contract",
                    n - 1
                )));
            }
            (last * observed / (1.0 - observed), false)
        }
    };
    let remainder = base.values.iter().map(|row| row.iter().map(|v| factor * v).collect()).collect();
    Ok(SeriesSum { g_tilde: g, remainder, terms: n, q: state.q, certified, observed_ratio: observed })
}

// ---------------------------------------------------------------------------
// Comparability

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparabilityReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// One-sigma uncertainties of the extreme ratios.
    pub min_sigma: f64,
    pub max_sigma: f64,
    /// `max(max_ratio, 1 / min_ratio)`.
    pub envelope: f64,
    pub comparable: usize,
    /// `(lower edge, upper edge, count)` over log-spaced ratio bins.
    pub histogram: Vec<(f64, f64, usize)>,
}

/// Ratio statistics of `G~ / G` off the diagonal band, skipping entries whose
/// relative uncertainty exceeds 25%.
pub fn comparability_report(g: &GreenGrid, gt: &GreenGrid) -> Result<ComparabilityReport> {
    if !g.same_shape(gt) {
        return Err(Error::InvalidParameter("grids are not aligned".into()));
    }
    let mut ratios = Vec::new();
    for s in 0..g.sources.len() {
        for c in 0..g.cells.len() {
            if !g.off_band(s, c) {
                continue;
            }
            let (a, b) = (g.values[s][c], gt.values[s][c]);
            if !(a > 0.0) {
                continue;
            }
            let (ra, rb) = (g.sigma[s][c] / a, (gt.sigma[s][c] / b).abs());
            if !(ra <= 0.25 && rb <= 0.25) {
                continue;
            }
            let r = b / a;
            ratios.push((r, r.abs() * ra.hypot(rb)));
        }
    }
    if ratios.is_empty() {
        return Err(Error::Empty("no comparable entries".into()));
    }
    let (mut lo, mut hi) = (ratios[0], ratios[0]);
    for &p in &ratios {
        if p.0 < lo.0 {
            lo = p;
        }
        if p.0 > hi.0 {
            hi = p;
        }
    }
    let edges: Vec<f64> = (0..=16).map(|k| 2f64.powf(-2.0 + 0.25 * k as f64)).collect();
    let histogram = edges
        .windows(2)
        .map(|w| (w[0], w[1], ratios.iter().filter(|r| r.0 >= w[0] && r.0 < w[1]).count()))
        .collect();
    Ok(ComparabilityReport {
        min_ratio: lo.0,
        max_ratio: hi.0,
        min_sigma: lo.1,
        max_sigma: hi.1,
        envelope: hi.0.max(1.0 / lo.0),
        comparable: ratios.len(),
        histogram,
    })
}
