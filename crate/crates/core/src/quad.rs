//! One-dimensional quadrature: adaptive Gauss-Kronrod (7/15) on finite
//! intervals, dyadic sweeps toward singular endpoints and infinity, and
//! Gauss-Legendre rules.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

impl QuadConfig {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

impl QuadResult {
    fn zero() -> Self {
        Self {
            value: 0.0,
            error: 0.0,
            evals: 0,
            converged: true,
        }
    }

    fn absorb(&mut self, other: QuadResult) {
        self.value += other.value;
        self.error += other.error;
        self.evals += other.evals;
        self.converged &= other.converged;
    }

    /// Turn a non-converged result into an error carrying the achieved estimate.
    pub fn require(self, what: &'static str) -> Result<f64> {
        if self.converged && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::Quadrature {
                what,
                value: self.value,
                error: self.error,
            })
        }
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    let err = (kron - gauss).abs();
    (kron, err.max(50.0 * f64::EPSILON * kron.abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` (globally adaptive,
/// bisecting the segment with the largest error estimate).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, cfg: QuadConfig) -> QuadResult {
    if a == b {
        return QuadResult::zero();
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut value = v;
    let mut error = e;
    let mut evals = 15;
    let mut splits = 0;
    while error > cfg.target(value) && splits < cfg.max_subdivisions {
        let seg = heap.pop().expect("non-empty heap");
        let m = 0.5 * (seg.a + seg.b);
        if m <= seg.a || m >= seg.b {
            heap.push(seg);
            break;
        }
        let (v1, e1) = gk15(&mut f, seg.a, m);
        let (v2, e2) = gk15(&mut f, m, seg.b);
        evals += 30;
        splits += 1;
        value += v1 + v2 - seg.value;
        error += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: m,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: m,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated round-off from the running updates
    let (mut value, mut error) = (0.0, 0.0);
    for s in heap.iter() {
        value += s.value;
        error += s.error;
    }
    QuadResult {
        value,
        error,
        evals,
        converged: error <= cfg.target(value) * 1.0001,
    }
}

/// Adaptive integration over consecutive breakpoints `pts[0] < pts[1] < ...`.
pub fn integrate_breaks<F: FnMut(f64) -> f64>(mut f: F, pts: &[f64], cfg: QuadConfig) -> QuadResult {
    let mut out = QuadResult::zero();
    for w in pts.windows(2) {
        out.absorb(integrate(&mut f, w[0], w[1], cfg));
    }
    out
}

/// Limit on dyadic pieces in the endpoint sweeps.
const MAX_DYADIC_PIECES: usize = 4000;

/// `int_{lo}^{hi} f` for `lo = 0` treated as a possibly singular endpoint:
/// integrates the dyadic pieces `[hi 2^{-k-1}, hi 2^{-k}]` until the
/// geometric tail estimate drops below tolerance.
///
/// Returns [`Error::NonIntegrable`] when the piece contributions stop
/// decaying, which is how an `r^{-1}`-or-worse singularity shows up.
pub fn integrate_to_zero<F: FnMut(f64) -> f64>(mut f: F, hi: f64, cfg: QuadConfig) -> Result<QuadResult> {
    dyadic_sweep(&mut f, hi, 0.5, cfg)
}

/// `int_{lo}^{inf} f` by dyadic pieces `[lo 2^k, lo 2^{k+1}]`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, lo: f64, cfg: QuadConfig) -> Result<QuadResult> {
    dyadic_sweep(&mut f, lo, 2.0, cfg)
}

fn dyadic_sweep<F: FnMut(f64) -> f64>(f: &mut F, start: f64, factor: f64, cfg: QuadConfig) -> Result<QuadResult> {
    let mut total = QuadResult::zero();
    let piece_cfg = QuadConfig {
        abs_tol: cfg.abs_tol * 0.05,
        rel_tol: cfg.rel_tol * 0.5,
        max_subdivisions: cfg.max_subdivisions,
    };
    let mut prev_abs = f64::NAN;
    let mut growth_run = 0usize;
    let mut x = start;
    for _ in 0..MAX_DYADIC_PIECES {
        let y = x * factor;
        let (lo, hi) = if factor < 1.0 { (y, x) } else { (x, y) };
        let piece = integrate(&mut *f, lo, hi, piece_cfg);
        total.absorb(piece);
        let a = piece.value.abs();
        if prev_abs.is_finite() && prev_abs > 0.0 {
            let ratio = a / prev_abs;
            if ratio >= 0.999 {
                growth_run += 1;
            } else {
                growth_run = 0;
            }
            if growth_run >= 40 && a > cfg.target(total.value) {
                return Err(Error::NonIntegrable {
                    at: if factor < 1.0 { 0.0 } else { f64::INFINITY },
                    detail: format!("dyadic contributions stopped decaying near {y:.3e}"),
                });
            }
            if ratio < 0.999 {
                let tail = a * ratio / (1.0 - ratio);
                if tail < 0.1 * cfg.target(total.value) {
                    total.error += tail;
                    return Ok(total);
                }
            }
        } else if a == 0.0 && prev_abs == 0.0 {
            return Ok(total);
        }
        prev_abs = a;
        x = y;
        if x == 0.0 || !x.is_finite() {
            break;
        }
    }
    total.converged = false;
    Ok(total)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(&w).map(|(xi, wi)| (c + h * xi, h * wi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact_and_smooth() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, QuadConfig::default());
        assert!((r.value - 0.0).abs() < 1e-13);
        let r = integrate(f64::sin, 0.0, std::f64::consts::PI, QuadConfig::default());
        assert!((r.value - 2.0).abs() < 1e-13 && r.converged);
    }

    #[test]
    fn algebraic_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let r = integrate_to_zero(|x| x.powf(-0.5), 1.0, QuadConfig::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{r:?}");
        // int_0^1 x^{-0.95} dx = 20, slow geometric decay of the pieces
        let r = integrate_to_zero(|x| x.powf(-0.95), 1.0, QuadConfig::default()).unwrap();
        assert!((r.value - 20.0).abs() < 1e-7 * 20.0, "{r:?}");
    }

    #[test]
    fn non_integrable_is_detected() {
        let r = integrate_to_zero(|x| 1.0 / x, 1.0, QuadConfig::default());
        assert!(matches!(r, Err(Error::NonIntegrable { .. })));
        let r = integrate_to_infinity(|x| 1.0 / x, 1.0, QuadConfig::default());
        assert!(matches!(r, Err(Error::NonIntegrable { .. })));
    }

    #[test]
    fn half_line_power_tail() {
        // int_1^inf x^{-1.5} dx = 2
        let r = integrate_to_infinity(|x| x.powf(-1.5), 1.0, QuadConfig::default()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        for n in 1..12 {
            let rule = gauss_legendre_on(n, -1.0, 3.0);
            let deg = 2 * n - 1;
            let v: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = (3.0_f64.powi(deg as i32 + 1) - 1.0) / (deg as f64 + 1.0);
            assert!((v - exact).abs() < 1e-10 * exact.abs().max(1.0), "n={n}");
        }
    }
}
