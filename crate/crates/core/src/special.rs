//! Special functions: Gamma, incomplete Beta, Bessel functions of integer and
//! half-integer order, and the spherical average of `cos(s * e . u)`.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of `|Gamma(x)|` via the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let s = (PI * x).sin().abs();
        return PI.ln() - s.ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function. Poles at non-positive integers return `f64::INFINITY`.
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    if x > 171.6 {
        return f64::INFINITY;
    }
    let x1 = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x1 + i as f64);
    }
    let t = x1 + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x1 + 0.5) * (-t).exp() * acc
}

/// Complete Beta function `B(a, b)`.
pub fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// Surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    sphere_area(d) / d as f64
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Unnormalized lower incomplete Beta `B(x; a, b) = int_0^x t^{a-1}(1-t)^{b-1} dt`,
/// with `x` and `1 - x` passed separately so that callers can avoid cancellation.
pub fn inc_beta_split(x: f64, one_minus_x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return beta(a, b);
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        beta(a, b) - ln_front.exp() * beta_cf(b, a, one_minus_x) / b
    }
}

/// Unnormalized lower incomplete Beta `B(x; a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    inc_beta_split(x, 1.0 - x, a, b)
}

/// Regularized incomplete Beta `I_x(a, b)`.
pub fn inc_beta_reg(x: f64, a: f64, b: f64) -> f64 {
    inc_beta(x, a, b) / beta(a, b)
}

/// `int_0^w s^{a-1} (1+s)^{-a-b} ds`, the Beta integral on the half line.
///
/// Equals `B(w/(1+w); a, b)`; evaluated without forming `1 - w/(1+w)`.
pub fn half_line_beta(w: f64, a: f64, b: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if !w.is_finite() {
        return beta(a, b);
    }
    let x = w / (1.0 + w);
    let omx = 1.0 / (1.0 + w);
    inc_beta_split(x, omx, a, b)
}

/// Bessel function of the first kind `J_nu(x)` for `nu = order2 / 2`
/// (integer or half-integer order), `x >= 0`.
pub fn bessel_j_half(order2: u32, x: f64) -> f64 {
    let nu = order2 as f64 / 2.0;
    if x == 0.0 {
        return if order2 == 0 { 1.0 } else { 0.0 };
    }
    if x <= 8.0_f64.max(nu + 2.0) {
        return bessel_series(nu, x);
    }
    if order2 % 2 == 1 {
        let n = (order2 / 2) as usize;
        return (2.0 * x / PI).sqrt() * spherical_bessel_upward(n, x);
    }
    let n = order2 / 2;
    if x <= 60.0 {
        bessel_trapezoid(n, x)
    } else {
        bessel_hankel(nu, x)
    }
}

fn bessel_series(nu: f64, x: f64) -> f64 {
    let q = -x * x / 4.0;
    let mut term = (nu * (x / 2.0).ln() - ln_gamma(nu + 1.0)).exp();
    let mut sum = term;
    for k in 1..400 {
        let k = k as f64;
        term *= q / (k * (nu + k));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

// Trapezoid rule for Bessel's integral; the integrand is 2pi-periodic and
// analytic so the rule converges geometrically once the node count exceeds ~x.
fn bessel_trapezoid(n: u32, x: f64) -> f64 {
    const NODES: usize = 160;
    let mut acc = 0.0;
    for k in 0..NODES {
        let th = 2.0 * PI * (k as f64) / NODES as f64;
        acc += (n as f64 * th - x * th.sin()).cos();
    }
    acc / NODES as f64
}

fn bessel_hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    for k in 0..60 {
        if k > 0 {
            let kk = k as f64;
            term *= (mu - (2.0 * kk - 1.0).powi(2)) / (kk * 8.0 * x);
        }
        if term.abs() < 1e-17 {
            break;
        }
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
    }
    let chi = x - (nu / 2.0 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn spherical_bessel_upward(n: usize, x: f64) -> f64 {
    let j0 = x.sin() / x;
    if n == 0 {
        return j0;
    }
    let mut jm = j0;
    let mut j = x.sin() / (x * x) - x.cos() / x;
    for k in 1..n {
        let next = (2 * k + 1) as f64 / x * j - jm;
        jm = j;
        j = next;
    }
    j
}

/// Spherical average of `cos(s * u_1)` over the unit sphere of `R^d`,
/// `Gamma(d/2) (2/s)^{d/2-1} J_{d/2-1}(s)`.
pub fn spherical_average_cos(d: usize, s: f64) -> f64 {
    let s = s.abs();
    let h = d as f64 / 2.0;
    if s <= 8.0_f64.max(h + 1.0) {
        let q = -s * s / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..400 {
            let k = k as f64;
            term *= q / (k * (h + k - 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return sum;
    }
    let order2 = (d - 2) as u32;
    (ln_gamma(h) + (h - 1.0) * (2.0 / s).ln()).exp() * bessel_j_half(order2, s)
}

/// `1 - spherical_average_cos(d, s)`, computed without cancellation for small `s`.
pub fn one_minus_spherical_average_cos(d: usize, s: f64) -> f64 {
    let s = s.abs();
    let h = d as f64 / 2.0;
    if s <= 2.0 {
        let q = -s * s / 4.0;
        let mut term = -q / h;
        let mut sum = term;
        for k in 2..200 {
            let k = k as f64;
            term *= q / (k * (h + k - 1.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return sum;
    }
    1.0 - spherical_average_cos(d, s)
}
