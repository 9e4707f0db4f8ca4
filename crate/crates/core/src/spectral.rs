//! Characteristic exponent, Lévy density, the Pruitt function `h`, the
//! renewal-type function `V = h^{-1/2}`, the potential comparand `U`, and
//! grid certificates for weak scaling conditions.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_infinity, integrate_to_zero, QuadConfig, QuadResult};
use crate::special::{gamma, ln_gamma, one_minus_spherical_average_cos, sphere_area};

/// `n` points geometrically spaced from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            (0..n)
                .map(|i| {
                    if i + 1 == n {
                        b
                    } else {
                        (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// The supported process families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    IsotropicStable { alpha: f64 },
    /// `nu = w0 nu_alpha + w1 nu_beta`, hence `psi = w0 |xi|^alpha + w1 |xi|^beta`.
    StableMixture { alpha: f64, beta: f64, weights: [f64; 2] },
    /// `psi(xi) = (|xi|^2 + m^{2/alpha})^{alpha/2} - m`.
    RelativisticStable { alpha: f64, mass: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::IsotropicStable { .. } => "isotropic-stable",
            Family::StableMixture { .. } => "stable-mixture",
            Family::RelativisticStable { .. } => "relativistic-stable",
        }
    }
}

/// Normalizing constant `A(d, alpha)` of `nu(r) = A r^{-d-alpha}` making `psi(xi) = |xi|^alpha`.
pub fn stable_nu_constant(d: usize, alpha: f64) -> f64 {
    let df = d as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((df + alpha) / 2.0)
        / (PI.powf(df / 2.0) * gamma(1.0 - alpha / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    alpha: f64,
    weight: f64,
    nu_c: f64,
    h_c: f64,
}

impl Component {
    fn new(d: usize, alpha: f64, weight: f64) -> Self {
        let nu_c = weight * stable_nu_constant(d, alpha);
        let h_c = nu_c * sphere_area(d) * 2.0 / (alpha * (2.0 - alpha));
        Self { alpha, weight, nu_c, h_c }
    }
}

/// Ratio `nu_rel(r) / nu_stable(r)` as a function of `s = m^{1/alpha} r`:
/// `phi(s) = Gamma(mu)^{-1} int_0^inf u^{-mu-1} exp(-1/u - s^2 u / 4) du`,
/// `mu = (d + alpha) / 2`, tabulated in `ln s`.
#[derive(Debug)]
struct TemperTable {
    mu: f64,
    x0: f64,
    dx: f64,
    ln_phi: Vec<f64>,
}

const TEMPER_S_MIN: f64 = 1e-4;
const TEMPER_S_MAX: f64 = 745.0;
const TEMPER_N: usize = 2400;

impl TemperTable {
    fn new(mu: f64) -> Self {
        let x0 = TEMPER_S_MIN.ln();
        let dx = (TEMPER_S_MAX.ln() - x0) / (TEMPER_N - 1) as f64;
        let ln_phi = (0..TEMPER_N)
            .map(|i| ln_phi_direct(mu, (x0 + dx * i as f64).exp()))
            .collect();
        Self { mu, x0, dx, ln_phi }
    }

    fn phi(&self, s: f64) -> f64 {
        if s < TEMPER_S_MIN {
            // phi(s) = 1 - s^2 E[u] / 4 + o(s^2) with E[u] = 1 / (mu - 1)
            return 1.0 - s * s / (4.0 * (self.mu - 1.0));
        }
        if s >= TEMPER_S_MAX {
            return ln_phi_direct(self.mu, s).exp();
        }
        let t = (s.ln() - self.x0) / self.dx;
        let i = (t.floor() as isize).clamp(1, TEMPER_N as isize - 3) as usize;
        let u = t - i as f64;
        // four-point Lagrange on nodes i-1..i+2
        let (y0, y1, y2, y3) = (
            self.ln_phi[i - 1],
            self.ln_phi[i],
            self.ln_phi[i + 1],
            self.ln_phi[i + 2],
        );
        let l0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let l1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let l2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let l3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        (l0 * y0 + l1 * y1 + l2 * y2 + l3 * y3).exp()
    }
}

// Trapezoid rule in v = ln u around the peak of the (concave) log-integrand.
fn ln_phi_direct(mu: f64, s: f64) -> f64 {
    let q = s * s / 4.0;
    let e = |v: f64| -mu * v - (-v).exp() - q * v.exp();
    let de = |v: f64| -mu + (-v).exp() - q * v.exp();
    let (mut lo, mut hi) = (-60.0, 800.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if de(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let vs = 0.5 * (lo + hi);
    let es = e(vs);
    let curv = (-vs).exp() + q * vs.exp();
    let h = (0.2 / curv.sqrt()).min(0.05);
    let mut sum = 1.0;
    for dir in [-1.0, 1.0] {
        let mut k = 1.0;
        loop {
            let term = (e(vs + dir * k * h) - es).exp();
            sum += term;
            if term < 1e-22 {
                break;
            }
            k += 1.0;
        }
    }
    es + (h * sum).ln() - ln_gamma(mu)
}

/// A parameterized isotropic unimodal Lévy process in `R^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ProcessSpecDoc", into = "ProcessSpecDoc")]
pub struct ProcessSpec {
    family: Family,
    d: usize,
    comps: Vec<Component>,
    temper: Option<Arc<TemperTable>>,
}

impl PartialEq for ProcessSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.d == other.d
    }
}

fn check_order(name: &str, a: f64) -> Result<()> {
    if a > 0.0 && a < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {a} must lie in (0, 2)")))
    }
}

impl ProcessSpec {
    pub fn new(family: Family, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension d = {d} must be at least 2")));
        }
        let (comps, temper) = match family {
            Family::IsotropicStable { alpha } => {
                check_order("alpha", alpha)?;
                (vec![Component::new(d, alpha, 1.0)], None)
            }
            Family::StableMixture { alpha, beta, weights } => {
                check_order("alpha", alpha)?;
                check_order("beta", beta)?;
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights[0] + weights[1] <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "mixture weights {weights:?} must be non-negative with positive sum"
                    )));
                }
                let comps = [(alpha, weights[0]), (beta, weights[1])]
                    .iter()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|&(a, w)| Component::new(d, a, w))
                    .collect();
                (comps, None)
            }
            Family::RelativisticStable { alpha, mass } => {
                check_order("alpha", alpha)?;
                if !(mass.is_finite() && mass > 0.0) {
                    return Err(Error::InvalidParameter(format!("mass m = {mass} must be positive")));
                }
                let mu = (d as f64 + alpha) / 2.0;
                (vec![Component::new(d, alpha, 1.0)], Some(Arc::new(TemperTable::new(mu))))
            }
        };
        Ok(Self { family, d, comps, temper })
    }

    pub fn stable(alpha: f64, d: usize) -> Result<Self> {
        Self::new(Family::IsotropicStable { alpha }, d)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Stability index of an isotropic stable spec.
    pub fn stable_alpha(&self) -> Option<f64> {
        match self.family {
            Family::IsotropicStable { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Stable components `(alpha, weight)`; a mixture is a sum of independent ones.
    pub fn stable_components(&self) -> Option<Vec<(f64, f64)>> {
        match self.family {
            Family::RelativisticStable { .. } => None,
            _ => Some(self.comps.iter().map(|c| (c.alpha, c.weight)).collect()),
        }
    }

    /// Constant `A` with `nu(r) = A r^{-d-alpha}` (first stable component).
    pub fn nu_constant(&self) -> f64 {
        self.comps[0].nu_c
    }

    /// Radial Lévy density `nu(r)`.
    pub fn nu(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        let d = self.d as f64;
        let base: f64 = self.comps.iter().map(|c| c.nu_c * r.powf(-d - c.alpha)).sum();
        match (self.family, &self.temper) {
            (Family::RelativisticStable { alpha, mass }, Some(t)) => base * t.phi(mass.powf(1.0 / alpha) * r),
            _ => base,
        }
    }

    /// `nu(r) r^k`, evaluated without forming `nu(r)` (which overflows near 0).
    pub fn nu_times_pow(&self, r: f64, k: f64) -> f64 {
        let d = self.d as f64;
        let base: f64 = self.comps.iter().map(|c| c.nu_c * r.powf(k - d - c.alpha)).sum();
        match (self.family, &self.temper) {
            (Family::RelativisticStable { alpha, mass }, Some(t)) => base * t.phi(mass.powf(1.0 / alpha) * r),
            _ => base,
        }
    }

    /// Characteristic exponent in closed form.
    pub fn psi(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        match self.family {
            Family::RelativisticStable { alpha, mass } => {
                let m2 = mass.powf(2.0 / alpha);
                // (xi^2 + m2)^{a/2} - m, written to avoid cancellation for small xi
                let big = (xi * xi + m2).powf(alpha / 2.0);
                let x = xi * xi / m2;
                if x < 1e-3 {
                    let ln1p = x.ln_1p() * alpha / 2.0;
                    mass * ln1p.exp_m1()
                } else {
                    big - mass
                }
            }
            _ => self.comps.iter().map(|c| c.weight * xi.powf(c.alpha)).sum(),
        }
    }

    /// `psi(xi) = |S^{d-1}| int_0^inf nu(r) r^{d-1} (1 - Lambda_d(xi r)) dr` by radial
    /// quadrature, where `Lambda_d` is the spherical average of the cosine.
    pub fn psi_quadrature(&self, xi: f64, cfg: QuadConfig) -> Result<QuadResult> {
        let xi = xi.abs();
        if xi == 0.0 {
            return Ok(QuadResult { value: 0.0, error: 0.0, evals: 0, converged: true });
        }
        let d = self.d;
        let df = d as f64;
        let area = sphere_area(d);
        let a = 1.0 / xi;
        let f = |r: f64| area * self.nu_times_pow(r, df - 1.0) * one_minus_spherical_average_cos(d, xi * r);
        let mut total = integrate_to_zero(f, a, cfg)?;
        let piece_cfg = QuadConfig { max_subdivisions: 200_000, ..cfg };
        let mut lo = a;
        for k in 0..20 {
            let hi = 2.0 * lo;
            let piece = integrate(f, lo, hi, piece_cfg);
            total.value += piece.value;
            total.error += piece.error;
            total.evals += piece.evals;
            total.converged &= piece.converged;
            lo = hi;
            if k >= 8 {
                let bound = self.oscillation_tail_bound(xi, lo);
                if bound < 0.1 * cfg.rel_tol.max(1e-14) * total.value.abs() {
                    break;
                }
            }
        }
        let tail = integrate_to_infinity(|r: f64| area * self.nu_times_pow(r, df - 1.0), lo, cfg)?;
        total.value += tail.value;
        total.error += tail.error + self.oscillation_tail_bound(xi, lo);
        total.evals += tail.evals;
        total.converged &= tail.converged;
        Ok(total)
    }

    // Bound on |S| int_L^inf nu r^{d-1} Lambda_d(xi r) dr by one half-oscillation
    // of the decreasing envelope.
    fn oscillation_tail_bound(&self, xi: f64, l: f64) -> f64 {
        let df = self.d as f64;
        let s = xi * l;
        let amp = gamma(df / 2.0) * 2f64.powf(df / 2.0 - 1.0) * s.powf(1.0 - df / 2.0) * (2.0 / (PI * s)).sqrt();
        sphere_area(self.d) * self.nu_times_pow(l, df - 1.0) * amp * 1.5 * PI / xi
    }

    /// Pruitt function `h(r) = int (1 ∧ |x|^2 / r^2) nu(|x|) dx`; closed form for
    /// stable families, radial quadrature otherwise.
    pub fn h(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        if self.temper.is_none() {
            return self.comps.iter().map(|c| c.h_c * r.powf(-c.alpha)).sum();
        }
        match self.h_quadrature(r, QuadConfig::with_tol(0.0, 1e-11)) {
            Ok(q) => q.value,
            Err(_) => f64::NAN,
        }
    }

    /// `h(r)` by radial quadrature split at `|x| = r`.
    pub fn h_quadrature(&self, r: f64, cfg: QuadConfig) -> Result<QuadResult> {
        if r <= 0.0 {
            return Err(Error::InvalidParameter(format!("h requires r > 0, got {r}")));
        }
        let df = self.d as f64;
        let area = sphere_area(self.d);
        // the inner part is divided by r^2 afterwards, so scale its absolute tolerance
        let inner_cfg = QuadConfig { abs_tol: cfg.abs_tol * r * r, ..cfg };
        let inner = integrate_to_zero(|s| self.nu_times_pow(s, df + 1.0), r, inner_cfg)?;
        let outer = integrate_to_infinity(|s| self.nu_times_pow(s, df - 1.0), r, cfg)?;
        Ok(QuadResult {
            value: area * (inner.value / (r * r) + outer.value),
            error: area * (inner.error / (r * r) + outer.error),
            evals: inner.evals + outer.evals,
            converged: inner.converged && outer.converged,
        })
    }

    /// `h'(r) = -2 r^{-3} |S| int_0^r nu(s) s^{d+1} ds`.
    pub fn h_prime(&self, r: f64) -> f64 {
        if self.temper.is_none() {
            return self.comps.iter().map(|c| -c.alpha * c.h_c * r.powf(-c.alpha - 1.0)).sum();
        }
        let df = self.d as f64;
        match integrate_to_zero(|s| self.nu_times_pow(s, df + 1.0), r, QuadConfig::with_tol(0.0, 1e-11)) {
            Ok(q) => -2.0 * sphere_area(self.d) * q.value / (r * r * r),
            Err(_) => f64::NAN,
        }
    }

    /// `V(r) = h(r)^{-1/2}`, `V(0) = 0`.
    pub fn v(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            1.0 / self.h(r).sqrt()
        }
    }

    /// `V'(r) = -h'(r) / (2 h(r)^{3/2})`.
    pub fn v_prime(&self, r: f64) -> f64 {
        let h = self.h(r);
        -self.h_prime(r) / (2.0 * h * h.sqrt())
    }

    pub fn renewal(&self, r: f64) -> Renewal {
        let h = self.h(r);
        Renewal { h, v: if r <= 0.0 { 0.0 } else { 1.0 / h.sqrt() } }
    }

    /// Inverse of `V` by bisection in `ln r` to relative tolerance 1e-10 or better.
    pub fn v_inverse(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("V_inverse requires t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (1e-12, 1e12);
        let mut expansions = 0;
        while self.v(lo) > t {
            lo *= 1e-6;
            expansions += 1;
            if expansions > 40 || lo == 0.0 {
                return Err(Error::Bracket(format!("V stays above {t} down to r = {lo:e}")));
            }
        }
        while self.v(hi) < t {
            hi *= 1e6;
            expansions += 1;
            if expansions > 40 || !hi.is_finite() {
                return Err(Error::Bracket(format!("V stays below {t} up to r = {hi:e}")));
            }
        }
        while hi / lo - 1.0 > 1e-13 {
            let mid = (lo * hi).sqrt();
            if self.v(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo * hi).sqrt())
    }

    /// `U(r) = V(r)^2 / r^d`; infinite at the pole `r = 0`.
    pub fn potential_u(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        1.0 / (self.h(r) * r.powi(self.d as i32))
    }

    /// Lower scaling order and constant `(alpha_1, c_1)` of `psi` above threshold 1.
    pub fn lower_scaling_at_infinity(&self) -> (f64, f64) {
        match self.family {
            Family::IsotropicStable { alpha } => (alpha, 1.0),
            Family::StableMixture { alpha, beta, weights } => {
                let (hi, w_hi) = if alpha >= beta { (alpha, weights[0]) } else { (beta, weights[1]) };
                if w_hi > 0.0 {
                    (hi, w_hi / (weights[0] + weights[1]))
                } else {
                    (alpha.min(beta), 1.0)
                }
            }
            Family::RelativisticStable { alpha, .. } => {
                let c = grid_lower_constant(|x| self.psi(x), alpha, 1.0);
                (alpha, c)
            }
        }
    }

    /// Global lower scaling order and constant `(alpha, c)` of `psi`.
    pub fn lower_scaling_global(&self) -> (f64, f64) {
        match self.family {
            Family::IsotropicStable { alpha } => (alpha, 1.0),
            Family::StableMixture { alpha, beta, .. } => (alpha.min(beta), 1.0),
            Family::RelativisticStable { alpha, .. } => (alpha, grid_lower_constant(|x| self.psi(x), alpha, 0.0)),
        }
    }
}

// Smallest observed f(l t) / (l^a f(t)) over default grids, capped at 1.
fn grid_lower_constant<F: Fn(f64) -> f64>(f: F, order: f64, threshold: f64) -> f64 {
    let thetas = logspace(threshold.max(1e-4), 1e4, 80);
    let lambdas = logspace(1.0, 1e4, 80);
    let mut c: f64 = 1.0;
    for &t in &thetas {
        let ft = f(t);
        for &l in &lambdas {
            c = c.min(f(l * t) / (l.powf(order) * ft));
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Renewal {
    pub h: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ProcessParams {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

/// JSON form `{family, d, params}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessSpecDoc {
    pub family: String,
    pub d: usize,
    pub params: ProcessParams,
}

impl TryFrom<ProcessSpecDoc> for ProcessSpec {
    type Error = Error;

    fn try_from(doc: ProcessSpecDoc) -> Result<Self> {
        make_process(&doc.family, &doc.params, doc.d)
    }
}

impl From<ProcessSpec> for ProcessSpecDoc {
    fn from(spec: ProcessSpec) -> Self {
        let params = match spec.family {
            Family::IsotropicStable { alpha } => ProcessParams { alpha, ..Default::default() },
            Family::StableMixture { alpha, beta, weights } => ProcessParams {
                alpha,
                beta: Some(beta),
                weights: Some(weights),
                mass: None,
            },
            Family::RelativisticStable { alpha, mass } => ProcessParams { alpha, mass: Some(mass), ..Default::default() },
        };
        ProcessSpecDoc { family: spec.family.name().to_string(), d: spec.d, params }
    }
}

/// Build a spec from a family name and parameters.
pub fn make_process(family: &str, params: &ProcessParams, d: usize) -> Result<ProcessSpec> {
    let missing = |what: &str| Error::InvalidParameter(format!("family {family} requires parameter {what}"));
    let fam = match family {
        "isotropic-stable" => Family::IsotropicStable { alpha: params.alpha },
        "stable-mixture" => Family::StableMixture {
            alpha: params.alpha,
            beta: params.beta.ok_or_else(|| missing("beta"))?,
            weights: params.weights.unwrap_or([1.0, 1.0]),
        },
        "relativistic-stable" => Family::RelativisticStable {
            alpha: params.alpha,
            mass: params.mass.ok_or_else(|| missing("mass"))?,
        },
        other => return Err(Error::InvalidParameter(format!("unknown process family {other:?}"))),
    };
    ProcessSpec::new(fam, d)
}

// ---------------------------------------------------------------------------
// Scaling certificates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `f(l t) >= c l^a f(t)` for `l >= 1`, `t > threshold`.
    Lower,
    /// `f(l t) <= C l^a f(t)` for `l >= 1`, `t > threshold`.
    Upper,
    /// `f(e r) <= C e^a f(r)` for `e < 1`, `r < 1`; rows store `e` as lambda and `r` as theta.
    ShortRangeUpper,
}

/// One tested pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub lambda: f64,
    pub theta: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Slack below this (relative) is attributed to rounding, not a violation.
pub const SLACK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingWitness {
    pub direction: Direction,
    pub order: f64,
    pub threshold: f64,
    pub constant: f64,
    pub lambda_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub worst_slack: f64,
    pub worst_at: (f64, f64),
    pub rows: Vec<ScalingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingViolation {
    pub direction: Direction,
    pub order: f64,
    pub constant: f64,
    /// The worst violating pair.
    pub worst: ScalingRow,
    pub violations: usize,
    pub rows: Vec<ScalingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ScalingOutcome {
    Witness(ScalingWitness),
    Violation(ScalingViolation),
}

impl ScalingOutcome {
    pub fn is_witness(&self) -> bool {
        matches!(self, ScalingOutcome::Witness(_))
    }

    pub fn rows(&self) -> &[ScalingRow] {
        match self {
            ScalingOutcome::Witness(w) => &w.rows,
            ScalingOutcome::Violation(v) => &v.rows,
        }
    }

    pub fn witness(self) -> Option<ScalingWitness> {
        match self {
            ScalingOutcome::Witness(w) => Some(w),
            ScalingOutcome::Violation(_) => None,
        }
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    logspace(1.0, 1e3, 40)
}

pub fn default_theta_grid(threshold: f64) -> Vec<f64> {
    logspace(threshold.max(1e-3), 1e3, 40)
}

/// Certify a weak scaling condition of `f` on a finite grid of pairs.
///
/// For [`Direction::ShortRangeUpper`] the lambda grid holds `eta < 1` and the
/// theta grid holds `r < 1`.
pub fn check_scaling<F: Fn(f64) -> f64>(
    f: F,
    direction: Direction,
    order: f64,
    threshold: f64,
    constant: f64,
    lambdas: &[f64],
    thetas: &[f64],
) -> Result<ScalingOutcome> {
    if lambdas.is_empty() || thetas.is_empty() {
        return Err(Error::Empty("scaling grid has no pairs".into()));
    }
    if lambdas.iter().chain(thetas).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("scaling grids must be finite".into()));
    }
    match direction {
        Direction::Lower => {
            if !(constant > 0.0 && constant <= 1.0) {
                return Err(Error::InvalidParameter(format!("lower constant {constant} not in (0, 1]")));
            }
            if lambdas.iter().any(|&l| l < 1.0) {
                return Err(Error::InvalidParameter("lambda must be >= 1".into()));
            }
        }
        Direction::Upper => {
            if constant < 1.0 || order >= 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "upper scaling needs constant >= 1 and order < 2, got {constant}, {order}"
                )));
            }
            if lambdas.iter().any(|&l| l < 1.0) {
                return Err(Error::InvalidParameter("lambda must be >= 1".into()));
            }
        }
        Direction::ShortRangeUpper => {
            if constant < 1.0 {
                return Err(Error::InvalidParameter(format!("short-range constant {constant} below 1")));
            }
            if lambdas.iter().any(|&e| !(e > 0.0 && e < 1.0)) || thetas.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
                return Err(Error::InvalidParameter("short-range grids need eta, r in (0, 1)".into()));
            }
        }
    }
    let mut rows = Vec::with_capacity(lambdas.len() * thetas.len());
    for &t in thetas {
        if direction != Direction::ShortRangeUpper && t <= threshold {
            continue;
        }
        let ft = f(t);
        for &l in lambdas {
            let lhs = f(l * t);
            let rhs = constant * l.powf(order) * ft;
            let slack = match direction {
                Direction::Lower => (lhs - rhs) / rhs.abs(),
                _ => (rhs - lhs) / rhs.abs(),
            };
            rows.push(ScalingRow { lambda: l, theta: t, lhs, rhs, slack });
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("no theta above the threshold {threshold}")));
    }
    let worst = *rows
        .iter()
        .min_by(|a, b| a.slack.total_cmp(&b.slack))
        .expect("rows non-empty");
    let violations = rows.iter().filter(|r| !(r.slack >= -SLACK_TOL)).count();
    if violations > 0 {
        return Ok(ScalingOutcome::Violation(ScalingViolation {
            direction,
            order,
            constant,
            worst,
            violations,
            rows,
        }));
    }
    Ok(ScalingOutcome::Witness(ScalingWitness {
        direction,
        order,
        threshold,
        constant,
        lambda_grid: lambdas.to_vec(),
        theta_grid: thetas.to_vec(),
        worst_slack: worst.slack,
        worst_at: (worst.lambda, worst.theta),
        rows,
    }))
}

/// CSV rows `lambda,theta,lhs,rhs,slack`.
pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sandwich bound 2^{-1} psi(1/r) <= h(r) <= C1 psi(1/r)

/// The constant `d pi^2 / 2`.
pub fn sandwich_c1(d: usize) -> f64 {
    d as f64 * PI * PI / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichRow {
    pub r: f64,
    pub h: f64,
    pub psi: f64,
    pub ratio: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub c1: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub rows: Vec<SandwichRow>,
    pub violations: Vec<SandwichRow>,
    /// Every row satisfies both inequalities with the literal constant.
    pub passed: bool,
    /// Only the literal upper constant fails while the lower bound holds and
    /// `max_ratio` is finite, i.e. some finite constant works.
    pub literal_only_violation: bool,
}

pub fn sandwich_check(spec: &ProcessSpec, r_grid: &[f64]) -> Result<SandwichReport> {
    sandwich_check_with(|r| spec.h(r), |x| spec.psi(x), spec.dim(), r_grid)
}

/// Sandwich test for arbitrary `h` and `psi` evaluators.
pub fn sandwich_check_with<H: Fn(f64) -> f64, P: Fn(f64) -> f64>(
    h: H,
    psi: P,
    d: usize,
    r_grid: &[f64],
) -> Result<SandwichReport> {
    if r_grid.is_empty() {
        return Err(Error::Empty("sandwich grid is empty".into()));
    }
    if r_grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter("sandwich grid must be positive".into()));
    }
    let c1 = sandwich_c1(d);
    let rows: Vec<SandwichRow> = r_grid
        .iter()
        .map(|&r| {
            let hv = h(r);
            let p = psi(1.0 / r);
            SandwichRow {
                r,
                h: hv,
                psi: p,
                ratio: hv / p,
                lower_ok: 0.5 * p <= hv,
                upper_ok: hv <= c1 * p,
            }
        })
        .collect();
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let violations: Vec<SandwichRow> = rows.iter().filter(|r| !(r.lower_ok && r.upper_ok)).copied().collect();
    let lower_all = rows.iter().all(|r| r.lower_ok);
    let passed = violations.is_empty();
    Ok(SandwichReport {
        c1,
        min_ratio,
        max_ratio,
        literal_only_violation: !passed && lower_all && max_ratio.is_finite(),
        rows,
        violations,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn stable_normalization_and_examples() {
        let s = ProcessSpec::stable(1.5, 2).unwrap();
        assert_eq!(s.psi(1.0), 1.0);
        assert!(rel(s.psi(2.0), 2f64.powf(1.5)) < 1e-15);
        assert_eq!(s.psi(0.0), 0.0);
        assert!(ProcessSpec::stable(2.1, 2).is_err());
        assert!(ProcessSpec::stable(1.0, 1).is_err());
        let m = ProcessSpec::new(Family::StableMixture { alpha: 1.5, beta: 0.5, weights: [1.0, 1.0] }, 3).unwrap();
        for &x in &[0.1, 1.0, 7.0] {
            assert!(rel(m.psi(x), x.powf(1.5) + x.powf(0.5)) < 1e-15);
        }
    }

    #[test]
    fn psi_quadrature_matches_closed_form_stable_alpha1() {
        let s = ProcessSpec::stable(1.0, 2).unwrap();
        let q = s.psi_quadrature(3.0, QuadConfig::default()).unwrap();
        assert!(q.converged);
        assert!(rel(q.value, 3.0) < 1e-6, "{q:?}");
    }

    #[test]
    fn cauchy_nu_constant_matches_known_value() {
        // the d = 2 Cauchy density constant is Gamma(3/2) / pi^{3/2} = 1 / (2 pi)
        assert!(rel(stable_nu_constant(2, 1.0), 1.0 / (2.0 * PI)) < 1e-13);
        // d = 3, alpha = 1: Gamma(2) / pi^2
        assert!(rel(stable_nu_constant(3, 1.0), 1.0 / (PI * PI)) < 1e-13);
    }

    #[test]
    fn h_quadrature_agrees_with_closed_form() {
        for &(a, d) in &[(0.5, 2), (1.0, 3), (1.5, 2), (1.9, 3)] {
            let s = ProcessSpec::stable(a, d).unwrap();
            for &r in &[0.01, 1.0, 30.0] {
                let q = s.h_quadrature(r, QuadConfig::default()).unwrap();
                assert!((q.value - s.h(r)).abs() <= 3.0 * q.error, "error estimate dishonest at a={a} r={r}");
                let q = s.h_quadrature(r, QuadConfig::with_tol(0.0, 1e-11)).unwrap();
                assert!(rel(q.value, s.h(r)) < 1e-9, "a={a} d={d} r={r}: {q:?} vs {}", s.h(r));
            }
        }
    }

    #[test]
    fn h_at_one_fixture() {
        // value from an independent quadrature of the defining integral
        let s = ProcessSpec::stable(1.5, 2).unwrap();
        let q = s.h_quadrature(1.0, QuadConfig::default()).unwrap().value;
        assert!(rel(s.h(1.0), q) < 1e-9);
        assert!(rel(q, 2.867932784916751) < 1e-8, "{q:.16}");
    }

    #[test]
    fn renewal_homogeneity() {
        let s = ProcessSpec::stable(1.0, 2).unwrap();
        assert!(rel(s.h(2.0) / s.h(1.0), 0.5) < 1e-14);
        assert_eq!(s.v(0.0), 0.0);
        let u = s.potential_u(2.0) / s.potential_u(1.0);
        assert!(rel(u, 0.5) < 1e-14);
        assert!(s.potential_u(0.0).is_infinite());
        let s = ProcessSpec::stable(1.5, 2).unwrap();
        assert!(rel(s.potential_u(1.0), s.v(1.0).powi(2)) < 1e-15);
    }

    #[test]
    fn v_inverse_roundtrip_and_homogeneity() {
        let s = ProcessSpec::stable(1.0, 2).unwrap();
        assert_eq!(s.v_inverse(0.0).unwrap(), 0.0);
        assert!((s.v_inverse(s.v(0.7)).unwrap() - 0.7).abs() < 1e-9);
        let s = ProcessSpec::stable(1.5, 2).unwrap();
        let c = s.v(1.0);
        assert!(rel(s.v_inverse(2.0 * c).unwrap(), 2f64.powf(4.0 / 3.0)) < 1e-10);
        assert!(s.v_inverse(-1.0).is_err());
        // tiny and huge targets require bracket expansion
        let r = s.v_inverse(s.v(1e-15)).unwrap();
        assert!(rel(r, 1e-15) < 1e-10);
        let r = s.v_inverse(s.v(1e15)).unwrap();
        assert!(rel(r, 1e15) < 1e-10);
    }

    #[test]
    fn relativistic_limits_and_quadrature() {
        let s = ProcessSpec::new(Family::RelativisticStable { alpha: 1.0, mass: 1.0 }, 2).unwrap();
        // d = 2, alpha = 1: phi(s) = (1 + s) e^{-s}
        for &x in &[1e-5, 0.01, 0.5, 3.0, 40.0, 300.0] {
            let exact = (1.0 + x) * (-x as f64).exp();
            let got = s.nu(x) / (stable_nu_constant(2, 1.0) * x.powf(-3.0));
            assert!(rel(got, exact) < 1e-7, "s={x}: {got} vs {exact}");
        }
        for &xi in &[0.01, 1.0, 20.0] {
            let q = s.psi_quadrature(xi, QuadConfig::default()).unwrap();
            assert!(rel(q.value, s.psi(xi)) < 1e-6, "xi={xi}: {} vs {}", q.value, s.psi(xi));
        }
        assert!(ProcessSpec::new(Family::RelativisticStable { alpha: 1.0, mass: 0.0 }, 2).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let m = ProcessSpec::new(Family::StableMixture { alpha: 1.5, beta: 0.5, weights: [1.0, 2.0] }, 3).unwrap();
        let js = serde_json::to_string(&m).unwrap();
        let back: ProcessSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"family":"isotropic-stable","d":2,"params":{"alpha":2.5}}"#;
        assert!(serde_json::from_str::<ProcessSpec>(bad).is_err());
        let bad = r#"{"family":"stable-mixture","d":2,"params":{"alpha":1.5}}"#;
        assert!(serde_json::from_str::<ProcessSpec>(bad).is_err());
    }

    #[test]
    fn check_scaling_examples() {
        let f = |t: f64| t.powf(1.5);
        let w = check_scaling(f, Direction::Lower, 1.5, 0.0, 1.0, &default_lambda_grid(), &default_theta_grid(0.0))
            .unwrap()
            .witness()
            .unwrap();
        assert!(w.worst_slack.abs() < 1e-12);
        let v = check_scaling(f, Direction::Lower, 1.6, 0.0, 1.0, &default_lambda_grid(), &default_theta_grid(0.0))
            .unwrap();
        match v {
            ScalingOutcome::Violation(v) => {
                assert!(v.worst.lambda > 1.0);
                // every pair with lambda > 1 violates
                let n_gt1 = v.rows.iter().filter(|r| r.lambda > 1.0).count();
                assert_eq!(v.violations, n_gt1);
            }
            _ => panic!("expected violation"),
        }
        assert!(matches!(
            check_scaling(f, Direction::Lower, 1.5, 0.0, 1.0, &[], &[1.0]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn v_certificate_for_stable() {
        let s = ProcessSpec::stable(1.5, 2).unwrap();
        let c1 = sandwich_c1(2);
        let c = (1.0 / (2.0 * c1)).sqrt();
        let out = check_scaling(|r| s.v(r), Direction::Lower, 0.75, 0.0, c, &default_lambda_grid(), &default_theta_grid(0.0))
            .unwrap();
        assert!(out.is_witness());
    }

    #[test]
    fn sandwich_examples() {
        let grid = logspace(1e-3, 1e3, 61);
        let s = ProcessSpec::stable(1.0, 2).unwrap();
        let rep = sandwich_check(&s, &grid).unwrap();
        assert!(rep.passed);
        // d = 2, alpha = 1 gives h / psi(1/r) = 2 exactly
        assert!(rel(rep.min_ratio, 2.0) < 1e-12 && rel(rep.max_ratio, 2.0) < 1e-12);
        let rep = sandwich_check_with(|r| 10.0 * sandwich_c1(2) * s.psi(1.0 / r), |x| s.psi(x), 2, &grid).unwrap();
        assert_eq!(rep.violations.len(), grid.len());
        assert!(rep.literal_only_violation);
    }

    #[test]
    fn csv_rows() {
        let out = check_scaling(|t| t, Direction::Upper, 1.0, 0.0, 1.0, &[1.0, 2.0], &[1.0]).unwrap();
        let mut buf = Vec::new();
        write_scaling_csv(out.rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda,theta,lhs,rhs,slack\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
