//! Green-function kernels and the functionals built from them: the sharp
//! two-sided comparand, the exact stable Green function of a ball, the 3G
//! quotient, Kato norms, the `kappa` functionals and Poisson kernels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cubature::{integrate_2d, integrate_2d_scalar, CubatureConfig, Disk, Region};
use crate::error::{Error, Result};
use crate::geometry::{dist, norm, Ball, Domain};
use crate::grid::GreenGrid;
use crate::quad::{integrate, integrate_to_infinity, integrate_to_zero, QuadConfig};
use crate::special::{gamma, half_line_beta, sphere_area};
use crate::spectral::ProcessSpec;

// ---------------------------------------------------------------------------
// Drift fields

/// Scalar profile multiplying a fixed unit direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Profile {
    Constant { value: f64 },
    /// `scale * |x - center|^exponent`.
    CenterPower { center: Vec<f64>, scale: f64, exponent: f64 },
    /// `scale * delta_D(x)^exponent` inside the domain, 0 outside.
    BoundaryPower { domain: Domain, scale: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftKind {
    Zero,
    Constant { vector: Vec<f64> },
    /// `profile(x) * direction`, direction normalized on construction.
    Profile { direction: Vec<f64>, profile: Profile },
    /// Bilinear interpolation of planar vectors on a regular grid; zero outside it.
    Tabulated { origin: [f64; 2], spacing: f64, nx: usize, ny: usize, values: Vec<[f64; 2]> },
}

/// A drift vector field `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DriftKind", into = "DriftKind")]
pub struct DriftField {
    kind: DriftKind,
    bound: Option<f64>,
}

impl TryFrom<DriftKind> for DriftField {
    type Error = Error;
    fn try_from(k: DriftKind) -> Result<Self> {
        DriftField::new(k)
    }
}

impl From<DriftField> for DriftKind {
    fn from(b: DriftField) -> Self {
        b.kind
    }
}

impl DriftField {
    pub fn new(kind: DriftKind) -> Result<Self> {
        let kind = match kind {
            DriftKind::Profile { direction, profile } => {
                let n = norm(&direction);
                if !(n > 0.0 && n.is_finite()) {
                    return Err(Error::InvalidParameter("drift direction must be a non-zero vector".into()));
                }
                DriftKind::Profile { direction: direction.iter().map(|v| v / n).collect(), profile }
            }
            DriftKind::Tabulated { origin, spacing, nx, ny, values } => {
                if values.len() != nx * ny || nx < 2 || ny < 2 || !(spacing > 0.0) {
                    return Err(Error::InvalidParameter("tabulated drift needs nx*ny values, nx, ny >= 2".into()));
                }
                DriftKind::Tabulated { origin, spacing, nx, ny, values }
            }
            DriftKind::Constant { vector } => {
                if vector.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("drift vector must be finite".into()));
                }
                DriftKind::Constant { vector }
            }
            k => k,
        };
        let bound = match &kind {
            DriftKind::Zero => Some(0.0),
            DriftKind::Constant { vector } => Some(norm(vector)),
            DriftKind::Profile { profile, .. } => match profile {
                Profile::Constant { value } => Some(value.abs()),
                Profile::CenterPower { exponent, .. } | Profile::BoundaryPower { exponent, .. } if *exponent < 0.0 => None,
                Profile::CenterPower { .. } => None,
                Profile::BoundaryPower { domain, scale, exponent } => {
                    // delta <= max radius
                    let rmax = domain.balls().iter().map(|b| b.radius).fold(0.0, f64::max);
                    Some(scale.abs() * rmax.powf(*exponent))
                }
            },
            DriftKind::Tabulated { values, .. } => Some(values.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)),
        };
        Ok(Self { kind, bound })
    }

    pub fn zero() -> Self {
        Self { kind: DriftKind::Zero, bound: Some(0.0) }
    }

    pub fn constant(vector: Vec<f64>) -> Result<Self> {
        Self::new(DriftKind::Constant { vector })
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    /// `sup |b|`, when known to be finite.
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            DriftKind::Zero => true,
            DriftKind::Constant { vector } => vector.iter().all(|v| *v == 0.0),
            DriftKind::Tabulated { values, .. } => values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0),
            DriftKind::Profile { profile: Profile::Constant { value }, .. } => *value == 0.0,
            _ => false,
        }
    }

    /// `|b|` when it is constant in space.
    pub fn constant_magnitude(&self) -> Option<f64> {
        match &self.kind {
            DriftKind::Zero => Some(0.0),
            DriftKind::Constant { vector } => Some(norm(vector)),
            DriftKind::Profile { profile: Profile::Constant { value }, .. } => Some(value.abs()),
            _ => None,
        }
    }

    /// `k * b`.
    pub fn scaled(&self, k: f64) -> Self {
        let kind = match &self.kind {
            DriftKind::Zero => DriftKind::Zero,
            DriftKind::Constant { vector } => DriftKind::Constant { vector: vector.iter().map(|v| k * v).collect() },
            DriftKind::Profile { direction, profile } => {
                let profile = match profile.clone() {
                    Profile::Constant { value } => Profile::Constant { value: k * value },
                    Profile::CenterPower { center, scale, exponent } => Profile::CenterPower { center, scale: k * scale, exponent },
                    Profile::BoundaryPower { domain, scale, exponent } => {
                        Profile::BoundaryPower { domain, scale: k * scale, exponent }
                    }
                };
                DriftKind::Profile { direction: direction.clone(), profile }
            }
            DriftKind::Tabulated { origin, spacing, nx, ny, values } => DriftKind::Tabulated {
                origin: *origin,
                spacing: *spacing,
                nx: *nx,
                ny: *ny,
                values: values.iter().map(|v| [k * v[0], k * v[1]]).collect(),
            },
        };
        Self { kind, bound: self.bound.map(|b| b * k.abs()) }
    }

    /// Write `b(x)` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DriftKind::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            DriftKind::Constant { vector } => out.copy_from_slice(&vector[..out.len()]),
            DriftKind::Profile { direction, profile } => {
                let m = match profile {
                    Profile::Constant { value } => *value,
                    Profile::CenterPower { center, scale, exponent } => scale * dist(x, center).powf(*exponent),
                    Profile::BoundaryPower { domain, scale, exponent } => {
                        let dl = domain.delta(x);
                        if dl > 0.0 {
                            scale * dl.powf(*exponent)
                        } else {
                            0.0
                        }
                    }
                };
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = m * e;
                }
            }
            DriftKind::Tabulated { origin, spacing, nx, ny, values } => {
                let u = (x[0] - origin[0]) / spacing;
                let v = (x[1] - origin[1]) / spacing;
                out.iter_mut().for_each(|o| *o = 0.0);
                if u < 0.0 || v < 0.0 || u > (*nx - 1) as f64 || v > (*ny - 1) as f64 {
                    return;
                }
                let i = (u.floor() as usize).min(nx - 2);
                let j = (v.floor() as usize).min(ny - 2);
                let (fu, fv) = (u - i as f64, v - j as f64);
                let at = |a: usize, b: usize| values[b * nx + a];
                for k in 0..2 {
                    out[k] = (1.0 - fu) * (1.0 - fv) * at(i, j)[k]
                        + fu * (1.0 - fv) * at(i + 1, j)[k]
                        + (1.0 - fu) * fv * at(i, j + 1)[k]
                        + fu * fv * at(i + 1, j + 1)[k];
                }
            }
        }
    }

    pub fn magnitude(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0; 8];
        let d = x.len();
        self.eval(x, &mut buf[..d]);
        norm(&buf[..d])
    }
}

// ---------------------------------------------------------------------------
// Green kernels

/// A Green function `G_D(x, y)` with its gradient in the first argument.
pub trait GreenKernel: Send + Sync {
    fn domain(&self) -> &Domain;
    /// `G_D(x, y)`; 0 when either point lies outside `D`, infinite at `x = y`.
    fn green(&self, x: &[f64], y: &[f64]) -> f64;
    /// `grad_x G_D(x, y)` for `x != y` inside `D`.
    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn label(&self) -> &'static str;
}

/// Green function of the isotropic alpha-stable process (`psi = |xi|^alpha`) killed on leaving a ball.
#[derive(Debug, Clone)]
pub struct ExactBallGreen {
    alpha: f64,
    d: usize,
    center: Vec<f64>,
    r: f64,
    bconst: f64,
    domain: Domain,
}

impl ExactBallGreen {
    pub fn new(alpha: f64, d: usize, ball: &Ball) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) || d < 2 || ball.center.len() != d {
            return Err(Error::InvalidParameter(format!("exact ball kernel for alpha {alpha}, d {d}")));
        }
        let df = d as f64;
        Ok(Self {
            alpha,
            d,
            center: ball.center.clone(),
            r: ball.radius,
            bconst: gamma(df / 2.0) / (2f64.powf(alpha) * PI.powf(df / 2.0) * gamma(alpha / 2.0).powi(2)),
            domain: Domain::ball(ball.center.clone(), ball.radius)?,
        })
    }

    /// Kernel for a stable spec on a single-ball domain.
    pub fn for_spec(spec: &ProcessSpec, domain: &Domain) -> Result<Self> {
        let alpha = spec
            .stable_alpha()
            .ok_or_else(|| Error::Unsupported("exact ball kernel needs an isotropic stable spec".into()))?;
        let ball = domain
            .as_ball()
            .ok_or_else(|| Error::Unsupported("exact ball kernel needs a single-ball domain".into()))?;
        Self::new(alpha, spec.dim(), ball)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    // (R^2 - |x-c|^2, R^2 - |y-c|^2, |x-y|^2)
    fn parts(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let mut nx = 0.0;
        let mut ny = 0.0;
        let mut s2 = 0.0;
        for k in 0..self.d {
            let a = x[k] - self.center[k];
            let b = y[k] - self.center[k];
            nx += a * a;
            ny += b * b;
            s2 += (x[k] - y[k]) * (x[k] - y[k]);
        }
        let r2 = self.r * self.r;
        (r2 - nx, r2 - ny, s2)
    }
}

impl GreenKernel for ExactBallGreen {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        let (ax, ay, s2) = self.parts(x, y);
        if ax <= 0.0 || ay <= 0.0 {
            return 0.0;
        }
        if s2 == 0.0 {
            return f64::INFINITY;
        }
        let w = ax * ay / (self.r * self.r * s2);
        let df = self.d as f64;
        self.bconst * s2.powf(0.5 * (self.alpha - df)) * half_line_beta(w, self.alpha / 2.0, (df - self.alpha) / 2.0)
    }

    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (ax, ay, s2) = self.parts(x, y);
        if ax <= 0.0 || ay <= 0.0 || s2 == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let df = self.d as f64;
        let (a, r2) = (self.alpha, self.r * self.r);
        let w = ax * ay / (r2 * s2);
        let i = half_line_beta(w, a / 2.0, (df - a) / 2.0);
        let di = w.powf(a / 2.0 - 1.0) * (1.0 + w).powf(-df / 2.0);
        let sp = s2.powf(0.5 * (a - df));
        let c1 = (a - df) * sp / s2 * i;
        let k = ay / r2;
        for m in 0..self.d {
            let xm = x[m] - self.center[m];
            let dm = x[m] - y[m];
            let dw = k * (-2.0 * xm / s2 - ax * 2.0 * dm / (s2 * s2));
            out[m] = self.bconst * (c1 * dm + sp * di * dw);
        }
    }

    fn label(&self) -> &'static str {
        "exact-ball"
    }
}

/// `green_ball_exact` for the centred ball `B(0, R)`.
pub fn green_ball_exact(alpha: f64, d: usize, radius: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != d || y.len() != d {
        return Err(Error::InvalidParameter("point dimension mismatch".into()));
    }
    if norm(x) > radius || norm(y) > radius {
        return Err(Error::OutsideDomain(format!("points must lie in the closed ball of radius {radius}")));
    }
    if x == y {
        return Err(Error::Pole("x = y".into()));
    }
    let k = ExactBallGreen::new(alpha, d, &Ball::new(vec![0.0; d], radius))?;
    Ok(k.green(x, y))
}

/// The sharp comparand `U(x - y) V(delta(x)) V(delta(y)) / V(r(x, y))^2`.
#[derive(Debug, Clone)]
pub struct SharpGreen {
    spec: ProcessSpec,
    domain: Domain,
}

impl SharpGreen {
    pub fn new(spec: &ProcessSpec, domain: &Domain) -> Result<Self> {
        if spec.dim() != domain.dim() {
            return Err(Error::InvalidParameter("spec and domain dimensions differ".into()));
        }
        Ok(Self { spec: spec.clone(), domain: domain.clone() })
    }
}

impl GreenKernel for SharpGreen {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn green(&self, x: &[f64], y: &[f64]) -> f64 {
        let (dx, dy) = (self.domain.delta(x), self.domain.delta(y));
        if dx <= 0.0 || dy <= 0.0 {
            return 0.0;
        }
        let s = dist(x, y);
        if s == 0.0 {
            return f64::INFINITY;
        }
        let r = dx.max(dy).max(s);
        let sp = &self.spec;
        sp.h(r) / (sp.h(s) * s.powi(self.domain.dim() as i32) * (sp.h(dx) * sp.h(dy)).sqrt())
    }

    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.domain.dim();
        let (dx, dy) = (self.domain.delta(x), self.domain.delta(y));
        let s = dist(x, y);
        if dx <= 0.0 || dy <= 0.0 || s == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let g = self.green(x, y);
        let sp = &self.spec;
        let lg = |t: f64| sp.h_prime(t) / sp.h(t);
        // unit gradient of delta at x (outward normal reversed)
        let ball = &self.domain.balls()[self.domain.containing_ball(x).expect("x inside")];
        let rc = dist(x, &ball.center);
        let r = dx.max(dy).max(s);
        let cs = -(lg(s) + d as f64 / s) / s;
        let cdelta = -0.5 * lg(dx);
        let (cr_s, cr_delta) = if r == s {
            (lg(r) / s, 0.0)
        } else if r == dx {
            (0.0, lg(r))
        } else {
            (0.0, 0.0)
        };
        for m in 0..d {
            let grad_s = x[m] - y[m]; // times 1/s folded into the coefficients
            let grad_delta = if rc > 0.0 { -(x[m] - ball.center[m]) / rc } else { 0.0 };
            out[m] = g * ((cs + cr_s) * grad_s + (cdelta + cr_delta) * grad_delta);
        }
    }

    fn label(&self) -> &'static str {
        "sharp"
    }
}

/// `green_sharp` with the pole reported as an error.
pub fn green_sharp(spec: &ProcessSpec, domain: &Domain, x: &[f64], y: &[f64]) -> Result<f64> {
    if x == y {
        return Err(Error::Pole("x = y".into()));
    }
    Ok(SharpGreen::new(spec, domain)?.green(x, y))
}

/// `E^x tau_{B(c, R)}` for the isotropic alpha-stable process.
pub fn stable_exit_moment(alpha: f64, d: usize, ball: &Ball, x: &[f64]) -> f64 {
    let df = d as f64;
    let c = gamma(df / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0));
    let a = ball.radius * ball.radius - dist(x, &ball.center).powi(2);
    if a <= 0.0 {
        0.0
    } else {
        c * a.powf(alpha / 2.0)
    }
}

/// Exit density of the alpha-stable process from a ball, `z` outside the closed ball.
pub fn poisson_kernel_ball_stable(alpha: f64, d: usize, ball: &Ball, x: &[f64], z: &[f64]) -> f64 {
    let df = d as f64;
    let r2 = ball.radius * ball.radius;
    let ax = r2 - dist(x, &ball.center).powi(2);
    let az = dist(z, &ball.center).powi(2) - r2;
    if ax <= 0.0 || az <= 0.0 {
        return 0.0;
    }
    let c = gamma(df / 2.0) * PI.powf(-df / 2.0 - 1.0) * (PI * alpha / 2.0).sin();
    c * (ax / az).powf(alpha / 2.0) * dist(x, z).powf(-df)
}

/// Probability that the alpha-stable process started at `x` leaves the disk
/// `ball` into the polar sector `rho in [rho0, rho1)`, `theta in [theta0, theta1)`
/// about the disk centre (`rho1` may be infinite).
pub fn ball_exit_sector_probability(
    alpha: f64,
    ball: &Ball,
    x: &[f64],
    rho: (f64, f64),
    theta: (f64, f64),
) -> Result<f64> {
    if ball.center.len() != 2 {
        return Err(Error::Unsupported("sector probabilities are planar".into()));
    }
    let (rho0, rho1) = rho;
    let r = ball.radius;
    if rho0 < r {
        return Err(Error::InvalidParameter("sector must lie outside the disk".into()));
    }
    let c = &ball.center;
    let cfg = QuadConfig::with_tol(1e-13, 1e-10);
    // grading that removes the (rho - R)^{-alpha/2} edge singularity
    let m = (1.0 / (1.0 - alpha / 2.0)).ceil();
    let df = 2.0;
    let kc = gamma(df / 2.0) * PI.powf(-df / 2.0 - 1.0) * (PI * alpha / 2.0).sin();
    let ax = r * r - dist(x, c).powi(2);
    if ax <= 0.0 {
        return Err(Error::OutsideDomain("x must lie in the disk".into()));
    }
    let inner = |th: f64| -> f64 {
        let (ct, st) = (th.cos(), th.sin());
        // density at radius R + e; e kept separate so that |z|^2 - R^2 keeps full precision
        let dens = |e: f64| {
            if e <= 0.0 {
                return 0.0;
            }
            let p = r + e;
            let z = [c[0] + p * ct, c[1] + p * st];
            kc * (ax / (e * (2.0 * r + e))).powf(alpha / 2.0) * dist(x, &z).powf(-df) * p
        };
        let e0 = rho0 - r;
        let e1 = if rho1.is_finite() { rho1 - r } else { (2.0 * rho0).max(rho0 + r) - r };
        let mut total = if e0 <= r * 1e-15 {
            integrate(|t| dens(e1 * t.powf(m)) * e1 * m * t.powf(m - 1.0), 0.0, 1.0, cfg).value
        } else {
            integrate(dens, e0, e1, cfg).value
        };
        if !rho1.is_finite() {
            total += integrate_to_infinity(dens, e1, cfg).map(|q| q.value).unwrap_or(f64::NAN);
        }
        total
    };
    let q = integrate(inner, theta.0, theta.1, QuadConfig::with_tol(1e-12, 1e-9));
    q.require("exit sector probability")
}

// ---------------------------------------------------------------------------
// Heat kernel comparand and 3G quotient

/// `min([V^{-1}(sqrt t)]^{-d}, t / (V(r)^2 r^d))`; the first branch at `r = 0`.
pub fn heat_kernel_bound(spec: &ProcessSpec, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let first = spec.v_inverse(t.sqrt())?.powi(-(spec.dim() as i32));
    if r <= 0.0 {
        return Ok(first);
    }
    Ok(first.min(t * spec.potential_u(r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeG {
    /// `G(x,z) G(z,y) / G(x,y)`.
    pub quotient: f64,
    /// The quotient over the boundary-weighted single-kernel envelope.
    pub ratio: f64,
}

pub fn three_g_check(spec: &ProcessSpec, kernel: &dyn GreenKernel, x: &[f64], y: &[f64], z: &[f64]) -> Result<ThreeG> {
    let dom = kernel.domain();
    if x == y || x == z || y == z {
        return Err(Error::Degenerate("3G triple needs distinct points".into()));
    }
    if !(dom.contains(x) && dom.contains(y) && dom.contains(z)) {
        return Err(Error::OutsideDomain("3G triple must lie in D".into()));
    }
    let (gxz, gzy, gxy) = (kernel.green(x, z), kernel.green(z, y), kernel.green(x, y));
    let q = gxz * gzy / gxy;
    let env = spec.v(dom.delta(z)) * (gxz / spec.v(dom.delta(x))).max(gzy / spec.v(dom.delta(y)));
    Ok(ThreeG { quotient: q, ratio: q / env })
}

// ---------------------------------------------------------------------------
// Kato norms

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KatoValue {
    pub value: f64,
    pub error: f64,
    /// Grid point attaining the supremum.
    pub argmax: usize,
}

fn kato_obstruction(spec: &ProcessSpec) -> Result<()> {
    let (a1, _) = spec.lower_scaling_at_infinity();
    if a1 <= 1.0 {
        return Err(Error::NonIntegrable {
            at: 0.0,
            detail: format!(
                "U(s)/s has order s^({a1}-d-1) at 0; the Kato integral needs lower scaling order above 1"
            ),
        });
    }
    Ok(())
}

/// `K_r = sup_x int_{B(x,r)} |b(y)| U(x - y) / |x - y| dy` over the given points.
pub fn kato_norm(spec: &ProcessSpec, b: &DriftField, r: f64, xs: &[Vec<f64>]) -> Result<KatoValue> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
    }
    if b.is_zero() {
        return Ok(KatoValue { value: 0.0, error: 0.0, argmax: 0 });
    }
    if xs.is_empty() {
        return Err(Error::Empty("Kato norm needs points".into()));
    }
    kato_obstruction(spec)?;
    let d = spec.dim();
    let df = d as f64;
    let cfg = QuadConfig::with_tol(0.0, 1e-10);
    let radial = |s: f64| spec.potential_u(s) * s.powf(df - 2.0);
    let mut best = KatoValue { value: -1.0, error: 0.0, argmax: 0 };
    if let Some(m) = b.constant_magnitude() {
        let q = integrate_to_zero(radial, r, cfg)?;
        if !q.converged {
            return Err(Error::Quadrature { what: "Kato radial integral", value: q.value, error: q.error });
        }
        return Ok(KatoValue { value: m * sphere_area(d) * q.value, error: m * sphere_area(d) * q.error, argmax: 0 });
    }
    for (i, x) in xs.iter().enumerate() {
        let mut ang_err = 0.0;
        let q = match d {
            2 => integrate_to_zero(
                |s: f64| {
                    let a = integrate(
                        |t: f64| b.magnitude(&[x[0] + s * t.cos(), x[1] + s * t.sin()]),
                        0.0,
                        2.0 * PI,
                        QuadConfig::with_tol(1e-12, 1e-10),
                    );
                    ang_err += a.error * radial(s);
                    a.value * radial(s)
                },
                r,
                cfg,
            )?,
            3 => {
                let (gx, gw) = crate::quad::gauss_legendre(32);
                integrate_to_zero(
                    |s: f64| {
                        let mut acc = 0.0;
                        for (u, wu) in gx.iter().zip(&gw) {
                            let st = (1.0 - u * u).sqrt();
                            for k in 0..64 {
                                let ph = 2.0 * PI * k as f64 / 64.0;
                                let p = [x[0] + s * st * ph.cos(), x[1] + s * st * ph.sin(), x[2] + s * u];
                                acc += wu * (2.0 * PI / 64.0) * b.magnitude(&p);
                            }
                        }
                        acc * radial(s)
                    },
                    r,
                    cfg,
                )?
            }
            _ => return Err(Error::Unsupported(format!("Kato norm in d = {d}"))),
        };
        if !q.converged {
            return Err(Error::Quadrature { what: "Kato radial integral", value: q.value, error: q.error });
        }
        if q.value > best.value {
            best = KatoValue { value: q.value, error: q.error + ang_err, argmax: i };
        }
    }
    Ok(best)
}

/// `K_r` for constant `|b|` and a stable spec in closed form: `|b| |S| r^{alpha-1} / ((alpha-1) h(1))`.
pub fn kato_norm_stable_constant(alpha: f64, d: usize, magnitude: f64, r: f64) -> f64 {
    let spec = ProcessSpec::stable(alpha, d).expect("valid alpha");
    magnitude * sphere_area(d) * r.powf(alpha - 1.0) / ((alpha - 1.0) * spec.h(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KatoRow {
    pub r: f64,
    pub k: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KatoScan {
    pub rows: Vec<KatoRow>,
    /// `K_r` non-increasing along the decreasing grid.
    pub monotone: bool,
    /// The last value fell below the tolerance.
    pub certified: bool,
}

pub fn kato_modulus_scan(spec: &ProcessSpec, b: &DriftField, radii: &[f64], xs: &[Vec<f64>], tol: f64) -> Result<KatoScan> {
    if radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter("radii must be positive and strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let k = kato_norm(spec, b, r, xs)?;
        rows.push(KatoRow { r, k: k.value, error: k.error });
    }
    let monotone = rows.windows(2).all(|w| w[1].k <= w[0].k + w[0].error + w[1].error);
    let certified = rows.last().is_some_and(|r| r.k < tol);
    Ok(KatoScan { rows, monotone, certified })
}

// ---------------------------------------------------------------------------
// kappa functionals

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaPair {
    pub kappa: f64,
    pub kappa_hat: f64,
    pub error: f64,
    pub converged: bool,
}

/// Regions covering a planar ball-union domain.
pub fn domain_regions(domain: &Domain) -> Result<Vec<Region>> {
    if domain.dim() != 2 {
        return Err(Error::Unsupported(format!("planar cubature only; d = {}", domain.dim())));
    }
    Ok(domain
        .balls()
        .iter()
        .map(|b| {
            let disk = Disk { cx: b.center[0], cy: b.center[1], r: b.radius };
            Region::clipped(disk.cx - disk.r, disk.cx + disk.r, disk.cy - disk.r, disk.cy + disk.r, disk)
        })
        .collect())
}

/// `kappa(x, y)` and `kappa_hat(x, y)` by adaptive singular cubature over `D`.
pub fn kappa_pair(kernel: &dyn GreenKernel, b: &DriftField, x: &[f64], y: &[f64], cfg: CubatureConfig) -> Result<KappaPair> {
    let dom = kernel.domain();
    if x == y {
        return Err(Error::Degenerate("kappa needs x != y".into()));
    }
    if !(dom.contains(x) && dom.contains(y)) {
        return Err(Error::OutsideDomain("kappa needs x, y in D".into()));
    }
    if b.is_zero() {
        return Ok(KappaPair { kappa: 0.0, kappa_hat: 0.0, error: 0.0, converged: true });
    }
    let gxy = kernel.green(x, y);
    let dxy = dom.delta(x).min(dist(x, y));
    let dx = dom.delta(x);
    let (xa, ya) = ([x[0], x[1]], [y[0], y[1]]);
    let mut out = KappaPair { kappa: 0.0, kappa_hat: 0.0, error: 0.0, converged: true };
    for reg in domain_regions(dom)? {
        let c = integrate_2d(
            |z: [f64; 2]| {
                let dz = dom.delta(&z);
                if dz <= 0.0 || z == xa || z == ya {
                    return [0.0, 0.0];
                }
                let k = b.magnitude(&z) * kernel.green(x, &z) * kernel.green(&z, y)
                    / (gxy * dz.min(dist(&z, y)));
                [k, k * dxy / dx.min(dist(x, &z))]
            },
            reg,
            &[xa, ya],
            cfg,
        );
        out.kappa += c.value[0];
        out.kappa_hat += c.value[1];
        out.error += c.error;
        out.converged &= c.converged;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Poisson kernels

/// `P_D(x, z) = int_D G(x, y) nu(|z - y|) dy` by quadrature over the cells of a
/// tabulated Green function; `x` must be one of the grid sources.
pub fn poisson_kernel(spec: &ProcessSpec, green: &GreenGrid, x: &[f64], z: &[f64]) -> Result<f64> {
    let s = green
        .sources
        .iter()
        .position(|p| p[0] == x[0] && p[1] == x[1])
        .ok_or_else(|| Error::InvalidParameter("x is not a source of the Green grid".into()))?;
    if green.domain.dist_to_domain(z) <= 0.0 {
        return Err(Error::InvalidParameter("z must lie outside the closure of D".into()));
    }
    let mut total = 0.0;
    for (c, cell) in green.cells.cells().iter().enumerate() {
        let avg_nu: f64 = cell
            .region
            .tensor_rule(6)
            .iter()
            .map(|(p, w)| w * spec.nu(dist(p, z)))
            .sum();
        total += green.values[s][c] * avg_nu;
    }
    Ok(total)
}

/// `P_D(x, z)` by adaptive singular cubature of the Ikeda–Watanabe integral.
pub fn poisson_kernel_quadrature(
    spec: &ProcessSpec,
    kernel: &dyn GreenKernel,
    x: &[f64],
    z: &[f64],
    cfg: CubatureConfig,
) -> Result<(f64, f64)> {
    let dom = kernel.domain();
    if dom.dist_to_domain(z) <= 0.0 {
        return Err(Error::InvalidParameter("z must lie outside the closure of D".into()));
    }
    if !dom.contains(x) {
        return Err(Error::OutsideDomain("x must lie in D".into()));
    }
    let mut v = 0.0;
    let mut e = 0.0;
    for reg in domain_regions(dom)? {
        let c = integrate_2d_scalar(
            |y| if y[0] == x[0] && y[1] == x[1] { 0.0 } else { kernel.green(x, &y) * spec.nu(dist(&y, z)) },
            reg,
            &[[x[0], x[1]]],
            cfg,
        );
        v += c.value[0];
        e += c.error;
    }
    Ok((v, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellGrid;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn disk() -> Domain {
        Domain::centered_ball(2, 1.0).unwrap()
    }

    #[test]
    fn exact_kernel_boundary_symmetry_and_incomplete_beta_oracle() {
        let a = 1.0;
        assert_eq!(green_ball_exact(a, 2, 1.0, &[1.0, 0.0], &[0.2, 0.1]).unwrap(), 0.0);
        let (x, y) = ([0.3, -0.2], [-0.1, 0.5]);
        let g1 = green_ball_exact(a, 2, 1.0, &x, &y).unwrap();
        let g2 = green_ball_exact(a, 2, 1.0, &y, &x).unwrap();
        assert_eq!(g1, g2);
        assert!(green_ball_exact(a, 2, 1.0, &[1.5, 0.0], &y).is_err());
        assert!(matches!(green_ball_exact(a, 2, 1.0, &x, &x), Err(Error::Pole(_))));
        // the incomplete-beta integral against adaptive quadrature
        for &(alpha, d) in &[(1.0, 2usize), (1.5, 2), (0.5, 3)] {
            let df = d as f64;
            let k = ExactBallGreen::new(alpha, d, &Ball::new(vec![0.0; d], 1.0)).unwrap();
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            x[0] = 0.3;
            y[0] = -0.4;
            y[1] = 0.2;
            let s = dist(&x, &y);
            let w = (1.0 - norm(&x).powi(2)) * (1.0 - norm(&y).powi(2)) / (s * s);
            let f = |t: f64| t.powf(alpha / 2.0 - 1.0) * (1.0 + t).powf(-df / 2.0);
            let iq = integrate_to_zero(f, w, QuadConfig::with_tol(0.0, 1e-12)).unwrap().value;
            let b = gamma(df / 2.0) / (2f64.powf(alpha) * PI.powf(df / 2.0) * gamma(alpha / 2.0).powi(2));
            assert!(rel(k.green(&x, &y), b * s.powf(alpha - df) * iq) < 1e-10);
        }
    }

    #[test]
    fn exact_kernel_gradient_matches_differences() {
        let k = ExactBallGreen::new(1.5, 2, &Ball::new(vec![0.0, 0.0], 1.0)).unwrap();
        let (x, y) = ([0.31, -0.22], [-0.1, 0.45]);
        let mut g = [0.0; 2];
        k.grad_x(&x, &y, &mut g);
        let h = 1e-6;
        for m in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            let fd = (k.green(&xp, &y) - k.green(&xm, &y)) / (2.0 * h);
            assert!(rel(g[m], fd) < 1e-6, "component {m}: {} vs {fd}", g[m]);
        }
    }

    #[test]
    fn sharp_kernel_examples_and_gradient() {
        let spec = ProcessSpec::stable(1.0, 2).unwrap();
        let d = disk();
        assert_eq!(green_sharp(&spec, &d, &[0.0, 0.0], &[1.5, 0.0]).unwrap(), 0.0);
        let (x, y) = ([0.2, 0.1], [-0.5, 0.3]);
        assert_eq!(green_sharp(&spec, &d, &x, &y).unwrap(), green_sharp(&spec, &d, &y, &x).unwrap());
        let g = green_sharp(&spec, &d, &[0.0, 0.0], &[0.5, 0.0]).unwrap();
        let expect = spec.potential_u(0.5) * spec.v(1.0) * spec.v(0.5) / spec.v(1.0).powi(2);
        assert!(rel(g, expect) < 1e-14);
        // recorded fixture: U(0.5) V(0.5) / V(1) with h(r) = 4 / r for d = 2, alpha = 1
        assert!(rel(g, 0.5f64.sqrt()) < 1e-13, "{g}");
        let k = SharpGreen::new(&ProcessSpec::stable(1.5, 2).unwrap(), &d).unwrap();
        // one point per branch of r = max(delta_x, delta_y, |x - y|)
        for (x, y) in [([0.1, 0.05], [0.3, -0.1]), ([0.8, 0.1], [0.2, 0.0]), ([0.6, 0.3], [-0.6, 0.2])] {
            let mut gr = [0.0; 2];
            k.grad_x(&x, &y, &mut gr);
            for m in 0..2 {
                let (mut xp, mut xm) = (x, x);
                xp[m] += 1e-7;
                xm[m] -= 1e-7;
                let fd = (k.green(&xp, &y) - k.green(&xm, &y)) / 2e-7;
                assert!((gr[m] - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{x:?} {m}: {} vs {fd}", gr[m]);
            }
        }
    }

    #[test]
    fn exit_moment_closed_form() {
        let b = Ball::new(vec![0.0, 0.0], 1.0);
        assert!(rel(stable_exit_moment(1.0, 2, &b, &[0.0, 0.0]), 2.0 / PI) < 1e-14);
        // exit moment equals the integral of the exact Green function
        let k = ExactBallGreen::new(1.0, 2, &b).unwrap();
        let x = [0.3, 0.2];
        let c = integrate_2d_scalar(
            |y| if y == x { 0.0 } else { k.green(&x, &y) },
            domain_regions(&disk()).unwrap()[0],
            &[x],
            CubatureConfig::default(),
        );
        assert!(rel(c.value[0], stable_exit_moment(1.0, 2, &b, &x)) < 1e-5, "{c:?}");
    }

    #[test]
    fn ball_poisson_kernel_is_a_density_and_matches_ikeda_watanabe() {
        let b = Ball::new(vec![0.0, 0.0], 1.0);
        for &(alpha, x) in &[(1.0, [0.0, 0.0]), (1.5, [0.4, -0.3]), (0.7, [-0.5, 0.1])] {
            let p = ball_exit_sector_probability(alpha, &b, &x, (1.0, f64::INFINITY), (0.0, 2.0 * PI)).unwrap();
            assert!((p - 1.0).abs() < 1e-7, "alpha={alpha}: {p}");
        }
        let spec = ProcessSpec::stable(1.5, 2).unwrap();
        let k = ExactBallGreen::new(1.5, 2, &b).unwrap();
        let x = [0.4, -0.3];
        for z in [[1.2, 0.0], [0.0, -2.5], [-1.05, 0.3]] {
            let (iw, _) = poisson_kernel_quadrature(&spec, &k, &x, &z, CubatureConfig::default()).unwrap();
            let cf = poisson_kernel_ball_stable(1.5, 2, &b, &x, &z);
            assert!(rel(iw, cf) < 1e-4, "z={z:?}: {iw} vs {cf}");
        }
    }

    #[test]
    fn grid_poisson_kernel_limits() {
        let spec = ProcessSpec::stable(1.0, 2).unwrap();
        let d = disk();
        let k = ExactBallGreen::new(1.0, 2, &Ball::new(vec![0.0, 0.0], 1.0)).unwrap();
        let cells = CellGrid::new(&d, 0.1).unwrap();
        let src = vec![[0.0, 0.0], [0.95, 0.0]];
        let g = GreenGrid::from_kernel(&d, cells, src, 0.1, |x, y| k.green(&x, &y), CubatureConfig::default()).unwrap();
        let z = [40.0, 0.0];
        let p = poisson_kernel(&spec, &g, &[0.0, 0.0], &z).unwrap();
        let far = spec.nu(40.0) * stable_exit_moment(1.0, 2, &Ball::new(vec![0.0, 0.0], 1.0), &[0.0, 0.0]);
        assert!(rel(p, far) < 0.05);
        let z = [1.5, 0.0];
        let p0 = poisson_kernel(&spec, &g, &[0.0, 0.0], &z).unwrap();
        let p1 = poisson_kernel(&spec, &g, &[0.95, 0.0], &z).unwrap();
        let exact0 = poisson_kernel_ball_stable(1.0, 2, &Ball::new(vec![0.0, 0.0], 1.0), &[0.0, 0.0], &z);
        assert!(rel(p0, exact0) < 0.02, "{p0} vs {exact0}");
        assert!(p1 > 0.0 && poisson_kernel(&spec, &g, &[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn heat_kernel_bound_branches() {
        let spec = ProcessSpec::stable(1.0, 2).unwrap();
        let first = spec.v_inverse(1.0).unwrap().powi(-2);
        assert!(rel(heat_kernel_bound(&spec, 1.0, 0.0).unwrap(), first) < 1e-12);
        let r = 50.0;
        let b = heat_kernel_bound(&spec, 1.0, r).unwrap();
        assert!(rel(b, spec.potential_u(r)) < 1e-12);
        let (a1, a2) = (heat_kernel_bound(&spec, 1e-4, 0.3).unwrap(), heat_kernel_bound(&spec, 2e-4, 0.3).unwrap());
        assert!(a2 >= a1);
    }

    #[test]
    fn three_g_invariances() {
        let spec = ProcessSpec::stable(1.0, 2).unwrap();
        let k = ExactBallGreen::new(1.0, 2, &Ball::new(vec![0.0, 0.0], 1.0)).unwrap();
        let (x, y, z) = ([0.1, 0.2], [-0.5, 0.3], [0.4, -0.6]);
        assert!(three_g_check(&spec, &k, &x, &y, &x).is_err());
        let a = three_g_check(&spec, &k, &x, &y, &z).unwrap();
        let b = three_g_check(&spec, &k, &y, &x, &z).unwrap();
        assert!(rel(a.ratio, b.ratio) < 1e-12);
    }

    #[test]
    fn kato_constant_drift_closed_form() {
        let spec = ProcessSpec::stable(1.5, 2).unwrap();
        let b = DriftField::constant(vec![0.6, 0.8]).unwrap();
        let xs = vec![vec![0.0, 0.0]];
        for r in [0.5, 0.1, 0.01] {
            let k = kato_norm(&spec, &b, r, &xs).unwrap();
            let c = kato_norm_stable_constant(1.5, 2, 1.0, r);
            assert!(rel(k.value, c) < 1e-8, "r={r}: {} vs {c}", k.value);
        }
        assert_eq!(kato_norm(&spec, &DriftField::zero(), 0.3, &xs).unwrap().value, 0.0);
        let cauchy = ProcessSpec::stable(1.0, 2).unwrap();
        assert!(matches!(kato_norm(&cauchy, &b, 0.3, &xs), Err(Error::NonIntegrable { .. })));
    }

    #[test]
    fn kato_general_drift_matches_constant_path() {
        let spec = ProcessSpec::stable(1.5, 2).unwrap();
        let b = DriftField::new(DriftKind::Profile {
            direction: vec![1.0, 1.0],
            profile: Profile::CenterPower { center: vec![5.0, 5.0], scale: 1.0, exponent: 0.0 },
        })
        .unwrap();
        let k = kato_norm(&spec, &b, 0.2, &[vec![0.1, 0.1]]).unwrap();
        assert!(rel(k.value, kato_norm_stable_constant(1.5, 2, 1.0, 0.2)) < 1e-8);
    }

    #[test]
    fn drift_json_and_eval() {
        let b = DriftField::new(DriftKind::Profile {
            direction: vec![0.0, 2.0],
            profile: Profile::Constant { value: 3.0 },
        })
        .unwrap();
        let mut out = [0.0; 2];
        b.eval(&[0.3, 0.3], &mut out);
        assert_eq!(out, [0.0, 3.0]);
        let js = serde_json::to_string(&b).unwrap();
        let back: DriftField = serde_json::from_str(&js).unwrap();
        assert_eq!(back, b);
        assert_eq!(b.scaled(2.0).magnitude(&[0.0, 0.0]), 6.0);
        let t = DriftField::new(DriftKind::Tabulated {
            origin: [0.0, 0.0],
            spacing: 1.0,
            nx: 2,
            ny: 2,
            values: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        })
        .unwrap();
        t.eval(&[0.5, 0.5], &mut out);
        assert_eq!(out, [0.5, 0.5]);
    }

    #[test]
    fn kappa_zero_drift_and_positivity() {
        let k = ExactBallGreen::new(1.5, 2, &Ball::new(vec![0.0, 0.0], 1.0)).unwrap();
        let z = kappa_pair(&k, &DriftField::zero(), &[0.1, 0.0], &[0.5, 0.0], CubatureConfig::default()).unwrap();
        assert_eq!((z.kappa, z.kappa_hat), (0.0, 0.0));
        let b = DriftField::constant(vec![1.0, 0.0]).unwrap();
        let cfg = CubatureConfig { rel_tol: 1e-4, ..CubatureConfig::for_alpha(1.5) };
        let p = kappa_pair(&k, &b, &[0.1, 0.0], &[0.5, 0.2], cfg).unwrap();
        assert!(p.kappa > 0.0 && p.kappa_hat > 0.0 && p.converged, "{p:?}");
    }
}
