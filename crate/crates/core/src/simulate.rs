//! Monte Carlo engines: exact walk-on-spheres for stable processes in ball
//! unions, and a jump-Euler scheme for any spec with or without drift.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, Ball, Domain};
use crate::grid::{CellGrid, GreenGrid};
use crate::kernels::{stable_exit_moment, DriftField, ExactBallGreen, GreenKernel};
use crate::quad::{integrate, integrate_to_infinity, integrate_to_zero, QuadConfig};
use crate::rng::{stream, Stream};
use crate::special::{gamma, sphere_area};
use crate::spectral::{Family, ProcessSpec};
use crate::stats::Estimator;

const MAX_D: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitRecord {
    pub tau: f64,
    pub position: Vec<f64>,
    pub steps: u64,
    /// Walk stopped inside `D` within the boundary cutoff (WoS only).
    pub forced: bool,
}

// ---------------------------------------------------------------------------
// Increments

fn gaussian_direction(rng: &mut Stream, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
            n2 += *o * *o;
        }
        if n2 > 0.0 {
            let n = n2.sqrt();
            out.iter_mut().for_each(|o| *o /= n);
            return;
        }
    }
}

/// Positive `a`-stable variable with Laplace transform `exp(-s^a)`, 0 < a < 1.
fn positive_stable(a: f64, rng: &mut Stream) -> f64 {
    let u = PI * rng.random::<f64>();
    let e: f64 = rng.sample(Exp1);
    (a * u).sin() / u.sin().powf(1.0 / a) * ((1.0 - a) * u).sin().powf((1.0 - a) / a) / e.powf((1.0 - a) / a)
}

/// Add the time-`t` increment of the `|xi|^alpha` process to `out`.
fn add_stable(alpha: f64, t: f64, rng: &mut Stream, out: &mut [f64]) {
    if alpha == 1.0 {
        // subordination by an inverse-gamma clock: N / |Z|
        let z: f64 = rng.sample::<f64, _>(StandardNormal).abs();
        let k = t / z;
        for o in out.iter_mut() {
            *o += k * rng.sample::<f64, _>(StandardNormal);
        }
    } else {
        let s = positive_stable(alpha / 2.0, rng);
        let k = t.powf(1.0 / alpha) * (2.0 * s).sqrt();
        for o in out.iter_mut() {
            *o += k * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Exact draw of `X_t` (started at 0) for stable specs and stable mixtures.
pub fn sample_increment(spec: &ProcessSpec, t: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    let comps = spec.stable_components().ok_or_else(|| {
        Error::Unsupported(format!(
            "no exact sampler for the {} family; use euler_exit, which compensates small jumps by a Gaussian",
            spec.family().name()
        ))
    })?;
    let mut out = vec![0.0; spec.dim()];
    for (alpha, w) in comps {
        add_stable(alpha, w * t, rng, &mut out);
    }
    Ok(out)
}

/// Radial law of jumps longer than `r_min`, tabulated for inverse sampling.
#[derive(Debug, Clone)]
struct LongJumps {
    rate: f64,
    // (ln s, tail mass above s) with tail decreasing
    ln_s: Vec<f64>,
    tail: Vec<f64>,
}

impl LongJumps {
    fn new(spec: &ProcessSpec, r_min: f64) -> Result<Self> {
        let d = spec.dim() as f64;
        let area = sphere_area(spec.dim());
        let cfg = QuadConfig::with_tol(0.0, 1e-10);
        let dens = |s: f64| area * spec.nu_times_pow(s, d - 1.0);
        let rate = integrate_to_infinity(dens, r_min, cfg)?.value;
        let mut ln_s = vec![r_min.ln()];
        let mut tail = vec![rate];
        let step = 0.02f64;
        loop {
            let (a, b) = (ln_s.last().unwrap().exp(), (ln_s.last().unwrap() + step).exp());
            let piece = integrate(dens, a, b, cfg).value;
            let t = (tail.last().unwrap() - piece).max(0.0);
            ln_s.push(b.ln());
            tail.push(t);
            if t < 1e-13 * rate || ln_s.len() > 20_000 {
                break;
            }
        }
        Ok(Self { rate, ln_s, tail })
    }

    fn sample(&self, rng: &mut Stream) -> f64 {
        let u = self.rate * (1.0 - rng.random::<f64>());
        // first index with tail <= u
        let k = self.tail.partition_point(|&t| t > u);
        if k == 0 {
            return self.ln_s[0].exp();
        }
        if k >= self.tail.len() {
            return self.ln_s.last().unwrap().exp();
        }
        let (t0, t1) = (self.tail[k - 1], self.tail[k]);
        let f = if t0 > t1 { (t0 - u) / (t0 - t1) } else { 0.0 };
        (self.ln_s[k - 1] + f * (self.ln_s[k] - self.ln_s[k - 1])).exp()
    }
}

#[derive(Debug, Clone)]
enum Increment {
    Exact(Vec<(f64, f64)>),
    /// Compound Poisson long jumps plus a Gaussian carrying the small-jump variance.
    Truncated { long: LongJumps, sd: f64 },
}

impl Increment {
    fn new(spec: &ProcessSpec, dt: f64, r_min: Option<f64>) -> Result<Self> {
        if let Some(c) = spec.stable_components() {
            return Ok(Self::Exact(c));
        }
        let alpha = match spec.family() {
            Family::RelativisticStable { alpha, .. } => alpha,
            f => return Err(Error::Unsupported(format!("no increment sampler for {}", f.name()))),
        };
        let r_min = r_min.unwrap_or(0.5 * dt.powf(1.0 / alpha));
        let d = spec.dim();
        let small = integrate_to_zero(|s| spec.nu_times_pow(s, d as f64 + 1.0), r_min, QuadConfig::with_tol(0.0, 1e-10))?;
        let var = sphere_area(d) * small.value / d as f64 * dt;
        Ok(Self::Truncated { long: LongJumps::new(spec, r_min)?, sd: var.sqrt() })
    }

    fn add(&self, dt: f64, rng: &mut Stream, out: &mut [f64]) {
        match self {
            Self::Exact(c) => {
                for &(alpha, w) in c {
                    add_stable(alpha, w * dt, rng, out);
                }
            }
            Self::Truncated { long, sd } => {
                for o in out.iter_mut() {
                    *o += sd * rng.sample::<f64, _>(StandardNormal);
                }
                let lam = long.rate * dt;
                let k: f64 = if lam > 0.0 { Poisson::new(lam).map(|p| p.sample(rng)).unwrap_or(0.0) } else { 0.0 };
                let mut dir = [0.0; MAX_D];
                let dir = &mut dir[..out.len()];
                for _ in 0..k as u64 {
                    let r = long.sample(rng);
                    gaussian_direction(rng, dir);
                    for (o, e) in out.iter_mut().zip(dir.iter()) {
                        *o += r * e;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Engines

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum Engine {
    Euler {
        dt: f64,
        #[serde(default = "default_max_steps")]
        max_steps: u64,
        /// Small-jump truncation radius (tempered families only).
        #[serde(default)]
        r_min: Option<f64>,
    },
    Wos {
        /// Boundary cutoff; `None` means `1e-12 r0`; the forced-stop mass scales like `eps_b^(1 - alpha/2)`.
        #[serde(default)]
        eps_b: Option<f64>,
        #[serde(default = "default_max_steps")]
        max_steps: u64,
    },
}

fn default_max_steps() -> u64 {
    100_000_000
}

impl Engine {
    pub fn euler(dt: f64) -> Self {
        Engine::Euler { dt, max_steps: default_max_steps(), r_min: None }
    }

    pub fn wos() -> Self {
        Engine::Wos { eps_b: None, max_steps: default_max_steps() }
    }
}

/// Jump-Euler walker: `X += b(X) dt + increment(dt)` until `X` leaves `D`.
#[derive(Debug, Clone)]
pub struct EulerWalker {
    domain: Domain,
    drift: Option<DriftField>,
    inc: Increment,
    dt: f64,
    max_steps: u64,
    d: usize,
}

impl EulerWalker {
    pub fn new(spec: &ProcessSpec, domain: &Domain, drift: Option<&DriftField>, dt: f64, max_steps: u64, r_min: Option<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if spec.dim() != domain.dim() || spec.dim() > MAX_D {
            return Err(Error::InvalidParameter("spec and domain dimensions differ".into()));
        }
        let drift = drift.filter(|b| !b.is_zero()).cloned();
        if let Some(b) = &drift {
            if b.bound().is_none() {
                return Err(Error::InvalidParameter("Euler needs a drift with finite sup norm".into()));
            }
        }
        Ok(Self { domain: domain.clone(), drift, inc: Increment::new(spec, dt, r_min)?, dt, max_steps, d: spec.dim() })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One walk; `visit` receives every pre-step position (each worth `dt` of occupation).
    pub fn walk<F: FnMut(&[f64])>(&self, x0: &[f64], rng: &mut Stream, mut visit: F) -> Result<ExitRecord> {
        if !self.domain.contains(x0) {
            return Err(Error::OutsideDomain("x0 must lie in D".into()));
        }
        let d = self.d;
        let mut x = [0.0; MAX_D];
        x[..d].copy_from_slice(x0);
        let mut b = [0.0; MAX_D];
        let single = self.domain.as_ball().map(|bl| (bl.center.clone(), bl.radius * bl.radius));
        let inside = |p: &[f64]| match &single {
            Some((c, r2)) => p.iter().zip(c).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() < *r2,
            None => self.domain.contains(p),
        };
        let mut steps = 0u64;
        loop {
            visit(&x[..d]);
            if let Some(f) = &self.drift {
                f.eval(&x[..d], &mut b[..d]);
                for k in 0..d {
                    x[k] += b[k] * self.dt;
                }
            }
            self.inc.add(self.dt, rng, &mut x[..d]);
            steps += 1;
            if !inside(&x[..d]) {
                return Ok(ExitRecord { tau: steps as f64 * self.dt, position: x[..d].to_vec(), steps, forced: false });
            }
            if steps >= self.max_steps {
                return Err(Error::StepBudget { budget: self.max_steps });
            }
        }
    }
}

/// A single Euler walk.
pub fn euler_exit(
    spec: &ProcessSpec,
    domain: &Domain,
    drift: Option<&DriftField>,
    x0: &[f64],
    dt: f64,
    rng: &mut Stream,
) -> Result<ExitRecord> {
    EulerWalker::new(spec, domain, drift, dt, default_max_steps(), None)?.walk(x0, rng, |_| {})
}

/// How WoS accounts for time spent inside each sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SphereTime {
    /// Add `E tau` of the sphere (unbiased for the mean exit time).
    Expected,
    /// Gamma draw matching the first two moments of the sphere exit time.
    MomentMatched,
}

/// Walk-on-spheres for the isotropic alpha-stable process on a ball union.
#[derive(Debug, Clone)]
pub struct WosWalker {
    alpha: f64,
    domain: Domain,
    eps_b: f64,
    max_steps: u64,
    radial: Beta<f64>,
    /// `E^0 tau_{B(0,1)}` and `E^0 tau_{B(0,1)}^2`.
    m1: f64,
    m2: f64,
    time: SphereTime,
}

/// `E^0 tau^2` for the unit ball: `2 int G(0,y) E^y tau dy`.
pub fn stable_exit_second_moment(alpha: f64, d: usize) -> Result<f64> {
    let unit = Ball::new(vec![0.0; d], 1.0);
    let g = ExactBallGreen::new(alpha, d, &unit)?;
    let origin = vec![0.0; d];
    let mut y = vec![0.0; d];
    let q = integrate_to_zero(
        |r: f64| {
            y[0] = r;
            g.green(&origin, &y) * stable_exit_moment(alpha, d, &unit, &y) * r.powi(d as i32 - 1)
        },
        1.0,
        QuadConfig::with_tol(0.0, 1e-11),
    )?;
    Ok(2.0 * sphere_area(d) * q.value)
}

impl WosWalker {
    pub fn new(alpha: f64, domain: &Domain, eps_b: Option<f64>, max_steps: u64, time: SphereTime) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
        }
        let eps_b = eps_b.unwrap_or(1e-12 * domain.r0());
        if !(eps_b > 0.0 && eps_b < domain.r0()) {
            return Err(Error::InvalidParameter(format!("boundary cutoff {eps_b} must lie in (0, r0)")));
        }
        let d = domain.dim();
        let unit = Ball::new(vec![0.0; d], 1.0);
        Ok(Self {
            alpha,
            domain: domain.clone(),
            eps_b,
            max_steps,
            radial: Beta::new(alpha / 2.0, 1.0 - alpha / 2.0).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            m1: stable_exit_moment(alpha, d, &unit, &vec![0.0; d]),
            m2: stable_exit_second_moment(alpha, d)?,
            time,
        })
    }

    pub fn for_spec(spec: &ProcessSpec, domain: &Domain, eps_b: Option<f64>, max_steps: u64, time: SphereTime) -> Result<Self> {
        let alpha = spec
            .stable_alpha()
            .ok_or_else(|| Error::Unsupported("walk-on-spheres needs an isotropic stable spec".into()))?;
        if spec.dim() != domain.dim() {
            return Err(Error::InvalidParameter("spec and domain dimensions differ".into()));
        }
        Self::new(alpha, domain, eps_b, max_steps, time)
    }

    pub fn eps_b(&self) -> f64 {
        self.eps_b
    }

    fn sphere_time(&self, r: f64, rng: &mut Stream) -> f64 {
        let s = r.powf(self.alpha);
        match self.time {
            SphereTime::Expected => self.m1 * s,
            SphereTime::MomentMatched => {
                let var = self.m2 - self.m1 * self.m1;
                let g = Gamma::new(self.m1 * self.m1 / var, var / self.m1).expect("positive moments");
                s * g.sample(rng)
            }
        }
    }

    pub fn walk(&self, x0: &[f64], rng: &mut Stream) -> Result<ExitRecord> {
        if !self.domain.contains(x0) {
            return Err(Error::OutsideDomain("x0 must lie in D".into()));
        }
        let d = self.domain.dim();
        let mut x = x0.to_vec();
        let mut dir = vec![0.0; d];
        let mut tau = 0.0;
        let mut steps = 0u64;
        loop {
            let r = self.domain.delta(&x);
            if r < self.eps_b {
                return Ok(ExitRecord { tau, position: x, steps, forced: true });
            }
            tau += self.sphere_time(r, rng);
            let v: f64 = self.radial.sample(rng);
            let rho = r / v.sqrt();
            gaussian_direction(rng, &mut dir);
            for k in 0..d {
                x[k] += rho * dir[k];
            }
            steps += 1;
            if !self.domain.contains(&x) {
                return Ok(ExitRecord { tau, position: x, steps, forced: false });
            }
            if steps >= self.max_steps {
                return Err(Error::StepBudget { budget: self.max_steps });
            }
        }
    }
}

/// A single walk-on-spheres exit.
pub fn wos_exit(alpha: f64, domain: &Domain, x0: &[f64], eps_b: f64, rng: &mut Stream) -> Result<ExitRecord> {
    WosWalker::new(alpha, domain, Some(eps_b), default_max_steps(), SphereTime::MomentMatched)?.walk(x0, rng)
}

enum Walker {
    Euler(EulerWalker),
    Wos(WosWalker),
}

impl Walker {
    fn new(spec: &ProcessSpec, domain: &Domain, drift: Option<&DriftField>, engine: Engine, time: SphereTime) -> Result<Self> {
        Ok(match engine {
            Engine::Euler { dt, max_steps, r_min } => Walker::Euler(EulerWalker::new(spec, domain, drift, dt, max_steps, r_min)?),
            Engine::Wos { eps_b, max_steps } => {
                if drift.is_some_and(|b| !b.is_zero()) {
                    return Err(Error::Unsupported("walk-on-spheres cannot carry a drift; use the Euler engine".into()));
                }
                Walker::Wos(WosWalker::for_spec(spec, domain, eps_b, max_steps, time)?)
            }
        })
    }

    fn walk(&self, x0: &[f64], rng: &mut Stream) -> Result<ExitRecord> {
        match self {
            Walker::Euler(w) => w.walk(x0, rng, |_| {}),
            Walker::Wos(w) => w.walk(x0, rng),
        }
    }
}

/// Walk indices `0..n` split into `shards` contiguous ranges.
fn shard_ranges(n: u64, shards: usize) -> Vec<(u64, u64)> {
    let k = shards.max(1) as u64;
    (0..k).map(|i| (n * i / k, n * (i + 1) / k)).filter(|(a, b)| b > a).collect()
}

/// Run `n` walks in `shards` parallel shards; each shard folds its walks into
/// an accumulator, and the accumulators are returned in shard order.
fn run_sharded<A: Send, F>(n: u64, shards: usize, work: F) -> Result<Vec<A>>
where
    F: Fn(u64, u64) -> Result<A> + Sync,
{
    let ranges = shard_ranges(n, shards);
    if ranges.len() <= 1 {
        return ranges.into_iter().map(|(a, b)| work(a, b)).collect();
    }
    std::thread::scope(|s| {
        let work = &work;
        let handles: Vec<_> = ranges.iter().map(|&(a, b)| s.spawn(move || work(a, b))).collect();
        handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
    })
}

/// Mean exit time from `x0` over `n` walks; shard count never changes the result.
#[allow(clippy::too_many_arguments)]
pub fn exit_moment(
    spec: &ProcessSpec,
    domain: &Domain,
    drift: Option<&DriftField>,
    x0: &[f64],
    n: u64,
    engine: Engine,
    seed: u64,
    shards: usize,
) -> Result<Estimator> {
    let w = Walker::new(spec, domain, drift, engine, SphereTime::Expected)?;
    let parts = run_sharded(n, shards, |a, b| {
        let mut e = Estimator::new();
        for i in a..b {
            e.push(w.walk(x0, &mut stream(seed, i))?.tau);
        }
        Ok(e)
    })?;
    Ok(Estimator::merged(&parts))
}

/// Exit times of `n` walks (WoS draws moment-matched sphere times).
pub fn exit_times(spec: &ProcessSpec, domain: &Domain, x0: &[f64], n: u64, engine: Engine, seed: u64) -> Result<Vec<f64>> {
    let w = Walker::new(spec, domain, None, engine, SphereTime::MomentMatched)?;
    (0..n).map(|i| w.walk(x0, &mut stream(seed, i)).map(|r| r.tau)).collect()
}

// ---------------------------------------------------------------------------
// Occupation-time Green functions

struct Tally {
    count: Vec<u64>,
    count_sq: Vec<u128>,
    hits: Vec<u64>,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self { count: vec![0; n], count_sq: vec![0; n], hits: vec![0; n] }
    }

    fn merge(&mut self, o: &Tally) {
        for c in 0..self.count.len() {
            self.count[c] += o.count[c];
            self.count_sq[c] += o.count_sq[c];
            self.hits[c] += o.hits[c];
        }
    }
}

/// Occupation-density estimate of `G(x_s, .)` on the cells, one row per source.
///
/// Counts are integers (steps per cell), so sums are exact and sharding never
/// changes the output. Cells never visited carry `sigma = inf`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_green_mc(
    spec: &ProcessSpec,
    domain: &Domain,
    drift: Option<&DriftField>,
    sources: &[[f64; 2]],
    cells: CellGrid,
    band: f64,
    n: u64,
    engine: Engine,
    seed: u64,
    shards: usize,
) -> Result<GreenGrid> {
    let (dt, max_steps, r_min) = match engine {
        Engine::Euler { dt, max_steps, r_min } => (dt, max_steps, r_min),
        Engine::Wos { .. } => {
            return Err(Error::Unsupported(
                "occupation densities need the Euler engine; WoS has no exact in-sphere occupation law".into(),
            ))
        }
    };
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two walks".into()));
    }
    let walker = EulerWalker::new(spec, domain, drift, dt, max_steps, r_min)?;
    let nc = cells.len();
    let mut grid = GreenGrid::zeros(domain, cells, sources.to_vec(), band);
    let mut counts = Vec::with_capacity(sources.len());
    for (s, x0) in sources.iter().enumerate() {
        // distinct streams per source
        let sseed = seed.wrapping_add((s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let parts = run_sharded(n, shards, |a, b| {
            let mut t = Tally::new(nc);
            let mut local = vec![0u64; nc];
            let mut touched = Vec::new();
            for i in a..b {
                walker.walk(x0, &mut stream(sseed, i), |p| {
                    if let Some(c) = grid.cells.locate(p) {
                        if local[c] == 0 {
                            touched.push(c);
                        }
                        local[c] += 1;
                    }
                })?;
                for &c in &touched {
                    t.count[c] += local[c];
                    t.count_sq[c] += (local[c] as u128) * (local[c] as u128);
                    t.hits[c] += 1;
                    local[c] = 0;
                }
                touched.clear();
            }
            Ok(t)
        })?;
        let mut t = Tally::new(nc);
        for p in &parts {
            t.merge(p);
        }
        let nf = n as f64;
        for c in 0..nc {
            let area = grid.cells.cells()[c].area;
            let mean = t.count[c] as f64 / nf;
            let var = ((t.count_sq[c] as f64) / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
            grid.values[s][c] = mean * dt / area;
            grid.sigma[s][c] = if t.count[c] == 0 { f64::INFINITY } else { (var / nf).sqrt() * dt / area };
        }
        counts.push(t.count);
    }
    grid.counts = Some(counts);
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Exit-position histograms

/// Polar partition of the exterior of a ball: annuli `radii[k]..radii[k+1]`
/// (last edge may be infinite) times `sectors` equal angular sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPartition {
    pub center: [f64; 2],
    pub radii: Vec<f64>,
    pub sectors: usize,
}

impl PolarPartition {
    pub fn len(&self) -> usize {
        (self.radii.len() - 1) * self.sectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, z: &[f64]) -> Option<usize> {
        let (dx, dy) = (z[0] - self.center[0], z[1] - self.center[1]);
        let rho = dx.hypot(dy);
        let k = self.radii.windows(2).position(|w| rho >= w[0] && rho < w[1])?;
        let th = dy.atan2(dx).rem_euclid(2.0 * PI);
        let j = ((th / (2.0 * PI) * self.sectors as f64) as usize).min(self.sectors - 1);
        Some(k * self.sectors + j)
    }

    /// `(rho range, theta range)` of set `i`.
    pub fn bounds(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let (k, j) = (i / self.sectors, i % self.sectors);
        let w = 2.0 * PI / self.sectors as f64;
        ((self.radii[k], self.radii[k + 1]), (j as f64 * w, (j + 1) as f64 * w))
    }

    /// Exit probabilities of the alpha-stable process from `ball`.
    pub fn stable_probabilities(&self, alpha: f64, ball: &Ball, x: &[f64]) -> Result<Vec<f64>> {
        if ball.center[..2] != self.center[..] {
            return Err(Error::InvalidParameter("partition must be centred on the ball".into()));
        }
        (0..self.len())
            .map(|i| {
                let (r, t) = self.bounds(i);
                crate::kernels::ball_exit_sector_probability(alpha, ball, x, r, t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitHistogram {
    pub n: u64,
    pub counts: Vec<u64>,
    /// Exits outside every partition set.
    pub unassigned: u64,
    /// Walks stopped by the boundary cutoff.
    pub forced: u64,
    /// `(width, fraction of exits within width of D)`.
    pub shell_mass: Vec<(f64, f64)>,
    pub mean_steps: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn exit_histogram(
    spec: &ProcessSpec,
    domain: &Domain,
    drift: Option<&DriftField>,
    x0: &[f64],
    partition: &PolarPartition,
    shell_widths: &[f64],
    n: u64,
    engine: Engine,
    seed: u64,
) -> Result<ExitHistogram> {
    let w = Walker::new(spec, domain, drift, engine, SphereTime::Expected)?;
    let mut h = ExitHistogram {
        n,
        counts: vec![0; partition.len()],
        unassigned: 0,
        forced: 0,
        shell_mass: shell_widths.iter().map(|&e| (e, 0.0)).collect(),
        mean_steps: 0.0,
    };
    let mut shell = vec![0u64; shell_widths.len()];
    let mut steps = 0u64;
    for i in 0..n {
        let r = w.walk(x0, &mut stream(seed, i))?;
        steps += r.steps;
        if r.forced {
            h.forced += 1;
            continue;
        }
        match partition.index(&r.position) {
            Some(k) => h.counts[k] += 1,
            None => h.unassigned += 1,
        }
        let gap = domain.dist_to_domain(&r.position);
        for (s, &e) in shell.iter_mut().zip(shell_widths) {
            if gap < e {
                *s += 1;
            }
        }
    }
    for (m, s) in h.shell_mass.iter_mut().zip(&shell) {
        m.1 = *s as f64 / n as f64;
    }
    h.mean_steps = steps as f64 / n as f64;
    Ok(h)
}

/// Radial CDF `P(|X_1| <= rho)` of the `|xi|^alpha` process in `R^3`, by Fourier inversion.
pub fn stable_radial_cdf_3d(alpha: f64, rho: f64) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    let kmax = 40f64.powf(1.0 / alpha);
    let f = |k: f64| {
        let x = k * rho;
        let g = if x < 1e-3 { x * x * x / 3.0 - x.powi(5) / 30.0 } else { x.sin() - x * x.cos() };
        (-k.powf(alpha)).exp() * g / k
    };
    let cfg = QuadConfig { max_subdivisions: 20_000, ..QuadConfig::with_tol(1e-13, 1e-11) };
    2.0 / PI * integrate(f, 0.0, kmax, cfg).value
}

/// `C r^alpha`-type check value: closed-form exit moment for the centred ball.
pub fn stable_exit_moment_center(alpha: f64, d: usize, radius: f64) -> f64 {
    let df = d as f64;
    gamma(df / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((df + alpha) / 2.0)) * radius.powf(alpha)
}

/// Mean of `|x - y|` over exits, useful for smoke checks.
pub fn mean_exit_distance(records: &[ExitRecord], x0: &[f64]) -> f64 {
    records.iter().map(|r| dist(&r.position, x0)).sum::<f64>() / records.len() as f64
}
