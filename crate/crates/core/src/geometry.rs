//! Ball domains and disjoint unions of balls: distance to the complement,
//! diameter, localization radius, and interior lattices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Signed distance to the sphere, positive inside.
    pub fn depth(&self, x: &[f64]) -> f64 {
        self.radius - dist(x, &self.center)
    }
}

/// A bounded open set that is a finite union of balls at positive mutual distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainDoc", into = "DomainDoc")]
pub struct Domain {
    balls: Vec<Ball>,
    d: usize,
    diam: f64,
    r0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainDoc {
    pub balls: Vec<Ball>,
}

impl TryFrom<DomainDoc> for Domain {
    type Error = Error;
    fn try_from(doc: DomainDoc) -> Result<Self> {
        Domain::union(doc.balls)
    }
}

impl From<Domain> for DomainDoc {
    fn from(d: Domain) -> Self {
        DomainDoc { balls: d.balls }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub diam: f64,
    pub r0: f64,
    pub distortion: f64,
}

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::union(vec![Ball::new(center, radius)])
    }

    /// Centered ball `B(0, R)` in `R^d`.
    pub fn centered_ball(d: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; d], radius)
    }

    pub fn union(balls: Vec<Ball>) -> Result<Self> {
        let first = balls.first().ok_or_else(|| Error::Empty("domain needs at least one ball".into()))?;
        let d = first.center.len();
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension {d} below 2")));
        }
        for b in &balls {
            if b.center.len() != d {
                return Err(Error::InvalidParameter("balls of mixed dimension".into()));
            }
            if !(b.radius > 0.0 && b.radius.is_finite()) || b.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid ball {b:?}")));
            }
        }
        let mut r0 = balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        let mut diam: f64 = balls.iter().map(|b| 2.0 * b.radius).fold(0.0, f64::max);
        for i in 0..balls.len() {
            for j in i + 1..balls.len() {
                let c = dist(&balls[i].center, &balls[j].center);
                let gap = c - balls[i].radius - balls[j].radius;
                if !(gap > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "balls {i} and {j} overlap or touch (gap {gap:e})"
                    )));
                }
                r0 = r0.min(gap / 2.0);
                diam = diam.max(c + balls[i].radius + balls[j].radius);
            }
        }
        Ok(Self { balls, d, diam, r0 })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    /// The single ball when the domain is one ball.
    pub fn as_ball(&self) -> Option<&Ball> {
        match self.balls.as_slice() {
            [b] => Some(b),
            _ => None,
        }
    }

    pub fn containing_ball(&self, x: &[f64]) -> Option<usize> {
        self.balls.iter().position(|b| b.depth(x) > 0.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.containing_ball(x).is_some()
    }

    /// `dist(x, D^c)` inside `D`, 0 outside.
    pub fn delta(&self, x: &[f64]) -> f64 {
        // balls are disjoint, so the depth of the containing ball is the distance
        self.balls.iter().map(|b| b.depth(x)).fold(0.0, f64::max)
    }

    /// Distance from an exterior point to `D` (0 inside).
    pub fn dist_to_domain(&self, x: &[f64]) -> f64 {
        self.balls.iter().map(|b| (-b.depth(x)).max(0.0)).fold(f64::INFINITY, f64::min)
    }

    /// `r(y, z) = delta(y) ∨ delta(z) ∨ |y - z|`.
    pub fn r_max(&self, y: &[f64], z: &[f64]) -> f64 {
        self.delta(y).max(self.delta(z)).max(dist(y, z))
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    /// Localization radius: min radius, limited by half the smallest gap.
    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn summary(&self) -> GeometrySummary {
        GeometrySummary { diam: self.diam, r0: self.r0, distortion: self.diam / self.r0 }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for b in &self.balls {
            for k in 0..self.d {
                lo[k] = lo[k].min(b.center[k] - b.radius);
                hi[k] = hi[k].max(b.center[k] + b.radius);
            }
        }
        (lo, hi)
    }

    /// Points `h k`, `k` integer, lying in `D` with `delta >= eps`, in
    /// lexicographic order of `k`.
    pub fn interior_grid(&self, h: f64, eps: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self.interior_lattice(h, eps)?.into_iter().map(|(_, x)| x).collect())
    }

    /// As [`Domain::interior_grid`], with the integer lattice indices.
    pub fn interior_lattice(&self, h: f64, eps: f64) -> Result<Vec<(Vec<i64>, Vec<f64>)>> {
        if !(h > 0.0 && h.is_finite()) || !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing {h} / band {eps}")));
        }
        let (lo, hi) = self.bounding_box();
        let kmin: Vec<i64> = lo.iter().map(|v| (v / h).floor() as i64).collect();
        let kmax: Vec<i64> = hi.iter().map(|v| (v / h).ceil() as i64).collect();
        let mut out = Vec::new();
        let mut k = kmin.clone();
        'outer: loop {
            let x: Vec<f64> = k.iter().map(|&i| i as f64 * h).collect();
            if self.contains(&x) && self.delta(&x) >= eps {
                out.push((k.clone(), x));
            }
            // odometer increment, last coordinate fastest
            let mut j = self.d;
            loop {
                if j == 0 {
                    break 'outer;
                }
                j -= 1;
                if k[j] < kmax[j] {
                    k[j] += 1;
                    for m in j + 1..self.d {
                        k[m] = kmin[m];
                    }
                    break;
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Empty(format!("no lattice point with spacing {h} has delta >= {eps}")));
        }
        Ok(out)
    }
}
