//! Planar cell grids clipped to a domain, and tabulated two-point functions
//! on them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cubature::{integrate_2d_scalar, CubatureConfig, Disk, Region};
use crate::error::{Error, Result};
use crate::geometry::Domain;

/// A square cell `center ± h/2` intersected with the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub idx: [i64; 2],
    pub center: [f64; 2],
    pub region: Region,
    pub area: f64,
    /// `delta_D` at the centre (0 when the centre lies outside).
    pub delta: f64,
}

/// All cells of the lattice `h Z^2` whose squares meet the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    h: f64,
    cells: Vec<Cell>,
    kmin: [i64; 2],
    dims: [usize; 2],
    lookup: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl CellGrid {
    pub fn new(domain: &Domain, h: f64) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::Unsupported(format!("cell grids are planar; domain has d = {}", domain.dim())));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size {h}")));
        }
        let (lo, hi) = domain.bounding_box();
        let kmin = [(lo[0] / h).round() as i64 - 1, (lo[1] / h).round() as i64 - 1];
        let kmax = [(hi[0] / h).round() as i64 + 1, (hi[1] / h).round() as i64 + 1];
        let dims = [(kmax[0] - kmin[0] + 1) as usize, (kmax[1] - kmin[1] + 1) as usize];
        let mut lookup = vec![NONE; dims[0] * dims[1]];
        let mut cells = Vec::new();
        for i in kmin[0]..=kmax[0] {
            for j in kmin[1]..=kmax[1] {
                let c = [i as f64 * h, j as f64 * h];
                let (x0, x1, y0, y1) = (c[0] - h / 2.0, c[0] + h / 2.0, c[1] - h / 2.0, c[1] + h / 2.0);
                let mut hit: Option<Region> = None;
                for b in domain.balls() {
                    let disk = Disk { cx: b.center[0], cy: b.center[1], r: b.radius };
                    let reg = Region::clipped(x0, x1, y0, y1, disk);
                    if reg.area() > 0.0 {
                        if hit.is_some() {
                            return Err(Error::Unsupported(format!(
                                "cell size {h} exceeds the gap between balls"
                            )));
                        }
                        hit = Some(reg);
                    }
                }
                if let Some(region) = hit {
                    let id = cells.len() as u32;
                    lookup[(i - kmin[0]) as usize * dims[1] + (j - kmin[1]) as usize] = id;
                    cells.push(Cell { idx: [i, j], center: c, area: region.area(), region, delta: domain.delta(&c) });
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Empty("no cell meets the domain".into()));
        }
        Ok(Self { h, cells, kmin, dims, lookup })
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell holding `x` (nearest lattice point), if that cell meets the domain.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let i = (x[0] / self.h).round() as i64 - self.kmin[0];
        let j = (x[1] / self.h).round() as i64 - self.kmin[1];
        if i < 0 || j < 0 || i as usize >= self.dims[0] || j as usize >= self.dims[1] {
            return None;
        }
        match self.lookup[i as usize * self.dims[1] + j as usize] {
            NONE => None,
            id => Some(id as usize),
        }
    }

    /// Chebyshev distance between cell indices.
    pub fn index_distance(&self, a: usize, b: usize) -> i64 {
        let (p, q) = (self.cells[a].idx, self.cells[b].idx);
        (p[0] - q[0]).abs().max((p[1] - q[1]).abs())
    }
}

/// Tabulated `G(x_s, .)` for a list of sources, as cell averages on a [`CellGrid`].
#[derive(Debug, Clone)]
pub struct GreenGrid {
    pub domain: Domain,
    pub cells: CellGrid,
    pub sources: Vec<[f64; 2]>,
    /// `values[s][c]`: average of `G(sources[s], .)` over cell `c`.
    pub values: Vec<Vec<f64>>,
    /// One-sigma uncertainty per entry; zero for deterministic entries.
    pub sigma: Vec<Vec<f64>>,
    /// Monte Carlo visit counts, when applicable.
    pub counts: Option<Vec<Vec<u64>>>,
    /// Cells whose centre lies within this distance of the source are near-diagonal.
    pub band: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenGridHeader {
    pub domain: Domain,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spec: Option<serde_json::Value>,
    pub spacing: f64,
    pub band: f64,
    pub sources: Vec<[f64; 2]>,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridRow {
    x_idx: usize,
    y_idx: usize,
    value: f64,
    sigma: f64,
}

impl GreenGrid {
    pub fn zeros(domain: &Domain, cells: CellGrid, sources: Vec<[f64; 2]>, band: f64) -> Self {
        let n = cells.len();
        let m = sources.len();
        Self {
            domain: domain.clone(),
            cells,
            sources,
            values: vec![vec![0.0; n]; m],
            sigma: vec![vec![0.0; n]; m],
            counts: None,
            band,
        }
    }

    /// Cell averages of a kernel by adaptive cubature (singular at the source).
    pub fn from_kernel<F: Fn([f64; 2], [f64; 2]) -> f64>(
        domain: &Domain,
        cells: CellGrid,
        sources: Vec<[f64; 2]>,
        band: f64,
        kernel: F,
        cfg: CubatureConfig,
    ) -> Result<Self> {
        let mut g = Self::zeros(domain, cells, sources, band);
        for s in 0..g.sources.len() {
            let x = g.sources[s];
            for c in 0..g.cells.len() {
                let cell = &g.cells.cells()[c];
                let r = integrate_2d_scalar(|y| kernel(x, y), cell.region, &[x], cfg);
                g.values[s][c] = r.value[0] / cell.area;
                g.sigma[s][c] = r.error / cell.area;
            }
        }
        Ok(g)
    }

    pub fn same_shape(&self, other: &GreenGrid) -> bool {
        self.cells == other.cells && self.sources == other.sources
    }

    /// Whether the cell is outside the near-diagonal band of the source.
    pub fn off_band(&self, s: usize, c: usize) -> bool {
        let (x, y) = (self.sources[s], self.cells.cells()[c].center);
        (x[0] - y[0]).hypot(x[1] - y[1]) >= self.band
    }

    /// `sum_c value * area`, i.e. the integral of `G(x_s, .)` over the domain.
    pub fn mass(&self, s: usize) -> f64 {
        self.values[s].iter().zip(self.cells.cells()).map(|(v, c)| v * c.area).sum()
    }

    /// Area-weighted aggregation onto a grid whose spacing is `factor` times
    /// larger (odd `factor`, so fine cells nest in coarse ones). Sigmas add
    /// linearly; counts are dropped.
    pub fn coarsen(&self, factor: usize, band: f64) -> Result<GreenGrid> {
        if factor % 2 == 0 {
            return Err(Error::InvalidParameter(format!("coarsening factor {factor} must be odd")));
        }
        let coarse = CellGrid::new(&self.domain, self.cells.spacing() * factor as f64)?;
        let mut g = GreenGrid::zeros(&self.domain, coarse, self.sources.clone(), band);
        let f = factor as i64;
        for (c, cell) in self.cells.cells().iter().enumerate() {
            let k = [cell.idx[0].div_euclid(f) + i64::from(cell.idx[0].rem_euclid(f) > f / 2),
                cell.idx[1].div_euclid(f) + i64::from(cell.idx[1].rem_euclid(f) > f / 2)];
            let h = g.cells.spacing();
            let target = g
                .cells
                .locate(&[k[0] as f64 * h, k[1] as f64 * h])
                .ok_or_else(|| Error::InvalidParameter("fine cell outside the coarse grid".into()))?;
            for s in 0..g.sources.len() {
                g.values[s][target] += self.values[s][c] * cell.area;
                g.sigma[s][target] += self.sigma[s][c] * cell.area;
            }
        }
        for s in 0..g.sources.len() {
            for (c, cell) in g.cells.cells().iter().enumerate() {
                g.values[s][c] /= cell.area;
                g.sigma[s][c] /= cell.area;
            }
        }
        Ok(g)
    }

    pub fn header(&self, spec: Option<serde_json::Value>) -> GreenGridHeader {
        GreenGridHeader {
            domain: self.domain.clone(),
            spec,
            spacing: self.cells.spacing(),
            band: self.band,
            sources: self.sources.clone(),
            cells: self.cells.len(),
        }
    }

    /// Rows `x_idx,y_idx,value,sigma` (source index, cell index).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (s, row) in self.values.iter().enumerate() {
            for (c, &value) in row.iter().enumerate() {
                w.serialize(GridRow { x_idx: s, y_idx: c, value, sigma: self.sigma[s][c] })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuild from a header and CSV body written by [`GreenGrid::write_csv`].
    pub fn read_csv<R: std::io::Read>(header: &GreenGridHeader, body: R) -> Result<Self> {
        let cells = CellGrid::new(&header.domain, header.spacing)?;
        if cells.len() != header.cells {
            return Err(Error::InvalidParameter("header cell count does not match the grid".into()));
        }
        let mut g = Self::zeros(&header.domain, cells, header.sources.clone(), header.band);
        let mut r = csv::Reader::from_reader(body);
        for row in r.deserialize() {
            let row: GridRow = row?;
            if row.x_idx >= g.sources.len() || row.y_idx >= g.cells.len() {
                return Err(Error::InvalidParameter(format!("row index ({}, {}) out of range", row.x_idx, row.y_idx)));
            }
            g.values[row.x_idx][row.y_idx] = row.value;
            g.sigma[row.x_idx][row.y_idx] = row.sigma;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ball;

    #[test]
    fn cells_cover_the_disk() {
        let d = Domain::centered_ball(2, 1.0).unwrap();
        let g = CellGrid::new(&d, 0.1).unwrap();
        let area: f64 = g.cells().iter().map(|c| c.area).sum();
        assert!((area - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(g.locate(&[0.0, 0.0]).map(|i| g.cells()[i].idx), Some([0, 0]));
        assert_eq!(g.locate(&[0.93, 0.0]).map(|i| g.cells()[i].idx), Some([9, 0]));
        assert!(g.locate(&[2.0, 0.0]).is_none());
        // cell [0.95, 1.05] x [-0.05, 0.05] is a sliver of the disk
        assert!(g.locate(&[0.99, 0.0]).is_some());
        assert!(CellGrid::new(&Domain::centered_ball(3, 1.0).unwrap(), 0.1).is_err());
    }

    #[test]
    fn gap_smaller_than_cell_rejected() {
        let d = Domain::union(vec![Ball::new(vec![0.0, 0.0], 1.0), Ball::new(vec![2.05, 0.0], 1.0)]).unwrap();
        assert!(CellGrid::new(&d, 0.2).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let d = Domain::centered_ball(2, 1.0).unwrap();
        let cells = CellGrid::new(&d, 0.5).unwrap();
        let mut g = GreenGrid::zeros(&d, cells, vec![[0.0, 0.0]], 0.5);
        for (c, v) in g.values[0].iter_mut().enumerate() {
            *v = c as f64 * 0.25;
        }
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_idx,y_idx,value,sigma\n"));
        let h = g.header(None);
        let js = serde_json::to_string(&h).unwrap();
        let h2: GreenGridHeader = serde_json::from_str(&js).unwrap();
        let back = GreenGrid::read_csv(&h2, buf.as_slice()).unwrap();
        assert_eq!(back.values, g.values);
    }

    #[test]
    fn coarsening_preserves_mass() {
        let d = Domain::centered_ball(2, 1.0).unwrap();
        let fine = CellGrid::new(&d, 0.1 / 3.0).unwrap();
        let mut g = GreenGrid::zeros(&d, fine, vec![[0.0, 0.0]], 0.1);
        for (c, v) in g.values[0].iter_mut().enumerate() {
            *v = 1.0 + (c % 7) as f64;
        }
        let cg = g.coarsen(3, 0.1).unwrap();
        assert_eq!(cg.cells.spacing(), 0.1);
        assert!((cg.mass(0) - g.mass(0)).abs() < 1e-10 * g.mass(0));
        let mut ones = g.clone();
        ones.values[0].iter_mut().for_each(|v| *v = 1.0);
        assert!(ones.coarsen(3, 0.1).unwrap().values[0].iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!(g.coarsen(2, 0.1).is_err());
    }
}
