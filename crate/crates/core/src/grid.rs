//! Node-centred regular lattices over a [`Domain`].
//!
//! Axis 0 varies fastest in the flat value array, so a 2D grid is stored as rows of
//! constant `y`. Dump layout (little-endian): magic `"PHSEGRID"`, `u32` version, `u32` dim,
//! `dim × u64` cell counts, `dim × f64` lower, `dim × f64` upper, then the node values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Domain;

const MAGIC: &[u8; 8] = b"PHSEGRID";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    domain: Domain,
    resolution: Vec<usize>,
    values: Vec<f64>,
}

impl ScalarGrid {
    /// `resolution[a]` is the number of cells on axis `a`; there are `resolution[a] + 1` nodes.
    pub fn new(domain: Domain, resolution: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::invalid(format!(
                "grid resolution has {} axes, domain has {}",
                resolution.len(),
                domain.dim()
            )));
        }
        if resolution.iter().any(|&r| r < 1) {
            return Err(Error::invalid("grid resolution must be at least 1 per axis"));
        }
        let n: usize = resolution.iter().map(|r| r + 1).product();
        if values.len() != n {
            return Err(Error::invalid(format!(
                "grid holds {} values, expected {n}",
                values.len()
            )));
        }
        Ok(Self {
            domain,
            resolution,
            values,
        })
    }

    pub fn zeros(domain: Domain, resolution: Vec<usize>) -> Result<Self> {
        let n = resolution.iter().map(|r| r + 1).product();
        Self::new(domain, resolution, vec![0.0; n])
    }

    pub fn from_fn(domain: Domain, resolution: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut g = Self::zeros(domain, resolution)?;
        for i in 0..g.len() {
            g.values[i] = f(&g.node_coords(i));
        }
        Ok(g)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    /// Nodes per axis.
    pub fn shape(&self) -> Vec<usize> {
        self.resolution.iter().map(|r| r + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.domain.upper[axis] - self.domain.lower[axis]) / self.resolution[axis] as f64
    }

    /// Stride of `axis` in the flat array.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[..axis].iter().map(|r| r + 1).product()
    }

    pub fn index(&self, ix: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &i) in ix.iter().enumerate() {
            idx += i * stride;
            stride *= self.resolution[a] + 1;
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|r| {
                let i = idx % (r + 1);
                idx /= r + 1;
                i
            })
            .collect()
    }

    /// Coordinate of node `i` along `axis`; the last node lands exactly on the upper bound.
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = (self.domain.lower[axis], self.domain.upper[axis]);
        let r = self.resolution[axis];
        if i == r {
            hi
        } else {
            lo + (hi - lo) * i as f64 / r as f64
        }
    }

    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.axis_coord(a, i))
            .collect()
    }

    /// Nearest node to `x`, clamped into the lattice.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let ix: Vec<usize> = (0..self.dim())
            .map(|a| {
                let t = (x[a] - self.domain.lower[a]) / self.spacing(a);
                (t.round().max(0.0) as usize).min(self.resolution[a])
            })
            .collect();
        self.index(&ix)
    }

    pub fn get(&self, ix: &[usize]) -> f64 {
        self.values[self.index(ix)]
    }
}

pub fn save_grid(path: &Path, grid: &ScalarGrid) -> Result<()> {
    let mut out = Vec::with_capacity(64 + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for &r in &grid.resolution {
        out.extend_from_slice(&(r as u64).to_le_bytes());
    }
    for v in grid.domain.lower.iter().chain(&grid.domain.upper).chain(&grid.values) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_grid(path: &Path) -> Result<ScalarGrid> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        path: path.into(),
        line: 0,
        msg: msg.into(),
    };
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(|| bad("truncated grid file"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a grid dump (bad magic)"));
    }
    if u32::from_le_bytes(take(4)?.try_into().unwrap()) != VERSION {
        return Err(bad("unsupported grid version"));
    }
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if !(1..=3).contains(&dim) {
        return Err(bad("bad grid dimension"));
    }
    let mut res = Vec::with_capacity(dim);
    for _ in 0..dim {
        res.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let mut f = |n: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
            .collect()
    };
    let lower = f(dim)?;
    let upper = f(dim)?;
    let n: usize = res.iter().map(|r| r + 1).product();
    let values = f(n)?;
    if pos != buf.len() {
        return Err(bad("trailing bytes after grid values"));
    }
    ScalarGrid::new(Domain::new(lower, upper)?, res, values)
}

/// `x,value` rows of a 1D grid.
pub fn write_profile_csv(w: &mut dyn Write, grid: &ScalarGrid, header: &str) -> std::io::Result<()> {
    writeln!(w, "x,{header}")?;
    for i in 0..grid.len() {
        writeln!(w, "{},{}", grid.axis_coord(0, i), grid.values[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = ScalarGrid::zeros(Domain::cube(3, -1.0, 1.0), vec![3, 4, 5]).unwrap();
        assert_eq!(g.len(), 4 * 5 * 6);
        for i in 0..g.len() {
            assert_eq!(g.index(&g.multi_index(i)), i);
        }
        assert_eq!(g.stride(1), 4);
        assert_eq!(g.node_coords(g.len() - 1), vec![1.0, 1.0, 1.0]);
        assert_eq!(g.node_coords(0), vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn nearest_node_clamps() {
        let g = ScalarGrid::zeros(Domain::cube(1, -1.0, 1.0), vec![4]).unwrap();
        assert_eq!(g.nearest_node(&[0.26]), 3);
        assert_eq!(g.nearest_node(&[-7.0]), 0);
        assert_eq!(g.nearest_node(&[7.0]), 4);
    }

    #[test]
    fn dump_roundtrip() {
        let g = ScalarGrid::from_fn(Domain::cube(2, -1.0, 2.0), vec![5, 3], |x| x[0] * x[1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.bin");
        save_grid(&p, &g).unwrap();
        assert_eq!(load_grid(&p).unwrap(), g);
        fs::write(&p, b"PHSEGRIDxx").unwrap();
        assert!(load_grid(&p).is_err());
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(ScalarGrid::new(Domain::cube(1, 0.0, 1.0), vec![2], vec![0.0; 2]).is_err());
    }
}
