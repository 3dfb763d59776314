//! Chamfer and Hausdorff distances between point sets, surface sampling and reports.
//!
//! Point sets are flat coordinate arrays of a given dimension. Nearest-neighbour search uses
//! an exact kd-tree whose results are bitwise identical to brute force: squared distances
//! are accumulated in coordinate order and the far side of a split is only skipped when the
//! split distance alone already exceeds the best squared distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::LevelSet;
use crate::geometry::RngState;

const LEAF: usize = 8;

/// Squared Euclidean distance, coordinates summed in order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a flat point array.
pub struct KdTree<'a> {
    dim: usize,
    points: &'a [f64],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [f64], dim: usize) -> Result<Self> {
        check_set(points, dim, "tree")?;
        let n = points.len() / dim;
        let mut tree = Self {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build(0, n);
        Ok(tree)
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.points[i * self.dim + axis]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split the axis of widest spread at the median
        let axis = (0..self.dim)
            .max_by(|&a, &b| {
                let spread = |ax: usize| {
                    let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = self.coord(i, ax);
                        (lo.min(v), hi.max(v))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap();
        let mid = (start + end) / 2;
        let (dim, pts) = (self.dim, self.points);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * dim + axis].total_cmp(&pts[b * dim + axis])
        });
        let value = self.coord(self.order[mid], axis);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// `(index, squared distance)` of the nearest point; ties resolve to the lowest index.
    pub fn nearest(&self, q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = squared_distance(q, &self.points[i * self.dim..(i + 1) * self.dim]);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn check_set(points: &[f64], dim: usize, what: &str) -> Result<()> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::invalid(format!("{what} coordinates are not a multiple of dim {dim}")));
    }
    if points.is_empty() {
        return Err(Error::invalid(format!("{what} point set is empty")));
    }
    Ok(())
}

/// Distance from every point of `x` to its nearest neighbour in `y`, in `x` order.
pub fn nearest_distances(x: &[f64], y: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_set(x, dim, "first")?;
    let tree = KdTree::new(y, dim)?;
    Ok(x.par_chunks(dim).map(|q| tree.nearest(q).1.sqrt()).collect())
}

/// `mean_x min_y ‖x - y‖`; double-sided is the average of both directions.
pub fn chamfer(x: &[f64], y: &[f64], dim: usize, one_sided: bool) -> Result<f64> {
    let fwd = mean(&nearest_distances(x, y, dim)?);
    if one_sided {
        return Ok(fwd);
    }
    let bwd = mean(&nearest_distances(y, x, dim)?);
    Ok(0.5 * (fwd + bwd))
}

/// `max_x min_y ‖x - y‖`; double-sided is the max of both directions.
pub fn hausdorff(x: &[f64], y: &[f64], dim: usize, one_sided: bool) -> Result<f64> {
    let fwd = max(&nearest_distances(x, y, dim)?);
    if one_sided {
        return Ok(fwd);
    }
    Ok(fwd.max(max(&nearest_distances(y, x, dim)?)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// `n` points uniform over the level set (length-weighted in 2D, area-weighted in 3D).
pub fn sample_surface(geometry: &LevelSet, n: usize, rng: &mut RngState) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    match geometry {
        LevelSet::Contour(c) => {
            let segs: Vec<([f64; 2], [f64; 2])> = c.segments().collect();
            let weights: Vec<f64> = segs
                .iter()
                .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
                .collect();
            let cdf = cumulative(&weights)?;
            let mut out = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let (a, b) = segs[pick(&cdf, rng)];
                let t = rng.uniform();
                out.extend([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
            Ok(out)
        }
        LevelSet::Mesh(m) => {
            let weights: Vec<f64> = m.triangles.iter().map(|&t| m.triangle_area(t)).collect();
            let cdf = cumulative(&weights)?;
            let mut out = Vec::with_capacity(3 * n);
            for _ in 0..n {
                let [a, b, c] = m.triangles[pick(&cdf, rng)].map(|i| m.vertices[i as usize]);
                let (r1, r2) = (rng.uniform().sqrt(), rng.uniform());
                let (wa, wb, wc) = (1.0 - r1, r1 * (1.0 - r2), r1 * r2);
                out.extend((0..3).map(|k| wa * a[k] + wb * b[k] + wc * c[k]));
            }
            Ok(out)
        }
    }
}

fn cumulative(weights: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let cdf: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if !(acc > 0.0) || !acc.is_finite() {
        return Err(Error::invalid("cannot sample degenerate geometry (zero total measure)"));
    }
    Ok(cdf)
}

fn pick(cdf: &[f64], rng: &mut RngState) -> usize {
    let target = rng.uniform() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// The four distances between two point sets, in normalised coordinate units.
/// One-sided values measure from the first set to the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub chamfer_one_sided: f64,
    pub chamfer: f64,
    pub hausdorff_one_sided: f64,
    pub hausdorff: f64,
    #[serde(skip)]
    pub samples_a: usize,
    #[serde(skip)]
    pub samples_b: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl MetricReport {
    pub fn compute(a: &[f64], b: &[f64], dim: usize, seed: u64) -> Result<Self> {
        let ab = nearest_distances(a, b, dim)?;
        let ba = nearest_distances(b, a, dim)?;
        Ok(Self {
            chamfer_one_sided: mean(&ab),
            chamfer: 0.5 * (mean(&ab) + mean(&ba)),
            hausdorff_one_sided: max(&ab),
            hausdorff: max(&ab).max(max(&ba)),
            samples_a: a.len() / dim,
            samples_b: b.len() / dim,
            seed,
        })
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "chamfer_one_sided={}\nchamfer={}\nhausdorff_one_sided={}\nhausdorff={}\nsamples_a={}\nsamples_b={}\nseed={}\nunits=normalized\n",
            self.chamfer_one_sided,
            self.chamfer,
            self.hausdorff_one_sided,
            self.hausdorff,
            self.samples_a,
            self.samples_b,
            self.seed
        )
    }

    /// JSON object with exactly the four metric keys.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialise")
    }
}
