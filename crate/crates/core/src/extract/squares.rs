use std::collections::HashMap;

use super::{crossing, face_segments, Contour2D};
use crate::grid::ScalarGrid;

/// Iso-contour of a 2D grid by marching squares.
///
/// Polylines keep the region below `iso` on their left (counter-clockwise around it).
/// Saddle cells connect the corners above `iso` when the cell-centre mean is `>= iso`.
/// Nodes exactly at `iso` count as `iso + 1e-12`.
pub fn marching_squares(grid: &ScalarGrid, iso: f64) -> Contour2D {
    assert_eq!(grid.dim(), 2, "marching squares needs a 2D grid");
    let res = grid.resolution();
    let sy = grid.stride(1);
    let shifted: Vec<f64> = grid.values().iter().map(|v| super::shift(*v, iso)).collect();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    for j in 0..res[1] {
        for i in 0..res[0] {
            let n0 = i + j * sy;
            let corners = [n0, n0 + 1, n0 + 1 + sy, n0 + sy];
            let vals = corners.map(|c| shifted[c]);
            let pos = vals.map(|v| v > 0.0);
            if pos.iter().all(|&p| p) || pos.iter().all(|&p| !p) {
                continue;
            }
            let centre = 0.25 * vals.iter().sum::<f64>();
            // global edge keys of the CCW cell boundary e_k = (c_k, c_{k+1})
            let keys = [2 * n0, 2 * (n0 + 1) + 1, 2 * (n0 + sy), 2 * n0 + 1];
            for (a, b) in face_segments(pos, centre >= 0.0) {
                segments.push((keys[a], keys[b]));
            }
        }
    }
    chain(grid, &shifted, segments)
}

/// Position of the crossing on global edge `key = 2 node + axis`.
fn edge_point(grid: &ScalarGrid, shifted: &[f64], key: usize) -> [f64; 2] {
    let (n, axis) = (key / 2, key % 2);
    let m = n + grid.stride(axis);
    let (p, q) = (grid.node_coords(n), grid.node_coords(m));
    let t = crossing(shifted[n], shifted[m]);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn chain(grid: &ScalarGrid, shifted: &[f64], segments: Vec<(usize, usize)>) -> Contour2D {
    let by_start: HashMap<usize, usize> = segments.iter().enumerate().map(|(i, s)| (s.0, i)).collect();
    let by_end: HashMap<usize, usize> = segments.iter().enumerate().map(|(i, s)| (s.1, i)).collect();
    let mut used = vec![false; segments.len()];
    let mut out = Contour2D::default();
    for seed in 0..segments.len() {
        if used[seed] {
            continue;
        }
        // walk back to the first segment of an open chain (or all the way round a loop)
        let mut first = seed;
        while let Some(&p) = by_end.get(&segments[first].0) {
            if p == seed {
                break;
            }
            first = p;
        }
        let mut keys = vec![segments[first].0];
        let mut cur = first;
        let closed = loop {
            used[cur] = true;
            let end = segments[cur].1;
            match by_start.get(&end) {
                Some(&nx) if nx == first => break true,
                Some(&nx) if !used[nx] => {
                    keys.push(end);
                    cur = nx;
                }
                _ => {
                    keys.push(end);
                    break false;
                }
            }
        };
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(keys.len());
        for k in keys {
            let p = edge_point(grid, shifted, k);
            if pts.last() != Some(&p) {
                pts.push(p);
            }
        }
        if closed && pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        out.polylines.push(pts);
        out.closed.push(closed);
    }
    out
}
