use std::collections::HashMap;
use std::sync::OnceLock;

use super::{crossing, face_segments, TriMesh};
use crate::grid::ScalarGrid;

/// Cube corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&(p, q, _)| (p, q) == (a.min(b), a.max(b)))
        .expect("corners share an edge")
}

fn offset(c: usize) -> [f64; 3] {
    [(c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64]
}

/// The six faces, corners counter-clockwise seen from outside.
fn faces() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut corners: Vec<usize> = (0..8).filter(|c| (c >> axis) & 1 == side).collect();
            let mut normal = [0.0; 3];
            normal[axis] = if side == 1 { 1.0 } else { -1.0 };
            let u_axis = (axis + 1) % 3;
            let mut u = [0.0; 3];
            u[u_axis] = 1.0;
            // v = n × u so that (u, v, n) is right-handed
            let v = [
                normal[1] * u[2] - normal[2] * u[1],
                normal[2] * u[0] - normal[0] * u[2],
                normal[0] * u[1] - normal[1] * u[0],
            ];
            let angle = |c: &usize| {
                let p = offset(*c).map(|x| x - 0.5);
                let pu: f64 = (0..3).map(|k| p[k] * u[k]).sum();
                let pv: f64 = (0..3).map(|k| p[k] * v[k]).sum();
                pv.atan2(pu)
            };
            corners.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
            out.push([corners[0], corners[1], corners[2], corners[3]]);
        }
    }
    out
}

/// Per case (bit `c` set when corner `c` is above iso): closed polygons as cube-edge cycles,
/// wound so that their right-hand normal points to the side above iso.
fn table() -> &'static [Vec<Vec<u8>>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = faces();
        (0..256usize)
            .map(|case| {
                let pos = |c: usize| (case >> c) & 1 == 1;
                let mut next: HashMap<usize, usize> = HashMap::new();
                for f in &faces {
                    let fe: Vec<usize> = (0..4).map(|k| edge_between(f[k], f[(k + 1) % 4])).collect();
                    // ambiguous faces keep the corners above iso apart
                    for (a, b) in face_segments([pos(f[0]), pos(f[1]), pos(f[2]), pos(f[3])], false) {
                        next.insert(fe[a], fe[b]);
                    }
                }
                let mut cycles = Vec::new();
                let mut starts: Vec<usize> = next.keys().copied().collect();
                starts.sort_unstable();
                let mut seen = [false; 12];
                for s in starts {
                    if seen[s] {
                        continue;
                    }
                    let mut cyc = Vec::new();
                    let mut e = s;
                    while !seen[e] {
                        seen[e] = true;
                        cyc.push(e as u8);
                        e = next[&e];
                    }
                    // face segments circle the low side; reverse so normals face the high side
                    cyc.reverse();
                    cycles.push(cyc);
                }
                cycles
            })
            .collect()
    })
}

/// Iso-surface of a 3D grid by marching cubes with a generated 256-case table.
///
/// Vertices are shared between cells (one per crossed lattice edge), so closed surfaces come
/// out watertight. Triangle normals point towards increasing values. Nodes exactly at `iso`
/// count as `iso + 1e-12`; triangles with area below 1e-12 are dropped.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> TriMesh {
    assert_eq!(grid.dim(), 3, "marching cubes needs a 3D grid");
    let table = table();
    let res = grid.resolution().to_vec();
    let strides = [1, grid.stride(1), grid.stride(2)];
    let shifted: Vec<f64> = grid.values().iter().map(|v| super::shift(*v, iso)).collect();
    let corner_node = |n0: usize, c: usize| n0 + (c & 1) * strides[0] + ((c >> 1) & 1) * strides[1] + ((c >> 2) & 1) * strides[2];
    let mut mesh = TriMesh::default();
    let mut vertex_of: HashMap<usize, u32> = HashMap::new();
    let mut vertex = |mesh: &mut TriMesh, key: usize| -> u32 {
        *vertex_of.entry(key).or_insert_with(|| {
            let (n, axis) = (key / 3, key % 3);
            let m = n + strides[axis];
            let (p, q) = (grid.node_coords(n), grid.node_coords(m));
            let t = crossing(shifted[n], shifted[m]);
            mesh.vertices.push([0, 1, 2].map(|k| p[k] + t * (q[k] - p[k])));
            (mesh.vertices.len() - 1) as u32
        })
    };
    for k in 0..res[2] {
        for j in 0..res[1] {
            for i in 0..res[0] {
                let n0 = i * strides[0] + j * strides[1] + k * strides[2];
                let mut case = 0;
                for c in 0..8 {
                    if shifted[corner_node(n0, c)] > 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for cyc in &table[case] {
                    let ids: Vec<u32> = cyc
                        .iter()
                        .map(|&e| {
                            let (a, _, axis) = EDGES[e as usize];
                            vertex(&mut mesh, 3 * corner_node(n0, a) + axis)
                        })
                        .collect();
                    for t in 1..ids.len() - 1 {
                        let tri = [ids[0], ids[t], ids[t + 1]];
                        if mesh.triangle_area(tri) >= 1e-12 {
                            mesh.triangles.push(tri);
                        }
                    }
                }
            }
        }
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use std::collections::HashMap;

    fn sphere(res: usize) -> TriMesh {
        let g = ScalarGrid::from_fn(Domain::cube(3, -1.5, 1.5), vec![res; 3], |x| {
            (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() - 1.0
        })
        .unwrap();
        marching_cubes(&g, 0.0)
    }

    fn edge_counts(m: &TriMesh) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    #[test]
    fn table_cycles_are_consistent() {
        let t = table();
        assert!(t[0].is_empty() && t[255].is_empty());
        for (case, cycles) in t.iter().enumerate() {
            let crossed = EDGES
                .iter()
                .filter(|&&(a, b, _)| ((case >> a) & 1) != ((case >> b) & 1))
                .count();
            let used: usize = cycles.iter().map(|c| c.len()).sum();
            assert_eq!(used, crossed, "case {case}");
            assert!(cycles.iter().all(|c| c.len() >= 3));
        }
    }

    #[test]
    fn sphere_area_watertight_and_outward() {
        let m = sphere(128);
        let four_pi = 4.0 * std::f64::consts::PI;
        assert!((m.area() - four_pi).abs() <= 0.02 * four_pi, "{}", m.area());
        assert!(edge_counts(&m).values().all(|&c| c == 2));
        for t in &m.triangles {
            let n = m.triangle_normal(*t);
            let c = m.centroid(*t);
            assert!(n[0] * c[0] + n[1] * c[1] + n[2] * c[2] > 0.0);
        }
    }

    #[test]
    fn empty_for_uniform_sign() {
        let g = ScalarGrid::from_fn(Domain::cube(3, -1.0, 1.0), vec![4; 3], |_| -1.0).unwrap();
        assert!(marching_cubes(&g, 0.0).triangles.is_empty());
    }

    #[test]
    fn ambiguous_shapes_stay_watertight() {
        // sum of two nearby spheres and a saddle-rich trigonometric field
        let fields: [fn(&[f64]) -> f64; 2] = [
            |x| {
                let a = ((x[0] - 0.3).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
                let b = ((x[0] + 0.3).powi(2) + x[1] * x[1] + x[2] * x[2]).sqrt();
                a.min(b) - 0.31
            },
            |x| (5.0 * x[0]).sin() * (5.0 * x[1]).cos() + (5.0 * x[2]).sin() * 0.7,
        ];
        for f in fields {
            let g = ScalarGrid::from_fn(Domain::cube(3, -1.0, 1.0), vec![33; 3], f).unwrap();
            let m = marching_cubes(&g, 0.0);
            let counts = edge_counts(&m);
            // interior edges are shared twice; edges on the lattice border only once
            for (&(a, b), &c) in &counts {
                let on_border = |v: u32| m.vertices[v as usize].iter().any(|x| (x.abs() - 1.0).abs() < 1e-12);
                if !(on_border(a) && on_border(b)) {
                    assert_eq!(c, 2);
                }
            }
        }
    }

    #[test]
    fn shift_invariance() {
        let f = |x: &[f64]| (x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2]).sqrt() - 0.613;
        let dom = Domain::cube(3, -1.0, 1.0);
        let a = ScalarGrid::from_fn(dom.clone(), vec![20; 3], f).unwrap();
        let b = ScalarGrid::from_fn(dom, vec![20; 3], |x| f(x) - 2.0).unwrap();
        let (ma, mb) = (marching_cubes(&a, 0.0), marching_cubes(&b, -2.0));
        assert_eq!(ma.triangles, mb.triangles);
        for (p, q) in ma.vertices.iter().zip(&mb.vertices) {
            assert!((0..3).all(|k| (p[k] - q[k]).abs() < 1e-9));
        }
    }
}
