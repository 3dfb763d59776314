//! Zero level-set extraction: lattice sampling of a field, marching squares / cubes,
//! length and area measurement, and OBJ / SVG / CSV output.

mod cubes;
mod squares;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use cubes::marching_cubes;
pub use squares::marching_squares;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::Domain;
use crate::grid::ScalarGrid;
use crate::transform::{log_transform, log_transform_grad, TransformConfig};

/// Scalar sampled from a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldQuantity {
    U,
    W(TransformConfig),
    /// `|‖∇w‖ - 1|`.
    GradNormError(TransformConfig),
}

/// Node values of `quantity` over the lattice of `domain` (cells per axis in `resolution`).
pub fn sample_field_grid(
    field: &dyn ScalarField,
    domain: &Domain,
    resolution: &[usize],
    quantity: FieldQuantity,
) -> Result<ScalarGrid> {
    if resolution.len() != domain.dim() || field.dim() != domain.dim() {
        return Err(Error::invalid("field, domain and resolution dimensions differ"));
    }
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::invalid("resolution must be at least 2 per axis"));
    }
    let mut grid = ScalarGrid::zeros(domain.clone(), resolution.to_vec())?;
    let xs: Vec<f64> = (0..grid.len()).flat_map(|i| grid.node_coords(i)).collect();
    let d = domain.dim();
    let values: Vec<f64> = match quantity {
        FieldQuantity::U => field.values(&xs)?,
        FieldQuantity::W(cfg) => field.values(&xs)?.iter().map(|&u| log_transform(u, &cfg)).collect(),
        FieldQuantity::GradNormError(cfg) => {
            let (u, g) = field.values_and_grads(&xs)?;
            u.iter()
                .enumerate()
                .map(|(i, &ui)| {
                    let gw = log_transform_grad(ui, &g[i * d..(i + 1) * d], &cfg);
                    (gw.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs()
                })
                .collect()
        }
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "sampled field at node {i} ({:?})",
            grid.multi_index(i)
        )));
    }
    grid.values_mut().copy_from_slice(&values);
    Ok(grid)
}

/// Value relative to `iso`, with exact ties nudged to the positive side.
#[inline]
pub(crate) fn shift(v: f64, iso: f64) -> f64 {
    let s = v - iso;
    if s == 0.0 {
        1e-12
    } else {
        s
    }
}

/// Fraction along an edge where the linear interpolant of shifted values vanishes.
#[inline]
pub(crate) fn crossing(a: f64, b: f64) -> f64 {
    a / (a - b)
}

/// Crossing segments of a square with corners `c0..c3` counter-clockwise, as pairs of edge
/// indices (`e_k` joins `c_k` and `c_{k+1}`). Segments run from a low-to-high crossing to a
/// high-to-low crossing, so the low side lies on their left. On a saddle,
/// `high_connected` decides whether the two high corners share a region.
pub(crate) fn face_segments(high: [bool; 4], high_connected: bool) -> Vec<(usize, usize)> {
    let crossed: Vec<usize> = (0..4).filter(|&k| high[k] != high[(k + 1) % 4]).collect();
    match crossed.len() {
        0 => Vec::new(),
        2 => {
            let (a, b) = (crossed[0], crossed[1]);
            if high[(a + 1) % 4] {
                vec![(a, b)]
            } else {
                vec![(b, a)]
            }
        }
        _ => (0..4)
            .filter(|&k| high[k] != high_connected)
            .map(|k| {
                let prev = (k + 3) % 4;
                if high_connected {
                    // isolated low corner k: up crossing on e_k, down on e_{k-1}
                    (k, prev)
                } else {
                    // isolated high corner k: up on e_{k-1}, down on e_k
                    (prev, k)
                }
            })
            .collect(),
    }
}

/// Zero level set in 2D: polylines, closed ones without a repeated end vertex.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Contour2D {
    pub polylines: Vec<Vec<[f64; 2]>>,
    pub closed: Vec<bool>,
}

impl Contour2D {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    /// Segments `(a, b)` of every polyline including closing segments.
    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.polylines.iter().zip(&self.closed).flat_map(|(p, &closed)| {
            let n = p.len();
            let count = if closed && n > 1 { n } else { n.saturating_sub(1) };
            (0..count).map(move |i| (p[i], p[(i + 1) % n]))
        })
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
            .sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.len()).sum()
    }
}

/// Zero level set in 3D.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Right-hand cross product `(b - a) × (c - a)` (twice the area, oriented).
    pub fn triangle_normal(&self, t: [u32; 3]) -> [f64; 3] {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    }

    pub fn triangle_area(&self, t: [u32; 3]) -> f64 {
        let n = self.triangle_normal(t);
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }

    pub fn centroid(&self, t: [u32; 3]) -> [f64; 3] {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        [0, 1, 2].map(|k| (a[k] + b[k] + c[k]) / 3.0)
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|&t| self.triangle_area(t)).sum()
    }
}

/// Extracted level set of either dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelSet {
    Contour(Contour2D),
    Mesh(TriMesh),
}

impl LevelSet {
    pub fn is_empty(&self) -> bool {
        match self {
            LevelSet::Contour(c) => c.is_empty(),
            LevelSet::Mesh(m) => m.is_empty(),
        }
    }
}

/// Zero level set of a 2D or 3D grid.
pub fn extract(grid: &ScalarGrid, iso: f64) -> Result<LevelSet> {
    match grid.dim() {
        2 => Ok(LevelSet::Contour(marching_squares(grid, iso))),
        3 => Ok(LevelSet::Mesh(marching_cubes(grid, iso))),
        d => Err(Error::invalid(format!("level-set extraction needs a 2D or 3D grid (got {d}D)"))),
    }
}

/// Contour length in 2D, surface area in 3D.
pub fn measure(geometry: &LevelSet) -> Result<f64> {
    if geometry.is_empty() {
        return Err(Error::invalid("cannot measure an empty level set"));
    }
    Ok(match geometry {
        LevelSet::Contour(c) => c.length(),
        LevelSet::Mesh(m) => m.area(),
    })
}

/// Wavefront OBJ with 1-based `f` indices.
pub fn write_obj(w: &mut dyn Write, mesh: &TriMesh) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// `polyline,x,y` rows; closed polylines repeat their first vertex at the end.
pub fn write_contour_csv(w: &mut dyn Write, contour: &Contour2D) -> std::io::Result<()> {
    writeln!(w, "polyline,x,y")?;
    for (k, (p, &closed)) in contour.polylines.iter().zip(&contour.closed).enumerate() {
        for v in p.iter().chain(p.first().filter(|_| closed)) {
            writeln!(w, "{k},{},{}", v[0], v[1])?;
        }
    }
    Ok(())
}

/// Reads vertices and faces of an OBJ file; polygons are fan-triangulated and
/// `v/vt/vn` index forms as well as negative (relative) indices are accepted.
pub fn read_obj(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.into(),
        line,
        msg,
    };
    let mut mesh = TriMesh::default();
    for (i, raw) in text.lines().enumerate() {
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse().map_err(|_| bad(i + 1, format!("bad coordinate '{t}'"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(bad(i + 1, "vertex needs three coordinates".into()));
                }
                mesh.vertices.push([c[0], c[1], c[2]]);
            }
            Some("f") => {
                let n = mesh.vertices.len() as i64;
                let ids: Vec<u32> = it
                    .map(|t| {
                        let k: i64 = t
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|_| bad(i + 1, format!("bad face index '{t}'")))?;
                        let k = if k < 0 { n + k } else { k - 1 };
                        if k < 0 || k >= n {
                            return Err(bad(i + 1, format!("face index '{t}' out of range")));
                        }
                        Ok(k as u32)
                    })
                    .collect::<Result<_>>()?;
                if ids.len() < 3 {
                    return Err(bad(i + 1, "face needs at least three vertices".into()));
                }
                for t in 1..ids.len() - 1 {
                    mesh.triangles.push([ids[0], ids[t], ids[t + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Reads the `polyline,x,y` format of [`write_contour_csv`]. A polyline whose last vertex
/// repeats its first is closed.
pub fn read_contour_csv(path: &Path) -> Result<Contour2D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "polyline,x,y" => {}
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "expected header 'polyline,x,y'".into(),
            })
        }
    }
    let mut out = Contour2D::default();
    let mut current: Option<usize> = None;
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse::<usize>().ok()?, f[1].parse::<f64>().ok()?, f[2].parse::<f64>().ok()?)))
            .flatten();
        let (k, x, y) = parsed.ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: format!("expected 'polyline,x,y' values, got '{l}'"),
        })?;
        if current != Some(k) {
            out.polylines.push(Vec::new());
            out.closed.push(false);
            current = Some(k);
        }
        out.polylines.last_mut().unwrap().push([x, y]);
    }
    for (p, c) in out.polylines.iter_mut().zip(out.closed.iter_mut()) {
        if p.len() > 2 && p.first() == p.last() {
            p.pop();
            *c = true;
        }
    }
    Ok(out)
}

/// SVG with one path per polyline; `y` is flipped so the picture has the usual orientation.
pub fn write_svg(w: &mut dyn Write, contour: &Contour2D, domain: &Domain) -> std::io::Result<()> {
    let (x0, y0) = (domain.lower[0], domain.lower[1]);
    let (wd, ht) = (domain.upper[0] - x0, domain.upper[1] - y0);
    let scale = 512.0 / wd.max(ht);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}">"#,
        wd * scale,
        ht * scale
    )?;
    for (p, &closed) in contour.polylines.iter().zip(&contour.closed) {
        let mut d = String::new();
        for (i, v) in p.iter().enumerate() {
            let (sx, sy) = ((v[0] - x0) * scale, (ht - (v[1] - y0)) * scale);
            d.push_str(&format!("{}{sx:.4},{sy:.4} ", if i == 0 { 'M' } else { 'L' }));
        }
        if closed {
            d.push('Z');
        }
        writeln!(w, r#"  <path d="{}" fill="none" stroke="black" stroke-width="1"/>"#, d.trim_end())?;
    }
    writeln!(w, "</svg>")
}
