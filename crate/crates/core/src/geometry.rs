//! Point clouds, the container box and every random sampler used by the loss estimators.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A set of samples with optional unit normals, stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    normals: Option<Vec<f64>>,
}

impl PointCloud {
    /// Builds a cloud from flat coordinates. Normals are rescaled to unit length.
    pub fn new(dim: usize, points: Vec<f64>, normals: Option<Vec<f64>>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("unsupported dimension {dim}")));
        }
        if points.len() % dim != 0 {
            return Err(Error::invalid("coordinate count is not a multiple of dim"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        let normals = match normals {
            None => None,
            Some(mut n) => {
                if n.len() != points.len() {
                    return Err(Error::invalid("normal count differs from point count"));
                }
                for (i, chunk) in n.chunks_mut(dim).enumerate() {
                    let len = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !len.is_finite() || len == 0.0 {
                        return Err(Error::invalid(format!("normal {i} has zero or non-finite length")));
                    }
                    chunk.iter_mut().for_each(|v| *v /= len);
                }
                Some(n)
            }
        };
        Ok(Self {
            dim,
            points,
            normals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[f64]> {
        self.normals.as_deref()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn normal(&self, i: usize) -> Option<&[f64]> {
        self.normals
            .as_ref()
            .map(|n| &n[i * self.dim..(i + 1) * self.dim])
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .chunks(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounds `(lower, upper)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points.chunks(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Input file formats understood by [`load_pointcloud`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    Csv2d,
}

impl CloudFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "pts" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::PlyAscii),
            "csv" => Some(CloudFormat::Csv2d),
            _ => None,
        }
    }
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz" => Ok(CloudFormat::Xyz),
            "ply" | "ply_ascii" => Ok(CloudFormat::PlyAscii),
            "csv" | "csv2d" => Ok(CloudFormat::Csv2d),
            other => Err(Error::Config(format!("unknown point cloud format '{other}'"))),
        }
    }
}

/// Reads a point cloud without normalising it.
pub fn load_pointcloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::PlyAscii => parse_ply(path, &text),
        _ => {
            let text = String::from_utf8(text).map_err(|_| Error::Parse {
                path: path.into(),
                line: 0,
                msg: "file is not valid UTF-8".into(),
            })?;
            match format {
                CloudFormat::Xyz => parse_columns(path, &text, 3, |l| {
                    l.split_whitespace().collect::<Vec<_>>()
                }),
                _ => parse_columns(path, &text, 2, |l| l.split(',').map(str::trim).collect()),
            }
        }
    }
}

/// Parses `dim` or `2 * dim` numeric columns per line; `#` starts a comment.
pub fn parse_columns(
    path: &Path,
    text: &str,
    dim: usize,
    split: impl Fn(&str) -> Vec<&str>,
) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut with_normals: Option<bool> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.into(),
            line: line_no,
            msg,
        };
        let fields = split(line);
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| perr(format!("cannot parse '{f}' as a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(perr("non-finite value".into()));
        }
        let has_normal = match values.len() {
            n if n == dim => false,
            n if n == 2 * dim => true,
            n => return Err(perr(format!("expected {dim} or {} columns, found {n}", 2 * dim))),
        };
        match with_normals {
            None => with_normals = Some(has_normal),
            Some(prev) if prev != has_normal => {
                return Err(perr("mixed presence of normals".into()));
            }
            _ => {}
        }
        points.extend_from_slice(&values[..dim]);
        if has_normal {
            normals.extend_from_slice(&values[dim..]);
        }
    }
    if points.is_empty() {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            msg: "no points".into(),
        });
    }
    let normals = with_normals.unwrap_or(false).then_some(normals);
    PointCloud::new(dim, points, normals)
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = String::from_utf8_lossy(bytes);
    let perr = |line: usize, msg: &str| Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(perr(1, "missing 'ply' magic")),
    }
    let mut vertex_count = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut elements_before_vertex = false;
    let mut body_start = None;
    for (idx, raw) in lines.by_ref() {
        let line = raw.trim();
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(perr(idx + 1, "binary PLY is not supported; convert to ascii"));
                }
            }
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse::<usize>()
                        .map_err(|_| perr(idx + 1, "bad vertex count"))?,
                );
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    elements_before_vertex = true;
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(perr(idx + 1, "list properties on vertices are not supported"));
            }
            ["property", _, name] if in_vertex => props.push((*name).to_string()),
            ["end_header"] => {
                body_start = Some(idx + 1);
                break;
            }
            _ => {}
        }
    }
    let body_start = body_start.ok_or_else(|| perr(0, "missing end_header"))?;
    if elements_before_vertex {
        return Err(perr(0, "vertex element must come first"));
    }
    let count = vertex_count.ok_or_else(|| perr(0, "no vertex element"))?;
    let find = |n: &str| props.iter().position(|p| p == n);
    let xyz = [find("x"), find("y"), find("z")];
    let nxyz = [find("nx"), find("ny"), find("nz")];
    if xyz.iter().any(Option::is_none) {
        return Err(perr(0, "vertex element lacks x/y/z"));
    }
    let with_normals = nxyz.iter().all(Option::is_some);
    let mut points = Vec::with_capacity(count * 3);
    let mut normals = Vec::with_capacity(if with_normals { count * 3 } else { 0 });
    let mut read = 0;
    for (idx, raw) in lines {
        if read == count {
            break;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| perr(idx + 1, "cannot parse vertex value")))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < props.len() {
            return Err(perr(idx + 1, "too few vertex values"));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(perr(idx + 1, "non-finite value"));
        }
        for k in xyz.iter().flatten() {
            points.push(vals[*k]);
        }
        if with_normals {
            for k in nxyz.iter().flatten() {
                normals.push(vals[*k]);
            }
        }
        read += 1;
    }
    if read != count {
        return Err(perr(body_start, "fewer vertices than declared"));
    }
    PointCloud::new(3, points, with_normals.then_some(normals))
}

/// Parameters of the normalising similarity: `normalized = (p - center) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub center: Vec<f64>,
}

impl Normalization {
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| (x - c) / self.scale)
            .collect()
    }

    pub fn invert(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.center)
            .map(|(x, c)| x * self.scale + c)
            .collect()
    }
}

/// Centres the cloud at its centroid and scales it to unit max norm.
pub fn normalize(pc: &PointCloud) -> Result<(PointCloud, Normalization)> {
    if pc.is_empty() {
        return Err(Error::invalid("cannot normalise an empty point cloud"));
    }
    let d = pc.dim();
    let n = pc.len() as f64;
    let mut center = vec![0.0; d];
    for p in pc.points().chunks(d) {
        for k in 0..d {
            center[k] += p[k];
        }
    }
    center.iter_mut().for_each(|c| *c /= n);
    let scale = pc
        .points()
        .chunks(d)
        .map(|p| {
            p.iter()
                .zip(&center)
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::invalid("degenerate point cloud: all points coincide"));
    }
    let tf = Normalization { scale, center };
    let points = pc
        .points()
        .chunks(d)
        .flat_map(|p| tf.apply(p))
        .collect();
    let out = PointCloud {
        dim: d,
        points,
        normals: pc.normals.clone(),
    };
    Ok((out, tf))
}

/// Axis-aligned box `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("domain bounds have mismatched dimensions"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("domain lower bound must be below upper bound"));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *x > *l && *x < *u)
    }

    pub fn contains_domain(&self, other: &Domain) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a <= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a >= b)
    }
}

/// The bounding box of `pc` scaled about its centre by `scale` (> 1).
///
/// Degenerate axes (zero extent) borrow the largest extent of the other axes.
pub fn bounding_domain(pc: &PointCloud, scale: f64) -> Result<Domain> {
    if !(scale > 1.0) {
        return Err(Error::invalid(format!("domain scale must exceed 1, got {scale}")));
    }
    if pc.is_empty() {
        return Err(Error::invalid("empty point cloud has no bounding box"));
    }
    let (lo, hi) = pc.bounds();
    let max_extent = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    let max_extent = if max_extent > 0.0 { max_extent } else { 1.0 };
    let mut lower = Vec::with_capacity(lo.len());
    let mut upper = Vec::with_capacity(lo.len());
    for (l, h) in lo.iter().zip(&hi) {
        let c = 0.5 * (l + h);
        let half = if h > l { 0.5 * (h - l) } else { 0.5 * max_extent };
        lower.push(c - scale * half);
        upper.push(c + scale * half);
    }
    Domain::new(lower, upper)
}

/// Seeded random stream. Identical seeds produce identical sample sequences.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream keyed by `(seed, key)`.
    pub fn derive(seed: u64, key: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(key.wrapping_add(0x9e37_79b9_7f4a_7c15))))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n` i.i.d. uniform points in the box, flat with stride `domain.dim()`.
pub fn sample_uniform(domain: &Domain, n: usize, rng: &mut RngState) -> Vec<f64> {
    let d = domain.dim();
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            let t = rng.uniform();
            out.push(domain.lower[k] + t * (domain.upper[k] - domain.lower[k]));
        }
    }
    out
}

/// Gaussian perturbations of uniformly chosen anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct NearDataSamples {
    pub anchors: Vec<usize>,
    /// Flat, `samples_per_anchor` consecutive points per anchor.
    pub points: Vec<f64>,
    pub samples_per_anchor: usize,
}

/// Draws `n` anchors uniformly over the cloud and `per_anchor` samples `anchor + N(0, σ²I)` each.
pub fn sample_near_data(
    pc: &PointCloud,
    sigma: f64,
    n: usize,
    per_anchor: usize,
    rng: &mut RngState,
) -> NearDataSamples {
    let d = pc.dim();
    let mut anchors = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n * per_anchor * d);
    for _ in 0..n {
        let a = rng.index(pc.len());
        anchors.push(a);
        let p = pc.point(a);
        for _ in 0..per_anchor {
            for &c in p {
                points.push(c + sigma * rng.normal());
            }
        }
    }
    NearDataSamples {
        anchors,
        points,
        samples_per_anchor: per_anchor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn xyz_without_normals() {
        let f = write_tmp("0 0 0\n1 0 0\n", ".xyz");
        let pc = load_pointcloud(f.path(), CloudFormat::Xyz).unwrap();
        assert_eq!(pc.len(), 2);
        assert!(pc.normals().is_none());
    }

    #[test]
    fn xyz_with_normal() {
        let f = write_tmp("# header\n0 0 0 0 0 1\n", ".xyz");
        let pc = load_pointcloud(f.path(), CloudFormat::Xyz).unwrap();
        assert_eq!(pc.len(), 1);
        assert_eq!(pc.normal(0).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv2d_parse() {
        let f = write_tmp("1,2\n3,4\n", ".csv");
        let pc = load_pointcloud(f.path(), CloudFormat::Csv2d).unwrap();
        assert_eq!(pc.dim(), 2);
        assert_eq!(pc.points(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let f = write_tmp("0 0 0\n0 x 0\n", ".xyz");
        match load_pointcloud(f.path(), CloudFormat::Xyz) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("0 0 0 0 0 1\n1 1 1\n", ".xyz");
        assert!(matches!(
            load_pointcloud(f.path(), CloudFormat::Xyz),
            Err(Error::Parse { line: 2, .. })
        ));
        let f = write_tmp("0 0 nan\n", ".xyz");
        assert!(load_pointcloud(f.path(), CloudFormat::Xyz).is_err());
    }

    #[test]
    fn ply_ascii_with_normals() {
        let ply = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                   property float z\nproperty float nx\nproperty float ny\nproperty float nz\n\
                   element face 0\nproperty list uchar int vertex_indices\nend_header\n\
                   0 0 0 0 0 2\n1 1 1 1 0 0\n";
        let f = write_tmp(ply, ".ply");
        let pc = load_pointcloud(f.path(), CloudFormat::PlyAscii).unwrap();
        assert_eq!(pc.len(), 2);
        assert_eq!(pc.normal(0).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn ply_binary_rejected() {
        let f = write_tmp(
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n",
            ".ply",
        );
        let err = load_pointcloud(f.path(), CloudFormat::PlyAscii).unwrap_err();
        assert!(err.to_string().contains("binary"));
    }

    #[test]
    fn normalize_symmetric_pair() {
        let pc = PointCloud::new(2, vec![2.0, 0.0, -2.0, 0.0], None).unwrap();
        let (out, tf) = normalize(&pc).unwrap();
        assert_eq!(out.points(), &[1.0, 0.0, -1.0, 0.0]);
        assert_eq!(tf.scale, 2.0);
        assert_eq!(tf.center, vec![0.0, 0.0]);
    }

    #[test]
    fn normalize_degenerate() {
        let pc = PointCloud::new(2, vec![1.0, 0.0, 1.0, 0.0], None).unwrap();
        assert!(normalize(&pc).is_err());
    }

    #[test]
    fn normalize_random_cloud_has_unit_max_norm() {
        let mut rng = RngState::new(3);
        let pts: Vec<f64> = (0..300).map(|_| 10.0 * rng.normal() + 4.0).collect();
        let pc = PointCloud::new(3, pts, None).unwrap();
        let (out, tf) = normalize(&pc).unwrap();
        assert!((out.max_norm() - 1.0).abs() <= 1e-12);
        for i in 0..pc.len() {
            let back = tf.invert(out.point(i));
            for (a, b) in back.iter().zip(pc.point(i)) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn bounding_domain_examples() {
        let pc = PointCloud::new(2, vec![-1.0, -1.0, 1.0, 1.0], None).unwrap();
        let d = bounding_domain(&pc, 2.0).unwrap();
        assert_eq!(d.lower, vec![-2.0, -2.0]);
        assert_eq!(d.upper, vec![2.0, 2.0]);

        let pc = PointCloud::new(3, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], None).unwrap();
        let d = bounding_domain(&pc, 1.5).unwrap();
        assert_eq!(d.lower, vec![-0.25; 3]);
        assert_eq!(d.upper, vec![1.25; 3]);
        assert!(bounding_domain(&pc, 1.0).is_err());
    }

    #[test]
    fn bounding_domain_contains_normalized_cloud() {
        let mut rng = RngState::new(11);
        let pts: Vec<f64> = (0..600).map(|_| rng.normal()).collect();
        let (pc, _) = normalize(&PointCloud::new(3, pts, None).unwrap()).unwrap();
        let d = bounding_domain(&pc, 1.5).unwrap();
        assert!(pc.points().chunks(3).all(|p| d.contains(p)));
        let small = bounding_domain(&pc, 1.2).unwrap();
        assert!(d.contains_domain(&small));
    }

    #[test]
    fn uniform_sampling() {
        let dom = Domain::cube(2, 0.0, 1.0);
        let mut rng = RngState::new(7);
        let s = sample_uniform(&dom, 100_000, &mut rng);
        for k in 0..2 {
            let mean = s.iter().skip(k).step_by(2).sum::<f64>() / 100_000.0;
            assert!((mean - 0.5).abs() < 0.01);
        }
        let one = sample_uniform(&dom, 1, &mut rng);
        assert!(dom.contains(&one));
        let a = sample_uniform(&dom, 50, &mut RngState::new(5));
        let b = sample_uniform(&dom, 50, &mut RngState::new(5));
        assert_eq!(a, b);
    }

    #[test]
    fn near_data_tail_bound() {
        let pc = PointCloud::new(3, vec![0.3, -0.2, 0.1, 0.0, 0.0, 0.0], None).unwrap();
        let mut rng = RngState::new(1);
        let s = sample_near_data(&pc, 1e-4, 20_000, 1, &mut rng);
        let far = s
            .anchors
            .iter()
            .zip(s.points.chunks(3))
            .filter(|(a, p)| {
                let q = pc.point(**a);
                norm(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]) > 6e-4
            })
            .count();
        assert!((far as f64) / 20_000.0 < 1e-3);
    }

    #[test]
    fn near_data_zero_noise_and_covariance() {
        let pc = PointCloud::new(2, vec![0.0, 0.0], None).unwrap();
        let s = sample_near_data(&pc, 0.0, 10, 2, &mut RngState::new(1));
        assert!(s.points.iter().all(|v| *v == 0.0));

        let sigma = 1e-3;
        let n = 100_000;
        let s = sample_near_data(&pc, sigma, n, 1, &mut RngState::new(2));
        let mut cov = [[0.0; 2]; 2];
        for p in s.points.chunks(2) {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += p[i] * p[j];
                }
            }
        }
        let s2 = sigma * sigma;
        for (i, row) in cov.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let c = c / n as f64;
                if i == j {
                    assert!((c - s2).abs() < 0.05 * s2);
                } else {
                    assert!(c.abs() < 0.05 * s2);
                }
            }
        }
    }
}
