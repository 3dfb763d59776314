use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::grid::ScalarGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Inside,
    Boundary,
    Outside,
}

/// Partition of lattice nodes into a region `O`, its boundary layer and the rest.
///
/// Invariants: no inside node touches an outside node along an axis, and no inside node
/// lies on the lattice border.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    template: ScalarGrid,
    kinds: Vec<NodeKind>,
    region_sign: f64,
}

impl RegionMask {
    pub fn new(
        domain: Domain,
        resolution: Vec<usize>,
        kinds: Vec<NodeKind>,
        region_sign: f64,
    ) -> Result<Self> {
        let template = ScalarGrid::zeros(domain, resolution)?;
        if kinds.len() != template.len() {
            return Err(Error::invalid("mask size does not match the lattice"));
        }
        if region_sign != 1.0 && region_sign != -1.0 {
            return Err(Error::invalid(format!("region_sign must be ±1 (got {region_sign})")));
        }
        let m = Self {
            template,
            kinds,
            region_sign,
        };
        let mut any = false;
        for i in 0..m.kinds.len() {
            if m.kinds[i] != NodeKind::Inside {
                continue;
            }
            any = true;
            for nb in m.neighbours(i) {
                match nb {
                    None => return Err(Error::invalid("inside node on the lattice border")),
                    Some(j) if m.kinds[j] == NodeKind::Outside => {
                        return Err(Error::invalid("inside node adjacent to an outside node"))
                    }
                    _ => {}
                }
            }
        }
        if !any {
            return Err(Error::invalid("region has no inside nodes"));
        }
        Ok(m)
    }

    /// Inside where `phi < 0` (off the lattice border); boundary where a non-inside node
    /// has an inside axis neighbour.
    pub fn from_level_set(
        domain: Domain,
        resolution: Vec<usize>,
        phi: impl Fn(&[f64]) -> f64,
        region_sign: f64,
    ) -> Result<Self> {
        let template = ScalarGrid::zeros(domain.clone(), resolution.clone())?;
        let shape = template.shape();
        let mut kinds: Vec<NodeKind> = (0..template.len())
            .map(|i| {
                let ix = template.multi_index(i);
                let border = ix.iter().zip(&shape).any(|(&k, &n)| k == 0 || k + 1 == n);
                if !border && phi(&template.node_coords(i)) < 0.0 {
                    NodeKind::Inside
                } else {
                    NodeKind::Outside
                }
            })
            .collect();
        let probe = Self {
            template,
            kinds: kinds.clone(),
            region_sign,
        };
        for (i, k) in kinds.iter_mut().enumerate() {
            if *k == NodeKind::Outside
                && probe
                    .neighbours(i)
                    .any(|nb| nb.is_some_and(|j| probe.kinds[j] == NodeKind::Inside))
            {
                *k = NodeKind::Boundary;
            }
        }
        let t = probe.template;
        Self::new(t.domain().clone(), t.resolution().to_vec(), kinds, region_sign)
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn region_sign(&self) -> f64 {
        self.region_sign
    }

    pub fn lattice(&self) -> &ScalarGrid {
        &self.template
    }

    /// The `2d` axis neighbours of node `i`, `None` past the lattice border.
    fn neighbours(&self, i: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        let ix = self.template.multi_index(i);
        let shape = self.template.shape();
        (0..ix.len()).flat_map(move |a| {
            let stride = self.template.stride(a);
            let lo = (ix[a] > 0).then(|| i - stride);
            let hi = (ix[a] + 1 < shape[a]).then(|| i + stride);
            [lo, hi]
        })
    }
}

/// Unknown numbering of the inside nodes.
struct System<'a> {
    mask: &'a RegionMask,
    nodes: Vec<usize>,
    slot: Vec<usize>,
    inv_h2: Vec<f64>,
    epsilon: f64,
}

const NONE: usize = usize::MAX;

impl<'a> System<'a> {
    fn new(mask: &'a RegionMask, epsilon: f64) -> Self {
        let mut slot = vec![NONE; mask.kinds.len()];
        let mut nodes = Vec::new();
        for (i, k) in mask.kinds.iter().enumerate() {
            if *k == NodeKind::Inside {
                slot[i] = nodes.len();
                nodes.push(i);
            }
        }
        let g = &mask.template;
        let inv_h2 = (0..g.dim()).map(|a| 1.0 / (g.spacing(a) * g.spacing(a))).collect();
        Self {
            mask,
            nodes,
            slot,
            inv_h2,
            epsilon,
        }
    }

    fn diag(&self) -> f64 {
        1.0 + 2.0 * self.epsilon * self.inv_h2.iter().sum::<f64>()
    }

    /// `y = (I - εΔ_h) x` restricted to inside nodes (boundary values taken as 0).
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.mask.template;
        let d = self.diag();
        for (k, &i) in self.nodes.iter().enumerate() {
            let mut acc = d * x[k];
            for a in 0..g.dim() {
                let s = g.stride(a);
                for j in [i - s, i + s] {
                    let sj = self.slot[j];
                    if sj != NONE {
                        acc -= self.epsilon * self.inv_h2[a] * x[sj];
                    }
                }
            }
            y[k] = acc;
        }
    }

    /// Right-hand side for `v = 1` on boundary nodes.
    fn boundary_rhs(&self) -> Vec<f64> {
        let g = &self.mask.template;
        self.nodes
            .iter()
            .map(|&i| {
                let mut b = 0.0;
                for a in 0..g.dim() {
                    let s = g.stride(a);
                    for j in [i - s, i + s] {
                        if self.slot[j] == NONE {
                            b += self.epsilon * self.inv_h2[a];
                        }
                    }
                }
                b
            })
            .collect()
    }

    /// Direct solve for 1D lattices (tridiagonal, relative accuracy even for tiny values).
    fn solve_tridiagonal(&self, b: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        let d = self.diag();
        let off = -self.epsilon * self.inv_h2[0];
        let coupled = |k: usize| k > 0 && self.nodes[k] == self.nodes[k - 1] + 1;
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        for k in 0..n {
            let lower = if coupled(k) { off } else { 0.0 };
            let denom = d - lower * if k > 0 { c[k - 1] } else { 0.0 };
            let upper = if k + 1 < n && coupled(k + 1) { off } else { 0.0 };
            c[k] = upper / denom;
            r[k] = (b[k] - lower * if k > 0 { r[k - 1] } else { 0.0 }) / denom;
        }
        let mut x = r;
        for k in (0..n.saturating_sub(1)).rev() {
            x[k] -= c[k] * x[k + 1];
        }
        x
    }

    /// Jacobi-preconditioned conjugate gradients until `‖b - Ax‖∞ ≤ tol`.
    fn solve_cg(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let inv_d = 1.0 / self.diag();
        let cap = 10 * self.mask.kinds.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().map(|v| v * inv_d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for _ in 0..cap {
            if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= tol {
                return Ok(x);
            }
            self.apply(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
                z[k] = r[k] * inv_d;
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res <= tol {
            return Ok(x);
        }
        Err(Error::NoConvergence {
            iterations: cap,
            residual: res,
        })
    }

    /// `v` solving `-εΔv + v = 0` inside with `v = 1` on the boundary.
    fn decay(&self, tol: f64) -> Result<Vec<f64>> {
        let b = self.boundary_rhs();
        if self.mask.template.dim() == 1 {
            Ok(self.solve_tridiagonal(&b))
        } else {
            self.solve_cg(&b, tol)
        }
    }
}

fn check(epsilon: f64, tol: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive (got {epsilon})")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive (got {tol})")));
    }
    Ok(())
}

/// Solves `-εΔu + u - s = 0` in the region with `u = 0` on its boundary (`s` = region sign).
/// Nodes outside the region are 0. Solved through `v = 1 - s u`, which satisfies the
/// homogeneous equation with `v = 1` on the boundary.
pub fn solve_screened_poisson(mask: &RegionMask, epsilon: f64, tol: f64) -> Result<ScalarGrid> {
    check(epsilon, tol)?;
    let sys = System::new(mask, epsilon);
    let v = sys.decay(tol)?;
    let mut out = mask.template.clone();
    let s = mask.region_sign;
    for (k, &i) in sys.nodes.iter().enumerate() {
        out.values_mut()[i] = s * (1.0 - v[k]);
    }
    Ok(out)
}

/// `w = -√ε log(1 - |u|) sign(u)` of the screened Poisson solution, taken directly from
/// `v = 1 - |u|` so that values of `1 - |u|` far below machine epsilon stay accurate.
pub fn viscous_distance(mask: &RegionMask, epsilon: f64, tol: f64) -> Result<ScalarGrid> {
    check(epsilon, tol)?;
    let sys = System::new(mask, epsilon);
    let v = sys.decay(tol)?;
    let mut out = mask.template.clone();
    let s = mask.region_sign;
    let se = epsilon.sqrt();
    for (k, &i) in sys.nodes.iter().enumerate() {
        if !(v[k] > 0.0) {
            return Err(Error::NonFinite(format!("viscous distance at node {i} (v = {})", v[k])));
        }
        out.values_mut()[i] = -se * v[k].ln() * s;
    }
    Ok(out)
}

/// Euclidean distance from every inside node to the nearest boundary node (0 elsewhere).
pub fn distance_to_boundary(mask: &RegionMask) -> ScalarGrid {
    let g = &mask.template;
    let boundary: Vec<Vec<f64>> = (0..g.len())
        .filter(|&i| mask.kinds[i] == NodeKind::Boundary)
        .map(|i| g.node_coords(i))
        .collect();
    let mut out = g.clone();
    for i in 0..g.len() {
        if mask.kinds[i] != NodeKind::Inside {
            continue;
        }
        let x = g.node_coords(i);
        let d2 = boundary
            .iter()
            .map(|b| b.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        out.values_mut()[i] = d2.sqrt();
    }
    out
}

/// Solver tolerance used by [`varadhan_error`].
const VARADHAN_TOL: f64 = 1e-13;

/// For each `ε`, `max |w_ε - s d|` over inside nodes with `d ≥ compact_margin · diam(Ω)`.
pub fn varadhan_error(mask: &RegionMask, epsilons: &[f64], compact_margin: f64) -> Result<Vec<f64>> {
    let d = distance_to_boundary(mask);
    let cut = compact_margin * mask.template.domain().diameter();
    let s = mask.region_sign;
    let core: Vec<usize> = (0..d.len())
        .filter(|&i| mask.kinds[i] == NodeKind::Inside && d.values()[i] >= cut)
        .collect();
    if core.is_empty() {
        return Err(Error::invalid("compact core is empty; reduce compact_margin"));
    }
    epsilons
        .iter()
        .map(|&eps| {
            let w = viscous_distance(mask, eps, VARADHAN_TOL)?;
            Ok(core
                .iter()
                .map(|&i| (w.values()[i] - s * d.values()[i]).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{analytic_interval_solution, log_cosh};

    fn interval(res: usize, sign: f64) -> RegionMask {
        RegionMask::from_level_set(Domain::cube(1, -1.0, 1.0), vec![res], |x| x[0].abs() - 1.0, sign)
            .unwrap()
    }

    /// Residual `‖-εΔu + u - s‖∞` over inside nodes, from the returned grid itself.
    fn residual(mask: &RegionMask, u: &ScalarGrid, eps: f64) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..u.len() {
            if mask.kinds()[i] != NodeKind::Inside {
                continue;
            }
            let mut lap = 0.0;
            for a in 0..u.dim() {
                let s = u.stride(a);
                let h = u.spacing(a);
                lap += (u.values()[i - s] - 2.0 * u.values()[i] + u.values()[i + s]) / (h * h);
            }
            worst = worst.max((-eps * lap + u.values()[i] - mask.region_sign()).abs());
        }
        worst
    }

    #[test]
    fn interval_matches_closed_form() {
        let mask = interval(2048, 1.0);
        let u = solve_screened_poisson(&mask, 0.01, 1e-12).unwrap();
        let mut err = 0.0f64;
        for i in 0..u.len() {
            let x = u.axis_coord(0, i);
            err = err.max((u.values()[i] - analytic_interval_solution(x, 1.0, 0.01).unwrap().0).abs());
        }
        assert!(err <= 1e-5, "max error {err}");
        assert!(residual(&mask, &u, 0.01) <= 1e-10);
    }

    #[test]
    fn region_sign_negates() {
        let p = solve_screened_poisson(&interval(200, 1.0), 0.01, 1e-12).unwrap();
        let n = solve_screened_poisson(&interval(200, -1.0), 0.01, 1e-12).unwrap();
        for (a, b) in p.values().iter().zip(n.values()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn larger_epsilon_gives_smaller_solution() {
        let small = solve_screened_poisson(&interval(200, 1.0), 0.01, 1e-12).unwrap();
        let big = solve_screened_poisson(&interval(200, 1.0), 100.0, 1e-12).unwrap();
        for (a, b) in big.values().iter().zip(small.values()) {
            assert!(a.abs() <= b.abs());
        }
    }

    #[test]
    fn cg_agrees_with_direct_solve() {
        // A 2D strip that is one node tall reduces to the 1D interval problem.
        let dom = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let mask = RegionMask::from_level_set(dom, vec![100, 2], |x| x[0].abs() - 1.0, 1.0).unwrap();
        let u2 = solve_screened_poisson(&mask, 0.05, 1e-13).unwrap();
        assert!(residual(&mask, &u2, 0.05) <= 1e-12);
    }

    #[test]
    fn disk_residual_within_tolerance() {
        let mask = RegionMask::from_level_set(
            Domain::cube(2, -1.0, 1.0),
            vec![64, 64],
            |x| (x[0] * x[0] + x[1] * x[1]).sqrt() - 0.8,
            -1.0,
        )
        .unwrap();
        let u = solve_screened_poisson(&mask, 0.01, 1e-10).unwrap();
        assert!(residual(&mask, &u, 0.01) <= 1e-10);
        assert!(u.values().iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn mask_validation() {
        let dom = Domain::cube(1, -1.0, 1.0);
        let mut kinds = vec![NodeKind::Outside; 5];
        kinds[2] = NodeKind::Inside;
        assert!(RegionMask::new(dom.clone(), vec![4], kinds.clone(), 1.0).is_err());
        kinds[1] = NodeKind::Boundary;
        kinds[3] = NodeKind::Boundary;
        assert!(RegionMask::new(dom.clone(), vec![4], kinds.clone(), 1.0).is_ok());
        assert!(RegionMask::new(dom, vec![4], kinds, 0.5).is_err());
    }

    #[test]
    fn interval_varadhan_errors_decrease() {
        let mask = interval(4096, 1.0);
        let errs = varadhan_error(&mask, &[0.1, 0.01, 0.001], 0.1).unwrap();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        let w = viscous_distance(&mask, 0.01, 1e-13).unwrap();
        let centre = w.values()[2048];
        let err0 = (centre - 1.0).abs();
        assert!((err0 - 0.1 * std::f64::consts::LN_2).abs() <= 0.1 * 0.1 * std::f64::consts::LN_2);
        // tiny ε still resolves 1 - u ~ 1e-14 at the centre
        let w = viscous_distance(&mask, 0.001, 1e-13).unwrap();
        let exact = -0.001f64.sqrt() * (log_cosh(0.0) - log_cosh(1.0 / 0.001f64.sqrt()));
        assert!((w.values()[2048] - exact).abs() < 1e-3);
    }

    /// `log I₀(t)` from the power series (all terms positive).
    fn log_bessel_i0(t: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= (t / 2.0) * (t / 2.0) / (k * k) as f64;
            sum += term;
        }
        sum.ln()
    }

    #[test]
    fn disk_varadhan_band_and_centre() {
        let (r0, eps) = (0.8, 0.01);
        let mask = RegionMask::from_level_set(
            Domain::cube(2, -1.0, 1.0),
            vec![256, 256],
            |x| (x[0] * x[0] + x[1] * x[1]).sqrt() - r0,
            1.0,
        )
        .unwrap();
        let w = viscous_distance(&mask, eps, 1e-13).unwrap();
        let mut band = 0.0f64;
        for i in 0..w.len() {
            if mask.kinds()[i] != NodeKind::Inside {
                continue;
            }
            let x = w.node_coords(i);
            let d = r0 - (x[0] * x[0] + x[1] * x[1]).sqrt();
            if (0.1..=0.4).contains(&d) {
                band = band.max((w.values()[i] - d).abs());
            }
        }
        assert!(band <= 0.1, "band error {band}");
        // radial solution v = I₀(r/√ε)/I₀(R/√ε) predicts w(0) = √ε log I₀(R/√ε)
        let centre = w.get(&[128, 128]);
        let predicted = eps.sqrt() * log_bessel_i0(r0 / eps.sqrt());
        assert!((centre - predicted).abs() <= 0.1 * (r0 - predicted), "{centre} vs {predicted}");
    }
}
