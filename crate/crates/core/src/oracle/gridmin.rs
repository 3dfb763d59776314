use crate::error::{Error, Result};
use crate::geometry::{Domain, PointCloud, RngState};
use crate::grid::ScalarGrid;
use crate::loss::{double_well, double_well_deriv, PhaseHyperParams};

#[derive(Debug, Clone, PartialEq)]
pub enum GridInit {
    Constant(f64),
    /// `u = x₀` rescaled so the domain's first axis maps onto `[-1, 1]`.
    Ramp,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMinConfig {
    /// Cells per axis.
    pub resolution: Vec<usize>,
    pub init: GridInit,
    pub max_iterations: usize,
    /// Stop once an accepted step changes the energy by at most this fraction.
    pub rel_tol: f64,
    pub initial_step: f64,
}

impl GridMinConfig {
    pub fn new(resolution: Vec<usize>) -> Self {
        Self {
            resolution,
            init: GridInit::Ramp,
            max_iterations: 2_000_000,
            rel_tol: 1e-8,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridMinResult {
    pub grid: ScalarGrid,
    pub energy: f64,
    pub iterations: usize,
    /// `(before, after)` energies of every accepted step, both under that step's samples.
    pub steps: Vec<(f64, f64)>,
}

/// Trapezoid node weights and per-axis edge factors of the discretised energy.
struct Quadrature {
    node: Vec<f64>,
    /// `edge[a][i]`: weight of `(u[i + stride_a] - u[i])²` (0 on the last layer of axis `a`).
    edge: Vec<Vec<f64>>,
    strides: Vec<usize>,
}

impl Quadrature {
    fn new(g: &ScalarGrid) -> Self {
        let dim = g.dim();
        let res = g.resolution();
        let tw = |a: usize, i: usize| g.spacing(a) * if i == 0 || i == res[a] { 0.5 } else { 1.0 };
        let mut node = vec![0.0; g.len()];
        let mut edge = vec![vec![0.0; g.len()]; dim];
        for i in 0..g.len() {
            let ix = g.multi_index(i);
            node[i] = (0..dim).map(|a| tw(a, ix[a])).product();
            for a in 0..dim {
                if ix[a] < res[a] {
                    let h = g.spacing(a);
                    edge[a][i] = node[i] / tw(a, ix[a]) / h;
                }
            }
        }
        Self {
            node,
            edge,
            strides: (0..dim).map(|a| g.stride(a)).collect(),
        }
    }

    /// `∫ gw ε‖∇u‖² + W(u)` and its gradient w.r.t. node values.
    fn wch(&self, u: &[f64], epsilon: f64, grad: &mut [f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..u.len() {
            e += self.node[i] * double_well(u[i]);
            grad[i] = self.node[i] * double_well_deriv(u[i]);
        }
        for (a, w) in self.edge.iter().enumerate() {
            let s = self.strides[a];
            for i in 0..u.len() {
                if w[i] == 0.0 {
                    continue;
                }
                let du = u[i + s] - u[i];
                e += epsilon * w[i] * du * du;
                let gdu = 2.0 * epsilon * w[i] * du;
                grad[i + s] += gdu;
                grad[i] -= gdu;
            }
        }
        e
    }
}

/// Volume-form `∫ ε‖∇u‖² + W(u)` of a grid (forward differences, trapezoid rule).
pub fn wch_grid_energy(grid: &ScalarGrid, epsilon: f64) -> f64 {
    let q = Quadrature::new(grid);
    let mut scratch = vec![0.0; grid.len()];
    q.wch(grid.values(), epsilon, &mut scratch)
}

/// Ball averages of one anchor: `(node, weight)` with weights summing to 1.
type Group = Vec<(usize, f64)>;

fn draw_groups(g: &ScalarGrid, pc: &PointCloud, sigma: f64, per_ball: usize, rng: &mut RngState) -> Vec<Group> {
    let d = pc.dim();
    let mut x = vec![0.0; d];
    (0..pc.len())
        .map(|k| {
            let p = pc.point(k);
            let mut grp: Group = Vec::with_capacity(per_ball);
            for _ in 0..per_ball {
                for j in 0..d {
                    x[j] = p[j] + sigma * rng.normal();
                }
                let n = g.nearest_node(&x);
                match grp.iter_mut().find(|(m, _)| *m == n) {
                    Some(e) => e.1 += 1.0 / per_ball as f64,
                    None => grp.push((n, 1.0 / per_ball as f64)),
                }
            }
            grp
        })
        .collect()
}

fn group_mean(u: &[f64], g: &Group) -> f64 {
    g.iter().map(|&(n, w)| w * u[n]).sum()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `λ L + WCH` with the smooth gradient part in `grad`.
fn energy(q: &Quadrature, u: &[f64], groups: &[Group], hyper: &PhaseHyperParams, grad: &mut [f64]) -> f64 {
    let mut e = q.wch(u, hyper.epsilon * hyper.gradient_weight, grad);
    if hyper.lambda > 0.0 {
        let c = hyper.lambda / groups.len() as f64;
        e += c * groups.iter().map(|g| group_mean(u, g).abs()).sum::<f64>();
    }
    e
}

/// Direct gradient descent on grid node values of
/// `λ L(u) + ∫ ε‖∇u‖² + W(u)`, with `L` from nearest-node ball averages around every data
/// point (re-drawn each step from a seed derived from `rng`).
///
/// The `|mean|` kinks of `L` use the minimal-norm subgradient, and a step that would carry a
/// ball mean across zero is projected onto zero, so the descent does not stall at the
/// interface node. Steps halve on energy increase and grow by 10% on acceptance.
pub fn minimize_grid_functional(
    pc: &PointCloud,
    domain: &Domain,
    hyper: &PhaseHyperParams,
    cfg: &GridMinConfig,
    rng: &mut RngState,
) -> Result<GridMinResult> {
    hyper.validate()?;
    if !(1..=2).contains(&domain.dim()) || pc.dim() != domain.dim() {
        return Err(Error::invalid("grid minimisation supports 1D and 2D with matching cloud"));
    }
    if pc.is_empty() && hyper.lambda > 0.0 {
        return Err(Error::invalid("reconstruction term needs data points"));
    }
    let mut grid = ScalarGrid::zeros(domain.clone(), cfg.resolution.clone())?;
    match &cfg.init {
        GridInit::Constant(c) => grid.values_mut().iter_mut().for_each(|v| *v = *c),
        GridInit::Ramp => {
            let (lo, hi) = (domain.lower[0], domain.upper[0]);
            for i in 0..grid.len() {
                let x = grid.node_coords(i)[0];
                grid.values_mut()[i] = (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
            }
        }
        GridInit::Values(v) => {
            if v.len() != grid.len() {
                return Err(Error::invalid("initial values do not match the grid"));
            }
            grid.values_mut().copy_from_slice(v);
        }
    }
    let q = Quadrature::new(&grid);
    let base_seed = rng.seed();
    let n = grid.len();
    let mut u = grid.values().to_vec();
    let mut trial = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut step = cfg.initial_step;
    let mut steps = Vec::new();
    let mut last_energy = f64::NAN;
    let c_scale = |k: usize| hyper.lambda / k as f64;
    for it in 0..cfg.max_iterations {
        let groups = if hyper.lambda > 0.0 {
            draw_groups(&grid, pc, hyper.sigma, hyper.samples_per_ball, &mut RngState::derive(base_seed, it as u64))
        } else {
            Vec::new()
        };
        let e = energy(&q, &u, &groups, hyper, &mut g);
        if !e.is_finite() {
            return Err(Error::NonFinite(format!("grid energy at iteration {it}")));
        }
        last_energy = e;
        let means: Vec<f64> = groups.iter().map(|gr| group_mean(&u, gr)).collect();
        if !groups.is_empty() {
            let c = c_scale(groups.len());
            let smooth = g.clone();
            for (gr, &m) in groups.iter().zip(&means) {
                let tau = if m != 0.0 {
                    sign(m)
                } else {
                    let ag: f64 = gr.iter().map(|&(n, w)| w * smooth[n]).sum();
                    let aa: f64 = gr.iter().map(|&(_, w)| w * w).sum();
                    (-ag / (c * aa)).clamp(-1.0, 1.0)
                };
                for &(n, w) in gr {
                    g[n] += c * w * tau;
                }
            }
        }
        loop {
            for i in 0..n {
                trial[i] = u[i] - step * g[i];
            }
            for (gr, &m) in groups.iter().zip(&means) {
                let mt = group_mean(&trial, gr);
                if m != 0.0 && sign(mt) != sign(m) {
                    let aa: f64 = gr.iter().map(|&(_, w)| w * w).sum();
                    for &(n, w) in gr {
                        trial[n] -= w * mt / aa;
                    }
                }
            }
            let et = energy(&q, &trial, &groups, hyper, &mut scratch);
            if et <= e {
                std::mem::swap(&mut u, &mut trial);
                steps.push((e, et));
                step *= 1.1;
                let rel = (e - et) / e.abs().max(f64::MIN_POSITIVE);
                if rel <= cfg.rel_tol {
                    grid.values_mut().copy_from_slice(&u);
                    return Ok(GridMinResult {
                        grid,
                        energy: et,
                        iterations: it + 1,
                        steps,
                    });
                }
                break;
            }
            step *= 0.5;
            if step < cfg.initial_step * 1e-30 {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: e,
                });
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: last_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(x: f64, eps: f64) -> f64 {
        sign(x) * -(-x.abs() / eps.sqrt()).exp_m1()
    }

    fn one_point() -> (PointCloud, Domain, PhaseHyperParams) {
        let pc = PointCloud::new(1, vec![0.0], None).unwrap();
        let hyper = PhaseHyperParams {
            epsilon: 0.01,
            lambda: 1.0,
            ..Default::default()
        };
        (pc, Domain::cube(1, -1.0, 1.0), hyper)
    }

    #[test]
    fn one_dimensional_transition_profile() {
        let (pc, dom, hyper) = one_point();
        let r = minimize_grid_functional(&pc, &dom, &hyper, &GridMinConfig::new(vec![400]), &mut RngState::new(1))
            .unwrap();
        let mut worst = 0.0f64;
        for i in 0..r.grid.len() {
            let x = r.grid.axis_coord(0, i);
            if (0.1..=0.7).contains(&x.abs()) {
                worst = worst.max((r.grid.values()[i] - profile(x, 0.01)).abs());
            }
        }
        assert!(worst <= 0.05, "profile error {worst}");
        let ratio = wch_grid_energy(&r.grid, 0.01) / 0.1;
        assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
        assert!(r.steps.iter().all(|(a, b)| b <= a));
    }

    #[test]
    fn refinement_agrees_within_truncation_estimate() {
        let (pc, dom, hyper) = one_point();
        let run = |res| {
            minimize_grid_functional(&pc, &dom, &hyper, &GridMinConfig::new(vec![res]), &mut RngState::new(1))
                .unwrap()
                .grid
        };
        let (a, b) = (run(200), run(400));
        let diff = (0..a.len())
            .map(|i| (a.values()[i] - b.values()[2 * i]).abs())
            .fold(0.0, f64::max);
        let estimate = a.spacing(0) / 0.01f64.sqrt();
        assert!(diff <= 2.0 * estimate, "diff {diff} vs estimate {estimate}");
    }

    #[test]
    fn pure_well_descent_reaches_nearest_well() {
        let (pc, dom, mut hyper) = one_point();
        hyper.lambda = 0.0;
        let cfg = GridMinConfig {
            init: GridInit::Constant(0.3),
            ..GridMinConfig::new(vec![50])
        };
        let r = minimize_grid_functional(&pc, &dom, &hyper, &cfg, &mut RngState::new(1)).unwrap();
        assert!(r.grid.values().iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn two_dimensional_energy_decreases() {
        let mut pts = Vec::new();
        for i in 0..40 {
            let t = std::f64::consts::TAU * i as f64 / 40.0;
            pts.extend([0.5 * t.cos(), 0.5 * t.sin()]);
        }
        let pc = PointCloud::new(2, pts, None).unwrap();
        let hyper = PhaseHyperParams {
            epsilon: 0.01,
            lambda: 1.0,
            ..Default::default()
        };
        let cfg = GridMinConfig {
            init: GridInit::Values(
                ScalarGrid::from_fn(Domain::cube(2, -1.0, 1.0), vec![40, 40], |x| {
                    ((x[0] * x[0] + x[1] * x[1]).sqrt() - 0.5).clamp(-1.0, 1.0)
                })
                .unwrap()
                .into_values(),
            ),
            max_iterations: 200_000,
            rel_tol: 1e-6,
            ..GridMinConfig::new(vec![40, 40])
        };
        let r = minimize_grid_functional(&pc, &Domain::cube(2, -1.0, 1.0), &hyper, &cfg, &mut RngState::new(3))
            .unwrap();
        assert!(r.steps.iter().all(|(a, b)| b <= a));
        let centre = r.grid.get(&[20, 20]);
        let corner = r.grid.get(&[0, 0]);
        assert!(centre < -0.9 && corner > 0.9, "{centre} {corner}");
    }

    #[test]
    fn rejects_three_dimensions() {
        let pc = PointCloud::new(3, vec![0.0; 3], None).unwrap();
        let r = minimize_grid_functional(
            &pc,
            &Domain::cube(3, -1.0, 1.0),
            &PhaseHyperParams::default(),
            &GridMinConfig::new(vec![4, 4, 4]),
            &mut RngState::new(1),
        );
        assert!(r.is_err());
    }
}
