//! Batched evaluation and differentiation of the field network.
//!
//! Spatial gradients are carried forward as `d` tangent blocks stacked under the value
//! block, so every linear layer is a single GEMM over `n (1 + d)` rows. Parameter
//! gradients of losses that depend on `(u, ∇ₓu)` are then obtained by reverse accumulation
//! through that augmented graph; the tangent path contributes the mixed second-order terms
//! through `σ''`.

use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;

use super::{fourier_features, fourier_jacobian, Network};
use crate::error::{Error, Result};

/// Points per chunk. Fixed so the reduction order does not depend on the thread count.
const CHUNK: usize = 256;
/// Tapes are kept between the forward and backward passes below this size, else recomputed.
const TAPE_BUDGET_BYTES: usize = 768 << 20;

struct LayerTape {
    /// Layer input as multiplied (after the skip concatenation), `rows × fan_in`.
    input: Vec<f64>,
    /// Pre-activations, `rows × fan_out`.
    pre: Vec<f64>,
}

struct ChunkTape {
    n: usize,
    blocks: usize,
    layers: Vec<LayerTape>,
}

/// Field values (and gradients when requested) for a batch of points.
pub struct BatchEval {
    pub u: Vec<f64>,
    /// Flat `n × dim`; empty when gradients were not requested.
    pub grad: Vec<f64>,
    with_grad: bool,
    tapes: Option<Vec<ChunkTape>>,
}

impl BatchEval {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// One additive term of a loss evaluated on the field at its own sample points.
pub trait FieldTerm: Sync {
    fn name(&self) -> &str;

    /// Flat sample points, stride = field dimension.
    fn points(&self) -> &[f64];

    fn needs_grad(&self) -> bool;

    /// Returns the term value and writes `∂value/∂u` and `∂value/∂∇u` per point.
    /// `grad` and `dgrad` are empty when [`FieldTerm::needs_grad`] is false.
    fn evaluate(&self, dim: usize, u: &[f64], grad: &[f64], du: &mut [f64], dgrad: &mut [f64])
        -> f64;
}

/// A weighted sum of field terms.
#[derive(Default)]
pub struct LossRecipe<'a> {
    pub terms: Vec<(f64, &'a dyn FieldTerm)>,
}

impl<'a> LossRecipe<'a> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn term(mut self, weight: f64, term: &'a dyn FieldTerm) -> Self {
        self.terms.push((weight, term));
        self
    }
}

/// Loss value, per-term breakdown and `∂loss/∂θ`.
#[derive(Debug, Clone)]
pub struct LossGradient {
    pub total: f64,
    /// `(name, weight, unweighted value)`; zero-weight terms are skipped and report 0.
    pub terms: Vec<(String, f64, f64)>,
    pub grad: Vec<f64>,
}

/// Gradient of a weighted loss with respect to every network parameter.
pub fn loss_param_gradient(net: &Network, recipe: &LossRecipe<'_>) -> Result<LossGradient> {
    let dim = net.config().dim;
    let mut grad = vec![0.0; net.layout().len];
    let mut total = 0.0;
    let mut terms = Vec::with_capacity(recipe.terms.len());
    for &(weight, term) in &recipe.terms {
        if weight == 0.0 {
            terms.push((term.name().to_string(), weight, 0.0));
            continue;
        }
        let pts = term.points();
        let with_grad = term.needs_grad();
        let keep = tape_bytes(net, pts.len() / dim, with_grad) <= TAPE_BUDGET_BYTES;
        let eval = forward_batch(net, pts, with_grad, keep)?;
        let mut du = vec![0.0; eval.u.len()];
        let mut dg = vec![0.0; eval.grad.len()];
        let value = term.evaluate(dim, &eval.u, &eval.grad, &mut du, &mut dg);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss term '{}'", term.name())));
        }
        du.iter_mut().for_each(|v| *v *= weight);
        dg.iter_mut().for_each(|v| *v *= weight);
        backward_batch(net, pts, eval, &du, &dg, &mut grad)?;
        total += weight * value;
        terms.push((term.name().to_string(), weight, value));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("parameter gradient (entry {i})")));
    }
    Ok(LossGradient { total, terms, grad })
}

fn tape_bytes(net: &Network, n: usize, with_grad: bool) -> usize {
    let blocks = if with_grad { 1 + net.config().dim } else { 1 };
    let per_row: usize = net
        .layout()
        .layers
        .iter()
        .map(|s| s.fan_in + s.fan_out)
        .sum();
    n * blocks * per_row * 8
}

pub(crate) fn forward_batch(
    net: &Network,
    xs: &[f64],
    with_grad: bool,
    keep_tapes: bool,
) -> Result<BatchEval> {
    let dim = net.config().dim;
    if xs.len() % dim != 0 {
        return Err(Error::invalid("point buffer length is not a multiple of dim"));
    }
    let results: Vec<(Vec<f64>, Vec<f64>, Option<ChunkTape>)> = xs
        .par_chunks(CHUNK * dim)
        .map(|c| forward_chunk(net, c, with_grad, keep_tapes))
        .collect();
    let n = xs.len() / dim;
    let mut u = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(if with_grad { n * dim } else { 0 });
    let mut tapes = keep_tapes.then(Vec::new);
    for (cu, cg, tape) in results {
        u.extend_from_slice(&cu);
        grad.extend_from_slice(&cg);
        if let (Some(t), Some(tape)) = (tapes.as_mut(), tape) {
            t.push(tape);
        }
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network output at point {i}")));
    }
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network gradient at point {}", i / dim)));
    }
    Ok(BatchEval {
        u,
        grad,
        with_grad,
        tapes,
    })
}

fn backward_batch(
    net: &Network,
    xs: &[f64],
    eval: BatchEval,
    du: &[f64],
    dg: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    let dim = net.config().dim;
    let with_grad = eval.with_grad;
    let chunks: Vec<&[f64]> = xs.chunks(CHUNK * dim).collect();
    let mut tapes: Vec<Option<ChunkTape>> = match eval.tapes {
        Some(t) => t.into_iter().map(Some).collect(),
        None => chunks.iter().map(|_| None).collect(),
    };
    let window = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < chunks.len() {
        let end = (start + window).min(chunks.len());
        let partials: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .zip(tapes[start..end].par_iter_mut())
            .map(|(c, tape)| {
                let tape = match tape.take() {
                    Some(t) => t,
                    None => forward_chunk(net, chunks[c], with_grad, true).2.unwrap(),
                };
                let p0 = c * CHUNK;
                let p1 = p0 + tape.n;
                let dgc = if with_grad { &dg[p0 * dim..p1 * dim] } else { &[][..] };
                let mut g = vec![0.0; grad.len()];
                backward_chunk(net, &tape, &du[p0..p1], dgc, &mut g);
                g
            })
            .collect();
        for p in partials {
            for (a, b) in grad.iter_mut().zip(&p) {
                *a += b;
            }
        }
        start = end;
    }
    Ok(())
}

fn forward_chunk(
    net: &Network,
    xs: &[f64],
    with_grad: bool,
    keep: bool,
) -> (Vec<f64>, Vec<f64>, Option<ChunkTape>) {
    let cfg = net.config();
    let theta = net.theta();
    let d = cfg.dim;
    let n = xs.len() / d;
    let blocks = if with_grad { 1 + d } else { 1 };
    let rows = n * blocks;
    let enc_dim = cfg.encoded_dim();
    let k = cfg.fourier_k;

    let mut enc = vec![0.0; rows * enc_dim];
    for i in 0..n {
        let x = &xs[i * d..(i + 1) * d];
        let row = &mut enc[i * enc_dim..(i + 1) * enc_dim];
        row[..d].copy_from_slice(x);
        if k > 0 {
            row[d..].copy_from_slice(&fourier_features(x, k, cfg.fourier_offset));
        }
        if with_grad {
            for j in 0..d {
                let r = (1 + j) * n + i;
                let trow = &mut enc[r * enc_dim..(r + 1) * enc_dim];
                trow[j] = 1.0;
                if k > 0 {
                    trow[d..].copy_from_slice(&fourier_jacobian(x, k, cfg.fourier_offset, j));
                }
            }
        }
    }

    let act = cfg.activation;
    let layers = &net.layout().layers;
    let mut tape = Vec::with_capacity(if keep { layers.len() } else { 0 });
    let mut a = enc.clone();
    let mut u = Vec::new();
    let mut grad = Vec::new();
    for (l, span) in layers.iter().enumerate() {
        let (fi, fo) = (span.fan_in, span.fan_out);
        let input = if cfg.skip_at != 0 && l == cfg.skip_at {
            let prev = fi - enc_dim;
            let mut cat = vec![0.0; rows * fi];
            for r in 0..rows {
                let dst = &mut cat[r * fi..(r + 1) * fi];
                for (o, s) in dst[..prev].iter_mut().zip(&a[r * prev..(r + 1) * prev]) {
                    *o = s * FRAC_1_SQRT_2;
                }
                for (o, s) in dst[prev..]
                    .iter_mut()
                    .zip(&enc[r * enc_dim..(r + 1) * enc_dim])
                {
                    *o = s * FRAC_1_SQRT_2;
                }
            }
            cat
        } else {
            std::mem::take(&mut a)
        };
        let mut z = vec![0.0; rows * fo];
        let w = &theta[span.weight..span.bias];
        // z = input · Wᵀ
        gemm(rows, fi, fo, &input, fi, 1, w, 1, fi, &mut z, fo, 1, 0.0);
        let b = &theta[span.bias..span.bias + fo];
        for i in 0..n {
            for (zv, bv) in z[i * fo..(i + 1) * fo].iter_mut().zip(b) {
                *zv += bv;
            }
        }
        if l + 1 == layers.len() {
            u = z[..n].to_vec();
            if with_grad {
                grad = vec![0.0; n * d];
                for i in 0..n {
                    for j in 0..d {
                        grad[i * d + j] = z[(1 + j) * n + i];
                    }
                }
            }
        } else {
            let mut next = vec![0.0; rows * fo];
            for i in 0..n {
                for c in 0..fo {
                    let (s, s1, _) = act.eval(z[i * fo + c]);
                    next[i * fo + c] = s;
                    for j in 0..blocks - 1 {
                        let idx = ((1 + j) * n + i) * fo + c;
                        next[idx] = s1 * z[idx];
                    }
                }
            }
            a = next;
        }
        if keep {
            tape.push(LayerTape { input, pre: z });
        }
    }
    let tape = keep.then_some(ChunkTape {
        n,
        blocks,
        layers: tape,
    });
    (u, grad, tape)
}

fn backward_chunk(net: &Network, tape: &ChunkTape, du: &[f64], dg: &[f64], grad: &mut [f64]) {
    let cfg = net.config();
    let theta = net.theta();
    let layers = &net.layout().layers;
    let act = cfg.activation;
    let d = cfg.dim;
    let n = tape.n;
    let blocks = tape.blocks;
    let rows = n * blocks;

    let mut dz = vec![0.0; rows];
    dz[..n].copy_from_slice(du);
    if blocks > 1 {
        for i in 0..n {
            for j in 0..d {
                dz[(1 + j) * n + i] = dg[i * d + j];
            }
        }
    }
    for l in (0..layers.len()).rev() {
        let span = layers[l];
        let (fi, fo) = (span.fan_in, span.fan_out);
        let input = &tape.layers[l].input;
        // ∂W += dzᵀ · input
        gemm(
            fo,
            rows,
            fi,
            &dz,
            1,
            fo,
            input,
            fi,
            1,
            &mut grad[span.weight..span.bias],
            fi,
            1,
            1.0,
        );
        for i in 0..n {
            for (g, v) in grad[span.bias..span.bias + fo]
                .iter_mut()
                .zip(&dz[i * fo..(i + 1) * fo])
            {
                *g += v;
            }
        }
        if l == 0 {
            break;
        }
        let w = &theta[span.weight..span.bias];
        let mut dinput = vec![0.0; rows * fi];
        gemm(rows, fo, fi, &dz, fo, 1, w, fi, 1, &mut dinput, fi, 1, 0.0);
        let pfo = layers[l - 1].fan_out;
        let da = if cfg.skip_at != 0 && l == cfg.skip_at {
            let mut da = vec![0.0; rows * pfo];
            for r in 0..rows {
                for (o, s) in da[r * pfo..(r + 1) * pfo]
                    .iter_mut()
                    .zip(&dinput[r * fi..r * fi + pfo])
                {
                    *o = s * FRAC_1_SQRT_2;
                }
            }
            da
        } else {
            dinput
        };
        let pre = &tape.layers[l - 1].pre;
        let mut next = vec![0.0; rows * pfo];
        for i in 0..n {
            for c in 0..pfo {
                let (_, s1, s2) = act.eval(pre[i * pfo + c]);
                let mut acc = s1 * da[i * pfo + c];
                for j in 0..blocks - 1 {
                    let idx = ((1 + j) * n + i) * pfo + c;
                    acc += s2 * pre[idx] * da[idx];
                    next[idx] = s1 * da[idx];
                }
                next[i * pfo + c] = acc;
            }
        }
        dz = next;
    }
}

/// `C = A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + usize::from(k > 0));
    assert!(b.len() >= (k.max(1) - 1) * rsb + (n - 1) * csb + usize::from(k > 0));
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Activation, MlpConfig, ParamVector};
    use crate::geometry::RngState;

    struct ValueSquared(Vec<f64>);

    impl FieldTerm for ValueSquared {
        fn name(&self) -> &str {
            "u^2"
        }
        fn points(&self) -> &[f64] {
            &self.0
        }
        fn needs_grad(&self) -> bool {
            false
        }
        fn evaluate(&self, _: usize, u: &[f64], _: &[f64], du: &mut [f64], _: &mut [f64]) -> f64 {
            let n = u.len() as f64;
            for (d, v) in du.iter_mut().zip(u) {
                *d = 2.0 * v / n;
            }
            u.iter().map(|v| v * v).sum::<f64>() / n
        }
    }

    struct GradNormSquared(Vec<f64>);

    impl FieldTerm for GradNormSquared {
        fn name(&self) -> &str {
            "|grad u|^2"
        }
        fn points(&self) -> &[f64] {
            &self.0
        }
        fn needs_grad(&self) -> bool {
            true
        }
        fn evaluate(&self, dim: usize, u: &[f64], g: &[f64], _: &mut [f64], dg: &mut [f64]) -> f64 {
            let n = u.len() as f64;
            for (d, v) in dg.iter_mut().zip(g) {
                *d = 2.0 * v / n;
            }
            let _ = dim;
            g.iter().map(|v| v * v).sum::<f64>() / n
        }
    }

    fn net(dim: usize, depth: usize, width: usize, k: usize, seed: u64) -> Network {
        let cfg = MlpConfig {
            dim,
            depth,
            width,
            skip_at: if depth > 2 { 2 } else { 0 },
            activation: Activation::Softplus { beta: 100.0 },
            fourier_k: k,
            fourier_offset: 0,
        };
        let layout = cfg.layout();
        let mut rng = RngState::new(seed);
        let mut p = ParamVector::zeros(&layout);
        for s in &layout.layers {
            let sc = 1.0 / (s.fan_in as f64).sqrt();
            for v in &mut p.theta[s.weight..s.bias + s.fan_out] {
                *v = sc * rng.normal();
            }
        }
        Network::new(cfg, p).unwrap()
    }

    fn fd_param(net: &Network, recipe: &LossRecipe<'_>, idx: usize, h: f64) -> f64 {
        let mut plus = net.clone();
        plus.theta_mut()[idx] += h;
        let mut minus = net.clone();
        minus.theta_mut()[idx] -= h;
        let lp = loss_param_gradient(&plus, recipe).unwrap().total;
        let lm = loss_param_gradient(&minus, recipe).unwrap().total;
        (lp - lm) / (2.0 * h)
    }

    #[test]
    fn value_squared_on_affine_net_is_closed_form() {
        let cfg = MlpConfig {
            depth: 1,
            skip_at: 0,
            ..MlpConfig::new(2)
        };
        let p = ParamVector {
            theta: vec![0.7, -1.3, 0.4],
        };
        let net = Network::new(cfg, p).unwrap();
        let x0 = vec![0.25, 0.5];
        let term = ValueSquared(x0.clone());
        let g = loss_param_gradient(&net, &LossRecipe::new().term(1.0, &term)).unwrap();
        let r = 0.7 * 0.25 - 1.3 * 0.5 + 0.4;
        assert!((g.grad[0] - 2.0 * r * x0[0]).abs() < 1e-15);
        assert!((g.grad[1] - 2.0 * r * x0[1]).abs() < 1e-15);
        assert!((g.grad[2] - 2.0 * r).abs() < 1e-15);
    }

    #[test]
    fn grad_norm_loss_matches_parameter_finite_differences() {
        let net = net(2, 4, 16, 0, 17);
        let x0 = vec![0.3, -0.2];
        let term = GradNormSquared(x0);
        let recipe = LossRecipe::new().term(1.0, &term);
        let g = loss_param_gradient(&net, &recipe).unwrap();
        let mut rng = RngState::new(4);
        for _ in 0..20 {
            let idx = rng.index(net.layout().len);
            let fd = fd_param(&net, &recipe, idx, 1e-5);
            let err = (fd - g.grad[idx]).abs() / g.grad[idx].abs().max(1e-3);
            assert!(err <= 1e-3, "param {idx}: {fd} vs {}", g.grad[idx]);
        }
    }

    #[test]
    fn fourier_net_gradient_matches_finite_differences() {
        let net = net(3, 3, 48, 2, 5);
        let mut rng = RngState::new(8);
        let pts: Vec<f64> = (0..3 * 5).map(|_| rng.uniform() - 0.5).collect();
        let a = GradNormSquared(pts.clone());
        let b = ValueSquared(pts);
        let recipe = LossRecipe::new().term(0.5, &a).term(2.0, &b);
        let g = loss_param_gradient(&net, &recipe).unwrap();
        for _ in 0..20 {
            let idx = rng.index(net.layout().len);
            let fd = fd_param(&net, &recipe, idx, 1e-5);
            let err = (fd - g.grad[idx]).abs() / g.grad[idx].abs().max(1e-3);
            assert!(err <= 1e-3, "param {idx}: {fd} vs {}", g.grad[idx]);
        }
    }

    #[test]
    fn zero_weight_term_contributes_nothing() {
        let net = net(2, 3, 16, 0, 1);
        let a = ValueSquared(vec![0.1, 0.2]);
        let b = GradNormSquared(vec![0.3, 0.4, -0.1, 0.0]);
        let only_a = loss_param_gradient(&net, &LossRecipe::new().term(1.0, &a)).unwrap();
        let both = loss_param_gradient(&net, &LossRecipe::new().term(1.0, &a).term(0.0, &b)).unwrap();
        assert_eq!(only_a.grad, both.grad);
        assert_eq!(only_a.total, both.total);
    }

    #[test]
    fn recomputed_tapes_agree_with_kept_tapes() {
        let net = net(2, 4, 16, 0, 3);
        let mut rng = RngState::new(1);
        let pts: Vec<f64> = (0..2 * 600).map(|_| rng.uniform()).collect();
        let du: Vec<f64> = (0..600).map(|_| rng.normal()).collect();
        let dg: Vec<f64> = (0..1200).map(|_| rng.normal()).collect();
        let mut g1 = vec![0.0; net.layout().len];
        let mut g2 = vec![0.0; net.layout().len];
        let e1 = forward_batch(&net, &pts, true, true).unwrap();
        backward_batch(&net, &pts, e1, &du, &dg, &mut g1).unwrap();
        let e2 = forward_batch(&net, &pts, true, false).unwrap();
        backward_batch(&net, &pts, e2, &du, &dg, &mut g2).unwrap();
        assert_eq!(g1, g2);
    }
}
