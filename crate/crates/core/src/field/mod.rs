//! The scalar field `u(x; θ)`: an MLP with an optional Fourier encoding and a single skip
//! connection, plus the machinery to differentiate losses that contain `∇ₓu`.

mod checkpoint;
mod engine;
mod fourier;
mod init;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use engine::{loss_param_gradient, BatchEval, FieldTerm, LossGradient, LossRecipe};
pub use fourier::{fourier_features, fourier_jacobian};
pub use init::geometric_init;

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// `log(1 + exp(βz)) / β`.
    Softplus { beta: f64 },
}

impl Activation {
    /// Above this value of `βz` softplus is evaluated by its linear asymptote.
    pub const SOFTPLUS_LINEAR_THRESHOLD: f64 = 30.0;

    /// Returns `(σ(z), σ'(z), σ''(z))`. ReLU takes the subgradient 0 at the kink.
    #[inline]
    pub fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::Softplus { beta } => {
                let bz = beta * z;
                if bz > Self::SOFTPLUS_LINEAR_THRESHOLD {
                    (z, 1.0, 0.0)
                } else {
                    let e = bz.exp();
                    let s = 1.0 / (1.0 + (-bz).exp());
                    (e.ln_1p() / beta, s, beta * s * (1.0 - s))
                }
            }
        }
    }
}

/// Architecture of the field network.
///
/// `depth` counts linear layers (the last one maps to the scalar output), so `depth = 1`
/// is an affine function of the encoded input. `skip_at = 0` disables the skip connection;
/// otherwise the input of linear layer `skip_at` is `[a, enc(x)] / √2`, where the previous
/// layer narrows to `width - enc_dim` units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub dim: usize,
    pub depth: usize,
    pub width: usize,
    pub skip_at: usize,
    pub activation: Activation,
    /// Number of Fourier frequencies; 0 feeds raw coordinates only.
    pub fourier_k: usize,
    /// First frequency exponent, so frequencies are `2^ω π` for `ω ∈ offset..offset+k`.
    pub fourier_offset: u32,
}

impl MlpConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            depth: 8,
            width: 512,
            skip_at: 4,
            activation: Activation::Softplus { beta: 100.0 },
            fourier_k: 0,
            fourier_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("field dimension must be 1, 2 or 3 (got {})", self.dim));
        }
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.width < 1 {
            return bad("width must be at least 1".into());
        }
        if self.skip_at != 0 {
            if self.skip_at >= self.depth {
                return bad(format!(
                    "skip_at must satisfy 1 <= skip_at < depth ({} vs {})",
                    self.skip_at, self.depth
                ));
            }
            if self.width <= self.encoded_dim() {
                return bad(format!(
                    "width {} must exceed the encoded input size {} when a skip connection is used",
                    self.width,
                    self.encoded_dim()
                ));
            }
        }
        if let Activation::Softplus { beta } = self.activation {
            if !(beta > 0.0) {
                return bad(format!("softplus beta must be positive (got {beta})"));
            }
        }
        Ok(())
    }

    /// Width of the first-layer input: raw coordinates followed by `2kd` Fourier features.
    pub fn encoded_dim(&self) -> usize {
        self.dim * (1 + 2 * self.fourier_k)
    }

    /// `(fan_in, fan_out)` of every linear layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let enc = self.encoded_dim();
        (0..self.depth)
            .map(|l| {
                let fan_in = if l == 0 { enc } else { self.width };
                let fan_out = if l + 1 == self.depth {
                    1
                } else if self.skip_at != 0 && l + 1 == self.skip_at {
                    self.width - enc
                } else {
                    self.width
                };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn layout(&self) -> Layout {
        let mut layers = Vec::with_capacity(self.depth);
        let mut off = 0;
        for (fan_in, fan_out) in self.layer_shapes() {
            layers.push(LayerSpan {
                weight: off,
                bias: off + fan_in * fan_out,
                fan_in,
                fan_out,
            });
            off += fan_in * fan_out + fan_out;
        }
        Layout { layers, len: off }
    }
}

/// Offsets of one layer inside the flat parameter vector. Weights are row-major `fan_out × fan_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub layers: Vec<LayerSpan>,
    pub len: usize,
}

/// Flat parameter vector θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub theta: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            theta: vec![0.0; layout.len],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn check(&self, layout: &Layout) -> Result<()> {
        if self.theta.len() != layout.len {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, layout expects {}",
                self.theta.len(),
                layout.len
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameters".into()));
        }
        Ok(())
    }
}

/// A field value with its spatial gradient, optionally with the log-transformed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub u: f64,
    pub grad_x: Vec<f64>,
    pub w: Option<f64>,
    pub grad_w: Option<Vec<f64>>,
}

/// Anything that can be evaluated as a differentiable scalar field.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    fn value_and_grad(&self, x: &[f64]) -> Result<FieldEval>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.value_and_grad(x).map(|e| e.u)
    }

    /// Values at flat points (stride `dim`).
    fn values(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.chunks(self.dim()).map(|x| self.value(x)).collect()
    }

    /// Values and flat gradients at flat points.
    fn values_and_grads(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut u = Vec::with_capacity(xs.len() / self.dim());
        let mut g = Vec::with_capacity(xs.len());
        for x in xs.chunks(self.dim()) {
            let e = self.value_and_grad(x)?;
            u.push(e.u);
            g.extend_from_slice(&e.grad_x);
        }
        Ok((u, g))
    }
}

/// A closed-form field given by a closure returning `(u, ∇u)`.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<FieldEval> {
        let (u, grad_x) = (self.f)(x);
        Ok(FieldEval {
            u,
            grad_x,
            w: None,
            grad_w: None,
        })
    }
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: MlpConfig,
    layout: Layout,
    params: ParamVector,
}

impl Network {
    pub fn new(config: MlpConfig, params: ParamVector) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        params.check(&layout)?;
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn theta(&self) -> &[f64] {
        &self.params.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.params.theta
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    /// `u(x; θ)` at a single point.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.eval_batch(x, false)?.u[0])
    }

    /// `u` and the exact `∇ₓu` at a single point.
    pub fn forward_with_grad(&self, x: &[f64]) -> Result<FieldEval> {
        self.check_point(x)?;
        let b = self.eval_batch(x, true)?;
        Ok(FieldEval {
            u: b.u[0],
            grad_x: b.grad,
            w: None,
            grad_w: None,
        })
    }

    /// Batched evaluation at flat points; `grad` is empty unless `with_grad`.
    pub fn eval_batch(&self, xs: &[f64], with_grad: bool) -> Result<BatchEval> {
        engine::forward_batch(self, xs, with_grad, false)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.dim {
            return Err(Error::invalid(format!(
                "point has {} coordinates, field expects {}",
                x.len(),
                self.config.dim
            )));
        }
        Ok(())
    }
}

impl ScalarField for Network {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<FieldEval> {
        self.forward_with_grad(x)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.forward(x)
    }

    fn values(&self, xs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_batch(xs, false)?.u)
    }

    fn values_and_grads(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = self.eval_batch(xs, true)?;
        Ok((b.u, b.grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RngState;

    pub(crate) fn random_net(cfg: MlpConfig, seed: u64, scale: f64) -> Network {
        let layout = cfg.layout();
        let mut rng = RngState::new(seed);
        let mut p = ParamVector::zeros(&layout);
        for span in &layout.layers {
            let s = scale / (span.fan_in as f64).sqrt();
            for v in &mut p.theta[span.weight..span.bias] {
                *v = s * rng.normal();
            }
            for v in &mut p.theta[span.bias..span.bias + span.fan_out] {
                *v = 0.1 * rng.normal();
            }
        }
        Network::new(cfg, p).unwrap()
    }

    fn small_cfg(dim: usize, act: Activation) -> MlpConfig {
        MlpConfig {
            dim,
            depth: 4,
            width: 24,
            skip_at: 2,
            activation: act,
            fourier_k: 0,
            fourier_offset: 0,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = MlpConfig::new(2);
        assert!(c.validate().is_ok());
        c.skip_at = 8;
        assert!(c.validate().is_err());
        c.skip_at = 0;
        c.activation = Activation::Softplus { beta: 0.0 };
        assert!(c.validate().is_err());
        let mut c = MlpConfig::new(3);
        c.width = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn layout_counts_parameters() {
        let c = small_cfg(2, Activation::Relu);
        let l = c.layout();
        // 2->24, 24->22 (narrowed before skip), 24->24, 24->1
        let expected = (2 * 24 + 24) + (24 * 22 + 22) + (24 * 24 + 24) + (24 + 1);
        assert_eq!(l.len, expected);
        assert_eq!(l.layers[1].fan_out, 22);
    }

    #[test]
    fn affine_net_is_exact() {
        let cfg = MlpConfig {
            depth: 1,
            skip_at: 0,
            ..MlpConfig::new(3)
        };
        let p = ParamVector {
            theta: vec![0.5, -2.0, 3.0, 0.25],
        };
        let net = Network::new(cfg, p).unwrap();
        let x = [1.0, 2.0, -1.0];
        let expected = 0.5 * 1.0 - 2.0 * 2.0 + 3.0 * -1.0 + 0.25;
        assert_eq!(net.forward(&x).unwrap(), expected);
        let e = net.forward_with_grad(&x).unwrap();
        assert_eq!(e.u, expected);
        assert_eq!(e.grad_x, vec![0.5, -2.0, 3.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let net = random_net(small_cfg(3, Activation::Softplus { beta: 100.0 }), 4, 1.0);
        let x = [0.1, -0.4, 0.7];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    fn fd_grad(net: &Network, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += h;
                xm[j] -= h;
                (net.forward(&xp).unwrap() - net.forward(&xm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
        num / den
    }

    #[test]
    fn softplus_input_gradient_matches_finite_differences() {
        let mut rng = RngState::new(9);
        let cfg = small_cfg(2, Activation::Softplus { beta: 100.0 });
        for trial in 0..100 {
            let net = random_net(cfg.clone(), 100 + trial, 1.0);
            let x = [rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0];
            let g = net.forward_with_grad(&x).unwrap().grad_x;
            assert!(rel_err(&g, &fd_grad(&net, &x, 1e-5)) <= 1e-4, "trial {trial}");
        }
    }

    #[test]
    fn relu_input_gradient_away_from_kinks() {
        let mut rng = RngState::new(19);
        let net = random_net(small_cfg(3, Activation::Relu), 5, 1.0);
        let mut checked = 0;
        while checked < 50 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let g = net.forward_with_grad(&x).unwrap().grad_x;
            let fd = fd_grad(&net, &x, 1e-7);
            // points whose FD stencil straddles a kink are skipped
            let fd2 = fd_grad(&net, &x, 5e-8);
            if rel_err(&fd, &fd2) > 1e-6 {
                continue;
            }
            assert!(rel_err(&g, &fd) <= 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn directional_derivative_property() {
        let mut rng = RngState::new(21);
        let cfg = MlpConfig {
            fourier_k: 2,
            width: 32,
            ..small_cfg(3, Activation::Softplus { beta: 100.0 })
        };
        for trial in 0..100 {
            let net = random_net(cfg.clone(), 300 + trial, 1.0);
            let x: Vec<f64> = (0..3).map(|_| rng.uniform() * 2.0 - 1.0).collect();
            let mut v: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let n = crate::geometry::norm(&v);
            v.iter_mut().for_each(|c| *c /= n);
            let h = 1e-5;
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let fd = (net.forward(&xp).unwrap() - net.forward(&xm).unwrap()) / (2.0 * h);
            let g = net.forward_with_grad(&x).unwrap().grad_x;
            let dd: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            let scale = crate::geometry::norm(&g).max(1e-8);
            assert!((fd - dd).abs() / scale <= 1e-4, "trial {trial}: {fd} vs {dd}");
        }
    }

    #[test]
    fn batch_matches_single_point() {
        let net = random_net(small_cfg(2, Activation::Softplus { beta: 100.0 }), 8, 1.0);
        let mut rng = RngState::new(2);
        let xs: Vec<f64> = (0..2 * 700).map(|_| rng.uniform() - 0.5).collect();
        let b = net.eval_batch(&xs, true).unwrap();
        for (i, x) in xs.chunks(2).enumerate() {
            let e = net.forward_with_grad(x).unwrap();
            assert_eq!(e.u.to_bits(), b.u[i].to_bits());
            assert_eq!(e.grad_x[0].to_bits(), b.grad[2 * i].to_bits());
        }
    }

    #[test]
    fn softplus_asymptote_is_continuous() {
        let act = Activation::Softplus { beta: 100.0 };
        let z = Activation::SOFTPLUS_LINEAR_THRESHOLD / 100.0;
        let below = act.eval(z - 1e-12).0;
        let above = act.eval(z + 1e-12).0;
        assert!((below - above).abs() < 1e-11);
        assert_eq!(act.eval(-50.0).0, 0.0);
        assert_eq!(Activation::Relu.eval(0.0), (0.0, 0.0, 0.0));
    }
}
