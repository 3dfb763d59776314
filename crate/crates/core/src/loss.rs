//! Terms of the phase-field objective
//! `λ L(u) + E[ε‖∇u‖² + W(u)] + μ N(u)`.
//!
//! Every term is a [`FieldTerm`] so the same code computes its value for diagnostics and
//! its adjoints for training.

use crate::error::{Error, Result};
use crate::field::{FieldTerm, LossRecipe, ScalarField};
use crate::geometry::{sample_near_data, sample_uniform, Domain, PointCloud, RngState};
use crate::transform::TransformConfig;

/// Which normal/gradient constraint is added at the data points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalMode {
    /// `E‖n - ∇w‖^p`, needs input normals.
    Intr,
    /// `E|1 - ‖∇w‖|^p`.
    Unit,
    None,
}

impl std::str::FromStr for NormalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intr" => Ok(NormalMode::Intr),
            "unit" => Ok(NormalMode::Unit),
            "none" => Ok(NormalMode::None),
            other => Err(Error::Config(format!("unknown mode '{other}' (intr|unit|none)"))),
        }
    }
}

impl std::fmt::Display for NormalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalMode::Intr => "intr",
            NormalMode::Unit => "unit",
            NormalMode::None => "none",
        })
    }
}

/// All constants of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHyperParams {
    pub epsilon: f64,
    pub lambda: f64,
    /// `None` resolves to 10 with normals and 0.5 without.
    pub mu: Option<f64>,
    pub sigma: f64,
    pub samples_per_ball: usize,
    pub p_intr: f64,
    pub p_unit: f64,
    pub n_domain: usize,
    pub n_data: usize,
    pub mode: Option<NormalMode>,
    /// Multiply the double-well estimate by `|Ω|` (integral instead of mean form).
    pub volume_form: bool,
    /// Weight of `ε‖∇u‖²` inside the WCH term; 0 gives the unregularised functional.
    pub gradient_weight: f64,
}

impl Default for PhaseHyperParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            lambda: 10.0,
            mu: None,
            sigma: 1e-3,
            samples_per_ball: 1,
            p_intr: 1.0,
            p_unit: 2.0,
            n_domain: 8192,
            n_data: 8192,
            mode: None,
            volume_form: false,
            gradient_weight: 1.0,
        }
    }
}

impl PhaseHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive (got {})", self.epsilon));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative (got {})", self.lambda));
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0) {
                return bad(format!("mu must be non-negative (got {mu})"));
            }
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive (got {})", self.sigma));
        }
        if !(self.p_intr >= 1.0 && self.p_unit >= 1.0) {
            return bad("exponents p_intr and p_unit must be at least 1".into());
        }
        if self.samples_per_ball == 0 || self.n_domain == 0 || self.n_data == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(self.gradient_weight >= 0.0) {
            return bad("gradient_weight must be non-negative".into());
        }
        Ok(())
    }

    /// Mode actually used: explicit, or `intr` when normals exist and `unit` otherwise.
    pub fn resolved_mode(&self, has_normals: bool) -> NormalMode {
        self.mode.unwrap_or(if has_normals {
            NormalMode::Intr
        } else {
            NormalMode::Unit
        })
    }

    pub fn resolved_mu(&self, has_normals: bool) -> f64 {
        self.mu.unwrap_or(if has_normals { 10.0 } else { 0.5 })
    }

    pub fn transform(&self) -> TransformConfig {
        TransformConfig::new(self.epsilon)
    }
}

#[inline]
fn sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `W(s) = s² - 2|s| + 1 = (|s| - 1)²`.
pub fn double_well(s: f64) -> f64 {
    let t = s.abs() - 1.0;
    t * t
}

/// `W'(s) = 2s - 2 sign(s)`, with `W'(0) = 0`.
pub fn double_well_deriv(s: f64) -> f64 {
    2.0 * s - 2.0 * sign(s)
}

/// Monte-Carlo estimate of `∫ ε‖∇u‖² + W(u)` over uniform samples.
#[derive(Debug, Clone)]
pub struct WchTerm {
    pub points: Vec<f64>,
    pub epsilon: f64,
    pub gradient_weight: f64,
    /// `Some(|Ω|)` for the integral form, `None` for the mean.
    pub volume: Option<f64>,
}

impl FieldTerm for WchTerm {
    fn name(&self) -> &str {
        "wch"
    }

    fn points(&self) -> &[f64] {
        &self.points
    }

    fn needs_grad(&self) -> bool {
        true
    }

    fn evaluate(&self, dim: usize, u: &[f64], g: &[f64], du: &mut [f64], dg: &mut [f64]) -> f64 {
        let scale = self.volume.unwrap_or(1.0) / u.len() as f64;
        let ge = self.gradient_weight * self.epsilon;
        let mut sum = 0.0;
        for i in 0..u.len() {
            let gi = &g[i * dim..(i + 1) * dim];
            let n2: f64 = gi.iter().map(|v| v * v).sum();
            sum += ge * n2 + double_well(u[i]);
            du[i] = scale * double_well_deriv(u[i]);
            for (d, v) in dg[i * dim..(i + 1) * dim].iter_mut().zip(gi) {
                *d = scale * 2.0 * ge * v;
            }
        }
        scale * sum
    }
}

/// `mean over anchors of |mean of u over that anchor's ball samples|`.
#[derive(Debug, Clone)]
pub struct ReconstructionTerm {
    /// `samples_per_ball` consecutive points per anchor.
    pub points: Vec<f64>,
    pub samples_per_ball: usize,
}

impl FieldTerm for ReconstructionTerm {
    fn name(&self) -> &str {
        "recon"
    }

    fn points(&self) -> &[f64] {
        &self.points
    }

    fn needs_grad(&self) -> bool {
        false
    }

    fn evaluate(&self, _: usize, u: &[f64], _: &[f64], du: &mut [f64], _: &mut [f64]) -> f64 {
        let s = self.samples_per_ball;
        let groups = u.len() / s;
        let mut sum = 0.0;
        for k in 0..groups {
            let m = u[k * s..(k + 1) * s].iter().sum::<f64>() / s as f64;
            sum += m.abs();
            let d = sign(m) / (groups * s) as f64;
            du[k * s..(k + 1) * s].iter_mut().for_each(|v| *v = d);
        }
        sum / groups as f64
    }
}

/// `∇w` and its partial derivatives for one point: returns `(∇w, c, dc/du)` where `∇w = c ∇u`.
#[inline]
fn wgrad(u: f64, g: &[f64], tcfg: &TransformConfig) -> (Vec<f64>, f64, f64) {
    let a = u.abs().min(tcfg.clamp);
    let s = tcfg.epsilon.sqrt();
    let c = s / (1.0 - a);
    let dc = if u.abs() < tcfg.clamp {
        s * sign(u) / ((1.0 - a) * (1.0 - a))
    } else {
        0.0
    };
    (g.iter().map(|v| c * v).collect(), c, dc)
}

/// Writes the chain-rule adjoints for a per-point loss with gradient `df` w.r.t. `∇w`.
#[inline]
fn push_wgrad_adjoint(df: &[f64], g: &[f64], c: f64, dc: f64, scale: f64, du: &mut f64, dg: &mut [f64]) {
    let dot: f64 = df.iter().zip(g).map(|(a, b)| a * b).sum();
    *du = scale * dot * dc;
    for (o, d) in dg.iter_mut().zip(df) {
        *o = scale * c * d;
    }
}

/// `E‖n - ∇w‖^p` at data points.
#[derive(Debug, Clone)]
pub struct NormalAlignTerm {
    pub points: Vec<f64>,
    pub normals: Vec<f64>,
    pub transform: TransformConfig,
    pub p: f64,
}

impl FieldTerm for NormalAlignTerm {
    fn name(&self) -> &str {
        "normal"
    }

    fn points(&self) -> &[f64] {
        &self.points
    }

    fn needs_grad(&self) -> bool {
        true
    }

    fn evaluate(&self, dim: usize, u: &[f64], g: &[f64], du: &mut [f64], dg: &mut [f64]) -> f64 {
        let scale = 1.0 / u.len() as f64;
        let mut sum = 0.0;
        for i in 0..u.len() {
            let gi = &g[i * dim..(i + 1) * dim];
            let (gw, c, dc) = wgrad(u[i], gi, &self.transform);
            let e: Vec<f64> = self.normals[i * dim..(i + 1) * dim]
                .iter()
                .zip(&gw)
                .map(|(n, w)| n - w)
                .collect();
            let r = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            sum += r.powf(self.p);
            let df: Vec<f64> = if r > 0.0 {
                let k = -self.p * r.powf(self.p - 2.0);
                e.iter().map(|v| k * v).collect()
            } else {
                vec![0.0; dim]
            };
            push_wgrad_adjoint(&df, gi, c, dc, scale, &mut du[i], &mut dg[i * dim..(i + 1) * dim]);
        }
        scale * sum
    }
}

/// `E|1 - ‖∇w‖|^p` at data points.
#[derive(Debug, Clone)]
pub struct UnitGradientTerm {
    pub points: Vec<f64>,
    pub transform: TransformConfig,
    pub p: f64,
}

impl FieldTerm for UnitGradientTerm {
    fn name(&self) -> &str {
        "unit"
    }

    fn points(&self) -> &[f64] {
        &self.points
    }

    fn needs_grad(&self) -> bool {
        true
    }

    fn evaluate(&self, dim: usize, u: &[f64], g: &[f64], du: &mut [f64], dg: &mut [f64]) -> f64 {
        let scale = 1.0 / u.len() as f64;
        let mut sum = 0.0;
        for i in 0..u.len() {
            let gi = &g[i * dim..(i + 1) * dim];
            let (gw, c, dc) = wgrad(u[i], gi, &self.transform);
            let r = gw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dev = 1.0 - r;
            sum += dev.abs().powf(self.p);
            let df: Vec<f64> = if r > 0.0 {
                let k = self.p * dev.abs().powf(self.p - 1.0) * sign(-dev) / r;
                gw.iter().map(|v| k * v).collect()
            } else {
                vec![0.0; dim]
            };
            push_wgrad_adjoint(&df, gi, c, dc, scale, &mut du[i], &mut dg[i * dim..(i + 1) * dim]);
        }
        scale * sum
    }
}

/// Evaluates a term on an arbitrary field (no parameter gradient).
pub fn evaluate_term(field: &dyn ScalarField, term: &dyn FieldTerm) -> Result<f64> {
    let dim = field.dim();
    let pts = term.points();
    let (u, g) = if term.needs_grad() {
        field.values_and_grads(pts)?
    } else {
        (field.values(pts)?, Vec::new())
    };
    let mut du = vec![0.0; u.len()];
    let mut dg = vec![0.0; g.len()];
    let v = term.evaluate(dim, &u, &g, &mut du, &mut dg);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("loss term '{}'", term.name())));
    }
    Ok(v)
}

/// WCH term on given uniform samples of `domain`.
pub fn wch_term(
    field: &dyn ScalarField,
    hyper: &PhaseHyperParams,
    domain: &Domain,
    domain_samples: &[f64],
) -> Result<f64> {
    let term = WchTerm {
        points: domain_samples.to_vec(),
        epsilon: hyper.epsilon,
        gradient_weight: hyper.gradient_weight,
        volume: hyper.volume_form.then(|| domain.volume()),
    };
    evaluate_term(field, &term)
}

/// Reconstruction term with `n_data` freshly drawn anchors.
pub fn reconstruction_term(
    field: &dyn ScalarField,
    pc: &PointCloud,
    hyper: &PhaseHyperParams,
    rng: &mut RngState,
) -> Result<f64> {
    if pc.is_empty() {
        return Err(Error::invalid("reconstruction term needs a non-empty cloud"));
    }
    let s = sample_near_data(pc, hyper.sigma, hyper.n_data, hyper.samples_per_ball, rng);
    evaluate_term(
        field,
        &ReconstructionTerm {
            points: s.points,
            samples_per_ball: hyper.samples_per_ball,
        },
    )
}

/// Normal alignment over every point of the cloud.
pub fn normal_alignment_term(
    field: &dyn ScalarField,
    pc: &PointCloud,
    hyper: &PhaseHyperParams,
) -> Result<f64> {
    let normals = pc
        .normals()
        .ok_or_else(|| Error::invalid("normal alignment needs normals"))?;
    evaluate_term(
        field,
        &NormalAlignTerm {
            points: pc.points().to_vec(),
            normals: normals.to_vec(),
            transform: hyper.transform(),
            p: hyper.p_intr,
        },
    )
}

/// Unit-gradient constraint over every point of the cloud.
pub fn unit_gradient_term(
    field: &dyn ScalarField,
    pc: &PointCloud,
    hyper: &PhaseHyperParams,
) -> Result<f64> {
    evaluate_term(
        field,
        &UnitGradientTerm {
            points: pc.points().to_vec(),
            transform: hyper.transform(),
            p: hyper.p_unit,
        },
    )
}

/// One stochastic draw of all sample sets needed by the loss.
#[derive(Debug, Clone)]
pub struct PhaseBatch {
    pub domain_points: Vec<f64>,
    pub ball_points: Vec<f64>,
    pub data_points: Vec<f64>,
    pub data_normals: Option<Vec<f64>>,
}

impl PhaseBatch {
    pub fn draw(
        pc: &PointCloud,
        domain: &Domain,
        hyper: &PhaseHyperParams,
        rng: &mut RngState,
    ) -> Self {
        let domain_points = sample_uniform(domain, hyper.n_domain, rng);
        let near = sample_near_data(pc, hyper.sigma, hyper.n_data, hyper.samples_per_ball, rng);
        let data_points = near
            .anchors
            .iter()
            .flat_map(|&a| pc.point(a).iter().copied())
            .collect();
        let data_normals = pc.normals().map(|_| {
            near.anchors
                .iter()
                .flat_map(|&a| pc.normal(a).unwrap().iter().copied())
                .collect()
        });
        Self {
            domain_points,
            ball_points: near.points,
            data_points,
            data_normals,
        }
    }
}

/// The weighted terms for one batch, ready for evaluation or differentiation.
pub struct PhaseTerms {
    pub lambda: f64,
    pub mu: f64,
    pub recon: ReconstructionTerm,
    pub wch: WchTerm,
    pub normal: Option<Box<dyn FieldTerm + Send>>,
}

impl PhaseTerms {
    pub fn new(
        batch: PhaseBatch,
        domain: &Domain,
        hyper: &PhaseHyperParams,
        mode: NormalMode,
        mu: f64,
    ) -> Result<Self> {
        let tcfg = hyper.transform();
        let normal: Option<Box<dyn FieldTerm + Send>> = match mode {
            NormalMode::None => None,
            NormalMode::Unit => Some(Box::new(UnitGradientTerm {
                points: batch.data_points,
                transform: tcfg,
                p: hyper.p_unit,
            })),
            NormalMode::Intr => Some(Box::new(NormalAlignTerm {
                points: batch.data_points,
                normals: batch
                    .data_normals
                    .ok_or_else(|| Error::invalid("mode=intr requires normals"))?,
                transform: tcfg,
                p: hyper.p_intr,
            })),
        };
        Ok(Self {
            lambda: hyper.lambda,
            mu: if mode == NormalMode::None { 0.0 } else { mu },
            recon: ReconstructionTerm {
                points: batch.ball_points,
                samples_per_ball: hyper.samples_per_ball,
            },
            wch: WchTerm {
                points: batch.domain_points,
                epsilon: hyper.epsilon,
                gradient_weight: hyper.gradient_weight,
                volume: hyper.volume_form.then(|| domain.volume()),
            },
            normal,
        })
    }

    pub fn recipe(&self) -> LossRecipe<'_> {
        let mut r = LossRecipe::new()
            .term(self.lambda, &self.recon)
            .term(1.0, &self.wch);
        if let Some(n) = &self.normal {
            r = r.term(self.mu, n.as_ref() as &dyn FieldTerm);
        }
        r
    }
}

/// Unweighted term values with the weights used to combine them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub recon: f64,
    pub wch: f64,
    pub normal: f64,
    pub lambda: f64,
    pub mu: f64,
    pub total: f64,
}

/// `λ L + WCH + μ N` for one fresh batch.
pub fn total_loss(
    field: &dyn ScalarField,
    pc: &PointCloud,
    domain: &Domain,
    hyper: &PhaseHyperParams,
    rng: &mut RngState,
    mode: NormalMode,
) -> Result<LossBreakdown> {
    hyper.validate()?;
    let mu = hyper.resolved_mu(pc.normals().is_some());
    let batch = PhaseBatch::draw(pc, domain, hyper, rng);
    let terms = PhaseTerms::new(batch, domain, hyper, mode, mu)?;
    let recon = evaluate_term(field, &terms.recon)?;
    let wch = evaluate_term(field, &terms.wch)?;
    let normal = match &terms.normal {
        Some(t) if terms.mu != 0.0 => evaluate_term(field, t.as_ref())?,
        _ => 0.0,
    };
    Ok(LossBreakdown {
        recon,
        wch,
        normal,
        lambda: terms.lambda,
        mu: terms.mu,
        total: terms.lambda * recon + wch + terms.mu * normal,
    })
}

/// Lower/upper ends of the open exponent range for which the reconstruction weight
/// vanishes slowly enough as `ε → 0`.
pub const LAMBDA_ALPHA_RANGE: (f64, f64) = (0.25, 0.5);

/// `λ = c ε^α`. Returns the value and whether `α` lies in [`LAMBDA_ALPHA_RANGE`].
pub fn lambda_schedule(epsilon: f64, c: f64, alpha: f64) -> Result<(f64, bool)> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive (got {epsilon})")));
    }
    let in_range = alpha > LAMBDA_ALPHA_RANGE.0 && alpha < LAMBDA_ALPHA_RANGE.1;
    Ok((c * epsilon.powf(alpha), in_range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;
    use crate::geometry::PointCloud;
    use proptest::prelude::*;

    fn constant(dim: usize, c: f64) -> FnField<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        FnField::new(dim, move |_: &[f64]| (c, vec![0.0; dim]))
    }

    #[test]
    fn double_well_values() {
        assert_eq!(double_well(1.0), 0.0);
        assert_eq!(double_well(-1.0), 0.0);
        assert_eq!(double_well(0.0), 1.0);
        assert_eq!(double_well(0.5), 0.25);
        assert_eq!(double_well_deriv(1.0), 0.0);
        assert_eq!(double_well_deriv(0.5), -1.0);
        assert_eq!(double_well_deriv(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn double_well_is_even_and_nonnegative(s in -10.0f64..10.0) {
            prop_assert!(double_well(s) >= 0.0);
            prop_assert_eq!(double_well(s), double_well(-s));
            prop_assert!((double_well(s) - (s * s - 2.0 * s.abs() + 1.0)).abs() <= 1e-12 * (1.0 + s * s));
            if double_well(s) == 0.0 { prop_assert_eq!(s.abs(), 1.0); }
        }
    }

    #[test]
    fn wch_constant_fields() {
        let dom = Domain::cube(2, -1.0, 1.0);
        let hyper = PhaseHyperParams::default();
        let pts = sample_uniform(&dom, 1000, &mut RngState::new(1));
        assert_eq!(wch_term(&constant(2, 1.0), &hyper, &dom, &pts).unwrap(), 0.0);
        assert_eq!(wch_term(&constant(2, 0.0), &hyper, &dom, &pts).unwrap(), 1.0);
    }

    #[test]
    fn wch_linear_field_volume_form() {
        let dom = Domain::cube(2, -1.0, 1.0);
        let hyper = PhaseHyperParams {
            epsilon: 1e-300,
            volume_form: true,
            ..Default::default()
        };
        let f = FnField::new(2, |x: &[f64]| (x[0], vec![1.0, 0.0]));
        let pts = sample_uniform(&dom, 1_000_000, &mut RngState::new(2));
        let v = wch_term(&f, &hyper, &dom, &pts).unwrap();
        assert!((v - 4.0 / 3.0).abs() <= 0.02 * 4.0 / 3.0, "{v}");
    }

    #[test]
    fn wch_estimator_is_unbiased() {
        // u = x1 on (-1,1)^2, mean form, ε = 0.01: E[0.01 + (|x1|-1)^2] = 0.01 + 1/3
        let dom = Domain::cube(2, -1.0, 1.0);
        let hyper = PhaseHyperParams::default();
        let f = FnField::new(2, |x: &[f64]| (x[0], vec![1.0, 0.0]));
        let exact = 0.01 + 1.0 / 3.0;
        let mut rng = RngState::new(3);
        let est: Vec<f64> = (0..100)
            .map(|_| {
                let pts = sample_uniform(&dom, 500, &mut rng);
                wch_term(&f, &hyper, &dom, &pts).unwrap()
            })
            .collect();
        let mean = est.iter().sum::<f64>() / 100.0;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 99.0;
        let se = (var / 100.0).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn reconstruction_examples() {
        let pc = PointCloud::new(2, vec![0.2, 0.1, -0.4, 0.3], None).unwrap();
        let hyper = PhaseHyperParams {
            n_data: 64,
            ..Default::default()
        };
        let mut rng = RngState::new(5);
        assert_eq!(reconstruction_term(&constant(2, 0.0), &pc, &hyper, &mut rng).unwrap(), 0.0);
        assert_eq!(reconstruction_term(&constant(2, 1.0), &pc, &hyper, &mut rng).unwrap(), 1.0);

        let origin = PointCloud::new(2, vec![0.0, 0.0], None).unwrap();
        let f = FnField::new(2, |x: &[f64]| (x[0], vec![1.0, 0.0]));
        let hyper = PhaseHyperParams {
            n_data: 1,
            samples_per_ball: 10_000,
            sigma: 1e-3,
            ..Default::default()
        };
        let v = reconstruction_term(&f, &origin, &hyper, &mut rng).unwrap();
        assert!(v <= 1e-4, "{v}");
    }

    fn field_with_grad(g: Vec<f64>) -> FnField<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        // u = 0 so ∇w = √ε ∇u; with ε = 1, ∇w = ∇u.
        FnField::new(g.len(), move |_: &[f64]| (0.0, g.clone()))
    }

    #[test]
    fn normal_alignment_examples() {
        let hyper = PhaseHyperParams {
            epsilon: 1.0,
            ..Default::default()
        };
        let pc = PointCloud::new(2, vec![0.0, 0.0, 1.0, 1.0], Some(vec![0.6, 0.8, 0.6, 0.8])).unwrap();
        let v = normal_alignment_term(&field_with_grad(vec![0.6, 0.8]), &pc, &hyper).unwrap();
        assert_eq!(v, 0.0);
        let v = normal_alignment_term(&field_with_grad(vec![-0.6, -0.8]), &pc, &hyper).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        let no_normals = PointCloud::new(2, vec![0.0, 0.0], None).unwrap();
        assert!(normal_alignment_term(&field_with_grad(vec![1.0, 0.0]), &no_normals, &hyper).is_err());
    }

    #[test]
    fn normal_alignment_matches_direct_recomputation() {
        let mut rng = RngState::new(12);
        let n = 50;
        let pts: Vec<f64> = (0..3 * n).map(|_| rng.uniform()).collect();
        let normals: Vec<f64> = (0..3 * n).map(|_| rng.normal()).collect();
        let pc = PointCloud::new(3, pts, Some(normals)).unwrap();
        let hyper = PhaseHyperParams {
            epsilon: 0.04,
            p_intr: 1.0,
            ..Default::default()
        };
        let f = FnField::new(3, |x: &[f64]| {
            let u = 0.5 * (x[0] - x[1] * x[2]);
            (u, vec![0.5, -0.5 * x[2], -0.5 * x[1]])
        });
        let v = normal_alignment_term(&f, &pc, &hyper).unwrap();
        let mut direct = 0.0;
        for i in 0..n {
            let x = pc.point(i);
            let (u, g) = (f.value_and_grad(x).unwrap().u, f.value_and_grad(x).unwrap().grad_x);
            let s = 0.2 / (1.0 - u.abs());
            let nn = pc.normal(i).unwrap();
            direct += (0..3).map(|k| (nn[k] - s * g[k]).powi(2)).sum::<f64>().sqrt();
        }
        assert!((v - direct / n as f64).abs() <= 1e-12);
    }

    #[test]
    fn unit_gradient_examples() {
        let hyper = PhaseHyperParams {
            epsilon: 1.0,
            ..Default::default()
        };
        let pc = PointCloud::new(2, vec![0.0, 0.0, 0.5, 0.5], None).unwrap();
        assert_eq!(unit_gradient_term(&field_with_grad(vec![0.6, 0.8]), &pc, &hyper).unwrap(), 0.0);
        assert_eq!(unit_gradient_term(&field_with_grad(vec![0.0, 0.0]), &pc, &hyper).unwrap(), 1.0);
        let v = unit_gradient_term(&field_with_grad(vec![3.0, 0.0]), &pc, &hyper).unwrap();
        assert!((v - 4.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_schedule_examples() {
        assert_eq!(lambda_schedule(1.0, 10.0, 0.3).unwrap(), (10.0, true));
        let (l, _) = lambda_schedule(0.01, 10.0, 0.3).unwrap();
        assert!((l - 2.5119).abs() <= 1e-4);
        let (l, _) = lambda_schedule(0.01, 1.0, 0.3).unwrap();
        assert!((l - 0.25119).abs() <= 1e-5);
        assert!(!lambda_schedule(0.01, 1.0, 0.6).unwrap().1);
        assert!(lambda_schedule(0.0, 1.0, 0.3).is_err());
    }

    fn smooth_field() -> FnField<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        FnField::new(2, |x: &[f64]| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt().max(1e-9);
            let u = (3.0 * (r - 0.5)).tanh();
            let du = 3.0 * (1.0 - u * u);
            (u, vec![du * x[0] / r, du * x[1] / r])
        })
    }

    fn circle_cloud(n: usize) -> PointCloud {
        let mut pts = Vec::new();
        let mut nrm = Vec::new();
        for i in 0..n {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            pts.extend([0.5 * t.cos(), 0.5 * t.sin()]);
            nrm.extend([t.cos(), t.sin()]);
        }
        PointCloud::new(2, pts, Some(nrm)).unwrap()
    }

    #[test]
    fn total_loss_recombines_and_is_affine() {
        let pc = circle_cloud(40);
        let dom = Domain::cube(2, -1.0, 1.0);
        let f = smooth_field();
        let base = PhaseHyperParams {
            n_domain: 300,
            n_data: 200,
            ..Default::default()
        };
        let at = |lambda: f64, mu: f64, mode: NormalMode| {
            let h = PhaseHyperParams {
                lambda,
                mu: Some(mu),
                ..base.clone()
            };
            total_loss(&f, &pc, &dom, &h, &mut RngState::new(9), mode).unwrap()
        };
        let b = at(10.0, 10.0, NormalMode::Unit);
        let direct = 10.0 * b.recon + b.wch + 10.0 * b.normal;
        assert!((b.total - direct).abs() <= 1e-12);

        let zero = at(0.0, 0.0, NormalMode::Unit);
        assert_eq!(zero.total, zero.wch);
        let none = at(3.0, 5.0, NormalMode::None);
        let mu0 = at(3.0, 0.0, NormalMode::Unit);
        assert_eq!(none.total, mu0.total);

        // affine in (λ, μ): recover coefficients from three settings
        let a = at(1.0, 2.0, NormalMode::Intr);
        let c = at(4.0, 2.0, NormalMode::Intr);
        let d = at(1.0, 7.0, NormalMode::Intr);
        let l_coef = (c.total - a.total) / 3.0;
        let m_coef = (d.total - a.total) / 5.0;
        assert!((l_coef - a.recon).abs() <= 1e-12);
        assert!((m_coef - a.normal).abs() <= 1e-12);
        let intr_no_normals = PointCloud::new(2, vec![0.0, 0.0], None).unwrap();
        assert!(total_loss(&f, &intr_no_normals, &dom, &base, &mut RngState::new(1), NormalMode::Intr).is_err());
    }
}
