use std::f64::consts::PI;

use super::{MlpConfig, Network, ParamVector, ScalarField};
use crate::error::{Error, Result};
use crate::geometry::{norm, RngState};

/// Geometric initialisation: the untrained network approximates `‖x‖ - radius`.
///
/// Hidden weights are `N(0, 2 / fan_out)` with zero biases; the output layer has one
/// constant positive weight and a bias. The nominal constants `√π / √fan_in` and `-radius`
/// are replaced by a least-squares fit to `‖x‖ - radius` along random rays, which removes
/// the offset that softplus accumulates and the random radial scale of the hidden layers.
/// Weights reading Fourier features (first layer and skip layer) start at zero so the
/// initial field only sees raw coordinates.
pub fn geometric_init(config: &MlpConfig, radius: f64, rng: &mut RngState) -> Result<ParamVector> {
    config.validate()?;
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("init radius must be positive (got {radius})")));
    }
    let layout = config.layout();
    let mut p = ParamVector::zeros(&layout);
    let enc = config.encoded_dim();
    let depth = layout.layers.len();
    for (l, span) in layout.layers.iter().enumerate() {
        let w = &mut p.theta[span.weight..span.bias];
        if l + 1 == depth {
            continue;
        }
        let std = (2.0 / span.fan_out as f64).sqrt();
        for v in w.iter_mut() {
            *v = std * rng.normal();
        }
        // Columns holding the encoded input: all of layer 0, the tail of the skip layer.
        let enc_start = if l == 0 {
            Some(0)
        } else if config.skip_at != 0 && l == config.skip_at {
            Some(span.fan_in - enc)
        } else {
            None
        };
        if let (Some(start), true) = (enc_start, config.fourier_k > 0) {
            for row in 0..span.fan_out {
                let r = &mut w[row * span.fan_in..(row + 1) * span.fan_in];
                r[start + config.dim..start + enc].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    let last = layout.layers[depth - 1];
    let (c, b) = calibrate_output(config, p.clone(), radius, rng)?
        .unwrap_or(((PI / last.fan_in as f64).sqrt(), -radius));
    p.theta[last.weight..last.bias].iter_mut().for_each(|v| *v = c);
    p.theta[last.bias] = b;
    Ok(p)
}

/// Least-squares output weight and bias fitting `u ≈ ‖x‖ - radius` on points at radii
/// uniform in `[0, 2 radius]`. `None` when the hidden features do not grow with `‖x‖`.
fn calibrate_output(
    config: &MlpConfig,
    mut p: ParamVector,
    radius: f64,
    rng: &mut RngState,
) -> Result<Option<(f64, f64)>> {
    const SAMPLES: usize = 256;
    let layout = config.layout();
    let last = layout.layers[layout.layers.len() - 1];
    p.theta[last.weight..last.bias].iter_mut().for_each(|v| *v = 1.0);
    p.theta[last.bias] = 0.0;
    let net = Network::new(config.clone(), p)?;
    let d = config.dim;
    let mut xs = Vec::with_capacity(SAMPLES * d);
    let mut target = Vec::with_capacity(SAMPLES);
    for i in 0..SAMPLES {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = norm(&v).max(1e-300);
        let r = 2.0 * radius * (i as f64 + 0.5) / SAMPLES as f64;
        xs.extend(v.iter().map(|c| r * c / n));
        target.push(r - radius);
    }
    let s = net.values(&xs)?;
    let m = SAMPLES as f64;
    let (ms, mt) = (s.iter().sum::<f64>() / m, target.iter().sum::<f64>() / m);
    let cov: f64 = s.iter().zip(&target).map(|(a, b)| (a - ms) * (b - mt)).sum();
    let var: f64 = s.iter().map(|a| (a - ms) * (a - ms)).sum();
    if !(var > 0.0) || !(cov > 0.0) {
        return Ok(None);
    }
    let c = cov / var;
    Ok(Some((c, mt - c * ms)))
}
