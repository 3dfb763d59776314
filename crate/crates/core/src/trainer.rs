//! Adam and the stochastic training loop.
//!
//! Every iteration draws its samples from `RngState::derive(seed, iteration)`, so a resumed
//! run sees exactly the batches an uninterrupted run would have seen. Batch evaluation
//! reduces chunk results in a fixed order, which makes runs bit-reproducible whatever the
//! thread count; the deterministic flag additionally zeroes the wall-clock log column so
//! log files are byte-identical too.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::{loss_param_gradient, save_checkpoint, Checkpoint, Network};
use crate::geometry::{Domain, PointCloud, RngState};
use crate::loss::{PhaseBatch, PhaseHyperParams, PhaseTerms};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update in place; `t` is the 1-based step count.
pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, p: &AdamParams, t: u64) -> Result<()> {
    let n = theta.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::invalid(format!(
            "adam shapes differ: theta {n}, grad {}, moments {}/{}",
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if t == 0 {
        return Err(Error::invalid("adam step count starts at 1"));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    let c1 = 1.0 - p.beta1.powf(t as f64);
    let c2 = 1.0 - p.beta2.powf(t as f64);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = p.beta1 * state.m[i] + (1.0 - p.beta1) * g;
        state.v[i] = p.beta2 * state.v[i] + (1.0 - p.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= p.lr * m_hat / (v_hat.sqrt() + p.eps_hat);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Iterations to run in this call (a resumed run adds this many).
    pub iterations: u64,
    /// Total samples per step, split evenly between the box and the data balls.
    /// `None` keeps the hyper-parameter counts.
    pub batch_total: Option<usize>,
    pub adam: AdamParams,
    pub seed: u64,
    /// Halve the learning rate after every quarter of the iterations.
    pub lr_decay: bool,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    /// Iteration the starting network was saved at; numbering continues from it.
    pub start_iteration: u64,
    pub deterministic: bool,
    /// Abort when a batch loss exceeds this multiple of the first one.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            batch_total: Some(16_384),
            adam: AdamParams::default(),
            seed: 0,
            lr_decay: false,
            checkpoint_every: 0,
            checkpoint: None,
            log: None,
            start_iteration: 0,
            deterministic: false,
            divergence_factor: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.adam.lr >= 0.0) || !self.adam.lr.is_finite() {
            return Err(Error::Config(format!("lr must be finite and non-negative (got {})", self.adam.lr)));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam.eps_hat > 0.0) {
            return Err(Error::Config("adam eps_hat must be positive".into()));
        }
        if let Some(b) = self.batch_total {
            if b < 2 {
                return Err(Error::Config("batch_total must be at least 2".into()));
            }
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence_factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// One logged iteration. The three parts are weighted, so `total = recon + wch + normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub total: f64,
    pub recon: f64,
    pub wch: f64,
    pub normal: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

pub const LOG_HEADER: &str = "iter,loss_total,loss_recon,loss_wch,loss_normal,grad_norm,seconds";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            self.iter, self.total, self.recon, self.wch, self.normal, self.grad_norm, self.seconds
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: TrainLog,
    /// Number of the last completed iteration.
    pub iteration: u64,
}

struct LogFile {
    out: BufWriter<File>,
    path: PathBuf,
}

impl LogFile {
    fn open(path: &PathBuf, append: bool) -> Result<Self> {
        let exists = path.exists();
        let file = if append && exists {
            OpenOptions::new().append(true).open(path)
        } else {
            File::create(path)
        }
        .map_err(|e| Error::io(path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path: path.clone(),
        };
        if !(append && exists) {
            log.line(LOG_HEADER)?;
        }
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains `network` on `pc` inside `domain`; see [`train_with_progress`].
pub fn train(
    pc: &PointCloud,
    domain: &Domain,
    network: Network,
    hyper: &PhaseHyperParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_progress(pc, domain, network, hyper, cfg, &mut |_| {})
}

/// Runs `cfg.iterations` Adam steps on fresh batches, calling `progress` after each one.
///
/// Writes the CSV log and checkpoints when paths are configured. A resumed run
/// (`start_iteration > 0`) appends to an existing log. Adam moments always start at zero.
/// On a non-finite loss or divergence the last good parameters are checkpointed before
/// the error is returned.
pub fn train_with_progress(
    pc: &PointCloud,
    domain: &Domain,
    mut network: Network,
    hyper: &PhaseHyperParams,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    hyper.validate()?;
    let dim = network.config().dim;
    if pc.dim() != dim || domain.dim() != dim {
        return Err(Error::Config(format!(
            "dimension mismatch: cloud {}, domain {}, network {dim}",
            pc.dim(),
            domain.dim()
        )));
    }
    let has_normals = pc.normals().is_some();
    let mode = hyper.resolved_mode(has_normals);
    if mode == crate::loss::NormalMode::Intr && !has_normals {
        return Err(Error::Config("mode=intr requires a point cloud with normals".into()));
    }
    let mu = hyper.resolved_mu(has_normals);
    let mut hyper = hyper.clone();
    if let Some(b) = cfg.batch_total {
        hyper.n_domain = b / 2;
        hyper.n_data = b - b / 2;
    }

    let mut log_file = match &cfg.log {
        Some(p) => Some(LogFile::open(p, cfg.start_iteration > 0)?),
        None => None,
    };
    let save = |net: &Network, iteration: u64| -> Result<()> {
        match &cfg.checkpoint {
            Some(path) => save_checkpoint(
                path,
                &Checkpoint {
                    network: net.clone(),
                    epsilon: hyper.epsilon,
                    iteration,
                    domain: domain.clone(),
                },
            ),
            None => Ok(()),
        }
    };

    let mut adam = AdamState::new(network.theta().len());
    let mut log = TrainLog::default();
    let mut initial: Option<f64> = None;
    let started = Instant::now();
    let quarter = (cfg.iterations / 4).max(1);
    let mut last = cfg.start_iteration;
    for step in 1..=cfg.iterations {
        let iter = cfg.start_iteration + step;
        let mut rng = RngState::derive(cfg.seed, iter);
        let batch = PhaseBatch::draw(pc, domain, &hyper, &mut rng);
        let terms = PhaseTerms::new(batch, domain, &hyper, mode, mu)?;
        let grad = match loss_param_gradient(&network, &terms.recipe()) {
            Ok(g) => g,
            Err(e) => {
                save(&network, last)?;
                if let Some(f) = log_file.as_mut() {
                    f.flush()?;
                }
                return Err(e);
            }
        };
        let limit = cfg.divergence_factor * initial.unwrap_or(grad.total).max(f64::MIN_POSITIVE);
        if grad.total > limit {
            save(&network, last)?;
            if let Some(f) = log_file.as_mut() {
                f.flush()?;
            }
            return Err(Error::Divergence {
                iteration: iter,
                loss: grad.total,
                limit,
            });
        }
        initial.get_or_insert(grad.total);

        // recipe order: reconstruction, WCH, then the optional normal term
        let part = |k: usize| grad.terms.get(k).map_or(0.0, |(_, w, v)| if *w == 0.0 { 0.0 } else { w * v });
        let row = LogRow {
            iter,
            total: grad.total,
            recon: part(0),
            wch: part(1),
            normal: part(2),
            grad_norm: grad.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            seconds: if cfg.deterministic {
                0.0
            } else {
                started.elapsed().as_secs_f64()
            },
        };

        let mut adam_params = cfg.adam;
        if cfg.lr_decay {
            adam_params.lr *= 0.5f64.powi(((step - 1) / quarter).min(3) as i32);
        }
        adam_step(network.theta_mut(), &grad.grad, &mut adam, &adam_params, step)?;
        last = iter;

        if let Some(f) = log_file.as_mut() {
            f.line(&row.csv())?;
        }
        progress(&row);
        log.rows.push(row);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.iterations {
            save(&network, iter)?;
            if let Some(f) = log_file.as_mut() {
                f.flush()?;
            }
        }
    }
    save(&network, last)?;
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    Ok(TrainOutcome {
        network,
        log,
        iteration: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Activation, MlpConfig, ParamVector, ScalarField};
    use crate::loss::NormalMode;

    fn circle_cloud(n: usize) -> PointCloud {
        let pts = (0..n)
            .flat_map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                [0.5 * a.cos(), 0.5 * a.sin()]
            })
            .collect();
        PointCloud::new(2, pts, None).unwrap()
    }

    fn small_net(bias: f64, scale: f64, seed: u64) -> Network {
        let cfg = MlpConfig {
            depth: 3,
            width: 16,
            skip_at: 0,
            activation: Activation::Softplus { beta: 100.0 },
            ..MlpConfig::new(2)
        };
        let layout = cfg.layout();
        let mut p = ParamVector::zeros(&layout);
        let mut rng = RngState::new(seed);
        p.theta.iter_mut().for_each(|v| *v = scale * rng.normal());
        let out = layout.layers.last().unwrap();
        p.theta[out.bias] = bias;
        Network::new(cfg, p).unwrap()
    }

    fn quick_cfg(iterations: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_total: Some(128),
            seed: 5,
            deterministic: true,
            ..TrainConfig::default()
        }
    }

    fn hyper() -> PhaseHyperParams {
        PhaseHyperParams {
            lambda: 0.3,
            mu: Some(0.1),
            mode: Some(NormalMode::Unit),
            ..PhaseHyperParams::default()
        }
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let p = AdamParams::default();
        let mut theta = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut theta, &[1.0], &mut s, &p, 1).unwrap();
        assert!((theta[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);

        let mut theta = vec![0.3, -2.0, 7.0];
        let before = theta.clone();
        let mut s = AdamState::new(3);
        for t in 1..=5 {
            adam_step(&mut theta, &[0.0; 3], &mut s, &p, t).unwrap();
        }
        assert_eq!(theta, before);
    }

    #[test]
    fn adam_rejects_bad_input() {
        let p = AdamParams::default();
        let mut s = AdamState::new(2);
        let mut theta = [0.0; 2];
        assert!(adam_step(&mut theta, &[1.0], &mut s, &p, 1).is_err());
        assert!(adam_step(&mut theta, &[1.0, 1.0], &mut s, &p, 0).is_err());
        assert!(matches!(
            adam_step(&mut theta, &[f64::NAN, 1.0], &mut s, &p, 1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let net = small_net(0.0, 0.3, 1);
        let mut cfg = quick_cfg(1);
        cfg.adam.lr = 0.0;
        let out = train(&circle_cloud(20), &Domain::cube(2, -1.0, 1.0), net.clone(), &hyper(), &cfg).unwrap();
        assert_eq!(out.network.theta(), net.theta());
        assert_eq!(out.log.rows.len(), 1);
        assert_eq!(out.iteration, 1);
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let run = || {
            train(
                &circle_cloud(20),
                &Domain::cube(2, -1.0, 1.0),
                small_net(0.0, 0.3, 2),
                &hyper(),
                &quick_cfg(15),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.network.theta(), b.network.theta());
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn log_parts_recombine() {
        let out = train(
            &circle_cloud(20),
            &Domain::cube(2, -1.0, 1.0),
            small_net(0.0, 0.3, 3),
            &hyper(),
            &quick_cfg(10),
        )
        .unwrap();
        for r in &out.log.rows {
            assert!((r.recon + r.wch + r.normal - r.total).abs() <= 1e-9);
            assert!(r.recon > 0.0 && r.wch > 0.0 && r.normal > 0.0);
        }
    }

    #[test]
    fn pure_well_descent_does_not_increase() {
        let h = PhaseHyperParams {
            lambda: 0.0,
            mu: Some(0.0),
            mode: Some(NormalMode::None),
            ..PhaseHyperParams::default()
        };
        let net = small_net(0.9, 1e-3, 4);
        // small lr: Adam momentum at 1e-3 carries the field past the well within 100 steps
        let mut cfg = quick_cfg(100);
        cfg.adam.lr = 1e-4;
        let out = train(&circle_cloud(20), &Domain::cube(2, -1.0, 1.0), net, &h, &cfg).unwrap();
        let wch: Vec<f64> = out.log.rows.iter().map(|r| r.wch).collect();
        for w in wch.windows(2) {
            assert!(w[1] <= w[0], "{wch:?}");
        }
        assert!(out.network.value(&[0.1, 0.2]).unwrap() > 0.91);
    }

    #[test]
    fn resume_matches_uninterrupted_sampling() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("log.csv");
        let pc = circle_cloud(20);
        let dom = Domain::cube(2, -1.0, 1.0);
        let mut cfg = quick_cfg(4);
        cfg.log = Some(log.clone());
        let first = train(&pc, &dom, small_net(0.0, 0.3, 6), &hyper(), &cfg).unwrap();
        cfg.start_iteration = first.iteration;
        let second = train(&pc, &dom, first.network, &hyper(), &cfg).unwrap();
        assert_eq!(second.iteration, 8);
        let text = std::fs::read_to_string(&log).unwrap();
        let iters: Vec<u64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(iters, (1..=8).collect::<Vec<_>>());
        assert_eq!(text.lines().next().unwrap(), LOG_HEADER);
    }

    #[test]
    fn divergence_is_reported_and_checkpointed() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("c.bin");
        let mut cfg = quick_cfg(50);
        cfg.adam.lr = 5.0;
        cfg.divergence_factor = 1.5;
        cfg.checkpoint = Some(ckpt.clone());
        let err = train(&circle_cloud(20), &Domain::cube(2, -1.0, 1.0), small_net(0.0, 0.3, 7), &hyper(), &cfg)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert!(ckpt.exists());
    }

    #[test]
    fn intr_without_normals_is_a_config_error() {
        let h = PhaseHyperParams {
            mode: Some(NormalMode::Intr),
            ..hyper()
        };
        let err = train(&circle_cloud(20), &Domain::cube(2, -1.0, 1.0), small_net(0.0, 0.3, 1), &h, &quick_cfg(1))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
