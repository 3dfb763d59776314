//! Plain-text run configuration.
//!
//! One `key = value` pair per line, `#` starts a comment. Every key is listed in [`KEYS`]
//! with its default; unknown keys are rejected. `auto` selects a value derived from the data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{Activation, MlpConfig};
use crate::geometry::{bounding_domain, CloudFormat, Domain, PointCloud};
use crate::loss::PhaseHyperParams;
use crate::trainer::{AdamParams, TrainConfig};

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("input", "none", "point cloud file (.xyz, .ply, .csv)"),
    ("input_format", "auto", "xyz | ply | csv; auto guesses from the extension"),
    ("normalize", "true", "centre the cloud and scale it to unit max norm"),
    ("domain_scale", "auto", "box scale about the cloud bounds; auto is 2 in 2D and 1.5 in 3D"),
    ("domain_lower", "auto", "explicit lower box corner, comma separated"),
    ("domain_upper", "auto", "explicit upper box corner, comma separated"),
    ("checkpoint", "phase.ckpt", "checkpoint written by train"),
    ("log", "phase_log.csv", "training log written by train"),
    ("resume", "none", "checkpoint to continue training from"),
    ("depth", "8", "number of linear layers"),
    ("width", "512", "hidden layer width"),
    ("skip_at", "4", "layer receiving the input skip connection; 0 disables it"),
    ("activation", "softplus", "softplus | relu"),
    ("softplus_beta", "100", "softplus sharpness"),
    ("fourier_k", "0", "number of Fourier frequencies; 0 uses raw coordinates"),
    ("fourier_offset", "0", "exponent of the first Fourier frequency"),
    ("init_radius", "0.5", "radius of the sphere the initial network approximates"),
    ("epsilon", "0.01", "phase-field width"),
    ("lambda", "10", "reconstruction weight"),
    ("mu", "auto", "normal-term weight; auto is 10 with normals and 0.5 without"),
    ("sigma", "0.001", "standard deviation of the samples around data points"),
    ("samples_per_ball", "1", "samples drawn around each data anchor"),
    ("p_intr", "1", "exponent of the normal-alignment term"),
    ("p_unit", "2", "exponent of the unit-gradient term"),
    ("mode", "auto", "intr | unit | none; auto is intr with normals and unit without"),
    ("volume_form", "false", "multiply the double-well estimate by the box volume"),
    ("gradient_weight", "1", "weight of the gradient energy inside the WCH term"),
    ("iterations", "10000", "training iterations"),
    ("batch_total", "16384", "samples per step, split evenly between box and data"),
    ("lr", "0.001", "Adam learning rate"),
    ("beta1", "0.9", "Adam first-moment decay"),
    ("beta2", "0.999", "Adam second-moment decay"),
    ("eps_hat", "1e-8", "Adam denominator offset"),
    ("lr_decay", "false", "halve the learning rate every quarter of the run"),
    ("seed", "0", "random seed"),
    ("checkpoint_every", "1000", "checkpoint cadence in iterations; 0 only at the end"),
    ("deterministic", "false", "zero the wall-clock log column for byte-identical outputs"),
    ("divergence_factor", "1000", "abort when the loss exceeds this multiple of the first loss"),
    ("resolution", "256", "grid cells per axis for extract and render"),
    ("metric_samples", "100000", "surface samples per geometry for eval"),
    ("metric_scale", "1", "factor applied to reported distances (1 = normalized units)"),
    ("ablate_epsilons", "1,0.1,0.05,0.01,0.005", "epsilon values of the ablation sweep"),
    ("ablate_c", "1", "lambda = c * epsilon^alpha in the ablation sweep"),
    ("ablate_alpha", "0.3", "exponent of the ablation lambda schedule"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub input_format: Option<CloudFormat>,
    pub normalize: bool,
    pub domain_scale: Option<f64>,
    pub domain_lower: Option<Vec<f64>>,
    pub domain_upper: Option<Vec<f64>>,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub resume: Option<PathBuf>,
    pub depth: usize,
    pub width: usize,
    pub skip_at: usize,
    pub activation: String,
    pub softplus_beta: f64,
    pub fourier_k: usize,
    pub fourier_offset: u32,
    pub init_radius: f64,
    pub hyper: PhaseHyperParams,
    pub iterations: u64,
    pub batch_total: usize,
    pub adam: AdamParams,
    pub lr_decay: bool,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub deterministic: bool,
    pub divergence_factor: f64,
    pub resolution: usize,
    pub metric_samples: usize,
    pub metric_scale: f64,
    pub ablate_epsilons: Vec<f64>,
    pub ablate_c: f64,
    pub ablate_alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_format: None,
            normalize: true,
            domain_scale: None,
            domain_lower: None,
            domain_upper: None,
            checkpoint: "phase.ckpt".into(),
            log: "phase_log.csv".into(),
            resume: None,
            depth: 8,
            width: 512,
            skip_at: 4,
            activation: "softplus".into(),
            softplus_beta: 100.0,
            fourier_k: 0,
            fourier_offset: 0,
            init_radius: 0.5,
            hyper: PhaseHyperParams::default(),
            iterations: 10_000,
            batch_total: 16_384,
            adam: AdamParams::default(),
            lr_decay: false,
            seed: 0,
            checkpoint_every: 1000,
            deterministic: false,
            divergence_factor: 1e3,
            resolution: 256,
            metric_samples: 100_000,
            metric_scale: 1.0,
            ablate_epsilons: vec![1.0, 0.1, 0.05, 0.01, 0.005],
            ablate_c: 1.0,
            ablate_alpha: 0.3,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("key '{key}': expected true or false, got '{v}'"))),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn path(v: &str) -> Option<PathBuf> {
    (v != "none").then(|| PathBuf::from(v))
}

fn auto<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(path, &text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected 'key = value', got '{line}'")))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => parse_err(m),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Parses `key=value` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let h = &mut self.hyper;
        match key {
            "input" => self.input = path(v),
            "input_format" => self.input_format = auto(v, |s| s.parse())?,
            "normalize" => self.normalize = flag(key, v)?,
            "domain_scale" => self.domain_scale = auto(v, |s| num(key, s))?,
            "domain_lower" => self.domain_lower = auto(v, |s| list(key, s))?,
            "domain_upper" => self.domain_upper = auto(v, |s| list(key, s))?,
            "checkpoint" => self.checkpoint = v.into(),
            "log" => self.log = v.into(),
            "resume" => self.resume = path(v),
            "depth" => self.depth = num(key, v)?,
            "width" => self.width = num(key, v)?,
            "skip_at" => self.skip_at = num(key, v)?,
            "activation" => {
                if v != "softplus" && v != "relu" {
                    return Err(Error::Config(format!("key 'activation': expected softplus or relu, got '{v}'")));
                }
                self.activation = v.into()
            }
            "softplus_beta" => self.softplus_beta = num(key, v)?,
            "fourier_k" => self.fourier_k = num(key, v)?,
            "fourier_offset" => self.fourier_offset = num(key, v)?,
            "init_radius" => self.init_radius = num(key, v)?,
            "epsilon" => h.epsilon = num(key, v)?,
            "lambda" => h.lambda = num(key, v)?,
            "mu" => h.mu = auto(v, |s| num(key, s))?,
            "sigma" => h.sigma = num(key, v)?,
            "samples_per_ball" => h.samples_per_ball = num(key, v)?,
            "p_intr" => h.p_intr = num(key, v)?,
            "p_unit" => h.p_unit = num(key, v)?,
            "mode" => h.mode = auto(v, |s| s.parse())?,
            "volume_form" => h.volume_form = flag(key, v)?,
            "gradient_weight" => h.gradient_weight = num(key, v)?,
            "iterations" => self.iterations = num(key, v)?,
            "batch_total" => self.batch_total = num(key, v)?,
            "lr" => self.adam.lr = num(key, v)?,
            "beta1" => self.adam.beta1 = num(key, v)?,
            "beta2" => self.adam.beta2 = num(key, v)?,
            "eps_hat" => self.adam.eps_hat = num(key, v)?,
            "lr_decay" => self.lr_decay = flag(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "deterministic" => self.deterministic = flag(key, v)?,
            "divergence_factor" => self.divergence_factor = num(key, v)?,
            "resolution" => self.resolution = num(key, v)?,
            "metric_samples" => self.metric_samples = num(key, v)?,
            "metric_scale" => self.metric_scale = num(key, v)?,
            "ablate_epsilons" => self.ablate_epsilons = list(key, v)?,
            "ablate_c" => self.ablate_c = num(key, v)?,
            "ablate_alpha" => self.ablate_alpha = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn mlp_config(&self, dim: usize) -> Result<MlpConfig> {
        let cfg = MlpConfig {
            dim,
            depth: self.depth,
            width: self.width,
            skip_at: self.skip_at,
            activation: if self.activation == "relu" {
                Activation::Relu
            } else {
                Activation::Softplus {
                    beta: self.softplus_beta,
                }
            },
            fourier_k: self.fourier_k,
            fourier_offset: self.fourier_offset,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_total: Some(self.batch_total),
            adam: self.adam,
            seed: self.seed,
            lr_decay: self.lr_decay,
            checkpoint_every: self.checkpoint_every,
            checkpoint: Some(self.checkpoint.clone()),
            log: Some(self.log.clone()),
            start_iteration: 0,
            deterministic: self.deterministic,
            divergence_factor: self.divergence_factor,
        }
    }

    /// The explicit box if both corners are set, else the scaled bounding box of `pc`.
    pub fn domain_for(&self, pc: &PointCloud) -> Result<Domain> {
        match (&self.domain_lower, &self.domain_upper) {
            (Some(lo), Some(hi)) => {
                if lo.len() != pc.dim() {
                    return Err(Error::Config(format!(
                        "domain has {} coordinates but the cloud is {}D",
                        lo.len(),
                        pc.dim()
                    )));
                }
                Domain::new(lo.clone(), hi.clone()).map_err(|e| Error::Config(e.to_string()))
            }
            (None, None) => {
                let scale = self.domain_scale.unwrap_or(if pc.dim() == 2 { 2.0 } else { 1.5 });
                bounding_domain(pc, scale).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(Error::Config("set both domain_lower and domain_upper, or neither".into())),
        }
    }

    /// Consistency checks that need no files.
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.train_config().validate()?;
        if !(self.init_radius > 0.0) {
            return Err(Error::Config("init_radius must be positive".into()));
        }
        if self.resolution < 2 {
            return Err(Error::Config("resolution must be at least 2".into()));
        }
        if self.metric_samples == 0 || !(self.metric_scale > 0.0) {
            return Err(Error::Config("metric_samples and metric_scale must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its default and description, as a commented config file.
    pub fn documented_defaults() -> String {
        let mut out = String::new();
        for (k, d, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {d}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::NormalMode;

    #[test]
    fn documented_defaults_match_struct_defaults() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(Path::new("defaults"), &RunConfig::documented_defaults())
            .unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = RunConfig::default();
        for (k, d, _) in KEYS {
            cfg.set(k, d).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::default()
            .apply_text(Path::new("run.cfg"), "epsilon = 0.1\n\nbogus = 3\n")
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("run.cfg") && msg.contains('3') && msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn values_and_comments() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            Path::new("x"),
            "# comment\nlambda = 0.3 # trailing\nmode = unit\nmu = 0.1\ndomain_lower = -1,-1\ndomain_upper = 1,1\n",
        )
        .unwrap();
        assert_eq!(cfg.hyper.lambda, 0.3);
        assert_eq!(cfg.hyper.mode, Some(NormalMode::Unit));
        assert_eq!(cfg.hyper.mu, Some(0.1));
        let pc = PointCloud::new(2, vec![0.0, 0.0, 0.5, 0.5], None).unwrap();
        assert_eq!(cfg.domain_for(&pc).unwrap(), Domain::cube(2, -1.0, 1.0));
        cfg.set("mode", "none").unwrap();
        assert_eq!(cfg.hyper.mode, Some(NormalMode::None));
        assert!(cfg.set("depth", "x").is_err());
        assert!(cfg.set_pair("novalue").is_err());
    }

    #[test]
    fn auto_domain_uses_dimension_scale() {
        let pc = PointCloud::new(2, vec![-1.0, -1.0, 1.0, 1.0], None).unwrap();
        assert_eq!(RunConfig::default().domain_for(&pc).unwrap(), Domain::cube(2, -2.0, 2.0));
    }
}
