//! The `phase` command line: train, extract, eval, render, oracle and ablate.
//!
//! Errors map to exit codes 2 (configuration, input or parse problems) and 3 (numerical
//! failure). `PHASE_THREADS` sets the worker thread count.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::Error;
use crate::extract::{
    extract, measure, read_contour_csv, read_obj, sample_field_grid, write_contour_csv, write_obj, write_svg,
    FieldQuantity, LevelSet,
};
use crate::field::{geometric_init, load_checkpoint, Network, ScalarField};
use crate::geometry::{load_pointcloud, normalize, CloudFormat, Domain, PointCloud, RngState};
use crate::grid::{load_grid, save_grid};
use crate::loss::{lambda_schedule, PhaseHyperParams};
use crate::metrics::{sample_surface, KdTree, MetricReport};
use crate::oracle::{
    analytic_interval_solution, minimize_grid_functional, sigma0_quadrature, solve_screened_poisson,
    varadhan_error, viscous_distance, wch_grid_energy, GridMinConfig, RegionMask,
};
use crate::render::{colorize, render_field, write_png};
use crate::trainer::{train_with_progress, TrainOutcome};
use crate::transform::{with_transform, TransformConfig};

#[derive(Parser, Debug)]
#[command(name = "phase", version, about = "Phase-field reconstruction of implicit surfaces from point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a field on a point cloud
    Train(TrainArgs),
    /// Extract the zero level set of a trained field
    Extract(ExtractArgs),
    /// Chamfer and Hausdorff distances between two geometries
    Eval(EvalArgs),
    /// Render a 2D field or grid to PNG
    Render(RenderArgs),
    /// Network-free reference computations
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Train over a list of epsilon values with lambda = c * epsilon^alpha
    Ablate(AblateArgs),
    /// Print every config key with its default
    Defaults,
}

#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable); applied after the file
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Continue from this checkpoint; iteration numbering carries on
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
    /// No progress lines on stderr
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    U,
    W,
    GradNormErr,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Grid cells per axis
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    /// Field whose zero level set is extracted (u or w)
    #[arg(long, value_enum, default_value_t = Which::U)]
    pub which: Which,
    /// .obj (3D), .svg or .csv (2D)
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also dump the sampled grid
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Point cloud (.xyz/.ply/.csv), mesh (.obj) or contour (.csv with polyline column)
    pub a: PathBuf,
    pub b: PathBuf,
    /// Surface samples per mesh or contour
    #[arg(short = 'n', long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Factor applied to all distances
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// JSON report path
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Key-value text report path
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long, required_unless_present = "grid", conflicts_with = "grid")]
    pub checkpoint: Option<PathBuf>,
    /// Grid dump; its node values are drawn directly (one pixel per node)
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Which::U)]
    pub which: Which,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Grid vs closed-form screened Poisson on (-L, L) over an epsilon sweep
    Interval(IntervalArgs),
    /// Sup error of the viscous distance on a compact core
    Varadhan(VaradhanArgs),
    /// Surface tension constant of the double well
    Sigma0 {
        #[arg(long, default_value_t = 1000)]
        quad_points: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Direct minimisation of the discretised phase functional
    Gridmin(GridminArgs),
}

#[derive(Args, Debug)]
pub struct IntervalArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub half_length: f64,
    #[arg(long, default_value_t = 2048)]
    pub cells: usize,
    /// Core nodes lie at least this fraction of the diameter from the boundary
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Interval,
    Disk,
}

#[derive(Args, Debug)]
pub struct VaradhanArgs {
    #[arg(long, value_enum, default_value_t = Shape::Interval)]
    pub shape: Shape,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub epsilons: Vec<f64>,
    /// Cells per axis (default 2048 for the interval, 128 for the disk)
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridminArgs {
    /// 1: one data point at 0 in (-1, 1); 2: circle of radius 0.5 in (-1, 1)²
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Cells per axis (default 400 in 1D, 40 in 2D)
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2_000_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    /// Profile CSV (1D: x,u,analytic; 2D: x,y,u)
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(short, long)]
    pub output_dir: PathBuf,
    #[arg(short, long)]
    pub quiet: bool,
}

/// Exit code of an error chain: the first crate error decides, anything else is an input
/// or configuration problem.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or(2, Error::exit_code)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("PHASE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a second call in the same process finds the pool already built; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
        Command::Oracle(o) => cmd_oracle(o),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Defaults => {
            print!("{}", RunConfig::documented_defaults());
            Ok(())
        }
    }
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)).into());
    }
    Ok(())
}

fn require_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Error::Config(format!(
            "output directory {} does not exist (for {})",
            p.display(),
            path.display()
        ))
        .into()),
        _ => Ok(()),
    }
}

fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes `text` to `path`, or stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Loads and prepares the training cloud described by `cfg`.
pub fn load_training_cloud(cfg: &RunConfig) -> anyhow::Result<(PointCloud, Domain)> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input point cloud (set 'input')".into()))?;
    require_file(input)?;
    let format = match cfg.input_format {
        Some(f) => f,
        None => CloudFormat::from_path(input).ok_or_else(|| {
            Error::Config(format!(
                "cannot guess the format of {}; set input_format",
                input.display()
            ))
        })?,
    };
    let mut pc = load_pointcloud(input, format)?;
    if cfg.normalize {
        pc = normalize(&pc)?.0;
    }
    let domain = cfg.domain_for(&pc)?;
    Ok((pc, domain))
}

/// Runs the training described by `cfg`, resuming when `cfg.resume` is set.
pub fn run_training(cfg: &RunConfig, quiet: bool) -> anyhow::Result<TrainOutcome> {
    cfg.validate()?;
    require_parent(&cfg.checkpoint)?;
    require_parent(&cfg.log)?;
    if let Some(r) = &cfg.resume {
        require_file(r)?;
    }
    let (pc, domain) = load_training_cloud(cfg)?;
    let mut tc = cfg.train_config();
    let network = match &cfg.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.network.config().dim != pc.dim() {
                return Err(Error::Config(format!(
                    "checkpoint {} is {}D but the cloud is {}D",
                    path.display(),
                    ck.network.config().dim,
                    pc.dim()
                ))
                .into());
            }
            tc.start_iteration = ck.iteration;
            ck.network
        }
        None => {
            let mc = cfg.mlp_config(pc.dim())?;
            let theta = geometric_init(&mc, cfg.init_radius, &mut RngState::new(cfg.seed))?;
            Network::new(mc, theta)?
        }
    };
    let every = (cfg.iterations / 20).max(1);
    let out = train_with_progress(&pc, &domain, network, &cfg.hyper, &tc, &mut |r| {
        if !quiet && (r.iter % every == 0 || r.iter == tc.start_iteration + 1) {
            eprintln!(
                "iter {:>7}  loss {:.6e}  recon {:.3e}  wch {:.3e}  normal {:.3e}  |g| {:.3e}",
                r.iter, r.total, r.recon, r.wch, r.normal, r.grad_norm
            );
        }
    })?;
    Ok(out)
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(p) = a.checkpoint {
        cfg.checkpoint = p;
    }
    if let Some(p) = a.log {
        cfg.log = p;
    }
    if let Some(p) = a.resume {
        cfg.resume = Some(p);
    }
    if let Some(n) = a.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= a.deterministic;
    let out = run_training(&cfg, a.quiet)?;
    let last = out.log.rows.last().map_or(f64::NAN, |r| r.total);
    println!(
        "iterations={}\nfinal_loss={last}\ncheckpoint={}\nlog={}",
        out.iteration,
        cfg.checkpoint.display(),
        cfg.log.display()
    );
    Ok(())
}

fn quantity(which: Which, epsilon: f64) -> FieldQuantity {
    let tc = TransformConfig::new(epsilon);
    match which {
        Which::U => FieldQuantity::U,
        Which::W => FieldQuantity::W(tc),
        Which::GradNormErr => FieldQuantity::GradNormError(tc),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn cmd_extract(a: ExtractArgs) -> anyhow::Result<()> {
    require_file(&a.checkpoint)?;
    require_parent(&a.output)?;
    if a.which == Which::GradNormErr {
        return Err(Error::Config("extract supports --which u or w".into()).into());
    }
    let ext = extension(&a.output);
    let ck = load_checkpoint(&a.checkpoint)?;
    let dim = ck.network.config().dim;
    match (dim, ext.as_str()) {
        (3, "obj") | (2, "svg") | (2, "csv") => {}
        _ => {
            return Err(Error::Config(format!(
                "output .{ext} does not fit a {dim}D field (use .obj in 3D, .svg or .csv in 2D)"
            ))
            .into())
        }
    }
    let grid = sample_field_grid(&ck.network, &ck.domain, &vec![a.resolution; dim], quantity(a.which, ck.epsilon))?;
    if let Some(g) = &a.grid_out {
        save_grid(g, &grid)?;
    }
    let ls = extract(&grid, 0.0)?;
    let mut out = create(&a.output)?;
    let io = |e| Error::io(&a.output, e);
    match &ls {
        LevelSet::Mesh(m) => write_obj(&mut out, m).map_err(io)?,
        LevelSet::Contour(c) if ext == "svg" => write_svg(&mut out, c, &ck.domain).map_err(io)?,
        LevelSet::Contour(c) => write_contour_csv(&mut out, c).map_err(io)?,
    }
    out.flush().map_err(io)?;
    if ls.is_empty() {
        eprintln!("warning: the field has no zero crossing on this grid; wrote an empty level set");
        return Ok(());
    }
    match &ls {
        LevelSet::Contour(c) => println!(
            "perimeter={}\npolylines={}\nclosed={}\nvertices={}",
            c.length(),
            c.polylines.len(),
            c.closed.iter().all(|&x| x),
            c.vertex_count()
        ),
        LevelSet::Mesh(m) => println!(
            "area={}\nvertices={}\ntriangles={}",
            m.area(),
            m.vertices.len(),
            m.triangles.len()
        ),
    }
    Ok(())
}

/// Flat points of a geometry file: clouds as-is, meshes and contours by surface sampling
/// with a fresh stream of `seed` (identical files give identical samples).
pub fn load_geometry(path: &Path, samples: usize, seed: u64) -> anyhow::Result<(Vec<f64>, usize)> {
    require_file(path)?;
    let ext = extension(path);
    let is_contour = ext == "csv"
        && fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .lines()
            .next()
            .is_some_and(|l| l.trim() == "polyline,x,y");
    let sampled = |ls: LevelSet, dim: usize| -> anyhow::Result<(Vec<f64>, usize)> {
        if ls.is_empty() {
            return Err(Error::invalid(format!("{} holds no geometry", path.display())).into());
        }
        Ok((sample_surface(&ls, samples, &mut RngState::new(seed))?, dim))
    };
    if ext == "obj" {
        return sampled(LevelSet::Mesh(read_obj(path)?), 3);
    }
    if is_contour {
        return sampled(LevelSet::Contour(read_contour_csv(path)?), 2);
    }
    let format = CloudFormat::from_path(path)
        .ok_or_else(|| Error::Config(format!("unrecognised geometry file {}", path.display())))?;
    let pc = load_pointcloud(path, format)?;
    Ok((pc.points().to_vec(), pc.dim()))
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    if !(a.scale > 0.0) || a.samples == 0 {
        return Err(Error::Config("--scale and --samples must be positive".into()).into());
    }
    for p in [&a.output, &a.text].into_iter().flatten() {
        require_parent(p)?;
    }
    let (pa, da) = load_geometry(&a.a, a.samples, a.seed).with_context(|| format!("loading {}", a.a.display()))?;
    let (pb, db) = load_geometry(&a.b, a.samples, a.seed).with_context(|| format!("loading {}", a.b.display()))?;
    if da != db {
        return Err(Error::Config(format!("geometries differ in dimension ({da}D vs {db}D)")).into());
    }
    let mut r = MetricReport::compute(&pa, &pb, da, a.seed)?;
    r.chamfer *= a.scale;
    r.chamfer_one_sided *= a.scale;
    r.hausdorff *= a.scale;
    r.hausdorff_one_sided *= a.scale;
    if let Some(p) = &a.output {
        fs::write(p, r.to_json() + "\n").map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.text {
        fs::write(p, r.to_text()).map_err(|e| Error::io(p, e))?;
    }
    print!("{}", r.to_text());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> anyhow::Result<()> {
    require_parent(&a.output)?;
    let img = if let Some(ck) = &a.checkpoint {
        require_file(ck)?;
        let ck = load_checkpoint(ck)?;
        render_field(&ck.network, &ck.domain, a.size, quantity(a.which, ck.epsilon))?
    } else {
        let path = a.grid.as_ref().expect("clap enforces one source");
        require_file(path)?;
        let g = load_grid(path)?;
        let scale = match a.which {
            Which::W => g.values().iter().fold(0.0f64, |m, v| m.max(v.abs())),
            _ => 1.0,
        };
        if a.which == Which::GradNormErr {
            let mut c = g.clone();
            c.values_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            colorize(&c, None, scale)?
        } else {
            colorize(&g, Some(&g), scale)?
        }
    };
    write_png(&a.output, &img)?;
    println!("image={}x{}\npath={}", img.width, img.height, a.output.display());
    Ok(())
}

fn interval_mask(half_length: f64, cells: usize) -> anyhow::Result<RegionMask> {
    Ok(RegionMask::from_level_set(
        Domain::cube(1, -half_length, half_length),
        vec![cells],
        |x| x[0].abs() - half_length,
        1.0,
    )?)
}

fn cmd_oracle(o: OracleCommand) -> anyhow::Result<()> {
    match o {
        OracleCommand::Sigma0 { quad_points, output } => {
            let s = sigma0_quadrature(quad_points)?;
            emit(output.as_deref(), &format!("quad_points,sigma0,abs_error\n{quad_points},{s},{}\n", (s - 2.0).abs()))
        }
        OracleCommand::Interval(a) => {
            if a.epsilons.iter().any(|e| !(*e > 0.0)) || !(a.half_length > 0.0) {
                return Err(Error::Config("epsilons and half_length must be positive".into()).into());
            }
            let mask = interval_mask(a.half_length, a.cells)?;
            let errs = varadhan_error(&mask, &a.epsilons, a.margin)?;
            let mut csv = String::from("epsilon,grid_max_error,varadhan_error,w_centre_deficit,sqrt_eps_log2,w_half\n");
            for (&eps, &verr) in a.epsilons.iter().zip(&errs) {
                let u = solve_screened_poisson(&mask, eps, 1e-13)?;
                let mut worst = 0.0f64;
                for i in 0..u.len() {
                    let x = u.axis_coord(0, i);
                    worst = worst.max((u.values()[i] - analytic_interval_solution(x, a.half_length, eps)?.0).abs());
                }
                let w = viscous_distance(&mask, eps, 1e-13)?;
                let centre = w.values()[w.nearest_node(&[0.0])];
                let (_, w_half) = analytic_interval_solution(0.5 * a.half_length, a.half_length, eps)?;
                csv.push_str(&format!(
                    "{eps},{worst},{verr},{},{},{w_half}\n",
                    a.half_length - centre,
                    eps.sqrt() * std::f64::consts::LN_2
                ));
            }
            emit(a.output.as_deref(), &csv)
        }
        OracleCommand::Varadhan(a) => {
            let mask = match a.shape {
                Shape::Interval => interval_mask(1.0, a.cells.unwrap_or(2048))?,
                Shape::Disk => {
                    let r = a.radius;
                    let n = a.cells.unwrap_or(128);
                    RegionMask::from_level_set(
                        Domain::cube(2, -1.0, 1.0),
                        vec![n, n],
                        move |x| (x[0] * x[0] + x[1] * x[1]).sqrt() - r,
                        1.0,
                    )?
                }
            };
            let errs = varadhan_error(&mask, &a.epsilons, a.margin)?;
            let mut csv = String::from("epsilon,sup_error\n");
            for (e, v) in a.epsilons.iter().zip(errs) {
                csv.push_str(&format!("{e},{v}\n"));
            }
            emit(a.output.as_deref(), &csv)
        }
        OracleCommand::Gridmin(a) => cmd_gridmin(a),
    }
}

fn cmd_gridmin(a: GridminArgs) -> anyhow::Result<()> {
    let hyper = PhaseHyperParams {
        epsilon: a.epsilon,
        lambda: a.lambda,
        ..Default::default()
    };
    let (pc, domain, res) = match a.dim {
        1 => (
            PointCloud::new(1, vec![0.0], None)?,
            Domain::cube(1, -1.0, 1.0),
            vec![a.resolution.unwrap_or(400)],
        ),
        2 => {
            let pts = (0..64)
                .flat_map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / 64.0;
                    [0.5 * t.cos(), 0.5 * t.sin()]
                })
                .collect();
            let n = a.resolution.unwrap_or(40);
            (PointCloud::new(2, pts, None)?, Domain::cube(2, -1.0, 1.0), vec![n, n])
        }
        d => return Err(Error::Config(format!("gridmin supports --dim 1 or 2 (got {d})")).into()),
    };
    let cfg = GridMinConfig {
        max_iterations: a.max_iterations,
        rel_tol: a.rel_tol,
        ..GridMinConfig::new(res)
    };
    let r = minimize_grid_functional(&pc, &domain, &hyper, &cfg, &mut RngState::new(a.seed))?;
    if let Some(g) = &a.grid_out {
        save_grid(g, &r.grid)?;
    }
    let g = &r.grid;
    let mut csv = Vec::new();
    if a.dim == 1 {
        let profile = |x: f64| x.signum() * (1.0 - (-x.abs() / a.epsilon.sqrt()).exp());
        writeln!(csv, "x,u,analytic")?;
        for i in 0..g.len() {
            let x = g.axis_coord(0, i);
            writeln!(csv, "{x},{},{}", g.values()[i], profile(x))?;
        }
    } else {
        writeln!(csv, "x,y,u")?;
        for i in 0..g.len() {
            let p = g.node_coords(i);
            writeln!(csv, "{},{},{}", p[0], p[1], g.values()[i])?;
        }
    }
    let energy = wch_grid_energy(g, a.epsilon);
    eprintln!(
        "iterations={} energy={} scaled_wch_energy={}",
        r.iterations,
        r.energy,
        energy / a.epsilon.sqrt()
    );
    emit(a.output.as_deref(), &String::from_utf8(csv)?)
}

/// Mean `‖∇w‖` over uniform box samples whose distance to the nearest data point lies in
/// `[BAND.0, BAND.1]`.
pub const BAND: (f64, f64) = (0.05, 0.25);

pub fn band_mean_grad_w(field: &dyn ScalarField, pc: &PointCloud, domain: &Domain, epsilon: f64, seed: u64) -> anyhow::Result<f64> {
    let tree = KdTree::new(pc.points(), pc.dim())?;
    let tc = TransformConfig::new(epsilon);
    let xs = crate::geometry::sample_uniform(domain, 8192, &mut RngState::derive(seed, u64::MAX));
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs.chunks(pc.dim()) {
        let d = tree.nearest(x).1.sqrt();
        if d >= BAND.0 && d <= BAND.1 {
            let e = with_transform(field.value_and_grad(x)?, &tc);
            let g = e.grad_w.expect("transform fills grad_w");
            sum += g.iter().map(|v| v * v).sum::<f64>().sqrt();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no samples fell into the measurement band").into());
    }
    Ok(sum / n as f64)
}

fn cmd_ablate(a: AblateArgs) -> anyhow::Result<()> {
    let mut base = a.config.load()?;
    if let Some(p) = a.input {
        base.input = Some(p);
    }
    if let Some(e) = a.epsilons {
        base.ablate_epsilons = e;
    }
    if let Some(c) = a.c {
        base.ablate_c = c;
    }
    if let Some(al) = a.alpha {
        base.ablate_alpha = al;
    }
    if !a.output_dir.is_dir() {
        return Err(Error::Config(format!("output directory {} does not exist", a.output_dir.display())).into());
    }
    base.validate()?;
    let (pc, domain) = load_training_cloud(&base)?;
    if pc.dim() != 2 {
        return Err(Error::Config("ablate renders 2D fields; use a 2D point cloud".into()).into());
    }
    let mut csv = String::from("epsilon,lambda,alpha_in_range,final_loss,perimeter,mean_grad_w_band,render\n");
    for (i, &eps) in base.ablate_epsilons.iter().enumerate() {
        let (lambda, in_range) = lambda_schedule(eps, base.ablate_c, base.ablate_alpha)?;
        if !in_range && i == 0 {
            eprintln!(
                "warning: alpha = {} lies outside the range where the reconstruction weight vanishes slowly enough",
                base.ablate_alpha
            );
        }
        let mut cfg = base.clone();
        cfg.hyper.epsilon = eps;
        cfg.hyper.lambda = lambda;
        cfg.checkpoint = a.output_dir.join(format!("eps_{i}.ckpt"));
        cfg.log = a.output_dir.join(format!("eps_{i}_log.csv"));
        cfg.resume = None;
        if !a.quiet {
            eprintln!("epsilon {eps}: lambda {lambda}");
        }
        let out = run_training(&cfg, a.quiet)?;
        let png = a.output_dir.join(format!("eps_{i}.png"));
        let img = render_field(&out.network, &domain, cfg.resolution, FieldQuantity::U)?;
        write_png(&png, &img)?;
        let grid = sample_field_grid(&out.network, &domain, &[cfg.resolution; 2], FieldQuantity::U)?;
        let perimeter = measure(&extract(&grid, 0.0)?).unwrap_or(0.0);
        let band = band_mean_grad_w(&out.network, &pc, &domain, eps, cfg.seed)?;
        let last = out.log.rows.last().map_or(f64::NAN, |r| r.total);
        csv.push_str(&format!(
            "{eps},{lambda},{in_range},{last},{perimeter},{band},{}\n",
            png.file_name().unwrap().to_string_lossy()
        ));
    }
    let summary = a.output_dir.join("summary.csv");
    fs::write(&summary, &csv).map_err(|e| Error::io(&summary, e))?;
    print!("{csv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_exit_with_two() {
        assert_eq!(run(["phase", "no-such-command"]), 2);
        assert_eq!(run(["phase", "train", "--set", "bogus=1", "--input", "x.xyz"]), 2);
        assert_eq!(run(["phase", "--help"]), 0);
    }

    #[test]
    fn crate_errors_keep_their_exit_code() {
        let e: anyhow::Error = Error::NonFinite("x".into()).into();
        assert_eq!(exit_code(&e.context("while training")), 3);
        let e: anyhow::Error = Error::Config("x".into()).into();
        assert_eq!(exit_code(&e), 2);
    }
}
