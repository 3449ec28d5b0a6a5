//! Command-line front end: data generation, training, evaluation,
//! prediction, field export and the efficiency benchmark.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::BoundaryMode;
use crate::io::{read_points_csv, snapshot_points, write_field_csv, write_snapshot_vtk, write_vtk, FieldPoint};
use crate::metrics::{evaluate, MetricReport};
use crate::network::Ensemble;
use crate::oracle::{
    build_grid, evaluation_set, export_supervision, frame_time_baseline, solve, BoundarySet, StructuredGrid,
};
use crate::sampling::{Category, SampleSet};
use crate::trainer::{
    checkpoint_load, checkpoint_save, initial_ensemble, predict, train, write_loss_log, TrainReport,
};

pub const CONFIG_KEYS: &str = "\
Configuration keys (JSON; every key optional, unknown keys rejected):
  mode                                constant | gaussian top-surface temperature
  seed                                master seed for sampling, initialization and data
  geometry.length_x, width_y, height_z         box extents, m
  geometry.pipe_axis_xy               pipe axis position (x, y), m
  geometry.r_coolant, r_cucrzr_outer, r_cu_outer  shell radii, m
  geometry.convective.h, t_fluid      coolant heat transfer coefficient W/(m^2 K), temperature degC
  sampling.budget.{cucrzr, cu, w, adiabatic, top, convective,
                   iface_cucrzr_cu, iface_cu_w, initial}   collocation points per category
  sampling.t_range                    training time window [t0, t1], s
  sampling.top_bias_fraction          share of top points drawn in the heated band (Select)
  sampling.trust_region.{r, buffer_capacity, sigma_floor, sigma_init}   region optimization
  data.oracle.cell_size               finite-difference cell size, m
  data.oracle.t_end, snapshot_stride, t_init    transient horizon s, stored-step stride, initial temperature degC
  data.oracle.solver.{dt, cg_tol, cg_max_iter}  time step s and linear solver controls
  data.supervision.{w, cu, cucrzr}    supervision points per material (mode default when null)
  data.eval_points                    evaluation set size
  network.widths                      layer widths, input 4 and output 1
  network.activation                  swish | tanh | relu | gelu | sine (hidden layers)
  network.omega0                      frequency of the sine feature layer
  network.output_bias_init            initial output bias, degC
  optim.{lr_max, lr_min, beta1, beta2, eps}   Adam with cosine annealing
  optim.config                        combine loss gradients with ConFIG (false: plain sum)
  weights                             eight loss weights: constant, adiabatic, convective, heat,
                                      consistency, flux, init, data
  train.epochs, batch_size            epochs; collocation points per epoch (null: full set)
  train.region_every                  epochs between region perturbations
  train.use_multidomain, use_data_loss, use_region_opt   ablation switches
  train.log_every                     progress cadence in epochs (0: silent)";

#[derive(Debug, Parser)]
#[command(name = "hfpinn", version, about = "Multi-domain PINN and finite-difference reference for a divertor monoblock")]
#[command(after_long_help = CONFIG_KEYS)]
pub struct Cli {
    /// JSON configuration file; built-in profile when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in profile used when no configuration file is given.
    #[arg(long, value_enum, default_value_t = Profile::Full, global = true)]
    pub profile: Profile,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Constant,
    Gaussian,
}

impl From<ModeArg> for BoundaryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Constant => BoundaryMode::Constant,
            ModeArg::Gaussian => BoundaryMode::Gaussian,
        }
    }
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Overrides the configured top-surface mode.
    #[arg(long, value_enum, global = true)]
    pub mode: Option<ModeArg>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the reference transient and write supervision, evaluation and
    /// snapshot files.
    GenData(GenDataArgs),
    /// Train the network ensemble on a generated data directory.
    Train(TrainArgs),
    /// Score a checkpoint on the evaluation set of a data directory.
    Eval(EvalArgs),
    /// Predict temperatures at the points of an `x,y,z,t` CSV file.
    Predict(PredictArgs),
    /// Predict the field on a regular grid at one time (CSV and VTK).
    ExportField(ExportArgs),
    /// Time the reference solver per frame against batched inference.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Write every n-th stored snapshot as CSV and VTK (the last one is
    /// always written).
    #[arg(long, default_value_t = 50)]
    pub frame_every: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for checkpoints, loss log and report.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Single network for all materials (MD off).
    #[arg(long)]
    pub no_md: bool,
    /// Drop the supervision loss (DATA off).
    #[arg(long)]
    pub no_data: bool,
    /// Point-wise instead of region optimization (Set off).
    #[arg(long)]
    pub no_region: bool,
    /// Sum loss gradients instead of ConFIG (Config off).
    #[arg(long)]
    pub no_config: bool,
    /// Share of top-surface points in the heated band (Select).
    #[arg(long)]
    pub select: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with columns x,y,z,t (m, s).
    #[arg(long)]
    pub points: PathBuf,
    /// Output CSV (`x,y,z,t,T`).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Time of the exported field, s.
    #[arg(long)]
    pub time: f64,
    /// Grid cells per axis, e.g. 60,56,24; oracle resolution when absent.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Output prefix; `.csv` and `.vtk` are appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained checkpoint; an untrained ensemble of the configured shape
    /// otherwise (inference cost does not depend on the weights).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub repeats: usize,
    /// Also write the JSON result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reproducibility record of a generated data directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataManifest {
    pub mode: BoundaryMode,
    pub seed: u64,
    pub grid_dims: [usize; 3],
    pub grid_spacing: [f64; 3],
    pub solid_cells: usize,
    pub frames: usize,
    pub supervision_rows: usize,
    pub eval_points: usize,
    pub files: Vec<String>,
    pub config: TrainConfig,
}

pub fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrainConfig::load(path)?,
        None => match cli.profile {
            Profile::Full => TrainConfig::default(),
            Profile::Desk => TrainConfig::desk(cli.overrides.mode.map_or(BoundaryMode::Constant, Into::into)),
        },
    };
    if let Some(m) = cli.overrides.mode {
        cfg.mode = m.into();
    }
    if let Some(s) = cli.overrides.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&cfg, a),
        Command::Train(a) => train_cmd(cfg, a),
        Command::Eval(a) => eval_cmd(&cfg, a),
        Command::Predict(a) => predict_cmd(&cfg, a),
        Command::ExportField(a) => export_cmd(&cfg, a),
        Command::Bench(a) => bench_cmd(&cfg, a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", path.display())))
    })?))
}

fn open(path: &Path, hint: &str) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidConfig(format!("cannot open {}: {e}; {hint}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen_data(cfg: &TrainConfig, a: &GenDataArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = build_grid(&cfg.geometry, cfg.data.oracle.cell_size)?;
    let bc = BoundarySet::monoblock(cfg.mode, cfg.geometry.convective);
    let o = &cfg.data.oracle;
    log::info!("solving {:?} grid to t = {} s", grid.dims, o.t_end);
    let series = solve(&grid, &bc, o.t_end, o.solver, o.t_init, o.snapshot_stride)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let supervision = export_supervision(&grid, &series, &cfg.supervision_budget(), &mut rng)?;
    let eval = evaluation_set(&grid, &series, cfg.data.eval_points, &mut rng)?;

    let mut files = vec!["supervision.csv".to_string(), "eval.csv".to_string()];
    supervision.write_csv(create(&a.out.join("supervision.csv"))?)?;
    let eval_rows: Vec<FieldPoint> =
        eval.points.iter().zip(&eval.truth).map(|((p, t), v)| FieldPoint { pos: *p, t: *t, value: *v }).collect();
    write_field_csv(&eval_rows, create(&a.out.join("eval.csv"))?)?;
    let every = a.frame_every.max(1);
    for (i, snap) in series.iter().enumerate() {
        if i % every != 0 && i + 1 != series.len() {
            continue;
        }
        let stem = format!("field_{i:04}");
        write_field_csv(&snapshot_points(&grid, snap), create(&a.out.join(format!("{stem}.csv")))?)?;
        write_snapshot_vtk(&grid, snap, cfg.geometry.convective.t_fluid, create(&a.out.join(format!("{stem}.vtk")))?)?;
        files.push(format!("{stem}.csv"));
        files.push(format!("{stem}.vtk"));
    }
    let manifest = DataManifest {
        mode: cfg.mode,
        seed: cfg.seed,
        grid_dims: grid.dims,
        grid_spacing: grid.spacing,
        solid_cells: grid.len() - grid.count(None),
        frames: series.len(),
        supervision_rows: supervision.len(),
        eval_points: eval.points.len(),
        files,
        config: cfg.clone(),
    };
    write_json(&manifest, &a.out.join("manifest.json"))?;
    println!("wrote {} supervision rows and {} evaluation points to {}", supervision.len(), eval.points.len(), a.out.display());
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<DataManifest> {
    let hint = format!("run `hfpinn gen-data --out {}` first", dir.display());
    Ok(serde_json::from_reader(open(&dir.join("manifest.json"), &hint)?)?)
}

fn read_eval(dir: &Path) -> Result<Vec<FieldPoint>> {
    let hint = format!("run `hfpinn gen-data --out {}` first", dir.display());
    read_points_csv(open(&dir.join("eval.csv"), &hint)?)
}

fn score(ens: &Ensemble, cfg: &TrainConfig, rows: &[FieldPoint], mode: BoundaryMode) -> Result<MetricReport> {
    let points: Vec<_> = rows.iter().map(|r| (r.pos, r.t)).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let pred = predict(ens, &cfg.geometry, &points)?;
    let mut report = evaluate(&pred.values, &truth)?;
    report.mode = Some(format!("{mode:?}").to_lowercase());
    Ok(report)
}

fn train_cmd(mut cfg: TrainConfig, a: &TrainArgs) -> Result<()> {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.train.use_multidomain &= !a.no_md;
    cfg.train.use_data_loss &= !a.no_data;
    cfg.train.use_region_opt &= !a.no_region;
    cfg.optim.config &= !a.no_config;
    if let Some(f) = a.select {
        cfg.sampling.top_bias_fraction = f;
    }
    cfg.validate()?;
    let manifest = read_manifest(&a.data)?;
    if manifest.mode != cfg.mode {
        return Err(Error::InvalidConfig(format!(
            "data in {} was generated for {:?} mode but training is configured for {:?}",
            a.data.display(),
            manifest.mode,
            cfg.mode
        )));
    }
    let sup_path = a.data.join("supervision.csv");
    let hint = format!("run `hfpinn gen-data --out {}` first", a.data.display());
    let supervision = SampleSet::read_csv(open(&sup_path, &hint)?)?;
    if cfg.train.use_data_loss && supervision.count(Category::Supervision) == 0 {
        return Err(Error::InvalidConfig(format!("{} holds no supervision rows", sup_path.display())));
    }

    std::fs::create_dir_all(&a.out)?;
    let outcome = train(&cfg, &supervision)?;
    let checkpoint = a.out.join("checkpoint.json");
    let best_checkpoint = a.out.join("checkpoint_best.json");
    let loss_log = a.out.join("loss_log.csv");
    checkpoint_save(&outcome.ensemble, &checkpoint)?;
    checkpoint_save(&outcome.best, &best_checkpoint)?;
    write_loss_log(&outcome.log, create(&loss_log)?)?;
    write_json(&cfg, &a.out.join("config.json"))?;
    let metrics = match read_eval(&a.data) {
        Ok(rows) => Some(score(&outcome.ensemble, &cfg, &rows, cfg.mode)?),
        Err(_) => None,
    };
    let report = TrainReport {
        loss_log,
        checkpoint,
        best_checkpoint,
        epochs: cfg.train.epochs,
        best_epoch: outcome.best_epoch,
        best_total: outcome.best_epoch.map(|e| outcome.log[e].total),
        train_seconds: outcome.train_seconds,
        metrics: metrics.clone(),
    };
    write_json(&report, &a.out.join("report.json"))?;
    println!("trained {} epochs in {:.1} s", cfg.train.epochs, outcome.train_seconds);
    if let Some(m) = metrics {
        println!("{:<8} {:>10} {:>10} {:>10} {:>8}", "mode", "rMAE", "rRMSE", "MAE", "N");
        println!("{:<8} {:>10.4} {:>10.4} {:>10.3} {:>8}", m.mode.as_deref().unwrap_or("-"), m.rmae, m.rrmse, m.mae, m.n);
    }
    Ok(())
}

fn eval_cmd(cfg: &TrainConfig, a: &EvalArgs) -> Result<()> {
    let ens = checkpoint_load(&a.checkpoint)?;
    let manifest = read_manifest(&a.data)?;
    let report = score(&ens, cfg, &read_eval(&a.data)?, manifest.mode)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn predict_cmd(cfg: &TrainConfig, a: &PredictArgs) -> Result<()> {
    let ens = checkpoint_load(&a.checkpoint)?;
    let rows = read_points_csv(open(&a.points, "expected a CSV with columns x,y,z,t")?)?;
    let points: Vec<_> = rows.iter().map(|r| (r.pos, r.t)).collect();
    let pred = predict(&ens, &cfg.geometry, &points)?;
    let out: Vec<FieldPoint> =
        rows.iter().zip(&pred.values).map(|(r, v)| FieldPoint { value: *v, ..*r }).collect();
    write_field_csv(&out, create(&a.out)?)?;
    log::info!("predicted {} points in {:.2} ms", out.len(), pred.seconds * 1e3);
    Ok(())
}

/// Regular export grid: explicit cell counts or the oracle's resolution.
fn export_grid(cfg: &TrainConfig, dims: Option<&[usize]>) -> Result<StructuredGrid> {
    let g = &cfg.geometry;
    match dims {
        None => build_grid(g, cfg.data.oracle.cell_size),
        Some(d) => {
            if d.len() != 3 {
                return Err(Error::InvalidConfig(format!("--dims takes three counts, got {d:?}")));
            }
            if d.contains(&0) {
                return Err(Error::InvalidConfig(format!("empty export grid {d:?}")));
            }
            let dims = [d[0], d[1], d[2]];
            let ext = g.extents();
            let spacing = std::array::from_fn(|i| ext[i] / dims[i] as f64);
            Ok(StructuredGrid::from_fn(dims, spacing, |p| g.classify_material(p).material()))
        }
    }
}

fn export_cmd(cfg: &TrainConfig, a: &ExportArgs) -> Result<()> {
    let ens = checkpoint_load(&a.checkpoint)?;
    let grid = export_grid(cfg, a.dims.as_deref())?;
    let [t0, t1] = cfg.sampling.t_range;
    let extrapolated = !(t0..=t1).contains(&a.time);
    if extrapolated {
        log::warn!("t = {} s lies outside the training window [{t0}, {t1}] s; values are extrapolated", a.time);
    }
    let solid: Vec<usize> = (0..grid.len()).filter(|&i| grid.cells[i].is_some()).collect();
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        solid.into_iter().partition(|&i| ens.net_for_point(&cfg.geometry, grid.center(i)).is_ok());
    let filtered = outside.len();
    let points: Vec<_> = inside.iter().map(|&i| (grid.center(i), a.time)).collect();
    let pred = predict(&ens, &cfg.geometry, &points)?;
    let mut values = vec![None; grid.len()];
    let mut rows = Vec::with_capacity(points.len());
    for ((&i, (pos, _)), v) in inside.iter().zip(&points).zip(&pred.values) {
        values[i] = Some(*v);
        rows.push(FieldPoint { pos: *pos, t: a.time, value: *v });
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig("export grid contains no solid cells".into()));
    }
    let csv_path = a.out.with_extension("csv");
    let vtk_path = a.out.with_extension("vtk");
    write_field_csv(&rows, create(&csv_path)?)?;
    write_vtk(&grid, &values, cfg.geometry.convective.t_fluid, &format!("prediction t={}", a.time), create(&vtk_path)?)?;
    let summary = json!({
        "csv": csv_path,
        "vtk": vtk_path,
        "dims": grid.dims,
        "rows": rows.len(),
        "filtered_outside_domain": filtered,
        "time": a.time,
        "extrapolated": extrapolated,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn bench_cmd(cfg: &TrainConfig, a: &BenchArgs) -> Result<()> {
    let ens = match &a.checkpoint {
        Some(p) => checkpoint_load(p)?,
        None => initial_ensemble(cfg)?,
    };
    let grid = build_grid(&cfg.geometry, cfg.data.oracle.cell_size)?;
    let bc = BoundarySet::monoblock(cfg.mode, cfg.geometry.convective);
    let (per_frame, series) = frame_time_baseline(&grid, &bc, &cfg.data.oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eval = evaluation_set(&grid, &series, cfg.data.eval_points, &mut rng)?;
    predict(&ens, &cfg.geometry, &eval.points)?;
    let mut best = f64::INFINITY;
    for _ in 0..a.repeats.max(1) {
        best = best.min(predict(&ens, &cfg.geometry, &eval.points)?.seconds);
    }
    let report = json!({
        "oracle_seconds_per_frame": per_frame,
        "oracle_frames": series.len() - 1,
        "inference_seconds": best,
        "inference_points": eval.points.len(),
        "ratio": per_frame / best,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        write_json(&report, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn leaf_keys(prefix: &str, v: &serde_json::Value, out: &mut Vec<String>) {
        match v {
            serde_json::Value::Object(map) => {
                for (k, child) in map {
                    leaf_keys(k, child, out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }

    #[test]
    fn help_lists_every_config_key() {
        let value = serde_json::to_value(TrainConfig::default()).unwrap();
        let mut keys = Vec::new();
        leaf_keys("", &value, &mut keys);
        let help = Cli::command().render_long_help().to_string();
        for k in keys {
            assert!(help.contains(&k), "help misses `{k}`");
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert!(Cli::try_parse_from(["hfpinn", "bench", "--bogus"]).is_err());
    }
}
