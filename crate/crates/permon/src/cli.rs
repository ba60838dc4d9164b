use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use permon_core::eval::{build_world, run_monitor, scenario_label, score, sweep_world};
use permon_core::grid::build_grid;
use permon_core::inject::apply;
use permon_core::scenario::{generate_scenario, simulate_lidar};
use permon_core::types::{EgoPose, ErrorKind, ObjectState};

use crate::bench::bench_latency;
use crate::config::RunConfig;
use crate::error::Result;
use crate::io;

/// Perception monitor pipeline: generate worlds, simulate LiDAR, inject faults,
/// run the sensor and plausibility checks and score them.
#[derive(Debug, Parser)]
#[command(name = "permon", version)]
pub struct Cli {
    /// Config file of `key = value` lines with dotted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the scenario layout, LiDAR noise and fault injection.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides a config key, e.g. `--set grid.cell_size=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an object stream and ego poses (objects.jsonl, ego.jsonl).
    Scenario,
    /// Simulate LiDAR sweeps for an object stream (clouds.csv).
    Lidar(StreamArgs),
    /// Inject faults into an object stream (injected.jsonl, ledger.jsonl).
    Inject(StreamArgs),
    /// Run both checks (sensor_verdicts.jsonl, fn_cells.jsonl, plausibility.jsonl).
    Monitor(MonitorArgs),
    /// Run the configured experiment grid (metrics.csv).
    Sweep,
    /// Time both checks per frame (latency.csv).
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Object stream [default: OUT/objects.jsonl].
    #[arg(long)]
    pub objects: Option<PathBuf>,
    /// Ego poses [default: OUT/ego.jsonl].
    #[arg(long)]
    pub ego: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Ground-truth stream, used for visibility [default: OUT/objects.jsonl].
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Stream to check [default: OUT/injected.jsonl].
    #[arg(long)]
    pub objects: Option<PathBuf>,
    /// Point clouds [default: OUT/clouds.csv].
    #[arg(long)]
    pub clouds: Option<PathBuf>,
    /// Ego poses [default: OUT/ego.jsonl].
    #[arg(long)]
    pub ego: Option<PathBuf>,
    /// Injection ledger; when given, the run is also scored (metrics.csv).
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Also dump the occupancy grid of this frame (grid_FRAME.csv).
    #[arg(long)]
    pub grid_frame: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Object stream; without it a world is generated from the config.
    #[arg(long, requires_all = ["clouds", "ego"])]
    pub objects: Option<PathBuf>,
    /// Point clouds.
    #[arg(long)]
    pub clouds: Option<PathBuf>,
    /// Ego poses.
    #[arg(long)]
    pub ego: Option<PathBuf>,
}

fn or_default(p: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| out.join(name))
}

impl Cli {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn frames_of(stream: &[ObjectState], ego: &[EgoPose]) -> Result<()> {
    if let Some(o) = stream.iter().find(|o| !ego.iter().any(|e| e.frame == o.frame)) {
        return Err(permon_core::Error::FrameMismatch(format!("object {} at frame {} without an ego pose", o.id, o.frame)).into());
    }
    Ok(())
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = cli.load_config()?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Scenario => {
            let s = generate_scenario(&cfg.scenario)?;
            let (objects, ego) = (out.join("objects.jsonl"), out.join("ego.jsonl"));
            io::write_objects(&objects, &s.objects)?;
            io::write_ego(&ego, &s.ego)?;
            Ok(vec![objects, ego])
        }
        Command::Lidar(a) => {
            let objects = io::read_objects(&or_default(&a.objects, out, "objects.jsonl"))?;
            let ego = io::read_ego(&or_default(&a.ego, out, "ego.jsonl"))?;
            frames_of(&objects, &ego)?;
            let clouds = ego
                .iter()
                .map(|e| {
                    let here: Vec<ObjectState> = objects.iter().filter(|o| o.frame == e.frame).copied().collect();
                    simulate_lidar(&here, e, &cfg.lidar, cfg.scenario.seed)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let path = out.join("clouds.csv");
            io::write_clouds(&path, &clouds)?;
            Ok(vec![path])
        }
        Command::Inject(a) => {
            let objects = io::read_objects(&or_default(&a.objects, out, "objects.jsonl"))?;
            let ego = io::read_ego(&or_default(&a.ego, out, "ego.jsonl"))?;
            let inj = apply(&objects, &ego, &cfg.inject)?;
            let (stream, ledger) = (out.join("injected.jsonl"), out.join("ledger.jsonl"));
            io::write_objects(&stream, &inj.stream)?;
            io::write_ledger(&ledger, &inj.ledger)?;
            Ok(vec![stream, ledger])
        }
        Command::Monitor(a) => {
            let gt = io::read_objects(&or_default(&a.gt, out, "objects.jsonl"))?;
            let objects = io::read_objects(&or_default(&a.objects, out, "injected.jsonl"))?;
            let ego = io::read_ego(&or_default(&a.ego, out, "ego.jsonl"))?;
            let clouds = io::align_clouds(io::read_clouds(&or_default(&a.clouds, out, "clouds.csv"))?, &ego)?;
            let params = cfg.monitor();
            let run = run_monitor(&gt, &objects, &clouds, &ego, &params)?;
            let mut written = vec![out.join("sensor_verdicts.jsonl"), out.join("fn_cells.jsonl"), out.join("plausibility.jsonl")];
            io::write_sensor_verdicts(&written[0], &run.sensor)?;
            io::write_fn_cells(&written[1], &run.sensor)?;
            io::write_plausibility(&written[2], &run.plausibility)?;
            if let Some(ledger) = &a.ledger {
                let ledger = io::read_ledger(ledger)?;
                let (kind, magnitude) = match ledger.first() {
                    Some(e) => (e.kind, e.magnitude),
                    None if cfg.inject.kind == ErrorKind::Noise => (ErrorKind::Noise, cfg.inject.noise_sigma),
                    None => (cfg.inject.kind, cfg.inject.magnitude),
                };
                let label = scenario_label(cfg.scenario.kind, cfg.grid.cell_size);
                let rows = score(&run, &ledger, cfg.sweep.window, &label, kind, magnitude, cfg.inject.rate);
                let path = out.join("metrics.csv");
                io::write_metrics(&path, &rows)?;
                written.push(path);
            }
            if let Some(frame) = a.grid_frame {
                let i = ego
                    .iter()
                    .position(|e| e.frame == frame)
                    .ok_or_else(|| permon_core::Error::FrameMismatch(format!("no ego pose at frame {frame}")))?;
                let grid = build_grid(&clouds[i], &ego[i], &params.grid)?;
                let path = out.join(format!("grid_{frame}.csv"));
                io::write_grid(&path, &grid)?;
                written.push(path);
            }
            Ok(written)
        }
        Command::Sweep => {
            let spec = cfg.experiment();
            let world = build_world(&spec.scenario, &spec.lidar)?;
            let rows = sweep_world(&spec, &world)?;
            let path = out.join("metrics.csv");
            io::write_metrics(&path, &rows)?;
            Ok(vec![path])
        }
        Command::Bench(a) => {
            let (objects, clouds, ego) = match (&a.objects, &a.clouds, &a.ego) {
                (Some(o), Some(c), Some(e)) => {
                    let ego = io::read_ego(e)?;
                    (io::read_objects(o)?, io::align_clouds(io::read_clouds(c)?, &ego)?, ego)
                }
                _ => {
                    let w = build_world(&cfg.scenario, &cfg.lidar)?;
                    (w.objects, w.clouds, w.ego)
                }
            };
            let rows = bench_latency(&objects, &clouds, &ego, &cfg.monitor(), cfg.bench.repetitions)?;
            let path = out.join("latency.csv");
            io::write_latency(&path, &rows)?;
            Ok(vec![path])
        }
    }
}
