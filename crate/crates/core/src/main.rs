use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use parkour::curriculum::{CurriculumState, Stage};
use parkour::env::{EnvMode, ParkourEnv};
use parkour::neural::policy::{OraclePolicy, StudentPolicy};
use parkour::neural::ParamStore;
use parkour::orchestration::distill::{collector_loop, trainer_loop, StopWhen};
use parkour::orchestration::evaluate::{evaluate, evaluation_layout, Agent, FallAgent, OracleAgent, StudentAgent, TeleportAgent};
use parkour::orchestration::train::{stage_env, train_stage};
use parkour::orchestration::trajectory::{replay_csv, TrajectoryFile};
use parkour::orchestration::RunConfig;
use parkour::perception::render_depth;
use parkour::terrain::{assemble_track_grid, HeightField, ObstacleKind, TrackLayout};

#[derive(Parser)]
#[command(name = "parkour", version, about = "Desk-scale humanoid parkour training pipeline")]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build terrains or convert heightfield files.
    Terrain {
        #[command(subcommand)]
        action: TerrainCmd,
    },
    /// Train the oracle with PPO.
    Train {
        stage: StageArg,
        /// Checkpoint to start from; `train parkour` usually starts from the plane checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        /// Output directory (default: <output_dir>/<stage>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one distillation process.
    Distill {
        role: RoleArg,
        /// Collector id.
        #[arg(long, default_value_t = 0)]
        id: u32,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Stop after this many files (collector) or updates (trainer).
        #[arg(long)]
        max: Option<u64>,
    },
    /// Success rate and distance per terrain on the evaluation tracks.
    Eval {
        /// Oracle or student snapshot. Without it `--agent` picks a scripted agent.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// `all` or comma-separated obstacle kinds.
        #[arg(long, default_value = "all")]
        layout: String,
        #[arg(long, value_enum)]
        agent: Option<ScriptedAgent>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump a trajectory file as CSV.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Micro-benchmarks.
    Bench {
        target: BenchArg,
        #[arg(long, default_value_t = 200)]
        iters: usize,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Subcommand)]
enum TerrainCmd {
    /// Assemble a layout and write `terrain.hfield` and `terrain.png`.
    Gen {
        #[arg(long, value_enum, default_value = "training")]
        layout: LayoutArg,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Convert a heightfield file to PNG (or CSV by extension).
    Dump {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Plane,
    Parkour,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Trainer,
    Collector,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Training,
    Plane,
    Evaluation,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScriptedAgent {
    Teleport,
    Fall,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchArg {
    Raycast,
    Step,
}

fn parse_kinds(s: &str) -> anyhow::Result<Vec<ObstacleKind>> {
    if s == "all" {
        return Ok(ObstacleKind::ALL.to_vec());
    }
    s.split(',')
        .map(|k| {
            ObstacleKind::from_name(k.trim())
                .ok_or_else(|| parkour::Error::Config(format!("unknown obstacle kind {k:?}")).into())
        })
        .collect()
}

fn stop_after(duration: Option<f64>, max: Option<u64>) -> StopWhen {
    StopWhen {
        max_items: max,
        deadline: duration.map(|s| Instant::now() + Duration::from_secs_f64(s)),
        flag: None,
    }
}

fn terrain(cfg: &RunConfig, action: TerrainCmd) -> anyhow::Result<()> {
    match action {
        TerrainCmd::Gen { layout, out } => {
            let layout = match layout {
                LayoutArg::Training => cfg.terrain.layout(Stage::Parkour)?,
                LayoutArg::Plane => cfg.terrain.layout(Stage::Plane)?,
                LayoutArg::Evaluation => TrackLayout::evaluation(&ObstacleKind::ALL)?,
            };
            parkour::io_util::ensure_dir(&out)?;
            let track = assemble_track_grid(&layout, cfg.seed)?;
            track.field.write_hfield(&out.join("terrain.hfield"))?;
            track.field.write_png(&out.join("terrain.png"))?;
            println!(
                "{} x {} nodes, heights {:.3}..{:.3} m -> {}",
                track.field.length,
                track.field.width,
                track.field.min_height(),
                track.field.max_height(),
                out.display()
            );
        }
        TerrainCmd::Dump { input, out } => {
            let f = HeightField::read_hfield(&input)?;
            if out.extension().is_some_and(|e| e == "csv") {
                let mut s = String::from("x,y,z\n");
                for ix in 0..f.length {
                    for iy in 0..f.width {
                        let (x, y) = f.node_position(ix, iy);
                        s.push_str(&format!("{x},{y},{}\n", f.get(ix, iy)));
                    }
                }
                std::fs::write(&out, s).with_context(|| out.display().to_string())?;
            } else {
                f.write_png(&out)?;
            }
        }
    }
    Ok(())
}

fn load_agent(cfg: &RunConfig, snapshot: Option<&Path>, scripted: Option<ScriptedAgent>) -> anyhow::Result<Box<dyn Agent>> {
    match (snapshot, scripted) {
        (Some(_), Some(_)) => Err(parkour::Error::Config("use either --snapshot or --agent".into()).into()),
        (None, None) => Err(parkour::Error::Config("eval needs --snapshot or --agent".into()).into()),
        (None, Some(ScriptedAgent::Teleport)) => Ok(Box::new(TeleportAgent { speed: 1.0 })),
        (None, Some(ScriptedAgent::Fall)) => Ok(Box::new(FallAgent)),
        (Some(path), None) => {
            let store = ParamStore::load(path)?;
            if store.params().iter().any(|p| p.name.starts_with("depth.")) {
                let s = StudentPolicy::from_store(cfg.policy.clone(), &store)?;
                Ok(Box::new(StudentAgent::new(Arc::new(s), cfg.deploy)?))
            } else {
                let o = OraclePolicy::from_store(cfg.policy.clone(), &store)?;
                Ok(Box::new(OracleAgent::new(Arc::new(o))))
            }
        }
    }
}

fn bench(cfg: &RunConfig, target: BenchArg, iters: usize) -> anyhow::Result<()> {
    let layout = TrackLayout::evaluation(&ObstacleKind::ALL)?;
    let track = Arc::new(assemble_track_grid(&layout, cfg.seed)?);
    let mut env = ParkourEnv::new(cfg.env.clone(), EnvMode::Train, track.clone(), CurriculumState { row: 0, col: 0 }, 0.0, cfg.seed)?;
    let t0 = Instant::now();
    match target {
        BenchArg::Raycast => {
            let pose = env.state.pose();
            let mut sum = 0.0;
            for _ in 0..iters {
                sum += render_depth(&track.field, &env.sim.dr.camera, &pose, &cfg.env.render).pixels[0];
            }
            let dt = t0.elapsed().as_secs_f64();
            let rays = (iters * cfg.env.render.rows * cfg.env.render.cols) as f64;
            println!("{iters} frames in {dt:.3} s: {:.1} frames/s, {:.0} rays/s (checksum {sum:.3})", iters as f64 / dt, rays / dt);
        }
        BenchArg::Step => {
            for _ in 0..iters {
                env.step(&[0.0; 19]);
            }
            let dt = t0.elapsed().as_secs_f64();
            println!("{iters} control steps in {dt:.3} s: {:.1} steps/s", iters as f64 / dt);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Config => print!("{}", RunConfig::default().to_toml_string()),
        Command::Terrain { action } => terrain(&cfg, action)?,
        Command::Train {
            stage,
            init,
            iterations,
            out,
        } => {
            let stage = match stage {
                StageArg::Plane => Stage::Plane,
                StageArg::Parkour => Stage::Parkour,
            };
            let mut cfg = cfg;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            let init = init.or_else(|| cfg.train.init_checkpoint.clone());
            let name = match stage {
                Stage::Plane => "plane",
                Stage::Parkour => "parkour",
            };
            let out = out.unwrap_or_else(|| cfg.output_dir.join(name));
            let r = train_stage(&cfg, stage, init.as_deref(), &out)?;
            println!(
                "{} iterations, final mean reward {:.4}; checkpoint {}, policy {}",
                r.iterations,
                r.final_mean_reward,
                r.checkpoint.display(),
                r.policy.display()
            );
        }
        Command::Distill { role, id, duration, max } => {
            let stop = stop_after(duration, max);
            match role {
                RoleArg::Trainer => {
                    let r = trainer_loop(&cfg, &stop)?;
                    println!(
                        "updates {} files {} rejected {} transitions {} elapsed {:.2} s throughput {:.1} transitions/s",
                        r.updates,
                        r.files_consumed,
                        r.files_rejected,
                        r.transitions,
                        r.elapsed_s,
                        r.throughput()
                    );
                }
                RoleArg::Collector => {
                    let r = collector_loop(&cfg, id, &stop)?;
                    println!("collector {id}: files {} transitions {}", r.files, r.transitions);
                }
            }
        }
        Command::Eval {
            snapshot,
            layout,
            agent,
            episodes,
            out,
        } => {
            let kinds = parse_kinds(&layout)?;
            let layout = evaluation_layout(&kinds)?;
            let mut agent = load_agent(&cfg, snapshot.as_deref(), agent)?;
            let mut env_cfg = stage_env(&cfg.env, Stage::Parkour);
            env_cfg.domain_randomization = cfg.eval.domain_randomization;
            let table = evaluate(
                agent.as_mut(),
                &layout,
                &env_cfg,
                episodes.unwrap_or(cfg.eval.episodes_per_terrain),
                cfg.seed,
            )?;
            print!("{}", table.to_table());
            if let Some(p) = out {
                std::fs::write(&p, table.to_csv()).with_context(|| p.display().to_string())?;
            }
        }
        Command::Replay { trajectory, out } => {
            let f = TrajectoryFile::read(&trajectory)?;
            let csv = replay_csv(&f);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| p.display().to_string())?,
                None => print!("{csv}"),
            }
        }
        Command::Bench { target, iters } => bench(&cfg, target, iters)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<parkour::Error>().map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
