use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use capscan_cli::compare::compare;
use capscan_cli::eval::{eval_checkpoint, format_summary, write_eval};
use capscan_cli::replay::{load_record, replay, ReplayOptions};
use capscan_cli::serve::{Server, ServerContext};
use capscan_cli::train::{parse_sweep, run_sweep, run_training, TrainOptions};
use capscan_cli::RunConfig;
use capscan_core::env::REPORT_TIMES;
use capscan_learn::checkpoint::Checkpoint;
use capscan_learn::train::Algo;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capscan", version, about = "Capsule coverage-scanning simulator and RL harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy, or sweep learning rates with --sweep.
    Train {
        /// Run config (TOML with [env] and [train]); defaults to the desk sphere scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides train.algo.
        #[arg(long)]
        algo: Option<Algo>,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the algorithm's learning rate.
        #[arg(long)]
        lr: Option<f64>,
        /// Overrides the algorithm's max_steps.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Stop after this many env steps, keeping the max_steps schedule.
        #[arg(long)]
        step_budget: Option<u64>,
        /// One run per rate, e.g. lr=5e-3,1e-3,5e-4,1e-4.
        #[arg(long)]
        sweep: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Also write every training episode record.
        #[arg(long)]
        save_episodes: bool,
    },
    /// Evaluate a checkpoint's deterministic policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// First env seed; episode i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment override (a run config); defaults to the checkpoint's own.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for summary.json and episodes.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-simulate an episode record and verify it step by step.
    Replay {
        #[arg(long)]
        record: PathBuf,
        /// Directory for the coverage CSV and PLY snapshots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Snapshot sim times in seconds.
        #[arg(long, value_delimiter = ',', default_values_t = REPORT_TIMES.to_vec())]
        snapshots: Vec<f64>,
    },
    /// Tabulate a manual session against a trained policy at 60/120/150 s.
    Compare {
        /// Manual session record written by the teleop server.
        #[arg(long)]
        manual: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Env seed for the policy episode; defaults to the manual session's.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for compare.csv, compare.txt and the policy episode.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the teleoperation websocket server.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Run config whose [env] the sessions use; defaults to the desk sphere.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where session records are written.
        #[arg(long, default_value = "sessions")]
        records: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::desk_sphere()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            algo,
            seed,
            lr,
            max_steps,
            step_budget,
            sweep,
            out,
            save_episodes,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            let t = &mut cfg.train;
            if let Some(a) = algo {
                t.algo = a;
            }
            if let Some(s) = seed {
                t.seed = s;
            }
            if let Some(l) = lr {
                if t.algo == Algo::Random {
                    bail!("--lr has no effect on the random baseline");
                }
                t.set_learning_rate(l);
            }
            if let Some(m) = max_steps {
                t.set_max_steps(m);
            }
            if step_budget.is_some() {
                t.step_budget = step_budget;
            }
            cfg.validate()?;
            let opts = TrainOptions { save_episodes };
            match sweep {
                Some(spec) => {
                    let lrs = parse_sweep(&spec)?;
                    let r = run_sweep(&cfg, &lrs, &out, opts)?;
                    for (lr, dir) in &r.runs {
                        println!("lr {lr:e}: {}", dir.display());
                    }
                    println!("curves: {}", r.curves.display());
                }
                None => {
                    let r = run_training(&cfg, &out, opts)?;
                    println!(
                        "{}: {} steps, {} episodes, output in {}",
                        r.manifest.run_id,
                        r.outcome.steps,
                        r.outcome.episodes,
                        out.display()
                    );
                }
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            config,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let env = match config {
                Some(p) => Some(RunConfig::load(p)?.env),
                None => None,
            };
            let (summary, _) = eval_checkpoint(&ck, env, episodes, seed)?;
            if let Some(dir) = out {
                write_eval(&dir, &summary)?;
            }
            print!("{}", format_summary(&summary));
        }
        Command::Replay { record, out, snapshots } => {
            let rec = load_record(&record)?;
            let report = replay(
                &rec,
                &ReplayOptions {
                    out_dir: out,
                    snapshot_times: snapshots,
                },
            )?;
            if let Some(d) = report.divergence {
                bail!("replay diverged at {d}");
            }
            println!(
                "{} steps replayed without divergence; final coverage {:.2} %",
                report.steps_checked, report.final_coverage
            );
            for s in &report.snapshots {
                let at = s.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
                println!("snapshot {:.0} s (step {}): {} vertices covered {at}", s.target_time, s.step, s.covered_vertices);
            }
        }
        Command::Compare {
            manual,
            checkpoint,
            seed,
            out,
        } => {
            let rec = load_record(&manual)?;
            let ck = Checkpoint::load(&checkpoint)?;
            let seed = seed.unwrap_or(rec.header.seed);
            let (report, drl) = compare(&rec, &ck, seed)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                std::fs::write(dir.join("compare.csv"), report.to_csv())?;
                std::fs::write(dir.join("compare.txt"), report.to_text())?;
                drl.save(dir.join("drl_episode.jsonl"))?;
            }
            print!("{}", report.to_text());
        }
        Command::Serve {
            port,
            host,
            config,
            records,
        } => {
            let cfg = load_config(config.as_ref())?;
            let ctx = ServerContext::new(cfg.env, &records)?;
            let server = Server::bind((host.as_str(), port), ctx)?;
            println!("teleop server listening on ws://{}", server.local_addr()?);
            server.run()?;
        }
    }
    Ok(())
}
