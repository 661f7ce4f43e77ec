use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use robevo::env::{cartpole2, racing, swarm};
use robevo::harness::{self, EnvConfig, ExperimentConfig};
use robevo::net::genome_from_text;
use robevo::protocol::{generate_matrix, MatrixRole};
use robevo::rng::{stream_rng, Stream};
use robevo::{Environment, Network};

#[derive(Parser)]
#[command(name = "robevo", version, about = "Evolve controllers robust to environmental variation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replication of an experiment config.
    Run {
        config: PathBuf,
        /// Master seed; replication i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare finished experiments with pairwise Mann-Whitney tests.
    Analyze {
        dir: PathBuf,
        #[arg(long, num_args = 1..)]
        compare: Vec<PathBuf>,
        /// Where to write the comparison tables (defaults to `dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a saved genome for one episode and write a per-step CSV.
    Trace {
        config: PathBuf,
        genome: PathBuf,
        /// Seed for drawing the episode's conditions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            replications,
            out,
        } => run(&config, seed, replications, out),
        Command::Analyze { dir, compare, out } => analyze(dir, compare, out),
        Command::Trace {
            config,
            genome,
            seed,
            out,
        } => trace(&config, &genome, seed, &out),
    }
}

fn run(path: &Path, seed: Option<u64>, replications: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut config = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        config.protocol.seed = s;
    }
    if let Some(r) = replications {
        config.replications = r;
    }
    if let Some(o) = out {
        config.output = o;
    }
    let e = harness::run_experiment(&config)?;
    let s = &e.summary.conditions[0].stats;
    println!(
        "{} replications: median {:.4} (q1 {:.4}, q3 {:.4}), mean {:.4}; results in {}",
        s.n,
        s.median,
        s.q1,
        s.q3,
        s.mean,
        config.output.display()
    );
    Ok(())
}

fn analyze(dir: PathBuf, compare: Vec<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    if compare.is_empty() {
        bail!("--compare needs at least one other experiment directory");
    }
    let out = out.unwrap_or_else(|| dir.clone());
    let mut dirs = vec![dir];
    dirs.extend(compare);
    let table = harness::analyze(&dirs, &out)?;
    for c in &table.conditions {
        println!("{:<24} n={:<3} median {:.4}  mean {:.4}", c.name, c.stats.n, c.stats.median, c.stats.mean);
    }
    for c in &table.comparisons {
        println!("{} vs {}: U={} p={:.4} adjusted={:.4}", c.a, c.b, c.u, c.p, c.p_adjusted);
    }
    info!("tables written to {}", out.display());
    Ok(())
}

fn trace(config_path: &Path, genome_path: &Path, seed: u64, out: &Path) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let text = fs::read_to_string(genome_path).with_context(|| format!("reading {}", genome_path.display()))?;
    let (topology, weights) = genome_from_text(&text)?;
    let net = Network::new(topology, weights)?;
    let file = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    let score = match &config.env {
        EnvConfig::Cartpole2 => {
            let env = cartpole2::DoublePole::new();
            let (score, rows) = env.run_episode_traced(&net, &conditions(&env, &net, seed)?)?;
            cartpole2::write_trace_csv(file, &rows)?;
            score
        }
        EnvConfig::Racing(c) => {
            let env = racing::Racing::from_config(c)?;
            let (score, rows) = env.run_episode_traced(&net, &conditions(&env, &net, seed)?)?;
            racing::write_trace_csv(file, &rows, env.track())?;
            score
        }
        EnvConfig::Swarm(c) => {
            let env = swarm::Swarm::from_config(c)?;
            let (score, frames) = env.run_episode_traced(&net, &conditions(&env, &net, seed)?)?;
            swarm::write_replay_csv(file, &frames)?;
            score
        }
    };
    println!("episode score {score}; trace in {}", out.display());
    Ok(())
}

fn conditions<E: Environment>(env: &E, net: &Network, seed: u64) -> Result<Vec<f64>> {
    if net.topology() != env.topology() {
        bail!("genome is for a {} network, {} needs {}", net.topology(), env.name(), env.topology());
    }
    let mut rng = stream_rng(seed, Stream::Environment);
    let m = generate_matrix(&mut rng, &env.condition_ranges(), 1, MatrixRole::PostEvaluation);
    Ok(m.row(0).to_vec())
}
