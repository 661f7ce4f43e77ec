//! Batch experiments: seeded replications of one configuration, result
//! files, and pairwise comparison of finished experiments.
//!
//! Files written by [`run_experiment`] into the output directory:
//!
//! | file | columns |
//! |---|---|
//! | `rep_NNN/gen.csv` | generation, episodes_used, best_fitness, best_performance, best_so_far |
//! | `rep_NNN/best_genome.txt` | network shape, then one weight per line |
//! | `summary.csv` | replication, seed, best_performance, evaluation_at_best, episodes_used, budget, generations, budget_underrun |
//! | `stats.csv` | n, mean, median, q1, q3, min, max |
//! | `curve.csv` | episodes, mean_best_so_far |
//! | `curve.svg` | the same curve as a line plot |
//! | `phases.csv` | phase, fraction |
//!
//! [`analyze`] reads these back and writes `conditions.csv` (condition, n,
//! mean, median, q1, q3, min, max) and `compare.csv` (pair, U, p,
//! p_adjusted).

pub mod curves;
pub mod stats;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::cartpole2::DoublePole;
use crate::env::racing::{Racing, RacingConfig};
use crate::env::swarm::{Swarm, SwarmConfig};
use crate::env::{EnvError, Environment};
use crate::net::genome_to_text;
use crate::optimizers::{OptimizerConfig, OptimizerError};
use crate::protocol::{self, GenerationRecord, ProtocolConfig, ProtocolError, RunResult};
use crate::rng::replication_seed;

pub use curves::{best_so_far_curve, phase_histogram, CurvePoint};
pub use stats::{bonferroni, mann_whitney_u, MannWhitney, StatsError, Summary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("replication {replication}: {source}")]
    Run { replication: usize, source: ProtocolError },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}: no replications found")]
    NoRuns(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    }
}

/// Environment section, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Cartpole2,
    Racing(RacingConfig),
    Swarm(SwarmConfig),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub optimizer: OptimizerConfig,
    pub protocol: ProtocolConfig,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file. A relative track path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml(&text)?;
        if let EnvConfig::Racing(RacingConfig { track: Some(t), .. }) = &mut config.env {
            if t.is_relative() {
                if let Some(dir) = path.parent() {
                    *t = dir.join(&*t);
                }
            }
        }
        Ok(config)
    }

    /// Checks everything that can fail before the first episode, including
    /// building the environment and the optimizer settings for its network.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.replications == 0 {
            return Err(HarnessError::Config("replications must be at least 1".into()));
        }
        self.protocol.validate()?;
        let dimension = match &self.env {
            EnvConfig::Cartpole2 => DoublePole::new().topology().param_count(),
            EnvConfig::Racing(c) => Racing::from_config(c)?.topology().param_count(),
            EnvConfig::Swarm(c) => Swarm::from_config(c)?.topology().param_count(),
        };
        if self.optimizer.dimension != 0 && self.optimizer.dimension != dimension {
            return Err(HarnessError::Config(format!(
                "optimizer dimension {} but the network has {dimension} weights",
                self.optimizer.dimension
            )));
        }
        OptimizerConfig {
            dimension,
            ..self.optimizer.clone()
        }
        .validate()?;
        Ok(())
    }
}

/// Per-condition results plus pairwise tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub conditions: Vec<ConditionSummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub name: String,
    /// Final best performance of each replication.
    pub performances: Vec<f64>,
    pub stats: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub u: f64,
    pub p: f64,
    pub p_adjusted: f64,
}

impl SummaryTable {
    /// Summaries of each condition and Mann-Whitney tests over every pair,
    /// Bonferroni-adjusted for the number of pairs.
    pub fn build(conditions: Vec<(String, Vec<f64>)>) -> Result<Self, HarnessError> {
        let conditions = conditions
            .into_iter()
            .map(|(name, performances)| {
                let stats = Summary::of(&performances)
                    .ok_or_else(|| HarnessError::Config(format!("condition {name} has no runs")))?;
                Ok(ConditionSummary {
                    name,
                    performances,
                    stats,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let mut raw = Vec::new();
        for i in 0..conditions.len() {
            for j in i + 1..conditions.len() {
                let t = mann_whitney_u(&conditions[i].performances, &conditions[j].performances)?;
                raw.push((i, j, t));
            }
        }
        let p: Vec<f64> = raw.iter().map(|(_, _, t)| t.p).collect();
        let adjusted = bonferroni(&p, p.len());
        let comparisons = raw
            .into_iter()
            .zip(adjusted)
            .map(|((i, j, t), p_adjusted)| Comparison {
                a: conditions[i].name.clone(),
                b: conditions[j].name.clone(),
                u: t.u,
                p: t.p,
                p_adjusted,
            })
            .collect();
        Ok(SummaryTable {
            conditions,
            comparisons,
        })
    }
}

/// Finished experiment: every replication's result in index order.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub runs: Vec<RunResult>,
    pub seeds: Vec<u64>,
    pub summary: SummaryTable,
    pub curve: Vec<CurvePoint>,
}

/// Runs all replications of `config` and writes the result files into
/// `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    config.validate()?;
    let runs = match &config.env {
        EnvConfig::Cartpole2 => replicate(config, &DoublePole::new())?,
        EnvConfig::Racing(c) => replicate(config, &Racing::from_config(c)?)?,
        EnvConfig::Swarm(c) => replicate(config, &Swarm::from_config(c)?)?,
    };
    let seeds: Vec<u64> = (0..runs.len())
        .map(|i| replication_seed(config.protocol.seed, i))
        .collect();
    let name = config
        .output
        .file_name()
        .map_or_else(|| "experiment".to_string(), |n| n.to_string_lossy().into_owned());
    let performances = runs.iter().map(|r| r.best_performance).collect();
    let summary = SummaryTable::build(vec![(name.clone(), performances)])?;
    let records: Vec<&[GenerationRecord]> = runs.iter().map(|r| r.generations.as_slice()).collect();
    let curve = best_so_far_curve(&records);
    write_outputs(&config.output, &name, &runs, &seeds, &summary, &curve)?;
    Ok(Experiment {
        runs,
        seeds,
        summary,
        curve,
    })
}

fn replicate<E: Environment>(
    config: &ExperimentConfig,
    env: &E,
) -> Result<Vec<RunResult>, HarnessError> {
    (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let protocol = ProtocolConfig {
                seed: replication_seed(config.protocol.seed, i),
                ..config.protocol.clone()
            };
            let result = protocol::run(&protocol, &config.optimizer, env)
                .map_err(|source| HarnessError::Run {
                    replication: i,
                    source,
                })?;
            info!(
                "{} replication {i}: performance {:.4} after {} episodes",
                env.name(),
                result.best_performance,
                result.episodes_used
            );
            Ok(result)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct GenRow {
    generation: usize,
    episodes_used: u64,
    best_fitness: f64,
    best_performance: f64,
    best_so_far: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    replication: usize,
    seed: u64,
    best_performance: f64,
    evaluation_at_best: u64,
    episodes_used: u64,
    budget: u64,
    generations: usize,
    budget_underrun: bool,
}

#[derive(Debug, Serialize)]
struct StatsRow<'a> {
    condition: &'a str,
    n: usize,
    mean: f64,
    median: f64,
    q1: f64,
    q3: f64,
    min: f64,
    max: f64,
}

impl<'a> StatsRow<'a> {
    fn new(condition: &'a str, s: &Summary) -> Self {
        StatsRow {
            condition,
            n: s.n,
            mean: s.mean,
            median: s.median,
            q1: s.q1,
            q3: s.q3,
            min: s.min,
            max: s.max,
        }
    }
}

#[derive(Debug, Serialize)]
struct CompareRow {
    pair: String,
    #[serde(rename = "U")]
    u: f64,
    p: f64,
    p_adjusted: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

fn write_outputs(
    dir: &Path,
    name: &str,
    runs: &[RunResult],
    seeds: &[u64],
    summary: &SummaryTable,
    curve: &[CurvePoint],
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, run) in runs.iter().enumerate() {
        let rep = dir.join(format!("rep_{i:03}"));
        fs::create_dir_all(&rep).map_err(io_err(&rep))?;
        write_csv(
            &rep.join("gen.csv"),
            run.generations.iter().map(|g| GenRow {
                generation: g.generation,
                episodes_used: g.episodes_used,
                best_fitness: g.best_fitness,
                best_performance: g.best_performance,
                best_so_far: g.best_so_far,
            }),
        )?;
        let path = rep.join("best_genome.txt");
        fs::write(&path, genome_to_text(&run.topology, &run.best_genome)).map_err(io_err(&path))?;
    }
    write_csv(
        &dir.join("summary.csv"),
        runs.iter().zip(seeds).enumerate().map(|(i, (r, &seed))| SummaryRow {
            replication: i,
            seed,
            best_performance: r.best_performance,
            evaluation_at_best: r.evaluation_at_best,
            episodes_used: r.episodes_used,
            budget: r.budget,
            generations: r.generations.len(),
            budget_underrun: r.budget_underrun,
        }),
    )?;
    write_csv(
        &dir.join("stats.csv"),
        summary.conditions.iter().map(|c| StatsRow::new(&c.name, &c.stats)),
    )?;
    write_curve(dir, name, curve)?;
    let phases: Vec<(u64, u64)> = runs.iter().map(|r| (r.evaluation_at_best, r.budget)).collect();
    write_phases(&dir.join("phases.csv"), &phase_histogram(&phases))
}

#[derive(Serialize)]
struct PhaseRow {
    phase: usize,
    fraction: f64,
}

fn write_phases(path: &Path, h: &[f64]) -> Result<(), HarnessError> {
    write_csv(
        path,
        h.iter().enumerate().map(|(phase, &fraction)| PhaseRow { phase, fraction }),
    )
}

fn write_curve(dir: &Path, name: &str, curve: &[CurvePoint]) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Row {
        episodes: u64,
        mean_best_so_far: f64,
    }
    write_csv(
        &dir.join("curve.csv"),
        curve.iter().map(|p| Row {
            episodes: p.episodes,
            mean_best_so_far: p.mean_best_so_far,
        }),
    )?;
    let path = dir.join("curve.svg");
    fs::write(&path, curves::curve_svg(curve, name)).map_err(io_err(&path))
}

/// A finished experiment read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedCondition {
    pub name: String,
    pub performances: Vec<f64>,
    /// `(evaluation_at_best, budget)` per replication.
    pub best_at: Vec<(u64, u64)>,
    pub generations: Vec<Vec<GenerationRecord>>,
}

pub fn load_condition(dir: &Path) -> Result<LoadedCondition, HarnessError> {
    let rows: Vec<SummaryRow> = read_csv(&dir.join("summary.csv"))?;
    if rows.is_empty() {
        return Err(HarnessError::NoRuns(dir.to_owned()));
    }
    let mut generations = Vec::with_capacity(rows.len());
    for r in &rows {
        let gen: Vec<GenRow> = read_csv(&dir.join(format!("rep_{:03}", r.replication)).join("gen.csv"))?;
        generations.push(
            gen.into_iter()
                .map(|g| GenerationRecord {
                    generation: g.generation,
                    episodes_used: g.episodes_used,
                    best_fitness: g.best_fitness,
                    best_performance: g.best_performance,
                    best_so_far: g.best_so_far,
                })
                .collect(),
        );
    }
    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_owned());
    Ok(LoadedCondition {
        name: canonical
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        performances: rows.iter().map(|r| r.best_performance).collect(),
        best_at: rows.iter().map(|r| (r.evaluation_at_best, r.budget)).collect(),
        generations,
    })
}

/// Compares finished experiments pairwise and writes `conditions.csv`,
/// `compare.csv` and, per condition, `<name>_curve.csv` and
/// `<name>_phases.csv` into `out`.
pub fn analyze(dirs: &[PathBuf], out: &Path) -> Result<SummaryTable, HarnessError> {
    let loaded = dirs
        .iter()
        .map(|d| load_condition(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut names: Vec<String> = loaded.iter().map(|c| c.name.clone()).collect();
    // disambiguate equal directory names by position
    for i in 0..names.len() {
        if names.iter().filter(|n| **n == names[i]).count() > 1 {
            names[i] = format!("{}#{i}", names[i]);
        }
    }
    let table = SummaryTable::build(
        names
            .iter()
            .cloned()
            .zip(loaded.iter().map(|c| c.performances.clone()))
            .collect(),
    )?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_csv(
        &out.join("conditions.csv"),
        table.conditions.iter().map(|c| StatsRow::new(&c.name, &c.stats)),
    )?;
    write_csv(
        &out.join("compare.csv"),
        table.comparisons.iter().map(|c| CompareRow {
            pair: format!("{} vs {}", c.a, c.b),
            u: c.u,
            p: c.p,
            p_adjusted: c.p_adjusted,
        }),
    )?;
    for (name, c) in names.iter().zip(&loaded) {
        let curve = best_so_far_curve(&c.generations);
        write_csv(
            &out.join(format!("{name}_curve.csv")),
            curve.iter().map(|p| (p.episodes, p.mean_best_so_far)),
        )?;
        write_phases(&out.join(format!("{name}_phases.csv")), &phase_histogram(&c.best_at))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
replications = 2
output = "out"

[env]
kind = "cartpole2"

[optimizer]
algorithm = "sss"
lambda = 4

[protocol]
nee = 2
nve = 3
f = 0.5
budget = 60
seed = 11
"#;

    #[test]
    fn parses_sections() {
        let c = ExperimentConfig::from_toml(TINY).unwrap();
        assert_eq!(c.env, EnvConfig::Cartpole2);
        assert_eq!(c.replications, 2);
        assert_eq!(c.protocol.nve, 3);
        c.validate().unwrap();
    }

    #[test]
    fn racing_and_swarm_sections() {
        let r = TINY.replace(
            "kind = \"cartpole2\"",
            "kind = \"racing\"\nsteps = 100\npenalty = \"squared\"\n[env.car]\ngrip = 10.0",
        );
        let c = ExperimentConfig::from_toml(&r).unwrap();
        match &c.env {
            EnvConfig::Racing(rc) => {
                assert_eq!(rc.steps, 100);
                assert_eq!(rc.car.grip, 10.0);
            }
            other => panic!("{other:?}"),
        }
        let s = TINY.replace("kind = \"cartpole2\"", "kind = \"swarm\"\nsteps = 10");
        let c = ExperimentConfig::from_toml(&s).unwrap();
        assert_eq!(c.env, EnvConfig::Swarm(SwarmConfig { steps: 10 }));
    }

    #[test]
    fn rejects_bad_configs() {
        let missing = TINY.replace("[protocol]", "[other]");
        assert!(ExperimentConfig::from_toml(&missing).is_err());
        let zero = TINY.replace("replications = 2", "replications = 0");
        let c = ExperimentConfig::from_toml(&zero).unwrap();
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let typo = TINY.replace("nve = 3", "nev = 3");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
        let kind = TINY.replace("cartpole2", "cartpole3");
        assert!(ExperimentConfig::from_toml(&kind).is_err());
        let dim = TINY.replace("lambda = 4", "lambda = 4\ndimension = 7");
        let c = ExperimentConfig::from_toml(&dim).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn summary_table_adjusts_for_all_pairs() {
        let t = SummaryTable::build(vec![
            ("a".into(), vec![1.0, 2.0, 3.0]),
            ("b".into(), vec![4.0, 5.0, 6.0]),
            ("c".into(), vec![1.5, 2.5, 3.5]),
        ])
        .unwrap();
        assert_eq!(t.comparisons.len(), 3);
        let ab = &t.comparisons[0];
        assert_eq!((ab.a.as_str(), ab.b.as_str()), ("a", "b"));
        assert_eq!(ab.u, 0.0);
        assert!((ab.p_adjusted - 0.3).abs() < 1e-12);
        assert_eq!(t.conditions[1].stats.median, 5.0);
    }

    #[test]
    fn experiment_writes_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::from_toml(TINY).unwrap();
        c.output = dir.path().join("sss");
        let e = run_experiment(&c).unwrap();
        assert_eq!(e.runs.len(), 2);
        assert_eq!(e.seeds, vec![11, 12]);
        assert_eq!(e.summary.conditions[0].performances.len(), 2);
        for f in ["summary.csv", "stats.csv", "curve.csv", "curve.svg", "phases.csv", "rep_001/gen.csv"] {
            assert!(c.output.join(f).exists(), "{f}");
        }
        let gen = fs::read_to_string(c.output.join("rep_000/gen.csv")).unwrap();
        assert_eq!(
            gen.lines().next().unwrap(),
            "generation,episodes_used,best_fitness,best_performance,best_so_far"
        );
        let back = load_condition(&c.output).unwrap();
        assert_eq!(back.name, "sss");
        assert_eq!(back.performances, e.summary.conditions[0].performances);
        assert_eq!(back.generations[1], e.runs[1].generations);

        let t = analyze(&[c.output.clone(), c.output.clone()], dir.path()).unwrap();
        assert_eq!(t.comparisons[0].p, 1.0);
        let cmp = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert!(cmp.starts_with("pair,U,p,p_adjusted\n"));
    }
}
