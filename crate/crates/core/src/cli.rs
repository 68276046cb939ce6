//! Command implementations behind the `conbandit` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::catalog::read_graph_csv;
use crate::config::RunConfig;
use crate::environments::{Dataset, DatasetFiles, GeneratorSpec};
use crate::error::{Error, Result};
use crate::harness::{run_batch, write_batch_csv};
use crate::keyterm::{compare_aggregates, read_ratings_csv, write_report_csv, AggregateRow};

#[derive(Debug, Parser)]
#[command(name = "conbandit", version, about = "Conversational bandit experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured policy and write batch CSVs plus a manifest.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (default: the config's out_dir, else results/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the horizon.
        #[arg(long)]
        horizon: Option<u64>,
        /// Override the repetition count.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Write a random dataset (items.csv, graph.csv, users.csv).
    GenerateDataset {
        #[arg(long)]
        users: usize,
        #[arg(long)]
        items: usize,
        #[arg(long)]
        keyterms: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate key-term ratings (simple, top-alpha, weighted).
    Analyze {
        /// CSV with columns category,item,rating[,weight].
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        alphas: Vec<f64>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config, a dataset directory or a graph file.
    Validate {
        #[arg(long, group = "target")]
        config: Option<PathBuf>,
        #[arg(long, group = "target")]
        preset: Option<String>,
        #[arg(long, group = "target")]
        dataset: Option<PathBuf>,
        #[arg(long, group = "target")]
        graph: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConfigSource {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
}

impl ConfigSource {
    pub fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::from_file(path),
            (None, Some(name)) => RunConfig::preset(name),
            (None, None) => Err(Error::input("pass --config or --preset")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub label: String,
    pub kind: String,
    pub batch_csv: String,
    pub final_mean_regret: f64,
    pub final_ci_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    pub repetitions: usize,
    pub level: f64,
    pub policies: Vec<PolicyOutcome>,
}

/// Runs all policies of `config` and writes `<label>.csv` per policy plus
/// `manifest.json` into `out_dir`, overwriting earlier results.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let builder = config.env_builder()?;
    let mut policies = Vec::with_capacity(config.policies.len());
    let mut seeds = Vec::new();
    for p in &config.policies {
        let batch = run_batch(
            builder.as_ref(),
            &p.spec()?,
            config.horizon,
            config.repetitions,
            config.base_seed,
            config.level,
        )?;
        let file = format!("{}.csv", p.label());
        write_batch_csv(&out_dir.join(&file), &batch)?;
        seeds = batch.seeds.clone();
        policies.push(PolicyOutcome {
            label: p.label().to_string(),
            kind: p.kind.as_str().to_string(),
            batch_csv: file,
            final_mean_regret: batch.final_mean(),
            final_ci_half_width: batch.final_half_width(),
        });
    }
    let manifest = Manifest {
        name: config.name.clone(),
        config_hash: config.hash(),
        base_seed: config.base_seed,
        seeds,
        horizon: config.horizon,
        repetitions: config.repetitions,
        level: config.level,
        policies,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn cmd_generate_dataset(spec: &GeneratorSpec, out_dir: &Path) -> Result<DatasetFiles> {
    Dataset::generate(spec)?.write(out_dir)
}

/// Aggregates a ratings file; writes the report when `out` is given.
pub fn cmd_analyze(ratings: &Path, alphas: &[f64], out: Option<&Path>) -> Result<Vec<AggregateRow>> {
    let table = read_ratings_csv(ratings)?;
    let rows = compare_aggregates(&table, alphas)?;
    if let Some(out) = out {
        write_report_csv(out, alphas, &rows)?;
    }
    Ok(rows)
}

/// What `validate` should check.
#[derive(Debug, Clone)]
pub enum ValidateTarget {
    Config(RunConfig),
    Dataset(PathBuf),
    Graph(PathBuf),
}

/// Returns the list of problems found; empty means valid. Files that cannot
/// be read at all are errors.
pub fn cmd_validate(target: &ValidateTarget) -> Result<Vec<String>> {
    match target {
        ValidateTarget::Config(config) => {
            config.validate()?;
            let builder = config.env_builder()?;
            for env in builder(config.base_seed)? {
                for p in &config.policies {
                    p.spec()?.build(env.as_ref())?;
                }
            }
            Ok(Vec::new())
        }
        ValidateTarget::Graph(path) => {
            let graph = read_graph_csv(path, None, None)?;
            let catalog = if graph.weighted {
                graph.to_catalog()
            } else {
                match graph.normalized_catalog() {
                    Ok(c) => c,
                    Err(e) => return Ok(vec![e.to_string()]),
                }
            };
            Ok(catalog.validate().messages())
        }
        ValidateTarget::Dataset(dir) => {
            let files = DatasetFiles::in_dir(dir);
            let graph = read_graph_csv(&files.graph, None, None)?;
            let mut problems = match graph.normalized_catalog() {
                Ok(c) => c.validate().messages(),
                Err(e) => vec![e.to_string()],
            };
            if problems.is_empty() {
                if let Err(e) = Dataset::load(&files) {
                    problems.push(e.to_string());
                }
            }
            Ok(problems)
        }
    }
}

fn print_rows(alphas: &[f64], rows: &[AggregateRow]) {
    let weighted = rows.iter().any(|r| r.weighted.is_some());
    let mut header = vec!["category".to_string(), "simple".to_string()];
    header.extend(alphas.iter().map(|a| format!("top_{a}")));
    if weighted {
        header.push("weighted".into());
    }
    println!("{}", header.join(","));
    for r in rows {
        let mut cells = vec![r.category.clone(), r.simple.to_string()];
        cells.extend(r.top.iter().map(f64::to_string));
        if let Some(w) = r.weighted {
            cells.push(w.to_string());
        }
        println!("{}", cells.join(","));
    }
}

/// Executes a parsed command line. Returns `false` when validation found
/// problems.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            source,
            out,
            seed,
            horizon,
            reps,
        } => {
            let mut config = source.load()?;
            if let Some(s) = seed {
                config.base_seed = s;
            }
            if let Some(h) = horizon {
                config.horizon = h;
            }
            if let Some(r) = reps {
                config.repetitions = r;
            }
            let out_dir = out
                .or_else(|| config.out_dir.clone())
                .unwrap_or_else(|| Path::new("results").join(&config.name));
            let manifest = cmd_run(&config, &out_dir)?;
            for p in &manifest.policies {
                println!(
                    "{:<16} final regret {:.3} ± {:.3}",
                    p.label, p.final_mean_regret, p.final_ci_half_width
                );
            }
            println!("wrote {}", out_dir.display());
            Ok(true)
        }
        Command::GenerateDataset {
            users,
            items,
            keyterms,
            dim,
            seed,
            out,
        } => {
            let spec = GeneratorSpec {
                users,
                items,
                keyterms,
                dim,
                seed,
            };
            cmd_generate_dataset(&spec, &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Analyze { ratings, alphas, out } => {
            let rows = cmd_analyze(&ratings, &alphas, out.as_deref())?;
            if out.is_none() {
                print_rows(&alphas, &rows);
            }
            Ok(true)
        }
        Command::Validate {
            config,
            preset,
            dataset,
            graph,
        } => {
            let target = match (config, preset, dataset, graph) {
                (Some(p), ..) => ValidateTarget::Config(RunConfig::from_file(&p)?),
                (_, Some(name), ..) => ValidateTarget::Config(RunConfig::preset(&name)?),
                (_, _, Some(dir), _) => ValidateTarget::Dataset(dir),
                (_, _, _, Some(path)) => ValidateTarget::Graph(path),
                _ => return Err(Error::input("pass --config, --preset, --dataset or --graph")),
            };
            let problems = cmd_validate(&target)?;
            for p in &problems {
                println!("{p}");
            }
            if problems.is_empty() {
                println!("ok");
            }
            Ok(problems.is_empty())
        }
    }
}
