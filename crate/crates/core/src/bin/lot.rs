use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lot::measures::SyntheticSpec;
use lot::pipeline::{
    self, BarycenterArgs, BarycenterMode, BenchSpec, IterateArgs, IterateScope, PipelineConfig,
    ReduceMethod, WeightSource,
};
use lot::{LotError, Result};

#[derive(Parser)]
#[command(
    name = "lot",
    version,
    about = "Linear optimal transport embeddings of point clouds"
)]
struct Cli {
    /// TOML pipeline config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset and its manifest.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 15)]
        clouds_per_class: usize,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Make every class a translate family.
        #[arg(long)]
        translate_only: bool,
    },
    /// Embed every cloud against the reference.
    Embed,
    /// Balanced PCA or LDA coordinates of the embeddings.
    Reduce {
        #[arg(long, default_value = "pca")]
        method: ReduceMethod,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Split, balance, and select a classifier.
    Classify {
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Synthesize LOT barycenters and score them against true barycenters.
    Barycenter {
        #[arg(long, default_value = "within")]
        mode: BarycenterMode,
        /// fixed, random:N or file:PATH
        #[arg(long, default_value = "fixed")]
        weights: WeightSource,
        /// Class pairs for between mode, as a:b, comma separated.
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        /// Also write the true barycenters and a timing comparison.
        #[arg(long)]
        compare_true: bool,
    },
    /// Refine the reference and record per-iteration embeddings and errors.
    Iterate {
        #[arg(long, default_value_t = 3)]
        n_iterations: usize,
        #[arg(long, default_value = "global")]
        scope: IterateScope,
        /// Random weight vectors per class.
        #[arg(long, default_value_t = 10)]
        weights: usize,
    },
    /// Barycenter fidelity and timing benchmark on translate families.
    Bench {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        clouds_per_class: usize,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 300)]
        m: usize,
        #[arg(long, default_value_t = 10)]
        weights: usize,
        #[arg(long, default_value_t = 2)]
        n_iterations: usize,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LotError::Config("this command needs --config".into()))?;
    PipelineConfig::load(path, cli.seed, cli.out.clone())
}

fn seed_and_out(cli: &Cli) -> Result<(u64, PathBuf)> {
    match &cli.config {
        Some(_) => {
            let cfg = config(cli)?;
            Ok((cfg.seed, cfg.out))
        }
        None => Ok((
            cli.seed.ok_or_else(|| {
                LotError::Config("a seed is required (--seed or --config)".into())
            })?,
            cli.out
                .clone()
                .unwrap_or_else(|| pipeline::DEFAULT_OUT.into()),
        )),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth {
            classes,
            clouds_per_class,
            points,
            dim,
            translate_only,
        } => {
            let seed = cli
                .seed
                .ok_or_else(|| LotError::Config("synth needs --seed".into()))?;
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| pipeline::DEFAULT_OUT.into());
            let spec = SyntheticSpec {
                classes: *classes,
                clouds_per_class: *clouds_per_class,
                points_per_cloud: *points,
                dim: *dim,
                seed,
                translate_only: *translate_only,
            };
            let manifest = pipeline::cmd_synth(&spec, &out)?;
            println!("wrote {}", manifest.display());
        }
        Command::Embed => {
            let cfg = config(cli)?;
            let out = pipeline::cmd_embed(&cfg)?;
            let (n, w) = out.embeddings.rows().dim();
            println!(
                "embedded {n} clouds into {w} coordinates in {:.2}s",
                out.seconds
            );
        }
        Command::Reduce { method, k } => {
            let out = pipeline::cmd_reduce(&config(cli)?, *method, *k)?;
            println!(
                "{} rows x {} {} components",
                out.coordinates.nrows(),
                out.components,
                out.method
            );
        }
        Command::Classify { test_fraction } => {
            let report = pipeline::cmd_classify(&config(cli)?, *test_fraction)?;
            print!("{}", report.to_table());
        }
        Command::Barycenter {
            mode,
            weights,
            pairs,
            compare_true,
        } => {
            let pairs = if pairs.is_empty() {
                None
            } else {
                Some(
                    pairs
                        .iter()
                        .map(|p| {
                            p.split_once(':')
                                .map(|(a, b)| (a.to_string(), b.to_string()))
                                .ok_or_else(|| {
                                    LotError::Config(format!("pair {p:?} is not of the form a:b"))
                                })
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            };
            let args = BarycenterArgs {
                mode: *mode,
                weights: weights.clone(),
                pairs,
                compare_true: *compare_true,
            };
            let out = pipeline::cmd_barycenter(&config(cli)?, &args)?;
            for row in &out.table {
                println!(
                    "{}: mean delta {:.4} (std {:.4}, n {})",
                    row.class, row.mean, row.std, row.n
                );
            }
            if *compare_true {
                println!("lot {:.2}s, true {:.2}s", out.lot_seconds, out.true_seconds);
            }
        }
        Command::Iterate {
            n_iterations,
            scope,
            weights,
        } => {
            let args = IterateArgs {
                n_iterations: *n_iterations,
                scope: *scope,
                weights: *weights,
            };
            for row in pipeline::cmd_iterate(&config(cli)?, &args)? {
                println!(
                    "{} iteration {}: mean delta {:.4}",
                    row.class, row.iteration, row.mean
                );
            }
        }
        Command::Bench {
            classes,
            clouds_per_class,
            points,
            dim,
            m,
            weights,
            n_iterations,
        } => {
            let spec = BenchSpec {
                classes: *classes,
                clouds_per_class: *clouds_per_class,
                points_per_cloud: *points,
                dim: *dim,
                reference_points: *m,
                weights: *weights,
                n_iterations: *n_iterations,
            };
            let cfg = match &cli.config {
                Some(_) => Some(config(cli)?),
                None => None,
            };
            let (seed, out) = seed_and_out(cli)?;
            let report = pipeline::cmd_bench(&spec, cfg.as_ref(), seed, &out)?;
            for row in &report.delta {
                println!(
                    "{} iteration {}: mean delta {:.4}",
                    row.class, row.iteration, row.mean
                );
            }
            println!(
                "lot {:.2}s, true {:.2}s",
                report.total_lot_seconds(),
                report.total_true_seconds()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
