use std::io::{self, BufReader};
use std::path::PathBuf;

use aced::complexity::complexity_report;
use aced_bench::config::{ExperimentConfig, InstanceSpec};
use aced_bench::ingest::export_instance;
use aced_bench::plotdata::{curves, read_results, write_curves};
use aced_bench::run::{build_instance, explicit_class, run_experiment, write_outputs, Labels, TrainView};
use aced_bench::stdin_labels::PromptLabels;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aced-bench", version, about = "Run active classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LabelSourceArg {
    /// Simulated labels from the instance's label means.
    Model,
    /// Prompt for every label on stderr and read the answer from stdin.
    Stdin,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Thresholds,
    Prop3,
    Tsybakov,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and seed; write results, curves, timings and runs.
    Run {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "model")]
        label_source: LabelSourceArg,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute rho*, gamma*, psi* and the disagreement coefficient of the configured instance.
    Complexity {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate an instance and write pool.csv, labels.csv and hypotheses.csv.
    Instance {
        #[arg(value_enum)]
        generator: Generator,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long)]
        k_star: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute learning curves from a results.csv.
    Plotdata {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            label_source,
            output,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir());
            let outcomes = match label_source {
                LabelSourceArg::Model => run_experiment(&cfg, Labels::Model)?,
                LabelSourceArg::Stdin => {
                    let inst = build_instance(&cfg.instance)?;
                    let view = TrainView::new(&inst, cfg.holdout, cfg.holdout_seed)?;
                    let mut source = PromptLabels::new(view.ids.clone(), BufReader::new(io::stdin()), io::stderr());
                    run_experiment(&cfg, Labels::External(&mut source))?
                }
            };
            write_outputs(&dir, &outcomes)?;
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            eprintln!(
                "{} runs ({failed} failed), outputs in {}",
                outcomes.len(),
                dir.display()
            );
        }
        Command::Complexity { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let inst = build_instance(&cfg.instance)?;
            let class = &inst.class;
            explicit_class(&inst)?;
            let c = &cfg.complexity;
            let report = complexity_report(class, inst.eta(), c.epsilon, &c.xis, c.mc_samples, &c.solver(), c.seed)?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            let dir = output.unwrap_or_else(|| cfg.output_dir());
            std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
            std::fs::write(dir.join("complexity.json"), json + "\n")?;
        }
        Command::Instance {
            generator,
            n,
            k_star,
            eps,
            m,
            a,
            alpha,
            seed,
            out,
        } => {
            let spec = match generator {
                Generator::Thresholds => InstanceSpec::Thresholds {
                    n,
                    k_star: k_star.unwrap_or(n / 2),
                    eps,
                    persistent: true,
                    linear: false,
                },
                Generator::Prop3 => InstanceSpec::Prop3 { m },
                Generator::Tsybakov => InstanceSpec::Tsybakov { n, a, alpha, seed },
            };
            let inst = build_instance(&spec)?;
            export_instance(&out, &inst)?;
            eprintln!("wrote {} points to {}", inst.n(), out.display());
        }
        Command::Plotdata { results, out } => {
            let rows = read_results(&results)?;
            if rows.is_empty() {
                bail!("{} has no rows", results.display());
            }
            let out = out.unwrap_or_else(|| results.with_file_name("curves.csv"));
            write_curves(&out, &curves(&rows))?;
        }
    }
    Ok(())
}
