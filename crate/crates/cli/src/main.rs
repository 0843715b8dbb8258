use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use wearlab::synth::DayPlan;
use wearlab::trace::Flavor;
use wearlab_cli::experiments::load_pack;
use wearlab_cli::simulate::{simulate_day, simulate_group};
use wearlab_cli::{run_experiment, RunConfig};

#[derive(Parser)]
#[command(name = "wearlab", version, about = "Bluetooth traffic-analysis experiments on synthetic captures")]
struct Cli {
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Classic,
    Le,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic trace files and a manifest.
    Simulate {
        /// Profile group, e.g. device, app-high, diabetes.
        #[arg(long, default_value = "device")]
        group: String,
        #[arg(long, value_enum)]
        flavor: Option<FlavorArg>,
        /// Samples per profile.
        #[arg(long, default_value_t = 25)]
        n: usize,
        /// Simulate one day with the default (or configured) day plan instead.
        #[arg(long)]
        day: bool,
        /// Write the effective profile pack as TOML too.
        #[arg(long)]
        dump_pack: bool,
    },
    /// Run one experiment and write its reports.
    Experiment {
        /// device-id, chipset-id, action-wide, app-deep, diabetes, transfer, aging, loss-sweep, defense or stream
        name: String,
    },
    /// Run one experiment over several values of a parameter.
    Sweep {
        name: String,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Trees,
    Rfe,
    Samples,
    Dummies,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_outcome(name: &str, out: &Path, outcome: &wearlab_cli::Outcome) {
    for (k, v) in &outcome.summary {
        println!("{name}\t{k}\t{v:.4}");
    }
    println!("{name}\twrote {} files to {}", outcome.files.len(), out.display());
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { group, flavor, n, day, dump_pack } => {
            let pack = load_pack(&cfg)?;
            std::fs::create_dir_all(&cli.out)?;
            if *dump_pack {
                std::fs::write(cli.out.join("pack.toml"), pack.to_toml()?)?;
            }
            if *day {
                let plan = match &cfg.day_plan {
                    Some(p) => Some(DayPlan::from_toml(&std::fs::read_to_string(p)?).with_context(|| format!("in {}", p.display()))?),
                    None => None,
                };
                let actions = simulate_day(&pack, plan.as_ref(), cfg.seed, &cli.out)?;
                println!("simulate\tday trace with {actions} actions in {}", cli.out.display());
            } else {
                let flavor = flavor.map(|f| match f {
                    FlavorArg::Classic => Flavor::Classic,
                    FlavorArg::Le => Flavor::LowEnergy,
                });
                let m = simulate_group(&pack, group, flavor, *n, cfg.duration_s, cfg.seed, &cli.out)?;
                println!("simulate\t{} traces in {}", m.rows.len(), cli.out.display());
            }
        }
        Command::Experiment { name } => {
            let outcome = run_experiment(name, &cfg, &cli.out)?;
            print_outcome(name, &cli.out, &outcome);
        }
        Command::Sweep { name, param, values } => {
            for v in values {
                let mut c = cfg.clone();
                let tag = match param {
                    SweepParam::Trees => {
                        c.trees = Some(*v);
                        "trees"
                    }
                    SweepParam::Rfe => {
                        c.rfe_keep = Some(*v);
                        "rfe"
                    }
                    SweepParam::Samples => {
                        c.samples = Some(*v);
                        "samples"
                    }
                    SweepParam::Dummies => {
                        c.defense.n_dummies = *v;
                        "dummies"
                    }
                };
                let dir = cli.out.join(format!("{tag}-{v}"));
                let outcome = run_experiment(name, &c, &dir)?;
                print_outcome(&format!("{name}[{tag}={v}]"), &dir, &outcome);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
