use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use pbacc::codec::{roundtrip_error, NoiseSpec, PointwiseFn};
use pbacc::harness::{run_experiment, ExperimentSpec};
use pbacc::interpolation::{CodingPlan, DEFAULT_NOISE_SHIFT};
use pbacc::privacy::{
    max_amplitude_within, worst_case_leakage, NoiseModel, PrivacyConfig, SearchStrategy,
};
use pbacc::protocols::{select_fastest, NetworkConfig, StragglerModel};
use pbacc::{Error, Result, SeedTree, Tensor};

#[derive(Parser)]
#[command(
    name = "pbacc",
    version,
    about = "Private Berrut coded computing: leakage, round trips and protocol experiments"
)]
struct Cli {
    /// Root seed (overrides the spec file for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for `run` (overrides the spec file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Colluder search: `exhaustive`, `greedy` or `random:<draws>`.
    #[arg(long, global = true)]
    strategy: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    t: usize,
    /// Noise-node shift b.
    #[arg(long, default_value_t = DEFAULT_NOISE_SHIFT)]
    shift: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec (TOML) and write its metrics files.
    Run { spec: PathBuf },
    /// Worst-case leakage bound for one configuration.
    Leakage {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        sigma_n: f64,
        /// Number of colluding workers.
        #[arg(long)]
        c: usize,
        /// Input amplitude bound.
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        /// Target bits per element.
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value = "correlated")]
        noise_model: String,
        /// Also report the largest s whose leakage stays within epsilon.
        #[arg(long)]
        max_s: bool,
    },
    /// Encode, apply a pointwise function on every share, decode and compare.
    Roundtrip {
        #[command(flatten)]
        plan: PlanArgs,
        /// identity, square, relu, tanh or affine.
        #[arg(long)]
        function: String,
        #[arg(long, default_value_t = 0.0)]
        sigma_n: f64,
        /// Number of fastest results used for decoding (default: all).
        #[arg(long)]
        subset_size: Option<usize>,
        /// Groups of K slices in the random input.
        #[arg(long, default_value_t = 16)]
        groups: usize,
    },
    /// Print the interpolation node families of a plan.
    Nodes {
        #[command(flatten)]
        plan: PlanArgs,
    },
}

fn parse_strategy(text: &str, seed: u64) -> Result<SearchStrategy> {
    match text {
        "exhaustive" => Ok(SearchStrategy::Exhaustive),
        "greedy" => Ok(SearchStrategy::Greedy),
        other => match other.strip_prefix("random:").map(str::parse::<usize>) {
            Some(Ok(draws)) => Ok(SearchStrategy::RandomSampled { draws, seed }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown strategy {other:?}; use exhaustive, greedy or random:<draws>"
            ))),
        },
    }
}

fn parse_noise_model(text: &str) -> Result<NoiseModel> {
    match text {
        "correlated" => Ok(NoiseModel::Correlated),
        "uncorrelated" => Ok(NoiseModel::Uncorrelated),
        other => Err(Error::InvalidArgument(format!(
            "unknown noise model {other:?}"
        ))),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Run { spec } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            if let Some(dir) = cli.output_dir {
                spec.output_dir = dir;
            }
            if let Some(s) = &cli.strategy {
                spec.privacy.strategy = parse_strategy(s, seed)?;
            }
            let outcome = run_experiment(&spec)?;
            for rec in &outcome.records {
                let last = rec.run.rounds.last().expect("at least one round");
                let leak = rec
                    .leakage
                    .as_ref()
                    .map_or("-".to_string(), |l| format!("{:?}", l.i_l));
                println!(
                    "sigma_n={:?} t={} c={} final_loss={:?} final_accuracy={} i_L={}",
                    rec.point.sigma_n,
                    rec.point.t,
                    rec.point.c,
                    last.loss,
                    last.accuracy.map_or("-".to_string(), |a| format!("{a:?}")),
                    leak
                );
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Leakage {
            plan,
            sigma_n,
            c,
            s,
            epsilon,
            noise_model,
            max_s,
        } => {
            if c == 0 {
                return Err(Error::InvalidArgument("c must be at least 1".into()));
            }
            let strategy = parse_strategy(cli.strategy.as_deref().unwrap_or("greedy"), seed)?;
            let coding = CodingPlan::new(plan.k, plan.t, plan.n, plan.shift)?;
            let mut cfg = PrivacyConfig::for_plan(&coding, sigma_n, s, c, epsilon);
            cfg.noise_model = parse_noise_model(&noise_model)?;
            let report = worst_case_leakage(&coding, &cfg, strategy)?;
            println!("{}", to_json(&report)?);
            println!(
                "i_L = {:?} bits/element, I_L = {:?} bits, worst subset {:?}, within epsilon: {}",
                report.i_l,
                report.total,
                report.worst_subset,
                report.satisfies(epsilon)
            );
            if max_s {
                let s_max = max_amplitude_within(&coding, &cfg, strategy)?;
                println!("largest s with i_L <= {epsilon:?}: {s_max:?}");
            }
        }
        Command::Roundtrip {
            plan,
            function,
            sigma_n,
            subset_size,
            groups,
        } => {
            let f: PointwiseFn = function.parse()?;
            let coding = CodingPlan::new(plan.k, plan.t, plan.n, plan.shift)?;
            let keep = subset_size.unwrap_or(plan.n);
            let stragglers = if keep == plan.n {
                StragglerModel::None
            } else {
                StragglerModel::RandomDelay { seed, keep_n: keep }
            };
            let subset = select_fastest(&NetworkConfig::new(plan.n, stragglers, seed), 0)?;
            let mut rng = SeedTree::new(seed).child("input", 0).rng();
            let len = groups * plan.k;
            let x = Tensor::from_vec((0..len).map(|_| rng.random_range(-1.0..1.0)).collect());
            let noise = NoiseSpec::new(
                sigma_n,
                plan.t,
                SeedTree::new(seed).child("noise", 0).value(),
            );
            let err = roundtrip_error(&x, |v| f.apply(v), &coding, &noise, &subset)?;
            println!(
                "function={f} k={} t={} n={} sigma_n={sigma_n:?} subset={} relative_error={err:?}",
                plan.k,
                plan.t,
                plan.n,
                subset.len()
            );
        }
        Command::Nodes { plan } => {
            let coding = CodingPlan::new(plan.k, plan.t, plan.n, plan.shift)?;
            println!("{}", to_json(&coding)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
