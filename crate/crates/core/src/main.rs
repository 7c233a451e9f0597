use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slipt_core::env::{Environment, Scheme};
use slipt_core::oracle::{grid_search, random_search, GridSpec, OracleResult, Problem};
use slipt_core::ppo::{evaluate_policy, train, Agent};
use slipt_core::scenario::{default_scenario, tiny_scenario, Scenario};
use slipt_core::sweep::{evaluation_set, rows_to_csv, run_sweep, SweepOptions, SweepParameter};
use slipt_core::{validate, Error, CODE_VERSION};

#[derive(Parser)]
#[command(name = "slipt", version, about = "Optical downlink simulator with rate splitting, dimming and PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Scenario file (TOML); the built-in default scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the target dimming level.
    #[arg(long)]
    eta: Option<f64>,
    /// Override the number of training episodes.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Rsma,
    Noma,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Rsma => Scheme::Rsma,
            SchemeArg::Noma => Scheme::Noma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Method {
    #[default]
    Grid,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite on a configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Brute-force or random search on one user placement.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "grid")]
        method: Method,
        /// Evaluations for random search; the config value when omitted.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Train one policy and write its log and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate one policy per swept value.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        parameter: Option<SweepParameter>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        record_wall_time: bool,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Evaluate a saved policy on the evaluation placements.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print a complete scenario file.
    ExampleScenario {
        /// The two-LED, one-user instance instead of the full room.
        #[arg(long)]
        tiny: bool,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load(common: &Common) -> std::result::Result<Scenario, Failure> {
    let mut s = match &common.config {
        Some(p) => Scenario::load(p)?,
        None => default_scenario(),
    };
    if let Some(seed) = common.seed {
        s.seed = seed;
        s.sweep.seed_base = seed;
    }
    if let Some(eta) = common.eta {
        s.dimming.target_level = eta;
    }
    if let Some(e) = common.episodes {
        s.ppo.episodes = e;
    }
    if let Some(scheme) = common.scheme {
        s.sweep.scheme = scheme.into();
    }
    s.validate()?;
    Ok(s)
}

fn scheme_of(common: &Common, s: &Scenario) -> Scheme {
    common.scheme.map(Scheme::from).unwrap_or(s.sweep.scheme)
}

/// Write `text` to `dir/name`, or to stdout without an output directory.
fn emit(dir: Option<&Path>, name: &str, text: &str) -> std::io::Result<()> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            std::fs::write(d.join(name), text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(common: &Common) -> Outcome {
    let s = load(common)?;
    let report = validate::run(&s);
    emit(common.out.as_deref(), "validate.txt", &report.render())?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn cmd_oracle(common: &Common, method: Method, budget: Option<usize>) -> Outcome {
    let s = load(common)?;
    let scheme = scheme_of(common, &s);
    let env = Environment::new(&s, scheme, s.seed)?;
    let problem = Problem::from_env(&env);
    let (name, result): (&str, OracleResult) = match method {
        Method::Grid => ("grid", grid_search(&problem, &GridSpec::from_scenario(&s))?),
        Method::Random => ("random", random_search(&problem, budget.unwrap_or(s.oracle.random_budget), s.seed)?),
    };
    let csv = format!("{}\n{}\n", OracleResult::CSV_HEADER, result.csv_row(name, scheme, s.seed, &s.config_hash()));
    emit(common.out.as_deref(), "oracle.csv", &csv)?;
    if let Some(d) = &common.out {
        let json = serde_json::to_string_pretty(&result.best_action).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(d.join("best_action.json"), json)?;
    }
    Ok(())
}

fn cmd_train(common: &Common) -> Outcome {
    let s = load(common)?;
    let scheme = scheme_of(common, &s);
    let mut env = Environment::new(&s, scheme, s.seed)?;
    let (agent, log) = train(&mut env, &s.ppo, s.seed)?;
    emit(common.out.as_deref(), "training_log.csv", &log.to_csv())?;
    if let Some(d) = &common.out {
        agent.save(&d.join("checkpoint.json"))?;
        std::fs::write(d.join("config.toml"), s.to_toml()?)?;
    }
    Ok(())
}

fn cmd_sweep(
    common: &Common,
    parameter: Option<SweepParameter>,
    values: Option<Vec<f64>>,
    replications: Option<usize>,
    record_wall_time: bool,
    checkpoint_dir: Option<PathBuf>,
) -> Outcome {
    let s = load(common)?;
    let mut spec = s.sweep.clone();
    spec.scheme = scheme_of(common, &s);
    if let Some(p) = parameter {
        spec.parameter = p;
    }
    if let Some(v) = values {
        spec.values = v;
    }
    if let Some(r) = replications {
        spec.replications = r;
    }
    let rows = run_sweep(&spec, &s, &s.ppo, &SweepOptions { record_wall_time, checkpoint_dir })?;
    let name = format!("sweep-{}-{}.csv", spec.parameter, spec.scheme);
    emit(common.out.as_deref(), &name, &rows_to_csv(&rows))?;
    if rows.iter().any(|r| r.status != "ok") {
        eprintln!("some sweep cells failed; see the status column");
    }
    Ok(())
}

fn cmd_eval(common: &Common, checkpoint: &Path) -> Outcome {
    let s = load(common)?;
    let scheme = scheme_of(common, &s);
    let agent = Agent::load(checkpoint)?;
    let mut env = Environment::new(&s, scheme, s.seed)?;
    if agent.observation_dim() != env.observation_dim() || agent.layout != env.layout() {
        return Err(Failure::Config("checkpoint does not match the scenario's dimensions".into()));
    }
    let placements = evaluation_set(&s, s.sweep.eval_placements);
    let m = evaluate_policy(&agent, &mut env, &placements)?;
    let csv = format!(
        "scheme,seed,placements,mean_reward,mean_rate,mean_ee,sat_rate,config_hash,version\n{scheme},{},{},{},{},{},{},{},{CODE_VERSION}\n",
        s.seed,
        placements.len(),
        m.mean_reward,
        m.mean_rate,
        m.mean_ee,
        m.sat_rate,
        s.config_hash()
    );
    emit(common.out.as_deref(), "eval.csv", &csv)?;
    Ok(())
}

fn cmd_example(tiny: bool, out: Option<&Path>) -> Outcome {
    let s = if tiny { tiny_scenario() } else { default_scenario() };
    let text = s.to_toml()?;
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { common } => cmd_validate(&common),
        Command::Oracle { common, method, budget } => cmd_oracle(&common, method, budget),
        Command::Train { common } => cmd_train(&common),
        Command::Sweep { common, parameter, values, replications, record_wall_time, checkpoint_dir } => {
            cmd_sweep(&common, parameter, values, replications, record_wall_time, checkpoint_dir)
        }
        Command::Eval { common, checkpoint } => cmd_eval(&common, &checkpoint),
        Command::ExampleScenario { tiny, out } => cmd_example(tiny, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("invalid configuration: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => {
            eprintln!("validation failed");
            ExitCode::from(3)
        }
    }
}
