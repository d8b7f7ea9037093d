//! Command-line front end: equilibrium solves, figure sweeps, Monte Carlo
//! runs and settlement of recorded report files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use infomarket::belief::UpdateForm;
use infomarket::equilibrium::{
    batch_equilibrium, batch_welfare, mvp_equilibrium, mvp_principal_utility, mvp_welfare, EquilibriumResult,
};
use infomarket::experiment::{run_experiment, Experiment, ExperimentConfig, Parameters};
use infomarket::fpm::{fpm_run, RawBatch};
use infomarket::montecarlo::{
    deviation_test, simulate, simulate_trials, write_trials_csv, Acquisition, Deviation, Mechanism, ReportPolicy,
    SimConfig, StrategyProfile,
};
use infomarket::mvp::{mvp_run, read_report_stream};
use infomarket::pm_baseline::{pm_batch_equilibrium, pm_batch_welfare, pm_race_equilibrium};
use infomarket::{
    AccessFunction, Belief, Error, InformationModel, LatencyFamily, Result, ScoreSequence, ScoringKind, ScoringRule,
    TimeValue,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "infomarket", version, about = "Welfare-maximizing prediction markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one symmetric equilibrium and print it as JSON.
    Solve(SolveArgs),
    /// Run a built-in figure experiment with its default parameters.
    Figure {
        /// fig_original, fig_late, fig_eas, fig_noise, fig_subst, fig_welfare_heatmap or custom
        name: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an experiment described by a TOML or JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Monte Carlo simulation of a market; prints summary statistics as JSON.
    Simulate(SimulateArgs),
    /// Settle a batch market from a JSON file `{"reports": [[...]], "outcome": y}`.
    SettleFpm {
        batch: PathBuf,
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Settle a sequential market from a report stream `agent_id, time, b_1, ..., b_{d-1}`.
    SettleMvp {
        reports: PathBuf,
        #[arg(long)]
        outcome: usize,
        /// Number of agents (defaults to the largest agent id plus one).
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Write the belief path `time, p_1, ..., p_d` here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        market: MarketArgs,
    },
}

#[derive(Args)]
struct MarketArgs {
    /// Prior belief, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    prior: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Rule::Quadratic)]
    rule: Rule,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Quadratic,
    Log,
}

impl Rule {
    fn build(self, scale: f64) -> Result<ScoringRule> {
        let kind = match self {
            Rule::Quadratic => ScoringKind::Quadratic,
            Rule::Log => ScoringKind::Log,
        };
        ScoringRule::new(kind, scale)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Access {
    Linear,
    Exponential,
}

impl Access {
    fn build(self, lam: f64) -> Result<AccessFunction> {
        match self {
            Access::Linear => AccessFunction::linear(lam),
            Access::Exponential => AccessFunction::exponential(lam),
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Lambda grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    /// Score sequence v_0, v_1, ..., comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    v: Option<Vec<f64>>,
}

impl Overrides {
    fn apply(&self, p: &mut Parameters) {
        let Overrides { out: _, seed, trials, alpha, beta, lambda, eta, n, scale, v } = self;
        macro_rules! set {
            ($($field:ident <- $value:expr),*) => { $(if let Some(x) = $value.clone() { p.$field = Some(x); })* };
        }
        set!(seed <- seed, trials <- trials, alpha <- alpha, beta <- beta, lambdas <- lambda, eta <- eta,
             n <- n, scale <- scale, v <- v);
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMarket {
    /// Sequential market with counterfactual rewards.
    Mvp,
    /// Leave-one-out batch market.
    Fpm,
    /// Sequential rank race of a traditional market.
    PmRace,
    /// Winner-take-all batch race of a traditional market.
    PmBatch,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    market: SolveMarket,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Ease of acquiring a signal.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, value_enum, default_value_t = Access::Exponential)]
    access: Access,
    #[command(flatten)]
    values: ValueArgs,
}

#[derive(Args)]
struct ValueArgs {
    /// Score sequence v_0, v_1, ..., comma separated.
    #[arg(long, value_delimiter = ',')]
    v: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Rule::Quadratic)]
    rule: Rule,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

impl ValueArgs {
    fn sequence(&self, n: usize) -> Result<ScoreSequence> {
        let v = match (&self.v, self.alpha, self.beta) {
            (Some(v), None, None) => ScoreSequence::new(v.clone())?,
            (None, Some(a), Some(b)) => {
                InformationModel::binary_noisy(a, b, n)?.v_sequence(&self.rule.build(self.scale)?, n)?
            }
            _ => return Err(Error::Input("give either --v or both --alpha and --beta".into())),
        };
        v.require_agents(n)?;
        Ok(v)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMechanism {
    Fpm,
    Mvp,
    PmBatch,
    PmSequential,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mechanism: SimMechanism,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Effort of every agent.
    #[arg(long)]
    effort: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, value_enum, default_value_t = Access::Exponential)]
    access: Access,
    #[arg(long, value_enum, default_value_t = Rule::Quadratic)]
    rule: Rule,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write one CSV row per trial to this file.
    #[arg(long)]
    trial_log: Option<PathBuf>,
    /// Agent whose deviation is tested.
    #[arg(long, requires = "deviation")]
    deviant: Option<usize>,
    /// truthful, silent, delay:<d>, perturb:<entry>:<delta> or effort:<c>
    #[arg(long, requires = "deviant")]
    deviation: Option<String>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_deviation(s: &str) -> Result<Deviation> {
    let bad = || Error::Input(format!("cannot parse deviation {s:?}"));
    let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts.as_slice() {
        ["truthful"] => Deviation::Policy(ReportPolicy::Truthful),
        ["silent"] => Deviation::Policy(ReportPolicy::Silent),
        ["delay", d] => Deviation::Policy(ReportPolicy::Delayed { delay: num(d)? }),
        ["perturb", e, d] => {
            Deviation::Policy(ReportPolicy::Perturbed { entry: e.parse().map_err(|_| bad())?, delta: num(d)? })
        }
        ["effort", c] => Deviation::Effort(num(c)?),
        _ => return Err(bad()),
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

fn emit(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn equilibrium_json(eq: &EquilibriumResult) -> serde_json::Value {
    json!({
        "effort": eq.effort,
        "residual": eq.residual,
        "kkt_residual": eq.kkt_residual(),
        "corner": eq.corner,
        "bracket": [eq.bracket.0, eq.bracket.1],
    })
}

fn solve(args: &SolveArgs) -> Result<()> {
    let n = args.n;
    let out = match args.market {
        SolveMarket::Mvp => {
            let v = args.values.sequence(n)?;
            let (lat, h) = (LatencyFamily::new(args.lambda)?, TimeValue::exponential(args.eta)?);
            let eq = mvp_equilibrium(&lat, &h, &v, n)?;
            let mut j = equilibrium_json(&eq);
            j["welfare"] = json!(mvp_welfare(&lat, &h, &v, n, eq.effort)?);
            j["principal_utility"] = json!(mvp_principal_utility(&lat, &h, &v, n, eq.effort)?);
            j
        }
        SolveMarket::Fpm => {
            let v = args.values.sequence(n)?;
            let access = args.access.build(args.lambda)?;
            let eq = batch_equilibrium(&access, &v, n)?;
            let mut j = equilibrium_json(&eq);
            j["welfare"] = json!(batch_welfare(&access, &v, n, eq.effort)?);
            j
        }
        SolveMarket::PmRace => equilibrium_json(&pm_race_equilibrium(&args.values.sequence(n)?, n)?),
        SolveMarket::PmBatch => {
            let access = args.access.build(args.lambda)?;
            let eq = pm_batch_equilibrium(&access, n)?;
            let mut j = equilibrium_json(&eq);
            j["welfare"] = json!(pm_batch_welfare(&access, n, eq.effort)?);
            j
        }
    };
    emit(&out, None)
}

fn run_config(mut config: ExperimentConfig, overrides: &Overrides) -> Result<()> {
    overrides.apply(&mut config.parameters);
    let dir = overrides
        .out
        .clone()
        .or_else(|| config.output_path.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(config.experiment.name()));
    let start = Instant::now();
    let output = run_experiment(&config)?;
    for path in output.write(&dir, &config, start.elapsed().as_secs_f64())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let model = InformationModel::binary_noisy(args.alpha, args.beta, args.n)?;
    let (mechanism, acquisition, time_value) = match args.mechanism {
        SimMechanism::Fpm => (Mechanism::Fpm, Acquisition::Access(args.access.build(args.lambda)?), None),
        SimMechanism::PmBatch => (Mechanism::PmBatch, Acquisition::Access(args.access.build(args.lambda)?), None),
        SimMechanism::Mvp => (
            Mechanism::Mvp,
            Acquisition::Latency(LatencyFamily::new(args.lambda)?),
            Some(TimeValue::exponential(args.eta)?),
        ),
        SimMechanism::PmSequential => (
            Mechanism::PmSequential,
            Acquisition::Latency(LatencyFamily::new(args.lambda)?),
            Some(TimeValue::exponential(args.eta)?),
        ),
    };
    let config = SimConfig {
        model,
        mechanism,
        acquisition,
        time_value,
        rule: args.rule.build(args.scale)?,
        update_form: UpdateForm::Likelihood,
        profile: StrategyProfile::symmetric(args.n, args.effort, ReportPolicy::Truthful),
        trials: args.trials,
        seed: args.seed,
        parallel: true,
    };
    let result = match (&args.deviant, &args.deviation) {
        (Some(agent), Some(dev)) => serde_json::to_value(deviation_test(&config, *agent, &parse_deviation(dev)?)?),
        _ => serde_json::to_value(simulate(&config)?),
    }
    .expect("serializable");
    if let Some(path) = &args.trial_log {
        let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
        write_trials_csv(&simulate_trials(&config)?, std::io::BufWriter::new(file))?;
    }
    emit(&result, args.out.as_deref())
}

fn settle_fpm(batch: &Path, market: &MarketArgs) -> Result<()> {
    let text = fs::read_to_string(batch).map_err(|e| io_error(batch, e))?;
    let raw: RawBatch =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", batch.display())))?;
    let prior = Belief::new(market.prior.clone())?;
    let parsed = raw.parse(prior.num_outcomes())?;
    let result = fpm_run(&prior, &parsed, &market.rule.build(market.scale)?)?;
    emit(&serde_json::to_value(result).expect("serializable"), None)
}

#[allow(clippy::too_many_arguments)]
fn settle_mvp(
    path: &Path,
    outcome: usize,
    agents: Option<usize>,
    eta: f64,
    trace_path: Option<&Path>,
    market: &MarketArgs,
) -> Result<()> {
    let prior = Belief::new(market.prior.clone())?;
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let reports = read_report_stream(file, prior.num_outcomes())?;
    let n = agents.unwrap_or_else(|| reports.iter().map(|r| r.agent + 1).max().unwrap_or(0));
    let h = TimeValue::exponential(eta)?;
    let settlement = mvp_run(&prior, &reports, n, outcome, &market.rule.build(market.scale)?, &h)?;
    println!("agent_id,reward");
    for (i, r) in settlement.rewards.iter().enumerate() {
        println!("{i},{r}");
    }
    if let Some(tp) = trace_path {
        let d = prior.num_outcomes();
        let mut text = String::from("time");
        for k in 1..=d {
            text.push_str(&format!(",p_{k}"));
        }
        text.push('\n');
        for (t, p) in settlement.trace.dump() {
            text.push_str(&t.to_string());
            for x in p {
                text.push_str(&format!(",{x}"));
            }
            text.push('\n');
        }
        fs::write(tp, text).map_err(|e| io_error(tp, e))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => solve(&args),
        Command::Figure { name, overrides } => {
            let experiment: Experiment = name.parse()?;
            run_config(ExperimentConfig::new(experiment), &overrides)
        }
        Command::Run { config, overrides } => run_config(ExperimentConfig::from_path(&config)?, &overrides),
        Command::Simulate(args) => simulate_cmd(&args),
        Command::SettleFpm { batch, market } => settle_fpm(&batch, &market),
        Command::SettleMvp { reports, outcome, agents, eta, trace, market } => {
            settle_mvp(&reports, outcome, agents, eta, trace.as_deref(), &market)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Input(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
