//! `riskmdp`: decide expectation/VaR/CVaR queries on MDPs, evaluate and
//! simulate strategies, generate benchmark instances.
//!
//! Exit codes: 0 SAT (or success), 1 UNSAT, 2 UNKNOWN, 64 usage error,
//! 65 invalid input.
//!
//! Model files are JSON:
//!
//! ```json
//! {"states": [{"name": "s0", "rewards": ["0"], "target": false}, ...],
//!  "actions": [{"name": "a", "from": "s0", "transitions": {"5": "1"}}, ...],
//!  "initial": "s0"}
//! ```
//!
//! Queries: `{"objective": "reach", "constraints": [{"dim": 0, "e": "6",
//! "cvar": {"p": "1/20", "c": "2"}, "var": {"q": "1/20", "v": "5"}}]}`.
//! A file holding `{"model": ..., "query": ...}` may stand for both.
//! Strategies: `{"memory": [..], "initial": {mem: prob}, "next_move":
//! [{"state", "memory", "move": {action: prob}}], "update": [{"action",
//! "state", "memory", "next": {mem: prob}}]}` where `"action": null` matches
//! any action.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::ToPrimitive;
use riskmdp::gadgets::{example, random_mdp, sat_reduction, Cnf3, ExampleName, RandomMdpConfig};
use riskmdp::graph::mec_decomposition;
use riskmdp::io::{
    certificate_to_value, instance_to_json, model_from_value, model_to_json, query_from_value,
    strategy_from_json, strategy_to_json, to_pretty, verdict_to_value,
};
use riskmdp::simulation::{empirical_measures, sample_payoffs, write_csv, SimConfig};
use riskmdp::solver::{decide, SolveOptions};
use riskmdp::synthesis::evaluate;
use riskmdp::{
    cvar, expectation, parse_rational, var, Mdp, Objective, PayoffLaw, Query, Rational, Status,
};
use serde_json::Value;

const EXIT_USAGE: u8 = 64;
const EXIT_INPUT: u8 = 65;

#[derive(Parser)]
#[command(
    name = "riskmdp",
    version,
    about = "Risk-aware queries on Markov decision processes"
)]
struct Cli {
    /// Worker threads for the solvers and the simulator (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a query; prints SAT, UNSAT or UNKNOWN.
    Check(CheckArgs),
    /// Exact payoff law and measures of a strategy.
    Evaluate(EvalArgs),
    /// Exact measures next to Monte Carlo estimates.
    Simulate(SimArgs),
    /// Maximal end components of a model.
    Mec {
        /// Model or instance file, `-` for stdin.
        model: PathBuf,
    },
    /// Write a built-in example or a random model.
    Generate(GenArgs),
    /// Reduce a 3-CNF (DIMACS) to a reachability instance.
    GadgetSat {
        /// DIMACS file, `-` for stdin.
        cnf: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Reach,
    Mean,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Reach => Objective::Reach,
            ObjectiveArg::Mean => Objective::Mean,
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    /// Model or instance file, `-` for stdin.
    model: PathBuf,
    /// Query file; required unless the model file is an instance.
    query: Option<PathBuf>,
    /// Override the query's objective.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Threshold subdivisions for multi-dimensional mean payoff.
    #[arg(long, default_value_t = SolveOptions::default().grid)]
    grid: usize,
    /// Write the witness strategy here.
    #[arg(long)]
    witness: Option<PathBuf>,
    /// Write the certificate here.
    #[arg(long)]
    certificate: Option<PathBuf>,
    /// Print the full verdict as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct Levels {
    /// CVaR level.
    #[arg(long, default_value = "1/20", value_parser = level)]
    p: Rational,
    /// VaR level.
    #[arg(long, default_value = "1/20", value_parser = level)]
    q: Rational,
}

#[derive(Args)]
struct EvalArgs {
    /// Model or instance file, `-` for stdin.
    model: PathBuf,
    strategy: PathBuf,
    /// Payoff; defaults to the instance's objective, else reach.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[command(flatten)]
    levels: Levels,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, default_value_t = SimConfig::default().runs)]
    runs: usize,
    #[arg(long, default_value_t = SimConfig::default().horizon)]
    horizon: usize,
    #[arg(long, default_value_t = SimConfig::default().burn_in)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the raw samples as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// `choice`, `loop`, `negative`, `slow(EPS)` or `random`.
    name: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = RandomMdpConfig::default().states)]
    states: usize,
    #[arg(long, default_value_t = RandomMdpConfig::default().actions_per_state)]
    actions: usize,
    #[arg(long, default_value_t = RandomMdpConfig::default().density)]
    density: usize,
    #[arg(long, default_value_t = RandomMdpConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = RandomMdpConfig::default().reward_range.0, allow_hyphen_values = true)]
    min_reward: i64,
    #[arg(long, default_value_t = RandomMdpConfig::default().reward_range.1, allow_hyphen_values = true)]
    max_reward: i64,
    #[arg(long, default_value_t = RandomMdpConfig::default().target_fraction)]
    targets: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn level(s: &str) -> Result<Rational, String> {
    let r = parse_rational(s).ok_or_else(|| format!("cannot read {s:?} as a rational"))?;
    if r < Rational::from_integer(0.into()) || r > Rational::from_integer(1.into()) {
        return Err(format!("level {r} outside [0, 1]"));
    }
    Ok(r)
}

/// An error that ends the run with the given exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::input(format!("stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_json(text: &str, what: &Path) -> Result<Value, Failure> {
    serde_json::from_str(text)
        .map_err(|e| Failure::input(format!("{}: malformed JSON: {e}", what.display())))
}

/// Reads a bare model or a `{model, query}` instance.
fn load_model(path: &Path) -> Result<(Mdp, Option<Query>), Failure> {
    let v = parse_json(&read_input(path)?, path)?;
    let ctx = |e: riskmdp::io::IoError| Failure::input(format!("{}: {e}", path.display()));
    match v.get("model") {
        Some(m) => {
            let mdp = model_from_value(m).map_err(ctx)?;
            let query = v
                .get("query")
                .map(|q| query_from_value(q, mdp.dim()))
                .transpose()
                .map_err(ctx)?;
            Ok((mdp, query))
        }
        None => Ok((model_from_value(&v).map_err(ctx)?, None)),
    }
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Sat => 0,
        Status::Unsat => 1,
        Status::Unknown => 2,
    }
}

fn check(args: &CheckArgs) -> Result<u8, Failure> {
    let (mdp, instance_query) = load_model(&args.model)?;
    let mut query = match &args.query {
        Some(path) => {
            let v = parse_json(&read_input(path)?, path)?;
            query_from_value(&v, mdp.dim())
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        None => instance_query
            .ok_or_else(|| Failure::input("no query: pass a query file or an instance"))?,
    };
    if let Some(o) = args.objective {
        query.objective = o.into();
    }
    let verdict =
        decide(&mdp, &query, &SolveOptions { grid: args.grid }).map_err(Failure::input)?;
    if let Some(w) = &verdict.witness {
        let law = evaluate(&mdp, w, query.objective).map_err(|e| Failure {
            code: 2,
            message: format!("witness does not evaluate: {e}"),
        })?;
        if !query.satisfied_by(&law) {
            println!("UNKNOWN");
            return Err(Failure {
                code: 2,
                message: "witness failed re-verification".into(),
            });
        }
        if let Some(p) = &args.witness {
            write_output(Some(p), &strategy_to_json(&mdp, w))?;
        }
    }
    if let (Some(p), Some(c)) = (&args.certificate, &verdict.certificate) {
        write_output(Some(p), &to_pretty(&certificate_to_value(c)))?;
    }
    if args.json {
        print!("{}", to_pretty(&verdict_to_value(&mdp, &verdict)));
    } else {
        println!("{}", verdict.status);
        if let Some(c) = &verdict.certificate {
            println!("procedure: {}", c.procedure);
            for (k, v) in &c.guess {
                println!("guess {k} = {v}");
            }
        }
        if let Some(law) = &verdict.law {
            print!("{law}");
        }
    }
    Ok(status_code(verdict.status))
}

fn load_strategy_run(args: &EvalArgs) -> Result<(Mdp, riskmdp::StrategySpec, Objective), Failure> {
    let (mdp, query) = load_model(&args.model)?;
    let text = read_input(&args.strategy)?;
    let strategy = strategy_from_json(&mdp, &text)
        .map_err(|e| Failure::input(format!("{}: {e}", args.strategy.display())))?;
    let objective = args
        .objective
        .map(Objective::from)
        .or(query.map(|q| q.objective))
        .unwrap_or(Objective::Reach);
    Ok((mdp, strategy, objective))
}

fn exact_law(
    mdp: &Mdp,
    s: &riskmdp::StrategySpec,
    objective: Objective,
) -> Result<PayoffLaw, Failure> {
    evaluate(mdp, s, objective).map_err(|e| Failure::input(format!("strategy: {e}")))
}

fn print_table(rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(x, w)| format!("{x:<w$}"))
            .collect();
        println!("{}", line.join("  ").trim_end());
    }
}

fn evaluate_cmd(args: &EvalArgs) -> Result<u8, Failure> {
    let (mdp, strategy, objective) = load_strategy_run(args)?;
    let law = exact_law(&mdp, &strategy, objective)?;
    let Levels { p, q } = &args.levels;
    let mut rows = vec![vec![
        "dim".into(),
        "E".into(),
        format!("VaR@{q}"),
        format!("CVaR@{p}"),
    ]];
    for (j, d) in law.marginals.iter().enumerate() {
        rows.push(vec![
            j.to_string(),
            expectation(d).to_string(),
            var(d, q).to_string(),
            cvar(d, p).to_string(),
        ]);
    }
    print_table(&rows);
    print!("{law}");
    Ok(0)
}

fn approx(r: &Rational) -> String {
    format!("{:.4}", r.to_f64().unwrap_or(f64::NAN))
}

fn simulate_cmd(args: &SimArgs) -> Result<u8, Failure> {
    let (mdp, strategy, objective) = load_strategy_run(&args.eval)?;
    let law = exact_law(&mdp, &strategy, objective)?;
    let cfg = SimConfig {
        runs: args.runs,
        horizon: args.horizon,
        burn_in: args.burn_in,
        seed: args.seed,
    };
    let samples = sample_payoffs(&mdp, &strategy, objective, &cfg).map_err(Failure::input)?;
    if let Some(path) = &args.csv {
        let file = fs::File::create(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        write_csv(file, &samples)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    let Levels { p, q } = &args.eval.levels;
    let mut rows = vec![vec![
        "dim".into(),
        "E".into(),
        "E~".into(),
        format!("VaR@{q}"),
        "VaR~".into(),
        format!("CVaR@{p}"),
        "CVaR~".into(),
    ]];
    for (j, d) in law.marginals.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|s| s[j]).collect();
        let emp = empirical_measures(&column, p, q).map_err(Failure::input)?;
        let emp_var = emp.var.finite().map_or("inf".to_string(), |v| approx(&v));
        rows.push(vec![
            j.to_string(),
            expectation(d).to_string(),
            approx(&emp.e),
            var(d, q).to_string(),
            emp_var,
            cvar(d, p).to_string(),
            approx(&emp.cvar),
        ]);
    }
    print_table(&rows);
    println!("runs {} seed {}", cfg.runs, cfg.seed);
    Ok(0)
}

fn mec_cmd(path: &Path) -> Result<u8, Failure> {
    let (mdp, _) = load_model(path)?;
    let dec = mec_decomposition(&mdp);
    for (i, m) in dec.mecs.iter().enumerate() {
        let states: Vec<&str> = m.states.iter().map(|&s| mdp.state_name(s)).collect();
        let actions: Vec<&str> = m
            .actions
            .iter()
            .map(|&a| mdp.action(a).name.as_str())
            .collect();
        println!(
            "mec {i}: states [{}] actions [{}]",
            states.join(", "),
            actions.join(", ")
        );
    }
    let transient: Vec<&str> = (0..mdp.num_states())
        .filter(|&s| dec.state_to_mec[s].is_none())
        .map(|s| mdp.state_name(s))
        .collect();
    println!("transient: [{}]", transient.join(", "));
    Ok(0)
}

fn generate_cmd(args: &GenArgs) -> Result<u8, Failure> {
    let text = if args.name == "random" {
        if args.min_reward > args.max_reward {
            return Err(Failure {
                code: EXIT_USAGE,
                message: "--min-reward exceeds --max-reward".into(),
            });
        }
        let cfg = RandomMdpConfig {
            states: args.states,
            actions_per_state: args.actions,
            density: args.density,
            reward_range: (args.min_reward, args.max_reward),
            dim: args.dim,
            target_fraction: args.targets,
            seed: args.seed,
        };
        model_to_json(&random_mdp(&cfg))
    } else {
        let name = ExampleName::parse(&args.name).ok_or_else(|| Failure {
            code: EXIT_USAGE,
            message: format!("unknown example {:?}", args.name),
        })?;
        let (mdp, query) = example(&name);
        instance_to_json(&mdp, &query)
    };
    write_output(args.out.as_deref(), &text)?;
    Ok(0)
}

fn gadget_cmd(cnf: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let cnf = Cnf3::from_dimacs(&read_input(cnf)?)
        .map_err(|e| Failure::input(format!("{}: {e}", cnf.display())))?;
    let (mdp, query) = sat_reduction(&cnf);
    write_output(out, &instance_to_json(&mdp, &query))?;
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_USAGE,
                message: format!("--threads: {e}"),
            })?;
    }
    match &cli.command {
        Command::Check(a) => check(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Mec { model } => mec_cmd(model),
        Command::Generate(a) => generate_cmd(a),
        Command::GadgetSat { cnf, out } => gadget_cmd(cnf, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let code = match run(&cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("riskmdp: {}", f.message);
            f.code
        }
    };
    let _ = io::stdout().flush();
    ExitCode::from(code)
}
