//! `lpmln` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or semantic error. Results go
//! to stdout (or `--output`), diagnostics and the JSON run report to stderr
//! (or `--report`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lpmln::fixtures;
use lpmln::learner::{learn, learn_closed_form, LearnConfig, LearnResult, Mode};
use lpmln::sampler::{mc_asp_space, SamplerOptions, UniformStrategy};
use lpmln::semantics::{probability_table, ModelSpace};
use lpmln::solver::{stable_models, ClampSet};
use lpmln::transforms::{
    completion, default_noise_weight, index_for_multi, negate_ground, noise_augment_with,
    to_negative, to_problog, unsat_translation,
};
use lpmln::{ground, parse_evidence, parse_program, parse_query, Error, Observation, Program};

#[derive(Parser, Debug)]
#[command(name = "lpmln", version, about = "Inference and weight learning for weighted answer set programs")]
struct Cli {
    /// Worker threads for parallel enumeration (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write the JSON run report here instead of stderr.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    /// Write the primary output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the ground program with the source rule of every instance.
    Ground(ProgramArg),
    /// Print every probabilistic stable model, one per line.
    Models {
        #[command(flatten)]
        program: ProgramArg,
        /// Evidence whose first example clamps the models.
        #[arg(long)]
        evidence: Option<PathBuf>,
    },
    /// Marginal probability of a query, or the full distribution.
    Infer {
        #[command(flatten)]
        program: ProgramArg,
        #[arg(long, required_unless_present = "table")]
        query: Option<String>,
        /// Dump the probability table as CSV.
        #[arg(long)]
        table: bool,
    },
    /// Draw MC-ASP samples.
    Sample {
        #[command(flatten)]
        program: ProgramArg,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value_t = Strategy::Exact)]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        thinning: usize,
        /// Sample from the sign-normalized program and print the original atoms.
        #[arg(long)]
        negate: bool,
    },
    /// Rewrite a program.
    Translate {
        #[command(flatten)]
        program: ProgramArg,
        /// unsat | neg | index:<m> | completion | problog
        #[arg(long)]
        mode: String,
    },
    /// Learn the @w(i) weights of a program from evidence.
    Learn {
        #[command(flatten)]
        program: ProgramArg,
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long, value_enum, default_value_t = LearnMode::Exact)]
        mode: LearnMode,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0.001)]
        delta: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long = "max-iters", default_value_t = 50)]
        max_iters: usize,
        /// Iterations to run before the delta stopping test applies.
        #[arg(long = "min-iters", default_value_t = 0)]
        min_iters: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, value_enum, default_value_t = Strategy::Exact)]
        strategy: Strategy,
        /// Add noise atoms for the observed predicates (default weight 10 + max|w|).
        #[arg(long, num_args = 0..=1, default_missing_value = "auto")]
        noise: Option<String>,
        /// Use the closed form for simple k-coherent programs with complete data.
        #[arg(long)]
        closed_form: bool,
        /// Step size decay: lr / (1 + decay * iteration).
        #[arg(long)]
        decay: Option<f64>,
    },
    /// Run a bundled example: coin, virus, robot or network.
    Demo {
        name: String,
        #[command(flatten)]
        seed: SeedArg,
    },
}

#[derive(Args, Debug)]
struct ProgramArg {
    #[arg(long)]
    program: PathBuf,
}

#[derive(Args, Debug)]
struct SeedArg {
    #[arg(long, env = "LPMLN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Exact,
    Xor,
}

impl From<Strategy> for UniformStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Exact => UniformStrategy::Exact,
            Strategy::Xor => UniformStrategy::xor(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnMode {
    Exact,
    Mcmc,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Usage(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct RunReport {
    subcommand: &'static str,
    config: Value,
    wall_time_s: f64,
    seed: Option<u64>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    details: Value,
}

struct Outcome {
    text: String,
    config: Value,
    seed: Option<u64>,
    details: Value,
}

impl Outcome {
    fn plain(text: String, config: Value) -> Self {
        Outcome { text, config, seed: None, details: Value::Null }
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_program(arg: &ProgramArg) -> CliResult<Program> {
    Ok(parse_program(&read(&arg.program)?)?)
}

fn load_evidence(path: &Path) -> CliResult<Vec<Observation>> {
    Ok(parse_evidence(&read(path)?)?)
}

/// `x` rounded to 10 significant digits.
fn significant(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn weights_of(result: &LearnResult) -> Value {
    json!(result.weights)
}

fn learn_report(result: &LearnResult) -> Value {
    json!({
        "weights": result.weights,
        "converged": result.converged,
        "iterations": result.iterations(),
        "gradient_norms": result.gradient_norms,
        "trace": result.trace.iter().map(|r| json!({"weights": r.weights, "gradient": r.gradient})).collect::<Vec<_>>(),
        "seed": result.seed,
    })
}

fn run_learn(
    program: &Program,
    observations: &[Observation],
    config: &LearnConfig,
    closed_form: bool,
) -> CliResult<(Vec<f64>, Value)> {
    if closed_form {
        let [obs] = observations else {
            return Err(Failure::Usage("closed form takes exactly one complete example".into()));
        };
        let w = learn_closed_form(program, obs)?;
        let details = json!({ "weights": w, "closed_form": true });
        return Ok((w, details));
    }
    let result = learn(program, observations, config)?;
    Ok((result.weights.clone(), learn_report(&result)))
}

fn dispatch(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Ground(p) => {
            let g = ground(&load_program(p)?)?;
            Ok(Outcome::plain(g.to_string(), json!({ "program": p.program })))
        }
        Command::Models { program, evidence } => {
            let g = ground(&load_program(program)?)?;
            let clamps = match evidence {
                Some(path) => match load_evidence(path)?.first() {
                    Some(o) => ClampSet::from(o),
                    None => ClampSet::empty(),
                },
                None => ClampSet::empty(),
            };
            let models = stable_models(&g, &clamps)?;
            let text: String = models.iter().map(|m| format!("{m}\n")).collect();
            Ok(Outcome::plain(text, json!({ "program": program.program, "evidence": evidence, "models": models.len() })))
        }
        Command::Infer { program, query, table } => {
            let g = ground(&load_program(program)?)?;
            let config = json!({ "program": program.program, "query": query, "table": table });
            if *table {
                let t = probability_table(&g)?;
                return Ok(Outcome::plain(t.to_csv(), config));
            }
            let q = parse_query(query.as_deref().unwrap_or_default())?;
            let space = ModelSpace::build(&g)?;
            if space.is_empty() {
                return Err(Error::Semantic("no probabilistic stable model".into()).into());
            }
            let p = space.marginal(&g.rule_weights()?, &q)?;
            Ok(Outcome::plain(format!("{}\n", significant(p)), config))
        }
        Command::Sample { program, n, seed, strategy, burn_in, thinning, negate } => {
            let prog = load_program(program)?;
            if prog.is_parameterized() {
                return Err(Failure::Usage("program has unbound @w(i) weights".into()));
            }
            let g = ground(&prog)?;
            let target = if *negate { negate_ground(&g)? } else { g.clone() };
            let space = ModelSpace::build(&target)?;
            let options = SamplerOptions {
                strategy: (*strategy).into(),
                burn_in: *burn_in,
                thinning: *thinning,
                initial: None,
            };
            let samples = mc_asp_space(&space, *n, seed.seed, &options)?;
            let mut text = String::new();
            for s in &samples.samples {
                let shown: lpmln::Interpretation = s.iter().filter(|a| !*negate || g.atom_id(a).is_some()).cloned().collect();
                text.push_str(&format!("{shown}\n"));
            }
            let mean_m = samples.forbidden_sizes.iter().sum::<usize>() as f64
                / samples.forbidden_sizes.len().max(1) as f64;
            let stats = json!({
                "samples": samples.len(),
                "seed": samples.seed,
                "strategy": samples.strategy.name(),
                "chain_length": samples.forbidden_sizes.len(),
                "mean_forbidden": mean_m,
                "xor_fallbacks": samples.xor_fallbacks,
            });
            text.push_str(&format!("{stats}\n"));
            Ok(Outcome {
                text,
                config: json!({ "program": program.program, "n": n, "strategy": samples.strategy.name(), "burn_in": burn_in, "thinning": thinning, "negate": negate }),
                seed: Some(seed.seed),
                details: Value::Null,
            })
        }
        Command::Translate { program, mode } => {
            let prog = load_program(program)?;
            let text = match mode.as_str() {
                "unsat" => unsat_translation(&prog)?.to_string(),
                "neg" => to_negative(&prog)?.to_string(),
                "completion" => completion(&prog)?.to_string(),
                "problog" => to_problog(&prog)?,
                m => match m.strip_prefix("index:").map(str::parse::<usize>) {
                    Some(Ok(k)) => index_for_multi(&prog, k)?.to_string(),
                    _ => return Err(Failure::Usage(format!("unknown translation mode `{m}`"))),
                },
            };
            Ok(Outcome::plain(text, json!({ "program": program.program, "mode": mode })))
        }
        Command::Learn {
            program,
            evidence,
            mode,
            lr,
            delta,
            n,
            max_iters,
            min_iters,
            seed,
            strategy,
            noise,
            closed_form,
            decay,
        } => {
            let mut prog = load_program(program)?;
            let observations = load_evidence(evidence)?;
            if let Some(u) = noise {
                let u = match u.as_str() {
                    "auto" => default_noise_weight(&prog),
                    v => v.parse().map_err(|_| Failure::Usage(format!("invalid noise weight `{v}`")))?,
                };
                let atoms: Vec<lpmln::Atom> = observations.iter().flat_map(|o| o.atoms().cloned()).collect();
                let mut preds: Vec<String> = atoms.iter().map(|a| a.predicate.clone()).collect();
                preds.sort();
                preds.dedup();
                prog = noise_augment_with(&prog, &preds, &atoms, u)?;
            }
            let config = LearnConfig {
                learning_rate: *lr,
                delta: *delta,
                max_iterations: *max_iters,
                samples: *n,
                mode: match mode {
                    LearnMode::Exact => Mode::Exact,
                    LearnMode::Mcmc => Mode::Mcmc,
                },
                initial_weights: None,
                seed: seed.seed,
                strategy: (*strategy).into(),
                decay: *decay,
                min_iterations: *min_iters,
            };
            let (weights, details) = run_learn(&prog, &observations, &config, *closed_form)?;
            let learned = prog.bind(&weights)?;
            Ok(Outcome {
                text: learned.to_string(),
                config: json!({
                    "program": program.program, "evidence": evidence, "mode": format!("{mode:?}").to_lowercase(),
                    "lr": lr, "delta": delta, "n": n, "max_iters": max_iters, "min_iters": min_iters, "noise": noise,
                    "closed_form": closed_form, "decay": decay,
                }),
                seed: Some(seed.seed),
                details,
            })
        }
        Command::Demo { name, seed } => demo(name, seed.seed),
    }
}

fn demo(name: &str, seed: u64) -> CliResult<Outcome> {
    let fixture = fixtures::by_name(name)
        .ok_or_else(|| Failure::Usage(format!("unknown demo `{name}` (coin, virus, robot, network)")))?;
    let program = parse_program(fixture.program)?;
    let observations = parse_evidence(fixture.evidence)?;
    let mut text = String::new();
    let details = match name {
        "virus" => {
            let learned = ground(&parse_program(fixtures::VIRUS_LEARNED)?)?;
            let space = ModelSpace::build(&learned)?;
            let w = learned.rule_weights()?;
            for person in ["B", "C", "D", "E", "F", "G", "H"] {
                let q = parse_query(&format!("carries_virus(\"{person}\")"))?;
                text.push_str(&format!("P(carries_virus(\"{person}\")) = {}\n", significant(space.marginal(&w, &q)?)));
            }
            Value::Null
        }
        _ => {
            let mode = if name == "coin" { Mode::Exact } else { Mode::Mcmc };
            let config = LearnConfig { mode, seed, ..LearnConfig::default() };
            let result = learn(&program, &observations, &config)?;
            for (i, w) in result.weights.iter().enumerate() {
                text.push_str(&format!(
                    "@w({}) = {}  p = {}\n",
                    i + 1,
                    significant(*w),
                    significant(1.0 / (1.0 + (-w).exp()))
                ));
            }
            weights_of(&result)
        }
    };
    Ok(Outcome {
        text,
        config: json!({ "demo": name }),
        seed: Some(seed),
        details,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ground(_) => "ground",
        Command::Models { .. } => "models",
        Command::Infer { .. } => "infer",
        Command::Sample { .. } => "sample",
        Command::Translate { .. } => "translate",
        Command::Learn { .. } => "learn",
        Command::Demo { .. } => "demo",
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure {jobs} workers: {e}")))?;
    }
    let start = Instant::now();
    let outcome = dispatch(&cli.command)?;
    let mut outputs = Vec::new();
    match &cli.output {
        Some(path) => {
            fs::write(path, &outcome.text)
                .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?;
            outputs.push(path.display().to_string());
        }
        None => print!("{}", outcome.text),
    }
    let report = RunReport {
        subcommand: command_name(&cli.command),
        config: outcome.config,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: outcome.seed,
        outputs,
        details: outcome.details,
    };
    let line = serde_json::to_string(&report).expect("report serializes");
    match &cli.report {
        Some(path) => fs::write(path, format!("{line}\n"))
            .map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))?,
        None => eprintln!("{line}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
