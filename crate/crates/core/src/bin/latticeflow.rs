//! Command-line front end: run corpus variants against scenarios, apply
//! transform scripts, and fuzz equivalence across adversarial seeds.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latticeflow::corpus::{self, Variant};
use latticeflow::ir::{parse_dsl, serialize_graph, Deployment};
use latticeflow::registry::FunctionRegistry;
use latticeflow::runtime::{run_deployment, RunConfig};
use latticeflow::scenario::Scenario;
use latticeflow::transform::apply_script;
use latticeflow::verify::{self, sealed_outputs, Outcome};

#[derive(Parser)]
#[command(name = "latticeflow", version, about = "Distributed dataflow mini compiler and runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a corpus variant against a scenario and print sealed outputs.
    Run(RunArgs),
    /// Apply a transform script to a graph or deployment file.
    Transform(TransformArgs),
    /// Run variants across adversarial seeds and compare against the
    /// sequential-fold oracle.
    Verify(VerifyArgs),
    /// Verify with a large default seed count.
    Fuzz(VerifyArgs),
    /// Print the per-channel delivery schedules of one run.
    DumpSchedules(RunArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario: a fixture name (`apples`) or a TOML file path.
    #[arg(long, default_value = "apples")]
    scenario: String,
    /// Generate a scenario instead: `<n_clients>,<max_session_len>`.
    #[arg(long, value_name = "N,MAX")]
    generate: Option<String>,
    /// Seed for scenario generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, String> {
        if let Some(spec) = &self.generate {
            let (n, max) = spec
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| format!("bad --generate spec `{spec}`, want N,MAX"))?;
            return Ok(Scenario::generate(self.seed, n, max));
        }
        if let Some(s) = corpus::scenario_fixture(&self.scenario) {
            return Ok(s);
        }
        let text = fs::read_to_string(&self.scenario)
            .map_err(|e| format!("cannot read scenario `{}`: {e}", self.scenario))?;
        Scenario::parse(&text).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct RunArgs {
    /// Which corpus variant to run.
    #[arg(long, default_value = "orig")]
    variant: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Base seed for adversarial channels.
    #[arg(long, default_value_t = 0)]
    net_seed: u64,
    /// Replica count for the replicated variant.
    #[arg(long, default_value_t = 3)]
    replicas: u32,
    /// Seed for the client-to-replica assignment.
    #[arg(long, default_value_t = 0)]
    assign_seed: i64,
    /// Write the run trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also print per-channel delivery schedules.
    #[arg(long, default_value_t = false)]
    dump_schedules: bool,
    /// Abort after this many ticks.
    #[arg(long)]
    tick_limit: Option<u64>,
}

#[derive(Args)]
struct TransformArgs {
    /// Input: a `.hfs` graph or a deployment TOML.
    input: PathBuf,
    /// Transform script, one `rule arg=value …` per line.
    script: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated variant names.
    #[arg(long, default_value = "ssiv,pushed,decoupled_server,decoupled_client,replicated")]
    variants: String,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Number of adversarial seeds per variant.
    #[arg(long)]
    seeds: Option<u32>,
    /// Base seed for the sweep.
    #[arg(long, default_value_t = 0)]
    net_seed: u64,
    /// Replica count for the replicated variant.
    #[arg(long, default_value_t = 3)]
    replicas: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    let registry = FunctionRegistry::builtin();
    match cli.command {
        Command::Run(args) => cmd_run(&args, &registry, false),
        Command::DumpSchedules(args) => cmd_run(&args, &registry, true),
        Command::Transform(args) => cmd_transform(&args, &registry),
        Command::Verify(args) => cmd_verify(&args, &registry, 20),
        Command::Fuzz(args) => cmd_verify(&args, &registry, 100),
    }
}

fn cmd_run(
    args: &RunArgs,
    registry: &FunctionRegistry,
    schedules_only: bool,
) -> Result<ExitCode, String> {
    let variant = Variant::parse(&args.variant)
        .ok_or_else(|| format!("unknown variant `{}`", args.variant))?;
    let scenario = args.scenario.load()?;
    let deployment =
        corpus::variant_deployment(variant, args.replicas, args.assign_seed, registry)
            .map_err(|e| e.to_string())?;
    let config = RunConfig {
        tick_limit: args.tick_limit,
        net_seed: Some(args.net_seed),
        ..RunConfig::default()
    };
    let out =
        run_deployment(&deployment, &scenario, registry, &config).map_err(|e| e.to_string())?;

    if schedules_only || args.dump_schedules {
        for (channel, schedules) in &out.schedules {
            for s in schedules {
                let plan: Vec<String> = s
                    .deliveries
                    .iter()
                    .map(|(tick, copy)| format!("{tick}@{copy}"))
                    .collect();
                println!(
                    "channel={channel} seq={} enqueued={} deliveries={}",
                    s.seq,
                    s.enqueue_tick,
                    plan.join(",")
                );
            }
        }
        if schedules_only {
            return Ok(ExitCode::SUCCESS);
        }
    }

    let sealed = sealed_outputs(&out).map_err(|e| e.to_string())?;
    for ((client, class), payloads) in &sealed {
        for payload in payloads {
            println!("client={client} class={class} cart={payload}");
        }
    }
    if variant == Variant::Replicated {
        for node in deployment.nodes.keys() {
            if let Some(state) = verify::replica_store_state(&out, &deployment, node) {
                println!("state node={node} store={state}");
            }
        }
    }
    if let Some(path) = &args.trace {
        fs::write(path, out.trace.to_string())
            .map_err(|e| format!("cannot write trace: {e}"))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_transform(args: &TransformArgs, registry: &FunctionRegistry) -> Result<ExitCode, String> {
    let is_graph = args.input.extension().is_some_and(|e| e == "hfs");
    let deployment = if is_graph {
        let input = fs::read_to_string(&args.input)
            .map_err(|e| format!("cannot read `{}`: {e}", args.input.display()))?;
        let graph = parse_dsl(&input).map_err(|e| e.to_string())?;
        let mut d = Deployment::single_node("main", graph);
        d.fds.push(corpus::client_class_fd());
        d
    } else {
        Deployment::load(&args.input).map_err(|e| e.to_string())?
    };
    let script = fs::read_to_string(&args.script)
        .map_err(|e| format!("cannot read `{}`: {e}", args.script.display()))?;
    let (result, applied) = apply_script(&deployment, &script, registry).map_err(|e| {
        format!("{e}")
    })?;
    for rule in &applied {
        eprintln!("applied line {}: {}", rule.line, rule.rule);
    }
    let count = |d: &Deployment| -> (usize, usize) {
        (
            d.nodes.values().map(|g| g.node_count()).sum(),
            d.nodes.values().map(|g| g.edges.len()).sum(),
        )
    };
    let (n0, e0) = count(&deployment);
    let (n1, e1) = count(&result);
    eprintln!(
        "diff: nodes {}->{} operators {n0}->{n1} edges {e0}->{e1} channels {}->{}",
        deployment.nodes.len(),
        result.nodes.len(),
        deployment.channels.len(),
        result.channels.len()
    );
    let rendered = if result.nodes.len() == 1 && result.output_channels().len() == result.channels.len()
    {
        // A still-single-node artifact with only terminal channels prints
        // as plain DSL.
        serialize_graph(result.nodes.values().next().unwrap())
    } else {
        result.to_toml()
    };
    match &args.output {
        Some(path) => fs::write(path, rendered)
            .map_err(|e| format!("cannot write `{}`: {e}", path.display()))?,
        None => print!("{rendered}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    args: &VerifyArgs,
    registry: &FunctionRegistry,
    default_seeds: u32,
) -> Result<ExitCode, String> {
    let variants: Vec<Variant> = args
        .variants
        .split(',')
        .map(|name| {
            Variant::parse(name.trim()).ok_or_else(|| format!("unknown variant `{name}`"))
        })
        .collect::<Result<_, _>>()?;
    if variants.is_empty() {
        return Err("no variants given".to_string());
    }
    let scenario = args.scenario.load()?;
    let n_seeds = args.seeds.unwrap_or(default_seeds).max(1);
    let result = verify::verify_variants(
        &variants,
        &scenario,
        args.net_seed,
        n_seeds,
        args.replicas,
        registry,
    )
    .map_err(|e| e.to_string())?;
    match &result.outcome {
        Outcome::Equivalent => {
            println!(
                "equivalent: variants=[{}] seeds={} runs={}",
                result.variants.join(","),
                n_seeds,
                result.runs
            );
            Ok(ExitCode::SUCCESS)
        }
        Outcome::Diverged { variant, witness_seed, detail } => {
            println!("diverged: variant={variant} witness_seed={witness_seed}");
            println!("  {detail}");
            // Reproduce with: run --variant <variant> --net-seed <witness>.
            Ok(ExitCode::from(3))
        }
    }
}
