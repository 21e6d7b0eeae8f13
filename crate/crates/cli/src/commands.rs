//! Subcommand implementations.

use serde::Serialize;
use serde_json::{json, Value};

use eti_core::chain::{analyze, ChainAnalysis, ChainSpec};
use eti_core::design::{self, DesignSolution, RegenerativeDesign};
use eti_core::io;
use eti_core::online::{Eti2Config, EtiConfig};
use eti_core::simulator::{coop_comparison, CoopRow, Design, RunConfig, Simulation, SimulationError};

use crate::config::{
    self, adaptive_settings, config_err, load_spec, parse_design, probability, runtime, state_index, Failure,
    Settings,
};
use crate::output::{self, Provenance};
use crate::{Algo, Cli, Command, CoopArgs, DesignArgs, McArgs, OnlineArgs, SimulateArgs, SpecArg};

const DEFAULT_N: u64 = 100_000;
const DEFAULT_REPS: usize = 2000;
const DEFAULT_COOP_S: [usize; 3] = [8, 16, 32];

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let settings = config::resolve(cli)?;
    match &cli.command {
        Command::Analyze(args) => cmd_analyze(args, &settings),
        Command::Design(args) => cmd_design(args, &settings),
        Command::Simulate(args) => cmd_simulate(args, &settings),
        Command::Mc(args) => cmd_mc(args, &settings),
        Command::Online(args) => cmd_online(args, &settings),
        Command::Coop(args) => cmd_coop(args, &settings),
    }
}

fn provenance(command: &'static str, effective: &Value, settings: &Settings) -> Provenance {
    Provenance {
        command,
        config_hash: config::config_hash(effective),
        seed: settings.seed,
    }
}

fn spec_value(spec: &ChainSpec) -> Value {
    serde_json::from_str(&io::spec_to_json(spec)).expect("spec JSON parses")
}

fn load(flag: &SpecArg, settings: &Settings) -> Result<(ChainSpec, ChainAnalysis), Failure> {
    let spec = load_spec(&flag.spec, settings)?;
    let analysis = analyze(&spec).map_err(runtime)?;
    Ok((spec, analysis))
}

fn simulation_failure(e: SimulationError) -> Failure {
    match e {
        SimulationError::InvalidConfig(_) | SimulationError::Policy(_) => config_err(e),
        other => runtime(other),
    }
}

fn cmd_analyze(args: &SpecArg, settings: &Settings) -> Result<(), Failure> {
    let (spec, analysis) = load(args, settings)?;
    let prov = provenance("analyze", &json!({ "command": "analyze", "spec": spec_value(&spec) }), settings);
    output::emit_json(settings, &prov, "analysis.json", &analysis)
}

#[derive(Serialize)]
struct DesignOutput {
    markov: DesignSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    regenerative: Option<RegenerativeDesign>,
    /// `REGULARIZED` when zero state variances were floored before solving.
    flags: Vec<&'static str>,
}

fn cmd_design(args: &DesignArgs, settings: &Settings) -> Result<(), Failure> {
    let (spec, analysis) = load(&args.spec, settings)?;
    let xr = args
        .regenerative
        .map(|label| state_index(label, spec.n_states(), "--regenerative"))
        .transpose()?;
    let markov = design::optimal_design(&spec, &analysis).map_err(runtime)?;
    let regenerative = xr
        .map(|x| design::optimal_regenerative(&analysis, x))
        .transpose()
        .map_err(runtime)?;
    let flags = if markov.regularized { vec!["REGULARIZED"] } else { Vec::new() };
    let effective = json!({ "command": "design", "spec": spec_value(&spec), "regenerative": xr });
    let prov = provenance("design", &effective, settings);
    output::emit_json(
        settings,
        &prov,
        "design.json",
        &DesignOutput {
            markov,
            regenerative,
            flags,
        },
    )
}

/// Resolved spec, design and run settings shared by `simulate` and `mc`.
struct Prepared {
    spec: ChainSpec,
    design: Design,
    policy_text: String,
    run: RunConfig,
}

fn prepare(args: &SimulateArgs, settings: &Settings, default_checkpoint: u64) -> Result<Prepared, Failure> {
    let file = &settings.file;
    let (spec, analysis) = load(&args.spec, settings)?;
    let (beta, resolve) = adaptive_settings(&args.adaptive, settings)?;
    let policy_text = args
        .policy
        .clone()
        .or_else(|| file.policy.clone())
        .unwrap_or_else(|| "optimal".into());
    let design = parse_design(&policy_text, &spec, &analysis, beta, resolve)?;
    let n = args.n.or(file.n).unwrap_or(DEFAULT_N);
    let x0 = match args.x0.or(file.x0) {
        Some(label) => state_index(label, spec.n_states(), "--x0")?,
        None => 0,
    };
    let checkpoint_every = args.checkpoint.or(file.checkpoint).unwrap_or(default_checkpoint);
    let run = RunConfig {
        n,
        x0,
        checkpoint_every,
        stop_after_cycles: None,
    };
    Ok(Prepared {
        spec,
        design,
        policy_text,
        run,
    })
}

fn run_effective(command: &str, p: &Prepared, reps: Option<usize>) -> Value {
    json!({
        "command": command,
        "spec": spec_value(&p.spec),
        "policy": p.policy_text,
        "design": p.design,
        "run": p.run,
        "reps": reps,
    })
}

/// Runs one trajectory and writes the result JSON and checkpoint CSV.
fn single_run(
    command: &'static str,
    prepared: Prepared,
    settings: &Settings,
) -> Result<(), Failure> {
    let prov = provenance(command, &run_effective(command, &prepared, None), settings);
    let sim = Simulation::new(prepared.spec, prepared.design, prepared.run).map_err(simulation_failure)?;
    let result = sim.run(settings.seed).map_err(simulation_failure)?;
    let csv = output::checkpoints_csv(&prov, &result.checkpoints)?;
    output::emit_csv(settings, &format!("{command}_checkpoints.csv"), &csv)?;
    output::emit_json(settings, &prov, &format!("{command}.json"), &result)
}

fn cmd_simulate(args: &SimulateArgs, settings: &Settings) -> Result<(), Failure> {
    let n = args.n.or(settings.file.n).unwrap_or(DEFAULT_N);
    let prepared = prepare(args, settings, (n / 100).max(1))?;
    single_run("simulate", prepared, settings)
}

fn cmd_mc(args: &McArgs, settings: &Settings) -> Result<(), Failure> {
    let prepared = prepare(&args.run, settings, 0)?;
    let reps = args.reps.or(settings.file.reps).unwrap_or(DEFAULT_REPS);
    if reps < 2 {
        return Err(config_err("--reps must be at least 2"));
    }
    let prov = provenance("mc", &run_effective("mc", &prepared, Some(reps)), settings);
    let sim = Simulation::new(prepared.spec, prepared.design, prepared.run).map_err(simulation_failure)?;
    let summary = sim
        .monte_carlo(reps, settings.seed, settings.threads)
        .map_err(simulation_failure)?;
    output::emit_json(settings, &prov, "mc.json", &summary)
}

fn cmd_online(args: &OnlineArgs, settings: &Settings) -> Result<(), Failure> {
    let file = &settings.file;
    let (spec, _) = load(&args.spec, settings)?;
    let (beta, resolve) = adaptive_settings(&args.adaptive, settings)?;
    let (design, policy_text) = match args.algo {
        Algo::Eti => (Design::OnlineEti(EtiConfig { beta, resolve }), "eti".to_string()),
        Algo::Eti2 => {
            let label = args.xr.or(file.xr).unwrap_or(1);
            let xr = state_index(label, spec.n_states(), "--xr")?;
            (Design::OnlineEti2(Eti2Config { xr, beta }), format!("eti2:{label}"))
        }
    };
    let n = args.n.or(file.n).unwrap_or(DEFAULT_N);
    let run = RunConfig {
        n,
        x0: design.forced_start().unwrap_or(0),
        checkpoint_every: args.checkpoint.or(file.checkpoint).unwrap_or((n / 100).max(1)),
        stop_after_cycles: None,
    };
    single_run(
        "online",
        Prepared {
            spec,
            design,
            policy_text,
            run,
        },
        settings,
    )
}

#[derive(Serialize)]
struct CoopOutput {
    q1: f64,
    q2: f64,
    n: u64,
    reps: usize,
    rows: Vec<CoopRow>,
}

fn coop_csv(prov: &Provenance, rows: &[CoopRow]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "s",
        "designed_scaled_var",
        "isolation_scaled_var",
        "ratio",
        "optimal_regularized",
        "config_hash",
        "seed",
    ])
    .map_err(runtime)?;
    for r in rows {
        w.write_record([
            r.s.to_string(),
            r.designed.scaled_var.to_string(),
            r.isolation.scaled_var.to_string(),
            r.ratio.to_string(),
            r.optimal_regularized.to_string(),
            prov.config_hash.clone(),
            prov.seed.to_string(),
        ])
        .map_err(runtime)?;
    }
    w.into_inner().map_err(|e| runtime(anyhow::anyhow!("{e}")))
}

fn cmd_coop(args: &CoopArgs, settings: &Settings) -> Result<(), Failure> {
    let file = &settings.file;
    let s = if args.s.is_empty() {
        file.s.clone().unwrap_or_else(|| DEFAULT_COOP_S.to_vec())
    } else {
        args.s.clone()
    };
    if let Some(bad) = s.iter().find(|&&v| v < 2) {
        return Err(config_err(format!("--s must be at least 2, got {bad}")));
    }
    let q1 = probability(args.q1.or(file.q1).unwrap_or(0.5), "--q1")?;
    let q2 = probability(args.q2.or(file.q2).unwrap_or(0.5), "--q2")?;
    let n = args.n.or(file.n).unwrap_or(DEFAULT_N);
    let reps = args.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    if reps < 2 {
        return Err(config_err("--reps must be at least 2"));
    }
    let effective = json!({ "command": "coop", "s": s, "q1": q1, "q2": q2, "n": n, "reps": reps });
    let prov = provenance("coop", &effective, settings);
    let rows = s
        .iter()
        .map(|&len| coop_comparison(len, q1, q2, n, reps, settings.seed, settings.threads))
        .collect::<Result<Vec<_>, _>>()
        .map_err(simulation_failure)?;
    output::emit_csv(settings, "coop.csv", &coop_csv(&prov, &rows)?)?;
    output::emit_json(settings, &prov, "coop.json", &CoopOutput { q1, q2, n, reps, rows })
}
