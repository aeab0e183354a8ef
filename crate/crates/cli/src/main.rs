//! `cevo`: check, deploy and exercise service modules against a persistent
//! registry.
//!
//! Exit status is 0 on success, 1 when a check, verdict or expectation fails
//! and 2 on usage or I/O errors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cevo_core::analyzer::{aggregate, parse_log, PAPER_FIXTURE};
use cevo_core::manager::{finished, Registry, Rejection};
use cevo_core::model::{KeyAllocator, Module};
use cevo_core::runtime::{trace_to_ndjson, SchedulerPolicy, DEFAULT_FUEL};
use cevo_core::scenario::{parse_scenario, run_scenario, ScenarioError};
use cevo_core::syntax::{
    fill_placeholder_keys, observe_module_keys, parse_modules_raw, parse_value, render_module, render_value,
};
use cevo_core::typeck::Diagnostic;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cevo", version, about = "Typed service-contract evolution")]
struct Cli {
    /// Registry state file; created on first write. Without it the registry
    /// starts empty and is discarded on exit.
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    /// Seeded scheduler instead of round robin.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Step budget per run.
    #[arg(long, global = true)]
    fuel: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fixture {
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Typecheck module files as one batch against the registry without deploying.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Print the modules with every `@?` placeholder replaced by a fresh key.
        #[arg(long)]
        assign_keys: bool,
    },
    /// Deploy module files as one batch.
    Deploy {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Remove services by name.
    Undeploy {
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Call Service.function with a literal argument and run to quiescence.
    Call { target: String, arg: String },
    /// Run a scenario script.
    Run { scenario: PathBuf },
    /// Aggregate a deployment log.
    Analyze {
        #[arg(required_unless_present = "fixtures", conflicts_with = "fixtures")]
        log: Option<PathBuf>,
        #[arg(long, value_enum)]
        fixtures: Option<Fixture>,
    },
}

enum Failure {
    /// A check, verdict or expectation failed.
    Failed(String),
    /// Bad arguments or unreadable input.
    Usage(String),
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

struct Session {
    registry: Registry,
    state: Option<PathBuf>,
    policy: SchedulerPolicy,
    fuel: usize,
    format: Format,
}

impl Session {
    fn open(cli: &Cli) -> Result<Session, Failure> {
        let registry = match &cli.state {
            Some(p) if p.exists() => {
                Registry::from_json(&read(p)?).map_err(|e| usage(format!("{}: not a registry: {e}", p.display())))?
            }
            _ => Registry::new(),
        };
        Ok(Session {
            registry,
            state: cli.state.clone(),
            policy: cli.seed.map_or(SchedulerPolicy::RoundRobin, SchedulerPolicy::Seeded),
            fuel: cli.fuel.unwrap_or(DEFAULT_FUEL),
            format: cli.format,
        })
    }

    fn save(&self) -> Outcome {
        match &self.state {
            Some(p) => fs::write(p, self.registry.to_json()).map_err(|e| usage(format!("{}: {e}", p.display()))),
            None => Ok(()),
        }
    }

    /// Parses every file, then fills placeholders with keys unused by the
    /// files and the registry.
    fn load_modules(&self, files: &[PathBuf]) -> Result<Vec<Module>, Failure> {
        let mut modules = Vec::new();
        for f in files {
            let parsed = parse_modules_raw(&read(f)?).map_err(|e| Failure::Failed(format!("{}:{e}", f.display())))?;
            modules.extend(parsed);
        }
        let mut alloc = KeyAllocator::new();
        for s in &self.registry.system.services {
            observe_module_keys(&s.module, &mut alloc);
        }
        modules.iter().for_each(|m| observe_module_keys(m, &mut alloc));
        modules.iter_mut().for_each(|m| fill_placeholder_keys(m, &mut alloc));
        Ok(modules)
    }

    fn report_rejection(&self, what: &str, r: &Rejection) -> Failure {
        if self.format == Format::Machine {
            let findings = match r {
                Rejection::Type(d) => d.0.iter().map(diagnostic_json).collect(),
                _ => r.lines().into_iter().map(|l| json!({ "message": l })).collect::<Vec<_>>(),
            };
            println!("{}", json!({ "verdict": "rejected", "operation": what, "findings": findings }));
        }
        Failure::Failed(format!("{what} rejected:\n  {}", r.lines().join("\n  ")))
    }
}

fn diagnostic_json(d: &Diagnostic) -> serde_json::Value {
    json!({
        "service": d.service,
        "key": d.key.as_ref().map(|k| k.to_string()),
        "code": d.error.code(),
        "message": d.error.to_string(),
    })
}

fn check(s: &mut Session, files: &[PathBuf], assign_keys: bool) -> Outcome {
    let modules = s.load_modules(files)?;
    if assign_keys {
        for m in &modules {
            print!("{}", render_module(m));
        }
    }
    let mut scratch = s.registry.clone();
    match scratch.preflight_deploy(&modules) {
        Ok(_) => {
            match s.format {
                Format::Text if !assign_keys => println!("ok: {} module(s)", modules.len()),
                Format::Machine => println!("{}", json!({ "verdict": "ok", "modules": modules.len() })),
                _ => {}
            }
            Ok(())
        }
        Err(r) => Err(s.report_rejection("check", &r)),
    }
}

fn deploy(s: &mut Session, files: &[PathBuf]) -> Outcome {
    let modules = s.load_modules(files)?;
    let outcome = s.registry.preflight_deploy(&modules);
    s.save()?;
    match outcome {
        Ok(a) => {
            match s.format {
                Format::Text => println!("deploy: {a}"),
                Format::Machine => {
                    let labels: Vec<String> = a.labels.iter().map(|l| l.to_string()).collect();
                    println!("{}", json!({ "verdict": "accepted", "labels": labels, "keys": a.signature.len() }))
                }
            }
            Ok(())
        }
        Err(r) => Err(s.report_rejection("deploy", &r)),
    }
}

fn undeploy(s: &mut Session, names: &[String]) -> Outcome {
    let set: BTreeSet<String> = names.iter().cloned().collect();
    let outcome = s.registry.preflight_undeploy(&set);
    s.save()?;
    match outcome {
        Ok(()) => {
            match s.format {
                Format::Text => println!("undeploy: accepted"),
                Format::Machine => println!("{}", json!({ "verdict": "accepted" })),
            }
            Ok(())
        }
        Err(r) => Err(s.report_rejection("undeploy", &r)),
    }
}

fn call(s: &mut Session, target: &str, arg: &str) -> Outcome {
    let (service, function) = target.split_once('.').ok_or_else(|| usage("expected Service.function"))?;
    let arg = parse_value(arg).map_err(|e| usage(format!("argument: {e}")))?;
    let out = s
        .registry
        .call_endpoint(service, function, &arg, s.policy, s.fuel)
        .map_err(|e| Failure::Failed(e.to_string()))?;
    s.save()?;
    let shown = out.value.as_ref().map(render_value);
    match s.format {
        Format::Text => {
            println!("{}", shown.as_deref().unwrap_or("<unfinished>"));
            println!(
                "{} steps, {} rejected, {} proxies generated",
                out.report.trace.len(),
                out.report.count("Rejected"),
                out.report.count("ProxyGenerated")
            );
        }
        Format::Machine => {
            print!("{}", trace_to_ndjson(&out.report.trace));
            println!("{}", json!({ "result": shown, "status": format!("{:?}", out.report.status) }));
        }
    }
    if finished(&out) {
        Ok(())
    } else {
        Err(Failure::Failed(format!("run ended with {:?}", out.report.status)))
    }
}

fn run(s: &mut Session, scenario: &Path) -> Outcome {
    let cmds = parse_scenario(&read(scenario)?).map_err(|e| Failure::Failed(format!("{}: {e}", scenario.display())))?;
    let dir = scenario.parent().map(Path::to_path_buf).unwrap_or_default();
    let load = |f: &str| fs::read_to_string(dir.join(f)).map_err(|e| e.to_string());
    let seed = match s.policy {
        SchedulerPolicy::Seeded(n) => Some(n),
        SchedulerPolicy::RoundRobin => None,
    };
    let report = run_scenario(&cmds, &mut s.registry, load, seed, Some(s.fuel)).map_err(|e| match e {
        ScenarioError::Syntax { .. } => Failure::Failed(e.to_string()),
        ScenarioError::Load { .. } => usage(e),
    })?;
    s.save()?;
    match s.format {
        Format::Text => report.log.iter().for_each(|l| println!("{l}")),
        Format::Machine => print!("{}", trace_to_ndjson(&report.trace)),
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Failed(report.failures.join("\n")))
    }
}

fn analyze(s: &Session, log: Option<&Path>, fixtures: Option<Fixture>) -> Outcome {
    let text = match (log, fixtures) {
        (_, Some(Fixture::Paper)) => PAPER_FIXTURE.to_string(),
        (Some(p), None) => read(p)?,
        (None, None) => return Err(usage("give a log file or --fixtures paper")),
    };
    let lines = parse_log(&text).map_err(|e| Failure::Failed(e.to_string()))?;
    let report = aggregate(&lines);
    match s.format {
        Format::Text => print!("{}", report.render_text()),
        Format::Machine => print!("{}", report.render_machine()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = Session::open(&cli).and_then(|mut s| match &cli.command {
        Command::Check { files, assign_keys } => check(&mut s, files, *assign_keys),
        Command::Deploy { files } => deploy(&mut s, files),
        Command::Undeploy { names } => undeploy(&mut s, names),
        Command::Call { target, arg } => call(&mut s, target, arg),
        Command::Run { scenario } => run(&mut s, scenario),
        Command::Analyze { log, fixtures } => analyze(&s, log.as_deref(), *fixtures),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
