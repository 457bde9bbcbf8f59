//! `guardrail`: lint policy packs, score them, run scenarios, check ledgers
//! and serve the gateway.
//!
//! Exit status: 0 success, 1 a check failed, 2 bad input or usage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use guardrail_core::engine::replay_bytes;
use guardrail_core::ledger::{verify_bytes, Ledger, SIGNING_KEY_ENV};
use guardrail_core::policy::{load_policy, ValidatedPolicy, ValidationReport};
use guardrail_core::rubric::{apply_answers, rubric_report, RubricAnswers};
use guardrail_core::simulator::{run_scenario, Scenario, ScriptedResponder, SimulationRun};
use guardrail_gateway::GatewayConfig;

#[derive(Parser)]
#[command(
    name = "guardrail",
    version,
    about = "Runtime guardrails for agent tool calls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a policy pack.
    Lint {
        policy: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Score every control with the enforceability rubric.
    Rubric {
        policy: PathBuf,
        /// JSON object mapping control ids to rubric answers.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario against a simulated clock and scripted approvers.
    Simulate {
        scenario: PathBuf,
        /// Policy pack to use instead of the one the scenario names.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        /// Write the resulting evidence ledger here.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Inspect an evidence ledger file.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Run the HTTP gateway.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Check hashes, links, sequence numbers and signatures.
    Verify {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Re-decide every recorded request under a policy pack.
    Replay {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// A failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type Outcome = Result<bool, Failure>;

fn signing_key() -> Option<Vec<u8>> {
    std::env::var(SIGNING_KEY_ENV)
        .ok()
        .filter(|k| !k.is_empty())
        .map(String::into_bytes)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn describe(report: &ValidationReport) -> String {
    let mut lines: Vec<String> = report
        .parse_errors
        .iter()
        .map(|e| format!("parse error: {e}"))
        .collect();
    for v in &report.violations {
        let code = serde_json::to_value(v.code)
            .ok()
            .and_then(|c| c.as_str().map(String::from))
            .unwrap_or_default();
        lines.push(format!("{code} [{}]: {}", v.tuple_id, v.message));
    }
    lines.join("\n")
}

fn load(path: &Path) -> Result<ValidatedPolicy, Failure> {
    load_policy(&read(path)?).map_err(|r| Failure {
        code: 1,
        message: format!("{} does not validate:\n{}", path.display(), describe(&r)),
    })
}

fn lint(policy: &Path, json: bool) -> Outcome {
    let result = load_policy(&read(policy)?);
    match (&result, json) {
        (Ok(p), true) => {
            print_json(&serde_json::json!({ "valid": true, "pack_hash": p.pack_hash() }))
        }
        (Err(r), true) => print_json(&serde_json::json!({ "valid": false, "report": r })),
        (Ok(p), false) => println!(
            "ok: {} controls, pack {}",
            p.set().tuples.len(),
            p.pack_hash()
        ),
        (Err(r), false) => println!("{}", describe(r)),
    }
    Ok(result.is_ok())
}

fn rubric(policy: &Path, answers: Option<&Path>, json: bool) -> Outcome {
    let mut set = load(policy)?.set().clone();
    if let Some(path) = answers {
        let parsed: BTreeMap<String, RubricAnswers> = serde_json::from_str(&read(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        apply_answers(&mut set, &parsed).map_err(usage)?;
    }
    let report = rubric_report(&set);
    if json {
        print_json(&report);
    } else {
        print!("{}", report.render_table());
    }
    Ok(true)
}

fn simulate(
    scenario_path: &Path,
    policy: Option<&Path>,
    json: bool,
    ledger_out: Option<&Path>,
) -> Outcome {
    let scenario = Scenario::load(scenario_path).map_err(|e| usage(e.to_string()))?;
    let policy_path = match policy {
        Some(p) => p.to_path_buf(),
        None => scenario
            .policy_path(scenario_path)
            .map_err(|e| usage(e.to_string()))?,
    };
    let policy = load(&policy_path)?;
    let run: SimulationRun = run_scenario(
        &scenario,
        policy,
        Ledger::in_memory(signing_key()),
        &mut ScriptedResponder,
    )
    .map_err(|e| usage(e.to_string()))?;
    if let Some(out) = ledger_out {
        std::fs::write(out, &run.ledger_jsonl)
            .map_err(|e| usage(format!("cannot write {}: {e}", out.display())))?;
    }
    if json {
        print_json(&run.report);
    } else {
        print_simulation(&run);
    }
    Ok(run.report.all_matched)
}

fn print_simulation(run: &SimulationRun) {
    let r = &run.report;
    println!(
        "scenario {} (pack {})",
        r.scenario,
        &r.pack_hash[..12.min(r.pack_hash.len())]
    );
    for s in &r.steps {
        let actual = s.actual_decision.map_or("rejected", |d| d.as_str());
        let mark = if s.matched { "ok  " } else { "MISS" };
        println!(
            "{mark} {:>3} {:<32} expected {:<9} got {:<9} {:<9} {}",
            s.index,
            s.request_id,
            s.expected_decision.as_str(),
            actual,
            format!("{:?}", s.actual_outcome).to_lowercase(),
            s.reason
        );
        for note in &s.notes {
            println!("         {note}");
        }
    }
    let m = &r.metrics;
    println!(
        "precision {} recall {} false_block_rate {} escalation_burden {} task_completion {}",
        m.precision.value,
        m.recall.value,
        m.false_block_rate.value,
        m.escalation_burden.value,
        m.task_completion.value
    );
    println!(
        "latency p95 {}us max {}us over {} decisions; ledger head {}",
        run.latency.p95_micros, run.latency.max_micros, run.latency.samples, r.ledger_head_hash
    );
}

fn verify(file: &Path, json: bool) -> Outcome {
    let data =
        std::fs::read(file).map_err(|e| usage(format!("cannot read {}: {e}", file.display())))?;
    let (report, _) = verify_bytes(&data, signing_key().as_deref());
    if json {
        print_json(&report);
    } else if report.is_clean() {
        println!(
            "clean: {} records, {} signatures verified, {} unchecked",
            report.records, report.signatures_verified, report.signatures_unchecked
        );
    } else {
        match report.first_broken {
            Some(seq) => println!("BROKEN: first broken seq {seq}"),
            None => println!("BROKEN"),
        }
        for p in &report.problems {
            println!("  line {} seq {}: {:?} {}", p.line, p.seq, p.kind, p.detail);
        }
        for g in &report.gaps {
            println!("  gap: {g:?}");
        }
        for s in &report.signature_failures {
            println!("  seq {}: signature {:?}", s.seq, s.problem);
        }
    }
    Ok(report.is_clean())
}

fn replay(file: &Path, policy: &Path, json: bool) -> Outcome {
    let data =
        std::fs::read(file).map_err(|e| usage(format!("cannot read {}: {e}", file.display())))?;
    let policy = load(policy)?;
    let report = replay_bytes(&data, signing_key().as_deref(), &policy).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    if json {
        print_json(&report);
    } else {
        if !report.same_policy {
            println!(
                "note: replaying under pack {} which differs from the recorded pack",
                report.pack_hash
            );
        }
        for row in report.mismatches() {
            println!(
                "MISMATCH seq {} {}: recorded {} replayed {}",
                row.seq,
                row.request_id,
                row.recorded.as_str(),
                row.replayed.as_str()
            );
        }
        println!(
            "{}/{} decisions reproduced",
            report.matched, report.decisions
        );
    }
    Ok(report.all_match())
}

fn serve(config: &Path) -> Outcome {
    let cfg = GatewayConfig::load(config).map_err(|e| usage(e.to_string()))?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .try_init();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| usage(e.to_string()))?;
    runtime
        .block_on(guardrail_gateway::serve(
            cfg,
            guardrail_gateway::shutdown_signal(),
        ))
        .map_err(|e| usage(e.to_string()))?;
    Ok(true)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Lint { policy, json } => lint(&policy, json),
        Command::Rubric {
            policy,
            answers,
            json,
        } => rubric(&policy, answers.as_deref(), json),
        Command::Simulate {
            scenario,
            policy,
            json,
            ledger,
        } => simulate(&scenario, policy.as_deref(), json, ledger.as_deref()),
        Command::Ledger {
            command: LedgerCommand::Verify { file, json },
        } => verify(&file, json),
        Command::Ledger {
            command: LedgerCommand::Replay { file, policy, json },
        } => replay(&file, &policy, json),
        Command::Serve { config } => serve(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("guardrail: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
