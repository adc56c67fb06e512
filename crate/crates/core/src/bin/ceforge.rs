use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ceforge::approx::{encode_real, gen_scenario, CERealApprox, GenParams, Scenario};
use ceforge::audit::{audit, AuditReport};
use ceforge::engine::{Engine, EngineError};
use ceforge::machines::{machine_from_requests, MachineError, RequestSet};
use ceforge::trace::{EngineKind, Trace};

#[derive(Parser)]
#[command(
    name = "ceforge",
    version,
    about = "Run, trace and audit marker constructions over c.e. sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an engine on a scenario and audit the resulting trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the stage count stored in the scenario.
        #[arg(long)]
        stages: Option<u64>,
        #[arg(long, default_value = "single")]
        engine: EngineKind,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Generate a random scenario.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        stages: u64,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit an existing trace against its scenario.
    Audit {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Build the Kraft-Chaitin machine for a request set (`target<TAB>length`
    /// per line) and print `codeword<TAB>output<TAB>stage` per entry.
    Kc {
        /// Request file, or `-` for stdin.
        #[arg(default_value = "-")]
        requests: PathBuf,
    },
    /// Encode a left-c.e. real (one bit-vector per stage) as a c.e. set and
    /// print `element<TAB>stage` per enumeration.
    EncodeReal {
        #[arg(default_value = "-")]
        approximations: PathBuf,
    },
}

enum Failure {
    /// Malformed input or a violated input invariant.
    Input(String),
    /// A lemma bound or audit check failed.
    Violation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Violation(_) => 3,
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| Failure::Input(format!("stdin: {e}")))?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::from_json(&read_input(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::Machine { .. } => Failure::Violation(e.to_string()),
        other => Failure::Input(other.to_string()),
    }
}

fn finish_report(report: &AuditReport, report_out: Option<&Path>) -> Result<(), Failure> {
    if let Some(p) = report_out {
        write_output(p, &report.to_json())?;
    }
    let failed: Vec<_> = report.failed().collect();
    println!(
        "{} engine, {} stages: {} checks, {} failed",
        report.engine,
        report.stages,
        report.checks.len(),
        failed.len()
    );
    if failed.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = failed
        .iter()
        .map(|c| format!("{}: {}", c.name, c.witness.as_deref().unwrap_or("failed")))
        .collect();
    Err(Failure::Violation(lines.join("\n")))
}

fn kc(requests: &Path) -> Result<(), Failure> {
    let text = read_input(requests)?;
    let set = RequestSet::parse(&text).map_err(|e| match e {
        MachineError::WeightOverflow { .. } => Failure::Input(format!("Kraft inequality: {e}")),
        other => Failure::Input(other.to_string()),
    })?;
    let m = machine_from_requests(&set).map_err(|e| Failure::Violation(e.to_string()))?;
    print!("{}", m.dump());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            stages,
            engine,
            trace_out,
            report_out,
        } => {
            let sc = load_scenario(&scenario)?;
            let stages = stages.unwrap_or(sc.stages);
            let trace = Engine::run(engine, &sc, stages).map_err(engine_failure)?;
            if let Some(p) = &trace_out {
                write_output(p, &trace.to_jsonl())?;
            }
            let report = audit(&sc, &trace);
            finish_report(&report, report_out.as_deref())
        }
        Command::Gen { seed, stages, out } => {
            let json = gen_scenario(seed, &GenParams::for_stages(stages)).to_json();
            match out {
                Some(p) => write_output(&p, &json),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::Audit {
            scenario,
            trace,
            report_out,
        } => {
            let sc = load_scenario(&scenario)?;
            let tr = Trace::from_jsonl(&read_input(&trace)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", trace.display())))?;
            finish_report(&audit(&sc, &tr), report_out.as_deref())
        }
        Command::Kc { requests } => kc(&requests),
        Command::EncodeReal { approximations } => {
            let real = CERealApprox::parse(&read_input(&approximations)?)
                .map_err(|e| Failure::Input(format!("real approximation: {e}")))?;
            let set = encode_real(&real);
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for (element, stage) in set.schedule() {
                let _ = writeln!(out, "{element}\t{stage}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CEFORGE_LOG")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Violation(msg)) = &f;
            eprintln!("ceforge: {msg}");
            ExitCode::from(f.code())
        }
    }
}
