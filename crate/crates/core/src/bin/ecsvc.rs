use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ecsvc::bench::{attack, demo_text, run_scenario, run_sweep, status_exit_code, write_rows, BenchError, SweepSpec};
use ecsvc::sim::{AttackKind, RunStatus, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "ecsvc",
    version,
    about = "Key exchange simulator for CAN-FD vehicle networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write a single result row.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the event trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep one parameter over a list of values.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Attack a scenario: replay, tamper or curious-sa.
    Attack {
        #[arg(long)]
        kind: AttackKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = attack::DEFAULT_TRIALS)]
        trials: usize,
        /// curious-sa: write the scanned SA view as hex.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Print the worked toy-group example.
    Demo {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn report_status(status: &str) -> i32 {
    let code = RunStatus::ALL
        .into_iter()
        .find(|s| s.label() == status)
        .map_or(3, status_exit_code);
    if code != 0 {
        eprintln!("status: {status}");
    }
    code
}

fn run(cmd: Cmd) -> Result<i32, BenchError> {
    match cmd {
        Cmd::Run { config, out, trace } => {
            let cfg = ScenarioConfig::load(&config)?;
            let res = run_scenario(&cfg)?;
            write_rows(std::slice::from_ref(&res.row), create(&out)?)?;
            if let (Some(path), Some(report)) = (trace, &res.report) {
                report.write_trace_csv(create(&path)?)?;
            }
            Ok(report_status(&res.row.status))
        }
        Cmd::Sweep { spec, out, jobs } => {
            let spec = SweepSpec::load(&spec)?;
            let rows = run_sweep(&spec, jobs)?;
            write_rows(&rows, create(&out)?)?;
            Ok(rows.iter().map(|r| report_status(&r.status)).max().unwrap_or(0))
        }
        Cmd::Attack {
            kind,
            config,
            out,
            trials,
            dump,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let res = attack::run_attack(kind, &cfg, trials)?;
            write_rows(std::slice::from_ref(&res.row), create(&out)?)?;
            if let (Some(path), Some(scan)) = (dump, &res.scan) {
                let mut w = create(&path)?;
                for chunk in scan.haystack.chunks(32) {
                    writeln!(w, "{}", hex::encode(chunk))?;
                }
                w.flush()?;
            }
            match &res.scan {
                Some(scan) => {
                    for hit in &scan.hits {
                        eprintln!("found: {hit}");
                    }
                    println!(
                        "{}: {} needles, {} hits, {} pairs enumerated",
                        res.row.status,
                        scan.needles,
                        scan.hits.len(),
                        scan.oracle.len()
                    );
                }
                None => println!("{}: {}/{} rejected", res.row.status, res.row.rejected, res.row.trials),
            }
            Ok(report_status(&res.row.status))
        }
        Cmd::Demo { out } => {
            let text = demo_text();
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
