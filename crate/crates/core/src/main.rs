use std::path::PathBuf;
use std::process::ExitCode;

use cagg::cli::{self, Command};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cagg", version, about = "Congested aggregation lab")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    Pme(RunArgs),
    Jko(RunArgs),
    Heleshaw(RunArgs),
    Msweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated exponents; overrides `solver.m_list`.
        #[arg(long, value_delimiter = ',')]
        m: Option<Vec<f64>>,
    },
    Longtime(RunArgs),
    Diag(RunArgs),
    /// Re-checks a run directory; exit 3 on any FAIL.
    Verify { dir: PathBuf },
    #[command(name = "dump_schema", alias = "dump-schema")]
    DumpSchema,
}

fn run(cmd: Command, args: RunArgs, m: Option<Vec<f64>>) -> ExitCode {
    let result = cli::check_threads_env()
        .and_then(|_| cli::load_config(&args.config))
        .and_then(|loaded| cli::run(cmd, &loaded, args.out.as_deref(), m));
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cagg {}: {e}", cmd.name());
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match args.cmd {
        Cmd::Pme(a) => run(Command::Pme, a, None),
        Cmd::Jko(a) => run(Command::Jko, a, None),
        Cmd::Heleshaw(a) => run(Command::Heleshaw, a, None),
        Cmd::Msweep { run: a, m } => run(Command::Msweep, a, m),
        Cmd::Longtime(a) => run(Command::Longtime, a, None),
        Cmd::Diag(a) => run(Command::Diag, a, None),
        Cmd::Verify { dir } => match cli::verify(&dir) {
            Ok(rep) => {
                for line in rep.lines() {
                    println!("{line}");
                }
                if rep.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(3)
                }
            }
            Err(e) => {
                eprintln!("cagg verify: {e}");
                ExitCode::from(cli::exit_code(&e) as u8)
            }
        },
        Cmd::DumpSchema => {
            print!("{}", cli::schema());
            ExitCode::SUCCESS
        }
    }
}
