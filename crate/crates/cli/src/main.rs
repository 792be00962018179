mod eval;
mod fixtures;
mod gradcheck;
mod group;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corp::CorpError;

#[derive(Parser)]
#[command(
    name = "corp",
    version,
    about = "Co-representation purification for co-salient object detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the purification pipeline over one group
    Run(run::RunArgs),
    /// Score predicted maps against ground truth
    Eval(eval::EvalArgs),
    /// Generate a synthetic group from a JSON spec
    Fixtures(fixtures::FixturesArgs),
    /// Check the IoU loss gradient against finite differences
    Gradcheck(gradcheck::GradcheckArgs),
}

#[derive(Debug)]
pub enum Failure {
    Corp(CorpError),
    /// A numerical self-check did not hold.
    Check(String),
}

impl From<CorpError> for Failure {
    fn from(e: CorpError) -> Self {
        Failure::Corp(e)
    }
}

impl Failure {
    fn category(&self) -> &'static str {
        match self {
            Failure::Corp(e) => e.category(),
            Failure::Check(_) => "check",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category() {
            "argument" => 2,
            "format" | "range" => 3,
            "shape" => 4,
            "check" => 5,
            _ => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Corp(e) => e.to_string(),
            Failure::Check(m) => m.clone(),
        }
    }
}

fn report(category: &str, message: &str) {
    // Keep it to one line whatever the source said.
    let line = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error:{category}: {line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            report("argument", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run::run(&a),
        Command::Eval(a) => eval::eval(&a),
        Command::Fixtures(a) => fixtures::fixtures(&a),
        Command::Gradcheck(a) => gradcheck::gradcheck(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report(f.category(), &f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
