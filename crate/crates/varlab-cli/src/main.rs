//! `varlab`: reproducible runs of the grid experiments.
//!
//! Exit codes: 0 when every check of the run passed, 1 when one failed,
//! 2 on invalid input.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "varlab", version, about = "Variable-exponent inequality experiments on grid domains")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Whitney squares, tree covering and John constants.
    Whitney(Flags),
    /// Every regularity condition of the exponent.
    CheckExponent(Flags),
    /// Weighted Sobolev-Poincare inequality on the whole domain.
    VerifySp(Flags),
    /// Sobolev inequality for compactly supported functions.
    VerifySobolev(Flags),
    /// Decomposition of mean-zero fields along the tree.
    Decompose(Flags),
    /// Norm estimates of the tree operators.
    Operators(Flags),
    /// Blow-up tables of the ball family.
    Counterexample(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Flat key = value file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// unit-square, l-shape, rect:W:H or mask:PATH.
    #[arg(long)]
    domain: Option<String>,
    /// Grid levels: 5, 4,5,6 or 4..6.
    #[arg(long = "L")]
    levels: Option<String>,
    /// constant:P, step:LO:HI, radial-lh:LO:HI, linear:LO:HI,
    /// counterexample-boundary:P0:KMAX or counterexample-interior:P0:KMAX.
    #[arg(long)]
    exponent: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Ball factor of the boundary condition; measured when omitted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// standard, standard+family, compact:N, fields:N, random:N or family.
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    kmax: Option<u32>,
    /// boundary, interior or korn.
    #[arg(long)]
    mode: Option<String>,
    /// Base exponent of the ball family.
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the timestamp line out of the reports.
    #[arg(long)]
    no_timestamp: bool,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides, config::ConfigError> {
        let mut o = match &self.config {
            Some(path) => Overrides::read(path)?,
            None => Overrides::default(),
        };
        let mut cli = Overrides::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                cli.set(k, v);
            }
        };
        put("domain", self.domain.clone());
        put("L", self.levels.clone());
        put("exponent", self.exponent.clone());
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("corpus", self.corpus.clone());
        put("kmax", self.kmax.map(|v| v.to_string()));
        put("mode", self.mode.clone());
        put("p0", self.p0.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|v| v.display().to_string()));
        if self.no_timestamp {
            put("no_timestamp", Some("true".into()));
        }
        o.extend(cli);
        Ok(o)
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
    let (command, flags) = match cli.command {
        Sub::Whitney(f) => (Command::Whitney, f),
        Sub::CheckExponent(f) => (Command::CheckExponent, f),
        Sub::VerifySp(f) => (Command::VerifySp, f),
        Sub::VerifySobolev(f) => (Command::VerifySobolev, f),
        Sub::Decompose(f) => (Command::Decompose, f),
        Sub::Operators(f) => (Command::Operators, f),
        Sub::Counterexample(f) => (Command::Counterexample, f),
    };
    let cfg = match flags.overrides().and_then(|o| RunConfig::resolve(command, &o)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run::run(&cfg) {
        Ok(out) => {
            for line in &out.lines {
                println!("{line}");
            }
            for (name, ok) in &out.checks {
                println!("[{}] {name}", if *ok { "pass" } else { "FAIL" });
            }
            println!("reports in {} (config {})", cfg.out.display(), &cfg.hash()[..12]);
            ExitCode::from(if out.passed() { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
