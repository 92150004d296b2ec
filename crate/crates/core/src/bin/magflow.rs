use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magflow::cli::{self, Command, RunConfig};

#[derive(Parser)]
#[command(name = "magflow", version, about = "Closed magnetic orbits and Rabinowitz Floer numerics on the 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Multistart search for closed orbits in the configured classes.
    FindOrbits(Common),
    /// Morse, Conley-Zehnder and chi indices at the orbits found.
    Indices(Common),
    /// Bracket the Mane critical values.
    Mane(Common),
    /// Negative gradient flow of the Rabinowitz action from a perturbed lift.
    RfFlow(Common),
    /// Morse-Bott chain complex with cascades for the first class.
    MorseHomology(Common),
    /// Leaf-wise intersection point for the configured bump.
    Leafwise(Common),
    /// Run the identity suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (command, common) = match args.command {
        Cmd::FindOrbits(c) => (Command::FindOrbits, c),
        Cmd::Indices(c) => (Command::Indices, c),
        Cmd::Mane(c) => (Command::Mane, c),
        Cmd::RfFlow(c) => (Command::RfFlow, c),
        Cmd::MorseHomology(c) => (Command::MorseHomology, c),
        Cmd::Leafwise(c) => (Command::Leafwise, c),
        Cmd::Verify(c) => (Command::Verify, c),
    };
    if let Some(t) = cli::thread_cap() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = RunConfig::load(&common.config).and_then(|mut cfg| {
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if let Some(n) = common.n {
            cfg.n = n;
        }
        cli::run(command, &cfg, common.out.as_deref())
    });
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if out.files.is_empty() {
                println!("{}", out.report);
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
