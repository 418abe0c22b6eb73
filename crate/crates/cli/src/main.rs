//! `morse-pi1`: runs one scenario stage and writes its JSON reports.
//!
//! Exit codes: 0 verified, 1 error, 2 not Morse–Smale under
//! `--strict-smale`, 3 inconclusive (an undecided verdict is present).

mod commands;
mod plot;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use morse_pi1::pi1::Budget;

use commands::{CmdError, Ctx, Status};
use scenario::{envelope, Meta};

#[derive(Parser, Debug)]
#[command(name = "morse-pi1", version, about = "Morse fundamental groups, continuation maps and relative classes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (`scenario/v1`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Also write `plot.svg`.
    #[arg(long, global = true)]
    plot: bool,
    /// Exit 2 when the extracted complex carries Morse–Smale warnings.
    #[arg(long, global = true)]
    strict_smale: bool,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// State budget of word-problem searches.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Combinatorial mode: read the stage input from this JSON file instead
    /// of computing it.
    #[arg(long, global = true)]
    from_json: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Critical points, steps, disks and the presentation of one field.
    Analyze,
    /// Continuation map of an interpolation.
    Continue,
    /// Step map induced by a graft.
    Graft,
    /// λ-sweep of an interpolation square and the commuting-diagram check.
    Square,
    /// Relative classes of an interpolation-type function on M×R.
    Relative,
}

fn fail(out: &std::path::Path, meta: Option<&Meta>, e: CmdError) -> ExitCode {
    #[derive(serde::Serialize)]
    struct Diagnostic<'a> {
        error: &'a CmdError,
    }
    let meta = meta.cloned().unwrap_or(Meta { hash: String::new(), seed: 0 });
    let body = envelope(&Diagnostic { error: &e }, &meta);
    eprint!("{body}");
    if std::fs::create_dir_all(out).is_ok() {
        let _ = std::fs::write(out.join("error.json"), &body);
    }
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MORSE_PI1_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let Some(config) = &cli.config else {
        return fail(&cli.out, None, CmdError::usage("--config is required"));
    };
    let loaded = match scenario::load(config) {
        Ok(l) => l,
        Err(m) => return fail(&cli.out, None, CmdError::usage(m)),
    };
    let meta = Meta { hash: loaded.hash.clone(), seed: cli.seed.unwrap_or(loaded.scenario.seed) };
    let max_states = cli.budget.or(loaded.scenario.budget).unwrap_or(Budget::default().max_states);
    let ctx = Ctx {
        scenario: loaded.scenario,
        meta: meta.clone(),
        budget: Budget { max_states, ..Budget::default() },
        plot: cli.plot,
        strict_smale: cli.strict_smale,
        from_json: cli.from_json.clone(),
    };
    let result = match cli.command {
        Command::Analyze => commands::analyze(&ctx),
        Command::Continue => commands::continuation(&ctx),
        Command::Graft => commands::graft(&ctx),
        Command::Square => commands::square(&ctx),
        Command::Relative => commands::relative(&ctx),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => return fail(&cli.out, Some(&meta), e),
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        return fail(&cli.out, Some(&meta), CmdError::usage(format!("creating {}: {e}", cli.out.display())));
    }
    for (name, body) in &output.files {
        if let Err(e) = std::fs::write(cli.out.join(name), body) {
            return fail(&cli.out, Some(&meta), CmdError::usage(format!("writing {name}: {e}")));
        }
        println!("{}", cli.out.join(name).display());
    }
    match output.status {
        Status::Verified => ExitCode::SUCCESS,
        Status::NotSmale => ExitCode::from(2),
        Status::Inconclusive => ExitCode::from(3),
    }
}
