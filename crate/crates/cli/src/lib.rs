//! Command-line front end for `pqcascade`.
//!
//! Exit codes: 0 on success, 1 for data errors, 2 for usage errors.

pub mod args;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser};
use serde_json::json;

use crate::args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] pqcascade::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: pqcascade::Error,
    },
}

/// Attach `path` to a failed file operation.
pub fn at<T>(path: &Path, result: pqcascade::Result<T>) -> Result<T, CliError> {
    result.map_err(|source| CliError::File {
        path: path.to_owned(),
        source,
    })
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::File { .. } => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) | CliError::File { .. } => "data",
        }
    }
}

fn report(err: &CliError) -> i32 {
    let line = json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
    eprintln!("{line}");
    err.exit_code()
}

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--threads", "--seed", "--config"];

/// The subcommand name in `args`, skipping global options and their values.
fn find_subcommand(args: &[String]) -> Option<&str> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        if GLOBAL_VALUE_FLAGS.contains(&arg.as_str()) {
            iter.next();
        } else if !arg.starts_with('-') {
            return Some(arg);
        }
    }
    None
}

fn config_path(args: &[String]) -> Option<String> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(path.to_owned());
        }
    }
    None
}

/// Append flags loaded from `--config` that the command line does not set.
pub fn expand_config(mut args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {path:?}: {e}")))?;
    let pairs = config::parse_config(&text)?;
    let Some(sub) = find_subcommand(&args) else {
        return Ok(args);
    };
    let extra = config::config_args(&Cli::command(), sub, &pairs, &args)?;
    args.extend(extra);
    Ok(args)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let seed = cli.seed();
    let bench_cfg = match &cli.command {
        Command::Bench(a) => Some(commands::bench_config(a, seed, threads)?),
        _ => None,
    };
    let resolved = json!({
        "threads": threads,
        "seed": seed,
        "config": cli.config,
        "command": cli.command,
        "bench": bench_cfg,
    });
    eprintln!("resolved config: {resolved}");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenData(a) => commands::gen_data(a, seed),
        Command::TrainCodebook(a) => commands::train_codebook(a, seed),
        Command::BuildIndex(a) => commands::build_index(a),
        Command::Search(a) => commands::search(a),
        Command::CascadeSearch(a) => commands::cascade_search(a, seed),
        Command::Evaluate(a) => commands::evaluate_results(a),
        Command::Bench(a) => {
            commands::bench(a, bench_cfg.as_ref().expect("bench config resolved above"))
        }
    })
}

/// Parse `argv` (program name first), run the command, and return its exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let args: Result<Vec<String>, OsString> =
        argv.into_iter().map(|a| a.into().into_string()).collect();
    let args = match args {
        Ok(args) => args,
        Err(bad) => {
            return report(&CliError::Usage(format!(
                "argument is not valid UTF-8: {bad:?}"
            )))
        }
    };
    let args = match expand_config(args) {
        Ok(args) => args,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn subcommand_skips_global_values() {
        let args = strings(&["p", "--threads", "4", "--seed=3", "search", "--k", "5"]);
        assert_eq!(find_subcommand(&args), Some("search"));
        assert_eq!(find_subcommand(&strings(&["p", "--seed", "3"])), None);
    }

    #[test]
    fn config_flag_forms() {
        assert_eq!(
            config_path(&strings(&["p", "--config", "a.cfg"])).as_deref(),
            Some("a.cfg")
        );
        assert_eq!(
            config_path(&strings(&["p", "x", "--config=b.cfg"])).as_deref(),
            Some("b.cfg")
        );
        assert_eq!(config_path(&strings(&["p", "x"])), None);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Data(pqcascade::Error::ZeroNorm).exit_code(), 1);
    }
}
