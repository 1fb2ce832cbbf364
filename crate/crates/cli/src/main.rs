//! `cellmig`: command-line front end for the cell-migration analysis core.

mod commands;
mod config;
mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction};

use config::{flag_name, keys_for, Command, RunConfig, Settings};

/// A failed run, attributed to the stage that failed.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
        }
    }

    pub fn io(stage: &'static str, path: &Path, err: std::io::Error) -> Self {
        Self::new(stage, format!("{}: {err}", path.display()))
    }

    pub fn from_core(stage: &'static str, err: cellmig::Error) -> Self {
        Self::new(stage, err.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("cellmig")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Drift registration, patch sampling, protrusion morphometry and CTC metrics for cell-migration videos")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for command in Command::ALL {
        let mut sub = clap::Command::new(command.name()).about(command.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(value_parser!(PathBuf))
                .help("key=value file; flags override it, it overrides defaults"),
        );
        for key in keys_for(command) {
            let mut help = key.help.to_string();
            if let Some(d) = key.default {
                help.push_str(&format!(" [default: {d}]"));
            }
            let mut arg = Arg::new(key.name)
                .long(flag_name(key.name))
                .value_name(key.name.to_uppercase())
                .allow_negative_numbers(true)
                .help(help);
            if key.multiple {
                arg = arg.action(ArgAction::Append);
            }
            // The seed must be explicit on the command line.
            if key.name == "seed" {
                arg = arg.required(true);
            }
            sub = sub.arg(arg);
        }
        app = app.subcommand(sub);
    }
    app
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Command::from_name(name).expect("subcommands come from Command::ALL");

    let mut flags = BTreeMap::new();
    for key in keys_for(command) {
        if let Some(values) = sub.get_many::<String>(key.name) {
            flags.insert(key.name.to_string(), values.cloned().collect());
        }
    }
    let config_file = sub.get_one::<PathBuf>("config");
    let cfg = match Settings::resolve(command, &flags, config_file.map(PathBuf::as_path)).and_then(RunConfig::from_settings) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cfg) {
        Ok(summary) => {
            if let Some(text) = summary {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::FAILURE
        }
    }
}
