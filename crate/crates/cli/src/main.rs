mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::commands::Output;
use crate::config::{Config, Kind, KEYS, PRESETS};
use crate::error::CliError;

const SUBCOMMANDS: &[(&str, &str)] = &[
    (
        "rerank",
        "Rerank a run with mixed geometric and reciprocal-neighbor similarity",
    ),
    (
        "smooth",
        "Write soft training labels (JSON Lines) for every query of a run",
    ),
    ("eval", "Evaluate a run against qrels"),
    ("sweep", "Evaluate reranking over a range of context sizes (CSV)"),
    ("bench", "Time reranking of random contexts (CSV)"),
    ("convert", "Convert embeddings between the binary and TSV formats"),
    ("selftest", "Check the optimized code paths against naive references"),
    ("synth", "Generate a seeded planted-cluster corpus"),
];

fn key_args() -> Vec<Arg> {
    KEYS.iter()
        .map(|k| {
            let long = k.name.replace('_', "-");
            let help = if k.default.is_empty() {
                k.help.to_string()
            } else {
                format!("{} [default: {}]", k.help, k.default)
            };
            let arg = Arg::new(k.name).long(long).help(help).action(ArgAction::Set);
            match k.kind {
                Kind::Bool => arg
                    .value_name("BOOL")
                    .num_args(0..=1)
                    .require_equals(true)
                    .default_missing_value("true"),
                Kind::Path => arg.value_name("PATH"),
                _ => arg.value_name("VALUE"),
            }
        })
        .collect()
}

fn cli() -> Command {
    let preset_help = {
        let names: Vec<String> = PRESETS.iter().map(|p| format!("{} ({})", p.name, p.help)).collect();
        format!("apply a published hyperparameter preset: {}", names.join("; "))
    };
    let common = [
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat `key = value` config file; `#` starts a comment")
            .value_parser(clap::value_parser!(PathBuf)),
        Arg::new("preset").long("preset").value_name("NAME").help(preset_help),
        Arg::new("no_header")
            .long("no-header")
            .action(ArgAction::SetTrue)
            .help("omit the `# recipro <version> config=<hash>` line from outputs"),
        Arg::new("print_config")
            .long("print-config")
            .action(ArgAction::SetTrue)
            .help("print the effective configuration and exit"),
    ];
    let mut app = Command::new("recipro")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Reciprocal nearest-neighbor reranking and evidence-based label smoothing")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name).about(*about).args(common.clone()).args(key_args());
        if *name == "smooth" {
            sub = sub.arg(
                Arg::new("uniform")
                    .long("uniform")
                    .action(ArgAction::SetTrue)
                    .help("uniform label smoothing instead of evidence-based (same as --mode uniform)"),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

/// defaults < preset < config file < flags
fn resolve(m: &ArgMatches) -> Result<Config, CliError> {
    let mut cfg = Config::default();
    let (file_preset, file_pairs) = match m.get_one::<PathBuf>("config") {
        Some(p) => Config::read_file(p)?,
        None => (None, Vec::new()),
    };
    if let Some(p) = m.get_one::<String>("preset").cloned().or(file_preset) {
        cfg.apply_preset(&p)?;
    }
    for (k, v) in &file_pairs {
        cfg.set(k, v)?;
    }
    for k in KEYS {
        if m.value_source(k.name) == Some(ValueSource::CommandLine) {
            if let Some(v) = m.get_one::<String>(k.name) {
                cfg.set(k.name, v)?;
            }
        }
    }
    if m.try_get_one::<bool>("uniform").ok().flatten() == Some(&true) {
        cfg.set("mode", "uniform")?;
    }
    Ok(cfg)
}

fn run(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let cfg = resolve(m)?;
    if m.get_flag("print_config") {
        print!("# {}\n{}", cfg.header(), cfg.canonical());
        return Ok(());
    }
    let out = Output {
        header: !m.get_flag("no_header"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.usize("threads")?)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match name {
        "rerank" => commands::rerank(&cfg, out),
        "smooth" => commands::smooth(&cfg, out),
        "eval" => commands::eval(&cfg, out),
        "sweep" => commands::sweep(&cfg, out),
        "bench" => commands::bench(&cfg, out),
        "convert" => commands::convert(&cfg),
        "selftest" => commands::selftest(&cfg, out),
        "synth" => commands::synth(&cfg, out),
        other => Err(CliError::Internal(format!("unhandled subcommand `{other}`"))),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("recipro {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
