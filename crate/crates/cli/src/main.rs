use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgMatches};
use grw_cli::{execute, load_config, Command, Format, Origin, RunConfig, EXIT_ERROR};

fn cli() -> clap::Command {
    let mut app = clap::Command::new("grw")
        .about("Collapse probabilities, marble Monte Carlo, pointer measurement and conservation-law checks")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value file (or JSON object); flags override it"),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .global(true)
                .value_parser(clap::value_parser!(u64))
                .help(format!("RNG seed [default: {}]", grw_cli::DEFAULT_SEED)),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("write the report here (atomically) instead of stdout"),
        )
        .arg(
            Arg::new("format")
                .long("format")
                .global(true)
                .value_parser(["json", "csv"])
                .help("report format [default: json]"),
        );
    for c in Command::ALL {
        let mut sub = clap::Command::new(c.as_str()).about(c.help());
        for key in c.keys() {
            sub = sub.arg(
                Arg::new(*key)
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .allow_negative_numbers(true),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn config(m: &ArgMatches) -> Result<RunConfig, grw_cli::CliError> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let command: Command = name.parse().expect("subcommands mirror Command");
    let mut cfg = match sub.get_one::<PathBuf>("config") {
        Some(path) => load_config(path, Some(command))?,
        None => RunConfig::new(command),
    };
    for key in command.keys() {
        if let Some(v) = sub.get_one::<String>(key) {
            cfg.set(key, v, Origin::Flag)?;
        }
    }
    if let Some(&seed) = sub.get_one::<u64>("seed") {
        cfg.seed = seed;
    }
    if let Some(out) = sub.get_one::<PathBuf>("out") {
        cfg.output_path = Some(out.clone());
    }
    if let Some(f) = sub.get_one::<String>("format") {
        cfg.format = f.parse::<Format>().expect("checked by clap");
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = config(&matches).and_then(|cfg| {
        let (bytes, code) = execute(&cfg)?;
        if cfg.output_path.is_none() {
            std::io::stdout().write_all(&bytes)?;
        }
        Ok(code)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("grw: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
