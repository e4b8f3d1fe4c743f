use std::io::{BufRead, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value as Json;

use hyperq::estimator::EstimatorKind;
use hyperq::hql::{parse_query, Query};
use hyperq::session::Session;
use hyperq::Error;
use hyperq_cli::{load_session, Overrides};

#[derive(Parser)]
#[command(name = "hyper", version, about = "Probabilistic what-if and how-to queries over relational data")]
struct Cli {
    /// Session file (schema, data, causal graph, estimator settings).
    #[arg(short = 'c', long = "config", env = "HYPER_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Seed for the estimator's row sample.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Conditional-probability backing: `exact` or `freq`.
    #[arg(long, global = true)]
    estimator: Option<EstimatorKind>,
    /// Estimate from a seeded sample of this many view rows.
    #[arg(long, global = true)]
    sample: Option<usize>,
    /// Laplace pseudo-count for frequency estimates.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct QueryArg {
    /// File holding the query; `-` or absent reads standard input.
    #[arg(short = 'q', long = "query")]
    query: Option<PathBuf>,
    /// Query text given inline.
    #[arg(short = 'e', long = "text", conflicts_with = "query")]
    text: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a what-if query.
    Whatif {
        #[command(flatten)]
        q: QueryArg,
        /// Report the dependency-free baseline instead.
        #[arg(long)]
        indep: bool,
    },
    /// Answer a how-to query.
    Howto {
        #[command(flatten)]
        q: QueryArg,
    },
    /// Answer either query kind by exhaustive enumeration.
    Oracle {
        #[command(flatten)]
        q: QueryArg,
    },
    /// Print the block partition of the database.
    Blocks,
    /// Parse a query, and validate it when a session is given.
    Check {
        #[command(flatten)]
        q: QueryArg,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Read queries interactively; a query ends with `;` or an empty line.
    Repl,
}

fn read_query(q: &QueryArg) -> Result<String, Error> {
    if let Some(t) = &q.text {
        return Ok(t.clone());
    }
    match &q.query {
        Some(p) if p.as_os_str() != "-" => {
            std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", hyperq_cli::render(&e.to_json()));
    ExitCode::from(hyperq_cli::exit_code(e) as u8)
}

fn emit(r: Result<Json, Error>) -> ExitCode {
    match r {
        Ok(v) => {
            println!("{}", hyperq_cli::render(&v));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn repl(s: &Session) -> ExitCode {
    let stdin = std::io::stdin();
    let mut buf = String::new();
    let prompt = |cont: bool| {
        eprint!("{}", if cont { "...> " } else { "hyper> " });
        let _ = std::io::stderr().flush();
    };
    prompt(false);
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let trimmed = line.trim();
        if buf.is_empty() && trimmed.starts_with(':') {
            match trimmed {
                ":quit" | ":q" => return ExitCode::SUCCESS,
                ":blocks" => println!("{}", hyperq_cli::render(&hyperq_cli::blocks(s))),
                ":dag" => println!("{}", hyperq_cli::render(&hyperq_cli::dag(s))),
                ":schema" => println!("{}", hyperq_cli::render(&hyperq_cli::schema(s))),
                other => eprintln!("unknown command {other}; try :blocks, :dag, :schema or :quit"),
            }
            prompt(false);
            continue;
        }
        let done = trimmed.is_empty() || trimmed.ends_with(';');
        buf.push_str(trimmed.trim_end_matches(';'));
        buf.push('\n');
        if !done {
            prompt(true);
            continue;
        }
        let text = std::mem::take(&mut buf);
        if !text.trim().is_empty() {
            let out = match parse_query(&text) {
                Ok(Query::WhatIf(_)) => hyperq_cli::whatif(s, &text),
                Ok(Query::HowTo(_)) => hyperq_cli::howto(s, &text),
                Err(e) => Err(e),
            };
            match out {
                Ok(v) => println!("{}", hyperq_cli::render(&v)),
                Err(e) => println!("{}", hyperq_cli::render(&e.to_json())),
            }
        }
        prompt(false);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { seed: cli.seed, estimator: cli.estimator, sample: cli.sample, alpha: cli.alpha };
    let session = || -> Result<Session, Error> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("no session file; pass --config or set HYPER_CONFIG".into()))?;
        load_session(path, &overrides)
    };
    let with_query = |q: &QueryArg, f: fn(&Session, &str) -> Result<Json, Error>| -> ExitCode {
        let s = match session() {
            Ok(s) => s,
            Err(e) => return fail(&e),
        };
        emit(read_query(q).and_then(|t| f(&s, &t)))
    };
    match &cli.cmd {
        Cmd::Whatif { q, indep } => with_query(q, if *indep { hyperq_cli::indep } else { hyperq_cli::whatif }),
        Cmd::Howto { q } => with_query(q, hyperq_cli::howto),
        Cmd::Oracle { q } => with_query(q, hyperq_cli::oracle),
        Cmd::Blocks => emit(session().map(|s| hyperq_cli::blocks(&s))),
        Cmd::Check { q } => {
            let s = match cli.config.is_some().then(session).transpose() {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            emit(read_query(q).and_then(|t| hyperq_cli::check(s.as_ref(), &t)))
        }
        Cmd::Serve { port } => {
            let s = match session() {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(hyperq_cli::api::serve(s, *port)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&Error::Io(e.to_string())),
            }
        }
        Cmd::Repl => match session() {
            Ok(s) => repl(&s),
            Err(e) => fail(&e),
        },
    }
}
